//! Market entities, structural validation and preference materialisation.
//!
//! An [`Instance`] is built once from raw specs and is immutable afterwards.
//! Besides the entities themselves it caches index-level views used by the
//! engine, the verifier and the report: product ownership, desired lists as
//! product indices, and a single global standing of influencers (reputation
//! descending, ties resolved by the instance's [`TieBreak`]). Every merchant
//! list ν_k and product list ν_k^j is a restriction of that standing.

mod matching;

pub use matching::Matching;

use std::borrow::Borrow;
use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("empty {0} identifier")]
    EmptyId(&'static str),
    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },
    #[error("{owner_kind} `{owner}` references unknown {kind} `{id}`")]
    DanglingReference {
        owner_kind: &'static str,
        owner: String,
        kind: &'static str,
        id: String,
    },
    #[error("product `{product}` is owned by both `{first}` and `{second}`")]
    ProductMultiplyOwned {
        product: String,
        first: String,
        second: String,
    },
    #[error(
        "merchant `{merchant}` violates the operational limit: quota {quota} is outside [{max_product_quota}, {product_quota_sum}]"
    )]
    OperationalLimitViolated {
        merchant: String,
        quota: u32,
        max_product_quota: u32,
        product_quota_sum: u64,
    },
    #[error("influencer `{influencer}` lists product `{product}` more than once")]
    DuplicateDesire { influencer: String, product: String },
    #[error("influencer `{influencer}` has invalid reputation {value}")]
    InvalidReputation { influencer: String, value: f64 },
    #[error("unknown influencer `{0}`")]
    UnknownInfluencer(String),
    #[error("unknown product `{0}`")]
    UnknownProduct(String),
    #[error("unknown merchant `{0}`")]
    UnknownMerchant(String),
    #[error("influencer `{0}` is assigned more than once")]
    AlreadyAssigned(String),
    #[error("influencer `{influencer}` does not desire product `{product}`")]
    NotDesired { influencer: String, product: String },
    #[error("assignment has {got} entries, instance has {expected} influencers")]
    AssignmentLength { expected: usize, got: usize },
}

macro_rules! id_type {
    ($name:ident, $kind:literal) => {
        #[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(raw: impl Into<String>) -> Result<Self, ModelError> {
                let raw = raw.into();
                if raw.trim().is_empty() {
                    return Err(ModelError::EmptyId($kind));
                }
                Ok(Self(raw))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

id_type!(InfluencerId, "influencer");
id_type!(ProductId, "product");
id_type!(MerchantId, "merchant");

/// Deterministic order used to break reputation ties.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Byte-wise lexicographic order of influencer ids.
    #[default]
    Lexical,
    /// Order of appearance in the input.
    InputOrder,
}

/// Raw influencer row as parsed or derived.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfluencerSpec {
    pub id: String,
    pub reputation: f64,
    /// Most preferred first.
    pub desired: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductSpec {
    pub id: String,
    pub quota: u32,
    pub merchant: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MerchantSpec {
    pub id: String,
    pub quota: u32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BuildOptions {
    /// Clamp merchant quotas into `[max l_j, sum l_j]` instead of failing.
    pub clamp_quota: bool,
    /// Drop desired-list entries naming unknown products instead of failing.
    pub prune_unknown: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BuildWarning {
    QuotaClamped {
        merchant: MerchantId,
        from: u32,
        to: u32,
    },
    PrunedReference {
        influencer: InfluencerId,
        product: String,
    },
}

impl fmt::Display for BuildWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuildWarning::QuotaClamped { merchant, from, to } => {
                write!(f, "merchant `{merchant}` quota clamped from {from} to {to}")
            }
            BuildWarning::PrunedReference {
                influencer,
                product,
            } => write!(
                f,
                "influencer `{influencer}` desired unknown product `{product}`; entry dropped"
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Influencer {
    pub id: InfluencerId,
    pub reputation: f64,
    pub desired: Vec<ProductId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Product {
    pub id: ProductId,
    pub quota: u32,
    pub merchant: MerchantId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Merchant {
    pub id: MerchantId,
    pub quota: u32,
    /// Products owned, in product input order.
    pub products: Vec<ProductId>,
}

/// A validated market.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    influencers: Vec<Influencer>,
    products: Vec<Product>,
    merchants: Vec<Merchant>,
    tie_break: TieBreak,
    influencer_index: HashMap<InfluencerId, usize>,
    product_index: HashMap<ProductId, usize>,
    merchant_index: HashMap<MerchantId, usize>,
    owner: Vec<usize>,
    merchant_products: Vec<Vec<usize>>,
    desired: Vec<Vec<usize>>,
    desire_rank: Vec<HashMap<usize, usize>>,
    standing: Vec<usize>,
    merchant_prefs: Vec<Vec<usize>>,
    product_prefs: Vec<Vec<usize>>,
}

/// Builds and validates an instance, logging any lenient-mode repairs.
pub fn build_instance(
    influencers: Vec<InfluencerSpec>,
    products: Vec<ProductSpec>,
    merchants: Vec<MerchantSpec>,
    tie_break: TieBreak,
    options: &BuildOptions,
) -> Result<Instance, ModelError> {
    let (instance, warnings) =
        build_instance_with_warnings(influencers, products, merchants, tie_break, options)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(instance)
}

/// Like [`build_instance`] but hands back the lenient-mode repairs instead of
/// logging them.
pub fn build_instance_with_warnings(
    influencers: Vec<InfluencerSpec>,
    products: Vec<ProductSpec>,
    merchants: Vec<MerchantSpec>,
    tie_break: TieBreak,
    options: &BuildOptions,
) -> Result<(Instance, Vec<BuildWarning>), ModelError> {
    let mut warnings = Vec::new();

    let mut merchant_index = HashMap::with_capacity(merchants.len());
    let mut built_merchants = Vec::with_capacity(merchants.len());
    for (k, spec) in merchants.into_iter().enumerate() {
        let id = MerchantId::new(spec.id)?;
        if merchant_index.insert(id.clone(), k).is_some() {
            return Err(ModelError::DuplicateId {
                kind: "merchant",
                id: id.0,
            });
        }
        built_merchants.push(Merchant {
            id,
            quota: spec.quota,
            products: Vec::new(),
        });
    }

    let mut product_index = HashMap::with_capacity(products.len());
    let mut built_products = Vec::with_capacity(products.len());
    let mut owner = Vec::with_capacity(products.len());
    let mut merchant_products = vec![Vec::new(); built_merchants.len()];
    for (j, spec) in products.into_iter().enumerate() {
        let id = ProductId::new(spec.id)?;
        if product_index.insert(id.clone(), j).is_some() {
            return Err(ModelError::DuplicateId {
                kind: "product",
                id: id.0,
            });
        }
        let Some(&k) = merchant_index.get(spec.merchant.as_str()) else {
            return Err(ModelError::DanglingReference {
                owner_kind: "product",
                owner: id.0,
                kind: "merchant",
                id: spec.merchant,
            });
        };
        owner.push(k);
        merchant_products[k].push(j);
        built_merchants[k].products.push(id.clone());
        built_products.push(Product {
            id,
            quota: spec.quota,
            merchant: built_merchants[k].id.clone(),
        });
    }

    for (k, merchant) in built_merchants.iter_mut().enumerate() {
        let max = merchant_products[k]
            .iter()
            .map(|&j| built_products[j].quota)
            .max()
            .unwrap_or(0);
        let sum: u64 = merchant_products[k]
            .iter()
            .map(|&j| u64::from(built_products[j].quota))
            .sum();
        let q = merchant.quota;
        if q < max || u64::from(q) > sum {
            if !options.clamp_quota {
                return Err(ModelError::OperationalLimitViolated {
                    merchant: merchant.id.0.clone(),
                    quota: q,
                    max_product_quota: max,
                    product_quota_sum: sum,
                });
            }
            // max <= sum always, and sum fits once clamped below q.
            let clamped = if q < max { max } else { sum as u32 };
            warnings.push(BuildWarning::QuotaClamped {
                merchant: merchant.id.clone(),
                from: q,
                to: clamped,
            });
            merchant.quota = clamped;
        }
    }

    let mut influencer_index = HashMap::with_capacity(influencers.len());
    let mut built_influencers = Vec::with_capacity(influencers.len());
    let mut desired = Vec::with_capacity(influencers.len());
    let mut desire_rank = Vec::with_capacity(influencers.len());
    for (i, spec) in influencers.into_iter().enumerate() {
        let id = InfluencerId::new(spec.id)?;
        if influencer_index.insert(id.clone(), i).is_some() {
            return Err(ModelError::DuplicateId {
                kind: "influencer",
                id: id.0,
            });
        }
        if !spec.reputation.is_finite() || spec.reputation < 0.0 {
            return Err(ModelError::InvalidReputation {
                influencer: id.0,
                value: spec.reputation,
            });
        }
        // -0.0 would otherwise sort below 0.0 under total_cmp.
        let reputation = spec.reputation + 0.0;

        let mut list = Vec::with_capacity(spec.desired.len());
        let mut ids = Vec::with_capacity(spec.desired.len());
        let mut seen = HashSet::with_capacity(spec.desired.len());
        for raw in spec.desired {
            let Some(&j) = product_index.get(raw.as_str()) else {
                if options.prune_unknown {
                    warnings.push(BuildWarning::PrunedReference {
                        influencer: id.clone(),
                        product: raw,
                    });
                    continue;
                }
                return Err(ModelError::DanglingReference {
                    owner_kind: "influencer",
                    owner: id.0,
                    kind: "product",
                    id: raw,
                });
            };
            if !seen.insert(j) {
                return Err(ModelError::DuplicateDesire {
                    influencer: id.0,
                    product: raw,
                });
            }
            list.push(j);
            ids.push(built_products[j].id.clone());
        }
        desire_rank.push(list.iter().enumerate().map(|(pos, &j)| (j, pos)).collect());
        desired.push(list);
        built_influencers.push(Influencer {
            id,
            reputation,
            desired: ids,
        });
    }

    let order = standing_order(&built_influencers, tie_break);
    let mut standing = vec![0; built_influencers.len()];
    for (pos, &i) in order.iter().enumerate() {
        standing[i] = pos;
    }

    let mut merchant_prefs = vec![Vec::new(); built_merchants.len()];
    let mut product_prefs = vec![Vec::new(); built_products.len()];
    for &i in &order {
        let mut seen_merchants = HashSet::new();
        for &j in &desired[i] {
            product_prefs[j].push(i);
            if seen_merchants.insert(owner[j]) {
                merchant_prefs[owner[j]].push(i);
            }
        }
    }

    let instance = Instance {
        influencers: built_influencers,
        products: built_products,
        merchants: built_merchants,
        tie_break,
        influencer_index,
        product_index,
        merchant_index,
        owner,
        merchant_products,
        desired,
        desire_rank,
        standing,
        merchant_prefs,
        product_prefs,
    };
    Ok((instance, warnings))
}

fn tie_break_cmp(influencers: &[Influencer], tie_break: TieBreak, a: usize, b: usize) -> Ordering {
    match tie_break {
        TieBreak::Lexical => influencers[a].id.cmp(&influencers[b].id).then(a.cmp(&b)),
        TieBreak::InputOrder => a.cmp(&b),
    }
}

/// Influencer indices, best first: reputation descending, then tie-break.
fn standing_order(influencers: &[Influencer], tie_break: TieBreak) -> Vec<usize> {
    let mut order: Vec<usize> = (0..influencers.len()).collect();
    order.sort_by(|&a, &b| {
        influencers[b]
            .reputation
            .total_cmp(&influencers[a].reputation)
            .then_with(|| tie_break_cmp(influencers, tie_break, a, b))
    });
    order
}

impl Instance {
    pub fn empty() -> Instance {
        build_instance(
            Vec::new(),
            Vec::new(),
            Vec::new(),
            TieBreak::default(),
            &BuildOptions::default(),
        )
        .expect("empty instance is valid")
    }

    pub fn influencers(&self) -> &[Influencer] {
        &self.influencers
    }

    pub fn products(&self) -> &[Product] {
        &self.products
    }

    pub fn merchants(&self) -> &[Merchant] {
        &self.merchants
    }

    pub fn tie_break(&self) -> TieBreak {
        self.tie_break
    }

    pub fn influencer_count(&self) -> usize {
        self.influencers.len()
    }

    pub fn product_count(&self) -> usize {
        self.products.len()
    }

    pub fn merchant_count(&self) -> usize {
        self.merchants.len()
    }

    pub fn influencer_idx(&self, id: &str) -> Option<usize> {
        self.influencer_index.get(id).copied()
    }

    pub fn product_idx(&self, id: &str) -> Option<usize> {
        self.product_index.get(id).copied()
    }

    pub fn merchant_idx(&self, id: &str) -> Option<usize> {
        self.merchant_index.get(id).copied()
    }

    /// Index of the merchant owning product `j`.
    pub fn owner_of(&self, j: usize) -> usize {
        self.owner[j]
    }

    pub fn products_of(&self, k: usize) -> &[usize] {
        &self.merchant_products[k]
    }

    pub fn product_quota(&self, j: usize) -> usize {
        self.products[j].quota as usize
    }

    pub fn merchant_quota(&self, k: usize) -> usize {
        self.merchants[k].quota as usize
    }

    /// D_i as product indices, most preferred first.
    pub fn desired_of(&self, i: usize) -> &[usize] {
        &self.desired[i]
    }

    /// 0-based position of product `j` in D_i.
    pub fn desire_rank(&self, i: usize, j: usize) -> Option<usize> {
        self.desire_rank[i].get(&j).copied()
    }

    /// 0-based position of influencer `i` in the global reputation order.
    pub fn standing(&self, i: usize) -> usize {
        self.standing[i]
    }

    /// Whether merchants rank influencer `a` above influencer `b`.
    pub fn ranks_above(&self, a: usize, b: usize) -> bool {
        self.standing[a] < self.standing[b]
    }

    /// ν_k as influencer indices.
    pub fn merchant_pref_indices(&self, k: usize) -> &[usize] {
        &self.merchant_prefs[k]
    }

    /// ν_k^j as influencer indices.
    pub fn product_pref_indices(&self, j: usize) -> &[usize] {
        &self.product_prefs[j]
    }

    /// Influencer indices sorted by the tie-break order alone.
    pub fn tie_break_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.influencers.len()).collect();
        order.sort_by(|&a, &b| tie_break_cmp(&self.influencers, self.tie_break, a, b));
        order
    }

    pub fn merchant_preference(&self, merchant: &str) -> Result<Vec<InfluencerId>, ModelError> {
        let k = self
            .merchant_idx(merchant)
            .ok_or_else(|| ModelError::UnknownMerchant(merchant.to_string()))?;
        Ok(self.ids_of(&self.merchant_prefs[k]))
    }

    pub fn product_preference(&self, product: &str) -> Result<Vec<InfluencerId>, ModelError> {
        let j = self
            .product_idx(product)
            .ok_or_else(|| ModelError::UnknownProduct(product.to_string()))?;
        Ok(self.ids_of(&self.product_prefs[j]))
    }

    fn ids_of(&self, indices: &[usize]) -> Vec<InfluencerId> {
        indices
            .iter()
            .map(|&i| self.influencers[i].id.clone())
            .collect()
    }

    /// Raw specs that rebuild this instance.
    pub fn to_specs(&self) -> (Vec<InfluencerSpec>, Vec<ProductSpec>, Vec<MerchantSpec>) {
        let influencers = self
            .influencers
            .iter()
            .map(|f| InfluencerSpec {
                id: f.id.0.clone(),
                reputation: f.reputation,
                desired: f.desired.iter().map(|p| p.0.clone()).collect(),
            })
            .collect();
        let products = self
            .products
            .iter()
            .map(|p| ProductSpec {
                id: p.id.0.clone(),
                quota: p.quota,
                merchant: p.merchant.0.clone(),
            })
            .collect();
        let merchants = self
            .merchants
            .iter()
            .map(|m| MerchantSpec {
                id: m.id.0.clone(),
                quota: m.quota,
            })
            .collect();
        (influencers, products, merchants)
    }

    /// Same market with every reputation passed through `f`.
    pub fn map_reputations(&self, f: impl Fn(f64) -> f64) -> Result<Instance, ModelError> {
        let (mut influencers, products, merchants) = self.to_specs();
        for spec in &mut influencers {
            spec.reputation = f(spec.reputation);
        }
        build_instance(
            influencers,
            products,
            merchants,
            self.tie_break,
            &BuildOptions::default(),
        )
    }
}
