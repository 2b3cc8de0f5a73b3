#![allow(dead_code)]

use std::collections::HashMap;

use influmatch::model::{
    build_instance, BuildOptions, InfluencerSpec, Instance, Matching, MerchantSpec, ProductSpec,
    TieBreak,
};
use proptest::prelude::*;

/// Raw description of a small market; quotas always satisfy the operational limit.
#[derive(Clone, Debug)]
pub struct SmallMarket {
    pub reputations: Vec<u8>,
    pub prefs: Vec<Vec<usize>>,
    pub owner: Vec<usize>,
    pub product_quota: Vec<u32>,
    pub merchant_quota: Vec<u32>,
}

impl SmallMarket {
    pub fn build(&self) -> Instance {
        let influencers = self
            .reputations
            .iter()
            .zip(&self.prefs)
            .enumerate()
            .map(|(i, (&r, prefs))| InfluencerSpec {
                id: format!("f{i}"),
                reputation: f64::from(r),
                desired: prefs.iter().map(|j| format!("p{j}")).collect(),
            })
            .collect();
        let products = self
            .owner
            .iter()
            .zip(&self.product_quota)
            .enumerate()
            .map(|(j, (&k, &quota))| ProductSpec {
                id: format!("p{j}"),
                quota,
                merchant: format!("m{k}"),
            })
            .collect();
        let merchants = self
            .merchant_quota
            .iter()
            .enumerate()
            .map(|(k, &quota)| MerchantSpec {
                id: format!("m{k}"),
                quota,
            })
            .collect();
        build_instance(influencers, products, merchants, TieBreak::Lexical, &BuildOptions::default())
            .expect("strategy respects the operational limit")
    }
}

/// Up to `max_f` influencers, `max_p` products, 2 merchants, quotas <= 2,
/// reputations drawn from a tiny range so ties are common.
pub fn small_market(max_f: usize, max_p: usize) -> impl Strategy<Value = SmallMarket> {
    (1..=max_p, 0..=max_f)
        .prop_flat_map(|(n_p, n_f)| {
            let n_m = n_p.min(2);
            (
                prop::collection::vec(0..4u8, n_f),
                prop::collection::vec(
                    Just((0..n_p).collect::<Vec<_>>())
                        .prop_shuffle()
                        .prop_flat_map(move |perm| (0..=n_p).prop_map(move |len| perm[..len].to_vec())),
                    n_f,
                ),
                prop::collection::vec(0..n_m, n_p),
                prop::collection::vec(0..=2u32, n_p),
                prop::collection::vec(any::<prop::sample::Index>(), n_m),
                Just(n_m),
            )
        })
        .prop_map(|(reputations, prefs, mut owner, product_quota, picks, n_m)| {
            // every merchant owns at least one product
            for (k, slot) in owner.iter_mut().take(n_m).enumerate() {
                *slot = k;
            }
            let merchant_quota = (0..n_m)
                .map(|k| {
                    let owned: Vec<u32> = owner
                        .iter()
                        .zip(&product_quota)
                        .filter(|(&o, _)| o == k)
                        .map(|(_, &q)| q)
                        .collect();
                    let lo = *owned.iter().max().unwrap();
                    let hi: u32 = owned.iter().sum::<u32>().min(2);
                    lo + picks[k].index((hi - lo + 1) as usize) as u32
                })
                .collect();
            SmallMarket {
                reputations,
                prefs,
                owner,
                product_quota,
                merchant_quota,
            }
        })
}

/// Quota and single-assignment check from the id pairs alone.
pub fn recount_feasible(instance: &Instance, matching: &Matching) -> Result<(), String> {
    let pairs = matching.pairs(instance);
    let mut per_influencer: HashMap<&str, usize> = HashMap::new();
    let mut per_product: HashMap<&str, usize> = HashMap::new();
    let mut per_merchant: HashMap<&str, usize> = HashMap::new();
    let products: HashMap<&str, &influmatch::model::Product> =
        instance.products().iter().map(|p| (p.id.as_str(), p)).collect();
    for (f, p) in &pairs {
        *per_influencer.entry(f.as_str()).or_default() += 1;
        *per_product.entry(p.as_str()).or_default() += 1;
        *per_merchant.entry(products[p.as_str()].merchant.as_str()).or_default() += 1;
        let inf = instance.influencers().iter().find(|x| &x.id == f).unwrap();
        if !inf.desired.contains(p) {
            return Err(format!("{f} holds undesired {p}"));
        }
    }
    if let Some((f, n)) = per_influencer.iter().find(|(_, &n)| n > 1) {
        return Err(format!("{f} assigned {n} times"));
    }
    for p in instance.products() {
        let n = per_product.get(p.id.as_str()).copied().unwrap_or(0);
        if n > p.quota as usize {
            return Err(format!("{} holds {n} > {}", p.id, p.quota));
        }
    }
    for m in instance.merchants() {
        let n = per_merchant.get(m.id.as_str()).copied().unwrap_or(0);
        if n > m.quota as usize {
            return Err(format!("{} holds {n} > {}", m.id, m.quota));
        }
    }
    Ok(())
}

/// `a` is weakly preferred to `b` by every influencer.
pub fn weakly_dominates(instance: &Instance, a: &Matching, b: &Matching) -> bool {
    (0..instance.influencer_count()).all(|i| match (a.product_of(i), b.product_of(i)) {
        (_, None) => true,
        (None, Some(_)) => false,
        (Some(x), Some(y)) => instance.desire_rank(i, x) <= instance.desire_rank(i, y),
    })
}
