//! Reputation, desired lists and quotas from transaction logs.
//!
//! Two reputation indicators are supported:
//!
//! * GT (total spending): r(f_i) is the consumer's total spend; D_i is ordered
//!   by spend per product.
//! * FMC (purchase frequency): r(f_i) = K_i / U with K_i the consumer's order
//!   count and U the number of distinct consumers in the log; D_i is ordered
//!   by order count per product.
//!
//! An order is a distinct `(consumer, timestamp)` pair; a record without a
//! timestamp is an order of its own. Ties in D_i fall back to product code.
//! Merchant quotas grow with sold volume.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    build_instance, BuildOptions, InfluencerSpec, Instance, MerchantSpec, ModelError, ProductSpec,
    TieBreak,
};

#[derive(Debug, Error)]
pub enum DeriveError {
    #[error("transaction log is empty")]
    EmptyLog,
    #[error("capacity must be positive")]
    ZeroCapacity,
    #[error("missing profile field `{0}`")]
    MissingProfileField(&'static str),
    #[error("product `{product}` is sold by both `{first}` and `{second}`")]
    ProductMultiplyOwned {
        product: String,
        first: String,
        second: String,
    },
    #[error("no quota given for product `{0}`")]
    MissingProductQuota(String),
    #[error("{path}:{line}: negative quota `{value}`")]
    NegativeQuota {
        path: String,
        line: u64,
        value: String,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransactionRecord {
    pub consumer_key: String,
    pub product_code: String,
    pub merchant_code: String,
    /// At least 1.
    pub quantity: u32,
    /// Non-negative.
    pub unit_price: Decimal,
    pub timestamp: Option<String>,
}

impl TransactionRecord {
    pub fn amount(&self) -> Decimal {
        Decimal::from(self.quantity) * self.unit_price
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReputationMode {
    /// Total spending.
    #[default]
    Gt,
    /// Purchase frequency, K / U.
    Fmc,
}

impl FromStr for ReputationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gt" => Ok(ReputationMode::Gt),
            "fmc" => Ok(ReputationMode::Fmc),
            other => Err(format!("unknown reputation mode `{other}`")),
        }
    }
}

impl fmt::Display for ReputationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReputationMode::Gt => "gt",
            ReputationMode::Fmc => "fmc",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DesireScore {
    pub product: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InfluencerScore {
    pub key: String,
    pub reputation: f64,
    /// Best first.
    pub desired: Vec<DesireScore>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReputationTable {
    pub mode: ReputationMode,
    /// Sorted by consumer key.
    pub entries: Vec<InfluencerScore>,
}

impl ReputationTable {
    pub fn get(&self, key: &str) -> Option<&InfluencerScore> {
        self.entries
            .binary_search_by(|e| e.key.as_str().cmp(key))
            .ok()
            .map(|pos| &self.entries[pos])
    }

    /// Consumer keys, highest reputation first (ties by key).
    pub fn ranking(&self) -> Vec<&str> {
        let mut order: Vec<&InfluencerScore> = self.entries.iter().collect();
        order.sort_by(|a, b| b.reputation.total_cmp(&a.reputation).then(a.key.cmp(&b.key)));
        order.into_iter().map(|e| e.key.as_str()).collect()
    }
}

fn decimal_to_f64(d: Decimal) -> f64 {
    // Going through the decimal string gives the correctly rounded value.
    d.normalize()
        .to_string()
        .parse()
        .expect("decimal renders as a float literal")
}

fn ordered_desires<T: Copy + Ord>(scores: &BTreeMap<&str, T>, to_f64: impl Fn(T) -> f64) -> Vec<DesireScore> {
    let mut items: Vec<(&str, T)> = scores.iter().map(|(p, s)| (*p, *s)).collect();
    items.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    items
        .into_iter()
        .map(|(p, s)| DesireScore {
            product: p.to_string(),
            score: to_f64(s),
        })
        .collect()
}

pub fn derive_gt(transactions: &[TransactionRecord]) -> Result<ReputationTable, DeriveError> {
    if transactions.is_empty() {
        return Err(DeriveError::EmptyLog);
    }
    let mut spend: BTreeMap<&str, BTreeMap<&str, Decimal>> = BTreeMap::new();
    for t in transactions {
        *spend
            .entry(&t.consumer_key)
            .or_default()
            .entry(&t.product_code)
            .or_default() += t.amount();
    }
    let entries = spend
        .into_iter()
        .map(|(key, per_product)| {
            let total: Decimal = per_product.values().copied().sum();
            InfluencerScore {
                key: key.to_string(),
                reputation: decimal_to_f64(total),
                desired: ordered_desires(&per_product, decimal_to_f64),
            }
        })
        .collect();
    Ok(ReputationTable {
        mode: ReputationMode::Gt,
        entries,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum OrderKey<'a> {
    Stamped(&'a str),
    Record(usize),
}

pub fn derive_fmc(transactions: &[TransactionRecord]) -> Result<ReputationTable, DeriveError> {
    if transactions.is_empty() {
        return Err(DeriveError::EmptyLog);
    }
    let mut orders: BTreeMap<&str, BTreeSet<OrderKey>> = BTreeMap::new();
    let mut product_orders: BTreeMap<&str, BTreeMap<&str, BTreeSet<OrderKey>>> = BTreeMap::new();
    for (idx, t) in transactions.iter().enumerate() {
        let order = match t.timestamp.as_deref() {
            Some(ts) => OrderKey::Stamped(ts),
            None => OrderKey::Record(idx),
        };
        orders.entry(&t.consumer_key).or_default().insert(order);
        product_orders
            .entry(&t.consumer_key)
            .or_default()
            .entry(&t.product_code)
            .or_default()
            .insert(order);
    }
    let consumers = orders.len() as f64;
    let entries = orders
        .into_iter()
        .map(|(key, set)| {
            let counts: BTreeMap<&str, usize> = product_orders[key]
                .iter()
                .map(|(p, s)| (*p, s.len()))
                .collect();
            InfluencerScore {
                key: key.to_string(),
                reputation: set.len() as f64 / consumers,
                desired: ordered_desires(&counts, |c| c as f64),
            }
        })
        .collect();
    Ok(ReputationTable {
        mode: ReputationMode::Fmc,
        entries,
    })
}

pub fn derive_reputation(
    transactions: &[TransactionRecord],
    mode: ReputationMode,
) -> Result<ReputationTable, DeriveError> {
    match mode {
        ReputationMode::Gt => derive_gt(transactions),
        ReputationMode::Fmc => derive_fmc(transactions),
    }
}

/// q_k = max(1, round(capacity · volume_k / Σ volume)), volume = units sold.
/// Rounding is half-up and computed in integers.
pub fn derive_merchant_quotas(
    transactions: &[TransactionRecord],
    capacity: u32,
) -> Result<BTreeMap<String, u32>, DeriveError> {
    if transactions.is_empty() {
        return Err(DeriveError::EmptyLog);
    }
    if capacity == 0 {
        return Err(DeriveError::ZeroCapacity);
    }
    let mut volume: BTreeMap<&str, u64> = BTreeMap::new();
    for t in transactions {
        *volume.entry(&t.merchant_code).or_default() += u64::from(t.quantity);
    }
    let total: u128 = volume.values().map(|&v| u128::from(v)).sum();
    Ok(volume
        .into_iter()
        .map(|(m, v)| {
            let share = (2 * u128::from(capacity) * u128::from(v) + total) / (2 * total);
            (m.to_string(), share.max(1) as u32)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProductQuota {
    pub quota: u32,
    pub merchant: String,
}

fn is_header(record: &csv::StringRecord) -> bool {
    record.get(1).is_some_and(|f| f.trim().eq_ignore_ascii_case("quota"))
}

/// Reads a `codigo,quota,comerciante` file; the header row is optional.
pub fn product_quotas_from_file(path: &Path) -> Result<BTreeMap<String, ProductQuota>, DeriveError> {
    let shown = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| DeriveError::Parse {
            path: shown.clone(),
            line: 0,
            message: e.to_string(),
        })?;
    let mut quotas = BTreeMap::new();
    for (n, row) in reader.records().enumerate() {
        let line = n as u64 + 1;
        let parse_err = |message: String| DeriveError::Parse {
            path: shown.clone(),
            line,
            message,
        };
        let row = row.map_err(|e| parse_err(e.to_string()))?;
        if n == 0 && is_header(&row) {
            continue;
        }
        if row.iter().all(str::is_empty) {
            continue;
        }
        if row.len() != 3 {
            return Err(parse_err(format!("expected 3 fields, found {}", row.len())));
        }
        let (code, raw_quota, merchant) = (&row[0], &row[1], &row[2]);
        if code.is_empty() || merchant.is_empty() {
            return Err(parse_err("empty product or merchant code".into()));
        }
        if raw_quota.starts_with('-') && raw_quota[1..].parse::<u64>().is_ok() {
            return Err(DeriveError::NegativeQuota {
                path: shown.clone(),
                line,
                value: raw_quota.to_string(),
            });
        }
        let quota: u32 = raw_quota
            .parse()
            .map_err(|_| parse_err(format!("invalid quota `{raw_quota}`")))?;
        let entry = ProductQuota {
            quota,
            merchant: merchant.to_string(),
        };
        if quotas.insert(code.to_string(), entry).is_some() {
            return Err(parse_err(format!("duplicate product `{code}`")));
        }
    }
    Ok(quotas)
}

/// Canonical consumer key from the four profile fields: trimmed, lowercased,
/// joined with `|` as branch, city, type, gender.
pub fn compose_profile_key(
    branch: Option<&str>,
    city: Option<&str>,
    kind: Option<&str>,
    gender: Option<&str>,
) -> Result<String, DeriveError> {
    let fields = [
        ("branch", branch),
        ("city", city),
        ("type", kind),
        ("gender", gender),
    ];
    let mut parts = Vec::with_capacity(4);
    for (name, value) in fields {
        match value.map(str::trim) {
            Some(v) if !v.is_empty() => parts.push(v.to_lowercase()),
            _ => return Err(DeriveError::MissingProfileField(name)),
        }
    }
    Ok(parts.join("|"))
}

#[derive(Clone, Debug, Default)]
pub struct DeriveConfig {
    pub mode: ReputationMode,
    /// Total influencer slots distributed over merchants.
    pub capacity: u32,
    /// Keep only the first N desired products per influencer.
    pub top_n: Option<usize>,
    /// Manual product quotas. Without them every product gets its merchant's
    /// quota, which satisfies the operational limit trivially.
    pub product_quotas: Option<BTreeMap<String, ProductQuota>>,
    pub tie_break: TieBreak,
    pub build: BuildOptions,
}

/// Full market derived from a log: consumers become influencers.
pub fn derive_instance(
    transactions: &[TransactionRecord],
    config: &DeriveConfig,
) -> Result<Instance, DeriveError> {
    let table = derive_reputation(transactions, config.mode)?;
    let merchant_quotas = derive_merchant_quotas(transactions, config.capacity)?;

    let mut owners: BTreeMap<&str, &str> = BTreeMap::new();
    for t in transactions {
        let owner = owners.entry(&t.product_code).or_insert(&t.merchant_code);
        if *owner != t.merchant_code {
            return Err(DeriveError::ProductMultiplyOwned {
                product: t.product_code.clone(),
                first: owner.to_string(),
                second: t.merchant_code.clone(),
            });
        }
    }

    let mut products = Vec::with_capacity(owners.len());
    for (&code, &merchant) in &owners {
        let quota = match &config.product_quotas {
            None => merchant_quotas[merchant],
            Some(manual) => {
                let q = manual
                    .get(code)
                    .ok_or_else(|| DeriveError::MissingProductQuota(code.to_string()))?;
                if q.merchant != merchant {
                    return Err(DeriveError::ProductMultiplyOwned {
                        product: code.to_string(),
                        first: merchant.to_string(),
                        second: q.merchant.clone(),
                    });
                }
                q.quota
            }
        };
        products.push(ProductSpec {
            id: code.to_string(),
            quota,
            merchant: merchant.to_string(),
        });
    }

    let merchants = merchant_quotas
        .into_iter()
        .map(|(id, quota)| MerchantSpec { id, quota })
        .collect();

    let influencers = table
        .entries
        .into_iter()
        .map(|e| {
            let limit = config.top_n.unwrap_or(usize::MAX);
            InfluencerSpec {
                id: e.key,
                reputation: e.reputation,
                desired: e.desired.into_iter().take(limit).map(|d| d.product).collect(),
            }
        })
        .collect();

    Ok(build_instance(
        influencers,
        products,
        merchants,
        config.tie_break,
        &config.build,
    )?)
}
