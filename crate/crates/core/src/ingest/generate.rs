use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::IngestError;
use crate::model::{
    build_instance, BuildOptions, InfluencerSpec, Instance, MerchantSpec, ProductSpec, TieBreak,
};

/// Shape of a synthetic market.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorParams {
    pub n_influencers: usize,
    pub n_products: usize,
    pub n_merchants: usize,
    /// Inclusive bounds on |D_i|.
    pub pref_len: (usize, usize),
    /// Inclusive bounds on l_j.
    pub product_quota: (u32, u32),
    /// Popularity skew: the product at popularity rank r is drawn with weight
    /// 1 / (r + 1)^s. Zero gives uniform desirability.
    pub zipf_exponent: f64,
    pub tie_break: TieBreak,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            n_influencers: 20,
            n_products: 10,
            n_merchants: 3,
            pref_len: (1, 5),
            product_quota: (1, 3),
            zipf_exponent: 1.0,
            tie_break: TieBreak::Lexical,
        }
    }
}

impl GeneratorParams {
    fn validate(&self) -> Result<(), IngestError> {
        let bad = |msg: String| Err(IngestError::InvalidGeneratorParams(msg));
        if self.n_influencers == 0 || self.n_products == 0 || self.n_merchants == 0 {
            return bad("sizes must be positive".into());
        }
        if self.n_merchants > self.n_products {
            return bad(format!(
                "{} merchants cannot partition {} products",
                self.n_merchants, self.n_products
            ));
        }
        let (lo, hi) = self.pref_len;
        if lo > hi || hi > self.n_products {
            return bad(format!("preference length range [{lo}, {hi}] outside [0, {}]", self.n_products));
        }
        let (qlo, qhi) = self.product_quota;
        if qlo > qhi {
            return bad(format!("product quota range [{qlo}, {qhi}] is empty"));
        }
        if !self.zipf_exponent.is_finite() || self.zipf_exponent < 0.0 {
            return bad(format!("zipf exponent {} must be finite and >= 0", self.zipf_exponent));
        }
        Ok(())
    }
}

fn digits(n: usize) -> usize {
    n.to_string().len()
}

fn below(rng: &mut ChaCha8Rng, n: usize) -> usize {
    // u64 sampling keeps streams identical on 32- and 64-bit targets.
    rng.gen_range(0..n as u64) as usize
}

/// Deterministic pseudo-random instance; the same seed and params always give
/// the same instance. Quotas satisfy the operational limit by construction.
pub fn generate_instance(seed: u64, params: &GeneratorParams) -> Result<Instance, IngestError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let merchant_ids: Vec<String> = (0..params.n_merchants)
        .map(|k| format!("M{:0w$}", k + 1, w = digits(params.n_merchants).max(2)))
        .collect();
    let product_ids: Vec<String> = (0..params.n_products)
        .map(|j| format!("P{:0w$}", j + 1, w = digits(params.n_products).max(3)))
        .collect();

    let owner: Vec<usize> = (0..params.n_products)
        .map(|j| {
            if j < params.n_merchants {
                j
            } else {
                below(&mut rng, params.n_merchants)
            }
        })
        .collect();
    let (qlo, qhi) = params.product_quota;
    let product_quota: Vec<u32> = (0..params.n_products)
        .map(|_| rng.gen_range(u64::from(qlo)..=u64::from(qhi)) as u32)
        .collect();

    let merchants = (0..params.n_merchants)
        .map(|k| {
            let owned = (0..params.n_products).filter(|&j| owner[j] == k);
            let max = owned.clone().map(|j| product_quota[j]).max().unwrap_or(0);
            let sum: u64 = owned.map(|j| u64::from(product_quota[j])).sum();
            let quota = rng.gen_range(u64::from(max)..=sum) as u32;
            MerchantSpec {
                id: merchant_ids[k].clone(),
                quota,
            }
        })
        .collect();

    let products = (0..params.n_products)
        .map(|j| ProductSpec {
            id: product_ids[j].clone(),
            quota: product_quota[j],
            merchant: merchant_ids[owner[j]].clone(),
        })
        .collect();

    // popularity[j] = weight of product j
    let mut by_popularity: Vec<usize> = (0..params.n_products).collect();
    for i in (1..by_popularity.len()).rev() {
        let k = below(&mut rng, i + 1);
        by_popularity.swap(i, k);
    }
    let mut popularity = vec![0.0; params.n_products];
    for (rank, &j) in by_popularity.iter().enumerate() {
        popularity[j] = 1.0 / ((rank + 1) as f64).powf(params.zipf_exponent);
    }

    let (lo, hi) = params.pref_len;
    let influencers = (0..params.n_influencers)
        .map(|i| {
            let reputation = rng.gen_range(1..=10_000u64) as f64 / 100.0;
            let len = rng.gen_range(lo as u64..=hi as u64) as usize;
            let mut pool: Vec<usize> = (0..params.n_products).collect();
            let mut desired = Vec::with_capacity(len);
            for _ in 0..len {
                let total: f64 = pool.iter().map(|&j| popularity[j]).sum();
                let mut x = rng.gen::<f64>() * total;
                let mut pick = pool.len() - 1;
                for (pos, &j) in pool.iter().enumerate() {
                    if x < popularity[j] {
                        pick = pos;
                        break;
                    }
                    x -= popularity[j];
                }
                desired.push(product_ids[pool.remove(pick)].clone());
            }
            InfluencerSpec {
                id: format!("F{:0w$}", i + 1, w = digits(params.n_influencers).max(3)),
                reputation,
                desired,
            }
        })
        .collect();

    Ok(build_instance(
        influencers,
        products,
        merchants,
        params.tie_break,
        &BuildOptions::default(),
    )?)
}
