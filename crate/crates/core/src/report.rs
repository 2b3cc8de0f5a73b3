//! Utilization, free-slot and preference-rank metrics for a matching.
//!
//! Four families are reported: merchant utilization |E(v_k)|/q_k, merchant
//! free slots q_k − |E(v_k)|, product (advertisement) utilization
//! |E(p_j)|/l_j, and each influencer's achieved rank in D_i next to its
//! reputation rank. Every family also comes as histogram rows
//! `(bin_low, bin_high, count)`; utilization uses ten equal-width bins on
//! [0, 1] (the last one closed), slots and ranks use unit-width integer bins.
//!
//! Output is either one JSON document or a directory of four CSV files
//! (`merchants.csv`, `products.csv`, `influencers.csv`, `histograms.csv`).
//! Undefined utilization (quota 0) is `null` in JSON and an empty cell in CSV.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Instance, Matching};
use crate::verify::{check_feasibility, VerifyError};

pub const UTILIZATION_BINS: usize = 10;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Infeasible(#[from] VerifyError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    #[default]
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown format `{other}`")),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MerchantMetrics {
    pub id: String,
    pub quota: u32,
    pub assigned: u32,
    /// `None` when the quota is zero.
    pub utilization: Option<f64>,
    pub free_slots: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductMetrics {
    pub id: String,
    pub merchant: String,
    pub quota: u32,
    pub assigned: u32,
    pub utilization: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfluencerMetrics {
    pub id: String,
    pub reputation: f64,
    /// 1-based position in the global reputation order.
    pub reputation_rank: u32,
    pub desired_len: u32,
    pub product: Option<String>,
    /// 1-based position of the assigned product in D_i.
    pub achieved_rank: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histograms {
    pub merchant_utilization: Vec<HistogramBin>,
    pub free_slots: Vec<HistogramBin>,
    pub product_utilization: Vec<HistogramBin>,
    pub achieved_rank: Vec<HistogramBin>,
}

impl Histograms {
    pub fn families(&self) -> [(&'static str, &[HistogramBin]); 4] {
        [
            ("merchant_utilization", &self.merchant_utilization),
            ("free_slots", &self.free_slots),
            ("product_utilization", &self.product_utilization),
            ("achieved_rank", &self.achieved_rank),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub influencers: u32,
    pub matched: u32,
    pub merchant_quota_total: u64,
    pub free_slots_total: u64,
    pub mean_achieved_rank: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub summary: Summary,
    pub merchants: Vec<MerchantMetrics>,
    pub products: Vec<ProductMetrics>,
    pub influencers: Vec<InfluencerMetrics>,
    pub histograms: Histograms,
}

fn ratio(assigned: usize, quota: usize) -> Option<f64> {
    (quota > 0).then(|| assigned as f64 / quota as f64)
}

fn utilization_histogram(pairs: impl Iterator<Item = (usize, usize)>) -> Vec<HistogramBin> {
    let mut counts = [0u32; UTILIZATION_BINS];
    for (assigned, quota) in pairs.filter(|&(_, q)| q > 0) {
        // integer binning avoids float edge effects at bin boundaries
        let bin = (UTILIZATION_BINS * assigned / quota).min(UTILIZATION_BINS - 1);
        counts[bin] += 1;
    }
    counts
        .iter()
        .enumerate()
        .map(|(b, &count)| HistogramBin {
            bin_low: b as f64 / UTILIZATION_BINS as f64,
            bin_high: (b + 1) as f64 / UTILIZATION_BINS as f64,
            count,
        })
        .collect()
}

fn integer_histogram(values: impl Iterator<Item = usize>, first: usize) -> Vec<HistogramBin> {
    let values: Vec<usize> = values.collect();
    let Some(&max) = values.iter().max() else {
        return Vec::new();
    };
    let mut counts = vec![0u32; max + 1 - first.min(max + 1)];
    for v in values {
        counts[v - first] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(b, count)| HistogramBin {
            bin_low: (b + first) as f64,
            bin_high: (b + first + 1) as f64,
            count,
        })
        .collect()
}

pub fn compute_metrics(instance: &Instance, matching: &Matching) -> Result<MetricsReport, ReportError> {
    check_feasibility(instance, matching)?;

    let merchants: Vec<MerchantMetrics> = instance
        .merchants()
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let assigned = matching.merchant_holders(k).len();
            MerchantMetrics {
                id: m.id.to_string(),
                quota: m.quota,
                assigned: assigned as u32,
                utilization: ratio(assigned, m.quota as usize),
                free_slots: m.quota - assigned as u32,
            }
        })
        .collect();

    let products: Vec<ProductMetrics> = instance
        .products()
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let assigned = matching.product_holders(j).len();
            ProductMetrics {
                id: p.id.to_string(),
                merchant: p.merchant.to_string(),
                quota: p.quota,
                assigned: assigned as u32,
                utilization: ratio(assigned, p.quota as usize),
            }
        })
        .collect();

    let influencers: Vec<InfluencerMetrics> = instance
        .influencers()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let held = matching.product_of(i);
            InfluencerMetrics {
                id: f.id.to_string(),
                reputation: f.reputation,
                reputation_rank: instance.standing(i) as u32 + 1,
                desired_len: f.desired.len() as u32,
                product: held.map(|j| instance.products()[j].id.to_string()),
                achieved_rank: held
                    .and_then(|j| instance.desire_rank(i, j))
                    .map(|r| r as u32 + 1),
            }
        })
        .collect();

    let ranks: Vec<u32> = influencers.iter().filter_map(|f| f.achieved_rank).collect();
    let summary = Summary {
        influencers: influencers.len() as u32,
        matched: ranks.len() as u32,
        merchant_quota_total: merchants.iter().map(|m| u64::from(m.quota)).sum(),
        free_slots_total: merchants.iter().map(|m| u64::from(m.free_slots)).sum(),
        mean_achieved_rank: (!ranks.is_empty())
            .then(|| ranks.iter().map(|&r| f64::from(r)).sum::<f64>() / ranks.len() as f64),
    };

    let histograms = Histograms {
        merchant_utilization: utilization_histogram(
            merchants.iter().map(|m| (m.assigned as usize, m.quota as usize)),
        ),
        free_slots: integer_histogram(merchants.iter().map(|m| m.free_slots as usize), 0),
        product_utilization: utilization_histogram(
            products.iter().map(|p| (p.assigned as usize, p.quota as usize)),
        ),
        achieved_rank: integer_histogram(ranks.iter().map(|&r| r as usize), 1),
    };

    Ok(MetricsReport {
        summary,
        merchants,
        products,
        influencers,
        histograms,
    })
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv write");
    for row in rows {
        w.write_record(&row).expect("in-memory csv write");
    }
    w.into_inner().expect("in-memory csv flush")
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// The four CSV tables as `(file name, bytes)`.
    pub fn to_csv_files(&self) -> Vec<(&'static str, Vec<u8>)> {
        let merchants = csv_table(
            &["id", "quota", "assigned", "utilization", "free_slots"],
            self.merchants.iter().map(|m| {
                vec![
                    m.id.clone(),
                    m.quota.to_string(),
                    m.assigned.to_string(),
                    opt(&m.utilization),
                    m.free_slots.to_string(),
                ]
            }),
        );
        let products = csv_table(
            &["id", "merchant", "quota", "assigned", "utilization"],
            self.products.iter().map(|p| {
                vec![
                    p.id.clone(),
                    p.merchant.clone(),
                    p.quota.to_string(),
                    p.assigned.to_string(),
                    opt(&p.utilization),
                ]
            }),
        );
        let influencers = csv_table(
            &[
                "id",
                "reputation",
                "reputation_rank",
                "desired_len",
                "product",
                "achieved_rank",
            ],
            self.influencers.iter().map(|f| {
                vec![
                    f.id.clone(),
                    f.reputation.to_string(),
                    f.reputation_rank.to_string(),
                    f.desired_len.to_string(),
                    opt(&f.product),
                    opt(&f.achieved_rank),
                ]
            }),
        );
        let histograms = csv_table(
            &["family", "bin_low", "bin_high", "count"],
            self.histograms.families().into_iter().flat_map(|(name, bins)| {
                bins.iter().map(move |b| {
                    vec![
                        name.to_string(),
                        b.bin_low.to_string(),
                        b.bin_high.to_string(),
                        b.count.to_string(),
                    ]
                })
            }),
        );
        vec![
            ("merchants.csv", merchants),
            ("products.csv", products),
            ("influencers.csv", influencers),
            ("histograms.csv", histograms),
        ]
    }
}

/// Writes `report` to `out_path`: a JSON file, or a directory of CSV tables.
pub fn emit_report(report: &MetricsReport, format: ReportFormat, out_path: &Path) -> Result<(), ReportError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| ReportError::Io { path, source }
    };
    match format {
        ReportFormat::Json => {
            if let Some(parent) = out_path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(io(parent))?;
            }
            std::fs::write(out_path, report.to_json()).map_err(io(out_path))
        }
        ReportFormat::Csv => {
            std::fs::create_dir_all(out_path).map_err(io(out_path))?;
            for (name, bytes) in report.to_csv_files() {
                let path = out_path.join(name);
                std::fs::write(&path, bytes).map_err(io(&path))?;
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_instance, BuildOptions, InfluencerSpec, MerchantSpec, ProductSpec, TieBreak};

    fn instance() -> Instance {
        let inf = |id: &str, r: f64, d: &[&str]| InfluencerSpec {
            id: id.into(),
            reputation: r,
            desired: d.iter().map(|s| s.to_string()).collect(),
        };
        build_instance(
            vec![
                inf("a", 4.0, &["p1", "p2"]),
                inf("b", 3.0, &["p1"]),
                inf("c", 2.0, &["p3", "p2"]),
                inf("d", 1.0, &["p1", "p2"]),
                inf("e", 0.5, &["p4"]),
            ],
            vec![
                ProductSpec {
                    id: "p1".into(),
                    quota: 2,
                    merchant: "m1".into(),
                },
                ProductSpec {
                    id: "p2".into(),
                    quota: 2,
                    merchant: "m1".into(),
                },
                ProductSpec {
                    id: "p3".into(),
                    quota: 1,
                    merchant: "m2".into(),
                },
                ProductSpec {
                    id: "p4".into(),
                    quota: 0,
                    merchant: "m2".into(),
                },
            ],
            vec![
                MerchantSpec {
                    id: "m1".into(),
                    quota: 4,
                },
                MerchantSpec {
                    id: "m2".into(),
                    quota: 1,
                },
            ],
            TieBreak::Lexical,
            &BuildOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn full_merchant_has_no_free_slots() {
        let inst = instance();
        let m = Matching::from_pairs(&inst, [("a", "p1"), ("b", "p1"), ("c", "p2"), ("d", "p2")]).unwrap();
        let r = compute_metrics(&inst, &m).unwrap();
        assert_eq!(r.merchants[0].utilization, Some(1.0));
        assert_eq!(r.merchants[0].free_slots, 0);
        assert_eq!(r.merchants[1].free_slots, 1);
    }

    #[test]
    fn unmatched_influencer_has_no_rank() {
        let inst = instance();
        let m = Matching::from_pairs(&inst, [("c", "p2")]).unwrap();
        let r = compute_metrics(&inst, &m).unwrap();
        assert_eq!(r.influencers[0].achieved_rank, None);
        assert_eq!(r.influencers[2].achieved_rank, Some(2));
        assert_eq!(r.influencers[2].reputation_rank, 3);
        assert_eq!(r.summary.mean_achieved_rank, Some(2.0));
    }

    #[test]
    fn zero_quota_product_has_undefined_utilization() {
        let inst = instance();
        let r = compute_metrics(&inst, &Matching::empty(&inst)).unwrap();
        assert_eq!(r.products[3].utilization, None);
        assert_eq!(r.products[0].utilization, Some(0.0));
        // quota-0 product is left out of the utilization histogram
        let total: u32 = r.histograms.product_utilization.iter().map(|b| b.count).sum();
        assert_eq!(total, 3);
    }

    #[test]
    fn empty_matching_still_has_rows() {
        let inst = instance();
        let r = compute_metrics(&inst, &Matching::empty(&inst)).unwrap();
        assert_eq!(r.merchants.len(), 2);
        assert!(r.merchants.iter().all(|m| m.utilization == Some(0.0)));
        assert!(r.histograms.achieved_rank.is_empty());
        for (_, bytes) in r.to_csv_files() {
            assert!(bytes.iter().filter(|&&b| b == b'\n').count() >= 1);
        }
    }

    #[test]
    fn utilization_bins() {
        let bins = utilization_histogram([(0, 4), (1, 4), (3, 10), (4, 4), (9, 10)].into_iter());
        let counts: Vec<u32> = bins.iter().map(|b| b.count).collect();
        assert_eq!(counts, [1, 0, 1, 1, 0, 0, 0, 0, 0, 2]);
        assert_eq!(bins[9].bin_high, 1.0);
    }

    #[test]
    fn infeasible_matching_is_rejected() {
        let inst = instance();
        let m = Matching::from_pairs(&inst, [("a", "p1"), ("b", "p1"), ("d", "p1")]).unwrap();
        assert!(matches!(compute_metrics(&inst, &m), Err(ReportError::Infeasible(_))));
    }

    #[test]
    fn csv_and_json_emission() {
        let inst = instance();
        let m = Matching::from_pairs(&inst, [("a", "p1"), ("c", "p3")]).unwrap();
        let r = compute_metrics(&inst, &m).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_report(&r, ReportFormat::Json, &dir.path().join("r.json")).unwrap();
        emit_report(&r, ReportFormat::Csv, &dir.path().join("csv")).unwrap();
        let back: MetricsReport =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
        assert_eq!(back, r);
        let merchants = std::fs::read_to_string(dir.path().join("csv/merchants.csv")).unwrap();
        assert_eq!(merchants, "id,quota,assigned,utilization,free_slots\nm1,4,1,0.25,3\nm2,1,1,1,0\n");
    }
}
