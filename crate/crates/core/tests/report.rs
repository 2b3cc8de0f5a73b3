mod common;

use std::collections::HashMap;

use common::small_market;
use influmatch::ingest::{generate_instance, GeneratorParams};
use influmatch::model::Matching;
use influmatch::report::{compute_metrics, emit_report, MetricsReport, ReportFormat};
use influmatch::solve;
use proptest::prelude::*;
use serde_json::Value;

fn read_csv(bytes: &[u8]) -> Vec<HashMap<String, String>> {
    let mut r = csv::Reader::from_reader(bytes);
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|row| {
            let row = row.unwrap();
            headers.iter().zip(row.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect()
        })
        .collect()
}

fn file<'a>(files: &'a [(&'static str, Vec<u8>)], name: &str) -> &'a [u8] {
    &files.iter().find(|(n, _)| *n == name).unwrap().1
}

/// Every numeric field in the CSV tables equals the corresponding JSON number.
fn assert_formats_agree(report: &MetricsReport) {
    let json: Value = serde_json::from_str(&report.to_json()).unwrap();
    let files = report.to_csv_files();
    for (table, name) in [
        ("merchants", "merchants.csv"),
        ("products", "products.csv"),
        ("influencers", "influencers.csv"),
    ] {
        let rows = read_csv(file(&files, name));
        let objs = json[table].as_array().unwrap();
        assert_eq!(rows.len(), objs.len(), "{table}");
        for (row, obj) in rows.iter().zip(objs) {
            for (key, cell) in row {
                let v = &obj[key];
                match v {
                    Value::Null => assert_eq!(cell, "", "{table}.{key}"),
                    Value::String(s) => assert_eq!(cell, s, "{table}.{key}"),
                    Value::Number(n) => {
                        let parsed: f64 = cell.parse().unwrap();
                        assert_eq!(parsed, n.as_f64().unwrap(), "{table}.{key}");
                    }
                    other => panic!("unexpected {other:?} in {table}.{key}"),
                }
            }
        }
    }
    let bins: Vec<(String, f64, f64, u64)> = read_csv(file(&files, "histograms.csv"))
        .into_iter()
        .map(|r| {
            (
                r["family"].clone(),
                r["bin_low"].parse().unwrap(),
                r["bin_high"].parse().unwrap(),
                r["count"].parse().unwrap(),
            )
        })
        .collect();
    let mut from_json = Vec::new();
    for (family, list) in json["histograms"].as_object().unwrap() {
        for b in list.as_array().unwrap() {
            from_json.push((
                family.clone(),
                b["bin_low"].as_f64().unwrap(),
                b["bin_high"].as_f64().unwrap(),
                b["count"].as_u64().unwrap(),
            ));
        }
    }
    let key = |t: &(String, f64, f64, u64)| (t.0.clone(), t.1.to_bits());
    let mut a = bins.clone();
    let mut b = from_json;
    a.sort_by_key(key);
    b.sort_by_key(key);
    assert_eq!(a, b);
}

fn assert_consistent(inst: &influmatch::Instance, m: &Matching, report: &MetricsReport) {
    // independent recount from the pair list
    let mut per_product: HashMap<String, u32> = HashMap::new();
    let mut per_merchant: HashMap<String, u32> = HashMap::new();
    for (_, p) in m.pairs(inst) {
        *per_product.entry(p.to_string()).or_default() += 1;
        let owner = &inst.products()[inst.product_idx(p.as_str()).unwrap()].merchant;
        *per_merchant.entry(owner.to_string()).or_default() += 1;
    }
    for p in &report.products {
        let a = per_product.get(&p.id).copied().unwrap_or(0);
        assert_eq!(p.assigned, a);
        assert!(p.assigned <= p.quota);
        match p.utilization {
            Some(u) => assert_eq!(u, f64::from(a) / f64::from(p.quota)),
            None => assert_eq!(p.quota, 0),
        }
    }
    for mm in &report.merchants {
        let a = per_merchant.get(&mm.id).copied().unwrap_or(0);
        assert_eq!(mm.assigned, a);
        assert_eq!(mm.free_slots + mm.assigned, mm.quota);
    }
    let h = &report.histograms;
    let total = |bins: &[influmatch::report::HistogramBin]| bins.iter().map(|b| b.count as usize).sum::<usize>();
    let positive = |q: &mut dyn Iterator<Item = u32>| q.filter(|&q| q > 0).count();
    assert_eq!(total(&h.merchant_utilization), positive(&mut report.merchants.iter().map(|m| m.quota)));
    assert_eq!(total(&h.product_utilization), positive(&mut report.products.iter().map(|p| p.quota)));
    assert_eq!(total(&h.free_slots), report.merchants.len());
    assert_eq!(total(&h.achieved_rank), m.matched_count());
    assert_eq!(report.summary.matched as usize, m.matched_count());
    assert_eq!(report.merchants.iter().map(|v| v.assigned as usize).sum::<usize>(), m.matched_count());
    if let Some(mean) = report.summary.mean_achieved_rank {
        let max_len = report.influencers.iter().map(|f| f.desired_len).max().unwrap();
        assert!(mean >= 1.0 && mean <= f64::from(max_len));
    }
}

#[test]
fn generated_report_round_trips_and_reemits_identically() {
    let inst = generate_instance(7, &GeneratorParams::default()).unwrap();
    let (m, _) = solve(&inst);
    let report = compute_metrics(&inst, &m).unwrap();
    assert_consistent(&inst, &m, &report);
    assert_formats_agree(&report);

    let back: MetricsReport = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(back, report);

    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for format in [ReportFormat::Json, ReportFormat::Csv] {
        let again = compute_metrics(&inst, &m).unwrap();
        let (pa, pb) = match format {
            ReportFormat::Json => (a.join("r.json"), b.join("r.json")),
            ReportFormat::Csv => (a.join("csv"), b.join("csv")),
        };
        emit_report(&report, format, &pa).unwrap();
        emit_report(&again, format, &pb).unwrap();
        if pa.is_dir() {
            for name in ["merchants.csv", "products.csv", "influencers.csv", "histograms.csv"] {
                assert_eq!(std::fs::read(pa.join(name)).unwrap(), std::fs::read(pb.join(name)).unwrap());
            }
        } else {
            assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
        }
    }
}

#[test]
fn empty_matching_reports_every_slot_free() {
    let inst = generate_instance(3, &GeneratorParams::default()).unwrap();
    let m = Matching::empty(&inst);
    let report = compute_metrics(&inst, &m).unwrap();
    assert_eq!(report.summary.matched, 0);
    assert_eq!(report.summary.mean_achieved_rank, None);
    assert_eq!(report.summary.free_slots_total, report.summary.merchant_quota_total);
    assert!(report.histograms.achieved_rank.is_empty());
    assert_formats_agree(&report);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metrics_match_recount(market in small_market(6, 4)) {
        let inst = market.build();
        let (m, _) = solve(&inst);
        let report = compute_metrics(&inst, &m).unwrap();
        assert_consistent(&inst, &m, &report);
        assert_formats_agree(&report);
        let back: MetricsReport = serde_json::from_str(&report.to_json()).unwrap();
        prop_assert_eq!(back, report);
    }
}
