//! Reading and writing instances, matchings and transaction logs.
//!
//! Instance CSVs follow the three-table layout used by the derivation step:
//!
//! * influencers: `nome,rank,<product columns...>` where the product columns
//!   are in preference order and `-` (or an empty cell) means "not desired";
//! * merchants: `nome,quota`;
//! * products: `codigo,quota,comerciante`.
//!
//! Header names are case-insensitive and English aliases are accepted. Numbers
//! use `.` as the decimal point; thousands separators are rejected.

mod generate;
mod transactions;

pub use generate::{generate_instance, GeneratorParams};
pub use transactions::{load_transactions_csv, parse_transactions, ProfileMode};

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::derive::DeriveError;
use crate::engine::SolveTrace;
use crate::model::{
    build_instance, BuildOptions, InfluencerSpec, Instance, Matching, MerchantSpec, ModelError,
    ProductSpec, TieBreak,
};

pub const INFLUENCERS_FILE: &str = "influencers.csv";
pub const MERCHANTS_FILE: &str = "merchants.csv";
pub const PRODUCTS_FILE: &str = "products.csv";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{file}:{line}{}: {message}", column.as_ref().map(|c| format!(" column `{c}`")).unwrap_or_default())]
    Parse {
        file: String,
        line: u64,
        column: Option<String>,
        message: String,
    },
    #[error("{file}: {source}")]
    Json {
        file: String,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Derive(#[from] DeriveError),
    #[error("invalid generator parameters: {0}")]
    InvalidGeneratorParams(String),
}

impl IngestError {
    fn io(path: &Path, source: io::Error) -> IngestError {
        IngestError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    fn parse(file: &str, line: u64, column: Option<&str>, message: impl Into<String>) -> IngestError {
        IngestError::Parse {
            file: file.to_string(),
            line,
            column: column.map(str::to_string),
            message: message.into(),
        }
    }
}

/// Single-document form of an instance, used for fixtures and pipes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceDocument {
    pub influencers: Vec<InfluencerSpec>,
    pub products: Vec<ProductSpec>,
    pub merchants: Vec<MerchantSpec>,
    #[serde(default)]
    pub tie_break: TieBreak,
}

impl InstanceDocument {
    pub fn from_instance(instance: &Instance) -> InstanceDocument {
        let (influencers, products, merchants) = instance.to_specs();
        InstanceDocument {
            influencers,
            products,
            merchants,
            tie_break: instance.tie_break(),
        }
    }

    pub fn build(self, options: &BuildOptions) -> Result<Instance, ModelError> {
        build_instance(
            self.influencers,
            self.products,
            self.merchants,
            self.tie_break,
            options,
        )
    }
}

pub fn instance_to_json(instance: &Instance) -> String {
    let mut out = serde_json::to_string_pretty(&InstanceDocument::from_instance(instance))
        .expect("instance document serializes");
    out.push('\n');
    out
}

pub fn instance_from_json(text: &str, file: &str, options: &BuildOptions) -> Result<Instance, IngestError> {
    let doc: InstanceDocument = serde_json::from_str(text).map_err(|source| IngestError::Json {
        file: file.to_string(),
        source,
    })?;
    Ok(doc.build(options)?)
}

pub fn read_to_string(path: &Path) -> Result<String, IngestError> {
    if path == Path::new("-") {
        let mut buf = String::new();
        io::stdin()
            .read_to_string(&mut buf)
            .map_err(|e| IngestError::io(path, e))?;
        return Ok(buf);
    }
    fs::read_to_string(path).map_err(|e| IngestError::io(path, e))
}

pub fn write_file(path: &Path, contents: &[u8]) -> Result<(), IngestError> {
    if path == Path::new("-") {
        let mut out = io::stdout().lock();
        return out
            .write_all(contents)
            .and_then(|_| out.flush())
            .map_err(|e| IngestError::io(path, e));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| IngestError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| IngestError::io(path, e))
}

/// Loads an instance from a JSON document (`-` for stdin) or from a directory
/// holding the three instance CSVs.
pub fn load_instance(path: &Path, tie_break: TieBreak, options: &BuildOptions) -> Result<Instance, IngestError> {
    if path.is_dir() {
        return load_instance_csv(
            &path.join(INFLUENCERS_FILE),
            &path.join(MERCHANTS_FILE),
            &path.join(PRODUCTS_FILE),
            tie_break,
            options,
        );
    }
    let text = read_to_string(path)?;
    instance_from_json(&text, &path.display().to_string(), options)
}

fn normalize_header(h: &str) -> String {
    h.trim().to_lowercase().replace([' ', '-'], "_")
}

fn find_column(headers: &[String], names: &[&str]) -> Option<usize> {
    headers.iter().position(|h| names.contains(&h.as_str()))
}

fn require_column(headers: &[String], names: &[&str], file: &str) -> Result<usize, IngestError> {
    find_column(headers, names)
        .ok_or_else(|| IngestError::parse(file, 1, Some(names[0]), "missing column"))
}

const ID_NAMES: &[&str] = &["nome", "name", "id"];
const INFLUENCER_ID_NAMES: &[&str] = &["nome", "name", "id", "influencer"];
const RANK_NAMES: &[&str] = &["rank", "reputation", "rep"];
const QUOTA_NAMES: &[&str] = &["quota"];
const PRODUCT_ID_NAMES: &[&str] = &["codigo", "code", "id", "product"];
const MERCHANT_REF_NAMES: &[&str] = &["comerciante", "merchant"];

fn open_csv(path: &Path) -> Result<(csv::Reader<fs::File>, Vec<String>, String), IngestError> {
    let file = path.display().to_string();
    let handle = fs::File::open(path).map_err(|e| IngestError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(handle);
    let headers = reader
        .headers()
        .map_err(|e| IngestError::parse(&file, 1, None, e.to_string()))?
        .iter()
        .map(normalize_header)
        .collect();
    Ok((reader, headers, file))
}

fn line_of(record: &csv::StringRecord, fallback: u64) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(fallback)
}

pub(crate) fn parse_quota(raw: &str, file: &str, line: u64, column: &str) -> Result<u32, IngestError> {
    if raw.starts_with('-') {
        return Err(IngestError::parse(file, line, Some(column), format!("negative quota `{raw}`")));
    }
    if raw.is_empty() || !raw.bytes().all(|b| b.is_ascii_digit()) {
        return Err(IngestError::parse(file, line, Some(column), format!("invalid quota `{raw}`")));
    }
    raw.parse()
        .map_err(|_| IngestError::parse(file, line, Some(column), format!("quota out of range `{raw}`")))
}

/// Plain decimal: digits with at most one `.`, no sign, exponent or grouping.
pub(crate) fn is_plain_decimal(raw: &str) -> bool {
    let mut parts = raw.splitn(2, '.');
    let whole = parts.next().unwrap_or("");
    let frac = parts.next();
    let digits = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
    match frac {
        None => !whole.is_empty() && digits(whole),
        Some(f) => (!whole.is_empty() || !f.is_empty()) && digits(whole) && digits(f),
    }
}

fn parse_reputation(raw: &str, file: &str, line: u64) -> Result<f64, IngestError> {
    if !is_plain_decimal(raw) {
        return Err(IngestError::parse(file, line, Some("rank"), format!("invalid number `{raw}`")));
    }
    raw.parse()
        .map_err(|_| IngestError::parse(file, line, Some("rank"), format!("invalid number `{raw}`")))
}

fn field(record: &csv::StringRecord, idx: usize) -> &str {
    record.get(idx).unwrap_or("")
}

pub fn read_influencers_csv(path: &Path) -> Result<Vec<InfluencerSpec>, IngestError> {
    let (mut reader, headers, file) = open_csv(path)?;
    let id_col = require_column(&headers, INFLUENCER_ID_NAMES, &file)?;
    let rank_col = require_column(&headers, RANK_NAMES, &file)?;
    let mut out = Vec::new();
    for (n, row) in reader.records().enumerate() {
        let row = row.map_err(|e| IngestError::parse(&file, n as u64 + 2, None, e.to_string()))?;
        let line = line_of(&row, n as u64 + 2);
        let id = field(&row, id_col);
        if id.is_empty() {
            return Err(IngestError::parse(&file, line, Some("nome"), "empty id"));
        }
        let reputation = parse_reputation(field(&row, rank_col), &file, line)?;
        let desired = row
            .iter()
            .enumerate()
            .filter(|(c, v)| *c != id_col && *c != rank_col && !v.is_empty() && *v != "-")
            .map(|(_, v)| v.to_string())
            .collect();
        out.push(InfluencerSpec {
            id: id.to_string(),
            reputation,
            desired,
        });
    }
    Ok(out)
}

pub fn read_merchants_csv(path: &Path) -> Result<Vec<MerchantSpec>, IngestError> {
    let (mut reader, headers, file) = open_csv(path)?;
    let id_col = require_column(&headers, ID_NAMES, &file)?;
    let quota_col = require_column(&headers, QUOTA_NAMES, &file)?;
    let mut out = Vec::new();
    for (n, row) in reader.records().enumerate() {
        let row = row.map_err(|e| IngestError::parse(&file, n as u64 + 2, None, e.to_string()))?;
        let line = line_of(&row, n as u64 + 2);
        let id = field(&row, id_col);
        if id.is_empty() {
            return Err(IngestError::parse(&file, line, Some("nome"), "empty id"));
        }
        out.push(MerchantSpec {
            id: id.to_string(),
            quota: parse_quota(field(&row, quota_col), &file, line, "quota")?,
        });
    }
    Ok(out)
}

pub fn read_products_csv(path: &Path) -> Result<Vec<ProductSpec>, IngestError> {
    let (mut reader, headers, file) = open_csv(path)?;
    let id_col = require_column(&headers, PRODUCT_ID_NAMES, &file)?;
    let quota_col = require_column(&headers, QUOTA_NAMES, &file)?;
    let merchant_col = require_column(&headers, MERCHANT_REF_NAMES, &file)?;
    let mut out = Vec::new();
    for (n, row) in reader.records().enumerate() {
        let row = row.map_err(|e| IngestError::parse(&file, n as u64 + 2, None, e.to_string()))?;
        let line = line_of(&row, n as u64 + 2);
        let id = field(&row, id_col);
        if id.is_empty() {
            return Err(IngestError::parse(&file, line, Some("codigo"), "empty id"));
        }
        out.push(ProductSpec {
            id: id.to_string(),
            quota: parse_quota(field(&row, quota_col), &file, line, "quota")?,
            merchant: field(&row, merchant_col).to_string(),
        });
    }
    Ok(out)
}

pub fn load_instance_csv(
    influencers_path: &Path,
    merchants_path: &Path,
    products_path: &Path,
    tie_break: TieBreak,
    options: &BuildOptions,
) -> Result<Instance, IngestError> {
    let influencers = read_influencers_csv(influencers_path)?;
    let merchants = read_merchants_csv(merchants_path)?;
    let products = read_products_csv(products_path)?;
    Ok(build_instance(influencers, products, merchants, tie_break, options)?)
}

fn csv_bytes(rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut writer = csv::WriterBuilder::new()
        .flexible(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for row in rows {
        writer.write_record(&row).expect("in-memory csv write");
    }
    writer.into_inner().expect("in-memory csv flush")
}

/// The three instance tables as CSV bytes: (influencers, merchants, products).
pub fn instance_to_csv(instance: &Instance) -> (Vec<u8>, Vec<u8>, Vec<u8>) {
    let width = instance
        .influencers()
        .iter()
        .map(|f| f.desired.len())
        .max()
        .unwrap_or(0);
    let mut header = vec!["nome".to_string(), "rank".to_string()];
    header.extend((0..width).map(|c| c.to_string()));
    let influencer_rows = std::iter::once(header).chain(instance.influencers().iter().map(|f| {
        let mut row = vec![f.id.to_string(), f.reputation.to_string()];
        row.extend(f.desired.iter().map(ToString::to_string));
        row.resize(width + 2, "-".to_string());
        row
    }));
    let merchant_rows = std::iter::once(vec!["nome".to_string(), "quota".to_string()]).chain(
        instance
            .merchants()
            .iter()
            .map(|m| vec![m.id.to_string(), m.quota.to_string()]),
    );
    let product_rows = std::iter::once(vec![
        "codigo".to_string(),
        "quota".to_string(),
        "comerciante".to_string(),
    ])
    .chain(
        instance
            .products()
            .iter()
            .map(|p| vec![p.id.to_string(), p.quota.to_string(), p.merchant.to_string()]),
    );
    (
        csv_bytes(influencer_rows),
        csv_bytes(merchant_rows),
        csv_bytes(product_rows),
    )
}

pub fn write_instance_csv(instance: &Instance, dir: &Path) -> Result<(), IngestError> {
    let (influencers, merchants, products) = instance_to_csv(instance);
    fs::create_dir_all(dir).map_err(|e| IngestError::io(dir, e))?;
    write_file(&dir.join(INFLUENCERS_FILE), &influencers)?;
    write_file(&dir.join(MERCHANTS_FILE), &merchants)?;
    write_file(&dir.join(PRODUCTS_FILE), &products)
}

/// Writes JSON when `path` ends in `.json` or is `-`, otherwise the three CSVs
/// into the directory `path`.
pub fn write_instance(instance: &Instance, path: &Path) -> Result<(), IngestError> {
    if is_json_target(path) {
        write_file(path, instance_to_json(instance).as_bytes())
    } else {
        write_instance_csv(instance, path)
    }
}

pub fn is_json_target(path: &Path) -> bool {
    path == Path::new("-") || path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// `influencer,product,merchant` rows in influencer input order.
pub fn matching_to_csv(instance: &Instance, matching: &Matching) -> Vec<u8> {
    let header = vec![
        "influencer".to_string(),
        "product".to_string(),
        "merchant".to_string(),
    ];
    let rows = matching.pairs(instance).into_iter().map(|(f, p)| {
        let j = instance.product_idx(p.as_str()).expect("matched product exists");
        vec![
            f.to_string(),
            p.to_string(),
            instance.products()[j].merchant.to_string(),
        ]
    });
    csv_bytes(std::iter::once(header).chain(rows))
}

/// Failure modes when reading a matching file.
#[derive(Debug, Error)]
pub enum MatchingLoadError {
    #[error(transparent)]
    Input(#[from] IngestError),
    /// The rows name valid entities but do not form an allocation
    /// (duplicate influencer or undesired product).
    #[error("{file}: {source}")]
    NotAnAllocation {
        file: String,
        #[source]
        source: ModelError,
    },
}

pub fn read_matching_csv(instance: &Instance, path: &Path) -> Result<Matching, MatchingLoadError> {
    let (mut reader, headers, file) = open_csv(path)?;
    let f_col = require_column(&headers, &["influencer", "nome", "id"], &file)?;
    let p_col = require_column(&headers, &["product", "codigo"], &file)?;
    let m_col = find_column(&headers, &["merchant", "comerciante"]);
    let mut pairs = Vec::new();
    for (n, row) in reader.records().enumerate() {
        let row = row.map_err(|e| IngestError::parse(&file, n as u64 + 2, None, e.to_string()))?;
        let line = line_of(&row, n as u64 + 2);
        let (f, p) = (field(&row, f_col), field(&row, p_col));
        if instance.influencer_idx(f).is_none() {
            return Err(IngestError::parse(&file, line, Some("influencer"), format!("unknown influencer `{f}`")).into());
        }
        let Some(j) = instance.product_idx(p) else {
            return Err(IngestError::parse(&file, line, Some("product"), format!("unknown product `{p}`")).into());
        };
        if let Some(c) = m_col {
            let m = field(&row, c);
            if !m.is_empty() && m != instance.products()[j].merchant.as_str() {
                return Err(IngestError::parse(
                    &file,
                    line,
                    Some("merchant"),
                    format!("product `{p}` belongs to `{}`, not `{m}`", instance.products()[j].merchant),
                )
                .into());
            }
        }
        pairs.push((f.to_string(), p.to_string()));
    }
    Matching::from_pairs(instance, pairs).map_err(|source| MatchingLoadError::NotAnAllocation { file, source })
}

pub fn trace_to_json(trace: &SolveTrace) -> String {
    let mut s = serde_json::to_string_pretty(trace).expect("trace serializes");
    s.push('\n');
    s
}
