use std::fs;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use rust_decimal::Decimal;

use super::{is_plain_decimal, normalize_header, IngestError};
use crate::derive::{compose_profile_key, TransactionRecord};

/// How the consumer key of a transaction row is obtained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ProfileMode {
    /// An explicit consumer id column.
    #[default]
    Direct,
    /// Composite profile of branch, city, type and gender, for logs without
    /// buyer identification.
    Composite,
}

impl FromStr for ProfileMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "direct" => Ok(ProfileMode::Direct),
            "composite" => Ok(ProfileMode::Composite),
            other => Err(format!("unknown profile mode `{other}`")),
        }
    }
}

const CONSUMER: &[&str] = &["consumer_key", "consumer", "consumer_id", "customer_id", "user_id"];
const PRODUCT: &[&str] = &["product_code", "product", "product_id", "product_line", "codigo"];
const MERCHANT: &[&str] = &["merchant_code", "merchant", "merchant_id", "comerciante"];
const QUANTITY: &[&str] = &["quantity", "qty"];
const PRICE: &[&str] = &["unit_price", "price"];
const TIMESTAMP: &[&str] = &["timestamp", "event_time", "datetime"];
const BRANCH: &[&str] = &["branch"];
const CITY: &[&str] = &["city"];
const KIND: &[&str] = &["type", "customer_type"];
const GENDER: &[&str] = &["gender"];

fn col(headers: &[String], names: &[&str]) -> Option<usize> {
    headers.iter().position(|h| names.contains(&h.as_str()))
}

pub fn load_transactions_csv(path: &Path, mode: ProfileMode) -> Result<Vec<TransactionRecord>, IngestError> {
    let mut text = String::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| IngestError::io(path, e))?;
    parse_transactions(&text, &path.display().to_string(), mode)
}

/// Parses transaction CSV text; `file` is only used in error messages.
pub fn parse_transactions(text: &str, file: &str, mode: ProfileMode) -> Result<Vec<TransactionRecord>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| IngestError::parse(file, 1, None, e.to_string()))?
        .iter()
        .map(normalize_header)
        .collect();
    let need = |names: &[&str]| {
        col(&headers, names).ok_or_else(|| IngestError::parse(file, 1, Some(names[0]), "missing column"))
    };
    let consumer = match mode {
        ProfileMode::Direct => Some(need(CONSUMER)?),
        ProfileMode::Composite => None,
    };
    let product = need(PRODUCT)?;
    let merchant = need(MERCHANT)?;
    let quantity = need(QUANTITY)?;
    let price = need(PRICE)?;
    let timestamp = col(&headers, TIMESTAMP);
    let profile = [BRANCH, CITY, KIND, GENDER].map(|names| col(&headers, names));

    let mut out = Vec::new();
    for (n, row) in reader.records().enumerate() {
        let row = row.map_err(|e| IngestError::parse(file, n as u64 + 2, None, e.to_string()))?;
        let line = row.position().map(|p| p.line()).unwrap_or(n as u64 + 2);
        let get = |c: Option<usize>| c.and_then(|c| row.get(c));
        let err = |column: &str, message: String| IngestError::parse(file, line, Some(column), message);

        let consumer_key = match consumer {
            Some(c) => {
                let key = get(Some(c)).unwrap_or("");
                if key.is_empty() {
                    return Err(err("consumer_key", "empty consumer key".into()));
                }
                key.to_string()
            }
            None => compose_profile_key(get(profile[0]), get(profile[1]), get(profile[2]), get(profile[3]))?,
        };
        let product_code = get(Some(product)).unwrap_or("");
        let merchant_code = get(Some(merchant)).unwrap_or("");
        if product_code.is_empty() {
            return Err(err("product_code", "empty product code".into()));
        }
        if merchant_code.is_empty() {
            return Err(err("merchant_code", "empty merchant code".into()));
        }

        let raw_qty = get(Some(quantity)).unwrap_or("");
        let qty: u32 = match raw_qty.parse() {
            Ok(q) if q >= 1 && raw_qty.bytes().all(|b| b.is_ascii_digit()) => q,
            _ => return Err(err("quantity", format!("quantity must be a positive integer, got `{raw_qty}`"))),
        };

        let raw_price = get(Some(price)).unwrap_or("");
        if !is_plain_decimal(raw_price) {
            return Err(err("unit_price", format!("invalid price `{raw_price}`")));
        }
        let unit_price = Decimal::from_str(raw_price).map_err(|e| err("unit_price", e.to_string()))?;

        let timestamp = get(timestamp).filter(|t| !t.is_empty()).map(str::to_string);

        out.push(TransactionRecord {
            consumer_key,
            product_code: product_code.to_string(),
            merchant_code: merchant_code.to_string(),
            quantity: qty,
            unit_price,
            timestamp,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derive::DeriveError;

    #[test]
    fn direct_mode_uses_consumer_column() {
        let text = "consumer_key,product_code,merchant_code,quantity,unit_price,timestamp\nc1,P1,M1,2,10.50,2020-01-01T10:00:00\n";
        let rows = parse_transactions(text, "t.csv", ProfileMode::Direct).unwrap();
        assert_eq!(rows[0].consumer_key, "c1");
        assert_eq!(rows[0].unit_price, Decimal::new(1050, 2));
        assert_eq!(rows[0].timestamp.as_deref(), Some("2020-01-01T10:00:00"));
    }

    #[test]
    fn composite_mode_builds_profile_key() {
        let text = "Branch,City,Customer type,Gender,Product line,Merchant,Quantity,Unit price\nA,Yangon,Member,Female,Health,M1,7,74.69\n";
        let rows = parse_transactions(text, "s.csv", ProfileMode::Composite).unwrap();
        assert_eq!(rows[0].consumer_key, "a|yangon|member|female");
        assert_eq!(rows[0].timestamp, None);
    }

    #[test]
    fn composite_mode_missing_gender() {
        let text = "branch,city,type,product,merchant,quantity,price\nA,Yangon,Member,P,M,1,1\n";
        let err = parse_transactions(text, "s.csv", ProfileMode::Composite).unwrap_err();
        assert!(matches!(err, IngestError::Derive(DeriveError::MissingProfileField("gender"))));
    }

    #[test]
    fn zero_quantity_is_rejected() {
        let text = "consumer,product,merchant,quantity,price\nc,P,M,0,1.00\n";
        let err = parse_transactions(text, "t.csv", ProfileMode::Direct).unwrap_err();
        assert!(matches!(err, IngestError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn rejects_grouped_or_signed_prices() {
        for bad in ["\"1,000.00\"", "-1", "1e2", "1_000"] {
            let text = format!("consumer,product,merchant,quantity,price\nc,P,M,1,{bad}\n");
            assert!(parse_transactions(&text, "t.csv", ProfileMode::Direct).is_err(), "{bad}");
        }
    }
}
