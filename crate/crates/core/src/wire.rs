//! Canonical JSON encoding for logs and protocol responses: sorted keys,
//! compact separators, floats rounded to 9 significant digits.

use serde::Serialize;
use serde_json::{Map, Number, Value};

pub const SIGNIFICANT_DIGITS: usize = 9;

/// Rounds a float to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

/// Rewrites a value with rounded floats and sorted object keys.
pub fn canonicalize(value: &Value) -> Value {
    match value {
        Value::Number(n) => {
            if n.is_f64() {
                let r = round_sig(n.as_f64().unwrap_or_default());
                Number::from_f64(r).map(Value::Number).unwrap_or(Value::Null)
            } else {
                Value::Number(n.clone())
            }
        }
        Value::Array(items) => Value::Array(items.iter().map(canonicalize).collect()),
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let mut out = Map::new();
            for k in keys {
                out.insert(k.clone(), canonicalize(&map[k]));
            }
            Value::Object(out)
        }
        other => other.clone(),
    }
}

/// Serializes any value to its canonical single-line JSON text.
pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> Result<String, serde_json::Error> {
    let v = serde_json::to_value(value)?;
    serde_json::to_string(&canonicalize(&v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn rounding() {
        assert_eq!(round_sig(0.1 + 0.2), 0.3);
        assert_eq!(round_sig(1.234567891234), 1.23456789);
        assert_eq!(round_sig(-0.0), 0.0);
        assert_eq!(round_sig(123456789012.0), 123456789000.0);
    }

    #[test]
    fn sorted_and_compact() {
        let v = json!({"b": 1, "a": {"z": 0.1, "y": [0.30000000000000004]}});
        assert_eq!(to_canonical_string(&v).unwrap(), r#"{"a":{"y":[0.3],"z":0.1},"b":1}"#);
    }
}
