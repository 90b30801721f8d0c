//! Canonical JSON text: sorted keys, two-space indentation, every float
//! written with 17 significant digits, trailing newline.

use serde_json::Value;

pub fn to_canonical_string(value: &Value) -> String {
    let mut out = String::new();
    write_value(value, 0, &mut out);
    out.push('\n');
    out
}

/// 17 significant digits, round-trip exact for `f64`.
pub fn format_f64(x: f64) -> String {
    if !x.is_finite() {
        return "null".into();
    }
    format!("{x:.16e}")
}

fn indent(level: usize, out: &mut String) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn write_value(value: &Value, level: usize, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else {
                out.push_str(&format_f64(n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("strings always serialize")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                indent(level + 1, out);
                write_value(item, level + 1, out);
                if i + 1 < items.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            indent(level, out);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, key) in keys.iter().enumerate() {
                indent(level + 1, out);
                out.push_str(&serde_json::to_string(key).expect("strings always serialize"));
                out.push_str(": ");
                write_value(&map[key.as_str()], level + 1, out);
                if i + 1 < keys.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            indent(level, out);
            out.push('}');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn floats_use_seventeen_digits() {
        assert_eq!(format_f64(1.5), "1.5000000000000000e0");
        assert_eq!(format_f64(-1e-10), "-1.0000000000000000e-10");
        let x = 0.1 + 0.2;
        assert_eq!(format_f64(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn keys_are_sorted_and_output_parses() {
        let v = json!({"b": 1, "a": [0.5, true, null], "c": {"z": "q\"", "y": -3}});
        let text = to_canonical_string(&v);
        assert!(text.ends_with("}\n"));
        assert!(text.find("\"a\"").unwrap() < text.find("\"b\"").unwrap());
        let back: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["c"]["z"], "q\"");
        assert_eq!(back["b"], 1);
        assert_eq!(back["a"][0], 0.5);
    }

    #[test]
    fn reports_round_trip_bit_for_bit() {
        let xs = [1e-9, 0.1 + 0.2, std::f64::consts::PI, -2.2250738585072014e-308, 1.7976931348623157e308];
        let text = to_canonical_string(&json!(xs));
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        for (a, b) in xs.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
