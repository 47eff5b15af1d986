//! Canonical JSON: sorted object keys, no insignificant whitespace, and
//! non-integer numbers written with at most four fractional digits (half-even,
//! trailing zeros trimmed). Equal values always produce equal bytes, hence equal
//! CIDs.

use serde_json::Value;

const FRACTION_DIGITS: usize = 4;

pub fn to_vec(value: &Value) -> Vec<u8> {
    let mut out = Vec::with_capacity(128);
    write_value(value, &mut out);
    out
}

fn write_value(value: &Value, out: &mut Vec<u8>) {
    match value {
        Value::Null => out.extend_from_slice(b"null"),
        Value::Bool(b) => out.extend_from_slice(if *b { b"true" } else { b"false" }),
        Value::Number(n) => {
            if n.is_i64() || n.is_u64() {
                out.extend_from_slice(n.to_string().as_bytes());
            } else {
                let x = n.as_f64().unwrap_or(0.0);
                out.extend_from_slice(format_decimal(x).as_bytes());
            }
        }
        Value::String(s) => write_string(s, out),
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(item, out);
            }
            out.push(b']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push(b'{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_string(key, out);
                out.push(b':');
                write_value(&map[key], out);
            }
            out.push(b'}');
        }
    }
}

fn write_string(s: &str, out: &mut Vec<u8>) {
    let quoted = serde_json::to_string(s).expect("strings always serialize");
    out.extend_from_slice(quoted.as_bytes());
}

/// Decimal text of `x` rounded half-even to four fractional digits, trailing
/// zeros (and a bare trailing point) trimmed. Rounding works on the shortest
/// round-trip decimal form of `x`, so `0.00005` is treated as an exact tie.
pub fn format_decimal(x: f64) -> String {
    if !x.is_finite() {
        return "null".into();
    }
    let text = format!("{}", x.abs());
    let (int_part, frac_part) = text.split_once('.').unwrap_or((&text, ""));
    let mut digits: Vec<u8> = int_part
        .bytes()
        .chain(frac_part.bytes().chain(std::iter::repeat(b'0')).take(FRACTION_DIGITS))
        .map(|b| b - b'0')
        .collect();

    let rest = frac_part.as_bytes().get(FRACTION_DIGITS..).unwrap_or(&[]);
    let round_up = match rest.first() {
        None => false,
        Some(&d) if d > b'5' => true,
        Some(&d) if d < b'5' => false,
        Some(_) => {
            let beyond_half = rest[1..].iter().any(|&d| d != b'0');
            let last_is_odd = digits.last().is_some_and(|d| d % 2 == 1);
            beyond_half || last_is_odd
        }
    };
    if round_up {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }

    let split = digits.len() - FRACTION_DIGITS;
    let int_digits: String = digits[..split].iter().map(|d| (b'0' + d) as char).collect();
    let int_digits = int_digits.trim_start_matches('0');
    let int_digits = if int_digits.is_empty() { "0" } else { int_digits };
    let frac: String = digits[split..].iter().map(|d| (b'0' + d) as char).collect();
    let frac = frac.trim_end_matches('0');

    let negative = x.is_sign_negative() && !(int_digits == "0" && frac.is_empty());
    let mut out = String::new();
    if negative {
        out.push('-');
    }
    out.push_str(int_digits);
    if !frac.is_empty() {
        out.push('.');
        out.push_str(frac);
    }
    out
}

/// `x` rounded the same way [`format_decimal`] prints it.
pub fn round_decimal(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    format_decimal(x).parse().expect("formatted decimal parses")
}
