//! Extraction of the JSON payloads that every pipeline prompt requests.

use serde_json::Value;

use crate::error::{Error, Result};

/// Pull the first balanced JSON object out of a model response.
///
/// Surrounding code fences are stripped first; braces inside string
/// literals do not count toward balancing.
pub fn extract_json(text: &str) -> Result<Value> {
    let body = strip_fences(text.trim());
    let candidate = first_balanced_object(body).ok_or_else(|| Error::JsonExtract {
        raw: text.to_string(),
    })?;
    serde_json::from_str(candidate).map_err(|_| Error::JsonExtract {
        raw: text.to_string(),
    })
}

fn strip_fences(text: &str) -> &str {
    let Some(rest) = text.strip_prefix("```") else {
        return text;
    };
    // Drop the fence line (possibly carrying a language tag), then cut at
    // the closing fence if there is one.
    let rest = match rest.find('\n') {
        Some(i) => &rest[i + 1..],
        None => rest,
    };
    match rest.rfind("```") {
        Some(i) => &rest[..i],
        None => rest,
    }
}

fn first_balanced_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &byte) in bytes.iter().enumerate().skip(start) {
        if in_string {
            if escaped {
                escaped = false;
            } else if byte == b'\\' {
                escaped = true;
            } else if byte == b'"' {
                in_string = false;
            }
            continue;
        }
        match byte {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..=i]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Case-insensitive lookup of a top-level key.
pub fn get_ci<'a>(value: &'a Value, key: &str) -> Option<&'a Value> {
    let obj = value.as_object()?;
    obj.iter()
        .find(|(k, _)| k.eq_ignore_ascii_case(key))
        .map(|(_, v)| v)
}

/// Read an integer score without range handling. Accepts integers,
/// integer-valued reals, and numeric strings.
pub fn parse_int_score_raw(value: &Value, key: &str) -> Result<i64> {
    let field = get_ci(value, key).ok_or_else(|| Error::MissingScoreKey {
        key: key.to_string(),
    })?;
    let non_numeric = || Error::NonNumericScore {
        key: key.to_string(),
        value: field.to_string(),
    };
    match field {
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(i)
            } else if let Some(f) = n.as_f64() {
                if f.fract() == 0.0 {
                    Ok(f as i64)
                } else {
                    Err(non_numeric())
                }
            } else {
                Err(non_numeric())
            }
        }
        Value::String(s) => {
            let s = s.trim();
            if let Ok(i) = s.parse::<i64>() {
                Ok(i)
            } else if let Ok(f) = s.parse::<f64>() {
                if f.fract() == 0.0 {
                    Ok(f as i64)
                } else {
                    Err(non_numeric())
                }
            } else {
                Err(non_numeric())
            }
        }
        _ => Err(non_numeric()),
    }
}

/// Read an integer score under `key`, clamping into `[lo, hi]` with a
/// warning when the model strays outside the scale.
pub fn parse_int_score(value: &Value, key: &str, lo: i64, hi: i64) -> Result<i64> {
    let raw = parse_int_score_raw(value, key)?;
    if raw < lo || raw > hi {
        log::warn!("score {raw} under key {key:?} outside [{lo}, {hi}], clamping");
        Ok(raw.clamp(lo, hi))
    } else {
        Ok(raw)
    }
}
