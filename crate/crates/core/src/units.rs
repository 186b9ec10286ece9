//! Unit-suffixed scalar parsing for description files and the CLI.
//!
//! Bare numbers are radians (angles) or meters (lengths).

use serde::{Deserialize, Deserializer};

fn split_suffix(text: &str) -> (&str, &str) {
    let t = text.trim();
    let idx = t
        .find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
        .unwrap_or(t.len());
    (t[..idx].trim(), t[idx..].trim())
}

fn parse_number(num: &str, original: &str) -> Result<f64, String> {
    num.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("`{original}` is not a finite number"))
}

/// `"90 deg"`, `"90deg"`, `"1.2 rad"` or `"1.2"` (radians).
pub fn parse_angle(text: &str) -> Result<f64, String> {
    let (num, unit) = split_suffix(text);
    let v = parse_number(num, text)?;
    match unit {
        "" | "rad" => Ok(v),
        "deg" => Ok(v.to_radians()),
        other => Err(format!("unknown angle unit `{other}` in `{text}` (use deg or rad)")),
    }
}

/// `"0.1"`, `"0.1 m"`, `"10 cm"` or `"100 mm"`.
pub fn parse_length(text: &str) -> Result<f64, String> {
    let (num, unit) = split_suffix(text);
    let v = parse_number(num, text)?;
    match unit {
        "" | "m" => Ok(v),
        "cm" => Ok(v / 100.0),
        "mm" => Ok(v / 1000.0),
        other => Err(format!("unknown length unit `{other}` in `{text}` (use m, cm or mm)")),
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumberOrText {
    Number(f64),
    Text(String),
}

pub(crate) fn de_angle<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    match NumberOrText::deserialize(d)? {
        NumberOrText::Number(v) => Ok(v),
        NumberOrText::Text(s) => parse_angle(&s).map_err(serde::de::Error::custom),
    }
}

pub(crate) fn de_angle3<'de, D: Deserializer<'de>>(d: D) -> Result<[f64; 3], D::Error> {
    let raw = <[NumberOrText; 3]>::deserialize(d)?;
    let mut out = [0.0; 3];
    for (o, r) in out.iter_mut().zip(raw) {
        *o = match r {
            NumberOrText::Number(v) => v,
            NumberOrText::Text(s) => parse_angle(&s).map_err(serde::de::Error::custom)?,
        };
    }
    Ok(out)
}
