//! Number formatting shared by the CSV and Markdown writers.

/// Shortest round-trip decimal, scientific below 1e-4, `inf` for +∞.
pub fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else if v != 0.0 && v.abs() < 1e-4 {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// Inverse of [`num`].
pub fn parse_num(s: &str) -> Option<f64> {
    match s {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

/// Fixed four-decimal rendering for tables.
pub fn short(v: f64) -> String {
    if v.is_infinite() {
        num(v)
    } else {
        format!("{v:.4}")
    }
}

/// Lower-case alphanumerics with `_` elsewhere; used for file names.
pub fn slug(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect()
}
