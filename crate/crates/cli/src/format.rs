/// `x` rounded to 12 significant digits, without trailing zeros.
pub fn sig12(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let v: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    if v == 0.0 {
        "0".into()
    } else if v.abs() < 1e-6 || v.abs() >= 1e15 {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub fn join_sig12(values: &[f64]) -> String {
    values.iter().map(|&v| sig12(v)).collect::<Vec<_>>().join(" ")
}

/// Fixed four decimals, as in metric tables.
pub fn dec4(x: f64) -> String {
    format!("{x:.4}")
}
