//! Number formatting shared by every text output.

/// 17 significant digits in scientific notation; round-trips every `f64`
/// and prints identically on every platform.
pub fn float(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

/// Comma-joined [`float`] values.
pub fn floats<'a>(xs: impl IntoIterator<Item = &'a f64>) -> String {
    xs.into_iter().map(|&x| float(x)).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrips() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 123_456_789.123_456_79, 0.0, -0.0] {
            let s = float(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(float(1.0), "1.0000000000000000e0");
    }
}
