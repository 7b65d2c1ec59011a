//! Locale-independent text formatting shared by the on-disk formats.

/// Formats `x` with 9 significant digits, `%.9g` style: fixed notation for
/// moderate magnitudes, scientific otherwise, trailing zeros trimmed.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..9).contains(&exp) {
        return format!("{}e{}", trim_zeros(mantissa), exp);
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Rounds through the 9-significant-digit text form, so in-memory values
/// equal what a reader of the text files would see.
pub fn round_sig9(x: f64) -> f64 {
    sig9(x).parse().expect("sig9 output parses")
}
