//! `%.12g`-style number formatting, so trajectory files diff cleanly.

use crate::error::{CliError, Result};

/// Formats `x` like C's `printf("%.12g", x)`.
pub fn fmt_g12(x: f64) -> Result<String> {
    if !x.is_finite() {
        return Err(CliError::NonFinite(x));
    }
    const SIG: i32 = 12;
    let sci = format!("{:.*e}", (SIG - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= SIG {
        let m = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        Ok(format!("{m}e{sign}{:02}", exp.abs()))
    } else {
        let fixed = format!("{:.*}", (SIG - 1 - exp) as usize, x);
        Ok(trim_fraction(&fixed).to_string())
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
