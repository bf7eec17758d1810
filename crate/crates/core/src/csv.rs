//! Plain-text number formatting shared by the CSV writers.

/// Formats `x` with nine significant digits, using plain decimals for
/// moderate magnitudes and exponent notation otherwise. Trailing zeros are
/// trimmed so equal values always print identically.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').unwrap_or((&sci, "0"));
    let exp: i32 = exp.parse().unwrap_or(0);
    if !(-5..9).contains(&exp) {
        return format!("{}e{exp}", trim(mantissa));
    }
    let decimals = (8 - exp).max(0) as usize;
    trim(&format!("{x:.decimals$}")).to_string()
}

fn trim(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Joins fields with commas and terminates the row with a single LF.
pub fn row<I: IntoIterator<Item = String>>(fields: I) -> String {
    let mut line = fields.into_iter().collect::<Vec<_>>().join(",");
    line.push('\n');
    line
}
