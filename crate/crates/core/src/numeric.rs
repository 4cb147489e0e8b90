//! Small numeric helpers shared across modules.

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Compensated sum of a slice.
pub fn sum(values: &[f64]) -> f64 {
    let mut acc = KahanSum::new();
    for &v in values {
        acc.add(v);
    }
    acc.value()
}

/// `max(x, 0)`.
#[inline]
pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Formats `x` like C's `%.{digits}g`: `digits` significant digits, trailing
/// zeros trimmed, scientific notation outside `[1e-5, 10^digits)`.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci
        .split_once('e')
        .expect("scientific format always has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    if exp < -5 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_machine(x: f64) -> String {
    format_sig(x, 17)
}

/// Four significant digits for summaries meant for people.
pub fn format_human(x: f64) -> String {
    format_sig(x, 4)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_beats_naive_accumulation() {
        let values: Vec<f64> = std::iter::once(1e16)
            .chain(std::iter::repeat(1.0).take(1000))
            .chain(std::iter::once(-1e16))
            .collect();
        assert_eq!(sum(&values), 1000.0);
    }

    #[test]
    fn sig_formatting() {
        assert_eq!(format_sig(12.056763, 4), "12.06");
        assert_eq!(format_sig(0.5, 4), "0.5");
        assert_eq!(format_sig(1037.0, 4), "1037");
        assert_eq!(format_sig(123456.0, 4), "1.235e+05");
        assert_eq!(format_sig(-0.000001234, 3), "-1.23e-06");
        assert_eq!(format_sig(0.0, 17), "0");
        assert_eq!(format_sig(8.0, 17), "8");
    }

    #[test]
    fn machine_format_round_trips() {
        for &x in &[
            0.1,
            1.0 / 3.0,
            2.0f64.sqrt() * 1e-7,
            6.02214076e23,
            -12.5,
            1e-300,
        ] {
            let s = format_machine(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }
}
