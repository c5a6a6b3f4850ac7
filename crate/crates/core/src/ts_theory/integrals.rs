use std::f64::consts::PI;

/// `E_x[(w*·x) erf(w·x)]` for `x ~ N(0, I)`, `|w*| = 1`, `q = w·w*`, `wnorm2 = |w|²`.
pub fn integral_i0(q: f64, wnorm2: f64) -> f64 {
    2.0 / PI.sqrt() * q / (1.0 + 2.0 * wnorm2).sqrt()
}

/// `E_x[(w*·x)³ erf(w·x)]` under the same conventions as [`integral_i0`].
pub fn integral_i1(q: f64, wnorm2: f64) -> f64 {
    let s = 1.0 + 2.0 * wnorm2;
    integral_i0(q, wnorm2) * (3.0 - 2.0 * q * q / s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        assert_eq!(integral_i0(0.0, 1.3), 0.0);
        assert_eq!(integral_i1(0.0, 1.3), 0.0);
        assert!((integral_i0(1.0, 1.0) - 2.0 / (PI.sqrt() * 3f64.sqrt())).abs() < 1e-15);
        assert!((integral_i0(1.0, 1.0) - 0.65147).abs() < 1e-5);
        assert!((integral_i1(1.0, 1.0) - 2.0 / (3.0 * PI).sqrt() * 7.0 / 3.0).abs() < 1e-15);
        assert!((integral_i1(1.0, 1.0) - 1.5201).abs() < 1e-4);
    }

    #[test]
    fn linear_in_q() {
        for &(q, w) in &[(0.3, 0.2), (1.1, 2.0), (-0.7, 0.9)] {
            assert!((integral_i0(2.0 * q, w) - 2.0 * integral_i0(q, w)).abs() < 1e-14);
        }
    }

    #[test]
    fn small_overlap_ratio() {
        let (q, w) = (1e-4, 0.5);
        assert!((integral_i1(q, w) / integral_i0(q, w) - 3.0).abs() < 1e-7);
    }
}
