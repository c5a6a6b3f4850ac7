use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// A tabulated function on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    points: Vec<f64>,
    values: Vec<f64>,
}

impl Grid1D {
    pub fn new(points: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::Shape { expected: points.len(), got: values.len() });
        }
        if points.len() < 2 {
            return Err(Error::config("points", "need at least two abscissae"));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::config("points", "abscissae must be strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("values", "values must be finite"));
        }
        Ok(Grid1D { points, values })
    }

    /// Tabulate `f` at `n` evenly spaced points.
    pub fn tabulate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Result<Self> {
        let points = super::linspace(lo, hi, n);
        let values = points.iter().map(|&x| f(x)).collect();
        Grid1D::new(points, values)
    }

    pub fn lo(&self) -> f64 {
        self.points[0]
    }

    pub fn hi(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalMinimum {
    pub location: f64,
    pub value: f64,
    /// Second-difference estimate of the curvature.
    pub curvature: f64,
    /// `false` for a minimum sitting on the grid boundary.
    pub interior: bool,
}

/// Golden-section search for a minimum of `f` on `[a, b]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Strict local minima of a tabulated curve.
///
/// When `f` is supplied each interior minimum is refined on the continuous
/// function: golden section on the neighbouring cells, then bisection on the
/// central-difference derivative to push `|f'|` down to rounding level.
/// Boundary minima are reported with `interior = false`.
pub fn local_minima(curve: &Grid1D, f: Option<&dyn Fn(f64) -> f64>, refine_tol: f64) -> Vec<LocalMinimum> {
    let xs = curve.points();
    let ys = curve.values();
    let n = xs.len();
    let mut out = Vec::new();
    if n < 3 {
        return out;
    }
    let curvature_at = |i: usize| -> f64 {
        let (h0, h1) = (xs[i] - xs[i - 1], xs[i + 1] - xs[i]);
        2.0 * (h0 * ys[i + 1] - (h0 + h1) * ys[i] + h1 * ys[i - 1]) / (h0 * h1 * (h0 + h1))
    };
    if ys[0] < ys[1] {
        out.push(LocalMinimum { location: xs[0], value: ys[0], curvature: curvature_at(1), interior: false });
    }
    let mut i = 1;
    while i < n - 1 {
        // Treat a flat run as one plateau and require strict rise on both ends.
        let mut j = i;
        while j + 1 < n - 1 && ys[j + 1] == ys[i] {
            j += 1;
        }
        if ys[i - 1] > ys[i] && ys[j + 1] > ys[j] {
            let k = (i + j) / 2;
            let mut m = LocalMinimum { location: xs[k], value: ys[k], curvature: curvature_at(k), interior: true };
            if let Some(f) = f {
                let x = golden_section(f, xs[i - 1], xs[j + 1], refine_tol);
                let x = polish(f, x, xs[i - 1], xs[j + 1]);
                let h = 1e-4 * (1.0 + x.abs()).min(xs[j + 1] - xs[i - 1]);
                m.location = x;
                m.value = f(x);
                m.curvature = super::second_diff(f, x, h);
            }
            out.push(m);
        }
        i = j + 1;
    }
    if ys[n - 1] < ys[n - 2] {
        out.push(LocalMinimum {
            location: xs[n - 1],
            value: ys[n - 1],
            curvature: curvature_at(n - 2),
            interior: false,
        });
    }
    out
}

fn polish(f: &dyn Fn(f64) -> f64, x: f64, lo: f64, hi: f64) -> f64 {
    const H: f64 = 1e-5;
    let d = |t: f64| super::central_diff(f, t, H);
    let w = ((hi - lo) * 1e-3).max(1e-9);
    let (mut a, mut b) = ((x - w).max(lo), (x + w).min(hi));
    let (mut da, db) = (d(a), d(b));
    if !(da < 0.0 && db > 0.0) {
        return x;
    }
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        let dm = d(m);
        if dm == 0.0 {
            return m;
        }
        if (dm < 0.0) == (da < 0.0) {
            a = m;
            da = dm;
        } else {
            b = m;
        }
    }
    let m = 0.5 * (a + b);
    if f(m) <= f(x) {
        m
    } else {
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parabola() {
        let g = Grid1D::tabulate(|q| q * q, -1.0, 1.0, 21).unwrap();
        let m = local_minima(&g, None, 1e-10);
        assert_eq!(m.len(), 1);
        assert!(m[0].interior && m[0].location.abs() < 1e-12);
        assert!((m[0].curvature - 2.0).abs() < 1e-9);
    }

    #[test]
    fn double_well_refined() {
        let f = |q: f64| q.powi(4) - q * q;
        let g = Grid1D::tabulate(f, -1.5, 1.5, 31).unwrap();
        let m = local_minima(&g, Some(&f), 1e-12);
        let interior: Vec<_> = m.iter().filter(|m| m.interior).collect();
        assert_eq!(interior.len(), 2);
        let r = 0.5_f64.sqrt();
        assert!((interior[0].location + r).abs() < 1e-7);
        assert!((interior[1].location - r).abs() < 1e-7);
        for m in interior {
            assert!((m.value + 0.25).abs() < 1e-12);
            assert!((m.curvature - 4.0).abs() < 1e-4);
        }
    }

    #[test]
    fn monotone_curve_has_boundary_minimum_only() {
        let g = Grid1D::tabulate(|q| q.exp(), 0.0, 1.0, 11).unwrap();
        let m = local_minima(&g, None, 1e-10);
        assert_eq!(m.len(), 1);
        assert!(!m[0].interior);
        assert_eq!(m[0].location, 0.0);
    }

    #[test]
    fn grid_validation() {
        assert!(Grid1D::new(vec![0.0, 0.0, 1.0], vec![1.0; 3]).is_err());
        assert!(Grid1D::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(Grid1D::new(vec![0.0, 1.0], vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn golden_section_finds_vertex() {
        let x = golden_section(|x| (x - 0.3).powi(2), -1.0, 2.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-9);
    }
}
