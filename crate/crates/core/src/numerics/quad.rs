use crate::{Error, Result};

/// Options for [`integrate_weighted_many`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    /// Relative tolerance per component.
    pub tol: f64,
    /// Number of equal panels the interval is split into before adaptive
    /// refinement. Sharply peaked weights need enough panels to be seen.
    pub initial_panels: usize,
    /// Maximum bisection depth per panel.
    pub max_depth: u32,
    /// Total integrand evaluation budget.
    pub max_evals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { tol: super::DEFAULT_QUAD_TOL, initial_panels: 64, max_depth: 40, max_evals: 2_000_000 }
    }
}

/// Result of a log-shifted weighted integral.
///
/// `values[k]` approximates `∫ f_k(q) exp(logweight(q) - log_shift) dq`, so
/// ratios of components are independent of `log_shift`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedIntegral<const K: usize> {
    pub values: [f64; K],
    pub error: [f64; K],
    pub log_shift: f64,
    pub evaluations: usize,
}

impl<const K: usize> WeightedIntegral<K> {
    /// `values[k] / values[0]`: a normalized average when component 0 is `f = 1`.
    pub fn ratio(&self, k: usize) -> f64 {
        self.values[k] / self.values[0]
    }
}

/// Scalar version of [`integrate_weighted_many`].
pub fn integrate_weighted(
    f: impl Fn(f64) -> f64,
    logweight: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<WeightedIntegral<1>> {
    let opts = QuadOptions { tol, ..QuadOptions::default() };
    integrate_weighted_many(|q| [f(q)], logweight, lo, hi, &opts)
}

struct Accum<const K: usize> {
    values: [f64; K],
    error: [f64; K],
    evals: usize,
    failed: bool,
}

/// Adaptive Simpson integration of several integrands sharing one weight.
///
/// The weight enters as `exp(logweight(q) - m)` where `m` is the maximum of
/// `logweight` located by a dense scan and a golden-section polish, so actions
/// hundreds of nats deep do not under- or overflow.
pub fn integrate_weighted_many<const K: usize>(
    f: impl Fn(f64) -> [f64; K],
    logweight: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    opts: &QuadOptions,
) -> Result<WeightedIntegral<K>> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::config("bounds", format!("need finite lo < hi, got [{lo}, {hi}]")));
    }
    let panels = opts.initial_panels.max(1);
    let h = (hi - lo) / panels as f64;

    // Locate the maximum of the log-weight on the panel grid (with midpoints).
    let mut best_x = lo;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=2 * panels {
        let x = lo + 0.5 * h * i as f64;
        let lw = logweight(x);
        if lw > best {
            best = lw;
            best_x = x;
        }
    }
    if !best.is_finite() {
        return Err(Error::config("logweight", "log-weight is not finite anywhere on the grid"));
    }
    let (a, b) = ((best_x - 0.5 * h).max(lo), (best_x + 0.5 * h).min(hi));
    let polished = super::golden_section(|x| -logweight(x), a, b, 1e-12 * (1.0 + best_x.abs()));
    let shift = best.max(logweight(polished));

    let g = |x: f64| -> [f64; K] {
        let w = (logweight(x) - shift).exp();
        let mut v = f(x);
        for c in v.iter_mut() {
            *c *= w;
        }
        v
    };

    // Coarse pass: Simpson on every panel, also used to set absolute targets.
    let mut nodes = Vec::with_capacity(panels);
    let mut scale = [0.0; K];
    let mut evals = 0;
    let mut left = g(lo);
    evals += 1;
    for i in 0..panels {
        let a = lo + h * i as f64;
        let b = if i + 1 == panels { hi } else { a + h };
        let m = 0.5 * (a + b);
        let fm = g(m);
        let fb = g(b);
        evals += 2;
        let whole = simpson(a, b, &left, &fm, &fb);
        for k in 0..K {
            scale[k] += whole[k].abs();
        }
        nodes.push((a, b, left, fm, fb, whole));
        left = fb;
    }

    let mut abs_tol = [0.0; K];
    for k in 0..K {
        abs_tol[k] = opts.tol * scale[k] + f64::MIN_POSITIVE;
    }
    let mut acc = Accum { values: [0.0; K], error: [0.0; K], evals, failed: false };
    let total_width = hi - lo;
    for (a, b, fa, fm, fb, whole) in nodes {
        let mut eps = [0.0; K];
        for k in 0..K {
            eps[k] = abs_tol[k] * (b - a) / total_width;
        }
        adapt(&g, a, b, fa, fm, fb, whole, eps, opts.max_depth, opts.max_evals, &mut acc);
    }

    if acc.failed {
        let worst =
            (0..K).max_by(|&i, &j| (acc.error[i] / abs_tol[i]).total_cmp(&(acc.error[j] / abs_tol[j]))).unwrap_or(0);
        return Err(Error::Quadrature { estimate: acc.values[worst], error_bound: acc.error[worst] });
    }
    Ok(WeightedIntegral { values: acc.values, error: acc.error, log_shift: shift, evaluations: acc.evals })
}

fn simpson<const K: usize>(a: f64, b: f64, fa: &[f64; K], fm: &[f64; K], fb: &[f64; K]) -> [f64; K] {
    let w = (b - a) / 6.0;
    let mut out = [0.0; K];
    for k in 0..K {
        out[k] = w * (fa[k] + 4.0 * fm[k] + fb[k]);
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn adapt<const K: usize>(
    g: &impl Fn(f64) -> [f64; K],
    a: f64,
    b: f64,
    fa: [f64; K],
    fm: [f64; K],
    fb: [f64; K],
    whole: [f64; K],
    eps: [f64; K],
    depth: u32,
    max_evals: usize,
    acc: &mut Accum<K>,
) {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = g(lm);
    let frm = g(rm);
    acc.evals += 2;
    let left = simpson(a, m, &fa, &flm, &fm);
    let right = simpson(m, b, &fm, &frm, &fb);

    let mut ok = true;
    for k in 0..K {
        let delta = left[k] + right[k] - whole[k];
        if delta.abs() > 15.0 * eps[k] {
            ok = false;
        }
    }
    if ok || depth == 0 || acc.evals >= max_evals {
        if !ok {
            acc.failed = true;
        }
        for k in 0..K {
            let delta = left[k] + right[k] - whole[k];
            // Richardson extrapolation of the two Simpson estimates.
            acc.values[k] += left[k] + right[k] + delta / 15.0;
            acc.error[k] += delta.abs() / 15.0;
        }
        return;
    }
    let mut half = [0.0; K];
    for k in 0..K {
        half[k] = 0.5 * eps[k];
    }
    adapt(g, a, m, fa, flm, fm, left, half, depth - 1, max_evals, acc);
    adapt(g, m, b, fm, frm, fb, right, half, depth - 1, max_evals, acc);
}
