use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct FixedPointOptions {
    /// Initial mixing weight in `(0, 1]`.
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Halve the damping whenever the step length grows; never increase it.
    pub adaptive: bool,
    /// Abort when any component exceeds this magnitude.
    pub guard: f64,
    /// Number of trailing iterates kept for diagnostics.
    pub tail_len: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            damping: super::DEFAULT_DAMPING,
            tol: super::DEFAULT_FP_TOL,
            max_iter: super::DEFAULT_MAX_ITER,
            adaptive: false,
            guard: 1e12,
            tail_len: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointOutcome {
    pub x: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// `‖x − map(x)‖∞` at the returned point.
    pub residual: f64,
    /// `‖Δx‖∞` of each iteration.
    pub steps: Vec<f64>,
}

/// Damped iteration `x ← (1−d)x + d·map(x)` until `‖Δx‖∞ < tol`.
///
/// Non-convergence within `max_iter` is returned with `converged = false`.
/// Escaping the guard or producing non-finite values is an error carrying the
/// last few iterates.
pub fn fixed_point<F>(map: F, x0: &[f64], opts: &FixedPointOptions) -> Result<FixedPointOutcome>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::config("damping", format!("must lie in (0, 1], got {}", opts.damping)));
    }
    let mut x = x0.to_vec();
    let mut damping = opts.damping;
    let mut tail: Vec<Vec<f64>> = Vec::with_capacity(opts.tail_len);
    let mut steps = Vec::new();
    let mut last_step = f64::INFINITY;
    let mut mx = map(&x)?;
    for it in 1..=opts.max_iter {
        if mx.len() != x.len() {
            return Err(Error::Shape { expected: x.len(), got: mx.len() });
        }
        let mut step = 0.0_f64;
        let next: Vec<f64> = x
            .iter()
            .zip(&mx)
            .map(|(&xi, &mi)| {
                let v = (1.0 - damping) * xi + damping * mi;
                step = step.max((v - xi).abs());
                v
            })
            .collect();
        steps.push(step);
        if tail.len() == opts.tail_len.max(1) {
            tail.remove(0);
        }
        tail.push(next.clone());
        if next.iter().any(|v| !v.is_finite() || v.abs() > opts.guard) {
            return Err(Error::Diverged { iterations: it, residual: step, tail });
        }
        if opts.adaptive && step > last_step {
            damping = (0.5 * damping).max(1e-6);
        }
        last_step = step;
        x = next;
        mx = map(&x)?;
        if step < opts.tol {
            let residual = x.iter().zip(&mx).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            return Ok(FixedPointOutcome { x, converged: true, iterations: it, residual, steps });
        }
    }
    let residual = x.iter().zip(&mx).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(FixedPointOutcome { x, converged: false, iterations: opts.max_iter, residual, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar(f: impl Fn(f64) -> f64) -> impl Fn(&[f64]) -> Result<Vec<f64>> {
        move |x: &[f64]| Ok(vec![f(x[0])])
    }

    #[test]
    fn identity_converges_immediately() {
        let out = fixed_point(|x: &[f64]| Ok(x.to_vec()), &[3.0, -1.0], &FixedPointOptions::default()).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
        assert_eq!(out.x, vec![3.0, -1.0]);
    }

    #[test]
    fn dottie_number() {
        let opts = FixedPointOptions { damping: 1.0, tol: 1e-12, max_iter: 1000, ..Default::default() };
        let out = fixed_point(scalar(f64::cos), &[0.0], &opts).unwrap();
        assert!(out.converged);
        // direct iteration oracle
        let mut x = 0.0_f64;
        for _ in 0..2000 {
            x = x.cos();
        }
        assert!((out.x[0] - x).abs() < 1e-10);
        assert!((out.x[0] - 0.739085).abs() < 1e-6);
    }

    #[test]
    fn steep_map_needs_damping() {
        let map = scalar(|x| -1.5 * x + 1.0);
        let full = FixedPointOptions { damping: 1.0, max_iter: 200, ..Default::default() };
        match fixed_point(&map, &[0.0], &full) {
            Ok(out) => assert!(!out.converged),
            Err(Error::Diverged { tail, .. }) => assert!(!tail.is_empty()),
            Err(e) => panic!("{e}"),
        }
        // iteration factor 1 − 0.3·2.5 = 0.25
        let damped = FixedPointOptions { damping: 0.3, ..Default::default() };
        let out = fixed_point(&map, &[0.0], &damped).unwrap();
        assert!(out.converged);
        assert!((out.x[0] - 0.4).abs() < 1e-7);
    }

    #[test]
    fn adaptive_damping_rescues_full_step() {
        let map = scalar(|x| -1.5 * x + 1.0);
        let opts = FixedPointOptions { damping: 1.0, adaptive: true, ..Default::default() };
        let out = fixed_point(&map, &[0.0], &opts).unwrap();
        assert!(out.converged);
        assert!((out.x[0] - 0.4).abs() < 1e-7);
    }

    #[test]
    fn guard_aborts_with_tail() {
        let opts = FixedPointOptions { damping: 1.0, guard: 1e6, ..Default::default() };
        let err = fixed_point(scalar(|x| 3.0 * x + 1.0), &[1.0], &opts).unwrap_err();
        match err {
            Error::Diverged { tail, iterations, .. } => {
                assert!(iterations > 5);
                assert!(!tail.is_empty());
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn rejects_bad_damping() {
        let opts = FixedPointOptions { damping: 0.0, ..Default::default() };
        assert!(fixed_point(scalar(|x| x), &[0.0], &opts).is_err());
    }

    proptest! {
        #[test]
        fn damping_preserves_fixed_points(x0 in -3.0f64..3.0, d in 0.2f64..1.0) {
            // contraction: |k·cos x| ≤ 0.4
            let (k, c) = (0.4, 0.9);
            let map = scalar(move |x| k * x.sin() + c);
            let opts = FixedPointOptions { damping: d, tol: 1e-13, max_iter: 5000, ..Default::default() };
            let a = fixed_point(&map, &[x0], &opts).unwrap();
            let b = fixed_point(&map, &[x0], &FixedPointOptions { damping: 1.0, ..opts }).unwrap();
            prop_assert!(a.converged && b.converged);
            prop_assert!((a.x[0] - b.x[0]).abs() < 1e-10);
        }
    }
}
