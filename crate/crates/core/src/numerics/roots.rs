use serde::{Deserialize, Serialize};

/// A refined root of a scalar function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Root {
    pub location: f64,
    pub residual: f64,
    pub bracket: (f64, f64),
    /// Found by the tangency refinement rather than by a sign change.
    pub tangent: bool,
}

/// All roots located on an interval, in increasing order.
///
/// Sign changes across a jump discontinuity are kept apart in
/// `discontinuities`: they bracket no root even though bisection converges.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RootSet {
    pub roots: Vec<Root>,
    pub discontinuities: Vec<(f64, f64)>,
}

impl RootSet {
    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn locations(&self) -> Vec<f64> {
        self.roots.iter().map(|r| r.location).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    /// Bracket width at which bisection stops.
    pub x_tol: f64,
    /// Residual a root must satisfy to be reported.
    pub residual_tol: f64,
    /// Local refinement depth for tangency search around scan minima of |g|.
    pub tangency_levels: u32,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions { x_tol: 1e-14, residual_tol: super::DEFAULT_ROOT_RESIDUAL, tangency_levels: 40 }
    }
}

/// Scan `n_scan` subintervals of `[lo, hi]` for sign changes and bisect each.
///
/// Double roots produce no sign change. Every local minimum of `|g|` on the
/// scan grid is therefore refined by repeatedly doubling the resolution around
/// it; a tangency is reported when the residual drops below tolerance.
pub fn find_roots(g: impl Fn(f64) -> f64, lo: f64, hi: f64, n_scan: usize, opts: &RootOptions) -> RootSet {
    let mut set = RootSet::default();
    if !(lo < hi) || n_scan == 0 {
        return set;
    }
    let xs = super::linspace(lo, hi, n_scan + 1);
    let gs: Vec<f64> = xs.iter().map(|&x| g(x)).collect();

    for i in 0..n_scan {
        let (a, b) = (xs[i], xs[i + 1]);
        let (ga, gb) = (gs[i], gs[i + 1]);
        if ga == 0.0 {
            push_unique(&mut set, Root { location: a, residual: 0.0, bracket: (a, a), tangent: false }, opts);
            continue;
        }
        if i + 1 == n_scan && gb == 0.0 {
            push_unique(&mut set, Root { location: b, residual: 0.0, bracket: (b, b), tangent: false }, opts);
        }
        if ga * gb < 0.0 {
            let (x, bracket) = bisect(&g, a, b, ga, opts.x_tol);
            let r = g(x);
            if r.abs() <= opts.residual_tol {
                push_unique(&mut set, Root { location: x, residual: r, bracket, tangent: false }, opts);
            } else {
                set.discontinuities.push(bracket);
            }
        }
    }

    for i in 1..n_scan {
        let (prev, cur, next) = (gs[i - 1].abs(), gs[i].abs(), gs[i + 1].abs());
        let same_sign = gs[i - 1] * gs[i] > 0.0 && gs[i] * gs[i + 1] > 0.0;
        if same_sign && cur <= prev && cur <= next {
            if let Some(root) = refine_tangency(&g, xs[i - 1], xs[i + 1], opts) {
                push_unique(&mut set, root, opts);
            }
        }
    }
    set.roots.sort_by(|a, b| a.location.total_cmp(&b.location));
    set
}

fn push_unique(set: &mut RootSet, root: Root, opts: &RootOptions) {
    let dup = set
        .roots
        .iter()
        .any(|r| (r.location - root.location).abs() <= 10.0 * opts.x_tol.max(1e-12 * root.location.abs()));
    if !dup {
        set.roots.push(root);
    }
}

fn bisect(g: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut ga: f64, x_tol: f64) -> (f64, (f64, f64)) {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if b - a <= x_tol || m == a || m == b {
            break;
        }
        let gm = g(m);
        if gm == 0.0 {
            return (m, (a, b));
        }
        if ga * gm < 0.0 {
            b = m;
        } else {
            a = m;
            ga = gm;
        }
    }
    let m = 0.5 * (a + b);
    (m, (a, b))
}

fn refine_tangency(g: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, opts: &RootOptions) -> Option<Root> {
    const SUB: usize = 8;
    for _ in 0..opts.tangency_levels {
        let xs = super::linspace(a, b, SUB + 1);
        let gs: Vec<f64> = xs.iter().map(|&x| g(x)).collect();
        let (k, &gk) = gs.iter().enumerate().min_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))?;
        if gk.abs() <= opts.residual_tol {
            return Some(Root {
                location: xs[k],
                residual: gk,
                bracket: (xs[k.saturating_sub(1)], xs[(k + 1).min(SUB)]),
                tangent: true,
            });
        }
        // A sign change inside the window means two close simple roots;
        // the outer scan will not see them, so bisect here.
        if let Some(j) = (0..SUB).find(|&j| gs[j] * gs[j + 1] < 0.0) {
            let (x, bracket) = bisect(g, xs[j], xs[j + 1], gs[j], opts.x_tol);
            let r = g(x);
            return (r.abs() <= opts.residual_tol).then_some(Root {
                location: x,
                residual: r,
                bracket,
                tangent: false,
            });
        }
        a = xs[k.saturating_sub(1)];
        b = xs[(k + 1).min(SUB)];
        if b - a <= opts.x_tol {
            break;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn opts() -> RootOptions {
        RootOptions::default()
    }

    #[test]
    fn linear_root() {
        let set = find_roots(|x| x - 0.5, 0.0, 1.0, 10, &opts());
        assert_eq!(set.len(), 1);
        assert!((set.roots[0].location - 0.5).abs() < 1e-12);
    }

    #[test]
    fn two_roots() {
        let set = find_roots(|x| (x - 0.25) * (x - 0.75), 0.0, 1.0, 7, &opts());
        let locs = set.locations();
        assert_eq!(locs.len(), 2);
        assert!((locs[0] - 0.25).abs() < 1e-9 && (locs[1] - 0.75).abs() < 1e-9);
    }

    #[test]
    fn tangency_triggers_refinement() {
        let set = find_roots(|x| (x - 0.5) * (x - 0.5), 0.0, 1.0, 7, &opts());
        assert_eq!(set.len(), 1);
        let r = set.roots[0];
        assert!(r.tangent);
        assert!(r.residual.abs() <= 1e-10);
        assert!((r.location - 0.5).abs() < 1e-5);
    }

    #[test]
    fn jump_is_not_a_root() {
        let set = find_roots(|x| if x < 0.3 { -1.0 } else { 1.0 }, 0.0, 1.0, 10, &opts());
        assert!(set.is_empty());
        assert_eq!(set.discontinuities.len(), 1);
    }

    #[test]
    fn no_roots_is_valid() {
        assert!(find_roots(|x| x * x + 1.0, -2.0, 2.0, 50, &opts()).is_empty());
    }

    fn dense_count(c: &[f64], lo: f64, hi: f64, n: usize) -> usize {
        let p = |x: f64| c.iter().fold(1.0, |acc, r| acc * (x - r));
        let xs = crate::numerics::linspace(lo, hi, n + 1);
        xs.windows(2).filter(|w| p(w[0]) * p(w[1]) < 0.0).count()
    }

    proptest! {
        #[test]
        fn matches_dense_scan(mut rs in proptest::collection::vec(-0.95f64..0.95, 1..5)) {
            rs.sort_by(f64::total_cmp);
            // keep roots separated by more than the coarse scan
            rs.dedup_by(|a, b| (*a - *b).abs() < 0.05);
            let p = |x: f64| rs.iter().fold(1.0, |acc, r| acc * (x - r));
            let set = find_roots(p, -1.0, 1.0, 80, &RootOptions { residual_tol: 1e-12, ..RootOptions::default() });
            let dense = dense_count(&rs, -1.0, 1.0, 800);
            prop_assert!(set.len() >= dense);
            for r in &set.roots {
                prop_assert!(rs.iter().any(|t| (t - r.location).abs() < 1e-6));
            }
        }
    }
}
