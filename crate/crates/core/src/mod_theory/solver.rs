use serde::{Deserialize, Serialize};

use super::action::{saddle_action, saddle_pair};
use crate::models::{EffectiveInteraction, ModConfig};
use crate::numerics::{find_roots, RootOptions, RootSet};
use crate::phase::{PhaseLabel, PhaseReport};
use crate::ts_theory::ScanDirection;

/// Magnitude of the discrepancy coefficient along the target.
///
/// The action depends on `a²` only, so the sign convention of the
/// self-consistency equation does not matter here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyMod {
    pub a_mag: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ModSolverOptions {
    /// Subintervals of `(0, 1]` scanned for sign changes of `g(a)`.
    pub n_scan: usize,
    pub roots: RootOptions,
    /// Degeneracy window, in nats.
    pub window: f64,
}

impl Default for ModSolverOptions {
    fn default() -> Self {
        ModSolverOptions { n_scan: 2000, roots: RootOptions::default(), window: 1.0 }
    }
}

/// Probability `4e^{-S}/(1 + 4e^{-S})` of the nontrivial saddles, in log space.
pub fn droplet_weight(s: f64) -> f64 {
    let z = 4f64.ln() - s;
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Target-mode eigenvalue `σ_a² · 4 w_+⁴ e^{-S} / (1 + 4e^{-S})`; zero without a saddle.
pub fn lambda_of_a(a_mag: f64, cfg: &ModConfig) -> f64 {
    match (saddle_pair(a_mag, cfg), saddle_action(a_mag, cfg)) {
        (Some(s), Some(act)) => cfg.sigma_a2 * s.w_plus2 * s.w_plus2 * droplet_weight(act),
        _ => 0.0,
    }
}

/// The `a` at which `U(a)² = γ`, where `λ` switches on; `None` beyond `a = 1`.
pub fn saddle_onset(cfg: &ModConfig) -> Option<f64> {
    let a = (cfg.gamma.sqrt() / cfg.effective_interaction()).sqrt();
    (a <= 1.0).then_some(a)
}

/// All roots of `g(a) = a − σ²/(λ(a) + σ²)` in `(0, 1]`.
pub fn solve_a(cfg: &ModConfig, opts: &ModSolverOptions) -> RootSet {
    let g = |a: f64| a - cfg.sigma2 / (lambda_of_a(a, cfg) + cfg.sigma2);
    let mut set = find_roots(g, 1e-9, 1.0, opts.n_scan, &opts.roots);
    // the jump at the saddle onset is exponentially small but still a sign change
    if let Some(a0) = saddle_onset(cfg) {
        set.discontinuities.retain(|&(lo, hi)| !(lo <= a0 && a0 <= hi));
    }
    set
}

/// Phase and diagnostics of one point on the physical branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModPhasePoint {
    pub sigma2: f64,
    pub u: f64,
    pub a_mag: f64,
    pub w_plus2: Option<f64>,
    /// `S_k(w_+², w_+²)` at the solved `a`.
    pub s_gap: Option<f64>,
    /// `S_k(w_+², w_+²)` at the GP discrepancy `a = 1`.
    pub s_gp: Option<f64>,
    pub report: PhaseReport,
}

/// Classify a point given its physical discrepancy.
///
/// GFL while the saddle action at the GP discrepancy `a = 1` is above the
/// window (or absent); GMFL-II once the self-consistent saddle action falls
/// below `−window`; GMFL-I in between.
pub fn classify_at(cfg: &ModConfig, a_mag: f64, window: f64) -> ModPhasePoint {
    let s_gp = saddle_action(1.0, cfg);
    let s_gap = saddle_action(a_mag, cfg);
    let phase = match (s_gp, s_gap) {
        (None, _) => PhaseLabel::Gfl,
        (Some(g), _) if g > window => PhaseLabel::Gfl,
        (_, Some(s)) if s < -window => PhaseLabel::GmflII,
        _ => PhaseLabel::GmflI,
    };
    let droplet = s_gap.map(droplet_weight).unwrap_or(0.0);
    ModPhasePoint {
        sigma2: cfg.sigma2,
        u: cfg.effective_interaction(),
        a_mag,
        w_plus2: saddle_pair(a_mag, cfg).map(|s| s.w_plus2),
        s_gap,
        s_gp,
        report: PhaseReport { phase, gap: s_gap, droplet_weight: droplet, components: vec![1.0 - a_mag] },
    }
}

/// Solve `a` and classify, taking the largest root (the branch connected to `a = 1`).
pub fn classify_phase_mod(cfg: &ModConfig, opts: &ModSolverOptions) -> Option<ModPhasePoint> {
    let roots = solve_a(cfg, opts);
    let a = roots.roots.iter().map(|r| r.location).fold(f64::NAN, f64::max);
    (!a.is_nan()).then(|| classify_at(cfg, a, opts.window))
}

/// One root at one grid point of a σ² scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModScanRow {
    pub point: ModPhasePoint,
    /// Index among all roots at this σ², by decreasing `a`.
    pub branch_id: usize,
    pub tracked: bool,
    pub direction: ScanDirection,
    pub n_roots: usize,
}

impl ModScanRow {
    pub const CSV_HEADER: &'static str =
        "sigma2,u,a_mag,branch_id,w_plus2,S_gap,S_gp,phase,droplet_weight,target_component,tracked,direction";

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|g| format!("{g:.16e}")).unwrap_or_default();
        let p = &self.point;
        format!(
            "{:.16e},{:.16e},{:.16e},{},{},{},{},{},{:.16e},{:.16e},{},{}",
            p.sigma2,
            p.u,
            p.a_mag,
            self.branch_id,
            opt(p.w_plus2),
            opt(p.s_gap),
            opt(p.s_gp),
            p.report.phase,
            p.report.droplet_weight,
            p.report.components[0],
            self.tracked,
            self.direction.as_str(),
        )
    }
}

fn scan_direction(base: &ModConfig, grid: &[f64], dir: ScanDirection, opts: &ModSolverOptions) -> Vec<ModScanRow> {
    let mut g = grid.to_vec();
    g.sort_by(f64::total_cmp);
    if dir == ScanDirection::Decreasing {
        g.reverse();
    }
    let mut rows = Vec::new();
    // continuation starts from the GP end for decreasing scans
    let mut prev: Option<f64> = (dir == ScanDirection::Decreasing).then_some(1.0);
    for s2 in g {
        let cfg = base.with_sigma2(s2);
        let mut roots = solve_a(&cfg, opts).locations();
        roots.sort_by(|a, b| b.total_cmp(a));
        let tracked = match prev {
            Some(p) => (0..roots.len()).min_by(|&i, &j| (roots[i] - p).abs().total_cmp(&(roots[j] - p).abs())),
            None => (!roots.is_empty()).then_some(0),
        };
        for (k, &a) in roots.iter().enumerate() {
            rows.push(ModScanRow {
                point: classify_at(&cfg, a, opts.window),
                branch_id: k,
                tracked: Some(k) == tracked,
                direction: dir,
                n_roots: roots.len(),
            });
        }
        if let Some(t) = tracked {
            prev = Some(roots[t]);
        }
    }
    rows
}

/// σ² scan with continuation along each requested direction.
pub fn scan_sigma_mod(
    cfg: &ModConfig,
    grid: &[f64],
    directions: &[ScanDirection],
    opts: &ModSolverOptions,
) -> Vec<ModScanRow> {
    use rayon::prelude::*;
    let parts: Vec<Vec<ModScanRow>> = directions.par_iter().map(|&d| scan_direction(cfg, grid, d, opts)).collect();
    parts.into_iter().flatten().collect()
}

/// Adjacent tracked rows of one direction whose labels differ: `(σ²_before, σ²_after, from, to)`.
pub fn phase_boundaries(rows: &[ModScanRow], dir: ScanDirection) -> Vec<(f64, f64, PhaseLabel, PhaseLabel)> {
    let tracked: Vec<&ModScanRow> = rows.iter().filter(|r| r.tracked && r.direction == dir).collect();
    tracked
        .windows(2)
        .filter(|w| w[0].point.report.phase != w[1].point.report.phase)
        .map(|w| (w[0].point.sigma2, w[1].point.sigma2, w[0].point.report.phase, w[1].point.report.phase))
        .collect()
}

/// Bisect a bracketed label change down to width `tol`, following the root
/// closest to `a_start` (the physical `a` at `s_start`).
pub fn refine_boundary(
    base: &ModConfig,
    s_start: f64,
    s_end: f64,
    a_start: f64,
    tol: f64,
    opts: &ModSolverOptions,
) -> f64 {
    let label_at = |s2: f64, a_near: f64| -> (PhaseLabel, f64) {
        let cfg = base.with_sigma2(s2);
        let roots = solve_a(&cfg, opts).locations();
        let a =
            roots.iter().copied().min_by(|x, y| (x - a_near).abs().total_cmp(&(y - a_near).abs())).unwrap_or(a_near);
        (classify_at(&cfg, a, opts.window).report.phase, a)
    };
    let (start_label, _) = label_at(s_start, a_start);
    let (mut s0, mut s1, mut a0) = (s_start, s_end, a_start);
    while (s1 - s0).abs() > tol {
        let mid = 0.5 * (s0 + s1);
        let (l, a) = label_at(mid, a0);
        if l == start_label {
            s0 = mid;
            a0 = a;
        } else {
            s1 = mid;
        }
    }
    0.5 * (s0 + s1)
}
