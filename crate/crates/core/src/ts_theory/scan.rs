use serde::{Deserialize, Serialize};

use super::action::DiscrepancyTs;
use super::saddles::{classify_phase_ts, find_saddles_ts, SaddleSet};
use super::solver::{solve_bc_all, TsSolverOptions};
use crate::models::{EffectiveInteraction, TsConfig};
use crate::phase::PhaseLabel;
use crate::{Error, Result};

/// Learned components of the mean predictor, `(h1, h3) = (1 − b, ε − c)`.
pub fn predicted_components(disc: &DiscrepancyTs, cfg: &TsConfig) -> (f64, f64) {
    (1.0 - disc.b, cfg.eps - disc.c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanDirection {
    /// From the largest σ² (GP side) downwards.
    Decreasing,
    Increasing,
}

impl ScanDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            ScanDirection::Decreasing => "decreasing",
            ScanDirection::Increasing => "increasing",
        }
    }
}

/// One solution at one grid point of a σ² scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsScanRow {
    pub sigma2: f64,
    pub u: f64,
    pub b: f64,
    pub c: f64,
    pub h1: f64,
    pub h3: f64,
    pub phase: PhaseLabel,
    pub gap: Option<f64>,
    pub droplet_weight: f64,
    /// Index among the distinct solutions at this point, ordered by decreasing `b`.
    pub branch_id: usize,
    /// The solution continued from the previous grid point.
    pub tracked: bool,
    pub converged: bool,
    pub direction: ScanDirection,
    /// Gap of the action with `(b, c)` frozen at the last point without
    /// nontrivial minima, evaluated at this point's `u`.
    pub frozen_gap: Option<f64>,
    pub error: Option<String>,
}

impl TsScanRow {
    pub const CSV_HEADER: &'static str =
        "sigma2,u,b,c,h1,h3,phase,gap,droplet_weight,branch_id,tracked,converged,direction,frozen_gap";

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|g| format!("{g:.16e}")).unwrap_or_default();
        format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{:.16e},{},{},{},{},{}",
            self.sigma2,
            self.u,
            self.b,
            self.c,
            self.h1,
            self.h3,
            self.phase,
            opt(self.gap),
            self.droplet_weight,
            self.branch_id,
            self.tracked,
            self.converged,
            self.direction.as_str(),
            opt(self.frozen_gap),
        )
    }
}

fn ordered(grid: &[f64], dir: ScanDirection) -> Vec<f64> {
    let mut g = grid.to_vec();
    g.sort_by(f64::total_cmp);
    if dir == ScanDirection::Decreasing {
        g.reverse();
    }
    g
}

fn scan_direction(base: &TsConfig, grid: &[f64], dir: ScanDirection, opts: &TsSolverOptions) -> Vec<TsScanRow> {
    let mut rows = Vec::new();
    let mut prev: Option<DiscrepancyTs> = None;
    let mut frozen: Option<DiscrepancyTs> = None;
    for s2 in ordered(grid, dir) {
        let cfg = base.with_sigma2(s2);
        let u = cfg.effective_interaction();
        let extra: Vec<DiscrepancyTs> = prev.into_iter().collect();
        match solve_bc_all(&cfg, &extra, opts) {
            Ok(sols) => {
                let tracked = match prev {
                    Some(p) => (0..sols.len())
                        .min_by(|&i, &j| sols[i].disc.max_diff(&p).total_cmp(&sols[j].disc.max_diff(&p)))
                        .unwrap_or(0),
                    None => 0,
                };
                let mut point_saddles: Vec<SaddleSet> = Vec::new();
                for (k, sol) in sols.iter().enumerate() {
                    let saddles = find_saddles_ts(&sol.disc, &cfg, opts);
                    let report = classify_phase_ts(&saddles, opts.window);
                    let (h1, h3) = predicted_components(&sol.disc, &cfg);
                    let frozen_gap = match frozen {
                        Some(f) => find_saddles_ts(&f, &cfg, opts).global_gap,
                        None => saddles.global_gap,
                    };
                    rows.push(TsScanRow {
                        sigma2: s2,
                        u,
                        b: sol.disc.b,
                        c: sol.disc.c,
                        h1,
                        h3,
                        phase: report.phase,
                        gap: report.gap,
                        droplet_weight: report.droplet_weight,
                        branch_id: k,
                        tracked: k == tracked,
                        converged: sol.converged,
                        direction: dir,
                        frozen_gap,
                        error: None,
                    });
                    point_saddles.push(saddles);
                }
                let t = &sols[tracked];
                if point_saddles[tracked].global_gap.is_none() {
                    frozen = Some(t.disc);
                }
                prev = Some(t.disc);
            }
            Err(e) => rows.push(TsScanRow {
                sigma2: s2,
                u,
                b: f64::NAN,
                c: f64::NAN,
                h1: f64::NAN,
                h3: f64::NAN,
                phase: PhaseLabel::Gfl,
                gap: None,
                droplet_weight: f64::NAN,
                branch_id: 0,
                tracked: true,
                converged: false,
                direction: dir,
                frozen_gap: None,
                error: Some(e.to_string()),
            }),
        }
    }
    rows
}

/// σ² scan with continuation in the requested directions.
///
/// Each direction is a sequential warm-started chain; directions run in
/// parallel. Rows are returned direction by direction in scan order.
pub fn scan_sigma_ts(
    cfg: &TsConfig,
    grid: &[f64],
    directions: &[ScanDirection],
    opts: &TsSolverOptions,
) -> Vec<TsScanRow> {
    use rayon::prelude::*;
    let parts: Vec<Vec<TsScanRow>> = directions.par_iter().map(|&d| scan_direction(cfg, grid, d, opts)).collect();
    parts.into_iter().flatten().collect()
}

/// Grid points where the tracked solutions of the two directions disagree.
pub fn hysteresis_points(rows: &[TsScanRow], tol: f64) -> Vec<f64> {
    let tracked = |d: ScanDirection| rows.iter().filter(move |r| r.tracked && r.direction == d);
    let mut out = Vec::new();
    for down in tracked(ScanDirection::Decreasing) {
        if let Some(up) = tracked(ScanDirection::Increasing).find(|r| r.sigma2 == down.sigma2) {
            if (down.b - up.b).abs() > tol || (down.c - up.c).abs() > tol {
                out.push(down.sigma2);
            }
        }
    }
    out
}

/// Onset of nontrivial action minima along a decreasing-σ² scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub sigma2: f64,
    pub u: f64,
    /// Location of the positive nontrivial minimum at onset.
    pub q_star: f64,
    /// Its action relative to `S(0)`.
    pub gap: f64,
}

fn onset_probe(cfg: &TsConfig, warm: DiscrepancyTs, opts: &TsSolverOptions) -> Result<(DiscrepancyTs, SaddleSet)> {
    let sols = solve_bc_all(cfg, &[warm], opts)?;
    let best = sols
        .iter()
        .min_by(|a, b| a.disc.max_diff(&warm).total_cmp(&b.disc.max_diff(&warm)))
        .expect("solve_bc_all returns at least one solution");
    Ok((best.disc, find_saddles_ts(&best.disc, cfg, opts)))
}

/// `u` at the largest σ² in `[lo, hi]` where the self-consistent action first
/// develops a nontrivial minimum, located by a coarse scan of `steps` points
/// and bisection to relative width `1e-5`.
pub fn critical_u(cfg: &TsConfig, lo: f64, hi: f64, steps: usize, opts: &TsSolverOptions) -> Result<CriticalPoint> {
    if !(lo > 0.0 && lo < hi) || steps < 2 {
        return Err(Error::config("range", format!("need 0 < lo < hi and ≥ 2 steps, got [{lo}, {hi}] / {steps}")));
    }
    let grid: Vec<f64> = (0..steps).map(|i| hi * (lo / hi).powf(i as f64 / (steps - 1) as f64)).collect();
    let mut warm = DiscrepancyTs::gp_start(cfg.eps);
    let mut above: Option<(f64, DiscrepancyTs)> = None;
    for &s2 in &grid {
        let c = cfg.with_sigma2(s2);
        let (disc, saddles) = onset_probe(&c, warm, opts)?;
        if saddles.global_gap.is_some() {
            let Some((mut s_hi, mut d_hi)) = above else {
                return Err(Error::NoTransition { lo, hi });
            };
            let (mut s_lo, mut sad_lo) = (s2, saddles);
            while (s_hi - s_lo) > 1e-5 * s_hi {
                let mid = 0.5 * (s_hi + s_lo);
                let cm = cfg.with_sigma2(mid);
                let (dm, sm) = onset_probe(&cm, d_hi, opts)?;
                if sm.global_gap.is_some() {
                    (s_lo, sad_lo) = (mid, sm);
                } else {
                    (s_hi, d_hi) = (mid, dm);
                }
            }
            let q_star = sad_lo.nontrivial().map(|m| m.location.abs()).fold(0.0, f64::max);
            let cfg_lo = cfg.with_sigma2(s_lo);
            return Ok(CriticalPoint {
                sigma2: s_lo,
                u: cfg_lo.effective_interaction(),
                q_star,
                gap: sad_lo.global_gap.unwrap_or(f64::NAN),
            });
        }
        above = Some((s2, disc));
        warm = disc;
    }
    Err(Error::NoTransition { lo, hi })
}
