use anyhow::{bail, Result};
use phaselab_core::mod_theory::{
    classify_at, fourier_action, phase_boundaries, refine_boundary, saddle_pair, scan_sigma_mod, solve_a, ModScanRow,
};
use phaselab_core::models::EffectiveInteraction;
use phaselab_core::ts_theory::{
    action_curve, critical_u, hysteresis_points, scan_sigma_ts, CriticalPoint, ScanDirection, TsScanRow,
};
use phaselab_core::PhaseLabel;
use serde::Serialize;

use super::{Outcome, Status};
use crate::config::{RunConfig, ScanVariable};
use crate::output::{f17, RunDir};

fn sigma2_grid(cfg: &RunConfig) -> Result<Vec<f64>> {
    let scan = cfg.scan_section()?;
    if scan.variable != ScanVariable::Sigma2 {
        bail!("scan.variable: theory scans run over sigma2");
    }
    scan.grid()
}

#[derive(Serialize)]
struct CriticalReport {
    point: CriticalPoint,
    /// How `u` is defined for this number.
    convention: &'static str,
    note: &'static str,
}

#[derive(Serialize)]
struct TsSummary {
    grid: Vec<f64>,
    directions: Vec<ScanDirection>,
    failed_points: usize,
    hysteresis_sigma2: Vec<f64>,
    largest_h3_jump: Option<H3Jump>,
    critical: Option<CriticalReport>,
    scaling_rounding: Option<phaselab_core::models::Rounding>,
}

#[derive(Serialize, Clone, Copy)]
pub struct H3Jump {
    pub direction: ScanDirection,
    pub sigma2_before: f64,
    pub sigma2_after: f64,
    pub h3_before: f64,
    pub h3_after: f64,
}

fn both_directions(dirs: &[ScanDirection]) -> bool {
    dirs.contains(&ScanDirection::Decreasing) && dirs.contains(&ScanDirection::Increasing)
}

/// Rows `(σ², decreasing, increasing)` of the order parameter on the two
/// continuation branches, ordered by σ².
fn hysteresis_csv(quantity: &str, mut pairs: Vec<(f64, f64, f64)>, tol: f64) -> String {
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out = format!("sigma2,{quantity}_decreasing,{quantity}_increasing,difference,hysteretic\n");
    for (s, down, up) in pairs {
        let diff = up - down;
        out.push_str(&format!("{},{},{},{},{}\n", f17(s), f17(down), f17(up), f17(diff), diff.abs() > tol));
    }
    out
}

/// Largest change of `h₃` between consecutive tracked rows of one direction.
pub fn largest_h3_jump(rows: &[TsScanRow], dir: ScanDirection) -> Option<H3Jump> {
    let tracked: Vec<&TsScanRow> =
        rows.iter().filter(|r| r.tracked && r.direction == dir && r.error.is_none()).collect();
    tracked
        .windows(2)
        .map(|w| H3Jump {
            direction: dir,
            sigma2_before: w[0].sigma2,
            sigma2_after: w[1].sigma2,
            h3_before: w[0].h3,
            h3_after: w[1].h3,
        })
        .max_by(|a, b| (a.h3_after - a.h3_before).abs().total_cmp(&(b.h3_after - b.h3_before).abs()))
}

/// Teacher-student σ² scan: `scan.csv`, one action curve per tracked point,
/// and `summary.json`.
pub fn ts_theory(cfg: &RunConfig, run: &mut RunDir) -> Result<Outcome> {
    let ts = cfg.ts_config()?;
    let grid = sigma2_grid(cfg)?;
    let scan = cfg.scan_section()?;
    let opts = cfg.solver.ts_options();
    let rows = scan_sigma_ts(&ts, &grid, &scan.directions, &opts);

    let mut csv = format!("{}\n", TsScanRow::CSV_HEADER);
    for r in &rows {
        csv.push_str(&r.to_csv());
        csv.push('\n');
    }
    run.write("scan.csv", csv)?;

    for dir in &scan.directions {
        let tracked = rows.iter().filter(|r| r.tracked && r.direction == *dir && r.error.is_none());
        for (i, r) in tracked.enumerate() {
            let disc = phaselab_core::ts_theory::DiscrepancyTs { b: r.b, c: r.c };
            let curve = action_curve(&disc, &ts.with_sigma2(r.sigma2), cfg.solver.q_max, cfg.solver.action_points);
            run.write(&format!("action/{}_{i:03}.csv", dir.as_str()), curve.to_csv())?;
        }
    }

    if both_directions(&scan.directions) {
        let ok = |r: &&TsScanRow| r.tracked && r.error.is_none();
        let pairs = rows
            .iter()
            .filter(|r| ok(r) && r.direction == ScanDirection::Decreasing)
            .filter_map(|down| {
                rows.iter()
                    .filter(ok)
                    .find(|r| r.direction == ScanDirection::Increasing && r.sigma2 == down.sigma2)
                    .map(|up| (down.sigma2, down.h3, up.h3))
            })
            .collect();
        run.write("hysteresis.csv", hysteresis_csv("h3", pairs, cfg.solver.hysteresis_tol))?;
    }

    let failed: Vec<&TsScanRow> = rows.iter().filter(|r| r.error.is_some() || !r.converged).collect();
    for r in &failed {
        run.note(format!(
            "σ² = {} ({}): {}",
            r.sigma2,
            r.direction.as_str(),
            r.error.clone().unwrap_or_else(|| "not converged".into())
        ));
    }
    let critical = match cfg.solver.critical {
        Some(c) => match critical_u(&ts, c.lo, c.hi, c.steps, &opts) {
            Ok(point) => Some(CriticalReport {
                point,
                convention: "u = n² σ_a² / (σ⁴ d N), with σ⁴ = (σ²)²",
                note: "onset of a nontrivial minimum of the self-consistent action along decreasing σ²; \
                       at finite d this sits above the large-scale limit of u_c",
            }),
            Err(e) => {
                run.note(format!("critical point: {e}"));
                None
            }
        },
        None => None,
    };
    let (_, rounding) = cfg.resolved_model()?;
    let summary = TsSummary {
        grid,
        directions: scan.directions.clone(),
        failed_points: failed.len(),
        hysteresis_sigma2: hysteresis_points(&rows, cfg.solver.hysteresis_tol),
        largest_h3_jump: largest_h3_jump(&rows, scan.directions[0]),
        critical,
        scaling_rounding: rounding,
    };
    run.write_json("summary.json", &summary)?;
    Ok(Outcome::new(if failed.is_empty() { Status::Clean } else { Status::Partial }))
}

#[derive(Serialize, Clone, Copy, Debug)]
pub struct Boundary {
    pub direction: ScanDirection,
    pub from: PhaseLabel,
    pub to: PhaseLabel,
    pub sigma2_before: f64,
    pub sigma2_after: f64,
    /// Bisected location.
    pub sigma2: f64,
    /// `|a|` on the far side of the boundary, within `refine_tol` of it.
    pub a_after: f64,
}

#[derive(Serialize)]
struct ModSummary {
    grid: Vec<f64>,
    directions: Vec<ScanDirection>,
    boundaries: Vec<Boundary>,
    hysteresis_sigma2: Vec<f64>,
    points_without_root: Vec<f64>,
    scaling_rounding: Option<phaselab_core::models::Rounding>,
}

fn nearest_root(
    cfg: &phaselab_core::ModConfig,
    opts: &phaselab_core::mod_theory::ModSolverOptions,
    a_near: f64,
) -> Option<f64> {
    solve_a(cfg, opts).locations().into_iter().min_by(|x, y| (x - a_near).abs().total_cmp(&(y - a_near).abs()))
}

/// Modular σ² scan: `scan.csv`, diagonal action curves per tracked point,
/// `boundaries.json` and `summary.json`.
pub fn mod_theory(cfg: &RunConfig, run: &mut RunDir) -> Result<Outcome> {
    let base = cfg.mod_config()?;
    let grid = sigma2_grid(cfg)?;
    let scan = cfg.scan_section()?;
    let opts = cfg.solver.mod_options();
    let rows = scan_sigma_mod(&base, &grid, &scan.directions, &opts);

    let mut csv = format!("{}\n", ModScanRow::CSV_HEADER);
    for r in &rows {
        csv.push_str(&r.to_csv());
        csv.push('\n');
    }
    run.write("scan.csv", csv)?;

    for dir in &scan.directions {
        let tracked = rows.iter().filter(|r| r.tracked && r.direction == *dir);
        for (i, r) in tracked.enumerate() {
            let c = base.with_sigma2(r.point.sigma2);
            let a = r.point.a_mag;
            let t_max = saddle_pair(a, &c).map(|s| 1.5 * s.w_plus2).unwrap_or(2.0 / c.gamma.sqrt());
            let n = cfg.solver.action_points;
            let mut out = String::from("w2,S\n");
            for k in 0..n {
                let t = t_max * k as f64 / (n - 1) as f64;
                out.push_str(&format!("{},{}\n", f17(t), f17(fourier_action(t, t, a, &c))));
            }
            run.write(&format!("action/{}_{i:03}.csv", dir.as_str()), out)?;
        }
    }

    let mut boundaries = Vec::new();
    for &dir in &scan.directions {
        for (s0, s1, from, to) in phase_boundaries(&rows, dir) {
            let a0 = rows
                .iter()
                .find(|r| r.tracked && r.direction == dir && r.point.sigma2 == s0)
                .map(|r| r.point.a_mag)
                .unwrap_or(1.0);
            let s = refine_boundary(&base, s0, s1, a0, cfg.solver.refine_tol, &opts);
            let step = cfg.solver.refine_tol * if s1 > s0 { 1.0 } else { -1.0 };
            let far = base.with_sigma2(s + step);
            let a_after = nearest_root(&far, &opts, a0).unwrap_or(f64::NAN);
            boundaries.push(Boundary {
                direction: dir,
                from,
                to,
                sigma2_before: s0,
                sigma2_after: s1,
                sigma2: s,
                a_after,
            });
        }
    }
    run.write_json("boundaries.json", &boundaries)?;

    let mut pairs = Vec::new();
    if both_directions(&scan.directions) {
        for down in rows.iter().filter(|r| r.tracked && r.direction == ScanDirection::Decreasing) {
            let up = rows
                .iter()
                .find(|r| r.tracked && r.direction == ScanDirection::Increasing && r.point.sigma2 == down.point.sigma2);
            if let Some(up) = up {
                pairs.push((down.point.sigma2, down.point.a_mag, up.point.a_mag));
            }
        }
        run.write("hysteresis.csv", hysteresis_csv("a_mag", pairs.clone(), cfg.solver.hysteresis_tol))?;
    }
    let hysteresis: Vec<f64> =
        pairs.iter().filter(|(_, d, u)| (u - d).abs() > cfg.solver.hysteresis_tol).map(|p| p.0).collect();
    let mut missing: Vec<f64> = grid.iter().copied().filter(|&s| !rows.iter().any(|r| r.point.sigma2 == s)).collect();
    missing.dedup();
    for s in &missing {
        run.note(format!("σ² = {s}: no root of the self-consistency equation found"));
    }
    let (_, rounding) = cfg.resolved_model()?;
    let partial = !missing.is_empty();
    run.write_json(
        "summary.json",
        &ModSummary {
            grid,
            directions: scan.directions.clone(),
            boundaries,
            hysteresis_sigma2: hysteresis,
            points_without_root: missing,
            scaling_rounding: rounding,
        },
    )?;
    Ok(Outcome::new(if partial { Status::Partial } else { Status::Clean }))
}

/// Phase, `|a|` and gap at one σ² on the branch nearest `a_near`.
pub fn mod_point(
    base: &phaselab_core::ModConfig,
    sigma2: f64,
    a_near: f64,
    window: f64,
) -> Option<(PhaseLabel, f64, f64)> {
    let c = base.with_sigma2(sigma2);
    let a = nearest_root(&c, &phaselab_core::mod_theory::ModSolverOptions { window, ..Default::default() }, a_near)?;
    let p = classify_at(&c, a, window);
    Some((p.report.phase, a, c.effective_interaction()))
}
