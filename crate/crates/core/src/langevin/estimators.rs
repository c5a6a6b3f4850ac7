use std::f64::consts::PI;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::ensemble::{Ensemble, ModEnsemble, TsEnsemble};
use crate::models::{hermite1, hermite3};
use crate::{Error, Result};

/// Number of disjoint member subsets behind every histogram error bar.
pub const HISTOGRAM_SUBSETS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapHistogram {
    /// `n_bins + 1` edges over `Φ = w·w*`.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// `−log p̂` per bin; `None` for empty bins.
    pub neg_log_p: Vec<Option<f64>>,
    /// Standard error of `−log p̂` from the member subsets; `None` when any
    /// subset has an empty bin.
    pub stderr: Vec<Option<f64>>,
    pub total: usize,
}

impl OverlapHistogram {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lo,hi,center,count,neg_log_p,stderr,empty\n");
        for (i, c) in self.centers().into_iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                fmt(self.edges[i]),
                fmt(self.edges[i + 1]),
                fmt(c),
                self.counts[i],
                self.neg_log_p[i].map(fmt).unwrap_or_default(),
                self.stderr[i].map(fmt).unwrap_or_default(),
                self.counts[i] == 0
            ));
        }
        out
    }
}

pub(crate) fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Teacher overlaps of every neuron in every recorded network, grouped by member.
fn overlaps_by_member(ens: &TsEnsemble) -> Result<Vec<Vec<f64>>> {
    let teacher = ens.teacher.as_ref().ok_or_else(|| Error::Checkpoint("ensemble has no teacher".into()))?;
    Ok(ens
        .members
        .iter()
        .map(|m| {
            let nets: Vec<_> = if ens.spec.keep_snapshots && !m.snapshots.is_empty() {
                m.snapshots.iter().collect()
            } else {
                vec![&m.net]
            };
            nets.into_iter().flat_map(|n| n.input_weights.dot(teacher).to_vec()).collect()
        })
        .collect())
}

fn neg_log_density(count: usize, total: usize, width: f64) -> Option<f64> {
    (count > 0 && total > 0).then(|| -((count as f64) / (total as f64 * width)).ln())
}

/// Histogram of `Φ = w_i·w*` pooled over neurons and members.
///
/// With `half_range = None` the bins cover every observed overlap.
pub fn overlap_histogram(ens: &TsEnsemble, n_bins: usize, half_range: Option<f64>) -> Result<OverlapHistogram> {
    if n_bins == 0 {
        return Err(Error::config("n_bins", "must be at least 1"));
    }
    let groups = overlaps_by_member(ens)?;
    let observed = groups.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
    let r = half_range.unwrap_or(observed * (1.0 + 1e-9)).max(f64::MIN_POSITIVE);
    let width = 2.0 * r / n_bins as f64;
    let edges: Vec<f64> = (0..=n_bins).map(|i| -r + width * i as f64).collect();
    let bin = |v: f64| -> Option<usize> {
        if v < -r || v > r {
            return None;
        }
        Some((((v + r) / width) as usize).min(n_bins - 1))
    };
    let mut counts = vec![0usize; n_bins];
    let mut subset_counts = vec![vec![0usize; n_bins]; HISTOGRAM_SUBSETS];
    let mut subset_totals = [0usize; HISTOGRAM_SUBSETS];
    let mut total = 0;
    for (k, g) in groups.iter().enumerate() {
        let s = k % HISTOGRAM_SUBSETS;
        for &v in g {
            total += 1;
            subset_totals[s] += 1;
            if let Some(b) = bin(v) {
                counts[b] += 1;
                subset_counts[s][b] += 1;
            }
        }
    }
    let neg_log_p = counts.iter().map(|&c| neg_log_density(c, total, width)).collect();
    let used: Vec<usize> = (0..HISTOGRAM_SUBSETS).filter(|&s| subset_totals[s] > 0).collect();
    let stderr = (0..n_bins)
        .map(|b| {
            if used.len() < 2 {
                return None;
            }
            let vals: Option<Vec<f64>> =
                used.iter().map(|&s| neg_log_density(subset_counts[s][b], subset_totals[s], width)).collect();
            vals.map(|v| std_err(&v))
        })
        .collect();
    Ok(OverlapHistogram { edges, counts, neg_log_p, stderr, total })
}

/// Fraction of pooled overlaps with `|Φ| > threshold`, and the raw count.
pub fn tail_mass(ens: &TsEnsemble, threshold: f64) -> Result<(f64, usize)> {
    let groups = overlaps_by_member(ens)?;
    let total: usize = groups.iter().map(Vec::len).sum();
    let count = groups.iter().flatten().filter(|v| v.abs() > threshold).count();
    Ok((if total == 0 { 0.0 } else { count as f64 / total as f64 }, count))
}

/// `P(|Φ| > threshold)` for `Φ ~ N(0, variance)`.
pub fn gaussian_tail(threshold: f64, variance: f64) -> f64 {
    libm::erfc(threshold / (2.0 * variance).sqrt())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_err(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(v);
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Component {
    H1,
    H3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub members: usize,
}

/// Least-squares coefficients of `outputs` on `{H₁(t), ε H₃(t)}`, so the
/// teacher itself projects to `(1, 1)`. For `ε = 0` the second basis
/// function is `H₃` alone.
pub fn project_outputs(outputs: &[f64], t: &[f64], eps: f64) -> Result<[f64; 2]> {
    if outputs.len() != t.len() {
        return Err(Error::Shape { expected: t.len(), got: outputs.len() });
    }
    let scale = if eps == 0.0 { 1.0 } else { eps };
    let (mut g11, mut g12, mut g22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&f, &x) in outputs.iter().zip(t) {
        let e1 = hermite1(x);
        let e3 = scale * hermite3(x);
        g11 += e1 * e1;
        g12 += e1 * e3;
        g22 += e3 * e3;
        r1 += e1 * f;
        r2 += e3 * f;
    }
    let det = g11 * g22 - g12 * g12;
    if !(det > 0.0) {
        return Err(Error::Singular("test set too small to separate H1 and H3".into()));
    }
    Ok([(g22 * r1 - g12 * r2) / det, (g11 * r2 - g12 * r1) / det])
}

/// Projection of each member's posterior-mean test output; mean and standard
/// error across members.
pub fn output_projection(ens: &TsEnsemble, component: Component) -> Result<ProjectionEstimate> {
    let test = ens.test_set()?;
    let t = test.projections().to_vec();
    let k = match component {
        Component::H1 => 0,
        Component::H3 => 1,
    };
    let vals: Vec<f64> = ens
        .members
        .iter()
        .filter_map(|m| m.mean_output())
        .map(|o| project_outputs(&o, &t, ens.config.eps).map(|p| p[k]))
        .collect::<Result<_>>()?;
    if vals.is_empty() {
        return Err(Error::config("n_steps", "no member has recorded samples"));
    }
    Ok(ProjectionEstimate { mean: mean(&vals), stderr: std_err(&vals), members: vals.len() })
}

/// Train and test losses per member and their ensemble mean, as CSV.
pub fn loss_track<N, C>(ens: &Ensemble<N, C>) -> String {
    let mut out = String::from("step,member,train,test\n");
    let mut steps: Vec<usize> = ens.members.iter().flat_map(|m| m.losses.iter().map(|l| l.step)).collect();
    steps.sort_unstable();
    steps.dedup();
    for m in &ens.members {
        for l in &m.losses {
            out.push_str(&format!("{},{},{},{}\n", l.step, m.member, fmt(l.train), fmt(l.test)));
        }
    }
    for s in steps {
        let at: Vec<_> = ens.members.iter().filter_map(|m| m.losses.iter().find(|l| l.step == s)).collect();
        let n = at.len() as f64;
        let tr = at.iter().map(|l| l.train).sum::<f64>() / n;
        let te = at.iter().map(|l| l.test).sum::<f64>() / n;
        out.push_str(&format!("{s},mean,{},{}\n", fmt(tr), fmt(te)));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMoment {
    pub layer: String,
    pub expected: f64,
    pub estimate: f64,
    pub stderr: f64,
}

impl LayerMoment {
    /// Deviation from the expectation in standard errors.
    pub fn z(&self) -> f64 {
        (self.estimate - self.expected) / self.stderr
    }

    pub fn within(&self, sigmas: f64) -> bool {
        self.z().abs() <= sigmas
    }
}

/// Time-averaged mean squared weight per layer; errors from member scatter.
pub fn prior_moments<N, C>(ens: &Ensemble<N, C>, expected: [f64; 2]) -> Result<[LayerMoment; 2]> {
    let per_member: Vec<[f64; 2]> = ens
        .members
        .iter()
        .filter(|m| !m.moments.is_empty())
        .map(|m| {
            let n = m.moments.len() as f64;
            let s = m.moments.iter().fold([0.0, 0.0], |a, v| [a[0] + v[0], a[1] + v[1]]);
            [s[0] / n, s[1] / n]
        })
        .collect();
    if per_member.len() < 2 {
        return Err(Error::config("init_seeds", "moment errors need at least two members with recorded samples"));
    }
    let names = ["input", "readout"];
    Ok(std::array::from_fn(|l| {
        let v: Vec<f64> = per_member.iter().map(|m| m[l]).collect();
        LayerMoment { layer: names[l].into(), expected: expected[l], estimate: mean(&v), stderr: std_err(&v) }
    }))
}

/// Integrated autocorrelation time with Sokal's self-consistent window (c = 5).
pub fn integrated_autocorr_time(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return 1.0;
    }
    let m = mean(series);
    let c0 = series.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for lag in 1..n / 2 {
        let c = (0..n - lag).map(|i| (series[i] - m) * (series[i + lag] - m)).sum::<f64>() / n as f64;
        tau += 2.0 * c / c0;
        if lag as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

/// Members whose recorded traces are shorter than 50 autocorrelation times.
pub fn equilibration_warnings<N, C>(ens: &Ensemble<N, C>) -> Vec<String> {
    let mut out = Vec::new();
    for m in &ens.members {
        for l in 0..2 {
            let trace: Vec<f64> = m.moments.iter().map(|v| v[l]).collect();
            let tau = integrated_autocorr_time(&trace);
            if (trace.len() as f64) < 50.0 * tau {
                out.push(format!(
                    "member {}: layer {l} trace has {} records but τ_int ≈ {tau:.1} records",
                    m.member,
                    trace.len()
                ));
            }
        }
    }
    out
}

/// Per-mode product `|w_k|²|v_k|²` of one neuron, `k = 0..P`, where `w` and
/// `v` are its first and second input blocks.
pub fn neuron_mode_power(w: &[f64], v: &[f64]) -> Vec<f64> {
    let p = w.len();
    let dft = |x: &[f64], k: usize| -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (n, &xn) in x.iter().enumerate() {
            let th = -2.0 * PI * ((k * n) % p) as f64 / p as f64;
            re += xn * th.cos();
            im += xn * th.sin();
        }
        re * re + im * im
    };
    (0..p).map(|k| dft(w, k) * dft(v, k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpectrum {
    pub p: usize,
    /// Mean of `|w_k|²|v_k|²` over neurons and members, `k = 0..P`.
    pub power: Vec<f64>,
    /// Standard error of `power` across members.
    pub stderr: Vec<f64>,
    /// Per neuron: share of its `k ≥ 1` power carried by its strongest `±k` pair.
    pub top_fraction: Vec<f64>,
}

impl ModeSpectrum {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,power,stderr\n");
        for k in 0..self.p {
            out.push_str(&format!("{k},{},{}\n", fmt(self.power[k]), fmt(self.stderr[k])));
        }
        out
    }

    /// Fraction of neurons whose top mode pair exceeds `share` of their power.
    pub fn condensed_fraction(&self, share: f64) -> f64 {
        if self.top_fraction.is_empty() {
            return 0.0;
        }
        self.top_fraction.iter().filter(|&&f| f > share).count() as f64 / self.top_fraction.len() as f64
    }
}

pub fn top_pair_fraction(power: &[f64]) -> f64 {
    let p = power.len();
    let total: f64 = power.iter().skip(1).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let best = (1..=p / 2).map(|k| power[k] + if p - k != k { power[p - k] } else { 0.0 }).fold(0.0, f64::max);
    best / total
}

pub fn mod_overlap_spectrum(ens: &ModEnsemble) -> Result<ModeSpectrum> {
    let p = ens.config.p;
    let mut member_means = Vec::new();
    let mut top_fraction = Vec::new();
    for m in &ens.members {
        let nets: Vec<_> = if ens.spec.keep_snapshots && !m.snapshots.is_empty() {
            m.snapshots.iter().collect()
        } else {
            vec![&m.net]
        };
        let mut acc = Array1::<f64>::zeros(p);
        let mut count = 0.0;
        for net in nets {
            for row in net.input_weights.rows() {
                let row = row.to_vec();
                let pw = neuron_mode_power(&row[..p], &row[p..]);
                top_fraction.push(top_pair_fraction(&pw));
                acc += &Array1::from(pw);
                count += 1.0;
            }
        }
        if count > 0.0 {
            member_means.push(acc / count);
        }
    }
    if member_means.is_empty() {
        return Err(Error::config("init_seeds", "ensemble has no members"));
    }
    let power = (0..p).map(|k| mean(&member_means.iter().map(|v| v[k]).collect::<Vec<_>>())).collect();
    let stderr = (0..p).map(|k| std_err(&member_means.iter().map(|v| v[k]).collect::<Vec<_>>())).collect();
    Ok(ModeSpectrum { p, power, stderr, top_fraction })
}
