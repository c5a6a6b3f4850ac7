use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{check_positive, EffectiveInteraction};
use crate::numerics::stream_rng;
use crate::{Error, Result};

/// Teacher-student hyperparameters.
///
/// Each input weight has prior variance `sigma_w2 / d` and each readout weight
/// `sigma_a2 / width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TsConfig {
    pub n: usize,
    pub d: usize,
    #[serde(alias = "N")]
    pub width: usize,
    pub sigma2: f64,
    pub sigma_a2: f64,
    pub sigma_w2: f64,
    pub eps: f64,
}

impl TsConfig {
    /// Hyperparameters of the erf teacher-student experiment at `sigma2`.
    pub fn reference(sigma2: f64) -> Self {
        TsConfig { n: 3000, d: 150, width: 700, sigma2, sigma_a2: 8.0 / 700.0, sigma_w2: 0.5, eps: -0.3 }
    }

    /// `n = 0` is accepted: it describes a prior-only run.
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::config("d", "must be at least 1"));
        }
        if self.width == 0 {
            return Err(Error::config("width", "must be at least 1"));
        }
        check_positive("sigma2", self.sigma2)?;
        check_positive("sigma_a2", self.sigma_a2)?;
        check_positive("sigma_w2", self.sigma_w2)?;
        if !self.eps.is_finite() {
            return Err(Error::config("eps", "must be finite"));
        }
        Ok(())
    }

    pub fn with_sigma2(self, sigma2: f64) -> Self {
        TsConfig { sigma2, ..self }
    }
}

impl EffectiveInteraction for TsConfig {
    /// `u = n² σ_a² / (σ⁴ d N)`.
    fn effective_interaction(&self) -> f64 {
        let n = self.n as f64;
        n * n * self.sigma_a2 / (self.sigma2 * self.sigma2 * self.d as f64 * self.width as f64)
    }
}

pub fn hermite1(t: f64) -> f64 {
    t
}

pub fn hermite3(t: f64) -> f64 {
    t * t * t - 3.0 * t
}

/// `H₁(t) + ε H₃(t)` with `t = teacher · x`.
pub fn ts_target(x: ArrayView1<f64>, teacher: ArrayView1<f64>, eps: f64) -> f64 {
    let t = x.dot(&teacher);
    hermite1(t) + eps * hermite3(t)
}

/// Training data for the teacher-student model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsDataset {
    pub seed: u64,
    pub eps: f64,
    pub teacher: Array1<f64>,
    /// `n × d`, one sample per row.
    pub inputs: Array2<f64>,
    pub labels: Array1<f64>,
}

impl TsDataset {
    /// Fresh standard-normal inputs for an existing teacher, drawn from `stream`.
    pub fn with_teacher(teacher: &Array1<f64>, eps: f64, n: usize, seed: u64, stream: u64) -> Self {
        let d = teacher.len();
        let mut rng = stream_rng(seed, stream);
        let inputs = Array2::from_shape_simple_fn((n, d), || rng.sample::<f64, _>(StandardNormal));
        let labels = inputs.rows().into_iter().map(|x| ts_target(x, teacher.view(), eps)).collect();
        TsDataset { seed, eps, teacher: teacher.clone(), inputs, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.teacher.len()
    }

    /// Teacher overlaps `t_μ = w*·x_μ`.
    pub fn projections(&self) -> Array1<f64> {
        self.inputs.dot(&self.teacher)
    }

    /// CSV with one row per sample: index, label, then the input coordinates.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,label");
        for j in 0..self.dim() {
            out.push_str(&format!(",x{j}"));
        }
        out.push('\n');
        for (i, row) in self.inputs.rows().into_iter().enumerate() {
            out.push_str(&format!("{i},{:.16e}", self.labels[i]));
            for v in row {
                out.push_str(&format!(",{v:.16e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Teacher uniform on the unit sphere (stream 0), then `n` inputs (stream 1).
pub fn ts_sample_dataset(cfg: &TsConfig, seed: u64) -> TsDataset {
    let mut rng = stream_rng(seed, 0);
    let mut teacher = Array1::from_shape_simple_fn(cfg.d, || rng.sample::<f64, _>(StandardNormal));
    let norm = teacher.dot(&teacher).sqrt();
    teacher /= norm;
    TsDataset::with_teacher(&teacher, cfg.eps, cfg.n, seed, 1)
}

/// Two-layer erf network `f(x) = Σ a_i erf(w_i · x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsNetwork {
    /// `N × d`, row `i` is `w_i`.
    pub input_weights: Array2<f64>,
    pub readout: Array1<f64>,
}

impl TsNetwork {
    pub fn zeros(width: usize, d: usize) -> Self {
        TsNetwork { input_weights: Array2::zeros((width, d)), readout: Array1::zeros(width) }
    }

    /// Draw from the prior: `w ~ N(0, σ_w²/d)`, `a ~ N(0, σ_a²/N)`.
    pub fn sample_prior(cfg: &TsConfig, rng: &mut impl Rng) -> Self {
        let sw = (cfg.sigma_w2 / cfg.d as f64).sqrt();
        let sa = (cfg.sigma_a2 / cfg.width as f64).sqrt();
        let input_weights =
            Array2::from_shape_simple_fn((cfg.width, cfg.d), || sw * rng.sample::<f64, _>(StandardNormal));
        let readout = Array1::from_shape_simple_fn(cfg.width, || sa * rng.sample::<f64, _>(StandardNormal));
        TsNetwork { input_weights, readout }
    }

    pub fn width(&self) -> usize {
        self.readout.len()
    }

    pub fn dim(&self) -> usize {
        self.input_weights.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.input_weights.iter().chain(self.readout.iter()).all(|v| v.is_finite())
    }

    /// Outputs on every row of `inputs` (`n × d`).
    pub fn forward_batch(&self, inputs: &Array2<f64>) -> Array1<f64> {
        let pre = inputs.dot(&self.input_weights.t());
        pre.mapv(libm::erf).dot(&self.readout)
    }
}

pub fn ts_forward(net: &TsNetwork, x: ArrayView1<f64>) -> Result<f64> {
    if x.len() != net.dim() {
        return Err(Error::Shape { expected: net.dim(), got: x.len() });
    }
    if net.readout.len() != net.input_weights.nrows() {
        return Err(Error::Shape { expected: net.input_weights.nrows(), got: net.readout.len() });
    }
    Ok(net.input_weights.rows().into_iter().zip(net.readout.iter()).map(|(w, &a)| a * libm::erf(w.dot(&x))).sum())
}
