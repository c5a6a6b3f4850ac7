use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{check_positive, EffectiveInteraction};
use crate::{Error, Result};

/// Modular-addition hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModConfig {
    #[serde(alias = "P")]
    pub p: usize,
    #[serde(alias = "N")]
    pub width: usize,
    pub sigma2: f64,
    pub sigma_a2: f64,
    pub gamma: f64,
}

impl ModConfig {
    /// `P = 401`, `N = 1000`, `σ_a² = 0.002/N`, `γ = 1e-4` at the given noise.
    pub fn reference(sigma2: f64) -> Self {
        ModConfig { p: 401, width: 1000, sigma2, sigma_a2: 0.002 / 1000.0, gamma: 1e-4 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 3 || !is_prime(self.p) {
            return Err(Error::config("p", format!("must be a prime ≥ 3, got {}", self.p)));
        }
        if self.width == 0 {
            return Err(Error::config("width", "must be at least 1"));
        }
        check_positive("sigma2", self.sigma2)?;
        check_positive("sigma_a2", self.sigma_a2)?;
        check_positive("gamma", self.gamma)?;
        Ok(())
    }

    pub fn with_sigma2(self, sigma2: f64) -> Self {
        ModConfig { sigma2, ..self }
    }
}

impl EffectiveInteraction for ModConfig {
    /// `u = 2 σ_a² P² / (N σ⁴)`.
    fn effective_interaction(&self) -> f64 {
        let p = self.p as f64;
        2.0 * self.sigma_a2 * p * p / (self.width as f64 * self.sigma2 * self.sigma2)
    }
}

pub fn is_prime(n: usize) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut k = 3;
    while k * k <= n {
        if n.is_multiple_of(k) {
            return false;
        }
        k += 2;
    }
    true
}

/// Prime closest to `x`; equidistant candidates resolve to the larger prime.
pub fn nearest_prime(x: f64) -> usize {
    let x = x.max(2.0);
    let mut up = x.ceil() as usize;
    while !is_prime(up) {
        up += 1;
    }
    let mut down = x.floor() as usize;
    while down >= 2 && !is_prime(down) {
        down -= 1;
    }
    if down < 2 || (up as f64 - x) <= (x - down as f64) {
        up
    } else {
        down
    }
}

/// The full addition table modulo `P`.
///
/// Sample `i` is the pair `(n, m) = (i / P, i % P)`. Inputs are two-hot and are
/// generated on demand; labels are stored as a `P² × P` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModDataset {
    pub p: usize,
    pub pairs: Vec<(usize, usize)>,
    pub labels: Array2<f64>,
}

impl ModDataset {
    /// No training pairs; sampling then draws from the prior.
    pub fn empty(p: usize) -> Self {
        ModDataset { p, pairs: Vec::new(), labels: Array2::zeros((0, p)) }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Two-hot input of sample `i`: ones at `n` and `P + m`.
    pub fn input(&self, i: usize) -> Array1<f64> {
        let (n, m) = self.pairs[i];
        let mut x = Array1::zeros(2 * self.p);
        x[n] = 1.0;
        x[self.p + m] = 1.0;
        x
    }

    /// All inputs as a `P² × 2P` matrix.
    pub fn input_matrix(&self) -> Array2<f64> {
        let mut x = Array2::zeros((self.len(), 2 * self.p));
        for (i, &(n, m)) in self.pairs.iter().enumerate() {
            x[[i, n]] = 1.0;
            x[[i, self.p + m]] = 1.0;
        }
        x
    }

    /// CSV with one row per sample: index, n, m, then the label vector.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,n,m");
        for q in 0..self.p {
            out.push_str(&format!(",y{q}"));
        }
        out.push('\n');
        for (i, &(n, m)) in self.pairs.iter().enumerate() {
            out.push_str(&format!("{i},{n},{m}"));
            for v in self.labels.row(i) {
                out.push_str(&format!(",{v:.16e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Labels `y_p = δ_{p,(n+m) mod P} − 1/P` over every pair.
pub fn mod_dataset(p: usize) -> Result<ModDataset> {
    if p < 3 || !is_prime(p) {
        return Err(Error::config("p", format!("must be a prime ≥ 3, got {p}")));
    }
    let pairs: Vec<_> = (0..p).flat_map(|n| (0..p).map(move |m| (n, m))).collect();
    let inv = 1.0 / p as f64;
    let mut labels = Array2::from_elem((p * p, p), -inv);
    for (i, &(n, m)) in pairs.iter().enumerate() {
        labels[[i, (n + m) % p]] += 1.0;
    }
    Ok(ModDataset { p, pairs, labels })
}

/// Square-activation network `f_p(x) = Σ_i a_{pi} (w_i · x)²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModNetwork {
    /// `N × 2P`, row `i` is `w_i`.
    pub input_weights: Array2<f64>,
    /// `P × N`.
    pub readout: Array2<f64>,
}

impl ModNetwork {
    pub fn zeros(width: usize, p: usize) -> Self {
        ModNetwork { input_weights: Array2::zeros((width, 2 * p)), readout: Array2::zeros((p, width)) }
    }

    /// Draw from the prior: `w ~ N(0, 1)`, `a ~ N(0, σ_a²/N)`.
    pub fn sample_prior(cfg: &ModConfig, rng: &mut impl Rng) -> Self {
        let sa = (cfg.sigma_a2 / cfg.width as f64).sqrt();
        let input_weights =
            Array2::from_shape_simple_fn((cfg.width, 2 * cfg.p), || rng.sample::<f64, _>(StandardNormal));
        let readout = Array2::from_shape_simple_fn((cfg.p, cfg.width), || sa * rng.sample::<f64, _>(StandardNormal));
        ModNetwork { input_weights, readout }
    }

    pub fn width(&self) -> usize {
        self.input_weights.nrows()
    }

    pub fn modulus(&self) -> usize {
        self.readout.nrows()
    }

    pub fn is_finite(&self) -> bool {
        self.input_weights.iter().chain(self.readout.iter()).all(|v| v.is_finite())
    }

    /// Pre-activations `h[μ, i] = w_i(n_μ) + w_i(P + m_μ)` for every pair.
    pub fn preactivations(&self, data: &ModDataset) -> Array2<f64> {
        let p = data.p;
        let mut h = Array2::zeros((data.len(), self.width()));
        for (mu, &(n, m)) in data.pairs.iter().enumerate() {
            let wn = self.input_weights.column(n);
            let wm = self.input_weights.column(p + m);
            let mut row = h.row_mut(mu);
            for i in 0..row.len() {
                row[i] = wn[i] + wm[i];
            }
        }
        h
    }

    /// Outputs for every pair, `P² × P`.
    pub fn forward_dataset(&self, data: &ModDataset) -> Array2<f64> {
        let h = self.preactivations(data);
        h.mapv(|v| v * v).dot(&self.readout.t())
    }
}

pub fn mod_forward(net: &ModNetwork, x: ArrayView1<f64>) -> Result<Array1<f64>> {
    if x.len() != net.input_weights.ncols() {
        return Err(Error::Shape { expected: net.input_weights.ncols(), got: x.len() });
    }
    if net.readout.ncols() != net.width() {
        return Err(Error::Shape { expected: net.width(), got: net.readout.ncols() });
    }
    let z = net.input_weights.dot(&x).mapv(|v| v * v);
    Ok(net.readout.dot(&z))
}
