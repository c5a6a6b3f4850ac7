use ndarray::Array1;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::grad::{mod_loss, mod_loss_grad, ts_loss, ts_loss_grad};
use super::{LangevinSettings, WEIGHT_GUARD};
use crate::models::{ModConfig, ModDataset, ModNetwork, TsConfig, TsDataset, TsNetwork};
use crate::numerics::StreamRng;
use crate::{Error, Result};

/// What the sampler needs from a two-layer model.
pub trait LangevinModel: Sync {
    type Net: Clone + Send + Sync + Serialize + DeserializeOwned + PartialEq + std::fmt::Debug;
    type Data: Sync + Send;

    /// Noise variance `σ²` of the posterior; the temperature is `2σ²`.
    fn sigma2(&self) -> f64;
    /// Prior variance of a single weight, `[input layer, readout]`.
    fn prior_variances(&self) -> [f64; 2];
    fn sample_prior(&self, rng: &mut StreamRng) -> Self::Net;
    fn loss_grad(&self, net: &Self::Net, data: &Self::Data) -> (f64, Self::Net);
    fn loss(&self, net: &Self::Net, data: &Self::Data) -> f64;
    /// Outputs on every sample, flattened.
    fn outputs(&self, net: &Self::Net, data: &Self::Data) -> Array1<f64>;
    fn layers(net: &Self::Net) -> [&[f64]; 2];
    fn layers_mut(net: &mut Self::Net) -> [&mut [f64]; 2];

    fn temperature(&self) -> f64 {
        2.0 * self.sigma2()
    }
}

pub struct TsModel(pub TsConfig);

impl LangevinModel for TsModel {
    type Net = TsNetwork;
    type Data = TsDataset;

    fn sigma2(&self) -> f64 {
        self.0.sigma2
    }

    fn prior_variances(&self) -> [f64; 2] {
        [self.0.sigma_w2 / self.0.d as f64, self.0.sigma_a2 / self.0.width as f64]
    }

    fn sample_prior(&self, rng: &mut StreamRng) -> TsNetwork {
        TsNetwork::sample_prior(&self.0, rng)
    }

    fn loss_grad(&self, net: &TsNetwork, data: &TsDataset) -> (f64, TsNetwork) {
        ts_loss_grad(net, data)
    }

    fn loss(&self, net: &TsNetwork, data: &TsDataset) -> f64 {
        ts_loss(net, data)
    }

    fn outputs(&self, net: &TsNetwork, data: &TsDataset) -> Array1<f64> {
        net.forward_batch(&data.inputs)
    }

    fn layers(net: &TsNetwork) -> [&[f64]; 2] {
        [net.input_weights.as_slice().expect("standard layout"), net.readout.as_slice().expect("standard layout")]
    }

    fn layers_mut(net: &mut TsNetwork) -> [&mut [f64]; 2] {
        [
            net.input_weights.as_slice_mut().expect("standard layout"),
            net.readout.as_slice_mut().expect("standard layout"),
        ]
    }
}

pub struct ModModel(pub ModConfig);

impl LangevinModel for ModModel {
    type Net = ModNetwork;
    type Data = ModDataset;

    fn sigma2(&self) -> f64 {
        self.0.sigma2
    }

    fn prior_variances(&self) -> [f64; 2] {
        [1.0, self.0.sigma_a2 / self.0.width as f64]
    }

    fn sample_prior(&self, rng: &mut StreamRng) -> ModNetwork {
        ModNetwork::sample_prior(&self.0, rng)
    }

    fn loss_grad(&self, net: &ModNetwork, data: &ModDataset) -> (f64, ModNetwork) {
        mod_loss_grad(net, data)
    }

    fn loss(&self, net: &ModNetwork, data: &ModDataset) -> f64 {
        mod_loss(net, data)
    }

    fn outputs(&self, net: &ModNetwork, data: &ModDataset) -> Array1<f64> {
        net.forward_dataset(data).into_iter().collect()
    }

    fn layers(net: &ModNetwork) -> [&[f64]; 2] {
        [net.input_weights.as_slice().expect("standard layout"), net.readout.as_slice().expect("standard layout")]
    }

    fn layers_mut(net: &mut ModNetwork) -> [&mut [f64]; 2] {
        [
            net.input_weights.as_slice_mut().expect("standard layout"),
            net.readout.as_slice_mut().expect("standard layout"),
        ]
    }
}

/// One Euler–Maruyama update in place; returns the training loss before the step.
///
/// `θ_l ← θ_l − η_l (∇_l L + γ_l θ_l) + noise · √(2 T η_l) ζ`.
pub fn langevin_step<M: LangevinModel>(
    model: &M,
    net: &mut M::Net,
    data: &M::Data,
    settings: &LangevinSettings,
    rng: &mut StreamRng,
) -> Result<f64> {
    let (loss, grad) = model.loss_grad(net, data);
    let t = model.temperature();
    let vars = model.prior_variances();
    let grads = M::layers(&grad);
    for (l, theta) in M::layers_mut(net).into_iter().enumerate() {
        let eta = settings.layer_step(vars[l]);
        let gamma = t / vars[l];
        let amp = settings.noise * (2.0 * t * eta).sqrt();
        for (w, &g) in theta.iter_mut().zip(grads[l]) {
            let z: f64 = if amp > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
            *w += -eta * (g + gamma * *w) + amp * z;
            if !(w.abs() <= WEIGHT_GUARD) {
                return Err(Error::MemberDiverged {
                    member: usize::MAX,
                    step: 0,
                    reason: format!("layer {l} weight reached {w}"),
                });
            }
        }
    }
    Ok(loss)
}
