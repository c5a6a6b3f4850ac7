use std::f64::consts::PI;

use ndarray::{Array2, Zip};

use crate::models::{ModDataset, ModNetwork, TsDataset, TsNetwork};

/// Sum-of-squares loss `Σ_μ (f(x_μ) − y_μ)²` and its gradient.
pub fn ts_loss_grad(net: &TsNetwork, data: &TsDataset) -> (f64, TsNetwork) {
    if data.is_empty() {
        return (0.0, TsNetwork::zeros(net.width(), net.dim()));
    }
    let pre = data.inputs.dot(&net.input_weights.t());
    let mut act = Array2::zeros(pre.raw_dim());
    let mut slope = Array2::zeros(pre.raw_dim());
    let c = 2.0 / PI.sqrt();
    Zip::from(&mut act).and(&mut slope).and(&pre).for_each(|e, s, &z| {
        *e = libm::erf(z);
        *s = c * (-z * z).exp();
    });
    let resid = act.dot(&net.readout) - &data.labels;
    let loss = resid.dot(&resid);
    let grad_a = act.t().dot(&resid) * 2.0;
    // M[μ, i] = 2 r_μ a_i erf'(z_μi)
    Zip::from(slope.rows_mut()).and(&resid).for_each(|mut row, &r| {
        Zip::from(&mut row).and(&net.readout).for_each(|s, &a| *s *= 2.0 * r * a);
    });
    let grad_w = slope.t().dot(&data.inputs);
    (loss, TsNetwork { input_weights: grad_w, readout: grad_a })
}

pub fn ts_loss(net: &TsNetwork, data: &TsDataset) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let r = net.forward_batch(&data.inputs) - &data.labels;
    r.dot(&r)
}

/// Sum-of-squares loss over every pair of `data` and its gradient.
pub fn mod_loss_grad(net: &ModNetwork, data: &ModDataset) -> (f64, ModNetwork) {
    let p = net.modulus();
    if data.is_empty() {
        return (0.0, ModNetwork::zeros(net.width(), p));
    }
    let h = net.preactivations(data);
    let sq = h.mapv(|v| v * v);
    let resid = sq.dot(&net.readout.t()) - &data.labels;
    let loss = resid.iter().map(|r| r * r).sum();
    let grad_a = resid.t().dot(&sq) * 2.0;
    let mut gh = resid.dot(&net.readout);
    Zip::from(&mut gh).and(&h).for_each(|g, &v| *g *= 4.0 * v);
    let mut grad_w = Array2::zeros(net.input_weights.raw_dim());
    for (mu, &(n, m)) in data.pairs.iter().enumerate() {
        let row = gh.row(mu);
        let mut cn = grad_w.column_mut(n);
        cn += &row;
        let mut cm = grad_w.column_mut(p + m);
        cm += &row;
    }
    (loss, ModNetwork { input_weights: grad_w, readout: grad_a })
}

pub fn mod_loss(net: &ModNetwork, data: &ModDataset) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let r = net.forward_dataset(data) - &data.labels;
    r.iter().map(|v| v * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{mod_dataset, ts_sample_dataset, ModConfig, TsConfig};
    use crate::numerics::stream_rng;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
    }

    #[test]
    fn ts_gradient_matches_finite_differences() {
        let cfg = TsConfig { n: 40, d: 5, width: 7, ..TsConfig::reference(1.0) };
        let data = ts_sample_dataset(&cfg, 3);
        let mut rng = stream_rng(8, 0);
        for _ in 0..100 {
            let mut net = TsNetwork::sample_prior(&cfg, &mut rng);
            net.readout *= 10.0;
            let (_, g) = ts_loss_grad(&net, &data);
            let h = 1e-4;
            for ((i, j), &gv) in g.input_weights.indexed_iter() {
                let fd = stencil(
                    |t| {
                        let mut q = net.clone();
                        q.input_weights[[i, j]] += t;
                        ts_loss(&q, &data)
                    },
                    h,
                );
                assert!(rel_err(fd, gv) < 1e-6, "{fd} {gv}");
            }
            for (i, &gv) in g.readout.indexed_iter() {
                let fd = stencil(
                    |t| {
                        let mut q = net.clone();
                        q.readout[i] += t;
                        ts_loss(&q, &data)
                    },
                    h,
                );
                assert!(rel_err(fd, gv) < 1e-6, "{fd} {gv}");
            }
        }
    }

    /// Five-point stencil; exact up to rounding for the quartic modular loss.
    fn stencil(f: impl Fn(f64) -> f64, h: f64) -> f64 {
        (f(-2.0 * h) - 8.0 * f(-h) + 8.0 * f(h) - f(2.0 * h)) / (12.0 * h)
    }

    #[test]
    fn mod_gradient_matches_finite_differences() {
        let cfg = ModConfig { p: 5, width: 4, ..ModConfig::reference(0.2) };
        let data = mod_dataset(5).unwrap();
        let mut rng = stream_rng(9, 0);
        for _ in 0..100 {
            let mut net = ModNetwork::sample_prior(&cfg, &mut rng);
            net.readout *= 30.0;
            let (_, g) = mod_loss_grad(&net, &data);
            let h = 1e-3;
            for ((i, j), &gv) in g.input_weights.indexed_iter() {
                let fd = stencil(
                    |t| {
                        let mut q = net.clone();
                        q.input_weights[[i, j]] += t;
                        mod_loss(&q, &data)
                    },
                    h,
                );
                assert!(rel_err(fd, gv) < 1e-6, "{fd} {gv}");
            }
            for ((i, j), &gv) in g.readout.indexed_iter() {
                let fd = stencil(
                    |t| {
                        let mut q = net.clone();
                        q.readout[[i, j]] += t;
                        mod_loss(&q, &data)
                    },
                    h,
                );
                assert!(rel_err(fd, gv) < 1e-6, "{fd} {gv}");
            }
        }
    }

    #[test]
    fn losses_agree_with_gradient_pass() {
        let cfg = TsConfig { n: 20, d: 3, width: 4, ..TsConfig::reference(1.0) };
        let data = ts_sample_dataset(&cfg, 1);
        let net = TsNetwork::sample_prior(&cfg, &mut stream_rng(2, 0));
        assert!((ts_loss_grad(&net, &data).0 - ts_loss(&net, &data)).abs() < 1e-10);
    }
}
