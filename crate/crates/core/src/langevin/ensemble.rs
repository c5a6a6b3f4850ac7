use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{langevin_step, LangevinModel, ModModel, TsModel};
use super::LangevinSettings;
use crate::models::{
    mod_dataset, ts_sample_dataset, ModConfig, ModDataset, ModNetwork, TsConfig, TsDataset, TsNetwork,
};
use crate::numerics::{derive_seed, stream_rng, RngState};
use crate::{Error, Result};

/// Format version written into every ensemble file.
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub init_seeds: usize,
    pub data_seeds: usize,
    /// Size of the held-out test set (teacher-student only).
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    /// Keep a copy of every recorded network, not only the final one.
    #[serde(default)]
    pub keep_snapshots: bool,
}

fn default_n_test() -> usize {
    3000
}

impl EnsembleSpec {
    pub fn new(init_seeds: usize, data_seeds: usize) -> Self {
        EnsembleSpec { init_seeds, data_seeds, n_test: default_n_test(), keep_snapshots: false }
    }

    pub fn members(&self) -> usize {
        self.init_seeds * self.data_seeds
    }

    pub fn validate(&self) -> Result<()> {
        if self.members() == 0 {
            return Err(Error::config("init_seeds", "ensemble needs at least one init seed and one data seed"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    pub train: f64,
    pub test: f64,
}

/// Everything needed to continue a member bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberState<N> {
    pub member: usize,
    pub init_seed: u64,
    pub data_index: usize,
    pub data_seed: u64,
    /// Completed updates.
    pub step: usize,
    pub net: N,
    pub rng: RngState,
    /// Sum of test-set outputs over recorded steps.
    pub output_sum: Vec<f64>,
    pub n_recorded: usize,
    /// Mean squared weight of each layer at every recorded step.
    pub moments: Vec<[f64; 2]>,
    /// Train and test loss every `thin` steps, burn-in included.
    pub losses: Vec<LossPoint>,
    pub snapshots: Vec<N>,
}

impl<N> MemberState<N> {
    /// Posterior-mean test output of this member.
    pub fn mean_output(&self) -> Option<Vec<f64>> {
        (self.n_recorded > 0).then(|| self.output_sum.iter().map(|s| s / self.n_recorded as f64).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergedMember {
    pub member: usize,
    pub step: usize,
    pub reason: String,
}

/// Advance `state` to `stop_at` completed updates, capped at `n_steps`.
///
/// Everything the update depends on lives in `state`, so stopping, saving and
/// calling again continues the same trajectory.
pub fn run_member<M: LangevinModel>(
    model: &M,
    state: &mut MemberState<M::Net>,
    data: &M::Data,
    test: &M::Data,
    settings: &LangevinSettings,
    stop_at: usize,
    keep_snapshots: bool,
) -> Result<()> {
    let stop_at = stop_at.min(settings.n_steps);
    let mut rng = state.rng.restore();
    if state.step == 0 && state.losses.is_empty() {
        state.losses.push(LossPoint {
            step: 0,
            train: model.loss(&state.net, data),
            test: model.loss(&state.net, test),
        });
    }
    while state.step < stop_at {
        langevin_step(model, &mut state.net, data, settings, &mut rng).map_err(|e| match e {
            Error::MemberDiverged { reason, .. } => {
                Error::MemberDiverged { member: state.member, step: state.step + 1, reason }
            }
            other => other,
        })?;
        state.step += 1;
        if state.step % settings.thin == 0 {
            state.losses.push(LossPoint {
                step: state.step,
                train: model.loss(&state.net, data),
                test: model.loss(&state.net, test),
            });
        }
        if settings.records(state.step) {
            let out = model.outputs(&state.net, test);
            for (s, v) in state.output_sum.iter_mut().zip(out.iter()) {
                *s += v;
            }
            let layers = M::layers(&state.net);
            state.moments.push([mean_square(layers[0]), mean_square(layers[1])]);
            state.n_recorded += 1;
            if keep_snapshots {
                state.snapshots.push(state.net.clone());
            }
        }
    }
    state.rng = RngState::capture(state.rng.seed, &rng);
    Ok(())
}

fn mean_square(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64
    }
}

/// A sampled ensemble; also the on-disk checkpoint format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble<N, C> {
    pub version: u32,
    pub config: C,
    pub settings: LangevinSettings,
    pub spec: EnsembleSpec,
    pub teacher: Option<Array1<f64>>,
    pub prior_only: bool,
    pub members: Vec<MemberState<N>>,
    pub diverged: Vec<DivergedMember>,
}

pub type TsEnsemble = Ensemble<TsNetwork, TsConfig>;
pub type ModEnsemble = Ensemble<ModNetwork, ModConfig>;

impl<N, C> Ensemble<N, C> {
    pub fn is_complete(&self) -> bool {
        self.members.iter().all(|m| m.step >= self.settings.n_steps)
    }

    /// Least completed step over the surviving members.
    pub fn step(&self) -> usize {
        self.members.iter().map(|m| m.step).min().unwrap_or(self.settings.n_steps)
    }

    /// Recorded networks: every snapshot if kept, otherwise the current ones.
    pub fn networks(&self) -> Vec<&N> {
        if self.spec.keep_snapshots && self.members.iter().any(|m| !m.snapshots.is_empty()) {
            self.members.iter().flat_map(|m| m.snapshots.iter()).collect()
        } else {
            self.members.iter().map(|m| &m.net).collect()
        }
    }

    pub fn to_json(&self) -> Result<String>
    where
        N: Serialize,
        C: Serialize,
    {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self>
    where
        N: for<'de> Deserialize<'de>,
        C: for<'de> Deserialize<'de>,
    {
        let ens: Self = serde_json::from_str(s)?;
        if ens.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {} is not supported (expected {CHECKPOINT_VERSION})",
                ens.version
            )));
        }
        Ok(ens)
    }
}

fn init_members<M: LangevinModel>(
    model: &M,
    settings: &LangevinSettings,
    spec: &EnsembleSpec,
    data_seed: impl Fn(usize) -> u64,
    test_len: usize,
) -> Vec<MemberState<M::Net>> {
    let mut members = Vec::with_capacity(spec.members());
    for j in 0..spec.data_seeds {
        for i in 0..spec.init_seeds {
            let member = j * spec.init_seeds + i;
            let init_seed = derive_seed(settings.seed, 1000 + i as u64);
            let mut rng = stream_rng(init_seed, j as u64);
            let net = model.sample_prior(&mut rng);
            members.push(MemberState {
                member,
                init_seed,
                data_index: j,
                data_seed: data_seed(j),
                step: 0,
                net,
                rng: RngState::capture(init_seed, &rng),
                output_sum: vec![0.0; test_len],
                n_recorded: 0,
                moments: Vec::new(),
                losses: Vec::new(),
                snapshots: Vec::new(),
            });
        }
    }
    members
}

#[allow(clippy::too_many_arguments)]
fn advance_all<'a, M: LangevinModel>(
    model: &M,
    members: &mut Vec<MemberState<M::Net>>,
    diverged: &mut Vec<DivergedMember>,
    data: impl Fn(&MemberState<M::Net>) -> &'a M::Data + Sync,
    test: &M::Data,
    settings: &LangevinSettings,
    stop_at: usize,
    keep_snapshots: bool,
) -> Result<()>
where
    M::Data: 'a,
{
    let results: Vec<Result<()>> = members
        .par_iter_mut()
        .map(|m| {
            let train = data(m);
            run_member(model, m, train, test, settings, stop_at, keep_snapshots)
        })
        .collect();
    let mut kept = Vec::with_capacity(members.len());
    for (m, r) in members.drain(..).zip(results) {
        match r {
            Ok(()) => kept.push(m),
            Err(Error::MemberDiverged { member, step, reason }) => {
                diverged.push(DivergedMember { member, step, reason })
            }
            Err(e) => return Err(e),
        }
    }
    *members = kept;
    Ok(())
}

impl TsEnsemble {
    /// Members drawn from the prior, not yet advanced.
    pub fn init(cfg: TsConfig, settings: LangevinSettings, spec: EnsembleSpec) -> Result<Self> {
        cfg.validate()?;
        settings.validate()?;
        spec.validate()?;
        let teacher = ts_sample_dataset(&TsConfig { n: 0, ..cfg }, settings.seed).teacher;
        let model = TsModel(cfg);
        let members = init_members(&model, &settings, &spec, |j| derive_seed(settings.seed, 2 + j as u64), spec.n_test);
        Ok(Ensemble {
            version: CHECKPOINT_VERSION,
            config: cfg,
            settings,
            spec,
            teacher: Some(teacher),
            prior_only: cfg.n == 0,
            members,
            diverged: Vec::new(),
        })
    }

    fn teacher_vec(&self) -> Result<&Array1<f64>> {
        self.teacher.as_ref().ok_or_else(|| Error::Checkpoint("teacher-student ensemble without a teacher".into()))
    }

    pub fn train_set(&self, data_index: usize) -> Result<TsDataset> {
        let seed = derive_seed(self.settings.seed, 2 + data_index as u64);
        Ok(TsDataset::with_teacher(self.teacher_vec()?, self.config.eps, self.config.n, seed, 1))
    }

    pub fn test_set(&self) -> Result<TsDataset> {
        let seed = derive_seed(self.settings.seed, 1);
        Ok(TsDataset::with_teacher(self.teacher_vec()?, self.config.eps, self.spec.n_test, seed, 1))
    }

    /// Advance every member to `stop_at` completed updates.
    pub fn advance(&mut self, stop_at: usize) -> Result<()> {
        let test = self.test_set()?;
        let train: Vec<TsDataset> = (0..self.spec.data_seeds).map(|j| self.train_set(j)).collect::<Result<_>>()?;
        let model = TsModel(self.config);
        let settings = self.settings;
        advance_all(
            &model,
            &mut self.members,
            &mut self.diverged,
            |m| &train[m.data_index],
            &test,
            &settings,
            stop_at,
            self.spec.keep_snapshots,
        )
    }
}

impl ModEnsemble {
    /// Members drawn from the prior; `prior_only` drops the training table.
    pub fn init(cfg: ModConfig, settings: LangevinSettings, spec: EnsembleSpec, prior_only: bool) -> Result<Self> {
        cfg.validate()?;
        settings.validate()?;
        spec.validate()?;
        let model = ModModel(cfg);
        let test_len = cfg.p * cfg.p * cfg.p;
        let members = init_members(&model, &settings, &spec, |_| 0, test_len);
        Ok(Ensemble {
            version: CHECKPOINT_VERSION,
            config: cfg,
            settings,
            spec,
            teacher: None,
            prior_only,
            members,
            diverged: Vec::new(),
        })
    }

    pub fn train_set(&self) -> Result<ModDataset> {
        if self.prior_only {
            Ok(ModDataset::empty(self.config.p))
        } else {
            mod_dataset(self.config.p)
        }
    }

    /// The full addition table, on which outputs are always recorded.
    pub fn test_set(&self) -> Result<ModDataset> {
        mod_dataset(self.config.p)
    }

    pub fn advance(&mut self, stop_at: usize) -> Result<()> {
        let train = self.train_set()?;
        let test = self.test_set()?;
        let model = ModModel(self.config);
        let settings = self.settings;
        advance_all(
            &model,
            &mut self.members,
            &mut self.diverged,
            |_| &train,
            &test,
            &settings,
            stop_at,
            self.spec.keep_snapshots,
        )
    }
}

pub fn run_ensemble_ts(cfg: TsConfig, settings: LangevinSettings, spec: EnsembleSpec) -> Result<TsEnsemble> {
    let mut ens = TsEnsemble::init(cfg, settings, spec)?;
    ens.advance(settings.n_steps)?;
    Ok(ens)
}

pub fn run_ensemble_mod(
    cfg: ModConfig,
    settings: LangevinSettings,
    spec: EnsembleSpec,
    prior_only: bool,
) -> Result<ModEnsemble> {
    let mut ens = ModEnsemble::init(cfg, settings, spec, prior_only)?;
    ens.advance(settings.n_steps)?;
    Ok(ens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::langevin::{prior_moments, LangevinModel};

    fn small_ts(n: usize) -> TsConfig {
        TsConfig { n, d: 5, width: 8, sigma2: 0.5, sigma_a2: 1.0, sigma_w2: 0.5, eps: -0.3 }
    }

    fn settings(n_steps: usize) -> LangevinSettings {
        LangevinSettings {
            step_size: 0.01,
            n_steps,
            burn_in: n_steps / 4,
            thin: 5,
            seed: 9,
            precondition: true,
            noise: 1.0,
        }
    }

    #[test]
    fn member_count_is_product_of_seeds() {
        let ens = TsEnsemble::init(small_ts(20), settings(10), EnsembleSpec::new(2, 2)).unwrap();
        assert_eq!(ens.members.len(), 4);
        let ids: Vec<_> = ens.members.iter().map(|m| m.member).collect();
        assert_eq!(ids, vec![0, 1, 2, 3]);
        assert_ne!(ens.members[0].data_seed, ens.members[2].data_seed);
        assert_eq!(ens.members[0].init_seed, ens.members[2].init_seed);
        assert_ne!(ens.members[0].net, ens.members[2].net);
    }

    #[test]
    fn resume_is_bit_exact() {
        let spec = EnsembleSpec { n_test: 50, ..EnsembleSpec::new(2, 1) };
        let full = run_ensemble_ts(small_ts(30), settings(80), spec).unwrap();
        let mut part = TsEnsemble::init(small_ts(30), settings(80), spec).unwrap();
        part.advance(33).unwrap();
        assert!(!part.is_complete());
        let mut resumed = TsEnsemble::from_json(&part.to_json().unwrap()).unwrap();
        resumed.advance(80).unwrap();
        assert_eq!(full, resumed);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let spec = EnsembleSpec { n_test: 20, ..EnsembleSpec::new(3, 2) };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_ensemble_ts(small_ts(15), settings(40), spec).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn diverged_members_are_recorded_and_dropped() {
        let mut s = settings(200);
        s.step_size = 50.0;
        s.precondition = false;
        let cfg = TsConfig { sigma2: 1e-3, ..small_ts(40) };
        let ens = run_ensemble_ts(cfg, s, EnsembleSpec { n_test: 10, ..EnsembleSpec::new(2, 1) }).unwrap();
        assert_eq!(ens.members.len() + ens.diverged.len(), 2);
        assert!(!ens.diverged.is_empty());
        assert!(ens.diverged[0].step >= 1);
    }

    #[test]
    fn unsupported_version_is_rejected() {
        let mut ens = TsEnsemble::init(small_ts(0), settings(10), EnsembleSpec::new(1, 1)).unwrap();
        ens.version = 99;
        let err = TsEnsemble::from_json(&ens.to_json().unwrap()).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)));
    }

    fn prior_run(cfg: TsConfig, step_size: f64, seed: u64) -> [crate::langevin::LayerMoment; 2] {
        let s = LangevinSettings {
            step_size,
            n_steps: 40_000,
            burn_in: 4_000,
            thin: 20,
            seed,
            precondition: true,
            noise: 1.0,
        };
        let ens = run_ensemble_ts(cfg, s, EnsembleSpec { n_test: 1, ..EnsembleSpec::new(8, 1) }).unwrap();
        prior_moments(&ens, TsModel(cfg).prior_variances()).unwrap()
    }

    #[test]
    fn prior_only_run_matches_prior_variances() {
        for m in prior_run(small_ts(0), 0.001, 3) {
            assert!(m.within(3.0), "{m:?}");
        }
    }

    #[test]
    fn halving_the_step_changes_moments_within_error() {
        let a = prior_run(small_ts(0), 0.004, 4);
        let b = prior_run(small_ts(0), 0.002, 5);
        for (x, y) in a.iter().zip(&b) {
            let se = (x.stderr.powi(2) + y.stderr.powi(2)).sqrt();
            assert!((x.estimate - y.estimate).abs() < 3.0 * se, "{x:?} {y:?}");
        }
    }

    #[test]
    fn mod_prior_only_run_matches_prior_variances() {
        let cfg = ModConfig { p: 5, width: 6, sigma2: 0.5, sigma_a2: 0.3, gamma: 1e-4 };
        let s = LangevinSettings {
            step_size: 0.001,
            n_steps: 40_000,
            burn_in: 4_000,
            thin: 20,
            seed: 1,
            precondition: true,
            noise: 1.0,
        };
        let ens = run_ensemble_mod(cfg, s, EnsembleSpec::new(8, 1), true).unwrap();
        for m in prior_moments(&ens, ModModel(cfg).prior_variances()).unwrap() {
            assert!(m.within(3.0), "{m:?}");
        }
    }

    #[test]
    fn noiseless_prior_run_has_constant_losses_at_the_end() {
        let s = LangevinSettings { noise: 0.0, step_size: 0.1, ..settings(2000) };
        let ens = run_ensemble_ts(small_ts(0), s, EnsembleSpec { n_test: 20, ..EnsembleSpec::new(1, 1) }).unwrap();
        let l = &ens.members[0].losses;
        let last = l[l.len() - 1];
        let before = l[l.len() - 10];
        assert!((last.test - before.test).abs() < 1e-12);
        assert_eq!(last.train, 0.0);
    }
}
