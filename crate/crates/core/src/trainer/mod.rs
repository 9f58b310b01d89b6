//! Alternating semi-supervised training: a supervised discriminator turn on
//! labeled profiles, an unsupervised turn on real-vs-synthetic profiles, then
//! a generator turn through the frozen discriminator.

mod checkpoint;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    clip_unit, generate, sample_noise, GganModel, ModelError, NoiseDistribution, FAKE, LABEL_HEAD, REAL,
    REALNESS_HEAD,
};
use crate::nn::{backward, cross_entropy_with_grad, forward, AdamConfig, AdamState, Mode, NnError, Tensor};
use crate::snp::{encode_profiles, GenotypeMatrix, MissingPolicy, SnpError, SnpSubset};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("labeled training set is empty")]
    EmptyLabeled,
    #[error("unlabeled training set is empty")]
    EmptyUnlabeled,
    #[error("labeled cohort has no label column")]
    MissingLabels,
    #[error("non-finite value at epoch {epoch}: {detail}")]
    NonFinite { epoch: usize, detail: String },
    #[error(transparent)]
    Snp(#[from] SnpError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Target used for generated profiles in the generator turn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorObjective {
    /// Push generated profiles toward "real" (non-saturating loss).
    #[default]
    NonSaturating,
    /// Score generated profiles against "fake", as the loss is literally written.
    Literal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Labeled profiles per supervised turn (N).
    pub n_labeled_batch: usize,
    /// Profiles per unsupervised turn (M), half real and half synthetic.
    pub n_unsup_batch: usize,
    /// Noise vectors per generator turn (P).
    pub n_gen_batch: usize,
    pub noise_dim: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: AdamConfig,
    pub dropout_rate: f64,
    pub test_fraction: f64,
    /// Supervised/unsupervised/generator rounds per epoch.
    pub steps_per_epoch: usize,
    pub generator_objective: GeneratorObjective,
    pub noise: NoiseDistribution,
    pub missing_policy: MissingPolicy,
    /// Keep the unlabeled test profiles out of training.
    pub holdout_unlabeled: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_labeled_batch: 10,
            n_unsup_batch: 100,
            n_gen_batch: 100,
            noise_dim: 100,
            epochs: 5000,
            seed: 0,
            optimizer: AdamConfig::default(),
            dropout_rate: 0.4,
            test_fraction: 0.2,
            steps_per_epoch: 1,
            generator_objective: GeneratorObjective::default(),
            noise: NoiseDistribution::default(),
            missing_policy: MissingPolicy::default(),
            holdout_unlabeled: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.n_labeled_batch < 1 {
            return fail("n_labeled_batch must be >= 1");
        }
        if self.n_unsup_batch < 2 || !self.n_unsup_batch.is_multiple_of(2) {
            return fail("n_unsup_batch must be even and >= 2");
        }
        if self.n_gen_batch < 1 {
            return fail("n_gen_batch must be >= 1");
        }
        if self.noise_dim < 1 {
            return fail("noise_dim must be >= 1");
        }
        if self.epochs < 1 {
            return fail("epochs must be >= 1");
        }
        if self.steps_per_epoch < 1 {
            return fail("steps_per_epoch must be >= 1");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail("dropout_rate must lie in [0, 1)");
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return fail("test_fraction must lie in (0, 1)");
        }
        self.optimizer
            .validate()
            .map_err(|e| TrainError::InvalidConfig(e.to_string()))
    }
}

/// Encoded training cohorts, shape `(samples, n_snps, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingData {
    pub labeled: Tensor,
    /// Label head class index per labeled profile.
    pub labels: Vec<usize>,
    pub unlabeled: Tensor,
}

impl TrainingData {
    pub fn new(
        labeled: &GenotypeMatrix,
        unlabeled: &GenotypeMatrix,
        subset: &SnpSubset,
        policy: MissingPolicy,
    ) -> Result<Self> {
        let labels = labeled
            .labels()
            .ok_or(TrainError::MissingLabels)?
            .iter()
            .map(|l| l.index())
            .collect();
        Ok(Self {
            labeled: encode_tensor(labeled, subset, policy)?,
            labels,
            unlabeled: encode_tensor(unlabeled, subset, policy)?,
        })
    }
}

/// Encodes a cohort into a `(samples, n_snps, 1)` tensor.
pub fn encode_tensor(m: &GenotypeMatrix, subset: &SnpSubset, policy: MissingPolicy) -> Result<Tensor> {
    let profiles = encode_profiles(m, subset, policy)?;
    let rows: Vec<&[f64]> = profiles.iter().map(|p| p.values()).collect();
    Ok(Tensor::stack_rows(&[subset.len(), 1], &rows)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    #[serde(rename = "L_sup")]
    pub l_sup: f64,
    #[serde(rename = "L_unsup")]
    pub l_unsup: f64,
    #[serde(rename = "L_gen")]
    pub l_gen: f64,
    /// Label-head batch accuracy of the supervised turn.
    pub acc_sup: f64,
    /// Realness-head batch accuracy of the unsupervised turn.
    pub acc_unsup: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub config: TrainConfig,
    pub subset: SnpSubset,
    pub model: GganModel,
    pub gen_opt: AdamState,
    pub disc_opt: AdamState,
    pub epoch: usize,
    pub rng: ChaCha8Rng,
    pub history: Vec<EpochRecord>,
}

/// Stream of the training RNG; stream 0 of the same seed initialises weights.
const TRAIN_STREAM: u64 = 1;

impl TrainState {
    pub fn new(config: TrainConfig, subset: SnpSubset) -> Result<Self> {
        config.validate()?;
        let model = GganModel::new(subset.len(), config.noise_dim, config.dropout_rate, config.seed)?;
        let gen_opt = AdamState::new(&model.generator.spec, config.optimizer)?;
        let disc_opt = AdamState::new(&model.discriminator.spec, config.optimizer)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(TRAIN_STREAM);
        Ok(Self {
            config,
            subset,
            model,
            gen_opt,
            disc_opt,
            epoch: 0,
            rng,
            history: Vec::new(),
        })
    }

    /// Discriminator turn on `N` labeled profiles through the label head.
    /// Updates the trunk and the label head only.
    pub fn supervised_step(&mut self, data: &TrainingData) -> Result<StepOutcome> {
        let n = data.labeled.batch();
        if n == 0 {
            return Err(TrainError::EmptyLabeled);
        }
        let idx = sample_batch(&mut self.rng, n, self.config.n_labeled_batch);
        let x = data.labeled.gather_rows(&idx);
        let targets: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
        self.discriminator_update(&x, &targets, LABEL_HEAD)
    }

    /// Discriminator turn on `M/2` real unlabeled profiles (target real) and
    /// `M/2` generated ones (target fake) through the realness head. Updates
    /// the trunk and the realness head only; the generator is untouched.
    pub fn unsupervised_step(&mut self, data: &TrainingData) -> Result<StepOutcome> {
        let n = data.unlabeled.batch();
        if n == 0 {
            return Err(TrainError::EmptyUnlabeled);
        }
        let half = self.config.n_unsup_batch / 2;
        let idx = sample_batch(&mut self.rng, n, half);
        let real = data.unlabeled.gather_rows(&idx);
        let noise = sample_noise(half, self.model.noise_dim, self.config.noise, &mut self.rng)?;
        let fake = generate(&self.model, &noise)?.clipped;
        let x = Tensor::concat_rows(&real, &fake)?;
        let targets: Vec<usize> = std::iter::repeat_n(REAL, half)
            .chain(std::iter::repeat_n(FAKE, half))
            .collect();
        self.discriminator_update(&x, &targets, REALNESS_HEAD)
    }

    fn discriminator_update(&mut self, x: &Tensor, targets: &[usize], head: usize) -> Result<StepOutcome> {
        let disc = &mut self.model.discriminator;
        let pass = forward(&disc.spec, &disc.params, x, Mode::Train(&mut self.rng))?;
        let probs = &pass.outputs[head];
        let (loss, grad) = cross_entropy_with_grad(targets, probs)?;
        let accuracy = accuracy(probs, targets);
        let mut head_grads = [None, None];
        head_grads[head] = Some(&grad);
        let grads = backward(&disc.spec, &disc.params, &pass, &head_grads)?;
        let mask = disc.spec.param_groups()?.mask(&[head]);
        self.disc_opt.step(&mut disc.params, &grads.params, Some(&mask))?;
        Ok(StepOutcome { loss, accuracy })
    }

    /// Generator turn: `P` noise vectors are generated, clipped to [0, 1] and
    /// scored by the realness head; gradients flow back through the frozen
    /// discriminator and only the generator is updated.
    pub fn generator_step(&mut self) -> Result<StepOutcome> {
        let p = self.config.n_gen_batch;
        let noise = sample_noise(p, self.model.noise_dim, self.config.noise, &mut self.rng)?;
        let (gen, disc) = (&mut self.model.generator, &self.model.discriminator);
        let gpass = forward(&gen.spec, &gen.params, &noise.0, Mode::Train(&mut self.rng))?;
        let raw = &gpass.outputs[0];
        let clipped = clip_unit(raw);
        let dpass = forward(&disc.spec, &disc.params, &clipped, Mode::Train(&mut self.rng))?;
        let target = match self.config.generator_objective {
            GeneratorObjective::NonSaturating => REAL,
            GeneratorObjective::Literal => FAKE,
        };
        let targets = vec![target; p];
        let probs = &dpass.outputs[REALNESS_HEAD];
        let (loss, grad) = cross_entropy_with_grad(&targets, probs)?;
        let accuracy = accuracy(probs, &targets);
        let dgrads = backward(&disc.spec, &disc.params, &dpass, &[None, Some(&grad)])?;
        let mut dprofile = dgrads.input;
        for (g, &r) in dprofile.data_mut().iter_mut().zip(raw.data()) {
            if !(0.0..=1.0).contains(&r) {
                *g = 0.0;
            }
        }
        let ggrads = backward(&gen.spec, &gen.params, &gpass, &[Some(&dprofile)])?;
        self.gen_opt.step(&mut gen.params, &ggrads.params, None)?;
        Ok(StepOutcome { loss, accuracy })
    }

    /// One epoch: `steps_per_epoch` rounds of supervised, unsupervised and
    /// generator turns, recorded as their mean losses.
    pub fn run_epoch(&mut self, data: &TrainingData) -> Result<EpochRecord> {
        let epoch = self.epoch;
        let steps = self.config.steps_per_epoch;
        let mut sums = [0.0; 5];
        for _ in 0..steps {
            let outcome = (|| -> Result<[f64; 5]> {
                let s = self.supervised_step(data)?;
                let u = self.unsupervised_step(data)?;
                let g = self.generator_step()?;
                Ok([s.loss, u.loss, g.loss, s.accuracy, u.accuracy])
            })()
            .map_err(|e| match e {
                TrainError::Nn(NnError::NonFinite { .. } | NnError::NonFiniteGradient) => TrainError::NonFinite {
                    epoch,
                    detail: e.to_string(),
                },
                other => other,
            })?;
            for (s, v) in sums.iter_mut().zip(outcome) {
                *s += v;
            }
        }
        let mean = sums.map(|s| s / steps as f64);
        if mean[..3].iter().any(|l| !l.is_finite()) {
            return Err(TrainError::NonFinite {
                epoch,
                detail: "loss".into(),
            });
        }
        let record = EpochRecord {
            epoch,
            l_sup: mean[0],
            l_unsup: mean[1],
            l_gen: mean[2],
            acc_sup: mean[3],
            acc_unsup: mean[4],
        };
        self.epoch += 1;
        self.history.push(record);
        Ok(record)
    }

    pub fn run_epochs(
        &mut self,
        data: &TrainingData,
        epochs: usize,
        mut on_epoch: impl FnMut(&EpochRecord),
    ) -> Result<()> {
        for _ in 0..epochs {
            let record = self.run_epoch(data)?;
            on_epoch(&record);
        }
        Ok(())
    }
}

/// Distinct indices when `k <= n`, otherwise `k` draws with replacement.
fn sample_batch(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    if k <= n {
        index::sample(rng, n, k).into_vec()
    } else {
        (0..k).map(|_| rng.random_range(0..n)).collect()
    }
}

fn accuracy(probs: &Tensor, targets: &[usize]) -> f64 {
    let hits = probs
        .argmax_rows()
        .iter()
        .zip(targets)
        .filter(|(p, t)| p == t)
        .count();
    hits as f64 / targets.len() as f64
}

/// Trains a fresh model for `config.epochs` epochs on the given training cohorts.
pub fn train(
    config: &TrainConfig,
    labeled: &GenotypeMatrix,
    unlabeled: &GenotypeMatrix,
    subset: &SnpSubset,
) -> Result<TrainState> {
    config.validate()?;
    let data = TrainingData::new(labeled, unlabeled, subset, config.missing_policy)?;
    let mut state = TrainState::new(config.clone(), subset.clone())?;
    state.run_epochs(&data, config.epochs, |_| {})?;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snp::{select_snps_from_universe, Genotype, Label};

    fn cohort(n: usize, k: usize, labeled: bool, seed: u64) -> GenotypeMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gs = (0..n * k)
            .map(|_| [Genotype::HomRef, Genotype::Het, Genotype::HomAlt][rng.random_range(0..3)])
            .collect();
        let labels = labeled.then(|| (0..n).map(|i| if i % 2 == 0 { Label::Df } else { Label::Sd }).collect());
        GenotypeMatrix::new(
            (0..n).map(|i| format!("s{i}")).collect(),
            (0..k).map(|j| format!("rs{j}")).collect(),
            gs,
            labels,
        )
        .unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            n_unsup_batch: 20,
            n_gen_batch: 10,
            noise_dim: 8,
            epochs: 3,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    fn setup() -> (TrainState, TrainingData) {
        let l = cohort(30, 6, true, 1);
        let u = cohort(60, 6, false, 2);
        let subset = select_snps_from_universe(l.snp_ids(), l.snp_ids()).unwrap();
        let cfg = small_config();
        let data = TrainingData::new(&l, &u, &subset, cfg.missing_policy).unwrap();
        (TrainState::new(cfg, subset).unwrap(), data)
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { n_unsup_batch: 7, ..Default::default() },
            TrainConfig { n_labeled_batch: 0, ..Default::default() },
            TrainConfig { dropout_rate: 1.0, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(TrainError::InvalidConfig(_))));
        }
        let parsed: TrainConfig = serde_json::from_str(r#"{"epochs": 7, "seed": 3}"#).unwrap();
        assert_eq!(parsed.epochs, 7);
        assert_eq!(parsed.n_labeled_batch, 10);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epoch": 7}"#).is_err());
    }

    #[test]
    fn history_tracks_epochs() {
        let (mut state, data) = setup();
        state.run_epochs(&data, 2, |_| {}).unwrap();
        assert_eq!(state.history.len(), 2);
        assert_eq!(state.epoch, 2);
        for r in &state.history {
            for l in [r.l_sup, r.l_unsup, r.l_gen] {
                assert!(l.is_finite() && (0.0..=-(1e-7f64).ln()).contains(&l));
            }
        }
    }

    #[test]
    fn batch_sampling_is_distinct_when_possible() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut idx = sample_batch(&mut rng, 72, 10);
        idx.sort_unstable();
        idx.dedup();
        assert_eq!(idx.len(), 10);
        let over = sample_batch(&mut rng, 3, 10);
        assert_eq!(over.len(), 10);
        assert!(over.iter().all(|&i| i < 3));
    }

    #[test]
    fn empty_sets_rejected() {
        let (mut state, mut data) = setup();
        data.unlabeled = Tensor::zeros(&[0, 6, 1]);
        assert!(matches!(state.unsupervised_step(&data), Err(TrainError::EmptyUnlabeled)));
        data.labeled = Tensor::zeros(&[0, 6, 1]);
        assert!(matches!(state.supervised_step(&data), Err(TrainError::EmptyLabeled)));
    }

    #[test]
    fn labels_required() {
        let u = cohort(10, 3, false, 2);
        let subset = select_snps_from_universe(u.snp_ids(), u.snp_ids()).unwrap();
        assert!(matches!(
            TrainingData::new(&u, &u, &subset, MissingPolicy::Reject),
            Err(TrainError::MissingLabels)
        ));
    }

    #[test]
    fn checkpoint_round_trip_is_byte_identical() {
        let (mut state, data) = setup();
        state.run_epochs(&data, 2, |_| {}).unwrap();
        let bytes = encode_checkpoint(&state).unwrap();
        let loaded = decode_checkpoint(&bytes).unwrap();
        assert_eq!(loaded, state);
        assert_eq!(encode_checkpoint(&loaded).unwrap(), bytes);
    }

    #[test]
    fn resumed_run_matches_uninterrupted() {
        let (mut straight, data) = setup();
        let mut resumed = straight.clone();
        straight.run_epochs(&data, 4, |_| {}).unwrap();
        resumed.run_epochs(&data, 2, |_| {}).unwrap();
        let mut resumed = decode_checkpoint(&encode_checkpoint(&resumed).unwrap()).unwrap();
        resumed.run_epochs(&data, 2, |_| {}).unwrap();
        assert_eq!(resumed, straight);
    }

    #[test]
    fn corrupt_checkpoints_rejected() {
        let (state, _) = setup();
        let mut bytes = encode_checkpoint(&state).unwrap();
        assert!(matches!(
            decode_checkpoint(&bytes[..bytes.len() - 3]),
            Err(NnError::Corrupt(_))
        ));
        bytes.push(0);
        assert!(matches!(decode_checkpoint(&bytes), Err(NnError::Corrupt(_))));
    }
}
