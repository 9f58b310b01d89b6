//! Generator / dual-head discriminator pair, sized by the number of SNPs.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{
    forward, init_parameters, Activation, HeadSpec, LayerSpec, Mode, NetworkSpec, NnError, ParameterSet, Tensor,
};
use crate::snp::{Genotype, GenotypeMatrix, Label, SnpError};

/// Discriminator head predicting the phenotype, columns (DF, SD).
pub const LABEL_HEAD: usize = 0;
/// Discriminator head separating real from synthetic profiles, columns (fake, real).
pub const REALNESS_HEAD: usize = 1;
pub const FAKE: usize = 0;
pub const REAL: usize = 1;

pub const DEFAULT_NOISE_DIM: usize = 100;
pub const DEFAULT_DROPOUT: f64 = 0.4;
const KERNEL: usize = 3;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model size: {0}")]
    InvalidSize(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Snp(#[from] SnpError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Conv channel widths of the discriminator trunk. The three published sizes
/// use their tabulated widths; other sizes follow (2n, 4n, 2n).
pub fn discriminator_widths(n_snps: usize) -> [usize; 3] {
    match n_snps {
        12 => [24, 48, 24],
        25 => [50, 100, 50],
        96 => [180, 360, 180],
        n => [2 * n, 4 * n, 2 * n],
    }
}

/// Width of the generator's first dense layer: tabulated for the published
/// sizes, 2n otherwise. The second dense layer is twice this.
pub fn generator_first_width(n_snps: usize) -> usize {
    match n_snps {
        12 => 24,
        25 => 50,
        96 => 90,
        n => 2 * n,
    }
}

pub fn build_discriminator(n_snps: usize, dropout_rate: f64) -> Result<NetworkSpec> {
    if n_snps < 2 {
        return Err(ModelError::InvalidSize(format!("discriminator needs n_snps >= 2, got {n_snps}")));
    }
    let conv = |filters| LayerSpec::Conv1d {
        filters,
        kernel: KERNEL,
        activation: Activation::Relu,
    };
    let [c1, c2, c3] = discriminator_widths(n_snps);
    let head = |name: &str| HeadSpec {
        name: name.into(),
        layers: vec![LayerSpec::SoftmaxHead { units: 2 }],
    };
    let spec = NetworkSpec {
        input_shape: vec![n_snps, 1],
        trunk: vec![
            conv(c1),
            conv(c2),
            conv(c3),
            LayerSpec::Flatten,
            LayerSpec::Dropout { rate: dropout_rate },
        ],
        heads: vec![head("label"), head("realness")],
    };
    spec.validate()?;
    Ok(spec)
}

pub fn build_generator(n_snps: usize, noise_dim: usize) -> Result<NetworkSpec> {
    if n_snps < 2 || noise_dim == 0 {
        return Err(ModelError::InvalidSize(format!(
            "generator needs n_snps >= 2 and noise_dim >= 1, got {n_snps} and {noise_dim}"
        )));
    }
    let dense = |units| LayerSpec::Dense {
        units,
        activation: Activation::Relu,
    };
    let d1 = generator_first_width(n_snps);
    let spec = NetworkSpec {
        input_shape: vec![noise_dim],
        trunk: vec![
            dense(d1),
            LayerSpec::UpSample1d { factor: 2 },
            dense(2 * d1),
            LayerSpec::UpSample1d { factor: 2 },
            dense(n_snps),
            LayerSpec::Reshape {
                shape: vec![n_snps, 1],
            },
        ],
        heads: vec![HeadSpec {
            name: "profile".into(),
            layers: vec![],
        }],
    };
    spec.validate()?;
    Ok(spec)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub params: ParameterSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GganModel {
    pub n_snps: usize,
    pub noise_dim: usize,
    pub generator: Network,
    pub discriminator: Network,
}

impl GganModel {
    /// Fresh model with Glorot-initialised networks. The generator is seeded
    /// with `seed`, the discriminator with `seed + 1`.
    pub fn new(n_snps: usize, noise_dim: usize, dropout_rate: f64, seed: u64) -> Result<Self> {
        let g = build_generator(n_snps, noise_dim)?;
        let d = build_discriminator(n_snps, dropout_rate)?;
        Ok(Self {
            n_snps,
            noise_dim,
            generator: Network {
                params: init_parameters(&g, seed)?,
                spec: g,
            },
            discriminator: Network {
                params: init_parameters(&d, seed.wrapping_add(1))?,
                spec: d,
            },
        })
    }

    /// Reassembles a model from loaded networks, checking they fit together.
    pub fn from_networks(generator: Network, discriminator: Network) -> Result<Self> {
        let out = generator.spec.head_output_shape(0)?;
        if out.len() != 2 || out[1] != 1 || discriminator.spec.input_shape != out {
            return Err(ModelError::InvalidSize(format!(
                "generator output {out:?} does not feed discriminator input {:?}",
                discriminator.spec.input_shape
            )));
        }
        if discriminator.spec.heads.len() != 2 {
            return Err(ModelError::InvalidSize("discriminator must expose two heads".into()));
        }
        generator.params.check_matches(&generator.spec)?;
        discriminator.params.check_matches(&discriminator.spec)?;
        Ok(Self {
            n_snps: out[0],
            noise_dim: generator.spec.input_shape[0],
            generator,
            discriminator,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    #[default]
    StandardNormal,
    /// Uniform on [0, 1).
    Uniform,
}

/// Generator input, shape `(batch, noise_dim)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseBatch(pub Tensor);

pub fn sample_noise<R: Rng + ?Sized>(
    batch: usize,
    noise_dim: usize,
    dist: NoiseDistribution,
    rng: &mut R,
) -> Result<NoiseBatch> {
    if batch == 0 || noise_dim == 0 {
        return Err(ModelError::InvalidSize("noise batch needs batch >= 1 and noise_dim >= 1".into()));
    }
    let data: Vec<f64> = (0..batch * noise_dim)
        .map(|_| match dist {
            NoiseDistribution::StandardNormal => rng.sample(StandardNormal),
            NoiseDistribution::Uniform => rng.random::<f64>(),
        })
        .collect();
    Ok(NoiseBatch(Tensor::from_vec(&[batch, noise_dim], data)?))
}

/// Generator output: `raw` straight from the final ReLU, `clipped` limited to
/// [0, 1] as the discriminator sees it. Shape `(batch, n_snps, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticBatch {
    pub raw: Tensor,
    pub clipped: Tensor,
}

pub fn clip_unit(t: &Tensor) -> Tensor {
    t.map(|v| v.clamp(0.0, 1.0))
}

pub fn generate(model: &GganModel, noise: &NoiseBatch) -> Result<SyntheticBatch> {
    let g = &model.generator;
    let pass = forward(&g.spec, &g.params, &noise.0, Mode::Infer)?;
    let raw = pass.outputs.into_iter().next().expect("generator has one head");
    Ok(SyntheticBatch {
        clipped: clip_unit(&raw),
        raw,
    })
}

/// Both head outputs, each `(batch, 2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Discrimination {
    pub label: Tensor,
    pub realness: Tensor,
}

pub fn discriminate(model: &GganModel, profiles: &Tensor, mode: Mode<'_>) -> Result<Discrimination> {
    let d = &model.discriminator;
    let pass = forward(&d.spec, &d.params, profiles, mode)?;
    let mut heads = pass.outputs.into_iter();
    Ok(Discrimination {
        label: heads.next().expect("label head"),
        realness: heads.next().expect("realness head"),
    })
}

/// Snaps a value to the nearest point of {0, 0.5, 1}.
pub fn quantize(v: f64) -> f64 {
    ((v.clamp(0.0, 1.0) * 2.0).round()) / 2.0
}

/// Builds a genotype matrix from quantized synthetic profiles, labelled by
/// the label head's argmax when `labels` is given.
pub fn synthetic_matrix(
    profiles: &Tensor,
    snp_ids: &[String],
    labels: Option<Vec<Label>>,
) -> Result<GenotypeMatrix> {
    if profiles.row_len() != snp_ids.len() {
        return Err(ModelError::InvalidSize(format!(
            "{} values per profile for {} SNPs",
            profiles.row_len(),
            snp_ids.len()
        )));
    }
    let genotypes = profiles
        .data()
        .iter()
        .map(|&v| Genotype::decode(quantize(v)).expect("quantized value is on the grid"))
        .collect();
    let sample_ids = (0..profiles.batch()).map(|k| format!("synthetic_{k}")).collect();
    Ok(GenotypeMatrix::new(sample_ids, snp_ids.to_vec(), genotypes, labels)?)
}

/// Draws a fresh batch of clipped synthetic profiles.
pub fn sample_synthetic(
    model: &GganModel,
    count: usize,
    dist: NoiseDistribution,
    rng: &mut dyn RngCore,
) -> Result<SyntheticBatch> {
    let noise = sample_noise(count, model.noise_dim, dist, rng)?;
    generate(model, &noise)
}
