//! Testing procedures.
//!
//! * **T1** scores each discriminator head on its own: the label head on the
//!   labeled test profiles, the realness head on real unlabeled test profiles
//!   mixed with freshly generated ones.
//! * **T2** gates first: a labeled test profile must be judged real, and only
//!   profiles that pass are scored on the label head.
//!
//! Every scored profile also yields a [`Decision`] row so that reports can be
//! audited after the fact.

use std::io::Write;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{discriminate, sample_synthetic, GganModel, ModelError, NoiseDistribution, REAL};
use crate::nn::{NnError, Tensor};
use crate::snp::{encode_profiles, GenotypeMatrix, Label, MissingPolicy, SnpError, SnpSubset, SubsetProvenance};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0} test set is empty")]
    EmptyTestSet(&'static str),
    #[error("labeled test set has no labels")]
    MissingLabels,
    #[error("test profiles have {found} SNPs, model expects {expected}")]
    SnpCount { found: usize, expected: usize },
    #[error(transparent)]
    Snp(#[from] SnpError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Encoded profiles with their ids and (optionally) true labels.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSet {
    pub sample_ids: Vec<String>,
    /// Shape `(samples, n_snps, 1)`.
    pub profiles: Tensor,
    pub labels: Option<Vec<Label>>,
}

impl EvalSet {
    pub fn from_matrix(m: &GenotypeMatrix, subset: &SnpSubset, policy: MissingPolicy) -> Result<Self> {
        let encoded = encode_profiles(m, subset, policy)?;
        let rows: Vec<&[f64]> = encoded.iter().map(|p| p.values()).collect();
        Ok(Self {
            sample_ids: m.sample_ids().to_vec(),
            profiles: Tensor::stack_rows(&[subset.len(), 1], &rows)?,
            labels: m.labels().map(<[Label]>::to_vec),
        })
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Realness {
    Fake,
    Real,
}

/// Per-profile outputs of both heads and the argmax decisions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub sample_id: String,
    pub p_df: f64,
    pub p_sd: f64,
    pub p_fake: f64,
    pub p_real: f64,
    pub label_pred: Label,
    pub realness_pred: Realness,
}

/// Scores profiles with dropout disabled; ties resolve to the first class.
pub fn score(model: &GganModel, ids: &[String], profiles: &Tensor) -> Result<Vec<Decision>> {
    if profiles.row_len() != model.n_snps {
        return Err(EvalError::SnpCount {
            found: profiles.row_len(),
            expected: model.n_snps,
        });
    }
    let d = discriminate(model, profiles, crate::nn::Mode::Infer)?;
    let labels = d.label.argmax_rows();
    let realness = d.realness.argmax_rows();
    Ok(ids
        .iter()
        .enumerate()
        .map(|(i, id)| Decision {
            sample_id: id.clone(),
            p_df: d.label.row(i)[0],
            p_sd: d.label.row(i)[1],
            p_fake: d.realness.row(i)[0],
            p_real: d.realness.row(i)[1],
            label_pred: Label::from_index(labels[i]).expect("two label classes"),
            realness_pred: if realness[i] == REAL { Realness::Real } else { Realness::Fake },
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct T1Result {
    pub acc_labeled: f64,
    pub acc_unlabeled: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct T2Result {
    pub acc1: f64,
    /// `None` when no profile passed the realness gate.
    pub acc2: Option<f64>,
    pub n_passed: usize,
}

/// T1 result plus the decisions it was computed from (labeled, real
/// unlabeled, then synthetic rows).
#[derive(Clone, Debug, PartialEq)]
pub struct T1Outcome {
    pub result: T1Result,
    pub decisions: Vec<Decision>,
}

/// T1. `synthetic_count` fresh generator samples are added to the realness
/// population as fakes; pass 0 to score real profiles only.
pub fn t1_evaluate(
    model: &GganModel,
    labeled_test: &EvalSet,
    unlabeled_test: &EvalSet,
    synthetic_count: usize,
    noise: NoiseDistribution,
    rng: &mut dyn RngCore,
) -> Result<T1Outcome> {
    let truth = require_labels(labeled_test)?;
    if unlabeled_test.is_empty() {
        return Err(EvalError::EmptyTestSet("unlabeled"));
    }
    let labeled = score(model, &labeled_test.sample_ids, &labeled_test.profiles)?;
    let acc_labeled = fraction(labeled.iter().zip(truth).filter(|(d, t)| d.label_pred == **t).count(), labeled.len());

    let mut realness = score(model, &unlabeled_test.sample_ids, &unlabeled_test.profiles)?;
    let mut correct = realness.iter().filter(|d| d.realness_pred == Realness::Real).count();
    let mut total = realness.len();
    if synthetic_count > 0 {
        let fakes = sample_synthetic(model, synthetic_count, noise, rng)?.clipped;
        let ids: Vec<String> = (0..synthetic_count).map(|k| format!("synthetic_{k}")).collect();
        let scored = score(model, &ids, &fakes)?;
        correct += scored.iter().filter(|d| d.realness_pred == Realness::Fake).count();
        total += scored.len();
        realness.extend(scored);
    }
    let mut decisions = labeled;
    decisions.extend(realness);
    Ok(T1Outcome {
        result: T1Result {
            acc_labeled,
            acc_unlabeled: fraction(correct, total),
        },
        decisions,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct T2Outcome {
    pub result: T2Result,
    pub decisions: Vec<Decision>,
}

pub fn t2_evaluate(model: &GganModel, labeled_test: &EvalSet) -> Result<T2Outcome> {
    let truth = require_labels(labeled_test)?;
    let decisions = score(model, &labeled_test.sample_ids, &labeled_test.profiles)?;
    Ok(T2Outcome {
        result: t2_from_decisions(&decisions, truth),
        decisions,
    })
}

/// T2 recomputed from decision rows and the matching true labels.
pub fn t2_from_decisions(decisions: &[Decision], truth: &[Label]) -> T2Result {
    let passed: Vec<(&Decision, &Label)> = decisions
        .iter()
        .zip(truth)
        .filter(|(d, _)| d.realness_pred == Realness::Real)
        .collect();
    let n_passed = passed.len();
    let correct = passed.iter().filter(|(d, t)| d.label_pred == **t).count();
    T2Result {
        acc1: fraction(n_passed, decisions.len()),
        acc2: (n_passed > 0).then(|| fraction(correct, n_passed)),
        n_passed,
    }
}

fn require_labels(set: &EvalSet) -> Result<&[Label]> {
    if set.is_empty() {
        return Err(EvalError::EmptyTestSet("labeled"));
    }
    set.labels.as_deref().ok_or(EvalError::MissingLabels)
}

fn fraction(num: usize, den: usize) -> f64 {
    num as f64 / den as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSizes {
    pub labeled_test: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unlabeled_test: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<usize>,
}

/// Table-style accuracy report. `t1` is absent for T2-only evaluations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1: Option<T1Result>,
    pub t2: T2Result,
    pub sizes: ReportSizes,
    pub seed: u64,
    pub provenance: SubsetProvenance,
}

pub fn make_report(
    model_id: impl Into<String>,
    t1: Option<T1Result>,
    t2: T2Result,
    sizes: ReportSizes,
    seed: u64,
    provenance: SubsetProvenance,
) -> EvalReport {
    EvalReport {
        model_id: model_id.into(),
        t1,
        t2,
        sizes,
        seed,
        provenance,
    }
}

pub fn write_decision_log<W: Write>(mut w: W, decisions: &[Decision]) -> std::io::Result<()> {
    writeln!(w, "sample_id,p_df,p_sd,p_fake,p_real,label_pred,realness_pred")?;
    for d in decisions {
        let realness = match d.realness_pred {
            Realness::Fake => "fake",
            Realness::Real => "real",
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            d.sample_id, d.p_df, d.p_sd, d.p_fake, d.p_real, d.label_pred, realness
        )?;
    }
    Ok(())
}
