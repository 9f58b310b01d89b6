//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use ggan::snp::{Genotype, GenotypeMatrix, Label};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const TASK_SNPS: usize = 12;

/// Two Hardy–Weinberg populations over 12 SNPs: alternate-allele frequencies
/// are low in the first and high in the second.
pub struct Populations {
    pub alt_freq: [[f64; TASK_SNPS]; 2],
}

impl Populations {
    pub fn new(rng: &mut ChaCha8Rng) -> Self {
        let mut alt_freq = [[0.0; TASK_SNPS]; 2];
        // Interleaved draws: one low/high pair per SNP.
        #[allow(clippy::needless_range_loop)]
        for j in 0..TASK_SNPS {
            alt_freq[0][j] = rng.random_range(0.1..0.4);
            alt_freq[1][j] = rng.random_range(0.6..0.9);
        }
        Self { alt_freq }
    }

    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<Genotype> {
        let pop = rng.random_range(0..2);
        (0..TASK_SNPS)
            .map(|j| {
                let q = self.alt_freq[pop][j];
                let alt = (rng.random::<f64>() < q) as u8 + (rng.random::<f64>() < q) as u8;
                [Genotype::HomRef, Genotype::Het, Genotype::HomAlt][alt as usize]
            })
            .collect()
    }
}

pub fn snp_ids(n: usize) -> Vec<String> {
    (0..n).map(|j| format!("rs{}", 1000 + j)).collect()
}

/// Desk-scale separable task: 500 unlabeled profiles from the population
/// mixture and 100 labeled ones, labelled SD when the encoded sum of the
/// first three SNPs plus N(0, 0.1) noise exceeds 1.25.
pub struct SyntheticTask {
    pub labeled: GenotypeMatrix,
    pub unlabeled: GenotypeMatrix,
}

pub fn synthetic_task(seed: u64) -> SyntheticTask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pops = Populations::new(&mut rng);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let mut cohort = |n: usize, prefix: &str, labeled: bool| {
        let mut gs = Vec::with_capacity(n * TASK_SNPS);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let row = pops.draw(&mut rng);
            let score: f64 = row[..3].iter().map(|g| g.encode().unwrap()).sum::<f64>() + noise.sample(&mut rng);
            labels.push(if score > 1.25 { Label::Sd } else { Label::Df });
            gs.extend(row);
        }
        GenotypeMatrix::new(
            (0..n).map(|i| format!("{prefix}{i}")).collect(),
            snp_ids(TASK_SNPS),
            gs,
            labeled.then_some(labels),
        )
        .unwrap()
    };
    let unlabeled = cohort(500, "u", false);
    let labeled = cohort(100, "l", true);
    SyntheticTask { labeled, unlabeled }
}

/// Plain logistic regression fitted by full-batch gradient descent; returns
/// its training accuracy.
pub fn logistic_oracle_accuracy(m: &GenotypeMatrix) -> f64 {
    let n = m.n_samples();
    let k = m.n_snps();
    let x: Vec<Vec<f64>> = (0..n)
        .map(|i| m.row(i).iter().map(|g| g.encode().unwrap()).collect())
        .collect();
    let y: Vec<f64> = m.labels().unwrap().iter().map(|l| l.index() as f64).collect();
    let (mut w, mut b) = (vec![0.0; k], 0.0);
    for _ in 0..20_000 {
        let mut gw = vec![0.0; k];
        let mut gb = 0.0;
        for (xi, yi) in x.iter().zip(&y) {
            let z: f64 = b + xi.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let err = 1.0 / (1.0 + (-z).exp()) - yi;
            for (g, a) in gw.iter_mut().zip(xi) {
                *g += err * a;
            }
            gb += err;
        }
        for (wj, g) in w.iter_mut().zip(&gw) {
            *wj -= 0.5 * g / n as f64;
        }
        b -= 0.5 * gb / n as f64;
    }
    let correct = x
        .iter()
        .zip(&y)
        .filter(|(xi, yi)| {
            let z: f64 = b + xi.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            (z > 0.0) as u8 as f64 == **yi
        })
        .count();
    correct as f64 / n as f64
}
