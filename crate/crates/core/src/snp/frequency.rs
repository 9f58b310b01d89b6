use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{GenotypeMatrix, Result, SnpError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Allele {
    Ref,
    Alt,
}

impl Allele {
    pub const ALL: [Allele; 2] = [Allele::Ref, Allele::Alt];
}

/// Allele frequencies of one SNP within one cohort.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnpFrequencies {
    /// Frequency per allele, indexed by [`Allele`] order (ref, alt).
    pub freqs: [f64; 2],
    /// Number of possible allele values at this SNP (n_i); always 2 for biallelic SNPs.
    pub allele_count: usize,
    /// Alleles observed, i.e. twice the number of non-missing genotypes.
    pub total_alleles_observed: usize,
}

impl SnpFrequencies {
    pub fn get(&self, allele: Allele) -> f64 {
        match allele {
            Allele::Ref => self.freqs[0],
            Allele::Alt => self.freqs[1],
        }
    }
}

/// Per-SNP allele frequencies, in source-matrix column order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AlleleFrequencyTable {
    snps: IndexMap<String, SnpFrequencies>,
}

impl AlleleFrequencyTable {
    pub fn from_entries(entries: impl IntoIterator<Item = (String, SnpFrequencies)>) -> Self {
        Self {
            snps: entries.into_iter().collect(),
        }
    }

    pub fn get(&self, snp_id: &str) -> Option<&SnpFrequencies> {
        self.snps.get(snp_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &SnpFrequencies)> {
        self.snps.iter()
    }

    pub fn snp_ids(&self) -> impl Iterator<Item = &String> {
        self.snps.keys()
    }

    pub fn len(&self) -> usize {
        self.snps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snps.is_empty()
    }
}

/// Counts alleles per SNP, excluding missing calls:
/// `f(ref) = (2·#HomRef + #Het) / (2·#observed)`, `f(alt) = 1 − f(ref)`.
pub fn allele_frequencies(m: &GenotypeMatrix) -> Result<AlleleFrequencyTable> {
    let mut snps = IndexMap::with_capacity(m.n_snps());
    for (j, snp_id) in m.snp_ids().iter().enumerate() {
        let (mut alt_alleles, mut observed) = (0usize, 0usize);
        for dosage in m.column(j).filter_map(|g| g.alt_dosage()) {
            alt_alleles += dosage;
            observed += 1;
        }
        if observed == 0 {
            return Err(SnpError::NoObservedGenotypes(snp_id.clone()));
        }
        let total = 2 * observed;
        let f_ref = (total - alt_alleles) as f64 / total as f64;
        snps.insert(
            snp_id.clone(),
            SnpFrequencies {
                freqs: [f_ref, 1.0 - f_ref],
                allele_count: 2,
                total_alleles_observed: total,
            },
        );
    }
    Ok(AlleleFrequencyTable { snps })
}

/// Allelic frequency distance per SNP: the largest absolute allele-frequency
/// difference between the two cohorts. Output follows `labeled`'s SNP order.
pub fn afd(labeled: &AlleleFrequencyTable, unlabeled: &AlleleFrequencyTable) -> Result<IndexMap<String, f64>> {
    if let Some(extra) = unlabeled.snp_ids().find(|id| labeled.get(id).is_none()) {
        return Err(SnpError::SnpMismatch(extra.clone()));
    }
    labeled
        .iter()
        .map(|(id, fl)| {
            let fu = unlabeled.get(id).ok_or_else(|| SnpError::SnpMismatch(id.clone()))?;
            let d = Allele::ALL
                .iter()
                .map(|&a| (fl.get(a) - fu.get(a)).abs())
                .fold(0.0, f64::max);
            Ok((id.clone(), d))
        })
        .collect()
}
