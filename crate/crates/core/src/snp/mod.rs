//! Genotype cohorts: CSV parsing, numeric encoding, allele frequencies,
//! allelic frequency distance (AFD) and SNP subset selection.

mod frequency;
mod matrix;
mod split;
mod subset;

pub use frequency::{afd, allele_frequencies, Allele, AlleleFrequencyTable, SnpFrequencies};
pub use matrix::{
    parse_genotype_matrix, parse_genotype_matrix_auto, write_genotype_csv, Genotype, GenotypeMatrix, Label,
};
pub use split::split_train_test;
pub use subset::{
    encode_profiles, select_snps_by_afd, select_snps_by_list, select_snps_from_universe, EncodedProfile, MissingPolicy, SnpSubset,
    SubsetProvenance,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SnpError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("empty input: no header line")]
    EmptyInput,
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("line {line}: wrong column count (expected {expected}, found {found})")]
    WrongColumnCount { line: usize, expected: usize, found: usize },
    #[error("line {line}, SNP {snp}: unknown genotype token {token:?}")]
    UnknownGenotype { line: usize, snp: String, token: String },
    #[error("line {line}: unknown label token {token:?} (expected DF or SD)")]
    UnknownLabel { line: usize, token: String },
    #[error("duplicate sample id {0:?}")]
    DuplicateSample(String),
    #[error("duplicate SNP id {0:?}")]
    DuplicateSnp(String),
    #[error("label column missing: last header field must be `label`")]
    MissingLabelColumn,
    #[error("matrix shape mismatch: {0}")]
    Shape(String),
    #[error("missing genotype for sample {sample:?} at SNP {snp:?}")]
    MissingGenotype { sample: String, snp: String },
    #[error("SNP ids not present in the matrix: {}", .0.join(", "))]
    UnknownSnps(Vec<String>),
    #[error("SNP {0:?} has no observed genotypes")]
    NoObservedGenotypes(String),
    #[error("SNP {0:?} is present in only one frequency table")]
    SnpMismatch(String),
    #[error("AFD threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("test fraction {0} outside (0, 1)")]
    InvalidFraction(f64),
    #[error("split of {samples} samples leaves an empty side (test size {test})")]
    EmptySplit { samples: usize, test: usize },
    #[error("duplicate id {0:?} in SNP list")]
    DuplicateListId(String),
}

pub type Result<T> = std::result::Result<T, SnpError>;
