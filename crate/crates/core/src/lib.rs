//! Semi-supervised GAN for SNP genotype profiles.
//!
//! SNPs are chosen by allelic frequency distance between a labeled and an
//! unlabeled cohort ([`snp`]); a generator and a dual-head discriminator
//! ([`model`]) built on a small network engine ([`nn`]) are trained in
//! alternating turns ([`trainer`]) and scored with the T1/T2 procedures
//! ([`eval`]). [`cli`] wires the pipeline into the `ggan` binary.

pub mod cli;
pub mod eval;
pub mod model;
pub mod nn;
pub mod snp;
pub mod trainer;
