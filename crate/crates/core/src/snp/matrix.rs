use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Result, SnpError};

/// Diploid genotype at a biallelic SNP.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Genotype {
    HomRef,
    Het,
    HomAlt,
    Missing,
}

impl Genotype {
    pub fn from_token(token: &str) -> Option<Self> {
        match token {
            "0" => Some(Genotype::HomRef),
            "1" => Some(Genotype::Het),
            "2" => Some(Genotype::HomAlt),
            "." => Some(Genotype::Missing),
            _ => None,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Genotype::HomRef => "0",
            Genotype::Het => "1",
            Genotype::HomAlt => "2",
            Genotype::Missing => ".",
        }
    }

    /// Position on the three-point scale {0, 0.5, 1}; `None` for missing calls.
    pub fn encode(self) -> Option<f64> {
        match self {
            Genotype::HomRef => Some(0.0),
            Genotype::Het => Some(0.5),
            Genotype::HomAlt => Some(1.0),
            Genotype::Missing => None,
        }
    }

    /// Inverse of [`Genotype::encode`]; only the three exact grid values decode.
    pub fn decode(value: f64) -> Option<Self> {
        if value == 0.0 {
            Some(Genotype::HomRef)
        } else if value == 0.5 {
            Some(Genotype::Het)
        } else if value == 1.0 {
            Some(Genotype::HomAlt)
        } else {
            None
        }
    }

    /// Number of alternate alleles carried, `None` when missing.
    pub fn alt_dosage(self) -> Option<usize> {
        match self {
            Genotype::HomRef => Some(0),
            Genotype::Het => Some(1),
            Genotype::HomAlt => Some(2),
            Genotype::Missing => None,
        }
    }

    pub fn is_missing(self) -> bool {
        self == Genotype::Missing
    }
}

/// Disease phenotype: Dengue Fever (mild) or Severe Dengue.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "DF")]
    Df,
    #[serde(rename = "SD")]
    Sd,
}

impl Label {
    pub fn from_token(token: &str) -> Option<Self> {
        match token {
            "DF" => Some(Label::Df),
            "SD" => Some(Label::Sd),
            _ => None,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Label::Df => "DF",
            Label::Sd => "SD",
        }
    }

    /// Column of this class in the label head output (DF, SD).
    pub fn index(self) -> usize {
        match self {
            Label::Df => 0,
            Label::Sd => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(Label::Df),
            1 => Some(Label::Sd),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Individuals × SNPs genotype grid, stored row-major (one row per sample).
#[derive(Clone, Debug, PartialEq)]
pub struct GenotypeMatrix {
    sample_ids: Vec<String>,
    snp_ids: Vec<String>,
    genotypes: Vec<Genotype>,
    labels: Option<Vec<Label>>,
}

impl GenotypeMatrix {
    pub fn new(
        sample_ids: Vec<String>,
        snp_ids: Vec<String>,
        genotypes: Vec<Genotype>,
        labels: Option<Vec<Label>>,
    ) -> Result<Self> {
        if genotypes.len() != sample_ids.len() * snp_ids.len() {
            return Err(SnpError::Shape(format!(
                "{} genotypes for {} samples x {} SNPs",
                genotypes.len(),
                sample_ids.len(),
                snp_ids.len()
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != sample_ids.len() {
                return Err(SnpError::Shape(format!(
                    "{} labels for {} samples",
                    labels.len(),
                    sample_ids.len()
                )));
            }
        }
        if let Some(dup) = first_duplicate(&sample_ids) {
            return Err(SnpError::DuplicateSample(dup.to_string()));
        }
        if let Some(dup) = first_duplicate(&snp_ids) {
            return Err(SnpError::DuplicateSnp(dup.to_string()));
        }
        Ok(Self {
            sample_ids,
            snp_ids,
            genotypes,
            labels,
        })
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn snp_ids(&self) -> &[String] {
        &self.snp_ids
    }

    pub fn labels(&self) -> Option<&[Label]> {
        self.labels.as_deref()
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn n_snps(&self) -> usize {
        self.snp_ids.len()
    }

    pub fn get(&self, sample: usize, snp: usize) -> Genotype {
        self.genotypes[sample * self.snp_ids.len() + snp]
    }

    pub fn row(&self, sample: usize) -> &[Genotype] {
        let k = self.snp_ids.len();
        &self.genotypes[sample * k..(sample + 1) * k]
    }

    pub fn column(&self, snp: usize) -> impl Iterator<Item = Genotype> + '_ {
        (0..self.n_samples()).map(move |s| self.get(s, snp))
    }

    pub fn snp_index(&self, snp_id: &str) -> Option<usize> {
        self.snp_ids.iter().position(|s| s == snp_id)
    }

    /// Rows at `indices`, in the given order.
    pub fn select_samples(&self, indices: &[usize]) -> GenotypeMatrix {
        let mut genotypes = Vec::with_capacity(indices.len() * self.n_snps());
        for &i in indices {
            genotypes.extend_from_slice(self.row(i));
        }
        GenotypeMatrix {
            sample_ids: indices.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            snp_ids: self.snp_ids.clone(),
            genotypes,
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Columns named by `snp_ids`, in the given order.
    pub fn select_snps(&self, snp_ids: &[String]) -> Result<GenotypeMatrix> {
        let cols = self.column_indices(snp_ids)?;
        let mut genotypes = Vec::with_capacity(self.n_samples() * cols.len());
        for s in 0..self.n_samples() {
            genotypes.extend(cols.iter().map(|&c| self.get(s, c)));
        }
        GenotypeMatrix::new(
            self.sample_ids.clone(),
            snp_ids.to_vec(),
            genotypes,
            self.labels.clone(),
        )
    }

    pub(crate) fn column_indices(&self, snp_ids: &[String]) -> Result<Vec<usize>> {
        let mut unknown = Vec::new();
        let cols: Vec<usize> = snp_ids
            .iter()
            .filter_map(|id| {
                let idx = self.snp_index(id);
                if idx.is_none() {
                    unknown.push(id.clone());
                }
                idx
            })
            .collect();
        if unknown.is_empty() {
            Ok(cols)
        } else {
            Err(SnpError::UnknownSnps(unknown))
        }
    }
}

fn first_duplicate(ids: &[String]) -> Option<&str> {
    let mut seen = HashSet::with_capacity(ids.len());
    ids.iter().find(|id| !seen.insert(id.as_str())).map(String::as_str)
}

/// Parses the genotype CSV: `sample_id,<snp_1>,...,<snp_k>[,label]`.
///
/// With `has_labels` the last header field must be `label` and every row
/// carries a `DF`/`SD` token in that column.
pub fn parse_genotype_matrix<R: BufRead>(reader: R, has_labels: bool) -> Result<GenotypeMatrix> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, line)) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
            None => return Err(SnpError::EmptyInput),
        }
    };
    let fields: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
    if fields[0] != "sample_id" {
        return Err(SnpError::BadHeader(format!(
            "first field must be `sample_id`, found {:?}",
            fields[0]
        )));
    }
    let mut snp_fields = &fields[1..];
    if has_labels {
        match snp_fields.split_last() {
            Some((&"label", rest)) => snp_fields = rest,
            _ => return Err(SnpError::MissingLabelColumn),
        }
    }
    let snp_ids: Vec<String> = snp_fields.iter().map(|s| s.to_string()).collect();
    if snp_ids.iter().any(|s| s.is_empty()) {
        return Err(SnpError::BadHeader("empty SNP id".into()));
    }
    let expected = fields.len();

    let mut sample_ids = Vec::new();
    let mut genotypes = Vec::new();
    let mut labels = has_labels.then(Vec::new);
    for (idx, line) in lines {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let row: Vec<&str> = line.split(',').collect();
        if row.len() != expected {
            return Err(SnpError::WrongColumnCount {
                line: line_no,
                expected,
                found: row.len(),
            });
        }
        sample_ids.push(row[0].to_string());
        for (snp, token) in snp_ids.iter().zip(&row[1..=snp_ids.len()]) {
            let g = Genotype::from_token(token).ok_or_else(|| SnpError::UnknownGenotype {
                line: line_no,
                snp: snp.clone(),
                token: token.to_string(),
            })?;
            genotypes.push(g);
        }
        if let Some(labels) = labels.as_mut() {
            let token = row[expected - 1];
            let label = Label::from_token(token).ok_or_else(|| SnpError::UnknownLabel {
                line: line_no,
                token: token.to_string(),
            })?;
            labels.push(label);
        }
    }
    GenotypeMatrix::new(sample_ids, snp_ids, genotypes, labels)
}

/// Like [`parse_genotype_matrix`], treating a trailing `label` header field as the label column.
pub fn parse_genotype_matrix_auto<R: BufRead>(mut reader: R) -> Result<GenotypeMatrix> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let has_labels = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .map(|h| h.trim_end_matches('\r').rsplit(',').next() == Some("label"))
        .unwrap_or(false);
    parse_genotype_matrix(text.as_bytes(), has_labels)
}

/// Writes `m` in the genotype CSV format; the label column is emitted iff labels are present.
pub fn write_genotype_csv<W: Write>(mut w: W, m: &GenotypeMatrix) -> std::io::Result<()> {
    write!(w, "sample_id")?;
    for snp in m.snp_ids() {
        write!(w, ",{snp}")?;
    }
    if m.labels().is_some() {
        write!(w, ",label")?;
    }
    writeln!(w)?;
    for s in 0..m.n_samples() {
        write!(w, "{}", m.sample_ids()[s])?;
        for g in m.row(s) {
            write!(w, ",{}", g.token())?;
        }
        if let Some(labels) = m.labels() {
            write!(w, ",{}", labels[s])?;
        }
        writeln!(w)?;
    }
    Ok(())
}
