use std::collections::HashSet;
use std::io::{BufRead, Write};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{Genotype, GenotypeMatrix, Result, SnpError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SubsetProvenance {
    AfdThreshold { afd_threshold: f64 },
    ExplicitList,
}

/// Ordered selection of SNP columns that feeds the networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnpSubset {
    pub snp_ids: Vec<String>,
    pub provenance: SubsetProvenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub afd_values: Option<IndexMap<String, f64>>,
}

impl SnpSubset {
    pub fn len(&self) -> usize {
        self.snp_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snp_ids.is_empty()
    }

    /// Warning for a threshold selection that kept nothing.
    pub fn warning(&self) -> Option<String> {
        match self.provenance {
            SubsetProvenance::AfdThreshold { afd_threshold } if self.is_empty() => {
                Some(format!("no SNP has AFD below {afd_threshold}; subset is empty"))
            }
            _ => None,
        }
    }

    /// One SNP id per line.
    pub fn write_ids<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for id in &self.snp_ids {
            writeln!(w, "{id}")?;
        }
        Ok(())
    }

    pub fn read_ids<R: BufRead>(r: R) -> std::io::Result<Vec<String>> {
        let mut ids = Vec::new();
        for line in r.lines() {
            let line = line?;
            let id = line.trim();
            if !id.is_empty() {
                ids.push(id.to_string());
            }
        }
        Ok(ids)
    }
}

/// SNPs whose AFD is strictly below `threshold`, in the map's (source column) order.
pub fn select_snps_by_afd(afd_map: &IndexMap<String, f64>, threshold: f64) -> Result<SnpSubset> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(SnpError::InvalidThreshold(threshold));
    }
    let kept: IndexMap<String, f64> = afd_map
        .iter()
        .filter(|(_, &d)| d < threshold)
        .map(|(id, &d)| (id.clone(), d))
        .collect();
    Ok(SnpSubset {
        snp_ids: kept.keys().cloned().collect(),
        provenance: SubsetProvenance::AfdThreshold { afd_threshold: threshold },
        afd_values: Some(kept),
    })
}

/// Explicit SNP list against a universe of available ids; order is preserved.
pub fn select_snps_from_universe(universe: &[String], ids: &[String]) -> Result<SnpSubset> {
    let mut seen = HashSet::with_capacity(ids.len());
    if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(SnpError::DuplicateListId(dup.clone()));
    }
    let available: HashSet<&str> = universe.iter().map(String::as_str).collect();
    let unknown: Vec<String> = ids
        .iter()
        .filter(|id| !available.contains(id.as_str()))
        .cloned()
        .collect();
    if !unknown.is_empty() {
        return Err(SnpError::UnknownSnps(unknown));
    }
    Ok(SnpSubset {
        snp_ids: ids.to_vec(),
        provenance: SubsetProvenance::ExplicitList,
        afd_values: None,
    })
}

pub fn select_snps_by_list(m: &GenotypeMatrix, ids: &[String]) -> Result<SnpSubset> {
    select_snps_from_universe(m.snp_ids(), ids)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    Reject,
    /// Replace with the most frequent observed genotype of the SNP, ties toward HomRef.
    ImputeMode,
}

/// One individual's selected SNPs on the {0, 0.5, 1} scale.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedProfile(pub Vec<f64>);

impl EncodedProfile {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

pub fn encode_profiles(
    m: &GenotypeMatrix,
    subset: &SnpSubset,
    policy: MissingPolicy,
) -> Result<Vec<EncodedProfile>> {
    let cols = m.column_indices(&subset.snp_ids)?;
    let fill: Vec<Option<f64>> = match policy {
        MissingPolicy::Reject => vec![None; cols.len()],
        MissingPolicy::ImputeMode => cols
            .iter()
            .map(|&c| column_mode(m, c).map(|g| g.encode()))
            .collect::<Result<_>>()?,
    };
    (0..m.n_samples())
        .map(|s| {
            cols.iter()
                .zip(&fill)
                .map(|(&c, fill)| {
                    m.get(s, c).encode().or(*fill).ok_or_else(|| SnpError::MissingGenotype {
                        sample: m.sample_ids()[s].clone(),
                        snp: m.snp_ids()[c].clone(),
                    })
                })
                .collect::<Result<Vec<f64>>>()
                .map(EncodedProfile)
        })
        .collect()
}

fn column_mode(m: &GenotypeMatrix, col: usize) -> Result<Genotype> {
    let mut counts = [0usize; 3];
    for dosage in m.column(col).filter_map(|g| g.alt_dosage()) {
        counts[dosage] += 1;
    }
    let mut best = 0;
    for k in 1..3 {
        if counts[k] > counts[best] {
            best = k;
        }
    }
    if counts[best] == 0 {
        return Err(SnpError::NoObservedGenotypes(m.snp_ids()[col].clone()));
    }
    Ok([Genotype::HomRef, Genotype::Het, Genotype::HomAlt][best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snp::parse_genotype_matrix;

    fn ids(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn afd_map(pairs: &[(&str, f64)]) -> IndexMap<String, f64> {
        pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
    }

    #[test]
    fn encodes_three_point_scale() {
        let m = parse_genotype_matrix("sample_id,a,b,c\ns,0,1,2\n".as_bytes(), false).unwrap();
        let subset = select_snps_by_list(&m, &ids(&["a", "b", "c"])).unwrap();
        let enc = encode_profiles(&m, &subset, MissingPolicy::Reject).unwrap();
        assert_eq!(enc[0].values(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn missing_policies() {
        let m = parse_genotype_matrix("sample_id,a\ns1,2\ns2,2\ns3,.\n".as_bytes(), false).unwrap();
        let subset = select_snps_by_list(&m, &ids(&["a"])).unwrap();
        let err = encode_profiles(&m, &subset, MissingPolicy::Reject).unwrap_err();
        match err {
            SnpError::MissingGenotype { sample, snp } => {
                assert_eq!(sample, "s3");
                assert_eq!(snp, "a");
            }
            other => panic!("unexpected {other:?}"),
        }
        let enc = encode_profiles(&m, &subset, MissingPolicy::ImputeMode).unwrap();
        assert_eq!(enc[2].values(), &[1.0]);
    }

    #[test]
    fn impute_mode_ties_go_to_hom_ref() {
        let m = parse_genotype_matrix("sample_id,a\ns1,2\ns2,0\ns3,.\n".as_bytes(), false).unwrap();
        let subset = select_snps_by_list(&m, &ids(&["a"])).unwrap();
        let enc = encode_profiles(&m, &subset, MissingPolicy::ImputeMode).unwrap();
        assert_eq!(enc[2].values(), &[0.0]);
    }

    #[test]
    fn threshold_selection() {
        let map = afd_map(&[("a", 0.05), ("b", 0.12), ("c", 0.07), ("d", 1.0)]);
        let s = select_snps_by_afd(&map, 0.10).unwrap();
        assert_eq!(s.snp_ids, ids(&["a", "c"]));
        assert_eq!(s.afd_values.as_ref().unwrap().len(), 2);

        // strict comparison
        let s = select_snps_by_afd(&map, 0.07).unwrap();
        assert_eq!(s.snp_ids, ids(&["a"]));

        let empty = select_snps_by_afd(&map, 0.0).unwrap();
        assert!(empty.is_empty());
        assert!(empty.warning().is_some());

        let all_but_one = select_snps_by_afd(&map, 1.0).unwrap();
        assert_eq!(all_but_one.len(), 3);
        assert!(matches!(
            select_snps_by_afd(&map, 1.0 + 1e-9),
            Err(SnpError::InvalidThreshold(_))
        ));
        assert!(select_snps_by_afd(&map, f64::NAN).is_err());
    }

    #[test]
    fn list_selection() {
        let universe = ids(&["a", "b", "c"]);
        let s = select_snps_from_universe(&universe, &ids(&["c", "a"])).unwrap();
        assert_eq!(s.snp_ids, ids(&["c", "a"]));
        assert_eq!(s.provenance, SubsetProvenance::ExplicitList);
        assert!(select_snps_from_universe(&universe, &[]).unwrap().is_empty());
        match select_snps_from_universe(&universe, &ids(&["a", "zz"])) {
            Err(SnpError::UnknownSnps(u)) => assert_eq!(u, ids(&["zz"])),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            select_snps_from_universe(&universe, &ids(&["a", "a"])),
            Err(SnpError::DuplicateListId(_))
        ));
    }

    #[test]
    fn ids_file_round_trip() {
        let s = select_snps_from_universe(&ids(&["a", "b"]), &ids(&["b", "a"])).unwrap();
        let mut buf = Vec::new();
        s.write_ids(&mut buf).unwrap();
        assert_eq!(SnpSubset::read_ids(&buf[..]).unwrap(), s.snp_ids);
    }
}
