//! Unsupervised model selection. No bilingual data is available, so model
//! quality is scored by `mean_csls`: translate the most frequent source
//! words into a target language and average the CSLS similarity of each to
//! its nearest neighbor. The multilingual criterion is the weighted (by
//! default macro) average over all ordered language pairs.

use std::fmt::Write as _;

use crate::csls::csls_topk_with;
use crate::embeddings::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::mapping::MappingSet;

/// Frequency cutoff for the words scored by `mean_csls`.
pub const DEFAULT_VALIDATION_TOP_K: usize = 10_000;

#[derive(Debug, Clone)]
pub struct PairScore {
    pub src: String,
    pub tgt: String,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    /// Ordered pairs (i, j), i != j, sorted by (i, j).
    pub pairs: Vec<PairScore>,
    pub weights: Vec<f64>,
    pub overall: f64,
}

impl ValidationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("src,tgt,weight,mean_csls\n");
        for (p, w) in self.pairs.iter().zip(&self.weights) {
            let _ = writeln!(out, "{},{},{},{}", p.src, p.tgt, w, p.value);
        }
        let _ = writeln!(out, "overall,,1,{}", self.overall);
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<8} {:<8} {:>10} {:>12}", "src", "tgt", "weight", "mean_csls");
        for (p, w) in self.pairs.iter().zip(&self.weights) {
            let _ = writeln!(out, "{:<8} {:<8} {:>10.6} {:>12.6}", p.src, p.tgt, w, p.value);
        }
        let _ = writeln!(out, "{:<8} {:<8} {:>10} {:>12.6}", "overall", "", "", self.overall);
        out
    }
}

/// Mean CSLS similarity of the `top_k` most frequent words of language i,
/// composed into language j's space by `M_j^T M_i`, to their nearest
/// neighbors among the `top_k` most frequent raw words of language j.
/// Both cutoffs clamp to the actual vocabulary sizes.
pub fn mean_csls(
    space_src: &EmbeddingSpace,
    space_dst: &EmbeddingSpace,
    map_src: &crate::linalg::Matrix,
    map_dst: &crate::linalg::Matrix,
    top_k: usize,
    n: usize,
) -> Result<f64> {
    if space_src.is_empty() || space_dst.is_empty() {
        return Err(Error::Argument(
            "mean_csls needs non-empty vocabularies".into(),
        ));
    }
    let src_pool = space_src.frequent_slice(top_k);
    let dst_pool = space_dst.frequent_slice(top_k);
    let n = n.min(dst_pool.rows).min(src_pool.rows).max(1);
    // Row form of M_j^T M_i x: X (M_i^T M_j).
    let composed = map_src.matmul_tn(map_dst)?;
    let queries = src_pool.matmul(composed.as_ref())?;
    let best = csls_topk_with(queries.as_ref(), dst_pool, n, 1, None, None)?;
    let total: f64 = best.iter().map(|r| r.scores[0]).sum();
    Ok(total / best.len() as f64)
}

/// The multilingual criterion: mean_csls for every ordered pair, combined
/// with the given weights (uniform over the N(N-1) ordered pairs when
/// omitted). Weights must be non-negative and sum to one.
pub fn multilingual_validation(
    spaces: &[EmbeddingSpace],
    mappings: &MappingSet,
    weights: Option<&[f64]>,
    top_k: usize,
    n: usize,
) -> Result<ValidationReport> {
    let count = spaces.len();
    if count != mappings.len() {
        return Err(Error::Argument(format!(
            "{count} spaces for {} mappings",
            mappings.len()
        )));
    }
    if count < 2 {
        return Err(Error::Argument(
            "multilingual validation needs at least two languages".into(),
        ));
    }
    let n_pairs = count * (count - 1);
    let weights: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != n_pairs {
                return Err(Error::Argument(format!(
                    "{} weights for {n_pairs} ordered pairs",
                    w.len()
                )));
            }
            if w.iter().any(|&x| x < 0.0) {
                return Err(Error::Argument("pair weights must be non-negative".into()));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Argument(format!(
                    "pair weights sum to {sum}, expected 1"
                )));
            }
            w.to_vec()
        }
        None => vec![1.0 / n_pairs as f64; n_pairs],
    };

    let mut pairs = Vec::with_capacity(n_pairs);
    let mut overall = 0.0;
    let mut w_iter = weights.iter();
    for i in 0..count {
        for j in 0..count {
            if i == j {
                continue;
            }
            let value = mean_csls(
                &spaces[i],
                &spaces[j],
                mappings.map(i),
                mappings.map(j),
                top_k,
                n,
            )?;
            let w = *w_iter.next().expect("weight per ordered pair");
            overall += w * value;
            pairs.push(PairScore {
                src: spaces[i].lang.clone(),
                tgt: spaces[j].lang.clone(),
                value,
            });
        }
    }
    Ok(ValidationReport {
        pairs,
        weights,
        overall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::Vocabulary;
    use crate::linalg::{gaussian_matrix, random_orthogonal, Matrix};
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn space_from(lang: &str, m: Matrix) -> EmbeddingSpace {
        let mut vocab = Vocabulary::new();
        for i in 0..m.rows() {
            vocab.push(&format!("w{i}"));
        }
        EmbeddingSpace::new(lang, vocab, m).unwrap()
    }

    #[test]
    fn identical_spaces_identity_maps_score_zero() {
        let mut rng = StdRng::seed_from_u64(2);
        let m = gaussian_matrix(40, 6, &mut rng);
        let a = space_from("a", m.clone());
        let b = space_from("b", m);
        let eye = Matrix::identity(6);
        // n = 1: every word's nearest neighbor is itself, CSLS = 2 - 1 - 1 = 0.
        let v = mean_csls(&a, &b, &eye, &eye, 1000, 1).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn perturbing_a_mapping_lowers_the_score() {
        let mut rng = StdRng::seed_from_u64(3);
        let base = gaussian_matrix(60, 8, &mut rng);
        let rot = random_orthogonal(8, 11);
        // Language b is an exact rotation of a; the true mapping for a is rot.
        let b_matrix = base.matmul_nt(&rot).unwrap();
        let a = space_from("a", base);
        let b = space_from("b", b_matrix);
        let good = mean_csls(&a, &b, &rot, &Matrix::identity(8), 1000, 5).unwrap();
        let mut worse_count = 0;
        for seed in 0..20 {
            let bad = random_orthogonal(8, 100 + seed);
            let v = mean_csls(&a, &b, &bad, &Matrix::identity(8), 1000, 5).unwrap();
            if v < good {
                worse_count += 1;
            }
        }
        assert!(worse_count >= 19, "random mappings scored above the truth");
    }

    #[test]
    fn score_invariant_to_uniform_rescaling_of_target() {
        let mut rng = StdRng::seed_from_u64(4);
        let base = gaussian_matrix(50, 5, &mut rng);
        let mut scaled = base.clone();
        scaled.scale(3.7);
        let a = space_from("a", gaussian_matrix(50, 5, &mut rng));
        let eye = Matrix::identity(5);
        let v1 = mean_csls(&a, &space_from("b", base), &eye, &eye, 1000, 3).unwrap();
        let v2 = mean_csls(&a, &space_from("b", scaled), &eye, &eye, 1000, 3).unwrap();
        assert!((v1 - v2).abs() < 1e-9);
    }

    #[test]
    fn uniform_weights_average_pairs() {
        let mut rng = StdRng::seed_from_u64(5);
        let spaces: Vec<EmbeddingSpace> = (0..2)
            .map(|i| space_from(&format!("l{i}"), gaussian_matrix(30, 4, &mut rng)))
            .collect();
        let maps = MappingSet::identity(vec!["l0".into(), "l1".into()], 0, 4).unwrap();
        let report = multilingual_validation(&spaces, &maps, None, 100, 3).unwrap();
        assert_eq!(report.pairs.len(), 2);
        let mean = (report.pairs[0].value + report.pairs[1].value) / 2.0;
        assert!((report.overall - mean).abs() < 1e-12);
    }

    #[test]
    fn degenerate_weights_select_one_pair() {
        let mut rng = StdRng::seed_from_u64(6);
        let spaces: Vec<EmbeddingSpace> = (0..3)
            .map(|i| space_from(&format!("l{i}"), gaussian_matrix(25, 4, &mut rng)))
            .collect();
        let maps =
            MappingSet::identity(spaces.iter().map(|s| s.lang.clone()).collect(), 0, 4).unwrap();
        let mut weights = vec![0.0; 6];
        weights[0] = 1.0; // the (0,1) pair under sorted ordering
        let report = multilingual_validation(&spaces, &maps, Some(&weights), 100, 2).unwrap();
        assert!((report.overall - report.pairs[0].value).abs() < 1e-12);

        let uniform = multilingual_validation(&spaces, &maps, None, 100, 2).unwrap();
        assert!(uniform.weights.iter().all(|&w| (w - 1.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn bad_weights_are_rejected() {
        let mut rng = StdRng::seed_from_u64(7);
        let spaces: Vec<EmbeddingSpace> = (0..2)
            .map(|i| space_from(&format!("l{i}"), gaussian_matrix(20, 3, &mut rng)))
            .collect();
        let maps = MappingSet::identity(vec!["l0".into(), "l1".into()], 0, 3).unwrap();
        assert!(multilingual_validation(&spaces, &maps, Some(&[0.5]), 100, 2).is_err());
        assert!(multilingual_validation(&spaces, &maps, Some(&[0.7, 0.7]), 100, 2).is_err());
        assert!(multilingual_validation(&spaces, &maps, Some(&[1.5, -0.5]), 100, 2).is_err());
    }

    #[test]
    fn report_renders_as_csv_and_table() {
        let mut rng = StdRng::seed_from_u64(10);
        let spaces: Vec<EmbeddingSpace> = (0..2)
            .map(|i| space_from(&format!("l{i}"), gaussian_matrix(20, 4, &mut rng)))
            .collect();
        let maps = MappingSet::identity(vec!["l0".into(), "l1".into()], 0, 4).unwrap();
        let report = multilingual_validation(&spaces, &maps, None, 20, 2).unwrap();
        let csv = report.to_csv();
        assert!(csv.starts_with("src,tgt,weight,mean_csls\n"));
        assert!(csv.contains("overall"));
        let table = report.to_table();
        assert!(table.contains("l0"));
        assert!(table.contains("overall"));
    }

    #[test]
    fn invariant_under_common_shared_space_rotation() {
        let mut rng = StdRng::seed_from_u64(8);
        let spaces: Vec<EmbeddingSpace> = (0..3)
            .map(|i| space_from(&format!("l{i}"), gaussian_matrix(40, 6, &mut rng)))
            .collect();
        let langs: Vec<String> = spaces.iter().map(|s| s.lang.clone()).collect();
        let mut maps = Vec::new();
        for i in 0..3 {
            maps.push(random_orthogonal(6, 50 + i as u64));
        }
        let set = MappingSet::from_parts(langs.clone(), 0, maps.clone()).unwrap();
        let base = multilingual_validation(&spaces, &set, None, 100, 3).unwrap();

        // Post-compose every mapping with one common rotation Q (column
        // convention M -> Q M, i.e. row convention X M^T -> X M^T Q^T).
        let q = random_orthogonal(6, 99);
        let rotated: Vec<Matrix> = maps.iter().map(|m| q.matmul(m).unwrap()).collect();
        let set_q = MappingSet::from_parts(langs, 0, rotated).unwrap();
        let rotated_report = multilingual_validation(&spaces, &set_q, None, 100, 3).unwrap();
        assert!((base.overall - rotated_report.overall).abs() < 1e-9);
    }
}
