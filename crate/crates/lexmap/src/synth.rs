//! Synthetic language families with known ground-truth alignment.
//!
//! A family shares one latent matrix of unit-norm Gaussian rows; each
//! language sees it through its own orthogonal rotation plus independent
//! Gaussian noise. Rank r of every language is "the same word", so the gold
//! dictionary for any pair is the rank identity and the true mapping between
//! any two languages is the composition of their rotations. This is the only
//! desk-scale oracle that exercises the whole pipeline end to end.

use std::path::Path;

use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::embeddings::{EmbeddingSpace, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::{word_translation_precision, EvalDictionary, PairPrecision};
use crate::linalg::{gaussian_matrix, polar_orthogonal, random_orthogonal_from, Matrix};
use crate::mapping::MappingSet;

/// Makes the designated languages geometric neighbors: their rotations are
/// blended toward one shared cluster rotation, so every member differs from
/// it (and from the other members) only by a small extra rotation. At
/// `tightness` 0 the generator is bitwise identical to the unclustered one;
/// near 1 the members nearly coincide.
#[derive(Debug, Clone)]
pub struct ClusterSpec {
    pub members: Vec<usize>,
    pub tightness: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticFamily {
    pub latent: Matrix,
    pub rotations: Vec<Matrix>,
    pub sigmas: Vec<f64>,
    pub spaces: Vec<EmbeddingSpace>,
}

impl SyntheticFamily {
    pub fn n_langs(&self) -> usize {
        self.spaces.len()
    }

    pub fn dim(&self) -> usize {
        self.latent.cols()
    }

    pub fn vocab_size(&self) -> usize {
        self.latent.rows()
    }

    /// The rank-identity gold dictionary for a directed pair.
    pub fn gold_dictionary(&self, src: usize, tgt: usize) -> EvalDictionary {
        EvalDictionary::from_pairs(
            self.spaces[src].lang.clone(),
            self.spaces[tgt].lang.clone(),
            (0..self.vocab_size()).map(|r| (format!("w{r}"), format!("w{r}"))),
        )
        .expect("identity dictionary is never empty")
    }

    /// Gold dictionaries for every ordered pair, sorted by (src, tgt).
    pub fn gold_dictionaries(&self) -> Vec<EvalDictionary> {
        let n = self.n_langs();
        let mut out = Vec::with_capacity(n * (n - 1));
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    out.push(self.gold_dictionary(i, j));
                }
            }
        }
        out
    }

    /// The exact mapping set for a chosen target: `M_l = R_t R_l^T`.
    pub fn true_mappings(&self, target: usize) -> Result<MappingSet> {
        let langs = self.spaces.iter().map(|s| s.lang.clone()).collect();
        let mut maps = Vec::with_capacity(self.n_langs());
        for l in 0..self.n_langs() {
            // Row l's space satisfies x_l = R_l z, so the encoder into the
            // target space is R_t R_l^T.
            maps.push(self.rotations[target].matmul_nt(&self.rotations[l])?);
        }
        MappingSet::from_parts(langs, target, maps)
    }

    /// Write every language's embeddings (and optionally the gold
    /// dictionaries) under `dir`, so the file-based CLI path can run on
    /// synthetic data. Returns the per-language embedding paths.
    pub fn export(&self, dir: impl AsRef<Path>, with_dictionaries: bool) -> Result<Vec<std::path::PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let eye = Matrix::identity(self.dim());
        let mut paths = Vec::new();
        for space in &self.spaces {
            let path = dir.join(format!("{}.vec", space.lang));
            crate::embeddings::export_mapped_embeddings(space, &eye, &path)?;
            paths.push(path);
        }
        if with_dictionaries {
            for i in 0..self.n_langs() {
                for j in 0..self.n_langs() {
                    if i == j {
                        continue;
                    }
                    let path = dir.join(format!(
                        "{}-{}.dict",
                        self.spaces[i].lang, self.spaces[j].lang
                    ));
                    let body: String = (0..self.vocab_size())
                        .map(|r| format!("w{r} w{r}\n"))
                        .collect();
                    std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
                }
            }
        }
        Ok(paths)
    }
}

fn unit_norm_rows(m: &mut Matrix) {
    for r in 0..m.rows() {
        let row = m.row_mut(r);
        let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in row {
                *v /= norm;
            }
        }
    }
}

/// Generate a family of `n_langs` synthetic languages with vocabulary size
/// `vocab`, dimension `dim` and per-language noise `sigma`, deterministic
/// per seed. Language l's matrix is `latent * R_l^T + sigma * noise`.
pub fn generate_family(
    n_langs: usize,
    vocab: usize,
    dim: usize,
    sigma: f64,
    seed: u64,
    cluster: Option<&ClusterSpec>,
) -> Result<SyntheticFamily> {
    if n_langs == 0 || dim == 0 {
        return Err(Error::Argument("need at least one language and dimension".into()));
    }
    if vocab < dim {
        return Err(Error::Argument(format!(
            "vocabulary size {vocab} must be at least the dimension {dim}"
        )));
    }
    if let Some(c) = cluster {
        if !(0.0..1.0).contains(&c.tightness) {
            return Err(Error::Argument(format!(
                "cluster tightness must be in [0, 1), got {}",
                c.tightness
            )));
        }
        if let Some(&bad) = c.members.iter().find(|&&m| m >= n_langs) {
            return Err(Error::Argument(format!(
                "cluster member {bad} out of range for {n_langs} languages"
            )));
        }
    }

    let mut latent_rng = StdRng::seed_from_u64(seed);
    // Word embedding clouds are clustered (topics, parts of speech) and
    // anisotropic; an unstructured zero-mean Gaussian is rotation- and
    // sign-invariant in distribution, leaving adversarial training nothing
    // to align on, and a mixture of interchangeable clusters admits spurious
    // permutation alignments. The latent is therefore an asymmetric Gaussian
    // mixture: Zipf-like cluster sizes and per-cluster angular spreads make
    // every cluster's signature unique, and a mildly decaying per-axis
    // spectrum orients the whole cloud. Rows end up unit norm.
    let n_clusters = dim.min(vocab / 8).max(1);
    let mut centers = gaussian_matrix(n_clusters, dim, &mut latent_rng);
    unit_norm_rows(&mut centers);
    let weights: Vec<f64> = (0..n_clusters).map(|k| 1.0 / (k + 1) as f64).collect();
    let total: f64 = weights.iter().sum();
    let mut assignment = Vec::with_capacity(vocab);
    for (k, w) in weights.iter().enumerate() {
        let count = ((w / total) * vocab as f64).ceil() as usize;
        for _ in 0..count {
            if assignment.len() < vocab {
                assignment.push(k);
            }
        }
    }
    while assignment.len() < vocab {
        assignment.push(n_clusters - 1);
    }
    let mut latent = gaussian_matrix(vocab, dim, &mut latent_rng);
    for r in 0..vocab {
        let k = assignment[r];
        let spread = 0.25 + 0.5 * k as f64 / n_clusters as f64;
        let center = centers.row(k);
        let row = latent.row_mut(r);
        for (c, v) in row.iter_mut().enumerate() {
            let axis_scale = (1.0 + c as f64).powf(-0.25);
            *v = axis_scale * (center[c] + spread * *v);
        }
    }
    unit_norm_rows(&mut latent);

    let cluster_rotation = cluster
        .filter(|c| c.tightness > 0.0)
        .map(|_| random_orthogonal_from(dim, &mut StdRng::seed_from_u64(seed ^ 0xC1A5)));

    let mut rotations = Vec::with_capacity(n_langs);
    let mut spaces = Vec::with_capacity(n_langs);
    let mut sigmas = Vec::with_capacity(n_langs);
    for l in 0..n_langs {
        let lang_seed = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(l as u64 + 1));
        let mut lang_rng = StdRng::seed_from_u64(lang_seed);
        let base = random_orthogonal_from(dim, &mut lang_rng);
        let rotation = match (&cluster_rotation, cluster) {
            (Some(common), Some(c)) if c.members.contains(&l) => {
                // Blend toward the shared rotation and project back onto the
                // orthogonal manifold; the member keeps a small own rotation.
                let mut blend = base.clone();
                blend.scale(1.0 - c.tightness);
                blend.add_scaled(common, c.tightness)?;
                polar_orthogonal(&blend)?
            }
            _ => base,
        };
        let mut matrix = latent.matmul_nt(&rotation)?;
        if sigma > 0.0 {
            let noise = gaussian_matrix(vocab, dim, &mut lang_rng);
            matrix.add_scaled(&noise, sigma)?;
        }
        let mut vocab_l = Vocabulary::new();
        for r in 0..vocab {
            vocab_l.push(&format!("w{r}"));
        }
        spaces.push(EmbeddingSpace::new(format!("s{l}"), vocab_l, matrix)?);
        rotations.push(rotation);
        sigmas.push(sigma);
    }

    Ok(SyntheticFamily {
        latent,
        rotations,
        sigmas,
        spaces,
    })
}

/// Precision@k of a mapping set against the family's rank-identity gold
/// dictionaries, for every ordered pair.
pub fn gold_precision(
    family: &SyntheticFamily,
    mappings: &MappingSet,
    k: usize,
    csls_n: usize,
) -> Result<Vec<PairPrecision>> {
    if mappings.dim() != family.dim() {
        return Err(Error::Shape(format!(
            "mappings are {}-dimensional, family is {}-dimensional",
            mappings.dim(),
            family.dim()
        )));
    }
    let n = family.n_langs();
    let mut out = Vec::with_capacity(n * (n - 1));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let dict = family.gold_dictionary(i, j);
            let report = word_translation_precision(
                &dict,
                &family.spaces[i],
                &family.spaces[j],
                mappings.map(i),
                mappings.map(j),
                &[k],
                csls_n,
            )?;
            out.push(PairPrecision {
                src: family.spaces[i].lang.clone(),
                tgt: family.spaces[j].lang.clone(),
                precision: report.precision_at(k).unwrap(),
                coverage: report.coverage,
            });
        }
    }
    Ok(out)
}

pub fn mean_precision(pairs: &[PairPrecision]) -> f64 {
    pairs.iter().map(|p| p.precision).sum::<f64>() / pairs.len() as f64
}
