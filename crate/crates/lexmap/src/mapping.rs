//! The per-language encoder matrices into the shared target space.

use crate::error::{Error, Result};
use crate::linalg::{orthogonality_residual, orthogonalize_update, MatRef, Matrix};

/// One (approximately) orthogonal d x d encoder per language. The target
/// language's encoder is pinned to the identity and never trained, so only
/// N-1 mappings carry parameters. Decoding back out of the shared space is
/// multiplication by the transpose.
#[derive(Debug, Clone)]
pub struct MappingSet {
    langs: Vec<String>,
    target: usize,
    maps: Vec<Matrix>,
}

impl MappingSet {
    /// All encoders start at the identity: an exactly orthogonal init.
    pub fn identity(langs: Vec<String>, target: usize, dim: usize) -> Result<Self> {
        if target >= langs.len() {
            return Err(Error::Argument(format!(
                "target index {target} out of range for {} languages",
                langs.len()
            )));
        }
        let maps = (0..langs.len()).map(|_| Matrix::identity(dim)).collect();
        Ok(MappingSet {
            langs,
            target,
            maps,
        })
    }

    pub fn from_parts(langs: Vec<String>, target: usize, maps: Vec<Matrix>) -> Result<Self> {
        if target >= langs.len() {
            return Err(Error::Argument(format!(
                "target index {target} out of range for {} languages",
                langs.len()
            )));
        }
        if maps.len() != langs.len() {
            return Err(Error::Argument(format!(
                "{} matrices for {} languages",
                maps.len(),
                langs.len()
            )));
        }
        let dim = maps[0].rows();
        for m in &maps {
            if m.rows() != dim || m.cols() != dim {
                return Err(Error::Shape(format!(
                    "mapping matrices must all be {dim}x{dim}"
                )));
            }
        }
        Ok(MappingSet {
            langs,
            target,
            maps,
        })
    }

    pub fn len(&self) -> usize {
        self.langs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.langs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.maps[0].rows()
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn langs(&self) -> &[String] {
        &self.langs
    }

    pub fn lang_index(&self, code: &str) -> Option<usize> {
        self.langs.iter().position(|l| l == code)
    }

    pub fn map(&self, lang: usize) -> &Matrix {
        &self.maps[lang]
    }

    pub fn maps(&self) -> &[Matrix] {
        &self.maps
    }

    pub fn is_trainable(&self, lang: usize) -> bool {
        lang != self.target
    }

    /// Replace a trainable mapping; the target mapping is refused.
    pub fn set_map(&mut self, lang: usize, m: Matrix) -> Result<()> {
        if lang == self.target {
            return Err(Error::Argument(
                "the target-language mapping is frozen at the identity".into(),
            ));
        }
        if m.rows() != self.dim() || m.cols() != self.dim() {
            return Err(Error::Shape(format!(
                "mapping must be {0}x{0}",
                self.dim()
            )));
        }
        self.maps[lang] = m;
        Ok(())
    }

    /// Apply `theta -= lr * grad` to a trainable mapping; no-op on the target.
    pub fn sgd_step(&mut self, lang: usize, grad: &Matrix, lr: f64) -> Result<()> {
        if lang == self.target {
            return Ok(());
        }
        self.maps[lang].add_scaled(grad, -lr)
    }

    /// Rows into the shared space: `X M_l^T`.
    pub fn encode(&self, x: MatRef<'_>, lang: usize) -> Result<Matrix> {
        x.matmul_nt(self.maps[lang].as_ref())
    }

    /// `M_src^T M_dst`: right-multiplying source rows by this lands them in
    /// the destination language's space (encode, then decode).
    pub fn compose(&self, src: usize, dst: usize) -> Result<Matrix> {
        self.maps[src].matmul_tn(&self.maps[dst])
    }

    /// Source rows converted into the destination space.
    pub fn convert(&self, x: MatRef<'_>, src: usize, dst: usize) -> Result<Matrix> {
        x.matmul(self.compose(src, dst)?.as_ref())
    }

    /// One orthogonalization update on every trainable mapping.
    pub fn orthogonalize(&mut self, beta: f64) -> Result<()> {
        for l in 0..self.maps.len() {
            if l == self.target {
                continue;
            }
            self.maps[l] = orthogonalize_update(&self.maps[l], beta)?;
        }
        Ok(())
    }

    /// Worst `max_abs(M^T M - I)` over all mappings.
    pub fn max_orthogonality_residual(&self) -> f64 {
        self.maps
            .iter()
            .map(orthogonality_residual)
            .fold(0.0, f64::max)
    }
}

/// A per-epoch snapshot kept when a trainer records history.
#[derive(Debug, Clone)]
pub struct EpochCheckpoint {
    pub epoch: usize,
    pub mappings: MappingSet,
    pub val_score: f64,
}
