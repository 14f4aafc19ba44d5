//! Pseudo-supervised refinement.
//!
//! Adversarial training aligns frequent words well but its gradient signal
//! is noisy for rare ones. Refinement induces, for every ordered language
//! pair, a pseudo-dictionary of mutual CSLS nearest neighbors among the most
//! frequent words, then minimizes the mean-square distance between the
//! shared-space images of the paired words, with the same per-step
//! orthogonalization as the adversarial stage. The closed-form orthogonal
//! Procrustes solver lives here too: it is the supervised baseline and the
//! oracle the synthetic tests check against.

use std::fmt::Write as _;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::csls::csls_best_both;
use crate::embeddings::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::linalg::{jacobi_svd, MatRef, Matrix};
use crate::mapping::{EpochCheckpoint, MappingSet};
use crate::nn::{mse_loss, SgdState};
use crate::validation::multilingual_validation;

/// Pseudo-dictionary of (source rank, target rank) pairs for one directed
/// language pair. A pair is present iff the two words are each other's CSLS
/// nearest neighbors within the induction cutoff.
#[derive(Debug, Clone)]
pub struct Lexicon {
    pub src_lang: String,
    pub tgt_lang: String,
    pub pairs: Vec<(usize, usize)>,
}

impl Lexicon {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// TSV rendering (`src_word<TAB>tgt_word`) for inspection.
    pub fn to_tsv(&self, src: &EmbeddingSpace, tgt: &EmbeddingSpace) -> String {
        let mut out = String::new();
        for &(a, b) in &self.pairs {
            let _ = writeln!(out, "{}\t{}", src.vocab.word(a), tgt.vocab.word(b));
        }
        out
    }
}

/// Hyperparameters of the refinement stage.
#[derive(Debug, Clone)]
pub struct MpsrConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub lr_shrink: f64,
    pub min_lr: f64,
    /// Lexica are induced among the `lexicon_cutoff` most frequent words.
    pub lexicon_cutoff: usize,
    pub csls_n: usize,
    /// Re-induce the lexica at the start of every epoch (not just the first).
    pub reinduce_every_epoch: bool,
    /// Pairs with fewer induced entries than this are skipped with a warning.
    pub min_lexicon_size: usize,
    pub beta: f64,
    /// Cap on the max-abs entry of one mapping update; 0 disables.
    pub update_clip: f64,
    pub val_top_k: usize,
    pub seed: u64,
    pub record_history: bool,
    pub track_orthogonality: bool,
}

impl Default for MpsrConfig {
    fn default() -> Self {
        MpsrConfig {
            epochs: 5,
            steps_per_epoch: 3000,
            batch_size: 32,
            lr: 0.1,
            lr_decay: 0.98,
            lr_shrink: 0.5,
            min_lr: 1e-6,
            lexicon_cutoff: 15_000,
            csls_n: crate::csls::DEFAULT_CSLS_NEIGHBORS,
            reinduce_every_epoch: true,
            min_lexicon_size: 50,
            beta: 0.001,
            update_clip: 0.0,
            val_top_k: crate::validation::DEFAULT_VALIDATION_TOP_K,
            seed: 42,
            record_history: false,
            track_orthogonality: false,
        }
    }
}

impl MpsrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0
            || self.steps_per_epoch == 0
            || self.batch_size == 0
            || self.lexicon_cutoff == 0
            || self.csls_n == 0
        {
            return Err(Error::Argument(
                "epochs, steps, batch size, cutoff and csls_n must be positive".into(),
            ));
        }
        if self.lr <= 0.0 || self.beta <= 0.0 {
            return Err(Error::Argument("lr and beta must be positive".into()));
        }
        SgdState::new(self.lr, self.lr_decay, self.lr_shrink, self.min_lr)?;
        Ok(())
    }
}

/// Induce the mutual-nearest-neighbor lexicon for one directed pair. Both
/// vocabularies are truncated to `cutoff` (clamped), mapped into the shared
/// space, and scored by CSLS with penalties computed inside the cutoff pool.
pub fn induce_lexicon(
    space_src: &EmbeddingSpace,
    space_tgt: &EmbeddingSpace,
    map_src: &Matrix,
    map_tgt: &Matrix,
    cutoff: usize,
    n: usize,
) -> Result<Lexicon> {
    if cutoff == 0 {
        return Err(Error::Argument("cutoff must be at least 1".into()));
    }
    let src_pool = space_src.frequent_slice(cutoff);
    let tgt_pool = space_tgt.frequent_slice(cutoff);
    let mapped_src = src_pool.matmul_nt(map_src.as_ref())?;
    let mapped_tgt = tgt_pool.matmul_nt(map_tgt.as_ref())?;
    let n = n.min(src_pool.rows).min(tgt_pool.rows).max(1);

    let (best_tgt_for_src, best_src_for_tgt) =
        csls_best_both(mapped_src.as_ref(), mapped_tgt.as_ref(), n)?;

    let mut pairs = Vec::new();
    for (a, &(b, _)) in best_tgt_for_src.iter().enumerate() {
        if best_src_for_tgt[b].0 == a {
            pairs.push((a, b));
        }
    }
    Ok(Lexicon {
        src_lang: space_src.lang.clone(),
        tgt_lang: space_tgt.lang.clone(),
        pairs,
    })
}

/// One refinement update on a batch of lexicon pairs: pull the shared-space
/// images of paired words together under the mean-square loss, update both
/// mappings (the target mapping stays frozen), then orthogonalize every
/// trainable mapping. Returns the batch loss.
#[allow(clippy::too_many_arguments)]
pub fn mpsr_step(
    src: usize,
    dst: usize,
    mappings: &mut MappingSet,
    x_src: &Matrix,
    x_dst: &Matrix,
    beta: f64,
    lr: f64,
    update_clip: f64,
) -> Result<f64> {
    let t_src = mappings.encode(x_src.as_ref(), src)?;
    let t_dst = mappings.encode(x_dst.as_ref(), dst)?;
    let (loss, g_src, g_dst) = mse_loss(&t_src, &t_dst)?;

    // t = X M^T, so dL/dM = (dL/dt)^T X.
    let grad_src = g_src.matmul_tn(x_src)?;
    let grad_dst = g_dst.matmul_tn(x_dst)?;
    let clipped_lr = |g: &Matrix| -> f64 {
        let worst = lr * g.max_abs();
        if update_clip > 0.0 && worst > update_clip {
            lr * update_clip / worst
        } else {
            lr
        }
    };
    if src == dst {
        let mut g = grad_src;
        g.add_scaled(&grad_dst, 1.0)?;
        let lr_eff = clipped_lr(&g);
        mappings.sgd_step(src, &g, lr_eff)?;
    } else {
        let lr_s = clipped_lr(&grad_src);
        let lr_d = clipped_lr(&grad_dst);
        mappings.sgd_step(src, &grad_src, lr_s)?;
        mappings.sgd_step(dst, &grad_dst, lr_d)?;
    }
    if mappings.is_trainable(src) || mappings.is_trainable(dst) {
        mappings.orthogonalize(beta)?;
    }
    Ok(loss)
}

#[derive(Debug)]
pub struct MpsrLogRecord {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    pub val_score: f64,
}

pub fn mpsr_log_to_csv(records: &[MpsrLogRecord]) -> String {
    let mut out = String::from("epoch,step,loss,val_score\n");
    for r in records {
        let _ = writeln!(out, "{},{},{},{}", r.epoch, r.step, r.loss, r.val_score);
    }
    out
}

#[derive(Debug)]
pub struct MpsrOutcome {
    pub mappings: MappingSet,
    pub log: Vec<MpsrLogRecord>,
    pub best_val: f64,
    pub history: Vec<EpochCheckpoint>,
    pub max_orth_residual: Option<f64>,
    /// Lexica from the final induction, for inspection/export.
    pub lexica: Vec<Lexicon>,
}

/// Refine a trained mapping set. Per epoch: (re)induce lexica for all
/// ordered pairs, then run refinement steps, each visiting every language
/// with a random partner. The returned mapping set is the best checkpoint
/// under the validation criterion, the input mappings included.
pub fn train_mpsr(
    spaces: &[EmbeddingSpace],
    mappings: &MappingSet,
    cfg: &MpsrConfig,
) -> Result<MpsrOutcome> {
    cfg.validate()?;
    let n_langs = spaces.len();
    if n_langs != mappings.len() {
        return Err(Error::Argument(format!(
            "{n_langs} spaces for {} mappings",
            mappings.len()
        )));
    }
    if n_langs < 2 {
        return Err(Error::Argument("refinement needs at least two languages".into()));
    }

    let mut rng = StdRng::seed_from_u64(cfg.seed);
    let mut mappings = mappings.clone();
    let mut sched = SgdState::new(cfg.lr, cfg.lr_decay, cfg.lr_shrink, cfg.min_lr)?;

    // The input mappings are the epoch-0 candidate: refinement may never
    // return something the criterion scores worse than its input.
    let initial =
        multilingual_validation(spaces, &mappings, None, cfg.val_top_k, cfg.csls_n)?.overall;
    let mut best_val = initial;
    let mut best_maps = mappings.clone();
    let mut prev_val = initial;

    let mut log = Vec::new();
    let mut history = Vec::new();
    if cfg.record_history {
        history.push(EpochCheckpoint {
            epoch: 0,
            mappings: mappings.clone(),
            val_score: initial,
        });
    }
    let mut max_residual = 0.0f64;
    let mut global_step = 0usize;

    // lexica[i][j]: usable lexicon for the ordered pair, None when skipped.
    let mut lexica: Vec<Vec<Option<Lexicon>>> = vec![];
    let mut flat_lexica: Vec<Lexicon> = vec![];

    for epoch in 0..cfg.epochs {
        if epoch == 0 || cfg.reinduce_every_epoch {
            lexica = vec![];
            flat_lexica = vec![];
            let mut usable = 0usize;
            for i in 0..n_langs {
                let mut row = Vec::with_capacity(n_langs);
                for j in 0..n_langs {
                    if i == j {
                        // The identity lexicon contributes zero loss; skip it.
                        row.push(None);
                        continue;
                    }
                    let lex = induce_lexicon(
                        &spaces[i],
                        &spaces[j],
                        mappings.map(i),
                        mappings.map(j),
                        cfg.lexicon_cutoff,
                        cfg.csls_n,
                    )?;
                    flat_lexica.push(lex.clone());
                    if lex.len() < cfg.min_lexicon_size {
                        eprintln!(
                            "warning: lexicon {}-{} has only {} pairs (< {}); pair skipped",
                            lex.src_lang,
                            lex.tgt_lang,
                            lex.len(),
                            cfg.min_lexicon_size
                        );
                        row.push(None);
                    } else {
                        usable += 1;
                        row.push(Some(lex));
                    }
                }
                lexica.push(row);
            }
            if usable == 0 {
                return Err(Error::Refinement(
                    "every induced lexicon is empty or below the size floor; \
                     the input mappings are too poor to refine"
                        .into(),
                ));
            }
        }

        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for _ in 0..cfg.steps_per_epoch {
            for src in 0..n_langs {
                // Random partner among the usable lexica of this language.
                let partners: Vec<usize> = (0..n_langs)
                    .filter(|&j| lexica[src][j].is_some())
                    .collect();
                if partners.is_empty() {
                    continue;
                }
                let dst = partners[rng.random_range(0..partners.len())];
                let lex = lexica[src][dst].as_ref().unwrap();
                let mut x_src = Matrix::zeros(cfg.batch_size, spaces[src].dim());
                let mut x_dst = Matrix::zeros(cfg.batch_size, spaces[dst].dim());
                for r in 0..cfg.batch_size {
                    let &(a, b) = &lex.pairs[rng.random_range(0..lex.pairs.len())];
                    x_src.row_mut(r).copy_from_slice(spaces[src].embedding(a));
                    x_dst.row_mut(r).copy_from_slice(spaces[dst].embedding(b));
                }
                let loss = mpsr_step(
                    src,
                    dst,
                    &mut mappings,
                    &x_src,
                    &x_dst,
                    cfg.beta,
                    sched.lr,
                    cfg.update_clip,
                )?;
                loss_sum += loss;
                loss_count += 1;
            }
            if cfg.track_orthogonality {
                max_residual = max_residual.max(mappings.max_orthogonality_residual());
            }
            global_step += 1;
        }

        let val =
            multilingual_validation(spaces, &mappings, None, cfg.val_top_k, cfg.csls_n)?.overall;
        if val > best_val {
            best_val = val;
            best_maps = mappings.clone();
        }
        log.push(MpsrLogRecord {
            epoch,
            step: global_step,
            loss: loss_sum / loss_count.max(1) as f64,
            val_score: val,
        });
        if cfg.record_history {
            history.push(EpochCheckpoint {
                epoch: epoch + 1,
                mappings: mappings.clone(),
                val_score: val,
            });
        }
        let dropped = val < prev_val;
        sched.end_epoch(dropped);
        prev_val = val;
    }

    Ok(MpsrOutcome {
        mappings: best_maps,
        log,
        best_val,
        history,
        max_orth_residual: cfg.track_orthogonality.then_some(max_residual),
        lexica: flat_lexica,
    })
}

/// Closed-form orthogonal Procrustes: the orthogonal W minimizing
/// `||W x_p - y_p||` over the paired rows (row form: `X W^T ~ Y`), i.e.
/// `W = U V^T` from the SVD of `Y^T X`. The workhorse of supervised
/// alignment and the exactness oracle for the synthetic tests.
pub fn procrustes_solve(x: MatRef<'_>, y: MatRef<'_>) -> Result<Matrix> {
    if x.rows == 0 {
        return Err(Error::Argument("procrustes needs at least one row pair".into()));
    }
    if x.rows != y.rows || x.cols != y.cols {
        return Err(Error::Shape(format!(
            "procrustes shapes {}x{} vs {}x{}",
            x.rows, x.cols, y.rows, y.cols
        )));
    }
    let m = y.matmul_tn(x)?;
    let (u, _, v) = jacobi_svd(&m)?;
    u.matmul_nt(&v)
}
