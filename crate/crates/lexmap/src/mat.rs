//! Multilingual adversarial training.
//!
//! Each step alternates k discriminator iterations with one mapping
//! iteration. A discriminator iteration visits every language j, draws a
//! random source language i, converts a batch of i-words into j's space
//! through the shared space, and trains D_j to tell converted vectors from
//! real ones. A mapping iteration visits every language i, draws a random
//! destination j, and updates the mappings to fool D_j, followed by an
//! orthogonalization update. Visiting every language per iteration keeps
//! the per-step cost linear in the number of languages.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::embeddings::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::mapping::{EpochCheckpoint, MappingSet};
use crate::nn::{cross_entropy, Mlp, MlpConfig, SgdState};
use crate::validation::multilingual_validation;

/// Hyperparameters of the adversarial stage.
#[derive(Debug, Clone)]
pub struct MatConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    /// Discriminator iterations per mapping iteration (k).
    pub dis_steps: usize,
    pub batch_size: usize,
    pub dis_lr: f64,
    pub map_lr: f64,
    pub lr_decay: f64,
    pub lr_shrink: f64,
    pub min_lr: f64,
    /// Words are sampled from the top `dis_sample_cutoff` ranks only;
    /// rare-word embeddings give the discriminators noisy signal.
    pub dis_sample_cutoff: usize,
    /// Label smoothing for the discriminator objective: real words get
    /// target 1-smoothing, converted words get target smoothing. The
    /// mapping objective always uses the hard label 1.
    pub smoothing: f64,
    /// Orthogonalization strength.
    pub beta: f64,
    /// Cap on the max-abs entry of one mapping update (lr * gradient);
    /// 0 disables. Keeps adversarial updates inside the region the
    /// orthogonalization update contracts faster than training drifts.
    pub map_update_clip: f64,
    pub dis_hidden: Vec<usize>,
    pub dis_dropout: f64,
    pub leaky_slope: f64,
    /// Frequency cutoff and neighborhood size for the validation criterion.
    pub val_top_k: usize,
    pub csls_n: usize,
    pub seed: u64,
    /// Keep a mapping snapshot per epoch (cheap at d <= a few hundred).
    pub record_history: bool,
    /// Track the worst orthogonality residual seen after any step.
    pub track_orthogonality: bool,
}

impl Default for MatConfig {
    fn default() -> Self {
        MatConfig {
            epochs: 5,
            steps_per_epoch: 10_000,
            dis_steps: 1,
            batch_size: 32,
            dis_lr: 0.1,
            map_lr: 0.1,
            lr_decay: 0.98,
            lr_shrink: 0.5,
            min_lr: 1e-6,
            dis_sample_cutoff: 75_000,
            smoothing: 0.1,
            beta: 0.001,
            map_update_clip: 0.0,
            dis_hidden: vec![2048, 2048],
            dis_dropout: 0.1,
            leaky_slope: 0.2,
            val_top_k: crate::validation::DEFAULT_VALIDATION_TOP_K,
            csls_n: crate::csls::DEFAULT_CSLS_NEIGHBORS,
            seed: 42,
            record_history: false,
            track_orthogonality: false,
        }
    }
}

impl MatConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0
            || self.steps_per_epoch == 0
            || self.dis_steps == 0
            || self.batch_size == 0
            || self.dis_sample_cutoff == 0
        {
            return Err(Error::Argument(
                "epochs, steps, k, batch size and sample cutoff must be positive".into(),
            ));
        }
        if !(0.0..0.5).contains(&self.smoothing) {
            return Err(Error::Argument(format!(
                "smoothing must be in [0, 0.5), got {}",
                self.smoothing
            )));
        }
        if self.dis_lr <= 0.0 || self.map_lr <= 0.0 || self.beta <= 0.0 {
            return Err(Error::Argument(
                "learning rates and beta must be positive".into(),
            ));
        }
        SgdState::new(self.dis_lr, self.lr_decay, self.lr_shrink, self.min_lr)?;
        Ok(())
    }
}

/// Per-epoch training log row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRecord {
    pub epoch: usize,
    pub step: usize,
    pub d_loss: f64,
    pub m_loss: f64,
    pub d_acc: f64,
    pub val_score: f64,
}

pub fn log_to_csv(records: &[TrainLogRecord]) -> String {
    let mut out = String::from("epoch,step,d_loss,m_loss,d_acc,val_score\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.epoch, r.step, r.d_loss, r.m_loss, r.d_acc, r.val_score
        ));
    }
    out
}

#[derive(Debug)]
pub struct MatOutcome {
    /// Best mapping set by the validation criterion.
    pub mappings: MappingSet,
    pub discriminators: Vec<Mlp>,
    pub log: Vec<TrainLogRecord>,
    pub best_val: f64,
    /// Per-epoch snapshots when `record_history` is set.
    pub history: Vec<EpochCheckpoint>,
    /// Worst orthogonality residual over all steps, when tracked.
    pub max_orth_residual: Option<f64>,
}

/// A batch of embedding rows drawn uniformly with replacement from the
/// `cutoff` most frequent ranks (clamped to the vocabulary size).
pub fn sample_word_batch(
    space: &EmbeddingSpace,
    cutoff: usize,
    batch: usize,
    rng: &mut StdRng,
) -> Result<Matrix> {
    if space.is_empty() {
        return Err(Error::Argument(format!(
            "cannot sample from empty vocabulary for {}",
            space.lang
        )));
    }
    let limit = cutoff.max(1).min(space.len());
    let dim = space.dim();
    let mut out = Matrix::zeros(batch, dim);
    for r in 0..batch {
        let rank = rng.random_range(0..limit);
        out.row_mut(r).copy_from_slice(space.embedding(rank));
    }
    Ok(out)
}

pub struct DisStepStats {
    pub loss: f64,
    pub accuracy: f64,
}

/// One discriminator update for the (src -> dst) direction: convert a batch
/// of src words into dst's space and train `D_dst` against a batch of real
/// dst words. Mappings are read-only here. Returns the summed loss of the
/// real and converted terms (each a batch mean).
#[allow(clippy::too_many_arguments)]
pub fn discriminator_step(
    src: usize,
    dst: usize,
    mappings: &MappingSet,
    discriminators: &mut [Mlp],
    x_src: &Matrix,
    x_dst: &Matrix,
    smoothing: f64,
    dis_lr: f64,
    rng: &mut StdRng,
) -> Result<DisStepStats> {
    let converted = mappings.convert(x_src.as_ref(), src, dst)?;
    let disc = &mut discriminators[dst];

    let real_target = 1.0 - smoothing;
    let fake_target = smoothing;

    let cache_real = disc.forward(x_dst, Some(rng))?;
    let cache_fake = disc.forward(&converted, Some(rng))?;

    let b = x_dst.rows() as f64;
    let mut loss_real = 0.0;
    let mut correct = 0usize;
    let dlogit_real: Vec<f64> = cache_real
        .probs
        .iter()
        .map(|&p| {
            let (l, g) = cross_entropy(real_target, p);
            loss_real += l;
            if p > 0.5 {
                correct += 1;
            }
            g / b
        })
        .collect();
    let mut loss_fake = 0.0;
    let dlogit_fake: Vec<f64> = cache_fake
        .probs
        .iter()
        .map(|&p| {
            let (l, g) = cross_entropy(fake_target, p);
            loss_fake += l;
            if p < 0.5 {
                correct += 1;
            }
            g / (converted.rows() as f64)
        })
        .collect();

    let grads_real = disc.backward(&cache_real, &dlogit_real)?;
    let grads_fake = disc.backward(&cache_fake, &dlogit_fake)?;
    disc.sgd_step(&grads_real, dis_lr)?;
    disc.sgd_step(&grads_fake, dis_lr)?;

    Ok(DisStepStats {
        loss: loss_real / b + loss_fake / converted.rows() as f64,
        accuracy: correct as f64 / (x_dst.rows() + converted.rows()) as f64,
    })
}

/// One mapping update for the (src -> dst) direction: push converted src
/// words toward fooling `D_dst`. The discriminator is frozen; the gradient
/// flows through it into both the src encoder and the dst decoder (the
/// target-language mapping never moves). Ends with an orthogonalization
/// update on every trainable mapping.
#[allow(clippy::too_many_arguments)]
pub fn mapping_step(
    src: usize,
    dst: usize,
    mappings: &mut MappingSet,
    discriminators: &[Mlp],
    x_src: &Matrix,
    beta: f64,
    map_lr: f64,
    update_clip: f64,
) -> Result<f64> {
    let composed = mappings.compose(src, dst)?;
    let converted = x_src.matmul(&composed)?;
    let disc = &discriminators[dst];

    // Dropout off: the mapping gradient uses the deterministic net.
    let cache = disc.forward(&converted, None)?;
    let b = converted.rows() as f64;
    let mut loss = 0.0;
    let dlogit: Vec<f64> = cache
        .probs
        .iter()
        .map(|&p| {
            let (l, g) = cross_entropy(1.0, p);
            loss += l;
            g / b
        })
        .collect();
    let grads = disc.backward(&cache, &dlogit)?;

    // d(loss)/d(composed) with composed = M_src^T M_dst and rows x (x A):
    let d_composed = x_src.matmul_tn(&grads.d_input)?;
    let clipped_lr = |g: &Matrix| -> f64 {
        let worst = map_lr * g.max_abs();
        if update_clip > 0.0 && worst > update_clip {
            map_lr * update_clip / worst
        } else {
            map_lr
        }
    };
    if src == dst {
        // A = M^T M: both factors are the same matrix.
        let g1 = mappings.map(dst).matmul(&d_composed.transpose())?;
        let mut g = mappings.map(src).matmul(&d_composed)?;
        g.add_scaled(&g1, 1.0)?;
        let lr = clipped_lr(&g);
        mappings.sgd_step(src, &g, lr)?;
    } else {
        let g_src = mappings.map(dst).matmul(&d_composed.transpose())?;
        let g_dst = mappings.map(src).matmul(&d_composed)?;
        let lr_src = clipped_lr(&g_src);
        let lr_dst = clipped_lr(&g_dst);
        mappings.sgd_step(src, &g_src, lr_src)?;
        mappings.sgd_step(dst, &g_dst, lr_dst)?;
    }
    // Orthogonalize after the updates; when both languages are the frozen
    // target nothing moved and the step must leave parameters untouched.
    if mappings.is_trainable(src) || mappings.is_trainable(dst) {
        mappings.orthogonalize(beta)?;
    }
    Ok(loss / b)
}

/// Run multilingual adversarial training and return the mapping set that
/// scored best on the unsupervised validation criterion.
pub fn train_mat(spaces: &[EmbeddingSpace], target: usize, cfg: &MatConfig) -> Result<MatOutcome> {
    cfg.validate()?;
    let n_langs = spaces.len();
    if n_langs < 2 {
        return Err(Error::Argument("training needs at least two languages".into()));
    }
    if target >= n_langs {
        return Err(Error::Argument(format!(
            "target index {target} out of range for {n_langs} languages"
        )));
    }
    let dim = spaces[0].dim();
    for s in spaces {
        if s.dim() != dim {
            return Err(Error::Shape(format!(
                "{} is {}-dimensional, expected {dim}",
                s.lang,
                s.dim()
            )));
        }
        if s.is_empty() {
            return Err(Error::Argument(format!("{} has an empty vocabulary", s.lang)));
        }
    }

    let mut rng = StdRng::seed_from_u64(cfg.seed);
    let langs: Vec<String> = spaces.iter().map(|s| s.lang.clone()).collect();
    let mut mappings = MappingSet::identity(langs, target, dim)?;
    let mlp_cfg = MlpConfig {
        input_dim: dim,
        hidden: cfg.dis_hidden.clone(),
        leaky_slope: cfg.leaky_slope,
        input_dropout: cfg.dis_dropout,
    };
    let mut discriminators: Vec<Mlp> = (0..n_langs).map(|_| Mlp::new(&mlp_cfg, &mut rng)).collect();

    let mut dis_sched = SgdState::new(cfg.dis_lr, cfg.lr_decay, cfg.lr_shrink, cfg.min_lr)?;
    let mut map_sched = SgdState::new(cfg.map_lr, cfg.lr_decay, cfg.lr_shrink, cfg.min_lr)?;

    let mut log = Vec::with_capacity(cfg.epochs);
    let mut history = Vec::new();
    let mut best_val = f64::NEG_INFINITY;
    let mut best_maps = mappings.clone();
    let mut prev_val = f64::NEG_INFINITY;
    let mut max_residual = 0.0f64;
    let mut global_step = 0usize;

    for epoch in 0..cfg.epochs {
        let mut d_loss_sum = 0.0;
        let mut d_acc_sum = 0.0;
        let mut d_count = 0usize;
        let mut m_loss_sum = 0.0;
        let mut m_count = 0usize;

        for _ in 0..cfg.steps_per_epoch {
            for _ in 0..cfg.dis_steps {
                for dst in 0..n_langs {
                    let src = rng.random_range(0..n_langs);
                    let x_src =
                        sample_word_batch(&spaces[src], cfg.dis_sample_cutoff, cfg.batch_size, &mut rng)?;
                    let x_dst =
                        sample_word_batch(&spaces[dst], cfg.dis_sample_cutoff, cfg.batch_size, &mut rng)?;
                    let stats = discriminator_step(
                        src,
                        dst,
                        &mappings,
                        &mut discriminators,
                        &x_src,
                        &x_dst,
                        cfg.smoothing,
                        dis_sched.lr,
                        &mut rng,
                    )?;
                    d_loss_sum += stats.loss;
                    d_acc_sum += stats.accuracy;
                    d_count += 1;
                }
            }
            for src in 0..n_langs {
                let dst = rng.random_range(0..n_langs);
                let x_src =
                    sample_word_batch(&spaces[src], cfg.dis_sample_cutoff, cfg.batch_size, &mut rng)?;
                let loss = mapping_step(
                    src,
                    dst,
                    &mut mappings,
                    &discriminators,
                    &x_src,
                    cfg.beta,
                    map_sched.lr,
                    cfg.map_update_clip,
                )?;
                m_loss_sum += loss;
                m_count += 1;
            }
            if cfg.track_orthogonality {
                max_residual = max_residual.max(mappings.max_orthogonality_residual());
            }
            global_step += 1;
        }

        let report =
            multilingual_validation(spaces, &mappings, None, cfg.val_top_k, cfg.csls_n)?;
        let val = report.overall;
        if !val.is_finite() {
            return Err(Error::Eval(format!(
                "validation criterion became non-finite at epoch {epoch}"
            )));
        }
        if val > best_val {
            best_val = val;
            best_maps = mappings.clone();
        }
        log.push(TrainLogRecord {
            epoch,
            step: global_step,
            d_loss: d_loss_sum / d_count.max(1) as f64,
            m_loss: m_loss_sum / m_count.max(1) as f64,
            d_acc: d_acc_sum / d_count.max(1) as f64,
            val_score: val,
        });
        if cfg.record_history {
            history.push(EpochCheckpoint {
                epoch,
                mappings: mappings.clone(),
                val_score: val,
            });
        }
        let dropped = prev_val.is_finite() && val < prev_val;
        dis_sched.end_epoch(dropped);
        map_sched.end_epoch(dropped);
        prev_val = val;
    }

    Ok(MatOutcome {
        mappings: best_maps,
        discriminators,
        log,
        best_val,
        history,
        max_orth_residual: cfg.track_orthogonality.then_some(max_residual),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::Vocabulary;
    use crate::linalg::gaussian_matrix;

    fn toy_space(lang: &str, vocab: usize, dim: usize, seed: u64) -> EmbeddingSpace {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut m = gaussian_matrix(vocab, dim, &mut rng);
        for r in 0..vocab {
            let norm: f64 = m.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in m.row_mut(r) {
                *v /= norm;
            }
        }
        let mut v = Vocabulary::new();
        for i in 0..vocab {
            v.push(&format!("w{i}"));
        }
        EmbeddingSpace::new(lang, v, m).unwrap()
    }

    fn toy_cfg() -> MatConfig {
        MatConfig {
            epochs: 1,
            steps_per_epoch: 2,
            batch_size: 8,
            dis_hidden: vec![16],
            dis_sample_cutoff: 50,
            val_top_k: 50,
            csls_n: 3,
            ..MatConfig::default()
        }
    }

    #[test]
    fn sample_batch_respects_cutoff_and_seed() {
        let space = toy_space("a", 40, 4, 1);
        let mut rng = StdRng::seed_from_u64(5);
        let b1 = sample_word_batch(&space, 1, 6, &mut rng).unwrap();
        for r in 0..6 {
            assert_eq!(b1.row(r), space.embedding(0));
        }
        let mut r1 = StdRng::seed_from_u64(9);
        let mut r2 = StdRng::seed_from_u64(9);
        let a = sample_word_batch(&space, 30, 16, &mut r1).unwrap();
        let b = sample_word_batch(&space, 30, 16, &mut r2).unwrap();
        assert_eq!(a.data(), b.data());

        // Support check: everything sampled must come from the cutoff pool.
        let mut rng = StdRng::seed_from_u64(11);
        let big = sample_word_batch(&space, 10, 500, &mut rng).unwrap();
        for r in 0..big.rows() {
            let row = big.row(r);
            let rank = (0..space.len()).find(|&i| space.embedding(i) == row);
            assert!(rank.expect("sampled row must exist") < 10);
        }
    }

    #[test]
    fn discriminator_step_freezes_mappings_and_descends() {
        let spaces = [toy_space("a", 60, 6, 1), toy_space("b", 60, 6, 2)];
        let mut rng = StdRng::seed_from_u64(3);
        let mappings = MappingSet::identity(vec!["a".into(), "b".into()], 0, 6).unwrap();
        let maps_before = mappings.maps().to_vec();
        let mlp_cfg = MlpConfig {
            input_dim: 6,
            hidden: vec![8],
            leaky_slope: 0.2,
            input_dropout: 0.0,
        };
        let mut discs = vec![Mlp::new(&mlp_cfg, &mut rng), Mlp::new(&mlp_cfg, &mut rng)];
        let x_a = sample_word_batch(&spaces[0], 60, 16, &mut rng).unwrap();
        let x_b = sample_word_batch(&spaces[1], 60, 16, &mut rng).unwrap();

        // Zero-initialized output layer: p = 0.5 everywhere, loss = 2 ln 2.
        let stats = discriminator_step(
            0, 1, &mappings, &mut discs, &x_a, &x_b, 0.1, 0.05, &mut rng,
        )
        .unwrap();
        assert!((stats.loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-9);

        for (before, after) in maps_before.iter().zip(mappings.maps()) {
            assert_eq!(before.data(), after.data(), "mappings must be untouched");
        }

        // Re-evaluating the same fixed batches after the update: lower loss.
        let converted = mappings.convert(x_a.as_ref(), 0, 1).unwrap();
        let loss_after = {
            let cr = discs[1].forward(&x_b, None).unwrap();
            let cf = discs[1].forward(&converted, None).unwrap();
            let lr: f64 = cr.probs.iter().map(|&p| cross_entropy(0.9, p).0).sum::<f64>()
                / x_b.rows() as f64;
            let lf: f64 = cf.probs.iter().map(|&p| cross_entropy(0.1, p).0).sum::<f64>()
                / converted.rows() as f64;
            lr + lf
        };
        assert!(loss_after < stats.loss);
    }

    #[test]
    fn mapping_step_freezes_discriminators_and_bounds_drift() {
        let spaces = [toy_space("a", 60, 6, 4), toy_space("b", 60, 6, 5)];
        let mut rng = StdRng::seed_from_u64(6);
        let mut mappings = MappingSet::identity(vec!["a".into(), "b".into()], 0, 6).unwrap();
        let mlp_cfg = MlpConfig {
            input_dim: 6,
            hidden: vec![8],
            leaky_slope: 0.2,
            input_dropout: 0.0,
        };
        let mut discs = vec![Mlp::new(&mlp_cfg, &mut rng), Mlp::new(&mlp_cfg, &mut rng)];
        // Give the discriminator signal so mapping gradients are non-zero.
        let x_a = sample_word_batch(&spaces[0], 60, 16, &mut rng).unwrap();
        let x_b = sample_word_batch(&spaces[1], 60, 16, &mut rng).unwrap();
        for _ in 0..5 {
            discriminator_step(0, 1, &mappings, &mut discs, &x_a, &x_b, 0.1, 0.1, &mut rng)
                .unwrap();
        }
        let disc_weights_before: Vec<Vec<f64>> = discs
            .iter()
            .map(|d| d.layers.iter().flat_map(|l| l.weight.data().to_vec()).collect())
            .collect();

        let residual_before = mappings.max_orthogonality_residual();
        mapping_step(1, 1, &mut mappings, &discs, &x_b, 0.001, 0.005, 0.0).unwrap();
        let residual_after = mappings.max_orthogonality_residual();
        assert!(
            residual_after <= residual_before + 1e-3,
            "drift {residual_before} -> {residual_after}"
        );

        let disc_weights_after: Vec<Vec<f64>> = discs
            .iter()
            .map(|d| d.layers.iter().flat_map(|l| l.weight.data().to_vec()).collect())
            .collect();
        assert_eq!(disc_weights_before, disc_weights_after);
    }

    #[test]
    fn mapping_step_on_target_is_a_parameter_noop() {
        let spaces = [toy_space("a", 40, 5, 7), toy_space("b", 40, 5, 8)];
        let mut rng = StdRng::seed_from_u64(9);
        let mut mappings = MappingSet::identity(vec!["a".into(), "b".into()], 0, 5).unwrap();
        let mlp_cfg = MlpConfig {
            input_dim: 5,
            hidden: vec![8],
            leaky_slope: 0.2,
            input_dropout: 0.0,
        };
        let discs = vec![Mlp::new(&mlp_cfg, &mut rng), Mlp::new(&mlp_cfg, &mut rng)];
        let x = sample_word_batch(&spaces[0], 40, 8, &mut rng).unwrap();
        let before: Vec<Matrix> = mappings.maps().to_vec();
        let loss = mapping_step(0, 0, &mut mappings, &discs, &x, 0.001, 0.1, 0.0).unwrap();
        assert!(loss.is_finite());
        for (b, a) in before.iter().zip(mappings.maps()) {
            assert_eq!(b.data(), a.data());
        }
    }

    #[test]
    fn mapping_gradient_matches_finite_differences() {
        // Loss as a function of the two mapping matrices, discriminator frozen.
        let mut rng = StdRng::seed_from_u64(77);
        let d = 5;
        let mlp_cfg = MlpConfig {
            input_dim: d,
            hidden: vec![7],
            leaky_slope: 0.2,
            input_dropout: 0.0,
        };
        let mut disc = Mlp::new(&mlp_cfg, &mut rng);
        for (i, v) in disc.layers[1].weight.data_mut().iter_mut().enumerate() {
            *v = 0.3 * ((i % 5) as f64 - 2.0);
        }
        let x = crate::linalg::gaussian_matrix(6, d, &mut rng);
        let m_src = crate::linalg::random_orthogonal(d, 1);
        let m_dst = crate::linalg::random_orthogonal(d, 2);

        let loss_of = |ms: &Matrix, md: &Matrix| -> f64 {
            let composed = ms.matmul_tn(md).unwrap();
            let converted = x.matmul(&composed).unwrap();
            let cache = disc.forward(&converted, None).unwrap();
            cache.probs.iter().map(|&p| cross_entropy(1.0, p).0).sum::<f64>()
                / converted.rows() as f64
        };

        // Analytic gradients, mirroring mapping_step.
        let composed = m_src.matmul_tn(&m_dst).unwrap();
        let converted = x.matmul(&composed).unwrap();
        let cache = disc.forward(&converted, None).unwrap();
        let b = converted.rows() as f64;
        let dlogit: Vec<f64> = cache.probs.iter().map(|&p| cross_entropy(1.0, p).1 / b).collect();
        let grads = disc.backward(&cache, &dlogit).unwrap();
        let d_composed = x.matmul_tn(&grads.d_input).unwrap();
        let g_src = m_dst.matmul(&d_composed.transpose()).unwrap();
        let g_dst = m_src.matmul(&d_composed).unwrap();

        let h = 1e-6;
        for idx in 0..d * d {
            let mut p = m_src.clone();
            p.data_mut()[idx] += h;
            let mut m = m_src.clone();
            m.data_mut()[idx] -= h;
            let fd = (loss_of(&p, &m_dst) - loss_of(&m, &m_dst)) / (2.0 * h);
            let an = g_src.data()[idx];
            assert!(
                (fd - an).abs() / fd.abs().max(1e-7) < 1e-4,
                "src grad {idx}: fd={fd} an={an}"
            );

            let mut p = m_dst.clone();
            p.data_mut()[idx] += h;
            let mut m = m_dst.clone();
            m.data_mut()[idx] -= h;
            let fd = (loss_of(&m_src, &p) - loss_of(&m_src, &m)) / (2.0 * h);
            let an = g_dst.data()[idx];
            assert!(
                (fd - an).abs() / fd.abs().max(1e-7) < 1e-4,
                "dst grad {idx}: fd={fd} an={an}"
            );
        }
    }

    #[test]
    fn train_mat_is_deterministic_per_seed() {
        let spaces = vec![toy_space("a", 80, 6, 10), toy_space("b", 80, 6, 11)];
        let cfg = toy_cfg();
        let out1 = train_mat(&spaces, 0, &cfg).unwrap();
        let out2 = train_mat(&spaces, 0, &cfg).unwrap();
        assert_eq!(out1.log, out2.log);
        for (m1, m2) in out1.mappings.maps().iter().zip(out2.mappings.maps()) {
            assert_eq!(m1.data(), m2.data());
        }
    }

    #[test]
    fn train_mat_rejects_bad_inputs() {
        let spaces = vec![toy_space("a", 30, 4, 1)];
        assert!(train_mat(&spaces, 0, &toy_cfg()).is_err());

        let spaces = vec![toy_space("a", 30, 4, 1), toy_space("b", 30, 5, 2)];
        assert!(train_mat(&spaces, 0, &toy_cfg()).is_err());

        let spaces = vec![toy_space("a", 30, 4, 1), toy_space("b", 30, 4, 2)];
        let mut cfg = toy_cfg();
        cfg.smoothing = 0.7;
        assert!(train_mat(&spaces, 0, &cfg).is_err());
        let mut cfg = toy_cfg();
        cfg.epochs = 0;
        assert!(train_mat(&spaces, 0, &cfg).is_err());
    }

    #[test]
    fn losses_stay_finite_and_target_stays_identity() {
        let spaces = vec![toy_space("a", 60, 5, 20), toy_space("b", 60, 5, 21)];
        let mut cfg = toy_cfg();
        cfg.epochs = 2;
        cfg.steps_per_epoch = 10;
        cfg.map_lr = 0.01;
        cfg.track_orthogonality = true;
        let out = train_mat(&spaces, 1, &cfg).unwrap();
        for r in &out.log {
            assert!(r.d_loss.is_finite() && r.m_loss.is_finite());
            assert!(r.d_loss >= 0.0 && r.m_loss >= 0.0);
            assert!((0.0..=1.0).contains(&r.d_acc));
        }
        assert_eq!(out.mappings.map(1), &Matrix::identity(5));
        assert!(out.max_orth_residual.unwrap() <= 0.01);
    }
}
