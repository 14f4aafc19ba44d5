//! A small feed-forward binary classifier with manual backpropagation,
//! the two training losses (cross entropy, mean square) with analytic
//! gradients, and a plain SGD schedule with decay/shrink handling.

use rand::rngs::StdRng;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Probability clamp for cross entropy.
pub const PROB_EPS: f64 = 1e-7;

/// One linear layer; weights stored input-major so a row batch maps as `x W + b`.
#[derive(Debug, Clone)]
pub struct Layer {
    pub weight: Matrix, // in x out
    pub bias: Vec<f64>, // out
}

/// Feed-forward net: input dropout, LeakyReLU hidden layers, one output
/// logit squashed by a sigmoid.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub leaky_slope: f64,
    pub input_dropout: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub leaky_slope: f64,
    pub input_dropout: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            input_dim: 0,
            hidden: vec![2048, 2048],
            leaky_slope: 0.2,
            input_dropout: 0.1,
        }
    }
}

/// Activations cached by a forward pass, consumed by `backward`.
pub struct MlpCache {
    input: Matrix,                  // after dropout
    dropout_mask: Option<Vec<f64>>, // per-entry multiplier (0 or 1/(1-p))
    pre_acts: Vec<Matrix>,          // z_l for each layer
    acts: Vec<Matrix>,              // a_l after activation (hidden layers only)
    pub probs: Vec<f64>,
}

/// Gradients for every parameter plus the gradient w.r.t. the input batch.
pub struct MlpGrads {
    pub layers: Vec<(Matrix, Vec<f64>)>,
    pub d_input: Matrix,
}

impl Mlp {
    /// Hidden layers get Xavier-uniform weights; the output layer starts at
    /// zero so an untrained net outputs probability exactly 0.5.
    pub fn new(cfg: &MlpConfig, rng: &mut StdRng) -> Self {
        let mut dims = vec![cfg.input_dim];
        dims.extend_from_slice(&cfg.hidden);
        dims.push(1);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let mut weight = Matrix::zeros(fan_in, fan_out);
            if fan_out != 1 {
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                for v in weight.data_mut() {
                    *v = rng.random_range(-bound..bound);
                }
            }
            layers.push(Layer {
                weight,
                bias: vec![0.0; fan_out],
            });
        }
        Mlp {
            layers,
            leaky_slope: cfg.leaky_slope,
            input_dropout: cfg.input_dropout,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    /// Forward pass on a row batch. Passing an rng enables train mode
    /// (input dropout); `None` is deterministic evaluation.
    pub fn forward(&self, x: &Matrix, dropout_rng: Option<&mut StdRng>) -> Result<MlpCache> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "mlp_forward: input has {} cols, net expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let (input, dropout_mask) = match dropout_rng {
            Some(rng) if self.input_dropout > 0.0 => {
                let keep = 1.0 - self.input_dropout;
                let mask: Vec<f64> = (0..x.data().len())
                    .map(|_| {
                        if rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let mut dropped = x.clone();
                for (v, m) in dropped.data_mut().iter_mut().zip(&mask) {
                    *v *= m;
                }
                (dropped, Some(mask))
            }
            _ => (x.clone(), None),
        };

        let n_layers = self.layers.len();
        let mut pre_acts = Vec::with_capacity(n_layers);
        let mut acts = Vec::with_capacity(n_layers.saturating_sub(1));
        let mut cur = input.clone();
        for (li, layer) in self.layers.iter().enumerate() {
            let mut z = cur.matmul(&layer.weight)?;
            for r in 0..z.rows() {
                for (c, b) in layer.bias.iter().enumerate() {
                    let v = z.get(r, c) + b;
                    z.set(r, c, v);
                }
            }
            pre_acts.push(z.clone());
            if li + 1 < n_layers {
                let mut a = z;
                for v in a.data_mut() {
                    if *v < 0.0 {
                        *v *= self.leaky_slope;
                    }
                }
                acts.push(a.clone());
                cur = a;
            } else {
                cur = z;
            }
        }
        let probs: Vec<f64> = cur.data().iter().map(|&z| sigmoid(z)).collect();
        Ok(MlpCache {
            input,
            dropout_mask,
            pre_acts,
            acts,
            probs,
        })
    }

    /// Backward pass given d(loss)/d(logit) per sample. Returns parameter
    /// gradients and the gradient w.r.t. the input batch.
    pub fn backward(&self, cache: &MlpCache, dlogit: &[f64]) -> Result<MlpGrads> {
        let batch = cache.input.rows();
        if dlogit.len() != batch {
            return Err(Error::Shape(format!(
                "mlp_backward: {} upstream gradients for batch of {}",
                dlogit.len(),
                batch
            )));
        }
        let n_layers = self.layers.len();
        let mut grads: Vec<(Matrix, Vec<f64>)> = Vec::with_capacity(n_layers);

        // Delta for the output layer is the provided logit gradient.
        let mut delta = Matrix::from_vec(batch, 1, dlogit.to_vec())?;
        for li in (0..n_layers).rev() {
            let below = if li == 0 {
                &cache.input
            } else {
                &cache.acts[li - 1]
            };
            let dw = below.matmul_tn(&delta)?;
            let mut db = vec![0.0; delta.cols()];
            for r in 0..delta.rows() {
                for (c, g) in db.iter_mut().enumerate() {
                    *g += delta.get(r, c);
                }
            }
            let d_below = delta.matmul_nt(&self.layers[li].weight)?;
            grads.push((dw, db));
            if li > 0 {
                // Through the LeakyReLU of the layer below.
                let mut next = d_below;
                let z = &cache.pre_acts[li - 1];
                for (v, &zv) in next.data_mut().iter_mut().zip(z.data()) {
                    if zv < 0.0 {
                        *v *= self.leaky_slope;
                    }
                }
                delta = next;
            } else {
                delta = d_below;
            }
        }
        grads.reverse();

        let mut d_input = delta;
        if let Some(mask) = &cache.dropout_mask {
            for (v, m) in d_input.data_mut().iter_mut().zip(mask) {
                *v *= m;
            }
        }
        Ok(MlpGrads {
            layers: grads,
            d_input,
        })
    }

    pub fn sgd_step(&mut self, grads: &MlpGrads, lr: f64) -> Result<()> {
        if grads.layers.len() != self.layers.len() {
            return Err(Error::Shape("gradient/layer count mismatch".into()));
        }
        for (layer, (dw, db)) in self.layers.iter_mut().zip(&grads.layers) {
            layer.weight.add_scaled(dw, -lr)?;
            for (b, g) in layer.bias.iter_mut().zip(db) {
                *b -= lr * g;
            }
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross entropy of a (possibly smoothed) target against a predicted
/// probability. Returns the loss and d(loss)/d(logit) = p - y. The
/// probability is clamped to [eps, 1-eps] before the log.
pub fn cross_entropy(y: f64, p: f64) -> (f64, f64) {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let loss = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
    (loss, p - y)
}

/// Mean square loss over all entries of two equal-shape batches, with the
/// analytic gradients w.r.t. both arguments.
pub fn mse_loss(a: &Matrix, b: &Matrix) -> Result<(f64, Matrix, Matrix)> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::Shape(format!(
            "mse_loss {}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let n = (a.rows() * a.cols()) as f64;
    let mut loss = 0.0;
    let mut ga = Matrix::zeros(a.rows(), a.cols());
    for ((&av, &bv), g) in a.data().iter().zip(b.data()).zip(ga.data_mut()) {
        let d = av - bv;
        loss += d * d;
        *g = 2.0 * d / n;
    }
    let mut gb = ga.clone();
    gb.scale(-1.0);
    Ok((loss / n, ga, gb))
}

/// SGD learning-rate state: per-epoch decay plus a shrink applied when the
/// validation criterion drops, floored at `min_lr`.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    pub lr: f64,
    pub decay: f64,
    pub shrink: f64,
    pub min_lr: f64,
}

impl SgdState {
    pub fn new(lr: f64, decay: f64, shrink: f64, min_lr: f64) -> Result<Self> {
        if lr <= 0.0 || !(0.0 < decay && decay <= 1.0) || !(0.0 < shrink && shrink <= 1.0) {
            return Err(Error::Argument(format!(
                "invalid SGD state: lr={lr} decay={decay} shrink={shrink}"
            )));
        }
        Ok(SgdState {
            lr,
            decay,
            shrink,
            min_lr,
        })
    }

    /// Apply the per-epoch decay, plus the shrink when validation dropped.
    pub fn end_epoch(&mut self, validation_dropped: bool) {
        self.lr *= self.decay;
        if validation_dropped {
            self.lr *= self.shrink;
        }
        self.lr = self.lr.max(self.min_lr);
    }
}

/// `theta <- theta - lr * grad` for a plain matrix parameter.
pub fn sgd_matrix(theta: &mut Matrix, grad: &Matrix, lr: f64) -> Result<()> {
    theta.add_scaled(grad, -lr)
}
