//! Classical baseline: a small ReLU MLP trained on the same scaled samples
//! and loss as the VQC surrogate.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::error::{config_err, Error, Result};
use crate::optim::{Adam, AdamConfig};
use crate::seed;
use crate::surrogate::EpochRecord;

/// Layer widths, input first.
pub const MLP_LAYERS: [usize; 4] = [5, 16, 16, 4];

/// Fully connected network with ReLU hidden layers and a linear output.
/// Parameters are stored flat, layer by layer, weights (row-major,
/// `[out][in]`) before biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<usize>,
    params: Vec<f64>,
}

fn param_count(layers: &[usize]) -> usize {
    layers.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    pub fn zeros(layers: &[usize]) -> Result<Self> {
        if layers.len() < 2 || layers.contains(&0) {
            return Err(config_err(format!("invalid MLP layers {layers:?}")));
        }
        Ok(Self { layers: layers.to_vec(), params: vec![0.0; param_count(layers)] })
    }

    /// Weights uniform in `±1/√fan_in`, biases zero.
    pub fn init<R: Rng + ?Sized>(layers: &[usize], rng: &mut R) -> Result<Self> {
        let mut mlp = Self::zeros(layers)?;
        let mut offset = 0;
        for w in layers.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for p in &mut mlp.params[offset..offset + w[0] * w[1]] {
                *p = rng.gen_range(-bound..bound);
            }
            offset += w[0] * w[1] + w[1];
        }
        Ok(mlp)
    }

    pub fn layers(&self) -> &[usize] {
        &self.layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Pre-activations of every layer (input included as layer 0).
    fn forward_all(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![input.to_vec()];
        let mut offset = 0;
        let last = self.layers.len() - 2;
        for (l, w) in self.layers.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let biases = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let x = &acts[l];
            let z: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &weights[o * n_in..(o + 1) * n_in];
                    let s = biases[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                    if l < last {
                        s.max(0.0)
                    } else {
                        s
                    }
                })
                .collect();
            acts.push(z);
            offset += n_in * n_out + n_out;
        }
        acts
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.layers[0] {
            return Err(config_err(format!("MLP expects {} inputs, got {}", self.layers[0], input.len())));
        }
        Ok(self.forward_all(input).pop().expect("output layer"))
    }

    /// Per-sample loss `mean_k (y_k − t_k)²` and its gradient.
    pub fn mse_gradient(&self, input: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n_out = *self.layers.last().expect("layers");
        if input.len() != self.layers[0] || target.len() != n_out {
            return Err(config_err("MLP sample arity mismatch"));
        }
        let acts = self.forward_all(input);
        let out = &acts[acts.len() - 1];
        let loss = out.iter().zip(target).map(|(y, t)| (y - t) * (y - t)).sum::<f64>() / n_out as f64;
        let mut delta: Vec<f64> = out.iter().zip(target).map(|(y, t)| 2.0 * (y - t) / n_out as f64).collect();
        let mut grad = vec![0.0; self.params.len()];

        let mut offsets = Vec::new();
        let mut offset = 0;
        for w in self.layers.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }
        for l in (0..self.layers.len() - 1).rev() {
            let (n_in, n_out) = (self.layers[l], self.layers[l + 1]);
            let off = offsets[l];
            let x = &acts[l];
            for o in 0..n_out {
                for i in 0..n_in {
                    grad[off + o * n_in + i] = delta[o] * x[i];
                }
                grad[off + n_in * n_out + o] = delta[o];
            }
            if l > 0 {
                let weights = &self.params[off..off + n_in * n_out];
                delta = (0..n_in)
                    .map(|i| {
                        // x = relu(z), so relu'(z) = [x > 0]
                        if x[i] > 0.0 {
                            (0..n_out).map(|o| weights[o * n_in + i] * delta[o]).sum()
                        } else {
                            0.0
                        }
                    })
                    .collect();
            }
        }
        Ok((loss, grad))
    }

    pub fn evaluate_loss(&self, samples: &[Sample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::InsufficientData("cannot evaluate loss on an empty split".into()));
        }
        let mut total = 0.0;
        for s in samples {
            let out = self.forward(&s.input)?;
            total += out.iter().zip(&s.target).map(|(o, t)| (o - t) * (o - t)).sum::<f64>() / 4.0;
        }
        Ok(total / samples.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self { lr: 0.01, epochs: 200, batch_size: 32, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedMlp {
    pub mlp: Mlp,
    pub history: Vec<EpochRecord>,
    pub selected_epoch: usize,
}

/// Adam on mini-batches; keeps the epoch with the lowest validation loss.
pub fn train_mlp(train: &[Sample], val: &[Sample], config: &MlpConfig) -> Result<TrainedMlp> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::InsufficientData("training needs nonempty train and val splits".into()));
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(config_err("batch size and epochs must be positive"));
    }
    let mut init_rng = seed::stream_rng(config.seed, seed::STREAM_PARAM_INIT);
    let mut mlp = Mlp::init(&MLP_LAYERS, &mut init_rng)?;
    let mut adam = Adam::new(AdamConfig { lr: config.lr, ..AdamConfig::default() }, mlp.num_params());
    let mut shuffle_rng = seed::stream_rng(config.seed, seed::STREAM_SHUFFLE);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let mut grad = vec![0.0; mlp.num_params()];
            for &i in chunk {
                let (l, g) = mlp.mse_gradient(&train[i].input, &train[i].target)?;
                loss_sum += l;
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            }
            let n = chunk.len() as f64;
            grad.iter_mut().for_each(|g| *g /= n);
            adam.step(mlp.params_mut(), &grad)
                .map_err(|e| Error::Training(format!("MLP epoch {epoch}: {e}")))?;
        }
        let val_loss = mlp.evaluate_loss(val)?;
        if !val_loss.is_finite() {
            return Err(Error::Training(format!("MLP validation loss {val_loss} at epoch {epoch}")));
        }
        history.push(EpochRecord { epoch, train_loss: loss_sum / train.len() as f64, val_loss });
        if best.as_ref().is_none_or(|(l, _, _)| val_loss < *l) {
            best = Some((val_loss, epoch, mlp.params().to_vec()));
        }
    }
    let (_, selected_epoch, params) = best.expect("at least one epoch");
    mlp.params = params;
    Ok(TrainedMlp { mlp, history, selected_epoch })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shape_and_zero_output() {
        let m = Mlp::zeros(&MLP_LAYERS).unwrap();
        assert_eq!(m.num_params(), 5 * 16 + 16 + 16 * 16 + 16 + 16 * 4 + 4);
        assert_eq!(m.forward(&[0.3; 5]).unwrap(), vec![0.0; 4]);
        assert!(m.forward(&[0.0; 4]).is_err());
        assert!(Mlp::zeros(&[5]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let mut m = Mlp::init(&MLP_LAYERS, &mut rng).unwrap();
            // nonzero biases so no unit sits exactly at the kink
            for p in m.params_mut() {
                *p += rng.gen_range(-0.1..0.1);
            }
            let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let t: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (_, g) = m.mse_gradient(&x, &t).unwrap();
            let h = 1e-6;
            for i in 0..m.num_params() {
                let mut p = m.clone();
                p.params_mut()[i] += h;
                let (lp, _) = p.mse_gradient(&x, &t).unwrap();
                p.params_mut()[i] -= 2.0 * h;
                let (lm, _) = p.mse_gradient(&x, &t).unwrap();
                let fd = (lp - lm) / (2.0 * h);
                let tol = 1e-4 * fd.abs().max(g[i].abs()).max(1e-3);
                assert!((fd - g[i]).abs() < tol, "param {i}: fd {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn fits_linear_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples: Vec<Sample> = (0..400)
            .map(|_| {
                let input: [f64; 5] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
                let target = [0.5 * input[0], -0.3 * input[1] + 0.2 * input[4], 0.1, input[2] * 0.4];
                Sample { input, target }
            })
            .collect();
        let cfg = MlpConfig { epochs: 50, seed: 3, ..MlpConfig::default() };
        let trained = train_mlp(&samples[..300], &samples[300..], &cfg).unwrap();
        let first = trained.history[0].val_loss;
        let best = trained.mlp.evaluate_loss(&samples[300..]).unwrap();
        assert!(best < 1e-3, "val loss {best}");
        assert!(best < first);
        let again = train_mlp(&samples[..300], &samples[300..], &cfg).unwrap();
        assert_eq!(again.mlp, trained.mlp);
    }
}
