use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{GruWeights, Tape, Var};
use super::{Activation, ModelConfig, ModelError, PoolingHead, Result};
use crate::rng::{domain, keyed};
use crate::signal::MelSpectrogram;

#[derive(Debug, Clone)]
struct Block {
    conv_w: usize,
    conv_b: usize,
    conv_out: usize,
    /// Context-gating channel mix, absent for GLU.
    gate: Option<(usize, usize)>,
}

/// Parameter offsets for a config, plus the initialization bound of each weight block.
#[derive(Debug, Clone)]
struct Layout {
    blocks: Vec<Block>,
    gru: [GruWeights; 2],
    out: (usize, usize),
    attention: Option<(usize, usize)>,
    /// `(offset, len, bound)` of every weight block; biases start at zero.
    weights: Vec<(usize, usize, f64)>,
    n_params: usize,
}

impl Layout {
    fn new(cfg: &ModelConfig) -> Self {
        let mut n = 0;
        let mut weights = Vec::new();
        let mut weight = |len: usize, fan_in: usize, fan_out: usize, n: &mut usize| {
            let off = *n;
            *n += len;
            weights.push((off, len, (6.0 / (fan_in + fan_out) as f64).sqrt()));
            off
        };
        let bias = |len: usize, n: &mut usize| {
            let off = *n;
            *n += len;
            off
        };
        let mut blocks = Vec::new();
        let mut cin = 1;
        for &c in &cfg.channels {
            let conv_out = match cfg.activation {
                Activation::Glu => 2 * c,
                Activation::Cg => c,
            };
            let conv_w = weight(conv_out * cin * 9, cin * 9, conv_out * 9, &mut n);
            let conv_b = bias(conv_out, &mut n);
            let gate = match cfg.activation {
                Activation::Glu => None,
                Activation::Cg => {
                    let w = weight(c * c, c, c, &mut n);
                    Some((w, bias(c, &mut n)))
                }
            };
            blocks.push(Block { conv_w, conv_b, conv_out, gate });
            cin = c;
        }
        let d = cin * cfg.pooled_mels();
        let h = cfg.recurrent_hidden;
        let mut gru = |n: &mut usize| {
            let w_i = *n;
            for _ in 0..3 {
                weight(h * d, d, h, n);
            }
            let w_h = *n;
            for _ in 0..3 {
                weight(h * h, h, h, n);
            }
            let b_i = bias(3 * h, n);
            let b_h = bias(3 * h, n);
            GruWeights { w_i, w_h, b_i, b_h }
        };
        let gru = [gru(&mut n), gru(&mut n)];
        let c = cfg.n_classes;
        let out_w = weight(c * 2 * h, 2 * h, c, &mut n);
        let out = (out_w, bias(c, &mut n));
        let attention = match cfg.pooling_head {
            PoolingHead::Attention => {
                let w = weight(c * 2 * h, 2 * h, c, &mut n);
                Some((w, bias(c, &mut n)))
            }
            PoolingHead::Mean => None,
        };
        Self { blocks, gru, out, attention, weights, n_params: n }
    }
}

/// Frame-level and clip-level class probabilities for one clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Row-major `n_frames x n_classes`.
    pub strong: Vec<f64>,
    pub weak: Vec<f64>,
    pub n_frames: usize,
    pub n_classes: usize,
}

impl Prediction {
    pub fn strong_at(&self, t: usize, c: usize) -> f64 {
        self.strong[t * self.n_classes + c]
    }
}

/// Network configuration with its flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    pub params: Vec<f64>,
}

/// A recorded forward pass; consumed by [`Forward::backward`].
pub struct Forward<'a> {
    tape: Tape<'a>,
    strong: Var,
    weak: Var,
    pub prediction: Prediction,
}

impl Forward<'_> {
    /// Gradient with respect to the parameters of the scalar whose gradients
    /// with respect to the strong and weak outputs are `d_strong` and `d_weak`.
    pub fn backward(self, d_strong: &[f64], d_weak: &[f64]) -> Result<Vec<f64>> {
        let p = &self.prediction;
        if d_strong.len() != p.strong.len() {
            return Err(ModelError::DimensionMismatch { what: "strong gradient", expected: p.strong.len(), got: d_strong.len() });
        }
        if d_weak.len() != p.weak.len() {
            return Err(ModelError::DimensionMismatch { what: "weak gradient", expected: p.weak.len(), got: d_weak.len() });
        }
        Ok(self.tape.backward(&[(self.strong, d_strong), (self.weak, d_weak)]))
    }
}

impl ModelState {
    /// Uniform `±sqrt(6 / (fan_in + fan_out))` weights, zero biases.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.n_params];
        let mut rng = keyed(&[seed, domain::INIT]);
        for &(off, len, bound) in &layout.weights {
            for p in &mut params[off..off + len] {
                *p = rng.gen_range(-bound..bound);
            }
        }
        Ok(Self { config, params })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let n = Layout::new(&config).n_params;
        Ok(Self { config, params: vec![0.0; n] })
    }

    pub fn n_params_for(config: &ModelConfig) -> usize {
        Layout::new(config).n_params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn with_params(&self, params: Vec<f64>) -> Result<Self> {
        if params.len() != self.params.len() {
            return Err(ModelError::DimensionMismatch { what: "parameter count", expected: self.params.len(), got: params.len() });
        }
        Ok(Self { config: self.config.clone(), params })
    }

    pub fn forward(&self, m: &MelSpectrogram) -> Result<Forward<'_>> {
        let cfg = &self.config;
        if m.n_mels != cfg.n_mels {
            return Err(ModelError::DimensionMismatch { what: "mel bins", expected: cfg.n_mels, got: m.n_mels });
        }
        let pf = cfg.pool_factor();
        if m.n_frames == 0 || !m.n_frames.is_multiple_of(pf) {
            let expected = m.n_frames.div_ceil(pf).max(1) * pf;
            return Err(ModelError::DimensionMismatch { what: "input frames (pad to the pooling factor)", expected, got: m.n_frames });
        }
        let layout = Layout::new(cfg);
        if layout.n_params != self.params.len() {
            return Err(ModelError::DimensionMismatch { what: "parameter count", expected: layout.n_params, got: self.params.len() });
        }
        let mut t = Tape::new(&self.params);
        let inv = 1.0 / cfg.input_std;
        let x = m.data.iter().map(|&v| (v as f64 - cfg.input_mean) * inv).collect();
        let mut x = t.input(x, vec![1, m.n_frames, m.n_mels]);
        for (block, (&c, &(pt, pfq))) in layout.blocks.iter().zip(cfg.channels.iter().zip(&cfg.pools)) {
            let y = t.conv3x3(x, block.conv_w, block.conv_b, block.conv_out);
            let y = match block.gate {
                None => {
                    let a = t.slice_channels(y, 0, c);
                    let b = t.slice_channels(y, c, c);
                    let g = t.sigmoid(b);
                    t.mul(a, g)
                }
                Some((w, b)) => {
                    let pre = t.conv1x1(y, w, b, c);
                    let g = t.sigmoid(pre);
                    t.mul(y, g)
                }
            };
            x = t.avg_pool(y, pt, pfq);
        }
        let seq = t.to_sequence(x);
        let fwd = t.gru(seq, cfg.recurrent_hidden, layout.gru[0], false);
        let bwd = t.gru(seq, cfg.recurrent_hidden, layout.gru[1], true);
        let h = t.concat_cols(fwd, bwd);
        let logits = t.dense(h, layout.out.0, layout.out.1, cfg.n_classes);
        let strong = t.sigmoid(logits);
        let weak = match layout.attention {
            Some((w, b)) => {
                let scores = t.dense(h, w, b, cfg.n_classes);
                let att = t.softmax_rows(scores);
                let weighted = t.mul(att, strong);
                t.sum_rows(weighted)
            }
            None => t.mean_rows(strong),
        };
        let prediction = Prediction {
            strong: t.value(strong).to_vec(),
            weak: t.value(weak).to_vec(),
            n_frames: m.n_frames / pf,
            n_classes: cfg.n_classes,
        };
        Ok(Forward { tape: t, strong, weak, prediction })
    }

    pub fn predict(&self, m: &MelSpectrogram) -> Result<Prediction> {
        Ok(self.forward(m)?.prediction)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, PoolingHead};

    pub(crate) fn tiny(activation: Activation, head: PoolingHead) -> ModelConfig {
        ModelConfig {
            n_mels: 4,
            n_classes: 2,
            channels: vec![2],
            pools: vec![(2, 2)],
            activation,
            recurrent_hidden: 3,
            pooling_head: head,
            input_mean: 0.5,
            input_std: 2.0,
        }
    }

    fn features(seed: u64, frames: usize, mels: usize) -> MelSpectrogram {
        let mut rng = keyed(&[seed]);
        MelSpectrogram { data: (0..frames * mels).map(|_| rng.gen_range(-2.0..2.0)).collect(), n_frames: frames, n_mels: mels, frame_hop_s: 0.016 }
    }

    #[test]
    fn shapes_and_zero_params() {
        let cfg = ModelConfig::desk(64, 4);
        let m = features(1, 500, 64);
        let z = ModelState::zeros(cfg.clone()).unwrap();
        let p = z.predict(&m).unwrap();
        assert_eq!((p.n_frames, p.strong.len(), p.weak.len()), (125, 500, 4));
        assert!(p.strong.iter().all(|&v| v == 0.5));
        // Attention weights are uniform; their sum is 1 up to rounding.
        assert!(p.weak.iter().all(|&v| (v - 0.5).abs() < 1e-12));
        let s = ModelState::new(cfg, 3).unwrap();
        let p = s.predict(&m).unwrap();
        assert!(p.strong.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn mean_head_is_frame_average() {
        let cfg = tiny(Activation::Cg, PoolingHead::Mean);
        let s = ModelState::new(cfg, 5).unwrap();
        let p = s.predict(&features(2, 8, 4)).unwrap();
        for c in 0..2 {
            let mean: f64 = (0..p.n_frames).map(|t| p.strong_at(t, c)).sum::<f64>() / p.n_frames as f64;
            assert!((p.weak[c] - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn attention_is_convex_combination() {
        for seed in 0..20 {
            let s = ModelState::new(tiny(Activation::Glu, PoolingHead::Attention), seed).unwrap();
            let p = s.predict(&features(seed, 12, 4)).unwrap();
            for c in 0..2 {
                let col: Vec<f64> = (0..p.n_frames).map(|t| p.strong_at(t, c)).collect();
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert!(p.weak[c] >= lo - 1e-15 && p.weak[c] <= hi + 1e-15);
            }
        }
    }

    #[test]
    fn deterministic_forward() {
        let s = ModelState::new(ModelConfig::desk(64, 4), 9).unwrap();
        let m = features(4, 64, 64);
        assert_eq!(s.predict(&m).unwrap(), s.predict(&m).unwrap());
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = ModelState::new(tiny(Activation::Glu, PoolingHead::Mean), 0).unwrap();
        assert!(matches!(s.forward(&features(0, 7, 4)), Err(ModelError::DimensionMismatch { .. })));
        assert!(matches!(s.forward(&features(0, 8, 5)), Err(ModelError::DimensionMismatch { .. })));
        let mut bad = tiny(Activation::Glu, PoolingHead::Mean);
        bad.n_mels = 5;
        assert!(ModelState::new(bad, 0).is_err());
    }

    #[test]
    fn gradient_is_linear_in_seed() {
        let s = ModelState::new(tiny(Activation::Cg, PoolingHead::Attention), 1).unwrap();
        let m = features(7, 8, 4);
        let ds: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
        let dw = [0.3, -0.7];
        let g1 = s.forward(&m).unwrap().backward(&ds, &dw).unwrap();
        let ds3: Vec<f64> = ds.iter().map(|v| 3.0 * v).collect();
        let g3 = s.forward(&m).unwrap().backward(&ds3, &[0.9, -2.1]).unwrap();
        for (a, b) in g1.iter().zip(&g3) {
            assert!((3.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        let zero = s.forward(&m).unwrap().backward(&[0.0; 8], &[0.0; 2]).unwrap();
        assert!(zero.iter().all(|&g| g == 0.0));
    }
}
