//! The three classifier schemes assembled from the network kernels:
//!
//! * `Baseline`  - BiLSTM over the raw segment, dense head.
//! * `Concat`    - CNN features and BiLSTM features computed independently
//!    from the raw segment and concatenated before the head.
//! * `Cascade`   - the CNN feature map, kept as a sequence, is fed through
//!    the BiLSTM before the head.
//!
//! The CNN backbone is four convolution blocks (conv, batch norm, ReLU,
//! max-pool on the first two, dropout) followed by global average pooling
//! when a flat feature vector is required. With the default configuration a
//! 1000-sample segment becomes a 256-length CNN feature vector and a
//! 100-length BiLSTM feature vector.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::act::{relu_backward, relu_forward, softmax, softmax_backward};
use crate::nn::{
    checkpoint, BatchNorm1d, BatchNormCache, BiLstm, BiLstmCache, Conv1d, Dense, Dropout, MaxPool1d,
    Mode, Padding, Scalar, Tensor,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// BiLSTM on raw samples.
    Baseline,
    /// CNN and BiLSTM features side by side.
    Concat,
    /// CNN feature sequence fed into the BiLSTM.
    Cascade,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Scheme::Baseline),
            "concat" => Ok(Scheme::Concat),
            "cascade" => Ok(Scheme::Cascade),
            other => Err(Error::InvalidConfig(format!(
                "unknown scheme {other:?} (expected baseline, concat, or cascade)"
            ))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Baseline => "baseline",
            Scheme::Concat => "concat",
            Scheme::Cascade => "cascade",
        })
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CnnConfig {
    pub channels: [usize; 4],
    pub kernels: [usize; 4],
    pub dropout: f64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            channels: [32, 64, 128, 256],
            kernels: [7, 5, 5, 3],
            dropout: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ModelConfig {
    pub scheme: Scheme,
    pub cnn: CnnConfig,
    pub lstm_hidden: usize,
    pub num_classes: usize,
    pub lstm_dropout: f64,
}

impl ModelConfig {
    pub fn new(scheme: Scheme) -> Self {
        ModelConfig {
            scheme,
            cnn: CnnConfig::default(),
            lstm_hidden: 100,
            num_classes: 3,
            lstm_dropout: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig("need at least two classes".into()));
        }
        if self.lstm_hidden == 0 {
            return Err(Error::InvalidConfig("lstm_hidden must be positive".into()));
        }
        if self.cnn.channels.iter().any(|&c| c == 0) || self.cnn.kernels.iter().any(|&k| k == 0) {
            return Err(Error::InvalidConfig("cnn channels and kernels must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.cnn.dropout) || !(0.0..1.0).contains(&self.lstm_dropout) {
            return Err(Error::InvalidConfig("dropout rates must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Width of the dense head input under this wiring.
    pub fn head_in_dim(&self) -> usize {
        match self.scheme {
            Scheme::Baseline | Scheme::Cascade => self.lstm_hidden,
            Scheme::Concat => self.cnn.channels[3] + self.lstm_hidden,
        }
    }
}

#[derive(Debug, Clone)]
struct ConvBlock<S: Scalar> {
    conv: Conv1d<S>,
    bn: BatchNorm1d<S>,
    pool: Option<MaxPool1d>,
    dropout: Dropout,
}

struct BlockCache<S: Scalar> {
    x_in: Tensor<S>,
    bn: BatchNormCache<S>,
    relu_out: Tensor<S>,
    /// argmax indices and pre-pool length
    pool: Option<(Vec<usize>, usize)>,
    dropout_mask: Option<Vec<S>>,
}

impl<S: Scalar> ConvBlock<S> {
    fn forward(&mut self, x: Tensor<S>, mode: Mode, rng: &mut ChaCha8Rng) -> (Tensor<S>, BlockCache<S>) {
        let conv_out = self.conv.forward(&x);
        let (bn_out, bn_cache) = self.bn.forward(&conv_out, mode);
        let relu_out = relu_forward(&bn_out);
        let (pooled, pool_cache) = match &self.pool {
            Some(p) => {
                let in_len = relu_out.shape()[2];
                let (y, arg) = p.forward(&relu_out);
                (y, Some((arg, in_len)))
            }
            None => (relu_out.clone(), None),
        };
        let (out, mask) = self.dropout.forward(&pooled, mode, rng);
        (
            out,
            BlockCache {
                x_in: x,
                bn: bn_cache,
                relu_out,
                pool: pool_cache,
                dropout_mask: mask,
            },
        )
    }

    fn backward(&mut self, cache: &BlockCache<S>, dy: &Tensor<S>) -> Tensor<S> {
        let dy = Dropout::backward(cache.dropout_mask.as_ref(), dy);
        let dy = match (&self.pool, &cache.pool) {
            (Some(p), Some((arg, in_len))) => p.backward(arg, &dy, *in_len),
            _ => dy,
        };
        let dy = relu_backward(&cache.relu_out, &dy);
        let dy = self.bn.backward(&cache.bn, &dy);
        self.conv.backward(&cache.x_in, &dy)
    }
}

#[derive(Debug, Clone)]
pub struct Network<S: Scalar> {
    pub cfg: ModelConfig,
    blocks: Vec<ConvBlock<S>>,
    lstm: BiLstm<S>,
    lstm_dropout: Dropout,
    head: Dense<S>,
}

/// Activations retained by a forward pass for the matching backward pass.
pub struct ForwardCache<S: Scalar> {
    blocks: Vec<BlockCache<S>>,
    /// CNN path feature map before pooling/transposition: [B, C, T'].
    feat_map: Option<Tensor<S>>,
    lstm_in: Option<Tensor<S>>,
    lstm: Option<BiLstmCache<S>>,
    lstm_dropout_mask: Option<Vec<S>>,
    head_in: Tensor<S>,
    pub probs: Tensor<S>,
}

/// [B, C, T] -> [B, T, C]
fn transpose_ct<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let (b, c, t) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let xd = x.data();
    let mut out = vec![S::zero(); xd.len()];
    for bi in 0..b {
        for ci in 0..c {
            let src = &xd[(bi * c + ci) * t..][..t];
            for (ti, &v) in src.iter().enumerate() {
                out[(bi * t + ti) * c + ci] = v;
            }
        }
    }
    Tensor::from_vec(&[b, t, c], out).expect("shape agrees")
}

/// [B, T, C] -> [B, C, T]
fn transpose_tc<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let (b, t, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let xd = x.data();
    let mut out = vec![S::zero(); xd.len()];
    for bi in 0..b {
        for ti in 0..t {
            let src = &xd[(bi * t + ti) * c..][..c];
            for (ci, &v) in src.iter().enumerate() {
                out[(bi * c + ci) * t + ti] = v;
            }
        }
    }
    Tensor::from_vec(&[b, c, t], out).expect("shape agrees")
}

fn global_avg_pool<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let (b, c, t) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let inv = S::from_f64(1.0 / t as f64);
    let xd = x.data();
    let mut out = vec![S::zero(); b * c];
    for bc in 0..b * c {
        let mut acc = S::zero();
        for &v in &xd[bc * t..(bc + 1) * t] {
            acc += v;
        }
        out[bc] = acc * inv;
    }
    Tensor::from_vec(&[b, c], out).expect("shape agrees")
}

fn global_avg_pool_backward<S: Scalar>(dy: &Tensor<S>, t: usize) -> Tensor<S> {
    let (b, c) = (dy.shape()[0], dy.shape()[1]);
    let inv = S::from_f64(1.0 / t as f64);
    let mut out = vec![S::zero(); b * c * t];
    for bc in 0..b * c {
        let g = dy.data()[bc] * inv;
        out[bc * t..(bc + 1) * t].iter_mut().for_each(|v| *v = g);
    }
    Tensor::from_vec(&[b, c, t], out).expect("shape agrees")
}

impl<S: Scalar> Network<S> {
    /// Deterministic construction: the same seed always yields the same
    /// parameter bytes.
    pub fn build(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut blocks = Vec::new();
        if cfg.scheme != Scheme::Baseline {
            let mut in_ch = 1;
            for (i, (&out_ch, &k)) in cfg.cnn.channels.iter().zip(&cfg.cnn.kernels).enumerate() {
                blocks.push(ConvBlock {
                    conv: Conv1d::new(in_ch, out_ch, k, 1, Padding::Same, &mut rng),
                    bn: BatchNorm1d::new(out_ch),
                    pool: (i < 2).then(|| MaxPool1d::new(2, 2)),
                    dropout: Dropout::new(cfg.cnn.dropout),
                });
                in_ch = out_ch;
            }
        }
        let lstm_feat = match cfg.scheme {
            Scheme::Baseline | Scheme::Concat => 1,
            Scheme::Cascade => cfg.cnn.channels[3],
        };
        let lstm = BiLstm::new(lstm_feat, cfg.lstm_hidden, &mut rng);
        let head = Dense::new(cfg.head_in_dim(), cfg.num_classes, &mut rng);
        Ok(Network {
            cfg: *cfg,
            blocks,
            lstm,
            lstm_dropout: Dropout::new(cfg.lstm_dropout),
            head,
        })
    }

    /// Runs the CNN blocks over [B, 1, L].
    fn backbone(&mut self, x: Tensor<S>, mode: Mode, rng: &mut ChaCha8Rng) -> (Tensor<S>, Vec<BlockCache<S>>) {
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut cur = x;
        for block in &mut self.blocks {
            let (next, cache) = block.forward(cur, mode, rng);
            caches.push(cache);
            cur = next;
        }
        (cur, caches)
    }

    fn backbone_backward(&mut self, caches: &[BlockCache<S>], dy: Tensor<S>) -> Tensor<S> {
        let mut cur = dy;
        for (block, cache) in self.blocks.iter_mut().zip(caches).rev() {
            cur = block.backward(cache, &cur);
        }
        cur
    }

    /// x: [B, L] raw segments -> class probabilities [B, K].
    pub fn forward(&mut self, x: &Tensor<S>, mode: Mode, rng: &mut ChaCha8Rng) -> (Tensor<S>, ForwardCache<S>) {
        assert_eq!(x.shape().len(), 2, "expected [batch, samples]");
        let (b, l) = (x.shape()[0], x.shape()[1]);

        let mut cache = ForwardCache {
            blocks: Vec::new(),
            feat_map: None,
            lstm_in: None,
            lstm: None,
            lstm_dropout_mask: None,
            head_in: Tensor::zeros(&[0]),
            probs: Tensor::zeros(&[0]),
        };

        let head_in = match self.cfg.scheme {
            Scheme::Baseline => {
                let seq = x.clone().reshaped(&[b, l, 1]).expect("same size");
                let (h, lstm_cache) = self.lstm.forward(&seq);
                let (h, mask) = self.lstm_dropout.forward(&h, mode, rng);
                cache.lstm_in = Some(seq);
                cache.lstm = Some(lstm_cache);
                cache.lstm_dropout_mask = mask;
                h
            }
            Scheme::Concat => {
                let conv_in = x.clone().reshaped(&[b, 1, l]).expect("same size");
                let (feat_map, blocks) = self.backbone(conv_in, mode, rng);
                let pooled = global_avg_pool(&feat_map);
                let seq = x.clone().reshaped(&[b, l, 1]).expect("same size");
                let (h, lstm_cache) = self.lstm.forward(&seq);
                let (h, mask) = self.lstm_dropout.forward(&h, mode, rng);
                cache.blocks = blocks;
                cache.feat_map = Some(feat_map);
                cache.lstm_in = Some(seq);
                cache.lstm = Some(lstm_cache);
                cache.lstm_dropout_mask = mask;
                let c = pooled.shape()[1];
                let hdim = h.shape()[1];
                let mut joined = vec![S::zero(); b * (c + hdim)];
                for bi in 0..b {
                    joined[bi * (c + hdim)..bi * (c + hdim) + c]
                        .copy_from_slice(&pooled.data()[bi * c..(bi + 1) * c]);
                    joined[bi * (c + hdim) + c..(bi + 1) * (c + hdim)]
                        .copy_from_slice(&h.data()[bi * hdim..(bi + 1) * hdim]);
                }
                Tensor::from_vec(&[b, c + hdim], joined).expect("shape agrees")
            }
            Scheme::Cascade => {
                let conv_in = x.clone().reshaped(&[b, 1, l]).expect("same size");
                let (feat_map, blocks) = self.backbone(conv_in, mode, rng);
                let seq = transpose_ct(&feat_map);
                let (h, lstm_cache) = self.lstm.forward(&seq);
                let (h, mask) = self.lstm_dropout.forward(&h, mode, rng);
                cache.blocks = blocks;
                cache.feat_map = Some(feat_map);
                cache.lstm_in = Some(seq);
                cache.lstm = Some(lstm_cache);
                cache.lstm_dropout_mask = mask;
                h
            }
        };

        let logits = self.head.forward(&head_in);
        let probs = softmax(&logits);
        cache.head_in = head_in;
        cache.probs = probs.clone();
        (probs, cache)
    }

    /// Backward from the gradient of the loss with respect to the output
    /// probabilities. Accumulates parameter gradients; returns the gradient
    /// with respect to the raw input [B, L].
    pub fn backward(&mut self, cache: &ForwardCache<S>, dprobs: &Tensor<S>) -> Tensor<S> {
        let dlogits = softmax_backward(&cache.probs, dprobs);
        let dhead_in = self.head.backward(&cache.head_in, &dlogits);
        let b = dhead_in.shape()[0];

        match self.cfg.scheme {
            Scheme::Baseline => {
                let dh = Dropout::backward(cache.lstm_dropout_mask.as_ref(), &dhead_in);
                let lstm_in = cache.lstm_in.as_ref().expect("cached");
                let dseq = self.lstm.backward(lstm_in, cache.lstm.as_ref().expect("cached"), &dh);
                let l = dseq.shape()[1];
                dseq.reshaped(&[b, l]).expect("same size")
            }
            Scheme::Concat => {
                let c = self.cfg.cnn.channels[3];
                let hdim = self.cfg.lstm_hidden;
                let mut dpool = vec![S::zero(); b * c];
                let mut dh = vec![S::zero(); b * hdim];
                for bi in 0..b {
                    let row = &dhead_in.data()[bi * (c + hdim)..(bi + 1) * (c + hdim)];
                    dpool[bi * c..(bi + 1) * c].copy_from_slice(&row[..c]);
                    dh[bi * hdim..(bi + 1) * hdim].copy_from_slice(&row[c..]);
                }
                let feat_map = cache.feat_map.as_ref().expect("cached");
                let t = feat_map.shape()[2];
                let dpool = Tensor::from_vec(&[b, c], dpool).expect("shape agrees");
                let dfeat = global_avg_pool_backward(&dpool, t);
                let dconv_in = self.backbone_backward(&cache.blocks, dfeat);

                let dh = Tensor::from_vec(&[b, hdim], dh).expect("shape agrees");
                let dh = Dropout::backward(cache.lstm_dropout_mask.as_ref(), &dh);
                let lstm_in = cache.lstm_in.as_ref().expect("cached");
                let dseq = self.lstm.backward(lstm_in, cache.lstm.as_ref().expect("cached"), &dh);

                let l = dseq.shape()[1];
                let mut dx = dconv_in.reshaped(&[b, l]).expect("same size");
                let dseq = dseq.reshaped(&[b, l]).expect("same size");
                for (a, &g) in dx.data_mut().iter_mut().zip(dseq.data()) {
                    *a += g;
                }
                dx
            }
            Scheme::Cascade => {
                let dh = Dropout::backward(cache.lstm_dropout_mask.as_ref(), &dhead_in);
                let lstm_in = cache.lstm_in.as_ref().expect("cached");
                let dseq = self.lstm.backward(lstm_in, cache.lstm.as_ref().expect("cached"), &dh);
                let dfeat = transpose_tc(&dseq);
                let dconv_in = self.backbone_backward(&cache.blocks, dfeat);
                let l = dconv_in.shape()[2];
                dconv_in.reshaped(&[b, l]).expect("same size")
            }
        }
    }

    /// Eval-mode probabilities without keeping the cache.
    pub fn predict(&mut self, x: &Tensor<S>) -> Tensor<S> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (probs, _) = self.forward(x, Mode::Eval, &mut rng);
        probs
    }

    /// Trainable parameters in a fixed order.
    pub fn visit_params_mut(&mut self, mut f: impl FnMut(&str, &mut Tensor<S>)) {
        for (i, block) in self.blocks.iter_mut().enumerate() {
            f(&format!("block{i}.conv.weight"), &mut block.conv.weight);
            f(&format!("block{i}.conv.bias"), &mut block.conv.bias);
            f(&format!("block{i}.bn.gamma"), &mut block.bn.gamma);
            f(&format!("block{i}.bn.beta"), &mut block.bn.beta);
        }
        f("lstm.fwd.w", &mut self.lstm.fwd.w);
        f("lstm.fwd.u", &mut self.lstm.fwd.u);
        f("lstm.fwd.b", &mut self.lstm.fwd.b);
        f("lstm.bwd.w", &mut self.lstm.bwd.w);
        f("lstm.bwd.u", &mut self.lstm.bwd.u);
        f("lstm.bwd.b", &mut self.lstm.bwd.b);
        f("head.weight", &mut self.head.weight);
        f("head.bias", &mut self.head.bias);
    }

    pub fn zero_grads(&mut self) {
        self.visit_params_mut(|_, t| t.zero_grad());
    }

    /// Parameter names and shapes, the wiring-sensitive inventory.
    pub fn param_inventory(&mut self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        self.visit_params_mut(|name, t| out.push((name.to_string(), t.shape().to_vec())));
        out
    }

    pub fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params_mut(|_, t| n += t.len());
        n
    }

    /// Flattened copy of all trainable parameters.
    pub fn param_vector(&mut self) -> Vec<S> {
        let mut out = Vec::new();
        self.visit_params_mut(|_, t| out.extend_from_slice(t.data()));
        out
    }

    pub fn set_param_vector(&mut self, values: &[S]) {
        let mut pos = 0;
        self.visit_params_mut(|_, t| {
            let n = t.len();
            t.data_mut().copy_from_slice(&values[pos..pos + n]);
            pos += n;
        });
        assert_eq!(pos, values.len(), "parameter vector length mismatch");
    }

    /// Flattened copy of all gradients, in `param_vector` order.
    pub fn grad_vector(&mut self) -> Vec<S> {
        let mut out = Vec::new();
        self.visit_params_mut(|_, t| {
            out.extend_from_slice(t.grad_mut());
        });
        out
    }

    /// Expected parameter count computed from the configuration alone.
    pub fn param_count_formula(cfg: &ModelConfig) -> usize {
        let mut n = 0;
        if cfg.scheme != Scheme::Baseline {
            let mut in_ch = 1;
            for (&out_ch, &k) in cfg.cnn.channels.iter().zip(&cfg.cnn.kernels) {
                n += out_ch * in_ch * k + out_ch; // conv
                n += 2 * out_ch; // bn affine
                in_ch = out_ch;
            }
        }
        let feat = match cfg.scheme {
            Scheme::Baseline | Scheme::Concat => 1,
            Scheme::Cascade => cfg.cnn.channels[3],
        };
        let h = cfg.lstm_hidden;
        n += 2 * (4 * h * feat + 4 * h * h + 4 * h); // two directions
        n += cfg.num_classes * cfg.head_in_dim() + cfg.num_classes;
        n
    }
}

impl Network<f32> {
    /// All persistent state: trainable parameters plus batch-norm running
    /// statistics. `restore` puts a snapshot back exactly.
    pub fn snapshot(&mut self) -> Vec<(String, Tensor<f32>)> {
        let mut entries = Vec::new();
        self.visit_params_mut(|name, t| entries.push((name.to_string(), t.clone())));
        for (i, block) in self.blocks.iter().enumerate() {
            entries.push((
                format!("block{i}.bn.running_mean"),
                Tensor::from_vec(&[block.bn.channels], block.bn.running_mean.clone()).expect("shape"),
            ));
            entries.push((
                format!("block{i}.bn.running_var"),
                Tensor::from_vec(&[block.bn.channels], block.bn.running_var.clone()).expect("shape"),
            ));
        }
        entries
    }

    pub fn restore(&mut self, entries: Vec<(String, Tensor<f32>)>) -> Result<()> {
        let mut map: std::collections::HashMap<String, Tensor<f32>> = entries.into_iter().collect();
        let mut problems = Vec::new();
        self.visit_params_mut(|name, t| match map.remove(name) {
            Some(loaded) if loaded.shape() == t.shape() => {
                t.data_mut().copy_from_slice(loaded.data());
            }
            Some(loaded) => problems.push(format!(
                "{name}: shape {:?} in file, {:?} in model",
                loaded.shape(),
                t.shape()
            )),
            None => problems.push(format!("{name}: absent from checkpoint")),
        });
        for (i, block) in self.blocks.iter_mut().enumerate() {
            for (suffix, dst) in [
                ("running_mean", &mut block.bn.running_mean),
                ("running_var", &mut block.bn.running_var),
            ] {
                let key = format!("block{i}.bn.{suffix}");
                match map.remove(&key) {
                    Some(t) if t.len() == dst.len() => dst.copy_from_slice(t.data()),
                    _ => problems.push(format!("{key}: absent or wrong shape")),
                }
            }
        }
        if !problems.is_empty() {
            return Err(Error::Checkpoint(problems.join("; ")));
        }
        Ok(())
    }

    pub fn save_checkpoint(&mut self, path: &std::path::Path) -> Result<()> {
        let entries = self.snapshot();
        let refs: Vec<(String, &Tensor<f32>)> = entries.iter().map(|(n, t)| (n.clone(), t)).collect();
        checkpoint::save(path, &refs)
    }

    pub fn load_checkpoint(&mut self, path: &std::path::Path) -> Result<()> {
        self.restore(checkpoint::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cnn() -> CnnConfig {
        CnnConfig {
            channels: [4, 8, 8, 16],
            kernels: [7, 5, 5, 3],
            dropout: 0.2,
        }
    }

    fn input(b: usize, l: usize) -> Tensor<f32> {
        Tensor::from_vec(&[b, l], (0..b * l).map(|i| ((i * 37) as f32 * 0.01).sin()).collect()).unwrap()
    }

    #[test]
    fn default_backbone_maps_1000_to_256_features() {
        let cfg = ModelConfig::new(Scheme::Concat);
        let mut net = Network::<f32>::build(&cfg, 0).unwrap();
        let x = input(1, 1000).reshaped(&[1, 1, 1000]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (feat, _) = net.backbone(x, Mode::Eval, &mut rng);
        assert_eq!(feat.shape(), &[1, 256, 250]);
        let pooled = global_avg_pool(&feat);
        assert_eq!(pooled.shape(), &[1, 256]);
    }

    #[test]
    fn probabilities_are_rows_summing_to_one() {
        for scheme in [Scheme::Baseline, Scheme::Concat, Scheme::Cascade] {
            let mut cfg = ModelConfig::new(scheme);
            cfg.cnn = tiny_cnn();
            cfg.lstm_hidden = 6;
            let mut net = Network::<f32>::build(&cfg, 1).unwrap();
            let probs = net.predict(&input(3, 200));
            assert_eq!(probs.shape(), &[3, 3]);
            for b in 0..3 {
                let sum: f32 = probs.data()[b * 3..(b + 1) * 3].iter().sum();
                assert!((sum - 1.0).abs() < 1e-5, "{scheme}: row sums to {sum}");
            }
        }
    }

    #[test]
    fn zero_weight_baseline_outputs_uniform() {
        let mut cfg = ModelConfig::new(Scheme::Baseline);
        cfg.lstm_hidden = 5;
        let mut net = Network::<f64>::build(&cfg, 2).unwrap();
        let zeros = vec![0.0; net.param_vector().len()];
        net.set_param_vector(&zeros);
        let probs = net.predict(&input(2, 64).cast());
        for &p in probs.data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_builds_identical_parameters() {
        let mut cfg = ModelConfig::new(Scheme::Cascade);
        cfg.cnn = tiny_cnn();
        cfg.lstm_hidden = 6;
        let mut a = Network::<f32>::build(&cfg, 42).unwrap();
        let mut b = Network::<f32>::build(&cfg, 42).unwrap();
        assert_eq!(a.param_vector(), b.param_vector());
        let mut c = Network::<f32>::build(&cfg, 43).unwrap();
        assert_ne!(a.param_vector(), c.param_vector());
    }

    #[test]
    fn enumerated_parameter_count_matches_formula() {
        for scheme in [Scheme::Baseline, Scheme::Concat, Scheme::Cascade] {
            let mut cfg = ModelConfig::new(scheme);
            cfg.cnn = tiny_cnn();
            cfg.lstm_hidden = 7;
            let mut net = Network::<f32>::build(&cfg, 3).unwrap();
            assert_eq!(
                net.param_count(),
                Network::<f32>::param_count_formula(&cfg),
                "{scheme}"
            );
        }
    }

    #[test]
    fn concat_fusion_width_is_cnn_plus_lstm() {
        let cfg = ModelConfig::new(Scheme::Concat);
        assert_eq!(cfg.head_in_dim(), 256 + 100);
        let mut net = Network::<f32>::build(&cfg, 0).unwrap();
        let inventory = net.param_inventory();
        let head = inventory.iter().find(|(n, _)| n == "head.weight").unwrap();
        assert_eq!(head.1, vec![3, 356]);
    }

    #[test]
    fn concat_and_cascade_differ_only_in_wiring() {
        let mut a_cfg = ModelConfig::new(Scheme::Concat);
        let mut b_cfg = ModelConfig::new(Scheme::Cascade);
        a_cfg.cnn = tiny_cnn();
        b_cfg.cnn = tiny_cnn();
        a_cfg.lstm_hidden = 6;
        b_cfg.lstm_hidden = 6;
        let mut a = Network::<f32>::build(&a_cfg, 0).unwrap();
        let mut b = Network::<f32>::build(&b_cfg, 0).unwrap();
        let inv_a = a.param_inventory();
        let inv_b = b.param_inventory();
        // identical CNN and BN parameter shapes
        for ((na, sa), (nb, sb)) in inv_a.iter().zip(&inv_b).take(16) {
            assert_eq!(na, nb);
            assert_eq!(sa, sb);
        }
        // wiring differs: lstm input width and head width
        let shape_of = |inv: &[(String, Vec<usize>)], name: &str| {
            inv.iter().find(|(n, _)| n == name).unwrap().1.clone()
        };
        assert_eq!(shape_of(&inv_a, "lstm.fwd.w")[1], 1);
        assert_eq!(shape_of(&inv_b, "lstm.fwd.w")[1], 16);
        assert_ne!(shape_of(&inv_a, "head.weight"), shape_of(&inv_b, "head.weight"));
    }

    #[test]
    fn cascade_sequence_length_is_quarter_of_input() {
        let mut cfg = ModelConfig::new(Scheme::Cascade);
        cfg.cnn = tiny_cnn();
        cfg.lstm_hidden = 4;
        let mut net = Network::<f32>::build(&cfg, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = input(1, 1000).reshaped(&[1, 1, 1000]).unwrap();
        let (feat, _) = net.backbone(x, Mode::Eval, &mut rng);
        assert_eq!(feat.shape()[2], 250);
    }

    #[test]
    fn eval_forward_is_batch_order_invariant() {
        let mut cfg = ModelConfig::new(Scheme::Cascade);
        cfg.cnn = tiny_cnn();
        cfg.lstm_hidden = 6;
        let mut net = Network::<f32>::build(&cfg, 8).unwrap();
        let a = input(2, 120);
        let mut swapped = vec![0.0f32; 240];
        swapped[..120].copy_from_slice(&a.data()[120..]);
        swapped[120..].copy_from_slice(&a.data()[..120]);
        let b = Tensor::from_vec(&[2, 120], swapped).unwrap();
        let pa = net.predict(&a);
        let pb = net.predict(&b);
        assert_eq!(&pa.data()[..3], &pb.data()[3..]);
        assert_eq!(&pa.data()[3..], &pb.data()[..3]);
    }

    #[test]
    fn checkpoint_round_trip_restores_outputs_bit_exactly() {
        let mut cfg = ModelConfig::new(Scheme::Cascade);
        cfg.cnn = tiny_cnn();
        cfg.lstm_hidden = 6;
        let mut net = Network::<f32>::build(&cfg, 11).unwrap();
        // move running stats away from init so they round-trip too
        let x = input(4, 120);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let _ = net.forward(&x, Mode::Train, &mut rng);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        net.save_checkpoint(&path).unwrap();
        let before = net.predict(&x);

        let mut restored = Network::<f32>::build(&cfg, 999).unwrap();
        restored.load_checkpoint(&path).unwrap();
        let after = restored.predict(&x);
        assert_eq!(before.data(), after.data());
    }

    #[test]
    fn checkpoint_shape_mismatch_is_rejected() {
        let mut small = Network::<f32>::build(
            &ModelConfig {
                lstm_hidden: 4,
                ..ModelConfig::new(Scheme::Baseline)
            },
            0,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        small.save_checkpoint(&path).unwrap();
        let mut big = Network::<f32>::build(
            &ModelConfig {
                lstm_hidden: 8,
                ..ModelConfig::new(Scheme::Baseline)
            },
            0,
        )
        .unwrap();
        assert!(big.load_checkpoint(&path).is_err());
    }
}
