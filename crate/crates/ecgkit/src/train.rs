//! Adam-driven training with focal loss, per-epoch validation metrics,
//! best-checkpoint tracking, and segment- plus record-level evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{focal_loss, FocalConfig};
use crate::metrics::{f1, specificity, weighted_f1, ConfusionMatrix, MetricsReport};
use crate::model::Network;
use crate::nn::{Mode, Scalar, Tensor};
use crate::segment::{RecordIndex, Segment};

const EVAL_BATCH: usize = 64;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Minibatch size. The published protocol used 2048; the desk-scale
    /// default is 64.
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub focal_gamma: f64,
    pub seed: u64,
    pub split_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 64,
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            focal_gamma: 2.0,
            seed: 0,
            split_fraction: 0.7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if self.lr <= 0.0 {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction <= 1.0) {
            return Err(Error::InvalidConfig("split_fraction must be in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl From<&TrainConfig> for AdamHyper {
    fn from(cfg: &TrainConfig) -> Self {
        AdamHyper {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
        }
    }
}

/// One bias-corrected Adam update on a single parameter tensor.
/// `t` is the 1-based step count.
pub fn adam_step<S: Scalar>(
    param: &mut [S],
    grad: &[S],
    m: &mut [S],
    v: &mut [S],
    t: u64,
    hyper: &AdamHyper,
) -> Result<()> {
    if param.len() != grad.len() || param.len() != m.len() || param.len() != v.len() {
        return Err(Error::ShapeMismatch(format!(
            "adam buffers disagree: param {}, grad {}, m {}, v {}",
            param.len(),
            grad.len(),
            m.len(),
            v.len()
        )));
    }
    let b1 = S::from_f64(hyper.beta1);
    let b2 = S::from_f64(hyper.beta2);
    let one = S::one();
    let bc1 = S::from_f64(1.0 - hyper.beta1.powi(t as i32));
    let bc2 = S::from_f64(1.0 - hyper.beta2.powi(t as i32));
    let lr = S::from_f64(hyper.lr);
    let eps = S::from_f64(hyper.eps);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] = param[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// First and second moments for every trainable tensor, in visit order.
#[derive(Debug, Clone, Default)]
pub struct AdamState<S: Scalar> {
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
    pub t: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new() -> Self {
        AdamState {
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    /// Applies one optimizer step over all parameters of the network.
    pub fn step(&mut self, net: &mut Network<S>, hyper: &AdamHyper) -> Result<()> {
        self.t += 1;
        let t = self.t;
        if self.m.is_empty() {
            net.visit_params_mut(|_, p| {
                self.m.push(vec![S::zero(); p.len()]);
                self.v.push(vec![S::zero(); p.len()]);
            });
        }
        let (ms, vs) = (&mut self.m, &mut self.v);
        let mut idx = 0;
        let mut status = Ok(());
        net.visit_params_mut(|_, p| {
            let (data, grad) = p.data_and_grad_mut();
            if status.is_ok() {
                status = adam_step(data, grad, &mut ms[idx], &mut vs[idx], t, hyper);
            }
            idx += 1;
        });
        status
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_weighted_f1: f64,
    pub val_f1: [f64; 3],
    pub val_specificity: [f64; 3],
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    /// CSV with one row per epoch:
    /// epoch,train_loss,val_loss,val_weighted_f1,val_specificity_N,val_specificity_A,val_specificity_O
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "epoch,train_loss,val_loss,val_weighted_f1,val_specificity_N,val_specificity_A,val_specificity_O\n",
        );
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                e.epoch,
                e.train_loss,
                e.val_loss,
                e.val_weighted_f1,
                e.val_specificity[0],
                e.val_specificity[1],
                e.val_specificity[2]
            ));
        }
        out
    }
}

pub struct TrainOutcome {
    pub history: TrainHistory,
    pub best_epoch: usize,
    pub best_val_f1: f64,
    /// Full state snapshot (parameters plus running stats) of the
    /// best-validation-F1 epoch.
    pub best_state: Vec<(String, Tensor<f32>)>,
}

fn batch_tensor(segments: &[Segment], idx: &[usize]) -> Tensor<f32> {
    let seg_len = segments[idx[0]].samples.len();
    let mut data = Vec::with_capacity(idx.len() * seg_len);
    for &i in idx {
        data.extend_from_slice(&segments[i].samples);
    }
    Tensor::from_vec(&[idx.len(), seg_len], data).expect("shape agrees")
}

/// Eval-mode class probabilities for every segment, batched.
pub fn predict_segments(net: &mut Network<f32>, segments: &[Segment]) -> Vec<Vec<f64>> {
    let k = net.cfg.num_classes;
    let mut out = Vec::with_capacity(segments.len());
    let indices: Vec<usize> = (0..segments.len()).collect();
    for chunk in indices.chunks(EVAL_BATCH) {
        let x = batch_tensor(segments, chunk);
        let probs = net.predict(&x);
        for b in 0..chunk.len() {
            out.push(probs.data()[b * k..(b + 1) * k].iter().map(|&v| v as f64).collect());
        }
    }
    out
}

/// Lowest index wins ties.
pub fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Mean of the per-segment probability rows.
pub fn mean_probs(rows: &[Vec<f64>]) -> Vec<f64> {
    let k = rows[0].len();
    let mut mean = vec![0.0; k];
    for row in rows {
        for (m, &p) in mean.iter_mut().zip(row) {
            *m += p;
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows.len() as f64);
    mean
}

fn eval_loss_and_confusion(
    net: &mut Network<f32>,
    segments: &[Segment],
    gamma: f64,
) -> Result<(f64, ConfusionMatrix)> {
    let k = net.cfg.num_classes;
    let mut cm = ConfusionMatrix::new(k);
    let mut loss_sum = 0.0;
    let indices: Vec<usize> = (0..segments.len()).collect();
    for chunk in indices.chunks(EVAL_BATCH) {
        let x = batch_tensor(segments, chunk);
        let targets: Vec<usize> = chunk.iter().map(|&i| segments[i].label.index()).collect();
        let probs = net.predict(&x);
        let (loss, _) = focal_loss(&probs, &targets, &FocalConfig { gamma })?;
        loss_sum += loss * chunk.len() as f64;
        for (b, &t) in targets.iter().enumerate() {
            let row: Vec<f64> = probs.data()[b * k..(b + 1) * k].iter().map(|&v| v as f64).collect();
            cm.counts[t][argmax_lowest(&row)] += 1;
        }
    }
    Ok((loss_sum / segments.len() as f64, cm))
}

/// Trains in place. Per epoch: seeded shuffle, minibatch forward, focal
/// loss, backward, Adam update; then full validation metrics. The state of
/// the best-weighted-F1 epoch is kept in the outcome; the network itself is
/// left at the final epoch.
pub fn train(
    net: &mut Network<f32>,
    train_segments: &[Segment],
    val_segments: &[Segment],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_segments.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    let hyper = AdamHyper::from(cfg);
    let focal = FocalConfig { gamma: cfg.focal_gamma };
    focal.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new();
    let mut history = TrainHistory::default();
    let mut best_epoch = 0;
    let mut best_val_f1 = f64::NEG_INFINITY;
    let mut best_state = net.snapshot();

    let mut order: Vec<usize> = (0..train_segments.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (batch_no, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let x = batch_tensor(train_segments, chunk);
            let targets: Vec<usize> = chunk.iter().map(|&i| train_segments[i].label.index()).collect();
            let (probs, cache) = net.forward(&x, Mode::Train, &mut rng);
            let (loss, dprobs) = focal_loss(&probs, &targets, &focal)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss {loss} at epoch {epoch}, batch {batch_no}"
                )));
            }
            loss_sum += loss * chunk.len() as f64;
            net.zero_grads();
            net.backward(&cache, &dprobs);
            adam.step(net, &hyper)?;
        }
        let train_loss = loss_sum / train_segments.len() as f64;

        let (val_loss, val_wf1, val_f1, val_spec) = if val_segments.is_empty() {
            (0.0, 0.0, [0.0; 3], [1.0; 3])
        } else {
            let (loss, cm) = eval_loss_and_confusion(net, val_segments, cfg.focal_gamma)?;
            let per_f1 = [f1(&cm, 0), f1(&cm, 1), f1(&cm, 2)];
            let spec = [specificity(&cm, 0), specificity(&cm, 1), specificity(&cm, 2)];
            (loss, weighted_f1(&cm), per_f1, spec)
        };

        history.epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            val_weighted_f1: val_wf1,
            val_f1,
            val_specificity: val_spec,
        });

        if val_wf1 > best_val_f1 {
            best_val_f1 = val_wf1;
            best_epoch = epoch;
            best_state = net.snapshot();
        }
    }

    Ok(TrainOutcome {
        history,
        best_epoch,
        best_val_f1,
        best_state,
    })
}

/// Segment-level metrics over an evaluation set.
pub fn evaluate(net: &mut Network<f32>, segments: &[Segment]) -> Result<MetricsReport> {
    if segments.is_empty() {
        return Err(Error::InvalidInput("nothing to evaluate".into()));
    }
    let probs = predict_segments(net, segments);
    let preds: Vec<usize> = probs.iter().map(|r| argmax_lowest(r)).collect();
    let labels: Vec<usize> = segments.iter().map(|s| s.label.index()).collect();
    let cm = ConfusionMatrix::from_predictions(&preds, &labels, net.cfg.num_classes)?;
    Ok(MetricsReport::from_confusion(cm, &["N", "A", "O"]))
}

/// Segment-level and record-level metrics. A record's prediction is the
/// argmax of the mean softmax over its segments, lowest class index on ties.
pub fn evaluate_records(
    net: &mut Network<f32>,
    segments: &[Segment],
    index: &RecordIndex,
) -> Result<(MetricsReport, MetricsReport)> {
    let segment_report = evaluate(net, segments)?;
    let probs = predict_segments(net, segments);
    let mut preds = Vec::new();
    let mut labels = Vec::new();
    for range in index.values() {
        if range.is_empty() {
            continue;
        }
        let rows = &probs[range.start..range.end];
        preds.push(argmax_lowest(&mean_probs(rows)));
        labels.push(segments[range.start].label.index());
    }
    if preds.is_empty() {
        return Err(Error::InvalidInput("no record produced any segment".into()));
    }
    let cm = ConfusionMatrix::from_predictions(&preds, &labels, net.cfg.num_classes)?;
    let record_report = MetricsReport::from_confusion(cm, &["N", "A", "O"]);
    Ok((segment_report, record_report))
}

/// Builds labeled segments for tests and the overfit check, bypassing
/// detection: peaks are taken from the synthesizer's ground truth.
pub fn segments_from_synth(
    class_counts: [usize; 3],
    seg_len: usize,
    seed: u64,
) -> Result<Vec<Segment>> {
    use crate::preprocess::{design_bandpass, preprocess_with_filter, FilterSpec};
    use crate::segment::{segment_record, SegmentConfig};
    use crate::synth::{synth_ecg, Rhythm, SynthSpec};

    let filt = design_bandpass(&FilterSpec::default())?;
    let seg_cfg = SegmentConfig {
        seg_len,
        ..SegmentConfig::default()
    };
    // pick a rate whose nominal beat-group span fills ~80% of the window
    let fs = 300.0;
    let capacity = (seg_len - seg_cfg.lead_in) as f64;
    let intervals = (seg_cfg.min_beats - 1) as f64;
    let hr_base = (60.0 * fs * intervals / (0.8 * capacity)).clamp(85.0, 200.0);
    let mut out: Vec<Segment> = Vec::new();
    let rhythms = [Rhythm::Regular, Rhythm::Irregular, Rhythm::Noisy];
    for (class_idx, &rhythm) in rhythms.iter().enumerate() {
        let want = class_counts[class_idx];
        let mut rec_no = 0;
        while out.iter().filter(|s| s.label.index() == class_idx).count() < want {
            let spec = SynthSpec {
                fs,
                duration_s: 20.0,
                mean_hr: (hr_base + 10.0 * (rec_no % 4) as f64).min(215.0),
                rhythm,
                snr_db: if rhythm == Rhythm::Noisy { 5.0 } else { 25.0 },
                seed: seed ^ ((class_idx as u64) << 32) ^ rec_no,
                jitter_frac: 0.02,
            };
            let id = format!("synth_{class_idx}_{rec_no}");
            let (rec, peaks) = synth_ecg(&spec, id)?;
            let pre = preprocess_with_filter(&rec, &filt, 9000)?;
            let ann = crate::qrs::BeatAnnotations {
                rr: crate::qrs::rr_intervals(&peaks, 300.0)?,
                peaks,
            };
            let mut segs = segment_record(&pre, &ann, &seg_cfg)?;
            let have = out.iter().filter(|s| s.label.index() == class_idx).count();
            segs.truncate(want - have);
            out.extend(segs);
            rec_no += 1;
            if rec_no > 200 {
                return Err(Error::InvalidInput("synthetic segment budget exhausted".into()));
            }
        }
    }
    Ok(out)
}
