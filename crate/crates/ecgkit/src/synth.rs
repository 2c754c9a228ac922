//! Deterministic synthetic ECG generator with exact ground-truth R-peak
//! positions. Used as the oracle for detector, segmenter, and training tests.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{ClassLabel, Record};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rhythm {
    /// Constant heart rate with small seeded jitter.
    Regular,
    /// Beat intervals drawn uniformly in [0.6, 1.4] x the mean interval.
    Irregular,
    /// Regular rhythm plus 0.3 Hz baseline wander; pair with a low SNR for a
    /// genuinely noisy class.
    Noisy,
}

impl Rhythm {
    pub fn class_label(self) -> ClassLabel {
        match self {
            Rhythm::Regular => ClassLabel::Normal,
            Rhythm::Irregular => ClassLabel::AFib,
            Rhythm::Noisy => ClassLabel::Other,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SynthSpec {
    pub fs: f64,
    pub duration_s: f64,
    pub mean_hr: f64,
    pub rhythm: Rhythm,
    pub snr_db: f64,
    pub seed: u64,
    /// Relative jitter of regular beat intervals (0.02 = +/-2%).
    pub jitter_frac: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            fs: 300.0,
            duration_s: 30.0,
            mean_hr: 75.0,
            rhythm: Rhythm::Regular,
            snr_db: 20.0,
            seed: 0,
            jitter_frac: 0.02,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.fs <= 0.0 {
            return Err(Error::InvalidConfig("fs must be positive".into()));
        }
        if self.duration_s < 0.0 {
            return Err(Error::InvalidConfig("duration must be non-negative".into()));
        }
        if self.duration_s > 0.0 && !(30.0..=220.0).contains(&self.mean_hr) {
            return Err(Error::InvalidConfig(format!(
                "mean_hr must be in [30, 220], got {}",
                self.mean_hr
            )));
        }
        if !(0.0..0.5).contains(&self.jitter_frac) {
            return Err(Error::InvalidConfig("jitter_frac must be in [0, 0.5)".into()));
        }
        Ok(())
    }
}

// beat morphology relative to the R amplitude of 1.0
const R_WIDTH_S: f64 = 0.012;
const S_AMP: f64 = -0.30;
const S_OFFSET_S: f64 = 0.035;
const S_WIDTH_S: f64 = 0.014;
const P_AMP: f64 = 0.15;
const P_OFFSET_S: f64 = -0.16;
const P_WIDTH_S: f64 = 0.03;
const T_AMP: f64 = 0.25;
const T_OFFSET_S: f64 = 0.25;
const T_WIDTH_S: f64 = 0.06;
const WANDER_AMP: f64 = 2.0;
const WANDER_HZ: f64 = 0.3;

/// Adds a Gaussian bump, evaluated only inside +/-4 sigma.
fn add_bump(sig: &mut [f64], fs: f64, center_s: f64, width_s: f64, amp: f64) {
    let lo = ((center_s - 4.0 * width_s) * fs).floor().max(0.0) as usize;
    let hi = (((center_s + 4.0 * width_s) * fs).ceil() as usize).min(sig.len().saturating_sub(1));
    for (i, v) in sig.iter_mut().enumerate().take(hi + 1).skip(lo) {
        let d = (i as f64 / fs - center_s) / width_s;
        *v += amp * (-0.5 * d * d).exp();
    }
}

/// Generates one recording plus the exact R-apex sample indices.
pub fn synth_ecg(spec: &SynthSpec, id: impl Into<String>) -> Result<(Record, Vec<usize>)> {
    spec.validate()?;
    let n = (spec.duration_s * spec.fs).round() as usize;
    if n == 0 {
        let rec = Record::new(id, Vec::new(), spec.fs, Some(spec.rhythm.class_label()))?;
        return Ok((rec, Vec::new()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let base = 60.0 / spec.mean_hr;

    // beat times by the rhythm law
    let mut beat_times = Vec::new();
    let mut t = 0.5 * base;
    while t < spec.duration_s - 0.3 * base {
        beat_times.push(t);
        let interval = match spec.rhythm {
            Rhythm::Regular | Rhythm::Noisy => {
                base * (1.0 + spec.jitter_frac * (2.0 * rng.gen::<f64>() - 1.0))
            }
            Rhythm::Irregular => base * (0.6 + 0.8 * rng.gen::<f64>()),
        };
        t += interval;
    }

    let mut sig = vec![0.0; n];
    let mut peaks = Vec::with_capacity(beat_times.len());
    for &bt in &beat_times {
        // mild per-beat amplitude variation keeps the detector honest
        let amp = 1.0 + 0.05 * (2.0 * rng.gen::<f64>() - 1.0);
        add_bump(&mut sig, spec.fs, bt, R_WIDTH_S, amp);
        add_bump(&mut sig, spec.fs, bt + S_OFFSET_S, S_WIDTH_S, S_AMP * amp);
        add_bump(&mut sig, spec.fs, bt + P_OFFSET_S, P_WIDTH_S, P_AMP);
        add_bump(&mut sig, spec.fs, bt + T_OFFSET_S, T_WIDTH_S, T_AMP);
        let idx = (bt * spec.fs).round() as usize;
        if idx < n {
            peaks.push(idx);
        }
    }

    let signal_power = sig.iter().map(|v| v * v).sum::<f64>() / n as f64;

    if spec.rhythm == Rhythm::Noisy {
        let phase = rng.gen::<f64>() * std::f64::consts::TAU;
        for (i, v) in sig.iter_mut().enumerate() {
            let ts = i as f64 / spec.fs;
            *v += WANDER_AMP * (std::f64::consts::TAU * WANDER_HZ * ts + phase).sin();
        }
    }

    // white Gaussian noise scaled to the requested SNR against the clean beats
    let noise_sd = (signal_power / 10f64.powf(spec.snr_db / 10.0)).sqrt();
    for v in sig.iter_mut() {
        // Box-Muller
        let u1: f64 = rng.gen::<f64>().max(1e-12);
        let u2: f64 = rng.gen();
        let gauss = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        *v += noise_sd * gauss;
    }

    let rec = Record::new(id, sig, spec.fs, Some(spec.rhythm.class_label()))?;
    Ok((rec, peaks))
}
