//! Dual-slope R-peak detection and R-R interval computation.
//!
//! The score at sample i compares the steepest rising and falling slopes on
//! both sides over lags k_min..=k_max. An adaptive threshold tracks a
//! fraction of the running mean score of recently accepted beats, a
//! refractory window keeps only the strongest nearby candidate, and each
//! peak is refined to the local amplitude extremum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DualSlopeParams {
    /// Shortest slope lag, in samples (about 27 ms at 300 Hz).
    pub k_min: usize,
    /// Longest slope lag, in samples (about 63 ms at 300 Hz).
    pub k_max: usize,
    /// Minimum beat spacing in seconds.
    pub refractory_s: f64,
    /// Bootstrap score threshold, in standardized units per sample.
    pub theta_init: f64,
    /// Fraction of the running mean accepted score used as the threshold.
    pub theta_fraction: f64,
    /// Number of recent beats that feed the running mean.
    pub history: usize,
}

impl Default for DualSlopeParams {
    fn default() -> Self {
        DualSlopeParams {
            k_min: 8,
            k_max: 19,
            refractory_s: 0.2,
            theta_init: 0.02,
            theta_fraction: 0.7,
            history: 8,
        }
    }
}

impl DualSlopeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_min > 0 && self.k_min < self.k_max) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < k_min ({}) < k_max ({})",
                self.k_min, self.k_max
            )));
        }
        if self.refractory_s <= 0.0 {
            return Err(Error::InvalidConfig("refractory must be positive".into()));
        }
        if !(self.theta_fraction > 0.0 && self.theta_fraction < 1.0) {
            return Err(Error::InvalidConfig("theta_fraction must be in (0, 1)".into()));
        }
        if self.history == 0 {
            return Err(Error::InvalidConfig("history must be at least 1".into()));
        }
        Ok(())
    }
}

/// Detected beats: strictly increasing peak indices and the R-R intervals
/// between them.
#[derive(Debug, Clone, Default)]
pub struct BeatAnnotations {
    pub peaks: Vec<usize>,
    pub rr: Vec<f64>,
}

/// Dual-slope score at index i. Both polarities count, so the score is
/// invariant under sign flips of the signal.
pub fn dual_slope_score(samples: &[f64], i: usize, p: &DualSlopeParams) -> Result<f64> {
    if i < p.k_max || i + p.k_max >= samples.len() {
        return Err(Error::InvalidInput(format!(
            "index {i} outside valid range [{}, {})",
            p.k_max,
            samples.len().saturating_sub(p.k_max)
        )));
    }
    Ok(score_at(samples, i, p))
}

#[inline]
fn score_at(samples: &[f64], i: usize, p: &DualSlopeParams) -> f64 {
    let center = samples[i];
    let mut max_l = f64::NEG_INFINITY;
    let mut min_l = f64::INFINITY;
    let mut max_r = f64::NEG_INFINITY;
    let mut min_r = f64::INFINITY;
    for k in p.k_min..=p.k_max {
        let kf = k as f64;
        let sl = (center - samples[i - k]) / kf;
        let sr = (center - samples[i + k]) / kf;
        max_l = max_l.max(sl);
        min_l = min_l.min(sl);
        max_r = max_r.max(sr);
        min_r = min_r.min(sr);
    }
    (max_l + max_r).max(-min_l - min_r)
}

/// Locates R-peaks. See the module docs for the acceptance/refinement rules.
pub fn detect_r_peaks(samples: &[f64], fs: f64, p: &DualSlopeParams) -> Result<BeatAnnotations> {
    p.validate()?;
    if samples.len() <= 2 * p.k_max {
        return Err(Error::InvalidInput(format!(
            "signal length {} too short for k_max {}",
            samples.len(),
            p.k_max
        )));
    }

    let n = samples.len();
    let mut score = vec![0.0; n];
    for (i, s) in score.iter_mut().enumerate().take(n - p.k_max).skip(p.k_max) {
        *s = score_at(samples, i, p);
    }

    let refractory = (p.refractory_s * fs).round() as usize;
    let mut accepted: Vec<(usize, f64)> = Vec::new();
    let mut history: Vec<f64> = Vec::new();
    let mut theta = p.theta_init;

    let update_theta = |history: &[f64], p: &DualSlopeParams| -> f64 {
        let tail = &history[history.len().saturating_sub(p.history)..];
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        (p.theta_fraction * mean).max(p.theta_init / 4.0)
    };

    for i in 1..n - 1 {
        let s = score[i];
        if !(s > score[i - 1] && s >= score[i + 1]) || s <= theta {
            continue;
        }
        if let Some(&(last_i, last_s)) = accepted.last() {
            if i - last_i <= refractory {
                // within the refractory window keep only the highest score
                if s > last_s {
                    *accepted.last_mut().unwrap() = (i, s);
                    *history.last_mut().unwrap() = s;
                    theta = update_theta(&history, p);
                }
                continue;
            }
        }
        accepted.push((i, s));
        history.push(s);
        theta = update_theta(&history, p);
    }

    // refine each peak to the amplitude extremum within +/-50 ms
    let w = (0.05 * fs).round() as usize;
    let mut peaks: Vec<usize> = accepted
        .iter()
        .map(|&(i, _)| {
            let lo = i.saturating_sub(w);
            let hi = (i + w + 1).min(n);
            (lo..hi)
                .max_by(|&a, &b| samples[a].abs().partial_cmp(&samples[b].abs()).unwrap())
                .unwrap()
        })
        .collect();
    peaks.sort_unstable();
    peaks.dedup();

    // refinement can draw two peaks closer; re-apply the refractory rule
    let mut final_peaks: Vec<usize> = Vec::with_capacity(peaks.len());
    for peak in peaks {
        match final_peaks.last() {
            Some(&last) if peak - last <= refractory => {
                if samples[peak].abs() > samples[last].abs() {
                    *final_peaks.last_mut().unwrap() = peak;
                }
            }
            _ => final_peaks.push(peak),
        }
    }

    let rr = rr_intervals(&final_peaks, fs)?;
    Ok(BeatAnnotations { peaks: final_peaks, rr })
}

/// Consecutive peak spacings in seconds; empty with fewer than two peaks.
pub fn rr_intervals(peaks: &[usize], fs: f64) -> Result<Vec<f64>> {
    if peaks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("peaks must be strictly increasing".into()));
    }
    Ok(peaks.windows(2).map(|w| (w[1] - w[0]) as f64 / fs).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_signal_scores_zero_and_detects_nothing() {
        let x = vec![1.0; 400];
        let p = DualSlopeParams::default();
        for i in [p.k_max, 100, 200, 399 - p.k_max] {
            assert_eq!(dual_slope_score(&x, i, &p).unwrap(), 0.0);
        }
        let ann = detect_r_peaks(&x, 300.0, &p).unwrap();
        assert!(ann.peaks.is_empty());
        assert!(ann.rr.is_empty());
    }

    /// Brute-force oracle: enumerate the slope definitions directly.
    fn brute_force_score(x: &[f64], i: usize, p: &DualSlopeParams) -> f64 {
        let slopes_l: Vec<f64> = (p.k_min..=p.k_max).map(|k| (x[i] - x[i - k]) / k as f64).collect();
        let slopes_r: Vec<f64> = (p.k_min..=p.k_max).map(|k| (x[i] - x[i + k]) / k as f64).collect();
        let max = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
        (max(&slopes_l) + max(&slopes_r)).max(-min(&slopes_l) - min(&slopes_r))
    }

    #[test]
    fn triangular_peak_score_matches_brute_force_closed_form() {
        let p = DualSlopeParams::default();
        let (h, w) = (2.0, p.k_max); // half-width w >= k_max
        let apex = 60;
        let mut x = vec![0.0; 120];
        for (i, v) in x.iter_mut().enumerate() {
            let d = (i as i64 - apex as i64).unsigned_abs() as usize;
            if d <= w {
                *v = h * (1.0 - d as f64 / w as f64);
            }
        }
        let got = dual_slope_score(&x, apex, &p).unwrap();
        // every slope of the triangle is h/w, so the score is 2h/w
        let closed_form = 2.0 * h / w as f64;
        assert!((got - closed_form).abs() < 1e-12, "{got} vs {closed_form}");
        assert!((got - brute_force_score(&x, apex, &p)).abs() < 1e-15);
    }

    #[test]
    fn score_is_polarity_symmetric() {
        let p = DualSlopeParams::default();
        let x: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin() * (i as f64 * 0.011).cos()).collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        for i in p.k_max..200 - p.k_max {
            let a = dual_slope_score(&x, i, &p).unwrap();
            let b = dual_slope_score(&neg, i, &p).unwrap();
            assert!((a - b).abs() < 1e-15, "index {i}");
        }
    }

    #[test]
    fn score_matches_brute_force_on_random_signal() {
        let p = DualSlopeParams::default();
        let x: Vec<f64> = (0..300).map(|i| ((i * i) as f64 * 0.01).sin()).collect();
        for i in (p.k_max..300 - p.k_max).step_by(7) {
            let got = dual_slope_score(&x, i, &p).unwrap();
            let oracle = brute_force_score(&x, i, &p);
            assert!((got - oracle).abs() < 1e-15);
        }
    }

    #[test]
    fn out_of_bounds_index_is_rejected() {
        let p = DualSlopeParams::default();
        let x = vec![0.0; 100];
        assert!(dual_slope_score(&x, p.k_max - 1, &p).is_err());
        assert!(dual_slope_score(&x, 100 - p.k_max, &p).is_err());
    }

    #[test]
    fn two_spikes_inside_refractory_give_one_peak() {
        let fs = 300.0;
        let mut x = vec![0.0f64; 900];
        // two sharp triangular spikes 40 ms apart (12 samples)
        for (apex, h) in [(400usize, 1.0), (412usize, 0.8)] {
            for d in 0..=6usize {
                let v = h * (1.0 - d as f64 / 6.0);
                x[apex - d] = x[apex - d].max(v);
                x[apex + d] = x[apex + d].max(v);
            }
        }
        let ann = detect_r_peaks(&x, fs, &DualSlopeParams::default()).unwrap();
        assert_eq!(ann.peaks.len(), 1, "peaks: {:?}", ann.peaks);
        assert!((ann.peaks[0] as i64 - 400).abs() <= 15);
    }

    #[test]
    fn too_short_signal_is_an_error() {
        let p = DualSlopeParams::default();
        assert!(detect_r_peaks(&vec![0.0; 2 * p.k_max], 300.0, &p).is_err());
    }

    #[test]
    fn rr_interval_arithmetic() {
        assert_eq!(rr_intervals(&[300, 600, 900], 300.0).unwrap(), vec![1.0, 1.0]);
        assert!(rr_intervals(&[42], 300.0).unwrap().is_empty());
        assert!(rr_intervals(&[600, 300], 300.0).is_err());
    }

    #[test]
    fn detected_peaks_respect_the_refractory_spacing() {
        use crate::synth::{synth_ecg, Rhythm, SynthSpec};
        let spec = SynthSpec {
            fs: 300.0,
            duration_s: 20.0,
            mean_hr: 110.0,
            rhythm: Rhythm::Irregular,
            snr_db: 18.0,
            seed: 5,
            jitter_frac: 0.02,
        };
        let (rec, _) = synth_ecg(&spec, "x").unwrap();
        let pre = crate::preprocess::preprocess_record(&rec, &crate::preprocess::FilterSpec::default(), 9000).unwrap();
        let p = DualSlopeParams::default();
        let ann = detect_r_peaks(&pre.samples, 300.0, &p).unwrap();
        assert!(ann.peaks.len() > 20);
        let min_gap = (p.refractory_s * 300.0) as usize;
        for w in ann.peaks.windows(2) {
            assert!(w[1] - w[0] > min_gap, "gap {} too small", w[1] - w[0]);
        }
    }
}
