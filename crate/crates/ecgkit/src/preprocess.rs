//! Standardization, linear-phase band-pass filtering, and truncation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::Record;

/// Band-pass design parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FilterSpec {
    pub low_cut_hz: f64,
    pub high_cut_hz: f64,
    pub fs: f64,
    pub num_taps: usize,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec {
            low_cut_hz: 3.0,
            high_cut_hz: 45.0,
            fs: 300.0,
            num_taps: 601,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.low_cut_hz > 0.0 && self.low_cut_hz < self.high_cut_hz && self.high_cut_hz < self.fs / 2.0) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < low ({}) < high ({}) < fs/2 ({})",
                self.low_cut_hz,
                self.high_cut_hz,
                self.fs / 2.0
            )));
        }
        if self.num_taps < 3 || self.num_taps % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "num_taps must be odd and >= 3, got {}",
                self.num_taps
            )));
        }
        Ok(())
    }
}

/// Linear-phase FIR filter; taps are exactly symmetric about the center.
#[derive(Debug, Clone)]
pub struct FirFilter {
    pub taps: Vec<f64>,
    pub group_delay: usize,
}

impl FirFilter {
    /// DTFT magnitude at `freq_hz`.
    pub fn magnitude_at(&self, freq_hz: f64, fs: f64) -> f64 {
        let omega = 2.0 * std::f64::consts::PI * freq_hz / fs;
        let (mut re, mut im) = (0.0, 0.0);
        for (n, &t) in self.taps.iter().enumerate() {
            let phase = omega * n as f64;
            re += t * phase.cos();
            im -= t * phase.sin();
        }
        (re * re + im * im).sqrt()
    }
}

/// Hamming-windowed sinc low-pass normalized to unit DC gain. Computed on
/// one half and mirrored so the symmetry is exact in floating point.
fn windowed_sinc_lowpass(cutoff_hz: f64, fs: f64, num_taps: usize) -> Vec<f64> {
    let center = (num_taps - 1) / 2;
    let omega_c = 2.0 * std::f64::consts::PI * cutoff_hz / fs;
    let mut taps = vec![0.0; num_taps];
    for n in 0..=center {
        let x = n as f64 - center as f64;
        let sinc = if n == center {
            omega_c / std::f64::consts::PI
        } else {
            (omega_c * x).sin() / (std::f64::consts::PI * x)
        };
        let window = 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (num_taps - 1) as f64).cos();
        let v = sinc * window;
        taps[n] = v;
        taps[num_taps - 1 - n] = v;
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Windowed-sinc band-pass: the difference of two unit-gain low-pass kernels,
/// which pins the DC response to exactly zero.
pub fn design_bandpass(spec: &FilterSpec) -> Result<FirFilter> {
    spec.validate()?;
    let high = windowed_sinc_lowpass(spec.high_cut_hz, spec.fs, spec.num_taps);
    let low = windowed_sinc_lowpass(spec.low_cut_hz, spec.fs, spec.num_taps);
    let taps: Vec<f64> = high.iter().zip(&low).map(|(h, l)| h - l).collect();
    Ok(FirFilter {
        group_delay: (spec.num_taps - 1) / 2,
        taps,
    })
}

/// Shifts to zero mean and scales to unit population standard deviation.
/// Signals with (near-)zero variance map to the zero signal.
pub fn standardize(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("cannot standardize an empty signal".into()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("standardize input".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-12 {
        return Ok(vec![0.0; samples.len()]);
    }
    Ok(samples.iter().map(|v| (v - mean) / std).collect())
}

/// Convolves with reflection padding and compensates the group delay, so the
/// output has the input's length and stays time-aligned with it.
pub fn apply_filter(samples: &[f64], filt: &FirFilter) -> Result<Vec<f64>> {
    let n = samples.len();
    let taps = &filt.taps;
    if n <= taps.len() {
        return Err(Error::InvalidInput(format!(
            "signal length {n} must exceed filter length {}",
            taps.len()
        )));
    }
    let pad = filt.group_delay;
    // mirror about the edge samples without repeating them
    let mut extended = Vec::with_capacity(n + 2 * pad);
    for j in (1..=pad).rev() {
        extended.push(samples[j]);
    }
    extended.extend_from_slice(samples);
    for j in 1..=pad {
        extended.push(samples[n - 1 - j]);
    }
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        let window = &extended[i..i + taps.len()];
        let mut acc = 0.0;
        for (t, x) in taps.iter().zip(window) {
            acc += t * x;
        }
        *o = acc;
    }
    Ok(out)
}

/// Keeps the first `max_len` samples.
pub fn truncate(samples: &[f64], max_len: usize) -> Vec<f64> {
    samples[..samples.len().min(max_len)].to_vec()
}

/// Full per-record pipeline: standardize, band-pass, truncate.
pub fn preprocess_record(rec: &Record, spec: &FilterSpec, max_len: usize) -> Result<Record> {
    let filt = design_bandpass(spec)?;
    preprocess_with_filter(rec, &filt, max_len)
}

/// Same pipeline with a pre-designed filter, for batch use.
pub fn preprocess_with_filter(rec: &Record, filt: &FirFilter, max_len: usize) -> Result<Record> {
    let standardized = standardize(&rec.samples)?;
    let filtered = apply_filter(&standardized, filt)?;
    let truncated = truncate(&filtered, max_len);
    Record::new(rec.id.clone(), truncated, rec.fs, rec.label)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_filter() -> FirFilter {
        design_bandpass(&FilterSpec::default()).unwrap()
    }

    #[test]
    fn standardize_constant_signal_is_zero() {
        assert_eq!(standardize(&[5.0, 5.0, 5.0]).unwrap(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn standardize_already_standard_is_identity() {
        let out = standardize(&[-1.0, 1.0]).unwrap();
        assert!((out[0] + 1.0).abs() < 1e-15);
        assert!((out[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn standardize_output_mean_zero_and_idempotent() {
        let x: Vec<f64> = (0..500).map(|i| (i as f64 * 0.1).sin() * 3.0 + 7.0).collect();
        let once = standardize(&x).unwrap();
        let mean: f64 = once.iter().sum::<f64>() / once.len() as f64;
        assert!(mean.abs() < 1e-9);
        let twice = standardize(&once).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn standardize_rejects_empty() {
        assert!(standardize(&[]).is_err());
    }

    #[test]
    fn taps_are_exactly_symmetric() {
        let f = default_filter();
        let n = f.taps.len();
        for k in 0..n {
            assert_eq!(f.taps[k].to_bits(), f.taps[n - 1 - k].to_bits(), "tap {k}");
        }
    }

    #[test]
    fn dc_is_rejected_and_passband_is_flat() {
        let f = default_filter();
        assert!(f.magnitude_at(0.0, 300.0) <= 0.01);
        let h10 = f.magnitude_at(10.0, 300.0);
        assert!((0.95..=1.05).contains(&h10), "H(10 Hz) = {h10}");
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = FilterSpec::default();
        s.num_taps = 600;
        assert!(design_bandpass(&s).is_err());
        let mut s = FilterSpec::default();
        s.low_cut_hz = 50.0;
        assert!(design_bandpass(&s).is_err());
        let mut s = FilterSpec::default();
        s.high_cut_hz = 200.0;
        assert!(design_bandpass(&s).is_err());
    }

    #[test]
    fn impulse_response_reproduces_taps_at_the_impulse() {
        let f = default_filter();
        let n = 2000;
        let pos = 1000;
        let mut x = vec![0.0; n];
        x[pos] = 1.0;
        let y = apply_filter(&x, &f).unwrap();
        assert_eq!(y.len(), n);
        let gd = f.group_delay;
        for (k, &tap) in f.taps.iter().enumerate() {
            // symmetric taps: the reversed copy centered at the impulse equals the taps
            assert!((y[pos + k - gd] - tap).abs() < 1e-15);
        }
    }

    #[test]
    fn stopband_sinusoid_is_attenuated() {
        let f = default_filter();
        let n = 3000;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 60.0 * i as f64 / 300.0).sin())
            .collect();
        let y = apply_filter(&x, &f).unwrap();
        // measure away from the edges
        let peak = y[500..2500].iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!(peak <= 0.05, "60 Hz leak {peak}");
    }

    #[test]
    fn passband_sinusoid_keeps_amplitude_and_phase() {
        let f = default_filter();
        let n = 3000;
        let freq = 10.0;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / 300.0).sin())
            .collect();
        let y = apply_filter(&x, &f).unwrap();
        let peak = y[500..2500].iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!((peak - 1.0).abs() <= 0.05, "10 Hz amplitude {peak}");
        // delay compensation: peaks of input and output line up
        let in_peak = (500..2500).max_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap()).unwrap();
        let lo = in_peak - 20;
        let out_peak = (lo..in_peak + 20).max_by(|&a, &b| y[a].partial_cmp(&y[b]).unwrap()).unwrap();
        assert!(
            (out_peak as i64 - in_peak as i64).abs() <= 1,
            "peak moved from {in_peak} to {out_peak}"
        );
    }

    #[test]
    fn filtering_is_linear() {
        let f = default_filter();
        let n = 1500;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.05).sin()).collect();
        let y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.31).cos()).collect();
        let (a, b) = (2.5, -1.25);
        let combo: Vec<f64> = x.iter().zip(&y).map(|(xv, yv)| a * xv + b * yv).collect();
        let fx = apply_filter(&x, &f).unwrap();
        let fy = apply_filter(&y, &f).unwrap();
        let fc = apply_filter(&combo, &f).unwrap();
        for i in 0..n {
            let expect = a * fx[i] + b * fy[i];
            let scale = expect.abs().max(1.0);
            assert!((fc[i] - expect).abs() / scale < 1e-9);
        }
    }

    #[test]
    fn rejects_signal_shorter_than_filter() {
        let f = default_filter();
        assert!(apply_filter(&vec![0.0; 601], &f).is_err());
    }

    #[test]
    fn truncate_cases() {
        let long: Vec<f64> = (0..18000).map(|i| i as f64).collect();
        let t = truncate(&long, 9000);
        assert_eq!(t.len(), 9000);
        assert_eq!(t[..], long[..9000]);
        assert_eq!(truncate(&long[..9000], 9000).len(), 9000);
        assert_eq!(truncate(&long[..100], 9000).len(), 100);
    }

    #[test]
    fn preprocess_record_composition() {
        let samples: Vec<f64> = (0..12000)
            .map(|i| {
                let t = i as f64 / 300.0;
                (2.0 * std::f64::consts::PI * 8.0 * t).sin() * 2.0 + 5.0
            })
            .collect();
        let rec = Record::new("r", samples, 300.0, None).unwrap();
        let out = preprocess_record(&rec, &FilterSpec::default(), 9000).unwrap();
        assert!(out.samples.len() <= 9000);

        let constant = Record::new("c", vec![3.3; 2000], 300.0, None).unwrap();
        let out = preprocess_record(&constant, &FilterSpec::default(), 9000).unwrap();
        assert!(out.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mains_contamination_drops_by_20_db() {
        // 8 Hz target plus strong 60 Hz contamination
        let n = 6000;
        let fs = 300.0;
        let sig: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                (2.0 * std::f64::consts::PI * 8.0 * t).sin()
                    + 1.5 * (2.0 * std::f64::consts::PI * 60.0 * t).sin()
            })
            .collect();
        let rec = Record::new("m", sig.clone(), fs, None).unwrap();
        let out = preprocess_record(&rec, &FilterSpec::default(), n).unwrap();

        // periodogram power above 50 Hz, before vs after (Goertzel-style probe)
        let band_power = |x: &[f64]| -> f64 {
            let mut p = 0.0;
            let mut f = 50.0;
            while f < 150.0 {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, &v) in x.iter().enumerate() {
                    let ph = 2.0 * std::f64::consts::PI * f * i as f64 / fs;
                    re += v * ph.cos();
                    im += v * ph.sin();
                }
                p += re * re + im * im;
                f += 1.0;
            }
            p
        };
        let before = band_power(&standardize(&sig).unwrap());
        let after = band_power(&out.samples);
        assert!(after < before * 0.01, "high band reduced only {before} -> {after}");
    }
}
