//! Fixed-length multi-beat segmentation and the binary segment pack format.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{design_bandpass, preprocess_with_filter, FilterSpec};
use crate::qrs::{detect_r_peaks, BeatAnnotations, DualSlopeParams};
use crate::record::{ClassLabel, Dataset, Record};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SegmentConfig {
    /// Segment length in samples.
    pub seg_len: usize,
    /// Beats per segment window; min_beats peaks span min_beats - 1 R-R
    /// intervals.
    pub min_beats: usize,
    /// Samples kept before the first peak of a beat group.
    pub lead_in: usize,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            seg_len: 1000,
            min_beats: 5,
            lead_in: 100,
        }
    }
}

impl SegmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seg_len == 0 {
            return Err(Error::InvalidConfig("seg_len must be positive".into()));
        }
        if self.min_beats < 2 {
            return Err(Error::InvalidConfig("min_beats must be at least 2".into()));
        }
        if self.lead_in >= self.seg_len {
            return Err(Error::InvalidConfig("lead_in must be smaller than seg_len".into()));
        }
        Ok(())
    }
}

/// One fixed-length training example carrying its source record's label and
/// the peak positions that fall inside the window.
#[derive(Debug, Clone)]
pub struct Segment {
    pub record_id: String,
    pub samples: Vec<f32>,
    pub peak_offsets: Vec<usize>,
    pub label: ClassLabel,
}

/// Cuts one preprocessed record into segments.
///
/// Peak groups of `min_beats` consecutive beats are visited with a stride of
/// `min_beats - 1`, so adjacent groups share exactly one boundary beat. A
/// group is emitted when its span fits in `seg_len - lead_in` samples; the
/// window starts `lead_in` samples before the group's first peak, clamped to
/// the record bounds.
pub fn segment_record(rec: &Record, ann: &BeatAnnotations, cfg: &SegmentConfig) -> Result<Vec<Segment>> {
    cfg.validate()?;
    let label = rec
        .label
        .ok_or_else(|| Error::InvalidInput(format!("record {} has no label", rec.id)))?;
    let n = rec.samples.len();
    let mut out = Vec::new();
    if n < cfg.seg_len {
        return Ok(out);
    }
    let peaks = &ann.peaks;
    let stride = cfg.min_beats - 1;
    let mut g = 0;
    while g + cfg.min_beats <= peaks.len() {
        let group = &peaks[g..g + cfg.min_beats];
        let span = group[cfg.min_beats - 1] - group[0];
        if span <= cfg.seg_len - cfg.lead_in {
            let start = group[0]
                .saturating_sub(cfg.lead_in)
                .min(n - cfg.seg_len);
            let end = start + cfg.seg_len;
            let samples: Vec<f32> = rec.samples[start..end].iter().map(|&v| v as f32).collect();
            let peak_offsets: Vec<usize> = peaks
                .iter()
                .filter(|&&p| p >= start && p < end)
                .map(|&p| p - start)
                .collect();
            debug_assert!(peak_offsets.len() >= cfg.min_beats);
            debug_assert!(peak_offsets.windows(2).all(|w| w[0] < w[1]));
            out.push(Segment {
                record_id: rec.id.clone(),
                samples,
                peak_offsets,
                label,
            });
        }
        g += stride;
    }
    Ok(out)
}

/// Maps each record id to its contiguous range in the segment list.
pub type RecordIndex = BTreeMap<String, Range<usize>>;

/// Preprocesses, detects, and segments every record of a dataset.
pub fn segment_dataset(
    ds: &Dataset,
    filter: &FilterSpec,
    detector: &DualSlopeParams,
    cfg: &SegmentConfig,
    max_len: usize,
) -> Result<(Vec<Segment>, RecordIndex)> {
    let filt = design_bandpass(filter)?;
    let mut segments = Vec::new();
    let mut index = RecordIndex::new();
    for rec in &ds.records {
        if rec.label.is_none() {
            return Err(Error::InvalidInput(format!("record {} has no label", rec.id)));
        }
        let start = segments.len();
        let pre = preprocess_with_filter(rec, &filt, max_len)?;
        if pre.samples.len() > 2 * detector.k_max {
            let ann = detect_r_peaks(&pre.samples, pre.fs, detector)?;
            segments.extend(segment_record(&pre, &ann, cfg)?);
        }
        index.insert(rec.id.clone(), start..segments.len());
    }
    Ok((segments, index))
}

/// Segment counts per class, for imbalance inspection.
pub fn class_counts(segments: &[Segment]) -> BTreeMap<ClassLabel, usize> {
    let mut counts = BTreeMap::new();
    for s in segments {
        *counts.entry(s.label).or_insert(0) += 1;
    }
    counts
}

/// Writes segments as a single binary pack: u32 seg_len, u32 count, then per
/// segment u32 id length + id bytes, one label byte, f32 samples, u32 peak
/// count + u32 offsets. All integers and floats little-endian.
pub fn write_pack(path: &Path, seg_len: usize, segments: &[Segment]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    w.write_all(&(seg_len as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(&(segments.len() as u32).to_le_bytes()).map_err(io_err)?;
    for s in segments {
        if s.samples.len() != seg_len {
            return Err(Error::InvalidInput(format!(
                "segment from {} has {} samples, pack expects {seg_len}",
                s.record_id,
                s.samples.len()
            )));
        }
        let id = s.record_id.as_bytes();
        w.write_all(&(id.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(id).map_err(io_err)?;
        w.write_all(&[s.label.index() as u8]).map_err(io_err)?;
        for &v in &s.samples {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
        w.write_all(&(s.peak_offsets.len() as u32).to_le_bytes()).map_err(io_err)?;
        for &p in &s.peak_offsets {
            w.write_all(&(p as u32).to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

pub fn read_pack(path: &Path) -> Result<(usize, Vec<Segment>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(Error::InvalidInput(format!("{}: truncated pack", path.display())));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    let read_u32 = |pos: &mut usize| -> Result<u32> {
        let s = take(pos, 4)?;
        Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
    };

    let seg_len = read_u32(&mut pos)? as usize;
    let count = read_u32(&mut pos)? as usize;
    let mut segments = Vec::with_capacity(count);
    for _ in 0..count {
        let id_len = read_u32(&mut pos)? as usize;
        let id = String::from_utf8(take(&mut pos, id_len)?.to_vec())
            .map_err(|_| Error::InvalidInput("segment id is not UTF-8".into()))?;
        let label_byte = take(&mut pos, 1)?[0];
        let label = ClassLabel::from_index(label_byte as usize)
            .ok_or_else(|| Error::InvalidInput(format!("bad label byte {label_byte}")))?;
        let mut samples = Vec::with_capacity(seg_len);
        for _ in 0..seg_len {
            let s = take(&mut pos, 4)?;
            samples.push(f32::from_le_bytes([s[0], s[1], s[2], s[3]]));
        }
        let n_peaks = read_u32(&mut pos)? as usize;
        let mut peak_offsets = Vec::with_capacity(n_peaks);
        for _ in 0..n_peaks {
            peak_offsets.push(read_u32(&mut pos)? as usize);
        }
        segments.push(Segment {
            record_id: id,
            samples,
            peak_offsets,
            label,
        });
    }
    Ok((seg_len, segments))
}
