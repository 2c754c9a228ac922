//! Command-line pipeline: synth, preprocess, detect, segment, train,
//! evaluate. Every run writes a manifest with content hashes of its inputs
//! and outputs; identical configurations and seeds reproduce identical
//! bytes.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::{Args, Parser, Subcommand};

use ecgkit::config::{resolve, ConfigFile, PipelineConfig};
use ecgkit::error::Error;
use ecgkit::manifest::RunManifest;
use ecgkit::metrics::MetricsReport;
use ecgkit::model::{Network, Scheme};
use ecgkit::preprocess::{design_bandpass, preprocess_with_filter, FilterSpec};
use ecgkit::qrs::{detect_r_peaks, DualSlopeParams};
use ecgkit::record::{
    load_record, load_reference, save_record_f32, split_dataset, Dataset, NoiseHandling, Record,
};
use ecgkit::segment::{class_counts, segment_dataset, write_pack, SegmentConfig};
use ecgkit::synth::{synth_ecg, Rhythm, SynthSpec};
use ecgkit::train::{evaluate_records, train};

#[derive(Parser)]
#[command(name = "ecgkit", about = "ECG rhythm classification pipeline", version)]
struct Cli {
    /// Flat key=value config file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every stochastic stage of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for per-record stages.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic dataset with ground-truth peaks.
    Synth(SynthArgs),
    /// Standardize, band-pass, and truncate raw records.
    Preprocess(PreprocessArgs),
    /// Locate R-peaks and R-R intervals per record.
    Detect(DetectArgs),
    /// Cut labeled records into fixed-length segments.
    Segment(SegmentArgs),
    /// Train a classifier scheme end to end.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Number of records.
    #[arg(long)]
    n: Option<usize>,
    /// Record duration in seconds.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    fs: Option<f64>,
    /// Heart-rate range "lo,hi" in bpm for the regular (N) class.
    #[arg(long)]
    hr_regular: Option<String>,
    /// Heart-rate range for the irregular (A) class.
    #[arg(long)]
    hr_irregular: Option<String>,
    /// Heart-rate range for the noisy (O) class.
    #[arg(long)]
    hr_noisy: Option<String>,
    /// SNR range in dB for the clean classes.
    #[arg(long)]
    snr_clean: Option<String>,
    /// SNR range in dB for the noisy class.
    #[arg(long)]
    snr_noisy: Option<String>,
}

#[derive(Args)]
struct PreprocessArgs {
    /// Directory of input records (.csv or .f32).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    low: Option<f64>,
    #[arg(long)]
    high: Option<f64>,
    #[arg(long)]
    taps: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    fs: Option<f64>,
}

#[derive(Args)]
struct DetectArgs {
    /// Directory of input records.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    refractory: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    theta_fraction: Option<f64>,
    #[arg(long)]
    history: Option<usize>,
    #[arg(long)]
    fs: Option<f64>,
    /// Detect on the records as stored instead of standardizing and
    /// band-passing first.
    #[arg(long)]
    no_preprocess: bool,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    data: PathBuf,
    /// Label file (defaults to REFERENCE.csv inside the data directory).
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    seg_len: Option<usize>,
    #[arg(long)]
    min_beats: Option<usize>,
    #[arg(long)]
    lead_in: Option<usize>,
    #[arg(long)]
    fs: Option<f64>,
    /// Map the ~ label to O instead of dropping those records.
    #[arg(long)]
    keep_noisy_label: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    reference: Option<PathBuf>,
    /// baseline, concat, or cascade.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    hidden: Option<usize>,
    /// CNN channels "c1,c2,c3,c4".
    #[arg(long)]
    channels: Option<String>,
    #[arg(long)]
    cnn_dropout: Option<f64>,
    #[arg(long)]
    lstm_dropout: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    split_fraction: Option<f64>,
    #[arg(long)]
    fs: Option<f64>,
    #[arg(long)]
    keep_noisy_label: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Checkpoint to evaluate.
    #[arg(long)]
    checkpoint: PathBuf,
    /// JSON sidecar written by train (defaults to model.json next to the
    /// checkpoint).
    #[arg(long)]
    model_config: Option<PathBuf>,
    /// Which side of the split to evaluate: val, train, or all.
    #[arg(long, default_value = "val")]
    split: String,
    #[arg(long)]
    keep_noisy_label: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::ShapeMismatch(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let seed = resolve(cli.seed, &file, "seed", 0)?;
    let jobs = resolve(cli.jobs, &file, "jobs", 1)?.max(1);
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;

    match cli.command {
        Command::Synth(args) => cmd_synth(args, &file, seed, &out),
        Command::Preprocess(args) => cmd_preprocess(args, &file, jobs, &out),
        Command::Detect(args) => cmd_detect(args, &file, jobs, &out),
        Command::Segment(args) => cmd_segment(args, &file, &out),
        Command::Train(args) => cmd_train(args, &file, seed, &out),
        Command::Evaluate(args) => cmd_evaluate(args, seed, &out),
    }
}

// ---------------------------------------------------------------------------
// shared helpers

/// Order-preserving parallel map over independent per-record work.
fn par_map<T, R, F>(jobs: usize, items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    if jobs <= 1 || items.len() <= 1 {
        return items.into_iter().map(f).collect();
    }
    let n = items.len();
    let work: Vec<std::sync::Mutex<Option<T>>> =
        items.into_iter().map(|t| std::sync::Mutex::new(Some(t))).collect();
    let results: Vec<std::sync::Mutex<Option<R>>> = (0..n).map(|_| std::sync::Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(n) {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                if idx >= n {
                    break;
                }
                let item = work[idx].lock().unwrap().take().expect("each slot taken once");
                *results[idx].lock().unwrap() = Some(f(item));
            });
        }
    });
    results
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("worker filled every slot"))
        .collect()
}

fn parse_range(raw: &str, what: &str) -> Result<(f64, f64), Error> {
    let (lo, hi) = raw
        .split_once(',')
        .ok_or_else(|| Error::InvalidConfig(format!("{what}: expected \"lo,hi\", got {raw:?}")))?;
    let lo: f64 = lo
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{what}: bad number {lo:?}")))?;
    let hi: f64 = hi
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{what}: bad number {hi:?}")))?;
    if lo > hi {
        return Err(Error::InvalidConfig(format!("{what}: {lo} > {hi}")));
    }
    Ok((lo, hi))
}

fn parse_channels(raw: &str) -> Result<[usize; 4], Error> {
    let parts: Vec<usize> = raw
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| Error::InvalidConfig(format!("channels: expected four integers, got {raw:?}")))?;
    if parts.len() != 4 {
        return Err(Error::InvalidConfig(format!(
            "channels: expected four values, got {}",
            parts.len()
        )));
    }
    Ok([parts[0], parts[1], parts[2], parts[3]])
}

/// Records named by the reference file, loaded from `<id>.f32` or `<id>.csv`.
fn load_dataset(
    data: &Path,
    reference: &Path,
    fs: f64,
    noise: NoiseHandling,
) -> Result<Dataset, Error> {
    let mut labels = load_reference(reference, noise)?;
    labels.sort_by(|a, b| a.0.cmp(&b.0));
    let mut records = Vec::with_capacity(labels.len());
    for (id, label) in labels {
        let f32_path = data.join(format!("{id}.f32"));
        let csv_path = data.join(format!("{id}.csv"));
        let path = if f32_path.exists() {
            f32_path
        } else if csv_path.exists() {
            csv_path
        } else {
            return Err(Error::InvalidInput(format!(
                "record {id} listed in {} has no {id}.f32 or {id}.csv in {}",
                reference.display(),
                data.display()
            )));
        };
        let mut rec = load_record(&path, fs, &id)?;
        rec.label = Some(label);
        records.push(rec);
    }
    Dataset::new(records)
}

/// All record files in a directory, sorted by id, labels unknown.
fn scan_records(data: &Path, fs: f64) -> Result<Vec<Record>, Error> {
    let mut paths: Vec<(String, PathBuf)> = Vec::new();
    let entries = std::fs::read_dir(data).map_err(|e| Error::io(data, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(data, e))?;
        let path = entry.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if ext != "f32" && ext != "csv" {
            continue;
        }
        let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string();
        if id.is_empty() || id.ends_with(".peaks") || id.ends_with(".detected") || id == "REFERENCE" {
            continue;
        }
        paths.push((id, path));
    }
    paths.sort();
    paths.dedup_by(|a, b| a.0 == b.0);
    if paths.is_empty() {
        return Err(Error::InvalidInput(format!("no record files in {}", data.display())));
    }
    paths
        .into_iter()
        .map(|(id, path)| load_record(&path, fs, &id))
        .collect()
}

fn reference_path(data: &Path, flag: &Option<PathBuf>) -> PathBuf {
    flag.clone().unwrap_or_else(|| data.join("REFERENCE.csv"))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Error> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidInput(format!("json serialization: {e}")))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// synth

fn cmd_synth(args: SynthArgs, file: &ConfigFile, seed: u64, out: &Path) -> Result<(), Error> {
    use rand::Rng;
    use rand::SeedableRng;

    let n = resolve(args.n, file, "n", 300)?;
    let duration = resolve(args.duration, file, "duration", 16.0)?;
    let fs = resolve(args.fs, file, "fs", 300.0)?;
    let hr_regular = parse_range(&args.hr_regular.unwrap_or_else(|| "85,105".into()), "hr-regular")?;
    let hr_irregular =
        parse_range(&args.hr_irregular.unwrap_or_else(|| "115,145".into()), "hr-irregular")?;
    let hr_noisy = parse_range(&args.hr_noisy.unwrap_or_else(|| "85,105".into()), "hr-noisy")?;
    let snr_clean = parse_range(&args.snr_clean.unwrap_or_else(|| "20,30".into()), "snr-clean")?;
    let snr_noisy = parse_range(&args.snr_noisy.unwrap_or_else(|| "3,6".into()), "snr-noisy")?;

    let mut manifest = RunManifest::new(
        "synth",
        serde_json::json!({
            "n": n, "duration": duration, "fs": fs, "seed": seed,
            "hr_regular": hr_regular, "hr_irregular": hr_irregular, "hr_noisy": hr_noisy,
            "snr_clean": snr_clean, "snr_noisy": snr_noisy,
        }),
    );

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut reference = String::new();
    for i in 0..n {
        let rhythm = match i % 3 {
            0 => Rhythm::Regular,
            1 => Rhythm::Irregular,
            _ => Rhythm::Noisy,
        };
        let (hr_lo, hr_hi) = match rhythm {
            Rhythm::Regular => hr_regular,
            Rhythm::Irregular => hr_irregular,
            Rhythm::Noisy => hr_noisy,
        };
        let (snr_lo, snr_hi) = if rhythm == Rhythm::Noisy { snr_noisy } else { snr_clean };
        let spec = SynthSpec {
            fs,
            duration_s: duration,
            mean_hr: rng.gen_range(hr_lo..=hr_hi),
            rhythm,
            snr_db: rng.gen_range(snr_lo..=snr_hi),
            seed: rng.gen(),
            jitter_frac: 0.02,
        };
        let id = format!("rec_{i:05}");
        let (rec, peaks) = synth_ecg(&spec, &id)?;

        let rec_path = out.join(format!("{id}.f32"));
        save_record_f32(&rec_path, &rec.samples)?;
        manifest.add_output(&rec_path)?;

        let peaks_path = out.join(format!("{id}.peaks.csv"));
        let mut text = String::from("index,time_s\n");
        for p in &peaks {
            text.push_str(&format!("{},{}\n", p, *p as f64 / fs));
        }
        std::fs::write(&peaks_path, text).map_err(|e| Error::io(&peaks_path, e))?;
        manifest.add_output(&peaks_path)?;

        reference.push_str(&format!("{id},{}\n", rhythm.class_label().to_char()));
    }
    let ref_path = out.join("REFERENCE.csv");
    std::fs::write(&ref_path, reference).map_err(|e| Error::io(&ref_path, e))?;
    manifest.add_output(&ref_path)?;
    manifest.write(&out.join("manifest.json"))?;
    println!("synth: wrote {n} records to {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// preprocess

fn cmd_preprocess(args: PreprocessArgs, file: &ConfigFile, jobs: usize, out: &Path) -> Result<(), Error> {
    let spec = FilterSpec {
        low_cut_hz: resolve(args.low, file, "low", 3.0)?,
        high_cut_hz: resolve(args.high, file, "high", 45.0)?,
        fs: resolve(args.fs, file, "fs", 300.0)?,
        num_taps: resolve(args.taps, file, "taps", 601)?,
    };
    let max_len = resolve(args.max_len, file, "max-len", 9000)?;
    let filt = design_bandpass(&spec)?;

    let records = scan_records(&args.data, spec.fs)?;
    let mut manifest = RunManifest::new(
        "preprocess",
        serde_json::json!({
            "filter": spec,
            "max_len": max_len,
            "data": args.data.display().to_string(),
        }),
    );

    let results: Vec<Result<(String, Vec<f64>), Error>> = par_map(jobs, records, |rec| {
        let pre = preprocess_with_filter(&rec, &filt, max_len)?;
        Ok((rec.id.clone(), pre.samples))
    });
    let mut count = 0;
    for result in results {
        let (id, samples) = result?;
        let path = out.join(format!("{id}.f32"));
        save_record_f32(&path, &samples)?;
        manifest.add_output(&path)?;
        count += 1;
    }
    manifest.write(&out.join("manifest.json"))?;
    println!("preprocess: wrote {count} records to {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// detect

fn cmd_detect(args: DetectArgs, file: &ConfigFile, jobs: usize, out: &Path) -> Result<(), Error> {
    let fs = resolve(args.fs, file, "fs", 300.0)?;
    let params = DualSlopeParams {
        k_min: resolve(args.k_min, file, "k-min", 8)?,
        k_max: resolve(args.k_max, file, "k-max", 19)?,
        refractory_s: resolve(args.refractory, file, "refractory", 0.2)?,
        theta_init: resolve(args.theta, file, "theta", 0.02)?,
        theta_fraction: resolve(args.theta_fraction, file, "theta-fraction", 0.7)?,
        history: resolve(args.history, file, "history", 8)?,
    };
    params.validate()?;
    let preprocess = !args.no_preprocess;
    let filt = design_bandpass(&FilterSpec { fs, ..FilterSpec::default() })?;

    let records = scan_records(&args.data, fs)?;
    let mut manifest = RunManifest::new(
        "detect",
        serde_json::json!({"detector": params, "fs": fs, "preprocess": preprocess}),
    );

    let results: Vec<Result<(String, Vec<usize>, Vec<f64>), Error>> = par_map(jobs, records, |rec| {
        let samples = if preprocess {
            preprocess_with_filter(&rec, &filt, usize::MAX)?.samples
        } else {
            rec.samples
        };
        let ann = detect_r_peaks(&samples, fs, &params)?;
        Ok((rec.id, ann.peaks, ann.rr))
    });

    let mut count = 0;
    for result in results {
        let (id, peaks, rr) = result?;
        let path = out.join(format!("{id}.detected.csv"));
        let mut text = String::from("index,time_s,rr_to_prev_s\n");
        for (i, p) in peaks.iter().enumerate() {
            let rr_text = if i == 0 { String::new() } else { rr[i - 1].to_string() };
            text.push_str(&format!("{},{},{}\n", p, *p as f64 / fs, rr_text));
        }
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        manifest.add_output(&path)?;
        count += 1;
    }
    manifest.write(&out.join("manifest.json"))?;
    println!("detect: wrote {count} annotation files to {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// segment

fn cmd_segment(args: SegmentArgs, file: &ConfigFile, out: &Path) -> Result<(), Error> {
    let fs = resolve(args.fs, file, "fs", 300.0)?;
    let seg_cfg = SegmentConfig {
        seg_len: resolve(args.seg_len, file, "seg-len", 1000)?,
        min_beats: resolve(args.min_beats, file, "min-beats", 5)?,
        lead_in: resolve(args.lead_in, file, "lead-in", 100)?,
    };
    seg_cfg.validate()?;
    let reference = reference_path(&args.data, &args.reference);
    let noise = if args.keep_noisy_label { NoiseHandling::MapToOther } else { NoiseHandling::Drop };

    let ds = load_dataset(&args.data, &reference, fs, noise)?;
    let filter = FilterSpec { fs, ..FilterSpec::default() };
    let (segments, index) =
        segment_dataset(&ds, &filter, &DualSlopeParams::default(), &seg_cfg, 9000)?;

    let mut manifest = RunManifest::new(
        "segment",
        serde_json::json!({"segmenter": seg_cfg, "fs": fs, "records": ds.len()}),
    );
    manifest.add_input(&reference)?;

    let pack_path = out.join("segments.pack");
    write_pack(&pack_path, seg_cfg.seg_len, &segments)?;
    manifest.add_output(&pack_path)?;

    let counts = class_counts(&segments);
    let summary = serde_json::json!({
        "records": ds.len(),
        "segments": segments.len(),
        "class_counts": counts
            .iter()
            .map(|(k, v)| (k.to_char().to_string(), *v))
            .collect::<std::collections::BTreeMap<String, usize>>(),
        "records_with_segments": index.values().filter(|r| !r.is_empty()).count(),
    });
    let summary_path = out.join("segments_summary.json");
    write_json(&summary_path, &summary)?;
    manifest.add_output(&summary_path)?;
    manifest.write(&out.join("manifest.json"))?;
    println!(
        "segment: {} segments from {} records -> {}",
        segments.len(),
        ds.len(),
        pack_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train

fn build_pipeline_config(args: &TrainArgs, file: &ConfigFile, seed: u64) -> Result<PipelineConfig, Error> {
    let scheme: Scheme = match &args.scheme {
        Some(s) => s.parse()?,
        None => match file.get::<String>("scheme")? {
            Some(s) => s.parse()?,
            None => Scheme::Cascade,
        },
    };
    let mut cfg = PipelineConfig::default_for(scheme);
    cfg.fs = resolve(args.fs, file, "fs", 300.0)?;
    cfg.filter.fs = cfg.fs;
    cfg.model.lstm_hidden = resolve(args.hidden, file, "hidden", 100)?;
    if let Some(raw) = args.channels.clone().or(file.get::<String>("channels")?) {
        cfg.model.cnn.channels = parse_channels(&raw)?;
    }
    cfg.model.cnn.dropout = resolve(args.cnn_dropout, file, "cnn-dropout", 0.2)?;
    cfg.model.lstm_dropout = resolve(args.lstm_dropout, file, "lstm-dropout", 0.2)?;
    cfg.train.epochs = resolve(args.epochs, file, "epochs", 50)?;
    cfg.train.batch_size = resolve(args.batch_size, file, "batch-size", 64)?;
    cfg.train.lr = resolve(args.lr, file, "lr", 0.001)?;
    cfg.train.focal_gamma = resolve(args.gamma, file, "gamma", 2.0)?;
    cfg.train.split_fraction = resolve(args.split_fraction, file, "split-fraction", 0.7)?;
    cfg.train.seed = seed;
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(args: TrainArgs, file: &ConfigFile, seed: u64, out: &Path) -> Result<(), Error> {
    let cfg = build_pipeline_config(&args, file, seed)?;
    let reference = reference_path(&args.data, &args.reference);
    let noise = if args.keep_noisy_label { NoiseHandling::MapToOther } else { NoiseHandling::Drop };

    let ds = load_dataset(&args.data, &reference, cfg.fs, noise)?;
    // record-level split before segmentation so no record leaks across sides
    let (train_ds, val_ds) = split_dataset(&ds, cfg.train.split_fraction, seed)?;
    let (train_segs, _) =
        segment_dataset(&train_ds, &cfg.filter, &cfg.detector, &cfg.segmenter, cfg.max_len)?;
    let (val_segs, val_index) =
        segment_dataset(&val_ds, &cfg.filter, &cfg.detector, &cfg.segmenter, cfg.max_len)?;
    if train_segs.is_empty() {
        return Err(Error::InvalidInput("no training segments were produced".into()));
    }

    let mut net = Network::<f32>::build(&cfg.model, seed)?;
    let outcome = train(&mut net, &train_segs, &val_segs, &cfg.train)?;

    let mut manifest = RunManifest::new(
        "train",
        serde_json::to_value(cfg).map_err(|e| Error::InvalidInput(e.to_string()))?,
    );
    manifest.add_input(&reference)?;

    let history_path = out.join("history.csv");
    std::fs::write(&history_path, outcome.history.to_csv()).map_err(|e| Error::io(&history_path, e))?;
    manifest.add_output(&history_path)?;

    let final_path = out.join("final.ckpt");
    net.save_checkpoint(&final_path)?;
    manifest.add_output(&final_path)?;

    let mut best_net = Network::<f32>::build(&cfg.model, seed)?;
    best_net.restore(outcome.best_state.clone())?;
    let best_path = out.join("best.ckpt");
    best_net.save_checkpoint(&best_path)?;
    manifest.add_output(&best_path)?;

    let sidecar_path = out.join("model.json");
    cfg.save(&sidecar_path)?;
    manifest.add_output(&sidecar_path)?;

    if !val_segs.is_empty() {
        let (seg_report, rec_report) = evaluate_records(&mut best_net, &val_segs, &val_index)?;
        let metrics_path = out.join("metrics.json");
        write_json(
            &metrics_path,
            &serde_json::json!({
                "segment_level": seg_report,
                "record_level": rec_report,
                "best_epoch": outcome.best_epoch,
            }),
        )?;
        manifest.add_output(&metrics_path)?;
        let confusion_path = out.join("confusion.json");
        write_json(
            &confusion_path,
            &serde_json::json!({
                "segment_level": seg_report.confusion,
                "record_level": rec_report.confusion,
            }),
        )?;
        manifest.add_output(&confusion_path)?;
        println!(
            "train[{}]: {} train / {} val segments, best epoch {} val wF1 {:.4}, record wF1 {:.4}",
            cfg.model.scheme,
            train_segs.len(),
            val_segs.len(),
            outcome.best_epoch,
            outcome.best_val_f1,
            rec_report.weighted_f1
        );
    } else {
        println!(
            "train[{}]: {} train segments, no validation side",
            cfg.model.scheme,
            train_segs.len()
        );
    }
    manifest.write(&out.join("manifest.json"))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate

fn cmd_evaluate(args: EvaluateArgs, seed: u64, out: &Path) -> Result<(), Error> {
    let sidecar_path = args.model_config.clone().unwrap_or_else(|| {
        args.checkpoint
            .parent()
            .unwrap_or(Path::new("."))
            .join("model.json")
    });
    let cfg = PipelineConfig::load(&sidecar_path)?;
    let reference = reference_path(&args.data, &args.reference);
    let noise = if args.keep_noisy_label { NoiseHandling::MapToOther } else { NoiseHandling::Drop };

    let ds = load_dataset(&args.data, &reference, cfg.fs, noise)?;
    // default to the sidecar's seed so the training split is reproduced
    let split_seed = if seed == 0 { cfg.train.seed } else { seed };
    let eval_ds = match args.split.as_str() {
        "all" => ds,
        "train" => split_dataset(&ds, cfg.train.split_fraction, split_seed)?.0,
        "val" => split_dataset(&ds, cfg.train.split_fraction, split_seed)?.1,
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown split {other:?} (expected val, train, or all)"
            )))
        }
    };
    let (segments, index) =
        segment_dataset(&eval_ds, &cfg.filter, &cfg.detector, &cfg.segmenter, cfg.max_len)?;
    if segments.is_empty() {
        return Err(Error::InvalidInput("evaluation set has no segments".into()));
    }

    let mut net = Network::<f32>::build(&cfg.model, cfg.train.seed)?;
    net.load_checkpoint(&args.checkpoint)?;
    let (seg_report, rec_report) = evaluate_records(&mut net, &segments, &index)?;

    let mut manifest = RunManifest::new(
        "evaluate",
        serde_json::to_value(cfg).map_err(|e| Error::InvalidInput(e.to_string()))?,
    );
    manifest.add_input(&args.checkpoint)?;
    manifest.add_input(&sidecar_path)?;

    let metrics_path = out.join("metrics.json");
    write_json(
        &metrics_path,
        &serde_json::json!({"segment_level": seg_report, "record_level": rec_report}),
    )?;
    manifest.add_output(&metrics_path)?;
    let confusion_path = out.join("confusion.json");
    write_json(
        &confusion_path,
        &serde_json::json!({
            "segment_level": seg_report.confusion,
            "record_level": rec_report.confusion,
        }),
    )?;
    manifest.add_output(&confusion_path)?;
    manifest.write(&out.join("manifest.json"))?;

    print_report("segment", &seg_report);
    print_report("record", &rec_report);
    Ok(())
}

fn print_report(level: &str, report: &MetricsReport) {
    println!(
        "{level}-level: weighted F1 {:.4}, accuracy {:.4} over {} examples",
        report.weighted_f1,
        report.accuracy,
        report.confusion.total()
    );
    for class in &report.per_class {
        println!(
            "  {}: support {} precision {:.4} recall {:.4} f1 {:.4} specificity {:.4}",
            class.class, class.support, class.precision, class.recall, class.f1, class.specificity
        );
    }
}
