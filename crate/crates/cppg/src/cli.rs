//! The `cppg` command line.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use cppg_core::eval::clinical_report;
use cppg_core::nn::{count_parameters, ModelConfig, ModelSet, MODEL_NAMES};
use cppg_core::pipeline::{gate_pairs, preprocess, GateRecord};
use cppg_core::quality::GateThresholds;
use cppg_core::signal::split_subjects;
use cppg_core::synth::{default_cohort, synth_acquisitions, CohortConfig, AUGMENT_SD};
use cppg_core::train::{restoration_inputs, restore_chunk, run_epoch, ChannelMode, LossWeights, PreparedSplit, TrainOptions, TrainState};
use cppg_core::{Chunk, ChunkPair, Dataset, Source, Split};

use crate::checkpoint;
use crate::dataset::{read_dataset, read_eval_pairs, write_dataset, write_pair};
use crate::error::{Error, Result};
use crate::recordings::{read_acquisition, read_manifest, write_acquisition, write_manifest, Manifest, SubjectDto};
use crate::report;

#[derive(Debug, Parser)]
#[command(name = "cppg", version, about = "Chest PPG restoration with a cycle-consistent GAN")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic finger/chest cohort: raw recordings, manifest and an ungated dataset.
    Synth(SynthArgs),
    /// Filter and segment the raw recordings of a cohort into a dataset.
    Preprocess(PreprocessArgs),
    /// Run the quality gate; writes the gate report, labels and the retained dataset.
    Label(LabelArgs),
    /// Train one architecture; writes checkpoints and the training history.
    Train(TrainArgs),
    /// Train and evaluate several architectures; writes a comparison table.
    Ablate(AblateArgs),
    /// Restore chest chunks with a trained generator.
    Restore(RestoreArgs),
    /// Score restored chest chunks against the finger reference.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 12)]
    pub subjects: usize,
    #[arg(long, default_value_t = 3)]
    pub recordings: usize,
    /// Length of each recording in seconds.
    #[arg(long, default_value_t = 120.0)]
    pub duration: f64,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Cohort directory holding `manifest.json` and `recordings/`.
    #[arg(long)]
    pub data: PathBuf,
    /// Dataset root to write (defaults to the cohort directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON map of chunk id to three chest labels (keep|leave), overriding the heuristic.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct TrainingFlags {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// 3 for red/infrared/green, 1 for green only.
    #[arg(long, default_value_t = 3, value_parser = parse_channels)]
    pub channels: usize,
    /// Loss weights `adv,cycle,id`.
    #[arg(long, default_value = "1,10,5", value_parser = parse_weights)]
    pub weights: LossWeights,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 4)]
    pub batch: usize,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    /// Generator initial filters, overriding the architecture's value.
    #[arg(long)]
    pub g_init: Option<usize>,
    /// Training pairs drawn per epoch (all by default).
    #[arg(long)]
    pub chunks_per_epoch: Option<usize>,
    /// Noise SD added to a second copy of every training chest chunk (0 disables).
    #[arg(long, default_value_t = AUGMENT_SD)]
    pub augment_sd: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Architecture name, m01 to m11.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(MODEL_NAMES))]
    pub config: String,
    /// Training-state checkpoint to resume from.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub flags: TrainingFlags,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Comma-separated architecture names.
    #[arg(long, default_value = "m01,m02,m03,m04,m05,m06,m07,m08,m09,m10,m11", value_delimiter = ',', value_parser = clap::builder::PossibleValuesParser::new(MODEL_NAMES))]
    pub config: Vec<String>,
    #[command(flatten)]
    pub flags: TrainingFlags,
}

#[derive(Debug, Args)]
pub struct RestoreArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset root (its test split is used) or a split directory.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Chunks written to `traces.csv` for overlay plots.
    #[arg(long, default_value_t = 3)]
    pub traces: usize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_channels(s: &str) -> std::result::Result<usize, String> {
    match s {
        "3" => Ok(3),
        "1" => Ok(1),
        _ => Err(format!("expected 3 or 1, got {s:?}")),
    }
}

fn parse_weights(s: &str) -> std::result::Result<LossWeights, String> {
    let v: Vec<f64> = s.split(',').map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}"))).collect::<std::result::Result<_, _>>()?;
    let [adv, cycle, id] = v[..] else {
        return Err(format!("expected three comma-separated weights, got {}", v.len()));
    };
    let w = LossWeights { adv, cycle, id };
    w.validate().map_err(|e| e.to_string())?;
    Ok(w)
}

/// Sizes the worker pool from `PPG_RESTORE_THREADS` (all cores when unset).
pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("PPG_RESTORE_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| Error::Usage(format!("PPG_RESTORE_THREADS must be a positive integer, got {v:?}")))?;
    // A second call in the same process (tests) finds the pool already built.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    match cli.command {
        Command::Synth(a) => synth(&a),
        Command::Preprocess(a) => preprocess_cmd(&a.data, a.out.as_deref().unwrap_or(&a.data)),
        Command::Label(a) => label(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Ablate(a) => ablate(&a),
        Command::Restore(a) => restore(&a),
        Command::Evaluate(a) => evaluate(&a),
    }
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn synth(a: &SynthArgs) -> Result<()> {
    if a.subjects < 4 {
        return Err(Error::Usage(format!("need at least 4 subjects for a train/validation/test split, got {}", a.subjects)));
    }
    if a.recordings == 0 || !(a.duration >= 5.0) {
        return Err(Error::Usage("need at least one recording of at least 5 s".into()));
    }
    let cfg = CohortConfig {
        n_subjects: a.subjects,
        recordings_per_subject: a.recordings,
        recording_s: a.duration,
        split_counts: CohortConfig::proportional_split(a.subjects),
        seed: a.seed,
    };
    create_dir(&a.out)?;
    let subjects = default_cohort(cfg.n_subjects, cfg.seed);
    let ids: Vec<String> = subjects.iter().map(|s| s.id.clone()).collect();
    let splits = split_subjects(&ids, cfg.split_counts)?;
    let mut dtos = Vec::new();
    for (i, (s, (_, split))) in subjects.iter().zip(&splits).enumerate() {
        let mut stems = Vec::new();
        for (k, acq) in synth_acquisitions(s, i, &cfg)?.iter().enumerate() {
            let stem = k.to_string();
            write_acquisition(&a.out, &stem, acq)?;
            stems.push(stem);
        }
        dtos.push(SubjectDto::new(s, *split, stems));
    }
    write_manifest(&a.out, &Manifest { cohort: (&cfg).into(), subjects: dtos })?;
    preprocess_cmd(&a.out, &a.out)
}

fn preprocess_cmd(data: &Path, out: &Path) -> Result<()> {
    let manifest = read_manifest(data)?;
    let mut ds = Dataset::default();
    for s in &manifest.subjects {
        let split = s.split()?;
        let mut next = 0u32;
        for stem in &s.recordings {
            let pairs = preprocess(&read_acquisition(data, &s.id, stem)?, next)?;
            next += pairs.len() as u32;
            ds.split_mut(split).extend(pairs);
        }
    }
    write_dataset(out, &ds)?;
    println!("preprocessed {} train, {} validation, {} test chunk pairs into {}", ds.train.len(), ds.validation.len(), ds.test.len(), out.display());
    Ok(())
}

fn label(a: &LabelArgs) -> Result<()> {
    let manual = match &a.labels {
        Some(p) => report::read_labels_json(p)?,
        None => Default::default(),
    };
    let ds = read_dataset(&a.data)?;
    let th = GateThresholds::default();
    let mut kept = Dataset::default();
    let mut records: Vec<GateRecord> = Vec::new();
    for split in Split::ALL {
        let (k, r) = gate_pairs(ds.split(split).to_vec(), |id| manual.get(id).copied(), &th);
        *kept.split_mut(split) = k;
        records.extend(r);
    }
    create_dir(&a.out)?;
    report::write_gate_report_csv(&a.out.join("gate_report.csv"), &records)?;
    report::write_labels_json(&a.out.join("labels.json"), &records)?;
    write_dataset(&a.out, &kept)?;
    println!("retained {} of {} chunk pairs", kept.len(), records.len());
    Ok(())
}

fn training_options(f: &TrainingFlags) -> Result<TrainOptions> {
    if f.batch == 0 {
        return Err(Error::Usage("--batch must be positive".into()));
    }
    if !(f.augment_sd >= 0.0 && f.augment_sd.is_finite()) {
        return Err(Error::Usage(format!("--augment-sd must be a non-negative number, got {}", f.augment_sd)));
    }
    Ok(TrainOptions {
        max_epochs: f.epochs,
        batch: f.batch,
        patience: f.patience,
        weights: f.weights,
        seed: f.seed,
        channels: ChannelMode::from_count(f.channels)?,
        chunks_per_epoch: f.chunks_per_epoch,
        ..Default::default()
    })
}

fn model_config(name: &str, f: &TrainingFlags) -> Result<ModelConfig> {
    let mut cfg = ModelConfig::by_name(name)?.with_channels(f.channels);
    if let Some(g) = f.g_init {
        cfg = cfg.with_g_init(g);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Trains one configuration into `out`; returns the final state.
fn train_into(cfg: &ModelConfig, f: &TrainingFlags, resume: Option<&Path>, ds: &Dataset, out: &Path) -> Result<TrainState> {
    let opts = training_options(f)?;
    let mut state = match resume {
        Some(p) => {
            let s = checkpoint::load_state(p)?;
            if s.models.config != *cfg {
                return Err(Error::Checkpoint { path: p.into(), msg: format!("checkpoint holds {} with {} channels, requested {}", s.models.config.name, s.models.config.channels, cfg.name) });
            }
            s
        }
        None => TrainState::new(cfg, f.seed)?,
    };
    let fs = ds.train.first().map_or(cppg_core::signal::CHUNK_FS, |p| p.chest.fs);
    let tr = PreparedSplit::augmented(&ds.train, opts.channels, f.augment_sd, f.seed)?;
    let va = PreparedSplit::new(&ds.validation, opts.channels)?;
    create_dir(out)?;
    while !state.finished(&opts) {
        let r = run_epoch(&mut state, &tr, &va, fs, &opts)?;
        println!("{} epoch {} validation RMSE {:.4}", cfg.name, r.epoch, r.mean_val_rmse());
        checkpoint::save_state(&out.join("state.ckpt"), &state)?;
        report::write_history_csv(&out.join("history.csv"), &state.history)?;
    }
    checkpoint::save_models(&out.join("last.ckpt"), &state.models)?;
    checkpoint::save_models(&out.join("best.ckpt"), state.final_models())?;
    Ok(state)
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let cfg = model_config(&a.config, &a.flags)?;
    let ds = read_dataset(&a.flags.data)?;
    let state = train_into(&cfg, &a.flags, a.checkpoint.as_deref(), &ds, &a.flags.out)?;
    println!("trained {} for {} epochs; best epoch {:?}", cfg.name, state.epoch, state.best_epoch);
    Ok(())
}

fn ablate(a: &AblateArgs) -> Result<()> {
    let ds = read_dataset(&a.flags.data)?;
    let configs = a.config.iter().map(|n| model_config(n, &a.flags)).collect::<Result<Vec<_>>>()?;
    let names = report::channel_names(a.flags.channels);
    let mut header = vec!["config".to_string(), "parameters".into(), "generator_parameters".into(), "epochs".into(), "best_epoch".into()];
    for c in &names {
        for m in ["r", "r2", "rmse_t", "mae", "snr_db", "rmse_f"] {
            header.push(format!("{m}_{c}"));
        }
    }
    let mut rows = Vec::new();
    for cfg in &configs {
        let state = train_into(cfg, &a.flags, None, &ds, &a.flags.out.join(&cfg.name))?;
        let mode = ChannelMode::from_count(cfg.channels)?;
        let (rep, evals, failed) = clinical_report(&restoration_inputs(&state.final_models().g_xy, &ds.test, mode)?);
        report::write_report(&a.flags.out.join(&cfg.name).join("report"), &rep, &evals, &failed, ds.test.first().map_or(400.0, |p| p.chest.fs))?;
        let m: &ModelSet<f32> = state.final_models();
        let mut row = vec![cfg.name.clone(), count_parameters(m).to_string(), m.g_xy.num_params().to_string(), state.epoch.to_string(), state.best_epoch.map_or(String::new(), |e| e.to_string())];
        for s in &rep.restored {
            row.extend([s.r, s.r2, s.rmse_t, s.mae, s.snr_db, s.rmse_f].map(report::num));
        }
        rows.push(row);
    }
    let path = a.flags.out.join("ablation.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
    w.write_record(&header).map_err(|e| Error::csv(&path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| Error::csv(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

fn load_eval_inputs(ckpt: &Path, data: &Path) -> Result<(ModelSet<f32>, ChannelMode, Vec<ChunkPair>)> {
    let models = checkpoint::load_models(ckpt)?;
    let mode = ChannelMode::from_count(models.config.channels)?;
    let pairs = read_eval_pairs(data)?;
    if pairs.is_empty() {
        return Err(Error::Usage(format!("no chunk pairs found in {}", data.display())));
    }
    Ok((models, mode, pairs))
}

fn restore(a: &RestoreArgs) -> Result<()> {
    let (models, mode, pairs) = load_eval_inputs(&a.checkpoint, &a.data)?;
    create_dir(&a.out)?;
    let mut traces = Vec::new();
    for (i, p) in pairs.iter().enumerate() {
        let restored = restore_chunk(&models.g_xy, &p.chest, mode)?;
        // Green-only models leave red and infrared as the standardized measurement.
        let rows = match mode {
            ChannelMode::All => restored.clone(),
            ChannelMode::GreenOnly => {
                let mut r = ChannelMode::All.rows(&p.chest)?;
                r[2] = restored[0].clone();
                r
            }
        };
        let chest = Chunk::new(rows, p.chest.fs, Source::Restored, p.subject_id(), p.chunk_index())?.quantized();
        let mut out = p.clone();
        out.chest = chest;
        write_pair(&a.out, &out)?;
        if i < a.traces {
            let measured = mode.rows(&p.chest)?;
            let finger = mode.rows(&p.finger)?;
            let names = report::channel_names(mode.count());
            for (c, name) in names.iter().enumerate() {
                for t in 0..measured[c].len() {
                    traces.push(vec![p.chest.id(), name.to_string(), report::num(t as f64 / p.chest.fs), report::num(measured[c][t]), report::num(restored[c][t]), report::num(finger[c][t])]);
                }
            }
        }
    }
    let path = a.out.join("traces.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
    w.write_record(["chunk_id", "channel", "t_s", "measured", "restored", "fppg"]).map_err(|e| Error::csv(&path, e))?;
    for r in traces {
        w.write_record(&r).map_err(|e| Error::csv(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    println!("restored {} chunks into {}", pairs.len(), a.out.display());
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let (models, mode, pairs) = load_eval_inputs(&a.checkpoint, &a.data)?;
    let (rep, evals, failed) = clinical_report(&restoration_inputs(&models.g_xy, &pairs, mode)?);
    report::write_report(&a.out, &rep, &evals, &failed, pairs[0].chest.fs)?;
    for (c, name) in report::channel_names(rep.n_channels).iter().enumerate() {
        println!("{name}: R {:.3} -> {:.3}, SNR {:.2} -> {:.2} dB", rep.measured[c].r, rep.restored[c].r, rep.measured[c].snr_db, rep.restored[c].snr_db);
    }
    Ok(())
}
