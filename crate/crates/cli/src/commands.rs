use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use eqrep_core::audio::{default_pitch_list, read_wav, synthesize_note, write_wav, AudioBuffer, NoteSpec};
use eqrep_core::dataset::{
    build_dataset_with, multi_band_settings, single_band_settings, split, BuildOptions, DatasetManifest, GainGrid,
};
use eqrep_core::eq::{eq_response, log_frequency_grid, standard_bands, BAND_NAMES};
use eqrep_core::eval::{
    config_digest, evaluate, reproduce, ReproduceOptions, DEFAULT_MULTI_BAND_LIMIT, REFERENCE_NOTE,
};
use eqrep_core::features::{FeatureExtractor, StftConfig, FEATURE_NAMES};
use eqrep_core::models::{
    mean_squared_error, train_forest_with, train_linear, train_mlp, FeatureConfig, ForestConfig, Model, ModelArtifact,
    ModelKind, TrainConfig, RIDGE_LAMBDA,
};
use eqrep_core::par::{configure_threads, Exec};

use crate::cli::{
    Command, DatasetArgs, DatasetMode, EvalArgs, ExtractArgs, GlobalArgs, PredictArgs, ReproduceArgs, ResponseArgs,
    Subset, SynthArgs, TrainArgs,
};

pub const CORPUS_INDEX: &str = "corpus.json";

#[derive(Debug, Serialize, Deserialize)]
struct CorpusIndex {
    sample_rate: u32,
    notes: Vec<CorpusEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CorpusEntry {
    file: String,
    note: NoteSpec,
}

struct Ctx {
    sample_rate: u32,
    stft: StftConfig,
    seed: u64,
    out: PathBuf,
    exec: Exec,
    verbose: u8,
}

impl Ctx {
    fn info(&self, msg: impl AsRef<str>) {
        if self.verbose > 0 {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }
}

pub fn run(global: GlobalArgs, command: Command) -> Result<()> {
    let exec = match global.jobs {
        Some(1) => Exec::Sequential,
        Some(n) => {
            configure_threads(n)?;
            Exec::default()
        }
        None => Exec::default(),
    };
    let ctx = Ctx {
        sample_rate: global.sample_rate,
        stft: StftConfig::new(global.frame_size, global.hop_size)?,
        seed: global.seed,
        out: global.out,
        exec,
        verbose: global.verbose,
    };
    match command {
        Command::Synth(a) => synth(&ctx, a),
        Command::Dataset(a) => dataset(&ctx, a),
        Command::Extract(a) => extract(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Predict(a) => predict(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Reproduce(a) => reproduce_cmd(&ctx, a),
        Command::Response(a) => response(&ctx, a),
    }
}

fn csv_sink(output: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>> {
    let sink: Box<dyn Write> = match output {
        Some(p) => Box::new(io::BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    Ok(csv::Writer::from_writer(sink))
}

fn synth(ctx: &Ctx, args: SynthArgs) -> Result<()> {
    let dir = args.dir.unwrap_or_else(|| ctx.out.join("corpus"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let pitches = args.pitches.map_or_else(default_pitch_list, |p| p.0);
    let mut notes = Vec::with_capacity(pitches.len());
    for label in &pitches {
        let spec = NoteSpec::with_partials(label, ctx.sample_rate, args.partials)?;
        let buffer = synthesize_note(&spec, ctx.sample_rate)?;
        let file = format!("{}.wav", spec.pitch_name);
        write_wav(&buffer, dir.join(&file))?;
        ctx.info(format!(
            "{file}: {:.2} Hz, {} partials",
            spec.fundamental_hz, spec.partial_count
        ));
        notes.push(CorpusEntry { file, note: spec });
    }
    let index = CorpusIndex {
        sample_rate: ctx.sample_rate,
        notes,
    };
    let mut text = serde_json::to_string_pretty(&index)?;
    text.push('\n');
    fs::write(dir.join(CORPUS_INDEX), text)?;
    println!("wrote {} notes to {}", index.notes.len(), dir.display());
    Ok(())
}

/// Notes listed in `corpus.json` in index order, otherwise every `.wav` in
/// the directory sorted by file name. Labels are file stems.
fn load_corpus(dir: &Path, sample_rate: u32) -> Result<Vec<(String, AudioBuffer)>> {
    let index_path = dir.join(CORPUS_INDEX);
    let files: Vec<PathBuf> = if index_path.exists() {
        let text = fs::read_to_string(&index_path)?;
        let index: CorpusIndex =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", index_path.display()))?;
        index.notes.iter().map(|n| dir.join(&n.file)).collect()
    } else {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .with_context(|| format!("reading corpus directory {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
            .collect();
        files.sort();
        files
    };
    if files.is_empty() {
        bail!("no WAV files in {}", dir.display());
    }
    files
        .iter()
        .map(|path| {
            let buffer = read_wav(path)?;
            if buffer.sample_rate() != sample_rate {
                return Err(eqrep_core::Error::SampleRateMismatch {
                    expected: sample_rate,
                    found: buffer.sample_rate(),
                }
                .into());
            }
            let label = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok((label, buffer))
        })
        .collect()
}

fn dataset(ctx: &Ctx, args: DatasetArgs) -> Result<()> {
    let corpus_dir = args.corpus.unwrap_or_else(|| ctx.out.join("corpus"));
    let corpus = load_corpus(&corpus_dir, ctx.sample_rate)?;
    let step = args.step.unwrap_or(match args.mode {
        DatasetMode::Single => 1,
        DatasetMode::Multi => 4,
    });
    let grid = GainGrid::with_step(step)?;
    let settings = match args.mode {
        DatasetMode::Single => single_band_settings(&grid),
        DatasetMode::Multi => multi_band_settings(&grid),
    };
    let total = corpus.len() * settings.len();
    let limit = match (args.full, args.limit, args.mode) {
        (true, _, _) => None,
        (false, Some(l), _) => Some(l),
        (false, None, DatasetMode::Multi) if total > DEFAULT_MULTI_BAND_LIMIT => Some(DEFAULT_MULTI_BAND_LIMIT),
        (false, None, _) => None,
    };
    let mode_name = match args.mode {
        DatasetMode::Single => "single",
        DatasetMode::Multi => "multi",
    };
    ctx.info(format!(
        "{} notes x {} settings, {} samples",
        corpus.len(),
        settings.len(),
        limit.unwrap_or(total)
    ));
    let opts = BuildOptions {
        limit,
        seed: ctx.seed,
        keep_audio: args.keep_audio,
        exec: ctx.exec,
    };
    let started = Instant::now();
    let manifest = build_dataset_with(&corpus, &settings, &standard_bands(), &ctx.stft, &opts)?;
    ctx.info(format!("built in {:.1} s", started.elapsed().as_secs_f64()));
    let path = match args.manifest {
        Some(p) => p,
        None => ctx.out_dir()?.join(format!("dataset_{mode_name}.json")),
    };
    manifest.save(&path)?;
    if args.csv {
        manifest.write_csv(path.with_extension("csv"))?;
    }
    println!("{} samples -> {}", manifest.len(), path.display());
    Ok(())
}

fn extract(ctx: &Ctx, args: ExtractArgs) -> Result<()> {
    let extractor = FeatureExtractor::new(ctx.stft, ctx.sample_rate)?;
    let rows = args
        .wavs
        .iter()
        .map(|p| {
            let buffer = read_wav(p)?;
            extractor
                .extract(&buffer)
                .with_context(|| format!("extracting {}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut w = csv_sink(args.output.as_deref())?;
    w.write_record(std::iter::once("file").chain(FEATURE_NAMES))?;
    for (p, f) in args.wavs.iter().zip(rows) {
        let mut rec = vec![p.display().to_string()];
        rec.extend(f.to_array().iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn train(ctx: &Ctx, args: TrainArgs) -> Result<()> {
    let manifest = DatasetManifest::load(&args.manifest)?;
    let (train_idx, test_idx) = split(&manifest, args.train_fraction, ctx.seed)?;
    let x = manifest.features(&train_idx);
    let y = manifest.targets(&train_idx);
    let kind = ModelKind::from(args.model);
    let started = Instant::now();
    let (model, config) = match kind {
        ModelKind::Linear => (
            Model::Linear(train_linear(&x, &y)?),
            json!({"ridge_lambda": RIDGE_LAMBDA}),
        ),
        ModelKind::Forest => {
            let mut cfg = ForestConfig {
                seed: ctx.seed,
                ..ForestConfig::default()
            };
            if let Some(t) = args.trees {
                cfg.tree_count = t;
            }
            if let Some(l) = args.leaf_size {
                cfg.leaf_size = l;
            }
            let model = train_forest_with(&x, &y, &cfg, ctx.exec)?;
            (Model::Forest(model), serde_json::to_value(&cfg)?)
        }
        ModelKind::Mlp => {
            let d = TrainConfig::default();
            let cfg = TrainConfig {
                learning_rate: args.learning_rate.unwrap_or(d.learning_rate),
                epochs: args.epochs.unwrap_or(d.epochs),
                batch_size: args.batch_size.unwrap_or(d.batch_size),
                hidden_dim: args.hidden_dim.unwrap_or(d.hidden_dim),
                seed: ctx.seed,
                optimizer: args.optimizer.map_or(d.optimizer, Into::into),
                validation_fraction: d.validation_fraction,
            };
            (Model::Mlp(train_mlp(&x, &y, &cfg)?), serde_json::to_value(&cfg)?)
        }
    };
    ctx.info(format!("trained {kind} in {:.1} s", started.elapsed().as_secs_f64()));

    let train_pred = model.predict_batch(&x, ctx.exec)?;
    let test_pred = model.predict_batch(&manifest.features(&test_idx), ctx.exec)?;
    let train_mse = mean_squared_error(&train_pred, &y);
    let test_mse = mean_squared_error(&test_pred, &manifest.targets(&test_idx));

    let train_config = json!({
        "model": kind,
        "config": config,
        "split": {"train_fraction": args.train_fraction, "seed": ctx.seed},
    });
    let feature_config = FeatureConfig {
        sample_rate: manifest.sample_rate,
        stft: manifest.stft,
    };
    let mut artifact = ModelArtifact::new(model, train_config, feature_config);
    artifact.metrics.insert("train_mse".into(), train_mse);
    artifact.metrics.insert("test_mse".into(), test_mse);
    artifact.metrics.insert("n_train".into(), train_idx.len() as f64);
    artifact.metrics.insert("n_test".into(), test_idx.len() as f64);
    let path = match args.artifact {
        Some(p) => p,
        None => ctx.out_dir()?.join(format!("model_{kind}.json")),
    };
    artifact.save(&path)?;
    println!(
        "{kind}: train_mse {train_mse:.6} test_mse {test_mse:.6} -> {}",
        path.display()
    );
    Ok(())
}

fn predict(ctx: &Ctx, args: PredictArgs) -> Result<()> {
    let artifact = ModelArtifact::load(&args.model)?;
    let fc = artifact.feature_config;
    let extractor = FeatureExtractor::new(fc.stft, fc.sample_rate)?;
    let predictions = args
        .wavs
        .iter()
        .map(|p| {
            let buffer = read_wav(p)?;
            let features = extractor
                .extract(&buffer)
                .with_context(|| format!("extracting {}", p.display()))?;
            ctx.info(format!("{}: done", p.display()));
            Ok(artifact.model.predict(&features)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut w = csv_sink(args.output.as_deref())?;
    w.write_record(std::iter::once("file").chain(BAND_NAMES))?;
    for (p, gains) in args.wavs.iter().zip(predictions) {
        let mut rec = vec![p.display().to_string()];
        rec.extend(gains.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn eval(ctx: &Ctx, args: EvalArgs) -> Result<()> {
    let artifact = ModelArtifact::load(&args.model)?;
    let manifest = DatasetManifest::load(&args.manifest)?;
    let fc = artifact.feature_config;
    if fc.sample_rate != manifest.sample_rate || fc.stft != manifest.stft {
        bail!(
            "manifest features were computed with a different sample rate or STFT configuration than the model expects"
        );
    }
    let indices = match args.subset {
        Subset::Test => split(&manifest, args.train_fraction, ctx.seed)?.1,
        Subset::All => manifest.all_indices(),
    };
    let digest = config_digest(&json!({
        "train_config": artifact.train_config,
        "subset": format!("{:?}", args.subset).to_lowercase(),
        "train_fraction": args.train_fraction,
        "seed": ctx.seed,
        "n_manifest": manifest.len(),
    }));
    let result = evaluate(
        &artifact.model,
        &manifest,
        &indices,
        &args.experiment_id,
        ctx.seed,
        &digest,
        ctx.exec,
    )?;
    let (json_path, csv_path) = result.write(ctx.out_dir()?)?;
    let r = &result.report;
    println!(
        "{} {}: mse {:.6} over {} samples",
        r.experiment_id, r.model_kind, r.overall_mse, r.n_samples
    );
    for (name, v) in BAND_NAMES.iter().zip(r.per_band_mse) {
        println!("  {name:<9} {v:.6}");
    }
    println!("report -> {}\nscatter -> {}", json_path.display(), csv_path.display());
    Ok(())
}

fn reproduce_cmd(ctx: &Ctx, args: ReproduceArgs) -> Result<()> {
    let opts = ReproduceOptions {
        pitches: args.pitches.map_or_else(|| vec![REFERENCE_NOTE.to_string()], |p| p.0),
        partials: args.partials,
        sample_rate: ctx.sample_rate,
        stft: ctx.stft,
        seed: ctx.seed,
        multi_band_limit: if args.full { None } else { Some(args.limit) },
        exec: ctx.exec,
    };
    ctx.info(format!(
        "reproducing on {:?} ({} partials)",
        opts.pitches, opts.partials
    ));
    let started = Instant::now();
    let summary = reproduce(&opts, Some(ctx.out_dir()?))?;
    ctx.info(format!("finished in {:.1} s", started.elapsed().as_secs_f64()));
    print!("{}", summary.table());
    println!("outputs -> {}", ctx.out.display());
    let failed = summary.checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        bail!("{failed} of {} checks failed", summary.checks.len());
    }
    Ok(())
}

fn response(ctx: &Ctx, args: ResponseArgs) -> Result<()> {
    let freqs = log_frequency_grid(args.fmin, args.fmax, args.points)?;
    let gains = eq_response(&args.gains, &standard_bands(), &freqs, ctx.sample_rate)?;
    let mut w = csv_sink(args.output.as_deref())?;
    w.write_record(["frequency_hz", "gain_db"])?;
    for (f, g) in freqs.iter().zip(gains) {
        w.write_record([f.to_string(), g.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
