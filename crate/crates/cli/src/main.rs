use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use orcaclass_core::classifier::{cross_validate, Kernel, SvmModel, TrainParams};
use orcaclass_core::dataset::{
    build_dataset, export_arff, load_manifest, read_annotations, read_arff, Annotation, LabelSet, ManifestSource,
    MiddleExtract, Preprocessing, DEFAULT_SILENCE_RATIO,
};
use orcaclass_core::features::{FrameSpec, WindowFunction};
use orcaclass_core::segmenter::{segment_wav, SegmentOptions};
use orcaclass_experiments::{
    clip_and_frame_cv, generate_long_recordings, generate_synthetic_corpus, plan_batch, run_batch, run_sweep,
    scaling_check, train_segmentation_model, BatchConfig, CallTemplate, LongRecordingSpec, SweepGrid,
    SyntheticCorpusSpec, TimingReport, SEGMENTATION_MEMORY,
};
use orcaclass_service::ServiceConfig;

#[derive(Parser)]
#[command(name = "orcaclass", version, about = "Classify and segment hydrophone recordings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from an ARFF file or from an annotated corpus
    Train(TrainArgs),
    /// Stratified k-fold cross-validation
    Crossval(CrossvalArgs),
    /// Export whole-clip feature vectors of an annotated corpus as ARFF
    Extract(ExtractArgs),
    /// Segment one recording into a labeled timeline
    Segment(SegmentArgs),
    /// Generate a synthetic corpus
    Synth(SynthArgs),
    /// Window size by texture memory accuracy table
    Sweep(SweepArgs),
    /// Segment a fraction of a manifest with a pool of workers
    Batch(BatchArgs),
    /// Tabulate batch timings and check that run time scales with corpus size
    ScalingReport(ScalingArgs),
    /// Run the annotation service
    Serve(ServeArgs),
}

#[derive(Args)]
struct CorpusArgs {
    /// Manifest of recordings (JSON)
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Annotation log (JSON lines)
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Comma-separated label set; defaults to orca,background,voice
    #[arg(long, value_delimiter = ',')]
    labels: Vec<String>,
}

impl CorpusArgs {
    fn given(&self) -> bool {
        self.manifest.is_some() || self.annotations.is_some()
    }

    fn load(&self) -> Result<(ManifestSource, Vec<Annotation>, LabelSet)> {
        let (Some(manifest), Some(annotations)) = (&self.manifest, &self.annotations) else {
            bail!("--manifest and --annotations go together");
        };
        let source = ManifestSource::from_file(manifest).with_context(|| format!("reading {}", manifest.display()))?;
        let anns = read_annotations(annotations).with_context(|| format!("reading {}", annotations.display()))?;
        let labels = if self.labels.is_empty() {
            LabelSet::three_class()
        } else {
            LabelSet::new(self.labels.iter().map(|s| s.trim()))?
        };
        Ok((source, anns, labels))
    }
}

#[derive(Args)]
struct FrameArgs {
    #[arg(long, default_value_t = 4096)]
    window: usize,
    /// Defaults to half the window
    #[arg(long)]
    hop: Option<usize>,
    #[arg(long, value_enum, default_value_t = WindowArg::Hamming)]
    window_function: WindowArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum WindowArg {
    Hamming,
    Hann,
}

impl FrameArgs {
    fn spec(&self) -> Result<FrameSpec> {
        let wf = match self.window_function {
            WindowArg::Hamming => WindowFunction::Hamming,
            WindowArg::Hann => WindowFunction::Hann,
        };
        Ok(FrameSpec::new(self.window, self.hop.unwrap_or(self.window / 2), wf)?)
    }
}

#[derive(Args)]
struct SvmArgs {
    /// Complexity constant
    #[arg(long = "C", visible_alias = "c", default_value_t = 1.0)]
    c: f64,
    /// linear or rbf:<gamma>
    #[arg(long, default_value = "linear")]
    kernel: String,
}

impl SvmArgs {
    fn params(&self) -> Result<TrainParams> {
        if !(self.c > 0.0) {
            bail!("--C must be positive");
        }
        Ok(TrainParams {
            c: self.c,
            kernel: self.kernel.parse::<Kernel>()?,
            ..TrainParams::default()
        })
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, conflicts_with = "manifest")]
    arff: Option<PathBuf>,
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    frame: FrameArgs,
    /// Texture memory in frames for corpus-trained (segmentation) models
    #[arg(long, default_value_t = SEGMENTATION_MEMORY)]
    memory: usize,
    /// Texture vectors kept per class when training from a corpus
    #[arg(long, default_value_t = 400)]
    per_class: usize,
    #[command(flatten)]
    svm: SvmArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CrossvalArgs {
    #[arg(long, conflicts_with = "manifest")]
    arff: Option<PathBuf>,
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    frame: FrameArgs,
    /// Texture memory for the per-frame matrix
    #[arg(long, default_value_t = 80)]
    memory: usize,
    /// Training frames taken from each clip for the per-frame matrix
    #[arg(long, default_value_t = 10)]
    frames_per_clip: usize,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    svm: SvmArgs,
    /// Also write the result as JSON
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    frame: FrameArgs,
    /// none, trim[:ratio] or middle:<seconds>
    #[arg(long, default_value = "none")]
    preprocess: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    wav: PathBuf,
    /// Timeline JSON; the CSV goes next to it
    #[arg(long)]
    out: PathBuf,
    /// Defaults to the WAV file stem
    #[arg(long)]
    recording_id: Option<String>,
    #[command(flatten)]
    segment: SegmentOptArgs,
}

#[derive(Args)]
struct SegmentOptArgs {
    /// Majority-vote smoothing radius in frames
    #[arg(long)]
    radius: Option<usize>,
    /// Runs shorter than this are absorbed by a neighbour
    #[arg(long)]
    min_duration: Option<f64>,
}

impl SegmentOptArgs {
    fn options(&self) -> SegmentOptions {
        let d = SegmentOptions::default();
        SegmentOptions {
            radius: self.radius.unwrap_or(d.radius),
            min_duration_s: self.min_duration.unwrap_or(d.min_duration_s),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    ThreeClass,
    Calls,
    Long,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: SynthKind,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 30)]
    clips_per_class: usize,
    #[arg(long, default_value_t = 100)]
    recordings: usize,
    #[arg(long, default_value_t = 30.0)]
    duration: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [512usize, 1024, 2048, 4096])]
    windows: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [20usize, 40, 80])]
    memories: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    per_class: usize,
    #[command(flatten)]
    svm: SvmArgs,
    /// Writes sweep.csv and sweep.txt here
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct BatchArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, required_unless_present = "dry_run")]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Share of the manifest to process, in (0, 1]
    #[arg(long, default_value_t = 1.0)]
    fraction: f64,
    /// Per-recording timelines are written here
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Appends the timing row to this CSV file
    #[arg(long)]
    timing: Option<PathBuf>,
    /// Seconds of training audio behind the model, for the timing table
    #[arg(long, default_value_t = 0.0)]
    training_len: f64,
    /// Print the worker assignment and exit
    #[arg(long)]
    dry_run: bool,
    #[command(flatten)]
    segment: SegmentOptArgs,
}

#[derive(Args)]
struct ScalingArgs {
    /// Timing CSV files written by `batch --timing`
    #[arg(required = true)]
    timing: Vec<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    models_dir: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    /// Built annotator bundle to serve alongside the API
    #[arg(long)]
    static_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    labels: Vec<String>,
    #[arg(long, default_value_t = orcaclass_service::DEFAULT_JOB_WORKERS)]
    job_workers: usize,
    /// Longer recordings are segmented as background jobs
    #[arg(long, default_value_t = orcaclass_service::DEFAULT_SYNC_LIMIT_S)]
    sync_limit: f64,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Train(a) => train(a),
        Command::Crossval(a) => crossval(a),
        Command::Extract(a) => extract(a),
        Command::Segment(a) => segment(a),
        Command::Synth(a) => synth(a),
        Command::Sweep(a) => sweep(a),
        Command::Batch(a) => batch(a),
        Command::ScalingReport(a) => scaling_report(a),
        Command::Serve(a) => serve(a),
    }
}

fn train(a: TrainArgs) -> Result<()> {
    let params = a.svm.params()?;
    let model = if let Some(arff) = &a.arff {
        let d = read_arff(arff).with_context(|| format!("reading {}", arff.display()))?;
        SvmModel::train(&d, &params)?
    } else if a.corpus.given() {
        let (source, anns, labels) = a.corpus.load()?;
        let (model, seconds) =
            train_segmentation_model(&anns, &source, &a.frame.spec()?, a.memory, &labels, a.per_class, &params)?;
        log::info!("trained on {seconds:.1} s of annotated audio");
        model
    } else {
        bail!("give --arff or --manifest with --annotations");
    };
    if !model.converged() {
        log::warn!("some pairwise machines hit the iteration cap before converging");
    }
    model.save(&a.out)?;
    println!(
        "{} labels, {} features, kernel {}, C {} -> {}",
        model.label_set.len(),
        model.dim(),
        model.kernel,
        model.c,
        a.out.display()
    );
    Ok(())
}

fn crossval(a: CrossvalArgs) -> Result<()> {
    let params = a.svm.params()?;
    let json = if let Some(arff) = &a.arff {
        let d = read_arff(arff).with_context(|| format!("reading {}", arff.display()))?;
        let cv = cross_validate(&d, a.k, a.seed, &params)?;
        println!("{}", cv.matrix);
        serde_json::to_string_pretty(&cv)?
    } else if a.corpus.given() {
        let (source, anns, labels) = a.corpus.load()?;
        let r = clip_and_frame_cv(
            &anns,
            &source,
            &a.frame.spec()?,
            a.memory,
            &labels,
            a.k,
            a.seed,
            a.frames_per_clip,
            &params,
        )?;
        if r.skipped > 0 {
            println!("{} clips skipped (shorter than one window or unreadable)\n", r.skipped);
        }
        println!("per clip\n{}\nper frame (memory {})\n{}", r.clip.matrix, a.memory, r.frame);
        serde_json::to_string_pretty(&r)?
    } else {
        bail!("give --arff or --manifest with --annotations");
    };
    if let Some(path) = a.json {
        std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn parse_preprocessing(s: &str) -> Result<Preprocessing> {
    let (kind, arg) = s.split_once(':').map_or((s, None), |(k, v)| (k, Some(v)));
    let num = |v: Option<&str>, default: Option<f64>| -> Result<f64> {
        match (v, default) {
            (Some(v), _) => v.parse().with_context(|| format!("bad number {v:?}")),
            (None, Some(d)) => Ok(d),
            (None, None) => bail!("{kind} needs a value, e.g. {kind}:0.023"),
        }
    };
    Ok(match kind {
        "none" => Preprocessing::None,
        "trim" => Preprocessing::TrimSilence {
            threshold_ratio: num(arg, Some(DEFAULT_SILENCE_RATIO))?,
        },
        "middle" => Preprocessing::MiddleExtract(MiddleExtract::uniform(num(arg, None)?)),
        _ => bail!("unknown preprocessing {s:?}; use none, trim[:ratio] or middle:<seconds>"),
    })
}

fn extract(a: ExtractArgs) -> Result<()> {
    let pre = parse_preprocessing(&a.preprocess)?;
    let (source, anns, labels) = a.corpus.load()?;
    let (d, report) = build_dataset(&anns, &source, &a.frame.spec()?, &pre, &labels)?;
    for s in &report.skipped {
        log::warn!("skipped {}: {}", s.annotation_id, s.reason);
    }
    export_arff(&d, &a.out)?;
    println!("{} instances ({} skipped) -> {}", d.len(), report.skipped.len(), a.out.display());
    Ok(())
}

fn segment(a: SegmentArgs) -> Result<()> {
    let model = SvmModel::load(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let id = match a.recording_id {
        Some(id) => id,
        None => a
            .wav
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "recording".into()),
    };
    let tl = segment_wav(&a.wav, &id, &model, &a.segment.options())?;
    tl.write_files(&a.out)?;
    println!("{} segments -> {}", tl.segments.len(), a.out.display());
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let c = match a.kind {
        SynthKind::ThreeClass => {
            generate_synthetic_corpus(&SyntheticCorpusSpec::three_class(a.clips_per_class, a.seed), &a.out)?
        }
        SynthKind::Calls => generate_synthetic_corpus(&SyntheticCorpusSpec::calls(a.clips_per_class, a.seed), &a.out)?,
        SynthKind::Long => generate_long_recordings(&LongRecordingSpec::new(a.recordings, a.duration, a.seed), &a.out)?,
    };
    let labels = c.label_set.names().join(",");
    println!(
        "{} recordings, {} annotations, labels {labels}\nmanifest {}\nannotations {}",
        c.entries.len(),
        c.annotation_records.len(),
        c.manifest.display(),
        c.annotations.display()
    );
    if matches!(a.kind, SynthKind::Calls) {
        let (x, y) = CallTemplate::SIMILAR_PAIR;
        println!("most similar templates: {} and {}", x.name(), y.name());
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let (source, anns, labels) = a.corpus.load()?;
    let grid = SweepGrid {
        windows: a.windows,
        memories: a.memories,
        k: a.k,
        seed: a.seed,
        per_class: a.per_class,
        ..SweepGrid::full()
    };
    let table = run_sweep(&grid, &anns, &source, &labels, &a.svm.params()?)?;
    print!("{}", table.to_text());
    if let Some(dir) = a.out_dir {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("sweep.csv"), table.to_csv())?;
        std::fs::write(dir.join("sweep.txt"), table.to_text())?;
    }
    Ok(())
}

fn append_timing(path: &Path, report: &TimingReport) -> Result<()> {
    use std::io::Write;
    let csv = report.to_csv();
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let text = if fresh { csv.as_str() } else { csv.split_once('\n').map_or("", |(_, rows)| rows) };
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

fn batch(a: BatchArgs) -> Result<()> {
    let entries = load_manifest(&a.manifest).with_context(|| format!("reading {}", a.manifest.display()))?;
    let mut cfg = BatchConfig::new(a.workers, a.fraction);
    cfg.out_dir = a.out_dir;
    cfg.options = a.segment.options();
    cfg.training_len_s = a.training_len;
    if a.dry_run {
        let plan = plan_batch(&entries, &cfg)?;
        for (w, ids) in plan.workers.iter().enumerate() {
            println!("worker {w}: {}", ids.join(" "));
        }
        return Ok(());
    }
    let model_path = a.model.expect("clap requires --model without --dry-run");
    let model = SvmModel::load(&model_path).with_context(|| format!("loading {}", model_path.display()))?;
    let outcome = run_batch(&entries, &model, &cfg)?;
    for r in outcome.recordings.iter().filter(|r| r.error.is_some()) {
        println!("failed {}: {}", r.recording_id, r.error.as_deref().unwrap_or_default());
    }
    let report = TimingReport {
        rows: vec![outcome.timing.clone()],
    };
    print!("{}", report.to_text());
    if let Some(path) = a.timing {
        append_timing(&path, &report)?;
    }
    Ok(())
}

fn scaling_report(a: ScalingArgs) -> Result<()> {
    let mut report = TimingReport::default();
    for path in &a.timing {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        report.rows.extend(TimingReport::from_csv(&text)?.rows);
    }
    print!("{}", report.to_text());
    let check = scaling_check(&report)?;
    println!();
    for p in &check.pairs {
        println!(
            "workers {}: {:>6.1}% -> {:>6.1}%  size x{:<7.2} time x{:<7.2} {}",
            p.worker_count,
            100.0 * p.small_fraction,
            100.0 * p.large_fraction,
            p.fraction_ratio,
            p.time_ratio,
            if p.pass { "ok" } else { "outside tolerance" }
        );
    }
    if !check.pass {
        bail!("run time does not scale within a factor of {} of corpus size", check.factor);
    }
    println!("run time scales with corpus size within a factor of {}", check.factor);
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let mut cfg = ServiceConfig::new(&a.manifest, &a.annotations, &a.models_dir);
    if !a.labels.is_empty() {
        cfg.labels = LabelSet::new(a.labels.iter().map(|s| s.trim()))?;
    }
    cfg.static_dir = a.static_dir;
    cfg.job_workers = a.job_workers;
    cfg.sync_limit_s = a.sync_limit;
    let addr = SocketAddr::new(a.host, a.port);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(orcaclass_service::serve(cfg, addr))?;
    Ok(())
}
