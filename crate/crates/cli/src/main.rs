use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use maskselect::metrics::{MetricsReport, DEFAULT_NORM_SIZE};
use maskselect::model::{load_checkpoint, save_checkpoint, Strategy};
use maskselect::proposals::{load_proposal_set, postprocess, save_proposal_set, PostprocessConfig};
use maskselect::BinaryMask;
use maskselect_dataset::{
    build_manifest, build_prompts, dataset_stats, provider_from_spec, read_corpus, read_jsonl, selected_records, stratified_sample,
    synth_corpus, write_jsonl, CorpusConfig, DatasetConfig, DatasetError, ManifestRecord, PromptRecord, Provider, Selection,
    SourceRecord,
};
use maskselect_harness::{
    evaluate, read_dataset, render_pgm, run_gradcheck, synth_generate, train, write_dataset, write_log, HarnessError, Preset,
    RunConfig, SynthConfig,
};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "maskselect", version, about = "Mask-proposal selection: training, evaluation and dataset tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a selection model on a synthetic dataset directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint with one selection strategy.
    Eval(EvalArgs),
    /// Compare analytic and finite-difference gradients on a random model.
    Gradcheck(GradcheckArgs),
    /// Generate a synthetic dataset directory.
    Synth(SynthArgs),
    /// Filter proposals by predicted IoU and apply NMS.
    ProposePostprocess(PostprocessArgs),
    /// Instruction-data pipeline stages.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Write a mask JSON file as a binary PGM image.
    Render(RenderArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// JSON overlay on the preset; RunConfig field names.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "desk")]
    preset: Preset,
    /// Training data directory; overrides `train_data` in the config.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    log: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "threshold-iop")]
    strategy: Strategy,
    #[arg(long, default_value_t = 0.5)]
    iop_threshold: f64,
    #[arg(long, default_value_t = DEFAULT_NORM_SIZE)]
    norm_size: usize,
    #[arg(long)]
    report: PathBuf,
    /// Per-sample selections and head outputs as JSON lines.
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Perturb one analytic gradient before comparing (negative control).
    #[arg(long, hide = true)]
    corrupt: bool,
    /// Write the full report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON overlay on the default generator settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PostprocessArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = PostprocessConfig::default().iou_filter)]
    iou_filter: f64,
    #[arg(long, default_value_t = PostprocessConfig::default().nms_threshold)]
    nms: f64,
    #[arg(long, default_value_t = PostprocessConfig::default().max_proposals)]
    max_proposals: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StageArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Provider spec, `mock:<seed>` or `http`; overrides the config.
    #[arg(long)]
    provider: Option<String>,
    /// Source corpus (JSON lines); overrides the config.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Write a synthetic source corpus.
    Corpus {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stratified sample of image ids.
    Sample {
        #[command(flatten)]
        stage: StageArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Describe each sampled image and build its question prompt.
    Prompts {
        #[command(flatten)]
        stage: StageArgs,
        #[arg(long)]
        selection: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate questions, build answer masks and assign splits.
    Assemble {
        #[command(flatten)]
        stage: StageArgs,
        #[arg(long)]
        prompts: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Dropped replies and unresolved categories, one per line.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Summary statistics of a manifest.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// All stages; writes selection.json, prompts.jsonl, manifest.jsonl,
    /// diagnostics.txt and stats.json into the output directory.
    Run {
        #[command(flatten)]
        stage: StageArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Serialize)]
struct ReportFile<'a> {
    strategy: &'a str,
    iop_threshold: f64,
    #[serde(flatten)]
    metrics: &'a MetricsReport,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn run_train(a: TrainArgs) -> Result<()> {
    let text = match &a.config {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => "{}".into(),
    };
    let cfg = RunConfig::from_json_over(a.preset, &text)?;
    let Some(dir) = a.data.as_ref().or(cfg.train_data.as_ref()) else {
        return Err(HarnessError::DataMissing("pass --data or set train_data in the config".into()).into());
    };
    let samples = read_dataset(dir)?;
    let outcome = train(&cfg, &samples)?;
    save_checkpoint(&a.out, &outcome.model)?;
    write_log(create(&a.log)?, &outcome.log)?;
    if let (Some(first), Some(last)) = (outcome.log.first(), outcome.log.last()) {
        println!("trained {} steps on {} samples: total loss {:.4} -> {:.4}", cfg.steps, samples.len(), first.total, last.total);
    }
    Ok(())
}

fn run_eval(a: EvalArgs) -> Result<()> {
    let model = load_checkpoint(&a.ckpt)?;
    let samples = read_dataset(&a.data)?;
    let out = evaluate(&model, &samples, a.strategy, a.iop_threshold, a.norm_size)?;
    write_json(&a.report, &ReportFile { strategy: &out.strategy, iop_threshold: a.iop_threshold, metrics: &out.report })?;
    if let Some(p) = &a.dump {
        let mut w = create(p)?;
        for pred in &out.predictions {
            serde_json::to_writer(&mut w, pred)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    let r = &out.report;
    println!("{} n={} gIoU={:.4} cIoU={:.4} ncIoU={:.4}", out.strategy, r.n, r.giou, r.ciou, r.nciou);
    Ok(())
}

/// Returns whether every block passed.
fn run_gradcheck_cmd(a: GradcheckArgs) -> Result<bool> {
    let run = run_gradcheck(a.seed, a.corrupt)?;
    println!("seed {} K={} dim={}", run.seed, run.proposals, run.dim);
    for b in &run.report.blocks {
        println!("{:<28} {:>6} {:.3e}", b.name, b.scalars, b.max_relative_error);
    }
    println!("{} max relative error {:.3e}", if run.passed { "PASS" } else { "FAIL" }, run.report.max_relative_error());
    if let Some(p) = &a.report {
        write_json(p, &run)?;
    }
    Ok(run.passed)
}

fn run_synth(a: SynthArgs) -> Result<()> {
    let cfg: SynthConfig = match &a.config {
        Some(p) => serde_json::from_reader(open(p)?)?,
        None => SynthConfig::default(),
    };
    let samples = synth_generate(a.n, &cfg, a.seed)?;
    write_dataset(&a.out, &samples)?;
    println!("wrote {} samples to {}", samples.len(), a.out.display());
    Ok(())
}

fn run_postprocess(a: PostprocessArgs) -> Result<()> {
    for (name, v) in [("--iou-filter", a.iou_filter), ("--nms", a.nms)] {
        if !(0.0..=1.0).contains(&v) {
            bail!(Invalid(format!("{name} must be in [0, 1], got {v}")));
        }
    }
    let set = load_proposal_set(&a.input)?;
    let cfg = PostprocessConfig { iou_filter: a.iou_filter, nms_threshold: a.nms, max_proposals: a.max_proposals };
    let out = postprocess(&set, &cfg);
    save_proposal_set(&out, &a.out)?;
    println!("{} -> {} proposals", set.len(), out.len());
    Ok(())
}

fn run_render(a: RenderArgs) -> Result<()> {
    let mask: BinaryMask = serde_json::from_reader(open(&a.mask)?)?;
    render_pgm(&a.out, &mask)?;
    Ok(())
}

/// A user-input problem detected by the CLI itself.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

struct Stage {
    cfg: DatasetConfig,
    corpus: Vec<SourceRecord>,
}

impl Stage {
    fn load(a: &StageArgs) -> Result<Self> {
        let mut cfg: DatasetConfig = match &a.config {
            Some(p) => serde_json::from_reader(open(p)?)?,
            None => DatasetConfig::default(),
        };
        if let Some(p) = &a.provider {
            cfg.provider = p.clone();
        }
        if let Some(c) = &a.corpus {
            cfg.corpus = Some(c.clone());
        }
        let Some(path) = &cfg.corpus else {
            bail!(Invalid("no corpus: pass --corpus or set corpus in the config".into()));
        };
        let corpus = read_corpus(open(path)?)?;
        Ok(Stage { cfg, corpus })
    }

    fn provider(&self) -> Result<Box<dyn Provider>> {
        Ok(provider_from_spec(&self.cfg.provider)?)
    }

    fn sample(&self) -> Result<Selection> {
        Ok(stratified_sample(&self.corpus, self.cfg.counts, self.cfg.seed)?)
    }

    fn prompts(&self, selection: &Selection) -> Result<Vec<PromptRecord>> {
        let records = selected_records(&self.corpus, selection);
        Ok(build_prompts(self.provider()?.as_ref(), &records, &self.cfg.bundle()?, self.cfg.calls)?)
    }

    fn assemble(&self, prompts: &[PromptRecord]) -> Result<(Vec<ManifestRecord>, Vec<String>)> {
        let wanted: std::collections::HashSet<&str> = prompts.iter().map(|p| p.image_id.as_str()).collect();
        let records: Vec<SourceRecord> = self.corpus.iter().filter(|r| wanted.contains(r.image_id.as_str())).cloned().collect();
        let out = build_manifest(self.provider()?.as_ref(), &records, prompts, self.cfg.calls, self.cfg.ratios, self.cfg.seed)?;
        Ok((out.records, out.diagnostics))
    }
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut w = create(path)?;
    for l in lines {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

fn write_jsonl_file<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    Ok(write_jsonl(create(path)?, items)?)
}

fn run_dataset(cmd: DatasetCommand) -> Result<()> {
    match cmd {
        DatasetCommand::Corpus { n, seed, out } => {
            let corpus = synth_corpus(n, CorpusConfig::default(), seed);
            write_jsonl_file(&out, &corpus)?;
            println!("wrote {} records to {}", corpus.len(), out.display());
        }
        DatasetCommand::Sample { stage, out } => {
            let selection = Stage::load(&stage)?.sample()?;
            write_json(&out, &selection)?;
            println!(
                "sampled {} simple, {} complex, {} egocentric",
                selection.simple.len(),
                selection.complex.len(),
                selection.egocentric.len()
            );
        }
        DatasetCommand::Prompts { stage, selection, out } => {
            let selection: Selection = serde_json::from_reader(open(&selection)?)?;
            let prompts = Stage::load(&stage)?.prompts(&selection)?;
            write_jsonl_file(&out, &prompts)?;
            println!("wrote {} prompts", prompts.len());
        }
        DatasetCommand::Assemble { stage, prompts, out, diagnostics } => {
            let prompts: Vec<PromptRecord> = read_jsonl(open(&prompts)?)?;
            let (manifest, diag) = Stage::load(&stage)?.assemble(&prompts)?;
            write_jsonl_file(&out, &manifest)?;
            if let Some(p) = diagnostics {
                write_lines(&p, &diag)?;
            }
            println!("wrote {} records ({} diagnostics)", manifest.len(), diag.len());
        }
        DatasetCommand::Stats { manifest, out } => {
            let manifest: Vec<ManifestRecord> = read_jsonl(open(&manifest)?)?;
            let stats = dataset_stats(&manifest)?;
            if let Some(p) = out {
                write_json(&p, &stats)?;
            }
            println!("{stats}");
        }
        DatasetCommand::Run { stage, out } => {
            let stage = Stage::load(&stage)?;
            std::fs::create_dir_all(&out)?;
            let selection = stage.sample()?;
            write_json(&out.join("selection.json"), &selection)?;
            let prompts = stage.prompts(&selection)?;
            write_jsonl_file(&out.join("prompts.jsonl"), &prompts)?;
            let (manifest, diag) = stage.assemble(&prompts)?;
            write_jsonl_file(&out.join("manifest.jsonl"), &manifest)?;
            write_lines(&out.join("diagnostics.txt"), &diag)?;
            let stats = dataset_stats(&manifest)?;
            write_json(&out.join("stats.json"), &stats)?;
            println!("{stats}");
        }
    }
    Ok(())
}

/// 1 for I/O and runtime failures, 2 for invalid input.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<std::io::Error>() {
            return 1;
        }
        if let Some(HarnessError::NonFiniteLoss { .. }) = cause.downcast_ref::<HarnessError>() {
            return 1;
        }
        if let Some(DatasetError::ProviderUnavailable(_) | DatasetError::MalformedResponse(_)) = cause.downcast_ref::<DatasetError>() {
            return 1;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::Gradcheck(a) => match run_gradcheck_cmd(a) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(1),
            Err(e) => Err(e),
        },
        Command::Synth(a) => run_synth(a),
        Command::ProposePostprocess(a) => run_postprocess(a),
        Command::Dataset(c) => run_dataset(c),
        Command::Render(a) => run_render(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
