//! The `mft` command line: corpus synthesis, the four training phases,
//! paragraph generation, evaluation and gradient checking.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error
//! (missing files, malformed inputs, mismatched checkpoints), 3 a check
//! that ran but failed.

use std::collections::{BTreeSet, HashMap};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use crate::caption::{read_paragraphs, tokenize, write_paragraphs, CaptionNet, ParagraphRecord};
use crate::checks::{check_networks, GradCheckSetup};
use crate::config::RunConfig;
use crate::corpus::{load_annotations, load_dataset, save_dataset, synth_generate, Dataset, Split, VideoRecord, MANIFEST_FILE};
use crate::error::{MftError, Result};
use crate::localize::FrameScorer;
use crate::metrics::{evaluate, EvalItem};
use crate::numcore::{load_params, save_params};
use crate::pipeline::{gt_event_paragraphs, label_videos, mft_paragraphs, Localizer};
use crate::select::SelectionNet;
use crate::train::{scst_train, train_captioner_xe, train_selector};
use crate::Token;

pub const SCORER_FILE: &str = "scorer.json";
pub const CAPTION_XE_FILE: &str = "caption_xe.mftw";
pub const CAPTION_SCST_FILE: &str = "caption_scst.mftw";
pub const SELECTOR_FILE: &str = "selector.mftw";

#[derive(Debug, Parser)]
#[command(name = "mft", version, about = "Progressive event selection and paragraph captioning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every command that reads a run configuration.
#[derive(Debug, clap::Args)]
pub struct ConfigArgs {
    /// Flat JSON run configuration; missing keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Start from the desk-scale preset instead of the full-size defaults.
    #[arg(long)]
    pub desk: bool,
    /// `key=value` overrides applied on top of the file.
    #[arg(value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None if self.desk => RunConfig::desk(),
            None => RunConfig::default(),
        };
        base.with_overrides(self.overrides.iter().map(String::as_str))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Phase {
    Scorer,
    Xe,
    Scst,
    Selector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Mft,
    GtEvent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Tuning,
    Eval,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus and write it to disk.
    Synth {
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run one training phase and write its checkpoint and CSV log.
    Train {
        #[arg(long, value_enum)]
        phase: Phase,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Checkpoint directory (read for upstream phases, written for this one).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Greedy paragraphs as JSON-lines.
    Generate {
        #[arg(long)]
        checkpoints: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "mft")]
        mode: Mode,
        #[arg(long, value_enum, default_value = "eval")]
        split: SplitArg,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score generated paragraphs against references.
    Eval {
        #[arg(long)]
        generated: PathBuf,
        /// Paragraph JSON-lines, an annotation JSON file, or a dataset
        /// manifest (or its directory).
        #[arg(long)]
        references: PathBuf,
        /// Where to write the JSON report; the text table goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Frames per second, for annotation references.
        #[arg(long, default_value_t = 1.0)]
        fps: f64,
    },
    /// Finite-difference check of both networks' gradients.
    Gradcheck {
        /// JSON setup (shapes, eps, tolerance, seed); defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// What a command produced, beyond its files.
#[derive(Debug)]
pub enum Outcome {
    Done,
    CheckFailed(String),
}

pub fn exit_code(err: &MftError) -> i32 {
    match err {
        MftError::Config(_) => 1,
        _ => 2,
    }
}

/// Parses `args` (program name first), runs the command, prints any error
/// and returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(Outcome::Done) => 0,
        Ok(Outcome::CheckFailed(msg)) => {
            eprintln!("check failed: {msg}");
            3
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn init_logging() {
    let env = env_logger::Env::default().filter_or("MFT_LOG_LEVEL", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

pub fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::Synth { out, cfg } => cmd_synth(&cfg.resolve()?, out),
        Command::Train { phase, data, out, cfg } => cmd_train(&cfg.resolve()?, phase, data, out),
        Command::Generate {
            checkpoints,
            data,
            mode,
            split,
            out,
            cfg,
        } => cmd_generate(&cfg.resolve()?, &checkpoints, data, mode, split, &out),
        Command::Eval {
            generated,
            references,
            out,
            fps,
        } => cmd_eval(&generated, &references, out.as_deref(), fps),
        Command::Gradcheck { config } => cmd_gradcheck(config.as_deref()),
    }
}

fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| MftError::Config(format!("--{name} (or `{name}` in the run config) is required")))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| MftError::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| MftError::io(path, e))
}

pub fn cmd_synth(cfg: &RunConfig, out: Option<PathBuf>) -> Result<Outcome> {
    let out = required(out, &cfg.out, "out")?;
    let ds = synth_generate(&cfg.synth())?;
    create_dir(&out)?;
    let manifest = save_dataset(&out, &ds, cfg.fps)?;
    info!("wrote {} videos, manifest {}", ds.videos.len(), manifest.display());
    println!("{} videos written to {}", ds.videos.len(), out.display());
    Ok(Outcome::Done)
}

fn missing(phase: &str, path: PathBuf) -> MftError {
    MftError::MissingCheckpoint {
        phase: phase.to_string(),
        path,
    }
}

fn load_scorer(dir: &Path) -> Result<FrameScorer> {
    let path = dir.join(SCORER_FILE);
    if !path.exists() {
        return Err(missing("scorer", path));
    }
    let text = fs::read_to_string(&path).map_err(|e| MftError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| MftError::parse(path.display().to_string(), e.to_string()))
}

fn check_vocab(net: &CaptionNet, ds: &Dataset) -> Result<()> {
    let checkpoint = net.shape().vocab_size;
    if checkpoint != ds.vocab.len() {
        return Err(MftError::VocabMismatch {
            checkpoint,
            data: ds.vocab.len(),
        });
    }
    Ok(())
}

fn load_captioner_file(cfg: &RunConfig, path: &Path) -> Result<CaptionNet> {
    CaptionNet::from_store(load_params(path)?, cfg.subsegments, cfg.max_sentence_len)
}

/// The SCST captioner when present, else the XE one.
fn load_captioner(cfg: &RunConfig, dir: &Path, ds: &Dataset) -> Result<CaptionNet> {
    let scst = dir.join(CAPTION_SCST_FILE);
    let xe = dir.join(CAPTION_XE_FILE);
    let path = if scst.exists() {
        scst
    } else if xe.exists() {
        xe
    } else {
        return Err(missing("xe", xe));
    };
    let net = load_captioner_file(cfg, &path)?;
    check_vocab(&net, ds)?;
    Ok(net)
}

fn localizer(cfg: &RunConfig, dir: &Path) -> Result<Localizer> {
    Ok(Localizer {
        scorer: load_scorer(dir)?,
        watershed: cfg.watershed(),
    })
}

pub fn cmd_train(cfg: &RunConfig, phase: Phase, data: Option<PathBuf>, out: Option<PathBuf>) -> Result<Outcome> {
    let data = required(data, &cfg.data, "data")?;
    let out = required(out, &cfg.out, "out")?;
    let ds = load_dataset(&data)?;
    let train = ds.split(Split::Train);
    let tuning = ds.split(Split::Tuning);
    let dim = ds
        .feature_dim()
        .ok_or_else(|| MftError::parse(data.display().to_string(), "dataset has no videos"))?;
    create_dir(&out)?;
    match phase {
        Phase::Scorer => {
            let loc = Localizer::train(&train, &cfg.scorer(), cfg.watershed())?;
            write_text(&out.join(SCORER_FILE), &serde_json::to_string_pretty(&loc.scorer)?)?;
        }
        Phase::Xe => {
            let net = cfg.new_captioner(ds.vocab.len(), dim)?;
            let res = train_captioner_xe(net, &train, &tuning, &cfg.xe())?;
            save_params(&res.net.store, &out.join(CAPTION_XE_FILE))?;
            res.log.write(&out.join("xe_log.csv"))?;
            println!(
                "xe: final loss {:.4}, train token accuracy {:.4}, best epoch {}",
                res.final_loss, res.final_train_accuracy, res.best_epoch
            );
        }
        Phase::Scst => {
            let path = out.join(CAPTION_XE_FILE);
            if !path.exists() {
                return Err(missing("xe", path));
            }
            let net = load_captioner_file(cfg, &path)?;
            check_vocab(&net, &ds)?;
            let res = scst_train(net, &train, &tuning, &cfg.scst())?;
            save_params(&res.net.store, &out.join(CAPTION_SCST_FILE))?;
            res.log.write(&out.join("scst_log.csv"))?;
            println!("scst: best epoch {}, skipped steps {}", res.best_epoch, res.skipped_steps);
        }
        Phase::Selector => {
            let loc = localizer(cfg, &out)?;
            let captioner = load_captioner(cfg, &out, &ds)?;
            let labels = label_videos(&loc, &train)?;
            let res = train_selector(cfg.new_selector(dim), &captioner, &train, &labels, &cfg.selector_training())?;
            save_params(&res.net.store, &out.join(SELECTOR_FILE))?;
            res.log.write(&out.join("selector_log.csv"))?;
            println!("selector: final loss {:.4} after {} steps", res.final_loss, res.steps);
        }
    }
    Ok(Outcome::Done)
}

fn split_videos(ds: &Dataset, split: SplitArg) -> Vec<VideoRecord> {
    match split {
        SplitArg::Train => ds.split(Split::Train),
        SplitArg::Tuning => ds.split(Split::Tuning),
        SplitArg::Eval => ds.split(Split::Eval),
        SplitArg::All => ds.videos.clone(),
    }
}

pub fn cmd_generate(
    cfg: &RunConfig,
    checkpoints: &Path,
    data: Option<PathBuf>,
    mode: Mode,
    split: SplitArg,
    out: &Path,
) -> Result<Outcome> {
    let data = required(data, &cfg.data, "data")?;
    let ds = load_dataset(&data)?;
    let videos = split_videos(&ds, split);
    let captioner = load_captioner(cfg, checkpoints, &ds)?;
    let paragraphs = match mode {
        Mode::GtEvent => gt_event_paragraphs(&captioner, &videos)?,
        Mode::Mft => {
            let loc = localizer(cfg, checkpoints)?;
            let path = checkpoints.join(SELECTOR_FILE);
            if !path.exists() {
                return Err(missing("selector", path));
            }
            let selector = SelectionNet::from_store(
                load_params(&path)?,
                cfg.range_bins,
                captioner.hidden_size(),
                cfg.selector_inputs(),
            )?;
            mft_paragraphs(&loc, &selector, &captioner, &cfg.selection(), &videos)?
                .into_iter()
                .map(|p| p.paragraph)
                .collect()
        }
    };
    let records: Vec<ParagraphRecord> = videos
        .iter()
        .zip(&paragraphs)
        .map(|(v, p)| ParagraphRecord::from_paragraph(&v.id, p, &ds.vocab))
        .collect();
    write_paragraphs(out, &records)?;
    println!("{} paragraphs written to {}", records.len(), out.display());
    Ok(Outcome::Done)
}

/// Reference paragraphs by video id, each as a list of word lists.
type References = HashMap<String, Vec<Vec<Vec<String>>>>;

fn words(sentence: &str) -> Vec<String> {
    tokenize(sentence)
}

pub fn load_references(path: &Path, fps: f64) -> Result<References> {
    let mut refs = References::new();
    let is_manifest = path.is_dir() || path.file_name().is_some_and(|n| n == MANIFEST_FILE);
    if is_manifest {
        let ds = load_dataset(path)?;
        for v in &ds.videos {
            let paras = v
                .references
                .iter()
                .map(|p| p.iter().map(|s| words(&ds.vocab.decode(s))).collect())
                .collect();
            refs.insert(v.id.clone(), paras);
        }
    } else if path.extension().is_some_and(|e| e == "jsonl") {
        for r in read_paragraphs(path)? {
            let para = r.sentences.iter().map(|s| words(s)).collect();
            refs.entry(r.video_id).or_default().push(para);
        }
    } else {
        for a in load_annotations(path, fps)? {
            let para = a.sentences.iter().map(|s| words(&s.join(" "))).collect();
            refs.entry(a.id).or_default().push(para);
        }
    }
    Ok(refs)
}

/// Pairs generated paragraphs with their references; every generated id
/// must have references.
pub fn eval_items_from(generated: &[ParagraphRecord], refs: &References) -> Result<Vec<EvalItem>> {
    let missing: BTreeSet<String> = generated
        .iter()
        .filter(|g| !refs.contains_key(&g.video_id))
        .map(|g| g.video_id.clone())
        .collect();
    if !missing.is_empty() || generated.is_empty() {
        return Err(MftError::IdMismatch {
            missing: missing.into_iter().collect(),
        });
    }
    let mut ids: HashMap<String, Token> = HashMap::new();
    let mut intern = |ws: &[String]| -> Vec<Token> {
        ws.iter()
            .map(|w| {
                let next = ids.len() as Token;
                *ids.entry(w.clone()).or_insert(next)
            })
            .collect()
    };
    let mut items = Vec::with_capacity(generated.len());
    for g in generated {
        let hypothesis = g.sentences.iter().map(|s| intern(&words(s))).collect();
        let references = refs[&g.video_id]
            .iter()
            .map(|p| p.iter().map(|s| intern(s)).collect())
            .collect();
        items.push(EvalItem {
            id: g.video_id.clone(),
            hypothesis,
            references,
        });
    }
    Ok(items)
}

pub fn cmd_eval(generated: &Path, references: &Path, out: Option<&Path>, fps: f64) -> Result<Outcome> {
    let gen = read_paragraphs(generated)?;
    let refs = load_references(references, fps)?;
    let report = evaluate(&eval_items_from(&gen, &refs)?)?;
    print!("{}", report.to_text("MFT"));
    if let Some(out) = out {
        write_text(out, &report.to_json())?;
    }
    Ok(Outcome::Done)
}

pub fn cmd_gradcheck(config: Option<&Path>) -> Result<Outcome> {
    let setup: GradCheckSetup = match config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| MftError::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| MftError::Config(format!("gradcheck setup: {e}")))?
        }
        None => GradCheckSetup::default(),
    };
    let result = check_networks(&setup)?;
    print!("{}", result.to_text());
    if result.passed() {
        Ok(Outcome::Done)
    } else {
        Ok(Outcome::CheckFailed(format!(
            "max relative error {:.3e} ≥ {:.0e}",
            result.max_rel_error, result.tolerance
        )))
    }
}
