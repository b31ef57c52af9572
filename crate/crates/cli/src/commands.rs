//! `signtutor` subcommands.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use signtutor_core::features::AssemblyConfig;
use signtutor_core::fusion::{evaluate, extract_clusters, select, split_dataset, train_banks, ExperimentConfig, Method, SplitStrategy};
use signtutor_core::glove::{fit_thresholds, train_histogram, GloveModel, GlovePair, LabeledFrame, ThresholdSearch, DEFAULT_BINS};
use signtutor_core::ingest::{
    generate_synthetic, load_feature_sequences, load_sequence, write_feature_sequences, LabeledSequence, SignCatalog,
    SyntheticSpec,
};
use signtutor_core::pipeline::{run_pipeline, PipelineConfig, VisionModels};
use signtutor_core::shape::{extract_hand_features, normalize_features, FeatureRanges, Hand, ShapeConfig};
use signtutor_core::{BinaryMask, ClusterMap, ModalityGroup, TemplateLibrary};

use crate::models::*;
use crate::recognize::{Outcome, Recognizer};
use crate::service::{self, AppState, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "signtutor", version, about = "Isolated sign recognition tutor: train, evaluate, recognize, serve")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit left/right glove colour models from labeled snapshots.
    TrainGloves(TrainGlovesArgs),
    /// Build a hand-shape template library from labeled masks.
    Shapes(ShapesArgs),
    /// Run the vision pipeline over sequence directories into a feature file.
    Extract(ExtractArgs),
    /// Generate a labeled synthetic feature dataset.
    Synth(SynthArgs),
    /// Train the manual, combined and non-manual HMM banks and extract clusters.
    Train(TrainArgs),
    /// Confusion tables and accuracies for every recognition method.
    Eval(EvalArgs),
    /// Judge attempts at a target sign.
    Recognize(RecognizeArgs),
    /// Run the HTTP practice service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct TrainGlovesArgs {
    /// Directory of `frame_NNNNN.png` with `left_NNNNN.png` and `right_NNNNN.png`
    /// ground-truth masks (white = glove); optional `skin_NNNNN.png` masks train
    /// the fallback face locator.
    #[arg(long)]
    pub snapshots: PathBuf,
    /// Output vision model file.
    #[arg(long)]
    pub out: PathBuf,
    /// Threshold candidates across the search window.
    #[arg(long, default_value_t = 41)]
    pub grid_steps: usize,
}

#[derive(Debug, Args)]
pub struct ShapesArgs {
    /// One sub-directory of PNG masks per shape cluster; the directory name is the cluster name.
    #[arg(long)]
    pub masks: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Masks show right hands (they are mirrored).
    #[arg(long)]
    pub right: bool,
    #[arg(long, default_value_t = 40)]
    pub max_templates: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupArg {
    Manual,
    Nonmanual,
    Combined,
}

impl From<GroupArg> for ModalityGroup {
    fn from(g: GroupArg) -> Self {
        match g {
            GroupArg::Manual => ModalityGroup::Manual,
            GroupArg::Nonmanual => ModalityGroup::Nonmanual,
            GroupArg::Combined => ModalityGroup::Combined,
        }
    }
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub vision: PathBuf,
    /// Hand-shape library; without one the shape channels are left out.
    #[arg(long)]
    pub library: Option<PathBuf>,
    /// Pipeline configuration (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = GroupArg::Combined)]
    pub group: GroupArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Sequence directories (`frame_NNNNN.png` + `meta.json`).
    #[arg(required = true)]
    pub sequences: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Synthetic spec (JSON); defaults to the acceptance spec.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    ByPerformance,
    BySubject,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Feature file.
    #[arg(long)]
    pub features: PathBuf,
    /// Model directory to write.
    #[arg(long)]
    pub out: PathBuf,
    /// seq id → subject map (JSON), required for by-subject splits.
    #[arg(long)]
    pub subjects: Option<PathBuf>,
    /// Experiment configuration (JSON); flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub states: Option<usize>,
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Make clusters symmetric.
    #[arg(long)]
    pub symmetric: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub models: PathBuf,
    /// Catalog used for group membership (within-group accuracy).
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Evaluate every sequence instead of the held-out test portion.
    #[arg(long)]
    pub all: bool,
    /// Print a JSON summary instead of tables.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["features", "frames"])))]
pub struct RecognizeArgs {
    #[arg(long)]
    pub models: PathBuf,
    /// Sign the learner attempted.
    #[arg(long)]
    pub target: String,
    /// Feature file; every sequence in it is judged.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Sequence directory, run through the vision pipeline.
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// Only judge this sequence id of the feature file.
    #[arg(long)]
    pub seq: Option<String>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub models: PathBuf,
    /// Sign catalog (JSON); defaults to the bundled 19-sign demo catalog.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Reference clip directory.
    #[arg(long)]
    pub clips: Option<PathBuf>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Service configuration (JSON); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Attempt log (JSON lines).
    #[arg(long)]
    pub store: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainGloves(a) => train_gloves(&a),
        Command::Shapes(a) => shapes(&a),
        Command::Extract(a) => extract(&a),
        Command::Synth(a) => synth(&a),
        Command::Train(a) => train(&a),
        Command::Eval(a) => eval(&a),
        Command::Recognize(a) => recognize(&a),
        Command::Serve(a) => serve(&a),
    }
}

fn load_mask(path: &Path) -> Result<BinaryMask> {
    let img = image::open(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(BinaryMask::from_gray(&img.to_luma8()))
}

fn numbered(dir: &Path, prefix: &str) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let p = e?.path();
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        if let Some(index) = name.strip_prefix(prefix).and_then(|r| r.strip_suffix(".png")) {
            out.push((index.to_string(), p));
        }
    }
    out.sort();
    Ok(out)
}

fn fit_glove(snaps: &[(image::RgbImage, BinaryMask)], steps: usize, name: &str) -> Result<GloveModel> {
    let hist = train_histogram(snaps, DEFAULT_BINS).with_context(|| format!("{name} histogram"))?;
    let labeled = snaps
        .iter()
        .map(|(f, m)| LabeledFrame::from_snapshot(f, m))
        .collect::<Result<Vec<_>, _>>()?;
    let search = ThresholdSearch {
        grid_steps: steps,
        ..ThresholdSearch::default()
    };
    let fit = fit_thresholds(&hist, &labeled, &search).with_context(|| format!("{name} thresholds"))?;
    println!(
        "{name}: t_low {:.4}  t_high {:.4}  misses {}  false alarms {}",
        fit.t_low, fit.t_high, fit.misses, fit.false_alarms
    );
    Ok(GloveModel::new(hist, fit.t_low, fit.t_high)?)
}

fn train_gloves(a: &TrainGlovesArgs) -> Result<()> {
    let frames = numbered(&a.snapshots, "frame_")?;
    if frames.is_empty() {
        bail!("no frame_NNNNN.png snapshots in {}", a.snapshots.display());
    }
    let mut sets: HashMap<&str, Vec<(image::RgbImage, BinaryMask)>> = HashMap::new();
    for (index, path) in &frames {
        let frame = image::open(path).with_context(|| format!("reading {}", path.display()))?.to_rgb8();
        for kind in ["left", "right", "skin"] {
            let mask_path = a.snapshots.join(format!("{kind}_{index}.png"));
            if mask_path.exists() {
                sets.entry(kind).or_default().push((frame.clone(), load_mask(&mask_path)?));
            } else if kind != "skin" {
                bail!("missing {}", mask_path.display());
            }
        }
    }
    let models = VisionModels {
        gloves: GlovePair {
            left: fit_glove(&sets["left"], a.grid_steps, "left")?,
            right: fit_glove(&sets["right"], a.grid_steps, "right")?,
        },
        skin: sets.get("skin").map(|s| fit_glove(s, a.grid_steps, "skin")).transpose()?,
        library: None,
    };
    write_json(&a.out, &models)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn shapes(a: &ShapesArgs) -> Result<()> {
    let hand = if a.right { Hand::Right } else { Hand::Left };
    let mut dirs: Vec<PathBuf> = fs::read_dir(&a.masks)
        .with_context(|| format!("listing {}", a.masks.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let mut raw = Vec::new();
    let mut names = Vec::new();
    for (id, dir) in dirs.iter().enumerate() {
        names.push(dir.file_name().unwrap_or_default().to_string_lossy().to_string());
        let mut files: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "png"))
            .collect();
        files.sort();
        for f in files {
            let v = extract_hand_features(&load_mask(&f)?, hand, &ShapeConfig::default())
                .with_context(|| format!("shape of {}", f.display()))?;
            raw.push((id, v));
        }
    }
    let vectors: Vec<_> = raw.iter().map(|r| r.1).collect();
    let ranges = FeatureRanges::fit(&vectors).ok_or_else(|| anyhow!("no masks under {}", a.masks.display()))?;
    let exemplars: Vec<_> = raw.iter().map(|(id, v)| (*id, normalize_features(v, &ranges))).collect();
    let mut lib = TemplateLibrary::from_exemplars(&exemplars, a.max_templates, Some(ranges))?;
    for c in &mut lib.clusters {
        c.name = names[c.id].clone();
    }
    write_json(&a.out, &lib)?;
    println!("{} clusters from {} masks → {}", lib.clusters.len(), raw.len(), a.out.display());
    Ok(())
}

fn extract(a: &ExtractArgs) -> Result<()> {
    let mut vision: VisionModels = read_json(&a.vision)?;
    if let Some(p) = &a.library {
        vision.library = Some(read_json(p)?);
    }
    let mut cfg: PipelineConfig = a.config.as_deref().map(read_json).transpose()?.unwrap_or_default();
    let has_ranges = cfg.assembly.shape_ranges.is_some() || vision.library.as_ref().is_some_and(|l| l.ranges.is_some());
    if cfg.assembly.shape && !has_ranges {
        eprintln!("note: no hand-shape library; shape channels left out");
        cfg.assembly = AssemblyConfig {
            shape: false,
            ..cfg.assembly
        };
    }
    let group = ModalityGroup::from(a.group);
    let mut out = Vec::new();
    for dir in &a.sequences {
        let seq = load_sequence(dir)?;
        let id = dir.file_name().unwrap_or_default().to_string_lossy().to_string();
        let result = run_pipeline(&seq, &vision, &cfg, group).with_context(|| format!("pipeline on {}", dir.display()))?;
        println!("{id}: {} frames → {} feature rows", seq.len(), result.features.len());
        out.push(LabeledSequence {
            label: seq.label.clone().unwrap_or_else(|| id.clone()),
            seq_id: id,
            features: result.features,
        });
    }
    let layout = cfg.assembly.layout(group)?;
    let w = BufWriter::new(File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?);
    write_feature_sequences(w, &layout, &out)?;
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<()> {
    let spec: SyntheticSpec = a.spec.as_deref().map(read_json).transpose()?.unwrap_or_else(SyntheticSpec::acceptance);
    let d = generate_synthetic(&spec)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let w = BufWriter::new(File::create(a.out.join(FEATURES_FILE))?);
    write_feature_sequences(w, &d.layout, &d.sequences)?;
    write_json(&a.out.join(SUBJECTS_FILE), &d.subjects)?;
    write_json(&a.out.join(CATALOG_FILE), &d.catalog)?;
    write_json(&a.out.join(SPEC_FILE), &spec)?;
    println!(
        "{} sequences of {} classes ({} features per frame) → {}",
        d.sequences.len(),
        d.catalog.signs.len(),
        d.layout.dim(),
        a.out.display()
    );
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    let mut cfg: ExperimentConfig = a.config.as_deref().map(read_json).transpose()?.unwrap_or_default();
    if let Some(n) = a.states {
        cfg.train.n_states = n;
    }
    if let Some(s) = a.split {
        cfg.split.strategy = match s {
            SplitArg::ByPerformance => SplitStrategy::ByPerformance,
            SplitArg::BySubject => SplitStrategy::BySubject,
        };
    }
    if let Some(seed) = a.seed {
        cfg.split.seed = seed;
    }
    cfg.symmetric_clusters |= a.symmetric;

    let seqs = load_feature_sequences(&a.features)?;
    let subjects = a.subjects.as_deref().map(read_json).transpose()?;
    let started = Instant::now();
    let split = split_dataset(&seqs, subjects.as_ref(), &cfg.split)?;
    let banks = train_banks(&select(&seqs, &split.train), &cfg.train)?;
    let validation = select(&seqs, &split.validation);
    let clusters = if validation.is_empty() {
        eprintln!("note: empty validation portion; every sign is its own cluster");
        ClusterMap::singletons(banks.ids())
    } else {
        extract_clusters(&banks, &validation, cfg.symmetric_clusters)?
    };

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    fs::write(a.out.join(BANKS_FILE), banks.to_json()?)?;
    write_json(&a.out.join(CLUSTERS_FILE), &clusters)?;
    write_json(&a.out.join(SPLIT_FILE), &split)?;
    write_json(&a.out.join("train-config.json"), &cfg)?;
    println!(
        "trained {} signs on {} sequences ({} validation, {} held out) in {:.1}s → {}",
        banks.ids().len(),
        split.train.len(),
        split.validation.len(),
        split.test.len(),
        started.elapsed().as_secs_f64(),
        a.out.display()
    );
    for (id, members) in &clusters.clusters {
        if members.len() > 1 {
            println!("  cluster {id}: {}", members.join(", "));
        }
    }
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let models = ModelDir::load(&a.models)?;
    let seqs = load_feature_sequences(&a.features)?;
    let test = match (&models.split, a.all) {
        (Some(split), false) => select(&seqs, &split.test),
        _ => seqs.iter().collect(),
    };
    if test.is_empty() {
        bail!("no sequences to evaluate (held-out ids not found in {})", a.features.display());
    }
    let groups: Option<HashMap<String, String>> = a
        .catalog
        .as_deref()
        .map(SignCatalog::load)
        .transpose()?
        .map(|c| c.signs.into_iter().map(|s| (s.id, s.group)).collect());
    let reports = Method::ALL
        .iter()
        .map(|&m| evaluate(&models.banks, &models.clusters, m, &test, groups.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;
    let acc = |m: Method| reports.iter().find(|r| r.method == m).map_or(0.0, |r| r.accuracy);
    let ordered = acc(Method::Manual) <= acc(Method::Combined) && acc(Method::Combined) <= acc(Method::Sequential);
    if a.json {
        let summary = json!({
            "sequences": test.len(),
            "reports": reports.iter().map(|r| json!({
                "method": r.method.name(),
                "accuracy": r.accuracy,
                "within_group_accuracy": r.within_group_accuracy,
            })).collect::<Vec<_>>(),
            "ordering_holds": ordered,
        });
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        println!("evaluated {} sequences\n", test.len());
        for r in &reports {
            println!("{}", r.render());
        }
        println!(
            "ordering manual <= combined <= fused: {}",
            if ordered { "holds" } else { "violated" }
        );
    }
    Ok(())
}

fn verdict_line(seq_id: &str, o: &Outcome) -> String {
    format!(
        "{seq_id}: {} ({}) - {}",
        serde_json::to_value(o.verdict.kind)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default(),
        o.verdict.kind.phrase(),
        o.verdict.explanation
    )
}

fn recognize(a: &RecognizeArgs) -> Result<()> {
    let rec = Recognizer::from(ModelDir::load(&a.models)?);
    if !rec.knows(&a.target) {
        bail!("no trained model for sign {:?}", a.target);
    }
    let mut results = Vec::new();
    if let Some(path) = &a.features {
        let seqs = load_feature_sequences(path)?;
        let chosen: Vec<_> = seqs
            .iter()
            .filter(|s| a.seq.as_ref().is_none_or(|id| &s.seq_id == id))
            .collect();
        if chosen.is_empty() {
            bail!("no matching sequence in {}", path.display());
        }
        for s in chosen {
            results.push((s.seq_id.clone(), rec.recognize_features(&a.target, &s.features)));
        }
    } else if let Some(dir) = &a.frames {
        let id = dir.file_name().unwrap_or_default().to_string_lossy().to_string();
        let outcome = match rec.extract_frames(dir) {
            Ok(f) => rec.recognize_features(&a.target, &f),
            Err(e) => Outcome::failure(e),
        };
        results.push((id, outcome));
    }
    let mut out = io::stdout().lock();
    for (id, o) in &results {
        let line = if a.json {
            serde_json::to_string(&json!({ "seq_id": id, "outcome": o }))?
        } else {
            verdict_line(id, o)
        };
        if let Err(e) = writeln!(out, "{line}") {
            // reader went away (e.g. `| head`)
            if e.kind() == io::ErrorKind::BrokenPipe {
                return Ok(());
            }
            return Err(e.into());
        }
    }
    Ok(())
}

fn serve(a: &ServeArgs) -> Result<()> {
    let mut cfg: ServiceConfig = a.config.as_deref().map(read_json).transpose()?.unwrap_or_default();
    if let Some(p) = a.port {
        cfg.port = p;
    }
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    if a.clips.is_some() {
        cfg.clips = a.clips.clone();
    }
    if a.store.is_some() {
        cfg.store = a.store.clone();
    }
    let catalog = match &a.catalog {
        Some(p) => SignCatalog::load(p)?,
        None => SignCatalog::demo(),
    };
    let models = ModelDir::load(&a.models)?;
    let state = AppState::new(Recognizer::from(models), catalog, &cfg)?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(service::serve(state, cfg.port))
}
