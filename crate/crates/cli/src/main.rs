mod config;
mod render;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use uied::classify::{ExternalClassifier, RegionClassifier};
use uied::dataset::{filter_corpus, import_hierarchy, strip_system_bars, synth_generate, ClassMap, Screen, SynthSpec};
use uied::elements::{detect_nontext, Detection, PipelineConfig};
use uied::eval::{evaluate, render_table, ChannelFilter, EvalError};
use uied::formats::{self, Detections, ManifestEntry};
use uied::geometry::BBox;
use uied::textmerge::{load_text_boxes, merge_text};

use crate::config::{ConfigArgs, RunConfig};

pub const REPORT_HEADER: &str = "#uied-report v1";

#[derive(Parser)]
#[command(name = "uied", version, about = "Detect GUI elements in screenshots and score detections against ground truth")]
struct Cli {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect elements in screenshots and write detection records
    Detect(DetectArgs),
    /// Draw the detections for one screen onto its screenshot
    Annotate(AnnotateArgs),
    /// Add scene-text boxes to existing detections
    Merge(MergeArgs),
    /// Score detections against ground truth
    Evaluate(EvaluateArgs),
    /// Generate a synthetic corpus with exact ground truth
    Synth(SynthArgs),
    /// Convert view hierarchies into a ground-truth file
    Import(ImportArgs),
}

#[derive(clap::Args)]
struct DetectArgs {
    /// Screenshots; the screen id is the file stem
    images: Vec<PathBuf>,
    /// Take screenshots from a corpus manifest instead
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Detection file to write (stdout when omitted)
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Text boxes for a single screenshot
    #[arg(long, conflicts_with = "text_dir")]
    text: Option<PathBuf>,
    /// Directory of `<screen id>.txt` text-box files
    #[arg(long)]
    text_dir: Option<PathBuf>,
    /// Directory for annotated copies of the screenshots
    #[arg(long)]
    annotate: Option<PathBuf>,
    /// Worker threads (0 = one per core)
    #[arg(short, long, default_value_t = 0)]
    jobs: usize,
}

#[derive(clap::Args)]
struct AnnotateArgs {
    image: PathBuf,
    detections: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Screen id in the detection file (defaults to the image stem)
    #[arg(long)]
    screen: Option<String>,
}

#[derive(clap::Args)]
struct MergeArgs {
    detections: PathBuf,
    /// Text boxes for one screen (see --screen)
    #[arg(long, conflicts_with = "text_dir", required_unless_present = "text_dir")]
    text: Option<PathBuf>,
    /// Directory of `<screen id>.txt` text-box files
    #[arg(long)]
    text_dir: Option<PathBuf>,
    #[arg(long)]
    screen: Option<String>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(clap::Args)]
struct EvaluateArgs {
    detections: PathBuf,
    ground_truth: PathBuf,
    /// nontext, text or both
    #[arg(long, default_value = "nontext")]
    channel: ChannelFilter,
    /// Also write the machine-readable report here
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    count: u64,
    /// TOML generator spec; unset keys take defaults
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output directory (images/, ground_truth.gt, manifest.txt)
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct ImportArgs {
    hierarchies: Vec<PathBuf>,
    #[arg(long)]
    width: u32,
    #[arg(long)]
    height: u32,
    /// TOML class map (`aliases` table and `layout_classes` list)
    #[arg(long)]
    class_map: Option<PathBuf>,
    /// Reject text-only and non-text-only screens instead of just flagging them
    #[arg(long)]
    reject_single_channel: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

/// Input the user can fix; exits with status 2.
#[derive(Debug)]
struct BadInput(anyhow::Error);

impl fmt::Display for BadInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for BadInput {}

trait BadInputExt<T> {
    fn bad_input(self) -> Result<T>;
}

impl<T, E: Into<anyhow::Error>> BadInputExt<T> for std::result::Result<T, E> {
    fn bad_input(self) -> Result<T> {
        self.map_err(|e| anyhow::Error::new(BadInput(e.into())))
    }
}

fn bad(msg: impl fmt::Display) -> anyhow::Error {
    anyhow::Error::new(BadInput(anyhow!("{msg}")))
}

fn is_bad_input(e: &anyhow::Error) -> bool {
    e.downcast_ref::<BadInput>().is_some()
}

/// Write through a temporary file in the target directory, then rename.
fn write_atomic(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("cannot write in {}", dir.display()))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        f(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn write_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, f),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
            lock.flush()?;
            Ok(())
        }
    }
}

fn open(path: &Path) -> Result<BufReader<std::fs::File>> {
    std::fs::File::open(path)
        .map(BufReader::new)
        .with_context(|| format!("cannot open {}", path.display()))
        .bad_input()
}

fn read_detections(path: &Path) -> Result<Detections> {
    formats::read_detections(open(path)?).with_context(|| format!("in {}", path.display())).bad_input()
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn build_classifier(cfg: &RunConfig) -> Result<Box<dyn RegionClassifier>> {
    let vocabulary = cfg.load_vocabulary().bad_input()?;
    Ok(match cfg.endpoint().bad_input()? {
        Some(ep) => Box::new(ExternalClassifier::connect(&ep, vocabulary, cfg.timeout()).bad_input()?),
        None => Box::new(cfg.heuristic(vocabulary)),
    })
}

struct Job {
    id: String,
    image: PathBuf,
}

fn detect_one(
    job: &Job,
    pipeline: &PipelineConfig,
    classifier: &dyn RegionClassifier,
    text: Option<&Path>,
    annotate_dir: Option<&Path>,
) -> Result<Vec<Detection>> {
    let img = image::open(&job.image)
        .with_context(|| format!("cannot read image {}", job.image.display()))
        .bad_input()?
        .to_rgb8();
    let mut dets = detect_nontext(&img, pipeline, classifier)?;
    if let Some(t) = text {
        let bounds = BBox::from_dims(img.width() as usize, img.height() as usize).ok();
        let boxes = load_text_boxes(t, bounds.as_ref()).with_context(|| format!("in {}", t.display())).bad_input()?;
        dets = merge_text(&dets, &boxes);
    }
    if let Some(dir) = annotate_dir {
        let out = render::annotate(&img, &dets);
        let path = dir.join(format!("{}.png", job.id));
        write_atomic(&path, |w| {
            let mut buf = std::io::Cursor::new(Vec::new());
            out.write_to(&mut buf, image::ImageFormat::Png)?;
            w.write_all(buf.get_ref())?;
            Ok(())
        })?;
    }
    Ok(dets)
}

fn cmd_detect(cfg: &RunConfig, args: &DetectArgs) -> Result<()> {
    let mut jobs: Vec<Job> = args.images.iter().map(|p| Job { id: stem(p), image: p.clone() }).collect();
    if let Some(m) = &args.manifest {
        let base = m.parent().unwrap_or(Path::new("")).to_path_buf();
        let entries = formats::read_manifest(open(m)?).with_context(|| format!("in {}", m.display())).bad_input()?;
        jobs.extend(entries.into_iter().map(|e| Job { id: e.id, image: base.join(e.image) }));
    }
    if jobs.is_empty() && args.manifest.is_none() {
        return Err(bad("no screenshots given"));
    }
    let mut seen = BTreeSet::new();
    for j in &jobs {
        if !seen.insert(j.id.as_str()) {
            return Err(bad(format!("screen id {:?} occurs twice", j.id)));
        }
    }
    if args.text.is_some() && jobs.len() != 1 {
        return Err(bad("--text needs exactly one screenshot; use --text-dir for several"));
    }
    if let Some(dir) = &args.annotate {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }

    let classifier = build_classifier(cfg)?;
    let pipeline = cfg.pipeline();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.jobs).build()?;
    let results: Vec<Result<Vec<Detection>>> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let text = match (&args.text, &args.text_dir) {
                    (Some(t), _) => Some(t.clone()),
                    (None, Some(dir)) => Some(dir.join(format!("{}.txt", job.id))).filter(|p| p.exists()),
                    _ => None,
                };
                detect_one(job, &pipeline, classifier.as_ref(), text.as_deref(), args.annotate.as_deref())
            })
            .collect()
    });

    let mut out = Detections::new();
    let mut failures = Vec::new();
    for (job, r) in jobs.iter().zip(results) {
        match r {
            Ok(d) => {
                out.insert(job.id.clone(), d);
            }
            Err(e) => {
                eprintln!("error: {}: {e:#}", job.image.display());
                failures.push(e);
            }
        }
    }
    if !out.is_empty() || failures.is_empty() {
        write_output(args.output.as_deref(), |w| Ok(formats::write_detections(w, &out)?))?;
    }
    match failures.len() {
        0 => Ok(()),
        n if failures.iter().all(is_bad_input) => Err(bad(format!("{n} of {} screenshots failed", jobs.len()))),
        n => bail!("{n} of {} screenshots failed", jobs.len()),
    }
}

fn pick_screen<'a, T>(map: &'a BTreeMap<String, T>, wanted: Option<&str>, fallback: &str) -> Result<(&'a String, &'a T)> {
    if let Some(id) = wanted {
        return map.get_key_value(id).ok_or_else(|| bad(format!("screen {id:?} not found in detections")));
    }
    if let Some(kv) = map.get_key_value(fallback) {
        return Ok(kv);
    }
    if map.len() == 1 {
        return Ok(map.iter().next().expect("one entry"));
    }
    Err(bad(format!("screen {fallback:?} not found in detections; pass --screen")))
}

fn cmd_annotate(args: &AnnotateArgs) -> Result<()> {
    let dets = read_detections(&args.detections)?;
    let (_, list) = pick_screen(&dets, args.screen.as_deref(), &stem(&args.image))?;
    let img = image::open(&args.image)
        .with_context(|| format!("cannot read image {}", args.image.display()))
        .bad_input()?
        .to_rgb8();
    let out = render::annotate(&img, list);
    let format = image::ImageFormat::from_path(&args.output).unwrap_or(image::ImageFormat::Png);
    write_atomic(&args.output, |w| {
        let mut buf = std::io::Cursor::new(Vec::new());
        out.write_to(&mut buf, format)?;
        w.write_all(buf.get_ref())?;
        Ok(())
    })
}

fn cmd_merge(args: &MergeArgs) -> Result<()> {
    let mut dets = read_detections(&args.detections)?;
    let load = |p: &Path| load_text_boxes(p, None).with_context(|| format!("in {}", p.display())).bad_input();
    if let Some(t) = &args.text {
        let id = pick_screen(&dets, args.screen.as_deref(), &stem(t))?.0.clone();
        let texts = load(t)?;
        let merged = merge_text(&dets[&id], &texts);
        dets.insert(id, merged);
    } else if let Some(dir) = &args.text_dir {
        for (id, list) in dets.iter_mut() {
            let p = dir.join(format!("{id}.txt"));
            if p.exists() {
                *list = merge_text(list, &load(&p)?);
            }
        }
    }
    write_output(args.output.as_deref(), |w| Ok(formats::write_detections(w, &dets)?))
}

fn cmd_evaluate(cfg: &RunConfig, args: &EvaluateArgs) -> Result<()> {
    let dets = read_detections(&args.detections)?;
    let screens = formats::read_ground_truth(open(&args.ground_truth)?)
        .with_context(|| format!("in {}", args.ground_truth.display()))
        .bad_input()?;
    let gts = screens.into_iter().map(|s| (s.id, s.elements)).collect();
    let report = match evaluate(&dets, &gts, &cfg.iou_thresholds, args.channel) {
        Err(e @ EvalError::ScreenMismatch { .. }) => return Err(anyhow::Error::new(e)).bad_input(),
        other => other.bad_input()?,
    };
    print!("{}", render_table(&report));
    if let Some(path) = &args.report {
        write_atomic(path, |w| {
            writeln!(w, "{REPORT_HEADER}")?;
            writeln!(w, "{}", serde_json::to_string(&report)?)?;
            Ok(())
        })?;
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let spec: SynthSpec = match &args.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display())).bad_input()?;
            toml::from_str(&text).with_context(|| format!("invalid spec {}", p.display())).bad_input()?
        }
        None => SynthSpec::default(),
    };
    let images = args.out.join("images");
    std::fs::create_dir_all(&images).with_context(|| format!("cannot create {}", images.display()))?;
    let mut screens: Vec<Screen> = Vec::new();
    let mut manifest = Vec::new();
    for i in 0..args.count {
        let seed = args.seed.wrapping_add(i);
        let (img, screen) = synth_generate(seed, &spec).bad_input()?;
        let rel = PathBuf::from("images").join(format!("{}.png", screen.id));
        write_atomic(&args.out.join(&rel), |w| {
            let mut buf = std::io::Cursor::new(Vec::new());
            img.write_to(&mut buf, image::ImageFormat::Png)?;
            w.write_all(buf.get_ref())?;
            Ok(())
        })?;
        manifest.push(ManifestEntry { id: screen.id.clone(), width: screen.width, height: screen.height, image: rel });
        screens.push(screen);
    }
    write_atomic(&args.out.join("ground_truth.gt"), |w| Ok(formats::write_ground_truth(w, &screens)?))?;
    write_atomic(&args.out.join("manifest.txt"), |w| Ok(formats::write_manifest(w, &manifest)?))?;
    eprintln!("wrote {} screens to {}", screens.len(), args.out.display());
    Ok(())
}

fn cmd_import(cfg: &RunConfig, args: &ImportArgs) -> Result<()> {
    let classes: ClassMap = match &args.class_map {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display())).bad_input()?;
            toml::from_str(&text).with_context(|| format!("invalid class map {}", p.display())).bad_input()?
        }
        None => ClassMap::default(),
    };
    let vocabulary = cfg.load_vocabulary().bad_input()?;
    let mut screens = Vec::new();
    let mut ids = BTreeSet::new();
    for path in &args.hierarchies {
        let s = import_hierarchy(path, args.width, args.height, &classes, &vocabulary).bad_input()?;
        let s = strip_system_bars(&s, cfg.status_bar_px, cfg.nav_bar_px).bad_input()?;
        if !ids.insert(s.id.clone()) {
            return Err(bad(format!("screen id {:?} occurs twice", s.id)));
        }
        screens.push(s);
    }
    let outcome = filter_corpus(screens, args.reject_single_channel);
    for (id, reason) in &outcome.flagged {
        eprintln!("flagged {id}: {reason}");
    }
    for (id, reason) in &outcome.rejected {
        eprintln!("rejected {id}: {reason}");
    }
    write_output(args.output.as_deref(), |w| Ok(formats::write_ground_truth(w, &outcome.kept)?))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::resolve(&cli.config).bad_input()?;
    match &cli.command {
        Command::Detect(a) => cmd_detect(&cfg, a),
        Command::Annotate(a) => cmd_annotate(a),
        Command::Merge(a) => cmd_merge(a),
        Command::Evaluate(a) => cmd_evaluate(&cfg, a),
        Command::Synth(a) => cmd_synth(a),
        Command::Import(a) => cmd_import(&cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_bad_input(&e) { 2 } else { 1 })
        }
    }
}
