//! Command-line front end: training, description, matching, evaluation and
//! throughput benchmarks. Every command returns a [`Report`] whose header
//! echoes the full configuration.

pub mod report;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bindesc::bad::{self, BadModel};
use bindesc::bad_train::{train_bad, BadTrainConfig};
use bindesc::dataset::{self, make_verification_pairs, LabeledPatchSet};
use bindesc::descriptor::{read_dump, write_dump, BinaryDescriptor};
use bindesc::hashsift::{self, train_hashsift, HashSiftModel, HashTrainConfig};
use bindesc::imaging::{self, AugmentParams, GrayImage, Keypoint, Patch, DEFAULT_CROP_FACTOR};
use bindesc::matcheval::{self, brute_force_match, matching_map, mutual_nn, verification_eval};
use bindesc::sift::sift_describe;

pub use report::{Metric, Report};

/// Environment variable that overrides `--threads`.
pub const THREADS_ENV: &str = "DESC_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "bindesc",
    version,
    about = "Learned binary patch descriptors: BAD and HashSIFT"
)]
pub struct Cli {
    /// Worker threads (default: all cores). DESC_THREADS overrides it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Greedy BAD feature selection.
    TrainBad(TrainBadArgs),
    /// HashSIFT projection learning with Adam.
    TrainHashsift(TrainHashArgs),
    /// Describe patches with a BAD or HashSIFT model into a DESC dump.
    Describe(DescribeArgs),
    /// Hamming nearest-neighbour matching between two dumps.
    Match(MatchArgs),
    /// FPR-95 verification or matching AP.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Description throughput.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataFormat {
    /// `patches*.bmp` mosaics plus `info.txt`.
    Brown,
    /// One directory per label holding 32x32 PNG/PGM patches.
    Dir,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Patch corpus root.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "brown")]
    pub format: DataFormat,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Also write the report as CSV here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Also write the report as JSON here.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainBadArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 256)]
    pub bits: usize,
    /// Triplets per iteration.
    #[arg(long, default_value_t = 512)]
    pub triplets: usize,
    /// Candidate box pairs per iteration.
    #[arg(long, default_value_t = 1000)]
    pub candidates: usize,
    #[arg(long, default_value_t = 0.2)]
    pub margin: f64,
    /// Threshold grid step.
    #[arg(long, default_value_t = 0.1)]
    pub precision: f64,
    #[arg(long)]
    pub no_swap: bool,
    #[arg(long)]
    pub no_augment: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-iteration selection trace (CSV).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Args)]
pub struct TrainHashArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 256)]
    pub bits: usize,
    #[arg(long, default_value_t = 2e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.4)]
    pub margin: f64,
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,
    /// Triplets per step.
    #[arg(long, default_value_t = 512)]
    pub batch: usize,
    /// Standard deviation of the initial projection.
    #[arg(long, default_value_t = 0.25)]
    pub init_sigma: f64,
    #[arg(long)]
    pub rootsift: bool,
    #[arg(long)]
    pub no_swap: bool,
    #[arg(long)]
    pub no_augment: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-step batch loss (CSV).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Args)]
pub struct DescribeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Patch corpus to describe, in corpus order.
    #[arg(long, conflicts_with_all = ["image", "keypoints"])]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "brown")]
    pub format: DataFormat,
    /// Image to cut patches from (with --keypoints).
    #[arg(long, requires = "keypoints")]
    pub image: Option<PathBuf>,
    /// One `x y diameter orientation_radians` line per keypoint.
    #[arg(long, requires = "image")]
    pub keypoints: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_CROP_FACTOR)]
    pub crop_factor: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long)]
    pub train: PathBuf,
    /// Keep mutual nearest neighbours only.
    #[arg(long)]
    pub mutual: bool,
    /// Matches CSV (`query_idx,train_idx,distance`).
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// FPR-95 on same/different-label patch pairs.
    Verification(VerificationArgs),
    /// Average precision of nearest-neighbour matches against ground truth.
    Matching(MatchingArgs),
}

#[derive(Debug, Args)]
pub struct VerificationArgs {
    /// BAD or HashSIFT model; omit and pass --sift for the float baseline.
    #[arg(long, required_unless_present = "sift")]
    pub model: Option<PathBuf>,
    /// Evaluate raw SIFT with Euclidean distance.
    #[arg(long, conflicts_with = "model")]
    pub sift: bool,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 5000)]
    pub positives: usize,
    #[arg(long, default_value_t = 5000)]
    pub negatives: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Args)]
pub struct MatchingArgs {
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long)]
    pub train: PathBuf,
    /// One `query_idx train_idx` line per correct correspondence.
    #[arg(long)]
    pub ground_truth: PathBuf,
    #[arg(long)]
    pub mutual: bool,
    /// Precision-recall curve CSV (`threshold,precision,recall`).
    #[arg(long)]
    pub curve: Option<PathBuf>,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Patches described per run.
    #[arg(long, default_value_t = 2000)]
    pub patches: usize,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// Optional corpus to draw patches from; random patches otherwise.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "brown")]
    pub format: DataFormat,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub report: ReportArgs,
}

/// Thread count from `DESC_THREADS`, then `--threads`, then all cores.
pub fn resolve_threads(flag: Option<usize>) -> Result<usize> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .with_context(|| format!("{THREADS_ENV}={v} is not a thread count"))?;
        if n == 0 {
            bail!("{THREADS_ENV} must be positive");
        }
        return Ok(n);
    }
    match flag {
        Some(0) => bail!("--threads must be positive"),
        Some(n) => Ok(n),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Runs a parsed command line inside a pool of the resolved size.
pub fn run(cli: Cli) -> Result<Report> {
    let threads = resolve_threads(cli.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()?;
    let (mut report, out) = pool.install(|| -> Result<(Report, &ReportArgs)> {
        Ok(match &cli.command {
            Command::TrainBad(a) => (cmd_train_bad(a)?, &a.report),
            Command::TrainHashsift(a) => (cmd_train_hashsift(a)?, &a.report),
            Command::Describe(a) => (cmd_describe(a)?, &a.report),
            Command::Match(a) => (cmd_match(a)?, &a.report),
            Command::Eval(EvalCommand::Verification(a)) => (cmd_eval_verification(a)?, &a.report),
            Command::Eval(EvalCommand::Matching(a)) => (cmd_eval_matching(a)?, &a.report),
            Command::Bench(a) => (cmd_bench(a)?, &a.report),
        })
    })?;
    report
        .config
        .insert(0, ("threads".into(), threads.to_string()));
    report.write(out.report.as_deref(), out.json.as_deref())?;
    Ok(report)
}

fn load_set<T: bindesc::Real>(path: &Path, format: DataFormat) -> Result<LabeledPatchSet<T>> {
    let set = match format {
        DataFormat::Brown => dataset::load_brown(path),
        DataFormat::Dir => dataset::load_patch_dir(path),
    }
    .with_context(|| format!("loading {} corpus {}", format_name(format), path.display()))?;
    if set.is_empty() {
        bail!("corpus {} holds no patches", path.display());
    }
    Ok(set)
}

fn format_name(f: DataFormat) -> &'static str {
    match f {
        DataFormat::Brown => "brown",
        DataFormat::Dir => "dir",
    }
}

pub fn cmd_train_bad(a: &TrainBadArgs) -> Result<Report> {
    let cfg = BadTrainConfig {
        bits: a.bits,
        triplets: a.triplets,
        candidates: a.candidates,
        margin: a.margin,
        precision: a.precision,
        swap: !a.no_swap,
        augment: (!a.no_augment).then(AugmentParams::mild),
        seed: a.seed,
    };
    cfg.validate()?;
    let set = load_set::<f64>(&a.data.data, a.data.format)?;
    let (model, trace) = train_bad(&set, &cfg)?;
    bad::save_model(&model, &a.out)?;
    if let Some(p) = &a.trace {
        trace.write_csv(p)?;
    }
    let mut r = Report::new("train-bad");
    r.setting("data", a.data.data.display())
        .setting("format", format_name(a.data.format))
        .setting("bits", cfg.bits)
        .setting("triplets", cfg.triplets)
        .setting("candidates", cfg.candidates)
        .setting("margin", cfg.margin)
        .setting("precision", cfg.precision)
        .setting("swap", cfg.swap)
        .setting("augment", cfg.augment.is_some())
        .setting("seed", cfg.seed)
        .setting("out", a.out.display());
    r.metric("patches", set.len())
        .metric("labels", set.distinct_labels())
        .metric(
            "final_heldout_loss",
            trace.records.last().map_or(0.0, |t| t.heldout_loss),
        );
    Ok(r)
}

pub fn cmd_train_hashsift(a: &TrainHashArgs) -> Result<Report> {
    let cfg = HashTrainConfig {
        bits: a.bits,
        batch: a.batch,
        steps: a.steps,
        learning_rate: a.lr,
        margin: a.margin,
        init_sigma: a.init_sigma,
        augment: (!a.no_augment).then(AugmentParams::mild),
        use_rootsift: a.rootsift,
        swap: !a.no_swap,
        seed: a.seed,
        ..HashTrainConfig::default()
    };
    cfg.validate()?;
    let set = load_set::<f64>(&a.data.data, a.data.format)?;
    let (model, losses) = train_hashsift(&set, &cfg)?;
    hashsift::save_model(&model, &a.out)?;
    if let Some(p) = &a.trace {
        let mut csv = String::from("step,loss\n");
        for (i, l) in losses.iter().enumerate() {
            csv.push_str(&format!("{},{l}\n", i + 1));
        }
        fs::write(p, csv).with_context(|| format!("writing trace {}", p.display()))?;
    }
    let mut r = Report::new("train-hashsift");
    r.setting("data", a.data.data.display())
        .setting("format", format_name(a.data.format))
        .setting("bits", cfg.bits)
        .setting("lr", cfg.learning_rate)
        .setting("margin", cfg.margin)
        .setting("steps", cfg.steps)
        .setting("batch", cfg.batch)
        .setting("init_sigma", cfg.init_sigma)
        .setting("rootsift", cfg.use_rootsift)
        .setting("swap", cfg.swap)
        .setting("augment", cfg.augment.is_some())
        .setting("seed", cfg.seed)
        .setting("out", a.out.display());
    r.metric("patches", set.len())
        .metric("first_loss", losses.first().copied().unwrap_or(0.0))
        .metric("last_loss", losses.last().copied().unwrap_or(0.0));
    Ok(r)
}

/// A model file of either kind, recognised by its first line.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Bad(BadModel),
    HashSift(HashSiftModel<f64>),
}

impl AnyModel {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading model {}", path.display()))?;
        match text.lines().next().unwrap_or("").trim_end() {
            l if l.starts_with("BADMODEL") => Ok(AnyModel::Bad(bad::parse_model(path, &text)?)),
            l if l.starts_with("HASHSIFT") => {
                Ok(AnyModel::HashSift(hashsift::parse_model(path, &text)?))
            }
            l => bail!("{}: unrecognised model header `{l}`", path.display()),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AnyModel::Bad(_) => "bad",
            AnyModel::HashSift(_) => "hashsift",
        }
    }

    pub fn bits(&self) -> usize {
        match self {
            AnyModel::Bad(m) => m.bits(),
            AnyModel::HashSift(m) => m.bits(),
        }
    }

    /// BAD runs in `f32`, HashSIFT in `f64`.
    pub fn describe(&self, patches: &[Patch<f64>]) -> Vec<BinaryDescriptor> {
        match self {
            AnyModel::Bad(m) => {
                let p32: Vec<Patch<f32>> = patches.iter().map(Patch::cast).collect();
                bad::describe_batch(&p32, m)
            }
            AnyModel::HashSift(m) => m.describe_batch(patches),
        }
    }

    pub fn describe_one(&self, patch: &Patch<f64>) -> BinaryDescriptor {
        match self {
            AnyModel::Bad(m) => bad::describe(&patch.cast::<f32>(), m),
            AnyModel::HashSift(m) => m.describe(patch),
        }
    }
}

/// Parses `x y diameter orientation` lines; `#` starts a comment.
pub fn parse_keypoints(path: &Path, text: &str) -> Result<Vec<Keypoint>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("{}:{}: malformed number", path.display(), i + 1))?;
        if v.len() != 4 {
            bail!(
                "{}:{}: expected `x y diameter orientation`, got {} fields",
                path.display(),
                i + 1,
                v.len()
            );
        }
        out.push(
            Keypoint::new(v[0], v[1], v[2], v[3])
                .with_context(|| format!("{}:{}", path.display(), i + 1))?,
        );
    }
    Ok(out)
}

fn read_image(path: &Path) -> Result<GrayImage> {
    let img = image::open(path)
        .with_context(|| format!("reading image {}", path.display()))?
        .to_luma8();
    let (w, h) = img.dimensions();
    Ok(GrayImage::new(w as usize, h as usize, img.into_raw())?)
}

pub fn cmd_describe(a: &DescribeArgs) -> Result<Report> {
    let model = AnyModel::load(&a.model)?;
    let patches: Vec<Patch<f64>> = match (&a.data, &a.image, &a.keypoints) {
        (Some(d), _, _) => load_set::<f64>(d, a.format)?.patches().to_vec(),
        (None, Some(img), Some(kp)) => {
            let image = read_image(img)?;
            let text = fs::read_to_string(kp)
                .with_context(|| format!("reading keypoints {}", kp.display()))?;
            parse_keypoints(kp, &text)?
                .iter()
                .map(|k| imaging::normalize_patch(&image, k, a.crop_factor))
                .collect::<bindesc::Result<_>>()?
        }
        _ => bail!("describe needs --data or --image with --keypoints"),
    };
    let descs = model.describe(&patches);
    write_dump(&a.out, model.bits(), &descs)?;
    let mut r = Report::new("describe");
    r.setting("model", a.model.display())
        .setting("kind", model.kind())
        .setting("out", a.out.display());
    if let Some(d) = &a.data {
        r.setting("data", d.display())
            .setting("format", format_name(a.format));
    } else {
        r.setting("image", a.image.as_ref().expect("checked").display())
            .setting(
                "keypoints",
                a.keypoints.as_ref().expect("checked").display(),
            )
            .setting("crop_factor", a.crop_factor);
    }
    r.metric("bits", model.bits())
        .metric("descriptors", descs.len());
    Ok(r)
}

fn load_dump(path: &Path) -> Result<(usize, Vec<BinaryDescriptor>)> {
    read_dump(path).with_context(|| format!("reading dump {}", path.display()))
}

fn match_dumps(
    query: &Path,
    train: &Path,
    mutual: bool,
) -> Result<(usize, Vec<matcheval::MatchResult>)> {
    let (kq, q) = load_dump(query)?;
    let (kt, t) = load_dump(train)?;
    if kq != kt {
        bail!(
            "descriptor lengths differ: {} has {kq} bits, {} has {kt}",
            query.display(),
            train.display()
        );
    }
    let matches = if mutual {
        mutual_nn(&q, &t)?
    } else {
        brute_force_match(&q, &t)?
    };
    Ok((q.len(), matches))
}

pub fn cmd_match(a: &MatchArgs) -> Result<Report> {
    let (queries, matches) = match_dumps(&a.query, &a.train, a.mutual)?;
    let mut r = Report::new("match");
    r.setting("query", a.query.display())
        .setting("train", a.train.display())
        .setting("mutual", a.mutual)
        .setting("out", a.out.display());
    let mut csv = r.header();
    csv.push_str("query_idx,train_idx,distance\n");
    for m in &matches {
        csv.push_str(&format!("{},{},{}\n", m.query_idx, m.train_idx, m.distance));
    }
    fs::write(&a.out, csv).with_context(|| format!("writing matches {}", a.out.display()))?;
    r.metric("queries", queries)
        .metric("matches", matches.len());
    Ok(r)
}

pub fn cmd_eval_verification(a: &VerificationArgs) -> Result<Report> {
    let set = load_set::<f64>(&a.data.data, a.data.format)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let pairs = make_verification_pairs(&set, a.positives, a.negatives, &mut rng)?;
    let mut r = Report::new("eval verification");
    let result = match &a.model {
        Some(path) => {
            let model = AnyModel::load(path)?;
            r.setting("model", path.display())
                .setting("kind", model.kind());
            verification_eval(set.patches(), &pairs, |p| model.describe_one(p))?
        }
        None => {
            r.setting("model", "sift-euclidean");
            matcheval::verification_eval_float(set.patches(), &pairs, |p| {
                sift_describe(p).values().to_vec()
            })?
        }
    };
    r.setting("data", a.data.data.display())
        .setting("format", format_name(a.data.format))
        .setting("positives", a.positives)
        .setting("negatives", a.negatives)
        .setting("seed", a.seed);
    r.metric("fpr95", result.fpr95)
        .metric("positives", result.positives)
        .metric("negatives", result.negatives);
    Ok(r)
}

/// Parses `query_idx train_idx` lines; `#` starts a comment.
pub fn parse_ground_truth(path: &Path, text: &str) -> Result<HashSet<(usize, usize)>> {
    let mut gt = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: Vec<usize> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("{}:{}: expected two indices", path.display(), i + 1))?;
        if v.len() != 2 {
            bail!(
                "{}:{}: expected `query_idx train_idx`",
                path.display(),
                i + 1
            );
        }
        gt.insert((v[0], v[1]));
    }
    Ok(gt)
}

pub fn cmd_eval_matching(a: &MatchingArgs) -> Result<Report> {
    let text = fs::read_to_string(&a.ground_truth)
        .with_context(|| format!("reading ground truth {}", a.ground_truth.display()))?;
    let gt = parse_ground_truth(&a.ground_truth, &text)?;
    let (_, matches) = match_dumps(&a.query, &a.train, a.mutual)?;
    let curve = matching_map(&matches, &gt)?;
    let correct = matches
        .iter()
        .filter(|m| gt.contains(&(m.query_idx, m.train_idx)))
        .count();
    let mut r = Report::new("eval matching");
    r.setting("query", a.query.display())
        .setting("train", a.train.display())
        .setting("ground_truth", a.ground_truth.display())
        .setting("mutual", a.mutual);
    if let Some(p) = &a.curve {
        let mut csv = r.header();
        csv.push_str("threshold,precision,recall\n");
        for pt in &curve.points {
            csv.push_str(&format!(
                "{},{},{}\n",
                pt.threshold, pt.precision, pt.recall
            ));
        }
        fs::write(p, csv).with_context(|| format!("writing curve {}", p.display()))?;
    }
    r.metric("ap", curve.average_precision)
        .metric("matches", matches.len())
        .metric("correct", correct)
        .metric("ground_truth", gt.len());
    Ok(r)
}

/// Mean and sample standard deviation.
pub fn mean_std(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Times description only; loading and model parsing are excluded.
pub fn cmd_bench(a: &BenchArgs) -> Result<Report> {
    if a.repeats == 0 || a.patches == 0 {
        bail!("bench needs positive --patches and --repeats");
    }
    let model = AnyModel::load(&a.model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let patches: Vec<Patch<f64>> = match &a.data {
        Some(d) => {
            let set = load_set::<f64>(d, a.format)?;
            (0..a.patches)
                .map(|i| set.patch(i % set.len()).clone())
                .collect()
        }
        None => (0..a.patches)
            .map(|_| Patch::from_fn(|_, _| f64::from(rng.random_range(0u8..=255))))
            .collect(),
    };
    let mut times = Vec::with_capacity(a.repeats);
    match &model {
        AnyModel::Bad(m) => {
            let p32: Vec<Patch<f32>> = patches.iter().map(Patch::cast).collect();
            for _ in 0..a.repeats {
                let start = Instant::now();
                std::hint::black_box(bad::describe_batch(&p32, m));
                times.push(start.elapsed().as_secs_f64() * 1e3);
            }
        }
        AnyModel::HashSift(m) => {
            for _ in 0..a.repeats {
                let start = Instant::now();
                std::hint::black_box(m.describe_batch(&patches));
                times.push(start.elapsed().as_secs_f64() * 1e3);
            }
        }
    }
    let (mean, std) = mean_std(&times);
    let mut r = Report::new("bench");
    r.setting("model", a.model.display())
        .setting("kind", model.kind())
        .setting("patches", a.patches)
        .setting("repeats", a.repeats)
        .setting("seed", a.seed)
        .setting("threads_active", rayon::current_num_threads());
    r.metric("bits", model.bits())
        .metric("mean_ms", mean)
        .metric("std_ms", std)
        .metric(
            "min_ms",
            times.iter().copied().fold(f64::INFINITY, f64::min),
        );
    Ok(r)
}
