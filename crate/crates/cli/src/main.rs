mod config;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde_json::Value;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use svdno::alloc_meter::{activate, CountingAllocator};
use svdno::model::load_checkpoint;
use svdno::objectives::{write_metrics_csv, METRICS_HEADER};
use svdno::par::Execution;
use svdno::pde::dataset::{dataset_paths, small_split_warning};
use svdno::pde::{build_dataset, read_dataset, write_dataset, Dataset, PdeKind, PdeSpec};
use svdno::train::{
    evaluate, per_sample_errors, run_ablation, sample_beta, scaling_probe, train, write_ablation_csv, AblationKind,
    RunConfig, ScalingConfig,
};
use svdno::{Error, Result};

#[global_allocator]
static ALLOC: CountingAllocator = CountingAllocator;

/// Default output root when `SVDNO_OUT` is unset.
const DEFAULT_ROOT: &str = "runs";

#[derive(Parser)]
#[command(name = "svdno", version, about = "SVD neural operator: data, training and analysis")]
struct Cli {
    /// Worker threads for data generation, training and evaluation.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a PDE dataset.
    Generate(GenerateArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split.
    Eval(EvalArgs),
    /// Paired SVD-NO vs ablation runs over seeds.
    Ablate(AblateArgs),
    /// Time and memory of one integral layer against the rank.
    Scaling(ScalingArgs),
    /// Spatial variability of dataset targets.
    Variability(VariabilityArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Pde {
    DiffusionReaction,
    AllenCahn,
    Darcy,
}

impl From<Pde> for PdeKind {
    fn from(p: Pde) -> Self {
        match p {
            Pde::DiffusionReaction => PdeKind::DiffusionReaction1d,
            Pde::AllenCahn => PdeKind::AllenCahn1d,
            Pde::Darcy => PdeKind::Darcy2d,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    DenseMlp,
    Mercer,
    NoOrtho,
}

impl From<Kind> for AblationKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::DenseMlp => AblationKind::DenseMlp,
            Kind::Mercer => AblationKind::Mercer,
            Kind::NoOrtho => AblationKind::NoOrtho,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    pde: Pde,
    /// Number of samples.
    #[arg(long)]
    n: usize,
    /// Points per spatial axis.
    #[arg(long, default_value_t = 64)]
    grid: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output stem; `<stem>.json` and `<stem>.bin` are written.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Run configuration sources shared by `train` and `ablate`.
#[derive(Args)]
struct RunArgs {
    /// TOML config file with dotted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset stem.
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    rank: Option<usize>,
    /// Any config key, e.g. `--set model.lifting_dim=32`. Repeatable.
    #[arg(long = "set", value_parser = config::parse_override)]
    set: Vec<(String, Value)>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum)]
    kind: Kind,
    /// Number of seeds; seeds 0..N are used.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScalingArgs {
    /// Config file; `model.lifting_dim` sets the layer width.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset stem; its point count is used when `--sizes` is absent.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [2, 4, 8, 16])]
    ranks: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 7)]
    repeats: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VariabilityArgs {
    #[arg(long)]
    data: PathBuf,
    /// With a checkpoint, also pairs each test sample's variability with
    /// its error.
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn out_dir(given: Option<PathBuf>, command: &str) -> PathBuf {
    given.unwrap_or_else(|| {
        let root = std::env::var_os("SVDNO_OUT").map_or_else(|| PathBuf::from(DEFAULT_ROOT), PathBuf::from);
        root.join(command)
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn generate(args: GenerateArgs) -> Result<()> {
    let kind = PdeKind::from(args.pde);
    let spec = PdeSpec::new(kind, args.grid);
    let stem = args
        .out
        .unwrap_or_else(|| out_dir(None, "data").join(format!("{}-g{}-n{}-s{}", args.pde.name(), args.grid, args.n, args.seed)));
    if let Some(w) = small_split_warning(args.n) {
        eprintln!("warning: {w}");
    }
    let ds = build_dataset(&spec, args.n, args.seed, [0.8, 0.1, 0.1], Execution::Parallel)?;
    if let Some(parent) = stem.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let (json, bin) = write_dataset(&stem, &ds)?;
    println!("samples: {}", ds.len());
    println!("grid: {:?}", ds.grid.extents());
    for p in [json, bin] {
        println!("{}: {} bytes", p.display(), fs::metadata(&p)?.len());
    }
    Ok(())
}

impl Pde {
    fn name(self) -> &'static str {
        match self {
            Pde::DiffusionReaction => "diffusion-reaction",
            Pde::AllenCahn => "allen-cahn",
            Pde::Darcy => "darcy",
        }
    }
}

fn run_config(args: &RunArgs) -> Result<RunConfig> {
    let text = args.config.as_ref().map(fs::read_to_string).transpose()?;
    let mut overrides = Vec::new();
    if let Some(d) = &args.data {
        overrides.push(("data".to_string(), Value::from(d.as_str())));
    }
    let mut put = |k: &str, v: Option<Value>| {
        if let Some(v) = v {
            overrides.push((k.to_string(), v));
        }
    };
    put("epochs", args.epochs.map(Value::from));
    put("seed", args.seed.map(Value::from));
    put("batch_size", args.batch_size.map(Value::from));
    put("adam.lr", args.lr.map(Value::from));
    put("model.rank", args.rank.map(Value::from));
    overrides.extend(args.set.iter().cloned());
    let cfg = config::merge(text.as_deref(), &overrides)?;
    if cfg.data.is_empty() {
        return Err(Error::Config("no dataset: pass --data or set `data` in the config".into()));
    }
    Ok(cfg)
}

fn load_data(stem: impl AsRef<Path>) -> Result<Dataset> {
    let stem = stem.as_ref();
    let (json, _) = dataset_paths(stem);
    if !json.exists() {
        return Err(Error::Config(format!("dataset `{}` not found", json.display())));
    }
    read_dataset(stem)
}

fn echo_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("effective_config"), config::render(cfg)?)?;
    Ok(())
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let mut cfg = run_config(&args.run)?;
    let dir = match args.out {
        Some(d) => d,
        None if !cfg.out.is_empty() => PathBuf::from(&cfg.out),
        None => out_dir(None, "train"),
    };
    cfg.out = dir.to_string_lossy().into_owned();
    let ds = load_data(&cfg.data)?;
    echo_config(&dir, &cfg)?;
    let outcome = train(&cfg, &ds, Some(&dir))?;
    let stdout = std::io::stdout();
    write_metrics_csv(stdout.lock(), &outcome.test)?;
    println!("best validation epoch: {}", outcome.best_epoch);
    println!("outputs in {}", dir.display());
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> Result<()> {
    if !args.ckpt.exists() {
        return Err(Error::Config(format!("checkpoint `{}` not found", args.ckpt.display())));
    }
    let ckpt = load_checkpoint(&args.ckpt)?;
    let ds = load_data(&args.data)?;
    let mut rec = evaluate(&ckpt.model, &ds, &args.split, Execution::Parallel)?;
    rec.epoch = ckpt.config.get("checkpoint_epoch").and_then(Value::as_u64).unwrap_or(0) as usize;
    println!("{METRICS_HEADER}");
    println!("{}", rec.csv_row());
    Ok(())
}

fn ablate_cmd(args: AblateArgs) -> Result<()> {
    let cfg = run_config(&args.run)?;
    let kind = AblationKind::from(args.kind);
    let dir = out_dir(args.out, "ablate");
    let ds = load_data(&cfg.data)?;
    echo_config(&dir, &cfg)?;
    let seeds: Vec<u64> = (0..args.seeds).collect();
    let rows = run_ablation(&cfg, &ds, kind, &seeds)?;
    let path = dir.join(format!("ablation_{}.csv", kind.name()));
    let mut f = create(&path)?;
    write_ablation_csv(&mut f, &rows)?;
    f.flush()?;

    let diffs: Vec<f64> = rows.chunks(2).map(|p| p[1].mean_l2_rel_pct - p[0].mean_l2_rel_pct).collect();
    let wins = diffs.iter().filter(|d| **d >= 0.0).count();
    let mean = |off: usize| rows.iter().skip(off).step_by(2).map(|r| r.mean_l2_rel_pct).sum::<f64>() / seeds.len().max(1) as f64;
    println!("svd mean test error {:.4}%, {} {:.4}%", mean(0), kind.name(), mean(1));
    println!("svd <= {} in {wins}/{} seeds", kind.name(), seeds.len());
    if diffs.len() > 1 {
        let k = diffs.len() as f64;
        let m = diffs.iter().sum::<f64>() / k;
        let sd = (diffs.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
        println!("paired t = {:.3} (df {})", m / (sd / k.sqrt()), diffs.len() - 1);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn scaling_cmd(args: ScalingArgs) -> Result<()> {
    let mut cfg = ScalingConfig {
        ranks: args.ranks,
        repeats: args.repeats,
        ..ScalingConfig::default()
    };
    if let Some(path) = &args.config {
        let run = config::merge(Some(&fs::read_to_string(path)?), &[])?;
        cfg.width = run.model.lifting_dim;
    }
    if !args.sizes.is_empty() {
        cfg.sizes = args.sizes;
    } else if let Some(stem) = &args.data {
        cfg.sizes = vec![load_data(stem)?.grid.len()];
    }
    let report = scaling_probe(&cfg)?;
    let dir = out_dir(args.out, "scaling");
    let path = dir.join("scaling.csv");
    let mut f = create(&path)?;
    report.write_csv(&mut f)?;
    f.flush()?;
    for (n, r2) in &report.time_r2 {
        println!("n={n}: time vs L R^2 = {r2:.4}");
    }
    for (n, r2) in &report.memory_r2 {
        println!("n={n}: memory vs L R^2 = {r2:.4}");
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn variability_cmd(args: VariabilityArgs) -> Result<()> {
    let ds = load_data(&args.data)?;
    let dims = ds.grid.dims();
    println!("# offsets H = {{1..5}}^{dims}");
    println!("sample,beta");
    let mut betas = Vec::with_capacity(ds.len());
    let mut degenerate = 0;
    for i in 0..ds.len() {
        let b = match sample_beta(&ds, i) {
            Ok(b) => b,
            Err(Error::DegenerateField) => {
                degenerate += 1;
                f64::NAN
            }
            Err(e) => return Err(e),
        };
        println!("{i},{b}");
        betas.push(b);
    }
    if degenerate > 0 {
        eprintln!("warning: {degenerate} sample(s) have constant targets; their beta is NaN");
    }
    let finite: Vec<f64> = betas.iter().copied().filter(|b| b.is_finite()).collect();
    let mean = if finite.is_empty() { f64::NAN } else { finite.iter().sum::<f64>() / finite.len() as f64 };
    println!("mean beta: {mean}");

    if let Some(ckpt) = &args.ckpt {
        let model = load_checkpoint(ckpt)?.model;
        let errs = per_sample_errors(&model, &ds, "test", Execution::Parallel)?;
        let path = out_dir(args.out, "variability").join("beta_error.csv");
        let mut f = create(&path)?;
        writeln!(f, "# offsets H = {{1..5}}^{dims}")?;
        writeln!(f, "sample,beta,l2_rel_pct")?;
        for (i, e) in errs {
            writeln!(f, "{i},{},{}", betas[i], 100.0 * e)?;
        }
        f.flush()?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Ablate(a) => ablate_cmd(a),
        Command::Scaling(a) => scaling_cmd(a),
        Command::Variability(a) => variability_cmd(a),
    }
}

/// Usage of the subcommand named on the command line, or of the program.
fn usage() -> String {
    let mut cmd = Cli::command();
    cmd.build();
    let named = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    match named.and_then(|n| cmd.find_subcommand_mut(&n).map(|c| c.render_usage())) {
        Some(u) => u.to_string(),
        None => cmd.render_usage().to_string(),
    }
}

fn main() -> ExitCode {
    activate();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                eprintln!("\n{}", usage());
            }
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
