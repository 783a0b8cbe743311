//! The `reln` command line: data generation, training, evaluation, audits,
//! gradient checks and file inspection.
//!
//! Exit codes: 0 success, 1 audit or check failure, 2 usage error, 3 I/O or
//! file-format error.

use std::ffi::OsString;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::audit::{run_audit, AuditConfig};
use crate::error::{RelnError, Result};
use crate::forms::{nondegeneracy_rank, killing_oracle, BilinearForm, FormKind};
use crate::layers::{
    deserialize_checkpoint, init_params, serialize_checkpoint, LayerKind, LayerSpec, ModelSpec,
    MODEL_MAGIC,
};
use crate::liealg::{AlgebraKind, LieAlgebraBasis};
use crate::rng;
use crate::tasks::{
    covseq_dataset, gen_sp4_dataset, read_dataset, write_dataset, NoiseParams, DATASET_MAGIC,
    SP4_DEFAULT_SIGMA,
};
use crate::train::{
    evaluate, grad_check, smooth_sample, train, AdamConfig, EpochMetrics, TrainConfig, TrainState,
    DEFAULT_STEP, EVAL_SIGMA,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// Steps at or above this make finite differences truncation-dominated.
const COARSE_STEP: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(name = "reln", version, about = "Adjoint-equivariant networks on Lie algebras")]
pub struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a dataset file.
    GenData(GenDataArgs),
    /// Train a model on a dataset file.
    Train(TrainArgs),
    /// Evaluate a model file on a dataset file.
    Eval(EvalArgs),
    /// Run the invariance and equivariance suite for one algebra.
    Audit(AuditArgs),
    /// Compare analytic gradients of a random model with finite differences.
    Gradcheck(GradcheckArgs),
    /// Describe algebras, or the header of a dataset or model file.
    Info(InfoArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Task {
    Sp4,
    Covseq,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long, value_enum)]
    task: Task,
    /// Samples (sp4) or sequences (covseq).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Coordinate scale of the sp4 inputs.
    #[arg(long, default_value_t = SP4_DEFAULT_SIGMA)]
    sigma: f64,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long, default_value_t = 0.05)]
    dt: f64,
    #[arg(long, default_value_t = NoiseParams::default().sigma_min)]
    sigma_min: f64,
    #[arg(long, default_value_t = NoiseParams::default().sigma_max)]
    sigma_max: f64,
    #[arg(long, default_value_t = NoiseParams::default().lambda)]
    lambda: f64,
}

#[derive(Debug, Clone, Args)]
struct ModelArgs {
    /// Comma-separated layers: linear, relu, leaky, bracket, pool, invariant.
    /// The first linear maps the input channels to --channels.
    #[arg(long, default_value = "linear,relu,bracket,invariant", value_delimiter = ',')]
    layers: Vec<String>,
    #[arg(long, default_value_t = 16)]
    channels: usize,
    /// Hidden widths of the tanh head; empty for a linear readout.
    #[arg(long, default_value = "32,32", value_delimiter = ',')]
    head: Vec<String>,
    /// Leak of `leaky` layers.
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    /// trace, modified_gl, killing or modified_general.
    #[arg(long, default_value = "modified_gl")]
    form: String,
    /// Fully connected baseline on flattened coordinates (ignores --layers).
    #[arg(long)]
    baseline: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Metrics log; defaults to the model path with a `.tsv` extension.
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 100)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Conjugated copies of every training sample per epoch (0 = off).
    #[arg(long, default_value_t = 0)]
    augment: usize,
    /// Conjugations for the final evaluation.
    #[arg(long, default_value_t = 500)]
    conj: usize,
    /// Conjugations for the per-epoch validation metrics.
    #[arg(long, default_value_t = 4)]
    epoch_conj: usize,
    #[arg(long, default_value_t = EVAL_SIGMA)]
    sigma: f64,
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
    /// Continue from a model file written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 500)]
    conj: usize,
    #[arg(long, default_value_t = EVAL_SIGMA)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[arg(long)]
    algebra: String,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Negative control: audit a random symmetric (non-invariant) form.
    #[arg(long)]
    broken_form: bool,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value = "sp4")]
    algebra: String,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 2)]
    inputs: usize,
    #[arg(long, default_value_t = 1)]
    set_size: usize,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = DEFAULT_STEP)]
    h: f64,
    #[arg(long, default_value_t = 4)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct InfoArgs {
    /// Dataset (RLND) or model (RLNM) file to describe.
    file: Option<PathBuf>,
}

/// Names the file in I/O errors.
fn at<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        RelnError::Io(io) => RelnError::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })
}

fn exit_code(err: &RelnError) -> i32 {
    match err {
        RelnError::Io(_) | RelnError::Format(_) | RelnError::Checksum { .. } | RelnError::Version(_) => EXIT_IO,
        RelnError::InvalidArgument(_) | RelnError::UnknownAlgebra(_) | RelnError::Shape(_) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match cli.threads {
        Some(0) => Err(RelnError::invalid("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| RelnError::invalid(e.to_string()))
            .and_then(|pool| pool.install(|| dispatch(cli.command))),
        None => dispatch(cli.command),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    println!("threads: {}", rayon::current_num_threads());
    match command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Audit(a) => audit_cmd(a),
        Command::Gradcheck(a) => gradcheck_cmd(a),
        Command::Info(a) => info_cmd(a),
    }
}

fn gen_data(a: GenDataArgs) -> Result<i32> {
    println!("config: {a:?}");
    println!("seed: {}", a.seed);
    let n = a.n as usize;
    let ds = match a.task {
        Task::Sp4 => gen_sp4_dataset(n, a.sigma, a.seed)?,
        Task::Covseq => {
            let params = NoiseParams {
                sigma_min: a.sigma_min,
                sigma_max: a.sigma_max,
                lambda: a.lambda,
                ..NoiseParams::default()
            };
            covseq_dataset(n, a.steps, a.dt, &params, a.seed)?
        }
    };
    let crc = at(&a.out, write_dataset(&ds, &a.out))?;
    println!(
        "wrote {} ({} samples, algebra {}, {} inputs, {} targets)",
        a.out.display(),
        ds.len(),
        ds.algebra,
        ds.inputs_per_sample(),
        ds.target_dim()
    );
    println!("checksum: {crc:08x}");
    Ok(EXIT_OK)
}

fn parse_widths(items: &[String]) -> Result<Vec<usize>> {
    items
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty() && *s != "none")
        .map(|s| s.parse::<usize>().map_err(|_| RelnError::invalid(format!("bad head width `{s}`"))))
        .collect()
}

impl ModelArgs {
    fn spec(&self, algebra: AlgebraKind, inputs: usize, set_size: usize, outputs: usize) -> Result<ModelSpec> {
        let head = parse_widths(&self.head)?;
        let mut spec = if self.baseline {
            ModelSpec::new(algebra, inputs, vec![]).with_head(head, outputs)
        } else {
            let c = self.channels;
            let mut layers = vec![];
            let mut width = inputs;
            for name in self.layers.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
                let layer = match LayerKind::parse(name)? {
                    LayerKind::Linear => LayerSpec::linear(width, c),
                    LayerKind::Relu => LayerSpec::relu(width),
                    LayerKind::LeakyRelu => LayerSpec::leaky_relu(width, self.alpha),
                    LayerKind::Bracket => LayerSpec::bracket(width),
                    LayerKind::Pool => LayerSpec::pool(width),
                    LayerKind::Invariant => LayerSpec::invariant(width),
                };
                width = layer.out_channels;
                layers.push(layer);
            }
            ModelSpec::new(algebra, inputs, layers).with_head(head, outputs)
        };
        spec.form = FormKind::parse(&self.form)?;
        spec.set_size = set_size;
        spec.validate()?;
        Ok(spec)
    }
}

fn describe_spec(spec: &ModelSpec) -> String {
    let layers: Vec<String> = spec
        .layers
        .iter()
        .map(|l| format!("{}({}->{})", l.kind.name(), l.in_channels, l.out_channels))
        .collect();
    format!(
        "algebra {} form {:?} inputs {} layers [{}] head {:?} outputs {}",
        spec.algebra,
        spec.form,
        spec.input_channels,
        layers.join(", "),
        spec.head_hidden,
        spec.output_dim
    )
}

fn train_cmd(a: TrainArgs) -> Result<i32> {
    let train_ds = at(&a.data, read_dataset(&a.data))?;
    let test_ds = a.test.as_deref().map(|p| at(p, read_dataset(p))).transpose()?;
    let (spec, resume, seed) = match &a.resume {
        Some(path) => {
            let (best, ckpt) = deserialize_checkpoint(&at(path, std::fs::read(path).map_err(Into::into))?)?;
            let (state, seed) = TrainState::from_checkpoint(&best, &ckpt)?;
            if seed != a.seed {
                println!("note: continuing with the checkpoint seed {seed} (flag had {})", a.seed);
            }
            let mut spec = best.spec().clone();
            spec.target_affine = None;
            (spec, Some(state), seed)
        }
        None => {
            let spec = a.model.spec(train_ds.algebra, train_ds.inputs_per_sample(), 1, train_ds.target_dim())?;
            (spec, None, a.seed)
        }
    };
    let cfg = TrainConfig {
        test_data: a.test.clone(),
        adam: AdamConfig { lr: a.lr, beta1: a.beta1, beta2: a.beta2, eps: a.eps },
        batch_size: a.batch,
        epochs: a.epochs,
        seed,
        eval_conj: a.conj,
        epoch_conj: a.epoch_conj,
        sigma: a.sigma,
        augment: a.augment,
        val_fraction: a.val_fraction,
        ..TrainConfig::new(a.data.clone(), spec)
    };
    cfg.validate()?;
    let params = init_params(&cfg.spec, seed)?.num_params();
    println!("config: {cfg:?}");
    println!("model: {} ({params} parameters)", describe_spec(&cfg.spec));
    println!("seed: {seed}");

    let metrics_path = a.metrics.clone().unwrap_or_else(|| a.out.with_extension("tsv"));
    let mut log = if resume.is_some() && metrics_path.exists() {
        OpenOptions::new().append(true).open(&metrics_path)?
    } else {
        let mut f = at(&metrics_path, File::create(&metrics_path).map_err(Into::into))?;
        writeln!(f, "{}", EpochMetrics::TSV_HEADER)?;
        f
    };
    let every = (a.epochs / 20).max(1);
    let mut io_err = None;
    let outcome = train(&cfg, &train_ds, test_ds.as_ref(), resume, |m| {
        if let Err(e) = writeln!(log, "{}", m.tsv()) {
            io_err.get_or_insert(e);
        }
        if m.epoch % every == 0 || m.epoch == a.epochs {
            println!(
                "epoch {:>4}  train {:.4e}  val {:.4e}  inv {:.2e}  {:.2}s",
                m.epoch, m.train_loss, m.val_loss, m.invariance_error, m.seconds
            );
        }
    })?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    let bytes = serialize_checkpoint(&outcome.best, &outcome.state.to_checkpoint(seed))?;
    at(&a.out, std::fs::write(&a.out, bytes).map_err(Into::into))?;
    println!("best epoch {} (val {:.6e})", outcome.state.best_epoch, outcome.state.best_val);
    print_report(&outcome.report, if a.test.is_some() { "test" } else { "validation" });
    println!("wrote {} and {}", a.out.display(), metrics_path.display());
    Ok(EXIT_OK)
}

fn print_report(rep: &crate::train::EvalReport, label: &str) {
    println!("{label} mse_id:           {:.9e}", rep.mse_id);
    println!("{label} mse_conjugated:   {:.9e}", rep.mse_conjugated);
    println!("{label} invariance_error: {:.9e}", rep.invariance_error);
    println!("conjugations: {}  sigma: {}  wall time: {:.2}s", rep.m, rep.sigma, rep.wall_time);
}

fn eval_cmd(a: EvalArgs) -> Result<i32> {
    println!("config: {a:?}");
    println!("seed: {}", a.seed);
    let (model, _) = deserialize_checkpoint(&at(&a.model, std::fs::read(&a.model).map_err(Into::into))?)?;
    let ds = at(&a.data, read_dataset(&a.data))?;
    let mut r = rng::stream(a.seed, rng::Stream::Eval);
    let rep = evaluate(&model, &ds, a.conj, a.sigma, &mut r)?;
    print_report(&rep, "eval");
    Ok(EXIT_OK)
}

fn audit_cmd(a: AuditArgs) -> Result<i32> {
    let algebra = AlgebraKind::parse(&a.algebra, a.n)?;
    let cfg = AuditConfig { algebra, trials: a.trials, seed: a.seed, broken_form: a.broken_form };
    println!("config: {cfg:?}");
    println!("seed: {}", a.seed);
    let report = run_audit(&cfg)?;
    for c in &report.checks {
        println!(
            "{:<32} {:>12.3e}  (tol {:.0e})  {}",
            c.name,
            c.deviation,
            c.tolerance,
            if c.passed { "ok" } else { "FAIL" }
        );
    }
    if report.passed() {
        println!("audit passed");
        Ok(EXIT_OK)
    } else {
        println!("audit FAILED");
        Ok(EXIT_FAILURE)
    }
}

fn gradcheck_cmd(a: GradcheckArgs) -> Result<i32> {
    let algebra = AlgebraKind::parse(&a.algebra, a.n)?;
    let spec = a.model.spec(algebra, a.inputs, a.set_size, 1)?;
    println!("config: {a:?}");
    println!("model: {}", describe_spec(&spec));
    println!("seed: {}", a.seed);
    if a.h >= COARSE_STEP {
        println!("warning: step h = {:e} is large; truncation error will dominate the comparison", a.h);
    }
    let model = init_params(&spec, a.seed)?;
    let mut r = rng::stream(a.seed, rng::Stream::Test);
    let (x, y) = smooth_sample(&model, a.batch, 0.5, &mut r)?;
    let report = grad_check(&model, &x, &y, a.h)?;
    for (owner, err) in &report.per_owner {
        println!("{owner:<24} {err:.3e}");
    }
    let linear_only = spec.head_hidden.is_empty()
        && spec.layers.iter().all(|l| matches!(l.kind, LayerKind::Linear | LayerKind::Invariant));
    let tol = if linear_only { 1e-9 } else { 1e-4 };
    println!("max relative error: {:.3e} (tol {tol:.0e})", report.max_rel_err);
    Ok(if report.max_rel_err <= tol { EXIT_OK } else { EXIT_FAILURE })
}

fn info_cmd(a: InfoArgs) -> Result<i32> {
    let Some(path) = a.file else {
        println!("{:<6} {:>3} {:>4} {:>12} {:>13}", "name", "n", "dim", "form rank", "killing rank");
        for algebra in [
            AlgebraKind::So3,
            AlgebraKind::Sl(2),
            AlgebraKind::Sl(3),
            AlgebraKind::Sp4,
            AlgebraKind::So13,
            AlgebraKind::Gl(2),
            AlgebraKind::Gl(3),
            AlgebraKind::Gl(4),
        ] {
            let basis = LieAlgebraBasis::new(algebra)?;
            let form = BilinearForm::of_kind(FormKind::ModifiedGl, &basis)?;
            println!(
                "{:<6} {:>3} {:>4} {:>12} {:>13}",
                algebra.to_string(),
                algebra.n(),
                algebra.dim(),
                nondegeneracy_rank(&form)?,
                nondegeneracy_rank(&killing_oracle(&basis))?
            );
        }
        return Ok(EXIT_OK);
    };
    describe_file(&path)?;
    Ok(EXIT_OK)
}

fn describe_file(path: &Path) -> Result<()> {
    let bytes = at(path, std::fs::read(path).map_err(Into::into))?;
    let magic = bytes.get(..4).ok_or_else(|| RelnError::Format("file too short".into()))?;
    if magic == DATASET_MAGIC {
        let ds = read_dataset(path)?;
        println!("dataset {}", path.display());
        println!("algebra: {}  samples: {}", ds.algebra, ds.len());
        println!("inputs per sample: {}  target dim: {}", ds.inputs_per_sample(), ds.target_dim());
        println!("seed: {}  target mean: {}  target std: {}", ds.seed, ds.target_mean, ds.target_std);
    } else if magic == MODEL_MAGIC {
        let (model, ckpt) = deserialize_checkpoint(&bytes)?;
        println!("model {}", path.display());
        println!("{}", describe_spec(model.spec()));
        println!("parameters: {}", model.num_params());
        if let Some([mean, std]) = model.spec().target_affine {
            println!("target mean: {mean}  target std: {std}");
        }
        if let Some(state) = ckpt.state {
            println!("training state: {state}");
        }
    } else {
        return Err(RelnError::Format(format!("{} is neither a dataset nor a model file", path.display())));
    }
    Ok(())
}
