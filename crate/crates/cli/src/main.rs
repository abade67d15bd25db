use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use jetsym::discover::{render_generators, spectrum_report, DiscoveryResult, SystemKind};
use jetsym::jetdata::{estimate_jet, JetOptions, ProlongedDataset};
use jetsym::library::{build_linear_library, build_poly_library, FunctionLibrary};
use jetsym::metrics::{containment_distance, grassmann_distance, truth_algebra};
use jetsym::pdegen::{builtin_pde, generate, subsample, GenConfig, TrajectoryDataset};
use jetsym::pipeline::{apply_sparsify, discover_dataset, generate_jets, preset, run_static, DiscoverConfig, Preset, StaticCase};
use jetsym::sparsify::LadmapParams;
use jetsym::surrogate::{analytic_rhs, train_mlp, Activation, LrSchedule, MlpConfig, MlpModel, RhsModel};
use jetsym::symexpr::JetSpace;

const TRAJ: &str = "traj";
const JETS: &str = "jets";
const MODEL: &str = "model";

#[derive(Parser)]
#[command(name = "jetsym", version, about = "Discover Lie point symmetries from trajectory data")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a built-in PDE from random Fourier initial conditions.
    Gen(GenArgs),
    /// Estimate jets (derivatives up to an order) from trajectories.
    Jet(JetArgs),
    /// Fit an MLP from jet inputs to time derivatives.
    Train(TrainArgs),
    /// Solve the infinitesimal criterion and extract generators.
    Discover(DiscoverArgs),
    /// Rotate a discovered basis towards sparsity.
    Sparsify(SparsifyArgs),
    /// Compare a result with published generators.
    Eval(EvalArgs),
    /// Print the spectrum and generators of a result.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    pde: String,
    /// JSON object overriding fields of the preset generation config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_ics: Option<usize>,
    /// Keep every k-th grid point per spatial axis.
    #[arg(long, default_value_t = 1)]
    space_stride: usize,
    #[arg(long, default_value_t = 1)]
    time_stride: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct JetArgs {
    /// Directory written by `gen`.
    #[arg(long = "in", conflicts_with = "preset", required_unless_present = "preset")]
    input: Option<PathBuf>,
    /// Simulate and differentiate a preset one trajectory at a time.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    order: Option<usize>,
    /// Field indices to keep.
    #[arg(long, value_delimiter = ',')]
    fields: Option<Vec<usize>>,
    /// Emit every k-th grid point per spatial axis.
    #[arg(long)]
    space_stride: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    inputs: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    outputs: Option<Vec<String>>,
    #[arg(long, requires = "preset")]
    seed: Option<u64>,
    #[arg(long, requires = "preset")]
    n_ics: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 200)]
    hidden: usize,
    #[arg(long, default_value_t = 3)]
    layers: usize,
    #[arg(long, default_value = "sigmoid")]
    activation: String,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
    /// Train on a seeded random subset of at most this many points.
    #[arg(long)]
    max_train_points: Option<usize>,
    /// Fold input and output scaling into the first and last layers at init.
    #[arg(long)]
    data_init: bool,
    /// `constant` or `cosine`.
    #[arg(long, default_value = "constant")]
    schedule: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SystemArg {
    Dense,
    Gram,
}

#[derive(Clone, Copy, ValueEnum)]
enum StaticArg {
    Circle,
    Lorentz,
}

#[derive(Args)]
struct DiscoverArgs {
    /// Directory written by `jet`.
    #[arg(long, required_unless_present = "static_case", conflicts_with = "static_case")]
    jets: Option<PathBuf>,
    /// Directory written by `train`.
    #[arg(long, conflicts_with = "analytic")]
    model: Option<PathBuf>,
    /// Use the closed-form right-hand side of a built-in PDE.
    #[arg(long)]
    analytic: Option<String>,
    /// Points on a known constraint surface instead of jets.
    #[arg(long = "static", value_enum)]
    static_case: Option<StaticArg>,
    /// `polyK`, `linear`, or a JSON library file.
    #[arg(long, default_value = "poly2")]
    library: String,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the dense/Gram choice.
    #[arg(long, value_enum)]
    system: Option<SystemArg>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SparsifyArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    eps1: Option<f64>,
    #[arg(long)]
    eps2: Option<f64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    truth: String,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Number of trailing singular values to list.
    #[arg(long, default_value_t = 10)]
    rows: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let unknown = e.chain().any(|c| {
                matches!(
                    c.downcast_ref::<jetsym::Error>(),
                    Some(jetsym::Error::UnknownPde { .. } | jetsym::Error::UnknownDataset { .. })
                )
            });
            ExitCode::from(if unknown { 2 } else { 1 })
        }
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Gen(a) => cmd_gen(a),
        Cmd::Jet(a) => cmd_jet(a),
        Cmd::Train(a) => cmd_train(a),
        Cmd::Discover(a) => cmd_discover(a),
        Cmd::Sparsify(a) => cmd_sparsify(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Report(a) => cmd_report(a),
    }
}

/// Recursively overlays `patch` onto `base`.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let pde = builtin_pde(&a.pde)?;
    let mut cfg = serde_json::to_value(preset(&a.pde)?.gen)?;
    let mut explicit_substeps = false;
    if let Some(path) = &a.config {
        let patch = read_json(path)?;
        explicit_substeps = patch.pointer("/grid/substeps").is_some();
        merge(&mut cfg, patch);
    }
    let mut cfg: GenConfig = serde_json::from_value(cfg).context("invalid generation config")?;
    if !explicit_substeps {
        // the preset's count was chosen for the preset grid
        cfg.grid.substeps = pde.default_substeps(&cfg.grid);
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.n_ics {
        cfg.n_ics = n;
    }
    let mut traj = generate(&pde, &cfg)?;
    if a.space_stride > 1 || a.time_stride > 1 {
        traj = subsample(&traj, a.space_stride, a.time_stride)?;
    }
    traj.save(&a.out, TRAJ).with_context(|| format!("writing {}", a.out.display()))?;
    println!("wrote {} with shape {:?}", a.out.join(format!("{TRAJ}.bin")).display(), traj.meta.shape);
    Ok(())
}

fn cmd_jet(a: JetArgs) -> Result<()> {
    let mut ds = if let Some(name) = &a.preset {
        let mut p = preset(name)?;
        if let Some(o) = a.order {
            p.order = o;
        }
        if a.fields.is_some() {
            p.fields = a.fields.clone();
        }
        if let Some(s) = a.space_stride {
            p.space_stride = s;
        }
        if let Some(s) = a.seed {
            p.gen.seed = s;
        }
        if let Some(n) = a.n_ics {
            p.gen.n_ics = n;
        }
        generate_jets(&p)?
    } else {
        let dir = a.input.as_ref().expect("clap enforces --in or --preset");
        let traj = TrajectoryDataset::load(dir, TRAJ).with_context(|| format!("reading trajectories from {}", dir.display()))?;
        let base = preset(&traj.meta.pde).ok();
        let mut opts = base.as_ref().map(Preset::jet_options).unwrap_or_else(|| JetOptions::new(2));
        if traj.meta.space_stride > 1 {
            opts.space_stride = 1;
        }
        if let Some(o) = a.order {
            opts.order = o;
        }
        if a.fields.is_some() {
            opts.fields = a.fields.clone();
        }
        if let Some(s) = a.space_stride {
            opts.space_stride = s;
        }
        let ds = estimate_jet(&traj, &opts)?;
        match base.map(|p| p.split(&ds.space).and_then(|(i, o)| ds.clone().with_split(i, o))) {
            Some(Ok(split)) => split,
            _ => ds,
        }
    };
    if a.inputs.is_some() || a.outputs.is_some() {
        let names = |v: &Option<Vec<String>>, cur: &[jetsym::symexpr::JetVar]| -> Result<Vec<_>> {
            match v {
                Some(list) => list
                    .iter()
                    .map(|n| ds.space.resolve(n).ok_or_else(|| anyhow!("`{n}` is not a jet coordinate of this dataset")))
                    .collect(),
                None => Ok(cur.to_vec()),
            }
        };
        let (i, o) = (names(&a.inputs, &ds.inputs)?, names(&a.outputs, &ds.outputs)?);
        ds = ds.with_split(i, o)?;
    }
    ds.save(&a.out, JETS).with_context(|| format!("writing {}", a.out.display()))?;
    println!("wrote {} points, channels {}", ds.len(), ds.channel_names().join(", "));
    if ds.outputs.is_empty() {
        println!("no input/output split declared; pass --inputs and --outputs before training");
    }
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let ds = ProlongedDataset::load(&a.input, JETS).with_context(|| format!("reading jets from {}", a.input.display()))?;
    let cfg = MlpConfig {
        hidden_layers: a.layers,
        width: a.hidden,
        activation: a.activation.parse::<Activation>()?,
        lr: a.lr,
        batch_size: a.batch_size,
        epochs: a.epochs,
        seed: a.seed,
        val_fraction: a.val_fraction,
        max_train_points: a.max_train_points,
        data_init: a.data_init,
        schedule: a.schedule.parse::<LrSchedule>()?,
    };
    let (model, report) = train_mlp(&ds, &cfg)?;
    model.save(&a.out, MODEL).with_context(|| format!("writing {}", a.out.display()))?;
    write_json(&a.out.join("train.json"), &json!({ "config": cfg, "report": report }))?;
    let last = |v: &[f64]| v.last().map_or("n/a".to_string(), |x| format!("{x:.4e}"));
    println!(
        "trained on {} points ({} held out); final train loss {}, validation loss {}",
        report.n_train,
        report.n_val,
        last(&report.train_loss),
        last(&report.val_loss)
    );
    Ok(())
}

fn parse_library(spec: &str, space: &JetSpace) -> Result<FunctionLibrary> {
    if let Some(k) = spec.strip_prefix("poly").and_then(|k| k.parse::<usize>().ok()) {
        return Ok(build_poly_library(space, k)?);
    }
    if spec == "linear" {
        return Ok(build_linear_library(space, true)?);
    }
    let lib = FunctionLibrary::load(Path::new(spec)).with_context(|| format!("loading library {spec}"))?;
    if lib.space() != space {
        bail!("library {spec} is over {:?}, the data over {:?}", lib.names(), space.coords.iter().chain(&space.fields).collect::<Vec<_>>());
    }
    Ok(lib)
}

fn print_result(r: &DiscoveryResult, rows: usize) -> Result<()> {
    let basis = r.basis()?;
    println!("{}", spectrum_report(&basis).table(rows));
    let (label, exprs) = match &r.expressions_sparse {
        Some(e) => ("sparsified generators", e),
        None => ("generators", &r.expressions),
    };
    if !exprs.is_empty() {
        println!("{label}:");
        for (i, e) in exprs.iter().enumerate() {
            println!("  v{} = {e}", i + 1);
        }
    }
    Ok(())
}

fn cmd_discover(a: DiscoverArgs) -> Result<()> {
    let force = a.system.map(|s| match s {
        SystemArg::Dense => SystemKind::Dense,
        SystemArg::Gram => SystemKind::Gram,
    });
    let run = if let Some(case) = a.static_case {
        let case = match case {
            StaticArg::Circle => StaticCase::Circle,
            StaticArg::Lorentz => StaticCase::Lorentz,
        };
        let mut cfg = DiscoverConfig::new(a.samples.unwrap_or(100), a.seed, a.threshold.unwrap_or(case.threshold()));
        cfg.force = force;
        match &a.model {
            Some(dir) => run_static(case, &MlpModel::load(dir, MODEL)?, &cfg)?,
            None => run_static(case, &case.constraint(), &cfg)?,
        }
    } else {
        let dir = a.jets.as_ref().expect("clap enforces --jets or --static");
        let ds = ProlongedDataset::load(dir, JETS).with_context(|| format!("reading jets from {}", dir.display()))?;
        let base = ds.source.as_deref().and_then(|s| preset(s).ok());
        let lib = parse_library(&a.library, &ds.space)?;
        let threshold = a
            .threshold
            .or(base.as_ref().map(|p| p.threshold))
            .ok_or_else(|| anyhow!("no preset default for this data; pass --threshold"))?;
        let samples = a.samples.or(base.as_ref().map(|p| p.samples)).unwrap_or(100);
        let mut cfg = DiscoverConfig::new(samples, a.seed, threshold);
        cfg.force = force;
        let mut echo = json!({ "library": a.library, "source": ds.source });
        if let Some(p) = &base {
            echo["ladmap_eps"] = json!([p.ladmap_eps.0, p.ladmap_eps.1]);
        }
        let check = |m: &dyn RhsModel, space: &JetSpace, outputs: &[jetsym::symexpr::JetVar]| -> Result<()> {
            if space != &ds.space || outputs != ds.outputs.as_slice() {
                bail!("model and jets disagree: model predicts {:?}, jets declare outputs {:?}", outputs.iter().map(|v| space.name(v)).collect::<Vec<_>>(), ds.outputs.iter().map(|v| ds.space.name(v)).collect::<Vec<_>>());
            }
            if let Some(v) = m.inputs().iter().find(|v| ds.column(v).is_none()) {
                bail!("model input {} is missing from the jets", space.name(v));
            }
            Ok(())
        };
        match (&a.model, &a.analytic) {
            (Some(mdir), _) => {
                let model = MlpModel::load(mdir, MODEL).with_context(|| format!("reading model from {}", mdir.display()))?;
                check(&model, &model.space, &model.outputs)?;
                echo["model"] = json!("mlp");
                discover_dataset(&ds, &model, &lib, &cfg, echo)?
            }
            (None, Some(name)) => {
                let rhs = analytic_rhs(name)?;
                check(&rhs.model, rhs.model.space(), &rhs.outputs)?;
                echo["model"] = json!(format!("analytic:{name}"));
                discover_dataset(&ds, &rhs.model, &lib, &cfg, echo)?
            }
            (None, None) => bail!("pass --model DIR or --analytic NAME"),
        }
    };
    write_json(&a.out, &serde_json::to_value(&run.result)?)?;
    print_result(&run.result, 10)?;
    Ok(())
}

fn cmd_sparsify(a: SparsifyArgs) -> Result<()> {
    let mut result: DiscoveryResult = serde_json::from_value(read_json(&a.input)?).context("not a discovery result")?;
    let preset_eps = result.config["run"]["ladmap_eps"].as_array().and_then(|v| Some((v.first()?.as_f64()?, v.get(1)?.as_f64()?)));
    let (e1, e2) = preset_eps.unwrap_or((1e-4, 1e-3));
    let mut params = LadmapParams::with_tolerances(a.eps1.unwrap_or(e1), a.eps2.unwrap_or(e2));
    if let Some(r) = a.restarts {
        params.restarts = r;
    }
    let diag = apply_sparsify(&mut result, &params)?;
    write_json(&a.out, &serde_json::to_value(&result)?)?;
    println!(
        "LADMAP: {} iterations, converged {}, ||Q||_1,1 {:.4} -> {:.4}",
        diag.iterations, diag.converged, diag.objective_before, diag.objective_after
    );
    print_result(&result, 10)?;
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let result: DiscoveryResult = serde_json::from_value(read_json(&a.input)?).context("not a discovery result")?;
    let lib = FunctionLibrary::from_spec(&result.library)?;
    let truth = truth_algebra(&a.truth, &lib)?;
    let q = result.q_matrix();
    println!("discovered d = {}, reference d = {}", result.d, truth.ncols());
    if q.ncols() == truth.ncols() {
        println!("grassmann distance {:.6e}", grassmann_distance(&q, &truth)?);
    } else {
        println!("grassmann distance undefined for unequal dimensions");
        println!("containment distance {:.6e}", containment_distance(&q, &truth)?);
    }
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let result: DiscoveryResult = serde_json::from_value(read_json(&a.input)?).context("not a discovery result")?;
    println!("system: {:?}, fingerprint {}", result.kind, result.fingerprint);
    print_result(&result, a.rows)?;
    if result.expressions_sparse.is_some() {
        let lib = FunctionLibrary::from_spec(&result.library)?;
        println!("dense basis:");
        for (i, e) in render_generators(&result.basis()?, &lib).iter().enumerate() {
            println!("  q{} = {e}", i + 1);
        }
    }
    Ok(())
}
