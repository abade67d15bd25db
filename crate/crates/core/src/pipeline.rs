//! Dataset presets and end-to-end discovery runs.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::discover::{
    choose_kind, fingerprint, null_space, CriterionBuilder, DiscoveryResult, GeneratorBasis, SystemKind, DEFAULT_GRAM_RATIO,
};
use crate::error::{Error, Result};
use crate::jetdata::{estimate_jet, sample_indices, JetOptions, ProlongedDataset};
use crate::library::{build_linear_library, build_poly_library, FunctionLibrary};
use crate::pdegen::{builtin_pde, meta_for, simulate_ic, GenConfig, GridSpec, TrajectoryDataset};
use crate::sparsify::{canonicalize_basis, clean_small, ladmap_sparsify, LadmapDiagnostics, LadmapParams};
use crate::surrogate::{
    analytic_rhs, train_classifier, train_mlp, MlpConfig, MlpModel, PolyModel, ResidualKind, ResidualSpec, RhsModel,
    TrainReport,
};
use crate::symexpr::{JetLookup, JetSpace, JetVar};

/// Everything needed to reproduce one dynamic dataset and its discovery run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub pde: String,
    pub gen: GenConfig,
    /// Emit jets at every `space_stride`-th grid point per axis.
    pub space_stride: usize,
    pub order: usize,
    /// Fields kept for discovery; `None` keeps all.
    pub fields: Option<Vec<usize>>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub degree: usize,
    pub samples: usize,
    pub threshold: f64,
    pub ladmap_eps: (f64, f64),
    pub truth: String,
}

pub const PRESET_NAMES: [&str; 6] = ["burgers", "heat", "kdv", "wave2d", "schrodinger2d", "rd2d"];

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

pub fn preset(name: &str) -> Result<Preset> {
    let grid = GridSpec { length: 20.0, nx: 100, t_final: 2.0, nt: 1000, substeps: 1 };
    let one = ["u", "u_x", "u_xx"];
    let two = ["u", "u_x", "u_y", "u_xx", "u_yy", "u_xy", "v", "v_x", "v_y", "v_xx", "v_yy", "v_xy"];
    let (n_f, stride, order, fields, inputs, outputs, threshold, ladmap_eps): (usize, usize, usize, Option<Vec<usize>>, Vec<String>, Vec<String>, f64, (f64, f64)) =
        match name {
            "burgers" | "heat" => (10, 1, 2, None, strings(&one), strings(&["u_t"]), 0.5, (1e-4, 1e-4)),
            "kdv" => (4, 1, 3, None, strings(&["u", "u_x", "u_xx", "u_xxx"]), strings(&["u_t"]), 0.5, (1e-4, 1e-4)),
            "wave2d" => (
                3,
                10,
                2,
                Some(vec![0]),
                strings(&["u", "u_x", "u_y", "u_xx", "u_yy", "u_xy"]),
                strings(&["u_tt"]),
                1.0,
                (1e-4, 1e-3),
            ),
            "schrodinger2d" | "rd2d" => (2, 10, 2, None, strings(&two), strings(&["u_t", "v_t"]), 0.05, (1e-4, 1e-3)),
            _ => {
                return Err(Error::UnknownDataset { name: name.to_string(), options: PRESET_NAMES.join(", ") });
            }
        };
    let pde = builtin_pde(name)?;
    // the cubic systems rotate phase at a rate ~|u|^2; smaller amplitudes keep
    // the central time difference accurate
    let ic_scale = if matches!(name, "schrodinger2d" | "rd2d") { 0.3 } else { 1.0 };
    let mut gen = GenConfig { grid, n_f, n_ics: 10, seed: 0, ic_scale };
    gen.grid.substeps = pde.default_substeps(&gen.grid);
    Ok(Preset {
        name: name.to_string(),
        pde: name.to_string(),
        gen,
        space_stride: stride,
        order,
        fields,
        inputs,
        outputs,
        degree: 2,
        samples: 100,
        threshold,
        ladmap_eps,
        truth: name.to_string(),
    })
}

impl Preset {
    pub fn jet_options(&self) -> JetOptions {
        JetOptions { order: self.order, fields: self.fields.clone(), space_stride: self.space_stride }
    }

    pub fn ladmap(&self) -> LadmapParams {
        LadmapParams::with_tolerances(self.ladmap_eps.0, self.ladmap_eps.1)
    }

    /// Space of the jets this preset produces.
    pub fn space(&self) -> Result<JetSpace> {
        let pde = builtin_pde(&self.pde)?;
        let fields: Vec<&str> = match &self.fields {
            Some(f) => f.iter().map(|&a| pde.fields[a]).collect(),
            None => pde.fields.clone(),
        };
        Ok(JetSpace::new(pde.coords(), fields))
    }

    pub fn library(&self) -> Result<FunctionLibrary> {
        build_poly_library(&self.space()?, self.degree)
    }

    pub fn split(&self, space: &JetSpace) -> Result<(Vec<JetVar>, Vec<JetVar>)> {
        let resolve = |names: &[String]| -> Result<Vec<JetVar>> {
            names.iter().map(|n| space.resolve(n).ok_or_else(|| Error::UnhousedVariable(n.clone()))).collect()
        };
        Ok((resolve(&self.inputs)?, resolve(&self.outputs)?))
    }
}

/// Simulates every initial condition and estimates its jets, one trajectory
/// in memory at a time.
pub fn generate_jets(p: &Preset) -> Result<ProlongedDataset> {
    let pde = builtin_pde(&p.pde)?;
    let opts = p.jet_options();
    let single = GenConfig { n_ics: 1, ..p.gen.clone() };
    let mut out: Option<ProlongedDataset> = None;
    for ic in 0..p.gen.n_ics {
        let traj = TrajectoryDataset { meta: meta_for(&pde, &single), data: simulate_ic(&pde, &p.gen, ic)? };
        let mut jets = estimate_jet(&traj, &opts)?;
        jets.relabel_ic(ic);
        match &mut out {
            None => out = Some(jets),
            Some(acc) => acc.extend(&jets)?,
        }
    }
    let ds = out.ok_or_else(|| Error::Config("preset has no initial conditions".into()))?;
    let (inputs, outputs) = p.split(&ds.space)?;
    ds.with_split(inputs, outputs)
}

/// Sampling and thresholding settings of one discovery run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscoverConfig {
    pub samples: usize,
    pub seed: u64,
    pub threshold: f64,
    pub gram_ratio: f64,
    /// Overrides the ratio test.
    #[serde(default)]
    pub force: Option<SystemKind>,
}

impl DiscoverConfig {
    pub fn new(samples: usize, seed: u64, threshold: f64) -> Self {
        DiscoverConfig { samples, seed, threshold, gram_ratio: DEFAULT_GRAM_RATIO, force: None }
    }
}

/// Criterion null space over explicit points.
pub fn discover_points<L: JetLookup>(
    points: &[L],
    spec: &ResidualSpec,
    lib: &FunctionLibrary,
    cfg: &DiscoverConfig,
) -> Result<GeneratorBasis> {
    let builder = CriterionBuilder::new(spec, lib)?;
    let kind = cfg.force.unwrap_or_else(|| choose_kind(points.len(), builder.l(), builder.ncols(), cfg.gram_ratio));
    let sys = match kind {
        SystemKind::Dense => builder.dense(points)?,
        SystemKind::Gram => builder.gram(points)?,
    };
    null_space(&sys, cfg.threshold, lib.p() + lib.q(), lib.r())
}

/// A finished discovery with its library and serializable record.
#[derive(Clone, Debug)]
pub struct DiscoveryRun {
    pub lib: FunctionLibrary,
    pub basis: GeneratorBasis,
    pub result: DiscoveryResult,
}

/// Samples `cfg.samples` points of `ds` and solves the criterion for `model`.
pub fn discover_dataset(
    ds: &ProlongedDataset,
    model: &dyn RhsModel,
    lib: &FunctionLibrary,
    cfg: &DiscoverConfig,
    echo: serde_json::Value,
) -> Result<DiscoveryRun> {
    if &ds.space != lib.space() {
        return Err(Error::Shape(format!("library variables {:?} do not match the jets", lib.names())));
    }
    if ds.outputs.is_empty() {
        return Err(Error::Config("jets have no declared outputs".into()));
    }
    let idx = sample_indices(ds.len(), cfg.samples, cfg.seed)?;
    let points: Vec<_> = idx.iter().map(|&i| ds.point(i)).collect();
    let spec = ResidualSpec::new(model, ResidualKind::Evolution(ds.outputs.clone()), &ds.space)?;
    let basis = discover_points(&points, &spec, lib, cfg)?;
    let fp = fingerprint(idx.iter().flat_map(|&i| ds.row(i).iter().copied()));
    let config = serde_json::json!({ "discover": cfg, "run": echo });
    let result = DiscoveryResult::new(&basis, lib, config, fp);
    Ok(DiscoveryRun { lib: lib.clone(), basis, result })
}

/// The closed-form right-hand side of a preset, restricted to its outputs.
pub fn analytic_model(p: &Preset) -> Result<PolyModel> {
    let a = analytic_rhs(&p.pde)?;
    let space = p.space()?;
    let (_, outputs) = p.split(&space)?;
    if a.outputs != outputs {
        return Err(Error::Config(format!("analytic model outputs do not match preset {}", p.name)));
    }
    Ok(a.model)
}

pub fn run_analytic(p: &Preset, ds: &ProlongedDataset, seed: u64) -> Result<DiscoveryRun> {
    let model = analytic_model(p)?;
    let cfg = DiscoverConfig::new(p.samples, seed, p.threshold);
    let echo = serde_json::json!({ "preset": p, "model": "analytic" });
    discover_dataset(ds, &model, &p.library()?, &cfg, echo)
}

pub fn run_nn(p: &Preset, ds: &ProlongedDataset, mlp: &MlpConfig, seed: u64) -> Result<(DiscoveryRun, MlpModel, TrainReport)> {
    let (model, report) = train_mlp(ds, mlp)?;
    let cfg = DiscoverConfig::new(p.samples, seed, p.threshold);
    let echo = serde_json::json!({ "preset": p, "model": "mlp", "mlp": mlp });
    let run = discover_dataset(ds, &model, &p.library()?, &cfg, echo)?;
    Ok((run, model, report))
}

/// Rotates `result`'s basis towards sparsity and records the outcome in it.
pub fn apply_sparsify(result: &mut DiscoveryResult, params: &LadmapParams) -> Result<LadmapDiagnostics> {
    let basis = result.basis()?;
    let lib = FunctionLibrary::from_spec(&result.library)?;
    let (qs, _, diag) = ladmap_sparsify(&basis.q, params)?;
    let qs = canonicalize_basis(&qs, params.eps1);
    let shown = GeneratorBasis { q: clean_small(&qs, params.eps1), ..basis };
    result.q_sparse = Some(crate::discover::matrix_row_major(&qs));
    result.expressions_sparse = Some(crate::discover::render_generators(&shown, &lib));
    result.ladmap = Some(serde_json::json!({ "params": params, "diagnostics": &diag }));
    Ok(diag)
}

/// Static datasets: points on a constraint surface with no derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StaticCase {
    /// Unit circle, `F = x² + y² − 1`.
    Circle,
    /// Light cone in four-momentum space, `F = p0² − p1² − p2² − p3²`.
    Lorentz,
}

pub type StaticPoint = HashMap<JetVar, f64>;

impl StaticCase {
    pub fn space(self) -> JetSpace {
        match self {
            StaticCase::Circle => JetSpace::new(Vec::<String>::new(), strings(&["x", "y"])),
            StaticCase::Lorentz => JetSpace::new(Vec::<String>::new(), strings(&["p0", "p1", "p2", "p3"])),
        }
    }

    pub fn truth(self) -> &'static str {
        match self {
            StaticCase::Circle => "circle",
            StaticCase::Lorentz => "topquark",
        }
    }

    pub fn threshold(self) -> f64 {
        match self {
            StaticCase::Circle => 1e-6,
            StaticCase::Lorentz => 200.0,
        }
    }

    pub fn library(self) -> FunctionLibrary {
        build_linear_library(&self.space(), false).expect("fixed static space")
    }

    pub fn constraint(self) -> PolyModel {
        let (inputs, poly): (&[&str], &str) = match self {
            StaticCase::Circle => (&["x", "y"], "x^2 + y^2 - 1"),
            StaticCase::Lorentz => (&["p0", "p1", "p2", "p3"], "p0^2 - p1^2 - p2^2 - p3^2"),
        };
        PolyModel::parse(self.space(), inputs, &[poly]).expect("fixed constraint parses")
    }

    /// `m` seeded points on the constraint surface.
    pub fn surface_points(self, m: usize, seed: u64) -> Vec<StaticPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| match self {
                StaticCase::Circle => {
                    let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    HashMap::from([(JetVar::field(0), th.cos()), (JetVar::field(1), th.sin())])
                }
                StaticCase::Lorentz => {
                    let p: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
                    let e = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                    let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    HashMap::from([
                        (JetVar::field(0), s * e),
                        (JetVar::field(1), p[0]),
                        (JetVar::field(2), p[1]),
                        (JetVar::field(3), p[2]),
                    ])
                }
            })
            .collect()
    }
}

/// Discovery on a static surface with a given residual model.
pub fn run_static(case: StaticCase, model: &dyn RhsModel, cfg: &DiscoverConfig) -> Result<DiscoveryRun> {
    let space = case.space();
    let lib = case.library();
    let points = case.surface_points(cfg.samples, cfg.seed);
    let spec = ResidualSpec::new(model, ResidualKind::Direct, &space)?;
    let basis = discover_points(&points, &spec, &lib, cfg)?;
    let vars = space.jet_vars(0);
    let fp = fingerprint(points.iter().flat_map(|pt| vars.iter().map(|v| pt[v]).collect::<Vec<_>>()));
    let result = DiscoveryResult::new(&basis, &lib, serde_json::json!({ "discover": cfg, "static": case }), fp);
    Ok(DiscoveryRun { lib, basis, result })
}

/// Trains a timelike-vs-spacelike classifier on Gaussian four-momenta.
pub fn train_lorentz_classifier(n: usize, data_seed: u64, cfg: &MlpConfig) -> Result<(MlpModel, TrainReport)> {
    let space = StaticCase::Lorentz.space();
    let mut rng = ChaCha8Rng::seed_from_u64(data_seed);
    let x = DMatrix::from_fn(n, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
    let labels: Vec<f64> = x
        .row_iter()
        .map(|r| if r[0] * r[0] > r[1] * r[1] + r[2] * r[2] + r[3] * r[3] { 1.0 } else { 0.0 })
        .collect();
    train_classifier(&space, space.jet_vars(0), &x, &labels, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve() {
        for name in PRESET_NAMES {
            let p = preset(name).unwrap();
            let space = p.space().unwrap();
            p.split(&space).unwrap();
            analytic_model(&p).unwrap();
            let lib = p.library().unwrap();
            assert_eq!(lib.r(), [10, 10, 10, 15, 21, 21][PRESET_NAMES.iter().position(|n| *n == name).unwrap()]);
        }
        assert_eq!(preset("kdv").unwrap().gen.grid.substeps, 2);
        assert!(matches!(preset("nope"), Err(Error::UnknownDataset { .. })));
    }

    #[test]
    fn circle_static() {
        let case = StaticCase::Circle;
        let model = case.constraint();
        let run = run_static(case, &model, &DiscoverConfig::new(20, 1, case.threshold())).unwrap();
        assert_eq!(run.basis.d, 1);
    }
}
