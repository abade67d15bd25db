//! Residual models `F(x, u⁽ⁿ⁾)` and their Jacobians.
//!
//! An [`RhsModel`] maps a list of input jet coordinates to outputs. A
//! [`ResidualSpec`] turns it into the residual whose Jacobian enters the
//! symmetry criterion: either `F = f(S_in) − S_out` for evolution equations or
//! `F = f(S_in)` when the model already is the constraint.

pub mod adan;
pub mod mlp;

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::jetdata::ProlongedDataset;
use crate::pdegen::PDE_NAMES;
use crate::prolong::DerivCoordSet;
use crate::symexpr::{JetLookup, JetPoly, JetSpace, JetVar};

pub use mlp::{Activation, Loss, LrSchedule, Mlp, MlpConfig, ModelHeader, TrainReport};

/// A differentiable map from input jet coordinates to `l` outputs.
pub trait RhsModel: Send + Sync {
    fn inputs(&self) -> &[JetVar];
    fn output_dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// `l × |inputs|`.
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>>;
}

struct Assignment<'a> {
    vars: &'a [JetVar],
    vals: &'a [f64],
}

impl JetLookup for Assignment<'_> {
    fn value(&self, v: &JetVar) -> Option<f64> {
        self.vars.iter().position(|w| w == v).map(|i| self.vals[i])
    }
}

/// Closed-form polynomial model with exact symbolic partials.
#[derive(Clone, Debug)]
pub struct PolyModel {
    space: JetSpace,
    inputs: Vec<JetVar>,
    polys: Vec<JetPoly>,
    partials: Vec<Vec<JetPoly>>,
}

impl PolyModel {
    pub fn new(space: JetSpace, inputs: Vec<JetVar>, polys: Vec<JetPoly>) -> Result<Self> {
        for p in &polys {
            if let Some(v) = p.vars().into_iter().find(|v| !inputs.contains(v)) {
                return Err(Error::UnhousedVariable(space.name(&v)));
            }
        }
        let partials = polys.iter().map(|p| inputs.iter().map(|v| p.partial(v)).collect()).collect();
        Ok(PolyModel { space, inputs, polys, partials })
    }

    /// Parses inputs and outputs from text, e.g. `(["u", "u_x", "u_xx"], ["u_xx + u_x^2"])`.
    pub fn parse(space: JetSpace, inputs: &[&str], polys: &[&str]) -> Result<Self> {
        let ins = inputs
            .iter()
            .map(|n| space.resolve(n).ok_or_else(|| Error::UnhousedVariable(n.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let ps = polys.iter().map(|s| JetPoly::parse(s, &space)).collect::<Result<Vec<_>>>()?;
        Self::new(space, ins, ps)
    }

    pub fn space(&self) -> &JetSpace {
        &self.space
    }

    pub fn polys(&self) -> &[JetPoly] {
        &self.polys
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.inputs.len() {
            return Err(Error::Shape(format!("input has {} entries, model takes {}", x.len(), self.inputs.len())));
        }
        Ok(())
    }
}

impl RhsModel for PolyModel {
    fn inputs(&self) -> &[JetVar] {
        &self.inputs
    }

    fn output_dim(&self) -> usize {
        self.polys.len()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let a = Assignment { vars: &self.inputs, vals: x };
        self.polys.iter().map(|p| p.evaluate(&a)).collect()
    }

    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check(x)?;
        let a = Assignment { vars: &self.inputs, vals: x };
        let mut j = DMatrix::zeros(self.polys.len(), self.inputs.len());
        for (r, row) in self.partials.iter().enumerate() {
            for (c, p) in row.iter().enumerate() {
                j[(r, c)] = p.evaluate(&a)?;
            }
        }
        Ok(j)
    }
}

/// A known right-hand side together with the jet space and outputs it lives on.
#[derive(Clone, Debug)]
pub struct AnalyticRhs {
    pub model: PolyModel,
    pub outputs: Vec<JetVar>,
}

/// Closed-form right-hand side of a built-in PDE, written over the
/// coordinates used for discovery (the wave equation in second-order form).
pub fn analytic_rhs(name: &str) -> Result<AnalyticRhs> {
    let d1 = || JetSpace::new(["t", "x"], ["u"]);
    let one = ["u", "u_x", "u_xx"];
    let two = ["u", "u_x", "u_y", "u_xx", "u_yy", "u_xy", "v", "v_x", "v_y", "v_xx", "v_yy", "v_xy"];
    let (space, inputs, polys, outputs): (JetSpace, &[&str], Vec<&str>, Vec<&str>) = match name {
        "burgers" => (d1(), &one, vec!["u_xx + u_x^2"], vec!["u_t"]),
        "heat" => (d1(), &one, vec!["u_xx"], vec!["u_t"]),
        "kdv" => (d1(), &["u", "u_x", "u_xx", "u_xxx"], vec!["-u_xxx - u*u_x"], vec!["u_t"]),
        "wave2d" => (
            JetSpace::new(["t", "x", "y"], ["u"]),
            &two[..6],
            vec!["u_xx + u_yy"],
            vec!["u_tt"],
        ),
        "schrodinger2d" => (
            JetSpace::new(["t", "x", "y"], ["u", "v"]),
            &two,
            vec!["-0.5*v_xx - 0.5*v_yy + v*u^2 + v^3", "0.5*u_xx + 0.5*u_yy - u*v^2 - u^3"],
            vec!["u_t", "v_t"],
        ),
        "rd2d" => (
            JetSpace::new(["t", "x", "y"], ["u", "v"]),
            &two,
            vec![
                "(1 - u^2 - v^2)*u + (u^2 + v^2)*v + 0.1*u_xx + 0.1*u_yy",
                "-(u^2 + v^2)*u + (1 - u^2 - v^2)*v + 0.1*v_xx + 0.1*v_yy",
            ],
            vec!["u_t", "v_t"],
        ),
        _ => return Err(Error::UnknownPde { name: name.to_string(), options: PDE_NAMES.join(", ") }),
    };
    let outputs = outputs.iter().map(|n| space.resolve(n).unwrap()).collect();
    let model = PolyModel::parse(space, inputs, &polys)?;
    Ok(AnalyticRhs { model, outputs })
}

/// Trained network over named jet coordinates.
#[derive(Clone, Debug)]
pub struct MlpModel {
    pub net: Mlp,
    pub space: JetSpace,
    pub inputs: Vec<JetVar>,
    pub outputs: Vec<JetVar>,
    pub loss: Loss,
    pub seed: u64,
}

impl RhsModel for MlpModel {
    fn inputs(&self) -> &[JetVar] {
        &self.inputs
    }

    fn output_dim(&self) -> usize {
        self.net.output_dim()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.net.forward(x)
    }

    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.net.jacobian(x)
    }
}

impl MlpModel {
    pub fn save(&self, dir: &Path, name: &str) -> Result<()> {
        let mut h = ModelHeader::new(self.seed, self.loss);
        h.coords = self.space.coords.clone();
        h.fields = self.space.fields.clone();
        h.inputs = self.inputs.iter().map(|v| self.space.name(v)).collect();
        h.outputs = self.outputs.iter().map(|v| self.space.name(v)).collect();
        self.net.save(dir, name, &h)
    }

    pub fn load(dir: &Path, name: &str) -> Result<Self> {
        let (net, h) = Mlp::load(dir, name)?;
        let space = JetSpace::new(h.coords.clone(), h.fields.clone());
        let resolve = |names: &[String]| -> Result<Vec<JetVar>> {
            names.iter().map(|n| space.resolve(n).ok_or_else(|| Error::UnhousedVariable(n.clone()))).collect()
        };
        let inputs = resolve(&h.inputs)?;
        let outputs = resolve(&h.outputs)?;
        if inputs.len() != net.input_dim() {
            return Err(Error::Shape("header inputs disagree with the network".into()));
        }
        Ok(MlpModel { net, space, inputs, outputs, loss: h.loss, seed: h.seed })
    }
}

/// Fits `S_out ≈ f(S_in)` on a prolonged dataset with declared split.
pub fn train_mlp(ds: &ProlongedDataset, cfg: &MlpConfig) -> Result<(MlpModel, TrainReport)> {
    if ds.inputs.is_empty() || ds.outputs.is_empty() {
        return Err(Error::Config("dataset has no declared input/output split".into()));
    }
    let cin: Vec<usize> = ds.inputs.iter().map(|v| ds.column(v).unwrap()).collect();
    let cout: Vec<usize> = ds.outputs.iter().map(|v| ds.column(v).unwrap()).collect();
    let x = DMatrix::from_fn(ds.len(), cin.len(), |i, j| ds.row(i)[cin[j]]);
    let y = DMatrix::from_fn(ds.len(), cout.len(), |i, j| ds.row(i)[cout[j]]);
    let (net, report) = mlp::fit(&x, &y, Loss::Mse, cfg)?;
    let model = MlpModel {
        net,
        space: ds.space.clone(),
        inputs: ds.inputs.clone(),
        outputs: ds.outputs.clone(),
        loss: Loss::Mse,
        seed: cfg.seed,
    };
    Ok((model, report))
}

/// Fits a binary classifier; its logit serves as the static residual.
pub fn train_classifier(
    space: &JetSpace,
    inputs: Vec<JetVar>,
    x: &DMatrix<f64>,
    labels: &[f64],
    cfg: &MlpConfig,
) -> Result<(MlpModel, TrainReport)> {
    let y = DMatrix::from_column_slice(labels.len(), 1, labels);
    let (net, report) = mlp::fit(x, &y, Loss::Logistic, cfg)?;
    Ok((MlpModel { net, space: space.clone(), inputs, outputs: vec![], loss: Loss::Logistic, seed: cfg.seed }, report))
}

/// How model outputs become residual components.
#[derive(Clone, Debug, PartialEq)]
pub enum ResidualKind {
    /// `F_ν = f_ν(S_in) − S_out[ν]`.
    Evolution(Vec<JetVar>),
    /// `F_ν = f_ν(S_in)`, e.g. a classifier logit or a closed-form constraint.
    Direct,
}

/// A residual model with the row layout of its Jacobian.
pub struct ResidualSpec<'a> {
    pub model: &'a dyn RhsModel,
    pub kind: ResidualKind,
    rows: DerivCoordSet,
    input_cols: Vec<usize>,
    output_cols: Vec<usize>,
}

impl<'a> ResidualSpec<'a> {
    /// Rows are the model inputs followed by any outputs not already among them.
    pub fn new(model: &'a dyn RhsModel, kind: ResidualKind, space: &JetSpace) -> Result<Self> {
        let mut rows: Vec<JetVar> = model.inputs().to_vec();
        if let ResidualKind::Evolution(outs) = &kind {
            if outs.len() != model.output_dim() {
                return Err(Error::Shape(format!("{} outputs for a model with {}", outs.len(), model.output_dim())));
            }
            for v in outs {
                if !rows.contains(v) {
                    rows.push(v.clone());
                }
            }
        }
        let order = rows.iter().map(JetVar::order).max().unwrap_or(0);
        let rows = DerivCoordSet::new(space, order, rows)?;
        let input_cols = model.inputs().iter().map(|v| rows.position(v).unwrap()).collect();
        let output_cols = match &kind {
            ResidualKind::Evolution(outs) => outs.iter().map(|v| rows.position(v).unwrap()).collect(),
            ResidualKind::Direct => vec![],
        };
        Ok(ResidualSpec { model, kind, rows, input_cols, output_cols })
    }

    pub fn rows(&self) -> &DerivCoordSet {
        &self.rows
    }

    pub fn l(&self) -> usize {
        self.model.output_dim()
    }

    /// `J_F` from the model input values.
    pub fn jacobian_from_inputs(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let jf = self.model.jacobian(x)?;
        let mut j = DMatrix::zeros(self.l(), self.rows.len());
        for (c, &col) in self.input_cols.iter().enumerate() {
            for r in 0..self.l() {
                j[(r, col)] += jf[(r, c)];
            }
        }
        for (r, &col) in self.output_cols.iter().enumerate() {
            j[(r, col)] -= 1.0;
        }
        Ok(j)
    }

    /// Residual value `F` at a point.
    pub fn residual<L: JetLookup + ?Sized>(&self, pt: &L) -> Result<Vec<f64>> {
        let x = gather(self.model.inputs(), pt)?;
        let mut f = self.model.eval(&x)?;
        if let ResidualKind::Evolution(outs) = &self.kind {
            for (fv, v) in f.iter_mut().zip(outs) {
                *fv -= pt.value(v).ok_or_else(|| Error::UnhousedVariable(v.to_string()))?;
            }
        }
        Ok(f)
    }
}

fn gather<L: JetLookup + ?Sized>(vars: &[JetVar], pt: &L) -> Result<Vec<f64>> {
    vars.iter().map(|v| pt.value(v).ok_or_else(|| Error::UnhousedVariable(v.to_string()))).collect()
}

/// `J_F` at a point, `l × |rows|`.
pub fn residual_jacobian<L: JetLookup + ?Sized>(spec: &ResidualSpec, pt: &L) -> Result<DMatrix<f64>> {
    spec.jacobian_from_inputs(&gather(spec.model.inputs(), pt)?)
}
