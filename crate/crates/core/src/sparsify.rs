//! Sparsifying rotation of a generator basis.
//!
//! Finds an orthogonal `R` minimizing `‖QR‖₁,₁` with a linearized ADMM and
//! adaptive penalty, splitting `QR = Z` and alternating an orthogonal
//! Procrustes step on `R` with soft thresholding on `Z`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub fn soft_threshold(x: f64, eps: f64) -> f64 {
    x.signum() * (x.abs() - eps).max(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LadmapParams {
    /// Feasibility tolerance on `‖QR − Z‖∞`.
    pub eps1: f64,
    /// Step tolerance.
    pub eps2: f64,
    /// Initial penalty; `None` picks `max(0.1, 2√(n·d)/η_R)`.
    pub beta0: Option<f64>,
    pub beta_max: f64,
    pub rho0: f64,
    /// Multiplier on `‖Q‖₂²` giving `η_R`.
    pub eta_r_factor: f64,
    pub eta_z: f64,
    pub max_iter: usize,
    /// Extra runs from random orthogonal starts; the sparsest result wins.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for LadmapParams {
    fn default() -> Self {
        LadmapParams {
            eps1: 1e-4,
            eps2: 1e-4,
            beta0: None,
            beta_max: 1e10,
            rho0: 1.9,
            eta_r_factor: 1.02,
            eta_z: 1.02,
            max_iter: 10_000,
            restarts: 4,
            seed: 0,
        }
    }
}

impl LadmapParams {
    pub fn with_tolerances(eps1: f64, eps2: f64) -> Self {
        LadmapParams { eps1, eps2, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [self.eps1, self.eps2, self.beta0.unwrap_or(1.0), self.beta_max, self.eta_z];
        if pos.iter().any(|v| !(*v > 0.0)) || self.max_iter == 0 {
            return Err(Error::Config("LADMAP tolerances, penalties and max_iter must be positive".into()));
        }
        if self.rho0 < 1.0 || self.eta_r_factor <= 1.0 || self.eta_z <= 1.0 || self.beta_max < self.beta0.unwrap_or(0.0) {
            return Err(Error::Config("LADMAP needs rho0 >= 1, eta factors > 1, beta_max >= beta0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadmapDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub feasibility: f64,
    pub objective_before: f64,
    pub objective_after: f64,
    pub final_beta: f64,
    /// Which start produced the result; 0 is the identity start.
    pub start: usize,
}

pub fn norm_l11(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x.abs()).sum()
}

/// Maximum absolute row sum.
pub fn norm_inf(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn orthonormality_error(q: &DMatrix<f64>) -> f64 {
    let g = q.transpose() * q;
    (g - DMatrix::identity(q.ncols(), q.ncols())).abs().max()
}

fn polar(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = m.svd(true, true);
    match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => Ok(u * vt),
        _ => Err(Error::NonFiniteMatrix),
    }
}

/// Returns `(Q·R, R, diagnostics)`.
///
/// The first run starts from `R = I`; further runs start from seeded random
/// rotations, which gets past symmetric stationary points of the identity start.
pub fn ladmap_sparsify(q: &DMatrix<f64>, params: &LadmapParams) -> Result<(DMatrix<f64>, DMatrix<f64>, LadmapDiagnostics)> {
    params.validate()?;
    if q.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteMatrix);
    }
    let err = orthonormality_error(q);
    if err > 1e-8 {
        return Err(Error::NotOrthonormal(err));
    }
    let d = q.ncols();
    let objective_before = norm_l11(q);
    if d == 0 {
        let diag = LadmapDiagnostics {
            iterations: 0,
            converged: true,
            feasibility: 0.0,
            objective_before,
            objective_after: objective_before,
            final_beta: 0.0,
            start: 0,
        };
        return Ok((q.clone(), DMatrix::identity(0, 0), diag));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(DMatrix<f64>, DMatrix<f64>, LadmapDiagnostics)> = None;
    for start in 0..=params.restarts {
        let r0 = if start == 0 {
            DMatrix::identity(d, d)
        } else {
            DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng)).qr().q()
        };
        let (qs, r, mut diag) = ladmap_run(q, r0, params)?;
        diag.start = start;
        diag.objective_before = objective_before;
        let better = match &best {
            None => true,
            // prefer feasible runs, then the smaller objective
            Some((_, _, b)) => {
                (diag.converged && !b.converged)
                    || (diag.converged == b.converged && diag.objective_after < b.objective_after - 1e-9)
            }
        };
        if better {
            best = Some((qs, r, diag));
        }
    }
    Ok(best.unwrap())
}

fn ladmap_run(q: &DMatrix<f64>, r0: DMatrix<f64>, params: &LadmapParams) -> Result<(DMatrix<f64>, DMatrix<f64>, LadmapDiagnostics)> {
    let d = q.ncols();
    let q_norm2 = q.singular_values().max();
    let eta_r = params.eta_r_factor * q_norm2 * q_norm2;
    let eta_z = params.eta_z;
    let qt = q.transpose();

    let mut r = r0;
    let mut z = q * &r;
    let mut lam = DMatrix::<f64>::zeros(q.nrows(), d);
    let mut beta = params.beta0.unwrap_or_else(|| (0.1f64).max(2.0 * ((q.nrows() * d) as f64).sqrt() / eta_r));
    let mut iterations = 0;
    let mut converged = false;
    let mut feasibility = 0.0;
    while iterations < params.max_iter {
        iterations += 1;
        let qr = q * &r;
        let shifted = &r - &qt * (&lam + (&qr - &z) * beta) / (beta * eta_r);
        let r_new = polar(shifted)?;
        let qr_new = q * &r_new;
        let thr = 1.0 / (beta * eta_z);
        let z_new = (&z + (&lam + (&qr_new - &z) * beta) / (beta * eta_z)).map(|x| soft_threshold(x, thr));
        let gap = &qr_new - &z_new;
        lam += &gap * beta;
        let step = beta * (eta_r.sqrt() * norm_inf(&(&r_new - &r))).max(eta_z.sqrt() * norm_inf(&(&z_new - &z)));
        feasibility = norm_inf(&gap);
        r = r_new;
        z = z_new;
        if feasibility < params.eps1 && step <= params.eps2 {
            converged = true;
            break;
        }
        let rho = if step < params.eps2 { params.rho0 } else { 1.0 };
        beta = params.beta_max.min(rho * beta);
    }
    let qs = q * &r;
    let diag = LadmapDiagnostics {
        iterations,
        converged,
        feasibility,
        objective_before: 0.0,
        objective_after: norm_l11(&qs),
        final_beta: beta,
        start: 0,
    };
    Ok((qs, r, diag))
}

/// Deterministic representative of a basis up to column signs and order.
///
/// Each column is flipped so its largest-magnitude entry is positive, then
/// columns are sorted by nonzero count and lexicographically by entries.
/// Entries with magnitude below `tol` count as zero.
pub fn canonicalize_basis(q: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let mut cols: Vec<Vec<f64>> = q
        .column_iter()
        .map(|c| {
            let mut best = 0.0f64;
            for &x in c.iter() {
                // ties go to the earliest entry
                if x.abs() > best.abs() + tol {
                    best = x;
                }
            }
            let s = if best < 0.0 { -1.0 } else { 1.0 };
            c.iter().map(|x| x * s).collect()
        })
        .collect();
    let key = |c: &Vec<f64>| c.iter().filter(|x| x.abs() > tol).count();
    cols.sort_by(|a, b| {
        key(a).cmp(&key(b)).then_with(|| {
            for (x, y) in a.iter().zip(b) {
                if (x - y).abs() > tol {
                    return y.total_cmp(x);
                }
            }
            std::cmp::Ordering::Equal
        })
    });
    DMatrix::from_fn(q.nrows(), q.ncols(), |i, j| cols[j][i])
}

/// Zeroes entries below `tol·max|Q|`, for display.
pub fn clean_small(q: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let m = q.abs().max();
    q.map(|x| if x.abs() < tol * m { 0.0 } else { x })
}
