//! Assembly of the joint-sparsity system `Y = AX` relating boundary data to
//! induced interior currents, plus SVD preconditioning.
//!
//! Two kernel routes exist: the full-boundary route applies `(−½I + K)` to the
//! measured traces so currents couple through the free-space kernel `∇Γ`, and
//! the partial-boundary route uses the raw traces with the domain Neumann
//! kernel `∇N` instead.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{EitError, Result};
use crate::forward::MeasurementSet;
use crate::geometry::{BoundaryMesh, Grid, Point2};
use crate::layerpot::{apply_half_minus_k, grad_gamma, EvalPoints, NeumannSolver};

/// Which integral identity the system discretizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelTag {
    /// `(−½I + K)[(u−U)] = ∫ ∇Γ·I`; needs full-boundary samples.
    Calderon,
    /// `(u−U) = ∫ ∇N·I`; works with partial-boundary samples.
    NeumannPartial,
}

/// Assembled system `Y ≈ A X` with `A = [A₁ A₂]`.
#[derive(Clone, Debug)]
pub struct JointSystem {
    /// Matrix fed to the sparse solver: optionally preconditioned, always
    /// column-normalized.
    pub a: DMatrix<f64>,
    /// Kernel matrix before preconditioning and normalization.
    pub a_raw: DMatrix<f64>,
    /// Data matching `a` (preconditioned when `a` is).
    pub y: DMatrix<f64>,
    /// Data matching `a_raw`.
    pub y_raw: DMatrix<f64>,
    /// Column norms recorded by the normalization, for un-normalizing `X`.
    pub col_norms: DVector<f64>,
    pub kernel: KernelTag,
    pub preconditioned: bool,
    pub n_cells: usize,
}

impl JointSystem {
    /// Convert a solver-space solution back to physical currents
    /// (rows divided by the recorded column norms).
    pub fn unnormalize_rows(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for j in 0..out.nrows() {
            let scale = 1.0 / self.col_norms[j];
            for k in 0..out.ncols() {
                out[(j, k)] *= scale;
            }
        }
        out
    }

    /// Columns of `a_raw` restricted to the support cells, `m × 2ñ`.
    pub fn restrict_raw(&self, support: &[usize]) -> DMatrix<f64> {
        let m = self.a_raw.nrows();
        let n = self.n_cells;
        let mut out = DMatrix::zeros(m, 2 * support.len());
        for (local, &j) in support.iter().enumerate() {
            out.set_column(local, &self.a_raw.column(j));
            out.set_column(support.len() + local, &self.a_raw.column(n + j));
        }
        out
    }
}

/// Assemble the data matrix `Y` (`m × M`).
pub fn assemble_y(
    ms: &MeasurementSet,
    data_mesh: Option<&BoundaryMesh>,
    kernel: KernelTag,
) -> Result<DMatrix<f64>> {
    match kernel {
        KernelTag::Calderon => {
            if ms.geometry.is_partial() {
                return Err(EitError::Mismatch(
                    "partial-boundary geometry requires the neumann-partial kernel".into(),
                ));
            }
            let mesh = data_mesh.ok_or_else(|| {
                EitError::Mismatch("calderon assembly needs the measurement-point mesh".into())
            })?;
            if mesh.len() != ms.point_count() {
                return Err(EitError::Mismatch(format!(
                    "data mesh has {} nodes for {} measurement points",
                    mesh.len(),
                    ms.point_count()
                )));
            }
            let mut y = DMatrix::zeros(ms.point_count(), ms.excitations);
            for k in 0..ms.excitations {
                let col = apply_half_minus_k(mesh, &ms.values.column(k).into_owned())?;
                y.set_column(k, &col);
            }
            Ok(y)
        }
        KernelTag::NeumannPartial => Ok(ms.values.clone()),
    }
}

/// Guard distance below which a grid cell sits too close to a measurement
/// point for the midpoint kernel rule (quarter of a cell diagonal).
fn proximity_guard(h: f64) -> f64 {
    0.25 * h * std::f64::consts::SQRT_2
}

fn check_proximity(grid: &Grid, points: &[Point2]) -> Result<()> {
    let guard = proximity_guard(grid.h);
    for (j, c) in grid.centers.iter().enumerate() {
        for p in points {
            if (c - p).norm() < guard {
                return Err(EitError::InvalidGeometry(format!(
                    "grid cell {j} is within {guard:.3} of a measurement point"
                )));
            }
        }
    }
    Ok(())
}

/// Sensing matrix for the free-space kernel: entry `(i, j)` of block `A_d` is
/// `[∇_y Γ(x_i − y_j)]_d · δ` by the midpoint rule.
pub fn assemble_a_gamma(grid: &Grid, points: &[Point2]) -> Result<DMatrix<f64>> {
    check_proximity(grid, points)?;
    let (m, n) = (points.len(), grid.len());
    let mut a = DMatrix::zeros(m, 2 * n);
    for (i, x) in points.iter().enumerate() {
        for (j, y) in grid.centers.iter().enumerate() {
            let g = grad_gamma(&(y - x))?; // ∇_y Γ(x − y)
            a[(i, j)] = g.x * grid.delta;
            a[(i, n + j)] = g.y * grid.delta;
        }
    }
    Ok(a)
}

/// Sensing matrix for the Neumann kernel: entry `(i, j)` of block `A_d` is
/// `[∇_y N(x_i, y_j)]_d · δ`, with `x_i` given by boundary parameters.
pub fn assemble_a_neumann(
    grid: &Grid,
    solver: &NeumannSolver,
    params: &[f64],
) -> Result<DMatrix<f64>> {
    let points: Vec<Point2> = params
        .iter()
        .map(|&t| solver.mesh().curve.point(t))
        .collect();
    check_proximity(grid, &points)?;
    let table = solver.gradient_table(EvalPoints::Boundary(params), &grid.centers)?;
    let (m, n) = (params.len(), grid.len());
    let mut a = DMatrix::zeros(m, 2 * n);
    for i in 0..m {
        for j in 0..n {
            a[(i, j)] = table.n1[(i, j)] * grid.delta;
            a[(i, n + j)] = table.n2[(i, j)] * grid.delta;
        }
    }
    Ok(a)
}

/// Largest singular value.
pub fn max_singular_value(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// SVD preconditioner `P = (S² + λI)^{−1/2} U'` applied to both sides.
pub fn precondition(
    a: &DMatrix<f64>,
    y: &DMatrix<f64>,
    lambda: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if lambda < 0.0 {
        return Err(EitError::InvalidParameter(format!(
            "preconditioning regularization must be nonnegative, got {lambda}"
        )));
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.as_ref().expect("svd with u requested");
    let s = &svd.singular_values;
    // P = diag(1/√(s_i² + λ)) · U'.
    let r = s.len();
    let mut p = u.transpose();
    for i in 0..r {
        let scale = 1.0 / (s[i] * s[i] + lambda).sqrt();
        for c in 0..p.ncols() {
            p[(i, c)] *= scale;
        }
    }
    Ok((&p * a, &p * y))
}

/// Scale every column to unit ℓ2 norm, recording the norms.
pub fn normalize_columns(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let mut out = a.clone();
    let mut norms = DVector::zeros(a.ncols());
    for j in 0..a.ncols() {
        let norm = a.column(j).norm();
        if norm == 0.0 {
            return Err(EitError::SingularSystem(format!(
                "sensing matrix has a zero column ({j})"
            )));
        }
        norms[j] = norm;
        let inv = 1.0 / norm;
        for i in 0..a.nrows() {
            out[(i, j)] *= inv;
        }
    }
    Ok((out, norms))
}

/// Assemble the complete joint system for a measurement set.
///
/// `precond_lambda_factor`, when set, applies the SVD preconditioner with
/// `λ = factor · σ_max(A)²` before normalization.
pub fn build_joint_system(
    ms: &MeasurementSet,
    grid: &Grid,
    data_mesh: Option<&BoundaryMesh>,
    kernel: KernelTag,
    neumann: Option<&NeumannSolver>,
    precond_lambda_factor: Option<f64>,
) -> Result<JointSystem> {
    let y_raw = assemble_y(ms, data_mesh, kernel)?;
    let a_raw = match kernel {
        KernelTag::Calderon => assemble_a_gamma(grid, &ms.points)?,
        KernelTag::NeumannPartial => {
            let solver = neumann.ok_or_else(|| {
                EitError::Mismatch("neumann-partial assembly needs a Neumann solver".into())
            })?;
            assemble_a_neumann(grid, solver, &ms.params)?
        }
    };
    let (pre_a, pre_y, preconditioned) = match precond_lambda_factor {
        Some(factor) => {
            let lambda = factor * max_singular_value(&a_raw).powi(2);
            let (pa, py) = precondition(&a_raw, &y_raw, lambda)?;
            (pa, py, true)
        }
        None => (a_raw.clone(), y_raw.clone(), false),
    };
    let (a, col_norms) = normalize_columns(&pre_a)?;
    Ok(JointSystem {
        a,
        a_raw,
        y: pre_y,
        y_raw,
        kernel,
        col_norms,
        preconditioned,
        n_cells: grid.len(),
    })
}
