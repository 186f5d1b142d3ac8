//! Layer-potential toolbox: fundamental solution, boundary integral operators,
//! double/single layer evaluation, and the domain Neumann function.
//!
//! All operators are Nyström-discretized on [`BoundaryMesh`] nodes with
//! arc-length trapezoid weights. The double-layer kernel is smooth on smooth
//! curves (diagonal limit κ/(4π)), so the plain rule is spectrally accurate.
//! The single layer carries a logarithmic singularity and uses the classical
//! trigonometric log-quadrature instead.

use std::f64::consts::{PI, TAU};

use faer::linalg::solvers::Solve;
use nalgebra::{DMatrix, DVector};

use crate::error::{EitError, Result};
use crate::geometry::{BoundaryMesh, Curve, Point2};

/// Fundamental solution of the Laplacian, `(1/2π) ln |x|`.
pub fn gamma(x: &Point2) -> Result<f64> {
    let r = x.norm();
    if r == 0.0 {
        return Err(EitError::Domain("fundamental solution undefined at 0".into()));
    }
    Ok(r.ln() / TAU)
}

/// Gradient of the fundamental solution, `x / (2π |x|²)`.
pub fn grad_gamma(x: &Point2) -> Result<Point2> {
    let r2 = x.norm_squared();
    if r2 == 0.0 {
        return Err(EitError::Domain("fundamental solution undefined at 0".into()));
    }
    Ok(x / (TAU * r2))
}

/// Which boundary operator a matrix discretizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorTag {
    /// Double-layer boundary operator K with kernel ⟨y−x, ν_y⟩/(2π|x−y|²).
    NeumannPoincare,
    /// Its adjoint K* with kernel ⟨x−y, ν_x⟩/(2π|x−y|²).
    AdjointNeumannPoincare,
}

/// Dense Nyström matrix acting on nodal density values.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    pub matrix: DMatrix<f64>,
    pub tag: OperatorTag,
}

impl OperatorMatrix {
    pub fn apply(&self, density: &DVector<f64>) -> DVector<f64> {
        &self.matrix * density
    }
}

fn np_kernel_matrix(mesh: &BoundaryMesh, adjoint: bool) -> DMatrix<f64> {
    let n = mesh.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        let xi = mesh.nodes[i];
        for j in 0..n {
            let val = if i == j {
                mesh.curvature[i] / (4.0 * PI)
            } else {
                let d = mesh.nodes[j] - xi;
                let num = if adjoint {
                    -d.dot(&mesh.normals[i])
                } else {
                    d.dot(&mesh.normals[j])
                };
                num / (TAU * d.norm_squared())
            };
            k[(i, j)] = val * mesh.weights[j];
        }
    }
    k
}

/// Nyström discretization of the Neumann–Poincaré operator K on the mesh
/// nodes. Diagonal entries use the smooth-curve limit κ(x)/(4π).
pub fn np_operator(mesh: &BoundaryMesh) -> OperatorMatrix {
    OperatorMatrix {
        matrix: np_kernel_matrix(mesh, false),
        tag: OperatorTag::NeumannPoincare,
    }
}

/// Nyström discretization of the adjoint operator K*.
pub fn adjoint_np_operator(mesh: &BoundaryMesh) -> OperatorMatrix {
    OperatorMatrix {
        matrix: np_kernel_matrix(mesh, true),
        tag: OperatorTag::AdjointNeumannPoincare,
    }
}

/// Apply `(−½ I + K)` to boundary values sampled at the nodes of `data_mesh`.
///
/// The operator is discretized on the sample points themselves; with few
/// points its quadrature error is part of the modeled measurement error.
pub fn apply_half_minus_k(data_mesh: &BoundaryMesh, values: &DVector<f64>) -> Result<DVector<f64>> {
    if data_mesh.len() < 4 {
        return Err(EitError::InvalidParameter(
            "need at least 4 sample points to apply the boundary operator".into(),
        ));
    }
    if values.len() != data_mesh.len() {
        return Err(EitError::Mismatch(format!(
            "{} values for {} sample points",
            values.len(),
            data_mesh.len()
        )));
    }
    let k = np_operator(data_mesh);
    Ok(k.apply(values) - 0.5 * values)
}

/// Density of nodal values bound to its mesh.
#[derive(Clone, Debug)]
pub struct BoundaryDensity<'a> {
    pub mesh: &'a BoundaryMesh,
    pub values: DVector<f64>,
}

impl<'a> BoundaryDensity<'a> {
    pub fn new(mesh: &'a BoundaryMesh, values: DVector<f64>) -> Result<Self> {
        if values.len() != mesh.len() {
            return Err(EitError::Mismatch(format!(
                "{} density values for {} mesh nodes",
                values.len(),
                mesh.len()
            )));
        }
        Ok(BoundaryDensity { mesh, values })
    }
}

/// Double layer potential of a density, evaluated off the curve.
///
/// Accurate for points at least a couple of node spacings away from the
/// boundary; use [`interior_clearance`] to check a point before trusting the
/// value there.
pub fn double_layer(density: &BoundaryDensity, x: &Point2) -> f64 {
    let mesh = density.mesh;
    let mut acc = 0.0;
    for j in 0..mesh.len() {
        let d = mesh.nodes[j] - x;
        acc += d.dot(&mesh.normals[j]) / (TAU * d.norm_squared())
            * density.values[j]
            * mesh.weights[j];
    }
    acc
}

/// Distance from `x` to the nearest mesh node, in units of the node spacing.
/// Values below 2 flag unreliable off-curve quadrature.
pub fn interior_clearance(mesh: &BoundaryMesh, x: &Point2) -> f64 {
    let min_dist = mesh
        .nodes
        .iter()
        .map(|p| (p - x).norm())
        .fold(f64::INFINITY, f64::min);
    min_dist / mesh.node_spacing()
}

/// Single layer potential evaluated off the curve (plain quadrature).
pub fn single_layer_offcurve(density: &BoundaryDensity, x: &Point2) -> f64 {
    let mesh = density.mesh;
    let mut acc = 0.0;
    for j in 0..mesh.len() {
        let r = (mesh.nodes[j] - x).norm();
        acc += r.ln() / TAU * density.values[j] * mesh.weights[j];
    }
    acc
}

/// Quadrature weights `R_d` for the 2π-periodic log kernel
/// `ln(4 sin²((t−s)/2))`, indexed by node offset `d = (i−j) mod L`.
fn log_quadrature_weights(l: usize) -> Vec<f64> {
    let n = l / 2;
    (0..l)
        .map(|d| {
            let theta = TAU * d as f64 / l as f64;
            let mut sum = 0.0;
            for m in 1..n {
                sum += (m as f64 * theta).cos() / m as f64;
            }
            -(4.0 * PI / l as f64) * sum - (4.0 * PI / (l * l) as f64) * (n as f64 * theta).cos()
        })
        .collect()
}

/// Single-layer boundary matrix with spectral accuracy on analytic curves:
/// maps nodal density values to `S[φ]` at the same nodes.
///
/// Splits `ln|x(t)−x(s)|` into the periodic log singularity (handled by the
/// trigonometric product rule) and a smooth remainder (trapezoid rule).
pub fn single_layer_boundary_matrix(mesh: &BoundaryMesh) -> Result<DMatrix<f64>> {
    let l = mesh.len();
    if l % 2 != 0 {
        return Err(EitError::InvalidParameter(
            "log-quadrature needs an even node count".into(),
        ));
    }
    let r = log_quadrature_weights(l);
    let dt = TAU / l as f64;
    let mut s = DMatrix::zeros(l, l);
    for i in 0..l {
        for j in 0..l {
            let d = (i + l - j) % l;
            let smooth = if i == j {
                mesh.speeds[i].ln()
            } else {
                let dist = (mesh.nodes[i] - mesh.nodes[j]).norm();
                let half = 0.5 * (mesh.params[i] - mesh.params[j]);
                (dist / (2.0 * half.sin().abs())).ln()
            };
            s[(i, j)] = (0.5 * r[d] + dt * smooth) / TAU * mesh.speeds[j];
        }
    }
    Ok(s)
}

/// Band-limited interpolation matrix from `l` uniform parameter nodes to
/// arbitrary target parameters on `[0, 2π)`.
pub(crate) fn trig_interp_matrix(l: usize, targets: &[f64]) -> DMatrix<f64> {
    let lf = l as f64;
    let mut t_mat = DMatrix::zeros(targets.len(), l);
    for (p, &t) in targets.iter().enumerate() {
        for i in 0..l {
            let theta = t - TAU * i as f64 / lf;
            let half = 0.5 * theta;
            let wrapped = (half.sin()).abs();
            t_mat[(p, i)] = if wrapped < 1e-12 {
                1.0
            } else {
                (lf * half).sin() * (half.cos() / half.sin()) / lf
            };
        }
    }
    t_mat
}

/// Solver for the domain Neumann function `N(·, y)` on the background
/// boundary: `−Δ_x N = δ_y` with constant-flux Neumann data `−1/|∂Ω|` and
/// zero boundary mean.
///
/// Writes `N(x, y) = −Γ(x−y) + S[ρ_y](x) + c(y)` where the corrector density
/// `ρ_y` solves a second-kind equation with the adjoint Neumann–Poincaré
/// operator. The operator is factored once; each `y` costs one back-solve.
/// The gradient in `y` differentiates the Γ term analytically and the
/// corrector by fourth-order central differences with step `fd_step`.
pub struct NeumannSolver {
    mesh: BoundaryMesh,
    lu: faer::linalg::solvers::PartialPivLu<f64>,
    s_bnd: DMatrix<f64>,
    perimeter: f64,
    pub fd_step: f64,
}

/// Neumann-function gradient tables evaluated at a fixed set of points:
/// `n1[(i, j)] = ∂N/∂y₁ (x_i, y_j)` and likewise `n2` for `∂/∂y₂`.
#[derive(Clone, Debug)]
pub struct GradientTable {
    pub n1: DMatrix<f64>,
    pub n2: DMatrix<f64>,
}

/// Where gradient evaluation points live relative to the boundary curve.
pub enum EvalPoints<'a> {
    /// Boundary points given by their curve parameters.
    Boundary(&'a [f64]),
    /// Strictly interior points.
    Interior(&'a [Point2]),
}

impl NeumannSolver {
    pub fn new(mesh: &BoundaryMesh, fd_step: f64) -> Result<Self> {
        if fd_step <= 0.0 {
            return Err(EitError::InvalidParameter("fd_step must be positive".into()));
        }
        let l = mesh.len();
        let kstar = adjoint_np_operator(mesh).matrix;
        // B = (−½I + K*) is rank-deficient by one; adding the rank-one term
        // ρ ↦ (∫ρ dσ)·1 restores invertibility and selects the mean-zero
        // density.
        let mut b = kstar;
        for i in 0..l {
            b[(i, i)] -= 0.5;
            for j in 0..l {
                b[(i, j)] += mesh.weights[j];
            }
        }
        let bf = faer::Mat::from_fn(l, l, |i, j| b[(i, j)]);
        let lu = bf.partial_piv_lu();
        let s_bnd = single_layer_boundary_matrix(mesh)?;
        Ok(NeumannSolver {
            mesh: mesh.clone(),
            lu,
            s_bnd,
            perimeter: mesh.perimeter(),
            fd_step,
        })
    }

    pub fn mesh(&self) -> &BoundaryMesh {
        &self.mesh
    }

    fn check_interior(&self, y: &Point2) -> Result<()> {
        let inside = match self.mesh.curve {
            Curve::Ellipse { a, b } => (y.x / a).powi(2) + (y.y / b).powi(2) < 1.0,
            Curve::Circle { center, radius } => {
                (y - Point2::new(center[0], center[1])).norm() < radius
            }
            Curve::Kite { .. } => {
                return Err(EitError::InvalidGeometry(
                    "Neumann function only supported on ellipse/circle domains".into(),
                ))
            }
        };
        if inside {
            Ok(())
        } else {
            Err(EitError::Domain(format!(
                "source point ({}, {}) is not strictly inside the domain",
                y.x, y.y
            )))
        }
    }

    /// Solve the corrector densities for a batch of source points.
    fn corrector_densities(&self, ys: &[Point2]) -> DMatrix<f64> {
        let l = self.mesh.len();
        let mut rhs = faer::Mat::<f64>::zeros(l, ys.len());
        for (c, y) in ys.iter().enumerate() {
            for i in 0..l {
                let d = self.mesh.nodes[i] - y;
                rhs[(i, c)] = -1.0 / self.perimeter
                    + d.dot(&self.mesh.normals[i]) / (TAU * d.norm_squared());
            }
        }
        let sol = self.lu.solve(&rhs);
        DMatrix::from_fn(l, ys.len(), |i, c| sol[(i, c)])
    }

    /// `N(x_i, y)` at every mesh node, normalized to zero boundary mean.
    pub fn values_at_nodes(&self, y: &Point2) -> Result<DVector<f64>> {
        self.check_interior(y)?;
        let rho = self.corrector_densities(std::slice::from_ref(y));
        let correction = &self.s_bnd * rho.column(0);
        let l = self.mesh.len();
        let mut vals = DVector::zeros(l);
        for i in 0..l {
            let r = (self.mesh.nodes[i] - y).norm();
            vals[i] = -r.ln() / TAU + correction[i];
        }
        let mean: f64 = (0..l).map(|i| vals[i] * self.mesh.weights[i]).sum::<f64>() / self.perimeter;
        for i in 0..l {
            vals[i] -= mean;
        }
        Ok(vals)
    }

    /// `∇_y N(x, y)` for a single boundary point `x`.
    pub fn gradient_at_boundary(&self, x: &Point2, y: &Point2) -> Result<Point2> {
        let t = param_of_boundary_point(&self.mesh.curve, x)?;
        let table = self.gradient_table(EvalPoints::Boundary(&[t]), std::slice::from_ref(y))?;
        Ok(Point2::new(table.n1[(0, 0)], table.n2[(0, 0)]))
    }

    /// Gradient tables `(N_d)_{ij} = ∂N/∂y_d (x_i, y_j)` for all evaluation
    /// points and source cells.
    pub fn gradient_table(&self, targets: EvalPoints, ys: &[Point2]) -> Result<GradientTable> {
        for y in ys {
            self.check_interior(y)?;
        }
        let eps = self.fd_step;
        let n_cells = ys.len();

        // Interpolation to boundary targets, or direct quadrature at interior
        // targets, applied to the corrector part S[ρ].
        enum Targets<'b> {
            Boundary { interp: DMatrix<f64>, params: &'b [f64] },
            Interior(&'b [Point2]),
        }
        let tgt = match targets {
            EvalPoints::Boundary(params) => Targets::Boundary {
                interp: trig_interp_matrix(self.mesh.len(), params),
                params,
            },
            EvalPoints::Interior(points) => Targets::Interior(points),
        };
        let n_targets = match &tgt {
            Targets::Boundary { params, .. } => params.len(),
            Targets::Interior(points) => points.len(),
        };
        let target_points: Vec<Point2> = match &tgt {
            Targets::Boundary { params, .. } => {
                params.iter().map(|&t| self.mesh.curve.point(t)).collect()
            }
            Targets::Interior(points) => points.to_vec(),
        };

        let mut n1 = DMatrix::zeros(n_targets, n_cells);
        let mut n2 = DMatrix::zeros(n_targets, n_cells);

        // Fourth-order central stencil offsets and weights for f'(0).
        let offsets = [-2.0, -1.0, 1.0, 2.0];
        let coeffs = [1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0];

        let chunk = 64usize.max(1);
        for cells in (0..n_cells).collect::<Vec<_>>().chunks(chunk) {
            // 8 stencil sources per cell: (±ε, ±2ε) along each coordinate.
            let mut sources = Vec::with_capacity(cells.len() * 8);
            for &c in cells {
                let y = ys[c];
                for &o in &offsets {
                    sources.push(Point2::new(y.x + o * eps, y.y));
                }
                for &o in &offsets {
                    sources.push(Point2::new(y.x, y.y + o * eps));
                }
            }
            let densities = self.corrector_densities(&sources);
            // Corrector values R(x, y_s) + c(y_s) at the targets for every
            // stencil source.
            let at_nodes = &self.s_bnd * &densities;
            let at_targets: DMatrix<f64> = match &tgt {
                Targets::Boundary { interp, .. } => interp * &at_nodes,
                Targets::Interior(points) => {
                    let mut vals = DMatrix::zeros(points.len(), sources.len());
                    for (s, _) in sources.iter().enumerate() {
                        let col = densities.column(s);
                        for (p, x) in points.iter().enumerate() {
                            let mut acc = 0.0;
                            for jn in 0..self.mesh.len() {
                                let r = (self.mesh.nodes[jn] - x).norm();
                                acc += r.ln() / TAU * col[jn] * self.mesh.weights[jn];
                            }
                            vals[(p, s)] = acc;
                        }
                    }
                    vals
                }
            };
            // Zero-mean normalization constant c(y_s); its y-dependence is
            // part of the gradient.
            let mut consts = vec![0.0; sources.len()];
            for (s, ysrc) in sources.iter().enumerate() {
                let mut mean = 0.0;
                for i in 0..self.mesh.len() {
                    let r = (self.mesh.nodes[i] - ysrc).norm();
                    mean += (-r.ln() / TAU + at_nodes[(i, s)]) * self.mesh.weights[i];
                }
                consts[s] = -mean / self.perimeter;
            }

            for (local, &c) in cells.iter().enumerate() {
                let y = ys[c];
                let base = local * 8;
                for p in 0..n_targets {
                    let x = target_points[p];
                    // Analytic part: ∂/∂y_d of −Γ(x−y) = (x−y)_d/(2π|x−y|²).
                    let d = x - y;
                    let g = d / (TAU * d.norm_squared());
                    let mut g1 = g.x;
                    let mut g2 = g.y;
                    for (s, &w) in coeffs.iter().enumerate() {
                        g1 += w * (at_targets[(p, base + s)] + consts[base + s]) / eps;
                        g2 += w * (at_targets[(p, base + 4 + s)] + consts[base + 4 + s]) / eps;
                    }
                    n1[(p, c)] = g1;
                    n2[(p, c)] = g2;
                }
            }
        }
        Ok(GradientTable { n1, n2 })
    }
}

/// Recover the curve parameter of a boundary point (ellipse/circle only).
pub fn param_of_boundary_point(curve: &Curve, x: &Point2) -> Result<f64> {
    let t = match curve {
        Curve::Ellipse { a, b } => (x.y / b).atan2(x.x / a),
        Curve::Circle { center, .. } => (x.y - center[1]).atan2(x.x - center[0]),
        Curve::Kite { .. } => {
            return Err(EitError::InvalidGeometry(
                "cannot invert a kite boundary point".into(),
            ))
        }
    };
    let t = t.rem_euclid(TAU);
    let p = curve.point(t);
    if (p - x).norm() > 1e-8 {
        return Err(EitError::Domain(format!(
            "point ({}, {}) is not on the boundary",
            x.x, x.y
        )));
    }
    Ok(t)
}
