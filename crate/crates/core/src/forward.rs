//! Direct transmission solver and synthetic boundary measurements.
//!
//! The potential is represented as `u = H_k + S_∂Ω[ψ] + Σ_p S_∂D_p[φ_p]` with
//! one single-layer density per curve. Flux continuity across each anomaly
//! boundary and the Neumann condition on the outer boundary give a coupled
//! second-kind system, assembled densely and factored once per scenario; all
//! excitations share the factorization.

use std::f64::consts::TAU;

use faer::linalg::solvers::Solve;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{EitError, Result};
use crate::geometry::{
    measurement_params, measurement_points, BoundaryMesh, GeometryTag, HalfSide, Point2, Scenario,
};
use crate::layerpot::{single_layer_boundary_matrix, trig_interp_matrix};

/// Default node count per boundary curve in the direct solver.
pub const DEFAULT_BOUNDARY_NODES: usize = 2000;

/// Number of available boundary currents.
pub const MAX_EXCITATIONS: usize = 4;

/// Boundary current `g_k = ∇H_k·ν` induced by a harmonic polynomial `H_k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Excitation {
    /// 1-based index into `H₁ = x₁, H₂ = x₂, H₃ = x₁²−x₂², H₄ = x₁x₂`.
    pub index: usize,
}

impl Excitation {
    pub fn new(index: usize) -> Result<Self> {
        if (1..=MAX_EXCITATIONS).contains(&index) {
            Ok(Excitation { index })
        } else {
            Err(EitError::InvalidParameter(format!(
                "excitation index must be 1..=4, got {index}"
            )))
        }
    }

    pub fn all() -> [Excitation; MAX_EXCITATIONS] {
        [1, 2, 3, 4].map(|index| Excitation { index })
    }

    /// Boundary current values at the mesh nodes.
    pub fn boundary_current(&self, mesh: &BoundaryMesh) -> DVector<f64> {
        DVector::from_fn(mesh.len(), |i, _| {
            background_gradient(self.index, &mesh.nodes[i]).dot(&mesh.normals[i])
        })
    }
}

/// Harmonic background potential `H_k(x)`.
pub fn background_potential(k: usize, x: &Point2) -> f64 {
    match k {
        1 => x.x,
        2 => x.y,
        3 => x.x * x.x - x.y * x.y,
        4 => x.x * x.y,
        _ => panic!("excitation index {k} out of range"),
    }
}

/// Gradient `∇H_k(x)`.
pub fn background_gradient(k: usize, x: &Point2) -> Point2 {
    match k {
        1 => Point2::new(1.0, 0.0),
        2 => Point2::new(0.0, 1.0),
        3 => Point2::new(2.0 * x.x, -2.0 * x.y),
        4 => Point2::new(x.y, x.x),
        _ => panic!("excitation index {k} out of range"),
    }
}

/// Boundary mean of `H_k` over a mesh (the background solution is `H_k`
/// shifted to zero boundary mean).
pub fn background_boundary_mean(k: usize, mesh: &BoundaryMesh) -> f64 {
    let total: f64 = (0..mesh.len())
        .map(|i| background_potential(k, &mesh.nodes[i]) * mesh.weights[i])
        .sum();
    total / mesh.perimeter()
}

/// Cross-curve adjoint double-layer block: row point/normal from `target`,
/// source density on `source`. Curves must be disjoint.
fn adjoint_cross_block(target: &BoundaryMesh, source: &BoundaryMesh) -> DMatrix<f64> {
    DMatrix::from_fn(target.len(), source.len(), |i, j| {
        let d = target.nodes[i] - source.nodes[j];
        d.dot(&target.normals[i]) / (TAU * d.norm_squared()) * source.weights[j]
    })
}

/// Single-layer evaluation block across disjoint curves.
fn single_layer_cross_block(target: &BoundaryMesh, source: &BoundaryMesh) -> DMatrix<f64> {
    DMatrix::from_fn(target.len(), source.len(), |i, j| {
        (target.nodes[i] - source.nodes[j]).norm().ln() / TAU * source.weights[j]
    })
}

/// Factored transmission system for one scenario geometry.
pub struct TransmissionSystem {
    outer: BoundaryMesh,
    inners: Vec<BoundaryMesh>,
    sigmas: Vec<f64>,
    lu: faer::linalg::solvers::PartialPivLu<f64>,
    /// Single-layer boundary matrix of the outer curve (log-quadrature).
    s_outer: DMatrix<f64>,
    /// Trace blocks mapping inner densities to outer-node values.
    s_cross: Vec<DMatrix<f64>>,
    size: usize,
    condition_indicator: f64,
}

impl TransmissionSystem {
    pub fn assemble(
        scenario: &Scenario,
        outer: BoundaryMesh,
        inners: Vec<BoundaryMesh>,
    ) -> Result<Self> {
        if inners.len() != scenario.anomalies.len() {
            return Err(EitError::Mismatch(
                "one anomaly mesh required per anomaly".into(),
            ));
        }
        let sigmas: Vec<f64> = scenario.anomalies.iter().map(|a| a.sigma).collect();
        for s in &sigmas {
            if !(*s > 0.0) {
                return Err(EitError::InvalidParameter(format!(
                    "conductivity must be positive, got {s}"
                )));
            }
        }
        let p = inners.len();
        let sizes: Vec<usize> = inners.iter().map(|m| m.len()).chain([outer.len()]).collect();
        let offsets: Vec<usize> = sizes
            .iter()
            .scan(0usize, |acc, &s| {
                let o = *acc;
                *acc += s;
                Some(o)
            })
            .collect();
        let size = sizes.iter().sum();

        let mut a = DMatrix::<f64>::zeros(size, size);
        // Inner-curve rows: flux transmission across each anomaly boundary.
        for (pi, inner) in inners.iter().enumerate() {
            let contrast = sigmas[pi] - 1.0;
            let row0 = offsets[pi];
            // Self block: ((σ+1)/2) I − (σ−1) K*.
            let kstar = crate::layerpot::adjoint_np_operator(inner).matrix;
            for i in 0..inner.len() {
                for j in 0..inner.len() {
                    a[(row0 + i, row0 + j)] = -contrast * kstar[(i, j)];
                }
                a[(row0 + i, row0 + i)] += 0.5 * (sigmas[pi] + 1.0);
            }
            // Coupling to the other inner curves and the outer curve.
            for (qi, other) in inners.iter().enumerate() {
                if qi == pi {
                    continue;
                }
                let block = adjoint_cross_block(inner, other);
                let col0 = offsets[qi];
                for i in 0..inner.len() {
                    for j in 0..other.len() {
                        a[(row0 + i, col0 + j)] = -contrast * block[(i, j)];
                    }
                }
            }
            let block = adjoint_cross_block(inner, &outer);
            let col0 = offsets[p];
            for i in 0..inner.len() {
                for j in 0..outer.len() {
                    a[(row0 + i, col0 + j)] = -contrast * block[(i, j)];
                }
            }
        }
        // Outer rows: Neumann condition. (−½I + K*) is rank-deficient by one;
        // the added rank-one term selects the mean-zero density.
        {
            let row0 = offsets[p];
            let kstar = crate::layerpot::adjoint_np_operator(&outer).matrix;
            for i in 0..outer.len() {
                for j in 0..outer.len() {
                    a[(row0 + i, row0 + j)] = kstar[(i, j)] + outer.weights[j];
                }
                a[(row0 + i, row0 + i)] -= 0.5;
            }
            for (qi, inner) in inners.iter().enumerate() {
                let block = adjoint_cross_block(&outer, inner);
                let col0 = offsets[qi];
                for i in 0..outer.len() {
                    for j in 0..inner.len() {
                        a[(row0 + i, col0 + j)] = block[(i, j)];
                    }
                }
            }
        }

        let af = faer::Mat::from_fn(size, size, |i, j| a[(i, j)]);
        let lu = af.partial_piv_lu();
        let condition_indicator = condition_indicator(&af, &lu);

        let s_outer = single_layer_boundary_matrix(&outer)?;
        let s_cross = inners
            .iter()
            .map(|inner| single_layer_cross_block(&outer, inner))
            .collect();
        Ok(TransmissionSystem {
            outer,
            inners,
            sigmas,
            lu,
            s_outer,
            s_cross,
            size,
            condition_indicator,
        })
    }

    pub fn outer_mesh(&self) -> &BoundaryMesh {
        &self.outer
    }

    /// Rough spectral condition estimate of the assembled system.
    pub fn condition_indicator(&self) -> f64 {
        self.condition_indicator
    }

    /// Solve for the densities of every excitation at once.
    fn solve_densities(&self, excitations: &[Excitation]) -> DMatrix<f64> {
        let p = self.inners.len();
        let mut rhs = faer::Mat::<f64>::zeros(self.size, excitations.len());
        let mut row0 = 0;
        for (pi, inner) in self.inners.iter().enumerate() {
            let contrast = self.sigmas[pi] - 1.0;
            for (c, exc) in excitations.iter().enumerate() {
                for i in 0..inner.len() {
                    let g = background_gradient(exc.index, &inner.nodes[i]);
                    rhs[(row0 + i, c)] = contrast * g.dot(&inner.normals[i]);
                }
            }
            row0 += inner.len();
        }
        debug_assert_eq!(row0 + self.outer.len(), self.size);
        let _ = p;
        let sol = self.lu.solve(&rhs);
        DMatrix::from_fn(self.size, excitations.len(), |i, c| sol[(i, c)])
    }

    /// Trace of `u_k − U_k` at the outer mesh nodes, with both potentials
    /// normalized to zero boundary mean.
    pub fn trace_difference(&self, excitations: &[Excitation]) -> DMatrix<f64> {
        let densities = self.solve_densities(excitations);
        let l = self.outer.len();
        let mut traces = DMatrix::zeros(l, excitations.len());
        let mut row0 = 0;
        let mut parts: Vec<DMatrix<f64>> = Vec::new();
        for (pi, inner) in self.inners.iter().enumerate() {
            let block = densities.rows(row0, inner.len()).into_owned();
            parts.push(&self.s_cross[pi] * block);
            row0 += inner.len();
        }
        let psi = densities.rows(row0, l).into_owned();
        let outer_part = &self.s_outer * psi;
        for c in 0..excitations.len() {
            let mut col = outer_part.column(c).into_owned();
            for part in &parts {
                col += part.column(c);
            }
            let mean: f64 = (0..l).map(|i| col[i] * self.outer.weights[i]).sum::<f64>()
                / self.outer.perimeter();
            for i in 0..l {
                traces[(i, c)] = col[i] - mean;
            }
        }
        traces
    }
}

fn condition_indicator(a: &faer::Mat<f64>, lu: &faer::linalg::solvers::PartialPivLu<f64>) -> f64 {
    // Power iteration for σ_max, inverse iteration through the factorization
    // for σ_min; a handful of steps is enough for an order-of-magnitude
    // indicator.
    let n = a.nrows();
    let mut v = faer::Mat::from_fn(n, 1, |i, _| ((i * 2654435761 + 1) % 1000) as f64 / 1000.0 - 0.5);
    let mut sigma_max = 1.0;
    for _ in 0..8 {
        let w = a.transpose() * (a * &v);
        let norm = w.norm_l2();
        if norm == 0.0 {
            return f64::INFINITY;
        }
        sigma_max = norm.sqrt();
        v = w / norm;
    }
    let mut u = v.clone();
    let mut sigma_min = sigma_max;
    for _ in 0..8 {
        let w = lu.solve(lu.solve_transpose(&u));
        let norm = w.norm_l2();
        if norm == 0.0 {
            return f64::INFINITY;
        }
        sigma_min = (1.0 / norm).sqrt();
        u = w / norm;
    }
    sigma_max / sigma_min
}

/// Forward data for all four excitations on one scenario.
pub struct ForwardSolution {
    pub scenario: Scenario,
    pub mesh: BoundaryMesh,
    pub anomaly_meshes: Vec<BoundaryMesh>,
    /// `(u_k − U_k)` at the outer mesh nodes, one column per excitation.
    pub traces: DMatrix<f64>,
    pub condition_indicator: f64,
}

/// Solve the scenario's transmission problem with `nodes` points per curve.
pub fn solve_forward(scenario: &Scenario, nodes: usize) -> Result<ForwardSolution> {
    let outer = crate::geometry::make_ellipse(scenario.ellipse_a, scenario.ellipse_b, nodes)?;
    let inners: Vec<BoundaryMesh> = scenario
        .anomalies
        .iter()
        .map(|a| a.shape.curve().mesh(nodes))
        .collect::<Result<_>>()?;
    let system = TransmissionSystem::assemble(scenario, outer, inners)?;
    let traces = system.trace_difference(&Excitation::all());
    Ok(ForwardSolution {
        scenario: scenario.clone(),
        mesh: system.outer.clone(),
        anomaly_meshes: system.inners.clone(),
        traces,
        condition_indicator: system.condition_indicator,
    })
}

/// Boundary trace of `u_k` at the outer mesh nodes (zero-mean normalized) for
/// a single excitation.
pub fn solve_transmission(
    scenario: &Scenario,
    excitation: Excitation,
    outer: BoundaryMesh,
    anomaly_meshes: Vec<BoundaryMesh>,
) -> Result<DVector<f64>> {
    let system = TransmissionSystem::assemble(scenario, outer, anomaly_meshes)?;
    let diff = system.trace_difference(&[excitation]);
    let mesh = &system.outer;
    let mean = background_boundary_mean(excitation.index, mesh);
    Ok(DVector::from_fn(mesh.len(), |i, _| {
        diff[(i, 0)] + background_potential(excitation.index, &mesh.nodes[i]) - mean
    }))
}

/// Per-excitation boundary data at the measurement points, noisy and
/// noiseless.
#[derive(Clone, Debug)]
pub struct MeasurementSet {
    pub scenario: Scenario,
    pub geometry: GeometryTag,
    pub half_side: HalfSide,
    pub params: Vec<f64>,
    pub points: Vec<Point2>,
    /// Number of excitations used (first `M` of the builtin currents).
    pub excitations: usize,
    pub snr_db: f64,
    pub seed: u64,
    /// `(u_k − U_k)` samples with measurement noise, `m × M`.
    pub values: DMatrix<f64>,
    /// Noise-free copy of the same samples.
    pub noiseless: DMatrix<f64>,
}

impl MeasurementSet {
    pub fn point_count(&self) -> usize {
        self.points.len()
    }
}

fn noise_rng(seed: u64, excitation: usize) -> ChaCha8Rng {
    // Distinct stream per (seed, excitation) pair so parallel and serial
    // evaluation orders agree.
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ excitation as u64)
}

/// Sample the forward traces at the measurement points and add per-excitation
/// Gaussian noise at the requested SNR.
pub fn measure(
    fwd: &ForwardSolution,
    geometry: GeometryTag,
    half_side: HalfSide,
    excitations: usize,
    snr_db: f64,
    seed: u64,
) -> Result<MeasurementSet> {
    if !(1..=MAX_EXCITATIONS).contains(&excitations) {
        return Err(EitError::InvalidParameter(format!(
            "excitation count must be 1..=4, got {excitations}"
        )));
    }
    let params = measurement_params(geometry, half_side);
    let points = measurement_points(geometry, &fwd.mesh, half_side);
    let interp = trig_interp_matrix(fwd.mesh.len(), &params);
    let m = params.len();
    let mut noiseless = DMatrix::zeros(m, excitations);
    for k in 0..excitations {
        let col = &interp * fwd.traces.column(k);
        noiseless.set_column(k, &col);
    }
    let mut values = noiseless.clone();
    if snr_db.is_finite() {
        for k in 0..excitations {
            let mut rng = noise_rng(seed, k + 1);
            let noise = DVector::<f64>::from_fn(m, |_, _| rng.sample(StandardNormal));
            let signal_norm = noiseless.column(k).norm();
            let noise_norm = noise.norm();
            if signal_norm > 0.0 && noise_norm > 0.0 {
                // Scale so ‖signal‖/‖noise‖ realizes the SNR exactly.
                let scale = signal_norm * 10f64.powf(-snr_db / 20.0) / noise_norm;
                for i in 0..m {
                    values[(i, k)] += scale * noise[i];
                }
            }
        }
    }
    Ok(MeasurementSet {
        scenario: fwd.scenario.clone(),
        geometry,
        half_side,
        params,
        points,
        excitations,
        snr_db,
        seed,
        values,
        noiseless,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_ellipse, Anomaly, AnomalyShape};
    use approx::assert_relative_eq;

    fn disk_scenario(domain_r: f64, inc_r: f64, sigma: f64) -> Scenario {
        Scenario {
            name: "concentric".into(),
            ellipse_a: domain_r,
            ellipse_b: domain_r,
            grid_h: 0.25,
            geometry: GeometryTag::M100,
            excitations: 2,
            snr_db: f64::INFINITY,
            seed: 0,
            half_side: HalfSide::Upper,
            anomalies: vec![Anomaly {
                shape: AnomalyShape::Disk { center: [0.0, 0.0], radius: inc_r },
                sigma,
            }],
        }
    }

    /// Separation-of-variables solution for a concentric disk inclusion with
    /// boundary current from `H₁`: `u = A r cosθ` inside,
    /// `u = (B r + C/r) cosθ` outside, matched across the interface.
    fn concentric_trace_coefficient(domain_r: f64, inc_r: f64, sigma: f64) -> f64 {
        let r2 = (inc_r / domain_r).powi(2);
        let a = 2.0 / ((1.0 + sigma) - r2 * (1.0 - sigma));
        let b = a * (1.0 + sigma) / 2.0;
        let c = inc_r * inc_r * (1.0 - sigma) * a / 2.0;
        b * domain_r + c / domain_r - domain_r
    }

    #[test]
    fn background_values() {
        assert_eq!(background_potential(1, &Point2::new(3.0, 2.0)), 3.0);
        assert_eq!(background_potential(3, &Point2::new(2.0, 1.0)), 3.0);
        let g = background_gradient(4, &Point2::new(2.0, 1.0));
        assert_eq!((g.x, g.y), (1.0, 2.0));
    }

    #[test]
    fn boundary_currents_are_compatible() {
        let mesh = make_ellipse(10.0, 7.0, 2000).unwrap();
        for exc in Excitation::all() {
            let g = exc.boundary_current(&mesh);
            let total: f64 = (0..mesh.len()).map(|i| g[i] * mesh.weights[i]).sum();
            assert!(total.abs() < 1e-10, "excitation {} flux {total}", exc.index);
        }
    }

    #[test]
    fn no_contrast_recovers_background() {
        let mut scenario = disk_scenario(5.0, 1.5, 1.0);
        scenario.anomalies[0].sigma = 1.0;
        let fwd = solve_forward(&scenario, 256).unwrap();
        assert!(fwd.traces.norm() < 1e-8);
    }

    #[test]
    fn concentric_disk_matches_series_solution() {
        let (big_r, inc_r, sigma) = (5.0, 1.5, 3.0);
        let scenario = disk_scenario(big_r, inc_r, sigma);
        let fwd = solve_forward(&scenario, 400).unwrap();
        let coeff = concentric_trace_coefficient(big_r, inc_r, sigma);
        for i in (0..400).step_by(13) {
            let theta = fwd.mesh.params[i];
            assert_relative_eq!(
                fwd.traces[(i, 0)],
                coeff * theta.cos(),
                max_relative = 1e-6,
                epsilon = 1e-10
            );
        }
        // Zero-mean normalization of the solved trace.
        let exc = Excitation::new(1).unwrap();
        let scenario2 = disk_scenario(big_r, inc_r, sigma);
        let outer = make_ellipse(big_r, big_r, 400).unwrap();
        let inner = AnomalyShape::Disk { center: [0.0, 0.0], radius: inc_r }
            .curve()
            .mesh(400)
            .unwrap();
        let u = solve_transmission(&scenario2, exc, outer.clone(), vec![inner]).unwrap();
        let mean: f64 = (0..400).map(|i| u[i] * outer.weights[i]).sum();
        assert!(mean.abs() < 1e-8);
    }

    #[test]
    fn trace_scales_linearly_in_small_contrast() {
        let norm_for = |sigma: f64| {
            let scenario = disk_scenario(5.0, 1.5, sigma);
            solve_forward(&scenario, 192).unwrap().traces.column(0).norm()
        };
        let full = norm_for(1.05);
        let half = norm_for(1.025);
        assert_relative_eq!(full / half, 2.0, max_relative = 0.05);
    }

    #[test]
    fn trace_converges_under_refinement() {
        let scenario = disk_scenario(5.0, 1.5, 3.0);
        let coarse = solve_forward(&scenario, 192).unwrap();
        let fine = solve_forward(&scenario, 384).unwrap();
        // Compare at shared parameter values (every other fine node).
        let mut max_diff = 0.0f64;
        let mut max_val = 0.0f64;
        for i in 0..192 {
            let d = (coarse.traces[(i, 0)] - fine.traces[(2 * i, 0)]).abs();
            max_diff = max_diff.max(d);
            max_val = max_val.max(fine.traces[(2 * i, 0)].abs());
        }
        assert!(max_diff / max_val < 1e-6, "refinement changed trace by {max_diff:e}");
    }

    #[test]
    fn measurement_noise_realizes_snr() {
        let scenario = disk_scenario(5.0, 1.5, 3.0);
        let fwd = solve_forward(&scenario, 192).unwrap();
        let noiseless = measure(&fwd, GeometryTag::M32, HalfSide::Upper, 2, f64::INFINITY, 7)
            .unwrap();
        assert_eq!(noiseless.values, noiseless.noiseless);

        let mut snrs = Vec::new();
        for seed in 0..100 {
            let ms = measure(&fwd, GeometryTag::M32, HalfSide::Upper, 2, 40.0, seed).unwrap();
            for k in 0..2 {
                let signal = ms.noiseless.column(k).norm();
                let noise = (ms.values.column(k) - ms.noiseless.column(k)).norm();
                snrs.push(20.0 * (signal / noise).log10());
            }
        }
        let mean = snrs.iter().sum::<f64>() / snrs.len() as f64;
        assert!((39.0..=41.0).contains(&mean), "mean realized SNR {mean}");

        // Determinism per (seed, excitation).
        let a = measure(&fwd, GeometryTag::M32, HalfSide::Upper, 2, 40.0, 3).unwrap();
        let b = measure(&fwd, GeometryTag::M32, HalfSide::Upper, 2, 40.0, 3).unwrap();
        assert_eq!(a.values, b.values);
        let c = measure(&fwd, GeometryTag::M32, HalfSide::Upper, 2, 40.0, 4).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn no_anomalies_measure_zero() {
        let mut scenario = disk_scenario(5.0, 1.5, 3.0);
        scenario.anomalies.clear();
        let fwd = solve_forward(&scenario, 192).unwrap();
        let ms = measure(&fwd, GeometryTag::M16, HalfSide::Upper, 4, f64::INFINITY, 0).unwrap();
        assert!(ms.values.norm() < 1e-8);
    }

    #[test]
    fn condition_indicator_is_finite() {
        let scenario = disk_scenario(5.0, 1.5, 1.001);
        let fwd = solve_forward(&scenario, 128).unwrap();
        assert!(fwd.condition_indicator.is_finite());
        assert!(fwd.condition_indicator >= 1.0);
    }
}
