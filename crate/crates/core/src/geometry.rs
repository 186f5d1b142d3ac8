//! Domains, anomaly shapes, boundary meshes, reconstruction grids, and
//! measurement-point layouts.
//!
//! The background domain is an origin-centered ellipse. Anomalies are disks or
//! a kite-shaped region, each with a constant conductivity against a unit
//! background. All curves are parametrized counterclockwise over `[0, 2π)`.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{EitError, Result};

pub type Point2 = Vector2<f64>;

/// Closed parametric curve, counterclockwise over `t ∈ [0, 2π)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Curve {
    Ellipse { a: f64, b: f64 },
    Circle { center: [f64; 2], radius: f64 },
    /// `center + scale * (cos t + 0.65 cos 2t − 0.65, 1.5 sin t)`.
    Kite { center: [f64; 2], scale: f64 },
}

impl Curve {
    pub fn point(&self, t: f64) -> Point2 {
        match *self {
            Curve::Ellipse { a, b } => Point2::new(a * t.cos(), b * t.sin()),
            Curve::Circle { center, radius } => {
                Point2::new(center[0] + radius * t.cos(), center[1] + radius * t.sin())
            }
            Curve::Kite { center, scale } => Point2::new(
                center[0] + scale * (t.cos() + 0.65 * (2.0 * t).cos() - 0.65),
                center[1] + scale * 1.5 * t.sin(),
            ),
        }
    }

    pub fn derivative(&self, t: f64) -> Point2 {
        match *self {
            Curve::Ellipse { a, b } => Point2::new(-a * t.sin(), b * t.cos()),
            Curve::Circle { radius, .. } => Point2::new(-radius * t.sin(), radius * t.cos()),
            Curve::Kite { scale, .. } => Point2::new(
                scale * (-t.sin() - 1.3 * (2.0 * t).sin()),
                scale * 1.5 * t.cos(),
            ),
        }
    }

    pub fn second_derivative(&self, t: f64) -> Point2 {
        match *self {
            Curve::Ellipse { a, b } => Point2::new(-a * t.cos(), -b * t.sin()),
            Curve::Circle { radius, .. } => Point2::new(-radius * t.cos(), -radius * t.sin()),
            Curve::Kite { scale, .. } => Point2::new(
                scale * (-t.cos() - 2.6 * (2.0 * t).cos()),
                -scale * 1.5 * t.sin(),
            ),
        }
    }

    pub fn speed(&self, t: f64) -> f64 {
        self.derivative(t).norm()
    }

    /// Unit outward normal for a counterclockwise curve.
    pub fn normal(&self, t: f64) -> Point2 {
        let d = self.derivative(t);
        Point2::new(d.y, -d.x) / d.norm()
    }

    /// Signed curvature; positive where the curve bends like a ccw circle.
    pub fn curvature(&self, t: f64) -> f64 {
        let d = self.derivative(t);
        let dd = self.second_derivative(t);
        (d.x * dd.y - d.y * dd.x) / d.norm().powi(3)
    }

    /// Nyström mesh with `n` nodes at uniformly spaced parameter values.
    pub fn mesh(&self, n: usize) -> Result<BoundaryMesh> {
        if n < 16 {
            return Err(EitError::InvalidParameter(format!(
                "mesh needs at least 16 nodes, got {n}"
            )));
        }
        let dt = TAU / n as f64;
        let params: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        let nodes: Vec<Point2> = params.iter().map(|&t| self.point(t)).collect();
        let normals: Vec<Point2> = params.iter().map(|&t| self.normal(t)).collect();
        let speeds: Vec<f64> = params.iter().map(|&t| self.speed(t)).collect();
        let weights: Vec<f64> = speeds.iter().map(|s| s * dt).collect();
        let curvature: Vec<f64> = params.iter().map(|&t| self.curvature(t)).collect();
        Ok(BoundaryMesh {
            curve: *self,
            params,
            nodes,
            normals,
            weights,
            curvature,
            speeds,
        })
    }
}

/// Discretized closed boundary: nodes, unit outward normals, arc-length
/// quadrature weights, and signed curvature at each node.
///
/// Nodes traverse the curve counterclockwise; the trapezoid weights
/// `speed(t_i)·Δt` integrate periodic functions spectrally on smooth curves.
#[derive(Clone, Debug)]
pub struct BoundaryMesh {
    pub curve: Curve,
    pub params: Vec<f64>,
    pub nodes: Vec<Point2>,
    pub normals: Vec<Point2>,
    pub weights: Vec<f64>,
    pub curvature: Vec<f64>,
    pub speeds: Vec<f64>,
}

impl BoundaryMesh {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn perimeter(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Largest arc-length gap between adjacent nodes.
    pub fn node_spacing(&self) -> f64 {
        self.weights.iter().cloned().fold(0.0, f64::max)
    }

    /// Signed area of the node polygon (positive for ccw traversal).
    pub fn signed_area(&self) -> f64 {
        let n = self.len();
        let mut acc = 0.0;
        for i in 0..n {
            let p = self.nodes[i];
            let q = self.nodes[(i + 1) % n];
            acc += p.x * q.y - p.y * q.x;
        }
        0.5 * acc
    }
}

/// `make_ellipse(a, b, n)` builds the background-boundary mesh.
pub fn make_ellipse(a: f64, b: f64, n: usize) -> Result<BoundaryMesh> {
    if a <= 0.0 || b <= 0.0 {
        return Err(EitError::InvalidParameter(format!(
            "ellipse semi-axes must be positive, got ({a}, {b})"
        )));
    }
    Curve::Ellipse { a, b }.mesh(n)
}

/// Anomaly geometry. Disk membership is analytic; the kite is horizontally
/// convex, so membership reduces to one interval test per horizontal slice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AnomalyShape {
    Disk { center: [f64; 2], radius: f64 },
    Kite { center: [f64; 2], scale: f64 },
}

impl AnomalyShape {
    pub fn curve(&self) -> Curve {
        match *self {
            AnomalyShape::Disk { center, radius } => Curve::Circle { center, radius },
            AnomalyShape::Kite { center, scale } => Curve::Kite { center, scale },
        }
    }

    /// Strict interior membership.
    pub fn contains(&self, p: &Point2) -> bool {
        match *self {
            AnomalyShape::Disk { center, radius } => {
                let d = p - Point2::new(center[0], center[1]);
                d.norm_squared() < radius * radius
            }
            AnomalyShape::Kite { center, scale } => {
                // At height y the kite section is the interval
                // [cx + s(−√(1−v²) − 1.3 v²), cx + s(√(1−v²) − 1.3 v²)],
                // v = (y − cy)/(1.5 s), directly from the parametrization with
                // cos 2t = 1 − 2 sin² t.
                let v = (p.y - center[1]) / (1.5 * scale);
                if v.abs() >= 1.0 {
                    return false;
                }
                let half = (1.0 - v * v).sqrt();
                let mid = center[0] + scale * (-1.3 * v * v);
                p.x > mid - scale * half && p.x < mid + scale * half
            }
        }
    }
}

/// One anomaly: a shape with its constant conductivity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anomaly {
    #[serde(flatten)]
    pub shape: AnomalyShape,
    pub sigma: f64,
}

/// Which half of the boundary carries the partial-measurement points.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HalfSide {
    /// Parameter interval `[0, π]`.
    #[default]
    Upper,
    /// Parameter interval `[π, 2π]`.
    Lower,
}

/// Measurement-point layout tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometryTag {
    M100,
    M32,
    M16,
    /// 16 points on one half of the boundary only.
    M16p,
}

impl GeometryTag {
    pub fn point_count(&self) -> usize {
        match self {
            GeometryTag::M100 => 100,
            GeometryTag::M32 => 32,
            GeometryTag::M16 | GeometryTag::M16p => 16,
        }
    }

    pub fn is_partial(&self) -> bool {
        matches!(self, GeometryTag::M16p)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            GeometryTag::M100 => "m100",
            GeometryTag::M32 => "m32",
            GeometryTag::M16 => "m16",
            GeometryTag::M16p => "m16p",
        }
    }
}

impl std::str::FromStr for GeometryTag {
    type Err = EitError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m100" => Ok(GeometryTag::M100),
            "m32" => Ok(GeometryTag::M32),
            "m16" => Ok(GeometryTag::M16),
            "m16p" => Ok(GeometryTag::M16p),
            other => Err(EitError::InvalidParameter(format!(
                "unknown geometry tag {other:?} (expected m100|m32|m16|m16p)"
            ))),
        }
    }
}

/// Full problem description: domain, anomalies, grid, measurement setup.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub ellipse_a: f64,
    pub ellipse_b: f64,
    pub grid_h: f64,
    pub geometry: GeometryTag,
    /// Number of excitations M (2 or 4).
    pub excitations: usize,
    /// Measurement SNR in dB; `inf` for noiseless data.
    pub snr_db: f64,
    pub seed: u64,
    #[serde(default)]
    pub half_side: HalfSide,
    pub anomalies: Vec<Anomaly>,
}

impl Scenario {
    pub fn ellipse(&self) -> Curve {
        Curve::Ellipse {
            a: self.ellipse_a,
            b: self.ellipse_b,
        }
    }

    /// Check shape placement, conductivities, and excitation count.
    pub fn validate(&self) -> Result<()> {
        if self.ellipse_a <= 0.0 || self.ellipse_b <= 0.0 {
            return Err(EitError::InvalidGeometry(
                "ellipse semi-axes must be positive".into(),
            ));
        }
        if self.grid_h <= 0.0 {
            return Err(EitError::InvalidParameter("grid spacing must be positive".into()));
        }
        if !matches!(self.excitations, 2 | 4) {
            return Err(EitError::InvalidParameter(format!(
                "excitation count must be 2 or 4, got {}",
                self.excitations
            )));
        }
        for (p, anomaly) in self.anomalies.iter().enumerate() {
            if !(anomaly.sigma > 0.0) || anomaly.sigma == 1.0 {
                return Err(EitError::InvalidParameter(format!(
                    "anomaly {p}: conductivity must be positive and differ from 1, got {}",
                    anomaly.sigma
                )));
            }
            let curve = anomaly.shape.curve();
            for i in 0..720 {
                let q = curve.point(TAU * i as f64 / 720.0);
                let level = (q.x / self.ellipse_a).powi(2) + (q.y / self.ellipse_b).powi(2);
                if level >= 1.0 {
                    return Err(EitError::InvalidGeometry(format!(
                        "anomaly {p} is not strictly inside the background ellipse"
                    )));
                }
            }
        }
        for p in 0..self.anomalies.len() {
            for q in (p + 1)..self.anomalies.len() {
                if !disjoint(&self.anomalies[p].shape, &self.anomalies[q].shape) {
                    return Err(EitError::InvalidGeometry(format!(
                        "anomalies {p} and {q} are not disjoint"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Conductivity at a point (1 outside every anomaly).
    pub fn sigma_at(&self, p: &Point2) -> f64 {
        for anomaly in &self.anomalies {
            if anomaly.shape.contains(p) {
                return anomaly.sigma;
            }
        }
        1.0
    }
}

fn disjoint(a: &AnomalyShape, b: &AnomalyShape) -> bool {
    if let (
        AnomalyShape::Disk { center: ca, radius: ra },
        AnomalyShape::Disk { center: cb, radius: rb },
    ) = (a, b)
    {
        let d = Point2::new(ca[0] - cb[0], ca[1] - cb[1]).norm();
        return d > ra + rb;
    }
    // General case: no boundary sample of one inside the other, and neither
    // contains the other's boundary start (covers containment).
    let (ca, cb) = (a.curve(), b.curve());
    for i in 0..720 {
        let t = TAU * i as f64 / 720.0;
        if b.contains(&ca.point(t)) || a.contains(&cb.point(t)) {
            return false;
        }
    }
    true
}

/// Regular reconstruction lattice of cell centers inside the domain.
///
/// Centers sit at `(−a + (i+½)h, −b + (j+½)h)` and are kept when they lie
/// strictly inside the ellipse with semi-axes shrunk by `h/2`, which keeps
/// every kernel evaluation away from the boundary.
#[derive(Clone, Debug)]
pub struct Grid {
    pub centers: Vec<Point2>,
    pub lattice: Vec<(i64, i64)>,
    pub sigma: Vec<f64>,
    pub h: f64,
    /// Cell area `h²`.
    pub delta: f64,
    origin: Point2,
    index: HashMap<(i64, i64), usize>,
}

impl Grid {
    /// Synthetic grid from explicit centers (background conductivity, no
    /// meaningful lattice adjacency). Intended for diagnostics and tests.
    pub fn from_centers(centers: Vec<Point2>, h: f64) -> Grid {
        let lattice: Vec<(i64, i64)> = (0..centers.len()).map(|j| (j as i64, 0)).collect();
        let index = lattice.iter().enumerate().map(|(j, &ij)| (ij, j)).collect();
        let sigma = vec![1.0; centers.len()];
        Grid {
            centers,
            lattice,
            sigma,
            h,
            delta: h * h,
            origin: Point2::new(0.0, 0.0),
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Cell index at lattice offset `(di, dj)` from `cell`, if present.
    pub fn neighbor(&self, cell: usize, di: i64, dj: i64) -> Option<usize> {
        let (i, j) = self.lattice[cell];
        self.index.get(&(i + di, j + dj)).copied()
    }

    pub fn cell_at_lattice(&self, ij: (i64, i64)) -> Option<usize> {
        self.index.get(&ij).copied()
    }

    /// Indices of cells labeled with a non-background conductivity.
    pub fn anomaly_cells(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.sigma[j] != 1.0).collect()
    }

    /// Cells whose centers lie inside the given shape.
    pub fn cells_in_shape(&self, shape: &AnomalyShape) -> Vec<usize> {
        (0..self.len())
            .filter(|&j| shape.contains(&self.centers[j]))
            .collect()
    }

    /// True contrast field σ − 1 per cell.
    pub fn contrast(&self) -> Vec<f64> {
        self.sigma.iter().map(|s| s - 1.0).collect()
    }
}

/// Build the reconstruction grid for a scenario and label cell conductivities.
pub fn build_grid(scenario: &Scenario) -> Result<Grid> {
    let (a, b, h) = (scenario.ellipse_a, scenario.ellipse_b, scenario.grid_h);
    if h <= 0.0 {
        return Err(EitError::InvalidParameter(format!(
            "grid spacing must be positive, got {h}"
        )));
    }
    let (sa, sb) = (a - 0.5 * h, b - 0.5 * h);
    if sa <= 0.0 || sb <= 0.0 {
        return Err(EitError::InvalidGeometry(
            "grid spacing too large for the domain".into(),
        ));
    }
    let origin = Point2::new(-a + 0.5 * h, -b + 0.5 * h);
    let ni = (2.0 * a / h).ceil() as i64;
    let nj = (2.0 * b / h).ceil() as i64;
    let mut centers = Vec::new();
    let mut lattice = Vec::new();
    let mut index = HashMap::new();
    for i in 0..ni {
        for j in 0..nj {
            let p = Point2::new(origin.x + i as f64 * h, origin.y + j as f64 * h);
            if (p.x / sa).powi(2) + (p.y / sb).powi(2) < 1.0 {
                index.insert((i, j), centers.len());
                centers.push(p);
                lattice.push((i, j));
            }
        }
    }
    if centers.is_empty() {
        return Err(EitError::InvalidGeometry("empty reconstruction grid".into()));
    }
    let sigma = centers.iter().map(|p| scenario.sigma_at(p)).collect();
    Ok(Grid {
        centers,
        lattice,
        sigma,
        h,
        delta: h * h,
        origin,
        index,
    })
}

/// Parameter values of the measurement points for a layout tag.
pub fn measurement_params(tag: GeometryTag, side: HalfSide) -> Vec<f64> {
    let m = tag.point_count();
    if tag.is_partial() {
        let offset = match side {
            HalfSide::Upper => 0.0,
            HalfSide::Lower => PI,
        };
        (0..m)
            .map(|p| offset + PI * (p as f64 + 0.5) / m as f64)
            .collect()
    } else {
        (0..m).map(|p| TAU * p as f64 / m as f64).collect()
    }
}

/// Measurement points on the boundary of `mesh`'s curve.
///
/// Full-boundary tags place `m` points uniformly in parameter over the whole
/// curve; `m16p` places 16 points on the configured half-interval.
pub fn measurement_points(tag: GeometryTag, mesh: &BoundaryMesh, side: HalfSide) -> Vec<Point2> {
    measurement_params(tag, side)
        .iter()
        .map(|&t| mesh.curve.point(t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sparse_a() -> Scenario {
        crate::harness::config::sparse_target_a()
    }

    #[test]
    fn unit_circle_perimeter() {
        let mesh = make_ellipse(1.0, 1.0, 2000).unwrap();
        assert_relative_eq!(mesh.perimeter(), TAU, epsilon = 1e-10);
    }

    /// Independent oracle: adaptive Simpson quadrature of the arc-length
    /// integrand √(a²sin²t + b²cos²t).
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
            (hi - lo) / 6.0 * (f(lo) + 4.0 * f(0.5 * (lo + hi)) + f(hi))
        }
        fn recurse(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, whole: f64, tol: f64) -> f64 {
            let mid = 0.5 * (lo + hi);
            let left = simpson(f, lo, mid);
            let right = simpson(f, mid, hi);
            if (left + right - whole).abs() < 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                recurse(f, lo, mid, left, 0.5 * tol) + recurse(f, mid, hi, right, 0.5 * tol)
            }
        }
        recurse(f, lo, hi, simpson(f, lo, hi), tol)
    }

    #[test]
    fn ellipse_perimeter_matches_adaptive_quadrature() {
        let (a, b) = (10.0, 7.0);
        let mesh = make_ellipse(a, b, 2000).unwrap();
        let arc = |t: f64| (a * a * t.sin().powi(2) + b * b * t.cos().powi(2)).sqrt();
        let oracle = adaptive_simpson(&arc, 0.0, TAU, 1e-12);
        assert_relative_eq!(mesh.perimeter(), oracle, max_relative = 1e-6);
    }

    #[test]
    fn circle_normal_at_zero() {
        let mesh = make_ellipse(1.0, 1.0, 16).unwrap();
        assert_relative_eq!(mesh.normals[0].x, 1.0, epsilon = 1e-14);
        assert_relative_eq!(mesh.normals[0].y, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn mesh_invariants() {
        for curve in [
            Curve::Ellipse { a: 10.0, b: 7.0 },
            Curve::Kite { center: [0.0, 0.0], scale: 1.5 },
            Curve::Circle { center: [1.0, -2.0], radius: 0.8 },
        ] {
            let mesh = curve.mesh(256).unwrap();
            for nu in &mesh.normals {
                assert!((nu.norm() - 1.0).abs() < 1e-12);
            }
            assert!(mesh.signed_area() > 0.0, "nodes must traverse ccw");
            assert!(mesh.weights.iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn make_ellipse_rejects_bad_input() {
        assert!(make_ellipse(-1.0, 1.0, 100).is_err());
        assert!(make_ellipse(1.0, 0.0, 100).is_err());
        assert!(make_ellipse(1.0, 1.0, 8).is_err());
    }

    #[test]
    fn grid_count_matches_brute_force() {
        let grid = build_grid(&sparse_a()).unwrap();
        // Independent recount over a wider lattice range.
        let (a, b, h) = (10.0, 7.0, 0.5);
        let (sa, sb) = (a - 0.5 * h, b - 0.5 * h);
        let mut count = 0;
        let mut i = -100i64;
        while i <= 100 {
            let x = -a + (i as f64 + 0.5) * h;
            let mut j = -100i64;
            while j <= 100 {
                let y = -b + (j as f64 + 0.5) * h;
                if (x / sa).powi(2) + (y / sb).powi(2) < 1.0 {
                    count += 1;
                }
                j += 1;
            }
            i += 1;
        }
        assert_eq!(grid.len(), count);
        assert!(
            grid.len() >= 800 && grid.len() <= 950,
            "cell count {} outside expected range",
            grid.len()
        );
        for p in grid.centers.iter() {
            assert!((p.x / a).powi(2) + (p.y / b).powi(2) < 1.0);
        }
    }

    #[test]
    fn sparse_a_nonzero_row_count() {
        let grid = build_grid(&sparse_a()).unwrap();
        let cells = grid.anomaly_cells().len();
        let x0 = 2 * cells;
        assert!(
            (46..=50).contains(&x0),
            "pairwise nonzero count {x0} should be 48 ± 2"
        );
    }

    #[test]
    fn empty_scenario_all_background() {
        let mut s = sparse_a();
        s.anomalies.clear();
        let grid = build_grid(&s).unwrap();
        assert!(grid.sigma.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn grid_rejects_bad_spacing() {
        let mut s = sparse_a();
        s.grid_h = 0.0;
        assert!(build_grid(&s).is_err());
        s.grid_h = 30.0;
        assert!(build_grid(&s).is_err());
    }

    #[test]
    fn measurement_points_on_ellipse() {
        let mesh = make_ellipse(10.0, 7.0, 2000).unwrap();
        let pts = measurement_points(GeometryTag::M100, &mesh, HalfSide::Upper);
        assert_eq!(pts.len(), 100);
        for p in &pts {
            let level = (p.x / 10.0).powi(2) + (p.y / 7.0).powi(2);
            assert!((level - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn partial_points_stay_on_half_interval() {
        let params = measurement_params(GeometryTag::M16p, HalfSide::Upper);
        assert_eq!(params.len(), 16);
        assert!(params.iter().all(|&t| (0.0..=PI).contains(&t)));
        let lower = measurement_params(GeometryTag::M16p, HalfSide::Lower);
        assert!(lower.iter().all(|&t| (PI..=TAU).contains(&t)));
    }

    #[test]
    fn full_circle_points_equally_spaced() {
        let mesh = make_ellipse(1.0, 1.0, 2000).unwrap();
        let pts = measurement_points(GeometryTag::M32, &mesh, HalfSide::Upper);
        let angles: Vec<f64> = pts.iter().map(|p| p.y.atan2(p.x)).collect();
        for w in 0..32 {
            let diff = (angles[(w + 1) % 32] - angles[w]).rem_euclid(TAU);
            assert_relative_eq!(diff, TAU / 32.0, epsilon = 1e-12);
        }
    }

    /// Winding-number oracle for kite membership on its boundary polygon.
    fn winding_number(poly: &[Point2], p: &Point2) -> i32 {
        let mut wn = 0i32;
        for i in 0..poly.len() {
            let a = poly[i];
            let b = poly[(i + 1) % poly.len()];
            let is_left = (b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y);
            if a.y <= p.y {
                if b.y > p.y && is_left > 0.0 {
                    wn += 1;
                }
            } else if b.y <= p.y && is_left < 0.0 {
                wn -= 1;
            }
        }
        wn
    }

    #[test]
    fn kite_membership_matches_winding_number() {
        let shape = AnomalyShape::Kite { center: [0.3, -0.2], scale: 1.5 };
        let curve = shape.curve();
        let poly: Vec<Point2> = (0..4096)
            .map(|i| curve.point(TAU * i as f64 / 4096.0))
            .collect();
        let mut checked = 0;
        for i in -40..=40 {
            for j in -40..=40 {
                let p = Point2::new(0.1 * i as f64, 0.1 * j as f64);
                // Skip a thin band around the boundary where the polygon
                // approximation and the analytic test may legitimately differ.
                let near_boundary = poly.iter().any(|q| (q - p).norm() < 1e-3);
                if near_boundary {
                    continue;
                }
                assert_eq!(
                    shape.contains(&p),
                    winding_number(&poly, &p) != 0,
                    "disagreement at ({}, {})",
                    p.x,
                    p.y
                );
                checked += 1;
            }
        }
        assert!(checked > 5000);
    }

    #[test]
    fn labeling_is_order_independent() {
        let mut s = sparse_a();
        let grid1 = build_grid(&s).unwrap();
        s.anomalies.reverse();
        let grid2 = build_grid(&s).unwrap();
        assert_eq!(grid1.sigma, grid2.sigma);
        // Idempotence: relabeling the same scenario reproduces the labels.
        let grid3 = build_grid(&s).unwrap();
        assert_eq!(grid2.sigma, grid3.sigma);
    }

    #[test]
    fn validation_catches_bad_scenarios() {
        let mut s = sparse_a();
        s.anomalies[0].sigma = 1.0;
        assert!(s.validate().is_err());

        let mut s = sparse_a();
        s.anomalies[0].shape = AnomalyShape::Disk { center: [9.8, 0.0], radius: 1.0 };
        assert!(s.validate().is_err());

        let mut s = sparse_a();
        s.anomalies[1].shape = AnomalyShape::Disk { center: [-1.0, 0.0], radius: 1.0 };
        assert!(s.validate().is_err());

        let mut s = sparse_a();
        s.excitations = 3;
        assert!(s.validate().is_err());

        assert!(sparse_a().validate().is_ok());
    }

    #[test]
    fn grid_neighbors() {
        let grid = build_grid(&sparse_a()).unwrap();
        let c = grid.cell_at_lattice(grid.lattice[grid.len() / 2]).unwrap();
        let east = grid.neighbor(c, 1, 0).unwrap();
        assert_relative_eq!(grid.centers[east].x - grid.centers[c].x, 0.5, epsilon = 1e-12);
        assert_relative_eq!(grid.centers[east].y, grid.centers[c].y, epsilon = 1e-12);
    }
}
