//! Built-in scenarios, per-scenario solver parameters, and run configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{EitError, Result};
use crate::geometry::{Anomaly, AnomalyShape, GeometryTag, HalfSide, Scenario};
use crate::recover::CsalsaParams;

/// Two unit disks with a gap of 1 between them, conductivities 2 (left) and
/// 5 (right).
pub fn sparse_target_a() -> Scenario {
    Scenario {
        name: "sparseA".into(),
        ellipse_a: 10.0,
        ellipse_b: 7.0,
        grid_h: 0.5,
        geometry: GeometryTag::M100,
        excitations: 2,
        snr_db: 40.0,
        seed: 0,
        half_side: HalfSide::Upper,
        anomalies: vec![
            Anomaly {
                shape: AnomalyShape::Disk { center: [-1.5, 0.0], radius: 1.0 },
                sigma: 2.0,
            },
            Anomaly {
                shape: AnomalyShape::Disk { center: [1.5, 0.0], radius: 1.0 },
                sigma: 5.0,
            },
        ],
    }
}

/// Three disks of different sizes, conductivities 0.5, 5, 2 from left to
/// right. Radii are calibrated so the grid labeling marks 28 cells.
pub fn sparse_target_b() -> Scenario {
    Scenario {
        name: "sparseB".into(),
        ellipse_a: 10.0,
        ellipse_b: 7.0,
        grid_h: 0.5,
        geometry: GeometryTag::M100,
        excitations: 2,
        snr_db: 40.0,
        seed: 0,
        half_side: HalfSide::Upper,
        anomalies: vec![
            Anomaly {
                shape: AnomalyShape::Disk { center: [-4.0, 1.5], radius: 1.05 },
                sigma: 0.5,
            },
            Anomaly {
                shape: AnomalyShape::Disk { center: [0.0, -1.0], radius: 0.7 },
                sigma: 5.0,
            },
            Anomaly {
                shape: AnomalyShape::Disk { center: [4.0, 2.0], radius: 0.85 },
                sigma: 2.0,
            },
        ],
    }
}

/// Kite-shaped extended target with conductivity 5.
pub fn kite_target() -> Scenario {
    Scenario {
        name: "kite".into(),
        ellipse_a: 10.0,
        ellipse_b: 7.0,
        grid_h: 0.5,
        geometry: GeometryTag::M100,
        excitations: 2,
        snr_db: 40.0,
        seed: 0,
        half_side: HalfSide::Upper,
        anomalies: vec![Anomaly {
            shape: AnomalyShape::Kite { center: [0.0, 0.0], scale: 1.5 },
            sigma: 5.0,
        }],
    }
}

/// Look up a built-in scenario by name.
pub fn scenario_by_name(name: &str) -> Result<Scenario> {
    match name {
        "sparseA" => Ok(sparse_target_a()),
        "sparseB" => Ok(sparse_target_b()),
        "kite" => Ok(kite_target()),
        other => Err(EitError::Config(format!(
            "unknown scenario {other:?} (expected sparseA|sparseB|kite, or a config file path)"
        ))),
    }
}

/// Load a scenario from a TOML config file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    let scenario: Scenario =
        toml::from_str(&text).map_err(|e| EitError::Config(format!("{}: {e}", path.display())))?;
    scenario.validate()?;
    Ok(scenario)
}

/// Write a scenario to a TOML config file.
pub fn save_scenario(scenario: &Scenario, path: &Path) -> Result<()> {
    let text = toml::to_string_pretty(scenario)
        .map_err(|e| EitError::Config(format!("serialize scenario: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Reconstruction method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Joint-sparse-recovery pipeline (support, potential, conductivity).
    Jsr,
    /// One-step linearized reconstruction over the full grid.
    Linearized,
    /// Subspace localization spectrum (no conductivity values).
    Music,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Jsr => "jsr",
            Method::Linearized => "linearized",
            Method::Music => "music",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = EitError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsr" => Ok(Method::Jsr),
            "linearized" => Ok(Method::Linearized),
            "music" => Ok(Method::Music),
            other => Err(EitError::InvalidParameter(format!(
                "unknown method {other:?} (expected jsr|linearized|music)"
            ))),
        }
    }
}

/// Optional overrides for the per-scenario solver defaults.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ParamOverrides {
    /// Support threshold ε for the current spectrum.
    pub support_epsilon: Option<f64>,
    /// C-SALSA τ factor c_τ.
    pub tau_factor: Option<f64>,
    /// C-SALSA ball radius factor c_ε.
    pub epsilon_factor: Option<f64>,
    /// C-SALSA continuation factor μ.
    pub mu: Option<f64>,
    /// T-SVD truncation ratio ρ_t.
    pub tsvd_ratio: Option<f64>,
    /// Preconditioning regularization factor (of σ_max²).
    pub precond_lambda_factor: Option<f64>,
    pub msbl_iter_max: Option<usize>,
    pub precondition: Option<bool>,
    /// Re-estimate currents by truncated SVD before potential estimation.
    pub tsvd: Option<bool>,
    /// Signal-subspace dimension for the localization spectrum.
    pub music_signal_dim: Option<usize>,
}

/// A fully specified run: scenario, method, measurement setup, and seeds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub method: Method,
    pub geometry: GeometryTag,
    pub excitations: usize,
    pub snr_db: f64,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub overrides: ParamOverrides,
}

impl RunConfig {
    /// Build a config from a scenario, inheriting its measurement setup and
    /// using `n_seeds` consecutive seeds starting at the scenario seed.
    pub fn new(scenario: Scenario, method: Method, n_seeds: usize) -> Self {
        let geometry = scenario.geometry;
        let excitations = scenario.excitations;
        let snr_db = scenario.snr_db;
        let base = scenario.seed;
        RunConfig {
            scenario,
            method,
            geometry,
            excitations,
            snr_db,
            seeds: (0..n_seeds as u64).map(|i| base + i).collect(),
            overrides: ParamOverrides::default(),
        }
    }

    pub fn with_geometry(mut self, geometry: GeometryTag) -> Self {
        self.geometry = geometry;
        self
    }

    pub fn with_excitations(mut self, m: usize) -> Self {
        self.excitations = m;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if !matches!(self.excitations, 2 | 4) {
            return Err(EitError::InvalidParameter(format!(
                "excitation count must be 2 or 4, got {}",
                self.excitations
            )));
        }
        if self.seeds.is_empty() {
            return Err(EitError::InvalidParameter("at least one seed required".into()));
        }
        Ok(())
    }

    /// Effective solver parameters after applying scenario defaults and
    /// overrides.
    pub fn solver_params(&self) -> SolverParams {
        let defaults = scenario_defaults(&self.scenario.name, self.method, self.geometry);
        let ov = &self.overrides;
        SolverParams {
            msbl_iter_max: ov.msbl_iter_max.unwrap_or(defaults.msbl_iter_max),
            precondition: ov.precondition.unwrap_or(defaults.precondition),
            precond_lambda_factor: ov
                .precond_lambda_factor
                .unwrap_or(defaults.precond_lambda_factor),
            support_epsilon: ov.support_epsilon.unwrap_or(defaults.support_epsilon),
            tsvd: ov.tsvd.unwrap_or(defaults.tsvd),
            tsvd_ratio: ov.tsvd_ratio.unwrap_or(defaults.tsvd_ratio),
            music_signal_dim: ov.music_signal_dim,
            csalsa: CsalsaParams {
                tau_factor: ov.tau_factor.unwrap_or(defaults.csalsa.tau_factor),
                epsilon_factor: ov.epsilon_factor.unwrap_or(defaults.csalsa.epsilon_factor),
                mu: ov.mu.unwrap_or(defaults.csalsa.mu),
                ..defaults.csalsa
            },
        }
    }
}

/// Concrete solver parameters for one run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverParams {
    pub msbl_iter_max: usize,
    pub precondition: bool,
    pub precond_lambda_factor: f64,
    pub support_epsilon: f64,
    pub tsvd: bool,
    pub tsvd_ratio: f64,
    pub music_signal_dim: Option<usize>,
    pub csalsa: CsalsaParams,
}

/// Tuned parameters per scenario and method. Unknown scenario names fall back
/// to the sparse-target defaults.
fn scenario_defaults(name: &str, method: Method, geometry: GeometryTag) -> SolverParams {
    let mut p = SolverParams {
        msbl_iter_max: 15,
        precondition: false,
        precond_lambda_factor: 1e-3,
        support_epsilon: 1e-2,
        tsvd: false,
        tsvd_ratio: 1e-2,
        music_signal_dim: None,
        csalsa: CsalsaParams::default(),
    };
    match method {
        Method::Jsr | Method::Music => {
            p.csalsa.mu = 1.01;
            match name {
                "sparseB" => {
                    p.msbl_iter_max = 14;
                    p.csalsa.tau_factor = 0.5;
                    p.csalsa.epsilon_factor = 0.02;
                }
                "kite" => {
                    p.msbl_iter_max = 9;
                    p.precondition = true;
                    p.tsvd = true;
                    p.csalsa.tau_factor = 0.125;
                    p.csalsa.epsilon_factor = 0.06;
                }
                _ => {
                    p.msbl_iter_max = 15;
                    p.csalsa.tau_factor = 1.0;
                    p.csalsa.epsilon_factor = 0.04;
                }
            }
            // Partial data degrades fidelity; a wider feasibility ball is
            // needed for the extended target.
            if geometry.is_partial() && name == "kite" {
                p.csalsa.epsilon_factor = 0.2;
            }
        }
        Method::Linearized => {
            p.csalsa.mu = 1.001;
            match name {
                "sparseB" => {
                    p.csalsa.tau_factor = 0.125;
                    p.csalsa.epsilon_factor = 0.08;
                }
                "kite" => {
                    p.csalsa.tau_factor = 0.25;
                    p.csalsa.epsilon_factor = 0.1;
                }
                _ => {
                    p.csalsa.tau_factor = 8.0;
                    p.csalsa.epsilon_factor = 0.06;
                }
            }
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        sparse_target_a().validate().unwrap();
        sparse_target_b().validate().unwrap();
        kite_target().validate().unwrap();
    }

    #[test]
    fn sparse_b_nonzero_row_count() {
        let grid = crate::geometry::build_grid(&sparse_target_b()).unwrap();
        let x0 = 2 * grid.anomaly_cells().len();
        assert!(
            (48..=64).contains(&x0),
            "pairwise nonzero count {x0} should be 56 ± 8"
        );
    }

    #[test]
    fn scenario_roundtrips_through_toml() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scenario.toml");
        let original = sparse_target_b();
        save_scenario(&original, &path).unwrap();
        let loaded = load_scenario(&path).unwrap();
        assert_eq!(loaded.name, original.name);
        assert_eq!(loaded.anomalies, original.anomalies);
        assert_eq!(loaded.geometry, original.geometry);
    }

    #[test]
    fn defaults_follow_scenario_and_method() {
        let kite = RunConfig::new(kite_target(), Method::Jsr, 1);
        let p = kite.solver_params();
        assert_eq!(p.msbl_iter_max, 9);
        assert!(p.precondition);
        assert!(p.tsvd);
        assert_eq!(p.csalsa.tau_factor, 0.125);
        assert_eq!(p.csalsa.epsilon_factor, 0.06);
        assert_eq!(p.csalsa.mu, 1.01);

        let partial = kite.with_geometry(GeometryTag::M16p);
        assert_eq!(partial.solver_params().csalsa.epsilon_factor, 0.2);

        let lin = RunConfig::new(sparse_target_a(), Method::Linearized, 1);
        let p = lin.solver_params();
        assert_eq!(p.csalsa.tau_factor, 8.0);
        assert_eq!(p.csalsa.epsilon_factor, 0.06);
        assert_eq!(p.csalsa.mu, 1.001);

        let mut with_override = RunConfig::new(sparse_target_a(), Method::Jsr, 1);
        with_override.overrides.support_epsilon = Some(0.3);
        assert_eq!(with_override.solver_params().support_epsilon, 0.3);
    }
}
