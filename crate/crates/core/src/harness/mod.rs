//! Scenario configs, pipeline orchestration, metrics, and report generation.

pub mod acceptance;
pub mod config;
pub mod pipeline;
pub mod report;

pub use config::{Method, ParamOverrides, RunConfig};
pub use pipeline::{run_scenario, RunReport, SeedOutcome, StageTimings};
pub use report::write_reports;

/// Relative reconstruction error ‖x_true − x_recon‖² / ‖x_true‖² with
/// x = σ − 1, squared ℓ2 over all grid cells.
pub fn relative_error(x_true: &[f64], x_recon: &[f64]) -> crate::Result<f64> {
    if x_true.len() != x_recon.len() {
        return Err(crate::EitError::Mismatch(format!(
            "field lengths differ: {} vs {}",
            x_true.len(),
            x_recon.len()
        )));
    }
    let denom: f64 = x_true.iter().map(|v| v * v).sum();
    if denom == 0.0 {
        return Err(crate::EitError::InvalidParameter(
            "relative error undefined for an identically zero true field".into(),
        ));
    }
    let num: f64 = x_true
        .iter()
        .zip(x_recon)
        .map(|(t, r)| (t - r) * (t - r))
        .sum();
    Ok(num / denom)
}

/// Upper bound `(m + rank(Y)) / 2` on the number of recoverable nonzero rows.
pub fn recoverability_bound(m: usize, rank_y: usize) -> f64 {
    (m + rank_y) as f64 / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recoverability_bound_table() {
        assert_eq!(recoverability_bound(100, 2), 51.0);
        assert_eq!(recoverability_bound(32, 2), 17.0);
        assert_eq!(recoverability_bound(16, 2), 9.0);
    }

    #[test]
    fn relative_error_basics() {
        assert_eq!(relative_error(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(relative_error(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(relative_error(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 2.0);
        assert!(relative_error(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(relative_error(&[1.0], &[1.0, 2.0]).is_err());
    }
}
