//! Offline checks on snapshot directories.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use super::experiment::{analyze_stencil, SliceReport, A_S_LIMIT, ENERGY_IDENTITY_LIMIT, RESIDUAL_LIMIT};
use super::snapshot::{read_snapshot_dir, Snapshot};
use crate::error::{Error, Result};
use crate::evolve_heat::SGrid;
use crate::manifold::{energy, MapField};
use crate::norms::{
    envelope_from_values, envelope_summation_check, grad_series, l2l4_norm, sobolev_seminorm, FrequencyEnvelope,
};
use crate::spectral::Spectral;

const SPACING_RTOL: f64 = 1e-9;

fn load(dir: &Path) -> Result<(Vec<Snapshot>, Spectral)> {
    let snaps = read_snapshot_dir(dir)?;
    let first = snaps
        .first()
        .ok_or_else(|| Error::MissingSlices(format!("no snapshots in {}", dir.display())))?;
    let grid = first.field.grid;
    let target = first.field.target;
    if snaps.iter().any(|s| s.field.grid != grid || s.field.target != target) {
        return Err(Error::Config("snapshots disagree on grid or target".into()));
    }
    Ok((snaps, Spectral::new(grid)))
}

#[derive(Debug, Clone, Serialize)]
pub struct GaugeCheckReport {
    pub slices: Vec<SliceReport>,
    pub max_residual: f64,
    pub max_a_s: f64,
    pub max_energy_identity_error: f64,
    pub pass: bool,
}

/// Rebuilds the caloric gauge at every snapshot with equally spaced
/// neighbours on both sides and evaluates the residual suite.
pub fn check_gauge_dir(dir: &Path, s_max: f64, n_ramp: usize) -> Result<GaugeCheckReport> {
    let (snaps, spec) = load(dir)?;
    let sgrid = SGrid::for_spectral(&spec, s_max, n_ramp)?;
    let mut slices = Vec::new();
    for (i, w) in snaps.windows(3).enumerate() {
        let (h1, h2) = (w[1].t - w[0].t, w[2].t - w[1].t);
        if !(h1 > 0.0 && (h1 - h2).abs() <= SPACING_RTOL * h1) {
            continue;
        }
        let phis: [&MapField; 3] = [&w[0].field, &w[1].field, &w[2].field];
        let mut out = analyze_stencil(phis, [w[0].t, w[1].t, w[2].t], 1, &sgrid, &spec)?;
        out.report.index = i + 1;
        slices.push(out.report);
    }
    if slices.is_empty() {
        return Err(Error::MissingSlices(
            "no snapshot has equally spaced neighbours in t".into(),
        ));
    }
    let worst = |f: fn(&SliceReport) -> f64| slices.iter().map(f).fold(0.0, f64::max);
    let max_residual = slices
        .iter()
        .flat_map(|s| s.residuals.values())
        .fold(0.0f64, |m, v| m.max(*v));
    let max_a_s = worst(|s| s.max_a_s);
    let max_energy_identity_error = worst(|s| s.psi_x_energy_error);
    Ok(GaugeCheckReport {
        pass: max_residual <= RESIDUAL_LIMIT
            && max_a_s <= A_S_LIMIT
            && max_energy_identity_error <= ENERGY_IDENTITY_LIMIT,
        slices,
        max_residual,
        max_a_s,
        max_energy_identity_error,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct NormCheckReport {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub hdot1: Vec<f64>,
    pub hdot3: Vec<f64>,
    pub l2l4_grad_phi: f64,
    pub band_l4_grad_phi: BTreeMap<i32, f64>,
    pub envelope: FrequencyEnvelope,
    pub summation_ratio: f64,
    pub summation_constant: f64,
    pub pass: bool,
}

/// Map-level norms over all snapshots at `s = 0`.
pub fn check_norms_dir(dir: &Path, delta: f64) -> Result<NormCheckReport> {
    let (snaps, spec) = load(dir)?;
    let snaps: Vec<Snapshot> = snaps.into_iter().filter(|s| s.s == 0.0).collect();
    if snaps.is_empty() {
        return Err(Error::MissingSlices("no s = 0 snapshots".into()));
    }
    let times: Vec<f64> = snaps.iter().map(|s| s.t).collect();
    let phis: Vec<MapField> = snaps.into_iter().map(|s| s.field).collect();
    let grad = grad_series(times.clone(), &phis, &spec);
    let (l2l4, bands) = l2l4_norm(&grad, &spec);
    let values: Vec<f64> = bands.iter().map(|(_, v)| *v).collect();
    let envelope = envelope_from_values(&values, spec.bands.k_min, delta, 0);
    let sum = envelope_summation_check(&envelope, 1.0 + delta)?;
    Ok(NormCheckReport {
        energy: phis.iter().map(|p| energy(p, &spec)).collect(),
        hdot1: phis.iter().map(|p| sobolev_seminorm(p, 0.0, &spec)).collect(),
        hdot3: phis.iter().map(|p| sobolev_seminorm(p, 2.0, &spec)).collect(),
        times,
        l2l4_grad_phi: l2l4,
        band_l4_grad_phi: bands.into_iter().collect(),
        pass: sum.passes() && envelope.slow_variation_excess() <= 1e-12,
        summation_ratio: sum.low_ratio.max(sum.high_ratio),
        summation_constant: sum.constant,
        envelope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{TargetManifold, BASE_POINT};
    use crate::runner::snapshot::write_snapshot;
    use crate::spectral::GridSpec;

    #[test]
    fn constant_snapshots_check_clean() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridSpec::new(16, 4.0).unwrap();
        let phi = MapField::constant(g, TargetManifold::SPHERE, BASE_POINT);
        for i in 0..3 {
            let snap = Snapshot::new(phi.clone(), i as f64 * 0.01, 0.0);
            write_snapshot(&snap, &dir.path().join(format!("t{i}.csm"))).unwrap();
        }
        let r = check_gauge_dir(dir.path(), 4.0, 2).unwrap();
        assert!(r.pass && r.max_residual == 0.0 && r.slices.len() == 1);
        let n = check_norms_dir(dir.path(), 0.1).unwrap();
        assert!(n.pass && n.l2l4_grad_phi == 0.0);
        assert!(n.energy.iter().all(|e| *e == 0.0));
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            check_gauge_dir(dir.path(), 4.0, 2),
            Err(Error::MissingSlices(_))
        ));
    }
}
