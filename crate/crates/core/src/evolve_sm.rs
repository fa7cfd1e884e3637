//! Schrödinger map flow `∂_t φ = φ ×_μ Δφ` by the implicit midpoint rule.

use crate::error::{Error, Result};
use crate::manifold::{energy, join_components, mass, MapField, TargetManifold, BASE_POINT};
use crate::spectral::{GridSpec, Spectral};

pub const SM_SOLVER_TOL: f64 = 1e-12;
pub const SM_MAX_ITERS: usize = 100;

/// Largest admissible |dt| for the fixed-point solve: `0.5 / |ξ_max|²`.
pub fn stability_limit(grid: &GridSpec) -> f64 {
    0.5 / grid.max_symbol()
}

#[derive(Debug, Clone)]
pub struct SMTrajectory {
    pub t_grid: Vec<f64>,
    pub slices: Vec<MapField>,
    pub energy_series: Vec<f64>,
    /// `∫|φ − Q|²` about the base point.
    pub mass_series: Vec<f64>,
}

impl SMTrajectory {
    pub fn dt(&self) -> f64 {
        if self.t_grid.len() < 2 {
            0.0
        } else {
            self.t_grid[1] - self.t_grid[0]
        }
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn relative_energy_drift(&self) -> f64 {
        relative_drift(&self.energy_series)
    }

    pub fn relative_mass_drift(&self) -> f64 {
        relative_drift(&self.mass_series)
    }
}

fn relative_drift(series: &[f64]) -> f64 {
    let Some(&first) = series.first() else {
        return 0.0;
    };
    let scale = if first.abs() > 0.0 { first.abs() } else { 1.0 };
    series.iter().map(|e| (e - first).abs() / scale).fold(0.0, f64::max)
}

/// `φ ×_μ Δφ` on component arrays, dealiased.
pub fn sm_rhs(c: &[Vec<f64>; 3], target: TargetManifold, spec: &Spectral) -> [Vec<f64>; 3] {
    let lap = spec.laplacian_real3(c);
    let n = c[0].len();
    let mut out = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i in 0..n {
        let v = [c[0][i], c[1][i], c[2][i]];
        let w = [lap[0][i], lap[1][i], lap[2][i]];
        let x = target.cross(&v, &w);
        for k in 0..3 {
            out[k][i] = x[k];
        }
    }
    dealias3(&out, spec)
}

pub(crate) fn dealias3(c: &[Vec<f64>; 3], spec: &Spectral) -> [Vec<f64>; 3] {
    let mut specs = spec.real_spectra(&[&c[0], &c[1], &c[2]]);
    specs.iter_mut().for_each(|s| spec.dealias_spec(s));
    let mut it = spec.real_inverse(specs).into_iter();
    [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()]
}

/// One implicit-midpoint step followed by projection onto the target.
pub fn step_sm(phi: &MapField, dt: f64, spec: &Spectral) -> Result<MapField> {
    step_indexed(phi, dt, spec, 0)
}

fn step_indexed(phi: &MapField, dt: f64, spec: &Spectral, step: usize) -> Result<MapField> {
    let next = midpoint_solve(phi, dt, spec, step)?;
    MapField::projected(phi.grid, phi.target, &join_components(&next))
}

fn midpoint_solve(phi: &MapField, dt: f64, spec: &Spectral, step: usize) -> Result<[Vec<f64>; 3]> {
    let limit = stability_limit(&phi.grid);
    if dt == 0.0 || !dt.is_finite() || dt.abs() > limit {
        return Err(Error::StepTooLarge { dt, limit });
    }
    let u0 = phi.components();
    let n = u0[0].len();
    let scale = u0.iter().flat_map(|c| c.iter()).fold(1.0f64, |m, v| m.max(v.abs()));
    // Explicit Euler predictor.
    let f0 = sm_rhs(&u0, phi.target, spec);
    let mut next: [Vec<f64>; 3] = std::array::from_fn(|k| (0..n).map(|i| u0[k][i] + dt * f0[k][i]).collect());
    let mut residual = f64::INFINITY;
    for _ in 0..SM_MAX_ITERS {
        let mid: [Vec<f64>; 3] = std::array::from_fn(|k| (0..n).map(|i| 0.5 * (u0[k][i] + next[k][i])).collect());
        let f = sm_rhs(&mid, phi.target, spec);
        residual = 0.0;
        for k in 0..3 {
            for i in 0..n {
                let v = u0[k][i] + dt * f[k][i];
                residual = residual.max((v - next[k][i]).abs());
                next[k][i] = v;
            }
        }
        if !residual.is_finite() {
            break;
        }
        if residual <= SM_SOLVER_TOL * scale {
            return Ok(next);
        }
    }
    Err(Error::NoConvergence { step, residual })
}

/// Midpoint solve without the final projection.
pub fn step_sm_raw(phi: &MapField, dt: f64, spec: &Spectral) -> Result<MapField> {
    let next = midpoint_solve(phi, dt, spec, 0)?;
    Ok(MapField {
        grid: phi.grid,
        target: phi.target,
        values: join_components(&next),
    })
}

/// Fixed-step trajectory on `[0, T]` with `ceil(T/dt) + 1` slices.
pub fn run_sm(phi0: &MapField, t_final: f64, dt: f64, spec: &Spectral) -> Result<SMTrajectory> {
    run_sm_with(phi0, t_final, dt, spec, |_, _| {})
}

/// As [`run_sm`], calling `observe(n, slice)` after each accepted step.
pub fn run_sm_with(
    phi0: &MapField,
    t_final: f64,
    dt: f64,
    spec: &Spectral,
    mut observe: impl FnMut(usize, &MapField),
) -> Result<SMTrajectory> {
    if !(t_final > 0.0) {
        return Err(Error::Config(format!("T must be positive, got {t_final}")));
    }
    if !(dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    let steps = (t_final / dt - 1e-9).ceil().max(1.0) as usize;
    let mut t_grid = Vec::with_capacity(steps + 1);
    let mut slices = Vec::with_capacity(steps + 1);
    let mut energy_series = Vec::with_capacity(steps + 1);
    let mut mass_series = Vec::with_capacity(steps + 1);
    let mut cur = phi0.clone();
    for n in 0..=steps {
        if n > 0 {
            cur = step_indexed(&cur, dt, spec, n)?;
        }
        observe(n, &cur);
        t_grid.push(n as f64 * dt);
        energy_series.push(energy(&cur, spec));
        mass_series.push(mass(&cur, &BASE_POINT));
        slices.push(cur.clone());
    }
    Ok(SMTrajectory {
        t_grid,
        slices,
        energy_series,
        mass_series,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSeries {
    pub max: f64,
    /// Per interior slice `n = 1 … len−2`.
    pub series: Vec<f64>,
}

/// Centred-difference defect `‖(φ^{n+1} − φ^{n−1})/(2dt) − φ^n ×_μ Δφ^n‖_{L²}`.
pub fn sm_residual(traj: &SMTrajectory, spec: &Spectral) -> Result<ResidualSeries> {
    if traj.len() < 3 {
        return Err(Error::TooFewSlices {
            needed: 3,
            got: traj.len(),
        });
    }
    let dt = traj.dt();
    let area = spec.grid.cell_area();
    let mut series = Vec::with_capacity(traj.len() - 2);
    for n in 1..traj.len() - 1 {
        let c = traj.slices[n].components();
        let f = sm_rhs(&c, traj.slices[n].target, spec);
        let (a, b) = (&traj.slices[n - 1].values, &traj.slices[n + 1].values);
        let mut acc = 0.0;
        for i in 0..a.len() {
            for k in 0..3 {
                let d = (b[i][k] - a[i][k]) / (2.0 * dt) - f[k][i];
                acc += d * d;
            }
        }
        series.push((acc * area).sqrt());
    }
    let max = series.iter().cloned().fold(0.0, f64::max);
    Ok(ResidualSeries { max, series })
}
