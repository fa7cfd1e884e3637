//! Harmonic map heat flow `∂_s φ = Δφ + μ|∂_xφ|²_μ φ` on a graded s-grid.

use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolve_sm::ResidualSeries;
use crate::manifold::{energy, join_components, tangent_project, MapField, Point3, TargetManifold};
use crate::spectral::Spectral;

/// Drop below the ground-state energy required before a sphere flow is started.
pub const ENERGY_MARGIN: f64 = 0.01;
pub const TRIVIAL_TOL: f64 = 1e-6;
pub const MONO_TOL: f64 = 1e-10;
pub const GEOMETRIC_RATIO: f64 = 1.15;

/// Linear ramp up to `s_ramp`, then geometric growth up to `s_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SGrid {
    pub s_ramp: f64,
    pub n_ramp: usize,
    pub ratio: f64,
    pub s_max: f64,
    pub s: Vec<f64>,
}

impl SGrid {
    pub fn new(s_ramp: f64, n_ramp: usize, ratio: f64, s_max: f64) -> Result<Self> {
        if !(s_ramp > 0.0 && s_max > 0.0 && ratio > 1.0 && n_ramp > 0) {
            return Err(Error::Config(format!(
                "invalid s-grid (s_ramp {s_ramp}, n_ramp {n_ramp}, ratio {ratio}, s_max {s_max})"
            )));
        }
        let ramp_end = s_ramp.min(s_max);
        let mut s: Vec<f64> = (0..=n_ramp).map(|i| ramp_end * i as f64 / n_ramp as f64).collect();
        if s_max > s_ramp {
            let mut i = 1;
            loop {
                let next = s_ramp * ratio.powi(i);
                if next >= s_max * (1.0 - 1e-9) {
                    break;
                }
                s.push(next);
                i += 1;
            }
            s.push(s_max);
        }
        Ok(SGrid {
            s_ramp,
            n_ramp,
            ratio,
            s_max,
            s,
        })
    }

    /// Default grid: ramp to `2^{−2k_max}` in `n_ramp` steps, ratio 1.15.
    pub fn for_spectral(spec: &Spectral, s_max: f64, n_ramp: usize) -> Result<Self> {
        let s_ramp = 2f64.powi(-2 * spec.bands.k_max);
        Self::new(s_ramp, n_ramp, GEOMETRIC_RATIO, s_max)
    }

    /// Halved steps: twice the ramp points and the square-root ratio; contains `self`.
    pub fn refined(&self) -> Self {
        Self::new(self.s_ramp, 2 * self.n_ramp, self.ratio.sqrt(), self.s_max).expect("refinement of a valid grid")
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HeatScheme {
    /// First-order IMEX: implicit Laplacian, explicit nonlinearity.
    Imex1,
    /// Second-order exponential Runge-Kutta (ETD2RK).
    Etd2,
}

#[derive(Debug, Clone)]
pub struct HeatTrajectory {
    pub s_grid: Vec<f64>,
    pub slices: Vec<MapField>,
    pub energy_series: Vec<f64>,
    pub limit_point: Option<Point3>,
}

impl HeatTrajectory {
    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    /// Largest energy increase between consecutive slices (0 when monotone).
    pub fn max_energy_increase(&self) -> f64 {
        self.energy_series.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

/// Spectra of the three components plus the dealiased nonlinearity `μ|∂φ|²_μ φ`.
struct HeatParts {
    spec_u: Vec<Vec<Complex64>>,
    spec_n: Vec<Vec<Complex64>>,
}

fn nonlinear_from_spectra(
    u: &[Vec<f64>; 3],
    spec_u: &[Vec<Complex64>],
    target: TargetManifold,
    spec: &Spectral,
) -> Vec<Vec<Complex64>> {
    let (d1, d2) = spec.gradient_from_spectra(spec_u);
    let mu = target.mu();
    let n = u[0].len();
    let mut nl: [Vec<f64>; 3] = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i in 0..n {
        let g = d1[0][i] * d1[0][i]
            + d1[1][i] * d1[1][i]
            + mu * d1[2][i] * d1[2][i]
            + d2[0][i] * d2[0][i]
            + d2[1][i] * d2[1][i]
            + mu * d2[2][i] * d2[2][i];
        for k in 0..3 {
            nl[k][i] = mu * g * u[k][i];
        }
    }
    let mut out = spec.real_spectra(&[&nl[0], &nl[1], &nl[2]]);
    out.iter_mut().for_each(|s| spec.dealias_spec(s));
    out
}

fn heat_parts(u: &[Vec<f64>; 3], target: TargetManifold, spec: &Spectral) -> HeatParts {
    let spec_u = spec.real_spectra(&[&u[0], &u[1], &u[2]]);
    let spec_n = nonlinear_from_spectra(u, &spec_u, target, spec);
    HeatParts { spec_u, spec_n }
}

/// Tension field `τ(φ) = Δφ + μ|∂_xφ|²_μ φ` on component arrays.
pub fn heat_rhs(u: &[Vec<f64>; 3], target: TargetManifold, spec: &Spectral) -> [Vec<f64>; 3] {
    let p = heat_parts(u, target, spec);
    let specs = p
        .spec_u
        .iter()
        .zip(&p.spec_n)
        .map(|(su, sn)| spec.lap_spec(su).into_iter().zip(sn).map(|(a, b)| a + b).collect())
        .collect();
    let mut it = spec.real_inverse(specs).into_iter();
    [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()]
}

pub fn tension(phi: &MapField, spec: &Spectral) -> [Vec<f64>; 3] {
    heat_rhs(&phi.components(), phi.target, spec)
}

fn finish(phi: &MapField, specs: Vec<Vec<Complex64>>, spec: &Spectral) -> Result<MapField> {
    let mut it = spec.real_inverse(specs).into_iter();
    let c = [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()];
    MapField::projected(phi.grid, phi.target, &join_components(&c))
}

/// IMEX step `(I − dsΔ)φ* = φ + ds·μ|∂φ|²_μ φ`, then projection.
pub fn step_heat(phi: &MapField, ds: f64, spec: &Spectral) -> Result<MapField> {
    check_ds(ds)?;
    let p = heat_parts(&phi.components(), phi.target, spec);
    let specs = p
        .spec_u
        .iter()
        .zip(&p.spec_n)
        .map(|(su, sn)| {
            su.iter()
                .zip(sn)
                .enumerate()
                .map(|(idx, (&a, &b))| (a + ds * b) / (1.0 + ds * spec.k_sq(idx)))
                .collect()
        })
        .collect();
    finish(phi, specs, spec)
}

/// ETD2RK step (Cox-Matthews), then projection.
pub fn step_heat_etd2(phi: &MapField, ds: f64, spec: &Spectral) -> Result<MapField> {
    check_ds(ds)?;
    let u = phi.components();
    let p = heat_parts(&u, phi.target, spec);
    let n = spec.grid.len();
    let mut e = Vec::with_capacity(n);
    let mut f1 = Vec::with_capacity(n);
    let mut f2 = Vec::with_capacity(n);
    for idx in 0..n {
        let z = -ds * spec.k_sq(idx);
        e.push(z.exp());
        f1.push(phi1(z));
        f2.push(phi2(z));
    }
    let a_specs: Vec<Vec<Complex64>> = p
        .spec_u
        .iter()
        .zip(&p.spec_n)
        .map(|(su, sn)| (0..n).map(|i| e[i] * su[i] + ds * f1[i] * sn[i]).collect())
        .collect();
    let a_phys = {
        let mut it = spec.real_inverse(a_specs.clone()).into_iter();
        [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()]
    };
    let na = nonlinear_from_spectra(&a_phys, &a_specs, phi.target, spec);
    let specs = a_specs
        .iter()
        .zip(na.iter().zip(&p.spec_n))
        .map(|(sa, (nb, nu))| (0..n).map(|i| sa[i] + ds * f2[i] * (nb[i] - nu[i])).collect())
        .collect();
    finish(phi, specs, spec)
}

fn check_ds(ds: f64) -> Result<()> {
    if ds > 0.0 && ds.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("heat step must be positive, got {ds}")))
    }
}

/// `(e^z − 1)/z`.
pub fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-5 {
        1.0 + z / 2.0 + z * z / 6.0
    } else {
        z.exp_m1() / z
    }
}

/// `(e^z − 1 − z)/z²`.
pub fn phi2(z: f64) -> f64 {
    if z.abs() < 0.1 {
        // Σ zⁿ/(n+2)!
        let mut term = 0.5;
        let mut sum = 0.0;
        for n in 0..10 {
            sum += term;
            term *= z / (n as f64 + 3.0);
        }
        sum
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

pub fn step_with(scheme: HeatScheme, phi: &MapField, ds: f64, spec: &Spectral) -> Result<MapField> {
    match scheme {
        HeatScheme::Imex1 => step_heat(phi, ds, spec),
        HeatScheme::Etd2 => step_heat_etd2(phi, ds, spec),
    }
}

/// Rejects sphere data within [`ENERGY_MARGIN`] of `4π`.
pub fn check_energy_threshold(phi: &MapField, spec: &Spectral) -> Result<f64> {
    let e = energy(phi, spec);
    if phi.target.is_sphere() {
        let threshold = phi.target.critical_energy() * (1.0 - ENERGY_MARGIN);
        if !(e < threshold) {
            return Err(Error::EnergyAboveThreshold { energy: e, threshold });
        }
    }
    Ok(e)
}

pub fn run_heat(phi0: &MapField, sgrid: &SGrid, scheme: HeatScheme, spec: &Spectral) -> Result<HeatTrajectory> {
    let e0 = check_energy_threshold(phi0, spec)?;
    let mut slices = Vec::with_capacity(sgrid.len());
    let mut energy_series = Vec::with_capacity(sgrid.len());
    slices.push(phi0.clone());
    energy_series.push(e0);
    for w in sgrid.s.windows(2) {
        let next = step_with(scheme, slices.last().unwrap(), w[1] - w[0], spec)?;
        energy_series.push(energy(&next, spec));
        slices.push(next);
    }
    let mut traj = HeatTrajectory {
        s_grid: sgrid.s.clone(),
        slices,
        energy_series,
        limit_point: None,
    };
    traj.limit_point = detect_trivialization(&traj, TRIVIAL_TOL);
    Ok(traj)
}

/// Three-point derivative weights on a nonuniform grid at the middle node.
pub fn centered_weights(h1: f64, h2: f64) -> [f64; 3] {
    [-h2 / (h1 * (h1 + h2)), (h2 - h1) / (h1 * h2), h1 / (h2 * (h1 + h2))]
}

/// Finite-difference defect of the heat equation at interior s-nodes.
pub fn heat_residual(traj: &HeatTrajectory, spec: &Spectral) -> Result<ResidualSeries> {
    if traj.len() < 3 {
        return Err(Error::TooFewSlices {
            needed: 3,
            got: traj.len(),
        });
    }
    let area = spec.grid.cell_area();
    let mut series = Vec::with_capacity(traj.len() - 2);
    for i in 1..traj.len() - 1 {
        let s = &traj.s_grid;
        let w = centered_weights(s[i] - s[i - 1], s[i + 1] - s[i]);
        let tau = tension(&traj.slices[i], spec);
        let (a, b, c) = (
            &traj.slices[i - 1].values,
            &traj.slices[i].values,
            &traj.slices[i + 1].values,
        );
        let mut acc = 0.0;
        for x in 0..a.len() {
            for k in 0..3 {
                let d = w[0] * a[x][k] + w[1] * b[x][k] + w[2] * c[x][k] - tau[k][x];
                acc += d * d;
            }
        }
        series.push((acc * area).sqrt());
    }
    let max = series.iter().cloned().fold(0.0, f64::max);
    Ok(ResidualSeries { max, series })
}

/// Projected mean of the last slice when every sample lies within `tol` of it.
pub fn detect_trivialization(traj: &HeatTrajectory, tol: f64) -> Option<Point3> {
    let last = traj.slices.last()?;
    let q = last.projected_mean().ok()?;
    (last.max_distance_from(&q) <= tol).then_some(q)
}

/// `s^{1/2}‖ψ_x‖_∞` and `s‖D_xψ_x‖_∞` along the flow.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedDecay {
    pub s: Vec<f64>,
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
    pub sup_k1: f64,
    pub sup_k2: f64,
}

pub fn weighted_decay(traj: &HeatTrajectory, spec: &Spectral) -> WeightedDecay {
    let mut k1 = Vec::with_capacity(traj.len());
    let mut k2 = Vec::with_capacity(traj.len());
    for (phi, &s) in traj.slices.iter().zip(&traj.s_grid) {
        let (g, h) = derivative_sup(phi, spec);
        k1.push(s.sqrt() * g);
        k2.push(s * h);
    }
    let sup = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
    WeightedDecay {
        s: traj.s_grid.clone(),
        sup_k1: sup(&k1),
        sup_k2: sup(&k2),
        k1,
        k2,
    }
}

/// `(max |∂_xφ|_μ, max |∇∂_xφ|_μ)`; the second uses the tangential part of ∂²φ.
fn derivative_sup(phi: &MapField, spec: &Spectral) -> (f64, f64) {
    let u = phi.components();
    let su = spec.real_spectra(&[&u[0], &u[1], &u[2]]);
    let (d1, d2) = spec.gradient_from_spectra(&su);
    let mut second = Vec::with_capacity(9);
    for s in &su {
        let s1 = spec.d1_spec(s);
        second.push(spec.d1_spec(&s1));
        second.push(spec.d2_spec(&s1));
        second.push(spec.d2_spec(&spec.d2_spec(s)));
    }
    let dd = spec.real_inverse(second);
    let t = phi.target;
    let mut g_max: f64 = 0.0;
    let mut h_max: f64 = 0.0;
    for i in 0..u[0].len() {
        let a = [d1[0][i], d1[1][i], d1[2][i]];
        let b = [d2[0][i], d2[1][i], d2[2][i]];
        g_max = g_max.max((t.dot(&a, &a) + t.dot(&b, &b)).max(0.0).sqrt());
        let p = phi.values[i];
        let mut h2 = 0.0;
        for (slot, mult) in [(0usize, 1.0), (1, 2.0), (2, 1.0)] {
            let v = [dd[slot][i], dd[3 + slot][i], dd[6 + slot][i]];
            let tv = tangent_project(&p, &v, t);
            h2 += mult * t.dot(&tv, &tv);
        }
        h_max = h_max.max(h2.max(0.0).sqrt());
    }
    (g_max, h_max)
}
