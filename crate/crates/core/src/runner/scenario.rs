//! Initial data registry.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;

use super::config::{RunConfig, ScenarioName};
use crate::error::{Error, Result};
use crate::manifold::{energy, exp_map, MapField, Point3, TargetManifold, BASE_POINT};
use crate::spectral::{GridSpec, Spectral};

pub const ENERGY_BISECTION_RTOL: f64 = 1e-8;

/// Builds the configured initial map; deterministic in the seed.
pub fn generate_initial_data(config: &RunConfig) -> Result<MapField> {
    let grid = config.grid()?;
    let target = config.target.manifold();
    match config.scenario {
        ScenarioName::Constant => Ok(MapField::constant(grid, target, BASE_POINT)),
        ScenarioName::GaussianBump => Ok(gaussian_bump(
            grid,
            target,
            config.param("amplitude", 0.3),
            config.param("width", 0.7),
        )),
        ScenarioName::Equivariant => {
            let degree = config.param("degree", 1.0);
            if degree < 1.0 || degree.fract() != 0.0 {
                return Err(Error::Config(format!(
                    "degree must be a positive integer, got {degree}"
                )));
            }
            Ok(equivariant(
                grid,
                target,
                config.param("amplitude", 0.5),
                config.param("radius", grid.l / 4.0),
                degree as u32,
            ))
        }
        ScenarioName::Bubble => {
            if !target.is_sphere() {
                return Err(Error::ScenarioTargetMismatch {
                    scenario: "bubble".into(),
                });
            }
            Ok(bubble(grid, config.param("scale", grid.l / 64.0)))
        }
        ScenarioName::RandomBand => {
            let spec = Spectral::new(grid);
            let band = config.param("band", f64::from(spec.bands.k_min + 1)).round() as i32;
            random_band(&spec, target, band, config.param("energy", 1.0), config.seed)
        }
    }
}

/// `exp_Q(a G(x) (1, x₁/w, 0))` with `G = e^{−|x|²/w²}` about the domain centre.
pub fn gaussian_bump(grid: GridSpec, target: TargetManifold, amplitude: f64, width: f64) -> MapField {
    let values = (0..grid.len())
        .map(|idx| {
            let (x1, x2) = grid.centered_coords(idx);
            let g = amplitude * (-(x1 * x1 + x2 * x2) / (width * width)).exp();
            exp_map(&BASE_POINT, &[g, g * x1 / width, 0.0], target)
        })
        .collect();
    MapField::from_values_unchecked(grid, target, values)
}

/// `u(r) = a ρ^m exp(1 − 1/(1 − ρ²))` for `ρ = r/R < 1`, zero outside.
pub fn equivariant_profile(r: f64, amplitude: f64, radius: f64, degree: u32) -> f64 {
    let rho = r / radius;
    if rho >= 1.0 {
        0.0
    } else {
        amplitude * rho.powi(degree as i32) * (1.0 - 1.0 / (1.0 - rho * rho)).exp()
    }
}

/// `(sin u cos mθ, sin u sin mθ, cos u)`, or the sinh/cosh analogue on H².
pub fn equivariant(grid: GridSpec, target: TargetManifold, amplitude: f64, radius: f64, degree: u32) -> MapField {
    let m = f64::from(degree);
    let values = (0..grid.len())
        .map(|idx| {
            let (x1, x2) = grid.centered_coords(idx);
            let u = equivariant_profile(x1.hypot(x2), amplitude, radius, degree);
            let th = x2.atan2(x1);
            let (radial, axial) = if target.is_sphere() {
                (u.sin(), u.cos())
            } else {
                (u.sinh(), u.cosh())
            };
            [radial * (m * th).cos(), radial * (m * th).sin(), axial]
        })
        .collect();
    MapField::from_values_unchecked(grid, target, values)
}

/// Inverse stereographic bubble of scale λ composed with the periodizing
/// chart `y_i = (L/πλ) tan(π(x_i − c_i)/L)`, which sends the torus boundary
/// to the far-field pole smoothly. The chart is not conformal; the energy
/// excess over 4π is about 0.24% at `L = 64λ` and 3.6% at `L = 16λ`.
pub fn bubble(grid: GridSpec, scale: f64) -> MapField {
    let c = grid.l / (PI * scale);
    let values = (0..grid.len())
        .map(|idx| {
            let (x1, x2) = grid.centered_coords(idx);
            let y1 = c * (PI * x1 / grid.l).tan();
            let y2 = c * (PI * x2 / grid.l).tan();
            inverse_stereographic(y1, y2)
        })
        .collect();
    MapField::from_values_unchecked(grid, TargetManifold::SPHERE, values)
}

fn inverse_stereographic(y1: f64, y2: f64) -> Point3 {
    let r2 = y1 * y1 + y2 * y2;
    if !r2.is_finite() || r2 > 1e200 {
        return [0.0, 0.0, -1.0];
    }
    let d = 1.0 + r2;
    [2.0 * y1 / d, 2.0 * y2 / d, (1.0 - r2) / d]
}

/// Real random field supported in band k, unit `L²` norm.
pub fn random_band_profile(spec: &Spectral, band: i32, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if !spec.bands.contains(band) {
        return Err(Error::BandOutOfRange {
            k: band,
            k_min: spec.bands.k_min,
            k_max: spec.bands.k_max,
        });
    }
    let coeffs: Vec<Complex64> = (0..spec.grid.len())
        .map(|idx| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re, im) * spec.bands.symbol(band, spec.k_sq(idx).sqrt())
        })
        .collect();
    let v = spec.inverse(coeffs).real_part();
    let norm = (v.iter().map(|x| x * x).sum::<f64>() * spec.grid.cell_area()).sqrt();
    Ok(v.into_iter().map(|x| x / norm).collect())
}

/// `exp_Q(a v)` for a random band-limited tangent field `v`, with `a` fixed
/// by bisection so that the energy matches `target_energy`.
pub fn random_band(
    spec: &Spectral,
    target: TargetManifold,
    band: i32,
    target_energy: f64,
    seed: u64,
) -> Result<MapField> {
    if !(target_energy > 0.0 && target_energy < target.critical_energy()) {
        return Err(Error::Config(format!(
            "requested energy {target_energy} must lie in (0, E_crit)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v0 = random_band_profile(spec, band, &mut rng)?;
    let v1 = random_band_profile(spec, band, &mut rng)?;
    let build = |a: f64| {
        let values = v0
            .iter()
            .zip(&v1)
            .map(|(&p, &q)| exp_map(&BASE_POINT, &[a * p, a * q, 0.0], target))
            .collect();
        MapField::from_values_unchecked(spec.grid, target, values)
    };
    let e_of = |a: f64| energy(&build(a), spec);
    let mut hi = (target_energy / e_of(1.0).max(1e-300)).sqrt();
    let mut bracketed = false;
    for _ in 0..60 {
        if e_of(hi) >= target_energy {
            bracketed = true;
            break;
        }
        hi *= 1.5;
    }
    if !bracketed {
        return Err(Error::Config(format!("energy {target_energy} is not reachable")));
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let e = e_of(mid);
        if (e - target_energy).abs() <= ENERGY_BISECTION_RTOL * target_energy {
            return Ok(build(mid));
        }
        if e < target_energy {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(build(0.5 * (lo + hi)))
}
