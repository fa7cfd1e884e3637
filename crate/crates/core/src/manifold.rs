//! Geometry of the two constant-curvature targets embedded in R³.
//!
//! Both targets are described through the quadratic form
//! `⟨v, w⟩_μ = v₀w₀ + v₁w₁ + μ v₂w₂` induced by `η_μ = diag(1, 1, μ)`.
//! The sphere is `⟨y, y⟩_μ = 1` with μ = +1, the hyperboloid sheet is
//! `⟨y, y⟩_μ = −1` with μ = −1 and `y₂ ≥ 1`. Tangent vectors have
//! positive μ-norm on both.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{GridSpec, Spectral};

pub type Vec3 = [f64; 3];
pub type Point3 = [f64; 3];

/// Default constraint tolerance for map values.
pub const CONSTRAINT_TOL: f64 = 1e-12;

/// The base point (0, 0, 1), which lies on both targets.
pub const BASE_POINT: Point3 = [0.0, 0.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetManifold {
    mu: i8,
}

impl TargetManifold {
    pub const SPHERE: TargetManifold = TargetManifold { mu: 1 };
    pub const HYPERBOLIC: TargetManifold = TargetManifold { mu: -1 };

    pub fn from_mu(mu: i32) -> Result<Self> {
        match mu {
            1 => Ok(Self::SPHERE),
            -1 => Ok(Self::HYPERBOLIC),
            other => Err(Error::Config(format!("mu must be ±1, got {other}"))),
        }
    }

    pub fn mu(self) -> f64 {
        f64::from(self.mu)
    }

    pub fn mu_int(self) -> i32 {
        i32::from(self.mu)
    }

    pub fn is_sphere(self) -> bool {
        self.mu > 0
    }

    /// Energy threshold of the ground state: 4π for S², unbounded for H².
    pub fn critical_energy(self) -> f64 {
        if self.is_sphere() {
            4.0 * std::f64::consts::PI
        } else {
            f64::INFINITY
        }
    }

    pub fn dot(self, v: &Vec3, w: &Vec3) -> f64 {
        dot_mu(v, w, self)
    }

    pub fn cross(self, v: &Vec3, w: &Vec3) -> Vec3 {
        cross_mu(v, w, self)
    }

    /// `|⟨y, y⟩_μ − μ|`, plus a sheet check for the hyperboloid.
    pub fn constraint_defect(self, y: &Point3) -> f64 {
        let d = (self.dot(y, y) - self.mu()).abs();
        if !self.is_sphere() && y[2] < 1.0 - 1e-9 {
            d.max(1.0 - y[2])
        } else {
            d
        }
    }
}

pub fn dot_mu(v: &Vec3, w: &Vec3, target: TargetManifold) -> f64 {
    v[0] * w[0] + v[1] * w[1] + target.mu() * v[2] * w[2]
}

/// `v ×_μ w := η_μ · (v × w)`.
pub fn cross_mu(v: &Vec3, w: &Vec3, target: TargetManifold) -> Vec3 {
    [
        v[1] * w[2] - v[2] * w[1],
        v[2] * w[0] - v[0] * w[2],
        target.mu() * (v[0] * w[1] - v[1] * w[0]),
    ]
}

/// Radial retraction onto the target.
pub fn project_to_target(y: &Point3, target: TargetManifold) -> Result<Point3> {
    let q = dot_mu(y, y, target);
    let ok = if target.is_sphere() {
        q > 0.0
    } else {
        q < 0.0 && y[2] > 0.0
    };
    if !ok || !q.is_finite() {
        return Err(Error::DegeneratePoint { point: *y });
    }
    let r = q.abs().sqrt();
    Ok([y[0] / r, y[1] / r, y[2] / r])
}

/// Orthogonal projection of `v` onto `T_p M` in the μ-form.
pub fn tangent_project(p: &Point3, v: &Vec3, target: TargetManifold) -> Vec3 {
    let c = dot_mu(v, p, target) * target.mu();
    [v[0] - c * p[0], v[1] - c * p[1], v[2] - c * p[2]]
}

/// Geodesic exponential map, retracted onto the target.
pub fn exp_map(p: &Point3, v: &Vec3, target: TargetManifold) -> Point3 {
    let n2 = dot_mu(v, v, target);
    if n2 <= 0.0 {
        return *p;
    }
    let n = n2.sqrt();
    let (c, s) = if target.is_sphere() {
        (n.cos(), n.sin() / n)
    } else {
        (n.cosh(), n.sinh() / n)
    };
    let y = [c * p[0] + s * v[0], c * p[1] + s * v[1], c * p[2] + s * v[2]];
    project_to_target(&y, target).unwrap_or(y)
}

/// A map sample: one point of the target per grid node, row-major with x₁ fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct MapField {
    pub grid: GridSpec,
    pub target: TargetManifold,
    pub values: Vec<Point3>,
}

impl MapField {
    /// Builds a map field, rejecting values off the target by more than `tol`.
    pub fn new(grid: GridSpec, target: TargetManifold, values: Vec<Point3>, tol: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Config(format!(
                "map field has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        let field = MapField { grid, target, values };
        if let Some((index, defect)) = field.worst_defect() {
            if defect > tol || !defect.is_finite() {
                return Err(Error::ConstraintViolation { index, defect });
            }
        }
        Ok(field)
    }

    /// Wraps values already on the target (for example outputs of [`exp_map`]).
    pub(crate) fn from_values_unchecked(grid: GridSpec, target: TargetManifold, values: Vec<Point3>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        MapField { grid, target, values }
    }

    pub fn constant(grid: GridSpec, target: TargetManifold, q: Point3) -> Self {
        MapField {
            grid,
            target,
            values: vec![q; grid.len()],
        }
    }

    /// Pointwise retraction of arbitrary R³ samples.
    pub fn projected(grid: GridSpec, target: TargetManifold, raw: &[Vec3]) -> Result<Self> {
        let values = raw
            .iter()
            .map(|y| project_to_target(y, target))
            .collect::<Result<Vec<_>>>()?;
        Ok(MapField { grid, target, values })
    }

    pub fn max_constraint_defect(&self) -> f64 {
        self.worst_defect().map_or(0.0, |(_, d)| d)
    }

    /// Largest defect and its index; non-finite coordinates count as infinite.
    fn worst_defect(&self) -> Option<(usize, f64)> {
        self.values
            .iter()
            .map(|y| {
                let d = self.target.constraint_defect(y);
                if d.is_nan() {
                    f64::INFINITY
                } else {
                    d
                }
            })
            .enumerate()
            .fold(None, |acc, (i, d)| match acc {
                Some((_, best)) if best >= d => acc,
                _ => Some((i, d)),
            })
    }

    /// Component arrays `[y₀, y₁, y₂]`.
    pub fn components(&self) -> [Vec<f64>; 3] {
        split_components(&self.values)
    }

    /// Mean of the samples, retracted onto the target.
    pub fn projected_mean(&self) -> Result<Point3> {
        let n = self.values.len() as f64;
        let mut m = [0.0; 3];
        for y in &self.values {
            for c in 0..3 {
                m[c] += y[c] / n;
            }
        }
        project_to_target(&m, self.target)
    }

    /// Largest Euclidean distance of a sample from `q`.
    pub fn max_distance_from(&self, q: &Point3) -> f64 {
        self.values.iter().map(|y| euclid_dist(y, q)).fold(0.0, f64::max)
    }
}

pub fn split_components(values: &[Vec3]) -> [Vec<f64>; 3] {
    let mut out = [
        Vec::with_capacity(values.len()),
        Vec::with_capacity(values.len()),
        Vec::with_capacity(values.len()),
    ];
    for y in values {
        for c in 0..3 {
            out[c].push(y[c]);
        }
    }
    out
}

pub fn join_components(c: &[Vec<f64>; 3]) -> Vec<Vec3> {
    (0..c[0].len()).map(|i| [c[0][i], c[1][i], c[2][i]]).collect()
}

fn euclid_dist(a: &Vec3, b: &Vec3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Pointwise energy density `½ Σ_j ⟨∂_jφ, ∂_jφ⟩_μ` with spectral derivatives.
pub fn energy_density(phi: &MapField, spec: &Spectral) -> Vec<f64> {
    let comps = phi.components();
    let (d1, d2) = spec.gradient_real3(&comps);
    let mu = phi.target.mu();
    (0..phi.grid.len())
        .map(|i| {
            let a = d1[0][i] * d1[0][i] + d1[1][i] * d1[1][i] + mu * d1[2][i] * d1[2][i];
            let b = d2[0][i] * d2[0][i] + d2[1][i] * d2[1][i] + mu * d2[2][i] * d2[2][i];
            0.5 * (a + b)
        })
        .collect()
}

/// `E(φ) = ½ ∫ |∇φ|²_μ dx` on the torus.
pub fn energy(phi: &MapField, spec: &Spectral) -> f64 {
    energy_density(phi, spec).iter().sum::<f64>() * phi.grid.cell_area()
}

/// `∫ |φ − Q|² dx` with the Euclidean norm of R³.
pub fn mass(phi: &MapField, q: &Point3) -> f64 {
    phi.values.iter().map(|y| euclid_dist(y, q).powi(2)).sum::<f64>() * phi.grid.cell_area()
}
