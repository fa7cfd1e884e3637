//! Space-time norms on sampled trajectories.
//!
//! A [`FieldSeries`] holds one or more complex component fields sampled at
//! a common set of times; every norm acts on the pointwise Euclidean modulus
//! `(Σ_c |f_c|²)^{1/2}`. Time integrals use the trapezoid rule, space
//! integrals the cell sum. Suprema over directions and Galilean boosts are
//! replaced by maxima over the finite samples of a [`LateralSample`].

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::caloric::{GaugeData, X1, X2};
use crate::error::{Error, Result};
use crate::manifold::MapField;
use crate::spectral::{BoostMode, GridSpec, ScalarField2D, Spectral};

/// Complex component fields sampled at times `t`; `components[c][n]` is
/// component `c` at time `t[n]`.
#[derive(Debug, Clone)]
pub struct FieldSeries {
    pub t: Vec<f64>,
    pub components: Vec<Vec<ScalarField2D>>,
}

impl FieldSeries {
    pub fn scalar(t: Vec<f64>, slices: Vec<ScalarField2D>) -> Self {
        assert_eq!(t.len(), slices.len());
        FieldSeries {
            t,
            components: vec![slices],
        }
    }

    pub fn new(t: Vec<f64>, components: Vec<Vec<ScalarField2D>>) -> Self {
        assert!(!components.is_empty());
        assert!(components.iter().all(|c| c.len() == t.len()));
        FieldSeries { t, components }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn n(&self) -> usize {
        self.components[0][0].n
    }

    /// Applies `f` to every component slice.
    pub fn map_slices(&self, f: impl Fn(&ScalarField2D) -> ScalarField2D + Sync) -> Self {
        FieldSeries {
            t: self.t.clone(),
            components: self.components.iter().map(|c| c.par_iter().map(&f).collect()).collect(),
        }
    }

    pub fn try_map_slices(&self, f: impl Fn(&ScalarField2D) -> Result<ScalarField2D> + Sync) -> Result<Self> {
        let components = self
            .components
            .iter()
            .map(|c| c.par_iter().map(&f).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(FieldSeries {
            t: self.t.clone(),
            components,
        })
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map_slices(|f| f.scale(c.into()))
    }

    pub fn lp_project(&self, spec: &Spectral, k: i32) -> Result<Self> {
        self.try_map_slices(|f| spec.lp_project(f, k))
    }

    /// Pointwise moduli, one vector per time.
    pub fn modulus(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|n| {
                let len = self.components[0][n].data.len();
                (0..len)
                    .map(|i| {
                        self.components
                            .iter()
                            .map(|c| c[n].data[i].norm_sqr())
                            .sum::<f64>()
                            .sqrt()
                    })
                    .collect()
            })
            .collect()
    }
}

/// `∂₁φ`, `∂₂φ` of each map slice as six real components.
pub fn grad_series(t: Vec<f64>, slices: &[MapField], spec: &Spectral) -> FieldSeries {
    let mut components: Vec<Vec<ScalarField2D>> = (0..6).map(|_| Vec::with_capacity(slices.len())).collect();
    for phi in slices {
        let (d1, d2) = spec.gradient_real3(&phi.components());
        for (a, c) in d1.iter().chain(d2.iter()).enumerate() {
            components[a].push(ScalarField2D::from_real(phi.grid.n, c));
        }
    }
    FieldSeries::new(t, components)
}

/// `ψ₁`, `ψ₂` at s-index `si` of each gauge slice.
pub fn psi_x_series(gauges: &[GaugeData], si: usize) -> FieldSeries {
    let t = gauges.iter().map(|g| g.t).collect();
    let comp = |a: usize| gauges.iter().map(|g| g.jets[si].psi[a].clone()).collect();
    FieldSeries::new(t, vec![comp(X1), comp(X2)])
}

fn trapezoid_weights(t: &[f64]) -> Vec<f64> {
    let m = t.len();
    if m == 1 {
        return vec![1.0];
    }
    (0..m)
        .map(|i| {
            let left = if i > 0 { t[i] - t[i - 1] } else { 0.0 };
            let right = if i + 1 < m { t[i + 1] - t[i] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

/// Exponent-p aggregation `(Σ wᵢ|vᵢ|^p)^{1/p}`, or the max for `p = ∞`.
fn lp_sum(values: impl Iterator<Item = (f64, f64)>, p: f64) -> f64 {
    if p.is_infinite() {
        values.fold(0.0, |m, (_, v)| m.max(v))
    } else {
        values.map(|(w, v)| w * v.powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// Which variable carries the outer exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormOrder {
    /// `L^p_t L^q_x`.
    TimeFirst,
    /// `L^p_x L^q_t`.
    SpaceFirst,
}

/// Discrete mixed norm. A single time sample carries unit weight.
pub fn mixed_norm(series: &FieldSeries, grid: &GridSpec, p: f64, q: f64, order: NormOrder) -> f64 {
    assert!(p >= 1.0 && q >= 1.0, "exponents must lie in [1, ∞]");
    let m = series.modulus();
    let wt = trapezoid_weights(&series.t);
    let cell = grid.cell_area();
    match order {
        NormOrder::TimeFirst => {
            let inner: Vec<f64> = m
                .iter()
                .map(|slice| lp_sum(slice.iter().map(|&v| (cell, v)), q))
                .collect();
            lp_sum(wt.iter().copied().zip(inner), p)
        }
        NormOrder::SpaceFirst => {
            let inner: Vec<f64> = (0..grid.len())
                .map(|i| lp_sum(wt.iter().zip(&m).map(|(&w, s)| (w, s[i])), q))
                .collect();
            lp_sum(inner.into_iter().map(|v| (cell, v)), p)
        }
    }
}

/// `L^p` over the axis-1 coordinate of `L^q` over (axis 2, t) of moduli.
fn lateral_of_modulus(m: &[Vec<f64>], t: &[f64], grid: &GridSpec, p: f64, q: f64) -> f64 {
    let n = grid.n;
    let h = grid.h();
    let wt = trapezoid_weights(t);
    let inner: Vec<f64> = (0..n)
        .map(|i| {
            lp_sum(
                wt.iter()
                    .zip(m)
                    .flat_map(|(&w, s)| (0..n).map(move |j| (w * h, s[j * n + i]))),
                q,
            )
        })
        .collect();
    lp_sum(inner.into_iter().map(|v| (h, v)), p)
}

/// `‖f‖_{L^{p,q}_θ}`: outer `L^p` along direction θ of `L^q` over the
/// transverse line and time.
pub fn lateral_norm(series: &FieldSeries, spec: &Spectral, theta: f64, p: f64, q: f64) -> f64 {
    let rotated = series.map_slices(|f| spec.rotate_resample(f, theta));
    lateral_of_modulus(&rotated.modulus(), &series.t, &spec.grid, p, q)
}

/// `‖T_{λθ} f‖_{L^{p,q}_θ}`. The modulus of the boosted field does not see the
/// phase factor, so [`BoostMode::Resample`] gives an exact value for any λ.
pub fn lateral_galilean_norm(
    series: &FieldSeries,
    spec: &Spectral,
    theta: f64,
    lambda: f64,
    p: f64,
    q: f64,
    mode: BoostMode,
) -> Result<f64> {
    if lambda == 0.0 {
        return Ok(lateral_norm(series, spec, theta, p, q));
    }
    let w = (lambda * theta.cos(), lambda * theta.sin());
    let components = series
        .components
        .iter()
        .map(|c| spec.galilean_transform(&series.t, c, w, mode))
        .collect::<Result<Vec<_>>>()?;
    let boosted = FieldSeries::new(series.t.clone(), components);
    Ok(lateral_norm(&boosted, spec, theta, p, q))
}

/// Finite direction and boost samples standing in for `θ ∈ S¹` and `λ ∈ W_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LateralSample {
    /// Directions are `πm/M` for `0 ≤ m < 2M`.
    pub angle_count: usize,
    /// Boosts at band k are `c · 2^k` for each listed `c`.
    pub lambda_factors: Vec<f64>,
}

impl Default for LateralSample {
    fn default() -> Self {
        LateralSample {
            angle_count: 4,
            lambda_factors: vec![0.0, 0.25, -0.25, 0.5, -0.5],
        }
    }
}

impl LateralSample {
    pub fn angles(&self) -> Vec<f64> {
        let m = self.angle_count.max(1);
        (0..2 * m).map(|i| PI * i as f64 / m as f64).collect()
    }

    pub fn lambdas(&self, k: i32) -> Vec<f64> {
        let scale = 2f64.powi(k);
        self.lambda_factors.iter().map(|c| c * scale).collect()
    }
}

/// The four terms of `‖f‖_{X_k⁰}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Xk0Terms {
    pub linf_l2: f64,
    pub l4: f64,
    pub l4x_linft: f64,
    pub maximal: f64,
}

impl Xk0Terms {
    pub fn total(&self) -> f64 {
        self.linf_l2 + self.l4 + self.l4x_linft + self.maximal
    }
}

pub fn xk0_terms(series: &FieldSeries, spec: &Spectral, k: i32, sample: &LateralSample) -> Xk0Terms {
    let g = &spec.grid;
    let w = 2f64.powf(-0.5 * f64::from(k));
    let lambdas = sample.lambdas(k);
    let maximal = sample
        .angles()
        .par_iter()
        .map(|&th| {
            lambdas
                .iter()
                .map(|&lam| {
                    lateral_galilean_norm(series, spec, th, lam, 2.0, f64::INFINITY, BoostMode::Resample)
                        .expect("resampled boosts cannot fail")
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Xk0Terms {
        linf_l2: mixed_norm(series, g, f64::INFINITY, 2.0, NormOrder::TimeFirst),
        l4: mixed_norm(series, g, 4.0, 4.0, NormOrder::TimeFirst),
        l4x_linft: w * mixed_norm(series, g, 4.0, f64::INFINITY, NormOrder::SpaceFirst),
        maximal: w * maximal,
    }
}

/// `X_k⁰` surrogate; the input should already be projected to band k.
pub fn xk0_norm(series: &FieldSeries, spec: &Spectral, k: i32, sample: &LateralSample) -> f64 {
    xk0_terms(series, spec, k, sample).total()
}

/// The extra lateral terms of `‖f‖_{X_k}` beyond `X_k⁰`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XkTerms {
    pub x0: Xk0Terms,
    pub strichartz_36: f64,
    pub strichartz_63: f64,
    pub smoothing: f64,
}

impl XkTerms {
    pub fn total(&self) -> f64 {
        self.x0.total() + self.strichartz_36 + self.strichartz_63 + self.smoothing
    }
}

/// X_k surrogate terms. The directional projections `P_{j,θ}` run over the
/// resolved bands with `|j − k| ≤ 20`; the local smoothing term uses λ = 0,
/// the only sample with `|λ| < 2^{k−40}`.
pub fn xk_terms(series: &FieldSeries, spec: &Spectral, k: i32, sample: &LateralSample) -> XkTerms {
    let x0 = xk0_terms(series, spec, k, sample);
    let g = &spec.grid;
    let kf = f64::from(k);
    let js: Vec<i32> = spec.bands.bands().filter(|j| (j - k).abs() <= 20).collect();
    let per_angle: Vec<(f64, f64, f64)> = sample
        .angles()
        .par_iter()
        .map(|&th| {
            let rotated = series.map_slices(|f| spec.rotate_resample(f, th));
            let s36 = lateral_of_modulus(&rotated.modulus(), &series.t, g, 3.0, 6.0);
            let mut s63 = 0.0f64;
            let mut sm = 0.0f64;
            for &j in &js {
                let pj = rotated
                    .try_map_slices(|f| spec.lp_project_axis1(f, j))
                    .expect("band from the resolved set");
                let m = pj.modulus();
                s63 = s63.max(lateral_of_modulus(&m, &series.t, g, 6.0, 3.0));
                sm = sm.max(lateral_of_modulus(&m, &series.t, g, f64::INFINITY, 2.0));
            }
            (s36, s63, sm)
        })
        .collect();
    let max = |f: fn(&(f64, f64, f64)) -> f64| per_angle.iter().map(f).fold(0.0, f64::max);
    XkTerms {
        x0,
        strichartz_36: 2f64.powf(-kf / 6.0) * max(|v| v.0),
        strichartz_63: 2f64.powf(kf / 6.0) * max(|v| v.1),
        smoothing: 2f64.powf(kf / 2.0) * max(|v| v.2),
    }
}

pub fn xk_norm(series: &FieldSeries, spec: &Spectral, k: i32, sample: &LateralSample) -> f64 {
    xk_terms(series, spec, k, sample).total()
}

/// Upper bound for `‖f‖_{Y_k}` from the decomposition `f₁ = f`: the
/// `L^{4/3}_{t,x}` norm. Never a lower bound.
pub fn yk_upper(series: &FieldSeries, grid: &GridSpec) -> f64 {
    mixed_norm(series, grid, 4.0 / 3.0, 4.0 / 3.0, NormOrder::TimeFirst)
}

/// `ℓ²L⁴` norm over the resolved bands, with the per-band `L⁴_{t,x}` values.
/// The mean mode belongs to no band and is not counted.
pub fn l2l4_norm(series: &FieldSeries, spec: &Spectral) -> (f64, Vec<(i32, f64)>) {
    let per_band: Vec<(i32, f64)> = spec
        .bands
        .bands()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&k| {
            let pk = series.lp_project(spec, k).expect("resolved band");
            (k, mixed_norm(&pk, &spec.grid, 4.0, 4.0, NormOrder::TimeFirst))
        })
        .collect();
    let total = per_band.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    (total, per_band)
}

/// Per-band values `P_k ψ_x` for `X_k`, `L⁴_{t,x}` and `L²_x` at the first time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandNorms {
    pub k_min: i32,
    pub xk: Vec<f64>,
    pub l4: Vec<f64>,
    pub l2_initial: Vec<f64>,
}

pub fn band_norms(series: &FieldSeries, spec: &Spectral, sample: &LateralSample) -> Result<BandNorms> {
    let mut out = BandNorms {
        k_min: spec.bands.k_min,
        xk: Vec::new(),
        l4: Vec::new(),
        l2_initial: Vec::new(),
    };
    let first = FieldSeries::new(
        vec![series.t[0]],
        series.components.iter().map(|c| vec![c[0].clone()]).collect(),
    );
    for k in spec.bands.bands() {
        let pk = series.lp_project(spec, k)?;
        out.xk.push(xk_norm(&pk, spec, k, sample));
        out.l4.push(mixed_norm(&pk, &spec.grid, 4.0, 4.0, NormOrder::TimeFirst));
        let p0 = first.lp_project(spec, k)?;
        out.l2_initial
            .push(mixed_norm(&p0, &spec.grid, f64::INFINITY, 2.0, NormOrder::TimeFirst));
    }
    Ok(out)
}

/// Slowly varying envelope on the band range `[k_min, k_min + len)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEnvelope {
    pub delta: f64,
    pub sigma: u32,
    pub k_min: i32,
    pub values: Vec<f64>,
}

impl FrequencyEnvelope {
    pub fn bands(&self) -> impl Iterator<Item = i32> + '_ {
        (0..self.values.len()).map(|i| self.k_min + i as i32)
    }

    pub fn get(&self, k: i32) -> f64 {
        self.values[(k - self.k_min) as usize]
    }

    /// `max_{j,k} a_k / (a_j 2^{δ|k−j|}) − 1`; nonpositive up to roundoff.
    pub fn slow_variation_excess(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for (i, &ak) in self.values.iter().enumerate() {
            for (j, &aj) in self.values.iter().enumerate() {
                if ak == 0.0 {
                    continue;
                }
                let d = (i as f64 - j as f64).abs();
                worst = worst.max(ak / (aj * 2f64.powf(self.delta * d)) - 1.0);
            }
        }
        worst
    }

    /// `υ = α + β` pointwise.
    pub fn sum(&self, other: &FrequencyEnvelope) -> FrequencyEnvelope {
        assert_eq!(self.k_min, other.k_min);
        FrequencyEnvelope {
            delta: self.delta,
            sigma: self.sigma,
            k_min: self.k_min,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn square_sum(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

/// `a_k = max_j 2^{σj} 2^{−δ|k−j|} c_j` over the bands `k_min + index`.
pub fn envelope_from_values(values: &[f64], k_min: i32, delta: f64, sigma: u32) -> FrequencyEnvelope {
    assert!(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
    let weighted: Vec<f64> = values
        .iter()
        .enumerate()
        .map(|(j, &c)| 2f64.powi(sigma as i32 * (k_min + j as i32)) * c)
        .collect();
    let env = (0..values.len())
        .map(|k| {
            weighted
                .iter()
                .enumerate()
                .map(|(j, &c)| 2f64.powf(-delta * (k as f64 - j as f64).abs()) * c)
                .fold(0.0, f64::max)
        })
        .collect();
    FrequencyEnvelope {
        delta,
        sigma,
        k_min,
        values: env,
    }
}

/// Outcome of the low- and high-frequency summation rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummationReport {
    pub p: f64,
    /// `1 / (1 − 2^{−(p−δ)})`.
    pub constant: f64,
    /// `max_k Σ_{k′≤k} 2^{pk′}a_{k′} / (2^{pk}a_k)`.
    pub low_ratio: f64,
    /// `max_k Σ_{k′≥k} 2^{−pk′}a_{k′} / (2^{−pk}a_k)`.
    pub high_ratio: f64,
}

impl SummationReport {
    pub fn passes(&self) -> bool {
        let bound = self.constant * (1.0 + 1e-12);
        self.low_ratio <= bound && self.high_ratio <= bound
    }
}

pub fn envelope_summation_check(env: &FrequencyEnvelope, p: f64) -> Result<SummationReport> {
    if p <= env.delta {
        return Err(Error::ExponentTooSmall { p, delta: env.delta });
    }
    let constant = 1.0 / (1.0 - 2f64.powf(-(p - env.delta)));
    let m = env.values.len();
    let mut low_ratio = 0.0f64;
    let mut high_ratio = 0.0f64;
    for k in 0..m {
        let ak = env.values[k];
        if ak == 0.0 {
            continue;
        }
        let low: f64 = (0..=k)
            .map(|j| 2f64.powf(p * (j as f64 - k as f64)) * env.values[j])
            .sum();
        let high: f64 = (k..m)
            .map(|j| 2f64.powf(-p * (j as f64 - k as f64)) * env.values[j])
            .sum();
        low_ratio = low_ratio.max(low / ak);
        high_ratio = high_ratio.max(high / ak);
    }
    Ok(SummationReport {
        p,
        constant,
        low_ratio,
        high_ratio,
    })
}

/// `Σ_{m ∈ Z} 2^{−2δ|m|}`.
pub fn envelope_square_constant(delta: f64) -> f64 {
    let r = 2f64.powf(-2.0 * delta);
    (1.0 + r) / (1.0 - r)
}

/// One bilinear pair `(j, k, s, s̃)` with s-values given as grid indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BilinearPair {
    pub j: i32,
    pub k: i32,
    pub s_index: usize,
    pub s_tilde_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilinearRow {
    pub pair: BilinearPair,
    pub s: f64,
    pub s_tilde: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilinearReport {
    pub max_ratio: f64,
    pub rows: Vec<BilinearRow>,
}

/// `‖|P_jψ_x(s)| |P_kψ_x(s̃)|‖_{L²_{t,x}}` divided by
/// `2^{−|j−k|/2} υ_j υ_k (1+s2^{2j})^{−4} (1+s̃2^{2k})^{−4}`.
/// `psi_x[i]` is the ψ_x time series at `s_grid[i]`.
pub fn bilinear_ratio(
    psi_x: &[FieldSeries],
    s_grid: &[f64],
    spec: &Spectral,
    upsilon: &FrequencyEnvelope,
    pairs: &[BilinearPair],
) -> Result<BilinearReport> {
    let rows = pairs
        .par_iter()
        .map(|&pair| {
            let a = psi_x[pair.s_index].lp_project(spec, pair.j)?;
            let b = psi_x[pair.s_tilde_index].lp_project(spec, pair.k)?;
            let product: Vec<ScalarField2D> = a
                .modulus()
                .iter()
                .zip(b.modulus())
                .map(|(x, y)| {
                    let v: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
                    ScalarField2D::from_real(spec.n(), &v)
                })
                .collect();
            let lhs = mixed_norm(
                &FieldSeries::scalar(a.t.clone(), product),
                &spec.grid,
                2.0,
                2.0,
                NormOrder::TimeFirst,
            );
            let (s, st) = (s_grid[pair.s_index], s_grid[pair.s_tilde_index]);
            let heat = |s: f64, k: i32| (1.0 + s * 4f64.powi(k)).powi(-4);
            let rhs = 2f64.powf(-0.5 * f64::from((pair.j - pair.k).abs()))
                * upsilon.get(pair.j)
                * upsilon.get(pair.k)
                * heat(s, pair.j)
                * heat(st, pair.k);
            let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
            Ok(BilinearRow {
                pair,
                s,
                s_tilde: st,
                lhs,
                rhs,
                ratio,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(BilinearReport { max_ratio, rows })
}

pub const MIN_FIT_SAMPLES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub exponent: f64,
    /// RMS residual of the log-log fit.
    pub residual: f64,
    pub samples: usize,
}

/// Least-squares slope of `log v` against `log(1 + s 2^{2k})` over samples
/// with `s 2^{2k}` in `window`. Nonpositive values are skipped.
pub fn decay_fit(s: &[f64], values: &[f64], k: i32, window: (f64, f64)) -> Result<DecayFit> {
    let scale = 4f64.powi(k);
    let pts: Vec<(f64, f64)> = s
        .iter()
        .zip(values)
        .filter(|&(&s, &v)| {
            let x = s * scale;
            x >= window.0 * (1.0 - 1e-12) && x <= window.1 * (1.0 + 1e-12) && v > 0.0
        })
        .map(|(&s, &v)| ((1.0 + s * scale).ln(), v.ln()))
        .collect();
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_FIT_SAMPLES,
            got: pts.len(),
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let exponent = sxy / sxx;
    let residual = (pts
        .iter()
        .map(|p| (p.1 - my - exponent * (p.0 - mx)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(DecayFit {
        exponent,
        residual,
        samples: pts.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormRatio {
    pub ratio: f64,
    /// Both norms vanished; the ratio is 1 by convention.
    pub degenerate: bool,
}

/// `‖∇φ‖_{ℓ²L⁴} / ‖ψ_x‖_{ℓ²L⁴}` on a common time grid.
pub fn grad_phi_vs_psi_ratio(grad_phi: &FieldSeries, psi_x: &FieldSeries, spec: &Spectral) -> NormRatio {
    let (a, _) = l2l4_norm(grad_phi, spec);
    let (b, _) = l2l4_norm(psi_x, spec);
    let floor = 1e-300;
    if a <= floor && b <= floor {
        NormRatio {
            ratio: 1.0,
            degenerate: true,
        }
    } else {
        NormRatio {
            ratio: a / b,
            degenerate: false,
        }
    }
}

/// `‖|ξ|^σ ∇φ‖_{L²}` with Euclidean components.
pub fn sobolev_seminorm(phi: &MapField, sigma: f64, spec: &Spectral) -> f64 {
    assert!(sigma >= 0.0);
    let c = phi.components();
    let specs = spec.real_spectra(&[&c[0], &c[1], &c[2]]);
    let n = spec.n() as f64;
    let scale = spec.grid.l * spec.grid.l / n.powi(4);
    let sum: f64 = specs
        .iter()
        .map(|s| {
            s.iter()
                .enumerate()
                .map(|(idx, z)| {
                    let k2 = spec.k_sq(idx);
                    if k2 == 0.0 {
                        0.0
                    } else {
                        k2.powf(sigma + 1.0) * z.norm_sqr()
                    }
                })
                .sum::<f64>()
        })
        .sum();
    (sum * scale).sqrt()
}

/// Which surrogates a report relies on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateFlags {
    pub finite_theta: usize,
    pub lambda_sample: Vec<f64>,
    pub band_truncation: (i32, i32),
    pub yk_upper_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormEntry {
    pub name: String,
    pub band: Option<i32>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub n: usize,
    pub l: f64,
    pub interval: (f64, f64),
    pub flags: SurrogateFlags,
    pub entries: Vec<NormEntry>,
}

impl NormReport {
    pub fn new(grid: &GridSpec, interval: (f64, f64), sample: &LateralSample, spec: &Spectral) -> Self {
        NormReport {
            n: grid.n,
            l: grid.l,
            interval,
            flags: SurrogateFlags {
                finite_theta: 2 * sample.angle_count,
                lambda_sample: sample.lambda_factors.clone(),
                band_truncation: (spec.bands.k_min, spec.bands.k_max),
                yk_upper_bound: true,
            },
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, band: Option<i32>, value: f64) {
        self.entries.push(NormEntry {
            name: name.to_string(),
            band,
            value,
        });
    }

    pub fn is_valid(&self) -> bool {
        self.entries.iter().all(|e| e.value.is_finite() && e.value >= 0.0)
    }

    pub fn get(&self, name: &str, band: Option<i32>) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.name == name && e.band == band)
            .map(|e| e.value)
    }
}
