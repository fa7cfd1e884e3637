//! Periodic pseudospectral engine on an N×N square of side L.
//!
//! Fields are stored row-major with x₁ varying fastest: index `j * N + i`
//! holds the sample at `(x₁, x₂) = (i h, j h)`. Spectra use the same layout
//! with wavenumbers `2π m / L`, `m ∈ [−N/2, N/2)`.
//!
//! Real fields are transformed two at a time by packing them into the real
//! and imaginary parts of one complex transform; every multiplier applied
//! through [`Spectral::real_inverse`] must map real fields to real fields.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub l: f64,
    pub dealias_fraction: f64,
}

impl GridSpec {
    pub fn new(n: usize, l: f64) -> Result<Self> {
        Self::with_dealias(n, l, 2.0 / 3.0)
    }

    pub fn with_dealias(n: usize, l: f64, dealias_fraction: f64) -> Result<Self> {
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::Config(format!("N must be a power of two ≥ 16, got {n}")));
        }
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::Config(format!("L must be positive, got {l}")));
        }
        if !(dealias_fraction > 0.0 && dealias_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "dealias fraction must lie in (0, 1], got {dealias_fraction}"
            )));
        }
        Ok(GridSpec { n, l, dealias_fraction })
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn h(&self) -> f64 {
        self.l / self.n as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.h() * self.h()
    }

    /// Fundamental wavenumber 2π/L.
    pub fn dk(&self) -> f64 {
        2.0 * PI / self.l
    }

    /// Largest resolved wavenumber magnitude per axis, πN/L.
    pub fn k_nyquist(&self) -> f64 {
        PI * self.n as f64 / self.l
    }

    /// Largest |ξ|² on the grid (corner mode), used for stability limits.
    pub fn max_symbol(&self) -> f64 {
        2.0 * self.k_nyquist().powi(2)
    }

    pub fn coords(&self, index: usize) -> (f64, f64) {
        let i = index % self.n;
        let j = index / self.n;
        (i as f64 * self.h(), j as f64 * self.h())
    }

    /// Coordinates relative to the domain centre `(L/2, L/2)`.
    pub fn centered_coords(&self, index: usize) -> (f64, f64) {
        let (x1, x2) = self.coords(index);
        (x1 - 0.5 * self.l, x2 - 0.5 * self.l)
    }

    /// Signed mode number of array index `i`.
    pub fn mode(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }
}

/// Complex samples on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField2D {
    pub n: usize,
    pub data: Vec<Complex64>,
}

impl ScalarField2D {
    pub fn zeros(n: usize) -> Self {
        ScalarField2D {
            n,
            data: vec![ZERO; n * n],
        }
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn(f64, f64) -> Complex64) -> Self {
        let data = (0..grid.len())
            .map(|idx| {
                let (x1, x2) = grid.coords(idx);
                f(x1, x2)
            })
            .collect();
        ScalarField2D { n: grid.n, data }
    }

    pub fn from_real(n: usize, values: &[f64]) -> Self {
        ScalarField2D {
            n,
            data: values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn real_part(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.re).collect()
    }

    pub fn l2_norm(&self, grid: &GridSpec) -> f64 {
        (self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.cell_area()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        ScalarField2D {
            n: self.n,
            data: self.data.iter().map(|z| z * c).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        ScalarField2D {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        ScalarField2D {
            n: self.n,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }
}

/// Dyadic Littlewood-Paley band set `[k_min, k_max]`.
///
/// Interior band symbols are `L_k − L_{k−1}` with the smooth low-pass
/// `L_k(r) = 1 − S(log₂ r − k)`, supported in `[2^{k−1}, 2^{k+1}]`. The end
/// bands absorb the remaining low and high frequencies so that
/// `Σ_k P_k + mean = identity` exactly on every grid mode.
#[derive(Debug, Clone)]
pub struct LPBandSet {
    pub k_min: i32,
    pub k_max: i32,
}

impl LPBandSet {
    pub fn for_grid(grid: &GridSpec) -> Self {
        let k_min = grid.dk().log2().ceil() as i32;
        let top = grid.dealias_fraction * grid.k_nyquist();
        let k_max = (top.log2().floor() as i32).max(k_min);
        LPBandSet { k_min, k_max }
    }

    pub fn bands(&self) -> impl Iterator<Item = i32> + Clone {
        self.k_min..=self.k_max
    }

    pub fn len(&self) -> usize {
        (self.k_max - self.k_min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, k: i32) -> bool {
        (self.k_min..=self.k_max).contains(&k)
    }

    /// Band symbol at radial frequency `r ≥ 0`; zero at `r = 0` (mean channel).
    pub fn symbol(&self, k: i32, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        if self.k_min == self.k_max {
            return 1.0;
        }
        let low = |k: i32| 1.0 - smoothstep3(r.log2() - f64::from(k));
        if k == self.k_min {
            low(k)
        } else if k == self.k_max {
            1.0 - low(k - 1)
        } else {
            low(k) - low(k - 1)
        }
    }
}

/// Order-3 polynomial smoothstep: C³, 0 for t ≤ 0, 1 for t ≥ 1.
pub fn smoothstep3(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t.powi(4) * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t * t * t)
    }
}

/// Boost handling for [`Spectral::galilean_transform`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoostMode {
    /// Reject boosts whose phase factor is not periodic on the torus.
    Strict,
    /// Apply the phase factor on the grid regardless of periodicity.
    Resample,
}

/// FFT plans, wavenumber tables and band symbols for one grid.
pub struct Spectral {
    pub grid: GridSpec,
    pub bands: LPBandSet,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    /// Wavenumber per index, Nyquist included.
    k: Vec<f64>,
    /// Wavenumber per index with the Nyquist mode zeroed (odd derivatives).
    kd: Vec<f64>,
    dealias_mask: Vec<bool>,
    band_symbols: Vec<Vec<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral")
            .field("grid", &self.grid)
            .field("bands", &self.bands)
            .finish()
    }
}

impl Spectral {
    pub fn new(grid: GridSpec) -> Self {
        let n = grid.n;
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        let dk = grid.dk();
        let k: Vec<f64> = (0..n).map(|i| grid.mode(i) as f64 * dk).collect();
        let kd: Vec<f64> = (0..n).map(|i| if i == n / 2 { 0.0 } else { k[i] }).collect();
        let cutoff = grid.dealias_fraction * (n as f64) / 2.0;
        let dealias_mask = (0..n * n)
            .map(|idx| {
                let (i, j) = (idx % n, idx / n);
                (grid.mode(i) as f64).abs() <= cutoff && (grid.mode(j) as f64).abs() <= cutoff
            })
            .collect();
        let bands = LPBandSet::for_grid(&grid);
        let band_symbols = bands
            .bands()
            .map(|b| {
                (0..n * n)
                    .map(|idx| {
                        let r = k[idx % n].hypot(k[idx / n]);
                        bands.symbol(b, r)
                    })
                    .collect()
            })
            .collect();
        Spectral {
            grid,
            bands,
            fft,
            ifft,
            k,
            kd,
            dealias_mask,
            band_symbols,
        }
    }

    pub fn n(&self) -> usize {
        self.grid.n
    }

    /// (ξ₁, ξ₂) at spectral index `idx`.
    pub fn wavevector(&self, idx: usize) -> (f64, f64) {
        let n = self.grid.n;
        (self.k[idx % n], self.k[idx / n])
    }

    pub fn k_sq(&self, idx: usize) -> f64 {
        let (a, b) = self.wavevector(idx);
        a * a + b * b
    }

    // ---- raw transforms -------------------------------------------------

    fn rows(&self, buf: &mut [Complex64], inverse: bool) {
        let plan = if inverse { &self.ifft } else { &self.fft };
        let mut scratch = vec![ZERO; plan.get_inplace_scratch_len()];
        plan.process_with_scratch(buf, &mut scratch);
    }

    fn transform2(&self, buf: &mut [Complex64], inverse: bool) {
        let n = self.grid.n;
        self.rows(buf, inverse);
        transpose_square(buf, n);
        self.rows(buf, inverse);
        transpose_square(buf, n);
        if inverse {
            let s = 1.0 / (n * n) as f64;
            buf.iter_mut().for_each(|z| *z *= s);
        }
    }

    pub fn forward(&self, f: &ScalarField2D) -> Vec<Complex64> {
        let mut buf = f.data.clone();
        self.transform2(&mut buf, false);
        buf
    }

    pub fn inverse(&self, mut spec: Vec<Complex64>) -> ScalarField2D {
        self.transform2(&mut spec, true);
        ScalarField2D {
            n: self.grid.n,
            data: spec,
        }
    }

    /// Spectra of real fields, two per complex transform.
    pub fn real_spectra(&self, fields: &[&[f64]]) -> Vec<Vec<Complex64>> {
        let n = self.grid.n;
        let mut out = Vec::with_capacity(fields.len());
        for pair in fields.chunks(2) {
            let mut buf: Vec<Complex64> = match pair {
                [a, b] => a.iter().zip(b.iter()).map(|(&x, &y)| Complex64::new(x, y)).collect(),
                [a] => a.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
                _ => unreachable!(),
            };
            self.transform2(&mut buf, false);
            if pair.len() == 1 {
                out.push(buf);
                continue;
            }
            let mut sa = vec![ZERO; n * n];
            let mut sb = vec![ZERO; n * n];
            for j in 0..n {
                let jm = (n - j) % n;
                for i in 0..n {
                    let im = (n - i) % n;
                    let z = buf[j * n + i];
                    let zc = buf[jm * n + im].conj();
                    sa[j * n + i] = 0.5 * (z + zc);
                    sb[j * n + i] = Complex64::new(0.0, -0.5) * (z - zc);
                }
            }
            out.push(sa);
            out.push(sb);
        }
        out
    }

    /// Inverse transforms of spectra of real fields, two per complex transform.
    pub fn real_inverse(&self, specs: Vec<Vec<Complex64>>) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(specs.len());
        let mut it = specs.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => {
                    let packed: Vec<Complex64> = a
                        .iter()
                        .zip(&b)
                        .map(|(&x, &y)| x + Complex64::new(0.0, 1.0) * y)
                        .collect();
                    let f = self.inverse(packed);
                    out.push(f.data.iter().map(|z| z.re).collect());
                    out.push(f.data.iter().map(|z| z.im).collect());
                }
                None => {
                    let f = self.inverse(a);
                    out.push(f.data.iter().map(|z| z.re).collect());
                }
            }
        }
        out
    }

    // ---- multipliers ----------------------------------------------------

    pub fn mul_symbol(&self, spec: &[Complex64], sym: impl Fn(f64, f64) -> Complex64) -> Vec<Complex64> {
        let n = self.grid.n;
        spec.iter()
            .enumerate()
            .map(|(idx, &z)| z * sym(self.k[idx % n], self.k[idx / n]))
            .collect()
    }

    /// ∂₁ applied to a spectrum (Nyquist zeroed).
    pub fn d1_spec(&self, spec: &[Complex64]) -> Vec<Complex64> {
        let n = self.grid.n;
        spec.iter()
            .enumerate()
            .map(|(idx, &z)| z * Complex64::new(0.0, self.kd[idx % n]))
            .collect()
    }

    pub fn d2_spec(&self, spec: &[Complex64]) -> Vec<Complex64> {
        let n = self.grid.n;
        spec.iter()
            .enumerate()
            .map(|(idx, &z)| z * Complex64::new(0.0, self.kd[idx / n]))
            .collect()
    }

    pub fn lap_spec(&self, spec: &[Complex64]) -> Vec<Complex64> {
        spec.iter().enumerate().map(|(idx, &z)| z * (-self.k_sq(idx))).collect()
    }

    pub fn dealias_spec(&self, spec: &mut [Complex64]) {
        for (z, &keep) in spec.iter_mut().zip(&self.dealias_mask) {
            if !keep {
                *z = ZERO;
            }
        }
    }

    // ---- complex field operators ---------------------------------------

    pub fn gradient(&self, f: &ScalarField2D) -> (ScalarField2D, ScalarField2D) {
        let s = self.forward(f);
        (self.inverse(self.d1_spec(&s)), self.inverse(self.d2_spec(&s)))
    }

    pub fn laplacian(&self, f: &ScalarField2D) -> ScalarField2D {
        let s = self.forward(f);
        self.inverse(self.lap_spec(&s))
    }

    pub fn dealias(&self, f: &ScalarField2D) -> ScalarField2D {
        let mut s = self.forward(f);
        self.dealias_spec(&mut s);
        self.inverse(s)
    }

    /// Spatial mean (the zero mode).
    pub fn mean(&self, f: &ScalarField2D) -> Complex64 {
        f.data.iter().sum::<Complex64>() / f.data.len() as f64
    }

    pub fn lp_project(&self, f: &ScalarField2D, k: i32) -> Result<ScalarField2D> {
        let sym = self.band_symbol(k)?;
        let s = self.forward(f);
        Ok(self.inverse(s.iter().zip(sym).map(|(&z, &m)| z * m).collect()))
    }

    /// Band multiplier applied to an existing spectrum.
    pub fn lp_project_spec(&self, spec: &[Complex64], k: i32) -> Result<Vec<Complex64>> {
        let sym = self.band_symbol(k)?;
        Ok(spec.iter().zip(sym).map(|(&z, &m)| z * m).collect())
    }

    fn band_symbol(&self, k: i32) -> Result<&[f64]> {
        if !self.bands.contains(k) {
            return Err(Error::BandOutOfRange {
                k,
                k_min: self.bands.k_min,
                k_max: self.bands.k_max,
            });
        }
        Ok(&self.band_symbols[(k - self.bands.k_min) as usize])
    }

    /// `e^{sΔ} f`.
    pub fn heat_propagator(&self, f: &ScalarField2D, s: f64) -> Result<ScalarField2D> {
        if s < 0.0 || s.is_nan() {
            return Err(Error::NegativeTime(s));
        }
        let spec = self.forward(f);
        Ok(self.inverse(self.mul_symbol(&spec, |a, b| Complex64::new((-s * (a * a + b * b)).exp(), 0.0))))
    }

    /// `e^{itΔ} f`, i.e. multiplier `e^{−it|ξ|²}`.
    pub fn schrodinger_propagator(&self, f: &ScalarField2D, t: f64) -> ScalarField2D {
        let spec = self.forward(f);
        self.inverse(self.mul_symbol(&spec, |a, b| Complex64::from_polar(1.0, -t * (a * a + b * b))))
    }

    /// Translation `f(x + d)` by a spectral phase.
    pub fn shift(&self, f: &ScalarField2D, d: (f64, f64)) -> ScalarField2D {
        let spec = self.forward(f);
        self.inverse(self.mul_symbol(&spec, |a, b| Complex64::from_polar(1.0, a * d.0 + b * d.1)))
    }

    pub fn boost_is_compatible(&self, w: (f64, f64)) -> bool {
        let unit = 4.0 * PI / self.grid.l;
        let on_lattice = |c: f64| ((c / unit) - (c / unit).round()).abs() < 1e-9;
        on_lattice(w.0) && on_lattice(w.1)
    }

    /// `T_w(f)(t, x) = e^{−ix·w/2} e^{−it|w|²/4} f(t, x + tw)` per time slice.
    pub fn galilean_transform(
        &self,
        times: &[f64],
        traj: &[ScalarField2D],
        w: (f64, f64),
        mode: BoostMode,
    ) -> Result<Vec<ScalarField2D>> {
        if mode == BoostMode::Strict && !self.boost_is_compatible(w) {
            return Err(Error::IncompatibleBoost(w.0, w.1));
        }
        let w2 = w.0 * w.0 + w.1 * w.1;
        let grid = self.grid;
        Ok(times
            .iter()
            .zip(traj)
            .map(|(&t, f)| {
                let shifted = if t == 0.0 {
                    f.clone()
                } else {
                    self.shift(f, (t * w.0, t * w.1))
                };
                let global = Complex64::from_polar(1.0, -t * w2 / 4.0);
                ScalarField2D {
                    n: grid.n,
                    data: shifted
                        .data
                        .iter()
                        .enumerate()
                        .map(|(idx, &z)| {
                            let (x1, x2) = grid.coords(idx);
                            z * global * Complex64::from_polar(1.0, -(x1 * w.0 + x2 * w.1) / 2.0)
                        })
                        .collect(),
                }
            })
            .collect())
    }

    /// Samples of `f ∘ R_θ` about the domain centre, so that direction θ is
    /// carried onto axis 1. Quarter turns are index permutations; the
    /// remainder in [−π/4, π/4] uses three Fourier shears.
    pub fn rotate_resample(&self, f: &ScalarField2D, theta: f64) -> ScalarField2D {
        let quarter = (theta / (PI / 2.0)).round();
        let rest = theta - quarter * PI / 2.0;
        let q = (quarter as i64).rem_euclid(4) as usize;
        let mut g = rotate_quarter(f, q);
        if rest.abs() > 1e-15 {
            let alpha = -(rest / 2.0).tan();
            let beta = rest.sin();
            self.shear_rows(&mut g.data, alpha);
            transpose_square(&mut g.data, self.grid.n);
            self.shear_rows(&mut g.data, beta);
            transpose_square(&mut g.data, self.grid.n);
            self.shear_rows(&mut g.data, alpha);
        }
        g
    }

    /// Row j becomes `f(x₁ + c·x₂_c, x₂)` with centred x₂.
    fn shear_rows(&self, data: &mut [Complex64], c: f64) {
        let n = self.grid.n;
        let h = self.grid.h();
        self.rows(data, false);
        for j in 0..n {
            let d = c * (j as f64 - (n / 2) as f64) * h;
            let row = &mut data[j * n..(j + 1) * n];
            for (i, z) in row.iter_mut().enumerate() {
                *z *= Complex64::from_polar(1.0, self.k[i] * d);
            }
        }
        self.rows(data, true);
        let s = 1.0 / n as f64;
        data.iter_mut().for_each(|z| *z *= s);
    }

    /// One-dimensional dyadic band filter along axis 1 (the rotated θ direction).
    pub fn lp_project_axis1(&self, f: &ScalarField2D, j: i32) -> Result<ScalarField2D> {
        if !self.bands.contains(j) {
            return Err(Error::BandOutOfRange {
                k: j,
                k_min: self.bands.k_min,
                k_max: self.bands.k_max,
            });
        }
        let n = self.grid.n;
        let sym: Vec<f64> = (0..n).map(|i| self.bands.symbol(j, self.k[i].abs())).collect();
        let mut data = f.data.clone();
        self.rows(&mut data, false);
        for row in data.chunks_mut(n) {
            for (z, &m) in row.iter_mut().zip(&sym) {
                *z *= m / n as f64;
            }
        }
        self.rows(&mut data, true);
        Ok(ScalarField2D { n, data })
    }

    // ---- real vector-field helpers ---------------------------------------

    /// Spatial gradients (∂₁, ∂₂) of three real component fields.
    pub fn gradient_real3(&self, c: &[Vec<f64>; 3]) -> ([Vec<f64>; 3], [Vec<f64>; 3]) {
        let specs = self.real_spectra(&[&c[0], &c[1], &c[2]]);
        self.gradient_from_spectra(&specs)
    }

    pub fn gradient_from_spectra(&self, specs: &[Vec<Complex64>]) -> ([Vec<f64>; 3], [Vec<f64>; 3]) {
        let outs = self.real_inverse(vec![
            self.d1_spec(&specs[0]),
            self.d1_spec(&specs[1]),
            self.d1_spec(&specs[2]),
            self.d2_spec(&specs[0]),
            self.d2_spec(&specs[1]),
            self.d2_spec(&specs[2]),
        ]);
        let mut it = outs.into_iter();
        let mut take = || it.next().expect("six outputs");
        let d1 = [take(), take(), take()];
        let d2 = [take(), take(), take()];
        (d1, d2)
    }

    pub fn laplacian_real3(&self, c: &[Vec<f64>; 3]) -> [Vec<f64>; 3] {
        let specs = self.real_spectra(&[&c[0], &c[1], &c[2]]);
        let outs = self.real_inverse(specs.iter().map(|s| self.lap_spec(s)).collect());
        let mut it = outs.into_iter();
        [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()]
    }
}

fn transpose_square(buf: &mut [Complex64], n: usize) {
    for j in 0..n {
        for i in (j + 1)..n {
            buf.swap(j * n + i, i * n + j);
        }
    }
}

/// `g(x) = f(R_{qπ/2} x)` about the centre index N/2.
fn rotate_quarter(f: &ScalarField2D, q: usize) -> ScalarField2D {
    if q == 0 {
        return f.clone();
    }
    let n = f.n as i64;
    let c = n / 2;
    let mut data = vec![ZERO; f.data.len()];
    for j in 0..n {
        for i in 0..n {
            let (a, b) = (i - c, j - c);
            let (sa, sb) = match q {
                1 => (-b, a),
                2 => (-a, -b),
                _ => (b, -a),
            };
            let si = (sa + c).rem_euclid(n);
            let sj = (sb + c).rem_euclid(n);
            data[(j * n + i) as usize] = f.data[(sj * n + si) as usize];
        }
    }
    ScalarField2D { n: f.n, data }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize, l: f64) -> GridSpec {
        GridSpec::new(n, l).unwrap()
    }

    fn max_diff(a: &ScalarField2D, b: &ScalarField2D) -> f64 {
        a.sub(b).max_abs()
    }

    /// Random field with modes only inside `|m| ≤ mmax` on both axes.
    fn band_limited(spec: &Spectral, mmax: i64, seed: u64) -> ScalarField2D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = spec.n();
        let mut s = vec![ZERO; n * n];
        for idx in 0..n * n {
            let (i, j) = (idx % n, idx / n);
            if spec.grid.mode(i).abs() <= mmax && spec.grid.mode(j).abs() <= mmax {
                s[idx] = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            }
        }
        spec.inverse(s)
    }

    fn gaussian(g: &GridSpec, w: f64) -> ScalarField2D {
        ScalarField2D::from_fn(g, |x1, x2| {
            let (a, b) = (x1 - g.l / 2.0, x2 - g.l / 2.0);
            Complex64::new(
                (-(a * a + b * b) / (2.0 * w * w)).exp(),
                0.3 * a * (-(a * a + b * b) / (2.0 * w * w)).exp(),
            )
        })
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(8, 1.0).is_err());
        assert!(GridSpec::new(24, 1.0).is_err());
        assert!(GridSpec::new(32, -1.0).is_err());
        assert!(GridSpec::new(32, 1.0).is_ok());
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let g = grid(32, 5.0);
        let s = Spectral::new(g);
        let f = ScalarField2D::from_fn(&g, |_, _| Complex64::new(2.5, -1.0));
        let (a, b) = s.gradient(&f);
        assert!(a.max_abs() < 1e-13 && b.max_abs() < 1e-13);
        assert!(s.laplacian(&f).max_abs() < 1e-12);
    }

    #[test]
    fn fourier_eigenfunction_derivatives() {
        let g = grid(32, 5.0);
        let s = Spectral::new(g);
        let kap = 2.0 * PI / g.l;
        let f = ScalarField2D::from_fn(&g, |x1, _| Complex64::from_polar(1.0, kap * x1));
        let (a, b) = s.gradient(&f);
        let want = f.scale(Complex64::new(0.0, kap));
        assert!(max_diff(&a, &want) < 1e-12);
        assert!(b.max_abs() < 1e-12);
        let lap = s.laplacian(&f);
        assert!(max_diff(&lap, &f.scale(Complex64::new(-kap * kap, 0.0))) < 1e-12);
    }

    #[test]
    fn gradient_matches_centered_differences_at_second_order() {
        // Fixed smooth function; compare spectral ∂₁ with centred differences.
        let mut errs = Vec::new();
        for &n in &[32usize, 64] {
            let g = grid(n, 2.0 * PI);
            let s = Spectral::new(g);
            let f = ScalarField2D::from_fn(&g, |x1, x2| Complex64::new((x1).sin() * (2.0 * x2).cos(), 0.0));
            let (d1, _) = s.gradient(&f);
            let h = g.h();
            let mut e: f64 = 0.0;
            for idx in 0..g.len() {
                let (i, j) = (idx % n, idx / n);
                let ip = j * n + (i + 1) % n;
                let im = j * n + (i + n - 1) % n;
                let fd = (f.data[ip] - f.data[im]) / (2.0 * h);
                e = e.max((fd - d1.data[idx]).norm());
            }
            errs.push(e);
        }
        let ratio = errs[0] / errs[1];
        assert!((3.8..4.2).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn laplacian_product_rule() {
        let g = grid(64, 10.0);
        let s = Spectral::new(g);
        let f = gaussian(&g, 0.6);
        let k = g.dk();
        let h = ScalarField2D::from_fn(&g, |x1, x2| {
            Complex64::new((k * x1).cos() + 0.2 * (2.0 * k * x2).sin(), 0.0)
        });
        let lhs = s.laplacian(&f.mul(&h));
        let (f1, f2) = s.gradient(&f);
        let (h1, h2) = s.gradient(&h);
        let rhs = s
            .laplacian(&f)
            .mul(&h)
            .add(&f.mul(&s.laplacian(&h)))
            .add(&f1.mul(&h1).add(&f2.mul(&h2)).scale(Complex64::new(2.0, 0.0)));
        assert!(max_diff(&lhs, &rhs) < 1e-9, "{}", max_diff(&lhs, &rhs));
    }

    #[test]
    fn parseval_holds() {
        let g = grid(32, 3.0);
        let s = Spectral::new(g);
        let f = band_limited(&s, 15, 7);
        let phys = f.l2_norm(&g);
        let spec = s.forward(&f);
        let spectral = (spec.iter().map(|z| z.norm_sqr()).sum::<f64>() * g.l * g.l / (g.n as f64).powi(4)).sqrt();
        assert!((phys - spectral).abs() <= 1e-12 * phys);
    }

    #[test]
    fn real_packing_matches_complex_path() {
        let g = grid(32, 4.0);
        let s = Spectral::new(g);
        let a = band_limited(&s, 10, 1).real_part();
        let b = band_limited(&s, 10, 2).real_part();
        let c = band_limited(&s, 10, 3).real_part();
        let (d1, d2) = s.gradient_real3(&[a.clone(), b.clone(), c.clone()]);
        for (field, (g1, g2)) in [a, b, c].iter().zip(d1.iter().zip(d2.iter())) {
            let (r1, r2) = s.gradient(&ScalarField2D::from_real(32, field));
            for i in 0..g.len() {
                assert!((r1.data[i].re - g1[i]).abs() < 1e-12);
                assert!((r2.data[i].re - g2[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn band_range_respects_grid() {
        let g = grid(64, 8.0);
        let b = LPBandSet::for_grid(&g);
        assert!(2f64.powi(b.k_min) >= g.dk());
        assert!(2f64.powi(b.k_max) <= g.dealias_fraction * g.k_nyquist());
        assert_eq!((b.k_min, b.k_max), (0, 4));
    }

    #[test]
    fn lp_partition_of_unity() {
        let g = grid(64, 8.0);
        let s = Spectral::new(g);
        let f = s.dealias(&band_limited(&s, 30, 11));
        let mut sum = ScalarField2D::from_fn(&g, |_, _| s.mean(&f));
        for k in s.bands.bands() {
            sum = sum.add(&s.lp_project(&f, k).unwrap());
        }
        assert!(max_diff(&sum, &f) <= 1e-12, "{}", max_diff(&sum, &f));
    }

    #[test]
    fn lp_support_separation_and_contraction() {
        let g = grid(64, 8.0);
        let s = Spectral::new(g);
        // |ξ| = 2² exactly: mode m with 2π m / 8 = 4 is not an integer, so use
        // the closest lattice mode that sits well inside band 2.
        let m = (4.0 / g.dk()).round();
        let f = ScalarField2D::from_fn(&g, |x1, _| Complex64::from_polar(1.0, m * g.dk() * x1));
        let r: f64 = m * g.dk();
        let k = r.log2().round() as i32;
        for kp in s.bands.bands() {
            let p = s.lp_project(&f, kp).unwrap();
            if (kp - k).abs() >= 2 {
                assert!(p.max_abs() < 1e-13, "band {kp}");
            }
            assert!(p.l2_norm(&g) <= f.l2_norm(&g) * (1.0 + 1e-14));
        }
        assert!(matches!(s.lp_project(&f, 40), Err(Error::BandOutOfRange { .. })));
    }

    #[test]
    fn lp_almost_orthogonality() {
        let g = grid(64, 8.0);
        let s = Spectral::new(g);
        let f = band_limited(&s, 30, 5);
        let bands: Vec<_> = s.bands.bands().map(|k| s.lp_project(&f, k).unwrap()).collect();
        for a in 0..bands.len() {
            for b in (a + 2)..bands.len() {
                let ip: Complex64 = bands[a]
                    .data
                    .iter()
                    .zip(&bands[b].data)
                    .map(|(x, y)| x.conj() * y)
                    .sum();
                assert!(ip.norm() < 1e-9, "{a} {b} {}", ip.norm());
            }
        }
    }

    #[test]
    fn heat_propagator_laws() {
        let g = grid(32, 6.0);
        let s = Spectral::new(g);
        let f = band_limited(&s, 8, 3);
        assert!(max_diff(&s.heat_propagator(&f, 0.0).unwrap(), &f) < 1e-14);
        let kap = g.dk();
        let mode = ScalarField2D::from_fn(&g, |x1, _| Complex64::from_polar(1.0, kap * x1));
        let out = s.heat_propagator(&mode, 1.0).unwrap();
        assert!(max_diff(&out, &mode.scale(Complex64::new((-kap * kap).exp(), 0.0))) < 1e-14);
        let two = s.heat_propagator(&s.heat_propagator(&f, 0.3).unwrap(), 0.7).unwrap();
        let one = s.heat_propagator(&f, 1.0).unwrap();
        assert!(max_diff(&two, &one) < 1e-13);
        assert!(one.l2_norm(&g) <= f.l2_norm(&g));
        assert!(matches!(s.heat_propagator(&f, -1.0), Err(Error::NegativeTime(_))));
    }

    #[test]
    fn schrodinger_propagator_laws() {
        let g = grid(32, 6.0);
        let s = Spectral::new(g);
        let f = band_limited(&s, 8, 4);
        assert!(max_diff(&s.schrodinger_propagator(&f, 0.0), &f) < 1e-14);
        let u = s.schrodinger_propagator(&f, 0.37);
        assert!((u.l2_norm(&g) - f.l2_norm(&g)).abs() < 1e-13 * f.l2_norm(&g));
        let kap = 3.0 * g.dk();
        let mode = ScalarField2D::from_fn(&g, |_, x2| Complex64::from_polar(1.0, kap * x2));
        let t = 0.2;
        let out = s.schrodinger_propagator(&mode, t);
        let want = mode.scale(Complex64::from_polar(1.0, -t * kap * kap));
        assert!(max_diff(&out, &want) < 1e-13);
    }

    #[test]
    fn galilean_identity_and_phase() {
        let g = grid(32, 2.0 * PI);
        let s = Spectral::new(g);
        let f = band_limited(&s, 5, 9);
        let times = [0.0, 0.1];
        let id = s
            .galilean_transform(&times, &[f.clone(), f.clone()], (0.0, 0.0), BoostMode::Strict)
            .unwrap();
        assert!(max_diff(&id[1], &f) < 1e-13);
        let w = (2.0, -4.0);
        let at0 = s
            .galilean_transform(&[0.0], std::slice::from_ref(&f), w, BoostMode::Strict)
            .unwrap();
        for idx in 0..g.len() {
            let (x1, x2) = g.coords(idx);
            let want = f.data[idx] * Complex64::from_polar(1.0, -(x1 * w.0 + x2 * w.1) / 2.0);
            assert!((at0[0].data[idx] - want).norm() < 1e-14);
        }
        assert!(matches!(
            s.galilean_transform(&[0.0], &[f], (0.3, 0.0), BoostMode::Strict),
            Err(Error::IncompatibleBoost(..))
        ));
    }

    #[test]
    fn galilean_covariance_of_free_flow() {
        let g = grid(32, 2.0 * PI);
        let s = Spectral::new(g);
        let f = band_limited(&s, 5, 10);
        let w = (2.0, 2.0);
        let times: Vec<f64> = (0..5).map(|i| 0.05 * i as f64).collect();
        let free: Vec<_> = times.iter().map(|&t| s.schrodinger_propagator(&f, t)).collect();
        let boosted = s.galilean_transform(&times, &free, w, BoostMode::Strict).unwrap();
        let f0 = s
            .galilean_transform(&[0.0], &[f], w, BoostMode::Strict)
            .unwrap()
            .remove(0);
        for (t, b) in times.iter().zip(&boosted) {
            let want = s.schrodinger_propagator(&f0, *t);
            assert!(max_diff(b, &want) < 1e-11, "t={t}: {}", max_diff(b, &want));
        }
    }

    #[test]
    fn rotation_lattice_cases() {
        let g = grid(32, 4.0);
        let s = Spectral::new(g);
        let f = band_limited(&s, 10, 12);
        assert!(max_diff(&s.rotate_resample(&f, 0.0), &f) < 1e-15);
        let r = s.rotate_resample(&f, PI / 2.0);
        let n = 32i64;
        for j in 0..n {
            for i in 0..n {
                // g(x) = f(R x) with R x = (−x₂, x₁) about the centre.
                let si = (16 - (j - 16)).rem_euclid(n);
                let sj = (16 + (i - 16)).rem_euclid(n);
                assert_eq!(r.data[(j * n + i) as usize], f.data[(sj * n + si) as usize]);
            }
        }
        let full = s.rotate_resample(&f, 2.0 * PI);
        assert!(max_diff(&full, &f) < 1e-15);
    }

    #[test]
    fn rotation_round_trip() {
        let g = grid(64, 16.0);
        let s = Spectral::new(g);
        let f = gaussian(&g, 1.0);
        for &th in &[0.3, 1.1, -2.0, 2.9] {
            let back = s.rotate_resample(&s.rotate_resample(&f, th), -th);
            assert!(max_diff(&back, &f) < 1e-10, "θ={th}: {}", max_diff(&back, &f));
        }
    }

    #[test]
    fn rotation_matches_analytic_function() {
        let g = grid(64, 16.0);
        let s = Spectral::new(g);
        let w = 1.0;
        let f = ScalarField2D::from_fn(&g, |x1, x2| {
            let (a, b) = (x1 - 8.0, x2 - 8.0);
            Complex64::new((-(a * a + 2.0 * b * b) / (2.0 * w * w)).exp(), 0.0)
        });
        let th = 0.5f64;
        let r = s.rotate_resample(&f, th);
        let want = ScalarField2D::from_fn(&g, |x1, x2| {
            let (a, b) = (x1 - 8.0, x2 - 8.0);
            let (ra, rb) = (th.cos() * a - th.sin() * b, th.sin() * a + th.cos() * b);
            Complex64::new((-(ra * ra + 2.0 * rb * rb) / (2.0 * w * w)).exp(), 0.0)
        });
        assert!(max_diff(&r, &want) < 1e-9, "{}", max_diff(&r, &want));
    }

    #[test]
    fn axis1_band_filter_partition() {
        let g = grid(64, 8.0);
        let s = Spectral::new(g);
        let f = band_limited(&s, 20, 13);
        let mut sum = ScalarField2D::zeros(64);
        for j in s.bands.bands() {
            sum = sum.add(&s.lp_project_axis1(&f, j).unwrap());
        }
        // Remaining piece is the ξ₁ = 0 column: the row means.
        let mut rowmean = ScalarField2D::zeros(64);
        for r in 0..64 {
            let m: Complex64 = f.data[r * 64..(r + 1) * 64].iter().sum::<Complex64>() / 64.0;
            for i in 0..64 {
                rowmean.data[r * 64 + i] = m;
            }
        }
        assert!(max_diff(&sum.add(&rowmean), &f) < 1e-12);
    }

    #[test]
    fn smoothstep_endpoints() {
        assert_eq!(smoothstep3(0.0), 0.0);
        assert_eq!(smoothstep3(1.0), 1.0);
        assert!((smoothstep3(0.5) - 0.5).abs() < 1e-15);
    }
}
