//! Caloric gauge: frames transported back along the heat flow from `s_max`,
//! gauge fields `ψ_α = e^*∂_αφ`, connection `A_α = ⟨∂_α e₁, e₂⟩_μ`, and the
//! defects of the gauge-level identities.
//!
//! Index convention for `[_; 4]` arrays: `S`, `T`, `X1`, `X2`.

use std::collections::BTreeMap;

use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolve_heat::{run_heat, tension, HeatScheme, HeatTrajectory, SGrid};
use crate::manifold::{project_to_target, tangent_project, MapField, Point3, TargetManifold, Vec3};
use crate::spectral::{GridSpec, ScalarField2D, Spectral};

pub const FRAME_TOL: f64 = 1e-10;
pub const DRIFT_LIMIT: f64 = 1e-3;

pub const S: usize = 0;
pub const T: usize = 1;
pub const X1: usize = 2;
pub const X2: usize = 3;

type C = Complex64;
const I: C = C { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub e1: Vec<Vec3>,
    pub e2: Vec<Vec3>,
}

impl Frame {
    /// Worst violation of orthonormality, tangency and orientation.
    pub fn max_defect(&self, phi: &[Point3], target: TargetManifold) -> f64 {
        let mut worst: f64 = 0.0;
        for ((a, b), p) in self.e1.iter().zip(&self.e2).zip(phi) {
            let x = target.cross(p, a);
            worst = worst
                .max((target.dot(a, a) - 1.0).abs())
                .max((target.dot(b, b) - 1.0).abs())
                .max(target.dot(a, b).abs())
                .max(target.dot(a, p).abs())
                .max(target.dot(b, p).abs())
                .max((0..3).map(|k| (x[k] - b[k]).abs()).fold(0.0, f64::max));
        }
        worst
    }
}

/// Orthonormal frame of `T_Q M`: first canonical axis whose tangential
/// projection has μ-norm² ≥ ½, normalized; then `e₂ = Q ×_μ e₁`.
pub fn frame_at_infinity(q: &Point3, target: TargetManifold) -> (Vec3, Vec3) {
    let mut e1 = [0.0; 3];
    for axis in 0..3 {
        let mut v = [0.0; 3];
        v[axis] = 1.0;
        let t = tangent_project(q, &v, target);
        let n2 = target.dot(&t, &t);
        if n2 >= 0.5 {
            let n = n2.sqrt();
            e1 = [t[0] / n, t[1] / n, t[2] / n];
            break;
        }
    }
    let e2 = target.cross(q, &e1);
    (e1, e2)
}

fn orthonormalize(p: &Point3, e1: &Vec3, target: TargetManifold) -> (Vec3, Vec3) {
    let t = tangent_project(p, e1, target);
    let n = target.dot(&t, &t).sqrt();
    let a = [t[0] / n, t[1] / n, t[2] / n];
    (a, target.cross(p, &a))
}

/// Parallel-transport generator `−μ⟨e, τ⟩_μ φ`.
#[inline]
pub fn transport_generator(e: &Vec3, p: &Point3, tau: &Vec3, target: TargetManifold) -> Vec3 {
    let c = -target.mu() * target.dot(e, tau);
    [c * p[0], c * p[1], c * p[2]]
}

#[derive(Debug, Clone)]
pub struct TransportResult {
    pub frames: Vec<Frame>,
    /// Largest re-orthonormalization correction over all slices.
    pub max_correction: f64,
}

/// Transports `end` backward from the last node to the first, solving
/// `∂_s e = −μ⟨e, ∂_sφ⟩_μ φ` with RK4 per sample. Midpoint values of φ and
/// ∂_sφ come from the cubic Hermite interpolant through (φ, τ) at the nodes.
pub fn transport_backward(
    s: &[f64],
    phi: &[Vec<Point3>],
    tau: &[Vec<Vec3>],
    target: TargetManifold,
    end: Frame,
) -> Result<TransportResult> {
    let m = s.len();
    let npts = end.e1.len();
    let mut frames = vec![
        Frame {
            e1: Vec::new(),
            e2: Vec::new()
        };
        m
    ];
    frames[m - 1] = end;
    let mut max_correction: f64 = 0.0;
    for idx in (1..m).rev() {
        let big_h = s[idx] - s[idx - 1];
        let h = -big_h;
        let mut e1n = Vec::with_capacity(npts);
        let mut e2n = Vec::with_capacity(npts);
        let mut worst: f64 = 0.0;
        for x in 0..npts {
            let (p1, p0) = (&phi[idx][x], &phi[idx - 1][x]);
            let (m1, m0) = (&tau[idx][x], &tau[idx - 1][x]);
            let mut pm = [0.0; 3];
            let mut dm = [0.0; 3];
            for k in 0..3 {
                pm[k] = 0.5 * (p0[k] + p1[k]) + big_h * (m0[k] - m1[k]) / 8.0;
                dm[k] = 1.5 * (p1[k] - p0[k]) / big_h - 0.25 * (m0[k] + m1[k]);
            }
            let pm = project_to_target(&pm, target).unwrap_or(pm);
            let tm = tangent_project(&pm, &dm, target);
            let step = |e: &Vec3| -> Vec3 {
                let g = |pp: &Point3, tt: &Vec3, v: &Vec3| transport_generator(v, pp, tt, target);
                let k1 = g(p1, m1, e);
                let y2 = add(e, &scale(&k1, h / 2.0));
                let k2 = g(&pm, &tm, &y2);
                let y3 = add(e, &scale(&k2, h / 2.0));
                let k3 = g(&pm, &tm, &y3);
                let y4 = add(e, &scale(&k3, h));
                let k4 = g(p0, m0, &y4);
                let mut out = *e;
                for k in 0..3 {
                    out[k] += h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
                }
                out
            };
            let a = step(&frames[idx].e1[x]);
            let b = step(&frames[idx].e2[x]);
            let (ga, gb) = orthonormalize(p0, &a, target);
            for k in 0..3 {
                worst = worst.max((ga[k] - a[k]).abs()).max((gb[k] - b[k]).abs());
            }
            e1n.push(ga);
            e2n.push(gb);
        }
        if worst > DRIFT_LIMIT || !worst.is_finite() {
            return Err(Error::FrameDrift {
                slice: idx - 1,
                drift: worst,
            });
        }
        max_correction = max_correction.max(worst);
        frames[idx - 1] = Frame { e1: e1n, e2: e2n };
    }
    Ok(TransportResult { frames, max_correction })
}

fn add(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(a: &Vec3, c: f64) -> Vec3 {
    [a[0] * c, a[1] * c, a[2] * c]
}

fn to_vec3(c: &[Vec<f64>; 3]) -> Vec<Vec3> {
    (0..c[0].len()).map(|i| [c[0][i], c[1][i], c[2][i]]).collect()
}

/// Heat flow of one SM time slice with its tension fields and caloric frames.
#[derive(Debug, Clone)]
pub struct CaloricSlice {
    pub t: f64,
    pub heat: HeatTrajectory,
    pub tau: Vec<Vec<Vec3>>,
    pub frames: Vec<Frame>,
    pub max_correction: f64,
}

impl CaloricSlice {
    pub fn build(phi: &MapField, t: f64, sgrid: &SGrid, scheme: HeatScheme, spec: &Spectral) -> Result<Self> {
        let heat = run_heat(phi, sgrid, scheme, spec)?;
        Self::from_heat(heat, t, spec)
    }

    pub fn from_heat(heat: HeatTrajectory, t: f64, spec: &Spectral) -> Result<Self> {
        if heat.limit_point.is_none() {
            let last = heat.slices.last().expect("non-empty heat trajectory");
            let osc = last
                .projected_mean()
                .map(|q| last.max_distance_from(&q))
                .unwrap_or(f64::INFINITY);
            return Err(Error::NotTrivialized(osc));
        }
        let target = heat.slices[0].target;
        let tau: Vec<Vec<Vec3>> = heat.slices.iter().map(|p| to_vec3(&tension(p, spec))).collect();
        let last = heat.slices.last().unwrap();
        let (e1, e2): (Vec<_>, Vec<_>) = last.values.iter().map(|q| frame_at_infinity(q, target)).unzip();
        let phis: Vec<Vec<Point3>> = heat.slices.iter().map(|p| p.values.clone()).collect();
        let tr = transport_backward(&heat.s_grid, &phis, &tau, target, Frame { e1, e2 })?;
        Ok(CaloricSlice {
            t,
            heat,
            tau,
            frames: tr.frames,
            max_correction: tr.max_correction,
        })
    }

    pub fn target(&self) -> TargetManifold {
        self.heat.slices[0].target
    }

    pub fn max_frame_defect(&self) -> f64 {
        let target = self.target();
        self.frames
            .iter()
            .zip(&self.heat.slices)
            .map(|(f, p)| f.max_defect(&p.values, target))
            .fold(0.0, f64::max)
    }
}

/// Three t-slices with second-order difference weights for `∂_t`.
pub struct TimeStencil<'a> {
    pub slices: [&'a CaloricSlice; 3],
    pub weights: [f64; 3],
    pub center: usize,
}

impl<'a> TimeStencil<'a> {
    pub fn centered(prev: &'a CaloricSlice, cur: &'a CaloricSlice, next: &'a CaloricSlice, dt: f64) -> Self {
        let w = 0.5 / dt;
        TimeStencil {
            slices: [prev, cur, next],
            weights: [-w, 0.0, w],
            center: 1,
        }
    }

    /// One-sided second-order stencil at the first slice.
    pub fn forward(cur: &'a CaloricSlice, n1: &'a CaloricSlice, n2: &'a CaloricSlice, dt: f64) -> Self {
        let w = 0.5 / dt;
        TimeStencil {
            slices: [cur, n1, n2],
            weights: [-3.0 * w, 4.0 * w, -w],
            center: 0,
        }
    }

    /// One-sided second-order stencil at the last slice.
    pub fn backward(n2: &'a CaloricSlice, n1: &'a CaloricSlice, cur: &'a CaloricSlice, dt: f64) -> Self {
        let w = 0.5 / dt;
        TimeStencil {
            slices: [n2, n1, cur],
            weights: [w, -4.0 * w, 3.0 * w],
            center: 2,
        }
    }

    /// Picks the stencil for slice `n` of `slices` (all with uniform spacing `dt`).
    pub fn around(slices: &'a [CaloricSlice], n: usize, dt: f64) -> Result<Self> {
        let len = slices.len();
        if len < 3 || n >= len {
            return Err(Error::MissingSlices(format!(
                "time derivative at slice {n} needs three t-slices, have {len}"
            )));
        }
        Ok(if n == 0 {
            Self::forward(&slices[0], &slices[1], &slices[2], dt)
        } else if n == len - 1 {
            Self::backward(&slices[n - 2], &slices[n - 1], &slices[n], dt)
        } else {
            Self::centered(&slices[n - 1], &slices[n], &slices[n + 1], dt)
        })
    }
}

/// Gauge fields and their s/t derivatives at one (s, t) sample.
#[derive(Debug, Clone)]
pub struct GaugeJet {
    /// ψ_α for α ∈ {S, T, X1, X2}.
    pub psi: [ScalarField2D; 4],
    /// A_α for α ∈ {S, T, X1, X2}.
    pub a: [Vec<f64>; 4],
    /// ∂_s ψ_α for α ∈ {T, X1, X2}.
    pub dpsi_ds: [ScalarField2D; 3],
    /// ∂_t ψ_k for k ∈ {X1, X2}.
    pub dpsi_dt: [ScalarField2D; 2],
    /// ∂_s A_α for α ∈ {T, X1, X2}.
    pub da_ds: [Vec<f64>; 3],
    /// ∂_t A_α for α ∈ {S, X1, X2}.
    pub da_dt: [Vec<f64>; 3],
}

#[derive(Debug, Clone)]
pub struct GaugeData {
    pub grid: GridSpec,
    pub target: TargetManifold,
    pub t: f64,
    pub s_grid: Vec<f64>,
    pub jets: Vec<GaugeJet>,
    /// Finite-difference A_s of the transported frames (diagnostic only).
    pub a_s_fd_max: f64,
}

impl GaugeData {
    pub fn max_abs_a_s(&self) -> f64 {
        self.jets
            .iter()
            .flat_map(|j| j.a[S].iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn dot_fields(a: &[Vec3], b: &[Vec3], target: TargetManifold) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| target.dot(x, y)).collect()
}

fn pullback(v: &[Vec3], frame_e1: &[Vec3], frame_e2: &[Vec3], target: TargetManifold, n: usize) -> ScalarField2D {
    ScalarField2D {
        n,
        data: v
            .iter()
            .zip(frame_e1.iter().zip(frame_e2))
            .map(|(x, (a, b))| C::new(target.dot(x, a), target.dot(x, b)))
            .collect(),
    }
}

/// Spatial gradients of several vector fields in one batch.
fn grad_vec3(spec: &Spectral, fields: &[&[Vec3]]) -> Vec<(Vec<Vec3>, Vec<Vec3>)> {
    let comps: Vec<Vec<f64>> = fields
        .iter()
        .flat_map(|f| (0..3).map(move |k| f.iter().map(|v| v[k]).collect::<Vec<f64>>()))
        .collect();
    let refs: Vec<&[f64]> = comps.iter().map(|c| c.as_slice()).collect();
    let specs = spec.real_spectra(&refs);
    let mut outs = Vec::with_capacity(2 * specs.len());
    for s in &specs {
        outs.push(spec.d1_spec(s));
        outs.push(spec.d2_spec(s));
    }
    let phys = spec.real_inverse(outs);
    fields
        .iter()
        .enumerate()
        .map(|(f, _)| {
            let pick = |dir: usize| -> Vec<Vec3> {
                let base = 6 * f + dir;
                (0..phys[base].len())
                    .map(|i| [phys[base][i], phys[base + 2][i], phys[base + 4][i]])
                    .collect()
            };
            (pick(0), pick(1))
        })
        .collect()
}

/// Per-slice quantities at one s node.
struct Local {
    phi: Vec<Point3>,
    tau: Vec<Vec3>,
    e1: Vec<Vec3>,
    e2: Vec<Vec3>,
    gen1: Vec<Vec3>,
    gen2: Vec<Vec3>,
    psi: [ScalarField2D; 2],
    a: [Vec<f64>; 2],
    a_s: Vec<f64>,
    dphi: [Vec<Vec3>; 2],
    de1: [Vec<Vec3>; 2],
}

fn local(slice: &CaloricSlice, i: usize, spec: &Spectral) -> Local {
    let target = slice.target();
    let n = spec.n();
    let phi = slice.heat.slices[i].values.clone();
    let tau = slice.tau[i].clone();
    let fr = &slice.frames[i];
    let gen = |e: &[Vec3]| -> Vec<Vec3> {
        e.iter()
            .zip(phi.iter().zip(&tau))
            .map(|(v, (p, t))| transport_generator(v, p, t, target))
            .collect()
    };
    let gen1 = gen(&fr.e1);
    let gen2 = gen(&fr.e2);
    let mut g = grad_vec3(spec, &[&phi, &fr.e1]).into_iter();
    let (p1, p2) = g.next().unwrap();
    let (f1, f2) = g.next().unwrap();
    let psi = [
        pullback(&p1, &fr.e1, &fr.e2, target, n),
        pullback(&p2, &fr.e1, &fr.e2, target, n),
    ];
    let a = [dot_fields(&f1, &fr.e2, target), dot_fields(&f2, &fr.e2, target)];
    let a_s = dot_fields(&gen1, &fr.e2, target);
    Local {
        phi,
        tau,
        e1: fr.e1.clone(),
        e2: fr.e2.clone(),
        gen1,
        gen2,
        psi,
        a,
        a_s,
        dphi: [p1, p2],
        de1: [f1, f2],
    }
}

fn combine_vec3(w: &[f64; 3], f: [&[Vec3]; 3]) -> Vec<Vec3> {
    (0..f[0].len())
        .map(|i| {
            let mut v = [0.0; 3];
            for j in 0..3 {
                for k in 0..3 {
                    v[k] += w[j] * f[j][i][k];
                }
            }
            v
        })
        .collect()
}

fn combine_real(w: &[f64; 3], f: [&[f64]; 3]) -> Vec<f64> {
    (0..f[0].len())
        .map(|i| w[0] * f[0][i] + w[1] * f[1][i] + w[2] * f[2][i])
        .collect()
}

fn combine_c(w: &[f64; 3], f: [&ScalarField2D; 3]) -> ScalarField2D {
    ScalarField2D {
        n: f[0].n,
        data: (0..f[0].data.len())
            .map(|i| w[0] * f[0].data[i] + w[1] * f[1].data[i] + w[2] * f[2].data[i])
            .collect(),
    }
}

/// Assembles ψ_α, A_α and their s/t derivatives on every s node of the
/// stencil's centre slice. ∂_t uses the stencil weights; ∂_s uses the heat
/// right-hand side and the transport generator.
pub fn extract_gauge(stencil: &TimeStencil<'_>, spec: &Spectral) -> Result<GaugeData> {
    let cs = stencil.slices[stencil.center];
    let m = cs.heat.s_grid.len();
    if stencil.slices.iter().any(|s| s.heat.s_grid.len() != m) {
        return Err(Error::MissingSlices("t-slices use different s-grids".into()));
    }
    let target = cs.target();
    let n = spec.n();
    let w = stencil.weights;
    let mut jets = Vec::with_capacity(m);
    for i in 0..m {
        let locs: Vec<Local> = stencil.slices.iter().map(|s| local(s, i, spec)).collect();
        let c = &locs[stencil.center];
        let dt_phi = combine_vec3(&w, [&locs[0].phi, &locs[1].phi, &locs[2].phi]);
        let dt_e1 = combine_vec3(&w, [&locs[0].e1, &locs[1].e1, &locs[2].e1]);
        let dt_tau = combine_vec3(&w, [&locs[0].tau, &locs[1].tau, &locs[2].tau]);
        let dt_gen1 = combine_vec3(&w, [&locs[0].gen1, &locs[1].gen1, &locs[2].gen1]);

        let psi_s = pullback(&c.tau, &c.e1, &c.e2, target, n);
        let psi_t = pullback(&dt_phi, &c.e1, &c.e2, target, n);
        let a_t = dot_fields(&dt_e1, &c.e2, target);

        let mut g = grad_vec3(spec, &[&c.tau, &c.gen1]).into_iter();
        let dtau = g.next().unwrap();
        let dgen1 = g.next().unwrap();
        let ds_psi_k = |k: usize| -> ScalarField2D {
            let (dt_k, dp_k) = if k == 0 {
                (&dtau.0, &c.dphi[0])
            } else {
                (&dtau.1, &c.dphi[1])
            };
            ScalarField2D {
                n,
                data: (0..dt_k.len())
                    .map(|x| {
                        C::new(
                            target.dot(&dt_k[x], &c.e1[x]) + target.dot(&dp_k[x], &c.gen1[x]),
                            target.dot(&dt_k[x], &c.e2[x]) + target.dot(&dp_k[x], &c.gen2[x]),
                        )
                    })
                    .collect(),
            }
        };
        let ds_psi_t = ScalarField2D {
            n,
            data: (0..dt_phi.len())
                .map(|x| {
                    C::new(
                        target.dot(&dt_tau[x], &c.e1[x]) + target.dot(&dt_phi[x], &c.gen1[x]),
                        target.dot(&dt_tau[x], &c.e2[x]) + target.dot(&dt_phi[x], &c.gen2[x]),
                    )
                })
                .collect(),
        };
        let ds_a_k = |k: usize| -> Vec<f64> {
            let dg = if k == 0 { &dgen1.0 } else { &dgen1.1 };
            (0..dg.len())
                .map(|x| target.dot(&dg[x], &c.e2[x]) + target.dot(&c.de1[k][x], &c.gen2[x]))
                .collect()
        };
        let ds_a_t: Vec<f64> = (0..dt_gen1.len())
            .map(|x| target.dot(&dt_gen1[x], &c.e2[x]) + target.dot(&dt_e1[x], &c.gen2[x]))
            .collect();

        jets.push(GaugeJet {
            psi: [psi_s, psi_t, c.psi[0].clone(), c.psi[1].clone()],
            a: [c.a_s.clone(), a_t, c.a[0].clone(), c.a[1].clone()],
            dpsi_ds: [ds_psi_t, ds_psi_k(0), ds_psi_k(1)],
            dpsi_dt: [
                combine_c(&w, [&locs[0].psi[0], &locs[1].psi[0], &locs[2].psi[0]]),
                combine_c(&w, [&locs[0].psi[1], &locs[1].psi[1], &locs[2].psi[1]]),
            ],
            da_ds: [ds_a_t, ds_a_k(0), ds_a_k(1)],
            da_dt: [
                combine_real(&w, [&locs[0].a_s, &locs[1].a_s, &locs[2].a_s]),
                combine_real(&w, [&locs[0].a[0], &locs[1].a[0], &locs[2].a[0]]),
                combine_real(&w, [&locs[0].a[1], &locs[1].a[1], &locs[2].a[1]]),
            ],
        });
    }
    Ok(GaugeData {
        grid: spec.grid,
        target,
        t: cs.t,
        s_grid: cs.heat.s_grid.clone(),
        jets,
        a_s_fd_max: a_s_finite_difference(cs),
    })
}

/// `⟨∂_s e₁, e₂⟩_μ` with second-order differences of the stored frames.
fn a_s_finite_difference(cs: &CaloricSlice) -> f64 {
    let target = cs.target();
    let s = &cs.heat.s_grid;
    let mut worst: f64 = 0.0;
    for i in 1..s.len().saturating_sub(1) {
        let w = crate::evolve_heat::centered_weights(s[i] - s[i - 1], s[i + 1] - s[i]);
        let d = combine_vec3(&w, [&cs.frames[i - 1].e1, &cs.frames[i].e1, &cs.frames[i + 1].e1]);
        for (v, e2) in d.iter().zip(&cs.frames[i].e2) {
            worst = worst.max(target.dot(v, e2).abs());
        }
    }
    worst
}

/// Gauge rotation `ψ ↦ e^{−iθ}ψ`, `A ↦ A + dθ` for an s-independent θ(t, x),
/// given θ and ∂_tθ at the slice time.
pub fn gauge_rotate(gd: &GaugeData, theta: &[f64], theta_t: &[f64], spec: &Spectral) -> GaugeData {
    let n = spec.n();
    let specs = spec.real_spectra(&[theta, theta_t]);
    let mut d = spec
        .real_inverse(vec![
            spec.d1_spec(&specs[0]),
            spec.d2_spec(&specs[0]),
            spec.d1_spec(&specs[1]),
            spec.d2_spec(&specs[1]),
        ])
        .into_iter();
    let (th1, th2, tt1, tt2) = (
        d.next().unwrap(),
        d.next().unwrap(),
        d.next().unwrap(),
        d.next().unwrap(),
    );
    let phase: Vec<C> = theta.iter().map(|&t| C::from_polar(1.0, -t)).collect();
    let rot = |f: &ScalarField2D| ScalarField2D {
        n,
        data: f.data.iter().zip(&phase).map(|(z, p)| z * p).collect(),
    };
    let plus = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + y).collect() };
    let jets = gd
        .jets
        .iter()
        .map(|j| {
            let dt_rot = |k: usize| ScalarField2D {
                n,
                data: (0..phase.len())
                    .map(|x| phase[x] * (j.dpsi_dt[k].data[x] - I * theta_t[x] * j.psi[X1 + k].data[x]))
                    .collect(),
            };
            GaugeJet {
                psi: [rot(&j.psi[S]), rot(&j.psi[T]), rot(&j.psi[X1]), rot(&j.psi[X2])],
                a: [
                    j.a[S].clone(),
                    plus(&j.a[T], theta_t),
                    plus(&j.a[X1], &th1),
                    plus(&j.a[X2], &th2),
                ],
                dpsi_ds: [rot(&j.dpsi_ds[0]), rot(&j.dpsi_ds[1]), rot(&j.dpsi_ds[2])],
                dpsi_dt: [dt_rot(0), dt_rot(1)],
                da_ds: j.da_ds.clone(),
                da_dt: [j.da_dt[0].clone(), plus(&j.da_dt[1], &tt1), plus(&j.da_dt[2], &tt2)],
            }
        })
        .collect();
    GaugeData { jets, ..gd.clone() }
}

// ---- residual machinery -------------------------------------------------

fn l2(v: &[C], area: f64) -> f64 {
    (v.iter().map(|z| z.norm_sqr()).sum::<f64>() * area).sqrt()
}

/// `‖Σ terms‖ / max ‖term‖`, zero when every term vanishes.
fn normalized(terms: &[&[C]], area: f64) -> f64 {
    let n = terms[0].len();
    let defect: Vec<C> = (0..n).map(|i| terms.iter().map(|t| t[i]).sum()).collect();
    let scale = terms.iter().map(|t| l2(t, area)).fold(0.0, f64::max);
    if scale == 0.0 {
        0.0
    } else {
        l2(&defect, area) / scale
    }
}

fn real_c(v: &[f64]) -> Vec<C> {
    v.iter().map(|&x| C::new(x, 0.0)).collect()
}

fn neg(v: &[C]) -> Vec<C> {
    v.iter().map(|z| -z).collect()
}

/// Spatial derivative helpers evaluated once per jet.
struct Spatial {
    dpsi: [[Vec<C>; 2]; 4],
    da: [[Vec<f64>; 2]; 4],
}

fn spatial(j: &GaugeJet, spec: &Spectral) -> Spatial {
    let cg = |f: &ScalarField2D| {
        let (a, b) = spec.gradient(f);
        [a.data, b.data]
    };
    let rs = spec.real_spectra(&[&j.a[S], &j.a[T], &j.a[X1], &j.a[X2]]);
    let mut outs = Vec::with_capacity(8);
    for s in &rs {
        outs.push(spec.d1_spec(s));
        outs.push(spec.d2_spec(s));
    }
    let mut it = spec.real_inverse(outs).into_iter();
    let mut pair = || [it.next().unwrap(), it.next().unwrap()];
    let da = [pair(), pair(), pair(), pair()];
    Spatial {
        dpsi: [cg(&j.psi[S]), cg(&j.psi[T]), cg(&j.psi[X1]), cg(&j.psi[X2])],
        da,
    }
}

/// ∂_α A_β with α ∈ {S, T, X1, X2}; `None` where no jet is stored.
fn d_a(j: &GaugeJet, sp: &Spatial, alpha: usize, beta: usize) -> Option<Vec<f64>> {
    match alpha {
        X1 | X2 => Some(sp.da[beta][alpha - X1].clone()),
        S => match beta {
            T => Some(j.da_ds[0].clone()),
            X1 | X2 => Some(j.da_ds[beta - 1].clone()),
            _ => None,
        },
        T => match beta {
            S => Some(j.da_dt[0].clone()),
            X1 | X2 => Some(j.da_dt[beta - 1].clone()),
            _ => None,
        },
        _ => None,
    }
}

/// `F_{αβ} = ∂_α A_β − ∂_β A_α` at s-node `i`.
pub fn curvature(gd: &GaugeData, i: usize, alpha: usize, beta: usize, spec: &Spectral) -> Result<Vec<f64>> {
    let j = gd
        .jets
        .get(i)
        .ok_or_else(|| Error::MissingSlices(format!("no s-node {i}")))?;
    curvature_jet(j, &spatial(j, spec), alpha, beta)
}

fn curvature_jet(j: &GaugeJet, sp: &Spatial, alpha: usize, beta: usize) -> Result<Vec<f64>> {
    if alpha == beta {
        return Ok(vec![0.0; j.a[S].len()]);
    }
    let ab = d_a(j, sp, alpha, beta);
    let ba = d_a(j, sp, beta, alpha);
    match (ab, ba) {
        (Some(x), Some(y)) => Ok(x.iter().zip(&y).map(|(p, q)| p - q).collect()),
        _ => Err(Error::MissingSlices(format!(
            "no derivative data for F({alpha},{beta})"
        ))),
    }
}

/// `D_k f = ∂_k f + i A_k f` given ∂_k f.
fn cov(df: &[C], a: &[f64], f: &[C]) -> Vec<C> {
    df.iter()
        .zip(a.iter().zip(f))
        .map(|(d, (ak, z))| d + I * ak * z)
        .collect()
}

/// `Σ_j D_j D_j f`.
fn cov_laplacian(f: &ScalarField2D, a1: &[f64], a2: &[f64], spec: &Spectral) -> Vec<C> {
    let (g1, g2) = spec.gradient(f);
    let d1 = ScalarField2D {
        n: f.n,
        data: cov(&g1.data, a1, &f.data),
    };
    let d2 = ScalarField2D {
        n: f.n,
        data: cov(&g2.data, a2, &f.data),
    };
    let (h1, _) = spec.gradient(&d1);
    let (_, h2) = spec.gradient(&d2);
    let x = cov(&h1.data, a1, &d1.data);
    let y = cov(&h2.data, a2, &d2.data);
    x.iter().zip(&y).map(|(p, q)| p + q).collect()
}

fn im_conj(a: &[C], b: &[C]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (x.conj() * y).im).collect()
}

fn re_conj(a: &[C], b: &[C]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (x.conj() * y).re).collect()
}

fn scale_r(v: &[f64], c: f64) -> Vec<C> {
    v.iter().map(|&x| C::new(c * x, 0.0)).collect()
}

/// Named normalized residuals at one (s, t) sample.
pub type ResidualMap = BTreeMap<String, f64>;

/// Normalized defects of the gauge identities at s-node `i`. The s = 0
/// identities (SM-level) are included only when `i == 0`.
pub fn gauge_residuals(gd: &GaugeData, i: usize, spec: &Spectral) -> Result<ResidualMap> {
    let j = gd
        .jets
        .get(i)
        .ok_or_else(|| Error::MissingSlices(format!("no s-node {i}")))?;
    let sp = spatial(j, spec);
    let area = gd.grid.cell_area();
    let mu = gd.target.mu();
    let mut out = ResidualMap::new();
    let psi = |a: usize| &j.psi[a].data;

    let names = ["s", "t", "1", "2"];
    for a in 0..4 {
        for b in (a + 1)..4 {
            let f = real_c(&curvature_jet(j, &sp, a, b)?);
            let rhs = scale_r(&im_conj(psi(b), psi(a)), -mu);
            out.insert(
                format!("curvature_{}{}", names[a], names[b]),
                normalized(&[&f, &rhs], area),
            );
        }
    }

    let d = |k: usize, a: usize| cov(&sp.dpsi[a][k], &j.a[X1 + k], psi(a));
    let d1psi2 = d(0, X2);
    let d2psi1 = d(1, X1);
    out.insert("compat_12".into(), normalized(&[&d1psi2, &neg(&d2psi1)], area));

    let d1psi1 = d(0, X1);
    let d2psi2 = d(1, X2);
    let div: Vec<C> = d1psi1.iter().zip(&d2psi2).map(|(a, b)| a + b).collect();

    out.insert("hf_freeze".into(), normalized(&[psi(S), &neg(&div)], area));
    for (k, name) in [(X1, "hf_fs1"), (X2, "hf_fs2")] {
        let f = real_c(&curvature_jet(j, &sp, S, k)?);
        let rhs = scale_r(&im_conj(psi(k), &div), -mu);
        out.insert(name.into(), normalized(&[&f, &rhs], area));
    }

    let f12 = curvature_jet(j, &sp, X1, X2)?;
    let f12c = real_c(&f12);
    let f12rhs = scale_r(&im_conj(psi(X2), psi(X1)), -mu);
    out.insert("f12".into(), normalized(&[&f12c, &f12rhs], area));

    // D_s ψ_k = D_j D_j ψ_k − i F_{jk} ψ_j
    let lap = [
        cov_laplacian(&j.psi[X1], &j.a[X1], &j.a[X2], spec),
        cov_laplacian(&j.psi[X2], &j.a[X1], &j.a[X2], spec),
    ];
    let mut hf_evo: f64 = 0.0;
    for k in 0..2 {
        let ds: Vec<C> = cov(&j.dpsi_ds[1 + k].data, &j.a[S], psi(X1 + k));
        // Σ_j F_{jk} ψ_j; F_{kk} = 0, F_{21} = −F_{12}.
        let other = 1 - k;
        let sign = if k == 1 { 1.0 } else { -1.0 };
        let fpsi: Vec<C> = (0..ds.len()).map(|x| sign * f12[x] * psi(X1 + other)[x]).collect();
        let term: Vec<C> = fpsi.iter().map(|z| I * z).collect();
        hf_evo = hf_evo.max(normalized(&[&ds, &neg(&lap[k]), &term], area));
    }
    out.insert("hf_evolution".into(), hf_evo);

    if i == 0 {
        out.insert(
            "sm_freeze".into(),
            normalized(&[psi(T), &div.iter().map(|z| -I * z).collect::<Vec<_>>()], area),
        );
        for (k, name) in [(X1, "sm_f01"), (X2, "sm_f02")] {
            let f = real_c(&curvature_jet(j, &sp, T, k)?);
            let rhs = scale_r(&re_conj(psi(k), &div), -mu);
            out.insert(name.into(), normalized(&[&f, &rhs], area));
        }
        // D_t ψ_k = i D_j D_j ψ_k + F_{jk} ψ_j
        let mut sm_evo: f64 = 0.0;
        for k in 0..2 {
            let dtk = cov(&j.dpsi_dt[k].data, &j.a[T], psi(X1 + k));
            let other = 1 - k;
            let sign = if k == 1 { 1.0 } else { -1.0 };
            let fpsi: Vec<C> = (0..dtk.len()).map(|x| sign * f12[x] * psi(X1 + other)[x]).collect();
            let ilap: Vec<C> = lap[k].iter().map(|z| -I * z).collect();
            sm_evo = sm_evo.max(normalized(&[&dtk, &ilap, &neg(&fpsi)], area));
        }
        out.insert("sm_evolution".into(), sm_evo);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct NlshResidual {
    /// `(i∂_t + Δ)ψ_m − N_m` at s = 0, worst over m.
    pub schrodinger: f64,
    /// `(∂_s − Δ)ψ_α − U_α` at s-node `i`, worst over α ∈ {t, 1, 2}.
    pub heat: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NlshOptions {
    /// Omits `A_t ψ_m` from `N_m` (ablation control).
    pub drop_a_t: bool,
}

/// Defects of the expanded Schrödinger and heat equations. Each is
/// normalized by the largest of the gauge-covariant terms
/// `D_αψ`, `D_jD_jψ`, `ψ_j Im(ψ̄_jψ)`, which keeps the ratio gauge invariant.
pub fn nlsh_residual(gd: &GaugeData, i: usize, spec: &Spectral, opts: NlshOptions) -> Result<NlshResidual> {
    let j = gd
        .jets
        .get(i)
        .ok_or_else(|| Error::MissingSlices(format!("no s-node {i}")))?;
    let sp = spatial(j, spec);
    let area = gd.grid.cell_area();
    let mu = gd.target.mu();
    let n = j.a[S].len();
    let (a1, a2) = (&j.a[X1], &j.a[X2]);
    let div_a: Vec<f64> = (0..n).map(|x| sp.da[X1][0][x] + sp.da[X2][1][x]).collect();
    let a_sq: Vec<f64> = (0..n).map(|x| a1[x] * a1[x] + a2[x] * a2[x]).collect();

    let quartic = |f: &[C]| -> Vec<C> {
        (0..n)
            .map(|x| {
                let p1 = j.psi[X1].data[x];
                let p2 = j.psi[X2].data[x];
                p1 * (p1.conj() * f[x]).im + p2 * (p2.conj() * f[x]).im
            })
            .collect()
    };
    let residual = |lhs_time: &[C],
                    f: &ScalarField2D,
                    df: &[Vec<C>; 2],
                    cov_time: &[C],
                    schrod: bool,
                    a_t: Option<&[f64]>|
     -> f64 {
        let lap = spec.laplacian(f);
        let q = quartic(&f.data);
        let defect: Vec<C> = (0..n)
            .map(|x| {
                let transport = 2.0 * I * (a1[x] * df[0][x] + a2[x] * df[1][x]) + I * div_a[x] * f.data[x];
                let at = a_t.map_or(0.0, |v| v[x]);
                if schrod {
                    // N_m = −2iA_j∂_jψ − i(∂_jA_j)ψ + (A_t + A²)ψ − iμψ_j Im(ψ̄_jψ)
                    let nm = -transport + (at + a_sq[x]) * f.data[x] - I * mu * q[x];
                    I * lhs_time[x] + lap.data[x] - nm
                } else {
                    // U = 2iA_j∂_jψ + i(∂_jA_j)ψ − A²ψ + iμψ_j Im(ψ̄_jψ)
                    let u = transport - a_sq[x] * f.data[x] + I * mu * q[x];
                    lhs_time[x] - lap.data[x] - u
                }
            })
            .collect();
        let dd = cov_laplacian(f, a1, a2, spec);
        let qm: Vec<C> = q.iter().map(|z| mu * z).collect();
        let scale = [l2(cov_time, area), l2(&dd, area), l2(&qm, area)]
            .into_iter()
            .fold(0.0, f64::max);
        if scale == 0.0 {
            0.0
        } else {
            l2(&defect, area) / scale
        }
    };

    let a_t = if opts.drop_a_t { None } else { Some(j.a[T].as_slice()) };
    let mut schrod: f64 = 0.0;
    if i == 0 {
        for k in 0..2 {
            let dt = &j.dpsi_dt[k].data;
            let cov_t = cov(dt, &j.a[T], &j.psi[X1 + k].data);
            schrod = schrod.max(residual(dt, &j.psi[X1 + k], &sp.dpsi[X1 + k], &cov_t, true, a_t));
        }
    }
    let mut heat: f64 = 0.0;
    for (slot, alpha) in [(0usize, T), (1, X1), (2, X2)] {
        let ds = &j.dpsi_ds[slot].data;
        let cov_s = cov(ds, &j.a[S], &j.psi[alpha].data);
        heat = heat.max(residual(ds, &j.psi[alpha], &sp.dpsi[alpha], &cov_s, false, None));
    }
    Ok(NlshResidual {
        schrodinger: schrod,
        heat,
    })
}

#[derive(Debug, Clone)]
pub struct IntegralA {
    /// Printed form `−∫_s^∞ Im(ψ̄_α ψ_s) ds′`.
    pub plain: Vec<f64>,
    /// μ-weighted form `−μ ∫_s^∞ Im(ψ̄_α ψ_s) ds′`.
    pub mu_weighted: Vec<f64>,
    pub tail: f64,
}

/// Trapezoid quadrature of the transport identity for A_α from node `i`
/// to `s_max`, plus an exponential tail bound from the last two nodes.
pub fn a_from_integral(gd: &GaugeData, alpha: usize, i: usize) -> Result<IntegralA> {
    if !(alpha == T || alpha == X1 || alpha == X2) {
        return Err(Error::Config(format!(
            "a_from_integral needs α ∈ {{t, 1, 2}}, got {alpha}"
        )));
    }
    let m = gd.jets.len();
    if i >= m {
        return Err(Error::MissingSlices(format!("no s-node {i}")));
    }
    let area = gd.grid.cell_area();
    let integrand = |k: usize| im_conj(&gd.jets[k].psi[alpha].data, &gd.jets[k].psi[S].data);
    let npts = gd.grid.len();
    let mut acc = vec![0.0; npts];
    let mut prev = integrand(m - 1);
    for k in (i..m - 1).rev() {
        let cur = integrand(k);
        let h = gd.s_grid[k + 1] - gd.s_grid[k];
        for x in 0..npts {
            acc[x] += 0.5 * h * (cur[x] + prev[x]);
        }
        prev = cur;
    }
    let l2r = |v: &[f64]| (v.iter().map(|z| z * z).sum::<f64>() * area).sqrt();
    let tail = if m >= 2 {
        let (f1, f2) = (l2r(&integrand(m - 2)), l2r(&integrand(m - 1)));
        let h = gd.s_grid[m - 1] - gd.s_grid[m - 2];
        if f2 == 0.0 {
            0.0
        } else if f1 > f2 {
            let rate = (f1 / f2).ln() / h;
            f2 / rate
        } else {
            f64::INFINITY
        }
    } else {
        0.0
    };
    let norm = l2r(&acc);
    if tail > 0.1 * norm && tail > 1e-14 {
        return Err(Error::TailTooLarge { tail, norm });
    }
    let mu = gd.target.mu();
    Ok(IntegralA {
        plain: acc.iter().map(|v| -v).collect(),
        mu_weighted: acc.iter().map(|v| -mu * v).collect(),
        tail,
    })
}

/// L² distance of both integral forms to the frame-derived A_α at node `i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegralComparison {
    pub plain_error: f64,
    pub mu_error: f64,
    pub frame_norm: f64,
    pub tail: f64,
    /// `true` when the μ-weighted form is the closer one.
    pub mu_weighted_adopted: bool,
}

impl IntegralComparison {
    pub fn adopted_error(&self) -> f64 {
        self.plain_error.min(self.mu_error)
    }
}

pub fn compare_a_integral(gd: &GaugeData, alpha: usize, i: usize) -> Result<IntegralComparison> {
    let ia = a_from_integral(gd, alpha, i)?;
    let area = gd.grid.cell_area();
    let frame = &gd.jets[i].a[alpha];
    let dist = |v: &[f64]| (v.iter().zip(frame).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * area).sqrt();
    let plain_error = dist(&ia.plain);
    let mu_error = dist(&ia.mu_weighted);
    Ok(IntegralComparison {
        plain_error,
        mu_error,
        frame_norm: (frame.iter().map(|v| v * v).sum::<f64>() * area).sqrt(),
        tail: ia.tail,
        mu_weighted_adopted: mu_error <= plain_error,
    })
}

/// `‖ψ_x‖²_{L²} = Σ_k ‖ψ_k‖²` at node `i`.
pub fn psi_x_l2_squared(gd: &GaugeData, i: usize) -> f64 {
    let area = gd.grid.cell_area();
    [X1, X2]
        .iter()
        .map(|&k| gd.jets[i].psi[k].data.iter().map(|z| z.norm_sqr()).sum::<f64>())
        .sum::<f64>()
        * area
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve_sm::run_sm;
    use crate::manifold::{energy, exp_map, BASE_POINT};
    use std::f64::consts::PI;

    const SPH: TargetManifold = TargetManifold::SPHERE;
    const HYP: TargetManifold = TargetManifold::HYPERBOLIC;

    fn check_frame(q: &Point3, target: TargetManifold) {
        let (a, b) = frame_at_infinity(q, target);
        let f = Frame {
            e1: vec![a],
            e2: vec![b],
        };
        assert!(f.max_defect(&[*q], target) < 1e-12, "{q:?}");
    }

    #[test]
    fn frame_at_base_point() {
        for t in [SPH, HYP] {
            let (a, b) = frame_at_infinity(&BASE_POINT, t);
            assert_eq!(a, [1.0, 0.0, 0.0]);
            assert_eq!(b, [0.0, 1.0, 0.0]);
        }
    }

    #[test]
    fn frame_generic_points() {
        for q in [[1.0, 0.0, 0.0], [0.6, 0.0, 0.8], [0.3, -0.5, 0.2], [-1.0, 0.0, 0.0]] {
            check_frame(&project_to_target(&q, SPH).unwrap(), SPH);
        }
        for q in [[0.3, 1.0, 3.0], [-2.0, 0.5, 3.0]] {
            check_frame(&project_to_target(&q, HYP).unwrap(), HYP);
        }
    }

    #[test]
    fn holonomy_of_small_loops() {
        // φ(s) circles the pole at colatitude α; holonomy angle equals the enclosed area.
        for &alpha in &[0.1f64, 0.2] {
            let m = 400;
            let s: Vec<f64> = (0..=m).map(|i| 2.0 * PI * i as f64 / m as f64).collect();
            let phi: Vec<Vec<Point3>> = s
                .iter()
                .map(|&t| vec![[alpha.sin() * t.cos(), alpha.sin() * t.sin(), alpha.cos()]])
                .collect();
            let tau: Vec<Vec<Vec3>> = s
                .iter()
                .map(|&t| vec![[-alpha.sin() * t.sin(), alpha.sin() * t.cos(), 0.0]])
                .collect();
            let end = {
                let (a, b) = frame_at_infinity(&phi[m][0], SPH);
                Frame {
                    e1: vec![a],
                    e2: vec![b],
                }
            };
            let tr = transport_backward(&s, &phi, &tau, SPH, end.clone()).unwrap();
            let start = &tr.frames[0];
            let angle = SPH
                .dot(&start.e1[0], &end.e2[0])
                .atan2(SPH.dot(&start.e1[0], &end.e1[0]));
            let area = 2.0 * PI * (1.0 - alpha.cos());
            assert!(
                (angle.abs() - area).abs() < 2.0 * area * area,
                "α={alpha}: angle {angle}, area {area}"
            );
        }
    }

    #[test]
    fn constant_trajectory_keeps_frame() {
        let q = project_to_target(&[0.3, 0.1, 0.9], SPH).unwrap();
        let s = vec![0.0, 0.1, 0.3, 1.0];
        let phi = vec![vec![q; 2]; 4];
        let tau = vec![vec![[0.0; 3]; 2]; 4];
        let (a, b) = frame_at_infinity(&q, SPH);
        let end = Frame {
            e1: vec![a; 2],
            e2: vec![b; 2],
        };
        let tr = transport_backward(&s, &phi, &tau, SPH, end.clone()).unwrap();
        for f in &tr.frames {
            for (a, b) in f.e1.iter().chain(&f.e2).zip(end.e1.iter().chain(&end.e2)) {
                assert!((0..3).all(|k| (a[k] - b[k]).abs() < 1e-15));
            }
        }
    }

    fn bump(g: GridSpec, target: TargetManifold, amp: f64, w: f64) -> MapField {
        let v: Vec<_> = (0..g.len())
            .map(|idx| {
                let (x1, x2) = g.centered_coords(idx);
                let e = amp * (-(x1 * x1 + x2 * x2) / (w * w)).exp();
                exp_map(&BASE_POINT, &[e, e * x1 / w, 0.0], target)
            })
            .collect();
        MapField::new(g, target, v, 1e-11).unwrap()
    }

    struct Setup {
        spec: Spectral,
        slices: Vec<CaloricSlice>,
        dt: f64,
        energy: f64,
    }

    fn setup(target: TargetManifold, n: usize) -> Setup {
        let g = GridSpec::new(n, 8.0).unwrap();
        let spec = Spectral::new(g);
        let phi0 = bump(g, target, 0.3, 0.7);
        let dt = 2e-4;
        let traj = run_sm(&phi0, 2.0 * dt, dt, &spec).unwrap();
        let sg = SGrid::for_spectral(&spec, 64.0, 8).unwrap();
        let slices = traj
            .slices
            .iter()
            .zip(&traj.t_grid)
            .map(|(p, &t)| CaloricSlice::build(p, t, &sg, HeatScheme::Etd2, &spec).unwrap())
            .collect();
        Setup {
            energy: energy(&phi0, &spec),
            spec,
            slices,
            dt,
        }
    }

    #[test]
    fn constant_map_has_trivial_gauge() {
        let g = GridSpec::new(16, 4.0).unwrap();
        let spec = Spectral::new(g);
        let phi = MapField::constant(g, SPH, BASE_POINT);
        let sg = SGrid::new(0.05, 2, 2.0, 1.0).unwrap();
        let sl: Vec<_> = (0..3)
            .map(|n| CaloricSlice::build(&phi, n as f64 * 0.01, &sg, HeatScheme::Etd2, &spec).unwrap())
            .collect();
        let gd = extract_gauge(&TimeStencil::around(&sl, 1, 0.01).unwrap(), &spec).unwrap();
        for j in &gd.jets {
            assert!(j.psi.iter().all(|p| p.max_abs() == 0.0));
            assert!(j.a.iter().all(|a| a.iter().all(|v| *v == 0.0)));
        }
        let r = gauge_residuals(&gd, 0, &spec).unwrap();
        assert!(r.values().all(|v| *v == 0.0));
        assert_eq!(
            nlsh_residual(&gd, 0, &spec, NlshOptions::default()).unwrap(),
            NlshResidual::default()
        );
        let ia = a_from_integral(&gd, X1, 0).unwrap();
        assert!(ia.plain.iter().all(|v| *v == 0.0));
        assert!(matches!(
            TimeStencil::around(&sl[..2], 0, 0.01),
            Err(Error::MissingSlices(_))
        ));
    }

    #[test]
    fn gauge_pipeline_identities() {
        for target in [SPH, HYP] {
            let su = setup(target, 64);
            let spec = &su.spec;
            let cs = &su.slices[1];
            assert!(cs.max_frame_defect() < FRAME_TOL);
            let gd = extract_gauge(&TimeStencil::around(&su.slices, 1, su.dt).unwrap(), spec).unwrap();
            assert!(gd.max_abs_a_s() < 1e-10);

            // Isometry and energy identity.
            let phi = &cs.heat.slices[0];
            let (d1, d2) = spec.gradient_real3(&phi.components());
            for x in 0..phi.values.len() {
                let g = target.dot(&[d1[0][x], d1[1][x], d1[2][x]], &[d1[0][x], d1[1][x], d1[2][x]])
                    + target.dot(&[d2[0][x], d2[1][x], d2[2][x]], &[d2[0][x], d2[1][x], d2[2][x]]);
                let p = gd.jets[0].psi[X1].data[x].norm_sqr() + gd.jets[0].psi[X2].data[x].norm_sqr();
                assert!((g - p).abs() < 1e-10);
            }
            let e = psi_x_l2_squared(&gd, 0);
            assert!((e - 2.0 * su.energy).abs() < 1e-8 * e);

            let r = gauge_residuals(&gd, 0, spec).unwrap();
            for (k, v) in &r {
                assert!(*v < 1e-3, "μ={} {k} = {v}", target.mu());
            }
            let mid = gd.jets.len() / 2;
            let rm = gauge_residuals(&gd, mid, spec).unwrap();
            assert!(!rm.contains_key("sm_freeze"));
            for (k, v) in &rm {
                assert!(*v < 1e-3, "mid {k} = {v}");
            }
            let nl = nlsh_residual(&gd, 0, spec, NlshOptions::default()).unwrap();
            assert!(nl.schrodinger < 1e-3 && nl.heat < 1e-3, "{nl:?}");

            for alpha in [X1, X2, T] {
                let c = compare_a_integral(&gd, alpha, 0).unwrap();
                assert!(
                    c.adopted_error() < 1e-2 * c.frame_norm.max(1e-12) || c.adopted_error() < 1e-6,
                    "{c:?}"
                );
                if target.is_sphere() {
                    assert_eq!(c.plain_error, c.mu_error);
                } else {
                    assert!(c.mu_weighted_adopted);
                }
            }
        }
    }

    #[test]
    fn negative_and_ablation_controls() {
        let su = setup(SPH, 64);
        let spec = &su.spec;
        let gd = extract_gauge(&TimeStencil::around(&su.slices, 1, su.dt).unwrap(), spec).unwrap();
        // Evaluating the sphere data with the opposite curvature sign breaks F12.
        let flipped = GaugeData {
            target: HYP,
            ..gd.clone()
        };
        let r = gauge_residuals(&flipped, 0, spec).unwrap();
        assert!(r["f12"] > 0.5, "{}", r["f12"]);
        let full = nlsh_residual(&gd, 0, spec, NlshOptions::default()).unwrap();
        let ablated = nlsh_residual(&gd, 0, spec, NlshOptions { drop_a_t: true }).unwrap();
        assert!(ablated.schrodinger > 100.0 * full.schrodinger, "{full:?} {ablated:?}");
    }

    #[test]
    fn gauge_rotation_is_invisible_to_residuals() {
        let su = setup(SPH, 64);
        let spec = &su.spec;
        let g = spec.grid;
        let gd = extract_gauge(&TimeStencil::around(&su.slices, 1, su.dt).unwrap(), spec).unwrap();
        let k = g.dk();
        let theta: Vec<f64> = (0..g.len())
            .map(|i| {
                let (x1, x2) = g.coords(i);
                0.7 * (k * x1).sin() + 0.4 * (k * x2).cos()
            })
            .collect();
        let theta_t: Vec<f64> = (0..g.len())
            .map(|i| {
                let (x1, _) = g.coords(i);
                0.5 * (k * x1).cos()
            })
            .collect();
        let rot = gauge_rotate(&gd, &theta, &theta_t, spec);
        for j in 0..gd.jets.len() {
            for a in 0..4 {
                for x in 0..g.len() {
                    assert!((rot.jets[j].psi[a].data[x].norm() - gd.jets[j].psi[a].data[x].norm()).abs() <= 1e-15);
                }
            }
        }
        for i in [0, gd.jets.len() / 3] {
            let a = gauge_residuals(&gd, i, spec).unwrap();
            let b = gauge_residuals(&rot, i, spec).unwrap();
            for (key, v) in &a {
                assert!((v - b[key]).abs() <= 1e-10, "{key}: {v} vs {}", b[key]);
            }
            let na = nlsh_residual(&gd, i, spec, NlshOptions::default()).unwrap();
            let nb = nlsh_residual(&rot, i, spec, NlshOptions::default()).unwrap();
            assert!((na.schrodinger - nb.schrodinger).abs() <= 1e-10);
            assert!((na.heat - nb.heat).abs() <= 1e-10);
        }
    }

    #[test]
    fn pure_gauge_has_zero_curvature() {
        let g = GridSpec::new(32, 2.0 * PI).unwrap();
        let spec = Spectral::new(g);
        let zero_c = ScalarField2D::zeros(32);
        let zero_r = vec![0.0; g.len()];
        let jet = GaugeJet {
            psi: std::array::from_fn(|_| zero_c.clone()),
            a: std::array::from_fn(|_| zero_r.clone()),
            dpsi_ds: std::array::from_fn(|_| zero_c.clone()),
            dpsi_dt: std::array::from_fn(|_| zero_c.clone()),
            da_ds: std::array::from_fn(|_| zero_r.clone()),
            da_dt: std::array::from_fn(|_| zero_r.clone()),
        };
        let gd = GaugeData {
            grid: g,
            target: SPH,
            t: 0.0,
            s_grid: vec![0.0],
            jets: vec![jet],
            a_s_fd_max: 0.0,
        };
        let theta: Vec<f64> = (0..g.len())
            .map(|i| {
                let (a, b) = g.coords(i);
                (a + 2.0 * b).sin() + 0.3 * (3.0 * a).cos()
            })
            .collect();
        let theta_t: Vec<f64> = (0..g.len()).map(|i| g.coords(i).1.cos()).collect();
        let rot = gauge_rotate(&gd, &theta, &theta_t, &spec);
        for (a, b) in [(X1, X2), (T, X1), (T, X2), (S, X1), (S, T)] {
            let f = curvature(&rot, 0, a, b, &spec).unwrap();
            assert!(f.iter().all(|v| v.abs() < 1e-10), "F({a},{b})");
        }
        assert!(curvature(&rot, 0, X1, X1, &spec).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn not_trivialized_is_reported() {
        let g = GridSpec::new(32, 8.0).unwrap();
        let spec = Spectral::new(g);
        let phi = bump(g, SPH, 0.5, 1.0);
        let sg = SGrid::new(0.01, 2, 1.5, 0.05).unwrap();
        assert!(matches!(
            CaloricSlice::build(&phi, 0.0, &sg, HeatScheme::Etd2, &spec),
            Err(Error::NotTrivialized(_))
        ));
    }
}
