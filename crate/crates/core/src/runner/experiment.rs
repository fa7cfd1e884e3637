//! End-to-end pipeline: map flow, per-slice heat flow and caloric gauge,
//! residual suite, norms and envelopes, then CSV, JSON and snapshots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::RunConfig;
use super::scenario::generate_initial_data;
use super::snapshot::{write_snapshot, Snapshot};
use crate::caloric::{
    compare_a_integral, extract_gauge, gauge_residuals, nlsh_residual, psi_x_l2_squared, CaloricSlice, NlshOptions,
    TimeStencil, X1, X2,
};
use crate::error::{Error, Result};
use crate::evolve_heat::{HeatScheme, SGrid, MONO_TOL};
use crate::evolve_sm::{run_sm, SMTrajectory};
use crate::manifold::{energy, MapField};
use crate::norms::{
    band_norms, bilinear_ratio, decay_fit, envelope_from_values, envelope_square_constant, envelope_summation_check,
    grad_phi_vs_psi_ratio, grad_series, l2l4_norm, sobolev_seminorm, BilinearPair, BilinearReport, DecayFit,
    FieldSeries, FrequencyEnvelope, NormRatio, NormReport, SummationReport,
};
use crate::spectral::{ScalarField2D, Spectral};

pub const RESIDUAL_LIMIT: f64 = 1e-3;
pub const ENERGY_IDENTITY_LIMIT: f64 = 1e-8;
pub const DRIFT_LIMIT: f64 = 1e-6;
pub const A_S_LIMIT: f64 = 1e-10;
pub const CONSTRAINT_LIMIT: f64 = 1e-12;
pub const ROUNDOFF: f64 = 1e-12;
pub const CSV_HEADER: &str = "t,energy,mass,hdot1,hdot3,l2l4_grad_phi,l2l4_psi_x";

/// Worker count from `CSM_WORKERS`, else the available parallelism.
pub fn worker_count() -> usize {
    std::env::var("CSM_WORKERS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(value: f64, limit: f64) -> Self {
        Check {
            value,
            limit,
            pass: value <= limit,
        }
    }
}

/// Per retained t-slice gauge diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct SliceReport {
    pub index: usize,
    pub t: f64,
    pub energy: f64,
    pub psi_x_energy_error: f64,
    pub max_a_s: f64,
    pub a_s_fd_max: f64,
    pub max_frame_defect: f64,
    pub max_frame_correction: f64,
    pub heat_energy_increase: f64,
    pub heat_constraint_defect: f64,
    pub a_integral_error: [f64; 2],
    pub a_integral_mu_weighted: bool,
    /// Residual name → worst value over the checked s-nodes.
    pub residuals: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeSet {
    pub sigma: u32,
    pub b: FrequencyEnvelope,
    pub alpha: FrequencyEnvelope,
    pub beta: FrequencyEnvelope,
    pub upsilon: FrequencyEnvelope,
    pub summation: Vec<SummationReport>,
    pub max_slow_variation_excess: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayEntry {
    pub band: i32,
    pub fit: Option<DecayFit>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub status: String,
    pub config: RunConfig,
    pub retained_slices: usize,
    pub sm_energy_drift: f64,
    pub sm_mass_drift: f64,
    pub checks: BTreeMap<String, Check>,
    pub slices: Vec<SliceReport>,
    pub norms: NormReport,
    pub grad_phi_vs_psi: NormRatio,
    pub envelopes: Vec<EnvelopeSet>,
    pub envelope_square_ratio: f64,
    pub bilinear: BilinearReport,
    pub decay: Vec<DecayEntry>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.checks.values().all(|c| c.pass)
    }

    /// 0 on PASS, 1 on a failed assertion-class check.
    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Complete run output before anything is written.
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub csv: String,
    pub snapshots: Vec<(String, Snapshot)>,
}

/// Runs the pipeline and writes `report.json`, `series.csv` and
/// `snapshots/*.csm` under the configured output directory.
pub fn run_experiment(config: &RunConfig) -> Result<ExperimentReport> {
    let out = compute_experiment(config)?;
    write_outputs(&out, &config.output_dir)?;
    Ok(out.report)
}

pub fn write_outputs(out: &ExperimentOutput, dir: &Path) -> Result<()> {
    let snap_dir = dir.join("snapshots");
    std::fs::create_dir_all(&snap_dir).map_err(|e| Error::io(&snap_dir, e))?;
    let write = |p: PathBuf, text: &str| std::fs::write(&p, text).map_err(|e| Error::io(&p, e));
    write(dir.join("report.json"), &out.report.to_json())?;
    write(dir.join("series.csv"), &out.csv)?;
    for (name, snap) in &out.snapshots {
        write_snapshot(snap, &snap_dir.join(name))?;
    }
    Ok(())
}

/// Retained SM indices and the stencil indices each one needs.
pub fn retained_indices(steps: usize, stride: usize) -> Vec<(usize, [usize; 3])> {
    (0..=steps)
        .step_by(stride)
        .map(|n| {
            let st = if n == 0 {
                [0, 1, 2]
            } else if n == steps {
                [n - 2, n - 1, n]
            } else {
                [n - 1, n, n + 1]
            };
            (n, st)
        })
        .collect()
}

/// s-nodes where residuals are evaluated: the start, the end of the ramp and
/// the middle of the geometric part.
pub fn residual_nodes(sgrid: &SGrid) -> Vec<usize> {
    let mut v = vec![0, sgrid.n_ramp.min(sgrid.len() - 1), (sgrid.n_ramp + sgrid.len()) / 2];
    v.sort_unstable();
    v.dedup();
    v.retain(|&i| i < sgrid.len());
    v
}

pub(crate) struct SliceOutcome {
    pub(crate) report: SliceReport,
    /// `ψ₁, ψ₂` at every s-node.
    pub(crate) psi_x: Vec<[ScalarField2D; 2]>,
}

fn analyze_slice(
    traj: &SMTrajectory,
    n: usize,
    stencil_idx: [usize; 3],
    sgrid: &SGrid,
    spec: &Spectral,
) -> Result<SliceOutcome> {
    let phis = stencil_idx.map(|m| &traj.slices[m]);
    let times = stencil_idx.map(|m| traj.t_grid[m]);
    let pos = stencil_idx.iter().position(|&m| m == n).unwrap();
    let mut out = analyze_stencil(phis, times, pos, sgrid, spec)?;
    out.report.index = n;
    Ok(out)
}

/// Gauge diagnostics at `times[pos]` from three equally spaced map slices.
pub(crate) fn analyze_stencil(
    phis: [&MapField; 3],
    times: [f64; 3],
    pos: usize,
    sgrid: &SGrid,
    spec: &Spectral,
) -> Result<SliceOutcome> {
    let dt = times[1] - times[0];
    let cal: Vec<CaloricSlice> = phis
        .iter()
        .zip(times)
        .map(|(p, t)| CaloricSlice::build(p, t, sgrid, HeatScheme::Etd2, spec))
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("caloric_gauge"))?;
    let stencil = TimeStencil::around(&cal, pos, dt)?;
    let gd = extract_gauge(&stencil, spec).map_err(|e| e.in_stage("extract_gauge"))?;
    let mut residuals = BTreeMap::new();
    for i in residual_nodes(sgrid) {
        let mut entries = gauge_residuals(&gd, i, spec)?;
        let nl = nlsh_residual(&gd, i, spec, NlshOptions::default())?;
        entries.insert("nlsh_heat".into(), nl.heat);
        if i == 0 {
            entries.insert("nlsh_schrodinger".into(), nl.schrodinger);
        }
        for (k, v) in entries {
            let slot = residuals.entry(k).or_insert(0.0f64);
            *slot = slot.max(v);
        }
    }
    let e = energy(phis[pos], spec);
    let psi_e = psi_x_l2_squared(&gd, 0);
    let psi_x_energy_error = (psi_e - 2.0 * e).abs() / (2.0 * e).max(f64::MIN_POSITIVE);
    let mut a_err = [0.0; 2];
    let mut mu_weighted = true;
    for (slot, alpha) in a_err.iter_mut().zip([X1, X2]) {
        let cmp = compare_a_integral(&gd, alpha, 0)?;
        *slot = if cmp.frame_norm > 0.0 {
            cmp.adopted_error() / cmp.frame_norm
        } else {
            cmp.adopted_error()
        };
        mu_weighted &= cmp.mu_weighted_adopted;
    }
    let center = &cal[pos];
    let heat_constraint_defect = center
        .heat
        .slices
        .iter()
        .map(|p| p.max_constraint_defect())
        .fold(0.0, f64::max);
    let report = SliceReport {
        index: pos,
        t: times[pos],
        energy: e,
        psi_x_energy_error,
        max_a_s: gd.max_abs_a_s(),
        a_s_fd_max: gd.a_s_fd_max,
        max_frame_defect: center.max_frame_defect(),
        max_frame_correction: center.max_correction,
        heat_energy_increase: center.heat.max_energy_increase() / e.max(1.0),
        heat_constraint_defect,
        a_integral_error: a_err,
        a_integral_mu_weighted: mu_weighted,
        residuals,
    };
    let psi_x = gd
        .jets
        .into_iter()
        .map(|j| {
            let [_, _, p1, p2] = j.psi;
            [p1, p2]
        })
        .collect();
    Ok(SliceOutcome { report, psi_x })
}

fn series_at(t: &[f64], psi: &[Vec<[ScalarField2D; 2]>], si: usize) -> FieldSeries {
    FieldSeries::new(
        t.to_vec(),
        vec![
            psi.iter().map(|p| p[si][0].clone()).collect(),
            psi.iter().map(|p| p[si][1].clone()).collect(),
        ],
    )
}

fn prefix(series: &FieldSeries, len: usize) -> FieldSeries {
    FieldSeries::new(
        series.t[..len].to_vec(),
        series.components.iter().map(|c| c[..len].to_vec()).collect(),
    )
}

fn build_envelopes(bn: &crate::norms::BandNorms, delta: f64, sigma: u32) -> Result<EnvelopeSet> {
    let env = |v: &[f64]| envelope_from_values(v, bn.k_min, delta, sigma);
    let b = env(&bn.xk);
    let alpha = env(&bn.l4);
    let beta = env(&bn.l2_initial);
    let upsilon = alpha.sum(&beta);
    let all = [&b, &alpha, &beta, &upsilon];
    let mut summation = Vec::new();
    for p in [delta + 0.25, 1.0 + delta, 2.0 + delta] {
        for e in all {
            summation.push(envelope_summation_check(e, p)?);
        }
    }
    let max_slow_variation_excess = all
        .iter()
        .map(|e| e.slow_variation_excess())
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(EnvelopeSet {
        sigma,
        b,
        alpha,
        beta,
        upsilon,
        summation,
        max_slow_variation_excess,
    })
}

/// Runs every stage without touching the file system.
pub fn compute_experiment(config: &RunConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| compute_inner(config))
}

fn compute_inner(config: &RunConfig) -> Result<ExperimentOutput> {
    let grid = config.grid()?;
    let spec = Spectral::new(grid);
    let phi0 = generate_initial_data(config).map_err(|e| e.in_stage("scenario"))?;
    let steps = config.steps().max(2);
    let dt = config.t_final / steps as f64;
    let traj = run_sm(&phi0, config.t_final, dt, &spec).map_err(|e| e.in_stage("evolve_sm"))?;
    let steps = traj.len() - 1;
    if steps < 2 {
        return Err(Error::TooFewSlices {
            needed: 3,
            got: traj.len(),
        });
    }
    let sgrid = SGrid::for_spectral(&spec, config.s_max, config.n_s_slices)?;
    // Fail fast on the heat-flow precondition before the parallel stage.
    crate::evolve_heat::check_energy_threshold(&phi0, &spec).map_err(|e| e.in_stage("heat_flow"))?;

    let retained = retained_indices(steps, config.retain_stride());
    let outcomes: Vec<SliceOutcome> = retained
        .par_iter()
        .map(|&(n, st)| analyze_slice(&traj, n, st, &sgrid, &spec))
        .collect::<Result<_>>()?;

    let t: Vec<f64> = retained.iter().map(|&(n, _)| traj.t_grid[n]).collect();
    let phis: Vec<MapField> = retained.iter().map(|&(n, _)| traj.slices[n].clone()).collect();
    let psi: Vec<Vec<[ScalarField2D; 2]>> = outcomes.iter().map(|o| o.psi_x.clone()).collect();
    let slices: Vec<SliceReport> = outcomes.into_iter().map(|o| o.report).collect();

    let psi0 = series_at(&t, &psi, 0);
    let grad = grad_series(t.clone(), &phis, &spec);
    let sample = config.lateral_sample();

    // CSV: one row per retained slice, ℓ²L⁴ over [0, t]; zero on the first row.
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for (r, &(n, _)) in retained.iter().enumerate() {
        let phi = &traj.slices[n];
        let (lg, lp) = if r == 0 {
            (0.0, 0.0)
        } else {
            (
                l2l4_norm(&prefix(&grad, r + 1), &spec).0,
                l2l4_norm(&prefix(&psi0, r + 1), &spec).0,
            )
        };
        writeln!(
            csv,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            traj.t_grid[n],
            traj.energy_series[n],
            traj.mass_series[n],
            sobolev_seminorm(phi, 0.0, &spec),
            sobolev_seminorm(phi, 2.0, &spec),
            lg,
            lp
        )
        .unwrap();
    }

    // Norms and envelopes of ψ_x(s = 0) over the retained interval.
    let mut norms = NormReport::new(&grid, (t[0], *t.last().unwrap()), &sample, &spec);
    norms.flags.yk_upper_bound = false;
    let (l2l4_psi, psi_bands) = l2l4_norm(&psi0, &spec);
    let (l2l4_grad, grad_bands) = l2l4_norm(&grad, &spec);
    norms.push("l2l4_psi_x", None, l2l4_psi);
    norms.push("l2l4_grad_phi", None, l2l4_grad);
    for ((k, a), (_, b)) in psi_bands.iter().zip(&grad_bands) {
        norms.push("l4_psi_x", Some(*k), *a);
        norms.push("l4_grad_phi", Some(*k), *b);
    }
    let bn = band_norms(&psi0, &spec, &sample)?;
    for (i, k) in spec.bands.bands().enumerate() {
        norms.push("xk_psi_x", Some(k), bn.xk[i]);
        norms.push("l2_psi_x_initial", Some(k), bn.l2_initial[i]);
    }
    let grad_ratio = grad_phi_vs_psi_ratio(&grad, &psi0, &spec);
    let envelopes = (0..=config.sigma_max)
        .map(|sigma| build_envelopes(&bn, config.delta, sigma))
        .collect::<Result<Vec<_>>>()?;
    let xk_sq: f64 = bn.xk.iter().map(|v| v * v).sum();
    let envelope_square_ratio = if xk_sq > 0.0 {
        envelopes[0].b.square_sum() / xk_sq
    } else {
        1.0
    };
    let alpha_dominates = envelopes[0]
        .alpha
        .values
        .iter()
        .zip(&psi_bands)
        .all(|(a, (_, l4))| *a >= l4 * (1.0 - ROUNDOFF));

    // Bilinear table and decay fits over the s-grid.
    let psi_by_s: Vec<FieldSeries> = (0..sgrid.len()).map(|si| series_at(&t, &psi, si)).collect();
    let nearest = |s: f64| {
        sgrid
            .s
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - s).abs().total_cmp(&(b.1 - s).abs()))
            .map(|(i, _)| i)
            .unwrap()
    };
    let bands: Vec<i32> = spec.bands.bands().collect();
    let mut pairs = Vec::new();
    for &j in &bands {
        for &k in bands.iter().filter(|&&k| k >= j) {
            pairs.push(BilinearPair {
                j,
                k,
                s_index: 0,
                s_tilde_index: 0,
            });
            pairs.push(BilinearPair {
                j,
                k,
                s_index: nearest(4f64.powi(-j)),
                s_tilde_index: nearest(4f64.powi(-k)),
            });
        }
    }
    let bilinear = bilinear_ratio(&psi_by_s, &sgrid.s, &spec, &envelopes[0].upsilon, &pairs)?;
    let decay = bands
        .par_iter()
        .map(|&k| {
            let values: Vec<f64> = psi_by_s
                .iter()
                .map(|s| {
                    let pk = s.lp_project(&spec, k).expect("resolved band");
                    crate::norms::mixed_norm(&pk, &grid, 4.0, 4.0, crate::norms::NormOrder::TimeFirst)
                })
                .collect();
            DecayEntry {
                band: k,
                fit: decay_fit(&sgrid.s, &values, k, (1.0, 100.0)).ok(),
            }
        })
        .collect::<Vec<_>>();

    // Assertion-class checks.
    let worst = |f: fn(&SliceReport) -> f64| slices.iter().map(f).fold(0.0, f64::max);
    let mut checks = BTreeMap::new();
    checks.insert(
        "sm_energy_drift".into(),
        Check::at_most(traj.relative_energy_drift(), DRIFT_LIMIT),
    );
    checks.insert(
        "sm_mass_drift".into(),
        Check::at_most(traj.relative_mass_drift(), DRIFT_LIMIT),
    );
    let sm_defect = traj
        .slices
        .iter()
        .map(|p| p.max_constraint_defect())
        .fold(0.0, f64::max);
    checks.insert(
        "constraint_defect".into(),
        Check::at_most(sm_defect.max(worst(|s| s.heat_constraint_defect)), CONSTRAINT_LIMIT),
    );
    checks.insert(
        "heat_energy_monotone".into(),
        Check::at_most(worst(|s| s.heat_energy_increase), MONO_TOL),
    );
    checks.insert(
        "gauge_energy_identity".into(),
        Check::at_most(worst(|s| s.psi_x_energy_error), ENERGY_IDENTITY_LIMIT),
    );
    checks.insert("caloric_a_s".into(), Check::at_most(worst(|s| s.max_a_s), A_S_LIMIT));
    let max_res = slices
        .iter()
        .flat_map(|s| s.residuals.values())
        .fold(0.0f64, |m, v| m.max(*v));
    checks.insert("structural_residuals".into(), Check::at_most(max_res, RESIDUAL_LIMIT));
    let slow = envelopes
        .iter()
        .map(|e| e.max_slow_variation_excess)
        .fold(f64::NEG_INFINITY, f64::max);
    checks.insert(
        "envelope_slow_variation".into(),
        Check::at_most(slow.max(0.0), ROUNDOFF),
    );
    let summation_excess = envelopes
        .iter()
        .flat_map(|e| &e.summation)
        .map(|r| (r.low_ratio.max(r.high_ratio) / r.constant - 1.0).max(0.0))
        .fold(0.0, f64::max);
    checks.insert("envelope_summation".into(), Check::at_most(summation_excess, ROUNDOFF));
    let window = envelope_square_constant(config.delta);
    checks.insert(
        "envelope_square_sum".into(),
        Check {
            value: envelope_square_ratio,
            limit: window,
            pass: envelope_square_ratio >= 1.0 - ROUNDOFF && envelope_square_ratio <= window * (1.0 + ROUNDOFF),
        },
    );
    checks.insert(
        "envelope_alpha_dominates".into(),
        Check {
            value: f64::from(u8::from(alpha_dominates)),
            limit: 1.0,
            pass: alpha_dominates,
        },
    );
    checks.insert(
        "grad_phi_vs_psi_window".into(),
        Check {
            value: grad_ratio.ratio,
            limit: 10.0,
            pass: grad_ratio.degenerate || (grad_ratio.ratio >= 0.1 && grad_ratio.ratio <= 10.0),
        },
    );

    let mut snapshots = Vec::new();
    let mut stored: Vec<usize> = retained.iter().flat_map(|(_, st)| st.iter().copied()).collect();
    stored.sort_unstable();
    stored.dedup();
    for m in stored {
        snapshots.push((
            format!("t{m:07}.csm"),
            Snapshot::new(traj.slices[m].clone(), traj.t_grid[m], 0.0),
        ));
    }

    let mut report = ExperimentReport {
        status: String::new(),
        config: config.clone(),
        retained_slices: retained.len(),
        sm_energy_drift: traj.relative_energy_drift(),
        sm_mass_drift: traj.relative_mass_drift(),
        checks,
        slices,
        norms,
        grad_phi_vs_psi: grad_ratio,
        envelopes,
        envelope_square_ratio,
        bilinear,
        decay,
    };
    report.status = if report.passed() { "PASS" } else { "FAIL" }.into();
    Ok(ExperimentOutput { report, csv, snapshots })
}
