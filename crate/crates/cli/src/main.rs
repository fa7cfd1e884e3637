use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use csm_core::manifold::{energy, mass, BASE_POINT};
use csm_core::runner::{
    check_gauge_dir, check_norms_dir, generate_initial_data, read_snapshot, run_experiment, write_snapshot, RunConfig,
    Snapshot,
};
use csm_core::{Error, Result, Spectral};

#[derive(Parser)]
#[command(name = "csm", version, about = "Schrödinger map and caloric gauge verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline described by a config file.
    Run { config: PathBuf },
    /// Rebuild the caloric gauge from a snapshot directory and check the residual suite.
    CheckGauge {
        dir: PathBuf,
        #[arg(long, default_value_t = 64.0)]
        s_max: f64,
        #[arg(long = "n-s", default_value_t = 8)]
        n_s: usize,
    },
    /// Map-level norms and envelopes over a snapshot directory.
    CheckNorms {
        dir: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
    },
    /// Write the configured initial map as a snapshot.
    GenData { config: PathBuf, out: PathBuf },
    /// Print the header and basic diagnostics of a snapshot.
    Info { snapshot: PathBuf },
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn run(path: &Path) -> Result<i32> {
    let config = RunConfig::from_file(path)?;
    let report = run_experiment(&config)?;
    for (name, c) in &report.checks {
        println!("{} {name}: {:.3e} (limit {:.1e})", verdict(c.pass), c.value, c.limit);
    }
    println!("{} written to {}", report.status, config.output_dir.display());
    Ok(report.exit_code())
}

fn check_gauge(dir: &Path, s_max: f64, n_s: usize) -> Result<i32> {
    let r = check_gauge_dir(dir, s_max, n_s)?;
    println!("slices: {}", r.slices.len());
    println!("max residual: {:.3e}", r.max_residual);
    println!("max |A_s|: {:.3e}", r.max_a_s);
    println!("energy identity error: {:.3e}", r.max_energy_identity_error);
    println!("{}", verdict(r.pass));
    Ok(i32::from(!r.pass))
}

fn check_norms(dir: &Path, delta: f64) -> Result<i32> {
    let r = check_norms_dir(dir, delta)?;
    println!("t,energy,hdot1,hdot3");
    for i in 0..r.times.len() {
        println!("{},{},{},{}", r.times[i], r.energy[i], r.hdot1[i], r.hdot3[i]);
    }
    println!("l2l4_grad_phi: {:.6e}", r.l2l4_grad_phi);
    for (k, v) in &r.band_l4_grad_phi {
        println!("  band {k}: {v:.6e}");
    }
    println!(
        "summation ratio {:.6} against constant {:.6}",
        r.summation_ratio, r.summation_constant
    );
    println!("{}", verdict(r.pass));
    Ok(i32::from(!r.pass))
}

fn gen_data(config: &Path, out: &Path) -> Result<i32> {
    let config = RunConfig::from_file(config)?;
    let phi = generate_initial_data(&config)?;
    let e = energy(&phi, &Spectral::new(phi.grid));
    write_snapshot(&Snapshot::new(phi, 0.0, 0.0), out)?;
    println!("wrote {} (energy {e:.12e})", out.display());
    Ok(0)
}

fn info(path: &Path) -> Result<i32> {
    let snap = read_snapshot(path)?;
    let phi = &snap.field;
    println!("mu: {}", phi.target.mu_int());
    println!("N: {}", phi.grid.n);
    println!("L: {}", phi.grid.l);
    println!("t: {}", snap.t);
    println!("s: {}", snap.s);
    println!("energy: {:.12e}", energy(phi, &Spectral::new(phi.grid)));
    println!("mass: {:.12e}", mass(phi, &BASE_POINT));
    println!("constraint defect: {:.3e}", phi.max_constraint_defect());
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { config } => run(config),
        Command::CheckGauge { dir, s_max, n_s } => check_gauge(dir, *s_max, *n_s),
        Command::CheckNorms { dir, delta } => check_norms(dir, *delta),
        Command::GenData { config, out } => gen_data(config, out),
        Command::Info { snapshot } => info(snapshot),
    };
    let code = outcome.unwrap_or_else(|e: Error| {
        eprintln!("error: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
