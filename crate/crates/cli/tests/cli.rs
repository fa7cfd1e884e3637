use std::path::Path;
use std::process::{Command, Output};

fn csm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csm"))
        .args(args)
        .env("CSM_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, scenario: &str, extra: &str) -> String {
    let text = format!(
        r#"target = "sphere"
N = 16
L = 8.0
dt = 1e-3
T = 4e-3
s_max = 16.0
n_s_slices = 2
scenario = "{scenario}"
delta = 0.1
sigma_max = 1
angle_count = 2
lambda_samples = [0.0]
seed = 1
output_dir = "{}"
{extra}
"#,
        dir.join("out").display()
    );
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn constant_run_passes_and_snapshots_recheck() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "constant", "");
    let o = csm(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS"));
    let out = dir.path().join("out");
    assert!(out.join("report.json").exists());
    let csv = std::fs::read_to_string(out.join("series.csv")).unwrap();
    assert!(csv.starts_with("t,energy,mass,hdot1,hdot3,l2l4_grad_phi,l2l4_psi_x"));

    let snaps = out.join("snapshots");
    let g = csm(&["check-gauge", snaps.to_str().unwrap(), "--s-max", "16", "--n-s", "2"]);
    assert_eq!(g.status.code(), Some(0), "{}", stdout(&g));
    let n = csm(&["check-norms", snaps.to_str().unwrap()]);
    assert_eq!(n.status.code(), Some(0), "{}", stdout(&n));
}

#[test]
fn gen_data_then_info() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "gaussian_bump", "scenario_params = { amplitude = 0.2 }");
    let snap = dir.path().join("init.csm");
    let o = csm(&["gen-data", &cfg, snap.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let i = csm(&["info", snap.to_str().unwrap()]);
    assert_eq!(i.status.code(), Some(0));
    let text = stdout(&i);
    assert!(text.contains("mu: 1") && text.contains("N: 16"), "{text}");
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "constant", "workers = 2");
    assert_eq!(csm(&["run", &cfg]).status.code(), Some(2));
    let bad = dir.path().join("bad.csm");
    std::fs::write(&bad, b"XXXX0000").unwrap();
    assert_eq!(csm(&["info", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(csm(&["frobnicate"]).status.code(), Some(2));
}
