use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use collapse_lab::channels::{build_grw, io};
use collapse_lab::{BoxLattice, DensityMatrix, MomentumIndex, PureState};
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_collapse-lab");

const LATTICE_1D: &str = "[lattice]\ndim = 1\nn_max = 4\nbox_length = 6.283185307179586\n";

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(BIN).args(args).arg("--config").arg(config).arg("--out").arg(out).output().unwrap()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Rows of a numeric CSV keyed by header name.
fn csv(path: PathBuf) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_owned).collect();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<f64>], name: &str) -> Vec<f64> {
    let i = header.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[i]).collect()
}

#[test]
fn verify_identity_and_grw() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "id.toml", &format!("{LATTICE_1D}[channel]\nkind = \"identity\"\n"));
    let out = run(&["verify-channel"], &cfg, &dir.path().join("id"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(dir.path().join("id/verify_channel.json"));
    assert_eq!(report["class"], "MomentumDiagonal");
    assert_eq!(report["cptp"]["pass"], true);

    let cfg = write_config(dir.path(), "grw.toml", &format!("{LATTICE_1D}[channel]\nkind = \"grw\"\nr_c = 1.0\n"));
    let out = run(&["verify-channel"], &cfg, &dir.path().join("grw"));
    assert_eq!(out.status.code(), Some(0));
    let report = json(dir.path().join("grw/verify_channel.json"));
    assert_eq!(report["class"], "Diffusive");
    assert!(report["covariance_max_dev"].as_f64().unwrap() <= 1e-10);
    assert!(report["cptp"]["choi_min_eigenvalue"].as_f64().unwrap() > -1e-10);
}

#[test]
fn corrupted_channel_file_fails_completeness() {
    let dir = tempfile::tempdir().unwrap();
    let lat = BoxLattice::natural(1, 4, 2.0 * std::f64::consts::PI).unwrap();
    let text = io::channel_to_string(&build_grw(&lat, 1.0, 1.0).unwrap()).unwrap();
    let mut doc: Value = serde_json::from_str(&text).unwrap();
    let gain = &mut doc["blocks"][0]["gains"][0]["re"];
    *gain = Value::from(gain.as_f64().unwrap() * 1.5 + 0.1);
    fs::write(dir.path().join("broken.json"), serde_json::to_string(&doc).unwrap()).unwrap();

    let cfg = write_config(
        dir.path(),
        "c.toml",
        &format!("{LATTICE_1D}[channel]\nkind = \"file\"\npath = \"broken.json\"\n"),
    );
    let out = run(&["verify-channel"], &cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(1));
    let report = json(dir.path().join("out/verify_channel.json"));
    assert_eq!(report["completeness_pass"], false);
    assert_eq!(report["pass"], false);

    let cfg = write_config(
        dir.path(),
        "d.toml",
        &format!(
            "{LATTICE_1D}[channel]\nkind = \"file\"\npath = \"broken.json\"\n[state]\nkind = \"plane_wave\"\nn = [0]\n"
        ),
    );
    assert_eq!(run(&["diffuse"], &cfg, &dir.path().join("d")).status.code(), Some(1));
    assert_eq!(run(&["unravel"], &cfg, &dir.path().join("u")).status.code(), Some(1));
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let unknown =
        write_config(dir.path(), "u.toml", &format!("{LATTICE_1D}[channel]\nkind = \"identity\"\ncolour = 1\n"));
    assert_eq!(run(&["verify-channel"], &unknown, &out_dir).status.code(), Some(2));
    let nested = write_config(dir.path(), "n.toml", &format!("{LATTICE_1D}[run]\nsteps = 3\n"));
    assert_eq!(run(&["theorem-scan"], &nested, &out_dir).status.code(), Some(2));
    let missing_table = write_config(dir.path(), "m.toml", LATTICE_1D);
    assert_eq!(run(&["diffuse"], &missing_table, &out_dir).status.code(), Some(2));
    let bad_value = write_config(dir.path(), "b.toml", &format!("{LATTICE_1D}[channel]\nkind = \"grw\"\nr_c = -1.0\n"));
    assert_eq!(run(&["verify-channel"], &bad_value, &out_dir).status.code(), Some(2));
    let missing_file =
        write_config(dir.path(), "f.toml", &format!("{LATTICE_1D}[channel]\nkind = \"file\"\npath = \"nope.json\"\n"));
    assert_eq!(run(&["verify-channel"], &missing_file, &out_dir).status.code(), Some(2));
    assert_eq!(run(&["verify-channel"], &dir.path().join("absent.toml"), &out_dir).status.code(), Some(2));

    let no_config = Command::new(BIN).arg("diffuse").output().unwrap();
    assert_eq!(no_config.status.code(), Some(2));
    let bad_command = Command::new(BIN).arg("teleport").output().unwrap();
    assert_eq!(bad_command.status.code(), Some(2));
    let bad_flag = Command::new(BIN).args(["diffuse", "--seed", "x"]).output().unwrap();
    assert_eq!(bad_flag.status.code(), Some(2));
}

#[test]
fn diffuse_momentum_diagonal_keeps_spread() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "{LATTICE_1D}[channel]\nkind = \"momentum_diagonal\"\nn_kraus = 3\n[state]\nkind = \"random\"\nrank = 2\n[run]\nseed = 4\nn_steps = 100\n"
    );
    let cfg = write_config(dir.path(), "md.toml", &body);
    assert_eq!(run(&["diffuse"], &cfg, dir.path()).status.code(), Some(0));
    let (h, rows) = csv(dir.path().join("diffuse.csv"));
    assert_eq!(rows.len(), 101);
    let spread = column(&h, &rows, "spread_p_0");
    assert!(spread.iter().all(|s| (s - spread[0]).abs() < 1e-12));
    assert!(column(&h, &rows, "delta_0").iter().all(|d| d.abs() < 1e-12));
}

#[test]
fn diffuse_grw_matches_repeated_dense_application() {
    let dir = tempfile::tempdir().unwrap();
    let body = "[lattice]\ndim = 1\nn_max = 8\nbox_length = 6.283185307179586\n\
                [channel]\nkind = \"grw\"\nr_c = 1.0\n[state]\nkind = \"plane_wave\"\nn = [0]\n[run]\nn_steps = 100\n";
    let cfg = write_config(dir.path(), "grw.toml", body);
    assert_eq!(run(&["diffuse"], &cfg, dir.path()).status.code(), Some(0));
    let (h, rows) = csv(dir.path().join("diffuse.csv"));
    let spread = column(&h, &rows, "spread_p_0");
    let delta = column(&h, &rows, "delta_0");

    // first increment: variance of the golden transfer table at n = 0
    let golden =
        fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/grw_rc1_nmax8_source0.json")).unwrap();
    let (_, blocks) = io::blocks_from_str(&golden).unwrap();
    let var_p: f64 =
        blocks.iter().map(|b| b.entries()[0].gain.norm_sqr() * (b.transfer().components()[0] as f64).powi(2)).sum();
    assert!((spread[1] - spread[0] - var_p).abs() < 1e-10);

    // later increments against dense Kraus products
    let lat = BoxLattice::natural(1, 8, 2.0 * std::f64::consts::PI).unwrap();
    let dense = build_grw(&lat, 1.0, 1.0).unwrap().densify();
    let mut rho = DensityMatrix::from_pure(&PureState::plane_wave(&lat, &MomentumIndex::new(vec![0])).unwrap());
    for k in 1..=100 {
        let next = dense.apply(&rho).unwrap();
        let increment = next.momentum_spread(0).unwrap() - rho.momentum_spread(0).unwrap();
        assert!((spread[k] - spread[k - 1] - increment).abs() < 1e-10, "step {k}");
        assert!((delta[k] - increment).abs() < 1e-10, "step {k}");
        assert!(spread[k] > spread[k - 1]);
        rho = next;
    }
    let summary = json(dir.path().join("diffuse_summary.json"));
    assert_eq!(summary["spread_nondecreasing"], true);
}

#[test]
fn diffuse_reflecting_boost_flips_mean() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "{LATTICE_1D}[channel]\nkind = \"boost_family\"\ngamma = [0]\nmode = [\"reflecting\"]\n\
         [state]\nkind = \"superposition\"\nterms = [{{ re = 0.6, n = [1] }}, {{ re = 0.8, n = [2] }}]\n[run]\nn_steps = 6\n"
    );
    let cfg = write_config(dir.path(), "r.toml", &body);
    assert_eq!(run(&["diffuse"], &cfg, dir.path()).status.code(), Some(0));
    let (h, rows) = csv(dir.path().join("diffuse.csv"));
    let mean = column(&h, &rows, "mean_p_0");
    let spread = column(&h, &rows, "spread_p_0");
    // ⟨p⟩ = 0.36·1 + 0.64·2
    assert!((mean[0] - 1.64).abs() < 1e-12);
    for k in 1..mean.len() {
        assert!((mean[k] + mean[k - 1]).abs() < 1e-12);
        assert!((spread[k] - spread[0]).abs() < 1e-12);
    }
    assert_eq!(json(dir.path().join("diffuse_summary.json"))["class"], "PureBoost");
}

#[test]
fn theorem_scan_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let cfg =
        write_config(dir.path(), "e.toml", &format!("{LATTICE_1D}[run]\nn_momentum_diagonal = 0\nn_diffusive = 0\n"));
    assert_eq!(run(&["theorem-scan"], &cfg, &dir.path().join("empty")).status.code(), Some(0));
    let report = json(dir.path().join("empty/theorem_scan.json"));
    assert_eq!(report["misclassifications"], 0);
    assert_eq!(report["channels"].as_array().unwrap().len(), 0);
    assert_eq!(fs::read_to_string(dir.path().join("empty/theorem_scan.csv")).unwrap().lines().count(), 1);

    let cfg = write_config(
        dir.path(),
        "s.toml",
        &format!("{LATTICE_1D}[run]\nseed = 7\nn_momentum_diagonal = 6\nn_diffusive = 6\n"),
    );
    assert_eq!(run(&["theorem-scan"], &cfg, &dir.path().join("fine")).status.code(), Some(0));
    let report = json(dir.path().join("fine/theorem_scan.json"));
    assert_eq!(report["warnings"].as_array().unwrap().len(), 0);
    let text = fs::read_to_string(dir.path().join("fine/theorem_scan.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "channel_id,state_id,axis,d,D,delta,class");
    assert_eq!(lines.count(), 12 * report["n_probes"].as_u64().unwrap() as usize);

    let coarse = run(&["theorem-scan", "--tol", "0.5"], &cfg, &dir.path().join("coarse"));
    let report = json(dir.path().join("coarse/theorem_scan.json"));
    assert!(!report["warnings"].as_array().unwrap().is_empty());
    assert_eq!(report["tol"], 0.5);
    let misclassified = report["misclassifications"].as_u64().unwrap();
    assert_eq!(coarse.status.code(), Some(if misclassified == 0 { 0 } else { 1 }));
}

#[test]
fn lindblad_zero_generator_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{LATTICE_1D}[lindblad]\nkind = \"zero\"\n[state]\nkind = \"random\"\nrank = 2\n[run]\nt_final = 0.5\ndt = 0.1\n");
    let cfg = write_config(dir.path(), "z.toml", &body);
    assert_eq!(run(&["lindblad-evolve"], &cfg, dir.path()).status.code(), Some(0));
    let (h, rows) = csv(dir.path().join("trajectory.csv"));
    assert_eq!(h, ["t", "trace", "min_eig", "mean_p_0", "spread_p_0"]);
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert_eq!(&r[1..], &rows[0][1..]);
    }
    let summary = json(dir.path().join("lindblad_summary.json"));
    assert_eq!(summary["momentum_diagonal"], true);
    assert_eq!(summary["max_spread_drift"], 0.0);
}

#[test]
fn unravel_writes_outcome_log_and_state() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "{LATTICE_1D}[channel]\nkind = \"grw\"\nr_c = 0.8\n[state]\nkind = \"plane_wave\"\nn = [0]\n\
         [run]\nn_steps = 2\nn_trajectories = 300\nlog_outcomes = true\nmax_trace_distance = 0.5\n"
    );
    let cfg = write_config(dir.path(), "u.toml", &body);
    let out = run(&["unravel"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let log = fs::read_to_string(dir.path().join("outcomes.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next().unwrap(), "trajectory,step,k,q_0");
    assert_eq!(lines.count(), 600);
    let state = io::load_density(dir.path().join("unravel_state.json")).unwrap();
    assert!((state.trace().re - 1.0).abs() < 1e-12);
    let report = json(dir.path().join("unravel.json"));
    assert!(report["distance_to_exact"].as_f64().unwrap() <= 0.5);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "{LATTICE_1D}[channel]\nkind = \"grw\"\nr_c = 0.8\n[state]\nkind = \"random\"\nrank = 2\n[run]\nn_trajectories = 50\nmax_trace_distance = 2.0\n"
    );
    let cfg = write_config(dir.path(), "u.toml", &body);
    run(&["unravel"], &cfg, &dir.path().join("a"));
    run(&["unravel", "--seed", "0"], &cfg, &dir.path().join("b"));
    run(&["unravel", "--seed", "9"], &cfg, &dir.path().join("c"));
    let read = |d: &str| fs::read(dir.path().join(d).join("unravel_state.json")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}
