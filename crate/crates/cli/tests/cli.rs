use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pathint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pathint"))
        .args(args)
        .env_remove("PATHINT_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn json_stdout(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn error_line(out: &Output) -> Value {
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(text.trim_end().lines().count(), 1, "one error line: {text}");
    serde_json::from_str(text.trim_end()).expect("error line is JSON")
}

const SMALL_PIMC: [&str; 9] =
    ["pimc", "--n-sweeps", "1500", "--n-thermalization", "300", "--n-chains", "2", "--max-separation", "10"];

#[test]
fn euclidean_ho_propagator_value() {
    let out = pathint(&[
        "propagator", "--potential", "harmonic", "--m", "1", "--omega", "1", "--beta", "1", "--q", "0", "--qp", "0",
        "--signature", "euclidean",
    ]);
    let v = json_stdout(&out);
    let exact = (1.0 / (2.0 * std::f64::consts::PI * 1f64.sinh())).sqrt();
    let got = v["result"]["value"].as_f64().unwrap();
    assert!((got - exact).abs() < 1e-14, "{got} vs {exact}");
    assert!((got - 0.368).abs() < 1e-4);
    assert_eq!(v["manifest"]["command"], "propagator");
    assert_eq!(v["manifest"]["schema_version"], 1);
    assert_eq!(v["manifest"]["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["manifest"]["config"]["signature"], "euclidean");
}

#[test]
fn first_order_wick_multiplicities() {
    let v = json_stdout(&pathint(&["wick", "--report", "first-order"]));
    let r = &v["result"];
    assert_eq!(r["connected_multiplicity"], 576);
    assert_eq!(r["disconnected_multiplicity"], 144);
    assert_eq!(r["total_multiplicity"], 720);
    let coeffs: Vec<&str> = r["terms"].as_array().unwrap().iter().map(|t| t["coefficient"].as_str().unwrap()).collect();
    assert!(coeffs.contains(&"1/2") && coeffs.contains(&"1/8"), "{coeffs:?}");
}

#[test]
fn missing_config_file_exits_one() {
    let out = pathint(&["pimc", "--config", "missing.cfg"]);
    assert_eq!(out.status.code(), Some(1));
    let e = error_line(&out);
    assert_eq!(e["error"], "io");
    assert!(e["message"].as_str().unwrap().contains("missing.cfg"));
    assert!(out.stdout.is_empty());
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_cfg = dir.path().join("bad.cfg");
    fs::write(&bad_cfg, "beta = 2\nbetta = 3\n").unwrap();
    let bad_cfg = bad_cfg.to_str().unwrap();
    for args in [
        vec!["nonsense"],
        vec!["pimc", "--betta", "3"],
        vec!["pimc", "--config", bad_cfg],
        vec!["propagator", "--beta", "one"],
        vec!["propagator", "--method", "spline"],
        vec!["propagator", "--potential", "free", "--omega", "2"],
        vec!["spectrum", "--potential", "double-well", "--a", "2"],
        vec!["topology", "--format", "xml"],
        vec![],
    ] {
        let out = pathint(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert_eq!(error_line(&out)["error"], "usage", "{args:?}");
    }
}

#[test]
fn domain_errors_exit_one_with_module_text() {
    for (args, kind) in [
        (vec!["propagator", "--beta", "-1"], "domain"),
        (vec!["propagator", "--signature", "real-time", "--t", "3.141592653589793"], "caustic"),
        (vec!["topology", "--report", "statistics", "--dimension", "4"], "unsupported"),
        (vec!["topology", "--report", "statistics", "--dimension", "3"], ""),
    ] {
        let out = pathint(&args);
        if kind.is_empty() {
            assert!(out.status.success());
            continue;
        }
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert_eq!(error_line(&out)["error"], kind, "{args:?}");
    }
}

#[test]
fn help_and_version_exit_zero() {
    assert!(pathint(&["--help"]).status.success());
    assert!(pathint(&["--version"]).status.success());
    let out = pathint(&["pimc", "--help"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("--n-sweeps"));
}

#[test]
fn pimc_output_is_byte_identical_for_equal_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, file: &str| {
        let path = dir.path().join(file);
        let mut args = SMALL_PIMC.to_vec();
        args.extend(["--seed", seed, "--output", path.to_str().unwrap()]);
        let out = pathint(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(out.stdout.is_empty());
        fs::read(path).unwrap()
    };
    let a = run("11", "a.json");
    let b = run("11", "b.json");
    let c = run("12", "c.json");
    assert_eq!(a, b);
    assert_ne!(a, c);
    let v: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["manifest"]["seed"], 11);
    assert!(v["manifest"]["run"]["acceptance_rate"].as_f64().unwrap() > 0.0);
    assert!(v["manifest"]["run"]["warnings"].is_array());
    assert!(v["result"]["observables"]["q2"]["std_error"].as_f64().unwrap() > 0.0);
    assert_eq!(v["result"]["correlator"].as_array().unwrap().len(), 11);
}

#[test]
fn manifest_argv_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# harmonic chain\nn_sweeps = 1500\nn-thermalization = 300\nn_chains = 2\nseed = 4\nbeta = 8\n").unwrap();
    let first = pathint(&["pimc", "--config", cfg.to_str().unwrap(), "--beta", "6", "--max-separation", "5"]);
    let v = json_stdout(&first);
    let config = &v["manifest"]["config"];
    assert_eq!(config["beta"], "6", "flag overrides file");
    assert_eq!(config["n-sweeps"], "1500");
    assert_eq!(config["potential"], "harmonic", "defaults are recorded");
    let argv: Vec<String> =
        v["manifest"]["argv"].as_array().unwrap().iter().map(|a| a.as_str().unwrap().to_string()).collect();
    assert_eq!(argv[0], "pathint");
    let rest: Vec<&str> = argv[1..].iter().map(String::as_str).collect();
    let second = pathint(&rest);
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn config_hash_tracks_resolved_config() {
    let hash = |args: &[&str]| json_stdout(&pathint(args))["manifest"]["config_hash"].as_str().unwrap().to_string();
    let a = hash(&["perturb"]);
    assert_eq!(a, hash(&["perturb", "--lambda", "0.1"]));
    assert_ne!(a, hash(&["perturb", "--lambda", "0.2"]));
    assert_eq!(a.len(), 64);
}

#[test]
fn output_directory_from_environment() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let run = |extra: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_pathint"))
            .arg("perturb")
            .args(extra)
            .env("PATHINT_OUTPUT_DIR", env_dir.path())
            .output()
            .unwrap();
        assert!(out.status.success());
        assert!(out.stdout.is_empty());
    };
    run(&[]);
    let v: Value = serde_json::from_slice(&fs::read(env_dir.path().join("perturb.json")).unwrap()).unwrap();
    assert!((v["result"]["formula"]["value"].as_f64().unwrap() - 0.503125).abs() < 1e-12);

    run(&["--output", "named.json"]);
    assert!(env_dir.path().join("named.json").exists());

    run(&["--output-dir", flag_dir.path().to_str().unwrap()]);
    assert!(flag_dir.path().join("perturb.json").exists());
}

fn csv_header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn csv_columns_and_side_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let pimc_csv = dir.path().join("pimc.csv");
    let mut args = SMALL_PIMC.to_vec();
    args.extend(["--format", "csv", "--output", pimc_csv.to_str().unwrap()]);
    assert!(pathint(&args).status.success());
    assert_eq!(csv_header(&pimc_csv), "observable,tau,mean,std_error,n_effective");
    let text = fs::read_to_string(&pimc_csv).unwrap();
    assert!(text.lines().any(|l| l.starts_with("q2,,")));
    assert!(text.lines().any(|l| l.starts_with("correlator,0.0,")));
    let manifest: Value = serde_json::from_slice(&fs::read(dir.path().join("pimc.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "pimc");

    let perturb_csv = dir.path().join("perturb.csv");
    assert!(pathint(&["perturb", "--format", "csv", "--output", perturb_csv.to_str().unwrap()]).status.success());
    assert_eq!(csv_header(&perturb_csv), "route,value,order,error_bar");

    let out = pathint(&["topology", "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("key,value\n"));
    let manifest: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(manifest["command"], "topology");
}

#[test]
fn fixed_digit_output_round_trips() {
    let short = json_stdout(&pathint(&["spectrum", "--n-states", "3"]));
    let fixed_out = pathint(&["spectrum", "--n-states", "3", "--digits", "17"]);
    let text = String::from_utf8(fixed_out.stdout.clone()).unwrap();
    assert!(text.contains("e-1"), "scientific notation expected");
    let fixed = json_stdout(&fixed_out);
    assert_eq!(short["result"]["eigenvalues"], fixed["result"]["eigenvalues"]);
    let e0 = fixed["result"]["eigenvalues"][0].as_f64().unwrap();
    assert!((e0 - 0.5).abs() < 1e-8);
}

#[test]
fn every_subcommand_runs_with_defaults() {
    for cmd in ["propagator", "partition", "green", "wick", "perturb", "spectrum", "instanton", "topology"] {
        let args: Vec<&str> = match cmd {
            "green" => vec![cmd, "--tau", "0.2", "--taup", "0.5", "--beta", "1"],
            _ => vec![cmd],
        };
        let v = json_stdout(&pathint(&args));
        assert_eq!(v["manifest"]["command"], cmd);
        assert!(v["result"].is_object());
    }
}
