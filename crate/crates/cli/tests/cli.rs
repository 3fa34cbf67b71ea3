use std::process::{Command, Output};

use clap::ValueEnum;
use kingman_cli::{run, ConfigOverrides, Experiment, ExperimentConfig};
use serde_json::Value;

fn kingman(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kingman"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is a JSON report")
}

fn without_wall_time(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("wall_time_s");
    v
}

#[test]
fn single_label_gives_singleton_blocks() {
    let out = kingman(&[
        "block-size-dist",
        "--n",
        "1",
        "--d",
        "1",
        "--replicates",
        "100",
        "--seed",
        "7",
    ]);
    assert!(out.status.success());
    let r = report(&out);
    assert_eq!(r["results"]["all_singletons"], true);
    assert_eq!(r["results"]["max_block_size"], 1);
    assert_eq!(r["results"]["blocks"], 100);
}

#[test]
fn oracle_check_passes_at_n3() {
    let out = kingman(&[
        "oracle-check",
        "--n",
        "3",
        "--d",
        "1",
        "--replicates",
        "100000",
        "--seed",
        "1",
    ]);
    assert!(out.status.success());
    let r = report(&out);
    let tests = r["tests"].as_array().unwrap();
    let chi = tests
        .iter()
        .find(|t| t["name"] == "chi_square_vs_generator_oracle")
        .unwrap();
    assert!(chi["p_value"].as_f64().unwrap() > 0.01, "{chi}");
    assert_eq!(r["seed"], 1);
    assert_eq!(r["params"]["replicates"], 100000);
}

#[test]
fn reports_are_deterministic_apart_from_wall_time() {
    let args = [
        "cross-validate-samplers",
        "--n",
        "10",
        "--replicates",
        "2000",
        "--seed",
        "3",
    ];
    let a = kingman(&args);
    let b = kingman(&args);
    assert_eq!(without_wall_time(report(&a)), without_wall_time(report(&b)));
    let strip = |o: &Output| {
        String::from_utf8(o.stdout.clone())
            .unwrap()
            .lines()
            .filter(|l| !l.contains("wall_time_s"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn csv_goes_to_out_with_report_alongside() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sizes.csv");
    let out = kingman(&[
        "block-size-dist",
        "--n",
        "30",
        "--replicates",
        "50",
        "--format",
        "csv",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let mut rdr = csv::Reader::from_path(&path).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["size", "count", "frequency", "progeny_pmf"]
    );
    let total: u64 = rdr
        .records()
        .map(|r| r.unwrap()[1].parse::<u64>().unwrap())
        .sum();
    let r: Value = serde_json::from_str(
        &std::fs::read_to_string(kingman_cli::report_path_for(&path)).unwrap(),
    )
    .unwrap();
    assert_eq!(r["results"]["blocks"].as_u64().unwrap(), total);
}

#[test]
fn failed_check_sets_exit_status() {
    // A path this short cannot match the stationary occupancy.
    let out = kingman(&["immigration-stationary", "--n", "20", "--horizon", "0.01"]);
    assert_eq!(out.status.code(), Some(1));
    let r = report(&out);
    assert!(r["tests"]
        .as_array()
        .unwrap()
        .iter()
        .any(|t| t["pass"] == false));
}

#[test]
fn invalid_config_is_an_error() {
    for args in [
        &["oracle-check", "--n", "9"][..],
        &["erosion-stationary", "--d", "0"],
        &["erosion-stationary", "--replicates", "0"],
    ] {
        let out = kingman(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("invalid config"));
    }
    assert!(!kingman(&["no-such-experiment"]).status.success());
}

#[test]
fn experiment_names_round_trip() {
    for e in Experiment::value_variants() {
        assert_eq!(e.name().parse::<Experiment>().unwrap(), *e);
        assert_eq!(serde_json::to_value(e).unwrap(), e.name());
    }
    assert!("oracle".parse::<Experiment>().is_err());
}

#[test]
fn report_embeds_resolved_config() {
    let c = ExperimentConfig::resolve(
        Experiment::FrequenciesDiffusion,
        ConfigOverrides {
            replicates: Some(4),
            k: Some(3),
            dt: Some(1e-2),
            d: Some(2.0),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(c.horizon, 20.0);
    let r = run(&c).unwrap();
    let v = serde_json::to_value(&r).unwrap();
    assert_eq!(v["params"]["K"], 3);
    assert_eq!(v["params"]["d"], 2.0);
    assert_eq!(v["experiment"], "frequencies-diffusion");
    assert!(r.tests.iter().any(|t| t.name == "mass_defect" && t.pass));
    assert_eq!(r.table.columns, ["rank", "mean", "stderr"]);
    assert_eq!(r.table.rows.len(), 3);
}
