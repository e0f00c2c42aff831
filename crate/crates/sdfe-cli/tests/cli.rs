use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sdfe"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(args: &[&str]) -> Value {
    let mut a = args.to_vec();
    a.extend(["--format", "json"]);
    let o = run(&a);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn summary(v: &Value, table: &str, key: &str) -> Value {
    v[table].as_array().unwrap().iter().find(|r| r["key"] == key).unwrap()["value"].clone()
}

fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn vertical_multilateral_downstream_price() {
    let o = run(&["solve", data("vertical.json").to_str().unwrap(), "--regime", "multilateral"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let line = out.lines().find(|l| l.starts_with("D ") && l.contains("0.79")).unwrap();
    assert!(line.contains("0.792893219"), "{line}");
}

#[test]
fn vertical_regimes_through_json() {
    let path = data("vertical.json");
    let p = path.to_str().unwrap();
    let price = |regime: &str| {
        let v = json(&["solve", p, "--regime", regime]);
        v["goods"].as_array().unwrap().iter().find(|r| r["good"] == "D").unwrap()["price"].as_f64().unwrap()
    };
    assert!((price("multilateral") - (3.0 - 2f64.sqrt()) / 2.0).abs() < 1e-9);
    assert!((price("unilateral-inputs") - 0.75).abs() < 1e-9);
    let local = price("local");
    assert!(0.75 < local && local < price("multilateral"), "{local}");
}

#[test]
fn vertical_local_slopes_dominate_multilateral() {
    let path = data("vertical.json");
    let slopes = |regime: &str| -> Vec<f64> {
        let v = json(&["solve", path.to_str().unwrap(), "--regime", regime]);
        v["firms"].as_array().unwrap().iter().map(|r| r["slope"].as_f64().unwrap()).collect()
    };
    let (multi, local) = (slopes("multilateral"), slopes("local"));
    assert_eq!(multi.len(), 2);
    for (l, m) in local.iter().zip(&multi) {
        assert!(l >= m, "{local:?} vs {multi:?}");
    }
}

#[test]
fn precision_flag_controls_digits() {
    let o = run(&["solve", data("vertical.json").to_str().unwrap(), "--precision", "4"]);
    let out = stdout(&o);
    assert!(out.contains("0.7929"));
    assert!(!out.contains("0.792893"));
}

#[test]
fn output_is_deterministic_and_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("out.csv");
    let path = data("two_tier.json");
    let args = ["compare", path.to_str().unwrap(), "--format", "csv"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.stdout, b.stdout);
    let mut with_file = args.to_vec();
    with_file.extend(["--output", out_path.to_str().unwrap()]);
    let c = run(&with_file);
    assert_eq!(c.status.code(), Some(0));
    assert!(c.stdout.is_empty());
    assert_eq!(std::fs::read(&out_path).unwrap(), a.stdout);
}

#[test]
fn thread_count_does_not_change_output() {
    let one = bin().args(["sweep-depth", "--N-max", "12"]).env("SDFE_THREADS", "1").output().unwrap();
    let four = bin().args(["sweep-depth", "--N-max", "12"]).env("SDFE_THREADS", "4").output().unwrap();
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, four.stdout);
    let bad = bin().args(["sweep-depth"]).env("SDFE_THREADS", "many").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn validate_exit_codes() {
    assert_eq!(run(&["validate", data("two_tier.json").to_str().unwrap()]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    // x and z each need 1.5 units of the other: the cycle gain exceeds one
    let cyclic = write(
        &dir,
        "cyclic.json",
        r#"{"goods":["y","x","z"],
            "firms":[{"name":"D","output":"y","inputs":{"x":1.0}},
                     {"name":"X1","output":"x","inputs":{"z":1.5}},
                     {"name":"X2","output":"x","inputs":{"z":1.5}},
                     {"name":"Z1","output":"z","inputs":{"x":1.5}},
                     {"name":"Z2","output":"z","inputs":{"x":1.5}}],
            "consumer":{"goods":["y"],"A":[1.0],"B_c":[[1.0]]}}"#,
    );
    let o = run(&["validate", &cyclic]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("viability failed"));
    let o = run(&["solve", &cyclic]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("viability failed"));

    // z is produced but never used or consumed
    let orphan = write(
        &dir,
        "orphan.json",
        r#"{"goods":["y","z"],
            "firms":[{"name":"Y","output":"y"},{"name":"Z","output":"z"}],
            "consumer":{"goods":["y"],"A":[1.0],"B_c":[[1.0]]}}"#,
    );
    let o = run(&["validate", &orphan]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("connectivity failed"));
}

#[test]
fn parse_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(&dir, "bad.json", "{ not json");
    assert_eq!(run(&["validate", &bad]).status.code(), Some(2));
    let unknown_good = write(
        &dir,
        "unknown.json",
        r#"{"goods":["y"],"firms":[{"name":"Y","output":"q"}],
            "consumer":{"goods":["y"],"A":[1.0],"B_c":[[1.0]]}}"#,
    );
    assert_eq!(run(&["solve", &unknown_good]).status.code(), Some(2));
    assert_eq!(run(&["validate", "/nonexistent/economy.json"]).status.code(), Some(2));
    assert_eq!(run(&["solve", data("vertical.json").to_str().unwrap(), "--regime", "bogus"]).status.code(), Some(2));
    assert_eq!(run(&["chain", "--layers", "3", "--firms", "2,2"]).status.code(), Some(2));
}

#[test]
fn not_converged_exits_3() {
    let o = run(&["solve", data("two_tier.json").to_str().unwrap(), "--max-iter", "2"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    // thresholds lie near 3, so a range ending at 2 cannot bracket them
    assert_eq!(run(&["merger", "--n1-max", "2"]).status.code(), Some(3));
}

#[test]
fn successive_monopolies_exit_4() {
    let o = run(&["solve", data("monopoly_chain.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    let o = run(&["chain", "--layers", "3", "--firms", "1", "--k", "1"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn chain_flags_equal_profits() {
    let v = json(&["chain", "--layers", "3", "--firms", "2,2,2", "--k", "1", "--regime", "multilateral"]);
    let prof = &v["profile"][0];
    assert_eq!(prof["equal_profits"], true);
    let layers = v["layers"].as_array().unwrap();
    assert_eq!(layers.len(), 3);
    for l in layers {
        assert!((l["slope"].as_f64().unwrap() - (2f64.sqrt() - 1.0)).abs() < 1e-8);
    }
}

#[test]
fn merger_reports_thresholds_and_interval() {
    let o = run(&["merger", "--k", "1", "--Bc", "1", "--n1-max", "20"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("n_*") && out.contains("n^*"));
    let v = json(&["merger", "--k", "1", "--Bc", "1", "--n1-max", "20"]);
    let lo = summary(&v, "merger", "disagree_lo").as_f64().unwrap();
    let hi = summary(&v, "merger", "disagree_hi").as_f64().unwrap();
    assert!(2.0 < lo && lo < hi && hi < 4.0, "{lo} {hi}");
    assert_eq!(summary(&v, "merger", "disagree_inside"), true);
}

#[test]
fn sweep_depth_csv_columns() {
    let o = run(&["sweep-depth", "--N-max", "30", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next().unwrap(), "N,Q_multi,Q_local,W_multi,W_local,Q_ratio,W_ratio");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 29);
    assert_eq!(rows[0][0], 2.0);
    assert!(rows.windows(2).all(|w| w[1][5] > w[0][5]), "quantity ratio should grow with depth");
}

#[test]
fn surplus_covers_every_regime() {
    let v = json(&["surplus", "--layers", "3", "--firms", "2", "--k", "1"]);
    let regimes: Vec<&str> = v["profile"].as_array().unwrap().iter().map(|r| r["regime"].as_str().unwrap()).collect();
    assert_eq!(regimes, ["multilateral", "unilateral-inputs", "unilateral-outputs", "local", "sequential-cournot"]);
    assert_eq!(v["layers"].as_array().unwrap().len(), 15);
}

#[test]
fn goods_network_centrality_matches_clearing() {
    let v = json(&["goods-network", data("two_tier.json").to_str().unwrap()]);
    assert!(summary(&v, "summary", "max_price_deviation").as_f64().unwrap() < 1e-10);
    let removed = json(&["goods-network", data("two_tier.json").to_str().unwrap(), "--remove", "X1"]);
    assert_eq!(summary(&removed, "summary", "removed_firm"), "X1");
    assert_eq!(
        run(&["goods-network", data("two_tier.json").to_str().unwrap(), "--remove", "nope"]).status.code(),
        Some(2)
    );
}

#[test]
fn substitutes_bracket_closes() {
    let v = json(&["solve-substitutes", data("substitutes.json").to_str().unwrap()]);
    assert_eq!(summary(&v, "summary", "bracket_violations"), 0);
    assert!(summary(&v, "summary", "gap").as_f64().unwrap() < 1e-8);
    for r in v["prices"].as_array().unwrap() {
        assert!((r["maximal"].as_f64().unwrap() - r["minimal"].as_f64().unwrap()).abs() < 1e-8);
    }
    // firms without substitutes data are rejected
    let o = run(&["solve-substitutes", data("vertical.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
