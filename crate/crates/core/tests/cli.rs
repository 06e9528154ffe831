use std::f64::consts::SQRT_2;
use std::process::{Command, Output};

use singlet_bell::bell::{BellModel, BellSettings};
use singlet_bell::cli::BellJson;
use singlet_bell::fockspace::{Gain, Truncation};
use singlet_bell::preselect::FilterSpec;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_singlet-bell"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn body_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

#[test]
fn bell_without_filter_at_quarter_turn() {
    let json = BellJson::from_output(&stdout(&["bell", "--g", "0.8", "--filter", "none", "--angle", "-0.7853981634"])).unwrap();
    assert!((json.b - 2.06).abs() < 0.01, "{}", json.b);
    assert_eq!(json.filter, "none");
    assert_eq!(json.delta_th, None);
}

#[test]
fn bell_with_corner_filter() {
    let json = BellJson::from_output(&stdout(&["bell", "--g", "0.8", "--filter", "corner", "--delta-th", "0"])).unwrap();
    assert!((json.b - 2.26).abs() < 0.01);
    assert!((json.beta_opt / std::f64::consts::PI + 0.17).abs() < 0.005);
    assert_eq!(json.delta_th, Some(0));
}

#[test]
fn json_round_trip_reproduces_totals() {
    let text = stdout(&["bell", "--g", "0.8", "--filter", "corner", "--delta-th", "0"]);
    let json = BellJson::from_output(&text).unwrap();
    let (v, a, b) = json.recomputed_totals();
    assert!((v - json.v).abs() < 1e-12);
    assert!((a - json.a).abs() < 1e-12);
    assert!((b - json.b).abs() < 1e-12);

    let model = BellModel::new(Gain::new(json.g).unwrap(), FilterSpec::Corner(0), &Truncation::default()).unwrap();
    let report = model.report(&BellSettings::standard(json.beta_opt)).unwrap();
    assert!((report.b_total - json.b).abs() < 1e-12);
    assert!((report.v_total - json.v).abs() < 1e-12);
}

#[test]
fn json_keys_are_exact() {
    let text = stdout(&["bell", "--g", "0.5"]);
    let body: String = text.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n");
    let value: serde_json::Value = serde_json::from_str(&body).unwrap();
    let mut keys: Vec<&str> = value.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(keys, ["A", "B", "V", "beta_opt", "delta_th", "filter", "g", "per_sector", "tail_mass"]);
}

#[test]
fn sectors_table_has_requested_rows() {
    let text = stdout(&["sectors", "--g", "0.8", "--filter", "none", "--angle", "-pi/4", "--kmax", "20"]);
    assert!(text.starts_with("# schema=v1\n# command=sectors\n"));
    assert!(text.contains("# tail_mass="));
    assert!(text.lines().any(|l| l == "k,V_k,A_k,B_k,weight"));
    let rows = body_rows(&text);
    assert_eq!(rows.len(), 21);
    assert_eq!(rows[0][0], 0.0);
    assert!((rows[0][3] - 2.0 * SQRT_2).abs() < 1e-9);
    assert_eq!(rows[20][0], 20.0);
}

#[test]
fn scan_angle_columns() {
    let text = stdout(&["scan-angle", "--g", "0.3", "--points", "9"]);
    let rows = body_rows(&text);
    assert_eq!(rows.len(), 9);
    for r in &rows {
        assert_eq!(r.len(), 4);
        assert!((r[1] + r[2] - r[3]).abs() < 1e-12);
    }
}

#[test]
fn scan_gain_rows() {
    let text = stdout(&["scan-gain", "--g-min", "0.1", "--g-max", "0.5", "--steps", "3"]);
    let rows = body_rows(&text);
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| (r[1] + std::f64::consts::FRAC_PI_4).abs() < 1e-3));
}

#[test]
fn losses_grid_order_and_header() {
    let text = stdout(&["losses", "--g", "0.8", "--lambda-a", "0,0.1", "--lambda-b", "0,0.2"]);
    assert!(text.contains("# vacuum_convention=operator-as-written"));
    let rows = body_rows(&text);
    let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r[0], r[1])).collect();
    assert_eq!(pairs, [(0.0, 0.0), (0.0, 0.2), (0.1, 0.0), (0.1, 0.2)]);
    assert!((rows[0][3] - 2.26).abs() < 0.01);
}

#[test]
fn output_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sectors.csv");
    let args = ["sectors", "--g", "0.4", "--kmax", "4"];
    let direct = stdout(&args);
    let mut with_file = args.to_vec();
    with_file.extend(["--output", path.to_str().unwrap()]);
    stdout(&with_file);
    assert_eq!(std::fs::read_to_string(&path).unwrap(), direct);
}

#[test]
fn config_errors_exit_with_two() {
    for args in [
        vec!["bell", "--g", "-1"],
        vec!["bell", "--epsilon", "2"],
        vec!["losses", "--lambda-a", "1.5"],
        vec!["bell", "--angle", "pi/"],
        vec!["bell", "--filter", "triangle"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(!err.trim().is_empty());
    }
    let out = run(&["bell", "--g", "-1"]);
    assert_eq!(String::from_utf8_lossy(&out.stderr).trim().lines().count(), 1);
}

#[test]
fn degenerate_filter_exits_with_three() {
    let out = run(&["bell", "--g", "0.8", "--filter", "mdf", "--delta-th", "5000"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn csv_and_json_formats_agree() {
    let csv = stdout(&["sectors", "--g", "0.6", "--kmax", "3", "--format", "csv"]);
    let json = stdout(&["sectors", "--g", "0.6", "--kmax", "3", "--format", "json"]);
    let body: String = json.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n");
    let value: serde_json::Value = serde_json::from_str(&body).unwrap();
    let rows = body_rows(&csv);
    let list = value["per_sector"].as_array().unwrap();
    assert_eq!(list.len(), rows.len());
}
