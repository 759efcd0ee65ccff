use std::path::Path;
use std::process::{Command, Output};

fn hho(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hho")).args(args).output().unwrap()
}

fn run_into(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    hho(&args)
}

#[test]
fn csv_has_the_documented_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_into(dir.path(), &["--benchmark", "lshape", "--k", "2", "--mode", "adaptive", "--nu", "0.4999", "--max-ndof", "3000"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "level,ndof,eta,err_sigma,err_l2,eff_index,rate_eta,rate_err");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(rows.len() >= 2);
    let mut last_ndof = 0;
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row.len(), 8);
        assert_eq!(row[0].parse::<usize>().unwrap(), i);
        let ndof: usize = row[1].parse().unwrap();
        assert!(ndof > last_ndof && ndof <= 3000);
        last_ndof = ndof;
        for v in &row[2..6] {
            let x: f64 = v.parse().unwrap();
            assert!(x.is_finite() && x > 0.0);
        }
        assert_eq!(row[6].is_empty(), i == 0);
        assert_eq!(row[7].is_empty(), i == 0);
    }
}

#[test]
fn json_mirrors_csv_and_echoes_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_into(dir.path(), &["--benchmark", "square", "--k", "1", "--mode", "uniform", "--levels", "3", "--lambda", "2", "--mu", "1"]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("history.json")).unwrap()).unwrap();
    assert_eq!(json["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(json["config"]["benchmark"], "square");
    assert_eq!(json["config"]["material"]["lame"]["lambda"], 2.0);
    assert_eq!(json["config"]["variant"], "classic");
    let csv = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
    let levels = json["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 3);
    for (row, level) in csv.lines().skip(1).zip(levels) {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells[1].parse::<u64>().unwrap(), level["ndof"].as_u64().unwrap());
        let eta: f64 = cells[2].parse().unwrap();
        assert!((eta - level["eta"].as_f64().unwrap()).abs() <= 1e-10 * eta);
    }
    assert!(dir.path().join("final_mesh.msh").exists());
}

#[test]
fn csv_output_is_byte_stable() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["--benchmark", "lshape", "--k", "1", "--max-ndof", "4000"];
    assert!(run_into(a.path(), &args).status.success());
    assert!(run_into(b.path(), &args).status.success());
    let read = |d: &Path| std::fs::read(d.join("history.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn svg_artifacts_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_into(dir.path(), &["--benchmark", "cooks", "--mode", "uniform", "--levels", "3", "--svg"]);
    assert!(out.status.success());
    for name in ["convergence.svg", "mesh.svg"] {
        let svg = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(svg.starts_with("<?xml") && svg.contains("version=\"1.1\"") && svg.trim_end().ends_with("</svg>"));
    }
    let mesh = std::fs::read_to_string(dir.path().join("mesh.svg")).unwrap();
    assert!(mesh.contains("<path"));
}

#[test]
fn verify_operator_suite_exits_zero() {
    let out = hho(&["verify", "--suite", "operators", "--k", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("commuting strain k=3") && text.contains("all checks passed"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["run", "--bogus"],
        vec!["run", "--k", "0"],
        vec!["run", "--theta", "1.5"],
        vec!["run", "--nu", "0.5"],
        vec!["run", "--benchmark", "circle"],
        vec!["run", "--lambda", "1"],
        vec!["verify", "--suite", "nothing"],
        vec!["frobnicate"],
    ] {
        let mut args = args.clone();
        if args[0] == "run" {
            args.extend(["--out", dir.path().to_str().unwrap()]);
        }
        assert_eq!(hho(&args).status.code(), Some(2), "{args:?}");
    }
    let out = hho(&["run", "--benchmark", "mesh=/nonexistent/file.msh", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mesh_info_reports_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lshape.msh");
    let out = hho(&["mesh-info", "--benchmark", "lshape", "--refine", "1", "--write", path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("elements          24"));
    assert!(text.contains("area              6.000000000000"));
    let again = hho(&["mesh-info", "--benchmark", &format!("mesh={}", path.display())]);
    assert!(String::from_utf8(again.stdout).unwrap().contains("elements          24"));
}
