use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::Command;

use adalezo::experiment::{
    parse_config, parse_config_str, run_experiment, RunMode, BREAKDOWN_HEADER, CORRELATION_HEADER, CURVE_HEADER,
    FAILURES_HEADER, SUMMARY_HEADER,
};
use adalezo::validate::{CLAIMS, VALIDATION_HEADER};
use adalezo::Error;

const BIN: &str = env!("CARGO_BIN_EXE_adalezo");

fn two_methods(out: &Path) -> String {
    format!(
        r#"
output_dir = "{}"
seeds = [1, 2, 3]

[objective]
kind = "quadratic"
scales = [1.0, 2.0, 0.5, 4.0]
sizes = [5, 5, 5, 5]

[[runs]]
method = "mezo"
steps = 50
eta = 0.01
eval_every = 5

[[runs]]
method = "adalezo"
steps = 50
eta = 0.01
eval_every = 5
record_probs = true
record_oracle_corr = true
"#,
        out.display()
    )
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect();
    (header, rows)
}

fn strs(h: &[&str]) -> Vec<String> {
    h.iter().map(|s| s.to_string()).collect()
}

#[test]
fn rho_out_of_range_names_the_invariant() {
    let text = two_methods(Path::new("out")).replace("[[runs]]\nmethod = \"mezo\"", "[bandit]\nrho = 1.5\n\n[[runs]]\nmethod = \"mezo\"");
    let err = parse_config_str(&text).unwrap_err().to_string();
    assert!(err.contains("ρ ∈ (0,1]"), "{err}");
}

#[test]
fn missing_objective_is_an_error() {
    let text = "seeds = [1]\n[[runs]]\nmethod = \"adalezo\"\nsteps = 10\neta = 0.1\n";
    let err = parse_config_str(text).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    assert!(err.to_string().contains("objective"));
}

#[test]
fn structural_invariants() {
    let base = two_methods(Path::new("out"));
    assert!(parse_config_str(&base.replace("seeds = [1, 2, 3]", "seeds = []")).is_err());
    assert!(parse_config_str(&base.replace("kind = \"quadratic\"", "kind = \"cubic\"")).is_err());
    assert!(parse_config_str(&base.replace("method = \"adalezo\"", "method = \"mezo\"")).is_err(), "duplicate names");
    assert!(parse_config_str(&base.replace("seeds = [1, 2, 3]", "seeds = [1]\nvalidations = [\"nope\"]")).is_err());
    assert!(parse_config_str(&base.replace("eta = 0.01", "eta = -1.0")).is_err());
    let all = parse_config_str(&base.replace("seeds = [1, 2, 3]", "seeds = [1]\nvalidations = [\"all\"]")).unwrap();
    assert_eq!(all.validations.len(), CLAIMS.len());
}

#[test]
fn unknown_keys_are_all_reported() {
    let text = two_methods(Path::new("out")).replace("sizes = [5, 5, 5, 5]", "sizes = [5, 5, 5, 5]\nwidth = 3") + "[bandit]\ntemp = 1\n";
    match parse_config_str(&text) {
        Err(Error::UnknownKeys(keys)) => assert_eq!(keys, vec!["objective.width", "bandit.temp"]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn artifacts_follow_the_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("exp.toml");
    fs::write(&cfg_path, two_methods(&dir.path().join("out"))).unwrap();
    let cfg = parse_config(&cfg_path).unwrap();
    let outcome = run_experiment(&cfg, RunMode::default()).unwrap();
    assert_eq!(outcome.exit_code(), 0);
    let out = dir.path().join("out");

    let curves: BTreeSet<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("curve_"))
        .collect();
    let expected: BTreeSet<String> = ["mezo", "adalezo"]
        .iter()
        .flat_map(|m| (1..=3).map(move |s| format!("curve_{m}_{s}.csv")))
        .collect();
    assert_eq!(curves, expected);

    let (h, rows) = read_csv(&out.join("curve_mezo_1.csv"));
    assert_eq!(h, strs(&CURVE_HEADER));
    assert_eq!(rows.len(), 50);
    assert!(!rows[4][2].is_empty());
    assert!(rows[3][2].is_empty());
    let (h, rows) = read_csv(&out.join("curve_adalezo_2.csv"));
    assert_eq!(h.len(), CURVE_HEADER.len() + 4);
    assert_eq!(h[6..], strs(&["p_0", "p_1", "p_2", "p_3"]));
    let p_sum: f64 = rows[10][6..].iter().map(|x| x.parse::<f64>().unwrap()).sum();
    assert!((p_sum - 1.0).abs() < 1e-12);

    let (h, rows) = read_csv(&out.join("summary.csv"));
    assert_eq!(h, strs(&SUMMARY_HEADER));
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert_eq!(r[3], "ok");
        let seed = &r[2];
        let mezo = rows.iter().find(|x| x[0] == "mezo" && &x[2] == seed).unwrap();
        let expect = mezo[10].parse::<f64>().unwrap() / r[10].parse::<f64>().unwrap();
        let got = r[11].parse::<f64>().unwrap();
        assert!((got - expect).abs() <= 1e-12 * expect, "{got} vs {expect}");
    }

    let (h, rows) = read_csv(&out.join("breakdown.csv"));
    assert_eq!(h, strs(&BREAKDOWN_HEADER));
    assert_eq!(rows.len(), 6);
    for r in &rows {
        let s: f64 = r[5..8].iter().map(|x| x.parse::<f64>().unwrap()).sum();
        assert!((s - 1.0).abs() <= 1e-9);
    }

    let (h, rows) = read_csv(&out.join("correlation.csv"));
    assert_eq!(h, strs(&CORRELATION_HEADER));
    assert_eq!(rows.len(), 3 * 50);
    // uniform initial policy: instantaneous r undefined at step 1
    assert!(rows[0][3].is_empty());

    let (h, rows) = read_csv(&out.join("failures.csv"));
    assert_eq!(h, strs(&FAILURES_HEADER));
    assert!(rows.is_empty());
}

/// Drops the columns named in `timing` from a CSV's text.
fn without_columns(path: &Path, timing: &[&str]) -> Vec<Vec<String>> {
    let (h, rows) = read_csv(path);
    let keep: Vec<usize> = (0..h.len()).filter(|&i| !timing.contains(&h[i].as_str())).collect();
    rows.into_iter()
        .map(|r| keep.iter().map(|&i| r[i].clone()).collect())
        .collect()
}

#[test]
fn reruns_match_except_wall_clock() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let mut cfg = parse_config_str(&two_methods(&out)).unwrap();
        cfg.workers = if name == "a" { 1 } else { 3 };
        run_experiment(&cfg, RunMode::default()).unwrap();
        out
    };
    let (a, b) = (run("a"), run("b"));
    let timing = [
        "wall_clock_s",
        "t_perturb",
        "t_forward",
        "t_update",
        "mean_t_perturb",
        "mean_t_forward",
        "mean_t_update",
        "total_time_s",
        "speedup_vs_mezo",
    ];
    for f in ["curve_mezo_1.csv", "curve_adalezo_3.csv", "summary.csv"] {
        assert_eq!(without_columns(&a.join(f), &timing), without_columns(&b.join(f), &timing), "{f}");
    }
    for f in ["correlation.csv", "failures.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    fs::write(&good, two_methods(&dir.path().join("good_out"))).unwrap();
    let st = Command::new(BIN).arg(&good).status().unwrap();
    assert_eq!(st.code(), Some(0));

    // diverges: loss overflows and the run aborts
    let bad_run = dir.path().join("diverge.toml");
    fs::write(
        &bad_run,
        r#"
seeds = [5]
[objective]
kind = "quadratic"
scales = [1e300]
sizes = [1]
[[runs]]
method = "mezo"
steps = 50
eta = 1e-297
eval_every = 1
"#,
    )
    .unwrap();
    let out_dir = dir.path().join("diverge_out");
    let st = Command::new(BIN).arg(&bad_run).arg("--output-dir").arg(&out_dir).status().unwrap();
    assert_eq!(st.code(), Some(1));
    let (_, rows) = read_csv(&out_dir.join("failures.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "run");
    let (_, summary) = read_csv(&out_dir.join("summary.csv"));
    assert_eq!(summary[0][3], "aborted");

    let broken = dir.path().join("broken.toml");
    fs::write(&broken, "seeds = [1]\n").unwrap();
    let out = Command::new(BIN).arg(&broken).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("objective"));

    assert_eq!(Command::new(BIN).status().unwrap().code(), Some(2), "config path is required");
}

#[test]
fn list_claims_prints_every_id() {
    let out = Command::new(BIN).arg("--list-claims").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let ids: Vec<&str> = text.lines().map(|l| l.split('\t').next().unwrap()).collect();
    let expected: Vec<&str> = CLAIMS.iter().map(|(id, _)| *id).collect();
    assert_eq!(ids, expected);
}

#[test]
fn validate_only_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("v.toml");
    let text = two_methods(Path::new("vout")).replace(
        "seeds = [1, 2, 3]",
        "seeds = [1]\nvalidations = [\"restore\", \"degeneracy_single_layer\", \"variance_optimality\"]",
    );
    fs::write(&cfg_path, text).unwrap();
    let st = Command::new(BIN)
        .arg(&cfg_path)
        .arg("--validate-only")
        .arg("--workers")
        .arg("2")
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let out = dir.path().join("vout");
    assert!(!out.join("summary.csv").exists());
    let (h, rows) = read_csv(&out.join("validation.csv"));
    assert_eq!(h, strs(&VALIDATION_HEADER));
    assert_eq!(rows.len(), 102);
    assert!(rows.iter().all(|r| r[5] == "true"));
}
