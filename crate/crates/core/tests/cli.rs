use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"
[grid]
half_width = 8.0
n_x = 129

[time]
n_t = 64

[solver]
schedule = [4, 16, 64]

[monte_carlo]
paths = 1200
start_half_width = 4.0
export_paths = 3
"#;

fn ospde(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_ospde"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

fn summary(dir: &Path) -> Vec<(String, bool)> {
    let mut rdr = csv::Reader::from_path(dir.join("out/summary.csv")).unwrap();
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].to_string(), r[3].parse().unwrap())
        })
        .collect()
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let out = ospde(dir.path(), "[grid]\nnx = 129\n", &["solve-linear"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nx"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    assert_eq!(
        ospde(dir.path(), SMALL, &["solve-everything"])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn schedule_beyond_the_time_step_is_refused() {
    let dir = TempDir::new().unwrap();
    let config = SMALL.replace("[4, 16, 64]", "[4, 16, 128]");
    assert_eq!(
        ospde(dir.path(), &config, &["solve-obstacle"])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn energy_check_refuses_fixtures_with_an_obstacle() {
    let dir = TempDir::new().unwrap();
    let config = format!("{SMALL}\n[run]\nseed = 1\n");
    let out = ospde(
        dir.path(),
        &config.replace("[solver]", "[solver]\nfixture = \"active\""),
        &["check-energy"],
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn solve_linear_writes_field_and_passes() {
    let dir = TempDir::new().unwrap();
    let config = SMALL.replace("[solver]", "[solver]\nfixture = \"linear\"");
    let out = ospde(dir.path(), &config, &["solve-linear"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(header(&dir.path().join("out/field.csv")), "t,x,value");
    assert_eq!(
        header(&dir.path().join("out/summary.csv")),
        "check,value,threshold,pass"
    );
    assert!(dir.path().join("out/config.toml").exists());
    assert_eq!(
        summary(dir.path()),
        vec![("semigroup-relative-error".to_string(), true)]
    );
}

#[test]
fn inactive_obstacle_has_zero_trace_pairings() {
    let dir = TempDir::new().unwrap();
    let config = SMALL.replace("[solver]", "[solver]\nfixture = \"inactive\"");
    let out = ospde(dir.path(), &config, &["solve-obstacle"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let trace = dir.path().join("out/trace.csv");
    assert_eq!(
        header(&trace),
        "n,sup_neg_part,h1_dist,skorokhod_pairing,nu_mass"
    );
    let mut rdr = csv::Reader::from_path(&trace).unwrap();
    for r in rdr.records() {
        let r = r.unwrap();
        assert_eq!(r[3].parse::<f64>().unwrap(), 0.0);
        assert_eq!(r[4].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn representation_exports_the_requested_paths() {
    let dir = TempDir::new().unwrap();
    let config = SMALL.replace("[solver]", "[solver]\nfixture = \"representation\"");
    let out = ospde(
        dir.path(),
        &config,
        &["check-representation", "--seed", "5"],
    );
    assert!(
        matches!(out.status.code(), Some(0 | 2)),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let samples = dir.path().join("out/samples.csv");
    assert_eq!(header(&samples), "path_id,t,Y,K,escaped");
    let mut rdr = csv::Reader::from_path(&samples).unwrap();
    let ids: std::collections::BTreeSet<String> =
        rdr.records().map(|r| r.unwrap()[0].to_string()).collect();
    assert_eq!(ids.len(), 3);
    assert_eq!(
        header(&dir.path().join("out/residuals.csv")),
        "s,t,mean,std_err,count"
    );
}

#[test]
fn failing_checks_are_reported_on_stderr() {
    let dir = TempDir::new().unwrap();
    let config = SMALL.replace("[solver]", "[solver]\nfixture = \"potential\"");
    let out = ospde(dir.path(), &config, &["check-energy"]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    let rows = summary(dir.path());
    assert!(!rows.is_empty());
    if rows.iter().all(|(_, pass)| *pass) {
        assert_eq!(out.status.code(), Some(0));
    } else {
        assert_eq!(out.status.code(), Some(2));
        for (check, _) in rows.iter().filter(|(_, pass)| !pass) {
            assert!(
                stderr.contains(&format!("FAIL check={check} value=")),
                "{stderr}"
            );
        }
    }
}
