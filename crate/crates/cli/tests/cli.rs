use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = "\
[objective]
spec = cosine_well:a=1,b=1,d=1
[split]
spread = 0.5
[graph]
n_agents = 4
spec = erdos_renyi:p=0.5
[run]
steps = 500
stride = 50
dense_window = 5
initial = 1.5
n_runs = 3
[seeds]
master_seed = 5
[metrics]
checkpoints = 250, 500
functions = one; bump
fit_window = 10, 500
[gibbs]
lo = -5
hi = 5
";

fn annealnet(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_annealnet"));
    cmd.args(args);
    match env_out {
        Some(p) => cmd.env("ANNEALNET_OUT", p),
        None => cmd.env_remove("ANNEALNET_OUT"),
    };
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.ini");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn validate_reports_table_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let ok = annealnet(&["validate", &cfg], None);
    assert_eq!(ok.status.code(), Some(0));
    let table = stdout(&ok);
    assert!(table.starts_with("config_hash "));
    assert!(table.contains("schedule-exponents"));

    let bad = annealnet(&["validate", &cfg, "--set", "schedule.tau_beta=0.5"], None);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).contains("FAIL"));

    let outside = annealnet(&["validate", &cfg, "--set", "gibbs.lo=1"], None);
    assert_eq!(outside.status.code(), Some(1));

    let json = annealnet(&["validate", &cfg, "--json"], None);
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert!(v["rows"].as_array().unwrap().len() > 5);
}

#[test]
fn malformed_config_reports_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[run]\nsteps = 10\nbogus = 1\n");
    let o = annealnet(&["validate", &cfg], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
    let missing = annealnet(&["validate", "/nonexistent/exp.ini"], None);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn run_is_reproducible_and_report_matches() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(
        annealnet(&["run", &cfg, "--out", a.to_str().unwrap()], None)
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        annealnet(
            &[
                "run",
                &cfg,
                "--out",
                b.to_str().unwrap(),
                "--set",
                "run.parallelism=3"
            ],
            None
        )
        .status
        .code(),
        Some(0)
    );
    let files = [
        "manifest.json",
        "aggregate.csv",
        "summary.json",
        "runs/run_0000.csv",
        "runs/run_0002.json",
    ];
    for f in files {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    let hash = manifest["config_hash"].as_str().unwrap().to_string();
    for f in ["aggregate.csv", "runs/run_0001.csv"] {
        assert!(fs::read_to_string(a.join(f))
            .unwrap()
            .starts_with(&format!("# config_hash={hash}\n")));
    }
    let timings: serde_json::Value =
        serde_json::from_slice(&fs::read(a.join("timings.json")).unwrap()).unwrap();
    assert_eq!(timings["config_hash"], hash.as_str());

    let before = fs::read(a.join("aggregate.csv")).unwrap();
    let rep = annealnet(&["report", a.to_str().unwrap()], None);
    assert_eq!(rep.status.code(), Some(0));
    assert_eq!(fs::read(a.join("aggregate.csv")).unwrap(), before);
    assert!(stdout(&rep).contains(&hash));
}

#[test]
fn report_rejects_mixed_configs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    annealnet(&["run", &cfg, "--out", a.to_str().unwrap()], None);
    annealnet(
        &[
            "run",
            &cfg,
            "--out",
            b.to_str().unwrap(),
            "--set",
            "seeds.master_seed=6",
        ],
        None,
    );
    for ext in ["json", "csv"] {
        fs::copy(
            b.join(format!("runs/run_0001.{ext}")),
            a.join(format!("runs/run_0001.{ext}")),
        )
        .unwrap();
    }
    let rep = annealnet(&["report", a.to_str().unwrap()], None);
    assert_eq!(rep.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&rep.stderr).contains("refusing to mix"));
}

#[test]
fn default_output_root_comes_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let root = tmp.path().join("root");
    let o = annealnet(&["run", &cfg], Some(&root));
    assert_eq!(o.status.code(), Some(0));
    assert!(root.join("exp").join("summary.json").exists());
}

#[test]
fn sweep_isolates_invalid_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let out = tmp.path().join("sweep");
    let o = annealnet(
        &[
            "sweep",
            &cfg,
            "--grid",
            "schedule.c_gamma=0,1",
            "--grid",
            "schedule.tau_beta=0.3,0.7",
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let table = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(
        lines[0],
        "cell,schedule.c_gamma,schedule.tau_beta,status,success_rate,consensus_slope,config_hash"
    );
    assert_eq!(lines.len(), 5);
    assert!(lines[1].contains(",ok,") && lines[3].contains(",ok,"));
    assert!(lines[2].contains("invalid") && lines[4].contains("invalid"));
    assert!(out.join("cell_0000/summary.json").exists());
    assert!(!out.join("cell_0001").exists());
}

#[test]
fn gibbs_table_rows_and_bad_bounds() {
    let o = annealnet(
        &[
            "gibbs",
            "--objective",
            "quadratic:d=1",
            "--epsilons",
            "0.4,0.2",
            "--functions",
            "one;bump",
            "--lo",
            "-2",
            "--hi",
            "2",
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# config_hash="));
    assert_eq!(lines[1], "epsilon,f_name,value");
    assert_eq!(lines.len(), 2 + 6);
    assert!(lines.contains(&"0,bump,1"));

    let bad = annealnet(
        &[
            "gibbs",
            "--objective",
            "quadratic:d=1",
            "--epsilons",
            "0.2",
            "--lo",
            "1",
            "--hi",
            "2",
        ],
        None,
    );
    assert_eq!(bad.status.code(), Some(1));
}
