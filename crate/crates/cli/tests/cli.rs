use std::fs;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_robin-ddm"))
}

#[test]
fn smoke_run_writes_artifacts_and_compares() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("smoke.toml");
    fs::write(
        &config,
        "[problem]\nname = \"single_domain\"\n\n[training]\nepochs = 200\nouter_iterations = 1\n\n[points]\ninterior = 128\nboundary = 16\n",
    )
    .unwrap();
    let out = dir.path().join("out dir");
    let status = bin()
        .arg("run")
        .arg(&config)
        .arg("--seed")
        .arg("3")
        .arg("--out")
        .arg(&out)
        .args(["--override", "run.eval_resolution=21"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    for f in ["report.csv", "fields.csv", "summary.txt", "config.resolved.toml"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let resolved = fs::read_to_string(out.join("config.resolved.toml")).unwrap();
    assert!(resolved.contains("seed = 3"));

    let report = out.join("report.csv");
    let cmp = bin().arg("compare").arg(&report).arg(&report).output().unwrap();
    assert_eq!(cmp.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&cmp.stdout).contains("tie"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    fs::write(&config, "[problem]\nname = \"single_domain\"\nbogus = 1\n").unwrap();
    let out = bin().arg("run").arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.toml:3"));

    let missing = bin().arg("run").arg(dir.path().join("nope.toml")).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn divergence_exits_with_three_and_keeps_history() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("boom.toml");
    let out = dir.path().join("boom");
    fs::write(
        &config,
        "[problem]\nname = \"poisson_1way\"\n\n[training]\nepochs = 50\nouter_iterations = 3\n\n[points]\ninterior = 32\nboundary = 8\ninterface = 8\n\n[optimizer]\nkind = \"sgd\"\nlearning_rate = 1e7\n",
    )
    .unwrap();
    let status = bin().arg("run").arg(&config).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(3));
    assert!(out.join("report.csv").is_file());
    assert!(fs::read_to_string(out.join("summary.txt"))
        .unwrap()
        .contains("diverged"));
}
