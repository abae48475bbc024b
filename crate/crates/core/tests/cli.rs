use std::fs;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_euler-sieve"))
}

#[test]
fn gen_domain_writes_three_centers() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin().args(["--output-dir"]).arg(dir.path()).arg("gen-domain").status().unwrap();
    assert!(status.success());
    let csv = fs::read_to_string(dir.path().join("centers.csv")).unwrap();
    assert_eq!(csv, "i,j,x,y\n1,1,0.1,0.1\n2,1,0.5,0.1\n3,1,0.9,0.1\n");
    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("subcommand = gen-domain"));
}

#[test]
fn unknown_config_key_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[domain]\nepss = 0.1\n").unwrap();
    let out = bin().arg("--config").arg(&cfg).arg("gen-domain").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epss"));
}

#[test]
fn invalid_parameters_exit_with_two() {
    let out = bin().args(["--set", "domain.eps=2.0", "gen-domain"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evolve_is_deterministic() {
    let run = |threads: &str| {
        let dir = tempfile::tempdir().unwrap();
        let status = bin()
            .env("EULER_SIEVE_THREADS", threads)
            .args(["--set", "field.radius=0.2", "--set", "field.center=[0.5,0.6]", "--set", "transport.traj_stride=2"])
            .arg("--output-dir")
            .arg(dir.path())
            .args(["evolve", "--t-end", "0.2", "--h", "0.025", "--backend", "corrector"])
            .status()
            .unwrap();
        assert!(status.success());
        ["trajectory.csv", "diagnostics.csv"].map(|n| fs::read(dir.path().join(n)).unwrap())
    };
    assert_eq!(run("1"), run("2"));
}
