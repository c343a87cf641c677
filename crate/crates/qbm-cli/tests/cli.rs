use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn qbm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qbm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn base(gamma: f64, extra: &str) -> String {
    format!(
        "[model]\ndelta = 0.38\n[bath]\ngamma = {gamma}\ncutoff = 5.0\ntheta = 0.7\n[grid]\nt_max = 1.0\npoints = 11\n{extra}"
    )
}

fn run_ok(dir: &TempDir, cmd: &str, cfg: &Path, extra: &[&str]) -> String {
    let out = dir.path().join("out");
    let mut args = vec![
        cmd,
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let o = qbm(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stem = if cmd == "oracle-check" {
        "oracle-check"
    } else {
        cmd
    };
    std::fs::read_to_string(out.join(format!("{stem}.csv"))).unwrap()
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    lines
        .map(|l| l.split(',').nth(i).unwrap().to_string())
        .collect()
}

#[test]
fn missing_field_exits_one_and_names_it() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.toml",
        &base(0.05, "").replace("cutoff = 5.0\n", ""),
    );
    let o = qbm(&[
        "propagator",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cutoff"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(qbm(&["propagator"]).status.code(), Some(1));
    assert_eq!(qbm(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(qbm(&["--help"]).status.code(), Some(0));
}

#[test]
fn unwritable_output_exits_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &base(0.05, ""));
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = qbm(&[
        "propagator",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        blocker.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unphysical_initial_state_exits_three() {
    let dir = TempDir::new().unwrap();
    let m = "[task.initial]\npreset = \"matrix\"\nmatrix = [[0.1,0,0,0],[0,0.1,0,0],[0,0,0.5,0],[0,0,0,0.5]]\n";
    let cfg = write_config(dir.path(), "c.toml", &base(0.05, m));
    let o = qbm(&[
        "bounds",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("eigenvalue"));
}

#[test]
fn csv_format_and_provenance() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &base(0.05, ""));
    let csv = run_ok(&dir, "propagator", &cfg, &[]);
    let mut lines = csv.lines();
    let prov = lines.next().unwrap();
    assert!(prov.starts_with("# {") && prov.contains("\"gamma\":0.05"));
    let header = lines.next().unwrap();
    assert!(header.starts_with("t,R_0_0,"));
    assert_eq!(header.split(',').count(), 1 + 16 + 10);
    assert_eq!(lines.count(), 11);
    assert!(!csv.contains('\r'));
}

#[test]
fn free_evolution_has_zero_diffusion_columns() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &base(0.0, ""));
    let csv = run_ok(&dir, "propagator", &cfg, &[]);
    for name in ["S_0_0", "S_1_1", "S_0_3", "S_3_3"] {
        assert!(
            column(&csv, name).iter().all(|c| c == "0.00000000000e0"),
            "{name}"
        );
    }
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let body = base(0.05, "[task]\ntheta_sweep = [0.5, 2.0]\n[task.initial]\npreset = \"random-pure\"\nmax_squeeze = 1.0\n");
    let cfg = write_config(dir.path(), "c.toml", &body);
    for cmd in ["bounds", "tdis", "propagator"] {
        let a = run_ok(&dir, cmd, &cfg, &["--seed", "7", "--threads", "1"]);
        let b = run_ok(&dir, cmd, &cfg, &["--seed", "7", "--threads", "3"]);
        assert_eq!(a, b, "{cmd}");
    }
    let other = run_ok(&dir, "bounds", &cfg, &["--seed", "8"]);
    let same = run_ok(&dir, "bounds", &cfg, &["--seed", "7"]);
    assert_ne!(column(&other, "lambda_min"), column(&same, "lambda_min"));
}

#[test]
fn closed_system_reports_no_crossing() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        &base(0.0, "[task]\ntheta_sweep = [0.2, 5.0]\n"),
    );
    let csv = run_ok(&dir, "tdis", &cfg, &[]);
    assert!(column(&csv, "status").iter().all(|s| s == "no-crossing"));
    assert!(column(&csv, "t_dis_gamma").iter().all(String::is_empty));
}

#[test]
fn hot_bath_disentangles_quickly() {
    let dir = TempDir::new().unwrap();
    let body = base(
        0.05,
        "[task]\ntheta_sweep = [5.0]\ndelta_sweep = [0.38, 0.8]\n",
    );
    let cfg = write_config(dir.path(), "c.toml", &body);
    let csv = run_ok(&dir, "tdis", &cfg, &[]);
    for cell in column(&csv, "t_dis_gamma") {
        let t: f64 = cell.parse().unwrap();
        assert!(t > 0.0 && t < 0.5, "{t}");
    }
}

#[test]
fn oracle_check_without_coupling_is_exact() {
    let dir = TempDir::new().unwrap();
    let extra = "[task]\nmodes = 50\nmax_frequency = 25.0\n";
    let cfg = write_config(
        dir.path(),
        "c.toml",
        &base(0.0, extra).replace("t_max = 1.0", "t_max = 10.0"),
    );
    let csv = run_ok(&dir, "oracle-check", &cfg, &[]);
    for cell in column(&csv, "deviation") {
        assert!(cell.parse::<f64>().unwrap() < 1e-10);
    }
}

#[test]
fn oracle_deviation_shrinks_with_more_modes() {
    let dir = TempDir::new().unwrap();
    let worst = |m: usize| {
        let extra = format!("[task]\nmodes = {m}\nmax_frequency = 25.0\n");
        let cfg = write_config(
            dir.path(),
            "c.toml",
            &base(0.05, &extra).replace("t_max = 1.0", "t_max = 0.5"),
        );
        let csv = run_ok(&dir, "oracle-check", &cfg, &[]);
        column(&csv, "deviation")
            .iter()
            .map(|c| c.parse::<f64>().unwrap())
            .fold(0.0, f64::max)
    };
    let (coarse, fine) = (worst(50), worst(400));
    assert!(coarse > fine, "{coarse} {fine}");
    assert!(fine < 5e-3);
}

#[test]
fn plot_renders_and_validates() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &base(0.05, ""));
    run_ok(&dir, "bounds", &cfg, &[]);
    let out = dir.path().join("out");
    let csv = out.join("bounds.csv");
    let o = qbm(&[
        "plot",
        csv.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let svg = std::fs::read_to_string(out.join("bounds.svg")).unwrap();
    assert!(svg.contains("lambda_bound") && svg.contains("area_pm"));

    let o = qbm(&[
        "plot",
        csv.to_str().unwrap(),
        "--columns",
        "nope",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let o = qbm(&[
        "plot",
        empty.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));

    let o = qbm(&[
        "plot",
        csv.to_str().unwrap(),
        "--kind",
        "log-log",
        "--columns",
        "area_pm",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for entry in std::fs::read_dir(dir).unwrap() {
        let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
        qbm_cli::config::RunConfig::parse(&text)
            .unwrap()
            .resolve()
            .unwrap();
    }
}
