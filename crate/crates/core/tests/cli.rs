use std::fs;
use std::process::Command;

fn igabem() -> Command {
    Command::new(env!("CARGO_BIN_EXE_igabem"))
}

#[test]
fn help_and_bad_flags() {
    let out = igabem().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("--vartheta"));
    assert_eq!(igabem().args(["--preset", "square"]).status().unwrap().code(), Some(2));
    assert_eq!(
        igabem().args(["--preset", "weak-heart", "--p", "9", "-q"]).status().unwrap().code(),
        Some(2)
    );
}

#[test]
fn small_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("hp");
    let status = igabem()
        .args(["--preset", "hyper-pacman", "--max-dof", "40", "-q", "--dump-indicators", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let csv = fs::read_to_string(out.join("run.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "ell,knots,dim,eta,res,osc,mu,marked,coarsened");
    let knots: Vec<usize> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(knots.len() >= 2);
    assert!(knots.windows(2).all(|w| w[1] > w[0]));
    for ell in 0..knots.len() {
        let h = fs::read_to_string(out.join(format!("step-{ell}.knots"))).unwrap();
        let total: usize = h.lines().map(|l| l.split(' ').nth(1).unwrap().parse::<usize>().unwrap()).sum();
        assert!(total >= knots[ell] - 1 && total <= knots[ell] + 2, "{total} vs {}", knots[ell]);
        assert!(out.join(format!("indicators-{ell}.csv")).exists());
    }
    let rate: f64 = fs::read_to_string(out.join("rates.txt")).unwrap().trim().parse().unwrap();
    assert!(rate < 0.0);
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.starts_with("preset hyper-pacman"));
}

#[test]
fn runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let status = igabem()
            .args(["--preset", "weak-heart", "--max-dof", "40", "--vartheta", "1", "-q", "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
        csvs.push(fs::read(out.join("run.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let status = igabem()
        .args(["--preset", "hyper-heart", "--max-dof", "20", "-q", "--out"])
        .arg(blocker.join("sub"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}
