use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_outlier-pca"))
}

#[test]
fn gen_oracle_solve_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("inst");

    let st = bin()
        .args(["gen", "planted", "--d", "8", "--n", "30", "--k", "1", "--m", "2"])
        .args(["--sigma", "0.05", "--seed", "3", "--out"])
        .arg(&prefix)
        .status()
        .unwrap();
    assert!(st.success());
    let mat = prefix.with_extension("mat");
    assert!(mat.exists());
    assert!(prefix.with_extension("truth.json").exists());

    let out = bin()
        .args(["oracle", "--k", "1", "--m", "2", "--in"])
        .arg(&mat)
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["opt"].as_f64().unwrap() >= 0.0);

    let out = bin()
        .args(["solve", "--algo", "iter-svd", "--k", "1", "--m", "2"])
        .args(["--epsilon", "0.5", "--seed", "1", "--in"])
        .arg(&mat)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let first = String::from_utf8(out.stdout).unwrap();
    let rec: serde_json::Value =
        serde_json::from_str(first.lines().next().unwrap()).unwrap();
    assert_eq!(rec["status"], "Success");
}

#[test]
fn solve_rejects_bad_input_with_exit_one() {
    let out = bin()
        .args(["oracle", "--k", "1", "--m", "1", "--in", "/nonexistent/input.mat"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
