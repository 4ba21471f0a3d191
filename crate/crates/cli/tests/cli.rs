use std::process::{Command, Output};

fn polaron(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polaron")).args(args).output().expect("spawn polaron")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_subcommand_is_usage_error() {
    assert_eq!(polaron(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn missing_kf_is_reported() {
    let o = polaron(&["eta"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kf"), "{}", stderr(&o));
}

#[test]
fn config_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, "# comment\nkf = 5\nbogus = 1\n").unwrap();
    let o = polaron(&["eta", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 3") && err.contains("bogus"), "{err}");

    std::fs::write(&path, "kf = 5\nkf = 6\n").unwrap();
    let o = polaron(&["eta", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    std::fs::write(&path, "kf = five\n").unwrap();
    let o = polaron(&["eta", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "kf = 5\ngrid = 0.1:3\n").unwrap();
    let out = dir.path().join("eta.csv");
    let o = polaron(&["eta", "--config", cfg.to_str().unwrap(), "--kF", "6", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let meta = std::fs::read_to_string(out.with_extension("csv.meta")).unwrap();
    assert!(meta.contains("kf = 6"), "{meta}");
}

#[test]
fn file_output_gets_sidecar_with_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("patches.csv");
    let o = polaron(&["patches", "--kF", "5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let body = std::fs::read_to_string(&out).unwrap();
    assert!(body.lines().any(|l| !l.starts_with('#') && l.contains(',')));
    let meta = std::fs::read_to_string(dir.path().join("patches.csv.meta")).unwrap();
    assert!(meta.starts_with("command = patches"));
    for key in ["input_hash = ", "output_hash = "] {
        let line = meta.lines().find(|l| l.starts_with(key)).unwrap();
        assert_eq!(line.len(), key.len() + 64);
    }
}

#[test]
fn stdout_output_without_out_flag() {
    let o = polaron(&["floor", "--kF", "10", "--grid", "0.1:3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data[0], "t,b_dot,b,h,floor,theta_t");
    assert_eq!(data.len(), 4);
}

#[test]
fn bad_values_are_rejected() {
    for args in [
        &["eta", "--kF", "5", "--delta", "0.9"][..],
        &["eta", "--kF", "5", "--m", "3"],
        &["eta", "--kF", "-1"],
        &["simulate", "--kF", "1", "--mode", "nope"],
    ] {
        assert_eq!(polaron(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn single_verify_suite_passes() {
    let o = polaron(&["verify", "--suite", "identities", "--trials", "5", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("identities"));
}
