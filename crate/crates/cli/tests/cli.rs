use std::path::Path;
use std::process::{Command, Output};

fn sqmf(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqmf")).args(args).current_dir(dir).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn synth_factorize_eval_pipeline_is_exact_without_noise() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let o = sqmf(&["synth", "--m", "12", "--n", "40", "--r", "3", "--seed", "4", "--out", "data"], p);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["m.qmat", "mstar.qmat", "wstar.qmat", "hstar.csv", "kstar.json", "synth.json"] {
        assert!(p.join("data").join(f).exists(), "{f}");
    }

    let o = sqmf(&["factorize", "--method", "sqmf", "--r", "3", "--input", "data/m.qmat", "--out", "fit"], p);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["w.qmat", "h.csv", "trace.json"] {
        assert!(p.join("fit").join(f).exists(), "{f}");
    }

    let o = sqmf(&["eval", "--input", "data/m.qmat", "--factors", "fit", "--json", "report.json"], p);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("method,eps,Appro,"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..9], ["sqmf", "0.000000", "100.000000", "100.000000", "100.000000", "100.000000", "100.000000", "100.000000", "100.000000"]);
    assert_eq!(row[9], "1.000000");
    assert_eq!(row[10], "true");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["accuracy"], 1.0);

    let o = sqmf(&["eval", "--input", "data/m.qmat", "--factors", "fit", "--no-truth"], p);
    let row = stdout(&o).lines().nth(1).unwrap().to_string();
    assert!(row.starts_with("sqmf,NA,100.000000,"), "{row}");
    assert!(row.contains(",NA,NA,NA,"), "{row}");
}

#[test]
fn factorize_from_plane_csv_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    for (name, body) in [("s0.csv", "1,0.5\n1,1\n"), ("s1.csv", "0.5,0\n0,0.5\n"), ("s2.csv", "0,0.25\n0.5,0\n")] {
        std::fs::write(p.join(name), body).unwrap();
    }
    let o = sqmf(&["factorize", "--method", "spa-star", "--r", "2", "--planes", "s0.csv,s1.csv,s2.csv"], p);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("selected columns"));
}

#[test]
fn exit_codes_follow_error_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(sqmf(&["factorize", "--method", "nmf", "--r", "2"], p).status.code(), Some(2));
    assert_eq!(sqmf(&["factorize", "--method", "sqmf", "--r", "2", "--input", "missing.qmat"], p).status.code(), Some(4));
    std::fs::write(p.join("bad.qmat"), b"QMAT\x01\x00").unwrap();
    assert_eq!(sqmf(&["factorize", "--method", "sqmf", "--r", "2", "--input", "bad.qmat"], p).status.code(), Some(4));

    assert!(sqmf(&["synth", "--m", "6", "--n", "10", "--r", "2", "--out", "."], p).status.success());
    assert_eq!(sqmf(&["factorize", "--method", "sqmf", "--r", "11"], p).status.code(), Some(3));
    assert_eq!(sqmf(&["synth", "--m", "6", "--n", "10", "--r", "20", "--out", "x"], p).status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_sqmf"))
        .args(["bench", "--seeds", "1"])
        .env("SQMF_THREADS", "zero")
        .current_dir(p)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bench_without_time_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let args = |out: &'static str, acc: &'static str| {
        vec![
            "bench", "--m", "8", "--n", "20", "--r", "3", "--methods", "sqmf,spa-star,imqnmf", "--eps", "0,0.05", "--seeds", "2",
            "--restarts", "2", "--max-iter", "30", "--omit-time", "--out", out, "--accuracy-out", acc,
        ]
    };
    let a = sqmf(&args("a.csv", "a_acc.csv"), p);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = Command::new(env!("CARGO_BIN_EXE_sqmf")).args(args("b.csv", "b_acc.csv")).env("SQMF_THREADS", "1").current_dir(p).output().unwrap();
    assert!(b.status.success());
    let read = |f: &str| std::fs::read_to_string(p.join(f)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_eq!(read("a_acc.csv"), read("b_acc.csv"));
    let table = read("a.csv");
    assert_eq!(table.lines().count(), 7);
    assert!(table.lines().nth(1).unwrap().starts_with("sqmf,0.000000,100.000000,"));
    assert_eq!(read("a_acc.csv").lines().count(), 9);
}
