use std::path::Path;
use std::process::{Command, Output};

fn space(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_space")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

#[test]
fn solve_writes_bundle_and_report_that_analyze_agrees_with() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("edited.bin");
    let report = dir.path().join("report.json");
    let o = space(&[
        "solve",
        "--synthetic",
        "--scale",
        "16",
        "--lambda",
        "0.05",
        "--iters",
        "50",
        "--seed",
        "3",
        "--out",
        path(&out),
        "--report",
        path(&report),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run = json(&report);
    assert_eq!(run["layers"].as_array().unwrap().len(), 32);
    assert_eq!(run["iterations"], 50);

    let analysis = dir.path().join("analysis.json");
    let csv = dir.path().join("analysis.csv");
    let o = space(&["analyze", path(&out), "--report", path(&analysis), "--csv", path(&csv)]);
    assert!(o.status.success());
    let a = json(&analysis);
    assert_eq!(a["totals"]["zeros"], run["storage"]["totals"]["zeros"]);
    assert_eq!(a["totals"]["sparsity"], run["storage"]["totals"]["sparsity"]);
    let csv = std::fs::read_to_string(&csv).unwrap();
    assert!(csv.starts_with("name,block,kind,rows,cols,nnz,sparsity,"));
    assert_eq!(csv.lines().count(), 33);
}

#[test]
fn solve_is_reproducible_from_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for (i, threads) in ["1", "4"].iter().enumerate() {
        let out = dir.path().join(format!("run{i}.bin"));
        let o = space(&[
            "solve",
            "--synthetic",
            "--scale",
            "16",
            "--lambda",
            "0.02",
            "--iters",
            "40",
            "--seed",
            "9",
            "--parallelism",
            threads,
            "--out",
            path(&out),
            "--report",
            path(&dir.path().join("r.json")),
        ]);
        assert!(o.status.success());
        files.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn generated_files_feed_solve_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.spmx");
    let c = dir.path().join("c.spmx");
    let o = space(&["generate", "--scale", "24", "--seed", "5", "--out", path(&w), "--concepts-out", path(&c)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let o = space(&["solve", "--input", path(&w), "--concepts", path(&c), "--iters", "20", "--algo", "ista"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["algorithm"], "ista");

    let cmp = dir.path().join("cmp.json");
    let o = space(&[
        "compare",
        "--input",
        path(&w),
        "--concepts",
        path(&c),
        "--iters",
        "2000",
        "--lambda",
        "0.05",
        "--report",
        path(&cmp),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cmp = json(&cmp);
    assert!(cmp["totals"]["max_unpenalized_rel_delta"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn sweep_emits_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = space(&[
        "sweep",
        "--synthetic",
        "--scale",
        "24",
        "--lambda-grid",
        "0,0.05",
        "--iter-grid",
        "10,30",
        "--metrics",
        "sparsity,objective",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], "lambda,iterations,sparsity,objective");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("0,10,0,"));

    let js = dir.path().join("s.json");
    let csv = dir.path().join("s.csv");
    let o = space(&[
        "sweep",
        "--synthetic",
        "--scale",
        "24",
        "--lambda-grid",
        "0.01",
        "--iter-grid",
        "5",
        "--json",
        path(&js),
        "--csv",
        path(&csv),
    ]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    assert_eq!(json(&js)["rows"].as_array().unwrap().len(), 1);
    assert!(std::fs::read_to_string(&csv).unwrap().starts_with("lambda,iterations,sparsity,deployment_bytes"));
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.spmx");
    let cases: Vec<Vec<&str>> = vec![
        vec!["solve", "--synthetic", "--lambda=-1"],
        vec!["solve", "--synthetic", "--parallelism", "0"],
        vec!["solve", "--synthetic", "--lambda2", "0"],
        vec!["solve", "--synthetic", "--algo", "newton"],
        vec!["solve"],
        vec!["sweep", "--synthetic", "--lambda-grid", "0.1,0.0", "--iter-grid", "10"],
        vec!["analyze", path(&missing)],
    ];
    for args in cases {
        let o = space(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty());
    }
}

/// Multiplies every value of the named dense entry in an SPMX file.
fn scale_entry(file: &Path, name: &str, factor: f32) {
    let mut bytes = std::fs::read(file).unwrap();
    let manifest_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let manifest: serde_json::Value = serde_json::from_slice(&bytes[12..12 + manifest_len]).unwrap();
    let entry = manifest["entries"].as_array().unwrap().iter().find(|e| e["name"] == name).unwrap();
    let start = 12 + manifest_len + entry["byte_offset"].as_u64().unwrap() as usize;
    let end = start + entry["byte_length"].as_u64().unwrap() as usize;
    for chunk in bytes[start..end].chunks_exact_mut(4) {
        let v = f32::from_le_bytes(chunk.try_into().unwrap()) * factor;
        chunk.copy_from_slice(&v.to_le_bytes());
    }
    std::fs::write(file, bytes).unwrap();
}

#[test]
fn numerical_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.spmx");
    let c = dir.path().join("c.spmx");
    assert!(space(&["generate", "--scale", "64", "--out", path(&w), "--concepts-out", path(&c)]).status.success());
    // Huge guide concepts push the edited weights beyond f32 range.
    scale_entry(&c, "guide", 1e30);
    scale_entry(&w, "down.0.attn2.to_k", 1e30);
    let o = space(&["solve", "--input", path(&w), "--concepts", path(&c), "--iters", "5"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let o = space(&["compare", "--input", path(&w), "--concepts", path(&c), "--iters", "5"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn help_succeeds() {
    let o = space(&["--help"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for cmd in ["solve", "sweep", "compare", "analyze"] {
        assert!(text.contains(cmd));
    }
}
