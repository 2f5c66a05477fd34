use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn toy() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/assets/toy")
}

fn bgcn(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bgcn"))
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .env_remove("BGCN_DATA_ROOT")
        .args(args)
        .output()
        .unwrap()
}

fn quick<'a>(dataset: &'a str, out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![
        "--dataset",
        dataset,
        "--out",
        out,
        "--set",
        "gvae.epochs=20",
        "--set",
        "mc_samples=4",
    ];
    v.extend_from_slice(extra);
    v
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_bundle_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = bgcn(dir.path(), &["run", "--dataset", "/does/not/exist"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/does/not/exist"), "{}", stderr(&o));

    let o = bgcn(
        dir.path(),
        &["baseline", "--dataset", "cora", "--data-root", "bundles"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bundles/cora"), "{}", stderr(&o));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn bad_overrides_and_config_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let t = toy();
    let t = t.to_str().unwrap();
    for args in [
        vec!["run", "--dataset", t, "--set", "gcn.hiden=3"],
        vec!["run", "--dataset", t, "--set", "mc_samples=-1"],
        vec!["run", "--dataset", t, "--labels-per-class", "7"],
        vec!["run", "--dataset", t, "--labels-per-class", "40"],
    ] {
        let o = bgcn(dir.path(), &args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
    std::fs::write(
        dir.path().join("c.json"),
        r#"{"gcn": {"lr": 0.01, "typo": 1}}"#,
    )
    .unwrap();
    let o = bgcn(dir.path(), &["run", "--dataset", t, "--config", "c.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gcn.typo"));
}

#[test]
fn run_is_reproducible_and_cached() {
    let dir = tempfile::tempdir().unwrap();
    let t = toy();
    let t = t.to_str().unwrap();
    let args = quick(t, "a", &["--seeds", "1", "--seed", "7"]);
    let first = bgcn(dir.path(), &[&["run"], &args[..]].concat());
    assert!(first.status.success(), "{}", stderr(&first));
    assert!(stdout(&first).contains("toy\tall\t1\t"));
    let root = dir.path().join("a");
    for f in [
        "config.json",
        "metrics.json",
        "pred.tsv",
        "diagnostics.csv",
        "summary.json",
        "stratified.csv",
        "adj_obs.pgm",
        "adj_map.pgm",
        "ordering.txt",
        "seed-7/graph/edges.tsv",
        "seed-7/graph/weights.tsv",
        "seed-7/graph/trace.csv",
        "seed-7/probs.tsv",
    ] {
        assert!(root.join(f).is_file(), "missing {f}");
    }
    let metrics = std::fs::read(root.join("metrics.json")).unwrap();

    // second run reuses every stage
    let again = bgcn(dir.path(), &[&["run"], &args[..]].concat());
    assert!(again.status.success());
    assert_eq!(std::fs::read(root.join("metrics.json")).unwrap(), metrics);

    // a fresh directory recomputes and matches bit for bit
    let args_b = quick(t, "b", &["--seeds", "1", "--seed", "7", "--force"]);
    let fresh = bgcn(dir.path(), &[&["run"], &args_b[..]].concat());
    assert!(fresh.status.success());
    let b = dir.path().join("b");
    assert_eq!(std::fs::read(b.join("metrics.json")).unwrap(), metrics);
    for f in ["pred.tsv", "seed-7/probs.tsv", "seed-7/graph/weights.tsv"] {
        assert_eq!(
            std::fs::read(b.join(f)).unwrap(),
            std::fs::read(root.join(f)).unwrap(),
            "{f}"
        );
    }

    // only the two run directories were written
    let mut entries: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    entries.sort();
    assert_eq!(entries, ["a", "b"]);

    let report = bgcn(dir.path(), &["report", "a", "b"]);
    assert!(report.status.success());
    let text = stdout(&report);
    assert_eq!(text.lines().count(), 3, "{text}");
    assert!(text.lines().nth(1).unwrap().starts_with("a\ttoy"));

    let stale = bgcn(
        dir.path(),
        &[
            &["run"],
            &quick(
                t,
                "a",
                &["--seeds", "1", "--seed", "7", "--set", "gcn.hidden=8"],
            )[..],
        ]
        .concat(),
    );
    assert_eq!(stale.status.code(), Some(2));
    assert!(stderr(&stale).contains("--force"));

    let adj = bgcn(dir.path(), &["export-adj", "--out", "a", "--size", "64"]);
    assert!(adj.status.success(), "{}", stderr(&adj));
    let pgm = std::fs::read(root.join("adj_map.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n60 60\n255\n"));
}

#[test]
fn stage_commands() {
    let dir = tempfile::tempdir().unwrap();
    let t = toy();
    let t = t.to_str().unwrap();
    let o = bgcn(
        dir.path(),
        &[&["learn-graph"], &quick(t, "g", &[])[..]].concat(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("objective"));
    let g = dir.path().join("g/seed-0");
    assert!(g.join("graph/edges.tsv").is_file() && g.join("graph/weights.tsv").is_file());
    assert!(g.join("embeddings.tsv").is_file());

    let o = bgcn(dir.path(), &[&["embed"], &quick(t, "g", &[])[..]].concat());
    assert!(o.status.success());
    assert!(stdout(&o).contains("embeddings.tsv"));

    let o = bgcn(
        dir.path(),
        &[
            &["baseline"],
            &quick(
                t,
                "base",
                &["--labels-per-class", "5", "--seeds", "2", "--jobs", "2"],
            )[..],
        ]
        .concat(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("toy\t5\t2\t"));
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("base/summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["gcnn"]["accuracies"].as_array().unwrap().len(), 2);
    assert!(summary["bgcn"].is_null());
}

#[test]
fn jobs_do_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let t = toy();
    let t = t.to_str().unwrap();
    for (out, jobs) in [("one", "1"), ("two", "2")] {
        let o = bgcn(
            dir.path(),
            &[
                &["baseline"],
                &quick(t, out, &["--seeds", "3", "--jobs", jobs])[..],
            ]
            .concat(),
        );
        assert!(o.status.success());
    }
    let read = |d: &str| std::fs::read(dir.path().join(d).join("metrics.json")).unwrap();
    assert_eq!(read("one"), read("two"));
}
