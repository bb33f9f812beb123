//! End-to-end runs of the `ezone` binary.

use std::path::Path;
use std::process::{Command, Output};

fn ezone(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ezone"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

const SMALL: &[&str] = &[
    "--set", "synth_rows=8", "--set", "synth_cols=8", "--set", "epochs=40",
];

fn with<'a>(base: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
    base.iter().chain(extra).copied().collect()
}

#[test]
fn all_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = ezone(&with(&["all", "--out", dir.to_str().unwrap()], SMALL));
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (ta, tb) = (tree(&a), tree(&b));
    assert!(ta.iter().any(|(n, _)| n.ends_with("comparison.csv")));
    assert_eq!(ta, tb);
}

#[test]
fn staged_subcommands_match_all() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    let staged = tmp.path().join("staged");
    let i = input.to_str().unwrap();
    let s = staged.to_str().unwrap();
    assert_eq!(code(&ezone(&with(&["synth", "--out", i], SMALL))), 0);
    assert!(input.join("2001.csv").exists() && input.join("planted_labels.csv").exists());
    assert_eq!(code(&ezone(&with(&["features", "--input", i, "--out", s], SMALL))), 0);
    assert!(staged.join("2002/features.csv").exists());
    assert_eq!(code(&ezone(&with(&["zone", "--input", i, "--out", s], SMALL))), 0);
    assert_eq!(code(&ezone(&with(&["temporal", "--out", s], SMALL))), 0);
    let o = ezone(&with(&["compare", "--out", s], SMALL));
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("topk_tail"));

    let whole = tmp.path().join("whole");
    let w = whole.to_str().unwrap();
    assert_eq!(code(&ezone(&with(&["all", "--input", i, "--out", w], SMALL))), 0);
    for f in ["2001/zones.csv", "2003/embedding.bin", "temporal/diagnostics.csv", "comparison/comparison.csv"] {
        assert_eq!(
            std::fs::read(staged.join(f)).unwrap(),
            std::fs::read(whole.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, "# test config\nseed = 5\nzones = 3\nsynth_rows = 8\nsynth_cols = 8\nepochs = 40\n").unwrap();
    let out = tmp.path().join("o");
    let o = ezone(&[
        "zone",
        "--config",
        cfg.to_str().unwrap(),
        "--zones",
        "2",
        "--cluster-input",
        "embedding_only",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let meta = std::fs::read_to_string(out.join("2001/metadata.txt")).unwrap();
    assert!(meta.contains("config.seed=5"));
    assert!(meta.contains("config.k_c=2"));
    assert!(meta.contains("config.cluster_input=embedding_only"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = out.to_str().unwrap();

    assert_eq!(code(&ezone(&["--help"])), 0);
    assert_eq!(code(&ezone(&["--version"])), 0);
    assert_eq!(code(&ezone(&[])), 1);
    assert_eq!(code(&ezone(&["frobnicate"])), 1);
    assert_eq!(code(&ezone(&["zone", "--tau", "1.5", "--out", o])), 1);
    assert_eq!(code(&ezone(&["zone", "--set", "nonsense=1", "--out", o])), 1);
    assert_eq!(code(&ezone(&["zone", "--cluster-input", "pixels", "--out", o])), 1);

    // data errors
    let missing = tmp.path().join("missing");
    assert_eq!(code(&ezone(&["zone", "--input", missing.to_str().unwrap(), "--out", o])), 2);
    let bad = tmp.path().join("bad");
    std::fs::create_dir(&bad).unwrap();
    std::fs::write(bad.join("2001.csv"), "node_id,lat,lon,day_index,precip_mm\n0,1,2,x,3\n").unwrap();
    assert_eq!(code(&ezone(&["zone", "--input", bad.to_str().unwrap(), "--out", o])), 2);
    assert_eq!(code(&ezone(&["temporal", "--out", tmp.path().join("empty").to_str().unwrap()])), 2);

    // constant precipitation: the tail is degenerate, a data problem
    let write_grid = |name: &str, value: &dyn Fn(usize, usize) -> f64| {
        let dir = tmp.path().join(name);
        std::fs::create_dir(&dir).unwrap();
        let mut csv = String::from("node_id,lat,lon,day_index,precip_mm\n");
        for id in 0..16 {
            for day in 0..40 {
                csv.push_str(&format!("{id},{},{},{day},{}\n", id / 4, id % 4, value(id, day)));
            }
        }
        std::fs::write(dir.join("2001.csv"), csv).unwrap();
        dir
    };
    let flat = write_grid("flat", &|_, _| 2.5);
    assert_eq!(code(&ezone(&["zone", "--input", flat.to_str().unwrap(), "--out", o])), 2);

    // values whose sums overflow: training sees a non-finite loss
    let huge = write_grid("huge", &|id, day| if (id + day) % 3 == 0 { 1e307 } else { 0.0 });
    let o3 = ezone(&["zone", "--input", huge.to_str().unwrap(), "--out", o]);
    assert_eq!(code(&o3), 3, "{}", String::from_utf8_lossy(&o3.stderr));
}
