use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sepgan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sepgan"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run sepgan")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn count_reports_paper_table() {
    let o = sepgan(&["count", "--variant", "baseline", "--scale", "paper"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let row = out
        .lines()
        .find(|l| l.starts_with("baseline"))
        .expect("baseline row");
    assert!(row.ends_with("PASS"), "{out}");

    let o = sepgan(&["count"]);
    assert_eq!(stdout(&o).matches("PASS").count(), 4, "{}", stdout(&o));

    let o = sepgan(&["count", "--scale", "desk", "--csv"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).matches("total,,").count(), 8);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(sepgan(&[]).status.code(), Some(2));
    assert_eq!(
        sepgan(&["count", "--variant", "wide"]).status.code(),
        Some(2)
    );
    assert_eq!(sepgan(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(sepgan(&["--help"]).status.code(), Some(0));
    for v in [
        "baseline",
        "depthwise-g",
        "deeper-depthwise-g",
        "depthwise-dg",
    ] {
        assert_eq!(
            sepgan(&["count", "--variant", v]).status.code(),
            Some(0),
            "{v}"
        );
    }
}

#[test]
fn gen_data_validates_size_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let o = sepgan(&[
        "gen-data",
        "--out",
        path(&dir.path().join("bad")),
        "--size",
        "33",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("divisible by 4"), "{}", stderr(&o));

    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = sepgan(&[
            "gen-data",
            "--out",
            path(d),
            "--domains",
            "3",
            "--per-domain",
            "4",
            "--size",
            "16",
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let mut names: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 13);
    for n in names {
        assert_eq!(
            fs::read(a.join(&n)).unwrap(),
            fs::read(b.join(&n)).unwrap(),
            "{n:?}"
        );
    }
}

#[test]
fn train_without_dataset_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");
    let o = sepgan(&[
        "train",
        "--data",
        path(&missing),
        "--out",
        path(&dir.path().join("run")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("error"), "{}", stderr(&o));
    let o = sepgan(&["train", "--out", path(&dir.path().join("run"))]);
    assert_eq!(o.status.code(), Some(2));
    let o = sepgan(&["train", "--set", "batch_size"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_then_fid_and_sample() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    let o = sepgan(&[
        "gen-data",
        "--out",
        path(&data),
        "--per-domain",
        "6",
        "--size",
        "16",
        "--seed",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let mut args = vec![
        "train",
        "--data",
        path(&data),
        "--out",
        path(&run),
        "--variant",
        "depthwise-g",
        "--iters",
        "4",
    ];
    let sets = [
        "image_size=16",
        "base_channels=4",
        "n_bottleneck=1",
        "d_repeat=2",
        "d_sep_blocks=1",
        "batch_size=4",
        "fid_every=2",
        "fid_sample_count=12",
        "sample_every=2",
        "checkpoint_every=2",
    ];
    for s in &sets {
        args.extend(["--set", s]);
    }
    let o = sepgan(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let config = fs::read_to_string(run.join("config.txt")).unwrap();
    assert!(
        config.contains("variant = depthwise-g") && config.contains("total_iters = 4"),
        "{config}"
    );
    let csv = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6, "{csv}");
    assert!(run.join("samples/iter_000004.ppm").exists());
    let ckpt = run.join("checkpoint_000004.sgan");
    assert!(ckpt.exists() && run.join("checkpoint_000002.sgan").exists());

    let o = sepgan(&[
        "fid",
        "--checkpoint",
        path(&ckpt),
        "--data",
        path(&data),
        "--n",
        "12",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(
        out.starts_with("extractor,d,n_real,n_gen,fid\npixel-stats,64,12,12,"),
        "{out}"
    );

    let input = data.join("00000.ppm");
    let samples = dir.path().join("samples");
    let o = sepgan(&[
        "sample",
        "--checkpoint",
        path(&ckpt),
        "--in",
        path(&input),
        "--out",
        path(&samples),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(samples.join("00000_to_0.ppm").exists() && samples.join("00000_to_1.ppm").exists());
    let o = sepgan(&[
        "sample",
        "--checkpoint",
        path(&ckpt),
        "--in",
        path(&input),
        "--out",
        path(&samples),
        "--target-domain",
        "5",
    ]);
    assert_eq!(o.status.code(), Some(2));

    // resuming from the midpoint rewrites the same log
    let resumed = dir.path().join("resumed");
    fs::create_dir_all(&resumed).unwrap();
    let head: String = csv.lines().take(4).map(|l| format!("{l}\n")).collect();
    fs::write(resumed.join("metrics.csv"), head).unwrap();
    let mid = run.join("checkpoint_000002.sgan");
    let mut args2: Vec<&str> = args.clone();
    let out_pos = args2.iter().position(|a| *a == "--out").unwrap() + 1;
    args2[out_pos] = path(&resumed);
    args2.extend(["--resume", path(&mid)]);
    let o = sepgan(&args2);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let strip = |s: &str| {
        s.lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect::<Vec<_>>()
    };
    assert_eq!(
        strip(&fs::read_to_string(resumed.join("metrics.csv")).unwrap()),
        strip(&csv)
    );
}
