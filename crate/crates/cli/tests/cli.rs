use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use virtstain_core::cyclegan::load_checkpoint;
use virtstain_core::Slide;

fn virtstain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_virtstain")).args(args).output().expect("run virtstain")
}

fn ok(args: &[&str]) -> String {
    let out = virtstain(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn metric(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
        .unwrap_or_else(|| panic!("no '{key}' in:\n{text}"))
        .to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file under `dir` with its bytes, sorted by relative path.
fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn synth(dir: &Path, tiles: &str, pairs: &str, size: &str) {
    ok(&["synth", "--out", s(dir), "--tiles", tiles, "--pairs", pairs, "--size", size, "--tile-size", "32", "--seed", "4"]);
}

fn tiny_config(dir: &Path, data: &Path, extra: &str) -> PathBuf {
    let p = dir.join("run.cfg");
    let text = format!(
        "base_channels = 8\nresidual_blocks = 1\ndisc_base_channels = 8\ndisc_layers = 2\npool_capacity = 4\n\
         iterations = 4\ncheckpoint_every = 2\nworkers = 1\nseed = 11\ndata_dir = {}\n{extra}",
        data.display()
    );
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn synth_layout_and_determinism() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    synth(&a, "10", "2", "96");
    synth(&b, "10", "2", "96");
    assert_eq!(fs::read_dir(a.join("train/a")).unwrap().count(), 10);
    assert_eq!(fs::read_dir(a.join("train/b")).unwrap().count(), 10);
    for f in ["a.ppm", "b.ppm", "meta.csv"] {
        assert!(a.join("pairs/pair_001").join(f).is_file());
    }
    assert_eq!(tree(&a), tree(&b));
    let bad = virtstain(&["synth", "--out", s(&t.path().join("c")), "--tiles", "0", "--pairs", "1"]);
    assert_eq!(code(&bad), 1);
}

#[test]
fn train_resume_matches_uninterrupted_run() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    synth(&data, "8", "1", "64");
    let cfg = tiny_config(t.path(), &data, "");
    let full = t.path().join("full");
    let out = ok(&["train", "--config", s(&cfg), "--out", s(&full)]);
    assert!(metric(&out, "final_checkpoint").ends_with("final.ckpt"));
    assert!(full.join("ckpt_000002.ckpt").is_file());
    assert!(full.join("config.txt").is_file());
    let loss = fs::read_to_string(full.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 5);
    assert!(loss.starts_with("iteration,G_adv_AB,G_adv_BA,cyc_A,cyc_B,D_A,D_B\n"));

    let part = t.path().join("part");
    ok(&["train", "--config", s(&cfg), "--out", s(&part), "--iterations", "2"]);
    ok(&["train", "--config", s(&cfg), "--out", s(&part), "--resume", s(&part.join("final.ckpt"))]);
    assert_eq!(fs::read(part.join("final.ckpt")).unwrap(), fs::read(full.join("final.ckpt")).unwrap());
    assert_eq!(fs::read_to_string(part.join("loss.csv")).unwrap(), loss);
}

#[test]
fn worker_split_matches_single_worker() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    synth(&data, "8", "1", "64");
    let one = tiny_config(t.path(), &data, "batch_per_worker = 3\niterations = 2\n");
    ok(&["train", "--config", s(&one), "--out", s(&t.path().join("k1"))]);
    let three = t.path().join("three.cfg");
    fs::write(&three, fs::read_to_string(&one).unwrap().replace("batch_per_worker = 3", "batch_per_worker = 1")).unwrap();
    ok(&["train", "--config", s(&three), "--out", s(&t.path().join("k3")), "--workers", "3"]);

    let a = load_checkpoint(t.path().join("k1/final.ckpt")).unwrap();
    let b = load_checkpoint(t.path().join("k3/final.ckpt")).unwrap();
    // The two splits sum gradients in a different order. ADAM's g/(|g|+eps)
    // amplifies that rounding for entries whose gradient is near zero, up to
    // its step bound of about lr per iteration; everything else must agree
    // to 1e-6 of the tensor's magnitude.
    let step_bound = 2.0 * a.hyper.lr * a.iteration as f64;
    let (mut loose, mut total) = (0usize, 0usize);
    for (ma, mb) in a.nets.models().into_iter().zip(b.nets.models()) {
        for (pa, pb) in ma.params().iter().zip(mb.params()) {
            let scale = pa.value.data().iter().fold(0.0f32, |m, v| m.max(v.abs())) as f64;
            for (&x, &y) in pa.value.data().iter().zip(pb.value.data()) {
                let d = (x as f64 - y as f64).abs();
                assert!(d <= step_bound, "{}: {d} exceeds the ADAM step bound", pa.name);
                loose += usize::from(d > 1e-6 * scale);
                total += 1;
            }
        }
    }
    assert!(loose * 1000 <= total, "{loose} of {total} parameters differ by more than 1e-6 of their tensor scale");
}

#[test]
fn train_errors() {
    let t = tempfile::tempdir().unwrap();
    let missing = t.path().join("nowhere");
    let cfg = tiny_config(t.path(), &missing, "");
    let out = virtstain(&["train", "--config", s(&cfg), "--out", s(&t.path().join("o"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere"));

    let bad = t.path().join("bad.cfg");
    fs::write(&bad, "seed = 1\nlearning_rate = 3\nworkers = many\n").unwrap();
    let out = virtstain(&["train", "--config", s(&bad), "--out", s(&t.path().join("o"))]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("line 3"), "{err}");
}

#[test]
fn infer_collect_stats_and_eval() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    synth(&data, "8", "2", "96");
    let cfg = tiny_config(t.path(), &data, "iterations = 1\n");
    let run = t.path().join("run");
    ok(&["train", "--config", s(&cfg), "--out", s(&run)]);
    let model = run.join("final.ckpt");
    let slide = data.join("pairs/pair_000/a.ppm");

    let sliding = t.path().join("sliding.ppm");
    let m = ok(&[
        "infer", "--model", s(&model), "--in", s(&slide), "--out", s(&sliding), "--strategy", "sliding",
        "--effective", "32", "--window", "64",
    ]);
    assert_eq!((metric(&m, "width"), metric(&m, "strategy")), ("96".into(), "sliding".into()));
    assert!(metric(&m, "seam_index").parse::<f64>().unwrap() > 0.0);
    assert!(t.path().join("sliding.metrics.txt").is_file());
    let out = Slide::load_ppm(&sliding).unwrap();
    assert_eq!((out.width(), out.height()), (96, 96));

    let unknown = virtstain(&["infer", "--model", s(&model), "--in", s(&slide), "--out", "x.ppm", "--strategy", "tiles"]);
    assert_eq!(code(&unknown), 1);
    let no_stats = virtstain(&["infer", "--model", s(&model), "--in", s(&slide), "--out", "x.ppm", "--strategy", "global"]);
    assert_eq!(code(&no_stats), 1);

    let table = t.path().join("stats.csv");
    ok(&["collect-stats", "--model", s(&model), "--tiles", s(&data.join("train/a")), "--out", s(&table)]);
    let global = t.path().join("global.ppm");
    let m = ok(&[
        "infer", "--model", s(&model), "--in", s(&slide), "--out", s(&global), "--strategy", "global", "--stats",
        s(&table), "--tile", "48",
    ]);
    assert_eq!(metric(&m, "strategy"), "global");
    fs::write(&table, "layer,channel,mean,var\n0,0,0,1\n").unwrap();
    let mismatch = virtstain(&[
        "infer", "--model", s(&model), "--in", s(&slide), "--out", s(&global), "--strategy", "global", "--stats",
        s(&table),
    ]);
    assert_eq!(code(&mismatch), 2);

    // Real slides as their own virtual counterparts.
    let virt = t.path().join("virtual");
    fs::create_dir(&virt).unwrap();
    for id in ["pair_000", "pair_001"] {
        fs::copy(data.join("pairs").join(id).join("b.ppm"), virt.join(format!("{id}.ppm"))).unwrap();
    }
    let report = t.path().join("report");
    let summary = ok(&["eval", "--pairs", s(&data.join("pairs")), "--virtual", s(&virt), "--out", s(&report)]);
    assert_eq!(metric(&summary, "purple.median"), "0");
    assert_eq!(metric(&summary, "purple.variance_sample"), "0");
    let csv = fs::read_to_string(report.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",0")));
    assert!(report.join("boxplot.svg").is_file());

    fs::remove_file(virt.join("pair_001.ppm")).unwrap();
    let unpaired = virtstain(&["eval", "--pairs", s(&data.join("pairs")), "--virtual", s(&virt), "--out", s(&report)]);
    assert_eq!(code(&unpaired), 2);
    assert!(String::from_utf8_lossy(&unpaired.stderr).contains("pair_001"));
}

#[test]
fn seam_rf_gradcheck() {
    let t = tempfile::tempdir().unwrap();
    let p = t.path().join("flat.ppm");
    Slide::filled(64, 64, [200, 10, 10]).unwrap().save_ppm(&p).unwrap();
    assert_eq!(metric(&ok(&["seam", "--in", s(&p), "--tile", "16"]), "seam_index"), "1");

    let rf = ok(&["rf"]);
    assert_eq!(metric(&rf, "generator.reference_rf"), "207");
    assert_eq!(metric(&rf, "discriminator.rf"), "70");

    let g = virtstain(&["gradcheck"]);
    assert_eq!(code(&g), 0, "{}", String::from_utf8_lossy(&g.stderr));
    let worst: f64 = metric(&String::from_utf8_lossy(&g.stdout), "max_rel_error").parse().unwrap();
    assert!(worst < 1e-6);
}
