//! End-to-end runs of the binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use xmodal::netcore::{read_checkpoint, ParamStore};
use xmodal::rng;

fn xmodal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xmodal"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) {
    let out = xmodal(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_corpus(dir: &Path) -> PathBuf {
    let d = dir.join("data");
    ok(&[
        "gen",
        "--out",
        s(&d),
        "--seed",
        "5",
        "--n-ids",
        "24",
        "--per-id",
        "3,2",
    ]);
    d
}

#[test]
fn gen_writes_splits_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let d = small_corpus(tmp.path());
    let manifest = fs::read_to_string(d.join("manifest.csv")).unwrap();
    let mut lines = manifest.lines();
    assert_eq!(
        lines.next(),
        Some("split,identities,samples_a,samples_b,records")
    );
    let mut total_ids = 0;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let text = fs::read_to_string(d.join(format!("{}.dimset", f[0]))).unwrap();
        let records: usize = f[4].parse().unwrap();
        assert_eq!(text.lines().count(), records + 1);
        let ids: usize = f[1].parse().unwrap();
        assert_eq!(f[2].parse::<usize>().unwrap(), 3 * ids);
        assert_eq!(f[3].parse::<usize>().unwrap(), 2 * ids);
        total_ids += ids;
    }
    assert_eq!(total_ids, 24);
}

#[test]
fn config_file_with_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("gen.cfg");
    fs::write(&cfg, "# corpus\nn_ids = 30\nper_id = 1,1\nseed = 4\n").unwrap();
    let a = tmp.path().join("a");
    ok(&["gen", "--config", s(&cfg), "--out", s(&a), "--n-ids", "12"]);
    let manifest = fs::read_to_string(a.join("manifest.csv")).unwrap();
    let ids: usize = manifest
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(ids, 12);
    let b = tmp.path().join("b");
    ok(&[
        "gen",
        "--out",
        s(&b),
        "--n-ids",
        "12",
        "--per-id",
        "1,1",
        "--seed",
        "4",
    ]);
    assert_eq!(
        fs::read(a.join("train.dimset")).unwrap(),
        fs::read(b.join("train.dimset")).unwrap()
    );
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = small_corpus(tmp.path());
    let code = |args: &[&str]| xmodal(args).status.code().unwrap();
    assert_eq!(
        code(&["gen", "--out", s(&tmp.path().join("x")), "--n-ids", "abc"]),
        2
    );
    let bad = tmp.path().join("bad.cfg");
    fs::write(&bad, "no_such_key=1\n").unwrap();
    assert_eq!(
        code(&[
            "gen",
            "--config",
            s(&bad),
            "--out",
            s(&tmp.path().join("y"))
        ]),
        2
    );
    assert_eq!(
        code(&["gen", "--config", s(&tmp.path().join("missing.cfg"))]),
        3
    );
    assert_eq!(
        code(&[
            "eval",
            "--model",
            s(&tmp.path().join("none.ckpt")),
            "--data",
            s(&d)
        ]),
        3
    );
    let m = tmp.path().join("m");
    let diverge = [
        "train",
        "--data",
        s(&d),
        "--out",
        s(&m),
        "--total-iters",
        "100",
        "--batch-size",
        "8",
        "--lr-initial",
        "1e9",
        "--momentum",
        "0.99",
    ];
    assert_eq!(code(&diverge), 4);
}

#[test]
fn train_zero_iterations_writes_initial_params() {
    let tmp = tempfile::tempdir().unwrap();
    let d = small_corpus(tmp.path());
    let m = tmp.path().join("m");
    ok(&[
        "train",
        "--data",
        s(&d),
        "--out",
        s(&m),
        "--total-iters",
        "0",
        "--seed",
        "9",
    ]);
    let (spec, params) = read_checkpoint(fs::File::open(m.join("model.ckpt")).unwrap()).unwrap();
    let init = ParamStore::init(&spec, rng::derive_seed(9, rng::tag("init"))).unwrap();
    assert_eq!(params, init);
    assert_eq!(
        fs::read_to_string(m.join("history.csv"))
            .unwrap()
            .lines()
            .count(),
        1
    );
}

#[test]
fn train_history_cadence() {
    let tmp = tempfile::tempdir().unwrap();
    let d = small_corpus(tmp.path());
    let m = tmp.path().join("m");
    ok(&[
        "train",
        "--data",
        s(&d),
        "--out",
        s(&m),
        "--total-iters",
        "30",
        "--val-interval",
        "10",
        "--batch-size",
        "16",
        "--lr-drops",
        "none",
        "--lr-initial",
        "0.01",
    ]);
    let history = fs::read_to_string(m.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 30 / 10 + 1);
    assert!(history.starts_with(
        "iter,loss_total,loss_id,loss_gender,loss_nationality,val_acc_id_A,val_acc_id_B"
    ));
}

fn trained(tmp: &Path) -> (PathBuf, PathBuf) {
    let d = small_corpus(tmp);
    let m = tmp.join("m");
    ok(&[
        "train",
        "--data",
        s(&d),
        "--out",
        s(&m),
        "--total-iters",
        "20",
        "--batch-size",
        "16",
        "--lr-drops",
        "none",
        "--lr-initial",
        "0.02",
    ]);
    (d, m.join("model.ckpt"))
}

#[test]
fn eval_rows_and_verification_doubling() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, model) = trained(tmp.path());
    let e = tmp.path().join("e");
    ok(&[
        "eval",
        "--model",
        s(&model),
        "--data",
        s(&d),
        "--out",
        s(&e),
        "--protocols",
        "match2",
        "--strata",
        "U",
    ]);
    let text = fs::read_to_string(e.join("metrics.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("match2,a2b,U,2,") && rows[1].starts_with("match2,b2a,U,2,"));

    ok(&[
        "eval",
        "--model",
        s(&model),
        "--data",
        s(&d),
        "--out",
        s(&e),
        "--protocols",
        "match2,verify",
        "--strata",
        "U,G",
    ]);
    let text = fs::read_to_string(e.join("metrics.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    for m in rows.iter().filter(|r| r[0] == "match2") {
        let v = rows
            .iter()
            .find(|r| r[0] == "verify" && r[1] == m[1] && r[2] == m[2])
            .unwrap();
        assert_eq!(
            v[5].parse::<usize>().unwrap(),
            2 * m[5].parse::<usize>().unwrap()
        );
    }
}

#[test]
fn oracle_defaults_and_monte_carlo() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tmp.path().join("o");
    ok(&["oracle", "--out", s(&o)]);
    let text = fs::read_to_string(o.join("oracle.csv")).unwrap();
    assert!(text
        .lines()
        .any(|l| l.starts_with("match2,0,0,2,1,0,,0.25,")));
    let eer: Vec<f64> = text
        .lines()
        .filter(|l| l.starts_with("verify_eer,0,0,"))
        .map(|l| l.split(',').nth(7).unwrap().parse().unwrap())
        .collect();
    assert_eq!(eer, vec![1.0 / 3.0]);

    ok(&[
        "oracle",
        "--out",
        s(&o),
        "--e-f",
        "0,0.3",
        "--e-v",
        "0.1",
        "--trials",
        "1000000",
        "--seed",
        "2",
    ]);
    let text = fs::read_to_string(o.join("oracle.csv")).unwrap();
    for line in text.lines().skip(1) {
        let diff: f64 = line.split(',').nth(10).unwrap().parse().unwrap();
        assert!(diff < 0.003, "{line}");
    }
}

#[test]
fn every_subcommand_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, model) = trained(tmp.path());
    let runs: Vec<(Vec<&str>, &str)> = vec![
        (
            vec!["gen", "--seed", "5", "--n-ids", "24", "--per-id", "3,2"],
            "test.dimset",
        ),
        (
            vec![
                "train",
                "--data",
                s(&d),
                "--total-iters",
                "15",
                "--batch-size",
                "16",
                "--val-interval",
                "5",
            ],
            "model.ckpt",
        ),
        (
            vec![
                "eval",
                "--model",
                s(&model),
                "--data",
                s(&d),
                "--strata",
                "U,G",
                "--N",
                "2,3",
            ],
            "metrics.csv",
        ),
        (
            vec!["oracle", "--trials", "20000", "--seed", "3"],
            "oracle.csv",
        ),
        (
            vec![
                "simulate", "--e-f", "0.1", "--e-v", "0.3", "--trials", "20000",
            ],
            "simulate.csv",
        ),
        (
            vec![
                "mds",
                "--model",
                s(&model),
                "--data",
                s(&d),
                "--limit",
                "30",
            ],
            "mds.csv",
        ),
    ];
    for (i, (args, file)) in runs.iter().enumerate() {
        let outs: Vec<PathBuf> = (0..2)
            .map(|k| tmp.path().join(format!("r{i}_{k}")))
            .collect();
        for o in &outs {
            let mut a = args.clone();
            a.extend(["--out", s(o)]);
            ok(&a);
        }
        let names: Vec<_> = fs::read_dir(&outs[0])
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert!(names.iter().any(|n| n == *file));
        for n in names {
            assert_eq!(
                fs::read(outs[0].join(&n)).unwrap(),
                fs::read(outs[1].join(&n)).unwrap(),
                "{args:?} {n:?}"
            );
        }
    }
}
