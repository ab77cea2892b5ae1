mod common;

use std::fs;
use std::path::Path;

use common::{path_arg, protoverb, protoverb_ok};
use protoverb::encode::EmbeddingStore;
use protoverb::optim::Checkpoint;
use protoverb::report::PROTOTYPE_ID_PREFIX;
use serde_json::Value;

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    /// A small synthetic dataset with toy embeddings for both splits.
    fn new() -> Self {
        let fx = Fixture {
            dir: tempfile::tempdir().unwrap(),
        };
        protoverb_ok(&[
            "synth",
            "--out",
            &fx.p("data"),
            "--seed",
            "3",
            "--classes",
            "4",
            "--n-train",
            "80",
            "--n-test",
            "80",
            "--n-corpus",
            "200",
        ]);
        for split in ["train", "test"] {
            protoverb_ok(&[
                "encode",
                "--dataset",
                &fx.p(&format!("data/{split}.csv")),
                "--labels",
                &fx.p("data/labels.txt"),
                "--template-file",
                &fx.p("data/templates.txt"),
                "--dim-m",
                "256",
                "--out",
                &fx.p(&format!("{split}.jsonl")),
            ]);
        }
        fx
    }

    fn p(&self, name: &str) -> String {
        path_arg(&self.dir.path().join(name))
    }

    fn path(&self, name: &str) -> std::path::PathBuf {
        self.dir.path().join(name)
    }

    fn train(&self, seeds: &str, out: &str) {
        protoverb_ok(&[
            "train",
            "--embeddings",
            &self.p("train.jsonl"),
            "--labels",
            &self.p("data/labels.txt"),
            "--k",
            "5",
            "--dim-d",
            "32",
            "--epochs",
            "5",
            "--seed",
            seeds,
            "--out",
            &self.p(out),
        ]);
    }
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn code(args: &[&str]) -> i32 {
    protoverb(args).status.code().unwrap()
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&["bogus"]), 1);
    assert_eq!(code(&[]), 1);
    assert_eq!(code(&["train", "--k", "5"]), 1);
    assert_eq!(code(&["params", "--head", "mlp", "--classes", "3"]), 1);
    assert_eq!(code(&["params"]), 1);
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["--version"]), 0);
}

#[test]
fn params_prints_counts() {
    let out = protoverb_ok(&["params", "--classes", "10"]);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("264704 "));
    let out = protoverb_ok(&["params", "--classes", "10", "--head", "spv"]);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("10240 "));
}

#[test]
fn zero_shot_train_is_rejected_with_guidance() {
    let fx = Fixture::new();
    let out = protoverb(&[
        "train",
        "--embeddings",
        &fx.p("train.jsonl"),
        "--labels",
        &fx.p("data/labels.txt"),
        "--k",
        "0",
        "--out",
        &fx.p("x.json"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("pretrain"), "{stderr}");
    assert!(!fx.path("x.json").exists());
}

#[test]
fn several_seeds_need_a_placeholder() {
    let fx = Fixture::new();
    let out = protoverb(&[
        "train",
        "--embeddings",
        &fx.p("train.jsonl"),
        "--labels",
        &fx.p("data/labels.txt"),
        "--k",
        "2",
        "--seed",
        "1,2",
        "--out",
        &fx.p("ck.json"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("{seed}"));
}

#[test]
fn data_errors_exit_2() {
    let fx = Fixture::new();
    let missing = fx.p("missing.json");
    assert_eq!(
        code(&[
            "eval",
            "--checkpoint",
            &missing,
            "--embeddings",
            &fx.p("test.jsonl")
        ]),
        2
    );

    let bad = fx.path("bad.jsonl");
    fs::write(
        &bad,
        "{\"m\":2,\"source\":\"x\"}\n{\"id\":\"a\",\"label\":0,\"v\":[1.0]}\n",
    )
    .unwrap();
    let out = protoverb(&[
        "train",
        "--embeddings",
        &path_arg(&bad),
        "--labels",
        &fx.p("data/labels.txt"),
        "--k",
        "1",
        "--out",
        &fx.p("ck.json"),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains(":2"),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // More shots than the pool holds for a class.
    let out = protoverb(&[
        "train",
        "--embeddings",
        &fx.p("train.jsonl"),
        "--labels",
        &fx.p("data/labels.txt"),
        "--k",
        "500",
        "--out",
        &fx.p("ck.json"),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_vectors_in_files_are_data_errors() {
    let fx = Fixture::new();
    let zero = fx.path("zero.jsonl");
    fs::write(
        &zero,
        "{\"m\":2,\"source\":\"x\"}\n{\"id\":\"a\",\"label\":0,\"v\":[0.0,0.0]}\n",
    )
    .unwrap();
    let out = protoverb(&[
        "train",
        "--embeddings",
        &path_arg(&zero),
        "--labels",
        &fx.p("data/labels.txt"),
        "--k",
        "1",
        "--out",
        &fx.p("ck.json"),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("zero.jsonl:2"));
}

#[test]
fn numerical_errors_exit_3() {
    let fx = Fixture::new();
    fx.train("1", "ck.json");
    let mut ckpt = Checkpoint::load(fx.path("ck.json")).unwrap();
    ckpt.w.iter_mut().for_each(|w| *w = 0.0);
    ckpt.save(fx.path("collapsed.json")).unwrap();
    let out = protoverb(&[
        "eval",
        "--checkpoint",
        &fx.p("collapsed.json"),
        "--embeddings",
        &fx.p("test.jsonl"),
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out = protoverb(&[
        "train",
        "--embeddings",
        &fx.p("train.jsonl"),
        "--labels",
        &fx.p("data/labels.txt"),
        "--k",
        "2",
        "--lr",
        "1e308",
        "--epochs",
        "3",
        "--out",
        &fx.p("diverged.json"),
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(!fx.path("diverged.json").exists());
}

#[test]
fn full_pipeline_and_seed_fan_out() {
    let fx = Fixture::new();
    protoverb_ok(&[
        "pretrain",
        "--corpus",
        &fx.p("data/corpus.txt"),
        "--labels",
        &fx.p("data/labels.txt"),
        "--label-words",
        &fx.p("data/label_words.txt"),
        "--q",
        "10",
        "--dim-m",
        "256",
        "--dim-d",
        "32",
        "--epochs",
        "3",
        "--seed",
        "1",
        "--out",
        &fx.p("pre.json"),
    ]);
    let pre = Checkpoint::load(fx.path("pre.json")).unwrap();
    assert_eq!((pre.m, pre.d, pre.k), (256, 32, 4));
    assert_eq!(pre.config.phase, "pretrain");
    assert_eq!(pre.config.k, 0);
    assert_eq!(pre.config.optim.lr, 1e-2);

    protoverb_ok(&[
        "train",
        "--embeddings",
        &fx.p("train.jsonl"),
        "--checkpoint",
        &fx.p("pre.json"),
        "--k",
        "5",
        "--epochs",
        "5",
        "--seed",
        "1",
        "--out",
        &fx.p("tuned.json"),
    ]);
    assert!(Checkpoint::load(fx.path("tuned.json")).unwrap().config.pretrained);

    fx.train("1,2", "ck-{seed}.json");
    fx.train("2", "single.json");
    assert_eq!(
        fs::read(fx.path("ck-2.json")).unwrap(),
        fs::read(fx.path("single.json")).unwrap()
    );

    protoverb_ok(&[
        "eval",
        "--checkpoint",
        &fx.p("ck-{seed}.json"),
        "--seed",
        "1,2",
        "--embeddings",
        &fx.p("test.jsonl"),
        "--out",
        &fx.p("both.json"),
    ]);
    protoverb_ok(&[
        "eval",
        "--checkpoint",
        &fx.p("single.json"),
        "--embeddings",
        &fx.p("test.jsonl"),
        "--out",
        &fx.p("one.json"),
    ]);
    let both = json(&fx.path("both.json"));
    let one = json(&fx.path("one.json"));
    let runs = both["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    assert_eq!(runs[1], one["runs"][0]);
    assert_eq!(runs[0]["seed"], 1);
    assert!(
        runs.iter().all(|r| r["micro_f1"].as_f64().unwrap() > 0.5),
        "{both}"
    );
    assert!(both.get("timing").unwrap().get("wall_clock_ms").is_none());

    protoverb_ok(&[
        "eval",
        "--checkpoint",
        &fx.p("single.json"),
        "--embeddings",
        &fx.p("test.jsonl"),
        "--timing",
        "--out",
        &fx.p("timed.json"),
    ]);
    assert!(json(&fx.path("timed.json"))["timing"]["wall_clock_ms"]
        .as_f64()
        .is_some());

    let mismatch = protoverb(&[
        "eval",
        "--checkpoint",
        &fx.p("single.json"),
        "--seed",
        "7",
        "--embeddings",
        &fx.p("test.jsonl"),
    ]);
    assert_eq!(mismatch.status.code(), Some(1));

    protoverb_ok(&[
        "dump",
        "--checkpoint",
        &fx.p("single.json"),
        "--embeddings",
        &fx.p("test.jsonl"),
        "--out",
        &fx.p("dump.jsonl"),
    ]);
    let dump = EmbeddingStore::load(fx.path("dump.jsonl")).unwrap();
    assert_eq!(dump.dim(), 32);
    assert_eq!(dump.len(), 80 + 4);
    let protos: Vec<_> = dump
        .records()
        .iter()
        .filter(|r| r.id.starts_with(PROTOTYPE_ID_PREFIX))
        .collect();
    assert_eq!(protos.len(), 4);
    assert_eq!(protos[3].id, "proto:3");
    assert_eq!(protos[3].label, Some(3));
}

#[test]
fn ablate_writes_five_reports() {
    let fx = Fixture::new();
    protoverb_ok(&[
        "ablate",
        "--embeddings",
        &fx.p("train.jsonl"),
        "--test-embeddings",
        &fx.p("test.jsonl"),
        "--labels",
        &fx.p("data/labels.txt"),
        "--k",
        "3",
        "--dim-d",
        "16",
        "--epochs",
        "2",
        "--seed",
        "1,2",
        "--out",
        &fx.p("ablate.json"),
    ]);
    let reports = json(&fx.path("ablate.json"))["reports"]
        .as_array()
        .unwrap()
        .clone();
    assert_eq!(reports.len(), 5);
    for r in &reports {
        assert_eq!(r["runs"].as_array().unwrap().len(), 2);
    }
    assert_eq!(reports[0]["config"]["combo"], "L_s");
    assert_eq!(
        code(&[
            "ablate",
            "--embeddings",
            "x",
            "--test-embeddings",
            "y",
            "--lambda1",
            "0"
        ]),
        1
    );
}

#[test]
fn precomputed_encoder_round_trip() {
    let fx = Fixture::new();
    protoverb_ok(&[
        "encode",
        "--encoder",
        "precomputed",
        "--dataset",
        &fx.p("data/test.csv"),
        "--labels",
        &fx.p("data/labels.txt"),
        "--template-file",
        &fx.p("data/templates.txt"),
        "--template-index",
        "1",
        "--out",
        &fx.p("prompts.txt"),
    ]);
    let prompts = fs::read_to_string(fx.path("prompts.txt")).unwrap();
    let labels = fs::read_to_string(fx.path("prompts.txt.labels")).unwrap();
    assert_eq!(prompts.lines().count(), 80);
    assert_eq!(labels.lines().count(), 80);
    assert!(prompts.lines().all(|l| l.ends_with(" Topic: [MASK].")));

    protoverb_ok(&[
        "pretrain",
        "--encoder",
        "precomputed",
        "--corpus",
        &fx.p("data/corpus.txt"),
        "--labels",
        &fx.p("data/labels.txt"),
        "--label-words",
        &fx.p("data/label_words.txt"),
        "--q",
        "5",
        "--seed",
        "2",
        "--out",
        &fx.p("pretrain_prompts.txt"),
    ]);
    let pre = fs::read_to_string(fx.path("pretrain_prompts.txt")).unwrap();
    assert!(pre
        .lines()
        .all(|l| l.contains(" In this sentence, ") && l.ends_with(" means [MASK].")));
    assert_eq!(
        pre.lines().count(),
        fs::read_to_string(fx.path("pretrain_prompts.txt.labels"))
            .unwrap()
            .lines()
            .count()
    );

    // Stand in for an external exporter: re-tag toy vectors with a foreign source.
    let foreign = fs::read_to_string(fx.path("train.jsonl")).unwrap().replacen(
        "\"source\":\"toy:m=256:seed=0\"",
        "\"source\":\"plm:external\"",
        1,
    );
    assert!(foreign.contains("plm:external"));
    fs::write(fx.path("foreign.jsonl"), foreign).unwrap();
    protoverb_ok(&[
        "pretrain",
        "--encoder",
        "precomputed",
        "--embeddings",
        &fx.p("foreign.jsonl"),
        "--labels",
        &fx.p("data/labels.txt"),
        "--dim-d",
        "16",
        "--epochs",
        "1",
        "--out",
        &fx.p("pre.json"),
    ]);
    let ckpt = Checkpoint::load(fx.path("pre.json")).unwrap();
    assert_eq!(ckpt.config.source, "plm:external");
    assert_eq!(ckpt.config.optim.lr, 3e-5);
    assert_eq!(ckpt.m, 256);
}
