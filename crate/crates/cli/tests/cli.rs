use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kgfuse::synthetic::{format_corpus, synthetic_world, WorldConfig};
use tempfile::TempDir;

fn kgfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgfuse"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let world = synthetic_world(&WorldConfig {
            sentences: 60,
            ..WorldConfig::default()
        })
        .unwrap();
        let dir = TempDir::new().unwrap();
        let schema = format!(
            "entities: {}\ntriggers: {}\n",
            world.schema.entity_types().join(", "),
            world.schema.trigger_types().join(", ")
        );
        fs::write(dir.path().join("schema.txt"), schema).unwrap();
        fs::write(dir.path().join("corpus.txt"), format_corpus(&world.corpus)).unwrap();
        world.seed_kg.save(dir.path().join("kg.tsv")).unwrap();
        world.world.save(dir.path().join("world.tsv")).unwrap();
        Fixture { dir }
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).display().to_string()
    }
}

#[test]
fn help_succeeds_and_bad_usage_exits_one() {
    assert_eq!(kgfuse(&["--help"]).status.code(), Some(0));
    assert_eq!(kgfuse(&["fuse", "--help"]).status.code(), Some(0));
    assert_eq!(kgfuse(&[]).status.code(), Some(1));
    assert_eq!(kgfuse(&["gradcheck", "--bogus"]).status.code(), Some(1));
    assert_eq!(kgfuse(&["gradcheck", "--seed", "x"]).status.code(), Some(1));
}

#[test]
fn gradcheck_reports_small_error() {
    let v = json(&kgfuse(&["gradcheck", "--seed", "3"]));
    assert!(v["max_relative_error"].as_f64().unwrap() < 1e-4);
    assert!(v["checked"].as_u64().unwrap() > 0);
}

#[test]
fn gradcheck_over_tolerance_is_a_numeric_failure() {
    let out = kgfuse(&["gradcheck", "--seed", "3", "--tolerance", "0"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn invalid_configuration_exits_one() {
    let out = kgfuse(&["gradcheck", "--kernel-width", "50"]);
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn unreadable_or_malformed_input_exits_two() {
    let f = Fixture::new();
    let bad = f.path("bad.tsv");
    fs::write(&bad, "a\tb\n").unwrap();
    for kg in [bad.as_str(), "/nonexistent/kg.tsv"] {
        let out = kgfuse(&["train-kge", "--kg", kg, "--out", &f.path("m.json")]);
        assert_eq!(out.status.code(), Some(2));
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn fuse_writes_graph_and_report() {
    let f = Fixture::new();
    let out_dir = f.path("out");
    let args = [
        "fuse",
        "--kg",
        &f.path("kg.tsv"),
        "--corpus",
        &f.path("corpus.txt"),
        "--schema",
        &f.path("schema.txt"),
        "--rounds",
        "2",
        "--top-k",
        "5",
        "--epochs",
        "3",
        "--explorer-epochs",
        "5",
        "--seed",
        "4",
        "--out",
        &out_dir,
    ];
    let report = json(&kgfuse(&args));
    let rounds = report["rounds"].as_array().unwrap();
    assert_eq!(rounds.len(), 2);
    let kg_path = PathBuf::from(report["final_kg_path"].as_str().unwrap());
    let kg = kgfuse::KnowledgeGraph::load(&kg_path).unwrap();
    assert_eq!(kg.len() as u64, rounds[1]["kg_size"].as_u64().unwrap());
    let on_disk = fs::read_to_string(Path::new(&out_dir).join("report.json")).unwrap();
    assert_eq!(
        serde_json::from_str::<serde_json::Value>(&on_disk).unwrap(),
        report
    );
    for file in ["kge.json", "explorer.json", "embeddings.txt"] {
        assert!(Path::new(&out_dir).join(file).exists(), "{file}");
    }
}

#[test]
fn train_then_evaluate_link_prediction() {
    let f = Fixture::new();
    let model = f.path("model.json");
    let report = json(&kgfuse(&[
        "train-kge",
        "--kg",
        &f.path("kg.tsv"),
        "--epochs",
        "5",
        "--pretrain-epochs",
        "20",
        "--seed",
        "1",
        "--out",
        &model,
    ]));
    assert_eq!(report["epoch_losses"].as_array().unwrap().len(), 5);

    let pools = f.path("pools.json");
    let eval = [
        "eval-kgf",
        "--model",
        &model,
        "--kg",
        &f.path("world.tsv"),
        "--pools",
        &pools,
        "--pool-size",
        "20",
    ];
    let first = json(&kgfuse(&eval));
    assert!(Path::new(&pools).exists());
    let mrr = first["mrr"].as_f64().unwrap();
    assert!(mrr > 0.0 && mrr <= 1.0);
    let hits: Vec<f64> = ["10", "20", "30"]
        .iter()
        .map(|n| first["hits"][n].as_f64().unwrap())
        .collect();
    assert!(hits[0] <= hits[1] && hits[1] <= hits[2]);
    assert_eq!(json(&kgfuse(&eval)), first);
}

#[test]
fn train_then_evaluate_tagger() {
    let f = Fixture::new();
    let dir = f.path("jee");
    let report = json(&kgfuse(&[
        "train-jee",
        "--corpus",
        &f.path("corpus.txt"),
        "--schema",
        &f.path("schema.txt"),
        "--epochs",
        "40",
        "--lr",
        "0.2",
        "--out",
        &dir,
    ]));
    let losses = report["epochs"].as_array().unwrap();
    assert!(report["final_loss"]["jee"].as_f64().unwrap() < losses[0]["jee"].as_f64().unwrap());
    for mode in ["span", "token"] {
        let v = json(&kgfuse(&[
            "eval-jee",
            "--model",
            &dir,
            "--corpus",
            &f.path("corpus.txt"),
            "--mode",
            mode,
        ]));
        for key in ["precision", "recall", "f1"] {
            let x = v[key].as_f64().unwrap();
            assert!((0.0..=1.0).contains(&x), "{key} = {x}");
        }
    }
}

#[test]
fn align_maps_candidates_onto_graph_relations() {
    let f = Fixture::new();
    let kg = f.path("small.tsv");
    fs::write(
        &kg,
        "ann\tvisited\tparis\nbob\tvisited\trome\nann\tmet\tbob\n",
    )
    .unwrap();
    let candidates = f.path("candidates.tsv");
    fs::write(
        &candidates,
        "ann\tvisited\tMovement\tparis\ncid\tvisited\tMovement\trome\n",
    )
    .unwrap();
    let v = json(&kgfuse(&[
        "align",
        "--kg",
        &kg,
        "--candidates",
        &candidates,
        "--gamma",
        "1",
        "--epsilon",
        "0.5",
    ]));
    let alignments = v["alignments"].as_array().unwrap();
    assert_eq!(alignments.len(), 1);
    assert_eq!(alignments[0]["to"], "visited");
    assert_eq!(v["translated"].as_array().unwrap().len(), 2);

    fs::write(&candidates, "ann\tvisited\tparis\n").unwrap();
    let out = kgfuse(&["align", "--kg", &kg, "--candidates", &candidates]);
    assert_eq!(out.status.code(), Some(2));
}
