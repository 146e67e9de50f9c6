//! Command-line contract: subcommands, exit codes, determinism, and
//! agreement with the library.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

use hysum_core::heads::ProjectionHeads;

fn hysum(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hysum"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).unwrap()
}

fn gen_default(dir: &Path) {
    let out = hysum(
        dir,
        &["gen", "--seed", "7", "--size", "120", "--vocab", "400"],
    );
    assert!(out.status.success(), "{out:?}");
}

#[test]
fn gen_is_byte_deterministic() {
    let dir_a = TempDir::new().unwrap();
    let dir_b = TempDir::new().unwrap();
    gen_default(dir_a.path());
    gen_default(dir_b.path());
    for name in ["corpus.hysum", "queries.hysum"] {
        let a = fs::read(dir_a.path().join(name)).unwrap();
        let b = fs::read(dir_b.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical gen runs");
    }
}

#[test]
fn generated_files_pass_validate() {
    let dir = TempDir::new().unwrap();
    gen_default(dir.path());
    let out = hysum(
        dir.path(),
        &[
            "validate",
            "--corpus",
            "corpus.hysum",
            "--queries",
            "queries.hysum",
        ],
    );
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("corpus OK"));
    assert!(text.contains("queries OK"));
}

#[test]
fn missing_required_flag_exits_two() {
    let dir = TempDir::new().unwrap();
    // retrieve without --query is a clap usage error.
    let out = hysum(dir.path(), &["retrieve", "--corpus", "corpus.hysum"]);
    assert_eq!(out.status.code(), Some(2), "{out:?}");
    // retrieve without --corpus anywhere (flag or config) is also usage.
    let out = hysum(dir.path(), &["retrieve", "--query", "a bus"]);
    assert_eq!(out.status.code(), Some(2), "{out:?}");
}

#[test]
fn runtime_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let out = hysum(
        dir.path(),
        &["validate", "--corpus", "no-such-file.hysum"],
    );
    assert_eq!(out.status.code(), Some(1), "{out:?}");
}

#[test]
fn invalid_flag_values_exit_two() {
    let dir = TempDir::new().unwrap();
    gen_default(dir.path());
    for args in [
        vec!["retrieve", "--corpus", "corpus.hysum", "--query", "x", "--mask", "bogus"],
        vec!["retrieve", "--corpus", "corpus.hysum", "--query", "x", "--fusion", "bogus"],
        vec!["retrieve", "--corpus", "corpus.hysum", "--query", "x", "--k", "0"],
        vec![
            "eval", "--corpus", "corpus.hysum", "--queries", "queries.hysum", "--grid", "bogus",
        ],
        vec![
            "eval", "--corpus", "corpus.hysum", "--queries", "queries.hysum", "--grid", "k",
            "--k-range", "5..2",
        ],
        vec![
            "eval", "--corpus", "corpus.hysum", "--queries", "queries.hysum", "--epsilon", "1.5",
        ],
    ] {
        let out = hysum(dir.path(), &args);
        assert_eq!(out.status.code(), Some(2), "args {args:?} -> {out:?}");
    }
}

#[test]
fn retrieve_is_stable_across_runs_and_honors_mask_degeneracy() {
    let dir = TempDir::new().unwrap();
    gen_default(dir.path());
    let query_text = {
        let queries = fs::read_to_string(dir.path().join("queries.hysum")).unwrap();
        let first = queries.lines().nth(1).unwrap();
        let value: serde_json::Value = serde_json::from_str(first).unwrap();
        value["text"].as_str().unwrap().to_string()
    };

    let args = [
        "retrieve",
        "--corpus",
        "corpus.hysum",
        "--query",
        query_text.as_str(),
        "--mask",
        "description",
        "--k",
        "3",
    ];
    let first = hysum(dir.path(), &args);
    let second = hysum(dir.path(), &args);
    assert!(first.status.success(), "{first:?}");
    assert_eq!(stdout(&first), stdout(&second), "output must be stable");

    // Single-channel mask: at most 3 candidates, all from that channel.
    let text = stdout(&first);
    let rows: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with(|c: char| c.is_ascii_digit()))
        .collect();
    assert!(rows.len() <= 3);
    for row in rows {
        assert!(row.trim_end().ends_with("description"), "row: {row}");
    }
}

#[test]
fn retrieve_explain_prints_score_components() {
    let dir = TempDir::new().unwrap();
    gen_default(dir.path());
    let out = hysum(
        dir.path(),
        &[
            "retrieve",
            "--corpus",
            "corpus.hysum",
            "--query",
            "which item shows obj000 obj001 obj002 beside det000 det001 det002",
            "--k",
            "2",
            "--explain",
        ],
    );
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("word="));
    assert!(text.contains("sentence="));
    assert!(text.contains("fused="));
}

#[test]
fn train_with_zero_learning_rate_writes_initialization_bytes() {
    let dir = TempDir::new().unwrap();
    gen_default(dir.path());
    let out = hysum(
        dir.path(),
        &[
            "train",
            "--corpus",
            "corpus.hysum",
            "--queries",
            "queries.hysum",
            "--heads-out",
            "heads.json",
            "--lr",
            "0",
            "--epochs",
            "2",
            "--seed",
            "9",
        ],
    );
    assert!(out.status.success(), "{out:?}");
    let loaded = hysum::format::load_heads(&dir.path().join("heads.json")).unwrap();
    assert_eq!(loaded, ProjectionHeads::seeded(64, 9));

    // Saving the seeded heads directly gives the same bytes.
    let reference = dir.path().join("reference.json");
    hysum::format::save_heads(&reference, &ProjectionHeads::seeded(64, 9)).unwrap();
    assert_eq!(
        fs::read(dir.path().join("heads.json")).unwrap(),
        fs::read(&reference).unwrap()
    );
}

#[test]
fn train_is_reproducible_and_prints_epoch_losses() {
    let dir = TempDir::new().unwrap();
    gen_default(dir.path());
    let args = [
        "train",
        "--corpus",
        "corpus.hysum",
        "--queries",
        "queries.hysum",
        "--heads-out",
        "heads.json",
        "--epochs",
        "3",
        "--batch-size",
        "20",
        "--lr",
        "1e-3",
        "--seed",
        "7",
    ];
    let first = hysum(dir.path(), &args);
    assert!(first.status.success(), "{first:?}");
    let bytes_first = fs::read(dir.path().join("heads.json")).unwrap();
    let second = hysum(dir.path(), &args);
    assert_eq!(stdout(&first), stdout(&second));
    assert_eq!(bytes_first, fs::read(dir.path().join("heads.json")).unwrap());
    let text = stdout(&first);
    assert_eq!(text.matches("mean-loss").count(), 3);
}

#[test]
fn eval_grid_fusion_emits_one_row_per_mode() {
    let dir = TempDir::new().unwrap();
    gen_default(dir.path());
    let out = hysum(
        dir.path(),
        &[
            "eval",
            "--corpus",
            "corpus.hysum",
            "--queries",
            "queries.hysum",
            "--grid",
            "fusion",
        ],
    );
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    let records: Vec<&str> = text.lines().filter(|l| l.starts_with('{')).collect();
    assert_eq!(records.len(), 6, "one record per fusion mode:\n{text}");
    for mode in [
        "log-on-sentence",
        "log-on-word",
        "plain-sum",
        "sentence-only",
        "word-only",
        "log-both",
    ] {
        assert!(text.contains(mode), "missing mode {mode}");
    }
}

#[test]
fn eval_grid_k_range_emits_one_row_per_k() {
    let dir = TempDir::new().unwrap();
    gen_default(dir.path());
    let out = hysum(
        dir.path(),
        &[
            "eval",
            "--corpus",
            "corpus.hysum",
            "--queries",
            "queries.hysum",
            "--grid",
            "k",
            "--k-range",
            "1..10",
        ],
    );
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    let records: Vec<&str> = text.lines().filter(|l| l.starts_with('{')).collect();
    assert_eq!(records.len(), 10, "one record per K:\n{text}");
}

#[test]
fn eval_single_cell_matches_library_evaluate() {
    let dir = TempDir::new().unwrap();
    gen_default(dir.path());
    let out = hysum(
        dir.path(),
        &[
            "eval",
            "--corpus",
            "corpus.hysum",
            "--queries",
            "queries.hysum",
            "--k",
            "4",
        ],
    );
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    let record: serde_json::Value = serde_json::from_str(
        text.lines().find(|l| l.starts_with('{')).unwrap(),
    )
    .unwrap();

    let corpus = hysum::format::load_corpus(&dir.path().join("corpus.hysum")).unwrap();
    let queries = hysum::format::load_queries(&dir.path().join("queries.hysum")).unwrap();
    let heads = ProjectionHeads::identity(corpus.embedder.dimension);
    let report = hysum_core::harness::evaluate(
        &corpus.items,
        &queries,
        &heads,
        &corpus.embedder,
        &hysum_core::kernels::FusionConfig::default(),
        hysum_core::rank::ChannelMask::all(),
        4,
    )
    .unwrap();
    assert_eq!(record["recall"].as_f64().unwrap(), report.mean_recall);
    assert_eq!(record["precision"].as_f64().unwrap(), report.mean_precision);
    assert_eq!(record["mrr"].as_f64().unwrap(), report.mean_mrr);
}

#[test]
fn eval_reports_carry_the_metric_substitution_header() {
    let dir = TempDir::new().unwrap();
    gen_default(dir.path());
    let out = hysum(
        dir.path(),
        &[
            "eval",
            "--corpus",
            "corpus.hysum",
            "--queries",
            "queries.hysum",
        ],
    );
    let text = stdout(&out);
    assert!(text.contains("stand-in for answer accuracy"));
    assert!(text.contains("recall 1.0"));
}

#[test]
fn eval_cell_matches_retrieve_plus_hand_computed_metrics() {
    // Five-item corpus, one query with two gold items: the eval cell must
    // equal metrics computed by hand from the retrieve ranking.
    let dir = TempDir::new().unwrap();
    let spec = hysum_core::embed::EmbedderSpec::toy(16);
    let items: Vec<hysum_core::rank::CorpusItem> = [
        ("img0", "red bus parked"),
        ("img1", "red bus moving"),
        ("img2", "green tree"),
        ("img3", "small dog"),
        ("img4", "empty street"),
    ]
    .iter()
    .map(|(id, text)| hysum_core::rank::CorpusItem::from_texts(id, text, text, text, &spec))
    .collect();
    let queries = vec![hysum_core::harness::Query {
        query_id: "q0".to_string(),
        text: "red bus".to_string(),
        relevant: vec!["img0".to_string(), "img1".to_string()],
        answer: None,
    }];
    hysum::format::save_corpus(&dir.path().join("c.hysum"), &spec, &items, false).unwrap();
    hysum::format::save_queries(&dir.path().join("q.hysum"), &queries).unwrap();

    let retrieve_out = hysum(
        dir.path(),
        &[
            "retrieve", "--corpus", "c.hysum", "--query", "red bus", "--k", "2",
        ],
    );
    assert!(retrieve_out.status.success(), "{retrieve_out:?}");
    let ranked: Vec<String> = stdout(&retrieve_out)
        .lines()
        .filter(|l| l.starts_with(|c: char| c.is_ascii_digit()))
        .map(|l| l.split_whitespace().nth(1).unwrap().to_string())
        .collect();

    // Same ids and order as the library pipeline.
    let lib_ids = hysum_core::rank::retrieve(
        &hysum_core::rank::embed_query("red bus", &spec),
        &items,
        &hysum_core::heads::ProjectionHeads::identity(16),
        &hysum_core::kernels::FusionConfig::default(),
        2,
        hysum_core::rank::ChannelMask::all(),
    )
    .unwrap()
    .ids();
    assert_eq!(ranked, lib_ids);

    // Hand-computed metrics over the retrieved union.
    let gold = ["img0", "img1"];
    let hits = ranked.iter().filter(|id| gold.contains(&id.as_str())).count();
    let recall = hits as f64 / gold.len() as f64;
    let precision = hits as f64 / ranked.len() as f64;
    let mrr = ranked
        .iter()
        .position(|id| gold.contains(&id.as_str()))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64);

    let eval_out = hysum(
        dir.path(),
        &[
            "eval", "--corpus", "c.hysum", "--queries", "q.hysum", "--k", "2",
        ],
    );
    assert!(eval_out.status.success(), "{eval_out:?}");
    let record: serde_json::Value = serde_json::from_str(
        stdout(&eval_out)
            .lines()
            .find(|l| l.starts_with('{'))
            .unwrap(),
    )
    .unwrap();
    assert_eq!(record["recall"].as_f64().unwrap(), recall);
    assert_eq!(record["precision"].as_f64().unwrap(), precision);
    assert_eq!(record["mrr"].as_f64().unwrap(), mrr);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = TempDir::new().unwrap();
    gen_default(dir.path());
    fs::write(
        dir.path().join("run.toml"),
        "corpus = \"corpus.hysum\"\nqueries = \"queries.hysum\"\nk = 2\nmask = \"description\"\n",
    )
    .unwrap();

    // Paths and settings come from the file.
    let out = hysum(dir.path(), &["eval", "--config", "run.toml"]);
    assert!(out.status.success(), "{out:?}");
    let record: serde_json::Value = serde_json::from_str(
        stdout(&out).lines().find(|l| l.starts_with('{')).unwrap(),
    )
    .unwrap();
    assert_eq!(record["k"], 2);
    assert_eq!(record["mask"], "description");

    // An explicit flag wins over the file.
    let out = hysum(dir.path(), &["eval", "--config", "run.toml", "--k", "3"]);
    let record: serde_json::Value = serde_json::from_str(
        stdout(&out).lines().find(|l| l.starts_with('{')).unwrap(),
    )
    .unwrap();
    assert_eq!(record["k"], 3);

    // The effective config is echoed.
    assert!(stdout(&out).lines().next().unwrap().starts_with("# config:"));
}

#[test]
fn unknown_config_keys_fail() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("run.toml"), "corpsu = \"x\"\n").unwrap();
    let out = hysum(
        dir.path(),
        &["validate", "--config", "run.toml", "--corpus", "corpus.hysum"],
    );
    assert_eq!(out.status.code(), Some(1), "{out:?}");
}
