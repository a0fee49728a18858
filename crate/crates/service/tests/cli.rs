use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn anon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anon"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Char span of every occurrence of `surface`.
fn occurrences(text: &str, surface: &str) -> Vec<(usize, usize)> {
    text.match_indices(surface)
        .map(|(b, _)| {
            let s = text[..b].chars().count();
            (s, s + surface.chars().count())
        })
        .collect()
}

fn gold_doc(id: &str, text: &str, surfaces: &[(&str, &str)]) -> Value {
    let mut gold: Vec<Value> = Vec::new();
    for (surface, label) in surfaces {
        for (s, e) in occurrences(text, surface) {
            gold.push(json!({"start": s, "end": e, "label": label}));
        }
    }
    gold.sort_by_key(|g| g["start"].as_u64());
    json!({"id": id, "language": "de", "text": text, "gold": gold})
}

fn write_lines(dir: &Path, name: &str, items: &[Value]) -> PathBuf {
    let path = dir.join(name);
    let body: String = items.iter().map(|v| format!("{v}\n")).collect();
    fs::write(&path, body).unwrap();
    path
}

fn corpus() -> Vec<Value> {
    let names = ["Meier", "Huber", "Keller", "Weber", "Frei", "Brunner"];
    names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let text = format!(
                "Urteil vom {d}. Mai 2021\nHans {n}, Beschwerdeführer,\ngegen\nGemeinde Uster.\nSachverhalt:\n\
                 Hans {n} reichte am {d}. Mai Beschwerde ein. Das Gericht hörte Hans {n} an.\nKeine weiteren Bemerkungen.",
                d = i + 1
            );
            gold_doc(&format!("doc{i}"), &text, &[(&format!("Hans {n}"), "PER")])
        })
        .collect()
}

#[test]
fn eval_table_from_gold_and_pred() {
    let dir = tempfile::tempdir().unwrap();
    let docs = corpus();
    let gold = write_lines(dir.path(), "g.jsonl", &docs);
    // predict only the first mention of each party
    let pred: Vec<Value> = docs
        .iter()
        .map(|d| json!({"doc_id": d["id"], "spans": [{"span": [d["gold"][0]["start"], d["gold"][0]["end"]], "label": "PER"}]}))
        .collect();
    let pred = write_lines(dir.path(), "p.jsonl", &pred);
    let out = anon(&[
        "eval",
        "--gold",
        gold.to_str().unwrap(),
        "--pred",
        pred.to_str().unwrap(),
        "--format",
        "table",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = stdout(&out);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 4, "{table}");
    assert!(lines[0].starts_with("Configuration") && lines[0].contains("Normal") && lines[0].contains("Uniformizing"));
    assert!(lines[1].contains("P") && lines[1].contains("R") && lines[1].contains("F1"));
    let nums: Vec<&str> = lines[3].split_whitespace().filter(|t| t.contains('.')).collect();
    assert_eq!(
        nums,
        ["100.00", "33.33", "50.00", "100.00", "100.00", "100.00"],
        "{table}"
    );

    let out = anon(&[
        "eval",
        "--gold",
        gold.to_str().unwrap(),
        "--pred",
        pred.to_str().unwrap(),
        "--format",
        "json",
    ]);
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["normal"]["overall"]["recall"], 33.33);
    assert_eq!(report["uniformized"]["overall"]["recall"], 100.0);
    assert_eq!(report["delta"]["recall"], 66.67);
}

#[test]
fn eval_runs_detectors_without_pred() {
    let dir = tempfile::tempdir().unwrap();
    let gold = write_lines(dir.path(), "g.jsonl", &corpus());
    let out = anon(&[
        "eval",
        "--gold",
        gold.to_str().unwrap(),
        "--detectors",
        "conventional",
        "--format",
        "json",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["normal"]["overall"]["recall"], 100.0);
    assert_eq!(report["normal"]["meta"]["documents"], 6);
}

#[test]
fn prep_defaults_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_lines(dir.path(), "c.jsonl", &corpus());
    let explicit = dir.path().join("explicit");
    let implicit = dir.path().join("implicit");
    let out = anon(&[
        "prep",
        "--input",
        input.to_str().unwrap(),
        "--out-dir",
        explicit.to_str().unwrap(),
        "--stride-ratio",
        "0.5",
        "--neg-ratio",
        "1.5",
        "--max-len",
        "192",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = anon(&[
        "prep",
        "--input",
        input.to_str().unwrap(),
        "--out-dir",
        implicit.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    for f in ["train.jsonl", "validation.jsonl", "test.jsonl", "stats.json"] {
        assert_eq!(
            fs::read(explicit.join(f)).unwrap(),
            fs::read(implicit.join(f)).unwrap(),
            "{f}"
        );
    }
    let stats: Value = serde_json::from_str(&fs::read_to_string(explicit.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["config"]["max_seq_len"], 192);
    assert_eq!(stats["config"]["truncation_stride_ratio"], 0.5);
    assert_eq!(stats["config"]["neg_to_pos_ratio"], 1.5);
    let windows =
        stats["train"].as_u64().unwrap() + stats["validation"].as_u64().unwrap() + stats["test"].as_u64().unwrap();
    assert!(windows > 0);
    let first: Value = serde_json::from_str(
        fs::read_to_string(explicit.join("train.jsonl"))
            .unwrap()
            .lines()
            .next()
            .unwrap(),
    )
    .unwrap();
    assert_eq!(
        first["tokens"].as_array().unwrap().len(),
        first["labels"].as_array().unwrap().len()
    );
}

#[test]
fn prep_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_lines(dir.path(), "c.jsonl", &corpus());
    let out = anon(&[
        "prep",
        "--input",
        input.to_str().unwrap(),
        "--out-dir",
        "x",
        "--stride-ratio",
        "1.5",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("truncation_stride_ratio"));
}

#[test]
fn detect_on_empty_document_fails_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.txt");
    fs::write(&empty, "  \n").unwrap();
    let out = anon(&[
        "detect",
        "--text",
        empty.to_str().unwrap(),
        "--language",
        "de",
        "--detectors",
        "regex,conventional",
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(stderr(&out).contains("empty"), "{}", stderr(&out));
}

#[test]
fn detect_plain_text_ruling() {
    let dir = tempfile::tempdir().unwrap();
    let ruling = dir.path().join("r.txt");
    fs::write(
        &ruling,
        "Anna Huber, Beschwerdeführerin,\r\nSachverhalt:\r\nAnna Huber zahlte auf CH93 0076 2011 6238 5295 7.",
    )
    .unwrap();
    let out_path = dir.path().join("s.jsonl");
    let out = anon(&[
        "detect",
        "--text",
        ruling.to_str().unwrap(),
        "--language",
        "de",
        "--detectors",
        "regex,conventional",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let line: Value = serde_json::from_str(fs::read_to_string(&out_path).unwrap().trim()).unwrap();
    let surfaces: Vec<&str> = line["spans"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["surface"].as_str().unwrap())
        .collect();
    assert_eq!(surfaces, ["Anna Huber", "Anna Huber", "CH93 0076 2011 6238 5295 7"]);
}

#[test]
fn malformed_input_names_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    fs::write(
        &path,
        "{\"language\":\"de\",\"text\":\"Hans klagt.\"}\n{\"language\":\"de\",\"txt\":\"x\"}\n",
    )
    .unwrap();
    let out = anon(&["stats", "--input", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("line 2") && err.contains("txt"), "{err}");
}

#[test]
fn missing_file_is_io_error() {
    let out = anon(&["stats", "--input", "/nonexistent/corpus.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn detect_uniformize_redact_chain() {
    let dir = tempfile::tempdir().unwrap();
    let docs = corpus();
    let input = write_lines(dir.path(), "c.jsonl", &docs[..2]);
    // a detector that only saw the first mention
    let pred: Vec<Value> = docs[..2]
        .iter()
        .map(|d| json!({"doc_id": d["id"], "spans": [{"span": [d["gold"][0]["start"], d["gold"][0]["end"]], "label": "PER"}]}))
        .collect();
    let spans = write_lines(dir.path(), "s.jsonl", &pred);
    let uni = dir.path().join("u.jsonl");
    let out = anon(&[
        "uniformize",
        "--input",
        input.to_str().unwrap(),
        "--spans",
        spans.to_str().unwrap(),
        "--out",
        uni.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let files: Vec<Value> = fs::read_to_string(&uni)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(files[0]["spans"].as_array().unwrap().len(), 3);

    let out = anon(&[
        "redact",
        "--input",
        input.to_str().unwrap(),
        "--spans",
        uni.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(!text.contains("Meier") && !text.contains("Huber"), "{text}");
    assert_eq!(text.matches("A.________").count(), 6);

    let out = anon(&[
        "redact",
        "--input",
        input.to_str().unwrap(),
        "--spans",
        uni.to_str().unwrap(),
        "--format",
        "html",
    ]);
    assert!(stdout(&out).contains("<mark"));
}

#[test]
fn redact_saved_project() {
    use anon_core::redact::PlaceholderPolicy;
    use anon_core::store::{Event, ProjectStore};
    use anon_core::{Document, Language};

    let dir = tempfile::tempdir().unwrap();
    let store = ProjectStore::open(dir.path()).unwrap();
    let doc = Document::new(
        "p1",
        Language::De,
        "Hans Meier, Beschwerdeführer,\nSachverhalt:\nHans Meier klagt.",
    )
    .unwrap();
    store.create(doc, PlaceholderPolicy::LabelNumbered).unwrap();
    let at = chrono::Utc::now();
    let (p, _) = store
        .mutate(
            "p1",
            Some(0),
            Event::ManualAdded {
                span: anon_core::CharSpan::new(0, 10),
                label: "PER".parse().unwrap(),
                replacement: None,
                actor: None,
            },
            at,
        )
        .unwrap();
    assert_eq!(p.version, 1);
    let path = dir.path().join("p1.json");
    assert!(path.exists());
    let out = anon(&["redact", "--project", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        stdout(&out),
        "⟨PER_1⟩, Beschwerdeführer,\nSachverhalt:\nHans Meier klagt.\n"
    );
}

#[test]
fn stats_reports_languages() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_lines(dir.path(), "c.jsonl", &corpus());
    let a = anon(&["stats", "--input", input.to_str().unwrap()]);
    let b = anon(&["stats", "--input", input.to_str().unwrap()]);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_str(&stdout(&a)).unwrap();
    assert!(v.to_string().contains("\"de\""), "{v}");
}
