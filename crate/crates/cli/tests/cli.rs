use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::sync::OnceLock;

fn seqsql(args: &[&str]) -> Output {
    run(args, None)
}

fn run(args: &[&str], stdin: Option<&str>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_seqsql"))
        .args(args)
        .env_remove("SEQSQL_DB")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let input = stdin.unwrap_or("").to_string();
    let mut pipe = child.stdin.take().unwrap();
    std::thread::spawn(move || pipe.write_all(input.as_bytes()));
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stdout:\n{}\nstderr:\n{}", stdout(o), stderr(o));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small database and corpus shared by the tests.
struct Fixture {
    _dir: tempfile::TempDir,
    db: PathBuf,
    corpus: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let db = dir.path().join("db.sqlite");
        let corpus = dir.path().join("corpus.jsonl");
        ok(&seqsql(&["synth", "--patients", "100", "--seed", "1", "--out", s(&db)]));
        ok(&seqsql(&[
            "corpus", "--db", s(&db), "--queries", "40", "--query-seed", "3", "--seed", "4",
            "--out", s(&corpus),
        ]));
        Fixture { _dir: dir, db, corpus }
    })
}

fn lines(p: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(p)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn synth_prints_table_counts() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("x.sqlite");
    let o = seqsql(&["synth", "--patients", "20", "--seed", "5", "--out", s(&db)]);
    ok(&o);
    assert_eq!(stdout(&o).lines().count(), 13);
    assert!(stdout(&o).contains("chartevents"));
}

#[test]
fn omitted_seed_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("x.sqlite");
    let o = seqsql(&["synth", "--patients", "5", "--out", s(&db)]);
    ok(&o);
    let line = stderr(&o).lines().find(|l| l.starts_with("seed: ")).unwrap().to_string();
    let seed: u64 = line["seed: ".len()..].parse().unwrap();
    let again = dir.path().join("y.sqlite");
    let o2 = seqsql(&["synth", "--patients", "5", "--seed", &seed.to_string(), "--out", s(&again)]);
    ok(&o2);
    assert_eq!(stdout(&o), stdout(&o2));
    let exists = seqsql(&["synth", "--patients", "5", "--seed", "1", "--out", s(&again)]);
    assert_eq!(exists.status.code(), Some(2));
}

#[test]
fn corpus_is_deterministic() {
    let f = fixture();
    let o = seqsql(&["corpus", "--db", s(&f.db), "--queries", "40", "--query-seed", "3", "--seed", "4"]);
    ok(&o);
    assert_eq!(stdout(&o), std::fs::read_to_string(&f.corpus).unwrap());
    assert_eq!(lines(&f.corpus).len(), 40);
}

#[test]
fn decompose_emits_plans_and_counts_failures() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("q.sql");
    std::fs::write(
        &input,
        "SELECT COUNT(*) FROM admissions WHERE age > 30\nSELEC broken\n\
         {\"id\":\"nested\",\"sql\":\"SELECT drug FROM prescriptions WHERE hadm_id IN (SELECT hadm_id FROM admissions WHERE subject_id = 3)\"}\n",
    )
    .unwrap();
    let o = seqsql(&["decompose", s(&input)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("q00002"));
    let plans: Vec<serde_json::Value> =
        stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(plans.len(), 2);
    assert_eq!(plans[1]["id"], "nested");
    let turns = plans[1]["turns"].as_array().unwrap();
    assert!(turns.len() >= 2);
    assert!(turns[1]["sql"].as_str().unwrap().contains("PREV_RESULT1"));

    ok(&seqsql(&["--keep-going", "decompose", s(&input)]));

    let stage1 = seqsql(&["--keep-going", "decompose", s(&input), "--stage", "1"]);
    let first: serde_json::Value = serde_json::from_str(stdout(&stage1).lines().nth(1).unwrap()).unwrap();
    assert_eq!(first["turns"].as_array().unwrap().len(), 2);
}

#[test]
fn decompose_then_nlq_reproduces_corpus_turns() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let sources = dir.path().join("src.jsonl");
    let mut text = String::new();
    for r in lines(&f.corpus).iter().take(10) {
        let q = serde_json::json!({"id": r["interaction_id"], "sql": r["provenance"]["source"]});
        text.push_str(&format!("{q}\n"));
    }
    std::fs::write(&sources, text).unwrap();
    let plans = dir.path().join("plans.jsonl");
    ok(&seqsql(&["decompose", s(&sources), "--out", s(&plans)]));
    let out = dir.path().join("i.jsonl");
    ok(&seqsql(&["nlq", s(&plans), "--seed", "1", "--out", s(&out)]));
    let built = lines(&out);
    assert_eq!(built.len(), 10);
    for r in &built {
        assert!(!r["goal_nlq"].as_str().unwrap().is_empty());
        assert!(r["turns"].as_array().unwrap().iter().all(|t| !t["nlq"].as_str().unwrap().is_empty()));
    }
    let replay = seqsql(&["session", "--db", s(&f.db), "--replay", s(&out)]);
    ok(&replay);
    assert_eq!(stdout(&replay).matches("== ").count(), 10);
}

#[test]
fn session_repl_survives_dangling_reference() {
    let f = fixture();
    let script = "SELECT COUNT(*) FROM admissions\nSELECT ( PREV_RESULT5 ) + 1\nSELECT ( PREV_RESULT1 ) + 1\n\\inline 3\n\\history\n\\quit\nSELECT 99\n";
    let o = run(&["session", "--db", s(&f.db)], Some(script));
    ok(&o);
    let out = stdout(&o);
    assert!(out.contains("176"), "{out}");
    assert!(out.contains("error:"));
    assert!(out.contains("SELECT ( SELECT COUNT(*) FROM admissions ) + 1"), "{out}");
    assert!(out.contains("[2] failed"));
    assert!(!out.contains("99"));
    assert!(!out.contains("turn 1>"));
}

#[test]
fn session_replay_exit_code_reflects_failures() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let turns = dir.path().join("t.sql");
    std::fs::write(&turns, "SELECT 1\nSELECT ( PREV_RESULT4 )\n").unwrap();
    let o = seqsql(&["session", "--db", s(&f.db), "--replay", s(&turns)]);
    assert_eq!(o.status.code(), Some(1));
    let o = Command::new(env!("CARGO_BIN_EXE_seqsql"))
        .args(["--keep-going", "session", "--replay", s(&turns)])
        .env("SEQSQL_DB", &f.db)
        .output()
        .unwrap();
    ok(&o);
    let missing = seqsql(&["session", "--db", "/nonexistent/db.sqlite", "--replay", s(&turns)]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn split_writes_all_outputs() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let o = seqsql(&["split", s(&f.corpus), "--out", s(dir.path())]);
    ok(&o);
    let train = lines(&dir.path().join("train.jsonl"));
    let test = lines(&dir.path().join("test.jsonl"));
    assert_eq!(train.len() + test.len(), 40);
    assert!(!test.is_empty());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["stats"]["test_interactions"], test.len());
    assert!(stdout(&o).contains(&format!("test   {:>12}", test.len())));
    assert!(!lines(&dir.path().join("compositions.jsonl")).is_empty());

    let random = tempfile::tempdir().unwrap();
    ok(&seqsql(&["split", s(&f.corpus), "--mode", "random", "--ratio", "0.25", "--seed", "2", "--out", s(random.path())]));
    assert_eq!(lines(&random.path().join("test.jsonl")).len(), 10);
}

#[test]
fn eval_scores_gold_and_corrupted_predictions() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let gold = lines(&f.corpus);
    let mut exact = String::new();
    let mut broken = String::new();
    let mut turns = 0;
    for r in &gold {
        for t in r["turns"].as_array().unwrap() {
            turns += 1;
            let p = |sql: &serde_json::Value| {
                serde_json::json!({"interaction_id": r["interaction_id"], "turn_index": t["index"], "sql": sql})
            };
            exact.push_str(&format!("{}\n", p(&t["sql"])));
            let wrong = if t["index"] == 1 { serde_json::json!("SELECT -1") } else { t["sql"].clone() };
            broken.push_str(&format!("{}\n", p(&wrong)));
        }
    }
    let exact_path = dir.path().join("exact.jsonl");
    let broken_path = dir.path().join("broken.jsonl");
    std::fs::write(&exact_path, exact).unwrap();
    std::fs::write(&broken_path, broken).unwrap();
    let report = dir.path().join("r.json");
    let o = seqsql(&["eval", s(&f.corpus), s(&exact_path), "--db", s(&f.db), "--report", s(&report)]);
    ok(&o);
    assert!(stdout(&o).contains(&format!("({turns}/{turns})")), "{}", stdout(&o));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["im"], 1.0);

    let o = seqsql(&["eval", s(&f.corpus), s(&broken_path), "--db", s(&f.db), "--mode", "QQ"]);
    ok(&o);
    assert!(stdout(&o).contains("IM   0.0000"), "{}", stdout(&o));
    assert!(stdout(&o).contains("mode QQ"));
}

#[test]
fn bench_times_corpus_turns() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("b.json");
    let o = seqsql(&[
        "bench", "--corpus", s(&f.corpus), "--db", s(&f.db), "--reps", "1", "--near-zero", "0",
        "--unit", "ms", "--report", s(&report),
    ]);
    ok(&o);
    assert!(stdout(&o).contains("unit ms"));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let rows = json[0]["report"]["rows"].as_array().unwrap();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r["equivalent"] == true));
}

#[test]
fn bench_ladder_runs_small_scales() {
    let dir = tempfile::tempdir().unwrap();
    let o = seqsql(&[
        "bench", "--scales", "20,40", "--dir", s(dir.path()), "--queries", "10", "--reps", "1",
        "--seed", "3",
    ]);
    ok(&o);
    assert!(stdout(&o).contains("== 20 patients"));
    assert!(stdout(&o).contains("== 40 patients"));
}

#[test]
fn longgen_concatenates_interactions() {
    let f = fixture();
    let o = seqsql(&["longgen", s(&f.corpus), "--count", "3", "--min-turns", "8", "--seed", "1"]);
    ok(&o);
    let records: Vec<serde_json::Value> =
        stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 3);
    assert!(records.iter().all(|r| r["turns"].as_array().unwrap().len() >= 8));
}

#[test]
fn prompt_contains_question_and_history() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let history = dir.path().join("h.tsv");
    std::fs::write(&history, "show stays of patient 3\tSELECT 1\nand the icu ones\n").unwrap();
    let o = seqsql(&[
        "prompt", s(&f.corpus), "--question", "what is the last weight", "--history-file", s(&history),
        "--k", "3",
    ]);
    ok(&o);
    let p = stdout(&o);
    assert!(p.contains("Q: show stays of patient 3\nSQL: SELECT 1\n"));
    assert!(p.trim_end().ends_with("Q: what is the last weight\nSQL:"));
    assert_eq!(p.matches("Example ").count(), 6);
    assert!(p.contains("PREV_RESULT"));
    let bare = seqsql(&["prompt", s(&f.corpus), "--question", "x", "--k", "0", "--no-token-note"]);
    assert!(!stdout(&bare).contains("PREV_RESULT"));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.conf");
    std::fs::write(&cfg, "# bench defaults\nunit = \"ms\"\nreps = 1\nnear_zero = 0\nall_turns = true\nunknown = 3\n").unwrap();
    let o = seqsql(&["--config", s(&cfg), "bench", "--corpus", s(&f.corpus), "--db", s(&f.db)]);
    ok(&o);
    assert!(stdout(&o).contains("reps 1, unit ms"), "{}", stdout(&o));
    assert!(stderr(&o).contains("'unknown'"));
    let o = seqsql(&["--config", s(&cfg), "bench", "--corpus", s(&f.corpus), "--db", s(&f.db), "--unit", "s"]);
    ok(&o);
    assert!(stdout(&o).contains("unit s\n"), "{}", stdout(&o));
}

#[test]
fn bad_arguments_exit_with_usage_error() {
    assert_eq!(seqsql(&["decompose", "--stage", "4", "--sql", "SELECT 1"]).status.code(), Some(2));
    assert_eq!(seqsql(&["split", "/nonexistent.jsonl", "--out", "/tmp"]).status.code(), Some(2));
}
