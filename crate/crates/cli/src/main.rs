mod config;

use std::io::{BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seqsql::bench::{compare_execution, run_ladder, BenchConfig, TimeUnit};
use seqsql::corpus::{build_interactions, generate_queries, interaction_of, Vocabulary};
use seqsql::decompose::{
    decompose_nesting, decompose_pipeline, merge_frequent, parse_atomic_templates,
    DecomposeConfig, DecompositionPlan, MergeConfig, PlanRecord,
};
use seqsql::eval::{score_corpus_with, HistoryMode, Prediction, PredictionFile, ScoreOptions};
use seqsql::io::{read_interactions, read_jsonl, read_versioned, to_jsonl_string, InteractionRecord};
use seqsql::nlq::{NlqGenerator, ParaphraseBank, SchemaLexicon, TemplateTable};
use seqsql::prompt::{build_prompt, retrieve_exemplars, CurrentInteraction, ExemplarCorpus};
use seqsql::session::{Database, Session, TurnOutcome};
use seqsql::split::{
    build_context_graph, coverage_violations, generate_long_interactions, split_corpus, LongConfig,
    SplitMode,
};
use seqsql::sql::parse_select;
use seqsql::synth::{synth_db, table_counts, SynthDbSpec};

/// Environment variable naming the default database file.
const DB_ENV: &str = "SEQSQL_DB";

#[derive(Parser)]
#[command(name = "seqsql", version, about = "Sequential text-to-SQL toolkit")]
struct Cli {
    /// File of `key = value` lines supplying defaults for command flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Report per-record failures but exit 0.
    #[arg(long, global = true)]
    keep_going: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Split source queries into turn sequences.
    Decompose(DecomposeArgs),
    /// Attach questions and categories to decomposition plans.
    Nlq(NlqArgs),
    /// Replay interactions or run an interactive session.
    Session(SessionArgs),
    /// Split a corpus into train and test sides.
    Split(SplitArgs),
    /// Concatenate related interactions into long ones.
    Longgen(LonggenArgs),
    /// Score predictions by execution.
    Eval(EvalArgs),
    /// Time token turns against their standard SQL.
    Bench(BenchArgs),
    /// Assemble a few-shot prompt for a question.
    Prompt(PromptArgs),
    /// Generate a synthetic database.
    Synth(SynthArgs),
    /// Generate queries on a database and build an interaction corpus.
    Corpus(CorpusArgs),
}

#[derive(Args)]
struct DbArg {
    /// Database file.
    #[arg(long, env = DB_ENV)]
    db: PathBuf,
}

#[derive(Args)]
struct DecomposeArgs {
    /// One SQL query per line, or JSON lines with `id` and `sql`.
    input: Option<PathBuf>,
    /// A single query instead of a file.
    #[arg(long, conflicts_with = "input")]
    sql: Option<String>,
    /// 1: nesting only, 2: nesting and clauses, 3: also merge frequent pairs.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=3))]
    stage: u8,
    /// Merge thresholds for cross-level and clause pairs.
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [100, 150])]
    thresholds: Vec<usize>,
    #[arg(long, default_value_t = 0.5)]
    sample_ratio: f64,
    /// File of queries never decomposed, one per line.
    #[arg(long)]
    atomic: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NlqArgs {
    /// Plan JSON lines.
    plans: PathBuf,
    /// Template table replacing the bundled one.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Schema lexicon replacing the bundled one.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Paraphrase bank replacing the bundled one.
    #[arg(long, conflicts_with = "no_paraphrases")]
    paraphrases: Option<PathBuf>,
    /// Use template questions only.
    #[arg(long)]
    no_paraphrases: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SessionArgs {
    #[command(flatten)]
    db: DbArg,
    /// Interaction JSON lines, or one SQL turn per line. Without it turns
    /// are read from standard input.
    #[arg(long)]
    replay: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Compositional)]
    mode: ModeArg,
    /// Test share for random splits.
    #[arg(long, default_value_t = 0.2)]
    ratio: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for the manifest and both sides.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Random,
    Compositional,
}

#[derive(Args)]
struct LonggenArgs {
    corpus: PathBuf,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 14)]
    min_turns: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Gold interaction JSON lines.
    gold: PathBuf,
    /// Prediction JSON lines with `interaction_id`, `turn_index`, `sql`.
    preds: PathBuf,
    #[command(flatten)]
    db: DbArg,
    #[arg(long, default_value = "QS")]
    mode: HistoryMode,
    /// Skip gold interactions longer than this.
    #[arg(long)]
    max_turns: Option<usize>,
    /// Write the full report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Interaction JSON lines timed on --db; without it the scale ladder runs.
    #[arg(long, requires = "db")]
    corpus: Option<PathBuf>,
    #[arg(long, env = DB_ENV)]
    db: Option<PathBuf>,
    /// Patient counts of the ladder.
    #[arg(long, value_delimiter = ',', default_values_t = [100, 1000, 10000])]
    scales: Vec<usize>,
    /// Directory holding ladder databases.
    #[arg(long, default_value = "bench-dbs")]
    dir: PathBuf,
    /// Generated queries per ladder step.
    #[arg(long, default_value_t = 60)]
    queries: usize,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    /// Rows faster than this many milliseconds stay out of aggregates.
    #[arg(long, default_value_t = 1.0)]
    near_zero: f64,
    #[arg(long, default_value = "ds")]
    unit: TimeUnit,
    /// Time every turn, not only turns with RESULT tokens.
    #[arg(long)]
    all_turns: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct PromptArgs {
    /// Training interaction JSON lines.
    corpus: PathBuf,
    #[arg(long, default_value = "QS")]
    mode: HistoryMode,
    /// Exemplars per retrieval route.
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    question: String,
    /// Earlier questions, one per line, optionally followed by a tab and SQL.
    #[arg(long)]
    history_file: Option<PathBuf>,
    /// Leave out the description of the special tokens.
    #[arg(long)]
    no_token_note: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    patients: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Create indexes on key columns.
    #[arg(long)]
    indexes: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CorpusArgs {
    #[command(flatten)]
    db: DbArg,
    #[arg(long, default_value_t = 130)]
    queries: usize,
    /// Seed of query generation.
    #[arg(long)]
    query_seed: Option<u64>,
    /// Seed of question generation.
    #[arg(long)]
    seed: Option<u64>,
    /// Skip merging of frequent turn pairs.
    #[arg(long)]
    no_merge: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Records that failed, reported at the end of a command.
#[derive(Default)]
struct Failures(Vec<String>);

impl Failures {
    fn add(&mut self, what: impl Into<String>) {
        let what = what.into();
        eprintln!("error: {what}");
        self.0.push(what);
    }
}

fn seed_or_random(seed: Option<u64>, name: &str) -> u64 {
    seed.unwrap_or_else(|| {
        let s: u64 = rand::random();
        eprintln!("{name}: {s}");
        s
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn load_interactions(path: &Path) -> Result<Vec<InteractionRecord>> {
    read_interactions(path).with_context(|| format!("reading {}", path.display()))
}

fn main() -> ExitCode {
    let args = match config::apply(&Cli::command(), std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    let mut failures = Failures::default();
    let result = match cli.command {
        Cmd::Decompose(a) => decompose(a, &mut failures),
        Cmd::Nlq(a) => nlq(a, &mut failures),
        Cmd::Session(a) => session(a, &mut failures),
        Cmd::Split(a) => split(a),
        Cmd::Longgen(a) => longgen(a),
        Cmd::Eval(a) => eval(a),
        Cmd::Bench(a) => bench(a, &mut failures),
        Cmd::Prompt(a) => prompt(a),
        Cmd::Synth(a) => synth(a),
        Cmd::Corpus(a) => corpus(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    if failures.0.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("{} record(s) failed", failures.0.len());
        if cli.keep_going {
            ExitCode::SUCCESS
        } else {
            ExitCode::FAILURE
        }
    }
}

#[derive(serde::Deserialize)]
struct QueryLine {
    id: String,
    sql: String,
}

fn read_queries(args: &DecomposeArgs) -> Result<Vec<(String, String)>> {
    if let Some(sql) = &args.sql {
        return Ok(vec![("q00001".to_string(), sql.clone())]);
    }
    let text = match &args.input {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => std::io::read_to_string(std::io::stdin())?,
    };
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("--") {
            continue;
        }
        if line.starts_with('{') {
            let q: QueryLine = serde_json::from_str(line)
                .with_context(|| format!("line {}: malformed query record", n + 1))?;
            out.push((q.id, q.sql));
        } else {
            out.push((format!("q{:05}", n + 1), line.to_string()));
        }
    }
    Ok(out)
}

fn decompose(args: DecomposeArgs, failures: &mut Failures) -> Result<()> {
    let mut config = DecomposeConfig::default();
    if let Some(p) = &args.atomic {
        config.atomic_templates = parse_atomic_templates(&std::fs::read_to_string(p)?);
    }
    let mut plans = Vec::new();
    for (id, sql) in read_queries(&args)? {
        let plan = parse_select(&sql)
            .map_err(|e| e.to_string())
            .and_then(|source| {
                let built = if args.stage == 1 {
                    decompose_nesting(&source).map(|turns| DecompositionPlan {
                        id: id.clone(),
                        source: source.clone(),
                        turns,
                    })
                } else {
                    decompose_pipeline(&id, &source, &config)
                };
                built.map_err(|e| e.to_string())
            });
        match plan {
            Ok(p) => plans.push(p),
            Err(e) => failures.add(format!("{id}: {e}")),
        }
    }
    if args.stage == 3 {
        let merge = MergeConfig {
            threshold_stage1: args.thresholds[0],
            threshold_stage2: args.thresholds[1],
            sample_ratio: args.sample_ratio,
            seed: seed_or_random(args.seed, "seed"),
        };
        let (merged, report) = merge_frequent(&plans, &merge, &config.mask);
        for r in &report.rounds {
            eprintln!("merged {} of {} occurrences: {} + {}", r.merged, r.frequency, r.first, r.second);
        }
        plans = merged;
    }
    let records: Vec<PlanRecord> = plans.iter().map(DecompositionPlan::to_record).collect();
    emit(args.out.as_deref(), &to_jsonl_string(&records))
}

fn nlq(args: NlqArgs, failures: &mut Failures) -> Result<()> {
    let templates = match &args.templates {
        Some(p) => TemplateTable::parse(&std::fs::read_to_string(p)?)?,
        None => TemplateTable::bundled(),
    };
    let lexicon = match &args.lexicon {
        Some(p) => SchemaLexicon::parse(&std::fs::read_to_string(p)?)?,
        None => SchemaLexicon::bundled(),
    };
    let bank = if args.no_paraphrases {
        ParaphraseBank::empty()
    } else if let Some(p) = &args.paraphrases {
        ParaphraseBank::from_json(&std::fs::read_to_string(p)?, &templates)?
    } else {
        ParaphraseBank::bundled(&templates)
    };
    let generator = NlqGenerator {
        templates,
        lexicon,
        bank,
    };
    let file = std::fs::File::open(&args.plans)
        .with_context(|| format!("reading {}", args.plans.display()))?;
    let plans: Vec<PlanRecord> = read_versioned(std::io::BufReader::new(file))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed_or_random(args.seed, "seed"));
    let mut out = Vec::new();
    for rec in &plans {
        let built = DecompositionPlan::from_record(rec)
            .map_err(|e| e.to_string())
            .and_then(|plan| interaction_of(&plan, None, &generator, &mut rng).map_err(|e| e.to_string()));
        match built {
            Ok(r) => out.push(r),
            Err(e) => failures.add(format!("{}: {e}", rec.id)),
        }
    }
    emit(args.out.as_deref(), &to_jsonl_string(&out))
}

fn print_outcome(o: &TurnOutcome) {
    match &o.result {
        Ok(rs) => {
            println!("[{}] {} ({:.3} ms)", o.index, o.sql_text, o.wall_time.as_secs_f64() * 1e3);
            println!("{}", rs.to_table());
        }
        Err(e) => println!("[{}] {}\nerror: {e}\n", o.index, o.sql_text),
    }
}

fn session(args: SessionArgs, failures: &mut Failures) -> Result<()> {
    let db = &args.db.db;
    if !db.exists() {
        bail!("database {} does not exist", db.display());
    }
    match &args.replay {
        Some(path) => replay(db, path, failures),
        None => repl(db),
    }
}

fn replay(db: &Path, path: &Path, failures: &mut Failures) -> Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let interactions: Vec<(String, Vec<String>)> = if text.trim_start().starts_with('{') {
        read_versioned::<InteractionRecord, _>(text.as_bytes())?
            .into_iter()
            .map(|r| {
                let sqls = r.turns.iter().map(|t| t.sql.clone()).collect();
                (r.interaction_id, sqls)
            })
            .collect()
    } else {
        let turns = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with("--"))
            .map(String::from)
            .collect();
        vec![("interaction".to_string(), turns)]
    };
    for (id, turns) in interactions {
        println!("== {id}");
        let mut s = Session::open(db)?;
        for t in &turns {
            let o = s.execute_turn(t);
            print_outcome(o);
            if let Err(e) = &o.result {
                failures.add(format!("{id} turn {}: {e}", o.index));
            }
        }
    }
    Ok(())
}

fn repl(db: &Path) -> Result<()> {
    let interactive = std::io::stdin().is_terminal();
    let mut s = Session::open(db)?;
    let prompt = |n: usize| {
        if interactive {
            print!("turn {n}> ");
            let _ = std::io::stdout().flush();
        }
    };
    prompt(1);
    for line in std::io::stdin().lock().lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
        } else if line == "\\q" || line == "\\quit" {
            break;
        } else if line == "\\reset" {
            s = Session::open(db)?;
            println!("session reset");
        } else if line == "\\history" {
            for o in s.history() {
                let status = if o.is_ok() { "ok" } else { "failed" };
                println!("[{}] {status} {}", o.index, o.sql_text);
            }
        } else if let Some(n) = line.strip_prefix("\\inline") {
            match n.trim().parse::<usize>() {
                Ok(n) => match s.inline(n) {
                    Ok(sql) => println!("{sql}"),
                    Err(e) => println!("error: {e}"),
                },
                Err(_) => println!("usage: \\inline N"),
            }
        } else if line.starts_with('\\') {
            println!("commands: \\inline N, \\history, \\reset, \\quit");
        } else {
            print_outcome(s.execute_turn(line));
        }
        prompt(s.history().len() + 1);
    }
    Ok(())
}

fn split(args: SplitArgs) -> Result<()> {
    let corpus = load_interactions(&args.corpus)?;
    let mode = match args.mode {
        ModeArg::Random => SplitMode::Random,
        ModeArg::Compositional => SplitMode::Compositional,
    };
    let seed = match mode {
        SplitMode::Random => seed_or_random(args.seed, "seed"),
        SplitMode::Compositional => args.seed.unwrap_or(0),
    };
    let out = split_corpus(&corpus, mode, args.ratio, seed)?;
    if mode == SplitMode::Compositional {
        let violations = coverage_violations(&out.manifest, &out.compositions);
        if !violations.is_empty() {
            bail!("coverage violated by {violations:?}");
        }
        if out.manifest.test.is_empty() {
            eprintln!("warning: no composition could move to the test side");
        }
    }
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("manifest.json"), serde_json::to_string_pretty(&out.manifest)?)?;
    std::fs::write(args.out.join("compositions.jsonl"), to_jsonl_string(&out.compositions))?;
    std::fs::write(args.out.join("train.jsonl"), to_jsonl_string(&out.train))?;
    std::fs::write(args.out.join("test.jsonl"), to_jsonl_string(&out.test))?;
    let s = &out.manifest.stats;
    println!("side   interactions  turns  templates");
    println!("train  {:>12}  {:>5}  {:>9}", s.train_interactions, s.train_turns, s.train_templates);
    println!("test   {:>12}  {:>5}  {:>9}", s.test_interactions, s.test_turns, s.test_templates);
    Ok(())
}

fn longgen(args: LonggenArgs) -> Result<()> {
    let corpus = load_interactions(&args.corpus)?;
    let graph = build_context_graph(&corpus);
    let config = LongConfig {
        count: args.count,
        min_turns: args.min_turns,
        seed: seed_or_random(args.seed, "seed"),
    };
    let out = generate_long_interactions(&corpus, &graph, &config);
    for s in &out.shortfalls {
        eprintln!("warning: {s}");
    }
    if !out.records.is_empty() {
        let turns: usize = out.records.iter().map(|r| r.turns.len()).sum();
        eprintln!(
            "{} interactions, mean length {:.2}",
            out.records.len(),
            turns as f64 / out.records.len() as f64
        );
    }
    emit(args.out.as_deref(), &to_jsonl_string(&out.records))
}

fn eval(args: EvalArgs) -> Result<()> {
    let gold = load_interactions(&args.gold)?;
    let file = std::fs::File::open(&args.preds)
        .with_context(|| format!("reading {}", args.preds.display()))?;
    let lines: Vec<Prediction> = read_jsonl(std::io::BufReader::new(file))?;
    let preds = PredictionFile::new(args.mode, lines)?;
    let options = ScoreOptions {
        max_turns: args.max_turns,
    };
    let report = score_corpus_with(&preds, &gold, &args.db.db, &options)?;
    print!("{}", report.to_table());
    if let Some(p) = &args.report {
        std::fs::write(p, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

fn bench(args: BenchArgs, failures: &mut Failures) -> Result<()> {
    let config = BenchConfig {
        reps: args.reps,
        near_zero: args.near_zero / 1000.0,
        unit: args.unit,
        all_turns: args.all_turns,
    };
    let reports = match &args.corpus {
        Some(corpus) => {
            let db = args.db.as_ref().ok_or_else(|| anyhow!("--corpus needs --db"))?;
            let report = compare_execution(&load_interactions(corpus)?, db, &config)?;
            vec![(None, report)]
        }
        None => {
            std::fs::create_dir_all(&args.dir)?;
            let seed = seed_or_random(args.seed, "seed");
            run_ladder(&args.dir, &args.scales, 1, args.queries, seed, &config)?
                .into_iter()
                .map(|s| (Some(s.n_patients), s.report))
                .collect()
        }
    };
    for (n, r) in &reports {
        if let Some(n) = n {
            println!("== {n} patients");
        }
        print!("{}", r.to_table());
        for row in &r.rows {
            if let Some(e) = &row.error {
                failures.add(format!("{} turn {}: {e}", row.query_id, row.turn_index));
            } else if !row.equivalent {
                failures.add(format!("{} turn {}: results differ", row.query_id, row.turn_index));
            }
        }
    }
    if let Some(p) = &args.report {
        let json: Vec<_> = reports
            .iter()
            .map(|(n, r)| serde_json::json!({ "n_patients": n, "report": r }))
            .collect();
        std::fs::write(p, serde_json::to_string_pretty(&json)?)?;
    }
    Ok(())
}

fn prompt(args: PromptArgs) -> Result<()> {
    let train = load_interactions(&args.corpus)?;
    let corpus = ExemplarCorpus::build(&train);
    let history: Vec<(String, Option<String>)> = match &args.history_file {
        Some(p) => std::fs::read_to_string(p)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| match l.split_once('\t') {
                Some((q, s)) => (q.trim().to_string(), Some(s.trim().to_string())),
                None => (l.trim().to_string(), None),
            })
            .collect(),
        None => Vec::new(),
    };
    let questions: Vec<String> = history.iter().map(|(q, _)| q.clone()).collect();
    let exemplars = retrieve_exemplars(&args.question, &questions, &corpus, args.k, args.k);
    let current = CurrentInteraction {
        history,
        question: args.question,
    };
    let mut text = build_prompt(args.mode, &exemplars, &current, !args.no_token_note);
    text.push('\n');
    emit(args.out.as_deref(), &text)
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut spec = SynthDbSpec::new(args.patients, seed_or_random(args.seed, "seed"));
    spec.indexes = args.indexes;
    synth_db(&spec, &args.out)?;
    let db = Database::open(&args.out)?;
    for (table, rows) in table_counts(db.connection())? {
        println!("{table:<20} {rows:>10}");
    }
    Ok(())
}

fn corpus(args: CorpusArgs) -> Result<()> {
    let db = Database::open(&args.db.db)?;
    let vocab = Vocabulary::from_connection(db.connection())?;
    let queries = generate_queries(&vocab, args.queries, seed_or_random(args.query_seed, "query seed"));
    let merge = MergeConfig::default();
    let records = build_interactions(
        &queries,
        &DecomposeConfig::default(),
        (!args.no_merge).then_some(&merge),
        &NlqGenerator::bundled(),
        seed_or_random(args.seed, "seed"),
    )?;
    emit(args.out.as_deref(), &to_jsonl_string(&records))
}
