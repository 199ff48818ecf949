//! Subcommands of the `qurg` binary.
//!
//! Human-readable summaries go to standard output; machine-readable results
//! are JSON files named by the caller.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use qurg_core::dataset_io::{
    self, load_any_matrix, load_corpus, load_interactions, load_matrix, load_params, load_schema,
    save_link_matrix, save_matrix, save_params, save_report, to_json_line, AnyMatrix,
    FORMAT_VERSION,
};
use qurg_core::rat_encoder::gradcheck::check_suite;
use qurg_core::rat_encoder::{
    embed_inputs, init_params, two_stream_encode_traced, EncodedStates, EncoderConfig,
    EncoderParams, Precision, Real, StreamInputs,
};
use qurg_core::rewrite_diff::{
    build_from_interaction, extract_edit_ops, tokenize, Interaction, MatchPolicy, Occurrence,
    RewriteEditMatrix, TokenSeq,
};
use qurg_core::rewrite_restore::restore_matrix;
use qurg_core::rouge_eval::{corpus_rouge, CorpusRougeReport};
use qurg_core::schema_link::{build_schema_link_matrix, link_stats, Schema, SchemaLinkMatrix};

/// Largest relative error `encode --check-gradients` accepts.
pub const GRADIENT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(
    name = "qurg",
    version,
    about = "Rewrite matrices, schema linking, relation-aware encoding and ROUGE"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build rewrite edit matrices from (question, context, rewrite) triples.
    BuildMatrix(BuildMatrixArgs),
    /// Apply a rewrite matrix to its question.
    Restore(RestoreArgs),
    /// Build, restore and score every example of a rewrite corpus.
    Roundtrip(RoundtripArgs),
    /// Corpus ROUGE-1/2/L between line-aligned candidate and reference files.
    Rouge(RougeArgs),
    /// Build the schema-linking matrix for one interaction.
    SchemaLink(SchemaLinkArgs),
    /// Run the two-stream encoder and dump its hidden states.
    Encode(EncodeArgs),
    /// Relation counts of a matrix file, or edit statistics of a corpus.
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PolicyArgs {
    /// Compare tokens exactly instead of folding plural forms.
    #[arg(long)]
    pub no_plural_stem: bool,
    /// Bind ADD spans to their first context occurrence instead of the last.
    #[arg(long)]
    pub first_occurrence: bool,
}

impl PolicyArgs {
    pub fn policy(&self) -> MatchPolicy {
        MatchPolicy {
            plural_stem: !self.no_plural_stem,
            occurrence: if self.first_occurrence {
                Occurrence::First
            } else {
                Occurrence::Last
            },
            ..MatchPolicy::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct BuildMatrixArgs {
    /// Current question text.
    #[arg(
        long,
        required_unless_present = "corpus",
        conflicts_with = "corpus",
        requires = "rewrite"
    )]
    pub question: Option<String>,
    /// One context turn; repeat in chronological order.
    #[arg(long = "context", conflicts_with = "corpus")]
    pub context: Vec<String>,
    /// Rewritten question text.
    #[arg(long, required_unless_present = "corpus", conflicts_with = "corpus")]
    pub rewrite: Option<String>,
    /// Rewrite corpus (JSON lines); writes one file per example plus index.json.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Output file, or output directory with --corpus.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads for corpus mode (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub policy: PolicyArgs,
}

#[derive(Debug, Args)]
pub struct RestoreArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    /// Write tokens, text and applied ops as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RoundtripArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub policy: PolicyArgs,
}

#[derive(Debug, Args)]
pub struct RougeArgs {
    /// Candidates, one utterance per line.
    #[arg(long)]
    pub cand: PathBuf,
    /// References, line-aligned with the candidates.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SchemaLinkArgs {
    #[arg(long)]
    pub interaction: PathBuf,
    /// Which interaction of the file to use.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub policy: PolicyArgs,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Interactions to encode; every interaction is encoded unless --index is given.
    #[arg(long, required_unless_present = "check_gradients", requires = "schema")]
    pub interaction: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Encode only this interaction.
    #[arg(long)]
    pub index: Option<usize>,
    /// Rewrite matrix for the selected interaction. Without it the matrix is
    /// built from the interaction's rewrite, or left empty when there is none.
    #[arg(long, requires = "index")]
    pub matrix: Option<PathBuf>,
    /// Encoder configuration (JSON); defaults to the tiny configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Load parameters instead of initializing them.
    #[arg(long, conflicts_with_all = ["config", "seed"])]
    pub params: Option<PathBuf>,
    /// Save the parameters used.
    #[arg(long)]
    pub save_params: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output JSON with the final hidden states.
    #[arg(long)]
    pub dump: Option<PathBuf>,
    /// Include per-layer attention traces in the dump.
    #[arg(long, requires = "dump")]
    pub traces: bool,
    /// Run the finite-difference gradient suite and report the worst relative error.
    #[arg(long)]
    pub check_gradients: bool,
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub policy: PolicyArgs,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// A rewrite or schema-linking matrix file.
    #[arg(long, required_unless_present = "corpus", conflicts_with = "corpus")]
    pub matrix: Option<PathBuf>,
    /// A rewrite corpus (JSON lines).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub policy: PolicyArgs,
}

/// Outcome of a subcommand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandResult {
    /// 0 on success, 1 when an operation failed.
    pub exit_code: i32,
    pub summary: String,
    pub payload: Option<PathBuf>,
}

impl CommandResult {
    fn ok(summary: String, payload: Option<PathBuf>) -> Self {
        Self {
            exit_code: 0,
            summary,
            payload,
        }
    }

    fn failed(summary: String, payload: Option<PathBuf>) -> Self {
        Self {
            exit_code: 1,
            summary,
            payload,
        }
    }
}

pub fn run(command: Command) -> Result<CommandResult> {
    match command {
        Command::BuildMatrix(a) => with_threads(a.threads, || cmd_build_matrix(&a)),
        Command::Restore(a) => cmd_restore(&a),
        Command::Roundtrip(a) => with_threads(a.threads, || cmd_roundtrip(&a)),
        Command::Rouge(a) => cmd_rouge(&a),
        Command::SchemaLink(a) => cmd_schema_link(&a),
        Command::Encode(a) => with_threads(a.threads, || cmd_encode(&a)),
        Command::Stats(a) => cmd_stats(&a),
    }
}

fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_line(value)).with_context(|| format!("writing {}", path.display()))
}

fn percent(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

/// Keeps ids usable as file names.
fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------

pub fn cmd_build_matrix(args: &BuildMatrixArgs) -> Result<CommandResult> {
    let policy = args.policy.policy();
    if let Some(corpus) = &args.corpus {
        return build_corpus(corpus, &args.out, &policy);
    }
    let (Some(question), Some(rewrite)) = (&args.question, &args.rewrite) else {
        bail!("--question and --rewrite are required without --corpus");
    };
    let context = args.context.iter().map(|t| tokenize(t)).collect();
    let interaction = Interaction::new(context, tokenize(question), None)?;
    let m = build_from_interaction(&interaction, &tokenize(rewrite), &policy)?;
    save_matrix(&args.out, &m)?;
    Ok(CommandResult::ok(
        format!(
            "{} non-None cells over {} positions -> {}",
            m.non_none_count(),
            m.dim(),
            args.out.display()
        ),
        Some(args.out.clone()),
    ))
}

#[derive(Serialize)]
struct IndexEntry {
    id: String,
    file: String,
    cells: usize,
}

#[derive(Serialize)]
struct Failure {
    id: String,
    error: String,
}

fn build_corpus(corpus: &Path, out: &Path, policy: &MatchPolicy) -> Result<CommandResult> {
    let corpus = load_corpus(corpus)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let results: Vec<Result<IndexEntry, Failure>> = corpus
        .examples
        .par_iter()
        .map(|ex| {
            let built = build_from_interaction(&ex.interaction(), &ex.rewrite, policy)
                .map_err(anyhow::Error::from)
                .and_then(|m| {
                    let file = format!("{}.json", file_stem(&ex.example_id));
                    save_matrix(&out.join(&file), &m)?;
                    Ok(IndexEntry {
                        id: ex.example_id.clone(),
                        file,
                        cells: m.non_none_count(),
                    })
                });
            built.map_err(|e| Failure {
                id: ex.example_id.clone(),
                error: format!("{e:#}"),
            })
        })
        .collect();
    let (mut entries, mut failures) = (Vec::new(), Vec::new());
    for r in results {
        match r {
            Ok(e) => entries.push(e),
            Err(f) => failures.push(f),
        }
    }
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    failures.sort_by(|a, b| a.id.cmp(&b.id));
    let index_path = out.join("index.json");
    write_json(
        &index_path,
        &json!({"qurg_fmt": FORMAT_VERSION, "examples": entries, "failures": failures}),
    )?;
    for f in &failures {
        eprintln!("{}: {}", f.id, f.error);
    }
    let summary = format!(
        "{} matrices written, {} failed -> {}",
        entries.len(),
        failures.len(),
        out.display()
    );
    Ok(if failures.is_empty() {
        CommandResult::ok(summary, Some(index_path))
    } else {
        CommandResult::failed(summary, Some(index_path))
    })
}

pub fn cmd_restore(args: &RestoreArgs) -> Result<CommandResult> {
    let m = load_matrix(&args.matrix)?;
    let restored = restore_matrix(&m)?;
    let text = restored.tokens.join();
    if let Some(out) = &args.out {
        write_json(
            out,
            &json!({
                "qurg_fmt": FORMAT_VERSION,
                "text": text,
                "tokens": restored.tokens,
                "ops": restored.applied_ops,
            }),
        )?;
    }
    Ok(CommandResult::ok(text, args.out.clone()))
}

/// Builds and restores every example; returns (id, restored, rewrite) or a failure per example.
fn roundtrip_examples(
    examples: &[dataset_io::RewriteExample],
    policy: &MatchPolicy,
) -> Vec<Result<(TokenSeq, TokenSeq), Failure>> {
    examples
        .par_iter()
        .map(|ex| {
            build_from_interaction(&ex.interaction(), &ex.rewrite, policy)
                .map_err(anyhow::Error::from)
                .and_then(|m| Ok(restore_matrix(&m)?))
                .map(|r| (r.tokens, ex.rewrite.clone()))
                .map_err(|e| Failure {
                    id: ex.example_id.clone(),
                    error: format!("{e:#}"),
                })
        })
        .collect()
}

fn rouge_summary(r: &CorpusRougeReport) -> String {
    format!(
        "R1 {} R2 {} RL {} (F1 x100, {} pairs)",
        percent(r.r1.f1),
        percent(r.r2.f1),
        percent(r.rl.f1),
        r.pair_count
    )
}

pub fn cmd_roundtrip(args: &RoundtripArgs) -> Result<CommandResult> {
    let corpus = load_corpus(&args.corpus)?;
    let mut pairs = Vec::new();
    let mut failures = Vec::new();
    for r in roundtrip_examples(&corpus.examples, &args.policy.policy()) {
        match r {
            Ok(p) => pairs.push(p),
            Err(f) => failures.push(f),
        }
    }
    let report = corpus_rouge(&pairs);
    save_report(&args.report, &report)?;
    for f in &failures {
        eprintln!("{}: {}", f.id, f.error);
    }
    let mut summary = rouge_summary(&report);
    if !failures.is_empty() {
        summary.push_str(&format!(
            "; {} examples failed and were not scored",
            failures.len()
        ));
        return Ok(CommandResult::failed(summary, Some(args.report.clone())));
    }
    Ok(CommandResult::ok(summary, Some(args.report.clone())))
}

fn read_lines(path: &Path) -> Result<Vec<TokenSeq>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(tokenize).collect())
}

pub fn cmd_rouge(args: &RougeArgs) -> Result<CommandResult> {
    let cand = read_lines(&args.cand)?;
    let reference = read_lines(&args.reference)?;
    if cand.len() != reference.len() {
        bail!(
            "{} candidate lines but {} reference lines",
            cand.len(),
            reference.len()
        );
    }
    let pairs: Vec<_> = cand.into_iter().zip(reference).collect();
    let report = corpus_rouge(&pairs);
    if let Some(out) = &args.out {
        save_report(out, &report)?;
    }
    Ok(CommandResult::ok(rouge_summary(&report), args.out.clone()))
}

fn pick(interactions: Vec<Interaction>, index: usize) -> Result<Interaction> {
    let n = interactions.len();
    interactions
        .into_iter()
        .nth(index)
        .with_context(|| format!("interaction index {index} out of range ({n} interactions)"))
}

fn stats_line<K: std::fmt::Display>(counts: &BTreeMap<K, usize>) -> String {
    counts
        .iter()
        .filter(|(_, &n)| n > 0)
        .map(|(k, n)| format!("{k}={n}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn cmd_schema_link(args: &SchemaLinkArgs) -> Result<CommandResult> {
    let interaction = pick(load_interactions(&args.interaction)?, args.index)?;
    let schema = load_schema(&args.schema)?;
    let m = build_schema_link_matrix(
        &interaction.question,
        &interaction.flattened_context(),
        &schema,
        &args.policy.policy(),
    );
    save_link_matrix(&args.out, &m)?;
    let stats = link_stats(&m);
    Ok(CommandResult::ok(
        format!(
            "{} non-None cells: {}",
            m.non_none_count(),
            stats_line(&stats)
        ),
        Some(args.out.clone()),
    ))
}

// ---------------------------------------------------------------------------
// encode

#[derive(Serialize)]
struct EncodingDump {
    index: usize,
    question: TokenSeq,
    rows: usize,
    h_final: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    traces: Option<serde_json::Value>,
}

fn encode_one<T: Real + Serialize>(
    interaction: &Interaction,
    schema: &Schema,
    link: &SchemaLinkMatrix,
    rewrite: &RewriteEditMatrix,
    params: &EncoderParams<T>,
    keep_traces: bool,
) -> Result<(EncodedStates<f64>, Option<serde_json::Value>)> {
    let emb = embed_inputs(interaction, schema, &params.embedding)?;
    let (q, c, s) = (
        emb.question.cast::<T>(),
        emb.context.cast::<T>(),
        emb.schema.cast::<T>(),
    );
    let inputs = StreamInputs {
        question: &q,
        context: &c,
        schema: &s,
        layout: &emb.layout,
    };
    let (states, traces) = two_stream_encode_traced(inputs, link, rewrite, params, keep_traces)?;
    let traces = traces.map(|t| serde_json::to_value(&t)).transpose()?;
    let widened = EncodedStates {
        h_link: states.h_link.cast(),
        h_rw: states.h_rw.cast(),
        h_final: states.h_final.cast(),
    };
    Ok((widened, traces))
}

fn encoder_params(args: &EncodeArgs) -> Result<EncoderParams> {
    if let Some(path) = &args.params {
        return Ok(load_params(path)?);
    }
    let mut config = match &args.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<EncoderConfig>(&text)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        None => EncoderConfig::tiny(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    Ok(init_params(&config)?)
}

pub fn cmd_encode(args: &EncodeArgs) -> Result<CommandResult> {
    let mut lines = Vec::new();
    let mut exit_code = 0;

    if args.check_gradients {
        let seed = args.seed.unwrap_or(0);
        let report = check_suite(seed, 20, 1e-5)?;
        lines.push(format!(
            "gradient check: max relative error {:.3e} over {} entries",
            report.max_relative_error, report.checked_entries
        ));
        let err = report.max_relative_error;
        if err.is_nan() || err >= GRADIENT_TOLERANCE {
            lines.push(format!(
                "gradient check FAILED (tolerance {GRADIENT_TOLERANCE:e})"
            ));
            exit_code = 1;
        }
    }

    let Some(interaction_path) = &args.interaction else {
        return Ok(CommandResult {
            exit_code,
            summary: lines.join("\n"),
            payload: None,
        });
    };
    let schema_path = args
        .schema
        .as_ref()
        .context("--schema is required with --interaction")?;
    let schema = load_schema(schema_path)?;
    let params = encoder_params(args)?;
    if let Some(path) = &args.save_params {
        save_params(path, &params)?;
    }
    let policy = args.policy.policy();

    let interactions = load_interactions(interaction_path)?;
    let selected: Vec<(usize, Interaction)> = match args.index {
        Some(k) => vec![(k, pick(interactions, k)?)],
        None => interactions.into_iter().enumerate().collect(),
    };
    let given = args.matrix.as_ref().map(|p| load_matrix(p)).transpose()?;
    let params32 = (params.config.precision == Precision::Single).then(|| params.cast::<f32>());

    let encoded: Vec<Result<EncodingDump>> = selected
        .par_iter()
        .map(|(k, interaction)| {
            let context = interaction.flattened_context();
            let link = build_schema_link_matrix(&interaction.question, &context, &schema, &policy);
            let rewrite = match (&given, &interaction.gold_rewrite) {
                (Some(m), _) => m.clone(),
                (None, Some(rw)) => build_from_interaction(interaction, rw, &policy)?,
                (None, None) => RewriteEditMatrix::empty(context, interaction.question.clone()),
            };
            let (states, traces) = match &params32 {
                Some(p) => encode_one(interaction, &schema, &link, &rewrite, p, args.traces)?,
                None => encode_one(interaction, &schema, &link, &rewrite, &params, args.traces)?,
            };
            Ok(EncodingDump {
                index: *k,
                question: interaction.question.clone(),
                rows: states.h_final.rows(),
                h_final: states.h_final.to_rows(),
                traces,
            })
        })
        .collect();
    let mut dumps = Vec::with_capacity(encoded.len());
    for (r, (k, _)) in encoded.into_iter().zip(&selected) {
        dumps.push(r.with_context(|| format!("interaction {k}"))?);
    }

    lines.push(format!(
        "encoded {} interaction(s) with seed {}",
        dumps.len(),
        params.config.seed
    ));
    if let Some(path) = &args.dump {
        write_json(
            path,
            &json!({"qurg_fmt": FORMAT_VERSION, "config": params.config, "encodings": dumps}),
        )?;
    }
    Ok(CommandResult {
        exit_code,
        summary: lines.join("\n"),
        payload: args.dump.clone(),
    })
}

// ---------------------------------------------------------------------------

pub fn cmd_stats(args: &StatsArgs) -> Result<CommandResult> {
    let (summary, payload) = if let Some(path) = &args.matrix {
        match load_any_matrix(path)? {
            AnyMatrix::Rewrite(m) => {
                let stats: BTreeMap<String, usize> = m
                    .stats()
                    .into_iter()
                    .map(|(k, v)| (k.to_string(), v))
                    .collect();
                let line = format!(
                    "rewrite matrix {}x{}: {}",
                    m.dim(),
                    m.dim(),
                    stats_line(&stats)
                );
                (
                    line,
                    json!({"qurg_fmt": FORMAT_VERSION, "kind": "rewrite", "dim": m.dim(), "counts": stats}),
                )
            }
            AnyMatrix::Link(m) => {
                let stats: BTreeMap<String, usize> = link_stats(&m)
                    .into_iter()
                    .map(|(k, v)| (k.to_string(), v))
                    .collect();
                let line = format!(
                    "schema-link matrix {}x{}: {}",
                    m.dim(),
                    m.dim(),
                    stats_line(&stats)
                );
                (
                    line,
                    json!({"qurg_fmt": FORMAT_VERSION, "kind": "schema_link", "dim": m.dim(), "counts": stats}),
                )
            }
        }
    } else {
        let path = args
            .corpus
            .as_ref()
            .context("--matrix or --corpus is required")?;
        let corpus = load_corpus(path)?;
        let policy = args.policy.policy();
        let (mut subs, mut inserts, mut unchanged) = (0usize, 0usize, 0usize);
        for ex in &corpus.examples {
            let ops = extract_edit_ops(&ex.question, &ex.context(), &ex.rewrite, &policy);
            subs += ops.iter().filter(|op| op.is_substitute()).count();
            inserts += ops.iter().filter(|op| !op.is_substitute()).count();
            unchanged += usize::from(ops.is_empty());
        }
        let line = format!(
            "{} examples: {} substitutes, {} inserts, {} without edits",
            corpus.examples.len(),
            subs,
            inserts,
            unchanged
        );
        let payload = json!({
            "qurg_fmt": FORMAT_VERSION,
            "kind": "corpus",
            "examples": corpus.examples.len(),
            "splits": corpus.split_counts,
            "substitutes": subs,
            "inserts": inserts,
            "without_edits": unchanged,
        });
        (line, payload)
    };
    if let Some(out) = &args.out {
        write_json(out, &payload)?;
    }
    Ok(CommandResult::ok(summary, args.out.clone()))
}
