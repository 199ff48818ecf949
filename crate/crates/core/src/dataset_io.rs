//! File formats: interaction and rewrite corpora, schemas, matrices, reports
//! and encoder parameters.
//!
//! Every file this crate writes carries `"qurg_fmt": 1`. Input corpora and
//! schema files may omit it, but any other value is rejected.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::rat_encoder::EncoderParams;
use crate::rewrite_diff::{
    tokenize, DiffError, Interaction, RewriteCell, RewriteEditMatrix, RewriteRelation, TokenSeq,
};
use crate::rouge_eval::{CorpusRougeReport, RougeScore, NORMALIZATION};
use crate::schema_link::{
    Column, ColumnType, LinkLayout, LinkMatrixError, Schema, SchemaError, SchemaLinkCell,
    SchemaLinkMatrix, SchemaRelation,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: malformed JSON: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {message}")]
    Validation { line: usize, message: String },
    #[error("unsupported format version {found:?}, expected qurg_fmt = {FORMAT_VERSION}")]
    Version { found: Option<u64> },
    #[error("cell #{index} ({i}, {j}): {message}")]
    Cell {
        index: usize,
        i: usize,
        j: usize,
        message: String,
    },
    #[error(transparent)]
    Matrix(#[from] DiffError),
    #[error(transparent)]
    LinkMatrix(#[from] LinkMatrixError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

fn read(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), DatasetError> {
    fs::write(path, text).map_err(|source| DatasetError::Io {
        path: path.to_owned(),
        source,
    })
}

fn parse_err(e: serde_json::Error) -> DatasetError {
    DatasetError::Parse {
        line: e.line(),
        message: e.to_string(),
    }
}

fn check_version(found: Option<u64>, required: bool) -> Result<(), DatasetError> {
    match found {
        Some(v) if v == u64::from(FORMAT_VERSION) => Ok(()),
        None if !required => Ok(()),
        other => Err(DatasetError::Version { found: other }),
    }
}

/// Compact JSON plus a trailing newline.
pub fn to_json_line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("plain data serializes");
    s.push('\n');
    s
}

/// Non-blank lines with their 1-based line numbers.
fn json_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

// ---------------------------------------------------------------------------
// interactions

#[derive(Debug, Deserialize)]
struct InteractionLine {
    qurg_fmt: Option<u64>,
    turns: Vec<String>,
    rewrite: Option<String>,
}

#[derive(Debug, Deserialize)]
struct SparcTurn {
    utterance: String,
}

#[derive(Debug, Deserialize)]
struct SparcInteraction {
    interaction: Vec<SparcTurn>,
}

/// Builds the interaction whose question is the last of `turns`.
pub fn interaction_from_turns(
    turns: &[String],
    rewrite: Option<&str>,
) -> Result<Interaction, String> {
    let (last, history) = turns.split_last().ok_or("interaction has no turns")?;
    let question = tokenize(last);
    if question.is_empty() {
        return Err("final turn has no tokens".into());
    }
    let context = history.iter().map(|t| tokenize(t)).collect();
    Interaction::new(context, question, rewrite.map(tokenize)).map_err(|e| e.to_string())
}

/// Loads interactions in chronological turn order.
///
/// Two layouts are accepted: native JSON lines
/// (`{"turns": [...], "rewrite": "..."}`, one interaction per line whose last
/// turn is the question), or a SParC/CoSQL-style JSON array, which is
/// expanded into one interaction per turn.
pub fn load_interactions(path: &Path) -> Result<Vec<Interaction>, DatasetError> {
    let text = read(path)?;
    if text.trim_start().starts_with('[') {
        return parse_sparc(&text);
    }
    parse_interaction_lines(&text)
}

pub fn parse_interaction_lines(text: &str) -> Result<Vec<Interaction>, DatasetError> {
    let mut out = Vec::new();
    for (line, raw) in json_lines(text) {
        let rec: InteractionLine = serde_json::from_str(raw).map_err(|e| DatasetError::Parse {
            line,
            message: e.to_string(),
        })?;
        if rec.qurg_fmt.is_some() {
            check_version(rec.qurg_fmt, false)?;
        }
        let interaction = interaction_from_turns(&rec.turns, rec.rewrite.as_deref())
            .map_err(|message| DatasetError::Validation { line, message })?;
        out.push(interaction);
    }
    Ok(out)
}

fn parse_sparc(text: &str) -> Result<Vec<Interaction>, DatasetError> {
    let raw: Vec<SparcInteraction> = serde_json::from_str(text).map_err(parse_err)?;
    let mut out = Vec::new();
    for (k, item) in raw.iter().enumerate() {
        if item.interaction.is_empty() {
            return Err(DatasetError::Validation {
                line: 0,
                message: format!("interaction {k} is empty"),
            });
        }
        let turns: Vec<String> = item
            .interaction
            .iter()
            .map(|t| t.utterance.clone())
            .collect();
        for t in 1..=turns.len() {
            let interaction = interaction_from_turns(&turns[..t], None).map_err(|message| {
                DatasetError::Validation {
                    line: 0,
                    message: format!("interaction {k}, turn {t}: {message}"),
                }
            })?;
            out.push(interaction);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// rewrite corpora

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteExample {
    pub example_id: String,
    pub history: Vec<TokenSeq>,
    pub question: TokenSeq,
    pub rewrite: TokenSeq,
}

impl RewriteExample {
    pub fn interaction(&self) -> Interaction {
        Interaction::new(
            self.history.clone(),
            self.question.clone(),
            Some(self.rewrite.clone()),
        )
        .expect("question validated at load time")
    }

    pub fn context(&self) -> TokenSeq {
        TokenSeq::concat(&self.history)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub source: String,
    pub examples: Vec<RewriteExample>,
    /// Example count per split; lines without a `split` count as `"all"`.
    pub split_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RewriteLine {
    #[serde(skip_serializing_if = "Option::is_none")]
    qurg_fmt: Option<u64>,
    #[serde(default)]
    history: Vec<String>,
    question: Option<String>,
    rewrite: Option<String>,
    id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<String>,
}

pub fn parse_rewrite_corpus(text: &str, source: &str) -> Result<Corpus, DatasetError> {
    let mut examples = Vec::new();
    let mut split_counts = BTreeMap::new();
    let mut seen = HashSet::new();
    for (line, raw) in json_lines(text) {
        let rec: RewriteLine = serde_json::from_str(raw).map_err(|e| DatasetError::Parse {
            line,
            message: e.to_string(),
        })?;
        if rec.qurg_fmt.is_some() {
            check_version(rec.qurg_fmt, false)?;
        }
        let missing = |field: &str| DatasetError::Validation {
            line,
            message: format!("missing field \"{field}\""),
        };
        let id = rec.id.ok_or_else(|| missing("id"))?;
        let question = tokenize(&rec.question.ok_or_else(|| missing("question"))?);
        let rewrite = tokenize(&rec.rewrite.ok_or_else(|| missing("rewrite"))?);
        if question.is_empty() {
            return Err(DatasetError::Validation {
                line,
                message: "field \"question\" is empty".into(),
            });
        }
        if rewrite.is_empty() {
            return Err(DatasetError::Validation {
                line,
                message: "field \"rewrite\" is empty".into(),
            });
        }
        if !seen.insert(id.clone()) {
            return Err(DatasetError::Validation {
                line,
                message: format!("duplicate id {id:?}"),
            });
        }
        *split_counts
            .entry(rec.split.unwrap_or_else(|| "all".into()))
            .or_insert(0) += 1;
        examples.push(RewriteExample {
            example_id: id,
            history: rec.history.iter().map(|h| tokenize(h)).collect(),
            question,
            rewrite,
        });
    }
    Ok(Corpus {
        source: source.to_owned(),
        examples,
        split_counts,
    })
}

pub fn load_rewrite_corpus(path: &Path) -> Result<Vec<RewriteExample>, DatasetError> {
    load_corpus(path).map(|c| c.examples)
}

pub fn load_corpus(path: &Path) -> Result<Corpus, DatasetError> {
    parse_rewrite_corpus(&read(path)?, &path.display().to_string())
}

/// Writes examples as JSON lines readable by [`load_rewrite_corpus`].
pub fn save_rewrite_corpus(path: &Path, examples: &[RewriteExample]) -> Result<(), DatasetError> {
    let mut out = String::new();
    for ex in examples {
        out.push_str(&to_json_line(&RewriteLine {
            qurg_fmt: Some(FORMAT_VERSION.into()),
            history: ex.history.iter().map(TokenSeq::join).collect(),
            question: Some(ex.question.join()),
            rewrite: Some(ex.rewrite.join()),
            id: Some(ex.example_id.clone()),
            split: None,
        }));
    }
    write(path, &out)
}

// ---------------------------------------------------------------------------
// rewrite matrices

#[derive(Serialize, Deserialize)]
struct RawCell {
    i: usize,
    j: usize,
    rel: String,
}

#[derive(Serialize, Deserialize)]
struct RewriteMatrixFile {
    qurg_fmt: Option<u64>,
    context_tokens: TokenSeq,
    question_tokens: TokenSeq,
    cells: Vec<RawCell>,
}

pub fn rewrite_matrix_to_json(m: &RewriteEditMatrix) -> String {
    to_json_line(&RewriteMatrixFile {
        qurg_fmt: Some(FORMAT_VERSION.into()),
        context_tokens: m.context_tokens().clone(),
        question_tokens: m.question_tokens().clone(),
        cells: m
            .cells()
            .map(|c| RawCell {
                i: c.i,
                j: c.j,
                rel: c.rel.name().into(),
            })
            .collect(),
    })
}

/// Parses a rewrite matrix. Bounds and duplicates are checked here;
/// mirroring and block placement are left to [`RewriteEditMatrix::validate`].
pub fn rewrite_matrix_from_json(text: &str) -> Result<RewriteEditMatrix, DatasetError> {
    let file: RewriteMatrixFile = serde_json::from_str(text).map_err(parse_err)?;
    check_version(file.qurg_fmt, true)?;
    let mut cells = Vec::with_capacity(file.cells.len());
    for (index, c) in file.cells.into_iter().enumerate() {
        let rel: RewriteRelation = c.rel.parse().map_err(|message| DatasetError::Cell {
            index,
            i: c.i,
            j: c.j,
            message,
        })?;
        cells.push(RewriteCell {
            i: c.i,
            j: c.j,
            rel,
        });
    }
    Ok(RewriteEditMatrix::from_cells(
        file.context_tokens,
        file.question_tokens,
        cells,
    )?)
}

pub fn save_matrix(path: &Path, m: &RewriteEditMatrix) -> Result<(), DatasetError> {
    write(path, &rewrite_matrix_to_json(m))
}

pub fn load_matrix(path: &Path) -> Result<RewriteEditMatrix, DatasetError> {
    rewrite_matrix_from_json(&read(path)?)
}

// ---------------------------------------------------------------------------
// schema-linking matrices

#[derive(Serialize, Deserialize)]
struct LinkMatrixFile {
    qurg_fmt: Option<u64>,
    relations: Vec<String>,
    layout: LinkLayout,
    question_tokens: TokenSeq,
    context_tokens: TokenSeq,
    cells: Vec<RawCell>,
}

pub fn link_matrix_to_json(m: &SchemaLinkMatrix) -> String {
    to_json_line(&LinkMatrixFile {
        qurg_fmt: Some(FORMAT_VERSION.into()),
        relations: SchemaRelation::ALL
            .iter()
            .map(|r| r.name().to_owned())
            .collect(),
        layout: m.layout(),
        question_tokens: m.question_tokens().clone(),
        context_tokens: m.context_tokens().clone(),
        cells: m
            .cells()
            .map(|c| RawCell {
                i: c.i,
                j: c.j,
                rel: c.rel.name().into(),
            })
            .collect(),
    })
}

pub fn link_matrix_from_json(text: &str) -> Result<SchemaLinkMatrix, DatasetError> {
    let file: LinkMatrixFile = serde_json::from_str(text).map_err(parse_err)?;
    check_version(file.qurg_fmt, true)?;
    let mut cells = Vec::with_capacity(file.cells.len());
    for (index, c) in file.cells.into_iter().enumerate() {
        let rel: SchemaRelation = c.rel.parse().map_err(|message| DatasetError::Cell {
            index,
            i: c.i,
            j: c.j,
            message,
        })?;
        cells.push(SchemaLinkCell {
            i: c.i,
            j: c.j,
            rel,
        });
    }
    Ok(SchemaLinkMatrix::from_cells(
        file.layout,
        file.question_tokens,
        file.context_tokens,
        cells,
    )?)
}

pub fn save_link_matrix(path: &Path, m: &SchemaLinkMatrix) -> Result<(), DatasetError> {
    write(path, &link_matrix_to_json(m))
}

pub fn load_link_matrix(path: &Path) -> Result<SchemaLinkMatrix, DatasetError> {
    link_matrix_from_json(&read(path)?)
}

/// Either kind of matrix file.
pub enum AnyMatrix {
    Rewrite(RewriteEditMatrix),
    Link(SchemaLinkMatrix),
}

pub fn load_any_matrix(path: &Path) -> Result<AnyMatrix, DatasetError> {
    let text = read(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(parse_err)?;
    if value.get("layout").is_some() {
        link_matrix_from_json(&text).map(AnyMatrix::Link)
    } else {
        rewrite_matrix_from_json(&text).map(AnyMatrix::Rewrite)
    }
}

// ---------------------------------------------------------------------------
// schemas

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Name {
    Tokens(Vec<String>),
    Text(String),
}

impl Name {
    fn tokens(self) -> Result<TokenSeq, DiffError> {
        match self {
            Name::Tokens(t) => TokenSeq::new(t),
            Name::Text(s) => Ok(tokenize(&s)),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ColumnFile {
    name: Name,
    table: usize,
    #[serde(rename = "type", default = "default_type")]
    col_type: ColumnType,
}

fn default_type() -> ColumnType {
    ColumnType::Others
}

#[derive(Serialize, Deserialize)]
struct SchemaFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    qurg_fmt: Option<u64>,
    tables: Vec<Name>,
    columns: Vec<ColumnFile>,
    #[serde(default)]
    primary_keys: Vec<usize>,
    #[serde(default)]
    foreign_keys: Vec<(usize, usize)>,
}

pub fn schema_from_json(text: &str) -> Result<Schema, DatasetError> {
    let file: SchemaFile = serde_json::from_str(text).map_err(parse_err)?;
    check_version(file.qurg_fmt, false)?;
    let tables = file
        .tables
        .into_iter()
        .map(Name::tokens)
        .collect::<Result<Vec<_>, _>>()?;
    let columns = file
        .columns
        .into_iter()
        .map(|c| {
            Ok(Column {
                name: c.name.tokens()?,
                table: c.table,
                col_type: c.col_type,
            })
        })
        .collect::<Result<Vec<_>, DiffError>>()?;
    let pks: BTreeSet<usize> = file.primary_keys.into_iter().collect();
    let fks: BTreeSet<(usize, usize)> = file.foreign_keys.into_iter().collect();
    Ok(Schema::new(tables, columns, pks, fks)?)
}

pub fn schema_to_json(schema: &Schema) -> String {
    to_json_line(&SchemaFile {
        qurg_fmt: Some(FORMAT_VERSION.into()),
        tables: schema
            .tables()
            .iter()
            .map(|t| Name::Tokens(t.to_vec()))
            .collect(),
        columns: schema
            .columns()
            .iter()
            .map(|c| ColumnFile {
                name: Name::Tokens(c.name.to_vec()),
                table: c.table,
                col_type: c.col_type,
            })
            .collect(),
        primary_keys: schema.primary_keys().iter().copied().collect(),
        foreign_keys: schema.foreign_keys().iter().copied().collect(),
    })
}

pub fn load_schema(path: &Path) -> Result<Schema, DatasetError> {
    schema_from_json(&read(path)?)
}

pub fn save_schema(path: &Path, schema: &Schema) -> Result<(), DatasetError> {
    write(path, &schema_to_json(schema))
}

// ---------------------------------------------------------------------------
// ROUGE reports

#[derive(Serialize, Deserialize)]
struct ReportFile {
    qurg_fmt: Option<u64>,
    normalization: String,
    r1: RougeScore,
    r2: RougeScore,
    rl: RougeScore,
    pairs: usize,
}

pub fn report_to_json(report: &CorpusRougeReport) -> String {
    to_json_line(&ReportFile {
        qurg_fmt: Some(FORMAT_VERSION.into()),
        normalization: NORMALIZATION.into(),
        r1: report.r1,
        r2: report.r2,
        rl: report.rl,
        pairs: report.pair_count,
    })
}

pub fn report_from_json(text: &str) -> Result<CorpusRougeReport, DatasetError> {
    let file: ReportFile = serde_json::from_str(text).map_err(parse_err)?;
    check_version(file.qurg_fmt, true)?;
    Ok(CorpusRougeReport {
        r1: file.r1,
        r2: file.r2,
        rl: file.rl,
        pair_count: file.pairs,
    })
}

pub fn save_report(path: &Path, report: &CorpusRougeReport) -> Result<(), DatasetError> {
    write(path, &report_to_json(report))
}

pub fn load_report(path: &Path) -> Result<CorpusRougeReport, DatasetError> {
    report_from_json(&read(path)?)
}

// ---------------------------------------------------------------------------
// encoder parameters

#[derive(Serialize, Deserialize)]
struct ParamsFile {
    qurg_fmt: Option<u64>,
    params: EncoderParams,
}

pub fn save_params(path: &Path, params: &EncoderParams) -> Result<(), DatasetError> {
    let file = ParamsFile {
        qurg_fmt: Some(FORMAT_VERSION.into()),
        params: params.clone(),
    };
    write(path, &to_json_line(&file))
}

pub fn load_params(path: &Path) -> Result<EncoderParams, DatasetError> {
    let file: ParamsFile = serde_json::from_str(&read(path)?).map_err(parse_err)?;
    check_version(file.qurg_fmt, true)?;
    Ok(file.params)
}
