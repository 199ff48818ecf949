//! Schema-linking relation matrix.
//!
//! Utterance tokens are linked to tables and columns by name n-gram
//! matching; schema elements are linked to each other by ownership,
//! primary keys and foreign keys. Value-based linking is not performed.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::rewrite_diff::{MatchPolicy, TokenSeq};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("table {index} has an empty name")]
    EmptyTableName { index: usize },
    #[error("column {index} has an empty name")]
    EmptyColumnName { index: usize },
    #[error("column {column} refers to table {table}, but the schema has {tables} tables")]
    ColumnTableOutOfRange {
        column: usize,
        table: usize,
        tables: usize,
    },
    #[error("primary key {column} is not a column (schema has {columns} columns)")]
    PrimaryKeyOutOfRange { column: usize, columns: usize },
    #[error(
        "foreign key ({from}, {to}) refers to a missing column (schema has {columns} columns)"
    )]
    DanglingForeignKey {
        from: usize,
        to: usize,
        columns: usize,
    },
    #[error("foreign key ({from}, {to}) is self-referential or mutual")]
    AmbiguousForeignKey { from: usize, to: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Text,
    Number,
    Time,
    Boolean,
    Others,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: TokenSeq,
    pub table: usize,
    #[serde(rename = "type")]
    pub col_type: ColumnType,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    tables: Vec<TokenSeq>,
    columns: Vec<Column>,
    primary_keys: BTreeSet<usize>,
    foreign_keys: BTreeSet<(usize, usize)>,
}

impl Schema {
    pub fn new(
        tables: Vec<TokenSeq>,
        columns: Vec<Column>,
        primary_keys: BTreeSet<usize>,
        foreign_keys: BTreeSet<(usize, usize)>,
    ) -> Result<Self, SchemaError> {
        if let Some(index) = tables.iter().position(|t| t.is_empty()) {
            return Err(SchemaError::EmptyTableName { index });
        }
        for (index, col) in columns.iter().enumerate() {
            if col.name.is_empty() {
                return Err(SchemaError::EmptyColumnName { index });
            }
            if col.table >= tables.len() {
                return Err(SchemaError::ColumnTableOutOfRange {
                    column: index,
                    table: col.table,
                    tables: tables.len(),
                });
            }
        }
        if let Some(&column) = primary_keys.iter().find(|&&c| c >= columns.len()) {
            return Err(SchemaError::PrimaryKeyOutOfRange {
                column,
                columns: columns.len(),
            });
        }
        for &(from, to) in &foreign_keys {
            if from >= columns.len() || to >= columns.len() {
                return Err(SchemaError::DanglingForeignKey {
                    from,
                    to,
                    columns: columns.len(),
                });
            }
            if from == to || foreign_keys.contains(&(to, from)) {
                return Err(SchemaError::AmbiguousForeignKey { from, to });
            }
        }
        Ok(Self {
            tables,
            columns,
            primary_keys,
            foreign_keys,
        })
    }

    pub fn tables(&self) -> &[TokenSeq] {
        &self.tables
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn primary_keys(&self) -> &BTreeSet<usize> {
        &self.primary_keys
    }

    pub fn foreign_keys(&self) -> &BTreeSet<(usize, usize)> {
        &self.foreign_keys
    }

    pub fn element_count(&self) -> usize {
        self.tables.len() + self.columns.len()
    }

    /// Element names in layout order: tables first, then columns.
    pub fn element_names(&self) -> impl Iterator<Item = &TokenSeq> {
        self.tables
            .iter()
            .chain(self.columns.iter().map(|c| &c.name))
    }
}

macro_rules! schema_relations {
    ($($variant:ident => $name:literal),* $(,)?) => {
        /// Link relation vocabulary. `None` is implicit (id 0).
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum SchemaRelation {
            $(#[serde(rename = $name)] $variant,)*
        }

        impl SchemaRelation {
            pub const ALL: &'static [SchemaRelation] = &[$(SchemaRelation::$variant,)*];

            pub fn name(self) -> &'static str {
                match self {
                    $(SchemaRelation::$variant => $name,)*
                }
            }
        }
    };
}

schema_relations! {
    UttTableExact => "Utterance-Table-Exact-Match",
    TableUttExact => "Table-Utterance-Exact-Match",
    UttTablePartial => "Utterance-Table-Partial-Match",
    TableUttPartial => "Table-Utterance-Partial-Match",
    UttColumnExact => "Utterance-Column-Exact-Match",
    ColumnUttExact => "Column-Utterance-Exact-Match",
    UttColumnPartial => "Utterance-Column-Partial-Match",
    ColumnUttPartial => "Column-Utterance-Partial-Match",
    ColumnBelongsToTable => "Column-Belongs-To-Table",
    TableHasColumn => "Table-Has-Column",
    SameTableColumns => "Same-Table-Columns",
    ForeignKeyForward => "Foreign-Key-Forward",
    ForeignKeyBackward => "Foreign-Key-Backward",
    PrimaryKeyOf => "Primary-Key-Of",
    HasPrimaryKey => "Has-Primary-Key",
}

impl SchemaRelation {
    /// Vocabulary size including `None`.
    pub const VOCAB_SIZE: usize = 16;

    pub fn id(self) -> usize {
        Self::ALL.iter().position(|&r| r == self).expect("listed") + 1
    }

    pub fn mirror(self) -> Self {
        use SchemaRelation::*;
        match self {
            UttTableExact => TableUttExact,
            TableUttExact => UttTableExact,
            UttTablePartial => TableUttPartial,
            TableUttPartial => UttTablePartial,
            UttColumnExact => ColumnUttExact,
            ColumnUttExact => UttColumnExact,
            UttColumnPartial => ColumnUttPartial,
            ColumnUttPartial => UttColumnPartial,
            ColumnBelongsToTable => TableHasColumn,
            TableHasColumn => ColumnBelongsToTable,
            SameTableColumns => SameTableColumns,
            ForeignKeyForward => ForeignKeyBackward,
            ForeignKeyBackward => ForeignKeyForward,
            PrimaryKeyOf => HasPrimaryKey,
            HasPrimaryKey => PrimaryKeyOf,
        }
    }

    /// Whether the relation connects an utterance token and a schema element.
    pub fn is_match(self) -> bool {
        self.id() <= 8
    }

    pub fn is_partial(self) -> bool {
        use SchemaRelation::*;
        matches!(
            self,
            UttTablePartial | TableUttPartial | UttColumnPartial | ColumnUttPartial
        )
    }
}

impl fmt::Display for SchemaRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemaRelation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|r| r.name() == s)
            .ok_or_else(|| format!("unknown schema relation {s:?}"))
    }
}

/// Position counts of `[question; context; tables; columns]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkLayout {
    pub question: usize,
    pub context: usize,
    pub tables: usize,
    pub columns: usize,
}

impl LinkLayout {
    pub fn dim(&self) -> usize {
        self.question + self.context + self.tables + self.columns
    }

    pub fn utterance_len(&self) -> usize {
        self.question + self.context
    }

    pub fn table_pos(&self, t: usize) -> usize {
        self.utterance_len() + t
    }

    pub fn column_pos(&self, c: usize) -> usize {
        self.utterance_len() + self.tables + c
    }

    pub fn is_utterance(&self, pos: usize) -> bool {
        pos < self.utterance_len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaLinkCell {
    pub i: usize,
    pub j: usize,
    pub rel: SchemaRelation,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinkMatrixError {
    #[error("cell ({i}, {j}) outside a {dim}x{dim} matrix")]
    CellOutOfBounds { i: usize, j: usize, dim: usize },
    #[error("cell ({i}, {j}) appears more than once")]
    DuplicateCell { i: usize, j: usize },
    #[error("layout does not match token counts")]
    LayoutMismatch,
    #[error("cell ({i}, {j}) = {rel} lies in the wrong block")]
    MisplacedCell {
        i: usize,
        j: usize,
        rel: SchemaRelation,
    },
    #[error("cell ({i}, {j}) = {rel} has no mirrored {} at ({j}, {i})", rel.mirror())]
    AsymmetricCell {
        i: usize,
        j: usize,
        rel: SchemaRelation,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaLinkMatrix {
    layout: LinkLayout,
    question_tokens: TokenSeq,
    context_tokens: TokenSeq,
    cells: BTreeMap<(usize, usize), SchemaRelation>,
}

impl SchemaLinkMatrix {
    pub fn from_cells(
        layout: LinkLayout,
        question_tokens: TokenSeq,
        context_tokens: TokenSeq,
        cells: impl IntoIterator<Item = SchemaLinkCell>,
    ) -> Result<Self, LinkMatrixError> {
        if layout.question != question_tokens.len() || layout.context != context_tokens.len() {
            return Err(LinkMatrixError::LayoutMismatch);
        }
        let dim = layout.dim();
        let mut map = BTreeMap::new();
        for c in cells {
            if c.i >= dim || c.j >= dim {
                return Err(LinkMatrixError::CellOutOfBounds {
                    i: c.i,
                    j: c.j,
                    dim,
                });
            }
            if map.insert((c.i, c.j), c.rel).is_some() {
                return Err(LinkMatrixError::DuplicateCell { i: c.i, j: c.j });
            }
        }
        Ok(Self {
            layout,
            question_tokens,
            context_tokens,
            cells: map,
        })
    }

    pub fn layout(&self) -> LinkLayout {
        self.layout
    }

    pub fn question_tokens(&self) -> &TokenSeq {
        &self.question_tokens
    }

    pub fn context_tokens(&self) -> &TokenSeq {
        &self.context_tokens
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<SchemaRelation> {
        self.cells.get(&(i, j)).copied()
    }

    pub fn cells(&self) -> impl Iterator<Item = SchemaLinkCell> + '_ {
        self.cells
            .iter()
            .map(|(&(i, j), &rel)| SchemaLinkCell { i, j, rel })
    }

    pub fn non_none_count(&self) -> usize {
        self.cells.len()
    }

    pub fn relation_ids(&self) -> Vec<usize> {
        let n = self.dim();
        let mut ids = vec![0; n * n];
        for (&(i, j), rel) in &self.cells {
            ids[i * n + j] = rel.id();
        }
        ids
    }

    /// Checks block placement and mirroring of every cell.
    pub fn validate(&self) -> Result<(), LinkMatrixError> {
        let l = &self.layout;
        for (&(i, j), &rel) in &self.cells {
            let placed = match (l.is_utterance(i), l.is_utterance(j)) {
                (true, true) => false,
                (false, false) => !rel.is_match(),
                _ => rel.is_match(),
            };
            if !placed {
                return Err(LinkMatrixError::MisplacedCell { i, j, rel });
            }
            if self.get(j, i) != Some(rel.mirror()) {
                return Err(LinkMatrixError::AsymmetricCell { i, j, rel });
            }
        }
        Ok(())
    }

    fn link(&mut self, i: usize, j: usize, rel: SchemaRelation) {
        self.cells.insert((i, j), rel);
        self.cells.insert((j, i), rel.mirror());
    }
}

#[derive(Clone, Copy)]
enum Element {
    Table(usize),
    Column(usize),
}

fn match_segment(
    tokens: &[String],
    offset: usize,
    schema: &Schema,
    policy: &MatchPolicy,
    matrix: &mut SchemaLinkMatrix,
) {
    let layout = matrix.layout;
    let norm = policy.normalize_all(tokens);
    let elements: Vec<(Element, Vec<String>)> = (0..schema.tables.len())
        .map(Element::Table)
        .chain((0..schema.columns.len()).map(Element::Column))
        .zip(schema.element_names())
        .map(|(e, name)| (e, policy.normalize_all(name)))
        .collect();
    let position = |e: Element| match e {
        Element::Table(t) => layout.table_pos(t),
        Element::Column(c) => layout.column_pos(c),
    };

    let max_n = elements
        .iter()
        .map(|(_, n)| n.len())
        .max()
        .unwrap_or(0)
        .min(norm.len());
    let mut claimed = vec![false; norm.len()];
    for n in (1..=max_n).rev() {
        for start in 0..=norm.len() - n {
            let span = start..start + n;
            if claimed[span.clone()].iter().any(|&c| c) {
                continue;
            }
            let gram = &norm[span.clone()];
            let Some(&(element, _)) = elements.iter().find(|(_, name)| name.as_slice() == gram)
            else {
                continue;
            };
            let rel = match element {
                Element::Table(_) => SchemaRelation::UttTableExact,
                Element::Column(_) => SchemaRelation::UttColumnExact,
            };
            for t in span {
                claimed[t] = true;
                matrix.link(offset + t, position(element), rel);
            }
        }
    }

    for (t, word) in norm.iter().enumerate() {
        if claimed[t] {
            continue;
        }
        for (element, name) in &elements {
            if name.len() > 1 && name.contains(word) {
                let rel = match element {
                    Element::Table(_) => SchemaRelation::UttTablePartial,
                    Element::Column(_) => SchemaRelation::UttColumnPartial,
                };
                matrix.link(offset + t, position(*element), rel);
            }
        }
    }
}

/// Builds the linking matrix over `[question; context; tables; columns]`.
///
/// Question and context are matched separately, so n-grams never straddle
/// the two. Longer exact matches claim their tokens first; among elements
/// with identical names the earliest in schema order wins.
pub fn build_schema_link_matrix(
    question: &TokenSeq,
    context: &TokenSeq,
    schema: &Schema,
    policy: &MatchPolicy,
) -> SchemaLinkMatrix {
    let layout = LinkLayout {
        question: question.len(),
        context: context.len(),
        tables: schema.tables.len(),
        columns: schema.columns.len(),
    };
    let mut m = SchemaLinkMatrix {
        layout,
        question_tokens: question.clone(),
        context_tokens: context.clone(),
        cells: BTreeMap::new(),
    };
    match_segment(question, 0, schema, policy, &mut m);
    match_segment(context, layout.question, schema, policy, &mut m);

    for (c, col) in schema.columns.iter().enumerate() {
        let rel = if schema.primary_keys.contains(&c) {
            SchemaRelation::PrimaryKeyOf
        } else {
            SchemaRelation::ColumnBelongsToTable
        };
        m.link(layout.column_pos(c), layout.table_pos(col.table), rel);
    }
    for a in 0..schema.columns.len() {
        for b in a + 1..schema.columns.len() {
            let rel = if schema.foreign_keys.contains(&(a, b)) {
                SchemaRelation::ForeignKeyForward
            } else if schema.foreign_keys.contains(&(b, a)) {
                SchemaRelation::ForeignKeyBackward
            } else if schema.columns[a].table == schema.columns[b].table {
                SchemaRelation::SameTableColumns
            } else {
                continue;
            };
            m.link(layout.column_pos(a), layout.column_pos(b), rel);
        }
    }
    m
}

/// Number of cells per relation type; every type is present.
pub fn link_stats(matrix: &SchemaLinkMatrix) -> BTreeMap<SchemaRelation, usize> {
    let mut counts: BTreeMap<_, _> = SchemaRelation::ALL.iter().map(|&r| (r, 0)).collect();
    for rel in matrix.cells.values() {
        *counts.entry(*rel).or_default() += 1;
    }
    counts
}
