//! Domain types shared across the engine: queries, schemas, tiers, token
//! usage and per-query run traces.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while constructing or combining domain values.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("cannot merge usage from phase {left} with phase {right}")]
    UsageMerge { left: Phase, right: Phase },
    #[error("duplicate table `{0}`")]
    DuplicateTable(String),
    #[error("duplicate column `{column}` in table `{table}`")]
    DuplicateColumn { table: String, column: String },
    #[error("foreign key {table}.{column} -> {foreign_table}.{foreign_column} has a missing endpoint")]
    DanglingForeignKey {
        table: String,
        column: String,
        foreign_table: String,
        foreign_column: String,
    },
    #[error("linked schema must contain at least one table")]
    EmptyLink,
    #[error("`{0}` is not a member of the schema")]
    UnknownName(String),
    #[error("unknown tier `{0}`")]
    UnknownTier(String),
}

/// SQL generation tier, ordered by token cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    #[serde(alias = "basic")]
    Basic,
    #[serde(alias = "intermediate")]
    Intermediate,
    #[serde(alias = "advanced")]
    Advanced,
}

impl Tier {
    /// All tiers, cheapest first.
    pub const ALL: [Tier; 3] = [Tier::Basic, Tier::Intermediate, Tier::Advanced];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Tier> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Tier::Basic => "Basic",
            Tier::Intermediate => "Intermediate",
            Tier::Advanced => "Advanced",
        }
    }

    /// Short pipeline label (`G_B`, `G_M`, `G_A`).
    pub fn short(self) -> &'static str {
        match self {
            Tier::Basic => "G_B",
            Tier::Intermediate => "G_M",
            Tier::Advanced => "G_A",
        }
    }

    /// True iff `self` strictly precedes `other` in cost order.
    pub fn cheaper_than(self, other: Tier) -> bool {
        self < other
    }
}

/// Strict cost-order comparison between two tiers.
pub fn tier_cheaper(a: Tier, b: Tier) -> bool {
    a.cheaper_than(b)
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Tier {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "basic" | "b" | "g_b" | "gb" => Ok(Tier::Basic),
            "intermediate" | "m" | "g_m" | "gm" => Ok(Tier::Intermediate),
            "advanced" | "a" | "g_a" | "ga" => Ok(Tier::Advanced),
            _ => Err(ModelError::UnknownTier(s.to_string())),
        }
    }
}

/// Benchmark difficulty tag (Bird only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Simple,
    Moderate,
    Challenging,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Simple, Difficulty::Moderate, Difficulty::Challenging];

    pub fn name(self) -> &'static str {
        match self {
            Difficulty::Simple => "simple",
            Difficulty::Moderate => "moderate",
            Difficulty::Challenging => "challenging",
        }
    }
}

impl FromStr for Difficulty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "simple" => Ok(Difficulty::Simple),
            "moderate" => Ok(Difficulty::Moderate),
            "challenging" => Ok(Difficulty::Challenging),
            other => Err(format!("unknown difficulty `{other}`")),
        }
    }
}

/// One benchmark question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NLQuery {
    pub id: String,
    pub question: String,
    /// Bird "evidence"; empty when the dataset has none.
    #[serde(default)]
    pub hint: String,
    pub db_id: String,
    #[serde(default)]
    pub gold_sql: Option<String>,
    #[serde(default)]
    pub difficulty: Option<Difficulty>,
}

impl NLQuery {
    /// The view handed to routers. It carries no gold SQL.
    pub fn router_view<'a>(&'a self, linked: &'a LinkedSchema) -> RouterInput<'a> {
        RouterInput {
            query_id: &self.id,
            question: &self.question,
            hint: &self.hint,
            linked,
        }
    }
}

/// Everything a router may look at for one query.
#[derive(Debug, Clone, Copy)]
pub struct RouterInput<'a> {
    pub query_id: &'a str,
    pub question: &'a str,
    pub hint: &'a str,
    pub linked: &'a LinkedSchema,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    pub decl_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_values: Option<Vec<String>>,
}

impl ColumnDef {
    pub fn new(name: impl Into<String>, decl_type: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            decl_type: decl_type.into(),
            description: None,
            sample_values: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForeignKey {
    pub column: String,
    pub foreign_table: String,
    pub foreign_column: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<ColumnDef>,
    #[serde(default)]
    pub primary_key: Vec<String>,
    #[serde(default)]
    pub foreign_keys: Vec<ForeignKey>,
}

impl TableDef {
    pub fn new(name: impl Into<String>, columns: Vec<ColumnDef>) -> Self {
        Self {
            name: name.into(),
            columns,
            primary_key: Vec::new(),
            foreign_keys: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| c.name.eq_ignore_ascii_case(name))
    }
}

/// Full catalog of one database. Construct through [`DatabaseSchema::new`]
/// so the uniqueness and foreign-key invariants are checked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct DatabaseSchema {
    tables: Vec<TableDef>,
}

#[derive(Serialize, Deserialize)]
struct RawSchema {
    tables: Vec<TableDef>,
}

impl TryFrom<RawSchema> for DatabaseSchema {
    type Error = ModelError;

    fn try_from(raw: RawSchema) -> Result<Self, Self::Error> {
        DatabaseSchema::new(raw.tables)
    }
}

impl From<DatabaseSchema> for RawSchema {
    fn from(schema: DatabaseSchema) -> Self {
        RawSchema { tables: schema.tables }
    }
}

impl DatabaseSchema {
    pub fn new(tables: Vec<TableDef>) -> Result<Self, ModelError> {
        let mut seen = HashSet::new();
        for table in &tables {
            if !seen.insert(table.name.to_ascii_lowercase()) {
                return Err(ModelError::DuplicateTable(table.name.clone()));
            }
            let mut cols = HashSet::new();
            for col in &table.columns {
                if !cols.insert(col.name.to_ascii_lowercase()) {
                    return Err(ModelError::DuplicateColumn {
                        table: table.name.clone(),
                        column: col.name.clone(),
                    });
                }
            }
        }
        let schema = Self { tables };
        for table in &schema.tables {
            for fk in &table.foreign_keys {
                let ok = table.column(&fk.column).is_some()
                    && schema
                        .table(&fk.foreign_table)
                        .and_then(|t| t.column(&fk.foreign_column))
                        .is_some();
                if !ok {
                    return Err(ModelError::DanglingForeignKey {
                        table: table.name.clone(),
                        column: fk.column.clone(),
                        foreign_table: fk.foreign_table.clone(),
                        foreign_column: fk.foreign_column.clone(),
                    });
                }
            }
        }
        Ok(schema)
    }

    pub fn tables(&self) -> &[TableDef] {
        &self.tables
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    /// Case-insensitive table lookup.
    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }

    pub fn column_count(&self) -> usize {
        self.tables.iter().map(|t| t.columns.len()).sum()
    }
}

/// How a [`LinkedSchema`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Model,
    FallbackFull,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkedTable {
    pub table: String,
    pub columns: Vec<String>,
}

/// The per-query filtered schema. Every name is canonical schema casing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkedSchema {
    pub entries: Vec<LinkedTable>,
    pub provenance: Provenance,
}

impl LinkedSchema {
    /// Builds a link from model-selected names, resolving each against the
    /// schema case-insensitively. Unknown tables or columns are dropped; a
    /// table that keeps no columns is dropped as well. Duplicates collapse.
    pub fn resolve<'a, I, C>(schema: &DatabaseSchema, selection: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (&'a str, C)>,
        C: IntoIterator<Item = &'a str>,
    {
        let mut entries: Vec<LinkedTable> = Vec::new();
        for (table_name, columns) in selection {
            let Some(table) = schema.table(table_name) else {
                continue;
            };
            let resolved: Vec<String> = columns
                .into_iter()
                .filter_map(|c| table.column(c).map(|col| col.name.clone()))
                .collect();
            if resolved.is_empty() {
                continue;
            }
            let slot = match entries.iter_mut().position(|e| e.table == table.name) {
                Some(i) => &mut entries[i],
                None => {
                    entries.push(LinkedTable {
                        table: table.name.clone(),
                        columns: Vec::new(),
                    });
                    entries.last_mut().expect("just pushed")
                }
            };
            for col in resolved {
                if !slot.columns.contains(&col) {
                    slot.columns.push(col);
                }
            }
        }
        if entries.is_empty() {
            return Err(ModelError::EmptyLink);
        }
        Ok(Self {
            entries,
            provenance: Provenance::Model,
        })
    }

    /// The whole schema, used when linking produced nothing usable.
    pub fn fallback_full(schema: &DatabaseSchema) -> Self {
        Self {
            entries: schema
                .tables()
                .iter()
                .map(|t| LinkedTable {
                    table: t.name.clone(),
                    columns: t.columns.iter().map(|c| c.name.clone()).collect(),
                })
                .collect(),
            provenance: Provenance::FallbackFull,
        }
    }

    pub fn table_count(&self) -> usize {
        self.entries.len()
    }

    pub fn column_count(&self) -> usize {
        self.entries.iter().map(|e| e.columns.len()).sum()
    }

    pub fn contains(&self, table: &str, column: &str) -> bool {
        self.entries.iter().any(|e| {
            e.table.eq_ignore_ascii_case(table) && e.columns.iter().any(|c| c.eq_ignore_ascii_case(column))
        })
    }

    /// True iff every linked name exists in `schema` with identical casing.
    pub fn is_subset_of(&self, schema: &DatabaseSchema) -> bool {
        self.entries.iter().all(|e| {
            schema.tables().iter().any(|t| {
                t.name == e.table && e.columns.iter().all(|c| t.columns.iter().any(|col| &col.name == c))
            })
        })
    }

    /// Restricts the full schema to the linked tables and columns, keeping
    /// column metadata (types, descriptions, samples) for prompt rendering.
    pub fn project(&self, schema: &DatabaseSchema) -> Vec<TableDef> {
        self.entries
            .iter()
            .filter_map(|e| {
                let table = schema.table(&e.table)?;
                let columns = e
                    .columns
                    .iter()
                    .filter_map(|c| table.column(c).cloned())
                    .collect();
                let primary_key = table
                    .primary_key
                    .iter()
                    .filter(|k| e.columns.iter().any(|c| c.eq_ignore_ascii_case(k)))
                    .cloned()
                    .collect();
                let foreign_keys = table
                    .foreign_keys
                    .iter()
                    .filter(|fk| {
                        self.contains(&table.name, &fk.column) && self.contains(&fk.foreign_table, &fk.foreign_column)
                    })
                    .cloned()
                    .collect();
                Some(TableDef {
                    name: table.name.clone(),
                    columns,
                    primary_key,
                    foreign_keys,
                })
            })
            .collect()
    }
}

/// Pipeline stage a token count belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Linking,
    Routing,
    Generation,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Linking => "linking",
            Phase::Routing => "routing",
            Phase::Generation => "generation",
        })
    }
}

/// Prompt and completion token counts for one phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenUsage {
    pub phase: Phase,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Set when any contributing count was estimated rather than reported.
    #[serde(default)]
    pub estimated: bool,
}

impl TokenUsage {
    pub fn new(phase: Phase, prompt_tokens: u64, completion_tokens: u64) -> Self {
        Self {
            phase,
            prompt_tokens,
            completion_tokens,
            estimated: false,
        }
    }

    pub fn zero(phase: Phase) -> Self {
        Self::new(phase, 0, 0)
    }

    pub fn with_estimated(mut self, estimated: bool) -> Self {
        self.estimated = estimated;
        self
    }

    pub fn merge(self, other: TokenUsage) -> Result<TokenUsage, ModelError> {
        merge_usage(self, other)
    }
}

/// Component-wise sum of two usages from the same phase.
pub fn merge_usage(a: TokenUsage, b: TokenUsage) -> Result<TokenUsage, ModelError> {
    if a.phase != b.phase {
        return Err(ModelError::UsageMerge {
            left: a.phase,
            right: b.phase,
        });
    }
    Ok(TokenUsage {
        phase: a.phase,
        prompt_tokens: a.prompt_tokens + b.prompt_tokens,
        completion_tokens: a.completion_tokens + b.completion_tokens,
        estimated: a.estimated || b.estimated,
    })
}

/// Per-query record of one benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub query_id: String,
    pub db_id: String,
    #[serde(default)]
    pub difficulty: Option<Difficulty>,
    pub router: String,
    pub chosen_tier: Tier,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<[f64; 3]>,
    pub link_provenance: Provenance,
    pub predicted_sql: String,
    pub usage: Vec<TokenUsage>,
    /// `None` when the query had no gold SQL.
    pub correct: Option<bool>,
    pub wall_clock_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_label: Option<Tier>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunTrace {
    /// Summed usage for one phase, if the trace recorded it.
    pub fn phase_usage(&self, phase: Phase) -> TokenUsage {
        self.usage
            .iter()
            .filter(|u| u.phase == phase)
            .fold(TokenUsage::zero(phase), |acc, u| {
                merge_usage(acc, *u).expect("phases filtered")
            })
    }
}
