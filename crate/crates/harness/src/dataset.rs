//! Bird and Spider question files plus their SQLite databases.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use tiersql_core::{DatabaseSchema, Difficulty, NLQuery};
use tiersql_sqlexec::{introspect, IntrospectOptions};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    #[default]
    Bird,
    Spider,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    /// JSON array or JSON Lines.
    pub questions_file: PathBuf,
    /// Holds `<db_id>/<db_id>.sqlite`.
    pub databases_dir: PathBuf,
    pub format: DatasetFormat,
}

#[derive(Deserialize)]
struct BirdRecord {
    #[serde(default)]
    question_id: Option<serde_json::Value>,
    db_id: String,
    question: String,
    #[serde(default)]
    evidence: String,
    #[serde(default, rename = "SQL")]
    sql: Option<String>,
    #[serde(default)]
    difficulty: Option<String>,
}

#[derive(Deserialize)]
struct SpiderRecord {
    db_id: String,
    question: String,
    #[serde(default)]
    query: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub queries: Vec<NLQuery>,
    pub schemas: BTreeMap<String, DatabaseSchema>,
}

impl Dataset {
    pub fn db_path(&self, db_id: &str) -> PathBuf {
        db_path(&self.spec.databases_dir, db_id)
    }

    pub fn schema(&self, db_id: &str) -> Option<&DatabaseSchema> {
        self.schemas.get(db_id)
    }

    /// First `n` queries, or all of them.
    pub fn truncate(&mut self, n: Option<usize>) {
        if let Some(n) = n {
            self.queries.truncate(n);
        }
    }
}

pub fn db_path(databases_dir: &Path, db_id: &str) -> PathBuf {
    databases_dir.join(db_id).join(format!("{db_id}.sqlite"))
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset].bytes().filter(|b| *b == b'\n').count() + 1
}

/// Raw records with the line each starts on.
fn split_records<'t>(text: &'t str, path: &Path) -> Result<Vec<(usize, &'t str)>, HarnessError> {
    let malformed = |line: usize, message: String| HarnessError::Dataset {
        path: path.to_path_buf(),
        line,
        message,
    };
    if text.trim_start().starts_with('[') {
        let items: Vec<&RawValue> = serde_json::from_str(text).map_err(|e| malformed(e.line(), e.to_string()))?;
        Ok(items
            .into_iter()
            .map(|raw| {
                let offset = raw.get().as_ptr() as usize - text.as_ptr() as usize;
                (line_of(text, offset), raw.get())
            })
            .collect())
    } else {
        Ok(text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (i + 1, l))
            .collect())
    }
}

fn to_query(format: DatasetFormat, index: usize, raw: &str) -> Result<NLQuery, String> {
    match format {
        DatasetFormat::Bird => {
            let r: BirdRecord = serde_json::from_str(raw).map_err(|e| e.to_string())?;
            let id = match r.question_id {
                Some(serde_json::Value::String(s)) => s,
                Some(serde_json::Value::Number(n)) => n.to_string(),
                None => index.to_string(),
                Some(other) => return Err(format!("question_id must be a string or number, got {other}")),
            };
            let difficulty = r.difficulty.map(|d| d.parse::<Difficulty>()).transpose()?;
            Ok(NLQuery {
                id,
                question: r.question,
                hint: r.evidence,
                db_id: r.db_id,
                gold_sql: r.sql,
                difficulty,
            })
        }
        DatasetFormat::Spider => {
            let r: SpiderRecord = serde_json::from_str(raw).map_err(|e| e.to_string())?;
            Ok(NLQuery {
                id: index.to_string(),
                question: r.question,
                hint: String::new(),
                db_id: r.db_id,
                gold_sql: r.query,
                difficulty: None,
            })
        }
    }
}

/// Parses the question file without touching the databases.
pub fn parse_questions(text: &str, format: DatasetFormat, path: &Path) -> Result<Vec<NLQuery>, HarnessError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (index, (line, raw)) in split_records(text, path)?.into_iter().enumerate() {
        let q = to_query(format, index, raw).map_err(|message| HarnessError::Dataset {
            path: path.to_path_buf(),
            line,
            message,
        })?;
        if !seen.insert(q.id.clone()) {
            return Err(HarnessError::Dataset {
                path: path.to_path_buf(),
                line,
                message: format!("duplicate question id `{}`", q.id),
            });
        }
        out.push(q);
    }
    Ok(out)
}

pub fn load_dataset(spec: &DatasetSpec) -> Result<Dataset, HarnessError> {
    let text = std::fs::read_to_string(&spec.questions_file).map_err(|e| HarnessError::Io {
        path: spec.questions_file.clone(),
        source: e,
    })?;
    let queries = parse_questions(&text, spec.format, &spec.questions_file)?;
    let mut schemas = BTreeMap::new();
    for q in &queries {
        if schemas.contains_key(&q.db_id) {
            continue;
        }
        let path = db_path(&spec.databases_dir, &q.db_id);
        if !path.is_file() {
            return Err(HarnessError::UnknownDatabase {
                db_id: q.db_id.clone(),
                path,
            });
        }
        let schema = introspect(&path, &IntrospectOptions::default())
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        schemas.insert(q.db_id.clone(), schema);
    }
    Ok(Dataset {
        spec: spec.clone(),
        queries,
        schemas,
    })
}
