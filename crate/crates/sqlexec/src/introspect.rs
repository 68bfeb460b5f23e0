//! Reads a [`DatabaseSchema`] out of a SQLite file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rusqlite::Connection;
use tiersql_core::{ColumnDef, DatabaseSchema, ForeignKey, TableDef};

use crate::exec::{open_read_only, ExecError};

pub const SAMPLE_VALUES: usize = 3;
const SAMPLE_MAX_CHARS: usize = 80;

#[derive(Debug, thiserror::Error)]
pub enum IntrospectError {
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("reading schema of {}: {message}", .path.display())]
    Sqlite { path: PathBuf, message: String },
    #[error("invalid schema in {}: {source}", .path.display())]
    Model {
        path: PathBuf,
        source: tiersql_core::ModelError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntrospectOptions {
    /// Distinct non-null values sampled per column (0 disables sampling).
    pub sample_values: usize,
    /// Look for Bird-style `database_description/<table>.csv` next to the
    /// database file.
    pub descriptions: bool,
}

impl Default for IntrospectOptions {
    fn default() -> Self {
        Self {
            sample_values: SAMPLE_VALUES,
            descriptions: true,
        }
    }
}

fn quote(ident: &str) -> String {
    format!("\"{}\"", ident.replace('"', "\"\""))
}

pub fn introspect(db_path: &Path, opts: &IntrospectOptions) -> Result<DatabaseSchema, IntrospectError> {
    let conn = open_read_only(db_path)?;
    let sq = |e: rusqlite::Error| IntrospectError::Sqlite {
        path: db_path.to_path_buf(),
        message: e.to_string(),
    };

    let names: Vec<String> = conn
        .prepare("SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY rowid")
        .and_then(|mut s| s.query_map([], |r| r.get(0))?.collect())
        .map_err(sq)?;

    let mut tables = Vec::with_capacity(names.len());
    for name in &names {
        tables.push(read_table(&conn, name, opts).map_err(sq)?);
    }

    if opts.descriptions {
        let dir = db_path.parent().unwrap_or(Path::new(".")).join("database_description");
        if dir.is_dir() {
            for t in &mut tables {
                apply_descriptions(&dir, t);
            }
        }
    }

    resolve_foreign_keys(&mut tables);
    DatabaseSchema::new(tables).map_err(|source| IntrospectError::Model {
        path: db_path.to_path_buf(),
        source,
    })
}

fn read_table(conn: &Connection, name: &str, opts: &IntrospectOptions) -> rusqlite::Result<TableDef> {
    let mut stmt = conn.prepare(&format!("PRAGMA table_info({})", quote(name)))?;
    let rows: Vec<(String, String, i64)> = stmt
        .query_map([], |r| Ok((r.get::<_, String>(1)?, r.get::<_, String>(2)?, r.get::<_, i64>(5)?)))?
        .collect::<Result<_, _>>()?;

    let mut seen = HashSet::new();
    let mut columns = Vec::new();
    let mut pk: Vec<(i64, String)> = Vec::new();
    for (col, decl, pk_pos) in rows {
        if !seen.insert(col.to_ascii_lowercase()) {
            log::warn!("table {name}: duplicate column {col} ignored");
            continue;
        }
        if pk_pos > 0 {
            pk.push((pk_pos, col.clone()));
        }
        let mut def = ColumnDef::new(col, decl);
        if opts.sample_values > 0 {
            def.sample_values = Some(sample(conn, name, &def.name, opts.sample_values)?);
        }
        columns.push(def);
    }
    pk.sort();

    let mut fk_stmt = conn.prepare(&format!("PRAGMA foreign_key_list({})", quote(name)))?;
    let foreign_keys = fk_stmt
        .query_map([], |r| {
            Ok(ForeignKey {
                column: r.get(3)?,
                foreign_table: r.get(2)?,
                foreign_column: r.get::<_, Option<String>>(4)?.unwrap_or_default(),
            })
        })?
        .collect::<Result<Vec<_>, _>>()?;

    let mut t = TableDef::new(name, columns);
    t.primary_key = pk.into_iter().map(|(_, c)| c).collect();
    t.foreign_keys = foreign_keys;
    Ok(t)
}

fn sample(conn: &Connection, table: &str, column: &str, n: usize) -> rusqlite::Result<Vec<String>> {
    let sql = format!(
        "SELECT DISTINCT {c} FROM {t} WHERE {c} IS NOT NULL AND typeof({c}) != 'blob' LIMIT {n}",
        c = quote(column),
        t = quote(table)
    );
    let mut stmt = conn.prepare(&sql)?;
    let mut rows = stmt.query([])?;
    let mut out = Vec::new();
    while let Some(row) = rows.next()? {
        let v = match row.get_ref(0)? {
            rusqlite::types::ValueRef::Integer(i) => i.to_string(),
            rusqlite::types::ValueRef::Real(r) => r.to_string(),
            rusqlite::types::ValueRef::Text(t) => String::from_utf8_lossy(t).chars().take(SAMPLE_MAX_CHARS).collect(),
            _ => continue,
        };
        out.push(v);
    }
    Ok(out)
}

/// Canonicalizes foreign-key endpoints and drops the ones that do not
/// resolve (real Bird/Spider files contain a few).
fn resolve_foreign_keys(tables: &mut [TableDef]) {
    let snapshot: Vec<TableDef> = tables.to_vec();
    let find_table = |n: &str| snapshot.iter().find(|t| t.name.eq_ignore_ascii_case(n));
    for t in tables.iter_mut() {
        let own = t.clone();
        t.foreign_keys.retain_mut(|fk| {
            let Some(local) = own.column(&fk.column) else {
                log::warn!("{}: foreign key on unknown column {} dropped", own.name, fk.column);
                return false;
            };
            let Some(ft) = find_table(&fk.foreign_table) else {
                log::warn!("{}: foreign key to unknown table {} dropped", own.name, fk.foreign_table);
                return false;
            };
            let target = if fk.foreign_column.is_empty() {
                match ft.primary_key.as_slice() {
                    [single] => ft.column(single),
                    _ => None,
                }
            } else {
                ft.column(&fk.foreign_column)
            };
            let Some(fc) = target else {
                log::warn!("{}: foreign key to {}.{} dropped", own.name, ft.name, fk.foreign_column);
                return false;
            };
            fk.column = local.name.clone();
            fk.foreign_table = ft.name.clone();
            fk.foreign_column = fc.name.clone();
            true
        });
    }
}

/// Fills column descriptions from `<dir>/<table>.csv`. Missing or
/// unreadable files are skipped; the files are not reliably UTF-8.
fn apply_descriptions(dir: &Path, table: &mut TableDef) {
    let path = dir.join(format!("{}.csv", table.name));
    let Ok(bytes) = std::fs::read(&path) else { return };
    let text = String::from_utf8_lossy(&bytes);
    let text = text.trim_start_matches('\u{feff}');
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let headers: Vec<String> = match rdr.headers() {
        Ok(h) => h.iter().map(|s| s.trim().to_ascii_lowercase()).collect(),
        Err(_) => return,
    };
    let idx = |name: &str| headers.iter().position(|h| h == name);
    let (Some(orig), Some(desc)) = (idx("original_column_name"), idx("column_description")) else {
        log::debug!("{}: unexpected header layout", path.display());
        return;
    };
    let values = idx("value_description");
    for rec in rdr.records().flatten() {
        let col = rec.get(orig).unwrap_or("").trim();
        let Some(def) = table.columns.iter_mut().find(|c| c.name.eq_ignore_ascii_case(col)) else {
            continue;
        };
        let mut d = rec.get(desc).unwrap_or("").trim().to_string();
        if let Some(v) = values.and_then(|i| rec.get(i)).map(str::trim).filter(|v| !v.is_empty()) {
            if d.is_empty() {
                d = v.to_string();
            } else {
                d = format!("{d}; {v}");
            }
        }
        let d = d.split_whitespace().collect::<Vec<_>>().join(" ");
        if !d.is_empty() {
            def.description = Some(d);
        }
    }
}
