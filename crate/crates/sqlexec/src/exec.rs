use std::cmp::Ordering;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rusqlite::types::ValueRef;
use rusqlite::{Connection, OpenFlags};
use serde::{Deserialize, Serialize};

pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExecError {
    #[error("database not found: {}", .0.display())]
    MissingDatabase(PathBuf),
    #[error("cannot open {}: {message}", .path.display())]
    Open { path: PathBuf, message: String },
    #[error("gold SQL failed: {0}")]
    GoldFailed(String),
    #[error("gold SQL timed out")]
    GoldTimeout,
}

/// One canonical result cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "t", content = "v", rename_all = "lowercase")]
pub enum Cell {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
    /// Lowercase hex of the blob bytes.
    Blob(String),
}

impl Cell {
    fn from_value(v: ValueRef<'_>, round: bool) -> Self {
        match v {
            ValueRef::Null => Self::Null,
            ValueRef::Integer(i) => Self::Integer(i),
            ValueRef::Real(r) => Self::Real(if round { round_sig(r, 15) } else { r }),
            ValueRef::Text(t) => Self::Text(String::from_utf8_lossy(t).into_owned()),
            ValueRef::Blob(b) => Self::Blob(b.iter().map(|x| format!("{x:02x}")).collect()),
        }
    }

    /// Comparison key. Integral reals compare equal to the same integer,
    /// which is how Python tuple sets (the reference EX scorer) behave.
    fn key(&self) -> CellKey<'_> {
        match self {
            Self::Null => CellKey::Null,
            Self::Integer(i) => CellKey::Num(*i as f64, Some(*i)),
            Self::Real(r) => {
                let r = if *r == 0.0 { 0.0 } else { *r };
                let exact = (r.fract() == 0.0 && r.abs() < 9.007_199_254_740_992e15).then_some(r as i64);
                CellKey::Num(r, exact)
            }
            Self::Text(s) => CellKey::Text(s),
            Self::Blob(h) => CellKey::Blob(h),
        }
    }
}

#[derive(PartialEq, PartialOrd)]
enum CellKey<'a> {
    Null,
    Num(f64, Option<i64>),
    Text(&'a str),
    Blob(&'a str),
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Cell {}

impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cell {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.key(), other.key()) {
            (CellKey::Num(_, Some(a)), CellKey::Num(_, Some(b))) => a.cmp(&b),
            (CellKey::Num(a, _), CellKey::Num(b, _)) => a.total_cmp(&b),
            (a, b) => a.partial_cmp(&b).unwrap_or(Ordering::Equal),
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Null => f.write_str("NULL"),
            Self::Integer(i) => write!(f, "{i}"),
            Self::Real(r) => write!(f, "{r}"),
            Self::Text(s) => write!(f, "{s:?}"),
            Self::Blob(h) => write!(f, "x'{h}'"),
        }
    }
}

fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits - 1, x).parse().unwrap_or(x)
}

/// Deduplicated rows in sorted order; column order within a row is kept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultSet {
    pub columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl ResultSet {
    pub fn from_rows(columns: Vec<String>, mut rows: Vec<Vec<Cell>>) -> Self {
        rows.sort();
        rows.dedup();
        Self { columns, rows }
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    /// Row-set equality; column names are not compared.
    pub fn same_rows(&self, other: &ResultSet) -> bool {
        self.rows == other.rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum ExecOutcome {
    Ok { result: ResultSet },
    Error { message: String },
    Timeout,
}

impl ExecOutcome {
    pub fn result(&self) -> Option<&ResultSet> {
        match self {
            Self::Ok { result } => Some(result),
            _ => None,
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self, Self::Ok { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecOptions {
    pub timeout_ms: u64,
    /// Round reals to 15 significant digits before comparison.
    pub round_reals: bool,
    /// Stop reading after this many rows (the outcome is still `Ok`).
    pub max_rows: Option<usize>,
}

impl Default for ExecOptions {
    fn default() -> Self {
        Self {
            timeout_ms: DEFAULT_TIMEOUT_MS,
            round_reals: false,
            max_rows: None,
        }
    }
}

const LEADING_OK: [&str; 3] = ["SELECT", "WITH", "VALUES"];

/// Cheap pre-check: the statement must start with a query keyword.
/// Anything that slips through is caught by the statement read-only flag
/// and the read-only connection.
pub fn guard(sql: &str) -> Result<(), String> {
    let first = strip_leading_noise(sql)
        .split(|c: char| !c.is_ascii_alphanumeric() && c != '_')
        .next()
        .unwrap_or("")
        .to_ascii_uppercase();
    if first.is_empty() {
        return Err("empty statement".into());
    }
    if !LEADING_OK.contains(&first.as_str()) {
        return Err(format!("only read-only queries are allowed (statement starts with {first})"));
    }
    Ok(())
}

fn strip_leading_noise(mut s: &str) -> &str {
    loop {
        let t = s.trim_start_matches(|c: char| c.is_whitespace() || c == '(');
        if let Some(rest) = t.strip_prefix("--") {
            s = rest.split_once('\n').map_or("", |(_, r)| r);
        } else if let Some(rest) = t.strip_prefix("/*") {
            s = rest.split_once("*/").map_or("", |(_, r)| r);
        } else {
            return t;
        }
    }
}

/// True when a `;` outside literals and comments is followed by more SQL.
fn has_trailing_statement(sql: &str) -> bool {
    let b = sql.as_bytes();
    let mut i = 0;
    while i < b.len() {
        match b[i] {
            q @ (b'\'' | b'"' | b'`') => {
                i += 1;
                while i < b.len() && b[i] != q {
                    i += 1;
                }
            }
            b'[' => {
                while i < b.len() && b[i] != b']' {
                    i += 1;
                }
            }
            b'-' if b.get(i + 1) == Some(&b'-') => {
                while i < b.len() && b[i] != b'\n' {
                    i += 1;
                }
            }
            b'/' if b.get(i + 1) == Some(&b'*') => {
                i += 2;
                while i + 1 < b.len() && !(b[i] == b'*' && b[i + 1] == b'/') {
                    i += 1;
                }
                i += 1;
            }
            b';' => return !strip_leading_noise(&sql[i + 1..]).trim_start_matches(';').trim().is_empty(),
            _ => {}
        }
        i += 1;
    }
    false
}

pub fn open_read_only(db_path: &Path) -> Result<Connection, ExecError> {
    if !db_path.is_file() {
        return Err(ExecError::MissingDatabase(db_path.to_path_buf()));
    }
    let open_err = |e: rusqlite::Error| ExecError::Open {
        path: db_path.to_path_buf(),
        message: e.to_string(),
    };
    let conn = Connection::open_with_flags(db_path, OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX)
        .map_err(open_err)?;
    conn.pragma_update(None, "query_only", true).map_err(open_err)?;
    Ok(conn)
}

/// Runs `sql` read-only against `db_path`.
pub fn execute(db_path: &Path, sql: &str, opts: &ExecOptions) -> Result<ExecOutcome, ExecError> {
    let conn = open_read_only(db_path)?;
    Ok(execute_on(&conn, sql, opts))
}

pub fn execute_on(conn: &Connection, sql: &str, opts: &ExecOptions) -> ExecOutcome {
    let sql = sql.trim().trim_end_matches(';').trim_end();
    if has_trailing_statement(sql) {
        return ExecOutcome::Error {
            message: "multiple statements are not allowed".into(),
        };
    }
    let deadline = Instant::now() + Duration::from_millis(opts.timeout_ms);
    conn.progress_handler(1000, Some(move || Instant::now() >= deadline));
    let outcome = run(conn, sql, opts, deadline);
    conn.progress_handler(0, None::<fn() -> bool>);
    outcome
}

fn run(conn: &Connection, sql: &str, opts: &ExecOptions, deadline: Instant) -> ExecOutcome {
    let classify = |e: rusqlite::Error| {
        let interrupted = matches!(
            &e,
            rusqlite::Error::SqliteFailure(f, _) if f.code == rusqlite::ErrorCode::OperationInterrupted
        );
        if interrupted || Instant::now() >= deadline {
            ExecOutcome::Timeout
        } else {
            ExecOutcome::Error { message: e.to_string() }
        }
    };
    let mut stmt = match conn.prepare(sql) {
        Ok(s) => s,
        Err(e) => return classify(e),
    };
    if let Err(message) = guard(sql) {
        return ExecOutcome::Error { message };
    }
    if !stmt.readonly() {
        return ExecOutcome::Error {
            message: "statement would modify the database".into(),
        };
    }
    let columns: Vec<String> = stmt.column_names().into_iter().map(str::to_string).collect();
    let width = columns.len();
    let mut rows_iter = match stmt.query([]) {
        Ok(r) => r,
        Err(e) => return classify(e),
    };
    let mut rows = Vec::new();
    loop {
        match rows_iter.next() {
            Ok(Some(row)) => {
                let mut cells = Vec::with_capacity(width);
                for i in 0..width {
                    match row.get_ref(i) {
                        Ok(v) => cells.push(Cell::from_value(v, opts.round_reals)),
                        Err(e) => return classify(e),
                    }
                }
                rows.push(cells);
                if opts.max_rows.is_some_and(|m| rows.len() >= m) {
                    break;
                }
            }
            Ok(None) => break,
            Err(e) => return classify(e),
        }
    }
    ExecOutcome::Ok {
        result: ResultSet::from_rows(columns, rows),
    }
}

/// Compares a predicted outcome with the gold outcome.
pub fn outcomes_match(pred: &ExecOutcome, gold: &ExecOutcome) -> Result<bool, ExecError> {
    let gold = match gold {
        ExecOutcome::Ok { result } => result,
        ExecOutcome::Error { message } => return Err(ExecError::GoldFailed(message.clone())),
        ExecOutcome::Timeout => return Err(ExecError::GoldTimeout),
    };
    Ok(pred.result().is_some_and(|p| p.same_rows(gold)))
}

/// True iff both queries execute and return the same row set. A gold
/// failure is an error, never a mismatch.
pub fn ex_match(pred_sql: &str, gold_sql: &str, db_path: &Path, opts: &ExecOptions) -> Result<bool, ExecError> {
    let conn = open_read_only(db_path)?;
    let gold = execute_on(&conn, gold_sql, opts);
    match &gold {
        ExecOutcome::Ok { .. } => {}
        ExecOutcome::Error { message } => return Err(ExecError::GoldFailed(message.clone())),
        ExecOutcome::Timeout => return Err(ExecError::GoldTimeout),
    }
    let pred = execute_on(&conn, pred_sql, opts);
    outcomes_match(&pred, &gold)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guard_accepts_queries_only() {
        assert!(guard("SELECT 1").is_ok());
        assert!(guard("  -- note\n /* x */ select 1").is_ok());
        assert!(guard("(SELECT 1) UNION SELECT 2").is_ok());
        assert!(guard("WITH a AS (SELECT 1) SELECT * FROM a").is_ok());
        assert!(guard("DELETE FROM t").is_err());
        assert!(guard("pragma writable_schema=1").is_err());
        assert!(guard("").is_err());
    }

    #[test]
    fn trailing_statements() {
        assert!(has_trailing_statement("SELECT 1; DELETE FROM t"));
        assert!(!has_trailing_statement("SELECT 1"));
        assert!(!has_trailing_statement("SELECT ';' AS x"));
        assert!(!has_trailing_statement("SELECT 1 -- ; trailing"));
        assert!(!has_trailing_statement("SELECT 1; -- done"));
        assert!(!has_trailing_statement("SELECT [a;b] FROM t"));
    }

    #[test]
    fn cell_equality_follows_numeric_value() {
        assert_eq!(Cell::Integer(1), Cell::Real(1.0));
        assert_ne!(Cell::Integer(1), Cell::Real(1.5));
        assert_ne!(Cell::Integer(1), Cell::Text("1".into()));
        assert_eq!(Cell::Real(-0.0), Cell::Real(0.0));
        assert_ne!(Cell::Null, Cell::Integer(0));
        let a = ResultSet::from_rows(vec![], vec![vec![Cell::Integer(2)], vec![Cell::Real(2.0)], vec![Cell::Null]]);
        assert_eq!(a.len(), 2);
    }

    #[test]
    fn rounding() {
        assert_eq!(round_sig(0.1 + 0.2, 15), 0.3);
        assert_ne!(0.1 + 0.2, 0.3);
        assert_eq!(round_sig(0.0, 15), 0.0);
    }
}
