//! Prompt templates and schema rendering.

use std::sync::OnceLock;

use tiersql_core::{ColumnDef, DatabaseSchema, ForeignKey, TableDef};

/// A prompt with `{name}` placeholders.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Template {
    pub name: &'static str,
    text: &'static str,
}

impl Template {
    const fn new(name: &'static str, text: &'static str) -> Self {
        Self { name, text }
    }

    /// Template body without the file's trailing newline.
    pub fn text(&self) -> &'static str {
        self.text.strip_suffix('\n').unwrap_or(self.text)
    }

    /// Substitutes placeholders in a single pass. Only the given names are
    /// replaced, so literal braces elsewhere (the JSON example) survive and
    /// substituted values are never re-scanned.
    pub fn render(&self, vars: &[(&str, &str)]) -> String {
        let text = self.text();
        let mut out = String::with_capacity(text.len() + vars.iter().map(|(_, v)| v.len()).sum::<usize>());
        let mut rest = text;
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let hit = after
                .find(['}', '{', '\n'])
                .filter(|&close| after.as_bytes()[close] == b'}')
                .and_then(|close| {
                    let key = &after[..close];
                    vars.iter().find(|(k, _)| *k == key).map(|(_, v)| (close, *v))
                });
            match hit {
                Some((close, value)) => {
                    out.push_str(value);
                    rest = &after[close + 1..];
                }
                None => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        out
    }
}

pub const SCHEMA_LINKING: Template = Template::new("schema_linking", include_str!("../prompts/schema_linking.txt"));
pub const BASIC: Template = Template::new("basic", include_str!("../prompts/basic.txt"));
pub const DIVIDE: Template = Template::new("divide", include_str!("../prompts/divide.txt"));
pub const CONQUER: Template = Template::new("conquer", include_str!("../prompts/conquer.txt"));
pub const ASSEMBLE: Template = Template::new("assemble", include_str!("../prompts/assemble.txt"));
pub const SYNTHESIS: Template = Template::new("synthesis", include_str!("../prompts/synthesis.txt"));
pub const REFINE: Template = Template::new("refine", include_str!("../prompts/refine.txt"));

pub const ALL: [Template; 7] = [SCHEMA_LINKING, BASIC, DIVIDE, CONQUER, ASSEMBLE, SYNTHESIS, REFINE];

impl Template {
    /// Literal text before the first placeholder.
    pub fn prefix(&self) -> &'static str {
        let t = self.text();
        let mut from = 0;
        while let Some(i) = t[from..].find('{') {
            let at = from + i;
            let tail = &t[at + 1..];
            match tail.find(['}', '{', '\n']) {
                Some(j) if tail.as_bytes()[j] == b'}' && j > 0 => return &t[..at],
                _ => from = at + 1,
            }
        }
        t
    }
}

/// Which template a rendered prompt came from.
pub fn identify(prompt: &str) -> Option<Template> {
    ALL.into_iter().find(|t| prompt.starts_with(t.prefix()))
}

/// Sample values shown per column.
pub const MAX_SAMPLES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderOptions {
    pub descriptions: bool,
    pub samples: usize,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            descriptions: true,
            samples: MAX_SAMPLES,
        }
    }
}

fn render_column(out: &mut String, c: &ColumnDef, pk: bool, opts: &RenderOptions) {
    out.push_str("  ");
    out.push_str(&c.name);
    if !c.decl_type.is_empty() {
        out.push(' ');
        out.push_str(&c.decl_type);
    }
    if pk {
        out.push_str(" PRIMARY KEY");
    }
    let mut notes = Vec::new();
    if opts.descriptions {
        if let Some(d) = c.description.as_deref().filter(|d| !d.is_empty()) {
            notes.push(d.to_string());
        }
    }
    if let Some(samples) = c.sample_values.as_deref().filter(|s| !s.is_empty() && opts.samples > 0) {
        let shown: Vec<String> = samples
            .iter()
            .take(opts.samples)
            .map(|s| serde_json::to_string(s).unwrap_or_default())
            .collect();
        notes.push(format!("examples: [{}]", shown.join(", ")));
    }
    if !notes.is_empty() {
        out.push_str(" -- ");
        out.push_str(&notes.join("; "));
    }
    out.push('\n');
}

/// Plain-text schema listing used in every prompt.
pub fn render_tables(tables: &[TableDef], opts: &RenderOptions) -> String {
    let mut out = String::new();
    let mut fks: Vec<(&str, &ForeignKey)> = Vec::new();
    for t in tables {
        out.push_str("Table: ");
        out.push_str(&t.name);
        out.push('\n');
        for c in &t.columns {
            let pk = t.primary_key.iter().any(|k| k.eq_ignore_ascii_case(&c.name));
            render_column(&mut out, c, pk, opts);
        }
        fks.extend(t.foreign_keys.iter().map(|fk| (t.name.as_str(), fk)));
    }
    if !fks.is_empty() {
        out.push_str("Foreign keys:\n");
        for (table, fk) in fks {
            out.push_str(&format!("  {table}.{} -> {}.{}\n", fk.column, fk.foreign_table, fk.foreign_column));
        }
    }
    out.truncate(out.trim_end().len());
    out
}

pub fn render_schema(schema: &DatabaseSchema, opts: &RenderOptions) -> String {
    render_tables(schema.tables(), opts)
}

/// Worked example shown inside the divide prompt.
pub struct DivideExample {
    pub schema: String,
    pub question: &'static str,
    pub subs: [&'static str; 3],
}

pub fn divide_example() -> &'static DivideExample {
    static EXAMPLE: OnceLock<DivideExample> = OnceLock::new();
    EXAMPLE.get_or_init(|| {
        let mut dept = TableDef::new(
            "department",
            vec![ColumnDef::new("dept_id", "INTEGER"), ColumnDef::new("dept_name", "TEXT")],
        );
        dept.primary_key = vec!["dept_id".into()];
        let mut emp = TableDef::new(
            "employee",
            vec![
                ColumnDef::new("emp_id", "INTEGER"),
                ColumnDef::new("name", "TEXT"),
                ColumnDef::new("dept_id", "INTEGER"),
                ColumnDef::new("salary", "REAL"),
            ],
        );
        emp.primary_key = vec!["emp_id".into()];
        emp.foreign_keys = vec![ForeignKey {
            column: "dept_id".into(),
            foreign_table: "department".into(),
            foreign_column: "dept_id".into(),
        }];
        DivideExample {
            schema: render_tables(&[emp, dept], &RenderOptions::default()),
            question: "Which department has the highest average salary, and how many employees work in it?",
            subs: [
                "What is the average salary of each department?",
                "Which department has the highest average salary?",
                "How many employees work in that department?",
            ],
        }
    })
}
