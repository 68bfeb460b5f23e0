//! Parsers for model completions.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// SQL pulled out of a completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedSql {
    pub sql: String,
    /// False when no ```sql block was found and the whole text was used.
    pub fenced: bool,
}

/// Contents of the last fenced block whose info string is `lang`
/// (case-insensitive). An unterminated final block runs to the end.
pub fn last_fenced_block<'a>(text: &'a str, lang: &str) -> Option<&'a str> {
    let mut found = None;
    let mut rest = text;
    let mut offset = 0;
    while let Some(i) = rest.find("```") {
        let start = offset + i + 3;
        let after = &text[start..];
        let line_end = after.find('\n').unwrap_or(after.len());
        let info = after[..line_end].trim();
        if let Some(close) = after.get(line_end..).and_then(|b| b.find("```")) {
            let body = &after[line_end..line_end + close];
            if info.eq_ignore_ascii_case(lang) {
                found = Some(body);
            }
            let consumed = start + line_end + close + 3;
            rest = &text[consumed..];
            offset = consumed;
        } else {
            if info.eq_ignore_ascii_case(lang) {
                found = Some(&after[line_end..]);
            }
            break;
        }
    }
    found
}

/// Returns `None` when nothing but whitespace is left.
pub fn extract_sql(completion: &str) -> Option<ExtractedSql> {
    let (raw, fenced) = match last_fenced_block(completion, "sql") {
        Some(body) => (body, true),
        None => (completion, false),
    };
    let sql = raw.trim();
    (!sql.is_empty()).then(|| ExtractedSql {
        sql: sql.to_string(),
        fenced,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubQuestion {
    /// 1-based, contiguous.
    pub index: usize,
    pub text: String,
}

fn sub_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?is)sub[- ]?question\s*\d+\s*:\s*<<(.*?)>>").expect("valid regex"))
}

/// Parses `Sub-question N: <<text>>` lines, renumbering from 1 in order of
/// appearance and keeping at most `cap`.
pub fn parse_subquestions(completion: &str, cap: usize) -> Vec<SubQuestion> {
    sub_re()
        .captures_iter(completion)
        .map(|c| c[1].split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|t| !t.is_empty())
        .take(cap)
        .enumerate()
        .map(|(i, text)| SubQuestion { index: i + 1, text })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesizedExample {
    pub question: String,
    pub sql: String,
}

fn marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"(?mi)^[ \t\-*\d.)]*"?(question|sql)"?[ \t]*:"#).expect("valid regex"))
}

fn clean_value(v: &str) -> String {
    let v = v.trim().trim_end_matches(',').trim();
    let v = v.strip_prefix('"').unwrap_or(v);
    let v = v.strip_suffix('"').unwrap_or(v);
    v.replace("\\\"", "\"").trim().to_string()
}

/// Parses `"Question": ...` / `"SQL": ...` pairs in order. A question
/// without a following SQL is dropped; at most `k` pairs are returned.
pub fn parse_examples(completion: &str, k: usize) -> Vec<SynthesizedExample> {
    let marks: Vec<(bool, usize, usize)> = marker_re()
        .captures_iter(completion)
        .map(|c| {
            let whole = c.get(0).expect("match");
            (c[1].eq_ignore_ascii_case("question"), whole.start(), whole.end())
        })
        .collect();
    let mut out = Vec::new();
    let mut pending: Option<String> = None;
    for (i, &(is_question, _, value_start)) in marks.iter().enumerate() {
        let end = marks.get(i + 1).map_or(completion.len(), |m| m.1);
        let value = clean_value(&completion[value_start..end]);
        if is_question {
            pending = (!value.is_empty()).then_some(value);
        } else if let Some(question) = pending.take() {
            if !value.is_empty() {
                out.push(SynthesizedExample { question, sql: value });
                if out.len() == k {
                    break;
                }
            }
        }
    }
    out
}

/// Formats examples the way the synthesis prompt shows them.
pub fn format_examples(examples: &[SynthesizedExample]) -> String {
    examples
        .iter()
        .map(|e| format!("\"Question\": \"{}\"\n\"SQL\": \"{}\"", e.question, e.sql))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Table/column selection from the last ```json block, if it parses.
pub fn parse_link_json(completion: &str) -> Option<Vec<(String, Vec<String>)>> {
    let body = last_fenced_block(completion, "json")?;
    let v: Value = serde_json::from_str(body.trim()).ok()?;
    let tables = v.get("tables")?.as_array()?;
    Some(
        tables
            .iter()
            .filter_map(|t| {
                let name = t.get("table")?.as_str()?.trim().to_string();
                let cols = t
                    .get("columns")?
                    .as_array()?
                    .iter()
                    .filter_map(|c| c.as_str().map(|s| s.trim().to_string()))
                    .collect();
                Some((name, cols))
            })
            .collect(),
    )
}
