#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rusqlite::Connection;
use tiersql_core::{DatabaseSchema, NLQuery};
use tiersql_engine::prompts::{identify, Template, ASSEMBLE, BASIC, CONQUER, DIVIDE, REFINE, SCHEMA_LINKING, SYNTHESIS};
use tiersql_gateway::{ChatRequest, ChatResponse, Gateway, GatewayMode, Provider, ProviderError, Usage};
use tiersql_sqlexec::{introspect, IntrospectOptions};

/// Five tables, 2-4 columns each.
pub fn school_db(dir: &Path) -> PathBuf {
    let path = dir.join("school.sqlite");
    let conn = Connection::open(&path).unwrap();
    conn.execute_batch(
        r#"
        CREATE TABLE district (district_id INTEGER PRIMARY KEY, name TEXT, county TEXT);
        CREATE TABLE school (school_id INTEGER PRIMARY KEY, name TEXT, district_id INTEGER REFERENCES district(district_id), charter INTEGER);
        CREATE TABLE teacher (teacher_id INTEGER PRIMARY KEY, school_id INTEGER REFERENCES school(school_id), salary REAL);
        CREATE TABLE student (student_id INTEGER PRIMARY KEY, school_id INTEGER REFERENCES school(school_id), grade INTEGER, score REAL);
        CREATE TABLE budget (school_id INTEGER REFERENCES school(school_id), year INTEGER);
        INSERT INTO district VALUES (1, 'North', 'Alpine'), (2, 'South', 'Butte');
        INSERT INTO school VALUES (1, 'Oak', 1, 0), (2, 'Pine', 1, 1), (3, 'Elm', 2, 1);
        INSERT INTO teacher VALUES (1, 1, 50000), (2, 2, 61000), (3, 3, 58000);
        INSERT INTO student VALUES (1, 1, 9, 88.5), (2, 1, 10, 92.0), (3, 2, 9, 75.0), (4, 3, 11, 81.0);
        INSERT INTO budget VALUES (1, 2020), (2, 2021);
        "#,
    )
    .unwrap();
    path
}

pub fn schema_of(db: &Path) -> DatabaseSchema {
    introspect(db, &IntrospectOptions::default()).unwrap()
}

pub fn query(id: &str, question: &str, hint: &str) -> NLQuery {
    NLQuery {
        id: id.into(),
        question: question.into(),
        hint: hint.into(),
        db_id: "school".into(),
        gold_sql: None,
        difficulty: None,
    }
}

pub fn fenced(sql: &str) -> String {
    format!("Here you go.\n```sql\n{sql}\n```")
}

/// Canned completions per template; every prompt seen is logged.
#[derive(Clone)]
pub struct Script {
    pub link: String,
    pub basic: String,
    pub divide: String,
    pub conquer: String,
    pub assemble: String,
    pub synthesis: String,
    pub refine: String,
    /// Usage charged per call; `None` means one token per prompt char.
    pub fixed_usage: Option<Usage>,
    pub log: Arc<Mutex<Vec<(&'static str, String)>>>,
}

impl Default for Script {
    fn default() -> Self {
        Self {
            link: "```json\n{\"tables\": [{\"table\": \"school\", \"columns\": [\"name\", \"charter\"]}]}\n```".into(),
            basic: fenced("SELECT name FROM school WHERE charter = 1"),
            divide: "Sub-question 1: <<Which schools are charter schools?>>\nSub-question 2: <<What are their names?>>".into(),
            conquer: fenced("SELECT name FROM school WHERE charter = 1"),
            assemble: fenced("SELECT name FROM school WHERE charter = 1"),
            synthesis: "\"Question\": \"How many schools?\"\n\"SQL\": \"SELECT COUNT(*) FROM school\"\n\n\"Question\": \"List district names\"\n\"SQL\": \"SELECT name FROM district\"".into(),
            refine: fenced("SELECT name FROM school"),
            fixed_usage: None,
            log: Arc::default(),
        }
    }
}

impl Script {
    pub fn calls(&self, t: Template) -> Vec<String> {
        self.log
            .lock()
            .unwrap()
            .iter()
            .filter(|(n, _)| *n == t.name)
            .map(|(_, p)| p.clone())
            .collect()
    }

    pub fn total_calls(&self) -> usize {
        self.log.lock().unwrap().len()
    }
}

impl Provider for Script {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let t = identify(&req.prompt).ok_or_else(|| ProviderError::Decode("unrecognized prompt".into()))?;
        self.log.lock().unwrap().push((t.name, req.prompt.clone()));
        let text = match t {
            x if x == SCHEMA_LINKING => &self.link,
            x if x == BASIC => &self.basic,
            x if x == DIVIDE => &self.divide,
            x if x == CONQUER => &self.conquer,
            x if x == ASSEMBLE => &self.assemble,
            x if x == SYNTHESIS => &self.synthesis,
            x if x == REFINE => &self.refine,
            _ => unreachable!(),
        };
        let usage = self.fixed_usage.unwrap_or(Usage {
            prompt_tokens: req.prompt.chars().count() as u64,
            completion_tokens: text.chars().count() as u64,
            estimated: false,
        });
        Ok(ChatResponse { text: text.clone(), usage })
    }
}

pub fn gateway(script: &Script) -> Gateway {
    Gateway::new(GatewayMode::Passthrough, None, Some(Box::new(script.clone())), 4).unwrap()
}
