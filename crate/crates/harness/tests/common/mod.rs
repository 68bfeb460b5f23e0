#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::thread;

use serde_json::{json, Value};
use tiersql_harness::commands::{load_config, Overrides};
use tiersql_harness::{Config, RouterConfig};

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mini")
}

pub fn fixture_db() -> PathBuf {
    fixture_dir().join("databases/shop/shop.sqlite")
}

pub fn labels_path() -> PathBuf {
    fixture_dir().join("labels.jsonl")
}

/// The shipped config with its output redirected to `out`.
pub fn config(router: RouterConfig, out: &Path) -> Config {
    let o = Overrides {
        router: Some(router),
        ..Overrides::default()
    };
    let mut cfg = load_config(&fixture_dir().join("config.json"), &o).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}

/// Scores by linked table count: one table favours Basic, two
/// Intermediate, more Advanced.
pub fn table_count_scores(body: &Value) -> Value {
    let n = body["n_tables"].as_u64().unwrap_or(0);
    let (b, m, a) = match n {
        0 | 1 => (0.8, 0.15, 0.05),
        2 => (0.1, 0.7, 0.2),
        _ => (0.05, 0.15, 0.8),
    };
    json!({"scores": {"Basic": b, "Intermediate": m, "Advanced": a}})
}

/// Minimal HTTP server answering `POST /score` with `handler(body)`.
pub fn stub_scorer(handler: fn(&Value) -> Value) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            if reader.read_line(&mut request_line).is_err() {
                continue;
            }
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
            }
            let mut buf = vec![0; len];
            let _ = reader.read_exact(&mut buf);
            let (status, reply) = match (request_line.starts_with("POST /score "), serde_json::from_slice::<Value>(&buf)) {
                (true, Ok(body)) => (200, handler(&body).to_string()),
                _ => (400, "{\"error\": \"bad request\"}".to_string()),
            };
            let mut stream = stream;
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                reply.len()
            );
        }
    });
    format!("http://{addr}")
}
