//! Regenerates `tests/fixtures/mini`: a small shop database, 20 Bird-style
//! questions, a recorded response cache and the waterfall labels.
//!
//! The "model" is scripted: each question has a fixed SQL answer per tier,
//! so the recorded traces have known accuracy (Basic 8/20, Intermediate
//! 12/20, Advanced 15/20, oracle 19/20). Run after any change to prompt
//! rendering, since cache keys hash the prompt text:
//!
//!     cargo run -p tiersql-harness --example build_fixture

use std::path::{Path, PathBuf};

use rusqlite::Connection;
use serde_json::json;
use tiersql_core::labeler::{export_training_set, label_distribution, ExportOptions};
use tiersql_core::metrics::extract_gold_columns;
use tiersql_core::routers::FixedRouter;
use tiersql_core::Tier;
use tiersql_engine::prompts::{identify, ASSEMBLE, BASIC, CONQUER, DIVIDE, REFINE, SCHEMA_LINKING, SYNTHESIS};
use tiersql_engine::{LinkerConfig, PipelineConfig};
use tiersql_gateway::{estimate_tokens, ChatRequest, ChatResponse, Gateway, GatewayMode, Provider, ProviderError, Usage};
use tiersql_harness::config::Budget;
use tiersql_harness::dataset::{load_dataset, DatasetFormat, DatasetSpec};
use tiersql_harness::label::Labeler;
use tiersql_harness::run::{RunOptions, Runner};
use tiersql_sqlexec::{execute, ExecOptions, ExecOutcome};

const SCHEMA: &str = r#"
CREATE TABLE region (region_id INTEGER PRIMARY KEY, name TEXT NOT NULL);
CREATE TABLE store (store_id INTEGER PRIMARY KEY, name TEXT NOT NULL, region_id INTEGER REFERENCES region(region_id), opened INTEGER);
CREATE TABLE customer (customer_id INTEGER PRIMARY KEY, name TEXT NOT NULL, city TEXT, region_id INTEGER REFERENCES region(region_id), vip INTEGER);
CREATE TABLE product (product_id INTEGER PRIMARY KEY, name TEXT NOT NULL, category TEXT, price REAL);
CREATE TABLE orders (order_id INTEGER PRIMARY KEY, customer_id INTEGER REFERENCES customer(customer_id), store_id INTEGER REFERENCES store(store_id), order_date TEXT, status TEXT);
CREATE TABLE order_item (order_id INTEGER REFERENCES orders(order_id), product_id INTEGER REFERENCES product(product_id), quantity INTEGER);
CREATE TABLE employee (employee_id INTEGER PRIMARY KEY, name TEXT NOT NULL, store_id INTEGER REFERENCES store(store_id), salary REAL, manager_id INTEGER);
INSERT INTO region VALUES (1, 'North'), (2, 'South'), (3, 'East');
INSERT INTO store VALUES (1, 'Downtown', 1, 2015), (2, 'Harbor', 2, 2018), (3, 'Mall', 1, 2020), (4, 'Airport', 3, 2021);
INSERT INTO customer VALUES
  (1, 'Ann', 'Oslo', 1, 1), (2, 'Ben', 'Bergen', 2, 0), (3, 'Cai', 'Oslo', 1, 0), (4, 'Dee', 'Tromso', 3, 1),
  (5, 'Eli', 'Bergen', 2, 1), (6, 'Fay', 'Oslo', 1, 0), (7, 'Gus', 'Tromso', 3, 0), (8, 'Hal', 'Bergen', 2, 0);
INSERT INTO product VALUES
  (1, 'Pen', 'office', 2.5), (2, 'Desk', 'furniture', 120.0), (3, 'Lamp', 'furniture', 35.0),
  (4, 'Paper', 'office', 6.0), (5, 'Mug', 'kitchen', 8.0), (6, 'Kettle', 'kitchen', 30.0);
INSERT INTO orders VALUES
  (1, 1, 1, '2023-01-05', 'shipped'), (2, 2, 2, '2023-01-09', 'shipped'), (3, 1, 3, '2023-02-11', 'cancelled'),
  (4, 4, 4, '2023-02-20', 'shipped'), (5, 5, 2, '2023-03-02', 'pending'), (6, 3, 1, '2023-03-15', 'shipped'),
  (7, 6, 3, '2023-04-01', 'shipped'), (8, 4, 4, '2023-04-18', 'pending'), (9, 7, 4, '2023-05-07', 'shipped'),
  (10, 5, 2, '2023-05-21', 'shipped');
INSERT INTO order_item VALUES
  (1, 1, 10), (1, 4, 2), (2, 2, 1), (3, 5, 4), (4, 3, 2), (4, 6, 1), (5, 1, 5), (6, 2, 1), (6, 3, 1),
  (7, 5, 6), (8, 4, 3), (9, 6, 2), (10, 2, 2), (10, 5, 1);
INSERT INTO employee VALUES
  (1, 'Ivy', 1, 52000, NULL), (2, 'Jon', 1, 41000, 1), (3, 'Kim', 2, 47000, NULL),
  (4, 'Lou', 3, 39000, 1), (5, 'Max', 4, 45000, NULL), (6, 'Ned', 4, 36000, 5);
"#;

/// Question, hint, gold SQL, and the SQL each tier answers with.
struct Item {
    question: &'static str,
    hint: &'static str,
    gold: &'static str,
    answers: [&'static str; 3],
}

macro_rules! item {
    ($q:expr, $h:expr, $gold:expr, [$b:expr, $m:expr, $a:expr]) => {
        Item { question: $q, hint: $h, gold: $gold, answers: [$b, $m, $a] }
    };
}

const G: &str = "=";

fn items() -> Vec<Item> {
    vec![
        // Solved by every tier.
        item!("How many customers live in Oslo?", "", "SELECT COUNT(*) FROM customer WHERE city = 'Oslo'", [G, G, G]),
        item!("List the names of products in the office category.", "", "SELECT name FROM product WHERE category = 'office'", [G, G, G]),
        item!("What is the highest product price?", "", "SELECT MAX(price) FROM product", [G, G, G]),
        item!("Which customers are VIP members?", "vip = 1 means VIP member", "SELECT name FROM customer WHERE vip = 1", [G, G, G]),
        item!("How many orders are pending?", "pending refers to status = 'pending'", "SELECT COUNT(*) FROM orders WHERE status = 'pending'", [G, G, G]),
        item!("Name the stores opened after 2017.", "", "SELECT name FROM store WHERE opened > 2017", [G, G, G]),
        // Only Basic gets these right.
        item!(
            "What is the average employee salary?",
            "",
            "SELECT AVG(salary) FROM employee",
            [G, "SELECT AVG(salary) FROM employee WHERE manager_id IS NULL", "SELECT AVG(salary) FROM employee WHERE manager_id IS NULL"]
        ),
        item!(
            "List the distinct cities where customers live.",
            "",
            "SELECT DISTINCT city FROM customer",
            [G, "SELECT DISTINCT name FROM region", "SELECT DISTINCT name FROM region"]
        ),
        // Intermediate and Advanced.
        item!(
            "How many orders did customers from Bergen place?",
            "",
            "SELECT COUNT(*) FROM orders AS o JOIN customer AS c ON o.customer_id = c.customer_id WHERE c.city = 'Bergen'",
            ["SELECT COUNT(*) FROM orders", G, G]
        ),
        item!(
            "Which region is the Harbor store in?",
            "",
            "SELECT r.name FROM store AS s JOIN region AS r ON s.region_id = r.region_id WHERE s.name = 'Harbor'",
            ["SELECT name FROM region WHERE region_id = 1", G, G]
        ),
        item!(
            "List the names of employees working at the Airport store.",
            "",
            "SELECT e.name FROM employee AS e JOIN store AS s ON e.store_id = s.store_id WHERE s.name = 'Airport'",
            ["SELECT name FROM employee WHERE store_id = 1", G, G]
        ),
        item!(
            "What is the total quantity of kitchen products sold?",
            "",
            "SELECT SUM(oi.quantity) FROM order_item AS oi JOIN product AS p ON oi.product_id = p.product_id WHERE p.category = 'kitchen'",
            ["SELECT SUM(quantity) FROM order_item", G, G]
        ),
        // Intermediate only.
        item!(
            "How many customers live in the North region?",
            "",
            "SELECT COUNT(*) FROM customer AS c JOIN region AS r ON c.region_id = r.region_id WHERE r.name = 'North'",
            [
                "SELECT COUNT(*) FROM region WHERE name = 'North'",
                G,
                "SELECT COUNT(*) FROM customer AS c JOIN region AS r ON c.region_id = r.region_id WHERE r.name = 'East'"
            ]
        ),
        item!(
            "Which products were ordered in order 4?",
            "",
            "SELECT p.name FROM order_item AS oi JOIN product AS p ON oi.product_id = p.product_id WHERE oi.order_id = 4",
            [
                "SELECT name FROM product WHERE product_id = 4",
                G,
                "SELECT p.name FROM order_item AS oi JOIN product AS p ON oi.product_id = p.product_id WHERE oi.order_id = 1"
            ]
        ),
        // Advanced only.
        item!(
            "What is the total revenue from shipped orders of VIP customers?",
            "revenue = quantity * price; shipped refers to status = 'shipped'; vip = 1 means VIP member",
            "SELECT SUM(oi.quantity * p.price) FROM orders AS o JOIN customer AS c ON o.customer_id = c.customer_id JOIN order_item AS oi ON o.order_id = oi.order_id JOIN product AS p ON oi.product_id = p.product_id WHERE c.vip = 1 AND o.status = 'shipped'",
            [
                "SELECT SUM(oi.quantity * p.price) FROM order_item AS oi JOIN product AS p ON oi.product_id = p.product_id",
                "SELECT SUM(oi.quantity * p.price) FROM order_item AS oi JOIN product AS p ON oi.product_id = p.product_id",
                G
            ]
        ),
        item!(
            "Which region's stores received the most orders?",
            "",
            "SELECT r.name FROM orders AS o JOIN store AS s ON o.store_id = s.store_id JOIN region AS r ON s.region_id = r.region_id GROUP BY r.region_id ORDER BY COUNT(*) DESC LIMIT 1",
            [
                "SELECT s.name FROM orders AS o JOIN store AS s ON o.store_id = s.store_id GROUP BY s.store_id ORDER BY COUNT(*) DESC, s.store_id LIMIT 1",
                "SELECT s.name FROM orders AS o JOIN store AS s ON o.store_id = s.store_id GROUP BY s.store_id ORDER BY COUNT(*) DESC, s.store_id LIMIT 1",
                G
            ]
        ),
        item!(
            "List the customers who bought furniture products.",
            "",
            "SELECT DISTINCT c.name FROM customer AS c JOIN orders AS o ON c.customer_id = o.customer_id JOIN order_item AS oi ON o.order_id = oi.order_id JOIN product AS p ON oi.product_id = p.product_id WHERE p.category = 'furniture'",
            ["SELECT name FROM customer WHERE vip = 1", "SELECT name FROM customer WHERE vip = 1", G]
        ),
        item!(
            "What is the average salary of employees in stores of the North region?",
            "",
            "SELECT AVG(e.salary) FROM employee AS e JOIN store AS s ON e.store_id = s.store_id JOIN region AS r ON s.region_id = r.region_id WHERE r.name = 'North'",
            ["SELECT AVG(salary) FROM employee", "SELECT AVG(salary) FROM employee", G]
        ),
        item!(
            "How many units of each product category did the Harbor store sell?",
            "",
            "SELECT p.category, SUM(oi.quantity) FROM orders AS o JOIN store AS s ON o.store_id = s.store_id JOIN order_item AS oi ON o.order_id = oi.order_id JOIN product AS p ON oi.product_id = p.product_id WHERE s.name = 'Harbor' GROUP BY p.category",
            [
                "SELECT category, COUNT(*) FROM product GROUP BY category",
                "SELECT category, COUNT(*) FROM product GROUP BY category",
                G
            ]
        ),
        // Nobody.
        item!(
            "Which customer spent the most on cancelled or pending orders, and how much?",
            "spent = quantity * price",
            "SELECT c.name, SUM(oi.quantity * p.price) AS total FROM customer AS c JOIN orders AS o ON c.customer_id = o.customer_id JOIN order_item AS oi ON o.order_id = oi.order_id JOIN product AS p ON oi.product_id = p.product_id WHERE o.status IN ('cancelled', 'pending') GROUP BY c.customer_id ORDER BY total DESC LIMIT 1",
            [
                "SELECT c.name, SUM(oi.quantity * p.price) AS total FROM customer AS c JOIN orders AS o ON c.customer_id = o.customer_id JOIN order_item AS oi ON o.order_id = oi.order_id JOIN product AS p ON oi.product_id = p.product_id WHERE o.status = 'pending' GROUP BY c.customer_id ORDER BY total DESC LIMIT 1",
                "SELECT c.name, SUM(oi.quantity * p.price) AS total FROM customer AS c JOIN orders AS o ON c.customer_id = o.customer_id JOIN order_item AS oi ON o.order_id = oi.order_id JOIN product AS p ON oi.product_id = p.product_id WHERE o.status = 'pending' GROUP BY c.customer_id ORDER BY total DESC LIMIT 1",
                "SELECT c.name, SUM(oi.quantity * p.price) AS total FROM customer AS c JOIN orders AS o ON c.customer_id = o.customer_id JOIN order_item AS oi ON o.order_id = oi.order_id JOIN product AS p ON oi.product_id = p.product_id WHERE o.status = 'pending' GROUP BY c.customer_id ORDER BY total DESC LIMIT 1"
            ]
        ),
    ]
}

const SYNTH_MARKER: &str = "How many stores are there?";
const GUIDED: &str = "-- guided by examples";

/// Scripted model: finds the fixture question inside the prompt and
/// answers per template.
struct Scripted {
    items: Vec<Item>,
    links: Vec<String>,
}

impl Scripted {
    fn find(&self, prompt: &str) -> Option<usize> {
        self.items
            .iter()
            .enumerate()
            .filter(|(_, it)| prompt.contains(it.question))
            .max_by_key(|(_, it)| it.question.len())
            .map(|(i, _)| i)
    }

    fn answer(&self, i: usize, tier: usize) -> &'static str {
        let it = &self.items[i];
        match it.answers[tier] {
            "=" => it.gold,
            sql => sql,
        }
    }
}

fn fenced(sql: &str) -> String {
    format!("Here is the query.\n```sql\n{sql}\n```")
}

impl Provider for Scripted {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let p = &req.prompt;
        let t = identify(p).ok_or_else(|| ProviderError::Decode("unknown prompt".into()))?;
        let q = self.find(p);
        let need = || q.ok_or_else(|| ProviderError::Decode(format!("no fixture question in {} prompt", t.name)));
        let text = if t == SCHEMA_LINKING {
            self.links[need()?].clone()
        } else if t == BASIC {
            fenced(self.answer(need()?, 0))
        } else if t == DIVIDE {
            let question = self.items[need()?].question;
            format!(
                "Sub-question 1: <<{question} (part 1: find the rows involved)>>\n\nSub-question 2: <<{question} (part 2: compute the answer)>>"
            )
        } else if t == CONQUER {
            let i = need()?;
            let tag = if p.contains(SYNTH_MARKER) { format!(" {GUIDED}") } else { String::new() };
            fenced(&format!("{}{tag}", self.items[i].gold.split(" WHERE ").next().unwrap_or_default()))
        } else if t == ASSEMBLE {
            let i = need()?;
            fenced(self.answer(i, if p.contains(GUIDED) { 2 } else { 1 }))
        } else if t == SYNTHESIS {
            format!(
                "\"Question\": \"{SYNTH_MARKER}\"\n\"SQL\": \"SELECT COUNT(*) FROM store\"\n\n\"Question\": \"List product names with their price\"\n\"SQL\": \"SELECT name, price FROM product\"\n\n\"Question\": \"Which region is each store in?\"\n\"SQL\": \"SELECT s.name, r.name FROM store AS s JOIN region AS r ON s.region_id = r.region_id\""
            )
        } else if t == REFINE {
            fenced("SELECT 1")
        } else {
            return Err(ProviderError::Decode(format!("unexpected template {}", t.name)));
        };
        let usage = Usage {
            prompt_tokens: estimate_tokens(p),
            completion_tokens: estimate_tokens(&text),
            estimated: false,
        };
        Ok(ChatResponse { text, usage })
    }
}

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mini");
    let db_dir = root.join("databases/shop");
    let cache = root.join("cache");
    for d in [&db_dir, &cache] {
        if d.exists() {
            std::fs::remove_dir_all(d).unwrap();
        }
        std::fs::create_dir_all(d).unwrap();
    }
    let db = db_dir.join("shop.sqlite");
    Connection::open(&db).unwrap().execute_batch(SCHEMA).unwrap();

    let items = items();
    let opts = ExecOptions::default();
    let rows = |sql: &str| match execute(&db, sql, &opts).unwrap() {
        ExecOutcome::Ok { result } => result,
        other => panic!("{sql}: {other:?}"),
    };
    for it in &items {
        let gold = rows(it.gold);
        assert!(!gold.is_empty(), "{}", it.question);
        for (t, a) in it.answers.iter().enumerate() {
            let sql = if *a == G { it.gold } else { a };
            let got = rows(sql);
            assert!(!got.is_empty(), "{sql}");
            assert_eq!(got.same_rows(&gold), *a == G, "{} tier {t}", it.question);
        }
    }

    let difficulty = |it: &Item| match it.answers {
        [x, _, _] if x == G => "simple",
        [_, y, _] if y == G => "moderate",
        _ => "challenging",
    };
    let questions: Vec<_> = items
        .iter()
        .enumerate()
        .map(|(i, it)| {
            json!({
                "question_id": i,
                "db_id": "shop",
                "question": it.question,
                "evidence": it.hint,
                "SQL": it.gold,
                "difficulty": difficulty(it),
            })
        })
        .collect();
    let qpath = root.join("questions.json");
    std::fs::write(&qpath, serde_json::to_string_pretty(&questions).unwrap() + "\n").unwrap();

    let spec = DatasetSpec {
        name: "mini".into(),
        questions_file: qpath,
        databases_dir: root.join("databases"),
        format: DatasetFormat::Bird,
    };
    let dataset = load_dataset(&spec).unwrap();
    let schema = dataset.schema("shop").unwrap();
    let links = items
        .iter()
        .map(|it| {
            let cols = extract_gold_columns(it.gold, schema);
            assert!(!cols.is_empty(), "{}", it.gold);
            let mut tables: Vec<(String, Vec<String>)> = Vec::new();
            for (t, c) in cols {
                match tables.iter_mut().find(|(name, _)| *name == t) {
                    Some((_, cs)) => cs.push(c),
                    None => tables.push((t, vec![c])),
                }
            }
            let body = json!({
                "tables": tables.iter().map(|(t, cs)| json!({"table": t, "columns": cs})).collect::<Vec<_>>()
            });
            format!("```json\n{}\n```", serde_json::to_string_pretty(&body).unwrap())
        })
        .collect();

    let gw = Gateway::new(
        GatewayMode::Record,
        Some(cache.clone()),
        Some(Box::new(Scripted { items, links })),
        4,
    )
    .unwrap();
    let linker = LinkerConfig::default();
    let pipelines = PipelineConfig::default();
    let scratch = tempfile::tempdir().unwrap();
    for tier in Tier::ALL {
        let router = FixedRouter::new(tier);
        let runner = Runner {
            dataset: &dataset,
            gateway: &gw,
            router: &router,
            linker: &linker,
            pipelines: &pipelines,
        };
        let path: PathBuf = scratch.path().join(format!("{}.jsonl", tier.name()));
        let s = runner.run(&path, &RunOptions { record_timing: false, ..RunOptions::default() }).unwrap();
        let correct = s.traces.iter().filter(|t| t.correct == Some(true)).count();
        let errors: Vec<_> = s.traces.iter().filter_map(|t| t.error.clone()).collect();
        assert!(errors.is_empty(), "{errors:?}");
        println!("{tier}: {correct}/{} correct", s.traces.len());
    }
    let labeler = Labeler {
        dataset: &dataset,
        gateway: &gw,
        linker: &linker,
        pipelines: &pipelines,
        mu: 4.0,
    };
    let budget = Budget {
        max_queries: Some(100),
        max_weighted_tokens: Some(10_000_000),
    };
    let labels = labeler.run(&budget, 4).unwrap();
    assert!(labels.skipped.is_empty(), "{:?}", labels.skipped);
    export_training_set(&labels.examples, &root.join("labels.jsonl"), ExportOptions::default()).unwrap();
    println!("labels B/M/A: {:?}", label_distribution(&labels.examples));
    println!("{} network calls recorded", gw.stats().network_calls);

    let config = json!({
        "dataset": {"name": "mini", "questions_file": "questions.json", "databases_dir": "databases", "format": "bird"},
        "gateway": {"mode": "replay_strict", "cache_dir": "cache"},
        "router": {"kind": "fixed", "tier": "basic"},
        "workers": 4,
        "output_dir": "out"
    });
    std::fs::write(root.join("config.json"), serde_json::to_string_pretty(&config).unwrap() + "\n").unwrap();
}
