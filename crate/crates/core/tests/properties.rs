use proptest::prelude::*;
use tiersql_core::labeler::{import_training_set, export_training_set, waterfall_label, ExportOptions, TierOutcome};
use tiersql_core::metrics::{pgr, utr, DisagreementMatrix};
use tiersql_core::pareto::{pareto_frontier, ParetoPoint};
use tiersql_core::routers::{knn_route, FeatureVector, LabeledPoint};
use tiersql_core::{
    merge_usage, tier_cheaper, ColumnDef, DatabaseSchema, LinkedSchema, NLQuery, Phase, TableDef, Tier, TokenUsage,
};

fn tier() -> impl Strategy<Value = Tier> {
    prop_oneof![Just(Tier::Basic), Just(Tier::Intermediate), Just(Tier::Advanced)]
}

fn usage() -> impl Strategy<Value = TokenUsage> {
    (0u64..1 << 40, 0u64..1 << 40).prop_map(|(p, c)| TokenUsage::new(Phase::Generation, p, c))
}

#[test]
fn tier_order_is_a_strict_total_order() {
    for a in Tier::ALL {
        assert!(!tier_cheaper(a, a));
        for b in Tier::ALL {
            assert!(!(tier_cheaper(a, b) && tier_cheaper(b, a)));
            if a != b {
                assert!(tier_cheaper(a, b) || tier_cheaper(b, a));
            }
            for c in Tier::ALL {
                if tier_cheaper(a, b) && tier_cheaper(b, c) {
                    assert!(tier_cheaper(a, c));
                }
            }
        }
    }
}

fn schema() -> DatabaseSchema {
    DatabaseSchema::new(vec![
        TableDef::new("Orders", vec![ColumnDef::new("Id", "INTEGER"), ColumnDef::new("Total", "REAL")]),
        TableDef::new("customer", vec![ColumnDef::new("name", "TEXT"), ColumnDef::new("City", "TEXT")]),
    ])
    .unwrap()
}

proptest! {
    #[test]
    fn usage_merge_is_a_commutative_monoid(a in usage(), b in usage(), c in usage()) {
        let zero = TokenUsage::zero(Phase::Generation);
        prop_assert_eq!(merge_usage(a, zero).unwrap(), a);
        prop_assert_eq!(merge_usage(a, b).unwrap(), merge_usage(b, a).unwrap());
        prop_assert_eq!(
            merge_usage(merge_usage(a, b).unwrap(), c).unwrap(),
            merge_usage(a, merge_usage(b, c).unwrap()).unwrap()
        );
    }

    #[test]
    fn linking_never_invents_names(
        picks in proptest::collection::vec(
            (prop_oneof![Just("orders"), Just("CUSTOMER"), Just("ghost")],
             proptest::collection::vec(prop_oneof![Just("id"), Just("TOTAL"), Just("city"), Just("Name"), Just("x")], 0..4)),
            0..5)
    ) {
        let s = schema();
        // Nothing resolvable is an error, which is also fine here.
        let Ok(linked) = LinkedSchema::resolve(&s, picks.iter().map(|(t, cs)| (*t, cs.iter().copied()))) else {
            return Ok(());
        };
        for e in &linked.entries {
            let table = s.tables().iter().find(|t| t.name == e.table);
            prop_assert!(table.is_some(), "{}", e.table);
            for c in &e.columns {
                prop_assert!(table.unwrap().columns.iter().any(|d| &d.name == c), "{}.{}", e.table, c);
            }
        }
    }

    #[test]
    fn knn_ignores_order_when_distances_are_distinct(
        labels in proptest::collection::vec(tier(), 1..30),
        k in 1usize..8,
        seed in any::<u64>(),
    ) {
        // Points on a ray from the probe: every distance differs.
        let train: Vec<LabeledPoint> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| LabeledPoint { features: FeatureVector::new(i as u32, 0), label: *l })
            .collect();
        let mut shuffled = train.clone();
        let mut s = seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let probe = FeatureVector::new(0, 0);
        prop_assert_eq!(knn_route(probe, &train, k).unwrap().tier, knn_route(probe, &shuffled, k).unwrap().tier);
    }

    #[test]
    fn utr_is_a_fraction(counts in proptest::array::uniform3(proptest::array::uniform3(0u64..500))) {
        let m = DisagreementMatrix::from_counts(counts);
        if let Ok(u) = utr::<f64>(&m) {
            prop_assert!((0.0..=1.0).contains(&u));
        }
    }

    #[test]
    fn pgr_pins_the_baselines(b in 0.0f64..0.5, gap in 0.01f64..0.5) {
        let a = b + gap;
        prop_assert!(pgr(b, b, a).unwrap().abs() < 1e-12);
        prop_assert!((pgr(a, b, a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn frontier_is_undominated_and_sorted(
        pts in proptest::collection::vec((0u32..100, 1u32..10_000), 1..20)
    ) {
        let points: Vec<ParetoPoint<f64>> = pts
            .iter()
            .enumerate()
            .map(|(i, (ex, t))| ParetoPoint::new(format!("m{i}"), f64::from(*ex) / 100.0, f64::from(*t)))
            .collect();
        let front = pareto_frontier(&points);
        prop_assert!(!front.is_empty());
        for f in &front {
            prop_assert!(!points.iter().any(|p| p.dominates(f)));
        }
        for w in front.windows(2) {
            prop_assert!(w[0].avg_tokens <= w[1].avg_tokens);
        }
        for p in &points {
            let on_front = front.iter().any(|f| f.method == p.method);
            prop_assert_eq!(on_front, !points.iter().any(|q| q.dominates(p)));
        }
    }
}

#[test]
fn training_set_round_trips_through_jsonl() {
    let s = schema();
    let linked = LinkedSchema::resolve(&s, [("orders", ["total"])]).unwrap();
    let mut examples = Vec::new();
    for (i, pass) in [[true, false, false], [false, true, true], [false, false, false]].iter().enumerate() {
        let q = NLQuery {
            id: format!("q{i}"),
            question: format!("question {i}"),
            hint: "h".into(),
            db_id: "d".into(),
            gold_sql: Some("SELECT 1".into()),
            difficulty: None,
        };
        examples.push(
            waterfall_label(&q, &linked, |t| {
                Ok(TierOutcome {
                    sql: "SELECT 1".into(),
                    correct: pass[t.index()],
                    usage: TokenUsage::new(Phase::Generation, 7, 2),
                    error: None,
                })
            })
            .unwrap(),
        );
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.jsonl");
    export_training_set(&examples, &path, ExportOptions::default()).unwrap();
    assert_eq!(import_training_set(&path).unwrap(), examples);
}
