use std::fs;

use hpfactor::ingest::{
    load_geography, load_transactions, pair_repeat_sales, write_geography, write_transactions, LoadOptions,
    PairOptions, RegionGraph, TransactionRecord,
};
use hpfactor::{Error, Month};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;

fn origin() -> Month {
    Month::new(2000, 1).unwrap()
}

fn graph() -> RegionGraph {
    RegionGraph::new(
        vec!["a".into(), "b".into(), "c".into()],
        vec!["X".into(), "X".into(), "Y".into()],
        vec![2.0, 1.0, 1.0],
        &[("a".into(), "b".into()), ("b".into(), "c".into())],
    )
    .unwrap()
}

fn record_strategy() -> impl Strategy<Value = Vec<TransactionRecord>> {
    proptest::collection::vec((0u8..12, 1.0f64..1e6, 0i64..40, 0usize..3), 1..80).prop_map(|rows| {
        rows.into_iter()
            .map(|(p, price, m, r)| TransactionRecord {
                property_id: format!("p{p}"),
                price,
                date: origin().plus(m),
                region_id: ["a", "b", "c"][r].to_string(),
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn pairing_ignores_input_order(recs in record_strategy(), seed in any::<u64>()) {
        let opts = PairOptions::new(origin(), 36);
        let a = pair_repeat_sales(&recs, &opts);
        let mut shuffled = recs.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(a, pair_repeat_sales(&shuffled, &opts));
    }

    #[test]
    fn pairs_are_inside_window_and_graph(recs in record_strategy()) {
        let g = graph();
        let opts = PairOptions::new(origin(), 36);
        for p in pair_repeat_sales(&recs, &opts) {
            prop_assert!(p.t1 < p.t2);
            prop_assert!(p.t2 < 36);
            prop_assert!(g.index_of(&p.region_id).is_some());
            prop_assert!(p.dlog_price.abs() <= 10f64.ln());
        }
    }

    #[test]
    fn accepted_plus_rejected_is_total(recs in record_strategy(), bad in proptest::collection::vec(0usize..4, 0..10)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tx.csv");
        write_transactions(&path, &recs).unwrap();
        let mut text = fs::read_to_string(&path).unwrap();
        for b in &bad {
            text.push_str(match b {
                0 => "q,-5,2001-01,a\n",
                1 => "q,abc,2001-01,a\n",
                2 => "q,10,2001-13,a\n",
                _ => "q,10,1990-01,a\n",
            });
        }
        fs::write(&path, text).unwrap();
        let opts = LoadOptions {
            window: Some((origin(), origin().plus(59))),
            reject_tolerance: 1.0,
            ..LoadOptions::default()
        };
        let rep = load_transactions(&path, &opts, Some(&graph())).unwrap();
        prop_assert_eq!(rep.records.len() + rep.rejected.len(), rep.total_rows);
        prop_assert_eq!(rep.total_rows, recs.len() + bad.len());
        prop_assert_eq!(rep.rejected.len(), bad.len());
    }
}

#[test]
fn same_month_sales_do_not_pair() {
    let rec = |m: i64, price: f64| TransactionRecord {
        property_id: "p".into(),
        price,
        date: origin().plus(m),
        region_id: "a".into(),
    };
    let pairs = pair_repeat_sales(&[rec(3, 100.0), rec(3, 110.0)], &PairOptions::new(origin(), 12));
    assert!(pairs.is_empty());
    let pairs = pair_repeat_sales(&[rec(3, 100.0), rec(3, 110.0), rec(5, 121.0)], &PairOptions::new(origin(), 12));
    assert_eq!(pairs.len(), 1);
    assert_eq!((pairs[0].t1, pairs[0].t2), (3, 5));
    assert!((pairs[0].dlog_price - (121.0f64 / 110.0).ln()).abs() < 1e-12);
}

#[test]
fn transactions_round_trip() {
    let recs = vec![
        TransactionRecord {
            property_id: "1".into(),
            price: 450000.5,
            date: Month::new(2010, 3).unwrap(),
            region_id: "a".into(),
        },
        TransactionRecord {
            property_id: "2".into(),
            price: 1.25e6,
            date: Month::new(2012, 11).unwrap(),
            region_id: "c".into(),
        },
    ];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tx.csv");
    write_transactions(&path, &recs).unwrap();
    let rep = load_transactions(&path, &LoadOptions::default(), Some(&graph())).unwrap();
    assert_eq!(rep.records, recs);
    assert!(rep.rejected.is_empty());
}

#[test]
fn geography_round_trip() {
    let g = graph();
    let dir = tempfile::tempdir().unwrap();
    write_geography(dir.path(), &g).unwrap();
    let h = load_geography(dir.path()).unwrap();
    assert_eq!(g.nodes, h.nodes);
    assert_eq!(g.edges, h.edges);
    assert_eq!(g.coarse, h.coarse);
    assert_eq!(g.weights, h.weights);
}

#[test]
fn unknown_region_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tx.csv");
    fs::write(&path, "property_id,price,date,region_id\n1,10,2001-01,zz\n").unwrap();
    let err = load_transactions(&path, &LoadOptions::default(), Some(&graph())).unwrap_err();
    assert!(matches!(err, Error::UnknownRegion(ref r) if r == "zz"));
}

#[test]
fn too_many_rejects_fail() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tx.csv");
    fs::write(&path, "property_id,price,date,region_id\n1,10,2001-01,a\n2,-1,2001-01,a\n").unwrap();
    let err = load_transactions(&path, &LoadOptions::default(), None).unwrap_err();
    assert!(matches!(err, Error::TooManyRejects { rejected: 1, total: 2, .. }));
}
