mod common;

use common::{direct_sse, exhaustive_three, kinked, staircase};
use hpfactor::breaks::*;
use hpfactor::stats::task_rng;
use hpfactor::tskit::{simulate_arma, ArimaSpec, ArmaParams, FitOptions};
use proptest::prelude::*;
use rand::Rng;

fn within(found: &[usize], truth: &[usize], tol: usize) -> bool {
    found.len() == truth.len() && found.iter().zip(truth).all(|(f, t)| f.abs_diff(*t) <= tol)
}

#[test]
fn step_and_staircase_examples() {
    let y: Vec<f64> = (0..120).map(|t| if t < 60 { 0.0 } else { 1.0 }).collect();
    let r = binary_segmentation(&y, 1, SegmentCost::LinearTrend, DEFAULT_MIN_SIZE).unwrap();
    assert!(r.breakpoints[0].abs_diff(60) <= 1, "{:?}", r.breakpoints);
    let y: Vec<f64> = (0..120).map(|t| (t / 40) as f64).collect();
    let r = binary_segmentation(&y, 2, SegmentCost::MeanShift, DEFAULT_MIN_SIZE).unwrap();
    assert_eq!(r.breakpoints, vec![40, 80]);
}

#[test]
fn segmentation_errors() {
    let y = vec![0.0; 30];
    assert!(binary_segmentation(&y, 0, SegmentCost::LinearTrend, 12).is_err());
    assert!(binary_segmentation(&y, 3, SegmentCost::LinearTrend, 12).is_err());
    assert!(binary_segmentation(&vec![0.0; 40], 3, SegmentCost::LinearTrend, 12).is_err());
}

#[test]
fn planted_staircases_are_located() {
    let hits = (0..100)
        .filter(|&s| {
            let (y, truth) = staircase(s, 120);
            let r = binary_segmentation(&y, 3, SegmentCost::LinearTrend, DEFAULT_MIN_SIZE).unwrap();
            within(&r.breakpoints, &truth, 3)
        })
        .count();
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn planted_kinks_are_located() {
    let hits = (0..100)
        .filter(|&s| {
            let (y, truth) = kinked(s, 120);
            let r = binary_segmentation(&y, 3, SegmentCost::LinearTrend, DEFAULT_MIN_SIZE).unwrap();
            within(&r.breakpoints, &truth, 3)
        })
        .count();
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn greedy_cost_equals_exhaustive_on_planted_series() {
    let mut mismatches = Vec::new();
    for (name, gen) in [("staircase", staircase as fn(u64, usize) -> (Vec<f64>, Vec<usize>)), ("kinked", kinked)] {
        let mut bad = 0;
        for s in 0..100 {
            let (y, _) = gen(s, 120);
            let table = CostTable::new(&y, SegmentCost::LinearTrend);
            let r = binary_segmentation(&y, 3, SegmentCost::LinearTrend, DEFAULT_MIN_SIZE).unwrap();
            let (best, _) = exhaustive_three(&table, y.len(), DEFAULT_MIN_SIZE);
            bad += usize::from((table.total(&r.breakpoints) - best).abs() > 1e-9 * (1.0 + best));
        }
        mismatches.push((name, bad));
    }
    assert!(mismatches.iter().all(|m| m.1 == 0), "instances above the exhaustive optimum: {mismatches:?}");
}

proptest! {
    #[test]
    fn prefix_cost_is_direct_sse(y in proptest::collection::vec(-5.0f64..5.0, 30), a in 0usize..10, len in 3usize..20) {
        let b = (a + len).min(y.len());
        for (kind, line) in [(SegmentCost::LinearTrend, true), (SegmentCost::MeanShift, false)] {
            let table = CostTable::new(&y, kind);
            let direct = direct_sse(&y[a..b], line);
            prop_assert!((table.cost(a, b) - direct).abs() <= 1e-7 * (1.0 + direct));
        }
    }

    #[test]
    fn cost_falls_with_more_breaks(y in proptest::collection::vec(-5.0f64..5.0, 80..120)) {
        let table = CostTable::new(&y, SegmentCost::LinearTrend);
        let mut prev = table.total(&[]);
        for k in 1..=5 {
            let r = binary_segmentation(&y, k, SegmentCost::LinearTrend, 6).unwrap();
            let c = table.total(&r.breakpoints);
            prop_assert!(c <= prev + 1e-9);
            prop_assert_eq!(&r, &binary_segmentation(&y, k, SegmentCost::LinearTrend, 6).unwrap());
            prev = c;
        }
    }

    #[test]
    fn dummies_are_disjoint_indicators(n in 10usize..60, raw in proptest::collection::btree_set(1usize..60, 0..5)) {
        let bkps: Vec<usize> = raw.into_iter().filter(|&b| b < n).collect();
        let r = RegimeSet::new(bkps.clone(), n).unwrap();
        let d = regime_dummies(&r, n).unwrap();
        prop_assert_eq!(d.len(), bkps.len());
        for (i, col) in d.iter().enumerate() {
            prop_assert!(col.iter().all(|&v| v == 0.0 || v == 1.0));
            for j in (i + 1)..d.len() {
                prop_assert_eq!(col.iter().zip(&d[j]).map(|(a, b)| a * b).sum::<f64>(), 0.0);
            }
            let (a, b) = r.segments()[i + 1];
            prop_assert!((0..n).all(|t| (col[t] == 1.0) == (t >= a && t < b)));
        }
    }
}

#[test]
fn dummy_examples() {
    assert!(regime_dummies(&RegimeSet::new(vec![], 8).unwrap(), 8).unwrap().is_empty());
    let d = regime_dummies(&RegimeSet::new(vec![5], 8).unwrap(), 8).unwrap();
    assert_eq!(d, vec![vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]]);
    assert!(RegimeSet::new(vec![0], 8).is_err());
    assert!(RegimeSet::new(vec![4, 4], 8).is_err());
}

fn white(seed: u64, n: usize, sd: f64) -> Vec<f64> {
    simulate_arma(&ArmaParams::new(vec![], vec![], vec![]), sd * sd, n, 0, &mut task_rng(seed, 2)).unwrap()
}

#[test]
fn level_shifts_shrink_the_fan() {
    let n = 240;
    let e = white(1, n, 0.1);
    let y: Vec<f64> = (0..n).map(|t| [0.0, 5.0, -3.0, 2.0][t / 60] + e[t]).collect();
    let r = RegimeSet::new(vec![60, 120, 180], n).unwrap();
    let spec = ArimaSpec::new(1, 0, 0);
    let fan = regime_adjusted_fan(&y, &r, &spec, 120, &FitOptions::default()).unwrap();
    assert!(fan.sd_adjusted < 0.5 * fan.sd_unconditional, "{} vs {}", fan.sd_adjusted, fan.sd_unconditional);
    assert!(fan.aicc_adjusted <= fan.aicc_unconditional);
}

#[test]
fn no_break_series_keeps_its_fan() {
    let n = 240;
    let ar = ArmaParams::new(vec![0.6], vec![], vec![]);
    let y = simulate_arma(&ar, 0.01, n, 100, &mut task_rng(2, 2)).unwrap();
    // a dummy over a span with no shift should barely matter
    let r = RegimeSet::new(vec![120], n).unwrap();
    let fan = regime_adjusted_fan(&y, &r, &ArimaSpec::new(1, 0, 0), 120, &FitOptions::default()).unwrap();
    assert!((fan.sd_ratio() - 1.0).abs() <= 0.05, "ratio {}", fan.sd_ratio());
}

#[test]
fn adjusted_aicc_wins_under_large_shifts() {
    for s in 0..10 {
        let n = 240;
        let e = white(10 + s, n, 0.05);
        let y: Vec<f64> = (0..n).map(|t| if t < 100 { 0.0 } else { 1.5 } + e[t]).collect();
        let r = RegimeSet::new(vec![100], n).unwrap();
        let fan = regime_adjusted_fan(&y, &r, &ArimaSpec::new(1, 0, 0), 60, &FitOptions::default()).unwrap();
        assert!(fan.aicc_adjusted <= fan.aicc_unconditional, "seed {s}");
    }
}

#[test]
fn random_walk_adf_pattern() {
    let trials = 40;
    let mut pattern = 0;
    for s in 0..trials {
        let steps = white(100 + s, 300, 1.0);
        let y: Vec<f64> = steps.iter().scan(0.0, |acc, v| { *acc += v; Some(*acc) }).collect();
        let r = RegimeSet::new(vec![150], 300).unwrap();
        let rows = adf_by_regime(&y, &r, None).unwrap();
        let full = rows[0].result.as_ref().unwrap().p_value;
        let diff = rows[1].result.as_ref().unwrap().p_value;
        pattern += usize::from(full > 0.05 && diff < 0.05);
    }
    assert!(pattern * 10 >= 8 * trials as usize, "{pattern}/{trials}");
}

#[test]
fn stationary_regimes_have_negative_statistics() {
    let mut sum = 0.0;
    let mut count = 0;
    for s in 0..30u64 {
        let ar = ArmaParams::new(vec![0.5], vec![], vec![]);
        let y = simulate_arma(&ar, 1.0, 200, 50, &mut task_rng(200 + s, 3)).unwrap();
        let r = RegimeSet::new(vec![100], 200).unwrap();
        for row in adf_by_regime(&y, &r, None).unwrap().iter().skip(2) {
            sum += row.result.as_ref().unwrap().statistic;
            count += 1;
        }
    }
    assert!(sum / (count as f64) < 0.0);
}

#[test]
fn short_regime_is_flagged() {
    let mut rng = task_rng(9, 0);
    let y: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
    let r = RegimeSet::new(vec![10], 100).unwrap();
    let rows = adf_by_regime(&y, &r, None).unwrap();
    let first = &rows[2];
    assert!(first.result.is_none());
    assert_eq!(first.note.as_deref(), Some("insufficient"));
}
