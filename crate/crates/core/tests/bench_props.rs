mod common;

use common::{random_belief, world_path};
use mapaware_core::bench::{
    crossing, direct_frontier_cells, median, run_benchmark, timing_bins, Crossing, RunSummary,
    TierReport, TimingRow,
};
use mapaware_core::rl::episode::TimelineSample;
use mapaware_core::rl::Terminal;
use mapaware_core::{BeliefCell, RunConfig, Strategy as Planner};
use proptest::prelude::*;

fn timeline() -> impl Strategy<Value = Vec<TimelineSample>> {
    prop::collection::vec((0.0f64..0.2, 0.1f64..20.0, 0.0f64..5.0), 1..25).prop_map(|incs| {
        let (mut c, mut t, mut d) = (0.0, 0.0, 0.0);
        incs.into_iter()
            .enumerate()
            .map(|(step, (dc, dt, dd))| {
                c = f64::min(c + dc, 1.0);
                t += dt;
                d += dd;
                TimelineSample {
                    step,
                    time: t,
                    distance: d,
                    completeness: c,
                }
            })
            .collect()
    })
}

/// Walks every segment in tiny increments and reports the first sample at
/// or above `level`.
fn brute_crossing(tl: &[TimelineSample], level: f64) -> Option<Crossing> {
    if tl[0].completeness >= level {
        return Some(Crossing {
            time: tl[0].time,
            distance: tl[0].distance,
        });
    }
    const K: usize = 20_000;
    for w in tl.windows(2) {
        for i in 1..=K {
            let f = i as f64 / K as f64;
            let c = w[0].completeness + f * (w[1].completeness - w[0].completeness);
            if c >= level {
                return Some(Crossing {
                    time: w[0].time + f * (w[1].time - w[0].time),
                    distance: w[0].distance + f * (w[1].distance - w[0].distance),
                });
            }
        }
    }
    None
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn tier_crossings_match_brute_force(tl in timeline(), level in 0.05f64..1.0) {
        let fast = crossing(&tl, level);
        let slow = brute_crossing(&tl, level);
        match (fast, slow) {
            (None, None) => {}
            (Some(a), Some(b)) => {
                let seg = tl.windows(2).map(|w| w[1].time - w[0].time).fold(0.0, f64::max);
                let segd = tl.windows(2).map(|w| w[1].distance - w[0].distance).fold(0.0, f64::max);
                prop_assert!((a.time - b.time).abs() <= seg / 20_000.0 + 1e-9);
                prop_assert!((a.distance - b.distance).abs() <= segd / 20_000.0 + 1e-9);
                prop_assert!(a.time >= tl[0].time && a.time <= tl.last().unwrap().time);
            }
            (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
        }
    }

    #[test]
    fn median_matches_sorted_middle(mut v in prop::collection::vec(-1e3f64..1e3, 1..40)) {
        let m = median(&mut v.clone()).unwrap();
        v.sort_by(f64::total_cmp);
        let below = v.iter().filter(|x| **x < m).count();
        let above = v.iter().filter(|x| **x > m).count();
        prop_assert!(below <= v.len() / 2 && above <= v.len() / 2);
    }

    #[test]
    fn direct_cells_are_free_and_touch_unknown(seed in any::<u64>()) {
        let b = random_belief(seed, 40, 0.5, 0.1);
        let g = *b.geometry();
        let cells = direct_frontier_cells(&b);
        let mut expected = 0;
        for i in 0..g.len() {
            let c = g.cell_at(i);
            let frontier = b.cell(c) == BeliefCell::Free
                && g.neighbors4(c).any(|n| b.cell(n) == BeliefCell::Unknown);
            expected += frontier as usize;
            prop_assert_eq!(frontier, cells.contains(&g.cell_center(c)));
        }
        prop_assert_eq!(cells.len(), expected);
    }
}

#[test]
fn interpolates_between_bracketing_samples() {
    let s = |step, time, distance, completeness| TimelineSample {
        step,
        time,
        distance,
        completeness,
    };
    let tl = [
        s(0, 0.0, 0.0, 0.5),
        s(1, 10.0, 4.0, 0.7),
        s(2, 20.0, 8.0, 0.8),
    ];
    let c = crossing(&tl, 0.75).unwrap();
    assert!((c.time - 15.0).abs() < 1e-12);
    assert!((c.distance - 6.0).abs() < 1e-12);
    assert_eq!(
        crossing(&tl, 0.4).unwrap(),
        Crossing {
            time: 0.0,
            distance: 0.0
        }
    );
    assert!(crossing(&tl, 0.93).is_none());
}

fn run(world: &str, seed: u64, essentially: Option<f64>, completeness: f64) -> RunSummary {
    RunSummary {
        world: world.into(),
        strategy: Planner::NearestFrontier,
        seed,
        steps: 10,
        mostly: Some(Crossing {
            time: 1.0 + seed as f64,
            distance: 0.5,
        }),
        essentially: essentially.map(|t| Crossing {
            time: t,
            distance: t / 3.0,
        }),
        stop_time: 100.0 / 3.0,
        stop_distance: 0.1 + 0.2,
        completeness,
        invalid_decisions: seed as usize,
        terminal: if essentially.is_some() {
            Terminal::Complete
        } else {
            Terminal::StepLimit
        },
    }
}

#[test]
fn aggregates_only_average_reached_tiers() {
    let report = TierReport {
        runs: vec![
            run("a", 0, Some(30.0), 0.99),
            run("a", 1, None, 0.8),
            run("a", 2, Some(60.0), 0.995),
            run("b", 0, Some(10.0), 0.99),
        ],
    };
    let agg = report.aggregates();
    assert_eq!(agg.len(), 2);
    assert_eq!(agg[0].runs, 3);
    assert_eq!(agg[0].essentially_time, Some(45.0));
    assert!((agg[0].failure_rate - 1.0 / 3.0).abs() < 1e-12);
    assert!((agg[0].completeness - (0.99 + 0.8 + 0.995) / 3.0).abs() < 1e-12);
    assert_eq!(agg[1].failure_rate, 0.0);
    assert!(report.summary_csv().lines().nth(1).unwrap().ends_with(",1"));
}

#[test]
fn runs_csv_round_trips() {
    let report = TierReport {
        runs: vec![
            run("x", 3, Some(1.0 / 7.0), 0.1 + 0.7),
            run("y,z", 4, None, 0.5),
        ],
    };
    let back = TierReport::from_runs_csv(&report.runs_csv()).unwrap();
    assert_eq!(back, report);
    assert_eq!(back.aggregates(), report.aggregates());
    assert!(TierReport::from_runs_csv("world,strategy\nx,bogus\n").is_err());
}

#[test]
fn benchmark_csv_reproduces_its_aggregates() {
    let cfg = RunConfig {
        worlds: vec![world_path("tworoom")],
        runs: 3,
        ..RunConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let report = run_benchmark(&cfg, Some(dir.path())).unwrap();
    assert_eq!(report.runs.len(), 3);
    let text = std::fs::read_to_string(dir.path().join("tiers.csv")).unwrap();
    let back = TierReport::from_runs_csv(&text).unwrap();
    assert_eq!(back.aggregates(), report.aggregates());
    let again = run_benchmark(&cfg, None).unwrap();
    assert_eq!(again.runs_csv(), report.runs_csv());
}

fn row(completeness: f64, s: f64, d: f64) -> TimingRow {
    TimingRow {
        world: "w".into(),
        seed: 0,
        step: 0,
        completeness,
        known_fraction: completeness,
        structured_s: s,
        direct_s: d,
        structured_points: 1,
        direct_points: 1,
    }
}

#[test]
fn timing_bins_take_medians_per_bin() {
    let rows = [
        row(0.05, 1.0, 10.0),
        row(0.1, 3.0, 30.0),
        row(0.15, 2.0, 20.0),
        row(0.5, 5.0, 50.0),
        row(1.0, 7.0, 70.0),
        row(0.99, 9.0, 90.0),
    ];
    let bins = timing_bins(&rows, &[0.0, 0.2, 0.4, 0.95, 1.0]);
    assert_eq!(bins.len(), 3);
    assert_eq!(
        (bins[0].count, bins[0].structured_s, bins[0].direct_s),
        (3, 2.0, 20.0)
    );
    assert_eq!(
        (bins[1].lo, bins[1].count, bins[1].structured_s),
        (0.4, 1, 5.0)
    );
    // the last bin includes its upper edge
    assert_eq!(
        (bins[2].count, bins[2].structured_s, bins[2].direct_s),
        (2, 8.0, 80.0)
    );
}
