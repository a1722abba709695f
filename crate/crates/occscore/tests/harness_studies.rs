//! Monte Carlo harness: reproducibility, bookkeeping identities and the
//! simulated counterparts of the analytic curves.

use occscore::harness::{
    median, power_point, r_grid, run_eigen_median_curves, run_fig6_experiment, run_power_sweep, run_sweep, Filtering,
    PowerTest, SweepConfig,
};
use occscore_core::asymptotics::expected_info_sign_change;
use occscore_core::model::Scenario;

fn config(grid: Vec<f64>, reps: u64, seed: u64) -> SweepConfig {
    SweepConfig::new(Scenario::standard(0.8), grid, reps, 0.05, seed).unwrap()
}

#[test]
fn records_do_not_depend_on_thread_count() {
    let c = config(vec![0.0, 0.5], 300, 7);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| run_sweep(&c).unwrap());
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| run_sweep(&c).unwrap());
    assert_eq!(one, four);
}

#[test]
fn seeds_select_the_streams() {
    let a = run_sweep(&config(vec![0.3], 200, 8)).unwrap();
    let b = run_sweep(&config(vec![0.3], 200, 8)).unwrap();
    let c = run_sweep(&config(vec![0.3], 200, 9)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a[0].records, c[0].records);
}

#[test]
fn modified_rejections_add_the_negative_statistics() {
    let c = config(vec![0.0, 0.4, 0.6, 0.8], 1000, 9);
    let level = c.level().unwrap();
    for g in run_sweep(&c).unwrap() {
        let p = power_point(&g, &level, Filtering::PerTest);
        let negatives = g.records.iter().filter(|r| r.t_o.is_some_and(|t| t < 0.0)).count() as u64;
        let std = p.rate(PowerTest::ScoreObserved);
        let modified = p.rate(PowerTest::ScoreObservedModified);
        assert_eq!(std.n_valid, modified.n_valid);
        assert_eq!(modified.rejections, std.rejections + negatives, "R={}", g.r);
        assert!(modified.rate >= std.rate);
        let positive = p.rate(PowerTest::ScoreObservedPositive);
        assert_eq!(positive.n_valid, p.n_positive_t_o);
        assert_eq!(positive.rejections, std.rejections);
    }
}

#[test]
fn common_filtering_shares_one_denominator() {
    let c = config(vec![0.85], 1000, 10);
    let level = c.level().unwrap();
    let g = &run_sweep(&c).unwrap()[0];
    let p = power_point(g, &level, Filtering::Common);
    let complete = g.records.iter().filter(|r| r.complete()).count() as u64;
    for t in [PowerTest::Wald, PowerTest::Lrt, PowerTest::ScoreExpected, PowerTest::ScoreObserved, PowerTest::ScoreObservedModified] {
        assert_eq!(p.rate(t).n_valid, complete, "{}", t.label());
    }
    let per_test = power_point(g, &level, Filtering::PerTest);
    assert!(per_test.rate(PowerTest::ScoreObserved).n_valid >= complete);
}

/// Standard deviation of a rejection rate shrinks as `1/√n`: sixteen times the
/// replicates, a quarter of the spread.
#[test]
fn monte_carlo_error_scales_with_replicates() {
    let spread = |reps: u64| {
        let rates: Vec<f64> = (0..40)
            .map(|seed| {
                let c = config(vec![0.3], reps, 100 + seed);
                run_power_sweep(&c).unwrap()[0].rate(PowerTest::Lrt).rate
            })
            .collect();
        let m = rates.iter().sum::<f64>() / 40.0;
        (rates.iter().map(|r| (r - m).powi(2)).sum::<f64>() / 39.0).sqrt()
    };
    let ratio = spread(50) / spread(800);
    assert!((2.5..6.0).contains(&ratio), "{ratio}");
}

#[test]
fn reciprocal_eigenvalues_take_both_signs_off_the_null() {
    let c = config(vec![0.6], 2000, 11);
    let f = run_fig6_experiment(&c).unwrap();
    let pos = f.reciprocals.iter().filter(|r| r.1 > 0.0).count();
    let neg = f.reciprocals.iter().filter(|r| r.1 < 0.0).count();
    assert!(pos > 100 && neg > 100, "{pos} positive, {neg} negative");
    let mut v: Vec<f64> = f.reciprocals.iter().map(|r| r.1).collect();
    assert!(median(&mut v).unwrap() < 0.0);
}

#[test]
fn reciprocal_eigenvalues_are_positive_under_the_null() {
    let c = config(vec![0.0], 2000, 12);
    let f = run_fig6_experiment(&c).unwrap();
    let pos = f.reciprocals.iter().filter(|r| r.1 > 0.0).count();
    assert!(pos as f64 > 0.99 * f.reciprocals.len() as f64, "{pos} of {}", f.reciprocals.len());
}

/// The median smallest eigenvalue of the observed information crosses zero
/// close to where its analytic expectation does.
#[test]
fn simulated_eigenvalue_crossing_tracks_the_analytic_one() {
    let grid = r_grid(0.3, 0.7, 0.025).unwrap();
    let rows = run_eigen_median_curves(&config(grid.clone(), 2000, 13)).unwrap();
    let crossing = rows
        .windows(2)
        .find(|w| w[0].medians[3] > 0.0 && w[1].medians[3] <= 0.0)
        .map(|w| {
            let (a, b) = (w[0].medians[3], w[1].medians[3]);
            w[0].r + (w[1].r - w[0].r) * a / (a - b)
        })
        .expect("no crossing");
    let analytic = expected_info_sign_change(&Scenario::standard(0.8), &grid).unwrap().unwrap();
    assert!((crossing - analytic).abs() < 0.05, "simulated {crossing}, analytic {analytic}");
}
