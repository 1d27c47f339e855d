use cbap_core::config::ParamOverrides;
use cbap_core::harness::mean_and_se;
use cbap_core::markov::SolverOptions;
use cbap_core::metrics::analytical_report;
use cbap_core::params::ModelParams;
use cbap_core::sim::{empirical_report, run_simulation};
use cbap_core::timing::derive_timings;
use proptest::prelude::*;

fn params(n: usize, q: usize, w0: u32, cbap_fraction: f64) -> ModelParams {
    ParamOverrides {
        n: Some(n),
        q: Some(q),
        w0: Some(w0),
        cbap_fraction: Some(cbap_fraction),
        ..Default::default()
    }
    .resolve()
    .unwrap()
}

#[test]
fn delay_falls_as_cbap_grows() {
    for n in [5, 20, 50] {
        let delays: Vec<f64> = [0.1, 0.2, 0.4, 0.7, 1.0]
            .iter()
            .map(|&f| analytical_report(&params(n, 1, 7, f), &SolverOptions::default()).unwrap().mean_delay.unwrap())
            .collect();
        assert!(delays.windows(2).all(|w| w[1] < w[0]), "n={n}: {delays:?}");
    }
}

#[test]
fn simulated_sectors_beat_single_sector_at_forty_stations() {
    let mean_u = |q| {
        let p = params(40, q, 7, 0.4);
        let t = derive_timings(&p).unwrap();
        (0..3)
            .map(|seed| empirical_report(&run_simulation(&p, &t, seed, 100).unwrap(), &p).utilization)
            .sum::<f64>()
            / 3.0
    };
    assert!(mean_u(4) > mean_u(1));
}

/// Attempts per station per in-CBAP contention step, averaged over ten seeds, against the
/// fixed-point transmission probability.
#[test]
fn simulated_tau_within_three_standard_errors() {
    let p = params(20, 1, 7, 0.4);
    let t = derive_timings(&p).unwrap();
    let taus: Vec<f64> = (0..10)
        .map(|seed| run_simulation(&p, &t, seed, 200).unwrap().sectors[0].empirical_tau())
        .collect();
    let (mean, se) = mean_and_se(&taus);
    let report = analytical_report(&p, &SolverOptions::default()).unwrap();
    let tau = report.sectors[0].solution.as_ref().unwrap().tau;
    assert!((mean - tau).abs() <= 3.0 * se, "simulated {mean} ± {se}, analytic {tau}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn simulation_conserves_time(
        n in 1usize..30,
        q in 1usize..4,
        w0 in prop::sample::select(vec![4u32, 7, 15, 31]),
        fraction in 0.02f64..=1.0,
        seed in any::<u64>(),
    ) {
        prop_assume!(q <= n);
        let p = params(n, q, w0, fraction);
        let t = derive_timings(&p).unwrap();
        prop_assume!(p.cbap_split.iter().all(|&c| c > t.n_frame_slots));
        let stats = run_simulation(&p, &t, seed, 3).unwrap();
        prop_assert!(stats.conserves_time());
        for s in &stats.sectors {
            prop_assert_eq!(s.backoff_mismatches, 0);
            prop_assert!(s.payload_ps <= s.busy_ps && s.busy_ps <= s.cbap_time_ps(stats.num_bi));
        }
        let report = empirical_report(&stats, &p);
        prop_assert!((0.0..=1.0).contains(&report.utilization));
    }

    #[test]
    fn analytic_report_bounds(
        n in 1usize..80,
        q in 1usize..5,
        w0 in 2u32..64,
        m in 0u32..7,
        fraction in 0.05f64..=1.0,
    ) {
        prop_assume!(q <= n);
        let p = ParamOverrides {
            n: Some(n),
            q: Some(q),
            w0: Some(w0),
            m: Some(m),
            cbap_fraction: Some(fraction),
            ..Default::default()
        }
        .resolve()
        .unwrap();
        let t = derive_timings(&p).unwrap();
        let report = analytical_report(&p, &SolverOptions::default()).unwrap();
        prop_assert!((0.0..=1.0).contains(&report.utilization));
        for s in &report.sectors {
            prop_assert!((0.0..=1.0).contains(&s.utilization));
            prop_assert!(s.mean_delay.unwrap() > t.t_suc);
        }
    }
}
