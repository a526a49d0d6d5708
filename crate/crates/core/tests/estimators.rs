mod common;

use common::*;
use limitrd::estimators::{
    bandwidth_sweep, estimate_event_study, miscoding_rd_test, one_sided_fit, rd_gap, treatment_effect_curve,
    BootstrapOptions, CurveOptions, Side,
};
use limitrd::synth::generate_panel;
use limitrd::{tau_name, xi_name, Dimension, Error, EventPanel, KernelSpec, ModelSpec, Outcome};

fn panel(config: &limitrd::synth::SynthConfig) -> EventPanel {
    generate_panel(config).unwrap()
}

fn small_rd(seed: u64, tau: &[(i32, f64)]) -> EventPanel {
    let mut c = rd_config(seed, tau);
    c.n_units = 40;
    c.records_per_unit = 300;
    panel(&c)
}

#[test]
fn coefficient_layout_and_reference_period() {
    let p = small_rd(1, &[]);
    let spec = ModelSpec::new(Outcome::Approved);
    let est = estimate_event_study(&p, &spec, &KernelSpec::gaussian(0.01)).unwrap();
    let mut expected = vec!["below_limit".to_string(), "below_x_treated".to_string()];
    expected.extend(spec.event_times().into_iter().map(xi_name));
    expected.extend(spec.event_times().into_iter().map(tau_name));
    let kept: Vec<&String> = est.names.iter().collect();
    let dropped: Vec<&String> = est.dropped.iter().map(|d| &d.name).collect();
    // Every listed regressor is either estimated or dropped with a reason.
    for name in &expected {
        assert!(kept.contains(&name) ^ dropped.contains(&name), "{name}");
    }
    assert!(est.get(&tau_name(-1)).is_none());
    assert!(expected.iter().all(|n| !n.contains("time_-1")));
    // The crossed unit effects span both segment intercepts and their treated split.
    assert!(dropped.contains(&&"below_limit".to_string()));
    assert!(dropped.contains(&&"below_x_treated".to_string()));
    assert_eq!(est.n_obs, p.len());
    assert_eq!(est.bandwidth(), Some(0.01));
}

#[test]
fn planted_step_is_recovered_by_event_study() {
    let mut c = rd_config(3, &[(1, 0.03), (3, 0.06)]);
    c.n_units = 60;
    c.records_per_unit = 600;
    let p = panel(&c);
    let est = estimate_event_study(
        &p,
        &ModelSpec::new(Outcome::Approved),
        &KernelSpec::gaussian(0.01),
    )
    .unwrap();
    for (t, truth) in [(1, 0.03), (3, 0.06), (2, 0.0), (-3, 0.0)] {
        let b = est.get(&tau_name(t)).unwrap();
        let se = est.std_error(&tau_name(t)).unwrap();
        assert!((b - truth).abs() < 4.0 * se, "t={t}: {b} (se {se}) vs {truth}");
    }
}

#[test]
fn rd_gap_equals_event_study_interaction() {
    let p = small_rd(5, &[(3, 0.06)]);
    let spec = ModelSpec::new(Outcome::Approved);
    let h = 0.01;
    let est = estimate_event_study(&p, &spec, &KernelSpec::gaussian(h)).unwrap();
    let gaps = rd_gap(&p, &spec, h, None).unwrap();
    assert_eq!(gaps.len(), spec.event_times().len());
    for g in &gaps {
        let tau = est.get(&tau_name(g.time)).unwrap();
        assert!(
            (g.tau_rd - tau).abs() < 1e-8,
            "t={}: {} vs {tau}",
            g.time,
            g.tau_rd
        );
        assert_eq!(g.tau_rd, g.left - g.right);
        assert!(g.std_error.is_none());
    }
}

#[test]
fn one_sided_effects_match_segment_sums() {
    let p = small_rd(6, &[(2, 0.04)]);
    let spec = ModelSpec::new(Outcome::Approved);
    let k = KernelSpec::gaussian(0.01);
    let est = estimate_event_study(&p, &spec, &k).unwrap();
    let left = one_sided_fit(&p, &spec, &k, Side::Conforming).unwrap();
    let right = one_sided_fit(&p, &spec, &k, Side::Jumbo).unwrap();
    assert_eq!(left.n_obs + right.n_obs, est.n_obs);
    for t in spec.event_times() {
        let xi = est.get(&xi_name(t)).unwrap();
        let tau = est.get(&tau_name(t)).unwrap();
        assert!((right.effects[&t] - xi).abs() < 1e-8);
        assert!((left.effects[&t] - (xi + tau)).abs() < 1e-8);
    }
}

#[test]
fn securitization_sample_is_originated_loans() {
    let p = small_rd(7, &[]);
    let spec = ModelSpec::new(Outcome::SecuritizedGivenOriginated);
    // Every record lies within the support of a 1% kernel.
    let est = estimate_event_study(&p, &spec, &KernelSpec::gaussian(0.01)).unwrap();
    let originated = p.records().iter().filter(|r| r.originated).count();
    assert_eq!(est.n_obs, originated);
    assert_eq!(est.outcome, "securitized_given_originated");
}

#[test]
fn narrow_kernel_drops_far_rows() {
    let mut c = small_config(8, 40, 200);
    c.distance_law = limitrd::synth::DistanceLaw::Uniform { max: 0.2 };
    let p = panel(&c);
    let spec = ModelSpec::new(Outcome::Approved);
    let est = estimate_event_study(&p, &spec, &KernelSpec::gaussian(0.005)).unwrap();
    let inside = p
        .records()
        .iter()
        .filter(|r| r.log_distance().unwrap().abs() <= 0.05)
        .count();
    assert_eq!(est.n_obs, inside);
    assert!(est.n_obs < p.len());
}

#[test]
fn sweep_preserves_grid_order_and_matches_single_fits() {
    let p = small_rd(9, &[(3, 0.06)]);
    let spec = ModelSpec::new(Outcome::Approved);
    let grid = [0.05, 0.01, 0.02];
    let sets = bandwidth_sweep(&p, &spec, &grid).unwrap();
    assert_eq!(sets.len(), 3);
    for (h, set) in grid.iter().zip(&sets) {
        assert_eq!(set.bandwidth(), Some(*h));
        let single = estimate_event_study(&p, &spec, &KernelSpec::gaussian(*h)).unwrap();
        assert_eq!(single.coefficients, set.coefficients);
    }
    assert!(bandwidth_sweep(&p, &spec, &[]).is_err());
    assert!(bandwidth_sweep(&p, &spec, &[0.0]).is_err());
}

#[test]
fn without_treated_rows_effects_are_unidentified() {
    let mut c = rd_config(10, &[]);
    c.n_units = 10;
    c.records_per_unit = 100;
    for e in &mut c.events {
        e.treated_share = 0.0;
    }
    let p = panel(&c);
    let err = estimate_event_study(
        &p,
        &ModelSpec::new(Outcome::Approved),
        &KernelSpec::gaussian(0.01),
    );
    assert!(matches!(err, Err(Error::Unidentified(_))), "{err:?}");
}

#[test]
fn plain_fixed_effects_keep_segment_intercept() {
    let p = small_rd(11, &[]);
    let mut spec = ModelSpec::new(Outcome::Approved);
    spec.interact_below_limit = false;
    spec.fixed_effects = vec![Dimension::Year, Dimension::Unit];
    let est = estimate_event_study(&p, &spec, &KernelSpec::gaussian(0.01)).unwrap();
    assert!(est.get("below_limit").is_some());
    assert!(est.get("below_x_treated").is_some());
    spec.below_x_treated = false;
    let est = estimate_event_study(&p, &spec, &KernelSpec::gaussian(0.01)).unwrap();
    assert!(est.index_of("below_x_treated").is_none());
}

#[test]
fn constant_outcome_gives_flat_curve() {
    let p = small_rd(12, &[(3, 0.06)]);
    let (mut records, calendar, _) = p.into_parts();
    for r in &mut records {
        r.approved = true;
    }
    let p = EventPanel::new(records, calendar).unwrap();
    let spec = ModelSpec::new(Outcome::Approved);
    let grid = [-0.008, -0.002, 0.0, 0.004, 0.009];
    let curve = treatment_effect_curve(&p, &spec, &grid, 0.01, &CurveOptions::default()).unwrap();
    assert_eq!(curve.len(), grid.len() * spec.event_times().len());
    for pt in curve {
        assert!(pt.effect.unwrap().abs() < 1e-10, "{pt:?}");
    }
}

#[test]
fn curve_at_zero_is_the_left_limit() {
    let p = small_rd(13, &[(3, 0.06)]);
    let spec = ModelSpec::new(Outcome::Approved);
    let curve = treatment_effect_curve(&p, &spec, &[0.0], 0.01, &CurveOptions::default()).unwrap();
    let gaps = rd_gap(&p, &spec, 0.01, None).unwrap();
    for g in gaps {
        let pt = curve.iter().find(|c| c.time == g.time).unwrap();
        assert_eq!(pt.effect, Some(g.left));
    }
}

#[test]
fn curve_shows_planted_step_on_conforming_side() {
    let mut c = rd_config(14, &[(3, 0.06)]);
    c.n_units = 60;
    c.records_per_unit = 600;
    let p = panel(&c);
    let spec = ModelSpec::new(Outcome::Approved);
    let curve = treatment_effect_curve(&p, &spec, &[-0.005, 0.005], 0.01, &CurveOptions::default()).unwrap();
    let at = |d: f64| {
        curve
            .iter()
            .find(|c| c.delta == d && c.time == 3)
            .unwrap()
            .effect
            .unwrap()
    };
    assert!(at(-0.005) > 0.03, "{}", at(-0.005));
    assert!(at(0.005).abs() < 0.03, "{}", at(0.005));
}

#[test]
fn thin_kernel_mass_leaves_points_empty() {
    let p = small_rd(15, &[]);
    let spec = ModelSpec::new(Outcome::Approved);
    // Amounts lie within 1% of the limit; a point at 8% with h = 0.5% has no mass.
    let curve = treatment_effect_curve(&p, &spec, &[0.08], 0.005, &CurveOptions::default()).unwrap();
    assert!(curve.iter().all(|c| c.effect.is_none()));
}

#[test]
fn bootstrap_is_seeded_and_thread_independent() {
    let mut c = rd_config(16, &[(3, 0.06)]);
    c.n_units = 20;
    c.records_per_unit = 200;
    let p = panel(&c);
    let spec = ModelSpec::new(Outcome::Approved);
    let opts = Some(BootstrapOptions { draws: 20, seed: 4 });
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| rd_gap(&p, &spec, 0.01, opts).unwrap())
    };
    let a = run(1);
    let b = run(3);
    assert_eq!(a, b);
    assert!(a.iter().all(|g| g.std_error.is_some_and(|s| s > 0.0)));
    let other = rd_gap(&p, &spec, 0.01, Some(BootstrapOptions { draws: 20, seed: 5 })).unwrap();
    assert_ne!(a, other);
}

#[test]
fn miscoding_test_with_constant_flag_has_zero_slopes() {
    let p = small_rd(17, &[]);
    let flags = vec![false; p.len()];
    let est = miscoding_rd_test(&p, &flags, 2).unwrap();
    assert_eq!(
        est.names,
        ["intercept", "below_limit", "dlog_amount", "dlog_amount_2"]
    );
    assert!(est.coefficients.iter().all(|b| b.abs() < 1e-12));
    assert!(miscoding_rd_test(&p, &flags, 4).is_err());
    assert!(miscoding_rd_test(&p, &flags[1..], 1).is_err());
}
