use proptest::prelude::*;

use ifuc_core::experiment::holdout_split;
use ifuc_core::grid::{scenario_envelope, GeneratorSpec, QuadraticCost, SystemSpec, WindScenario, WindScenarioSet};
use ifuc_core::lr::{
    build_dataset, cutpoint_from_probability, label_incident, logistic, pearson, spearman,
    AcceptabilityThresholds, Dataset, Incident, Provenance,
};
use ifuc_core::robust::{solve_deterministic_uc, solve_extensive_oracle, solve_robust_uc, RobustOptions};
use ifuc_core::sfr::{extract_metrics, simulate_outage, FrequencyMetrics, OperatingPoint, SimOptions};
use ifuc_core::solver::BranchAndBound;
use ifuc_core::uc::{piecewise_cost, SecurityBlock};

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, j| acc * (n - j) / (j + 1))
}

fn unit(id: &str, p_min: f64, p_max: f64, b: f64, c: f64, su: f64) -> GeneratorSpec {
    GeneratorSpec {
        id: id.into(),
        p_min,
        p_max,
        ramp_up: p_max,
        ramp_down: p_max,
        min_up: 1,
        min_down: 1,
        startup_cost: su,
        cost_quadratic: QuadraticCost { a: 5.0, b, c },
        inertia_h: 4.0,
        m_base: 1.25 * p_max,
        gov_gain: 20.0,
        gov_a1: 6.0,
        gov_a2: 4.5,
        gov_b1: 1.8,
        gov_b2: 0.0,
        dp_min: -10.0,
        dp_max: 10.0,
        initial_on: false,
        initial_p: 0.0,
    }
}

fn scenarios(rows: &[Vec<f64>]) -> WindScenarioSet {
    WindScenarioSet {
        scenarios: rows
            .iter()
            .enumerate()
            .map(|(k, mw)| WindScenario {
                label: format!("s{k}"),
                mw: mw.clone(),
            })
            .collect(),
    }
}

fn metrics_strategy() -> impl Strategy<Value = FrequencyMetrics> {
    (46.0..50.5f64, -2.0..0.5f64, 48.5..50.5f64).prop_map(|(nadir, rocof, qss)| FrequencyMetrics {
        nadir,
        qss,
        rocof,
        ufls_total: 0.0,
        unstable: false,
    })
}

proptest! {
    #[test]
    fn envelope_contains_every_scenario(
        rows in prop::collection::vec(prop::collection::vec(0.0..20.0f64, 5), 1..6),
        gamma in 0usize..7,
    ) {
        let set = scenarios(&rows);
        let b = scenario_envelope(&set, gamma);
        prop_assert!(b.budget_gamma <= 5);
        for s in &set.scenarios {
            prop_assert!(b.contains(&s.mw, 0.0));
        }
        prop_assert!(b.contains(&b.w_nom, 0.0));
    }

    #[test]
    fn vertex_count_matches_budget(
        rows in prop::collection::vec(prop::collection::vec(0.0..20.0f64, 5), 2..4),
        gamma in 0usize..6,
    ) {
        let b = scenario_envelope(&scenarios(&rows), gamma);
        let n = b.uncertain_hours().len();
        let k = b.budget_gamma.min(n);
        let verts = b.vertices(10_000).unwrap();
        prop_assert_eq!(verts.len(), binomial(n, k) << k);
        for v in &verts {
            prop_assert!(b.contains(v, 0.0));
            let moved = (0..5)
                .filter(|&t| v[t] != b.w_nom[t])
                .count();
            prop_assert!(moved <= k);
        }
    }

    #[test]
    fn secant_cost_is_convex_and_above_quadratic(
        p_min in 0.0..5.0f64,
        width in 0.5..20.0f64,
        b in 0.0..100.0f64,
        c in 0.0..3.0f64,
        n in 1usize..8,
        frac in 0.0..1.0f64,
    ) {
        let g = unit("g", p_min, p_min + width, b, c, 0.0);
        let pwl = piecewise_cost(&g, n).unwrap();
        prop_assert_eq!(pwl.breakpoints.len(), n + 1);
        prop_assert!(pwl.slopes().windows(2).all(|s| s[1] >= s[0] - 1e-9));
        let p = p_min + frac * width;
        prop_assert!(pwl.eval(p) >= g.cost_quadratic.eval(p) - 1e-9);
        prop_assert!((pwl.eval(p_min) - g.cost_quadratic.eval(p_min)).abs() < 1e-9);
        prop_assert!((pwl.eval(p_min + width) - g.cost_quadratic.eval(p_min + width)).abs() < 1e-9);
    }

    #[test]
    fn label_is_monotone_in_each_metric(
        m in metrics_strategy(),
        up in 0.0..1.0f64,
        which in 0usize..3,
    ) {
        let th = AcceptabilityThresholds::default();
        let mut better = m;
        match which {
            0 => better.nadir += up,
            1 => better.rocof += up,
            _ => better.qss += up,
        }
        prop_assert!(label_incident(&better, &th) >= label_incident(&m, &th));
        let mut unstable = m;
        unstable.unstable = true;
        prop_assert_eq!(label_incident(&unstable, &th), 0);
    }

    #[test]
    fn cutpoint_inverts_logistic(p in 1e-9..(1.0 - 1e-9)) {
        let psi = cutpoint_from_probability(p).unwrap();
        prop_assert!((logistic(psi) - p).abs() <= 1e-12);
    }

    #[test]
    fn correlations_are_bounded_and_rank_invariant(
        xy in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 3..40),
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
        if let (Ok(a), Ok(b)) = (pearson(&x, &y), pearson(&y, &x)) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&a));
            prop_assert!((a - b).abs() < 1e-12);
        }
        let cubed: Vec<f64> = x.iter().map(|v| v * v * v + 3.0 * v).collect();
        if let (Ok(a), Ok(b)) = (spearman(&x, &y), spearman(&cubed, &y)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn holdout_is_a_partition(n in 0usize..500, fraction in 0.0..1.0f64, seed in any::<u64>()) {
        let (train, hold) = holdout_split(n, fraction, seed);
        prop_assert_eq!(train.len() + hold.len(), n);
        prop_assert_eq!(hold.len(), (n as f64 * fraction).floor() as usize);
        let mut all: Vec<usize> = train.iter().chain(&hold).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(holdout_split(n, fraction, seed), (train, hold));
    }

    #[test]
    fn dataset_csv_round_trips(
        rows in prop::collection::vec((prop::array::uniform5(0.0..100.0f64), 0u8..2, 0usize..24), 1..30),
    ) {
        let incidents = rows.iter().enumerate().map(|(k, (xi, label, hour))| Incident {
            features: *xi,
            label: *label,
            provenance: Provenance {
                reserve: 0.1 * (k % 4) as f64,
                scenario: format!("s{}", k % 3),
                hour: *hour,
                unit: format!("G{k}"),
            },
            metrics: None,
        });
        let data = build_dataset(incidents).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back, data);
    }
}

fn sfr_system() -> SystemSpec {
    SystemSpec {
        s_base: 50.0,
        f_nominal: 50.0,
        load_damping: 1.0,
        demand: vec![30.0],
        horizon: 1,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn outage_response_is_linear_without_limits(p in prop::array::uniform3(1.0..10.0f64), lost in 0usize..3, scale in 0.1..4.0f64) {
        let gens = vec![unit("a", 0.0, 1e4, 1.0, 0.0, 0.0), unit("b", 0.0, 1e4, 1.0, 0.0, 0.0), unit("c", 0.0, 1e4, 1.0, 0.0, 0.0)];
        let sys = sfr_system();
        let opts = SimOptions { horizon: 5.0, record_governors: false, ..SimOptions::default() };
        let op = |q: &[f64]| OperatingPoint { hour: 0, demand: 30.0, wind: 0.0, units: vec![0, 1, 2], p: q.to_vec() };
        let base = simulate_outage(&sys, &gens, &op(&p), lost, &opts).unwrap();
        let mut q = p;
        q[lost] *= scale;
        let scaled = simulate_outage(&sys, &gens, &op(&q), lost, &opts).unwrap();
        for (a, b) in base.f.iter().zip(&scaled.f) {
            prop_assert!(((b - 50.0) - scale * (a - 50.0)).abs() / 50.0 < 1e-9);
        }
        let m = extract_metrics(&base);
        prop_assert!(m.nadir <= m.qss + 1e-12);
        prop_assert!(m.nadir < 50.0);
        prop_assert!(m.rocof < 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Benders on random two-unit, two-hour instances agrees with the
    /// extensive form, and no single vertex costs more than the robust
    /// optimum.
    #[test]
    fn robust_cost_bounds_every_vertex(
        d in prop::array::uniform2(6.0..14.0f64),
        lo in prop::array::uniform2(0.0..2.0f64),
        spread in prop::array::uniform2(0.0..3.0f64),
        su in prop::array::uniform2(0.0..80.0f64),
    ) {
        let gens = vec![unit("a", 2.0, 10.0, 20.0, 0.5, su[0]), unit("b", 1.0, 7.0, 45.0, 1.0, su[1])];
        let sys = SystemSpec { s_base: 20.0, f_nominal: 50.0, load_damping: 1.0, demand: d.to_vec(), horizon: 2 };
        let hi = [lo[0] + spread[0], lo[1] + spread[1]];
        let uset = scenario_envelope(&scenarios(&[lo.to_vec(), hi.to_vec()]), 2);
        let mut s = BranchAndBound::default();
        let opts = RobustOptions { eps: 1e-5, master_copy: false, ..RobustOptions::default() };
        let r = solve_robust_uc(&gens, &sys, &uset, &SecurityBlock::None, &opts, &mut s).unwrap();
        let verts = uset.vertices(64).unwrap();
        let e = solve_extensive_oracle(&gens, &sys, &verts, &SecurityBlock::None, 3, &mut s).unwrap();
        prop_assert!((r.total_cost - e.objective).abs() <= 1e-6 * e.objective.max(1.0));
        for v in &verts {
            let det = solve_deterministic_uc(&gens, &sys, v, &SecurityBlock::None, 3, &mut s).unwrap();
            prop_assert!(det.objective <= r.total_cost + 1e-6);
        }
        prop_assert!(r.history.windows(2).all(|w| w[1].lower >= w[0].lower - 1e-9));
    }
}
