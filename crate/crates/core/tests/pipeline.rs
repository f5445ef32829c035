use std::path::Path;

use ifuc_core::experiment::{
    attach_metrics, files, read_dataset_csv, read_levels_csv, run_reserve_sweep, write_sweep,
    ExperimentConfig, SolveOutcome,
};
use ifuc_core::grid::{load_system, IslandModel};
use ifuc_core::lr::{label_incident, NUM_FEATURES};

fn island() -> IslandModel {
    load_system(Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/island4.json")).unwrap()
}

fn short_config() -> ExperimentConfig {
    ExperimentConfig {
        multipliers: vec![0.0, 1.0, 1.5],
        plots: false,
        ..ExperimentConfig::default()
    }
}

#[test]
fn sweep_reports_frontier_and_labels_match_metrics() {
    let model = island();
    let cfg = short_config();
    let sweep = run_reserve_sweep(&model, &cfg).unwrap();
    let outcomes: Vec<_> = sweep.levels.iter().map(|l| l.outcome).collect();
    assert_eq!(
        outcomes,
        vec![SolveOutcome::Optimal, SolveOutcome::Optimal, SolveOutcome::Infeasible]
    );
    assert_eq!(sweep.first_infeasible, Some(1.5));
    assert!(sweep.levels[0].cost.unwrap() <= sweep.levels[1].cost.unwrap());

    let th = cfg.thresholds(&model);
    for inc in &sweep.incidents {
        assert_eq!(inc.label, label_incident(&inc.metrics, &th));
        let xi = inc.features;
        assert!(xi.iter().all(|v| v.is_finite()));
        assert!(xi[2] > 0.0 && (xi[3] - xi[2] / model.system.demand[inc.provenance.hour]).abs() < 1e-12);
    }
    let per_level: usize = sweep.levels.iter().map(|l| l.incidents).sum();
    assert_eq!(per_level, sweep.incidents.len());

    let dir = tempfile::tempdir().unwrap();
    let data = write_sweep(dir.path(), &sweep).unwrap().unwrap();
    let mut back = read_dataset_csv(&dir.path().join(files::DATASET)).unwrap();
    assert!(back.rows.iter().all(|r| r.metrics.is_none()));
    attach_metrics(&mut back, &dir.path().join(files::METRICS)).unwrap();
    assert_eq!(back.rows.len(), data.rows.len());
    for (a, b) in back.rows.iter().zip(&data.rows) {
        assert_eq!(a.provenance, b.provenance);
        assert_eq!(a.features.len(), NUM_FEATURES);
        assert_eq!(a.features, b.features);
        assert_eq!(a.metrics.map(|m| (m.nadir, m.qss, m.rocof)), b.metrics.map(|m| (m.nadir, m.qss, m.rocof)));
    }
    let levels = read_levels_csv(&dir.path().join(files::LEVELS)).unwrap();
    assert_eq!(levels, sweep.levels);
}

#[test]
fn vacuous_cutpoint_matches_reserve_free_cost() {
    use ifuc_core::lr::LrModel;
    use ifuc_core::robust::{solve_robust_uc, RobustOptions};
    use ifuc_core::solver::{adapter_by_name, DEFAULT_ADAPTER};
    use ifuc_core::uc::SecurityBlock;

    let model = island();
    let uset = model.envelope(model.horizon());
    let mut s = adapter_by_name(DEFAULT_ADAPTER).unwrap();
    let opts = RobustOptions::default();
    let free = solve_robust_uc(&model.generators, &model.system, &uset, &SecurityBlock::None, &opts, s.as_mut()).unwrap();
    let lr = LrModel::from_coefficients([-3.0, 0.002, 0.1, -0.4, -9.0, 0.2], -1e6);
    let block = SecurityBlock::Lr { model: lr, big_m: None };
    let vacuous = solve_robust_uc(&model.generators, &model.system, &uset, &block, &opts, s.as_mut()).unwrap();
    let tol = opts.eps + 1e-9 * free.total_cost;
    assert!((free.total_cost - vacuous.total_cost).abs() <= tol, "{} vs {}", free.total_cost, vacuous.total_cost);
}

#[test]
fn absurd_demand_gives_empty_dataset_and_frontier() {
    let mut model = island();
    for d in &mut model.system.demand {
        *d *= 10.0;
    }
    let cfg = ExperimentConfig {
        multipliers: vec![0.0, 0.5],
        ..short_config()
    };
    let sweep = run_reserve_sweep(&model, &cfg).unwrap();
    assert!(sweep.incidents.is_empty());
    assert!(sweep.levels.iter().all(|l| l.outcome == SolveOutcome::Infeasible));
    assert_eq!(sweep.first_infeasible, Some(0.0));
    assert!(sweep.dataset().is_err());
    let dir = tempfile::tempdir().unwrap();
    assert!(write_sweep(dir.path(), &sweep).unwrap().is_none());
    assert_eq!(read_levels_csv(&dir.path().join(files::LEVELS)).unwrap().len(), 2);
}
