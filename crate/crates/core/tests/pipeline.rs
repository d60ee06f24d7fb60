use nacart_core::bench::{r2_score, run_experiment, ExperimentConfig, Learner, Method};
use nacart_core::csvio::{default_names, read_matrix, read_target, write_matrix, write_target};
use nacart_core::ensemble::{fit_forest, EnsembleModel, ForestParams};
use nacart_core::impute::{fit_constant, ConstantKind, EmConfig, GaussianImputer, ShrinkMode};
use nacart_core::synth::{ampute, gen_model, AmputationSpec, Mechanism, ModelKind, ModelSpec};
use nacart_core::tree::{dump, fit_tree, ProbMode, Strategy, TreeParams};
use proptest::prelude::*;

fn mcar(p: f64, cols: Vec<usize>) -> AmputationSpec {
    AmputationSpec { mechanism: Mechanism::Mcar { p }, target_columns: cols }
}

#[test]
fn csv_round_trip_then_fit() {
    let spec = ModelSpec::new(ModelKind::Quadratic, 4, 0.5);
    let mut ds = gen_model(&spec, 400, 1).unwrap();
    ds.features = ampute(&ds.features, &mcar(0.25, vec![0, 1, 2, 3]), 2).unwrap();
    let mut xbuf = Vec::new();
    let mut ybuf = Vec::new();
    write_matrix(&mut xbuf, &default_names(4), &ds.features).unwrap();
    write_target(&mut ybuf, &ds.y).unwrap();
    let (_, x) = read_matrix(xbuf.as_slice()).unwrap();
    let y = read_target(ybuf.as_slice()).unwrap();
    assert_eq!(x, ds.features);
    assert_eq!(y, ds.y);
    let a = fit_tree(&x, &y, Strategy::Mia, &TreeParams::default(), 3).unwrap();
    let b = fit_tree(&ds.features, &ds.y, Strategy::Mia, &TreeParams::default(), 3).unwrap();
    assert_eq!(dump(&a), dump(&b));
}

#[test]
fn learners_beat_the_mean_on_fresh_data() {
    let spec = ModelSpec::new(ModelKind::Quadratic, 3, 0.5);
    let pat = mcar(0.2, vec![0, 1, 2]);
    let mut train = gen_model(&spec, 2000, 10).unwrap();
    train.features = ampute(&train.features, &pat, 11).unwrap();
    let mut test = gen_model(&spec, 2000, 12).unwrap();
    test.features = ampute(&test.features, &pat, 13).unwrap();
    for s in Strategy::ALL {
        let t = fit_tree(&train.features, &train.y, s, &TreeParams::default(), 0).unwrap();
        let r2 = r2_score(&test.y, &t.predict_matrix(&test.features, 1, ProbMode::Stochastic).unwrap()).unwrap();
        assert!(r2 > 0.4, "{s:?}: {r2}");
    }
    let f = fit_forest(&train.features, &train.y, Strategy::Mia, &ForestParams { b: 20, ..Default::default() }, 0).unwrap();
    let r2 = r2_score(&test.y, &EnsembleModel::Forest(f).predict_matrix(&test.features, 1, ProbMode::Stochastic).unwrap()).unwrap();
    assert!(r2 > 0.6, "forest: {r2}");
}

#[test]
fn imputers_fill_every_cell() {
    let spec = ModelSpec::new(ModelKind::Linear, 10, 0.5);
    let mut ds = gen_model(&spec, 300, 4).unwrap();
    ds.features = ampute(&ds.features, &mcar(0.3, (0..10).collect()), 5).unwrap();
    for kind in [ConstantKind::Mean, ConstantKind::OutOfRange] {
        let out = fit_constant(&ds.features, kind).unwrap().transform(&ds.features, true).unwrap();
        assert!(out.is_complete());
        assert_eq!(out.d(), 20);
    }
    let g = GaussianImputer::fit(&ds.features, EmConfig::default(), ShrinkMode::Trace).unwrap();
    let out = g.transform(&ds.features).unwrap();
    assert!(out.is_complete());
    for i in 0..ds.features.n() {
        for j in 0..10 {
            if let Some(v) = ds.features.get(i, j) {
                assert_eq!(out.get(i, j), Some(v));
            }
        }
    }
}

#[test]
fn bench_pipelines_score_every_method() {
    let spec = ModelSpec::new(ModelKind::Friedman, 5, 0.3);
    let cfg = ExperimentConfig::new(spec, mcar(0.1, vec![0, 1]), 300, 2, Learner::Tree, Method::ALL.to_vec(), 6);
    let recs = run_experiment(&cfg).unwrap();
    assert_eq!(recs.len(), 2 * Method::ALL.len());
    assert!(recs.iter().all(|r| r.r2.is_finite() && r.r2 <= 1.0 && r.model == "friedman"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn amputation_hits_only_target_columns(p in 0.0f64..0.9, col in 0usize..4, seed in 0u64..1000) {
        let spec = ModelSpec::new(ModelKind::Quadratic, 4, 0.5);
        let ds = gen_model(&spec, 100, seed).unwrap();
        let x = ampute(&ds.features, &mcar(p, vec![col]), seed + 1).unwrap();
        for i in 0..100 {
            for j in 0..4 {
                prop_assert!(j == col || !x.is_missing(i, j));
                if !x.is_missing(i, j) {
                    prop_assert_eq!(x.get(i, j), ds.features.get(i, j));
                }
            }
        }
    }

    #[test]
    fn predictions_stay_in_response_range(seed in 0u64..1000, strat in 0usize..4) {
        let spec = ModelSpec::new(ModelKind::Quadratic, 3, 0.5);
        let mut ds = gen_model(&spec, 150, seed).unwrap();
        ds.features = ampute(&ds.features, &mcar(0.3, vec![0, 1, 2]), seed + 7).unwrap();
        let t = fit_tree(&ds.features, &ds.y, Strategy::ALL[strat], &TreeParams::default(), seed).unwrap();
        let (lo, hi) = ds.y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        for p in t.predict_matrix(&ds.features, seed, ProbMode::Stochastic).unwrap() {
            prop_assert!(p >= lo - 1e-12 && p <= hi + 1e-12);
        }
    }
}
