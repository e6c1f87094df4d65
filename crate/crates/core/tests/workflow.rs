use multiplicity::dataset::{orthonormalize, Split};
use multiplicity::fairness::{fairness_workflow, WorkflowConfig};
use multiplicity::index_model::{build_ensemble, MultiTarget, Standardization};
use multiplicity::linear_fit::{fit_ols, EpsilonMode};
use multiplicity::metrics::{ambiguity_curve, stable_points, CurveOptions, Family};
use multiplicity::rashomon::SearchConfig;
use multiplicity::synth::{generate, SynthConfig, PROTECTED};
use multiplicity::{Dataset, KappaSpec};

fn config() -> WorkflowConfig {
    WorkflowConfig {
        targets: vec!["y1".into(), "y2".into()],
        group_label: PROTECTED.into(),
        kappa: KappaSpec::Percent(10.0),
        standardization: Standardization::Zscore,
        search: SearchConfig::default(),
    }
}

#[test]
fn workflow_reports_every_model_on_both_splits() {
    let ds = generate(&SynthConfig {
        n: 300,
        b: 0.6,
        ..SynthConfig::default()
    })
    .unwrap();
    let rep = fairness_workflow(&ds, &config()).unwrap();
    assert_eq!(rep.summaries.len(), 6);
    let tune = rep.summary(Split::Tune, "index").unwrap();
    assert_eq!(tune.group_count, rep.tune.max_count().unwrap());
    assert!(tune.group_rate >= rep.best_single_rate(Split::Tune));
    for s in &rep.summaries {
        assert_eq!(s.group_rate, s.group_count as f64 / s.kappa as f64);
        assert!(s.concentration.iter().all(|c| c.is_finite()));
    }
    let mut buf = Vec::new();
    rep.write_table(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 7);
}

#[test]
fn single_group_data_has_rate_one() {
    let ds = generate(&SynthConfig::default()).unwrap();
    let n = ds.n();
    let one = Dataset::from_parts(
        vec!["age".into(), "age_sq".into()],
        ds.features().columns(1, 2).into_owned(),
        ds.target_names().to_vec(),
        ds.targets().clone(),
        "group",
        vec!["all".into(); n],
        Some(ds.row_ids().to_vec()),
        Some(ds.splits().to_vec()),
    )
    .unwrap();
    let mut cfg = config();
    cfg.group_label = "all".into();
    let rep = fairness_workflow(&one, &cfg).unwrap();
    assert!(rep.summaries.iter().all(|s| s.group_rate == 1.0));
}

#[test]
fn missing_split_names_the_phase() {
    let ds = generate(&SynthConfig::default()).unwrap();
    let only_train = ds.clone().with_splits(vec![Split::Train; ds.n()]).unwrap();
    let err = fairness_workflow(&only_train, &config()).unwrap_err();
    assert!(err.to_string().contains("tune"), "{err}");
}

#[test]
fn curve_is_monotone_and_reuse_is_exact() {
    let ds = generate(&SynthConfig {
        n: 60,
        b: 0.3,
        ..SynthConfig::default()
    })
    .unwrap();
    let eps = [0.0, 0.01, 0.05, 0.2, 1.0];
    let reuse = CurveOptions::default();
    let fresh = CurveOptions {
        reuse: false,
        ..reuse
    };
    let (a, _) = ambiguity_curve(&ds, "y1", 6, &eps, &reuse).unwrap();
    let (b, _) = ambiguity_curve(&ds, "y1", 6, &eps, &fresh).unwrap();
    assert_eq!(a[0].all.value, 0.0);
    for w in a.windows(2) {
        assert!(w[0].all.value <= w[1].all.value);
        assert!(w[0].top.value <= w[1].top.value);
    }
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.all, y.all);
        assert_eq!(x.top, y.top);
    }
    assert!(a.iter().map(|p| p.reused).sum::<usize>() > 0);
}

#[test]
fn zero_tolerance_and_identical_targets_are_fully_stable() {
    let ds = generate(&SynthConfig {
        n: 40,
        ..SynthConfig::default()
    })
    .unwrap();
    let opts = CurveOptions {
        epsilon_mode: EpsilonMode::Absolute,
        ..CurveOptions::default()
    };
    let (_, reports) = ambiguity_curve(&ds, "y2", 5, &[0.0], &opts).unwrap();
    let s = stable_points(&reports[0], 5, Family::Rashomon).unwrap();
    assert_eq!(s.stable_fraction, 1.0);

    let (o, _) = orthonormalize(&ds).unwrap();
    let m = fit_ols(&o, "y1").unwrap();
    let ens = build_ensemble(&[m.clone(), m], &o, Standardization::Zscore).unwrap();
    let reports = MultiTarget::new(ens, 5).unwrap().flip_search_all();
    let s = stable_points(&reports, 5, Family::Index).unwrap();
    assert_eq!(s.stable_fraction, 1.0);
    assert_eq!(s.stable_selected.len() + s.stable_unselected.len(), 40);
}

#[test]
fn stable_plus_flippable_top_is_kappa() {
    let ds = generate(&SynthConfig {
        n: 80,
        b: -0.4,
        ..SynthConfig::default()
    })
    .unwrap();
    let (o, _) = orthonormalize(&ds).unwrap();
    let models: Vec<_> = ["y1", "y2"].iter().map(|t| fit_ols(&o, t).unwrap()).collect();
    let ens = build_ensemble(&models, &o, Standardization::Zscore).unwrap();
    for kappa in [4, 8, 16] {
        let mt = MultiTarget::new(ens.clone(), kappa).unwrap();
        let reports = mt.flip_search_all();
        let s = stable_points(&reports, kappa, Family::Index).unwrap();
        assert!(s.undetermined.is_empty());
        let top = ens.ranks(&ens.alpha, kappa).unwrap();
        let flippable_top = s.flippable.iter().filter(|&&i| top.is_top(i)).count();
        assert_eq!(s.stable_selected.len() + flippable_top, kappa);
    }
}
