use nalgebra::DMatrix;
use predtransport::data::{make_folds, split_train_test, DesignKind, SplitAssignment, TransportDataset};
use predtransport::eval::{estimate_iow_on_rows, estimate_source_loss, estimate_target_loss_iow, Denominator, LossKind};
use predtransport::fit::{FittedModel, WeightingMode, fit_transported, FitOptions};
use predtransport::glm::{fit_weighted_linear, DesignMatrix};
use predtransport::io::{read_combined_from, write_combined_to};
use predtransport::model_spec::{Family, ModelSpec};
use predtransport::report::to_json_string;
use predtransport::weighting::{fit_membership_model, MembershipModel, Subset};
use proptest::prelude::*;

/// Random two-covariate dataset with both populations present.
fn dataset() -> impl Strategy<Value = TransportDataset> {
    (6usize..60)
        .prop_flat_map(|n| {
            (
                prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -10.0f64..10.0), n),
                prop::collection::vec(any::<bool>(), n),
            )
        })
        .prop_filter("needs three rows of each population", |(_, s)| {
            s.iter().filter(|&&v| v).count() >= 3 && s.iter().filter(|&&v| !v).count() >= 3
        })
        .prop_map(|(rows, s)| {
            let n = rows.len();
            let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { rows[i].0 } else { rows[i].1 });
            let y = (0..n).map(|i| s[i].then_some(rows[i].2)).collect();
            TransportDataset::new(vec!["x".into(), "z".into()], x, y, s, DesignKind::NonNested).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_is_stratified_and_reproducible(ds in dataset(), ratio in 0.3f64..0.8, seed: u64) {
        // Small datasets may not leave enough source rows to fit on.
        if let Ok(split) = split_train_test(&ds, ratio, seed) {
            for population in [true, false] {
                let m = (0..ds.nrows()).filter(|&i| ds.is_source(i) == population).count();
                let train = split.train_rows().into_iter().filter(|&i| ds.is_source(i) == population).count();
                let base = (ratio * m as f64).floor() as usize;
                prop_assert!(train == base || train == base + 1);
            }
            prop_assert_eq!(split.train_rows().len() + split.test_rows().len(), ds.nrows());
            prop_assert_eq!(split, split_train_test(&ds, ratio, seed).unwrap());
        }
    }

    #[test]
    fn folds_partition_each_population(ds in dataset(), k in 2usize..4, seed: u64) {
        if let Ok(folds) = make_folds(&ds, k, seed) {
            let mut seen = vec![0; ds.nrows()];
            for f in 0..k {
                for i in folds.held_out(f) {
                    seen[i] += 1;
                }
                prop_assert_eq!(folds.held_out(f).len() + folds.training(f).len(), ds.nrows());
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            for population in [true, false] {
                let sizes: Vec<usize> = (0..k)
                    .map(|f| folds.held_out(f).into_iter().filter(|&i| ds.is_source(i) == population).count())
                    .collect();
                prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            }
        }
    }

    #[test]
    fn wls_is_invariant_to_weight_scale(
        rows in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0, 0.1f64..5.0), 5..40),
        log_c in -3.0f64..3.0,
    ) {
        let n = rows.len();
        let design = DesignMatrix::new(
            vec!["1".into(), "x".into()],
            DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { rows[i].0 }),
        ).unwrap();
        let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let w: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let c = 10f64.powf(log_c);
        let wc: Vec<f64> = w.iter().map(|v| v * c).collect();
        if let (Ok(a), Ok(b)) = (fit_weighted_linear(&design, &y, &w), fit_weighted_linear(&design, &y, &wc)) {
            for j in 0..2 {
                prop_assert!((a.coefficients[j] - b.coefficients[j]).abs() <= 1e-9 * (1.0 + a.coefficients[j].abs()));
            }
        }
    }

    #[test]
    fn hajek_estimate_ignores_weight_scale(ds in dataset(), b0 in -2.0f64..2.0, a1 in -1.0f64..1.0, shift in -5.0f64..5.0) {
        let spec = ModelSpec::main_effects(ds.covariate_names());
        let fit = FittedModel::established(spec.clone(), vec![b0, 1.0, -0.5]).unwrap();
        let rows: Vec<usize> = (0..ds.nrows()).collect();
        let estimate = |a0: f64, denominator| {
            let mm = MembershipModel::from_coefficients(spec.clone(), vec![a0, a1, 0.2], Subset::Test);
            estimate_iow_on_rows(&ds, &rows, &fit, &mm, LossKind::SquaredError, denominator, None).unwrap().value
        };
        let base = estimate(0.0, Denominator::WeightSum);
        prop_assert!((estimate(shift, Denominator::WeightSum) - base).abs() <= 1e-10 * base.max(1.0));
        // The default denominator scales with the weights instead.
        let scaled = estimate(shift, Denominator::TargetCount) * shift.exp();
        let unscaled = estimate(0.0, Denominator::TargetCount);
        prop_assert!((scaled - unscaled).abs() <= 1e-10 * unscaled.max(1.0));
    }

    #[test]
    fn intercept_only_membership_reduces_to_naive(ds in dataset()) {
        let split = SplitAssignment::all_test(ds.nrows());
        let fit = FittedModel::established(ModelSpec::main_effects(ds.covariate_names()), vec![0.5, 1.0, -1.0]).unwrap();
        let mm = fit_membership_model(&ds, &split, Subset::Test, &ModelSpec::intercept_only()).unwrap();
        let iow = estimate_target_loss_iow(&ds, &split, &fit, &mm, LossKind::AbsoluteError).unwrap().value;
        let naive = estimate_source_loss(&ds, &split, &fit, LossKind::AbsoluteError).unwrap().value;
        prop_assert!((iow - naive).abs() <= 1e-12 * naive.max(1.0));
    }

    #[test]
    fn estimates_are_non_negative(ds in dataset(), seed: u64) {
        if let Ok(split) = split_train_test(&ds, 0.5, seed) {
            let options = FitOptions { membership_spec: Some(ModelSpec::intercept_only()), truncation: None };
            if let Ok(fit) = fit_transported(&ds, &split, &ModelSpec::main_effects(ds.covariate_names()), WeightingMode::InverseOdds, &options) {
                if let Ok(mm) = fit_membership_model(&ds, &split, Subset::Test, &ModelSpec::intercept_only()) {
                    if let Ok(e) = estimate_target_loss_iow(&ds, &split, &fit, &mm, LossKind::SquaredError) {
                        prop_assert!(e.value >= 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn csv_round_trip_is_exact(ds in dataset()) {
        let mut buf = Vec::new();
        write_combined_to(&ds, &mut buf).unwrap();
        prop_assert_eq!(read_combined_from(buf.as_slice(), DesignKind::NonNested).unwrap(), ds);
    }

    #[test]
    fn model_document_round_trip_is_exact(coefs in prop::collection::vec(-1e6f64..1e6, 3), bernoulli: bool) {
        let family = if bernoulli { Family::Bernoulli } else { Family::Gaussian };
        let spec: ModelSpec = "1,x,x:z".parse::<ModelSpec>().unwrap().with_family(family);
        let fit = FittedModel::established(spec, coefs).unwrap();
        prop_assert_eq!(FittedModel::from_document(&fit.to_document()).unwrap(), fit);
    }

    #[test]
    fn report_floats_round_trip(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..20)) {
        let back: Vec<f64> = serde_json::from_str(&to_json_string(&values)).unwrap();
        prop_assert_eq!(back, values);
    }

    #[test]
    fn spec_text_round_trips(degree in 1u32..5, interact: bool) {
        let mut spec = ModelSpec::polynomial("x", degree).to_string();
        if interact {
            spec.push_str(",x:z");
        }
        let parsed: ModelSpec = spec.parse().unwrap();
        prop_assert_eq!(parsed.to_string(), spec);
    }
}
