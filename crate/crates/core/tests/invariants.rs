//! Cross-cutting properties checked on randomly built datasets.

use std::collections::BTreeMap;

use proptest::prelude::*;

use longbracket::data::{
    filter_subgroup, load_csv, validate, CombinedDataset, CsvSchema, Group, ObservationRow,
};
use longbracket::dominance::{dominance_report, DominanceConfig, DominanceVerdict};
use longbracket::estimands::{estimate_all, identity_residual, Estimand, DEFAULT_PSI_TOL};
use longbracket::report::{format_float, to_json};
use longbracket::sensitivity::{delta, PhiSpec};

fn row(group: Group, treated: bool, y1: f64, y2: Option<f64>, site: &str) -> ObservationRow {
    let mut labels = BTreeMap::new();
    labels.insert("site".to_string(), site.to_string());
    ObservationRow {
        group,
        treated,
        y1,
        y2,
        labels,
    }
}

/// Outcomes live on a 1/16 grid so strictly monotone transforms stay
/// injective in floating point and the algebraic identities sit far above
/// rounding noise.
fn val() -> impl Strategy<Value = f64> {
    (-160i32..=160).prop_map(|k| k as f64 / 16.0)
}

fn cell(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<(f64, f64, bool)>> {
    proptest::collection::vec((val(), val(), any::<bool>()), n)
}

prop_compose! {
    fn dataset()(
        e0 in cell(2..6),
        e1 in cell(2..6),
        mut o0 in cell(2..6),
        o1 in cell(2..6),
    ) -> CombinedDataset {
        // the control regression needs spread in the untreated panel arm
        if o0.iter().all(|(y1, _, _)| *y1 == o0[0].0) {
            o0[0].0 += 1.0;
        }
        let site = |s: bool| if s { "a" } else { "b" };
        let mut rows = Vec::new();
        for (y1, _, s) in &e0 {
            rows.push(row(Group::Experimental, false, *y1, None, site(*s)));
        }
        for (y1, _, s) in &e1 {
            rows.push(row(Group::Experimental, true, *y1, None, site(*s)));
        }
        for (y1, y2, s) in &o0 {
            rows.push(row(Group::Observational, false, *y1, Some(*y2), site(*s)));
        }
        for (y1, y2, s) in &o1 {
            rows.push(row(Group::Observational, true, *y1, Some(*y2), site(*s)));
        }
        CombinedDataset::new(rows, "property")
    }
}

fn map_outcomes(d: &CombinedDataset, f: impl Fn(f64) -> f64) -> CombinedDataset {
    let rows = d
        .rows()
        .iter()
        .map(|r| ObservationRow {
            y1: f(r.y1),
            y2: r.y2.map(&f),
            ..r.clone()
        })
        .collect();
    CombinedDataset::new(rows, "transformed")
}

fn map_y1(d: &CombinedDataset, f: impl Fn(f64) -> f64) -> CombinedDataset {
    let rows = d
        .rows()
        .iter()
        .map(|r| ObservationRow {
            y1: f(r.y1),
            ..r.clone()
        })
        .collect();
    CombinedDataset::new(rows, "transformed")
}

proptest! {
    #[test]
    fn signed_difference_identity_holds(d in dataset()) {
        let r = identity_residual(&d).unwrap();
        prop_assert!(r.abs() <= 1e-10, "residual {r}");
    }

    #[test]
    fn estimands_are_affine_equivariant(
        d in dataset(),
        scale in prop_oneof![Just(0.5), Just(2.0), Just(2.25), Just(4.0)],
        shift in (-8i32..=8).prop_map(f64::from),
    ) {
        let base = estimate_all(&d, DEFAULT_PSI_TOL).unwrap();
        let moved = estimate_all(
            &map_outcomes(&d, |y| scale * y + shift),
            DEFAULT_PSI_TOL,
        ).unwrap();
        for est in [Estimand::Naive, Estimand::Lu, Estimand::Ecb] {
            let a = base.get(est).unwrap();
            let b = moved.get(est).unwrap();
            prop_assert!(
                (b - scale * a).abs() <= 1e-9 * (1.0 + scale * a.abs()),
                "{est}: {a} scaled by {scale} gave {b}"
            );
        }
    }

    #[test]
    fn shifting_the_long_term_outcome_changes_nothing(
        d in dataset(),
        shift in (-8i32..=8).prop_map(f64::from),
    ) {
        let base = estimate_all(&d, DEFAULT_PSI_TOL).unwrap();
        let rows = d
            .rows()
            .iter()
            .map(|r| ObservationRow {
                y2: r.y2.map(|y| y + shift),
                ..r.clone()
            })
            .collect();
        let shifted = estimate_all(
            &CombinedDataset::new(rows, "y2-shifted"),
            DEFAULT_PSI_TOL,
        ).unwrap();
        for est in [Estimand::Naive, Estimand::Lu, Estimand::Ecb] {
            let a = base.get(est).unwrap();
            let b = shifted.get(est).unwrap();
            prop_assert!((b - a).abs() <= 1e-9 * (1.0 + a.abs()), "{est}: {a} vs {b}");
        }
    }

    #[test]
    fn empty_predicate_filters_nothing(d in dataset()) {
        let filtered = filter_subgroup(&d, &vec![]).unwrap();
        prop_assert_eq!(&filtered, &d);
    }

    #[test]
    fn subgroup_filter_partitions_and_is_idempotent(d in dataset()) {
        let a = vec![("site".to_string(), "a".to_string())];
        let b = vec![("site".to_string(), "b".to_string())];
        let da = filter_subgroup(&d, &a).unwrap();
        let db = filter_subgroup(&d, &b).unwrap();
        prop_assert_eq!(da.len() + db.len(), d.len());
        // idempotent on rows; provenance records each application
        let daa = filter_subgroup(&da, &a).unwrap();
        prop_assert_eq!(daa.rows(), da.rows());
    }

    #[test]
    fn csv_round_trip_is_bit_exact(d in dataset()) {
        let mut text = String::from("g,w,y1,y2,site\n");
        for r in d.rows() {
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                r.group,
                u8::from(r.treated),
                format_float(r.y1),
                r.y2.map(format_float).unwrap_or_default(),
                r.labels["site"],
            ));
        }
        let back = load_csv(text.as_bytes(), &CsvSchema::default(), "rt").unwrap();
        prop_assert_eq!(back.len(), d.len());
        for (a, b) in d.rows().iter().zip(back.rows()) {
            prop_assert_eq!(a.group, b.group);
            prop_assert_eq!(a.treated, b.treated);
            prop_assert_eq!(a.y1.to_bits(), b.y1.to_bits());
            prop_assert_eq!(a.y2.map(f64::to_bits), b.y2.map(f64::to_bits));
            prop_assert_eq!(&a.labels, &b.labels);
        }
    }

    #[test]
    fn validate_is_pure(d in dataset()) {
        let first = to_json(&validate(&d)).unwrap();
        let second = to_json(&validate(&d)).unwrap();
        prop_assert_eq!(first, second);
    }

    #[test]
    fn linear_adjustment_vanishes_at_unit_persistence(d in dataset()) {
        prop_assert_eq!(delta(&d, &PhiSpec::Linear, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn linear_adjustment_is_affine_in_rho(d in dataset(), rho in 0.25f64..2.0) {
        let k = delta(&d, &PhiSpec::Linear, 2.0).unwrap();
        let v = delta(&d, &PhiSpec::Linear, rho).unwrap();
        prop_assert!(
            (v - (rho - 1.0) * k).abs() <= 1e-10 * (1.0 + k.abs()),
            "delta({rho}) = {v}, unit slope {k}"
        );
    }

    #[test]
    fn dominance_is_invariant_under_increasing_transforms(
        d in dataset(),
        scale in prop_oneof![Just(0.5), Just(2.0), Just(3.0)],
        shift in (-8i32..=8).prop_map(f64::from),
    ) {
        let cfg = DominanceConfig::default();
        let base = dominance_report(&d, &cfg).unwrap();
        let moved = dominance_report(&map_y1(&d, |y| scale * y + shift), &cfg).unwrap();
        prop_assert_eq!(moved.verdict, base.verdict);
        prop_assert_eq!(moved.tie, base.tie);
        prop_assert_eq!(moved.max_deviation_i.to_bits(), base.max_deviation_i.to_bits());
        prop_assert_eq!(moved.max_deviation_ii.to_bits(), base.max_deviation_ii.to_bits());
    }

    #[test]
    fn mirroring_swaps_the_dominance_direction(d in dataset()) {
        let cfg = DominanceConfig::default();
        let base = dominance_report(&d, &cfg).unwrap();
        let mirrored = dominance_report(&map_y1(&d, |y| -y), &cfg).unwrap();
        // a tie mirrors onto itself and keeps the direction-I label
        let expected = match (base.tie, base.verdict) {
            (true, _) => DominanceVerdict::DominanceI,
            (false, DominanceVerdict::DominanceI) => DominanceVerdict::DominanceII,
            (false, DominanceVerdict::DominanceII) => DominanceVerdict::DominanceI,
            (false, DominanceVerdict::Inconclusive) => DominanceVerdict::Inconclusive,
        };
        prop_assert_eq!(mirrored.verdict, expected);
        prop_assert_eq!(mirrored.tie, base.tie);
    }
}
