mod common;

use std::collections::BTreeMap;

use common::{ap_oracle, square};
use geovl::geometry::{CategorySet, HBox};
use geovl::metrics::{
    ap_nc, average_precision, choice_accuracy, classification_accuracy, grounding_accuracy, match_detections, mean_f1,
    ApNcProtocol, ImageDetections, Interpolation, MetricsError,
};
use proptest::prelude::*;

fn scene(seed: u64) -> ImageDetections {
    let mut out = BTreeMap::new();
    for img in 0..3 {
        let dets = (0..5)
            .map(|k| {
                square(
                    ["ship", "plane"][(k + img + seed as usize) % 2],
                    f64::from(k as u32) * 80.0,
                    0.0,
                    40.0,
                )
            })
            .collect();
        out.insert(format!("img{img}"), dets);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn ap_in_unit_interval(flags in prop::collection::vec(any::<bool>(), 0..60), extra in 0usize..10, voc in any::<bool>()) {
        let interp = if voc { Interpolation::Voc07 } else { Interpolation::AllPoints };
        let n_gt = flags.iter().filter(|&&f| f).count() + extra;
        let ap = average_precision(&flags, n_gt, interp);
        if let Some(v) = ap {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert_eq!(ap.is_some(), ap_oracle(&flags, n_gt, interp).is_some());
    }

    #[test]
    fn all_true_prefix_gives_full_ap(n in 1usize..50, misses in 0usize..20) {
        let mut flags = vec![true; n];
        flags.extend(std::iter::repeat_n(false, misses));
        let ap = average_precision(&flags, n, Interpolation::AllPoints).unwrap();
        prop_assert!((ap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matching_claims_each_gt_once(seed in 0u64..1000) {
        let gts = scene(seed)["img0"].clone();
        let mut preds = gts.clone();
        preds.extend(gts.iter().cloned());
        let m = match_detections(&preds, &gts, 0.5);
        prop_assert_eq!(m.tp.iter().filter(|&&t| t).count(), gts.len());
        let mut claimed: Vec<usize> = m.matched_gt.iter().flatten().copied().collect();
        claimed.sort_unstable();
        claimed.dedup();
        prop_assert_eq!(claimed.len(), gts.len());
    }
}

#[test]
fn perfect_predictions_score_one() {
    let gts = scene(0);
    let report = ap_nc(&gts, &gts, &ApNcProtocol::default()).unwrap();
    let s = report.ap_nc50.unwrap();
    assert_eq!(s.mean, Some(1.0));
    assert_eq!(s.random_std, Some(0.0));
    assert_eq!(report.ap_nc50_95.mean, Some(1.0));
    let f1 = mean_f1(&gts, &gts, 0.5);
    assert_eq!(f1.mean_f1, Some(1.0));
}

#[test]
fn trials_are_seeded() {
    let gts = scene(1);
    let mut preds = gts.clone();
    for dets in preds.values_mut() {
        dets.push(square("ship", 900.0, 900.0, 30.0));
        dets.push(square("plane", 700.0, 900.0, 30.0));
    }
    let p = ApNcProtocol::default();
    let a = ap_nc(&preds, &gts, &p).unwrap();
    let b = ap_nc(&preds, &gts, &p).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.trial_seeds.len(), 10);
    assert_eq!(a.ap_nc50.as_ref().unwrap().trials.len(), 11);
}

#[test]
fn missing_class_predictions_count_as_zero() {
    let gts = scene(2);
    let preds: ImageDetections = gts
        .iter()
        .map(|(k, v)| (k.clone(), v.iter().filter(|d| d.category == "ship").cloned().collect()))
        .collect();
    let report = ap_nc(&preds, &gts, &ApNcProtocol::default()).unwrap();
    assert_eq!(report.per_class["plane"].ap_nc50, Some(0.0));
    assert_eq!(report.per_class["ship"].ap_nc50, Some(1.0));
    assert_eq!(report.ap_nc50.unwrap().mean, Some(0.5));
}

#[test]
fn strict_categories_reject_unknown_labels() {
    let gts = scene(0);
    let mut preds = gts.clone();
    preds.get_mut("img0").unwrap().push(square("ufo", 0.0, 500.0, 10.0));
    let loose = ApNcProtocol {
        categories: Some(CategorySet::new(["plane", "ship"]).unwrap()),
        ..ApNcProtocol::default()
    };
    assert_eq!(ap_nc(&preds, &gts, &loose).unwrap().unknown_category_predictions, 1);
    let strict = ApNcProtocol {
        strict_categories: true,
        ..loose
    };
    assert!(ap_nc(&preds, &gts, &strict).is_err());
}

#[test]
fn accuracy_helpers() {
    let gt = HBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
    let r = grounding_accuracy(&[Some(gt), None], &[gt, gt]).unwrap();
    assert_eq!((r.correct, r.total), (1, 2));
    assert!(matches!(
        grounding_accuracy(&[None], &[]),
        Err(MetricsError::LengthMismatch { .. })
    ));

    let mut aliases = BTreeMap::new();
    aliases.insert("storage tank".to_string(), vec!["oil tank".to_string()]);
    let preds = ["Oil  Tank".to_string(), "harbor".to_string()];
    let gts = ["storage tank".to_string(), "bridge".to_string()];
    let r = classification_accuracy(&preds, &gts, &aliases).unwrap();
    assert_eq!(r.correct, 1);

    let preds = ["The answer is B.".to_string(), "(C)".to_string(), "yes".to_string()];
    let gts = ["B".to_string(), "D".to_string(), "Yes".to_string()];
    let r = choice_accuracy(&preds, &gts, &BTreeMap::new()).unwrap();
    assert_eq!(r.correct, 2);
}
