use openpixel::dataset::ClassScheme;
use openpixel::labels::{LabelMap, IGNORE, UNKNOWN};
use openpixel::metrics::{
    cohen_kappa, confusion_matrix, mean_recall, normalized_accuracy, overall_accuracy,
    ConfusionMatrix,
};
use proptest::prelude::*;

fn matrix() -> impl Strategy<Value = Vec<Vec<u64>>> {
    (2usize..7)
        .prop_flat_map(|n| proptest::collection::vec(proptest::collection::vec(0u64..40, n), n))
}

fn permute(rows: &[Vec<u64>], perm: &[usize]) -> Vec<Vec<u64>> {
    perm.iter()
        .map(|&i| perm.iter().map(|&j| rows[i][j]).collect())
        .collect()
}

proptest! {
    #[test]
    fn metrics_are_bounded(rows in matrix()) {
        let cm = ConfusionMatrix::from_rows(&rows).unwrap();
        if let Ok(oa) = overall_accuracy(&cm) {
            prop_assert!((0.0..=1.0).contains(&oa));
        }
        if let Ok(na) = normalized_accuracy(&cm) {
            prop_assert!((0.0..=1.0).contains(&na));
        }
        if let Ok(k) = cohen_kappa(&cm) {
            prop_assert!(k <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn relabeling_classes_changes_nothing(rows in matrix(), seed in any::<u64>()) {
        let n = rows.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let a = ConfusionMatrix::from_rows(&rows).unwrap();
        let b = ConfusionMatrix::from_rows(&permute(&rows, &perm)).unwrap();
        for (x, y) in [
            (overall_accuracy(&a).ok(), overall_accuracy(&b).ok()),
            (normalized_accuracy(&a).ok(), normalized_accuracy(&b).ok()),
            (cohen_kappa(&a).ok(), cohen_kappa(&b).ok()),
        ] {
            match (x, y) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12, "{} vs {}", x, y),
                (x, y) => prop_assert_eq!(x.is_some(), y.is_some()),
            }
        }
    }

    #[test]
    fn merging_adds_counts(a in matrix(), seed in any::<u64>()) {
        let b: Vec<Vec<u64>> = a.iter().map(|r| r.iter().map(|v| (v * 7 + seed % 13) % 29).collect()).collect();
        let mut m = ConfusionMatrix::from_rows(&a).unwrap();
        m.merge(&ConfusionMatrix::from_rows(&b).unwrap()).unwrap();
        let sum: Vec<Vec<u64>> = a.iter().zip(&b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect();
        prop_assert_eq!(m, ConfusionMatrix::from_rows(&sum).unwrap());
    }

    #[test]
    fn perfect_predictions_score_one(truth in proptest::collection::vec(0u8..4, 2..100)) {
        let classes: Vec<String> = ["a", "b", "c", "d"].map(String::from).to_vec();
        let scheme = ClassScheme::closed_set(&classes).unwrap();
        let labels = LabelMap::new(1, truth.len(), truth).unwrap();
        let cm = confusion_matrix(&labels, &labels, &scheme).unwrap();
        prop_assert_eq!(cm.total() as usize, labels.data().len());
        prop_assert_eq!(overall_accuracy(&cm).unwrap(), 1.0);
        prop_assert_eq!(normalized_accuracy(&cm).unwrap(), 1.0);
        if let Ok(k) = cohen_kappa(&cm) {
            prop_assert!((k - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn accumulation_counts_every_scored_pixel(
        pairs in proptest::collection::vec((0u8..6, 0u8..5), 1..200),
        held in 0usize..5,
    ) {
        let classes: Vec<String> = ["a", "b", "c", "d", "e"].map(String::from).to_vec();
        let scheme = ClassScheme::leave_one_out(&classes, &classes[held]).unwrap();
        let truth: Vec<u8> = pairs.iter().map(|p| if p.0 == 5 { IGNORE } else { p.0 }).collect();
        let pred: Vec<u8> = pairs.iter().map(|p| if p.1 == 4 { UNKNOWN } else { p.1 }).collect();
        let n = truth.len();
        let cm = confusion_matrix(
            &LabelMap::new(1, n, pred).unwrap(),
            &LabelMap::new(1, n, truth.clone()).unwrap(),
            &scheme,
        ).unwrap();
        prop_assert_eq!(cm.total() as usize, truth.iter().filter(|&&t| t != IGNORE).count());
        let held_pixels = truth.iter().filter(|&&t| t as usize == held).count();
        prop_assert_eq!(cm.row_sum(cm.unknown_index()) as usize, held_pixels);
        let rows: Vec<usize> = (0..cm.size()).collect();
        if let (Some(mr), Ok(na)) = (mean_recall(&cm, rows.iter().copied()), normalized_accuracy(&cm)) {
            prop_assert!((mr - na).abs() < 1e-12);
        }
    }
}
