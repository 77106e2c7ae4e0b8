use crate::error::{Error, Result};

/// Product-moment correlation. `None` when either input is constant, the
/// lengths differ, or fewer than two points are given.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    crate::linalg::pearson(x, y)
}

/// Area under the ROC curve via midranks (ties count one half).
pub fn auc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::Dimension(format!(
            "{} labels vs {} scores",
            labels.len(),
            scores.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("auc scores".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass(format!("auc over {} labels", labels.len())));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the midrank keeps everything integral.
    let mut rank_sum2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let twice_mid = (i + 1 + j + 1) as u64;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum2 += twice_mid;
            }
        }
        i = j + 1;
    }
    let np = n_pos as u64;
    let u2 = rank_sum2 - np * (np + 1);
    Ok(u2 as f64 / 2.0 / (n_pos as f64 * n_neg as f64))
}

/// Pair-counting AUC, quadratic; used as an oracle.
pub fn auc_pairwise(labels: &[bool], scores: &[f64]) -> Result<f64> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass(format!("auc over {} labels", labels.len())));
    }
    let mut twice: u64 = 0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            if scores[i] > scores[j] {
                twice += 2;
            } else if scores[i] == scores[j] {
                twice += 1;
            }
        }
    }
    Ok(twice as f64 / 2.0 / (n_pos as f64 * n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pearson_examples() {
        assert_eq!(pearson_r(&[1., 2., 3.], &[2., 4., 6.]), Some(1.0));
        assert_eq!(pearson_r(&[1., 2., 3.], &[3., 2., 1.]), Some(-1.0));
        assert!((pearson_r(&[1., 2., 3., 4.], &[1., 3., 2., 4.]).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(pearson_r(&[1., 1., 1.], &[1., 2., 3.]), None);
        assert_eq!(pearson_r(&[1.], &[1.]), None);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[false, true], &[0.1, 0.9]).unwrap(), 1.0);
        assert_eq!(auc(&[true, false], &[0.1, 0.9]).unwrap(), 0.0);
        assert_eq!(auc(&[false, true, false, true], &[0.1, 0.4, 0.5, 0.8]).unwrap(), 0.75);
        assert_eq!(auc(&[false, true], &[0.3, 0.3]).unwrap(), 0.5);
        assert!(matches!(auc(&[true, true], &[0.1, 0.2]), Err(Error::SingleClass(_))));
    }

    proptest! {
        #[test]
        fn auc_matches_pairs(data in prop::collection::vec((any::<bool>(), 0u8..6), 2..50)) {
            let labels: Vec<bool> = data.iter().map(|d| d.0).collect();
            let scores: Vec<f64> = data.iter().map(|d| d.1 as f64).collect();
            if let Ok(a) = auc(&labels, &scores) {
                prop_assert_eq!(a, auc_pairwise(&labels, &scores).unwrap());
                let mapped: Vec<f64> = scores.iter().map(|s| (s * 0.7).exp() - 3.0).collect();
                prop_assert_eq!(a, auc(&labels, &mapped).unwrap());
            }
        }

        #[test]
        fn pearson_affine_invariance(
            xy in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..30),
            a in 0.1f64..5.0, b in -5.0f64..5.0,
        ) {
            let x: Vec<f64> = xy.iter().map(|p| p.0).collect();
            let y: Vec<f64> = xy.iter().map(|p| p.1).collect();
            if let Some(r) = pearson_r(&x, &y) {
                let xs: Vec<f64> = x.iter().map(|v| a * v + b).collect();
                let neg: Vec<f64> = y.iter().map(|v| -a * v).collect();
                prop_assert!((pearson_r(&xs, &y).unwrap() - r).abs() < 1e-9);
                prop_assert!((pearson_r(&x, &neg).unwrap() + r).abs() < 1e-9);
            }
        }
    }
}
