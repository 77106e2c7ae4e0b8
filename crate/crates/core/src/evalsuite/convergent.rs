use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::align::{align_matrices, Assignment};
use crate::error::{Error, Result};
use crate::linalg::{column, pearson, rows};

/// Correlations between two sets of user-level measures, with the columns
/// of the second set reordered so matched pairs sit on the diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergentMatrix {
    pub row_names: Vec<String>,
    /// Column names of B in display order.
    pub col_names: Vec<String>,
    /// rows x cols Pearson r in display order (0 where undefined).
    #[serde(with = "rows")]
    pub r: DMatrix<f64>,
    /// Original B column index for each display column.
    pub col_order: Vec<usize>,
    pub assignment: Assignment,
    pub n_users: usize,
}

/// Full pairwise correlation matrix between the columns of `a` and `b`
/// (same users, same order). B's columns are rearranged by Hungarian
/// matching on |r|; unmatched B columns follow in their original order.
pub fn convergent_matrix(
    a: &DMatrix<f64>,
    a_names: &[String],
    b: &DMatrix<f64>,
    b_names: &[String],
) -> Result<ConvergentMatrix> {
    if a.ncols() != a_names.len() || b.ncols() != b_names.len() {
        return Err(Error::Dimension("column names do not match matrix widths".into()));
    }
    let assignment = align_matrices(a, b)?;
    let mut order: Vec<usize> = assignment.permutation.iter().flatten().copied().collect();
    let unmatched: Vec<usize> = (0..b.ncols()).filter(|j| !order.contains(j)).collect();
    order.extend(unmatched);
    let bcols: Vec<Vec<f64>> = order.iter().map(|&j| column(b, j)).collect();
    let r = DMatrix::from_fn(a.ncols(), order.len(), |i, c| {
        pearson(&column(a, i), &bcols[c]).unwrap_or(0.0)
    });
    Ok(ConvergentMatrix {
        row_names: a_names.to_vec(),
        col_names: order.iter().map(|&j| b_names[j].clone()).collect(),
        r,
        col_order: order,
        assignment,
        n_users: a.nrows(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(p: &str, k: usize) -> Vec<String> {
        (0..k).map(|i| format!("{p}{i}")).collect()
    }

    #[test]
    fn identical_inputs_give_unit_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = DMatrix::from_fn(100, 4, |_, _| rng.random::<f64>());
        let m = convergent_matrix(&a, &names("a", 4), &a, &names("a", 4)).unwrap();
        for i in 0..4 {
            assert!((m.r[(i, i)] - 1.0).abs() < 1e-12);
        }
        assert_eq!(m.col_order, vec![0, 1, 2, 3]);
    }

    #[test]
    fn reversed_columns_are_rearranged() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = DMatrix::from_fn(100, 3, |_, _| rng.random::<f64>());
        let b = DMatrix::from_fn(100, 3, |i, j| a[(i, 2 - j)]);
        let m = convergent_matrix(&a, &names("a", 3), &b, &names("b", 3)).unwrap();
        assert_eq!(m.col_names, vec!["b2", "b1", "b0"]);
        for i in 0..3 {
            assert!((m.r[(i, i)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_gives_small_entries_and_wider_b_is_kept() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(1000, 3, |_, _| rng.random::<f64>());
        let b = DMatrix::from_fn(1000, 5, |_, _| rng.random::<f64>());
        let m = convergent_matrix(&a, &names("a", 3), &b, &names("b", 5)).unwrap();
        assert_eq!(m.r.ncols(), 5);
        assert!(m.r.amax() < 0.2);
    }
}
