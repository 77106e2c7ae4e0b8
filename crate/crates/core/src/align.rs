//! Optimal matching of factors across independently fitted models.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factors::FactorScores;
use crate::linalg::{column, pearson};

/// Cost used to pad rectangular correlation-based problems (`1 - |r| <= 1`).
pub const ALIGN_PAD_COST: f64 = 2.0;

/// Largest size for which ties are resolved to the lexicographically
/// smallest optimal permutation. Beyond this the first optimum found is kept.
pub const LEX_TIEBREAK_LIMIT: usize = 40;

/// Minimum-cost perfect matching on a square cost matrix.
///
/// Returns `perm` with row `i` assigned to column `perm[i]`, and the total
/// cost summed in row order. Among optimal permutations the lexicographically
/// smallest is returned (for `n <= LEX_TIEBREAK_LIMIT`).
pub fn hungarian(cost: &DMatrix<f64>) -> Result<(Vec<usize>, f64)> {
    let n = cost.nrows();
    if cost.ncols() != n {
        return Err(Error::Dimension(format!(
            "hungarian needs a square matrix, got {}x{}",
            n,
            cost.ncols()
        )));
    }
    if cost.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cost matrix".into()));
    }
    if n == 0 {
        return Ok((vec![], 0.0));
    }
    let rows: Vec<usize> = (0..n).collect();
    let cols: Vec<usize> = (0..n).collect();
    let (mut perm, mut best) = solve(cost, &rows, &cols);

    if n <= LEX_TIEBREAK_LIMIT {
        let scale = cost.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = 1e-11 * (1.0 + scale * n as f64);
        let mut fixed = Vec::with_capacity(n);
        let mut free_cols = cols.clone();
        let mut remaining = best;
        for i in 0..n {
            let rest_rows: Vec<usize> = (i + 1..n).collect();
            let mut chosen = None;
            for (pos, &j) in free_cols.iter().enumerate() {
                let rest_cols: Vec<usize> =
                    free_cols.iter().copied().filter(|&c| c != j).collect();
                let (_, sub_cost) = solve(cost, &rest_rows, &rest_cols);
                if cost[(i, j)] + sub_cost <= remaining + tol {
                    chosen = Some((pos, j, sub_cost));
                    break;
                }
            }
            let (pos, j, sub_cost) =
                chosen.expect("an optimal completion always exists for the current prefix");
            fixed.push(j);
            free_cols.remove(pos);
            remaining = sub_cost;
        }
        perm = fixed;
        best = perm.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
    }
    Ok((perm, best))
}

/// Hungarian matching for a rectangular matrix, padded to square with a
/// cost exceeding every real entry. Rows left unmatched map to `None`.
pub fn hungarian_rect(cost: &DMatrix<f64>, pad: Option<f64>) -> Result<(Vec<Option<usize>>, f64)> {
    let (r, c) = cost.shape();
    if cost.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cost matrix".into()));
    }
    let n = r.max(c);
    let max = cost.iter().fold(0.0f64, |m, v| m.max(*v));
    let pad = pad.unwrap_or(max + 1.0);
    let square = DMatrix::from_fn(n, n, |i, j| if i < r && j < c { cost[(i, j)] } else { pad });
    let (perm, _) = hungarian(&square)?;
    let mut total = 0.0;
    let out = (0..r)
        .map(|i| {
            let j = perm[i];
            (j < c).then(|| {
                total += cost[(i, j)];
                j
            })
        })
        .collect();
    Ok((out, total))
}

/// Hungarian algorithm (shortest augmenting paths with potentials) on the
/// submatrix `rows x cols`, which must be square. Returns positions into `cols`
/// mapped back to column ids, and the total cost.
fn solve(cost: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> (Vec<usize>, f64) {
    let n = rows.len();
    debug_assert_eq!(n, cols.len());
    if n == 0 {
        return (vec![], 0.0);
    }
    let a = |i: usize, j: usize| cost[(rows[i - 1], cols[j - 1])];
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = a(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[p[j] - 1] = cols[j - 1];
    }
    let total = perm
        .iter()
        .enumerate()
        .map(|(i, &c)| cost[(rows[i], c)])
        .sum();
    (perm, total)
}

/// Matching of factor columns of `A` onto columns of `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// Column of B matched to each column of A (`None` if unmatched).
    pub permutation: Vec<Option<usize>>,
    /// Sign of each matched correlation (0 when unmatched).
    pub signs: Vec<i8>,
    /// Matched correlation per column of A (0 when unmatched).
    pub per_pair_r: Vec<f64>,
    /// Sum of matched |r|.
    pub objective: f64,
    /// Mean matched |r|.
    pub mean_abs_r: f64,
}

impl Assignment {
    /// `B` columns reordered and sign-flipped to line up with `A`.
    pub fn apply(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(b.nrows(), self.permutation.len(), |i, c| match self.permutation[c] {
            Some(j) => self.signs[c] as f64 * b[(i, j)],
            None => 0.0,
        })
    }
}

/// Align the columns of two score matrices over the same users.
pub fn align_matrices(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Assignment> {
    if a.nrows() != b.nrows() {
        return Err(Error::UserMismatch(format!(
            "score matrices have {} and {} users",
            a.nrows(),
            b.nrows()
        )));
    }
    if a.ncols() == 0 || b.ncols() == 0 {
        return Err(Error::Empty("score matrix".into()));
    }
    let bc: Vec<Vec<f64>> = (0..b.ncols()).map(|j| column(b, j)).collect();
    let r = DMatrix::from_fn(a.ncols(), b.ncols(), |i, j| {
        pearson(&column(a, i), &bc[j]).unwrap_or(0.0)
    });
    let cost = r.map(|v| 1.0 - v.abs());
    let (perm, _) = hungarian_rect(&cost, Some(ALIGN_PAD_COST))?;
    let mut signs = Vec::with_capacity(perm.len());
    let mut per_pair = Vec::with_capacity(perm.len());
    let mut objective = 0.0;
    let mut matched = 0;
    for (i, p) in perm.iter().enumerate() {
        match p {
            Some(j) => {
                let v = r[(i, *j)];
                signs.push(if v < 0.0 { -1 } else { 1 });
                per_pair.push(v);
                objective += v.abs();
                matched += 1;
            }
            None => {
                signs.push(0);
                per_pair.push(0.0);
            }
        }
    }
    Ok(Assignment {
        permutation: perm,
        signs,
        per_pair_r: per_pair,
        objective,
        mean_abs_r: objective / matched as f64,
    })
}

/// Align factor scores `B` to `A`; both must cover the same users in the same order.
pub fn align_scores(a: &FactorScores, b: &FactorScores) -> Result<Assignment> {
    if a.user_ids != b.user_ids {
        return Err(Error::UserMismatch(
            "score tables must list the same users in the same order".into(),
        ));
    }
    align_matrices(&a.scores, &b.scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out.sort();
        out
    }

    fn brute(cost: &DMatrix<f64>) -> (Vec<usize>, f64) {
        let n = cost.nrows();
        let mut best: Option<(Vec<usize>, f64)> = None;
        for p in permutations(n) {
            let c: f64 = p.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
            if best.as_ref().is_none_or(|(_, b)| c < *b) {
                best = Some((p, c));
            }
        }
        best.unwrap()
    }

    #[test]
    fn spec_examples() {
        let (p, c) = hungarian(&DMatrix::from_row_slice(2, 2, &[1., 2., 2., 1.])).unwrap();
        assert_eq!((p, c), (vec![0, 1], 2.0));
        let (p, c) = hungarian(&DMatrix::from_row_slice(2, 2, &[4., 1., 1., 4.])).unwrap();
        assert_eq!((p, c), (vec![1, 0], 2.0));
    }

    #[test]
    fn ties_pick_lexicographically_smallest() {
        let (p, _) = hungarian(&DMatrix::from_element(4, 4, 3.0)).unwrap();
        assert_eq!(p, vec![0, 1, 2, 3]);
        let m = DMatrix::from_row_slice(3, 3, &[1., 1., 5., 1., 1., 5., 5., 5., 0.]);
        assert_eq!(hungarian(&m).unwrap().0, vec![0, 1, 2]);
    }

    #[test]
    fn rejects_non_finite() {
        let m = DMatrix::from_row_slice(2, 2, &[1., f64::NAN, 0., 1.]);
        assert!(hungarian(&m).is_err());
    }

    #[test]
    fn rectangular_padding() {
        let m = DMatrix::from_row_slice(2, 3, &[5., 1., 9., 2., 8., 0.5]);
        let (p, c) = hungarian_rect(&m, None).unwrap();
        assert_eq!(p, vec![Some(1), Some(2)]);
        assert_eq!(c, 1.5);
        let (p, _) = hungarian_rect(&m.transpose(), None).unwrap();
        assert_eq!(p.iter().filter(|x| x.is_none()).count(), 1);
    }

    proptest! {
        #[test]
        fn matches_brute_force(n in 1usize..=6, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(0..6) as f64);
            let (p, c) = hungarian(&m).unwrap();
            let (bp, bc) = brute(&m);
            prop_assert_eq!(c, bc);
            prop_assert_eq!(p.clone(), bp);
            let identity: f64 = (0..n).map(|i| m[(i, i)]).sum();
            prop_assert!(c <= identity);
        }

        #[test]
        fn real_valued_matches_brute_force(n in 1usize..=6, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>());
            let (_, c) = hungarian(&m).unwrap();
            prop_assert!((c - brute(&m).1).abs() < 1e-12);
        }
    }

    fn random_scores(rng: &mut ChaCha8Rng, n: usize, k: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, k, |_, _| rng.random::<f64>() - 0.5)
    }

    #[test]
    fn recovers_permutation_and_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_scores(&mut rng, 200, 4);
        let order = [2usize, 0, 3, 1];
        let b = DMatrix::from_fn(200, 4, |i, j| {
            let v = a[(i, order[j])];
            if j == 1 { -v } else { v }
        });
        let asg = align_matrices(&a, &b).unwrap();
        // Column order[j] of A is column j of B.
        for (j, &src) in order.iter().enumerate() {
            assert_eq!(asg.permutation[src], Some(j));
            assert_eq!(asg.signs[src], if j == 1 { -1 } else { 1 });
        }
        assert!((asg.mean_abs_r - 1.0).abs() < 1e-9);
        assert!((asg.objective - asg.per_pair_r.iter().map(|r| r.abs()).sum::<f64>()).abs() < 1e-15);
        let aligned = asg.apply(&b);
        assert!((aligned - &a).amax() < 1e-12);
    }

    #[test]
    fn independent_noise_has_low_alignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_scores(&mut rng, 1000, 5);
        let b = random_scores(&mut rng, 1000, 5);
        assert!(align_matrices(&a, &b).unwrap().mean_abs_r < 0.2);
    }

    #[test]
    fn self_alignment_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_scores(&mut rng, 50, 3);
        let b = random_scores(&mut rng, 50, 3);
        let s = align_matrices(&a, &a).unwrap();
        assert_eq!(s.permutation, vec![Some(0), Some(1), Some(2)]);
        assert!(s.per_pair_r.iter().all(|r| (r - 1.0).abs() < 1e-12));
        let ab = align_matrices(&a, &b).unwrap().objective;
        let ba = align_matrices(&b, &a).unwrap().objective;
        assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn single_factor() {
        let a = DMatrix::from_column_slice(4, 1, &[1., 2., 3., 4.]);
        let b = DMatrix::from_column_slice(4, 1, &[4., 3., 1., 2.]);
        let asg = align_matrices(&a, &b).unwrap();
        let r = pearson(&[1., 2., 3., 4.], &[4., 3., 1., 2.]).unwrap();
        assert!((asg.mean_abs_r - r.abs()).abs() < 1e-15);
        assert_eq!(asg.signs, vec![-1]);
    }

    #[test]
    fn user_mismatch_is_an_error() {
        let a = DMatrix::zeros(3, 2);
        let b = DMatrix::zeros(4, 2);
        assert!(matches!(align_matrices(&a, &b), Err(Error::UserMismatch(_))));
    }
}
