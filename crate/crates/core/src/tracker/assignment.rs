//! Rectangular linear assignment (Hungarian method, shortest augmenting paths).

use nalgebra::DMatrix;

/// Minimum-cost assignment of rows to columns. Every row is assigned when
/// `rows <= cols`, every column otherwise. Returns the column of each row.
pub fn solve(cost: &DMatrix<f64>) -> Vec<Option<usize>> {
    let (n, m) = cost.shape();
    if n == 0 || m == 0 {
        return vec![None; n];
    }
    if n > m {
        let cols = solve(&cost.transpose());
        let mut rows = vec![None; n];
        for (c, r) in cols.into_iter().enumerate() {
            if let Some(r) = r {
                rows[r] = Some(c);
            }
        }
        return rows;
    }

    // potentials and matching are 1-based, index 0 is the virtual source
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
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
    let mut rows = vec![None; n];
    for j in 1..=m {
        if p[j] != 0 {
            rows[p[j] - 1] = Some(j - 1);
        }
    }
    rows
}

pub fn total_cost(cost: &DMatrix<f64>, assignment: &[Option<usize>]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| cost[(r, c)]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive minimum over injective maps from the smaller side.
    pub(crate) fn brute_force(cost: &DMatrix<f64>) -> f64 {
        let (n, m) = cost.shape();
        if n > m {
            return brute_force(&cost.transpose());
        }
        fn rec(cost: &DMatrix<f64>, row: usize, used: &mut Vec<bool>) -> f64 {
            if row == cost.nrows() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for c in 0..cost.ncols() {
                if !used[c] {
                    used[c] = true;
                    best = best.min(cost[(row, c)] + rec(cost, row + 1, used));
                    used[c] = false;
                }
            }
            best
        }
        rec(cost, 0, &mut vec![false; m])
    }

    #[test]
    fn two_by_two() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let a = solve(&c);
        assert_eq!(a, vec![Some(0), Some(1)]);
        assert_eq!(total_cost(&c, &a), 2.0);
    }

    #[test]
    fn empty_and_rectangular() {
        assert_eq!(solve(&DMatrix::zeros(3, 0)), vec![None; 3]);
        let c = DMatrix::from_row_slice(3, 2, &[5.0, 1.0, 1.0, 5.0, 0.5, 0.5]);
        let a = solve(&c);
        assert_eq!(a.iter().filter(|x| x.is_some()).count(), 2);
        assert_eq!(total_cost(&c, &a), 1.5);
    }

    #[test]
    fn matches_brute_force_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let n = rng.random_range(1..=6);
            let m = rng.random_range(1..=6);
            let c = DMatrix::from_fn(n, m, |_, _| rng.random_range(0.0..10.0));
            let a = solve(&c);
            let mut cols: Vec<_> = a.iter().flatten().collect();
            cols.sort();
            cols.dedup();
            assert_eq!(cols.len(), n.min(m));
            assert!((total_cost(&c, &a) - brute_force(&c)).abs() < 1e-9);
        }
    }
}
