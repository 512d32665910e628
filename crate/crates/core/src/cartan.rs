//! Cartan matrix of SU(N+1), the subset functional `Λ_J` and the sharp
//! threshold predicate.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest rank for which `Λ_J` is enumerated over all subsets.
pub const MAX_SUBSET_RANK: usize = 12;

/// The sharp coupling threshold `4π`.
pub const THRESHOLD: f64 = 4.0 * PI;

/// Coupling matrix `K` together with its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct CartanMatrix {
    rank: usize,
    entries: Vec<f64>,
    inverse: Vec<f64>,
}

impl CartanMatrix {
    /// Tridiagonal `K` with 2 on the diagonal and -1 beside it; the inverse
    /// uses `(K^-1)_ij = min(i,j) (N+1-max(i,j)) / (N+1)` (1-based).
    pub fn su(rank: usize) -> Result<Self> {
        if rank == 0 {
            return Err(Error::InvalidArgument("rank must be at least 1".into()));
        }
        let mut entries = vec![0.0; rank * rank];
        let mut inverse = vec![0.0; rank * rank];
        let np1 = (rank + 1) as f64;
        for i in 0..rank {
            for j in 0..rank {
                entries[i * rank + j] = match i.abs_diff(j) {
                    0 => 2.0,
                    1 => -1.0,
                    _ => 0.0,
                };
                let (a, b) = (i.min(j) + 1, i.max(j) + 1);
                inverse[i * rank + j] = (a * (rank + 1 - b)) as f64 / np1;
            }
        }
        Ok(Self {
            rank,
            entries,
            inverse,
        })
    }

    /// Builds a matrix from arbitrary entries, inverting it by Gaussian
    /// elimination. Intended for fault-injection tests of the identity
    /// suite; nothing checks that the result is a Cartan matrix.
    #[doc(hidden)]
    pub fn from_entries_unchecked(rank: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != rank * rank || rank == 0 {
            return Err(Error::InvalidArgument("bad matrix shape".into()));
        }
        let inverse = invert(rank, &entries)?;
        Ok(Self {
            rank,
            entries,
            inverse,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Entry `a_ij` (0-based).
    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.rank + j]
    }

    /// Entry `(K^-1)_ij` (0-based).
    pub fn inv(&self, i: usize, j: usize) -> f64 {
        self.inverse[i * self.rank + j]
    }

    pub fn determinant(&self) -> f64 {
        determinant(self.rank, &self.entries)
    }

    /// `K x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rank)
            .map(|i| (0..self.rank).map(|j| self.a(i, j) * x[j]).sum())
            .collect()
    }

    /// `K^-1 x`.
    pub fn apply_inverse(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rank)
            .map(|i| (0..self.rank).map(|j| self.inv(i, j) * x[j]).sum())
            .collect()
    }

    /// `x^T K y`.
    pub fn quadratic_form(&self, x: &[f64], y: &[f64]) -> f64 {
        let ky = self.apply(y);
        x.iter().zip(&ky).map(|(a, b)| a * b).sum()
    }

    /// `x^T K^-1 x`.
    pub fn quadratic_form_inverse(&self, x: &[f64]) -> f64 {
        let kx = self.apply_inverse(x);
        x.iter().zip(&kx).map(|(a, b)| a * b).sum()
    }

    /// Smallest eigenvalue, `2 - 2 cos(π / (N+1))` for the SU(N+1) matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        2.0 - 2.0 * (PI / (self.rank + 1) as f64).cos()
    }
}

fn determinant(n: usize, m: &[f64]) -> f64 {
    let mut a = m.to_vec();
    let mut det = 1.0;
    for c in 0..n {
        let p = (c..n)
            .max_by(|&x, &y| a[x * n + c].abs().total_cmp(&a[y * n + c].abs()))
            .unwrap();
        if a[p * n + c] == 0.0 {
            return 0.0;
        }
        if p != c {
            for k in 0..n {
                a.swap(p * n + k, c * n + k);
            }
            det = -det;
        }
        det *= a[c * n + c];
        for r in (c + 1)..n {
            let f = a[r * n + c] / a[c * n + c];
            for k in c..n {
                a[r * n + k] -= f * a[c * n + k];
            }
        }
    }
    det
}

fn invert(n: usize, m: &[f64]) -> Result<Vec<f64>> {
    let mut a = m.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for c in 0..n {
        let p = (c..n)
            .max_by(|&x, &y| a[x * n + c].abs().total_cmp(&a[y * n + c].abs()))
            .unwrap();
        if a[p * n + c].abs() < 1e-14 {
            return Err(Error::InvalidArgument("singular matrix".into()));
        }
        for k in 0..n {
            a.swap(p * n + k, c * n + k);
            inv.swap(p * n + k, c * n + k);
        }
        let d = a[c * n + c];
        for k in 0..n {
            a[c * n + k] /= d;
            inv[c * n + k] /= d;
        }
        for r in 0..n {
            if r != c {
                let f = a[r * n + c];
                for k in 0..n {
                    a[r * n + k] -= f * a[c * n + k];
                    inv[r * n + k] -= f * inv[c * n + k];
                }
            }
        }
    }
    Ok(inv)
}

/// Coupling constants `M_i > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams(Vec<f64>);

impl CouplingParams {
    pub fn new(m: Vec<f64>) -> Result<Self> {
        if m.is_empty() {
            return Err(Error::InvalidArgument("no couplings given".into()));
        }
        if let Some(bad) = m.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidArgument(format!("coupling {bad} must be positive")));
        }
        Ok(Self(m))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn check_rank(&self, k: &CartanMatrix) -> Result<()> {
        if self.rank() != k.rank() {
            return Err(Error::RankMismatch {
                expected: k.rank(),
                got: self.rank(),
            });
        }
        Ok(())
    }
}

/// `Λ_J = 8π Σ_{j∈J} M_j - Σ_{i,j∈J} a_ij M_i M_j` for a 1-based index set.
pub fn lambda_j(m: &CouplingParams, k: &CartanMatrix, subset: &[usize]) -> Result<f64> {
    m.check_rank(k)?;
    if subset.is_empty() {
        return Err(Error::InvalidArgument("empty index set".into()));
    }
    let mv = m.values();
    let mut idx = Vec::with_capacity(subset.len());
    for &j in subset {
        if j == 0 || j > k.rank() {
            return Err(Error::InvalidArgument(format!("index {j} out of range 1..={}", k.rank())));
        }
        if idx.contains(&(j - 1)) {
            return Err(Error::InvalidArgument(format!("index {j} repeated")));
        }
        idx.push(j - 1);
    }
    let linear: f64 = idx.iter().map(|&j| mv[j]).sum::<f64>() * 8.0 * PI;
    let quad: f64 = idx
        .iter()
        .flat_map(|&i| idx.iter().map(move |&j| (i, j)))
        .map(|(i, j)| k.a(i, j) * mv[i] * mv[j])
        .sum();
    Ok(linear - quad)
}

/// `Λ_J` for every nonempty subset, keyed by bitmask (bit `j-1` for index `j`).
pub fn lambda_all_subsets(m: &CouplingParams, k: &CartanMatrix) -> Result<Vec<(u32, f64)>> {
    let n = k.rank();
    if n > MAX_SUBSET_RANK {
        return Err(Error::InvalidArgument(format!(
            "subset enumeration limited to rank {MAX_SUBSET_RANK}"
        )));
    }
    (1u32..(1 << n))
        .map(|mask| {
            let subset: Vec<usize> = (0..n).filter(|b| mask & (1 << b) != 0).map(|b| b + 1).collect();
            lambda_j(m, k, &subset).map(|v| (mask, v))
        })
        .collect()
}

/// True iff every `M_j <= 4π`, compared exactly.
pub fn sharp_condition(m: &CouplingParams) -> bool {
    m.values().iter().all(|&v| v <= THRESHOLD)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cp(v: &[f64]) -> CouplingParams {
        CouplingParams::new(v.to_vec()).unwrap()
    }

    #[test]
    fn rank_one_and_two() {
        let k1 = CartanMatrix::su(1).unwrap();
        assert_eq!(k1.a(0, 0), 2.0);
        assert_eq!(k1.inv(0, 0), 0.5);

        let k2 = CartanMatrix::su(2).unwrap();
        assert_eq!([k2.a(0, 0), k2.a(0, 1), k2.a(1, 0), k2.a(1, 1)], [2.0, -1.0, -1.0, 2.0]);
        let third = 1.0 / 3.0;
        assert!((k2.inv(0, 0) - 2.0 * third).abs() < 1e-15);
        assert!((k2.inv(0, 1) - third).abs() < 1e-15);
        assert!((k2.inv(1, 1) - 2.0 * third).abs() < 1e-15);
        assert!(CartanMatrix::su(0).is_err());
    }

    #[test]
    fn structure_and_inverse_against_direct_solve() {
        for n in 1..=8 {
            let k = CartanMatrix::su(n).unwrap();
            let solved = invert(n, &k.entries).unwrap();
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(k.a(i, j), k.a(j, i));
                    let expected = match i.abs_diff(j) {
                        0 => 2.0,
                        1 => -1.0,
                        _ => 0.0,
                    };
                    assert_eq!(k.a(i, j), expected);
                    assert!((k.inv(i, j) - solved[i * n + j]).abs() < 1e-12);
                    let prod: f64 = (0..n).map(|l| k.a(i, l) * k.inv(l, j)).sum();
                    let id = if i == j { 1.0 } else { 0.0 };
                    assert!((prod - id).abs() < 1e-12);
                }
            }
            // leading principal minors equal k + 1
            for m in 1..=n {
                let sub: Vec<f64> = (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| k.a(i, j)).collect();
                assert!((determinant(m, &sub) - (m + 1) as f64).abs() < 1e-10);
            }
            assert!(k.min_eigenvalue() > 0.0);
        }
    }

    #[test]
    fn lambda_examples() {
        let k = CartanMatrix::su(2).unwrap();
        let pi2 = PI * PI;
        let m = cp(&[4.0 * PI, 4.0 * PI]);
        assert!(lambda_j(&m, &k, &[1]).unwrap().abs() < 1e-10);
        assert!((lambda_j(&m, &k, &[1, 2]).unwrap() - 32.0 * pi2).abs() < 1e-10);
        let m = cp(&[5.0 * PI, 3.0 * PI]);
        assert!((lambda_j(&m, &k, &[1]).unwrap() + 10.0 * pi2).abs() < 1e-10);
        assert!(lambda_j(&m, &k, &[]).is_err());
        assert!(lambda_j(&m, &k, &[3]).is_err());
        assert!(lambda_j(&m, &k, &[0]).is_err());
        assert!(lambda_j(&cp(&[1.0]), &k, &[1]).is_err());
    }

    #[test]
    fn lambda_singleton_closed_form() {
        let k = CartanMatrix::su(3).unwrap();
        let m = cp(&[1.0, 7.0, 13.0]);
        for j in 1..=3 {
            let mj = m.values()[j - 1];
            let expected = 2.0 * mj * (4.0 * PI - mj);
            assert!((lambda_j(&m, &k, &[j]).unwrap() - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn lambda_symmetric_under_block_reversal() {
        // Reversing a contiguous block maps K onto itself.
        let k = CartanMatrix::su(4).unwrap();
        let m = cp(&[1.0, 2.0, 3.0, 4.0]);
        let rev = cp(&[4.0, 3.0, 2.0, 1.0]);
        let a = lambda_j(&m, &k, &[1, 2, 3]).unwrap();
        let b = lambda_j(&rev, &k, &[2, 3, 4]).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn sharp_condition_examples() {
        assert!(sharp_condition(&cp(&[4.0 * PI, 4.0 * PI])));
        assert!(!sharp_condition(&cp(&[4.0 * PI + 1e-6, PI])));
        assert!(sharp_condition(&cp(&[PI, PI, PI])));
    }

    #[test]
    fn sharp_condition_equivalent_to_all_subsets_nonnegative() {
        let k = CartanMatrix::su(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let m = cp(&[rng.gen_range(1e-9..6.0 * PI), rng.gen_range(1e-9..6.0 * PI)]);
            let all = lambda_all_subsets(&m, &k).unwrap();
            let all_nonneg = all.iter().all(|&(_, v)| v >= 0.0);
            assert_eq!(sharp_condition(&m), all_nonneg, "{m:?}");
        }
    }

    #[test]
    fn subset_enumeration_limited() {
        let k = CartanMatrix::su(13).unwrap();
        let m = cp(&[1.0; 13]);
        assert!(lambda_all_subsets(&m, &k).is_err());
        let k = CartanMatrix::su(3).unwrap();
        assert_eq!(lambda_all_subsets(&cp(&[1.0; 3]), &k).unwrap().len(), 7);
    }

    #[test]
    fn couplings_must_be_positive() {
        assert!(CouplingParams::new(vec![1.0, 0.0]).is_err());
        assert!(CouplingParams::new(vec![]).is_err());
        assert!(CouplingParams::new(vec![f64::NAN]).is_err());
    }
}
