//! Exact linear algebra: fraction-free sparse integer elimination for the
//! large constraint systems, dense rational/[`Scalar`] matrices for the small
//! basis changes.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::scalar::{Rational, Scalar};

/// Sparse integer row: strictly increasing column indices, no zeros.
pub type IntRow = Vec<(usize, BigInt)>;

fn content_normalize(row: &mut IntRow) {
    let mut g = BigInt::zero();
    for (_, v) in row.iter() {
        g = g.gcd(v);
        if g.is_one() {
            break;
        }
    }
    if row.first().is_some_and(|(_, v)| v.is_negative()) {
        g = -g;
    }
    if !g.is_zero() && !g.is_one() {
        for (_, v) in row.iter_mut() {
            *v /= &g;
        }
    }
}

/// `a·r − b·s`, both sparse.
fn combine(r: &IntRow, a: &BigInt, s: &IntRow, b: &BigInt) -> IntRow {
    let mut out = Vec::with_capacity(r.len() + s.len());
    let (mut i, mut j) = (0, 0);
    while i < r.len() || j < s.len() {
        let ci = r.get(i).map_or(usize::MAX, |e| e.0);
        let cj = s.get(j).map_or(usize::MAX, |e| e.0);
        if ci < cj {
            out.push((ci, a * &r[i].1));
            i += 1;
        } else if cj < ci {
            out.push((cj, -(b * &s[j].1)));
            j += 1;
        } else {
            let v = a * &r[i].1 - b * &s[j].1;
            if !v.is_zero() {
                out.push((ci, v));
            }
            i += 1;
            j += 1;
        }
    }
    out
}

/// Converts a rational sparse row to a primitive integer row.
pub fn integer_row(row: &BTreeMap<usize, Rational>) -> IntRow {
    let mut lcm = BigInt::one();
    for v in row.values() {
        lcm = lcm.lcm(v.denom());
    }
    let mut out: IntRow = row
        .iter()
        .filter(|(_, v)| !v.is_zero())
        .map(|(c, v)| (*c, (v * Rational::from_integer(lcm.clone())).to_integer()))
        .collect();
    content_normalize(&mut out);
    out
}

/// Row echelon form built incrementally; each pivot row is keyed by its
/// leading column. Pivoting is on the first nonzero entry only.
#[derive(Clone, Debug, Default)]
pub struct Echelon {
    ncols: usize,
    pivots: BTreeMap<usize, IntRow>,
}

impl Echelon {
    pub fn new(ncols: usize) -> Self {
        Echelon {
            ncols,
            pivots: BTreeMap::new(),
        }
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    pub fn nullity(&self) -> usize {
        self.ncols - self.rank()
    }

    /// Reduces `row` until its leading column is not a pivot column. The
    /// result is empty exactly when `row` lies in the row span.
    pub fn reduce(&self, mut row: IntRow) -> IntRow {
        while let Some((lead, lv)) = row.first().cloned() {
            let Some(prow) = self.pivots.get(&lead) else {
                break;
            };
            let pv = &prow[0].1;
            let g = pv.gcd(&lv);
            row = combine(&row, &(pv / &g), prow, &(&lv / &g));
            content_normalize(&mut row);
        }
        row
    }

    /// Returns true if the row was independent.
    pub fn insert(&mut self, row: IntRow) -> bool {
        let row = self.reduce(row);
        match row.first() {
            None => false,
            Some((lead, _)) => {
                self.pivots.insert(*lead, row);
                true
            }
        }
    }

    pub fn contains(&self, row: IntRow) -> bool {
        self.reduce(row).is_empty()
    }

    /// Integer basis of the right nullspace, one vector per free column in
    /// increasing order.
    pub fn nullspace(&self) -> Vec<Vec<BigInt>> {
        // Back-substitute to reduced form: pivot rows touch only their own
        // pivot column and free columns.
        let mut reduced: BTreeMap<usize, IntRow> = BTreeMap::new();
        for (&lead, row) in self.pivots.iter().rev() {
            let mut row = row.clone();
            loop {
                let hit = row
                    .iter()
                    .skip(1)
                    .find(|(c, _)| reduced.contains_key(c))
                    .cloned();
                let Some((c, v)) = hit else { break };
                let prow = &reduced[&c];
                let pv = &prow[0].1;
                let g = pv.gcd(&v);
                row = combine(&row, &(pv / &g), prow, &(&v / &g));
                content_normalize(&mut row);
            }
            reduced.insert(lead, row);
        }
        let free: Vec<usize> = (0..self.ncols)
            .filter(|c| !self.pivots.contains_key(c))
            .collect();
        free.iter()
            .map(|&f| {
                let mut v: BTreeMap<usize, Rational> = BTreeMap::new();
                v.insert(f, Rational::one());
                for (&lead, row) in &reduced {
                    if let Some((_, cf)) = row.iter().find(|(c, _)| *c == f) {
                        v.insert(lead, -Rational::new(cf.clone(), row[0].1.clone()));
                    }
                }
                let ints = integer_row(&v);
                let mut dense = vec![BigInt::zero(); self.ncols];
                for (c, x) in ints {
                    dense[c] = x;
                }
                dense
            })
            .collect()
    }
}

/// Rank of a set of rational vectors.
pub fn rank_of_rows(rows: &[Vec<Rational>]) -> usize {
    let ncols = rows.first().map_or(0, |r| r.len());
    let mut ech = Echelon::new(ncols);
    for r in rows {
        let sparse: BTreeMap<usize, Rational> = r
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_zero())
            .map(|(i, v)| (i, v.clone()))
            .collect();
        ech.insert(integer_row(&sparse));
    }
    ech.rank()
}

pub type RMatrix = Vec<Vec<Rational>>;

pub fn rmatrix_identity(n: usize) -> RMatrix {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        Rational::one()
                    } else {
                        Rational::zero()
                    }
                })
                .collect()
        })
        .collect()
}

pub fn rmatrix_mul(a: &RMatrix, b: &RMatrix) -> RMatrix {
    let n = a.len();
    let m = b.first().map_or(0, |r| r.len());
    let inner = b.len();
    let mut out = vec![vec![Rational::zero(); m]; n];
    for i in 0..n {
        for k in 0..inner {
            if a[i][k].is_zero() {
                continue;
            }
            for j in 0..m {
                if !b[k][j].is_zero() {
                    out[i][j] += &a[i][k] * &b[k][j];
                }
            }
        }
    }
    out
}

pub fn rmatrix_transpose(a: &RMatrix) -> RMatrix {
    let m = a.first().map_or(0, |r| r.len());
    (0..m)
        .map(|j| a.iter().map(|row| row[j].clone()).collect())
        .collect()
}

/// Inertia (positive, negative, zero) of a symmetric rational matrix by
/// congruence diagonalization.
pub fn inertia(sym: &RMatrix) -> (usize, usize, usize) {
    let mut a = sym.clone();
    let n = a.len();
    let (mut pos, mut neg) = (0, 0);
    let mut active: Vec<usize> = (0..n).collect();
    while let Some(&first) = active.first() {
        let _ = first;
        let pivot = active.iter().copied().find(|&i| !a[i][i].is_zero());
        let pivot = match pivot {
            Some(i) => i,
            None => {
                // zero diagonal: find off-diagonal a_ij and replace e_i by e_i + e_j
                let pair = active
                    .iter()
                    .flat_map(|&i| active.iter().map(move |&j| (i, j)))
                    .find(|&(i, j)| i != j && !a[i][j].is_zero());
                let Some((i, j)) = pair else { break };
                for c in 0..n {
                    let v = a[j][c].clone();
                    a[i][c] += v;
                }
                for r in 0..n {
                    let v = a[r][j].clone();
                    a[r][i] += v;
                }
                i
            }
        };
        let d = a[pivot][pivot].clone();
        if d.is_positive() {
            pos += 1;
        } else {
            neg += 1;
        }
        for &r in &active {
            if r == pivot || a[r][pivot].is_zero() {
                continue;
            }
            let f = &a[r][pivot] / &d;
            for c in 0..n {
                let v = &f * &a[pivot][c];
                a[r][c] -= v;
            }
        }
        for &c in &active {
            if c != pivot {
                a[pivot][c] = Rational::zero();
            }
        }
        for &r in &active {
            if r != pivot {
                a[r][pivot] = Rational::zero();
            }
        }
        active.retain(|&i| i != pivot);
    }
    (pos, neg, n - pos - neg)
}

pub type SMatrix = Vec<Vec<Scalar>>;

pub fn smatrix_identity(n: usize) -> SMatrix {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        Scalar::one()
                    } else {
                        Scalar::zero()
                    }
                })
                .collect()
        })
        .collect()
}

pub fn smatrix_zero(n: usize, m: usize) -> SMatrix {
    vec![vec![Scalar::zero(); m]; n]
}

pub fn smatrix_mul(a: &SMatrix, b: &SMatrix) -> SMatrix {
    let n = a.len();
    let m = b.first().map_or(0, |r| r.len());
    let inner = b.len();
    let mut out = smatrix_zero(n, m);
    for i in 0..n {
        for k in 0..inner {
            if a[i][k].is_zero() {
                continue;
            }
            for j in 0..m {
                if !b[k][j].is_zero() {
                    out[i][j] = &out[i][j] + &(&a[i][k] * &b[k][j]);
                }
            }
        }
    }
    out
}

pub fn smatrix_transpose(a: &SMatrix) -> SMatrix {
    let m = a.first().map_or(0, |r| r.len());
    (0..m)
        .map(|j| a.iter().map(|row| row[j].clone()).collect())
        .collect()
}

/// Gauss–Jordan inverse. Exact matrices pivot on the first nonzero entry;
/// matrices with any float entry use partial pivoting and treat pivots below
/// `1e-13` (relative to the largest entry) as singular.
pub fn smatrix_inverse(a: &SMatrix) -> Option<SMatrix> {
    let n = a.len();
    let exact = a.iter().flatten().all(Scalar::is_exact);
    let scale = a
        .iter()
        .flatten()
        .map(|v| v.to_f64().abs())
        .fold(0.0f64, f64::max);
    let mut m = a.clone();
    let mut inv = smatrix_identity(n);
    for col in 0..n {
        let pivot = if exact {
            (col..n).find(|&r| !m[r][col].is_zero())?
        } else {
            let r = (col..n).max_by(|&x, &y| {
                m[x][col]
                    .to_f64()
                    .abs()
                    .total_cmp(&m[y][col].to_f64().abs())
            })?;
            if m[r][col].to_f64().abs() <= 1e-13 * scale.max(1.0) {
                return None;
            }
            r
        };
        m.swap(col, pivot);
        inv.swap(col, pivot);
        let p = m[col][col].clone();
        let pinv = p.recip()?;
        for c in 0..n {
            m[col][c] = &m[col][c] * &pinv;
            inv[col][c] = &inv[col][c] * &pinv;
        }
        for r in 0..n {
            if r == col || m[r][col].is_zero() {
                continue;
            }
            let f = m[r][col].clone();
            for c in 0..n {
                let a1 = &f * &m[col][c];
                let a2 = &f * &inv[col][c];
                m[r][c] = &m[r][c] - &a1;
                inv[r][c] = &inv[r][c] - &a2;
            }
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{int, rat};

    fn row(v: &[(usize, i64)]) -> IntRow {
        v.iter().map(|(c, x)| (*c, BigInt::from(*x))).collect()
    }

    #[test]
    fn nullspace_of_small_system() {
        // x + y + z = 0, 2x - z = 0
        let mut e = Echelon::new(3);
        assert!(e.insert(row(&[(0, 1), (1, 1), (2, 1)])));
        assert!(e.insert(row(&[(0, 2), (2, -1)])));
        assert!(!e.insert(row(&[(0, 3), (1, 1)])));
        assert_eq!(e.rank(), 2);
        let ns = e.nullspace();
        assert_eq!(ns.len(), 1);
        let v: Vec<i64> = ns[0].iter().map(|x| i64::try_from(x).unwrap()).collect();
        assert_eq!(v[0] + v[1] + v[2], 0);
        assert_eq!(2 * v[0] - v[2], 0);
        assert!(v.iter().any(|&x| x != 0));
    }

    #[test]
    fn membership() {
        let mut e = Echelon::new(4);
        e.insert(row(&[(1, 2), (3, 1)]));
        e.insert(row(&[(0, 1), (1, 1)]));
        assert!(e.contains(row(&[(0, 2), (1, 6), (3, 2)])));
        assert!(!e.contains(row(&[(2, 1)])));
    }

    #[test]
    fn inertia_of_hyperbolic_plane() {
        let m = vec![vec![int(0), int(1)], vec![int(1), int(0)]];
        assert_eq!(inertia(&m), (1, 1, 0));
        let d = vec![
            vec![int(2), int(0), int(0)],
            vec![int(0), int(0), int(0)],
            vec![int(0), int(0), int(-3)],
        ];
        assert_eq!(inertia(&d), (1, 1, 1));
    }

    #[test]
    fn exact_inverse() {
        let a: SMatrix = vec![
            vec![Scalar::Exact(int(0)), Scalar::Exact(int(1))],
            vec![Scalar::Exact(int(1)), Scalar::Exact(rat(1, 2))],
        ];
        let inv = smatrix_inverse(&a).unwrap();
        assert_eq!(smatrix_mul(&a, &inv), smatrix_identity(2));
        assert!(inv.iter().flatten().all(Scalar::is_exact));
        let singular: SMatrix = vec![
            vec![Scalar::one(), Scalar::one()],
            vec![Scalar::one(), Scalar::one()],
        ];
        assert!(smatrix_inverse(&singular).is_none());
    }
}
