//! Algebraic k-models: the standard models 𝔐_{6+4p,k}, the affine models
//! 𝔄_{3+2p,k}, models extracted from a metric at a point, and the basis
//! change normalizing an extracted model to the standard one.
//!
//! Basis order is X, Y, Z_1..Z_p, Ỹ, Z̃_1..Z̃_p followed by the starred duals,
//! matching [`Coordinate::index`].

use std::collections::BTreeMap;

use serde_json::{json, Value};
use thiserror::Error;

use crate::exprs::{Coordinate, Expr, Point};
use crate::geometry::{curvature_derivatives, evaluate_tensor, MetricField};
use crate::linalg::{
    smatrix_identity, smatrix_inverse, smatrix_mul, smatrix_transpose, smatrix_zero, SMatrix,
};
use crate::scalar::{int, scalar_from_json, scalar_json, Rational, Scalar};
use crate::tensor::{unique_permutations, SparseTensor};

/// Residual threshold for float comparisons.
pub const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("k={k} out of range 0..={max}")]
    KOutOfRange { k: usize, max: usize },
    #[error("p must be at least 1")]
    InvalidP,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("model has {have} tensors, {need} required")]
    TooFewTensors { have: usize, need: usize },
    #[error("no solution: {0}")]
    NoSolution(String),
    #[error("malformed model JSON: {0}")]
    Json(String),
}

fn check_k(p: usize, k: usize) -> Result<(), ModelError> {
    if p == 0 {
        return Err(ModelError::InvalidP);
    }
    if k > p + 2 {
        return Err(ModelError::KOutOfRange { k, max: p + 2 });
    }
    Ok(())
}

/// Inner product space with constant tensors A^0..A^k (A^i of rank 4+i).
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub p: usize,
    pub inner: SMatrix,
    pub tensors: Vec<SparseTensor<Scalar>>,
}

/// The metric-free restriction to span{X, Y, Z_i, Ỹ, Z̃_i}.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineModel {
    pub p: usize,
    pub tensors: Vec<SparseTensor<Scalar>>,
}

impl Model {
    pub fn dim(&self) -> usize {
        self.inner.len()
    }

    /// Highest derivative order carried.
    pub fn k(&self) -> usize {
        self.tensors.len() - 1
    }

    pub fn is_exact(&self) -> bool {
        self.inner.iter().flatten().all(Scalar::is_exact)
            && self
                .tensors
                .iter()
                .all(|t| t.entries().all(|(_, v)| v.is_exact()))
    }

    /// The first `k+1` tensors.
    pub fn truncate(&self, k: usize) -> Result<Model, ModelError> {
        if self.tensors.len() < k + 1 {
            return Err(ModelError::TooFewTensors {
                have: self.tensors.len(),
                need: k + 1,
            });
        }
        Ok(Model {
            p: self.p,
            inner: self.inner.clone(),
            tensors: self.tensors[..=k].to_vec(),
        })
    }

    pub fn to_affine(&self) -> AffineModel {
        let h = 3 + 2 * self.p;
        AffineModel {
            p: self.p,
            tensors: self.tensors.iter().map(|t| t.restrict(h)).collect(),
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "p": self.p,
            "k": self.k(),
            "inner": self.inner.iter().map(|r| r.iter().map(scalar_json).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "tensors": self.tensors.iter().map(tensor_json).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(v: &Value) -> Result<Model, ModelError> {
        let bad = |m: &str| ModelError::Json(m.to_string());
        let p = v["p"].as_u64().ok_or_else(|| bad("p"))? as usize;
        let inner: SMatrix = v["inner"]
            .as_array()
            .ok_or_else(|| bad("inner"))?
            .iter()
            .map(|row| {
                row.as_array()
                    .ok_or_else(|| bad("inner row"))?
                    .iter()
                    .map(|x| scalar_from_json(x).ok_or_else(|| bad("inner value")))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()?;
        let dim = inner.len();
        let tensors = v["tensors"]
            .as_array()
            .ok_or_else(|| bad("tensors"))?
            .iter()
            .map(|t| tensor_from_json(t, dim))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Model { p, inner, tensors })
    }
}

impl AffineModel {
    pub fn dim(&self) -> usize {
        3 + 2 * self.p
    }

    pub fn k(&self) -> usize {
        self.tensors.len() - 1
    }
}

fn tensor_json(t: &SparseTensor<Scalar>) -> Value {
    json!({
        "rank": t.rank(),
        "entries": t.entries().map(|(i, v)| json!({"index": i, "value": scalar_json(v)})).collect::<Vec<_>>(),
    })
}

fn tensor_from_json(v: &Value, dim: usize) -> Result<SparseTensor<Scalar>, ModelError> {
    let bad = |m: &str| ModelError::Json(m.to_string());
    let rank = v["rank"].as_u64().ok_or_else(|| bad("rank"))? as usize;
    let mut t = SparseTensor::new(dim, rank);
    for e in v["entries"].as_array().ok_or_else(|| bad("entries"))? {
        let idx: Vec<u16> = e["index"]
            .as_array()
            .ok_or_else(|| bad("index"))?
            .iter()
            .map(|x| {
                x.as_u64()
                    .filter(|&i| (i as usize) < dim)
                    .map(|i| i as u16)
                    .ok_or_else(|| bad("index value"))
            })
            .collect::<Result<_, _>>()?;
        if idx.len() != rank {
            return Err(bad("index length"));
        }
        t.set(
            idx,
            scalar_from_json(&e["value"]).ok_or_else(|| bad("value"))?,
        );
    }
    Ok(t)
}

/// The hyperbolic inner product pairing each basis vector with its dual.
pub fn hyperbolic_inner(p: usize) -> SMatrix {
    let n = Coordinate::dimension(p);
    let h = n / 2;
    let mut g = smatrix_zero(n, n);
    for i in 0..h {
        g[i][i + h] = Scalar::one();
        g[i + h][i] = Scalar::one();
    }
    g
}

/// Words (multisets of W-indices) whose orderings carry value 1 in the
/// symmetric form D^{i+2} behind A^i.
fn standard_word(p: usize, i: usize) -> Vec<Vec<u16>> {
    let y = Coordinate::Y.index(p) as u16;
    if i == 0 {
        let mut words = vec![vec![y, Coordinate::YTilde.index(p) as u16]];
        for j in 1..=p as u16 {
            words.push(vec![
                Coordinate::Z(j).index(p) as u16,
                Coordinate::ZTilde(j).index(p) as u16,
            ]);
        }
        words
    } else if i <= p {
        let mut w = vec![y; i + 1];
        w.push(Coordinate::Z(i as u16).index(p) as u16);
        vec![w]
    } else {
        vec![vec![y; i + 2]]
    }
}

fn standard_tensor(p: usize, i: usize, dim: usize) -> SparseTensor<Scalar> {
    let mut t = SparseTensor::new(dim, 4 + i);
    let one = Scalar::one();
    for word in standard_word(p, i) {
        for seq in unique_permutations(&word) {
            t.insert_curvature_pattern(0, &seq, &one);
        }
    }
    t
}

/// 𝔐_{6+4p,k}.
pub fn standard_model(p: usize, k: usize) -> Result<Model, ModelError> {
    check_k(p, k)?;
    let n = Coordinate::dimension(p);
    Ok(Model {
        p,
        inner: hyperbolic_inner(p),
        tensors: (0..=k).map(|i| standard_tensor(p, i, n)).collect(),
    })
}

/// 𝔄_{3+2p,k}.
pub fn affine_model(p: usize, k: usize) -> Result<AffineModel, ModelError> {
    Ok(standard_model(p, k)?.to_affine())
}

/// Symbolic R, ∇R, …, ∇^kR of a metric, evaluated on demand at points.
#[derive(Clone, Debug)]
pub struct ModelJet {
    metric: MetricField,
    derivatives: Vec<SparseTensor<Expr>>,
}

impl ModelJet {
    pub fn new(metric: MetricField, k: usize) -> Self {
        let derivatives = curvature_derivatives(&metric, k);
        ModelJet {
            metric,
            derivatives,
        }
    }

    pub fn metric(&self) -> &MetricField {
        &self.metric
    }

    pub fn derivatives(&self) -> &[SparseTensor<Expr>] {
        &self.derivatives
    }

    pub fn extract(&self, pt: &Point) -> Model {
        Model {
            p: self.metric.p(),
            inner: self.metric.evaluate(pt),
            tensors: self
                .derivatives
                .iter()
                .map(|t| evaluate_tensor(t, pt))
                .collect(),
        }
    }
}

/// (T_P M, g_P, R_P, …, ∇^kR_P) in the coordinate frame.
pub fn extract_model(g: &MetricField, pt: &Point, k: usize) -> Model {
    ModelJet::new(g.clone(), k).extract(pt)
}

/// Square matrix whose column j is the image of basis vector j.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMap {
    pub matrix: SMatrix,
}

impl LinearMap {
    pub fn identity(n: usize) -> Self {
        LinearMap {
            matrix: smatrix_identity(n),
        }
    }

    pub fn from_columns(cols: Vec<Vec<Scalar>>) -> Self {
        LinearMap {
            matrix: smatrix_transpose(&cols),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.len()
    }

    pub fn column(&self, j: usize) -> Vec<Scalar> {
        self.matrix.iter().map(|r| r[j].clone()).collect()
    }

    pub fn is_exact(&self) -> bool {
        self.matrix.iter().flatten().all(Scalar::is_exact)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &LinearMap) -> LinearMap {
        LinearMap {
            matrix: smatrix_mul(&self.matrix, &other.matrix),
        }
    }

    pub fn inverse(&self) -> Option<LinearMap> {
        smatrix_inverse(&self.matrix).map(|matrix| LinearMap { matrix })
    }

    pub fn transpose(&self) -> LinearMap {
        LinearMap {
            matrix: smatrix_transpose(&self.matrix),
        }
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.matrix
                .iter()
                .map(|r| Value::Array(r.iter().map(scalar_json).collect()))
                .collect(),
        )
    }
}

/// φ*T: (φ*T)(e_{i1},…) = T(φe_{i1},…).
pub fn pullback(t: &SparseTensor<Scalar>, phi: &LinearMap) -> SparseTensor<Scalar> {
    let n = phi.dim();
    let rows: Vec<Vec<(u16, Scalar)>> = (0..n)
        .map(|r| {
            (0..n)
                .filter(|&j| !phi.matrix[r][j].is_zero())
                .map(|j| (j as u16, phi.matrix[r][j].clone()))
                .collect()
        })
        .collect();
    let mut out = SparseTensor::new(n, t.rank());
    for (idx, v) in t.entries() {
        let mut partial: Vec<(Vec<u16>, Scalar)> = vec![(Vec::with_capacity(idx.len()), v.clone())];
        for &r in idx {
            let mut next = Vec::with_capacity(partial.len() * rows[r as usize].len());
            for (pi, pv) in &partial {
                for (j, c) in &rows[r as usize] {
                    let mut ni = pi.clone();
                    ni.push(*j);
                    next.push((ni, pv * c));
                }
            }
            partial = next;
        }
        for (i, val) in partial {
            out.accumulate(i, &val);
        }
    }
    out
}

/// Outcome of comparing two tensors or models.
#[derive(Clone, Debug, PartialEq)]
pub struct Residual {
    /// Max absolute deviation over all components.
    pub max_abs: f64,
    /// Every compared value was exact.
    pub exact: bool,
}

impl Residual {
    fn zero() -> Self {
        Residual {
            max_abs: 0.0,
            exact: true,
        }
    }

    fn merge(&mut self, other: &Residual) {
        self.max_abs = self.max_abs.max(other.max_abs);
        self.exact &= other.exact;
    }

    /// Exact zero for exact comparisons, below [`TOLERANCE`] otherwise.
    pub fn passes(&self) -> bool {
        if self.exact {
            self.max_abs == 0.0
        } else {
            self.max_abs < TOLERANCE
        }
    }
}

pub fn tensor_residual(a: &SparseTensor<Scalar>, b: &SparseTensor<Scalar>) -> Residual {
    let mut r = Residual::zero();
    let keys: std::collections::BTreeSet<&Vec<u16>> = a
        .entries()
        .map(|(k, _)| k)
        .chain(b.entries().map(|(k, _)| k))
        .collect();
    for k in keys {
        let x = a.value(k);
        let y = b.value(k);
        let d = &x - &y;
        r.exact &= d.is_exact();
        if !d.is_zero() {
            // exact nonzero differences still register as failures
            r.max_abs = r.max_abs.max(d.to_f64().abs().max(if d.is_exact() {
                f64::MIN_POSITIVE
            } else {
                0.0
            }));
        }
    }
    r
}

fn matrix_residual(a: &SMatrix, b: &SMatrix) -> Residual {
    let mut r = Residual::zero();
    for (ra, rb) in a.iter().zip(b) {
        for (x, y) in ra.iter().zip(rb) {
            let d = x - y;
            r.exact &= d.is_exact();
            if !d.is_zero() {
                r.max_abs = r.max_abs.max(d.to_f64().abs().max(if d.is_exact() {
                    f64::MIN_POSITIVE
                } else {
                    0.0
                }));
            }
        }
    }
    r
}

#[derive(Clone, Debug, PartialEq)]
pub struct IsoCheck {
    pub ok: bool,
    pub residual: Residual,
}

/// Checks φ*⟨·,·⟩₂ = ⟨·,·⟩₁ and φ*A^i₂ = A^i₁ for every i.
pub fn verify_isomorphism(phi: &LinearMap, m1: &Model, m2: &Model) -> Result<IsoCheck, ModelError> {
    if phi.dim() != m1.dim() || m1.dim() != m2.dim() {
        return Err(ModelError::DimensionMismatch(phi.dim(), m2.dim()));
    }
    if m1.tensors.len() != m2.tensors.len() {
        return Err(ModelError::TooFewTensors {
            have: m1.tensors.len().min(m2.tensors.len()),
            need: m1.tensors.len().max(m2.tensors.len()),
        });
    }
    let pulled = smatrix_mul(
        &smatrix_transpose(&phi.matrix),
        &smatrix_mul(&m2.inner, &phi.matrix),
    );
    let mut res = matrix_residual(&pulled, &m1.inner);
    for (t1, t2) in m1.tensors.iter().zip(&m2.tensors) {
        res.merge(&tensor_residual(&pullback(t2, phi), t1));
    }
    Ok(IsoCheck {
        ok: res.passes(),
        residual: res,
    })
}

/// Affine version: tensors only.
pub fn verify_affine_isomorphism(
    phi: &LinearMap,
    m1: &AffineModel,
    m2: &AffineModel,
) -> Result<IsoCheck, ModelError> {
    if phi.dim() != m1.dim() || m1.dim() != m2.dim() {
        return Err(ModelError::DimensionMismatch(phi.dim(), m2.dim()));
    }
    let mut res = Residual::zero();
    for (t1, t2) in m1.tensors.iter().zip(&m2.tensors) {
        res.merge(&tensor_residual(&pullback(t2, phi), t1));
    }
    Ok(IsoCheck {
        ok: res.passes(),
        residual: res,
    })
}

/// Basis change found by [`normalize_to_standard`]: `map` sends the standard
/// basis to the normalized basis of the input model, so
/// `verify_isomorphism(map, standard, input)` holds.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    pub map: LinearMap,
    pub residual: Residual,
    /// Scaling of X.
    pub alpha: Scalar,
    /// α², exact whenever the input model is.
    pub alpha_sq: Scalar,
    /// Column 0 of `map` divided by α.
    pub x_direction: Vec<Scalar>,
    /// Scaling of Y.
    pub epsilon0: Scalar,
}

fn exact_or_float_sqrt(x: &Scalar) -> Option<Scalar> {
    x.sqrt()
}

/// Chooses (α, ε0) with α²ε0^{p+3}d = 1, preferring exact values.
fn scalings_p_plus_1(p: usize, d: &Scalar) -> Result<(Scalar, Scalar), ModelError> {
    if d.is_zero() {
        return Err(ModelError::NoSolution(
            "order p+1 component vanishes".into(),
        ));
    }
    let inv = d.recip().unwrap();
    if d.signum() > 0 {
        if let Some(a @ Scalar::Exact(_)) = exact_or_float_sqrt(&inv) {
            return Ok((a, Scalar::one()));
        }
    }
    if let Some(e @ Scalar::Exact(_)) = inv.real_root(p as u32 + 3) {
        return Ok((Scalar::one(), e));
    }
    if p.is_multiple_of(2) && d.is_exact() {
        // ε0 = d gives α² = d^{-(p+4)}, a perfect square
        let alpha = d.powi(-((p as i32 + 4) / 2)).unwrap();
        return Ok((alpha, d.clone()));
    }
    if d.signum() > 0 {
        return Ok((exact_or_float_sqrt(&inv).unwrap(), Scalar::one()));
    }
    Err(ModelError::NoSolution(
        "α²ε0^{p+3}d = 1 has no real solution".into(),
    ))
}

fn pivot_columns(rows: &SMatrix, ncols: usize) -> Option<Vec<usize>> {
    let mut m = rows.clone();
    let exact = m.iter().flatten().all(Scalar::is_exact);
    let scale = m
        .iter()
        .flatten()
        .map(|v| v.to_f64().abs())
        .fold(0.0f64, f64::max)
        .max(1.0);
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        if r == m.len() {
            break;
        }
        let pr = if exact {
            (r..m.len()).find(|&i| !m[i][c].is_zero())
        } else {
            (r..m.len())
                .max_by(|&a, &b| m[a][c].to_f64().abs().total_cmp(&m[b][c].to_f64().abs()))
                .filter(|&i| m[i][c].to_f64().abs() > 1e-12 * scale)
        };
        let Some(pr) = pr else { continue };
        m.swap(r, pr);
        for i in r + 1..m.len() {
            if m[i][c].is_zero() {
                continue;
            }
            let f = m[i][c].checked_div(&m[r][c]).unwrap();
            for j in c..ncols {
                let t = &f * &m[r][j];
                m[i][j] = &m[i][j] - &t;
            }
        }
        pivots.push(c);
        r += 1;
    }
    (pivots.len() == m.len()).then_some(pivots)
}

/// Finds a basis of the structured form
///
/// X' = αX (+ dual correction), Y' = ε0(Y + Σ τ_j Z'_j), Z'_j mixing the Z_i,
/// U-vectors shifted by Ũ to clear the U×U block of A^0, Ũ-vectors scaled to
/// restore the pairing, duals by inverse transpose,
///
/// in which `m` (read up to order k) equals 𝔐_{6+4p,k}. Assumes the
/// coordinate-frame shape produced by [`extract_model`]; any other input
/// fails the final residual check.
pub fn normalize_to_standard(m: &Model, k: usize) -> Result<Normalization, ModelError> {
    let p = m.p;
    check_k(p, k)?;
    let m = m.truncate(k)?;
    let n = Coordinate::dimension(p);
    if m.dim() != n {
        return Err(ModelError::DimensionMismatch(m.dim(), n));
    }
    let h = n / 2;
    let np = p + 1;
    let no = |s: &str| Err(ModelError::NoSolution(s.to_string()));

    for i in 0..n {
        for j in 0..n {
            let v = &m.inner[i][j];
            let expect_one = i.abs_diff(j) == h;
            let free = i < h && j < h;
            if expect_one && *v != Scalar::one() || (!expect_one && !free && !v.is_zero()) {
                return no("inner product is not in coordinate normal form");
            }
        }
    }
    let gnn: SMatrix = (0..h).map(|i| m.inner[i][..h].to_vec()).collect();

    // second-order form D² on W from A^0(X, ·, ·, X)
    let a0 = &m.tensors[0];
    let d2 = |a: usize, b: usize| a0.value(&[0, a as u16, b as u16, 0]);
    let u: Vec<usize> = (1..=np).collect();
    let ut: Vec<usize> = (np + 1..=2 * np).collect();
    let q: SMatrix = u
        .iter()
        .map(|&a| u.iter().map(|&b| d2(a, b)).collect())
        .collect();
    let c: SMatrix = u
        .iter()
        .map(|&a| ut.iter().map(|&b| d2(a, b)).collect())
        .collect();
    if ut.iter().any(|&a| ut.iter().any(|&b| !d2(a, b).is_zero())) {
        return no("A^0 pairs Ũ with itself");
    }
    let c_inv = smatrix_inverse(&c).ok_or(ModelError::NoSolution(
        "U×Ũ block of A^0 is singular".into(),
    ))?;

    let y = 1u16;
    let zi = |i: usize| (1 + i) as u16;
    let d_m = |mm: usize| -> Scalar {
        let t = &m.tensors[mm - 2];
        let mut idx = vec![0, y, y, 0];
        idx.extend(std::iter::repeat_n(y, mm - 2));
        t.value(&idx)
    };
    let e_mi = |mm: usize, i: usize| -> Scalar {
        let t = &m.tensors[mm - 2];
        let mut idx = vec![0, y, y, 0];
        idx.extend(std::iter::repeat_n(y, mm - 3));
        idx.push(zi(i));
        t.value(&idx)
    };

    let (alpha, eps0) = if k <= p {
        (Scalar::one(), Scalar::one())
    } else if k == p + 1 {
        scalings_p_plus_1(p, &d_m(p + 3))?
    } else {
        let d3 = d_m(p + 3);
        let d4 = d_m(p + 4);
        if d3.is_zero() || d4.is_zero() {
            return no("order p+1 or p+2 component vanishes");
        }
        let eps0 = d3.checked_div(&d4).unwrap();
        let denom = &eps0.powi(p as i32 + 3).unwrap() * &d3;
        let alpha_sq = denom.recip().unwrap();
        if alpha_sq.signum() <= 0 {
            return no("α² would be non-positive");
        }
        (exact_or_float_sqrt(&alpha_sq).unwrap(), eps0)
    };
    let alpha_sq = if k <= p {
        Scalar::one()
    } else {
        (&eps0.powi(p as i32 + 3).unwrap() * &d_m(p + 3))
            .recip()
            .unwrap()
    };

    // Z mixing: rows j=1..kk of E are the Y^{j+1}Z_i components at order j+2
    let kk = k.min(p);
    let e_rows: SMatrix = (1..=kk)
        .map(|j| (1..=p).map(|i| e_mi(j + 2, i)).collect())
        .collect();
    let pivots = pivot_columns(&e_rows, p).ok_or(ModelError::NoSolution(
        "Y^{j+1}Z components are rank deficient".into(),
    ))?;
    let mut ebar = e_rows.clone();
    for col in 0..p {
        if !pivots.contains(&col) {
            let mut row = vec![Scalar::zero(); p];
            row[col] = Scalar::one();
            ebar.push(row);
        }
    }
    let cj: Vec<Scalar> = (1..=p)
        .map(|j| {
            if j <= kk {
                (&alpha_sq * &eps0.powi(j as i32 + 1).unwrap())
                    .recip()
                    .unwrap()
            } else {
                Scalar::one()
            }
        })
        .collect();
    let ebar_inv = smatrix_inverse(&ebar)
        .ok_or(ModelError::NoSolution("Z mixing matrix is singular".into()))?;
    // zp[i][l] = component z_i of Z'_l
    let zp: SMatrix = (0..p)
        .map(|i| (0..p).map(|l| &ebar_inv[i][l] * &cj[l]).collect())
        .collect();

    let tau: Vec<Scalar> = (1..=p)
        .map(|j| {
            if j <= kk {
                let num = d_m(j + 2);
                -num.checked_div(&(&Scalar::from_int(j as i64 + 2) * &cj[j - 1]))
                    .unwrap()
            } else {
                Scalar::zero()
            }
        })
        .collect();

    // P: columns are u'_a in U coordinates (y, z_1..z_p)
    let mut pm = smatrix_zero(np, np);
    pm[0][0] = eps0.clone();
    for i in 0..p {
        let s = (0..p).fold(Scalar::zero(), |acc, l| &acc + &(&tau[l] * &zp[i][l]));
        pm[1 + i][0] = &eps0 * &s;
        for l in 0..p {
            pm[1 + i][1 + l] = zp[i][l].clone();
        }
    }
    // L = −½ Q C^{-T}
    let half = Scalar::Exact(Rational::new(1.into(), 2.into()));
    let l_mat: SMatrix = smatrix_mul(&q, &smatrix_transpose(&c_inv))
        .into_iter()
        .map(|r| r.into_iter().map(|v| -(&half * &v)).collect())
        .collect();
    let pm_inv =
        smatrix_inverse(&pm).ok_or(ModelError::NoSolution("U basis is singular".into()))?;
    let alpha_sq_inv = alpha_sq.recip().unwrap();
    // M = α^{-2} C^{-1} P^{-T}
    let mmat: SMatrix = smatrix_mul(&c_inv, &smatrix_transpose(&pm_inv))
        .into_iter()
        .map(|r| r.into_iter().map(|v| &alpha_sq_inv * &v).collect())
        .collect();
    let lt_p = smatrix_mul(&smatrix_transpose(&l_mat), &pm);

    let mut s = smatrix_zero(h, h);
    s[0][0] = alpha.clone();
    for a in 0..np {
        for b in 0..np {
            s[u[b]][u[a]] = pm[b][a].clone();
            s[ut[b]][u[a]] = lt_p[b][a].clone();
            s[ut[b]][ut[a]] = mmat[b][a].clone();
        }
    }
    let s_inv_t = smatrix_transpose(
        &smatrix_inverse(&s).ok_or(ModelError::NoSolution("basis is singular".into()))?,
    );

    let mut phi = smatrix_zero(n, n);
    for i in 0..h {
        for a in 0..h {
            phi[a][i] = s[a][i].clone();
            phi[h + a][h + i] = s_inv_t[a][i].clone();
        }
        for b in 0..h {
            let corr = (0..h).fold(Scalar::zero(), |acc, a| &acc + &(&s[a][i] * &gnn[a][b]));
            phi[h + b][i] = -(&half * &corr);
        }
    }
    let map = LinearMap { matrix: phi };
    let standard = standard_model(p, k)?;
    let check = verify_isomorphism(&map, &standard, &m)?;
    if !check.ok {
        return Err(ModelError::NoSolution(format!(
            "ansatz residual {:.3e}",
            check.residual.max_abs
        )));
    }
    let mut x_direction = vec![Scalar::zero(); n];
    x_direction[0] = Scalar::one();
    for b in 0..h {
        x_direction[h + b] = -(&half * &gnn[0][b]);
    }
    Ok(Normalization {
        map,
        residual: check.residual,
        alpha,
        alpha_sq,
        x_direction,
        epsilon0: eps0,
    })
}

/// Components of a tensor as `(index, value)` in index order; a readable
/// view for reports.
pub fn tensor_components(t: &SparseTensor<Scalar>, p: usize) -> BTreeMap<String, Scalar> {
    t.entries()
        .map(|(i, v)| {
            let name: Vec<String> = i.iter().map(|&c| basis_name(p, c as usize)).collect();
            (name.join(","), v.clone())
        })
        .collect()
}

/// Basis vector names: X, Y, Z1, Yt, Zt1, Xs, …
pub fn basis_name(p: usize, i: usize) -> String {
    let c = Coordinate::from_index(p, i).name();
    let mut chars = c.chars();
    match chars.next() {
        Some(f) => f.to_ascii_uppercase().to_string() + chars.as_str(),
        None => c,
    }
}

pub fn scalar_int(n: i64) -> Scalar {
    Scalar::Exact(int(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_metric, builtin_f, FSelector};
    use crate::scalar::rat;
    use Coordinate::*;

    fn ix(p: usize, cs: &[Coordinate]) -> Vec<u16> {
        cs.iter().map(|c| c.index(p) as u16).collect()
    }

    #[test]
    fn standard_model_components() {
        let m = standard_model(1, 0).unwrap();
        assert_eq!(
            m.tensors[0].value(&ix(1, &[X, Y, YTilde, X])),
            Scalar::one()
        );
        assert_eq!(
            m.tensors[0].value(&ix(1, &[X, Z(1), ZTilde(1), X])),
            Scalar::one()
        );
        // two pairs, both orders, four sign patterns each
        assert_eq!(m.tensors[0].len(), 16);
        assert_eq!(m.inner[0][XStar.index(1)], Scalar::one());
        assert_eq!(m.inner[1][YStar.index(1)], Scalar::one());

        let m = standard_model(1, 1).unwrap();
        assert_eq!(
            m.tensors[1].value(&ix(1, &[X, Y, Z(1), X, Y])),
            Scalar::one()
        );
        assert_eq!(
            m.tensors[1].value(&ix(1, &[X, Y, Y, X, Z(1)])),
            Scalar::one()
        );
        assert_eq!(
            m.tensors[1].value(&ix(1, &[X, Y, X, Y, Z(1)])),
            scalar_int(-1)
        );

        let m = standard_model(1, 3).unwrap();
        assert_eq!(
            m.tensors[3].value(&ix(1, &[X, Y, Y, X, Y, Y, Y])),
            Scalar::one()
        );
        assert_eq!(m.tensors[3].len(), 4);
        assert!(standard_model(1, 4).is_err());
    }

    #[test]
    fn affine_restriction() {
        let a = affine_model(2, 2).unwrap();
        assert_eq!(a.dim(), 7);
        assert_eq!(
            a.tensors[2].value(&ix(2, &[X, Y, Z(2), X, Y, Y])),
            Scalar::one()
        );
        assert_eq!(affine_model(1, 0).unwrap().tensors[0].len(), 16);
    }

    #[test]
    fn extraction_examples() {
        let g = build_metric(1, builtin_f(1, &FSelector::K(1)).unwrap()).unwrap();
        let m = extract_model(&g, &Point::origin(), 1);
        assert_eq!(
            m.tensors[1].value(&ix(1, &[X, Y, Z(1), X, Y])),
            scalar_int(2)
        );

        let g = build_metric(1, Expr::zero()).unwrap();
        assert_eq!(
            extract_model(&g, &Point::origin(), 0),
            standard_model(1, 0).unwrap()
        );

        let g = build_metric(1, builtin_f(1, &FSelector::PPlus2).unwrap()).unwrap();
        let m = extract_model(&g, &Point::origin(), 0);
        assert_eq!(m.tensors[0].value(&ix(1, &[X, Y, Y, X])), Scalar::one());
    }

    #[test]
    fn identity_normalizes_standard() {
        for p in 1..=2 {
            for k in 0..=p + 2 {
                let m = standard_model(p, k).unwrap();
                let n = normalize_to_standard(&m, k).unwrap();
                assert_eq!(n.map, LinearMap::identity(m.dim()));
                assert!(n.residual.exact && n.residual.max_abs == 0.0);
            }
        }
    }

    #[test]
    fn normalization_of_m10_1() {
        let g = build_metric(1, builtin_f(1, &FSelector::K(1)).unwrap()).unwrap();
        let m = extract_model(&g, &Point::origin(), 1);
        let n = normalize_to_standard(&m, 1).unwrap();
        assert!(n.map.is_exact());
        assert_eq!(
            n.map.matrix[Z(1).index(1)][Z(1).index(1)],
            Scalar::Exact(rat(1, 2))
        );
        assert!(
            verify_isomorphism(&n.map, &standard_model(1, 1).unwrap(), &m)
                .unwrap()
                .ok
        );
    }

    #[test]
    fn normalization_at_shifted_point() {
        let g = build_metric(1, Expr::zero()).unwrap();
        let pt = Point::new([(Y, int(5)), (YTilde, int(1))]);
        let m = extract_model(&g, &pt, 0);
        let n = normalize_to_standard(&m, 0).unwrap();
        assert!(n.residual.passes());
    }

    #[test]
    fn normalization_of_builtins() {
        let pts = [
            Point::origin(),
            Point::new([(Y, rat(1, 2)), (Z(1), int(3)), (YTilde, int(-1))]),
        ];
        for p in 1..=2 {
            for k in 0..=p + 2 {
                let g = build_metric(p, builtin_f(p, &FSelector::for_k(p, k)).unwrap()).unwrap();
                let jet = ModelJet::new(g, k);
                for pt in &pts {
                    let m = jet.extract(pt);
                    let n =
                        normalize_to_standard(&m, k).unwrap_or_else(|e| panic!("p={p} k={k}: {e}"));
                    assert!(n.residual.passes(), "p={p} k={k}");
                }
            }
        }
    }

    #[test]
    fn swap_breaks_a1() {
        let std = standard_model(1, 1).unwrap();
        let mut cols: Vec<Vec<Scalar>> = LinearMap::identity(std.dim()).matrix;
        let (y, z) = (Y.index(1), Z(1).index(1));
        cols.swap(y, z);
        let (ys, zs) = (YStar.index(1), ZStar(1).index(1));
        cols.swap(ys, zs);
        let phi = LinearMap::from_columns(cols);
        assert!(!verify_isomorphism(&phi, &std, &std).unwrap().ok);
        assert!(
            verify_isomorphism(&LinearMap::identity(10), &std, &std)
                .unwrap()
                .ok
        );
    }

    #[test]
    fn json_round_trip() {
        let g = build_metric(1, builtin_f(1, &FSelector::PPlus2).unwrap()).unwrap();
        let m = extract_model(&g, &Point::new([(Y, int(1))]), 2);
        let back = Model::from_json(&m.to_json()).unwrap();
        assert_eq!(back.p, 1);
        assert_eq!(back.tensors.len(), 3);
        assert!(tensor_residual(&back.tensors[2], &m.tensors[2]).max_abs < 1e-15);
        let s = standard_model(2, 1).unwrap();
        assert_eq!(Model::from_json(&s.to_json()).unwrap(), s);
    }
}
