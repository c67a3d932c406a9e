//! Isometry-group dimensions of models and the explicit constructions used
//! to count them: orbit maps, Jacobi forms, the S_ξ functional, the groups
//! 𝒪(p,k) and the lift from affine to full models.
//!
//! Group dimensions are Lie-algebra dimensions: the stabilizer algebra is the
//! nullspace of the linearized invariance conditions, solved exactly.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde_json::{json, Value};
use thiserror::Error;

use crate::exec::Exec;
use crate::exprs::Coordinate;
use crate::linalg::{
    inertia, integer_row, rmatrix_mul, smatrix_identity, smatrix_inverse, smatrix_transpose,
    smatrix_zero, Echelon, IntRow, RMatrix, SMatrix,
};
use crate::models::{
    affine_model, standard_model, verify_affine_isomorphism, verify_isomorphism, AffineModel,
    IsoCheck, LinearMap, Model, ModelError,
};
use crate::scalar::{Rational, Scalar};
use crate::tensor::{Index, SparseTensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilizerError {
    #[error("model has inexact entries; exact rationals required")]
    Inexact,
    #[error("k={k} out of range for p={p}")]
    KOutOfRange { p: usize, k: usize },
    #[error("vector has length {have}, expected {need}")]
    VectorLength { have: usize, need: usize },
    #[error("no map: {0}")]
    NoMap(String),
    #[error("γ is not skew-symmetric")]
    NotSkew,
    #[error("g0 is not an isometry of the affine model (residual {0:.3e})")]
    NotMember(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Anything with a vector space, optional inner product and tensors.
pub trait Stabilized {
    fn space_dim(&self) -> usize;
    fn inner_product(&self) -> Option<&SMatrix>;
    fn model_tensors(&self) -> &[SparseTensor<Scalar>];
}

impl Stabilized for Model {
    fn space_dim(&self) -> usize {
        self.dim()
    }
    fn inner_product(&self) -> Option<&SMatrix> {
        Some(&self.inner)
    }
    fn model_tensors(&self) -> &[SparseTensor<Scalar>] {
        &self.tensors
    }
}

impl Stabilized for AffineModel {
    fn space_dim(&self) -> usize {
        self.dim()
    }
    fn inner_product(&self) -> Option<&SMatrix> {
        None
    }
    fn model_tensors(&self) -> &[SparseTensor<Scalar>] {
        &self.tensors
    }
}

/// `(A·T)(ξ_1,…,ξ_m) = Σ_j T(ξ_1,…,Aξ_j,…,ξ_m)`; `a[c][b]` is the e_c
/// component of A e_b.
pub fn derivation_action(a: &SMatrix, t: &SparseTensor<Scalar>) -> SparseTensor<Scalar> {
    let n = t.dim();
    let mut out = SparseTensor::new(n, t.rank());
    for (idx, v) in t.entries() {
        for s in 0..idx.len() {
            let c = idx[s] as usize;
            for b in 0..n {
                if a[c][b].is_zero() {
                    continue;
                }
                let mut j = idx.clone();
                j[s] = b as u16;
                out.accumulate(j, &(v * &a[c][b]));
            }
        }
    }
    out
}

/// Exact nullspace of the derivation constraints.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilizerResult {
    pub dim: usize,
    /// Integer-valued basis matrices, `basis[i][c][b]` as in [`derivation_action`].
    pub basis: Vec<RMatrix>,
}

fn exact(v: &Scalar) -> Result<Rational, StabilizerError> {
    v.as_exact().cloned().ok_or(StabilizerError::Inexact)
}

type RowMap = BTreeMap<(usize, Index), BTreeMap<usize, Rational>>;

fn tensor_rows(ti: usize, t: &SparseTensor<Scalar>) -> Result<RowMap, StabilizerError> {
    let n = t.dim();
    let mut rows: RowMap = BTreeMap::new();
    for (idx, v) in t.entries() {
        let v = exact(v)?;
        for s in 0..idx.len() {
            let c = idx[s] as usize;
            for b in 0..n {
                let mut j = idx.clone();
                j[s] = b as u16;
                let e = rows
                    .entry((ti, j))
                    .or_default()
                    .entry(c * n + b)
                    .or_insert_with(Rational::zero);
                *e += &v;
            }
        }
    }
    Ok(rows)
}

fn metric_rows(g: &SMatrix) -> Result<Vec<BTreeMap<usize, Rational>>, StabilizerError> {
    let n = g.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i..n {
            let mut row: BTreeMap<usize, Rational> = BTreeMap::new();
            for c in 0..n {
                // ⟨Ae_i, e_j⟩ + ⟨e_i, Ae_j⟩
                let gcj = exact(&g[c][j])?;
                if !gcj.is_zero() {
                    *row.entry(c * n + i).or_insert_with(Rational::zero) += gcj;
                }
                let gic = exact(&g[i][c])?;
                if !gic.is_zero() {
                    *row.entry(c * n + j).or_insert_with(Rational::zero) += gic;
                }
            }
            out.push(row);
        }
    }
    Ok(out)
}

/// Row echelon form of the full constraint system.
pub fn constraint_echelon<M: Stabilized>(m: &M, exec: Exec) -> Result<Echelon, StabilizerError> {
    let n = m.space_dim();
    let tensors: Vec<(usize, &SparseTensor<Scalar>)> =
        m.model_tensors().iter().enumerate().collect();
    let per_tensor = exec.map(&tensors, |(ti, t)| tensor_rows(*ti, t));
    let mut rational_rows: Vec<BTreeMap<usize, Rational>> = Vec::new();
    if let Some(g) = m.inner_product() {
        rational_rows.extend(metric_rows(g)?);
    }
    for rows in per_tensor {
        rational_rows.extend(rows?.into_values());
    }
    let int_rows: Vec<IntRow> = exec.map(&rational_rows, integer_row);
    let mut ech = Echelon::new(n * n);
    for r in int_rows {
        if !r.is_empty() {
            ech.insert(r);
        }
    }
    Ok(ech)
}

fn vector_to_matrix(v: &[BigInt], n: usize) -> RMatrix {
    (0..n)
        .map(|c| {
            (0..n)
                .map(|b| Rational::from_integer(v[c * n + b].clone()))
                .collect()
        })
        .collect()
}

/// Lie algebra of the stabilizer of `m`: dimension and basis.
pub fn stabilizer_dim<M: Stabilized>(
    m: &M,
    exec: Exec,
) -> Result<StabilizerResult, StabilizerError> {
    let n = m.space_dim();
    let ech = constraint_echelon(m, exec)?;
    let basis: Vec<RMatrix> = ech
        .nullspace()
        .iter()
        .map(|v| vector_to_matrix(v, n))
        .collect();
    Ok(StabilizerResult {
        dim: basis.len(),
        basis,
    })
}

fn flatten(a: &RMatrix) -> BTreeMap<usize, Rational> {
    let n = a.len();
    let mut out = BTreeMap::new();
    for c in 0..n {
        for b in 0..n {
            if !a[c][b].is_zero() {
                out.insert(c * n + b, a[c][b].clone());
            }
        }
    }
    out
}

fn bracket(a: &RMatrix, b: &RMatrix) -> RMatrix {
    let ab = rmatrix_mul(a, b);
    let ba = rmatrix_mul(b, a);
    ab.into_iter()
        .zip(ba)
        .map(|(r, s)| r.into_iter().zip(s).map(|(x, y)| x - y).collect())
        .collect()
}

/// Every commutator of basis elements lies in the span of the basis.
pub fn is_closed_under_bracket(result: &StabilizerResult, exec: Exec) -> bool {
    let Some(n) = result.basis.first().map(|b| b.len()) else {
        return true;
    };
    let mut span = Echelon::new(n * n);
    for b in &result.basis {
        span.insert(integer_row(&flatten(b)));
    }
    let pairs: Vec<(usize, usize)> = (0..result.basis.len())
        .flat_map(|i| (i + 1..result.basis.len()).map(move |j| (i, j)))
        .collect();
    exec.all(&pairs, |&(i, j)| {
        span.contains(integer_row(&flatten(&bracket(
            &result.basis[i],
            &result.basis[j],
        ))))
    })
}

/// Every basis element annihilates the inner product and all tensors.
pub fn basis_satisfies_constraints<M: Stabilized>(m: &M, result: &StabilizerResult) -> bool {
    result.basis.iter().all(|a| {
        let s: SMatrix = a
            .iter()
            .map(|r| r.iter().cloned().map(Scalar::Exact).collect())
            .collect();
        let metric_ok = m.inner_product().is_none_or(|g| {
            let n = g.len();
            (0..n).all(|i| {
                (0..n).all(|j| {
                    let v = (0..n).fold(Scalar::zero(), |acc, c| {
                        &acc + &(&(&s[c][i] * &g[c][j]) + &(&s[c][j] * &g[i][c]))
                    });
                    v.is_zero()
                })
            })
        });
        metric_ok
            && m.model_tensors()
                .iter()
                .all(|t| derivation_action(&s, t).is_empty())
    })
}

fn okp_inner(p: usize) -> SMatrix {
    let mut g = smatrix_zero(2 * p, 2 * p);
    for i in 0..p {
        g[i][p + i] = Scalar::one();
        g[p + i][i] = Scalar::one();
    }
    g
}

/// Lie algebra of 𝒪(p,k) on 𝒲(p) = span{β_1..β_p, β̃_1..β̃_p}.
fn okp_echelon(p: usize, k: usize) -> Result<Echelon, StabilizerError> {
    if k > p {
        return Err(StabilizerError::KOutOfRange { p, k });
    }
    let n = 2 * p;
    let mut ech = Echelon::new(n * n);
    for row in metric_rows(&okp_inner(p))? {
        ech.insert(integer_row(&row));
    }
    // Hβ_i = 0
    for i in 0..k {
        for c in 0..n {
            let mut row = BTreeMap::new();
            row.insert(c * n + i, Rational::one());
            ech.insert(integer_row(&row));
        }
    }
    Ok(ech)
}

/// dim 𝒪(p,k) by exact nullspace.
pub fn okp_dim(p: usize, k: usize) -> Result<usize, StabilizerError> {
    Ok(okp_echelon(p, k)?.nullity())
}

/// ½(2p−k)(2p−k−1).
pub fn okp_formula(p: usize, k: usize) -> usize {
    let m = 2 * p - k;
    m * m.saturating_sub(1) / 2
}

/// Rank of h ↦ hβ̃_1 on the Lie algebra of 𝒪(p,k): the orbit dimension of β̃_1.
pub fn okp_orbit_rank(p: usize, k: usize) -> Result<usize, StabilizerError> {
    let n = 2 * p;
    let basis = okp_echelon(p, k)?.nullspace();
    let mut ech = Echelon::new(n);
    for v in basis {
        let col: BTreeMap<usize, Rational> = (0..n)
            .filter(|&c| !v[c * n + p].is_zero())
            .map(|c| (c, Rational::from_integer(v[c * n + p].clone())))
            .collect();
        ech.insert(integer_row(&col));
    }
    Ok(ech.rank())
}

fn check_len(v: &[Scalar], n: usize) -> Result<(), StabilizerError> {
    if v.len() != n {
        return Err(StabilizerError::VectorLength {
            have: v.len(),
            need: n,
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct JacobiForm {
    pub matrix: RMatrix,
    pub rank: usize,
    /// (positive, negative, zero) over the whole affine space.
    pub inertia: (usize, usize, usize),
}

/// J_ξ(η1,η2) = B^0(ξ,η1,η2,ξ).
pub fn jacobi_form(am: &AffineModel, xi: &[Scalar]) -> Result<JacobiForm, StabilizerError> {
    let n = am.dim();
    check_len(xi, n)?;
    let mut m = vec![vec![Rational::zero(); n]; n];
    for (idx, v) in am.tensors[0].entries() {
        let w = exact(&(&(v * &xi[idx[0] as usize]) * &xi[idx[3] as usize]))?;
        m[idx[1] as usize][idx[2] as usize] += w;
    }
    let inertia = inertia(&m);
    Ok(JacobiForm {
        rank: inertia.0 + inertia.1,
        matrix: m,
        inertia,
    })
}

/// S_ξ(η) = B^1(X,ξ,ξ,X;η), as a covector.
pub fn s_functional(am: &AffineModel, xi: &[Scalar]) -> Result<Vec<Scalar>, StabilizerError> {
    let n = am.dim();
    check_len(xi, n)?;
    if am.tensors.len() < 2 {
        return Err(StabilizerError::KOutOfRange { p: am.p, k: 0 });
    }
    let mut out = vec![Scalar::zero(); n];
    for (idx, v) in am.tensors[1].entries() {
        if idx[0] != 0 || idx[3] != 0 {
            continue;
        }
        let w = &(v * &xi[idx[1] as usize]) * &xi[idx[2] as usize];
        out[idx[4] as usize] = &out[idx[4] as usize] + &w;
    }
    Ok(out)
}

/// Which basis vector the orbit map moves.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrbitVariant {
    /// gX = ξ.
    X,
    /// gX = X, gY = ξ (double isotropy).
    Y,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrbitMap {
    pub map: LinearMap,
    pub check: IsoCheck,
}

fn idx(p: usize, c: Coordinate) -> usize {
    c.index(p)
}

fn unit(n: usize, i: usize, v: Scalar) -> Vec<Scalar> {
    let mut e = vec![Scalar::zero(); n];
    e[i] = v;
    e
}

/// The explicit affine map carrying X (or Y) to ξ, before verification.
/// `Err(NoMap)` when its defining scalars do not exist.
pub fn orbit_map_candidate(
    p: usize,
    k: usize,
    xi: &[Scalar],
    variant: OrbitVariant,
) -> Result<LinearMap, StabilizerError> {
    if k > p + 2 {
        return Err(StabilizerError::KOutOfRange { p, k });
    }
    let h = 3 + 2 * p;
    check_len(xi, h)?;
    let mut cols: Vec<Vec<Scalar>> = vec![Vec::new(); h];
    match variant {
        OrbitVariant::X => {
            let a = &xi[0];
            if a.is_zero() {
                return Err(StabilizerError::NoMap("⟨ξ,X*⟩ = 0".into()));
            }
            let a2 = a * a;
            let a2_inv = a2.recip().unwrap();
            let eps0 = a2_inv.real_root(p as u32 + 3).unwrap();
            cols[0] = xi.to_vec();
            cols[idx(p, Coordinate::Y)] = unit(h, idx(p, Coordinate::Y), eps0.clone());
            cols[idx(p, Coordinate::YTilde)] = unit(
                h,
                idx(p, Coordinate::YTilde),
                &a2_inv * &eps0.recip().unwrap(),
            );
            for i in 1..=p {
                let eps_i = (&a2 * &eps0.powi(i as i32 + 1).unwrap()).recip().unwrap();
                let zt = &eps_i.recip().unwrap() * &a2_inv;
                cols[idx(p, Coordinate::Z(i as u16))] =
                    unit(h, idx(p, Coordinate::Z(i as u16)), eps_i);
                cols[idx(p, Coordinate::ZTilde(i as u16))] =
                    unit(h, idx(p, Coordinate::ZTilde(i as u16)), zt);
            }
        }
        OrbitVariant::Y => {
            if k == 0 {
                return Err(StabilizerError::NoMap(
                    "double isotropy map needs k ≥ 1".into(),
                ));
            }
            if !xi[0].is_zero() {
                return Err(StabilizerError::NoMap("ξ must lie in W".into()));
            }
            let yt = idx(p, Coordinate::YTilde);
            let b0 = &xi[idx(p, Coordinate::Y)];
            let Some(b0_inv) = b0.recip() else {
                return Err(StabilizerError::NoMap("⟨ξ,Y*⟩ = 0".into()));
            };
            cols[0] = unit(h, 0, Scalar::one());
            cols[idx(p, Coordinate::Y)] = xi.to_vec();
            cols[yt] = unit(h, yt, b0_inv.clone());
            for i in 1..=p {
                let zi = idx(p, Coordinate::Z(i as u16));
                let zti = idx(p, Coordinate::ZTilde(i as u16));
                let eps_i = b0.powi(-(i as i32) - 1).unwrap();
                let eps_inv = eps_i.recip().unwrap();
                let mut cz = unit(h, zi, eps_i.clone());
                cz[yt] = -(&eps_i * &(&b0_inv * &xi[zti]));
                let mut czt = unit(h, zti, eps_inv.clone());
                czt[yt] = -(&eps_inv * &(&b0_inv * &xi[zi]));
                cols[zi] = cz;
                cols[zti] = czt;
            }
        }
    }
    Ok(LinearMap::from_columns(cols))
}

/// Builds the explicit orbit map and verifies it on 𝔄_{3+2p,k}. Succeeds
/// only when the map is an isometry of the affine model.
pub fn construct_orbit_map(
    p: usize,
    k: usize,
    xi: &[Scalar],
    variant: OrbitVariant,
) -> Result<OrbitMap, StabilizerError> {
    let map = orbit_map_candidate(p, k, xi, variant)?;
    let am = affine_model(p, k)?;
    let check = verify_affine_isomorphism(&map, &am, &am)?;
    if !check.ok {
        return Err(StabilizerError::NoMap(format!(
            "map is not an isometry (residual {:.3e})",
            check.residual.max_abs
        )));
    }
    Ok(OrbitMap { map, check })
}

/// The orbit condition stated for the explicit maps.
pub fn stated_orbit_condition(p: usize, k: usize, xi: &[Scalar], variant: OrbitVariant) -> bool {
    match variant {
        OrbitVariant::X => {
            let a = &xi[0];
            if k == p + 2 {
                (a * a) == Scalar::one() || (a.abs().to_f64() - 1.0).abs() < 1e-12 && !a.is_exact()
            } else {
                !a.is_zero()
            }
        }
        OrbitVariant::Y => {
            if k == 0 || !xi[0].is_zero() {
                return false;
            }
            let b0 = &xi[idx(p, Coordinate::Y)];
            if k <= p {
                !b0.is_zero()
            } else if k == p + 1 {
                b0.powi(p as i32 + 3).unwrap() == Scalar::one()
            } else {
                *b0 == Scalar::one()
            }
        }
    }
}

/// The condition under which the explicit map really is an isometry: the
/// stated one plus the components it leaves unchecked (ξ in a derivative
/// slot for the X map; J_X(ξ,ξ) and the Y^{i+1}Z_i terms for the Y map).
pub fn true_orbit_condition(p: usize, k: usize, xi: &[Scalar], variant: OrbitVariant) -> bool {
    if !stated_orbit_condition(p, k, xi, variant) {
        return false;
    }
    let kk = k.min(p);
    let z = |i: usize| &xi[idx(p, Coordinate::Z(i as u16))];
    match variant {
        OrbitVariant::X => {
            k == 0 || (xi[idx(p, Coordinate::Y)].is_zero() && (1..=kk).all(|i| z(i).is_zero()))
        }
        OrbitVariant::Y => {
            let b0 = &xi[idx(p, Coordinate::Y)];
            let jx = (1..=p).fold(b0 * &xi[idx(p, Coordinate::YTilde)], |acc, i| {
                &acc + &(z(i) * &xi[idx(p, Coordinate::ZTilde(i as u16))])
            });
            jx.is_zero() && (1..=kk).all(|i| z(i).is_zero())
        }
    }
}

/// Random ξ on the affine space with the special values (0, ±1) of the
/// X and Y components drawn often enough that every orbit case occurs.
pub fn random_xi<R: rand::Rng>(rng: &mut R, p: usize) -> Vec<Scalar> {
    let h = 3 + 2 * p;
    let special = |rng: &mut R| -> Scalar {
        match rng.gen_range(0..5) {
            0 => Scalar::zero(),
            1 => Scalar::one(),
            2 => Scalar::from_int(-1),
            _ => Scalar::Exact(Rational::new(
                rng.gen_range(-5i64..=5).into(),
                rng.gen_range(1i64..=3).into(),
            )),
        }
    };
    let mut xi: Vec<Scalar> = vec![special(rng), special(rng)];
    for _ in 2..h {
        xi.push(if rng.gen_bool(0.5) {
            Scalar::zero()
        } else {
            Scalar::from_int(rng.gen_range(-4i64..=4))
        });
    }
    xi
}

/// Assembles g ∈ G(𝔐_{6+4p,k}) from g0 ∈ G(𝔄_{3+2p,k}) and skew γ:
/// g S_i = Σ_j g0_ij S_j + g1_ij S*_j, g S*_i = Σ_j g2_ij S*_j with
/// γ = g0·g1ᵗ and g2 = g0^{-t} (row convention; `g0` here is given by columns).
pub fn lift_affine_isometry(
    g0: &LinearMap,
    gamma: &SMatrix,
    p: usize,
    k: usize,
) -> Result<LinearMap, StabilizerError> {
    let h = 3 + 2 * p;
    if g0.dim() != h || gamma.len() != h {
        return Err(StabilizerError::VectorLength {
            have: g0.dim(),
            need: h,
        });
    }
    if (0..h).any(|i| (0..h).any(|j| !(&gamma[i][j] + &gamma[j][i]).is_zero())) {
        return Err(StabilizerError::NotSkew);
    }
    let am = affine_model(p, k)?;
    let check = verify_affine_isomorphism(g0, &am, &am)?;
    if !check.ok {
        return Err(StabilizerError::NotMember(check.residual.max_abs));
    }
    let g0r = smatrix_transpose(&g0.matrix);
    let g2 =
        smatrix_transpose(&smatrix_inverse(&g0r).ok_or(StabilizerError::NotMember(f64::INFINITY))?);
    let g1: SMatrix = crate::linalg::smatrix_mul(gamma, &g2)
        .into_iter()
        .map(|r| r.into_iter().map(|v| -v).collect())
        .collect();
    let n = 2 * h;
    let mut m = smatrix_zero(n, n);
    for i in 0..h {
        for j in 0..h {
            m[j][i] = g0r[i][j].clone();
            m[h + j][i] = g1[i][j].clone();
            m[h + j][h + i] = g2[i][j].clone();
        }
    }
    Ok(LinearMap { matrix: m })
}

/// Checks a lifted map against 𝔐_{6+4p,k}.
pub fn verify_lift(g: &LinearMap, p: usize, k: usize) -> Result<IsoCheck, StabilizerError> {
    let m = standard_model(p, k)?;
    Ok(verify_isomorphism(g, &m, &m)?)
}

/// Identity on the affine space.
pub fn affine_identity(p: usize) -> LinearMap {
    LinearMap {
        matrix: smatrix_identity(3 + 2 * p),
    }
}

/// Closed-form isometry dimensions of M_{6+4p,k} (k = 0..p+2) and of 𝒩_ψ
/// (`k = None`).
pub fn isometry_formula(p: usize, k: Option<usize>) -> usize {
    let np = (6 + 4 * p) + (p + 1) * (3 + 2 * p) + (2 * p + 3);
    let at_p = np + (2 * p + 2) + okp_formula(p, p);
    match k {
        Some(0) => np + (p + 1) * (2 * p + 1),
        Some(k) if k <= p => np + (2 * p + 2) + okp_formula(p, k),
        Some(k) if k == p + 1 => at_p - 1,
        Some(_) => at_p - 2,
        None => at_p - 3,
    }
}

/// dim G(𝔄_{3+2p,k}) chained through the isotropy-group counts in closed form.
pub fn affine_chain_formula(p: usize, k: usize) -> usize {
    let gx = if k == 0 {
        (p + 1) * (2 * p + 1)
    } else if k <= p {
        okp_formula(p, k) + 2 * p + 2
    } else {
        okp_formula(p, p) + 2 * p + 1
    };
    gx + if k <= p + 1 { 2 * p + 3 } else { 2 * p + 2 }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DimRow {
    /// `None` is the 𝒩_ψ row.
    pub k: Option<usize>,
    pub computed: usize,
    pub formula: usize,
}

impl DimRow {
    pub fn pass(&self) -> bool {
        self.computed == self.formula
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DimTable {
    pub p: usize,
    pub rows: Vec<DimRow>,
}

impl DimTable {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(DimRow::pass)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "p": self.p,
            "rows": self.rows.iter().map(|r| json!({
                "k": r.k.map_or(json!("N"), |k| json!(k)),
                "computed": r.computed,
                "formula": r.formula,
                "pass": r.pass(),
            })).collect::<Vec<_>>(),
        })
    }
}

/// 6+4p+dim G(𝔐_{6+4p,k}) for k = 0..p+2, then 5+4p+dim G(𝔐_{6+4p,p+2}).
pub fn manifold_isometry_dims(p: usize, exec: Exec) -> Result<DimTable, StabilizerError> {
    let ks: Vec<usize> = (0..=p + 2).collect();
    let dims = exec.map(&ks, |&k| -> Result<usize, StabilizerError> {
        Ok(stabilizer_dim(&standard_model(p, k)?, Exec::Sequential)?.dim)
    });
    let dims: Vec<usize> = dims.into_iter().collect::<Result<_, _>>()?;
    let mut rows: Vec<DimRow> = ks
        .iter()
        .map(|&k| DimRow {
            k: Some(k),
            computed: 6 + 4 * p + dims[k],
            formula: isometry_formula(p, Some(k)),
        })
        .collect();
    rows.push(DimRow {
        k: None,
        computed: 5 + 4 * p + dims[p + 2],
        formula: isometry_formula(p, None),
    });
    Ok(DimTable { p, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{int, rat};
    use Coordinate::*;

    fn vec_of(p: usize, parts: &[(Coordinate, i64)]) -> Vec<Scalar> {
        let mut v = vec![Scalar::zero(); 3 + 2 * p];
        for (c, x) in parts {
            v[c.index(p)] = Scalar::Exact(int(*x));
        }
        v
    }

    #[test]
    fn derivation_action_examples() {
        let m = standard_model(1, 0).unwrap();
        let n = m.dim();
        let t = &m.tensors[0];
        assert!(derivation_action(&smatrix_zero(n, n), t).is_empty());
        let twice = derivation_action(&smatrix_identity(n), t);
        assert_eq!(twice, t.map(|v| v * &Scalar::from_int(4)));
        let mut e = smatrix_zero(n, n);
        e[Y.index(1)][YTilde.index(1)] = Scalar::one();
        let out = derivation_action(&e, t);
        let i: Vec<u16> = [X, YTilde, YTilde, X]
            .iter()
            .map(|c| c.index(1) as u16)
            .collect();
        assert_eq!(out.value(&i), Scalar::from_int(2));
    }

    // independent float-rank prototype values
    const MODEL_DIMS: [&[usize]; 3] = [
        &[21, 15, 14, 13],
        &[43, 33, 29, 28, 27],
        &[73, 59, 53, 48, 47, 46],
    ];

    #[test]
    fn standard_stabilizers_p1_p2() {
        for p in 1..=2 {
            for k in 0..=p + 2 {
                let m = standard_model(p, k).unwrap();
                let s = stabilizer_dim(&m, Exec::Parallel).unwrap();
                assert_eq!(s.dim, MODEL_DIMS[p - 1][k], "p={p} k={k}");
                assert!(basis_satisfies_constraints(&m, &s));
                assert!(is_closed_under_bracket(&s, Exec::Parallel));
                let a = stabilizer_dim(&m.to_affine(), Exec::Parallel).unwrap();
                assert_eq!(s.dim - a.dim, (p + 1) * (3 + 2 * p));
            }
        }
    }

    #[test]
    fn affine_stabilizer_p1_k0() {
        assert_eq!(
            stabilizer_dim(&affine_model(1, 0).unwrap(), Exec::Sequential)
                .unwrap()
                .dim,
            11
        );
        assert_eq!(affine_chain_formula(1, 0), 11);
    }

    #[test]
    fn extracted_model_matches_standard() {
        use crate::geometry::{build_metric, builtin_f, FSelector};
        use crate::models::extract_model;
        let g = build_metric(1, builtin_f(1, &FSelector::K(1)).unwrap()).unwrap();
        let m = extract_model(&g, &crate::exprs::Point::origin(), 1);
        assert_eq!(stabilizer_dim(&m, Exec::Parallel).unwrap().dim, 15);
    }

    #[test]
    fn okp_examples() {
        assert_eq!(okp_dim(1, 1).unwrap(), 0);
        assert_eq!(okp_dim(2, 1).unwrap(), 3);
        assert_eq!(okp_dim(2, 0).unwrap(), 6);
        for p in 1..=4 {
            for k in 0..=p {
                assert_eq!(okp_dim(p, k).unwrap(), okp_formula(p, k));
                assert_eq!(okp_orbit_rank(p, k).unwrap(), 2 * p - k - 1);
            }
        }
    }

    #[test]
    fn jacobi_examples() {
        let am = affine_model(1, 1).unwrap();
        assert_eq!(jacobi_form(&am, &vec_of(1, &[(Y, 1)])).unwrap().rank, 0);
        let jx = jacobi_form(&am, &vec_of(1, &[(X, 1)])).unwrap();
        assert_eq!(jx.rank, 4);
        assert_eq!(jx.inertia, (2, 2, 1));
        assert!(jacobi_form(&am, &vec_of(1, &[(Z(1), 1)])).unwrap().rank <= 1);
        assert!(
            jacobi_form(&am, &vec_of(1, &[(X, 2), (Z(1), 3)]))
                .unwrap()
                .rank
                >= 2
        );
    }

    #[test]
    fn s_functional_examples() {
        let am = affine_model(1, 1).unwrap();
        let z1 = Z(1).index(1);
        let sy = s_functional(&am, &vec_of(1, &[(Y, 1)])).unwrap();
        assert_eq!(sy[z1], Scalar::one());
        assert!(sy[Y.index(1)].is_zero());
        assert!(s_functional(&am, &vec_of(1, &[(YTilde, 1)]))
            .unwrap()
            .iter()
            .all(Scalar::is_zero));
        let s = s_functional(&am, &vec_of(1, &[(Y, 1), (Z(1), 1)])).unwrap();
        assert_eq!(s[Y.index(1)], Scalar::from_int(2));
        assert!(s_functional(&affine_model(1, 0).unwrap(), &vec_of(1, &[(Y, 1)])).is_err());
    }

    #[test]
    fn orbit_map_examples() {
        for k in 0..=3 {
            let m = construct_orbit_map(1, k, &vec_of(1, &[(X, 1)]), OrbitVariant::X).unwrap();
            assert_eq!(m.map, affine_identity(1));
        }
        let xi = vec_of(1, &[(X, 2)]);
        let m = construct_orbit_map(1, 2, &xi, OrbitVariant::X).unwrap();
        assert!((m.map.matrix[1][1].to_f64() - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(construct_orbit_map(1, 3, &xi, OrbitVariant::X).is_err());
        assert!(!stated_orbit_condition(1, 3, &xi, OrbitVariant::X));

        let xi = vec_of(1, &[(Y, 1), (ZTilde(1), 3)]);
        let m = construct_orbit_map(1, 1, &xi, OrbitVariant::Y).unwrap();
        let col = m.map.column(Z(1).index(1));
        assert_eq!(col[Z(1).index(1)], Scalar::one());
        assert_eq!(col[YTilde.index(1)], Scalar::from_int(-3));
        assert!(construct_orbit_map(1, 1, &vec_of(1, &[(X, 1), (Y, 1)]), OrbitVariant::Y).is_err());
    }

    #[test]
    fn stated_map_misses_derivative_slot() {
        // ⟨ξ,X*⟩ ≠ 0 but ξ has a Y part: ∇R(gX,gY,gY,gX;gX) picks it up
        let xi = vec_of(1, &[(X, 1), (Y, 1)]);
        assert!(stated_orbit_condition(1, 1, &xi, OrbitVariant::X));
        assert!(!true_orbit_condition(1, 1, &xi, OrbitVariant::X));
        assert!(construct_orbit_map(1, 1, &xi, OrbitVariant::X).is_err());
        assert!(construct_orbit_map(1, 0, &xi, OrbitVariant::X).is_ok());
    }

    #[test]
    fn lift_examples() {
        let id = affine_identity(1);
        let zero = smatrix_zero(5, 5);
        let g = lift_affine_isometry(&id, &zero, 1, 0).unwrap();
        assert_eq!(g, LinearMap::identity(10));
        let mut gamma = smatrix_zero(5, 5);
        gamma[0][1] = Scalar::one();
        gamma[1][0] = Scalar::from_int(-1);
        let g = lift_affine_isometry(&id, &gamma, 1, 0).unwrap();
        assert!(verify_lift(&g, 1, 0).unwrap().ok);
        gamma[1][0] = Scalar::one();
        assert_eq!(
            lift_affine_isometry(&id, &gamma, 1, 0),
            Err(StabilizerError::NotSkew)
        );

        let orbit =
            construct_orbit_map(1, 2, &vec_of(1, &[(X, 3), (ZTilde(1), 1)]), OrbitVariant::X)
                .unwrap();
        let mut gamma = smatrix_zero(5, 5);
        gamma[2][4] = Scalar::Exact(rat(1, 3));
        gamma[4][2] = Scalar::Exact(rat(-1, 3));
        let g = lift_affine_isometry(&orbit.map, &gamma, 1, 2).unwrap();
        assert!(verify_lift(&g, 1, 2).unwrap().ok);
    }

    #[test]
    fn formulas() {
        let p1: Vec<usize> = (0..=3)
            .map(|k| isometry_formula(1, Some(k)))
            .chain([isometry_formula(1, None)])
            .collect();
        assert_eq!(p1, [31, 29, 28, 27, 26]);
        let p2: Vec<usize> = (0..=4)
            .map(|k| isometry_formula(2, Some(k)))
            .chain([isometry_formula(2, None)])
            .collect();
        assert_eq!(p2, [57, 51, 49, 48, 47, 46]);
        assert_eq!(isometry_formula(3, Some(0)), 91);
    }

    #[test]
    fn table_json() {
        let t = manifold_isometry_dims(1, Exec::Parallel).unwrap();
        assert_eq!(t.rows.len(), 5);
        assert_eq!(t.rows[0].computed, 31);
        assert!(t.rows[0].pass());
        let v = t.to_json();
        assert_eq!(v["rows"][4]["k"], "N");
        assert_eq!(v["rows"][4]["computed"], 22);
    }
}
