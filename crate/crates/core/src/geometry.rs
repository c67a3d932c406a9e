//! The metrics g_{6+4p,F}, their Levi-Civita connection, curvature and
//! iterated covariant derivatives.
//!
//! Curvature convention: R(∂_i,∂_j)∂_k = R^l_{kij} ∂_l with
//! R^l_{kij} = ∂_iΓ^l_{jk} − ∂_jΓ^l_{ik} + Γ^l_{im}Γ^m_{jk} − Γ^l_{jm}Γ^m_{ik}
//! and R(a,b,c,d) = g(R(∂_a,∂_b)∂_c, ∂_d). With it,
//! R(∂x,∂ξ1,∂ξ2,∂x) = −½ ∂ξ1∂ξ2 g_xx. Covariant derivatives append the
//! new slot at the end: ∇T(…; e).

use std::collections::BTreeMap;

use num_traits::Zero;
use thiserror::Error;

use crate::exprs::{Coordinate, Expr, Point};
use crate::linalg::inertia;
use crate::scalar::{int, Rational, Scalar};
use crate::tensor::{Index, SparseTensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("p must be at least 1")]
    InvalidP,
    #[error("F may depend only on y and z_1..z_p, found {0}")]
    ForbiddenCoordinate(Coordinate),
    #[error("psi may depend only on y, found {0}")]
    PsiNotInY(Coordinate),
    #[error("selector k={k} out of range 0..={p}")]
    SelectorOutOfRange { k: usize, p: usize },
}

/// g_{6+4p,F}: only g_xx = −2h, h = F + yỹ + Σ z_i z̃_i, is non-constant.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricField {
    p: usize,
    f: Expr,
    h: Expr,
    gxx: Expr,
}

impl MetricField {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn dim(&self) -> usize {
        Coordinate::dimension(self.p)
    }

    pub fn f(&self) -> &Expr {
        &self.f
    }

    /// F + yỹ + Σ z_i z̃_i, so that g_xx = −2h.
    pub fn h(&self) -> &Expr {
        &self.h
    }

    pub fn gxx(&self) -> &Expr {
        &self.gxx
    }

    pub fn component(&self, a: usize, b: usize) -> Expr {
        let half = 3 + 2 * self.p;
        if a == 0 && b == 0 {
            self.gxx.clone()
        } else if a.abs_diff(b) == half {
            Expr::one()
        } else {
            Expr::zero()
        }
    }

    /// The metric as a rank-2 tensor field.
    pub fn tensor(&self) -> SparseTensor<Expr> {
        let n = self.dim();
        let mut t = SparseTensor::new(n, 2);
        for a in 0..n {
            for b in 0..n {
                t.set(vec![a as u16, b as u16], self.component(a, b));
            }
        }
        t
    }

    pub fn evaluate(&self, pt: &Point) -> Vec<Vec<Scalar>> {
        let n = self.dim();
        let gxx = self.gxx.evaluate(pt);
        (0..n)
            .map(|a| {
                (0..n)
                    .map(|b| {
                        if a == 0 && b == 0 {
                            gxx.clone()
                        } else {
                            Scalar::Exact(self.component(a, b).as_constant().unwrap())
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// (positive, negative, zero) counts of the metric at a point.
    pub fn signature_at(&self, pt: &Point) -> (usize, usize, usize) {
        let m: Vec<Vec<Rational>> = self
            .evaluate(pt)
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|v| match v {
                        Scalar::Exact(q) => q,
                        Scalar::Approx(x) => Rational::from_float(x).unwrap_or_else(Rational::zero),
                    })
                    .collect()
            })
            .collect();
        inertia(&m)
    }
}

pub fn build_metric(p: usize, f: Expr) -> Result<MetricField, GeometryError> {
    if p == 0 {
        return Err(GeometryError::InvalidP);
    }
    for c in f.coordinates() {
        let ok = matches!(c, Coordinate::Y)
            || matches!(c, Coordinate::Z(i) if (i as usize) <= p && i >= 1);
        if !ok {
            return Err(GeometryError::ForbiddenCoordinate(c));
        }
    }
    let mut h = &f + &(&Expr::var(Coordinate::Y) * &Expr::var(Coordinate::YTilde));
    for i in 1..=p as u16 {
        h = &h + &(&Expr::var(Coordinate::Z(i)) * &Expr::var(Coordinate::ZTilde(i)));
    }
    let gxx = h.scale(&int(-2));
    Ok(MetricField { p, f, h, gxx })
}

/// The functions F singled out for the families M_{6+4p,k} and N_{6+4p,ψ}.
#[derive(Clone, Debug, PartialEq)]
pub enum FSelector {
    /// f_{p,k} for 0 ≤ k ≤ p.
    K(usize),
    PPlus1,
    PPlus2,
    Psi(Expr),
}

impl FSelector {
    /// The selector for M_{6+4p,k}, 0 ≤ k ≤ p+2.
    pub fn for_k(p: usize, k: usize) -> FSelector {
        if k == p + 1 {
            FSelector::PPlus1
        } else if k == p + 2 {
            FSelector::PPlus2
        } else {
            FSelector::K(k)
        }
    }
}

fn z_chain(p: usize, upto: usize) -> Expr {
    let y = Expr::var(Coordinate::Y);
    (1..=upto.min(p)).fold(Expr::zero(), |acc, i| {
        &acc + &(&Expr::var(Coordinate::Z(i as u16)) * &y.pow(i as u32 + 1))
    })
}

pub fn builtin_f(p: usize, selector: &FSelector) -> Result<Expr, GeometryError> {
    if p == 0 {
        return Err(GeometryError::InvalidP);
    }
    let y = Expr::var(Coordinate::Y);
    Ok(match selector {
        FSelector::K(k) if *k > p => return Err(GeometryError::SelectorOutOfRange { k: *k, p }),
        FSelector::K(k) => z_chain(p, *k),
        FSelector::PPlus1 => &z_chain(p, p) + &y.pow(p as u32 + 3),
        FSelector::PPlus2 => &z_chain(p, p) + &Expr::exp_y(1),
        FSelector::Psi(psi) => {
            if let Some(c) = psi.coordinates().into_iter().find(|c| *c != Coordinate::Y) {
                return Err(GeometryError::PsiNotInY(c));
            }
            psi + &z_chain(p, p)
        }
    })
}

/// Inverse metric from the block form: the (x, x*) block [[g_xx,1],[1,0]]
/// inverts to [[0,1],[1,−g_xx]], every other pairing is its own inverse.
pub fn inverse_metric(g: &MetricField) -> SparseTensor<Expr> {
    let n = g.dim();
    let half = n / 2;
    let mut inv = SparseTensor::new(n, 2);
    for a in 0..half {
        inv.set(vec![a as u16, (a + half) as u16], Expr::one());
        inv.set(vec![(a + half) as u16, a as u16], Expr::one());
    }
    inv.set(vec![half as u16, half as u16], -g.gxx());
    inv
}

/// Sparse contraction of two rank-2 fields over the middle index.
fn matmul2(a: &SparseTensor<Expr>, b: &SparseTensor<Expr>) -> SparseTensor<Expr> {
    let mut out = SparseTensor::new(a.dim(), 2);
    for (ia, va) in a.entries() {
        let k = [ia[1]];
        for (ib, vb) in b.entries_with_prefix(&k) {
            out.accumulate(vec![ia[0], ib[1]], &(va * vb));
        }
    }
    out
}

/// Symbolic check g·g⁻¹ = Id.
pub fn inverse_is_exact(g: &MetricField) -> bool {
    let prod = matmul2(&g.tensor(), &inverse_metric(g));
    let n = g.dim();
    let mut id = SparseTensor::new(n, 2);
    for a in 0..n {
        id.set(vec![a as u16, a as u16], Expr::one());
    }
    prod == id
}

/// Γ^c_ab stored at index (c, a, b).
#[derive(Clone, Debug, PartialEq)]
pub struct Connection {
    p: usize,
    symbols: SparseTensor<Expr>,
}

impl Connection {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn symbols(&self) -> &SparseTensor<Expr> {
        &self.symbols
    }

    pub fn get(&self, c: usize, a: usize, b: usize) -> Expr {
        self.symbols.value(&[c as u16, a as u16, b as u16])
    }
}

pub fn christoffel(g: &MetricField) -> Connection {
    let n = g.dim();
    let p = g.p();
    // dg[(d, b, a)] = ∂_a g_db, only for non-constant g entries
    let mut dg: Vec<(usize, usize, usize, Expr)> = Vec::new();
    let gt = g.tensor();
    for (idx, v) in gt.entries() {
        for c in v.coordinates() {
            let d = v.differentiate(c);
            if !d.is_zero() {
                dg.push((idx[0] as usize, idx[1] as usize, c.index(p), d));
            }
        }
    }
    let half = Rational::new(1.into(), 2.into());
    // Γ_{d,ab} = ½(∂_a g_db + ∂_b g_da − ∂_d g_ab)
    let mut lower: SparseTensor<Expr> = SparseTensor::new(n, 3);
    for (u, v, e, val) in &dg {
        let hv = val.scale(&half);
        lower.accumulate(vec![*u as u16, *e as u16, *v as u16], &hv);
        lower.accumulate(vec![*u as u16, *v as u16, *e as u16], &hv);
        lower.accumulate(vec![*e as u16, *u as u16, *v as u16], &-&hv);
    }
    let inv = inverse_metric(g);
    let mut symbols = SparseTensor::new(n, 3);
    for (idx, val) in lower.entries() {
        let d = idx[0];
        for c in 0..n as u16 {
            if let Some(gcd) = inv.get(&[c, d]) {
                symbols.accumulate(vec![c, idx[1], idx[2]], &(gcd * val));
            }
        }
    }
    Connection { p, symbols }
}

/// All-covariant curvature tensor R(a,b,c,d).
pub fn curvature_tensor(g: &MetricField, conn: &Connection) -> SparseTensor<Expr> {
    let n = g.dim();
    let p = g.p();
    // riem[(l, k, i, j)] = R^l_{kij}
    let mut riem: SparseTensor<Expr> = SparseTensor::new(n, 4);
    for (idx, gam) in conn.symbols.entries() {
        let (l, j, k) = (idx[0], idx[1], idx[2]);
        for c in gam.coordinates() {
            let i = c.index(p) as u16;
            let d = gam.differentiate(c);
            // ∂_iΓ^l_{jk} at (l,k,i,j) and −∂_jΓ^l_{ik} with roles swapped
            riem.accumulate(vec![l, k, i, j], &d);
            riem.accumulate(vec![l, k, j, i], &-&d);
        }
    }
    for (idx1, g1) in conn.symbols.entries() {
        let (l, i, m) = (idx1[0], idx1[1], idx1[2]);
        let pre = [m];
        for (idx2, g2) in conn.symbols.entries_with_prefix(&pre) {
            let (j, k) = (idx2[1], idx2[2]);
            let prod = g1 * g2;
            riem.accumulate(vec![l, k, i, j], &prod);
            riem.accumulate(vec![l, k, j, i], &-&prod);
        }
    }
    let gt = g.tensor();
    let mut r = SparseTensor::new(n, 4);
    for (idx, val) in riem.entries() {
        let (m, c, a, b) = (idx[0], idx[1], idx[2], idx[3]);
        for d in 0..n as u16 {
            if let Some(gdm) = gt.get(&[d, m]) {
                r.accumulate(vec![a, b, c, d], &(gdm * val));
            }
        }
    }
    r
}

/// ∇T with the derivative index appended as the last slot.
pub fn covariant_derivative(t: &SparseTensor<Expr>, conn: &Connection) -> SparseTensor<Expr> {
    let p = conn.p();
    let mut out = SparseTensor::new(t.dim(), t.rank() + 1);
    for (idx, v) in t.entries() {
        for c in v.coordinates() {
            let d = v.differentiate(c);
            let mut i = idx.clone();
            i.push(c.index(p) as u16);
            out.accumulate(i, &d);
        }
        for s in 0..idx.len() {
            let pre = [idx[s]];
            for (gi, gam) in conn.symbols.entries_with_prefix(&pre) {
                let (e, b) = (gi[1], gi[2]);
                let mut i = idx.clone();
                i[s] = b;
                i.push(e);
                out.accumulate(i, &-&(gam * v));
            }
        }
    }
    out
}

/// R, ∇R, …, ∇^kR.
pub fn curvature_derivatives(g: &MetricField, k: usize) -> Vec<SparseTensor<Expr>> {
    let conn = christoffel(g);
    let mut out = vec![curvature_tensor(g, &conn)];
    for _ in 0..k {
        let next = covariant_derivative(out.last().unwrap(), &conn);
        out.push(next);
    }
    out
}

/// Ordered ξ-sequences of length m over the W coordinates with
/// ∂_{ξ1}…∂_{ξm} h ≠ 0, together with that derivative.
pub fn nonzero_derivatives(p: usize, h: &Expr, m: usize) -> Vec<(Vec<u16>, Expr)> {
    let w: Vec<(Coordinate, u16)> = Coordinate::w_coordinates(p)
        .into_iter()
        .map(|c| (c, c.index(p) as u16))
        .collect();
    let mut out = Vec::new();
    let mut stack: Vec<(Vec<u16>, Expr)> = vec![(Vec::new(), h.clone())];
    while let Some((seq, e)) = stack.pop() {
        if seq.len() == m {
            out.push((seq, e));
            continue;
        }
        for (c, i) in &w {
            let d = e.differentiate(*c);
            if !d.is_zero() {
                let mut s = seq.clone();
                s.push(*i);
                stack.push((s, d));
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// The closed form for ∇^kR: (∂x,∂ξ1,∂ξ2,∂x;∂ξ3,…) = −½∂ξ1…∂ξ_{k+2} g_xx,
/// with the outer-pair antisymmetries, and nothing else.
pub fn expected_curvature_derivative(g: &MetricField, k: usize) -> SparseTensor<Expr> {
    let mut t = SparseTensor::new(g.dim(), k + 4);
    for (seq, val) in nonzero_derivatives(g.p(), g.h(), k + 2) {
        t.insert_curvature_pattern(0, &seq, &val);
    }
    t
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClosedFormRow {
    pub k: usize,
    pub pass: bool,
    pub components: usize,
    /// First differing component as (index, computed, expected).
    pub first_difference: Option<(Index, Expr, Expr)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClosedFormReport {
    pub rows: Vec<ClosedFormRow>,
}

impl ClosedFormReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

pub fn check_closed_form(g: &MetricField, k_max: usize) -> ClosedFormReport {
    let computed = curvature_derivatives(g, k_max);
    let rows = computed
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let expected = expected_curvature_derivative(g, k);
            let first_difference = t.first_difference(&expected);
            ClosedFormRow {
                k,
                pass: first_difference.is_none(),
                components: t.len(),
                first_difference,
            }
        })
        .collect();
    ClosedFormReport { rows }
}

fn inverse_columns(inv: &SparseTensor<Expr>) -> BTreeMap<u16, Vec<(u16, Expr)>> {
    let mut cols: BTreeMap<u16, Vec<(u16, Expr)>> = BTreeMap::new();
    for (idx, v) in inv.entries() {
        cols.entry(idx[1]).or_default().push((idx[0], v.clone()));
    }
    cols
}

/// Raises the given slots with g⁻¹.
pub fn raise(
    t: &SparseTensor<Expr>,
    inv: &SparseTensor<Expr>,
    slots: &[usize],
) -> SparseTensor<Expr> {
    let cols = inverse_columns(inv);
    let mut cur = t.clone();
    for &s in slots {
        let mut next = SparseTensor::new(t.dim(), t.rank());
        for (idx, v) in cur.entries() {
            if let Some(col) = cols.get(&idx[s]) {
                for (i, gv) in col {
                    let mut j = idx.clone();
                    j[s] = *i;
                    next.accumulate(j, &(gv * v));
                }
            }
        }
        cur = next;
    }
    cur
}

fn full_contraction(a: &SparseTensor<Expr>, b_up: &SparseTensor<Expr>) -> Expr {
    let mut acc = Expr::zero();
    for (idx, v) in a.entries() {
        if let Some(w) = b_up.get(idx) {
            acc = &acc + &(v * w);
        }
    }
    acc
}

/// Contracts slots `s1` and `s2` of `t` with g⁻¹.
fn trace(
    t: &SparseTensor<Expr>,
    inv: &SparseTensor<Expr>,
    s1: usize,
    s2: usize,
) -> SparseTensor<Expr> {
    let mut out = SparseTensor::new(t.dim(), t.rank() - 2);
    for (idx, v) in t.entries() {
        if let Some(gv) = inv.get(&[idx[s1], idx[s2]]) {
            let rest: Index = idx
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != s1 && *i != s2)
                .map(|(_, x)| *x)
                .collect();
            out.accumulate(rest, &(gv * v));
        }
    }
    out
}

/// The scalar invariants checked for vanishing: τ, |Ric|², |R|², the cubic
/// contraction R^{ab}_{cd}R^{cd}_{ef}R^{ef}_{ab}, and Δτ.
pub fn weyl_scalars(g: &MetricField) -> Vec<(String, Expr)> {
    let conn = christoffel(g);
    let r = curvature_tensor(g, &conn);
    let inv = inverse_metric(g);
    let p = g.p();

    let ric = trace(&r, &inv, 0, 3);
    let tau = {
        let t = trace(&ric, &inv, 0, 1);
        t.value(&[])
    };
    let ric_up = raise(&ric, &inv, &[0, 1]);
    let ric_sq = full_contraction(&ric, &ric_up);
    let r_up = raise(&r, &inv, &[0, 1, 2, 3]);
    let r_sq = full_contraction(&r, &r_up);

    // N[(a,b),(c,d)] = R^{ab}_{cd}
    let mixed = raise(&r, &inv, &[0, 1]);
    let mut cubic = Expr::zero();
    for (i1, v1) in mixed.entries() {
        let pre2 = [i1[2], i1[3]];
        for (i2, v2) in mixed.entries_with_prefix(&pre2) {
            let v12 = v1 * v2;
            if let Some(v3) = mixed.get(&[i2[2], i2[3], i1[0], i1[1]]) {
                cubic = &cubic + &(&v12 * v3);
            }
        }
    }

    let mut lap = Expr::zero();
    for (idx, gv) in inv.entries() {
        let a = Coordinate::from_index(p, idx[0] as usize);
        let b = Coordinate::from_index(p, idx[1] as usize);
        let mut term = tau.differentiate(a).differentiate(b);
        for c in 0..g.dim() {
            let gam = conn.get(c, idx[0] as usize, idx[1] as usize);
            if !gam.is_zero() {
                term = &term - &(&gam * &tau.differentiate(Coordinate::from_index(p, c)));
            }
        }
        lap = &lap + &(gv * &term);
    }

    vec![
        ("scalar_curvature".to_string(), tau),
        ("ricci_norm_sq".to_string(), ric_sq),
        ("riemann_norm_sq".to_string(), r_sq),
        ("riemann_cubic".to_string(), cubic),
        ("laplacian_scalar_curvature".to_string(), lap),
    ]
}

/// ∇R = 0 symbolically.
pub fn is_symmetric_space(g: &MetricField) -> bool {
    let d = curvature_derivatives(g, 1);
    d[1].is_empty()
}

/// Total degree ≤ 2 with no exp factor.
pub fn is_at_most_quadratic(f: &Expr) -> bool {
    f.polynomial_degree().is_some_and(|d| d <= 2)
}

/// R(a,b,c,d) + R(b,c,a,d) + R(c,a,b,d) = 0 at every index.
pub fn first_bianchi_holds(r: &SparseTensor<Expr>) -> bool {
    r.entries().all(|(idx, _)| {
        let (a, b, c, d) = (idx[0], idx[1], idx[2], idx[3]);
        [(a, b, c), (b, c, a), (c, a, b)].iter().all(|&(x, y, z)| {
            let s = &(&r.value(&[x, y, z, d]) + &r.value(&[y, z, x, d])) + &r.value(&[z, x, y, d]);
            s.is_zero()
        })
    })
}

/// R(a,b,c,d) = −R(b,a,c,d) = R(c,d,a,b).
pub fn pair_symmetries_hold(r: &SparseTensor<Expr>) -> bool {
    r.entries().all(|(idx, v)| {
        let (a, b, c, d) = (idx[0], idx[1], idx[2], idx[3]);
        r.value(&[b, a, c, d]) == -v && r.value(&[c, d, a, b]) == *v
    })
}

/// ∇R(a,b,c,d;e) + ∇R(a,b,d,e;c) + ∇R(a,b,e,c;d) = 0 at every index.
pub fn second_bianchi_holds(dr: &SparseTensor<Expr>) -> bool {
    dr.entries().all(|(idx, _)| {
        let (a, b) = (idx[0], idx[1]);
        let (c, d, e) = (idx[2], idx[3], idx[4]);
        [(c, d, e), (d, e, c), (e, c, d)].iter().all(|&(x, y, z)| {
            let s = &(&dr.value(&[a, b, x, y, z]) + &dr.value(&[a, b, y, z, x]))
                + &dr.value(&[a, b, z, x, y]);
            s.is_zero()
        })
    })
}

/// ∇g = 0 symbolically.
pub fn metric_is_parallel(g: &MetricField, conn: &Connection) -> bool {
    covariant_derivative(&g.tensor(), conn).is_empty()
}

pub fn evaluate_tensor(t: &SparseTensor<Expr>, pt: &Point) -> SparseTensor<Scalar> {
    t.map(|e| e.evaluate(pt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::int;
    use std::collections::BTreeMap;

    fn y() -> Expr {
        Expr::var(Coordinate::Y)
    }
    fn z(i: u16) -> Expr {
        Expr::var(Coordinate::Z(i))
    }
    fn idx(p: usize, cs: &[Coordinate]) -> Vec<u16> {
        cs.iter().map(|c| c.index(p) as u16).collect()
    }

    #[test]
    fn metric_definition() {
        let g = build_metric(1, Expr::zero()).unwrap();
        let expect =
            &(&y() * &Expr::var(Coordinate::YTilde)) + &(&z(1) * &Expr::var(Coordinate::ZTilde(1)));
        assert_eq!(g.gxx(), &expect.scale(&int(-2)));
        assert_eq!(g.component(0, Coordinate::XStar.index(1)), Expr::one());

        let g = build_metric(1, &z(1) * &y().pow(2)).unwrap();
        let pt = Point::new([(Coordinate::Y, int(1)), (Coordinate::Z(1), int(1))]);
        assert_eq!(g.gxx().evaluate(&pt), Scalar::Exact(int(-2)));

        let f = builtin_f(2, &FSelector::K(2)).unwrap();
        assert_eq!(f, &(&z(1) * &y().pow(2)) + &(&z(2) * &y().pow(3)));
    }

    #[test]
    fn forbidden_coordinates() {
        assert_eq!(
            build_metric(1, Expr::var(Coordinate::YTilde)),
            Err(GeometryError::ForbiddenCoordinate(Coordinate::YTilde))
        );
        assert_eq!(
            build_metric(1, z(2)),
            Err(GeometryError::ForbiddenCoordinate(Coordinate::Z(2)))
        );
        assert!(builtin_f(1, &FSelector::K(2)).is_err());
        assert!(builtin_f(1, &FSelector::Psi(z(1))).is_err());
    }

    #[test]
    fn builtin_functions() {
        assert_eq!(builtin_f(1, &FSelector::K(1)).unwrap(), &z(1) * &y().pow(2));
        assert_eq!(
            builtin_f(1, &FSelector::PPlus2).unwrap(),
            &(&z(1) * &y().pow(2)) + &Expr::exp_y(1)
        );
        assert_eq!(
            builtin_f(1, &FSelector::PPlus1).unwrap(),
            &(&z(1) * &y().pow(2)) + &y().pow(4)
        );
        let psi = &Expr::exp_y(1) + &Expr::exp_y(2);
        let want = &(&psi + &(&z(1) * &y().pow(2))) + &(&z(2) * &y().pow(3));
        assert_eq!(builtin_f(2, &FSelector::Psi(psi)).unwrap(), want);
    }

    #[test]
    fn inverse_metric_values() {
        let g = build_metric(1, Expr::zero()).unwrap();
        let inv = inverse_metric(&g);
        let xs = Coordinate::XStar.index(1) as u16;
        assert_eq!(inv.value(&[xs, xs]), g.h().scale(&int(2)));
        assert_eq!(
            inv.value(&[1, Coordinate::YStar.index(1) as u16]),
            Expr::one()
        );
        let g = build_metric(1, &z(1) * &y().pow(2)).unwrap();
        assert_eq!(
            inverse_metric(&g)
                .value(&[xs, xs])
                .evaluate(&Point::origin()),
            Scalar::zero()
        );
        for p in 1..=3 {
            let g = build_metric(p, builtin_f(p, &FSelector::PPlus2).unwrap()).unwrap();
            assert!(inverse_is_exact(&g));
        }
    }

    #[test]
    fn signature_is_neutral() {
        for p in 1..=2 {
            let g = build_metric(p, builtin_f(p, &FSelector::PPlus1).unwrap()).unwrap();
            for pt in [
                Point::origin(),
                Point::new([(Coordinate::Y, int(3)), (Coordinate::YTilde, int(-2))]),
            ] {
                assert_eq!(g.signature_at(&pt), (3 + 2 * p, 3 + 2 * p, 0));
            }
        }
    }

    /// Finite differences of g at a rational point, used as an independent
    /// oracle for the Christoffel symbols.
    fn fd_christoffel_lowered(
        g: &MetricField,
        pt: &BTreeMap<Coordinate, f64>,
        d: usize,
        a: usize,
        b: usize,
    ) -> f64 {
        let p = g.p();
        let hstep = 1e-5;
        let dg = |i: usize, j: usize, k: usize| -> f64 {
            let c = Coordinate::from_index(p, k);
            let e = g.component(i, j);
            let mut plus = pt.clone();
            let mut minus = pt.clone();
            *plus.entry(c).or_insert(0.0) += hstep;
            *minus.entry(c).or_insert(0.0) -= hstep;
            (e.evaluate_f64(&plus) - e.evaluate_f64(&minus)) / (2.0 * hstep)
        };
        0.5 * (dg(d, b, a) + dg(d, a, b) - dg(a, b, d))
    }

    #[test]
    fn christoffel_against_finite_differences() {
        let g = build_metric(1, &z(1) * &y().pow(2)).unwrap();
        let conn = christoffel(&g);
        let p = 1;
        let ys = Coordinate::YStar.index(p);
        let xs = Coordinate::XStar.index(p);
        let expect = &(&y() * &z(1)).scale(&int(2)) + &Expr::var(Coordinate::YTilde);
        assert_eq!(conn.get(ys, 0, 0), expect);
        assert_eq!(conn.get(xs, 0, 1), -&expect);

        let pt: BTreeMap<Coordinate, f64> = [
            (Coordinate::Y, 0.75),
            (Coordinate::Z(1), -1.25),
            (Coordinate::YTilde, 0.5),
            (Coordinate::ZTilde(1), 2.0),
        ]
        .into_iter()
        .collect();
        let inv = inverse_metric(&g);
        let n = g.dim();
        for c in 0..n {
            for a in 0..n {
                for b in 0..n {
                    let sym = conn.get(c, a, b).evaluate_f64(&pt);
                    let fd: f64 = (0..n)
                        .map(|d| {
                            inv.value(&[c as u16, d as u16]).evaluate_f64(&pt)
                                * fd_christoffel_lowered(&g, &pt, d, a, b)
                        })
                        .sum();
                    assert!(
                        (sym - fd).abs() <= 1e-8 * sym.abs().max(1.0),
                        "Γ^{c}_{a}{b}: {sym} vs {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn curvature_examples() {
        let p = 1;
        let g = build_metric(p, &z(1) * &y().pow(2)).unwrap();
        let conn = christoffel(&g);
        let r = curvature_tensor(&g, &conn);
        use Coordinate::*;
        assert_eq!(r.value(&idx(p, &[X, Y, YTilde, X])), Expr::one());
        assert_eq!(r.value(&idx(p, &[X, Y, Z(1), X])), y().scale(&int(2)));
        assert!(r
            .entries()
            .all(|(i, _)| i.iter().filter(|&&s| s == 0).count() == 2));

        let dr = covariant_derivative(&r, &conn);
        assert_eq!(dr.value(&idx(p, &[X, Y, Z(1), X, Y])), Expr::int(2));
        let d2r = covariant_derivative(&dr, &conn);
        assert!(d2r.is_empty());
        assert!(metric_is_parallel(&g, &conn));
    }

    #[test]
    fn curvature_identities() {
        for p in 1..=2 {
            for sel in [FSelector::K(p), FSelector::PPlus1, FSelector::PPlus2] {
                let g = build_metric(p, builtin_f(p, &sel).unwrap()).unwrap();
                let d = curvature_derivatives(&g, 1);
                assert!(first_bianchi_holds(&d[0]));
                assert!(pair_symmetries_hold(&d[0]));
                assert!(second_bianchi_holds(&d[1]));
            }
        }
    }

    #[test]
    fn closed_form_examples() {
        let cases = [
            (1, FSelector::K(1), 3),
            (1, FSelector::PPlus2, 5),
            (2, FSelector::K(2), 4),
        ];
        for (p, sel, k) in cases {
            let g = build_metric(p, builtin_f(p, &sel).unwrap()).unwrap();
            let rep = check_closed_form(&g, k);
            assert_eq!(rep.rows.len(), k + 1);
            assert!(rep.all_pass(), "{rep:?}");
        }
    }

    #[test]
    fn higher_derivatives_vanish_for_finite_families() {
        for p in 1..=3 {
            for j in 0..=p {
                let g = build_metric(p, builtin_f(p, &FSelector::K(j)).unwrap()).unwrap();
                let d = curvature_derivatives(&g, j + 1);
                assert!(d[j + 1].is_empty(), "p={p} j={j}");
                if j > 0 {
                    assert!(!d[j].is_empty());
                }
            }
        }
    }

    #[test]
    fn weyl_scalar_examples() {
        let g = build_metric(1, builtin_f(1, &FSelector::K(1)).unwrap()).unwrap();
        let s = weyl_scalars(&g);
        assert_eq!(s.len(), 5);
        assert!(s.iter().all(|(_, e)| e.is_zero()));
        let g = build_metric(1, builtin_f(1, &FSelector::PPlus2).unwrap()).unwrap();
        assert!(weyl_scalars(&g).iter().all(|(_, e)| e.is_zero()));
    }

    #[test]
    fn symmetric_space_examples() {
        let cases = [
            (Expr::zero(), true),
            (&z(1) * &y().pow(2), false),
            (y().pow(2), true),
        ];
        for (f, want) in cases {
            let g = build_metric(1, f.clone()).unwrap();
            assert_eq!(is_symmetric_space(&g), want, "{f}");
            assert_eq!(is_at_most_quadratic(&f), want);
        }
    }
}
