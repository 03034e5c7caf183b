//! Truncated multivariate Taylor (jet) arithmetic.
//!
//! A [`Jet`] stores the Taylor coefficients `∂^α f(x₀)/α!` of a scalar field
//! about a base point, for every multi-index `α` of total degree up to the
//! truncation order.  Sums, products, quotients and the elementary functions
//! act on jets and produce the jet of the combined field, so any expression
//! built from them yields exact partial derivatives at the base point.
//!
//! Coefficients are kept in Taylor-normalized form (divided by `α!`), which
//! makes the product rule a plain convolution.  Multi-indices are enumerated
//! in graded lexicographic order, so the coefficients of a lower-order jet are
//! a prefix of those of a higher-order one.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, OnceLock, RwLock};

use crate::error::{Error, Result};

/// Shared index tables for all jets of one `(dim, order)` signature.
#[derive(Debug)]
pub struct JetShape {
    pub dim: usize,
    pub order: usize,
    /// Multi-indices in graded lexicographic order.
    pub indices: Vec<Vec<u8>>,
    pos: HashMap<Vec<u8>, usize>,
    /// Admissible coefficient products: `out[k] += a[i] * b[j]`.
    mul_table: Vec<(u32, u32, u32)>,
    /// Number of indices of total degree `< order` (prefix length of the
    /// next-lower shape).
    pub lower_len: usize,
    /// Per direction: `(source position, factor)` for the derivative jet.
    deriv_table: Vec<Vec<(u32, f64)>>,
}

fn enumerate_indices(dim: usize, order: usize) -> Vec<Vec<u8>> {
    let mut all = Vec::new();
    for total in 0..=order {
        let mut idx = vec![0u8; dim];
        fill(&mut all, &mut idx, 0, total);
    }
    return all;

    fn fill(out: &mut Vec<Vec<u8>>, idx: &mut Vec<u8>, slot: usize, remaining: usize) {
        if slot + 1 == idx.len() {
            idx[slot] = remaining as u8;
            out.push(idx.clone());
            return;
        }
        for v in (0..=remaining).rev() {
            idx[slot] = v as u8;
            fill(out, idx, slot + 1, remaining - v);
        }
    }
}

impl JetShape {
    fn new(dim: usize, order: usize) -> Self {
        assert!(dim > 0, "jet dimension must be positive");
        let indices = enumerate_indices(dim, order);
        let mut pos = HashMap::with_capacity(indices.len());
        for (i, idx) in indices.iter().enumerate() {
            pos.insert(idx.clone(), i);
        }
        let degree = |idx: &[u8]| idx.iter().map(|&v| v as usize).sum::<usize>();
        let lower_len = indices.iter().filter(|i| degree(i) < order).count();

        let mut mul_table = Vec::new();
        for (i, a) in indices.iter().enumerate() {
            for (j, b) in indices.iter().enumerate() {
                if degree(a) + degree(b) <= order {
                    let sum: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                    let k = pos[&sum];
                    mul_table.push((i as u32, j as u32, k as u32));
                }
            }
        }

        let mut deriv_table = Vec::with_capacity(dim);
        for a in 0..dim {
            let mut tab = Vec::with_capacity(lower_len);
            for idx in indices.iter().take(lower_len) {
                let mut src = idx.clone();
                src[a] += 1;
                let factor = src[a] as f64;
                tab.push((pos[&src] as u32, factor));
            }
            deriv_table.push(tab);
        }

        JetShape {
            dim,
            order,
            indices,
            pos,
            mul_table,
            lower_len,
            deriv_table,
        }
    }

    pub fn position(&self, multi_index: &[u8]) -> Option<usize> {
        self.pos.get(multi_index).copied()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

type ShapeCache = RwLock<HashMap<(usize, usize), Arc<JetShape>>>;

fn shape_cache() -> &'static ShapeCache {
    static CACHE: OnceLock<ShapeCache> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Fetch (or build) the shared tables for `(dim, order)`.
pub fn shape(dim: usize, order: usize) -> Arc<JetShape> {
    if let Some(s) = shape_cache().read().unwrap().get(&(dim, order)) {
        return s.clone();
    }
    let mut cache = shape_cache().write().unwrap();
    cache
        .entry((dim, order))
        .or_insert_with(|| Arc::new(JetShape::new(dim, order)))
        .clone()
}

/// Truncated Taylor expansion of a scalar field at a point.
#[derive(Clone)]
pub struct Jet {
    shape: Arc<JetShape>,
    coeffs: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Jet(dim={}, order={}, value={})",
            self.shape.dim,
            self.shape.order,
            self.value()
        )
    }
}

impl Jet {
    pub fn constant(dim: usize, order: usize, value: f64) -> Jet {
        let shape = shape(dim, order);
        let mut coeffs = vec![0.0; shape.len()];
        coeffs[0] = value;
        Jet { shape, coeffs }
    }

    /// Build a jet from raw Taylor-normalized coefficients in graded
    /// lexicographic order.
    pub fn from_coeffs(dim: usize, order: usize, coeffs: Vec<f64>) -> Jet {
        let shape = shape(dim, order);
        assert_eq!(coeffs.len(), shape.len(), "coefficient count mismatch");
        Jet { shape, coeffs }
    }

    /// The jet of the `i`-th coordinate function about the base point.
    pub fn variable(dim: usize, order: usize, i: usize, base: f64) -> Jet {
        assert!(i < dim, "variable index out of range");
        let shape = shape(dim, order);
        let mut coeffs = vec![0.0; shape.len()];
        coeffs[0] = base;
        if order >= 1 {
            let mut e = vec![0u8; dim];
            e[i] = 1;
            let p = shape.position(&e).unwrap();
            coeffs[p] = 1.0;
        }
        Jet { shape, coeffs }
    }

    pub fn dim(&self) -> usize {
        self.shape.dim
    }

    pub fn order(&self) -> usize {
        self.shape.order
    }

    pub fn shape(&self) -> &Arc<JetShape> {
        &self.shape
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Field value at the base point (coefficient of the zero multi-index).
    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// Derivative value `∂^α f(x₀)`, i.e. `α! * coeffs[α]`.
    pub fn partial(&self, multi_index: &[usize]) -> Result<f64> {
        if multi_index.len() != self.shape.dim {
            return Err(Error::Shape(format!(
                "multi-index length {} does not match jet dimension {}",
                multi_index.len(),
                self.shape.dim
            )));
        }
        let degree: usize = multi_index.iter().sum();
        if degree > self.shape.order {
            return Err(Error::Order {
                requested: degree,
                order: self.shape.order,
            });
        }
        let idx: Vec<u8> = multi_index.iter().map(|&v| v as u8).collect();
        let p = self.shape.position(&idx).expect("index within order");
        let mut factorial = 1.0;
        for &v in multi_index {
            for k in 2..=v {
                factorial *= k as f64;
            }
        }
        Ok(self.coeffs[p] * factorial)
    }

    /// Copy truncated to a lower (or equal) order.
    pub fn truncated(&self, order: usize) -> Jet {
        if order >= self.shape.order {
            return self.clone();
        }
        let shape = shape(self.shape.dim, order);
        let coeffs = self.coeffs[..shape.len()].to_vec();
        Jet { shape, coeffs }
    }

    /// Jet of the partial derivative `∂_a f`, one order lower.
    pub fn derivative(&self, a: usize) -> Jet {
        assert!(self.shape.order > 0, "cannot differentiate an order-0 jet");
        assert!(a < self.shape.dim);
        let out_shape = shape(self.shape.dim, self.shape.order - 1);
        let tab = &self.shape.deriv_table[a];
        let mut coeffs = Vec::with_capacity(out_shape.len());
        for &(src, factor) in tab.iter() {
            coeffs.push(self.coeffs[src as usize] * factor);
        }
        debug_assert_eq!(coeffs.len(), out_shape.len());
        Jet {
            shape: out_shape,
            coeffs,
        }
    }

    fn check_match(&self, other: &Jet) -> Result<()> {
        if self.shape.dim != other.shape.dim || self.shape.order != other.shape.order {
            return Err(Error::JetMismatch {
                dim_a: self.shape.dim,
                order_a: self.shape.order,
                dim_b: other.shape.dim,
                order_b: other.shape.order,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Jet) -> Result<Jet> {
        self.check_match(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Jet {
            shape: self.shape.clone(),
            coeffs,
        })
    }

    pub fn sub(&self, other: &Jet) -> Result<Jet> {
        self.check_match(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Jet {
            shape: self.shape.clone(),
            coeffs,
        })
    }

    pub fn mul(&self, other: &Jet) -> Result<Jet> {
        self.check_match(other)?;
        let mut coeffs = vec![0.0; self.shape.len()];
        for &(i, j, k) in &self.shape.mul_table {
            coeffs[k as usize] += self.coeffs[i as usize] * other.coeffs[j as usize];
        }
        Ok(Jet {
            shape: self.shape.clone(),
            coeffs,
        })
    }

    pub fn div(&self, other: &Jet) -> Result<Jet> {
        self.check_match(other)?;
        self.mul(&other.recip()?)
    }

    pub fn neg(&self) -> Jet {
        let coeffs = self.coeffs.iter().map(|c| -c).collect();
        Jet {
            shape: self.shape.clone(),
            coeffs,
        }
    }

    pub fn scale(&self, s: f64) -> Jet {
        let coeffs = self.coeffs.iter().map(|c| c * s).collect();
        Jet {
            shape: self.shape.clone(),
            coeffs,
        }
    }

    /// Composes `f` with this jet, given the Taylor coefficients
    /// `d[k] = f^(k)(value)/k!` of `f` about the jet's value.
    fn compose(&self, d: &[f64]) -> Jet {
        let order = self.shape.order;
        debug_assert_eq!(d.len(), order + 1);
        // h = self - value, nilpotent to order+1; Horner in h.
        let mut h = self.clone();
        h.coeffs[0] = 0.0;
        let mut acc = Jet::constant(self.shape.dim, order, d[order]);
        for k in (0..order).rev() {
            acc = acc.mul(&h).expect("same shape");
            acc.coeffs[0] += d[k];
        }
        acc
    }

    pub fn recip(&self) -> Result<Jet> {
        let c = self.value();
        if c == 0.0 {
            return Err(Error::Singular(
                "division by a jet with vanishing value".into(),
            ));
        }
        let mut d = vec![0.0; self.shape.order + 1];
        let mut cur = 1.0 / c;
        for dk in d.iter_mut() {
            *dk = cur;
            cur *= -1.0 / c;
        }
        Ok(self.compose(&d))
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        let mut d = vec![0.0; self.shape.order + 1];
        let mut fact = 1.0;
        for (k, dk) in d.iter_mut().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            *dk = e / fact;
        }
        self.compose(&d)
    }

    pub fn ln(&self) -> Result<Jet> {
        let c = self.value();
        if c <= 0.0 {
            return Err(Error::Singular(format!("log of non-positive value {c}")));
        }
        let mut d = vec![0.0; self.shape.order + 1];
        d[0] = c.ln();
        for (k, dk) in d.iter_mut().enumerate().skip(1) {
            // f^(k)(c)/k! = (-1)^(k-1) / (k c^k)
            *dk = if k % 2 == 1 { 1.0 } else { -1.0 } / (k as f64 * c.powi(k as i32));
        }
        Ok(self.compose(&d))
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [s, c, -s, -c];
        let mut d = vec![0.0; self.shape.order + 1];
        let mut fact = 1.0;
        for (k, dk) in d.iter_mut().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            *dk = cycle[k % 4] / fact;
        }
        self.compose(&d)
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [c, -s, -c, s];
        let mut d = vec![0.0; self.shape.order + 1];
        let mut fact = 1.0;
        for (k, dk) in d.iter_mut().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            *dk = cycle[k % 4] / fact;
        }
        self.compose(&d)
    }

    pub fn sqrt(&self) -> Result<Jet> {
        self.powf(0.5)
    }

    /// Integer power; valid for any base value (negative exponents need a
    /// nonzero value).
    pub fn powi(&self, p: i64) -> Result<Jet> {
        if p < 0 {
            return self.powi(-p)?.recip();
        }
        let mut acc = Jet::constant(self.shape.dim, self.shape.order, 1.0);
        let mut base = self.clone();
        let mut p = p as u64;
        while p > 0 {
            if p & 1 == 1 {
                acc = acc.mul(&base)?;
            }
            p >>= 1;
            if p > 0 {
                base = base.mul(&base)?;
            }
        }
        Ok(acc)
    }

    /// Real power via the binomial series; requires a positive value.
    pub fn powf(&self, alpha: f64) -> Result<Jet> {
        let c = self.value();
        if c <= 0.0 {
            return Err(Error::Singular(format!(
                "real power of non-positive value {c}"
            )));
        }
        let mut d = vec![0.0; self.shape.order + 1];
        let mut binom = 1.0;
        for (k, dk) in d.iter_mut().enumerate() {
            if k > 0 {
                binom *= (alpha - (k as f64 - 1.0)) / k as f64;
            }
            *dk = binom * c.powf(alpha - k as f64);
        }
        Ok(self.compose(&d))
    }

    /// General power: integer exponents go through [`Jet::powi`].
    pub fn pow(&self, exponent: &Jet) -> Result<Jet> {
        let e = exponent.value();
        let is_const = exponent.coeffs[1..].iter().all(|&c| c == 0.0);
        if is_const && e.fract() == 0.0 && e.abs() < 1e15 {
            return self.powi(e as i64);
        }
        if is_const {
            return self.powf(e);
        }
        // x^y = exp(y ln x)
        exponent.mul(&self.ln()?)?.exp().into_ok()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// First non-finite coefficient's multi-index, if any.
    pub fn non_finite_index(&self) -> Option<Vec<usize>> {
        self.coeffs
            .iter()
            .position(|c| !c.is_finite())
            .map(|p| self.shape.indices[p].iter().map(|&v| v as usize).collect())
    }
}

trait IntoOk: Sized {
    fn into_ok(self) -> Result<Self> {
        Ok(self)
    }
}
impl IntoOk for Jet {}

/// Pointwise combination selector for [`jet_combine`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JetOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Combine two jets of equal dimension and order.
pub fn jet_combine(a: &Jet, b: &Jet, op: JetOp) -> Result<Jet> {
    match op {
        JetOp::Add => a.add(b),
        JetOp::Sub => a.sub(b),
        JetOp::Mul => a.mul(b),
        JetOp::Div => a.div(b),
    }
}

/// Jet of a scalar field at `base_point`, to the given truncation order.
///
/// The field sees one jet per coordinate and combines them; any non-finite
/// coefficient in the result is reported with its multi-index.
pub fn jet_of<F>(field: F, base_point: &[f64], order: usize) -> Result<Jet>
where
    F: Fn(&[Jet]) -> Result<Jet>,
{
    let dim = base_point.len();
    let vars: Vec<Jet> = (0..dim)
        .map(|i| Jet::variable(dim, order, i, base_point[i]))
        .collect();
    let jet = field(&vars)?;
    if let Some(multi_index) = jet.non_finite_index() {
        return Err(Error::NonFinite { multi_index });
    }
    Ok(jet)
}

/// Derivative value `∂^α f(x₀)` read off a jet.
pub fn jet_partial(j: &Jet, multi_index: &[usize]) -> Result<f64> {
    j.partial(multi_index)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn polynomial_field_partials() {
        // x^2 + 3y at (1,2), order 2
        let j = jet_of(
            |v| {
                let x2 = v[0].mul(&v[0])?;
                x2.add(&v[1].scale(3.0))
            },
            &[1.0, 2.0],
            2,
        )
        .unwrap();
        assert_close(j.value(), 7.0, 1e-15);
        assert_close(j.partial(&[1, 0]).unwrap(), 2.0, 1e-15);
        assert_close(j.partial(&[0, 1]).unwrap(), 3.0, 1e-15);
        assert_close(j.partial(&[2, 0]).unwrap(), 2.0, 1e-15);
        assert_close(j.partial(&[1, 1]).unwrap(), 0.0, 1e-15);
    }

    #[test]
    fn constant_field() {
        let j = jet_of(
            |v| Ok(Jet::constant(v[0].dim(), v[0].order(), 5.0)),
            &[0.3],
            3,
        )
        .unwrap();
        assert_eq!(j.value(), 5.0);
        for c in &j.coeffs()[1..] {
            assert_eq!(*c, 0.0);
        }
    }

    #[test]
    fn sine_derivatives_at_zero() {
        let j = jet_of(|v| Ok(v[0].sin()), &[0.0], 3).unwrap();
        let expect = [0.0, 1.0, 0.0, -1.0];
        for (k, e) in expect.iter().enumerate() {
            assert_close(j.partial(&[k]).unwrap(), *e, 1e-15);
        }
    }

    #[test]
    fn product_truncates() {
        // (1+x)(1-x) at 0, order 2 -> 1 - x^2
        let a = jet_of(|v| Jet::constant(1, 2, 1.0).add(&v[0]), &[0.0], 2).unwrap();
        let b = jet_of(|v| Jet::constant(1, 2, 1.0).sub(&v[0]), &[0.0], 2).unwrap();
        let p = jet_combine(&a, &b, JetOp::Mul).unwrap();
        assert_close(p.value(), 1.0, 1e-15);
        assert_close(p.partial(&[1]).unwrap(), 0.0, 1e-15);
        assert_close(p.partial(&[2]).unwrap(), -2.0, 1e-15);
    }

    #[test]
    fn self_division_is_one() {
        let a = jet_of(
            |v| v[0].mul(&v[0])?.add(&Jet::constant(1, 3, 2.0)),
            &[0.7],
            3,
        )
        .unwrap();
        let q = jet_combine(&a, &a, JetOp::Div).unwrap();
        assert_close(q.value(), 1.0, 1e-14);
        for c in &q.coeffs()[1..] {
            assert_close(*c, 0.0, 1e-14);
        }
    }

    #[test]
    fn geometric_series() {
        // 1/(1-x) at 0, order 3 -> coefficients 1,1,1,1
        let one = Jet::constant(1, 3, 1.0);
        let d = jet_of(|v| one.sub(&v[0]), &[0.0], 3).unwrap();
        let q = one.div(&d).unwrap();
        for k in 0..=3 {
            let idx = [k];
            let p = q.shape().position(&[k as u8]).unwrap();
            assert_close(q.coeffs()[p], 1.0, 1e-14);
            let _ = idx;
        }
    }

    #[test]
    fn mixed_partial_of_xy() {
        let j = jet_of(|v| v[0].mul(&v[1]), &[0.0, 0.0], 2).unwrap();
        assert_close(j.partial(&[1, 1]).unwrap(), 1.0, 1e-15);
    }

    #[test]
    fn second_derivative_of_x_squared() {
        let j = jet_of(|v| v[0].mul(&v[0]), &[1.0], 2).unwrap();
        assert_close(j.partial(&[2]).unwrap(), 2.0, 1e-15);
    }

    #[test]
    fn fourth_derivative_of_exp() {
        let j = jet_of(|v| Ok(v[0].exp()), &[0.0], 5).unwrap();
        assert_close(j.partial(&[4]).unwrap(), 1.0, 1e-13);
    }

    #[test]
    fn degree_overflow_is_order_error() {
        let j = jet_of(|v| Ok(v[0].clone()), &[0.0], 2).unwrap();
        match j.partial(&[3]) {
            Err(Error::Order { requested, order }) => {
                assert_eq!((requested, order), (3, 2));
            }
            other => panic!("expected order error, got {other:?}"),
        }
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let a = Jet::constant(1, 2, 1.0);
        let b = Jet::constant(2, 2, 1.0);
        assert!(matches!(
            jet_combine(&a, &b, JetOp::Add),
            Err(Error::JetMismatch { .. })
        ));
    }

    #[test]
    fn division_by_zero_value_is_singular() {
        let a = Jet::constant(1, 2, 1.0);
        let b = Jet::variable(1, 2, 0, 0.0);
        assert!(matches!(
            jet_combine(&a, &b, JetOp::Div),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn log_domain_error_reports_nonfinite_or_singular() {
        let r = jet_of(|v| v[0].ln(), &[0.0], 2);
        assert!(r.is_err());
    }

    #[test]
    fn leibniz_rule_on_random_polynomials() {
        // d^alpha (fg) = sum over beta <= alpha of binom * d^beta f * d^(alpha-beta) g
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut rng = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let order = 4;
        let dim = 2;
        for _ in 0..10 {
            let ca: Vec<f64> = (0..6).map(|_| rng()).collect();
            let cb: Vec<f64> = (0..6).map(|_| rng()).collect();
            let poly = |c: Vec<f64>| {
                move |v: &[Jet]| -> Result<Jet> {
                    // c0 + c1 x + c2 y + c3 x^2 + c4 x y + c5 y^2
                    let x = &v[0];
                    let y = &v[1];
                    let mut acc = Jet::constant(x.dim(), x.order(), c[0]);
                    acc = acc.add(&x.scale(c[1]))?;
                    acc = acc.add(&y.scale(c[2]))?;
                    acc = acc.add(&x.mul(x)?.scale(c[3]))?;
                    acc = acc.add(&x.mul(y)?.scale(c[4]))?;
                    acc = acc.add(&y.mul(y)?.scale(c[5]))?;
                    Ok(acc)
                }
            };
            let pt = [rng(), rng()];
            let fa = jet_of(poly(ca.clone()), &pt, order).unwrap();
            let fb = jet_of(poly(cb.clone()), &pt, order).unwrap();
            let prod = fa.mul(&fb).unwrap();

            let binom = |n: usize, k: usize| -> f64 {
                let mut r = 1.0;
                for i in 0..k {
                    r = r * (n - i) as f64 / (i + 1) as f64;
                }
                r
            };
            for alpha in &[[1usize, 0], [0, 1], [2, 0], [1, 1], [2, 2], [3, 1]] {
                let lhs = prod.partial(alpha).unwrap();
                let mut rhs = 0.0;
                for i in 0..=alpha[0] {
                    for j in 0..=alpha[1] {
                        rhs += binom(alpha[0], i)
                            * binom(alpha[1], j)
                            * fa.partial(&[i, j]).unwrap()
                            * fb.partial(&[alpha[0] - i, alpha[1] - j]).unwrap();
                    }
                }
                assert_close(lhs, rhs, 1e-10 * (1.0 + lhs.abs()));
            }
            let _ = dim;
        }
    }

    #[test]
    fn elementary_functions_match_finite_differences() {
        // Central differences on f(x) = sin(x) * exp(x/2) / (2 + cos(x)), up to 3rd order.
        let f = |x: f64| x.sin() * (x / 2.0).exp() / (2.0 + x.cos());
        let x0 = 0.437;
        let j = jet_of(
            |v| {
                let num = v[0].sin().mul(&v[0].scale(0.5).exp())?;
                let den = Jet::constant(1, 4, 2.0).add(&v[0].cos())?;
                num.div(&den)
            },
            &[x0],
            4,
        )
        .unwrap();
        let h = 1e-4;
        let d1 = (f(x0 + h) - f(x0 - h)) / (2.0 * h);
        let d2 = (f(x0 + h) - 2.0 * f(x0) + f(x0 - h)) / (h * h);
        let d3 = (f(x0 + 2.0 * h) - 2.0 * f(x0 + h) + 2.0 * f(x0 - h) - f(x0 - 2.0 * h))
            / (2.0 * h * h * h);
        assert_close(j.partial(&[1]).unwrap(), d1, 1e-6 * (1.0 + d1.abs()));
        assert_close(j.partial(&[2]).unwrap(), d2, 1e-6 * (1.0 + d2.abs()));
        assert_close(j.partial(&[3]).unwrap(), d3, 1e-4 * (1.0 + d3.abs()));
    }

    #[test]
    fn derivative_jet_consistent() {
        let j = jet_of(|v| v[0].sin().mul(&v[1].exp()), &[0.3, -0.2], 5).unwrap();
        let dx = j.derivative(0);
        assert_close(
            dx.partial(&[1, 2]).unwrap(),
            j.partial(&[2, 2]).unwrap(),
            1e-12,
        );
        assert_close(dx.value(), j.partial(&[1, 0]).unwrap(), 1e-14);
    }

    #[test]
    fn real_power_matches_exp_log() {
        let j = jet_of(|v| v[0].powf(-2.0 / 3.0), &[1.7], 4).unwrap();
        let k = jet_of(|v| Ok(v[0].ln()?.scale(-2.0 / 3.0).exp()), &[1.7], 4).unwrap();
        for (a, b) in j.coeffs().iter().zip(k.coeffs()) {
            assert_close(*a, *b, 1e-12);
        }
    }
}
