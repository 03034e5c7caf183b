//! Affine and projective structures on a coordinate chart.
//!
//! An [`AffineStructure`] holds a torsion-free connection, either directly as
//! jet-evaluable coefficient fields, as the Levi-Civita connection of a
//! metric, or as a projective change of another structure.  A
//! [`PointContext`] expands everything the calculus needs at one point:
//! connection coefficient jets, the curvature decomposition into Weyl,
//! Schouten and Cotton pieces, the tractor connection coefficients, and the
//! coupled covariant derivative acting on jet tensors of any slot signature.
//!
//! Densities of weight `w` are trivialized in-chart so that
//! `∇_a σ = ∂_a σ + (w/(n+1)) Γ_{ab}{}^b σ`; this makes the metric volume
//! density parallel for Levi-Civita connections and reproduces the projective
//! transformation law `∇'_a σ = ∇_a σ + w Υ_a σ`.

use std::cell::OnceCell;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{self, Expr};
use crate::jet::Jet;
use crate::linalg::invert_jet_matrix;
use crate::tensor::{ChartTensor, Component, JetTensor, SlotKind, Tensor};

/// Closure form of a scalar field: coordinate jets in, field jet out.
pub type FieldFn = dyn Fn(&[Jet]) -> Result<Jet> + Send + Sync;

/// A jet-evaluable scalar field on the chart.
#[derive(Clone)]
pub enum Field {
    Zero,
    Const(f64),
    Expr(Arc<Expr>),
    Fn(Arc<FieldFn>),
}

impl std::fmt::Debug for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Field::Zero => write!(f, "Field::Zero"),
            Field::Const(c) => write!(f, "Field::Const({c})"),
            Field::Expr(_) => write!(f, "Field::Expr"),
            Field::Fn(_) => write!(f, "Field::Fn"),
        }
    }
}

impl Field {
    pub fn from_fn<F>(f: F) -> Field
    where
        F: Fn(&[Jet]) -> Result<Jet> + Send + Sync + 'static,
    {
        Field::Fn(Arc::new(f))
    }

    pub fn eval_jet(&self, point: &[f64], order: usize) -> Result<Jet> {
        let dim = point.len();
        match self {
            Field::Zero => Ok(Jet::constant(dim, order, 0.0)),
            Field::Const(c) => Ok(Jet::constant(dim, order, *c)),
            Field::Expr(e) => expr::eval_expr_jet(e, point, order),
            Field::Fn(f) => {
                let vars: Vec<Jet> = (0..dim)
                    .map(|i| Jet::variable(dim, order, i, point[i]))
                    .collect();
                let jet = f(&vars)?;
                if let Some(multi_index) = jet.non_finite_index() {
                    return Err(Error::NonFinite { multi_index });
                }
                Ok(jet)
            }
        }
    }

    /// Evaluate against already-seeded coordinate jets.
    pub fn eval_on(&self, vars: &[Jet]) -> Result<Jet> {
        match self {
            Field::Zero => Ok(Jet::constant(vars[0].dim(), vars[0].order(), 0.0)),
            Field::Const(c) => Ok(Jet::constant(vars[0].dim(), vars[0].order(), *c)),
            Field::Expr(e) => expr::eval_on_jet_vars(e, vars),
            Field::Fn(f) => f(vars),
        }
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        Ok(self.eval_jet(point, 0)?.value())
    }
}

#[derive(Debug, Clone)]
enum GammaSource {
    /// Connection coefficient fields `Γ_{ab}{}^c`, flattened `(a n + b) n + c`.
    Coefficients(Vec<Field>),
    /// Levi-Civita connection of the stored metric.
    LeviCivita,
    /// `Γ + Υ_a δ_c^b + Υ_c δ_a^b` over a base structure.
    Changed {
        base: Arc<AffineStructure>,
        upsilon: Vec<Field>,
    },
}

static NEXT_TAG: AtomicU64 = AtomicU64::new(1);

/// A chart of dimension `n` with a torsion-free affine connection.
#[derive(Debug, Clone)]
pub struct AffineStructure {
    n: usize,
    name: String,
    source: GammaSource,
    /// Metric component fields `g_{ab}`, flattened `a n + b`; present exactly
    /// when the connection is Levi-Civita.
    metric: Option<Vec<Field>>,
    tag: u64,
}

impl AffineStructure {
    pub fn from_gamma(n: usize, name: &str, gamma: Vec<Field>) -> AffineStructure {
        assert_eq!(gamma.len(), n * n * n, "need n^3 connection fields");
        AffineStructure {
            n,
            name: name.to_string(),
            source: GammaSource::Coefficients(gamma),
            metric: None,
            tag: NEXT_TAG.fetch_add(1, Ordering::Relaxed),
        }
    }

    pub fn flat(n: usize, name: &str) -> AffineStructure {
        AffineStructure::from_gamma(n, name, vec![Field::Zero; n * n * n])
    }

    pub fn from_metric(n: usize, name: &str, metric: Vec<Field>) -> AffineStructure {
        assert_eq!(metric.len(), n * n, "need n^2 metric fields");
        AffineStructure {
            n,
            name: name.to_string(),
            source: GammaSource::LeviCivita,
            metric: Some(metric),
            tag: NEXT_TAG.fetch_add(1, Ordering::Relaxed),
        }
    }

    /// Representative change within the projective class:
    /// `Γ'_{ac}{}^b = Γ_{ac}{}^b + Υ_a δ_c^b + Υ_c δ_a^b`.
    pub fn projective_change(self: &Arc<Self>, upsilon: Vec<Field>, name: &str) -> AffineStructure {
        assert_eq!(upsilon.len(), self.n, "one-form needs n components");
        AffineStructure {
            n: self.n,
            name: name.to_string(),
            source: GammaSource::Changed {
                base: self.clone(),
                upsilon,
            },
            metric: None,
            tag: NEXT_TAG.fetch_add(1, Ordering::Relaxed),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Identifies the representative connection; tractor components built
    /// from different tags must not be mixed.
    pub fn scale_tag(&self) -> u64 {
        self.tag
    }

    pub fn metric_fields(&self) -> Option<&[Field]> {
        self.metric.as_deref()
    }

    /// Metric component jets `g_{ab}` at a point.
    pub fn metric_jets(&self, point: &[f64], order: usize) -> Result<JetTensor> {
        let fields = self
            .metric
            .as_ref()
            .ok_or_else(|| Error::Config(format!("structure `{}` carries no metric", self.name)))?;
        let n = self.n;
        let mut data = Vec::with_capacity(n * n);
        for f in fields {
            data.push(f.eval_jet(point, order)?);
        }
        Ok(Tensor::from_data(
            n,
            vec![SlotKind::Cotangent, SlotKind::Cotangent],
            0.0,
            data,
        ))
    }

    /// Connection coefficient jets `Γ_{ab}{}^c` at a point.
    pub fn gamma_jets(&self, point: &[f64], order: usize) -> Result<JetTensor> {
        let n = self.n;
        match &self.source {
            GammaSource::Coefficients(fields) => {
                let mut data = Vec::with_capacity(n * n * n);
                for f in fields {
                    data.push(f.eval_jet(point, order)?);
                }
                Ok(Tensor::from_data(
                    n,
                    vec![SlotKind::Cotangent, SlotKind::Cotangent, SlotKind::Tangent],
                    0.0,
                    data,
                ))
            }
            GammaSource::LeviCivita => {
                let g = self.metric_jets(point, order + 1)?;
                levi_civita_from_jets(&g, order)
            }
            GammaSource::Changed { base, upsilon } => {
                let gamma = base.gamma_jets(point, order)?;
                let mut ups = Vec::with_capacity(n);
                for f in upsilon {
                    ups.push(f.eval_jet(point, order)?);
                }
                let mut out = gamma;
                for a in 0..n {
                    for c in 0..n {
                        for b in 0..n {
                            let mut v = out.get(&[a, c, b]).clone();
                            if c == b {
                                v = v.add_c(&ups[a]);
                            }
                            if a == b {
                                v = v.add_c(&ups[c]);
                            }
                            out.set(&[a, c, b], v);
                        }
                    }
                }
                Ok(out)
            }
        }
    }
}

/// `Γ_{ab}{}^c = 1/2 g^{cd} (∂_a g_{bd} + ∂_b g_{ad} - ∂_d g_{ab})` as jets
/// of the requested order (the metric jets must carry one more order).
pub fn levi_civita_from_jets(g: &JetTensor, order: usize) -> Result<JetTensor> {
    let n = g.n();
    let mut rows = Vec::with_capacity(n);
    for a in 0..n {
        let mut row = Vec::with_capacity(n);
        for b in 0..n {
            row.push(g.get(&[a, b]).truncated(order));
        }
        rows.push(row);
    }
    let ginv = invert_jet_matrix(&rows)
        .map_err(|_| Error::LinearAlgebra("metric is singular at the base point".into()))?;
    let mut out = JetTensor::jet_zeros(
        n,
        vec![SlotKind::Cotangent, SlotKind::Cotangent, SlotKind::Tangent],
        0.0,
        g.get(&[0, 0]).dim(),
        order,
    );
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let mut acc = Jet::constant(g.get(&[0, 0]).dim(), order, 0.0);
                for d in 0..n {
                    let term = g
                        .get(&[b, d])
                        .derivative(a)
                        .truncated(order)
                        .add_c(&g.get(&[a, d]).derivative(b).truncated(order))
                        .sub_c(&g.get(&[a, b]).derivative(d).truncated(order));
                    acc = acc.add_c(&ginv[c][d].mul_c(&term));
                }
                out.set(&[a, b, c], acc.scale_c(0.5));
            }
        }
    }
    Ok(out)
}

/// Pointwise curvature data of an affine structure.
#[derive(Debug, Clone)]
pub struct CurvatureStack {
    /// `R_{ab}{}^c{}_d` with `[∇_a,∇_b]v^c = R_{ab}{}^c{}_d v^d`.
    pub riemann: ChartTensor,
    /// `R_{bd} = R_{cb}{}^c{}_d`.
    pub ricci: ChartTensor,
    /// Projective Schouten `P_{ab}`.
    pub schouten: ChartTensor,
    /// Skew part `β_{ab} = -2 P_{[ab]}`.
    pub beta: ChartTensor,
    /// Projective Weyl `W_{ab}{}^c{}_d` (trace-free part).
    pub weyl: ChartTensor,
    /// Projective Cotton `C_{abc} = ∇_a P_{bc} - ∇_b P_{ac}`.
    pub cotton: ChartTensor,
}

/// All jets the calculus needs at one `(structure, point)`; curvature pieces
/// are expanded on first use.
pub struct PointContext<'a> {
    pub structure: &'a AffineStructure,
    pub point: Vec<f64>,
    /// Truncation order of the connection coefficient jets.
    pub order: usize,
    gamma: JetTensor,
    gamma_trace: Vec<Jet>,
    riemann: OnceCell<JetTensor>,
    schouten: OnceCell<JetTensor>,
    beta: OnceCell<JetTensor>,
    weyl: OnceCell<JetTensor>,
    cotton: OnceCell<JetTensor>,
    kappa: OnceCell<JetTensor>,
    nabla_kappa: OnceCell<JetTensor>,
    gamma_t: OnceCell<JetTensor>,
}

impl<'a> PointContext<'a> {
    pub fn new(structure: &'a AffineStructure, point: &[f64], order: usize) -> Result<Self> {
        assert_eq!(point.len(), structure.n(), "point dimension mismatch");
        let gamma = structure.gamma_jets(point, order)?;
        let n = structure.n();
        let mut gamma_trace = Vec::with_capacity(n);
        for a in 0..n {
            let mut acc = Jet::constant(n, order, 0.0);
            for b in 0..n {
                acc = acc.add_c(gamma.get(&[a, b, b]));
            }
            gamma_trace.push(acc);
        }
        Ok(PointContext {
            structure,
            point: point.to_vec(),
            order,
            gamma,
            gamma_trace,
            riemann: OnceCell::new(),
            schouten: OnceCell::new(),
            beta: OnceCell::new(),
            weyl: OnceCell::new(),
            cotton: OnceCell::new(),
            kappa: OnceCell::new(),
            nabla_kappa: OnceCell::new(),
            gamma_t: OnceCell::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.structure.n()
    }

    pub fn scale_tag(&self) -> u64 {
        self.structure.scale_tag()
    }

    pub fn gamma(&self) -> &JetTensor {
        &self.gamma
    }

    pub fn gamma_trace(&self) -> &[Jet] {
        &self.gamma_trace
    }

    /// `R_{ab}{}^c{}_d = ∂_a Γ_{bd}{}^c - ∂_b Γ_{ad}{}^c
    ///                  + Γ_{ae}{}^c Γ_{bd}{}^e - Γ_{be}{}^c Γ_{ad}{}^e`.
    pub fn riemann(&self) -> &JetTensor {
        self.riemann.get_or_init(|| {
            let n = self.n();
            let order = self.order - 1;
            let mut out = JetTensor::jet_zeros(
                n,
                vec![
                    SlotKind::Cotangent,
                    SlotKind::Cotangent,
                    SlotKind::Tangent,
                    SlotKind::Cotangent,
                ],
                0.0,
                n,
                order,
            );
            let g = &self.gamma;
            for a in 0..n {
                for b in 0..n {
                    if a == b {
                        continue;
                    }
                    for c in 0..n {
                        for d in 0..n {
                            let mut acc = g
                                .get(&[b, d, c])
                                .derivative(a)
                                .truncated(order)
                                .sub_c(&g.get(&[a, d, c]).derivative(b).truncated(order));
                            for e in 0..n {
                                acc = acc.add_c(
                                    &g.get(&[a, e, c]).mul_c(g.get(&[b, d, e])).truncated(order),
                                );
                                acc = acc.sub_c(
                                    &g.get(&[b, e, c]).mul_c(g.get(&[a, d, e])).truncated(order),
                                );
                            }
                            out.set(&[a, b, c, d], acc);
                        }
                    }
                }
            }
            out
        })
    }

    /// `P_{(ab)} = R_{(ab)}/(n-1)` and `P_{[ab]} = R_{[ab]}/(n+1)`.
    pub fn schouten(&self) -> &JetTensor {
        self.schouten.get_or_init(|| {
            let n = self.n() as f64;
            let ricci = self.riemann().contract(0, 2).expect("ricci contraction");
            let sym = ricci
                .symmetrize(&[0, 1])
                .expect("sym")
                .scale_by(1.0 / (n - 1.0));
            let skew = ricci
                .antisymmetrize(&[0, 1])
                .expect("skew")
                .scale_by(1.0 / (n + 1.0));
            sym.add(&skew).expect("schouten assembly")
        })
    }

    /// `β_{ab} = -2 P_{[ab]}`.
    pub fn beta(&self) -> &JetTensor {
        self.beta.get_or_init(|| {
            self.schouten()
                .antisymmetrize(&[0, 1])
                .expect("beta")
                .scale_by(-2.0)
        })
    }

    /// `W = R - 2 δ^c_{[a} P_{b]d} - β_{ab} δ^c_d`.
    pub fn weyl(&self) -> &JetTensor {
        self.weyl.get_or_init(|| {
            let n = self.n();
            let r = self.riemann();
            let p = self.schouten();
            let beta = self.beta();
            let mut out = r.clone();
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        for d in 0..n {
                            let mut v = out.get(&[a, b, c, d]).clone();
                            if c == a {
                                v = v.sub_c(p.get(&[b, d]));
                            }
                            if c == b {
                                v = v.add_c(p.get(&[a, d]));
                            }
                            if c == d {
                                v = v.sub_c(beta.get(&[a, b]));
                            }
                            out.set(&[a, b, c, d], v);
                        }
                    }
                }
            }
            out
        })
    }

    /// `C_{abc} = ∇_a P_{bc} - ∇_b P_{ac}`.
    pub fn cotton(&self) -> &JetTensor {
        self.cotton.get_or_init(|| {
            let dp = self.covd_full(self.schouten()).expect("cotton derivative");
            let swapped = dp.permuted(&[1, 0, 2]);
            dp.sub(&swapped).expect("cotton assembly")
        })
    }

    /// Tractor curvature `κ_{ab}{}^C{}_D`: the Weyl part sits in the chart
    /// block of `(C, D)`, the Cotton part in the `X`-row.
    pub fn kappa(&self) -> &JetTensor {
        self.kappa.get_or_init(|| {
            let n = self.n();
            let w = self.weyl();
            let c = self.cotton();
            let order = self.order.saturating_sub(2);
            let mut out = JetTensor::jet_zeros(
                n,
                vec![
                    SlotKind::Cotangent,
                    SlotKind::Cotangent,
                    SlotKind::Tractor,
                    SlotKind::Cotractor,
                ],
                0.0,
                n,
                order,
            );
            for a in 0..n {
                for b in 0..n {
                    for cc in 0..n {
                        for d in 0..n {
                            out.set(
                                &[a, b, cc + 1, d + 1],
                                w.get(&[a, b, cc, d]).truncated(order),
                            );
                        }
                    }
                    for d in 0..n {
                        out.set(
                            &[a, b, 0, d + 1],
                            c.get(&[a, b, d]).truncated(order).scale_c(-1.0),
                        );
                    }
                }
            }
            out.with_scale(Some(self.scale_tag()))
        })
    }

    /// Coupled covariant derivative of the tractor curvature,
    /// `(∇κ)_{e ab}{}^C{}_D` with the derivative slot first.
    pub fn nabla_kappa(&self) -> &JetTensor {
        self.nabla_kappa
            .get_or_init(|| self.covd_full(self.kappa()).expect("nabla kappa"))
    }

    /// Cotractor connection coefficients `Γᵀ_{aA}{}^B` (density twist of the
    /// components folded in): cotractor slots differentiate as
    /// `∂_a V_A - Γᵀ_{aA}{}^B V_B`, tractor slots as `∂_a U^A + Γᵀ_{aB}{}^A U^B`.
    pub fn gamma_t(&self) -> &JetTensor {
        self.gamma_t.get_or_init(|| {
            let n = self.n();
            let np1 = (n + 1) as f64;
            let order = self.order - 1;
            let p = self.schouten();
            let mut out = JetTensor::jet_zeros(
                n,
                vec![SlotKind::Cotangent, SlotKind::Cotractor, SlotKind::Tractor],
                0.0,
                n,
                order,
            );
            for a in 0..n {
                let trace = self.gamma_trace[a].truncated(order);
                // Γᵀ_{a0}{}^0 = -(1/(n+1)) Γ_{ab}{}^b
                out.set(&[a, 0, 0], trace.scale_c(-1.0 / np1));
                for b in 0..n {
                    // Γᵀ_{a0}{}^b = δ_a^b
                    if a == b {
                        out.set(&[a, 0, b + 1], Jet::constant(n, order, 1.0));
                    }
                    // Γᵀ_{ab}{}^0 = -P_{ab}
                    out.set(
                        &[a, b + 1, 0],
                        p.get(&[a, b]).truncated(order).scale_c(-1.0),
                    );
                    for c in 0..n {
                        // Γᵀ_{ab}{}^c = Γ_{ab}{}^c - (1/(n+1)) Γ_{ad}{}^d δ_b^c
                        let mut v = self.gamma.get(&[a, b, c]).truncated(order);
                        if b == c {
                            v = v.sub_c(&trace.scale_c(1.0 / np1));
                        }
                        out.set(&[a, b + 1, c + 1], v);
                    }
                }
            }
            out.with_scale(Some(self.scale_tag()))
        })
    }

    /// Coupled covariant derivative for any slot signature and weight; the
    /// new cotangent slot is prepended.  Consumes one jet order.
    pub fn covd_full(&self, t: &JetTensor) -> Result<JetTensor> {
        let n = self.n();
        let in_order = t.jet_order();
        if in_order == 0 {
            return Err(Error::Order {
                requested: 1,
                order: 0,
            });
        }
        if self.order < in_order {
            return Err(Error::Order {
                requested: in_order,
                order: self.order,
            });
        }
        let order = in_order - 1;
        let has_tractor = t.slots().iter().any(|k| k.is_tractor_family());
        if has_tractor {
            if let (Some(a), b) = (t.scale_tag(), self.scale_tag()) {
                if a != b {
                    return Err(Error::Scale(format!(
                        "tensor in scale {a}, context in scale {b}"
                    )));
                }
            }
        }
        let gamma = &self.gamma;
        let gamma_t = if has_tractor {
            Some(self.gamma_t())
        } else {
            None
        };
        let mut slots = vec![SlotKind::Cotangent];
        slots.extend_from_slice(t.slots());
        let mut out = JetTensor::jet_zeros(n, slots, t.weight(), n, order);
        if has_tractor || t.scale_tag().is_some() {
            out = out.with_scale(t.scale_tag().or(Some(self.scale_tag())));
        }
        let extents = t.extents();
        let rank = t.slots().len();
        let total: usize = extents.iter().product::<usize>().max(1);
        let np1 = (n + 1) as f64;
        let w = t.weight();

        let mut idx = vec![0usize; rank];
        for lin in 0..total {
            // unravel
            let mut rem = lin;
            for d in 0..rank {
                let block: usize = extents[d + 1..].iter().product::<usize>().max(1);
                idx[d] = rem / block;
                rem %= block;
            }
            for a in 0..n {
                let mut acc = t.data()[lin].derivative(a).truncated(order);
                if w != 0.0 {
                    acc = acc.add_c(
                        &self.gamma_trace[a]
                            .mul_c(&t.data()[lin])
                            .scale_c(w / np1)
                            .truncated(order),
                    );
                }
                for (s, kind) in t.slots().iter().enumerate() {
                    let cur = idx[s];
                    match kind {
                        SlotKind::Tangent => {
                            for d in 0..n {
                                if gamma.get(&[a, d, cur]).coeffs().iter().all(|&c| c == 0.0) {
                                    continue;
                                }
                                let mut j = idx.clone();
                                j[s] = d;
                                acc = acc.add_c(
                                    &gamma.get(&[a, d, cur]).mul_c(t.get(&j)).truncated(order),
                                );
                            }
                        }
                        SlotKind::Cotangent => {
                            for d in 0..n {
                                if gamma.get(&[a, cur, d]).coeffs().iter().all(|&c| c == 0.0) {
                                    continue;
                                }
                                let mut j = idx.clone();
                                j[s] = d;
                                acc = acc.sub_c(
                                    &gamma.get(&[a, cur, d]).mul_c(t.get(&j)).truncated(order),
                                );
                            }
                        }
                        SlotKind::Tractor => {
                            let gt = gamma_t.unwrap();
                            for bb in 0..=n {
                                let coeff = gt.get(&[a, bb, cur]);
                                if coeff.coeffs().iter().all(|&c| c == 0.0) {
                                    continue;
                                }
                                let mut j = idx.clone();
                                j[s] = bb;
                                acc = acc.add_c(&coeff.mul_c(t.get(&j)).truncated(order));
                            }
                        }
                        SlotKind::Cotractor => {
                            let gt = gamma_t.unwrap();
                            for bb in 0..=n {
                                let coeff = gt.get(&[a, cur, bb]);
                                if coeff.coeffs().iter().all(|&c| c == 0.0) {
                                    continue;
                                }
                                let mut j = idx.clone();
                                j[s] = bb;
                                acc = acc.sub_c(&coeff.mul_c(t.get(&j)).truncated(order));
                            }
                        }
                    }
                }
                let mut out_idx = Vec::with_capacity(rank + 1);
                out_idx.push(a);
                out_idx.extend_from_slice(&idx);
                out.set(&out_idx, acc);
            }
        }
        Ok(out)
    }

    /// Covariant derivative restricted to chart slots (the geometry-level
    /// operation); tractor slots are rejected.
    pub fn covd(&self, t: &JetTensor) -> Result<JetTensor> {
        if t.slots().iter().any(|k| k.is_tractor_family()) {
            return Err(Error::Kind(
                "geometry covd acts on tangent/cotangent slots only".into(),
            ));
        }
        self.covd_full(t)
    }

    /// Curvature stack values at the point.
    pub fn curvature_stack(&self) -> CurvatureStack {
        CurvatureStack {
            riemann: self.riemann().value(),
            ricci: self.riemann().contract(0, 2).expect("ricci").value(),
            schouten: self.schouten().value(),
            beta: self.beta().value(),
            weyl: self.weyl().value(),
            cotton: self.cotton().value(),
        }
    }
}

/// Levi-Civita coefficients at a point, with the metric-compatibility check
/// `∇g = 0` evaluated through jets.
pub fn levi_civita(structure: &AffineStructure, point: &[f64]) -> Result<ChartTensor> {
    let g = structure.metric_jets(point, 2)?;
    let gamma = levi_civita_from_jets(&g, 1)?;
    // ∇_a g_{bc} = ∂_a g_{bc} - Γ_{ab}^d g_{dc} - Γ_{ac}^d g_{bd}
    let n = structure.n();
    let mut max_dev = 0.0f64;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let mut acc = g.get(&[b, c]).derivative(a).truncated(0).value();
                for d in 0..n {
                    acc -= gamma.get(&[a, b, d]).value() * g.get(&[d, c]).value();
                    acc -= gamma.get(&[a, c, d]).value() * g.get(&[b, d]).value();
                }
                max_dev = max_dev.max(acc.abs());
            }
        }
    }
    let scale = g.value().max_abs().max(1.0);
    if max_dev > 1e-12 * scale.max(gamma.value().max_abs()).max(1.0) * 100.0 {
        return Err(Error::LinearAlgebra(format!(
            "metric compatibility violated: |∇g| = {max_dev:.3e}"
        )));
    }
    Ok(gamma.value())
}

/// Curvature stack of `structure` at `point` (jet order 2 sufficient for
/// everything except Cotton, which needs 3; callers wanting jets use
/// [`PointContext`] directly).
pub fn curvature_stack(structure: &AffineStructure, point: &[f64]) -> Result<CurvatureStack> {
    let ctx = PointContext::new(structure, point, 3)?;
    Ok(ctx.curvature_stack())
}
