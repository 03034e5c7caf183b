//! The projective tractor bundle in a chosen scale.
//!
//! Cotractors decompose against a representative connection as a density part
//! `σ` (slot component 0) and a one-form part `μ_a` (components `1..=n`);
//! tractors dually as `ρ` (component 0) and `ν^a`.  The four splitting maps
//! `X, Y, Z, W` are constant in these components, so contracting with them
//! reduces to slot extraction and embedding — the helpers below do exactly
//! that while keeping the weight bookkeeping straight (`X` and `W` carry
//! weight `+1`, `Y` and `Z` weight `-1`).
//!
//! The tractor connection coefficients come from
//! [`PointContext::gamma_t`](crate::geometry::PointContext::gamma_t); the
//! Thomas-D operator, the tractor curvature (computed along two independent
//! routes), the W-curvature and its `♯`-action on tractor tensors live here.

use crate::error::{Error, Result};
use crate::geometry::PointContext;
use crate::jet::Jet;
use crate::tensor::{ChartTensor, Component, JetTensor, SlotKind, Tensor};

/// Splitting data at a point for one representative connection: a thin layer
/// over the [`PointContext`] fixing the scale of all tractor components.
pub struct Frame<'a> {
    pub ctx: PointContext<'a>,
}

impl<'a> Frame<'a> {
    pub fn new(ctx: PointContext<'a>) -> Frame<'a> {
        Frame { ctx }
    }

    pub fn n(&self) -> usize {
        self.ctx.n()
    }

    pub fn scale_tag(&self) -> u64 {
        self.ctx.scale_tag()
    }

    /// Canonical tractor `X^A` (weight 1).
    pub fn x(&self) -> ChartTensor {
        let n = self.n();
        let mut t = ChartTensor::zeros(n, vec![SlotKind::Tractor], 1.0);
        t.set(&[0], 1.0);
        t.with_scale(Some(self.scale_tag()))
    }

    /// Splitting cotractor `Y_A` (weight -1).
    pub fn y(&self) -> ChartTensor {
        let n = self.n();
        let mut t = ChartTensor::zeros(n, vec![SlotKind::Cotractor], -1.0);
        t.set(&[0], 1.0);
        t.with_scale(Some(self.scale_tag()))
    }

    /// Embedding `Z_A{}^a` (weight -1).
    pub fn z(&self) -> ChartTensor {
        let n = self.n();
        let mut t = ChartTensor::zeros(n, vec![SlotKind::Cotractor, SlotKind::Tangent], -1.0);
        for a in 0..n {
            t.set(&[a + 1, a], 1.0);
        }
        t.with_scale(Some(self.scale_tag()))
    }

    /// Projection `W^A{}_a` (weight +1).
    pub fn w(&self) -> ChartTensor {
        let n = self.n();
        let mut t = ChartTensor::zeros(n, vec![SlotKind::Tractor, SlotKind::Cotangent], 1.0);
        for a in 0..n {
            t.set(&[a + 1, a], 1.0);
        }
        t.with_scale(Some(self.scale_tag()))
    }

    /// Coupled covariant derivative on any weighted tractor tensor field.
    pub fn tractor_covd(&self, t: &JetTensor) -> Result<JetTensor> {
        self.ctx.covd_full(t)
    }

    /// Thomas-D: `D_A V = w Y_A V + Z_A{}^a ∇_a V`, prepending one cotractor
    /// slot and lowering the weight by one.
    pub fn thomas_d(&self, t: &JetTensor) -> Result<JetTensor> {
        let n = self.n();
        let grad = self.ctx.covd_full(t)?;
        let order = grad.jet_order();
        let w = t.weight();
        let mut slots = vec![SlotKind::Cotractor];
        slots.extend_from_slice(t.slots());
        let mut out = JetTensor::jet_zeros(n, slots, w - 1.0, n, order)
            .with_scale(t.scale_tag().or(Some(self.scale_tag())));
        let extents = t.extents();
        let rank = extents.len();
        let total: usize = extents.iter().product::<usize>().max(1);
        let mut idx = vec![0usize; rank];
        for lin in 0..total {
            let mut rem = lin;
            for d in 0..rank {
                let block: usize = extents[d + 1..].iter().product::<usize>().max(1);
                idx[d] = rem / block;
                rem %= block;
            }
            let mut out_idx = Vec::with_capacity(rank + 1);
            out_idx.push(0usize);
            out_idx.extend_from_slice(&idx);
            // Y-slot: w V
            out.set(&out_idx, t.data()[lin].truncated(order).scale_c(w));
            // Z-slots: ∇_a V
            for a in 0..n {
                out_idx[0] = a + 1;
                let mut g_idx = Vec::with_capacity(rank + 1);
                g_idx.push(a);
                g_idx.extend_from_slice(&idx);
                out.set(&out_idx, grad.get(&g_idx).clone());
            }
        }
        Ok(out)
    }

    /// Tractor curvature `κ_{ab}{}^C{}_D`, computed from the Weyl/Cotton
    /// formula and independently as the commutator `[∇_a, ∇_b]` on a basis of
    /// constant tractor fields; disagreement beyond `1e-10` (relative) is a
    /// hard error.
    pub fn tractor_curvature(&self) -> Result<ChartTensor> {
        let formula = self.ctx.kappa().value();
        let commutator = self.tractor_curvature_commutator()?;
        let diff = formula.sub(&commutator)?.norm();
        let scale = formula.norm().max(commutator.norm()).max(1.0);
        if diff > 1e-10 * scale {
            return Err(Error::LinearAlgebra(format!(
                "tractor curvature routes disagree: |Δ| = {diff:.3e} (scale {scale:.3e})"
            )));
        }
        Ok(formula)
    }

    /// Commutator route: `[∇_a, ∇_b] U^C` on the constant basis tractors.
    pub fn tractor_curvature_commutator(&self) -> Result<ChartTensor> {
        let n = self.n();
        let order = self.ctx.order;
        if order < 2 {
            return Err(Error::Order {
                requested: 2,
                order,
            });
        }
        let mut out = ChartTensor::zeros(
            n,
            vec![
                SlotKind::Cotangent,
                SlotKind::Cotangent,
                SlotKind::Tractor,
                SlotKind::Cotractor,
            ],
            0.0,
        )
        .with_scale(Some(self.scale_tag()));
        for e in 0..=n {
            let mut u = JetTensor::jet_zeros(n, vec![SlotKind::Tractor], 0.0, n, order)
                .with_scale(Some(self.scale_tag()));
            u.set(&[e], Jet::constant(n, order, 1.0));
            let du = self.ctx.covd_full(&u)?;
            let ddu = self.ctx.covd_full(&du)?;
            for a in 0..n {
                for b in 0..n {
                    for c in 0..=n {
                        let v = ddu.get(&[a, b, c]).value() - ddu.get(&[b, a, c]).value();
                        out.set(&[a, b, c, e], v);
                    }
                }
            }
        }
        Ok(out)
    }

    /// W-curvature `W_{AB}{}^C{}_D = Z_A{}^a Z_B{}^b κ_{ab}{}^C{}_D`
    /// (weight -2), as a jet tensor for further differentiation.
    pub fn w_curvature_jets(&self) -> JetTensor {
        let n = self.n();
        let kappa = self.ctx.kappa();
        let order = kappa.jet_order();
        let mut out = JetTensor::jet_zeros(
            n,
            vec![
                SlotKind::Cotractor,
                SlotKind::Cotractor,
                SlotKind::Tractor,
                SlotKind::Cotractor,
            ],
            -2.0,
            n,
            order,
        )
        .with_scale(Some(self.scale_tag()));
        for a in 0..n {
            for b in 0..n {
                for c in 0..=n {
                    for d in 0..=n {
                        out.set(&[a + 1, b + 1, c, d], kappa.get(&[a, b, c, d]).clone());
                    }
                }
            }
        }
        out
    }

    /// W-curvature values at the point.
    pub fn w_curvature(&self) -> ChartTensor {
        self.w_curvature_jets().value()
    }
}

/// Canonical tractors of a frame: `(X, Y, Z, W)`.
pub fn canonical_tractors(frame: &Frame) -> (ChartTensor, ChartTensor, ChartTensor, ChartTensor) {
    (frame.x(), frame.y(), frame.z(), frame.w())
}

/// `♯`-action of an endomorphism-valued tensor on a tractor tensor.
///
/// `m`'s final two slots must be `(Tractor, Cotractor)`, acting as
/// `M^E{}_F`; every cotractor slot of `t` receives `-M^E{}_{C_i} T_{..E..}`
/// and every tractor slot `+M^{C_i}{}_E T^{..E..}`.  Output slots are `m`'s
/// leading slots followed by `t`'s slots.
pub fn sharp<T: Component>(m: &Tensor<T>, t: &Tensor<T>) -> Result<Tensor<T>> {
    let mr = m.rank();
    if mr < 2 || m.slots()[mr - 2] != SlotKind::Tractor || m.slots()[mr - 1] != SlotKind::Cotractor
    {
        return Err(Error::Shape(
            "sharp needs an endomorphism with trailing (tractor, cotractor) slots".into(),
        ));
    }
    if t.slots().iter().any(|k| !k.is_tractor_family()) {
        return Err(Error::Kind(
            "sharp acts on tensors with tractor-family slots only".into(),
        ));
    }
    let mut acc: Option<Tensor<T>> = None;
    for (i, kind) in t.slots().iter().enumerate() {
        // product slots: [m-lead..., E(up), F(down), t-slots...]
        let prod = m.tensor_product(t)?;
        let term = match kind {
            SlotKind::Cotractor => {
                // -M^E{}_{C_i} T_{..E..}: contract E (mr-2) with t-slot i;
                // the output index C_i comes from M's lower slot, moved into
                // position i.
                let contracted = prod.contract(mr - 2, mr + i)?;
                // slots now: [m-lead..., F(down), t-slots without i]
                let lead = mr - 2;
                let mut perm: Vec<usize> = (0..lead).collect();
                for s in 0..i {
                    perm.push(lead + 1 + s);
                }
                perm.push(lead); // F takes position i
                for s in i..(t.rank() - 1) {
                    perm.push(lead + 1 + s);
                }
                contracted.permuted(&perm).scale_by(-1.0)
            }
            SlotKind::Tractor => {
                // +M^{C_i}{}_E T^{..E..}: contract F (mr-1) with t-slot i.
                let contracted = prod.contract(mr - 1, mr + i)?;
                // slots now: [m-lead..., E(up), t-slots without i]
                let lead = mr - 2;
                let mut perm: Vec<usize> = (0..lead).collect();
                for s in 0..i {
                    perm.push(lead + 1 + s);
                }
                perm.push(lead);
                for s in i..(t.rank() - 1) {
                    perm.push(lead + 1 + s);
                }
                contracted.permuted(&perm)
            }
            _ => unreachable!(),
        };
        acc = Some(match acc {
            None => term,
            Some(a) => a.add(&term)?,
        });
    }
    match acc {
        Some(a) => Ok(a),
        None => {
            // scalar t: sharp acts as zero with m's leading slots
            let lead_slots = m.slots()[..mr - 2].to_vec();
            let proto = m.data()[0].zero_like();
            Ok(
                Tensor::zeros_with(m.n(), lead_slots, m.weight() + t.weight(), &proto)
                    .with_scale(m.scale_tag().or(t.scale_tag())),
            )
        }
    }
}

/// `W_{AB}♯T`: the ♯-action of the W-curvature on a tractor tensor.
pub fn w_sharp(wc: &ChartTensor, t: &ChartTensor) -> Result<ChartTensor> {
    sharp(wc, t)
}

/// Contract `X^A` into a cotractor slot (component 0; weight rises by one).
pub fn contract_x<T: Component>(t: &Tensor<T>, slot: usize) -> Result<Tensor<T>> {
    if t.slots()[slot] != SlotKind::Cotractor {
        return Err(Error::Kind("X contracts a cotractor slot".into()));
    }
    Ok(fix_component(t, slot, 0, 1.0))
}

/// Contract `Y_A` into a tractor slot (component 0; weight drops by one).
pub fn contract_y<T: Component>(t: &Tensor<T>, slot: usize) -> Result<Tensor<T>> {
    if t.slots()[slot] != SlotKind::Tractor {
        return Err(Error::Kind("Y contracts a tractor slot".into()));
    }
    Ok(fix_component(t, slot, 0, -1.0))
}

/// Contract `W^A{}_a` into a cotractor slot: the form components `1..=n`
/// become a cotangent slot in place (weight rises by one).
pub fn contract_w<T: Component>(t: &Tensor<T>, slot: usize) -> Result<Tensor<T>> {
    if t.slots()[slot] != SlotKind::Cotractor {
        return Err(Error::Kind("W^A_a contracts a cotractor slot".into()));
    }
    Ok(extract_block(t, slot, SlotKind::Cotangent, 1.0))
}

/// Contract `Z_A{}^a` into a tractor slot: components `1..=n` become a
/// tangent slot in place (weight drops by one).
pub fn contract_z<T: Component>(t: &Tensor<T>, slot: usize) -> Result<Tensor<T>> {
    if t.slots()[slot] != SlotKind::Tractor {
        return Err(Error::Kind("Z_A^a contracts a tractor slot".into()));
    }
    Ok(extract_block(t, slot, SlotKind::Tangent, -1.0))
}

/// Embed a cotangent slot through `Z`: `k_a -> Z_A{}^a k_a` (weight drops by
/// one, slot becomes cotractor with zero density part).
pub fn embed_z<T: Component>(t: &Tensor<T>, slot: usize) -> Result<Tensor<T>> {
    if t.slots()[slot] != SlotKind::Cotangent {
        return Err(Error::Kind("Z embeds a cotangent slot".into()));
    }
    let n = t.n();
    let mut slots = t.slots().to_vec();
    slots[slot] = SlotKind::Cotractor;
    let proto = t.data()[0].zero_like();
    let mut out = Tensor::zeros_with(n, slots, t.weight() - 1.0, &proto).with_scale(t.scale_tag());
    let extents = t.extents();
    let rank = extents.len();
    let total: usize = extents.iter().product::<usize>().max(1);
    let mut idx = vec![0usize; rank];
    for lin in 0..total {
        let mut rem = lin;
        for d in 0..rank {
            let block: usize = extents[d + 1..].iter().product::<usize>().max(1);
            idx[d] = rem / block;
            rem %= block;
        }
        let mut out_idx = idx.clone();
        out_idx[slot] = idx[slot] + 1;
        out.set(&out_idx, t.data()[lin].clone());
    }
    Ok(out)
}

fn fix_component<T: Component>(
    t: &Tensor<T>,
    slot: usize,
    value: usize,
    weight_shift: f64,
) -> Tensor<T> {
    let n = t.n();
    let mut slots = t.slots().to_vec();
    slots.remove(slot);
    let proto = t.data()[0].zero_like();
    let mut out =
        Tensor::zeros_with(n, slots, t.weight() + weight_shift, &proto).with_scale(t.scale_tag());
    let extents = t.extents();
    let rank = extents.len();
    let total: usize = extents.iter().product::<usize>().max(1);
    let mut idx = vec![0usize; rank];
    for lin in 0..total {
        let mut rem = lin;
        for d in 0..rank {
            let block: usize = extents[d + 1..].iter().product::<usize>().max(1);
            idx[d] = rem / block;
            rem %= block;
        }
        if idx[slot] != value {
            continue;
        }
        let mut out_idx = idx.clone();
        out_idx.remove(slot);
        out.set(&out_idx, t.data()[lin].clone());
    }
    out
}

fn extract_block<T: Component>(
    t: &Tensor<T>,
    slot: usize,
    new_kind: SlotKind,
    weight_shift: f64,
) -> Tensor<T> {
    let n = t.n();
    let mut slots = t.slots().to_vec();
    slots[slot] = new_kind;
    let proto = t.data()[0].zero_like();
    let mut out =
        Tensor::zeros_with(n, slots, t.weight() + weight_shift, &proto).with_scale(t.scale_tag());
    let extents = t.extents();
    let rank = extents.len();
    let total: usize = extents.iter().product::<usize>().max(1);
    let mut idx = vec![0usize; rank];
    for lin in 0..total {
        let mut rem = lin;
        for d in 0..rank {
            let block: usize = extents[d + 1..].iter().product::<usize>().max(1);
            idx[d] = rem / block;
            rem %= block;
        }
        if idx[slot] == 0 {
            continue;
        }
        let mut out_idx = idx.clone();
        out_idx[slot] = idx[slot] - 1;
        out.set(&out_idx, t.data()[lin].clone());
    }
    out
}
