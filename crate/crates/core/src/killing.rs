//! Killing tensor machinery: the tractor inclusion of a weighted symmetric
//! tensor, the splitting operator into the `(r,r)` bundle, recovery of the
//! tensor from a prolonged state, the explicit prolongation connections for
//! ranks 1 and 2, the integrability operator, and the all-rank projectively
//! flat path.
//!
//! A rank-`r` candidate carries projective weight `2r`; on metric charts the
//! weighted components are the classical ones multiplied by
//! `(det g)^{-r/(n+1)}`, the `2r`-th power of the parallel volume density, so
//! the weighted equation holds exactly when the classical one does.

use crate::error::{Error, Result};
use crate::geometry::{AffineStructure, Field};
use crate::jet::Jet;
use crate::tensor::{
    young_idempotence_constant, young_project_rr, ChartTensor, Component, JetTensor, SlotKind,
    Tensor,
};
use crate::tractor::{contract_w, contract_x, sharp, Frame};

/// Jet-evaluable symmetric cotangent tensor field of weight `2r`.
#[derive(Debug, Clone)]
pub struct KillingCandidate {
    pub rank: usize,
    n: usize,
    /// Weighted components (dense `n^rank`, symmetric).
    weighted: Vec<Field>,
    /// Classical (unweighted) components, used by geodesic first integrals.
    classical: Vec<Field>,
}

fn det_jet(g: &[Vec<Jet>]) -> Result<Jet> {
    match g.len() {
        1 => Ok(g[0][0].clone()),
        2 => g[0][0].mul(&g[1][1])?.sub(&g[0][1].mul(&g[1][0])?),
        3 => {
            let mut acc = Jet::constant(g[0][0].dim(), g[0][0].order(), 0.0);
            for (c0, c1, c2, sign) in [
                (0, 1, 2, 1.0),
                (1, 2, 0, 1.0),
                (2, 0, 1, 1.0),
                (2, 1, 0, -1.0),
                (1, 0, 2, -1.0),
                (0, 2, 1, -1.0),
            ] {
                let t = g[0][c0].mul(&g[1][c1])?.mul(&g[2][c2])?.scale(sign);
                acc = acc.add(&t)?;
            }
            Ok(acc)
        }
        d => Err(Error::Shape(format!(
            "determinant for dimension {d} not supported"
        ))),
    }
}

impl KillingCandidate {
    /// Candidate given directly in weighted form (classical taken equal;
    /// appropriate on charts whose connection has vanishing trace).
    pub fn from_weighted(n: usize, rank: usize, fields: Vec<Field>) -> KillingCandidate {
        assert_eq!(fields.len(), n.pow(rank as u32));
        KillingCandidate {
            rank,
            n,
            weighted: fields.clone(),
            classical: fields,
        }
    }

    /// Lift classical components by `(det g)^{-r/(n+1)}` using the metric of
    /// the given structure.
    pub fn lift_classical(
        structure: &AffineStructure,
        rank: usize,
        classical: Vec<Field>,
    ) -> Result<KillingCandidate> {
        let n = structure.n();
        assert_eq!(classical.len(), n.pow(rank as u32));
        let metric: Vec<Field> = structure
            .metric_fields()
            .ok_or_else(|| Error::Config("classical lift needs a metric".into()))?
            .to_vec();
        let alpha = -(rank as f64) / (n as f64 + 1.0);
        let weighted = classical
            .iter()
            .map(|f| {
                let f = f.clone();
                let metric = metric.clone();
                Field::from_fn(move |vars| {
                    let nn = vars.len();
                    let mut rows = Vec::with_capacity(nn);
                    for a in 0..nn {
                        let mut row = Vec::with_capacity(nn);
                        for b in 0..nn {
                            row.push(eval_field_on(&metric[a * nn + b], vars)?);
                        }
                        rows.push(row);
                    }
                    let det = det_jet(&rows)?;
                    let factor = det.powf(alpha)?;
                    eval_field_on(&f, vars)?.mul(&factor)
                })
            })
            .collect();
        Ok(KillingCandidate {
            rank,
            n,
            weighted,
            classical,
        })
    }

    /// Lower a vector field through the metric and lift the result
    /// (rank-1 classical Killing fields enter this way).
    pub fn lower_vector(
        structure: &AffineStructure,
        vector: Vec<Field>,
    ) -> Result<KillingCandidate> {
        let n = structure.n();
        assert_eq!(vector.len(), n);
        let metric: Vec<Field> = structure
            .metric_fields()
            .ok_or_else(|| Error::Config("lowering needs a metric".into()))?
            .to_vec();
        let classical: Vec<Field> = (0..n)
            .map(|a| {
                let metric = metric.clone();
                let vector = vector.clone();
                Field::from_fn(move |vars| {
                    let nn = vars.len();
                    let mut acc = Jet::constant(nn, vars[0].order(), 0.0);
                    for b in 0..nn {
                        let m = eval_field_on(&metric[a * nn + b], vars)?;
                        let v = eval_field_on(&vector[b], vars)?;
                        acc = acc.add(&m.mul(&v)?)?;
                    }
                    Ok(acc)
                })
            })
            .collect();
        KillingCandidate::lift_classical(structure, 1, classical)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Weighted components as a jet tensor (weight `2r`).
    pub fn eval_jets(&self, point: &[f64], order: usize) -> Result<JetTensor> {
        let mut data = Vec::with_capacity(self.weighted.len());
        for f in &self.weighted {
            data.push(f.eval_jet(point, order)?);
        }
        Ok(Tensor::from_data(
            self.n,
            vec![SlotKind::Cotangent; self.rank],
            2.0 * self.rank as f64,
            data,
        ))
    }

    /// Classical components as a jet tensor (weight 0).
    pub fn eval_classical_jets(&self, point: &[f64], order: usize) -> Result<JetTensor> {
        let mut data = Vec::with_capacity(self.classical.len());
        for f in &self.classical {
            data.push(f.eval_jet(point, order)?);
        }
        Ok(Tensor::from_data(
            self.n,
            vec![SlotKind::Cotangent; self.rank],
            0.0,
            data,
        ))
    }
}

fn eval_field_on(f: &Field, vars: &[Jet]) -> Result<Jet> {
    f.eval_on(vars)
}

/// A section value of the prolonged bundle: `2r` cotractor slots, weight 0,
/// in the `(r,r)` symmetry class.
#[derive(Debug, Clone)]
pub struct ProlongationState {
    pub rank: usize,
    pub l: ChartTensor,
}

impl ProlongationState {
    pub fn new(rank: usize, l: ChartTensor) -> Result<ProlongationState> {
        if l.rank() != 2 * rank || l.slots().iter().any(|&k| k != SlotKind::Cotractor) {
            return Err(Error::Shape(format!(
                "prolongation state needs {} cotractor slots",
                2 * rank
            )));
        }
        Ok(ProlongationState { rank, l })
    }

    /// Residual distance to the `(r,r)` class (normalized projector applied).
    pub fn class_residual(&self) -> f64 {
        let c = young_idempotence_constant(self.l.n() + 1, self.rank);
        let p = young_project_rr(&self.l, self.rank).expect("projector");
        let diff = self.l.sub(&p.scale_by(1.0 / c)).expect("shape");
        diff.norm() / self.l.norm().max(1.0)
    }
}

/// Bundle inclusion: `K_{B..C} = Z_B{}^b .. Z_C{}^c k_{b..c}` as jets
/// (`r` cotractor slots, weight `r`, zero in every density slot).
pub fn inject_k_jets(frame: &Frame, k: &JetTensor) -> Result<JetTensor> {
    if k.slots().iter().any(|&s| s != SlotKind::Cotangent) {
        return Err(Error::Kind("inclusion expects cotangent slots".into()));
    }
    let mut out = k.clone();
    for slot in 0..k.rank() {
        out = crate::tractor::embed_z(&out, slot)?;
    }
    Ok(out.with_scale(Some(frame.scale_tag())))
}

/// Pointwise inclusion value.
pub fn inject_k(frame: &Frame, cand: &KillingCandidate, order: usize) -> Result<ChartTensor> {
    let k = cand.eval_jets(&frame.ctx.point, order)?;
    Ok(inject_k_jets(frame, &k)?.value())
}

/// The Killing operator `∇_(a0 k_{a1..ar)}` including the density term
/// (`r+1` symmetric cotangent slots, weight `2r`).
pub fn killing_operator(
    structure: &AffineStructure,
    cand: &KillingCandidate,
    point: &[f64],
    order: usize,
) -> Result<ChartTensor> {
    let ctx = crate::geometry::PointContext::new(structure, point, order)?;
    let k = cand.eval_jets(point, order)?;
    let grad = ctx.covd(&k)?;
    let sym = grad.symmetrize(&(0..=cand.rank).collect::<Vec<_>>())?;
    Ok(sym.value())
}

/// Splitting operator as jets: `L = P_(r,r)(D^r K)`, weight 0.
pub fn splitting_l_jets(frame: &Frame, cand: &KillingCandidate, order: usize) -> Result<JetTensor> {
    let k = cand.eval_jets(&frame.ctx.point, order)?;
    let mut cur = inject_k_jets(frame, &k)?;
    for _ in 0..cand.rank {
        cur = frame.thomas_d(&cur)?;
    }
    young_project_rr(&cur, cand.rank)
}

/// Splitting operator value at the frame's point.
pub fn splitting_l(
    frame: &Frame,
    cand: &KillingCandidate,
    order: usize,
) -> Result<ProlongationState> {
    let l = splitting_l_jets(frame, cand, order)?.value();
    ProlongationState::new(cand.rank, l)
}

/// Recovery constant in `X..X L = c K`: 1 for rank 1, 3/2 for rank 2.
pub fn recovery_constant(rank: usize) -> Result<f64> {
    match rank {
        1 => Ok(1.0),
        2 => Ok(1.5),
        r => Err(Error::UnsupportedRank(r)),
    }
}

/// Recover `k` from a prolonged state: contract `r` copies of `X` into the
/// first index group, extract the form parts, divide by the rank constant.
pub fn recover_k(state: &ProlongationState) -> Result<ChartTensor> {
    let c = recovery_constant(state.rank)?;
    let mut cur = state.l.clone();
    for _ in 0..state.rank {
        cur = contract_x(&cur, 0)?;
    }
    for slot in 0..state.rank {
        cur = contract_w(&cur, slot)?;
    }
    Ok(cur.scale_by(1.0 / c))
}

/// Measure the recovery constant for arbitrary `(n, r)` on a flat chart:
/// evaluate `X..X P(D^r K)` against `K` on a random polynomial candidate.
/// Returns `(constant, proportionality residual)`.
pub fn measured_recovery_constant(n: usize, rank: usize) -> Result<(f64, f64)> {
    let structure = AffineStructure::flat(n, "flat-measure");
    let point = vec![0.17; n];
    let order = rank + 2;
    let ctx = crate::geometry::PointContext::new(&structure, &point, order + 1)?;
    let frame = Frame::new(ctx);
    // deterministic random polynomial components of degree <= 2
    let mut state = 0x51ed270bu64 ^ ((n as u64) << 8) ^ rank as u64;
    let mut rnd = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let fields: Vec<Field> = (0..n.pow(rank as u32))
        .map(|_| {
            let c0 = rnd();
            let lin: Vec<f64> = (0..n).map(|_| rnd()).collect();
            let quad: Vec<f64> = (0..n * n).map(|_| rnd()).collect();
            Field::from_fn(move |vars| {
                let nn = vars.len();
                let mut acc = Jet::constant(nn, vars[0].order(), c0);
                for (i, li) in lin.iter().enumerate() {
                    acc = acc.add(&vars[i].scale(*li))?;
                }
                for i in 0..nn {
                    for j in 0..nn {
                        acc = acc.add(&vars[i].mul(&vars[j])?.scale(quad[i * nn + j]))?;
                    }
                }
                Ok(acc)
            })
        })
        .collect();
    // symmetrize so the candidate is honestly symmetric
    let cand_raw = KillingCandidate::from_weighted(n, rank, fields);
    let k = cand_raw
        .eval_jets(&point, order)?
        .symmetrize(&(0..rank).collect::<Vec<_>>())?;
    let kk = inject_k_jets(&frame, &k)?;
    let mut cur = kk.clone();
    for _ in 0..rank {
        cur = frame.thomas_d(&cur)?;
    }
    let l = young_project_rr(&cur, rank)?.value();
    let mut xl = l;
    for _ in 0..rank {
        xl = contract_x(&xl, 0)?;
    }
    let kv = kk.value();
    let num: f64 = xl.data().iter().zip(kv.data()).map(|(a, b)| a * b).sum();
    let den: f64 = kv.data().iter().map(|a| a * a).sum();
    let c = num / den;
    let resid = xl.sub(&kv.scale_by(c))?.norm() / kv.norm().max(1e-30);
    Ok((c, resid))
}

/// Rank-1 curvature action `(a, B, C) -> W_{BC}{}^E{}_A W^A{}_a X^F V_{EF}`,
/// the algebraic part of the rank-1 prolongation connection.
pub fn rank1_curvature_action<T: Component>(kappa: &Tensor<T>, v: &Tensor<T>) -> Result<Tensor<T>> {
    let n = kappa.n();
    if v.rank() != 2 || v.slots().iter().any(|&k| k != SlotKind::Cotractor) {
        return Err(Error::Shape(
            "rank-1 state needs two cotractor slots".into(),
        ));
    }
    let proto = v.data()[0].zero_like();
    let mut out = Tensor::zeros_with(
        n,
        vec![
            SlotKind::Cotangent,
            SlotKind::Cotractor,
            SlotKind::Cotractor,
        ],
        v.weight(),
        &proto,
    )
    .with_scale(v.scale_tag().or(kappa.scale_tag()));
    // X^F V_{EF} = V[E][0]; W_{BC}{}^E{}_A W^A{}_a = κ_{bc}{}^E{}_{a+1}
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let mut acc = proto.zero_like();
                for e in 0..=n {
                    acc = acc.add_c(&kappa.get(&[b, c, e, a + 1]).mul_c(v.get(&[e, 0])));
                }
                out.set(&[a, b + 1, c + 1], acc);
            }
        }
    }
    Ok(out)
}

/// Rank-1 prolongation derivative of a field `V` valued in the antisymmetric
/// square of the cotractor bundle:
/// `∇_a V_{BC} + W_{BC}{}^E{}_A W^A{}_a X^F V_{EF}`.
/// Vanishes exactly when `V` is parallel for the prolongation connection.
pub fn rank1_prolongation_derivative(frame: &Frame, v: &JetTensor) -> Result<JetTensor> {
    let antisym_dev = v.sub(&v.antisymmetrize(&[0, 1])?)?.value().norm();
    if antisym_dev > 1e-12 * v.value().norm().max(1.0) {
        return Err(Error::Shape("rank-1 state must be antisymmetric".into()));
    }
    let grad = frame.tractor_covd(v)?;
    let order = grad.jet_order();
    let kappa = frame.ctx.kappa().truncated(order);
    let action = rank1_curvature_action(&kappa, &v.truncated(order))?;
    grad.add(&action)
}

/// The right-hand side of the rank-2 prolongation equation, `Q_c ♯ L`,
/// assembled from the tractor curvature and its derivative; output slots
/// `(c; D, E, A, B)`.
pub fn rank2_q_sharp<T: Component>(
    kappa: &Tensor<T>,
    nabla_kappa: &Tensor<T>,
    l: &Tensor<T>,
) -> Result<Tensor<T>> {
    let n = kappa.n();
    check_rank2_state_shape(l)?;
    let proto = l.data()[0].zero_like();

    // Sharp tables: sk[a][b] = κ_{ab}♯L, snk[e][a][b] = (∇_e κ)_{ab}♯L.
    let mut sk: Vec<Vec<Tensor<T>>> = Vec::with_capacity(n);
    for a in 0..n {
        let mut row = Vec::with_capacity(n);
        for b in 0..n {
            let end = slice_leading(kappa, &[a, b]);
            row.push(sharp(&end, l)?);
        }
        sk.push(row);
    }
    let mut snk: Vec<Vec<Vec<Tensor<T>>>> = Vec::with_capacity(n);
    for e in 0..n {
        let mut plane = Vec::with_capacity(n);
        for a in 0..n {
            let mut row = Vec::with_capacity(n);
            for b in 0..n {
                let end = slice_leading(nabla_kappa, &[e, a, b]);
                row.push(sharp(&end, l)?);
            }
            plane.push(row);
        }
        snk.push(plane);
    }

    // ms(P,Q,j) = (3 Y_(P Z_Q)^b κ_{bj} - Z_(P^a Z_Q)^b ∇_a κ_{bj}) ♯ L
    let ms = |p: usize, q: usize, j: usize| -> Tensor<T> {
        let mut acc = Tensor::zeros_with(n, vec![SlotKind::Cotractor; 4], l.weight(), &proto);
        if p == 0 && q >= 1 {
            acc = acc.add(&sk[q - 1][j].scale_by(1.5)).expect("shape");
        }
        if q == 0 && p >= 1 {
            acc = acc.add(&sk[p - 1][j].scale_by(1.5)).expect("shape");
        }
        if p >= 1 && q >= 1 {
            acc = acc
                .sub(&snk[p - 1][q - 1][j].scale_by(0.5))
                .expect("shape")
                .sub(&snk[q - 1][p - 1][j].scale_by(0.5))
                .expect("shape");
        }
        acc
    };

    let mut out = Tensor::zeros_with(
        n,
        vec![
            SlotKind::Cotangent,
            SlotKind::Cotractor,
            SlotKind::Cotractor,
            SlotKind::Cotractor,
            SlotKind::Cotractor,
        ],
        l.weight(),
        &proto,
    )
    .with_scale(l.scale_tag().or(kappa.scale_tag()));

    let np1 = n + 1;
    for c in 0..n {
        for dd in 0..np1 {
            for ee in 0..np1 {
                for aa in 0..np1 {
                    for bb in 0..np1 {
                        let mut acc = proto.zero_like();
                        {
                            let mut addin = |t: &T, coeff: f64| {
                                acc = acc.add_c(&t.scale_c(coeff));
                            };

                            // [1] X^F (Z_(A^a κ_|ca| ♯ L_B)FED
                            //          + Z_(D^a κ_|ca| ♯ L_E)FAB)
                            for (p, q) in [(aa, bb), (bb, aa)] {
                                if p >= 1 {
                                    addin(sk[c][p - 1].get(&[q, 0, ee, dd]), 0.5);
                                }
                            }
                            for (p, q) in [(dd, ee), (ee, dd)] {
                                if p >= 1 {
                                    addin(sk[c][p - 1].get(&[q, 0, aa, bb]), 0.5);
                                }
                            }

                            // [2] X^F W^C_c Z_(A^a Z_|(D^d κ_|ad| ♯
                            //     (L_E)F|B)C - L_E)C|B)F)
                            for (pa, pb) in [(aa, bb), (bb, aa)] {
                                for (pd, pe) in [(dd, ee), (ee, dd)] {
                                    if pa >= 1 && pd >= 1 {
                                        let s = &sk[pa - 1][pd - 1];
                                        addin(s.get(&[pe, 0, pb, c + 1]), 0.25);
                                        addin(s.get(&[pe, c + 1, pb, 0]), -0.25);
                                    }
                                }
                            }

                            // [3..6] -(1/12) X^F X^G M(P,Q) ♯ L over the four
                            // (P,Q; remaining slots) assignments
                            for (p, q, s1, s2) in [
                                (aa, dd, bb, ee),
                                (aa, ee, bb, dd),
                                (bb, dd, aa, ee),
                                (bb, ee, aa, dd),
                            ] {
                                let t = ms(p, q, c);
                                addin(t.get(&[s1, s2, 0, 0]), -1.0 / 12.0);
                            }

                            // [7, 8] +(1/6) X^F X^G M ♯ L
                            let t7 = ms(aa, bb, c);
                            addin(t7.get(&[dd, ee, 0, 0]), 1.0 / 6.0);
                            let t8 = ms(dd, ee, c);
                            addin(t8.get(&[aa, bb, 0, 0]), 1.0 / 6.0);

                            // [9] +(1/3) X^F X^G W^C_c N(A,B;d) ♯ L_E)CFG,
                            // (D,E) symmetrized through the Z/L pairing.
                            // The +1/3 follows from expanding the Thomas-D of
                            // the W-curvature directly; the dual-route checks
                            // against the Thomas-D form pin the sign.
                            for (pd, pe) in [(dd, ee), (ee, dd)] {
                                if pd >= 1 {
                                    let t = ms(aa, bb, pd - 1);
                                    addin(t.get(&[pe, c + 1, 0, 0]), 1.0 / 6.0);
                                }
                            }
                            // [10] mirror with the index groups exchanged
                            for (pa, pb) in [(aa, bb), (bb, aa)] {
                                if pa >= 1 {
                                    let t = ms(dd, ee, pa - 1);
                                    addin(t.get(&[pb, c + 1, 0, 0]), 1.0 / 6.0);
                                }
                            }
                        }
                        out.set(&[c, dd, ee, aa, bb], acc);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Thomas-D form of the rank-2 right-hand side: output slots
/// `(C cotractor; D, E, A, B)`.  Its contraction with `X^C` vanishes for any
/// state in the `(r,r)` class; its `W^C{}_c` contraction reproduces
/// [`rank2_q_sharp`].
pub fn rank2_q_sharp_d_form<T: Component>(
    w_curv: &Tensor<T>,
    dw_curv: &Tensor<T>,
    l: &Tensor<T>,
) -> Result<Tensor<T>> {
    let n = w_curv.n();
    check_rank2_state_shape(l)?;
    let proto = l.data()[0].zero_like();
    let np1 = n + 1;

    // sw[A][B] = W_{AB}♯L (zero unless both indices are form-type),
    // sdw[A][B][C] = (D_A W_{BC})♯L.
    let zero4 = Tensor::zeros_with(n, vec![SlotKind::Cotractor; 4], l.weight(), &proto);
    let mut sw: Vec<Vec<Tensor<T>>> = vec![vec![zero4.clone(); np1]; np1];
    for a in 1..np1 {
        for b in 1..np1 {
            let end = slice_leading(w_curv, &[a, b]);
            sw[a][b] = sharp(&end, l)?;
        }
    }
    let mut sdw: Vec<Vec<Vec<Tensor<T>>>> = vec![vec![vec![zero4.clone(); np1]; np1]; np1];
    for a in 0..np1 {
        for b in 0..np1 {
            for c in 0..np1 {
                let end = slice_leading(dw_curv, &[a, b, c]);
                sdw[a][b][c] = sharp(&end, l)?;
            }
        }
    }

    let mut out = Tensor::zeros_with(n, vec![SlotKind::Cotractor; 5], l.weight(), &proto)
        .with_scale(l.scale_tag().or(w_curv.scale_tag()));
    for cc in 0..np1 {
        for dd in 0..np1 {
            for ee in 0..np1 {
                for aa in 0..np1 {
                    for bb in 0..np1 {
                        let mut acc = proto.zero_like();
                        {
                            let mut addin = |t: &T, coeff: f64| {
                                acc = acc.add_c(&t.scale_c(coeff));
                            };

                            // G1: X^F (W_{C(D}♯L_{E)FAB} + W_{C(A}♯L_{B)FED})
                            for (p, q) in [(dd, ee), (ee, dd)] {
                                addin(sw[cc][p].get(&[q, 0, aa, bb]), 0.5);
                            }
                            for (p, q) in [(aa, bb), (bb, aa)] {
                                addin(sw[cc][p].get(&[q, 0, ee, dd]), 0.5);
                            }

                            // G2: X^F (W_{(D|(A}♯L_{B)F|E)C} + W_{(A|(D}♯L_{E)F|B)C})
                            for (pd, pe) in [(dd, ee), (ee, dd)] {
                                for (pa, pb) in [(aa, bb), (bb, aa)] {
                                    addin(sw[pd][pa].get(&[pb, 0, pe, cc]), 0.25);
                                    addin(sw[pa][pd].get(&[pe, 0, pb, cc]), 0.25);
                                }
                            }

                            // G3: -(1/6) X^F X^G (D_{(D}W_{E)C}♯L_{ABFG}
                            //                    + D_{(A}W_{B)C}♯L_{DEFG})
                            for (p, q) in [(dd, ee), (ee, dd)] {
                                addin(sdw[p][q][cc].get(&[aa, bb, 0, 0]), -1.0 / 12.0);
                            }
                            for (p, q) in [(aa, bb), (bb, aa)] {
                                addin(sdw[p][q][cc].get(&[dd, ee, 0, 0]), -1.0 / 12.0);
                            }

                            // G4: -(1/3) X^F X^G (D_{(D}W_{E)(A}♯L_{B)CFG}
                            //                    + D_{(A}W_{B)(D}♯L_{E)CFG})
                            for (pd, pe) in [(dd, ee), (ee, dd)] {
                                for (pa, pb) in [(aa, bb), (bb, aa)] {
                                    addin(sdw[pd][pe][pa].get(&[pb, cc, 0, 0]), -1.0 / 12.0);
                                    addin(sdw[pa][pb][pd].get(&[pe, cc, 0, 0]), -1.0 / 12.0);
                                }
                            }

                            // G5: -(1/6) X^F X^G (D_{(A}W_{|C(D}♯L_{E)|B)FG}
                            //                    + D_{(D}W_{|C(A}♯L_{B)|E)FG})
                            for (pa, pb) in [(aa, bb), (bb, aa)] {
                                for (pd, pe) in [(dd, ee), (ee, dd)] {
                                    addin(sdw[pa][cc][pd].get(&[pe, pb, 0, 0]), -1.0 / 24.0);
                                    addin(sdw[pd][cc][pa].get(&[pb, pe, 0, 0]), -1.0 / 24.0);
                                }
                            }
                        }
                        out.set(&[cc, dd, ee, aa, bb], acc);
                    }
                }
            }
        }
    }
    Ok(out)
}

fn check_rank2_state_shape<T: Component>(l: &Tensor<T>) -> Result<()> {
    if l.rank() != 4 || l.slots().iter().any(|&k| k != SlotKind::Cotractor) {
        return Err(Error::Shape(
            "rank-2 state needs four cotractor slots".into(),
        ));
    }
    Ok(())
}

/// Fix the first `vals.len()` slots of `t` at the given component indices.
pub(crate) fn slice_leading<T: Component>(t: &Tensor<T>, vals: &[usize]) -> Tensor<T> {
    let n = t.n();
    let keep = t.slots()[vals.len()..].to_vec();
    let proto = t.data()[0].zero_like();
    let mut out = Tensor::zeros_with(n, keep.clone(), t.weight(), &proto).with_scale(t.scale_tag());
    let extents: Vec<usize> = keep.iter().map(|s| s.extent(n)).collect();
    let total: usize = extents.iter().product::<usize>().max(1);
    let mut idx = vec![0usize; keep.len()];
    let mut full = vals.to_vec();
    full.resize(t.rank(), 0);
    for lin in 0..total {
        let mut rem = lin;
        for d in 0..keep.len() {
            let block: usize = extents[d + 1..].iter().product::<usize>().max(1);
            idx[d] = rem / block;
            rem %= block;
        }
        full[vals.len()..].copy_from_slice(&idx);
        out.set(&idx, t.get(&full).clone());
    }
    out
}

/// Rank-2 prolongation derivative of a jet field `L`: `∇_c L - Q_c ♯ L`;
/// zero exactly on images of Killing tensors.
pub fn rank2_prolongation_derivative(frame: &Frame, l: &JetTensor) -> Result<JetTensor> {
    check_rank2_state_shape(l)?;
    let grad = frame.tractor_covd(l)?;
    let order = grad.jet_order();
    let kappa = frame.ctx.kappa().truncated(order);
    let nk = frame.ctx.nabla_kappa().truncated(order);
    let q = rank2_q_sharp(&kappa, &nk, &l.truncated(order))?;
    grad.sub(&q)
}

/// Evaluate `Q_a ♯ S` (pointwise) for a rank-1 or rank-2 state.
pub fn q_sharp_state(frame: &Frame, state: &ProlongationState) -> Result<ChartTensor> {
    match state.rank {
        1 => Ok(rank1_curvature_action(&frame.ctx.kappa().value(), &state.l)?.scale_by(-1.0)),
        2 => {
            let kappa = frame.ctx.kappa().value();
            let nk = frame.ctx.nabla_kappa().value();
            rank2_q_sharp(&kappa, &nk, &state.l)
        }
        r => Err(Error::UnsupportedRank(r)),
    }
}

/// Integrability operator: `κ_{ba}♯L - 2∇_[b (Q_{a]}♯L)` with every inner
/// `∇L` replaced by `Q♯L`, making it algebraic in the state.  Annihilates
/// images of solutions; output gains two skew cotangent slots.
pub fn integrability_obstruction(frame: &Frame, state: &ProlongationState) -> Result<ChartTensor> {
    let n = frame.n();
    let rank = state.rank;
    if rank != 1 && rank != 2 {
        return Err(Error::UnsupportedRank(rank));
    }
    if frame.ctx.order < 4 {
        return Err(Error::Order {
            requested: 4,
            order: frame.ctx.order,
        });
    }
    let jet_order = 1usize;

    // On an exactly flat tractor connection every term carries curvature.
    {
        let k0 = frame.ctx.kappa();
        let nk0 = frame.ctx.nabla_kappa();
        if k0.value().norm() == 0.0
            && nk0.value().norm() == 0.0
            && k0
                .data()
                .iter()
                .all(|j| j.coeffs().iter().all(|&c| c == 0.0))
        {
            let mut slots = vec![SlotKind::Cotangent, SlotKind::Cotangent];
            slots.extend(vec![SlotKind::Cotractor; 2 * rank]);
            return Ok(ChartTensor::zeros(n, slots, 0.0).with_scale(Some(frame.scale_tag())));
        }
    }

    // Constant-component extension of the state.
    let mut l_ext = JetTensor::jet_zeros(
        n,
        vec![SlotKind::Cotractor; 2 * rank],
        0.0,
        n,
        jet_order + 1,
    )
    .with_scale(Some(frame.scale_tag()));
    for (dst, src) in l_ext.data_mut().iter_mut().zip(state.l.data()) {
        *dst = Jet::constant(n, jet_order + 1, *src);
    }

    let q_of = |s: &JetTensor| -> Result<JetTensor> {
        let order = s.jet_order();
        match rank {
            1 => Ok(rank1_curvature_action(&frame.ctx.kappa().truncated(order), s)?.scale_by(-1.0)),
            _ => {
                let nk = frame.ctx.nabla_kappa().truncated(order);
                rank2_q_sharp(&frame.ctx.kappa().truncated(order), &nk, s)
            }
        }
    };

    // A = Q ♯ L̃ as a jet field, then its coupled derivative: slots (b, a, ..).
    let a_field = q_of(&l_ext.truncated(jet_order))?;
    let da = frame.ctx.covd_full(&a_field)?.value();

    // B[b] = Q ♯ (∇_b L̃)
    let dl = frame.ctx.covd_full(&l_ext)?;
    let mut b_parts: Vec<ChartTensor> = Vec::with_capacity(n);
    for b in 0..n {
        let slice = slice_leading(&dl, &[b]);
        b_parts.push(q_of(&slice)?.value());
    }

    // C[b] = Q ♯ (Q_b ♯ L)
    let q_val = q_of(&l_ext.truncated(0))?.value();
    let mut c_parts: Vec<ChartTensor> = Vec::with_capacity(n);
    for b in 0..n {
        let qb = slice_leading(&q_val, &[b]);
        let qq = match rank {
            1 => rank1_curvature_action(&frame.ctx.kappa().value(), &qb)?.scale_by(-1.0),
            _ => rank2_q_sharp(
                &frame.ctx.kappa().value(),
                &frame.ctx.nabla_kappa().value(),
                &qb,
            )?,
        };
        c_parts.push(qq);
    }

    // κ_{ba}♯L - (T_{ba} - T_{ab})
    let kappa_v = frame.ctx.kappa().value();
    let state_slots = 2 * rank;
    let mut out_slots = vec![SlotKind::Cotangent, SlotKind::Cotangent];
    out_slots.extend(vec![SlotKind::Cotractor; state_slots]);
    let mut out = ChartTensor::zeros(n, out_slots, 0.0).with_scale(Some(frame.scale_tag()));
    let fiber: usize = (n + 1).pow(state_slots as u32);
    for b in 0..n {
        for a in 0..n {
            if a == b {
                continue;
            }
            let end = slice_leading(&kappa_v, &[b, a]);
            let lead = sharp(&end, &state.l)?;
            for lin in 0..fiber {
                let t_ba = da.data()[(b * n + a) * fiber + lin]
                    - b_parts[b].data()[a * fiber + lin]
                    + c_parts[b].data()[a * fiber + lin];
                let t_ab = da.data()[(a * n + b) * fiber + lin]
                    - b_parts[a].data()[b * fiber + lin]
                    + c_parts[a].data()[b * fiber + lin];
                let v = lead.data()[lin] - (t_ba - t_ab);
                out.data_mut()[(b * n + a) * fiber + lin] = v;
            }
        }
    }
    Ok(out)
}

/// Flat-case check result.
#[derive(Debug, Clone)]
pub struct FlatCheck {
    /// Distance of `D^r K` from the `(r,r)` class, relative.
    pub young_residual: f64,
    /// Norm of `∇ P(D^r K)` for the candidate, relative.
    pub parallel_residual: f64,
    /// Norm of the Killing operator, relative.
    pub killing_residual: f64,
    /// The candidate vanished identically at this point.
    pub trivial: bool,
}

/// All-rank projectively flat path: `k` solves the Killing equation exactly
/// when `D^r K` lies in the `(r,r)` class, and then `P(D^r K)` is parallel.
pub fn flat_case_check(frame: &Frame, cand: &KillingCandidate, order: usize) -> Result<FlatCheck> {
    let kappa_norm = frame.ctx.kappa().value().norm();
    if kappa_norm > 1e-8 {
        return Err(Error::NotProjectivelyFlat { kappa_norm });
    }
    let r = cand.rank;
    let k = cand.eval_jets(&frame.ctx.point, order)?;
    let k_norm = k.value().norm();
    if k_norm == 0.0 {
        return Ok(FlatCheck {
            young_residual: 0.0,
            parallel_residual: 0.0,
            killing_residual: 0.0,
            trivial: true,
        });
    }
    let kk = inject_k_jets(frame, &k)?;
    let mut dk = kk.clone();
    for _ in 0..r {
        dk = frame.thomas_d(&dk)?;
    }
    let c = young_idempotence_constant(frame.n() + 1, r);
    let p = young_project_rr(&dk, r)?;
    let young_residual = {
        let diff = dk.value().sub(&p.value().scale_by(1.0 / c))?;
        diff.norm() / dk.value().norm().max(1e-30)
    };
    let grad = frame.tractor_covd(&p)?;
    let parallel_residual = grad.value().norm() / p.value().norm().max(k_norm).max(1e-30);
    let killing = killing_operator(frame.ctx.structure, cand, &frame.ctx.point, order)?;
    let killing_residual = killing.norm() / k_norm.max(1e-30);
    Ok(FlatCheck {
        young_residual,
        parallel_residual,
        killing_residual,
        trivial: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PointContext;

    fn frame_at<'a>(s: &'a AffineStructure, pt: &[f64], order: usize) -> Frame<'a> {
        Frame::new(PointContext::new(s, pt, order).unwrap())
    }

    fn rotation_candidate() -> KillingCandidate {
        // k = (-y, x) lowered with δ, weight 2 (flat chart: lift factor 1)
        KillingCandidate::from_weighted(
            2,
            1,
            vec![
                Field::from_fn(|v| Ok(v[1].neg())),
                Field::from_fn(|v| Ok(v[0].clone())),
            ],
        )
    }

    #[test]
    fn inject_zero_slots_and_values() {
        let s = AffineStructure::flat(2, "flat2");
        let f = frame_at(&s, &[0.3, 0.4], 3);
        // r=2, k = dx ⊗ dx
        let cand = KillingCandidate::from_weighted(
            2,
            2,
            vec![Field::Const(1.0), Field::Zero, Field::Zero, Field::Zero],
        );
        let k = inject_k(&f, &cand, 3).unwrap();
        assert_eq!(k.weight(), 2.0);
        for a in 0..=2 {
            for b in 0..=2 {
                let expect = if a == 1 && b == 1 { 1.0 } else { 0.0 };
                assert_eq!(k.at(&[a, b]), expect);
            }
        }
        assert_eq!(contract_x(&k, 0).unwrap().norm(), 0.0);
    }

    #[test]
    fn killing_operator_flat_examples() {
        let s = AffineStructure::flat(2, "flat2");
        let rot = rotation_candidate();
        let op = killing_operator(&s, &rot, &[0.7, -0.2], 3).unwrap();
        assert!(op.norm() < 1e-14);
        // k = (x, 0): not Killing, xx-component of ∇_(a k_b) = 1
        let bad = KillingCandidate::from_weighted(
            2,
            1,
            vec![Field::from_fn(|v| Ok(v[0].clone())), Field::Zero],
        );
        let op = killing_operator(&s, &bad, &[0.1, 0.9], 3).unwrap();
        assert!((op.at(&[0, 0]) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rank1_splitting_and_recovery_roundtrip() {
        let s = AffineStructure::flat(2, "flat2");
        let f = frame_at(&s, &[0.25, -0.6], 4);
        let rot = rotation_candidate();
        let state = splitting_l(&f, &rot, 4).unwrap();
        // X^F L_{FE} = K_E
        let xl = contract_x(&state.l, 0).unwrap();
        let k = inject_k(&f, &rot, 4).unwrap();
        let diff = xl.sub(&k).unwrap().norm();
        assert!(diff < 1e-13, "X L vs K diff {diff}");
        // recover_k round trip
        let rec = recover_k(&state).unwrap();
        let k_orig = rot.eval_jets(&[0.25, -0.6], 4).unwrap().value();
        assert!(rec.sub(&k_orig).unwrap().norm() < 1e-12);
    }

    #[test]
    fn rank1_constant_candidate_prolongs_to_constant_pair() {
        // flat, k = dx: L_{0c} = k_c, L_{bc} = ∇_[b k_c] = 0
        let s = AffineStructure::flat(2, "flat2");
        let f = frame_at(&s, &[0.0, 0.0], 3);
        let cand = KillingCandidate::from_weighted(2, 1, vec![Field::Const(1.0), Field::Zero]);
        let state = splitting_l(&f, &cand, 3).unwrap();
        assert!((state.l.at(&[0, 1]) - 1.0).abs() < 1e-14);
        assert!((state.l.at(&[1, 0]) + 1.0).abs() < 1e-14);
        assert!(state.l.at(&[1, 2]).abs() < 1e-14);
        assert!(state.l.at(&[2, 1]).abs() < 1e-14);
    }

    #[test]
    fn zero_state_recovers_zero() {
        let zero = ChartTensor::zeros(2, vec![SlotKind::Cotractor; 4], 0.0);
        let state = ProlongationState::new(2, zero).unwrap();
        let rec = recover_k(&state).unwrap();
        assert_eq!(rec.norm(), 0.0);
    }

    #[test]
    fn unsupported_rank_rejected() {
        assert!(matches!(
            recovery_constant(3),
            Err(Error::UnsupportedRank(3))
        ));
    }

    #[test]
    fn rank2_flat_killing_is_parallel_and_recovery_constant() {
        let s = AffineStructure::flat(2, "flat2");
        let f = frame_at(&s, &[0.42, 0.13], 5);
        let cand = KillingCandidate::from_weighted(
            2,
            2,
            vec![Field::Const(1.0), Field::Zero, Field::Zero, Field::Zero],
        );
        let lj = splitting_l_jets(&f, &cand, 5).unwrap();
        let grad = f.tractor_covd(&lj).unwrap();
        assert!(grad.value().norm() < 1e-12);
        // X^B X^C L_{BCDE} = (3/2) K_{DE}
        let xxl = contract_x(&contract_x(&lj.value(), 0).unwrap(), 0).unwrap();
        let k = inject_k(&f, &cand, 5).unwrap();
        let diff = xxl.sub(&k.scale_by(1.5)).unwrap().norm();
        assert!(diff < 1e-12, "XXL vs 3/2 K: {diff}");
    }

    #[test]
    fn measured_constants_match_known_values() {
        for n in [2usize, 3] {
            for r in [1usize, 2] {
                let (c, resid) = measured_recovery_constant(n, r).unwrap();
                assert!(resid < 1e-10, "proportionality residual {resid}");
                if r == 1 {
                    assert!((c - 1.0).abs() < 1e-10, "c({n},1) = {c}");
                } else {
                    assert!((c - 1.5).abs() < 1e-10, "c({n},2) = {c}");
                }
            }
        }
    }

    #[test]
    fn flat_case_check_detects_non_killing() {
        let s = AffineStructure::flat(2, "flat2");
        let f = frame_at(&s, &[0.3, 0.2], 5);
        let good = rotation_candidate();
        let chk = flat_case_check(&f, &good, 5).unwrap();
        assert!(chk.young_residual < 1e-12);
        assert!(chk.parallel_residual < 1e-12);
        assert!(chk.killing_residual < 1e-12);
        // non-Killing control k = x^2 dx⊗dx
        let bad = KillingCandidate::from_weighted(
            2,
            2,
            vec![
                Field::from_fn(|v| v[0].mul(&v[0])),
                Field::Zero,
                Field::Zero,
                Field::Zero,
            ],
        );
        let chk = flat_case_check(&f, &bad, 5).unwrap();
        assert!(
            chk.young_residual > 1e-3,
            "young residual {}",
            chk.young_residual
        );
        assert!(chk.killing_residual > 1e-3);
        // zero candidate: trivial flag
        let zero = KillingCandidate::from_weighted(2, 1, vec![Field::Zero, Field::Zero]);
        let chk = flat_case_check(&f, &zero, 5).unwrap();
        assert!(chk.trivial);
    }

    #[test]
    fn q_sharp_vanishes_on_projectively_flat() {
        // flat chart and a projectively changed flat chart: every term
        // carries κ or ∇κ
        let flat = std::sync::Arc::new(AffineStructure::flat(2, "flat2"));
        let changed = flat.projective_change(
            vec![Field::from_fn(|v| Ok(v[0].clone())), Field::Zero],
            "flat2-pc",
        );
        for s in [flat.as_ref().clone(), changed] {
            let f = frame_at(&s, &[0.3, -0.2], 5);
            let mut l = ChartTensor::zeros(2, vec![SlotKind::Cotractor; 4], 0.0);
            let mut st = 99u64;
            for v in l.data_mut() {
                st ^= st << 13;
                st ^= st >> 7;
                st ^= st << 17;
                *v = (st >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
            }
            let l = young_project_rr(&l, 2).unwrap();
            let q =
                rank2_q_sharp(&f.ctx.kappa().value(), &f.ctx.nabla_kappa().value(), &l).unwrap();
            assert!(q.norm() < 1e-12, "Q must vanish, got {}", q.norm());
        }
    }
}
