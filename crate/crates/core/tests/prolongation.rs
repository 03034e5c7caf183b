#![allow(clippy::needless_range_loop)]

//! Rank-1 and rank-2 prolongation checks on curved geometries: the closed
//! forms of the splitting operator, the X-contraction lemmas, agreement of
//! the Thomas-D and tractor-connection forms of the right-hand side, and the
//! parallelism of split Killing tensors for the corrected connection.

use ptcalc::catalog;
use ptcalc::geometry::{Field, PointContext};
use ptcalc::jet::Jet;
use ptcalc::killing::{
    inject_k_jets, integrability_obstruction, rank1_prolongation_derivative,
    rank2_prolongation_derivative, rank2_q_sharp, rank2_q_sharp_d_form, splitting_l_jets,
    KillingCandidate, ProlongationState,
};
use ptcalc::tensor::{
    young_idempotence_constant, young_project_rr, ChartTensor, JetTensor, SlotKind,
};
use ptcalc::tractor::{contract_w, contract_x, sharp, Frame};

fn rng(seed: u64) -> impl FnMut() -> f64 {
    let mut state = seed | 1;
    move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    }
}

fn sample_points(seed: u64, count: usize, half: f64) -> Vec<[f64; 2]> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| [r() * 2.0 * half, r() * 2.0 * half])
        .collect()
}

fn random_class_state(n: usize, r: usize, seed: u64) -> ChartTensor {
    let mut rr = rng(seed);
    let len = (n + 1).pow(2 * r as u32);
    let data: Vec<f64> = (0..len).map(|_| rr()).collect();
    let t = ChartTensor::from_data(n, vec![SlotKind::Cotractor; 2 * r], 0.0, data);
    let c = young_idempotence_constant(n + 1, r);
    young_project_rr(&t, r).unwrap().scale_by(1.0 / c)
}

#[test]
fn liouville_rank2_split_state_is_parallel() {
    // The central claim: L(k) of the Liouville first integral is parallel for
    // the corrected connection, i.e. ∇L = Q♯L at every chart point.
    let entry = catalog::get("liouville").unwrap();
    let cand = catalog::liouville_rank2(&entry.structure).unwrap();
    for pt in sample_points(41, 8, 0.7) {
        let ctx = PointContext::new(&entry.structure, &pt, 6).unwrap();
        let frame = Frame::new(ctx);
        let lj = splitting_l_jets(&frame, &cand, 6).unwrap();
        let res = rank2_prolongation_derivative(&frame, &lj).unwrap();
        let rel = res.value().norm() / lj.value().norm().max(1e-30);
        assert!(rel < 1e-8, "prolongation residual {rel:.3e} at {pt:?}");
    }
}

#[test]
fn liouville_random_state_is_not_parallel() {
    // A generic element of the (2,2) class is far from parallel.
    let entry = catalog::get("liouville").unwrap();
    let pt = [0.31, -0.42];
    let ctx = PointContext::new(&entry.structure, &pt, 6).unwrap();
    let frame = Frame::new(ctx);
    for seed in [7u64, 8] {
        let l = random_class_state(2, 2, seed);
        let l = l.scale_by(1.0 / l.norm());
        // constant-component extension
        let mut lj = JetTensor::jet_zeros(2, vec![SlotKind::Cotractor; 4], 0.0, 2, 4)
            .with_scale(Some(frame.scale_tag()));
        for (dst, src) in lj.data_mut().iter_mut().zip(l.data()) {
            *dst = Jet::constant(2, 4, *src);
        }
        let res = rank2_prolongation_derivative(&frame, &lj).unwrap();
        let rel = res.value().norm();
        assert!(rel > 1e-3, "non-solution residual too small: {rel:.3e}");
    }
}

#[test]
fn x_contraction_of_d_form_vanishes_for_any_class_state() {
    // The Thomas-D form of the right-hand side is annihilated by X on its
    // derivative slot for every state in the class, not only solutions.
    let entry = catalog::get("liouville").unwrap();
    let pt = [0.45, 0.2];
    let ctx = PointContext::new(&entry.structure, &pt, 6).unwrap();
    let frame = Frame::new(ctx);
    let w = frame.w_curvature_jets();
    let dw = frame.thomas_d(&w).unwrap();
    for seed in 0..30u64 {
        let l = random_class_state(2, 2, 1000 + seed);
        let mut lj = JetTensor::jet_zeros(2, vec![SlotKind::Cotractor; 4], 0.0, 2, 0);
        for (dst, src) in lj.data_mut().iter_mut().zip(l.data()) {
            *dst = Jet::constant(2, 0, *src);
        }
        let d_form = rank2_q_sharp_d_form(&w.truncated(0), &dw.truncated(0), &lj)
            .unwrap()
            .value();
        let xd = contract_x(&d_form, 0).unwrap();
        let scale = d_form.norm().max(1.0);
        assert!(
            xd.norm() / scale < 1e-10,
            "X-contraction {:.3e} (seed {seed})",
            xd.norm() / scale
        );
    }
}

#[test]
fn d_form_matches_direct_thomas_d_of_split_state() {
    // For the Liouville solution state, D_C L computed directly from jets
    // must equal the algebraic Thomas-D form evaluated on the state value.
    let entry = catalog::get("liouville").unwrap();
    let cand = catalog::liouville_rank2(&entry.structure).unwrap();
    for pt in sample_points(61, 4, 0.6) {
        let ctx = PointContext::new(&entry.structure, &pt, 6).unwrap();
        let frame = Frame::new(ctx);
        let lj = splitting_l_jets(&frame, &cand, 6).unwrap();
        let direct = frame.thomas_d(&lj).unwrap().value();
        let w = frame.w_curvature_jets();
        let dw = frame.thomas_d(&w).unwrap();
        let d_form = rank2_q_sharp_d_form(&w.truncated(0), &dw.truncated(0), &lj.truncated(0))
            .unwrap()
            .value();
        let diff = direct.sub(&d_form).unwrap().norm();
        let scale = direct.norm().max(1.0);
        assert!(
            diff / scale < 1e-8,
            "D-form vs direct D_C L: {:.3e} at {pt:?}",
            diff / scale
        );
    }
}

#[test]
fn d_form_and_tractor_form_agree_after_projection() {
    // W^C_c of the Thomas-D form reproduces the tractor-connection form.
    let entry = catalog::get("liouville").unwrap();
    for pt in sample_points(99, 4, 0.6) {
        let ctx = PointContext::new(&entry.structure, &pt, 6).unwrap();
        let frame = Frame::new(ctx);
        let w = frame.w_curvature_jets();
        let dw = frame.thomas_d(&w).unwrap();
        let l = random_class_state(2, 2, 555);
        let mut lj = JetTensor::jet_zeros(2, vec![SlotKind::Cotractor; 4], 0.0, 2, 0);
        for (dst, src) in lj.data_mut().iter_mut().zip(l.data()) {
            *dst = Jet::constant(2, 0, *src);
        }
        let d_form = rank2_q_sharp_d_form(&w.truncated(0), &dw.truncated(0), &lj)
            .unwrap()
            .value();
        let projected = contract_w(&d_form, 0).unwrap();
        let q = rank2_q_sharp(
            &frame.ctx.kappa().value(),
            &frame.ctx.nabla_kappa().value(),
            &l,
        )
        .unwrap();
        // projected has the cotangent slot in position 0, as does q
        let diff = projected.sub(&q).unwrap().norm();
        let scale = q.norm().max(projected.norm()).max(1e-12);
        assert!(
            diff / scale < 1e-9,
            "form mismatch {:.3e} at {pt:?}",
            diff / scale
        );
    }
}

#[test]
fn closed_form_of_split_for_killing_candidates() {
    // For D_(A K_BC) = 0:
    //   (P D²K)_{BCDE} = 3/4 D_B D_C K_{DE}
    //                    - 3/8 (W_{BC}♯K + W_{D(B}♯K_{C)E} + W_{E(B}♯K_{C)D})
    // and X^B (P D²K)_{BCDE} = 3/4 D_C K_{DE},
    // and X^B X^C (P D²K)_{BCDE} = 3/2 K_{DE}.
    let entry = catalog::get("liouville").unwrap();
    let cand = catalog::liouville_rank2(&entry.structure).unwrap();
    for pt in sample_points(7, 5, 0.7) {
        let ctx = PointContext::new(&entry.structure, &pt, 6).unwrap();
        let frame = Frame::new(ctx);
        let k = cand.eval_jets(&pt, 6).unwrap();
        let kk = inject_k_jets(&frame, &k).unwrap();
        let dk = frame.thomas_d(&kk).unwrap();
        let ddk = frame.thomas_d(&dk).unwrap();
        let l = young_project_rr(&ddk, 2).unwrap();

        let w = frame.w_curvature();
        let kv = kk.value();
        let sharp_wk = |p: usize, q: usize| -> ChartTensor {
            if p == 0 || q == 0 {
                return ChartTensor::zeros(2, vec![SlotKind::Cotractor; 2], 0.0);
            }
            let kappa = frame.ctx.kappa().value();
            let mut end = ChartTensor::zeros(2, vec![SlotKind::Tractor, SlotKind::Cotractor], 0.0);
            for cc in 0..=2 {
                for dd in 0..=2 {
                    end.set(&[cc, dd], kappa.at(&[p - 1, q - 1, cc, dd]));
                }
            }
            sharp(&end, &kv).unwrap()
        };
        let _ = w;

        let lv = l.value();
        let ddkv = ddk.value();
        let mut max_dev = 0.0f64;
        for b in 0..=2usize {
            for c in 0..=2usize {
                for d in 0..=2usize {
                    for e in 0..=2usize {
                        let mut rhs = 0.75 * ddkv.at(&[b, c, d, e]);
                        rhs -= 0.375 * sharp_wk(b, c).at(&[d, e]);
                        rhs -=
                            0.375 * 0.5 * (sharp_wk(d, b).at(&[c, e]) + sharp_wk(d, c).at(&[b, e]));
                        rhs -=
                            0.375 * 0.5 * (sharp_wk(e, b).at(&[c, d]) + sharp_wk(e, c).at(&[b, d]));
                        max_dev = max_dev.max((lv.at(&[b, c, d, e]) - rhs).abs());
                    }
                }
            }
        }
        let scale = lv.norm().max(1.0);
        assert!(
            max_dev / scale < 1e-10,
            "closed form dev {:.3e}",
            max_dev / scale
        );

        // X^B (P D²K) = 3/4 D K
        let xl = contract_x(&lv, 0).unwrap();
        let dkv = dk.value();
        let diff = xl.sub(&dkv.scale_by(0.75)).unwrap().norm() / dkv.norm().max(1e-30);
        assert!(diff < 1e-10, "X-contraction vs 3/4 DK: {diff:.3e}");

        // X^B X^C (P D²K) = 3/2 K
        let xxl = contract_x(&xl, 0).unwrap();
        let diff = xxl.sub(&kv.scale_by(1.5)).unwrap().norm() / kv.norm().max(1e-30);
        assert!(diff < 1e-11, "XX-contraction vs 3/2 K: {diff:.3e}");
    }
}

#[test]
fn x_contraction_lemmas_for_triple_d() {
    // X^D X^E D_A D_B D_C K_{DE} = 6 D_(A K_{BC)) for any symmetric K with
    // X^D K_{DE} = 0, and the quarter relation for the projected version.
    let entry = catalog::get("liouville").unwrap();
    let mut r = rng(17);
    // random polynomial symmetric candidate (not Killing)
    let c: Vec<f64> = (0..12).map(|_| r()).collect();
    let kxx = {
        let c = c.clone();
        Field::from_fn(move |v| {
            let mut acc = Jet::constant(2, v[0].order(), c[0]);
            acc = acc.add(&v[0].scale(c[1]))?;
            acc = acc.add(&v[1].scale(c[2]))?;
            acc.add(&v[0].mul(&v[1])?.scale(c[3]))
        })
    };
    let kxy = {
        let c = c.clone();
        Field::from_fn(move |v| {
            let mut acc = Jet::constant(2, v[0].order(), c[4]);
            acc = acc.add(&v[0].scale(c[5]))?;
            acc = acc.add(&v[1].scale(c[6]))?;
            acc.add(&v[0].mul(&v[0])?.scale(c[7]))
        })
    };
    let kyy = {
        let c = c.clone();
        Field::from_fn(move |v| {
            let mut acc = Jet::constant(2, v[0].order(), c[8]);
            acc = acc.add(&v[0].scale(c[9]))?;
            acc = acc.add(&v[1].scale(c[10]))?;
            acc.add(&v[1].mul(&v[1])?.scale(c[11]))
        })
    };
    let cand = KillingCandidate::from_weighted(2, 2, vec![kxx, kxy.clone(), kxy, kyy]);

    for pt in sample_points(23, 3, 0.6) {
        let ctx = PointContext::new(&entry.structure, &pt, 6).unwrap();
        let frame = Frame::new(ctx);
        let k = cand.eval_jets(&pt, 6).unwrap();
        let kk = inject_k_jets(&frame, &k).unwrap();
        let dk = frame.thomas_d(&kk).unwrap();
        let ddk = frame.thomas_d(&dk).unwrap();
        let dddk = frame.thomas_d(&ddk).unwrap().value();
        // slots of dddk: (A, B, C, D, E); contract X into D and E
        let xe = contract_x(&contract_x(&dddk, 3).unwrap(), 3).unwrap();
        let sym_dk = dk.value().symmetrize(&[0, 1, 2]).unwrap().scale_by(6.0);
        let scale = dddk.norm().max(1.0);
        let dev = xe.sub(&sym_dk).unwrap().norm() / scale;
        assert!(dev < 1e-10, "triple-D contraction lemma dev {dev:.3e}");

        // X^E X^D D_A (P D²K)_{BCDE} = (1/4) X^E X^D D_A D_B D_C K_{DE}
        let l = young_project_rr(&ddk, 2).unwrap();
        let dl = frame.thomas_d(&l).unwrap().value();
        let x_dl = contract_x(&contract_x(&dl, 3).unwrap(), 3).unwrap();
        let expect = contract_x(&contract_x(&dddk, 3).unwrap(), 3)
            .unwrap()
            .scale_by(0.25);
        let dev = x_dl.sub(&expect).unwrap().norm() / scale;
        assert!(dev < 1e-10, "projected quarter lemma dev {dev:.3e}");
    }
}

#[test]
fn mid_form_of_derivative_for_liouville() {
    // D_C (P D²K)_{DEAB} written through W♯-corrections of D³K holds for the
    // Liouville candidate.
    let entry = catalog::get("liouville").unwrap();
    let cand = catalog::liouville_rank2(&entry.structure).unwrap();
    for pt in sample_points(31, 3, 0.6) {
        let ctx = PointContext::new(&entry.structure, &pt, 6).unwrap();
        let frame = Frame::new(ctx);
        let k = cand.eval_jets(&pt, 6).unwrap();
        let kk = inject_k_jets(&frame, &k).unwrap();
        let dk = frame.thomas_d(&kk).unwrap();
        let ddk = frame.thomas_d(&dk).unwrap();
        let l = young_project_rr(&ddk, 2).unwrap();
        let dl = frame.thomas_d(&l).unwrap().value(); // (C, D, E, A, B)

        let w_jets = frame.w_curvature_jets();
        // sharp of W on K and on DK, value level and one-derivative level
        let wk = sharp(&w_jets, &kk.truncated(w_jets.jet_order())).unwrap(); // (P,Q, D,E) jets
        let dwk = frame.thomas_d(&wk).unwrap().value(); // (A, P, Q, D, E)
        let w_dk = sharp(&w_jets.value(), &dk.value()).unwrap(); // (P,Q, C?, A,B) values

        let n1 = 3usize;
        let mut max_dev = 0.0f64;
        for cc in 0..n1 {
            for dd in 0..n1 {
                for ee in 0..n1 {
                    for aa in 0..n1 {
                        for bb in 0..n1 {
                            // RHS of the mid form
                            let mut rhs = 0.0;
                            // (1/2) W_{C(D}♯ D_{E)} K_{AB}
                            for (p, q) in [(dd, ee), (ee, dd)] {
                                rhs += 0.25 * w_dk.at(&[cc, p, q, aa, bb]);
                            }
                            // -(3/4) W_{A(C}♯ D_{|B|} K_{DE)}: sym over (C,D,E)
                            for (x1, x2, x3) in [
                                (cc, dd, ee),
                                (dd, ee, cc),
                                (ee, cc, dd),
                                (cc, ee, dd),
                                (dd, cc, ee),
                                (ee, dd, cc),
                            ] {
                                rhs -= 0.75 / 6.0 * w_dk.at(&[aa, x1, bb, x2, x3]);
                            }
                            // -(3/4) D_A (W_{B(C}♯K_{DE)})
                            for (x1, x2, x3) in [
                                (cc, dd, ee),
                                (dd, ee, cc),
                                (ee, cc, dd),
                                (cc, ee, dd),
                                (dd, cc, ee),
                                (ee, dd, cc),
                            ] {
                                rhs -= 0.75 / 6.0 * dwk.at(&[aa, bb, x1, x2, x3]);
                            }
                            // -(1/8) D_C (W_{AB}♯K_{DE} - W_{E(A}♯K_{B)D} - W_{D(A}♯K_{B)E})
                            rhs -= 0.125 * dwk.at(&[cc, aa, bb, dd, ee]);
                            for (p, q) in [(aa, bb), (bb, aa)] {
                                rhs += 0.0625 * dwk.at(&[cc, ee, p, q, dd]);
                                rhs += 0.0625 * dwk.at(&[cc, dd, p, q, ee]);
                            }
                            // -(1/8) D_D (W_{AB}♯K_{EC} + W_{EC}♯K_{AB}
                            //            + 2 W_{E(A}♯K_{B)C} + 2 W_{C(A}♯K_{B)E})
                            rhs -= 0.125 * dwk.at(&[dd, aa, bb, ee, cc]);
                            rhs -= 0.125 * dwk.at(&[dd, ee, cc, aa, bb]);
                            for (p, q) in [(aa, bb), (bb, aa)] {
                                rhs -= 0.125 * dwk.at(&[dd, ee, p, q, cc]);
                                rhs -= 0.125 * dwk.at(&[dd, cc, p, q, ee]);
                            }
                            // -(1/8) D_E (W_{AB}♯K_{DC} + W_{DC}♯K_{AB}
                            //            + 2 W_{C(A}♯K_{B)D} + 2 W_{D(A}♯K_{B)C})
                            rhs -= 0.125 * dwk.at(&[ee, aa, bb, dd, cc]);
                            rhs -= 0.125 * dwk.at(&[ee, dd, cc, aa, bb]);
                            for (p, q) in [(aa, bb), (bb, aa)] {
                                rhs -= 0.125 * dwk.at(&[ee, cc, p, q, dd]);
                                rhs -= 0.125 * dwk.at(&[ee, dd, p, q, cc]);
                            }
                            let dev = (dl.at(&[cc, dd, ee, aa, bb]) - rhs).abs();
                            max_dev = max_dev.max(dev);
                        }
                    }
                }
            }
        }
        let scale = dl.norm().max(1.0);
        assert!(
            max_dev / scale < 1e-8,
            "mid form dev {:.3e}",
            max_dev / scale
        );
    }
}

#[test]
fn rank1_connection_matches_component_prolongation_on_sphere() {
    // Slotwise: the tractor-form derivative of a state (k, μ) is
    //   (∇_a k_b - μ_{ab},  ∇_a μ_{bc} - R_{bc}{}^d{}_a k_d)
    // with density-coupled derivatives (Levi-Civita scale, symmetric Ricci).
    let entry = catalog::get("sphere2").unwrap();
    let mut r = rng(71);
    let coeffs: Vec<f64> = (0..9).map(|_| r()).collect();
    for pt in sample_points(73, 5, 0.6) {
        let ctx = PointContext::new(&entry.structure, &pt, 5).unwrap();
        let frame = Frame::new(ctx);
        // random (k, μ) pair as a field: k_c weight 2, μ antisymmetric weight 2
        let kf: Vec<Field> = (0..2)
            .map(|i| {
                let c = coeffs.clone();
                Field::from_fn(move |v| {
                    let mut acc = Jet::constant(2, v[0].order(), c[i]);
                    acc = acc.add(&v[0].scale(c[i + 2]))?;
                    acc = acc.add(&v[1].scale(c[i + 4]))?;
                    acc.add(&v[0].mul(&v[1])?.scale(c[i + 6]))
                })
            })
            .collect();
        let muf = {
            let c = coeffs.clone();
            Field::from_fn(move |v| {
                let mut acc = Jet::constant(2, v[0].order(), c[8]);
                acc = acc.add(&v[0].scale(c[0]))?;
                acc.add(&v[1].mul(&v[1])?.scale(c[4]))
            })
        };
        // Assemble V_{BC}: V_{0c} = k_c, V_{c0} = -k_c, V_{bc} = μ ε_{bc}
        let order = 5;
        let kj: Vec<Jet> = kf.iter().map(|f| f.eval_jet(&pt, order).unwrap()).collect();
        let muj = muf.eval_jet(&pt, order).unwrap();
        let mut v = JetTensor::jet_zeros(2, vec![SlotKind::Cotractor; 2], 0.0, 2, order)
            .with_scale(Some(frame.scale_tag()));
        for c in 0..2 {
            v.set(&[0, c + 1], kj[c].clone());
            v.set(&[c + 1, 0], kj[c].neg());
        }
        v.set(&[1, 2], muj.clone());
        v.set(&[2, 1], muj.neg());

        let out = rank1_prolongation_derivative(&frame, &v).unwrap().value();

        // Component form
        let mut k_t = JetTensor::jet_zeros(2, vec![SlotKind::Cotangent], 2.0, 2, order);
        for c in 0..2 {
            k_t.set(&[c], kj[c].clone());
        }
        let mut mu_t = JetTensor::jet_zeros(
            2,
            vec![SlotKind::Cotangent, SlotKind::Cotangent],
            2.0,
            2,
            order,
        );
        mu_t.set(&[0, 1], muj.clone());
        mu_t.set(&[1, 0], muj.neg());
        let dk = frame.ctx.covd(&k_t).unwrap().value();
        let dmu = frame.ctx.covd(&mu_t).unwrap().value();
        let riem = frame.ctx.riemann().value();
        let kv = k_t.value();
        let muv = mu_t.value();

        let mut max_dev = 0.0f64;
        // slot (0, c+1): ∇_a k_c - μ_{ac}
        for a in 0..2 {
            for c in 0..2 {
                let expect = dk.at(&[a, c]) - muv.at(&[a, c]);
                max_dev = max_dev.max((out.at(&[a, 0, c + 1]) - expect).abs());
            }
        }
        // slot (b+1, c+1): ∇_a μ_{bc} - R_{bc}{}^d{}_a k_d
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    let mut expect = dmu.at(&[a, b, c]);
                    for d in 0..2 {
                        expect -= riem.at(&[b, c, d, a]) * kv.at(&[d]);
                    }
                    max_dev = max_dev.max((out.at(&[a, b + 1, c + 1]) - expect).abs());
                }
            }
        }
        assert!(max_dev < 1e-10, "slotwise mismatch {max_dev:.3e} at {pt:?}");
    }
}

#[test]
fn rank1_sphere_killing_states_are_parallel() {
    let entry = catalog::get("sphere2").unwrap();
    let fields = catalog::sphere_killing_fields(&entry.structure).unwrap();
    for cand in &fields {
        for pt in sample_points(5, 4, 0.6) {
            let ctx = PointContext::new(&entry.structure, &pt, 5).unwrap();
            let frame = Frame::new(ctx);
            let lj = splitting_l_jets(&frame, cand, 5).unwrap();
            let res = rank1_prolongation_derivative(&frame, &lj).unwrap();
            let rel = res.value().norm() / lj.value().norm().max(1e-30);
            assert!(rel < 1e-10, "rank-1 residual {rel:.3e} at {pt:?}");
        }
    }
}

#[test]
fn integrability_obstruction_annihilates_solutions() {
    let entry = catalog::get("liouville").unwrap();
    let cand = catalog::liouville_rank2(&entry.structure).unwrap();
    for pt in sample_points(83, 4, 0.6) {
        let ctx = PointContext::new(&entry.structure, &pt, 6).unwrap();
        let frame = Frame::new(ctx);
        let state = ptcalc::killing::splitting_l(&frame, &cand, 6).unwrap();
        let obs = integrability_obstruction(&frame, &state).unwrap();
        let rel = obs.norm() / state.l.norm().max(1e-30);
        assert!(rel < 1e-7, "obstruction residual {rel:.3e} at {pt:?}");
    }
    // a random class state at one point is generically obstructed
    let pt = [0.25, -0.55];
    let ctx = PointContext::new(&entry.structure, &pt, 6).unwrap();
    let frame = Frame::new(ctx);
    let l = random_class_state(2, 2, 4242);
    let l = l.scale_by(1.0 / l.norm());
    let state = ProlongationState::new(2, l).unwrap();
    let obs = integrability_obstruction(&frame, &state).unwrap();
    assert!(obs.norm() > 1e-4, "random state unexpectedly unobstructed");
}

#[test]
fn killing_operator_equals_symmetrized_thomas_d_in_norm() {
    // The symmetrized Thomas-D of the included candidate is the embedding of
    // the symmetrized covariant derivative: identical norms, pointwise, and
    // the two residuals vanish together.
    let geoms = ["liouville", "sphere2", "perturbed2"];
    let mut r = rng(2024);
    for name in geoms {
        let entry = catalog::get(name).unwrap();
        for trial in 0..17 {
            // random quadratic symmetric rank-2 candidate
            let c: Vec<f64> = (0..12).map(|_| r()).collect();
            let mk = |o: usize| {
                let c = c.clone();
                Field::from_fn(move |v: &[Jet]| {
                    let mut acc = Jet::constant(2, v[0].order(), c[o]);
                    acc = acc.add(&v[0].scale(c[o + 1]))?;
                    acc = acc.add(&v[1].scale(c[o + 2]))?;
                    acc.add(&v[0].mul(&v[1])?.scale(c[o + 3]))
                })
            };
            let cand = KillingCandidate::from_weighted(2, 2, vec![mk(0), mk(4), mk(4), mk(8)]);
            let pt = [r() * 1.2, r() * 1.2];
            let op = ptcalc::killing::killing_operator(&entry.structure, &cand, &pt, 4).unwrap();
            let ctx = PointContext::new(&entry.structure, &pt, 4).unwrap();
            let frame = Frame::new(ctx);
            let k = cand.eval_jets(&pt, 4).unwrap();
            let kk = inject_k_jets(&frame, &k).unwrap();
            let dk = frame.thomas_d(&kk).unwrap().value();
            let sym = dk.symmetrize(&[0, 1, 2]).unwrap();
            let dev = (op.norm() - sym.norm()).abs();
            assert!(
                dev < 1e-11 * op.norm().max(1.0),
                "{name} trial {trial}: |∇k| = {:.6e} vs |sym DK| = {:.6e}",
                op.norm(),
                sym.norm()
            );
        }
    }
}
