#![allow(clippy::needless_range_loop)]

//! Transport invariants: parametrization independence, concatenation,
//! small-loop curvature scaling, projective invariance of the estimated
//! dimension, and agreement of the recovered holonomy solutions with the
//! polynomial ansatz basis.

use ptcalc::catalog;
use ptcalc::geometry::PointContext;
use ptcalc::killing::{integrability_obstruction, recover_k, ProlongationState};
use ptcalc::linalg::{principal_angles, Mat};
use ptcalc::tensor::{ChartTensor, SlotKind};
use ptcalc::tractor::Frame;
use ptcalc::transport::{
    flat_polynomial_oracle, parallel_transport, solution_space_dimension, young_basis,
    ConnectionKind, Curve,
};

fn class_states(n: usize, r: usize) -> Vec<ChartTensor> {
    let basis = young_basis(n, r);
    (0..basis.cols)
        .map(|j| {
            let mut t = ChartTensor::zeros(n, vec![SlotKind::Cotractor; 2 * r], 0.0);
            for (i, v) in t.data_mut().iter_mut().enumerate() {
                *v = basis.get(i, j);
            }
            t
        })
        .collect()
}

#[test]
fn holonomy_independent_of_parametrization() {
    // the same geometric rectangle, walked with and without edge midpoints
    let entry = catalog::get("perturbed2").unwrap();
    let corner = vec![-0.2, -0.25];
    let plain = Curve::rectangle(corner.clone(), 0, 1, 0.5, 0.45);
    let refined = match &plain {
        Curve::Polyline(pts) => {
            let mut out = Vec::new();
            for w in pts.windows(2) {
                out.push(w[0].clone());
                out.push(w[0].iter().zip(&w[1]).map(|(a, b)| 0.5 * (a + b)).collect());
            }
            out.push(pts.last().unwrap().clone());
            Curve::Polyline(out)
        }
        _ => unreachable!(),
    };
    let states = class_states(2, 1);
    let (a, _) = parallel_transport(
        &entry.structure,
        ConnectionKind::Rank1Prolongation,
        &plain,
        200,
        states.clone(),
        &entry.box_lo,
        &entry.box_hi,
    )
    .unwrap();
    let (b, _) = parallel_transport(
        &entry.structure,
        ConnectionKind::Rank1Prolongation,
        &refined,
        100,
        states,
        &entry.box_lo,
        &entry.box_hi,
    )
    .unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!(x.sub(y).unwrap().norm() < 1e-8);
    }
}

#[test]
fn holonomy_of_concatenated_loops_composes() {
    let entry = catalog::get("perturbed2").unwrap();
    let base = vec![0.0, 0.0];
    let l1 = Curve::rectangle(base.clone(), 0, 1, 0.4, 0.3);
    let l2 = Curve::rectangle(base.clone(), 0, 1, -0.35, 0.5);
    let concat = match (&l1, &l2) {
        (Curve::Polyline(a), Curve::Polyline(b)) => {
            let mut pts = a.clone();
            pts.extend(b[1..].iter().cloned());
            Curve::Polyline(pts)
        }
        _ => unreachable!(),
    };
    let states = class_states(2, 1);
    let run = |curve: &Curve, s: Vec<ChartTensor>| {
        parallel_transport(
            &entry.structure,
            ConnectionKind::Rank1Prolongation,
            curve,
            150,
            s,
            &entry.box_lo,
            &entry.box_hi,
        )
        .unwrap()
        .0
    };
    let through_first = run(&l1, states.clone());
    let sequential = run(&l2, through_first);
    let direct = run(&concat, states);
    for (x, y) in sequential.iter().zip(&direct) {
        assert!(x.sub(y).unwrap().norm() < 1e-8);
    }
}

#[test]
fn small_loop_holonomy_matches_connection_curvature() {
    // Hol(square of side h) - Id = ± h^2 F + O(h^3), with F the curvature of
    // the corrected connection, which the integrability operator computes.
    let entry = catalog::get("perturbed2").unwrap();
    let center = vec![0.25, 0.15];
    let states = class_states(2, 1);
    let d = states.len();

    // curvature action matrix at the center from the obstruction operator
    let ctx = PointContext::new(&entry.structure, &center, 6).unwrap();
    let frame = Frame::new(ctx);
    let mut f01 = Mat::zeros(states[0].data().len(), d);
    for (j, s) in states.iter().enumerate() {
        let state = ProlongationState::new(1, s.clone()).unwrap();
        let obs = integrability_obstruction(&frame, &state).unwrap();
        // slice (b, a) = (0, 1): flattened offset 1 * fiber
        let fiber = s.data().len();
        for i in 0..fiber {
            f01.set(i, j, obs.data()[fiber + i]);
        }
    }
    let f_norm = f01.frobenius();
    assert!(f_norm > 1e-4, "test geometry must be curved");

    let measure = |h: f64| -> Mat {
        let corner = vec![center[0] - h / 2.0, center[1] - h / 2.0];
        let lp = Curve::rectangle(corner, 0, 1, h, h);
        let (moved, _) = parallel_transport(
            &entry.structure,
            ConnectionKind::Rank1Prolongation,
            &lp,
            100,
            states.clone(),
            &entry.box_lo,
            &entry.box_hi,
        )
        .unwrap();
        let fiber = states[0].data().len();
        let mut dev = Mat::zeros(fiber, d);
        for (j, (m, s)) in moved.iter().zip(&states).enumerate() {
            let diff = m.sub(s).unwrap();
            for i in 0..fiber {
                dev.set(i, j, diff.data()[i] / (h * h));
            }
        }
        dev
    };

    for h in [0.08, 0.04] {
        let dev = measure(h);
        // orientation of the loop fixes the sign; try both
        let mut best = f64::INFINITY;
        for sign in [1.0, -1.0] {
            let mut diff = 0.0;
            for i in 0..dev.rows {
                for j in 0..dev.cols {
                    let e = dev.get(i, j) - sign * f01.get(i, j);
                    diff += e * e;
                }
            }
            best = best.min(diff.sqrt());
        }
        assert!(
            best / f_norm < 0.10,
            "h = {h}: deviation {:.1}% of |F|",
            100.0 * best / f_norm
        );
    }
}

#[test]
fn dimension_is_projectively_invariant() {
    for (name, rank) in [("flat2", 1usize), ("sphere2", 1), ("flat2", 2)] {
        let base = catalog::get(name).unwrap();
        let changed = catalog::get(&format!("{name}+pc")).unwrap();
        let origin = vec![0.05; base.n()];
        let d0 = solution_space_dimension(
            &base.structure,
            rank,
            &origin,
            &base.box_lo,
            &base.box_hi,
            8,
            200,
            11,
        )
        .unwrap();
        let d1 = solution_space_dimension(
            &changed.structure,
            rank,
            &origin,
            &changed.box_lo,
            &changed.box_hi,
            8,
            200,
            11,
        )
        .unwrap();
        assert_eq!(
            d0.dimension, d1.dimension,
            "{name} r{rank}: {} vs {} under representative change",
            d0.dimension, d1.dimension
        );
    }
}

#[test]
fn recovered_holonomy_solutions_span_the_oracle_space() {
    // flat chart, rank 2: transport each fixed-space state to sample points,
    // recover the tensor values, and compare the span with the polynomial
    // ansatz basis by principal angles.
    let entry = catalog::get("flat2").unwrap();
    let origin = vec![0.05, 0.05];
    let report = solution_space_dimension(
        &entry.structure,
        2,
        &origin,
        &entry.box_lo,
        &entry.box_hi,
        8,
        200,
        42,
    )
    .unwrap();
    assert_eq!(report.dimension, 6);
    let samples = [
        vec![0.05, 0.05],
        vec![0.4, -0.3],
        vec![-0.5, 0.2],
        vec![0.3, 0.55],
        vec![-0.25, -0.45],
    ];
    // holonomy columns: recovered k values at the sample points
    let mut hol_cols: Vec<Vec<f64>> = Vec::new();
    for state in &report.fixed_states {
        let mut col = Vec::new();
        for pt in &samples {
            let seg = Curve::segment(origin.clone(), pt.clone());
            let (moved, _) = parallel_transport(
                &entry.structure,
                ConnectionKind::Rank2Prolongation,
                &seg,
                200,
                vec![state.clone()],
                &entry.box_lo,
                &entry.box_hi,
            )
            .unwrap();
            let st = ProlongationState::new(2, moved.into_iter().next().unwrap()).unwrap();
            let k = recover_k(&st).unwrap();
            col.extend_from_slice(k.data());
        }
        hol_cols.push(col);
    }
    // oracle columns
    let oracle = flat_polynomial_oracle(2, 2);
    assert_eq!(oracle.dimension, 6);
    let mut oracle_cols: Vec<Vec<f64>> = Vec::new();
    for j in 0..oracle.dimension {
        let cand = oracle.candidate(j);
        let mut col = Vec::new();
        for pt in &samples {
            let k = cand.eval_jets(pt, 0).unwrap().value();
            col.extend_from_slice(k.data());
        }
        oracle_cols.push(col);
    }
    let rows = hol_cols[0].len();
    let mut a = Mat::zeros(rows, hol_cols.len());
    let mut b = Mat::zeros(rows, oracle_cols.len());
    for (j, c) in hol_cols.iter().enumerate() {
        for (i, v) in c.iter().enumerate() {
            a.set(i, j, *v);
        }
    }
    for (j, c) in oracle_cols.iter().enumerate() {
        for (i, v) in c.iter().enumerate() {
            b.set(i, j, *v);
        }
    }
    let angles = principal_angles(&a, &b);
    assert_eq!(angles.len(), 6);
    for (i, angle) in angles.iter().enumerate() {
        assert!(
            *angle < 1e-6,
            "principal angle {i} = {angle:.3e} exceeds 1e-6"
        );
    }
}

#[test]
fn curved_rank2_holonomy_counts_liouville_integrals() {
    // The Liouville chart carries exactly two independent rank-2 solutions:
    // the metric itself and the Liouville first integral.  The corrected
    // connection's holonomy must cut the 6-dimensional fiber down to that
    // 2-dimensional space, and the obstruction bound must agree.
    let entry = catalog::get("liouville").unwrap();
    let report = solution_space_dimension(
        &entry.structure,
        2,
        &[0.05, 0.05],
        &entry.box_lo,
        &entry.box_hi,
        8,
        200,
        42,
    )
    .unwrap();
    assert_eq!(report.dimension, 2, "{report:?}");
    assert_eq!(report.obstruction_bound, Some(2));
    assert!(!report.bounds_disagree);
    assert!(!report.ambiguous);

    // the fixed space is spanned by the two known solutions: transport each
    // fixed state to sample points, recover the tensor values, and compare
    // spans with {metric, Liouville integral} by principal angles
    let origin = vec![0.05, 0.05];
    let samples = [
        vec![0.05, 0.05],
        vec![0.35, -0.3],
        vec![-0.45, 0.25],
        vec![0.2, 0.5],
    ];
    let mut hol_cols: Vec<Vec<f64>> = Vec::new();
    for state in &report.fixed_states {
        let mut col = Vec::new();
        for pt in &samples {
            let seg = Curve::segment(origin.clone(), pt.clone());
            let (moved, _) = parallel_transport(
                &entry.structure,
                ConnectionKind::Rank2Prolongation,
                &seg,
                200,
                vec![state.clone()],
                &entry.box_lo,
                &entry.box_hi,
            )
            .unwrap();
            let st = ProlongationState::new(2, moved.into_iter().next().unwrap()).unwrap();
            col.extend_from_slice(recover_k(&st).unwrap().data());
        }
        hol_cols.push(col);
    }
    let known = [
        catalog::liouville_rank2(&entry.structure).unwrap(),
        catalog::metric_rank2(&entry.structure).unwrap(),
    ];
    let mut known_cols: Vec<Vec<f64>> = Vec::new();
    for cand in &known {
        let mut col = Vec::new();
        for pt in &samples {
            col.extend_from_slice(cand.eval_jets(pt, 0).unwrap().value().data());
        }
        known_cols.push(col);
    }
    let rows = hol_cols[0].len();
    let mut a = Mat::zeros(rows, hol_cols.len());
    let mut b = Mat::zeros(rows, known_cols.len());
    for (j, c) in hol_cols.iter().enumerate() {
        for (i, v) in c.iter().enumerate() {
            a.set(i, j, *v);
        }
    }
    for (j, c) in known_cols.iter().enumerate() {
        for (i, v) in c.iter().enumerate() {
            b.set(i, j, *v);
        }
    }
    let angles = principal_angles(&a, &b);
    assert_eq!(angles.len(), 2);
    for angle in &angles {
        assert!(
            *angle < 1e-5,
            "recovered span misses a known solution: angle {angle:.3e}"
        );
    }
}

#[test]
fn rank1_dimensions_on_remaining_catalog_charts() {
    // no Killing fields on the Liouville chart; the full isometry algebra
    // on the hyperbolic disk
    let liou = catalog::get("liouville").unwrap();
    let rep = solution_space_dimension(
        &liou.structure,
        1,
        &[0.05, 0.05],
        &liou.box_lo,
        &liou.box_hi,
        8,
        200,
        42,
    )
    .unwrap();
    assert_eq!(rep.dimension, 0);

    let hyp = catalog::get("hyperbolic2").unwrap();
    let rep = solution_space_dimension(
        &hyp.structure,
        1,
        &[0.02, 0.03],
        &hyp.box_lo,
        &hyp.box_hi,
        8,
        200,
        42,
    )
    .unwrap();
    assert_eq!(rep.dimension, 3);
}
