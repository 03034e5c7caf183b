//! Curves, geodesics, first-integral drift, parallel transport of prolonged
//! states, and solution-space dimension by loop holonomy.
//!
//! Transport integrates `dS/dt = ẋ^a Γᵀ-action + correction` with classical
//! RK4 at fixed step; the correction is zero for the plain tractor
//! connection, the curvature action for the rank-1 prolongation and `Q♯` for
//! rank 2, so parallel states of the corrected connection are exactly the
//! fixed points of the stepper.  Holonomy of random loops based at a point
//! bounds the solution space: the fixed space of all loop maps has dimension
//! `d - rank(stack of Hol_i - Id)`, cross-checked against the rank of the
//! stacked integrability obstruction.

use rand::Rng;

use crate::batch;
use crate::error::{Error, Result};
use crate::geometry::{AffineStructure, PointContext};
use crate::killing::{
    integrability_obstruction, rank1_curvature_action, rank2_q_sharp, KillingCandidate,
    ProlongationState,
};
use crate::linalg::{orthonormalize, svd, Mat};
use crate::tensor::{young_idempotence_constant, young_project_rr, ChartTensor, SlotKind};
use crate::tractor::Frame;

/// Parametrized curve on the chart.
#[derive(Debug, Clone)]
pub enum Curve {
    /// Piecewise-linear waypoints; parameter runs one unit per edge.
    Polyline(Vec<Vec<f64>>),
    /// `x_i(t) = c_i + A_i sin(2π f_i t + φ_i)`, `t ∈ [0, 1]`; closed since
    /// the frequencies are integers.
    Lissajous {
        center: Vec<f64>,
        amp: Vec<f64>,
        freq: Vec<u32>,
        phase: Vec<f64>,
    },
}

impl Curve {
    pub fn segment(a: Vec<f64>, b: Vec<f64>) -> Curve {
        Curve::Polyline(vec![a, b])
    }

    /// Axis-aligned rectangle through `corner` in the plane of axes
    /// `(i, j)`, closed back to the corner.
    pub fn rectangle(corner: Vec<f64>, i: usize, j: usize, di: f64, dj: f64) -> Curve {
        let mut p1 = corner.clone();
        p1[i] += di;
        let mut p2 = p1.clone();
        p2[j] += dj;
        let mut p3 = corner.clone();
        p3[j] += dj;
        Curve::Polyline(vec![corner.clone(), p1, p2, p3, corner])
    }

    pub fn is_closed(&self) -> bool {
        match self {
            Curve::Polyline(pts) => match (pts.first(), pts.last()) {
                (Some(f), Some(l)) => f.iter().zip(l).all(|(a, b)| (a - b).abs() < 1e-14),
                _ => false,
            },
            Curve::Lissajous { .. } => true,
        }
    }

    /// Number of unit parameter intervals: edges for polylines, quarters
    /// for smooth loops (so a fixed per-unit step count resolves both kinds
    /// comparably).
    pub fn units(&self) -> usize {
        match self {
            Curve::Polyline(pts) => pts.len().saturating_sub(1),
            Curve::Lissajous { .. } => 4,
        }
    }

    /// Position and velocity at parameter `t ∈ [0, units]`.
    pub fn eval(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        let edges = self.units();
        let clamped = t.clamp(0.0, edges as f64);
        let mut e = clamped.floor() as usize;
        if e >= edges {
            e = edges - 1;
        }
        self.eval_on_unit(e, clamped - e as f64)
    }

    /// Position and velocity within one parameter unit (`s ∈ [0, 1]`); at
    /// unit boundaries the velocity belongs to the given unit, which keeps
    /// integrator stages off the far side of a polyline corner.
    pub fn eval_on_unit(&self, unit: usize, s: f64) -> (Vec<f64>, Vec<f64>) {
        match self {
            Curve::Polyline(pts) => {
                let a = &pts[unit];
                let b = &pts[unit + 1];
                let x: Vec<f64> = a.iter().zip(b).map(|(p, q)| p + s * (q - p)).collect();
                let v: Vec<f64> = a.iter().zip(b).map(|(p, q)| q - p).collect();
                (x, v)
            }
            Curve::Lissajous {
                center,
                amp,
                freq,
                phase,
            } => {
                let t = (unit as f64 + s) / 4.0;
                let two_pi = std::f64::consts::TAU;
                let x: Vec<f64> = center
                    .iter()
                    .zip(amp.iter().zip(freq.iter().zip(phase)))
                    .map(|(c, (a, (f, p)))| c + a * (two_pi * *f as f64 * t + p).sin())
                    .collect();
                let v: Vec<f64> = amp
                    .iter()
                    .zip(freq.iter().zip(phase))
                    .map(|(a, (f, p))| {
                        a * two_pi * *f as f64 / 4.0 * (two_pi * *f as f64 * t + p).cos()
                    })
                    .collect();
                (x, v)
            }
        }
    }
}

fn check_box(x: &[f64], lo: &[f64], hi: &[f64], t: f64) -> Result<()> {
    for ((xi, l), h) in x.iter().zip(lo).zip(hi) {
        if xi < l || xi > h {
            return Err(Error::ChartExit { t });
        }
    }
    Ok(())
}

/// Geodesic sample: position and velocity.
#[derive(Debug, Clone)]
pub struct GeodesicSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

/// Classical RK4 for `ẍ^c = -Γ_{ab}{}^c ẋ^a ẋ^b`; errors out if the
/// trajectory leaves the bounding box.
pub fn integrate_geodesic(
    structure: &AffineStructure,
    x0: &[f64],
    u0: &[f64],
    t_end: f64,
    steps: usize,
    box_lo: &[f64],
    box_hi: &[f64],
) -> Result<Vec<GeodesicSample>> {
    let n = structure.n();
    let h = t_end / steps as f64;
    let accel = |x: &[f64], u: &[f64]| -> Result<Vec<f64>> {
        let gamma = structure.gamma_jets(x, 0)?;
        let mut a = vec![0.0; n];
        for c in 0..n {
            for i in 0..n {
                for j in 0..n {
                    a[c] -= gamma.get(&[i, j, c]).value() * u[i] * u[j];
                }
            }
        }
        Ok(a)
    };
    let mut x = x0.to_vec();
    let mut u = u0.to_vec();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(GeodesicSample {
        t: 0.0,
        x: x.clone(),
        u: u.clone(),
    });
    for s in 0..steps {
        let t = s as f64 * h;
        check_box(&x, box_lo, box_hi, t)?;
        let k1x = u.clone();
        let k1u = accel(&x, &u)?;
        let xa: Vec<f64> = x.iter().zip(&k1x).map(|(p, d)| p + 0.5 * h * d).collect();
        let ua: Vec<f64> = u.iter().zip(&k1u).map(|(p, d)| p + 0.5 * h * d).collect();
        let k2x = ua.clone();
        let k2u = accel(&xa, &ua)?;
        let xb: Vec<f64> = x.iter().zip(&k2x).map(|(p, d)| p + 0.5 * h * d).collect();
        let ub: Vec<f64> = u.iter().zip(&k2u).map(|(p, d)| p + 0.5 * h * d).collect();
        let k3x = ub.clone();
        let k3u = accel(&xb, &ub)?;
        let xc: Vec<f64> = x.iter().zip(&k3x).map(|(p, d)| p + h * d).collect();
        let uc: Vec<f64> = u.iter().zip(&k3u).map(|(p, d)| p + h * d).collect();
        let k4x = uc.clone();
        let k4u = accel(&xc, &uc)?;
        for i in 0..n {
            x[i] += h / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]);
            u[i] += h / 6.0 * (k1u[i] + 2.0 * k2u[i] + 2.0 * k3u[i] + k4u[i]);
        }
        out.push(GeodesicSample {
            t: (s + 1) as f64 * h,
            x: x.clone(),
            u: u.clone(),
        });
    }
    Ok(out)
}

/// Max relative drift of `k_{b..c} u^b .. u^c` along a geodesic sample, with
/// `k` in the classical (unweighted) normalization.
pub fn first_integral_drift(cand: &KillingCandidate, samples: &[GeodesicSample]) -> Result<f64> {
    let mut i0 = None;
    let mut max_drift: f64 = 0.0;
    for s in samples {
        let k = cand.eval_classical_jets(&s.x, 0)?.value();
        let r = cand.rank;
        let n = k.n();
        let total: usize = n.pow(r as u32);
        let mut value = 0.0;
        for lin in 0..total {
            let mut rem = lin;
            let mut prod = k.data()[lin];
            for d in 0..r {
                let block = n.pow((r - 1 - d) as u32);
                let idx = rem / block;
                rem %= block;
                prod *= s.u[idx];
            }
            value += prod;
        }
        match i0 {
            None => i0 = Some(value),
            Some(base) => {
                max_drift = max_drift.max((value - base).abs() / base.abs().max(1e-12));
            }
        }
    }
    Ok(max_drift)
}

/// Which connection drives the transport.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnectionKind {
    PlainTractor,
    Rank1Prolongation,
    Rank2Prolongation,
}

impl ConnectionKind {
    fn context_order(self) -> usize {
        match self {
            ConnectionKind::PlainTractor => 1,
            ConnectionKind::Rank1Prolongation => 2,
            ConnectionKind::Rank2Prolongation => 3,
        }
    }
}

/// Transport diagnostics.
#[derive(Debug, Clone, Default)]
pub struct TransportDiag {
    /// Largest relative adjustment applied by the periodic re-projection
    /// onto the symmetry class.
    pub max_projection_residual: f64,
}

fn gamma_t_action(gt: &ChartTensor, xdot: &[f64], s: &ChartTensor) -> ChartTensor {
    // Σ_a ẋ^a Γᵀ_{a A_i}{}^B S_{..B..} summed over all cotractor slots
    let n = s.n();
    let np1 = n + 1;
    let rank = s.rank();
    let mut out = ChartTensor::zeros(n, s.slots().to_vec(), s.weight());
    // directional coefficients m[cur][b] = ẋ^a Γᵀ_{a cur}{}^b
    let mut m = vec![0.0f64; np1 * np1];
    for cur in 0..np1 {
        for b in 0..np1 {
            let mut coeff = 0.0;
            for a in 0..n {
                coeff += xdot[a] * gt.at(&[a, cur, b]);
            }
            m[cur * np1 + b] = coeff;
        }
    }
    let mut strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * np1;
    }
    let total: usize = np1.pow(rank as u32);
    let data_in = s.data();
    let data_out = out.data_mut();
    for (lin, out_v) in data_out.iter_mut().enumerate().take(total) {
        let mut acc = 0.0;
        for slot in 0..rank {
            let stride = strides[slot];
            let cur = (lin / stride) % np1;
            let base = lin - cur * stride;
            for b in 0..np1 {
                let coeff = m[cur * np1 + b];
                if coeff != 0.0 {
                    acc += coeff * data_in[base + b * stride];
                }
            }
        }
        *out_v = acc;
    }
    out
}

struct TransportOp<'a> {
    structure: &'a AffineStructure,
    kind: ConnectionKind,
    box_lo: &'a [f64],
    box_hi: &'a [f64],
}

impl<'a> TransportOp<'a> {
    /// `dS/dt` for every state at `(x, ẋ)`.
    fn rhs(&self, x: &[f64], xdot: &[f64], states: &[ChartTensor]) -> Result<Vec<ChartTensor>> {
        let ctx = PointContext::new(self.structure, x, self.kind.context_order())?;
        let gt = ctx.gamma_t().value();
        let mut kappa = None;
        let mut nabla_kappa = None;
        match self.kind {
            ConnectionKind::PlainTractor => {}
            ConnectionKind::Rank1Prolongation => {
                kappa = Some(ctx.kappa().value());
            }
            ConnectionKind::Rank2Prolongation => {
                let kv = ctx.kappa().value();
                let nk = ctx.nabla_kappa().value();
                // in projectively flat charts the correction vanishes exactly
                if kv.norm() > 0.0 || nk.norm() > 0.0 {
                    kappa = Some(kv);
                    nabla_kappa = Some(nk);
                }
            }
        }
        let mut out = Vec::with_capacity(states.len());
        for s in states {
            let mut ds = gamma_t_action(&gt, xdot, s);
            match self.kind {
                ConnectionKind::PlainTractor => {}
                ConnectionKind::Rank1Prolongation => {
                    let act = rank1_curvature_action(kappa.as_ref().unwrap(), s)?;
                    // parallel: ∇_ẋ S = -ẋ^a (curvature action)_a
                    for a in 0..x.len() {
                        let slice = crate::killing::slice_leading(&act, &[a]);
                        ds = ds.sub(&slice.scale_by(xdot[a]))?;
                    }
                }
                ConnectionKind::Rank2Prolongation => {
                    if let (Some(k), Some(nk)) = (kappa.as_ref(), nabla_kappa.as_ref()) {
                        let q = rank2_q_sharp(k, nk, s)?;
                        for a in 0..x.len() {
                            let slice = crate::killing::slice_leading(&q, &[a]);
                            ds = ds.add(&slice.scale_by(xdot[a]))?;
                        }
                    }
                }
            }
            out.push(ds);
        }
        Ok(out)
    }
}

fn add_scaled(states: &[ChartTensor], deltas: &[ChartTensor], h: f64) -> Vec<ChartTensor> {
    states
        .iter()
        .zip(deltas)
        .map(|(s, d)| s.add(&d.scale_by(h)).expect("shape"))
        .collect()
}

/// Transport `states` along `curve` with `steps_per_unit` RK4 steps per
/// parameter unit, re-projecting onto the `(r,r)` class every 50 steps.
pub fn parallel_transport(
    structure: &AffineStructure,
    kind: ConnectionKind,
    curve: &Curve,
    steps_per_unit: usize,
    states: Vec<ChartTensor>,
    box_lo: &[f64],
    box_hi: &[f64],
) -> Result<(Vec<ChartTensor>, TransportDiag)> {
    if states.is_empty() {
        return Ok((states, TransportDiag::default()));
    }
    if steps_per_unit < 16 {
        return Err(Error::Config(format!(
            "transport needs at least 16 steps per parameter unit, got {steps_per_unit}"
        )));
    }
    let state_rank = states[0].rank();
    let expected = match kind {
        ConnectionKind::Rank1Prolongation => Some(2),
        ConnectionKind::Rank2Prolongation => Some(4),
        ConnectionKind::PlainTractor => None,
    };
    if let Some(e) = expected {
        if state_rank != e {
            return Err(Error::Shape(format!(
                "connection expects {e} state slots, got {state_rank}"
            )));
        }
    }
    if !state_rank.is_multiple_of(2) || state_rank == 0 {
        return Err(Error::Shape("state must have 2r cotractor slots".into()));
    }
    let young_r = state_rank / 2;
    let c_proj = young_idempotence_constant(structure.n() + 1, young_r);

    let op = TransportOp {
        structure,
        kind,
        box_lo,
        box_hi,
    };
    let units = curve.units();
    let total_steps = steps_per_unit * units;
    let h = 1.0 / steps_per_unit as f64;
    let mut cur = states;
    let mut diag = TransportDiag::default();
    let mut step_count = 0usize;
    for unit in 0..units {
        for step in 0..steps_per_unit {
            let t = step as f64 * h;
            let (x1, v1) = curve.eval_on_unit(unit, t);
            check_box(&x1, op.box_lo, op.box_hi, unit as f64 + t)?;
            let k1 = op.rhs(&x1, &v1, &cur)?;
            let (x2, v2) = curve.eval_on_unit(unit, t + 0.5 * h);
            let s2 = add_scaled(&cur, &k1, 0.5 * h);
            let k2 = op.rhs(&x2, &v2, &s2)?;
            let s3 = add_scaled(&cur, &k2, 0.5 * h);
            let k3 = op.rhs(&x2, &v2, &s3)?;
            let (x4, v4) = curve.eval_on_unit(unit, t + h);
            let s4 = add_scaled(&cur, &k3, h);
            let k4 = op.rhs(&x4, &v4, &s4)?;
            for (i, s) in cur.iter_mut().enumerate() {
                let inc = k1[i]
                    .add(&k2[i].scale_by(2.0))
                    .and_then(|a| a.add(&k3[i].scale_by(2.0)))
                    .and_then(|a| a.add(&k4[i]))
                    .expect("shape");
                *s = s.add(&inc.scale_by(h / 6.0)).expect("shape");
            }
            step_count += 1;
            if step_count.is_multiple_of(50) || step_count == total_steps {
                for s in cur.iter_mut() {
                    let p = young_project_rr(s, young_r)?.scale_by(1.0 / c_proj);
                    let resid = s.sub(&p)?.norm() / s.norm().max(1e-30);
                    diag.max_projection_residual = diag.max_projection_residual.max(resid);
                    *s = p;
                }
            }
        }
    }
    Ok((cur, diag))
}

/// Orthonormal basis of the `(r,r)` class inside the full tensor fiber,
/// as matrix columns.
pub fn young_basis(n: usize, r: usize) -> Mat {
    let np1 = n + 1;
    let total = np1.pow(2 * r as u32);
    let c = young_idempotence_constant(np1, r);
    let mut cols = Mat::zeros(total, total);
    for k in 0..total {
        let mut e = ChartTensor::zeros(n, vec![SlotKind::Cotractor; 2 * r], 0.0);
        e.data_mut()[k] = 1.0;
        let p = young_project_rr(&e, r)
            .expect("projector")
            .scale_by(1.0 / c);
        for (i, v) in p.data().iter().enumerate() {
            cols.set(i, k, *v);
        }
    }
    orthonormalize(&cols)
}

/// Fiber dimension of the prolonged
/// bundle: measured projector rank and the closed-form count for ranks 1
/// and 2 (`N(N-1)/2` and `N²(N²-1)/12` with `N = n+1`).
pub fn young_fiber_dimension(n: usize, r: usize) -> (usize, Option<usize>) {
    let measured = young_basis(n, r).cols;
    let np1 = n + 1;
    let formula = match r {
        1 => Some(np1 * (np1 - 1) / 2),
        2 => Some(np1 * np1 * (np1 * np1 - 1) / 12),
        _ => None,
    };
    (measured, formula)
}

/// Random closed loops through `base`: axis-aligned rectangles alternating
/// with Lissajous curves, all inside the box.
pub fn random_loops<R: Rng>(
    base: &[f64],
    box_lo: &[f64],
    box_hi: &[f64],
    count: usize,
    rng: &mut R,
) -> Vec<Curve> {
    let n = base.len();
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        if k % 2 == 0 {
            let i = rng.gen_range(0..n);
            let mut j = rng.gen_range(0..n);
            while j == i {
                j = rng.gen_range(0..n);
            }
            let di = pick_extent(base[i], box_lo[i], box_hi[i], rng);
            let dj = pick_extent(base[j], box_lo[j], box_hi[j], rng);
            out.push(Curve::rectangle(base.to_vec(), i, j, di, dj));
        } else {
            let mut amp = Vec::with_capacity(n);
            let mut phase = Vec::with_capacity(n);
            let mut freq = Vec::with_capacity(n);
            let mut center = Vec::with_capacity(n);
            for d in 0..n {
                let head = (box_hi[d] - base[d]).abs();
                let tail = (base[d] - box_lo[d]).abs();
                let max_amp = head.min(tail).max(0.05) * 0.8;
                let mut a = max_amp * (0.4 + 0.6 * rng.gen::<f64>());
                let p = rng.gen::<f64>() * std::f64::consts::TAU;
                let mut c = base[d] - a * p.sin();
                for _ in 0..40 {
                    if c - a >= box_lo[d] && c + a <= box_hi[d] {
                        break;
                    }
                    a *= 0.7;
                    c = base[d] - a * p.sin();
                }
                amp.push(a);
                phase.push(p);
                freq.push(1 + rng.gen_range(0..2) as u32);
                center.push(c);
            }
            out.push(Curve::Lissajous {
                center,
                amp,
                freq,
                phase,
            });
        }
    }
    out
}

fn pick_extent<R: Rng>(base: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    let up = hi - base;
    let down = base - lo;
    if up >= down {
        up * (0.3 + 0.6 * rng.gen::<f64>())
    } else {
        -down * (0.3 + 0.6 * rng.gen::<f64>())
    }
}

/// Outcome of a holonomy dimension estimate.
#[derive(Debug, Clone)]
pub struct DimensionReport {
    /// Estimated dimension of the solution space.
    pub dimension: usize,
    /// Fiber dimension of the prolonged bundle.
    pub fiber_dimension: usize,
    /// Numerical rank of the stacked `Hol - Id` maps.
    pub holonomy_rank: usize,
    /// Upper bound from the integrability obstruction, when available.
    pub obstruction_bound: Option<usize>,
    /// The two bounds disagreed (the tighter one is reported).
    pub bounds_disagree: bool,
    /// A singular value sat within 10x of the rank threshold.
    pub ambiguous: bool,
    /// Largest class re-projection residual seen during transport.
    pub max_projection_residual: f64,
    /// Measured projector rank differs from the closed-form fiber count
    /// (flagged, not corrected).
    pub fiber_formula_mismatch: bool,
    /// Basis of the common holonomy fixed space at the base point (each a
    /// class state; candidates for parallel sections).
    pub fixed_states: Vec<ChartTensor>,
}

/// Estimate the dimension of the space of rank-`rank` Killing tensors by
/// transporting the full prolonged fiber around `num_loops` random loops
/// based at `base_point`.
#[allow(clippy::too_many_arguments)]
pub fn solution_space_dimension(
    structure: &AffineStructure,
    rank: usize,
    base_point: &[f64],
    box_lo: &[f64],
    box_hi: &[f64],
    num_loops: usize,
    steps: usize,
    seed: u64,
) -> Result<DimensionReport> {
    use rand::SeedableRng;
    if num_loops < 8 {
        return Err(Error::Config(format!(
            "holonomy estimation needs at least 8 loops, got {num_loops}"
        )));
    }
    let n = structure.n();
    let kind = match rank {
        1 => ConnectionKind::Rank1Prolongation,
        2 => ConnectionKind::Rank2Prolongation,
        _ => {
            // all-rank flat path: the plain tractor connection is the
            // prolongation connection exactly on projectively flat charts
            let ctx = PointContext::new(structure, base_point, 3)?;
            let kappa_norm = ctx.kappa().value().norm();
            if kappa_norm > 1e-8 {
                return Err(Error::NotProjectivelyFlat { kappa_norm });
            }
            ConnectionKind::PlainTractor
        }
    };
    let basis = young_basis(n, rank);
    let d = basis.cols;
    let (measured, formula) = young_fiber_dimension(n, rank);
    let fiber_formula_mismatch = formula.map(|f| f != measured).unwrap_or(false);

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let loops = random_loops(base_point, box_lo, box_hi, num_loops, &mut rng);

    let states: Vec<ChartTensor> = (0..d)
        .map(|j| {
            let mut t = ChartTensor::zeros(n, vec![SlotKind::Cotractor; 2 * rank], 0.0);
            for (i, v) in t.data_mut().iter_mut().enumerate() {
                *v = basis.get(i, j);
            }
            t
        })
        .collect();

    // Transport the frame around each loop (independent; parallelized).
    let results: Vec<Result<(Mat, f64)>> = batch::map(loops, |lp| {
        let (moved, diag) =
            parallel_transport(structure, kind, &lp, steps, states.clone(), box_lo, box_hi)?;
        let mut hol = Mat::zeros(d, d);
        for (j, s) in moved.iter().enumerate() {
            for i in 0..d {
                let coord: f64 = basis.col(i).iter().zip(s.data()).map(|(b, v)| b * v).sum();
                hol.set(i, j, coord);
            }
        }
        Ok((hol, diag.max_projection_residual))
    });

    let mut stack_rows: Vec<Vec<f64>> = Vec::new();
    let mut max_projection_residual: f64 = 0.0;
    for r in results {
        let (hol, resid) = r?;
        max_projection_residual = max_projection_residual.max(resid);
        for i in 0..d {
            let mut row = Vec::with_capacity(d);
            for j in 0..d {
                let idv = if i == j { 1.0 } else { 0.0 };
                row.push(hol.get(i, j) - idv);
            }
            stack_rows.push(row);
        }
    }
    let stack = Mat::from_rows(stack_rows);
    let (sigma, v) = svd(&stack);
    let (hol_rank, ambiguous) = crate::linalg::numerical_rank_scaled(&sigma, 1e-8, 1.0);
    let dim_holonomy = d - hol_rank;
    // fixed space: trailing right singular vectors, mapped back from the
    // class-basis coordinates to full tensors
    let fixed_states: Vec<ChartTensor> = (hol_rank..d)
        .map(|j| {
            let mut t = ChartTensor::zeros(n, vec![SlotKind::Cotractor; 2 * rank], 0.0);
            for (i, out) in t.data_mut().iter_mut().enumerate() {
                let mut acc = 0.0;
                for kbasis in 0..d {
                    acc += basis.get(i, kbasis) * v.get(kbasis, j);
                }
                *out = acc;
            }
            t
        })
        .collect();

    // Obstruction cross-check at random interior points (ranks 1 and 2).
    let obstruction_bound = if rank <= 2 {
        let pts: Vec<Vec<f64>> = (0..10)
            .map(|_| {
                (0..n)
                    .map(|i| box_lo[i] + (box_hi[i] - box_lo[i]) * rng.gen::<f64>())
                    .collect()
            })
            .collect();
        let per_point: Vec<Result<Vec<Vec<f64>>>> = batch::map(pts, |pt| {
            let ctx = PointContext::new(structure, &pt, 4)?;
            let frame = Frame::new(ctx);
            let mut per_state: Vec<Vec<f64>> = Vec::with_capacity(d);
            for st in &states {
                let state = ProlongationState::new(rank, st.clone())?;
                let obs = integrability_obstruction(&frame, &state)?;
                per_state.push(obs.data().to_vec());
            }
            Ok(per_state)
        });
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for r in per_point {
            let per_state = r?;
            let rows_at_point = per_state[0].len();
            for ri in 0..rows_at_point {
                rows.push((0..d).map(|j| per_state[j][ri]).collect());
            }
        }
        let obs_stack = Mat::from_rows(rows);
        let (osigma, _) = svd(&obs_stack);
        let (orank, _) = crate::linalg::numerical_rank_scaled(&osigma, 1e-8, 1.0);
        Some(d - orank)
    } else {
        None
    };

    let (dimension, bounds_disagree) = match obstruction_bound {
        Some(ob) if ob != dim_holonomy => (dim_holonomy.min(ob), true),
        _ => (dim_holonomy, false),
    };

    Ok(DimensionReport {
        dimension,
        fiber_dimension: d,
        holonomy_rank: hol_rank,
        obstruction_bound,
        bounds_disagree,
        ambiguous,
        max_projection_residual,
        fiber_formula_mismatch,
        fixed_states,
    })
}

/// Basis of flat Killing tensors from the polynomial ansatz (total degree
/// `<= r` per component) and the solution dimension.
pub struct FlatOracle {
    pub n: usize,
    pub rank: usize,
    pub dimension: usize,
    /// Monomial exponent list shared by all components.
    pub monomials: Vec<Vec<u8>>,
    /// Symmetric component index multisets (sorted tuples).
    pub comps: Vec<Vec<usize>>,
    /// Null-space basis: coefficient vectors over `(component, monomial)`.
    pub basis: Vec<Vec<f64>>,
}

fn multisets(n: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(size);
    fill(n, size, 0, &mut cur, &mut out);
    return out;

    fn fill(n: usize, size: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for v in start..n {
            cur.push(v);
            fill(n, size, v, cur, out);
            cur.pop();
        }
    }
}

fn monomials_up_to(n: usize, degree: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut cur = vec![0u8; n];
    fill(n, degree, 0, 0, &mut cur, &mut out);
    return out;

    fn fill(
        n: usize,
        degree: usize,
        slot: usize,
        used: usize,
        cur: &mut Vec<u8>,
        out: &mut Vec<Vec<u8>>,
    ) {
        if slot == n {
            out.push(cur.clone());
            return;
        }
        for v in 0..=(degree - used) {
            cur[slot] = v as u8;
            fill(n, degree, slot + 1, used + v, cur, out);
        }
        cur[slot] = 0;
    }
}

/// Solve the flat Killing equation on polynomial components of degree
/// `<= rank` by imposing it coefficientwise.
pub fn flat_polynomial_oracle(n: usize, rank: usize) -> FlatOracle {
    let comps = multisets(n, rank);
    let monomials = monomials_up_to(n, rank);
    let comp_pos = |idx: &mut Vec<usize>| -> usize {
        idx.sort_unstable();
        comps.iter().position(|c| c == idx).expect("component")
    };
    let unknowns = comps.len() * monomials.len();

    let eq_multisets = multisets(n, rank + 1);
    let eq_monos = monomials_up_to(n, rank.saturating_sub(1));
    let mut rows = Vec::new();
    for t in &eq_multisets {
        let mut row_map = vec![vec![0.0f64; unknowns]; eq_monos.len()];
        for i in 0..t.len() {
            let deriv_dir = t[i];
            let mut rest: Vec<usize> = t
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, &v)| v)
                .collect();
            let comp = comp_pos(&mut rest);
            for (mi, m) in monomials.iter().enumerate() {
                if m[deriv_dir] == 0 {
                    continue;
                }
                let mut dm = m.clone();
                dm[deriv_dir] -= 1;
                let factor = m[deriv_dir] as f64 / (rank as f64 + 1.0);
                if let Some(out_mi) = eq_monos.iter().position(|mm| mm == &dm) {
                    row_map[out_mi][comp * monomials.len() + mi] += factor;
                }
            }
        }
        for row in row_map {
            if row.iter().any(|v| *v != 0.0) {
                rows.push(row);
            }
        }
    }
    let (dimension, basis) = if rows.is_empty() {
        let mut b = Vec::new();
        for i in 0..unknowns {
            let mut v = vec![0.0; unknowns];
            v[i] = 1.0;
            b.push(v);
        }
        (unknowns, b)
    } else {
        let mat = Mat::from_rows(rows);
        let ns = crate::linalg::null_space(&mat, 1e-10);
        (ns.cols, (0..ns.cols).map(|j| ns.col(j)).collect())
    };
    FlatOracle {
        n,
        rank,
        dimension,
        monomials,
        comps,
        basis,
    }
}

impl FlatOracle {
    /// Materialize the `j`-th basis element as a weighted candidate on a
    /// flat chart.
    pub fn candidate(&self, j: usize) -> KillingCandidate {
        use crate::geometry::Field;
        use crate::jet::Jet;
        let coeffs = self.basis[j].clone();
        let n = self.n;
        let rank = self.rank;
        let m_len = self.monomials.len();
        let total = n.pow(rank as u32);
        let mut fields = Vec::with_capacity(total);
        for lin in 0..total {
            let mut idx = Vec::with_capacity(rank);
            let mut rem = lin;
            for d in 0..rank {
                let block = n.pow((rank - 1 - d) as u32);
                idx.push(rem / block);
                rem %= block;
            }
            idx.sort_unstable();
            let comp = self
                .comps
                .iter()
                .position(|c| *c == idx)
                .expect("component");
            let local: Vec<f64> = (0..m_len).map(|mi| coeffs[comp * m_len + mi]).collect();
            let monomials = self.monomials.clone();
            fields.push(Field::from_fn(move |vars| {
                let mut acc = Jet::constant(vars.len(), vars[0].order(), 0.0);
                for (mi, m) in monomials.iter().enumerate() {
                    if local[mi] == 0.0 {
                        continue;
                    }
                    let mut term = Jet::constant(vars.len(), vars[0].order(), local[mi]);
                    for (d, &e) in m.iter().enumerate() {
                        for _ in 0..e {
                            term = term.mul(&vars[d])?;
                        }
                    }
                    acc = acc.add(&term)?;
                }
                Ok(acc)
            }));
        }
        KillingCandidate::from_weighted(n, rank, fields)
    }
}
