//! Pointwise multi-index component arrays with slot metadata.
//!
//! A [`Tensor`] owns a dense component array together with one [`SlotKind`]
//! per index slot and a projective weight.  Chart (tangent/cotangent) slots
//! have extent `n`, tractor-type slots extent `n+1`.  Components are generic:
//! `f64` for values at a point ([`ChartTensor`]), [`Jet`] for fields expanded
//! about a point ([`JetTensor`]).
//!
//! Contraction pairs an upper with a lower slot of the same family;
//! symmetrization, antisymmetrization and the `(r,r)` Young projector act on
//! listed slot positions through cached permutation tables.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock, RwLock};

use crate::error::{Error, Result};
use crate::jet::Jet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlotKind {
    Tangent,
    Cotangent,
    Tractor,
    Cotractor,
}

impl SlotKind {
    pub fn extent(self, n: usize) -> usize {
        match self {
            SlotKind::Tangent | SlotKind::Cotangent => n,
            SlotKind::Tractor | SlotKind::Cotractor => n + 1,
        }
    }

    pub fn is_tractor_family(self) -> bool {
        matches!(self, SlotKind::Tractor | SlotKind::Cotractor)
    }

    pub fn is_upper(self) -> bool {
        matches!(self, SlotKind::Tangent | SlotKind::Tractor)
    }

    pub fn dual(self) -> SlotKind {
        match self {
            SlotKind::Tangent => SlotKind::Cotangent,
            SlotKind::Cotangent => SlotKind::Tangent,
            SlotKind::Tractor => SlotKind::Cotractor,
            SlotKind::Cotractor => SlotKind::Tractor,
        }
    }
}

/// Component arithmetic shared by `f64` and [`Jet`].
///
/// Jet binary operations truncate both operands to the smaller order, so
/// mixed-order intermediates lose only the orders that were already
/// unavailable.
pub trait Component: Clone + Send + Sync {
    fn zero_like(&self) -> Self;
    fn add_c(&self, other: &Self) -> Self;
    fn sub_c(&self, other: &Self) -> Self;
    fn mul_c(&self, other: &Self) -> Self;
    fn scale_c(&self, s: f64) -> Self;
    fn abs_value(&self) -> f64;
}

impl Component for f64 {
    fn zero_like(&self) -> Self {
        0.0
    }
    fn add_c(&self, other: &Self) -> Self {
        self + other
    }
    fn sub_c(&self, other: &Self) -> Self {
        self - other
    }
    fn mul_c(&self, other: &Self) -> Self {
        self * other
    }
    fn scale_c(&self, s: f64) -> Self {
        self * s
    }
    fn abs_value(&self) -> f64 {
        self.abs()
    }
}

impl Component for Jet {
    fn zero_like(&self) -> Self {
        Jet::constant(self.dim(), self.order(), 0.0)
    }
    fn add_c(&self, other: &Self) -> Self {
        let order = self.order().min(other.order());
        self.truncated(order)
            .add(&other.truncated(order))
            .expect("dim mismatch in jet tensor arithmetic")
    }
    fn sub_c(&self, other: &Self) -> Self {
        let order = self.order().min(other.order());
        self.truncated(order)
            .sub(&other.truncated(order))
            .expect("dim mismatch in jet tensor arithmetic")
    }
    fn mul_c(&self, other: &Self) -> Self {
        let order = self.order().min(other.order());
        self.truncated(order)
            .mul(&other.truncated(order))
            .expect("dim mismatch in jet tensor arithmetic")
    }
    fn scale_c(&self, s: f64) -> Self {
        self.scale(s)
    }
    fn abs_value(&self) -> f64 {
        self.value().abs()
    }
}

/// Dense multi-index array at a point, with per-slot kinds and a projective
/// weight.  `scale` tags the representative connection whose splitting any
/// tractor-type components are expressed in.
#[derive(Debug, Clone)]
pub struct Tensor<T: Component> {
    n: usize,
    slots: Vec<SlotKind>,
    weight: f64,
    scale: Option<u64>,
    data: Vec<T>,
}

pub type ChartTensor = Tensor<f64>;
pub type JetTensor = Tensor<Jet>;

fn total_len(n: usize, slots: &[SlotKind]) -> usize {
    slots.iter().map(|s| s.extent(n)).product::<usize>().max(1)
}

impl<T: Component> Tensor<T> {
    pub fn zeros_with(n: usize, slots: Vec<SlotKind>, weight: f64, proto: &T) -> Self {
        let len = total_len(n, &slots);
        Tensor {
            n,
            slots,
            weight,
            scale: None,
            data: vec![proto.zero_like(); len],
        }
    }

    pub fn from_data(n: usize, slots: Vec<SlotKind>, weight: f64, data: Vec<T>) -> Self {
        assert_eq!(data.len(), total_len(n, &slots), "component count mismatch");
        Tensor {
            n,
            slots,
            weight,
            scale: None,
            data,
        }
    }

    pub fn with_scale(mut self, scale: Option<u64>) -> Self {
        self.scale = scale;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn slots(&self) -> &[SlotKind] {
        &self.slots
    }

    pub fn rank(&self) -> usize {
        self.slots.len()
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn set_weight(&mut self, w: f64) {
        self.weight = w;
    }

    pub fn scale_tag(&self) -> Option<u64> {
        self.scale
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn extents(&self) -> Vec<usize> {
        self.slots.iter().map(|s| s.extent(self.n)).collect()
    }

    fn strides(&self) -> Vec<usize> {
        let extents = self.extents();
        let mut strides = vec![1usize; extents.len()];
        for i in (0..extents.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * extents[i + 1];
        }
        strides
    }

    pub fn lin(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.slots.len());
        let strides = self.strides();
        idx.iter().zip(&strides).map(|(i, s)| i * s).sum()
    }

    pub fn get(&self, idx: &[usize]) -> &T {
        &self.data[self.lin(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: T) {
        let l = self.lin(idx);
        self.data[l] = value;
    }

    fn merged_scale(&self, other: &Self) -> Result<Option<u64>> {
        match (self.scale, other.scale) {
            (Some(a), Some(b)) if a != b => Err(Error::Scale(format!(
                "tensors carry different scale tags ({a} vs {b})"
            ))),
            (a, b) => Ok(a.or(b)),
        }
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.n != other.n || self.slots != other.slots {
            return Err(Error::Shape(format!(
                "tensor shapes differ: {:?} vs {:?}",
                self.slots, other.slots
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let scale = self.merged_scale(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.add_c(b))
            .collect();
        Ok(Tensor {
            n: self.n,
            slots: self.slots.clone(),
            weight: self.weight,
            scale,
            data,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let scale = self.merged_scale(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.sub_c(b))
            .collect();
        Ok(Tensor {
            n: self.n,
            slots: self.slots.clone(),
            weight: self.weight,
            scale,
            data,
        })
    }

    pub fn scale_by(&self, s: f64) -> Self {
        let data = self.data.iter().map(|a| a.scale_c(s)).collect();
        Tensor {
            n: self.n,
            slots: self.slots.clone(),
            weight: self.weight,
            scale: self.scale,
            data,
        }
    }

    /// Outer product; slots concatenate and weights add.
    pub fn tensor_product(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::Shape(format!(
                "chart dimensions differ: {} vs {}",
                self.n, other.n
            )));
        }
        let scale = self.merged_scale(other)?;
        let mut slots = self.slots.clone();
        slots.extend_from_slice(&other.slots);
        let mut data = Vec::with_capacity(self.data.len() * other.data.len());
        for a in &self.data {
            for b in &other.data {
                data.push(a.mul_c(b));
            }
        }
        Ok(Tensor {
            n: self.n,
            slots,
            weight: self.weight + other.weight,
            scale,
            data,
        })
    }

    /// Einstein contraction of two slots of this tensor.
    pub fn contract(&self, slot_a: usize, slot_b: usize) -> Result<Self> {
        if slot_a == slot_b || slot_a >= self.slots.len() || slot_b >= self.slots.len() {
            return Err(Error::Shape(format!(
                "invalid contraction slots ({slot_a}, {slot_b}) for rank {}",
                self.slots.len()
            )));
        }
        let (ka, kb) = (self.slots[slot_a], self.slots[slot_b]);
        let dual_ok = ka.dual() == kb;
        if !dual_ok {
            return Err(Error::Shape(format!(
                "contraction needs dual kinds, got {ka:?} and {kb:?}"
            )));
        }
        let extent = ka.extent(self.n);
        let (lo, hi) = if slot_a < slot_b {
            (slot_a, slot_b)
        } else {
            (slot_b, slot_a)
        };
        let out_slots: Vec<SlotKind> = self
            .slots
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != lo && *i != hi)
            .map(|(_, k)| *k)
            .collect();
        let strides = self.strides();
        let out_extents: Vec<usize> = out_slots.iter().map(|s| s.extent(self.n)).collect();
        let out_len = out_extents.iter().product::<usize>().max(1);
        let proto = self.data[0].zero_like();
        let mut data = vec![proto; out_len];

        // Walk output indices, rebuild source offsets.
        let out_strides_src: Vec<usize> = (0..self.slots.len())
            .filter(|i| *i != lo && *i != hi)
            .map(|i| strides[i])
            .collect();
        for (out_lin, slot) in data.iter_mut().enumerate() {
            let mut rem = out_lin;
            let mut base = 0usize;
            for (d, &ext) in out_extents.iter().enumerate() {
                let block: usize = out_extents[d + 1..].iter().product::<usize>().max(1);
                let idx = rem / block;
                rem %= block;
                base += idx * out_strides_src[d];
                let _ = ext;
            }
            let mut acc = self.data[0].zero_like();
            for m in 0..extent {
                let src = base + m * strides[lo] + m * strides[hi];
                acc = acc.add_c(&self.data[src]);
            }
            *slot = acc;
        }
        Ok(Tensor {
            n: self.n,
            slots: out_slots,
            weight: self.weight,
            scale: self.scale,
            data,
        })
    }

    /// Reorders slots: output slot `j` is input slot `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        debug_assert_eq!(perm.len(), self.slots.len());
        let extents = self.extents();
        let table = permutation_table(&extents, perm);
        let slots: Vec<SlotKind> = perm.iter().map(|&p| self.slots[p]).collect();
        let data: Vec<T> = table
            .iter()
            .map(|&src| self.data[src as usize].clone())
            .collect();
        Tensor {
            n: self.n,
            slots,
            weight: self.weight,
            scale: self.scale,
            data,
        }
    }

    fn sym_impl(&self, positions: &[usize], signed: bool) -> Result<Self> {
        if positions.is_empty() {
            return Ok(self.clone());
        }
        let kind = self.slots[positions[0]];
        for &p in positions {
            if p >= self.slots.len() {
                return Err(Error::Shape(format!("slot {p} out of range")));
            }
            if self.slots[p].extent(self.n) != kind.extent(self.n) || self.slots[p] != kind {
                return Err(Error::Shape(
                    "symmetrization slots must share kind and extent".into(),
                ));
            }
        }
        let m = positions.len();
        let perms = permutations(m);
        let mut acc: Option<Tensor<T>> = None;
        for perm in &perms {
            // Build a full-slot permutation moving listed slots by `perm`.
            let mut full: Vec<usize> = (0..self.slots.len()).collect();
            for (i, &pi) in perm.iter().enumerate() {
                full[positions[i]] = positions[pi];
            }
            let mut term = self.permuted(&full);
            if signed && parity(perm) {
                term = term.scale_by(-1.0);
            }
            acc = Some(match acc {
                None => term,
                Some(a) => a.add(&term)?,
            });
        }
        let factor = 1.0 / (factorial(m) as f64);
        Ok(acc.unwrap().scale_by(factor))
    }

    /// Average over all permutations of the listed slots.
    pub fn symmetrize(&self, positions: &[usize]) -> Result<Self> {
        self.sym_impl(positions, false)
    }

    /// Signed average over all permutations of the listed slots.
    pub fn antisymmetrize(&self, positions: &[usize]) -> Result<Self> {
        self.sym_impl(positions, true)
    }
}

impl ChartTensor {
    pub fn zeros(n: usize, slots: Vec<SlotKind>, weight: f64) -> ChartTensor {
        Tensor::zeros_with(n, slots, weight, &0.0)
    }

    /// Component value (copy) at a multi-index.
    pub fn at(&self, idx: &[usize]) -> f64 {
        *self.get(idx)
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

impl JetTensor {
    pub fn jet_zeros(
        n: usize,
        slots: Vec<SlotKind>,
        weight: f64,
        dim: usize,
        order: usize,
    ) -> JetTensor {
        Tensor::zeros_with(n, slots, weight, &Jet::constant(dim, order, 0.0))
    }

    /// Values at the base point.
    pub fn value(&self) -> ChartTensor {
        let data = self.data.iter().map(|j| j.value()).collect();
        Tensor {
            n: self.n,
            slots: self.slots.clone(),
            weight: self.weight,
            scale: self.scale,
            data,
        }
    }

    pub fn jet_order(&self) -> usize {
        self.data[0].order()
    }

    pub fn truncated(&self, order: usize) -> JetTensor {
        let data = self.data.iter().map(|j| j.truncated(order)).collect();
        Tensor {
            n: self.n,
            slots: self.slots.clone(),
            weight: self.weight,
            scale: self.scale,
            data,
        }
    }
}

fn factorial(m: usize) -> usize {
    (1..=m).product::<usize>().max(1)
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(factorial(m));
    let mut cur = Vec::with_capacity(m);
    let mut used = vec![false; m];
    build(m, &mut cur, &mut used, &mut out);
    return out;

    fn build(m: usize, cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        for i in 0..m {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                build(m, cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
}

fn parity(perm: &[usize]) -> bool {
    let mut seen = vec![false; perm.len()];
    let mut odd = false;
    for start in 0..perm.len() {
        if seen[start] {
            continue;
        }
        let mut len = 0;
        let mut i = start;
        while !seen[i] {
            seen[i] = true;
            i = perm[i];
            len += 1;
        }
        if len % 2 == 0 {
            odd = !odd;
        }
    }
    odd
}

type PermKey = (Vec<usize>, Vec<usize>);

fn perm_cache() -> &'static RwLock<HashMap<PermKey, Arc<Vec<u32>>>> {
    static CACHE: OnceLock<RwLock<HashMap<PermKey, Arc<Vec<u32>>>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// `table[out_lin] = in_lin` for the slot permutation `perm` over `extents`.
fn permutation_table(extents: &[usize], perm: &[usize]) -> Arc<Vec<u32>> {
    let key = (extents.to_vec(), perm.to_vec());
    {
        let cache = perm_cache().read().unwrap();
        if let Some(t) = cache.get(&key) {
            return t.clone();
        }
    }
    let out_extents: Vec<usize> = perm.iter().map(|&p| extents[p]).collect();
    let mut in_strides = vec![1usize; extents.len()];
    for i in (0..extents.len().saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * extents[i + 1];
    }
    let total: usize = extents.iter().product::<usize>().max(1);
    let mut table = vec![0u32; total];
    let mut idx = vec![0usize; perm.len()];
    for (out_lin, entry) in table.iter_mut().enumerate() {
        // unravel out_lin over out_extents
        let mut rem = out_lin;
        for d in 0..out_extents.len() {
            let block: usize = out_extents[d + 1..].iter().product::<usize>().max(1);
            idx[d] = rem / block;
            rem %= block;
        }
        let mut in_lin = 0usize;
        for (d, &p) in perm.iter().enumerate() {
            in_lin += idx[d] * in_strides[p];
        }
        *entry = in_lin as u32;
    }
    let arc = Arc::new(table);
    perm_cache().write().unwrap().insert(key, arc.clone());
    arc
}

/// The `(r,r)` Young projector: antisymmetrize the slot pairs `(i, r+i)`,
/// then symmetrize the first and the last `r` slots.  Idempotent only up to
/// a scalar; see [`young_idempotence_constant`].
pub fn young_project_rr<T: Component>(t: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    if t.rank() != 2 * r {
        return Err(Error::Shape(format!(
            "Young projector needs {} slots, tensor has {}",
            2 * r,
            t.rank()
        )));
    }
    let kind = t.slots()[0];
    if !kind.is_tractor_family() || t.slots().iter().any(|&k| k != kind) {
        return Err(Error::Shape(
            "Young projector expects uniform tractor-family slots".into(),
        ));
    }
    let mut cur = t.clone();
    for i in (0..r).rev() {
        cur = cur.antisymmetrize(&[i, r + i])?;
    }
    cur = cur.symmetrize(&(r..2 * r).collect::<Vec<_>>())?;
    cur = cur.symmetrize(&(0..r).collect::<Vec<_>>())?;
    Ok(cur)
}

/// Measured constant `c` with `P(P(T)) = c P(T)`; cached per `(extent, r)`.
pub fn young_idempotence_constant(extent: usize, r: usize) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(&c) = cache.lock().unwrap().get(&(extent, r)) {
        return c;
    }
    let n = extent - 1;
    let slots = vec![SlotKind::Cotractor; 2 * r];
    let len = extent.pow(2 * r as u32);
    // deterministic pseudo-random filler
    let mut state = 0x243f6a8885a308d3u64 ^ ((extent as u64) << 32) ^ r as u64;
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        data.push((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5);
    }
    let t = ChartTensor::from_data(n, slots, 0.0, data);
    let p1 = young_project_rr(&t, r).expect("projector on random tensor");
    let p2 = young_project_rr(&p1, r).expect("projector twice");
    let num: f64 = p2.data().iter().zip(p1.data()).map(|(a, b)| a * b).sum();
    let den: f64 = p1.data().iter().map(|a| a * a).sum();
    let c = num / den;
    cache.lock().unwrap().insert((extent, r), c);
    c
}
