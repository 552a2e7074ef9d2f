//! Linear permutation-equivariant and -invariant operators.
//!
//! An operator `R^{n^k} -> R^{n^l}` is a coefficient vector over the
//! partitions of `[l + k]` (output positions first, then input positions).
//! The operator is `T[out] = Σ_in c[pattern(out ⧺ in)] · G[in]`, using the
//! exact-pattern basis: a basis element is 1 on a combined tuple iff the
//! tuple's equality pattern is exactly that partition. The same coefficient
//! vector applies at every `n`; for `n` smaller than a partition's block
//! count that basis element is empty and contributes nothing.
//!
//! Three evaluation routes exist and are cross-checked in tests:
//! [`EquivariantMap::apply`] (contraction plan, used everywhere else),
//! [`EquivariantMap::apply_fused`] (one pass over all combined tuples), and
//! contraction against [`materialize_basis`].

mod plan;

use std::borrow::Cow;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partitions::{bell, Ranker, DEFAULT_ARITY_CAP};
use crate::tensor::{increment, strides, DenseTensor};

use plan::{pattern_rank, plan, Plan, LANES};

/// Model files record this name for the basis convention above.
pub const BASIS_NAME: &str = "exact-pattern-v1";

/// Default cap on `n^(k+l)` for a single operator application.
pub const DEFAULT_ELEMENT_BUDGET: u128 = 1 << 26;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Limits {
    pub arity_cap: usize,
    pub element_budget: u128,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            arity_cap: DEFAULT_ARITY_CAP,
            element_budget: DEFAULT_ELEMENT_BUDGET,
        }
    }
}

impl Limits {
    fn check(&self, in_order: usize, out_order: usize, n: usize) -> Result<()> {
        let arity = in_order + out_order;
        if arity > self.arity_cap {
            return Err(Error::ArityTooLarge {
                arity,
                cap: self.arity_cap,
            });
        }
        let elements = (n as u128).checked_pow(arity as u32).unwrap_or(u128::MAX);
        if elements > self.element_budget {
            return Err(Error::BudgetExceeded {
                elements,
                budget: self.element_budget,
            });
        }
        Ok(())
    }
}

fn basis_len(arity: usize) -> Result<usize> {
    if arity > DEFAULT_ARITY_CAP {
        return Err(Error::ArityTooLarge {
            arity,
            cap: DEFAULT_ARITY_CAP,
        });
    }
    Ok(bell(arity)? as usize)
}

/// Linear equivariant operator `R^{n^k} -> R^{n^l}`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(try_from = "RawMap", into = "RawMap")]
pub struct EquivariantMap {
    in_order: usize,
    out_order: usize,
    coeffs: Vec<f64>,
    tied: Vec<f64>,
    plan: Arc<Plan>,
    /// Tied coefficients of the transposed map, under `adjoint_plan`.
    tied_adjoint: Vec<f64>,
    adjoint_plan: Arc<Plan>,
}

#[derive(Serialize, Deserialize)]
struct RawMap {
    in_order: usize,
    out_order: usize,
    coeffs: Vec<f64>,
}

impl TryFrom<RawMap> for EquivariantMap {
    type Error = Error;

    fn try_from(raw: RawMap) -> Result<Self> {
        EquivariantMap::new(raw.in_order, raw.out_order, raw.coeffs)
    }
}

impl From<EquivariantMap> for RawMap {
    fn from(m: EquivariantMap) -> Self {
        RawMap {
            in_order: m.in_order,
            out_order: m.out_order,
            coeffs: m.coeffs,
        }
    }
}

impl std::fmt::Debug for EquivariantMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EquivariantMap")
            .field("in_order", &self.in_order)
            .field("out_order", &self.out_order)
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl PartialEq for EquivariantMap {
    fn eq(&self, other: &Self) -> bool {
        self.in_order == other.in_order
            && self.out_order == other.out_order
            && self.coeffs == other.coeffs
    }
}

impl EquivariantMap {
    pub fn new(in_order: usize, out_order: usize, coeffs: Vec<f64>) -> Result<Self> {
        let expected = basis_len(in_order + out_order)?;
        if coeffs.len() != expected {
            return Err(Error::CoeffCount {
                expected,
                actual: coeffs.len(),
            });
        }
        let plan = plan(in_order, out_order);
        let tied = plan.to_tied(&coeffs);
        let adjoint_plan = self::plan(out_order, in_order);
        let tied_adjoint = adjoint_plan.to_tied(&transpose_coeffs(&plan, &coeffs));
        Ok(Self {
            in_order,
            out_order,
            coeffs,
            tied,
            plan,
            tied_adjoint,
            adjoint_plan,
        })
    }

    pub fn zeros(in_order: usize, out_order: usize) -> Result<Self> {
        let len = basis_len(in_order + out_order)?;
        Self::new(in_order, out_order, vec![0.0; len])
    }

    /// Number of coefficients, `b(k + l)`.
    pub fn basis_len(in_order: usize, out_order: usize) -> Result<usize> {
        basis_len(in_order + out_order)
    }

    pub fn in_order(&self) -> usize {
        self.in_order
    }

    pub fn out_order(&self) -> usize {
        self.out_order
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn apply(&self, g: &DenseTensor) -> Result<DenseTensor> {
        self.apply_with(g, &Limits::default())
    }

    pub fn apply_with(&self, g: &DenseTensor, limits: &Limits) -> Result<DenseTensor> {
        self.check_input(g, limits)?;
        let out = self.plan.apply(&self.tied, g.data(), g.n());
        DenseTensor::new(self.out_order, g.n(), out)
    }

    /// Reference route: a single pass over all `n^(k+l)` combined tuples,
    /// classifying each tuple's equality pattern incrementally. Output
    /// entries are independent and computed in parallel.
    pub fn apply_fused(&self, g: &DenseTensor) -> Result<DenseTensor> {
        self.apply_fused_with(g, &Limits::default())
    }

    pub fn apply_fused_with(&self, g: &DenseTensor, limits: &Limits) -> Result<DenseTensor> {
        self.check_input(g, limits)?;
        let walk = FusedWalk::new(self.in_order, self.out_order, g.n(), &self.coeffs, g.data());
        let n = g.n();
        let out_len = n.pow(self.out_order as u32);
        let out = crate::par::map_range(out_len, |flat| walk.entry(flat));
        DenseTensor::new(self.out_order, n, out)
    }

    /// The map `l -> k` whose matrix is the transpose of this one.
    pub fn transpose(&self) -> EquivariantMap {
        EquivariantMap::new(
            self.out_order,
            self.in_order,
            transpose_coeffs(&self.plan, &self.coeffs),
        )
        .expect("transposed shape is valid")
    }

    /// `V` with `⟨F(G), U⟩ = ⟨G, V⟩` for every `G`.
    pub fn adjoint(&self, u: &DenseTensor) -> Result<DenseTensor> {
        if u.order() != self.out_order {
            return Err(Error::OrderMismatch {
                expected: self.out_order,
                actual: u.order(),
            });
        }
        Limits::default().check(self.out_order, self.in_order, u.n())?;
        let out = self.adjoint_plan.apply(&self.tied_adjoint, u.data(), u.n());
        DenseTensor::new(self.in_order, u.n(), out)
    }

    fn check_input(&self, g: &DenseTensor, limits: &Limits) -> Result<()> {
        if g.order() != self.in_order {
            return Err(Error::OrderMismatch {
                expected: self.in_order,
                actual: g.order(),
            });
        }
        limits.check(self.in_order, self.out_order, g.n())
    }

    /// `∂⟨F(X), U⟩ / ∂c` for every coefficient: `⟨E_π[X], U⟩`, independent
    /// of the current coefficients.
    pub fn coeff_gradient(
        in_order: usize,
        out_order: usize,
        x: &DenseTensor,
        u: &DenseTensor,
    ) -> Result<Vec<f64>> {
        if x.order() != in_order {
            return Err(Error::OrderMismatch {
                expected: in_order,
                actual: x.order(),
            });
        }
        if u.order() != out_order {
            return Err(Error::OrderMismatch {
                expected: out_order,
                actual: u.order(),
            });
        }
        if x.n() != u.n() {
            return Err(Error::ShapeMismatch(format!("n {} vs {}", x.n(), u.n())));
        }
        Limits::default().check(in_order, out_order, x.n())?;
        basis_len(in_order + out_order)?;
        let plan = plan(in_order, out_order);
        let tied = plan.tied_gradient(x.data(), u.data(), x.n());
        Ok(plan.tied_grad_to_exact(&tied))
    }
}

/// Linear invariant operator `R^{n^k} -> R`, `b(k)` coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInvariant", into = "RawInvariant")]
pub struct InvariantMap {
    map: EquivariantMap,
}

#[derive(Serialize, Deserialize)]
struct RawInvariant {
    in_order: usize,
    coeffs: Vec<f64>,
}

impl TryFrom<RawInvariant> for InvariantMap {
    type Error = Error;

    fn try_from(raw: RawInvariant) -> Result<Self> {
        InvariantMap::new(raw.in_order, raw.coeffs)
    }
}

impl From<InvariantMap> for RawInvariant {
    fn from(m: InvariantMap) -> Self {
        RawInvariant {
            in_order: m.in_order(),
            coeffs: m.map.coeffs,
        }
    }
}

impl InvariantMap {
    pub fn new(in_order: usize, coeffs: Vec<f64>) -> Result<Self> {
        Ok(Self {
            map: EquivariantMap::new(in_order, 0, coeffs)?,
        })
    }

    pub fn in_order(&self) -> usize {
        self.map.in_order
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.map.coeffs
    }

    pub fn apply(&self, g: &DenseTensor) -> Result<f64> {
        Ok(self.map.apply(g)?.data()[0])
    }

    pub fn as_equivariant(&self) -> &EquivariantMap {
        &self.map
    }

    pub fn into_equivariant(self) -> EquivariantMap {
        self.map
    }

    /// The covector as an order-k tensor: `H[G] = ⟨tensor, G⟩`.
    pub fn materialize(&self, n: usize) -> DenseTensor {
        pattern_tensor(self.in_order(), n, &self.map.coeffs)
    }
}

impl TryFrom<EquivariantMap> for InvariantMap {
    type Error = Error;

    fn try_from(map: EquivariantMap) -> Result<Self> {
        if map.out_order != 0 {
            return Err(Error::OrderMismatch {
                expected: 0,
                actual: map.out_order,
            });
        }
        Ok(Self { map })
    }
}

/// Permutation-invariant bias tensor of order k, `b(k)` coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBias", into = "RawBias")]
pub struct EquivariantBias {
    map: EquivariantMap,
}

#[derive(Serialize, Deserialize)]
struct RawBias {
    order: usize,
    coeffs: Vec<f64>,
}

impl TryFrom<RawBias> for EquivariantBias {
    type Error = Error;

    fn try_from(raw: RawBias) -> Result<Self> {
        EquivariantBias::new(raw.order, raw.coeffs)
    }
}

impl From<EquivariantBias> for RawBias {
    fn from(b: EquivariantBias) -> Self {
        RawBias {
            order: b.order(),
            coeffs: b.map.coeffs,
        }
    }
}

impl EquivariantBias {
    pub fn new(order: usize, coeffs: Vec<f64>) -> Result<Self> {
        Ok(Self {
            map: EquivariantMap::new(0, order, coeffs)?,
        })
    }

    pub fn order(&self) -> usize {
        self.map.out_order
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.map.coeffs
    }

    /// `T[tuple] = coeffs[pattern(tuple)]`.
    pub fn materialize(&self, n: usize) -> Result<DenseTensor> {
        self.map.apply(&DenseTensor::scalar(1.0, n))
    }

    /// `⟨E_π, W⟩` for every pattern: the bias gradient for upstream `W`.
    pub fn coeff_gradient(w: &DenseTensor) -> Result<Vec<f64>> {
        EquivariantMap::coeff_gradient(0, w.order(), &DenseTensor::scalar(1.0, w.n()), w)
    }
}

/// Input of a batched call: one tensor shared by every channel, or one
/// tensor per channel.
#[derive(Clone, Copy, Debug)]
pub enum Batch<'a> {
    Shared(&'a DenseTensor),
    Each(&'a [&'a DenseTensor]),
}

impl Batch<'_> {
    fn channels(&self) -> Option<usize> {
        match self {
            Batch::Shared(_) => None,
            Batch::Each(ts) => Some(ts.len()),
        }
    }

    /// Checks every tensor's order and returns the common `n`.
    fn check(&self, order: usize) -> Result<usize> {
        let ts: &[&DenseTensor] = match self {
            Batch::Shared(t) => std::slice::from_ref(t),
            Batch::Each(ts) => ts,
        };
        let first = ts
            .first()
            .ok_or_else(|| Error::ShapeMismatch("empty batch".into()))?;
        for t in ts {
            if t.order() != order {
                return Err(Error::OrderMismatch {
                    expected: order,
                    actual: t.order(),
                });
            }
            if t.n() != first.n() {
                return Err(Error::ShapeMismatch(format!(
                    "n {} vs {}",
                    t.n(),
                    first.n()
                )));
            }
        }
        Ok(first.n())
    }

    /// Lanes `start..start + LANES` of the kernels' interleaved layout, with
    /// zero padding past the last channel; a shared tensor is passed as is.
    fn lanes(&self, start: usize) -> (Cow<'_, [f64]>, bool) {
        match self {
            Batch::Shared(t) => (Cow::Borrowed(t.data()), true),
            Batch::Each(ts) => {
                let chunk = &ts[start..ts.len().min(start + LANES)];
                let mut data = vec![0.0; ts[0].data().len() * LANES];
                for (c, t) in chunk.iter().enumerate() {
                    for (e, &v) in t.data().iter().enumerate() {
                        data[e * LANES + c] = v;
                    }
                }
                (Cow::Owned(data), false)
            }
        }
    }
}

/// Splits interleaved kernel output back into tensors, keeping `count` lanes.
fn split_lanes(
    order: usize,
    n: usize,
    count: usize,
    data: &[f64],
    out: &mut Vec<DenseTensor>,
) -> Result<()> {
    for c in 0..count {
        out.push(DenseTensor::new(
            order,
            n,
            data.iter().skip(c).step_by(LANES).copied().collect(),
        )?);
    }
    Ok(())
}

fn same_shape(maps: &[&EquivariantMap]) -> Result<Option<(usize, usize)>> {
    let Some(first) = maps.first() else {
        return Ok(None);
    };
    let shape = (first.in_order, first.out_order);
    if let Some(m) = maps.iter().find(|m| (m.in_order, m.out_order) != shape) {
        return Err(Error::ShapeMismatch(format!(
            "batched maps {}->{} and {}->{}",
            shape.0, shape.1, m.in_order, m.out_order
        )));
    }
    Ok(Some(shape))
}

/// Tied vectors of one lane chunk, padded with zeros.
fn lane_tieds<'a>(tieds: &[&'a [f64]], start: usize, zeros: &'a [f64]) -> [&'a [f64]; LANES] {
    std::array::from_fn(|c| tieds.get(start + c).copied().unwrap_or(zeros))
}

fn apply_chunked(
    plan: &Plan,
    tieds: &[&[f64]],
    x: Batch,
    out_order: usize,
    n: usize,
) -> Result<Vec<DenseTensor>> {
    let zeros = vec![0.0; tieds[0].len()];
    let mut out = Vec::with_capacity(tieds.len());
    for start in (0..tieds.len()).step_by(LANES) {
        let (data, shared) = x.lanes(start);
        let res = plan.apply_batch(&lane_tieds(tieds, start, &zeros), &data, shared, n);
        split_lanes(out_order, n, LANES.min(tieds.len() - start), &res, &mut out)?;
    }
    Ok(out)
}

impl EquivariantMap {
    /// `maps[c].apply(x_c)` for every channel in one sweep, bit-identical
    /// to the separate calls. With [`Batch::Each`] there is one input per map.
    pub fn apply_batch(maps: &[&EquivariantMap], x: Batch) -> Result<Vec<DenseTensor>> {
        let Some((k, l)) = same_shape(maps)? else {
            return Ok(Vec::new());
        };
        if x.channels().is_some_and(|s| s != maps.len()) {
            return Err(Error::ShapeMismatch("one input per map".into()));
        }
        let n = x.check(k)?;
        Limits::default().check(k, l, n)?;
        let tieds: Vec<&[f64]> = maps.iter().map(|m| m.tied.as_slice()).collect();
        apply_chunked(&maps[0].plan, &tieds, x, l, n)
    }

    /// `maps[c].adjoint(u)` for every map and one shared `u`.
    pub fn adjoint_batch(maps: &[&EquivariantMap], u: &DenseTensor) -> Result<Vec<DenseTensor>> {
        let Some((k, l)) = same_shape(maps)? else {
            return Ok(Vec::new());
        };
        let n = Batch::Shared(u).check(l)?;
        Limits::default().check(l, k, n)?;
        let tieds: Vec<&[f64]> = maps.iter().map(|m| m.tied_adjoint.as_slice()).collect();
        apply_chunked(&maps[0].adjoint_plan, &tieds, Batch::Shared(u), k, n)
    }

    /// [`EquivariantMap::coeff_gradient`] for every channel of `x` and `u`.
    pub fn coeff_gradient_batch(
        in_order: usize,
        out_order: usize,
        x: Batch,
        u: Batch,
    ) -> Result<Vec<Vec<f64>>> {
        let s = match (x.channels(), u.channels()) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::ShapeMismatch(format!("{a} vs {b} channels")));
            }
            (Some(0), _) | (_, Some(0)) => return Ok(Vec::new()),
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => 1,
        };
        let n = x.check(in_order)?;
        let nu = u.check(out_order)?;
        if n != nu {
            return Err(Error::ShapeMismatch(format!("n {n} vs {nu}")));
        }
        Limits::default().check(in_order, out_order, n)?;
        basis_len(in_order + out_order)?;
        let plan = plan(in_order, out_order);
        let mut grads = Vec::with_capacity(s);
        for start in (0..s).step_by(LANES) {
            let (xd, xs) = x.lanes(start);
            let (ud, us) = u.lanes(start);
            let lanes = plan.tied_gradient_batch(&xd, xs, &ud, us, n);
            grads.extend(
                lanes
                    .iter()
                    .take(LANES.min(s - start))
                    .map(|t| plan.tied_grad_to_exact(t)),
            );
        }
        Ok(grads)
    }
}

impl EquivariantBias {
    /// [`EquivariantBias::materialize`] for every bias.
    pub fn materialize_batch(biases: &[&EquivariantBias], n: usize) -> Result<Vec<DenseTensor>> {
        let maps: Vec<&EquivariantMap> = biases.iter().map(|b| &b.map).collect();
        EquivariantMap::apply_batch(&maps, Batch::Shared(&DenseTensor::scalar(1.0, n)))
    }

    /// [`EquivariantBias::coeff_gradient`] for every upstream tensor.
    pub fn coeff_gradient_batch(order: usize, ws: &[&DenseTensor]) -> Result<Vec<Vec<f64>>> {
        let Some(first) = ws.first() else {
            return Ok(Vec::new());
        };
        let one = DenseTensor::scalar(1.0, first.n());
        EquivariantMap::coeff_gradient_batch(0, order, Batch::Shared(&one), Batch::Each(ws))
    }
}

pub fn apply_equivariant(f: &EquivariantMap, g: &DenseTensor) -> Result<DenseTensor> {
    f.apply(g)
}

pub fn apply_invariant(h: &InvariantMap, g: &DenseTensor) -> Result<f64> {
    h.apply(g)
}

pub fn materialize_bias(b: &EquivariantBias, n: usize) -> Result<DenseTensor> {
    b.materialize(n)
}

pub fn adjoint_equivariant(f: &EquivariantMap, u: &DenseTensor) -> Result<DenseTensor> {
    f.adjoint(u)
}

/// One 0/1 tensor of order `k + l` per partition, in canonical order; entry
/// 1 iff the combined tuple (output positions first) has exactly that
/// equality pattern.
pub fn materialize_basis(in_order: usize, out_order: usize, n: usize) -> Result<Vec<DenseTensor>> {
    let arity = in_order + out_order;
    Limits::default().check(in_order, out_order, n)?;
    let len = basis_len(arity)?;
    let ranker = Ranker::new(arity);
    let mut basis = vec![DenseTensor::zeros(arity, n); len];
    let mut idx = vec![0usize; arity];
    let total = n.pow(arity as u32);
    for flat in 0..total {
        let r = pattern_rank(&ranker, &idx);
        basis[r].data_mut()[flat] = 1.0;
        increment(&mut idx, n);
    }
    Ok(basis)
}

fn transpose_coeffs(plan: &Plan, coeffs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; coeffs.len()];
    for (i, &c) in coeffs.iter().enumerate() {
        out[plan.transpose[i]] = c;
    }
    out
}

fn pattern_tensor(order: usize, n: usize, coeffs: &[f64]) -> DenseTensor {
    let ranker = Ranker::new(order);
    DenseTensor::from_fn(order, n, |idx| coeffs[pattern_rank(&ranker, idx)])
}

struct FusedWalk<'a> {
    in_order: usize,
    out_order: usize,
    n: usize,
    ranker: Ranker,
    coeffs: &'a [f64],
    x: &'a [f64],
    in_strides: Vec<usize>,
}

impl<'a> FusedWalk<'a> {
    fn new(in_order: usize, out_order: usize, n: usize, coeffs: &'a [f64], x: &'a [f64]) -> Self {
        Self {
            in_order,
            out_order,
            n,
            ranker: Ranker::new(in_order + out_order),
            coeffs,
            x,
            in_strides: strides(in_order, n),
        }
    }

    fn entry(&self, out_flat: usize) -> f64 {
        let mut out_idx = vec![0usize; self.out_order];
        let mut rest = out_flat;
        for a in (0..self.out_order).rev() {
            out_idx[a] = rest % self.n;
            rest /= self.n;
        }
        let mut values: Vec<usize> = Vec::with_capacity(self.in_order + self.out_order);
        let mut rank = 0;
        for (pos, &v) in out_idx.iter().enumerate() {
            let used = values.len();
            let label = values.iter().position(|&u| u == v).unwrap_or(used);
            rank += self.ranker.step(pos, used, label);
            if label == used {
                values.push(v);
            }
        }
        self.descend(self.out_order, &mut values, rank, 0)
    }

    fn descend(&self, pos: usize, values: &mut Vec<usize>, rank: usize, x_off: usize) -> f64 {
        if pos == self.in_order + self.out_order {
            return self.coeffs[rank] * self.x[x_off];
        }
        let stride = self.in_strides[pos - self.out_order];
        let used = values.len();
        let mut acc = 0.0;
        for v in 0..self.n {
            let label = values.iter().position(|&u| u == v).unwrap_or(used);
            let r = rank + self.ranker.step(pos, used, label);
            if label == used {
                values.push(v);
                acc += self.descend(pos + 1, values, r, x_off + v * stride);
                values.pop();
            } else {
                acc += self.descend(pos + 1, values, r, x_off + v * stride);
            }
        }
        acc
    }
}
