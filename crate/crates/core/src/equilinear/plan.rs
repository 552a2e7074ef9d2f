//! Contraction plans for the operator space `R^{n^k} -> R^{n^l}`.
//!
//! The exact-pattern basis element `E_π` is nonzero only on tuples whose
//! equality pattern is exactly `π`. The tied basis element `C_σ` is nonzero
//! on every tuple whose pattern is `σ` or coarser, so `C_σ = Σ_{π ⪰ σ} E_π`.
//! Writing an operator as `Σ_σ d_σ C_σ` (with `d` the Möbius transform of the
//! exact coefficients) turns each term into a cheap contraction: tie the
//! diagonals inside each block of `σ`, sum out blocks that touch only input
//! positions, and broadcast blocks that touch only output positions.
//!
//! A block of `σ` touching both sides pairs one block of the output-side
//! restriction with one block of the input-side restriction. Terms sharing
//! the same input-side restriction and paired blocks reuse one reduction;
//! terms sharing the output side accumulate into one buffer before a single
//! broadcast.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::partitions::{enumerate_partitions_capped, pattern_of, Ranker, SetPartition};

/// One side (input or output positions) of a term: the restricted partition
/// and the blocks that stay as free axes, ascending.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub(crate) struct SideKey {
    pub part: SetPartition,
    pub keep: Vec<usize>,
}

#[derive(Clone, Debug)]
pub(crate) struct Term {
    pub reduce: usize,
    pub gather: usize,
    /// `perm[j]` = axis of the reduced input tensor paired with the `j`-th
    /// kept output block.
    pub perm: Vec<usize>,
}

#[derive(Debug)]
pub(crate) struct Plan {
    pub in_order: usize,
    pub out_order: usize,
    /// Strictly finer partitions of each partition.
    pub finer: Vec<Vec<usize>>,
    /// Strictly coarser partitions of each partition.
    pub coarser: Vec<Vec<usize>>,
    /// Partition indices sorted by decreasing block count (finest first).
    pub finest_first: Vec<usize>,
    pub terms: Vec<Term>,
    pub reduce_keys: Vec<SideKey>,
    pub gather_keys: Vec<SideKey>,
    /// `transpose[i]` = index, in the plan for `(out_order, in_order)`, of
    /// partition `i` with the input and output positions swapped.
    pub transpose: Vec<usize>,
    layouts: Mutex<HashMap<usize, Arc<Layout>>>,
}

impl Plan {
    fn build(in_order: usize, out_order: usize) -> Plan {
        let m = in_order + out_order;
        let parts = enumerate_partitions_capped(m, usize::MAX).expect("uncapped enumeration");
        let b = parts.len();

        let mut finer = vec![Vec::new(); b];
        let mut coarser = vec![Vec::new(); b];
        for (i, pi) in parts.iter().enumerate() {
            for (j, sigma) in parts.iter().enumerate() {
                if i != j && sigma.num_blocks() > pi.num_blocks() && sigma.refines(pi) {
                    finer[i].push(j);
                    coarser[j].push(i);
                }
            }
        }
        let mut finest_first: Vec<usize> = (0..b).collect();
        finest_first.sort_by_key(|&i| std::cmp::Reverse(parts[i].num_blocks()));

        let out_pos: Vec<usize> = (0..out_order).collect();
        let in_pos: Vec<usize> = (out_order..m).collect();
        let mut reduce_keys: Vec<SideKey> = Vec::new();
        let mut gather_keys: Vec<SideKey> = Vec::new();
        let mut reduce_index: HashMap<SideKey, usize> = HashMap::new();
        let mut gather_index: HashMap<SideKey, usize> = HashMap::new();
        let mut terms = Vec::with_capacity(b);

        for sigma in &parts {
            let p_out = sigma.restrict(&out_pos);
            let p_in = sigma.restrict(&in_pos);
            // σ-block -> (output-side block, input-side block)
            let mut out_of = vec![None; sigma.num_blocks()];
            let mut in_of = vec![None; sigma.num_blocks()];
            for (q, &p) in out_pos.iter().enumerate() {
                out_of[sigma.block_of(p)] = Some(p_out.block_of(q));
            }
            for (q, &p) in in_pos.iter().enumerate() {
                in_of[sigma.block_of(p)] = Some(p_in.block_of(q));
            }
            let mut pairs: Vec<(usize, usize)> = out_of
                .iter()
                .zip(&in_of)
                .filter_map(|(o, i)| Some(((*o)?, (*i)?)))
                .collect();
            pairs.sort_unstable();
            let gather_keep: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let mut reduce_keep: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            reduce_keep.sort_unstable();
            let perm = pairs
                .iter()
                .map(|&(_, ib)| reduce_keep.binary_search(&ib).unwrap())
                .collect();

            let rk = SideKey {
                part: p_in,
                keep: reduce_keep,
            };
            let gk = SideKey {
                part: p_out,
                keep: gather_keep,
            };
            let reduce = *reduce_index.entry(rk.clone()).or_insert_with(|| {
                reduce_keys.push(rk);
                reduce_keys.len() - 1
            });
            let gather = *gather_index.entry(gk.clone()).or_insert_with(|| {
                gather_keys.push(gk);
                gather_keys.len() - 1
            });
            terms.push(Term {
                reduce,
                gather,
                perm,
            });
        }

        let ranker = Ranker::new(m);
        let swapped: Vec<usize> = in_pos.iter().chain(&out_pos).copied().collect();
        let transpose = parts
            .iter()
            .map(|p| ranker.rank(p.restrict(&swapped).rgs()))
            .collect();

        Plan {
            in_order,
            out_order,
            finer,
            coarser,
            finest_first,
            terms,
            reduce_keys,
            gather_keys,
            transpose,
            layouts: Mutex::new(HashMap::new()),
        }
    }

    #[cfg(test)]
    pub fn len(&self) -> usize {
        self.transpose.len()
    }

    /// Exact-pattern coefficients -> tied coefficients.
    pub fn to_tied(&self, exact: &[f64]) -> Vec<f64> {
        let mut tied = vec![0.0; exact.len()];
        for &i in &self.finest_first {
            let mut v = exact[i];
            for &j in &self.finer[i] {
                v -= tied[j];
            }
            tied[i] = v;
        }
        tied
    }

    /// Transposed inverse of [`Plan::to_tied`]: maps a gradient with respect
    /// to tied coefficients to one with respect to exact coefficients.
    pub fn tied_grad_to_exact(&self, tied_grad: &[f64]) -> Vec<f64> {
        let mut exact = vec![0.0; tied_grad.len()];
        for &i in self.finest_first.iter().rev() {
            let mut v = tied_grad[i];
            for &j in &self.coarser[i] {
                v -= exact[j];
            }
            exact[i] = v;
        }
        exact
    }

    /// Stride tables for side length `n`, built once per plan and size.
    fn layout(&self, n: usize) -> Arc<Layout> {
        if let Some(l) = self.layouts.lock().unwrap().get(&n) {
            return Arc::clone(l);
        }
        let built = Arc::new(Layout::build(self, n));
        let mut guard = self.layouts.lock().unwrap();
        Arc::clone(guard.entry(n).or_insert(built))
    }

    /// `T = Σ_σ tied[σ] C_σ[X]`, where `x` has order `in_order` over `[n]`.
    pub fn apply(&self, tied: &[f64], x: &[f64], n: usize) -> Vec<f64> {
        self.apply_lanes::<1, 1>(&[tied], x, n)
    }

    /// [`Plan::apply`] for [`LANES`] tied vectors at once. Buffers hold the
    /// lanes interleaved (entry `e` of lane `c` at `e * LANES + c`); `x` is
    /// either one tensor shared by every lane or interleaved too. Each lane
    /// sees the same additions, in the same order, as a lone call.
    pub fn apply_batch(
        &self,
        tieds: &[&[f64]; LANES],
        x: &[f64],
        x_shared: bool,
        n: usize,
    ) -> Vec<f64> {
        if x_shared {
            self.apply_lanes::<LANES, 1>(tieds, x, n)
        } else {
            self.apply_lanes::<LANES, LANES>(tieds, x, n)
        }
    }

    /// `S` lanes; `X` is the lane width of `x` (1 or `S`).
    fn apply_lanes<const S: usize, const X: usize>(
        &self,
        tieds: &[&[f64]; S],
        x: &[f64],
        n: usize,
    ) -> Vec<f64> {
        let lay = self.layout(n);
        let reduced = lay.reduce.reduce_all::<X>(x, n);
        let mut gathered = vec![0.0; lay.gather.len * S];
        for (t, (term, tl)) in self.terms.iter().zip(&lay.terms).enumerate() {
            let w: [f64; S] = std::array::from_fn(|c| tieds[c][t]);
            if w.iter().all(|&v| v == 0.0) {
                continue;
            }
            let r = lay.reduce.slot::<X>(&reduced, term.reduce);
            let q = lay.gather.slot_mut::<S>(&mut gathered, term.gather);
            strided_pairs(n, &tl.q, &tl.src, |qi, ri| {
                let d = row_mut::<S>(q, qi);
                if X == 1 {
                    let rv = r[ri];
                    for c in 0..S {
                        d[c] += w[c] * rv;
                    }
                } else {
                    let src = &r[ri * X..ri * X + X];
                    for c in 0..S {
                        d[c] += w[c] * src[c];
                    }
                }
            });
        }
        let mut out = vec![0.0; pow(n, self.out_order) * S];
        lay.gather.broadcast_all::<S>(&mut gathered, &mut out, n);
        out
    }

    /// `g[σ] = ⟨C_σ[X], U⟩` for every partition, as tied-basis gradients.
    pub fn tied_gradient(&self, x: &[f64], u: &[f64], n: usize) -> Vec<f64> {
        let [g] = self.gradient_lanes::<1, 1, 1>(x, u, n);
        g
    }

    /// [`Plan::tied_gradient`] for [`LANES`] lanes; `x` and `u` are each
    /// shared or interleaved as in [`Plan::apply_batch`].
    pub fn tied_gradient_batch(
        &self,
        x: &[f64],
        x_shared: bool,
        u: &[f64],
        u_shared: bool,
        n: usize,
    ) -> [Vec<f64>; LANES] {
        match (x_shared, u_shared) {
            (true, true) => self.gradient_lanes::<LANES, 1, 1>(x, u, n),
            (true, false) => self.gradient_lanes::<LANES, 1, LANES>(x, u, n),
            (false, true) => self.gradient_lanes::<LANES, LANES, 1>(x, u, n),
            (false, false) => self.gradient_lanes::<LANES, LANES, LANES>(x, u, n),
        }
    }

    fn gradient_lanes<const S: usize, const X: usize, const U: usize>(
        &self,
        x: &[f64],
        u: &[f64],
        n: usize,
    ) -> [Vec<f64>; S] {
        let lay = self.layout(n);
        let reduced = lay.reduce.reduce_all::<X>(x, n);
        let gathered = lay.gather.reduce_all::<U>(u, n);
        let mut grads: [Vec<f64>; S] = std::array::from_fn(|_| vec![0.0; self.terms.len()]);
        for (t, (term, tl)) in self.terms.iter().zip(&lay.terms).enumerate() {
            let r = lay.reduce.slot::<X>(&reduced, term.reduce);
            let q = lay.gather.slot::<U>(&gathered, term.gather);
            let mut acc = [0.0; S];
            strided_pairs(n, &tl.q, &tl.src, |qi, ri| {
                for (c, a) in acc.iter_mut().enumerate() {
                    let qv = q[qi * U + if U == 1 { 0 } else { c }];
                    let rv = r[ri * X + if X == 1 { 0 } else { c }];
                    *a += qv * rv;
                }
            });
            for (g, a) in grads.iter_mut().zip(acc) {
                g[t] = a;
            }
        }
        grads
    }
}

/// Lane count of the batched kernels.
pub(crate) const LANES: usize = 4;

#[inline]
fn row_mut<const W: usize>(buf: &mut [f64], i: usize) -> &mut [f64; W] {
    (&mut buf[i * W..i * W + W])
        .try_into()
        .expect("row of width W")
}

#[inline]
fn add_row<const W: usize>(dst: &mut [f64], di: usize, src: &[f64], si: usize) {
    let s: &[f64; W] = src[si * W..si * W + W].try_into().expect("row of width W");
    let d = row_mut::<W>(dst, di);
    for c in 0..W {
        d[c] += s[c];
    }
}

/// Strides of one side key at a fixed `n`, and its slot in a flat arena.
#[derive(Debug)]
struct KeyLayout {
    /// Per block, the summed strides of the tied tensor axes.
    tensor: Vec<usize>,
    /// Per block, the row-major stride among kept blocks (0 if summed out).
    free: Vec<usize>,
    offset: usize,
    len: usize,
    /// A key with the same ties keeping one more block. This key's buffer is
    /// that buffer with the extra block summed out.
    parent: Option<usize>,
    /// Row-major strides of the parent buffer, and per parent axis the
    /// stride into this buffer (0 for the summed block).
    parent_strides: Vec<usize>,
    link: Vec<usize>,
}

/// All keys of one side, their arena layout and a processing order with
/// parents ahead of children.
#[derive(Debug)]
struct SideLayout {
    keys: Vec<KeyLayout>,
    parents_first: Vec<usize>,
    len: usize,
}

impl SideLayout {
    fn build(keys: &[SideKey], order: usize, n: usize) -> SideLayout {
        let mut offset = 0;
        let mut layouts = Vec::with_capacity(keys.len());
        for k in keys {
            let (tensor, free) = side_strides(n, order, k);
            let len = pow(n, k.keep.len());
            let parent = keys.iter().position(|o| {
                o.part == k.part
                    && o.keep.len() == k.keep.len() + 1
                    && k.keep.iter().all(|b| o.keep.contains(b))
            });
            let (parent_strides, link) = match parent {
                Some(p) => {
                    let own = row_major(n, k.keep.len());
                    let link = keys[p]
                        .keep
                        .iter()
                        .map(|b| k.keep.iter().position(|c| c == b).map_or(0, |j| own[j]))
                        .collect();
                    (row_major(n, keys[p].keep.len()), link)
                }
                None => (Vec::new(), Vec::new()),
            };
            layouts.push(KeyLayout {
                tensor,
                free,
                offset,
                len,
                parent,
                parent_strides,
                link,
            });
            offset += len;
        }
        let mut parents_first: Vec<usize> = (0..keys.len()).collect();
        parents_first.sort_by_key(|&i| std::cmp::Reverse(keys[i].keep.len()));
        SideLayout {
            keys: layouts,
            parents_first,
            len: offset,
        }
    }

    fn slot<'a, const W: usize>(&self, arena: &'a [f64], key: usize) -> &'a [f64] {
        let k = &self.keys[key];
        &arena[k.offset * W..(k.offset + k.len) * W]
    }

    fn slot_mut<'a, const W: usize>(&self, arena: &'a mut [f64], key: usize) -> &'a mut [f64] {
        let k = &self.keys[key];
        &mut arena[k.offset * W..(k.offset + k.len) * W]
    }

    /// Sums of `x` (`W` interleaved lanes) for every key, children summed
    /// out of their parents.
    fn reduce_all<const W: usize>(&self, x: &[f64], n: usize) -> Vec<f64> {
        let mut arena = vec![0.0; self.len * W];
        for &i in &self.parents_first {
            let k = &self.keys[i];
            match k.parent {
                None => {
                    let r = self.slot_mut::<W>(&mut arena, i);
                    strided_pairs(n, &k.tensor, &k.free, |xi, oi| add_row::<W>(r, oi, x, xi));
                }
                Some(p) => {
                    let pk = &self.keys[p];
                    let (src, dst) = split_pair(
                        &mut arena,
                        pk.offset * W,
                        pk.len * W,
                        k.offset * W,
                        k.len * W,
                    );
                    strided_pairs(n, &k.parent_strides, &k.link, |pi, ci| {
                        add_row::<W>(dst, ci, src, pi)
                    });
                }
            }
        }
        arena
    }

    /// Adjoint of [`SideLayout::reduce_all`]: children are spread into
    /// their parents, then roots are written onto every consistent tuple.
    fn broadcast_all<const W: usize>(&self, arena: &mut [f64], out: &mut [f64], n: usize) {
        for &i in self.parents_first.iter().rev() {
            let k = &self.keys[i];
            match k.parent {
                None => {
                    let q = self.slot::<W>(arena, i);
                    strided_pairs(n, &k.tensor, &k.free, |ti, qi| add_row::<W>(out, ti, q, qi));
                }
                Some(p) => {
                    let pk = &self.keys[p];
                    let (src, dst) =
                        split_pair(arena, k.offset * W, k.len * W, pk.offset * W, pk.len * W);
                    strided_pairs(n, &k.parent_strides, &k.link, |pi, ci| {
                        add_row::<W>(dst, pi, src, ci)
                    });
                }
            }
        }
    }
}

/// Disjoint views `(&buf[a..a+alen], &mut buf[b..b+blen])`.
fn split_pair(
    buf: &mut [f64],
    a: usize,
    alen: usize,
    b: usize,
    blen: usize,
) -> (&[f64], &mut [f64]) {
    if a < b {
        let (lo, hi) = buf.split_at_mut(b);
        (&lo[a..a + alen], &mut hi[..blen])
    } else {
        let (lo, hi) = buf.split_at_mut(a);
        (&hi[..alen], &mut lo[b..b + blen])
    }
}

#[derive(Debug)]
struct TermLayout {
    q: Vec<usize>,
    src: Vec<usize>,
}

#[derive(Debug)]
struct Layout {
    reduce: SideLayout,
    gather: SideLayout,
    terms: Vec<TermLayout>,
}

impl Layout {
    fn build(plan: &Plan, n: usize) -> Layout {
        let terms = plan
            .terms
            .iter()
            .map(|t| {
                let r_strides = row_major(n, plan.reduce_keys[t.reduce].keep.len());
                TermLayout {
                    q: row_major(n, plan.gather_keys[t.gather].keep.len()),
                    src: t.perm.iter().map(|&a| r_strides[a]).collect(),
                }
            })
            .collect();
        Layout {
            reduce: SideLayout::build(&plan.reduce_keys, plan.in_order, n),
            gather: SideLayout::build(&plan.gather_keys, plan.out_order, n),
            terms,
        }
    }
}

fn pow(n: usize, k: usize) -> usize {
    n.pow(k as u32)
}

fn row_major(n: usize, dims: usize) -> Vec<usize> {
    crate::tensor::strides(dims, n)
}

/// Per-block strides of an order-`order` tensor under the ties of `key.part`,
/// and the row-major strides of the kept blocks (zero for summed blocks).
fn side_strides(n: usize, order: usize, key: &SideKey) -> (Vec<usize>, Vec<usize>) {
    let full = row_major(n, order);
    let blocks = key.part.num_blocks();
    let mut tensor = vec![0usize; blocks];
    for p in 0..order {
        tensor[key.part.block_of(p)] += full[p];
    }
    let kept = row_major(n, key.keep.len());
    let mut free = vec![0usize; blocks];
    for (j, &blk) in key.keep.iter().enumerate() {
        free[blk] = kept[j];
    }
    (tensor, free)
}

/// Visits every multi-index of `[n]^d` (`d = sa.len()`), passing the two
/// linear offsets `Σ idx·sa` and `Σ idx·sb`, in row-major order.
#[inline]
pub(crate) fn strided_pairs(n: usize, sa: &[usize], sb: &[usize], mut f: impl FnMut(usize, usize)) {
    let d = sa.len();
    debug_assert_eq!(d, sb.len());
    if d == 0 {
        f(0, 0);
        return;
    }
    let (la, lb) = (sa[d - 1], sb[d - 1]);
    let mut idx = [0usize; 8];
    let (mut a, mut b) = (0usize, 0usize);
    loop {
        let (mut ia, mut ib) = (a, b);
        for _ in 0..n {
            f(ia, ib);
            ia += la;
            ib += lb;
        }
        let mut ax = d - 1;
        loop {
            if ax == 0 {
                return;
            }
            ax -= 1;
            idx[ax] += 1;
            a += sa[ax];
            b += sb[ax];
            if idx[ax] < n {
                break;
            }
            a -= sa[ax] * n;
            b -= sb[ax] * n;
            idx[ax] = 0;
        }
    }
}

type PlanCache = Mutex<HashMap<(usize, usize), Arc<Plan>>>;

pub(crate) fn plan(in_order: usize, out_order: usize) -> Arc<Plan> {
    static PLANS: OnceLock<PlanCache> = OnceLock::new();
    let cache = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(p) = cache.lock().unwrap().get(&(in_order, out_order)) {
        return Arc::clone(p);
    }
    // built outside the lock; a racing duplicate build is identical
    let built = Arc::new(Plan::build(in_order, out_order));
    let mut guard = cache.lock().unwrap();
    Arc::clone(guard.entry((in_order, out_order)).or_insert(built))
}

/// Rank of the equality pattern of a full index tuple.
pub(crate) fn pattern_rank(ranker: &Ranker, tuple: &[usize]) -> usize {
    ranker.rank(pattern_of(tuple).rgs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strided_pairs_visits_row_major() {
        let mut seen = Vec::new();
        strided_pairs(3, &[3, 1], &[1, 0], |a, b| seen.push((a, b)));
        assert_eq!(seen.len(), 9);
        assert_eq!(seen[0], (0, 0));
        assert_eq!(seen[4], (4, 1));
        assert_eq!(seen[8], (8, 2));
        let mut count = 0;
        strided_pairs(4, &[], &[], |_, _| count += 1);
        assert_eq!(count, 1);
    }

    #[test]
    fn tied_transform_inverts() {
        let p = plan(2, 2);
        let exact: Vec<f64> = (0..p.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let tied = p.to_tied(&exact);
        // c_π = Σ_{σ ⪯ π} d_σ
        for (i, &c) in exact.iter().enumerate() {
            let s: f64 = tied[i] + p.finer[i].iter().map(|&j| tied[j]).sum::<f64>();
            assert!((s - c).abs() < 1e-12);
        }
    }

    #[test]
    fn transpose_is_involution() {
        let a = plan(2, 3);
        let b = plan(3, 2);
        for i in 0..a.len() {
            assert_eq!(b.transpose[a.transpose[i]], i);
        }
    }

    #[test]
    fn term_keys_shared() {
        let p = plan(2, 3);
        assert_eq!(p.terms.len(), 52);
        // input side: 2 partitions of [2] with subsets of their blocks
        assert!(p.reduce_keys.len() <= 2 + 4);
        assert!(p.gather_keys.len() <= 22);
    }
}
