//! Brute-force witnesses for closure under products, point separation by
//! threshold networks, and the multiset-alignment lemma.
//!
//! Everything here works at tiny `n`; the searches are budgeted and report
//! an inconclusive result rather than guessing.

use rand::Rng;
use serde::Serialize;
use serde_json::json;

use crate::equilinear::{EquivariantMap, InvariantMap};
use crate::error::{Error, Result};
use crate::graphs::is_isomorphic;
use crate::par;
use crate::partitions::{enumerate_partitions, Ranker};
use crate::rng::{self, Stream};
use crate::tensor::{sigmoid, strides, DenseTensor, Permutation};

/// Largest `n` accepted by [`multiset_profile`].
pub const MAX_PROFILE_N: usize = 5;

/// Full re-expression checks are skipped above this many tuples.
const RESIDUAL_CHECK_TUPLES: usize = 1 << 20;

fn ranked_tuples(m: usize, n: usize, mut f: impl FnMut(&[usize], usize)) {
    let ranker = Ranker::new(m);
    let mut idx = vec![0usize; m];
    for _ in 0..n.pow(m as u32) {
        let p = crate::partitions::pattern_of(&idx);
        f(&idx, ranker.rank(p.rgs()));
        crate::tensor::increment(&mut idx, n);
    }
}

/// Re-expresses a pattern-constant function of `m`-tuples in the
/// exact-pattern basis: one representative per partition, then an optional
/// check that every tuple agrees with its representative.
fn reexpress(m: usize, value: impl Fn(&[usize]) -> f64) -> Result<Vec<f64>> {
    let n_ref = m.max(1);
    let coeffs: Vec<f64> = enumerate_partitions(m)?
        .iter()
        .map(|p| {
            let rep: Vec<usize> = p.rgs().iter().map(|&b| b as usize).collect();
            value(&rep)
        })
        .collect();
    if n_ref.pow(m as u32) <= RESIDUAL_CHECK_TUPLES {
        let mut residual: f64 = 0.0;
        ranked_tuples(m, n_ref, |t, r| {
            residual = residual.max((value(t) - coeffs[r]).abs());
        });
        if residual > 1e-10 {
            return Err(Error::Internal(format!(
                "re-expression residual {residual:e}"
            )));
        }
    }
    Ok(coeffs)
}

/// `H3` with `H1[G1]·H2[G2] == H3[G1 ⊗ G2]`.
pub fn closure_invariant(h1: &InvariantMap, h2: &InvariantMap) -> Result<InvariantMap> {
    let (k1, k2) = (h1.in_order(), h2.in_order());
    let m = k1 + k2;
    InvariantMap::new(m, vec![0.0; EquivariantMap::basis_len(m, 0)?])?;
    let n_ref = m.max(1);
    let t1 = h1.materialize(n_ref);
    let t2 = h2.materialize(n_ref);
    let coeffs = reexpress(m, |t| t1.get(&t[..k1]) * t2.get(&t[k1..]))?;
    InvariantMap::new(m, coeffs)
}

/// `H3` with `H1[G1] ⊙ H2[G2] == H3[G1 ⊗ G2]` for maps to vectors.
pub fn closure_equivariant(h1: &EquivariantMap, h2: &EquivariantMap) -> Result<EquivariantMap> {
    for h in [h1, h2] {
        if h.out_order() != 1 {
            return Err(Error::OrderMismatch {
                expected: 1,
                actual: h.out_order(),
            });
        }
    }
    let (k1, k2) = (h1.in_order(), h2.in_order());
    let m = 1 + k1 + k2;
    EquivariantMap::basis_len(k1 + k2, 1)?;
    let r1 = Ranker::new(1 + k1);
    let r2 = Ranker::new(1 + k2);
    let rank = |r: &Ranker, t: &[usize]| r.rank(crate::partitions::pattern_of(t).rgs());
    let coeffs = reexpress(m, |t| {
        let mut a = Vec::with_capacity(1 + k1);
        a.push(t[0]);
        a.extend_from_slice(&t[1..1 + k1]);
        let mut b = Vec::with_capacity(1 + k2);
        b.push(t[0]);
        b.extend_from_slice(&t[1 + k1..]);
        h1.coeffs()[rank(&r1, &a)] * h2.coeffs()[rank(&r2, &b)]
    })?;
    EquivariantMap::new(k1 + k2, 1, coeffs)
}

/// `f_λ(G) = H[ρ_sig(λ(G − τ))]` with `H` the full-sum invariant map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThresholdNet {
    pub tau: f64,
    pub lambda: f64,
}

impl ThresholdNet {
    pub fn new(tau: f64, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite() && tau.is_finite()) {
            return Err(Error::Precondition(format!(
                "bad threshold net tau={tau} lambda={lambda}"
            )));
        }
        Ok(Self { tau, lambda })
    }

    pub fn eval(&self, g: &DenseTensor) -> Result<f64> {
        let k = g.order();
        let h = InvariantMap::new(k, vec![1.0; EquivariantMap::basis_len(k, 0)?])?;
        h.apply(&g.map(|x| sigmoid(self.lambda * (x - self.tau))))
    }
}

/// The threshold network that tends to `n^k` as `λ` grows when every entry
/// exceeds `τ`.
pub fn count_nodes_net(tau: f64, lambda: f64) -> Result<ThresholdNet> {
    ThresholdNet::new(tau, lambda)
}

/// Per-tuple positive exponents.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExponentProfile {
    order: usize,
    n: usize,
    exponents: Vec<u32>,
}

impl ExponentProfile {
    pub fn new(order: usize, n: usize, exponents: Vec<u32>) -> Result<Self> {
        if exponents.len() != n.pow(order as u32) {
            return Err(Error::ShapeMismatch(format!(
                "profile needs {} exponents, got {}",
                n.pow(order as u32),
                exponents.len()
            )));
        }
        if exponents.contains(&0) {
            return Err(Error::Precondition("exponents must be at least 1".into()));
        }
        Ok(Self {
            order,
            n,
            exponents,
        })
    }

    pub fn ones(order: usize, n: usize) -> Self {
        Self {
            order,
            n,
            exponents: vec![1; n.pow(order as u32)],
        }
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    /// The `index`-th profile in lexicographic order over `1..=max` (last
    /// tuple varies fastest), or `None` past the end.
    pub fn lexicographic(order: usize, n: usize, max: u32, mut index: u64) -> Option<Self> {
        let len = n.pow(order as u32);
        let mut e = vec![1u32; len];
        for slot in e.iter_mut().rev() {
            *slot = 1 + (index % max as u64) as u32;
            index /= max as u64;
        }
        (index == 0).then_some(Self {
            order,
            n,
            exponents: e,
        })
    }

    pub fn random<R: Rng + ?Sized>(order: usize, n: usize, max: u32, rng: &mut R) -> Self {
        let len = n.pow(order as u32);
        Self {
            order,
            n,
            exponents: (0..len).map(|_| rng.random_range(1..=max)).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProfileMode {
    Invariant,
    /// Sum over permutations sending `anchor` to each output node `q`.
    Equivariant {
        anchor: usize,
    },
}

/// `Σ_σ Π_t A[σ(t)]^{k_t}` over all permutations (invariant mode), or per
/// `q` over those with `σ(anchor) = q`. Returns an order-0 or order-1 tensor.
pub fn multiset_profile(
    a: &DenseTensor,
    profile: &ExponentProfile,
    mode: ProfileMode,
) -> Result<DenseTensor> {
    let (k, n) = (a.order(), a.n());
    if n > MAX_PROFILE_N {
        return Err(Error::SearchBudget(format!(
            "multiset profile needs n <= {MAX_PROFILE_N}, got {n}"
        )));
    }
    if profile.order != k || profile.n != n {
        return Err(Error::ShapeMismatch(
            "profile shape differs from tensor".into(),
        ));
    }
    if a.data().iter().any(|&x| x.is_nan() || x <= 0.0) {
        return Err(Error::Precondition(
            "multiset entries must be positive".into(),
        ));
    }
    let st = strides(k, n);
    let tuples: Vec<Vec<usize>> = (0..a.len()).map(|f| a.multi_index(f)).collect();
    let mut out = match mode {
        ProfileMode::Invariant => vec![0.0],
        ProfileMode::Equivariant { anchor } => {
            if anchor >= n {
                return Err(Error::Precondition(format!("anchor {anchor} out of range")));
            }
            vec![0.0; n]
        }
    };
    for sigma in Permutation::all(n) {
        let s = sigma.as_slice();
        let mut prod = 1.0;
        for (t, &e) in tuples.iter().zip(&profile.exponents) {
            let off: usize = t.iter().zip(&st).map(|(&i, &w)| s[i] * w).sum();
            prod *= a.data()[off].powi(e as i32);
        }
        match mode {
            ProfileMode::Invariant => out[0] += prod,
            ProfileMode::Equivariant { anchor } => out[s[anchor]] += prod,
        }
    }
    DenseTensor::new(mode_order(mode), n, out)
}

fn mode_order(mode: ProfileMode) -> usize {
    match mode {
        ProfileMode::Invariant => 0,
        ProfileMode::Equivariant { .. } => 1,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeparationBudget {
    pub lambdas: Vec<f64>,
    pub lex_profiles: u64,
    pub lex_max_exponent: u32,
    pub random_profiles: u64,
    pub random_max_exponent: u32,
    pub tol: f64,
    pub seed: u64,
}

impl Default for SeparationBudget {
    fn default() -> Self {
        Self {
            lambdas: vec![1.0, 10.0, 50.0, 200.0],
            lex_profiles: 2000,
            lex_max_exponent: 3,
            random_profiles: 2000,
            random_max_exponent: 6,
            tol: 1e-12,
            seed: 0,
        }
    }
}

/// Largest `n` accepted by [`separate`].
pub const MAX_SEPARATE_N: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub stage: u8,
    pub params: serde_json::Value,
    pub values: [f64; 2],
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Separation {
    Separated(Witness),
    /// Budget exhausted; `isomorphism` is a node map if one exists.
    NotSeparated {
        isomorphism: Option<Permutation>,
    },
}

impl Separation {
    pub fn is_separated(&self) -> bool {
        matches!(self, Separation::Separated(_))
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Separation::Separated(w) => json!({
                "result": "separated",
                "stage": w.stage,
                "params": w.params,
                "values": w.values,
                "tol": w.tol,
            }),
            Separation::NotSeparated { isomorphism } => json!({
                "result": if isomorphism.is_some() { "not_separated" } else { "inconclusive" },
                "isomorphism": isomorphism.as_ref().map(|p| p.as_slice().to_vec()),
            }),
        }
    }
}

fn differs(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() > 10.0 * tol * a.abs().max(b.abs()).max(1.0)
}

fn sorted_entries(g: &DenseTensor) -> Vec<f64> {
    let mut v = g.data().to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Profiles in search order: lexicographic first, then seeded random ones.
fn profile_at(
    order: usize,
    n: usize,
    budget: &SeparationBudget,
    i: u64,
) -> Option<ExponentProfile> {
    if i < budget.lex_profiles {
        if let Some(p) = ExponentProfile::lexicographic(order, n, budget.lex_max_exponent, i) {
            return Some(p);
        }
    }
    let j = i.checked_sub(budget.lex_profiles)?;
    (j < budget.random_profiles).then(|| {
        let mut r = rng::stream(budget.seed, Stream::Check, n as u64, j);
        ExponentProfile::random(order, n, budget.random_max_exponent, &mut r)
    })
}

/// Lowest-index profile whose invariant values differ, searched in
/// parallel chunks.
fn first_separating_profile(
    a1: &DenseTensor,
    a2: &DenseTensor,
    budget: &SeparationBudget,
) -> Result<Option<(ExponentProfile, [f64; 2])>> {
    const CHUNK: u64 = 64;
    let total = budget.lex_profiles + budget.random_profiles;
    let (k, n) = (a1.order(), a1.n());
    let mut start = 0;
    while start < total {
        let ids: Vec<u64> = (start..(start + CHUNK).min(total)).collect();
        let hits = par::map(&ids, |&i| -> Result<Option<(ExponentProfile, [f64; 2])>> {
            let Some(p) = profile_at(k, n, budget, i) else {
                return Ok(None);
            };
            let v1 = multiset_profile(a1, &p, ProfileMode::Invariant)?.data()[0];
            let v2 = multiset_profile(a2, &p, ProfileMode::Invariant)?.data()[0];
            Ok(differs(v1, v2, budget.tol).then_some((p, [v1, v2])))
        });
        for h in hits {
            if let Some(hit) = h? {
                return Ok(Some(hit));
            }
        }
        start += CHUNK;
    }
    Ok(None)
}

/// Staged search for an invariant network telling `g1` and `g2` apart:
/// node count, then the entry multiset, then permutation-sum features of
/// `ρ_sig(G)`.
pub fn separate(
    g1: &DenseTensor,
    g2: &DenseTensor,
    budget: &SeparationBudget,
) -> Result<Separation> {
    if g1.order() != g2.order() {
        return Err(Error::OrderMismatch {
            expected: g1.order(),
            actual: g2.order(),
        });
    }
    for g in [g1, g2] {
        if g.n() > MAX_SEPARATE_N {
            return Err(Error::Precondition(format!(
                "separate needs n <= {MAX_SEPARATE_N}, got {}",
                g.n()
            )));
        }
    }
    let tol = budget.tol;

    if g1.n() != g2.n() {
        let low = g1
            .data()
            .iter()
            .chain(g2.data())
            .copied()
            .fold(f64::INFINITY, f64::min);
        let tau = low - 1.0;
        for &lambda in &budget.lambdas {
            let net = count_nodes_net(tau, lambda)?;
            let (v1, v2) = (net.eval(g1)?, net.eval(g2)?);
            if differs(v1, v2, tol) {
                return Ok(Separation::Separated(Witness {
                    stage: 1,
                    params: json!({"tau": tau, "lambda": lambda}),
                    values: [v1, v2],
                    tol,
                }));
            }
        }
        return Ok(Separation::NotSeparated { isomorphism: None });
    }

    let (s1, s2) = (sorted_entries(g1), sorted_entries(g2));
    if s1 != s2 {
        let mut values: Vec<f64> = s1.iter().chain(&s2).copied().collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let tau = 0.5 * (w[0] + w[1]);
            for &lambda in &budget.lambdas {
                let net = ThresholdNet::new(tau, lambda)?;
                let (v1, v2) = (net.eval(g1)?, net.eval(g2)?);
                if differs(v1, v2, tol) {
                    return Ok(Separation::Separated(Witness {
                        stage: 2,
                        params: json!({"tau": tau, "lambda": lambda}),
                        values: [v1, v2],
                        tol,
                    }));
                }
            }
        }
    }

    let a1 = g1.map(sigmoid);
    let a2 = g2.map(sigmoid);
    if let Some((p, values)) = first_separating_profile(&a1, &a2, budget)? {
        return Ok(Separation::Separated(Witness {
            stage: 3,
            params: json!({"exponents": p.exponents()}),
            values,
            tol,
        }));
    }
    Ok(Separation::NotSeparated {
        isomorphism: is_isomorphic(g1, g2, 0.0)?,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum LemmaVerdict {
    /// Some node permutation maps one tensor onto the other.
    Aligned {
        permutation: Permutation,
        profiles_checked: u64,
    },
    /// No alignment exists and this profile tells them apart.
    Separated {
        exponents: Vec<u32>,
        values: [f64; 2],
    },
    /// No alignment exists yet no profile in budget tells them apart.
    LemmaViolated,
}

impl LemmaVerdict {
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            LemmaVerdict::Aligned {
                permutation,
                profiles_checked,
            } => {
                json!({"result": "aligned", "permutation": permutation.as_slice(), "profiles_checked": profiles_checked})
            }
            LemmaVerdict::Separated { exponents, values } => {
                json!({"result": "separated", "exponents": exponents, "values": values})
            }
            LemmaVerdict::LemmaViolated => json!({"result": "lemma_violated"}),
        }
    }
}

/// Largest `n` accepted by [`check_multiset_lemma`].
pub const MAX_LEMMA_N: usize = 3;

/// For two positive tensors holding the same multiset of entries: either a
/// node permutation aligns them (and then every profile must agree, which
/// is verified), or some exponent profile separates them.
pub fn check_multiset_lemma(
    a: &DenseTensor,
    a_prime: &DenseTensor,
    budget: &SeparationBudget,
) -> Result<LemmaVerdict> {
    if a.order() != a_prime.order() || a.n() != a_prime.n() {
        return Err(Error::ShapeMismatch(
            "lemma inputs must share order and n".into(),
        ));
    }
    if a.n() > MAX_LEMMA_N {
        return Err(Error::Precondition(format!(
            "lemma check needs n <= {MAX_LEMMA_N}"
        )));
    }
    if a.data()
        .iter()
        .chain(a_prime.data())
        .any(|&x| x.is_nan() || x <= 0.0)
    {
        return Err(Error::Precondition("entries must be positive".into()));
    }
    if sorted_entries(a) != sorted_entries(a_prime) {
        return Err(Error::Precondition(
            "inputs are not the same multiset".into(),
        ));
    }
    // a[t] == a'[σ(t)] for all t  <=>  a' == σ⋆a
    if let Some(sigma) = is_isomorphic(a_prime, a, 0.0)? {
        if let Some((p, v)) = first_separating_profile(a, a_prime, budget)? {
            return Err(Error::Internal(format!(
                "aligned tensors disagree on profile {:?}: {v:?}",
                p.exponents()
            )));
        }
        return Ok(LemmaVerdict::Aligned {
            permutation: sigma,
            profiles_checked: budget.lex_profiles + budget.random_profiles,
        });
    }
    Ok(match first_separating_profile(a, a_prime, budget)? {
        Some((p, values)) => LemmaVerdict::Separated {
            exponents: p.exponents,
            values,
        },
        None => LemmaVerdict::LemmaViolated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{generate_with_rng, Topology};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_coeffs(len: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
        (0..len).map(|_| r.random_range(-1.0..1.0)).collect()
    }

    fn unit(topology: Topology, n: usize) -> DenseTensor {
        let mut g = DenseTensor::zeros(2, n);
        for (i, j) in topology.edges(n).unwrap() {
            g.data_mut()[i * n + j] = 1.0;
            g.data_mut()[j * n + i] = 1.0;
        }
        g
    }

    #[test]
    fn product_of_full_sums_is_full_sum() {
        let s = InvariantMap::new(1, vec![1.0]).unwrap();
        let h3 = closure_invariant(&s, &s).unwrap();
        assert_eq!(h3.coeffs(), &[1.0, 1.0]);
        let z = InvariantMap::new(1, vec![0.0]).unwrap();
        assert!(closure_invariant(&s, &z)
            .unwrap()
            .coeffs()
            .iter()
            .all(|&c| c == 0.0));
    }

    #[test]
    fn invariant_closure_identity() {
        let mut r = rng(1);
        let h1 = InvariantMap::new(2, random_coeffs(2, &mut r)).unwrap();
        let h2 = InvariantMap::new(1, random_coeffs(1, &mut r)).unwrap();
        let h3 = closure_invariant(&h1, &h2).unwrap();
        for _ in 0..20 {
            let g1 = DenseTensor::random_uniform(2, 3, -1.0, 1.0, &mut r);
            let g2 = DenseTensor::random_uniform(1, 3, -1.0, 1.0, &mut r);
            let lhs = h1.apply(&g1).unwrap() * h2.apply(&g2).unwrap();
            let rhs = h3.apply(&g1.kron(&g2).unwrap()).unwrap();
            assert!((lhs - rhs).abs() <= 1e-10);
        }
    }

    #[test]
    fn equivariant_closure_identity() {
        let id = EquivariantMap::new(1, 1, vec![1.0, 0.0]).unwrap();
        let h3 = closure_equivariant(&id, &id).unwrap();
        let x = DenseTensor::from_vector(&[1.0, 2.0, 3.0]).unwrap();
        let y = DenseTensor::from_vector(&[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(
            h3.apply(&x.kron(&y).unwrap()).unwrap().data(),
            &[4.0, 10.0, 18.0]
        );

        let mut r = rng(2);
        let h1 = EquivariantMap::new(1, 1, random_coeffs(2, &mut r)).unwrap();
        let h2 = EquivariantMap::new(1, 1, random_coeffs(2, &mut r)).unwrap();
        let h3 = closure_equivariant(&h1, &h2).unwrap();
        for _ in 0..20 {
            let g1 = DenseTensor::random_uniform(1, 3, -1.0, 1.0, &mut r);
            let g2 = DenseTensor::random_uniform(1, 3, -1.0, 1.0, &mut r);
            let lhs = h1
                .apply(&g1)
                .unwrap()
                .hadamard(&h2.apply(&g2).unwrap())
                .unwrap();
            let g12 = g1.kron(&g2).unwrap();
            let rhs = h3.apply(&g12).unwrap();
            assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-10);
            let s = Permutation::random(3, &mut r);
            let lhs = h3.apply(&g12.permute(&s).unwrap()).unwrap();
            assert!(lhs.max_abs_diff(&rhs.permute(&s).unwrap()).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn count_nodes_limits() {
        let net = count_nodes_net(-1.0, 50.0).unwrap();
        assert!((net.eval(&DenseTensor::zeros(2, 2)).unwrap() - 4.0).abs() <= 1e-8);
        assert!((net.eval(&DenseTensor::zeros(2, 3)).unwrap() - 9.0).abs() <= 1e-8);
        let flat = count_nodes_net(-1.0, 0.0).unwrap();
        assert_eq!(flat.eval(&DenseTensor::ones(2, 3)).unwrap(), 4.5);
    }

    #[test]
    fn profile_examples() {
        let ones = DenseTensor::ones(2, 3);
        let p = ExponentProfile::ones(2, 3);
        assert_eq!(
            multiset_profile(&ones, &p, ProfileMode::Invariant)
                .unwrap()
                .data(),
            &[6.0]
        );
        let mut r = rng(3);
        let a = DenseTensor::random_uniform(2, 3, 0.1, 2.0, &mut r);
        let p = ExponentProfile::random(2, 3, 3, &mut r);
        let v = multiset_profile(&a, &p, ProfileMode::Invariant)
            .unwrap()
            .data()[0];
        let mode = ProfileMode::Equivariant { anchor: 1 };
        let e = multiset_profile(&a, &p, mode).unwrap();
        assert!((e.sum() - v).abs() <= 1e-12 * v);
        for s in Permutation::all(3) {
            let sa = a.permute(&s).unwrap();
            let vs = multiset_profile(&sa, &p, ProfileMode::Invariant)
                .unwrap()
                .data()[0];
            assert!((vs - v).abs() <= 1e-12 * v);
            let es = multiset_profile(&sa, &p, mode).unwrap();
            assert!(es.max_abs_diff(&e.permute(&s).unwrap()).unwrap() <= 1e-12 * v);
        }
    }

    #[test]
    fn lexicographic_profiles() {
        let first = ExponentProfile::lexicographic(1, 2, 3, 0).unwrap();
        assert_eq!(first.exponents(), &[1, 1]);
        assert_eq!(
            ExponentProfile::lexicographic(1, 2, 3, 1)
                .unwrap()
                .exponents(),
            &[1, 2]
        );
        assert_eq!(
            ExponentProfile::lexicographic(1, 2, 3, 3)
                .unwrap()
                .exponents(),
            &[2, 1]
        );
        assert!(ExponentProfile::lexicographic(1, 2, 3, 9).is_none());
    }

    #[test]
    fn isomorphic_pairs_are_not_separated() {
        let mut r = rng(4);
        let g = generate_with_rng(Topology::Cycle, 4, 1.0, true, &mut r)
            .unwrap()
            .graph;
        let s = Permutation::random(4, &mut r);
        let out = separate(&g, &g.permute(&s).unwrap(), &SeparationBudget::default()).unwrap();
        match out {
            Separation::NotSeparated { isomorphism } => assert!(isomorphism.is_some()),
            other => panic!("separated isomorphic graphs: {other:?}"),
        }
    }

    #[test]
    fn path_star_and_sizes_are_separated() {
        let b = SeparationBudget::default();
        let out = separate(&unit(Topology::Path, 4), &unit(Topology::Star, 4), &b).unwrap();
        match &out {
            Separation::Separated(w) => assert!(w.stage == 2 || w.stage == 3),
            other => panic!("{other:?}"),
        }
        let out = separate(&DenseTensor::zeros(2, 2), &DenseTensor::zeros(2, 3), &b).unwrap();
        match out {
            Separation::Separated(w) => assert_eq!(w.stage, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lemma_examples() {
        let b = SeparationBudget::default();
        let a = DenseTensor::from_matrix(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let t = DenseTensor::from_matrix(&[vec![1.0, 3.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(
            check_multiset_lemma(&a, &t, &b).unwrap(),
            LemmaVerdict::Separated { .. }
        ));
        let s = a.permute(&Permutation::swap(2, 0, 1)).unwrap();
        assert!(matches!(
            check_multiset_lemma(&a, &s, &b).unwrap(),
            LemmaVerdict::Aligned { .. }
        ));
        assert!(matches!(
            check_multiset_lemma(&a, &a.scale(2.0), &b),
            Err(Error::Precondition(_))
        ));
    }
}
