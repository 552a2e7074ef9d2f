//! Dense order-k tensors over `[n]^k`, the node-relabeling action, and the
//! pointwise non-linearities.
//!
//! Storage is row-major: the last index varies fastest. All indices are
//! 0-based in code and in serialized files.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partitions::DEFAULT_ARITY_CAP;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTensor")]
pub struct DenseTensor {
    order: usize,
    n: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawTensor {
    order: usize,
    n: usize,
    data: Vec<f64>,
}

impl TryFrom<RawTensor> for DenseTensor {
    type Error = Error;

    fn try_from(raw: RawTensor) -> Result<Self> {
        DenseTensor::new(raw.order, raw.n, raw.data)
    }
}

/// Number of entries of an order-`order` tensor over `[n]`, if it fits.
pub fn element_count(order: usize, n: usize) -> Option<usize> {
    n.checked_pow(u32::try_from(order).ok()?)
}

/// Row-major strides for `order` axes of length `n`.
pub fn strides(order: usize, n: usize) -> Vec<usize> {
    let mut s = vec![1usize; order];
    for a in (0..order.saturating_sub(1)).rev() {
        s[a] = s[a + 1] * n;
    }
    s
}

impl DenseTensor {
    pub fn new(order: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidTensor("side length must be >= 1".into()));
        }
        let len = element_count(order, n)
            .ok_or_else(|| Error::InvalidTensor(format!("n^k overflows for n={n}, k={order}")))?;
        if data.len() != len {
            return Err(Error::InvalidTensor(format!(
                "order {order}, n {n} needs {len} values, got {}",
                data.len()
            )));
        }
        Ok(Self { order, n, data })
    }

    pub fn filled(order: usize, n: usize, value: f64) -> Self {
        assert!(n >= 1, "side length must be >= 1");
        let len = element_count(order, n).expect("tensor too large");
        Self {
            order,
            n,
            data: vec![value; len],
        }
    }

    pub fn zeros(order: usize, n: usize) -> Self {
        Self::filled(order, n, 0.0)
    }

    pub fn ones(order: usize, n: usize) -> Self {
        Self::filled(order, n, 1.0)
    }

    /// Order-0 tensor. `n` is carried so it can be combined with order-k
    /// tensors on the same node set.
    pub fn scalar(value: f64, n: usize) -> Self {
        Self::filled(0, n, value)
    }

    pub fn from_fn(order: usize, n: usize, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = Self::zeros(order, n);
        let mut idx = vec![0usize; order];
        for flat in 0..t.data.len() {
            t.data[flat] = f(&idx);
            increment(&mut idx, n);
        }
        t
    }

    pub fn from_matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::InvalidTensor("matrix must be square".into()));
            }
            data.extend_from_slice(r);
        }
        Self::new(2, n, data)
    }

    pub fn from_vector(v: &[f64]) -> Result<Self> {
        Self::new(1, v.len(), v.to_vec())
    }

    pub fn random_uniform<R: Rng + ?Sized>(
        order: usize,
        n: usize,
        lo: f64,
        hi: f64,
        rng: &mut R,
    ) -> Self {
        let mut t = Self::zeros(order, n);
        for v in &mut t.data {
            *v = rng.random_range(lo..hi);
        }
        t
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn strides(&self) -> Vec<usize> {
        strides(self.order, self.n)
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.order);
        idx.iter().fold(0, |acc, &i| {
            debug_assert!(i < self.n);
            acc * self.n + i
        })
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0usize; self.order];
        for a in (0..self.order).rev() {
            idx[a] = flat % self.n;
            flat /= self.n;
        }
        idx
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.flat_index(idx)]
    }

    /// Value of an order-0 tensor, or the single entry of a 1-element tensor.
    pub fn as_scalar(&self) -> Option<f64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    fn check_same_shape(&self, other: &DenseTensor, what: &str) -> Result<()> {
        if self.order != other.order || self.n != other.n {
            return Err(Error::ShapeMismatch(format!(
                "{what}: (order {}, n {}) vs (order {}, n {})",
                self.order, self.n, other.order, other.n
            )));
        }
        Ok(())
    }

    /// `sigma ⋆ self`: the output satisfies `T[σ(i1),…,σ(ik)] = G[i1,…,ik]`.
    pub fn permute(&self, sigma: &Permutation) -> Result<DenseTensor> {
        if sigma.len() != self.n {
            return Err(Error::PermutationSizeMismatch {
                perm: sigma.len(),
                tensor: self.n,
            });
        }
        let stride = self.strides();
        // offsets[a][i] = σ(i) * stride[a]
        let offsets: Vec<Vec<usize>> = stride
            .iter()
            .map(|&s| sigma.as_slice().iter().map(|&j| j * s).collect())
            .collect();
        let mut out = vec![0.0; self.data.len()];
        let mut idx = vec![0usize; self.order];
        for &v in &self.data {
            let dest: usize = idx.iter().enumerate().map(|(a, &i)| offsets[a][i]).sum();
            out[dest] = v;
            increment(&mut idx, self.n);
        }
        Ok(DenseTensor {
            order: self.order,
            n: self.n,
            data: out,
        })
    }

    /// Kronecker (outer) product; orders add.
    pub fn kron(&self, other: &DenseTensor) -> Result<DenseTensor> {
        if self.n != other.n {
            return Err(Error::ShapeMismatch(format!(
                "kron: side {} vs {}",
                self.n, other.n
            )));
        }
        let order = self.order + other.order;
        if order > DEFAULT_ARITY_CAP {
            return Err(Error::ArityTooLarge {
                arity: order,
                cap: DEFAULT_ARITY_CAP,
            });
        }
        let mut data = Vec::with_capacity(self.data.len() * other.data.len());
        for &a in &self.data {
            data.extend(other.data.iter().map(|&b| a * b));
        }
        DenseTensor::new(order, self.n, data)
    }

    pub fn hadamard(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.check_same_shape(other, "hadamard")?;
        Ok(self.zip_map(other, |a, b| a * b))
    }

    pub fn add(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.check_same_shape(other, "add")?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.check_same_shape(other, "sub")?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    pub fn scale(&self, factor: f64) -> DenseTensor {
        self.map(|v| v * factor)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseTensor {
        DenseTensor {
            order: self.order,
            n: self.n,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip_map(&self, other: &DenseTensor, f: impl Fn(f64, f64) -> f64) -> DenseTensor {
        DenseTensor {
            order: self.order,
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn inner(&self, other: &DenseTensor) -> Result<f64> {
        self.check_same_shape(other, "inner")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn apply_pointwise(&self, rho: Activation) -> DenseTensor {
        self.map(|v| rho.eval(v))
    }

    pub fn norms(&self) -> Norms {
        let mut l1 = 0.0;
        let mut linf: f64 = 0.0;
        for &v in &self.data {
            l1 += v.abs();
            linf = linf.max(v.abs());
        }
        Norms { l1, linf }
    }

    /// Max absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &DenseTensor) -> Result<f64> {
        self.check_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Embeds into `new_n >= n` nodes; entries touching new nodes are zero.
    pub fn pad_to(&self, new_n: usize) -> Result<DenseTensor> {
        if new_n < self.n {
            return Err(Error::ShapeMismatch(format!(
                "cannot pad {} nodes down to {new_n}",
                self.n
            )));
        }
        let mut out = DenseTensor::zeros(self.order, new_n);
        let mut idx = vec![0usize; self.order];
        for &v in &self.data {
            let flat = out.flat_index(&idx);
            out.data[flat] = v;
            increment(&mut idx, self.n);
        }
        Ok(out)
    }
}

/// Advances a row-major multi-index over `[n]^k`, wrapping to all zeros.
pub fn increment(idx: &mut [usize], n: usize) {
    for a in (0..idx.len()).rev() {
        idx[a] += 1;
        if idx[a] < n {
            return;
        }
        idx[a] = 0;
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms {
    pub l1: f64,
    pub linf: f64,
}

/// A bijection of `[n]`, stored as the image of each node.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation {
    map: Vec<usize>,
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(map: Vec<usize>) -> Result<Self> {
        Permutation::new(map)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.map
    }
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        let mut seen = vec![false; n];
        for &j in &map {
            if j >= n || seen[j] {
                return Err(Error::InvalidPermutation(format!(
                    "{map:?} is not a bijection of 0..{n}"
                )));
            }
            seen[j] = true;
        }
        Ok(Self { map })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            map: (0..n).collect(),
        }
    }

    /// Transposition of nodes `a` and `b`.
    pub fn swap(n: usize, a: usize, b: usize) -> Self {
        let mut map: Vec<usize> = (0..n).collect();
        map.swap(a, b);
        Self { map }
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut map: Vec<usize> = (0..n).collect();
        map.shuffle(rng);
        Self { map }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn apply(&self, i: usize) -> usize {
        self.map[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &j)| i == j)
    }

    /// `self ∘ other`: first `other`, then `self`.
    pub fn compose(&self, other: &Permutation) -> Result<Permutation> {
        if self.len() != other.len() {
            return Err(Error::PermutationSizeMismatch {
                perm: other.len(),
                tensor: self.len(),
            });
        }
        Ok(Permutation {
            map: other.map.iter().map(|&j| self.map[j]).collect(),
        })
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.map.len()];
        for (i, &j) in self.map.iter().enumerate() {
            inv[j] = i;
        }
        Permutation { map: inv }
    }

    /// Permutation matrix `P` with `P[σ(i), i] = 1`, so `σ⋆G = P G Pᵀ`.
    pub fn matrix(&self) -> DenseTensor {
        let n = self.len();
        let mut m = DenseTensor::zeros(2, n);
        for (i, &j) in self.map.iter().enumerate() {
            m.data[j * n + i] = 1.0;
        }
        m
    }

    /// All permutations of `[n]` in lexicographic order of their image arrays.
    pub fn all(n: usize) -> AllPermutations {
        AllPermutations {
            next: Some((0..n).collect()),
        }
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.map)
    }
}

pub struct AllPermutations {
    next: Option<Vec<usize>>,
}

impl Iterator for AllPermutations {
    type Item = Permutation;

    fn next(&mut self) -> Option<Permutation> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        if next_permutation(&mut succ) {
            self.next = Some(succ);
        }
        Some(Permutation { map: current })
    }
}

/// In-place lexicographic successor; returns false after the last permutation.
pub fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Pointwise non-linearity ρ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Cos,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Cos => x.cos(),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative; `relu'(0) = 0`.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Cos => -x.sin(),
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Same as [`Activation::derivative`] at `x`, given `y = self.eval(x)`.
    #[inline]
    pub fn derivative_given(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            _ => self.derivative(x),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Cos => "cos",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" | "sig" => Ok(Activation::Sigmoid),
            "cos" => Ok(Activation::Cos),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }
}

/// `eˣ/(1+eˣ)`, evaluated without overflow on either tail.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    // same two formulas as a branch on the sign, written as a select
    let e = (-x.abs()).exp();
    let num = if x >= 0.0 { 1.0 } else { e };
    num / (1.0 + e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    /// Direct tuple-wise definition of the action, independent of `permute`.
    fn permute_by_definition(g: &DenseTensor, sigma: &Permutation) -> DenseTensor {
        let mut out = DenseTensor::zeros(g.order(), g.n());
        let mut idx = vec![0; g.order()];
        for flat in 0..g.len() {
            let image: Vec<usize> = idx.iter().map(|&i| sigma.apply(i)).collect();
            let dest = out.flat_index(&image);
            out.data[dest] = g.data()[flat];
            increment(&mut idx, g.n());
        }
        out
    }

    fn matmul(a: &DenseTensor, b: &DenseTensor) -> DenseTensor {
        let n = a.n();
        DenseTensor::from_fn(2, n, |ij| {
            (0..n)
                .map(|k| a.get(&[ij[0], k]) * b.get(&[k, ij[1]]))
                .sum()
        })
    }

    fn transpose(a: &DenseTensor) -> DenseTensor {
        DenseTensor::from_fn(2, a.n(), |ij| a.get(&[ij[1], ij[0]]))
    }

    #[test]
    fn identity_action() {
        let g = DenseTensor::random_uniform(3, 4, -1.0, 1.0, &mut rng());
        assert_eq!(g.permute(&Permutation::identity(4)).unwrap(), g);
    }

    #[test]
    fn swap_on_two_by_two() {
        let g = DenseTensor::from_matrix(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let sigma = Permutation::swap(2, 0, 1);
        let t = g.permute(&sigma).unwrap();
        assert_eq!(t.data(), &[4.0, 3.0, 2.0, 1.0]);
        let p = sigma.matrix();
        assert_eq!(matmul(&matmul(&p, &g), &transpose(&p)), t);
    }

    #[test]
    fn matches_definition_and_pgpt() {
        let mut r = rng();
        for n in 1..=5 {
            for order in 0..=3 {
                let g = DenseTensor::random_uniform(order, n, -1.0, 1.0, &mut r);
                let sigma = Permutation::random(n, &mut r);
                let t = g.permute(&sigma).unwrap();
                assert_eq!(t, permute_by_definition(&g, &sigma));
                if order == 2 {
                    let p = sigma.matrix();
                    let pgpt = matmul(&matmul(&p, &g), &transpose(&p));
                    assert!(t.max_abs_diff(&pgpt).unwrap() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn composition_law() {
        let mut r = rng();
        for n in 1..=5 {
            for order in 0..=3 {
                let g = DenseTensor::random_uniform(order, n, -1.0, 1.0, &mut r);
                let sigma = Permutation::random(n, &mut r);
                let tau = Permutation::random(n, &mut r);
                let lhs = g.permute(&sigma).unwrap().permute(&tau).unwrap();
                let rhs = g.permute(&tau.compose(&sigma).unwrap()).unwrap();
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn permute_size_mismatch() {
        let g = DenseTensor::zeros(2, 3);
        assert!(matches!(
            g.permute(&Permutation::identity(4)),
            Err(Error::PermutationSizeMismatch { perm: 4, tensor: 3 })
        ));
    }

    #[test]
    fn kron_products() {
        let x = DenseTensor::from_vector(&[1.0, 2.0]).unwrap();
        let y = DenseTensor::from_vector(&[3.0, 4.0]).unwrap();
        let xy = x.kron(&y).unwrap();
        assert_eq!(xy.order(), 2);
        assert_eq!(xy.data(), &[3.0, 4.0, 6.0, 8.0]);
        let one = DenseTensor::scalar(1.0, 2);
        assert_eq!(x.kron(&one).unwrap(), x);
        assert!(x.kron(&DenseTensor::zeros(1, 3)).is_err());
        let big = DenseTensor::zeros(5, 2);
        assert!(matches!(big.kron(&big), Err(Error::ArityTooLarge { .. })));
    }

    #[test]
    fn kron_equivariance_and_bilinearity() {
        let mut r = rng();
        for _ in 0..10 {
            let a = DenseTensor::random_uniform(2, 3, -1.0, 1.0, &mut r);
            let a2 = DenseTensor::random_uniform(2, 3, -1.0, 1.0, &mut r);
            let b = DenseTensor::random_uniform(2, 3, -1.0, 1.0, &mut r);
            let sigma = Permutation::random(3, &mut r);
            let lhs = a
                .permute(&sigma)
                .unwrap()
                .kron(&b.permute(&sigma).unwrap())
                .unwrap();
            let rhs = a.kron(&b).unwrap().permute(&sigma).unwrap();
            assert_eq!(lhs, rhs);

            let s = 1.7;
            let combo = a.scale(s).add(&a2).unwrap().kron(&b).unwrap();
            let split = a
                .kron(&b)
                .unwrap()
                .scale(s)
                .add(&a2.kron(&b).unwrap())
                .unwrap();
            assert!(combo.max_abs_diff(&split).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn hadamard_products() {
        let x = DenseTensor::from_vector(&[1.0, 2.0]).unwrap();
        let y = DenseTensor::from_vector(&[3.0, 4.0]).unwrap();
        assert_eq!(x.hadamard(&y).unwrap().data(), &[3.0, 8.0]);
        assert_eq!(x.hadamard(&DenseTensor::ones(1, 2)).unwrap(), x);
        assert!(x.hadamard(&DenseTensor::ones(2, 2)).is_err());
        let mut r = rng();
        let a = DenseTensor::random_uniform(1, 4, -1.0, 1.0, &mut r);
        let b = DenseTensor::random_uniform(1, 4, -1.0, 1.0, &mut r);
        let sigma = Permutation::random(4, &mut r);
        let lhs = a
            .permute(&sigma)
            .unwrap()
            .hadamard(&b.permute(&sigma).unwrap())
            .unwrap();
        assert_eq!(lhs, a.hadamard(&b).unwrap().permute(&sigma).unwrap());
    }

    #[test]
    fn activations() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(40.0) - 1.0).abs() <= 1e-15);
        assert!(sigmoid(-40.0).abs() <= 1e-15);
        assert!(sigmoid(-800.0).is_finite() && sigmoid(800.0).is_finite());
        let z = DenseTensor::zeros(2, 3);
        assert_eq!(z.apply_pointwise(Activation::Cos), DenseTensor::ones(2, 3));
        assert_eq!(Activation::Relu.derivative(0.0), 0.0);
        for rho in [Activation::Sigmoid, Activation::Cos, Activation::Tanh] {
            for &x in &[-2.0, -0.3, 0.4, 1.9] {
                let h = 1e-6;
                let fd = (rho.eval(x + h) - rho.eval(x - h)) / (2.0 * h);
                assert!((fd - rho.derivative(x)).abs() < 1e-8, "{rho:?} at {x}");
            }
        }
    }

    #[test]
    fn norms_and_invariance() {
        let g = DenseTensor::from_matrix(&[vec![1.0, -2.0], vec![0.0, 3.0]]).unwrap();
        assert_eq!(g.norms(), Norms { l1: 6.0, linf: 3.0 });
        assert_eq!(
            DenseTensor::zeros(2, 4).norms(),
            Norms { l1: 0.0, linf: 0.0 }
        );
        let mut r = rng();
        for _ in 0..20 {
            let g = DenseTensor::random_uniform(3, 4, -1.0, 1.0, &mut r);
            let sigma = Permutation::random(4, &mut r);
            let p = g.permute(&sigma).unwrap();
            // element multiset unchanged, so sums agree up to reassociation, max exactly
            assert!((p.norms().l1 - g.norms().l1).abs() <= 1e-12);
            assert_eq!(p.norms().linf, g.norms().linf);
        }
    }

    #[test]
    fn json_shape_validated() {
        let t: DenseTensor = serde_json::from_str(r#"{"order":1,"n":2,"data":[1.0,2.0]}"#).unwrap();
        assert_eq!(t.data(), &[1.0, 2.0]);
        assert!(serde_json::from_str::<DenseTensor>(r#"{"order":2,"n":2,"data":[1.0]}"#).is_err());
        assert_eq!(
            serde_json::to_string(&t).unwrap(),
            r#"{"order":1,"n":2,"data":[1.0,2.0]}"#
        );
    }

    #[test]
    fn permutations_enumerate_lexicographically() {
        let all: Vec<Vec<usize>> = Permutation::all(3).map(|p| p.as_slice().to_vec()).collect();
        assert_eq!(all.len(), 6);
        assert_eq!(all[0], vec![0, 1, 2]);
        assert_eq!(all[5], vec![2, 1, 0]);
        assert_eq!(Permutation::all(0).count(), 1);
        assert_eq!(Permutation::all(5).count(), 120);
        assert!(Permutation::new(vec![0, 0]).is_err());
        let p = Permutation::new(vec![2, 0, 1]).unwrap();
        assert!(p.compose(&p.inverse()).unwrap().is_identity());
    }

    #[test]
    fn padding() {
        let g = DenseTensor::from_matrix(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let p = g.pad_to(3).unwrap();
        assert_eq!(p.data(), &[1.0, 2.0, 0.0, 3.0, 4.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(g.pad_to(1).is_err());
    }
}
