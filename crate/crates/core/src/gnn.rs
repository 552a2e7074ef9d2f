//! One-hidden-layer invariant and equivariant networks
//! `f(G) = Σ_s H_s[ρ(F_s[G] + B_s)] + b`, their tensorized variant, and a
//! hand-written backward pass.
//!
//! Outputs are carried as [`DenseTensor`]s of order 0 (invariant mode) or 1
//! (equivariant mode) so that both modes share one code path.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::equilinear::{Batch, EquivariantBias, EquivariantMap, BASIS_NAME};
use crate::error::{Error, Result};
use crate::partitions::enumerate_partitions;
use crate::rng::{self, Stream};
use crate::tensor::{Activation, DenseTensor};

pub const MODEL_FORMAT: &str = "permtensor-model-v1";

/// Reference node count used to scale initial coefficients.
pub const INIT_REFERENCE_N: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Invariant,
    Equivariant,
}

impl Mode {
    pub fn output_order(self) -> usize {
        match self {
            Mode::Invariant => 0,
            Mode::Equivariant => 1,
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inv" | "invariant" => Ok(Mode::Invariant),
            "eq" | "equivariant" => Ok(Mode::Equivariant),
            _ => Err(Error::Config(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitScheme {
    UniformScaled,
    Gaussian,
}

impl std::str::FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform_scaled" => Ok(InitScheme::UniformScaled),
            "gaussian" => Ok(InitScheme::Gaussian),
            _ => Err(Error::Config(format!("unknown init scheme {s:?}"))),
        }
    }
}

/// `H[ρ(F[G] + B)]`. The readout `H` maps order `k_s` to the model's output
/// order (0 or 1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    #[serde(rename = "F")]
    pub feature: EquivariantMap,
    #[serde(rename = "B")]
    pub bias: EquivariantBias,
    #[serde(rename = "H")]
    pub readout: EquivariantMap,
}

impl Channel {
    pub fn order(&self) -> usize {
        self.feature.out_order()
    }

    fn validate(&self, input_order: usize, mode: Mode) -> Result<()> {
        let ks = self.feature.out_order();
        if self.feature.in_order() != input_order {
            return Err(Error::OrderMismatch {
                expected: input_order,
                actual: self.feature.in_order(),
            });
        }
        if self.bias.order() != ks || self.readout.in_order() != ks {
            return Err(Error::ShapeMismatch(format!(
                "channel orders disagree: F out {ks}, B {}, H in {}",
                self.bias.order(),
                self.readout.in_order()
            )));
        }
        if self.readout.out_order() != mode.output_order() {
            return Err(Error::OrderMismatch {
                expected: mode.output_order(),
                actual: self.readout.out_order(),
            });
        }
        Ok(())
    }
}

/// Shape of a model without its parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skeleton {
    pub input_order: usize,
    pub mode: Mode,
    pub activation: Activation,
    pub channel_orders: Vec<usize>,
}

impl Skeleton {
    pub fn new(
        input_order: usize,
        mode: Mode,
        activation: Activation,
        channel_orders: Vec<usize>,
    ) -> Self {
        Self {
            input_order,
            mode,
            activation,
            channel_orders,
        }
    }

    /// `width` channels that all have order `k`.
    pub fn uniform(
        input_order: usize,
        mode: Mode,
        activation: Activation,
        k: usize,
        width: usize,
    ) -> Self {
        Self::new(input_order, mode, activation, vec![k; width])
    }

    fn channel_lens(&self, ks: usize) -> Result<(usize, usize, usize)> {
        Ok((
            EquivariantMap::basis_len(self.input_order, ks)?,
            EquivariantMap::basis_len(0, ks)?,
            EquivariantMap::basis_len(ks, self.mode.output_order())?,
        ))
    }

    pub fn param_len(&self) -> Result<usize> {
        let mut len = 1;
        for &ks in &self.channel_orders {
            let (f, b, h) = self.channel_lens(ks)?;
            len += f + b + h;
        }
        Ok(len)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GnnModel {
    input_order: usize,
    mode: Mode,
    activation: Activation,
    channels: Vec<Channel>,
    bias: f64,
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct Trace {
    pre: Vec<DenseTensor>,
    act: Vec<DenseTensor>,
    pub output: DenseTensor,
}

impl GnnModel {
    pub fn new(
        input_order: usize,
        mode: Mode,
        activation: Activation,
        channels: Vec<Channel>,
        bias: f64,
    ) -> Result<Self> {
        for c in &channels {
            c.validate(input_order, mode)?;
        }
        Ok(Self {
            input_order,
            mode,
            activation,
            channels,
            bias,
        })
    }

    pub fn input_order(&self) -> usize {
        self.input_order
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn skeleton(&self) -> Skeleton {
        Skeleton::new(
            self.input_order,
            self.mode,
            self.activation,
            self.channels.iter().map(Channel::order).collect(),
        )
    }

    fn check_input(&self, g: &DenseTensor) -> Result<()> {
        if g.order() != self.input_order {
            return Err(Error::OrderMismatch {
                expected: self.input_order,
                actual: g.order(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, g: &DenseTensor) -> Result<DenseTensor> {
        Ok(self.forward_trace(g)?.output)
    }

    /// Invariant-mode convenience; errors in equivariant mode.
    pub fn forward_scalar(&self, g: &DenseTensor) -> Result<f64> {
        if self.mode != Mode::Invariant {
            return Err(Error::OrderMismatch {
                expected: 1,
                actual: 0,
            });
        }
        Ok(self.forward(g)?.data()[0])
    }

    /// Channels grouped by order, each group in channel order, so that one
    /// batched kernel call serves a whole group.
    fn order_groups(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, c) in self.channels.iter().enumerate() {
            groups.entry(c.order()).or_default().push(i);
        }
        groups
    }

    pub fn forward_trace(&self, g: &DenseTensor) -> Result<Trace> {
        self.check_input(g)?;
        let n = g.n();
        let count = self.channels.len();
        let mut pre = vec![None; count];
        let mut act = vec![None; count];
        let mut ys = vec![None; count];
        for idx in self.order_groups().values() {
            let chans: Vec<&Channel> = idx.iter().map(|&i| &self.channels[i]).collect();
            let feats: Vec<&EquivariantMap> = chans.iter().map(|c| &c.feature).collect();
            let biases: Vec<&EquivariantBias> = chans.iter().map(|c| &c.bias).collect();
            let fz = EquivariantMap::apply_batch(&feats, Batch::Shared(g))?;
            let bz = EquivariantBias::materialize_batch(&biases, n)?;
            let zs: Vec<DenseTensor> = fz
                .iter()
                .zip(&bz)
                .map(|(f, b)| f.add(b))
                .collect::<Result<_>>()?;
            let a: Vec<DenseTensor> = zs
                .iter()
                .map(|z| z.apply_pointwise(self.activation))
                .collect();
            let a_refs: Vec<&DenseTensor> = a.iter().collect();
            let readouts: Vec<&EquivariantMap> = chans.iter().map(|c| &c.readout).collect();
            let y = EquivariantMap::apply_batch(&readouts, Batch::Each(&a_refs))?;
            for ((&i, z), (a, y)) in idx.iter().zip(zs).zip(a.into_iter().zip(y)) {
                pre[i] = Some(z);
                act[i] = Some(a);
                ys[i] = Some(y);
            }
        }
        let mut out = vec![self.bias; n.pow(self.mode.output_order() as u32)];
        for y in ys.iter().flatten() {
            for (o, v) in out.iter_mut().zip(y.data()) {
                *o += v;
            }
        }
        Ok(Trace {
            pre: pre.into_iter().flatten().collect(),
            act: act.into_iter().flatten().collect(),
            output: DenseTensor::new(self.mode.output_order(), n, out)?,
        })
    }

    /// `∂⟨f(G), upstream⟩ / ∂θ` in flatten order.
    pub fn gradient(&self, g: &DenseTensor, upstream: &DenseTensor) -> Result<Vec<f64>> {
        let trace = self.forward_trace(g)?;
        self.backward(g, &trace, upstream)
    }

    pub fn backward(
        &self,
        g: &DenseTensor,
        trace: &Trace,
        upstream: &DenseTensor,
    ) -> Result<Vec<f64>> {
        self.check_input(g)?;
        if upstream.order() != self.mode.output_order() || upstream.n() != g.n() {
            return Err(Error::ShapeMismatch(format!(
                "upstream must have order {} and n {}",
                self.mode.output_order(),
                g.n()
            )));
        }
        if trace.pre.len() != self.channels.len() {
            return Err(Error::ShapeMismatch("trace from another model".into()));
        }
        let out = self.mode.output_order();
        let rho = self.activation;
        let mut per_channel: Vec<Vec<f64>> = vec![Vec::new(); self.channels.len()];
        for (&ks, idx) in &self.order_groups() {
            let readouts: Vec<&EquivariantMap> =
                idx.iter().map(|&i| &self.channels[i].readout).collect();
            let vs = EquivariantMap::adjoint_batch(&readouts, upstream)?;
            let ws: Vec<DenseTensor> = idx
                .iter()
                .zip(&vs)
                .map(|(&i, v)| {
                    let (z, a) = (&trace.pre[i], &trace.act[i]);
                    DenseTensor::new(
                        ks,
                        g.n(),
                        v.data()
                            .iter()
                            .zip(z.data().iter().zip(a.data()))
                            .map(|(&vi, (&zi, &ai))| vi * rho.derivative_given(zi, ai))
                            .collect(),
                    )
                })
                .collect::<Result<_>>()?;
            let w_refs: Vec<&DenseTensor> = ws.iter().collect();
            let a_refs: Vec<&DenseTensor> = idx.iter().map(|&i| &trace.act[i]).collect();
            let fg = EquivariantMap::coeff_gradient_batch(
                self.input_order,
                ks,
                Batch::Shared(g),
                Batch::Each(&w_refs),
            )?;
            let bg = EquivariantBias::coeff_gradient_batch(ks, &w_refs)?;
            let hg = EquivariantMap::coeff_gradient_batch(
                ks,
                out,
                Batch::Each(&a_refs),
                Batch::Shared(upstream),
            )?;
            for (&i, ((f, b), h)) in idx.iter().zip(fg.into_iter().zip(bg).zip(hg)) {
                let slot = &mut per_channel[i];
                slot.extend(f);
                slot.extend(b);
                slot.extend(h);
            }
        }
        let mut grad = Vec::with_capacity(self.skeleton().param_len()?);
        for part in per_channel {
            grad.extend(part);
        }
        grad.push(upstream.sum());
        Ok(grad)
    }

    pub fn flatten_params(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for c in &self.channels {
            v.extend_from_slice(c.feature.coeffs());
            v.extend_from_slice(c.bias.coeffs());
            v.extend_from_slice(c.readout.coeffs());
        }
        v.push(self.bias);
        v
    }

    pub fn unflatten_params(skeleton: &Skeleton, params: &[f64]) -> Result<Self> {
        let expected = skeleton.param_len()?;
        if params.len() != expected {
            return Err(Error::ParamLength {
                expected,
                actual: params.len(),
            });
        }
        let mut rest = params;
        let mut take = |len: usize| {
            let (head, tail) = rest.split_at(len);
            rest = tail;
            head.to_vec()
        };
        let out = skeleton.mode.output_order();
        let mut channels = Vec::with_capacity(skeleton.channel_orders.len());
        for &ks in &skeleton.channel_orders {
            let (f, b, h) = skeleton.channel_lens(ks)?;
            channels.push(Channel {
                feature: EquivariantMap::new(skeleton.input_order, ks, take(f))?,
                bias: EquivariantBias::new(ks, take(b))?,
                readout: EquivariantMap::new(ks, out, take(h))?,
            });
        }
        let bias = take(1)[0];
        Self::new(
            skeleton.input_order,
            skeleton.mode,
            skeleton.activation,
            channels,
            bias,
        )
    }

    /// Coefficients of a map with input order `k` are drawn with scale
    /// `1/√(5^k)`; the global bias starts at zero.
    pub fn init_params(skeleton: &Skeleton, seed: u64, scheme: InitScheme) -> Result<Self> {
        let mut r = rng::stream(seed, Stream::Init, 0, 0);
        let mut draw = |len: usize, in_order: usize| -> Vec<f64> {
            let scale = INIT_REFERENCE_N.powi(in_order as i32).sqrt().recip();
            match scheme {
                InitScheme::UniformScaled => {
                    (0..len).map(|_| r.random_range(-scale..scale)).collect()
                }
                InitScheme::Gaussian => {
                    let normal = Normal::new(0.0, scale).expect("positive scale");
                    (0..len).map(|_| normal.sample(&mut r)).collect()
                }
            }
        };
        let mut params = Vec::with_capacity(skeleton.param_len()?);
        for &ks in &skeleton.channel_orders {
            let (f, b, h) = skeleton.channel_lens(ks)?;
            params.extend(draw(f, skeleton.input_order));
            params.extend(draw(b, 0));
            params.extend(draw(h, ks));
        }
        params.push(0.0);
        Self::unflatten_params(skeleton, &params)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelFile::from_model(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        file.into_model()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    mode: Mode,
    activation: Activation,
    input_order: usize,
    basis: String,
    /// Canonical partition order (restricted growth strings) for every
    /// arity a coefficient vector in this file is indexed by.
    partitions: BTreeMap<String, Vec<String>>,
    channels: Vec<Channel>,
    bias: f64,
}

fn partition_table(
    arities: impl IntoIterator<Item = usize>,
) -> Result<BTreeMap<String, Vec<String>>> {
    let mut table = BTreeMap::new();
    for m in arities {
        let parts = enumerate_partitions(m)?;
        table.insert(m.to_string(), parts.iter().map(|p| p.to_string()).collect());
    }
    Ok(table)
}

fn used_arities(input_order: usize, mode: Mode, orders: &[usize]) -> Vec<usize> {
    let mut arities: Vec<usize> = orders
        .iter()
        .flat_map(|&ks| [input_order + ks, ks, ks + mode.output_order()])
        .collect();
    arities.sort_unstable();
    arities.dedup();
    arities
}

impl ModelFile {
    fn from_model(m: &GnnModel) -> Self {
        let orders: Vec<usize> = m.channels.iter().map(Channel::order).collect();
        let partitions = partition_table(used_arities(m.input_order, m.mode, &orders))
            .expect("validated model orders are within the arity cap");
        ModelFile {
            format: MODEL_FORMAT.to_string(),
            mode: m.mode,
            activation: m.activation,
            input_order: m.input_order,
            basis: BASIS_NAME.to_string(),
            partitions,
            channels: m.channels.clone(),
            bias: m.bias,
        }
    }

    fn into_model(self) -> Result<GnnModel> {
        if self.format != MODEL_FORMAT {
            return Err(Error::Format(format!(
                "unsupported model format {:?}",
                self.format
            )));
        }
        if self.basis != BASIS_NAME {
            return Err(Error::Format(format!("unsupported basis {:?}", self.basis)));
        }
        let orders: Vec<usize> = self.channels.iter().map(Channel::order).collect();
        let expected = partition_table(used_arities(self.input_order, self.mode, &orders))?;
        for (arity, list) in &self.partitions {
            let m: usize = arity
                .parse()
                .map_err(|_| Error::Format(format!("bad arity key {arity:?}")))?;
            let canon = partition_table([m])?;
            if canon.get(arity) != Some(list) {
                return Err(Error::Format(format!(
                    "partition order for arity {m} does not match"
                )));
            }
        }
        for arity in expected.keys() {
            if !self.partitions.contains_key(arity) {
                return Err(Error::Format(format!(
                    "missing partition order for arity {arity}"
                )));
            }
        }
        GnnModel::new(
            self.input_order,
            self.mode,
            self.activation,
            self.channels,
            self.bias,
        )
    }
}

/// One channel of `H[ρ(F_1[G]+B_1) ⊗ … ⊗ ρ(F_T[G]+B_T)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorizedChannel {
    pub factors: Vec<(EquivariantMap, EquivariantBias)>,
    pub readout: EquivariantMap,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorizedModel {
    input_order: usize,
    mode: Mode,
    activation: Activation,
    channels: Vec<TensorizedChannel>,
    bias: f64,
}

impl TensorizedModel {
    pub fn new(
        input_order: usize,
        mode: Mode,
        activation: Activation,
        channels: Vec<TensorizedChannel>,
        bias: f64,
    ) -> Result<Self> {
        for c in &channels {
            let mut total = 0;
            for (f, b) in &c.factors {
                if f.in_order() != input_order {
                    return Err(Error::OrderMismatch {
                        expected: input_order,
                        actual: f.in_order(),
                    });
                }
                if b.order() != f.out_order() {
                    return Err(Error::ShapeMismatch("factor bias order".into()));
                }
                total += f.out_order();
            }
            if c.readout.in_order() != total || c.readout.out_order() != mode.output_order() {
                return Err(Error::ShapeMismatch(format!(
                    "readout {}->{} does not fit factor orders summing to {total}",
                    c.readout.in_order(),
                    c.readout.out_order()
                )));
            }
        }
        Ok(Self {
            input_order,
            mode,
            activation,
            channels,
            bias,
        })
    }

    /// Every channel becomes a single-factor tensorized channel.
    pub fn from_model(m: &GnnModel) -> Self {
        let channels = m
            .channels
            .iter()
            .map(|c| TensorizedChannel {
                factors: vec![(c.feature.clone(), c.bias.clone())],
                readout: c.readout.clone(),
            })
            .collect();
        Self {
            input_order: m.input_order,
            mode: m.mode,
            activation: m.activation,
            channels,
            bias: m.bias,
        }
    }

    pub fn forward_tensorized(&self, g: &DenseTensor) -> Result<DenseTensor> {
        if g.order() != self.input_order {
            return Err(Error::OrderMismatch {
                expected: self.input_order,
                actual: g.order(),
            });
        }
        let n = g.n();
        let mut out = vec![self.bias; n.pow(self.mode.output_order() as u32)];
        for c in &self.channels {
            let mut feature = DenseTensor::scalar(1.0, n);
            for (f, b) in &c.factors {
                let a = f
                    .apply(g)?
                    .add(&b.materialize(n)?)?
                    .apply_pointwise(self.activation);
                feature = feature.kron(&a)?;
            }
            let y = c.readout.apply(&feature)?;
            for (o, v) in out.iter_mut().zip(y.data()) {
                *o += v;
            }
        }
        DenseTensor::new(self.mode.output_order(), n, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Permutation;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_model(mode: Mode, orders: Vec<usize>, seed: u64, act: Activation) -> GnnModel {
        let sk = Skeleton::new(2, mode, act, orders);
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let p: Vec<f64> = (0..sk.param_len().unwrap())
            .map(|_| r.random_range(-0.5..0.5))
            .collect();
        GnnModel::unflatten_params(&sk, &p).unwrap()
    }

    #[test]
    fn empty_model_is_constant() {
        let sk = Skeleton::new(2, Mode::Invariant, Activation::Sigmoid, vec![]);
        let m = GnnModel::unflatten_params(&sk, &[1.5]).unwrap();
        let g = DenseTensor::ones(2, 3);
        assert_eq!(m.forward_scalar(&g).unwrap(), 1.5);
        assert_eq!(
            m.gradient(&g, &DenseTensor::scalar(1.0, 3)).unwrap(),
            vec![1.0]
        );
    }

    #[test]
    fn zero_feature_gives_half() {
        let sk = Skeleton::new(2, Mode::Invariant, Activation::Sigmoid, vec![1]);
        // F (5) and B (1) zero, H = full sum, b = 0
        let p = vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        let m = GnnModel::unflatten_params(&sk, &p).unwrap();
        let g = DenseTensor::random_uniform(2, 4, 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(m.forward_scalar(&g).unwrap(), 2.0);
    }

    #[test]
    fn param_layout_lengths() {
        let inv = Skeleton::new(2, Mode::Invariant, Activation::Sigmoid, vec![1]);
        assert_eq!(inv.param_len().unwrap(), 8);
        let eq = Skeleton::new(2, Mode::Equivariant, Activation::Sigmoid, vec![2]);
        assert_eq!(eq.param_len().unwrap(), 23);
        let m = random_model(Mode::Equivariant, vec![2, 1, 3], 4, Activation::Tanh);
        let p = m.flatten_params();
        assert_eq!(GnnModel::unflatten_params(&m.skeleton(), &p).unwrap(), m);
        assert!(matches!(
            GnnModel::unflatten_params(&m.skeleton(), &p[1..]),
            Err(Error::ParamLength { .. })
        ));
    }

    #[test]
    fn symmetry() {
        let mut r = ChaCha8Rng::seed_from_u64(9);
        for (i, mode) in [Mode::Invariant, Mode::Equivariant].into_iter().enumerate() {
            let m = random_model(mode, vec![1, 2, 3], 10 + i as u64, Activation::Sigmoid);
            let g = DenseTensor::random_uniform(2, 5, 0.0, 1.0, &mut r);
            let f = m.forward(&g).unwrap();
            for _ in 0..20 {
                let s = Permutation::random(5, &mut r);
                let lhs = m.forward(&g.permute(&s).unwrap()).unwrap();
                let rhs = f.permute(&s).unwrap();
                assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-10);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        for seed in 0..5 {
            for mode in [Mode::Invariant, Mode::Equivariant] {
                let m = random_model(mode, vec![2, 1], 100 + seed, Activation::Sigmoid);
                let g = DenseTensor::random_uniform(2, 4, 0.0, 1.0, &mut r);
                let u = DenseTensor::random_uniform(mode.output_order(), 4, -1.0, 1.0, &mut r);
                let grad = m.gradient(&g, &u).unwrap();
                let p = m.flatten_params();
                let sk = m.skeleton();
                let val = |q: &[f64]| {
                    GnnModel::unflatten_params(&sk, q)
                        .unwrap()
                        .forward(&g)
                        .unwrap()
                        .inner(&u)
                        .unwrap()
                };
                let h = 1e-5;
                for i in 0..p.len() {
                    let mut a = p.clone();
                    let mut b = p.clone();
                    a[i] += h;
                    b[i] -= h;
                    let fd = (val(&a) - val(&b)) / (2.0 * h);
                    let err = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-6);
                    assert!(err <= 1e-4, "coord {i}: {} vs {fd}", grad[i]);
                }
            }
        }
    }

    #[test]
    fn grouped_channels_match_one_at_a_time() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        for mode in [Mode::Invariant, Mode::Equivariant] {
            let m = random_model(mode, vec![1, 2, 1, 1, 3, 1, 2], 21, Activation::Tanh);
            let g = DenseTensor::random_uniform(2, 4, 0.0, 1.0, &mut r);
            let u = DenseTensor::random_uniform(mode.output_order(), 4, -1.0, 1.0, &mut r);
            let mut out = vec![m.bias; u.data().len()];
            let mut grad = Vec::new();
            for c in &m.channels {
                let z = c
                    .feature
                    .apply(&g)
                    .unwrap()
                    .add(&c.bias.materialize(4).unwrap())
                    .unwrap();
                let a = z.apply_pointwise(m.activation);
                for (o, y) in out.iter_mut().zip(c.readout.apply(&a).unwrap().data()) {
                    *o += y;
                }
                let v = c.readout.adjoint(&u).unwrap();
                let w: Vec<f64> = v
                    .data()
                    .iter()
                    .zip(z.data().iter().zip(a.data()))
                    .map(|(&vi, (&zi, &ai))| vi * m.activation.derivative_given(zi, ai))
                    .collect();
                let w = DenseTensor::new(c.order(), 4, w).unwrap();
                grad.extend(EquivariantMap::coeff_gradient(2, c.order(), &g, &w).unwrap());
                grad.extend(EquivariantBias::coeff_gradient(&w).unwrap());
                grad.extend(
                    EquivariantMap::coeff_gradient(c.order(), mode.output_order(), &a, &u).unwrap(),
                );
            }
            grad.push(u.sum());
            assert_eq!(m.forward(&g).unwrap().data(), &out[..]);
            assert_eq!(m.gradient(&g, &u).unwrap(), grad);
        }
    }

    #[test]
    fn bias_gradient_is_upstream_sum() {
        let m = random_model(Mode::Equivariant, vec![1], 3, Activation::Cos);
        let g = DenseTensor::ones(2, 3);
        let u = DenseTensor::from_vector(&[1.0, 2.0, -0.5]).unwrap();
        assert_eq!(*m.gradient(&g, &u).unwrap().last().unwrap(), 2.5);
    }

    #[test]
    fn init_is_seeded() {
        let sk = Skeleton::uniform(2, Mode::Invariant, Activation::Sigmoid, 2, 4);
        for scheme in [InitScheme::UniformScaled, InitScheme::Gaussian] {
            let a = GnnModel::init_params(&sk, 1, scheme).unwrap();
            let b = GnnModel::init_params(&sk, 1, scheme).unwrap();
            let c = GnnModel::init_params(&sk, 2, scheme).unwrap();
            assert_eq!(a.flatten_params(), b.flatten_params());
            assert_ne!(a.flatten_params(), c.flatten_params());
            let g = DenseTensor::random_uniform(2, 10, 0.0, 3.0, &mut ChaCha8Rng::seed_from_u64(0));
            assert!(a.forward_scalar(&g).unwrap().is_finite());
        }
    }

    #[test]
    fn json_round_trip_and_validation() {
        let m = random_model(Mode::Equivariant, vec![1, 2], 8, Activation::Relu);
        let s = m.to_json().unwrap();
        assert!(s.contains("\"basis\":\"exact-pattern-v1\""));
        assert!(s.contains("\"format\":\"permtensor-model-v1\""));
        assert_eq!(GnnModel::from_json(&s).unwrap(), m);
        let tampered = s.replacen("\"0,0,1\"", "\"0,1,0\"", 1);
        assert!(GnnModel::from_json(&tampered).is_err());
        let unknown = s.replacen("{", "{\"extra\":1,", 1);
        assert!(GnnModel::from_json(&unknown).is_err());
    }

    #[test]
    fn single_factor_tensorized_matches() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        for mode in [Mode::Invariant, Mode::Equivariant] {
            let m = random_model(mode, vec![1, 2], 6, Activation::Sigmoid);
            let t = TensorizedModel::from_model(&m);
            let g = DenseTensor::random_uniform(2, 4, 0.0, 1.0, &mut r);
            assert_eq!(t.forward_tensorized(&g).unwrap(), m.forward(&g).unwrap());
        }
    }

    #[test]
    fn tensorized_symmetry() {
        let mut r = ChaCha8Rng::seed_from_u64(12);
        let mut coeffs =
            |len: usize| -> Vec<f64> { (0..len).map(|_| r.random_range(-1.0..1.0)).collect() };
        let f1 = EquivariantMap::new(2, 1, coeffs(5)).unwrap();
        let b1 = EquivariantBias::new(1, coeffs(1)).unwrap();
        let f2 = EquivariantMap::new(2, 2, coeffs(15)).unwrap();
        let b2 = EquivariantBias::new(2, coeffs(2)).unwrap();
        let h = EquivariantMap::new(3, 1, coeffs(15)).unwrap();
        let ch = TensorizedChannel {
            factors: vec![(f1, b1), (f2, b2)],
            readout: h,
        };
        let t =
            TensorizedModel::new(2, Mode::Equivariant, Activation::Tanh, vec![ch], 0.3).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(13);
        let g = DenseTensor::random_uniform(2, 4, 0.0, 1.0, &mut r);
        let f = t.forward_tensorized(&g).unwrap();
        for _ in 0..20 {
            let s = Permutation::random(4, &mut r);
            let lhs = t.forward_tensorized(&g.permute(&s).unwrap()).unwrap();
            assert!(lhs.max_abs_diff(&f.permute(&s).unwrap()).unwrap() <= 1e-10);
        }
    }
}
