//! Synthetic weighted graphs, shortest-path targets, exact edit distance and
//! brute-force isomorphism.
//!
//! A graph is an order-2 [`DenseTensor`]; a strictly positive entry is an
//! edge with that length and zero means no edge.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::rng::{self, Stream, StreamRng};
use crate::tensor::{strides, DenseTensor, Permutation};

pub const DATASET_FORMAT: &str = "permtensor-dataset-v1";

/// Largest node count for the brute-force searches (`8! = 40320`).
pub const MAX_BRUTE_FORCE_N: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Complete,
    Star,
    Cycle,
    Path,
    Wheel,
}

impl Topology {
    pub const ALL: [Topology; 5] = [
        Topology::Complete,
        Topology::Star,
        Topology::Cycle,
        Topology::Path,
        Topology::Wheel,
    ];

    pub fn min_nodes(self) -> usize {
        match self {
            Topology::Complete | Topology::Star | Topology::Path => 2,
            Topology::Cycle => 3,
            Topology::Wheel => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Topology::Complete => "complete",
            Topology::Star => "star",
            Topology::Cycle => "cycle",
            Topology::Path => "path",
            Topology::Wheel => "wheel",
        }
    }

    /// Topologies that exist on `n` nodes, in [`Topology::ALL`] order.
    pub fn available(n: usize) -> Vec<Topology> {
        Self::ALL
            .into_iter()
            .filter(|t| n >= t.min_nodes())
            .collect()
    }

    /// Undirected edges `(i, j)` with `i < j` before relabeling.
    pub fn edges(self, n: usize) -> Result<Vec<(usize, usize)>> {
        if n < self.min_nodes() {
            return Err(Error::TooFewNodes {
                topology: self.name(),
                n,
                min: self.min_nodes(),
            });
        }
        let mut e = Vec::new();
        match self {
            Topology::Complete => {
                for i in 0..n {
                    for j in i + 1..n {
                        e.push((i, j));
                    }
                }
            }
            Topology::Star => e.extend((1..n).map(|i| (0, i))),
            Topology::Path => e.extend((0..n - 1).map(|i| (i, i + 1))),
            Topology::Cycle => {
                e.extend((0..n - 1).map(|i| (i, i + 1)));
                e.push((0, n - 1));
            }
            Topology::Wheel => {
                e.extend((1..n).map(|i| (0, i)));
                e.extend((1..n - 1).map(|i| (i, i + 1)));
                e.push((1, n - 1));
            }
        }
        Ok(e)
    }
}

impl std::str::FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown topology {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "diameter")]
    Diameter,
    #[serde(rename = "ecc")]
    Eccentricity,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Diameter => "diameter",
            Task::Eccentricity => "ecc",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diameter" => Ok(Task::Diameter),
            "ecc" | "eccentricity" => Ok(Task::Eccentricity),
            _ => Err(Error::Config(format!("unknown task {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphSample {
    pub graph: DenseTensor,
    pub topology: Topology,
    pub diameter: Option<f64>,
    pub ecc: Option<Vec<f64>>,
}

impl GraphSample {
    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn attach_targets(&mut self, tasks: &[Task]) -> Result<()> {
        let d = all_pairs_shortest(&self.graph)?;
        for task in tasks {
            match task {
                Task::Diameter => self.diameter = Some(diameter_of(&d)),
                Task::Eccentricity => self.ecc = Some(eccentricities_of(&d)),
            }
        }
        Ok(())
    }
}

fn positive_abs_normal<R: Rng + ?Sized>(normal: &Normal<f64>, rng: &mut R) -> f64 {
    loop {
        let w: f64 = normal.sample(rng).abs();
        if w > 0.0 {
            return w;
        }
    }
}

/// One graph of the given topology with i.i.d. `|N(0, σ²)|` edge weights
/// and shuffled node labels. Without `symmetric` the two directions of an
/// edge get independent weights.
pub fn generate_with_rng<R: Rng + ?Sized>(
    topology: Topology,
    n: usize,
    weight_sigma: f64,
    symmetric: bool,
    rng: &mut R,
) -> Result<GraphSample> {
    if !(weight_sigma > 0.0 && weight_sigma.is_finite()) {
        return Err(Error::Precondition(format!(
            "weight sigma must be positive, got {weight_sigma}"
        )));
    }
    let edges = topology.edges(n)?;
    let normal = Normal::new(0.0, weight_sigma).map_err(|e| Error::Precondition(e.to_string()))?;
    let mut g = DenseTensor::zeros(2, n);
    let data = g.data_mut();
    for (i, j) in edges {
        let w = positive_abs_normal(&normal, rng);
        data[i * n + j] = w;
        data[j * n + i] = if symmetric {
            w
        } else {
            positive_abs_normal(&normal, rng)
        };
    }
    let mut labels: Vec<usize> = (0..n).collect();
    labels.shuffle(rng);
    let sigma = Permutation::new(labels)?;
    Ok(GraphSample {
        graph: g.permute(&sigma)?,
        topology,
        diameter: None,
        ecc: None,
    })
}

pub fn generate(
    topology: Topology,
    n: usize,
    weight_sigma: f64,
    seed: u64,
    symmetric: bool,
) -> Result<GraphSample> {
    let mut r = rng::stream(seed, Stream::Dataset, u64::MAX, n as u64);
    generate_with_rng(topology, n, weight_sigma, symmetric, &mut r)
}

fn check_graph(g: &DenseTensor) -> Result<()> {
    if g.order() != 2 {
        return Err(Error::OrderMismatch {
            expected: 2,
            actual: g.order(),
        });
    }
    if g.data().iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
        return Err(Error::Precondition(
            "edge weights must be finite and nonnegative".into(),
        ));
    }
    Ok(())
}

/// Floyd–Warshall over the strictly positive entries.
pub fn all_pairs_shortest(g: &DenseTensor) -> Result<DenseTensor> {
    check_graph(g)?;
    let n = g.n();
    let mut d: Vec<f64> = g
        .data()
        .iter()
        .enumerate()
        .map(|(f, &w)| {
            if f / n == f % n {
                0.0
            } else if w > 0.0 {
                w
            } else {
                f64::INFINITY
            }
        })
        .collect();
    for k in 0..n {
        for i in 0..n {
            let dik = d[i * n + k];
            if dik == f64::INFINITY {
                continue;
            }
            for j in 0..n {
                let via = dik + d[k * n + j];
                if via < d[i * n + j] {
                    d[i * n + j] = via;
                }
            }
        }
    }
    if d.iter().any(|v| v.is_infinite()) {
        return Err(Error::Disconnected);
    }
    DenseTensor::new(2, n, d)
}

fn eccentricities_of(d: &DenseTensor) -> Vec<f64> {
    let n = d.n();
    (0..n)
        .map(|i| {
            d.data()[i * n..(i + 1) * n]
                .iter()
                .copied()
                .fold(0.0, f64::max)
        })
        .collect()
}

fn diameter_of(d: &DenseTensor) -> f64 {
    d.data().iter().copied().fold(0.0, f64::max)
}

pub fn diameter(g: &DenseTensor) -> Result<f64> {
    Ok(diameter_of(&all_pairs_shortest(g)?))
}

pub fn eccentricities(g: &DenseTensor) -> Result<Vec<f64>> {
    Ok(eccentricities_of(&all_pairs_shortest(g)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub sizes: Vec<usize>,
    pub count_per_size: usize,
    pub tasks: Vec<Task>,
    pub seed: u64,
    pub weight_sigma: f64,
    pub symmetric: bool,
    /// Separates independent draws from one seed (e.g. 0 train, 1 test).
    pub split: u64,
}

impl DatasetConfig {
    pub fn new(sizes: Vec<usize>, count_per_size: usize, tasks: Vec<Task>, seed: u64) -> Self {
        Self {
            sizes,
            count_per_size,
            tasks,
            seed,
            weight_sigma: 1.0,
            symmetric: true,
            split: 0,
        }
    }
}

/// First line of a dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub format: String,
    pub index_base: u32,
    pub seed: u64,
    pub split: u64,
    pub weight_sigma: f64,
    pub symmetric: bool,
    /// Largest entrywise-ℓ1 norm over the samples.
    #[serde(rename = "R")]
    pub norm_bound: f64,
    pub norm: String,
    pub sizes: Vec<usize>,
    pub count_per_size: usize,
    pub tasks: Vec<Task>,
    pub count: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleLine {
    n: usize,
    topology: Topology,
    weights: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    diameter: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    ecc: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<GraphSample>,
}

/// Samples are drawn size by size; sample `i` of size `n` uses its own
/// random stream, so the result does not depend on the thread count.
pub fn make_dataset(config: &DatasetConfig) -> Result<Dataset> {
    if config.count_per_size == 0 || config.sizes.is_empty() {
        return Err(Error::Config(
            "dataset needs at least one size and one sample per size".into(),
        ));
    }
    for &n in &config.sizes {
        if n < 2 {
            return Err(Error::TooFewNodes {
                topology: "any",
                n,
                min: 2,
            });
        }
    }
    let jobs: Vec<(usize, usize)> = config
        .sizes
        .iter()
        .flat_map(|&n| (0..config.count_per_size).map(move |i| (n, i)))
        .collect();
    let samples = par::map(&jobs, |&(n, i)| -> Result<GraphSample> {
        let mut r: StreamRng = rng::stream(
            config.seed,
            Stream::Dataset,
            (config.split << 32) | n as u64,
            i as u64,
        );
        let options = Topology::available(n);
        let topology = options[r.random_range(0..options.len())];
        let mut s = generate_with_rng(topology, n, config.weight_sigma, config.symmetric, &mut r)?;
        s.attach_targets(&config.tasks)?;
        Ok(s)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let norm_bound = samples
        .iter()
        .map(|s| s.graph.norms().l1)
        .fold(0.0, f64::max);
    Ok(Dataset {
        header: DatasetHeader {
            format: DATASET_FORMAT.to_string(),
            index_base: 0,
            seed: config.seed,
            split: config.split,
            weight_sigma: config.weight_sigma,
            symmetric: config.symmetric,
            norm_bound,
            norm: "l1".to_string(),
            sizes: config.sizes.clone(),
            count_per_size: config.count_per_size,
            tasks: config.tasks.clone(),
            count: samples.len(),
        },
        samples,
    })
}

impl Dataset {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for s in &self.samples {
            let line = SampleLine {
                n: s.n(),
                topology: s.topology,
                weights: s.graph.data().to_vec(),
                diameter: s.diameter,
                ecc: s.ecc.clone(),
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        Ok(buf)
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Dataset> {
        let mut lines = r.lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::Format("empty dataset file".into()))??;
        let header: DatasetHeader = serde_json::from_str(&first)?;
        if header.format != DATASET_FORMAT {
            return Err(Error::Format(format!(
                "unsupported dataset format {:?}",
                header.format
            )));
        }
        if header.index_base != 0 {
            return Err(Error::Format("only 0-based datasets are supported".into()));
        }
        let mut samples = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let s: SampleLine = serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("sample line {}: {e}", lineno + 2)))?;
            let graph = DenseTensor::new(2, s.n, s.weights)?;
            check_graph(&graph)?;
            if let Some(ecc) = &s.ecc {
                if ecc.len() != s.n {
                    return Err(Error::Format(format!(
                        "sample line {}: ecc length",
                        lineno + 2
                    )));
                }
            }
            samples.push(GraphSample {
                graph,
                topology: s.topology,
                diameter: s.diameter,
                ecc: s.ecc,
            });
        }
        if samples.len() != header.count {
            return Err(Error::Format(format!(
                "header says {} samples, file has {}",
                header.count,
                samples.len()
            )));
        }
        Ok(Dataset { header, samples })
    }

    /// Samples whose node count is `n`.
    pub fn of_size(&self, n: usize) -> impl Iterator<Item = &GraphSample> {
        self.samples.iter().filter(move |s| s.n() == n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EditCosts {
    node_add_cost: f64,
}

impl EditCosts {
    pub fn new(node_add_cost: f64) -> Result<Self> {
        if !(node_add_cost > 0.0 && node_add_cost.is_finite()) {
            return Err(Error::Precondition(format!(
                "node addition cost must be positive, got {node_add_cost}"
            )));
        }
        Ok(Self { node_add_cost })
    }

    pub fn node_add_cost(&self) -> f64 {
        self.node_add_cost
    }
}

/// For each permutation σ of `[n]` (lexicographic), the index map
/// `t -> flat(σ(t))` over all order-`k` tuples.
fn permuted_offsets(order: usize, n: usize, sigma: &[usize]) -> Vec<usize> {
    let st = strides(order, n);
    let mut out = Vec::with_capacity(n.pow(order as u32));
    let mut idx = vec![0usize; order];
    for _ in 0..n.pow(order as u32) {
        out.push(idx.iter().zip(&st).map(|(&i, &s)| sigma[i] * s).sum());
        crate::tensor::increment(&mut idx, n);
    }
    out
}

fn brute_force_guard(n: usize) -> Result<()> {
    if n > MAX_BRUTE_FORCE_N {
        return Err(Error::EditDistanceInfeasible {
            n,
            max: MAX_BRUTE_FORCE_N,
        });
    }
    Ok(())
}

/// `min_σ ‖A − σ⋆B‖₁`, evaluated as `Σ_t |A[σ(t)] − B[t]|`.
fn min_l1_over_perms(a: &DenseTensor, b: &DenseTensor) -> f64 {
    let (order, n) = (a.order(), a.n());
    let mut best = f64::INFINITY;
    for sigma in Permutation::all(n) {
        let offs = permuted_offsets(order, n, sigma.as_slice());
        let mut acc = 0.0;
        for (t, &o) in offs.iter().enumerate() {
            acc += (a.data()[o] - b.data()[t]).abs();
            if acc >= best {
                break;
            }
        }
        if acc < best {
            best = acc;
            if best == 0.0 {
                break;
            }
        }
    }
    best
}

fn lex_cmp(a: &DenseTensor, b: &DenseTensor) -> std::cmp::Ordering {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Exact edit distance between graph classes over node additions (cost `c`
/// each, a new node arriving with all-zero incident entries) and entry
/// changes (cost `|w − w′|`).
pub fn edit_distance(g1: &DenseTensor, g2: &DenseTensor, costs: &EditCosts) -> Result<f64> {
    if g1.order() != g2.order() {
        return Err(Error::OrderMismatch {
            expected: g1.order(),
            actual: g2.order(),
        });
    }
    // canonical argument order makes the result bit-symmetric
    let (small, big) = match g1.n().cmp(&g2.n()) {
        std::cmp::Ordering::Less => (g1, g2),
        std::cmp::Ordering::Greater => (g2, g1),
        std::cmp::Ordering::Equal => {
            if lex_cmp(g1, g2).is_le() {
                (g1, g2)
            } else {
                (g2, g1)
            }
        }
    };
    brute_force_guard(big.n())?;
    let added = (big.n() - small.n()) as f64;
    let padded = small.pad_to(big.n())?;
    Ok(costs.node_add_cost * added + min_l1_over_perms(&padded, big))
}

/// A σ with `‖G1 − σ⋆G2‖∞ ≤ tol`, if any.
pub fn is_isomorphic(g1: &DenseTensor, g2: &DenseTensor, tol: f64) -> Result<Option<Permutation>> {
    if g1.order() != g2.order() || g1.n() != g2.n() {
        return Ok(None);
    }
    brute_force_guard(g1.n())?;
    let (order, n) = (g1.order(), g1.n());
    for sigma in Permutation::all(n) {
        let offs = permuted_offsets(order, n, sigma.as_slice());
        let fits = offs
            .iter()
            .enumerate()
            .all(|(t, &o)| (g1.data()[o] - g2.data()[t]).abs() <= tol);
        if fits {
            return Ok(Some(sigma));
        }
    }
    Ok(None)
}
