//! MSE regression of one-hidden-layer models with Adam.
//!
//! Minibatches never mix node counts: each epoch shuffles the samples of
//! every size, cuts them into batches, and shuffles the batch order. The
//! vector task divides each sample's squared error by `n`, so sizes weigh
//! equally per sample.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::{GnnModel, InitScheme, Mode, Skeleton};
use crate::graphs::{Dataset, GraphSample, Task};
use crate::par;
use crate::rng::{self, Stream};
use crate::tensor::{Activation, DenseTensor};

pub const METRICS_HEADER: &str = "epoch,train_mse,test_mse,test_mse_n5,test_mse_n10,wall_ms";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: Task,
    pub k: usize,
    pub width: usize,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub input_order: usize,
    /// Record elapsed milliseconds per epoch; off keeps metrics files
    /// byte-reproducible (the column is then 0).
    pub wall_clock: bool,
}

impl TrainConfig {
    pub fn new(task: Task, k: usize, width: usize, seed: u64) -> Self {
        Self {
            task,
            k,
            width,
            activation: Activation::Sigmoid,
            epochs: 150,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed,
            input_order: 2,
            wall_clock: false,
        }
    }

    pub fn mode(&self) -> Mode {
        task_mode(self.task)
    }

    pub fn skeleton(&self) -> Skeleton {
        Skeleton::uniform(
            self.input_order,
            self.mode(),
            self.activation,
            self.k,
            self.width,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch size must be at least 1".into(),
            ));
        }
        let rates = [self.learning_rate, self.epsilon];
        if rates.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(Error::Config(
                "learning rate and epsilon must be positive".into(),
            ));
        }
        for b in [self.beta1, self.beta2] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("adam beta {b} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

pub fn task_mode(task: Task) -> Mode {
    match task {
        Task::Diameter => Mode::Invariant,
        Task::Eccentricity => Mode::Equivariant,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

pub fn adam_step(
    params: &mut [f64],
    grad: &[f64],
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<()> {
    if params.len() != grad.len() || params.len() != state.m.len() || params.len() != state.v.len()
    {
        return Err(Error::ShapeMismatch("adam vectors differ in length".into()));
    }
    state.t += 1;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
    }
    Ok(())
}

fn target(sample: &GraphSample, task: Task) -> Result<DenseTensor> {
    let n = sample.n();
    match task {
        Task::Diameter => sample
            .diameter
            .map(|d| DenseTensor::scalar(d, n))
            .ok_or_else(|| Error::Precondition("sample has no diameter target".into())),
        Task::Eccentricity => sample
            .ecc
            .as_deref()
            .map(|e| DenseTensor::from_vector(e).expect("nonempty"))
            .ok_or_else(|| Error::Precondition("sample has no eccentricity target".into())),
    }
}

fn sample_loss(pred: &DenseTensor, y: &DenseTensor, task: Task) -> f64 {
    let sq: f64 = pred
        .data()
        .iter()
        .zip(y.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    match task {
        Task::Diameter => sq,
        Task::Eccentricity => sq / pred.n() as f64,
    }
}

fn check_task(model: &GnnModel, task: Task) -> Result<()> {
    if model.mode() != task_mode(task) {
        return Err(Error::Precondition(format!(
            "{:?} model cannot fit the {} task",
            model.mode(),
            task.name()
        )));
    }
    Ok(())
}

/// Mean loss over the batch and its parameter gradient.
pub fn mse_loss(model: &GnnModel, batch: &[&GraphSample], task: Task) -> Result<(f64, Vec<f64>)> {
    check_task(model, task)?;
    let Some(first) = batch.first() else {
        return Err(Error::Precondition("empty batch".into()));
    };
    if batch.iter().any(|s| s.n() != first.n()) {
        return Err(Error::Precondition("batch mixes node counts".into()));
    }
    let scale = 1.0 / batch.len() as f64;
    let parts = par::map(batch, |s| -> Result<(f64, Vec<f64>)> {
        let y = target(s, task)?;
        let trace = model.forward_trace(&s.graph)?;
        let loss = sample_loss(&trace.output, &y, task);
        let norm = match task {
            Task::Diameter => 1.0,
            Task::Eccentricity => s.n() as f64,
        };
        let upstream = trace.output.sub(&y)?.scale(2.0 * scale / norm);
        Ok((loss, model.backward(&s.graph, &trace, &upstream)?))
    });
    let mut total = 0.0;
    let mut grad = vec![0.0; model.skeleton().param_len()?];
    for part in parts {
        let (l, g) = part?;
        total += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((total * scale, grad))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub count: usize,
    pub mse: f64,
    pub per_size: BTreeMap<usize, f64>,
}

impl EvalReport {
    pub fn size(&self, n: usize) -> f64 {
        self.per_size.get(&n).copied().unwrap_or(f64::NAN)
    }
}

pub fn evaluate(model: &GnnModel, samples: &[GraphSample], task: Task) -> Result<EvalReport> {
    check_task(model, task)?;
    let losses = par::map(samples, |s| -> Result<(usize, f64)> {
        let pred = model.forward(&s.graph)?;
        Ok((s.n(), sample_loss(&pred, &target(s, task)?, task)))
    });
    let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    let mut total = 0.0;
    for l in losses {
        let (n, v) = l?;
        total += v;
        let e = sums.entry(n).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    let count = samples.len();
    Ok(EvalReport {
        count,
        mse: if count == 0 {
            f64::NAN
        } else {
            total / count as f64
        },
        per_size: sums
            .into_iter()
            .map(|(n, (s, c))| (n, s / c as f64))
            .collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_mse: f64,
    pub test_mse: f64,
    pub test_mse_n5: f64,
    pub test_mse_n10: f64,
    pub wall_ms: u128,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub model: GnnModel,
    pub history: Vec<EpochMetrics>,
}

fn epoch_batches(
    by_size: &BTreeMap<usize, Vec<usize>>,
    config: &TrainConfig,
    epoch: usize,
) -> Vec<Vec<usize>> {
    let mut batches = Vec::new();
    for (&n, idx) in by_size {
        let mut idx = idx.clone();
        idx.shuffle(&mut rng::stream(
            config.seed,
            Stream::Shuffle,
            epoch as u64,
            n as u64,
        ));
        batches.extend(idx.chunks(config.batch_size).map(<[usize]>::to_vec));
    }
    batches.shuffle(&mut rng::stream(
        config.seed,
        Stream::Shuffle,
        epoch as u64,
        u64::MAX,
    ));
    batches
}

/// Trains from a seeded initialization for exactly `config.epochs` epochs.
pub fn fit(config: &TrainConfig, train: &[GraphSample], test: &[GraphSample]) -> Result<FitResult> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Precondition("empty training set".into()));
    }
    let skeleton = config.skeleton();
    let mut model = GnnModel::init_params(&skeleton, config.seed, InitScheme::UniformScaled)?;
    let mut params = model.flatten_params();
    let mut adam = AdamState::new(params.len());
    let mut by_size: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in train.iter().enumerate() {
        by_size.entry(s.n()).or_default().push(i);
    }
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let mut loss_sum = 0.0;
        for batch in epoch_batches(&by_size, config, epoch) {
            let samples: Vec<&GraphSample> = batch.iter().map(|&i| &train[i]).collect();
            let (loss, grad) = mse_loss(&model, &samples, config.task)?;
            loss_sum += loss * samples.len() as f64;
            adam_step(&mut params, &grad, &mut adam, config)?;
            model = GnnModel::unflatten_params(&skeleton, &params)?;
        }
        let report = evaluate(&model, test, config.task)?;
        history.push(EpochMetrics {
            epoch,
            train_mse: loss_sum / train.len() as f64,
            test_mse: report.mse,
            test_mse_n5: report.size(5),
            test_mse_n10: report.size(10),
            wall_ms: if config.wall_clock {
                start.elapsed().as_millis()
            } else {
                0
            },
        });
    }
    Ok(FitResult { model, history })
}

/// Convenience wrapper taking the samples out of datasets.
pub fn fit_datasets(
    config: &TrainConfig,
    train: &Dataset,
    test: Option<&Dataset>,
) -> Result<FitResult> {
    fit(
        config,
        &train.samples,
        test.map_or(&[][..], |d| &d.samples[..]),
    )
}

fn fmt_metric(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

pub fn metrics_csv(history: &[EpochMetrics]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for m in history {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            m.epoch,
            fmt_metric(m.train_mse),
            fmt_metric(m.test_mse),
            fmt_metric(m.test_mse_n5),
            fmt_metric(m.test_mse_n10),
            m.wall_ms
        );
    }
    s
}

/// Deterministic holdout: a seeded shuffle of indices, the last
/// `round(fraction · len)` of which become the test split.
pub fn holdout_split(
    samples: &[GraphSample],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<GraphSample>, Vec<GraphSample>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Config(format!(
            "holdout fraction {fraction} outside [0, 1)"
        )));
    }
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.shuffle(&mut rng::stream(
        seed,
        Stream::Split,
        0,
        samples.len() as u64,
    ));
    let n_test = (fraction * samples.len() as f64).round() as usize;
    let (tr, te) = idx.split_at(samples.len() - n_test);
    let mut tr = tr.to_vec();
    let mut te = te.to_vec();
    tr.sort_unstable();
    te.sort_unstable();
    Ok((
        tr.iter().map(|&i| samples[i].clone()).collect(),
        te.iter().map(|&i| samples[i].clone()).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{make_dataset, DatasetConfig};

    fn data(count: usize, seed: u64) -> Dataset {
        make_dataset(&DatasetConfig::new(
            vec![5, 10],
            count,
            vec![Task::Diameter, Task::Eccentricity],
            seed,
        ))
        .unwrap()
    }

    #[test]
    fn adam_first_step_is_lr_sign() {
        let cfg = TrainConfig::new(Task::Diameter, 1, 1, 0);
        let mut p = vec![0.0, 1.0, -2.0];
        let g = vec![3.0, -0.5, 1e-3];
        let mut st = AdamState::new(3);
        adam_step(&mut p, &g, &mut st, &cfg).unwrap();
        assert!((p[0] + 1e-3).abs() < 1e-9);
        assert!((p[1] - 1.0 - 1e-3).abs() < 1e-9);
        assert!((p[2] + 2.0 + 1e-3).abs() < 1e-8);
        let mut q = vec![0.5; 3];
        let mut st = AdamState::new(3);
        for _ in 0..10 {
            adam_step(&mut q, &[0.0; 3], &mut st, &cfg).unwrap();
        }
        assert_eq!(q, vec![0.5; 3]);
    }

    #[test]
    fn constant_predictor_loss() {
        let ds = data(4, 1);
        let sk = Skeleton::new(2, Mode::Invariant, Activation::Sigmoid, vec![]);
        let m = GnnModel::unflatten_params(&sk, &[0.0]).unwrap();
        let batch: Vec<&GraphSample> = ds.of_size(5).collect();
        let (loss, _) = mse_loss(&m, &batch, Task::Diameter).unwrap();
        let want: f64 = batch
            .iter()
            .map(|s| s.diameter.unwrap().powi(2))
            .sum::<f64>()
            / 4.0;
        assert!((loss - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn perfect_prediction_has_zero_gradient() {
        let ds = data(1, 2);
        let s = ds.of_size(5).next().unwrap();
        let sk = Skeleton::new(2, Mode::Invariant, Activation::Sigmoid, vec![]);
        let m = GnnModel::unflatten_params(&sk, &[s.diameter.unwrap()]).unwrap();
        let (loss, grad) = mse_loss(&m, &[s], Task::Diameter).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grad, vec![0.0]);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let ds = data(3, 3);
        for task in [Task::Diameter, Task::Eccentricity] {
            let sk = Skeleton::new(2, task_mode(task), Activation::Sigmoid, vec![1, 2]);
            let m = GnnModel::init_params(&sk, 4, InitScheme::UniformScaled).unwrap();
            let batch: Vec<&GraphSample> = ds.of_size(5).collect();
            let (_, grad) = mse_loss(&m, &batch, task).unwrap();
            let p = m.flatten_params();
            let h = 1e-5;
            for i in 0..p.len() {
                let mut a = p.clone();
                let mut b = p.clone();
                a[i] += h;
                b[i] -= h;
                let la = mse_loss(&GnnModel::unflatten_params(&sk, &a).unwrap(), &batch, task)
                    .unwrap()
                    .0;
                let lb = mse_loss(&GnnModel::unflatten_params(&sk, &b).unwrap(), &batch, task)
                    .unwrap()
                    .0;
                let fd = (la - lb) / (2.0 * h);
                let err = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-6);
                assert!(err <= 1e-4, "{task:?} coord {i}: {} vs {fd}", grad[i]);
            }
        }
    }

    #[test]
    fn single_sample_overfits() {
        let ds = data(1, 5);
        let s = ds.of_size(5).next().unwrap().clone();
        let mut cfg = TrainConfig::new(Task::Diameter, 1, 1, 0);
        cfg.epochs = 3000;
        cfg.learning_rate = 1e-2;
        let fit = fit(&cfg, std::slice::from_ref(&s), &[]).unwrap();
        assert!(fit.history.last().unwrap().train_mse < 1e-3);
    }

    #[test]
    fn metrics_rows_and_determinism() {
        let ds = data(20, 6);
        let mut cfg = TrainConfig::new(Task::Eccentricity, 1, 2, 7);
        cfg.epochs = 4;
        let (tr, te) = holdout_split(&ds.samples, 0.2, 7).unwrap();
        assert_eq!((tr.len(), te.len()), (32, 8));
        let a = fit(&cfg, &tr, &te).unwrap();
        let b = fit(&cfg, &tr, &te).unwrap();
        let csv = metrics_csv(&a.history);
        assert_eq!(csv.lines().count(), 1 + cfg.epochs);
        assert_eq!(csv, metrics_csv(&b.history));
        assert_eq!(a.model.to_json().unwrap(), b.model.to_json().unwrap());
        let no_test = fit(&cfg, &tr, &[]).unwrap();
        assert!(metrics_csv(&no_test.history)
            .lines()
            .nth(1)
            .unwrap()
            .ends_with(",nan,nan,nan,0"));
    }

    #[test]
    fn rejects_mode_task_mismatch() {
        let ds = data(1, 8);
        let sk = Skeleton::new(2, Mode::Invariant, Activation::Sigmoid, vec![]);
        let m = GnnModel::unflatten_params(&sk, &[0.0]).unwrap();
        let batch: Vec<&GraphSample> = ds.samples.iter().collect();
        assert!(mse_loss(&m, &batch, Task::Eccentricity).is_err());
        assert!(mse_loss(&m, &batch, Task::Diameter).is_err());
    }
}
