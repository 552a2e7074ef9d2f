//! Generate, train and evaluate end to end on small datasets.

use permtensor::gnn::GnnModel;
use permtensor::graphs::{make_dataset, Dataset, DatasetConfig, Task};
use permtensor::tensor::{DenseTensor, Permutation};
use permtensor::train::{evaluate, fit_datasets, metrics_csv, TrainConfig, METRICS_HEADER};

fn data(count: usize, seed: u64, split: u64) -> Dataset {
    let mut cfg = DatasetConfig::new(
        vec![5, 10],
        count,
        vec![Task::Diameter, Task::Eccentricity],
        seed,
    );
    cfg.split = split;
    make_dataset(&cfg).unwrap()
}

#[test]
fn training_lowers_train_error_every_seed() {
    for seed in 0..3 {
        let train = data(100, seed, 0);
        let cfg = TrainConfig::new(Task::Diameter, 1, 8, seed);
        let fit = fit_datasets(&cfg, &train, None).unwrap();
        assert_eq!(fit.history.len(), 150);
        let first = fit.history[0].train_mse;
        let last = fit.history[149].train_mse;
        assert!(last <= first, "seed {seed}: {first} -> {last}");
    }
}

#[test]
fn one_model_serves_both_sizes() {
    let train = data(30, 4, 0);
    let test = data(10, 4, 1);
    for task in [Task::Diameter, Task::Eccentricity] {
        let mut cfg = TrainConfig::new(task, 2, 2, 4);
        cfg.epochs = 4;
        let fit = fit_datasets(&cfg, &train, Some(&test)).unwrap();
        let last = fit.history.last().unwrap();
        let rep = evaluate(&fit.model, &test.samples, task).unwrap();
        assert_eq!(rep.size(5), last.test_mse_n5);
        assert_eq!(rep.size(10), last.test_mse_n10);
        assert!(rep.size(5).is_finite() && rep.size(10).is_finite());

        let csv = metrics_csv(&fit.history);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(METRICS_HEADER));
        assert_eq!(lines.count(), 4);

        // the saved file reproduces the predictions exactly
        let back = GnnModel::from_json(&fit.model.to_json().unwrap()).unwrap();
        for s in test.samples.iter().take(5) {
            assert_eq!(
                back.forward(&s.graph).unwrap(),
                fit.model.forward(&s.graph).unwrap()
            );
        }
    }
}

#[test]
fn datasets_round_trip_through_jsonl() {
    let d = data(6, 9, 0);
    let bytes = d.to_jsonl().unwrap();
    let back = Dataset::read_jsonl(&bytes[..]).unwrap();
    assert_eq!(back.samples, d.samples);
    assert_eq!(back.to_jsonl().unwrap(), bytes);
    assert_eq!(String::from_utf8(bytes).unwrap().lines().count(), 13);
}

#[test]
fn relabelling_examples() {
    let g = DenseTensor::from_matrix(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
    let swapped = g.permute(&Permutation::swap(2, 0, 1)).unwrap();
    assert_eq!(
        swapped,
        DenseTensor::from_matrix(&[vec![4.0, 3.0], vec![2.0, 1.0]]).unwrap()
    );
    let p = Permutation::swap(2, 0, 1).matrix();
    let pgpt = DenseTensor::from_fn(2, 2, |t| {
        let mut acc = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                acc += p.get(&[t[0], a]) * g.get(&[a, b]) * p.get(&[t[1], b]);
            }
        }
        acc
    });
    assert_eq!(swapped, pgpt);
}

#[test]
fn initialized_models_are_finite_and_lipschitz() {
    use permtensor::gnn::{InitScheme, Mode, Skeleton};
    use permtensor::rng::{self, Stream};
    use permtensor::tensor::Activation;

    let d = data(10, 12, 0);
    let mut r = rng::stream(12, Stream::Check, 5, 0);
    for k in 1..=3 {
        let sk = Skeleton::uniform(2, Mode::Invariant, Activation::Sigmoid, k, 8);
        let model = GnnModel::init_params(&sk, 12, InitScheme::UniformScaled).unwrap();
        let mut worst: f64 = 0.0;
        for s in &d.samples {
            let f = model.forward_scalar(&s.graph).unwrap();
            assert!(f.is_finite());
            for eps in [1e-1, 1e-3, 1e-6] {
                let delta = DenseTensor::random_uniform(2, s.n(), -eps, eps, &mut r);
                let g2 = s.graph.add(&delta).unwrap();
                let ratio = (model.forward_scalar(&g2).unwrap() - f).abs() / delta.norms().l1;
                worst = worst.max(ratio);
            }
        }
        // per channel: |ΔF|∞ ≤ ‖c_F‖₁‖Δ‖₁, sigmoid slope ≤ 1/4, readout sums n^k entries
        let bound: f64 = model
            .channels()
            .iter()
            .map(|c| {
                let n: f64 = 10.0;
                let f1: f64 = c.feature.coeffs().iter().map(|x| x.abs()).sum();
                let h1: f64 = c.readout.coeffs().iter().map(|x| x.abs()).sum();
                0.25 * f1 * h1 * n.powi(k as i32)
            })
            .sum();
        assert!(
            worst.is_finite() && worst <= bound,
            "k={k}: ratio {worst} above {bound}"
        );
    }
}
