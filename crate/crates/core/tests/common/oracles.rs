//! Independent oracles for the property suites. Each one is written from the
//! definition of the behaviour, not from the implementation under test.

use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use customcnn::data::{stratified_split, DatasetIndex, SampleRef, SplitManifest};
use customcnn::metrics::ConfusionMatrix;
use customcnn::optim::{EarlyStopper, PlateauScheduler, StopDecision};
use customcnn::tensor::{conv2d_backward, conv2d_forward, reference};
use customcnn::Tensor32;

use super::gradcheck::rng;

fn uniform(dims: &[usize], g: &mut ChaCha8Rng) -> Tensor32 {
    let n = dims.iter().product();
    Tensor32::from_vec(dims, (0..n).map(|_| g.random_range(-1.0f32..1.0)).collect()).unwrap()
}

/// Max abs difference between the lowered convolution and the direct loops,
/// over forward and all three gradients, on one random instance.
pub fn conv_case(seed: u64) -> f64 {
    let mut g = rng(seed);
    let n = g.random_range(1..=3);
    let c = g.random_range(1..=4);
    let o = g.random_range(1..=4);
    let k = g.random_range(1..=4);
    let stride = g.random_range(1..=3);
    let pad = g.random_range(0..=2);
    let h = g.random_range(k..=9);
    let w = g.random_range(k..=9);
    let x = uniform(&[n, c, h, w], &mut g);
    let wt = uniform(&[o, c, k, k], &mut g);
    let b = uniform(&[o], &mut g);
    let fast = conv2d_forward(&x, &wt, &b, stride, pad).unwrap();
    let slow = reference::conv2d_forward_direct(&x, &wt, &b, stride, pad).unwrap();
    let gy = uniform(fast.dims(), &mut g);
    let gf = conv2d_backward(&x, &wt, &gy, stride, pad).unwrap();
    let gs = reference::conv2d_backward_direct(&x, &wt, &gy, stride, pad).unwrap();
    [
        fast.max_abs_diff(&slow),
        gf.input.max_abs_diff(&gs.input),
        gf.weight.max_abs_diff(&gs.weight),
        gf.bias.max_abs_diff(&gs.bias),
    ]
    .into_iter()
    .map(|d| d.expect("shapes agree"))
    .fold(0.0, f64::max)
}

/// Random validation-loss trace mixing descents, exact repeats, plateaus and
/// steps of exactly `min_delta`. How often a trace improves varies per trace.
pub fn random_loss_trace(g: &mut ChaCha8Rng, min_delta: f64) -> Vec<f64> {
    let len = g.random_range(1..=80);
    let improve_rate = g.random_range(0.0..0.6);
    let mut loss: f64 = g.random_range(0.5..3.0);
    let mut best = loss;
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        loss = if g.random_bool(improve_rate) {
            match g.random_range(0..3) {
                0 => best - g.random_range(0.0..0.05),
                1 => best - min_delta,
                _ => best - g.random_range(0.0..2.0 * min_delta),
            }
        } else {
            match g.random_range(0..3) {
                0 => loss,
                1 => loss + g.random_range(0.0..0.05),
                _ => best + g.random_range(-1e-4..1e-4),
            }
        };
        best = best.min(loss);
        out.push(loss);
    }
    out
}

/// Learning rate after each observation, derived from runs of
/// non-improving epochs: within a run of consecutive epochs whose loss is
/// not strictly below every earlier loss, a halving lands on the run's 5th,
/// 10th, 15th, ... epoch.
pub fn scheduler_oracle(losses: &[f64], lr0: f64, factor: f64, patience: usize, min_lr: f64) -> Vec<f64> {
    let improving: Vec<bool> = losses
        .iter()
        .enumerate()
        .map(|(t, &l)| losses[..t].iter().all(|&prev| l < prev))
        .collect();
    let mut lr = lr0;
    let mut out = Vec::with_capacity(losses.len());
    let mut run = 0;
    for &imp in &improving {
        run = if imp { 0 } else { run + 1 };
        if run > 0 && run % patience == 0 {
            lr = (lr * factor).max(min_lr);
        }
        out.push(lr);
    }
    out
}

/// Stop decisions by re-evaluating the criterion from scratch at every
/// epoch: the reference best is rebuilt from the prefix, then the last
/// `patience` epochs must all miss `best - min_delta`.
pub fn stopper_oracle(losses: &[f64], min_delta: f64, patience: usize) -> Vec<bool> {
    // best_before(j): reference loss in force when epoch j is judged.
    let best_before = |j: usize| -> f64 {
        let mut best = f64::INFINITY;
        for &l in &losses[..j] {
            if l <= best - min_delta {
                best = l;
            }
        }
        best
    };
    (0..losses.len())
        .map(|t| {
            t + 1 >= patience
                && (t + 1 - patience..=t).all(|j| !(losses[j] <= best_before(j) - min_delta))
        })
        .collect()
}

/// Runs the real scheduler and stopper over `losses`.
pub fn run_state_machines(losses: &[f64], lr0: f64) -> (Vec<f64>, Vec<bool>) {
    let mut sched = PlateauScheduler::with_defaults(lr0).unwrap();
    let mut stop = EarlyStopper::with_defaults();
    let lrs = losses.iter().map(|&l| sched.observe(l).unwrap()).collect();
    let stops = losses
        .iter()
        .map(|&l| stop.observe(l).unwrap() == StopDecision::Stop)
        .collect();
    (lrs, stops)
}

pub fn synthetic_index(counts: &[usize]) -> DatasetIndex {
    let classes: Vec<String> = (0..counts.len()).map(|c| format!("c{c:03}")).collect();
    let mut samples = Vec::new();
    for (c, &n) in counts.iter().enumerate() {
        for i in 0..n {
            let rel = format!("{}/img{i:05}.png", classes[c]);
            samples.push(SampleRef {
                path: PathBuf::from(&rel),
                rel_path: rel,
                class_index: c,
                class_name: classes[c].clone(),
            });
        }
    }
    DatasetIndex {
        root: PathBuf::from("."),
        classes,
        samples,
        counts: counts.to_vec(),
        skipped: Vec::new(),
    }
}

/// Largest `k` with `100 k <= pct n`, found by counting.
fn floor_share(n: usize, pct: usize) -> usize {
    let mut k = 0;
    while 100 * (k + 1) <= pct * n {
        k += 1;
    }
    k
}

/// Checks partition, disjointness, floor-rule proportions and seed
/// determinism of the stratified split on one random dataset.
pub fn split_case(seed: u64) -> Result<(), String> {
    let mut g = rng(seed);
    let classes = g.random_range(2..=8);
    let counts: Vec<usize> = (0..classes).map(|_| g.random_range(3..=120)).collect();
    let index = synthetic_index(&counts);
    let split_seed = g.random::<u64>();
    let a = stratified_split(&index, split_seed).map_err(|e| e.to_string())?;
    let b = stratified_split(&index, split_seed).map_err(|e| e.to_string())?;
    if (&a.train, &a.val, &a.test) != (&b.train, &b.val, &b.test) {
        return Err(format!("seed {split_seed} is not deterministic"));
    }
    let mut seen = std::collections::HashMap::new();
    for (name, part) in [("train", &a.train), ("val", &a.val), ("test", &a.test)] {
        for s in part {
            if let Some(prev) = seen.insert(s.rel_path.clone(), name) {
                return Err(format!("{} in both {prev} and {name}", s.rel_path));
            }
        }
    }
    if seen.len() != index.samples.len() {
        return Err(format!("{} of {} samples assigned", seen.len(), index.samples.len()));
    }
    for (c, &n) in counts.iter().enumerate() {
        let count = |part: &[SampleRef]| part.iter().filter(|s| s.class_index == c).count();
        let got = (count(&a.train), count(&a.val), count(&a.test));
        let train = floor_share(n, 70);
        let val = floor_share(n, 15);
        let want = (train, val, n - train - val);
        if got != want {
            return Err(format!("class {c} with {n} samples: got {got:?}, want {want:?}"));
        }
    }
    let ha = SplitManifest::from_assignment(&a).hash();
    let hb = SplitManifest::from_assignment(&b).hash();
    if ha != hb {
        return Err("manifest hash differs between identical splits".into());
    }
    Ok(())
}

/// Per-class `(precision, recall, f1)`.
pub type PerClass = (f64, f64, f64);

/// Metrics straight from the definitions. Returns
/// `(accuracy, macro precision, macro recall, macro F1, per-class)`.
pub fn metrics_oracle(rows: &[Vec<u64>]) -> (f64, f64, f64, f64, Vec<PerClass>) {
    let c = rows.len();
    let total: u64 = rows.iter().flatten().sum();
    let diag: u64 = (0..c).map(|i| rows[i][i]).sum();
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let per: Vec<PerClass> = (0..c)
        .map(|k| {
            let tp = rows[k][k];
            let predicted: u64 = (0..c).map(|i| rows[i][k]).sum();
            let actual: u64 = rows[k].iter().sum();
            let p = ratio(tp, predicted);
            let r = ratio(tp, actual);
            let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            (p, r, f)
        })
        .collect();
    let mean = |f: fn(&PerClass) -> f64| per.iter().map(f).sum::<f64>() / c as f64;
    (
        ratio(diag, total),
        mean(|x| x.0),
        mean(|x| x.1),
        mean(|x| x.2),
        per,
    )
}

pub fn random_confusion(g: &mut ChaCha8Rng) -> Vec<Vec<u64>> {
    let c = g.random_range(2..=12);
    let sparse = g.random_bool(0.3);
    let mut rows: Vec<Vec<u64>> = (0..c)
        .map(|_| {
            (0..c)
                .map(|_| if sparse && g.random_bool(0.6) { 0 } else { g.random_range(0..50) })
                .collect()
        })
        .collect();
    if rows.iter().flatten().all(|&v| v == 0) {
        rows[0][0] = 1;
    }
    rows
}

/// Max abs difference between `compute()` and the oracle.
pub fn metrics_case(rows: &[Vec<u64>]) -> f64 {
    let report = ConfusionMatrix::from_rows(rows).unwrap().compute().unwrap();
    let (acc, mp, mr, mf, per) = metrics_oracle(rows);
    let mut worst = [
        report.accuracy - acc,
        report.macro_precision - mp,
        report.macro_recall - mr,
        report.macro_f1 - mf,
    ]
    .iter()
    .fold(0.0f64, |m, d| m.max(d.abs()));
    for (k, &(p, r, f)) in per.iter().enumerate() {
        for d in [report.precision[k] - p, report.recall[k] - r, report.f1[k] - f] {
            worst = worst.max(d.abs());
        }
    }
    worst
}
