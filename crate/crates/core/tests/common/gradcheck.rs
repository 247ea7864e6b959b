//! Central finite-difference oracle in f64.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use customcnn::nn::{
    softmax_cross_entropy, BatchNorm, Conv2d, Dropout, GlobalAvgPool, Linear, MaxPool2d, Relu,
};
use customcnn::tensor::{conv2d_backward, conv2d_forward, matmul, matmul_backward};
use customcnn::{LayerMode, Tensor64};

pub const H: f64 = 1e-5;
pub const LAYER_TOL: f64 = 1e-6;
pub const MODEL_TOL: f64 = 1e-5;
/// Denominator floor: below this magnitude the error is measured absolutely.
/// Central differences with h = 1e-5 on O(1) losses carry ~1e-10 of
/// round-off, so relative error is meaningless for near-zero gradients.
pub const ERR_FLOOR: f64 = 1e-4;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ERR_FLOOR)
}

pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(dims: &[usize], rng: &mut ChaCha8Rng) -> Tensor64 {
    let n = dims.iter().product();
    Tensor64::from_vec(dims, (0..n).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

/// Standard normal values pushed at least `gap` away from zero.
pub fn randn_away_from_zero(dims: &[usize], gap: f64, rng: &mut ChaCha8Rng) -> Tensor64 {
    randn(dims, rng).map(|x| if x >= 0.0 { x + gap } else { x - gap })
}

pub fn dot(a: &Tensor64, b: &Tensor64) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Central-difference gradient of `f` at `x`, every coordinate.
pub fn numeric_grad(x: &Tensor64, mut f: impl FnMut(&Tensor64) -> f64) -> Vec<f64> {
    let mut xp = x.clone();
    (0..x.numel())
        .map(|i| {
            let orig = xp.data()[i];
            xp.data_mut()[i] = orig + H;
            let up = f(&xp);
            xp.data_mut()[i] = orig - H;
            let down = f(&xp);
            xp.data_mut()[i] = orig;
            (up - down) / (2.0 * H)
        })
        .collect()
}

fn check(label: &str, analytic: &Tensor64, x: &Tensor64, f: impl FnMut(&Tensor64) -> f64) -> (String, f64) {
    (label.to_string(), max_rel_err(analytic.data(), &numeric_grad(x, f)))
}

/// Every layer's backward against finite differences of its forward, for one
/// seed. Each layer is probed through `L = <r, layer(x)>` with random `r`.
/// Returns `(check name, max relative error)`.
pub fn layer_suite(seed: u64) -> Vec<(String, f64)> {
    let mut g = rng(seed);
    let mut out = Vec::new();

    // Raw convolution kernel with random geometry.
    {
        let n = g.random_range(1..=2);
        let c = g.random_range(1..=3);
        let o = g.random_range(1..=3);
        let k = g.random_range(1..=3);
        let stride = g.random_range(1..=2);
        let pad = g.random_range(0..=1);
        let h = g.random_range(k.max(3)..=6);
        let w = g.random_range(k.max(3)..=6);
        let x = randn(&[n, c, h, w], &mut g);
        let wt = randn(&[o, c, k, k], &mut g);
        let b = randn(&[o], &mut g);
        let y = conv2d_forward(&x, &wt, &b, stride, pad).unwrap();
        let r = randn(y.dims(), &mut g);
        let grads = conv2d_backward(&x, &wt, &r, stride, pad).unwrap();
        let loss = |x: &Tensor64, wt: &Tensor64, b: &Tensor64| {
            dot(&r, &conv2d_forward(x, wt, b, stride, pad).unwrap())
        };
        out.push(check("conv2d kernel / input", &grads.input, &x, |v| loss(v, &wt, &b)));
        out.push(check("conv2d kernel / weight", &grads.weight, &wt, |v| loss(&x, v, &b)));
        out.push(check("conv2d kernel / bias", &grads.bias, &b, |v| loss(&x, &wt, v)));
    }

    // Conv2d layer as used by the model (3x3, stride 1, padding 1).
    {
        let mut layer = Conv2d::<f64>::new(2, 3, 3, 1, 1).unwrap();
        layer.init_he(&mut g).unwrap();
        layer.bias.value = randn(&[3], &mut g);
        let x = randn(&[2, 2, 4, 4], &mut g);
        let y = layer.forward(&x, LayerMode::Train).unwrap();
        let r = randn(y.dims(), &mut g);
        let gx = layer.backward(&r).unwrap();
        let base = layer.clone();
        let run = |l: &Conv2d<f64>, x: &Tensor64| dot(&r, &l.infer(x).unwrap());
        out.push(check("Conv2d / input", &gx, &x, |v| run(&base, v)));
        out.push(check("Conv2d / weight", &layer.weight.grad, &base.weight.value, |v| {
            let mut l = base.clone();
            l.weight.value = v.clone();
            run(&l, &x)
        }));
        out.push(check("Conv2d / bias", &layer.bias.grad, &base.bias.value, |v| {
            let mut l = base.clone();
            l.bias.value = v.clone();
            run(&l, &x)
        }));
    }

    // Linear.
    {
        let mut layer = Linear::<f64>::new(5, 4).unwrap();
        layer.weight.value = randn(&[4, 5], &mut g);
        layer.bias.value = randn(&[4], &mut g);
        let x = randn(&[3, 5], &mut g);
        let y = layer.forward(&x, LayerMode::Train).unwrap();
        let r = randn(y.dims(), &mut g);
        let gx = layer.backward(&r).unwrap();
        let base = layer.clone();
        let run = |l: &Linear<f64>, x: &Tensor64| dot(&r, &l.infer(x).unwrap());
        out.push(check("Linear / input", &gx, &x, |v| run(&base, v)));
        out.push(check("Linear / weight", &layer.weight.grad, &base.weight.value, |v| {
            let mut l = base.clone();
            l.weight.value = v.clone();
            run(&l, &x)
        }));
        out.push(check("Linear / bias", &layer.bias.grad, &base.bias.value, |v| {
            let mut l = base.clone();
            l.bias.value = v.clone();
            run(&l, &x)
        }));
    }

    // BatchNorm in both modes, rank 4 and rank 2.
    for (label, dims, mode) in [
        ("BatchNorm2d train", vec![3, 2, 2, 3], LayerMode::Train),
        ("BatchNorm1d train", vec![4, 3], LayerMode::Train),
        ("BatchNorm2d eval", vec![2, 3, 2, 2], LayerMode::Eval),
    ] {
        let c = dims[1];
        let mut layer = BatchNorm::<f64>::new(c).unwrap();
        layer.gamma.value = randn(&[c], &mut g);
        layer.beta.value = randn(&[c], &mut g);
        layer.running_mean = randn(&[c], &mut g);
        layer.running_var = randn(&[c], &mut g).map(|v| 0.5 + v.abs());
        let x = randn(&dims, &mut g).map(|v| 1.5 * v + 0.3);
        let base = layer.clone();
        let y = layer.forward(&x, mode).unwrap();
        let r = randn(y.dims(), &mut g);
        let gx = layer.backward(&r).unwrap();
        let run = |l: &BatchNorm<f64>, x: &Tensor64| {
            let mut l = l.clone();
            dot(&r, &l.forward(x, mode).unwrap())
        };
        out.push(check(&format!("{label} / input"), &gx, &x, |v| run(&base, v)));
        out.push(check(&format!("{label} / gamma"), &layer.gamma.grad, &base.gamma.value, |v| {
            let mut l = base.clone();
            l.gamma.value = v.clone();
            run(&l, &x)
        }));
        out.push(check(&format!("{label} / beta"), &layer.beta.grad, &base.beta.value, |v| {
            let mut l = base.clone();
            l.beta.value = v.clone();
            run(&l, &x)
        }));
    }

    // ReLU away from the kink.
    {
        let x = randn_away_from_zero(&[2, 3, 3], 1e-2, &mut g);
        let mut relu = Relu::new();
        let y = relu.forward(&x, LayerMode::Train);
        let r = randn(y.dims(), &mut g);
        let gx = relu.backward(&r).unwrap();
        out.push(check("ReLU / input", &gx, &x, |v| {
            dot(&r, &Relu::new().forward(v, LayerMode::Eval))
        }));
    }

    // Max pooling on well-separated values (no ties within h).
    {
        let n = 2 * 2 * 4 * 4;
        let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.01).collect();
        customcnn::rng::shuffle(&mut vals, &mut g);
        let x = Tensor64::from_vec(&[2, 2, 4, 4], vals).unwrap();
        let mut pool = MaxPool2d::new();
        let y = pool.forward(&x, LayerMode::Train).unwrap();
        let r = randn(y.dims(), &mut g);
        let gx = pool.backward(&r).unwrap();
        out.push(check("MaxPool2d / input", &gx, &x, |v| {
            dot(&r, &MaxPool2d::new().forward(v, LayerMode::Eval).unwrap())
        }));
    }

    // Global average pooling.
    {
        let x = randn(&[2, 3, 2, 4], &mut g);
        let mut gap = GlobalAvgPool::new();
        let y = gap.forward(&x).unwrap();
        let r = randn(y.dims(), &mut g);
        let gx = gap.backward(&r).unwrap();
        out.push(check("GlobalAvgPool / input", &gx, &x, |v| {
            dot(&r, &GlobalAvgPool::new().forward(v).unwrap())
        }));
    }

    // Dropout with a fixed mask (same stream on every evaluation).
    {
        let mask_seed = g.random::<u64>();
        let x = randn(&[3, 6], &mut g);
        let mut drop = Dropout::<f64>::new(0.3).unwrap();
        let y = drop.forward(&x, LayerMode::Train, &mut rng(mask_seed)).unwrap();
        let r = randn(y.dims(), &mut g);
        let gx = drop.backward(&r).unwrap();
        out.push(check("Dropout / input", &gx, &x, |v| {
            let mut d = Dropout::<f64>::new(0.3).unwrap();
            dot(&r, &d.forward(v, LayerMode::Train, &mut rng(mask_seed)).unwrap())
        }));
    }

    // Weighted softmax cross-entropy.
    {
        let (n, c) = (4, 3);
        let logits = randn(&[n, c], &mut g).map(|v| 2.0 * v);
        let targets: Vec<usize> = (0..n).map(|_| g.random_range(0..c)).collect();
        let weights: Vec<f64> = (0..c).map(|_| g.random_range(0.2..3.0)).collect();
        let (_, grad) = softmax_cross_entropy(&logits, &targets, Some(&weights)).unwrap();
        out.push(check("softmax cross-entropy / logits", &grad, &logits, |v| {
            softmax_cross_entropy(v, &targets, Some(&weights)).unwrap().0
        }));
    }

    // Matrix product.
    {
        let a = randn(&[3, 4], &mut g);
        let b = randn(&[4, 2], &mut g);
        let r = randn(&[3, 2], &mut g);
        let (ga, gb) = matmul_backward(&a, &b, &r).unwrap();
        out.push(check("matmul / a", &ga, &a, |v| dot(&r, &matmul(v, &b).unwrap())));
        out.push(check("matmul / b", &gb, &b, |v| dot(&r, &matmul(&a, v).unwrap())));
    }

    out
}

/// Outcome of one finite-difference probe along a direction.
#[derive(Clone, Copy, Debug)]
pub struct Probe {
    pub analytic: f64,
    pub numeric: f64,
    pub err: f64,
    /// Step that produced `numeric`: `H`, or a smaller one after a kink.
    pub step: f64,
}

/// End-to-end probe of the reference model on a `(2, 3, 16, 16)` batch in f64.
///
/// ReLU and max pooling make the loss piecewise smooth. When a probe crosses
/// a kink within `±h`, the central-difference error equals
/// `(f(x+h) + f(x-h) - 2 f(x)) / (2h)`. Several nearby kinks break that
/// identity, so a failing probe whose estimate is still moving as the step
/// shrinks is also retried. Smaller steps converge to the true derivative and
/// so cannot rescue a wrong gradient.
pub struct ModelProbe {
    pub model: customcnn::Model64,
    pub input: Tensor64,
    pub targets: Vec<usize>,
    pub weights: Vec<f64>,
    dropout_seed: u64,
    base_loss: f64,
}

/// Coordinates grouped by parameter tensor: `(flat index, direction)`.
pub type Direction = Vec<Vec<(usize, f64)>>;

impl ModelProbe {
    pub fn new(seed: u64) -> Self {
        use customcnn::{CustomCnnConfig, HasParams};
        let mut g = rng(seed ^ 0x5eed);
        let classes = 3;
        let mut model = customcnn::Model64::build(CustomCnnConfig::reference(classes), seed).unwrap();
        // Non-trivial BatchNorm affine parameters and biases, so every
        // parameter has a generic gradient.
        model.visit_params_mut(&mut |name, p| {
            if name.ends_with("gamma") {
                p.value = randn(p.value.dims(), &mut g).map(|v| 1.0 + 0.2 * v);
            } else if name.ends_with("beta") || name.ends_with("bias") {
                p.value = randn(p.value.dims(), &mut g).map(|v| 0.1 * v);
            }
        });
        let input = randn(&[2, 3, 16, 16], &mut g);
        let targets = vec![g.random_range(0..classes), g.random_range(0..classes)];
        let weights = (0..classes).map(|_| g.random_range(0.5..2.0)).collect();
        let mut probe = ModelProbe {
            model,
            input,
            targets,
            weights,
            dropout_seed: g.random(),
            base_loss: 0.0,
        };
        probe.base_loss = probe.loss();
        probe
    }

    pub fn loss(&mut self) -> f64 {
        let logits = self.model.forward(&self.input, &mut rng(self.dropout_seed)).unwrap();
        softmax_cross_entropy(&logits, &self.targets, Some(&self.weights)).unwrap().0
    }

    /// Analytic gradients, flattened per parameter tensor in registry order.
    pub fn analytic(&mut self) -> Vec<(String, Vec<f64>)> {
        use customcnn::HasParams;
        self.model.zero_grads();
        let logits = self.model.forward(&self.input, &mut rng(self.dropout_seed)).unwrap();
        let (_, grad) = softmax_cross_entropy(&logits, &self.targets, Some(&self.weights)).unwrap();
        self.model.backward(&grad).unwrap();
        let mut out = Vec::new();
        self.model.visit_params(&mut |n, p| out.push((n.to_string(), p.grad.data().to_vec())));
        self.model.clear_caches();
        out
    }

    /// Sets each listed coordinate to `original + delta * direction`.
    fn place(&mut self, dir: &Direction, originals: &[Vec<f64>], delta: f64) {
        use customcnn::HasParams;
        let mut t = 0;
        self.model.visit_params_mut(&mut |_, p| {
            let data = p.value.data_mut();
            for (&(i, d), &orig) in dir[t].iter().zip(&originals[t]) {
                data[i] = orig + delta * d;
            }
            t += 1;
        });
    }

    /// `(central difference, second difference)` at step `h`.
    fn central(&mut self, dir: &Direction, h: f64) -> (f64, f64) {
        use customcnn::HasParams;
        let mut originals = Vec::with_capacity(dir.len());
        let mut t = 0;
        self.model.visit_params(&mut |_, p| {
            originals.push(dir[t].iter().map(|&(i, _)| p.value.data()[i]).collect::<Vec<_>>());
            t += 1;
        });
        self.place(dir, &originals, h);
        let up = self.loss();
        self.place(dir, &originals, -h);
        let down = self.loss();
        self.place(dir, &originals, 0.0);
        ((up - down) / (2.0 * h), up + down - 2.0 * self.base_loss)
    }

    /// Checks `<grad, dir>` against finite differences along `dir`.
    ///
    /// A failing estimate is retried at a tenth of the step while it is
    /// visibly unconverged: either a kink explains the discrepancy, or the
    /// estimate at the smaller step moves by at least half of it.
    pub fn check(&mut self, analytic: f64, dir: &Direction, tol: f64) -> Probe {
        let mut h = H;
        let (mut numeric, mut second) = self.central(dir, h);
        loop {
            let err = rel_err(analytic, numeric);
            if err <= tol || h < H * 1e-2 * 1.5 {
                return Probe { analytic, numeric, err, step: h };
            }
            let gap = (analytic - numeric).abs();
            let (finer, finer_second) = self.central(dir, h / 10.0);
            let kinked = second.abs() / (2.0 * h) >= 0.5 * gap;
            let unconverged = (finer - numeric).abs() >= 0.5 * gap;
            if !kinked && !unconverged {
                return Probe { analytic, numeric, err, step: h };
            }
            h /= 10.0;
            (numeric, second) = (finer, finer_second);
        }
    }
}

/// Single-coordinate direction.
pub fn coordinate(tensors: usize, tensor: usize, index: usize) -> Direction {
    let mut dir = vec![Vec::new(); tensors];
    dir[tensor].push((index, 1.0));
    dir
}

/// Result of the end-to-end check for one seed.
#[derive(Debug, Default)]
pub struct ModelReport {
    pub coordinate_probes: usize,
    pub directional_probes: usize,
    pub sampled_coordinates: usize,
    pub kink_retries: usize,
    pub worst: f64,
    pub worst_label: String,
}

/// End-to-end gradient check for one seed:
/// per-coordinate probes at `per_tensor` random coordinates of every
/// parameter tensor, plus central-difference directional derivatives along
/// random sign vectors supported on a random `fraction` of all parameters
/// (one direction per tensor and one across all tensors).
pub fn model_check(seed: u64, per_tensor: usize, fraction: f64) -> ModelReport {
    let mut probe = ModelProbe::new(seed);
    let grads = probe.analytic();
    let tensors = grads.len();
    let mut g = rng(seed.wrapping_mul(0x9e37_79b9) ^ 0xfd);
    let mut report = ModelReport::default();
    let record = |p: Probe, label: String, report: &mut ModelReport| {
        if p.step < H {
            report.kink_retries += 1;
        }
        if p.err >= report.worst {
            report.worst = p.err;
            report.worst_label = label;
        }
    };

    for (t, (name, grad)) in grads.iter().enumerate() {
        for _ in 0..per_tensor {
            let i = g.random_range(0..grad.len());
            let p = probe.check(grad[i], &coordinate(tensors, t, i), MODEL_TOL);
            report.coordinate_probes += 1;
            record(p, format!("{name}[{i}]"), &mut report);
        }
    }

    let mut global: Direction = vec![Vec::new(); tensors];
    for (t, (_, grad)) in grads.iter().enumerate() {
        for i in 0..grad.len() {
            if g.random::<f64>() < fraction {
                let sign = if g.random::<bool>() { 1.0 } else { -1.0 };
                global[t].push((i, sign));
            }
        }
    }
    report.sampled_coordinates = global.iter().map(Vec::len).sum();
    let scale = 1.0 / (report.sampled_coordinates as f64).sqrt();
    for entries in &mut global {
        for e in entries.iter_mut() {
            e.1 *= scale;
        }
    }
    let along = |dir: &Direction| -> f64 {
        dir.iter()
            .zip(&grads)
            .map(|(entries, (_, grad))| entries.iter().map(|&(i, d)| grad[i] * d).sum::<f64>())
            .sum()
    };
    for t in 0..tensors {
        if global[t].is_empty() {
            continue;
        }
        let mut dir: Direction = vec![Vec::new(); tensors];
        dir[t] = global[t].clone();
        let p = probe.check(along(&dir), &dir, MODEL_TOL);
        report.directional_probes += 1;
        record(p, format!("direction over sampled {}", grads[t].0), &mut report);
    }
    let p = probe.check(along(&global), &global, MODEL_TOL);
    report.directional_probes += 1;
    record(p, "direction over all sampled parameters".into(), &mut report);
    report
}
