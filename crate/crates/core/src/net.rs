//! Dense networks with hand-written forward and backward passes, plus an
//! adaptive-moment optimizer with global-norm clipping.
//!
//! Parameters live in one flat `Vec<f64>` per network. Layer `l` stores its
//! weight matrix row-major with shape `(dims[l + 1], dims[l])`, followed by
//! its bias.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    None,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::None => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::None => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Head {
    CategoricalLogits,
    Scalar,
    Vector,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Orthogonal hidden layers with `hidden_gain`; the output layer is
    /// orthogonal too, rescaled so its entries have standard deviation
    /// `output_std`. Biases are zero.
    Orthogonal { hidden_gain: f64, output_std: f64 },
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for weights and biases.
    FanInUniform,
    Zeros,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    dims: Vec<usize>,
    activations: Vec<Activation>,
    head: Head,
    params: Vec<f64>,
}

/// Activations kept from a batched forward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    batch: usize,
    /// `inputs[l]` is the batch fed to layer `l`; the last entry is the output.
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Cache {
    pub fn output(&self) -> &[f64] {
        self.inputs.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

impl Mlp {
    pub fn zeros(dims: &[usize], activations: &[Activation], head: Head) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!("invalid layer dims {dims:?}")));
        }
        if activations.len() != dims.len() - 1 {
            return Err(Error::shape("mlp activations", dims.len() - 1, activations.len()));
        }
        let count = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Self {
            dims: dims.to_vec(),
            activations: activations.to_vec(),
            head,
            params: vec![0.0; count],
        })
    }

    pub fn init<R: Rng + ?Sized>(
        dims: &[usize],
        activations: &[Activation],
        head: Head,
        init: Init,
        rng: &mut R,
    ) -> Result<Self> {
        let mut mlp = Self::zeros(dims, activations, head)?;
        let layers = mlp.layer_count();
        for l in 0..layers {
            let (fan_in, fan_out) = (mlp.dims[l], mlp.dims[l + 1]);
            let (w_range, b_range) = mlp.layer_ranges(l);
            match init {
                Init::Orthogonal {
                    hidden_gain,
                    output_std,
                } => {
                    let scale = if l + 1 == layers {
                        output_std * (fan_in.max(fan_out) as f64).sqrt()
                    } else {
                        hidden_gain
                    };
                    let w = orthogonal(fan_out, fan_in, rng);
                    for (dst, src) in mlp.params[w_range].iter_mut().zip(w) {
                        *dst = src * scale;
                    }
                }
                Init::FanInUniform => {
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    let dist = Uniform::new_inclusive(-bound, bound);
                    for p in &mut mlp.params[w_range] {
                        *p = dist.sample(rng);
                    }
                    for p in &mut mlp.params[b_range] {
                        *p = dist.sample(rng);
                    }
                }
                Init::Zeros => {}
            }
        }
        Ok(mlp)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("dims are non-empty")
    }

    pub fn layer_count(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::shape("mlp parameters", self.params.len(), params.len()));
        }
        self.params = params;
        Ok(())
    }

    /// Weight and bias index ranges of layer `l` inside the flat parameters.
    pub fn layer_ranges(&self, l: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let offset: usize = self.dims[..=l]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum();
        let w_len = self.dims[l] * self.dims[l + 1];
        (
            offset..offset + w_len,
            offset + w_len..offset + w_len + self.dims[l + 1],
        )
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let cache = self.forward_cached(x, 1)?;
        Ok(cache.output().to_vec())
    }

    /// Forward pass over `batch` row-major inputs.
    pub fn forward_cached(&self, xs: &[f64], batch: usize) -> Result<Cache> {
        if xs.len() != batch * self.input_dim() {
            return Err(Error::shape("mlp input", batch * self.input_dim(), xs.len()));
        }
        let mut inputs = Vec::with_capacity(self.dims.len());
        let mut pre = Vec::with_capacity(self.layer_count());
        inputs.push(xs.to_vec());
        for l in 0..self.layer_count() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let (w_range, b_range) = self.layer_ranges(l);
            let w = &self.params[w_range];
            let b = &self.params[b_range];
            let x = inputs.last().expect("input pushed");
            let mut z = vec![0.0; batch * n_out];
            for s in 0..batch {
                let xr = &x[s * n_in..(s + 1) * n_in];
                let zr = &mut z[s * n_out..(s + 1) * n_out];
                for o in 0..n_out {
                    zr[o] = b[o] + dot(&w[o * n_in..(o + 1) * n_in], xr);
                }
            }
            let act = self.activations[l];
            let y: Vec<f64> = z.iter().map(|&v| act.apply(v)).collect();
            pre.push(z);
            inputs.push(y);
        }
        Ok(Cache { batch, inputs, pre })
    }

    /// Gradients of `sum(output * output_grad)` with respect to the
    /// parameters and the input batch.
    pub fn backward(&self, cache: &Cache, output_grad: &[f64]) -> Result<Gradients> {
        let batch = cache.batch;
        if cache.inputs.len() != self.dims.len() || cache.pre.len() != self.layer_count() {
            return Err(Error::Protocol("forward cache does not match this network".into()));
        }
        if output_grad.len() != batch * self.output_dim() {
            return Err(Error::shape(
                "mlp output gradient",
                batch * self.output_dim(),
                output_grad.len(),
            ));
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut upstream = output_grad.to_vec();
        for l in (0..self.layer_count()).rev() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let act = self.activations[l];
            let z = &cache.pre[l];
            let y = &cache.inputs[l + 1];
            let x = &cache.inputs[l];
            for (g, (&zv, &yv)) in upstream.iter_mut().zip(z.iter().zip(y)) {
                *g *= act.derivative(zv, yv);
            }
            let (w_range, b_range) = self.layer_ranges(l);
            let w = &self.params[w_range.clone()];
            {
                let (gw, gb) = grads[w_range.start..b_range.end].split_at_mut(w_range.len());
                for s in 0..batch {
                    let xr = &x[s * n_in..(s + 1) * n_in];
                    let dr = &upstream[s * n_out..(s + 1) * n_out];
                    for o in 0..n_out {
                        let d = dr[o];
                        if d == 0.0 {
                            continue;
                        }
                        gb[o] += d;
                        axpy(d, xr, &mut gw[o * n_in..(o + 1) * n_in]);
                    }
                }
            }
            let mut down = vec![0.0; batch * n_in];
            for s in 0..batch {
                let dr = &upstream[s * n_out..(s + 1) * n_out];
                let out = &mut down[s * n_in..(s + 1) * n_in];
                for o in 0..n_out {
                    let d = dr[o];
                    if d != 0.0 {
                        axpy(d, &w[o * n_in..(o + 1) * n_in], out);
                    }
                }
            }
            upstream = down;
        }
        Ok(Gradients {
            params: grads,
            input: upstream,
        })
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        sum += a[i] * b[i];
    }
    sum
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// A `rows x cols` matrix with orthonormal rows or columns (whichever is
/// shorter), from the QR decomposition of a standard-normal matrix.
pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Vec<f64> {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let a = DMatrix::<f64>::from_fn(tall, short, |_, _| StandardNormal.sample(rng));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..short {
        if r[(c, c)] < 0.0 {
            for i in 0..tall {
                q[(i, c)] = -q[(i, c)];
            }
        }
    }
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[i * cols + j] = if rows >= cols { q[(i, j)] } else { q[(j, i)] };
        }
    }
    out
}

/// Actor and critic of one agent: `in -> 64 -> 64 -> out` with tanh between
/// layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub actor: Mlp,
    pub critic: Mlp,
}

pub const HIDDEN_WIDTH: usize = 64;
pub const ACTOR_OUTPUT_STD: f64 = 0.01;
pub const CRITIC_OUTPUT_STD: f64 = 1.0;

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, logits: usize, rng: &mut R) -> Result<Self> {
        let acts = [Activation::Tanh, Activation::Tanh, Activation::None];
        let gain = std::f64::consts::SQRT_2;
        let actor = Mlp::init(
            &[input_dim, HIDDEN_WIDTH, HIDDEN_WIDTH, logits],
            &acts,
            Head::CategoricalLogits,
            Init::Orthogonal {
                hidden_gain: gain,
                output_std: ACTOR_OUTPUT_STD,
            },
            rng,
        )?;
        let critic = Mlp::init(
            &[input_dim, HIDDEN_WIDTH, HIDDEN_WIDTH, 1],
            &acts,
            Head::Scalar,
            Init::Orthogonal {
                hidden_gain: gain,
                output_std: CRITIC_OUTPUT_STD,
            },
            rng,
        )?;
        Ok(Self { actor, critic })
    }

    pub fn input_dim(&self) -> usize {
        self.actor.input_dim()
    }
}

/// Learning-rate schedule, linear to zero over the run when annealing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    pub anneal: bool,
}

impl LrSchedule {
    /// Rate after `progress` (fraction of the budget, in `[0, 1]`) was spent.
    pub fn lr_at(&self, progress: f64) -> f64 {
        if self.anneal {
            self.initial * (1.0 - progress.clamp(0.0, 1.0))
        } else {
            self.initial
        }
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adaptive-moment optimizer state over one or more flat parameter groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub schedule: LrSchedule,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub grad_norm: f64,
    pub clipped_norm: f64,
    pub lr: f64,
}

/// Scales all groups so their joint L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(groups: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let norm = groups
        .iter()
        .flat_map(|g| g.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in groups.iter_mut() {
            for x in g.iter_mut() {
                *x *= scale;
            }
        }
    }
    norm
}

impl Adam {
    pub fn new(param_count: usize, schedule: LrSchedule) -> Self {
        Self {
            schedule,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Clips `grads` jointly to `max_grad_norm`, then applies one update with
    /// learning rate `lr` to each `(params, grads)` group in order.
    pub fn step(
        &mut self,
        groups: &mut [(&mut [f64], &mut [f64])],
        lr: f64,
        max_grad_norm: Option<f64>,
    ) -> Result<StepInfo> {
        let total: usize = groups.iter().map(|(p, _)| p.len()).sum();
        if total != self.m.len() {
            return Err(Error::shape("optimizer parameters", self.m.len(), total));
        }
        for (gi, (p, g)) in groups.iter().enumerate() {
            if p.len() != g.len() {
                return Err(Error::shape("optimizer gradient group", p.len(), g.len()));
            }
            if let Some(idx) = g.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient group {gi} index {idx} is {}",
                    g[idx]
                )));
            }
        }
        let (grad_norm, clipped_norm) = {
            let mut gs: Vec<&mut [f64]> = groups.iter_mut().map(|(_, g)| &mut **g).collect();
            match max_grad_norm {
                Some(max) => {
                    let before = clip_global_norm(&mut gs, max);
                    (before, before.min(max))
                }
                None => {
                    let n = gs.iter().flat_map(|g| g.iter()).map(|x| x * x).sum::<f64>().sqrt();
                    (n, n)
                }
            }
        };

        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        let mut offset = 0;
        for (p, g) in groups.iter_mut() {
            let m = &mut self.m[offset..offset + p.len()];
            let v = &mut self.v[offset..offset + p.len()];
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * gi;
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
            offset += p.len();
        }
        Ok(StepInfo {
            grad_norm,
            clipped_norm,
            lr,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn parameter_count_matches_dims() {
        let m = Mlp::zeros(&[18, 64, 64, 5], &[Activation::Tanh; 3], Head::CategoricalLogits).unwrap();
        assert_eq!(m.param_count(), 18 * 64 + 64 + 64 * 64 + 64 + 64 * 5 + 5);
        assert!(Mlp::zeros(&[3], &[], Head::Scalar).is_err());
        assert!(Mlp::zeros(&[3, 2], &[], Head::Scalar).is_err());
    }

    #[test]
    fn actor_output_std_is_small() {
        let mut stds = Vec::new();
        for seed in 0..10 {
            let ac = ActorCritic::new(18, 5, &mut rng(seed)).unwrap();
            let (w, _) = ac.actor.layer_ranges(2);
            let ws = &ac.actor.params()[w];
            let mean = ws.iter().sum::<f64>() / ws.len() as f64;
            let var = ws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / ws.len() as f64;
            stds.push(var.sqrt());
        }
        let avg = stds.iter().sum::<f64>() / stds.len() as f64;
        assert!((avg - 0.01).abs() < 0.002, "mean std {avg}");
    }

    #[test]
    fn init_has_zero_bias_and_is_deterministic() {
        let a = ActorCritic::new(10, 4, &mut rng(3)).unwrap();
        let b = ActorCritic::new(10, 4, &mut rng(3)).unwrap();
        assert_eq!(a, b);
        for l in 0..3 {
            let (_, br) = a.actor.layer_ranges(l);
            assert!(a.actor.params()[br].iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn orthogonal_rows_are_orthonormal() {
        let w = orthogonal(5, 64, &mut rng(1));
        for i in 0..5 {
            for j in 0..5 {
                let d = dot(&w[i * 64..(i + 1) * 64], &w[j * 64..(j + 1) * 64]);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let m = Mlp::zeros(&[3, 4, 2], &[Activation::Tanh, Activation::None], Head::CategoricalLogits).unwrap();
        assert_eq!(m.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn tanh_hidden_layers_are_bounded() {
        let m = Mlp::init(
            &[2, 8, 1],
            &[Activation::Tanh, Activation::None],
            Head::Scalar,
            Init::FanInUniform,
            &mut rng(0),
        )
        .unwrap();
        let cache = m.forward_cached(&[1e6, -1e6], 1).unwrap();
        assert!(cache.inputs[1].iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn hand_computed_tiny_net() {
        // 2 -> 2 (tanh) -> 2 (tanh) -> 1
        let mut m = Mlp::zeros(&[2, 2, 2, 1], &[Activation::Tanh, Activation::Tanh, Activation::None], Head::Scalar).unwrap();
        m.set_params(vec![
            0.5, -0.25, 0.1, 0.2, // W1
            0.0, 0.1, // b1
            1.0, 0.0, -1.0, 0.5, // W2
            0.05, 0.0, // b2
            2.0, -1.0, // W3
            0.3, // b3
        ])
        .unwrap();
        let x = [1.0, 2.0];
        let h1 = [(0.5f64 - 0.5).tanh(), (0.1f64 + 0.4 + 0.1).tanh()];
        let h2 = [(h1[0] + 0.05).tanh(), (-h1[0] + 0.5 * h1[1]).tanh()];
        let y = 2.0 * h2[0] - h2[1] + 0.3;
        let out = m.forward(&x).unwrap();
        assert!((out[0] - y).abs() < 1e-15);
    }

    fn finite_difference_check(m: &Mlp, x: &[f64], batch: usize, g_out: &[f64]) -> f64 {
        let cache = m.forward_cached(x, batch).unwrap();
        let grads = m.backward(&cache, g_out).unwrap();
        let loss = |mm: &Mlp| -> f64 {
            let c = mm.forward_cached(x, batch).unwrap();
            c.output().iter().zip(g_out).map(|(a, b)| a * b).sum()
        };
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..m.param_count() {
            let mut plus = m.clone();
            plus.params_mut()[i] += h;
            let mut minus = m.clone();
            minus.params_mut()[i] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let analytic = grads.params[i];
            let rel = (numeric - analytic).abs() / (numeric.abs() + analytic.abs()).max(1e-6);
            worst = worst.max(rel);
        }
        worst
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut r = rng(11);
        for &act in &[Activation::Tanh, Activation::Relu, Activation::None] {
            let m = Mlp::init(&[3, 5, 4, 2], &[act, act, Activation::None], Head::Vector, Init::FanInUniform, &mut r).unwrap();
            let x: Vec<f64> = (0..6).map(|_| r.gen_range(-1.0..1.0)).collect();
            let g: Vec<f64> = (0..4).map(|_| r.gen_range(-1.0..1.0)).collect();
            assert!(finite_difference_check(&m, &x, 2, &g) < 1e-4);
        }
    }

    #[test]
    fn zero_and_scaled_output_grads() {
        let m = Mlp::init(&[3, 4, 2], &[Activation::Tanh, Activation::None], Head::Vector, Init::FanInUniform, &mut rng(2)).unwrap();
        let c = m.forward_cached(&[0.1, 0.2, 0.3], 1).unwrap();
        let zero = m.backward(&c, &[0.0, 0.0]).unwrap();
        assert!(zero.params.iter().all(|&g| g == 0.0));
        let g1 = m.backward(&c, &[0.3, -0.7]).unwrap();
        let g2 = m.backward(&c, &[0.6, -1.4]).unwrap();
        for (a, b) in g1.params.iter().zip(&g2.params) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_errors() {
        let m = Mlp::zeros(&[3, 2], &[Activation::None], Head::Vector).unwrap();
        assert!(matches!(m.forward(&[1.0]), Err(Error::Shape { .. })));
        let c = m.forward_cached(&[1.0, 2.0, 3.0], 1).unwrap();
        assert!(m.backward(&c, &[1.0]).is_err());
    }

    #[test]
    fn clipping_halves_unit_norm() {
        let mut g = vec![0.6, 0.8];
        let norm = clip_global_norm(&mut [&mut g[..]], 0.5);
        assert!((norm - 1.0).abs() < 1e-12);
        assert!((g[0] - 0.3).abs() < 1e-12 && (g[1] - 0.4).abs() < 1e-12);

        let mut small = vec![0.1, 0.1];
        clip_global_norm(&mut [&mut small[..]], 0.5);
        assert_eq!(small, vec![0.1, 0.1]);
    }

    #[test]
    fn adam_first_step_moves_by_lr_and_zero_grads_do_nothing() {
        let sched = LrSchedule { initial: 1e-3, anneal: false };
        let mut opt = Adam::new(2, sched);
        let mut p = vec![1.0, 1.0];
        let mut zero = vec![0.0, 0.0];
        opt.step(&mut [(&mut p[..], &mut zero[..])], 1e-3, Some(0.5)).unwrap();
        assert_eq!(p, vec![1.0, 1.0]);

        let mut opt = Adam::new(2, sched);
        let mut p = vec![1.0, 1.0];
        let mut g = vec![0.6, -0.8];
        let info = opt.step(&mut [(&mut p[..], &mut g[..])], 1e-3, Some(0.5)).unwrap();
        assert!((info.grad_norm - 1.0).abs() < 1e-12);
        assert!((g[0] - 0.3).abs() < 1e-12);
        // Bias-corrected first step has magnitude ~lr in each coordinate.
        assert!((p[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((p[1] - (1.0 + 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn non_finite_gradients_rejected() {
        let mut opt = Adam::new(1, LrSchedule { initial: 1e-3, anneal: true });
        let mut p = vec![0.0];
        let mut g = vec![f64::NAN];
        assert!(matches!(opt.step(&mut [(&mut p[..], &mut g[..])], 1e-3, None), Err(Error::NonFinite(_))));
    }

    #[test]
    fn anneal_halves_at_midpoint() {
        let s = LrSchedule { initial: 1e-3, anneal: true };
        assert!((s.lr_at(0.5) - 5e-4).abs() < 1e-15);
        assert_eq!(s.lr_at(0.0), 1e-3);
        assert_eq!(LrSchedule { initial: 1e-3, anneal: false }.lr_at(0.5), 1e-3);
    }
}
