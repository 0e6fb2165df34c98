//! Dense feed-forward networks with hand-written reverse-mode gradients.
//!
//! Parameters of an [`Mlp`] live in one flat vector so that optimizers,
//! soft target updates and serialization all work on plain slices. Layer
//! `l` contributes its weight block (`inputs × outputs`, row-major, so entry
//! `(i, j)` connects input `i` to output `j`) followed by its bias.

mod adam;
mod gaussian;
mod io;
mod matrix;

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use thiserror::Error;

pub use adam::AdamState;
pub use gaussian::{
    log_one_minus_tanh_sq, sample_gaussian_head, squashed_log_prob, GaussianHead, SquashedSample, LOG_STD_MAX,
    LOG_STD_MIN,
};
pub use io::MAGIC;
pub use matrix::Matrix;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("forward cache does not belong to the current parameters")]
    StaleCache,
    #[error("malformed network snapshot: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<(), NnError> {
    if expected != got {
        return Err(NnError::Dimension { context, expected, got });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            // subgradient 0 at the kink, see `derivative`
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative given the pre-activation `z` and output `y`.
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

impl LayerShape {
    fn num_params(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }
}

static NEXT_STAMP: AtomicU64 = AtomicU64::new(1);

fn fresh_stamp() -> u64 {
    NEXT_STAMP.fetch_add(1, Ordering::Relaxed)
}

/// Intermediate values of a forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    stamp: u64,
    /// `activations[0]` is the input, `activations[l + 1]` the output of layer `l`.
    activations: Vec<Matrix>,
    pre_activations: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("cache always holds the input")
    }

    pub fn pre_activations(&self) -> &[Matrix] {
        &self.pre_activations
    }
}

/// Gradients of a scalar loss with respect to every parameter (flat, in
/// parameter order) and to the network input.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Matrix,
}

#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<LayerShape>,
    offsets: Vec<usize>,
    params: Vec<f64>,
    // changes whenever the parameters do; caches remember the stamp they saw
    stamp: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.params == other.params
    }
}

impl Mlp {
    /// Zero-initialized network. `sizes` has one more entry than
    /// `activations`.
    pub fn new(sizes: &[usize], activations: &[Activation]) -> Result<Self, NnError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(NnError::Format("need at least two non-zero layer sizes".into()));
        }
        check_dim("activation list", sizes.len() - 1, activations.len())?;
        let layers: Vec<LayerShape> = sizes
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| LayerShape {
                inputs: w[0],
                outputs: w[1],
                activation,
            })
            .collect();
        let mut offsets = Vec::with_capacity(layers.len());
        let mut total = 0;
        for l in &layers {
            offsets.push(total);
            total += l.num_params();
        }
        Ok(Self {
            layers,
            offsets,
            params: vec![0.0; total],
            stamp: fresh_stamp(),
        })
    }

    /// Uniform fan-in initialization: weights and biases of each layer drawn
    /// from `U(−1/√fan_in, 1/√fan_in)`, except the last layer when
    /// `final_bound` is given.
    pub fn init_uniform<R: Rng + ?Sized>(&mut self, rng: &mut R, final_bound: Option<f64>) {
        let n = self.layers.len();
        for (l, shape) in self.layers.iter().enumerate() {
            let bound = match final_bound {
                Some(b) if l + 1 == n => b,
                _ => 1.0 / (shape.inputs as f64).sqrt(),
            };
            let start = self.offsets[l];
            for p in &mut self.params[start..start + shape.num_params()] {
                *p = rng.random_range(-bound..bound);
            }
        }
        self.stamp = fresh_stamp();
    }

    /// Deterministic actor: `input → hidden → hidden → output`, ReLU hidden
    /// layers and a tanh output whose layer starts within `±3e-3`.
    pub fn actor<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        let mut net = Self::new(
            &[input, hidden, hidden, output],
            &[Activation::Relu, Activation::Relu, Activation::Tanh],
        )
        .expect("valid actor shape");
        net.init_uniform(rng, Some(3e-3));
        net
    }

    /// Stochastic actor emitting `[mean, log_std]` for a squashed Gaussian.
    pub fn gaussian_actor<R: Rng + ?Sized>(input: usize, hidden: usize, action_dim: usize, rng: &mut R) -> Self {
        let mut net = Self::new(
            &[input, hidden, hidden, 2 * action_dim],
            &[Activation::Relu, Activation::Relu, Activation::Identity],
        )
        .expect("valid actor shape");
        net.init_uniform(rng, Some(3e-3));
        net
    }

    /// Scalar-valued critic on the concatenated `(state, action)` input.
    pub fn critic<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut net = Self::new(
            &[input, hidden, hidden, 1],
            &[Activation::Relu, Activation::Relu, Activation::Identity],
        )
        .expect("valid critic shape");
        net.init_uniform(rng, None);
        net
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter access; outstanding forward caches become stale.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.stamp = fresh_stamp();
        &mut self.params
    }

    /// Range of layer `l`'s weight block inside the flat parameter vector.
    pub fn weight_range(&self, l: usize) -> std::ops::Range<usize> {
        let s = self.offsets[l];
        s..s + self.layers[l].inputs * self.layers[l].outputs
    }

    pub fn bias_range(&self, l: usize) -> std::ops::Range<usize> {
        let e = self.weight_range(l).end;
        e..e + self.layers[l].outputs
    }

    fn layer_params(&self, l: usize) -> (&[f64], &[f64]) {
        (&self.params[self.weight_range(l)], &self.params[self.bias_range(l)])
    }

    fn affine(&self, l: usize, x: &Matrix) -> Matrix {
        let shape = self.layers[l];
        let (w, b) = self.layer_params(l);
        let mut z = Matrix::zeros(x.rows(), shape.outputs);
        matrix::gemm(x.rows(), shape.inputs, shape.outputs, x.data(), (shape.inputs, 1), w, (shape.outputs, 1), 0.0, z.data_mut(), (shape.outputs, 1));
        for row in z.data_mut().chunks_exact_mut(shape.outputs) {
            for (zi, bi) in row.iter_mut().zip(b) {
                *zi += bi;
            }
        }
        z
    }

    /// Batched forward pass (one sample per row), keeping what the backward
    /// pass needs.
    pub fn forward(&self, input: &Matrix) -> Result<(Matrix, ForwardCache), NnError> {
        check_dim("network input", self.input_dim(), input.cols())?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        activations.push(input.clone());
        for (l, shape) in self.layers.iter().enumerate() {
            let z = self.affine(l, activations.last().unwrap());
            let y = z.map(|v| shape.activation.apply(v));
            pre_activations.push(z);
            activations.push(y);
        }
        let out = activations.last().unwrap().clone();
        Ok((
            out,
            ForwardCache {
                stamp: self.stamp,
                activations,
                pre_activations,
            },
        ))
    }

    /// Forward pass without a cache.
    pub fn predict(&self, input: &Matrix) -> Result<Matrix, NnError> {
        check_dim("network input", self.input_dim(), input.cols())?;
        let mut x = self.affine(0, input);
        x.map_inplace(|v| self.layers[0].activation.apply(v));
        for l in 1..self.layers.len() {
            let act = self.layers[l].activation;
            x = self.affine(l, &x);
            x.map_inplace(|v| act.apply(v));
        }
        Ok(x)
    }

    pub fn predict_one(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        let x = Matrix::from_vec(1, input.len(), input.to_vec())?;
        Ok(self.predict(&x)?.into_data())
    }

    /// Reverse pass: `grad_output` holds `∂L/∂y` for every output entry of
    /// the cached batch; returns `∂L/∂θ` and `∂L/∂x`.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &Matrix) -> Result<Gradients, NnError> {
        self.backward_impl(cache, grad_output, true)
    }

    /// Like [`Mlp::backward`] but only propagates to the input; the returned
    /// parameter gradient is empty.
    pub fn backward_input(&self, cache: &ForwardCache, grad_output: &Matrix) -> Result<Matrix, NnError> {
        Ok(self.backward_impl(cache, grad_output, false)?.input)
    }

    fn backward_impl(&self, cache: &ForwardCache, grad_output: &Matrix, with_params: bool) -> Result<Gradients, NnError> {
        if cache.stamp != self.stamp || cache.pre_activations.len() != self.layers.len() {
            return Err(NnError::StaleCache);
        }
        let batch = cache.activations[0].rows();
        check_dim("output gradient rows", batch, grad_output.rows())?;
        check_dim("output gradient cols", self.output_dim(), grad_output.cols())?;
        let mut grads = if with_params { vec![0.0; self.params.len()] } else { Vec::new() };
        let mut upstream = grad_output.clone();
        for l in (0..self.layers.len()).rev() {
            let shape = self.layers[l];
            let z = &cache.pre_activations[l];
            let y = &cache.activations[l + 1];
            let mut dz = upstream;
            for ((d, &zv), &yv) in dz.data_mut().iter_mut().zip(z.data()).zip(y.data()) {
                *d *= shape.activation.derivative(zv, yv);
            }
            let x = &cache.activations[l];
            let wr = self.weight_range(l);
            let br = self.bias_range(l);
            if with_params {
                // ∂L/∂W = xᵀ dz
                matrix::gemm(shape.inputs, batch, shape.outputs, x.data(), (1, shape.inputs), dz.data(), (shape.outputs, 1), 0.0, &mut grads[wr.clone()], (shape.outputs, 1));
                let db = &mut grads[br];
                for row in dz.data().chunks_exact(shape.outputs) {
                    for (g, d) in db.iter_mut().zip(row) {
                        *g += d;
                    }
                }
            }
            // ∂L/∂x = dz Wᵀ
            let mut dx = Matrix::zeros(batch, shape.inputs);
            matrix::gemm(batch, shape.outputs, shape.inputs, dz.data(), (shape.outputs, 1), &self.params[wr], (1, shape.outputs), 0.0, dx.data_mut(), (shape.inputs, 1));
            upstream = dx;
        }
        Ok(Gradients {
            params: grads,
            input: upstream,
        })
    }

    /// Adam update of all parameters.
    pub fn apply_adam(&mut self, grads: &[f64], opt: &mut AdamState) -> Result<(), NnError> {
        opt.step(&mut self.params, grads)?;
        self.stamp = fresh_stamp();
        Ok(())
    }

    /// `θ ← τ θ_src + (1 − τ) θ`.
    pub fn soft_update_from(&mut self, src: &Mlp, tau: f64) -> Result<(), NnError> {
        if self.layers != src.layers {
            return Err(NnError::Format("soft update between different architectures".into()));
        }
        for (t, s) in self.params.iter_mut().zip(&src.params) {
            *t = tau * s + (1.0 - tau) * *t;
        }
        self.stamp = fresh_stamp();
        Ok(())
    }
}
