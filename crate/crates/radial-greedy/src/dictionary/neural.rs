//! Bounded-weight multilayer perceptrons: forward evaluation, backpropagation
//! through the grid quadrature, and the multi-start projected-gradient inner
//! solver for [`super::NeuralCone`].
//!
//! The atom scale is kept outside the network: `realize` multiplies the plain
//! forward pass by the scale, which matches scaling the affine output layer
//! and keeps the cone law exact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::functional::Functional;
use crate::space::Vector;

use super::{line_search_scale, Atom, Dictionary, Generator, InnerSolve, InnerSolveOptions, NeuralCone};

/// Scalar activation applied componentwise on every hidden layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }

    /// Derivative expressed through the activation value.
    fn derivative_from_value(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::InvalidParameter(format!("unknown activation '{other}'"))),
        }
    }
}

/// One affine layer, row-major.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct NeuralLayer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl NeuralLayer {
    fn zeros(rows: usize, cols: usize) -> Self {
        NeuralLayer {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
        }
    }

    fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .chain(self.bias.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// The full weight family of one network.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct NeuralWeights {
    pub layers: Vec<NeuralLayer>,
}

impl NeuralWeights {
    pub fn zeros(architecture: &[usize]) -> Self {
        let layers = architecture
            .windows(2)
            .map(|w| NeuralLayer::zeros(w[1], w[0]))
            .collect();
        NeuralWeights { layers }
    }

    pub fn random<R: Rng>(architecture: &[usize], bound: f64, rng: &mut R) -> Self {
        let mut out = Self::zeros(architecture);
        for layer in &mut out.layers {
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = rng.gen_range(-bound..bound);
            }
        }
        out
    }

    /// Max norm over every weight matrix and bias.
    pub fn total_norm(&self) -> f64 {
        self.layers.iter().fold(0.0f64, |m, l| m.max(l.max_abs()))
    }

    pub(crate) fn check_bound(&self, bound: f64) -> Result<()> {
        if self.total_norm() > bound * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "network weights exceed the bound {bound}"
            )));
        }
        Ok(())
    }

    pub(crate) fn check_architecture(&self, architecture: &[usize]) -> Result<()> {
        let ok = self.layers.len() + 1 == architecture.len()
            && self
                .layers
                .iter()
                .zip(architecture.windows(2))
                .all(|(l, w)| l.cols == w[0] && l.rows == w[1]);
        if !ok {
            return Err(Error::InvalidParameter(
                "network weights do not match the cone architecture".into(),
            ));
        }
        Ok(())
    }

    /// Forward scheme: hidden layers are activated affine maps, the output
    /// layer is affine; scalar output.
    pub fn forward(&self, input: &[f64], activation: Activation) -> f64 {
        let mut x: Vec<f64> = input.to_vec();
        let last = self.layers.len() - 1;
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut y = vec![0.0; layer.rows];
            for (r, out) in y.iter_mut().enumerate() {
                let mut acc = layer.bias[r];
                let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
                for (w, xi) in row.iter().zip(&x) {
                    acc += w * xi;
                }
                *out = if idx == last { acc } else { activation.apply(acc) };
            }
            x = y;
        }
        x[0]
    }

    /// Forward pass keeping the per-layer activations for backpropagation.
    fn forward_trace(&self, input: &[f64], activation: Activation) -> Vec<Vec<f64>> {
        let mut trace = Vec::with_capacity(self.layers.len() + 1);
        trace.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (idx, layer) in self.layers.iter().enumerate() {
            let x = trace.last().unwrap();
            let mut y = vec![0.0; layer.rows];
            for (r, out) in y.iter_mut().enumerate() {
                let mut acc = layer.bias[r];
                let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
                for (w, xi) in row.iter().zip(x) {
                    acc += w * xi;
                }
                *out = if idx == last { acc } else { activation.apply(acc) };
            }
            trace.push(y);
        }
        trace
    }

    /// Accumulate `sensitivity * d(output)/d(weights)` at one grid node.
    fn accumulate_grad(
        &self,
        input: &[f64],
        activation: Activation,
        sensitivity: f64,
        grad: &mut NeuralWeights,
    ) {
        let trace = self.forward_trace(input, activation);
        let last = self.layers.len() - 1;
        // delta starts at the scalar output
        let mut delta = vec![sensitivity];
        for idx in (0..self.layers.len()).rev() {
            let layer = &self.layers[idx];
            let x = &trace[idx];
            let y = &trace[idx + 1];
            // activated layers: fold the activation derivative into delta
            if idx != last {
                for (d, yi) in delta.iter_mut().zip(y) {
                    *d *= activation.derivative_from_value(*yi);
                }
            }
            let glayer = &mut grad.layers[idx];
            for (r, &d) in delta.iter().enumerate() {
                glayer.bias[r] += d;
                let grow = &mut glayer.weights[r * layer.cols..(r + 1) * layer.cols];
                for (g, xi) in grow.iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
            if idx > 0 {
                let mut next = vec![0.0; layer.cols];
                for (r, &d) in delta.iter().enumerate() {
                    let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
                    for (n, w) in next.iter_mut().zip(row) {
                        *n += d * w;
                    }
                }
                delta = next;
            }
        }
    }

    fn project(&mut self, bound: f64) {
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = w.clamp(-bound, bound);
            }
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct RestartOutcome {
    value: f64,
    lambda: f64,
    weights: NeuralWeights,
}

/// Multi-start projected gradient descent on the weights with periodic
/// re-optimization of the outer scale; the best restart wins and ties go to
/// the lowest restart index.
pub(super) fn inner_neural(
    dict: &Dictionary,
    cone: &NeuralCone,
    e: &Functional,
    u: &Vector,
    e_u: f64,
    opts: &InnerSolveOptions,
) -> Result<InnerSolve> {
    let outcomes: Vec<Result<RestartOutcome>> = (0..opts.nn_restarts)
        .into_par_iter()
        .map(|restart| optimize_restart(cone, e, u, opts, restart))
        .collect();
    let mut best: Option<(usize, RestartOutcome)> = None;
    for (idx, o) in outcomes.into_iter().enumerate() {
        let o = o?;
        if best.as_ref().is_none_or(|(_, b)| o.value < b.value) {
            best = Some((idx, o));
        }
    }
    let (restart, out) = best.expect("at least one restart");
    if !(out.value < e_u) || !out.value.is_finite() {
        return Ok(dict.zero_solve(u, e_u));
    }
    let atom = Atom::new(out.lambda, Generator::Neural { weights: out.weights });
    let z = dict.realize(&atom)?;
    let value = e.evaluate(&u.add(&z))?;
    Ok(InnerSolve {
        summary: format!("nn;restart={restart};lambda={:.6e}", out.lambda),
        atom: atom.with_cache(z.clone()),
        correction: z,
        value,
    })
}

fn optimize_restart(
    cone: &NeuralCone,
    e: &Functional,
    u: &Vector,
    opts: &InnerSolveOptions,
    restart: usize,
) -> Result<RestartOutcome> {
    let bound = cone.weight_bound;
    let activation = cone.activation;
    let space = &cone.space;
    let quad_weight = space.quad_weight();
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(opts.seed ^ (restart as u64 + 1)));
    let mut weights = NeuralWeights::random(&cone.architecture, bound, &mut rng);

    let evaluate_at = |w: &NeuralWeights, lambda: f64| -> Result<f64> {
        let y = cone.unit_realization(w);
        e.evaluate(&u.axpy(lambda, &y))
            .map_err(|err| Error::NumericalFailure(format!("neural atom (restart {restart}): {err}")))
    };
    let rescale = |w: &NeuralWeights, current: f64| -> Result<f64> {
        let y = cone.unit_realization(w);
        if y.is_zero() {
            Ok(current)
        } else {
            line_search_scale(e, u, &y)
        }
    };

    let mut lambda = rescale(&weights, 1.0)?;
    let mut best = RestartOutcome {
        value: evaluate_at(&weights, lambda)?,
        lambda,
        weights: weights.clone(),
    };

    for step in 1..=opts.nn_steps {
        // gradient of E(u + lambda * R(weights)) by backpropagation through
        // the grid quadrature
        let y = cone.unit_realization(&weights);
        let g = e.gradient(&u.axpy(lambda, &y))?;
        let mut grad = NeuralWeights::zeros(&cone.architecture);
        for (node, gc) in cone.nodes.iter().zip(g.coeffs()) {
            let sensitivity = lambda * quad_weight * gc;
            weights.accumulate_grad(node, activation, sensitivity, &mut grad);
        }
        for (layer, glayer) in weights.layers.iter_mut().zip(&grad.layers) {
            for (w, dw) in layer.weights.iter_mut().zip(&glayer.weights) {
                *w -= opts.nn_step_size * dw;
            }
            for (b, db) in layer.bias.iter_mut().zip(&glayer.bias) {
                *b -= opts.nn_step_size * db;
            }
        }
        weights.project(bound);
        assert!(
            weights.total_norm() <= bound * (1.0 + 1e-12),
            "projection must keep the weight bound"
        );
        if step % 50 == 0 {
            lambda = rescale(&weights, lambda)?;
        }
        let value = evaluate_at(&weights, lambda)?;
        if value < best.value {
            best = RestartOutcome {
                value,
                lambda,
                weights: weights.clone(),
            };
        }
    }

    // final polish of the outer scale on the best weights seen
    let lambda = rescale(&best.weights, best.lambda)?;
    let value = evaluate_at(&best.weights, lambda)?;
    if value < best.value {
        best.lambda = lambda;
        best.value = value;
    }
    Ok(best)
}
