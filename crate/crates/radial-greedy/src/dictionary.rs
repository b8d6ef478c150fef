//! Radial dictionaries (cones of atoms) and the dictionary-optimization map
//! `argmin_{z in D} E(u + z)`.
//!
//! Every dictionary is a cone: an [`Atom`] is `scale * generator` and
//! `realize` always computes the unit realization first and multiplies by the
//! scale last, so the cone law `realize(lambda * atom) = lambda * realize(atom)`
//! holds to rounding. The zero atom is admissible in every family, which makes
//! the inner minimizer structurally non-increasing.

mod neural;

pub use neural::{Activation, NeuralLayer, NeuralWeights};

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::functional::{Functional, QuadraticMatrix};
use crate::space::{Space, Vector};

/// Golden-section iteration count for line searches without a closed form.
const LINE_SEARCH_GOLDEN_ITERS: usize = 60;

/// Family-specific generator parameters of an atom.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    Basis { index: usize },
    Monomial { beta: f64 },
    Rank1 { wx: Vec<f64>, wy: Vec<f64> },
    Neural { weights: NeuralWeights },
}

/// A dictionary element `scale * generator`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Atom {
    pub scale: f64,
    pub generator: Generator,
    #[serde(skip)]
    cached: Option<Vector>,
}

impl PartialEq for Atom {
    fn eq(&self, other: &Self) -> bool {
        self.scale == other.scale && self.generator == other.generator
    }
}

impl Atom {
    pub fn new(scale: f64, generator: Generator) -> Atom {
        Atom {
            scale,
            generator,
            cached: None,
        }
    }

    /// Same generator at a different scale. Drops the cached realization.
    pub fn with_scale(&self, scale: f64) -> Atom {
        Atom::new(scale, self.generator.clone())
    }

    /// Realization memoized by the solver that produced this atom.
    pub fn cached_realization(&self) -> Option<&Vector> {
        self.cached.as_ref()
    }

    fn with_cache(mut self, v: Vector) -> Atom {
        self.cached = Some(v);
        self
    }
}

/// Finitely many linearly independent directions and their scalings.
#[derive(Debug, Clone)]
pub struct BasisCone {
    vectors: Vec<Vector>,
    space: Space,
}

impl BasisCone {
    pub fn new(vectors: Vec<Vector>) -> Result<Self> {
        let space = match vectors.first() {
            Some(v) => v.space().clone(),
            None => return Err(Error::InvalidParameter("basis cone needs at least one vector".into())),
        };
        if vectors.iter().any(|v| v.space() != &space) {
            return Err(Error::SpaceMismatch("basis vectors from different spaces".into()));
        }
        if vectors.len() > space.dim() {
            return Err(Error::InvalidParameter(
                "more basis vectors than the space dimension".into(),
            ));
        }
        let m = DMatrix::from_fn(space.dim(), vectors.len(), |i, j| vectors[j].coeffs()[i]);
        let svd = m.svd(false, false);
        let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > 1e-12 * smax.max(1.0))
            .count();
        if rank != vectors.len() {
            return Err(Error::InvalidParameter(
                "basis cone vectors are linearly dependent".into(),
            ));
        }
        Ok(BasisCone { vectors, space })
    }

    /// The coordinate directions of `space`.
    pub fn coordinate(space: &Space) -> Result<Self> {
        let n = space.dim();
        let vectors = (0..n)
            .map(|i| {
                let mut c = vec![0.0; n];
                c[i] = 1.0;
                space.vector(c)
            })
            .collect::<Result<Vec<_>>>()?;
        BasisCone::new(vectors)
    }

    pub fn vectors(&self) -> &[Vector] {
        &self.vectors
    }
}

/// The cone `{lambda * x^beta : beta in [lo, hi]}` sampled on a 1-D grid of
/// `[0, 1]`, with `x^0 := 1` everywhere.
#[derive(Debug, Clone)]
pub struct MonomialCone {
    beta_range: (f64, f64),
    nodes: Vec<f64>,
    space: Space,
}

impl MonomialCone {
    pub fn new(beta_range: (f64, f64), space: Space) -> Result<Self> {
        let (lo, hi) = beta_range;
        let admissible = 0.0..=2.0;
        if !admissible.contains(&lo) || !admissible.contains(&hi) || lo >= hi {
            return Err(Error::InvalidParameter(format!(
                "monomial exponent range must be a subinterval of [0, 2], got [{lo}, {hi}]"
            )));
        }
        let grid = space
            .grid()
            .ok_or_else(|| Error::Unsupported("monomial cone needs a grid-based space".into()))?;
        if grid.ndims() != 1 || grid.endpoints() != (0.0, 1.0) {
            return Err(Error::Unsupported(
                "monomial cone needs a 1-D grid on [0, 1]".into(),
            ));
        }
        let nodes = grid.axis_nodes(0);
        Ok(MonomialCone {
            beta_range,
            nodes,
            space,
        })
    }

    pub fn beta_range(&self) -> (f64, f64) {
        self.beta_range
    }

    fn unit_realization(&self, beta: f64) -> Vector {
        let coeffs = self
            .nodes
            .iter()
            .map(|&x| if beta == 0.0 { 1.0 } else { x.powf(beta) })
            .collect();
        self.space.vector(coeffs).expect("monomial samples are finite")
    }
}

/// Elementary (rank-1) tensors `wx (x) wy` on a row-major `(nx, ny)` grid.
#[derive(Debug, Clone)]
pub struct Rank1Cone {
    shape: (usize, usize),
    space: Space,
}

impl Rank1Cone {
    pub fn new(shape: (usize, usize), space: Space) -> Result<Self> {
        if shape.0 * shape.1 != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                got: shape.0 * shape.1,
            });
        }
        Ok(Rank1Cone { shape, space })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    fn outer(&self, wx: &[f64], wy: &[f64]) -> Vector {
        let (nx, ny) = self.shape;
        let mut coeffs = Vec::with_capacity(nx * ny);
        for &x in wx {
            for &y in wy {
                coeffs.push(x * y);
            }
        }
        self.space.vector(coeffs).expect("outer product is finite")
    }
}

/// Realizations of bounded-weight neural networks sampled on the space grid.
#[derive(Debug, Clone)]
pub struct NeuralCone {
    architecture: Vec<usize>,
    activation: Activation,
    weight_bound: f64,
    nodes: Vec<Vec<f64>>,
    space: Space,
}

impl NeuralCone {
    pub fn new(
        architecture: Vec<usize>,
        activation: Activation,
        weight_bound: f64,
        space: Space,
    ) -> Result<Self> {
        if architecture.len() < 2 {
            return Err(Error::InvalidParameter(
                "network architecture needs at least input and output layers".into(),
            ));
        }
        if *architecture.last().unwrap() != 1 {
            return Err(Error::InvalidParameter("network output width must be 1".into()));
        }
        if architecture.contains(&0) {
            return Err(Error::InvalidParameter("network layer of width zero".into()));
        }
        if !(weight_bound > 0.0) {
            return Err(Error::InvalidParameter("weight bound must be positive".into()));
        }
        let grid = space
            .grid()
            .ok_or_else(|| Error::Unsupported("neural cone needs a grid-based space".into()))?;
        if grid.ndims() != architecture[0] {
            return Err(Error::InvalidParameter(format!(
                "network input width {} does not match the {}-D grid",
                architecture[0],
                grid.ndims()
            )));
        }
        Ok(NeuralCone {
            architecture,
            activation,
            weight_bound,
            nodes: grid.nodes(),
            space,
        })
    }

    pub fn architecture(&self) -> &[usize] {
        &self.architecture
    }

    pub fn weight_bound(&self) -> f64 {
        self.weight_bound
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    fn unit_realization(&self, weights: &NeuralWeights) -> Vector {
        let coeffs = self
            .nodes
            .iter()
            .map(|x| weights.forward(x, self.activation))
            .collect();
        self.space.vector(coeffs).expect("bounded network output is finite")
    }
}

/// A radial dictionary in one of the supported families.
#[derive(Debug, Clone)]
pub enum Dictionary {
    Basis(BasisCone),
    Monomial(MonomialCone),
    Rank1(Rank1Cone),
    Neural(NeuralCone),
}

/// Tolerances and budgets for the approximate inner minimizers.
#[derive(Debug, Clone)]
pub struct InnerSolveOptions {
    pub beta_grid_points: usize,
    pub refine_iters: usize,
    pub als_sweeps: usize,
    pub als_stagnation_tol: f64,
    pub nn_restarts: usize,
    pub nn_steps: usize,
    pub nn_step_size: f64,
    pub seed: u64,
}

impl Default for InnerSolveOptions {
    fn default() -> Self {
        InnerSolveOptions {
            beta_grid_points: 41,
            refine_iters: 60,
            als_sweeps: 25,
            als_stagnation_tol: 1e-12,
            nn_restarts: 8,
            nn_steps: 500,
            nn_step_size: 1e-2,
            seed: 0,
        }
    }
}

impl InnerSolveOptions {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("beta_grid_points", self.beta_grid_points),
            ("refine_iters", self.refine_iters),
            ("als_sweeps", self.als_sweeps),
            ("nn_restarts", self.nn_restarts),
            ("nn_steps", self.nn_steps),
        ];
        for (name, v) in counts {
            if v < 1 {
                return Err(Error::InvalidParameter(format!("{name} must be at least 1")));
            }
        }
        if !(self.als_stagnation_tol > 0.0) {
            return Err(Error::InvalidParameter("als_stagnation_tol must be positive".into()));
        }
        if !(self.nn_step_size > 0.0) {
            return Err(Error::InvalidParameter("nn_step_size must be positive".into()));
        }
        Ok(())
    }
}

/// Result of one dictionary optimization step.
#[derive(Debug, Clone)]
pub struct InnerSolve {
    pub atom: Atom,
    pub correction: Vector,
    pub value: f64,
    pub summary: String,
}

/// Outcome of sampling the algebraic cone law.
#[derive(Debug, Clone)]
pub struct ConeCheckReport {
    pub samples: usize,
    pub max_rel_deviation: f64,
    pub passed: bool,
}

impl Dictionary {
    pub fn space(&self) -> &Space {
        match self {
            Dictionary::Basis(c) => &c.space,
            Dictionary::Monomial(c) => &c.space,
            Dictionary::Rank1(c) => &c.space,
            Dictionary::Neural(c) => &c.space,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Dictionary::Basis(_) => "basis",
            Dictionary::Monomial(_) => "monomial",
            Dictionary::Rank1(_) => "rank1",
            Dictionary::Neural(_) => "neural",
        }
    }

    /// The zero element (scale 0 on a canonical generator).
    pub fn zero_atom(&self) -> Atom {
        let generator = match self {
            Dictionary::Basis(_) => Generator::Basis { index: 0 },
            Dictionary::Monomial(c) => Generator::Monomial { beta: c.beta_range.0 },
            Dictionary::Rank1(c) => Generator::Rank1 {
                wx: vec![0.0; c.shape.0],
                wy: vec![0.0; c.shape.1],
            },
            Dictionary::Neural(c) => Generator::Neural {
                weights: NeuralWeights::zeros(&c.architecture),
            },
        };
        Atom::new(0.0, generator)
    }

    /// Deterministic realization `scale * generator`. The scale multiplies the
    /// unit realization as the final operation, so the cone law is exact.
    pub fn realize(&self, atom: &Atom) -> Result<Vector> {
        let unit = match (self, &atom.generator) {
            (Dictionary::Basis(c), Generator::Basis { index }) => {
                let v = c.vectors.get(*index).ok_or_else(|| {
                    Error::InvalidParameter(format!("basis index {index} out of range"))
                })?;
                v.clone()
            }
            (Dictionary::Monomial(c), Generator::Monomial { beta }) => {
                let (lo, hi) = c.beta_range;
                if !(*beta >= lo && *beta <= hi) {
                    return Err(Error::InvalidParameter(format!(
                        "monomial exponent {beta} outside [{lo}, {hi}]"
                    )));
                }
                c.unit_realization(*beta)
            }
            (Dictionary::Rank1(c), Generator::Rank1 { wx, wy }) => {
                if wx.len() != c.shape.0 || wy.len() != c.shape.1 {
                    return Err(Error::DimensionMismatch {
                        expected: c.shape.0 + c.shape.1,
                        got: wx.len() + wy.len(),
                    });
                }
                c.outer(wx, wy)
            }
            (Dictionary::Neural(c), Generator::Neural { weights }) => {
                weights.check_architecture(&c.architecture)?;
                weights.check_bound(c.weight_bound)?;
                c.unit_realization(weights)
            }
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "atom does not belong to the {} family",
                    self.family_name()
                )))
            }
        };
        Ok(unit.scaled(atom.scale))
    }

    /// A random atom of this family; used by the cone check and probe sets.
    pub fn random_atom<R: Rng>(&self, rng: &mut R) -> Atom {
        let scale = rng.gen_range(-2.0..2.0);
        let generator = match self {
            Dictionary::Basis(c) => Generator::Basis {
                index: rng.gen_range(0..c.vectors.len()),
            },
            Dictionary::Monomial(c) => Generator::Monomial {
                beta: rng.gen_range(c.beta_range.0..=c.beta_range.1),
            },
            Dictionary::Rank1(c) => Generator::Rank1 {
                wx: (0..c.shape.0).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                wy: (0..c.shape.1).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            },
            Dictionary::Neural(c) => Generator::Neural {
                weights: NeuralWeights::random(&c.architecture, c.weight_bound, rng),
            },
        };
        Atom::new(scale, generator)
    }

    /// Sample the cone law `realize(lambda * atom) = lambda * realize(atom)`.
    pub fn cone_check(&self, n_samples: usize, seed: u64) -> Result<ConeCheckReport> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut max_rel: f64 = 0.0;
        for _ in 0..n_samples {
            let atom = self.random_atom(&mut rng);
            let base = self.realize(&atom)?;
            let lambdas = [0.0, 1.0, rng.gen_range(-3.0..3.0)];
            for lam in lambdas {
                let lhs = self.realize(&atom.with_scale(lam * atom.scale))?;
                let rhs = base.scaled(lam);
                let dev = lhs.sub(&rhs).norm() / rhs.norm().max(1e-30);
                max_rel = max_rel.max(dev);
            }
        }
        Ok(ConeCheckReport {
            samples: n_samples,
            max_rel_deviation: max_rel,
            passed: max_rel <= 1e-14,
        })
    }

    /// One dictionary-optimization step: an approximate minimizer of
    /// `E(u + z)` over the cone. The zero atom is always a candidate, so the
    /// returned value never exceeds `E(u)`.
    pub fn inner_minimize(
        &self,
        e: &Functional,
        u: &Vector,
        opts: &InnerSolveOptions,
    ) -> Result<InnerSolve> {
        opts.validate()?;
        if e.space() != self.space() || u.space() != self.space() {
            return Err(Error::SpaceMismatch(
                "dictionary, energy and iterate must share one space".into(),
            ));
        }
        let e_u = e.evaluate(u)?;
        let solve = match self {
            Dictionary::Basis(c) => inner_basis(self, c, e, u, e_u)?,
            Dictionary::Monomial(c) => inner_monomial(self, c, e, u, e_u, opts)?,
            Dictionary::Rank1(c) => inner_rank1(self, c, e, u, e_u, opts)?,
            Dictionary::Neural(c) => neural::inner_neural(self, c, e, u, e_u, opts)?,
        };
        debug_assert!(solve.value <= e_u + 1e-12 * (1.0 + e_u.abs()));
        Ok(solve)
    }

    /// Empirical risk `(min_z E(u + z) - E(u))^2`; zero exactly when `u` is
    /// stationary over the dictionary.
    pub fn empirical_risk(&self, e: &Functional, u: &Vector, opts: &InnerSolveOptions) -> Result<f64> {
        let solve = self.inner_minimize(e, u, opts)?;
        let e_u = e.evaluate(u)?;
        Ok((solve.value - e_u) * (solve.value - e_u))
    }

    fn zero_solve(&self, u: &Vector, e_u: f64) -> InnerSolve {
        let atom = self.zero_atom();
        InnerSolve {
            correction: u.space().zeros(),
            atom: atom.with_cache(u.space().zeros()),
            value: e_u,
            summary: "zero".into(),
        }
    }
}

/// Exact line search `argmin_lambda E(u + lambda w)`. Closed forms for the
/// quadratic and least-squares families; bracketed golden-section otherwise.
pub fn line_search_scale(e: &Functional, u: &Vector, w: &Vector) -> Result<f64> {
    if w.is_zero() {
        return Err(Error::InvalidParameter("line search along the zero direction".into()));
    }
    match e {
        Functional::Quadratic(q) => {
            let aw = q.matrix().apply(&w.data);
            let den = aw.dot(&w.data);
            if den <= 0.0 {
                return Err(Error::SpdViolation(format!(
                    "<Aw, w> = {den} along a non-zero direction"
                )));
            }
            let au = q.matrix().apply(&u.data);
            let num = (&q.rhs().data - au).dot(&w.data);
            Ok(num / den)
        }
        Functional::OperatorLsq(l) => {
            let k = l.operator();
            let kw = k * &w.data;
            let den = kw.dot(&kw) + l.ridge() * w.data.dot(&w.data);
            if den <= 0.0 {
                return Err(Error::SpdViolation(format!(
                    "|Kw|^2 + tau |w|^2 = {den} along a non-zero direction"
                )));
            }
            let r = DVector::from_column_slice(l.data()) - k * &u.data;
            let num = kw.dot(&r) - l.ridge() * w.data.dot(&u.data);
            Ok(num / den)
        }
        Functional::PDirichlet(_) => {
            let phi = |lam: f64| e.evaluate(&u.axpy(lam, w));
            let phi0 = e.evaluate(u)?;
            let mut l = 1.0;
            let mut expansions = 0;
            // E is convex: once both endpoint values sit above phi(0) the
            // minimum is interior to [-l, l]
            loop {
                if phi(-l)? >= phi0 && phi(l)? >= phi0 {
                    break;
                }
                l *= 2.0;
                expansions += 1;
                if expansions > 60 {
                    return Err(Error::NumericalFailure(
                        "line search failed to bracket a minimum".into(),
                    ));
                }
            }
            let iters = LINE_SEARCH_GOLDEN_ITERS + 2 * expansions;
            let (lambda, _) = golden_section_min(phi, -l, l, iters)?;
            // value comparisons stop resolving near the minimum; polish with
            // a bisection on the directional slope, which is monotone by
            // convexity and non-positive/non-negative at the bracket ends
            let slope = |lam: f64| -> Result<f64> {
                let g = e.gradient(&u.axpy(lam, w))?;
                crate::space::pairing(&g, w)
            };
            let mut a = lambda;
            let mut b = lambda;
            let mut width = 1e-6 * (1.0 + lambda.abs());
            for _ in 0..80 {
                a = (lambda - width).max(-l);
                b = (lambda + width).min(l);
                if slope(a)? <= 0.0 && slope(b)? >= 0.0 {
                    break;
                }
                width *= 4.0;
            }
            if !(slope(a)? <= 0.0 && slope(b)? >= 0.0) {
                return Ok(lambda);
            }
            for _ in 0..90 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if slope(mid)? <= 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            let (best, _) = [a, b]
                .iter()
                .map(|&lam| (lam, slope(lam).map(f64::abs).unwrap_or(f64::INFINITY)))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .expect("two candidates");
            Ok(best)
        }
    }
}

/// Golden-section minimization on `[a, b]`; returns the best sampled point.
pub(crate) fn golden_section_min(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut a: f64,
    mut b: f64,
    iters: usize,
) -> Result<(f64, f64)> {
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INVPHI * (b - a);
    let mut x2 = a + INVPHI * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..iters {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INVPHI * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INVPHI * (b - a);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 <= f2 { (x1, f1) } else { (x2, f2) })
}

/// Enumerate every generator with its optimal scale; lowest index wins ties.
fn inner_basis(
    dict: &Dictionary,
    cone: &BasisCone,
    e: &Functional,
    u: &Vector,
    e_u: f64,
) -> Result<InnerSolve> {
    let candidates: Vec<Result<(f64, f64)>> = cone
        .vectors
        .par_iter()
        .map(|v| {
            let lambda = line_search_scale(e, u, v)?;
            let value = e.evaluate(&u.axpy(lambda, v))?;
            Ok((value, lambda))
        })
        .collect();
    let mut best: Option<(f64, usize, f64)> = None;
    for (index, c) in candidates.into_iter().enumerate() {
        let (value, lambda) = c?;
        if best.is_none_or(|(bv, _, _)| value < bv) {
            best = Some((value, index, lambda));
        }
    }
    let (value, index, lambda) = best.expect("basis cone is non-empty");
    if !(value < e_u) {
        return Ok(dict.zero_solve(u, e_u));
    }
    let atom = Atom::new(lambda, Generator::Basis { index });
    let z = dict.realize(&atom)?;
    let value = e.evaluate(&u.add(&z))?;
    Ok(InnerSolve {
        summary: format!("basis[{index}];lambda={lambda:.9e}"),
        atom: atom.with_cache(z.clone()),
        correction: z,
        value,
    })
}

/// Coarse exponent grid with optimal scales, then golden-section refinement
/// of the exponent around the best grid point.
fn inner_monomial(
    dict: &Dictionary,
    cone: &MonomialCone,
    e: &Functional,
    u: &Vector,
    e_u: f64,
    opts: &InnerSolveOptions,
) -> Result<InnerSolve> {
    let (lo, hi) = cone.beta_range;
    let k = opts.beta_grid_points.max(2);
    let betas: Vec<f64> = (0..k)
        .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
        .collect();
    let score = |beta: f64| -> Result<f64> {
        let g = cone.unit_realization(beta);
        let lambda = line_search_scale(e, u, &g)?;
        e.evaluate(&u.axpy(lambda, &g))
            .map_err(|err| Error::NumericalFailure(format!("monomial atom beta={beta}: {err}")))
    };
    let scored: Vec<Result<f64>> = betas.par_iter().map(|&b| score(b)).collect();
    let mut best: Option<(f64, usize)> = None;
    for (i, s) in scored.into_iter().enumerate() {
        let value = s?;
        if best.is_none_or(|(bv, _)| value < bv) {
            best = Some((value, i));
        }
    }
    let (best_value, best_idx) = best.expect("exponent grid is non-empty");
    let mut best_beta = betas[best_idx];
    let step = (hi - lo) / (k - 1) as f64;
    let a = (best_beta - step).max(lo);
    let b = (best_beta + step).min(hi);
    let (beta_ref, value_ref) = golden_section_min(score, a, b, opts.refine_iters)?;
    if value_ref < best_value {
        best_beta = beta_ref;
    }
    let g = cone.unit_realization(best_beta);
    let lambda = line_search_scale(e, u, &g)?;
    let atom = Atom::new(lambda, Generator::Monomial { beta: best_beta });
    let z = dict.realize(&atom)?;
    let value = e.evaluate(&u.add(&z))?;
    if !(value < e_u) {
        return Ok(dict.zero_solve(u, e_u));
    }
    Ok(InnerSolve {
        summary: format!("beta={best_beta:.9e};lambda={lambda:.9e}"),
        atom: atom.with_cache(z.clone()),
        correction: z,
        value,
    })
}

/// Alternating minimization over the two factors of `wx (x) wy`. Each half
/// step is an exact linear solve in the fixed-factor subspace, so the final
/// sweep leaves the energy stationary along the atom's own ray.
fn inner_rank1(
    dict: &Dictionary,
    cone: &Rank1Cone,
    e: &Functional,
    u: &Vector,
    e_u: f64,
    opts: &InnerSolveOptions,
) -> Result<InnerSolve> {
    let (nx, ny) = cone.shape;
    match e {
        Functional::Quadratic(_) | Functional::OperatorLsq(_) => {}
        Functional::PDirichlet(_) => {
            return Err(Error::Unsupported(
                "rank-1 inner solves need a quadratic or least-squares energy".into(),
            ))
        }
    }

    // dominant direction of the reshaped residual, by power iteration
    let g = e.gradient(u)?;
    let r = DMatrix::from_fn(nx, ny, |i, j| -g.coeffs()[i * ny + j]);
    if r.amax() == 0.0 {
        return Ok(dict.zero_solve(u, e_u));
    }
    let mut wy = DVector::from_element(ny, 1.0 / (ny as f64).sqrt());
    let mut wx = DVector::zeros(nx);
    for _ in 0..5 {
        wx = &r * &wy;
        let nxm = wx.norm();
        if nxm == 0.0 {
            break;
        }
        wx /= nxm;
        wy = r.transpose() * &wx;
        let nym = wy.norm();
        if nym == 0.0 {
            break;
        }
        wy /= nym;
    }
    if wx.norm() == 0.0 || wy.norm() == 0.0 {
        // residual annihilates every rank-1 probe direction; fall back to a
        // coordinate seed so the first ALS half step can still move
        wx = DVector::zeros(nx);
        wx[0] = 1.0;
        wy = DVector::from_element(ny, 1.0 / (ny as f64).sqrt());
    }

    let mut sweeps_used = 0;
    let mut value_prev = f64::INFINITY;
    for sweep in 0..opts.als_sweeps {
        sweeps_used = sweep + 1;
        match rank1_factor_solve(e, u, &wy, (nx, ny), FreeFactor::X)? {
            Some(new_wx) => wx = new_wx,
            None => return Ok(dict.zero_solve(u, e_u)),
        }
        match rank1_factor_solve(e, u, &wx, (nx, ny), FreeFactor::Y)? {
            Some(new_wy) => wy = new_wy,
            None => return Ok(dict.zero_solve(u, e_u)),
        }
        let z = cone.outer(wx.as_slice(), wy.as_slice());
        let value = e.evaluate(&u.add(&z))?;
        if (value_prev - value).abs() <= opts.als_stagnation_tol * (1.0 + value.abs()) {
            break;
        }
        value_prev = value;
    }

    let atom = Atom::new(
        1.0,
        Generator::Rank1 {
            wx: wx.as_slice().to_vec(),
            wy: wy.as_slice().to_vec(),
        },
    );
    let z = dict.realize(&atom)?;
    let value = e.evaluate(&u.add(&z))?;
    if !(value < e_u) {
        return Ok(dict.zero_solve(u, e_u));
    }
    Ok(InnerSolve {
        summary: format!(
            "rank1;|wx|={:.6e};|wy|={:.6e};sweeps={sweeps_used}",
            wx.norm(),
            wy.norm()
        ),
        atom: atom.with_cache(z.clone()),
        correction: z,
        value,
    })
}

enum FreeFactor {
    X,
    Y,
}

/// `out_i = sum_j v[(i, j)] fixed_j` (free = x) or
/// `out_j = sum_i v[(i, j)] fixed_i` (free = y).
fn contract(v: &DVector<f64>, fixed: &DVector<f64>, shape: (usize, usize), free: &FreeFactor) -> DVector<f64> {
    let (nx, ny) = shape;
    match free {
        FreeFactor::X => DVector::from_fn(nx, |i, _| {
            (0..ny).map(|j| v[i * ny + j] * fixed[j]).sum::<f64>()
        }),
        FreeFactor::Y => DVector::from_fn(ny, |j, _| {
            (0..nx).map(|i| v[i * ny + j] * fixed[i]).sum::<f64>()
        }),
    }
}

fn embed(free: &DVector<f64>, fixed: &DVector<f64>, shape: (usize, usize), which: &FreeFactor) -> DVector<f64> {
    let (nx, ny) = shape;
    match which {
        FreeFactor::X => DVector::from_fn(nx * ny, |k, _| free[k / ny] * fixed[k % ny]),
        FreeFactor::Y => DVector::from_fn(nx * ny, |k, _| fixed[k / ny] * free[k % ny]),
    }
}

/// Minimize `E(u + embed(free, fixed))` over the free factor: an SPD linear
/// solve in the contracted subspace. Returns `None` when the fixed factor is
/// numerically zero.
fn rank1_factor_solve(
    e: &Functional,
    u: &Vector,
    fixed: &DVector<f64>,
    shape: (usize, usize),
    free: FreeFactor,
) -> Result<Option<DVector<f64>>> {
    let (nx, ny) = shape;
    let free_dim = match free {
        FreeFactor::X => nx,
        FreeFactor::Y => ny,
    };
    if fixed.norm() == 0.0 {
        return Ok(None);
    }
    let (h, rhs) = match e {
        Functional::Quadratic(q) => {
            let fixed_sq = fixed.dot(fixed);
            let h = match (q.matrix(), &free) {
                (QuadraticMatrix::KroneckerSum { ax, ay }, FreeFactor::X) => {
                    let fay = fixed.dot(&(ay * fixed));
                    let mut h = ax * fixed_sq;
                    for i in 0..nx {
                        h[(i, i)] += fay;
                    }
                    h
                }
                (QuadraticMatrix::KroneckerSum { ax, ay }, FreeFactor::Y) => {
                    let fax = fixed.dot(&(ax * fixed));
                    let mut h = ay * fixed_sq;
                    for j in 0..ny {
                        h[(j, j)] += fax;
                    }
                    h
                }
                (QuadraticMatrix::Dense(_), _) => {
                    let mut h = DMatrix::zeros(free_dim, free_dim);
                    let mut basis = DVector::zeros(free_dim);
                    for c in 0..free_dim {
                        basis[c] = 1.0;
                        let col = q.matrix().apply(&embed(&basis, fixed, shape, &free));
                        basis[c] = 0.0;
                        h.set_column(c, &contract(&col, fixed, shape, &free));
                    }
                    h
                }
            };
            let g = q.matrix().apply(&u.data) - &q.rhs().data;
            let rhs = -contract(&g, fixed, shape, &free);
            (h, rhs)
        }
        Functional::OperatorLsq(l) => {
            let k = l.operator();
            let mut design = DMatrix::zeros(k.nrows(), free_dim);
            let mut basis = DVector::zeros(free_dim);
            for c in 0..free_dim {
                basis[c] = 1.0;
                design.set_column(c, &(k * embed(&basis, fixed, shape, &free)));
                basis[c] = 0.0;
            }
            let mut h = design.transpose() * &design;
            let fixed_sq = fixed.dot(fixed);
            for i in 0..free_dim {
                h[(i, i)] += l.ridge() * fixed_sq;
            }
            let r0 = k * &u.data - DVector::from_column_slice(l.data());
            let mut rhs = -(design.transpose() * r0);
            if l.ridge() > 0.0 {
                rhs -= contract(&u.data, fixed, shape, &free) * l.ridge();
            }
            (h, rhs)
        }
        Functional::PDirichlet(_) => unreachable!("rejected before the ALS loop"),
    };
    match Cholesky::new(h) {
        Some(chol) => Ok(Some(chol.solve(&rhs))),
        None => Ok(None),
    }
}
