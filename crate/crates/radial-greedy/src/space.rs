//! Finite-dimensional coefficient spaces with explicit quadrature weights.
//!
//! A [`Space`] fixes the dimension, the norm and (for grid-based norms) the
//! uniform grid the coefficients live on. Primal [`Vector`]s and dual
//! [`DualVector`]s both carry a handle to their space, so norms never need
//! extra context and cross-space operations are caught early.
//!
//! Grid conventions: a `Grid` describes the interior lattice of a closed
//! interval (or rectangle). With `n` nodes per axis on `[a, b]` the nodes sit
//! at `a + i*h` for `i = 1..=n` with `h = (b - a)/(n + 1)`, and all quadrature
//! sums are plain rectangle rules `sum(f_i) * h^d`. The `discrete-W1p` norm
//! uses forward differences with zero padding on both ends of every axis,
//! which is the homogeneous-Dirichlet convention.

use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};

/// Uniform interior lattice of a 1-D interval or a 2-D rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    shape: Vec<usize>,
    endpoints: (f64, f64),
}

impl Grid {
    /// 1-D interior grid of `[0, 1]` with `n` nodes.
    pub fn line(n: usize) -> Result<Self> {
        Self::line_on(n, 0.0, 1.0)
    }

    /// 1-D interior grid of `[a, b]` with `n` nodes.
    pub fn line_on(n: usize, a: f64, b: f64) -> Result<Self> {
        Self::new(vec![n], (a, b))
    }

    /// 2-D interior grid of `[0, 1]^2`, `nx * ny` nodes in row-major order.
    pub fn rect(nx: usize, ny: usize) -> Result<Self> {
        Self::new(vec![nx, ny], (0.0, 1.0))
    }

    pub fn new(shape: Vec<usize>, endpoints: (f64, f64)) -> Result<Self> {
        if shape.is_empty() || shape.len() > 2 {
            return Err(Error::InvalidParameter(format!(
                "grid must be 1-D or 2-D, got {} axes",
                shape.len()
            )));
        }
        if shape.contains(&0) {
            return Err(Error::InvalidParameter("grid axis with zero nodes".into()));
        }
        if !(endpoints.1 - endpoints.0).is_finite() || endpoints.1 <= endpoints.0 {
            return Err(Error::InvalidParameter(format!(
                "invalid grid endpoints ({}, {})",
                endpoints.0, endpoints.1
            )));
        }
        Ok(Grid { shape, endpoints })
    }

    pub fn ndims(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn endpoints(&self) -> (f64, f64) {
        self.endpoints
    }

    pub fn dim(&self) -> usize {
        self.shape.iter().product()
    }

    /// Mesh width along `axis`.
    pub fn mesh_width(&self, axis: usize) -> f64 {
        let (a, b) = self.endpoints;
        (b - a) / (self.shape[axis] as f64 + 1.0)
    }

    /// Quadrature weight of one cell, `prod_k h_k`.
    pub fn cell_weight(&self) -> f64 {
        (0..self.ndims()).map(|k| self.mesh_width(k)).product()
    }

    /// Interior node coordinates along `axis`.
    pub fn axis_nodes(&self, axis: usize) -> Vec<f64> {
        let h = self.mesh_width(axis);
        let a = self.endpoints.0;
        (1..=self.shape[axis]).map(|i| a + i as f64 * h).collect()
    }

    /// Coordinates of every node, row-major, as `ndims()`-long points.
    pub fn nodes(&self) -> Vec<Vec<f64>> {
        match self.shape.len() {
            1 => self.axis_nodes(0).into_iter().map(|x| vec![x]).collect(),
            2 => {
                let xs = self.axis_nodes(0);
                let ys = self.axis_nodes(1);
                let mut out = Vec::with_capacity(xs.len() * ys.len());
                for &x in &xs {
                    for &y in &ys {
                        out.push(vec![x, y]);
                    }
                }
                out
            }
            _ => unreachable!("grids are 1-D or 2-D"),
        }
    }
}

/// Which norm the space carries.
#[derive(Debug, Clone, PartialEq)]
pub enum NormKind {
    Euclidean,
    WeightedEuclidean { weights: Vec<f64> },
    /// `( sum |v_i|^p * h^d )^{1/p}` over the grid nodes.
    DiscreteLp { p: f64 },
    /// `( sum_axes sum_edges |Dv|^p * h^d )^{1/p}` with forward differences
    /// and zero boundary padding.
    DiscreteW1p { p: f64 },
}

#[derive(Debug, PartialEq)]
struct SpaceInner {
    dim: usize,
    norm: NormKind,
    grid: Option<Grid>,
}

/// A finite-dimensional coefficient space. Cheap to clone.
#[derive(Debug, Clone)]
pub struct Space(Arc<SpaceInner>);

impl PartialEq for Space {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0 == other.0
    }
}

impl Space {
    pub fn euclidean(dim: usize) -> Result<Space> {
        if dim == 0 {
            return Err(Error::InvalidParameter("space dimension must be positive".into()));
        }
        Ok(Space(Arc::new(SpaceInner {
            dim,
            norm: NormKind::Euclidean,
            grid: None,
        })))
    }

    pub fn weighted_euclidean(weights: Vec<f64>) -> Result<Space> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter("empty weight vector".into()));
        }
        if weights.iter().any(|&w| !w.is_finite() || w <= 0.0) {
            return Err(Error::InvalidParameter(
                "weighted-euclidean weights must be strictly positive".into(),
            ));
        }
        let dim = weights.len();
        Ok(Space(Arc::new(SpaceInner {
            dim,
            norm: NormKind::WeightedEuclidean { weights },
            grid: None,
        })))
    }

    pub fn discrete_lp(p: f64, grid: Grid) -> Result<Space> {
        check_reflexive_p(p)?;
        Ok(Space(Arc::new(SpaceInner {
            dim: grid.dim(),
            norm: NormKind::DiscreteLp { p },
            grid: Some(grid),
        })))
    }

    pub fn discrete_w1p(p: f64, grid: Grid) -> Result<Space> {
        check_reflexive_p(p)?;
        Ok(Space(Arc::new(SpaceInner {
            dim: grid.dim(),
            norm: NormKind::DiscreteW1p { p },
            grid: Some(grid),
        })))
    }

    pub fn dim(&self) -> usize {
        self.0.dim
    }

    pub fn norm_kind(&self) -> &NormKind {
        &self.0.norm
    }

    pub fn grid(&self) -> Option<&Grid> {
        self.0.grid.as_ref()
    }

    /// Quadrature weight entering the duality pairing: `h^d` for grid norms,
    /// `1` otherwise.
    pub fn quad_weight(&self) -> f64 {
        match &self.0.norm {
            NormKind::Euclidean | NormKind::WeightedEuclidean { .. } => 1.0,
            NormKind::DiscreteLp { .. } | NormKind::DiscreteW1p { .. } => {
                self.grid().expect("grid norms carry a grid").cell_weight()
            }
        }
    }

    /// True when the norm comes from an inner product (euclidean, weighted,
    /// or `discrete-Lp` with `p = 2`).
    pub fn is_inner_product(&self) -> bool {
        match self.0.norm {
            NormKind::Euclidean | NormKind::WeightedEuclidean { .. } => true,
            NormKind::DiscreteLp { p } => p == 2.0,
            NormKind::DiscreteW1p { .. } => false,
        }
    }

    pub fn zeros(&self) -> Vector {
        Vector {
            space: self.clone(),
            data: DVector::zeros(self.dim()),
        }
    }

    pub fn zero_dual(&self) -> DualVector {
        DualVector {
            space: self.clone(),
            data: DVector::zeros(self.dim()),
        }
    }

    /// Build a vector, validating length and finiteness.
    pub fn vector(&self, coeffs: Vec<f64>) -> Result<Vector> {
        self.check_coeffs(&coeffs)?;
        Ok(Vector {
            space: self.clone(),
            data: DVector::from_vec(coeffs),
        })
    }

    /// Build a dual vector, validating length and finiteness.
    pub fn dual(&self, coeffs: Vec<f64>) -> Result<DualVector> {
        self.check_coeffs(&coeffs)?;
        Ok(DualVector {
            space: self.clone(),
            data: DVector::from_vec(coeffs),
        })
    }

    /// Uniform `[-1, 1]` coefficients; handy for sampled invariant checks.
    pub fn random_vector<R: Rng>(&self, rng: &mut R) -> Vector {
        let coeffs: Vec<f64> = (0..self.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Vector {
            space: self.clone(),
            data: DVector::from_vec(coeffs),
        }
    }

    fn check_coeffs(&self, coeffs: &[f64]) -> Result<()> {
        if coeffs.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: coeffs.len(),
            });
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("vector coefficient".into()));
        }
        Ok(())
    }

    pub(crate) fn wrap(&self, data: DVector<f64>) -> Vector {
        debug_assert_eq!(data.len(), self.dim());
        Vector {
            space: self.clone(),
            data,
        }
    }

    pub(crate) fn wrap_dual(&self, data: DVector<f64>) -> DualVector {
        debug_assert_eq!(data.len(), self.dim());
        DualVector {
            space: self.clone(),
            data,
        }
    }

    fn norm_of(&self, data: &DVector<f64>) -> f64 {
        match &self.0.norm {
            NormKind::Euclidean => data.norm(),
            NormKind::WeightedEuclidean { weights } => data
                .iter()
                .zip(weights)
                .map(|(v, w)| w * v * v)
                .sum::<f64>()
                .sqrt(),
            NormKind::DiscreteLp { p } => {
                let w = self.quad_weight();
                let s: f64 = data.iter().map(|v| v.abs().powf(*p) * w).sum();
                s.powf(1.0 / p)
            }
            NormKind::DiscreteW1p { p } => {
                let w = self.quad_weight();
                let s = self.w1p_gradient_power_sum(data, *p) * w;
                s.powf(1.0 / p)
            }
        }
    }

    /// `sum_axes sum_edges |Dv|^p` (without the quadrature weight).
    fn w1p_gradient_power_sum(&self, data: &DVector<f64>, p: f64) -> f64 {
        let grid = self.grid().expect("W1p space carries a grid");
        let mut total = 0.0;
        match grid.shape() {
            [_] => {
                let h = grid.mesh_width(0);
                for d in forward_differences(data.as_slice(), h) {
                    total += d.abs().powf(p);
                }
            }
            [nx, ny] => {
                let (nx, ny) = (*nx, *ny);
                let hx = grid.mesh_width(0);
                let hy = grid.mesh_width(1);
                let mut line = Vec::new();
                // differences along x: one pass per column
                for j in 0..ny {
                    line.clear();
                    line.extend((0..nx).map(|i| data[i * ny + j]));
                    for d in forward_differences(&line, hx) {
                        total += d.abs().powf(p);
                    }
                }
                // differences along y: one pass per row
                for i in 0..nx {
                    line.clear();
                    line.extend((0..ny).map(|j| data[i * ny + j]));
                    for d in forward_differences(&line, hy) {
                        total += d.abs().powf(p);
                    }
                }
            }
            _ => unreachable!(),
        }
        total
    }

    fn dual_norm_of(&self, data: &DVector<f64>) -> f64 {
        match &self.0.norm {
            NormKind::Euclidean => data.norm(),
            NormKind::WeightedEuclidean { weights } => data
                .iter()
                .zip(weights)
                .map(|(f, w)| f * f / w)
                .sum::<f64>()
                .sqrt(),
            NormKind::DiscreteLp { p } => {
                let q = p / (p - 1.0);
                let w = self.quad_weight();
                let s: f64 = data.iter().map(|f| f.abs().powf(q) * w).sum();
                s.powf(1.0 / q)
            }
            NormKind::DiscreteW1p { p } => {
                // Computable surrogate: the Lq quadrature norm of the pairings
                // against the W1p-normalized coordinate basis. Used in reports
                // only, never inside a solve.
                let q = p / (p - 1.0);
                let w = self.quad_weight();
                let mut basis = DVector::zeros(self.dim());
                let mut s = 0.0;
                for i in 0..self.dim() {
                    basis[i] = 1.0;
                    let ei_norm = self.norm_of(&basis);
                    basis[i] = 0.0;
                    let c = w * data[i] / ei_norm;
                    s += c.abs().powf(q) * w;
                }
                s.powf(1.0 / q)
            }
        }
    }
}

/// Forward differences of `u` with zero padding: `n + 1` values
/// `(u_e - u_{e-1})/h` for `e = 0..=n` with `u_{-1} = u_n = 0`.
fn forward_differences(u: &[f64], h: f64) -> Vec<f64> {
    let n = u.len();
    let mut out = Vec::with_capacity(n + 1);
    out.push(u[0] / h);
    for e in 1..n {
        out.push((u[e] - u[e - 1]) / h);
    }
    out.push(-u[n - 1] / h);
    out
}

fn check_reflexive_p(p: f64) -> Result<()> {
    if !p.is_finite() || p <= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "Lp exponent must satisfy p > 1, got {p}"
        )));
    }
    Ok(())
}

/// A primal coefficient vector tied to its [`Space`].
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    space: Space,
    pub(crate) data: DVector<f64>,
}

/// A dual (gradient-side) coefficient vector tied to its [`Space`].
#[derive(Debug, Clone, PartialEq)]
pub struct DualVector {
    space: Space,
    pub(crate) data: DVector<f64>,
}

impl Vector {
    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        self.data.as_slice()
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn norm(&self) -> f64 {
        self.space.norm_of(&self.data)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&c| c == 0.0)
    }

    /// `self + other`; both vectors must live in the same space.
    pub fn add(&self, other: &Vector) -> Vector {
        assert_eq!(self.space, other.space, "vector addition across spaces");
        self.space.wrap(&self.data + &other.data)
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        assert_eq!(self.space, other.space, "vector subtraction across spaces");
        self.space.wrap(&self.data - &other.data)
    }

    pub fn scaled(&self, factor: f64) -> Vector {
        self.space.wrap(&self.data * factor)
    }

    /// `self + factor * other`.
    pub fn axpy(&self, factor: f64, other: &Vector) -> Vector {
        assert_eq!(self.space, other.space, "vector axpy across spaces");
        self.space.wrap(&self.data + &other.data * factor)
    }
}

impl DualVector {
    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        self.data.as_slice()
    }

    pub fn dual_norm(&self) -> f64 {
        self.space.dual_norm_of(&self.data)
    }

    pub fn add(&self, other: &DualVector) -> DualVector {
        assert_eq!(self.space, other.space, "dual addition across spaces");
        self.space.wrap_dual(&self.data + &other.data)
    }

    pub fn scaled(&self, factor: f64) -> DualVector {
        self.space.wrap_dual(&self.data * factor)
    }
}

/// Duality pairing `<f, v>`, the quadrature-weighted coefficient dot product.
pub fn pairing(f: &DualVector, v: &Vector) -> Result<f64> {
    if f.space != v.space {
        return Err(Error::SpaceMismatch(
            "pairing of a dual vector with a vector from another space".into(),
        ));
    }
    Ok(f.space.quad_weight() * f.data.dot(&v.data))
}
