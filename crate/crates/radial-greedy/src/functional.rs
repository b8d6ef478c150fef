//! Elliptic convex energies: evaluation, gradients, exact minimizers and
//! ellipticity certificates.
//!
//! Three families are supported:
//! - [`Quadratic`]: `E(u) = 1/2 <Au, u> - <b, u>` with `A` symmetric positive
//!   definite, dense or a Kronecker sum `Ax (x) I + I (x) Ay`;
//! - [`PDirichlet`]: `E(u) = (1/p) |u|_{W1p}^p - <phi, u>` on a `discrete-W1p`
//!   space, the p-Laplacian model problem with homogeneous Dirichlet boundary;
//! - [`OperatorLsq`]: `E(u) = 1/2 |Ku - f|^2 (+ 1/2 tau |u|^2)` on a
//!   `discrete-Lp(2)` space.

use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::space::{pairing, DualVector, Grid, NormKind, Space, Vector};

/// Where an ellipticity constant came from.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateOrigin {
    ExactEigen,
    Declared,
    SampledLowerBound { pairs: usize },
}

/// Certificate for `<E'(x) - E'(y), x - y> >= alpha * |x - y|^s`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EllipticityCertificate {
    pub alpha: f64,
    pub s: f64,
    pub origin: CertificateOrigin,
}

impl EllipticityCertificate {
    fn validate(self) -> Result<Self> {
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ellipticity constant must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.s > 1.0 && self.s <= 2.0) {
            return Err(Error::InvalidParameter(format!(
                "ellipticity exponent must lie in (1, 2], got {}",
                self.s
            )));
        }
        Ok(self)
    }
}

/// The SPD operator of a [`Quadratic`] energy.
#[derive(Debug, Clone)]
pub enum QuadraticMatrix {
    Dense(DMatrix<f64>),
    /// `A = ax (x) I + I (x) ay` acting on row-major `(nx, ny)` coefficients.
    KroneckerSum { ax: DMatrix<f64>, ay: DMatrix<f64> },
}

impl QuadraticMatrix {
    pub fn dim(&self) -> usize {
        match self {
            QuadraticMatrix::Dense(a) => a.nrows(),
            QuadraticMatrix::KroneckerSum { ax, ay } => ax.nrows() * ay.nrows(),
        }
    }

    /// Factor shape `(nx, ny)` for the Kronecker-sum case.
    pub fn kronecker_shape(&self) -> Option<(usize, usize)> {
        match self {
            QuadraticMatrix::Dense(_) => None,
            QuadraticMatrix::KroneckerSum { ax, ay } => Some((ax.nrows(), ay.nrows())),
        }
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            QuadraticMatrix::Dense(a) => a * v,
            QuadraticMatrix::KroneckerSum { ax, ay } => {
                let (nx, ny) = (ax.nrows(), ay.nrows());
                let m = DMatrix::from_fn(nx, ny, |i, j| v[i * ny + j]);
                let out = ax * &m + &m * ay.transpose();
                DVector::from_fn(nx * ny, |k, _| out[(k / ny, k % ny)])
            }
        }
    }

    /// Dense assembly; desk scale by construction.
    pub fn assemble(&self) -> DMatrix<f64> {
        match self {
            QuadraticMatrix::Dense(a) => a.clone(),
            QuadraticMatrix::KroneckerSum { ax, ay } => {
                let (nx, ny) = (ax.nrows(), ay.nrows());
                let n = nx * ny;
                DMatrix::from_fn(n, n, |r, c| {
                    let (i, j) = (r / ny, r % ny);
                    let (k, l) = (c / ny, c % ny);
                    let mut v = 0.0;
                    if j == l {
                        v += ax[(i, k)];
                    }
                    if i == k {
                        v += ay[(j, l)];
                    }
                    v
                })
            }
        }
    }

    fn check_spd(&self) -> Result<()> {
        match self {
            QuadraticMatrix::Dense(a) => check_spd_dense(a, "quadratic matrix"),
            QuadraticMatrix::KroneckerSum { ax, ay } => {
                check_spd_dense(ax, "Kronecker factor ax")?;
                check_spd_dense(ay, "Kronecker factor ay")
            }
        }
    }
}

fn check_spd_dense(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidParameter(format!("{what} is not square")));
    }
    let scale = a.amax().max(1e-300);
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::SpdViolation(format!("{what} is not symmetric")));
            }
        }
    }
    if Cholesky::new(a.clone()).is_none() {
        return Err(Error::SpdViolation(format!(
            "{what} has a non-positive eigenvalue"
        )));
    }
    Ok(())
}

/// `E(u) = 1/2 <Au, u> - <b, u>` on an inner-product space.
#[derive(Debug)]
pub struct Quadratic {
    matrix: QuadraticMatrix,
    b: Vector,
    space: Space,
    dense: OnceLock<DMatrix<f64>>,
    factor: OnceLock<Option<Cholesky<f64, Dyn>>>,
}

impl Quadratic {
    pub fn new(matrix: QuadraticMatrix, b: Vector) -> Result<Self> {
        let space = b.space().clone();
        if !space.is_inner_product() {
            return Err(Error::Unsupported(
                "quadratic energies need an inner-product norm (euclidean, weighted, or Lp with p = 2)"
                    .into(),
            ));
        }
        if matrix.dim() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                got: matrix.dim(),
            });
        }
        matrix.check_spd()?;
        Ok(Quadratic {
            matrix,
            b,
            space,
            dense: OnceLock::new(),
            factor: OnceLock::new(),
        })
    }

    pub fn matrix(&self) -> &QuadraticMatrix {
        &self.matrix
    }

    pub fn rhs(&self) -> &Vector {
        &self.b
    }

    pub(crate) fn dense_matrix(&self) -> &DMatrix<f64> {
        self.dense.get_or_init(|| self.matrix.assemble())
    }

    fn cholesky(&self) -> Result<&Cholesky<f64, Dyn>> {
        self.factor
            .get_or_init(|| Cholesky::new(self.dense_matrix().clone()))
            .as_ref()
            .ok_or_else(|| Error::SpdViolation("Cholesky factorization failed".into()))
    }

    /// Smallest eigenvalue of `A` with respect to the space's norm matrix.
    fn norm_relative_min_eigenvalue(&self) -> f64 {
        let a = self.dense_matrix();
        let scaled = match self.space.norm_kind() {
            // the quadrature weight cancels between pairing and norm
            NormKind::Euclidean | NormKind::DiscreteLp { .. } => a.clone(),
            NormKind::WeightedEuclidean { weights } => {
                let n = a.nrows();
                DMatrix::from_fn(n, n, |i, j| a[(i, j)] / (weights[i] * weights[j]).sqrt())
            }
            NormKind::DiscreteW1p { .. } => unreachable!("rejected at construction"),
        };
        let eig = SymmetricEigen::new(scaled);
        eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// `E(u) = (1/p) |u|^p - <phi, u>` on a `discrete-W1p` space.
#[derive(Debug)]
pub struct PDirichlet {
    p: f64,
    phi: DualVector,
    space: Space,
}

impl PDirichlet {
    pub fn new(p: f64, phi: DualVector) -> Result<Self> {
        if !(p > 2.0) {
            return Err(Error::InvalidParameter(format!(
                "p-Dirichlet exponent must satisfy p > 2, got {p}"
            )));
        }
        let space = phi.space().clone();
        match space.norm_kind() {
            NormKind::DiscreteW1p { p: sp } if *sp == p => {}
            other => {
                return Err(Error::Unsupported(format!(
                    "p-Dirichlet energies need a discrete-W1p({p}) space, got {other:?}"
                )))
            }
        }
        Ok(PDirichlet { p, phi, space })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn phi(&self) -> &DualVector {
        &self.phi
    }

    fn grid(&self) -> &Grid {
        self.space.grid().expect("W1p space carries a grid")
    }

    /// Discrete p-Laplacian gradient: `-div(|du|^{p-2} du) - phi` assembled
    /// from forward differences with zero boundary, as dual coefficients.
    fn gradient_data(&self, u: &DVector<f64>) -> DVector<f64> {
        let p = self.p;
        let grid = self.grid();
        let mut g = DVector::zeros(u.len());
        match grid.shape() {
            [n] => {
                let h = grid.mesh_width(0);
                accumulate_axis_flux(u.as_slice(), *n, 1, 0, h, p, &mut g);
            }
            [nx, ny] => {
                let hx = grid.mesh_width(0);
                let hy = grid.mesh_width(1);
                for j in 0..*ny {
                    accumulate_axis_flux(u.as_slice(), *nx, *ny, j, hx, p, &mut g);
                }
                for i in 0..*nx {
                    accumulate_axis_flux(u.as_slice(), *ny, 1, i * ny, hy, p, &mut g);
                }
            }
            _ => unreachable!(),
        }
        g - &self.phi.data
    }
}

/// One 1-D line of the p-Laplacian flux divergence. The line starts at
/// `offset` and advances by `stride`; writes `(F_e - F_{e+1}) / h` per node.
fn accumulate_axis_flux(
    u: &[f64],
    n: usize,
    stride: usize,
    offset: usize,
    h: f64,
    p: f64,
    out: &mut DVector<f64>,
) {
    let at = |k: usize| u[offset + k * stride];
    let flux = |d: f64| d.abs().powf(p - 2.0) * d;
    // edge e sits between node e-1 and node e, with zero padding outside
    let mut f_left = flux(at(0) / h);
    for k in 0..n {
        let d_right = if k + 1 < n { (at(k + 1) - at(k)) / h } else { -at(k) / h };
        let f_right = flux(d_right);
        out[offset + k * stride] += (f_left - f_right) / h;
        f_left = f_right;
    }
}

/// `E(u) = 1/2 |Ku - f|^2 + 1/2 tau |u|^2` on a `discrete-Lp(2)` space.
/// The data `f` is quadrature-weighted with the same mesh as the space.
#[derive(Debug)]
pub struct OperatorLsq {
    k: DMatrix<f64>,
    f: DVector<f64>,
    ridge: f64,
    space: Space,
    normal: OnceLock<DMatrix<f64>>,
}

impl OperatorLsq {
    pub fn new(k: DMatrix<f64>, f: Vec<f64>, ridge: f64, space: Space) -> Result<Self> {
        match space.norm_kind() {
            NormKind::DiscreteLp { p } if *p == 2.0 => {}
            other => {
                return Err(Error::Unsupported(format!(
                    "operator least squares needs a discrete-Lp(2) space, got {other:?}"
                )))
            }
        }
        if k.ncols() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                got: k.ncols(),
            });
        }
        if f.len() != k.nrows() {
            return Err(Error::DimensionMismatch {
                expected: k.nrows(),
                got: f.len(),
            });
        }
        if !(ridge >= 0.0) {
            return Err(Error::InvalidParameter("ridge must be non-negative".into()));
        }
        let lsq = OperatorLsq {
            k,
            f: DVector::from_vec(f),
            ridge,
            space,
            normal: OnceLock::new(),
        };
        // full column rank or a positive ridge keeps the energy elliptic;
        // Cholesky can slip through on singular matrices, so use eigenvalues
        let eig = SymmetricEigen::new(lsq.normal_matrix().clone());
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        if min <= 1e-12 * max.max(1.0) {
            return Err(Error::InvalidParameter(
                "operator is rank-deficient; supply a positive ridge".into(),
            ));
        }
        Ok(lsq)
    }

    pub fn operator(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn data(&self) -> &[f64] {
        self.f.as_slice()
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    fn normal_matrix(&self) -> &DMatrix<f64> {
        self.normal.get_or_init(|| {
            let mut m = self.k.transpose() * &self.k;
            for i in 0..m.nrows() {
                m[(i, i)] += self.ridge;
            }
            m
        })
    }
}

/// An energy satisfying the locally-Lipschitz-gradient and ellipticity
/// assumptions, in one of the three supported families.
#[derive(Debug)]
pub enum Functional {
    Quadratic(Quadratic),
    PDirichlet(PDirichlet),
    OperatorLsq(OperatorLsq),
}

impl Functional {
    pub fn space(&self) -> &Space {
        match self {
            Functional::Quadratic(q) => &q.space,
            Functional::PDirichlet(d) => &d.space,
            Functional::OperatorLsq(l) => &l.space,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Functional::Quadratic(_) => "quadratic",
            Functional::PDirichlet(_) => "p-dirichlet",
            Functional::OperatorLsq(_) => "operator-lsq",
        }
    }

    fn check_member(&self, u: &Vector) -> Result<()> {
        if u.space() != self.space() {
            return Err(Error::SpaceMismatch(format!(
                "{} energy evaluated outside its space",
                self.family_name()
            )));
        }
        Ok(())
    }

    pub fn evaluate(&self, u: &Vector) -> Result<f64> {
        self.check_member(u)?;
        let w = self.space().quad_weight();
        let value = match self {
            Functional::Quadratic(q) => {
                let au = q.matrix.apply(&u.data);
                w * (0.5 * au.dot(&u.data) - q.b.data.dot(&u.data))
            }
            Functional::PDirichlet(d) => {
                let norm = u.norm();
                norm.powf(d.p) / d.p - w * d.phi.data.dot(&u.data)
            }
            Functional::OperatorLsq(l) => {
                let r = &l.k * &u.data - &l.f;
                w * 0.5 * (r.dot(&r) + l.ridge * u.data.dot(&u.data))
            }
        };
        if !value.is_finite() {
            return Err(Error::NonFinite(format!(
                "{} energy evaluation",
                self.family_name()
            )));
        }
        Ok(value)
    }

    /// Frechet gradient as a dual vector: `pairing(gradient(u), v)` is the
    /// directional derivative of `E` at `u` along `v`.
    pub fn gradient(&self, u: &Vector) -> Result<DualVector> {
        self.check_member(u)?;
        let data = match self {
            Functional::Quadratic(q) => q.matrix.apply(&u.data) - &q.b.data,
            Functional::PDirichlet(d) => d.gradient_data(&u.data),
            Functional::OperatorLsq(l) => {
                let r = &l.k * &u.data - &l.f;
                l.k.transpose() * r + &u.data * l.ridge
            }
        };
        if data.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "{} gradient evaluation",
                self.family_name()
            )));
        }
        Ok(self.space().wrap_dual(data))
    }

    /// Central-difference gradient oracle, mapped through the quadrature
    /// weight so it is directly comparable to [`Functional::gradient`].
    pub fn finite_difference_gradient(&self, u: &Vector, step: f64) -> Result<DualVector> {
        self.check_member(u)?;
        if !(step > 0.0) {
            return Err(Error::InvalidParameter("finite-difference step must be positive".into()));
        }
        let w = self.space().quad_weight();
        let n = u.dim();
        let mut data = DVector::zeros(n);
        let mut probe = u.clone();
        for i in 0..n {
            let base = u.data[i];
            probe.data[i] = base + step;
            let plus = self.evaluate(&probe)?;
            probe.data[i] = base - step;
            let minus = self.evaluate(&probe)?;
            probe.data[i] = base;
            data[i] = (plus - minus) / (2.0 * step * w);
        }
        Ok(self.space().wrap_dual(data))
    }

    /// Closed-form minimizer where one exists: direct solve for quadratics and
    /// least squares, absent for p-Dirichlet (use a reference solve instead).
    pub fn exact_minimizer(&self) -> Result<Option<Vector>> {
        match self {
            Functional::Quadratic(q) => {
                let chol = q.cholesky()?;
                let mut sol = chol.solve(&q.b.data);
                // one step of iterative refinement
                let residual = &q.b.data - q.matrix.apply(&sol);
                sol += chol.solve(&residual);
                Ok(Some(q.space.wrap(sol)))
            }
            Functional::OperatorLsq(l) => {
                let chol = Cholesky::new(l.normal_matrix().clone()).ok_or_else(|| {
                    Error::SpdViolation("normal equations are not positive definite".into())
                })?;
                let rhs = l.k.transpose() * &l.f;
                let mut sol = chol.solve(&rhs);
                let residual = &rhs - l.normal_matrix() * &sol;
                sol += chol.solve(&residual);
                Ok(Some(l.space.wrap(sol)))
            }
            Functional::PDirichlet(_) => Ok(None),
        }
    }

    /// Ellipticity certificate. Exact eigenvalue computation for quadratic and
    /// least-squares energies; a sampled lower bound (with a safety margin of
    /// one half) over `samples` random pairs for the p-Dirichlet family.
    pub fn ellipticity_certificate(&self, samples: usize, seed: u64) -> Result<EllipticityCertificate> {
        match self {
            Functional::Quadratic(q) => EllipticityCertificate {
                alpha: q.norm_relative_min_eigenvalue(),
                s: 2.0,
                origin: CertificateOrigin::ExactEigen,
            }
            .validate(),
            Functional::OperatorLsq(l) => {
                let eig = SymmetricEigen::new(l.normal_matrix().clone());
                let alpha = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
                EllipticityCertificate {
                    alpha,
                    s: 2.0,
                    origin: CertificateOrigin::ExactEigen,
                }
                .validate()
            }
            Functional::PDirichlet(_) => {
                let n = samples.max(1);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let space = self.space();
                let mut min_ratio = f64::INFINITY;
                for _ in 0..n {
                    let x = space.random_vector(&mut rng);
                    let y = space.random_vector(&mut rng);
                    let diff = x.sub(&y);
                    let dn = diff.norm();
                    if dn == 0.0 {
                        continue;
                    }
                    let gx = self.gradient(&x)?;
                    let gy = self.gradient(&y)?;
                    let num = pairing(&gx, &diff)? - pairing(&gy, &diff)?;
                    min_ratio = min_ratio.min(num / (dn * dn));
                }
                EllipticityCertificate {
                    alpha: 0.5 * min_ratio,
                    s: 2.0,
                    origin: CertificateOrigin::SampledLowerBound { pairs: n },
                }
                .validate()
            }
        }
    }
}
