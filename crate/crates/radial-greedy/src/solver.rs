//! The progressive-learning loop `u_m = u_{m-1} + argmin_{z in D} E(u_{m-1} + z)`
//! and the exact-line-search steepest-descent baseline, with per-iteration
//! telemetry.

use crate::dictionary::{Atom, Dictionary, InnerSolveOptions};
use crate::error::{Error, Result};
use crate::functional::Functional;
use crate::space::{pairing, NormKind, Vector};

/// Stopping rules and bookkeeping knobs for a run.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop once the per-iteration decrease `d_m` falls to this value.
    pub tol_decrease: f64,
    /// Stop once the square root of the empirical risk at the previous
    /// iterate, which equals `d_m`, falls to this value.
    pub tol_stationarity: f64,
    pub inner: InnerSolveOptions,
    pub record_dual_norm: bool,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 1000,
            tol_decrease: 0.0,
            tol_stationarity: 0.0,
            inner: InnerSolveOptions::default(),
            record_dual_norm: true,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        if !(self.tol_decrease >= 0.0) || !(self.tol_stationarity >= 0.0) {
            return Err(Error::InvalidParameter("stopping tolerances must be non-negative".into()));
        }
        self.inner.validate()
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    MaxIters,
    DecreaseTol,
    StationarityTol,
    ExactFixpoint,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Termination::MaxIters => "max-iters",
            Termination::DecreaseTol => "decrease-tol",
            Termination::StationarityTol => "stationarity-tol",
            Termination::ExactFixpoint => "exact-fixpoint",
        };
        f.write_str(s)
    }
}

impl Termination {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "max-iters" => Ok(Termination::MaxIters),
            "decrease-tol" => Ok(Termination::DecreaseTol),
            "stationarity-tol" => Ok(Termination::StationarityTol),
            "exact-fixpoint" => Ok(Termination::ExactFixpoint),
            other => Err(Error::InvalidParameter(format!("unknown termination '{other}'"))),
        }
    }
}

/// Telemetry of one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateRecord {
    pub m: usize,
    /// `E(u_m)`
    pub energy: f64,
    /// `d_m = E(u_{m-1}) - E(u_m)`
    pub decrease: f64,
    /// `|u_m - u_{m-1}|`
    pub step_norm: f64,
    /// `<E'(u_m), u_m - u_{m-1}>`
    pub stationarity: f64,
    /// `|E'(u_m)|_*` (surrogate-normed and report-only on W1p spaces)
    pub grad_dual_norm: Option<f64>,
    /// `E(u_m) - E(u*)` when a reference minimizer is known
    pub gap: Option<f64>,
    pub atom_summary: String,
}

/// A full run: final iterate, telemetry, and the stack of stored residuals.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub final_iterate: Vector,
    pub records: Vec<IterateRecord>,
    /// The atom stack of progressive learning; empty for steepest descent.
    pub atoms: Vec<Atom>,
    /// Realized corrections per iteration (both methods).
    pub steps: Vec<Vector>,
    pub termination: Termination,
}

impl RunResult {
    /// Iterates `u_1 .. u_M` re-assembled from the stored steps.
    pub fn iterates(&self) -> Vec<Vector> {
        let mut out = Vec::with_capacity(self.steps.len());
        let mut u = self.final_iterate.space().zeros();
        for s in &self.steps {
            u = u.add(s);
            out.push(u.clone());
        }
        out
    }

    /// Gap column when every record carries one.
    pub fn gaps(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.gap).collect()
    }
}

/// First stopping rule satisfied by a completed record, if any. Precedence:
/// exact fixpoint, then stationarity, then decrease.
pub fn stopping_check(record: &IterateRecord, config: &SolverConfig) -> Option<Termination> {
    if record.step_norm == 0.0 {
        return Some(Termination::ExactFixpoint);
    }
    // sqrt of the empirical risk at u_{m-1} is exactly the decrease d_m
    if record.decrease.abs() <= config.tol_stationarity {
        return Some(Termination::StationarityTol);
    }
    if record.decrease <= config.tol_decrease {
        return Some(Termination::DecreaseTol);
    }
    None
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct RunState {
    u: Vector,
    prev_energy: f64,
    e_star: Option<f64>,
    records: Vec<IterateRecord>,
    atoms: Vec<Atom>,
    steps: Vec<Vector>,
}

impl RunState {
    fn new(e: &Functional, reference: Option<&Vector>) -> Result<Self> {
        let u = e.space().zeros();
        let prev_energy = e.evaluate(&u)?;
        let e_star = match reference {
            Some(r) => Some(e.evaluate(r)?),
            None => None,
        };
        Ok(RunState {
            u,
            prev_energy,
            e_star,
            records: Vec::new(),
            atoms: Vec::new(),
            steps: Vec::new(),
        })
    }

    /// Record the accepted step and report the stopping rule it triggers.
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        e: &Functional,
        config: &SolverConfig,
        m: usize,
        correction: Vector,
        energy: f64,
        atom: Option<Atom>,
        summary: String,
    ) -> Result<Option<Termination>> {
        let u_next = self.u.add(&correction);
        let grad = e.gradient(&u_next)?;
        let record = IterateRecord {
            m,
            energy,
            decrease: self.prev_energy - energy,
            step_norm: correction.norm(),
            stationarity: pairing(&grad, &correction)?,
            grad_dual_norm: config.record_dual_norm.then(|| grad.dual_norm()),
            gap: self.e_star.map(|es| energy - es),
            atom_summary: summary,
        };
        let stop = stopping_check(&record, config);
        self.records.push(record);
        if let Some(a) = atom {
            self.atoms.push(a);
        }
        self.steps.push(correction);
        self.u = u_next;
        self.prev_energy = energy;
        Ok(stop)
    }

    fn finish(self, termination: Termination) -> RunResult {
        RunResult {
            final_iterate: self.u,
            records: self.records,
            atoms: self.atoms,
            steps: self.steps,
            termination,
        }
    }

    fn abort(self, at: usize, source: Error) -> Error {
        Error::SolverAborted {
            at,
            source: Box::new(source),
            partial: Box::new(self.finish(Termination::MaxIters)),
        }
    }
}

/// Progressive learning by dictionary optimization: `u_0 = 0` and
/// `u_m = u_{m-1} + z_m` with `z_m` an (approximate) minimizer of
/// `E(u_{m-1} + .)` over the dictionary. Pass the exact or reference
/// minimizer to populate the gap column.
pub fn progressive_learning(
    e: &Functional,
    dict: &Dictionary,
    config: &SolverConfig,
    reference: Option<&Vector>,
) -> Result<RunResult> {
    config.validate()?;
    let mut state = RunState::new(e, reference)?;
    let mut termination = Termination::MaxIters;
    for m in 1..=config.max_iters {
        let mut inner = config.inner.clone();
        inner.seed = splitmix64(config.seed ^ config.inner.seed.wrapping_add(m as u64));
        let solve = match dict.inner_minimize(e, &state.u, &inner) {
            Ok(s) => s,
            Err(err) => return Err(state.abort(m, err)),
        };
        let stop = state.push(
            e,
            config,
            m,
            solve.correction,
            solve.value,
            Some(solve.atom),
            solve.summary,
        )?;
        if let Some(t) = stop {
            termination = t;
            break;
        }
    }
    Ok(state.finish(termination))
}

/// Method of steepest descent with exact line search. Needs an inner-product
/// norm, where the unit-sphere minimizer of `<E'(u), .>` is the negated,
/// norm-scaled gradient.
pub fn steepest_descent(
    e: &Functional,
    config: &SolverConfig,
    reference: Option<&Vector>,
) -> Result<RunResult> {
    config.validate()?;
    let space = e.space();
    if !space.is_inner_product() {
        return Err(Error::Unsupported(
            "steepest descent needs a euclidean, weighted-euclidean, or discrete-L2 norm".into(),
        ));
    }
    let mut state = RunState::new(e, reference)?;
    let mut termination = Termination::MaxIters;
    for m in 1..=config.max_iters {
        let grad = e.gradient(&state.u)?;
        let direction = descent_direction(&grad)?;
        let (correction, energy, summary) = match &direction {
            None => (space.zeros(), state.prev_energy, "sd;fixpoint".to_string()),
            Some(w) => {
                let lambda = match crate::dictionary::line_search_scale(e, &state.u, w) {
                    Ok(l) => l,
                    Err(err) => return Err(state.abort(m, err)),
                };
                let step = w.scaled(lambda);
                let energy = e.evaluate(&state.u.add(&step))?;
                (step, energy, format!("sd;lambda={lambda:.9e}"))
            }
        };
        let stop = state.push(e, config, m, correction, energy, None, summary)?;
        if let Some(t) = stop {
            termination = t;
            break;
        }
    }
    Ok(state.finish(termination))
}

/// Unit direction minimizing `<g, .>` over the sphere; `None` at a zero
/// gradient. For norm matrix `M` this is `-M^{-1} g / |M^{-1} g|`.
fn descent_direction(grad: &crate::space::DualVector) -> Result<Option<Vector>> {
    let space = grad.space().clone();
    let coeffs: Vec<f64> = match space.norm_kind() {
        NormKind::Euclidean | NormKind::DiscreteLp { .. } => grad.coeffs().to_vec(),
        NormKind::WeightedEuclidean { weights } => grad
            .coeffs()
            .iter()
            .zip(weights)
            .map(|(g, w)| g / w)
            .collect(),
        NormKind::DiscreteW1p { .. } => unreachable!("rejected before the loop"),
    };
    let d = space.vector(coeffs)?;
    let n = d.norm();
    if n == 0.0 {
        return Ok(None);
    }
    Ok(Some(d.scaled(-1.0 / n)))
}
