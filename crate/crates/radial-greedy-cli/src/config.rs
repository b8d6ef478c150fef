//! The experiment config file: schema, validation, and assembly of the
//! in-memory problem, dictionary and solver objects.
//!
//! The format is TOML with the sections mirrored below; unknown keys are
//! rejected. Paths inside the config resolve relative to the config file's
//! directory. The full schema is documented in the repository README.

use std::path::{Path, PathBuf};

use radial_greedy::{
    Activation, BasisCone, Dictionary, Functional, Grid, InnerSolveOptions, MonomialCone,
    NeuralCone, OperatorLsq, PDirichlet, Quadratic, Rank1Cone, SolverConfig, Space, Vector,
};
use serde::Deserialize;

use crate::generators;
use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    #[serde(default)]
    pub compare_baseline: bool,
    pub problem: ProblemSection,
    pub dictionary: DictionarySection,
    pub solver: SolverSection,
    pub outputs: OutputsSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub family: String,
    // quadratic
    pub matrix: Option<String>,
    pub target: Option<String>,
    pub norm: Option<String>,
    pub weights: Option<Vec<f64>>,
    // operator-lsq
    pub grid: Option<Vec<usize>>,
    pub operator: Option<String>,
    pub data: Option<String>,
    pub ridge: Option<f64>,
    // p-dirichlet
    pub p: Option<f64>,
    pub phi: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionarySection {
    pub family: String,
    // basis
    pub vectors: Option<String>,
    // monomial
    pub beta_min: Option<f64>,
    pub beta_max: Option<f64>,
    // rank1
    pub shape: Option<Vec<usize>>,
    // neural
    pub architecture: Option<Vec<usize>>,
    pub activation: Option<String>,
    pub weight_bound: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub max_iters: usize,
    #[serde(default)]
    pub tol_decrease: f64,
    #[serde(default)]
    pub tol_stationarity: f64,
    #[serde(default = "default_true")]
    pub record_dual_norm: bool,
    #[serde(default)]
    pub seed: u64,
    pub inner: Option<InnerSection>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InnerSection {
    pub beta_grid_points: Option<usize>,
    pub refine_iters: Option<usize>,
    pub als_sweeps: Option<usize>,
    pub als_stagnation_tol: Option<f64>,
    pub nn_restarts: Option<usize>,
    pub nn_steps: Option<usize>,
    pub nn_step_size: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsSection {
    pub directory: String,
    #[serde(default = "default_true")]
    pub emit_svg: bool,
    #[serde(default = "default_true")]
    pub emit_csv: bool,
}

/// Everything `run`/`check`/`compare` need, assembled and validated.
pub struct Experiment {
    pub functional: Functional,
    pub dictionary: Dictionary,
    pub solver: SolverConfig,
    pub output_dir: PathBuf,
    pub emit_svg: bool,
    pub emit_csv: bool,
    pub compare_baseline: bool,
    /// Reference minimizer: exact where available, otherwise a gradient-
    /// descent reference solve (flagged in reports).
    pub reference: Option<Vector>,
    pub reference_is_surrogate: bool,
}

pub fn load(path: &Path) -> Result<Experiment, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::failure(format!("cannot read config {}: {e}", path.display())))?;
    if text.trim().is_empty() {
        return Err(CliError::failure(format!("config {} is empty", path.display())));
    }
    let parsed: RunConfigFile = toml::from_str(&text)
        .map_err(|e| CliError::failure(format!("config {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    build(parsed, base)
}

fn field<'a, T>(opt: &'a Option<T>, family: &str, name: &str) -> Result<&'a T, CliError> {
    opt.as_ref()
        .ok_or_else(|| CliError::failure(format!("problem family '{family}' needs '{name}'")))
}

fn forbid<T>(opt: &Option<T>, family: &str, name: &str) -> Result<(), CliError> {
    if opt.is_some() {
        return Err(CliError::failure(format!(
            "key '{name}' is not allowed for family '{family}'"
        )));
    }
    Ok(())
}

fn lift<T>(r: radial_greedy::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::failure(e.to_string()))
}

fn build(cfg: RunConfigFile, base: &Path) -> Result<Experiment, CliError> {
    let functional = build_problem(&cfg.problem, base)?;
    let dictionary = build_dictionary(&cfg.dictionary, functional.space(), base)?;
    let solver = build_solver(&cfg.solver)?;
    lift(solver.validate())?;

    let (reference, reference_is_surrogate) = match lift(functional.exact_minimizer())? {
        Some(u) => (Some(u), false),
        None => match radial_greedy::reference_minimize(&functional, 1e-9) {
            Ok(u) => (Some(u), true),
            Err(_) => (None, false),
        },
    };

    Ok(Experiment {
        functional,
        dictionary,
        solver,
        output_dir: {
            let dir = Path::new(&cfg.outputs.directory);
            if dir.is_absolute() {
                dir.to_path_buf()
            } else {
                base.join(dir)
            }
        },
        emit_svg: cfg.outputs.emit_svg,
        emit_csv: cfg.outputs.emit_csv,
        compare_baseline: cfg.compare_baseline,
        reference,
        reference_is_surrogate,
    })
}

fn build_problem(p: &ProblemSection, base: &Path) -> Result<Functional, CliError> {
    match p.family.as_str() {
        "quadratic" => {
            forbid(&p.operator, "quadratic", "operator")?;
            forbid(&p.data, "quadratic", "data")?;
            forbid(&p.ridge, "quadratic", "ridge")?;
            forbid(&p.p, "quadratic", "p")?;
            forbid(&p.phi, "quadratic", "phi")?;
            forbid(&p.grid, "quadratic", "grid")?;
            let matrix = generators::parse_quadratic_matrix(field(&p.matrix, "quadratic", "matrix")?, base)?;
            let dim = matrix.dim();
            let space = match p.norm.as_deref().unwrap_or("euclidean") {
                "euclidean" => lift(Space::euclidean(dim))?,
                "weighted" => {
                    let w = field(&p.weights, "quadratic", "weights")?.clone();
                    lift(Space::weighted_euclidean(w))?
                }
                other => {
                    return Err(CliError::failure(format!(
                        "unknown quadratic norm '{other}' (euclidean | weighted)"
                    )))
                }
            };
            let b = generators::parse_vector(field(&p.target, "quadratic", "target")?, dim, None, base)?;
            let b = lift(space.vector(b))?;
            Ok(Functional::Quadratic(lift(Quadratic::new(matrix, b))?))
        }
        "operator-lsq" => {
            forbid(&p.matrix, "operator-lsq", "matrix")?;
            forbid(&p.target, "operator-lsq", "target")?;
            forbid(&p.norm, "operator-lsq", "norm")?;
            forbid(&p.weights, "operator-lsq", "weights")?;
            forbid(&p.p, "operator-lsq", "p")?;
            forbid(&p.phi, "operator-lsq", "phi")?;
            let shape = field(&p.grid, "operator-lsq", "grid")?.clone();
            let grid = lift(Grid::new(shape, (0.0, 1.0)))?;
            let space = lift(Space::discrete_lp(2.0, grid))?;
            let dim = space.dim();
            let nodes_2d = space.grid().unwrap().ndims() == 2;
            let nodes = (!nodes_2d).then(|| space.grid().unwrap().axis_nodes(0));
            let k = generators::parse_operator(field(&p.operator, "operator-lsq", "operator")?, dim, base)?;
            let data = generators::parse_vector(
                field(&p.data, "operator-lsq", "data")?,
                k.nrows(),
                nodes.as_deref(),
                base,
            )?;
            let ridge = p.ridge.unwrap_or(0.0);
            Ok(Functional::OperatorLsq(lift(OperatorLsq::new(k, data, ridge, space))?))
        }
        "p-dirichlet" => {
            forbid(&p.matrix, "p-dirichlet", "matrix")?;
            forbid(&p.target, "p-dirichlet", "target")?;
            forbid(&p.norm, "p-dirichlet", "norm")?;
            forbid(&p.weights, "p-dirichlet", "weights")?;
            forbid(&p.operator, "p-dirichlet", "operator")?;
            forbid(&p.data, "p-dirichlet", "data")?;
            forbid(&p.ridge, "p-dirichlet", "ridge")?;
            let exponent = *field(&p.p, "p-dirichlet", "p")?;
            let shape = field(&p.grid, "p-dirichlet", "grid")?.clone();
            let grid = lift(Grid::new(shape, (0.0, 1.0)))?;
            let space = lift(Space::discrete_w1p(exponent, grid))?;
            let dim = space.dim();
            let nodes_2d = space.grid().unwrap().ndims() == 2;
            let nodes = (!nodes_2d).then(|| space.grid().unwrap().axis_nodes(0));
            let phi = generators::parse_vector(
                field(&p.phi, "p-dirichlet", "phi")?,
                dim,
                nodes.as_deref(),
                base,
            )?;
            let phi = lift(space.dual(phi))?;
            Ok(Functional::PDirichlet(lift(PDirichlet::new(exponent, phi))?))
        }
        other => Err(CliError::failure(format!(
            "unknown problem family '{other}' (quadratic | operator-lsq | p-dirichlet)"
        ))),
    }
}

fn build_dictionary(
    d: &DictionarySection,
    space: &Space,
    base: &Path,
) -> Result<Dictionary, CliError> {
    match d.family.as_str() {
        "basis" => {
            let spec = d.vectors.as_deref().unwrap_or("coordinate");
            let cone = match spec {
                "coordinate" => lift(BasisCone::coordinate(space))?,
                "sine" => {
                    let vs = generators::sine_basis(space.dim())
                        .into_iter()
                        .map(|v| lift(space.vector(v)))
                        .collect::<Result<Vec<_>, _>>()?;
                    lift(BasisCone::new(vs))?
                }
                path => {
                    let m = generators::read_matrix_file(&{
                        let p = Path::new(path);
                        if p.is_absolute() {
                            p.to_path_buf()
                        } else {
                            base.join(p)
                        }
                    })?;
                    if m.ncols() != space.dim() {
                        return Err(CliError::failure(format!(
                            "basis file rows must have {} entries",
                            space.dim()
                        )));
                    }
                    let vs = (0..m.nrows())
                        .map(|i| lift(space.vector((0..m.ncols()).map(|j| m[(i, j)]).collect())))
                        .collect::<Result<Vec<_>, _>>()?;
                    lift(BasisCone::new(vs))?
                }
            };
            Ok(Dictionary::Basis(cone))
        }
        "monomial" => {
            let lo = d.beta_min.unwrap_or(0.0);
            let hi = d.beta_max.unwrap_or(2.0);
            Ok(Dictionary::Monomial(lift(MonomialCone::new((lo, hi), space.clone()))?))
        }
        "rank1" => {
            let shape = d
                .shape
                .clone()
                .or_else(|| space.grid().map(|g| g.shape().to_vec()))
                .ok_or_else(|| CliError::failure("rank1 dictionary needs 'shape'".to_string()))?;
            if shape.len() != 2 {
                return Err(CliError::failure("rank1 shape must have two axes".to_string()));
            }
            Ok(Dictionary::Rank1(lift(Rank1Cone::new((shape[0], shape[1]), space.clone()))?))
        }
        "neural" => {
            let arch = field(&d.architecture, "neural", "architecture")?.clone();
            let activation = match d.activation.as_deref() {
                None => Activation::Tanh,
                Some(name) => lift(Activation::parse(name))?,
            };
            let bound = d.weight_bound.unwrap_or(1.0);
            Ok(Dictionary::Neural(lift(NeuralCone::new(
                arch,
                activation,
                bound,
                space.clone(),
            ))?))
        }
        other => Err(CliError::failure(format!(
            "unknown dictionary family '{other}' (basis | monomial | rank1 | neural)"
        ))),
    }
}

fn build_solver(s: &SolverSection) -> Result<SolverConfig, CliError> {
    let mut inner = InnerSolveOptions::default();
    if let Some(i) = &s.inner {
        if let Some(v) = i.beta_grid_points {
            inner.beta_grid_points = v;
        }
        if let Some(v) = i.refine_iters {
            inner.refine_iters = v;
        }
        if let Some(v) = i.als_sweeps {
            inner.als_sweeps = v;
        }
        if let Some(v) = i.als_stagnation_tol {
            inner.als_stagnation_tol = v;
        }
        if let Some(v) = i.nn_restarts {
            inner.nn_restarts = v;
        }
        if let Some(v) = i.nn_steps {
            inner.nn_steps = v;
        }
        if let Some(v) = i.nn_step_size {
            inner.nn_step_size = v;
        }
    }
    Ok(SolverConfig {
        max_iters: s.max_iters,
        tol_decrease: s.tol_decrease,
        tol_stationarity: s.tol_stationarity,
        inner,
        record_dual_norm: s.record_dual_norm,
        seed: s.seed,
    })
}
