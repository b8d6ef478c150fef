//! Named generators and plain-text file formats for matrices, vectors and
//! basis sets.
//!
//! Matrix / vector files are dense text: first line `rows cols`, then
//! whitespace-separated row-major values. Generator strings look like
//! `poisson1d(64)` or `monomial(2.0,1.3)`; anything that is not a known
//! generator is treated as a path relative to the config file.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use radial_greedy::QuadraticMatrix;

use crate::CliError;

/// 1-D Dirichlet Laplacian stencil `[-1, 2, -1]` on `n` interior nodes.
pub fn poisson1d(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            2.0
        } else if i.abs_diff(j) == 1 {
            -1.0
        } else {
            0.0
        }
    })
}

/// Orthonormal eigenbasis of [`poisson1d`]: `v_k[j] = sqrt(2/(n+1)) sin(jk pi/(n+1))`.
pub fn sine_basis(n: usize) -> Vec<Vec<f64>> {
    let scale = (2.0 / (n as f64 + 1.0)).sqrt();
    (1..=n)
        .map(|k| {
            (1..=n)
                .map(|j| scale * ((j * k) as f64 * std::f64::consts::PI / (n as f64 + 1.0)).sin())
                .collect()
        })
        .collect()
}

/// Split `name(arg, arg, ...)` into its name and raw arguments.
fn parse_call(spec: &str) -> Option<(&str, Vec<&str>)> {
    let open = spec.find('(')?;
    if !spec.ends_with(')') {
        return None;
    }
    let name = &spec[..open];
    let inner = &spec[open + 1..spec.len() - 1];
    let args = if inner.trim().is_empty() {
        Vec::new()
    } else {
        inner.split(',').map(str::trim).collect()
    };
    Some((name, args))
}

fn usize_arg(args: &[&str], idx: usize, what: &str) -> Result<usize, CliError> {
    args.get(idx)
        .and_then(|a| a.parse().ok())
        .ok_or_else(|| CliError::failure(format!("{what}: bad or missing integer argument")))
}

fn f64_arg(args: &[&str], idx: usize, what: &str) -> Result<f64, CliError> {
    args.get(idx)
        .and_then(|a| a.parse().ok())
        .ok_or_else(|| CliError::failure(format!("{what}: bad or missing numeric argument")))
}

fn resolve(base: &Path, spec: &str) -> PathBuf {
    let p = Path::new(spec);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn read_matrix_file(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::failure(format!("cannot read matrix file {}: {e}", path.display())))?;
    let mut tokens = text.split_whitespace();
    let rows: usize = tokens
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| CliError::failure(format!("{}: missing row count", path.display())))?;
    let cols: usize = tokens
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| CliError::failure(format!("{}: missing column count", path.display())))?;
    let values: Vec<f64> = tokens
        .map(|t| {
            t.parse()
                .map_err(|_| CliError::failure(format!("{}: bad value '{t}'", path.display())))
        })
        .collect::<Result<_, _>>()?;
    if values.len() != rows * cols {
        return Err(CliError::failure(format!(
            "{}: expected {} values, found {}",
            path.display(),
            rows * cols,
            values.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn write_matrix_file(path: &Path, m: &DMatrix<f64>) -> Result<(), CliError> {
    let mut out = format!("{} {}\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    std::fs::write(path, out)
        .map_err(|e| CliError::failure(format!("cannot write {}: {e}", path.display())))
}

/// Matrix spec for quadratic problems: a generator or a file path.
pub fn parse_quadratic_matrix(spec: &str, base: &Path) -> Result<QuadraticMatrix, CliError> {
    match parse_call(spec) {
        Some(("poisson1d", args)) => Ok(QuadraticMatrix::Dense(poisson1d(usize_arg(
            &args, 0, "poisson1d",
        )?))),
        Some(("poisson2d", args)) => {
            let nx = usize_arg(&args, 0, "poisson2d")?;
            let ny = usize_arg(&args, 1, "poisson2d")?;
            Ok(QuadraticMatrix::KroneckerSum {
                ax: poisson1d(nx),
                ay: poisson1d(ny),
            })
        }
        Some(("identity", args)) => {
            let n = usize_arg(&args, 0, "identity")?;
            Ok(QuadraticMatrix::Dense(DMatrix::identity(n, n)))
        }
        Some(("diag", args)) => {
            if args.is_empty() {
                return Err(CliError::failure("diag(...) needs at least one entry".to_string()));
            }
            let entries: Vec<f64> = args
                .iter()
                .enumerate()
                .map(|(i, _)| f64_arg(&args, i, "diag"))
                .collect::<Result<_, _>>()?;
            let n = entries.len();
            Ok(QuadraticMatrix::Dense(DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    entries[i]
                } else {
                    0.0
                }
            })))
        }
        Some((name, _)) => Err(CliError::failure(format!("unknown matrix generator '{name}'"))),
        None => Ok(QuadraticMatrix::Dense(read_matrix_file(&resolve(base, spec))?)),
    }
}

/// Operator spec for least-squares problems.
pub fn parse_operator(spec: &str, dim: usize, base: &Path) -> Result<DMatrix<f64>, CliError> {
    match parse_call(spec) {
        Some(("identity", _)) => Ok(DMatrix::identity(dim, dim)),
        Some(("poisson1d", args)) => Ok(poisson1d(usize_arg(&args, 0, "poisson1d")?)),
        Some((name, _)) => Err(CliError::failure(format!("unknown operator generator '{name}'"))),
        None => Ok(read_matrix_file(&resolve(base, spec))?),
    }
}

pub fn read_vector_file(path: &Path, dim: usize) -> Result<Vec<f64>, CliError> {
    let m = read_matrix_file(path)?;
    let flat: Vec<f64> = m.iter().cloned().collect();
    if flat.len() != dim {
        return Err(CliError::failure(format!(
            "{}: expected {dim} entries, found {}",
            path.display(),
            flat.len()
        )));
    }
    // the text format is row-major; nalgebra iterates column-major
    let mut out = vec![0.0; dim];
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out[i * m.ncols() + j] = m[(i, j)];
        }
    }
    Ok(out)
}

/// Vector spec: a named generator or a file path. `nodes` supplies grid
/// coordinates for the function-valued generators.
pub fn parse_vector(
    spec: &str,
    dim: usize,
    nodes: Option<&[f64]>,
    base: &Path,
) -> Result<Vec<f64>, CliError> {
    match spec {
        "zeros" => return Ok(vec![0.0; dim]),
        "ones" => return Ok(vec![1.0; dim]),
        "endpoints" => {
            let mut v = vec![0.0; dim];
            v[0] = 1.0;
            v[dim - 1] += 1.0;
            return Ok(v);
        }
        _ => {}
    }
    match parse_call(spec) {
        Some(("endpoints", args)) => {
            let scale = f64_arg(&args, 0, "endpoints")?;
            let mut v = vec![0.0; dim];
            v[0] = scale;
            v[dim - 1] += scale;
            Ok(v)
        }
        Some(("unit", args)) => {
            let k = usize_arg(&args, 0, "unit")?;
            if k >= dim {
                return Err(CliError::failure(format!("unit({k}) out of range for dim {dim}")));
            }
            let mut v = vec![0.0; dim];
            v[k] = 1.0;
            Ok(v)
        }
        Some(("sine", args)) => {
            let k = usize_arg(&args, 0, "sine")?;
            if k == 0 || k > dim {
                return Err(CliError::failure(format!("sine({k}) out of range for dim {dim}")));
            }
            Ok(sine_basis(dim)[k - 1].clone())
        }
        Some(("monomial", args)) => {
            let lambda = f64_arg(&args, 0, "monomial")?;
            let beta = f64_arg(&args, 1, "monomial")?;
            let nodes = nodes.ok_or_else(|| {
                CliError::failure("monomial(...) targets need a grid-based problem".to_string())
            })?;
            if nodes.len() != dim {
                return Err(CliError::failure("grid size does not match dimension".to_string()));
            }
            Ok(nodes
                .iter()
                .map(|&x| if beta == 0.0 { lambda } else { lambda * x.powf(beta) })
                .collect())
        }
        Some((name, _)) => Err(CliError::failure(format!("unknown vector generator '{name}'"))),
        None => read_vector_file(&resolve(base, spec), dim),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_basis_is_orthonormal_and_diagonalizes_poisson() {
        let n = 8;
        let basis = sine_basis(n);
        let a = poisson1d(n);
        for (k, v) in basis.iter().enumerate() {
            let vk = nalgebra::DVector::from_column_slice(v);
            assert!((vk.norm() - 1.0).abs() < 1e-12);
            let av = &a * &vk;
            let lambda = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos();
            assert!((av - &vk * lambda).norm() < 1e-12);
        }
    }

    #[test]
    fn endpoints_is_the_laplacian_of_ones() {
        let v = parse_vector("endpoints", 5, None, Path::new(".")).unwrap();
        let a = poisson1d(5);
        let ones = nalgebra::DVector::from_element(5, 1.0);
        let b = &a * ones;
        assert_eq!(v, b.as_slice());
    }

    #[test]
    fn matrix_file_roundtrip() {
        let dir = std::env::temp_dir().join("radial-greedy-gen-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.txt");
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.5, -3.0, 0.25, 1e-17, 7.0]);
        write_matrix_file(&path, &m).unwrap();
        let back = read_matrix_file(&path).unwrap();
        assert_eq!(m, back);
    }
}
