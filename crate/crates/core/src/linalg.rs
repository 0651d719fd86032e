//! Small dense symmetric positive-definite solves and ordinary least squares.

use crate::error::{Error, Result};

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has {} entries, expected {n}",
                    r.len()
                )));
            }
            m.data[i * n..(i + 1) * n].copy_from_slice(r);
        }
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n.max(1)).map(<[f64]>::to_vec).collect()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    fn max_diag(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)].abs()).fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for SymMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for SymMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Lower Cholesky factor, or `None` when a pivot is not safely positive.
fn cholesky(a: &SymMatrix) -> Option<SymMatrix> {
    let n = a.n;
    let tol = f64::EPSILON * a.max_diag() * n as f64;
    let mut l = SymMatrix::zeros(n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > tol) {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

fn cholesky_solve(l: &SymMatrix, b: &[f64]) -> Vec<f64> {
    let n = l.n;
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpdSolution {
    pub x: Vec<f64>,
    /// A diagonal jitter had to be added to factorize the system.
    pub jittered: bool,
}

/// Solves `(a + ridge I) x = b`.
///
/// Without ridge, a failed factorization is retried with jitter of
/// `1e-10` then `1e-8` times the largest diagonal entry.
pub fn solve_spd(a: &SymMatrix, b: &[f64], ridge: f64) -> Result<SpdSolution> {
    if b.len() != a.n {
        return Err(Error::ShapeMismatch(format!(
            "matrix is {0}x{0} but right-hand side has {1} entries",
            a.n,
            b.len()
        )));
    }
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::InvalidConfig(format!("ridge must be non-negative, got {ridge}")));
    }
    if a.data.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    let shifted = |shift: f64| {
        let mut m = a.clone();
        for i in 0..m.n {
            m[(i, i)] += shift;
        }
        m
    };
    if let Some(l) = cholesky(&shifted(ridge)) {
        return Ok(SpdSolution {
            x: cholesky_solve(&l, b),
            jittered: false,
        });
    }
    if ridge == 0.0 {
        let scale = a.max_diag();
        for factor in [1e-10, 1e-8] {
            if let Some(l) = cholesky(&shifted(factor * scale)) {
                return Ok(SpdSolution {
                    x: cholesky_solve(&l, b),
                    jittered: true,
                });
            }
        }
    }
    Err(Error::SingularSystem)
}

/// Least-squares fit with intercept: `y ≈ intercept + features · slopes`.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub intercept: f64,
    pub slopes: Vec<f64>,
    pub jittered: bool,
}

impl OlsFit {
    pub fn predict(&self, features: &[f64]) -> f64 {
        self.intercept
            + self
                .slopes
                .iter()
                .zip(features)
                .map(|(b, x)| b * x)
                .sum::<f64>()
    }
}

/// Ordinary least squares through the centred normal equations.
pub fn ols(features: &[Vec<f64>], y: &[f64]) -> Result<OlsFit> {
    let n = features.len();
    if n != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "{n} feature rows but {} responses",
            y.len()
        )));
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let d = features[0].len();
    if features.iter().any(|r| r.len() != d) {
        return Err(Error::ShapeMismatch("ragged feature rows".into()));
    }
    let nf = n as f64;
    let x_mean: Vec<f64> = (0..d)
        .map(|j| features.iter().map(|r| r[j]).sum::<f64>() / nf)
        .collect();
    let y_mean = y.iter().sum::<f64>() / nf;
    let mut gram = SymMatrix::zeros(d);
    let mut rhs = vec![0.0; d];
    for (row, &yi) in features.iter().zip(y) {
        for j in 0..d {
            let xj = row[j] - x_mean[j];
            rhs[j] += xj * (yi - y_mean);
            for k in 0..=j {
                gram[(j, k)] += xj * (row[k] - x_mean[k]);
            }
        }
    }
    for j in 0..d {
        for k in 0..j {
            gram[(k, j)] = gram[(j, k)];
        }
    }
    let sol = solve_spd(&gram, &rhs, 0.0)?;
    let intercept = y_mean - sol.x.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
    Ok(OlsFit {
        intercept,
        slopes: sol.x,
        jittered: sol.jittered,
    })
}
