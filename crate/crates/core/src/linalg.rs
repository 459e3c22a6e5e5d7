//! Small dense linear algebra: Gaussian elimination, Cholesky and a cyclic Jacobi
//! solver for the generalized symmetric eigenproblem A x = λ B x.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(Self {
            rows: r,
            cols: c,
            data: rows.concat(),
        })
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)] * x[j]).sum())
            .collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Largest |A_ij − A_ji|.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// (A + Aᵀ)/2.
    pub fn symmetrized(&self) -> Matrix {
        let mut s = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let m = 0.5 * (self[(i, j)] + self[(j, i)]);
                s[(i, j)] = m;
                s[(j, i)] = m;
            }
        }
        s
    }

    /// Leading k×k block.
    pub fn leading(&self, k: usize) -> Matrix {
        let mut out = Matrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                out[(i, j)] = self[(i, j)];
            }
        }
        out
    }

    fn require_square(&self, what: &str) -> Result<()> {
        if !self.is_square() {
            return Err(Error::Shape(format!(
                "{what} must be square, got {}x{}",
                self.rows, self.cols
            )));
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Solve A x = b by Gaussian elimination with partial pivoting.
pub fn solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    a.require_square("system matrix")?;
    let n = a.rows;
    if b.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: b.len(),
        });
    }
    let mut m = a.clone();
    let mut x = b.to_vec();
    let scale = m.data.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs()))
            .expect("non-empty pivot range");
        if m[(piv, col)].abs() <= 1e-14 * scale {
            return Err(Error::Shape(format!("singular system at column {col}")));
        }
        if piv != col {
            for j in 0..n {
                m.data.swap(piv * n + j, col * n + j);
            }
            x.swap(piv, col);
        }
        for i in (col + 1)..n {
            let f = m[(i, col)] / m[(col, col)];
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                m[(i, j)] -= f * m[(col, j)];
            }
            x[i] -= f * x[col];
        }
    }
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|j| m[(i, j)] * x[j]).sum();
        x[i] = (x[i] - s) / m[(i, i)];
    }
    Ok(x)
}

/// Lower-triangular L with B = L Lᵀ.
pub fn cholesky(b: &Matrix) -> Result<Matrix> {
    b.require_square("Cholesky input")?;
    let n = b.rows;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let d = b[(j, j)] - (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum::<f64>();
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { row: j, pivot: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let s = b[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>();
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns ascending eigenvalues and the matching orthonormal eigenvectors as columns.
pub fn symmetric_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    a.require_square("eigen input")?;
    let n = a.rows;
    let mut m = a.symmetrized();
    let mut v = Matrix::identity(n);
    let target = 1e-12 * m.frobenius_norm();
    for _sweep in 0..100 {
        if off_diagonal_norm(&m) <= target {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut m, &mut v, p, q, c, s);
            }
        }
    }
    let off = off_diagonal_norm(&m);
    if off > target.max(f64::MIN_POSITIVE) * 10.0 {
        return Err(Error::Shape(format!(
            "Jacobi iteration stalled with off-diagonal norm {off:e}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vecs = Matrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        for r in 0..n {
            vecs[(r, col)] = v[(r, src)];
        }
    }
    Ok((values, vecs))
}

fn off_diagonal_norm(m: &Matrix) -> f64 {
    let mut s = 0.0;
    for i in 0..m.rows {
        for j in 0..m.cols {
            if i != j {
                s += m[(i, j)] * m[(i, j)];
            }
        }
    }
    s.sqrt()
}

fn rotate(m: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = m.rows;
    for k in 0..n {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = c * mkp - s * mkq;
        m[(k, q)] = s * mkp + c * mkq;
    }
    for k in 0..n {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = c * mpk - s * mqk;
        m[(q, k)] = s * mpk + c * mqk;
    }
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Solution of A x = λ B x for symmetric A and symmetric positive definite B.
#[derive(Clone, Debug)]
pub struct GeneralizedEigen {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// B-orthonormal eigenvectors as columns, in the order of `values`.
    pub vectors: Matrix,
    /// Largest asymmetry of the inputs before symmetrization.
    pub asymmetry: f64,
}

impl GeneralizedEigen {
    /// ‖A x − λ B x‖ / (‖A‖_F ‖x‖) for eigenpair `k`, using the symmetrized inputs.
    pub fn residual(&self, a: &Matrix, b: &Matrix, k: usize) -> f64 {
        let a = a.symmetrized();
        let b = b.symmetrized();
        let x: Vec<f64> = (0..a.rows).map(|r| self.vectors[(r, k)]).collect();
        let ax = a.matvec(&x);
        let bx = b.matvec(&x);
        let lam = self.values[k];
        let r = ax
            .iter()
            .zip(&bx)
            .map(|(p, q)| (p - lam * q).powi(2))
            .sum::<f64>()
            .sqrt();
        let xn = x.iter().map(|t| t * t).sum::<f64>().sqrt();
        r / (a.frobenius_norm().max(f64::MIN_POSITIVE) * xn.max(f64::MIN_POSITIVE))
    }
}

/// Generalized symmetric eigenproblem by Cholesky reduction of B and Jacobi on L⁻¹ A L⁻ᵀ.
pub fn generalized_symmetric_eigen(a: &Matrix, b: &Matrix) -> Result<GeneralizedEigen> {
    a.require_square("A")?;
    b.require_square("B")?;
    if a.rows != b.rows {
        return Err(Error::Shape(format!(
            "A is {}x{} but B is {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let n = a.rows;
    let asymmetry = a.asymmetry().max(b.asymmetry());
    let a = a.symmetrized();
    let l = cholesky(&b.symmetrized())?;
    // C = L⁻¹ A L⁻ᵀ: forward-substitute the columns of A, then the rows of the result
    let mut y = Matrix::zeros(n, n);
    for col in 0..n {
        let colv: Vec<f64> = (0..n).map(|r| a[(r, col)]).collect();
        let s = forward(&l, &colv);
        for r in 0..n {
            y[(r, col)] = s[r];
        }
    }
    let mut c = Matrix::zeros(n, n);
    for row in 0..n {
        let rowv: Vec<f64> = (0..n).map(|k| y[(row, k)]).collect();
        let s = forward(&l, &rowv);
        for k in 0..n {
            c[(row, k)] = s[k];
        }
    }
    let (values, q) = symmetric_eigen(&c)?;
    let mut vectors = Matrix::zeros(n, n);
    for col in 0..n {
        let qv: Vec<f64> = (0..n).map(|r| q[(r, col)]).collect();
        let x = backward_transposed(&l, &qv);
        for r in 0..n {
            vectors[(r, col)] = x[r];
        }
    }
    Ok(GeneralizedEigen {
        values,
        vectors,
        asymmetry,
    })
}

/// Solve L y = b.
fn forward(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows;
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[(i, k)] * y[k]).sum();
        y[i] = (b[i] - s) / l[(i, i)];
    }
    y
}

/// Solve Lᵀ x = b.
fn backward_transposed(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows;
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|k| l[(k, i)] * x[k]).sum();
        x[i] = (b[i] - s) / l[(i, i)];
    }
    x
}
