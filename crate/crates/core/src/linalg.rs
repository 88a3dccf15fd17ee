//! Small dense/banded linear algebra kernels used by the solvers.

use crate::error::{Error, Result};

/// Symmetric positive definite band matrix stored by lower diagonals:
/// `data[i * (bw + 1) + k]` holds `A[i][i - k]` for `k = 0..=bw`.
#[derive(Debug, Clone)]
pub struct BandSpd {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandSpd {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    /// Adds `v` to `A[i][j]` (and implicitly `A[j][i]`); requires `|i-j| <= bw`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let k = r - c;
        debug_assert!(k <= self.bw);
        self.data[r * (self.bw + 1) + k] += v;
    }

    #[cfg(test)]
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let bw = self.bw;
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let row = &self.data[i * (bw + 1)..(i + 1) * (bw + 1)];
            y[i] += row[0] * x[i];
            for k in 1..=bw.min(i) {
                let a = row[k];
                if a != 0.0 {
                    y[i] += a * x[i - k];
                    y[i - k] += a * x[i];
                }
            }
        }
    }

    /// In-place banded Cholesky factorisation `A = L Lᵀ`.
    pub fn factor(mut self) -> Result<BandCholesky> {
        let bw = self.bw;
        let n = self.n;
        let w = bw + 1;
        for i in 0..n {
            let jmin = i.saturating_sub(bw);
            for j in jmin..=i {
                // A[i][j] - sum_k L[i][k] L[j][k], k in max(jmin_i, jmin_j)..j
                let kmin = jmin.max(j.saturating_sub(bw));
                let mut s = self.data[i * w + (i - j)];
                for k in kmin..j {
                    s -= self.data[i * w + (i - k)] * self.data[j * w + (j - k)];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::Solver(format!(
                            "matrix not positive definite at row {i} (pivot {s:.3e})"
                        )));
                    }
                    self.data[i * w] = s.sqrt();
                } else {
                    self.data[i * w + (i - j)] = s / self.data[j * w];
                }
            }
        }
        Ok(BandCholesky {
            n,
            bw,
            data: self.data,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandCholesky {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let w = self.bw + 1;
        for i in 0..self.n {
            let mut s = b[i];
            let kmin = i.saturating_sub(self.bw);
            let row = &self.data[i * w..];
            for k in kmin..i {
                s -= row[i - k] * b[k];
            }
            b[i] = s / row[0];
        }
        for i in (0..self.n).rev() {
            let s = b[i] / self.data[i * w];
            b[i] = s;
            let kmin = i.saturating_sub(self.bw);
            let row = &self.data[i * w..];
            for k in kmin..i {
                b[k] -= row[i - k] * s;
            }
        }
    }
}

/// Restarted right-preconditioned GMRES for `A x = b`.
///
/// Returns the solution and the history of relative residual norms.
pub fn gmres<A, P>(
    apply: A,
    precond: P,
    b: &[f64],
    x0: Option<&[f64]>,
    rel_tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<(Vec<f64>, Vec<f64>)>
where
    A: Fn(&[f64]) -> Vec<f64>,
    P: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let bnorm = norm(b);
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let mut history = Vec::new();
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], vec![0.0]));
    }
    let mut iters = 0;
    loop {
        let ax = apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(a, c)| a - c).collect();
        let beta = norm(&r);
        history.push(beta / bnorm);
        if beta / bnorm <= rel_tol {
            return Ok((x, history));
        }
        if iters >= max_iter {
            return Err(Error::Convergence {
                iterations: iters,
                residual: beta / bnorm,
                history,
            });
        }
        let m = restart;
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|a| a / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            iters += 1;
            let zk = precond(&v[k]);
            let mut w = apply(&zk);
            z.push(zk);
            for i in 0..=k {
                let hik: f64 = w.iter().zip(&v[i]).map(|(a, c)| a * c).sum();
                h[i][k] = hik;
                w.iter_mut().zip(&v[i]).for_each(|(a, c)| *a -= hik * c);
            }
            let hn = norm(&w);
            h[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            if denom == 0.0 {
                k_used = k;
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            if g[k + 1].abs() / bnorm <= rel_tol * 0.5 || hn == 0.0 || iters >= max_iter {
                break;
            }
            v.push(w.iter().map(|a| a / hn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            x.iter_mut().zip(&z[j]).for_each(|(a, c)| *a += yj * c);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_cholesky_solves_tridiagonal() {
        let n = 50;
        let mut a = BandSpd::zeros(n, 3);
        for i in 0..n {
            a.add(i, i, 4.0);
            if i >= 1 {
                a.add(i, i - 1, -1.0);
            }
            if i >= 3 {
                a.add(i, i - 3, -0.5);
            }
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; n];
        a.matvec(&x, &mut b);
        let chol = a.clone().factor().unwrap();
        chol.solve_in_place(&mut b);
        for i in 0..n {
            assert!((b[i] - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn gmres_small_system() {
        let a = [[4.0, 1.0, 0.0], [2.0, 5.0, 1.0], [0.0, 1.0, 3.0]];
        let apply = |x: &[f64]| -> Vec<f64> {
            (0..3).map(|i| (0..3).map(|j| a[i][j] * x[j]).sum()).collect()
        };
        let b = [1.0, 2.0, 3.0];
        let (x, _) = gmres(apply, |v| v.to_vec(), &b, None, 1e-12, 10, 50).unwrap();
        let r = apply(&x);
        for i in 0..3 {
            assert!((r[i] - b[i]).abs() < 1e-10);
        }
    }
}
