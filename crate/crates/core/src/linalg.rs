//! Sparse kernels for the structured-grid solvers.

use crate::error::{Error, Result};

/// Symmetric five-point operator on an `n_outer × n_inner` lattice with
/// linear index `o * n_inner + i`.
#[derive(Debug, Clone)]
pub struct Stencil5 {
    pub n_outer: usize,
    pub n_inner: usize,
    pub diag: Vec<f64>,
    /// Coupling between `k` and `k + 1` (zero at the end of each inner run).
    pub inner: Vec<f64>,
    /// Coupling between `k` and `k + n_inner`.
    pub outer: Vec<f64>,
}

impl Stencil5 {
    pub fn zeros(n_outer: usize, n_inner: usize) -> Self {
        let n = n_outer * n_inner;
        Self {
            n_outer,
            n_inner,
            diag: vec![0.0; n],
            inner: vec![0.0; n],
            outer: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let n = self.len();
        let s = self.n_inner;
        for k in 0..n {
            let mut v = self.diag[k] * x[k];
            if k + 1 < n {
                v += self.inner[k] * x[k + 1];
            }
            if k >= 1 {
                v += self.inner[k - 1] * x[k - 1];
            }
            if k + s < n {
                v += self.outer[k] * x[k + s];
            }
            if k >= s {
                v += self.outer[k - s] * x[k - s];
            }
            y[k] = v;
        }
    }

    /// `x^T A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; x.len()];
        self.matvec(x, &mut y);
        dot(x, &y)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Incomplete Cholesky (zero fill) of a [`Stencil5`].
struct Ic0<'a> {
    a: &'a Stencil5,
    pivots: Vec<f64>,
}

impl<'a> Ic0<'a> {
    fn new(a: &'a Stencil5) -> Result<Self> {
        let n = a.len();
        let s = a.n_inner;
        let mut pivots = vec![0.0; n];
        for k in 0..n {
            let mut d = a.diag[k];
            if k >= 1 {
                d -= a.inner[k - 1] * a.inner[k - 1] / pivots[k - 1];
            }
            if k >= s {
                d -= a.outer[k - s] * a.outer[k - s] / pivots[k - s];
            }
            if !(d > 0.0) {
                // fall back to the diagonal for this row
                d = a.diag[k];
            }
            if !(d > 0.0) {
                return Err(Error::SingularSystem(format!(
                    "non-positive diagonal at row {k}"
                )));
            }
            pivots[k] = d;
        }
        Ok(Self { a, pivots })
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        let s = self.a.n_inner;
        for k in 0..n {
            let mut v = r[k];
            if k >= 1 {
                v -= self.a.inner[k - 1] * z[k - 1];
            }
            if k >= s {
                v -= self.a.outer[k - s] * z[k - s];
            }
            z[k] = v / self.pivots[k];
        }
        for k in (0..n).rev() {
            let mut v = 0.0;
            if k + 1 < n {
                v += self.a.inner[k] * z[k + 1];
            }
            if k + s < n {
                v += self.a.outer[k] * z[k + s];
            }
            z[k] -= v / self.pivots[k];
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Preconditioned conjugate gradients for an SPD [`Stencil5`], starting from
/// `x`. Stops at `‖b − Ax‖ ≤ tol ‖b‖`.
pub fn pcg(a: &Stencil5, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<CgStats> {
    let n = a.len();
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let pre = Ic0::new(a)?;
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for k in 0..n {
        r[k] = b[k] - r[k];
    }
    let mut z = vec![0.0; n];
    pre.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    let mut res = norm2(&r) / b_norm;
    for it in 0..max_iter {
        if res <= tol {
            return Ok(CgStats {
                iterations: it,
                relative_residual: res,
            });
        }
        a.matvec(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(Error::SingularSystem(
                "conjugate gradients met a non-positive curvature direction".into(),
            ));
        }
        let alpha = rz / pq;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * q[k];
        }
        pre.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
        res = norm2(&r) / b_norm;
    }
    // recompute the true residual before giving up
    a.matvec(x, &mut q);
    let true_res = norm2(&b.iter().zip(&q).map(|(b, q)| b - q).collect::<Vec<_>>()) / b_norm;
    if true_res <= tol {
        return Ok(CgStats {
            iterations: max_iter,
            relative_residual: true_res,
        });
    }
    Err(Error::NoConvergence {
        solver: "conjugate gradients",
        iterations: max_iter,
        residual: true_res,
    })
}

/// LU factorization with partial pivoting of a banded matrix
/// (column-major band storage as in LAPACK `gbtrf`).
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandLu {
    /// Factors the [`Stencil5`] `a` shifted by `-sigma * diag(b_diag)`.
    pub fn factor_shifted(a: &Stencil5, b_diag: &[f64], sigma: f64) -> Result<Self> {
        let n = a.len();
        let kl = a.n_inner.min(n.saturating_sub(1));
        let ku = kl;
        let ldab = 2 * kl + ku + 1;
        let kv = kl + ku;
        let mut ab = vec![0.0; ldab * n];
        let mut set = |i: usize, j: usize, v: f64| ab[j * ldab + kv + i - j] = v;
        let s = a.n_inner;
        for k in 0..n {
            set(k, k, a.diag[k] - sigma * b_diag[k]);
            if k + 1 < n && a.inner[k] != 0.0 {
                set(k, k + 1, a.inner[k]);
                set(k + 1, k, a.inner[k]);
            }
            if k + s < n && a.outer[k] != 0.0 {
                set(k, k + s, a.outer[k]);
                set(k + s, k, a.outer[k]);
            }
        }
        let mut lu = Self {
            n,
            kl,
            ku,
            ldab,
            ab,
            ipiv: vec![0; n],
        };
        lu.factor()?;
        Ok(lu)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        j * self.ldab + self.kl + self.ku + i - j
    }

    fn factor(&mut self) -> Result<()> {
        let n = self.n;
        let kl = self.kl;
        let kv = self.kl + self.ku;
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let col = j * self.ldab + kv;
            let mut jp = 0;
            let mut best = self.ab[col].abs();
            for p in 1..=km {
                let v = self.ab[col + p].abs();
                if v > best {
                    best = v;
                    jp = p;
                }
            }
            self.ipiv[j] = j + jp;
            if best == 0.0 {
                return Err(Error::SingularSystem(format!(
                    "zero pivot in banded LU at column {j}"
                )));
            }
            ju = ju.max((j + self.ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let a = self.at(j, c);
                    let b = self.at(j + jp, c);
                    self.ab.swap(a, b);
                }
            }
            let piv = self.ab[col];
            for p in 1..=km {
                self.ab[col + p] /= piv;
            }
            for c in j + 1..=ju {
                let ajc = self.ab[self.at(j, c)];
                if ajc != 0.0 {
                    let base_c = self.at(j, c);
                    for p in 1..=km {
                        let l = self.ab[col + p];
                        self.ab[base_c + p] -= l * ajc;
                    }
                }
            }
        }
        Ok(())
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let kv = self.kl + self.ku;
        for j in 0..n.saturating_sub(1) {
            let lm = self.kl.min(n - 1 - j);
            let l = self.ipiv[j];
            if l != j {
                b.swap(l, j);
            }
            let bj = b[j];
            if bj != 0.0 {
                let col = j * self.ldab + kv;
                for p in 1..=lm {
                    b[j + p] -= self.ab[col + p] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            let col = j * self.ldab + kv;
            b[j] /= self.ab[col];
            let bj = b[j];
            if bj != 0.0 {
                let top = j.saturating_sub(kv);
                for i in top..j {
                    b[i] -= self.ab[col + i - j] * bj;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn dense(a: &Stencil5, b_diag: &[f64], sigma: f64) -> DMatrix<f64> {
        let n = a.len();
        let mut m = DMatrix::zeros(n, n);
        for k in 0..n {
            m[(k, k)] = a.diag[k] - sigma * b_diag[k];
            if k + 1 < n {
                m[(k, k + 1)] = a.inner[k];
                m[(k + 1, k)] = a.inner[k];
            }
            if k + a.n_inner < n {
                m[(k, k + a.n_inner)] = a.outer[k];
                m[(k + a.n_inner, k)] = a.outer[k];
            }
        }
        m
    }

    fn laplacian(no: usize, ni: usize) -> Stencil5 {
        let mut a = Stencil5::zeros(no, ni);
        for o in 0..no {
            for i in 0..ni {
                let k = o * ni + i;
                a.diag[k] = 4.0;
                if i + 1 < ni {
                    a.inner[k] = -1.0;
                }
                if o + 1 < no {
                    a.outer[k] = -1.0;
                }
            }
        }
        a
    }

    #[test]
    fn pcg_solves_laplacian() {
        let a = laplacian(30, 20);
        let xs: Vec<f64> = (0..600).map(|k| ((k * 37) % 11) as f64 - 5.0).collect();
        let mut b = vec![0.0; 600];
        a.matvec(&xs, &mut b);
        let mut x = vec![0.0; 600];
        let st = pcg(&a, &b, &mut x, 1e-12, 1000).unwrap();
        assert!(st.relative_residual <= 1e-12);
        let err = xs.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9);
    }

    #[test]
    fn pcg_zero_rhs() {
        let a = laplacian(4, 4);
        let mut x = vec![1.0; 16];
        pcg(&a, &[0.0; 16], &mut x, 1e-10, 10).unwrap();
        assert!(x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn pcg_reports_non_convergence() {
        let a = laplacian(40, 40);
        let b = vec![1.0; 1600];
        let mut x = vec![0.0; 1600];
        match pcg(&a, &b, &mut x, 1e-14, 2) {
            Err(Error::NoConvergence { iterations, residual, .. }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 1e-14);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn band_lu_matches_dense_solve(
            vals in prop::collection::vec(-1.0f64..1.0, 3 * 35),
            rhs in prop::collection::vec(-1.0f64..1.0, 35),
            sigma in -3.0f64..3.0,
        ) {
            let (no, ni) = (7, 5);
            let n = no * ni;
            let mut a = Stencil5::zeros(no, ni);
            for k in 0..n {
                a.diag[k] = vals[k] * 2.0;
                if (k + 1) % ni != 0 { a.inner[k] = vals[n + k]; }
                if k + ni < n { a.outer[k] = vals[2 * n + k]; }
            }
            let bd = vec![1.0; n];
            let m = dense(&a, &bd, sigma);
            prop_assume!(m.clone().lu().determinant().abs() > 1e-6);
            let expected = m.clone().lu().solve(&DVector::from_vec(rhs.clone())).unwrap();
            let lu = BandLu::factor_shifted(&a, &bd, sigma).unwrap();
            let mut x = rhs.clone();
            lu.solve(&mut x);
            let resid = &m * DVector::from_vec(x.clone()) - DVector::from_vec(rhs);
            prop_assert!(resid.norm() <= 1e-8 * (1.0 + expected.norm()));
        }
    }
}
