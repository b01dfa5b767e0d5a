//! Shift-invert subspace iteration for the symmetric pencil `A x = λ B x`
//! with `B` diagonal and positive semi-definite.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, BandLu, Stencil5};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigenSettings {
    /// Relative residual `‖Ax − λBx‖ / ‖λBx‖` required of every pair.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Guard vectors carried beyond the requested count.
    pub guard_vectors: usize,
}

impl Default for EigenSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 400,
            guard_vectors: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    /// B-normalized eigenvector.
    pub vector: Vec<f64>,
    pub residual: f64,
}

/// Relative residual of an eigenpair.
pub fn residual(a: &Stencil5, b: &[f64], value: f64, x: &[f64]) -> f64 {
    let mut ax = vec![0.0; x.len()];
    a.matvec(x, &mut ax);
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..x.len() {
        let bx = value * b[k] * x[k];
        num += (ax[k] - bx).powi(2);
        den += bx * bx;
    }
    (num / den).sqrt()
}

fn b_dot(b: &[f64], x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).zip(b).map(|((x, y), b)| x * y * b).sum()
}

/// Modified Gram–Schmidt in the B inner product, applied twice. Drops
/// numerically dependent vectors.
fn b_orthonormalize(b: &[f64], vs: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vs.len());
    for mut v in vs {
        let n0 = b_dot(b, &v, &v).sqrt();
        for _ in 0..2 {
            for q in &out {
                let c = b_dot(b, q, &v);
                v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let n1 = b_dot(b, &v, &v).sqrt();
        if n1 > 1e-10 * n0 && n1 > 0.0 {
            v.iter_mut().for_each(|x| *x /= n1);
            out.push(v);
        }
    }
    out
}

/// Deterministic, well-spread start vectors.
fn start_vectors(n: usize, count: usize, b: &[f64]) -> Vec<Vec<f64>> {
    (0..count)
        .map(|k| {
            (0..n)
                .map(|i| {
                    if b[i] == 0.0 {
                        0.0
                    } else {
                        let t = (i as f64 + 1.0) * (0.618_033_988_749_895 + 0.1 * k as f64);
                        (t.sin() * 43_758.545_312_3).fract() + 0.5 * (k as f64 * 0.37 * t).cos()
                    }
                })
                .collect()
        })
        .collect()
}

/// The `nev` eigenpairs with eigenvalues closest to `sigma`, ordered by
/// `|λ − σ|`.
pub fn eigs_near(
    a: &Stencil5,
    b: &[f64],
    sigma: f64,
    nev: usize,
    settings: &EigenSettings,
) -> Result<Vec<EigenPair>> {
    let n = a.len();
    if nev == 0 || n == 0 {
        return Ok(Vec::new());
    }
    let free = b.iter().filter(|v| **v > 0.0).count();
    let p = (nev + settings.guard_vectors).min(free);
    if p < nev {
        return Err(Error::SingularSystem(format!(
            "only {free} degrees of freedom for {nev} eigenpairs"
        )));
    }
    let lu = match BandLu::factor_shifted(a, b, sigma) {
        Ok(lu) => lu,
        // the shift hit an eigenvalue exactly
        Err(_) => BandLu::factor_shifted(a, b, sigma * (1.0 + 1e-9) + 1e-300)?,
    };

    let mut x = b_orthonormalize(b, start_vectors(n, p, b));
    let mut worst = f64::INFINITY;
    for _ in 0..settings.max_iterations {
        let y: Vec<Vec<f64>> = x
            .iter()
            .map(|v| {
                let mut w: Vec<f64> = v.iter().zip(b).map(|(v, b)| v * b).collect();
                lu.solve(&mut w);
                w
            })
            .collect();
        let y = b_orthonormalize(b, y);
        let k = y.len();
        let ay: Vec<Vec<f64>> = y
            .iter()
            .map(|v| {
                let mut w = vec![0.0; n];
                a.matvec(v, &mut w);
                w
            })
            .collect();
        let mut h = DMatrix::<f64>::zeros(k, k);
        for r in 0..k {
            for c in r..k {
                let v = dot(&y[r], &ay[c]);
                h[(r, c)] = v;
                h[(c, r)] = v;
            }
        }
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&i, &j| {
            (eig.eigenvalues[i] - sigma)
                .abs()
                .total_cmp(&(eig.eigenvalues[j] - sigma).abs())
        });
        let mut pairs: Vec<EigenPair> = order
            .iter()
            .map(|&col| {
                let mut v = vec![0.0; n];
                for (r, yr) in y.iter().enumerate() {
                    let c = eig.eigenvectors[(r, col)];
                    v.iter_mut().zip(yr).for_each(|(a, b)| *a += c * b);
                }
                // fixed sign: largest component positive
                let (imax, _) = v
                    .iter()
                    .enumerate()
                    .fold((0, 0.0), |acc, (i, x)| if x.abs() > acc.1 { (i, x.abs()) } else { acc });
                if v[imax] < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
                EigenPair {
                    value: eig.eigenvalues[col],
                    vector: v,
                    residual: f64::INFINITY,
                }
            })
            .collect();
        worst = 0.0;
        for pair in pairs.iter_mut().take(nev) {
            pair.residual = residual(a, b, pair.value, &pair.vector);
            worst = worst.max(pair.residual);
        }
        if worst <= settings.tolerance && pairs.len() >= nev {
            pairs.truncate(nev);
            return Ok(pairs);
        }
        x = pairs.into_iter().map(|p| p.vector).collect();
    }
    Err(Error::NoConvergence {
        solver: "shift-invert subspace iteration",
        iterations: settings.max_iterations,
        residual: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// 2-D Dirichlet Laplacian on a unit square with `B = I`.
    fn laplacian(no: usize, ni: usize) -> Stencil5 {
        let mut a = Stencil5::zeros(no, ni);
        let (ho, hi) = (1.0 / (no + 1) as f64, 1.0 / (ni + 1) as f64);
        for o in 0..no {
            for i in 0..ni {
                let k = o * ni + i;
                a.diag[k] = 2.0 / (ho * ho) + 2.0 / (hi * hi);
                if i + 1 < ni {
                    a.inner[k] = -1.0 / (hi * hi);
                }
                if o + 1 < no {
                    a.outer[k] = -1.0 / (ho * ho);
                }
            }
        }
        a
    }

    fn exact(p: usize, q: usize, no: usize, ni: usize) -> f64 {
        let (ho, hi) = (1.0 / (no + 1) as f64, 1.0 / (ni + 1) as f64);
        4.0 / (ho * ho) * (p as f64 * PI * ho / 2.0).sin().powi(2)
            + 4.0 / (hi * hi) * (q as f64 * PI * hi / 2.0).sin().powi(2)
    }

    #[test]
    fn finds_interior_eigenvalues_of_laplacian() {
        let (no, ni) = (23, 17);
        let a = laplacian(no, ni);
        let b = vec![1.0; no * ni];
        let target = exact(2, 3, no, ni);
        let pairs = eigs_near(&a, &b, target * 1.001, 2, &EigenSettings::default()).unwrap();
        assert!((pairs[0].value / target - 1.0).abs() < 1e-10);
        for p in &pairs {
            assert!(p.residual <= 1e-10);
        }
        let overlap = b_dot(&b, &pairs[0].vector, &pairs[1].vector);
        assert!(overlap.abs() < 1e-8);
    }

    #[test]
    fn lowest_eigenvalue_from_shift_below_spectrum() {
        let (no, ni) = (15, 15);
        let a = laplacian(no, ni);
        let b = vec![2.0; no * ni];
        let pairs = eigs_near(&a, &b, 0.0, 1, &EigenSettings::default()).unwrap();
        assert!((pairs[0].value / (exact(1, 1, no, ni) / 2.0) - 1.0).abs() < 1e-10);
        assert!((b_dot(&b, &pairs[0].vector, &pairs[0].vector) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reports_non_convergence() {
        let a = laplacian(20, 20);
        let b = vec![1.0; 400];
        let s = EigenSettings {
            tolerance: 1e-14,
            max_iterations: 1,
            guard_vectors: 0,
        };
        assert!(matches!(eigs_near(&a, &b, 5000.0, 3, &s), Err(Error::NoConvergence { .. })));
    }
}
