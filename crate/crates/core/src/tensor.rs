//! Rank-3 Pockels tensors and the impermeability/permittivity algebra.
//!
//! Index convention: `r[i][j][k]` with `(i, j)` the impermeability indices
//! and `k` the applied-field index, all in the crystal frame (x, y, z).
//! The crystal z axis is the ring symmetry axis.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

/// Contracted (Voigt) Pockels tensor, 6×3, in pm/V.
pub type ContractedTensor = [[f64; 3]; 6];

/// Voigt row → symmetric index pair (0-based).
pub const VOIGT_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];

const PM_PER_V: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Tensor3(pub [[[f64; 3]; 3]; 3]);

impl Tensor3 {
    pub fn zeros() -> Self {
        Self::default()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.0[i][j][k]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .flatten()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = *self;
        out.0
            .iter_mut()
            .flatten()
            .flatten()
            .for_each(|v| *v *= alpha);
        out
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().flatten().flatten().all(|v| *v == 0.0)
    }

    /// `δη_ij = r_ijk E^k`.
    pub fn contract_field(&self, field: &Vector3<f64>) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| (0..3).map(|k| self.0[i][j][k] * field[k]).sum())
    }
}

/// Expands a contracted 6×3 tensor in pm/V into the full `r_ijk` in m/V.
pub fn expand_contracted_tensor(contracted: &ContractedTensor) -> Tensor3 {
    let mut full = Tensor3::zeros();
    for (row, &(i, j)) in contracted.iter().zip(VOIGT_PAIRS.iter()) {
        for k in 0..3 {
            let v = row[k] * PM_PER_V;
            full.0[i][j][k] = v;
            full.0[j][i][k] = v;
        }
    }
    full
}

/// Rotation about the crystal z axis by `phi` (active, right-handed).
pub fn rotation_z(phi: f64) -> Matrix3<f64> {
    let (s, c) = phi.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// `r'_ijk = R_ia R_jb R_kc r_abc` with `R` the rotation about z by `phi`.
pub fn rotate_tensor_about_axis(r: &Tensor3, phi: f64) -> Tensor3 {
    let rot = rotation_z(phi);
    // contract one index at a time: O(3^4) instead of O(3^6)
    let mut t1 = [[[0.0; 3]; 3]; 3];
    for i in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                t1[i][b][c] = (0..3).map(|a| rot[(i, a)] * r.0[a][b][c]).sum();
            }
        }
    }
    let mut t2 = [[[0.0; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for c in 0..3 {
                t2[i][j][c] = (0..3).map(|b| rot[(j, b)] * t1[i][b][c]).sum();
            }
        }
    }
    let mut out = Tensor3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                out.0[i][j][k] = (0..3).map(|c| rot[(k, c)] * t2[i][j][c]).sum();
            }
        }
    }
    out
}

/// Rank-2 counterpart of [`rotate_tensor_about_axis`].
pub fn rotate_matrix_about_axis(m: &Matrix3<f64>, phi: f64) -> Matrix3<f64> {
    let rot = rotation_z(phi);
    rot * m * rot.transpose()
}

/// Pockels change of the impermeability, `δη_ij = r_ijk E^k`.
///
/// Only the linear term is kept; the quadratic (Kerr-like) term is ignored.
pub fn pockels_delta_impermeability(r: &Tensor3, field: &Vector3<f64>) -> Matrix3<f64> {
    r.contract_field(field)
}

/// `δε_ij = ε_ik ε_jl δη_kl`.
///
/// This is the magnitude of the first-order change of `ε = η⁻¹`; the exact
/// derivative carries a minus sign, so `(η - δη)⁻¹ ≈ ε + δε`.
pub fn delta_epsilon_from_delta_eta(eps: &Matrix3<f64>, delta_eta: &Matrix3<f64>) -> Matrix3<f64> {
    eps * delta_eta * eps.transpose()
}
