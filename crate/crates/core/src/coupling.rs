//! Vacuum electro-optic coupling rate.
//!
//! Sign convention: a positive permittivity change lowers the optical
//! frequency, `δω/ω = −δU/U` with `δU = ½ε₀∫E·δε·E dV` and `U` the total
//! mode energy. `g0` is reported as a magnitude; the signed shift per volt
//! is kept alongside it.

use std::f64::consts::PI;

use log::warn;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::constants::{C_LIGHT, EPS0, HBAR};
use crate::electrostatics::{v_zpf, PotentialField};
use crate::error::{ensure_positive, Error, Result};
use crate::grid::StructuredGrid;
use crate::material::Material;
use crate::optics::{fundamental_mode_with, ModeSolution, OpticalSettings, Polarization};
use crate::tensor::{delta_epsilon_from_delta_eta, rotate_matrix_about_axis, rotate_tensor_about_axis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMethod {
    OverlapIntegral,
    BetheSchwinger,
    ClosedForm,
    GenericForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingInputs {
    pub mode: String,
    pub field: String,
    pub capacitance_f: f64,
    pub omega_b_rad_per_s: f64,
    pub f_phi: f64,
    pub n_phi: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingResult {
    pub method: CouplingMethod,
    /// |g0|, rad/s.
    pub g0_rad_per_s: f64,
    pub g0_over_2pi_hz: f64,
    /// Signed optical shift per applied volt, rad/s/V.
    pub delta_omega_per_volt: f64,
    pub v_zpf_v: f64,
    pub inputs: CouplingInputs,
    /// Tensor terms not represented by the semivectorial mode.
    pub dropped_terms: Vec<String>,
}

fn same_grid(a: &StructuredGrid, b: &StructuredGrid) -> bool {
    a.rho_edges == b.rho_edges && a.z_edges == b.z_edges
}

/// `ρ · A` weights of every cell (the `2π` of the volume element is applied
/// by the callers).
fn ring_weights(grid: &StructuredGrid) -> impl Iterator<Item = (usize, f64)> + '_ {
    (0..grid.n_rho()).flat_map(move |i| {
        (0..grid.n_z()).map(move |j| (grid.idx(i, j), grid.rho[i] * grid.cell_area(i, j)))
    })
}

/// Azimuthal average of `ê·ε (r·â) ε·ê` for a unit microwave field along
/// the local radial (`[0]`) and axial (`[1]`) directions, m/V. The crystal
/// tensors are rotated into the local cylindrical frame at each of the
/// `n_phi` trapezoid nodes.
pub fn azimuthal_kernel(material: &Material, pol: Polarization, n_phi: usize) -> [f64; 2] {
    let e = Vector3::from(pol.unit_vector());
    let mut k = [0.0; 2];
    let n = n_phi.max(1);
    for s in 0..n {
        let phi = 2.0 * PI * s as f64 / n as f64;
        let r_loc = rotate_tensor_about_axis(material.pockels(), -phi);
        let eps_loc = rotate_matrix_about_axis(&material.eps_optical, -phi);
        for (slot, dir) in [Vector3::x(), Vector3::z()].iter().enumerate() {
            let deta = r_loc.contract_field(dir);
            let deps = delta_epsilon_from_delta_eta(&eps_loc, &deta);
            k[slot] += e.dot(&(deps * e));
        }
    }
    k.iter_mut().for_each(|v| *v /= n as f64);
    k
}

/// `∮∫ ε_ik ε_jl r_klm E_b^m E_a^i E_a^j dV` over the full revolution for
/// the Pockels `material` placed in every core cell.
pub fn overlap_integral(
    mode: &ModeSolution,
    potential: &PotentialField,
    material: &Material,
    n_phi: usize,
) -> Result<f64> {
    if !same_grid(&mode.grid, &potential.grid) {
        return Err(Error::GridMismatch(
            "optical mode and potential were solved on different grids".into(),
        ));
    }
    let grid = &mode.grid;
    let k = azimuthal_kernel(material, mode.polarization, n_phi);
    let mut sum = 0.0;
    for (c, w) in ring_weights(grid) {
        if grid.cell_role[c] != crate::geometry::Role::Core {
            continue;
        }
        let a = mode.field[c];
        if a == 0.0 {
            continue;
        }
        sum += w * a * a * (k[0] * potential.e_rho[c] + k[1] * potential.e_z[c]);
    }
    Ok(2.0 * PI * sum)
}

fn dropped_terms(pol: Polarization) -> Vec<String> {
    let minor = match pol {
        Polarization::Te => "radial and azimuthal",
        Polarization::Tm => "azimuthal and axial",
    };
    vec![format!(
        "Pockels terms involving the {minor} optical field components (semivectorial mode)"
    )]
}

fn mode_id(mode: &ModeSolution) -> String {
    format!("{} m={} f={:.6e} Hz", mode.polarization, mode.m, mode.omega / (2.0 * PI))
}

/// `g0 = |ω_a ε₀ f_φ I / (2 U_a V)| · √(ħω_b/2C)` with `I` from
/// [`overlap_integral`].
pub fn g0_overlap(
    mode: &ModeSolution,
    potential: &PotentialField,
    material: &Material,
    capacitance: f64,
    omega_b: f64,
    f_phi: f64,
    n_phi: usize,
) -> Result<CouplingResult> {
    if !(f_phi > 0.0 && f_phi <= 1.0) {
        return Err(Error::InvalidGeometry(format!("f_phi must lie in (0, 1], got {f_phi}")));
    }
    if mode.energy <= 0.0 {
        return Err(Error::ZeroEnergyMode);
    }
    let vzpf = v_zpf(capacitance, omega_b)?;
    let integral = overlap_integral(mode, potential, material, n_phi)?;
    let volts = potential.applied_voltage;
    let per_volt = if volts == 0.0 {
        0.0
    } else {
        -mode.omega * EPS0 * f_phi * integral / (2.0 * mode.energy * volts)
    };
    let g0 = per_volt.abs() * vzpf;
    Ok(CouplingResult {
        method: CouplingMethod::OverlapIntegral,
        g0_rad_per_s: g0,
        g0_over_2pi_hz: g0 / (2.0 * PI),
        delta_omega_per_volt: per_volt,
        v_zpf_v: vzpf,
        inputs: CouplingInputs {
            mode: mode_id(mode),
            field: potential.grid.fingerprint().to_string(),
            capacitance_f: capacitance,
            omega_b_rad_per_s: omega_b,
            f_phi,
            n_phi,
        },
        dropped_terms: dropped_terms(mode.polarization),
    })
}

/// First-order shift `δω = −ω ε₀∫E·δε·E dV / (2U)` for a per-cell
/// permittivity change given in the local cylindrical frame.
pub fn bethe_schwinger_shift(mode: &ModeSolution, delta_eps: &[Matrix3<f64>]) -> Result<f64> {
    let grid = &mode.grid;
    if delta_eps.len() != grid.n_cells() {
        return Err(Error::GridMismatch(format!(
            "{} tensors for {} cells",
            delta_eps.len(),
            grid.n_cells()
        )));
    }
    if mode.energy <= 0.0 {
        return Err(Error::ZeroEnergyMode);
    }
    let e = Vector3::from(mode.polarization.unit_vector());
    let mut sum = 0.0;
    let mut worst = 0.0f64;
    for (c, w) in ring_weights(grid) {
        let a = mode.field[c];
        if a == 0.0 {
            continue;
        }
        let d = &delta_eps[c];
        if mode.eps[c] > 0.0 {
            worst = worst.max(d.norm() / mode.eps[c]);
        }
        sum += w * a * a * e.dot(&(d * e));
    }
    if worst > 1e-2 {
        warn!("permittivity perturbation {worst:.2e} exceeds the first-order range");
    }
    let delta_u = 0.5 * EPS0 * 2.0 * PI * sum;
    Ok(-mode.omega * delta_u / mode.energy)
}

/// `δU = (1/2ε₀)∫δη_kl D^k D^l dV` for a per-cell impermeability change in
/// the local cylindrical frame.
pub fn delta_energy(mode: &ModeSolution, delta_eta: &[Matrix3<f64>]) -> Result<f64> {
    let grid = &mode.grid;
    if delta_eta.len() != grid.n_cells() {
        return Err(Error::GridMismatch(format!(
            "{} tensors for {} cells",
            delta_eta.len(),
            grid.n_cells()
        )));
    }
    let mut sum = 0.0;
    for (c, w) in ring_weights(grid) {
        if mode.field[c] == 0.0 {
            continue;
        }
        let d = Vector3::from(mode.displacement(c));
        sum += w * d.dot(&(delta_eta[c] * d));
    }
    Ok(2.0 * PI * sum / (2.0 * EPS0))
}

/// Same quantity through `δε = ε δη ε`: `δU = ½ε₀∫δε_ij E^i E^j dV`.
pub fn delta_energy_eps_form(mode: &ModeSolution, delta_eta: &[Matrix3<f64>]) -> Result<f64> {
    let grid = &mode.grid;
    if delta_eta.len() != grid.n_cells() {
        return Err(Error::GridMismatch(format!(
            "{} tensors for {} cells",
            delta_eta.len(),
            grid.n_cells()
        )));
    }
    let mut sum = 0.0;
    for (c, w) in ring_weights(grid) {
        if mode.field[c] == 0.0 {
            continue;
        }
        let Some(m) = grid.material_of(c) else { continue };
        let (rr, zz) = crate::electrostatics::cylindrical_diag(&m.eps_optical);
        let eps = Matrix3::from_diagonal(&Vector3::new(rr, rr, zz));
        let deps = delta_epsilon_from_delta_eta(&eps, &delta_eta[c]);
        let e = Vector3::from(mode.field_vector(c));
        sum += w * e.dot(&(deps * e));
    }
    Ok(0.5 * EPS0 * 2.0 * PI * sum)
}

/// Pockels impermeability change `r·E_b` of every core cell in the local
/// cylindrical frame at azimuth `phi`.
pub fn pockels_delta_eta(potential: &PotentialField, material: &Material, phi: f64) -> Vec<Matrix3<f64>> {
    let grid = &potential.grid;
    let r_loc = rotate_tensor_about_axis(material.pockels(), -phi);
    (0..grid.n_cells())
        .map(|c| {
            if grid.cell_role[c] == crate::geometry::Role::Core {
                r_loc.contract_field(&Vector3::from(potential.field_at(c)))
            } else {
                Matrix3::zeros()
            }
        })
        .collect()
}

/// Re-solves the fundamental mode with `ε → ε + ê·δε·ê` and returns the
/// frequency difference at identical discretization.
pub fn direct_eigen_shift_oracle(
    mode: &ModeSolution,
    delta_eps: &[Matrix3<f64>],
    settings: &OpticalSettings,
) -> Result<f64> {
    let grid = &mode.grid;
    if delta_eps.len() != grid.n_cells() {
        return Err(Error::GridMismatch(format!(
            "{} tensors for {} cells",
            delta_eps.len(),
            grid.n_cells()
        )));
    }
    let e = Vector3::from(mode.polarization.unit_vector());
    let base = fundamental_mode_with(grid, &mode.eps, mode.m, mode.polarization, settings)?;
    let perturbed: Vec<f64> = mode
        .eps
        .iter()
        .zip(delta_eps)
        .map(|(eps, d)| if *eps > 0.0 { eps + e.dot(&(d * e)) } else { *eps })
        .collect();
    let shifted = fundamental_mode_with(grid, &perturbed, mode.m, mode.polarization, settings)?;
    Ok(shifted.omega - base.omega)
}

/// Closed-form estimate `ω_a n² r √(ħω_b / (ε₀ ε V_b))`.
pub fn g0_closed_form(omega_a: f64, n: f64, r: f64, omega_b: f64, eps_mw: f64, v_b: f64) -> Result<f64> {
    ensure_positive("omega_a", omega_a)?;
    ensure_positive("refractive index", n)?;
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::NonPositive { name: "electro-optic coefficient", value: r });
    }
    ensure_positive("omega_b", omega_b)?;
    ensure_positive("microwave permittivity", eps_mw)?;
    ensure_positive("mode volume", v_b)?;
    Ok(omega_a * n * n * r * (HBAR * omega_b / (EPS0 * eps_mw * v_b)).sqrt())
}

/// Microwave mode volume for which the closed form yields `g0`.
pub fn implied_mode_volume(g0: f64, omega_a: f64, n: f64, r: f64, omega_b: f64, eps_mw: f64) -> Result<f64> {
    ensure_positive("g0", g0)?;
    let k = omega_a * n * n * r / g0;
    Ok(HBAR * omega_b * k * k / (EPS0 * eps_mw))
}

/// Mode volume that makes the closed form agree with the overlap integral
/// for a uniform field `V/D` filling the optical mode: `8 C D² / (ε₀ ε)`.
pub fn equivalent_mode_volume(capacitance: f64, thickness: f64, eps_mw: f64) -> Result<f64> {
    ensure_positive("capacitance", capacitance)?;
    ensure_positive("thickness", thickness)?;
    ensure_positive("microwave permittivity", eps_mw)?;
    Ok(8.0 * capacitance * thickness * thickness / (EPS0 * eps_mw))
}

/// Generic-geometry estimate `ω_a n³ r l / (c τ D) · √(ħω_b / 2C)`.
#[allow(clippy::too_many_arguments)]
pub fn g0_generic_form(
    omega_a: f64,
    n: f64,
    r: f64,
    l: f64,
    d: f64,
    tau: f64,
    capacitance: f64,
    omega_b: f64,
) -> Result<f64> {
    ensure_positive("omega_a", omega_a)?;
    ensure_positive("refractive index", n)?;
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::NonPositive { name: "electro-optic coefficient", value: r });
    }
    ensure_positive("optical path length", l)?;
    ensure_positive("thickness", d)?;
    ensure_positive("round-trip time", tau)?;
    let vzpf = v_zpf(capacitance, omega_b)?;
    Ok(omega_a * n.powi(3) * r * l / (C_LIGHT * tau * d) * vzpf)
}
