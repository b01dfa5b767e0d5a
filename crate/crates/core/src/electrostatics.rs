//! Quasi-static potential of the microwave electrodes.
//!
//! Cell-centred finite volumes on the axisymmetric grid: the flux through a
//! face is `ρ_f · ε_face · ΔV / Δ`, with the face permittivity taken as the
//! series (harmonic) combination of the two half cells. Electrode cells are
//! perfect conductors, so their potential is imposed on their faces.

use std::io::Write;
use std::sync::Arc;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::constants::{EPS0, HBAR};
use crate::error::{ensure_positive, Error, Result};
use crate::grid::StructuredGrid;
use crate::linalg::{pcg, Stencil5};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 20_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PotentialField {
    pub grid: Arc<StructuredGrid>,
    /// Cell-centre potentials, V.
    pub values: Vec<f64>,
    /// Radial field at cell centres, V/m.
    pub e_rho: Vec<f64>,
    /// Axial field at cell centres, V/m.
    pub e_z: Vec<f64>,
    pub applied_voltage: f64,
    /// Field energy per radian of azimuth, J/rad.
    pub energy_per_radian: f64,
    /// `½ Σ Q_e V_e` from the electrode fluxes, J/rad.
    pub charge_energy_per_radian: f64,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Summary suitable for reports.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PotentialSummary {
    pub applied_voltage_v: f64,
    pub energy_per_radian_j: f64,
    pub charge_energy_per_radian_j: f64,
    pub iterations: usize,
    pub relative_residual: f64,
    pub max_field_v_per_m: f64,
}

/// Cylindrical (ρρ, zz) permittivity averaged over azimuth for a tensor in
/// the crystal frame.
pub(crate) fn cylindrical_diag(eps: &Matrix3<f64>) -> (f64, f64) {
    (0.5 * (eps[(0, 0)] + eps[(1, 1)]), eps[(2, 2)])
}

/// Half-cell "resistances" and face weights shared by the assembly, energy
/// and field routines.
struct Faces<'a> {
    grid: &'a StructuredGrid,
    eps_rho: Vec<f64>,
    eps_z: Vec<f64>,
}

impl<'a> Faces<'a> {
    fn new(grid: &'a StructuredGrid) -> Self {
        let n = grid.n_cells();
        let mut eps_rho = vec![0.0; n];
        let mut eps_z = vec![0.0; n];
        for c in 0..n {
            if let Some(m) = grid.material_of(c) {
                let (er, ez) = cylindrical_diag(&m.eps_microwave);
                eps_rho[c] = er;
                eps_z[c] = ez;
            }
        }
        Self { grid, eps_rho, eps_z }
    }

    fn fixed(&self, c: usize) -> Option<f64> {
        self.grid.cell_potential[c]
    }

    /// Resistance from the centre of cell `c` to its radial face, per unit
    /// face weight. Zero inside conductors.
    fn r_rho(&self, c: usize, i: usize) -> f64 {
        if self.fixed(c).is_some() {
            0.0
        } else {
            0.5 * self.grid.h_rho[i] / self.eps_rho[c]
        }
    }

    fn r_z(&self, c: usize, j: usize) -> f64 {
        if self.fixed(c).is_some() {
            0.0
        } else {
            0.5 * self.grid.h_z[j] / self.eps_z[c]
        }
    }

    /// Conductance (without ε₀) of the face between `(i, j)` and `(i+1, j)`.
    fn t_rho(&self, i: usize, j: usize) -> f64 {
        let g = self.grid;
        let (a, b) = (g.idx(i, j), g.idx(i + 1, j));
        let r = self.r_rho(a, i) + self.r_rho(b, i + 1);
        if r == 0.0 {
            return 0.0;
        }
        g.rho_edges[i + 1] * g.h_z[j] / r
    }

    fn t_z(&self, i: usize, j: usize) -> f64 {
        let g = self.grid;
        let (a, b) = (g.idx(i, j), g.idx(i, j + 1));
        let r = self.r_z(a, j) + self.r_z(b, j + 1);
        if r == 0.0 {
            return 0.0;
        }
        g.rho[i] * g.h_rho[i] / r
    }
}

/// Solves `∇·(ε ∇V) = 0` with the electrode potentials stored in the grid
/// and zero normal flux on the outer boundary.
pub fn solve_potential(grid: &Arc<StructuredGrid>, settings: &SolverSettings) -> Result<PotentialField> {
    let n = grid.n_cells();
    let (nr, nz) = (grid.n_rho(), grid.n_z());
    if grid.cell_potential.iter().all(Option::is_none) {
        return Err(Error::SingularSystem("no electrode cells on the grid".into()));
    }
    let faces = Faces::new(grid);
    let mut a = Stencil5::zeros(nr, nz);
    let mut b = vec![0.0; n];
    let mut x = vec![0.0; n];
    // electrode rows become decoupled identities with zero right-hand side,
    // so the residual measures the free cells only
    for c in 0..n {
        if grid.cell_potential[c].is_some() {
            a.diag[c] = 1.0;
        }
    }
    let mut couple = |p: usize, q: usize, t: f64, inner: bool| {
        if t == 0.0 {
            return;
        }
        match (grid.cell_potential[p], grid.cell_potential[q]) {
            (None, None) => {
                a.diag[p] += t;
                a.diag[q] += t;
                if inner {
                    a.inner[p] = -t;
                } else {
                    a.outer[p] = -t;
                }
            }
            (None, Some(vq)) => {
                a.diag[p] += t;
                b[p] += t * vq;
            }
            (Some(vp), None) => {
                a.diag[q] += t;
                b[q] += t * vp;
            }
            (Some(_), Some(_)) => {}
        }
    };
    for i in 0..nr {
        for j in 0..nz {
            let p = grid.idx(i, j);
            if j + 1 < nz {
                couple(p, grid.idx(i, j + 1), faces.t_z(i, j), true);
            }
            if i + 1 < nr {
                couple(p, grid.idx(i + 1, j), faces.t_rho(i, j), false);
            }
        }
    }
    if let Some(c) = (0..n).find(|&c| a.diag[c] == 0.0) {
        return Err(Error::SingularSystem(format!(
            "cell {c} is decoupled from every electrode"
        )));
    }
    let stats = pcg(&a, &b, &mut x, settings.tolerance, settings.max_iterations)?;
    for c in 0..n {
        if let Some(v) = grid.cell_potential[c] {
            x[c] = v;
        }
    }
    Ok(finish(grid, x, stats.iterations, stats.relative_residual))
}

fn finish(grid: &Arc<StructuredGrid>, values: Vec<f64>, iterations: usize, residual: f64) -> PotentialField {
    let faces = Faces::new(grid);
    let (e_rho, e_z) = field_from(&faces, &values);
    let (energy, charge_energy) = energies(&faces, &values);
    PotentialField {
        grid: Arc::clone(grid),
        values,
        e_rho,
        e_z,
        applied_voltage: grid.geometry.applied_voltage(),
        energy_per_radian: energy,
        charge_energy_per_radian: charge_energy,
        iterations,
        relative_residual: residual,
    }
}

/// Wraps externally supplied cell potentials (for tests and diagnostics).
pub fn potential_from_values(grid: &Arc<StructuredGrid>, values: Vec<f64>) -> Result<PotentialField> {
    if values.len() != grid.n_cells() {
        return Err(Error::GridMismatch(format!(
            "{} values for {} cells",
            values.len(),
            grid.n_cells()
        )));
    }
    Ok(finish(grid, values, 0, 0.0))
}

fn energies(faces: &Faces, v: &[f64]) -> (f64, f64) {
    let g = faces.grid;
    let (nr, nz) = (g.n_rho(), g.n_z());
    let mut w = 0.0;
    let mut q = 0.0;
    let mut face = |p: usize, q_: usize, t: f64| {
        if t == 0.0 {
            return;
        }
        let dv = v[q_] - v[p];
        w += 0.5 * t * dv * dv;
        // charge leaving each conductor, weighted by its potential
        if let Some(vp) = g.cell_potential[p] {
            q += 0.5 * vp * t * (vp - v[q_]);
        }
        if let Some(vq) = g.cell_potential[q_] {
            q += 0.5 * vq * t * (vq - v[p]);
        }
    };
    for i in 0..nr {
        for j in 0..nz {
            let p = g.idx(i, j);
            if j + 1 < nz {
                face(p, g.idx(i, j + 1), faces.t_z(i, j));
            }
            if i + 1 < nr {
                face(p, g.idx(i + 1, j), faces.t_rho(i, j));
            }
        }
    }
    (EPS0 * w, EPS0 * q)
}

/// Potential on the face between cells `p` (resistance `rp`) and `q`
/// (resistance `rq`) from flux continuity.
fn face_value(vp: f64, rp: f64, vq: f64, rq: f64) -> f64 {
    if rp == 0.0 {
        return vp;
    }
    if rq == 0.0 {
        return vq;
    }
    (vp * rq + vq * rp) / (rp + rq)
}

/// Negated gradient of `v`: central difference between the reconstructed
/// face potentials of each cell, one-sided at the domain edges. Inside a
/// uniform medium on a uniform grid this is the plain central difference.
fn field_from(faces: &Faces, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let g = faces.grid;
    let (nr, nz) = (g.n_rho(), g.n_z());
    let n = g.n_cells();
    let mut e_rho = vec![0.0; n];
    let mut e_z = vec![0.0; n];
    for i in 0..nr {
        for j in 0..nz {
            let c = g.idx(i, j);
            if g.cell_potential[c].is_some() {
                continue;
            }
            let rc = faces.r_rho(c, i);
            let lo = (i > 0).then(|| {
                let q = g.idx(i - 1, j);
                face_value(v[c], rc, v[q], faces.r_rho(q, i - 1))
            });
            let hi = (i + 1 < nr).then(|| {
                let q = g.idx(i + 1, j);
                face_value(v[c], rc, v[q], faces.r_rho(q, i + 1))
            });
            e_rho[c] = -one_cell_gradient(v[c], lo, hi, g.h_rho[i]);

            let rc = faces.r_z(c, j);
            let lo = (j > 0).then(|| {
                let q = g.idx(i, j - 1);
                face_value(v[c], rc, v[q], faces.r_z(q, j - 1))
            });
            let hi = (j + 1 < nz).then(|| {
                let q = g.idx(i, j + 1);
                face_value(v[c], rc, v[q], faces.r_z(q, j + 1))
            });
            e_z[c] = -one_cell_gradient(v[c], lo, hi, g.h_z[j]);
        }
    }
    (e_rho, e_z)
}

fn one_cell_gradient(vc: f64, lo: Option<f64>, hi: Option<f64>, h: f64) -> f64 {
    match (lo, hi) {
        (Some(a), Some(b)) => (b - a) / h,
        (Some(a), None) => (vc - a) / (0.5 * h),
        (None, Some(b)) => (b - vc) / (0.5 * h),
        (None, None) => 0.0,
    }
}

/// Recomputes `E = −∇V` for `field.values`.
pub fn electric_field(field: &PotentialField) -> (Vec<f64>, Vec<f64>) {
    field_from(&Faces::new(&field.grid), &field.values)
}

impl PotentialField {
    /// Capacitance from the stored energy: `C = 2U/V²`, with
    /// `U = fraction · L_eff · W/R`, where `W/R` is the energy per unit
    /// length along the ring.
    pub fn capacitance(&self, l_eff: f64, energy_fraction: f64) -> Result<f64> {
        self.capacitance_with(self.energy_per_radian, l_eff, energy_fraction)
    }

    /// Same convention as [`capacitance`](Self::capacitance) but from the
    /// electrode charges.
    pub fn capacitance_from_charge(&self, l_eff: f64, energy_fraction: f64) -> Result<f64> {
        self.capacitance_with(self.charge_energy_per_radian, l_eff, energy_fraction)
    }

    fn capacitance_with(&self, w_rad: f64, l_eff: f64, fraction: f64) -> Result<f64> {
        if self.applied_voltage == 0.0 {
            return Err(Error::ZeroAppliedVoltage);
        }
        ensure_positive("effective length", l_eff)?;
        ensure_positive("energy fraction", fraction)?;
        let per_length = w_rad / self.grid.geometry.ring_radius;
        let energy = fraction * l_eff * per_length;
        Ok(2.0 * energy / (self.applied_voltage * self.applied_voltage))
    }

    /// Field vector in cylindrical components (ρ, φ, z) at `cell`.
    #[inline]
    pub fn field_at(&self, cell: usize) -> [f64; 3] {
        [self.e_rho[cell], 0.0, self.e_z[cell]]
    }

    pub fn summary(&self) -> PotentialSummary {
        let max_field = self
            .e_rho
            .iter()
            .zip(&self.e_z)
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max);
        PotentialSummary {
            applied_voltage_v: self.applied_voltage,
            energy_per_radian_j: self.energy_per_radian,
            charge_energy_per_radian_j: self.charge_energy_per_radian,
            iterations: self.iterations,
            relative_residual: self.relative_residual,
            max_field_v_per_m: max_field,
        }
    }

    /// Plain-text dump: one row per cell with `rho_m z_m V_V Erho_V_per_m
    /// Ez_V_per_m`, ρ-major order.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# electrostatic potential, {} x {} cells", self.grid.n_rho(), self.grid.n_z())?;
        writeln!(w, "# rho_m z_m V_V Erho_V_per_m Ez_V_per_m")?;
        for i in 0..self.grid.n_rho() {
            for j in 0..self.grid.n_z() {
                let c = self.grid.idx(i, j);
                writeln!(
                    w,
                    "{:.9e} {:.9e} {:.9e} {:.9e} {:.9e}",
                    self.grid.rho[i], self.grid.z[j], self.values[c], self.e_rho[c], self.e_z[c]
                )?;
            }
        }
        Ok(())
    }
}

/// Zero-point voltage `√(ħω_b / 2C)`.
pub fn v_zpf(capacitance: f64, omega_b: f64) -> Result<f64> {
    ensure_positive("capacitance", capacitance)?;
    ensure_positive("omega_b", omega_b)?;
    Ok((HBAR * omega_b / (2.0 * capacitance)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CrossSectionGeometry, Rect, Region, Role};
    use crate::grid::build_grid;
    use crate::material::{Material, MaterialLibrary, MaterialSpec};
    use proptest::prelude::*;
    use std::collections::BTreeMap;
    use std::f64::consts::PI;

    pub(crate) fn library_with(eps: &[(&str, f64)]) -> MaterialLibrary {
        let mut lib = MaterialLibrary::builtin();
        for (name, e) in eps {
            lib.insert(Material::isotropic(*name, 2.0, *e).unwrap());
        }
        lib
    }

    fn region(name: &str, role: Role, rect: Rect, material: Option<&str>) -> Region {
        Region {
            name: name.into(),
            role,
            rect,
            material: material.map(Into::into),
        }
    }

    /// Horizontal plates over `ρ ∈ [a, b]`, dielectric layers stacked between
    /// them, no margin.
    fn plates(layers: &[(&str, f64)], a: f64, b: f64, v0: f64) -> CrossSectionGeometry {
        let t = 1e-6;
        let mut regions = Vec::new();
        let mut z = 0.0;
        for (k, (mat, th)) in layers.iter().enumerate() {
            regions.push(region(&format!("layer{k}"), Role::Cladding, Rect::new(a, b, z, z + th), Some(mat)));
            z += th;
        }
        regions.push(region("bottom", Role::Electrode, Rect::new(a, b, -t, 0.0), None));
        regions.push(region("top", Role::Electrode, Rect::new(a, b, z, z + t), None));
        CrossSectionGeometry {
            ring_radius: 0.5 * (a + b),
            regions,
            electrode_potentials: BTreeMap::from([("bottom".into(), 0.0), ("top".into(), v0)]),
            f_phi: 1.0,
            background: "vacuum".into(),
            vacuum_margin: Some(0.0),
        }
    }

    /// Cylindrical plates at ρ = a and ρ = b spanning the whole height.
    fn radial_plates(a: f64, b: f64, h: f64, eps: &str) -> CrossSectionGeometry {
        let t = 4e-6;
        CrossSectionGeometry {
            ring_radius: 0.5 * (a + b),
            regions: vec![
                region("gap", Role::Cladding, Rect::new(a, b, 0.0, h), Some(eps)),
                region("inner", Role::Electrode, Rect::new(a - t, a, 0.0, h), None),
                region("outer", Role::Electrode, Rect::new(b, b + t, 0.0, h), None),
            ],
            electrode_potentials: BTreeMap::from([("inner".into(), 1.0), ("outer".into(), 0.0)]),
            f_phi: 1.0,
            background: "vacuum".into(),
            vacuum_margin: Some(0.0),
        }
    }

    /// Total capacitance of the full revolution: `L_eff = 2πR`, fraction 1.
    fn full_turn_capacitance(f: &PotentialField) -> f64 {
        let r = f.grid.geometry.ring_radius;
        f.capacitance(2.0 * PI * r, 1.0).unwrap()
    }

    #[test]
    fn zero_boundary_data_gives_zero_potential() {
        let lib = library_with(&[("d10", 10.0)]);
        let g = plates(&[("d10", 1e-6)], 5e-6, 8e-6, 0.0);
        let grid = build_grid(&g, &lib, 2e7).unwrap();
        let f = solve_potential(&grid, &SolverSettings::default()).unwrap();
        assert!(f.values.iter().all(|v| *v == 0.0));
        assert!(f.e_rho.iter().chain(&f.e_z).all(|v| *v == 0.0));
        assert!(matches!(f.capacitance(1e-3, 0.5), Err(Error::ZeroAppliedVoltage)));
    }

    #[test]
    fn no_electrodes_is_singular() {
        let lib = library_with(&[("d10", 10.0)]);
        let mut g = plates(&[("d10", 1e-6)], 5e-6, 8e-6, 1.0);
        g.regions.retain(|r| r.role != Role::Electrode);
        g.electrode_potentials.clear();
        let grid = build_grid(&g, &lib, 2e7).unwrap();
        assert!(matches!(
            solve_potential(&grid, &SolverSettings::default()),
            Err(Error::SingularSystem(_))
        ));
    }

    #[test]
    fn parallel_plates_ramp_and_capacitance() {
        let lib = library_with(&[("d10", 10.0)]);
        let (a, b, gap, v0) = (5e-6, 8e-6, 1e-6, 2.0);
        let g = plates(&[("d10", gap)], a, b, v0);
        let grid = build_grid(&g, &lib, 2e7).unwrap();
        let f = solve_potential(&grid, &SolverSettings::default()).unwrap();
        assert!(f.relative_residual <= 1e-10);
        for (c, z) in (0..grid.n_cells()).map(|c| (c, grid.z[c % grid.n_z()])) {
            if grid.cell_potential[c].is_none() {
                let err = (f.values[c] - v0 * z / gap).abs();
                assert!(err < 1e-8, "ramp error {err:e}");
                assert!((f.e_z[c] + v0 / gap).abs() < 0.01 * v0 / gap);
                assert!(f.e_rho[c].abs() < 1e-6 * v0 / gap);
            }
        }
        let area = PI * (b * b - a * a);
        let oracle = EPS0 * 10.0 * area / gap;
        let c = full_turn_capacitance(&f);
        assert!((c / oracle - 1.0).abs() < 0.02, "{c} vs {oracle}");
        let cq = f.capacitance_from_charge(2.0 * PI * g.ring_radius, 1.0).unwrap();
        assert!((cq / c - 1.0).abs() < 0.01);
    }

    #[test]
    fn dielectric_stack_field_jump() {
        let lib = library_with(&[("e1", 4.0), ("e2", 25.0)]);
        let g = plates(&[("e1", 0.8e-6), ("e2", 1.2e-6)], 5e-6, 7e-6, 1.0);
        let grid = build_grid(&g, &lib, 2e7).unwrap();
        let f = solve_potential(&grid, &SolverSettings::default()).unwrap();
        let probe = |z: f64| {
            let i = grid.n_rho() / 2;
            let j = grid.z.partition_point(|&x| x < z);
            f.e_z[grid.idx(i, j)]
        };
        let (e1, e2) = (probe(0.4e-6), probe(1.4e-6));
        assert!(((e1 / e2) / (25.0 / 4.0) - 1.0).abs() < 0.01, "{}", e1 / e2);
        // series-capacitor oracle for the absolute field
        let e1_oracle = 1.0 / (0.8e-6 + 1.2e-6 * 4.0 / 25.0);
        assert!((e1.abs() / e1_oracle - 1.0).abs() < 0.01);
    }

    fn radial_error(res: f64) -> f64 {
        let lib = library_with(&[("d5", 5.0)]);
        let (a, b, h) = (5e-6, 15e-6, 4e-6);
        let g = radial_plates(a, b, h, "d5");
        let grid = build_grid(&g, &lib, res).unwrap();
        let f = solve_potential(&grid, &SolverSettings { tolerance: 1e-13, max_iterations: 50_000 }).unwrap();
        let c = full_turn_capacitance(&f);
        let oracle = 2.0 * PI * EPS0 * 5.0 * h / (b / a).ln();
        c / oracle - 1.0
    }

    #[test]
    fn capacitance_converges_at_second_order() {
        let (e1, e2) = (radial_error(2e6), radial_error(4e6));
        let ratio = e1 / e2;
        assert!((3.4..=4.6).contains(&ratio), "ratio {ratio} ({e1:e}, {e2:e})");
    }

    #[test]
    fn capacitance_scaling() {
        let lib = library_with(&[("d10", 10.0)]);
        let g = plates(&[("d10", 1e-6)], 5e-6, 8e-6, 1.0);
        let g2 = plates(&[("d10", 1e-6)], 5e-6, 8e-6, 2.0);
        let f = solve_potential(&build_grid(&g, &lib, 1e7).unwrap(), &SolverSettings::default()).unwrap();
        let f2 = solve_potential(&build_grid(&g2, &lib, 1e7).unwrap(), &SolverSettings::default()).unwrap();
        let c = f.capacitance(1e-3, 0.5).unwrap();
        assert!((f2.capacitance(1e-3, 0.5).unwrap() / c - 1.0).abs() < 1e-9);
        assert!((f.capacitance(2e-3, 0.5).unwrap() / c - 2.0).abs() < 1e-12);
    }

    #[test]
    fn linear_potential_gives_uniform_field() {
        let lib = library_with(&[("d10", 10.0)]);
        let g = plates(&[("d10", 1e-6)], 5e-6, 8e-6, 1.0);
        let grid = build_grid(&g, &lib, 1e7).unwrap();
        let alpha = 3.5e5;
        let values: Vec<f64> = (0..grid.n_cells()).map(|c| alpha * grid.z[c % grid.n_z()]).collect();
        let f = potential_from_values(&grid, values).unwrap();
        let near_electrode = |c: usize| {
            let (i, j) = (c / grid.n_z(), c % grid.n_z());
            [(i, j.wrapping_sub(1)), (i, j + 1), (i.wrapping_sub(1), j), (i + 1, j)]
                .iter()
                .any(|&(a, b)| a < grid.n_rho() && b < grid.n_z() && grid.cell_potential[grid.idx(a, b)].is_some())
        };
        for c in 0..grid.n_cells() {
            if grid.cell_potential[c].is_none() && !near_electrode(c) {
                assert!((f.e_z[c] + alpha).abs() < 1e-6 * alpha);
                assert!(f.e_rho[c].abs() < 1e-6 * alpha);
            }
        }
        let zero = potential_from_values(&grid, vec![0.0; grid.n_cells()]).unwrap();
        assert!(zero.e_rho.iter().chain(&zero.e_z).all(|v| *v == 0.0));
    }

    #[test]
    fn solve_reports_non_convergence() {
        let lib = library_with(&[("d10", 10.0)]);
        let g = radial_plates(5e-6, 15e-6, 4e-6, "d10");
        let grid = build_grid(&g, &lib, 4e6).unwrap();
        let r = solve_potential(&grid, &SolverSettings { tolerance: 1e-14, max_iterations: 1 });
        assert!(matches!(r, Err(Error::NoConvergence { .. })));
    }

    #[test]
    fn v_zpf_reference_value() {
        // independent evaluation in extended precision via split products
        let c = 100e-15;
        let w = 2.0 * PI * 6e9;
        let v = v_zpf(c, w).unwrap();
        let oracle = (1.054_571_817e-34_f64 * 6e9 * PI / 100e-15).sqrt();
        assert!((v - oracle).abs() < 1e-15 * oracle);
        assert!((v - 4.455e-6).abs() < 0.01e-6);
        assert!((v_zpf(4.0 * c, w).unwrap() / v - 0.5).abs() < 1e-14);
        assert!((v_zpf(c, 4.0 * w).unwrap() / v - 2.0).abs() < 1e-14);
        assert!(v_zpf(0.0, w).is_err());
        assert!(v_zpf(c, -1.0).is_err());
    }

    #[test]
    fn dump_has_one_row_per_cell() {
        let lib = library_with(&[("d10", 10.0)]);
        let g = plates(&[("d10", 1e-6)], 5e-6, 8e-6, 1.0);
        let grid = build_grid(&g, &lib, 1e7).unwrap();
        let f = solve_potential(&grid, &SolverSettings::default()).unwrap();
        let mut buf = Vec::new();
        f.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<_> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows.len(), grid.n_cells());
        assert_eq!(rows[0].split_whitespace().count(), 5);
    }

    fn side_problem(lib: &MaterialLibrary, v_signal: f64, v_ground: f64) -> PotentialField {
        let mut g = crate::geometry::geometry_from_preset(
            crate::geometry::Preset::G1,
            &crate::geometry::PresetOverrides::default(),
        )
        .unwrap();
        g.electrode_potentials.insert("signal".into(), v_signal);
        g.electrode_potentials.insert("ground".into(), v_ground);
        let grid = build_grid(&g, lib, 2.5e7).unwrap();
        solve_potential(&grid, &SolverSettings::default()).unwrap()
    }

    #[test]
    fn maximum_principle_and_exact_dirichlet() {
        let lib = MaterialLibrary::builtin();
        let f = side_problem(&lib, 1.3, -0.4);
        for c in 0..f.grid.n_cells() {
            match f.grid.cell_potential[c] {
                Some(v) => assert_eq!(f.values[c], v),
                None => assert!(f.values[c] >= -0.4 - 1e-9 && f.values[c] <= 1.3 + 1e-9),
            }
        }
        assert!((f.charge_energy_per_radian / f.energy_per_radian - 1.0).abs() < 0.01);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(4))]
        #[test]
        fn solution_is_linear_in_boundary_data(alpha in -5.0f64..5.0) {
            prop_assume!(alpha.abs() > 1e-3);
            let lib = MaterialLibrary::builtin();
            let base = side_problem(&lib, 1.0, 0.0);
            let scaled = side_problem(&lib, alpha, 0.0);
            let norm = base.values.iter().map(|v| v * v).sum::<f64>().sqrt();
            let diff = base.values.iter().zip(&scaled.values)
                .map(|(a, b)| (alpha * a - b).powi(2)).sum::<f64>().sqrt();
            prop_assert!(diff <= 1e-8 * alpha.abs() * norm, "{:e}", diff / (alpha.abs() * norm));
        }
    }

    #[test]
    fn anisotropic_material_uses_cylindrical_components() {
        let spec = MaterialSpec {
            eps_optical: None,
            eps_optical_diag: Some([4.0, 4.0, 4.0]),
            eps_microwave: None,
            eps_microwave_diag: Some([40.0, 20.0, 10.0]),
            pockels_pm_per_v: None,
            refractive_index: 2.0,
        };
        let m = Material::from_spec("aniso", &spec).unwrap();
        assert_eq!(cylindrical_diag(&m.eps_microwave), (30.0, 10.0));
    }
}
