//! Whispering-gallery modes of the axisymmetric ring.
//!
//! Semivectorial scalar model: one dominant field component `ψ` per
//! polarization (axial for TE, radial for TM) with azimuthal dependence
//! `e^{imφ}` obeys
//! `−(1/ρ)∂ρ(ρ∂ρψ) − ∂z²ψ + (m²/ρ²)ψ = k₀² ε ψ`.
//! The equation is discretized with cell-centred finite volumes on a window
//! of the shared grid around the core, Dirichlet on the window edge and on
//! electrode cells.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::constants::{C_LIGHT, EPS0};
use crate::eigen::{eigs_near, EigenPair, EigenSettings};
use crate::electrostatics::cylindrical_diag;
use crate::error::{ensure_positive, Error, Result};
use crate::geometry::CrossSectionGeometry;
use crate::grid::{build_grid, StructuredGrid};
use crate::linalg::Stencil5;
use crate::material::MaterialLibrary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    /// Dominant axial component.
    Te,
    /// Dominant radial component.
    Tm,
}

impl Polarization {
    /// Unit vector of the dominant component in cylindrical (ρ, φ, z).
    pub fn unit_vector(self) -> [f64; 3] {
        match self {
            Polarization::Te => [0.0, 0.0, 1.0],
            Polarization::Tm => [1.0, 0.0, 0.0],
        }
    }
}

impl std::fmt::Display for Polarization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Polarization::Te => "TE",
            Polarization::Tm => "TM",
        })
    }
}

impl std::str::FromStr for Polarization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "te" => Ok(Polarization::Te),
            "tm" => Ok(Polarization::Tm),
            _ => Err(Error::Config(format!("unknown polarization `{s}` (expected te or tm)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OpticalSettings {
    /// Distance by which the solve window extends beyond the core, m.
    pub window_margin: f64,
    /// Required decay from the field maximum to the window edge, dB.
    pub confinement_db: f64,
    pub eigen: EigenSettings,
}

impl Default for OpticalSettings {
    fn default() -> Self {
        Self {
            window_margin: 2.0e-6,
            confinement_db: 40.0,
            eigen: EigenSettings::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModeSolution {
    pub grid: Arc<StructuredGrid>,
    pub polarization: Polarization,
    pub m: u32,
    /// Angular frequency ω_a, rad/s.
    pub omega: f64,
    /// `m c / (ω R)` at the ring major radius.
    pub n_eff: f64,
    /// Dominant field component per cell, V/m (zero outside the window).
    pub field: Vec<f64>,
    /// Relative permittivity seen by the dominant component, per cell.
    pub eps: Vec<f64>,
    /// Stored energy, J.
    pub energy: f64,
    /// Factor applied to the B-normalized eigenvector.
    pub normalization: f64,
    pub residual: f64,
    pub confinement_db: f64,
    pub fsr: Option<f64>,
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModeSummary {
    pub polarization: Polarization,
    pub m: u32,
    pub omega_a_over_2pi_hz: f64,
    pub n_eff: f64,
    pub fsr_over_2pi_hz: Option<f64>,
    pub round_trip_time_s: Option<f64>,
    pub energy_j: f64,
    pub normalization: f64,
    pub relative_residual: f64,
    pub confinement_db: f64,
}

impl ModeSolution {
    /// Field vector (ρ, φ, z) at `cell`, V/m.
    #[inline]
    pub fn field_vector(&self, cell: usize) -> [f64; 3] {
        let u = self.polarization.unit_vector();
        let a = self.field[cell];
        [a * u[0], a * u[1], a * u[2]]
    }

    /// Displacement `ε₀ ε E` at `cell` using the azimuth-averaged optical
    /// tensor of the cell material, C/m².
    pub fn displacement(&self, cell: usize) -> [f64; 3] {
        let e = self.field_vector(cell);
        match self.grid.material_of(cell) {
            Some(m) => {
                let (rr, zz) = cylindrical_diag(&m.eps_optical);
                [EPS0 * rr * e[0], EPS0 * rr * e[1], EPS0 * zz * e[2]]
            }
            None => [0.0; 3],
        }
    }

    /// Copy with the field scaled by `beta`; energy follows quadratically.
    pub fn scaled(&self, beta: f64) -> Self {
        let mut s = self.clone();
        s.field.iter_mut().for_each(|v| *v *= beta);
        s.normalization *= beta;
        s.energy = mode_energy(&s);
        s
    }

    pub fn summary(&self) -> ModeSummary {
        ModeSummary {
            polarization: self.polarization,
            m: self.m,
            omega_a_over_2pi_hz: self.omega / (2.0 * PI),
            n_eff: self.n_eff,
            fsr_over_2pi_hz: self.fsr.map(|f| f / (2.0 * PI)),
            round_trip_time_s: self.tau,
            energy_j: self.energy,
            normalization: self.normalization,
            relative_residual: self.residual,
            confinement_db: self.confinement_db,
        }
    }

    /// Plain-text dump `rho_m z_m Ea_V_per_m` over the grid, ρ-major.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "# optical mode {} m={} f={:.9e} Hz, {} x {} cells",
            self.polarization,
            self.m,
            self.omega / (2.0 * PI),
            self.grid.n_rho(),
            self.grid.n_z()
        )?;
        writeln!(w, "# rho_m z_m Ea_V_per_m")?;
        for i in 0..self.grid.n_rho() {
            for j in 0..self.grid.n_z() {
                let c = self.grid.idx(i, j);
                writeln!(w, "{:.9e} {:.9e} {:.9e}", self.grid.rho[i], self.grid.z[j], self.field[c])?;
            }
        }
        Ok(())
    }
}

/// Total (electric plus magnetic) energy: the electric energy
/// `½∫ε₀ ε |E|² dV` doubled, with `dV = 2πρ dρ dz`.
pub fn mode_energy(mode: &ModeSolution) -> f64 {
    let g = &mode.grid;
    let mut sum = 0.0;
    for i in 0..g.n_rho() {
        for j in 0..g.n_z() {
            let c = g.idx(i, j);
            let a = mode.field[c];
            if a != 0.0 {
                sum += mode.eps[c] * a * a * g.rho[i] * g.cell_area(i, j);
            }
        }
    }
    EPS0 * 2.0 * PI * sum
}

/// Relative permittivity of each cell for the dominant component.
pub fn scalar_permittivity(grid: &StructuredGrid, pol: Polarization) -> Vec<f64> {
    (0..grid.n_cells())
        .map(|c| match grid.material_of(c) {
            Some(m) => {
                let (rr, zz) = cylindrical_diag(&m.eps_optical);
                match pol {
                    Polarization::Te => zz,
                    Polarization::Tm => rr,
                }
            }
            None => 0.0,
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Window {
    i0: usize,
    i1: usize,
    j0: usize,
    j1: usize,
}

impl Window {
    fn nj(&self) -> usize {
        self.j1 - self.j0
    }

    fn len(&self) -> usize {
        (self.i1 - self.i0) * self.nj()
    }

    fn local(&self, i: usize, j: usize) -> usize {
        (i - self.i0) * self.nj() + (j - self.j0)
    }

    fn on_edge(&self, i: usize, j: usize) -> bool {
        i == self.i0 || i + 1 == self.i1 || j == self.j0 || j + 1 == self.j1
    }
}

fn window(grid: &StructuredGrid, margin: f64) -> Result<Window> {
    let core = grid
        .geometry
        .core_box()
        .ok_or_else(|| Error::NoConfinedMode("geometry has no core region".into()))?;
    let (i0, i1) = grid.rho_range(core.rho_min - margin, core.rho_max + margin);
    let (j0, j1) = grid.z_range(core.z_min - margin, core.z_max + margin);
    if i1 - i0 < 3 || j1 - j0 < 3 {
        return Err(Error::NoConfinedMode("optical window is empty".into()));
    }
    Ok(Window { i0, i1, j0, j1 })
}

/// Stiffness (with the `m²/ρ²` term) and diagonal mass of the windowed
/// operator.
fn assemble(grid: &StructuredGrid, w: &Window, m: u32, eps: &[f64]) -> (Stencil5, Vec<f64>) {
    let nj = w.nj();
    let mut a = Stencil5::zeros(w.i1 - w.i0, nj);
    let mut b = vec![0.0; w.len()];
    let pinned = |i: usize, j: usize| grid.cell_potential[grid.idx(i, j)].is_some();
    let m2 = (m as f64) * (m as f64);
    for i in w.i0..w.i1 {
        for j in w.j0..w.j1 {
            let k = w.local(i, j);
            if pinned(i, j) {
                a.diag[k] = 1.0;
                continue;
            }
            let (hr, hz) = (grid.h_rho[i], grid.h_z[j]);
            b[k] = eps[grid.idx(i, j)] * grid.rho[i] * hr * hz;
            a.diag[k] += m2 * hr * hz / grid.rho[i];

            // radial faces
            for (face, nb) in [(i, i.checked_sub(1)), (i + 1, Some(i + 1))] {
                let rho_f = grid.rho_edges[face];
                match nb.filter(|&n| n >= w.i0 && n < w.i1) {
                    Some(n) if !pinned(n, j) => {
                        let t = rho_f * hz / (grid.rho[n] - grid.rho[i]).abs();
                        a.diag[k] += t;
                        if n > i {
                            a.outer[k] = -t;
                        }
                    }
                    _ => a.diag[k] += rho_f * hz / (0.5 * hr),
                }
            }
            // axial faces
            for nb in [j.checked_sub(1), Some(j + 1)] {
                match nb.filter(|&n| n >= w.j0 && n < w.j1) {
                    Some(n) if !pinned(i, n) => {
                        let t = grid.rho[i] * hr / (grid.z[n] - grid.z[j]).abs();
                        a.diag[k] += t;
                        if n > j {
                            a.inner[k] = -t;
                        }
                    }
                    _ => a.diag[k] += grid.rho[i] * hr / (0.5 * hz),
                }
            }
        }
    }
    (a, b)
}

fn confinement(grid: &StructuredGrid, w: &Window, field: &[f64]) -> f64 {
    let mut peak = 0.0f64;
    let mut edge = 0.0f64;
    for i in w.i0..w.i1 {
        for j in w.j0..w.j1 {
            let v = field[grid.idx(i, j)].abs();
            peak = peak.max(v);
            let axis = i == 0 && grid.rho_edges[0] == 0.0 && !(j == w.j0 || j + 1 == w.j1 || i + 1 == w.i1);
            if w.on_edge(i, j) && !axis {
                edge = edge.max(v);
            }
        }
    }
    if edge == 0.0 {
        f64::INFINITY
    } else {
        20.0 * (peak / edge).log10()
    }
}

fn to_mode(
    grid: &Arc<StructuredGrid>,
    w: &Window,
    eps: &[f64],
    m: u32,
    pol: Polarization,
    pair: &EigenPair,
) -> Result<ModeSolution> {
    if !(pair.value > 0.0) {
        return Err(Error::NoConfinedMode(format!(
            "non-positive eigenvalue {:e} for m = {m}",
            pair.value
        )));
    }
    // eigenvector is B-normalized: Σ ε ρ A x² = 1, so U = 2π ε₀ s²
    let normalization = 1.0 / (2.0 * PI * EPS0).sqrt();
    let mut field = vec![0.0; grid.n_cells()];
    for i in w.i0..w.i1 {
        for j in w.j0..w.j1 {
            field[grid.idx(i, j)] = normalization * pair.vector[w.local(i, j)];
        }
    }
    let omega = C_LIGHT * pair.value.sqrt();
    let mut mode = ModeSolution {
        grid: Arc::clone(grid),
        polarization: pol,
        m,
        omega,
        n_eff: m as f64 * C_LIGHT / (omega * grid.geometry.ring_radius),
        field,
        eps: eps.to_vec(),
        energy: 0.0,
        normalization,
        residual: pair.residual,
        confinement_db: 0.0,
        fsr: None,
        tau: None,
    };
    mode.energy = mode_energy(&mode);
    mode.confinement_db = confinement(grid, w, &mode.field);
    Ok(mode)
}

/// Solves for the modes with frequencies closest to the target wavelength,
/// ordered by `|ω − ω_target|`; modes failing the confinement check are
/// discarded.
pub fn solve_wgm_modes(
    grid: &Arc<StructuredGrid>,
    m: u32,
    pol: Polarization,
    target_wavelength: f64,
    n_modes: usize,
    settings: &OpticalSettings,
) -> Result<Vec<ModeSolution>> {
    if m == 0 {
        return Err(Error::NonPositive { name: "m", value: 0.0 });
    }
    if !(0.4e-6..=5e-6).contains(&target_wavelength) {
        return Err(Error::OutOfRange {
            name: "target wavelength",
            value: target_wavelength,
            lo: 0.4e-6,
            hi: 5e-6,
        });
    }
    let eps = scalar_permittivity(grid, pol);
    let w = window(grid, settings.window_margin)?;
    let (a, b) = assemble(grid, &w, m, &eps);
    let k0 = 2.0 * PI / target_wavelength;
    let pairs = eigs_near(&a, &b, k0 * k0, n_modes + 2, &settings.eigen)?;
    let omega_t = C_LIGHT * k0;
    let mut modes = Vec::new();
    for p in &pairs {
        let mode = to_mode(grid, &w, &eps, m, pol, p)?;
        if mode.confinement_db >= settings.confinement_db {
            modes.push(mode);
        }
    }
    if modes.is_empty() {
        return Err(Error::NoConfinedMode(format!(
            "none of {} candidates near {:.4e} m decays by {} dB",
            pairs.len(),
            target_wavelength,
            settings.confinement_db
        )));
    }
    modes.sort_by(|x, y| (x.omega - omega_t).abs().total_cmp(&(y.omega - omega_t).abs()));
    modes.truncate(n_modes);
    Ok(modes)
}

/// Lowest-frequency mode of azimuthal order `m` for the given per-cell
/// permittivity.
pub fn fundamental_mode_with(
    grid: &Arc<StructuredGrid>,
    eps: &[f64],
    m: u32,
    pol: Polarization,
    settings: &OpticalSettings,
) -> Result<ModeSolution> {
    if m == 0 {
        return Err(Error::NonPositive { name: "m", value: 0.0 });
    }
    if eps.len() != grid.n_cells() {
        return Err(Error::GridMismatch(format!(
            "{} permittivities for {} cells",
            eps.len(),
            grid.n_cells()
        )));
    }
    let w = window(grid, settings.window_margin)?;
    let (a, b) = assemble(grid, &w, m, eps);
    // Rayleigh quotient lower bound: every eigenvalue exceeds m²/(ρ² ε) at
    // the outermost, densest cell
    let rho_max = grid.rho_edges[w.i1];
    let eps_max = (w.i0..w.i1)
        .flat_map(|i| (w.j0..w.j1).map(move |j| (i, j)))
        .map(|(i, j)| eps[grid.idx(i, j)])
        .fold(1.0, f64::max);
    let sigma = 0.98 * (m as f64 / rho_max).powi(2) / eps_max;
    let pairs = eigs_near(&a, &b, sigma, 1, &settings.eigen)?;
    let mode = to_mode(grid, &w, eps, m, pol, &pairs[0])?;
    if mode.confinement_db < settings.confinement_db {
        return Err(Error::NoConfinedMode(format!(
            "fundamental mode m = {m} decays by only {:.1} dB",
            mode.confinement_db
        )));
    }
    Ok(mode)
}

pub fn fundamental_mode(
    grid: &Arc<StructuredGrid>,
    m: u32,
    pol: Polarization,
    settings: &OpticalSettings,
) -> Result<ModeSolution> {
    fundamental_mode_with(grid, &scalar_permittivity(grid, pol), m, pol, settings)
}

/// `FSR = ω(m+1) − ω(m)` of the fundamental family and `τ = 2π/FSR`.
pub fn fsr_and_tau(
    grid: &Arc<StructuredGrid>,
    m: u32,
    pol: Polarization,
    settings: &OpticalSettings,
) -> Result<(f64, f64)> {
    let w0 = fundamental_mode(grid, m, pol, settings)?.omega;
    let w1 = fundamental_mode(grid, m + 1, pol, settings)?.omega;
    let fsr = w1 - w0;
    Ok((fsr, 2.0 * PI / fsr))
}

fn core_index(grid: &StructuredGrid) -> f64 {
    grid.geometry
        .core_regions()
        .filter_map(|r| r.material.as_deref())
        .filter_map(|name| grid.materials.iter().find(|m| m.name == name))
        .map(|m| m.refractive_index_scalar)
        .fold(1.0, f64::max)
}

/// Fundamental mode whose frequency lies closest to `target_omega`, with
/// FSR and round-trip time attached. The azimuthal order starts from the
/// bulk-index estimate (or `m_hint`) and is corrected with the local FSR
/// until the target lies within half an FSR.
pub fn find_mode_near(
    grid: &Arc<StructuredGrid>,
    pol: Polarization,
    target_omega: f64,
    m_hint: Option<u32>,
    settings: &OpticalSettings,
) -> Result<ModeSolution> {
    ensure_positive("target optical frequency", target_omega)?;
    let r = grid.geometry.ring_radius;
    let m0 = m_hint.unwrap_or_else(|| (r * core_index(grid) * target_omega / C_LIGHT).round().max(1.0) as u32);
    let mut cache: BTreeMap<u32, ModeSolution> = BTreeMap::new();
    let solve = |m: u32, cache: &mut BTreeMap<u32, ModeSolution>| -> Result<f64> {
        if let Some(s) = cache.get(&m) {
            return Ok(s.omega);
        }
        let s = fundamental_mode(grid, m, pol, settings)?;
        let w = s.omega;
        cache.insert(m, s);
        Ok(w)
    };
    let mut m = m0.max(1);
    let mut visited = Vec::new();
    for _ in 0..12 {
        let w = solve(m, &mut cache)?;
        let fsr = solve(m + 1, &mut cache)? - w;
        let step = ((target_omega - w) / fsr).round() as i64;
        debug!("m-scan: m = {m}, f = {:.6e} Hz, step {step}", w / (2.0 * PI));
        visited.push(m);
        if step == 0 || visited.len() > 1 && visited[..visited.len() - 1].contains(&((m as i64 + step).max(1) as u32)) {
            break;
        }
        m = (m as i64 + step).max(1) as u32;
    }
    // nearest of the solved orders
    let best = *cache
        .iter()
        .min_by(|a, b| (a.1.omega - target_omega).abs().total_cmp(&(b.1.omega - target_omega).abs()))
        .map(|(m, _)| m)
        .expect("at least one solve");
    let w1 = solve(best + 1, &mut cache)?;
    let mut mode = cache.remove(&best).expect("solved");
    let fsr = w1 - mode.omega;
    mode.fsr = Some(fsr);
    mode.tau = Some(2.0 * PI / fsr);
    Ok(mode)
}

/// Searches `[r_min, r_max]` for the ring radius whose FSR near
/// `target_omega` equals `omega_b` (relative tolerance `rel_tol`).
#[allow(clippy::too_many_arguments)]
pub fn match_fsr(
    geometry: &CrossSectionGeometry,
    materials: &MaterialLibrary,
    resolution: f64,
    omega_b: f64,
    pol: Polarization,
    target_omega: f64,
    bounds: (f64, f64),
    rel_tol: f64,
    settings: &OpticalSettings,
) -> Result<f64> {
    ensure_positive("omega_b", omega_b)?;
    let (r_min, r_max) = bounds;
    if !(r_min > 0.0 && r_max > r_min) {
        return Err(Error::Config(format!("invalid radius bounds [{r_min:e}, {r_max:e}]")));
    }
    let core_w = geometry.core_box().map_or(0.0, |b| b.width());
    if r_min <= core_w {
        return Err(Error::Config(format!(
            "minimum radius {r_min:e} m does not exceed the core width"
        )));
    }
    let mut last: Option<(f64, u32)> = None;
    let mut eval = |r: f64| -> Result<f64> {
        let g = geometry.with_ring_radius(r);
        let grid = build_grid(&g, materials, resolution)?;
        let hint = last.map(|(r0, m0)| ((m0 as f64) * r / r0).round().max(1.0) as u32);
        let mode = find_mode_near(&grid, pol, target_omega, hint, settings)?;
        last = Some((r, mode.m));
        let f = (mode.fsr.expect("attached") / omega_b).ln();
        debug!("match-fsr: R = {r:.6e} m, FSR/2π = {:.6e} Hz", mode.fsr.unwrap() / (2.0 * PI));
        Ok(f)
    };
    let tol = (1.0 + rel_tol).ln();
    let r0 = geometry.ring_radius.clamp(r_min, r_max);
    let f0 = eval(r0)?;
    if f0.abs() <= tol {
        return Ok(r0);
    }
    // FSR ∝ 1/R, so step in log R by the log mismatch until the sign flips
    let (mut xa, mut fa) = (r0.ln(), f0);
    let (lo, hi) = (r_min.ln(), r_max.ln());
    let (mut xb, mut fb);
    loop {
        let at_bound = if fa > 0.0 { xa >= hi } else { xa <= lo };
        if at_bound {
            return Err(Error::BracketFailure(format!(
                "FSR never reaches {:.4e} Hz for R in [{r_min:e}, {r_max:e}] m",
                omega_b / (2.0 * PI)
            )));
        }
        xb = (xa + 1.05 * fa).clamp(lo, hi);
        fb = eval(xb.exp())?;
        if fb.abs() <= tol {
            return Ok(xb.exp());
        }
        if fb.signum() != fa.signum() {
            break;
        }
        xa = xb;
        fa = fb;
    }
    // Illinois regula falsi on ln R
    let mut side = 0i8;
    for _ in 0..40 {
        let xc = (xa * fb - xb * fa) / (fb - fa);
        let fc = eval(xc.exp())?;
        if fc.abs() <= tol {
            return Ok(xc.exp());
        }
        if fc.signum() == fb.signum() {
            xb = xc;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            xa = xc;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    Err(Error::BracketFailure("FSR matching did not converge".into()))
}

/// Radial extent of the solved window, for diagnostics.
pub fn window_bounds(grid: &StructuredGrid, settings: &OpticalSettings) -> Result<[f64; 4]> {
    let w = window(grid, settings.window_margin)?;
    Ok([
        grid.rho_edges[w.i0],
        grid.rho_edges[w.i1],
        grid.z_edges[w.j0],
        grid.z_edges[w.j1],
    ])
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geometry::{geometry_from_preset, Preset, PresetOverrides, Rect, Region, Role};
    use crate::material::{Material, MaterialSpec};
    use crate::tensor::ContractedTensor;

    pub(crate) fn glass(name: &str, n: f64) -> Material {
        let mut r: ContractedTensor = [[0.0; 3]; 6];
        r[2][2] = 10.0;
        let spec = MaterialSpec {
            eps_optical: None,
            eps_optical_diag: Some([n * n; 3]),
            eps_microwave: None,
            eps_microwave_diag: Some([10.0; 3]),
            pockels_pm_per_v: Some(r),
            refractive_index: n,
        };
        Material::from_spec(name, &spec).unwrap()
    }

    /// Rectangular ring of index `n` in vacuum.
    pub(crate) fn bare_ring(n: f64, radius: f64, w: f64, h: f64) -> (CrossSectionGeometry, MaterialLibrary) {
        let mut lib = MaterialLibrary::builtin();
        lib.insert(glass("glass", n));
        let g = CrossSectionGeometry {
            ring_radius: radius,
            regions: vec![Region {
                name: "ring".into(),
                role: Role::Core,
                rect: Rect::centered(radius, 0.0, w, h),
                material: Some("glass".into()),
            }],
            electrode_potentials: Default::default(),
            f_phi: 1.0,
            background: "vacuum".into(),
            vacuum_margin: Some(2.5e-6),
        };
        (g, lib)
    }

    fn settings() -> OpticalSettings {
        OpticalSettings::default()
    }

    #[test]
    fn large_radius_phase_matching() {
        let (n, r, lambda) = (2.2, 60e-6, 1.55e-6);
        let (g, lib) = bare_ring(n, r, 3e-6, 2e-6);
        let grid = build_grid(&g, &lib, 2e7).unwrap();
        let target = 2.0 * PI * C_LIGHT / lambda;
        let mode = find_mode_near(&grid, Polarization::Te, target, None, &settings()).unwrap();
        // phase matching m λ = 2π R n_eff
        let lambda_a = 2.0 * PI * C_LIGHT / mode.omega;
        let n_eff = mode.m as f64 * lambda_a / (2.0 * PI * r);
        assert!((n_eff / mode.n_eff - 1.0).abs() < 1e-12);
        assert!((n_eff / n - 1.0).abs() < 0.05, "n_eff {n_eff}");
        assert!(mode.residual <= 1e-8);
        let fsr = mode.fsr.unwrap();
        assert!((fsr * mode.tau.unwrap() - 2.0 * PI).abs() <= 4.0 * f64::EPSILON * 2.0 * PI);
        let oracle = C_LIGHT / (n_eff * r);
        assert!((fsr / oracle - 1.0).abs() < 0.05, "fsr ratio {}", fsr / oracle);
    }

    #[test]
    fn refinement_moves_frequency_less_than_a_permille() {
        let (g, lib) = bare_ring(2.0, 20e-6, 1.5e-6, 1.0e-6);
        let coarse = build_grid(&g, &lib, 2e7).unwrap();
        let fine = build_grid(&g, &lib, 4e7).unwrap();
        let a = fundamental_mode(&coarse, 150, Polarization::Tm, &settings()).unwrap();
        let b = fundamental_mode(&fine, 150, Polarization::Tm, &settings()).unwrap();
        assert!((a.omega / b.omega - 1.0).abs() < 1e-3);
    }

    #[test]
    fn higher_core_index_lowers_frequency() {
        let mut last = f64::INFINITY;
        for n in [1.9, 2.0, 2.1, 2.2] {
            let (g, lib) = bare_ring(n, 20e-6, 1.5e-6, 1.0e-6);
            let grid = build_grid(&g, &lib, 2e7).unwrap();
            let w = fundamental_mode(&grid, 160, Polarization::Te, &settings()).unwrap().omega;
            assert!(w < last);
            last = w;
        }
    }

    #[test]
    fn g1_preset_reaches_200_thz() {
        let g = geometry_from_preset(Preset::G1, &PresetOverrides::default()).unwrap();
        let grid = build_grid(&g, &MaterialLibrary::builtin(), 2.5e7).unwrap();
        let target = 2.0 * PI * 200e12;
        let mode = find_mode_near(&grid, Polarization::Tm, target, None, &settings()).unwrap();
        assert!((mode.omega / target - 1.0).abs() < 0.02);
        assert!((mode.energy - 1.0).abs() < 1e-12);
        assert!(mode.confinement_db >= 40.0);
        let lo = grid.materials.iter().map(|m| m.refractive_index_scalar).fold(f64::INFINITY, f64::min);
        let hi = grid.materials.iter().map(|m| m.refractive_index_scalar).fold(0.0, f64::max);
        assert!(mode.n_eff > lo && mode.n_eff < hi);
    }

    #[test]
    fn returned_modes_are_accurate_and_orthogonal() {
        let (g, lib) = bare_ring(2.2, 20e-6, 2.0e-6, 1.5e-6);
        let grid = build_grid(&g, &lib, 2e7).unwrap();
        let modes = solve_wgm_modes(&grid, 160, Polarization::Te, 1.55e-6, 3, &settings()).unwrap();
        assert!(!modes.is_empty());
        let target = 2.0 * PI * C_LIGHT / 1.55e-6;
        for w in modes.windows(2) {
            assert!((w[0].omega - target).abs() <= (w[1].omega - target).abs());
        }
        for (k, a) in modes.iter().enumerate() {
            assert!(a.residual <= 1e-8);
            for b in &modes[k + 1..] {
                let inner: f64 = (0..grid.n_cells())
                    .map(|c| a.eps[c] * a.field[c] * b.field[c] * grid.rho[c / grid.n_z()] * grid.cell_area(c / grid.n_z(), c % grid.n_z()))
                    .sum();
                assert!(inner.abs() * EPS0 * 2.0 * PI <= 1e-6);
            }
        }
    }

    #[test]
    fn wavelength_range_is_validated() {
        let (g, lib) = bare_ring(2.2, 20e-6, 2.0e-6, 1.5e-6);
        let grid = build_grid(&g, &lib, 1e7).unwrap();
        assert!(matches!(
            solve_wgm_modes(&grid, 10, Polarization::Te, 10e-6, 1, &settings()),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn energy_scales_quadratically() {
        let (g, lib) = bare_ring(2.2, 20e-6, 2.0e-6, 1.5e-6);
        let grid = build_grid(&g, &lib, 1e7).unwrap();
        let mode = fundamental_mode(&grid, 150, Polarization::Te, &settings()).unwrap();
        assert!((mode_energy(&mode) - 1.0).abs() < 1e-12);
        assert!((mode_energy(&mode.scaled(3.0)) - 9.0).abs() < 1e-11);
        assert_eq!(mode_energy(&mode.scaled(0.0)), 0.0);
    }

    #[test]
    fn fsr_tau_and_radius_scaling() {
        let (g, lib) = bare_ring(2.2, 20e-6, 2.0e-6, 1.5e-6);
        let s = settings();
        let grid = build_grid(&g, &lib, 1.5e7).unwrap();
        let (fsr, tau) = fsr_and_tau(&grid, 170, Polarization::Te, &s).unwrap();
        assert!((fsr * tau - 2.0 * PI).abs() <= 4.0 * f64::EPSILON * 2.0 * PI);
        let grid2 = build_grid(&g.with_ring_radius(40e-6), &lib, 1.5e7).unwrap();
        let (fsr2, _) = fsr_and_tau(&grid2, 340, Polarization::Te, &s).unwrap();
        assert!((fsr2 / fsr - 0.5).abs() < 0.05, "{}", fsr2 / fsr);
    }

    #[test]
    fn match_fsr_fixed_point_and_bracket_failure() {
        let (g, lib) = bare_ring(2.2, 20e-6, 2.0e-6, 1.5e-6);
        let s = settings();
        let res = 1.5e7;
        let target = 2.0 * PI * 200e12;
        let grid = build_grid(&g, &lib, res).unwrap();
        let fsr = find_mode_near(&grid, Polarization::Te, target, None, &s).unwrap().fsr.unwrap();
        let r = match_fsr(&g, &lib, res, fsr, Polarization::Te, target, (10e-6, 1e-3), 5e-3, &s).unwrap();
        assert_eq!(r, 20e-6);
        let too_fast = match_fsr(&g, &lib, res, 10.0 * fsr, Polarization::Te, target, (10e-6, 1e-3), 5e-3, &s);
        assert!(matches!(too_fast, Err(Error::BracketFailure(_))));
    }

    #[test]
    fn match_fsr_reaches_millimetre_radius_for_6_ghz() {
        let (g, lib) = bare_ring(2.2, 100e-6, 2.0e-6, 1.5e-6);
        let s = settings();
        let omega_b = 2.0 * PI * 6e9;
        let target = 2.0 * PI * 200e12;
        let r = match_fsr(&g, &lib, 1.5e7, omega_b, Polarization::Te, target, (10e-6, 10e-3), 5e-3, &s).unwrap();
        // FSR = c/(n_g R) with a group index near the bulk value
        let estimate = C_LIGHT / (2.2 * omega_b);
        assert!(r > 0.5 * estimate && r < 2.0 * estimate, "R = {r:e}");
        assert!(r > 1e-3 && r < 1e-2);
    }
}
