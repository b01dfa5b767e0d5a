//! End-to-end runs: geometry → electrostatics and optics → coupling →
//! converter theory, plus the geometry-comparison table.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::converter::{convert, pump_power_for_cooperativity, ConversionReport, ConverterParams, Flag, Topology};
use crate::coupling::{g0_overlap, CouplingResult};
use crate::electrostatics::{solve_potential, PotentialField, PotentialSummary};
use crate::error::{Error, Result, Stage};
use crate::geometry::{Preset, Role};
use crate::grid::{build_grid, StructuredGrid};
use crate::material::Material;
use crate::optics::{find_mode_near, ModeSolution, ModeSummary, Polarization};

/// Solved fields of one cross-section.
#[derive(Debug)]
pub struct Fields {
    pub grid: Arc<StructuredGrid>,
    pub potential: PotentialField,
    pub mode: ModeSolution,
    pub capacitance_f: f64,
    pub core_material: Material,
}

type Slot = Arc<Mutex<Option<Arc<Fields>>>>;

/// Field solutions shared across runs, keyed by the content hash of
/// everything the fields depend on.
#[derive(Debug, Default)]
pub struct FieldCache {
    entries: Mutex<HashMap<String, Slot>>,
}

impl FieldCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").values().filter(|e| e.lock().expect("entry lock").is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get_or_solve(&self, cfg: &RunConfig) -> Result<Arc<Fields>> {
        let key = field_key(cfg)?;
        let slot = self.entries.lock().expect("cache lock").entry(key).or_default().clone();
        let mut guard = slot.lock().expect("entry lock");
        if let Some(f) = guard.as_ref() {
            debug!("field cache hit");
            return Ok(f.clone());
        }
        let f = Arc::new(solve_fields(cfg)?);
        *guard = Some(f.clone());
        Ok(f)
    }
}

fn field_key(cfg: &RunConfig) -> Result<String> {
    #[derive(Serialize)]
    struct Key<'a> {
        geometry: crate::geometry::CrossSectionGeometry,
        materials: &'a BTreeMap<String, crate::material::MaterialSpec>,
        solver: &'a crate::config::SolverSection,
        polarization: Polarization,
        optical_frequency_thz: f64,
        microwave_frequency_ghz: f64,
    }
    let key = Key {
        geometry: cfg.build_geometry()?,
        materials: &cfg.material,
        solver: &cfg.solver,
        polarization: cfg.polarization(),
        optical_frequency_thz: cfg.converter.optical_frequency_thz,
        microwave_frequency_ghz: cfg.converter.microwave_frequency_ghz,
    };
    use sha2::{Digest, Sha256};
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(&key).expect("key serializes"))))
}

/// Runs the two independent field solves and the capacitance extraction.
pub fn solve_fields(cfg: &RunConfig) -> Result<Fields> {
    let stage = |s: Stage| move |e: Error| e.in_stage(s);
    let materials = cfg.materials().map_err(stage(Stage::Geometry))?;
    let geometry = cfg.build_geometry().map_err(stage(Stage::Geometry))?;
    let grid = build_grid(&geometry, &materials, cfg.resolution()).map_err(stage(Stage::Geometry))?;
    info!("grid {} × {} cells", grid.n_rho(), grid.n_z());

    let es = cfg.electrostatic_settings();
    let potential = solve_potential(&grid, &es).map_err(stage(Stage::Electrostatics))?;
    let l_eff = 2.0 * PI * geometry.ring_radius * geometry.f_phi;
    let capacitance_f = if potential.applied_voltage == 0.0 {
        // capacitance is a property of the electrodes alone: probe at 1 V
        let mut probe = geometry.clone();
        let first = probe.electrode_potentials.keys().next().cloned();
        for (name, v) in probe.electrode_potentials.iter_mut() {
            *v = if Some(name) == first.as_ref() { 1.0 } else { 0.0 };
        }
        if probe.electrode_potentials.len() < 2 {
            return Err(Error::SingularSystem("need two electrodes for a capacitance".into()).in_stage(Stage::Electrostatics));
        }
        let g = build_grid(&probe, &materials, cfg.resolution()).map_err(stage(Stage::Geometry))?;
        solve_potential(&g, &es)
            .and_then(|p| p.capacitance(l_eff, cfg.solver.energy_fraction))
            .map_err(stage(Stage::Electrostatics))?
    } else {
        potential
            .capacitance(l_eff, cfg.solver.energy_fraction)
            .map_err(stage(Stage::Electrostatics))?
    };

    let mode = find_mode_near(
        &grid,
        cfg.polarization(),
        cfg.converter.omega_target(),
        cfg.solver.azimuthal_order,
        &cfg.optical_settings(),
    )
    .map_err(stage(Stage::Optics))?;

    let core_name = geometry
        .regions
        .iter()
        .find(|r| r.role == Role::Core)
        .and_then(|r| r.material.clone())
        .ok_or_else(|| Error::InvalidGeometry("no core region".into()).in_stage(Stage::Geometry))?;
    let core_material = materials.get(&core_name).map_err(stage(Stage::Geometry))?.clone();
    Ok(Fields {
        grid,
        potential,
        mode,
        capacitance_f,
        core_material,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySummary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    pub ring_radius_m: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub electrode_gap_m: Option<f64>,
    pub f_phi: f64,
    pub resolution_per_m: f64,
    pub n_rho: usize,
    pub n_z: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub program: String,
    pub version: String,
    pub config_sha256: String,
    pub grid_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub geometry: GeometrySummary,
    pub mode: ModeSummary,
    pub potential: PotentialSummary,
    pub capacitance_f: f64,
    pub coupling: CouplingResult,
    pub converter_params: ConverterParams,
    pub conversion: ConversionReport,
    pub provenance: Provenance,
    pub warnings: Vec<String>,
    /// Units of fields whose name carries no unit suffix.
    pub units: BTreeMap<String, String>,
}

impl RunReport {
    pub fn label(&self) -> String {
        self.geometry
            .preset
            .map_or_else(|| "custom".to_string(), |p| p.to_string())
    }

    pub fn g0_over_2pi_hz(&self) -> f64 {
        self.coupling.g0_over_2pi_hz
    }
}

fn units() -> BTreeMap<String, String> {
    [
        ("mode.n_eff", "1"),
        ("mode.normalization", "1"),
        ("mode.relative_residual", "1"),
        ("mode.m", "1"),
        ("potential.iterations", "1"),
        ("potential.relative_residual", "1"),
        ("converter_params.omega_a", "rad/s"),
        ("converter_params.omega_b", "rad/s"),
        ("converter_params.kappa_*", "rad/s"),
        ("converter_params.g0", "rad/s"),
        ("converter_params.n_th", "quanta"),
        ("converter_params.pump.power", "W"),
        ("converter_params.pump.photon_number", "photons"),
        ("conversion.c0", "1"),
        ("conversion.cooperativity", "1"),
        ("conversion.photon_number", "photons"),
        ("conversion.gamma_peak", "1"),
        ("conversion.gamma_curve", "[Hz, 1]"),
        ("conversion.n_eq", "quanta"),
        ("conversion.checks.ratio", "1"),
        ("geometry.f_phi", "1"),
        ("coupling.inputs.f_phi", "1"),
        ("coupling.inputs.n_phi", "samples"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

pub fn run_pipeline(cfg: &RunConfig) -> Result<RunReport> {
    run_pipeline_cached(cfg, None).map(|(r, _)| r)
}

/// Runs the pipeline, reusing field solutions from `cache` when given.
pub fn run_pipeline_cached(cfg: &RunConfig, cache: Option<&FieldCache>) -> Result<(RunReport, Arc<Fields>)> {
    cfg.validate()?;
    let fields = match cache {
        Some(c) => c.get_or_solve(cfg)?,
        None => Arc::new(solve_fields(cfg)?),
    };
    let report = assemble(cfg, &fields)?;
    Ok((report, fields))
}

fn assemble(cfg: &RunConfig, f: &Fields) -> Result<RunReport> {
    let geometry = &f.grid.geometry;
    let omega_b = cfg.converter.omega_b();
    let coupling = g0_overlap(
        &f.mode,
        &f.potential,
        &f.core_material,
        f.capacitance_f,
        omega_b,
        geometry.f_phi,
        cfg.solver.n_phi,
    )
    .map_err(|e| e.in_stage(Stage::Coupling))?;

    let params = cfg
        .converter
        .params(f.mode.omega, coupling.g0_rad_per_s)
        .map_err(|e| e.in_stage(Stage::Converter))?;
    let conversion = convert(&params, cfg.converter.curve_points, &cfg.converter.thresholds())
        .map_err(|e| e.in_stage(Stage::Converter))?;

    let mut warnings = Vec::new();
    if conversion.no_coupling {
        warnings.push("no coupling: g0 = 0, converter figures are degenerate".to_string());
    }
    for t in &coupling.dropped_terms {
        warnings.push(format!("semivectorial model drops {t}"));
    }
    for c in &conversion.checks {
        if c.flag != Flag::Pass {
            warnings.push(format!("coherence check `{}` = {:.3} ({:?})", c.name, c.ratio, c.flag).to_lowercase());
        }
    }

    Ok(RunReport {
        config: cfg.clone(),
        geometry: GeometrySummary {
            preset: cfg.geometry.preset,
            ring_radius_m: geometry.ring_radius,
            electrode_gap_m: geometry.electrode_gap(),
            f_phi: geometry.f_phi,
            resolution_per_m: cfg.resolution(),
            n_rho: f.grid.n_rho(),
            n_z: f.grid.n_z(),
        },
        mode: f.mode.summary(),
        potential: f.potential.summary(),
        capacitance_f: f.capacitance_f,
        coupling,
        converter_params: params,
        conversion,
        provenance: Provenance {
            program: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: cfg.content_hash(),
            grid_sha256: f.grid.fingerprint().to_string(),
        },
        warnings,
        units: units(),
    })
}

/// Published comparison values: label, g0/2π (kHz), C0, P single (W), P dual (W).
pub const REFERENCE_TABLE1: [(&str, f64, f64, f64, f64); 4] = [
    ("G1", 0.15, 8e-12, 7500.0, 200.0),
    ("G2", 0.75, 2e-10, 300.0, 8.0),
    ("G3", 12.0, 5e-8, 1.2, 0.03),
    ("G4", 50.0, 9e-7, 0.067, 0.0018),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Column {
    pub label: String,
    pub g0_over_2pi_khz: f64,
    pub c0: f64,
    pub p_single_mode_w: f64,
    pub p_dual_mode_w: f64,
}

impl Table1Column {
    pub fn from_params(label: impl Into<String>, params: &ConverterParams) -> Result<Self> {
        Ok(Self {
            label: label.into(),
            g0_over_2pi_khz: params.g0 / (2.0 * PI) / 1e3,
            c0: params.c0(),
            p_single_mode_w: pump_power_for_cooperativity(1.0, params, Topology::SingleMode)?,
            p_dual_mode_w: pump_power_for_cooperativity(1.0, params, Topology::DualMode)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1 {
    pub columns: Vec<Table1Column>,
}

/// Formats `x` with `digits` significant figures.
pub fn sig_figs(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-3..5).contains(&exp) {
        let s = format!("{:.*e}", digits.saturating_sub(1), x);
        return s;
    }
    let shift = digits as i32 - 1 - exp;
    if shift < 0 {
        let unit = 10f64.powi(-shift);
        return format!("{:.0}", (x / unit).round() * unit);
    }
    let decimals = shift as usize;
    let rounded = format!("{:.*}", decimals, x);
    // rounding may add a digit (9.96 → 10.0)
    let back: f64 = rounded.parse().unwrap_or(x);
    if back.abs() >= 10f64.powi(exp + 1) && decimals > 0 {
        format!("{:.*}", decimals - 1, x)
    } else {
        rounded
    }
}

impl Table1 {
    const ROWS: [&'static str; 4] = ["g0/2pi (kHz)", "C0", "P single mode (W)", "P dual mode (W)"];

    fn cells(&self) -> Vec<Vec<String>> {
        let col = |f: &dyn Fn(&Table1Column) -> f64| self.columns.iter().map(|c| sig_figs(f(c), 2)).collect::<Vec<_>>();
        vec![
            col(&|c| c.g0_over_2pi_khz),
            col(&|c| c.c0),
            col(&|c| c.p_single_mode_w),
            col(&|c| c.p_dual_mode_w),
        ]
    }

    pub fn to_text(&self) -> String {
        let cells = self.cells();
        let w0 = Self::ROWS.iter().map(|r| r.len()).max().unwrap_or(0);
        let widths: Vec<usize> = (0..self.columns.len())
            .map(|k| {
                cells
                    .iter()
                    .map(|r| r[k].len())
                    .chain([self.columns[k].label.len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = format!("{:<w0$}", "");
        for (c, w) in self.columns.iter().zip(&widths) {
            out += &format!("  {:>w$}", c.label);
        }
        out.push('\n');
        for (name, row) in Self::ROWS.iter().zip(&cells) {
            out += &format!("{name:<w0$}");
            for (v, w) in row.iter().zip(&widths) {
                out += &format!("  {v:>w$}");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["quantity".to_string()];
        header.extend(self.columns.iter().map(|c| c.label.clone()));
        w.write_record(&header).expect("in-memory write");
        for (name, row) in Self::ROWS.iter().zip(self.cells()) {
            let mut rec = vec![name.to_string()];
            rec.extend(row);
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Comparison table with one column per report.
pub fn emit_table1(reports: &[RunReport]) -> Result<Table1> {
    if reports.is_empty() {
        return Err(Error::Config("the table needs at least one report".into()));
    }
    let columns = reports
        .iter()
        .map(|r| Table1Column::from_params(r.label(), &r.converter_params))
        .collect::<Result<_>>()?;
    Ok(Table1 { columns })
}

/// Converter parameters of `cfg` at its target optical frequency with `g0`
/// imposed instead of computed.
pub fn injected_params(cfg: &RunConfig, g0_over_2pi_hz: f64) -> Result<ConverterParams> {
    cfg.converter
        .params(cfg.converter.omega_target(), 2.0 * PI * g0_over_2pi_hz)
}

/// Table from the reference coupling rates, bypassing the field solves.
pub fn injected_table1() -> Result<Table1> {
    let columns = REFERENCE_TABLE1
        .iter()
        .map(|(label, g0_khz, ..)| {
            let preset: Preset = label.parse()?;
            let p = injected_params(&RunConfig::preset(preset), g0_khz * 1e3)?;
            Table1Column::from_params(*label, &p)
        })
        .collect::<Result<_>>()?;
    Ok(Table1 { columns })
}

/// Reference table as published, for side-by-side printing.
pub fn reference_table1() -> Table1 {
    Table1 {
        columns: REFERENCE_TABLE1
            .iter()
            .map(|(l, g, c0, ps, pd)| Table1Column {
                label: l.to_string(),
                g0_over_2pi_khz: *g,
                c0: *c0,
                p_single_mode_w: *ps,
                p_dual_mode_w: *pd,
            })
            .collect(),
    }
}

/// Whether `value` agrees with a printed `reference` to within one unit of
/// the reference's leading digit.
pub fn within_leading_digit(value: f64, reference: f64) -> bool {
    let unit = 10f64.powf(reference.abs().log10().floor());
    (value - reference).abs() <= unit * (1.0 + 1e-9)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig_fig_formatting() {
        assert_eq!(sig_figs(0.0018, 2), "0.0018");
        assert_eq!(sig_figs(7.5e-12, 2), "7.5e-12");
        assert_eq!(sig_figs(222.0, 2), "220");
        assert_eq!(sig_figs(8216.0, 2), "8200");
        assert_eq!(sig_figs(8.88, 2), "8.9");
        assert_eq!(sig_figs(9.96, 2), "10");
        assert_eq!(sig_figs(0.0347, 2), "0.035");
    }

    #[test]
    fn injected_table_matches_reference() {
        let t = injected_table1().unwrap();
        for (c, r) in t.columns.iter().zip(REFERENCE_TABLE1) {
            assert!(within_leading_digit(c.c0, r.2), "{} C0 {}", c.label, c.c0);
            assert!(within_leading_digit(c.p_single_mode_w, r.3), "{} Ps {}", c.label, c.p_single_mode_w);
            assert!(within_leading_digit(c.p_dual_mode_w, r.4), "{} Pd {}", c.label, c.p_dual_mode_w);
        }
        let text = t.to_text();
        assert!(text.contains("G4") && text.contains("P dual mode (W)"));
        assert_eq!(t.to_csv().lines().count(), 5);
    }

    #[test]
    fn empty_table_is_an_error() {
        assert!(emit_table1(&[]).is_err());
    }

    #[test]
    fn under_resolved_config_fails_in_geometry_stage() {
        let mut cfg = RunConfig::preset(Preset::G3);
        cfg.solver.resolution_per_um = 0.01;
        let e = run_pipeline(&cfg).unwrap_err();
        assert_eq!(e.stage(), Some(Stage::Geometry));
        assert!(matches!(e, Error::Stage { ref source, .. } if matches!(**source, Error::UnderResolved { .. })));
    }
}
