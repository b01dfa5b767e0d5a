//! Run configuration: TOML with explicit units in every dimensional key.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::converter::{ConverterParams, Pump, Thresholds, Topology};
use crate::eigen::EigenSettings;
use crate::electrostatics::SolverSettings;
use crate::error::{Error, Result};
use crate::geometry::{geometry_from_preset, CrossSectionGeometry, Preset, PresetOverrides, Rect, Region, Role};
use crate::material::{MaterialLibrary, MaterialSpec, VACUUM};
use crate::optics::{OpticalSettings, Polarization};
use crate::sweep::SweepSpec;

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "EOCONV_OUTPUT_DIR";

const UM: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Extra material library file, resolved relative to the config file and
    /// merged into `material` on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material_library: Option<PathBuf>,
    /// Materials added to or replacing the built-in library.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub material: BTreeMap<String, MaterialSpec>,
    pub geometry: GeometrySection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub converter: ConverterSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ring_radius_um: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub electrode_gap_um: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub core_width_um: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub core_height_um: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub electrode_width_um: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub electrode_thickness_um: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cladding_padding_um: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vacuum_margin_um: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_phi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive_voltage_v: Option<f64>,
    /// Optical polarization; presets pick their reference choice.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polarization: Option<Polarization>,
    /// Free-form cross-section used instead of a preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomGeometry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomGeometry {
    pub ring_radius_um: f64,
    #[serde(default = "default_background")]
    pub background: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vacuum_margin_um: Option<f64>,
    pub regions: Vec<CustomRegion>,
}

fn default_background() -> String {
    VACUUM.into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomRegion {
    pub name: String,
    pub role: Role,
    pub rho_min_um: f64,
    pub rho_max_um: f64,
    pub z_min_um: f64,
    pub z_max_um: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<String>,
    /// Electrode potential.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential_v: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub resolution_per_um: f64,
    pub electrostatic_tolerance: f64,
    pub electrostatic_max_iterations: usize,
    pub n_phi: usize,
    /// Share of the microwave energy stored in the electrostatic field.
    pub energy_fraction: f64,
    pub window_margin_um: f64,
    pub confinement_db: f64,
    pub eigen_tolerance: f64,
    pub eigen_max_iterations: usize,
    pub eigen_guard_vectors: usize,
    /// Starting azimuthal order for the mode search.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub azimuthal_order: Option<u32>,
}

impl Default for SolverSection {
    fn default() -> Self {
        let e = EigenSettings::default();
        let s = SolverSettings::default();
        let o = OpticalSettings::default();
        Self {
            resolution_per_um: 25.0,
            electrostatic_tolerance: s.tolerance,
            electrostatic_max_iterations: s.max_iterations,
            n_phi: 64,
            energy_fraction: 0.5,
            window_margin_um: o.window_margin / UM,
            confinement_db: o.confinement_db,
            eigen_tolerance: e.tolerance,
            eigen_max_iterations: e.max_iterations,
            eigen_guard_vectors: e.guard_vectors,
            azimuthal_order: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConverterSection {
    /// Target optical resonance.
    #[serde(default = "d_opt")]
    pub optical_frequency_thz: f64,
    #[serde(default = "d_mw")]
    pub microwave_frequency_ghz: f64,
    #[serde(default = "d_qa")]
    pub q_a: f64,
    #[serde(default = "d_qb")]
    pub q_b: f64,
    /// `κ_a,ex / κ_a`.
    #[serde(default = "one")]
    pub optical_coupling_ratio: f64,
    /// `κ_b,ex / κ_b`.
    #[serde(default = "one")]
    pub microwave_coupling_ratio: f64,
    #[serde(default = "d_topology")]
    pub topology: Topology,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pump_power_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pump_photon_number: Option<f64>,
    #[serde(default)]
    pub thermal_occupation: f64,
    #[serde(default = "d_points")]
    pub curve_points: usize,
    #[serde(default = "d_pass")]
    pub pass_ratio: f64,
    #[serde(default = "d_warn")]
    pub warn_ratio: f64,
}

fn d_opt() -> f64 {
    200.0
}
fn d_mw() -> f64 {
    6.0
}
fn d_qa() -> f64 {
    1e5
}
fn d_qb() -> f64 {
    1e3
}
fn one() -> f64 {
    1.0
}
fn d_topology() -> Topology {
    Topology::DualMode
}
fn d_points() -> usize {
    201
}
fn d_pass() -> f64 {
    Thresholds::default().pass
}
fn d_warn() -> f64 {
    Thresholds::default().warn
}

impl Default for ConverterSection {
    fn default() -> Self {
        Self {
            optical_frequency_thz: d_opt(),
            microwave_frequency_ghz: d_mw(),
            q_a: d_qa(),
            q_b: d_qb(),
            optical_coupling_ratio: 1.0,
            microwave_coupling_ratio: 1.0,
            topology: d_topology(),
            pump_power_w: Some(1e-3),
            pump_photon_number: None,
            thermal_occupation: 0.0,
            curve_points: d_points(),
            pass_ratio: d_pass(),
            warn_ratio: d_warn(),
        }
    }
}

impl ConverterSection {
    pub fn omega_target(&self) -> f64 {
        2.0 * PI * self.optical_frequency_thz * 1e12
    }

    pub fn omega_b(&self) -> f64 {
        2.0 * PI * self.microwave_frequency_ghz * 1e9
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            pass: self.pass_ratio,
            warn: self.warn_ratio,
        }
    }

    pub fn pump(&self) -> Result<Pump> {
        match (self.pump_power_w, self.pump_photon_number) {
            (Some(p), None) => Ok(Pump::Power(p)),
            (None, Some(n)) => Ok(Pump::PhotonNumber(n)),
            _ => Err(Error::Config(
                "converter: give exactly one of `pump_power_w` and `pump_photon_number`".into(),
            )),
        }
    }

    /// Lumped parameters for an optical resonance at `omega_a` and coupling `g0`.
    pub fn params(&self, omega_a: f64, g0: f64) -> Result<ConverterParams> {
        let ka = omega_a / self.q_a;
        let kb = self.omega_b() / self.q_b;
        let (ea, eb) = (self.optical_coupling_ratio, self.microwave_coupling_ratio);
        Ok(ConverterParams {
            omega_a,
            omega_b: self.omega_b(),
            kappa_a_in: ka * (1.0 - ea),
            kappa_a_ex: ka * ea,
            kappa_b_in: kb * (1.0 - eb),
            kappa_b_ex: kb * eb,
            g0,
            topology: self.topology,
            pump: self.pump()?,
            n_th: self.thermal_occupation,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Relative paths are taken from the working directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    pub formats: Vec<Format>,
    /// Also write the potential and mode fields.
    pub persist_fields: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: None,
            formats: vec![Format::Json],
            persist_fields: false,
        }
    }
}

fn cfg_err(location: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{location}: {msg}"))
}

fn positive(location: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(cfg_err(location, format!("must be positive, got {v}")))
    }
}

fn fraction(location: &str, v: f64, allow_zero: bool) -> Result<()> {
    let ok = if allow_zero { v >= 0.0 } else { v > 0.0 } && v <= 1.0;
    if ok {
        Ok(())
    } else {
        Err(cfg_err(location, format!("must lie in {}0, 1], got {v}", if allow_zero { "[" } else { "(" })))
    }
}

impl RunConfig {
    /// Default configuration for a preset.
    pub fn preset(preset: Preset) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            material_library: None,
            material: BTreeMap::new(),
            geometry: GeometrySection {
                preset: Some(preset),
                ..Default::default()
            },
            solver: SolverSection::default(),
            converter: ConverterSection::default(),
            output: OutputSection::default(),
            sweep: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Reads, resolves and validates a configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read `{}`: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })?;
        cfg.resolve_library(path.parent().unwrap_or(Path::new(".")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Inlines the external material library so the config is self-contained.
    pub fn resolve_library(&mut self, base: &Path) -> Result<()> {
        if let Some(rel) = self.material_library.take() {
            let path = base.join(&rel);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::Config(format!("cannot read material library `{}`: {e}", path.display())))?;
            let specs: BTreeMap<String, MaterialSpec> = toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            for (k, v) in specs {
                self.material.entry(k).or_insert(v);
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(cfg_err(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        if self.material_library.is_some() {
            return Err(cfg_err("material_library", "unresolved; load the config from a file"));
        }
        let g = &self.geometry;
        match (&g.preset, &g.custom) {
            (Some(_), Some(_)) => return Err(cfg_err("geometry", "`preset` and `custom` are exclusive")),
            (None, None) => return Err(cfg_err("geometry", "missing `preset` or `custom`")),
            _ => {}
        }
        for (k, v) in [
            ("geometry.ring_radius_um", g.ring_radius_um),
            ("geometry.electrode_gap_um", g.electrode_gap_um),
            ("geometry.core_width_um", g.core_width_um),
            ("geometry.core_height_um", g.core_height_um),
            ("geometry.electrode_width_um", g.electrode_width_um),
            ("geometry.electrode_thickness_um", g.electrode_thickness_um),
        ] {
            if let Some(v) = v {
                positive(k, v)?;
            }
        }
        if let Some(v) = g.cladding_padding_um {
            if !(v >= 0.0) {
                return Err(cfg_err("geometry.cladding_padding_um", "must be non-negative"));
            }
        }
        if let Some(f) = g.f_phi {
            fraction("geometry.f_phi", f, false)?;
        }
        let s = &self.solver;
        positive("solver.resolution_per_um", s.resolution_per_um)?;
        positive("solver.electrostatic_tolerance", s.electrostatic_tolerance)?;
        positive("solver.eigen_tolerance", s.eigen_tolerance)?;
        positive("solver.window_margin_um", s.window_margin_um)?;
        positive("solver.confinement_db", s.confinement_db)?;
        fraction("solver.energy_fraction", s.energy_fraction, false)?;
        if s.n_phi < 4 {
            return Err(cfg_err("solver.n_phi", "need at least 4 azimuthal samples"));
        }
        let c = &self.converter;
        positive("converter.optical_frequency_thz", c.optical_frequency_thz)?;
        positive("converter.microwave_frequency_ghz", c.microwave_frequency_ghz)?;
        positive("converter.q_a", c.q_a)?;
        positive("converter.q_b", c.q_b)?;
        fraction("converter.optical_coupling_ratio", c.optical_coupling_ratio, true)?;
        fraction("converter.microwave_coupling_ratio", c.microwave_coupling_ratio, true)?;
        if !(c.thermal_occupation >= 0.0) {
            return Err(cfg_err("converter.thermal_occupation", "must be non-negative"));
        }
        match c.pump()? {
            Pump::Power(v) | Pump::PhotonNumber(v) if !(v >= 0.0 && v.is_finite()) => {
                return Err(cfg_err("converter.pump", format!("must be non-negative, got {v}")))
            }
            _ => {}
        }
        if !(c.pass_ratio >= c.warn_ratio && c.warn_ratio > 0.0) {
            return Err(cfg_err("converter", "need pass_ratio >= warn_ratio > 0"));
        }
        if let Some(sw) = &self.sweep {
            sw.validate()?;
        }
        Ok(())
    }

    pub fn materials(&self) -> Result<MaterialLibrary> {
        let mut specs = MaterialLibrary::builtin().specs();
        specs.extend(self.material.iter().map(|(k, v)| (k.clone(), v.clone())));
        MaterialLibrary::from_specs(&specs)
    }

    pub fn polarization(&self) -> Polarization {
        self.geometry
            .polarization
            .or(self.geometry.preset.map(Preset::default_polarization))
            .unwrap_or(Polarization::Tm)
    }

    pub fn build_geometry(&self) -> Result<CrossSectionGeometry> {
        let g = &self.geometry;
        let um = |v: Option<f64>| v.map(|x| x * UM);
        if let Some(custom) = &g.custom {
            let mut potentials = BTreeMap::new();
            let regions = custom
                .regions
                .iter()
                .map(|r| {
                    if r.role == Role::Electrode {
                        potentials.insert(r.name.clone(), r.potential_v.unwrap_or(0.0));
                    }
                    Region {
                        name: r.name.clone(),
                        role: r.role,
                        rect: Rect::new(r.rho_min_um * UM, r.rho_max_um * UM, r.z_min_um * UM, r.z_max_um * UM),
                        material: r.material.clone(),
                    }
                })
                .collect();
            return Ok(CrossSectionGeometry {
                ring_radius: custom.ring_radius_um * UM,
                regions,
                electrode_potentials: potentials,
                f_phi: g.f_phi.unwrap_or(1.0),
                background: custom.background.clone(),
                vacuum_margin: um(custom.vacuum_margin_um),
            });
        }
        let preset = g.preset.ok_or_else(|| cfg_err("geometry", "missing `preset`"))?;
        let o = PresetOverrides {
            ring_radius: um(g.ring_radius_um),
            electrode_gap: um(g.electrode_gap_um),
            core_width: um(g.core_width_um),
            core_height: um(g.core_height_um),
            electrode_width: um(g.electrode_width_um),
            electrode_thickness: um(g.electrode_thickness_um),
            cladding_padding: um(g.cladding_padding_um),
            f_phi: g.f_phi,
            drive_voltage: g.drive_voltage_v,
            vacuum_margin: um(g.vacuum_margin_um),
        };
        geometry_from_preset(preset, &o)
    }

    pub fn resolution(&self) -> f64 {
        self.solver.resolution_per_um / UM
    }

    pub fn electrostatic_settings(&self) -> SolverSettings {
        SolverSettings {
            tolerance: self.solver.electrostatic_tolerance,
            max_iterations: self.solver.electrostatic_max_iterations,
        }
    }

    pub fn optical_settings(&self) -> OpticalSettings {
        OpticalSettings {
            window_margin: self.solver.window_margin_um * UM,
            confinement_db: self.solver.confinement_db,
            eigen: EigenSettings {
                tolerance: self.solver.eigen_tolerance,
                max_iterations: self.solver.eigen_max_iterations,
                guard_vectors: self.solver.eigen_guard_vectors,
            },
        }
    }

    /// Sets a numeric parameter addressed by `section.key`.
    pub fn with_parameter(&self, path: &str, value: f64) -> Result<Self> {
        let mut c = self.clone();
        let g = &mut c.geometry;
        let custom_only = |name: &str| cfg_err(path, format!("`{name}` needs a preset geometry"));
        match path {
            "geometry.ring_radius_um" => {
                if let Some(custom) = &mut g.custom {
                    let shift = value - custom.ring_radius_um;
                    custom.ring_radius_um = value;
                    for r in &mut custom.regions {
                        r.rho_min_um += shift;
                        r.rho_max_um += shift;
                    }
                } else {
                    g.ring_radius_um = Some(value);
                }
            }
            "geometry.electrode_gap_um" if g.custom.is_none() => g.electrode_gap_um = Some(value),
            "geometry.core_width_um" if g.custom.is_none() => g.core_width_um = Some(value),
            "geometry.core_height_um" if g.custom.is_none() => g.core_height_um = Some(value),
            "geometry.electrode_width_um" if g.custom.is_none() => g.electrode_width_um = Some(value),
            "geometry.electrode_thickness_um" if g.custom.is_none() => g.electrode_thickness_um = Some(value),
            "geometry.drive_voltage_v" if g.custom.is_none() => g.drive_voltage_v = Some(value),
            p @ ("geometry.electrode_gap_um"
            | "geometry.core_width_um"
            | "geometry.core_height_um"
            | "geometry.electrode_width_um"
            | "geometry.electrode_thickness_um"
            | "geometry.drive_voltage_v") => return Err(custom_only(p)),
            "geometry.f_phi" => g.f_phi = Some(value),
            "solver.resolution_per_um" => c.solver.resolution_per_um = value,
            "converter.q_a" => c.converter.q_a = value,
            "converter.q_b" => c.converter.q_b = value,
            "converter.optical_coupling_ratio" => c.converter.optical_coupling_ratio = value,
            "converter.microwave_coupling_ratio" => c.converter.microwave_coupling_ratio = value,
            "converter.thermal_occupation" => c.converter.thermal_occupation = value,
            "converter.microwave_frequency_ghz" => c.converter.microwave_frequency_ghz = value,
            "converter.pump_power_w" => {
                c.converter.pump_power_w = Some(value);
                c.converter.pump_photon_number = None;
            }
            "converter.pump_photon_number" => {
                c.converter.pump_photon_number = Some(value);
                c.converter.pump_power_w = None;
            }
            _ => return Err(cfg_err(path, "unknown or non-sweepable parameter")),
        }
        c.validate()?;
        Ok(c)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Every numeric key accepted by [`RunConfig::with_parameter`].
pub const SWEEPABLE: &[&str] = &[
    "geometry.ring_radius_um",
    "geometry.electrode_gap_um",
    "geometry.core_width_um",
    "geometry.core_height_um",
    "geometry.electrode_width_um",
    "geometry.electrode_thickness_um",
    "geometry.drive_voltage_v",
    "geometry.f_phi",
    "solver.resolution_per_um",
    "converter.q_a",
    "converter.q_b",
    "converter.optical_coupling_ratio",
    "converter.microwave_coupling_ratio",
    "converter.thermal_occupation",
    "converter.microwave_frequency_ghz",
    "converter.pump_power_w",
    "converter.pump_photon_number",
];
