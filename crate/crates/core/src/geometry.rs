//! Axisymmetric device cross-sections in the (ρ, z) half-plane.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::material::{MaterialLibrary, VACUUM};

/// Region role. The derived ordering is the tagging priority
/// (later variants win where rectangles overlap).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Vacuum,
    Substrate,
    Cladding,
    Core,
    Electrode,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::Vacuum => "vacuum",
            Role::Substrate => "substrate",
            Role::Cladding => "cladding",
            Role::Core => "core",
            Role::Electrode => "electrode",
        };
        f.write_str(s)
    }
}

/// Axis-aligned rectangle in (ρ, z), metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub rho_min: f64,
    pub rho_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Rect {
    pub fn new(rho_min: f64, rho_max: f64, z_min: f64, z_max: f64) -> Self {
        Self {
            rho_min,
            rho_max,
            z_min,
            z_max,
        }
    }

    pub fn centered(rho_c: f64, z_c: f64, width: f64, height: f64) -> Self {
        Self::new(
            rho_c - 0.5 * width,
            rho_c + 0.5 * width,
            z_c - 0.5 * height,
            z_c + 0.5 * height,
        )
    }

    pub fn width(&self) -> f64 {
        self.rho_max - self.rho_min
    }

    pub fn height(&self) -> f64 {
        self.z_max - self.z_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, rho: f64, z: f64) -> bool {
        rho > self.rho_min && rho < self.rho_max && z > self.z_min && z < self.z_max
    }

    /// Open-interior overlap (touching edges do not count).
    pub fn overlaps(&self, other: &Rect) -> bool {
        self.rho_min < other.rho_max
            && other.rho_min < self.rho_max
            && self.z_min < other.z_max
            && other.z_min < self.z_max
    }

    pub fn distance_to(&self, other: &Rect) -> f64 {
        let gap = |a0: f64, a1: f64, b0: f64, b1: f64| (b0 - a1).max(a0 - b1).max(0.0);
        let dr = gap(self.rho_min, self.rho_max, other.rho_min, other.rho_max);
        let dz = gap(self.z_min, self.z_max, other.z_min, other.z_max);
        dr.hypot(dz)
    }

    pub fn union(&self, other: &Rect) -> Rect {
        Rect::new(
            self.rho_min.min(other.rho_min),
            self.rho_max.max(other.rho_max),
            self.z_min.min(other.z_min),
            self.z_max.max(other.z_max),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub role: Role,
    pub rect: Rect,
    /// Material name; ignored for electrodes (perfect conductors).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSectionGeometry {
    /// Ring major radius R, m.
    pub ring_radius: f64,
    pub regions: Vec<Region>,
    /// Electrode region name → potential, V.
    pub electrode_potentials: BTreeMap<String, f64>,
    /// Fraction of the ring circumference covered by the electrodes.
    pub f_phi: f64,
    /// Material filling cells outside every region.
    pub background: String,
    /// Margin around the bounding box of all regions, m. `None` selects
    /// three times the largest feature.
    pub vacuum_margin: Option<f64>,
}

impl CrossSectionGeometry {
    pub fn validate(&self, materials: &MaterialLibrary) -> Result<()> {
        let bad = |s: String| Err(Error::InvalidGeometry(s));
        if !(self.ring_radius > 0.0 && self.ring_radius.is_finite()) {
            return bad(format!("ring radius must be positive, got {}", self.ring_radius));
        }
        if !(self.f_phi > 0.0 && self.f_phi <= 1.0) {
            return bad(format!("f_phi must lie in (0, 1], got {}", self.f_phi));
        }
        if let Some(m) = self.vacuum_margin {
            if !(m >= 0.0 && m.is_finite()) {
                return bad(format!("vacuum margin must be non-negative, got {m}"));
            }
        }
        materials.get(&self.background)?;
        if self.regions.is_empty() {
            return bad("no regions".into());
        }
        let mut names = std::collections::BTreeSet::new();
        for r in &self.regions {
            if !names.insert(r.name.as_str()) {
                return bad(format!("duplicate region name `{}`", r.name));
            }
            let rc = &r.rect;
            if [rc.rho_min, rc.rho_max, rc.z_min, rc.z_max]
                .iter()
                .any(|v| !v.is_finite())
            {
                return bad(format!("region `{}` has non-finite bounds", r.name));
            }
            if rc.width() <= 0.0 || rc.height() <= 0.0 {
                return Err(Error::DegenerateRegion(r.name.clone()));
            }
            if rc.rho_min < 0.0 {
                return bad(format!("region `{}` extends to ρ < 0", r.name));
            }
            match r.role {
                Role::Electrode => {
                    if !self.electrode_potentials.contains_key(&r.name) {
                        return bad(format!("electrode `{}` has no potential", r.name));
                    }
                }
                role => {
                    let name = r.material.as_deref().unwrap_or(VACUUM);
                    let m = materials.get(name)?;
                    if role == Role::Core && !m.has_pockels() {
                        return bad(format!(
                            "core region `{}` uses material `{name}` without a Pockels tensor",
                            r.name
                        ));
                    }
                }
            }
        }
        for name in self.electrode_potentials.keys() {
            match self.regions.iter().find(|r| &r.name == name) {
                Some(r) if r.role == Role::Electrode => {}
                _ => return bad(format!("potential given for unknown electrode `{name}`")),
            }
        }
        for e in self.regions.iter().filter(|r| r.role == Role::Electrode) {
            for c in self.regions.iter().filter(|r| r.role == Role::Core) {
                if e.rect.overlaps(&c.rect) {
                    return bad(format!(
                        "electrode `{}` overlaps core `{}`",
                        e.name, c.name
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn bounding_box(&self) -> Option<Rect> {
        self.regions
            .iter()
            .map(|r| r.rect)
            .reduce(|a, b| a.union(&b))
    }

    pub fn largest_feature(&self) -> f64 {
        self.regions
            .iter()
            .map(|r| r.rect.width().max(r.rect.height()))
            .fold(0.0, f64::max)
    }

    pub fn core_regions(&self) -> impl Iterator<Item = &Region> {
        self.regions.iter().filter(|r| r.role == Role::Core)
    }

    /// Union of all core rectangles.
    pub fn core_box(&self) -> Option<Rect> {
        self.core_regions().map(|r| r.rect).reduce(|a, b| a.union(&b))
    }

    /// Smallest distance between two electrodes held at different potentials.
    pub fn electrode_gap(&self) -> Option<f64> {
        let electrodes: Vec<_> = self
            .regions
            .iter()
            .filter(|r| r.role == Role::Electrode)
            .collect();
        let mut best: Option<f64> = None;
        for (i, a) in electrodes.iter().enumerate() {
            for b in &electrodes[i + 1..] {
                let (va, vb) = (
                    self.electrode_potentials.get(&a.name),
                    self.electrode_potentials.get(&b.name),
                );
                if va != vb {
                    let d = a.rect.distance_to(&b.rect);
                    best = Some(best.map_or(d, |x: f64| x.min(d)));
                }
            }
        }
        best
    }

    /// Difference between the highest and lowest electrode potential.
    pub fn applied_voltage(&self) -> f64 {
        let (lo, hi) = self
            .electrode_potentials
            .values()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(*v), hi.max(*v))
            });
        if lo.is_finite() {
            hi - lo
        } else {
            0.0
        }
    }

    /// Copy shifted radially so that the ring major radius becomes `radius`.
    pub fn with_ring_radius(&self, radius: f64) -> Self {
        let shift = radius - self.ring_radius;
        let mut g = self.clone();
        g.ring_radius = radius;
        for r in &mut g.regions {
            r.rect.rho_min += shift;
            r.rect.rho_max += shift;
        }
        g
    }
}

/// Reference geometries: G1 has electrodes beside the ring, G2–G4 above and
/// below it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    G1,
    G2,
    G3,
    G4,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::G1, Preset::G2, Preset::G3, Preset::G4];

    pub fn side_electrodes(self) -> bool {
        self == Preset::G1
    }

    /// Electrode gap of the reference design, m.
    pub fn default_gap(self) -> f64 {
        match self {
            Preset::G1 => 1.5e-6,
            Preset::G2 => 5.0e-6,
            Preset::G3 | Preset::G4 => 2.2e-6,
        }
    }

    /// G4 uses the axially polarised optical mode, the others the radial one.
    pub fn default_polarization(self) -> crate::optics::Polarization {
        match self {
            Preset::G4 => crate::optics::Polarization::Te,
            _ => crate::optics::Polarization::Tm,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "G1" => Ok(Preset::G1),
            "G2" => Ok(Preset::G2),
            "G3" => Ok(Preset::G3),
            "G4" => Ok(Preset::G4),
            _ => Err(Error::UnknownPreset(s.to_string())),
        }
    }
}

/// Dimensions of the preset cross-sections. The reference designs do not
/// publish these, so the defaults are a documented choice: a 1.0 × 0.6 µm
/// LiNbO₃ ring core of 20 µm radius embedded in silica, 3 µm wide and
/// 0.4 µm thick electrodes, 1 µm of silica around everything.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetOverrides {
    pub ring_radius: Option<f64>,
    pub electrode_gap: Option<f64>,
    pub core_width: Option<f64>,
    pub core_height: Option<f64>,
    pub electrode_width: Option<f64>,
    pub electrode_thickness: Option<f64>,
    pub cladding_padding: Option<f64>,
    pub f_phi: Option<f64>,
    pub drive_voltage: Option<f64>,
    pub vacuum_margin: Option<f64>,
}

pub const CORE_MATERIAL: &str = "lithium_niobate";
pub const CLADDING_MATERIAL: &str = "silica";

pub fn geometry_from_preset(preset: Preset, o: &PresetOverrides) -> Result<CrossSectionGeometry> {
    let radius = o.ring_radius.unwrap_or(20e-6);
    let gap = o.electrode_gap.unwrap_or(preset.default_gap());
    let core_w = o.core_width.unwrap_or(1.0e-6);
    let core_h = o.core_height.unwrap_or(0.6e-6);
    let el_w = o.electrode_width.unwrap_or(3.0e-6);
    let el_t = o.electrode_thickness.unwrap_or(0.4e-6);
    let pad = o.cladding_padding.unwrap_or(1.0e-6);
    let volts = o.drive_voltage.unwrap_or(1.0);

    let core = Rect::centered(radius, 0.0, core_w, core_h);
    let (signal, ground) = if preset.side_electrodes() {
        if gap <= core_w {
            return Err(Error::InvalidGeometry(format!(
                "side-electrode gap {gap:e} m does not clear the {core_w:e} m wide core"
            )));
        }
        // flush with the bottom of the ring, on the same film
        let z0 = -0.5 * core_h;
        (
            Rect::new(radius + 0.5 * gap, radius + 0.5 * gap + el_w, z0, z0 + el_t),
            Rect::new(radius - 0.5 * gap - el_w, radius - 0.5 * gap, z0, z0 + el_t),
        )
    } else {
        if gap <= core_h {
            return Err(Error::InvalidGeometry(format!(
                "electrode gap {gap:e} m does not clear the {core_h:e} m tall core"
            )));
        }
        (
            Rect::new(radius - 0.5 * el_w, radius + 0.5 * el_w, 0.5 * gap, 0.5 * gap + el_t),
            Rect::new(radius - 0.5 * el_w, radius + 0.5 * el_w, -0.5 * gap - el_t, -0.5 * gap),
        )
    };
    let inner = core.union(&signal).union(&ground);
    let cladding = Rect::new(
        (inner.rho_min - pad).max(0.0),
        inner.rho_max + pad,
        inner.z_min - pad,
        inner.z_max + pad,
    );

    let regions = vec![
        Region {
            name: "cladding".into(),
            role: Role::Cladding,
            rect: cladding,
            material: Some(CLADDING_MATERIAL.into()),
        },
        Region {
            name: "ring".into(),
            role: Role::Core,
            rect: core,
            material: Some(CORE_MATERIAL.into()),
        },
        Region {
            name: "signal".into(),
            role: Role::Electrode,
            rect: signal,
            material: None,
        },
        Region {
            name: "ground".into(),
            role: Role::Electrode,
            rect: ground,
            material: None,
        },
    ];
    let electrode_potentials = BTreeMap::from([("signal".to_string(), volts), ("ground".to_string(), 0.0)]);
    Ok(CrossSectionGeometry {
        ring_radius: radius,
        regions,
        electrode_potentials,
        f_phi: o.f_phi.unwrap_or(1.0),
        background: VACUUM.into(),
        vacuum_margin: o.vacuum_margin,
    })
}
