//! Conforming tensor-product grid over the device cross-section.
//!
//! Every region edge lies on a grid line, so cells carry exactly one region
//! tag without staircasing. Inside the bounding box of the regions each
//! interval between consecutive edges is split uniformly at the requested
//! resolution; the vacuum margin outside it is graded geometrically.

use std::sync::Arc;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{CrossSectionGeometry, Role};
use crate::material::{Material, MaterialLibrary};

pub const MIN_CELLS_PER_FEATURE: usize = 8;
const MARGIN_GROWTH: f64 = 1.25;

#[derive(Debug, Clone)]
pub struct StructuredGrid {
    pub geometry: CrossSectionGeometry,
    /// Cells per metre inside the device box.
    pub resolution: f64,
    pub rho_edges: Vec<f64>,
    pub z_edges: Vec<f64>,
    pub rho: Vec<f64>,
    pub z: Vec<f64>,
    pub h_rho: Vec<f64>,
    pub h_z: Vec<f64>,
    /// Index into `geometry.regions`, `None` for background cells.
    pub cell_region: Vec<Option<usize>>,
    pub cell_role: Vec<Role>,
    /// Index into `materials`; `None` for electrode cells.
    pub cell_material: Vec<Option<usize>>,
    /// Dirichlet potential for electrode cells.
    pub cell_potential: Vec<Option<f64>>,
    pub materials: Vec<Material>,
    fingerprint: String,
}

/// Cell counts and tagged area per role.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct TagSummary {
    pub role: Role,
    pub cells: usize,
    pub area_m2: f64,
}

impl StructuredGrid {
    pub fn n_rho(&self) -> usize {
        self.rho.len()
    }

    pub fn n_z(&self) -> usize {
        self.z.len()
    }

    pub fn n_cells(&self) -> usize {
        self.rho.len() * self.z.len()
    }

    /// Linear index of cell `(i, j)` (ρ-major).
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.z.len() + j
    }

    #[inline]
    pub fn cell_area(&self, i: usize, j: usize) -> f64 {
        self.h_rho[i] * self.h_z[j]
    }

    pub fn material_of(&self, cell: usize) -> Option<&Material> {
        self.cell_material[cell].map(|m| &self.materials[m])
    }

    /// Content hash of the discretization (edges, tags, materials).
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn tag_summary(&self) -> Vec<TagSummary> {
        let roles = [
            Role::Vacuum,
            Role::Substrate,
            Role::Cladding,
            Role::Core,
            Role::Electrode,
        ];
        roles
            .iter()
            .map(|&role| {
                let mut cells = 0;
                let mut area = 0.0;
                for i in 0..self.n_rho() {
                    for j in 0..self.n_z() {
                        if self.cell_role[self.idx(i, j)] == role {
                            cells += 1;
                            area += self.cell_area(i, j);
                        }
                    }
                }
                TagSummary {
                    role,
                    cells,
                    area_m2: area,
                }
            })
            .collect()
    }

    /// Index range `[lo, hi)` of cells whose centres lie within `[a, b]`.
    pub fn rho_range(&self, a: f64, b: f64) -> (usize, usize) {
        index_range(&self.rho, a, b)
    }

    pub fn z_range(&self, a: f64, b: f64) -> (usize, usize) {
        index_range(&self.z, a, b)
    }
}

fn index_range(centers: &[f64], a: f64, b: f64) -> (usize, usize) {
    let lo = centers.partition_point(|&c| c < a);
    let hi = centers.partition_point(|&c| c <= b);
    (lo, hi.max(lo))
}

/// Axis edges: uniform subdivision between breakpoints, graded margins.
fn axis_edges(breaks: &[f64], resolution: f64, margin_lo: f64, margin_hi: f64) -> Vec<f64> {
    let mut inner = vec![breaks[0]];
    for w in breaks.windows(2) {
        let len = w[1] - w[0];
        let n = ((len * resolution) - 1e-6).ceil().max(1.0) as usize;
        for k in 1..=n {
            inner.push(if k == n {
                w[1]
            } else {
                w[0] + len * k as f64 / n as f64
            });
        }
    }
    let h_first = inner[1] - inner[0];
    let h_last = inner[inner.len() - 1] - inner[inner.len() - 2];
    let lo = graded(h_first, margin_lo);
    let hi = graded(h_last, margin_hi);

    let mut edges = Vec::with_capacity(inner.len() + lo.len() + hi.len());
    let mut x = inner[0];
    let mut lo_edges = Vec::with_capacity(lo.len());
    for h in &lo {
        x -= h;
        lo_edges.push(x);
    }
    if let Some(last) = lo_edges.last_mut() {
        *last = inner[0] - margin_lo;
    }
    edges.extend(lo_edges.iter().rev());
    edges.extend_from_slice(&inner);
    let mut x = *inner.last().unwrap();
    let top = x + margin_hi;
    for (k, h) in hi.iter().enumerate() {
        x += h;
        edges.push(if k + 1 == hi.len() { top } else { x });
    }
    edges
}

/// Cell sizes growing geometrically from `h0` that sum exactly to `total`.
fn graded(h0: f64, total: f64) -> Vec<f64> {
    if total <= 0.0 {
        return Vec::new();
    }
    let mut sizes = Vec::new();
    let mut h = h0 * MARGIN_GROWTH;
    let mut sum = 0.0;
    while sum + h < total {
        sizes.push(h);
        sum += h;
        h *= MARGIN_GROWTH;
    }
    let rest = total - sum;
    match sizes.last_mut() {
        // merge a sliver into the previous cell
        Some(last) if rest < 0.5 * *last => *last += rest,
        _ => sizes.push(rest),
    }
    sizes
}

fn breakpoints(values: impl Iterator<Item = f64>, scale: f64) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * scale);
    v
}

/// Discretizes `geometry` with `resolution` cells per metre.
pub fn build_grid(
    geometry: &CrossSectionGeometry,
    materials: &MaterialLibrary,
    resolution: f64,
) -> Result<Arc<StructuredGrid>> {
    geometry.validate(materials)?;
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::InvalidGeometry(format!(
            "resolution must be positive, got {resolution}"
        )));
    }
    // smallest feature first so the error names the worst offender
    let mut extents: Vec<(f64, &str)> = geometry
        .regions
        .iter()
        .map(|r| (r.rect.width().min(r.rect.height()), r.name.as_str()))
        .collect();
    extents.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(&(extent, name)) = extents.first() {
        let cells = extent * resolution;
        if cells < MIN_CELLS_PER_FEATURE as f64 - 1e-6 {
            return Err(Error::UnderResolved {
                region: name.to_string(),
                cells,
                extent,
                required: MIN_CELLS_PER_FEATURE,
            });
        }
    }

    let bbox = geometry.bounding_box().expect("validated geometry has regions");
    let scale = bbox.width().max(bbox.height()).max(bbox.rho_max);
    let margin = geometry
        .vacuum_margin
        .unwrap_or(3.0 * geometry.largest_feature());

    let rho_breaks = breakpoints(
        geometry
            .regions
            .iter()
            .flat_map(|r| [r.rect.rho_min, r.rect.rho_max]),
        scale,
    );
    let z_breaks = breakpoints(
        geometry.regions.iter().flat_map(|r| [r.rect.z_min, r.rect.z_max]),
        scale,
    );
    let rho_edges = axis_edges(&rho_breaks, resolution, margin.min(bbox.rho_min), margin);
    let z_edges = axis_edges(&z_breaks, resolution, margin, margin);

    let centers = |e: &[f64]| e.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect::<Vec<_>>();
    let widths = |e: &[f64]| e.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>();
    let rho = centers(&rho_edges);
    let z = centers(&z_edges);
    let h_rho = widths(&rho_edges);
    let h_z = widths(&z_edges);

    let mut used: Vec<Material> = Vec::new();
    let mut material_index = |name: &str| -> Result<usize> {
        if let Some(k) = used.iter().position(|m| m.name == name) {
            return Ok(k);
        }
        used.push(materials.get(name)?.clone());
        Ok(used.len() - 1)
    };
    let background = material_index(&geometry.background)?;

    let n = rho.len() * z.len();
    let mut cell_region = vec![None; n];
    let mut cell_role = vec![Role::Vacuum; n];
    let mut cell_material = vec![Some(background); n];
    let mut cell_potential = vec![None; n];
    for (i, &r) in rho.iter().enumerate() {
        for (j, &zz) in z.iter().enumerate() {
            let c = i * z.len() + j;
            let mut best: Option<usize> = None;
            for (k, reg) in geometry.regions.iter().enumerate() {
                if reg.rect.contains(r, zz)
                    && best.is_none_or(|b| reg.role > geometry.regions[b].role)
                {
                    best = Some(k);
                }
            }
            if let Some(k) = best {
                let reg = &geometry.regions[k];
                cell_region[c] = Some(k);
                cell_role[c] = reg.role;
                if reg.role == Role::Electrode {
                    cell_material[c] = None;
                    cell_potential[c] = geometry.electrode_potentials.get(&reg.name).copied();
                } else {
                    let name = reg.material.as_deref().unwrap_or(crate::material::VACUUM);
                    cell_material[c] = Some(material_index(name)?);
                }
            }
        }
    }

    let mut hasher = Sha256::new();
    for v in rho_edges.iter().chain(&z_edges) {
        hasher.update(v.to_le_bytes());
    }
    for (role, mat) in cell_role.iter().zip(&cell_material) {
        hasher.update([*role as u8, mat.map_or(255, |m| m as u8)]);
    }
    for p in cell_potential.iter().flatten() {
        hasher.update(p.to_le_bytes());
    }
    for m in &used {
        hasher.update(m.name.as_bytes());
        for v in m.eps_optical.iter().chain(m.eps_microwave.iter()) {
            hasher.update(v.to_le_bytes());
        }
        for v in m.r_contracted.iter().flatten() {
            hasher.update(v.to_le_bytes());
        }
    }
    hasher.update(geometry.ring_radius.to_le_bytes());
    hasher.update(geometry.f_phi.to_le_bytes());
    let fingerprint = hex::encode(hasher.finalize());

    Ok(Arc::new(StructuredGrid {
        geometry: geometry.clone(),
        resolution,
        rho_edges,
        z_edges,
        rho,
        z,
        h_rho,
        h_z,
        cell_region,
        cell_role,
        cell_material,
        cell_potential,
        materials: used,
        fingerprint,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{geometry_from_preset, Preset, PresetOverrides, Rect, Region};
    use std::collections::BTreeMap;

    fn single_core(margin: Option<f64>) -> CrossSectionGeometry {
        CrossSectionGeometry {
            ring_radius: 10e-6,
            regions: vec![Region {
                name: "core".into(),
                role: Role::Core,
                rect: Rect::new(9.5e-6, 10.5e-6, -0.5e-6, 0.5e-6),
                material: Some("lithium_niobate".into()),
            }],
            electrode_potentials: BTreeMap::new(),
            f_phi: 1.0,
            background: "vacuum".into(),
            vacuum_margin: margin,
        }
    }

    #[test]
    fn single_core_block() {
        let g = build_grid(&single_core(None), &MaterialLibrary::builtin(), 10e6).unwrap();
        let core = g.tag_summary().into_iter().find(|t| t.role == Role::Core).unwrap();
        assert_eq!(core.cells, 100);
        assert!((core.area_m2 - 1e-12).abs() < 1e-24);
        // default margin is three times the largest feature
        assert!((g.rho_edges[0] - 6.5e-6).abs() < 1e-15);
        assert!((g.z_edges.last().unwrap() - 3.5e-6).abs() < 1e-15);
        assert!(g.h_rho.iter().chain(&g.h_z).all(|h| *h > 0.0));
    }

    #[test]
    fn under_resolved_names_region() {
        let err = build_grid(&single_core(None), &MaterialLibrary::builtin(), 1e6).unwrap_err();
        match err {
            Error::UnderResolved { region, .. } => assert_eq!(region, "core"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn degenerate_region() {
        let mut g = single_core(None);
        g.regions[0].rect.z_max = g.regions[0].rect.z_min;
        assert!(matches!(
            build_grid(&g, &MaterialLibrary::builtin(), 10e6),
            Err(Error::DegenerateRegion(_))
        ));
    }

    #[test]
    fn overlapping_electrode_and_core_rejected() {
        let mut g = single_core(None);
        g.regions.push(Region {
            name: "pad".into(),
            role: Role::Electrode,
            rect: Rect::new(10.0e-6, 11.0e-6, 0.0, 1.0e-6),
            material: None,
        });
        g.electrode_potentials.insert("pad".into(), 1.0);
        assert!(build_grid(&g, &MaterialLibrary::builtin(), 10e6).is_err());
    }

    #[test]
    fn g3_stack_areas_match_geometry() {
        let geo = geometry_from_preset(Preset::G3, &PresetOverrides::default()).unwrap();
        let g = build_grid(&geo, &MaterialLibrary::builtin(), 20e6).unwrap();
        let tags = g.tag_summary();
        let area = |role| tags.iter().find(|t| t.role == role).unwrap().area_m2;
        let rect = |name: &str| geo.regions.iter().find(|r| r.name == name).unwrap().rect;
        let electrodes = rect("signal").area() + rect("ground").area();
        let core = rect("ring").area();
        let cladding = rect("cladding").area() - core - electrodes;
        // one boundary layer of cells around each region perimeter
        let h = 1.0 / 20e6;
        let tol = |r: Rect| 2.0 * (r.width() + r.height()) * h;
        assert!((area(Role::Core) - core).abs() <= tol(rect("ring")));
        assert!((area(Role::Electrode) - electrodes).abs() <= tol(rect("signal")) + tol(rect("ground")));
        assert!((area(Role::Cladding) - cladding).abs() <= tol(rect("cladding")));
        // conforming edges make the tagging exact
        assert!((area(Role::Core) - core).abs() < 1e-9 * core);
    }

    #[test]
    fn refinement_keeps_area_fractions() {
        let geo = geometry_from_preset(Preset::G1, &PresetOverrides::default()).unwrap();
        let lib = MaterialLibrary::builtin();
        let a = build_grid(&geo, &lib, 20e6).unwrap();
        let b = build_grid(&geo, &lib, 40e6).unwrap();
        for (x, y) in a.tag_summary().iter().zip(b.tag_summary().iter()) {
            assert!((x.area_m2 - y.area_m2).abs() <= 1e-9 * x.area_m2.max(1e-30));
        }
    }

    #[test]
    fn build_is_deterministic() {
        let geo = geometry_from_preset(Preset::G2, &PresetOverrides::default()).unwrap();
        let lib = MaterialLibrary::builtin();
        let a = build_grid(&geo, &lib, 20e6).unwrap();
        let b = build_grid(&geo, &lib, 20e6).unwrap();
        assert_eq!(a.rho_edges, b.rho_edges);
        assert_eq!(a.z_edges, b.z_edges);
        assert_eq!(a.cell_role, b.cell_role);
        assert_eq!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn margin_clipped_at_axis() {
        let mut geo = single_core(Some(50e-6));
        geo.regions[0].rect = Rect::new(1e-6, 2e-6, 0.0, 1e-6);
        let g = build_grid(&geo, &MaterialLibrary::builtin(), 10e6).unwrap();
        assert_eq!(g.rho_edges[0], 0.0);
    }
}
