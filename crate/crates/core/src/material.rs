//! Anisotropic material descriptions.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{expand_contracted_tensor, ContractedTensor, Tensor3};

/// Default material library shipped with the crate.
pub const DEFAULT_LIBRARY_TOML: &str = include_str!("../configs/materials.toml");

pub const VACUUM: &str = "vacuum";

/// On-disk form of a material. Exactly one of the full or diagonal forms must
/// be given for each permittivity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_optical: Option<[[f64; 3]; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_optical_diag: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_microwave: Option<[[f64; 3]; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_microwave_diag: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pockels_pm_per_v: Option<ContractedTensor>,
    pub refractive_index: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Material {
    pub name: String,
    pub eps_optical: Matrix3<f64>,
    pub eps_microwave: Matrix3<f64>,
    /// Contracted Pockels tensor, pm/V.
    pub r_contracted: ContractedTensor,
    pub refractive_index_scalar: f64,
    r_full: Tensor3,
}

fn pick_tensor(
    name: &str,
    what: &str,
    full: Option<[[f64; 3]; 3]>,
    diag: Option<[f64; 3]>,
) -> Result<Matrix3<f64>> {
    match (full, diag) {
        (Some(m), None) => Ok(Matrix3::from_fn(|i, j| m[i][j])),
        (None, Some(d)) => Ok(Matrix3::from_diagonal(&Vector3::from(d))),
        (Some(_), Some(_)) => Err(Error::InvalidMaterial {
            name: name.into(),
            reason: format!("both `{what}` and `{what}_diag` given"),
        }),
        (None, None) => Err(Error::InvalidMaterial {
            name: name.into(),
            reason: format!("missing `{what}` (or `{what}_diag`)"),
        }),
    }
}

impl Material {
    pub fn new(
        name: impl Into<String>,
        eps_optical: Matrix3<f64>,
        eps_microwave: Matrix3<f64>,
        r_contracted: ContractedTensor,
        refractive_index_scalar: f64,
    ) -> Result<Self> {
        let m = Material {
            name: name.into(),
            eps_optical,
            eps_microwave,
            r_contracted,
            refractive_index_scalar,
            r_full: expand_contracted_tensor(&r_contracted),
        };
        m.validate()?;
        Ok(m)
    }

    /// Isotropic, non-electro-optic material.
    pub fn isotropic(name: impl Into<String>, eps_optical: f64, eps_microwave: f64) -> Result<Self> {
        Self::new(
            name,
            Matrix3::from_diagonal_element(eps_optical),
            Matrix3::from_diagonal_element(eps_microwave),
            [[0.0; 3]; 6],
            eps_optical.sqrt(),
        )
    }

    pub fn from_spec(name: &str, spec: &MaterialSpec) -> Result<Self> {
        let eps_optical = pick_tensor(name, "eps_optical", spec.eps_optical, spec.eps_optical_diag)?;
        let eps_microwave =
            pick_tensor(name, "eps_microwave", spec.eps_microwave, spec.eps_microwave_diag)?;
        Self::new(
            name,
            eps_optical,
            eps_microwave,
            spec.pockels_pm_per_v.unwrap_or([[0.0; 3]; 6]),
            spec.refractive_index,
        )
    }

    pub fn to_spec(&self) -> MaterialSpec {
        let full = |m: &Matrix3<f64>| {
            let mut a = [[0.0; 3]; 3];
            for (i, row) in a.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = m[(i, j)];
                }
            }
            a
        };
        MaterialSpec {
            eps_optical: Some(full(&self.eps_optical)),
            eps_optical_diag: None,
            eps_microwave: Some(full(&self.eps_microwave)),
            eps_microwave_diag: None,
            pockels_pm_per_v: (!self.r_full.is_zero()).then_some(self.r_contracted),
            refractive_index: self.refractive_index_scalar,
        }
    }

    /// Full Pockels tensor in m/V, crystal frame.
    pub fn pockels(&self) -> &Tensor3 {
        &self.r_full
    }

    pub fn has_pockels(&self) -> bool {
        !self.r_full.is_zero()
    }

    /// Copy with the Pockels tensor scaled by `alpha`.
    pub fn with_scaled_pockels(&self, alpha: f64) -> Self {
        let mut m = self.clone();
        for row in m.r_contracted.iter_mut() {
            for v in row.iter_mut() {
                *v *= alpha;
            }
        }
        m.r_full = expand_contracted_tensor(&m.r_contracted);
        m
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::InvalidMaterial {
            name: self.name.clone(),
            reason,
        };
        for (what, eps) in [
            ("eps_optical", &self.eps_optical),
            ("eps_microwave", &self.eps_microwave),
        ] {
            if eps.iter().any(|v| !v.is_finite()) {
                return Err(bad(format!("{what} has non-finite entries")));
            }
            if (eps - eps.transpose()).abs().max() > 1e-12 * eps.abs().max() {
                return Err(bad(format!("{what} is not symmetric")));
            }
            if eps.symmetric_eigenvalues().min() <= 0.0 {
                return Err(bad(format!("{what} is not positive definite")));
            }
            if (0..3).any(|i| eps[(i, i)] < 1.0) {
                return Err(bad(format!("{what} has a diagonal entry below 1")));
            }
        }
        if self.r_contracted.iter().flatten().any(|v| !v.is_finite()) {
            return Err(bad("Pockels tensor has non-finite entries".into()));
        }
        let n2 = self.refractive_index_scalar * self.refractive_index_scalar;
        let ev = self.eps_optical.symmetric_eigenvalues();
        let tol = 1e-9 * ev.max();
        if !(n2 >= ev.min() - tol && n2 <= ev.max() + tol) {
            return Err(bad(format!(
                "refractive_index² = {n2} outside optical eigenvalue range [{}, {}]",
                ev.min(),
                ev.max()
            )));
        }
        Ok(())
    }
}

/// Named collection of materials.
#[derive(Debug, Clone, Default)]
pub struct MaterialLibrary {
    materials: BTreeMap<String, Material>,
}

impl MaterialLibrary {
    pub fn builtin() -> Self {
        Self::from_toml_str(DEFAULT_LIBRARY_TOML).expect("shipped material library is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let specs: BTreeMap<String, MaterialSpec> =
            toml::from_str(text).map_err(|e| Error::Config(format!("material library: {e}")))?;
        Self::from_specs(&specs)
    }

    pub fn from_specs(specs: &BTreeMap<String, MaterialSpec>) -> Result<Self> {
        let mut lib = Self::default();
        for (name, spec) in specs {
            lib.insert(Material::from_spec(name, spec)?);
        }
        Ok(lib)
    }

    pub fn insert(&mut self, material: Material) {
        self.materials.insert(material.name.clone(), material);
    }

    pub fn get(&self, name: &str) -> Result<&Material> {
        self.materials
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown material `{name}`")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.materials.keys().map(String::as_str)
    }

    pub fn specs(&self) -> BTreeMap<String, MaterialSpec> {
        self.materials
            .iter()
            .map(|(k, v)| (k.clone(), v.to_spec()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_library_loads() {
        let lib = MaterialLibrary::builtin();
        let ln = lib.get("lithium_niobate").unwrap();
        assert!(ln.has_pockels());
        // r51 is the xz row, x column
        assert_eq!(ln.r_contracted[4][0], 30.0);
        assert_eq!(ln.pockels().get(0, 2, 0), 30e-12);
        assert!(!lib.get("silica").unwrap().has_pockels());
        assert!(lib.get("vacuum").is_ok());
        assert!(lib.get("unobtainium").is_err());
    }

    #[test]
    fn rejects_non_positive_definite() {
        let eps = Matrix3::new(2.0, 3.0, 0.0, 3.0, 2.0, 0.0, 0.0, 0.0, 2.0);
        assert!(Material::new("bad", eps, Matrix3::identity(), [[0.0; 3]; 6], 1.4).is_err());
    }

    #[test]
    fn rejects_sub_unity_diagonal() {
        assert!(Material::isotropic("thin", 0.5, 1.0).is_err());
    }

    #[test]
    fn rejects_index_outside_eigen_range() {
        let eps = Matrix3::from_diagonal(&Vector3::new(4.0, 4.0, 5.0));
        assert!(Material::new("m", eps, eps, [[0.0; 3]; 6], 2.5).is_err());
        assert!(Material::new("m", eps, eps, [[0.0; 3]; 6], 2.1).is_ok());
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = "[x]\neps_optical_diag=[1,1,1]\neps_microwave_diag=[1,1,1]\nrefractive_index=1.0\ncolour=\"red\"\n";
        let err = MaterialLibrary::from_toml_str(text).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }

    #[test]
    fn rejects_duplicate_tensor_forms() {
        let text = "[x]\neps_optical_diag=[1,1,1]\neps_optical=[[1,0,0],[0,1,0],[0,0,1]]\neps_microwave_diag=[1,1,1]\nrefractive_index=1.0\n";
        assert!(MaterialLibrary::from_toml_str(text).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let lib = MaterialLibrary::builtin();
        let again = MaterialLibrary::from_specs(&lib.specs()).unwrap();
        for name in lib.names() {
            assert_eq!(lib.get(name).unwrap(), again.get(name).unwrap());
        }
    }
}
