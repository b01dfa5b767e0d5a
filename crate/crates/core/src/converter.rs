//! Linearized converter theory: cooperativity, efficiency spectrum, pump
//! budgets, added noise and an input–output scattering oracle.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::HBAR;
use crate::error::{ensure_positive, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    SingleMode,
    DualMode,
}

/// Primary pump input; the other quantity is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pump {
    /// Optical pump power, W.
    Power(f64),
    /// Intracavity pump photon number.
    PhotonNumber(f64),
}

/// Lumped converter. All rates in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConverterParams {
    pub omega_a: f64,
    pub omega_b: f64,
    pub kappa_a_in: f64,
    pub kappa_a_ex: f64,
    pub kappa_b_in: f64,
    pub kappa_b_ex: f64,
    pub g0: f64,
    pub topology: Topology,
    pub pump: Pump,
    /// Thermal occupation of the microwave bath.
    pub n_th: f64,
}

impl ConverterParams {
    pub fn kappa_a(&self) -> f64 {
        self.kappa_a_in + self.kappa_a_ex
    }

    pub fn kappa_b(&self) -> f64 {
        self.kappa_b_in + self.kappa_b_ex
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("omega_a", self.omega_a)?;
        ensure_positive("omega_b", self.omega_b)?;
        for (name, v) in [
            ("kappa_a_in", self.kappa_a_in),
            ("kappa_a_ex", self.kappa_a_ex),
            ("kappa_b_in", self.kappa_b_in),
            ("kappa_b_ex", self.kappa_b_ex),
            ("g0", self.g0),
            ("n_th", self.n_th),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::NonPositive { name, value: v });
            }
        }
        ensure_positive("kappa_a", self.kappa_a())?;
        ensure_positive("kappa_b", self.kappa_b())?;
        match self.pump {
            Pump::Power(p) | Pump::PhotonNumber(p) if !(p >= 0.0 && p.is_finite()) => {
                Err(Error::NonPositive { name: "pump", value: p })
            }
            _ => Ok(()),
        }
    }

    /// Power penalty of the given topology relative to resonant pumping.
    pub fn pump_penalty(&self, topology: Topology) -> f64 {
        match topology {
            Topology::DualMode => 1.0,
            Topology::SingleMode => single_mode_penalty(self.omega_b, self.kappa_a()),
        }
    }

    pub fn photon_number(&self) -> f64 {
        match self.pump {
            Pump::PhotonNumber(n) => n,
            Pump::Power(p) => {
                photon_number_dual(p, self.omega_a, self.kappa_a()) / self.pump_penalty(self.topology)
            }
        }
    }

    pub fn pump_power(&self) -> f64 {
        match self.pump {
            Pump::Power(p) => p,
            Pump::PhotonNumber(n) => {
                n * HBAR * self.omega_a * self.kappa_a() * self.pump_penalty(self.topology)
            }
        }
    }

    pub fn c0(&self) -> f64 {
        4.0 * self.g0 * self.g0 / (self.kappa_a() * self.kappa_b())
    }

    /// `C = n̄_p C0`.
    pub fn cooperativity(&self) -> f64 {
        self.photon_number() * self.c0()
    }

    /// Effective coupling `G = g0 √n̄_p`.
    pub fn effective_coupling(&self) -> f64 {
        self.g0 * self.photon_number().sqrt()
    }

    /// Copy with the pump set so that the cooperativity equals `c`.
    pub fn with_cooperativity(&self, c: f64) -> Self {
        let mut p = *self;
        let c0 = self.c0();
        p.pump = Pump::PhotonNumber(if c0 > 0.0 { c / c0 } else { 0.0 });
        p
    }
}

/// Detuned-pump penalty `1 + 4ω_b²/κ_a²`.
pub fn single_mode_penalty(omega_b: f64, kappa_a: f64) -> f64 {
    1.0 + 4.0 * omega_b * omega_b / (kappa_a * kappa_a)
}

/// `C0 = 4 g0² / (κ_a κ_b)`.
pub fn single_photon_cooperativity(g0: f64, kappa_a: f64, kappa_b: f64) -> Result<f64> {
    ensure_positive("kappa_a", kappa_a)?;
    ensure_positive("kappa_b", kappa_b)?;
    if !(g0 >= 0.0 && g0.is_finite()) {
        return Err(Error::NonPositive { name: "g0", value: g0 });
    }
    Ok(4.0 * g0 * g0 / (kappa_a * kappa_b))
}

/// `n̄_p = P / (ħ ω_a κ_a)` for resonant (dual-mode) pumping.
pub fn photon_number_dual(power: f64, omega_a: f64, kappa_a: f64) -> f64 {
    power / (HBAR * omega_a * kappa_a)
}

/// Efficiency `γ(ω)` of the conversion channel.
pub fn efficiency(omega: f64, params: &ConverterParams) -> f64 {
    efficiency_at(omega, params, params.cooperativity())
}

fn efficiency_at(omega: f64, p: &ConverterParams, c: f64) -> f64 {
    let (ka, kb) = (p.kappa_a(), p.kappa_b());
    let pre = (p.kappa_a_ex / ka) * (p.kappa_b_ex / kb);
    let det = omega - p.omega_b;
    let width = kb * (1.0 + c) / 2.0;
    pre * 4.0 * c / ((1.0 + c) * (1.0 + c)) / (1.0 + det * det / (width * width))
}

/// Pump power for cooperativity `c_target` in the given topology.
pub fn pump_power_for_cooperativity(c_target: f64, params: &ConverterParams, topology: Topology) -> Result<f64> {
    let c0 = params.c0();
    if !(c0 > 0.0) {
        return Err(Error::NonPositive {
            name: "single-photon cooperativity",
            value: c0,
        });
    }
    if !(c_target >= 0.0) {
        return Err(Error::NonPositive { name: "target cooperativity", value: c_target });
    }
    Ok(params.pump_penalty(topology) * HBAR * params.omega_a * params.kappa_a() * c_target / c0)
}

/// On-resonance added noise
/// `n_eq = (κ_b/κ_b,ex)(2n̄_th + (1+C)²/(4C) · κ_a/κ_a,ex)`.
pub fn added_noise(params: &ConverterParams) -> Result<f64> {
    added_noise_at(params, params.cooperativity())
}

fn added_noise_at(p: &ConverterParams, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::ZeroCooperativity);
    }
    ensure_positive("kappa_a_ex", p.kappa_a_ex)?;
    ensure_positive("kappa_b_ex", p.kappa_b_ex)?;
    Ok(p.kappa_b() / p.kappa_b_ex
        * (2.0 * p.n_th + (1.0 + c) * (1.0 + c) / (4.0 * c) * p.kappa_a() / p.kappa_a_ex))
}

/// Port order of [`ScatteringMatrix`].
pub const PORTS: [&str; 4] = ["optical", "microwave", "optical_loss", "microwave_loss"];

#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringMatrix {
    /// `s[out][in]` over [`PORTS`].
    pub s: [[Complex64; 4]; 4],
}

impl ScatteringMatrix {
    /// Signal-port block `[[opt←opt, opt←mw], [mw←opt, mw←mw]]`.
    pub fn signal(&self) -> [[Complex64; 2]; 2] {
        [[self.s[0][0], self.s[0][1]], [self.s[1][0], self.s[1][1]]]
    }

    /// `|S|` from each signal input into each loss port.
    pub fn loss_magnitudes(&self) -> [[f64; 2]; 2] {
        [
            [self.s[2][0].norm(), self.s[2][1].norm()],
            [self.s[3][0].norm(), self.s[3][1].norm()],
        ]
    }

    /// Total output power for a unit input at `port`.
    pub fn column_power(&self, port: usize) -> f64 {
        (0..4).map(|o| self.s[o][port].norm_sqr()).sum()
    }
}

/// Frequency-domain input–output solution of the beam-splitter model with
/// effective coupling `G = g0 √n̄_p`. The optical mode follows the microwave
/// drive adiabatically (its detuning is negligible against `κ_a`), which is
/// the regime in which the closed-form efficiency holds.
pub fn scattering_matrix(omega: f64, params: &ConverterParams) -> ScatteringMatrix {
    let g = params.effective_coupling();
    let (ka, kb) = (params.kappa_a(), params.kappa_b());
    let delta = omega - params.omega_b;
    let i = Complex64::i();
    let m = [
        [Complex64::from(ka / 2.0), i * g],
        [i * g, Complex64::new(kb / 2.0, -delta)],
    ];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let inv = [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]];
    // coupling of mode (row) to port (column)
    let k = [
        [params.kappa_a_ex.sqrt(), 0.0, params.kappa_a_in.sqrt(), 0.0],
        [0.0, params.kappa_b_ex.sqrt(), 0.0, params.kappa_b_in.sqrt()],
    ];
    let mut s = [[Complex64::from(0.0); 4]; 4];
    for out in 0..4 {
        for inp in 0..4 {
            let mut v = Complex64::from(if out == inp { 1.0 } else { 0.0 });
            for a in 0..2 {
                for b in 0..2 {
                    v -= k[a][out] * inv[a][b] * k[b][inp];
                }
            }
            s[out][inp] = v;
        }
    }
    ScatteringMatrix { s }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub pass: f64,
    pub warn: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { pass: 10.0, warn: 3.0 }
    }
}

impl Thresholds {
    /// Boundaries are inclusive up to rounding of the ratio.
    pub fn classify(&self, ratio: f64) -> Flag {
        let slack = 1.0 + 1e-9;
        if ratio * slack >= self.pass {
            Flag::Pass
        } else if ratio * slack >= self.warn {
            Flag::Warn
        } else {
            Flag::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    #[serde(with = "unbounded")]
    pub ratio: f64,
    pub flag: Flag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Serializes an infinite ratio as the string `"inf"`.
mod unbounded {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Finite(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_infinite() && *x > 0.0 {
            "inf".serialize(s)
        } else {
            x.serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Finite(x) => Ok(x),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
        }
    }
}

/// Ratios of the rate hierarchy the conversion scheme relies on.
pub fn coherence_check(params: &ConverterParams, thresholds: &Thresholds) -> Vec<Check> {
    let (ka, kb) = (params.kappa_a(), params.kappa_b());
    let coupling = 2.0 * params.effective_coupling();
    let ratio = |num: f64, den: f64| if den == 0.0 { f64::INFINITY } else { num / den };
    let mut out = Vec::new();
    let mut push = |name: &str, r: f64, note: Option<&str>| {
        out.push(Check {
            name: name.into(),
            ratio: r,
            flag: thresholds.classify(r),
            note: note.map(Into::into),
        })
    };
    push("resolved_sideband", params.omega_b / ka, None);
    push("dissipation_hierarchy", ka / kb, None);
    push(
        "pump_port_over_coupling",
        ratio(params.kappa_a_ex, coupling),
        (coupling == 0.0).then_some("zero coupling: no conversion"),
    );
    push("strong_coupling", coupling / kb, None);
    push("optical_overcoupling", ratio(params.kappa_a_ex, params.kappa_a_in), None);
    push("microwave_overcoupling", ratio(params.kappa_b_ex, params.kappa_b_in), None);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversionReport {
    pub c0: f64,
    pub cooperativity: f64,
    pub photon_number: f64,
    pub pump_power_w: f64,
    pub gamma_peak: f64,
    /// `(ω/2π − ω_b/2π` in Hz, `γ`) samples.
    pub gamma_curve: Vec<(f64, f64)>,
    pub bandwidth_fwhm_rad_per_s: f64,
    pub p_c1_single_mode_w: Option<f64>,
    pub p_c1_dual_mode_w: Option<f64>,
    pub n_eq: Option<f64>,
    pub checks: Vec<Check>,
    pub no_coupling: bool,
}

/// Full set of figures of merit; `curve_points` samples of `γ` span
/// `±3` linewidths around `ω_b`.
pub fn convert(params: &ConverterParams, curve_points: usize, thresholds: &Thresholds) -> Result<ConversionReport> {
    params.validate()?;
    let c = params.cooperativity();
    let fwhm = params.kappa_b() * (1.0 + c);
    let span = 3.0 * fwhm;
    let gamma_curve = (0..curve_points)
        .map(|k| {
            let t = if curve_points > 1 {
                k as f64 / (curve_points - 1) as f64
            } else {
                0.5
            };
            let w = params.omega_b - span + 2.0 * span * t;
            ((w - params.omega_b) / (2.0 * PI), efficiency(w, params))
        })
        .collect();
    let no_coupling = params.g0 == 0.0;
    Ok(ConversionReport {
        c0: params.c0(),
        cooperativity: c,
        photon_number: params.photon_number(),
        pump_power_w: params.pump_power(),
        gamma_peak: efficiency(params.omega_b, params),
        gamma_curve,
        bandwidth_fwhm_rad_per_s: fwhm,
        p_c1_single_mode_w: pump_power_for_cooperativity(1.0, params, Topology::SingleMode).ok(),
        p_c1_dual_mode_w: pump_power_for_cooperativity(1.0, params, Topology::DualMode).ok(),
        n_eq: added_noise(params).ok(),
        checks: coherence_check(params, thresholds),
        no_coupling,
    })
}

/// FWHM of `γ(ω)` located by bisection on the half-maximum crossing.
pub fn numerical_fwhm(params: &ConverterParams) -> f64 {
    let peak = efficiency(params.omega_b, params);
    let (mut lo, mut hi) = (0.0, params.kappa_b() * (1.0 + params.cooperativity()));
    while efficiency(params.omega_b + hi, params) > 0.5 * peak {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if efficiency(params.omega_b + mid, params) > 0.5 * peak {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    2.0 * 0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TWO_PI: f64 = 2.0 * PI;

    fn table1(g0_khz: f64) -> ConverterParams {
        let (wa, wb) = (TWO_PI * 200e12, TWO_PI * 6e9);
        ConverterParams {
            omega_a: wa,
            omega_b: wb,
            kappa_a_in: 0.0,
            kappa_a_ex: wa / 1e5,
            kappa_b_in: 0.0,
            kappa_b_ex: wb / 1e3,
            g0: TWO_PI * g0_khz * 1e3,
            topology: Topology::DualMode,
            pump: Pump::PhotonNumber(1.0),
            n_th: 0.0,
        }
    }

    fn overcoupled(c: f64, n_th: f64) -> ConverterParams {
        let mut p = table1(50.0).with_cooperativity(c);
        p.n_th = n_th;
        p
    }

    #[test]
    fn cooperativity_matches_table_columns() {
        let c0 = |g| {
            let p = table1(g);
            single_photon_cooperativity(p.g0, p.kappa_a(), p.kappa_b()).unwrap()
        };
        assert!((c0(50.0) - 8.33e-7).abs() < 0.01e-7);
        assert!((c0(12.0) - 4.8e-8).abs() < 0.01e-8);
        assert_eq!(c0(0.0), 0.0);
        assert!(single_photon_cooperativity(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn efficiency_reference_points() {
        assert!((efficiency(TWO_PI * 6e9, &overcoupled(1.0, 0.0)) - 1.0).abs() < 1e-12);
        let p = overcoupled(3.0, 0.0);
        assert!((efficiency(p.omega_b, &p) - 0.75).abs() < 1e-15);
        let p0 = overcoupled(0.0, 0.0);
        for k in -5..=5 {
            assert_eq!(efficiency(p0.omega_b + k as f64 * 1e6, &p0), 0.0);
        }
    }

    #[test]
    fn photon_number_reference() {
        let n = photon_number_dual(1.85e-3, TWO_PI * 200e12, TWO_PI * 2e9);
        let oracle = 1.85e-3 / (1.054_571_817e-34 * TWO_PI * 200e12 * TWO_PI * 2e9);
        assert!((n / oracle - 1.0).abs() < 1e-15);
        assert!((n - 1.11e6).abs() < 0.01e6);
        assert_eq!(photon_number_dual(0.0, 1.0, 1.0), 0.0);
        assert!((photon_number_dual(1.0, 3.0, 4.0) / photon_number_dual(1.0, 3.0, 8.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn pump_power_table_values() {
        let p = table1(50.0);
        let dual = pump_power_for_cooperativity(1.0, &p, Topology::DualMode).unwrap();
        let single = pump_power_for_cooperativity(1.0, &p, Topology::SingleMode).unwrap();
        assert!((dual - 0.0018).abs() < 0.0001 * 2.0, "{dual}");
        assert!((single - 0.067).abs() < 0.001 * 7.0, "{single}");
        let g1 = pump_power_for_cooperativity(1.0, &table1(0.15), Topology::DualMode).unwrap();
        assert!((g1 - 222.0).abs() < 1.0);
        assert!(pump_power_for_cooperativity(1.0, &table1(0.0), Topology::DualMode).is_err());
    }

    #[test]
    fn added_noise_reference_points() {
        assert!((added_noise(&overcoupled(1.0, 0.0)).unwrap() - 1.0).abs() < 1e-12);
        assert!((added_noise(&overcoupled(1.0, 2.0)).unwrap() - 5.0).abs() < 1e-12);
        assert!(matches!(added_noise(&overcoupled(0.0, 0.0)), Err(Error::ZeroCooperativity)));
        // grid search for the minimum over C
        let best = (1..400)
            .map(|k| k as f64 * 0.01)
            .min_by(|a, b| {
                added_noise(&overcoupled(*a, 0.7))
                    .unwrap()
                    .total_cmp(&added_noise(&overcoupled(*b, 0.7)).unwrap())
            })
            .unwrap();
        assert!((best - 1.0).abs() < 1e-9);
    }

    #[test]
    fn decoupled_scattering_is_pure_reflection() {
        let mut p = table1(0.0);
        p.kappa_b_in = p.kappa_b_ex * 0.3;
        for det in [-3e7, 0.0, 1e6, 5e7] {
            let s = scattering_matrix(p.omega_b + det, &p);
            assert_eq!(s.s[0][1].norm(), 0.0);
            assert_eq!(s.s[1][0].norm(), 0.0);
            let kb = p.kappa_b();
            let expected = Complex64::new(p.kappa_b_ex - kb / 2.0, -det).norm() / Complex64::new(kb / 2.0, det).norm();
            assert!((s.s[1][1].norm() - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn perfect_conversion_point() {
        let p = overcoupled(1.0, 0.0);
        let s = scattering_matrix(p.omega_b, &p);
        assert!((s.s[0][1].norm_sqr() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn table1_ratio_is_37() {
        let p = table1(50.0);
        assert!((single_mode_penalty(p.omega_b, p.kappa_a()) - 37.0).abs() < 1e-12);
    }

    #[test]
    fn coherence_flags() {
        let mut p = table1(50.0).with_cooperativity(1.0);
        p.kappa_b_in = p.kappa_b_ex / 100.0;
        let checks = coherence_check(&p, &Thresholds::default());
        let get = |n: &str| checks.iter().find(|c| c.name == n).unwrap().clone();
        let rs = get("resolved_sideband");
        assert!((rs.ratio - 3.0).abs() < 1e-12);
        assert_eq!(rs.flag, Flag::Warn);
        assert_eq!(get("microwave_overcoupling").flag, Flag::Pass);
        let z = coherence_check(&table1(0.0), &Thresholds::default());
        let pc = z.iter().find(|c| c.name == "pump_port_over_coupling").unwrap();
        assert!(pc.ratio.is_infinite());
        assert_eq!(pc.flag, Flag::Pass);
        assert!(pc.note.is_some());
    }

    #[test]
    fn pump_inputs_are_consistent() {
        for topology in [Topology::SingleMode, Topology::DualMode] {
            let mut p = table1(12.0);
            p.topology = topology;
            p.pump = Pump::Power(0.02);
            let n = p.photon_number();
            let mut q = p;
            q.pump = Pump::PhotonNumber(n);
            assert!((q.pump_power() / 0.02 - 1.0).abs() < 1e-12);
            assert!((p.cooperativity() - n * p.c0()).abs() <= 1e-15 * p.cooperativity());
        }
    }

    #[test]
    fn report_contents() {
        let p = overcoupled(2.0, 0.1);
        let r = convert(&p, 101, &Thresholds::default()).unwrap();
        assert_eq!(r.gamma_curve.len(), 101);
        assert_eq!(r.gamma_peak, efficiency(p.omega_b, &p));
        assert!((r.cooperativity - r.photon_number * r.c0).abs() <= 1e-12 * r.cooperativity);
        assert!((r.gamma_curve[50].1 - r.gamma_peak).abs() < 1e-15);
        let zero = convert(&table1(0.0), 11, &Thresholds::default()).unwrap();
        assert!(zero.no_coupling && zero.n_eq.is_none() && zero.p_c1_dual_mode_w.is_none());
    }

    fn params_strategy() -> impl Strategy<Value = ConverterParams> {
        (
            1e8f64..1e11,
            0.0f64..1.0,
            1e5f64..1e8,
            0.0f64..1.0,
            1e-3f64..1e2,
            0.0f64..5.0,
        )
            .prop_map(|(ka, fa, kb, fb, c, nth)| {
                let p = ConverterParams {
                    omega_a: 1.2e15,
                    omega_b: 3.7e10,
                    kappa_a_in: ka * fa,
                    kappa_a_ex: ka * (1.0 - fa) + 1.0,
                    kappa_b_in: kb * fb,
                    kappa_b_ex: kb * (1.0 - fb) + 1.0,
                    g0: 1e5,
                    topology: Topology::DualMode,
                    pump: Pump::PhotonNumber(1.0),
                    n_th: nth,
                };
                p.with_cooperativity(c)
            })
    }

    proptest! {
        #[test]
        fn efficiency_bounded_by_prefactor(p in params_strategy(), x in -10.0f64..10.0) {
            let w = p.omega_b + x * p.kappa_b();
            let g = efficiency(w, &p);
            let pre = p.kappa_a_ex / p.kappa_a() * p.kappa_b_ex / p.kappa_b();
            prop_assert!((0.0..=pre * (1.0 + 1e-12)).contains(&g));
        }

        #[test]
        fn efficiency_peaks_at_unit_cooperativity(p in params_strategy(), c in 0.01f64..100.0) {
            let at = |c: f64| efficiency(p.omega_b, &p.with_cooperativity(c));
            prop_assert!(at(c) <= at(1.0) * (1.0 + 1e-12));
        }

        #[test]
        fn fwhm_matches_lorentzian(p in params_strategy()) {
            let expected = p.kappa_b() * (1.0 + p.cooperativity());
            prop_assert!((numerical_fwhm(&p) / expected - 1.0).abs() < 5e-3);
        }

        #[test]
        fn scattering_is_unitary_with_loss_ports(p in params_strategy(), x in -10.0f64..10.0) {
            let s = scattering_matrix(p.omega_b + x * p.kappa_b(), &p);
            for port in 0..4 {
                prop_assert!((s.column_power(port) - 1.0).abs() <= 1e-10);
            }
        }

        #[test]
        fn scattering_matches_closed_form(p in params_strategy(), x in -10.0f64..10.0) {
            let w = p.omega_b + x * p.kappa_b();
            let s = scattering_matrix(w, &p);
            prop_assert!((s.s[0][1].norm_sqr() - efficiency(w, &p)).abs() <= 1e-10);
        }

        #[test]
        fn power_ratio_is_penalty(p in params_strategy()) {
            prop_assume!(p.c0() > 0.0);
            let single = pump_power_for_cooperativity(1.0, &p, Topology::SingleMode).unwrap();
            let dual = pump_power_for_cooperativity(1.0, &p, Topology::DualMode).unwrap();
            let expected = 1.0 + 4.0 * p.omega_b.powi(2) / p.kappa_a().powi(2);
            prop_assert!((single / dual / expected - 1.0).abs() < 1e-12);
        }
    }
}
