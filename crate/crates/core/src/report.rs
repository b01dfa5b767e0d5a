//! Report writers: JSON records, CSV tables and human-readable text.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::config::Format;
use crate::error::{Error, Result};
use crate::pipeline::{Fields, RunReport};
use crate::sweep::SweepResult;

pub fn to_json(report: &RunReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

pub fn from_json(text: &str) -> Result<RunReport> {
    serde_json::from_str(text).map_err(|e| Error::Config(format!("report: {e}")))
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read `{}`: {e}", path.display())))?;
    from_json(&text)
}

/// Headline scalars as `(quantity, value, unit)`.
pub fn scalars(r: &RunReport) -> Vec<(&'static str, f64, &'static str)> {
    let c = &r.conversion;
    let optional = |name, v: Option<f64>, unit| v.map(|v| (name, v, unit));
    [
        Some(("ring_radius", r.geometry.ring_radius_m, "m")),
        optional("electrode_gap", r.geometry.electrode_gap_m, "m"),
        Some(("optical_frequency", r.mode.omega_a_over_2pi_hz, "Hz")),
        Some(("azimuthal_order", r.mode.m as f64, "1")),
        Some(("effective_index", r.mode.n_eff, "1")),
        optional("fsr_over_2pi", r.mode.fsr_over_2pi_hz, "Hz"),
        Some(("mode_residual", r.mode.relative_residual, "1")),
        Some(("mode_confinement", r.mode.confinement_db, "dB")),
        Some(("applied_voltage", r.potential.applied_voltage_v, "V")),
        Some(("capacitance", r.capacitance_f, "F")),
        Some(("v_zpf", r.coupling.v_zpf_v, "V")),
        Some(("shift_per_volt", r.coupling.delta_omega_per_volt, "rad/s/V")),
        Some(("g0_over_2pi", r.coupling.g0_over_2pi_hz, "Hz")),
        Some(("kappa_a", r.converter_params.kappa_a(), "rad/s")),
        Some(("kappa_b", r.converter_params.kappa_b(), "rad/s")),
        Some(("c0", c.c0, "1")),
        Some(("photon_number", c.photon_number, "photons")),
        Some(("pump_power", c.pump_power_w, "W")),
        Some(("cooperativity", c.cooperativity, "1")),
        Some(("gamma_peak", c.gamma_peak, "1")),
        Some(("bandwidth_fwhm", c.bandwidth_fwhm_rad_per_s, "rad/s")),
        optional("p_c1_single_mode", c.p_c1_single_mode_w, "W"),
        optional("p_c1_dual_mode", c.p_c1_dual_mode_w, "W"),
        optional("n_eq", c.n_eq, "quanta"),
    ]
    .into_iter()
    .flatten()
    .collect()
}

pub fn to_csv(r: &RunReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["quantity", "value", "unit"]).expect("in-memory write");
    for (k, v, u) in scalars(r) {
        w.write_record([k.to_string(), format!("{v:e}"), u.to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn gamma_curve_csv(r: &RunReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["detuning_hz", "gamma"]).expect("in-memory write");
    for (d, g) in &r.conversion.gamma_curve {
        w.write_record([format!("{d:e}"), format!("{g:e}")]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn to_text(r: &RunReport) -> String {
    let mut out = format!("run {} ({})\n", r.label(), &r.provenance.config_sha256[..12]);
    let width = scalars(r).iter().map(|s| s.0.len()).max().unwrap_or(0);
    for (k, v, u) in scalars(r) {
        out += &format!("  {k:<width$}  {v:>12.5e} {u}\n");
    }
    out += "coherence checks\n";
    for c in &r.conversion.checks {
        out += &format!("  {:<width$}  {:>12.4e} {:?}\n", c.name, c.ratio, c.flag);
    }
    if !r.warnings.is_empty() {
        out += "warnings\n";
        for w in &r.warnings {
            out += &format!("  {w}\n");
        }
    }
    out
}

pub fn render(r: &RunReport, format: Format) -> String {
    match format {
        Format::Json => to_json(r),
        Format::Csv => to_csv(r),
        Format::Text => to_text(r),
    }
}

fn write(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, text)?;
    written.push(path);
    Ok(())
}

/// Writes `report.*` for each format (the CSV form adds the efficiency
/// curve) and, when `fields` is given, the solved fields.
pub fn write_run(dir: &Path, r: &RunReport, formats: &[Format], fields: Option<&Fields>) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for &f in formats {
        let ext = match f {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Text => "txt",
        };
        write(dir.join(format!("report.{ext}")), &render(r, f), &mut written)?;
        if f == Format::Csv {
            write(dir.join("gamma_curve.csv"), &gamma_curve_csv(r), &mut written)?;
        }
    }
    if let Some(f) = fields {
        let p = dir.join("potential.dat");
        f.potential.write_dump(BufWriter::new(fs::File::create(&p)?))?;
        written.push(p);
        let p = dir.join("mode.dat");
        f.mode.write_dump(BufWriter::new(fs::File::create(&p)?))?;
        written.push(p);
    }
    Ok(written)
}

pub fn sweep_to_text(s: &SweepResult) -> String {
    let mut out = format!(
        "sweep of {} ({:?}, {})\n",
        s.spec.parameter, s.spec.objective, s.objective_unit
    );
    if let Some(b) = s.min_gap_um {
        out += &format!("  clearance bound: gap >= {b:.4} um\n");
    }
    for p in &s.points {
        let v = p.objective.map_or_else(|| "-".to_string(), |v| format!("{v:.6e}"));
        out += &format!("  {:>12.6e}  {:>14}  {}\n", p.value, v, p.status);
    }
    out
}

/// Writes `sweep.csv` and the `sweep.json` manifest.
pub fn write_sweep(dir: &Path, s: &SweepResult) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    write(dir.join("sweep.csv"), &s.to_csv(), &mut written)?;
    write(
        dir.join("sweep.json"),
        &serde_json::to_string_pretty(s).expect("sweep serializes"),
        &mut written,
    )?;
    Ok(written)
}
