//! Parameter sweeps and golden-section refinement.

use std::str::FromStr;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, SWEEPABLE};
use crate::converter::Topology;
use crate::error::{Error, Result};
use crate::geometry::Role;
use crate::pipeline::{run_pipeline_cached, FieldCache, RunReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// `g0/2π`, Hz.
    #[default]
    G0,
    C0,
    GammaPeak,
    /// Pump power for unit cooperativity in the configured topology, W.
    PForC1,
    /// Added noise, quanta.
    NEq,
}

impl Objective {
    pub fn maximize(self) -> bool {
        matches!(self, Objective::G0 | Objective::C0 | Objective::GammaPeak)
    }

    pub fn unit(self) -> &'static str {
        match self {
            Objective::G0 => "Hz",
            Objective::C0 | Objective::GammaPeak => "1",
            Objective::PForC1 => "W",
            Objective::NEq => "quanta",
        }
    }

    pub fn extract(self, r: &RunReport) -> Result<f64> {
        let c = &r.conversion;
        match self {
            Objective::G0 => Ok(r.coupling.g0_over_2pi_hz),
            Objective::C0 => Ok(c.c0),
            Objective::GammaPeak => Ok(c.gamma_peak),
            Objective::PForC1 => match r.converter_params.topology {
                Topology::DualMode => c.p_c1_dual_mode_w,
                Topology::SingleMode => c.p_c1_single_mode_w,
            }
            .ok_or(Error::NonPositive {
                name: "single-photon cooperativity",
                value: c.c0,
            }),
            Objective::NEq => c.n_eq.ok_or(Error::ZeroCooperativity),
        }
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        <Self as clap::ValueEnum>::from_str(s, true).map_err(|_| Error::Config(format!("unknown objective `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// `section.key` of a numeric configuration value, in that key's unit.
    pub parameter: String,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub objective: Objective,
    /// Smallest admissible electrode gap, µm. When absent for a gap sweep it
    /// is derived from the decay contour of the optical mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_gap_um: Option<f64>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("sweep: {m}")));
        if !SWEEPABLE.contains(&self.parameter.as_str()) {
            return bad(format!("unknown parameter `{}` (expected one of {})", self.parameter, SWEEPABLE.join(", ")));
        }
        if !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return bad(format!("need lo < hi, got [{}, {}]", self.lo, self.hi));
        }
        if self.points < 2 {
            return bad(format!("need at least 2 points, got {}", self.points));
        }
        if self.sampling == Sampling::Log && self.lo <= 0.0 {
            return bad("log sampling needs a positive range".into());
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|k| {
                let t = k as f64 / (n - 1) as f64;
                if k == n - 1 {
                    return self.hi;
                }
                match self.sampling {
                    Sampling::Linear => self.lo + (self.hi - self.lo) * t,
                    Sampling::Log => (self.lo.ln() + (self.hi.ln() - self.lo.ln()) * t).exp(),
                }
            })
            .collect()
    }

    fn is_gap_sweep(&self) -> bool {
        self.parameter == "geometry.electrode_gap_um"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub index: usize,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    /// `ok` or the failure message.
    pub status: String,
    /// Content hash of the point's configuration.
    pub config_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub objective_unit: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_gap_um: Option<f64>,
    pub points: Vec<SweepPoint>,
    #[serde(skip)]
    pub reports: Vec<Option<RunReport>>,
}

impl SweepResult {
    /// Index of the best successful point.
    pub fn best(&self) -> Option<usize> {
        let sign = if self.spec.objective.maximize() { 1.0 } else { -1.0 };
        self.points
            .iter()
            .filter_map(|p| p.objective.map(|v| (p.index, sign * v)))
            .fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
                Some((_, b)) if b >= v => acc,
                _ => Some((i, v)),
            })
            .map(|(i, _)| i)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let obj = format!("{:?}", self.spec.objective).to_lowercase();
        w.write_record([
            self.spec.parameter.as_str(),
            &format!("{obj}_{}", self.objective_unit),
            "status",
        ])
        .expect("in-memory write");
        for p in &self.points {
            let v = p.objective.map(|v| format!("{v:e}")).unwrap_or_default();
            w.write_record([format!("{:e}", p.value), v, p.status.clone()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Smallest electrode gap that keeps the electrodes outside the contour
/// where the optical field has decayed by `confinement_db`, µm.
pub fn clearance_bound(cfg: &RunConfig, cache: &FieldCache) -> Result<Option<f64>> {
    let preset = match cfg.geometry.preset {
        Some(p) => p,
        None => return Ok(None),
    };
    let (_, fields) = run_pipeline_cached(cfg, Some(cache))?;
    let mode = &fields.mode;
    let grid = &fields.grid;
    let core = grid
        .geometry
        .core_box()
        .ok_or_else(|| Error::InvalidGeometry("no core region".into()))?;
    let (peak_cell, peak) = mode
        .field
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
    let threshold = peak * 10f64.powf(-cfg.solver.confinement_db / 20.0);
    let (pi, pj) = (peak_cell / grid.n_z(), peak_cell % grid.n_z());
    let radial = preset.side_electrodes();
    let (n, centre) = if radial {
        (grid.n_rho(), 0.5 * (core.rho_min + core.rho_max))
    } else {
        (grid.n_z(), 0.5 * (core.z_min + core.z_max))
    };
    let at = |k: usize| if radial { grid.idx(k, pj) } else { grid.idx(pi, k) };
    let coord = |k: usize| if radial { grid.rho[k] } else { grid.z[k] };
    let start = if radial { pi } else { pj };
    let mut reach = 0.0f64;
    for dir in [-1i64, 1] {
        let mut k = start as i64;
        while k >= 0 && (k as usize) < n {
            let c = at(k as usize);
            if mode.field[c].abs() < threshold || grid.cell_role[c] == Role::Electrode {
                break;
            }
            k += dir;
        }
        let k = k.clamp(0, n as i64 - 1) as usize;
        reach = reach.max((coord(k) - centre).abs());
    }
    Ok(Some(2.0 * reach * 1e6))
}

fn evaluate(cfg: &RunConfig, spec: &SweepSpec, value: f64, cache: &FieldCache) -> (SweepPoint, Option<RunReport>) {
    let mut point = SweepPoint {
        index: 0,
        value,
        objective: None,
        status: String::new(),
        config_sha256: String::new(),
    };
    let outcome = cfg.with_parameter(&spec.parameter, value).and_then(|c| {
        point.config_sha256 = c.content_hash();
        let (r, _) = run_pipeline_cached(&c, Some(cache))?;
        let v = spec.objective.extract(&r)?;
        Ok((v, r))
    });
    match outcome {
        Ok((v, r)) => {
            point.objective = Some(v);
            point.status = "ok".into();
            (point, Some(r))
        }
        Err(e) => {
            warn!("sweep point {} = {value}: {e}", spec.parameter);
            point.status = e.to_string();
            (point, None)
        }
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))
}

/// Evaluates the objective at every sample of `spec`, `jobs` points at a time.
pub fn sweep(cfg: &RunConfig, spec: &SweepSpec, jobs: usize, cache: &FieldCache) -> Result<SweepResult> {
    spec.validate()?;
    let min_gap = match (spec.is_gap_sweep(), spec.min_gap_um) {
        (true, Some(b)) => Some(b),
        (true, None) => {
            let probe = cfg.with_parameter(&spec.parameter, spec.hi)?;
            clearance_bound(&probe, cache)?
        }
        _ => None,
    };
    if let Some(b) = min_gap {
        info!("electrode clearance bound: gap >= {b:.3} um");
    }
    let values = spec.values();
    let results: Vec<(SweepPoint, Option<RunReport>)> = pool(jobs)?.install(|| {
        values
            .par_iter()
            .enumerate()
            .map(|(i, &v)| {
                let (mut p, r) = match min_gap {
                    Some(b) if v < b * (1.0 - 1e-12) => (
                        SweepPoint {
                            index: i,
                            value: v,
                            objective: None,
                            status: format!("infeasible: gap below the {b:.3} um clearance bound"),
                            config_sha256: cfg.with_parameter(&spec.parameter, v).map(|c| c.content_hash()).unwrap_or_default(),
                        },
                        None,
                    ),
                    _ => evaluate(cfg, spec, v, cache),
                };
                p.index = i;
                (p, r)
            })
            .collect()
    });
    if results.iter().all(|(p, _)| p.objective.is_none()) {
        return Err(Error::AllPointsFailed(results.len()));
    }
    let (points, reports) = results.into_iter().unzip();
    Ok(SweepResult {
        spec: spec.clone(),
        objective_unit: spec.objective.unit().into(),
        min_gap_um: min_gap,
        points,
        reports,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub value: f64,
    pub objective: f64,
    /// The objective is constant over the sampled range.
    pub flat: bool,
    /// The samples rise then fall; otherwise the best sample is returned.
    pub unimodal: bool,
    pub evaluations: usize,
}

/// Refines the best of `samples` (ordered by parameter) by golden-section
/// search between its neighbours. `eval` returns the objective at a point;
/// the result is never worse than the best sample.
pub fn refine<F>(samples: &[(f64, Option<f64>)], maximize: bool, rel_tol: f64, mut eval: F) -> Result<Optimum>
where
    F: FnMut(f64) -> Result<f64>,
{
    let sign = if maximize { 1.0 } else { -1.0 };
    let ok: Vec<(f64, f64)> = samples.iter().filter_map(|(x, v)| v.map(|v| (*x, sign * v))).collect();
    if ok.is_empty() {
        return Err(Error::AllPointsFailed(samples.len()));
    }
    let (lo, hi) = (ok[0].0, ok[ok.len() - 1].0);
    let (min, max) = ok.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (_, v)| (a.min(*v), b.max(*v)));
    if max - min <= 1e-12 * max.abs().max(min.abs()) {
        let mid = 0.5 * (lo + hi);
        let v = eval(mid)?;
        return Ok(Optimum {
            value: mid,
            objective: v,
            flat: true,
            unimodal: true,
            evaluations: 1,
        });
    }
    let k = ok
        .iter()
        .enumerate()
        .fold(0, |b, (i, p)| if p.1 > ok[b].1 { i } else { b });
    let rising = ok[..=k].windows(2).all(|w| w[1].1 >= w[0].1);
    let falling = ok[k..].windows(2).all(|w| w[1].1 <= w[0].1);
    let best_sample = Optimum {
        value: ok[k].0,
        objective: sign * ok[k].1,
        flat: false,
        unimodal: rising && falling,
        evaluations: 0,
    };
    if !(rising && falling) {
        return Ok(best_sample);
    }
    let mut a = ok[k.saturating_sub(1)].0;
    let mut b = ok[(k + 1).min(ok.len() - 1)].0;
    let scale = (hi - lo).abs();
    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let mut evaluations = 0;
    let mut f = |x: f64, n: &mut usize| -> Result<f64> {
        *n += 1;
        Ok(sign * eval(x)?)
    };
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let mut fc = f(c, &mut evaluations)?;
    let mut fd = f(d, &mut evaluations)?;
    let mut best = (ok[k].0, ok[k].1);
    let width_tol = |a: f64, b: f64| rel_tol * if a + b == 0.0 { scale } else { (0.5 * (a + b)).abs() };
    while (b - a).abs() > width_tol(a, b) {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c, &mut evaluations)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d, &mut evaluations)?;
        }
        for (x, v) in [(c, fc), (d, fd)] {
            if v > best.1 {
                best = (x, v);
            }
        }
    }
    Ok(Optimum {
        value: best.0,
        objective: sign * best.1,
        flat: false,
        unimodal: true,
        evaluations,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub optimum: Optimum,
    pub sweep: SweepResult,
    pub report: RunReport,
}

/// Sweep followed by golden-section refinement of the best point.
pub fn optimize_scalar(cfg: &RunConfig, spec: &SweepSpec, jobs: usize, cache: &FieldCache) -> Result<OptimizationResult> {
    let sw = sweep(cfg, spec, jobs, cache)?;
    let mut samples: Vec<(f64, Option<f64>)> = sw.points.iter().map(|p| (p.value, p.objective)).collect();
    let mut reports: Vec<(f64, RunReport)> = Vec::new();
    // the feasible range starts at the clearance bound, not at the first
    // feasible sample
    if let Some(b) = sw.min_gap_um {
        let first_ok = sw.points.iter().position(|p| p.objective.is_some());
        if first_ok.is_some_and(|i| i > 0 && sw.points[i].value > b) {
            let (p, r) = evaluate(cfg, spec, b, cache);
            if let (Some(v), Some(r)) = (p.objective, r) {
                samples.retain(|s| s.1.is_some());
                samples.insert(0, (b, Some(v)));
                reports.push((b, r));
            }
        }
    }
    let optimum = refine(&samples, spec.objective.maximize(), 1e-3, |x| {
        let (p, r) = evaluate(cfg, spec, x, cache);
        let r = r.ok_or_else(|| Error::Config(format!("refinement point {x}: {}", p.status)))?;
        let v = spec.objective.extract(&r)?;
        reports.push((x, r));
        Ok(v)
    })?;
    let report = reports
        .into_iter()
        .find(|(x, _)| *x == optimum.value)
        .map(|(_, r)| r)
        .or_else(|| {
            sw.points
                .iter()
                .position(|p| p.value == optimum.value)
                .and_then(|i| sw.reports[i].clone())
        })
        .expect("optimum has a report");
    Ok(OptimizationResult { optimum, sweep: sw, report })
}
