//! Parameter sweeps over a base configuration. Cells run independently on a rayon pool;
//! rows are written in cell order, so `phase.csv` does not depend on the pool width.

use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use rayon::prelude::*;

use mnchemo::analysis::Classification;

use crate::config::{PerturbationConfig, RStar, RunConfig, SourceConfig};
use crate::pipeline::simulate;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    M,
    Chi,
    Mu,
    Alpha,
    Beta,
    Phi,
    RStar,
    Cells,
}

impl Param {
    pub fn name(self) -> &'static str {
        match self {
            Param::M => "m",
            Param::Chi => "chi",
            Param::Mu => "mu",
            Param::Alpha => "alpha",
            Param::Beta => "beta",
            Param::Phi => "phi",
            Param::RStar => "r_star",
            Param::Cells => "cells",
        }
    }

    fn apply(self, cfg: &mut RunConfig, value: f64) {
        match self {
            Param::M => cfg.model.diffusion.set_m(value),
            Param::Chi => cfg.model.chi = value,
            Param::Mu => cfg.initial.mu = value,
            Param::Alpha => cfg.initial.alpha = value,
            Param::Beta => cfg.initial.beta = value,
            Param::Phi => cfg.model.source = SourceConfig::Constant { value },
            Param::RStar => cfg.initial.r_star = Some(RStar::Radius(value)),
            Param::Cells => cfg.grid.cells = value.round() as usize,
        }
    }
}

impl FromStr for Param {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "m" => Param::M,
            "chi" => Param::Chi,
            "mu" => Param::Mu,
            "alpha" => Param::Alpha,
            "beta" => Param::Beta,
            "phi" => Param::Phi,
            "r_star" => Param::RStar,
            "cells" => Param::Cells,
            other => {
                bail!("unknown sweep parameter `{other}` (expected m, chi, mu, alpha, beta, phi, r_star or cells)")
            }
        })
    }
}

/// `name=start:stop:step`, inclusive of `stop` up to rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub param: Param,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Axis {
    pub fn len(&self) -> usize {
        ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Values are `start + k·step`, computed from the index so no error accumulates.
    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.start + k as f64 * self.step).collect()
    }
}

impl FromStr for Axis {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, range) =
            s.split_once('=').ok_or_else(|| anyhow!("axis `{s}` must look like name=start:stop:step"))?;
        let parts: Vec<&str> = range.split(':').collect();
        let num = |p: &str| p.trim().parse::<f64>().with_context(|| format!("axis `{s}`: `{p}` is not a number"));
        let (start, stop, step) = match parts.as_slice() {
            [a] => (num(a)?, num(a)?, 1.0),
            [a, b, c] => (num(a)?, num(b)?, num(c)?),
            _ => bail!("axis `{s}` must look like name=start:stop:step"),
        };
        if !(start.is_finite() && stop.is_finite() && step > 0.0 && stop >= start) {
            bail!("axis `{s}` needs finite start <= stop and step > 0");
        }
        let axis = Axis { param: name.trim().parse()?, start, stop, step };
        if axis.len() > 100_000 {
            bail!("axis `{s}` has {} points", axis.len());
        }
        Ok(axis)
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub axes: Vec<Axis>,
    pub replicates: usize,
    /// Worker threads; `None` uses all available cores.
    pub width: Option<usize>,
}

impl SweepSpec {
    /// Cartesian product, first axis slowest.
    pub fn cells(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = vec![Vec::new()];
        for axis in &self.axes {
            let vals = axis.values();
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    vals.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub index: usize,
    pub replicate: usize,
    pub values: Vec<f64>,
    pub m: f64,
    pub chi: f64,
    pub regime: &'static str,
    pub verdict: Result<Verdict, String>,
}

#[derive(Debug, Clone)]
pub struct Verdict {
    pub label: &'static str,
    pub strong: bool,
    pub t_detect: Option<f64>,
    pub t_estimate: Option<f64>,
    pub sup_u: f64,
    pub t_final: f64,
    pub steps: usize,
}

fn run_cell(base: &RunConfig, spec: &SweepSpec, index: usize, replicate: usize, values: &[f64]) -> CellResult {
    let mut cfg = base.clone();
    for (axis, &v) in spec.axes.iter().zip(values) {
        axis.param.apply(&mut cfg, v);
    }
    if spec.replicates > 1 {
        if let Some(p) = cfg.initial.perturbation.as_mut() {
            *p = PerturbationConfig { amplitude: p.amplitude, seed: p.seed.wrapping_add(replicate as u64) };
        }
    }
    let regime = cfg.params().map(|p| mnchemo::regime(&p).label()).unwrap_or("invalid");
    let verdict = cfg
        .to_toml()
        .and_then(|text| RunConfig::from_toml(&text))
        .and_then(|cfg| simulate(&cfg, None))
        .map(|sim| {
            let (t_detect, t_estimate) = match &sim.classification {
                Classification::BlowupSuspected { t_detect, t_estimate, .. } => (Some(*t_detect), *t_estimate),
                _ => (None, None),
            };
            Verdict {
                label: sim.classification.label(),
                strong: sim.classification.is_strong(),
                t_detect,
                t_estimate,
                sup_u: sim.report.max_sup_u(),
                t_final: sim.report.final_state.t,
                steps: sim.report.accepted_steps,
            }
        })
        .map_err(|e| format!("{e:#}"));
    match &verdict {
        Ok(v) => info!("cell {index}/{replicate} {values:?}: {}", v.label),
        Err(e) => warn!("cell {index}/{replicate} {values:?} failed: {e}"),
    }
    CellResult {
        index,
        replicate,
        values: values.to_vec(),
        m: cfg.model.diffusion.m(),
        chi: cfg.model.chi,
        regime,
        verdict,
    }
}

pub fn sweep(base: &RunConfig, spec: &SweepSpec) -> Result<Vec<CellResult>> {
    if spec.axes.is_empty() {
        bail!("a sweep needs at least one --axis");
    }
    if spec.replicates == 0 {
        bail!("replicates must be at least 1");
    }
    if spec.replicates > 1 && base.initial.perturbation.is_none() {
        bail!("replicates > 1 need initial.perturbation, otherwise every replicate is identical");
    }
    let jobs: Vec<(usize, usize, Vec<f64>)> = spec
        .cells()
        .into_iter()
        .enumerate()
        .flat_map(|(i, v)| (0..spec.replicates).map(move |k| (i, k, v.clone())))
        .collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = spec.width {
        builder = builder.num_threads(w.max(1));
    }
    let pool = builder.build()?;
    let results: Vec<CellResult> =
        pool.install(|| jobs.par_iter().map(|(i, k, v)| run_cell(base, spec, *i, *k, v)).collect());
    Ok(results)
}

pub fn write_phase(results: &[CellResult], spec: &SweepSpec, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header: Vec<String> = vec!["cell".into(), "replicate".into()];
    header.extend(spec.axes.iter().map(|a| a.param.name().to_string()));
    header.extend(
        [
            "m_eff",
            "chi_eff",
            "regime",
            "verdict",
            "strong",
            "t_detect",
            "t_estimate",
            "sup_u",
            "t_final",
            "steps",
            "error",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
    for r in results {
        let mut row: Vec<String> = vec![r.index.to_string(), r.replicate.to_string()];
        row.extend(r.values.iter().map(|v| format!("{v}")));
        row.push(format!("{}", r.m));
        row.push(format!("{}", r.chi));
        row.push(r.regime.to_string());
        match &r.verdict {
            Ok(v) => row.extend([
                v.label.to_string(),
                v.strong.to_string(),
                opt(v.t_detect),
                opt(v.t_estimate),
                format!("{:e}", v.sup_u),
                format!("{:e}", v.t_final),
                v.steps.to_string(),
                String::new(),
            ]),
            Err(e) => row.extend([
                "Error".into(),
                "false".into(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                e.clone(),
            ]),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_values_are_index_based() {
        let a: Axis = "m=0.2:3.0:0.2".parse().unwrap();
        assert_eq!(a.len(), 15);
        let v = a.values();
        assert_eq!(v[0], 0.2);
        assert_eq!(v[14], 0.2 + 14.0 * 0.2);
        assert!((v[14] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn axis_rejects_garbage() {
        assert!("m=1:0:0.1".parse::<Axis>().is_err());
        assert!("q=1:2:1".parse::<Axis>().is_err());
        assert!("m=1:2".parse::<Axis>().is_err());
        assert!("m=1:2:0".parse::<Axis>().is_err());
        assert_eq!("chi=3".parse::<Axis>().unwrap().values(), vec![3.0]);
    }

    #[test]
    fn product_order() {
        let spec = SweepSpec {
            axes: vec!["m=1:2:1".parse().unwrap(), "chi=10:30:10".parse().unwrap()],
            replicates: 1,
            width: None,
        };
        let cells = spec.cells();
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[0], vec![1.0, 10.0]);
        assert_eq!(cells[2], vec![1.0, 30.0]);
        assert_eq!(cells[3], vec![2.0, 10.0]);
    }
}
