//! Run artifacts: `timeseries.csv`, `snapshots/*.csv`, `odi.csv` and `summary.json`.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use mnchemo::analysis::{Classification, Evidence, HypothesisReport};
use mnchemo::solver::StallReason;
use mnchemo::{RunOutcome, State};

use crate::pipeline::{moments_at, Simulation};

/// Bumped whenever a field of `summary.json` changes meaning or disappears.
pub const SCHEMA_VERSION: u32 = 1;

pub const TIMESERIES_COLUMNS: [&str; 11] =
    ["t", "dt", "mass_u", "mass_v", "mass_uw", "sup_u", "sup_v", "sup_w", "min_u", "min_w", "v_norm"];

#[derive(Debug, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub regime: &'static str,
    pub outcome: OutcomeJson,
    pub classification: ClassificationJson,
    pub final_norms: NormsJson,
    pub steps: StepsJson,
    pub r_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prior_hypotheses: Option<HypothesesJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisJson>,
    pub wall_seconds: f64,
    pub config: crate::config::RunConfig,
}

#[derive(Debug, Serialize)]
pub struct OutcomeJson {
    pub kind: &'static str,
    pub t: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct ClassificationJson {
    pub verdict: &'static str,
    pub strong: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sup_u_inf: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_detect: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_estimate: Option<f64>,
    pub evidence: Vec<EvidenceJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct EvidenceJson {
    pub kind: &'static str,
    pub value: f64,
}

#[derive(Debug, Serialize)]
pub struct NormsJson {
    pub t: f64,
    pub mass_u: f64,
    pub mass_v: f64,
    pub sup_u: f64,
    pub sup_v: f64,
    pub sup_w: f64,
    pub min_u: f64,
    pub max_sup_u: f64,
}

#[derive(Debug, Serialize)]
pub struct StepsJson {
    pub accepted: usize,
    pub rejected: usize,
    pub clipped_values: usize,
    pub extrapolation_fallbacks: usize,
    pub smallest_dt: f64,
    pub largest_dt: f64,
}

#[derive(Debug, Serialize)]
pub struct InequalityJson {
    pub label: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct HypothesesJson {
    pub r_star: f64,
    pub c1: f64,
    pub all_pass: bool,
    pub checks: Vec<InequalityJson>,
}

impl From<&HypothesisReport<f64>> for HypothesesJson {
    fn from(h: &HypothesisReport<f64>) -> Self {
        HypothesesJson {
            r_star: h.r_star,
            c1: h.c1,
            all_pass: h.all_pass(),
            checks: h
                .checks
                .iter()
                .map(|c| InequalityJson { label: c.label, lhs: c.lhs, rhs: c.rhs, margin: c.margin, pass: c.pass })
                .collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct AnalysisJson {
    pub k_empirical: f64,
    pub t_star_empirical: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub hypotheses: HypothesesJson,
    pub riccati_rate: f64,
    pub y0: f64,
    pub riccati_bound: f64,
    pub odi_tolerance: f64,
    pub odi_points: usize,
    pub odi_inside: usize,
    pub odi_holds_inside: usize,
}

fn evidence_json(e: &Evidence<f64>) -> EvidenceJson {
    match *e {
        Evidence::CapExceeded { sup } => EvidenceJson { kind: "cap_exceeded", value: sup },
        Evidence::DtCollapse { ratio } => EvidenceJson { kind: "dt_collapse", value: ratio },
        Evidence::DtBelowMinimum { dt } => EvidenceJson { kind: "dt_below_minimum", value: dt },
        Evidence::ReciprocalFit { t_estimate } => EvidenceJson { kind: "reciprocal_fit", value: t_estimate },
    }
}

pub fn classification_json(c: &Classification<f64>) -> ClassificationJson {
    let mut out = ClassificationJson {
        verdict: c.label(),
        strong: c.is_strong(),
        sup_u_inf: None,
        t_detect: None,
        t_estimate: None,
        evidence: Vec::new(),
        reason: None,
    };
    match c {
        Classification::Bounded { sup_u_inf } => out.sup_u_inf = Some(*sup_u_inf),
        Classification::BlowupSuspected { t_detect, t_estimate, evidence } => {
            out.t_detect = Some(*t_detect);
            out.t_estimate = *t_estimate;
            out.evidence = evidence.iter().map(evidence_json).collect();
        }
        Classification::Inconclusive { reason } => out.reason = Some(reason.clone()),
    }
    out
}

fn outcome_json(o: &RunOutcome<f64>, t_final: f64) -> OutcomeJson {
    match o {
        RunOutcome::Completed => OutcomeJson { kind: "completed", t: t_final, detail: None },
        RunOutcome::BlowupSuspected { t_detect, sup } => {
            OutcomeJson { kind: "cap_exceeded", t: *t_detect, detail: Some(format!("sup = {sup:e}")) }
        }
        RunOutcome::Stalled { t, dt, reason } => {
            let detail = match reason {
                StallReason::DtBelowMinimum => format!("dt = {dt:e} below dt_min"),
                StallReason::SolverFailure(msg) => msg.clone(),
                StallReason::StepBudget => "step budget exhausted".to_string(),
            };
            OutcomeJson { kind: "stalled", t: *t, detail: Some(detail) }
        }
        RunOutcome::Cancelled { t } => OutcomeJson { kind: "cancelled", t: *t, detail: None },
    }
}

pub fn summary(sim: &Simulation) -> Summary {
    let r = &sim.report;
    let last = r.last_sample();
    Summary {
        schema_version: SCHEMA_VERSION,
        regime: sim.regime.label(),
        outcome: outcome_json(&r.outcome, r.final_state.t),
        classification: classification_json(&sim.classification),
        final_norms: NormsJson {
            t: last.t,
            mass_u: last.mass_u,
            mass_v: last.mass_v,
            sup_u: last.sup_u,
            sup_v: last.sup_v,
            sup_w: last.sup_w,
            min_u: last.min_u,
            max_sup_u: r.max_sup_u(),
        },
        steps: StepsJson {
            accepted: r.accepted_steps,
            rejected: r.rejected_steps,
            clipped_values: r.clipped_values,
            extrapolation_fallbacks: r.extrapolation_fallbacks,
            smallest_dt: if r.smallest_dt.is_finite() { r.smallest_dt } else { 0.0 },
            largest_dt: r.largest_dt,
        },
        r_star: sim.r_star,
        prior_hypotheses: sim.prior_hypotheses.as_ref().map(HypothesesJson::from),
        analysis: sim.analysis.as_ref().map(|a| AnalysisJson {
            k_empirical: a.k_empirical,
            t_star_empirical: a.t_star_empirical,
            gamma1: a.gammas.gamma1,
            gamma2: a.gammas.gamma2,
            gamma3: a.gammas.gamma3,
            hypotheses: HypothesesJson::from(&a.hypotheses),
            riccati_rate: a.riccati_rate,
            y0: a.y0,
            riccati_bound: a.riccati_bound,
            odi_tolerance: a.odi.tolerance,
            odi_points: a.odi.points.len(),
            odi_inside: a.odi.inside_count(),
            odi_holds_inside: a.odi.holds_inside(),
        }),
        wall_seconds: sim.wall_seconds,
        config: sim.config.clone(),
    }
}

fn write_state(path: &Path, state: &State<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["r", "u", "v", "w"])?;
    let g = state.grid();
    for (i, r) in g.centers().iter().enumerate() {
        w.serialize((r, state.u.values()[i], state.v.values()[i], state.w.values()[i]))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes every artifact of `sim` into `dir` (created if missing).
pub fn write_simulation(sim: &Simulation, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let r = &sim.report;

    let eta = sim.config.analysis.as_ref().map(|a| a.eta);
    let with_moments = sim.r_star.is_some() && eta.is_some() && r.states.len() == r.samples.len();
    let mut ts = csv::Writer::from_path(dir.join("timeseries.csv"))?;
    let mut header: Vec<&str> = TIMESERIES_COLUMNS.to_vec();
    if with_moments {
        header.extend(["z_rstar", "y_rstar"]);
    }
    ts.write_record(&header)?;
    for (k, s) in r.samples.iter().enumerate() {
        let mut row =
            vec![s.t, s.dt, s.mass_u, s.mass_v, s.mass_uw, s.sup_u, s.sup_v, s.sup_w, s.min_u, s.min_w, s.v_norm];
        if with_moments {
            let (z, y) = moments_at(&r.states[k], sim.r_star.expect("checked"), eta.expect("checked"))?;
            row.extend([z, y]);
        }
        ts.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    ts.flush()?;

    if !r.snapshots.is_empty() {
        let snap_dir = dir.join("snapshots");
        fs::create_dir_all(&snap_dir)?;
        for (k, st) in r.snapshots.iter().enumerate() {
            write_state(&snap_dir.join(format!("snapshot_{k:03}.csv")), st)?;
        }
    }
    write_state(&dir.join("final_state.csv"), &r.final_state)?;

    if let Some(a) = &sim.analysis {
        let mut w = csv::Writer::from_path(dir.join("odi.csv"))?;
        w.write_record(["t", "r", "y", "y_t", "rhs", "residual", "scale", "inside_window", "holds"])?;
        for p in &a.odi.points {
            w.serialize((p.t, p.r, p.y, p.y_t, p.rhs, p.residual, p.scale, p.inside, p.holds))?;
        }
        w.flush()?;
    }

    let json = serde_json::to_string_pretty(&summary(sim))?;
    fs::write(dir.join("summary.json"), json)?;
    Ok(())
}
