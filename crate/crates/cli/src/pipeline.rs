//! One configured run: resolve the concentration radius, integrate, classify, and
//! evaluate the moment diagnostics when an `[analysis]` section is present.

use std::sync::Arc;

use anyhow::{anyhow, bail, Result};
use log::{debug, info};

use mnchemo::analysis::{
    self, classify, cumulative_mass_z, empirical_k, empirical_t_star, largest_passing_r_star, moment_y, Classification,
    ClassifyOptions, GammaConstants, HypothesisInput, HypothesisReport, MomentConfig, OdiCoefficients,
};
use mnchemo::{regime, run, CancelToken, Coupling, ModelParams, RadialGrid, Regime, RunReport, Solver, State};

use crate::config::{AnalysisConfig, RStar, RunConfig};

/// Moment diagnostics for a finished run.
#[derive(Debug, Clone)]
pub struct AnalysisSummary {
    pub r_star: f64,
    pub k_empirical: f64,
    pub t_star_empirical: f64,
    pub gammas: GammaConstants<f64>,
    /// Smallness conditions re-evaluated with the empirical `K` and `T*`.
    pub hypotheses: HypothesisReport<f64>,
    /// `ηγ2χ(2-η) / (8 r*^{n(2-η)})`
    pub riccati_rate: f64,
    pub y0: f64,
    /// `1 / (rate · y0)`
    pub riccati_bound: f64,
    pub odi: OdiSummary,
}

#[derive(Debug, Clone, Default)]
pub struct OdiSummary {
    pub points: Vec<OdiPoint>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct OdiPoint {
    pub t: f64,
    pub r: f64,
    pub y: f64,
    pub y_t: f64,
    pub rhs: f64,
    pub residual: f64,
    pub scale: f64,
    pub inside: bool,
    pub holds: bool,
}

impl OdiSummary {
    pub fn inside_count(&self) -> usize {
        self.points.iter().filter(|p| p.inside).count()
    }

    pub fn holds_inside(&self) -> usize {
        self.points.iter().filter(|p| p.inside && p.holds).count()
    }

    /// Fraction of in-window points where the inequality holds; `None` without such points.
    pub fn fraction(&self) -> Option<f64> {
        let n = self.inside_count();
        (n > 0).then(|| self.holds_inside() as f64 / n as f64)
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: RunConfig,
    pub params: ModelParams<f64>,
    pub regime: Regime,
    pub r_star: Option<f64>,
    /// Smallness conditions at the chosen radius with the prior `K` and `T*`.
    pub prior_hypotheses: Option<HypothesisReport<f64>>,
    pub report: RunReport<f64>,
    pub classification: Classification<f64>,
    pub analysis: Option<AnalysisSummary>,
    pub wall_seconds: f64,
}

impl Simulation {
    /// 0 bounded, 2 suspected blow-up, 3 inconclusive.
    pub fn exit_code(&self) -> i32 {
        match self.classification {
            Classification::Bounded { .. } => 0,
            Classification::BlowupSuspected { .. } => 2,
            Classification::Inconclusive { .. } => 3,
        }
    }
}

/// The largest `m` for which the moment argument is set up, `None` outside its scope.
fn moment_m(params: &ModelParams<f64>) -> Option<f64> {
    if params.coupling != Coupling::Elliptic {
        return None;
    }
    let bound = params.diffusion.power_upper_bound(params.m_bar).ok()?;
    (bound.m < 1.0).then_some(bound.m)
}

fn coefficients(
    params: &ModelParams<f64>,
    a: &AnalysisConfig,
    alpha: f64,
    beta: f64,
    k: f64,
) -> Result<OdiCoefficients<f64>> {
    let cfg: MomentConfig<f64> = a.moment();
    let gammas = GammaConstants::with_k(alpha, beta, &cfg, params.n, params.radius, k);
    OdiCoefficients::from_params(params, cfg, gammas).map_err(|e| anyhow!("analysis: {e}"))
}

/// `1 / (4(2β + 1))`
pub fn t_star_cap(beta: f64) -> f64 {
    1.0 / (4.0 * (2.0 * beta + 1.0))
}

/// Largest radius passing the smallness conditions with the configured priors.
pub fn hypothesis_radius(cfg: &RunConfig, params: &ModelParams<f64>) -> Result<(f64, HypothesisReport<f64>)> {
    let a =
        cfg.analysis.as_ref().ok_or_else(|| anyhow!("initial.r_star: \"hypotheses\" needs an [analysis] section"))?;
    if moment_m(params).is_none() {
        bail!("initial.r_star: the concentration conditions need kappa = 0 and a diffusion exponent below 1");
    }
    let i = &cfg.initial;
    let coeffs = coefficients(params, a, i.alpha, i.beta, a.k_prior)?;
    let input = HypothesisInput { mu: i.mu, coeffs, t_star: a.t_star_prior.unwrap_or_else(|| t_star_cap(i.beta)) };
    let r = largest_passing_r_star(&input, params.radius)
        .ok_or_else(|| anyhow!("initial.r_star: no radius passes the concentration conditions"))?;
    // the bump is supported in B_{r*/2}; keep r* strictly inside the ball
    let r = r.min(0.5 * params.radius);
    Ok((r, analysis::check_blowup_hypotheses(r, &input)))
}

pub fn simulate(cfg: &RunConfig, cancel: Option<CancelToken>) -> Result<Simulation> {
    let started = std::time::Instant::now();
    let params = cfg.params()?;
    let grid: Arc<RadialGrid<f64>> = cfg.grid()?;
    let (r_star, prior) = match cfg.initial.r_star {
        None => (None, None),
        Some(RStar::Radius(r)) => (Some(r), None),
        Some(RStar::Rule(_)) => {
            let (r, rep) = hypothesis_radius(cfg, &params)?;
            info!("concentration radius from the smallness conditions: r* = {r:e}");
            (Some(r), Some(rep))
        }
    };
    let data = cfg.initial_data(&params, &grid, r_star)?;
    let solver = Solver::new(params, cfg.model.source.build(), cfg.solver.build(), Arc::clone(&grid))
        .map_err(|e| anyhow!("solver: {e}"))?;
    let initial = solver.initial_state(&data).map_err(|e| anyhow!("initial state: {e}"))?;
    let control = cfg.control.build(initial.u.sup_norm());

    let with_moments = cfg.analysis.is_some() && moment_m(&params).is_some() && r_star.is_some();
    let mut settings = cfg.output.settings();
    settings.cancel = cancel;
    if let Some(a) = &cfg.analysis {
        settings.v_norm_exponent = a.moment().p(params.n);
    }
    settings.keep_states = with_moments;

    debug!("starting run: {params:?}, {} cells, {control:?}", grid.cells());
    let report = run(&solver, initial, &control, &settings, &mut []).map_err(|e| anyhow!("run: {e}"))?;
    let classification = classify(&report, &ClassifyOptions::default());
    info!(
        "{} after {} steps ({} rejected), t = {:e}",
        classification.label(),
        report.accepted_steps,
        report.rejected_steps,
        report.final_state.t
    );

    let analysis = if with_moments {
        let a = cfg.analysis.as_ref().expect("checked above");
        Some(moment_diagnostics(&params, cfg, a, r_star.expect("checked above"), &report)?)
    } else {
        None
    };

    Ok(Simulation {
        config: cfg.clone(),
        regime: regime(&params),
        params,
        r_star,
        prior_hypotheses: prior,
        report,
        classification,
        analysis,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

fn moment_diagnostics(
    params: &ModelParams<f64>,
    cfg: &RunConfig,
    a: &AnalysisConfig,
    r_star: f64,
    report: &RunReport<f64>,
) -> Result<AnalysisSummary> {
    let i = &cfg.initial;
    let k = empirical_k(&report.samples)?;
    let t_star = empirical_t_star(&report.samples, i.mu, i.alpha, i.beta, k);
    let coeffs = coefficients(params, a, i.alpha, i.beta, k)?;
    let input = HypothesisInput { mu: i.mu, coeffs, t_star };
    let hypotheses = analysis::check_blowup_hypotheses(r_star, &input);

    let initial: &State<f64> = report.states.first().unwrap_or(&report.final_state);
    let y0 = moment_y(&initial.u, r_star, a.eta)?;
    let rate = analysis::riccati_rate(&coeffs, r_star);
    let riccati_bound = analysis::estimate_blowup_time(y0, rate).unwrap_or(f64::INFINITY);

    let mut odi = OdiSummary { points: Vec::new(), tolerance: a.odi_tolerance };
    for &frac in &a.odi_radii {
        let r = frac * r_star;
        for (res, inside) in analysis::odi_along(&report.states, r, &coeffs, i.mu, i.alpha, i.beta)? {
            odi.points.push(OdiPoint {
                t: res.t,
                r,
                y: res.y,
                y_t: res.y_t,
                rhs: res.rhs,
                residual: res.residual,
                scale: res.scale,
                inside,
                holds: res.holds(a.odi_tolerance),
            });
        }
    }
    Ok(AnalysisSummary {
        r_star,
        k_empirical: k,
        t_star_empirical: t_star,
        gammas: coeffs.gammas,
        hypotheses,
        riccati_rate: rate,
        y0,
        riccati_bound,
        odi,
    })
}

/// `z(r^n)` and `y(r)` of a state, for per-sample diagnostics.
pub fn moments_at(state: &State<f64>, r: f64, eta: f64) -> Result<(f64, f64)> {
    let z = cumulative_mass_z(&state.u);
    let s = r.powi(state.grid().dimension() as i32);
    Ok((z.eval(s), z.moment(s, eta)?))
}

/// [`simulate`], then, while the radius came from the smallness conditions and those
/// fail under the empirical `K` and `T*`, re-search the radius with them and rerun.
pub fn simulate_calibrated(cfg: &RunConfig, cancel: Option<CancelToken>) -> Result<Simulation> {
    let mut cfg = cfg.clone();
    let rounds = cfg.analysis.as_ref().map_or(0, |a| a.calibration_rounds);
    let mut sim = simulate(&cfg, cancel.clone())?;
    for round in 0..rounds {
        let searched = matches!(cfg.initial.r_star, Some(RStar::Rule(_)));
        let Some(a) = sim.analysis.as_ref().filter(|a| searched && !a.hypotheses.all_pass()) else {
            break;
        };
        info!(
            "calibration round {}: K = {:e}, T* = {:e} break the conditions at r* = {:e}",
            round + 1,
            a.k_empirical,
            a.t_star_empirical,
            a.r_star
        );
        let section = cfg.analysis.as_mut().expect("analysis present");
        section.k_prior = a.k_empirical;
        section.t_star_prior = Some(a.t_star_empirical);
        sim = simulate(&cfg, cancel.clone())?;
    }
    Ok(sim)
}
