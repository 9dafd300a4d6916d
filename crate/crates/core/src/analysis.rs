//! Blow-up diagnostics over solver states: the cumulative mass `z`, the moment `y`,
//! the drift constants, the moment inequality residual, the smallness conditions on the
//! concentration radius, window monitors and run classification.

use std::fmt;

use crate::grid::{Field, GridError};
use crate::model::{ModelError, ModelParams};
use crate::scalar::Real;
use crate::solver::{RunOutcome, RunReport, Sample, StallReason, State};

#[derive(Debug, Clone, PartialEq)]
pub enum AnalysisError {
    InvalidConfig(String),
    EmptyHistory,
    NoEstimate(String),
    Grid(GridError),
    Model(ModelError),
}

impl fmt::Display for AnalysisError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnalysisError::InvalidConfig(msg) => write!(f, "invalid moment configuration: {msg}"),
            AnalysisError::EmptyHistory => write!(f, "no ‖v‖_p samples to take the maximum over"),
            AnalysisError::NoEstimate(msg) => write!(f, "no estimate: {msg}"),
            AnalysisError::Grid(e) => write!(f, "{e}"),
            AnalysisError::Model(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for AnalysisError {}

impl From<GridError> for AnalysisError {
    fn from(e: GridError) -> Self {
        AnalysisError::Grid(e)
    }
}

impl From<ModelError> for AnalysisError {
    fn from(e: ModelError) -> Self {
        AnalysisError::Model(e)
    }
}

/// `z(s) = n ∫_0^{s^{1/n}} ρ^{n-1} u dρ` on the nodes `s_k = r_{k+1/2}^n`.
///
/// Exact for the cellwise constant `u`: `z` is piecewise linear in `s` with slope `u_i`
/// on cell `i`, so `z_s = u`.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeMass<T> {
    nodes: Vec<T>,
    values: Vec<T>,
    slopes: Vec<T>,
}

pub fn cumulative_mass_z<T: Real>(u: &Field<T>) -> CumulativeMass<T> {
    let grid = u.grid();
    let n = grid.dimension() as i32;
    let nodes: Vec<T> = grid.faces().iter().map(|r| r.powi(n)).collect();
    let mut values = Vec::with_capacity(nodes.len());
    values.push(T::zero());
    let mut acc = T::zero();
    for (i, &ui) in u.values().iter().enumerate() {
        acc = acc + ui * (nodes[i + 1] - nodes[i]);
        values.push(acc);
    }
    CumulativeMass { nodes, values, slopes: u.values().to_vec() }
}

impl<T: Real> CumulativeMass<T> {
    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// `z(R^n) = ∫u / |B_1|`.
    pub fn total(&self) -> T {
        *self.values.last().expect("nonempty")
    }

    fn cell_of(&self, s: T) -> usize {
        let m = self.slopes.len();
        match self.nodes.binary_search_by(|x| x.partial_cmp(&s).unwrap_or(std::cmp::Ordering::Less)) {
            Ok(k) => k.min(m - 1),
            Err(k) => k.saturating_sub(1).min(m - 1),
        }
    }

    /// `z(s)` for `s` in `[0, R^n]`; clamped outside.
    pub fn eval(&self, s: T) -> T {
        if s <= T::zero() {
            return T::zero();
        }
        if s >= *self.nodes.last().expect("nonempty") {
            return self.total();
        }
        let k = self.cell_of(s);
        self.values[k] + self.slopes[k] * (s - self.nodes[k])
    }

    /// `∫_0^{upper} s^{-η} z(s) ds`, integrated in closed form cell by cell.
    pub fn moment(&self, upper: T, eta: T) -> Result<T, AnalysisError> {
        if !(eta < T::one()) || eta < T::zero() {
            return Err(AnalysisError::InvalidConfig(format!("eta must lie in [0, 1), got {eta}")));
        }
        let a1 = T::one() - eta;
        let a2 = T::lit(2.0) - eta;
        let mut total = T::zero();
        let last = *self.nodes.last().expect("nonempty");
        let upper = upper.min(last);
        for k in 0..self.slopes.len() {
            let a = self.nodes[k];
            if a >= upper {
                break;
            }
            let b = self.nodes[k + 1].min(upper);
            // z = (z_k - u_k a) + u_k s on [a, b]
            let i0 = (b.powf(a1) - a.powf(a1)) / a1;
            let i1 = (b.powf(a2) - a.powf(a2)) / a2;
            total = total + (self.values[k] - self.slopes[k] * a) * i0 + self.slopes[k] * i1;
        }
        Ok(total)
    }
}

/// `y(r) = ∫_0^{r^n} s^{-η} z(s) ds`.
pub fn moment_y<T: Real>(u: &Field<T>, r: T, eta: T) -> Result<T, AnalysisError> {
    let grid = u.grid();
    if !(r > T::zero()) || r > grid.radius() {
        return Err(AnalysisError::Grid(GridError::RadiusOutOfRange { r: r.as_f64(), radius: grid.radius().as_f64() }));
    }
    cumulative_mass_z(u).moment(r.powi(grid.dimension() as i32), eta)
}

/// Free parameters of the moment argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentConfig<T> {
    pub epsilon: T,
    pub eta: T,
    pub lambda: T,
    /// Exponent of the `‖v‖_p` bound; `None` selects the smallest admissible value.
    pub p: Option<T>,
}

impl<T: Real> Default for MomentConfig<T> {
    fn default() -> Self {
        MomentConfig { epsilon: T::lit(0.1), eta: T::lit(0.2), lambda: T::lit(0.1), p: None }
    }
}

impl<T: Real> MomentConfig<T> {
    /// `p` itself, or `1 / (1 - 2/n + ε)`, the smallest `p` with `(p-1)/p ≥ 2/n - ε`.
    pub fn p(&self, n: u32) -> T {
        self.p.unwrap_or_else(|| {
            let two_n = T::lit(2.0) / T::from_count(n as usize);
            (T::one() - two_n + self.epsilon).recip()
        })
    }

    /// `ξ = (1 - 2/n - η - λ) / (1 - m) + 1`.
    pub fn xi(&self, n: u32, m: T) -> T {
        let two_n = T::lit(2.0) / T::from_count(n as usize);
        (T::one() - two_n - self.eta - self.lambda) / (T::one() - m) + T::one()
    }

    /// Checks every admissibility constraint for diffusion exponent `m` in dimension `n`.
    pub fn validate(&self, n: u32, m: T) -> Result<(), AnalysisError> {
        let bad = |msg: String| Err(AnalysisError::InvalidConfig(msg));
        if n != 2 && n != 3 {
            return bad(format!("dimension must be 2 or 3, got {n}"));
        }
        if !(m > T::zero() && m < T::one()) {
            return bad(format!("the moment inequality needs 0 < m < 1, got m = {m}"));
        }
        let nf = T::from_count(n as usize);
        let two_n = T::lit(2.0) / nf;
        let (eps, eta, lambda) = (self.epsilon, self.eta, self.lambda);
        if !(eps > T::zero() && eps < two_n) {
            return bad(format!("epsilon must lie in (0, {two_n}), got {eps}"));
        }
        let eta_max = (T::lit(2.0) - two_n - m).min(two_n - eps).min(T::one());
        if !(eta > T::zero() && eta < eta_max) {
            return bad(format!("eta must lie in (0, {eta_max}), got {eta}"));
        }
        let lambda_max = T::lit(2.0) - m - two_n - eta;
        if !(lambda > T::zero() && lambda < lambda_max) {
            return bad(format!("lambda must lie in (0, {lambda_max}), got {lambda}"));
        }
        let xi = self.xi(n, m);
        if !(xi > T::zero()) {
            return bad(format!("xi must be positive, got {xi}"));
        }
        let p = self.p(n);
        let p_hi = if n == 2 { T::infinity() } else { nf / (nf - T::lit(2.0)) };
        if !(p > nf / T::lit(2.0) && p < p_hi) {
            return bad(format!("p must lie in ({}, {p_hi}), got {p}", nf / T::lit(2.0)));
        }
        let slack = T::lit(1e-12);
        if (p - T::one()) / p < two_n - eps - slack {
            return bad(format!("p = {p} violates (p-1)/p ≥ 2/n - epsilon"));
        }
        Ok(())
    }
}

/// Drift constants of the cumulative mass inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaConstants<T> {
    pub gamma1: T,
    pub gamma2: T,
    pub gamma3: T,
    /// Bound used for `‖v‖_p`.
    pub k: T,
}

impl<T: Real> GammaConstants<T> {
    /// `γ1 = K (R^n)^{(p-1)/p - (2/n - ε)} / |B_1|^{1/p}`, `γ2 = α/2`, `γ3 = 2β + 1`.
    pub fn with_k(alpha: T, beta: T, cfg: &MomentConfig<T>, n: u32, radius: T, k: T) -> Self {
        let p = cfg.p(n);
        let two_n = T::lit(2.0) / T::from_count(n as usize);
        let b1: T = crate::scalar::unit_ball_volume(n);
        let rn = radius.powi(n as i32);
        let gamma1 = k * rn.powf((p - T::one()) / p - (two_n - cfg.epsilon)) / b1.powf(p.recip());
        GammaConstants { gamma1, gamma2: alpha * T::lit(0.5), gamma3: T::lit(2.0) * beta + T::one(), k }
    }
}

/// Constants with `K` taken as the largest sampled `‖v‖_p`.
pub fn gamma_constants<T: Real>(
    alpha: T,
    beta: T,
    cfg: &MomentConfig<T>,
    params: &ModelParams<T>,
    v_norm_history: &[T],
) -> Result<GammaConstants<T>, AnalysisError> {
    if v_norm_history.is_empty() {
        return Err(AnalysisError::EmptyHistory);
    }
    let k = v_norm_history.iter().fold(T::zero(), |m, &x| m.max(x));
    Ok(GammaConstants::with_k(alpha, beta, cfg, params.n, params.radius, k))
}

/// Everything the moment inequality depends on besides the state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdiCoefficients<T> {
    pub n: u32,
    pub chi: T,
    pub m: T,
    pub k_d: T,
    pub cfg: MomentConfig<T>,
    pub gammas: GammaConstants<T>,
}

impl<T: Real> OdiCoefficients<T> {
    /// Reads `n`, `χ`, `m` and `K_D` from the model.
    pub fn from_params(
        params: &ModelParams<T>,
        cfg: MomentConfig<T>,
        gammas: GammaConstants<T>,
    ) -> Result<Self, AnalysisError> {
        let bound = params.diffusion.power_upper_bound(params.m_bar)?;
        cfg.validate(params.n, bound.m)?;
        Ok(OdiCoefficients { n: params.n, chi: params.chi, m: bound.m, k_d: bound.k_d, cfg, gammas })
    }

    fn nf(&self) -> T {
        T::from_count(self.n as usize)
    }

    /// Coefficient of `y^2` in the full inequality: `η γ2 χ (2-η) / (2 r^{n(2-η)})`.
    pub fn riccati_coefficient(&self, r: T) -> T {
        let eta = self.cfg.eta;
        eta * self.gammas.gamma2 * self.chi * (T::lit(2.0) - eta)
            / (T::lit(2.0) * r.powf(self.nf() * (T::lit(2.0) - eta)))
    }

    /// Right-hand side split into its four terms, given `y(r)` and `z(r^n)`.
    pub fn rhs_terms(&self, r: T, y: T, z: T) -> [T; 4] {
        let nf = self.nf();
        let two_n = T::lit(2.0) / nf;
        let eta = self.cfg.eta;
        let quadratic = self.riccati_coefficient(r) * y * y;
        let linear = -self.gammas.gamma3 * y;
        let drift = -self.gammas.gamma1 * self.chi * r.powf(nf * (two_n - self.cfg.epsilon - eta)) * z;
        let xi = self.cfg.xi(self.n, self.m);
        let diffusion = -(nf * nf * self.k_d * (T::lit(2.0) - two_n - eta) / self.m)
            * (r.powf(nf * self.cfg.lambda / self.m) * z + r.powf(nf * xi) / xi);
        [quadratic, linear, drift, diffusion]
    }
}

/// One evaluation of `y_t - RHS` at radius `r` between two states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdiResidual<T> {
    pub t: T,
    pub y: T,
    pub y_t: T,
    /// Trapezoidal average of each right-hand side term over the interval.
    pub terms: [T; 4],
    pub rhs: T,
    pub residual: T,
    /// Largest magnitude among the right-hand side terms.
    pub scale: T,
}

impl<T: Real> OdiResidual<T> {
    /// `residual ≥ -tol · scale`.
    pub fn holds(&self, tol: T) -> bool {
        self.residual >= -tol * self.scale
    }
}

/// `y_t - RHS` with `y_t` the difference quotient over `[a.t, b.t]` and the right-hand
/// side averaged over both endpoints.
pub fn odi_residual<T: Real>(
    a: &State<T>,
    b: &State<T>,
    r: T,
    coeffs: &OdiCoefficients<T>,
) -> Result<OdiResidual<T>, AnalysisError> {
    let dt = b.t - a.t;
    if !(dt > T::zero()) {
        return Err(AnalysisError::InvalidConfig(format!("states must be time ordered, got δ = {dt}")));
    }
    let eta = coeffs.cfg.eta;
    let s = r.powi(coeffs.n as i32);
    let za = cumulative_mass_z(&a.u);
    let zb = cumulative_mass_z(&b.u);
    let ya = za.moment(s, eta)?;
    let yb = zb.moment(s, eta)?;
    let ta = coeffs.rhs_terms(r, ya, za.eval(s));
    let tb = coeffs.rhs_terms(r, yb, zb.eval(s));
    let half = T::lit(0.5);
    let terms = [(ta[0] + tb[0]) * half, (ta[1] + tb[1]) * half, (ta[2] + tb[2]) * half, (ta[3] + tb[3]) * half];
    let rhs = terms.iter().fold(T::zero(), |acc, &x| acc + x);
    let y_t = (yb - ya) / dt;
    let scale = terms.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    Ok(OdiResidual { t: (a.t + b.t) * half, y: (ya + yb) * half, y_t, terms, rhs, residual: y_t - rhs, scale })
}

/// Status of the a-priori window on mass, `w` and `‖v‖_p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowReport<T> {
    pub mass: T,
    pub min_w: T,
    pub sup_w: T,
    pub v_norm: T,
    /// `μ/2 ≤ ∫u ≤ 2μ`
    pub mass_ok: bool,
    /// `w ≥ α/2` and `‖w‖_∞ ≤ 2β`
    pub w_ok: bool,
    /// `‖v‖_p ≤ K`
    pub v_ok: bool,
}

impl<T: Real> WindowReport<T> {
    pub fn inside(&self) -> bool {
        self.mass_ok && self.w_ok && self.v_ok
    }

    fn from_values(mass: T, min_w: T, sup_w: T, v_norm: T, mu: T, alpha: T, beta: T, k: T) -> Self {
        let half = T::lit(0.5);
        let two = T::lit(2.0);
        WindowReport {
            mass,
            min_w,
            sup_w,
            v_norm,
            mass_ok: mass >= half * mu && mass <= two * mu,
            w_ok: min_w >= half * alpha && sup_w <= two * beta,
            v_ok: v_norm <= k,
        }
    }
}

pub fn check_window<T: Real>(
    state: &State<T>,
    mu: T,
    alpha: T,
    beta: T,
    p: T,
    k: T,
) -> Result<WindowReport<T>, AnalysisError> {
    let v_norm = state.v.lp_norm(p)?;
    Ok(WindowReport::from_values(state.u.integral(), state.w.min(), state.w.sup_norm(), v_norm, mu, alpha, beta, k))
}

/// Window check from recorded diagnostics (`v_norm` must have been sampled with the same `p`).
pub fn check_window_sample<T: Real>(sample: &Sample<T>, mu: T, alpha: T, beta: T, k: T) -> WindowReport<T> {
    WindowReport::from_values(sample.mass_u, sample.min_w, sample.sup_w, sample.v_norm, mu, alpha, beta, k)
}

/// Length of the window: the first exit time, capped by `1 / (4(2β + 1))`.
pub fn empirical_t_star<T: Real>(samples: &[Sample<T>], mu: T, alpha: T, beta: T, k: T) -> T {
    let cap = (T::lit(4.0) * (T::lit(2.0) * beta + T::one())).recip();
    samples.iter().find(|s| !check_window_sample(s, mu, alpha, beta, k).inside()).map_or(cap, |s| s.t.min(cap))
}

/// Largest sampled `‖v‖_p`.
pub fn empirical_k<T: Real>(samples: &[Sample<T>]) -> Result<T, AnalysisError> {
    if samples.is_empty() {
        return Err(AnalysisError::EmptyHistory);
    }
    Ok(samples.iter().fold(T::zero(), |m, s| m.max(s.v_norm)))
}

/// `C1 = μ (1 - 2^{-n(1-η)}) / (2 (1-η) |B_1|)`, the guaranteed lower bound of
/// `y(r*, 0) / r*^{n(1-η)}` when half the mass sits in `B_{r*/2}`.
pub fn c1<T: Real>(mu: T, eta: T, n: u32) -> T {
    let nf = T::from_count(n as usize);
    let b1: T = crate::scalar::unit_ball_volume(n);
    mu * (T::one() - T::lit(0.5).powf(nf * (T::one() - eta))) / (T::lit(2.0) * (T::one() - eta) * b1)
}

/// Inputs of the smallness conditions on the concentration radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisInput<T> {
    pub mu: T,
    pub coeffs: OdiCoefficients<T>,
    pub t_star: T,
}

/// One inequality `lhs ≥ rhs` (strict for the time horizon).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityCheck<T> {
    pub label: &'static str,
    pub lhs: T,
    pub rhs: T,
    /// `lhs / rhs - 1`; nondecreasing as `r*` shrinks.
    pub margin: T,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisReport<T> {
    pub r_star: T,
    pub c1: T,
    pub checks: [InequalityCheck<T>; 4],
}

impl<T: Real> HypothesisReport<T> {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Evaluates the four smallness conditions at `r_star`:
///
/// * `drift`: `ηγ2(2-η)C1² / (32 r*^{nη}) ≥ 2μγ1 r*^{n(2/n-ε-η)} / |B_1|`
/// * `decay`: `ηγ2χ(2-η)C1 / (16 r*^n) ≥ γ3`
/// * `diffusion`: `ηγ2(2-η)C1² / (32 r*^{nη}) ≥ (n²K_D(2-2/n-η)/m)(2μ r*^{nλ/m}/|B_1| + r*^{nξ}/ξ)`
/// * `horizon`: `(ηγ2χ(2-η) / (8 r*^{n(2-η)})) T* > 2 / (C1 r*^{n(1-η)})`
pub fn check_blowup_hypotheses<T: Real>(r_star: T, input: &HypothesisInput<T>) -> HypothesisReport<T> {
    let c = &input.coeffs;
    let n = c.n;
    let nf = T::from_count(n as usize);
    let two_n = T::lit(2.0) / nf;
    let (eps, eta, lambda) = (c.cfg.epsilon, c.cfg.eta, c.cfg.lambda);
    let g = c.gammas;
    let mu = input.mu;
    let b1: T = crate::scalar::unit_ball_volume(n);
    let c1v = c1(mu, eta, n);
    let two = T::lit(2.0);
    let base = eta * g.gamma2 * (two - eta);
    let xi = c.cfg.xi(n, c.m);

    let quad = base * c1v * c1v / (T::lit(32.0) * r_star.powf(nf * eta));
    let drift_rhs = two * mu * g.gamma1 * r_star.powf(nf * (two_n - eps - eta)) / b1;
    let decay_lhs = base * c.chi * c1v / (T::lit(16.0) * r_star.powf(nf));
    let diff_rhs = (nf * nf * c.k_d * (two - two_n - eta) / c.m)
        * (two * mu * r_star.powf(nf * lambda / c.m) / b1 + r_star.powf(nf * xi) / xi);
    let horizon_lhs = base * c.chi / (T::lit(8.0) * r_star.powf(nf * (two - eta))) * input.t_star;
    let horizon_rhs = two / (c1v * r_star.powf(nf * (T::one() - eta)));

    let check = |label, lhs: T, rhs: T, strict: bool| InequalityCheck {
        label,
        lhs,
        rhs,
        margin: lhs / rhs - T::one(),
        pass: if strict { lhs > rhs } else { lhs >= rhs },
    };
    HypothesisReport {
        r_star,
        c1: c1v,
        checks: [
            check("drift", quad, drift_rhs, false),
            check("decay", decay_lhs, g.gamma3, false),
            check("diffusion", quad, diff_rhs, false),
            check("horizon", horizon_lhs, horizon_rhs, true),
        ],
    }
}

/// Largest `r* ≤ r_max` passing all four conditions: geometric halving to a passing
/// radius, then 40 geometric bisection steps, returning the passing (smaller) end.
pub fn largest_passing_r_star<T: Real>(input: &HypothesisInput<T>, r_max: T) -> Option<T> {
    if check_blowup_hypotheses(r_max, input).all_pass() {
        return Some(r_max);
    }
    let mut hi = r_max;
    let mut lo = r_max;
    let mut found = false;
    for _ in 0..400 {
        lo = lo * T::lit(0.5);
        if lo <= T::min_positive_value() {
            break;
        }
        if check_blowup_hypotheses(lo, input).all_pass() {
            found = true;
            break;
        }
        hi = lo;
    }
    if !found {
        return None;
    }
    for _ in 0..40 {
        let mid = (lo * hi).sqrt();
        if check_blowup_hypotheses(mid, input).all_pass() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

/// Blow-up time bound `1 / (c y0)` for `y' ≥ c y²`.
pub fn estimate_blowup_time<T: Real>(y0: T, c: T) -> Result<T, AnalysisError> {
    if !(y0 > T::zero() && c > T::zero()) {
        return Err(AnalysisError::NoEstimate(format!("need y0 > 0 and c > 0, got {y0}, {c}")));
    }
    Ok((c * y0).recip())
}

/// Coefficient `ηγ2χ(2-η) / (8 r*^{n(2-η)})` of the reduced Riccati inequality.
pub fn riccati_rate<T: Real>(coeffs: &OdiCoefficients<T>, r_star: T) -> T {
    coeffs.riccati_coefficient(r_star) / T::lit(4.0)
}

/// Fits `1/‖u‖_∞ = a + b t` by least squares on the last `k` samples and returns the
/// root `-a/b`. The series must be strictly increasing in `‖u‖_∞`.
pub fn extrapolate_supnorm<T: Real>(series: &[(T, T)], k: usize) -> Result<T, AnalysisError> {
    let k = k.min(series.len());
    if k < 2 {
        return Err(AnalysisError::NoEstimate("need at least two samples".into()));
    }
    let tail = &series[series.len() - k..];
    if tail.windows(2).any(|w| !(w[1].1 > w[0].1) || !(w[1].0 > w[0].0)) {
        return Err(AnalysisError::NoEstimate("sup norm series is not strictly increasing".into()));
    }
    let kf = T::from_count(k);
    // centred on the first sample so the fit is affine equivariant in t
    let t0 = tail[0].0;
    let xs: Vec<T> = tail.iter().map(|&(t, _)| t - t0).collect();
    let ys: Vec<T> = tail.iter().map(|&(_, s)| s.recip()).collect();
    let mx = xs.iter().fold(T::zero(), |a, &x| a + x) / kf;
    let my = ys.iter().fold(T::zero(), |a, &y| a + y) / kf;
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(&ys) {
        sxy = sxy + (x - mx) * (y - my);
        sxx = sxx + (x - mx) * (x - mx);
    }
    let slope = sxy / sxx;
    if !(slope < T::zero()) || !slope.is_finite() {
        return Err(AnalysisError::NoEstimate("reciprocal sup norm is not decreasing".into()));
    }
    Ok(t0 + mx - my / slope)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Evidence<T> {
    /// `‖u‖_∞ + ‖w‖_∞` crossed the cap.
    CapExceeded { sup: T },
    /// Last step over the largest accepted step.
    DtCollapse { ratio: T },
    /// The step control could not go below `dt_min`.
    DtBelowMinimum { dt: T },
    /// Root of the reciprocal sup-norm fit.
    ReciprocalFit { t_estimate: T },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Classification<T> {
    Bounded { sup_u_inf: T },
    BlowupSuspected { t_detect: T, t_estimate: Option<T>, evidence: Vec<Evidence<T>> },
    Inconclusive { reason: String },
}

impl<T: Real> Classification<T> {
    pub fn label(&self) -> &'static str {
        match self {
            Classification::Bounded { .. } => "Bounded",
            Classification::BlowupSuspected { .. } => "BlowupSuspected",
            Classification::Inconclusive { .. } => "Inconclusive",
        }
    }

    /// Both the cap and a step-size collapse were observed.
    pub fn is_strong(&self) -> bool {
        match self {
            Classification::BlowupSuspected { evidence, .. } => {
                let cap = evidence.iter().any(|e| matches!(e, Evidence::CapExceeded { .. }));
                let dt =
                    evidence.iter().any(|e| matches!(e, Evidence::DtCollapse { .. } | Evidence::DtBelowMinimum { .. }));
                cap && dt
            }
            _ => false,
        }
    }
}

/// Thresholds of the classifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyOptions<T> {
    /// Final over largest step below this counts as a step-size collapse.
    pub dt_collapse_ratio: T,
    /// Number of trailing samples in the reciprocal fit.
    pub fit_samples: usize,
    /// Allowed growth of the last-quarter maximum over the earlier maximum.
    pub growth_factor: T,
}

impl<T: Real> Default for ClassifyOptions<T> {
    fn default() -> Self {
        ClassifyOptions { dt_collapse_ratio: T::lit(1e-3), fit_samples: 8, growth_factor: T::lit(2.0) }
    }
}

pub fn classify<T: Real>(report: &RunReport<T>, options: &ClassifyOptions<T>) -> Classification<T> {
    let samples = &report.samples;
    let sup_max = report.max_sup_u();
    let series: Vec<(T, T)> = samples.iter().map(|s| (s.t, s.sup_u)).collect();
    let fit = extrapolate_supnorm(&series, options.fit_samples).ok();
    let last_dt = samples.iter().rev().map(|s| s.dt).find(|&dt| dt > T::zero()).unwrap_or(T::zero());
    let dt_ratio = if report.largest_dt > T::zero() { last_dt / report.largest_dt } else { T::one() };
    let collapse = dt_ratio < options.dt_collapse_ratio;

    match &report.outcome {
        RunOutcome::Completed => {
            let t0 = samples[0].t;
            let split = t0 + (report.t_end - t0) * T::lit(0.75);
            let before = samples.iter().filter(|s| s.t < split).fold(T::zero(), |m, s| m.max(s.sup_u));
            let last = samples.iter().filter(|s| s.t >= split).fold(T::zero(), |m, s| m.max(s.sup_u));
            if last <= options.growth_factor * before || samples.len() == 1 {
                Classification::Bounded { sup_u_inf: sup_max }
            } else {
                Classification::Inconclusive {
                    reason: format!("sup norm still growing: last-quarter max {last} against {before} before"),
                }
            }
        }
        RunOutcome::BlowupSuspected { t_detect, sup } => {
            let mut evidence = vec![Evidence::CapExceeded { sup: *sup }];
            if collapse {
                evidence.push(Evidence::DtCollapse { ratio: dt_ratio });
            }
            if let Some(t) = fit {
                evidence.push(Evidence::ReciprocalFit { t_estimate: t });
            }
            Classification::BlowupSuspected { t_detect: *t_detect, t_estimate: fit, evidence }
        }
        RunOutcome::Stalled { t, dt, reason: StallReason::DtBelowMinimum } => match fit {
            Some(t_est) => {
                let mut evidence = vec![Evidence::DtBelowMinimum { dt: *dt }];
                if collapse {
                    evidence.push(Evidence::DtCollapse { ratio: dt_ratio });
                }
                evidence.push(Evidence::ReciprocalFit { t_estimate: t_est });
                Classification::BlowupSuspected { t_detect: *t, t_estimate: Some(t_est), evidence }
            }
            None => Classification::Inconclusive {
                reason: format!("step size fell below dt_min at t = {t} without a diverging sup norm"),
            },
        },
        RunOutcome::Stalled { t, reason, .. } => {
            Classification::Inconclusive { reason: format!("stalled at t = {t}: {reason:?}") }
        }
        RunOutcome::Cancelled { t } => Classification::Inconclusive { reason: format!("cancelled at t = {t}") },
    }
}

/// Moment inequality residuals at radius `r` over consecutive kept states, each paired
/// with whether both endpoints lie inside the window.
pub fn odi_along<T: Real>(
    states: &[State<T>],
    r: T,
    coeffs: &OdiCoefficients<T>,
    mu: T,
    alpha: T,
    beta: T,
) -> Result<Vec<(OdiResidual<T>, bool)>, AnalysisError> {
    let p = coeffs.cfg.p(coeffs.n);
    let k = coeffs.gammas.k;
    let mut out = Vec::with_capacity(states.len().saturating_sub(1));
    for pair in states.windows(2) {
        if !(pair[1].t > pair[0].t) {
            continue;
        }
        let inside = check_window(&pair[0], mu, alpha, beta, p, k)?.inside()
            && check_window(&pair[1], mu, alpha, beta, p, k)?.inside();
        out.push((odi_residual(&pair[0], &pair[1], r, coeffs)?, inside));
    }
    Ok(out)
}
