//! Model parameters, diffusion laws and admissible initial data.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::grid::{Field, GridError, RadialGrid};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    InvalidParameter {
        name: &'static str,
        reason: String,
    },
    /// `D(0)` is unbounded for a pure power law with exponent below one.
    SingularDiffusion {
        m: f64,
    },
    NegativeDensity(f64),
    /// An initial data request that no profile of the chosen kind can satisfy.
    Infeasible(String),
    InvariantViolation(String),
    Grid(GridError),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::InvalidParameter { name, reason } => write!(f, "invalid parameter `{name}`: {reason}"),
            ModelError::SingularDiffusion { m } => {
                write!(f, "pure power diffusion with m = {m} < 1 is unbounded at u = 0")
            }
            ModelError::NegativeDensity(u) => write!(f, "diffusion evaluated at negative density {u}"),
            ModelError::Infeasible(msg) => write!(f, "infeasible initial data: {msg}"),
            ModelError::InvariantViolation(msg) => write!(f, "initial data invariant violated: {msg}"),
            ModelError::Grid(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for ModelError {}

impl From<GridError> for ModelError {
    fn from(e: GridError) -> Self {
        ModelError::Grid(e)
    }
}

fn invalid(name: &'static str, reason: impl Into<String>) -> ModelError {
    ModelError::InvalidParameter { name, reason: reason.into() }
}

/// Whether the `v` equation is elliptic (`kappa = 0`) or parabolic (`kappa = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Coupling {
    Elliptic,
    Parabolic,
}

impl Coupling {
    pub fn from_kappa(kappa: u8) -> Option<Self> {
        match kappa {
            0 => Some(Coupling::Elliptic),
            1 => Some(Coupling::Parabolic),
            _ => None,
        }
    }

    pub fn kappa(self) -> u8 {
        match self {
            Coupling::Elliptic => 0,
            Coupling::Parabolic => 1,
        }
    }
}

/// Density dependent diffusivity `D(u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiffusionLaw<T> {
    /// `D(u) = (1 + u)^{m-1}`
    Prototype { m: T },
    /// `D(u) = coeff u^{m-1}`; degenerate at zero for `m > 1`, singular for `m < 1`.
    PurePower { m: T, coeff: T },
}

/// `D(h) <= k_d h^{m-1}` with `0 < m < 1`, the form needed by the blow-up estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerUpperBound<T> {
    pub m: T,
    pub k_d: T,
}

impl<T: Real> DiffusionLaw<T> {
    pub fn exponent(&self) -> T {
        match *self {
            DiffusionLaw::Prototype { m } | DiffusionLaw::PurePower { m, .. } => m,
        }
    }

    pub fn eval(&self, u: T) -> Result<T, ModelError> {
        if u < T::zero() {
            return Err(ModelError::NegativeDensity(u.as_f64()));
        }
        match *self {
            DiffusionLaw::Prototype { m } => Ok((T::one() + u).powf(m - T::one())),
            DiffusionLaw::PurePower { m, coeff } => {
                if u == T::zero() {
                    if m < T::one() {
                        return Err(ModelError::SingularDiffusion { m: m.as_f64() });
                    }
                    return Ok(if m == T::one() { coeff } else { T::zero() });
                }
                Ok(coeff * u.powf(m - T::one()))
            }
        }
    }

    /// `D(0) = 0`.
    pub fn is_degenerate(&self) -> bool {
        matches!(*self, DiffusionLaw::PurePower { m, .. } if m > T::one())
    }

    /// `D(0) = ∞`.
    pub fn is_singular(&self) -> bool {
        matches!(*self, DiffusionLaw::PurePower { m, .. } if m < T::one())
    }

    /// Upper power bound used by the blow-up machinery. For `m <= 0` the bound is
    /// re-expressed with a user supplied exponent `m_bar` in `(0, 1)` and constant
    /// `max{sup_{[0,1]} D, K_D}`.
    pub fn power_upper_bound(&self, m_bar: Option<T>) -> Result<PowerUpperBound<T>, ModelError> {
        let m = self.exponent();
        if m >= T::one() {
            return Err(invalid("m", "a power upper bound with exponent below one needs m < 1"));
        }
        let k_d = match *self {
            // (1+h)^{m-1} <= h^{m-1} for every h > 0
            DiffusionLaw::Prototype { .. } => T::one(),
            DiffusionLaw::PurePower { coeff, .. } => coeff,
        };
        if m > T::zero() {
            return Ok(PowerUpperBound { m, k_d });
        }
        let m_bar = m_bar
            .ok_or_else(|| invalid("m_bar", "m <= 0 needs an explicit m_bar in (0, 1) to restate D <= K h^(m-1)"))?;
        if !(m_bar > T::zero() && m_bar < T::one()) {
            return Err(invalid("m_bar", format!("must lie in (0, 1), got {m_bar}")));
        }
        let sup_unit = match *self {
            // decreasing on [0, 1] for m < 1
            DiffusionLaw::Prototype { .. } => T::one(),
            DiffusionLaw::PurePower { m, .. } => return Err(ModelError::SingularDiffusion { m: m.as_f64() }),
        };
        Ok(PowerUpperBound { m: m_bar, k_d: sup_unit.max(k_d) })
    }
}

/// Free function form of [`DiffusionLaw::eval`].
pub fn eval_diffusion<T: Real>(law: &DiffusionLaw<T>, u: T) -> Result<T, ModelError> {
    law.eval(u)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams<T> {
    pub n: u32,
    pub coupling: Coupling,
    pub chi: T,
    pub diffusion: DiffusionLaw<T>,
    /// Uniform bound on the source `phi`.
    pub phi_star: T,
    pub radius: T,
    /// Replacement exponent for `m <= 0` in the blow-up estimates.
    pub m_bar: Option<T>,
}

impl<T: Real> ModelParams<T> {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.n == 2 || self.n == 3) {
            return Err(invalid("n", format!("dimension must be 2 or 3, got {}", self.n)));
        }
        if !(self.chi > T::zero()) || !self.chi.is_finite() {
            return Err(invalid("chi", format!("must be positive, got {}", self.chi)));
        }
        if !(self.phi_star >= T::zero()) || !self.phi_star.is_finite() {
            return Err(invalid("phi_star", format!("must be nonnegative, got {}", self.phi_star)));
        }
        if !(self.radius > T::zero()) || !self.radius.is_finite() {
            return Err(invalid("R", format!("must be positive, got {}", self.radius)));
        }
        let m = self.diffusion.exponent();
        if !m.is_finite() {
            return Err(invalid("m", "must be finite"));
        }
        if let DiffusionLaw::PurePower { coeff, .. } = self.diffusion {
            if !(coeff > T::zero()) {
                return Err(invalid("coeff", format!("must be positive, got {coeff}")));
            }
            if m <= T::zero() && self.m_bar.is_none() {
                return Err(invalid(
                    "m_bar",
                    "pure power diffusion with m <= 0 requires an m_bar in (0, 1) for the m < 1 blow-up bound",
                ));
            }
        }
        if let Some(mb) = self.m_bar {
            if !(mb > T::zero() && mb < T::one()) {
                return Err(invalid("m_bar", format!("must lie in (0, 1), got {mb}")));
            }
        }
        Ok(())
    }

    pub fn domain_measure(&self) -> T {
        crate::scalar::unit_ball_volume::<T>(self.n) * self.radius.powi(self.n as i32)
    }
}

/// Sufficient exponent for global boundedness: `m` above this value gives bounded solutions.
pub fn boundedness_threshold<T: Real>(n: u32, coupling: Coupling) -> T {
    let nf = T::from_count(n as usize);
    let two = T::lit(2.0);
    match coupling {
        Coupling::Elliptic if n == 2 => T::lit(1.5),
        Coupling::Elliptic => two + nf / two - two / nf,
        Coupling::Parabolic => T::one() + nf / two - two / nf,
    }
}

/// What the analytical results say about a parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `m` exceeds the boundedness threshold.
    Bounded,
    /// `kappa = 0`, `n ∈ {2, 3}`, `m < 1`: blow-up for suitably concentrated data.
    BlowupPossible,
    /// Not covered by either result.
    Open,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::Bounded => "bounded regime",
            Regime::BlowupPossible => "blow-up regime",
            Regime::Open => "open regime",
        }
    }
}

pub fn regime<T: Real>(params: &ModelParams<T>) -> Regime {
    let m = params.diffusion.exponent();
    if m > boundedness_threshold(params.n, params.coupling) {
        Regime::Bounded
    } else if params.coupling == Coupling::Elliptic && (params.n == 2 || params.n == 3) && m < T::one() {
        Regime::BlowupPossible
    } else {
        Regime::Open
    }
}

/// Unnormalized radial shapes for `u0` (and `v0`).
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileKind<T> {
    Uniform,
    /// `(1 - (r/a)^2)^3` on `[0, a]`, zero outside; C² with zero slope at both ends.
    /// The support radius is `r_star / 2` when a concentration radius is requested,
    /// otherwise `R / 2`.
    SmoothBump,
    /// Gaussian shifted so that it vanishes with zero slope at `R`; width `r_star / 4`
    /// (or `R / 4`).
    Gaussian,
    /// Tabulated `(r, value)` pairs, re-interpolated with a monotone cubic.
    Tabulated(Vec<(T, T)>),
}

/// Shape of `w0` between its bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WProfileKind {
    /// `w0 ≡ (alpha + beta) / 2`
    Uniform,
    /// `alpha + (beta - alpha)(1 + cos(π r / R)) / 2`
    Cosine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialSpec<T> {
    /// Total `u` mass.
    pub mu: T,
    pub alpha: T,
    pub beta: T,
    pub r_star: Option<T>,
    pub u_profile: ProfileKind<T>,
    pub w_profile: WProfileKind,
    /// Shape and mass of `v0`; required when `kappa = 1`, ignored when `kappa = 0`.
    pub v_profile: Option<(ProfileKind<T>, T)>,
}

/// Discretized initial data with the constants used to build it.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData<T> {
    pub u0: Field<T>,
    pub v0: Option<Field<T>>,
    pub w0: Field<T>,
    pub mu: T,
    pub alpha: T,
    pub beta: T,
    pub r_star: Option<T>,
}

/// A continuous shape resolved against the domain.
#[derive(Debug, Clone)]
enum Shape<T> {
    Constant,
    Bump { support: T },
    Gaussian { sigma: T, radius: T },
    Table(MonotoneCubic<T>),
}

impl<T: Real> Shape<T> {
    fn eval(&self, r: T) -> T {
        match self {
            Shape::Constant => T::one(),
            Shape::Bump { support } => {
                if r >= *support {
                    T::zero()
                } else {
                    let x = r / *support;
                    let q = T::one() - x * x;
                    q * q * q
                }
            }
            Shape::Gaussian { sigma, radius } => {
                let two_s2 = T::lit(2.0) * *sigma * *sigma;
                let a = r * r / two_s2;
                let b = *radius * *radius / two_s2;
                ((-a).exp() - (-b).exp() * (T::one() + b - a)).max(T::zero())
            }
            Shape::Table(t) => t.eval(r).max(T::zero()),
        }
    }

    /// Largest radius where the shape is nonzero, used for quadrature refinement.
    fn support(&self) -> Option<T> {
        match self {
            Shape::Bump { support } => Some(*support),
            _ => None,
        }
    }
}

fn resolve_shape<T: Real>(kind: &ProfileKind<T>, r_star: Option<T>, radius: T) -> Result<Shape<T>, ModelError> {
    let scale = r_star.unwrap_or(radius);
    Ok(match kind {
        ProfileKind::Uniform => Shape::Constant,
        ProfileKind::SmoothBump => {
            let support = scale * T::lit(0.5);
            if support > radius {
                return Err(ModelError::Infeasible(format!(
                    "bump support {support} exceeds the domain radius {radius}"
                )));
            }
            Shape::Bump { support }
        }
        ProfileKind::Gaussian => Shape::Gaussian { sigma: scale * T::lit(0.25), radius },
        ProfileKind::Tabulated(points) => Shape::Table(MonotoneCubic::new(points)?),
    })
}

/// 5-point Gauss-Legendre nodes and weights on [-1, 1].
const GL5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// Cell averages `∫ g r^{n-1} dr / ∫ r^{n-1} dr` over every cell.
fn cell_averages<T: Real>(grid: &RadialGrid<T>, shape: &Shape<T>) -> Vec<T> {
    let n = grid.dimension() as i32;
    let faces = grid.faces();
    let support = shape.support();
    (0..grid.cells())
        .map(|i| {
            let (a, b) = (faces[i], faces[i + 1]);
            // split a cell cut by a compact support edge so the quadrature sees a smooth integrand
            let pieces: Vec<(T, T)> = match support {
                Some(s) if s > a && s < b => vec![(a, s), (s, b)],
                _ => vec![(a, b)],
            };
            let mut num = T::zero();
            for (lo, hi) in pieces {
                let half = (hi - lo) * T::lit(0.5);
                let mid = (hi + lo) * T::lit(0.5);
                for &(x, w) in GL5.iter() {
                    let r = mid + half * T::lit(x);
                    num = num + T::lit(w) * half * shape.eval(r) * r.powi(n - 1);
                }
            }
            let den = (b.powi(n) - a.powi(n)) / T::from_count(n as usize);
            num / den
        })
        .collect()
}

/// Builds profiles satisfying the mass, bound, boundary and concentration requirements.
/// The `u` mass is normalized on the discrete level so that `Σ ω_i u_i = mu`.
pub fn build_initial_data<T: Real>(
    params: &ModelParams<T>,
    spec: &InitialSpec<T>,
    grid: &Arc<RadialGrid<T>>,
) -> Result<InitialData<T>, ModelError> {
    params.validate()?;
    if grid.dimension() != params.n || (grid.radius() - params.radius).abs() > T::epsilon() * params.radius {
        return Err(invalid("grid", "grid dimension/radius does not match the model"));
    }
    if !(spec.mu > T::zero()) {
        return Err(invalid("mu", format!("must be positive, got {}", spec.mu)));
    }
    if !(spec.alpha > T::zero()) || !(spec.beta >= spec.alpha) {
        return Err(invalid("alpha", format!("need beta >= alpha > 0, got alpha={} beta={}", spec.alpha, spec.beta)));
    }
    if let Some(rs) = spec.r_star {
        if !(rs > T::zero() && rs < params.radius) {
            return Err(invalid("r_star", format!("must lie in (0, R), got {rs}")));
        }
    }

    let u0 = normalized_profile(grid, &spec.u_profile, spec.r_star, spec.mu, "u0")?;

    let w_values: Vec<T> = match spec.w_profile {
        WProfileKind::Uniform => vec![(spec.alpha + spec.beta) * T::lit(0.5); grid.cells()],
        WProfileKind::Cosine => {
            let shape = |r: T| {
                spec.alpha + (spec.beta - spec.alpha) * (T::one() + (T::PI() * r / params.radius).cos()) * T::lit(0.5)
            };
            let avg = cell_averages_fn(grid, shape);
            avg.into_iter().map(|v| v.max(spec.alpha).min(spec.beta)).collect()
        }
    };
    let w0 = Field::new(Arc::clone(grid), w_values)?;

    let v0 = match params.coupling {
        Coupling::Elliptic => None,
        Coupling::Parabolic => {
            let (kind, mass) = spec
                .v_profile
                .as_ref()
                .ok_or_else(|| invalid("v0", "the fully parabolic system needs an initial v0"))?;
            if !(*mass > T::zero()) {
                return Err(invalid("v0.mass", format!("must be positive, got {mass}")));
            }
            Some(normalized_profile(grid, kind, spec.r_star, *mass, "v0")?)
        }
    };

    let data = InitialData { u0, v0, w0, mu: spec.mu, alpha: spec.alpha, beta: spec.beta, r_star: spec.r_star };
    data.check(params, T::lit(1e-10))?;
    Ok(data)
}

fn cell_averages_fn<T: Real>(grid: &RadialGrid<T>, f: impl Fn(T) -> T) -> Vec<T> {
    let n = grid.dimension() as i32;
    let faces = grid.faces();
    (0..grid.cells())
        .map(|i| {
            let (a, b) = (faces[i], faces[i + 1]);
            let half = (b - a) * T::lit(0.5);
            let mid = (b + a) * T::lit(0.5);
            let num = GL5.iter().fold(T::zero(), |acc, &(x, w)| {
                let r = mid + half * T::lit(x);
                acc + T::lit(w) * half * f(r) * r.powi(n - 1)
            });
            num / ((b.powi(n) - a.powi(n)) / T::from_count(n as usize))
        })
        .collect()
}

fn normalized_profile<T: Real>(
    grid: &Arc<RadialGrid<T>>,
    kind: &ProfileKind<T>,
    r_star: Option<T>,
    mass: T,
    name: &str,
) -> Result<Field<T>, ModelError> {
    let shape = resolve_shape(kind, r_star, grid.radius())?;
    let raw = cell_averages(grid, &shape);
    let total = grid.integral(&raw);
    if !(total > T::zero()) || !total.is_finite() {
        return Err(ModelError::Infeasible(format!("{name} profile has no resolvable mass on this grid")));
    }
    let scale = mass / total;
    Field::new(Arc::clone(grid), raw.into_iter().map(|v| v * scale).collect()).map_err(Into::into)
}

impl<T: Real> InitialData<T> {
    /// Re-checks the construction invariants at relative tolerance `rel_tol`.
    pub fn check(&self, params: &ModelParams<T>, rel_tol: T) -> Result<(), ModelError> {
        let mass = self.u0.integral();
        if (mass - self.mu).abs() > rel_tol * self.mu {
            return Err(ModelError::InvariantViolation(format!("∫u0 = {mass}, expected {}", self.mu)));
        }
        if self.u0.min() < T::zero() {
            return Err(ModelError::InvariantViolation("u0 has negative values".into()));
        }
        let slack = rel_tol * self.beta;
        if self.w0.min() < self.alpha - slack || self.w0.max() > self.beta + slack {
            return Err(ModelError::InvariantViolation(format!(
                "w0 range [{}, {}] leaves [alpha, beta] = [{}, {}]",
                self.w0.min(),
                self.w0.max(),
                self.alpha,
                self.beta
            )));
        }
        if let Some(rs) = self.r_star {
            let inner = self.u0.ball_mass(rs)?;
            if inner < self.mu * T::lit(0.5) * (T::one() - rel_tol) {
                return Err(ModelError::Infeasible(format!(
                    "only {inner} of the mass {} lies in B_r* with r* = {rs}; need at least half",
                    self.mu
                )));
            }
        }
        match (params.coupling, &self.v0) {
            (Coupling::Parabolic, None) => return Err(ModelError::InvariantViolation("kappa = 1 requires v0".into())),
            (Coupling::Parabolic, Some(v0)) if v0.min() < T::zero() => {
                return Err(ModelError::InvariantViolation("v0 has negative values".into()))
            }
            _ => {}
        }
        Ok(())
    }
}

/// Piecewise cubic Hermite interpolant with Fritsch-Carlson slopes and zero end slopes.
/// Constant extension outside the tabulated range.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic<T> {
    x: Vec<T>,
    y: Vec<T>,
    slope: Vec<T>,
}

impl<T: Real> MonotoneCubic<T> {
    pub fn new(points: &[(T, T)]) -> Result<Self, ModelError> {
        if points.len() < 2 {
            return Err(ModelError::Infeasible("a tabulated profile needs at least two points".into()));
        }
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        if pts.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(ModelError::Infeasible("tabulated radii must be distinct".into()));
        }
        if pts.iter().any(|p| !(p.1 >= T::zero()) || !p.0.is_finite() || !p.1.is_finite()) {
            return Err(ModelError::Infeasible("tabulated values must be finite and nonnegative".into()));
        }
        let (x, y): (Vec<T>, Vec<T>) = pts.into_iter().unzip();
        let k = x.len();
        let secant: Vec<T> = (0..k - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
        let mut slope = vec![T::zero(); k];
        for i in 1..k - 1 {
            let (d0, d1) = (secant[i - 1], secant[i]);
            if d0 * d1 > T::zero() {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                let w1 = T::lit(2.0) * h1 + h0;
                let w2 = h1 + T::lit(2.0) * h0;
                slope[i] = (w1 + w2) / (w1 / d0 + w2 / d1);
            }
        }
        Ok(MonotoneCubic { x, y, slope })
    }

    pub fn eval(&self, r: T) -> T {
        let k = self.x.len();
        if r <= self.x[0] {
            return self.y[0];
        }
        if r >= self.x[k - 1] {
            return self.y[k - 1];
        }
        let i = self.x.partition_point(|&xi| xi <= r) - 1;
        let h = self.x[i + 1] - self.x[i];
        let t = (r - self.x[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let h00 = two * t3 - three * t2 + T::one();
        let h10 = t3 - two * t2 + t;
        let h01 = -two * t3 + three * t2;
        let h11 = t3 - t2;
        h00 * self.y[i] + h10 * h * self.slope[i] + h01 * self.y[i + 1] + h11 * h * self.slope[i + 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn params(n: u32, coupling: Coupling, m: f64) -> ModelParams<f64> {
        ModelParams {
            n,
            coupling,
            chi: 1.0,
            diffusion: DiffusionLaw::Prototype { m },
            phi_star: 0.0,
            radius: 1.0,
            m_bar: None,
        }
    }

    fn spec(kind: ProfileKind<f64>, mu: f64, r_star: Option<f64>) -> InitialSpec<f64> {
        InitialSpec {
            mu,
            alpha: 1.0,
            beta: 1.0,
            r_star,
            u_profile: kind,
            w_profile: WProfileKind::Uniform,
            v_profile: None,
        }
    }

    #[test]
    fn diffusion_examples() {
        assert_eq!(eval_diffusion(&DiffusionLaw::Prototype { m: 1.0 }, 7.0).unwrap(), 1.0);
        assert_eq!(eval_diffusion(&DiffusionLaw::Prototype { m: 2.0 }, 3.0).unwrap(), 4.0);
        assert_eq!(eval_diffusion(&DiffusionLaw::Prototype { m: 0.5 }, 0.0).unwrap(), 1.0);
        let pp = DiffusionLaw::PurePower { m: 0.5f64, coeff: 2.0 };
        assert_eq!(pp.eval(0.0), Err(ModelError::SingularDiffusion { m: 0.5 }));
        assert!((pp.eval(4.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(pp.is_singular());
        let deg = DiffusionLaw::PurePower { m: 2.0, coeff: 1.0 };
        assert!(deg.is_degenerate());
        assert_eq!(deg.eval(0.0).unwrap(), 0.0);
        assert!(DiffusionLaw::Prototype { m: 2.0 }.eval(-1.0).is_err());
    }

    #[test]
    fn prototype_monotonicity_by_sampling() {
        for &m in &[-1.0, 0.3, 0.9, 1.0, 1.7, 3.0] {
            let law = DiffusionLaw::Prototype { m };
            let vals: Vec<f64> = (0..2000).map(|k| law.eval(k as f64 * 0.05).unwrap()).collect();
            assert!(vals.iter().all(|&d| d > 0.0 && d.is_finite()));
            for w in vals.windows(2) {
                if m > 1.0 {
                    assert!(w[1] > w[0]);
                } else if m < 1.0 {
                    assert!(w[1] < w[0]);
                } else {
                    assert_eq!(w[1], w[0]);
                }
            }
        }
    }

    #[test]
    fn thresholds() {
        let t3: f64 = boundedness_threshold(3, Coupling::Elliptic);
        assert!((t3 - 17.0 / 6.0).abs() < 1e-15);
        assert_eq!(boundedness_threshold::<f64>(2, Coupling::Elliptic), 1.5);
        assert_eq!(boundedness_threshold::<f64>(2, Coupling::Parabolic), 1.0);
        let gap =
            boundedness_threshold::<f64>(2, Coupling::Elliptic) - boundedness_threshold::<f64>(2, Coupling::Parabolic);
        assert_eq!(gap, 0.5);
        let t3p: f64 = boundedness_threshold(3, Coupling::Parabolic);
        assert!((t3p - (1.0 + 1.5 - 2.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn regimes() {
        assert_eq!(regime(&params(2, Coupling::Elliptic, 0.5)), Regime::BlowupPossible);
        assert_eq!(regime(&params(2, Coupling::Elliptic, 1.2)), Regime::Open);
        assert_eq!(regime(&params(2, Coupling::Elliptic, 1.5)), Regime::Open);
        assert_eq!(regime(&params(2, Coupling::Elliptic, 1.6)), Regime::Bounded);
        assert_eq!(regime(&params(2, Coupling::Parabolic, 1.5)), Regime::Bounded);
        assert_eq!(regime(&params(2, Coupling::Parabolic, 0.5)), Regime::Open);
    }

    #[test]
    fn power_bounds() {
        let b = DiffusionLaw::Prototype { m: 0.5 }.power_upper_bound(None).unwrap();
        assert_eq!(b, PowerUpperBound { m: 0.5, k_d: 1.0 });
        assert!(DiffusionLaw::Prototype { m: -0.5 }.power_upper_bound(None).is_err());
        let b = DiffusionLaw::Prototype { m: -0.5 }.power_upper_bound(Some(0.3)).unwrap();
        assert_eq!(b, PowerUpperBound { m: 0.3, k_d: 1.0 });
        // the restated bound really dominates D
        for k in 1..4000 {
            let h = k as f64 * 1e-3;
            assert!((1.0 + h).powf(-1.5) <= h.powf(0.3 - 1.0) + 1e-15);
        }
        assert!(DiffusionLaw::Prototype { m: 1.5 }.power_upper_bound(None).is_err());
    }

    #[test]
    fn pure_power_nonpositive_m_needs_m_bar() {
        let mut p = params(2, Coupling::Elliptic, 0.5);
        p.diffusion = DiffusionLaw::PurePower { m: -0.2, coeff: 1.0 };
        assert!(matches!(p.validate(), Err(ModelError::InvalidParameter { name: "m_bar", .. })));
        p.m_bar = Some(0.5);
        assert!(p.validate().is_ok());
    }

    #[test]
    fn uniform_profile_mass() {
        let p = params(2, Coupling::Elliptic, 2.0);
        let g = Arc::new(RadialGrid::uniform(2, 1.0, 64).unwrap());
        let d = build_initial_data(&p, &spec(ProfileKind::Uniform, PI, None), &g).unwrap();
        for &u in d.u0.values() {
            assert!((u - 1.0).abs() < 1e-14);
        }
        assert!(d.w0.values().iter().all(|&w| w == 1.0));
        assert!(d.v0.is_none());
    }

    #[test]
    fn bump_is_concentrated() {
        let p = params(2, Coupling::Elliptic, 0.5);
        let g = Arc::new(RadialGrid::uniform(2, 1.0, 400).unwrap());
        let d = build_initial_data(&p, &spec(ProfileKind::SmoothBump, 1.0, Some(0.2)), &g).unwrap();
        let inner = d.u0.ball_mass(0.2).unwrap();
        assert!((inner - 1.0).abs() < 1e-12);
        assert!((d.u0.ball_mass(0.1).unwrap() - 1.0).abs() < 1e-12);
        assert!((d.u0.integral() - 1.0).abs() < 1e-12);
        assert_eq!(*d.u0.values().last().unwrap(), 0.0);
    }

    #[test]
    fn gaussian_concentration_and_shape() {
        let p = params(3, Coupling::Elliptic, 0.5);
        let g = Arc::new(RadialGrid::uniform(3, 1.0, 300).unwrap());
        let d = build_initial_data(&p, &spec(ProfileKind::Gaussian, 2.0, Some(0.4)), &g).unwrap();
        assert!(d.u0.ball_mass(0.4).unwrap() >= 1.0);
        assert!(d.u0.values().windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn uniform_profile_cannot_be_concentrated() {
        let p = params(2, Coupling::Elliptic, 0.5);
        let g = Arc::new(RadialGrid::uniform(2, 1.0, 64).unwrap());
        let err = build_initial_data(&p, &spec(ProfileKind::Uniform, 1.0, Some(0.3)), &g).unwrap_err();
        assert!(matches!(err, ModelError::Infeasible(_)));
    }

    #[test]
    fn cosine_w_profile_respects_bounds() {
        let p = params(2, Coupling::Elliptic, 0.5);
        let g = Arc::new(RadialGrid::uniform(2, 1.0, 64).unwrap());
        let mut s = spec(ProfileKind::Uniform, 1.0, None);
        s.alpha = 0.5;
        s.beta = 2.0;
        s.w_profile = WProfileKind::Cosine;
        let d = build_initial_data(&p, &s, &g).unwrap();
        assert!(d.w0.min() >= 0.5 && d.w0.max() <= 2.0);
        assert!(d.w0.values()[0] > d.w0.values()[63]);
    }

    #[test]
    fn parabolic_requires_v0() {
        let p = params(2, Coupling::Parabolic, 2.0);
        let g = Arc::new(RadialGrid::uniform(2, 1.0, 32).unwrap());
        let mut s = spec(ProfileKind::Uniform, 1.0, None);
        assert!(build_initial_data(&p, &s, &g).is_err());
        s.v_profile = Some((ProfileKind::Uniform, 0.5));
        let d = build_initial_data(&p, &s, &g).unwrap();
        assert!((d.v0.unwrap().integral() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn tabulated_profile_is_monotone_and_flat_at_ends() {
        let pts = vec![(0.0, 3.0), (0.2, 2.5), (0.5, 1.0), (0.8, 0.2), (1.0, 0.1)];
        let c = MonotoneCubic::new(&pts).unwrap();
        let xs: Vec<f64> = (0..=1000).map(|k| k as f64 / 1000.0).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| c.eval(x)).collect();
        assert!(ys.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        assert!(((c.eval(1e-6) - c.eval(0.0)) / 1e-6).abs() < 1e-3);
        assert!(((c.eval(1.0) - c.eval(1.0 - 1e-6)) / 1e-6).abs() < 1e-3);
        for (x, y) in &pts {
            assert!((c.eval(*x) - y).abs() < 1e-14);
        }
    }
}
