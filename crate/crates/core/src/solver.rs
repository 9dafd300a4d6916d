//! Time stepping for the radial system.
//!
//! One base step of size `dt` is a semi-implicit split:
//!
//! 1. `u`: implicit quasilinear diffusion with the face coefficient frozen at the old
//!    iterate, explicit (limited) upwind chemotaxis flux, implicit sink `u (1 + w)`,
//!    explicit source `phi`;
//! 2. `v`: elliptic solve with source `u^{new} w^{old}` (`kappa = 0`) or implicit
//!    parabolic step with the same source (`kappa = 1`);
//! 3. `w`: implicit heat step with decay and source `v^{new}`;
//! 4. `kappa = 0`: `v` is recomputed from the final `u`, `w`, so every stored state
//!    satisfies the discrete elliptic equation.
//!
//! The sink in step 1 and the source in step 2 use the same product `u^{new} w^{old}`,
//! so the discrete `L^1` budgets hold exactly. [`TimeScheme::Extrapolated`] combines one
//! full and two half base steps to second order and falls back to the two half steps
//! whenever the extrapolated state would leave the nonnegative cone.

use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use crate::grid::{Field, RadialGrid};
use crate::linalg::Tridiagonal;
use crate::model::{Coupling, DiffusionLaw, ModelError, ModelParams};
use crate::scalar::Real;

/// Time and the three radial fields.
#[derive(Debug, Clone, PartialEq)]
pub struct State<T> {
    pub t: T,
    pub u: Field<T>,
    pub v: Field<T>,
    pub w: Field<T>,
}

impl<T: Real> State<T> {
    pub fn grid(&self) -> &Arc<RadialGrid<T>> {
        self.u.grid()
    }
}

/// The source `phi(r, t) >= 0`.
#[derive(Clone)]
pub enum Source<T> {
    Zero,
    Constant(T),
    /// `amplitude * b(r / radius) * (1 + cos(2π frequency t)) / 2` with `b(x) = (1 - x^2)^3`
    /// on `[0, 1]`.
    Separable {
        amplitude: T,
        radius: T,
        frequency: T,
    },
    /// Any bounded nonnegative function of `(r, t)` with its declared bound.
    Custom {
        f: Arc<dyn Fn(T, T) -> T + Send + Sync>,
        bound: T,
    },
}

impl<T: fmt::Debug> fmt::Debug for Source<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Zero => write!(f, "Zero"),
            Source::Constant(c) => write!(f, "Constant({c:?})"),
            Source::Separable { amplitude, radius, frequency } => {
                write!(f, "Separable {{ amplitude: {amplitude:?}, radius: {radius:?}, frequency: {frequency:?} }}")
            }
            Source::Custom { bound, .. } => write!(f, "Custom {{ bound: {bound:?} }}"),
        }
    }
}

impl<T: Real> Source<T> {
    pub fn eval(&self, r: T, t: T) -> T {
        match self {
            Source::Zero => T::zero(),
            Source::Constant(c) => *c,
            Source::Separable { amplitude, radius, frequency } => {
                if r >= *radius {
                    return T::zero();
                }
                let x = r / *radius;
                let q = T::one() - x * x;
                let time = (T::one() + (T::lit(2.0) * T::PI() * *frequency * t).cos()) * T::lit(0.5);
                *amplitude * q * q * q * time
            }
            Source::Custom { f, .. } => f(r, t),
        }
    }

    /// `phi_*`, the uniform bound.
    pub fn bound(&self) -> T {
        match self {
            Source::Zero => T::zero(),
            Source::Constant(c) => *c,
            Source::Separable { amplitude, .. } => *amplitude,
            Source::Custom { bound, .. } => *bound,
        }
    }

    fn sample(&self, grid: &RadialGrid<T>, t: T) -> Vec<T> {
        match self {
            Source::Zero => vec![T::zero(); grid.cells()],
            Source::Constant(c) => vec![*c; grid.cells()],
            _ => grid.centers().iter().map(|&r| self.eval(r, t).max(T::zero())).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FaceAverage {
    /// `D((u_i + u_{i+1}) / 2)`
    #[default]
    Arithmetic,
    /// Harmonic mean of `D(u_i)` and `D(u_{i+1})`; zero if either vanishes.
    Harmonic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChemotaxisFlux {
    /// First-order donor cell.
    Upwind,
    /// Donor cell with minmod-limited linear reconstruction; second order where smooth.
    #[default]
    LimitedUpwind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeScheme {
    /// One base step, first order.
    SemiImplicit,
    /// Richardson combination of one full and two half base steps.
    #[default]
    Extrapolated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<T> {
    pub face_average: FaceAverage,
    pub flux: ChemotaxisFlux,
    pub scheme: TimeScheme,
    /// Number of frozen-coefficient solves for the `u` diffusion (1 = linearly implicit).
    pub picard_iterations: usize,
    pub picard_tol: T,
    /// Relative undershoot tolerated (and clipped) before a step is rejected.
    pub positivity_tol: T,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        SolverOptions {
            face_average: FaceAverage::Arithmetic,
            flux: ChemotaxisFlux::LimitedUpwind,
            scheme: TimeScheme::Extrapolated,
            picard_iterations: 1,
            picard_tol: T::lit(1e-8),
            positivity_tol: T::lit(1e-13),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolverError {
    /// A field went negative beyond the tolerance; the caller should retry with a smaller step.
    NonPositive {
        field: &'static str,
        min: f64,
        scale: f64,
    },
    LinearSolveFailure {
        stage: &'static str,
        row: usize,
    },
    Diffusion(ModelError),
    InvalidStep(String),
}

impl fmt::Display for SolverError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverError::NonPositive { field, min, scale } => {
                write!(f, "{field} went negative ({min:e} against scale {scale:e})")
            }
            SolverError::LinearSolveFailure { stage, row } => write!(f, "{stage} solve failed at row {row}"),
            SolverError::Diffusion(e) => write!(f, "{e}"),
            SolverError::InvalidStep(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for SolverError {}

impl From<ModelError> for SolverError {
    fn from(e: ModelError) -> Self {
        SolverError::Diffusion(e)
    }
}

/// Counters for one accepted step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    /// Tiny negative values clipped to zero.
    pub clipped: usize,
    /// The extrapolated state was rejected in favour of the two half steps.
    pub extrapolation_fallback: bool,
}

/// Discrete radial operators and the stepping scheme for one parameter set.
#[derive(Debug, Clone)]
pub struct Solver<T> {
    params: ModelParams<T>,
    source: Source<T>,
    options: SolverOptions<T>,
    grid: Arc<RadialGrid<T>>,
    /// `A_k / |c_k - c_{k-1}|` at interior faces (index k = 1..M-1), zero at the ends.
    conductance: Vec<T>,
}

impl<T: Real> Solver<T> {
    pub fn new(
        params: ModelParams<T>,
        source: Source<T>,
        options: SolverOptions<T>,
        grid: Arc<RadialGrid<T>>,
    ) -> Result<Self, ModelError> {
        params.validate()?;
        if grid.dimension() != params.n {
            return Err(ModelError::InvalidParameter {
                name: "grid",
                reason: format!("grid dimension {} differs from n = {}", grid.dimension(), params.n),
            });
        }
        let m = grid.cells();
        let mut conductance = vec![T::zero(); m + 1];
        for k in 1..m {
            conductance[k] = grid.face_areas()[k] / grid.center_gap(k);
        }
        Ok(Solver { params, source, options, grid, conductance })
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn source(&self) -> &Source<T> {
        &self.source
    }

    pub fn options(&self) -> &SolverOptions<T> {
        &self.options
    }

    pub fn grid(&self) -> &Arc<RadialGrid<T>> {
        &self.grid
    }

    /// Assembles the state at time `t`. For `kappa = 0` the supplied `v` is ignored and
    /// recomputed from `u` and `w`.
    pub fn state(&self, t: T, u: Field<T>, v: Option<Field<T>>, w: Field<T>) -> Result<State<T>, SolverError> {
        let v = match (self.params.coupling, v) {
            (Coupling::Elliptic, _) => self.solve_elliptic_v(&u, &w)?,
            (Coupling::Parabolic, Some(v)) => v,
            (Coupling::Parabolic, None) => return Err(SolverError::InvalidStep("kappa = 1 needs an initial v".into())),
        };
        Ok(State { t, u, v, w })
    }

    /// Initial state from constructed data.
    pub fn initial_state(&self, data: &crate::model::InitialData<T>) -> Result<State<T>, SolverError> {
        self.state(T::zero(), data.u0.clone(), data.v0.clone(), data.w0.clone())
    }

    /// Solves `-(1/r^{n-1}) (r^{n-1} v_r)_r + v = u w` with zero flux at both ends.
    pub fn solve_elliptic_v(&self, u: &Field<T>, w: &Field<T>) -> Result<Field<T>, SolverError> {
        let rhs: Vec<T> = u.values().iter().zip(w.values()).map(|(&a, &b)| a * b).collect();
        let v = self.helmholtz(T::one(), T::one(), &rhs, "elliptic v")?;
        Ok(Field::new(Arc::clone(&self.grid), v).expect("grid sized"))
    }

    /// Solves `decay * x - diffusion * Δ_r x = rhs` in conservative form
    /// (`ω_i decay x_i + diffusion Σ_k g_k (x_i - x_nb) = ω_i rhs_i`).
    fn helmholtz(&self, decay: T, diffusion: T, rhs: &[T], stage: &'static str) -> Result<Vec<T>, SolverError> {
        let m = self.grid.cells();
        let omega = self.grid.cell_measures();
        let g = &self.conductance;
        let mut a = Tridiagonal::zeros(m);
        let mut b = vec![T::zero(); m];
        for i in 0..m {
            a.diag[i] = omega[i] * decay + diffusion * (g[i] + g[i + 1]);
            a.lower[i] = -diffusion * g[i];
            a.upper[i] = -diffusion * g[i + 1];
            b[i] = omega[i] * rhs[i];
        }
        a.solve(&b).map_err(|e| SolverError::LinearSolveFailure { stage, row: e.row })
    }

    fn face_diffusion(&self, u: &[T]) -> Result<Vec<T>, SolverError> {
        let law: &DiffusionLaw<T> = &self.params.diffusion;
        let m = u.len();
        let mut d = vec![T::zero(); m + 1];
        match self.options.face_average {
            FaceAverage::Arithmetic => {
                for k in 1..m {
                    let avg = ((u[k - 1] + u[k]) * T::lit(0.5)).max(T::zero());
                    d[k] = law.eval(avg)?;
                }
            }
            FaceAverage::Harmonic => {
                let cell: Vec<T> = u.iter().map(|&x| law.eval(x.max(T::zero()))).collect::<Result<_, _>>()?;
                for k in 1..m {
                    let s = cell[k - 1] + cell[k];
                    d[k] = if s > T::zero() { T::lit(2.0) * cell[k - 1] * cell[k] / s } else { T::zero() };
                }
            }
        }
        Ok(d)
    }

    /// `A_k v_r` at every face, zero at both ends.
    ///
    /// For `kappa = 0` the value is recovered from the discrete balance
    /// `D_{i+1} - D_i = ω_i (v_i - u_i w_i)`, summed from whichever end accumulates less,
    /// which keeps it accurate in cells far below the roundoff level of `v` differences.
    pub fn v_face_flux(&self, u: &[T], v: &[T], w: &[T]) -> Vec<T> {
        let m = v.len();
        let mut d = vec![T::zero(); m + 1];
        match self.params.coupling {
            Coupling::Elliptic => {
                let omega = self.grid.cell_measures();
                let q: Vec<T> = (0..m).map(|i| omega[i] * (v[i] - u[i] * w[i])).collect();
                let mut fwd = vec![T::zero(); m + 1];
                let mut fwd_abs = vec![T::zero(); m + 1];
                for i in 0..m {
                    fwd[i + 1] = fwd[i] + q[i];
                    fwd_abs[i + 1] = fwd_abs[i] + q[i].abs();
                }
                let mut bwd = T::zero();
                let mut bwd_abs = T::zero();
                for k in (1..m).rev() {
                    bwd = bwd - q[k];
                    bwd_abs = bwd_abs + q[k].abs();
                    d[k] = if fwd_abs[k] <= bwd_abs { fwd[k] } else { bwd };
                }
            }
            Coupling::Parabolic => {
                for k in 1..m {
                    d[k] = self.conductance[k] * (v[k] - v[k - 1]);
                }
            }
        }
        d
    }

    /// Chemotactic face fluxes `χ A_k v_r u_face` (outward positive), zero at both ends.
    fn chemotaxis_fluxes(&self, u: &[T], dv: &[T]) -> Vec<T> {
        let m = u.len();
        let grid = &self.grid;
        let chi = self.params.chi;
        let slopes = match self.options.flux {
            ChemotaxisFlux::Upwind => None,
            ChemotaxisFlux::LimitedUpwind => Some(self.limited_slopes(u)),
        };
        let mut flux = vec![T::zero(); m + 1];
        for k in 1..m {
            let face = grid.faces()[k];
            let u_face = if dv[k] > T::zero() {
                match &slopes {
                    Some(s) => u[k - 1] + s[k - 1] * (face - grid.centers()[k - 1]),
                    None => u[k - 1],
                }
            } else {
                match &slopes {
                    Some(s) => u[k] + s[k] * (face - grid.centers()[k]),
                    None => u[k],
                }
            };
            flux[k] = chi * dv[k] * u_face.max(T::zero());
        }
        flux
    }

    /// Minmod slopes; zero in the boundary cells (even reflection).
    fn limited_slopes(&self, u: &[T]) -> Vec<T> {
        let m = u.len();
        let mut s = vec![T::zero(); m];
        for i in 1..m - 1 {
            let left = (u[i] - u[i - 1]) / self.grid.center_gap(i);
            let right = (u[i + 1] - u[i]) / self.grid.center_gap(i + 1);
            s[i] = if left * right <= T::zero() {
                T::zero()
            } else if left.abs() < right.abs() {
                left
            } else {
                right
            };
        }
        s
    }

    /// Largest step for which the explicit chemotaxis update keeps `u` nonnegative.
    pub fn chemotaxis_dt_limit(&self, state: &State<T>) -> T {
        let dv = self.v_face_flux(state.u.values(), state.v.values(), state.w.values());
        self.dt_limit_from(&dv)
    }

    fn dt_limit_from(&self, dv: &[T]) -> T {
        let m = dv.len() - 1;
        let factor = match self.options.flux {
            ChemotaxisFlux::Upwind => T::one(),
            ChemotaxisFlux::LimitedUpwind => T::lit(2.0),
        };
        let mut rate = vec![T::zero(); m];
        for k in 1..m {
            let speed = (self.params.chi * dv[k]).abs();
            rate[k - 1] = rate[k - 1] + speed;
            rate[k] = rate[k] + speed;
        }
        let worst = rate.iter().zip(self.grid.cell_measures()).fold(T::zero(), |acc, (&q, &w)| acc.max(factor * q / w));
        if worst > T::zero() {
            worst.recip()
        } else {
            T::infinity()
        }
    }

    fn nonnegative(&self, field: &'static str, x: &mut [T], stats: &mut StepStats) -> Result<(), SolverError> {
        let scale = x.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonPositive { field, min: f64::NAN, scale: scale.as_f64() });
        }
        let tol = self.options.positivity_tol * scale.max(T::min_positive_value());
        for v in x.iter_mut() {
            if *v < T::zero() {
                if *v < -tol {
                    return Err(SolverError::NonPositive { field, min: v.as_f64(), scale: scale.as_f64() });
                }
                *v = T::zero();
                stats.clipped += 1;
            }
        }
        Ok(())
    }

    fn base_step(&self, s: &State<T>, dt: T, stats: &mut StepStats) -> Result<State<T>, SolverError> {
        let grid = &self.grid;
        let m = grid.cells();
        let omega = grid.cell_measures();
        let (u, v, w) = (s.u.values(), s.v.values(), s.w.values());
        let phi = self.source.sample(grid, s.t);

        // u: explicit transport and source, implicit diffusion and sink
        let dv = self.v_face_flux(u, v, w);
        let flux = self.chemotaxis_fluxes(u, &dv);
        let rhs: Vec<T> = (0..m).map(|i| omega[i] * (u[i] + dt * phi[i]) - dt * (flux[i + 1] - flux[i])).collect();
        let mut iterate = u.to_vec();
        let mut u_new = Vec::new();
        for it in 0..self.options.picard_iterations.max(1) {
            let d = self.face_diffusion(&iterate)?;
            let mut a = Tridiagonal::zeros(m);
            for i in 0..m {
                let left = self.conductance[i] * d[i];
                let right = self.conductance[i + 1] * d[i + 1];
                a.diag[i] = omega[i] * (T::one() + dt * (T::one() + w[i])) + dt * (left + right);
                a.lower[i] = -dt * left;
                a.upper[i] = -dt * right;
            }
            u_new = a.solve(&rhs).map_err(|e| SolverError::LinearSolveFailure { stage: "u diffusion", row: e.row })?;
            if it > 0 {
                let scale = u_new.iter().fold(T::zero(), |acc, x| acc.max(x.abs())).max(T::min_positive_value());
                let change = u_new.iter().zip(&iterate).fold(T::zero(), |acc, (a, b)| acc.max((*a - *b).abs()));
                if change <= self.options.picard_tol * scale {
                    break;
                }
            }
            iterate = u_new.iter().map(|&x| x.max(T::zero())).collect();
        }
        self.nonnegative("u", &mut u_new, stats)?;

        // v: same product u_new * w_old as the u sink
        let uw: Vec<T> = u_new.iter().zip(w).map(|(&a, &b)| a * b).collect();
        let mut v_new = match self.params.coupling {
            Coupling::Elliptic => self.helmholtz(T::one(), T::one(), &uw, "elliptic v")?,
            Coupling::Parabolic => {
                let r: Vec<T> = (0..m).map(|i| (v[i] + dt * uw[i]) / (T::one() + dt)).collect();
                self.helmholtz(T::one(), dt / (T::one() + dt), &r, "parabolic v")?
            }
        };
        self.nonnegative("v", &mut v_new, stats)?;

        // w: implicit heat step with decay, source v_new
        let r: Vec<T> = (0..m).map(|i| (w[i] + dt * v_new[i]) / (T::one() + dt)).collect();
        let mut w_new = self.helmholtz(T::one(), dt / (T::one() + dt), &r, "w")?;
        self.nonnegative("w", &mut w_new, stats)?;

        let u_f = Field::new(Arc::clone(grid), u_new).expect("grid sized");
        let w_f = Field::new(Arc::clone(grid), w_new).expect("grid sized");
        let v_f = match self.params.coupling {
            Coupling::Elliptic => {
                let mut v = self.solve_elliptic_v(&u_f, &w_f)?.into_values();
                self.nonnegative("v", &mut v, stats)?;
                Field::new(Arc::clone(grid), v).expect("grid sized")
            }
            Coupling::Parabolic => Field::new(Arc::clone(grid), v_new).expect("grid sized"),
        };
        Ok(State { t: s.t + dt, u: u_f, v: v_f, w: w_f })
    }

    /// Advances `state` by `dt`.
    pub fn step(&self, state: &State<T>, dt: T) -> Result<State<T>, SolverError> {
        self.step_with_stats(state, dt).map(|(s, _)| s)
    }

    pub fn step_with_stats(&self, state: &State<T>, dt: T) -> Result<(State<T>, StepStats), SolverError> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(SolverError::InvalidStep(format!("time step must be positive, got {dt}")));
        }
        let mut stats = StepStats::default();
        match self.options.scheme {
            TimeScheme::SemiImplicit => {
                let s = self.base_step(state, dt, &mut stats)?;
                Ok((s, stats))
            }
            TimeScheme::Extrapolated => {
                let half = dt * T::lit(0.5);
                let coarse = self.base_step(state, dt, &mut stats)?;
                let mid = self.base_step(state, half, &mut stats)?;
                let mut fine = self.base_step(&mid, half, &mut stats)?;
                fine.t = state.t + dt;
                match self.extrapolate(&coarse, &fine) {
                    Some((s, clipped)) => {
                        stats.clipped += clipped;
                        Ok((s, stats))
                    }
                    None => {
                        stats.extrapolation_fallback = true;
                        Ok((fine, stats))
                    }
                }
            }
        }
    }

    fn extrapolate(&self, coarse: &State<T>, fine: &State<T>) -> Option<(State<T>, usize)> {
        let two = T::lit(2.0);
        let mut clipped = 0usize;
        let mut combine = |a: &Field<T>, b: &Field<T>| -> Option<Vec<T>> {
            let mut out: Vec<T> = b.values().iter().zip(a.values()).map(|(&f, &c)| two * f - c).collect();
            let mut st = StepStats::default();
            self.nonnegative("extrapolated", &mut out, &mut st).ok()?;
            clipped += st.clipped;
            Some(out)
        };
        let u = combine(&coarse.u, &fine.u)?;
        let w = combine(&coarse.w, &fine.w)?;
        let grid = Arc::clone(&self.grid);
        let u = Field::new(Arc::clone(&grid), u).ok()?;
        let w = Field::new(Arc::clone(&grid), w).ok()?;
        let v = match self.params.coupling {
            Coupling::Elliptic => {
                let mut v = self.solve_elliptic_v(&u, &w).ok()?.into_values();
                let mut st = StepStats::default();
                self.nonnegative("v", &mut v, &mut st).ok()?;
                Field::new(grid, v).ok()?
            }
            Coupling::Parabolic => Field::new(grid, combine(&coarse.v, &fine.v)?).ok()?,
        };
        Some((State { t: fine.t, u, v, w }, clipped))
    }
}

/// Adaptive step control and blow-up declaration thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl<T> {
    pub dt_init: T,
    pub dt_min: T,
    pub dt_max: T,
    /// Growth after an accepted step is `1 / safety`.
    pub safety: T,
    /// Declares suspected blow-up once `‖u‖_∞ + ‖w‖_∞` exceeds this.
    pub u_cap: T,
    /// Fraction of the chemotaxis positivity limit used for the step.
    pub cfl: T,
}

impl<T: Real> StepControl<T> {
    /// Defaults with `u_cap = 10^6 ‖u0‖_∞`.
    pub fn for_initial_sup(sup_u0: T) -> Self {
        StepControl {
            dt_init: T::lit(1e-4),
            dt_min: T::lit(1e-12),
            dt_max: T::lit(1e-2),
            safety: T::lit(0.9),
            u_cap: T::lit(1e6) * sup_u0.max(T::min_positive_value()),
            cfl: T::lit(0.9),
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let ok = self.dt_min > T::zero()
            && self.dt_min <= self.dt_init
            && self.dt_init <= self.dt_max
            && self.safety > T::zero()
            && self.safety < T::one()
            && self.u_cap > T::zero()
            && self.cfl > T::zero()
            && self.cfl <= T::one();
        if ok {
            Ok(())
        } else {
            Err(SolverError::InvalidStep(format!(
                "step control needs 0 < dt_min <= dt_init <= dt_max, safety in (0,1), u_cap > 0, cfl in (0,1]: {self:?}"
            )))
        }
    }
}

/// Output cadence for samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cadence<T> {
    /// Sample at multiples of this time; steps are shortened to land on them.
    Every(T),
    /// Sample after every `k` accepted steps.
    Steps(usize),
}

/// Cooperative cancellation shared with a run loop.
#[derive(Debug, Clone, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone)]
pub struct RunSettings<T> {
    pub t_end: T,
    pub cadence: Cadence<T>,
    /// Full-field snapshots are stored at the first sample at or after each time.
    pub snapshot_times: Vec<T>,
    /// Keep every sampled state (needed for trajectory diagnostics).
    pub keep_states: bool,
    /// Exponent of the `‖v‖_p` column.
    pub v_norm_exponent: T,
    pub max_steps: Option<usize>,
    pub cancel: Option<CancelToken>,
}

impl<T: Real> RunSettings<T> {
    pub fn new(t_end: T, cadence: Cadence<T>) -> Self {
        RunSettings {
            t_end,
            cadence,
            snapshot_times: Vec::new(),
            keep_states: false,
            v_norm_exponent: T::lit(2.0),
            max_steps: None,
            cancel: None,
        }
    }
}

/// One row of diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<T> {
    pub t: T,
    /// Last accepted step (0 for the initial sample).
    pub dt: T,
    pub mass_u: T,
    pub mass_v: T,
    pub sup_u: T,
    pub sup_v: T,
    pub sup_w: T,
    pub min_u: T,
    pub min_w: T,
    /// `∫ u w`
    pub mass_uw: T,
    pub v_norm: T,
}

impl<T: Real> Sample<T> {
    pub fn of(state: &State<T>, dt: T, p: T) -> Self {
        Sample {
            t: state.t,
            dt,
            mass_u: state.u.integral(),
            mass_v: state.v.integral(),
            sup_u: state.u.sup_norm(),
            sup_v: state.v.sup_norm(),
            sup_w: state.w.sup_norm(),
            min_u: state.u.min(),
            min_w: state.w.min(),
            mass_uw: state.u.product(&state.w).integral(),
            v_norm: state.v.lp_norm(p).unwrap_or(T::nan()),
        }
    }
}

pub trait Observer<T> {
    fn observe(&mut self, state: &State<T>, sample: &Sample<T>);
}

impl<T, F> Observer<T> for F
where
    F: FnMut(&State<T>, &Sample<T>),
{
    fn observe(&mut self, state: &State<T>, sample: &Sample<T>) {
        self(state, sample)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StallReason {
    /// The admissible step fell below `dt_min`.
    DtBelowMinimum,
    SolverFailure(String),
    StepBudget,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome<T> {
    Completed,
    /// `‖u‖_∞ + ‖w‖_∞` exceeded the cap.
    BlowupSuspected {
        t_detect: T,
        sup: T,
    },
    Stalled {
        t: T,
        dt: T,
        reason: StallReason,
    },
    Cancelled {
        t: T,
    },
}

#[derive(Debug, Clone)]
pub struct RunReport<T> {
    pub outcome: RunOutcome<T>,
    pub samples: Vec<Sample<T>>,
    pub states: Vec<State<T>>,
    pub snapshots: Vec<State<T>>,
    pub final_state: State<T>,
    pub t_end: T,
    pub control: StepControl<T>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub clipped_values: usize,
    pub extrapolation_fallbacks: usize,
    pub smallest_dt: T,
    pub largest_dt: T,
}

impl<T: Real> RunReport<T> {
    pub fn initial_sample(&self) -> &Sample<T> {
        &self.samples[0]
    }

    pub fn last_sample(&self) -> &Sample<T> {
        self.samples.last().expect("at least the initial sample")
    }

    pub fn max_sup_u(&self) -> T {
        self.samples.iter().fold(T::zero(), |m, s| m.max(s.sup_u))
    }
}

/// Advances `initial` until `t_end`, suspected blow-up, a stalled step size or cancellation.
pub fn run<T: Real>(
    solver: &Solver<T>,
    initial: State<T>,
    control: &StepControl<T>,
    settings: &RunSettings<T>,
    observers: &mut [&mut dyn Observer<T>],
) -> Result<RunReport<T>, SolverError> {
    control.validate()?;
    let p = settings.v_norm_exponent;
    let mut state = initial;
    let mut report = RunReport {
        outcome: RunOutcome::Completed,
        samples: Vec::new(),
        states: Vec::new(),
        snapshots: Vec::new(),
        final_state: state.clone(),
        t_end: settings.t_end,
        control: *control,
        accepted_steps: 0,
        rejected_steps: 0,
        clipped_values: 0,
        extrapolation_fallbacks: 0,
        smallest_dt: T::infinity(),
        largest_dt: T::zero(),
    };
    let mut snapshot_queue: Vec<T> = settings.snapshot_times.clone();
    snapshot_queue.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mut snapshot_queue = snapshot_queue.into_iter().peekable();

    let mut record = |state: &State<T>, dt: T, report: &mut RunReport<T>, observers: &mut [&mut dyn Observer<T>]| {
        let sample = Sample::of(state, dt, p);
        for o in observers.iter_mut() {
            o.observe(state, &sample);
        }
        report.samples.push(sample);
        if settings.keep_states {
            report.states.push(state.clone());
        }
        while let Some(&ts) = snapshot_queue.peek() {
            if state.t >= ts {
                report.snapshots.push(state.clone());
                snapshot_queue.next();
            } else {
                break;
            }
        }
    };

    record(&state, T::zero(), &mut report, observers);

    let t_end = settings.t_end;
    let mut dt_trial = control.dt_init;
    let t0 = state.t;
    let mut sample_index = 1usize;
    let sample_time = |k: usize| match settings.cadence {
        Cadence::Every(h) => t0 + h * T::from_count(k),
        Cadence::Steps(_) => T::infinity(),
    };
    let mut next_sample = sample_time(sample_index);
    let mut since_sample = 0usize;
    let growth = control.safety.recip();
    let time_eps = T::lit(64.0) * T::epsilon();
    let stretch = T::one() + T::lit(1e-6);

    while state.t < t_end * (T::one() - time_eps) {
        if let Some(token) = &settings.cancel {
            if token.is_cancelled() {
                report.outcome = RunOutcome::Cancelled { t: state.t };
                break;
            }
        }
        if let Some(max) = settings.max_steps {
            if report.accepted_steps >= max {
                report.outcome = RunOutcome::Stalled { t: state.t, dt: dt_trial, reason: StallReason::StepBudget };
                break;
            }
        }
        let cfl = control.cfl * solver.chemotaxis_dt_limit(&state);
        let mut dt = dt_trial.min(cfl).min(control.dt_max);
        // a step may stretch by `stretch` to land on the next target; otherwise roundoff
        // in the accumulated time leaves a remainder far below dt_min
        if t_end - state.t <= dt * stretch {
            dt = t_end - state.t;
        }
        let mut lands_on_sample = false;
        if next_sample - state.t <= dt * stretch || state.t + dt >= next_sample {
            dt = next_sample - state.t;
            lands_on_sample = true;
        }
        if dt < control.dt_min {
            report.outcome = RunOutcome::Stalled { t: state.t, dt, reason: StallReason::DtBelowMinimum };
            break;
        }
        match solver.step_with_stats(&state, dt) {
            Ok((mut next, stats)) => {
                if lands_on_sample {
                    next.t = next_sample;
                }
                if (t_end - next.t).abs() <= time_eps * t_end.abs().max(T::one()) {
                    next.t = t_end;
                }
                state = next;
                report.accepted_steps += 1;
                report.clipped_values += stats.clipped;
                report.extrapolation_fallbacks += usize::from(stats.extrapolation_fallback);
                report.smallest_dt = report.smallest_dt.min(dt);
                report.largest_dt = report.largest_dt.max(dt);
                if !lands_on_sample || dt >= dt_trial {
                    dt_trial = (dt * growth).min(control.dt_max);
                }
                since_sample += 1;

                let sup = state.u.sup_norm() + state.w.sup_norm();
                let due = match settings.cadence {
                    Cadence::Every(_) => {
                        if lands_on_sample {
                            while sample_time(sample_index) <= state.t {
                                sample_index += 1;
                            }
                            next_sample = sample_time(sample_index);
                            true
                        } else {
                            false
                        }
                    }
                    Cadence::Steps(k) => since_sample >= k.max(1),
                };
                let finished = state.t >= t_end;
                if sup > control.u_cap || !sup.is_finite() {
                    record(&state, dt, &mut report, observers);
                    report.outcome = RunOutcome::BlowupSuspected { t_detect: state.t, sup };
                    break;
                }
                if due || finished {
                    record(&state, dt, &mut report, observers);
                    since_sample = 0;
                }
            }
            Err(SolverError::NonPositive { .. }) | Err(SolverError::LinearSolveFailure { .. }) => {
                report.rejected_steps += 1;
                dt_trial = dt * T::lit(0.5);
                if dt_trial < control.dt_min {
                    report.outcome =
                        RunOutcome::Stalled { t: state.t, dt: dt_trial, reason: StallReason::DtBelowMinimum };
                    break;
                }
            }
            Err(e) => {
                report.outcome =
                    RunOutcome::Stalled { t: state.t, dt, reason: StallReason::SolverFailure(e.to_string()) };
                break;
            }
        }
    }

    if report.samples.last().map(|s| s.t) != Some(state.t) {
        let dt = if report.largest_dt > T::zero() { dt_trial } else { T::zero() };
        record(&state, dt, &mut report, observers);
    }
    report.final_state = state;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_initial_data, InitialSpec, ProfileKind, WProfileKind};

    fn params(coupling: Coupling, m: f64, chi: f64) -> ModelParams<f64> {
        ModelParams {
            n: 2,
            coupling,
            chi,
            diffusion: DiffusionLaw::Prototype { m },
            phi_star: 0.0,
            radius: 1.0,
            m_bar: None,
        }
    }

    fn solver(p: ModelParams<f64>, source: Source<f64>, cells: usize) -> Solver<f64> {
        let grid = Arc::new(RadialGrid::uniform(p.n, p.radius, cells).unwrap());
        Solver::new(p, source, SolverOptions::default(), grid).unwrap()
    }

    #[test]
    fn elliptic_constant_source() {
        let s = solver(params(Coupling::Elliptic, 2.0, 1.0), Source::Zero, 50);
        let u = Field::constant(Arc::clone(s.grid()), 3.0);
        let w = Field::constant(Arc::clone(s.grid()), 0.5);
        let v = s.solve_elliptic_v(&u, &w).unwrap();
        let err = v.values().iter().fold(0.0f64, |m, &x| m.max((x - 1.5).abs()));
        assert!(err < 1e-12, "{err:e}");
    }

    #[test]
    fn elliptic_integral_identity() {
        let s = solver(params(Coupling::Elliptic, 2.0, 1.0), Source::Zero, 200);
        let u = Field::from_fn(Arc::clone(s.grid()), |r| (-20.0 * r * r).exp() * 5.0);
        let w = Field::from_fn(Arc::clone(s.grid()), |r| 1.0 + r);
        let v = s.solve_elliptic_v(&u, &w).unwrap();
        let target = u.product(&w).integral();
        assert!((v.integral() - target).abs() <= 1e-12 * target);
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let phi = 0.7;
        let mut p = params(Coupling::Elliptic, 0.5, 3.0);
        p.phi_star = phi;
        let s = solver(p, Source::Constant(phi), 40);
        let g = Arc::clone(s.grid());
        let st = s.state(0.0, Field::constant(Arc::clone(&g), phi), None, Field::zeros(Arc::clone(&g))).unwrap();
        let next = s.step(&st, 0.01).unwrap();
        for (a, b) in next.u.values().iter().zip(st.u.values()) {
            assert!((a - b).abs() <= 1e-14, "{a} {b}");
        }
        assert!(next.v.values().iter().all(|&x| x == 0.0));
        assert!(next.w.values().iter().all(|&x| x == 0.0));
    }

    fn rk4_may_nowak(mut y: [f64; 3], phi: f64, t_end: f64, steps: usize) -> [f64; 3] {
        let f = |y: [f64; 3]| [-y[0] - y[0] * y[2] + phi, -y[1] + y[0] * y[2], -y[2] + y[1]];
        let h = t_end / steps as f64;
        for _ in 0..steps {
            let k1 = f(y);
            let k2 = f([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1], y[2] + 0.5 * h * k1[2]]);
            let k3 = f([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1], y[2] + 0.5 * h * k2[2]]);
            let k4 = f([y[0] + h * k3[0], y[1] + h * k3[1], y[2] + h * k3[2]]);
            for j in 0..3 {
                y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
        }
        y
    }

    #[test]
    fn spatially_constant_parabolic_matches_ode() {
        let phi = 0.4;
        let mut p = params(Coupling::Parabolic, 2.0, 2.0);
        p.phi_star = phi;
        let s = solver(p, Source::Constant(phi), 16);
        let g = Arc::clone(s.grid());
        let mut st = s
            .state(
                0.0,
                Field::constant(Arc::clone(&g), 1.2),
                Some(Field::constant(Arc::clone(&g), 0.3)),
                Field::constant(Arc::clone(&g), 0.8),
            )
            .unwrap();
        for _ in 0..1000 {
            st = s.step(&st, 1e-3).unwrap();
        }
        let exact = rk4_may_nowak([1.2, 0.3, 0.8], phi, 1.0, 20_000);
        let got = [st.u.values()[7], st.v.values()[7], st.w.values()[7]];
        for j in 0..3 {
            assert!(((got[j] - exact[j]) / exact[j]).abs() < 1e-5, "{got:?} vs {exact:?}");
        }
    }

    #[test]
    fn one_step_mass_budget_on_random_states() {
        use proptest::prelude::*;
        let mut runner = proptest::test_runner::TestRunner::deterministic();
        runner
            .run(
                &(
                    proptest::collection::vec(0.0f64..5.0, 32),
                    proptest::collection::vec(0.0f64..2.0, 32),
                    0.0f64..1.0,
                    prop_oneof![Just(Coupling::Elliptic), Just(Coupling::Parabolic)],
                    1e-4f64..5e-3,
                ),
                |(u, w, phi, coupling, dt)| {
                    let mut p = params(coupling, 1.5, 1.0);
                    p.phi_star = phi;
                    let s = solver(p, Source::Constant(phi), 32);
                    let g = Arc::clone(s.grid());
                    let uf = Field::new(Arc::clone(&g), u).unwrap();
                    let wf = Field::new(Arc::clone(&g), w).unwrap();
                    let vf = Field::constant(Arc::clone(&g), 0.5);
                    let st = s.state(0.0, uf, Some(vf), wf).unwrap();
                    let before = st.u.integral();
                    match s.step(&st, dt) {
                        Ok(next) => {
                            let budget = before + dt * phi * g.domain_measure() + 1e-10;
                            prop_assert!(next.u.integral() <= budget);
                        }
                        Err(SolverError::NonPositive { .. }) => {}
                        Err(e) => return Err(TestCaseError::fail(e.to_string())),
                    }
                    Ok(())
                },
            )
            .unwrap();
    }

    #[test]
    fn zero_horizon_run_has_only_initial_sample() {
        let s = solver(params(Coupling::Elliptic, 2.0, 1.0), Source::Zero, 32);
        let g = Arc::clone(s.grid());
        let spec = InitialSpec {
            mu: 1.0,
            alpha: 1.0,
            beta: 1.0,
            r_star: None,
            u_profile: ProfileKind::Uniform,
            w_profile: WProfileKind::Uniform,
            v_profile: None,
        };
        let data = build_initial_data(s.params(), &spec, &g).unwrap();
        let st = s.initial_state(&data).unwrap();
        let control = StepControl::for_initial_sup(st.u.sup_norm());
        let report = run(&s, st, &control, &RunSettings::new(0.0, Cadence::Every(0.1)), &mut []).unwrap();
        assert_eq!(report.outcome, RunOutcome::Completed);
        assert_eq!(report.samples.len(), 1);
        assert_eq!(report.accepted_steps, 0);
    }

    #[test]
    fn cancellation_stops_the_loop() {
        let s = solver(params(Coupling::Elliptic, 2.0, 1.0), Source::Zero, 32);
        let g = Arc::clone(s.grid());
        let st =
            s.state(0.0, Field::constant(Arc::clone(&g), 1.0), None, Field::constant(Arc::clone(&g), 1.0)).unwrap();
        let token = CancelToken::new();
        let mut settings = RunSettings::new(10.0, Cadence::Steps(1));
        settings.cancel = Some(token.clone());
        let mut count = 0;
        let mut obs = |_: &State<f64>, _: &Sample<f64>| {
            count += 1;
            if count == 3 {
                token.cancel();
            }
        };
        let control = StepControl::for_initial_sup(1.0);
        let report = run(&s, st, &control, &settings, &mut [&mut obs]).unwrap();
        assert!(matches!(report.outcome, RunOutcome::Cancelled { .. }));
        assert_eq!(report.accepted_steps, 2);
    }

    #[test]
    fn upwind_limit_keeps_positivity() {
        let mut p = params(Coupling::Elliptic, 1.0, 30.0);
        p.phi_star = 0.0;
        for flux in [ChemotaxisFlux::Upwind, ChemotaxisFlux::LimitedUpwind] {
            let grid = Arc::new(RadialGrid::uniform(2, 1.0, 64).unwrap());
            let opts = SolverOptions { flux, scheme: TimeScheme::SemiImplicit, ..SolverOptions::default() };
            let s = Solver::new(p, Source::Zero, opts, Arc::clone(&grid)).unwrap();
            let u = Field::from_fn(Arc::clone(&grid), |r| if r < 0.3 { 10.0 } else { 0.0 });
            let st = s.state(0.0, u, None, Field::constant(Arc::clone(&grid), 1.0)).unwrap();
            let dt = s.chemotaxis_dt_limit(&st) * 0.99;
            let next = s.step(&st, dt).unwrap();
            assert!(next.u.min() >= 0.0);
        }
    }
}
