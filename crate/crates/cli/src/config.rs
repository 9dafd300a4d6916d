//! TOML run configuration. Every section rejects unknown keys; all physical defaults
//! live here and in `configs/example.toml`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use mnchemo::analysis::MomentConfig;
use mnchemo::solver::{ChemotaxisFlux, FaceAverage, TimeScheme};
use mnchemo::{
    build_initial_data, Cadence, Coupling, DiffusionLaw, Field, InitialData, InitialSpec, ModelError, ModelParams,
    ProfileKind, RadialGrid, RunSettings, SolverOptions, Source, Spacing, StepControl, WProfileKind,
};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub control: ControlConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_n")]
    pub n: u32,
    /// 0 (elliptic `v`) or 1 (parabolic `v`).
    #[serde(default)]
    pub kappa: u8,
    #[serde(default = "default_chi")]
    pub chi: f64,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default)]
    pub diffusion: DiffusionConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_bar: Option<f64>,
    #[serde(default)]
    pub source: SourceConfig,
}

fn default_n() -> u32 {
    2
}
fn default_chi() -> f64 {
    5.0
}
fn default_radius() -> f64 {
    1.0
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n: default_n(),
            kappa: 0,
            chi: default_chi(),
            radius: default_radius(),
            diffusion: DiffusionConfig::default(),
            m_bar: None,
            source: SourceConfig::Zero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DiffusionConfig {
    /// `(1 + u)^{m-1}`
    Prototype { m: f64 },
    /// `coeff u^{m-1}`
    PurePower { m: f64, coeff: f64 },
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig::Prototype { m: 0.5 }
    }
}

impl DiffusionConfig {
    pub fn m(&self) -> f64 {
        match *self {
            DiffusionConfig::Prototype { m } | DiffusionConfig::PurePower { m, .. } => m,
        }
    }

    pub fn set_m(&mut self, value: f64) {
        match self {
            DiffusionConfig::Prototype { m } | DiffusionConfig::PurePower { m, .. } => *m = value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SourceConfig {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    /// `amplitude (1 - (r/radius)^2)^3 (1 + cos 2π frequency t) / 2`
    Separable {
        amplitude: f64,
        radius: f64,
        frequency: f64,
    },
}

impl SourceConfig {
    pub fn build(&self) -> Source<f64> {
        match *self {
            SourceConfig::Zero => Source::Zero,
            SourceConfig::Constant { value } => Source::Constant(value),
            SourceConfig::Separable { amplitude, radius, frequency } => {
                Source::Separable { amplitude, radius, frequency }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_cells")]
    pub cells: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

fn default_cells() -> usize {
    512
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { cells: default_cells(), spacing: Spacing::Uniform }
    }
}

/// Concentration radius: a number, or `"hypotheses"` for the largest radius passing the
/// smallness conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RStar {
    Radius(f64),
    Rule(RStarRule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RStarRule {
    Hypotheses,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileConfig {
    Uniform,
    #[default]
    SmoothBump,
    Gaussian,
    /// `(r, value)` pairs.
    Table {
        points: Vec<[f64; 2]>,
    },
    /// Two-column `(r, value)` CSV, optional header row; relative to the config file.
    Csv {
        path: PathBuf,
    },
}

impl ProfileConfig {
    fn build(&self) -> Result<ProfileKind<f64>> {
        Ok(match self {
            ProfileConfig::Uniform => ProfileKind::Uniform,
            ProfileConfig::SmoothBump => ProfileKind::SmoothBump,
            ProfileConfig::Gaussian => ProfileKind::Gaussian,
            ProfileConfig::Table { points } => ProfileKind::Tabulated(points.iter().map(|p| (p[0], p[1])).collect()),
            ProfileConfig::Csv { path } => ProfileKind::Tabulated(read_profile_csv(path)?),
        })
    }

    fn rebase(&mut self, dir: &Path) {
        if let ProfileConfig::Csv { path } = self {
            if path.is_relative() {
                *path = dir.join(&*path);
            }
        }
    }
}

fn read_profile_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading profile {}", path.display()))?;
    let mut points = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: Option<(f64, f64)> = match (rec.get(0), rec.get(1)) {
            (Some(a), Some(b)) => a.parse().ok().zip(b.parse().ok()),
            _ => None,
        };
        match parsed {
            Some(p) => points.push(p),
            None if k == 0 => {} // header
            None => bail!("{}: line {}: expected two numbers", path.display(), k + 1),
        }
    }
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WProfileConfig {
    #[default]
    Uniform,
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VInitialConfig {
    #[serde(default)]
    pub profile: ProfileConfig,
    pub mass: f64,
}

/// Multiplicative noise `u0 ← u0 (1 + amplitude ξ)`, `ξ ~ U(-1, 1)` per cell, followed by
/// renormalization to mass `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    pub amplitude: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default = "one")]
    pub mu: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_star: Option<RStar>,
    #[serde(default)]
    pub u_profile: ProfileConfig,
    #[serde(default)]
    pub w_profile: WProfileConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<VInitialConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationConfig>,
}

fn one() -> f64 {
    1.0
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig {
            mu: 1.0,
            alpha: 1.0,
            beta: 1.0,
            r_star: None,
            u_profile: ProfileConfig::SmoothBump,
            w_profile: WProfileConfig::Uniform,
            v: None,
            perturbation: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    #[serde(default = "default_dt_init")]
    pub dt_init: f64,
    #[serde(default = "default_dt_min")]
    pub dt_min: f64,
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
    #[serde(default = "default_safety")]
    pub safety: f64,
    /// Absolute cap on `‖u‖_∞ + ‖w‖_∞`; overrides `u_cap_factor`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_cap: Option<f64>,
    /// Cap as a multiple of `‖u0‖_∞`.
    #[serde(default = "default_cap_factor")]
    pub u_cap_factor: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
}

fn default_dt_init() -> f64 {
    1e-4
}
fn default_dt_min() -> f64 {
    1e-12
}
fn default_dt_max() -> f64 {
    1e-2
}
fn default_safety() -> f64 {
    0.9
}
fn default_cap_factor() -> f64 {
    1e6
}
fn default_cfl() -> f64 {
    0.9
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            dt_init: default_dt_init(),
            dt_min: default_dt_min(),
            dt_max: default_dt_max(),
            safety: default_safety(),
            u_cap: None,
            u_cap_factor: default_cap_factor(),
            cfl: default_cfl(),
        }
    }
}

impl ControlConfig {
    pub fn build(&self, sup_u0: f64) -> StepControl<f64> {
        StepControl {
            dt_init: self.dt_init,
            dt_min: self.dt_min,
            dt_max: self.dt_max,
            safety: self.safety,
            u_cap: self.u_cap.unwrap_or(self.u_cap_factor * sup_u0),
            cfl: self.cfl,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeConfig {
    SemiImplicit,
    #[default]
    Extrapolated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FluxConfig {
    Upwind,
    #[default]
    LimitedUpwind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaceAverageConfig {
    #[default]
    Arithmetic,
    Harmonic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub flux: FluxConfig,
    #[serde(default)]
    pub face_average: FaceAverageConfig,
    #[serde(default = "default_picard")]
    pub picard_iterations: usize,
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_positivity_tol")]
    pub positivity_tol: f64,
}

fn default_picard() -> usize {
    1
}
fn default_picard_tol() -> f64 {
    1e-8
}
fn default_positivity_tol() -> f64 {
    1e-13
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            scheme: SchemeConfig::default(),
            flux: FluxConfig::default(),
            face_average: FaceAverageConfig::default(),
            picard_iterations: default_picard(),
            picard_tol: default_picard_tol(),
            positivity_tol: default_positivity_tol(),
        }
    }
}

impl SolverConfig {
    pub fn build(&self) -> SolverOptions<f64> {
        SolverOptions {
            face_average: match self.face_average {
                FaceAverageConfig::Arithmetic => FaceAverage::Arithmetic,
                FaceAverageConfig::Harmonic => FaceAverage::Harmonic,
            },
            flux: match self.flux {
                FluxConfig::Upwind => ChemotaxisFlux::Upwind,
                FluxConfig::LimitedUpwind => ChemotaxisFlux::LimitedUpwind,
            },
            scheme: match self.scheme {
                SchemeConfig::SemiImplicit => TimeScheme::SemiImplicit,
                SchemeConfig::Extrapolated => TimeScheme::Extrapolated,
            },
            picard_iterations: self.picard_iterations,
            picard_tol: self.picard_tol,
            positivity_tol: self.positivity_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Relative tolerance of the moment inequality residual.
    #[serde(default = "default_odi_tol")]
    pub odi_tolerance: f64,
    /// `‖v‖_p` bound used before a trajectory exists (for the `r*` search).
    #[serde(default = "one")]
    pub k_prior: f64,
    /// Window length used for the `r*` search; defaults to `1 / (4(2β + 1))`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_star_prior: Option<f64>,
    /// Radii (as fractions of `r*`) at which the residual is sampled.
    #[serde(default = "default_odi_radii")]
    pub odi_radii: Vec<f64>,
    /// Reruns with the trajectory's own `K` and `T*` when those break the conditions
    /// the searched `r*` was chosen under.
    #[serde(default = "default_rounds")]
    pub calibration_rounds: usize,
}

fn default_epsilon() -> f64 {
    0.1
}
fn default_eta() -> f64 {
    0.2
}
fn default_lambda() -> f64 {
    0.1
}
fn default_odi_tol() -> f64 {
    1e-2
}
fn default_odi_radii() -> Vec<f64> {
    vec![1.0]
}
fn default_rounds() -> usize {
    1
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            epsilon: default_epsilon(),
            eta: default_eta(),
            lambda: default_lambda(),
            p: None,
            odi_tolerance: default_odi_tol(),
            k_prior: 1.0,
            t_star_prior: None,
            odi_radii: default_odi_radii(),
            calibration_rounds: default_rounds(),
        }
    }
}

impl AnalysisConfig {
    pub fn moment(&self) -> MomentConfig<f64> {
        MomentConfig { epsilon: self.epsilon, eta: self.eta, lambda: self.lambda, p: self.p }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    /// Sampling interval in model time; ignored when `cadence_steps` is set.
    #[serde(default = "default_cadence")]
    pub cadence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cadence_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshot_times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
}

fn default_t_end() -> f64 {
    10.0
}
fn default_cadence() -> f64 {
    0.1
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            t_end: default_t_end(),
            cadence: default_cadence(),
            cadence_steps: None,
            snapshot_times: Vec::new(),
            max_steps: None,
        }
    }
}

impl OutputConfig {
    pub fn settings(&self) -> RunSettings<f64> {
        let cadence = match self.cadence_steps {
            Some(k) => Cadence::Steps(k),
            None => Cadence::Every(self.cadence),
        };
        let mut s = RunSettings::new(self.t_end, cadence);
        s.snapshot_times = self.snapshot_times.clone();
        s.max_steps = self.max_steps;
        s
    }
}

/// Maps a core parameter name to its key in the configuration file.
fn key_of(name: &str) -> &'static str {
    match name {
        "n" => "model.n",
        "chi" => "model.chi",
        "R" | "radius" => "model.radius",
        "m" => "model.diffusion.m",
        "coeff" => "model.diffusion.coeff",
        "m_bar" => "model.m_bar",
        "phi_star" => "model.source",
        "mu" => "initial.mu",
        "alpha" | "beta" => "initial.alpha/initial.beta",
        "r_star" => "initial.r_star",
        "v0" | "v0.mass" => "initial.v",
        "u0" => "initial.u_profile",
        "grid" => "grid",
        _ => "model",
    }
}

fn keyed(e: ModelError) -> anyhow::Error {
    match &e {
        ModelError::InvalidParameter { name, .. } => anyhow!("{}: {e}", key_of(name)),
        ModelError::SingularDiffusion { .. } => anyhow!("model.diffusion.m: {e}"),
        ModelError::Grid(_) => anyhow!("grid: {e}"),
        _ => anyhow!("initial: {e}"),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| anyhow!("malformed config: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| anyhow!("malformed config in {}: {e}", path.display()))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        cfg.initial.u_profile.rebase(dir);
        if let Some(v) = cfg.initial.v.as_mut() {
            v.profile.rebase(dir);
        }
        cfg.validate().with_context(|| format!("in {}", path.display()))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn params(&self) -> Result<ModelParams<f64>> {
        let m = &self.model;
        let coupling =
            Coupling::from_kappa(m.kappa).ok_or_else(|| anyhow!("model.kappa: must be 0 or 1, got {}", m.kappa))?;
        let diffusion = match m.diffusion {
            DiffusionConfig::Prototype { m } => DiffusionLaw::Prototype { m },
            DiffusionConfig::PurePower { m, coeff } => DiffusionLaw::PurePower { m, coeff },
        };
        let params = ModelParams {
            n: m.n,
            coupling,
            chi: m.chi,
            diffusion,
            phi_star: self.model.source.build().bound(),
            radius: m.radius,
            m_bar: m.m_bar,
        };
        params.validate().map_err(keyed)?;
        Ok(params)
    }

    pub fn grid(&self) -> Result<Arc<RadialGrid<f64>>> {
        let g = RadialGrid::new(self.model.n, self.model.radius, self.grid.cells, self.grid.spacing)
            .map_err(|e| anyhow!("grid: {e}"))?;
        Ok(Arc::new(g))
    }

    /// Initial data at concentration radius `r_star` (already resolved).
    pub fn initial_data(
        &self,
        params: &ModelParams<f64>,
        grid: &Arc<RadialGrid<f64>>,
        r_star: Option<f64>,
    ) -> Result<InitialData<f64>> {
        let i = &self.initial;
        let spec = InitialSpec {
            mu: i.mu,
            alpha: i.alpha,
            beta: i.beta,
            r_star,
            u_profile: i.u_profile.build().context("initial.u_profile")?,
            w_profile: match i.w_profile {
                WProfileConfig::Uniform => WProfileKind::Uniform,
                WProfileConfig::Cosine => WProfileKind::Cosine,
            },
            v_profile: match &i.v {
                Some(v) => Some((v.profile.build().context("initial.v.profile")?, v.mass)),
                None => None,
            },
        };
        let mut data = build_initial_data(params, &spec, grid).map_err(keyed)?;
        if let Some(p) = i.perturbation {
            data.u0 = perturb(&data.u0, p, i.mu)?;
        }
        Ok(data)
    }

    fn validate(&self) -> Result<()> {
        let params = self.params()?;
        self.grid()?;
        let i = &self.initial;
        if !(i.mu > 0.0) {
            bail!("initial.mu: must be positive, got {}", i.mu);
        }
        if !(i.alpha > 0.0 && i.beta >= i.alpha) {
            bail!("initial.alpha/initial.beta: need beta >= alpha > 0, got {} and {}", i.alpha, i.beta);
        }
        if let Some(RStar::Radius(r)) = i.r_star {
            if !(r > 0.0 && r < self.model.radius) {
                bail!("initial.r_star: must lie in (0, {}), got {r}", self.model.radius);
            }
        }
        if matches!(i.r_star, Some(RStar::Rule(_))) && self.analysis.is_none() {
            bail!("initial.r_star: \"hypotheses\" needs an [analysis] section");
        }
        if params.coupling == Coupling::Parabolic && i.v.is_none() {
            bail!("initial.v: kappa = 1 needs an initial v (profile and mass)");
        }
        if let Some(p) = i.perturbation {
            if !(0.0..1.0).contains(&p.amplitude) {
                bail!("initial.perturbation.amplitude: must lie in [0, 1), got {}", p.amplitude);
            }
        }
        match self.model.source {
            SourceConfig::Zero => {}
            SourceConfig::Constant { value } => {
                if !(value >= 0.0 && value.is_finite()) {
                    bail!("model.source.value: must be nonnegative, got {value}");
                }
            }
            SourceConfig::Separable { amplitude, radius, frequency } => {
                if !(amplitude >= 0.0 && radius > 0.0 && frequency >= 0.0) {
                    bail!("model.source: separable source needs amplitude >= 0, radius > 0, frequency >= 0");
                }
            }
        }
        self.control.build(1.0).validate().map_err(|e| anyhow!("control: {e}"))?;
        let o = &self.output;
        if !(o.t_end > 0.0 && o.t_end.is_finite()) {
            bail!("output.t_end: must be positive, got {}", o.t_end);
        }
        if o.cadence_steps.is_none() && !(o.cadence > 0.0) {
            bail!("output.cadence: must be positive, got {}", o.cadence);
        }
        if o.cadence_steps == Some(0) {
            bail!("output.cadence_steps: must be at least 1");
        }
        if let Some(a) = &self.analysis {
            if !(a.odi_tolerance >= 0.0) {
                bail!("analysis.odi_tolerance: must be nonnegative, got {}", a.odi_tolerance);
            }
            if !(a.k_prior > 0.0) {
                bail!("analysis.k_prior: must be positive, got {}", a.k_prior);
            }
            if a.odi_radii.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
                bail!("analysis.odi_radii: fractions of r* must lie in (0, 1]");
            }
            // only meaningful where the moment argument applies
            if let Ok(b) = params.diffusion.power_upper_bound(params.m_bar) {
                if b.m < 1.0 && params.coupling == Coupling::Elliptic {
                    a.moment().validate(params.n, b.m).map_err(|e| anyhow!("analysis: {e}"))?;
                }
            }
        }
        Ok(())
    }
}

fn perturb(u0: &Field<f64>, p: PerturbationConfig, mu: f64) -> Result<Field<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let noisy: Vec<f64> = u0.values().iter().map(|&u| u * (1.0 + p.amplitude * rng.gen_range(-1.0..1.0))).collect();
    let field = Field::new(std::sync::Arc::clone(u0.grid()), noisy)?;
    let scale = mu / field.integral();
    Ok(Field::new(std::sync::Arc::clone(u0.grid()), field.values().iter().map(|&u| u * scale).collect())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = include_str!("../../../configs/example.toml");

    #[test]
    fn example_parses_with_documented_defaults() {
        let cfg = RunConfig::from_toml(EXAMPLE).unwrap();
        assert_eq!(cfg.model.n, 2);
        assert_eq!(cfg.model.kappa, 0);
        assert_eq!(cfg.model.chi, 5.0);
        assert_eq!(cfg.model.diffusion, DiffusionConfig::Prototype { m: 0.5 });
        assert_eq!(cfg.grid.cells, 512);
        assert_eq!(cfg.model.source, SourceConfig::Zero);
        assert_eq!(cfg, RunConfig::default_with_analysis());
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::from_toml(EXAMPLE).unwrap();
        cfg.initial.r_star = Some(RStar::Rule(RStarRule::Hypotheses));
        cfg.model.source = SourceConfig::Separable { amplitude: 0.3, radius: 0.5, frequency: 2.0 };
        cfg.grid.spacing = Spacing::Geometric { min_width: 1e-6 };
        cfg.initial.u_profile = ProfileConfig::Table { points: vec![[0.0, 2.0], [0.5, 1.0], [1.0, 1.0]] };
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(text, back.to_toml().unwrap());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_toml("[model]\nchii = 3.0\n").unwrap_err();
        assert!(format!("{err:#}").contains("chii"), "{err:#}");
    }

    #[test]
    fn invalid_value_names_key() {
        let err = RunConfig::from_toml("[model]\nchi = -1.0\n").unwrap_err();
        assert!(format!("{err:#}").contains("model.chi"), "{err:#}");
        let err = RunConfig::from_toml("[initial]\nr_star = 2.0\n").unwrap_err();
        assert!(format!("{err:#}").contains("initial.r_star"), "{err:#}");
    }

    #[test]
    fn pure_power_needs_m_bar() {
        let text = "[model.diffusion]\nlaw = \"pure-power\"\nm = -0.5\ncoeff = 1.0\n";
        let err = RunConfig::from_toml(text).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("model.m_bar") && msg.contains("m_bar in (0, 1)"), "{msg}");
        let ok = format!("{text}[model]\n");
        assert!(RunConfig::from_toml(&ok).is_err());
        let with_bar = "[model]\nm_bar = 0.5\n[model.diffusion]\nlaw = \"pure-power\"\nm = -0.5\ncoeff = 1.0\n";
        RunConfig::from_toml(with_bar).unwrap();
    }

    #[test]
    fn perturbation_keeps_mass_and_is_seeded() {
        let mut cfg = RunConfig::default();
        cfg.grid.cells = 64;
        cfg.initial.perturbation = Some(PerturbationConfig { amplitude: 0.2, seed: 7 });
        let params = cfg.params().unwrap();
        let grid = cfg.grid().unwrap();
        let a = cfg.initial_data(&params, &grid, None).unwrap();
        let b = cfg.initial_data(&params, &grid, None).unwrap();
        assert_eq!(a.u0, b.u0);
        assert!((a.u0.integral() - 1.0).abs() < 1e-12);
        assert!(a.u0.min() >= 0.0);
    }

    impl RunConfig {
        fn default_with_analysis() -> Self {
            RunConfig { analysis: Some(AnalysisConfig::default()), ..RunConfig::default() }
        }
    }
}
