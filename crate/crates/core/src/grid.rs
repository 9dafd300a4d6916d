//! Cell-centered radial mesh on `[0, R]` with true n-ball cell measures.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::scalar::{unit_ball_volume, Real};

#[derive(Debug, Clone, PartialEq)]
pub enum GridError {
    InvalidDimension(u32),
    InvalidRadius(f64),
    TooFewCells(usize),
    /// Geometric spacing cannot fit `cells` cells of at least `min_width` into `[0, R]`.
    InfeasibleSpacing {
        min_width: f64,
        cells: usize,
        radius: f64,
    },
    InvalidExponent(f64),
    RadiusOutOfRange {
        r: f64,
        radius: f64,
    },
    LengthMismatch {
        expected: usize,
        got: usize,
    },
}

impl fmt::Display for GridError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridError::InvalidDimension(n) => write!(f, "spatial dimension must be at least 1, got {n}"),
            GridError::InvalidRadius(r) => write!(f, "ball radius must be positive and finite, got {r}"),
            GridError::TooFewCells(m) => write!(f, "radial grid needs at least 2 cells, got {m}"),
            GridError::InfeasibleSpacing { min_width, cells, radius } => {
                write!(f, "cannot place {cells} geometric cells with first width {min_width} in [0, {radius}]")
            }
            GridError::InvalidExponent(p) => write!(f, "Lp exponent must be >= 1 (or infinity), got {p}"),
            GridError::RadiusOutOfRange { r, radius } => write!(f, "radius {r} outside [0, {radius}]"),
            GridError::LengthMismatch { expected, got } => {
                write!(f, "field has {got} values but the grid has {expected} cells")
            }
        }
    }
}

impl std::error::Error for GridError {}

/// Placement of the cell faces.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Spacing {
    #[default]
    Uniform,
    /// Widths grow by a constant ratio away from the origin, starting at `min_width`.
    Geometric { min_width: f64 },
}

/// Radial mesh `0 = r_{1/2} < ... < r_{M+1/2} = R`.
///
/// `cell_measures[i]` is the n-dimensional volume of the shell between faces `i` and
/// `i + 1`, `face_areas[k]` the area of the sphere through face `k`. The face at the
/// origin has area exactly zero, which makes the discrete radial operators regular there.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid<T> {
    n: u32,
    radius: T,
    ball_volume: T,
    faces: Vec<T>,
    centers: Vec<T>,
    cell_measures: Vec<T>,
    face_areas: Vec<T>,
}

impl<T: Real> RadialGrid<T> {
    pub fn uniform(n: u32, radius: T, cells: usize) -> Result<Self, GridError> {
        Self::new(n, radius, cells, Spacing::Uniform)
    }

    pub fn new(n: u32, radius: T, cells: usize, spacing: Spacing) -> Result<Self, GridError> {
        if n == 0 {
            return Err(GridError::InvalidDimension(n));
        }
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(GridError::InvalidRadius(radius.as_f64()));
        }
        if cells < 2 {
            return Err(GridError::TooFewCells(cells));
        }
        let faces = match spacing {
            Spacing::Uniform => {
                let h = radius / T::from_count(cells);
                let mut f: Vec<T> = (0..=cells).map(|k| h * T::from_count(k)).collect();
                f[cells] = radius;
                f
            }
            Spacing::Geometric { min_width } => geometric_faces(radius, cells, T::lit(min_width))?,
        };
        Ok(Self::from_faces_unchecked(n, faces))
    }

    /// Builds a grid from explicit faces; the first face must be 0 and faces strictly increasing.
    pub fn from_faces(n: u32, faces: Vec<T>) -> Result<Self, GridError> {
        if n == 0 {
            return Err(GridError::InvalidDimension(n));
        }
        if faces.len() < 3 {
            return Err(GridError::TooFewCells(faces.len().saturating_sub(1)));
        }
        let radius = *faces.last().unwrap();
        if faces[0] != T::zero() || faces.windows(2).any(|w| !(w[1] > w[0])) || !radius.is_finite() {
            return Err(GridError::InvalidRadius(radius.as_f64()));
        }
        Ok(Self::from_faces_unchecked(n, faces))
    }

    fn from_faces_unchecked(n: u32, faces: Vec<T>) -> Self {
        let ball_volume: T = unit_ball_volume(n);
        let ni = n as i32;
        let nf = T::from_count(n as usize);
        let centers = faces.windows(2).map(|w| (w[0] + w[1]) * T::lit(0.5)).collect();
        let cell_measures = faces.windows(2).map(|w| ball_volume * (w[1].powi(ni) - w[0].powi(ni))).collect();
        let face_areas =
            faces.iter().map(|&r| if r == T::zero() { T::zero() } else { nf * ball_volume * r.powi(ni - 1) }).collect();
        RadialGrid { n, radius: *faces.last().unwrap(), ball_volume, faces, centers, cell_measures, face_areas }
    }

    pub fn dimension(&self) -> u32 {
        self.n
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    pub fn cells(&self) -> usize {
        self.centers.len()
    }

    pub fn faces(&self) -> &[T] {
        &self.faces
    }

    pub fn centers(&self) -> &[T] {
        &self.centers
    }

    pub fn cell_measures(&self) -> &[T] {
        &self.cell_measures
    }

    pub fn face_areas(&self) -> &[T] {
        &self.face_areas
    }

    /// `|B_1(0)|` in this dimension.
    pub fn unit_ball_volume(&self) -> T {
        self.ball_volume
    }

    /// `|Omega| = |B_1| R^n`.
    pub fn domain_measure(&self) -> T {
        self.ball_volume * self.radius.powi(self.n as i32)
    }

    pub fn width(&self, i: usize) -> T {
        self.faces[i + 1] - self.faces[i]
    }

    /// Distance between the centers of cells `k - 1` and `k`, i.e. across interior face `k`.
    pub fn center_gap(&self, k: usize) -> T {
        self.centers[k] - self.centers[k - 1]
    }

    pub fn min_width(&self) -> T {
        (0..self.cells()).map(|i| self.width(i)).fold(T::infinity(), T::min)
    }

    pub fn max_width(&self) -> T {
        (0..self.cells()).map(|i| self.width(i)).fold(T::zero(), T::max)
    }

    fn check_len(&self, f: &[T]) -> Result<(), GridError> {
        if f.len() != self.cells() {
            return Err(GridError::LengthMismatch { expected: self.cells(), got: f.len() });
        }
        Ok(())
    }

    /// Midpoint-rule `∫_Ω f dx = Σ ω_i f_i`.
    pub fn integral(&self, f: &[T]) -> T {
        debug_assert_eq!(f.len(), self.cells());
        self.cell_measures.iter().zip(f).fold(T::zero(), |acc, (&w, &v)| acc + w * v)
    }

    /// `(Σ ω_i |f_i|^p)^{1/p}`, or `max |f_i|` for `p = ∞`.
    pub fn lp_norm(&self, f: &[T], p: T) -> Result<T, GridError> {
        self.check_len(f)?;
        if p.is_infinite() && p > T::zero() {
            return Ok(f.iter().fold(T::zero(), |m, v| m.max(v.abs())));
        }
        if !(p >= T::one()) {
            return Err(GridError::InvalidExponent(p.as_f64()));
        }
        if p == T::one() {
            let abs: Vec<T> = f.iter().map(|v| v.abs()).collect();
            return Ok(self.integral(&abs));
        }
        // scale by the max to avoid overflow for large p or large values
        let scale = f.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if scale == T::zero() {
            return Ok(T::zero());
        }
        let s = self.cell_measures.iter().zip(f).fold(T::zero(), |acc, (&w, &v)| acc + w * (v.abs() / scale).powf(p));
        Ok(scale * s.powf(p.recip()))
    }

    /// Index of the cell that contains radius `r` (faces belong to the cell on their left,
    /// except `r = 0`).
    pub fn cell_containing(&self, r: T) -> usize {
        match self.faces[1..].iter().position(|&f| r <= f) {
            Some(i) => i,
            None => self.cells() - 1,
        }
    }

    /// Discrete `∫_{B_r(0)} f dx`; the cell cut by `r` contributes the exact sub-shell measure.
    pub fn ball_mass(&self, f: &[T], r: T) -> Result<T, GridError> {
        self.check_len(f)?;
        if !(r >= T::zero() && r <= self.radius) {
            return Err(GridError::RadiusOutOfRange { r: r.as_f64(), radius: self.radius.as_f64() });
        }
        let ni = self.n as i32;
        let mut acc = T::zero();
        for i in 0..self.cells() {
            let hi = self.faces[i + 1];
            if hi <= r {
                acc = acc + self.cell_measures[i] * f[i];
            } else {
                let lo = self.faces[i];
                if r > lo {
                    acc = acc + self.ball_volume * (r.powi(ni) - lo.powi(ni)) * f[i];
                }
                break;
            }
        }
        Ok(acc)
    }
}

fn geometric_faces<T: Real>(radius: T, cells: usize, min_width: T) -> Result<Vec<T>, GridError> {
    let infeasible = || GridError::InfeasibleSpacing { min_width: min_width.as_f64(), cells, radius: radius.as_f64() };
    if !(min_width > T::zero()) || min_width * T::from_count(cells) > radius {
        return Err(infeasible());
    }
    let total = |q: T| -> T {
        if (q - T::one()).abs() < T::epsilon() {
            min_width * T::from_count(cells)
        } else {
            min_width * (q.powi(cells as i32) - T::one()) / (q - T::one())
        }
    };
    // total(q) is increasing in q; bracket then bisect
    let mut lo = T::one();
    let mut hi = T::lit(2.0);
    while total(hi) < radius {
        hi = hi * T::lit(2.0);
        if !hi.is_finite() {
            return Err(infeasible());
        }
    }
    for _ in 0..200 {
        let mid = (lo + hi) * T::lit(0.5);
        if total(mid) < radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q = (lo + hi) * T::lit(0.5);
    let mut faces = Vec::with_capacity(cells + 1);
    faces.push(T::zero());
    let mut w = min_width;
    for _ in 0..cells {
        let next = *faces.last().unwrap() + w;
        faces.push(next);
        w = w * q;
    }
    faces[cells] = radius;
    if faces.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(infeasible());
    }
    Ok(faces)
}

/// Cell values on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    grid: Arc<RadialGrid<T>>,
    values: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn new(grid: Arc<RadialGrid<T>>, values: Vec<T>) -> Result<Self, GridError> {
        grid.check_len(&values)?;
        Ok(Field { grid, values })
    }

    pub fn constant(grid: Arc<RadialGrid<T>>, c: T) -> Self {
        let values = vec![c; grid.cells()];
        Field { grid, values }
    }

    pub fn zeros(grid: Arc<RadialGrid<T>>) -> Self {
        Self::constant(grid, T::zero())
    }

    /// Samples `f` at the cell centers.
    pub fn from_fn(grid: Arc<RadialGrid<T>>, f: impl Fn(T) -> T) -> Self {
        let values = grid.centers().iter().map(|&r| f(r)).collect();
        Field { grid, values }
    }

    pub fn grid(&self) -> &Arc<RadialGrid<T>> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn integral(&self) -> T {
        self.grid.integral(&self.values)
    }

    pub fn lp_norm(&self, p: T) -> Result<T, GridError> {
        self.grid.lp_norm(&self.values, p)
    }

    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn ball_mass(&self, r: T) -> Result<T, GridError> {
        self.grid.ball_mass(&self.values, r)
    }

    /// Cellwise product, used for the `u w` source.
    pub fn product(&self, other: &Field<T>) -> Field<T> {
        debug_assert!(Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid);
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| a * b).collect();
        Field { grid: Arc::clone(&self.grid), values }
    }

    /// Writes `r_center,value` rows with a header.
    pub fn write_csv<W: Write>(&self, mut out: W, name: &str) -> io::Result<()> {
        writeln!(out, "r_center,{name}")?;
        for (r, v) in self.grid.centers().iter().zip(&self.values) {
            writeln!(out, "{:e},{:e}", r.as_f64(), v.as_f64())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: u32, m: usize) -> RadialGrid<f64> {
        RadialGrid::uniform(n, 1.0, m).unwrap()
    }

    #[test]
    fn measures_sum_to_ball_volume() {
        for &n in &[2u32, 3] {
            for &m in &[7usize, 64, 513] {
                let g = grid(n, m);
                let s: f64 = g.cell_measures().iter().sum();
                assert!((s - g.domain_measure()).abs() <= 1e-14 * g.domain_measure());
                assert_eq!(g.face_areas()[0], 0.0);
            }
        }
    }

    #[test]
    fn constant_integrals() {
        let g = grid(2, 100);
        assert!((g.integral(&vec![1.0; 100]) - PI).abs() < 1e-12);
        assert!((g.integral(&vec![2.5; 100]) - 2.5 * PI).abs() < 1e-12);
    }

    #[test]
    fn linear_profile_integral_is_second_order() {
        // ∫_{B_1} |x| dx = 2π/3 in two dimensions
        let exact = 2.0 * PI / 3.0;
        let mut errs = Vec::new();
        for &m in &[32usize, 64, 128, 256] {
            let g = grid(2, m);
            let f: Vec<f64> = g.centers().to_vec();
            errs.push((g.integral(&f) - exact).abs());
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 2.0).abs() < 0.05, "order {order}");
        }
    }

    #[test]
    fn lp_norms() {
        let g = grid(2, 50);
        let c = 3.0;
        let f = vec![c; 50];
        assert!((g.lp_norm(&f, 2.0).unwrap() - c * PI.sqrt()).abs() < 1e-12);
        let h: Vec<f64> = g.centers().iter().map(|r| (5.0 * r).sin() - 0.3).collect();
        let inf = g.lp_norm(&h, f64::INFINITY).unwrap();
        assert_eq!(inf, h.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        let abs: Vec<f64> = h.iter().map(|v| v.abs()).collect();
        assert_eq!(g.lp_norm(&h, 1.0).unwrap(), g.integral(&abs));
        assert_eq!(g.lp_norm(&h, 0.5), Err(GridError::InvalidExponent(0.5)));
    }

    #[test]
    fn ball_mass_edges() {
        let g = grid(3, 40);
        let f = vec![1.0; 40];
        assert_eq!(g.ball_mass(&f, 0.0).unwrap(), 0.0);
        assert_eq!(g.ball_mass(&f, 1.0).unwrap(), g.integral(&f));
        let half = g.ball_mass(&f, 0.5).unwrap();
        assert!((half - 4.0 / 3.0 * PI * 0.125).abs() < 1e-14);
        let off = g.ball_mass(&f, 0.5123).unwrap();
        assert!((off - 4.0 / 3.0 * PI * 0.5123f64.powi(3)).abs() < 1e-14);
        assert!(g.ball_mass(&f, 1.0 + 1e-9).is_err());
        assert!(g.ball_mass(&f, -1e-9).is_err());
    }

    #[test]
    fn geometric_spacing() {
        let g = RadialGrid::<f64>::new(2, 1.0, 200, Spacing::Geometric { min_width: 1e-8 }).unwrap();
        assert_eq!(g.faces()[0], 0.0);
        assert_eq!(*g.faces().last().unwrap(), 1.0);
        assert!((g.width(0) - 1e-8).abs() < 1e-20);
        let ratio = g.width(101) / g.width(100);
        assert!((g.width(11) / g.width(10) - ratio).abs() < 1e-9);
        let s: f64 = g.cell_measures().iter().sum();
        assert!((s - PI).abs() < 1e-13);
        assert!(RadialGrid::<f64>::new(2, 1.0, 200, Spacing::Geometric { min_width: 0.01 }).is_err());
    }

    #[test]
    fn single_precision_grid() {
        let g = RadialGrid::<f32>::uniform(2, 1.0, 64).unwrap();
        let s = g.integral(&vec![1.0f32; 64]);
        assert!((s - std::f32::consts::PI).abs() < 1e-5);
    }
}
