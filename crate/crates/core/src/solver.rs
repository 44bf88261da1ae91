//! Monotone midpoint scheme for `−Δ∞u = f₊χ{u>0} + f₋χ{u<0}` on `[-1,1]^n`.
//!
//! The unknowns are the grid nodes strictly inside the unit ball whose full
//! stencil exists; every other node carries Dirichlet data. The discrete
//! normalized operator is `(max_S v + min_S v − 2u)/r²`, where the `v` are
//! stencil values pulled back along their rays to the ring of radius
//! `r = h`. Multiplying by `|∇ₕu|²` gives the non-normalized operator.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Geometry, Point, ScalarField};

/// Stencil offsets with their pull-back factors `r / |offset|`.
#[derive(Debug, Clone)]
pub struct Stencil {
    width: usize,
    offsets: Vec<(isize, isize, f64)>,
}

impl Stencil {
    /// All primitive offsets with `max(|a|, |b|) ≤ width` (axis and
    /// diagonal neighbors for `width = 1`). One-dimensional grids use `±1`.
    pub fn new(n: usize, width: usize) -> Self {
        let width = width.max(1);
        let mut offsets = Vec::new();
        if n == 1 {
            offsets.push((-1, 0, 1.0));
            offsets.push((1, 0, 1.0));
        } else {
            let w = width as isize;
            for a in -w..=w {
                for b in -w..=w {
                    if (a, b) == (0, 0) || gcd(a.unsigned_abs(), b.unsigned_abs()) != 1 {
                        continue;
                    }
                    let len = ((a * a + b * b) as f64).sqrt();
                    offsets.push((a, b, 1.0 / len));
                }
            }
        }
        Self { width: if n == 1 { 1 } else { width }, offsets }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    fn fits(&self, u: &ScalarField, k: usize) -> bool {
        let (i, j) = u.axes(k);
        let m = u.points_per_axis();
        let inner = |a: usize| a >= self.width && a + self.width < m;
        inner(i) && (u.dim() == 1 || inner(j))
    }

    /// `(max v, min v)` over the ring values at node `k`.
    #[inline]
    fn ring_extremes(&self, values: &[f64], u: &Geometry, k: usize) -> (f64, f64) {
        let (i, j) = u.axes(k);
        let c = values[k];
        let mut hi = f64::NEG_INFINITY;
        let mut lo = f64::INFINITY;
        for &(a, b, s) in &self.offsets {
            let p = (i as isize + a) as usize;
            let q = (j as isize + b) as usize;
            let v = c + s * (values[u.flat(p, q)] - c);
            hi = hi.max(v);
            lo = lo.min(v);
        }
        (hi, lo)
    }
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn gradient_sq(values: &[f64], u: &Geometry, k: usize) -> f64 {
    let (i, j) = u.axes(k);
    let inv = 0.5 / u.h;
    let g1 = (values[u.flat(i + 1, j)] - values[u.flat(i - 1, j)]) * inv;
    let g2 = if u.n == 1 {
        0.0
    } else {
        (values[u.flat(i, j + 1)] - values[u.flat(i, j - 1)]) * inv
    };
    g1 * g1 + g2 * g2
}

/// `|∇ₕu|² · (max_S v + min_S v − 2u)/h²` at an interior node, with the
/// gradient magnitude clamped below by `gradient_guard`.
pub fn discrete_inflap(u: &ScalarField, k: usize, gradient_guard: f64) -> Result<f64> {
    discrete_inflap_with(u, k, gradient_guard, &Stencil::new(u.dim(), 1))
}

pub fn discrete_inflap_with(
    u: &ScalarField,
    k: usize,
    gradient_guard: f64,
    stencil: &Stencil,
) -> Result<f64> {
    if k >= u.len() || !stencil.fits(u, k) {
        return Err(Error::BoundaryIndex(k));
    }
    let h = u.spacing();
    let geo = u.geometry();
    let (hi, lo) = stencil.ring_extremes(u.values(), &geo, k);
    let normalized = (hi + lo - 2.0 * u.value(k)) / (h * h);
    let g = gradient_sq(u.values(), &geo, k).sqrt().max(gradient_guard);
    Ok(g * g * normalized)
}

/// Forcing data, Dirichlet data and the flux bound of one problem instance.
#[derive(Debug, Clone, Serialize)]
pub struct ProblemSpec {
    pub fplus: ScalarField,
    pub fminus: ScalarField,
    pub lambda: f64,
    /// Values imposed on every node that is not an unknown.
    pub dirichlet: ScalarField,
    /// Forcing used where `u = 0` exactly.
    pub zero_set_forcing: f64,
}

impl ProblemSpec {
    pub fn new(fplus: ScalarField, fminus: ScalarField, lambda: f64, dirichlet: ScalarField) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParams(format!("Lambda must be positive, got {lambda}")));
        }
        if !fplus.same_grid(&dirichlet) || !fminus.same_grid(&dirichlet) {
            return Err(Error::InvalidParams("forcing and Dirichlet data live on different grids".into()));
        }
        Ok(Self { fplus, fminus, lambda, dirichlet, zero_set_forcing: 0.0 })
    }

    pub fn grid(&self) -> &ScalarField {
        &self.dirichlet
    }

    /// Phase rule: `f₊` where `u > 0`, `f₋` where `u < 0`.
    #[inline]
    pub fn forcing(&self, k: usize, u: f64) -> f64 {
        if u > 0.0 {
            self.fplus.value(k)
        } else if u < 0.0 {
            self.fminus.value(k)
        } else {
            self.zero_set_forcing
        }
    }

    pub fn fplus_norm(&self) -> f64 {
        self.fplus.sup_norm_in_ball(1.0)
    }

    pub fn fminus_norm(&self) -> f64 {
        self.fminus.sup_norm_in_ball(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepOrder {
    /// In-place Gauss–Seidel in flat-index order.
    Lexicographic,
    /// Two Jacobi half-steps over the `(i + j)` parity classes.
    TwoColor,
}

/// How far the stencil reaches, in cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StencilWidth {
    Fixed(usize),
    /// `1 + log₂((m − 1)/16)`, floored at 1: one extra ring each time the
    /// grid is refined past `m = 17`. A fixed width leaves an angular
    /// consistency error that does not shrink with `h`.
    Scaled,
}

impl StencilWidth {
    pub fn resolve(self, m: usize) -> usize {
        match self {
            Self::Fixed(w) => w.max(1),
            Self::Scaled => {
                let cells = (m.saturating_sub(1) / 16).max(1);
                1 + cells.ilog2() as usize
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub tol: f64,
    pub damping: f64,
    /// Floor for `|∇ₕu|²` in the forcing term; `None` means `h`.
    pub guard: Option<f64>,
    pub stencil_width: StencilWidth,
    pub sweep: SweepOrder,
    /// Run the two-color half-steps with rayon.
    pub parallel: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 200_000,
            tol: 1e-10,
            damping: 0.8,
            guard: None,
            stencil_width: StencilWidth::Fixed(1),
            sweep: SweepOrder::Lexicographic,
            parallel: false,
        }
    }
}

impl SolverConfig {
    pub fn stencil_for(&self, grid: &ScalarField) -> Stencil {
        Stencil::new(grid.dim(), self.stencil_width.resolve(grid.points_per_axis()))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Solution {
    pub field: ScalarField,
    pub iterations: usize,
    pub last_update: f64,
    pub residual: f64,
}

/// Nodes updated by the solver.
pub fn unknown_nodes(grid: &ScalarField, stencil: &Stencil) -> Vec<usize> {
    (0..grid.len())
        .filter(|&k| {
            let x = grid.point(k);
            (x[0] * x[0] + x[1] * x[1]).sqrt() < 1.0 - 1e-12 && stencil.fits(grid, k)
        })
        .collect()
}

struct Scheme<'a> {
    problem: &'a ProblemSpec,
    stencil: Stencil,
    damping: f64,
    guard: f64,
    half_r2: f64,
}

impl Scheme<'_> {
    #[inline]
    fn update(&self, values: &[f64], grid: &Geometry, k: usize) -> f64 {
        let c = values[k];
        let (hi, lo) = self.stencil.ring_extremes(values, grid, k);
        let base = 0.5 * (hi + lo);
        let fp = self.problem.fplus.value(k);
        let fm = self.problem.fminus.value(k);
        let target = if fp == 0.0 && fm == 0.0 {
            base
        } else {
            // The phase is chosen consistently with the new value rather than
            // the old one; otherwise a node sitting on the interface flips
            // sign every sweep and never settles.
            let scale = self.half_r2 / gradient_sq(values, grid, k).max(self.guard);
            let up = base + scale * fp;
            let down = base + scale * fm;
            match (up > 0.0, down < 0.0) {
                (true, true) => {
                    if c < 0.0 {
                        down
                    } else {
                        up
                    }
                }
                (true, false) => up,
                (false, true) => down,
                (false, false) => 0.0,
            }
        };
        (1.0 - self.damping) * c + self.damping * target
    }
}

/// Damped nonlinear Gauss–Seidel on the phase-dependent scheme.
pub fn solve(problem: &ProblemSpec, initial: &ScalarField, config: &SolverConfig) -> Result<Solution> {
    let grid = problem.grid();
    if !initial.same_grid(grid) {
        return Err(Error::InvalidParams("initial guess lives on a different grid".into()));
    }
    if !(config.damping > 0.0 && config.damping <= 1.0) {
        return Err(Error::InvalidParams(format!("damping must lie in (0,1], got {}", config.damping)));
    }
    if !(config.tol > 0.0) {
        return Err(Error::InvalidParams(format!("tol must be positive, got {}", config.tol)));
    }
    let h = grid.spacing();
    let scheme = Scheme {
        problem,
        stencil: config.stencil_for(grid),
        damping: config.damping,
        guard: config.guard.unwrap_or(h),
        half_r2: 0.5 * h * h,
    };
    let unknowns = unknown_nodes(grid, &scheme.stencil);
    let mut is_unknown = vec![false; grid.len()];
    for &k in &unknowns {
        is_unknown[k] = true;
    }

    let mut field = initial.clone();
    for (k, v) in field.values_mut().iter_mut().enumerate() {
        if !is_unknown[k] {
            *v = problem.dirichlet.value(k);
        }
    }

    let (red, black): (Vec<usize>, Vec<usize>) = unknowns.iter().partition(|&&k| {
        let (i, j) = grid.axes(k);
        (i + j) % 2 == 0
    });

    let mut last_update = f64::INFINITY;
    for iter in 1..=config.max_iters {
        last_update = match config.sweep {
            SweepOrder::Lexicographic => sweep_lexicographic(&scheme, &mut field, &unknowns),
            SweepOrder::TwoColor => {
                let a = half_step(&scheme, &mut field, &red, config.parallel);
                let b = half_step(&scheme, &mut field, &black, config.parallel);
                a.max(b)
            }
        };
        if last_update < config.tol {
            let residual = residual_norm(problem, &field, &unknowns, &scheme.stencil);
            return Ok(Solution { field, iterations: iter, last_update, residual });
        }
    }
    let residual = residual_norm(problem, &field, &unknowns, &scheme.stencil);
    Err(Error::NonConvergence {
        iterations: config.max_iters,
        last_update,
        residual,
        last_iterate: Box::new(field),
    })
}

fn sweep_lexicographic(scheme: &Scheme<'_>, field: &mut ScalarField, unknowns: &[usize]) -> f64 {
    let grid = field.geometry();
    let values = field.values_mut();
    let mut delta: f64 = 0.0;
    for &k in unknowns {
        let new = scheme.update(values, &grid, k);
        delta = delta.max((new - values[k]).abs());
        values[k] = new;
    }
    delta
}

/// Updates every node of one color from a snapshot of the current field.
fn half_step(scheme: &Scheme<'_>, field: &mut ScalarField, color: &[usize], parallel: bool) -> f64 {
    let geo = field.geometry();
    let snapshot = field.values().to_vec();
    let vals = snapshot.as_slice();
    let new: Vec<f64> = if parallel {
        color.par_iter().map(|&k| scheme.update(vals, &geo, k)).collect()
    } else {
        color.iter().map(|&k| scheme.update(vals, &geo, k)).collect()
    };
    let out = field.values_mut();
    let mut delta: f64 = 0.0;
    for (&k, v) in color.iter().zip(new) {
        delta = delta.max((v - out[k]).abs());
        out[k] = v;
    }
    delta
}

/// Sup over unknowns of `|Δ∞ₕu + f(x, sign u)|` with no gradient guard.
pub fn residual_norm(problem: &ProblemSpec, u: &ScalarField, unknowns: &[usize], stencil: &Stencil) -> f64 {
    unknowns
        .iter()
        .map(|&k| {
            let lap = discrete_inflap_with(u, k, 0.0, stencil).unwrap_or(0.0);
            (lap + problem.forcing(k, u.value(k))).abs()
        })
        .fold(0.0, f64::max)
}

/// `sgn(t) · ¼[(3|t| + C)^{4/3} − C^{4/3}]`: solves `(u′)² u″ = sgn(t)`
/// away from `t = 0`, with one-sided slopes `C^{1/3}` at the interface.
pub fn profile(c: f64, t: f64) -> f64 {
    let four_thirds = 4.0 / 3.0;
    t.signum() * 0.25 * ((3.0 * t.abs() + c).powf(four_thirds) - c.powf(four_thirds))
}

pub fn profile_slope(c: f64, t: f64) -> f64 {
    (3.0 * t.abs() + c).cbrt()
}

/// Margin added to the interface slope to obtain the admissible flux bound.
pub const FLUX_MARGIN: f64 = 0.1;

/// Exact two-phase solution with `f₊ ≡ −1`, `f₋ ≡ +1`, free boundary `{x₁ = 0}`.
pub fn manufactured_solution(c: f64, n: usize, m: usize) -> Result<(ScalarField, ProblemSpec)> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParams(format!("profile constant C must be positive, got {c}")));
    }
    let u = ScalarField::from_fn(n, m, |x| profile(c, x[0]))?;
    let fplus = ScalarField::from_fn(n, m, |_| -1.0)?;
    let fminus = ScalarField::from_fn(n, m, |_| 1.0)?;
    let problem = ProblemSpec::new(fplus, fminus, c.cbrt() + FLUX_MARGIN, u.clone())?;
    Ok((u, problem))
}

/// `slope · |x − vertex|` with zero forcing; the vertex should lie outside
/// the unit ball so that the cone is infinity-harmonic there.
pub fn cone_problem(slope: f64, vertex: Point, n: usize, m: usize) -> Result<(ScalarField, ProblemSpec)> {
    let u = ScalarField::from_fn(n, m, |x| slope * crate::grid::dist(x, vertex))?;
    let zero = ScalarField::zeros(n, m)?;
    let problem = ProblemSpec::new(zero.clone(), zero, 1.0, u.clone())?;
    Ok((u, problem))
}

/// Dirichlet data outside the unknowns, zero inside.
pub fn zero_initial(problem: &ProblemSpec) -> ScalarField {
    let grid = problem.grid();
    let unknowns = unknown_nodes(grid, &Stencil::new(grid.dim(), 1));
    let mut init = grid.clone();
    for k in unknowns {
        init.values_mut()[k] = 0.0;
    }
    init
}

/// Injects a coarse solution into a grid with twice the resolution,
/// interpolating the in-between nodes.
pub fn refine(coarse: &ScalarField, fine_template: &ScalarField) -> Option<ScalarField> {
    if coarse.dim() != fine_template.dim()
        || fine_template.points_per_axis() - 1 != 2 * (coarse.points_per_axis() - 1)
    {
        return None;
    }
    let mut out = fine_template.clone();
    for k in 0..out.len() {
        out.values_mut()[k] = coarse.interpolate(fine_template.point(k))?;
    }
    Some(out)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub enum ProblemFamily {
    Cone { slope: f64, vertex: Point, n: usize },
    Manufactured { c: f64, n: usize },
}

impl ProblemFamily {
    pub fn instance(&self, m: usize) -> Result<(ScalarField, ProblemSpec)> {
        match *self {
            Self::Cone { slope, vertex, n } => cone_problem(slope, vertex, n, m),
            Self::Manufactured { c, n } => manufactured_solution(c, n, m),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub m: usize,
    pub h: f64,
    pub sup_error: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Solves each resolution and measures the sup error over `B_{1/2}`.
/// Nested resolutions start from the refined coarser solution.
pub fn convergence_study(
    family: &ProblemFamily,
    m_list: &[usize],
    config: &SolverConfig,
) -> Result<Vec<ConvergenceRow>> {
    let mut rows = Vec::with_capacity(m_list.len());
    let mut previous: Option<ScalarField> = None;
    for &m in m_list {
        let (exact, problem) = family.instance(m)?;
        let initial = previous
            .as_ref()
            .and_then(|c| refine(c, &exact))
            .unwrap_or_else(|| zero_initial(&problem));
        let sol = solve(&problem, &initial, config)?;
        let sup_error = exact
            .indices_in_ball([0.0, 0.0], 0.5)
            .into_iter()
            .map(|k| (sol.field.value(k) - exact.value(k)).abs())
            .fold(0.0, f64::max);
        rows.push(ConvergenceRow {
            m,
            h: exact.spacing(),
            sup_error,
            residual: sol.residual,
            iterations: sol.iterations,
        });
        previous = Some(sol.field);
    }
    Ok(rows)
}
