//! Discrete viscosity-solution checks: phase sets, touching jets, the
//! interior inequalities and the one-sided flux condition on the free
//! boundary.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Point, ScalarField};
use crate::solver::ProblemSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Phase {
    Pos,
    Neg,
    FreeBoundary,
    /// `|u| ≤ tol_zero` with every axis neighbor also in the zero band: in
    /// the interior of the zero set, hence on no phase boundary.
    FarZero,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseSets {
    pub pos: Vec<usize>,
    pub neg: Vec<usize>,
    pub fb: Vec<usize>,
    pub tol_zero: f64,
    #[serde(skip)]
    labels: Vec<Phase>,
}

impl PhaseSets {
    pub fn phase(&self, k: usize) -> Phase {
        self.labels[k]
    }

    pub fn labels(&self) -> &[Phase] {
        &self.labels
    }

    pub fn far_zero(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&k| self.labels[k] == Phase::FarZero).collect()
    }
}

/// `h² ‖u‖∞`.
pub fn default_tol_zero(u: &ScalarField) -> f64 {
    let h = u.spacing();
    h * h * u.sup_norm()
}

fn axis_neighbors(u: &ScalarField, k: usize) -> impl Iterator<Item = usize> + '_ {
    let (i, j) = u.axes(k);
    let m = u.points_per_axis();
    let two_d = u.dim() == 2;
    [
        (i > 0).then(|| u.flat(i - 1, j)),
        (i + 1 < m).then(|| u.flat(i + 1, j)),
        (two_d && j > 0).then(|| u.flat(i, j - 1)),
        (two_d && j + 1 < m).then(|| u.flat(i, j + 1)),
    ]
    .into_iter()
    .flatten()
}

/// Cell-based phases. The zero band `|u| ≤ tol_zero` joins the free boundary
/// when it touches a nonzero cell; cells across a strict sign change join it
/// too, so that no positive cell is axis-adjacent to a negative one.
pub fn extract_phases(u: &ScalarField, tol_zero: f64) -> Result<PhaseSets> {
    if !(tol_zero >= 0.0) {
        return Err(Error::InvalidParams(format!("tol_zero must be non-negative, got {tol_zero}")));
    }
    let vals = u.values();
    let zero = |k: usize| vals[k].abs() <= tol_zero;
    let labels: Vec<Phase> = (0..u.len())
        .map(|k| {
            let v = vals[k];
            if zero(k) {
                if axis_neighbors(u, k).all(zero) {
                    Phase::FarZero
                } else {
                    Phase::FreeBoundary
                }
            } else if axis_neighbors(u, k).any(|q| vals[q] * v < 0.0) {
                Phase::FreeBoundary
            } else if v > 0.0 {
                Phase::Pos
            } else {
                Phase::Neg
            }
        })
        .collect();
    let collect = |p: Phase| (0..labels.len()).filter(|&k| labels[k] == p).collect::<Vec<_>>();
    Ok(PhaseSets {
        pos: collect(Phase::Pos),
        neg: collect(Phase::Neg),
        fb: collect(Phase::FreeBoundary),
        tol_zero,
        labels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum JetSide {
    Super,
    Sub,
}

/// Relative size below which a touching slack counts as rounding.
const ROUNDOFF: f64 = 64.0 * f64::EPSILON;

/// A quadratic `q(x) = u(x̂) + ⟨ξ, x−x̂⟩ + ½⟨M(x−x̂), x−x̂⟩` touching `u` at `x̂`
/// from above (super) or below (sub) up to `touch_defect · |x−x̂|²` over the
/// fit window.
#[derive(Debug, Clone)]
pub struct DiscreteJet {
    pub point: usize,
    pub xi: DVector<f64>,
    pub m: DMatrix<f64>,
    pub side: JetSide,
    pub touch_radius: f64,
    pub touch_defect: f64,
}

impl DiscreteJet {
    /// `q(x) − u(x̂)`.
    fn increment(&self, d: &[f64]) -> f64 {
        let n = d.len();
        let mut lin = 0.0;
        let mut quad = 0.0;
        for a in 0..n {
            lin += self.xi[a] * d[a];
            for b in 0..n {
                quad += self.m[(a, b)] * d[a] * d[b];
            }
        }
        lin + 0.5 * quad
    }

    /// Signed touching slack at `x`, scaled by `|x−x̂|²`: positive values are
    /// violations of the one-sided inequality.
    fn slack(&self, center: f64, value: f64, d: &[f64]) -> f64 {
        let inc = self.increment(d);
        let q = center + inc;
        let r2: f64 = d.iter().map(|c| c * c).sum();
        let raw = match self.side {
            JetSide::Super => value - q,
            JetSide::Sub => q - value,
        };
        // differences at the rounding level of the operands are not contact
        // violations; without this an exact quadratic reports ~1e-13 defects
        let noise = ROUNDOFF * (value.abs() + center.abs() + inc.abs());
        if raw.abs() <= noise {
            0.0
        } else {
            raw / r2
        }
    }

    /// Re-checks the stored touching inequality on the window.
    pub fn touches(&self, u: &ScalarField) -> bool {
        let center = u.value(self.point);
        window(u, self.point, self.touch_radius)
            .into_iter()
            .all(|(k, d)| self.slack(center, u.value(k), &d) <= self.touch_defect)
    }

    /// `⟨Mξ, ξ⟩`.
    pub fn quadratic_form(&self) -> f64 {
        (self.m.transpose() * &self.xi).dot(&self.xi)
    }

    /// `⟨M̃ξ, ξ⟩` with the certified Hessian.
    pub fn certified_quadratic_form(&self) -> f64 {
        (self.certified_hessian() * &self.xi).dot(&self.xi)
    }

    pub fn xi_norm(&self) -> f64 {
        self.xi.norm()
    }

    /// Hessian with the touching defect absorbed: `M ± 2·defect·I` makes
    /// the inequality hold exactly on the window.
    pub fn certified_hessian(&self) -> DMatrix<f64> {
        let n = self.m.nrows();
        let shift = 2.0 * self.touch_defect;
        let id = DMatrix::<f64>::identity(n, n);
        match self.side {
            JetSide::Super => &self.m + id * shift,
            JetSide::Sub => &self.m - id * shift,
        }
    }
}

#[derive(Debug, Clone)]
pub enum JetOutcome {
    Jet(DiscreteJet),
    /// Normal equations not positive definite (window too small).
    Singular,
    /// The required curvature repair exceeds the cap.
    DefectCap { defect: f64, cap: f64 },
}

impl JetOutcome {
    pub fn jet(self) -> Option<DiscreteJet> {
        match self {
            Self::Jet(j) => Some(j),
            _ => None,
        }
    }
}

/// Default fit radius `3h`.
pub fn default_jet_radius(u: &ScalarField) -> f64 {
    3.0 * u.spacing()
}

/// Default defect cap `1/(4h)`: separates the super jet of `−|x|` at its
/// vertex (defect ≈ 0.06/h) from the nonexistent sub jet (≈ 0.6/h).
pub fn default_defect_cap(u: &ScalarField) -> f64 {
    0.25 / u.spacing()
}

/// Window nodes other than the center, with offsets `x − x̂`.
fn window(u: &ScalarField, k: usize, radius: f64) -> Vec<(usize, Vec<f64>)> {
    let h = u.spacing();
    let m = u.points_per_axis() as isize;
    let (i, j) = u.axes(k);
    let reach = (radius / h + 1e-9).floor() as isize;
    let r2 = radius * radius * (1.0 + 1e-12);
    let mut out = Vec::new();
    let jr = if u.dim() == 1 { 0 } else { reach };
    for a in -reach..=reach {
        for b in -jr..=jr {
            if (a, b) == (0, 0) {
                continue;
            }
            let p = i as isize + a;
            let q = j as isize + b;
            if p < 0 || p >= m || q < 0 || (u.dim() == 2 && q >= m) {
                continue;
            }
            let d: Vec<f64> = if u.dim() == 1 {
                vec![a as f64 * h]
            } else {
                vec![a as f64 * h, b as f64 * h]
            };
            if d.iter().map(|c| c * c).sum::<f64>() <= r2 {
                out.push((u.flat(p as usize, q as usize), d));
            }
        }
    }
    out
}

fn basis(d: &[f64]) -> Vec<f64> {
    match d {
        [x] => vec![*x, 0.5 * x * x],
        [x, y] => vec![*x, *y, 0.5 * x * x, x * y, 0.5 * y * y],
        _ => unreachable!("dimension is 1 or 2"),
    }
}

pub fn fit_jet(u: &ScalarField, idx: usize, side: JetSide, radius: f64) -> Result<Option<DiscreteJet>> {
    Ok(fit_jet_with(u, idx, side, radius, default_defect_cap(u))?.jet())
}

/// Least-squares quadratic through `(x̂, u(x̂))`, then the smallest
/// curvature slack making it touch from the requested side.
pub fn fit_jet_with(u: &ScalarField, idx: usize, side: JetSide, radius: f64, defect_cap: f64) -> Result<JetOutcome> {
    if idx >= u.len() {
        return Err(Error::InvalidParams(format!("index {idx} outside the grid")));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidParams(format!("jet radius must be positive, got {radius}")));
    }
    u.covers_ball(u.point(idx), radius)?;
    let n = u.dim();
    let win = window(u, idx, radius);
    let center = u.value(idx);
    let nb = if n == 1 { 2 } else { 5 };
    let mut ata = DMatrix::<f64>::zeros(nb, nb);
    let mut atb = DVector::<f64>::zeros(nb);
    for (k, d) in &win {
        let phi = basis(d);
        let rhs = u.value(*k) - center;
        for a in 0..nb {
            atb[a] += phi[a] * rhs;
            for b in 0..nb {
                ata[(a, b)] += phi[a] * phi[b];
            }
        }
    }
    let Some(chol) = ata.cholesky() else {
        return Ok(JetOutcome::Singular);
    };
    let c = chol.solve(&atb);
    let (xi, m) = if n == 1 {
        (DVector::from_vec(vec![c[0]]), DMatrix::from_vec(1, 1, vec![c[1]]))
    } else {
        (
            DVector::from_vec(vec![c[0], c[1]]),
            DMatrix::from_row_slice(2, 2, &[c[2], c[3], c[3], c[4]]),
        )
    };
    let mut jet = DiscreteJet { point: idx, xi, m, side, touch_radius: radius, touch_defect: 0.0 };
    let defect = win
        .iter()
        .map(|(k, d)| jet.slack(center, u.value(*k), d))
        .fold(0.0, f64::max);
    if !defect.is_finite() {
        return Ok(JetOutcome::Singular);
    }
    if defect > defect_cap {
        return Ok(JetOutcome::DefectCap { defect, cap: defect_cap });
    }
    jet.touch_defect = defect;
    Ok(JetOutcome::Jet(jet))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct InteriorCheck {
    pub pass: bool,
    /// `−⟨M̃ξ,ξ⟩ − f(x)` with the certified Hessian `M̃`; the super side
    /// needs it `≤ tol`, the sub side `≥ −tol`.
    pub slack: f64,
}

pub fn check_interior(
    u: &ScalarField,
    phases: &PhaseSets,
    problem: &ProblemSpec,
    jet: &DiscreteJet,
    tol: f64,
) -> Result<InteriorCheck> {
    if !u.same_grid(problem.grid()) {
        return Err(Error::InvalidParams("field and problem live on different grids".into()));
    }
    let k = jet.point;
    let f = match phases.phase(k) {
        Phase::Pos => problem.fplus.value(k),
        Phase::Neg => problem.fminus.value(k),
        other => {
            return Err(Error::PhaseMismatch(format!("point {k} is {other:?}, not in a phase")));
        }
    };
    let slack = -jet.certified_quadratic_form() - f;
    let pass = match jet.side {
        JetSide::Super => slack <= tol,
        JetSide::Sub => slack >= -tol,
    };
    Ok(InteriorCheck { pass, slack })
}

/// `[4h, 2h, h, h/2, h/4]`.
pub fn default_t_list(u: &ScalarField) -> Vec<f64> {
    let h = u.spacing();
    vec![4.0 * h, 2.0 * h, h, 0.5 * h, 0.25 * h]
}

/// `10h`.
pub fn default_tol_slope(u: &ScalarField) -> f64 {
    10.0 * u.spacing()
}

#[derive(Debug, Clone, Serialize)]
pub struct RaySample {
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FbReport {
    pub point: Point,
    pub side: JetSide,
    /// Unit ray direction actually sampled.
    pub direction: Point,
    pub slope: f64,
    pub bound: f64,
    pub tol_slope: f64,
    pub pass: bool,
    /// Increments `u(x + t·dir) − u(x)`.
    pub samples: Vec<RaySample>,
    /// Largest `|value − slope·t|` over the regression window.
    pub residual: f64,
}

fn validate_t_list(t_list: &[f64]) -> Result<()> {
    let ok = !t_list.is_empty()
        && t_list.iter().all(|t| t.is_finite() && *t > 0.0)
        && t_list.windows(2).all(|w| w[0] > w[1]);
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParams("t_list must be positive and strictly decreasing".into()))
    }
}

/// Samples `u(x + t·dir) − u(x)` and fits `s·t` through the origin on the
/// smallest half of `t_list`.
fn ray_slope(u: &ScalarField, k: usize, dir: Point, t_list: &[f64]) -> Result<(f64, Vec<RaySample>, f64)> {
    validate_t_list(t_list)?;
    let x = u.point(k);
    let base = u.value(k);
    let mut samples = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let p = [x[0] + t * dir[0], x[1] + t * dir[1]];
        let v = u.interpolate(p).ok_or(Error::OutOfDomainRay(t))?;
        samples.push(RaySample { t, value: v - base });
    }
    let keep = t_list.len().div_ceil(2);
    let tail = &samples[samples.len() - keep..];
    let stt: f64 = tail.iter().map(|s| s.t * s.t).sum();
    let stv: f64 = tail.iter().map(|s| s.t * s.value).sum();
    let slope = stv / stt;
    let residual = tail.iter().map(|s| (s.value - slope * s.t).abs()).fold(0.0, f64::max);
    Ok((slope, samples, residual))
}

fn unit_direction(u: &ScalarField, v: &DVector<f64>) -> Result<Point> {
    let norm = v.norm();
    if !(norm > XI_FLOOR) {
        return Err(Error::ZeroXi);
    }
    Ok(if u.dim() == 1 { [v[0] / norm, 0.0] } else { [v[0] / norm, v[1] / norm] })
}

/// Jet gradients at or below this magnitude count as `ξ = 0`.
pub const XI_FLOOR: f64 = 1e-12;

/// A super jet tests the subsolution condition along `−ξ/|ξ|`
/// (`s ≥ −Λ − tol`); a sub jet tests the supersolution condition along
/// `+ξ/|ξ|` (`s ≤ Λ + tol`).
pub fn check_fb_condition(
    u: &ScalarField,
    x_fb: usize,
    jet: &DiscreteJet,
    lambda: f64,
    t_list: &[f64],
    tol_slope: f64,
) -> Result<FbReport> {
    let nu = unit_direction(u, &jet.xi)?;
    let dir = match jet.side {
        JetSide::Super => [-nu[0], -nu[1]],
        JetSide::Sub => nu,
    };
    let (slope, samples, residual) = ray_slope(u, x_fb, dir, t_list)?;
    let (pass, bound) = match jet.side {
        JetSide::Super => (slope >= -lambda - tol_slope, -lambda),
        JetSide::Sub => (slope <= lambda + tol_slope, lambda),
    };
    Ok(FbReport { point: u.point(x_fb), side: jet.side, direction: dir, slope, bound, tol_slope, pass, samples, residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RaySide {
    Plus,
    Minus,
}

/// One-sided derivative along `±ν`: the slope of `u(x+tν) − u(x)` (plus) or
/// of `u(x) − u(x−tν)` (minus).
pub fn normal_derivative(u: &ScalarField, x_fb: usize, nu: Point, side: RaySide, t_list: &[f64]) -> Result<f64> {
    let v = if u.dim() == 1 { DVector::from_vec(vec![nu[0]]) } else { DVector::from_vec(vec![nu[0], nu[1]]) };
    let nu = unit_direction(u, &v)?;
    match side {
        RaySide::Plus => Ok(ray_slope(u, x_fb, nu, t_list)?.0),
        RaySide::Minus => Ok(-ray_slope(u, x_fb, [-nu[0], -nu[1]], t_list)?.0),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SurveyConfig {
    pub tol_zero: f64,
    pub jet_radius: f64,
    pub defect_cap: f64,
    pub tol: f64,
    pub tol_slope: f64,
    pub t_list: Vec<f64>,
    /// Probe points are the nodes in this ball about the origin.
    pub region_radius: f64,
}

impl SurveyConfig {
    pub fn defaults_for(u: &ScalarField) -> Self {
        Self {
            tol_zero: default_tol_zero(u),
            jet_radius: default_jet_radius(u),
            defect_cap: default_defect_cap(u),
            tol: 1e-6,
            tol_slope: default_tol_slope(u),
            t_list: default_t_list(u),
            region_radius: 0.5,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ViscositySurvey {
    pub interior_checked: usize,
    pub interior_failed: usize,
    /// Largest violation over the interior checks (≤ 0 when all pass).
    pub worst_interior_excess: f64,
    pub fb_checked: usize,
    pub fb_failed: usize,
    /// Free boundary points whose jets have `ξ = 0`; the condition is vacuous there.
    pub fb_zero_xi: usize,
    pub jets_unavailable: usize,
    pub worst_fb_excess: f64,
    pub fb_reports: Vec<FbReport>,
}

enum Probe {
    Interior(InteriorCheck, f64),
    Fb(Option<FbReport>),
    ZeroXi,
    NoJet,
}

/// Fits super and sub jets at every node of the region and checks the
/// interior inequalities (phases) or the flux condition (free boundary).
pub fn survey(u: &ScalarField, problem: &ProblemSpec, cfg: &SurveyConfig) -> Result<ViscositySurvey> {
    let phases = extract_phases(u, cfg.tol_zero)?;
    let probes: Vec<usize> = u
        .indices_in_ball([0.0, 0.0], cfg.region_radius)
        .into_iter()
        .filter(|&k| phases.phase(k) != Phase::FarZero)
        .collect();
    let results: Vec<Result<Vec<Probe>>> = probes
        .par_iter()
        .map(|&k| {
            let mut out = Vec::with_capacity(2);
            for side in [JetSide::Super, JetSide::Sub] {
                let Some(jet) = fit_jet_with(u, k, side, cfg.jet_radius, cfg.defect_cap)?.jet() else {
                    out.push(Probe::NoJet);
                    continue;
                };
                if phases.phase(k) == Phase::FreeBoundary {
                    match check_fb_condition(u, k, &jet, problem.lambda, &cfg.t_list, cfg.tol_slope) {
                        Ok(r) => out.push(Probe::Fb(Some(r))),
                        Err(Error::ZeroXi) => out.push(Probe::ZeroXi),
                        Err(Error::OutOfDomainRay(_)) => out.push(Probe::Fb(None)),
                        Err(e) => return Err(e),
                    }
                } else {
                    let c = check_interior(u, &phases, problem, &jet, cfg.tol)?;
                    let excess = match side {
                        JetSide::Super => c.slack - cfg.tol,
                        JetSide::Sub => -cfg.tol - c.slack,
                    };
                    out.push(Probe::Interior(c, excess));
                }
            }
            Ok(out)
        })
        .collect();
    let mut s = ViscositySurvey {
        worst_interior_excess: f64::NEG_INFINITY,
        worst_fb_excess: f64::NEG_INFINITY,
        ..Default::default()
    };
    for r in results {
        for probe in r? {
            match probe {
                Probe::Interior(c, excess) => {
                    s.interior_checked += 1;
                    s.interior_failed += usize::from(!c.pass);
                    s.worst_interior_excess = s.worst_interior_excess.max(excess);
                }
                Probe::Fb(None) | Probe::NoJet => s.jets_unavailable += 1,
                Probe::Fb(Some(rep)) => {
                    s.fb_checked += 1;
                    s.fb_failed += usize::from(!rep.pass);
                    let excess = match rep.side {
                        JetSide::Super => rep.bound - rep.tol_slope - rep.slope,
                        JetSide::Sub => rep.slope - rep.bound - rep.tol_slope,
                    };
                    s.worst_fb_excess = s.worst_fb_excess.max(excess);
                    s.fb_reports.push(rep);
                }
                Probe::ZeroXi => s.fb_zero_xi += 1,
            }
        }
    }
    Ok(s)
}
