//! Doubling of variables: the comparison function
//! `φ(x,y) = Lω(|x−y|) + ϱ(|x−z₀|² + |y−z₀|²)`, its derivatives, the
//! constant ledger, exhaustive witness search and case classification.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use rayon::prelude::*;
use serde::Serialize;

use crate::barrier::{self, BarrierParams};
use crate::error::{Error, Result};
use crate::grid::{dist, dist2, Point, ScalarField};
use crate::solver::ProblemSpec;
use crate::viscosity::{fit_jet_with, default_defect_cap, JetOutcome, JetSide, Phase, PhaseSets};

/// Every constant of the doubling argument, with the rules that tie them
/// together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantLedger {
    pub lambda: f64,
    pub norm_fp: f64,
    pub norm_fm: f64,
    pub norm_u: f64,
    /// `9 ‖u‖∞`.
    pub varrho: f64,
    pub a: f64,
    pub b: f64,
    pub d: f64,
    pub k: f64,
    pub lbar: f64,
    pub l: f64,
    pub z0: Point,
}

impl ConstantLedger {
    /// `ϱ = 9‖u‖`, `a = 4`, `b = 16ϱ`, `d = 16ϱ³`,
    /// `K = 4 max(‖f₊‖, ‖f₋‖, 1) + d + 1`, `L = max(L̄, 2Λ + 4ϱ + 1)`.
    pub fn from_norms(
        lambda: f64,
        norm_fp: f64,
        norm_fm: f64,
        norm_u: f64,
        z0: Point,
        params: &BarrierParams,
    ) -> Result<Self> {
        params.validate()?;
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParams(format!("Lambda must be positive, got {lambda}")));
        }
        for (name, v) in [("|f+|", norm_fp), ("|f-|", norm_fm), ("|u|", norm_u)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        let varrho = 9.0 * norm_u;
        let a = 4.0;
        let b = 16.0 * varrho;
        let d = 16.0 * varrho.powi(3);
        let k = 4.0 * norm_fp.max(norm_fm).max(1.0) + d + 1.0;
        let lbar = barrier::lbar(params, k, a, b)?;
        let l = lbar.max(2.0 * lambda + 4.0 * varrho + 1.0);
        if !l.is_finite() {
            return Err(Error::Overflow("ledger L is not representable".into()));
        }
        Ok(Self { lambda, norm_fp, norm_fm, norm_u, varrho, a, b, d, k, lbar, l, z0 })
    }

    /// Norms taken over the unit ball of the grid.
    pub fn from_problem(u: &ScalarField, problem: &ProblemSpec, z0: Point, params: &BarrierParams) -> Result<Self> {
        if !u.same_grid(problem.grid()) {
            return Err(Error::InvalidParams("field and problem live on different grids".into()));
        }
        Self::from_norms(problem.lambda, problem.fplus_norm(), problem.fminus_norm(), u.sup_norm_in_ball(1.0), z0, params)
    }

    /// Replaces `L`, keeping everything else. The result may break the rules;
    /// see [`ConstantLedger::rules_hold`].
    pub fn with_l(mut self, l: f64) -> Self {
        self.l = l;
        self
    }

    pub fn at(mut self, z0: Point) -> Self {
        self.z0 = z0;
        self
    }

    /// `L ≥ L̄` and `L/2 − 2ϱ > Λ`.
    pub fn rules_hold(&self) -> bool {
        self.l >= self.lbar && self.l / 2.0 - 2.0 * self.varrho > self.lambda
    }
}

/// `Lω(|x−y|) + ϱ(|x−z₀|² + |y−z₀|²)`.
pub fn phi_eval(x: Point, y: Point, ledger: &ConstantLedger, params: &BarrierParams) -> Result<f64> {
    params.validate()?;
    let rho = dist(x, y);
    if !(rho < 1.0) {
        return Err(Error::Domain(format!("|x - y| must be below 1, got {rho}")));
    }
    Ok(phi_unchecked(x, y, ledger, params))
}

/// Same formula on the closed range `|x − y| ≤ 1` reached by the search.
#[inline]
fn phi_unchecked(x: Point, y: Point, ledger: &ConstantLedger, params: &BarrierParams) -> f64 {
    ledger.l * params.value(dist(x, y)) + ledger.varrho * (dist2(x, ledger.z0) + dist2(y, ledger.z0))
}

fn pair_geometry(x0: Point, y0: Point) -> Result<(f64, Vector2<f64>)> {
    let rho = dist(x0, y0);
    if rho == 0.0 {
        return Err(Error::DegeneratePair);
    }
    if rho > 1.0 {
        return Err(Error::Domain(format!("|x0 - y0| must not exceed 1, got {rho}")));
    }
    Ok((rho, Vector2::new((x0[0] - y0[0]) / rho, (x0[1] - y0[1]) / rho)))
}

/// `(D_xφ, D_yφ)` at `(x₀, y₀)`.
pub fn grad_phi(x0: Point, y0: Point, ledger: &ConstantLedger, params: &BarrierParams) -> Result<(Point, Point)> {
    params.validate()?;
    let (rho, nu) = pair_geometry(x0, y0)?;
    let s = ledger.l * params.eval_unchecked(rho).d1;
    let r2 = 2.0 * ledger.varrho;
    let z = ledger.z0;
    Ok((
        [s * nu[0] + r2 * (x0[0] - z[0]), s * nu[1] + r2 * (x0[1] - z[1])],
        [-s * nu[0] + r2 * (y0[0] - z[0]), -s * nu[1] + r2 * (y0[1] - z[1])],
    ))
}

/// `Lω″ ν⊗ν + L(ω′/ρ)(I − ν⊗ν)`.
pub fn m_omega(x0: Point, y0: Point, ledger: &ConstantLedger, params: &BarrierParams) -> Result<Matrix2<f64>> {
    params.validate()?;
    let (rho, nu) = pair_geometry(x0, y0)?;
    let w = params.eval_unchecked(rho);
    let nn = nu * nu.transpose();
    Ok(nn * (ledger.l * w.d2) + (Matrix2::identity() - nn) * (ledger.l * w.d1 / rho))
}

/// `4Lω″(Lω′ + ϱρ)² + 16ϱ(L²ω′² + ϱ²)`.
pub fn lemma_bound(ledger: &ConstantLedger, params: &BarrierParams, rho: f64) -> Result<f64> {
    barrier::omega_eval(params, rho)?;
    Ok(lemma_bound_closed(ledger, params, rho))
}

/// The bound on `(0, 1]`.
fn lemma_bound_closed(ledger: &ConstantLedger, params: &BarrierParams, rho: f64) -> f64 {
    let w = params.eval_unchecked(rho);
    let (l, r) = (ledger.l, ledger.varrho);
    let lw = l * w.d1;
    4.0 * l * w.d2 * (lw + r * rho).powi(2) + 16.0 * r * (lw * lw + r * r)
}

/// `a L³ ω″ ω′² + b L² ω′² + d`, the expanded form the bound is dominated by.
pub fn expanded_bound(ledger: &ConstantLedger, params: &BarrierParams, rho: f64) -> Result<f64> {
    let w = barrier::omega_eval(params, rho)?;
    let l = ledger.l;
    let d1sq = w.d1 * w.d1;
    Ok(ledger.a * l.powi(3) * w.d2 * d1sq + ledger.b * l * l * d1sq + ledger.d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DoublingWitness {
    pub x0_index: usize,
    pub y0_index: usize,
    pub x0: Point,
    pub y0: Point,
    pub rho: f64,
    /// `u(x₀) − u(y₀) − φ(x₀, y₀)`.
    pub gap: f64,
    pub nu: Point,
    /// `|x₀−z₀|² + |y₀−z₀|²`.
    pub spread: f64,
    /// `spread ≤ 2‖u‖/ϱ`, the a-priori localization of a maximizer.
    pub interior: bool,
}

/// Largest value of `w − φ` over the search ball, whether or not it
/// exceeds the tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchResult {
    pub z0: Point,
    pub radius: f64,
    pub tau_w: f64,
    pub pairs: usize,
    pub max_gap: f64,
    pub argmax: (usize, usize),
    pub witness: Option<DoublingWitness>,
}

/// `4·max |u(x+he) + u(x−he) − 2u(x)|` over the nodes of the ball, floored
/// at `10⁻¹²(1 + ‖u‖)`. For exact samples of a function the grid maximum of
/// `w − φ` never exceeds the continuum supremum, so only curvature-sized
/// noise from a discrete solution needs absorbing.
pub fn default_tau_w(u: &ScalarField, center: Point, radius: f64) -> f64 {
    let m = u.points_per_axis();
    let vals = u.values();
    let mut worst: f64 = 0.0;
    for k in u.indices_in_ball(center, radius) {
        let (i, j) = u.axes(k);
        if i > 0 && i + 1 < m {
            let d = vals[u.flat(i + 1, j)] + vals[u.flat(i - 1, j)] - 2.0 * vals[k];
            worst = worst.max(d.abs());
        }
        if u.dim() == 2 && j > 0 && j + 1 < m {
            let d = vals[u.flat(i, j + 1)] + vals[u.flat(i, j - 1)] - 2.0 * vals[k];
            worst = worst.max(d.abs());
        }
    }
    (4.0 * worst).max(1e-12 * (1.0 + u.sup_norm()))
}

/// Exhaustive maximization of `u(x) − u(y) − φ(x, y)` over ordered pairs of
/// nodes in the closed ball of `search_radius` about `z₀`. Ties go to the
/// lexicographically smallest `(x index, y index)`.
pub fn search(
    u: &ScalarField,
    ledger: &ConstantLedger,
    params: &BarrierParams,
    search_radius: f64,
    tau_w: f64,
) -> Result<SearchResult> {
    params.validate()?;
    if !(search_radius > 0.0 && search_radius <= 0.5) {
        return Err(Error::InvalidParams(format!("search radius must lie in (0, 1/2], got {search_radius}")));
    }
    if !(tau_w >= 0.0) {
        return Err(Error::InvalidParams(format!("tau_w must be non-negative, got {tau_w}")));
    }
    let z0 = ledger.z0;
    u.covers_ball(z0, search_radius)?;
    let nodes = u.indices_in_ball(z0, search_radius);
    let pts: Vec<Point> = nodes.iter().map(|&k| u.point(k)).collect();
    // u(x) − ϱ|x − z₀|², shared by both slots of the pair
    let shifted: Vec<f64> = nodes
        .iter()
        .zip(&pts)
        .map(|(&k, &p)| u.value(k) - ledger.varrho * dist2(p, z0))
        .collect();
    let n = nodes.len();
    let better = |a: (f64, usize, usize), b: (f64, usize, usize)| {
        if a.0 > b.0 || (a.0 == b.0 && (a.1, a.2) < (b.1, b.2)) {
            a
        } else {
            b
        }
    };
    let best = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = (f64::NEG_INFINITY, usize::MAX, usize::MAX);
            for j in 0..n {
                // u(x) − ϱ|x|² − (u(y) + ϱ|y|²), rewritten with the shared term
                let w = shifted[i] - (u.value(nodes[j]) + ledger.varrho * dist2(pts[j], z0));
                let gap = w - ledger.l * params.value(dist(pts[i], pts[j]));
                best = better((gap, nodes[i], nodes[j]), best);
            }
            best
        })
        .reduce(|| (f64::NEG_INFINITY, usize::MAX, usize::MAX), better);
    let (max_gap, xi, yi) = best;
    let witness = (max_gap > tau_w).then(|| {
        let (x0, y0) = (u.point(xi), u.point(yi));
        let rho = dist(x0, y0);
        let spread = dist2(x0, z0) + dist2(y0, z0);
        let limit = if ledger.varrho > 0.0 { 2.0 * ledger.norm_u / ledger.varrho } else { f64::INFINITY };
        DoublingWitness {
            x0_index: xi,
            y0_index: yi,
            x0,
            y0,
            rho,
            gap: max_gap,
            nu: [(x0[0] - y0[0]) / rho, (x0[1] - y0[1]) / rho],
            spread,
            interior: spread <= limit * (1.0 + 1e-12),
        }
    });
    Ok(SearchResult { z0, radius: search_radius, tau_w, pairs: n * n, max_gap, argmax: (xi, yi), witness })
}

pub fn find_witness(
    u: &ScalarField,
    ledger: &ConstantLedger,
    params: &BarrierParams,
    search_radius: f64,
    tau_w: f64,
) -> Result<Option<DoublingWitness>> {
    Ok(search(u, ledger, params, search_radius, tau_w)?.witness)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CaseTag {
    PosPos,
    NegNeg,
    BothFB,
    NoFB,
    Case1,
    Case2,
    Inconsistent,
}

/// The free boundary gradient comparison of Case 1 (`y₀` on the free
/// boundary, `ξ = −D_yφ`) or Case 2 (`x₀` on it, `ξ = D_xφ`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FluxRecord {
    pub xi: Point,
    pub xi_norm: f64,
    pub lambda: f64,
    /// `L/2 − 2ϱ`.
    pub lower: f64,
    /// `|ξ| ≥ L/2 − 2ϱ`.
    pub above_lower: bool,
    /// `Λ ≥ |ξ|`, what the flux condition would demand.
    pub within_lambda: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CaseReport {
    pub tag: CaseTag,
    pub x0_phase: Phase,
    pub y0_phase: Phase,
    /// `u(x₀) > u(y₀)`.
    pub ordered: bool,
    pub flux: Option<FluxRecord>,
    /// The tag is one the ledger rules exclude: an interior case with
    /// `K ≥ 4‖f‖`, or a free boundary case with `L/2 − 2ϱ > Λ`.
    pub ledger_contradiction: bool,
}

pub fn classify_witness(
    witness: &DoublingWitness,
    phases: &PhaseSets,
    u: &ScalarField,
    ledger: &ConstantLedger,
    params: &BarrierParams,
) -> Result<CaseReport> {
    let (xp, yp) = (phases.phase(witness.x0_index), phases.phase(witness.y0_index));
    for (name, p) in [("x0", xp), ("y0", yp)] {
        if p == Phase::FarZero {
            return Err(Error::InconsistentPhase(format!("{name} lies inside the zero set")));
        }
    }
    let ordered = u.value(witness.x0_index) > u.value(witness.y0_index);
    use Phase::*;
    let tag = if !ordered {
        CaseTag::Inconsistent
    } else if xp == Neg {
        CaseTag::NegNeg
    } else if yp == Pos {
        CaseTag::PosPos
    } else {
        match (xp, yp) {
            (FreeBoundary, FreeBoundary) => CaseTag::BothFB,
            (Pos, Neg) => CaseTag::NoFB,
            (Pos, FreeBoundary) => CaseTag::Case1,
            (FreeBoundary, Neg) => CaseTag::Case2,
            _ => unreachable!("remaining phases are covered above"),
        }
    };
    let flux = match tag {
        CaseTag::Case1 | CaseTag::Case2 => {
            let (dx, dy) = grad_phi(witness.x0, witness.y0, ledger, params)?;
            let xi = if tag == CaseTag::Case1 { [-dy[0], -dy[1]] } else { dx };
            let xi_norm = xi[0].hypot(xi[1]);
            let lower = ledger.l / 2.0 - 2.0 * ledger.varrho;
            Some(FluxRecord {
                xi,
                xi_norm,
                lambda: ledger.lambda,
                lower,
                above_lower: xi_norm >= lower,
                within_lambda: ledger.lambda >= xi_norm,
            })
        }
        _ => None,
    };
    let ledger_contradiction = match tag {
        CaseTag::PosPos => ledger.k >= 4.0 * ledger.norm_fp,
        CaseTag::NegNeg => ledger.k >= 4.0 * ledger.norm_fm,
        CaseTag::NoFB => ledger.k >= 4.0 * ledger.norm_fp.max(ledger.norm_fm),
        CaseTag::Case1 | CaseTag::Case2 => ledger.l / 2.0 - 2.0 * ledger.varrho > ledger.lambda,
        CaseTag::BothFB | CaseTag::Inconsistent => false,
    };
    Ok(CaseReport { tag, x0_phase: xp, y0_phase: yp, ordered, flux, ledger_contradiction })
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaChainTrace {
    pub dx_phi: Point,
    pub dy_phi: Point,
    pub m_omega: [[f64; 2]; 2],
    pub iota: f64,
    /// `|D_xφ − D_yφ − ι(x₀ − y₀)|`.
    pub iota_identity_residual: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub m_x: [[f64; 2]; 2],
    pub m_y: [[f64; 2]; 2],
    pub defect_x: f64,
    pub defect_y: f64,
    /// `⟨M_x ξ_x, ξ_x⟩ − ⟨M_y ξ_y, ξ_y⟩`.
    pub lhs: f64,
    pub rhs_bound: f64,
    pub tau_chain: f64,
    pub holds: bool,
    /// `|D_xφ|² + |D_yφ|²` against `4(L²ω′² + ϱ²)`.
    pub cross_gradient: f64,
    pub cross_bound: f64,
}

fn embed(m: &nalgebra::DMatrix<f64>) -> Matrix2<f64> {
    if m.nrows() == 1 {
        Matrix2::new(m[(0, 0)], 0.0, 0.0, 0.0)
    } else {
        Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
    }
}

fn rows(m: &Matrix2<f64>) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

/// Fits the super jet of `u` at `x₀` and the sub jet at `y₀` (certified
/// Hessians), then checks
/// `⟨M_x ξ_x, ξ_x⟩ − ⟨M_y ξ_y, ξ_y⟩ ≤ lemma_bound(ρ)` with `ξ` from `∇φ`.
pub fn verify_lemma_chain(
    u: &ScalarField,
    witness: &DoublingWitness,
    ledger: &ConstantLedger,
    params: &BarrierParams,
    jet_radius: f64,
) -> Result<LemmaChainTrace> {
    let (x0, y0) = (witness.x0, witness.y0);
    let (dx, dy) = grad_phi(x0, y0, ledger, params)?;
    let mw = m_omega(x0, y0, ledger, params)?;
    let (rho, _) = pair_geometry(x0, y0)?;
    let w = params.eval_unchecked(rho);
    let (l, r) = (ledger.l, ledger.varrho);
    let iota = 2.0 * (l * w.d1 / rho + r);
    let iota_identity_residual = (0..2)
        .map(|c| (dx[c] - dy[c] - iota * (x0[c] - y0[c])).abs())
        .fold(0.0, f64::max);

    let mut a = Matrix4::<f64>::zeros();
    a.fixed_view_mut::<2, 2>(0, 0).copy_from(&mw);
    a.fixed_view_mut::<2, 2>(2, 2).copy_from(&mw);
    a.fixed_view_mut::<2, 2>(0, 2).copy_from(&(-mw));
    a.fixed_view_mut::<2, 2>(2, 0).copy_from(&(-mw));
    a += Matrix4::identity() * (2.0 * r);
    let lambda = (a * Vector4::new(dx[0], dx[1], dy[0], dy[1])).norm_squared();
    let epsilon = if lambda > 0.0 { 8.0 * r * (l * l * w.d1 * w.d1 + r * r) / lambda } else { 1.0 };

    let fit = |k: usize, side: JetSide| -> Result<(Matrix2<f64>, f64)> {
        match fit_jet_with(u, k, side, jet_radius, default_defect_cap(u))? {
            JetOutcome::Jet(j) => Ok((embed(&j.certified_hessian()), j.touch_defect)),
            JetOutcome::Singular => Err(Error::JetFit { index: k, reason: "singular normal equations".into() }),
            JetOutcome::DefectCap { defect, cap } => Err(Error::JetFit {
                index: k,
                reason: format!("touching defect {defect:.3e} exceeds cap {cap:.3e}"),
            }),
        }
    };
    let (m_x, defect_x) = fit(witness.x0_index, JetSide::Super)?;
    let (m_y, defect_y) = fit(witness.y0_index, JetSide::Sub)?;
    let xi_x = Vector2::new(dx[0], dx[1]);
    let xi_y = Vector2::new(-dy[0], -dy[1]);
    let lhs = (m_x * xi_x).dot(&xi_x) - (m_y * xi_y).dot(&xi_y);
    let rhs_bound = lemma_bound_closed(ledger, params, rho);
    let tau_chain = 1e-9 * (1.0 + rhs_bound.abs());
    Ok(LemmaChainTrace {
        dx_phi: dx,
        dy_phi: dy,
        m_omega: rows(&mw),
        iota,
        iota_identity_residual,
        lambda,
        epsilon,
        m_x: rows(&m_x),
        m_y: rows(&m_y),
        defect_x,
        defect_y,
        lhs,
        rhs_bound,
        tau_chain,
        holds: lhs <= rhs_bound + tau_chain,
        cross_gradient: dx[0] * dx[0] + dx[1] * dx[1] + dy[0] * dy[0] + dy[1] * dy[1],
        cross_bound: 4.0 * (l * l * w.d1 * w.d1 + r * r),
    })
}
