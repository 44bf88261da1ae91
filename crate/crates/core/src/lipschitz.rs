//! Measured Lipschitz quotients and the end-to-end doubling certificate.

use rayon::prelude::*;
use serde::Serialize;

use crate::barrier::BarrierParams;
use crate::doubling::{
    classify_witness, default_tau_w, search, verify_lemma_chain, CaseReport, ConstantLedger, DoublingWitness,
    LemmaChainTrace, SearchResult,
};
use crate::error::{Error, Result};
use crate::grid::{dist, Point, ScalarField};
use crate::solver::ProblemSpec;
use crate::viscosity::{default_jet_radius, default_tol_zero, extract_phases, Phase, PhaseSets};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quotient {
    pub value: f64,
    /// Flat indices, first < second; `None` when the region has fewer than
    /// two nodes.
    pub pair: Option<(usize, usize)>,
}

impl Quotient {
    const EMPTY: Self = Self { value: 0.0, pair: None };

    /// Larger value wins; ties go to the lexicographically smaller pair.
    fn merge(self, other: Self) -> Self {
        match (self.pair, other.pair) {
            (None, _) => other,
            (_, None) => self,
            (Some(a), Some(b)) => {
                if other.value > self.value || (other.value == self.value && b < a) {
                    other
                } else {
                    self
                }
            }
        }
    }
}

fn region_nodes(u: &ScalarField, radius: f64) -> Result<Vec<usize>> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParams(format!("region radius must be positive, got {radius}")));
    }
    u.covers_ball([0.0, 0.0], radius)?;
    Ok(u.indices_in_ball([0.0, 0.0], radius))
}

/// Exhaustive `max |u(x) − u(y)|/|x − y|` over distinct nodes of the ball
/// of `region_radius` about the origin.
pub fn lipschitz_quotient(u: &ScalarField, region_radius: f64) -> Result<Quotient> {
    let nodes = region_nodes(u, region_radius)?;
    Ok(pair_scan::<1>(u, &nodes, |_, _| 0)[0])
}

/// Runs the pair scan once, sorting pairs into `C` classes.
fn pair_scan<const C: usize>(
    u: &ScalarField,
    nodes: &[usize],
    class: impl Fn(usize, usize) -> usize + Sync,
) -> [Quotient; C] {
    let pts: Vec<Point> = nodes.iter().map(|&k| u.point(k)).collect();
    let vals: Vec<f64> = nodes.iter().map(|&k| u.value(k)).collect();
    let merge_all = |a: [Quotient; C], b: [Quotient; C]| std::array::from_fn(|c| a[c].merge(b[c]));
    (0..nodes.len())
        .into_par_iter()
        .map(|i| {
            let mut best = [Quotient::EMPTY; C];
            for j in i + 1..nodes.len() {
                let q = (vals[i] - vals[j]).abs() / dist(pts[i], pts[j]);
                let c = class(nodes[i], nodes[j]);
                best[c] = best[c].merge(Quotient { value: q, pair: Some((nodes[i], nodes[j])) });
            }
            best
        })
        .reduce(|| [Quotient::EMPTY; C], merge_all)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerPhase {
    pub pos_pos: Quotient,
    pub neg_neg: Quotient,
    /// Every pair not inside a single open phase.
    pub cross: Quotient,
}

pub fn per_phase_quotients(u: &ScalarField, phases: &PhaseSets, region_radius: f64) -> Result<PerPhase> {
    let nodes = region_nodes(u, region_radius)?;
    let [pos_pos, neg_neg, cross] = pair_scan::<3>(u, &nodes, |a, b| match (phases.phase(a), phases.phase(b)) {
        (Phase::Pos, Phase::Pos) => 0,
        (Phase::Neg, Phase::Neg) => 1,
        _ => 2,
    });
    Ok(PerPhase { pos_pos, neg_neg, cross })
}

#[derive(Debug, Clone, Serialize)]
pub struct CertifyConfig {
    pub region_radius: f64,
    pub search_radius: f64,
    /// Centers per axis on the sub-grid of `B_{1/2}`.
    pub centers_per_axis: usize,
    /// `None`: [`default_tau_w`] per center.
    pub tau_w: Option<f64>,
    /// Forces `L` instead of the ledger rule.
    pub l_override: Option<f64>,
    pub tol_zero: Option<f64>,
    pub jet_radius: Option<f64>,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            region_radius: 0.5,
            search_radius: 0.5,
            centers_per_axis: 5,
            tau_w: None,
            l_override: None,
            tol_zero: None,
            jet_radius: None,
        }
    }
}

/// `centers_per_axis` evenly spaced values in `[−1/(2√2), 1/(2√2)]` per
/// axis (the square inscribed in `B_{1/2}`), snapped to nodes, deduplicated,
/// in flat-index order.
pub fn sample_centers(u: &ScalarField, centers_per_axis: usize) -> Result<Vec<usize>> {
    if centers_per_axis == 0 {
        return Err(Error::InvalidParams("need at least one center per axis".into()));
    }
    let half = 0.5 / 2f64.sqrt();
    let coords: Vec<f64> = if centers_per_axis == 1 {
        vec![0.0]
    } else {
        (0..centers_per_axis)
            .map(|i| -half + 2.0 * half * i as f64 / (centers_per_axis - 1) as f64)
            .collect()
    };
    let mut out = Vec::new();
    for &a in &coords {
        if u.dim() == 1 {
            out.push(u.nearest([a, 0.0]).expect("inside the box"));
            continue;
        }
        for &b in &coords {
            out.push(u.nearest([a, b]).expect("inside the box"));
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub witness: DoublingWitness,
    pub z0: Point,
    pub case: CaseReport,
    pub chain: std::result::Result<LemmaChainTrace, String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CenterResult {
    pub search: SearchResult,
    pub case: Option<CaseReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LipschitzReport {
    pub region_radius: f64,
    pub sup_quotient: f64,
    pub arg_pair: Option<(Point, Point)>,
    pub per_phase: PerPhase,
    /// Ledger at the origin; each center shifts only `z₀`.
    pub ledger: ConstantLedger,
    pub ledger_rules_hold: bool,
    /// `L + ϱ`.
    pub bound_value: f64,
    /// `sup_quotient / (L + ‖u‖)`.
    pub empirical_c: f64,
    pub centers: Vec<CenterResult>,
    /// First witness in center order; `None` means the certificate passed.
    pub certificate: Option<Certificate>,
    /// Largest `|u(x)−u(y)| − (L+ϱ)|x−y|` over the region's pairs.
    pub lipschitz_excess: f64,
}

impl LipschitzReport {
    pub fn pass(&self) -> bool {
        self.certificate.is_none()
    }
}

pub fn theorem_report(
    u: &ScalarField,
    problem: &ProblemSpec,
    params: &BarrierParams,
    cfg: &CertifyConfig,
) -> Result<LipschitzReport> {
    params.validate()?;
    if !u.same_grid(problem.grid()) {
        return Err(Error::InvalidParams("field and problem live on different grids".into()));
    }
    let mut ledger = ConstantLedger::from_problem(u, problem, [0.0, 0.0], params)?;
    if let Some(l) = cfg.l_override {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidParams(format!("L must be positive, got {l}")));
        }
        ledger = ledger.with_l(l);
    }
    let phases = extract_phases(u, cfg.tol_zero.unwrap_or_else(|| default_tol_zero(u)))?;
    let per_phase = per_phase_quotients(u, &phases, cfg.region_radius)?;
    let best = per_phase.pos_pos.merge(per_phase.neg_neg).merge(per_phase.cross);

    let centers = sample_centers(u, cfg.centers_per_axis)?;
    let results: Vec<Result<CenterResult>> = centers
        .par_iter()
        .map(|&c| {
            let z0 = u.point(c);
            let led = ledger.at(z0);
            let tau = cfg.tau_w.unwrap_or_else(|| default_tau_w(u, z0, cfg.search_radius));
            let s = search(u, &led, params, cfg.search_radius, tau)?;
            let case = match &s.witness {
                Some(w) => Some(classify_witness(w, &phases, u, &led, params)?),
                None => None,
            };
            Ok(CenterResult { search: s, case })
        })
        .collect();
    let centers: Vec<CenterResult> = results.into_iter().collect::<Result<_>>()?;

    let certificate = centers.iter().find_map(|c| {
        let w = c.search.witness?;
        let led = ledger.at(c.search.z0);
        let radius = cfg.jet_radius.unwrap_or_else(|| default_jet_radius(u));
        let chain = verify_lemma_chain(u, &w, &led, params, radius).map_err(|e| e.to_string());
        Some(Certificate { witness: w, z0: c.search.z0, case: c.case.expect("classified with the witness"), chain })
    });

    let bound_value = ledger.l + ledger.varrho;
    let nodes = region_nodes(u, cfg.region_radius)?;
    let lipschitz_excess = nodes
        .par_iter()
        .enumerate()
        .map(|(i, &a)| {
            nodes[i + 1..]
                .iter()
                .map(|&b| (u.value(a) - u.value(b)).abs() - bound_value * dist(u.point(a), u.point(b)))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);

    Ok(LipschitzReport {
        region_radius: cfg.region_radius,
        sup_quotient: best.value,
        arg_pair: best.pair.map(|(a, b)| (u.point(a), u.point(b))),
        per_phase,
        ledger,
        ledger_rules_hold: ledger.rules_hold(),
        bound_value,
        empirical_c: best.value / (ledger.l + ledger.norm_u),
        centers,
        certificate,
        lipschitz_excess,
    })
}
