//! The concave power barrier `ω(t) = t − κ t^{1+θ}` and the selection of
//! the Lipschitz scale `L̄` that makes
//! `a L³ ω″ ω′² + b L² ω′² < −K` on all of `(0, 1)`.

use serde::Serialize;

use crate::error::{Error, Result};

/// Smallest `t` used when evaluating `ω″` for `θ < 1`, where `t^{θ−1}` blows up.
pub const T_FLOOR: f64 = 4.0 * f64::EPSILON;

/// Shape parameters of the barrier. Valid when `0 < κ < 1/4` and `1/2 ≤ θ ≤ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarrierParams {
    pub kappa: f64,
    pub theta: f64,
}

impl Default for BarrierParams {
    /// `κ = 1/8`, `θ = 1/2`: strictly inside both admissible windows.
    fn default() -> Self {
        Self { kappa: 0.125, theta: 0.5 }
    }
}

impl BarrierParams {
    pub fn new(kappa: f64, theta: f64) -> Result<Self> {
        let p = Self { kappa, theta };
        p.validate()?;
        Ok(p)
    }

    pub fn is_valid(&self) -> bool {
        self.kappa > 0.0 && self.kappa < 0.25 && (0.5..=1.0).contains(&self.theta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "barrier needs 0 < kappa < 1/4 and 1/2 <= theta <= 1, got kappa={}, theta={}",
                self.kappa, self.theta
            )))
        }
    }

    /// `(4κ/3)(1 − 4κ)`, the curvature constant carried in the ledger.
    pub fn kappa_bar(&self) -> f64 {
        4.0 * self.kappa / 3.0 * (1.0 - 4.0 * self.kappa)
    }

    /// `inf_{t∈(0,1)} −ω″(t) ω′(t)² = κθ(1+θ)(1 − κ(1+θ))²`, attained as `t → 1`.
    pub fn curvature_infimum(&self) -> f64 {
        let c = self.kappa * (1.0 + self.theta);
        c * self.theta * (1.0 - c).powi(2)
    }

    /// `ω`, `ω′`, `ω″` on the closed interval `[0, 1]` without domain checks.
    /// At `t = 0` only the value is meaningful; `ω″` uses `t ≥ T_FLOOR`.
    #[inline]
    pub(crate) fn eval_unchecked(&self, t: f64) -> Omega {
        let Self { kappa, theta } = *self;
        let t_theta = t.powf(theta);
        let tc = t.max(T_FLOOR);
        Omega {
            value: t - kappa * t * t_theta,
            d1: 1.0 - kappa * (1.0 + theta) * t_theta,
            d2: -kappa * theta * (1.0 + theta) * tc.powf(theta - 1.0),
        }
    }

    /// `ω(t)` only, valid on `[0, 1]`.
    #[inline]
    pub(crate) fn value(&self, t: f64) -> f64 {
        t - self.kappa * t * t.powf(self.theta)
    }
}

/// `ω` and its first two derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Omega {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

pub fn omega_eval(params: &BarrierParams, t: f64) -> Result<Omega> {
    params.validate()?;
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Domain(format!("barrier argument must lie in (0,1), got {t}")));
    }
    Ok(params.eval_unchecked(t))
}

/// Uniform open grid `k/(N+1)`, `k = 1..=N`.
pub fn open_samples(count: usize) -> impl Iterator<Item = f64> {
    let denom = (count + 1) as f64;
    (1..=count).map(move |k| k as f64 / denom)
}

/// Sampled check of `ω > 0`, `1/2 ≤ ω′ ≤ 1`, `ω″ < 0` plus the analytic
/// floor `1 − 2κ ≥ 1/2`. Invalid parameters yield `false`.
pub fn check_window(params: &BarrierParams, sample_count: usize) -> Result<bool> {
    if sample_count < 2 {
        return Err(Error::InvalidParams(format!(
            "check_window needs at least 2 samples, got {sample_count}"
        )));
    }
    if !params.is_valid() || 1.0 - 2.0 * params.kappa < 0.5 {
        return Ok(false);
    }
    Ok(open_samples(sample_count).all(|t| {
        let w = params.eval_unchecked(t);
        w.value > 0.0 && (0.5..=1.0).contains(&w.d1) && w.d2 < 0.0
    }))
}

/// Output of [`choose_parameters`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarrierChoice {
    pub params: BarrierParams,
    pub kappa_bar: f64,
    pub lbar: f64,
}

/// Default barrier with `L̄ = max(2b/(aκ̄), (2K/(aκ̄))^{1/3}, 1, L_cert)`.
///
/// `L_cert` is the positive root of `a c L³ − b L² − K` with `c` the true
/// curvature infimum (see [`BarrierParams::curvature_infimum`]); every
/// `L ≥ L̄` then satisfies the strict inequality on the whole interval.
pub fn choose_parameters(k: f64, a: f64, b: f64) -> Result<BarrierChoice> {
    choose_parameters_with(BarrierParams::default(), k, a, b)
}

pub fn choose_parameters_with(params: BarrierParams, k: f64, a: f64, b: f64) -> Result<BarrierChoice> {
    params.validate()?;
    for (name, v) in [("K", k), ("a", a), ("b", b)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParams(format!("{name} must be positive and finite, got {v}")));
        }
    }
    Ok(BarrierChoice { params, kappa_bar: params.kappa_bar(), lbar: lbar(&params, k, a, b)? })
}

/// The `L̄` formula without the positivity checks; `b = 0` is allowed.
pub(crate) fn lbar(params: &BarrierParams, k: f64, a: f64, b: f64) -> Result<f64> {
    let kappa_bar = params.kappa_bar();
    let by_b = 2.0 * b / (a * kappa_bar);
    let by_k = (2.0 * k / (a * kappa_bar)).cbrt();
    let cert = certified_scale(a * params.curvature_infimum(), b, k);
    let lbar = by_b.max(by_k).max(1.0).max(cert);
    if !lbar.is_finite() {
        return Err(Error::Overflow(format!("Lbar is not representable (K={k}, a={a}, b={b})")));
    }
    Ok(lbar)
}

/// Root of `α L³ − b L² − K = 0` on `L > b/α`, slightly inflated.
fn certified_scale(alpha: f64, b: f64, k: f64) -> f64 {
    let g = |l: f64| alpha * l * l * l - b * l * l - k;
    let mut lo = b / alpha;
    let mut hi = lo.max(1.0);
    while g(hi) <= 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    hi * (1.0 + 1e-9)
}

/// Sampled verification of the barrier inequality at a fixed `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarrierCertificate {
    pub params: BarrierParams,
    pub l: f64,
    pub a: f64,
    pub b: f64,
    pub k: f64,
    pub samples: usize,
    /// Smallest value of `−(a L³ ω″ ω′² + b L² ω′² + K)` over the samples.
    pub worst_margin: f64,
    /// Sample where `worst_margin` is attained.
    pub worst_t: f64,
    pub pass: bool,
}

/// `a L³ ω″ ω′² + b L² ω′²` at `t`.
#[inline]
pub fn keq_lhs(params: &BarrierParams, l: f64, a: f64, b: f64, t: f64) -> f64 {
    let w = params.eval_unchecked(t);
    let d1sq = w.d1 * w.d1;
    a * l.powi(3) * w.d2 * d1sq + b * l * l * d1sq
}

pub fn verify_keq(
    params: &BarrierParams,
    l: f64,
    a: f64,
    b: f64,
    k: f64,
    sample_count: usize,
) -> Result<BarrierCertificate> {
    params.validate()?;
    for (name, v) in [("L", l), ("a", a), ("b", b), ("K", k)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParams(format!("{name} must be positive and finite, got {v}")));
        }
    }
    if sample_count == 0 {
        return Err(Error::InvalidParams("verify_keq needs at least one sample".into()));
    }
    let (worst_margin, worst_t) = open_samples(sample_count)
        .map(|t| (-(keq_lhs(params, l, a, b, t) + k), t))
        .fold((f64::INFINITY, f64::NAN), |acc, cur| if cur.0 < acc.0 { cur } else { acc });
    Ok(BarrierCertificate {
        params: *params,
        l,
        a,
        b,
        k,
        samples: sample_count,
        worst_margin,
        worst_t,
        pass: worst_margin > 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    type Q = Ratio<i64>;

    fn q(n: i64, d: i64) -> Q {
        Q::new(n, d)
    }

    #[test]
    fn omega_at_quarter_matches_exact_rationals() {
        // θ = 1/2, t = 1/4: t^θ = 1/2 and t^{θ−1} = 2 are rational.
        let kappa = q(1, 8);
        let theta = q(1, 2);
        let t = q(1, 4);
        let t_theta = q(1, 2);
        let t_theta_m1 = q(2, 1);
        let one = q(1, 1);
        let omega = t - kappa * t * t_theta;
        let omega1 = one - kappa * (one + theta) * t_theta;
        let omega2 = -kappa * theta * (one + theta) * t_theta_m1;
        assert_eq!(omega, q(15, 64));
        assert_eq!(omega1, q(29, 32));
        assert_eq!(omega2, q(-3, 16));

        let w = omega_eval(&BarrierParams::default(), 0.25).unwrap();
        assert_eq!(w.value, 0.234375);
        assert_eq!(w.d1, 0.90625);
        assert_eq!(w.d2, -0.1875);
    }

    #[test]
    fn omega_at_one_theta_one() {
        // t = 1 is outside the open domain; the closed form is still checked.
        let p = BarrierParams::new(0.125, 1.0).unwrap();
        let w = p.eval_unchecked(1.0);
        assert_eq!(w.value, 0.875);
        assert_eq!(w.d1, 0.75);
        assert_eq!(w.d2, -0.25);
        assert!(omega_eval(&p, 1.0).is_err());
    }

    #[test]
    fn omega_near_zero_limits() {
        let p = BarrierParams::default();
        let w = omega_eval(&p, 1e-12).unwrap();
        assert!(w.value < 1e-11);
        assert!((w.d1 - 1.0).abs() < 1e-6);
        assert!(w.d2 < -1e4);
        let w = p.eval_unchecked(0.0);
        assert_eq!(w.value, 0.0);
        assert!(w.d2.is_finite());
    }

    #[test]
    fn domain_errors() {
        let p = BarrierParams::default();
        assert!(omega_eval(&p, 0.0).is_err());
        assert!(omega_eval(&p, -0.5).is_err());
        assert!(omega_eval(&BarrierParams { kappa: 0.3, theta: 0.5 }, 0.5).is_err());
        assert!(BarrierParams::new(0.1, 1.2).is_err());
    }

    #[test]
    fn window_examples() {
        assert!(check_window(&BarrierParams::default(), 1000).unwrap());
        assert!(!check_window(&BarrierParams { kappa: 0.3, theta: 0.5 }, 10).unwrap());
        assert!(check_window(&BarrierParams::new(0.125, 1.0).unwrap(), 2).unwrap());
        assert!(check_window(&BarrierParams::default(), 1).is_err());
    }

    #[test]
    fn choose_parameters_reference_triple() {
        let c = choose_parameters(100.0, 4.0, 144.0).unwrap();
        assert_eq!(c.params, BarrierParams { kappa: 0.125, theta: 0.5 });
        assert_eq!(c.kappa_bar, 1.0 / 12.0);
        assert_eq!(c.lbar, 864.0);
    }

    #[test]
    fn choose_parameters_floor() {
        let c = choose_parameters(1e-12, 1.0, 1e-12).unwrap();
        assert_eq!(c.lbar, 1.0);
        assert!(choose_parameters(0.0, 1.0, 1.0).is_err());
        assert!(choose_parameters(1.0, f64::NAN, 1.0).is_err());
        assert!(matches!(choose_parameters(1e300, 1e-300, 1e300), Err(Error::Overflow(_))));
    }

    #[test]
    fn keq_reference_runs() {
        let c = choose_parameters(100.0, 4.0, 144.0).unwrap();
        let pass = verify_keq(&c.params, 864.0, 4.0, 144.0, 100.0, 10_000).unwrap();
        assert!(pass.pass, "{pass:?}");
        let fail = verify_keq(&c.params, 1.0, 4.0, 144.0, 100.0, 10_000).unwrap();
        assert!(!fail.pass);
        assert!(verify_keq(&c.params, 864.0, 4.0, 144.0, 0.0, 100).is_err());
    }

    #[test]
    fn balanced_triple_needs_certified_floor() {
        // K chosen so that both terms of the closed-form Lbar coincide at L = 864.
        let (a, b) = (4.0, 144.0);
        let k = a * 864f64.powi(3) / 24.0;
        let c = choose_parameters(k, a, b).unwrap();
        assert!(c.lbar > 864.0);
        assert!(verify_keq(&c.params, c.lbar, a, b, k, 10_000).unwrap().pass);
        // The closed form alone would fail here.
        assert!(!verify_keq(&c.params, 864.0, a, b, k, 10_000).unwrap().pass);
    }

    #[test]
    fn curvature_infimum_is_the_limit_at_one() {
        let p = BarrierParams::default();
        let w = p.eval_unchecked(1.0 - 1e-12);
        let v = -w.d2 * w.d1 * w.d1;
        assert!((v - p.curvature_infimum()).abs() < 1e-9);
        for t in open_samples(1000) {
            let w = p.eval_unchecked(t);
            assert!(-w.d2 * w.d1 * w.d1 >= p.curvature_infimum());
        }
    }
}
