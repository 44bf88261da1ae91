//! Acceptance suite. Each test prints one `acceptance N <name>: PASS|FAIL`
//! line (straight to stderr, so it shows without `--nocapture`) and then
//! asserts the same verdict.

use std::io::Write;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use inflap_fb::barrier::{choose_parameters, omega_eval, open_samples, verify_keq, BarrierParams};
use inflap_fb::doubling::{grad_phi, lemma_bound, phi_eval, CaseTag, ConstantLedger};
use inflap_fb::grid::Point;
use inflap_fb::lipschitz::{lipschitz_quotient, theorem_report, CertifyConfig};
use inflap_fb::solver::{
    convergence_study, discrete_inflap_with, manufactured_solution, unknown_nodes, ProblemFamily, ProblemSpec,
    SolverConfig, Stencil, StencilWidth,
};
use inflap_fb::viscosity::{
    check_fb_condition, default_jet_radius, default_t_list, default_tol_slope, extract_phases, fit_jet,
    fit_jet_with, normal_derivative, default_defect_cap, JetOutcome, JetSide, Phase, RaySide,
};
use inflap_fb::ScalarField;

fn verdict(n: u32, name: &str, checks: &[(&str, bool)], detail: String) {
    let pass = checks.iter().all(|c| c.1);
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    let mut line = format!("acceptance {n} {name}: {}", if pass { "PASS" } else { "FAIL" });
    if !failed.is_empty() {
        line.push_str(&format!(" [failed: {}]", failed.join(", ")));
    }
    line.push_str(&format!(" {detail}\n"));
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    assert!(pass, "{line}");
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

fn within(t: Instant, limit: Duration) -> bool {
    t.elapsed() < limit
}

#[test]
fn barrier_suite() {
    let t = Instant::now();
    let c = choose_parameters(100.0, 4.0, 144.0).unwrap();
    let exact = c.params.kappa == 0.125 && c.params.theta == 0.5 && c.kappa_bar == 1.0 / 12.0 && c.lbar == 864.0;
    let run = |l: f64| verify_keq(&c.params, l, 4.0, 144.0, 100.0, 10_000).unwrap();
    let (at_lbar, at_double, at_one) = (run(864.0), run(1728.0), run(1.0));
    verdict(
        1,
        "barrier",
        &[
            ("choose_parameters", exact),
            ("pass at 864", at_lbar.pass),
            ("pass at 1728", at_double.pass),
            ("fail at 1", !at_one.pass),
            ("runtime", within(t, Duration::from_secs(1))),
        ],
        format!(
            "(kappa={}, theta={}, kappa_bar={}, Lbar={}; margins {:.3e}, {:.3e}, {:.3e})",
            c.params.kappa, c.params.theta, c.kappa_bar, c.lbar, at_lbar.worst_margin, at_double.worst_margin,
            at_one.worst_margin
        ),
    );
}

#[test]
fn derivative_window() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut thetas = vec![0.5, 1.0];
    thetas.extend((0..18).map(|_| rng.gen_range(0.5..=1.0)));
    thetas.sort_by(f64::total_cmp);

    let mut window_fail = Vec::new();
    let mut curvature_ok = true;
    let mut lowest = f64::INFINITY;
    for &theta in &thetas {
        let p = BarrierParams::new(0.125, theta).unwrap();
        let mut min_d1 = f64::INFINITY;
        for s in open_samples(10_000) {
            let w = omega_eval(&p, s).unwrap();
            min_d1 = min_d1.min(w.d1);
            curvature_ok &= w.d2 < 0.0;
            if !(0.8125..=1.0).contains(&w.d1) && window_fail.last() != Some(&theta) {
                window_fail.push(theta);
            }
        }
        lowest = lowest.min(min_d1);
    }
    verdict(
        2,
        "window",
        &[
            ("derivative in [0.8125, 1]", window_fail.is_empty()),
            ("negative curvature", curvature_ok),
            ("runtime", within(t, Duration::from_secs(1))),
        ],
        format!(
            "({} of {} theta values leave the window, lowest derivative {lowest:.6}; smallest offender {:?})",
            window_fail.len(),
            thetas.len(),
            window_fail.first()
        ),
    );
}

fn in_ball(rng: &mut ChaCha8Rng, r: f64) -> Point {
    loop {
        let p = [rng.gen_range(-r..r), rng.gen_range(-r..r)];
        if p[0] * p[0] + p[1] * p[1] < r * r {
            return p;
        }
    }
}

#[test]
fn gradient_consistency() {
    let t = Instant::now();
    let params = BarrierParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    while count < 100 {
        let z0 = in_ball(&mut rng, 0.5);
        let ledger = ConstantLedger::from_norms(1.1, 1.0, 1.0, rng.gen_range(0.0..0.5), z0, &params).unwrap();
        let (x, y) = (in_ball(&mut rng, 1.0), in_ball(&mut rng, 1.0));
        let rho = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
        if !(0.05..0.95).contains(&rho) {
            continue;
        }
        count += 1;
        let (gx, gy) = grad_phi(x, y, &ledger, &params).unwrap();
        let phi = |x: Point, y: Point| phi_eval(x, y, &ledger, &params).unwrap();
        let fd = |e: usize| {
            let mut pts = [x[0], x[1], y[0], y[1]];
            let mut hi = pts;
            hi[e] += h;
            pts[e] -= h;
            (phi([hi[0], hi[1]], [hi[2], hi[3]]) - phi([pts[0], pts[1]], [pts[2], pts[3]])) / (2.0 * h)
        };
        let g = [gx[0], gx[1], gy[0], gy[1]];
        let err: f64 = (0..4).map(|e| (fd(e) - g[e]).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max(err / norm);
    }
    verdict(
        3,
        "gradient",
        &[("relative error <= 1e-6", worst <= 1e-6), ("runtime", within(t, Duration::from_secs(1)))],
        format!("(worst relative error {worst:.3e} over 100 pairs)"),
    );
}

#[test]
fn lemma_dominance() {
    let t = Instant::now();
    let params = BarrierParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0;
    let mut rules_broken = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        let varrho: f64 = rng.gen_range(1e-3..20.0);
        let lambda = rng.gen_range(0.01..10.0);
        let base = ConstantLedger::from_norms(lambda, 1.0, 1.0, varrho / 9.0, [0.0, 0.0], &params).unwrap();
        let l = base.l * rng.gen_range(1.0..4.0);
        let ledger = base.with_l(l);
        if !ledger.rules_hold() {
            rules_broken += 1;
            continue;
        }
        let rho = loop {
            let r: f64 = rng.gen();
            if r > 0.0 {
                break r;
            }
        };
        let w = omega_eval(&params, rho).unwrap();
        let r = ledger.varrho;
        let rhs = 4.0 * l.powi(3) * w.d2 * w.d1 * w.d1 + 16.0 * r * l * l * w.d1 * w.d1 + 16.0 * r.powi(3);
        let lhs = lemma_bound(&ledger, &params, rho).unwrap();
        worst = worst.max((lhs - rhs) / rhs.abs().max(1.0));
        if lhs > rhs {
            violations += 1;
        }
    }
    verdict(
        4,
        "dominance",
        &[
            ("bound dominated", violations == 0),
            ("ledger rules", rules_broken == 0),
            ("runtime", within(t, Duration::from_secs(1))),
        ],
        format!("({violations} violations in 10000 samples, worst scaled gap {worst:.3e})"),
    );
}

#[test]
fn cone_convergence() {
    let t = Instant::now();
    let slope = 3.0;
    let family = ProblemFamily::Cone { slope, vertex: [1.5, 1.0], n: 2 };
    let cfg = SolverConfig { stencil_width: StencilWidth::Scaled, ..SolverConfig::default() };
    let rows = convergence_study(&family, &[17, 33, 65], &cfg).unwrap();
    let errs: Vec<f64> = rows.iter().map(|r| r.sup_error).collect();
    verdict(
        5,
        "cone convergence",
        &[
            ("monotone", errs.windows(2).all(|w| w[1] < w[0])),
            ("m=65 error <= 0.05 slope", errs[2] <= 0.05 * slope),
            ("runtime", within(t, Duration::from_secs(60))),
        ],
        format!("(sup errors [{}], {:.1}s)", sci(&errs), t.elapsed().as_secs_f64()),
    );
}

/// Max `|Δ∞ₕu + f|` over interior cells more than `2h` from `{x₁ = 0}`.
fn far_residual(u: &ScalarField, p: &ProblemSpec) -> f64 {
    let stencil = Stencil::new(u.dim(), 1);
    let h = u.spacing();
    unknown_nodes(u, &stencil)
        .into_iter()
        .filter(|&k| u.point(k)[0].abs() > 2.0 * h + 1e-12)
        .map(|k| (discrete_inflap_with(u, k, 0.0, &stencil).unwrap() + p.forcing(k, u.value(k))).abs())
        .fold(0.0, f64::max)
}

#[test]
fn manufactured_two_phase() {
    let t = Instant::now();

    let residuals: Vec<f64> = [17, 33, 65]
        .iter()
        .map(|&m| {
            let (u, p) = manufactured_solution(1.0, 2, m).unwrap();
            far_residual(&u, &p)
        })
        .collect();
    let factors: Vec<f64> = residuals.windows(2).map(|w| w[0] / w[1]).collect();

    let (u, _) = manufactured_solution(1.0, 2, 65).unwrap();
    let q = lipschitz_quotient(&u, 0.5).unwrap().value;
    let expected = 2.5f64.cbrt();

    let x_fb = u.nearest([0.0, 0.0]).unwrap();
    let tl = default_t_list(&u);
    let plus = normal_derivative(&u, x_fb, [1.0, 0.0], RaySide::Plus, &tl).unwrap();
    let minus = normal_derivative(&u, x_fb, [1.0, 0.0], RaySide::Minus, &tl).unwrap();
    let r = default_jet_radius(&u);
    let tol = default_tol_slope(&u);
    let fb = |lambda: f64| {
        [JetSide::Super, JetSide::Sub].map(|side| {
            let jet = fit_jet(&u, x_fb, side, r).unwrap().expect("jet at the interface");
            check_fb_condition(&u, x_fb, &jet, lambda, &tl, tol).unwrap().pass
        })
    };
    let (loose, tight) = (fb(1.1), fb(0.5));

    verdict(
        6,
        "manufactured",
        &[
            ("residual factor >= 1.4", factors.iter().all(|&f| f >= 1.4)),
            ("quotient within 5%", (q - expected).abs() <= 0.05 * expected),
            ("normal derivative +", (plus - 1.0).abs() <= 0.05),
            ("normal derivative -", (minus - 1.0).abs() <= 0.05),
            ("flux passes at 1.1", loose.iter().all(|&p| p)),
            ("flux fails at 0.5", tight.iter().all(|&p| !p)),
            ("runtime", within(t, Duration::from_secs(120))),
        ],
        format!(
            "(residuals [{}], factors {factors:.2?}; quotient {q:.5} vs {expected:.5}; \
             normal derivatives {plus:.4}, {minus:.4})",
            sci(&residuals)
        ),
    );
}

#[test]
fn end_to_end_certificate() {
    let t = Instant::now();
    let params = BarrierParams::default();

    let (u, p) = manufactured_solution(1.0, 2, 33).unwrap();
    let rep = theorem_report(&u, &p, &params, &CertifyConfig::default()).unwrap();
    let clean = rep.pass() && rep.centers.iter().all(|c| c.search.witness.is_none());

    let lin = ScalarField::from_fn(2, 33, |x| 50.0 * x[0]).unwrap();
    let zero = ScalarField::zeros(2, 33).unwrap();
    let bad = ProblemSpec::new(zero.clone(), zero, 0.1, lin.clone()).unwrap();
    let cfg = CertifyConfig { l_override: Some(5.0), ..CertifyConfig::default() };
    let counter = theorem_report(&lin, &bad, &params, &cfg).unwrap();
    let mut tags: Vec<String> = counter
        .centers
        .iter()
        .filter_map(|c| c.case.map(|k| format!("{:?}", k.tag)))
        .collect();
    tags.sort();
    tags.dedup();
    let cert = counter.certificate.as_ref();
    let fb_case = cert.is_some_and(|c| matches!(c.case.tag, CaseTag::Case1 | CaseTag::Case2));
    let flux_ok = cert.and_then(|c| c.case.flux).is_some_and(|f| f.above_lower && !f.within_lambda);

    verdict(
        7,
        "certificate",
        &[
            ("no witness on the manufactured solution", clean),
            ("counterexample has a witness", cert.is_some()),
            ("witness is a free boundary case", fb_case),
            ("flux record contradicts", flux_ok),
            ("runtime", within(t, Duration::from_secs(120))),
        ],
        format!(
            "(L={:.4}, sup quotient {:.4}; counterexample tags {tags:?}, first {:?}; {:.1}s)",
            rep.ledger.l,
            rep.sup_quotient,
            cert.map(|c| c.case.tag),
            t.elapsed().as_secs_f64()
        ),
    );
}

fn random_smooth(rng: &mut ChaCha8Rng, m: usize) -> ScalarField {
    let c: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
    ScalarField::from_fn(2, m, |x| {
        c[0] + c[1] * x[0]
            + c[2] * x[1]
            + c[3] * x[0] * x[0]
            + c[4] * x[0] * x[1]
            + c[5] * x[1] * x[1]
            + c[6] * (3.0 * x[0] + c[7]).sin()
            + c[8] * (4.0 * x[1] + c[9]).cos()
            + c[10] * ((x[0] - c[11]).abs() - 0.3).abs()
    })
    .unwrap()
}

fn dual(a: &JetOutcome, b: &JetOutcome) -> bool {
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * (1.0 + x.abs());
    match (a, b) {
        (JetOutcome::Jet(p), JetOutcome::Jet(q)) => {
            p.xi.iter().zip(q.xi.iter()).all(|(x, y)| close(*x, -*y))
                && p.m.iter().zip(q.m.iter()).all(|(x, y)| close(*x, -*y))
                && close(p.touch_defect, q.touch_defect)
        }
        (JetOutcome::Singular, JetOutcome::Singular) => true,
        (JetOutcome::DefectCap { defect: x, .. }, JetOutcome::DefectCap { defect: y, .. }) => close(*x, *y),
        _ => false,
    }
}

#[test]
fn viscosity_suite() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    let mut duality = true;
    for _ in 0..50 {
        let u = random_smooth(&mut rng, 33);
        let neg = ScalarField::new(2, 33, u.values().iter().map(|v| -v).collect()).unwrap();
        let (r, cap) = (default_jet_radius(&u), default_defect_cap(&u));
        for _ in 0..5 {
            let k = u.nearest(in_ball(&mut rng, 0.8)).unwrap();
            let sup = fit_jet_with(&u, k, JetSide::Super, r, cap).unwrap();
            let sub = fit_jet_with(&neg, k, JetSide::Sub, r, cap).unwrap();
            duality &= dual(&sup, &sub);
        }
    }

    let mut recovery = true;
    let mut worst_coeff: f64 = 0.0;
    for _ in 0..50 {
        let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let u = ScalarField::from_fn(2, 33, |x| {
            c[0] + c[1] * x[0] + c[2] * x[1] + 0.5 * (c[3] * x[0] * x[0] + 2.0 * c[4] * x[0] * x[1] + c[5] * x[1] * x[1])
        })
        .unwrap();
        let k = u.nearest(in_ball(&mut rng, 0.8)).unwrap();
        let x = u.point(k);
        let want_xi = [c[1] + c[3] * x[0] + c[4] * x[1], c[2] + c[4] * x[0] + c[5] * x[1]];
        let want_m = [c[3], c[4], c[4], c[5]];
        for side in [JetSide::Super, JetSide::Sub] {
            let Some(jet) = fit_jet(&u, k, side, default_jet_radius(&u)).unwrap() else {
                recovery = false;
                continue;
            };
            let got_m = [jet.m[(0, 0)], jet.m[(0, 1)], jet.m[(1, 0)], jet.m[(1, 1)]];
            let errs = (0..2).map(|i| (jet.xi[i] - want_xi[i]).abs()).chain((0..4).map(|i| (got_m[i] - want_m[i]).abs()));
            let e = errs.fold(0.0, f64::max);
            worst_coeff = worst_coeff.max(e);
            recovery &= jet.touch_defect == 0.0 && e <= 1e-9;
        }
    }

    let mut partition = true;
    for _ in 0..50 {
        let m = 2 * rng.gen_range(2..=8usize) + 1;
        let vals: Vec<f64> = (0..m * m)
            .map(|_| match rng.gen_range(0..3) {
                0 => -rng.gen_range(0.1..1.0),
                1 => 0.0,
                _ => rng.gen_range(0.1..1.0),
            })
            .collect();
        let u = ScalarField::new(2, m, vals.clone()).unwrap();
        let neg = ScalarField::new(2, m, vals.iter().map(|v| -v).collect()).unwrap();
        let ph = extract_phases(&u, 0.0).unwrap();
        let flipped = extract_phases(&neg, 0.0).unwrap();
        let far = ph.far_zero();
        let mut seen = vec![0u8; u.len()];
        for &k in ph.pos.iter().chain(&ph.neg).chain(&ph.fb).chain(&far) {
            seen[k] += 1;
        }
        partition &= seen.iter().all(|&c| c == 1);
        partition &= ph.pos.iter().all(|&k| vals[k] > 0.0) && ph.neg.iter().all(|&k| vals[k] < 0.0);
        partition &= far.iter().all(|&k| vals[k] == 0.0);
        partition &= flipped.pos == ph.neg && flipped.neg == ph.pos && flipped.fb == ph.fb;
        for k in 0..u.len() {
            let (i, j) = u.axes(k);
            let nb = [(i.wrapping_sub(1), j), (i + 1, j), (i, j.wrapping_sub(1)), (i, j + 1)];
            for (a, b) in nb {
                if a >= m || b >= m {
                    continue;
                }
                let q = u.flat(a, b);
                let (p1, p2) = (ph.phase(k), ph.phase(q));
                partition &= !matches!((p1, p2), (Phase::Pos, Phase::Neg) | (Phase::Neg, Phase::Pos));
                partition &= !(p1 == Phase::FarZero && vals[q] != 0.0);
            }
        }
    }

    verdict(
        8,
        "viscosity",
        &[
            ("jet duality", duality),
            ("quadratic recovery", recovery),
            ("phase partition", partition),
            ("runtime", within(t, Duration::from_secs(10))),
        ],
        format!("(worst coefficient error {worst_coeff:.2e}, {:.2}s)", t.elapsed().as_secs_f64()),
    );
}

#[test]
fn certify_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_inflap-fb"))
            .args(["certify", "--profile", "prandtl", "--m", "33", "--out"])
            .arg(&path)
            .output()
            .unwrap();
        assert!(status.status.code().is_some());
        std::fs::read(&path).unwrap()
    };
    let (a, b) = (run("a.json"), run("b.json"));
    verdict(9, "determinism", &[("byte-identical reports", a == b)], format!("({} bytes)", a.len()));
}
