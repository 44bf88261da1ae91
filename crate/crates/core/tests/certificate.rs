use inflap_fb::barrier::BarrierParams;
use inflap_fb::doubling::{classify_witness, default_tau_w, search, verify_lemma_chain, CaseTag, ConstantLedger};
use inflap_fb::grid::dist;
use inflap_fb::lipschitz::{theorem_report, CertifyConfig};
use inflap_fb::solver::{manufactured_solution, ProblemSpec};
use inflap_fb::viscosity::{default_jet_radius, default_tol_zero, extract_phases};
use inflap_fb::ScalarField;

fn steep_linear(m: usize) -> (ScalarField, ProblemSpec) {
    let u = ScalarField::from_fn(2, m, |x| 50.0 * x[0]).unwrap();
    let zero = ScalarField::zeros(2, m).unwrap();
    let p = ProblemSpec::new(zero.clone(), zero, 0.1, u.clone()).unwrap();
    (u, p)
}

// With z₀ one cell off the zero column the maximizing pair has an endpoint
// on the free boundary, and the flux record shows |ξ| far above Λ.
#[test]
fn off_column_centers_give_free_boundary_cases() {
    let (u, p) = steep_linear(33);
    let params = BarrierParams::default();
    let h = u.spacing();
    let phases = extract_phases(&u, default_tol_zero(&u)).unwrap();
    let base = ConstantLedger::from_problem(&u, &p, [0.0, 0.0], &params).unwrap().with_l(5.0);
    for (z1, want) in [(h, CaseTag::Case1), (-h, CaseTag::Case2)] {
        let ledger = base.at([z1, 0.0]);
        let s = search(&u, &ledger, &params, 0.5, default_tau_w(&u, ledger.z0, 0.5)).unwrap();
        let w = s.witness.expect("witness");
        let case = classify_witness(&w, &phases, &u, &ledger, &params).unwrap();
        assert_eq!(case.tag, want);
        let flux = case.flux.unwrap();
        assert!(flux.above_lower && !flux.within_lambda, "{flux:?}");
        assert!(!case.ledger_contradiction);
    }
    // on the column itself the best pair straddles it
    let ledger = base.at([0.0, 0.0]);
    let w = search(&u, &ledger, &params, 0.5, 0.0).unwrap().witness.unwrap();
    let case = classify_witness(&w, &phases, &u, &ledger, &params).unwrap();
    assert_eq!(case.tag, CaseTag::NoFB);
}

#[test]
fn lemma_chain_is_traced_for_the_counterexample() {
    let (u, p) = steep_linear(33);
    let params = BarrierParams::default();
    let ledger = ConstantLedger::from_problem(&u, &p, [0.25, 0.0], &params).unwrap().with_l(5.0);
    let w = search(&u, &ledger, &params, 0.5, 0.0).unwrap().witness.unwrap();
    let trace = verify_lemma_chain(&u, &w, &ledger, &params, default_jet_radius(&u)).unwrap();
    assert!(trace.iota_identity_residual < 1e-9);
    // a linear field has flat jets on both sides
    assert!(trace.lhs.abs() < 1e-6, "{}", trace.lhs);
}

#[test]
fn passing_certificate_implies_the_lipschitz_bound() {
    let (u, p) = manufactured_solution(1.0, 2, 33).unwrap();
    let rep = theorem_report(&u, &p, &BarrierParams::default(), &CertifyConfig::default()).unwrap();
    assert!(rep.pass() && rep.ledger_rules_hold);
    let tau = rep.centers.iter().map(|c| c.search.tau_w).fold(0.0, f64::max);
    let nodes = u.indices_in_ball([0.0, 0.0], 0.5);
    for &a in &nodes {
        for &b in &nodes {
            let d = dist(u.point(a), u.point(b));
            assert!((u.value(a) - u.value(b)).abs() <= rep.bound_value * d + 2.0 * tau);
        }
    }
    assert!(rep.sup_quotient <= rep.bound_value);
    assert!(rep.empirical_c > 0.0 && rep.empirical_c < 1.0);
}
