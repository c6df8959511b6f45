//! Power-flow consistency with the optimization side: applying a centralized
//! OPF dispatch to the grid must reproduce the OPF state and violate nothing.

mod common;

use common::*;
use dopf::acopf;
use dopf::acpf;
use dopf::netmodel::LoadAssignment;

fn check_case(name: &str) {
    let net = load_network(name);
    let m = acopf::build_opf(&net, None).unwrap();
    let (d, sol) = acopf::solve_opf(&m).unwrap();
    let d = d.expect("baseline OPF must be feasible");
    let loads = LoadAssignment::nominal(&net);
    let pf = acpf::run_pf(&net, &d, &loads).unwrap();
    assert!(pf.converged);
    for i in 0..net.buses.len() {
        let dv = (pf.v[i] - sol.x[m.layout.v(i)]).abs();
        let dt = (pf.theta[i] - sol.x[m.layout.theta(i)]).abs();
        assert!(dv <= 1e-6, "{name} bus {i}: |dv| = {dv:.3e}");
        assert!(dt <= 1e-6, "{name} bus {i}: |dtheta| = {dt:.3e}");
    }
    let metrics = acpf::measure_violations(&net, &pf);
    assert_eq!(metrics.count, 0, "{name}: {:?}", metrics.violations);
    assert_eq!(metrics.avg_percent, 0.0);
}

#[test]
fn case9_pf_reproduces_opf_solution() {
    check_case("case9");
}

#[test]
fn case14_pf_reproduces_opf_solution() {
    check_case("case14");
}

#[test]
fn case118_pf_reproduces_opf_solution() {
    check_case("case118");
}

/// The PF route recomputes the OPF's power balance residuals independently
/// (complex injection arithmetic vs. stamped flow variables).
#[test]
fn opf_balance_residuals_under_1e6_by_independent_route() {
    for name in ["case14", "case118"] {
        let net = load_network(name);
        let m = acopf::build_opf(&net, None).unwrap();
        let (d, sol) = acopf::solve_opf(&m).unwrap();
        let _ = d.unwrap();
        let y = acpf::ybus(&net);
        let n = net.buses.len();
        let vol: Vec<num_complex::Complex64> = (0..n)
            .map(|i| num_complex::Complex64::from_polar(sol.x[m.layout.v(i)], sol.x[m.layout.theta(i)]))
            .collect();
        for i in 0..n {
            let mut acc = num_complex::Complex64::new(0.0, 0.0);
            for k in 0..n {
                acc += y[i * n + k] * vol[k];
            }
            let s_inj = vol[i] * acc.conj();
            let mut pg = 0.0;
            let mut qg = 0.0;
            for gi in net.gens_at(i) {
                pg += sol.x[m.layout.pg(gi)];
                qg += sol.x[m.layout.qg(gi)];
            }
            let rp = (s_inj.re - (pg - net.buses[i].pd)).abs();
            let rq = (s_inj.im - (qg - net.buses[i].qd)).abs();
            assert!(rp <= 1e-6 && rq <= 1e-6, "{name} bus {i}: {rp:.2e} {rq:.2e}");
        }
    }
}
