use dopf::{acopf, admm, caseio, netmodel};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map(String::as_str).unwrap_or("case14");
    let regions: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3);
    let alpha: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1000.0);
    let eps: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1e-4);
    let case = caseio::parse_case_file(format!("cases/{name}.m")).unwrap();
    let net = netmodel::to_per_unit(&case).unwrap();
    let spec = caseio::fallback_partition(&case, regions).unwrap();
    let dec = netmodel::decompose(&net, &spec);
    println!("cut branches: {}, N_b = {}", dec.cut_branches.len(), dec.boundary_count());
    let (d0, _) = acopf::solve_opf(&acopf::build_opf(&net, None).unwrap()).unwrap();
    let base = d0.unwrap().objective;
    let cfg = admm::AdmmConfig { alpha, eps_pri: eps, max_iters: 3000, ..Default::default() };
    let loads = netmodel::LoadAssignment::nominal(&net);
    let t = std::time::Instant::now();
    match admm::run_admm(&net, &dec, &cfg, &loads, None) {
        Ok(out) => {
            println!("converged in {} iters, {:?}", out.iterations, t.elapsed());
            println!("admm obj {:.2} vs central {:.2} gap {:.4}%", out.dispatch.objective, base, 100.0 * (out.dispatch.objective - base) / base);
            let mm_max = out.exit_mismatches.iter().cloned().fold(0.0f64, f64::max);
            println!("max peer mismatch at exit: {mm_max:.3e}");
            for row in out.trace.iter().take(5) { println!("  it {} rinf {:.3e} obj {:.1}", row.iter, row.r_inf, row.objective); }
        }
        Err(e) => println!("FAILED: {e}"),
    }
}
