use dopf::{acpf, admm, caseio, netmodel};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map(String::as_str).unwrap_or("case14");
    let regions: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3);
    let r: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let trials: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(20);
    let case = caseio::parse_case_file(format!("cases/{name}.m")).unwrap();
    let net = netmodel::to_per_unit(&case).unwrap();
    let spec = caseio::fallback_partition(&case, regions).unwrap();
    let dec = netmodel::decompose(&net, &spec);
    let env = netmodel::LoadEnvelope::new(r);
    for eps in [1e-5, 1e-4, 1e-3, 5e-3, 1e-2, 3e-2] {
        let cfg = admm::AdmmConfig { eps_pri: eps, max_iters: 4000, ..Default::default() };
        let mut iters = vec![]; let mut counts = vec![]; let mut pcts = vec![]; let mut fails = 0;
        for seed in 0..trials {
            let loads = netmodel::sample_loads(&net, &env, seed);
            match admm::run_admm(&net, &dec, &cfg, &loads, None) {
                Ok(out) => {
                    iters.push(out.iterations as f64);
                    match acpf::run_pf(&net, &out.dispatch, &loads) {
                        Ok(pf) => { let m = acpf::measure_violations(&net, &pf); counts.push(m.count as f64); pcts.push(m.avg_percent); }
                        Err(_) => fails += 1,
                    }
                }
                Err(_) => fails += 1,
            }
        }
        let med = |v: &mut Vec<f64>| { if v.is_empty() { return f64::NAN; } v.sort_by(f64::total_cmp); v[v.len()/2] };
        println!("eps {eps:8.0e}: med_iters {:5.0} med_viol_count {:3.0} med_pct {:.4} max_pct {:.4} fails {fails}",
            med(&mut iters), med(&mut counts), med(&mut pcts.clone()), pcts.iter().cloned().fold(0.0f64, f64::max));
    }
}
