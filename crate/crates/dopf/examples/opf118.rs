fn main() {
    let t = std::time::Instant::now();
    let case = dopf::caseio::parse_case_file("cases/case118.m").unwrap();
    let net = dopf::netmodel::to_per_unit(&case).unwrap();
    let m = dopf::acopf::build_opf(&net, None).unwrap();
    let (d, sol) = dopf::acopf::solve_opf(&m).unwrap();
    println!("status {:?} obj {:?} iters {} elapsed {:?}", sol.status, d.map(|d| d.objective), sol.iterations, t.elapsed());
    println!("kkt feas {:.2e} stat {:.2e} comp {:.2e}", sol.kkt_feas, sol.kkt_stat, sol.kkt_comp);
}
