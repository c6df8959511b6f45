//! Sparse LDL^T factorization of symmetric quasi-definite KKT matrices.
//!
//! Up-looking elimination-tree factorization of the upper triangle in CSC
//! form, with a reverse Cuthill-McKee fill-reducing permutation, dynamic
//! regularization of near-zero pivots, and inertia reporting for the
//! interior-point inertia correction loop.

/// Symmetric sparse matrix given by its upper triangle in CSC form.
#[derive(Debug, Clone)]
pub struct SymCsc {
    pub n: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SymCsc {
    /// Builds the upper triangle in CSC form from unordered COO triplets.
    /// Entries with `row > col` are mirrored; duplicates are summed.
    pub fn from_triplets(n: usize, rows: &[usize], cols: &[usize], vals: &[f64]) -> Self {
        let mut count = vec![0usize; n];
        for (&r, &c) in rows.iter().zip(cols) {
            let (r, c) = if r <= c { (r, c) } else { (c, r) };
            debug_assert!(c < n && r <= c);
            count[c] += 1;
        }
        let mut col_ptr = vec![0usize; n + 1];
        for j in 0..n {
            col_ptr[j + 1] = col_ptr[j] + count[j];
        }
        let nnz = col_ptr[n];
        let mut row_idx = vec![0usize; nnz];
        let mut values = vec![0.0; nnz];
        let mut next = col_ptr.clone();
        for ((&r, &c), &v) in rows.iter().zip(cols).zip(vals) {
            let (r, c) = if r <= c { (r, c) } else { (c, r) };
            let p = next[c];
            row_idx[p] = r;
            values[p] = v;
            next[c] += 1;
        }
        // sort rows within each column and merge duplicates
        let mut out = SymCsc {
            n,
            col_ptr: vec![0; n + 1],
            row_idx: Vec::with_capacity(nnz),
            values: Vec::with_capacity(nnz),
        };
        let mut buf: Vec<(usize, f64)> = Vec::new();
        for j in 0..n {
            buf.clear();
            for p in col_ptr[j]..col_ptr[j + 1] {
                buf.push((row_idx[p], values[p]));
            }
            buf.sort_unstable_by_key(|e| e.0);
            let mut k = 0;
            while k < buf.len() {
                let r = buf[k].0;
                let mut v = buf[k].1;
                k += 1;
                while k < buf.len() && buf[k].0 == r {
                    v += buf[k].1;
                    k += 1;
                }
                out.row_idx.push(r);
                out.values.push(v);
            }
            out.col_ptr[j + 1] = out.row_idx.len();
        }
        out
    }

    /// y += A x using the full symmetric matrix implied by the stored triangle.
    pub fn mul_add(&self, x: &[f64], y: &mut [f64]) {
        for j in 0..self.n {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[p];
                let v = self.values[p];
                y[i] += v * x[j];
                if i != j {
                    y[j] += v * x[i];
                }
            }
        }
    }
}

/// Reverse Cuthill-McKee ordering of the symmetric pattern.
fn rcm_permutation(a: &SymCsc) -> Vec<usize> {
    let n = a.n;
    // adjacency (full symmetric)
    let mut adj = vec![Vec::new(); n];
    for j in 0..n {
        for p in a.col_ptr[j]..a.col_ptr[j + 1] {
            let i = a.row_idx[p];
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for l in adj.iter_mut() {
        l.sort_unstable();
        l.dedup();
    }
    let deg: Vec<usize> = adj.iter().map(|l| l.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = std::collections::VecDeque::new();
    loop {
        // lowest-degree unvisited start node
        let start = match (0..n).filter(|&i| !visited[i]).min_by_key(|&i| deg[i]) {
            Some(s) => s,
            None => break,
        };
        visited[start] = true;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut nbrs: Vec<usize> = adj[u].iter().copied().filter(|&v| !visited[v]).collect();
            nbrs.sort_unstable_by_key(|&v| deg[v]);
            for v in nbrs {
                visited[v] = true;
                queue.push_back(v);
            }
        }
    }
    order.reverse();
    // order[k] = original index placed at position k; return perm with perm[orig] = new
    let mut perm = vec![0usize; n];
    for (k, &orig) in order.iter().enumerate() {
        perm[orig] = k;
    }
    perm
}

/// Options controlling pivot regularization.
#[derive(Debug, Clone, Copy)]
pub struct LdlOptions {
    /// Pivots with magnitude below this are replaced.
    pub pivot_eps: f64,
    /// Replacement magnitude, signed by the expected inertia of the index.
    pub pivot_reg: f64,
}

impl Default for LdlOptions {
    fn default() -> Self {
        LdlOptions {
            pivot_eps: 1e-13,
            pivot_reg: 1e-9,
        }
    }
}

/// Factorization result holding L, D and the permutation.
pub struct LdlFactor {
    n: usize,
    perm: Vec<usize>,
    iperm: Vec<usize>,
    l_colptr: Vec<usize>,
    l_rowidx: Vec<usize>,
    l_values: Vec<f64>,
    d: Vec<f64>,
    /// (positive, negative) pivot counts.
    pub inertia: (usize, usize),
    /// Number of dynamically regularized pivots.
    pub regularized: usize,
}

/// Symbolic structure reusable across factorizations with the same pattern.
pub struct LdlSymbolic {
    n: usize,
    perm: Vec<usize>,
    iperm: Vec<usize>,
    // permuted upper-triangular pattern
    ap_colptr: Vec<usize>,
    ap_rowidx: Vec<usize>,
    // map from original value slot to permuted slot
    value_map: Vec<usize>,
    etree: Vec<usize>,
    l_colptr: Vec<usize>,
}

const NONE: usize = usize::MAX;

impl LdlSymbolic {
    pub fn new(a: &SymCsc) -> Self {
        let n = a.n;
        let perm = rcm_permutation(a);
        let mut iperm = vec![0usize; n];
        for (orig, &p) in perm.iter().enumerate() {
            iperm[p] = orig;
        }
        // permuted upper triangle: entry (i,j) -> (min(pi,pj), max(pi,pj))
        let nnz = a.row_idx.len();
        let mut count = vec![0usize; n];
        let mut coords = Vec::with_capacity(nnz);
        for j in 0..a.n {
            for p in a.col_ptr[j]..a.col_ptr[j + 1] {
                let i = a.row_idx[p];
                let (pi, pj) = (perm[i], perm[j]);
                let (r, c) = if pi <= pj { (pi, pj) } else { (pj, pi) };
                coords.push((r, c));
                count[c] += 1;
            }
        }
        let mut ap_colptr = vec![0usize; n + 1];
        for j in 0..n {
            ap_colptr[j + 1] = ap_colptr[j] + count[j];
        }
        let mut ap_rowidx = vec![0usize; nnz];
        let mut slot_of = vec![0usize; nnz];
        let mut next = ap_colptr.clone();
        for (k, &(r, c)) in coords.iter().enumerate() {
            let p = next[c];
            ap_rowidx[p] = r;
            slot_of[k] = p;
            next[c] += 1;
        }
        // sort each column's rows, tracking the value mapping
        let mut order: Vec<usize> = (0..nnz).collect();
        for j in 0..n {
            let s = ap_colptr[j];
            let e = ap_colptr[j + 1];
            order[s..e].sort_unstable_by_key(|&p| ap_rowidx[p]);
        }
        // order[p] = old slot now at position p; rebuild rowidx and value_map
        let mut new_rowidx = vec![0usize; nnz];
        let mut pos_of_slot = vec![0usize; nnz];
        for (p, &old) in order.iter().enumerate() {
            new_rowidx[p] = ap_rowidx[old];
            pos_of_slot[old] = p;
        }
        let value_map: Vec<usize> = slot_of.iter().map(|&s| pos_of_slot[s]).collect();
        let ap_rowidx = new_rowidx;

        // elimination tree and column counts of L (QDLDL-style)
        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut flag = vec![NONE; n];
        for j in 0..n {
            flag[j] = j;
            for p in ap_colptr[j]..ap_colptr[j + 1] {
                let mut i = ap_rowidx[p];
                if i == j {
                    continue;
                }
                while flag[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    flag[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut l_colptr = vec![0usize; n + 1];
        for j in 0..n {
            l_colptr[j + 1] = l_colptr[j] + lnz[j];
        }
        LdlSymbolic {
            n,
            perm,
            iperm,
            ap_colptr,
            ap_rowidx,
            value_map,
            etree,
            l_colptr,
        }
    }

    /// Numeric factorization. `dsigns[i]` gives the expected pivot sign (+1/-1)
    /// in the ORIGINAL index space, used when regularizing degenerate pivots.
    pub fn factor(&self, a: &SymCsc, dsigns: &[i8], opts: &LdlOptions) -> LdlFactor {
        let n = self.n;
        // scatter values into permuted pattern
        let mut ap_values = vec![0.0; self.ap_rowidx.len()];
        let mut k = 0;
        for j in 0..a.n {
            for p in a.col_ptr[j]..a.col_ptr[j + 1] {
                let _ = p;
                ap_values[self.value_map[k]] += a.values[k];
                k += 1;
            }
        }
        let lnz_total = self.l_colptr[n];
        let mut l_rowidx = vec![0usize; lnz_total];
        let mut l_values = vec![0.0; lnz_total];
        let mut d = vec![0.0; n];
        let mut l_next = self.l_colptr[..n].to_vec();
        let mut y = vec![0.0; n];
        let mut pattern = vec![0usize; n];
        let mut flag = vec![NONE; n];
        let mut inertia = (0usize, 0usize);
        let mut regularized = 0usize;

        for j in 0..n {
            // compute row j of L: solve L(0..j,0..j) against column j of A
            flag[j] = j;
            let mut top = n;
            let mut diag = 0.0;
            for p in self.ap_colptr[j]..self.ap_colptr[j + 1] {
                let i = self.ap_rowidx[p];
                if i == j {
                    diag = ap_values[p];
                    continue;
                }
                y[i] = ap_values[p];
                let mut len = 0;
                let mut t = i;
                while flag[t] != j {
                    pattern[len] = t;
                    len += 1;
                    flag[t] = j;
                    t = self.etree[t];
                }
                // reverse the freshly discovered path onto the stack
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    pattern[top] = pattern[len];
                }
            }
            d[j] = diag;
            for &i in &pattern[top..n] {
                let yi = y[i];
                y[i] = 0.0;
                let p2 = l_next[i];
                for p in self.l_colptr[i]..p2 {
                    y[l_rowidx[p]] -= l_values[p] * yi;
                }
                let lij = yi / d[i];
                d[j] -= lij * yi;
                l_rowidx[p2] = j;
                l_values[p2] = lij;
                l_next[i] += 1;
            }
            let sign = dsigns[self.iperm[j]];
            if d[j].abs() < opts.pivot_eps {
                d[j] = f64::from(sign) * opts.pivot_reg;
                regularized += 1;
            }
            if d[j] > 0.0 {
                inertia.0 += 1;
            } else {
                inertia.1 += 1;
            }
        }
        LdlFactor {
            n,
            perm: self.perm.clone(),
            iperm: self.iperm.clone(),
            l_colptr: self.l_colptr.clone(),
            l_rowidx,
            l_values,
            d,
            inertia,
            regularized,
        }
    }
}

impl LdlFactor {
    /// Solves K x = b in place (b in original index order).
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x = vec![0.0; n];
        for i in 0..n {
            x[self.perm[i]] = b[i];
        }
        // forward: L y = b
        for j in 0..n {
            let xj = x[j];
            for p in self.l_colptr[j]..self.l_colptr[j + 1] {
                x[self.l_rowidx[p]] -= self.l_values[p] * xj;
            }
        }
        for j in 0..n {
            x[j] /= self.d[j];
        }
        // backward: L^T x = y
        for j in (0..n).rev() {
            let mut xj = x[j];
            for p in self.l_colptr[j]..self.l_colptr[j + 1] {
                xj -= self.l_values[p] * x[self.l_rowidx[p]];
            }
            x[j] = xj;
        }
        for i in 0..n {
            b[i] = x[self.perm[i]];
        }
        let _ = &self.iperm;
    }

    /// Solves with iterative refinement against the original matrix.
    pub fn solve_refined(&self, a: &SymCsc, b: &[f64], rounds: usize) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve(&mut x);
        for _ in 0..rounds {
            let mut r = b.to_vec();
            let mut ax = vec![0.0; a.n];
            a.mul_add(&x, &mut ax);
            for i in 0..a.n {
                r[i] -= ax[i];
            }
            self.solve(&mut r);
            for i in 0..a.n {
                x[i] += r[i];
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_solve_check(n: usize, rows: &[usize], cols: &[usize], vals: &[f64], b: &[f64]) {
        let a = SymCsc::from_triplets(n, rows, cols, vals);
        let sym = LdlSymbolic::new(&a);
        let signs = vec![1i8; n];
        let f = sym.factor(&a, &signs, &LdlOptions::default());
        let x = f.solve_refined(&a, b, 1);
        let mut ax = vec![0.0; n];
        a.mul_add(&x, &mut ax);
        for i in 0..n {
            assert!((ax[i] - b[i]).abs() < 1e-9, "residual at {i}: {}", ax[i] - b[i]);
        }
    }

    #[test]
    fn solves_spd_tridiagonal() {
        let n = 12;
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for i in 0..n {
            rows.push(i);
            cols.push(i);
            vals.push(4.0);
            if i + 1 < n {
                rows.push(i);
                cols.push(i + 1);
                vals.push(-1.0);
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 1.0).collect();
        dense_solve_check(n, &rows, &cols, &vals, &b);
    }

    #[test]
    fn solves_indefinite_kkt_and_reports_inertia() {
        // [2 0 1; 0 2 1; 1 1 0] — saddle system with inertia (2, 1)
        let rows = vec![0, 1, 0, 1, 2];
        let cols = vec![0, 1, 2, 2, 2];
        let vals = vec![2.0, 2.0, 1.0, 1.0, 0.0];
        let a = SymCsc::from_triplets(3, &rows, &cols, &vals);
        let sym = LdlSymbolic::new(&a);
        let f = sym.factor(&a, &[1, 1, -1], &LdlOptions::default());
        assert_eq!(f.inertia, (2, 1));
        let x = f.solve_refined(&a, &[1.0, 2.0, 3.0], 1);
        let mut ax = vec![0.0; 3];
        a.mul_add(&x, &mut ax);
        for (i, &bi) in [1.0, 2.0, 3.0].iter().enumerate() {
            assert!((ax[i] - bi).abs() < 1e-10);
        }
    }

    #[test]
    fn regularizes_zero_pivot() {
        // second pivot is exactly zero without regularization
        let rows = vec![0, 1];
        let cols = vec![0, 1];
        let vals = vec![1.0, 0.0];
        let a = SymCsc::from_triplets(2, &rows, &cols, &vals);
        let sym = LdlSymbolic::new(&a);
        let f = sym.factor(&a, &[1, -1], &LdlOptions::default());
        assert_eq!(f.regularized, 1);
        assert_eq!(f.inertia, (1, 1));
    }

    #[test]
    fn duplicate_triplets_are_summed() {
        let a = SymCsc::from_triplets(2, &[0, 0, 1, 0], &[0, 0, 1, 1], &[1.0, 1.0, 3.0, 0.5]);
        assert_eq!(a.row_idx.len(), 3);
        let mut y = vec![0.0, 0.0];
        a.mul_add(&[1.0, 1.0], &mut y);
        assert_eq!(y, vec![2.5, 3.5]);
    }

    #[test]
    fn random_sparse_symmetric_systems() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for trial in 0..20 {
            let n = 5 + (trial % 30);
            let mut rows = Vec::new();
            let mut cols = Vec::new();
            let mut vals = Vec::new();
            for i in 0..n {
                rows.push(i);
                cols.push(i);
                vals.push(3.0 + rng.gen::<f64>());
            }
            for _ in 0..2 * n {
                let i = rng.gen_range(0..n);
                let j = rng.gen_range(0..n);
                if i != j {
                    rows.push(i.min(j));
                    cols.push(i.max(j));
                    vals.push(rng.gen_range(-0.4..0.4));
                }
            }
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            dense_solve_check(n, &rows, &cols, &vals, &b);
        }
    }
}
