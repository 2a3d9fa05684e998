//! Sparse storage and a direct solver.
//!
//! Matrices are assembled in CSR form on a structurally symmetric pattern.
//! The solver reorders with reverse Cuthill–McKee and factors the permuted
//! matrix in skyline (variable band) storage by Crout LU without pivoting.

use std::collections::VecDeque;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinearSolveError {
    #[error("zero pivot at row {row} (pivot {pivot:e})")]
    Singular { row: usize, pivot: f64 },
    #[error("non-finite pivot at row {row}")]
    NotFinite { row: usize },
    #[error("dimension mismatch: matrix {matrix}, vector {vector}")]
    Dimension { matrix: usize, vector: usize },
}

/// Relative size below which a pivot counts as zero.
pub const PIVOT_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Zero matrix on the given pattern; each row's columns are sorted and
    /// deduplicated.
    pub fn from_pattern(n: usize, mut rows: Vec<Vec<usize>>) -> Self {
        assert_eq!(rows.len(), n);
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            debug_assert!(r.iter().all(|&c| c < n));
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        let values = vec![0.0; col_idx.len()];
        Self { n, row_ptr, col_idx, values }
    }

    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows = vec![Vec::new(); n];
        for &(i, j, _) in triplets {
            rows[i].push(j);
        }
        let mut m = Self::from_pattern(n, rows);
        for &(i, j, v) in triplets {
            let p = m.position(i, j).expect("entry in pattern");
            m.values[p] += v;
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::from_pattern(n, (0..n).map(|i| vec![i]).collect());
        m.values.fill(1.0);
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    pub fn col_index(&self, p: usize) -> usize {
        self.col_idx[p]
    }

    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let r = self.row_range(i);
        self.col_idx[r.clone()].binary_search(&j).ok().map(|k| r.start + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.values[p])
    }

    pub fn zero_values(&mut self) {
        self.values.fill(0.0);
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum()
            })
            .collect()
    }

    /// Whether `(i, j)` in the pattern implies `(j, i)` in the pattern.
    pub fn is_structurally_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row(i).0.iter().all(|&j| self.position(j, i).is_some()))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                row[j] += a;
            }
        }
        d
    }
}

/// Reverse Cuthill–McKee ordering of an undirected graph. Returns `perm`
/// with `perm[new] = old`.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let degree = |v: usize| adj[v].len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree(v), v));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(adj, seed);
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree(w), w));
            next.dedup();
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Endpoint of a long BFS path through the component of `seed`.
fn pseudo_peripheral(adj: &[Vec<usize>], seed: usize) -> usize {
    let mut start = seed;
    let mut ecc = 0;
    for _ in 0..8 {
        let levels = bfs_levels(adj, start);
        let max_level = levels.iter().filter_map(|&l| l).max().unwrap_or(0);
        if max_level <= ecc {
            break;
        }
        ecc = max_level;
        start = (0..adj.len())
            .filter(|&v| levels[v] == Some(max_level))
            .min_by_key(|&v| (adj[v].len(), v))
            .unwrap_or(start);
    }
    start
}

fn bfs_levels(adj: &[Vec<usize>], start: usize) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    level[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        let l = level[v].expect("queued vertices have a level");
        for &w in &adj[v] {
            if level[w].is_none() {
                level[w] = Some(l + 1);
                queue.push_back(w);
            }
        }
    }
    level
}

/// Ordering and skyline layout for a fixed sparsity pattern.
#[derive(Debug, Clone)]
pub struct Profile {
    perm: Vec<usize>,
    inv: Vec<usize>,
    /// First stored column (and row) of each permuted row (column).
    first: Vec<usize>,
    /// Offset of each row of `L` (column of `U`) in the packed storage.
    offset: Vec<usize>,
}

impl Profile {
    pub fn new(a: &CsrMatrix) -> Self {
        let n = a.dim();
        let mut adj = vec![Vec::new(); n];
        for (i, nbrs) in adj.iter_mut().enumerate() {
            nbrs.extend(a.row(i).0.iter().copied().filter(|&j| j != i));
        }
        for i in 0..n {
            for k in 0..adj[i].len() {
                let j = adj[i][k];
                if !adj[j].contains(&i) {
                    adj[j].push(i);
                }
            }
        }
        let perm = reverse_cuthill_mckee(&adj);
        Self::with_ordering(a, perm)
    }

    pub fn with_ordering(a: &CsrMatrix, perm: Vec<usize>) -> Self {
        let n = a.dim();
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for i in 0..n {
            let ni = inv[i];
            for &j in a.row(i).0 {
                let nj = inv[j];
                let (lo, hi) = if ni < nj { (ni, nj) } else { (nj, ni) };
                first[hi] = first[hi].min(lo);
            }
        }
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for (i, &f) in first.iter().enumerate() {
            offset.push(offset[i] + (i - f));
        }
        Self { perm, inv, first, offset }
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Stored entries strictly below the diagonal.
    pub fn size(&self) -> usize {
        *self.offset.last().unwrap_or(&0)
    }
}

#[derive(Debug, Clone)]
pub struct SparseLu<'p> {
    profile: &'p Profile,
    l: Vec<f64>,
    u: Vec<f64>,
    diag: Vec<f64>,
}

/// Crout factorization `P A Pᵀ = L U` with unit lower `L`.
pub fn factor<'p>(profile: &'p Profile, a: &CsrMatrix) -> Result<SparseLu<'p>, LinearSolveError> {
    let n = profile.dim();
    if a.dim() != n {
        return Err(LinearSolveError::Dimension { matrix: a.dim(), vector: n });
    }
    let (first, off, inv) = (&profile.first, &profile.offset, &profile.inv);
    let mut l = vec![0.0; profile.size()];
    let mut u = vec![0.0; profile.size()];
    let mut diag = vec![0.0; n];
    let mut scale = vec![0.0f64; n];
    for i in 0..n {
        let ni = inv[i];
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            let nj = inv[j];
            scale[ni] = scale[ni].max(v.abs());
            match nj.cmp(&ni) {
                std::cmp::Ordering::Less => l[off[ni] + nj - first[ni]] += v,
                std::cmp::Ordering::Greater => u[off[nj] + ni - first[nj]] += v,
                std::cmp::Ordering::Equal => diag[ni] += v,
            }
        }
    }
    for i in 0..n {
        let fi = first[i];
        for j in fi..i {
            let fj = first[j];
            let k0 = fi.max(fj);
            let lj = &l[off[j] + k0 - fj..off[j] + j - fj];
            let ui = &u[off[i] + k0 - fi..off[i] + j - fi];
            let s_u: f64 = lj.iter().zip(ui).map(|(a, b)| a * b).sum();
            u[off[i] + j - fi] -= s_u;

            let li = &l[off[i] + k0 - fi..off[i] + j - fi];
            let uj = &u[off[j] + k0 - fj..off[j] + j - fj];
            let s_l: f64 = li.iter().zip(uj).map(|(a, b)| a * b).sum();
            l[off[i] + j - fi] = (l[off[i] + j - fi] - s_l) / diag[j];
        }
        let li = &l[off[i]..off[i + 1]];
        let ui = &u[off[i]..off[i + 1]];
        let s: f64 = li.iter().zip(ui).map(|(a, b)| a * b).sum();
        diag[i] -= s;
        if !diag[i].is_finite() {
            return Err(LinearSolveError::NotFinite { row: profile.perm[i] });
        }
        if diag[i].abs() <= PIVOT_TOL * scale[i] || scale[i] == 0.0 {
            return Err(LinearSolveError::Singular { row: profile.perm[i], pivot: diag[i] });
        }
    }
    Ok(SparseLu { profile, l, u, diag })
}

impl SparseLu<'_> {
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinearSolveError> {
        let p = self.profile;
        let n = p.dim();
        if b.len() != n {
            return Err(LinearSolveError::Dimension { matrix: n, vector: b.len() });
        }
        let mut y: Vec<f64> = p.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = p.first[i];
            let li = &self.l[p.offset[i]..p.offset[i + 1]];
            let s: f64 = li.iter().zip(&y[fi..i]).map(|(a, b)| a * b).sum();
            y[i] -= s;
        }
        for i in (0..n).rev() {
            y[i] /= self.diag[i];
            let xi = y[i];
            let fi = p.first[i];
            let ui = &self.u[p.offset[i]..p.offset[i + 1]];
            for (yk, uk) in y[fi..i].iter_mut().zip(ui) {
                *yk -= uk * xi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in p.perm.iter().enumerate() {
            x[old] = y[new];
        }
        Ok(x)
    }
}

/// One-shot solve of `A x = b`.
pub fn linear_solve(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>, LinearSolveError> {
    let profile = Profile::new(a);
    factor(&profile, a)?.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0 + rng.random_range(0.0..1.0)));
            for _ in 0..3 {
                let j = rng.random_range(0..n);
                if j != i {
                    let v = rng.random_range(-0.5..0.5);
                    t.push((i, j, v));
                    t.push((j, i, v));
                }
            }
        }
        CsrMatrix::from_triplets(n, &t)
    }

    #[test]
    fn identity_solve() {
        let b: Vec<f64> = (0..7).map(|i| i as f64 - 2.5).collect();
        assert_eq!(linear_solve(&CsrMatrix::identity(7), &b).unwrap(), b);
    }

    #[test]
    fn random_spd_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_spd(100, &mut rng);
        let b: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = linear_solve(&a, &b).unwrap();
        let r: Vec<f64> = a.matvec(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm(&r) <= 1e-10 * norm(&b));
    }

    #[test]
    fn unsymmetric_values_on_symmetric_pattern() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut a = random_spd(60, &mut rng);
        for v in a.values.iter_mut() {
            *v += rng.random_range(-0.2..0.2);
        }
        let b: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = linear_solve(&a, &b).unwrap();
        let r: Vec<f64> = a.matvec(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm(&r) <= 1e-10 * norm(&b));
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = CsrMatrix::from_triplets(3, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 4.0), (2, 2, 1.0)]);
        assert!(matches!(linear_solve(&a, &[1.0, 1.0, 1.0]), Err(LinearSolveError::Singular { .. })));
        let z = CsrMatrix::from_pattern(2, vec![vec![0], vec![1]]);
        assert!(linear_solve(&z, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn rcm_reduces_profile_of_scrambled_band() {
        let n = 200;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut labels: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            labels.swap(i, rng.random_range(0..=i));
        }
        let mut t = Vec::new();
        for i in 0..n {
            t.push((labels[i], labels[i], 3.0));
            if i + 1 < n {
                t.push((labels[i], labels[i + 1], -1.0));
                t.push((labels[i + 1], labels[i], -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, &t);
        let natural = Profile::with_ordering(&a, (0..n).collect());
        let rcm = Profile::new(&a);
        assert_eq!(rcm.size(), n - 1);
        assert!(natural.size() > 10 * rcm.size());
        let mut seen = rcm.perm.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn dense_reference_solution() {
        // 3x3 system with known solution
        let a = CsrMatrix::from_triplets(
            3,
            &[(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0), (1, 2, 1.0), (2, 1, -1.0), (2, 2, 4.0)],
        );
        let x_true = [1.0, -2.0, 0.5];
        let b = a.matvec(&x_true);
        let x = linear_solve(&a, &b).unwrap();
        for (p, q) in x.iter().zip(&x_true) {
            assert!((p - q).abs() < 1e-14);
        }
        assert!(a.is_structurally_symmetric());
    }
}
