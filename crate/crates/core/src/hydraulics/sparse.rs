//! Sparse Cholesky factorization of the nodal head system.
//!
//! The symbolic phase orders unknowns by minimum degree and records the
//! filled pattern of L; the numeric phase is a left-looking column
//! factorization over that fixed pattern, so the pattern can be reused for
//! every Newton iteration and every time step on one topology.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

#[derive(Debug, Clone)]
pub struct SymbolicCholesky {
    n: usize,
    /// perm[new] = old
    perm: Vec<usize>,
    /// iperm[old] = new
    iperm: Vec<usize>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    /// For row j: (column k < j, position of entry (j, k) in column k).
    row_entries: Vec<Vec<(usize, usize)>>,
    positions: HashMap<(usize, usize), usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NotPositiveDefinite {
    /// Original index of the unknown whose pivot vanished.
    pub index: usize,
}

impl SymbolicCholesky {
    /// `edges` are off-diagonal couplings between unknowns `0..n`.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adjacency: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for &(a, b) in edges {
            if a != b {
                adjacency[a].insert(b);
                adjacency[b].insert(a);
            }
        }

        let mut eliminated = vec![false; n];
        let mut heap: BinaryHeap<Reverse<(usize, usize)>> =
            (0..n).map(|v| Reverse((adjacency[v].len(), v))).collect();
        let mut perm = Vec::with_capacity(n);
        let mut columns: Vec<Vec<usize>> = Vec::with_capacity(n);
        while let Some(Reverse((degree, v))) = heap.pop() {
            if eliminated[v] || degree != adjacency[v].len() {
                continue;
            }
            eliminated[v] = true;
            let neighbours: Vec<usize> = adjacency[v].iter().copied().collect();
            for &u in &neighbours {
                adjacency[u].remove(&v);
                for &w in &neighbours {
                    if w != u {
                        adjacency[u].insert(w);
                    }
                }
                heap.push(Reverse((adjacency[u].len(), u)));
            }
            adjacency[v].clear();
            perm.push(v);
            columns.push(neighbours);
        }

        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for (j, neighbours) in columns.iter().enumerate() {
            row_idx.push(j);
            let mut rows: Vec<usize> = neighbours.iter().map(|&o| iperm[o]).collect();
            rows.sort_unstable();
            debug_assert!(rows.iter().all(|&r| r > j));
            row_idx.extend(rows);
            col_ptr.push(row_idx.len());
        }
        let mut row_entries = vec![Vec::new(); n];
        let mut positions = HashMap::with_capacity(row_idx.len());
        for k in 0..n {
            for p in col_ptr[k]..col_ptr[k + 1] {
                let i = row_idx[p];
                positions.insert((i, k), p);
                if i != k {
                    row_entries[i].push((k, p));
                }
            }
        }
        Self {
            n,
            perm,
            iperm,
            col_ptr,
            row_idx,
            row_entries,
            positions,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Storage slot of matrix entry (a, b) in original numbering, if present.
    pub fn position(&self, a: usize, b: usize) -> Option<usize> {
        let (i, j) = (self.iperm[a], self.iperm[b]);
        let key = if i >= j { (i, j) } else { (j, i) };
        self.positions.get(&key).copied()
    }

    /// Factorizes in place: `values` holds the lower triangle of A on entry
    /// and L on exit.
    pub fn factor(&self, values: &mut [f64], work: &mut Vec<f64>) -> Result<(), NotPositiveDefinite> {
        work.clear();
        work.resize(self.n, 0.0);
        for j in 0..self.n {
            let (start, end) = (self.col_ptr[j], self.col_ptr[j + 1]);
            for p in start..end {
                work[self.row_idx[p]] = values[p];
            }
            for &(k, pos) in &self.row_entries[j] {
                let ljk = values[pos];
                for p in pos..self.col_ptr[k + 1] {
                    work[self.row_idx[p]] -= values[p] * ljk;
                }
            }
            let d = work[j];
            if !(d > 0.0) || !d.is_finite() {
                return Err(NotPositiveDefinite {
                    index: self.perm[j],
                });
            }
            let d = d.sqrt();
            values[start] = d;
            work[j] = 0.0;
            for p in start + 1..end {
                let i = self.row_idx[p];
                values[p] = work[i] / d;
                work[i] = 0.0;
            }
        }
        Ok(())
    }

    /// Solves L·Lᵀ·x = b with a factor produced by [`factor`](Self::factor).
    /// `rhs` is in original numbering and is overwritten by the solution.
    pub fn solve(&self, values: &[f64], rhs: &mut [f64], work: &mut Vec<f64>) {
        work.clear();
        work.extend(self.perm.iter().map(|&old| rhs[old]));
        for j in 0..self.n {
            let (start, end) = (self.col_ptr[j], self.col_ptr[j + 1]);
            let x = work[j] / values[start];
            work[j] = x;
            for p in start + 1..end {
                work[self.row_idx[p]] -= values[p] * x;
            }
        }
        for j in (0..self.n).rev() {
            let (start, end) = (self.col_ptr[j], self.col_ptr[j + 1]);
            let mut s = work[j];
            for p in start + 1..end {
                s -= values[p] * work[self.row_idx[p]];
            }
            work[j] = s / values[start];
        }
        for (new, &old) in self.perm.iter().enumerate() {
            rhs[old] = work[new];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense Gaussian elimination, independent of the sparse path.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let piv = (c..n)
                .max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))
                .unwrap();
            a.swap(c, piv);
            b.swap(c, piv);
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
            x[r] = (b[r] - s) / a[r][r];
        }
        x
    }

    #[test]
    fn matches_dense_solution_on_random_laplacians() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..20 {
            let n = 5 + trial * 3;
            let mut edges = Vec::new();
            for i in 1..n {
                edges.push((rng.random_range(0..i), i));
            }
            for _ in 0..n {
                let a = rng.random_range(0..n);
                let b = rng.random_range(0..n);
                if a != b {
                    edges.push((a, b));
                }
            }
            let sym = SymbolicCholesky::new(n, &edges);
            let mut dense = vec![vec![0.0; n]; n];
            let mut values = vec![0.0; sym.nnz()];
            for &(a, b) in &edges {
                let w: f64 = rng.random_range(0.1..10.0);
                dense[a][a] += w;
                dense[b][b] += w;
                dense[a][b] -= w;
                dense[b][a] -= w;
                values[sym.position(a, a).unwrap()] += w;
                values[sym.position(b, b).unwrap()] += w;
                values[sym.position(a, b).unwrap()] -= w;
            }
            for i in 0..n {
                let g = rng.random_range(0.01..1.0);
                dense[i][i] += g;
                values[sym.position(i, i).unwrap()] += g;
            }
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let expected = dense_solve(dense, b.clone());
            let mut work = Vec::new();
            sym.factor(&mut values, &mut work).unwrap();
            let mut x = b;
            sym.solve(&values, &mut x, &mut work);
            for (u, v) in x.iter().zip(&expected) {
                assert!((u - v).abs() < 1e-9 * v.abs().max(1.0), "{u} vs {v}");
            }
        }
    }

    #[test]
    fn singular_system_detected() {
        // Pure Laplacian of a path: singular.
        let sym = SymbolicCholesky::new(3, &[(0, 1), (1, 2)]);
        let mut values = vec![0.0; sym.nnz()];
        for &(a, b) in &[(0, 1), (1, 2)] {
            values[sym.position(a, a).unwrap()] += 1.0;
            values[sym.position(b, b).unwrap()] += 1.0;
            values[sym.position(a, b).unwrap()] -= 1.0;
        }
        assert!(sym.factor(&mut values, &mut Vec::new()).is_err());
    }
}
