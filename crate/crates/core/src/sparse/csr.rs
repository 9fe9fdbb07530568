use crate::real::Real;

/// Compressed sparse row matrix with sorted, duplicate-free column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) outside {nrows}x{ncols}");
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![T::zero(); triplets.len()];
        for &(r, c, v) in triplets {
            let p = next[r];
            cols[p] = c;
            vals[p] = v;
            next[r] += 1;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        indptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for r in 0..nrows {
            order.clear();
            order.extend(counts[r]..counts[r + 1]);
            order.sort_by_key(|&p| cols[p]);
            let mut last = usize::MAX;
            for &p in &order {
                if cols[p] == last {
                    *values.last_mut().expect("a previous entry exists") += vals[p];
                } else {
                    indices.push(cols[p]);
                    values.push(vals[p]);
                    last = cols[p];
                }
            }
            indptr.push(indices.len());
        }
        Self { nrows, ncols, indptr, indices, values }
    }

    pub fn identity(n: usize) -> Self {
        Self { nrows: n, ncols: n, indptr: (0..=n).collect(), indices: (0..n).collect(), values: vec![T::one(); n] }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn row(&self, r: usize) -> (&[usize], &[T]) {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(p) => vals[p],
            Err(_) => T::zero(),
        }
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[T], y: &mut [T]) {
        for (r, yr) in y.iter_mut().enumerate().take(self.nrows) {
            let mut s = T::zero();
            for p in self.indptr[r]..self.indptr[r + 1] {
                s += self.values[p] * x[self.indices[p]];
            }
            *yr = s;
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `y += alpha A x`.
    pub fn mul_vec_add(&self, alpha: T, x: &[T], y: &mut [T]) {
        for (r, yr) in y.iter_mut().enumerate().take(self.nrows) {
            let mut s = T::zero();
            for p in self.indptr[r]..self.indptr[r + 1] {
                s += self.values[p] * x[self.indices[p]];
            }
            *yr += alpha * s;
        }
    }

    pub fn transpose(&self) -> Self {
        let mut trips = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for p in self.indptr[r]..self.indptr[r + 1] {
                trips.push((self.indices[p], r, self.values[p]));
            }
        }
        Self::from_triplets(self.ncols, self.nrows, &trips)
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows, "inner dimensions differ");
        let mut acc = vec![T::zero(); other.ncols];
        let mut mark = vec![usize::MAX; other.ncols];
        let mut indptr = vec![0usize];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut cols: Vec<usize> = Vec::new();
        for r in 0..self.nrows {
            cols.clear();
            for p in self.indptr[r]..self.indptr[r + 1] {
                let k = self.indices[p];
                let a = self.values[p];
                for q in other.indptr[k]..other.indptr[k + 1] {
                    let c = other.indices[q];
                    if mark[c] != r {
                        mark[c] = r;
                        acc[c] = T::zero();
                        cols.push(c);
                    }
                    acc[c] += a * other.values[q];
                }
            }
            cols.sort_unstable();
            for &c in &cols {
                indices.push(c);
                values.push(acc[c]);
            }
            indptr.push(indices.len());
        }
        Self { nrows: self.nrows, ncols: other.ncols, indptr, indices, values }
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: T, other: &Self) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut trips = Vec::with_capacity(self.nnz() + other.nnz());
        for r in 0..self.nrows {
            for p in self.indptr[r]..self.indptr[r + 1] {
                trips.push((r, self.indices[p], self.values[p]));
            }
            for p in other.indptr[r]..other.indptr[r + 1] {
                trips.push((r, other.indices[p], alpha * other.values[p]));
            }
        }
        Self::from_triplets(self.nrows, self.ncols, &trips)
    }

    /// Symmetric permutation `P A P^T` where `perm[new] = old`.
    pub fn permute_symmetric(&self, perm: &[usize]) -> Self {
        let n = self.nrows;
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut trips = Vec::with_capacity(self.nnz());
        for r in 0..n {
            for p in self.indptr[r]..self.indptr[r + 1] {
                trips.push((inv[r], inv[self.indices[p]], self.values[p]));
            }
        }
        Self::from_triplets(n, n, &trips)
    }

    /// Principal submatrix on the given (sorted or not) index set.
    pub fn submatrix(&self, idx: &[usize]) -> Self {
        let mut pos = vec![usize::MAX; self.ncols];
        for (i, &g) in idx.iter().enumerate() {
            pos[g] = i;
        }
        let mut trips = Vec::new();
        for (i, &g) in idx.iter().enumerate() {
            for p in self.indptr[g]..self.indptr[g + 1] {
                let j = pos[self.indices[p]];
                if j != usize::MAX {
                    trips.push((i, j, self.values[p]));
                }
            }
        }
        Self::from_triplets(idx.len(), idx.len(), &trips)
    }

    /// Largest absolute asymmetry `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for r in 0..self.nrows {
            for p in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[p];
                worst = worst.max((self.values[p] - self.get(c, r)).abs());
            }
        }
        worst
    }

    /// Replaces row and column `k` by the identity row/column.
    pub fn pin_dof(&mut self, k: usize) {
        for r in 0..self.nrows {
            for p in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[p];
                if r == k || c == k {
                    self.values[p] = if r == c { T::one() } else { T::zero() };
                }
            }
        }
    }
}
