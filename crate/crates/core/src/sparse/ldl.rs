//! Multifrontal supernodal LDL^T factorisation for symmetric positive definite matrices.

use std::any::TypeId;

use thiserror::Error;

use super::csr::CsrMatrix;
use crate::real::Real;

#[derive(Debug, Error, PartialEq)]
pub enum LdlError {
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("permutation length {got} does not match matrix size {expected}")]
    BadPermutation { expected: usize, got: usize },
    #[error("non-positive pivot {value:e} at permuted row {row}")]
    NonPositivePivot { row: usize, value: f64 },
}

const NONE: usize = usize::MAX;
/// Columns eliminated together before the trailing part of a front is updated.
const PANEL: usize = 64;

#[derive(Debug, Clone)]
pub struct LdlFactor<T> {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    nnz_l: usize,
    nodes: Vec<Supernode>,
    /// Strict lower triangles of the diagonal blocks, row-major, node after node.
    diag: Vec<T>,
    /// Shared row indices below each node.
    rows: Vec<u32>,
    /// Off-diagonal blocks, row-major (`rows × width`), node after node.
    vals: Vec<T>,
    dinv: Vec<T>,
}

/// Consecutive columns of L with identical structure below their diagonal block.
#[derive(Debug, Clone, Copy)]
struct Supernode {
    first: usize,
    width: usize,
    diag_at: usize,
    rows_at: usize,
    n_rows: usize,
    vals_at: usize,
}

impl<T: Real> LdlFactor<T> {
    /// Factorises `P A P^T = L D L^T`. Only the entries of `a` with permuted
    /// column index at or below the permuted row index are read.
    pub fn new(a: &CsrMatrix<T>, perm: Option<&[usize]>) -> Result<Self, LdlError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(LdlError::NotSquare(n, a.ncols()));
        }
        let perm: Vec<usize> = match perm {
            Some(p) if p.len() != n => return Err(LdlError::BadPermutation { expected: n, got: p.len() }),
            Some(p) => p.to_vec(),
            None => (0..n).collect(),
        };
        let b = if perm.iter().enumerate().all(|(i, &p)| i == p) { a.clone() } else { a.permute_symmetric(&perm) };
        // Row k of the lower triangle equals column k of the upper triangle.
        let (ap, ai, ax) = upper_columns(&b);

        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for &i0 in &ai[ap[j]..ap[j + 1]] {
                let mut i = i0;
                if i == j {
                    continue;
                }
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let nnz: usize = lnz.iter().sum();

        // Column j joins the node of j - 1 when struct(j - 1) = {j} ∪ struct(j).
        let mut starts = vec![0usize];
        for j in 1..n {
            if !(etree[j - 1] == j && lnz[j - 1] == lnz[j] + 1) {
                starts.push(j);
            }
        }
        if n > 0 {
            starts.push(n);
        }
        let starts = amalgamate(&starts, &etree, &lnz);
        let n_nodes = starts.len() - 1;
        let mut node_of = vec![0usize; n];
        for s in 0..n_nodes {
            node_of[starts[s]..starts[s + 1]].fill(s);
        }
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
        for s in 0..n_nodes {
            let parent = etree[starts[s + 1] - 1];
            if parent != NONE {
                children[node_of[parent]].push(s);
            }
        }
        let (cp, ci, cx) = lower_columns(n, &ap, &ai, &ax);

        // Multifrontal elimination; parents always follow their children.
        let mut nodes: Vec<Supernode> = Vec::with_capacity(n_nodes);
        let (mut diag, mut rows, mut vals) = (Vec::new(), Vec::new(), Vec::with_capacity(nnz));
        let mut dinv = vec![T::zero(); n];
        let mut pending: Vec<Vec<T>> = vec![Vec::new(); n_nodes];
        let mut mark = vec![NONE; n];
        let mut pos = vec![0usize; n];
        let (mut front, mut colk, mut scaled, mut loc) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for s in 0..n_nodes {
            let (j0, j1) = (starts[s], starts[s + 1]);
            let w = j1 - j0;
            let rows_at = rows.len();
            for c in j0..j1 {
                for &i in &ci[cp[c]..cp[c + 1]] {
                    if i >= j1 && mark[i] != s {
                        mark[i] = s;
                        rows.push(i as u32);
                    }
                }
            }
            for &ch in &children[s] {
                let nd = nodes[ch];
                for k in nd.rows_at..nd.rows_at + nd.n_rows {
                    let i = rows[k] as usize;
                    if i >= j1 && mark[i] != s {
                        mark[i] = s;
                        rows.push(i as u32);
                    }
                }
            }
            rows[rows_at..].sort_unstable();
            let m = rows.len() - rows_at;
            debug_assert_eq!(m, lnz[j1 - 1]);
            let f = w + m;
            for (t, j) in (j0..j1).enumerate() {
                pos[j] = t;
            }
            for (t, &i) in rows[rows_at..].iter().enumerate() {
                pos[i as usize] = w + t;
            }

            front.clear();
            front.resize(f * f, T::zero());
            for c in j0..j1 {
                for p in cp[c]..cp[c + 1] {
                    front[pos[ci[p]] * f + c - j0] += cx[p];
                }
            }
            for &ch in &children[s] {
                let nd = nodes[ch];
                let update = std::mem::take(&mut pending[ch]);
                let mc = nd.n_rows;
                loc.clear();
                loc.extend(rows[nd.rows_at..nd.rows_at + mc].iter().map(|&r| pos[r as usize]));
                for a in 0..mc {
                    let dst = loc[a] * f;
                    for b in 0..=a {
                        front[dst + loc[b]] += update[a * mc + b];
                    }
                }
            }

            // Blocked dense LDL^T of the first w columns; the trailing block of the
            // front ends up holding the Schur complement.
            let mut kb = 0;
            while kb < w {
                let ke = (kb + PANEL).min(w);
                for k in kb..ke {
                    let d = front[k * f + k];
                    if !(d > T::zero()) {
                        return Err(LdlError::NonPositivePivot { row: j0 + k, value: d.to_f64_lossy() });
                    }
                    let di = T::one() / d;
                    dinv[j0 + k] = di;
                    colk.clear();
                    colk.extend((k + 1..ke).map(|j| front[j * f + k]));
                    for i in k + 1..f {
                        let row = &mut front[i * f + kb..i * f + ke];
                        let l = row[k - kb] * di;
                        row[k - kb] = l;
                        let hi = i.min(ke - 1);
                        for (v, c) in row[k + 1 - kb..=hi - kb].iter_mut().zip(&colk) {
                            *v -= l * *c;
                        }
                    }
                }
                scaled.clear();
                for j in ke..f {
                    let row = &front[j * f + kb..j * f + ke];
                    scaled.extend(row.iter().zip(&dinv[j0 + kb..j0 + ke]).map(|(l, di)| *l / *di));
                }
                trailing_update(&mut front, f, kb, ke, &scaled);
                kb = ke;
            }
            let diag_at = diag.len();
            for r in 1..w {
                diag.extend_from_slice(&front[r * f..r * f + r]);
            }
            let vals_at = vals.len();
            for i in w..f {
                vals.extend_from_slice(&front[i * f..i * f + w]);
            }
            if m > 0 && etree[j1 - 1] != NONE {
                let mut update = vec![T::zero(); m * m];
                for i in 0..m {
                    let src = (w + i) * f + w;
                    update[i * m..i * m + i + 1].copy_from_slice(&front[src..src + i + 1]);
                }
                pending[s] = update;
            }
            nodes.push(Supernode { first: j0, width: w, diag_at, rows_at, n_rows: m, vals_at });
        }
        Ok(Self { n, perm, nnz_l: nnz, nodes, diag, rows, vals, dinv })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored off-diagonal entries of L.
    pub fn nnz_l(&self) -> usize {
        self.nnz_l
    }

    /// Number of supernodes in the factor.
    pub fn n_supernodes(&self) -> usize {
        self.nodes.len()
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        let mut acc = Vec::new();
        for node in &self.nodes {
            let (j0, s) = (node.first, node.width);
            let diag = &self.diag[node.diag_at..node.diag_at + s * (s - 1) / 2];
            let xs = &mut x[j0..j0 + s];
            for r in 1..s {
                let row = &diag[r * (r - 1) / 2..r * (r - 1) / 2 + r];
                let d: T = row.iter().zip(xs[..r].iter()).map(|(l, v)| *l * *v).sum();
                xs[r] -= d;
            }
            let rows = &self.rows[node.rows_at..node.rows_at + node.n_rows];
            let vals = &self.vals[node.vals_at..node.vals_at + node.n_rows * s];
            acc.clear();
            acc.extend_from_slice(&x[j0..j0 + s]);
            for (&r, block) in rows.iter().zip(vals.chunks_exact(s)) {
                let d: T = block.iter().zip(&acc).map(|(l, v)| *l * *v).sum();
                x[r as usize] -= d;
            }
        }
        for (xi, di) in x.iter_mut().zip(&self.dinv) {
            *xi *= *di;
        }
        for node in self.nodes.iter().rev() {
            let (j0, s) = (node.first, node.width);
            let rows = &self.rows[node.rows_at..node.rows_at + node.n_rows];
            let vals = &self.vals[node.vals_at..node.vals_at + node.n_rows * s];
            acc.clear();
            acc.resize(s, T::zero());
            for (&r, block) in rows.iter().zip(vals.chunks_exact(s)) {
                let xr = x[r as usize];
                for (a, l) in acc.iter_mut().zip(block) {
                    *a += *l * xr;
                }
            }
            let diag = &self.diag[node.diag_at..node.diag_at + s * (s - 1) / 2];
            let xs = &mut x[j0..j0 + s];
            for (v, a) in xs.iter_mut().zip(&acc) {
                *v -= *a;
            }
            for r in (1..s).rev() {
                let row = &diag[r * (r - 1) / 2..r * (r - 1) / 2 + r];
                let xr = xs[r];
                for (v, l) in xs[..r].iter_mut().zip(row) {
                    *v -= *l * xr;
                }
            }
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = x[new];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Merges each node into the next one when that node is its parent and the
/// merged node stores few explicit zeros. Returns the new node boundaries.
fn amalgamate(starts: &[usize], etree: &[usize], lnz: &[usize]) -> Vec<usize> {
    let stored = |w: usize, m: usize| w * (w - 1) / 2 + w * m;
    let mut out = vec![0usize];
    let Some((&first, rest)) = starts.split_first() else { return out };
    let mut cur = (first, 0usize, 0usize); // first column, width, true nonzeros
    let mut prev_end = first;
    for &end in rest {
        let (j0, w) = (prev_end, end - prev_end);
        let actual = stored(w, lnz[end - 1]);
        if cur.1 > 0 {
            let parent = etree[j0 - 1];
            let merged_w = cur.1 + w;
            // The count below is only meaningful when the parent lies in the next node.
            let adjacent = parent != NONE && parent < end;
            let merged = stored(merged_w, lnz[end - 1]);
            if adjacent && ((merged - (cur.2 + actual)) * 20 <= merged || merged_w <= 4) {
                cur = (cur.0, merged_w, cur.2 + actual);
                prev_end = end;
                continue;
            }
            out.push(j0);
        }
        cur = (j0, w, actual);
        prev_end = end;
    }
    out.push(prev_end);
    out
}

/// Row blocks of the trailing update; each block stops at the diagonal.
const UPDATE_ROWS: usize = 96;

/// `F[i][j] -= Σ_k F[i][k] S[j][k]` over `k` in `kb..ke` and `ke <= j <= i < f`,
/// where row `j - ke` of `scaled` holds `S[j][kb..ke]`. Entries above the diagonal
/// may be overwritten with junk.
fn trailing_update<T: Real>(front: &mut [T], f: usize, kb: usize, ke: usize, scaled: &[T]) {
    let nb = ke - kb;
    let rows = f - ke;
    let mut r0 = 0;
    while r0 < rows {
        let r1 = (r0 + UPDATE_ROWS).min(rows);
        let a_at = (ke + r0) * f + kb;
        let c_at = (ke + r0) * f + ke;
        if !gemm_sub(front, a_at, c_at, f, r1 - r0, r1, nb, scaled) {
            for i in r0..r1 {
                let (head, tail) = front[(ke + i) * f..(ke + i + 1) * f].split_at_mut(ke);
                let li = &head[kb..];
                for (v, sj) in tail[..r1].iter_mut().zip(scaled.chunks_exact(nb)) {
                    *v -= dot(li, sj);
                }
            }
        }
        r0 = r1;
    }
}

/// `C -= A B^T` through an optimised kernel for `f32` and `f64`; `A` (`m × k`) and
/// `C` (`m × n`) live in `front` with row stride `ld`, `B` (`n × k`) is `b`.
/// Returns false for scalar types without a kernel.
#[allow(clippy::too_many_arguments)]
fn gemm_sub<T: Real>(
    front: &mut [T],
    a_at: usize,
    c_at: usize,
    ld: usize,
    m: usize,
    n: usize,
    k: usize,
    b: &[T],
) -> bool {
    assert!(a_at + (m - 1) * ld + k <= front.len() && c_at + (m - 1) * ld + n <= front.len() && b.len() >= n * k);
    let base = front.as_mut_ptr();
    let (ld, kk) = (ld as isize, k as isize);
    // SAFETY: the bounds were checked above, A and C occupy disjoint columns of the
    // same rows, and the pointer casts only happen when `T` is the target type.
    unsafe {
        let (a, c) = (base.add(a_at) as *const T, base.add(c_at));
        if TypeId::of::<T>() == TypeId::of::<f64>() {
            matrixmultiply::dgemm(m, k, n, -1.0, a.cast(), ld, 1, b.as_ptr().cast(), 1, kk, 1.0, c.cast(), ld, 1);
            true
        } else if TypeId::of::<T>() == TypeId::of::<f32>() {
            matrixmultiply::sgemm(m, k, n, -1.0, a.cast(), ld, 1, b.as_ptr().cast(), 1, kk, 1.0, c.cast(), ld, 1);
            true
        } else {
            false
        }
    }
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let split = a.len() / 4 * 4;
    let mut acc = [T::zero(); 4];
    for (x, y) in a[..split].chunks_exact(4).zip(b[..split].chunks_exact(4)) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in a[split..].iter().zip(&b[split..]) {
        sum += *x * *y;
    }
    sum
}

/// CSC arrays of the lower triangle, built from the upper-triangle columns.
fn lower_columns<T: Real>(n: usize, ap: &[usize], ai: &[usize], ax: &[T]) -> (Vec<usize>, Vec<usize>, Vec<T>) {
    let mut cp = vec![0usize; n + 1];
    for &c in ai {
        cp[c + 1] += 1;
    }
    for c in 0..n {
        cp[c + 1] += cp[c];
    }
    let mut next = cp[..n].to_vec();
    let mut ci = vec![0usize; ai.len()];
    let mut cx = vec![T::zero(); ai.len()];
    for k in 0..n {
        for p in ap[k]..ap[k + 1] {
            let c = ai[p];
            ci[next[c]] = k;
            cx[next[c]] = ax[p];
            next[c] += 1;
        }
    }
    (cp, ci, cx)
}

/// CSC arrays of the upper triangle of a symmetric CSR matrix.
fn upper_columns<T: Real>(b: &CsrMatrix<T>) -> (Vec<usize>, Vec<usize>, Vec<T>) {
    let n = b.nrows();
    let mut ap = vec![0usize];
    let mut ai = Vec::new();
    let mut ax = Vec::new();
    for k in 0..n {
        let (cols, vals) = b.row(k);
        for (&c, &v) in cols.iter().zip(vals) {
            if c <= k {
                ai.push(c);
                ax.push(v);
            }
        }
        ap.push(ai.len());
    }
    (ap, ai, ax)
}
