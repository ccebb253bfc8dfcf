//! Sparse storage and the direct solver.
//!
//! Assembly produces triplets (COO) which are compressed to CSR with
//! duplicate entries summed in insertion order, so the assembled matrix is
//! bitwise reproducible run to run. The solver exploits that DG dofs on the
//! structured meshes used here are band-ordered: a banded LU with partial
//! pivoting (the LAPACK `gbtrf` storage scheme) factors the CSR matrix
//! within its bandwidth, with `kl` extra superdiagonals of fill for the row
//! swaps.
//!
//! The dense routines at the bottom (cyclic Jacobi eigenvalues, one-sided
//! Jacobi singular values) are for diagnostics and tests: coercivity spot
//! checks and basis rank verification. They favour accuracy over speed and
//! avoid forming normal equations.

use crate::scalar::Real;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    /// A pivot of the equilibrated matrix fell below the deterministic
    /// threshold `8 n eps max|RAC|`.
    #[error("matrix is singular to working precision (pivot {pivot:e} at column {col})")]
    SingularMatrix { col: usize, pivot: f64 },
    /// Non-finite value encountered in the matrix or right-hand side.
    #[error("non-finite value in linear system")]
    NonFinite,
    #[error("dimension mismatch: matrix is {nrows}x{ncols}, vector has {len}")]
    DimensionMismatch { nrows: usize, ncols: usize, len: usize },
}

/// Triplet accumulator. `push` order is preserved into CSR summation.
#[derive(Clone, Debug)]
pub struct Coo<F> {
    pub nrows: usize,
    pub ncols: usize,
    entries: Vec<(usize, usize, F)>,
}

impl<F: Real> Coo<F> {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, entries: Vec::new() }
    }

    pub fn push(&mut self, row: usize, col: usize, value: F) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn nnz_stored(&self) -> usize {
        self.entries.len()
    }

    /// Compress to CSR. Duplicates are summed in the order they were
    /// pushed, which fixes the floating-point result independent of any
    /// parallelism upstream.
    pub fn to_csr(&self) -> Csr<F> {
        let n = self.nrows;
        // Bucket triplets by row, keeping push order within each row.
        let mut row_counts = vec![0usize; n];
        for &(r, _, _) in &self.entries {
            row_counts[r] += 1;
        }
        let mut starts = vec![0usize; n + 1];
        for i in 0..n {
            starts[i + 1] = starts[i] + row_counts[i];
        }
        let mut order = vec![0usize; self.entries.len()];
        let mut cursor = starts.clone();
        for (pos, &(r, _, _)) in self.entries.iter().enumerate() {
            order[cursor[r]] = pos;
            cursor[r] += 1;
        }

        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        let mut scratch: Vec<usize> = Vec::new();
        for r in 0..n {
            scratch.clear();
            scratch.extend_from_slice(&order[starts[r]..starts[r + 1]]);
            // Stable sort by column keeps push order among duplicates.
            scratch.sort_by_key(|&pos| self.entries[pos].1);
            let mut k = 0;
            while k < scratch.len() {
                let col = self.entries[scratch[k]].1;
                let mut sum = F::zero();
                while k < scratch.len() && self.entries[scratch[k]].1 == col {
                    sum += self.entries[scratch[k]].2;
                    k += 1;
                }
                cols.push(col);
                vals.push(sum);
            }
            row_ptr.push(cols.len());
        }
        Csr { nrows: self.nrows, ncols: self.ncols, row_ptr, cols, vals }
    }
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr<F> {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<F>,
}

impl<F: Real> Csr<F> {
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn get(&self, row: usize, col: usize) -> F {
        let lo = self.row_ptr[row];
        let hi = self.row_ptr[row + 1];
        match self.cols[lo..hi].binary_search(&col) {
            Ok(k) => self.vals[lo + k],
            Err(_) => F::zero(),
        }
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[F], y: &mut [F]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let mut acc = F::zero();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[r] = acc;
        }
    }

    pub fn max_abs(&self) -> F {
        self.vals.iter().fold(F::zero(), |m, &v| m.max(v.abs()))
    }

    /// Dense row-major copy; test and diagnostic use only.
    pub fn to_dense(&self) -> Vec<F> {
        let mut dense = vec![F::zero(); self.nrows * self.ncols];
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                dense[r * self.ncols + self.cols[k]] = self.vals[k];
            }
        }
        dense
    }

    /// Half-bandwidths (kl, ku) of the stored pattern.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0usize;
        let mut ku = 0usize;
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[k];
                if c < r {
                    kl = kl.max(r - c);
                } else {
                    ku = ku.max(c - r);
                }
            }
        }
        (kl, ku)
    }
}

/// Solve `A x = b` by banded LU with partial pivoting.
///
/// The matrix is first equilibrated: rows and columns are scaled by powers
/// of two so every row and column maximum lands near one. Quasi-Trefftz
/// bases on advection- or reaction-dominated fields produce entries
/// spanning many decades (the recurrence divides by the diffusion scale),
/// and without equilibration legitimate pivots drown under the max-entry
/// threshold. Power-of-two factors make the scaling exact in binary
/// floating point, so well-scaled systems factor bit-for-bit as if
/// untouched.
///
/// Band storage holds `2 kl + ku + 1` diagonals: entry `(i, j)` lives at
/// band row `kl + ku + i - j`, and the top `kl` band rows take pivoting
/// fill. Pivots are compared against `8 n eps max|RAC|` over the
/// equilibrated matrix; falling below it reports
/// [`LinalgError::SingularMatrix`] rather than dividing noise. The
/// substitution result gets one step of iterative refinement in working
/// precision.
pub fn band_solve<F: Real>(a: &Csr<F>, b: &[F]) -> Result<Vec<F>, LinalgError> {
    let n = a.nrows;
    if a.ncols != n || b.len() != n {
        return Err(LinalgError::DimensionMismatch {
            nrows: a.nrows,
            ncols: a.ncols,
            len: b.len(),
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if !a.vals.iter().chain(b.iter()).all(|v| v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }

    // Equilibration factors: nearest power of two to 1/max of each row,
    // then of each row-scaled column. An empty or all-zero row or column
    // is structurally singular.
    let pow2_inverse = |m: F| (-m.log2().round()).exp2();
    let mut rscale = vec![F::one(); n];
    for r in 0..n {
        let mut rmax = F::zero();
        for k in a.row_ptr[r]..a.row_ptr[r + 1] {
            rmax = rmax.max(a.vals[k].abs());
        }
        if rmax == F::zero() {
            return Err(LinalgError::SingularMatrix { col: r, pivot: 0.0 });
        }
        rscale[r] = pow2_inverse(rmax);
    }
    let mut cmax = vec![F::zero(); n];
    for r in 0..n {
        for k in a.row_ptr[r]..a.row_ptr[r + 1] {
            let c = a.cols[k];
            cmax[c] = cmax[c].max((rscale[r] * a.vals[k]).abs());
        }
    }
    let mut cscale = vec![F::one(); n];
    for (j, &m) in cmax.iter().enumerate() {
        if m == F::zero() {
            return Err(LinalgError::SingularMatrix { col: j, pivot: 0.0 });
        }
        cscale[j] = pow2_inverse(m);
    }

    let (kl, ku) = a.bandwidths();
    let stride = 2 * kl + ku + 1;
    let mut ab = vec![F::zero(); stride * n];
    // Column-major bands: ab[band_row + stride * j].
    let at = |i: usize, j: usize| kl + ku + i - j + stride * j;
    let mut amax = F::zero();
    for r in 0..n {
        for k in a.row_ptr[r]..a.row_ptr[r + 1] {
            let c = a.cols[k];
            let v = rscale[r] * a.vals[k] * cscale[c];
            ab[at(r, c)] = v;
            amax = amax.max(v.abs());
        }
    }

    let tol = F::of_usize(8 * n) * F::epsilon() * amax;

    let mut piv = vec![0usize; n];
    for j in 0..n {
        let ilast = (j + kl).min(n - 1);
        let mut ip = j;
        let mut pmax = ab[at(j, j)].abs();
        for i in (j + 1)..=ilast {
            let v = ab[at(i, j)].abs();
            if v > pmax {
                pmax = v;
                ip = i;
            }
        }
        if !(pmax > tol) || !pmax.is_finite() {
            return Err(LinalgError::SingularMatrix {
                col: j,
                pivot: pmax.to_f64().unwrap_or(f64::NAN),
            });
        }
        piv[j] = ip;
        let jlast = (j + kl + ku).min(n - 1);
        if ip != j {
            for jj in j..=jlast {
                ab.swap(at(j, jj), at(ip, jj));
            }
        }
        let pivot = ab[at(j, j)];
        for i in (j + 1)..=ilast {
            let l = ab[at(i, j)] / pivot;
            ab[at(i, j)] = l;
            for jj in (j + 1)..=jlast {
                let u = ab[at(j, jj)];
                ab[at(i, jj)] -= l * u;
            }
        }
    }

    // (RAC) y = R rhs: Ly = P(R rhs), then Uy, then x = Cy.
    let substitute = |rhs: &[F]| -> Vec<F> {
        let mut x: Vec<F> = rhs.iter().zip(&rscale).map(|(&vi, &ri)| vi * ri).collect();
        for j in 0..n {
            if piv[j] != j {
                x.swap(j, piv[j]);
            }
            let xj = x[j];
            for i in (j + 1)..=(j + kl).min(n - 1) {
                x[i] -= ab[at(i, j)] * xj;
            }
        }
        for j in (0..n).rev() {
            x[j] /= ab[at(j, j)];
            let xj = x[j];
            for i in j.saturating_sub(kl + ku)..j {
                x[i] -= ab[at(i, j)] * xj;
            }
        }
        for (xj, &cj) in x.iter_mut().zip(&cscale) {
            *xj *= cj;
        }
        x
    };

    let mut x = substitute(b);
    // One step of refinement with a compensated residual (exact product
    // errors via fused multiply-add, Neumaier summation). A residual formed
    // in working precision rounds at eps |A||x| and leaves the forward
    // error on the conditioning floor; the compensated one drops solutions
    // to the eps level, so errors measured near machine precision carry no
    // factorization rounding as signal.
    let mut r = vec![F::zero(); n];
    for row in 0..n {
        let mut s = b[row];
        let mut c = F::zero();
        for k in a.row_ptr[row]..a.row_ptr[row + 1] {
            let v = a.vals[k];
            let xj = x[a.cols[k]];
            let p = v * xj;
            let perr = v.mul_add(xj, -p);
            let t = s - p;
            let serr = if s.abs() >= p.abs() { (s - t) - p } else { (-p - t) + s };
            s = t;
            c += serr - perr;
        }
        r[row] = s + c;
    }
    let d = substitute(&r);
    for (xi, &di) in x.iter_mut().zip(&d) {
        *xi += di;
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    Ok(x)
}

/// Eigenvalues of a dense symmetric matrix (row-major, `n x n`) by cyclic
/// Jacobi rotations, ascending. Input symmetry is the caller's contract.
pub fn symmetric_eigenvalues<F: Real>(a: &[F], n: usize) -> Vec<F> {
    assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let idx = |i: usize, j: usize| i * n + j;
    for _sweep in 0..60 {
        let mut off = F::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[idx(i, j)] * m[idx(i, j)];
            }
        }
        let scale = (0..n).fold(F::zero(), |s, i| s + m[idx(i, i)].abs());
        if off.sqrt() <= F::epsilon() * (scale + F::one()) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[idx(p, q)];
                if apq == F::zero() {
                    continue;
                }
                let app = m[idx(p, p)];
                let aqq = m[idx(q, q)];
                let theta = (aqq - app) / (F::of_usize(2) * apq);
                let t = {
                    let sign = if theta >= F::zero() { F::one() } else { -F::one() };
                    sign / (theta.abs() + (F::one() + theta * theta).sqrt())
                };
                let c = F::one() / (F::one() + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[idx(k, p)];
                    let akq = m[idx(k, q)];
                    m[idx(k, p)] = c * akp - s * akq;
                    m[idx(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[idx(p, k)];
                    let aqk = m[idx(q, k)];
                    m[idx(p, k)] = c * apk - s * aqk;
                    m[idx(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<F> = (0..n).map(|i| m[idx(i, i)]).collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eig
}

/// Singular values of a dense row-major `nrows x ncols` matrix by one-sided
/// Jacobi orthogonalization, descending. Works on the tall orientation so
/// column norms are the singular values directly; no normal equations, so
/// small singular values near the 1e-8 rank cutoff keep full accuracy.
pub fn singular_values<F: Real>(a: &[F], nrows: usize, ncols: usize) -> Vec<F> {
    assert_eq!(a.len(), nrows * ncols);
    let (r, c, tall) = if nrows >= ncols {
        (nrows, ncols, true)
    } else {
        (ncols, nrows, false)
    };
    // Column-major tall copy.
    let mut m = vec![F::zero(); r * c];
    for i in 0..nrows {
        for j in 0..ncols {
            let v = a[i * ncols + j];
            let (ti, tj) = if tall { (i, j) } else { (j, i) };
            m[tj * r + ti] = v;
        }
    }
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..c {
            for q in (p + 1)..c {
                let mut alpha = F::zero();
                let mut beta = F::zero();
                let mut gamma = F::zero();
                for k in 0..r {
                    let mp = m[p * r + k];
                    let mq = m[q * r + k];
                    alpha += mp * mp;
                    beta += mq * mq;
                    gamma += mp * mq;
                }
                if gamma.abs() <= F::epsilon() * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (F::of_usize(2) * gamma);
                let sign = if zeta >= F::zero() { F::one() } else { -F::one() };
                let t = sign / (zeta.abs() + (F::one() + zeta * zeta).sqrt());
                let cth = F::one() / (F::one() + t * t).sqrt();
                let sth = t * cth;
                for k in 0..r {
                    let mp = m[p * r + k];
                    let mq = m[q * r + k];
                    m[p * r + k] = cth * mp - sth * mq;
                    m[q * r + k] = sth * mp + cth * mq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<F> = (0..c)
        .map(|j| (0..r).fold(F::zero(), |s, k| s + m[j * r + k] * m[j * r + k]).sqrt())
        .collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_solve(a: &[f64], n: usize, b: &[f64]) -> Option<Vec<f64>> {
        // Plain Gaussian elimination with partial pivoting, as the oracle.
        let mut m = a.to_vec();
        let mut x = b.to_vec();
        for j in 0..n {
            let (ip, pmax) = (j..n)
                .map(|i| (i, m[i * n + j].abs()))
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())?;
            if pmax < 1e-12 {
                return None;
            }
            if ip != j {
                for c in 0..n {
                    m.swap(j * n + c, ip * n + c);
                }
                x.swap(j, ip);
            }
            for i in (j + 1)..n {
                let l = m[i * n + j] / m[j * n + j];
                for c in j..n {
                    m[i * n + c] -= l * m[j * n + c];
                }
                x[i] -= l * x[j];
            }
        }
        for j in (0..n).rev() {
            for c in (j + 1)..n {
                x[j] -= m[j * n + c] * x[c];
            }
            x[j] /= m[j * n + j];
        }
        Some(x)
    }

    #[test]
    fn csr_sums_duplicates_in_push_order() {
        let mut coo = Coo::<f64>::new(2, 2);
        coo.push(0, 0, 1.0);
        coo.push(0, 1, 2.0);
        coo.push(0, 0, 3.0);
        coo.push(1, 1, -1.0);
        coo.push(0, 0, 0.5);
        let csr = coo.to_csr();
        assert_eq!(csr.row_ptr, vec![0, 2, 3]);
        assert_eq!(csr.cols, vec![0, 1, 1]);
        // (1 + 3) + 0.5, exactly, in that association order.
        assert_eq!(csr.get(0, 0), 4.5);
        assert_eq!(csr.get(0, 1), 2.0);
        assert_eq!(csr.get(1, 0), 0.0);
        assert_eq!(csr.nnz(), 3);
    }

    #[test]
    fn band_solve_identity_and_small_band() {
        let mut coo = Coo::<f64>::new(3, 3);
        for i in 0..3 {
            coo.push(i, i, 2.0);
        }
        coo.push(0, 1, 1.0);
        coo.push(1, 2, 1.0);
        coo.push(1, 0, 1.0);
        coo.push(2, 1, 1.0);
        let a = coo.to_csr();
        // Tridiagonal [2 1; 1 2 1; 1 2], b = A * [1, 2, 3].
        let mut b = vec![0.0; 3];
        a.matvec(&[1.0, 2.0, 3.0], &mut b);
        let x = band_solve(&a, &b).unwrap();
        for (xi, ei) in x.iter().zip([1.0, 2.0, 3.0]) {
            assert!((xi - ei).abs() < 1e-14);
        }
    }

    #[test]
    fn band_solve_detects_singularity() {
        let mut coo = Coo::<f64>::new(2, 2);
        coo.push(0, 0, 1.0);
        coo.push(0, 1, 2.0);
        coo.push(1, 0, 2.0);
        coo.push(1, 1, 4.0);
        let a = coo.to_csr();
        match band_solve(&a, &[1.0, 2.0]) {
            Err(LinalgError::SingularMatrix { .. }) => {}
            other => panic!("expected SingularMatrix, got {other:?}"),
        }
    }

    #[test]
    fn band_solve_equilibrates_badly_scaled_systems() {
        // Tridiagonal M with columns rescaled over sixteen decades, the
        // shape ill-scaled bases produce. Power-of-two factors keep every
        // product exact, so the unscaled solution is recoverable to full
        // precision; the pre-equilibration pivot threshold (relative to
        // max|A| ~ 2^28) refused the 2^-27 column as singular.
        let d = [1.0, (2.0f64).powi(27), (2.0f64).powi(-27), 1.0];
        let m = |i: usize, j: usize| -> f64 {
            if i == j {
                2.0
            } else if i.abs_diff(j) == 1 {
                -1.0
            } else {
                0.0
            }
        };
        let n = 4;
        let mut coo = Coo::<f64>::new(n, n);
        for i in 0..n {
            for j in 0..n {
                if m(i, j) != 0.0 {
                    coo.push(i, j, m(i, j) * d[j]);
                }
            }
        }
        let a = coo.to_csr();
        let y_true = [1.0, 2.0, -1.0, 3.0];
        let x_true: Vec<f64> = y_true.iter().zip(&d).map(|(&y, &dj)| y / dj).collect();
        let mut b = vec![0.0; n];
        a.matvec(&x_true, &mut b);
        let x = band_solve(&a, &b).unwrap();
        for (xi, ti) in x.iter().zip(&x_true) {
            assert!((xi - ti).abs() <= 1e-12 * ti.abs(), "{x:?} vs {x_true:?}");
        }
    }

    #[test]
    fn band_solve_rejects_non_finite() {
        let mut coo = Coo::<f64>::new(1, 1);
        coo.push(0, 0, f64::NAN);
        match band_solve(&coo.to_csr(), &[1.0]) {
            Err(LinalgError::NonFinite) => {}
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn jacobi_eigenvalues_known_matrix() {
        // [[2, 1], [1, 2]] has eigenvalues 1 and 3.
        let eig = symmetric_eigenvalues::<f64>(&[2.0, 1.0, 1.0, 2.0], 2);
        assert!((eig[0] - 1.0).abs() < 1e-14);
        assert!((eig[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn jacobi_eigenvalues_trace_and_order() {
        // Symmetric 4x4 with known trace.
        let a = [
            4.0, 1.0, 0.5, 0.0,
            1.0, 3.0, 0.2, 0.1,
            0.5, 0.2, 2.0, 0.3,
            0.0, 0.1, 0.3, 1.0,
        ];
        let eig = symmetric_eigenvalues::<f64>(&a, 4);
        let trace: f64 = eig.iter().sum();
        assert!((trace - 10.0).abs() < 1e-12);
        assert!(eig.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn singular_values_known_and_rank_deficient() {
        // diag(3, 2) plus a zero third row: singular values 3, 2.
        let a = [3.0, 0.0, 0.0, 2.0, 0.0, 0.0];
        let sv = singular_values::<f64>(&a, 3, 2);
        assert!((sv[0] - 3.0).abs() < 1e-14);
        assert!((sv[1] - 2.0).abs() < 1e-14);
        // Rank-1 2x3.
        let b = [1.0, 2.0, 2.0, 2.0, 4.0, 4.0];
        let sv = singular_values::<f64>(&b, 2, 3);
        assert!(sv[0] > 1.0);
        assert!(sv[1].abs() < 1e-13);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Banded LU agrees with dense Gaussian elimination on random
        /// diagonally dominant banded systems.
        #[test]
        fn band_matches_dense(n in 1usize..12, kl in 0usize..3, ku in 0usize..3,
                              seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut coo = Coo::<f64>::new(n, n);
            let mut dense = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    if j + kl >= i && i + ku >= j {
                        let v: f64 = if i == j {
                            10.0 + rng.gen::<f64>()
                        } else {
                            rng.gen::<f64>() - 0.5
                        };
                        coo.push(i, j, v);
                        dense[i * n + j] = v;
                    }
                }
            }
            let b: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
            let x = band_solve(&coo.to_csr(), &b).unwrap();
            let y = dense_solve(&dense, n, &b).unwrap();
            for (xi, yi) in x.iter().zip(&y) {
                prop_assert!((xi - yi).abs() < 1e-10);
            }
        }

        /// Singular values squared sum to the Frobenius norm squared.
        #[test]
        fn sv_frobenius(nr in 1usize..6, nc in 1usize..6, seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<f64> = (0..nr * nc).map(|_| rng.gen::<f64>() - 0.5).collect();
            let fro2: f64 = a.iter().map(|v| v * v).sum();
            let sv = singular_values(&a, nr, nc);
            let sum2: f64 = sv.iter().map(|s| s * s).sum();
            prop_assert!((fro2 - sum2).abs() <= 1e-12 * (1.0 + fro2));
        }
    }
}
