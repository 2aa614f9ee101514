//! Cyclic tridiagonal systems and a few dense helpers.
//!
//! A cyclic tridiagonal matrix stores, for every row `i`, the coefficients of
//! `x[i-1]`, `x[i]` and `x[i+1]` with indices taken modulo `n`. Solves go
//! through a pivoted tridiagonal LU corrected by the Sherman-Morrison formula.

/// Returned when a factorization meets an exactly singular pivot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SingularMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct CyclicTridiagonal {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl CyclicTridiagonal {
    /// `lower[i]` multiplies `x[i-1]`, `upper[i]` multiplies `x[i+1]` (cyclically).
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Self {
        let n = diag.len();
        assert!(n >= 3, "cyclic tridiagonal needs at least 3 rows");
        assert_eq!(lower.len(), n);
        assert_eq!(upper.len(), n);
        Self { lower, diag, upper }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Entry `(i, j)`; zero outside the cyclic band.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let n = self.len();
        let mut v = 0.0;
        if i == j {
            v += self.diag[i];
        }
        if j == (i + n - 1) % n {
            v += self.lower[i];
        }
        if j == (i + 1) % n {
            v += self.upper[i];
        }
        v
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        assert_eq!(x.len(), n);
        (0..n)
            .map(|i| {
                let im = if i == 0 { n - 1 } else { i - 1 };
                let ip = if i + 1 == n { 0 } else { i + 1 };
                self.lower[i] * x[im] + self.diag[i] * x[i] + self.upper[i] * x[ip]
            })
            .collect()
    }

    /// Max |A_ij - A_ji| over the band.
    pub fn asymmetry(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|i| (self.upper[i] - self.lower[(i + 1) % n]).abs())
            .fold(0.0, f64::max)
    }

    /// Infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.len())
            .map(|i| self.lower[i].abs() + self.diag[i].abs() + self.upper[i].abs())
            .fold(0.0, f64::max)
    }

    /// Copy with `shift[i]` added to the diagonal.
    pub fn add_diagonal(&self, shift: &[f64]) -> Self {
        assert_eq!(shift.len(), self.len());
        let diag = self.diag.iter().zip(shift).map(|(d, s)| d + s).collect();
        Self { lower: self.lower.clone(), diag, upper: self.upper.clone() }
    }

    pub fn factor(&self) -> Result<CyclicFactor, SingularMatrix> {
        CyclicFactor::new(self)
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, SingularMatrix> {
        Ok(self.factor()?.solve(rhs))
    }

    /// Number of negative pivots of the LDL^T factorization of `A - shift * diag(weight)`.
    ///
    /// By Sylvester's law of inertia this counts the eigenvalues of the
    /// symmetric pencil `(A, diag(weight))` below `shift` (for positive weights).
    /// Only the upper band is read, so the matrix is taken to be symmetric.
    pub fn count_eigenvalues_below(&self, shift: f64, weight: &[f64]) -> usize {
        let n = self.len();
        assert_eq!(weight.len(), n);
        let e = &self.upper;
        let tiny = f64::MIN_POSITIVE.sqrt();
        let guard = |p: f64| if p == 0.0 { tiny } else { p };

        let mut negatives = 0;
        let mut pivot = guard(self.diag[0] - shift * weight[0]);
        // entry in the last column of the row being eliminated
        let mut border = e[n - 1];
        let mut last = self.diag[n - 1] - shift * weight[n - 1];
        for k in 1..n - 1 {
            if pivot < 0.0 {
                negatives += 1;
            }
            let l = e[k - 1] / pivot;
            last -= border * border / pivot;
            let next_pivot = self.diag[k] - shift * weight[k] - e[k - 1] * l;
            let coupling = if k == n - 2 { e[n - 2] } else { 0.0 };
            border = coupling - l * border;
            pivot = guard(next_pivot);
        }
        if pivot < 0.0 {
            negatives += 1;
        }
        last -= border * border / pivot;
        if last < 0.0 {
            negatives += 1;
        }
        negatives
    }
}

/// Tridiagonal LU with partial pivoting (the `gttrf` layout).
#[derive(Debug, Clone)]
struct TridiagonalLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagonalLu {
    fn new(mut dl: Vec<f64>, mut d: Vec<f64>, mut du: Vec<f64>) -> Result<Self, SingularMatrix> {
        let n = d.len();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n - 1 {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    return Err(SingularMatrix);
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        if d[n - 1] == 0.0 || !d[n - 1].is_finite() {
            return Err(SingularMatrix);
        }
        Ok(Self { dl, d, du, du2, swapped })
    }

    fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.d.len();
        for i in 0..n - 1 {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        for i in (0..n - 2).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}

/// Reusable factorization of a cyclic tridiagonal matrix.
#[derive(Debug, Clone)]
pub struct CyclicFactor {
    lu: TridiagonalLu,
    // Sherman-Morrison data: A = T + u v^T with v = (1, 0, .., 0, v_last)
    z: Vec<f64>,
    v_last: f64,
    denom: f64,
}

impl CyclicFactor {
    fn new(a: &CyclicTridiagonal) -> Result<Self, SingularMatrix> {
        let n = a.len();
        let alpha = a.upper[n - 1]; // A[n-1][0]
        let beta = a.lower[0]; // A[0][n-1]
        let gamma = if a.diag[0] != 0.0 { -a.diag[0] } else { 1.0 };

        let mut d = a.diag.clone();
        d[0] -= gamma;
        d[n - 1] -= alpha * beta / gamma;
        let dl = a.lower[1..].to_vec();
        let du = a.upper[..n - 1].to_vec();
        let lu = TridiagonalLu::new(dl, d, du)?;

        let mut z = vec![0.0; n];
        z[0] = gamma;
        z[n - 1] = alpha;
        lu.solve_in_place(&mut z);
        let v_last = beta / gamma;
        let denom = 1.0 + z[0] + v_last * z[n - 1];
        if denom == 0.0 || !denom.is_finite() {
            return Err(SingularMatrix);
        }
        Ok(Self { lu, z, v_last, denom })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut y = rhs.to_vec();
        self.solve_in_place(&mut y);
        y
    }

    pub fn solve_in_place(&self, y: &mut [f64]) {
        let n = self.len();
        assert_eq!(y.len(), n);
        self.lu.solve_in_place(y);
        let t = (y[0] + self.v_last * y[n - 1]) / self.denom;
        for (yi, zi) in y.iter_mut().zip(&self.z) {
            *yi -= t * zi;
        }
    }
}

/// Solve a small dense system `A x = b` (row-major `A`, partial pivoting).
pub fn dense_solve(mut a: Vec<f64>, mut b: Vec<f64>) -> Result<Vec<f64>, SingularMatrix> {
    let n = b.len();
    assert_eq!(a.len(), n * n);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .unwrap();
        if a[piv * n + col] == 0.0 {
            return Err(SingularMatrix);
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        for row in col + 1..n {
            let m = a[row * n + col] / a[col * n + col];
            if m == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= m * a[col * n + k];
            }
            b[row] -= m * b[col];
        }
    }
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row * n + k] * b[k]).sum();
        b[row] = (b[row] - s) / a[row * n + row];
    }
    Ok(b)
}

/// Inverse of a small dense matrix (row-major).
pub fn dense_inverse(a: &[f64], n: usize) -> Result<Vec<f64>, SingularMatrix> {
    let mut inv = vec![0.0; n * n];
    for col in 0..n {
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        let x = dense_solve(a.to_vec(), e)?;
        for row in 0..n {
            inv[row * n + col] = x[row];
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense(a: &CyclicTridiagonal) -> Vec<f64> {
        let n = a.len();
        (0..n * n).map(|k| a.entry(k / n, k % n)).collect()
    }

    #[test]
    fn solves_laplacian_plus_identity() {
        let n = 32;
        let h = 1.0 / n as f64;
        let a = CyclicTridiagonal::new(
            vec![-1.0 / (h * h); n],
            vec![2.0 / (h * h) + 1.0; n],
            vec![-1.0 / (h * h); n],
        );
        let x = a.solve(&vec![1.0; n]).unwrap();
        for xi in x {
            assert!((xi - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_constant_kernel_detected_by_inertia() {
        let n = 20;
        let a = CyclicTridiagonal::new(vec![-1.0; n], vec![2.0; n], vec![-1.0; n]);
        let w = vec![1.0; n];
        assert_eq!(a.count_eigenvalues_below(-1e-9, &w), 0);
        assert_eq!(a.count_eigenvalues_below(1e-9, &w), 1);
        // spectrum of the cyclic second difference is 2 - 2cos(2 pi k / n)
        let second = 2.0 - 2.0 * (2.0 * std::f64::consts::PI / n as f64).cos();
        assert_eq!(a.count_eigenvalues_below(second + 1e-9, &w), 3);
    }

    #[test]
    fn indefinite_needs_pivoting() {
        // zero diagonal: plain Thomas would divide by zero
        let n = 6;
        let a = CyclicTridiagonal::new(vec![1.0; n], vec![0.0, 0.5, 0.0, 0.3, 0.0, 2.0], vec![2.0; n]);
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64) - 2.5).collect();
        let b = a.apply(&x_true);
        let x = a.solve(&b).unwrap();
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12, "{u} vs {v}");
        }
    }

    #[test]
    fn dense_inverse_roundtrip() {
        let a = vec![4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0];
        let inv = dense_inverse(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| a[i * 3 + k] * inv[k * 3 + j]).sum();
                assert!((s - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }

    proptest! {
        #[test]
        fn solve_matches_apply(
            n in 3usize..40,
            seed in prop::collection::vec(-1.0f64..1.0, 120),
        ) {
            let lower: Vec<f64> = (0..n).map(|i| seed[i]).collect();
            let upper: Vec<f64> = (0..n).map(|i| seed[40 + i]).collect();
            let diag: Vec<f64> = (0..n).map(|i| 3.0 + seed[80 + i]).collect();
            let a = CyclicTridiagonal::new(lower, diag, upper);
            let x_true: Vec<f64> = (0..n).map(|i| seed[(i * 7) % 120]).collect();
            let x = a.solve(&a.apply(&x_true)).unwrap();
            for (u, v) in x.iter().zip(&x_true) {
                prop_assert!((u - v).abs() < 1e-10);
            }
        }

        #[test]
        fn inertia_matches_dense_spectrum_sign(
            n in 3usize..12,
            seed in prop::collection::vec(-1.0f64..1.0, 24),
            shift in -2.0f64..4.0,
        ) {
            let e: Vec<f64> = (0..n).map(|i| seed[i]).collect();
            let lower: Vec<f64> = (0..n).map(|i| e[(i + n - 1) % n]).collect();
            let diag: Vec<f64> = (0..n).map(|i| 1.0 + seed[12 + i]).collect();
            let a = CyclicTridiagonal::new(lower, diag, e);
            // count via dense Gaussian elimination on A - shift I (symmetric, no pivoting issue
            // for the determinant sign test): compare positive-definiteness only
            let count = a.count_eigenvalues_below(shift, &vec![1.0; n]);
            let mut m = dense(&a);
            for i in 0..n { m[i * n + i] -= shift; }
            // Cholesky succeeds iff all eigenvalues > 0
            let mut pd = true;
            let mut l = vec![0.0; n * n];
            'outer: for j in 0..n {
                let s: f64 = (0..j).map(|k| l[j * n + k] * l[j * n + k]).sum();
                let d = m[j * n + j] - s;
                if d <= 1e-12 { pd = false; break 'outer; }
                l[j * n + j] = d.sqrt();
                for i in j + 1..n {
                    let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
                    l[i * n + j] = (m[i * n + j] - s) / l[j * n + j];
                }
            }
            if pd { prop_assert_eq!(count, 0); } else { prop_assert!(count >= 1 || m.iter().any(|v| v.is_nan())); }
        }
    }
}
