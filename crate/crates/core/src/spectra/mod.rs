//! Gram matrices, symmetric eigenvalues, empirical spectral distributions
//! and their Stieltjes transforms.

mod eigen;

use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::EmpiricalDistribution;

/// Relative asymmetry accepted by the eigensolver.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// A real `p x n` data matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    p: usize,
    n: usize,
    entries: Vec<f64>,
}

impl DataMatrix {
    pub fn new(p: usize, n: usize, entries: Vec<f64>) -> Result<Self> {
        if p == 0 || n == 0 {
            return Err(Error::DimensionMismatch(format!("empty data matrix {p}x{n}")));
        }
        if entries.len() != p * n {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {p}x{n} matrix",
                entries.len()
            )));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::DimensionMismatch("data matrix has non-finite entries".into()));
        }
        Ok(DataMatrix { p, n, entries })
    }

    pub fn zeros(p: usize, n: usize) -> Self {
        DataMatrix {
            p,
            n,
            entries: vec![0.0; p * n],
        }
    }

    /// Builds a matrix from its columns.
    pub fn from_columns(p: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let n = columns.len();
        let mut entries = vec![0.0; p * n];
        for (j, col) in columns.iter().enumerate() {
            if col.len() != p {
                return Err(Error::DimensionMismatch(format!(
                    "column {j} has length {} (expected {p})",
                    col.len()
                )));
            }
            for (i, &x) in col.iter().enumerate() {
                entries[i * n + j] = x;
            }
        }
        DataMatrix::new(p, n, entries)
    }

    pub fn rows(&self) -> usize {
        self.p
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.p).map(|i| self.get(i, j)).collect()
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Sum of squared entries.
    pub fn frobenius_sq(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum()
    }

    /// Columns reordered by `order`.
    pub fn permute_columns(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n {
            return Err(Error::DimensionMismatch("permutation length".into()));
        }
        let mut entries = vec![0.0; self.p * self.n];
        for i in 0..self.p {
            for (dst, &src) in order.iter().enumerate() {
                entries[i * self.n + dst] = self.get(i, src);
            }
        }
        DataMatrix::new(self.p, self.n, entries)
    }
}

/// A dense symmetric matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymmetricMatrix {
    /// Accepts any square matrix; symmetry is checked by the eigensolver.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {dim}x{dim} matrix",
                data.len()
            )));
        }
        Ok(SymmetricMatrix { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        SymmetricMatrix::new(dim, data)
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let dim = values.len();
        let mut data = vec![0.0; dim * dim];
        for (i, v) in values.iter().enumerate() {
            data[i * dim + i] = *v;
        }
        SymmetricMatrix { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Largest `|a_ij - a_ji|` relative to `max(1, max |a_ij|)`.
    pub fn asymmetry(&self) -> f64 {
        let mut gap: f64 = 0.0;
        let mut size: f64 = 1.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                size = size.max(self.get(i, j).abs());
                if j > i {
                    gap = gap.max((self.get(i, j) - self.get(j, i)).abs());
                }
            }
        }
        gap / size
    }

    /// `A v` for a vector `v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| {
                self.data[i * self.dim..(i + 1) * self.dim]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }
}

/// `S = X X^T / n`.
pub fn gram_covariance(x: &DataMatrix) -> SymmetricMatrix {
    gram_scaled(x, x.n as f64)
}

/// `S = X X^T / divisor`, computed on the upper triangle and mirrored so
/// the result is exactly symmetric.
pub fn gram_scaled(x: &DataMatrix, divisor: f64) -> SymmetricMatrix {
    let p = x.p;
    let upper: Vec<Vec<f64>> = (0..p)
        .into_par_iter()
        .map(|i| {
            let ri = x.row(i);
            (i..p)
                .map(|k| ri.iter().zip(x.row(k)).map(|(a, b)| a * b).sum::<f64>() / divisor)
                .collect()
        })
        .collect();
    let mut data = vec![0.0; p * p];
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let k = i + off;
            data[i * p + k] = v;
            data[k * p + i] = v;
        }
    }
    SymmetricMatrix { dim: p, data }
}

fn check_symmetric(s: &SymmetricMatrix) -> Result<()> {
    let asym = s.asymmetry();
    if asym > SYMMETRY_TOLERANCE {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// Full spectrum of a symmetric matrix, ascending.
pub fn eigenvalues_symmetric(s: &SymmetricMatrix) -> Result<Vec<f64>> {
    check_symmetric(s)?;
    Ok(eigen::symmetric_eigen(s.data.clone(), s.dim, false)?.values)
}

/// Eigenvalues (ascending) and the matching unit eigenvectors.
pub fn eigen_symmetric(s: &SymmetricMatrix) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    check_symmetric(s)?;
    let n = s.dim;
    let dec = eigen::symmetric_eigen(s.data.clone(), n, true)?;
    let flat = dec.vectors.unwrap_or_default();
    let vectors = (0..n).map(|j| flat[j * n..(j + 1) * n].to_vec()).collect();
    Ok((dec.values, vectors))
}

/// Sorted eigenvalues of a Gram matrix with dimension metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Esd {
    pub p: usize,
    pub n: usize,
    pub eigenvalues: Vec<f64>,
}

/// Roundoff allowance for negative eigenvalues of a PSD matrix.
pub fn clamp_epsilon(lambda_max: f64) -> f64 {
    1e-8 * lambda_max.abs().max(1.0)
}

/// ESD of `s`; `n` is the number of columns behind the Gram matrix.
///
/// Values in `[-eps, 0)` are clamped to zero, as are the `p - n` smallest
/// values when `n < p` and they lie within `eps` of zero.
pub fn esd(s: &SymmetricMatrix, n: usize) -> Result<Esd> {
    let mut eigenvalues = eigenvalues_symmetric(s)?;
    let top = eigenvalues.last().copied().unwrap_or(0.0);
    let eps = clamp_epsilon(top);
    // rank(S) <= n, so the lowest p - n values are zero up to roundoff
    let deficient = s.dim.saturating_sub(n);
    for (k, v) in eigenvalues.iter_mut().enumerate() {
        if (*v < 0.0 || k < deficient) && v.abs() <= eps {
            *v = 0.0;
        }
    }
    Ok(Esd {
        p: s.dim,
        n,
        eigenvalues,
    })
}

impl Esd {
    pub fn mean(&self) -> f64 {
        self.eigenvalues.iter().sum::<f64>() / self.eigenvalues.len().max(1) as f64
    }

    pub fn distribution(&self) -> Result<EmpiricalDistribution> {
        EmpiricalDistribution::new(self.eigenvalues.clone())
    }

    /// One eigenvalue per line under a `value` header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("value\n");
        for v in &self.eigenvalues {
            let _ = writeln!(out, "{v}");
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("ESD serializes")
    }
}

/// `(1/p) sum_j 1 / (lambda_j - z)`.
pub fn empirical_stieltjes(e: &Esd, z: Complex64) -> Result<Complex64> {
    if !(z.im > 0.0) {
        return Err(Error::LowerHalfPlane(z.im));
    }
    let sum: Complex64 = e.eigenvalues.iter().map(|&l| 1.0 / (l - z)).sum();
    Ok(sum / e.eigenvalues.len() as f64)
}

/// Histogram with heights normalized by the total eigenvalue count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub heights: Vec<f64>,
}

impl Histogram {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Height of the bin containing `x`, zero outside the range.
    pub fn height_at(&self, x: f64) -> f64 {
        let (lo, hi) = (self.edges[0], *self.edges.last().unwrap());
        if x < lo || x > hi {
            return 0.0;
        }
        let bins = self.heights.len();
        let k = (((x - lo) / (hi - lo)) * bins as f64).floor() as usize;
        self.heights[k.min(bins - 1)]
    }
}

/// Equal-width histogram on `[lo, hi]`; the last bin is closed on the right.
pub fn histogram(e: &Esd, bins: usize, lo: f64, hi: f64) -> Result<Histogram> {
    if bins == 0 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::BadRange(format!("{bins} bins on [{lo}, {hi}]")));
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in &e.eigenvalues {
        if v < lo || v > hi {
            continue;
        }
        let k = (((v - lo) / (hi - lo)) * bins as f64).floor() as usize;
        counts[k.min(bins - 1)] += 1;
    }
    let total = e.eigenvalues.len() as f64;
    let edges = (0..=bins).map(|k| lo + k as f64 * width).collect();
    let heights = counts.iter().map(|&c| c as f64 / (total * width)).collect();
    Ok(Histogram { edges, heights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(p: usize, n: usize, seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = (0..p * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        DataMatrix::new(p, n, entries).unwrap()
    }

    #[test]
    fn gram_examples() {
        let id = DataMatrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let s = gram_covariance(&id);
        assert_eq!(s.data(), &[0.5, 0.0, 0.0, 0.5]);

        let col = DataMatrix::new(2, 1, vec![1.0, 1.0]).unwrap();
        assert_eq!(gram_covariance(&col).data(), &[1.0, 1.0, 1.0, 1.0]);

        let x = random_matrix(7, 11, 3);
        let direct: f64 = x.entries().iter().map(|v| v * v).sum::<f64>() / 11.0;
        assert_abs_diff_eq!(gram_covariance(&x).trace(), direct, epsilon = 1e-13);
    }

    #[test]
    fn eigenvalue_examples() {
        let d = SymmetricMatrix::diagonal(&[3.0, 1.0, 2.0]);
        assert_eq!(eigenvalues_symmetric(&d).unwrap(), vec![1.0, 2.0, 3.0]);

        let two = SymmetricMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let ev = eigenvalues_symmetric(&two).unwrap();
        assert_abs_diff_eq!(ev[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ev[1], 3.0, epsilon = 1e-14);

        let s = gram_covariance(&random_matrix(50, 80, 9));
        let sum: f64 = eigenvalues_symmetric(&s).unwrap().iter().sum();
        assert!((sum - s.trace()).abs() <= 1e-8 * s.trace());

        let bad = SymmetricMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(eigenvalues_symmetric(&bad), Err(Error::NotSymmetric(_))));

        assert!(eigenvalues_symmetric(&SymmetricMatrix::diagonal(&[])).unwrap().is_empty());
        assert_eq!(eigenvalues_symmetric(&SymmetricMatrix::diagonal(&[5.0])).unwrap(), vec![5.0]);
    }

    #[test]
    fn eigenpair_residuals() {
        for (p, n, seed) in [(1, 3, 1), (2, 1, 2), (9, 4, 3), (40, 60, 4), (33, 10, 5)] {
            let s = gram_covariance(&random_matrix(p, n, seed));
            let (values, vectors) = eigen_symmetric(&s).unwrap();
            let fro = s.frobenius();
            for (lam, v) in values.iter().zip(&vectors) {
                let sv = s.apply(v);
                let res: f64 = sv
                    .iter()
                    .zip(v)
                    .map(|(a, b)| (a - lam * b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(res <= 1e-8 * fro.max(f64::MIN_POSITIVE), "residual {res}");
                let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-10);
            }
            // values-only path agrees with the vector path
            let only = eigenvalues_symmetric(&s).unwrap();
            for (a, b) in only.iter().zip(&values) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12 * fro.max(1.0));
            }
        }
    }

    #[test]
    fn repeated_and_structured_spectra() {
        // all-ones matrix: eigenvalues 0 (n-1 times) and n
        let n = 6;
        let ones = SymmetricMatrix::new(n, vec![1.0; n * n]).unwrap();
        let ev = eigenvalues_symmetric(&ones).unwrap();
        for v in &ev[..n - 1] {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(ev[n - 1], 6.0, epsilon = 1e-12);

        // path-graph Laplacian-like tridiagonal with known spectrum 2 - 2cos(k pi/(n+1))
        let n = 12;
        let mut rows = vec![vec![0.0; n]; n];
        for i in 0..n {
            rows[i][i] = 2.0;
            if i + 1 < n {
                rows[i][i + 1] = -1.0;
                rows[i + 1][i] = -1.0;
            }
        }
        let ev = eigenvalues_symmetric(&SymmetricMatrix::from_rows(&rows).unwrap()).unwrap();
        for (k, v) in ev.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert_abs_diff_eq!(*v, exact, epsilon = 1e-12);
        }
    }

    #[test]
    fn esd_examples() {
        let zero = esd(&SymmetricMatrix::diagonal(&[0.0; 3]), 1).unwrap();
        assert_eq!(zero.eigenvalues, vec![0.0, 0.0, 0.0]);
        let id = esd(&SymmetricMatrix::diagonal(&[1.0; 3]), 1).unwrap();
        assert_eq!(id.eigenvalues, vec![1.0, 1.0, 1.0]);

        let s = gram_covariance(&random_matrix(4, 2, 17));
        let e = esd(&s, 2).unwrap();
        assert_eq!(e.eigenvalues[..2], [0.0, 0.0]);
        assert!(e.eigenvalues[2] > 0.0);
    }

    #[test]
    fn stieltjes_examples() {
        let e = Esd { p: 1, n: 1, eigenvalues: vec![0.0] };
        let m = empirical_stieltjes(&e, Complex64::new(0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(m.re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.im, 1.0, epsilon = 1e-15);

        let e = Esd { p: 2, n: 1, eigenvalues: vec![1.0, 3.0] };
        let m = empirical_stieltjes(&e, Complex64::new(2.0, 1.0)).unwrap();
        assert_abs_diff_eq!(m.re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.im, 0.5, epsilon = 1e-15);

        let e = Esd { p: 3, n: 1, eigenvalues: vec![0.5, 1.0, 2.5] };
        for y in [10.0, 100.0, 1000.0] {
            let z = Complex64::new(0.0, y);
            let m = empirical_stieltjes(&e, z).unwrap();
            assert!((z * m + 1.0).norm() < 2.0 * e.mean() / y);
        }
        assert_eq!(
            empirical_stieltjes(&e, Complex64::new(1.0, 0.0)),
            Err(Error::LowerHalfPlane(0.0))
        );
    }

    #[test]
    fn histogram_examples() {
        let e = Esd { p: 4, n: 1, eigenvalues: vec![0.0, 0.0, 1.0, 1.0] };
        let h = histogram(&e, 2, 0.0, 2.0).unwrap();
        assert_eq!(h.edges, vec![0.0, 1.0, 2.0]);
        assert_eq!(h.heights, vec![0.5, 0.5]);

        let h = histogram(&e, 3, 5.0, 6.0).unwrap();
        assert_eq!(h.heights, vec![0.0; 3]);

        let single = Esd { p: 1, n: 1, eigenvalues: vec![0.3] };
        let h = histogram(&single, 1, 0.0, 0.5).unwrap();
        assert_abs_diff_eq!(h.heights[0], 2.0);

        assert!(matches!(histogram(&e, 0, 0.0, 1.0), Err(Error::BadRange(_))));
        assert!(matches!(histogram(&e, 2, 1.0, 1.0), Err(Error::BadRange(_))));
    }

    #[test]
    fn serialization_shapes() {
        let e = Esd { p: 2, n: 3, eigenvalues: vec![0.5, 2.0] };
        assert_eq!(e.to_json(), r#"{"p":2,"n":3,"eigenvalues":[0.5,2.0]}"#);
        assert_eq!(e.to_csv(), "value\n0.5\n2\n");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn gram_spectrum_invariants(p in 1usize..14, n in 1usize..14, seed in any::<u64>()) {
            let x = random_matrix(p, n, seed);
            let s = gram_covariance(&x);
            let e = esd(&s, n).unwrap();
            let top = *e.eigenvalues.last().unwrap();
            let eps = clamp_epsilon(top);
            prop_assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(e.eigenvalues[0] >= -eps);
            let zeros = e.eigenvalues.iter().filter(|v| **v == 0.0).count();
            prop_assert!(zeros >= p.saturating_sub(n));
            let sum: f64 = e.eigenvalues.iter().sum();
            let frob = x.frobenius_sq() / n as f64;
            prop_assert!((sum - frob).abs() <= 1e-8 * (p as f64) * top.abs().max(1.0));
        }

        #[test]
        fn column_shuffle_keeps_spectrum(p in 2usize..10, n in 2usize..10, seed in any::<u64>()) {
            let x = random_matrix(p, n, seed);
            let mut order: Vec<usize> = (0..n).collect();
            order.reverse();
            order.rotate_left(seed as usize % n);
            let y = x.permute_columns(&order).unwrap();
            let a = esd(&gram_covariance(&x), n).unwrap();
            let b = esd(&gram_covariance(&y), n).unwrap();
            for (u, v) in a.eigenvalues.iter().zip(&b.eigenvalues) {
                prop_assert!((u - v).abs() < 1e-10);
            }
        }

        #[test]
        fn stieltjes_is_herglotz(
            vals in prop::collection::vec(0.0f64..10.0, 1..20),
            re in -5.0f64..15.0,
            im in 1e-3f64..10.0,
        ) {
            let e = Esd { p: vals.len(), n: 1, eigenvalues: vals };
            let z = Complex64::new(re, im);
            let m = empirical_stieltjes(&e, z).unwrap();
            prop_assert!(m.im > 0.0);
            prop_assert!(m.norm() <= 1.0 / im + 1e-12);
        }
    }
}
