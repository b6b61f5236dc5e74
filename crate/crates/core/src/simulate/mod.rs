//! Seeded generation of data matrices for the seven model families.
//!
//! Randomness comes from ChaCha8 keyed by the seed. Each column draws from
//! its own stream (stream index = column index; for the linear process the
//! index of the innovation column), so columns can be generated in parallel
//! with output identical to a sequential run. Mixture labels use stream
//! `u64::MAX` and the RCV drift vector uses stream `u64::MAX - 1`.

pub mod expr;
pub mod spec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

pub use expr::Expr;
pub use spec::{FamilyInfo, ModelSpec, PsiSpec, Resolved, Spectrum, CATALOG};

use crate::error::{Error, Result};
use crate::spectra::{esd, gram_scaled, DataMatrix, Esd, SymmetricMatrix};

pub type Seed = u64;

const LABEL_STREAM: u64 = u64::MAX;
const DRIFT_STREAM: u64 = u64::MAX - 1;

/// Simpson nodes per observation interval for the RCV weights.
pub const SIMPSON_NODES: usize = 33;

/// Generator for one substream of `seed`.
pub fn stream_rng(seed: Seed, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normals(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn par_columns<F>(p: usize, n: usize, column: F) -> Result<DataMatrix>
where
    F: Fn(usize) -> Vec<f64> + Sync,
{
    let cols: Vec<Vec<f64>> = (0..n).into_par_iter().map(&column).collect();
    DataMatrix::from_columns(p, &cols)
}

fn expect_len(v: &[f64], len: usize, what: &str) -> Result<()> {
    if v.len() == len {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{what} has {} entries, expected {len}",
            v.len()
        )))
    }
}

/// Column `j` is `diag(sqrt(sigma)) z_j`.
pub fn sample_iid_covariance(sigma_eigs: &[f64], p: usize, n: usize, seed: Seed) -> Result<DataMatrix> {
    expect_len(sigma_eigs, p, "sigma_eigs")?;
    let scale: Vec<f64> = sigma_eigs.iter().map(|v| v.sqrt()).collect();
    par_columns(p, n, |j| {
        let z = normals(&mut stream_rng(seed, j as u64), p);
        z.iter().zip(&scale).map(|(z, s)| s * z).collect()
    })
}

/// Column `i` is `sqrt(b_i) diag(sqrt(a)) z_i`.
pub fn sample_separable(a_eigs: &[f64], b_weights: &[f64], p: usize, n: usize, seed: Seed) -> Result<DataMatrix> {
    expect_len(a_eigs, p, "a_eigs")?;
    expect_len(b_weights, n, "b_weights")?;
    let scale: Vec<f64> = a_eigs.iter().map(|v| v.sqrt()).collect();
    par_columns(p, n, |j| {
        let z = normals(&mut stream_rng(seed, j as u64), p);
        let sb = b_weights[j].sqrt();
        z.iter().zip(&scale).map(|(z, s)| sb * (s * z)).collect()
    })
}

/// `X_ij = sigma(i/p, j/n) Z_ij` with 1-based `i`, `j`.
pub fn sample_variance_profile(profile: &Expr, p: usize, n: usize, seed: Seed) -> Result<DataMatrix> {
    for i in 1..=p {
        for j in 1..=n {
            let (s, t) = (i as f64 / p as f64, j as f64 / n as f64);
            if !profile.eval(s, t).is_finite() {
                return Err(Error::NonFiniteProfile { s, t });
            }
        }
    }
    par_columns(p, n, |j| {
        let z = normals(&mut stream_rng(seed, j as u64), p);
        let t = (j + 1) as f64 / n as f64;
        z.iter()
            .enumerate()
            .map(|(i, z)| profile.eval((i + 1) as f64 / p as f64, t) * z)
            .collect()
    })
}

/// `p` independent MA(J) rows, `X_{l,t} = sum_{j<=J} psi[l][j] Z_{l,t-j}`,
/// where `J = psi[l].len() - 1` pre-sample innovation columns are drawn first.
pub fn sample_linear_process(psi: &[Vec<f64>], p: usize, t_len: usize, seed: Seed) -> Result<DataMatrix> {
    if psi.len() != p || psi.is_empty() {
        return Err(Error::DimensionMismatch(format!("psi has {} rows, expected {p}", psi.len())));
    }
    let lags = psi[0].len().saturating_sub(1);
    if psi.iter().any(|r| r.len() != lags + 1) || psi[0].is_empty() {
        return Err(Error::DimensionMismatch("psi rows must share one length >= 1".into()));
    }
    let total = t_len + lags;
    let innov: Vec<Vec<f64>> = (0..total)
        .into_par_iter()
        .map(|k| normals(&mut stream_rng(seed, k as u64), p))
        .collect();
    par_columns(p, t_len, |t| {
        let now = t + lags;
        (0..p)
            .map(|l| {
                psi[l]
                    .iter()
                    .enumerate()
                    .map(|(j, c)| c * innov[now - j][l])
                    .sum()
            })
            .collect()
    })
}

/// `w[i][l] = n * int_{tau_i}^{tau_{i+1}} gamma(l/p, t)^2 dt` (0-based `i`),
/// by composite Simpson with [`SIMPSON_NODES`] nodes per interval. The two
/// end nodes sit just inside the interval so indicator jumps at partition
/// points are resolved from the correct side.
pub fn rcv_weights(gamma: &Expr, times: &[f64], p: usize) -> Result<Vec<Vec<f64>>> {
    let n = times.len() - 1;
    let panels = SIMPSON_NODES - 1;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (lo, hi) = (times[i], times[i + 1]);
        let len = hi - lo;
        let h = len / panels as f64;
        let inset = len * 1e-9;
        let mut row = Vec::with_capacity(p);
        for l in 1..=p {
            let s = l as f64 / p as f64;
            let mut acc = 0.0;
            for k in 0..=panels {
                let t = match k {
                    0 => lo + inset,
                    k if k == panels => hi - inset,
                    k => lo + k as f64 * h,
                };
                let g = gamma.eval(s, t);
                if !g.is_finite() {
                    return Err(Error::NonFiniteProfile { s, t });
                }
                let c = if k == 0 || k == panels {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                acc += c * g * g;
            }
            row.push(n as f64 * acc * h / 3.0);
        }
        out.push(row);
    }
    Ok(out)
}

/// Increments of the diffusion: column `i` is
/// `diag(sqrt(w_i)) z_i / sqrt(n) + (tau_i - tau_{i-1}) mu`.
pub fn sample_diffusion_rcv(
    gamma: &Expr,
    times: &[f64],
    drift_bound: f64,
    p: usize,
    n: usize,
    seed: Seed,
) -> Result<DataMatrix> {
    if times.len() != n + 1 {
        return Err(Error::BadPartition(format!("{} time points for {n} intervals", times.len())));
    }
    let w = rcv_weights(gamma, times, p)?;
    let mu: Vec<f64> = if drift_bound > 0.0 {
        let mut rng = stream_rng(seed, DRIFT_STREAM);
        (0..p).map(|_| rng.random_range(-drift_bound..=drift_bound)).collect()
    } else {
        vec![0.0; p]
    };
    let root_n = (n as f64).sqrt();
    par_columns(p, n, |i| {
        let z = normals(&mut stream_rng(seed, i as u64), p);
        let dt = times[i + 1] - times[i];
        z.iter()
            .zip(&w[i])
            .zip(&mu)
            .map(|((z, w), m)| w.sqrt() * z / root_n + dt * m)
            .collect()
    })
}

fn check_stationary(a: &[f64], b: &[f64]) -> Result<()> {
    let rho = a.iter().fold(0.0f64, |m, v| m.max(v.abs())) * b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if rho >= 1.0 {
        Err(Error::NotStationary(rho))
    } else {
        Ok(())
    }
}

/// Snapshots of `X_s = diag(a) X_{s-1} diag(b) + Z_s` (from `X_0 = 0`) at
/// steps `burn_in + t` for each `t` in `ts`. Column `j` evolves on its own
/// stream, so every snapshot comes from one trajectory.
pub fn sample_matrix_ar_path(
    a: &[f64],
    b: &[f64],
    ts: &[usize],
    burn_in: usize,
    m: usize,
    n: usize,
    seed: Seed,
) -> Result<Vec<DataMatrix>> {
    expect_len(a, m, "a_eigs")?;
    expect_len(b, n, "b_diag")?;
    check_stationary(a, b)?;
    if ts.iter().any(|&t| t == 0) {
        return Err(Error::SpecInvariantViolated("observation index t must be >= 1".into()));
    }
    let last = burn_in + ts.iter().copied().max().unwrap_or(1);
    // per column: the state at each requested step
    let per_col: Vec<Vec<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream_rng(seed, j as u64);
            let mut x = vec![0.0; m];
            let mut snaps = vec![Vec::new(); ts.len()];
            for step in 1..=last {
                for (i, xi) in x.iter_mut().enumerate() {
                    let z: f64 = rng.sample(StandardNormal);
                    *xi = a[i] * *xi * b[j] + z;
                }
                for (k, &t) in ts.iter().enumerate() {
                    if step == burn_in + t {
                        snaps[k] = x.clone();
                    }
                }
            }
            snaps
        })
        .collect();
    (0..ts.len())
        .map(|k| {
            let cols: Vec<Vec<f64>> = per_col.iter().map(|c| c[k].clone()).collect();
            DataMatrix::from_columns(m, &cols)
        })
        .collect()
}

pub fn sample_matrix_ar(
    a: &[f64],
    b: &[f64],
    t: usize,
    burn_in: usize,
    m: usize,
    n: usize,
    seed: Seed,
) -> Result<DataMatrix> {
    Ok(sample_matrix_ar_path(a, b, &[t], burn_in, m, n, seed)?.remove(0))
}

/// Column `j` is `mu_I + diag(sqrt(eigs_I)) z_j` with `I ~ eta`.
pub fn sample_mixture(
    eta: &[f64],
    component_eigs: &[Vec<f64>],
    means: &[Vec<f64>],
    p: usize,
    n: usize,
    seed: Seed,
) -> Result<DataMatrix> {
    let k = eta.len();
    if k == 0 || component_eigs.len() != k || means.len() != k {
        return Err(Error::SpecInvariantViolated("mixture parts disagree in count".into()));
    }
    if eta.iter().any(|w| !(*w >= 0.0)) || (eta.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::SpecInvariantViolated("eta is not a probability vector".into()));
    }
    for (e, mu) in component_eigs.iter().zip(means) {
        expect_len(e, p, "component_eigs")?;
        expect_len(mu, p, "means")?;
    }
    let mut cum = Vec::with_capacity(k);
    let mut acc = 0.0;
    for w in eta {
        acc += w;
        cum.push(acc);
    }
    let mut rng = stream_rng(seed, LABEL_STREAM);
    let labels: Vec<usize> = (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * acc;
            cum.iter().position(|&c| u < c).unwrap_or(k - 1)
        })
        .collect();
    let scales: Vec<Vec<f64>> = component_eigs
        .iter()
        .map(|e| e.iter().map(|v| v.sqrt()).collect())
        .collect();
    par_columns(p, n, |j| {
        let c = labels[j];
        let z = normals(&mut stream_rng(seed, j as u64), p);
        z.iter()
            .zip(&scales[c])
            .zip(&means[c])
            .map(|((z, s), mu)| s * z + mu)
            .collect()
    })
}

/// Dispatches on the family. For `MatrixAr`, `p` is `m` and the snapshot is
/// taken at `burn_in + t`.
pub fn simulate(spec: &ModelSpec, p: usize, n: usize, seed: Seed) -> Result<DataMatrix> {
    match spec.resolve(p, n)? {
        Resolved::Iid { sigma } => sample_iid_covariance(&sigma, p, n, seed),
        Resolved::Separable { a, b } => sample_separable(&a, &b, p, n, seed),
        Resolved::Profile { sigma } => sample_variance_profile(&sigma, p, n, seed),
        Resolved::Linear { coeffs } => sample_linear_process(&coeffs, p, n, seed),
        Resolved::Rcv {
            gamma,
            times,
            drift_bound,
        } => sample_diffusion_rcv(&gamma, &times, drift_bound, p, n, seed),
        Resolved::MatrixAr { a, b, t, burn_in } => sample_matrix_ar(&a, &b, t, burn_in, p, n, seed),
        Resolved::Mixture { eta, eigs, means } => sample_mixture(eta.weights(), &eigs, &means, p, n, seed),
    }
}

/// The matrix whose spectrum is studied (`X X^T / n`, or `X X^T` for RCV).
pub fn simulate_gram(spec: &ModelSpec, p: usize, n: usize, seed: Seed) -> Result<SymmetricMatrix> {
    let x = simulate(spec, p, n, seed)?;
    Ok(gram_scaled(&x, spec.gram_divisor(n)))
}

pub fn simulate_esd(spec: &ModelSpec, p: usize, n: usize, seed: Seed) -> Result<Esd> {
    esd(&simulate_gram(spec, p, n, seed)?, n)
}

/// ESDs of a matrix-AR trajectory at several observation indices. Other
/// families ignore `ts` and return one ESD per entry from the same seed.
pub fn simulate_esd_series(spec: &ModelSpec, p: usize, n: usize, seed: Seed, ts: &[usize]) -> Result<Vec<Esd>> {
    match spec.resolve(p, n)? {
        Resolved::MatrixAr { a, b, burn_in, .. } => sample_matrix_ar_path(&a, &b, ts, burn_in, p, n, seed)?
            .iter()
            .map(|x| esd(&gram_scaled(x, n as f64), n))
            .collect(),
        _ => {
            let e = simulate_esd(spec, p, n, seed)?;
            Ok(vec![e; ts.len()])
        }
    }
}

/// Column-covariance eigenvalues `lambda[i][l]` of column `i` (expected over
/// the mixture label), scaled to match the studied matrix. Drift and means
/// are ignored.
pub fn population_eigenvalues(spec: &ModelSpec, p: usize, n: usize) -> Result<Vec<Vec<f64>>> {
    Ok(match spec.resolve(p, n)? {
        Resolved::Iid { sigma } => vec![sigma; n],
        Resolved::Separable { a, b } => b.iter().map(|bi| a.iter().map(|al| al * bi).collect()).collect(),
        Resolved::Profile { sigma } => (1..=n)
            .map(|j| {
                (1..=p)
                    .map(|i| sigma.eval(i as f64 / p as f64, j as f64 / n as f64).powi(2))
                    .collect()
            })
            .collect(),
        Resolved::Linear { coeffs } => {
            let row: Vec<f64> = coeffs.iter().map(|r| r.iter().map(|c| c * c).sum()).collect();
            vec![row; n]
        }
        Resolved::Rcv { gamma, times, .. } => rcv_weights(&gamma, &times, p)?,
        Resolved::MatrixAr { a, b, .. } => b
            .iter()
            .map(|bj| a.iter().map(|ai| 1.0 / (1.0 - ai * ai * bj * bj)).collect())
            .collect(),
        Resolved::Mixture { eta, eigs, .. } => {
            let row: Vec<f64> = (0..p)
                .map(|l| eta.weights().iter().zip(&eigs).map(|(w, e)| w * e[l]).sum())
                .collect();
            vec![row; n]
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::gram_covariance;

    fn expr(s: &str) -> Expr {
        Expr::parse(s).unwrap()
    }

    #[test]
    fn iid_examples() {
        let x = sample_iid_covariance(&vec![1.0; 100], 100, 1000, 7).unwrap();
        let m2 = x.frobenius_sq() / 1e5;
        assert!((0.99..=1.01).contains(&m2), "{m2}");

        let zero = sample_iid_covariance(&[0.0, 0.0], 2, 5, 1).unwrap();
        assert!(zero.entries().iter().all(|v| *v == 0.0));

        let x = sample_iid_covariance(&[4.0], 1, 10_000, 3).unwrap();
        let mean = x.row(0).iter().sum::<f64>() / 1e4;
        let var = x.row(0).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 9999.0;
        assert!((3.8..=4.2).contains(&var), "{var}");

        let x = sample_iid_covariance(&[1.0, 0.0], 2, 20, 5).unwrap();
        assert!(x.row(1).iter().all(|v| *v == 0.0));
        assert!(sample_iid_covariance(&[1.0], 2, 2, 0).is_err());
    }

    #[test]
    fn separable_reductions() {
        let a = [1.0, 2.0, 0.5];
        let iid = sample_iid_covariance(&a, 3, 6, 11).unwrap();
        let sep = sample_separable(&a, &[1.0; 6], 3, 6, 11).unwrap();
        assert_eq!(iid, sep);

        let zero = sample_separable(&a, &[0.0; 6], 3, 6, 11).unwrap();
        assert!(zero.entries().iter().all(|v| *v == 0.0));

        let z = sample_iid_covariance(&[1.0; 3], 3, 2, 4).unwrap();
        let x = sample_separable(&[1.0; 3], &[1.0, 4.0], 3, 2, 4).unwrap();
        let norm = |m: &DataMatrix, j: usize| m.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm(&x, 1) - 2.0 * norm(&z, 1)).abs() < 1e-14);

        // S = (1/n) sum_i b_i D z_i z_i^T D
        let (p, n) = (4, 5);
        let a = [1.0, 2.0, 3.0, 0.5];
        let b = [0.3, 1.0, 2.0, 0.0, 5.0];
        let x = sample_separable(&a, &b, p, n, 99).unwrap();
        let z = sample_iid_covariance(&[1.0; 4], p, n, 99).unwrap();
        let s = gram_covariance(&x);
        for r in 0..p {
            for c in 0..p {
                let direct: f64 = (0..n)
                    .map(|i| b[i] * a[r].sqrt() * z.get(r, i) * z.get(c, i) * a[c].sqrt())
                    .sum::<f64>()
                    / n as f64;
                assert!((s.get(r, c) - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn variance_profile_examples() {
        let one = sample_variance_profile(&expr("1"), 3, 4, 8).unwrap();
        assert_eq!(one, sample_iid_covariance(&[1.0; 3], 3, 4, 8).unwrap());
        let zero = sample_variance_profile(&expr("0"), 3, 4, 8).unwrap();
        assert!(zero.entries().iter().all(|v| *v == 0.0));

        let (p, n) = (5, 10_000);
        let x = sample_variance_profile(&expr("s"), p, n, 21).unwrap();
        for i in 0..p {
            let var = x.row(i).iter().map(|v| v * v).sum::<f64>() / n as f64;
            let target = ((i + 1) as f64 / p as f64).powi(2);
            assert!((var / target - 1.0).abs() < 0.1, "row {i}: {var} vs {target}");
        }
        assert!(matches!(
            sample_variance_profile(&expr("1/(t-1)"), 2, 2, 0),
            Err(Error::NonFiniteProfile { .. })
        ));
    }

    #[test]
    fn linear_process_examples() {
        let white = sample_linear_process(&vec![vec![1.0, 0.0, 0.0]; 3], 3, 5, 2).unwrap();
        for v in white.entries() {
            assert!(v.is_finite());
        }
        // white noise has the same law as iid; the lag offset shifts streams
        let iid = sample_linear_process(&vec![vec![1.0]; 3], 3, 5, 2).unwrap();
        assert_eq!(iid, sample_iid_covariance(&[1.0; 3], 3, 5, 2).unwrap());

        let phi: f64 = 0.5;
        let coeffs: Vec<f64> = (0..=60).map(|j| phi.powi(j)).collect();
        let t_len = 100_000;
        let x = sample_linear_process(&[coeffs], 1, t_len, 5).unwrap();
        let row = x.row(0);
        let mean = row.iter().sum::<f64>() / t_len as f64;
        let g1 = row
            .windows(2)
            .map(|w| (w[0] - mean) * (w[1] - mean))
            .sum::<f64>()
            / t_len as f64;
        assert!((0.62..=0.71).contains(&g1), "{g1}");

        let coeffs: Vec<f64> = (0..=60).map(|j| phi.powi(j)).collect();
        let x = sample_linear_process(&[coeffs.clone(), coeffs], 2, 10_000, 6).unwrap();
        let (r0, r1) = (x.row(0), x.row(1));
        let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        let corr = dot(r0, r1) / (dot(r0, r0) * dot(r1, r1)).sqrt();
        assert!(corr.abs() < 0.05, "{corr}");
    }

    #[test]
    fn rcv_examples() {
        let (p, n) = (3, 4);
        let times: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let w = rcv_weights(&expr("1"), &times, p).unwrap();
        for row in &w {
            for v in row {
                assert!((v - 1.0).abs() < 1e-12);
            }
        }
        let x = sample_diffusion_rcv(&expr("1"), &times, 0.0, p, n, 12).unwrap();
        let z = sample_iid_covariance(&[1.0; 3], p, n, 12).unwrap();
        for (a, b) in x.entries().iter().zip(z.entries()) {
            assert!((a - b / 2.0).abs() < 1e-12);
        }

        let w = rcv_weights(&expr("sqrt(2) * ind(r <= 1/2)"), &times, p).unwrap();
        for (i, row) in w.iter().enumerate() {
            let expect = if i < n / 2 { 2.0 } else { 0.0 };
            for v in row {
                assert!((v - expect).abs() < 1e-12, "{v}");
            }
        }

        // Simpson is exact on cubics: gamma^2 = t^3 + s
        let w = rcv_weights(&expr("sqrt(t*t*t + s)"), &[0.0, 0.3, 1.0], 2).unwrap();
        let exact = |lo: f64, hi: f64, s: f64| 2.0 * ((hi.powi(4) - lo.powi(4)) / 4.0 + s * (hi - lo));
        assert!((w[0][0] - exact(0.0, 0.3, 0.5)).abs() < 1e-8);
        assert!((w[1][1] - exact(0.3, 1.0, 1.0)).abs() < 1e-8);
    }

    #[test]
    fn rcv_drift_is_bounded_shift() {
        let (p, n) = (4, 8);
        let times: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let plain = sample_diffusion_rcv(&expr("1"), &times, 0.0, p, n, 3).unwrap();
        let drift = sample_diffusion_rcv(&expr("1"), &times, 0.1, p, n, 3).unwrap();
        for i in 0..p {
            let shift = drift.get(i, 0) - plain.get(i, 0);
            assert!(shift.abs() <= 0.1 / n as f64 + 1e-15);
            for j in 1..n {
                assert!((drift.get(i, j) - plain.get(i, j) - shift).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn matrix_ar_examples() {
        let x = sample_matrix_ar(&[0.0, 0.0], &[0.9, 0.5, 0.1], 7, 10, 2, 3, 4).unwrap();
        let direct = sample_matrix_ar(&[0.5, 0.2], &[0.0; 3], 7, 10, 2, 3, 4).unwrap();
        assert_eq!(x, direct);

        let x1 = sample_matrix_ar(&[0.5, 0.7], &[0.9, 0.3, 0.2], 1, 0, 2, 3, 4).unwrap();
        let mut z = Vec::new();
        for j in 0..3 {
            z.push(normals(&mut stream_rng(4, j), 2));
        }
        assert_eq!(x1, DataMatrix::from_columns(2, &z).unwrap());

        assert_eq!(
            sample_matrix_ar(&[1.0], &[1.0], 1, 0, 1, 1, 0),
            Err(Error::NotStationary(1.0))
        );

        // stationary variance 1 / (1 - a^2 b^2), sampled over replicate seeds
        let (a, b) = (0.8, 0.9);
        let reps = 10_000;
        let mut acc = 0.0;
        for seed in 0..reps {
            let x = sample_matrix_ar(&[a], &[b], 1, 60, 1, 1, seed).unwrap();
            acc += x.get(0, 0).powi(2);
        }
        let var = acc / reps as f64;
        let target = 1.0 / (1.0 - (a * b) * (a * b));
        assert!((var / target - 1.0).abs() < 0.05, "{var} vs {target}");
    }

    #[test]
    fn matrix_ar_path_matches_single_snapshots() {
        let (a, b) = ([0.5, 0.6, 0.7], [0.5, 0.8]);
        let path = sample_matrix_ar_path(&a, &b, &[1, 5, 3], 20, 3, 2, 9).unwrap();
        for (k, t) in [1, 5, 3].into_iter().enumerate() {
            assert_eq!(path[k], sample_matrix_ar(&a, &b, t, 20, 3, 2, 9).unwrap());
        }
    }

    #[test]
    fn mixture_examples() {
        let sigma = [1.0, 2.0, 3.0];
        let mu = [0.5, -1.0, 2.0];
        let mix = sample_mixture(&[1.0], &[sigma.to_vec()], &[mu.to_vec()], 3, 7, 13).unwrap();
        let iid = sample_iid_covariance(&sigma, 3, 7, 13).unwrap();
        for i in 0..3 {
            for j in 0..7 {
                assert_eq!(mix.get(i, j), iid.get(i, j) + mu[i]);
            }
        }

        let x = sample_mixture(&[1.0, 0.0], &[vec![0.0], vec![0.0]], &[vec![1.0], vec![-1.0]], 1, 500, 2).unwrap();
        assert!(x.entries().iter().all(|v| *v == 1.0));

        let x = sample_mixture(&[0.5, 0.5], &[vec![0.0], vec![0.0]], &[vec![-1.0], vec![1.0]], 1, 1000, 3).unwrap();
        let mean_abs = x.entries().iter().map(|v| v.abs()).sum::<f64>() / 1000.0;
        assert_eq!(mean_abs, 1.0);
        let ups = x.entries().iter().filter(|v| **v > 0.0).count();
        assert!((400..600).contains(&ups));
    }

    #[test]
    fn simulate_is_deterministic() {
        let specs = [
            r#"{"family":"iid_covariance","sigma_eigs":{"atoms":[1,3],"weights":[0.5,0.5]}}"#,
            r#"{"family":"separable","a_eigs":{"atoms":[1,2],"weights":[0.5,0.5]},"b_weights":{"atoms":[0.5,2],"weights":[0.5,0.5]}}"#,
            r#"{"family":"variance_profile","profile":"1 + s*t"}"#,
            r#"{"family":"linear_process","psi":{"ar":[0.5]},"burn_in":30}"#,
            r#"{"family":"diffusion_rcv","gamma":"1 + s*ind(r <= 0.5)","drift_bound":0.1}"#,
            r#"{"family":"matrix_ar","a_eigs":{"atoms":[0.5,0.7],"weights":[0.5,0.5]},"b_diag":{"atoms":[0.5,1],"weights":[0.5,0.5]},"t":2,"burn_in":10}"#,
            r#"{"family":"finite_mixture","eta":[0.5,0.5],"component_eigs":[{"atoms":[1],"weights":[1]},{"atoms":[1,4],"weights":[0.5,0.5]}]}"#,
        ];
        for text in specs {
            let spec: ModelSpec = serde_json::from_str(text).unwrap();
            let a = simulate(&spec, 6, 8, 77).unwrap();
            let b = simulate(&spec, 6, 8, 77).unwrap();
            assert_eq!(a, b, "{}", spec.family());
            assert_ne!(a, simulate(&spec, 6, 8, 78).unwrap(), "{}", spec.family());
            let lam = population_eigenvalues(&spec, 6, 8).unwrap();
            assert_eq!(lam.len(), 8);
            assert!(lam.iter().all(|r| r.len() == 6 && r.iter().all(|v| *v >= 0.0)));
        }
    }
}
