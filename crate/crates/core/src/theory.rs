//! Limiting-law problems for each model family, the companion transform, and
//! closed-form residual checks for the classical special cases.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{
    invert_density, solve_master_with, solve_separable, DensityCurve, KernelField, LinkMatrix, SolverConfig,
    ZGrid,
};
use crate::measures::{discretize_interval, discretize_uniform, DiscreteMeasure, EmpiricalDistribution, Quantile};
use crate::simulate::{ModelSpec, Resolved};

/// Default number of atoms for each continuous parameter.
pub const DEFAULT_Q: usize = 200;

/// Relative first-moment miss that triggers one doubling of `Q`.
pub const MOMENT_RETRY: f64 = 0.02;

/// Tolerance of the rank-1 test that routes a problem to the scalar solver.
pub const SEPARABLE_TOL: f64 = 1e-12;

pub type LinkFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Map applied to the solved Stieltjes transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostTransform {
    Identity,
    /// `(g, h, f)` describe the transposed data matrix; the solved `m~` is
    /// mapped by [`companion_transform`].
    Companion,
}

/// The `(G, H, f, c)` triple of the master equation.
#[derive(Clone)]
pub struct LsdProblem {
    pub g: DiscreteMeasure,
    pub h: DiscreteMeasure,
    pub link: LinkFn,
    /// `p / n` of the data matrix whose law is wanted.
    pub c: f64,
    pub descriptor: String,
    pub transform: PostTransform,
    /// Atoms per continuous parameter, when any were discretized.
    pub q: Option<usize>,
}

impl fmt::Debug for LsdProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LsdProblem")
            .field("descriptor", &self.descriptor)
            .field("c", &self.c)
            .field("g_atoms", &self.g.len())
            .field("h_atoms", &self.h.len())
            .field("transform", &self.transform)
            .field("q", &self.q)
            .finish()
    }
}

/// JSON summary of a problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSummary {
    pub link: String,
    pub c: f64,
    pub transform: PostTransform,
    pub q: Option<usize>,
    pub g: DiscreteMeasure,
    pub h: DiscreteMeasure,
}

impl LsdProblem {
    pub fn new<F>(g: DiscreteMeasure, h: DiscreteMeasure, f: F, c: f64, descriptor: impl Into<String>) -> Result<Self>
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::SpecInvariantViolated(format!("dimension ratio must be positive, got {c}")));
        }
        let prob = LsdProblem {
            g,
            h,
            link: Arc::new(f),
            c,
            descriptor: descriptor.into(),
            transform: PostTransform::Identity,
            q: None,
        };
        prob.link_matrix().map_err(|e| Error::SpecInvariantViolated(e.to_string()))?;
        Ok(prob)
    }

    pub fn link(&self, a: &[f64], b: &[f64]) -> f64 {
        (self.link)(a, b)
    }

    pub fn link_matrix(&self) -> Result<LinkMatrix> {
        let f = self.link.clone();
        LinkMatrix::build(&self.g, &self.h, move |a, b| f(a, b))
    }

    /// `int int f dG dH`, the mean of the limiting law.
    pub fn mean_link(&self) -> Result<f64> {
        Ok(self.link_matrix()?.mean())
    }

    /// Upper end of a grid that covers the support: `1.1 max f (1 + sqrt c)^2`.
    pub fn support_bound(&self) -> Result<f64> {
        let fmax = self.link_matrix()?.max();
        Ok(1.1 * fmax * (1.0 + self.c.sqrt()).powi(2))
    }

    /// `count` points on `[-b / 10, b]`, `b = support_bound`. The negative
    /// margin catches the smoothed mass of densities that blow up at zero.
    pub fn default_grid(&self, count: usize, eta: f64) -> Result<ZGrid> {
        let hi = self.support_bound()?;
        let hi = if hi > 0.0 { hi } else { 1.0 };
        ZGrid::line(-0.1 * hi, hi, count, eta)
    }

    /// The same law posed on the transposed data matrix.
    pub fn companion(&self) -> LsdProblem {
        let f = self.link.clone();
        let (transform, descriptor) = match self.transform {
            PostTransform::Identity => (PostTransform::Companion, format!("companion of {}", self.descriptor)),
            PostTransform::Companion => (
                PostTransform::Identity,
                self.descriptor.trim_start_matches("companion of ").to_string(),
            ),
        };
        LsdProblem {
            g: self.h.clone(),
            h: self.g.clone(),
            link: Arc::new(move |a, b| f(b, a)),
            c: self.c,
            descriptor,
            transform,
            q: self.q,
        }
    }

    pub fn summary(&self) -> ProblemSummary {
        ProblemSummary {
            link: self.descriptor.clone(),
            c: self.c,
            transform: self.transform,
            q: self.q,
            g: self.g.clone(),
            h: self.h.clone(),
        }
    }
}

/// `|sum_j psi_j e^{i j lambda}|^2`.
pub fn transfer_power(psi: &[f64], lambda: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (j, c) in psi.iter().enumerate() {
        let (s, co) = (j as f64 * lambda).sin_cos();
        re += c * co;
        im += c * s;
    }
    re * re + im * im
}

/// `|h(2 pi l / T)|^2` for `l = 0..T`.
pub fn circulant_spectrum(psi: &[f64], t_len: usize) -> Vec<f64> {
    (0..t_len)
        .map(|l| transfer_power(psi, 2.0 * PI * l as f64 / t_len as f64))
        .collect()
}

/// Midpoint discretization of `U(0, 2 pi)`.
pub fn frequency_measure(q: usize) -> Result<DiscreteMeasure> {
    discretize_interval(0.0, 2.0 * PI, q)
}

/// Linear interpolation `Theta_r` of the partition and the duration
/// `v_r = n (tau_i - tau_{i-1})` of the cell containing `r`.
fn time_change(times: &[f64], r: f64) -> (f64, f64) {
    let n = times.len() - 1;
    let pos = (r * n as f64).clamp(0.0, n as f64);
    let cell = (pos.ceil() as usize).clamp(1, n);
    let dt = times[cell] - times[cell - 1];
    let theta = times[cell - 1] + (pos - (cell - 1) as f64) * dt;
    (theta, n as f64 * dt)
}

pub fn problem_for(spec: &ModelSpec, p: usize, n: usize) -> Result<LsdProblem> {
    problem_for_q(spec, p, n, DEFAULT_Q)
}

/// [`problem_for`] with `q` atoms per continuous parameter.
pub fn problem_for_q(spec: &ModelSpec, p: usize, n: usize, q: usize) -> Result<LsdProblem> {
    let c = p as f64 / n as f64;
    let mut prob = match spec.resolve(p, n)? {
        Resolved::Iid { sigma } => {
            LsdProblem::new(DiscreteMeasure::from_values(&sigma)?, DiscreteMeasure::point_mass(1.0), |a, _| a[0], c, "f(a,b) = a")?
        }
        Resolved::Separable { a, b } => LsdProblem::new(
            DiscreteMeasure::from_values(&a)?,
            DiscreteMeasure::from_values(&b)?,
            |a, b| a[0] * b[0],
            c,
            "f(a,b) = a b",
        )?,
        Resolved::Profile { sigma } => {
            let mut p = LsdProblem::new(
                discretize_uniform(q)?,
                discretize_uniform(q)?,
                move |s, t| sigma.eval(s[0], t[0]).powi(2),
                c,
                "f(s,t) = sigma(s,t)^2",
            )?;
            p.q = Some(q);
            p
        }
        Resolved::Linear { coeffs } => {
            let mut p = LsdProblem::new(
                DiscreteMeasure::from_vectors(&coeffs)?,
                frequency_measure(q)?,
                |a, l| transfer_power(a, l[0]),
                c,
                "f(a,lambda) = |sum_j a_j e^(i j lambda)|^2",
            )?;
            p.q = Some(q);
            p
        }
        Resolved::Rcv { gamma, times, .. } => {
            let mut p = LsdProblem::new(
                discretize_uniform(q)?,
                discretize_uniform(q)?,
                move |s, r| {
                    let (theta, v) = time_change(&times, r[0]);
                    gamma.eval(s[0], theta).powi(2) * v
                },
                c,
                "f(s,r) = gamma(s,Theta_r)^2 v_r",
            )?;
            p.q = Some(q);
            p
        }
        Resolved::MatrixAr { a, b, .. } => {
            let a2: Vec<f64> = a.iter().map(|v| v * v).collect();
            let b2: Vec<f64> = b.iter().map(|v| v * v).collect();
            LsdProblem::new(
                DiscreteMeasure::from_values(&a2)?,
                DiscreteMeasure::from_values(&b2)?,
                |a, b| 1.0 / (1.0 - a[0] * b[0]),
                c,
                "f(a,b) = 1/(1 - a b)",
            )?
        }
        Resolved::Mixture { eta, eigs, .. } => {
            let quantiles: Vec<EmpiricalDistribution> = eigs
                .into_iter()
                .map(EmpiricalDistribution::new)
                .collect::<Result<_>>()?;
            let mut p = LsdProblem::new(
                discretize_uniform(q)?,
                eta,
                move |s, i| {
                    let comp = &quantiles[i[0].round() as usize];
                    comp.quantile(s[0]).unwrap_or(f64::NAN)
                },
                c,
                "f(s,i) = H_i^-1(s)",
            )?;
            p.q = Some(q);
            p
        }
    };
    prob.descriptor = format!("{}: {}", spec.family(), prob.descriptor);
    Ok(prob)
}

/// Solver output for one problem.
#[derive(Debug, Clone)]
pub struct Solution {
    pub field: KernelField,
    pub density: DensityCurve,
    /// Whether the scalar fast path was taken.
    pub separable: bool,
}

/// Factors `(g, h)` with `F = g h^T` when the link matrix has rank one.
fn rank_one_factors(link: &LinkMatrix) -> Option<(Vec<f64>, Vec<f64>)> {
    let (rows, cols) = (link.rows(), link.cols());
    let mut best = (0, 0, 0.0);
    for j in 0..rows {
        for i in 0..cols {
            let v = link.value(j, i);
            if v > best.2 {
                best = (j, i, v);
            }
        }
    }
    let (jm, im, fmax) = best;
    if fmax == 0.0 {
        return Some((vec![0.0; rows], vec![1.0; cols]));
    }
    let g: Vec<f64> = (0..rows).map(|j| link.value(j, im)).collect();
    let h: Vec<f64> = (0..cols).map(|i| link.value(jm, i) / fmax).collect();
    for (j, gj) in g.iter().enumerate() {
        for (i, hi) in h.iter().enumerate() {
            if (link.value(j, i) - gj * hi).abs() > SEPARABLE_TOL * fmax {
                return None;
            }
        }
    }
    Some((g, h))
}

fn solve_raw(g: &DiscreteMeasure, h: &DiscreteMeasure, link: &LinkMatrix, c: f64, z: &ZGrid, cfg: &SolverConfig, allow_fast: bool) -> Result<(KernelField, bool)> {
    if allow_fast {
        if let Some((gv, hv)) = rank_one_factors(link) {
            return Ok((solve_separable(g, &gv, h, &hv, c, z, cfg)?, true));
        }
    }
    Ok((solve_master_with(g, link, c, z, cfg)?, false))
}

/// Solves the problem on `z`, taking the scalar path when the link matrix
/// factors, and inverts the density.
pub fn solve_lsd(prob: &LsdProblem, z: &ZGrid, cfg: &SolverConfig) -> Result<Solution> {
    solve_lsd_with(prob, z, cfg, true)
}

/// [`solve_lsd`] with the rank-1 fast path disabled.
pub fn solve_lsd_master(prob: &LsdProblem, z: &ZGrid, cfg: &SolverConfig) -> Result<Solution> {
    solve_lsd_with(prob, z, cfg, false)
}

fn solve_lsd_with(prob: &LsdProblem, z: &ZGrid, cfg: &SolverConfig, allow_fast: bool) -> Result<Solution> {
    let link = prob.link_matrix()?;
    let (field, separable) = match prob.transform {
        PostTransform::Identity => solve_raw(&prob.g, &prob.h, &link, prob.c, z, cfg, allow_fast)?,
        PostTransform::Companion => {
            let shifted = z.scaled(prob.c)?;
            let (mut field, sep) = solve_raw(&prob.g, &prob.h, &link, 1.0 / prob.c, &shifted, cfg, allow_fast)?;
            field.m = companion_transform(&field.m, &shifted, z, prob.c)?;
            field.zero_atom = (1.0 - (1.0 - field.zero_atom) / prob.c).clamp(0.0, 1.0) + 0.0;
            field.z = z.clone();
            field.c = prob.c;
            (field, sep)
        }
    };
    let density = invert_density(&field)?;
    Ok(Solution {
        field,
        density,
        separable,
    })
}

/// Result of [`solve_model`].
#[derive(Debug, Clone)]
pub struct ModelSolution {
    pub problem: LsdProblem,
    pub solution: Solution,
    /// `|first moment - int int f| / int int f` of the accepted solve.
    pub moment_miss: f64,
}

fn moment_miss(prob: &LsdProblem, d: &DensityCurve) -> Result<f64> {
    let target = prob.mean_link()?;
    let got = d.first_moment();
    Ok(if target > 0.0 { (got - target).abs() / target } else { got.abs() })
}

/// Builds the family problem with `q` atoms and solves it; when the first
/// moment misses by more than 2%, `q` is doubled once.
pub fn solve_model(spec: &ModelSpec, p: usize, n: usize, q: usize, z: &ZGrid, cfg: &SolverConfig) -> Result<ModelSolution> {
    let prob = problem_for_q(spec, p, n, q)?;
    let solution = solve_lsd(&prob, z, cfg)?;
    let miss = moment_miss(&prob, &solution.density)?;
    if miss <= MOMENT_RETRY || prob.q.is_none() {
        return Ok(ModelSolution {
            problem: prob,
            solution,
            moment_miss: miss,
        });
    }
    let prob = problem_for_q(spec, p, n, 2 * q)?;
    let solution = solve_lsd(&prob, z, cfg)?;
    let miss = moment_miss(&prob, &solution.density)?;
    Ok(ModelSolution {
        problem: prob,
        solution,
        moment_miss: miss,
    })
}

/// `m(z) = (1 - c)/(c z) + m~(z / c) / c^2`, with `m~` given on `tilde_grid = z / c`.
pub fn companion_transform(m_tilde: &[Complex64], tilde_grid: &ZGrid, z: &ZGrid, c: f64) -> Result<Vec<Complex64>> {
    if m_tilde.len() != z.len() || tilde_grid.len() != z.len() {
        return Err(Error::GridMismatch(format!(
            "{} transform values for {} grid points",
            m_tilde.len(),
            z.len()
        )));
    }
    let scale = 1e-12 * z.x().iter().fold(z.eta(), |m, v| m.max(v.abs()));
    let shifted_ok = (tilde_grid.eta() * c - z.eta()).abs() <= scale
        && tilde_grid.x().iter().zip(z.x()).all(|(t, x)| (t * c - x).abs() <= scale);
    if !shifted_ok {
        return Err(Error::GridMismatch("companion values must be sampled at z / c".into()));
    }
    Ok(m_tilde
        .iter()
        .enumerate()
        .map(|(k, mt)| {
            let zk = z.point(k);
            (1.0 - c) / (c * zk) + mt / (c * c)
        })
        .collect())
}

/// Sup over the points of `|m - int dG(l) / (l (1 - c - c z m) - z)|`.
pub fn mp_equation_residual(m: &[Complex64], z: &[Complex64], g_sigma: &DiscreteMeasure, c: f64) -> f64 {
    m.iter()
        .zip(z)
        .map(|(mk, zk)| {
            let inner = 1.0 - c - c * zk * mk;
            let rhs: Complex64 = g_sigma
                .atoms()
                .iter()
                .zip(g_sigma.weights())
                .map(|(l, w)| *w / (inner * l[0] - zk))
                .sum();
            (mk - rhs).norm()
        })
        .fold(0.0, f64::max)
}

/// `q(z) = -(1/z) int y / (y K(z) + 1) dG(y)` for the separable system.
pub fn zhang_q(k: Complex64, z: Complex64, g_a: &DiscreteMeasure) -> Complex64 {
    let s: Complex64 = g_a
        .atoms()
        .iter()
        .zip(g_a.weights())
        .map(|(y, w)| *w * y[0] / (k * y[0] + 1.0))
        .sum();
    -s / z
}

/// Sup over the points of the largest residual of the three equations
///
/// ```text
/// m = -(1 - 1/c)/z - (1/(c z)) int 1/(1 + c q x) dH(x)
/// m = -(1/z) int 1/(1 + p y) dG(y)
/// m = -1/z - p q
/// ```
///
/// with `G` the coordinate law and `H` the sample-weight law.
pub fn zhang_system_residual(
    m: &[Complex64],
    p_fn: &[Complex64],
    q_fn: &[Complex64],
    z: &[Complex64],
    g_a: &DiscreteMeasure,
    h_b: &DiscreteMeasure,
    c: f64,
) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..m.len() {
        let (mk, pk, qk, zk) = (m[k], p_fn[k], q_fn[k], z[k]);
        let h_int: Complex64 = h_b
            .atoms()
            .iter()
            .zip(h_b.weights())
            .map(|(x, w)| *w / (qk * (c * x[0]) + 1.0))
            .sum();
        let e1 = mk - (-(1.0 - 1.0 / c) / zk - h_int / (c * zk));
        let g_int: Complex64 = g_a
            .atoms()
            .iter()
            .zip(g_a.weights())
            .map(|(y, w)| *w / (pk * y[0] + 1.0))
            .sum();
        let e2 = mk + g_int / zk;
        let e3 = mk - (-1.0 / zk - pk * qk);
        worst = worst.max(e1.norm()).max(e2.norm()).max(e3.norm());
    }
    worst
}

/// Sup over the points of
/// `|-z m - int dH2(l) / (1 - e/(z + c z m) + (m_ + e/(z + c z m)) l)|`,
/// `m_ = -(1 - c)/z + c m`, for a mixture of an identity component with
/// weight `eta1` and a component with eigenvalue law `H2`.
pub fn mixture_two_population_residual(m: &[Complex64], underline_m: &[Complex64], z: &[Complex64], eta1: f64, h2: &DiscreteMeasure, c: f64) -> f64 {
    m.iter()
        .zip(underline_m)
        .zip(z)
        .map(|((mk, mu), zk)| {
            let e = eta1 / (zk + c * zk * mk);
            let rhs: Complex64 = h2
                .atoms()
                .iter()
                .zip(h2.weights())
                .map(|(l, w)| *w / (1.0 - e + (mu + e) * l[0]))
                .sum();
            (-zk * mk - rhs).norm()
        })
        .fold(0.0, f64::max)
}

/// `m_(z) = -(1 - c)/z + c m(z)`.
pub fn underline_m(m: &[Complex64], z: &[Complex64], c: f64) -> Vec<Complex64> {
    m.iter().zip(z).map(|(mk, zk)| -(1.0 - c) / zk + c * mk).collect()
}
