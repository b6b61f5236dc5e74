//! Fixed-point solver for the kernel `K(a, z)` of the master equation
//!
//! ```text
//! K(a, z) = int f(a, b) / ( -z + c int f(a', b) / (K(a', z) + 1) dG(a') ) dH(b)
//! m(z)    = -(1/z) int dG(a) / (K(a, z) + 1)
//! ```
//!
//! and Stieltjes inversion of `m` into a density with an explicit atom at 0.

use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{Cdf, DiscreteMeasure};

/// Grid points solved sequentially (with warm start) inside one parallel task.
pub const CHUNK: usize = 16;

/// Allowed band for the total mass of an inverted density.
pub const MASS_BAND: (f64, f64) = (0.97, 1.03);

/// Evaluation points `x_k + i eta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZGrid {
    x: Vec<f64>,
    eta: f64,
}

impl ZGrid {
    pub fn new(x: Vec<f64>, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::BadConfig(format!("eta must be positive, got {eta}")));
        }
        if x.is_empty() {
            return Err(Error::BadConfig("z grid is empty".into()));
        }
        if x.iter().any(|v| !v.is_finite()) || x.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::BadConfig("z grid abscissas must be finite and strictly increasing".into()));
        }
        Ok(ZGrid { x, eta })
    }

    /// `count` equally spaced abscissas on `[x_min, x_max]`.
    pub fn line(x_min: f64, x_max: f64, count: usize, eta: f64) -> Result<Self> {
        if count < 2 || !(x_min < x_max) {
            return Err(Error::BadConfig(format!(
                "need count >= 2 and x_min < x_max, got {count} on [{x_min}, {x_max}]"
            )));
        }
        let step = (x_max - x_min) / (count - 1) as f64;
        let x = (0..count)
            .map(|k| if k + 1 == count { x_max } else { x_min + k as f64 * step })
            .collect();
        ZGrid::new(x, eta)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn point(&self, k: usize) -> Complex64 {
        Complex64::new(self.x[k], self.eta)
    }

    pub fn points(&self) -> Vec<Complex64> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    /// The grid `{z / factor}`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        ZGrid::new(self.x.iter().map(|x| x / factor).collect(), self.eta / factor)
    }
}

/// Damped Picard iteration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub init: Complex64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-9,
            max_iter: 2000,
            damping: 0.5,
            init: Complex64::new(0.0, 1.0),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::BadConfig(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::BadConfig("max_iter must be >= 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::BadConfig(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if !(self.init.im >= 0.0) || !self.init.re.is_finite() || !self.init.im.is_finite() {
            return Err(Error::BadConfig("init must lie in the closed upper half-plane".into()));
        }
        Ok(())
    }
}

/// Solved kernel on the lattice (G atoms x z grid).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelField {
    pub a_atoms: Vec<Vec<f64>>,
    pub z: ZGrid,
    /// `k[zk][j] = K(a_j, z_k)`.
    pub k: Vec<Vec<Complex64>>,
    pub m: Vec<Complex64>,
    /// Relative sup-norm gap `|T(k) - k| / max(1, |k|)` at the last iterate.
    pub residual: Vec<f64>,
    pub converged: Vec<bool>,
    pub iterations: Vec<usize>,
    pub c: f64,
    /// Mass of the limiting law at zero.
    pub zero_atom: f64,
}

impl KernelField {
    pub fn kernel(&self, j: usize, zk: usize) -> Complex64 {
        self.k[zk][j]
    }

    pub fn converged_fraction(&self) -> f64 {
        self.converged.iter().filter(|c| **c).count() as f64 / self.converged.len().max(1) as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("kernel field serializes")
    }
}

/// Link values `f(a_j, b_i)` with the weights of both measures.
#[derive(Debug, Clone)]
pub struct LinkMatrix {
    rows: usize,
    cols: usize,
    /// Row-major `rows x cols`.
    data: Vec<f64>,
    gw: Vec<f64>,
    hw: Vec<f64>,
}

impl LinkMatrix {
    pub fn build<F>(g: &DiscreteMeasure, h: &DiscreteMeasure, f: F) -> Result<Self>
    where
        F: Fn(&[f64], &[f64]) -> f64 + Sync,
    {
        let (rows, cols) = (g.len(), h.len());
        let data: Vec<f64> = g
            .atoms()
            .par_iter()
            .flat_map_iter(|a| h.atoms().iter().map(|b| f(a, b)).collect::<Vec<_>>())
            .collect();
        if let Some(pos) = data.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::BadLink {
                a_index: pos / cols,
                b_index: pos % cols,
                value: data[pos],
            });
        }
        Ok(LinkMatrix {
            rows,
            cols,
            data,
            gw: g.weights().to_vec(),
            hw: h.weights().to_vec(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn value(&self, j: usize, i: usize) -> f64 {
        self.data[j * self.cols + i]
    }

    /// `int int f dG dH`.
    pub fn mean(&self) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.rows {
            for i in 0..self.cols {
                acc += self.gw[j] * self.hw[i] * self.value(j, i);
            }
        }
        acc
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// Mass at zero forced by vanishing rows (zero coordinates) and vanishing
    /// columns (zero samples): `max(0, G(A0), 1 - (1 - H(B0)) / c)`.
    pub fn structural_zero_atom(&self, c: f64) -> f64 {
        let zero_rows: f64 = (0..self.rows)
            .filter(|&j| (0..self.cols).all(|i| self.hw[i] == 0.0 || self.value(j, i) == 0.0))
            .map(|j| self.gw[j])
            .sum();
        let zero_cols: f64 = (0..self.cols)
            .filter(|&i| (0..self.rows).all(|j| self.gw[j] == 0.0 || self.value(j, i) == 0.0))
            .map(|i| self.hw[i])
            .sum();
        let rank_bound = 1.0 - (1.0 - zero_cols) / c;
        zero_rows.max(rank_bound).clamp(0.0, 1.0) + 0.0
    }

    /// One application of the right-hand side: `out = T(k)`.
    fn apply(&self, k: &[Complex64], z: Complex64, c: f64, out: &mut [Complex64], u: &mut [Complex64]) {
        u.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for j in 0..self.rows {
            let w = self.gw[j] / (k[j] + 1.0);
            let row = &self.data[j * self.cols..(j + 1) * self.cols];
            for (ui, f) in u.iter_mut().zip(row) {
                *ui += w * *f;
            }
        }
        for (ui, hw) in u.iter_mut().zip(&self.hw) {
            *ui = *hw / (-z + *ui * c);
        }
        for (j, o) in out.iter_mut().enumerate() {
            let row = &self.data[j * self.cols..(j + 1) * self.cols];
            let mut acc = Complex64::new(0.0, 0.0);
            for (d, f) in u.iter().zip(row) {
                acc += *d * *f;
            }
            *o = acc;
        }
    }
}

fn stieltjes_from_kernel(weights: &[f64], k: &[Complex64], z: Complex64) -> Complex64 {
    let s: Complex64 = weights.iter().zip(k).map(|(w, kj)| *w / (kj + 1.0)).sum();
    -s / z
}

fn relative_gap(a: &[Complex64], b: &[Complex64]) -> f64 {
    let gap = a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    let size = a.iter().map(|x| x.norm()).fold(1.0, f64::max);
    gap / size
}

struct PointSolution {
    k: Vec<Complex64>,
    residual: f64,
    iterations: usize,
    converged: bool,
}

/// Damped Picard iteration `k <- (1 - d) k + d T(k)` from `init`. On
/// convergence the last undamped image `T(k)` is returned.
fn iterate<T>(mut k: Vec<Complex64>, cfg: &SolverConfig, mut rhs: T) -> PointSolution
where
    T: FnMut(&[Complex64], &mut [Complex64]),
{
    let mut next = vec![Complex64::new(0.0, 0.0); k.len()];
    let mut residual = f64::INFINITY;
    for it in 1..=cfg.max_iter {
        rhs(&k, &mut next);
        if next.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return PointSolution {
                k,
                residual: f64::INFINITY,
                iterations: it,
                converged: false,
            };
        }
        residual = relative_gap(&k, &next);
        if residual <= cfg.tol {
            return PointSolution {
                k: next,
                residual,
                iterations: it,
                converged: true,
            };
        }
        for (kj, tj) in k.iter_mut().zip(&next) {
            *kj = *kj * (1.0 - cfg.damping) + *tj * cfg.damping;
        }
    }
    PointSolution {
        k,
        residual,
        iterations: cfg.max_iter,
        converged: false,
    }
}

/// Sweeps the grid in fixed chunks; inside a chunk each point starts from
/// the previous converged kernel and falls back to `cfg.init` on failure.
fn sweep<S>(z: &ZGrid, width: usize, cfg: &SolverConfig, solve: S) -> Vec<PointSolution>
where
    S: Fn(Complex64, Vec<Complex64>) -> PointSolution + Sync,
{
    let cold = vec![cfg.init; width];
    let starts: Vec<usize> = (0..z.len()).step_by(CHUNK).collect();
    starts
        .into_par_iter()
        .flat_map_iter(|start| {
            let end = (start + CHUNK).min(z.len());
            let mut out = Vec::with_capacity(end - start);
            let mut warm: Option<Vec<Complex64>> = None;
            for zk in start..end {
                let point = z.point(zk);
                let mut sol = solve(point, warm.clone().unwrap_or_else(|| cold.clone()));
                if !sol.converged && warm.is_some() {
                    sol = solve(point, cold.clone());
                }
                warm = sol.converged.then(|| sol.k.clone());
                out.push(sol);
            }
            out
        })
        .collect()
}

fn check_common(c: f64, cfg: &SolverConfig) -> Result<()> {
    cfg.validate()?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::BadConfig(format!("dimension ratio c must be positive, got {c}")));
    }
    Ok(())
}

/// Solves the master equation at every grid point.
pub fn solve_master<F>(
    g: &DiscreteMeasure,
    h: &DiscreteMeasure,
    f: F,
    c: f64,
    z: &ZGrid,
    cfg: &SolverConfig,
) -> Result<KernelField>
where
    F: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    let link = LinkMatrix::build(g, h, f)?;
    solve_master_with(g, &link, c, z, cfg)
}

/// [`solve_master`] with a prebuilt link matrix over `g`'s atoms.
pub fn solve_master_with(
    g: &DiscreteMeasure,
    link: &LinkMatrix,
    c: f64,
    z: &ZGrid,
    cfg: &SolverConfig,
) -> Result<KernelField> {
    check_common(c, cfg)?;
    let width = link.rows;
    let sols = sweep(z, width, cfg, |point, start| {
        let mut u = vec![Complex64::new(0.0, 0.0); link.cols];
        iterate(start, cfg, |k, out| link.apply(k, point, c, out, &mut u))
    });
    Ok(assemble(g, z, c, link.structural_zero_atom(c), sols, |zk, k| {
        stieltjes_from_kernel(&link.gw, k, z.point(zk))
    }))
}

fn assemble<M>(
    g: &DiscreteMeasure,
    z: &ZGrid,
    c: f64,
    zero_atom: f64,
    sols: Vec<PointSolution>,
    m_of: M,
) -> KernelField
where
    M: Fn(usize, &[Complex64]) -> Complex64,
{
    let mut field = KernelField {
        a_atoms: g.atoms().to_vec(),
        z: z.clone(),
        k: Vec::with_capacity(sols.len()),
        m: Vec::with_capacity(sols.len()),
        residual: Vec::with_capacity(sols.len()),
        converged: Vec::with_capacity(sols.len()),
        iterations: Vec::with_capacity(sols.len()),
        c,
        zero_atom,
    };
    for (zk, s) in sols.into_iter().enumerate() {
        field.m.push(m_of(zk, &s.k));
        field.k.push(s.k);
        field.residual.push(s.residual);
        field.converged.push(s.converged);
        field.iterations.push(s.iterations);
    }
    field
}

/// Solves the scalar equation for a separable link `f(a, b) = g(a) h(b)`:
///
/// ```text
/// K(z) = int h(b) / ( -z + c h(b) int g(a) / (g(a) K(z) + 1) dG(a) ) dH(b)
/// m(z) = -(1/z) int dG(a) / (g(a) K(z) + 1)
/// ```
///
/// The returned field stores `K(a_j, z) = g(a_j) K(z)`.
pub fn solve_separable(
    g: &DiscreteMeasure,
    g_values: &[f64],
    h: &DiscreteMeasure,
    h_values: &[f64],
    c: f64,
    z: &ZGrid,
    cfg: &SolverConfig,
) -> Result<KernelField> {
    check_common(c, cfg)?;
    if g_values.len() != g.len() || h_values.len() != h.len() {
        return Err(Error::DimensionMismatch("separable factors must match the atom counts".into()));
    }
    for (j, &v) in g_values.iter().enumerate() {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::BadLink { a_index: j, b_index: 0, value: v });
        }
    }
    for (i, &v) in h_values.iter().enumerate() {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::BadLink { a_index: 0, b_index: i, value: v });
        }
    }
    let gw = g.weights();
    let hw = h.weights();
    let sols = sweep(z, 1, cfg, |point, start| {
        iterate(start, cfg, |k, out| {
            let inner: Complex64 = gw
                .iter()
                .zip(g_values)
                .map(|(w, gv)| *w * *gv / (k[0] * *gv + 1.0))
                .sum();
            out[0] = hw
                .iter()
                .zip(h_values)
                .map(|(w, hv)| *w * *hv / (-point + inner * (c * *hv)))
                .sum();
        })
    });
    let zero_rows: f64 = gw.iter().zip(g_values).filter(|(_, v)| **v == 0.0).map(|(w, _)| w).sum();
    let zero_cols: f64 = hw.iter().zip(h_values).filter(|(_, v)| **v == 0.0).map(|(w, _)| w).sum();
    let (zero_rows, zero_cols) = if zero_rows >= 1.0 - 1e-15 || zero_cols >= 1.0 - 1e-15 {
        (1.0, 1.0)
    } else {
        (zero_rows, zero_cols)
    };
    let zero_atom = zero_rows.max(1.0 - (1.0 - zero_cols) / c).clamp(0.0, 1.0) + 0.0;
    let mut field = assemble(g, z, c, zero_atom, sols, |zk, k| {
        let s: Complex64 = gw
            .iter()
            .zip(g_values)
            .map(|(w, gv)| *w / (k[0] * *gv + 1.0))
            .sum();
        -s / z.point(zk)
    });
    for row in &mut field.k {
        let ks = row[0];
        *row = g_values.iter().map(|gv| ks * *gv).collect();
    }
    Ok(field)
}

/// Relative sup-norm gap `|T(K) - K| / max(1, |K|)` of the master equation at
/// the stored kernel, per grid point.
pub fn equation_residual<F>(field: &KernelField, g: &DiscreteMeasure, h: &DiscreteMeasure, f: F, c: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    if field.a_atoms.len() != g.len() || field.k.iter().any(|row| row.len() != g.len()) {
        return Err(Error::GridMismatch("field atoms differ from G".into()));
    }
    let link = LinkMatrix::build(g, h, f)?;
    let mut u = vec![Complex64::new(0.0, 0.0); link.cols];
    let mut out = vec![Complex64::new(0.0, 0.0); link.rows];
    Ok(field
        .k
        .iter()
        .enumerate()
        .map(|(zk, k)| {
            link.apply(k, field.z.point(zk), c, &mut out, &mut u);
            relative_gap(k, &out)
        })
        .collect())
}

/// Inverted density on the converged grid points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    pub x: Vec<f64>,
    /// `max(0, Im m(x + i eta) / pi)`: the smoothed density, atom included.
    pub rho: Vec<f64>,
    /// `rho` with the atom's Poisson kernel `atom * eta / (pi (x^2 + eta^2))`
    /// removed and clamped at zero: the continuous part.
    pub continuous: Vec<f64>,
    pub atom_at_zero: f64,
    pub eta: f64,
    pub c: f64,
    pub converged_fraction: f64,
}

/// Sidecar metadata written next to a density CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySidecar {
    pub eta: f64,
    pub atom_at_zero: f64,
    pub c: f64,
    pub converged_fraction: f64,
}

impl DensityCurve {
    /// `int continuous dx` by the trapezoid rule.
    pub fn continuous_mass(&self) -> f64 {
        trapezoid(&self.x, &self.continuous)
    }

    pub fn total_mass(&self) -> f64 {
        self.atom_at_zero + self.continuous_mass()
    }

    /// `int x dLSD` (the atom sits at zero and contributes nothing).
    pub fn first_moment(&self) -> f64 {
        let xr: Vec<f64> = self.x.iter().zip(&self.continuous).map(|(x, r)| x * r).collect();
        trapezoid(&self.x, &xr)
    }

    /// Continuous density at `x` by linear interpolation, zero off the grid.
    pub fn continuous_at(&self, x: f64) -> f64 {
        interp(&self.x, &self.continuous, x)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,rho\n");
        for (x, r) in self.x.iter().zip(&self.rho) {
            let _ = writeln!(out, "{x},{r}");
        }
        out
    }

    pub fn sidecar(&self) -> DensitySidecar {
        DensitySidecar {
            eta: self.eta,
            atom_at_zero: self.atom_at_zero,
            c: self.c,
            converged_fraction: self.converged_fraction,
        }
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

fn interp(x: &[f64], y: &[f64], at: f64) -> f64 {
    if x.is_empty() || at < x[0] || at > x[x.len() - 1] {
        return 0.0;
    }
    let k = x.partition_point(|&v| v <= at);
    if k == 0 {
        return y[0];
    }
    if k == x.len() {
        return y[k - 1];
    }
    let (x0, x1) = (x[k - 1], x[k]);
    y[k - 1] + (y[k] - y[k - 1]) * (at - x0) / (x1 - x0)
}

/// `rho = Im m / pi` on converged points, with the zero atom taken from the
/// field.
pub fn invert_density(field: &KernelField) -> Result<DensityCurve> {
    let eta = field.z.eta();
    let atom = field.zero_atom;
    let mut x = Vec::new();
    let mut rho = Vec::new();
    let mut continuous = Vec::new();
    for (zk, (&ok, m)) in field.converged.iter().zip(&field.m).enumerate() {
        if !ok {
            continue;
        }
        let xk = field.z.x()[zk];
        let raw = (m.im / std::f64::consts::PI).max(0.0);
        let bump = atom * eta / (std::f64::consts::PI * (xk * xk + eta * eta));
        x.push(xk);
        rho.push(raw);
        continuous.push((raw - bump).max(0.0));
    }
    if x.is_empty() {
        return Err(Error::NothingConverged);
    }
    Ok(DensityCurve {
        x,
        rho,
        continuous,
        atom_at_zero: atom,
        eta,
        c: field.c,
        converged_fraction: field.converged_fraction(),
    })
}

/// `F(x) = atom 1{x >= 0} + int_{-inf}^x continuous`, with the continuous
/// part rescaled so that `F` ends at one.
pub fn cdf_from_density(d: &DensityCurve) -> Result<Cdf> {
    let total = d.total_mass();
    if !(MASS_BAND.0..=MASS_BAND.1).contains(&total) {
        return Err(Error::MassOutOfBand(total));
    }
    let cont = d.continuous_mass();
    let atom = d.atom_at_zero;
    let scale = if cont > 0.0 { (1.0 - atom) / cont } else { 0.0 };
    let atom = if cont > 0.0 { atom } else { 1.0 };

    // cumulative continuous mass at each grid point
    let mut cum = Vec::with_capacity(d.x.len());
    let mut acc = 0.0;
    for k in 0..d.x.len() {
        if k > 0 {
            acc += 0.5 * (d.x[k] - d.x[k - 1]) * (d.continuous[k] + d.continuous[k - 1]);
        }
        cum.push(acc * scale);
    }
    let mut knots: Vec<f64> = d.x.clone();
    let mut mass = cum;
    if atom > 0.0 && knots.binary_search_by(|v| v.total_cmp(&0.0)).is_err() {
        let at = knots.partition_point(|&v| v < 0.0);
        let value = if at == 0 {
            0.0
        } else if at == knots.len() {
            mass[at - 1]
        } else {
            let (x0, x1) = (knots[at - 1], knots[at]);
            mass[at - 1] + (mass[at] - mass[at - 1]) * (0.0 - x0) / (x1 - x0)
        };
        knots.insert(at, 0.0);
        mass.insert(at, value);
    }
    let jump = |x: f64, inclusive: bool| {
        if (inclusive && x >= 0.0) || (!inclusive && x > 0.0) {
            atom
        } else {
            0.0
        }
    };
    let right: Vec<f64> = knots.iter().zip(&mass).map(|(x, c)| jump(*x, true) + c).collect();
    let mut left: Vec<f64> = knots.iter().zip(&mass).map(|(x, c)| jump(*x, false) + c).collect();
    // nothing below the first knot
    left[0] = 0.0;
    let last = right.len() - 1;
    let mut right = right;
    right[last] = 1.0;
    if last == 0 {
        left[0] = 0.0;
    }
    Cdf::new(knots, left, right)
}
