//! Probability measures on the real line (and on `R^d` for parameter spaces),
//! their distribution functions, and the distances used to compare spectra.
//!
//! Everything here is immutable once constructed.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the raw weight sum accepted by [`make_discrete`].
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Slack used when locating a probability level on a cumulative sum.
const LEVEL_SLACK: f64 = 1e-12;

/// A finitely supported probability measure with vector-valued atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure", into = "RawMeasure")]
pub struct DiscreteMeasure {
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeasure {
    atoms: Vec<AtomRepr>,
    weights: Vec<f64>,
}

/// Scalar atoms may be written as bare numbers in JSON.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum AtomRepr {
    Vector(Vec<f64>),
    Scalar(f64),
}

impl TryFrom<RawMeasure> for DiscreteMeasure {
    type Error = Error;

    fn try_from(raw: RawMeasure) -> Result<Self> {
        let atoms = raw
            .atoms
            .into_iter()
            .map(|a| match a {
                AtomRepr::Vector(v) => v,
                AtomRepr::Scalar(x) => vec![x],
            })
            .collect();
        make_discrete(atoms, raw.weights)
    }
}

impl From<DiscreteMeasure> for RawMeasure {
    fn from(m: DiscreteMeasure) -> Self {
        RawMeasure {
            atoms: m.atoms.into_iter().map(AtomRepr::Vector).collect(),
            weights: m.weights,
        }
    }
}

/// Builds a validated, exactly normalized [`DiscreteMeasure`].
///
/// The raw weight sum must be within `1e-9` of one; weights are then
/// rescaled to sum to one.
pub fn make_discrete(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<DiscreteMeasure> {
    if atoms.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    if atoms.len() != weights.len() {
        return Err(Error::MalformedMeasure(format!(
            "{} atoms but {} weights",
            atoms.len(),
            weights.len()
        )));
    }
    let dim = atoms[0].len();
    if dim == 0 {
        return Err(Error::MalformedMeasure("atoms must have dimension >= 1".into()));
    }
    for (j, a) in atoms.iter().enumerate() {
        if a.len() != dim {
            return Err(Error::MalformedMeasure(format!(
                "atom {j} has dimension {} (expected {dim})",
                a.len()
            )));
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::MalformedMeasure(format!("atom {j} is not finite")));
        }
    }
    for (index, &weight) in weights.iter().enumerate() {
        if weight < 0.0 || weight.is_nan() {
            return Err(Error::NegativeWeight { index, weight });
        }
    }
    let sum: f64 = weights.iter().sum();
    if !sum.is_finite() || (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::WeightSumMismatch { sum });
    }
    let weights = weights.into_iter().map(|w| w / sum).collect();
    Ok(DiscreteMeasure { atoms, weights })
}

impl DiscreteMeasure {
    /// Measure with scalar atoms.
    pub fn scalar(atoms: &[f64], weights: &[f64]) -> Result<Self> {
        make_discrete(atoms.iter().map(|&a| vec![a]).collect(), weights.to_vec())
    }

    /// Dirac mass at a scalar point.
    pub fn point_mass(x: f64) -> Self {
        DiscreteMeasure {
            atoms: vec![vec![x]],
            weights: vec![1.0],
        }
    }

    /// Normalized counting measure of a list of reals; equal values are merged
    /// into one atom and atoms come out sorted.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::MalformedMeasure("non-finite value".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mut atoms: Vec<Vec<f64>> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for v in sorted {
            match atoms.last() {
                Some(last) if last[0] == v => *counts.last_mut().unwrap() += 1,
                _ => {
                    atoms.push(vec![v]);
                    counts.push(1);
                }
            }
        }
        let weights = counts.into_iter().map(|c| c as f64 / n).collect();
        Ok(DiscreteMeasure { atoms, weights })
    }

    /// Normalized counting measure of a list of vectors, merging duplicates.
    /// Atoms keep first-occurrence order.
    pub fn from_vectors(vectors: &[Vec<f64>]) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        let n = vectors.len() as f64;
        let mut atoms: Vec<Vec<f64>> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for v in vectors {
            match atoms.iter().position(|a| a == v) {
                Some(j) => weights[j] += 1.0 / n,
                None => {
                    atoms.push(v.clone());
                    weights.push(1.0 / n);
                }
            }
        }
        let sum: f64 = weights.iter().sum();
        make_discrete(atoms, weights.into_iter().map(|w| w / sum).collect())
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Dimension of the atom vectors.
    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    /// First coordinate of every atom.
    pub fn scalar_atoms(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a[0]).collect()
    }

    /// Applies a permutation to the atoms (and their weights).
    pub fn permuted(&self, order: &[usize]) -> Self {
        DiscreteMeasure {
            atoms: order.iter().map(|&j| self.atoms[j].clone()).collect(),
            weights: order.iter().map(|&j| self.weights[j]).collect(),
        }
    }

    /// Mean of the first coordinate.
    pub fn mean(&self) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(a, w)| a[0] * w)
            .sum()
    }

    /// Sorted scalar atoms with cumulative weights; requires `dim() == 1`.
    fn sorted_steps(&self) -> Result<Vec<(f64, f64)>> {
        if self.dim() != 1 {
            return Err(Error::MalformedMeasure(
                "distribution function needs scalar atoms".into(),
            ));
        }
        let mut pairs: Vec<(f64, f64)> = self
            .atoms
            .iter()
            .zip(&self.weights)
            .map(|(a, &w)| (a[0], w))
            .collect();
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut acc = 0.0;
        let mut steps: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
        for (x, w) in pairs {
            acc += w;
            match steps.last_mut() {
                Some(last) if last.0 == x => last.1 = acc,
                _ => steps.push((x, acc)),
            }
        }
        if let Some(last) = steps.last_mut() {
            last.1 = 1.0;
        }
        Ok(steps)
    }

    /// Distribution function of a scalar measure.
    pub fn cdf(&self) -> Result<Cdf> {
        let steps = self.sorted_steps()?;
        let mut knots = Vec::with_capacity(steps.len());
        let mut left = Vec::with_capacity(steps.len());
        let mut right = Vec::with_capacity(steps.len());
        let mut prev = 0.0;
        for (x, cum) in steps {
            knots.push(x);
            left.push(prev);
            right.push(cum);
            prev = cum;
        }
        Ok(Cdf { knots, left, right })
    }
}

/// Empirical distribution of a sample, kept sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    samples: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::MalformedMeasure("non-finite sample".into()));
        }
        samples.sort_by(f64::total_cmp);
        Ok(EmpiricalDistribution { samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn cdf(&self) -> Cdf {
        let n = self.samples.len() as f64;
        let mut knots: Vec<f64> = Vec::new();
        let mut left: Vec<f64> = Vec::new();
        let mut right: Vec<f64> = Vec::new();
        for (i, &x) in self.samples.iter().enumerate() {
            let upto = (i + 1) as f64 / n;
            if knots.last() == Some(&x) {
                *right.last_mut().unwrap() = upto;
            } else {
                left.push(right.last().copied().unwrap_or(0.0));
                knots.push(x);
                right.push(upto);
            }
        }
        Cdf { knots, left, right }
    }
}

/// Quantile function sampled at the midpoints `(j - 1/2) / Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawQuantiles", into = "RawQuantiles")]
pub struct QuantileFunction {
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuantiles {
    quantiles: Vec<f64>,
}

impl TryFrom<RawQuantiles> for QuantileFunction {
    type Error = Error;
    fn try_from(raw: RawQuantiles) -> Result<Self> {
        QuantileFunction::new(raw.quantiles)
    }
}

impl From<QuantileFunction> for RawQuantiles {
    fn from(q: QuantileFunction) -> Self {
        RawQuantiles { quantiles: q.values }
    }
}

impl QuantileFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::MalformedMeasure(
                "quantile function needs at least two levels".into(),
            ));
        }
        if values.windows(2).any(|w| w[1] < w[0]) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::MalformedMeasure(
                "quantile values must be finite and nondecreasing".into(),
            ));
        }
        Ok(QuantileFunction { values })
    }

    /// Samples the quantile function of `m` at the `q` midpoint levels.
    pub fn sample<M: Quantile>(m: &M, q: usize) -> Result<Self> {
        let values = (1..=q)
            .map(|j| m.quantile((j as f64 - 0.5) / q as f64))
            .collect::<Result<Vec<_>>>()?;
        QuantileFunction::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Left-continuous generalized inverse of a distribution function,
/// `inf { u : F(u) >= s }`.
pub trait Quantile {
    fn quantile(&self, s: f64) -> Result<f64>;
}

fn check_level(s: f64) -> Result<()> {
    if s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange(s))
    }
}

/// Index of the first of `n` equal-mass steps whose cumulative mass reaches `s`.
fn equal_mass_index(s: f64, n: usize) -> usize {
    let k = (s * n as f64 - LEVEL_SLACK).ceil() as usize;
    k.clamp(1, n) - 1
}

impl Quantile for QuantileFunction {
    fn quantile(&self, s: f64) -> Result<f64> {
        check_level(s)?;
        Ok(self.values[equal_mass_index(s, self.values.len())])
    }
}

impl Quantile for EmpiricalDistribution {
    fn quantile(&self, s: f64) -> Result<f64> {
        check_level(s)?;
        Ok(self.samples[equal_mass_index(s, self.samples.len())])
    }
}

impl Quantile for DiscreteMeasure {
    fn quantile(&self, s: f64) -> Result<f64> {
        check_level(s)?;
        let steps = self.sorted_steps()?;
        Ok(steps
            .iter()
            .find(|(_, cum)| *cum >= s - LEVEL_SLACK)
            .map(|(x, _)| *x)
            .unwrap_or(steps[steps.len() - 1].0))
    }
}

/// `sum_j w_j * phi(a_j)`.
pub fn integrate<F>(m: &DiscreteMeasure, phi: F) -> Result<Complex64>
where
    F: Fn(&[f64]) -> Complex64,
{
    let mut acc = Complex64::new(0.0, 0.0);
    for (j, (a, w)) in m.atoms.iter().zip(&m.weights).enumerate() {
        let v = phi(a);
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(Error::NonFiniteIntegrand(j));
        }
        acc += v * *w;
    }
    Ok(acc)
}

/// Real-valued convenience wrapper over [`integrate`].
pub fn integrate_real<F>(m: &DiscreteMeasure, phi: F) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    integrate(m, |a| Complex64::new(phi(a), 0.0)).map(|c| c.re)
}

/// Midpoint-rule discretization of U(0, 1) with `q` atoms.
pub fn discretize_uniform(q: usize) -> Result<DiscreteMeasure> {
    discretize_interval(0.0, 1.0, q)
}

/// Midpoint-rule discretization of the uniform law on `[lo, hi]`.
pub fn discretize_interval(lo: f64, hi: f64, q: usize) -> Result<DiscreteMeasure> {
    if q < 2 {
        return Err(Error::MalformedMeasure(format!(
            "uniform discretization needs Q >= 2, got {q}"
        )));
    }
    if !(lo < hi) {
        return Err(Error::MalformedMeasure(format!("empty interval [{lo}, {hi}]")));
    }
    let width = hi - lo;
    let atoms = (1..=q)
        .map(|j| vec![lo + width * (j as f64 - 0.5) / q as f64])
        .collect();
    Ok(DiscreteMeasure {
        atoms,
        weights: vec![1.0 / q as f64; q],
    })
}

/// A distribution function that is affine between consecutive knots, may
/// jump at knots, vanishes left of the first knot and is constant after
/// the last. Covers both step functions and piecewise-linear CDFs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cdf {
    knots: Vec<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl Cdf {
    /// `left[k]` is the limit from the left at `knots[k]`, `right[k]` the value.
    pub fn new(knots: Vec<f64>, left: Vec<f64>, right: Vec<f64>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        if knots.len() != left.len() || knots.len() != right.len() {
            return Err(Error::MalformedMeasure("knot arrays differ in length".into()));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::MalformedMeasure("knots must be strictly increasing".into()));
        }
        Ok(Cdf { knots, left, right })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Right-continuous value `F(x)`.
    pub fn value(&self, x: f64) -> f64 {
        let k = self.knots.partition_point(|&u| u <= x);
        if k == 0 {
            return 0.0;
        }
        let i = k - 1;
        if self.knots[i] == x || i + 1 == self.knots.len() {
            return self.right[i];
        }
        self.interpolate(i, x)
    }

    /// Left limit `F(x-)`.
    pub fn left_limit(&self, x: f64) -> f64 {
        let k = self.knots.partition_point(|&u| u < x);
        if k < self.knots.len() && self.knots[k] == x {
            return self.left[k];
        }
        if k == 0 {
            return 0.0;
        }
        let i = k - 1;
        if i + 1 == self.knots.len() {
            return self.right[i];
        }
        self.interpolate(i, x)
    }

    fn interpolate(&self, i: usize, x: f64) -> f64 {
        let (x0, x1) = (self.knots[i], self.knots[i + 1]);
        let (y0, y1) = (self.right[i], self.left[i + 1]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// Final value (total mass represented).
    pub fn total(&self) -> f64 {
        *self.right.last().unwrap()
    }
}

impl From<&EmpiricalDistribution> for Cdf {
    fn from(e: &EmpiricalDistribution) -> Self {
        e.cdf()
    }
}

fn merged_knots(f: &Cdf, g: &Cdf) -> Vec<f64> {
    let mut all: Vec<f64> = f.knots.iter().chain(&g.knots).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    all
}

/// `sup_x |F(x) - G(x)|`, exact for the piecewise-affine representation.
pub fn kolmogorov_distance(f: &Cdf, g: &Cdf) -> f64 {
    merged_knots(f, g)
        .into_iter()
        .map(|x| {
            let at = (f.value(x) - g.value(x)).abs();
            let before = (f.left_limit(x) - g.left_limit(x)).abs();
            at.max(before)
        })
        .fold(0.0, f64::max)
}

/// `int |F(x) - G(x)| dx`, integrated exactly piece by piece.
pub fn wasserstein1(f: &Cdf, g: &Cdf) -> f64 {
    let knots = merged_knots(f, g);
    let mut total = 0.0;
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        let d0 = f.value(a) - g.value(a);
        let d1 = f.left_limit(b) - g.left_limit(b);
        total += (b - a) * abs_affine_mean(d0, d1);
    }
    total
}

/// Mean of `|d0 + (d1 - d0) t|` over `t` in `[0, 1]`.
fn abs_affine_mean(d0: f64, d1: f64) -> f64 {
    if d0 * d1 >= 0.0 {
        0.5 * (d0.abs() + d1.abs())
    } else {
        0.5 * (d0 * d0 + d1 * d1) / (d0.abs() + d1.abs())
    }
}
