//! Distances between empirical spectra and solved limiting laws.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{cdf_from_density, DensityCurve, SolverConfig, ZGrid};
use crate::measures::{kolmogorov_distance, wasserstein1, Cdf};
use crate::simulate::{simulate_esd_series, ModelSpec, Seed};
use crate::spectra::Esd;
use crate::theory::{solve_model, LsdProblem, ModelSolution, DEFAULT_Q};

/// Where a report came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub family: String,
    pub p: usize,
    pub n: usize,
    pub seed: Option<Seed>,
    /// Observation index for matrix-AR trajectories.
    pub t: Option<usize>,
    pub eta: f64,
    pub q: Option<usize>,
    pub atom_at_zero: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub ks: f64,
    pub w1: f64,
    /// `|mean(ESD) - int int f dG dH|`.
    pub moment_gap: f64,
    pub converged_fraction: f64,
    pub metadata: ReportMeta,
}

impl ComparisonReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Compares one ESD with a solved density.
pub fn compare(e: &Esd, d: &DensityCurve, prob: &LsdProblem, meta: ReportMeta) -> Result<ComparisonReport> {
    let theory = cdf_from_density(d)?;
    compare_with_cdf(e, &theory, d.converged_fraction, prob.mean_link()?, meta)
}

fn compare_with_cdf(e: &Esd, theory: &Cdf, converged_fraction: f64, mean: f64, meta: ReportMeta) -> Result<ComparisonReport> {
    let empirical = Cdf::from(&e.distribution()?);
    Ok(ComparisonReport {
        ks: kolmogorov_distance(&empirical, theory),
        w1: wasserstein1(&empirical, theory),
        moment_gap: (e.mean() - mean).abs(),
        converged_fraction,
        metadata: meta,
    })
}

/// Median and maximum of the per-seed metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub count: usize,
    pub median_ks: f64,
    pub max_ks: f64,
    pub median_w1: f64,
    pub max_w1: f64,
    pub median_moment_gap: f64,
    pub max_moment_gap: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

impl BatchSummary {
    pub fn of(reports: &[ComparisonReport]) -> Result<Self> {
        if reports.is_empty() {
            return Err(Error::EmptySeeds);
        }
        let ks: Vec<f64> = reports.iter().map(|r| r.ks).collect();
        let w1: Vec<f64> = reports.iter().map(|r| r.w1).collect();
        let gap: Vec<f64> = reports.iter().map(|r| r.moment_gap).collect();
        Ok(BatchSummary {
            count: reports.len(),
            median_ks: median(ks.clone()),
            max_ks: max(&ks),
            median_w1: median(w1.clone()),
            max_w1: max(&w1),
            median_moment_gap: median(gap.clone()),
            max_moment_gap: max(&gap),
        })
    }
}

#[derive(Debug, Clone)]
pub struct BatchReport {
    pub reports: Vec<ComparisonReport>,
    /// The simulated spectra, aligned with `reports`.
    pub esds: Vec<Esd>,
    pub summary: BatchSummary,
    pub solution: ModelSolution,
}

impl BatchReport {
    /// One row per report plus `median` and `max` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,t,ks,w1,moment_gap,converged_fraction\n");
        for r in &self.reports {
            let seed = r.metadata.seed.map(|s| s.to_string()).unwrap_or_default();
            let t = r.metadata.t.map(|t| t.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{seed},{t},{},{},{},{}",
                r.ks, r.w1, r.moment_gap, r.converged_fraction
            );
        }
        let s = &self.summary;
        let _ = writeln!(out, "median,,{},{},{},", s.median_ks, s.median_w1, s.median_moment_gap);
        let _ = writeln!(out, "max,,{},{},{},", s.max_ks, s.max_w1, s.max_moment_gap);
        out
    }
}

/// Solves once and compares against one simulation per seed (and per `t`
/// for matrix-AR trajectories). Reports are ordered by seed, then `t`.
pub fn batch_compare(spec: &ModelSpec, p: usize, n: usize, seeds: &[Seed], z: &ZGrid, cfg: &SolverConfig) -> Result<BatchReport> {
    batch_compare_series(spec, p, n, seeds, &[], z, cfg)
}

/// [`batch_compare`] over several observation indices `ts`; an empty list
/// uses the spec's own index.
pub fn batch_compare_series(
    spec: &ModelSpec,
    p: usize,
    n: usize,
    seeds: &[Seed],
    ts: &[usize],
    z: &ZGrid,
    cfg: &SolverConfig,
) -> Result<BatchReport> {
    if seeds.is_empty() {
        return Err(Error::EmptySeeds);
    }
    let solution = solve_model(spec, p, n, DEFAULT_Q, z, cfg)?;
    let density = &solution.solution.density;
    let theory = cdf_from_density(density)?;
    let mean = solution.problem.mean_link()?;
    let own_t = match spec {
        ModelSpec::MatrixAr { t, .. } => vec![*t],
        _ => vec![1],
    };
    let (ts, label_t): (Vec<usize>, bool) = match (ts.is_empty(), spec) {
        (true, ModelSpec::MatrixAr { .. }) => (own_t, true),
        (true, _) => (own_t, false),
        (false, ModelSpec::MatrixAr { .. }) => (ts.to_vec(), true),
        (false, _) => (vec![1], false),
    };
    let per_seed: Vec<Vec<(ComparisonReport, Esd)>> = seeds
        .par_iter()
        .map(|&seed| {
            let esds = simulate_esd_series(spec, p, n, seed, &ts)?;
            esds.into_iter()
                .zip(&ts)
                .map(|(e, &t)| {
                    let meta = ReportMeta {
                        family: spec.family().to_string(),
                        p,
                        n,
                        seed: Some(seed),
                        t: label_t.then_some(t),
                        eta: z.eta(),
                        q: solution.problem.q,
                        atom_at_zero: density.atom_at_zero,
                    };
                    let r = compare_with_cdf(&e, &theory, density.converged_fraction, mean, meta)?;
                    Ok((r, e))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let (reports, esds): (Vec<_>, Vec<_>) = per_seed.into_iter().flatten().unzip();
    let summary = BatchSummary::of(&reports)?;
    Ok(BatchReport {
        reports,
        esds,
        summary,
        solution,
    })
}
