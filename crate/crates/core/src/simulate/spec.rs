//! Model specifications for the seven simulated families.

use serde::{Deserialize, Serialize};

use super::expr::Expr;
use crate::error::{Error, Result};
use crate::measures::{make_discrete, DiscreteMeasure, Quantile};

/// A list of per-coordinate values, given either explicitly or as a discrete
/// law expanded to length `len` by its quantiles at `(l - 1/2) / len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Spectrum {
    Values(Vec<f64>),
    Law { atoms: Vec<f64>, weights: Vec<f64> },
}

impl Spectrum {
    pub fn resolve(&self, len: usize, what: &str) -> Result<Vec<f64>> {
        let values = match self {
            Spectrum::Values(v) => {
                if v.len() != len {
                    return Err(Error::DimensionMismatch(format!(
                        "{what} has {} entries, expected {len}",
                        v.len()
                    )));
                }
                v.clone()
            }
            Spectrum::Law { atoms, weights } => {
                let law = make_discrete(atoms.iter().map(|&a| vec![a]).collect(), weights.clone())
                    .map_err(|e| Error::SpecInvariantViolated(format!("{what}: {e}")))?;
                (1..=len)
                    .map(|l| law.quantile((l as f64 - 0.5) / len as f64))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::SpecInvariantViolated(format!(
                "{what} must be finite and nonnegative"
            )));
        }
        Ok(values)
    }
}

/// Moving-average coefficients of the linear-process family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PsiSpec {
    /// `rows[l][j] = psi_j(a_l)`; a single row is shared by every coordinate.
    Table { rows: Vec<Vec<f64>> },
    /// AR(1) rows, `psi_j = phi^j`; a single coefficient is shared.
    Ar { ar: Vec<f64> },
}

impl PsiSpec {
    /// Coefficient table `p x (lags + 1)`; missing lags are zero.
    pub fn coefficients(&self, p: usize, lags: usize) -> Result<Vec<Vec<f64>>> {
        let broadcast = |k: usize, what: &str| -> Result<()> {
            if k == 1 || k == p {
                Ok(())
            } else {
                Err(Error::DimensionMismatch(format!(
                    "{what} has {k} rows, expected 1 or {p}"
                )))
            }
        };
        let rows: Vec<Vec<f64>> = match self {
            PsiSpec::Table { rows } => {
                broadcast(rows.len(), "psi table")?;
                rows.iter()
                    .map(|r| {
                        let mut out = vec![0.0; lags + 1];
                        for (dst, src) in out.iter_mut().zip(r) {
                            *dst = *src;
                        }
                        out
                    })
                    .collect()
            }
            PsiSpec::Ar { ar } => {
                broadcast(ar.len(), "ar list")?;
                if let Some(phi) = ar.iter().find(|phi| !(phi.abs() < 1.0)) {
                    return Err(Error::SpecInvariantViolated(format!(
                        "AR coefficient {phi} is not inside (-1, 1)"
                    )));
                }
                ar.iter()
                    .map(|&phi| (0..=lags).map(|j| phi.powi(j as i32)).collect())
                    .collect()
            }
        };
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::SpecInvariantViolated("psi coefficients must be finite".into()));
        }
        Ok(if rows.len() == 1 { vec![rows[0].clone(); p] } else { rows })
    }

    /// `max_l sum_{j > lags} |psi_j(a_l)|`: the truncation error bound.
    pub fn tail_bound(&self, lags: usize) -> f64 {
        match self {
            PsiSpec::Table { rows } => rows
                .iter()
                .map(|r| r.iter().skip(lags + 1).map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max),
            PsiSpec::Ar { ar } => ar
                .iter()
                .map(|phi| phi.abs().powi(lags as i32 + 1) / (1.0 - phi.abs()))
                .fold(0.0, f64::max),
        }
    }
}

pub const DEFAULT_MA_LAGS: usize = 200;
pub const DEFAULT_AR_BURN_IN: usize = 300;

fn default_ma_lags() -> usize {
    DEFAULT_MA_LAGS
}

fn default_ar_burn_in() -> usize {
    DEFAULT_AR_BURN_IN
}

fn default_t() -> usize {
    1
}

/// One of the seven simulated families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    IidCovariance {
        sigma_eigs: Spectrum,
    },
    Separable {
        a_eigs: Spectrum,
        b_weights: Spectrum,
    },
    VarianceProfile {
        profile: Expr,
    },
    LinearProcess {
        psi: PsiSpec,
        #[serde(default = "default_ma_lags")]
        burn_in: usize,
    },
    DiffusionRcv {
        gamma: Expr,
        /// `tau_0..tau_n`; equally spaced when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        times: Option<Vec<f64>>,
        #[serde(default)]
        drift_bound: f64,
    },
    MatrixAr {
        a_eigs: Spectrum,
        b_diag: Spectrum,
        #[serde(default = "default_t")]
        t: usize,
        #[serde(default = "default_ar_burn_in")]
        burn_in: usize,
    },
    FiniteMixture {
        eta: Vec<f64>,
        component_eigs: Vec<Spectrum>,
        /// Zero means when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        means: Option<Vec<Vec<f64>>>,
    },
}

/// Catalog entry describing one family.
#[derive(Debug, Clone, Serialize)]
pub struct FamilyInfo {
    pub family: &'static str,
    pub required: &'static [&'static str],
    pub optional: &'static [&'static str],
    pub summary: &'static str,
}

pub const CATALOG: [FamilyInfo; 7] = [
    FamilyInfo {
        family: "iid_covariance",
        required: &["sigma_eigs"],
        optional: &[],
        summary: "x = Sigma^{1/2} z with diagonal Sigma",
    },
    FamilyInfo {
        family: "separable",
        required: &["a_eigs", "b_weights"],
        optional: &[],
        summary: "x_i = sqrt(b_i) A^{1/2} z_i",
    },
    FamilyInfo {
        family: "variance_profile",
        required: &["profile"],
        optional: &[],
        summary: "X_ij = sigma(i/p, j/n) Z_ij",
    },
    FamilyInfo {
        family: "linear_process",
        required: &["psi"],
        optional: &["burn_in"],
        summary: "independent rows X_it = sum_j psi_j(l) Z_i,t-j",
    },
    FamilyInfo {
        family: "diffusion_rcv",
        required: &["gamma"],
        optional: &["times", "drift_bound"],
        summary: "realized covariance of diffusion increments",
    },
    FamilyInfo {
        family: "matrix_ar",
        required: &["a_eigs", "b_diag"],
        optional: &["t", "burn_in"],
        summary: "X_t = A X_{t-1} B' + Z_t with diagonal A, B",
    },
    FamilyInfo {
        family: "finite_mixture",
        required: &["eta", "component_eigs"],
        optional: &["means"],
        summary: "x = mu_I + Sigma_I^{1/2} z with I ~ eta",
    },
];

/// Parameters of a [`ModelSpec`] resolved against concrete dimensions.
#[derive(Debug, Clone, PartialEq)]
pub enum Resolved {
    Iid {
        sigma: Vec<f64>,
    },
    Separable {
        a: Vec<f64>,
        b: Vec<f64>,
    },
    Profile {
        sigma: Expr,
    },
    Linear {
        coeffs: Vec<Vec<f64>>,
    },
    Rcv {
        gamma: Expr,
        times: Vec<f64>,
        drift_bound: f64,
    },
    MatrixAr {
        a: Vec<f64>,
        b: Vec<f64>,
        t: usize,
        burn_in: usize,
    },
    Mixture {
        eta: DiscreteMeasure,
        /// Each component sorted ascending.
        eigs: Vec<Vec<f64>>,
        means: Vec<Vec<f64>>,
    },
}

impl ModelSpec {
    pub fn family(&self) -> &'static str {
        match self {
            ModelSpec::IidCovariance { .. } => "iid_covariance",
            ModelSpec::Separable { .. } => "separable",
            ModelSpec::VarianceProfile { .. } => "variance_profile",
            ModelSpec::LinearProcess { .. } => "linear_process",
            ModelSpec::DiffusionRcv { .. } => "diffusion_rcv",
            ModelSpec::MatrixAr { .. } => "matrix_ar",
            ModelSpec::FiniteMixture { .. } => "finite_mixture",
        }
    }

    /// Divisor turning `X X^T` into the matrix whose spectrum is studied:
    /// `n` for sample covariances, 1 for realized covariance (the data
    /// matrix already holds scaled increments).
    pub fn gram_divisor(&self, n: usize) -> f64 {
        match self {
            ModelSpec::DiffusionRcv { .. } => 1.0,
            _ => n as f64,
        }
    }

    /// Validates the spec against `p x n` and expands every parameter.
    pub fn resolve(&self, p: usize, n: usize) -> Result<Resolved> {
        if p == 0 || n == 0 {
            return Err(Error::DimensionMismatch(format!("dimensions must be positive, got {p}x{n}")));
        }
        match self {
            ModelSpec::IidCovariance { sigma_eigs } => Ok(Resolved::Iid {
                sigma: sigma_eigs.resolve(p, "sigma_eigs")?,
            }),
            ModelSpec::Separable { a_eigs, b_weights } => Ok(Resolved::Separable {
                a: a_eigs.resolve(p, "a_eigs")?,
                b: b_weights.resolve(n, "b_weights")?,
            }),
            ModelSpec::VarianceProfile { profile } => {
                for i in 1..=p {
                    for j in 1..=n {
                        let (s, t) = (i as f64 / p as f64, j as f64 / n as f64);
                        let v = profile.eval(s, t);
                        if !v.is_finite() {
                            return Err(Error::NonFiniteProfile { s, t });
                        }
                        if v < 0.0 {
                            return Err(Error::SpecInvariantViolated(format!(
                                "profile is negative ({v}) at ({s}, {t})"
                            )));
                        }
                    }
                }
                Ok(Resolved::Profile {
                    sigma: profile.clone(),
                })
            }
            ModelSpec::LinearProcess { psi, burn_in } => Ok(Resolved::Linear {
                coeffs: psi.coefficients(p, *burn_in)?,
            }),
            ModelSpec::DiffusionRcv {
                gamma,
                times,
                drift_bound,
            } => {
                let times = match times {
                    Some(t) => t.clone(),
                    None => (0..=n).map(|i| i as f64 / n as f64).collect(),
                };
                check_partition(&times, n)?;
                if !(drift_bound.is_finite() && *drift_bound >= 0.0) {
                    return Err(Error::SpecInvariantViolated(format!(
                        "drift_bound must be finite and nonnegative, got {drift_bound}"
                    )));
                }
                Ok(Resolved::Rcv {
                    gamma: gamma.clone(),
                    times,
                    drift_bound: *drift_bound,
                })
            }
            ModelSpec::MatrixAr {
                a_eigs,
                b_diag,
                t,
                burn_in,
            } => {
                let a = a_eigs.resolve(p, "a_eigs")?;
                let b = b_diag.resolve(n, "b_diag")?;
                let rho = a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
                    * b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if rho >= 1.0 {
                    return Err(Error::NotStationary(rho));
                }
                if *t == 0 {
                    return Err(Error::SpecInvariantViolated("observation index t must be >= 1".into()));
                }
                Ok(Resolved::MatrixAr {
                    a,
                    b,
                    t: *t,
                    burn_in: *burn_in,
                })
            }
            ModelSpec::FiniteMixture {
                eta,
                component_eigs,
                means,
            } => {
                let k = eta.len();
                if k == 0 || component_eigs.len() != k {
                    return Err(Error::SpecInvariantViolated(format!(
                        "{k} mixture weights but {} components",
                        component_eigs.len()
                    )));
                }
                let eta_measure = make_discrete(
                    (0..k).map(|i| vec![i as f64]).collect(),
                    eta.clone(),
                )
                .map_err(|e| Error::SpecInvariantViolated(format!("eta: {e}")))?;
                let mut eigs = Vec::with_capacity(k);
                for (i, c) in component_eigs.iter().enumerate() {
                    let mut v = c.resolve(p, &format!("component_eigs[{i}]"))?;
                    v.sort_by(f64::total_cmp);
                    eigs.push(v);
                }
                let means = match means {
                    None => vec![vec![0.0; p]; k],
                    Some(m) => {
                        if m.len() != k || m.iter().any(|v| v.len() != p) {
                            return Err(Error::DimensionMismatch(format!(
                                "means must be {k} vectors of length {p}"
                            )));
                        }
                        if m.iter().flatten().any(|v| !v.is_finite()) {
                            return Err(Error::SpecInvariantViolated("means must be finite".into()));
                        }
                        m.clone()
                    }
                };
                Ok(Resolved::Mixture {
                    eta: eta_measure,
                    eigs,
                    means,
                })
            }
        }
    }
}

fn check_partition(times: &[f64], n: usize) -> Result<()> {
    if times.len() != n + 1 {
        return Err(Error::BadPartition(format!(
            "{} time points for {n} intervals",
            times.len()
        )));
    }
    if times[0] != 0.0 || times[n] != 1.0 {
        return Err(Error::BadPartition("times must start at 0 and end at 1".into()));
    }
    if times.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::BadPartition("times must be nondecreasing".into()));
    }
    Ok(())
}
