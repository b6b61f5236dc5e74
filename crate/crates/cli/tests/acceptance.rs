//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use num_complex::Complex64;
use spectral_law::compare::{batch_compare, batch_compare_series};
use spectral_law::kernel::{invert_density, solve_separable, SolverConfig, ZGrid};
use spectral_law::measures::{kolmogorov_distance, Cdf, DiscreteMeasure};
use spectral_law::simulate::{simulate_esd, simulate_gram, ModelSpec};
use spectral_law::spectra::{clamp_epsilon, esd};
use spectral_law::theory::{
    mixture_two_population_residual, mp_equation_residual, problem_for, solve_lsd, solve_lsd_master,
    solve_model, underline_m, zhang_q, zhang_system_residual, LsdProblem, DEFAULT_Q,
};

type Check = Result<String, String>;

fn spec(json: &str) -> ModelSpec {
    serde_json::from_str(json).expect("pinned spec parses")
}

fn mar() -> ModelSpec {
    spec(
        r#"{"family":"matrix_ar",
            "a_eigs":{"atoms":[0.5,0.6,0.7],"weights":[0.2,0.3,0.5]},
            "b_diag":{"atoms":[0.5,0.8,1.0],"weights":[0.4,0.4,0.2]},
            "burn_in":300}"#,
    )
}

/// The six families of the cross-family agreement check.
fn agreement_specs() -> Vec<ModelSpec> {
    [
        r#"{"family":"iid_covariance","sigma_eigs":{"atoms":[1,3],"weights":[0.5,0.5]}}"#,
        r#"{"family":"separable","a_eigs":{"atoms":[1,2],"weights":[0.5,0.5]},"b_weights":{"atoms":[0.5,1.5],"weights":[0.5,0.5]}}"#,
        r#"{"family":"variance_profile","profile":"1 + s*t"}"#,
        r#"{"family":"linear_process","psi":{"ar":[0.5]}}"#,
        r#"{"family":"diffusion_rcv","gamma":"1 + s*ind(t <= 0.5)"}"#,
        r#"{"family":"finite_mixture","eta":[0.5,0.5],"component_eigs":[{"atoms":[1],"weights":[1]},{"atoms":[1,4],"weights":[0.5,0.5]}]}"#,
    ]
    .iter()
    .map(|s| spec(s))
    .collect()
}

fn all_families() -> Vec<ModelSpec> {
    let mut v = agreement_specs();
    v.push(mar());
    v
}

/// Root of `z K^2 + (z + 1 - c) K + 1 = 0` with the larger imaginary part.
fn mp_kernel(z: Complex64, c: f64) -> Complex64 {
    let b = z + 1.0 - c;
    let disc = (b * b - 4.0 * z).sqrt();
    let r1 = (-b + disc) / (2.0 * z);
    let r2 = (-b - disc) / (2.0 * z);
    if r1.im >= r2.im {
        r1
    } else {
        r2
    }
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let z = ZGrid::line(0.0, 5.0, 800, 0.01).map_err(|e| e.to_string())?;
    let batch = batch_compare_series(&mar(), 400, 600, &[2026], &[1, 5, 10, 15], &z, &SolverConfig::default())
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let ks: Vec<f64> = batch.reports.iter().map(|r| r.ks).collect();
    let spread = ks.iter().cloned().fold(f64::MIN, f64::max) - ks.iter().cloned().fold(f64::MAX, f64::min);
    let detail = format!("ks {ks:.4?}, spread {spread:.4}, {elapsed:.1}s");
    if ks.len() == 4 && ks.iter().all(|k| *k <= 0.06) && spread <= 0.04 && elapsed <= 60.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_2() -> Check {
    let d = DiscreteMeasure::point_mass(1.0);
    let cfg = SolverConfig::default();
    let mut worst: f64 = 0.0;
    for c in [0.25, 0.5, 1.0] {
        let z = ZGrid::line(0.0, 5.0, 800, 0.01).unwrap();
        let field = solve_separable(&d, &[1.0], &d, &[1.0], c, &z, &cfg).map_err(|e| e.to_string())?;
        for k in 0..z.len() {
            if !field.converged[k] {
                return Err(format!("c={c}: point {k} did not converge"));
            }
            let zk = z.point(k);
            let m = -1.0 / (zk * (mp_kernel(zk, c) + 1.0));
            worst = worst.max((field.m[k] - m).norm());
        }
    }
    let z = ZGrid::line(0.05, 3.95, 800, 1e-4).unwrap();
    let field = solve_separable(&d, &[1.0], &d, &[1.0], 1.0, &z, &cfg).map_err(|e| e.to_string())?;
    let density = invert_density(&field).map_err(|e| e.to_string())?;
    let dens_err = density
        .x
        .iter()
        .zip(&density.rho)
        .map(|(x, r)| ((x * (4.0 - x)).sqrt() / (2.0 * std::f64::consts::PI * x) - r).abs())
        .fold(0.0, f64::max);
    let detail = format!(
        "sup |m - oracle| {worst:.2e}, c=1 density sup error {dens_err:.2e}, converged {:.3}",
        density.converged_fraction
    );
    if worst <= 1e-7 && dens_err <= 5e-3 && density.converged_fraction == 1.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_3() -> Check {
    let h = DiscreteMeasure::scalar(&[0.5, 1.0, 2.0], &[0.2, 0.5, 0.3]).unwrap();
    let z = ZGrid::line(-2.0, 5.0, 800, 0.01).unwrap();
    let mut worst: f64 = 0.0;
    let mut atoms = Vec::new();
    for link in [0usize, 1] {
        let prob = match link {
            0 => LsdProblem::new(DiscreteMeasure::point_mass(0.0), h.clone(), |a, b| a[0] * b[0], 0.5, "ab"),
            _ => LsdProblem::new(DiscreteMeasure::point_mass(0.0), h.clone(), |a, b| a[0] * (1.0 + b[0]).sqrt(), 2.0, "a sqrt(1+b)"),
        }
        .unwrap();
        for sol in [solve_lsd(&prob, &z, &SolverConfig::default()), solve_lsd_master(&prob, &z, &SolverConfig::default())] {
            let sol = sol.map_err(|e| e.to_string())?;
            for k in 0..z.len() {
                worst = worst.max((sol.field.m[k] + 1.0 / z.point(k)).norm());
            }
            atoms.push(sol.density.atom_at_zero);
        }
    }
    let detail = format!("sup |m + 1/z| {worst:.1e}, atoms {atoms:?}");
    if worst <= 1e-12 && atoms.iter().all(|a| *a == 1.0) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn converged_points(field: &spectral_law::kernel::KernelField) -> (Vec<usize>, Vec<Complex64>, Vec<Complex64>) {
    let idx: Vec<usize> = (0..field.m.len()).filter(|k| field.converged[*k]).collect();
    let m = idx.iter().map(|k| field.m[*k]).collect();
    let z = idx.iter().map(|k| field.z.point(*k)).collect();
    (idx, m, z)
}

fn criterion_4() -> Check {
    let cfg = SolverConfig::default();
    // MP equation on a two-atom covariance
    let sigma = DiscreteMeasure::scalar(&[1.0, 3.0], &[0.5, 0.5]).unwrap();
    let prob = LsdProblem::new(sigma.clone(), DiscreteMeasure::point_mass(1.0), |a, _| a[0], 0.5, "iid").unwrap();
    let z = prob.default_grid(800, 0.01).unwrap();
    let sol = solve_lsd(&prob, &z, &cfg).map_err(|e| e.to_string())?;
    let (_, m, zs) = converged_points(&sol.field);
    let mp = mp_equation_residual(&m, &zs, &sigma, 0.5);

    // three-equation separable system, 4 x 3 atoms
    let a = DiscreteMeasure::scalar(&[0.5, 1.0, 2.0, 3.0], &[0.1, 0.4, 0.3, 0.2]).unwrap();
    let b = DiscreteMeasure::scalar(&[0.5, 1.0, 2.0], &[0.2, 0.5, 0.3]).unwrap();
    let prob = LsdProblem::new(a.clone(), b.clone(), |x, y| x[0] * y[0], 0.5, "ab").unwrap();
    let z = prob.default_grid(800, 0.01).unwrap();
    let sol = solve_lsd(&prob, &z, &cfg).map_err(|e| e.to_string())?;
    let (idx, m, zs) = converged_points(&sol.field);
    let unit = a.scalar_atoms().iter().position(|v| *v == 1.0).unwrap();
    let p: Vec<Complex64> = idx.iter().map(|k| sol.field.k[*k][unit]).collect();
    let q: Vec<Complex64> = p.iter().zip(&zs).map(|(pk, zk)| zhang_q(*pk, *zk, &a)).collect();
    let zhang = zhang_system_residual(&m, &p, &q, &zs, &a, &b, 0.5);

    // two-population mixture
    let h2 = DiscreteMeasure::scalar(&[1.0, 4.0], &[0.5, 0.5]).unwrap();
    let mut mix: f64 = 0.0;
    for eta1 in [0.0, 0.3, 0.7, 1.0] {
        let s = spec(&format!(
            r#"{{"family":"finite_mixture","eta":[{eta1},{}],"component_eigs":[{{"atoms":[1],"weights":[1]}},{{"atoms":[1,4],"weights":[0.5,0.5]}}]}}"#,
            1.0 - eta1
        ));
        let prob = problem_for(&s, 400, 800).map_err(|e| e.to_string())?;
        let z = prob.default_grid(800, 0.01).unwrap();
        let sol = solve_lsd(&prob, &z, &cfg).map_err(|e| e.to_string())?;
        let (_, m, zs) = converged_points(&sol.field);
        let mu = underline_m(&m, &zs, 0.5);
        mix = mix.max(mixture_two_population_residual(&m, &mu, &zs, eta1, &h2, 0.5));
    }
    let detail = format!("mp {mp:.1e}, three-equation {zhang:.1e}, mixture {mix:.1e}");
    if mp <= 1e-6 && zhang <= 1e-6 && mix <= 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_5() -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    for s in all_families() {
        let prob = problem_for(&s, 400, 600).map_err(|e| e.to_string())?;
        let z = prob.default_grid(2000, 1e-3).unwrap();
        let sol = solve_model(&s, 400, 600, DEFAULT_Q, &z, &SolverConfig::default()).map_err(|e| e.to_string())?;
        ok &= sol.moment_miss <= 0.02;
        parts.push(format!("{} {:.2}%", s.family(), 100.0 * sol.moment_miss));
    }
    let detail = parts.join(", ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_6() -> Check {
    let seeds: Vec<u64> = (1..=20).collect();
    let mut parts = Vec::new();
    let mut ok = true;
    for s in agreement_specs() {
        for n in [800, 600] {
            let prob = problem_for(&s, 400, n).map_err(|e| e.to_string())?;
            let z = prob.default_grid(800, 0.01).unwrap();
            let batch = batch_compare(&s, 400, n, &seeds, &z, &SolverConfig::default()).map_err(|e| e.to_string())?;
            ok &= batch.summary.median_ks <= 0.06;
            parts.push(format!("{}@{} {:.4}", s.family(), n, batch.summary.median_ks));
        }
    }
    let detail = format!("median ks: {}", parts.join(", "));
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_7() -> Check {
    let plain = spec(r#"{"family":"diffusion_rcv","gamma":"1 + s*ind(t <= 0.5)"}"#);
    let drift = spec(r#"{"family":"diffusion_rcv","gamma":"1 + s*ind(t <= 0.5)","drift_bound":0.1}"#);
    let mut worst: f64 = 0.0;
    for seed in [11u64, 12, 13, 14, 15] {
        let a = simulate_esd(&plain, 200, 200, seed).map_err(|e| e.to_string())?;
        let b = simulate_esd(&drift, 200, 200, seed).map_err(|e| e.to_string())?;
        let fa = Cdf::from(&a.distribution().map_err(|e| e.to_string())?);
        let fb = Cdf::from(&b.distribution().map_err(|e| e.to_string())?);
        worst = worst.max(kolmogorov_distance(&fa, &fb));
    }
    let detail = format!("max ks over 5 seeds {worst:.4}");
    if worst <= 0.05 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_8() -> Check {
    // (a) rank-1 links: scalar path against the full master iteration
    let tight = SolverConfig {
        tol: 1e-12,
        max_iter: 100_000,
        ..SolverConfig::default()
    };
    let mut fast_gap: f64 = 0.0;
    for s in [
        spec(r#"{"family":"variance_profile","profile":"s*t"}"#),
        spec(r#"{"family":"separable","a_eigs":{"atoms":[1,2],"weights":[0.5,0.5]},"b_weights":{"atoms":[0.5,1.5],"weights":[0.5,0.5]}}"#),
    ] {
        let prob = problem_for(&s, 400, 800).map_err(|e| e.to_string())?;
        let z = prob.default_grid(400, 0.01).unwrap();
        let fast = solve_lsd(&prob, &z, &tight).map_err(|e| e.to_string())?;
        let slow = solve_lsd_master(&prob, &z, &tight).map_err(|e| e.to_string())?;
        if !fast.separable {
            return Err(format!("{} did not take the scalar path", s.family()));
        }
        for k in 0..z.len() {
            if fast.field.converged[k] && slow.field.converged[k] {
                fast_gap = fast_gap.max((fast.field.m[k] - slow.field.m[k]).norm());
            }
        }
    }
    // (b) linear process: direct problem against the companion path
    let lp = spec(r#"{"family":"linear_process","psi":{"ar":[0.5]}}"#);
    let prob = problem_for(&lp, 400, 800).map_err(|e| e.to_string())?;
    let z = prob.default_grid(800, 0.01).unwrap();
    let direct = solve_lsd(&prob, &z, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let companion = solve_lsd(&prob.companion(), &z, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let mut path_gap: f64 = 0.0;
    let mut shared = 0;
    for k in 0..z.len() {
        if direct.field.converged[k] && companion.field.converged[k] {
            shared += 1;
            path_gap = path_gap.max((direct.field.m[k] - companion.field.m[k]).norm());
        }
    }
    let detail = format!("(a) {fast_gap:.1e}, (b) {path_gap:.1e} on {shared} points");
    if fast_gap <= 1e-8 && path_gap <= 1e-6 && shared > z.len() / 2 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_spectral-law"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

fn same_tree(a: &Path, b: &Path) -> Result<usize, String> {
    let mut names: Vec<_> = fs::read_dir(a).map_err(|e| e.to_string())?.map(|e| e.unwrap().file_name()).collect();
    names.sort();
    let count_b = fs::read_dir(b).map_err(|e| e.to_string())?.count();
    if names.len() != count_b {
        return Err("different file sets".into());
    }
    for name in &names {
        if fs::read(a.join(name)).ok() != fs::read(b.join(name)).ok() {
            return Err(format!("{} differs", name.to_string_lossy()));
        }
    }
    Ok(names.len())
}

fn criterion_9() -> Check {
    let cfg = SolverConfig::default();
    let mut domain_points = 0usize;
    for s in all_families() {
        let prob = problem_for(&s, 400, 600).map_err(|e| e.to_string())?;
        let z = prob.default_grid(400, 0.01).unwrap();
        let sol = solve_lsd(&prob, &z, &cfg).map_err(|e| e.to_string())?;
        for k in 0..z.len() {
            if !sol.field.converged[k] {
                continue;
            }
            let zk = z.point(k);
            for kj in &sol.field.k[k] {
                if kj.im < -cfg.tol || (zk * kj).im < -cfg.tol {
                    return Err(format!("{}: kernel leaves the domain at x = {}", s.family(), zk.re));
                }
            }
            if !(sol.field.m[k].im > 0.0) {
                return Err(format!("{}: Im m <= 0 at x = {}", s.family(), zk.re));
            }
            domain_points += 1;
        }
        let bound = 2.0 * prob.mean_link().map_err(|e| e.to_string())?;
        for y in [10.0, 50.0, 100.0] {
            let zi = ZGrid::new(vec![0.0], y).unwrap();
            let sol = solve_lsd(&prob, &zi, &cfg).map_err(|e| e.to_string())?;
            let gap = (Complex64::new(0.0, y) * sol.field.m[0] + 1.0).norm();
            if !sol.field.converged[0] || gap > bound / y {
                return Err(format!("{}: tail gap {gap:.3e} at y = {y}", s.family()));
            }
        }

        for (p, n) in [(60usize, 90usize), (90, 60)] {
            let gram = simulate_gram(&s, p, n, 5).map_err(|e| e.to_string())?;
            let e = esd(&gram, n).map_err(|e| e.to_string())?;
            let top = *e.eigenvalues.last().unwrap();
            let eps = clamp_epsilon(top);
            let rank = e.eigenvalues.iter().filter(|v| **v > eps).count();
            let sum: f64 = e.eigenvalues.iter().sum();
            if e.eigenvalues[0] < -eps || rank > p.min(n) || (sum - gram.trace()).abs() > 1e-8 * gram.trace().abs().max(1.0) {
                return Err(format!("{}: spectrum invariants fail at {p}x{n}", s.family()));
            }
        }
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("config.json");
    fs::write(
        &config,
        r#"{
            "model": {"family": "variance_profile", "profile": "1 + s*t"},
            "dims": {"p": 60, "n": 90},
            "zgrid": {"x_min": -0.2, "x_max": 6, "count": 300, "eta": 0.01},
            "seeds": [1, 2, 3]
        }"#,
    )
    .map_err(|e| e.to_string())?;
    let config = config.to_string_lossy().into_owned();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for cmd in ["simulate", "solve", "compare"] {
        for out in [&a, &b] {
            run_cli(&[cmd, "--config", &config, "--out", &out.to_string_lossy()])?;
        }
    }
    let files = same_tree(&a, &b)?;
    Ok(format!(
        "domain on {domain_points} points, tails at y = 10/50/100, spectra for 7 families, {files} CLI files identical"
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("matrix-AR reproduction", criterion_1),
        ("Marchenko-Pastur closed form", criterion_2),
        ("degenerate law", criterion_3),
        ("closed-form residuals", criterion_4),
        ("first-moment identity", criterion_5),
        ("simulation-theory agreement", criterion_6),
        ("drift robustness", criterion_7),
        ("two-path equivalences", criterion_8),
        ("property suite", criterion_9),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail} [{secs:.1}s]", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail} [{secs:.1}s]", k + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of 9 criteria failed");
        std::process::exit(1);
    }
    println!("all 9 criteria passed");
}
