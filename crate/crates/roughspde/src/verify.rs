//! Verification suites with PASS/FAIL reports.

use std::fmt::Write;

use roughspde_core::kernels::{heat_energy_closed_form, kernel_energy, KernelKind};
use roughspde_core::regularity::default_pair_suite;
use roughspde_core::solver::{picard_constant_recursion, picard_diagnostics, picard_solve_slab, SigmaAffine};
use roughspde_core::noise::sample_noise_slab;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::mc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Suite {
    Noise,
    Kernels,
    Picard,
    PropertyP,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Noise => "noise",
            Suite::Kernels => "kernels",
            Suite::Picard => "picard",
            Suite::PropertyP => "property_p",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.pass)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(s, "{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        let _ = writeln!(s, "suite {}: {}", self.suite.name(), if self.passed() { "PASS" } else { "FAIL" });
        s
    }

    fn push(&mut self, name: impl Into<String>, pass: bool, detail: String) {
        self.checks.push(Check { name: name.into(), pass, detail });
    }
}

pub fn run_suite(cfg: &ExperimentConfig, suite: Suite, workers: usize) -> Result<SuiteReport> {
    match suite {
        Suite::Noise => noise(cfg, workers),
        Suite::Kernels => kernels(cfg, workers),
        Suite::Picard => picard(cfg, workers),
        Suite::PropertyP => property_p(cfg, workers),
    }
}

/// Sample covariance of noise pairings against spectral quadrature.
pub fn noise(cfg: &ExperimentConfig, workers: usize) -> Result<SuiteReport> {
    let checks = mc::noise_covariance(
        cfg.grid()?,
        cfg.hurst()?,
        &default_pair_suite(),
        cfg.run.seed,
        cfg.verify.noise_paths,
        workers,
        cfg.tolerances.covariance_rel,
    )?;
    let mut r = SuiteReport { suite: Suite::Noise, checks: Vec::new() };
    let k = cfg.tolerances.stderr_multiple;
    for c in checks {
        let pass = (c.sample - c.quadrature).abs() <= k * c.stderr + cfg.tolerances.covariance_rel * c.quadrature.abs();
        r.push(
            format!("covariance {}", c.name),
            pass,
            format!(
                "sample {:.6e} +- {:.2e} ({} slabs), quadrature {:.6e}, discrete {:.6e}, refined {:.6e}",
                c.sample, c.stderr, c.paths, c.quadrature, c.discrete, c.discrete_refined
            ),
        );
    }
    Ok(r)
}

/// Kernel-energy scaling and the Gaussian variance oracle.
pub fn kernels(cfg: &ExperimentConfig, workers: usize) -> Result<SuiteReport> {
    let mut r = SuiteReport { suite: Suite::Kernels, checks: Vec::new() };
    let tol = &cfg.tolerances;
    for &h in &cfg.verify.energy_hurst {
        for &lag in &cfg.verify.energy_lags {
            let g1 = kernel_energy(KernelKind::Wave, lag, h, 1e-10)?;
            let g2 = kernel_energy(KernelKind::Wave, 2.0 * lag, h, 1e-10)?;
            let want = 2f64.powf(2.0 * h + 1.0);
            let err = (g2 / g1 - want).abs() / want;
            r.push(
                format!("wave energy ratio H={h} h={lag}"),
                err < tol.wave_ratio,
                format!("g(2h)/g(h) = {:.8}, 2^(2H+1) = {want:.8}, relative error {err:.2e}", g2 / g1),
            );
            let q = kernel_energy(KernelKind::Heat, lag, h, 1e-10)?;
            let closed = heat_energy_closed_form(lag, h);
            let err = (q - closed).abs() / closed;
            r.push(
                format!("heat energy closed form H={h} h={lag}"),
                err < tol.heat_closed_form,
                format!("quadrature {q:.10}, closed form {closed:.10}, relative error {err:.2e}"),
            );
        }
    }
    if cfg.verify.gaussian_paths > 0 {
        let g = mc::gaussian_oracle(
            cfg.kernels.kind,
            cfg.grid()?,
            cfg.hurst()?,
            cfg.run.seed,
            cfg.verify.gaussian_paths,
            workers,
            tol.stderr_multiple,
            tol.gaussian_rel,
        )?;
        r.push(
            format!("gaussian variance {}", g.kind.name()),
            g.pass,
            format!("Var u(T,0) = {:.6} +- {:.2e} ({} paths), c_H g(T) = {:.6}", g.variance, g.stderr, g.paths, g.target),
        );
    }
    Ok(r)
}

/// Ensemble Picard contraction, exactness without feedback, and the constant recursion.
pub fn picard(cfg: &ExperimentConfig, workers: usize) -> Result<SuiteReport> {
    let mut r = SuiteReport { suite: Suite::Picard, checks: Vec::new() };
    let resolved = cfg.resolve()?;
    let exp = resolved.experiment;
    let n = cfg.solver.n_iters.max(2);
    let d = mc::picard_distances(&exp, n, cfg.verify.picard_paths, workers)?;
    let diag = picard_diagnostics(&d, exp.sigma, exp.kernel, exp.hurst, exp.grid.horizon, cfg.solver.contraction_threshold)?;
    let listing = d.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(", ");
    r.push(
        "picard distances strictly decreasing",
        diag.strictly_decreasing && !diag.inconsistent,
        format!(
            "a = {}, {} paths, distances [{listing}], contraction scale {:.3} (expected: {})",
            exp.sigma.a, cfg.verify.picard_paths, diag.contraction_scale, diag.contraction_expected
        ),
    );

    let slab = sample_noise_slab(&exp.grid, exp.hurst, exp.seed)?;
    let w = exp.homogeneous()?;
    let seq = picard_solve_slab(&w, SigmaAffine::new(0.0, exp.sigma.b), &slab, 2)?;
    let exact = seq.fields[2].u == seq.fields[1].u;
    r.push("picard a=0 fixed after one iterate", exact, format!("sup |u2 - u1| = {:e}", seq.distances[1]));

    for &q in &cfg.verify.recursion_products {
        let out = picard_constant_recursion(1.0, 1.0, q, 1.0, cfg.verify.recursion_steps)?;
        let (pass, what) = if q < 1.0 {
            (out.within_bound && !out.diverging, "bounded by the geometric sum")
        } else {
            (out.diverging, "divergence detected")
        };
        r.push(
            format!("constant recursion C*cbar={q}"),
            pass,
            format!("{what}: C_n = {:.4e}, bound {:.4e}, diverging {}", out.last(), out.bound, out.diverging),
        );
    }
    Ok(r)
}

/// Finiteness and refinement stability of the property-(P) integral.
pub fn property_p(cfg: &ExperimentConfig, workers: usize) -> Result<SuiteReport> {
    let mut r = SuiteReport { suite: Suite::PropertyP, checks: Vec::new() };
    let exp = cfg.resolve()?.experiment;
    let pp = cfg.property_p.core();
    let out = mc::property_p_refinement(&exp, pp, cfg.verify.property_p_paths, workers)?;
    let part = |v: &roughspde_core::regularity::PropertyPValue| {
        format!(
            "{:.6} (near {:.4}, far {:.4}, inner {:.4}, tail {:.4}, margin {:.3}, x = {})",
            v.value, v.near, v.far, v.inner, v.tail, v.margin, v.x
        )
    };
    r.push(
        format!("property (P) finite {}", exp.kernel.kind.name()),
        out.finite(),
        format!("coarse {}; fine {}", part(&out.coarse), part(&out.fine)),
    );
    r.push(
        format!("property (P) refinement drift {}", exp.kernel.kind.name()),
        out.stable(cfg.tolerances.drift),
        format!("drift {:.4} (limit {}) over {} paths", out.drift, cfg.tolerances.drift, cfg.verify.property_p_paths),
    );
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.grid.nx = 512;
        c.grid.half_width = 4.0;
        c.grid.nt = 64;
        c.regularity.window = 1.0;
        c.verify.picard_paths = 8;
        c
    }

    #[test]
    fn kernels_suite_passes_without_simulation() {
        let mut c = small();
        c.verify.gaussian_paths = 0;
        let r = kernels(&c, 1).unwrap();
        assert_eq!(r.checks.len(), 12);
        assert!(r.passed(), "{}", r.to_text());
    }

    #[test]
    fn injected_recursion_divergence_is_reported() {
        let mut c = small();
        c.verify.recursion_products = vec![0.5, 1.0, 1.5];
        let r = picard(&c, 2).unwrap();
        let by_name = |n: &str| r.checks.iter().find(|c| c.name == n).unwrap().clone();
        assert!(by_name("picard a=0 fixed after one iterate").pass);
        assert!(by_name("constant recursion C*cbar=0.5").pass);
        let div = by_name("constant recursion C*cbar=1.5");
        assert!(div.pass && div.detail.contains("diverging true"), "{div:?}");
    }

    #[test]
    fn report_text_ends_with_verdict() {
        let r = SuiteReport {
            suite: Suite::Noise,
            checks: vec![Check { name: "x".into(), pass: false, detail: "d".into() }],
        };
        assert!(!r.passed());
        assert_eq!(r.to_text(), "FAIL x: d\nsuite noise: FAIL\n");
    }
}
