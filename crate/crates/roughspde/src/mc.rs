//! Parallel Monte Carlo drivers over the core estimators.

use roughspde_core::kernels::{self, InitialData, KernelKind, KernelSpec};
use roughspde_core::noise::{riesz_constant, CoarsenedRows, HurstParam, NoiseSource, SpaceTimeGrid};
use roughspde_core::regularity::{
    covariance_report, pairing_samples, CovariancePair, Experiment, IncrementLadder, MomentPlan, MomentTable,
    PairCheck, PathRunner, PropertyPConfig, PropertyPPlan, PropertyPRefinement, PropertyPRunner, PropertyPSums,
    PropertyPValue, MIN_COVARIANCE_PATHS,
};
use roughspde_core::solver::{picard_solve_slab, PicardAccumulator, SigmaAffine, Stepper};
use roughspde_core::stats::Estimate;
use roughspde_core::{error::Error as CoreError, noise::sample_noise_slab_for_path};

use crate::error::Result;
use crate::parallel::{map_paths, run_chunks};

pub fn increment_moments(
    exp: &Experiment,
    ladders: Vec<IncrementLadder>,
    paths: usize,
    workers: usize,
) -> Result<Vec<MomentTable>> {
    let plan = MomentPlan::new(exp, ladders)?;
    let w = exp.homogeneous()?;
    let per_path = map_paths(paths, workers, || PathRunner::new(exp, &w, &plan), |r, path| r.run(path))?;
    Ok(plan.tables(&per_path)?)
}

fn property_p_sums(
    exp: &Experiment,
    plan: &PropertyPPlan,
    paths: usize,
    workers: usize,
    coarse_of: Option<&Experiment>,
) -> Result<PropertyPSums> {
    let w = exp.homogeneous()?;
    // The noise always comes from the finest grid involved.
    let noise_exp = coarse_of.unwrap_or(exp);
    let parts = run_chunks(
        paths,
        workers,
        || {
            let runner = PropertyPRunner::new(exp, &w, plan)?;
            let src = NoiseSource::new(&noise_exp.grid, exp.hurst, exp.seed, 0)?;
            Ok((runner, CoarsenedRows::new(src.clone()), src))
        },
        || plan.empty_sums(),
        |(runner, coarse, fine), sums, path| {
            if coarse_of.is_some() {
                coarse.inner_mut().reset(exp.seed, path);
                runner.run(coarse, sums)
            } else {
                fine.reset(exp.seed, path);
                runner.run(fine, sums)
            }
        },
    )?;
    let mut total = plan.empty_sums();
    for p in &parts {
        total.merge(p);
    }
    Ok(total)
}

pub fn property_p(exp: &Experiment, cfg: PropertyPConfig, paths: usize, workers: usize) -> Result<PropertyPValue> {
    let plan = PropertyPPlan::new(exp, cfg)?;
    let sums = property_p_sums(exp, &plan, paths, workers, None)?;
    Ok(plan.evaluate(&sums)?)
}

/// Coarse and refined property-(P) values; the coarse paths are driven by
/// the aggregated noise of the refined paths.
pub fn property_p_refinement(
    exp: &Experiment,
    cfg: PropertyPConfig,
    paths: usize,
    workers: usize,
) -> Result<PropertyPRefinement> {
    let fine = exp.refined()?;
    let coarse_plan = PropertyPPlan::new(exp, cfg)?;
    let fine_plan = PropertyPPlan::new(&fine, cfg)?;
    let sf = property_p_sums(&fine, &fine_plan, paths, workers, None)?;
    let sc = property_p_sums(exp, &coarse_plan, paths, workers, Some(&fine))?;
    Ok(PropertyPRefinement::from_values(coarse_plan.evaluate(&sc)?, fine_plan.evaluate(&sf)?))
}

/// Monte Carlo variance of `u(T, 0)` for zero data and `σ ≡ 1` against `c_H·g(T)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GaussianCheck {
    pub kind: KernelKind,
    pub variance: f64,
    pub stderr: f64,
    pub paths: usize,
    pub target: f64,
    pub pass: bool,
}

pub fn gaussian_oracle(
    kind: KernelKind,
    grid: SpaceTimeGrid,
    hurst: HurstParam,
    seed: u64,
    paths: usize,
    workers: usize,
    k: f64,
    rel: f64,
) -> Result<GaussianCheck> {
    let h = hurst.value();
    let kernel = KernelSpec::new(kind, h);
    let w = kernels::homogeneous_solution(kernel, &InitialData::zero(), &grid)?;
    let center = grid.nx / 2;
    let last = grid.nt;
    let squares = map_paths(
        paths,
        workers,
        || Ok((Stepper::new(kernel, grid, SigmaAffine::new(0.0, 1.0))?, NoiseSource::new(&grid, hurst, seed, 0)?)),
        |(stepper, src), path| {
            src.reset(seed, path);
            let mut value = 0.0;
            stepper.evolve(&w, src, None, |n, u| {
                if n == last {
                    value = u[center];
                }
                Ok(())
            })?;
            Ok(value * value)
        },
    )?;
    let e = Estimate::from_samples(&squares);
    let energy = match kind {
        KernelKind::Heat => kernels::heat_energy_closed_form(grid.horizon, h),
        KernelKind::Wave => kernels::kernel_energy(kind, grid.horizon, h, 1e-10)?,
    };
    let target = riesz_constant(h)? * energy;
    Ok(GaussianCheck {
        kind,
        variance: e.mean,
        stderr: e.stderr,
        paths: e.n,
        target,
        pass: e.agrees_with(target, k, rel),
    })
}

/// Noise covariance check over `paths` slabs.
pub fn noise_covariance(
    grid: SpaceTimeGrid,
    hurst: HurstParam,
    pairs: &[CovariancePair],
    seed: u64,
    paths: usize,
    workers: usize,
    rel: f64,
) -> Result<Vec<PairCheck>> {
    if paths < MIN_COVARIANCE_PATHS {
        return Err(CoreError::Refused(format!(
            "{paths} slabs requested, the covariance check needs at least {MIN_COVARIANCE_PATHS}"
        ))
        .into());
    }
    let per_path = map_paths(
        paths,
        workers,
        || NoiseSource::new(&grid, hurst, seed, 0),
        |src, path| pairing_samples(&grid, src, pairs, seed, path),
    )?;
    Ok(covariance_report(&grid, hurst, pairs, &per_path, rel)?)
}

/// Ensemble L² distances between consecutive Picard iterates, sup over nodes.
pub fn picard_distances(exp: &Experiment, n_iters: usize, paths: usize, workers: usize) -> Result<Vec<f64>> {
    let w = exp.homogeneous()?;
    let nodes = w.w.len();
    let parts = run_chunks(
        paths,
        workers,
        || Ok(()),
        || PicardAccumulator::new(n_iters, nodes),
        |_, acc, path| {
            let slab = sample_noise_slab_for_path(&exp.grid, exp.hurst, exp.seed, path)?;
            acc.add(&picard_solve_slab(&w, exp.sigma, &slab, n_iters)?);
            Ok(())
        },
    )?;
    let mut total = PicardAccumulator::new(n_iters, nodes);
    for p in &parts {
        total.merge(p);
    }
    Ok(total.distances())
}

#[cfg(test)]
mod tests {
    use super::*;
    use roughspde_core::regularity::{estimate_increment_moments, Direction};

    fn exp(kind: KernelKind) -> Experiment {
        let grid = SpaceTimeGrid::new(4.0, 512, 1.0, 128).unwrap();
        let hurst = HurstParam::new(0.3).unwrap();
        Experiment {
            kernel: KernelSpec::new(kind, 0.3),
            hurst,
            sigma: SigmaAffine::new(0.5, 1.0),
            grid,
            init: InitialData::zero(),
            window: 1.0,
            ramp: 0.125,
            seed: 5,
        }
    }

    #[test]
    fn parallel_moments_match_sequential_bitwise() {
        let e = exp(KernelKind::Wave);
        let ladder = || vec![IncrementLadder::dyadic(Direction::Space, e.grid.dx(), 0.25, vec![2.0]).unwrap()];
        let seq = estimate_increment_moments(&e, ladder(), 20).unwrap();
        for workers in [1, 3] {
            assert_eq!(increment_moments(&e, ladder(), 20, workers).unwrap(), seq);
        }
    }

    #[test]
    fn parallel_property_p_is_worker_independent() {
        let mut e = exp(KernelKind::Heat);
        e.grid = SpaceTimeGrid::new(8.0, 1024, 1.0, 64).unwrap();
        let cfg = PropertyPConfig { time_cells: 4, candidate_spacing: 0.5, ..PropertyPConfig::default() };
        let a = property_p(&e, cfg, 10, 1).unwrap();
        let b = property_p(&e, cfg, 10, 4).unwrap();
        assert_eq!(a, b);
        assert!(a.finite);
    }

    #[test]
    fn picard_distances_vanish_past_first_iterate_without_feedback() {
        let mut e = exp(KernelKind::Heat);
        e.sigma = SigmaAffine::new(0.0, 1.0);
        let d = picard_distances(&e, 3, 4, 2).unwrap();
        assert!(d[0] > 0.0);
        assert_eq!(&d[1..], &[0.0, 0.0]);
    }
}
