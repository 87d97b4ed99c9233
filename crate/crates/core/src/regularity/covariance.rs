//! Monte Carlo check of the noise covariance against spectral quadrature.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::noise::{
    discrete_pairing_covariance, spectral_covariance_quadrature, HurstParam, NoiseSource, RowSource, SeparableTest,
    SpaceProfile, SpaceTimeGrid, TimeWindow,
};
use crate::stats::{covariance, Estimate};

/// Ensemble size below which the covariance check refuses to run.
pub const MIN_COVARIANCE_PATHS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct CovariancePair {
    pub name: String,
    pub phi: SeparableTest,
    pub psi: SeparableTest,
}

/// Same-bump pair, a shifted pair with partial time overlap, and a pair with
/// disjoint time supports.
pub fn default_pair_suite() -> Vec<CovariancePair> {
    let bump = SeparableTest::gaussian(0.0, 1.0, 0.0, 1.0);
    vec![
        CovariancePair { name: "self-bump".into(), phi: bump, psi: bump },
        CovariancePair {
            name: "shifted-overlap".into(),
            phi: SeparableTest::gaussian(0.0, 0.75, 0.0, 1.0),
            psi: SeparableTest {
                time: TimeWindow { start: 0.25, end: 1.0 },
                space: SpaceProfile::Gaussian { center: 0.5, width: 0.75, amplitude: 1.0 },
            },
        },
        CovariancePair {
            name: "disjoint-time".into(),
            phi: SeparableTest::gaussian(0.0, 0.5, 0.0, 1.0),
            psi: SeparableTest::gaussian(0.5, 1.0, 0.0, 1.0),
        },
    ]
}

/// Outcome for one pair.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PairCheck {
    pub name: String,
    /// Sample covariance of the pairings and its standard error.
    pub sample: f64,
    pub stderr: f64,
    pub paths: usize,
    pub quadrature: f64,
    /// Exact covariance of the discrete pairings on the simulation grid and
    /// on the grid refined once.
    pub discrete: f64,
    pub discrete_refined: f64,
    pub pass: bool,
}

impl PairCheck {
    /// Whether refining the grid moves the discrete covariance toward the quadrature value.
    pub fn bias_decays(&self) -> bool {
        (self.discrete_refined - self.quadrature).abs() <= (self.discrete - self.quadrature).abs() + 1e-15
    }
}

/// Pairings `(X(φ), X(ψ))` of one path for every pair, computed row by row.
pub fn pairing_samples(
    grid: &SpaceTimeGrid,
    source: &mut NoiseSource,
    pairs: &[CovariancePair],
    seed: u64,
    path: u64,
) -> Result<Vec<(f64, f64)>> {
    source.reset(seed, path);
    let weights: Vec<_> = pairs.iter().map(|p| (p.phi.node_weights(grid), p.psi.node_weights(grid))).collect();
    let mut out = vec![(0.0, 0.0); pairs.len()];
    let mut row = vec![0.0; grid.nx];
    for n in 0..grid.nt {
        source.fill_row(n, &mut row)?;
        for (o, ((pt, px), (qt, qx))) in out.iter_mut().zip(&weights) {
            if pt[n] != 0.0 {
                o.0 += pt[n] * px.iter().zip(&row).map(|(a, b)| a * b).sum::<f64>();
            }
            if qt[n] != 0.0 {
                o.1 += qt[n] * qx.iter().zip(&row).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
    Ok(out)
}

/// Compare per-path pairings (listed in path order) with quadrature. A pair
/// passes when `|sample − quadrature| ≤ 3·stderr + rel·|quadrature|`.
pub fn covariance_report(
    grid: &SpaceTimeGrid,
    hurst: HurstParam,
    pairs: &[CovariancePair],
    per_path: &[Vec<(f64, f64)>],
    rel: f64,
) -> Result<Vec<PairCheck>> {
    let h = hurst.value();
    let fine = grid.refined()?;
    pairs
        .iter()
        .enumerate()
        .map(|(i, pair)| {
            let xs: Vec<f64> = per_path.iter().map(|v| v[i].0).collect();
            let ys: Vec<f64> = per_path.iter().map(|v| v[i].1).collect();
            let e: Estimate = covariance(&xs, &ys);
            let quadrature = spectral_covariance_quadrature(&pair.phi, &pair.psi, h, 1e-8)?;
            let pass = e.agrees_with(quadrature, 3.0, rel);
            Ok(PairCheck {
                name: pair.name.clone(),
                sample: e.mean,
                stderr: e.stderr,
                paths: e.n,
                quadrature,
                discrete: discrete_pairing_covariance(grid, h, &pair.phi, &pair.psi),
                discrete_refined: discrete_pairing_covariance(&fine, h, &pair.phi, &pair.psi),
                pass,
            })
        })
        .collect()
}

/// Sequential covariance check over `paths` noise slabs.
pub fn verify_noise_covariance(
    grid: &SpaceTimeGrid,
    hurst: HurstParam,
    pairs: &[CovariancePair],
    paths: usize,
    seed: u64,
) -> Result<Vec<PairCheck>> {
    if paths < MIN_COVARIANCE_PATHS {
        return Err(Error::Refused(format!(
            "{paths} slabs requested, the covariance check needs at least {MIN_COVARIANCE_PATHS}"
        )));
    }
    let mut source = NoiseSource::new(grid, hurst, seed, 0)?;
    let per_path = (0..paths as u64)
        .map(|p| pairing_samples(grid, &mut source, pairs, seed, p))
        .collect::<Result<Vec<_>>>()?;
    covariance_report(grid, hurst, pairs, &per_path, 0.02)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_and_bias_decays() {
        let grid = SpaceTimeGrid::new(8.0, 512, 1.0, 16).unwrap();
        let h = HurstParam::new(0.3).unwrap();
        let pairs = default_pair_suite();
        let checks = verify_noise_covariance(&grid, h, &pairs, MIN_COVARIANCE_PATHS, 7).unwrap();
        for c in &checks {
            assert!(c.pass, "{c:?}");
            assert!(c.bias_decays(), "{c:?}");
        }
        assert_eq!(checks[2].quadrature, 0.0);
        assert_eq!(checks[2].discrete, 0.0);
    }

    #[test]
    fn refuses_small_ensembles() {
        let grid = SpaceTimeGrid::new(8.0, 256, 1.0, 16).unwrap();
        let h = HurstParam::new(0.3).unwrap();
        assert!(matches!(
            verify_noise_covariance(&grid, h, &default_pair_suite(), 100, 1),
            Err(Error::Refused(_))
        ));
    }
}
