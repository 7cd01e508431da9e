use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{empirical_performance, empirical_sensitivity, simulate_filter, NoiseModel};
use crate::error::{Error, Result};
use crate::filterdesign::{tradeoff_curve, FilterGain, SystemModel};

/// Seed of run `index` under a master seed. Independent of scheduling.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

/// Seed-averaged nominal and adverse accuracy of one frontier estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub delta: f64,
    pub lambda: f64,
    pub gain: FilterGain,
    /// Mean over seeds of the empirical performance under the nominal model.
    pub p_nom: f64,
    pub p_adv: f64,
    /// `(p_adv − p_nom) / p_nom` of the seed means.
    pub empirical_sensitivity: f64,
    /// Standard error of the per-seed relative degradation; `None` for one seed.
    pub sensitivity_std_error: Option<f64>,
}

/// Design one estimator per `δ` (with `R` set to the nominal model's second
/// moment), then measure it under both measurement-noise models for every
/// seed. Process noise is Gaussian with covariance `Q`; nominal and adverse
/// runs with the same seed share it.
pub fn estimator_sweep(
    sys: &SystemModel,
    delta_grid: &[f64],
    v_nominal: &NoiseModel,
    v_adverse: &NoiseModel,
    horizon: usize,
    seeds: &[u64],
) -> Result<Vec<SweepRecord>> {
    if seeds.is_empty() {
        return Err(Error::validation("seeds", "need at least one seed"));
    }
    if v_adverse.dim() != v_nominal.dim() {
        return Err(Error::dimension(
            "adverse noise model",
            v_nominal.dim(),
            v_adverse.dim(),
        ));
    }
    let design = sys.with_measurement_covariance(v_nominal.second_moment().clone())?;
    let curve = tradeoff_curve(&design, delta_grid)?;
    let w_model = NoiseModel::gaussian(sys.q().clone())?;

    let jobs: Vec<(usize, u64)> = (0..curve.len())
        .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let measured: Vec<(f64, f64)> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let gain = &curve[i].gain;
            let nom = simulate_filter(&design, gain, &w_model, v_nominal, horizon, seed)?;
            let p_nom = empirical_performance(&nom)?;
            drop(nom);
            let adv = simulate_filter(&design, gain, &w_model, v_adverse, horizon, seed)?;
            Ok((p_nom, empirical_performance(&adv)?))
        })
        .collect::<Result<_>>()?;

    let ns = seeds.len() as f64;
    curve
        .into_iter()
        .zip(measured.chunks(seeds.len()))
        .map(|(pt, runs)| {
            let p_nom = runs.iter().map(|r| r.0).sum::<f64>() / ns;
            let p_adv = runs.iter().map(|r| r.1).sum::<f64>() / ns;
            let per_seed: Vec<f64> = runs
                .iter()
                .map(|&(n, a)| empirical_sensitivity(n, a))
                .collect::<Result<_>>()?;
            let sensitivity_std_error = (seeds.len() > 1).then(|| {
                let mean = per_seed.iter().sum::<f64>() / ns;
                let var = per_seed.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (ns - 1.0);
                (var / ns).sqrt()
            });
            Ok(SweepRecord {
                delta: pt.delta,
                lambda: pt.lambda,
                gain: pt.gain,
                p_nom,
                p_adv,
                empirical_sensitivity: empirical_sensitivity(p_nom, p_adv)?,
                sensitivity_std_error,
            })
        })
        .collect()
}
