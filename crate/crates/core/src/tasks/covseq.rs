use std::f64::consts::PI;

use ndarray::{Array2, Array3};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{RelnError, Result};
use crate::geomaps::jacobi_eigh;
use crate::liealg::{matrix_exp, skew3, AlgebraKind, LieAlgebraBasis};
use crate::linalg::Matrix;
use crate::rng::{self, Rng, Stream};

/// Speed-dependent velocity noise: a sigmoid between `sigma_min` and
/// `sigma_max` centred at `v_mid` with steepness `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub lambda: f64,
    pub v_mid: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams { sigma_min: 0.2, sigma_max: 1.0, lambda: 0.8, v_mid: 1.0 }
    }
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma_min > 0.0
            && self.sigma_min <= self.sigma_max
            && self.lambda > 0.0
            && self.sigma_max.is_finite()
            && self.lambda.is_finite()
            && self.v_mid.is_finite();
        if ok {
            Ok(())
        } else {
            Err(RelnError::invalid(format!("invalid noise parameters {self:?}")))
        }
    }
}

pub fn noise_sigma(speed: f64, params: &NoiseParams) -> Result<f64> {
    params.validate()?;
    if !(speed >= 0.0) {
        return Err(RelnError::invalid(format!("speed must be non-negative, got {speed}")));
    }
    let gate = 1.0 / (1.0 + (-params.lambda * (speed - params.v_mid)).exp());
    Ok(params.sigma_min + (params.sigma_max - params.sigma_min) * gate)
}

/// A synthetic trajectory with per-step velocity covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct CovSequence {
    pub velocities: Array2<f64>,
    pub noisy_velocities: Array2<f64>,
    pub covariances: Array3<f64>,
    pub positions: Array2<f64>,
    /// Noise parameters with `v_mid` set to the mean ground-truth speed.
    pub noise: NoiseParams,
}

const SINUSOIDS: usize = 3;
const SPREAD: f64 = 3.0;

/// Draws `v_gt + L z` with `L Lᵀ = cov`.
pub fn noisy_velocity(v_gt: &[f64; 3], cov: &Matrix, r: &mut Rng) -> Result<[f64; 3]> {
    let (w, v) = jacobi_eigh(cov)?;
    if w[0] < 0.0 {
        return Err(RelnError::invalid("covariance is not positive semi-definite"));
    }
    let z: Vec<f64> = (0..3).map(|i| w[i].sqrt() * rng::normal(r)).collect();
    let mut out = *v_gt;
    for (i, o) in out.iter_mut().enumerate() {
        *o += (0..3).map(|j| v[[i, j]] * z[j]).sum::<f64>();
    }
    Ok(out)
}

/// Sinusoidal ground-truth velocity, trapezoidal positions, rotated
/// anisotropic covariances with magnitude `noise_sigma(|v|)` and noisy
/// velocities drawn from them.
pub fn gen_cov_sequence(steps: usize, dt: f64, params: &NoiseParams, seed: u64) -> Result<CovSequence> {
    params.validate()?;
    if steps < 2 || !(dt > 0.0) {
        return Err(RelnError::invalid("need at least 2 steps and dt > 0"));
    }
    let mut r = rng::stream(seed, Stream::Data);
    let mut amp = [[0.0; SINUSOIDS]; 3];
    let mut freq = [[0.0; SINUSOIDS]; 3];
    let mut phase = [[0.0; SINUSOIDS]; 3];
    let mut offset = [0.0; 3];
    for axis in 0..3 {
        offset[axis] = rng::normal(&mut r);
        for m in 0..SINUSOIDS {
            amp[axis][m] = rng::normal(&mut r);
            freq[axis][m] = 0.05 + 0.45 * rng::uniform(&mut r);
            phase[axis][m] = 2.0 * PI * rng::uniform(&mut r);
        }
    }
    let rot0: Vec<f64> = (0..3).map(|_| PI * rng::normal(&mut r)).collect();
    let rot_rate: Vec<f64> = (0..3).map(|_| 0.1 * rng::normal(&mut r)).collect();

    let mut velocities = Array2::zeros((steps, 3));
    for t in 0..steps {
        let time = t as f64 * dt;
        for axis in 0..3 {
            velocities[[t, axis]] = offset[axis]
                + (0..SINUSOIDS)
                    .map(|m| amp[axis][m] * (2.0 * PI * freq[axis][m] * time + phase[axis][m]).sin())
                    .sum::<f64>();
        }
    }
    let mut positions = Array2::zeros((steps, 3));
    for t in 1..steps {
        for axis in 0..3 {
            positions[[t, axis]] = positions[[t - 1, axis]]
                + 0.5 * dt * (velocities[[t - 1, axis]] + velocities[[t, axis]]);
        }
    }
    let speeds: Vec<f64> = velocities.rows().into_iter().map(|v| v.dot(&v).sqrt()).collect();
    let noise = NoiseParams { v_mid: speeds.iter().sum::<f64>() / steps as f64, ..*params };

    let shape = Matrix::from_diag(&ndarray::arr1(&[1.0 / SPREAD.sqrt(), 1.0, SPREAD.sqrt()]));
    let mut covariances = Array3::zeros((steps, 3, 3));
    let mut noisy_velocities = Array2::zeros((steps, 3));
    for t in 0..steps {
        let time = t as f64 * dt;
        let angle: Vec<f64> = (0..3).map(|i| rot0[i] + rot_rate[i] * time).collect();
        let rot = matrix_exp(&skew3(&angle))?;
        let sigma = noise_sigma(speeds[t], &noise)?;
        let mut cov = sigma * sigma * rot.dot(&shape).dot(&rot.t());
        cov = (&cov + &cov.t()) / 2.0;
        let v_gt = [velocities[[t, 0]], velocities[[t, 1]], velocities[[t, 2]]];
        let noisy = noisy_velocity(&v_gt, &cov, &mut r)?;
        covariances.index_axis_mut(ndarray::Axis(0), t).assign(&cov);
        for axis in 0..3 {
            noisy_velocities[[t, axis]] = noisy[axis];
        }
    }
    Ok(CovSequence { velocities, noisy_velocities, covariances, positions, noise })
}

/// `sequences` trajectories of `steps` each, flattened into a gl(3) dataset.
/// Inputs per step: `[hat(v_noisy), C]`; targets: ground-truth velocity
/// followed by position.
pub fn covseq_dataset(
    sequences: usize,
    steps: usize,
    dt: f64,
    params: &NoiseParams,
    seed: u64,
) -> Result<Dataset> {
    if sequences == 0 {
        return Err(RelnError::invalid("need at least one sequence"));
    }
    let algebra = AlgebraKind::Gl(3);
    let basis = LieAlgebraBasis::new(algebra)?;
    let n = sequences * steps;
    let mut inputs = Array3::zeros((n, 2, 9));
    let mut targets = Array2::zeros((n, 6));
    let mut seeds = rng::stream(seed, Stream::Data);
    for s in 0..sequences {
        let seq = gen_cov_sequence(steps, dt, params, seeds.next_u64())?;
        for t in 0..steps {
            let row = s * steps + t;
            let v: Vec<f64> = seq.noisy_velocities.row(t).to_vec();
            inputs.slice_mut(ndarray::s![row, 0, ..]).assign(&basis.vee(&skew3(&v))?);
            let cov = seq.covariances.index_axis(ndarray::Axis(0), t).to_owned();
            inputs.slice_mut(ndarray::s![row, 1, ..]).assign(&basis.vee(&cov)?);
            for axis in 0..3 {
                targets[[row, axis]] = seq.velocities[[t, axis]];
                targets[[row, 3 + axis]] = seq.positions[[t, axis]];
            }
        }
    }
    Dataset::new(algebra, inputs, targets, seed)
}
