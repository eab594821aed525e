//! Figures of merit: profile cuts, PSLR, image SNR, velocity RMSE and
//! frame-duration accounting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::DdEstimate;
use crate::grid::{
    derive_resolutions, signed_doppler, tap_to_target, wrap_doppler, SystemConfig, Tap, TapChannel,
};
use crate::ofdm::{OfdmConfig, RangeDopplerMap};
use crate::trial::{run_trial, RadarSystem};

/// Floor applied when converting zero magnitudes to dB.
pub const DB_FLOOR: f64 = -300.0;

/// A slice through the image, normalized so the peak is 0 dB. The axis is
/// sorted in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileCut {
    pub axis: Vec<f64>,
    pub magnitude_db: Vec<f64>,
}

impl ProfileCut {
    fn from_pairs(mut pairs: Vec<(f64, f64)>) -> Self {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let peak = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
        ProfileCut {
            axis: pairs.iter().map(|p| p.0).collect(),
            magnitude_db: pairs.iter().map(|p| to_db(p.1, peak)).collect(),
        }
    }

    /// Axis value of the 0 dB entry.
    pub fn peak_position(&self) -> Option<f64> {
        self.magnitude_db
            .iter()
            .position(|v| *v == 0.0)
            .map(|i| self.axis[i])
    }
}

fn to_db(v: f64, peak: f64) -> f64 {
    if v <= 0.0 || peak <= 0.0 {
        DB_FLOOR
    } else {
        (20.0 * (v / peak).log10()).max(DB_FLOOR)
    }
}

/// A magnitude image over (Doppler, delay) bins with physical axes.
pub trait RadarImage {
    fn doppler_bins(&self) -> usize;
    fn delay_bins(&self) -> usize;
    fn magnitude(&self, doppler: usize, delay: usize) -> f64;
    fn range_m(&self, delay: usize) -> f64;
    fn velocity_m_s(&self, doppler: usize) -> f64;

    /// `(doppler, delay)` of the strongest bin, lowest `(delay, doppler)` on ties.
    fn peak(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut best_v = f64::NEG_INFINITY;
        for l in 0..self.delay_bins() {
            for k in 0..self.doppler_bins() {
                let v = self.magnitude(k, l);
                if v > best_v {
                    best_v = v;
                    best = (k, l);
                }
            }
        }
        best
    }
}

impl RadarImage for DdEstimate {
    fn doppler_bins(&self) -> usize {
        self.grid.nrows()
    }
    fn delay_bins(&self) -> usize {
        self.grid.ncols()
    }
    fn magnitude(&self, doppler: usize, delay: usize) -> f64 {
        self.grid[[doppler, delay]].norm()
    }
    fn range_m(&self, delay: usize) -> f64 {
        delay as f64 * derive_resolutions(&self.cfg).range_res_m
    }
    fn velocity_m_s(&self, doppler: usize) -> f64 {
        signed_doppler(doppler, self.grid.nrows()) as f64
            * derive_resolutions(&self.cfg).velocity_res_m_s
    }
}

impl RadarImage for RangeDopplerMap {
    fn doppler_bins(&self) -> usize {
        self.magnitude.ncols()
    }
    fn delay_bins(&self) -> usize {
        self.magnitude.nrows()
    }
    fn magnitude(&self, doppler: usize, delay: usize) -> f64 {
        self.magnitude[[delay, doppler]]
    }
    fn range_m(&self, delay: usize) -> f64 {
        self.range_axis_m[delay]
    }
    fn velocity_m_s(&self, doppler: usize) -> f64 {
        self.velocity_axis_m_s[doppler]
    }
}

/// Range cut at the peak's Doppler bin and velocity cut at its delay bin.
pub fn profile_cuts<I: RadarImage + ?Sized>(
    image: &I,
    (peak_doppler, peak_delay): (usize, usize),
) -> (ProfileCut, ProfileCut) {
    let range = (0..image.delay_bins())
        .map(|l| (image.range_m(l), image.magnitude(peak_doppler, l)))
        .collect();
    let velocity = (0..image.doppler_bins())
        .map(|k| (image.velocity_m_s(k), image.magnitude(k, peak_delay)))
        .collect();
    (
        ProfileCut::from_pairs(range),
        ProfileCut::from_pairs(velocity),
    )
}

/// Peak-to-maximum-sidelobe ratio `20 log10(|peak| / max_other |v|)` over
/// all bins, the peak bin excluded. Infinite when every other bin is zero.
pub fn pslr(magnitudes: &[f64]) -> Result<f64> {
    if magnitudes.len() < 2 {
        return Err(Error::DegenerateGrid);
    }
    let (peak_idx, peak) =
        magnitudes
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| {
                if v.abs() > acc.1 {
                    (i, v.abs())
                } else {
                    acc
                }
            });
    let side = magnitudes
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != peak_idx)
        .map(|(_, v)| v.abs())
        .fold(0.0, f64::max);
    Ok(20.0 * (peak / side).log10())
}

/// `10 log10(p[true] / mean_{i != true} p[i])` on bin powers.
pub fn image_snr_from_power(power: &[f64], true_index: usize) -> f64 {
    let others = power.len().saturating_sub(1).max(1) as f64;
    let rest: f64 = power
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != true_index)
        .map(|(_, p)| *p)
        .sum::<f64>()
        / others;
    10.0 * (power[true_index] / rest).log10()
}

/// Image SNR of a matched-filter estimate at the ground-truth bin `(k, l)`.
pub fn image_snr(est: &DdEstimate, (k, l): (usize, usize)) -> f64 {
    let power = est.power();
    image_snr_from_power(
        power.as_slice().expect("standard layout"),
        k * est.grid.ncols() + l,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    /// Estimate minus truth.
    pub range_error_m: f64,
    /// Estimate minus truth.
    pub velocity_error_m_s: f64,
    #[serde(with = "serde_float")]
    pub pslr_db: f64,
    #[serde(with = "serde_float")]
    pub image_snr_db: f64,
    pub seed: u64,
}

/// Writes non-finite floats as the strings `inf`, `-inf` and `NaN` so they
/// survive formats without a representation for them.
pub mod serde_float {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(D::Error::custom),
        }
    }
}

pub fn rmse(errors: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, count) = errors
        .into_iter()
        .fold((0.0, 0usize), |(s, c), e| (s + e * e, c + 1));
    if count == 0 {
        0.0
    } else {
        (sum / count as f64).sqrt()
    }
}

/// Velocity RMSE at one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub system: RadarSystem,
    /// Signed Doppler tap of the target.
    pub tap: i64,
    pub velocity_m_s: f64,
    pub rmse_m_s: f64,
    pub trials: usize,
    pub first_seed: u64,
    pub last_seed: u64,
}

/// Single target at `delay`, unit gain, moving at each of `velocity_taps`
/// multiples of the velocity resolution. Trial `t` of every point uses
/// seed `base_seed + t`, so both systems and all points share their random
/// numbers.
#[allow(clippy::too_many_arguments)]
pub fn rmse_sweep(
    system: RadarSystem,
    velocity_taps: &[i64],
    trials: usize,
    cfg: &SystemConfig,
    ofdm: &OfdmConfig,
    delay: usize,
    base_seed: u64,
) -> Result<Vec<SweepPoint>> {
    if velocity_taps.is_empty() || trials == 0 {
        return Err(Error::EmptySweep);
    }
    let n = cfg.num_doppler_bins as i64;
    velocity_taps
        .iter()
        .map(|&tap| {
            if 2 * tap > n || 2 * tap <= -n {
                return Err(Error::InvalidArgument(format!(
                    "velocity tap {tap} is outside the unambiguous Doppler range of N = {n}"
                )));
            }
            let truth = Tap::unit(wrap_doppler(tap, cfg.num_doppler_bins), delay);
            let channel = TapChannel::single(truth);
            let errors = (0..trials as u64)
                .into_par_iter()
                .map(|t| {
                    run_trial(system, cfg, ofdm, &channel, &truth, base_seed + t, true)
                        .map(|m| m.velocity_error_m_s)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(SweepPoint {
                system,
                tap,
                velocity_m_s: tap_to_target(&truth, cfg).velocity_m_s,
                rmse_m_s: rmse(errors),
                trials,
                first_seed: base_seed,
                last_seed: base_seed + trials as u64 - 1,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameDurationReport {
    pub otfs_samples: usize,
    pub ofdm_samples: usize,
    pub saved_samples: usize,
}

/// Frame lengths for `N` symbols of `M` samples: OTFS carries one prefix,
/// OFDM one per symbol.
pub fn frame_duration_report(cfg: &SystemConfig) -> FrameDurationReport {
    let m = cfg.num_delay_bins;
    let n = cfg.num_doppler_bins;
    let l = cfg.cp_length_samples;
    FrameDurationReport {
        otfs_samples: n * m + l,
        ofdm_samples: n * (m + l),
        saved_samples: (n - 1) * l,
    }
}
