//! One Monte-Carlo trial of either radar.
//!
//! Trial `seed` draws its data symbols from [`data_rng`](crate::modem::data_rng)
//! and its noise from [`noise_rng`](crate::modem::noise_rng). OTFS and OFDM
//! trials with the same seed transmit the same symbol grid and see noise
//! from the same stream.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimator::{matched_filter_fast, DdEstimate};
use crate::grid::{tap_to_target, SystemConfig, Tap, TapChannel};
use crate::metrics::{image_snr_from_power, pslr, TrialMetrics};
use crate::modem::{apply_channel_dd, gen_qpsk_frame, TfFrame};
use crate::ofdm::{estimate_target_ofdm, ofdm_radar_pipeline, OfdmConfig, RangeDopplerMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RadarSystem {
    Otfs,
    Ofdm,
}

impl std::fmt::Display for RadarSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RadarSystem::Otfs => "otfs",
            RadarSystem::Ofdm => "ofdm",
        })
    }
}

/// Noiseless trials skip the noise draw entirely.
pub fn noise_for(seed: u64, noisy: bool) -> Option<u64> {
    noisy.then_some(seed)
}

pub fn otfs_estimate(
    cfg: &SystemConfig,
    taps: &TapChannel,
    seed: u64,
    noisy: bool,
) -> Result<DdEstimate> {
    let x = gen_qpsk_frame(cfg, seed);
    let y = apply_channel_dd(&x, taps, cfg, noise_for(seed, noisy))?;
    matched_filter_fast(&y, &x, cfg)
}

pub fn ofdm_map(
    cfg: &SystemConfig,
    ofdm: &OfdmConfig,
    taps: &TapChannel,
    seed: u64,
    noisy: bool,
) -> Result<RangeDopplerMap> {
    let symbols = TfFrame::new(gen_qpsk_frame(cfg, seed).grid);
    ofdm_radar_pipeline(&symbols, taps, ofdm, noise_for(seed, noisy))
}

/// Metrics of an OTFS estimate against the tap `truth`.
pub fn otfs_metrics(est: &DdEstimate, truth: &Tap, seed: u64) -> Result<TrialMetrics> {
    let (range, velocity) = est.estimate_target();
    let t = tap_to_target(truth, &est.cfg);
    let power = est.power();
    let mags: Vec<f64> = est.grid.iter().map(|v| v.norm()).collect();
    let idx = truth.doppler * est.grid.ncols() + truth.delay;
    Ok(TrialMetrics {
        range_error_m: range - t.range_m,
        velocity_error_m_s: velocity - t.velocity_m_s,
        pslr_db: pslr(&mags)?,
        image_snr_db: image_snr_from_power(power.as_slice().expect("standard layout"), idx),
        seed,
    })
}

/// Metrics of an OFDM periodogram. The image SNR is taken at the bin where
/// the true target would sit on the map's axes.
pub fn ofdm_metrics(
    map: &RangeDopplerMap,
    cfg: &SystemConfig,
    ofdm: &OfdmConfig,
    truth: &Tap,
    seed: u64,
) -> Result<TrialMetrics> {
    let (range, velocity) = estimate_target_ofdm(map)?;
    let t = tap_to_target(truth, cfg);
    let mags: Vec<f64> = map.magnitude.iter().copied().collect();
    let power: Vec<f64> = mags.iter().map(|v| v * v).collect();
    let pad = ofdm.zero_pad;
    let idx = truth.delay * pad * map.magnitude.ncols() + truth.doppler * pad;
    Ok(TrialMetrics {
        range_error_m: range - t.range_m,
        velocity_error_m_s: velocity - t.velocity_m_s,
        pslr_db: pslr(&mags)?,
        image_snr_db: image_snr_from_power(&power, idx),
        seed,
    })
}

/// Runs one seeded trial of `system` for a single-target channel whose
/// ground truth is `truth` (the channel may contain further taps).
pub fn run_trial(
    system: RadarSystem,
    cfg: &SystemConfig,
    ofdm: &OfdmConfig,
    taps: &TapChannel,
    truth: &Tap,
    seed: u64,
    noisy: bool,
) -> Result<TrialMetrics> {
    match system {
        RadarSystem::Otfs => otfs_metrics(&otfs_estimate(cfg, taps, seed, noisy)?, truth, seed),
        RadarSystem::Ofdm => ofdm_metrics(
            &ofdm_map(cfg, ofdm, taps, seed, noisy)?,
            cfg,
            ofdm,
            truth,
            seed,
        ),
    }
}
