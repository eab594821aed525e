//! System parameters, delay-Doppler grid geometry and the conversions
//! between physical targets and integer channel taps.
//!
//! Index conventions used throughout the crate:
//!
//! * `k` is the Doppler index in `0..N` and `l` the delay index in `0..M`.
//! * Doppler index `k` maps to the signed tap `(k)_N`, which is `k` for
//!   `2k <= N` and `k - N` otherwise. The Doppler frequency is
//!   `(k)_N / (N T)`.
//! * Delay index `l` maps to the delay `l / (M Δf)`.

use std::collections::HashMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The physical constant, in m/s.
pub const SPEED_OF_LIGHT_EXACT: f64 = 299_792_458.0;

/// The rounded value the published resolution table is consistent with.
/// `15 m` range resolution and `3840 m` unambiguous range at 10 MHz only
/// come out exact with this value, and so does `R = 975 m -> l = 65`.
pub const SPEED_OF_LIGHT_ROUNDED: f64 = 3.0e8;

/// Largest distance from an integer, in bins, that exact quantization accepts.
pub const EXACT_TAP_TOLERANCE: f64 = 1e-6;

const REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    /// `M`, also the number of subcarriers.
    pub num_delay_bins: usize,
    /// `N`, also the number of symbols per frame.
    pub num_doppler_bins: usize,
    pub subcarrier_spacing_hz: f64,
    pub symbol_duration_s: f64,
    pub symbol_power: f64,
    pub noise_variance: f64,
    pub cp_length_samples: usize,
    pub speed_of_light_m_s: f64,
}

impl SystemConfig {
    /// Builds a configuration with `Δf = B / M`, `T = 1 / Δf`, unit symbol
    /// power, 10 dB SNR, `L = M / 4` and the rounded speed of light.
    pub fn new(
        carrier_freq_hz: f64,
        bandwidth_hz: f64,
        num_delay_bins: usize,
        num_doppler_bins: usize,
    ) -> Result<Self> {
        if num_delay_bins == 0 {
            return Err(Error::InvalidConfig(
                "num_delay_bins must be at least 1".into(),
            ));
        }
        let subcarrier_spacing_hz = bandwidth_hz / num_delay_bins as f64;
        let cfg = SystemConfig {
            carrier_freq_hz,
            bandwidth_hz,
            num_delay_bins,
            num_doppler_bins,
            subcarrier_spacing_hz,
            symbol_duration_s: 1.0 / subcarrier_spacing_hz,
            symbol_power: 1.0,
            noise_variance: 0.1,
            cp_length_samples: num_delay_bins / 4,
            speed_of_light_m_s: SPEED_OF_LIGHT_ROUNDED,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The published simulation parameters: 24 GHz carrier, 10 MHz,
    /// 256 subcarriers, 64 symbols, SNR 10 dB, `L = M / 4`.
    pub fn automotive() -> Self {
        SystemConfig::new(24e9, 10e6, 256, 64).expect("default parameters are valid")
    }

    /// Grid of `num_delay_bins x num_doppler_bins` with `Δf = 1 Hz`, mostly
    /// useful for tests on small frames.
    pub fn unit(num_delay_bins: usize, num_doppler_bins: usize) -> Result<Self> {
        let mut cfg = SystemConfig::new(
            SPEED_OF_LIGHT_ROUNDED / 2.0,
            num_delay_bins as f64,
            num_delay_bins,
            num_doppler_bins,
        )?;
        cfg.cp_length_samples = num_delay_bins.saturating_sub(1);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_delay_bins == 0 || self.num_doppler_bins == 0 {
            return bad("grid dimensions M and N must be at least 1".into());
        }
        for (name, v) in [
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("subcarrier_spacing_hz", self.subcarrier_spacing_hz),
            ("symbol_duration_s", self.symbol_duration_s),
            ("symbol_power", self.symbol_power),
            ("speed_of_light_m_s", self.speed_of_light_m_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return bad(format!(
                "noise_variance must be non-negative, got {}",
                self.noise_variance
            ));
        }
        if (self.subcarrier_spacing_hz * self.symbol_duration_s - 1.0).abs() > REL_TOL {
            return bad(format!(
                "subcarrier spacing {} Hz and symbol duration {} s violate Δf·T = 1",
                self.subcarrier_spacing_hz, self.symbol_duration_s
            ));
        }
        let b = self.num_delay_bins as f64 * self.subcarrier_spacing_hz;
        if ((b - self.bandwidth_hz) / self.bandwidth_hz).abs() > REL_TOL {
            return bad(format!(
                "bandwidth {} Hz differs from M·Δf = {b} Hz",
                self.bandwidth_hz
            ));
        }
        if self.cp_length_samples >= self.num_delay_bins {
            return bad(format!(
                "cp_length_samples {} must be smaller than M = {}",
                self.cp_length_samples, self.num_delay_bins
            ));
        }
        Ok(())
    }

    /// `N · M`, the number of grid bins and of body samples in a frame.
    pub fn grid_size(&self) -> usize {
        self.num_delay_bins * self.num_doppler_bins
    }

    pub fn frame_duration_s(&self) -> f64 {
        self.num_doppler_bins as f64 * self.symbol_duration_s
    }

    pub fn sample_period_s(&self) -> f64 {
        1.0 / (self.num_delay_bins as f64 * self.subcarrier_spacing_hz)
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * (self.symbol_power / self.noise_variance).log10()
    }

    /// Sets the noise variance so that `P_s / σ²` equals `snr_db`.
    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.noise_variance = self.symbol_power / 10f64.powf(snr_db / 10.0);
        self
    }

    pub fn with_cp_length(mut self, cp_length_samples: usize) -> Self {
        self.cp_length_samples = cp_length_samples;
        self
    }

    pub fn with_speed_of_light(mut self, c: f64) -> Self {
        self.speed_of_light_m_s = c;
        self
    }

    /// Parses a key-value configuration file. Keys that are absent keep the
    /// values of [`SystemConfig::automotive`].
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let overrides: ConfigOverrides = toml::from_str(text).map_err(|e| Error::ConfigParse {
            path: "<config>".into(),
            message: e.to_string(),
        })?;
        overrides.apply(&SystemConfig::automotive())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("SystemConfig serializes to TOML")
    }
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig::automotive()
    }
}

/// Partial configuration as read from a file; unset keys inherit from a base.
///
/// `subcarrier_spacing_hz` and `symbol_duration_s` may be omitted, in which
/// case they are derived from `bandwidth_hz` and `num_delay_bins`. `snr_db`
/// is an alternative to `noise_variance`; giving both is an error.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigOverrides {
    pub carrier_freq_hz: Option<f64>,
    pub bandwidth_hz: Option<f64>,
    pub num_delay_bins: Option<usize>,
    pub num_doppler_bins: Option<usize>,
    pub subcarrier_spacing_hz: Option<f64>,
    pub symbol_duration_s: Option<f64>,
    pub symbol_power: Option<f64>,
    pub noise_variance: Option<f64>,
    pub snr_db: Option<f64>,
    pub cp_length_samples: Option<usize>,
    pub speed_of_light_m_s: Option<f64>,
}

impl ConfigOverrides {
    pub fn apply(&self, base: &SystemConfig) -> Result<SystemConfig> {
        let mut cfg = *base;
        if let Some(v) = self.carrier_freq_hz {
            cfg.carrier_freq_hz = v;
        }
        if let Some(v) = self.num_delay_bins {
            cfg.num_delay_bins = v;
        }
        if let Some(v) = self.num_doppler_bins {
            cfg.num_doppler_bins = v;
        }
        if cfg.num_delay_bins == 0 {
            return Err(Error::InvalidConfig(
                "num_delay_bins must be at least 1".into(),
            ));
        }
        let m = cfg.num_delay_bins as f64;
        match (self.bandwidth_hz, self.subcarrier_spacing_hz) {
            (Some(b), Some(df)) => {
                cfg.bandwidth_hz = b;
                cfg.subcarrier_spacing_hz = df;
            }
            (Some(b), None) => {
                cfg.bandwidth_hz = b;
                cfg.subcarrier_spacing_hz = b / m;
            }
            (None, Some(df)) => {
                cfg.subcarrier_spacing_hz = df;
                cfg.bandwidth_hz = df * m;
            }
            (None, None) => cfg.subcarrier_spacing_hz = cfg.bandwidth_hz / m,
        }
        cfg.symbol_duration_s = self
            .symbol_duration_s
            .unwrap_or(1.0 / cfg.subcarrier_spacing_hz);
        if let Some(v) = self.symbol_power {
            cfg.symbol_power = v;
        }
        match (self.noise_variance, self.snr_db) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidConfig(
                    "give either noise_variance or snr_db, not both".into(),
                ))
            }
            (Some(v), None) => cfg.noise_variance = v,
            (None, Some(snr)) => cfg = cfg.with_snr_db(snr),
            (None, None) => {}
        }
        if let Some(v) = self.cp_length_samples {
            cfg.cp_length_samples = v;
        }
        if let Some(v) = self.speed_of_light_m_s {
            cfg.speed_of_light_m_s = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridResolutions {
    pub delay_res_s: f64,
    pub doppler_res_hz: f64,
    pub range_res_m: f64,
    pub velocity_res_m_s: f64,
    pub max_unambiguous_range_m: f64,
    pub max_unambiguous_velocity_m_s: f64,
}

pub fn derive_resolutions(cfg: &SystemConfig) -> GridResolutions {
    let c = cfg.speed_of_light_m_s;
    let m = cfg.num_delay_bins as f64;
    let n = cfg.num_doppler_bins as f64;
    let df = cfg.subcarrier_spacing_hz;
    let t = cfg.symbol_duration_s;
    let fc = cfg.carrier_freq_hz;
    GridResolutions {
        delay_res_s: 1.0 / (m * df),
        doppler_res_hz: 1.0 / (n * t),
        range_res_m: c / (2.0 * cfg.bandwidth_hz),
        velocity_res_m_s: c / (2.0 * fc * n * t),
        max_unambiguous_range_m: c / (2.0 * df),
        max_unambiguous_velocity_m_s: c * df / (4.0 * fc),
    }
}

/// A point reflector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub range_m: f64,
    /// Positive when the target approaches.
    pub velocity_m_s: f64,
    pub gain: Complex64,
}

impl Target {
    pub fn new(range_m: f64, velocity_m_s: f64) -> Self {
        Target {
            range_m,
            velocity_m_s,
            gain: Complex64::new(1.0, 0.0),
        }
    }

    pub fn with_gain(mut self, gain: Complex64) -> Self {
        self.gain = gain;
        self
    }

    /// Round-trip delay `2R / c`.
    pub fn delay_s(&self, cfg: &SystemConfig) -> f64 {
        2.0 * self.range_m / cfg.speed_of_light_m_s
    }

    /// Doppler shift `2 f_c V / c`.
    pub fn doppler_hz(&self, cfg: &SystemConfig) -> f64 {
        2.0 * cfg.carrier_freq_hz * self.velocity_m_s / cfg.speed_of_light_m_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tap {
    pub doppler: usize,
    pub delay: usize,
    pub gain: Complex64,
}

impl Tap {
    pub fn new(doppler: usize, delay: usize, gain: Complex64) -> Self {
        Tap {
            doppler,
            delay,
            gain,
        }
    }

    pub fn unit(doppler: usize, delay: usize) -> Self {
        Tap::new(doppler, delay, Complex64::new(1.0, 0.0))
    }
}

/// Integer-tap delay-Doppler channel with at most one tap per bin.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TapChannel {
    taps: Vec<Tap>,
}

impl TapChannel {
    pub fn new(taps: Vec<Tap>) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(taps.len());
        for t in &taps {
            if !seen.insert((t.doppler, t.delay)) {
                return Err(Error::DuplicateTap {
                    doppler: t.doppler,
                    delay: t.delay,
                });
            }
        }
        Ok(TapChannel { taps })
    }

    pub fn single(tap: Tap) -> Self {
        TapChannel { taps: vec![tap] }
    }

    pub fn empty() -> Self {
        TapChannel::default()
    }

    pub fn taps(&self) -> &[Tap] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn max_delay(&self) -> Option<usize> {
        self.taps.iter().map(|t| t.delay).max()
    }

    /// Fails if any tap lies outside the `N x M` grid of `cfg`.
    pub fn check_grid(&self, cfg: &SystemConfig) -> Result<()> {
        for t in &self.taps {
            if t.doppler >= cfg.num_doppler_bins || t.delay >= cfg.num_delay_bins {
                return Err(Error::TapOutOfGrid {
                    doppler: t.doppler,
                    delay: t.delay,
                    rows: cfg.num_doppler_bins,
                    cols: cfg.num_delay_bins,
                });
            }
        }
        Ok(())
    }
}

/// `(k)_N`: Doppler index to signed tap.
pub fn signed_doppler(k: usize, n: usize) -> i64 {
    if 2 * k <= n {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Inverse of [`signed_doppler`]: any signed tap wrapped into `0..n`.
pub fn wrap_doppler(k: i64, n: usize) -> usize {
    k.rem_euclid(n as i64) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantizeMode {
    /// Reject targets that are not on the grid.
    Exact,
    /// Round to the nearest bin and report the residual.
    Nearest,
}

/// Signed distance, in bins, between a target and the tap it was mapped to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizationResidual {
    pub delay_bins: f64,
    pub doppler_bins: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedScene {
    pub channel: TapChannel,
    /// One entry per input target, in input order.
    pub residuals: Vec<QuantizationResidual>,
}

fn within(value: f64, limit: f64) -> bool {
    value <= limit * (1.0 + 1e-9)
}

/// Maps each target to `l = round(τ M Δf)` and `k = round(ν N T) mod N`.
///
/// Targets that land in the same bin are merged by adding their gains.
pub fn scene_to_taps(
    scene: &[Target],
    cfg: &SystemConfig,
    mode: QuantizeMode,
) -> Result<QuantizedScene> {
    let res = derive_resolutions(cfg);
    let m = cfg.num_delay_bins as f64;
    let n = cfg.num_doppler_bins;
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut taps: Vec<Tap> = Vec::new();
    let mut residuals = Vec::with_capacity(scene.len());

    for (i, target) in scene.iter().enumerate() {
        let out_of_range = target.range_m.is_nan()
            || target.range_m <= 0.0
            || !within(target.range_m, res.max_unambiguous_range_m)
            || !within(target.velocity_m_s.abs(), res.max_unambiguous_velocity_m_s);
        if out_of_range {
            return Err(Error::OutOfAmbiguityRange {
                index: i,
                range_m: target.range_m,
                velocity_m_s: target.velocity_m_s,
            });
        }
        let delay_bins = target.delay_s(cfg) * m * cfg.subcarrier_spacing_hz;
        let doppler_bins = target.doppler_hz(cfg) * n as f64 * cfg.symbol_duration_s;
        let l_round = delay_bins.round();
        let k_round = doppler_bins.round();
        let residual = QuantizationResidual {
            delay_bins: delay_bins - l_round,
            doppler_bins: doppler_bins - k_round,
        };
        if mode == QuantizeMode::Exact
            && (residual.delay_bins.abs() > EXACT_TAP_TOLERANCE
                || residual.doppler_bins.abs() > EXACT_TAP_TOLERANCE)
        {
            return Err(Error::NonIntegerTap {
                index: i,
                delay_offset: residual.delay_bins,
                doppler_offset: residual.doppler_bins,
            });
        }
        // R = R_max rounds to l = M, which aliases onto l = 0.
        let l = (l_round as usize) % cfg.num_delay_bins;
        let k = wrap_doppler(k_round as i64, n);
        match index.get(&(k, l)) {
            Some(&pos) => taps[pos].gain += target.gain,
            None => {
                index.insert((k, l), taps.len());
                taps.push(Tap::new(k, l, target.gain));
            }
        }
        residuals.push(residual);
    }
    Ok(QuantizedScene {
        channel: TapChannel { taps },
        residuals,
    })
}

/// Physical position of a single tap. `l = 0` maps to range 0 even though
/// the detectable delay interval is open at zero.
pub fn tap_to_target(tap: &Tap, cfg: &SystemConfig) -> Target {
    let res = derive_resolutions(cfg);
    Target {
        range_m: tap.delay as f64 * res.range_res_m,
        velocity_m_s: signed_doppler(tap.doppler, cfg.num_doppler_bins) as f64
            * res.velocity_res_m_s,
        gain: tap.gain,
    }
}

pub fn taps_to_scene(channel: &TapChannel, cfg: &SystemConfig) -> Vec<Target> {
    channel
        .taps()
        .iter()
        .map(|t| tap_to_target(t, cfg))
        .collect()
}
