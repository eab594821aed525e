//! Conventional OFDM radar used as the comparison baseline.
//!
//! Each OFDM symbol carries its own cyclic prefix. The waveform goes through
//! the same sampled delay-Doppler channel as the OTFS waveform, so Doppler
//! produces inter-carrier interference inside a symbol. The receiver drops
//! the prefixes, demodulates each symbol, divides by the transmitted
//! symbols and forms the periodogram: inverse transform across subcarriers
//! (range), forward transform across symbols (Doppler).
//!
//! The default Doppler axis is the nominal one, `(q)_{N_s} / (N_s T)`, with
//! `T = 1/Δf` the symbol time without prefix. The actual symbol spacing is
//! `(N_c + L) T_s`, so a target at Doppler tap `k` lands near bin
//! `k (1 + L/N_c)` and the reported velocity is biased by `L/N_c` of the
//! truth. [`DopplerAxis::CpAware`] rescales the axis by the true spacing.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{signed_doppler, SystemConfig, TapChannel};
use crate::modem::{complex_gaussian, noise_rng, propagate, unitary_fft_axis, TfFrame, TimeSignal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Rectangular,
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DopplerAxis {
    /// Bins spaced by `1 / (N_s T)`, ignoring the prefix.
    #[default]
    Nominal,
    /// Bins spaced by `1 / (N_s (N_c + L) T_s)`.
    CpAware,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfdmConfig {
    pub num_subcarriers: usize,
    pub num_symbols: usize,
    pub subcarrier_spacing_hz: f64,
    /// Prefix length of every symbol.
    pub cp_length_samples: usize,
    pub carrier_freq_hz: f64,
    pub symbol_power: f64,
    pub noise_variance: f64,
    pub speed_of_light_m_s: f64,
    pub window: Window,
    /// Periodogram length multiplier along both axes; 1 disables padding.
    pub zero_pad: usize,
    pub doppler_axis: DopplerAxis,
}

impl OfdmConfig {
    /// Same carrier, grid and prefix length as the OTFS configuration.
    pub fn matched(sys: &SystemConfig) -> Self {
        OfdmConfig {
            num_subcarriers: sys.num_delay_bins,
            num_symbols: sys.num_doppler_bins,
            subcarrier_spacing_hz: sys.subcarrier_spacing_hz,
            cp_length_samples: sys.cp_length_samples,
            carrier_freq_hz: sys.carrier_freq_hz,
            symbol_power: sys.symbol_power,
            noise_variance: sys.noise_variance,
            speed_of_light_m_s: sys.speed_of_light_m_s,
            window: Window::Rectangular,
            zero_pad: 1,
            doppler_axis: DopplerAxis::Nominal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_subcarriers == 0 || self.num_symbols == 0 {
            return Err(Error::InvalidConfig(
                "OFDM needs at least one subcarrier and one symbol".into(),
            ));
        }
        if self.zero_pad == 0 {
            return Err(Error::InvalidConfig("zero_pad must be at least 1".into()));
        }
        if !(self.subcarrier_spacing_hz > 0.0 && self.symbol_power > 0.0) {
            return Err(Error::InvalidConfig(
                "subcarrier spacing and symbol power must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn symbol_length(&self) -> usize {
        self.num_subcarriers + self.cp_length_samples
    }

    pub fn frame_samples(&self) -> usize {
        self.num_symbols * self.symbol_length()
    }

    pub fn range_resolution_m(&self) -> f64 {
        self.speed_of_light_m_s / (2.0 * self.num_subcarriers as f64 * self.subcarrier_spacing_hz)
    }

    /// Velocity step between adjacent (unpadded) Doppler bins.
    pub fn velocity_resolution_m_s(&self) -> f64 {
        let nominal = self.speed_of_light_m_s * self.subcarrier_spacing_hz
            / (2.0 * self.carrier_freq_hz * self.num_symbols as f64);
        match self.doppler_axis {
            DopplerAxis::Nominal => nominal,
            DopplerAxis::CpAware => {
                nominal * self.num_subcarriers as f64 / self.symbol_length() as f64
            }
        }
    }
}

/// Periodogram magnitudes indexed `[range bin, Doppler bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeDopplerMap {
    pub magnitude: Array2<f64>,
    pub range_axis_m: Vec<f64>,
    /// Signed velocity of each Doppler bin in natural FFT order.
    pub velocity_axis_m_s: Vec<f64>,
}

impl RangeDopplerMap {
    /// Strongest bin `(range bin, Doppler bin)`; ties go to the lowest
    /// range bin, then the lowest Doppler bin.
    pub fn argmax(&self) -> Option<(usize, usize)> {
        let mut best = None;
        let mut best_v = f64::NEG_INFINITY;
        for ((r, d), v) in self.magnitude.indexed_iter() {
            if *v > best_v {
                best_v = *v;
                best = Some((r, d));
            }
        }
        best
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["range_m".to_string()];
        header.extend(self.velocity_axis_m_s.iter().map(|v| format!("v={v}")));
        w.write_record(&header)?;
        for (r, row) in self.magnitude.rows().into_iter().enumerate() {
            let mut rec = vec![self.range_axis_m[r].to_string()];
            rec.extend(row.iter().map(|v| format!("{v:e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_symbols(symbols: &TfFrame, cfg: &OfdmConfig) -> Result<()> {
    let expected = (cfg.num_symbols, cfg.num_subcarriers);
    if symbols.grid.dim() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: symbols.grid.dim(),
        });
    }
    Ok(())
}

/// Per symbol: unitary inverse DFT over the subcarriers, then a prefix of
/// `L` samples. Output length is `N_s (N_c + L)`.
pub fn ofdm_modulate(symbols: &TfFrame, cfg: &OfdmConfig) -> Result<TimeSignal> {
    cfg.validate()?;
    check_symbols(symbols, cfg)?;
    let mut grid = symbols.grid.clone();
    let mut planner = FftPlanner::new();
    unitary_fft_axis(&mut grid, 1, FftDirection::Inverse, &mut planner);
    let l = cfg.cp_length_samples;
    let nc = cfg.num_subcarriers;
    let mut samples = Vec::with_capacity(cfg.frame_samples());
    for row in grid.rows() {
        let body = row.as_slice().expect("standard layout");
        samples.extend_from_slice(&body[nc - l..]);
        samples.extend_from_slice(body);
    }
    Ok(TimeSignal {
        samples,
        sample_period_s: 1.0 / (nc as f64 * cfg.subcarrier_spacing_hz),
        cp_length: l,
    })
}

/// Drops every prefix and applies a unitary DFT to each symbol body.
pub fn ofdm_demodulate(r: &TimeSignal, cfg: &OfdmConfig) -> Result<TfFrame> {
    if r.samples.len() != cfg.frame_samples() {
        return Err(Error::LengthMismatch {
            expected: cfg.frame_samples(),
            found: r.samples.len(),
        });
    }
    let nc = cfg.num_subcarriers;
    let sl = cfg.symbol_length();
    let mut grid = Array2::<Complex64>::zeros((cfg.num_symbols, nc));
    for (n, mut row) in grid.rows_mut().into_iter().enumerate() {
        let start = n * sl + cfg.cp_length_samples;
        for (v, s) in row.iter_mut().zip(&r.samples[start..start + nc]) {
            *v = *s;
        }
    }
    let mut planner = FftPlanner::new();
    unitary_fft_axis(&mut grid, 1, FftDirection::Forward, &mut planner);
    Ok(TfFrame::new(grid))
}

/// `D[n, m] = Y[n, m] / X[n, m]`.
pub fn divide_symbols(received: &TfFrame, transmitted: &TfFrame) -> Result<Array2<Complex64>> {
    if received.grid.dim() != transmitted.grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: transmitted.grid.dim(),
            found: received.grid.dim(),
        });
    }
    let mut out = received.grid.clone();
    for (o, x) in out.iter_mut().zip(transmitted.grid.iter()) {
        assert!(x.norm_sqr() > 0.0, "transmitted symbol with zero magnitude");
        *o /= x;
    }
    Ok(out)
}

fn window_weights(window: Window, len: usize) -> Vec<f64> {
    match window {
        Window::Rectangular => vec![1.0; len],
        Window::Hann => (0..len)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / len as f64).cos())
            .collect(),
    }
}

/// Range-Doppler periodogram of the symbol-wise channel estimates `D[n, m]`.
/// Magnitudes are scaled by `1 / (N_c N_s)`, so an ideal unit target has
/// a peak of one.
pub fn periodogram(d: &Array2<Complex64>, cfg: &OfdmConfig) -> Result<RangeDopplerMap> {
    cfg.validate()?;
    let (ns, nc) = d.dim();
    if (ns, nc) != (cfg.num_symbols, cfg.num_subcarriers) {
        return Err(Error::DimensionMismatch {
            expected: (cfg.num_symbols, cfg.num_subcarriers),
            found: (ns, nc),
        });
    }
    let pad = cfg.zero_pad;
    let (nr, nd) = (nc * pad, ns * pad);
    let wm = window_weights(cfg.window, nc);
    let wn = window_weights(cfg.window, ns);
    // [doppler-domain row n, range bin p] then transform along n.
    let mut work = Array2::<Complex64>::zeros((nd, nr));
    for n in 0..ns {
        for m in 0..nc {
            work[[n, m]] = d[[n, m]] * wm[m] * wn[n];
        }
    }
    let mut planner = FftPlanner::<f64>::new();
    let inv = planner.plan_fft_inverse(nr);
    for mut row in work.rows_mut() {
        inv.process(row.as_slice_mut().expect("standard layout"));
    }
    let fwd = planner.plan_fft_forward(nd);
    let mut col = vec![Complex64::default(); nd];
    let scale = 1.0 / (nc * ns) as f64;
    let mut magnitude = Array2::<f64>::zeros((nr, nd));
    for p in 0..nr {
        for (c, v) in col.iter_mut().zip(work.column(p)) {
            *c = *v;
        }
        fwd.process(&mut col);
        for (q, v) in col.iter().enumerate() {
            magnitude[[p, q]] = v.norm() * scale;
        }
    }
    let dr = cfg.range_resolution_m() / pad as f64;
    let dv = cfg.velocity_resolution_m_s() / pad as f64;
    Ok(RangeDopplerMap {
        magnitude,
        range_axis_m: (0..nr).map(|p| p as f64 * dr).collect(),
        velocity_axis_m_s: (0..nd).map(|q| signed_doppler(q, nd) as f64 * dv).collect(),
    })
}

fn channel_output(
    symbols: &TfFrame,
    taps: &TapChannel,
    cfg: &OfdmConfig,
    noise_seed: Option<u64>,
) -> Result<TfFrame> {
    cfg.validate()?;
    check_symbols(symbols, cfg)?;
    for t in taps.taps() {
        if t.doppler >= cfg.num_symbols || t.delay >= cfg.num_subcarriers {
            return Err(Error::TapOutOfGrid {
                doppler: t.doppler,
                delay: t.delay,
                rows: cfg.num_symbols,
                cols: cfg.num_subcarriers,
            });
        }
    }
    if let Some(d) = taps.max_delay() {
        if d > cfg.cp_length_samples {
            return Err(Error::DelayExceedsCp {
                delay: d,
                cp: cfg.cp_length_samples,
            });
        }
    }
    let s = ofdm_modulate(symbols, cfg)?;
    let mut samples = propagate(&s, taps, cfg.num_symbols, cfg.num_subcarriers);
    if let Some(seed) = noise_seed {
        let mut rng = noise_rng(seed);
        for v in samples.iter_mut() {
            *v += complex_gaussian(&mut rng, cfg.noise_variance);
        }
    }
    let r = TimeSignal { samples, ..s };
    ofdm_demodulate(&r, cfg)
}

/// Symbol-wise channel estimates `D = Y / X` after the time-domain channel.
pub fn ofdm_channel_estimates(
    symbols: &TfFrame,
    taps: &TapChannel,
    cfg: &OfdmConfig,
    noise_seed: Option<u64>,
) -> Result<Array2<Complex64>> {
    let y = channel_output(symbols, taps, cfg, noise_seed)?;
    divide_symbols(&y, symbols)
}

/// Transmit, propagate, demodulate and form the periodogram.
pub fn ofdm_radar_pipeline(
    symbols: &TfFrame,
    taps: &TapChannel,
    cfg: &OfdmConfig,
    noise_seed: Option<u64>,
) -> Result<RangeDopplerMap> {
    periodogram(
        &ofdm_channel_estimates(symbols, taps, cfg, noise_seed)?,
        cfg,
    )
}

/// Range and velocity of the periodogram peak.
pub fn estimate_target_ofdm(map: &RangeDopplerMap) -> Result<(f64, f64)> {
    let (r, d) = map
        .argmax()
        .ok_or_else(|| Error::InvalidArgument("empty range-Doppler map".into()))?;
    Ok((map.range_axis_m[r], map.velocity_axis_m_s[d]))
}

/// Fraction of the channel-estimate power that is not coherent across
/// subcarriers within a symbol, for a single target at `delay`. Zero
/// without Doppler; grows as the Doppler shift eats into the subcarrier
/// spacing.
pub fn ici_power_fraction(d: &Array2<Complex64>, delay: usize) -> f64 {
    let nc = d.ncols();
    let mut coherent = 0.0;
    let mut total = 0.0;
    for row in d.rows() {
        let mut mean = Complex64::default();
        for (m, v) in row.iter().enumerate() {
            let ramp = Complex64::from_polar(1.0, 2.0 * PI * ((m * delay) % nc) as f64 / nc as f64);
            mean += v * ramp;
            total += v.norm_sqr();
        }
        mean /= nc as f64;
        coherent += mean.norm_sqr() * nc as f64;
    }
    if total == 0.0 {
        0.0
    } else {
        (1.0 - coherent / total).max(0.0)
    }
}
