//! OTFS frames and the two channel paths.
//!
//! The delay-Doppler path evaluates the exact integer-tap input-output
//! relation directly on the grid. The waveform path goes through ISFFT,
//! a rectangular-pulse Heisenberg transform with a single cyclic prefix for
//! the whole frame, a sampled delay-Doppler channel, the Wigner transform
//! and the SFFT. With one sample per delay bin the two agree to rounding.
//!
//! All transforms are unitary. Time zero of the waveform is the first
//! sample after the cyclic prefix; prefix samples have negative time.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{signed_doppler, SystemConfig, TapChannel};

/// Modulation alphabet for random radar frames.
///
/// Only circular alphabets (`E[x²] = 0`) give the zero-mean, `MN P_s²`
/// variance off-diagonal gain statistics; BPSK is kept for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alphabet {
    #[default]
    Qpsk,
    Bpsk,
}

impl Alphabet {
    pub fn points(self, symbol_power: f64) -> Vec<Complex64> {
        match self {
            Alphabet::Qpsk => {
                let a = (symbol_power / 2.0).sqrt();
                vec![
                    Complex64::new(a, a),
                    Complex64::new(-a, a),
                    Complex64::new(-a, -a),
                    Complex64::new(a, -a),
                ]
            }
            Alphabet::Bpsk => {
                let a = symbol_power.sqrt();
                vec![Complex64::new(a, 0.0), Complex64::new(-a, 0.0)]
            }
        }
    }

    /// `E[x²]` for equiprobable symbols.
    pub fn pseudo_second_moment(self, symbol_power: f64) -> Complex64 {
        let pts = self.points(symbol_power);
        pts.iter().map(|p| p * p).sum::<Complex64>() / pts.len() as f64
    }

    /// Whether the matched-filter sidelobe statistics hold for this alphabet.
    pub fn is_circular(self) -> bool {
        self.pseudo_second_moment(1.0).norm() < 1e-12
    }
}

/// Random stream for data symbols of trial `seed`.
pub fn data_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random stream for the additive noise of trial `seed`, independent of
/// [`data_rng`] for the same seed.
pub fn noise_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// One circularly-symmetric complex Gaussian sample of the given variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// `rows x cols` grid of i.i.d. symbols drawn uniformly from `alphabet`.
pub fn random_symbols(
    rows: usize,
    cols: usize,
    alphabet: Alphabet,
    symbol_power: f64,
    seed: u64,
) -> Array2<Complex64> {
    let pts = alphabet.points(symbol_power);
    let mut rng = data_rng(seed);
    Array2::from_shape_simple_fn((rows, cols), || pts[rng.random_range(0..pts.len())])
}

fn add_noise(grid: &mut [Complex64], variance: f64, seed: u64) {
    let mut rng = noise_rng(seed);
    for v in grid.iter_mut() {
        *v += complex_gaussian(&mut rng, variance);
    }
}

/// Symbols on the delay-Doppler grid, indexed `[k, l]` (shape `N x M`).
#[derive(Debug, Clone, PartialEq)]
pub struct DdFrame {
    pub grid: Array2<Complex64>,
}

/// Samples on the time-frequency grid, indexed `[n, m]` (shape `N x M`).
#[derive(Debug, Clone, PartialEq)]
pub struct TfFrame {
    pub grid: Array2<Complex64>,
}

/// Sampled baseband waveform, `cp_length` prefix samples followed by the body.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    pub samples: Vec<Complex64>,
    pub sample_period_s: f64,
    pub cp_length: usize,
}

impl DdFrame {
    pub fn new(grid: Array2<Complex64>) -> Self {
        DdFrame { grid }
    }

    pub fn zeros(cfg: &SystemConfig) -> Self {
        DdFrame::new(Array2::zeros(shape(cfg)))
    }

    pub fn num_doppler(&self) -> usize {
        self.grid.nrows()
    }

    pub fn num_delay(&self) -> usize {
        self.grid.ncols()
    }

    /// Element `k + N l` is `x[k, l]`.
    pub fn to_vector(&self) -> Vec<Complex64> {
        self.grid.t().iter().copied().collect()
    }

    pub fn from_vector(v: &[Complex64], num_doppler: usize, num_delay: usize) -> Result<Self> {
        if v.len() != num_doppler * num_delay {
            return Err(Error::LengthMismatch {
                expected: num_doppler * num_delay,
                found: v.len(),
            });
        }
        let grid = Array2::from_shape_fn((num_doppler, num_delay), |(k, l)| v[k + num_doppler * l]);
        Ok(DdFrame { grid })
    }

    pub fn energy(&self) -> f64 {
        self.grid.iter().map(|v| v.norm_sqr()).sum()
    }

    fn check(&self, cfg: &SystemConfig) -> Result<()> {
        check_shape(self.grid.dim(), cfg)
    }

    /// CSV with one row per Doppler index and `re,im` column pairs per
    /// delay index.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_complex_grid(&self.grid, "k", "l", path)
    }
}

impl TfFrame {
    pub fn new(grid: Array2<Complex64>) -> Self {
        TfFrame { grid }
    }

    pub fn energy(&self) -> f64 {
        self.grid.iter().map(|v| v.norm_sqr()).sum()
    }

    fn check(&self, cfg: &SystemConfig) -> Result<()> {
        check_shape(self.grid.dim(), cfg)
    }
}

impl TimeSignal {
    pub fn body(&self) -> &[Complex64] {
        &self.samples[self.cp_length..]
    }
}

fn shape(cfg: &SystemConfig) -> (usize, usize) {
    (cfg.num_doppler_bins, cfg.num_delay_bins)
}

fn check_shape(found: (usize, usize), cfg: &SystemConfig) -> Result<()> {
    let expected = shape(cfg);
    if found != expected {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

pub(crate) fn write_complex_grid(
    grid: &Array2<Complex64>,
    row_name: &str,
    col_name: &str,
    path: &Path,
) -> Result<()> {
    let mut out = String::new();
    out.push_str(row_name);
    for c in 0..grid.ncols() {
        let _ = write!(out, ",re_{col_name}{c},im_{col_name}{c}");
    }
    out.push('\n');
    for (r, row) in grid.rows().into_iter().enumerate() {
        let _ = write!(out, "{r}");
        for v in row {
            let _ = write!(out, ",{:e},{:e}", v.re, v.im);
        }
        out.push('\n');
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// i.i.d. QPSK frame of power `P_s`; the same seed gives the same frame.
pub fn gen_qpsk_frame(cfg: &SystemConfig, seed: u64) -> DdFrame {
    gen_frame(cfg, Alphabet::Qpsk, seed)
}

pub fn gen_frame(cfg: &SystemConfig, alphabet: Alphabet, seed: u64) -> DdFrame {
    DdFrame::new(random_symbols(
        cfg.num_doppler_bins,
        cfg.num_delay_bins,
        alphabet,
        cfg.symbol_power,
        seed,
    ))
}

/// In-place DFT along `axis` of a 2-D grid, scaled by `1/sqrt(len)`.
pub(crate) fn unitary_fft_axis(
    grid: &mut Array2<Complex64>,
    axis: usize,
    direction: FftDirection,
    planner: &mut FftPlanner<f64>,
) {
    let len = grid.len_of(ndarray::Axis(axis));
    let fft = planner.plan_fft(len, direction);
    let scale = 1.0 / (len as f64).sqrt();
    let mut buf = vec![Complex64::default(); len];
    for mut lane in grid.lanes_mut(ndarray::Axis(axis)) {
        for (b, v) in buf.iter_mut().zip(lane.iter()) {
            *b = *v;
        }
        fft.process(&mut buf);
        for (v, b) in lane.iter_mut().zip(buf.iter()) {
            *v = b * scale;
        }
    }
}

/// `X[n,m] = (NM)^{-1/2} Σ_{k,l} x[k,l] e^{j2π(nk/N - ml/M)}`.
pub fn isfft(dd: &DdFrame, cfg: &SystemConfig) -> Result<TfFrame> {
    dd.check(cfg)?;
    let mut grid = dd.grid.clone();
    let mut planner = FftPlanner::new();
    unitary_fft_axis(&mut grid, 0, FftDirection::Inverse, &mut planner);
    unitary_fft_axis(&mut grid, 1, FftDirection::Forward, &mut planner);
    Ok(TfFrame::new(grid))
}

pub fn sfft(tf: &TfFrame, cfg: &SystemConfig) -> Result<DdFrame> {
    tf.check(cfg)?;
    let mut grid = tf.grid.clone();
    let mut planner = FftPlanner::new();
    unitary_fft_axis(&mut grid, 0, FftDirection::Forward, &mut planner);
    unitary_fft_axis(&mut grid, 1, FftDirection::Inverse, &mut planner);
    Ok(DdFrame::new(grid))
}

/// Table of `e^{j2π i / len}` for `i` in `0..len`.
pub(crate) fn unit_roots(len: usize) -> Vec<Complex64> {
    (0..len)
        .map(|i| Complex64::from_polar(1.0, 2.0 * PI * i as f64 / len as f64))
        .collect()
}

/// Exact integer-tap delay-Doppler input-output relation:
///
/// `y[k,l] = Σ h[k',l'] e^{j2π [l-l']_M (k')_N / (MN)} α x[[k-k']_N, [l-l']_M] + w[k,l]`
///
/// with `α = e^{-j2πk/N}` when `l < l'` and `1` otherwise. Noise of variance
/// `σ²` is added when `noise_seed` is given.
pub fn apply_channel_dd(
    x: &DdFrame,
    taps: &TapChannel,
    cfg: &SystemConfig,
    noise_seed: Option<u64>,
) -> Result<DdFrame> {
    x.check(cfg)?;
    taps.check_grid(cfg)?;
    let n = cfg.num_doppler_bins;
    let m = cfg.num_delay_bins;
    let mn = (m * n) as i64;
    let roots_mn = unit_roots(m * n);
    let roots_n = unit_roots(n);
    let mut y = Array2::<Complex64>::zeros((n, m));
    for tap in taps.taps() {
        let kt = tap.doppler;
        let lt = tap.delay;
        let kt_signed = signed_doppler(kt, n);
        for l in 0..m {
            let ls = (l + m - lt) % m;
            let phase = roots_mn[(kt_signed * ls as i64).rem_euclid(mn) as usize] * tap.gain;
            for k in 0..n {
                let ks = (k + n - kt) % n;
                let mut v = phase * x.grid[[ks, ls]];
                if l < lt {
                    v *= roots_n[(n - k) % n];
                }
                y[[k, l]] += v;
            }
        }
    }
    if let Some(seed) = noise_seed {
        add_noise(
            y.as_slice_mut().expect("standard layout"),
            cfg.noise_variance,
            seed,
        );
    }
    Ok(DdFrame::new(y))
}

/// Rectangular-pulse Heisenberg transform: per time slot a unitary
/// length-`M` inverse DFT, then one cyclic prefix of `L` samples for the
/// whole `NM`-sample body.
pub fn heisenberg(tf: &TfFrame, cfg: &SystemConfig) -> Result<TimeSignal> {
    tf.check(cfg)?;
    let mut grid = tf.grid.clone();
    let mut planner = FftPlanner::new();
    unitary_fft_axis(&mut grid, 1, FftDirection::Inverse, &mut planner);
    let body: Vec<Complex64> = grid.iter().copied().collect();
    let l = cfg.cp_length_samples;
    let mut samples = Vec::with_capacity(body.len() + l);
    samples.extend_from_slice(&body[body.len() - l..]);
    samples.extend_from_slice(&body);
    Ok(TimeSignal {
        samples,
        sample_period_s: cfg.sample_period_s(),
        cp_length: l,
    })
}

/// Drops the cyclic prefix and applies a unitary length-`M` DFT per slot.
pub fn wigner(r: &TimeSignal, cfg: &SystemConfig) -> Result<TfFrame> {
    let l = cfg.cp_length_samples;
    let expected = cfg.grid_size() + l;
    if r.samples.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            found: r.samples.len(),
        });
    }
    let body = r.samples[l..].to_vec();
    let mut grid = Array2::from_shape_vec(shape(cfg), body).expect("length checked");
    let mut planner = FftPlanner::new();
    unitary_fft_axis(&mut grid, 1, FftDirection::Forward, &mut planner);
    Ok(TfFrame::new(grid))
}

/// Sampled multipath delay-Doppler channel shared by the OTFS and OFDM
/// waveform paths. Sample `i` sits at time `(i - cp_length) T_s`; the tap
/// `(k, l)` contributes `h s[i - l] e^{j2π (k)_N (i - cp_length - l) / (N M)}`,
/// and nothing before the transmission started.
pub(crate) fn propagate(
    s: &TimeSignal,
    taps: &TapChannel,
    num_doppler: usize,
    num_delay: usize,
) -> Vec<Complex64> {
    let len = s.samples.len();
    let nm = num_doppler * num_delay;
    let roots = unit_roots(nm);
    let origin = s.cp_length as i64;
    let mut r = vec![Complex64::default(); len];
    for tap in taps.taps() {
        let ks = signed_doppler(tap.doppler, num_doppler);
        for (i, out) in r.iter_mut().enumerate().skip(tap.delay) {
            let t = i as i64 - origin - tap.delay as i64;
            let phase = roots[(ks * t).rem_euclid(nm as i64) as usize];
            *out += tap.gain * phase * s.samples[i - tap.delay];
        }
    }
    r
}

/// Waveform-domain channel for an OTFS frame. Requires every delay to fit
/// inside the cyclic prefix.
pub fn apply_channel_time(
    s: &TimeSignal,
    taps: &TapChannel,
    cfg: &SystemConfig,
    noise_seed: Option<u64>,
) -> Result<TimeSignal> {
    taps.check_grid(cfg)?;
    let expected = cfg.grid_size() + cfg.cp_length_samples;
    if s.samples.len() != expected || s.cp_length != cfg.cp_length_samples {
        return Err(Error::LengthMismatch {
            expected,
            found: s.samples.len(),
        });
    }
    if let Some(d) = taps.max_delay() {
        if d > s.cp_length {
            return Err(Error::DelayExceedsCp {
                delay: d,
                cp: s.cp_length,
            });
        }
    }
    let mut samples = propagate(s, taps, cfg.num_doppler_bins, cfg.num_delay_bins);
    if let Some(seed) = noise_seed {
        add_noise(&mut samples, cfg.noise_variance, seed);
    }
    Ok(TimeSignal {
        samples,
        sample_period_s: s.sample_period_s,
        cp_length: s.cp_length,
    })
}

/// Full waveform path: ISFFT, Heisenberg, channel, Wigner, SFFT.
pub fn otfs_time_domain_link(
    x: &DdFrame,
    taps: &TapChannel,
    cfg: &SystemConfig,
    noise_seed: Option<u64>,
) -> Result<DdFrame> {
    let s = heisenberg(&isfft(x, cfg)?, cfg)?;
    let r = apply_channel_time(&s, taps, cfg, noise_seed)?;
    sfft(&wigner(&r, cfg)?, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Tap;

    fn max_abs_diff(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn qpsk_frames_have_constant_power_and_are_deterministic() {
        let cfg = SystemConfig::unit(16, 8).unwrap();
        let a = gen_qpsk_frame(&cfg, 7);
        let b = gen_qpsk_frame(&cfg, 7);
        assert_eq!(a, b);
        assert_ne!(a, gen_qpsk_frame(&cfg, 8));
        for v in a.grid.iter() {
            assert!((v.norm_sqr() - cfg.symbol_power).abs() < 1e-15);
        }
    }

    #[test]
    fn qpsk_sample_mean_is_small() {
        let cfg = SystemConfig::unit(64, 64).unwrap();
        let bound = 4.0 / (cfg.grid_size() as f64).sqrt();
        let within = (0..1000u64)
            .filter(|&s| {
                let f = gen_qpsk_frame(&cfg, s);
                (f.grid.sum() / cfg.grid_size() as f64).norm() < bound
            })
            .count();
        assert!(within >= 990, "{within}");
    }

    #[test]
    fn alphabet_moments() {
        assert!(Alphabet::Qpsk.is_circular());
        assert!(!Alphabet::Bpsk.is_circular());
        assert!(
            (Alphabet::Bpsk.pseudo_second_moment(2.0) - Complex64::new(2.0, 0.0)).norm() < 1e-12
        );
    }

    #[test]
    fn isfft_of_constant_is_dc_spike() {
        let cfg = SystemConfig::unit(8, 4).unwrap();
        let x = DdFrame::new(Array2::from_elem((4, 8), Complex64::new(1.0, 0.0)));
        let tf = isfft(&x, &cfg).unwrap();
        assert!((tf.grid[[0, 0]] - Complex64::new(32f64.sqrt(), 0.0)).norm() < 1e-12);
        let rest: f64 = tf.grid.iter().skip(1).map(|v| v.norm()).sum();
        assert!(rest < 1e-12);
    }

    #[test]
    fn isfft_matches_definition() {
        let cfg = SystemConfig::unit(4, 3).unwrap();
        let x = gen_qpsk_frame(&cfg, 3);
        let tf = isfft(&x, &cfg).unwrap();
        let (n, m) = (3usize, 4usize);
        for nn in 0..n {
            for mm in 0..m {
                let mut acc = Complex64::default();
                for k in 0..n {
                    for l in 0..m {
                        let ang =
                            2.0 * PI * ((nn * k) as f64 / n as f64 - (mm * l) as f64 / m as f64);
                        acc += x.grid[[k, l]] * Complex64::from_polar(1.0, ang);
                    }
                }
                acc /= ((n * m) as f64).sqrt();
                assert!((acc - tf.grid[[nn, mm]]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let cfg = SystemConfig::unit(8, 4).unwrap();
        let x = DdFrame::new(Array2::zeros((4, 4)));
        assert!(matches!(
            isfft(&x, &cfg),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn heisenberg_of_single_bin() {
        let cfg = SystemConfig::unit(8, 4).unwrap().with_cp_length(2);
        let mut grid = Array2::zeros((4, 8));
        grid[[0, 0]] = Complex64::new(1.0, 0.0);
        let s = heisenberg(&TfFrame::new(grid), &cfg).unwrap();
        let body = s.body();
        for v in &body[..8] {
            assert!((v - Complex64::new(1.0 / 8f64.sqrt(), 0.0)).norm() < 1e-15);
        }
        assert!(body[8..].iter().all(|v| v.norm() < 1e-15));
        assert_eq!(&s.samples[..2], &body[30..]);
    }

    #[test]
    fn wigner_of_constant_block() {
        let cfg = SystemConfig::unit(8, 2).unwrap().with_cp_length(0);
        let s = TimeSignal {
            samples: vec![Complex64::new(1.0, 0.0); 16],
            sample_period_s: cfg.sample_period_s(),
            cp_length: 0,
        };
        let y = wigner(&s, &cfg).unwrap();
        for n in 0..2 {
            assert!((y.grid[[n, 0]] - Complex64::new(8f64.sqrt(), 0.0)).norm() < 1e-12);
            assert!(y.grid.row(n).iter().skip(1).all(|v| v.norm() < 1e-12));
        }
        let short = TimeSignal {
            samples: vec![Complex64::default(); 15],
            ..s
        };
        assert!(matches!(
            wigner(&short, &cfg),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn delayed_waveform_has_linear_phase_per_block() {
        // Identical slots make the body M-periodic, so a delay inside the
        // prefix is a cyclic shift of every slot: Y[n,m] = X[n,m] e^{-j2π m d / M}.
        let cfg = SystemConfig::unit(16, 4).unwrap().with_cp_length(5);
        let row = gen_qpsk_frame(&cfg, 11).grid.row(0).to_owned();
        let mut grid = Array2::zeros((4, 16));
        for mut r in grid.rows_mut() {
            r.assign(&row);
        }
        let tf = TfFrame::new(grid);
        let s = heisenberg(&tf, &cfg).unwrap();
        let d = 3;
        let r = apply_channel_time(&s, &TapChannel::single(Tap::unit(0, d)), &cfg, None).unwrap();
        let y = wigner(&r, &cfg).unwrap();
        for n in 0..4 {
            for m in 0..16 {
                let ramp = Complex64::from_polar(1.0, -2.0 * PI * (m * d) as f64 / 16.0);
                assert!((y.grid[[n, m]] - tf.grid[[n, m]] * ramp).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_channel_dd() {
        let cfg = SystemConfig::unit(8, 4).unwrap();
        let x = gen_qpsk_frame(&cfg, 1);
        let y = apply_channel_dd(&x, &TapChannel::single(Tap::unit(0, 0)), &cfg, None).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn pure_delay_dd() {
        let cfg = SystemConfig::unit(8, 4).unwrap();
        let x = gen_qpsk_frame(&cfg, 2);
        let l0 = 3;
        let y = apply_channel_dd(&x, &TapChannel::single(Tap::unit(0, l0)), &cfg, None).unwrap();
        for k in 0..4 {
            for l in 0..8 {
                let src = x.grid[[k, (l + 8 - l0) % 8]];
                let want = if l < l0 {
                    src * Complex64::from_polar(1.0, -2.0 * PI * k as f64 / 4.0)
                } else {
                    src
                };
                assert!((y.grid[[k, l]] - want).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn time_channel_identity_empty_and_superposition() {
        let cfg = SystemConfig::unit(8, 4).unwrap().with_cp_length(4);
        let s = heisenberg(&isfft(&gen_qpsk_frame(&cfg, 5), &cfg).unwrap(), &cfg).unwrap();
        let id = apply_channel_time(&s, &TapChannel::single(Tap::unit(0, 0)), &cfg, None).unwrap();
        assert_eq!(id.samples, s.samples);
        let none = apply_channel_time(&s, &TapChannel::empty(), &cfg, None).unwrap();
        assert!(none.samples.iter().all(|v| *v == Complex64::default()));

        let a = Tap::new(1, 2, Complex64::new(0.5, -0.2));
        let b = Tap::new(3, 4, Complex64::new(-1.0, 0.7));
        let both =
            apply_channel_time(&s, &TapChannel::new(vec![a, b]).unwrap(), &cfg, None).unwrap();
        let ra = apply_channel_time(&s, &TapChannel::single(a), &cfg, None).unwrap();
        let rb = apply_channel_time(&s, &TapChannel::single(b), &cfg, None).unwrap();
        for i in 0..both.samples.len() {
            assert!((both.samples[i] - ra.samples[i] - rb.samples[i]).norm() < 1e-14);
        }
    }

    #[test]
    fn delay_beyond_prefix_is_rejected() {
        let cfg = SystemConfig::unit(8, 4).unwrap().with_cp_length(2);
        let s = heisenberg(&isfft(&gen_qpsk_frame(&cfg, 5), &cfg).unwrap(), &cfg).unwrap();
        let e = apply_channel_time(&s, &TapChannel::single(Tap::unit(0, 3)), &cfg, None);
        assert!(matches!(e, Err(Error::DelayExceedsCp { delay: 3, cp: 2 })));
    }

    #[test]
    fn automotive_tap_21_65_matches_waveform_path() {
        let cfg = SystemConfig::automotive().with_cp_length(128);
        let x = gen_qpsk_frame(&cfg, 42);
        let taps = TapChannel::single(Tap::unit(21, 65));
        let dd = apply_channel_dd(&x, &taps, &cfg, None).unwrap();
        let td = otfs_time_domain_link(&x, &taps, &cfg, None).unwrap();
        assert!(max_abs_diff(&dd.grid, &td.grid) < 1e-9);
    }

    #[test]
    fn dd_noise_variance() {
        let mut cfg = SystemConfig::unit(512, 256).unwrap();
        cfg.noise_variance = 0.37;
        let y =
            apply_channel_dd(&DdFrame::zeros(&cfg), &TapChannel::empty(), &cfg, Some(9)).unwrap();
        let var = y.grid.iter().map(|v| v.norm_sqr()).sum::<f64>() / cfg.grid_size() as f64;
        assert!((var / 0.37 - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn vector_index_convention() {
        let cfg = SystemConfig::unit(3, 2).unwrap();
        let x = gen_qpsk_frame(&cfg, 4);
        let v = x.to_vector();
        for k in 0..2 {
            for l in 0..3 {
                assert_eq!(v[k + 2 * l], x.grid[[k, l]]);
            }
        }
        assert_eq!(DdFrame::from_vector(&v, 2, 3).unwrap(), x);
    }
}
