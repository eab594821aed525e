//! Matched-filter range/velocity estimation.
//!
//! Stacking the grid as `v[k + N l] = v[k, l]`, the received frame is
//! `y = X̃ h + w`, where column `k'' + N l''` of the dictionary `X̃` is the
//! frame after passing through a unit tap at `(k'', l'')`. The matched
//! filter is `ĥ = X̃ᴴ y`, reported normalized by `MN P_s` so that a unit
//! target shows up with magnitude close to one.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{derive_resolutions, signed_doppler, SystemConfig, Tap};
use crate::modem::{gen_frame, unit_roots, Alphabet, DdFrame};

/// Largest `MN` for which a dictionary or gain matrix is materialized.
pub const DEFAULT_MATERIALIZE_LIMIT: usize = 4096;

/// Default detection threshold above the noise floor, in dB.
pub const DEFAULT_THRESHOLD_DB: f64 = 13.0;

/// Entry `X̃[i, j]` for `i = k' + N l'` and `j = k'' + N l''`.
pub fn dictionary_entry(x: &DdFrame, i: usize, j: usize) -> Complex64 {
    let n = x.num_doppler();
    let m = x.num_delay();
    let (k1, l1) = (i % n, i / n);
    let (k2, l2) = (j % n, j / n);
    let ls = (l1 + m - l2) % m;
    let ks = (k1 + n - k2) % n;
    let mn = (m * n) as i64;
    let turns = (signed_doppler(k2, n) * ls as i64).rem_euclid(mn) as f64 / mn as f64;
    let mut phase = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * turns);
    if l1 < l2 {
        phase *= Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * k1 as f64 / n as f64);
    }
    x.grid[[ks, ls]] * phase
}

#[derive(Debug, Clone)]
pub struct Dictionary {
    /// `MN x MN`, rows are received positions, columns candidate taps.
    pub matrix: Array2<Complex64>,
    pub cfg: SystemConfig,
}

pub fn build_dictionary(x: &DdFrame, cfg: &SystemConfig) -> Result<Dictionary> {
    build_dictionary_with_limit(x, cfg, DEFAULT_MATERIALIZE_LIMIT)
}

pub fn build_dictionary_with_limit(
    x: &DdFrame,
    cfg: &SystemConfig,
    limit: usize,
) -> Result<Dictionary> {
    check_frame(x, cfg)?;
    let size = cfg.grid_size();
    if size > limit {
        return Err(Error::GridTooLarge { size, limit });
    }
    let matrix = Array2::from_shape_fn((size, size), |(i, j)| dictionary_entry(x, i, j));
    Ok(Dictionary { matrix, cfg: *cfg })
}

fn check_frame(x: &DdFrame, cfg: &SystemConfig) -> Result<()> {
    let expected = (cfg.num_doppler_bins, cfg.num_delay_bins);
    if x.grid.dim() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: x.grid.dim(),
        });
    }
    Ok(())
}

/// A grid bin that crossed the detection threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "k")]
    pub doppler: usize,
    #[serde(rename = "l")]
    pub delay: usize,
    pub range_m: f64,
    pub velocity_m_s: f64,
    pub magnitude: f64,
    #[serde(skip)]
    pub gain: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionPolicy {
    /// Power threshold over the noise floor.
    pub threshold_db: f64,
    pub max_detections: Option<usize>,
}

impl Default for DetectionPolicy {
    fn default() -> Self {
        DetectionPolicy {
            threshold_db: DEFAULT_THRESHOLD_DB,
            max_detections: None,
        }
    }
}

/// Normalized matched-filter output `ĥ / (MN P_s)`.
#[derive(Debug, Clone)]
pub struct DdEstimate {
    /// Indexed `[k, l]`.
    pub grid: Array2<Complex64>,
    /// Detections under the default policy, strongest first.
    pub peaks: Vec<Detection>,
    /// Median-based estimate of the mean off-peak power.
    pub noise_floor: f64,
    pub cfg: SystemConfig,
}

impl DdEstimate {
    pub fn from_normalized(grid: Array2<Complex64>, cfg: &SystemConfig) -> Self {
        let power: Vec<f64> = grid.iter().map(|v| v.norm_sqr()).collect();
        let noise_floor = median_noise_floor(&power);
        let mut est = DdEstimate {
            grid,
            peaks: Vec::new(),
            noise_floor,
            cfg: *cfg,
        };
        est.peaks = detect_targets(&est, &DetectionPolicy::default());
        est
    }

    pub fn power(&self) -> Array2<f64> {
        self.grid.mapv(|v| v.norm_sqr())
    }

    /// Strongest bin `(k, l)`; ties go to the lowest `(l, k)`.
    pub fn argmax(&self) -> (usize, usize) {
        let n = self.grid.nrows();
        let m = self.grid.ncols();
        let mut best = (0, 0);
        let mut best_p = f64::NEG_INFINITY;
        for l in 0..m {
            for k in 0..n {
                let p = self.grid[[k, l]].norm_sqr();
                if p > best_p {
                    best_p = p;
                    best = (k, l);
                }
            }
        }
        best
    }

    /// Physical position of the strongest bin.
    pub fn estimate_target(&self) -> (f64, f64) {
        let (k, l) = self.argmax();
        let t = crate::grid::tap_to_target(&Tap::unit(k, l), &self.cfg);
        (t.range_m, t.velocity_m_s)
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        crate::modem::write_complex_grid(&self.grid, "k", "l", path)
    }
}

/// `median(p) / ln 2`: for exponentially distributed bin powers this is
/// the mean, and a handful of target bins barely move it.
pub fn median_noise_floor(power: &[f64]) -> f64 {
    if power.is_empty() {
        return 0.0;
    }
    let mut v = power.to_vec();
    let mid = v.len() / 2;
    let (_, median, _) = v.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    *median / std::f64::consts::LN_2
}

/// Greedy extraction of bins whose power exceeds `threshold · noise_floor`,
/// strongest first. No sidelobe cancellation is attempted.
pub fn detect_targets(est: &DdEstimate, policy: &DetectionPolicy) -> Vec<Detection> {
    let threshold = est.noise_floor * 10f64.powf(policy.threshold_db / 10.0);
    let n = est.grid.nrows();
    let res = derive_resolutions(&est.cfg);
    let mut hits: Vec<Detection> = est
        .grid
        .indexed_iter()
        .filter(|(_, v)| v.norm_sqr() > threshold)
        .map(|((k, l), v)| Detection {
            doppler: k,
            delay: l,
            range_m: l as f64 * res.range_res_m,
            velocity_m_s: signed_doppler(k, n) as f64 * res.velocity_res_m_s,
            magnitude: v.norm(),
            gain: *v,
        })
        .collect();
    hits.sort_by(|a, b| {
        b.magnitude
            .total_cmp(&a.magnitude)
            .then(a.delay.cmp(&b.delay))
            .then(a.doppler.cmp(&b.doppler))
    });
    if let Some(max) = policy.max_detections {
        hits.truncate(max);
    }
    hits
}

fn normalization(cfg: &SystemConfig) -> f64 {
    1.0 / (cfg.grid_size() as f64 * cfg.symbol_power)
}

/// `ĥ = X̃ᴴ y` with an explicit dictionary.
pub fn matched_filter_naive(y: &DdFrame, dict: &Dictionary) -> Result<DdEstimate> {
    let cfg = &dict.cfg;
    check_frame(y, cfg)?;
    let yv = Array1::from(y.to_vector());
    let scale = normalization(cfg);
    let h: Vec<Complex64> = dict
        .matrix
        .columns()
        .into_iter()
        .map(|col| {
            col.iter()
                .zip(yv.iter())
                .map(|(a, b)| a.conj() * b)
                .sum::<Complex64>()
                * scale
        })
        .collect();
    Ok(DdEstimate::from_normalized(
        DdFrame::from_vector(&h, cfg.num_doppler_bins, cfg.num_delay_bins)?.grid,
        cfg,
    ))
}

/// `ĥ = X̃ᴴ y` evaluated entry by entry without storing `X̃`.
/// Same `O((MN)²)` cost as the explicit product.
pub fn matched_filter_direct(y: &DdFrame, x: &DdFrame, cfg: &SystemConfig) -> Result<DdEstimate> {
    check_frame(y, cfg)?;
    check_frame(x, cfg)?;
    let n = cfg.num_doppler_bins;
    let m = cfg.num_delay_bins;
    let mn = (m * n) as i64;
    let roots_mn = unit_roots(m * n);
    let roots_n = unit_roots(n);
    // Column-major copies: xc[l][k] = conj(x[k, l]); yc[l][k] = y[k, l] and
    // the same rotated by conj(α) for wrapped delays.
    let xc: Vec<Vec<Complex64>> = (0..m)
        .map(|l| (0..n).map(|k| x.grid[[k, l]].conj()).collect())
        .collect();
    let yc: Vec<Vec<Complex64>> = (0..m)
        .map(|l| (0..n).map(|k| y.grid[[k, l]]).collect())
        .collect();
    let yc_rot: Vec<Vec<Complex64>> = (0..m)
        .map(|l| (0..n).map(|k| y.grid[[k, l]] * roots_n[k]).collect())
        .collect();
    let mut out = Array2::<Complex64>::zeros((n, m));
    for l2 in 0..m {
        for k2 in 0..n {
            let k2s = signed_doppler(k2, n);
            let mut acc = Complex64::default();
            for l1 in 0..m {
                let ls = (l1 + m - l2) % m;
                let xs = &xc[ls];
                let ys = if l1 < l2 { &yc_rot[l1] } else { &yc[l1] };
                let mut inner = Complex64::default();
                for (k1, yv) in ys.iter().enumerate() {
                    inner += xs[(k1 + n - k2) % n] * yv;
                }
                acc += inner * roots_mn[(-k2s * ls as i64).rem_euclid(mn) as usize];
            }
            out[[k2, l2]] = acc;
        }
    }
    let scale = normalization(cfg);
    out.mapv_inplace(|v| v * scale);
    Ok(DdEstimate::from_normalized(out, cfg))
}

/// `ĥ = X̃ᴴ y` in `O(M² N log N)`.
///
/// For a fixed pair of candidate delay `l''` and received delay `l`, the
/// sum over Doppler is a length-`N` circular cross-correlation between
/// column `l` of `y` (rotated by `e^{j2πk/N}` when `l < l''`) and column
/// `[l - l'']_M` of `x`. Each correlation is done with FFTs; the rotation
/// is a one-bin shift of the column spectrum.
pub fn matched_filter_fast(y: &DdFrame, x: &DdFrame, cfg: &SystemConfig) -> Result<DdEstimate> {
    check_frame(y, cfg)?;
    check_frame(x, cfg)?;
    let n = cfg.num_doppler_bins;
    let m = cfg.num_delay_bins;
    let mn = (m * n) as i64;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut scratch = vec![
        Complex64::default();
        fwd.get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len())
    ];

    let column_spectra =
        |g: &Array2<Complex64>, scratch: &mut [Complex64]| -> Vec<Vec<Complex64>> {
            (0..m)
                .map(|l| {
                    let mut col: Vec<Complex64> = g.column(l).to_vec();
                    fwd.process_with_scratch(&mut col, scratch);
                    col
                })
                .collect()
        };
    let x_conj_spec: Vec<Vec<Complex64>> = column_spectra(&x.grid, &mut scratch)
        .into_iter()
        .map(|c| c.into_iter().map(|v| v.conj()).collect())
        .collect();
    let y_spec = column_spectra(&y.grid, &mut scratch);
    let y_spec_rot: Vec<Vec<Complex64>> = y_spec
        .iter()
        .map(|c| (0..n).map(|f| c[(f + n - 1) % n]).collect())
        .collect();

    let roots_mn = unit_roots(m * n);
    // phase[ls][k2] = e^{-j2π (k2)_N ls / (MN)}
    let phase: Vec<Vec<Complex64>> = (0..m)
        .map(|ls| {
            (0..n)
                .map(|k2| roots_mn[(-signed_doppler(k2, n) * ls as i64).rem_euclid(mn) as usize])
                .collect()
        })
        .collect();

    let mut out = Array2::<Complex64>::zeros((n, m));
    let mut buf = vec![Complex64::default(); n];
    let mut acc = vec![Complex64::default(); n];
    for l2 in 0..m {
        acc.iter_mut().for_each(|a| *a = Complex64::default());
        for l in 0..m {
            let ls = (l + m - l2) % m;
            let ys = if l < l2 { &y_spec_rot[l] } else { &y_spec[l] };
            let xs = &x_conj_spec[ls];
            for ((b, yv), xv) in buf.iter_mut().zip(ys).zip(xs) {
                *b = yv * xv;
            }
            inv.process_with_scratch(&mut buf, &mut scratch);
            for ((a, b), p) in acc.iter_mut().zip(&buf).zip(&phase[ls]) {
                *a += b * p;
            }
        }
        let scale = normalization(cfg) / n as f64;
        for (k2, a) in acc.iter().enumerate() {
            out[[k2, l2]] = a * scale;
        }
    }
    Ok(DdEstimate::from_normalized(out, cfg))
}

/// `G = X̃ᴴ X̃`, only for grids with `MN` up to the materialization limit.
pub fn gain_matrix(x: &DdFrame, cfg: &SystemConfig) -> Result<Array2<Complex64>> {
    gain_matrix_with_limit(x, cfg, DEFAULT_MATERIALIZE_LIMIT)
}

pub fn gain_matrix_with_limit(
    x: &DdFrame,
    cfg: &SystemConfig,
    limit: usize,
) -> Result<Array2<Complex64>> {
    let dict = build_dictionary_with_limit(x, cfg, limit)?;
    let adjoint = dict.matrix.t().mapv(|v| v.conj());
    Ok(adjoint.dot(&dict.matrix))
}

/// `G[i, j]` for one frame without materializing anything.
pub fn gain_entry(x: &DdFrame, i: usize, j: usize) -> Complex64 {
    let size = x.num_doppler() * x.num_delay();
    (0..size)
        .map(|r| dictionary_entry(x, r, i).conj() * dictionary_entry(x, r, j))
        .sum()
}

/// Sample mean and variance of an off-diagonal gain entry over random frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaStats {
    pub i: usize,
    pub j: usize,
    pub trials: usize,
    pub mean: Complex64,
    /// `mean(|G - mean|²)`
    pub variance: f64,
    /// Set when the alphabet is not circular, in which case the
    /// `MN P_s²` variance does not apply.
    pub non_circular_alphabet: bool,
}

pub const MIN_LEMMA_TRIALS: usize = 1000;

/// Statistics of `G[i, j]` over `num_trials` i.i.d. QPSK frames with seeds
/// `seed, seed + 1, ...`.
pub fn lemma1_stats(
    cfg: &SystemConfig,
    num_trials: usize,
    pair: (usize, usize),
    seed: u64,
) -> Result<LemmaStats> {
    lemma1_stats_with_alphabet(cfg, Alphabet::Qpsk, num_trials, pair, seed)
}

pub fn lemma1_stats_with_alphabet(
    cfg: &SystemConfig,
    alphabet: Alphabet,
    num_trials: usize,
    (i, j): (usize, usize),
    seed: u64,
) -> Result<LemmaStats> {
    let size = cfg.grid_size();
    if i == j {
        return Err(Error::InvalidArgument(format!(
            "({i}, {j}) is a diagonal entry"
        )));
    }
    if i >= size || j >= size {
        return Err(Error::InvalidArgument(format!(
            "({i}, {j}) is outside a {size}x{size} gain matrix"
        )));
    }
    if num_trials < MIN_LEMMA_TRIALS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_LEMMA_TRIALS} trials, got {num_trials}"
        )));
    }
    let samples: Vec<Complex64> = (0..num_trials as u64)
        .map(|t| gain_entry(&gen_frame(cfg, alphabet, seed.wrapping_add(t)), i, j))
        .collect();
    let count = num_trials as f64;
    let mean = samples.iter().sum::<Complex64>() / count;
    let variance = samples.iter().map(|g| (g - mean).norm_sqr()).sum::<f64>() / count;
    Ok(LemmaStats {
        i,
        j,
        trials: num_trials,
        mean,
        variance,
        non_circular_alphabet: !alphabet.is_circular(),
    })
}
