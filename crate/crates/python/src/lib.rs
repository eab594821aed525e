//! Python bindings. Grids cross the boundary as lists of rows of complex
//! numbers, indexed `[k][l]` (Doppler, delay).

use ndarray::Array2;
use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use radar::estimator::{lemma1_stats, matched_filter_fast, DdEstimate};
use radar::experiment::{run_scenario, run_sweep, Experiment, SweepAxis};
use radar::grid::{self, derive_resolutions, QuantizeMode, Tap, TapChannel, Target};
use radar::metrics::{self, frame_duration_report, rmse_sweep};
use radar::modem::{self, DdFrame};
use radar::ofdm::{estimate_target_ofdm, OfdmConfig};
use radar::trial::{ofdm_map, otfs_estimate, RadarSystem};

fn err(e: radar::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

type Grid = Vec<Vec<Complex64>>;
type TapTuple = (usize, usize, Complex64);
type QuantizedScene = (Vec<TapTuple>, Vec<(f64, f64)>);

fn to_rows(a: &Array2<Complex64>) -> Grid {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows(rows: Grid) -> PyResult<Array2<Complex64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("grid rows differ in length"));
    }
    Array2::from_shape_vec((n, m), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn channel(taps: Vec<TapTuple>) -> PyResult<TapChannel> {
    TapChannel::new(
        taps.into_iter()
            .map(|(k, l, g)| Tap::new(k, l, g))
            .collect(),
    )
    .map_err(err)
}

/// System parameters of the OTFS frame.
#[pyclass(name = "SystemConfig", from_py_object)]
#[derive(Clone)]
struct PySystemConfig {
    inner: grid::SystemConfig,
}

#[pymethods]
impl PySystemConfig {
    /// Keys not given in `toml_text` keep their default values.
    #[new]
    #[pyo3(signature = (toml_text = ""))]
    fn new(toml_text: &str) -> PyResult<Self> {
        Ok(PySystemConfig {
            inner: grid::SystemConfig::from_toml_str(toml_text).map_err(err)?,
        })
    }

    #[staticmethod]
    fn automotive() -> Self {
        PySystemConfig {
            inner: grid::SystemConfig::automotive(),
        }
    }

    /// `M x N` grid with 1 Hz subcarrier spacing.
    #[staticmethod]
    fn unit(num_delay_bins: usize, num_doppler_bins: usize) -> PyResult<Self> {
        Ok(PySystemConfig {
            inner: grid::SystemConfig::unit(num_delay_bins, num_doppler_bins).map_err(err)?,
        })
    }

    fn with_snr_db(&self, snr_db: f64) -> Self {
        PySystemConfig {
            inner: self.inner.with_snr_db(snr_db),
        }
    }

    fn with_cp_length(&self, cp_length_samples: usize) -> PyResult<Self> {
        let inner = self.inner.with_cp_length(cp_length_samples);
        inner.validate().map_err(err)?;
        Ok(PySystemConfig { inner })
    }

    #[getter]
    fn num_delay_bins(&self) -> usize {
        self.inner.num_delay_bins
    }
    #[getter]
    fn num_doppler_bins(&self) -> usize {
        self.inner.num_doppler_bins
    }
    #[getter]
    fn carrier_freq_hz(&self) -> f64 {
        self.inner.carrier_freq_hz
    }
    #[getter]
    fn bandwidth_hz(&self) -> f64 {
        self.inner.bandwidth_hz
    }
    #[getter]
    fn cp_length_samples(&self) -> usize {
        self.inner.cp_length_samples
    }
    #[getter]
    fn symbol_power(&self) -> f64 {
        self.inner.symbol_power
    }
    #[getter]
    fn noise_variance(&self) -> f64 {
        self.inner.noise_variance
    }
    #[getter]
    fn snr_db(&self) -> f64 {
        self.inner.snr_db()
    }

    fn resolutions<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = derive_resolutions(&self.inner);
        let d = PyDict::new(py);
        d.set_item("delay_res_s", r.delay_res_s)?;
        d.set_item("doppler_res_hz", r.doppler_res_hz)?;
        d.set_item("range_res_m", r.range_res_m)?;
        d.set_item("velocity_res_m_s", r.velocity_res_m_s)?;
        d.set_item("max_unambiguous_range_m", r.max_unambiguous_range_m)?;
        d.set_item(
            "max_unambiguous_velocity_m_s",
            r.max_unambiguous_velocity_m_s,
        )?;
        Ok(d)
    }

    /// `(otfs_samples, ofdm_samples, saved_samples)`
    fn frame_duration(&self) -> (usize, usize, usize) {
        let f = frame_duration_report(&self.inner);
        (f.otfs_samples, f.ofdm_samples, f.saved_samples)
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    fn __repr__(&self) -> String {
        format!(
            "SystemConfig(M={}, N={}, fc={} Hz, B={} Hz, L={}, snr={:.2} dB)",
            self.inner.num_delay_bins,
            self.inner.num_doppler_bins,
            self.inner.carrier_freq_hz,
            self.inner.bandwidth_hz,
            self.inner.cp_length_samples,
            self.inner.snr_db()
        )
    }
}

/// Maps `(range_m, velocity_m_s, gain)` targets to `(k, l, gain)` taps.
/// Returns the taps and the `(delay, doppler)` residual of every target in bins.
#[pyfunction]
#[pyo3(signature = (cfg, targets, nearest = false))]
fn scene_to_taps(
    cfg: &PySystemConfig,
    targets: Vec<(f64, f64, Complex64)>,
    nearest: bool,
) -> PyResult<QuantizedScene> {
    let scene: Vec<Target> = targets
        .into_iter()
        .map(|(r, v, g)| Target::new(r, v).with_gain(g))
        .collect();
    let mode = if nearest {
        QuantizeMode::Nearest
    } else {
        QuantizeMode::Exact
    };
    let q = grid::scene_to_taps(&scene, &cfg.inner, mode).map_err(err)?;
    Ok((
        q.channel
            .taps()
            .iter()
            .map(|t| (t.doppler, t.delay, t.gain))
            .collect(),
        q.residuals
            .iter()
            .map(|r| (r.delay_bins, r.doppler_bins))
            .collect(),
    ))
}

/// `(range_m, velocity_m_s)` of a tap.
#[pyfunction]
fn tap_to_target(cfg: &PySystemConfig, doppler: usize, delay: usize) -> (f64, f64) {
    let t = grid::tap_to_target(&Tap::unit(doppler, delay), &cfg.inner);
    (t.range_m, t.velocity_m_s)
}

#[pyfunction]
fn gen_qpsk_frame(cfg: &PySystemConfig, seed: u64) -> Grid {
    to_rows(&modem::gen_qpsk_frame(&cfg.inner, seed).grid)
}

#[pyfunction]
fn isfft(cfg: &PySystemConfig, frame: Grid) -> PyResult<Grid> {
    let x = DdFrame::new(from_rows(frame)?);
    Ok(to_rows(&modem::isfft(&x, &cfg.inner).map_err(err)?.grid))
}

#[pyfunction]
fn sfft(cfg: &PySystemConfig, frame: Grid) -> PyResult<Grid> {
    let tf = modem::TfFrame::new(from_rows(frame)?);
    Ok(to_rows(&modem::sfft(&tf, &cfg.inner).map_err(err)?.grid))
}

/// Delay-Doppler channel output; noise is added when `noise_seed` is given.
#[pyfunction]
#[pyo3(signature = (cfg, frame, taps, noise_seed = None))]
fn apply_channel(
    cfg: &PySystemConfig,
    frame: Grid,
    taps: Vec<TapTuple>,
    noise_seed: Option<u64>,
) -> PyResult<Grid> {
    let x = DdFrame::new(from_rows(frame)?);
    let y = modem::apply_channel_dd(&x, &channel(taps)?, &cfg.inner, noise_seed).map_err(err)?;
    Ok(to_rows(&y.grid))
}

/// Same result as `apply_channel` without noise, computed on the waveform.
#[pyfunction]
fn apply_channel_waveform(
    cfg: &PySystemConfig,
    frame: Grid,
    taps: Vec<TapTuple>,
) -> PyResult<Grid> {
    let x = DdFrame::new(from_rows(frame)?);
    let y = modem::otfs_time_domain_link(&x, &channel(taps)?, &cfg.inner, None).map_err(err)?;
    Ok(to_rows(&y.grid))
}

/// Normalized matched-filter output `X̃ᴴy / (MN P_s)`.
#[pyfunction]
fn matched_filter(cfg: &PySystemConfig, received: Grid, transmitted: Grid) -> PyResult<Grid> {
    let y = DdFrame::new(from_rows(received)?);
    let x = DdFrame::new(from_rows(transmitted)?);
    Ok(to_rows(
        &matched_filter_fast(&y, &x, &cfg.inner).map_err(err)?.grid,
    ))
}

fn estimate_dict<'py>(py: Python<'py>, est: &DdEstimate) -> PyResult<Bound<'py, PyDict>> {
    let (range, velocity) = est.estimate_target();
    let d = PyDict::new(py);
    d.set_item("grid", to_rows(&est.grid))?;
    d.set_item("peak", est.argmax())?;
    d.set_item("range_m", range)?;
    d.set_item("velocity_m_s", velocity)?;
    d.set_item("noise_floor", est.noise_floor)?;
    let detections: Vec<(usize, usize, f64, f64, f64)> = est
        .peaks
        .iter()
        .map(|p| (p.doppler, p.delay, p.range_m, p.velocity_m_s, p.magnitude))
        .collect();
    d.set_item("detections", detections)?;
    Ok(d)
}

/// One OTFS radar frame with seed `seed`: returns the estimate grid, its
/// peak `(k, l)`, the estimated range and velocity, and the detections.
#[pyfunction]
#[pyo3(signature = (cfg, taps, seed, noisy = true))]
fn simulate_otfs<'py>(
    py: Python<'py>,
    cfg: &PySystemConfig,
    taps: Vec<TapTuple>,
    seed: u64,
    noisy: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let est = otfs_estimate(&cfg.inner, &channel(taps)?, seed, noisy).map_err(err)?;
    estimate_dict(py, &est)
}

/// `(range_m, velocity_m_s)` of the OFDM periodogram peak for one frame.
#[pyfunction]
#[pyo3(signature = (cfg, taps, seed, noisy = true))]
fn simulate_ofdm(
    cfg: &PySystemConfig,
    taps: Vec<TapTuple>,
    seed: u64,
    noisy: bool,
) -> PyResult<(f64, f64)> {
    let ofdm = OfdmConfig::matched(&cfg.inner);
    let map = ofdm_map(&cfg.inner, &ofdm, &channel(taps)?, seed, noisy).map_err(err)?;
    estimate_target_ofdm(&map).map_err(err)
}

#[pyfunction]
fn pslr(magnitudes: Vec<f64>) -> PyResult<f64> {
    metrics::pslr(&magnitudes).map_err(err)
}

/// Image SNR in dB of an estimate grid at bin `(k, l)`.
#[pyfunction]
fn image_snr(grid: Grid, k: usize, l: usize) -> PyResult<f64> {
    let g = from_rows(grid)?;
    if k >= g.nrows() || l >= g.ncols() {
        return Err(PyValueError::new_err("bin outside the grid"));
    }
    let power: Vec<f64> = g.iter().map(|v| v.norm_sqr()).collect();
    Ok(metrics::image_snr_from_power(&power, k * g.ncols() + l))
}

/// Velocity RMSE per signed Doppler tap: list of `(tap, velocity_m_s, rmse_m_s)`.
#[pyfunction]
#[pyo3(signature = (system, cfg, velocity_taps, trials, delay, base_seed = 0))]
fn velocity_rmse_sweep(
    system: &str,
    cfg: &PySystemConfig,
    velocity_taps: Vec<i64>,
    trials: usize,
    delay: usize,
    base_seed: u64,
) -> PyResult<Vec<(i64, f64, f64)>> {
    let system = match system {
        "otfs" => RadarSystem::Otfs,
        "ofdm" => RadarSystem::Ofdm,
        other => return Err(PyValueError::new_err(format!("unknown system {other:?}"))),
    };
    let ofdm = OfdmConfig::matched(&cfg.inner);
    let pts = rmse_sweep(
        system,
        &velocity_taps,
        trials,
        &cfg.inner,
        &ofdm,
        delay,
        base_seed,
    )
    .map_err(err)?;
    Ok(pts
        .iter()
        .map(|p| (p.tap, p.velocity_m_s, p.rmse_m_s))
        .collect())
}

/// `(mean, variance)` of the gain-matrix entry `G[i, j]` over `trials` frames.
#[pyfunction]
#[pyo3(signature = (cfg, trials, i, j, seed = 0))]
fn gain_entry_stats(
    cfg: &PySystemConfig,
    trials: usize,
    i: usize,
    j: usize,
    seed: u64,
) -> PyResult<(Complex64, f64)> {
    let s = lemma1_stats(&cfg.inner, trials, (i, j), seed).map_err(err)?;
    Ok((s.mean, s.variance))
}

/// Runs an experiment spec (TOML text), writes its files into
/// `output_dir` and returns the result record as JSON text.
#[pyfunction]
fn run_experiment(spec_toml: &str, output_dir: &str) -> PyResult<String> {
    let exp = Experiment::from_toml_str(spec_toml, "<python>")
        .and_then(|e| e.with_overrides(None, None, Some(output_dir.into())))
        .map_err(err)?;
    let record = match exp.spec.sweep.axis {
        SweepAxis::None => run_scenario(&exp),
        _ => run_sweep(&exp),
    }
    .map_err(err)?;
    serde_json::to_string(&record).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn otfs_radar(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystemConfig>()?;
    m.add_function(wrap_pyfunction!(scene_to_taps, m)?)?;
    m.add_function(wrap_pyfunction!(tap_to_target, m)?)?;
    m.add_function(wrap_pyfunction!(gen_qpsk_frame, m)?)?;
    m.add_function(wrap_pyfunction!(isfft, m)?)?;
    m.add_function(wrap_pyfunction!(sfft, m)?)?;
    m.add_function(wrap_pyfunction!(apply_channel, m)?)?;
    m.add_function(wrap_pyfunction!(apply_channel_waveform, m)?)?;
    m.add_function(wrap_pyfunction!(matched_filter, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_otfs, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_ofdm, m)?)?;
    m.add_function(wrap_pyfunction!(pslr, m)?)?;
    m.add_function(wrap_pyfunction!(image_snr, m)?)?;
    m.add_function(wrap_pyfunction!(velocity_rmse_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(gain_entry_stats, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
