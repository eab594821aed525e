//! Experiment specifications, Monte-Carlo campaigns and result files.
//!
//! An [`ExperimentSpec`] is read from a TOML file; keys that are absent keep
//! the values of the `single-target` preset. Trial `t` of every campaign runs with
//! seed `base_seed + t`, and both radars see the same seeds.
//!
//! # Output files
//!
//! `simulate` and `compare` write into the output directory:
//!
//! | file | content |
//! |---|---|
//! | `record.json` | [`ResultRecord`] |
//! | `trials.csv` | one [`TrialRow`] per system and trial |
//! | `summary.csv` | one [`Aggregate`] per system and metric |
//! | `<system>_range_profile.csv` | `range_m,magnitude_db` cut of trial 0 through its peak |
//! | `<system>_doppler_profile.csv` | `velocity_m_s,magnitude_db` cut of trial 0 through its peak |
//! | `range_profile.svg`, `doppler_profile.svg` | plots of the cuts |
//! | `detections.json` | OTFS detections of trial 0, records `{k, l, range_m, velocity_m_s, magnitude}` |
//! | `otfs_dd_grid.csv`, `ofdm_range_doppler.csv` | full images of trial 0, only with `write_grids = true` |
//!
//! `sweep` writes `record.json`, `sweep.csv` (one [`SweepRow`] per point,
//! system and metric) and `sweep.svg`.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use num_complex::Complex64;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimator::{gain_entry, lemma1_stats, Detection};
use crate::grid::{
    scene_to_taps, signed_doppler, tap_to_target, wrap_doppler, ConfigOverrides,
    QuantizationResidual, QuantizeMode, SystemConfig, Tap, TapChannel, Target,
};
use crate::metrics::{
    frame_duration_report, profile_cuts, rmse, serde_float, FrameDurationReport, ProfileCut,
    RadarImage, TrialMetrics,
};
use crate::modem::gen_qpsk_frame;
use crate::ofdm::{DopplerAxis, OfdmConfig, Window};
use crate::plot::{line_chart, Series};
use crate::trial::{ofdm_map, otfs_estimate, run_trial, RadarSystem};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemChoice {
    Otfs,
    Ofdm,
    #[default]
    Both,
}

impl SystemChoice {
    pub fn systems(self) -> Vec<RadarSystem> {
        match self {
            SystemChoice::Otfs => vec![RadarSystem::Otfs],
            SystemChoice::Ofdm => vec![RadarSystem::Ofdm],
            SystemChoice::Both => vec![RadarSystem::Otfs, RadarSystem::Ofdm],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub range_m: f64,
    pub velocity_m_s: f64,
    /// `[re, im]`
    #[serde(default = "unit_gain")]
    pub gain: [f64; 2],
}

/// A raw channel tap; `doppler` is signed and wraps modulo N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TapSpec {
    pub doppler: i64,
    pub delay: usize,
    #[serde(default = "unit_gain")]
    pub gain: [f64; 2],
}

fn unit_gain() -> [f64; 2] {
    [1.0, 0.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfdmOptions {
    pub window: Window,
    pub zero_pad: usize,
    pub doppler_axis: DopplerAxis,
}

impl Default for OfdmOptions {
    fn default() -> Self {
        OfdmOptions {
            window: Window::Rectangular,
            zero_pad: 1,
            doppler_axis: DopplerAxis::Nominal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    #[default]
    None,
    Velocity,
    Snr,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    /// Signed Doppler taps. On the SNR axis each SNR point is evaluated at
    /// every tap; an empty list means the scene's own target.
    pub velocity_taps: Vec<i64>,
    pub snr_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub system: SystemChoice,
    pub trials: usize,
    pub base_seed: u64,
    pub output_dir: Option<PathBuf>,
    pub quantize: QuantizeMode,
    pub noise: bool,
    pub write_grids: bool,
    pub system_config: ConfigOverrides,
    pub ofdm: OfdmOptions,
    /// The first target (or tap) is the ground truth for the metrics.
    pub targets: Vec<TargetSpec>,
    pub taps: Vec<TapSpec>,
    pub sweep: SweepSpec,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec::single_target()
    }
}

pub const PRESETS: [&str; 3] = ["single-target", "velocity-sweep", "snr-sweep"];

impl ExperimentSpec {
    /// 24 GHz, 10 MHz, 256 x 64 grid with a 128-sample prefix, one target at 975 m moving at
    /// 80 m/s (rounded to the nearest Doppler bin), 10 dB SNR.
    pub fn single_target() -> Self {
        ExperimentSpec {
            name: "single-target".into(),
            system: SystemChoice::Both,
            trials: 100,
            base_seed: 1,
            output_dir: None,
            quantize: QuantizeMode::Nearest,
            noise: true,
            write_grids: false,
            system_config: ConfigOverrides {
                cp_length_samples: Some(128),
                snr_db: Some(10.0),
                ..ConfigOverrides::default()
            },
            ofdm: OfdmOptions::default(),
            targets: vec![TargetSpec {
                range_m: 975.0,
                velocity_m_s: 80.0,
                gain: unit_gain(),
            }],
            taps: Vec::new(),
            sweep: SweepSpec::default(),
        }
    }

    /// Velocity sweep over taps −24..=24 at 960 m with a 64-sample prefix.
    pub fn velocity_sweep() -> Self {
        ExperimentSpec {
            name: "velocity-sweep".into(),
            system_config: ConfigOverrides {
                cp_length_samples: Some(64),
                snr_db: Some(10.0),
                ..ConfigOverrides::default()
            },
            targets: vec![TargetSpec {
                range_m: 960.0,
                velocity_m_s: 0.0,
                gain: unit_gain(),
            }],
            sweep: SweepSpec {
                axis: SweepAxis::Velocity,
                velocity_taps: (-24..=24).collect(),
                snr_db: Vec::new(),
            },
            ..ExperimentSpec::single_target()
        }
    }

    /// OTFS image SNR from −20 to 30 dB at five velocities.
    pub fn snr_sweep() -> Self {
        ExperimentSpec {
            name: "snr-sweep".into(),
            system: SystemChoice::Otfs,
            trials: 20,
            sweep: SweepSpec {
                axis: SweepAxis::Snr,
                velocity_taps: vec![-24, -10, 0, 10, 21],
                snr_db: (0..=10).map(|i| -20.0 + 5.0 * i as f64).collect(),
            },
            ..ExperimentSpec::single_target()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "single-target" => Ok(Self::single_target()),
            "velocity-sweep" => Ok(Self::velocity_sweep()),
            "snr-sweep" => Ok(Self::snr_sweep()),
            other => Err(Error::InvalidConfig(format!(
                "unknown preset {other:?}; expected one of {}",
                PRESETS.join(", ")
            ))),
        }
    }

    /// Hex SHA-256 of the spec's JSON form with the output directory removed.
    pub fn hash(&self) -> String {
        let mut copy = self.clone();
        copy.output_dir = None;
        let json = serde_json::to_vec(&copy).expect("spec serializes to JSON");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("results").join(&self.name))
    }
}

/// Byte offsets of the spec's sections, used to put line numbers on
/// validation errors.
#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct SpanIndex {
    trials: Option<toml::Spanned<toml::Value>>,
    system_config: Option<toml::Spanned<toml::Value>>,
    ofdm: Option<toml::Spanned<toml::Value>>,
    targets: Vec<toml::Spanned<toml::Value>>,
    taps: Vec<toml::Spanned<toml::Value>>,
    sweep: Option<toml::Spanned<toml::Value>>,
}

struct Source<'a> {
    path: String,
    text: &'a str,
    spans: SpanIndex,
}

impl Source<'_> {
    fn line_of(&self, span: Option<std::ops::Range<usize>>) -> Option<usize> {
        span.map(|s| {
            self.text[..s.start.min(self.text.len())]
                .matches('\n')
                .count()
                + 1
        })
    }
}

fn located(
    source: Option<&Source>,
    span: impl Fn(&SpanIndex) -> Option<std::ops::Range<usize>>,
    err: Error,
) -> Error {
    match source {
        Some(src) => {
            let message = match src.line_of(span(&src.spans)) {
                Some(line) => format!("line {line}: {err}"),
                None => err.to_string(),
            };
            Error::ConfigParse {
                path: src.path.clone(),
                message,
            }
        }
        None => Error::ConfigParse {
            path: "<spec>".into(),
            message: err.to_string(),
        },
    }
}

fn complex(g: [f64; 2]) -> Complex64 {
    Complex64::new(g[0], g[1])
}

/// A validated experiment, ready to run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub spec: ExperimentSpec,
    pub cfg: SystemConfig,
    pub ofdm: OfdmConfig,
    pub channel: TapChannel,
    /// Tap of the first target, against which errors are measured.
    pub truth: Tap,
    /// Quantization residual of each target; empty for raw taps.
    pub residuals: Vec<QuantizationResidual>,
}

impl Experiment {
    pub fn from_spec(spec: ExperimentSpec) -> Result<Self> {
        Self::resolve(spec, None)
    }

    /// Parses and validates a spec file's text. Semantic errors point at
    /// the header line of the offending table. A file with `[[taps]]` and
    /// no `[[targets]]` replaces the default target. Every error is a
    /// [`Error::ConfigParse`] whose message starts with the offending line.
    pub fn from_toml_str(text: &str, path: &str) -> Result<Self> {
        let mut spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::ConfigParse {
            path: path.into(),
            message: e.to_string(),
        })?;
        let spans: SpanIndex = toml::from_str(text).unwrap_or_default();
        if !spans.taps.is_empty() && spans.targets.is_empty() {
            spec.targets.clear();
        }
        let source = Source {
            path: path.into(),
            text,
            spans,
        };
        Self::resolve(spec, Some(&source))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    fn resolve(spec: ExperimentSpec, src: Option<&Source>) -> Result<Self> {
        if spec.trials == 0 {
            return Err(located(
                src,
                |s| s.trials.as_ref().map(|v| v.span()),
                Error::InvalidConfig("trials must be at least 1".into()),
            ));
        }
        let cfg = spec
            .system_config
            .apply(&SystemConfig::automotive())
            .map_err(|e| located(src, |s| s.system_config.as_ref().map(|v| v.span()), e))?;
        let ofdm = OfdmConfig {
            window: spec.ofdm.window,
            zero_pad: spec.ofdm.zero_pad,
            doppler_axis: spec.ofdm.doppler_axis,
            ..OfdmConfig::matched(&cfg)
        };
        ofdm.validate()
            .map_err(|e| located(src, |s| s.ofdm.as_ref().map(|v| v.span()), e))?;

        let (channel, residuals) = match (spec.targets.is_empty(), spec.taps.is_empty()) {
            (false, false) | (true, true) => {
                return Err(located(
                    src,
                    |s| s.targets.first().or(s.taps.first()).map(|v| v.span()),
                    Error::InvalidConfig("give exactly one of [[targets]] or [[taps]]".into()),
                ))
            }
            (false, true) => {
                let scene: Vec<Target> = spec
                    .targets
                    .iter()
                    .map(|t| Target::new(t.range_m, t.velocity_m_s).with_gain(complex(t.gain)))
                    .collect();
                let q = scene_to_taps(&scene, &cfg, spec.quantize).map_err(|e| {
                    let index = match &e {
                        Error::NonIntegerTap { index, .. }
                        | Error::OutOfAmbiguityRange { index, .. } => *index,
                        _ => 0,
                    };
                    located(src, |s| s.targets.get(index).map(|v| v.span()), e)
                })?;
                (q.channel, q.residuals)
            }
            (true, false) => {
                let mut taps = Vec::with_capacity(spec.taps.len());
                for (i, t) in spec.taps.iter().enumerate() {
                    let tap = Tap::new(
                        wrap_doppler(t.doppler, cfg.num_doppler_bins),
                        t.delay,
                        complex(t.gain),
                    );
                    let check = TapChannel::single(tap).check_grid(&cfg).and_then(|_| {
                        taps.push(tap);
                        TapChannel::new(taps.clone()).map(|_| ())
                    });
                    check.map_err(|e| located(src, |s| s.taps.get(i).map(|v| v.span()), e))?;
                }
                (TapChannel::new(taps)?, Vec::new())
            }
        };
        let truth = match (spec.targets.first(), spec.taps.first()) {
            (Some(_), _) => {
                let first = scene_to_taps(
                    &[Target::new(
                        spec.targets[0].range_m,
                        spec.targets[0].velocity_m_s,
                    )],
                    &cfg,
                    spec.quantize,
                )?
                .channel
                .taps()[0];
                *channel
                    .taps()
                    .iter()
                    .find(|t| t.doppler == first.doppler && t.delay == first.delay)
                    .expect("first target is in the channel")
            }
            (None, _) => channel.taps()[0],
        };
        if channel.max_delay().unwrap_or(0) > cfg.cp_length_samples
            && spec.system != SystemChoice::Otfs
        {
            let delay = channel.max_delay().unwrap_or(0);
            return Err(located(
                src,
                |s| s.system_config.as_ref().map(|v| v.span()),
                Error::DelayExceedsCp {
                    delay,
                    cp: cfg.cp_length_samples,
                },
            ));
        }

        let sweep_span = |s: &SpanIndex| s.sweep.as_ref().map(|v| v.span());
        match spec.sweep.axis {
            SweepAxis::None => {}
            SweepAxis::Velocity => {
                if spec.sweep.velocity_taps.is_empty() {
                    return Err(located(src, sweep_span, Error::EmptySweep));
                }
                let n = cfg.num_doppler_bins as i64;
                if let Some(tap) = spec
                    .sweep
                    .velocity_taps
                    .iter()
                    .find(|&&t| 2 * t > n || 2 * t <= -n)
                {
                    return Err(located(
                        src,
                        sweep_span,
                        Error::InvalidConfig(format!(
                            "velocity tap {tap} is outside the unambiguous Doppler range of N = {n}"
                        )),
                    ));
                }
            }
            SweepAxis::Snr => {
                if spec.sweep.snr_db.is_empty() {
                    return Err(located(src, sweep_span, Error::EmptySweep));
                }
                if let Some(bad) = spec.sweep.snr_db.iter().find(|v| !v.is_finite()) {
                    return Err(located(
                        src,
                        sweep_span,
                        Error::InvalidConfig(format!("SNR {bad} dB is not finite")),
                    ));
                }
            }
        }
        Ok(Experiment {
            spec,
            cfg,
            ofdm,
            channel,
            truth,
            residuals,
        })
    }

    /// Re-resolves after changing the seed, trial count or output directory.
    pub fn with_overrides(
        mut self,
        base_seed: Option<u64>,
        trials: Option<usize>,
        output_dir: Option<PathBuf>,
    ) -> Result<Self> {
        if let Some(s) = base_seed {
            self.spec.base_seed = s;
        }
        if let Some(t) = trials {
            if t == 0 {
                return Err(Error::ConfigParse {
                    path: "--trials".into(),
                    message: "trials must be at least 1".into(),
                });
            }
            self.spec.trials = t;
        }
        if let Some(o) = output_dir {
            self.spec.output_dir = Some(o);
        }
        Ok(self)
    }

    fn seeds(&self) -> std::ops::Range<u64> {
        self.spec.base_seed..self.spec.base_seed + self.spec.trials as u64
    }
}

/// Metrics of one trial, flattened for CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub system: RadarSystem,
    pub trial: usize,
    pub seed: u64,
    pub range_error_m: f64,
    pub velocity_error_m_s: f64,
    #[serde(with = "serde_float")]
    pub pslr_db: f64,
    #[serde(with = "serde_float")]
    pub image_snr_db: f64,
}

impl TrialRow {
    fn new(system: RadarSystem, trial: usize, m: &TrialMetrics) -> Self {
        TrialRow {
            system,
            trial,
            seed: m.seed,
            range_error_m: m.range_error_m,
            velocity_error_m_s: m.velocity_error_m_s,
            pslr_db: m.pslr_db,
            image_snr_db: m.image_snr_db,
        }
    }
}

/// A statistic over all trials of one system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub system: RadarSystem,
    pub metric: String,
    #[serde(with = "serde_float")]
    pub value: f64,
    pub trials: usize,
    pub first_seed: u64,
    pub last_seed: u64,
}

/// A statistic at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    /// Signed velocity tap on the velocity axis, SNR in dB on the SNR axis.
    pub parameter: f64,
    pub velocity_m_s: f64,
    pub system: RadarSystem,
    pub metric: String,
    #[serde(with = "serde_float")]
    pub value: f64,
    pub trials: usize,
    pub first_seed: u64,
    pub last_seed: u64,
}

/// Everything a run produced, as written to `record.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub spec_hash: String,
    pub tool_version: String,
    pub timestamp_unix_s: u64,
    pub spec: ExperimentSpec,
    pub config: SystemConfig,
    pub channel: TapChannel,
    pub truth: Tap,
    pub quantization: Vec<QuantizationResidual>,
    pub frame_duration: FrameDurationReport,
    pub trials: Vec<TrialRow>,
    pub aggregates: Vec<Aggregate>,
    pub sweep: Vec<SweepRow>,
    /// Names of the files written next to the record.
    pub files: Vec<String>,
}

impl ResultRecord {
    fn new(exp: &Experiment) -> Self {
        ResultRecord {
            spec_hash: exp.spec.hash(),
            tool_version: TOOL_VERSION.into(),
            timestamp_unix_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            spec: exp.spec.clone(),
            config: exp.cfg,
            channel: exp.channel.clone(),
            truth: exp.truth,
            quantization: exp.residuals.clone(),
            frame_duration: frame_duration_report(&exp.cfg),
            trials: Vec::new(),
            aggregates: Vec::new(),
            sweep: Vec::new(),
            files: Vec::new(),
        }
    }

    pub fn aggregate(&self, system: RadarSystem, metric: &str) -> Option<f64> {
        self.aggregates
            .iter()
            .find(|a| a.system == system && a.metric == metric)
            .map(|a| a.value)
    }
}

pub const METRIC_RMSE_RANGE: &str = "rmse_range_m";
pub const METRIC_RMSE_VELOCITY: &str = "rmse_velocity_m_s";
pub const METRIC_MEAN_PSLR: &str = "mean_pslr_db";
pub const METRIC_MEAN_IMAGE_SNR: &str = "mean_image_snr_db";
pub const METRIC_EXACT_HITS: &str = "exact_hits";

fn summarize(metrics: &[TrialMetrics]) -> Vec<(&'static str, f64)> {
    let n = metrics.len() as f64;
    let mean = |f: fn(&TrialMetrics) -> f64| metrics.iter().map(f).sum::<f64>() / n;
    vec![
        (
            METRIC_RMSE_RANGE,
            rmse(metrics.iter().map(|m| m.range_error_m)),
        ),
        (
            METRIC_RMSE_VELOCITY,
            rmse(metrics.iter().map(|m| m.velocity_error_m_s)),
        ),
        (METRIC_MEAN_PSLR, mean(|m| m.pslr_db)),
        (METRIC_MEAN_IMAGE_SNR, mean(|m| m.image_snr_db)),
        (
            METRIC_EXACT_HITS,
            metrics
                .iter()
                .filter(|m| m.range_error_m.abs() < 1e-9 && m.velocity_error_m_s.abs() < 1e-9)
                .count() as f64,
        ),
    ]
}

fn run_trials(
    system: RadarSystem,
    cfg: &SystemConfig,
    ofdm: &OfdmConfig,
    channel: &TapChannel,
    truth: &Tap,
    seeds: std::ops::Range<u64>,
    noisy: bool,
) -> Result<Vec<TrialMetrics>> {
    seeds
        .into_par_iter()
        .map(|seed| run_trial(system, cfg, ofdm, channel, truth, seed, noisy))
        .collect()
}

fn write_csv_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_profile(path: &Path, header: &str, cut: &ProfileCut) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([header, "magnitude_db"])?;
    for (x, y) in cut.axis.iter().zip(&cut.magnitude_db) {
        w.write_record([x.to_string(), y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&dir)?;
        Ok(Outputs {
            dir,
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn finish(mut self, mut record: ResultRecord) -> Result<ResultRecord> {
        let path = self.path("record.json");
        record.files = self.files;
        let mut text = serde_json::to_string_pretty(&record)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(record)
    }
}

/// Runs every trial of the scene and writes the scenario files.
pub fn run_scenario(exp: &Experiment) -> Result<ResultRecord> {
    let mut record = ResultRecord::new(exp);
    let mut out = Outputs::new(exp.spec.output_dir())?;
    let seeds = exp.seeds();
    let (first, last) = (seeds.start, seeds.end - 1);
    let mut range_series = Vec::new();
    let mut doppler_series = Vec::new();

    for system in exp.spec.system.systems() {
        let metrics = run_trials(
            system,
            &exp.cfg,
            &exp.ofdm,
            &exp.channel,
            &exp.truth,
            seeds.clone(),
            exp.spec.noise,
        )?;
        record.trials.extend(
            metrics
                .iter()
                .enumerate()
                .map(|(t, m)| TrialRow::new(system, t, m)),
        );
        record
            .aggregates
            .extend(
                summarize(&metrics)
                    .into_iter()
                    .map(|(metric, value)| Aggregate {
                        system,
                        metric: metric.into(),
                        value,
                        trials: metrics.len(),
                        first_seed: first,
                        last_seed: last,
                    }),
            );

        let (range_cut, doppler_cut) = match system {
            RadarSystem::Otfs => {
                let est = otfs_estimate(&exp.cfg, &exp.channel, first, exp.spec.noise)?;
                let detections: Vec<Detection> = est.peaks.clone();
                std::fs::write(
                    out.path("detections.json"),
                    serde_json::to_string_pretty(&detections)? + "\n",
                )?;
                if exp.spec.write_grids {
                    est.write_csv(&out.path("otfs_dd_grid.csv"))?;
                }
                profile_cuts(&est, est.peak())
            }
            RadarSystem::Ofdm => {
                let map = ofdm_map(&exp.cfg, &exp.ofdm, &exp.channel, first, exp.spec.noise)?;
                if exp.spec.write_grids {
                    map.write_csv(&out.path("ofdm_range_doppler.csv"))?;
                }
                profile_cuts(&map, map.peak())
            }
        };
        write_profile(
            &out.path(&format!("{system}_range_profile.csv")),
            "range_m",
            &range_cut,
        )?;
        write_profile(
            &out.path(&format!("{system}_doppler_profile.csv")),
            "velocity_m_s",
            &doppler_cut,
        )?;
        range_series.push(Series {
            label: system.to_string().to_uppercase(),
            points: range_cut
                .axis
                .iter()
                .copied()
                .zip(range_cut.magnitude_db.iter().copied())
                .collect(),
        });
        doppler_series.push(Series {
            label: system.to_string().to_uppercase(),
            points: doppler_cut
                .axis
                .iter()
                .copied()
                .zip(doppler_cut.magnitude_db.iter().copied())
                .collect(),
        });
    }

    write_csv_rows(&out.path("trials.csv"), &record.trials)?;
    write_csv_rows(&out.path("summary.csv"), &record.aggregates)?;
    std::fs::write(
        out.path("range_profile.svg"),
        line_chart(
            "Range profile",
            "range (m)",
            "magnitude (dB)",
            &range_series,
            Some(-60.0),
        ),
    )?;
    std::fs::write(
        out.path("doppler_profile.svg"),
        line_chart(
            "Doppler profile",
            "velocity (m/s)",
            "magnitude (dB)",
            &doppler_series,
            Some(-60.0),
        ),
    )?;
    out.finish(record)
}

/// Runs the spec's velocity or SNR sweep and writes the sweep files.
pub fn run_sweep(exp: &Experiment) -> Result<ResultRecord> {
    let sweep = &exp.spec.sweep;
    let seeds = exp.seeds();
    let (first, last) = (seeds.start, seeds.end - 1);
    let n = exp.cfg.num_doppler_bins;

    let points: Vec<(f64, SystemConfig, i64)> = match sweep.axis {
        SweepAxis::None => {
            return Err(Error::InvalidConfig(
                "the spec has no sweep; set sweep.axis to velocity or snr".into(),
            ))
        }
        SweepAxis::Velocity => sweep
            .velocity_taps
            .iter()
            .map(|&t| (t as f64, exp.cfg, t))
            .collect(),
        SweepAxis::Snr => {
            let taps = if sweep.velocity_taps.is_empty() {
                vec![signed_doppler(exp.truth.doppler, n)]
            } else {
                sweep.velocity_taps.clone()
            };
            sweep
                .snr_db
                .iter()
                .flat_map(|&snr| {
                    let cfg = exp.cfg.with_snr_db(snr);
                    taps.iter().map(move |&t| (snr, cfg, t))
                })
                .collect()
        }
    };

    let mut record = ResultRecord::new(exp);
    for system in exp.spec.system.systems() {
        for &(parameter, cfg, tap) in &points {
            let ofdm = OfdmConfig {
                noise_variance: cfg.noise_variance,
                ..exp.ofdm
            };
            let truth = Tap::new(wrap_doppler(tap, n), exp.truth.delay, exp.truth.gain);
            let channel = TapChannel::single(truth);
            let metrics = run_trials(
                system,
                &cfg,
                &ofdm,
                &channel,
                &truth,
                seeds.clone(),
                exp.spec.noise,
            )?;
            let velocity_m_s = tap_to_target(&truth, &cfg).velocity_m_s;
            record.sweep.extend(
                summarize(&metrics)
                    .into_iter()
                    .map(|(metric, value)| SweepRow {
                        axis: sweep.axis,
                        parameter,
                        velocity_m_s,
                        system,
                        metric: metric.into(),
                        value,
                        trials: metrics.len(),
                        first_seed: first,
                        last_seed: last,
                    }),
            );
        }
    }

    let mut out = Outputs::new(exp.spec.output_dir())?;
    write_csv_rows(&out.path("sweep.csv"), &record.sweep)?;
    std::fs::write(out.path("sweep.svg"), sweep_chart(exp, &record.sweep))?;
    out.finish(record)
}

fn sweep_chart(exp: &Experiment, rows: &[SweepRow]) -> String {
    let pick = |system: RadarSystem, metric: &str, velocity: Option<f64>| -> Vec<(f64, f64)> {
        rows.iter()
            .filter(|r| r.system == system && r.metric == metric)
            .filter(|r| velocity.is_none_or(|v| r.velocity_m_s == v))
            .map(|r| match r.axis {
                SweepAxis::Velocity => (r.velocity_m_s, r.value),
                _ => (r.parameter, r.value),
            })
            .collect()
    };
    match exp.spec.sweep.axis {
        SweepAxis::Snr => {
            let velocity = rows.first().map(|r| r.velocity_m_s);
            let mut series: Vec<Series> = exp
                .spec
                .system
                .systems()
                .into_iter()
                .map(|s| Series {
                    label: format!("{} image SNR", s.to_string().to_uppercase()),
                    points: pick(s, METRIC_MEAN_IMAGE_SNR, velocity),
                })
                .collect();
            let mn = exp.cfg.grid_size() as f64;
            let snrs = &exp.spec.sweep.snr_db;
            series.push(Series {
                label: "MN·SNR".into(),
                points: snrs.iter().map(|&s| (s, 10.0 * mn.log10() + s)).collect(),
            });
            series.push(Series {
                label: "MN".into(),
                points: snrs.iter().map(|&s| (s, 10.0 * mn.log10())).collect(),
            });
            line_chart("Image SNR", "SNR (dB)", "image SNR (dB)", &series, None)
        }
        _ => {
            let series: Vec<Series> = exp
                .spec
                .system
                .systems()
                .into_iter()
                .map(|s| Series {
                    label: s.to_string().to_uppercase(),
                    points: pick(s, METRIC_RMSE_VELOCITY, None),
                })
                .collect();
            line_chart(
                "Velocity RMSE",
                "velocity (m/s)",
                "RMSE (m/s)",
                &series,
                None,
            )
        }
    }
}

/// Runs both radars on the scene and returns the record with a
/// side-by-side table.
pub fn compare(exp: &Experiment) -> Result<(ResultRecord, String)> {
    let mut both = exp.clone();
    both.spec.system = SystemChoice::Both;
    if both.channel.max_delay().unwrap_or(0) > both.cfg.cp_length_samples {
        return Err(Error::DelayExceedsCp {
            delay: both.channel.max_delay().unwrap_or(0),
            cp: both.cfg.cp_length_samples,
        });
    }
    let record = run_scenario(&both)?;
    let mut table = format!("{:<20} {:>14} {:>14}\n", "metric", "otfs", "ofdm");
    for metric in [
        METRIC_RMSE_RANGE,
        METRIC_RMSE_VELOCITY,
        METRIC_MEAN_PSLR,
        METRIC_MEAN_IMAGE_SNR,
        METRIC_EXACT_HITS,
    ] {
        let get = |s| record.aggregate(s, metric).unwrap_or(f64::NAN);
        table.push_str(&format!(
            "{:<20} {:>14.4} {:>14.4}\n",
            metric,
            get(RadarSystem::Otfs),
            get(RadarSystem::Ofdm)
        ));
    }
    let fd = record.frame_duration;
    table.push_str(&format!(
        "{:<20} {:>14} {:>14}\n{:<20} {:>14}\n",
        "frame_samples", fd.otfs_samples, fd.ofdm_samples, "saved_samples", fd.saved_samples
    ));
    Ok((record, table))
}

/// One tolerance check of the lemma report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckLine {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub trials: usize,
    pub seed: u64,
    pub expected_diagonal: f64,
    pub expected_variance: f64,
    pub checks: Vec<CheckLine>,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "gain matrix statistics over {} frames (seed {}); diagonal MN·P_s = {}, off-diagonal variance MN·P_s² = {}\n",
            self.trials, self.seed, self.expected_diagonal, self.expected_variance
        );
        for c in &self.checks {
            s.push_str(&format!(
                "{} {:<40} value {:.6e}  bound {:.6e}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.bound
            ));
        }
        s
    }
}

pub const LEMMA_DIAGONAL_FRAMES: u64 = 20;
pub const LEMMA_PAIRS: usize = 10;
pub const LEMMA_SIGMAS: f64 = 5.0;
pub const LEMMA_VARIANCE_TOLERANCE: f64 = 0.05;

/// Checks that every diagonal entry of the gain matrix equals `MN P_s` on
/// a few frames, and that randomly chosen off-diagonal entries have a mean
/// within five standard errors of zero and a variance within 5% of
/// `MN P_s²` over `trials` frames.
pub fn lemma_check(cfg: &SystemConfig, trials: usize, seed: u64) -> Result<LemmaReport> {
    let size = cfg.grid_size();
    if size < 2 {
        return Err(Error::DegenerateGrid);
    }
    let mn = size as f64;
    let diag = mn * cfg.symbol_power;
    let var = mn * cfg.symbol_power * cfg.symbol_power;
    let mut checks = Vec::new();

    let worst = (0..LEMMA_DIAGONAL_FRAMES)
        .map(|f| {
            let x = gen_qpsk_frame(cfg, seed.wrapping_add(f));
            (0..size)
                .map(|i| (gain_entry(&x, i, i) - diag).norm())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    let diag_bound = 1e-9 * diag;
    checks.push(CheckLine {
        name: format!("diagonal error over {LEMMA_DIAGONAL_FRAMES} frames"),
        value: worst,
        bound: diag_bound,
        passed: worst <= diag_bound,
    });

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(LEMMA_PAIRS);
    while pairs.len() < LEMMA_PAIRS.min(size * (size - 1)) {
        let v = sample(&mut rng, size, 2);
        let pair = (v.index(0), v.index(1));
        if !pairs.contains(&pair) {
            pairs.push(pair);
        }
    }
    let stats = pairs
        .par_iter()
        .map(|&p| lemma1_stats(cfg, trials, p, seed))
        .collect::<Result<Vec<_>>>()?;
    let mean_bound = LEMMA_SIGMAS * (var / trials as f64).sqrt();
    for s in stats {
        let m = s.mean.norm();
        checks.push(CheckLine {
            name: format!("|mean G[{}, {}]|", s.i, s.j),
            value: m,
            bound: mean_bound,
            passed: m < mean_bound,
        });
        let rel = (s.variance - var).abs() / var;
        checks.push(CheckLine {
            name: format!("relative variance error G[{}, {}]", s.i, s.j),
            value: rel,
            bound: LEMMA_VARIANCE_TOLERANCE,
            passed: rel <= LEMMA_VARIANCE_TOLERANCE,
        });
    }
    Ok(LemmaReport {
        trials,
        seed,
        expected_diagonal: diag,
        expected_variance: var,
        checks,
    })
}
