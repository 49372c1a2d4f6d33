//! Experiment configuration: one TOML file with `[section]` tables.
//!
//! Every field has a default, so an empty file (or no file) is a complete
//! configuration. Relative paths resolve against the config file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use trecim::cell::BiasConfig;
use trecim::device_models::{CalibrationTargets, CellDevices, T_REF};
use trecim::nn_engine::FidelityMode;
use trecim::perf_model::{OpCount, PerfConstants};

use crate::error::{CliError, CliResult};

/// Directory searched for `<command>.toml` when `--config` is not given.
pub const CONFIG_DIR_ENV: &str = "TRECIM_CONFIG_DIR";

const BUNDLED_DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../trecim/data");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub device: DeviceSection,
    pub bias: BiasSection,
    pub array: ArraySection,
    pub adc: AdcSection,
    pub temperature: TemperatureSection,
    pub sweep: SweepSection,
    pub variation: VariationSection,
    pub inference: InferenceSection,
    pub perf: PerfSection,
    pub calibration: CalibrationSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: ExperimentSection::default(),
            device: DeviceSection::default(),
            bias: BiasSection::default(),
            array: ArraySection::default(),
            adc: AdcSection::default(),
            temperature: TemperatureSection::default(),
            sweep: SweepSection::default(),
            variation: VariationSection::default(),
            inference: InferenceSection::default(),
            perf: PerfSection::default(),
            calibration: CalibrationSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection { name: "default".into(), seed: 1, output_dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceSection {
    /// Device parameter file (TOML, same layout `--dump-calibration` writes).
    pub calibration: Option<PathBuf>,
    pub vgs_min: f64,
    pub vgs_max: f64,
    pub vgs_points: usize,
    pub vds: f64,
}

impl Default for DeviceSection {
    fn default() -> Self {
        DeviceSection { calibration: None, vgs_min: -0.5, vgs_max: 1.2, vgs_points: 171, vds: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasSection {
    pub v_dl: f64,
    pub v_bl: f64,
    pub v_read: f64,
    pub v_wl_off: f64,
    pub v_sl: f64,
}

impl Default for BiasSection {
    fn default() -> Self {
        let b = BiasConfig::default();
        BiasSection { v_dl: b.v_dl, v_bl: b.v_bl, v_read: b.v_read, v_wl_off: b.v_wl_off, v_sl: b.v_sl }
    }
}

impl BiasSection {
    pub fn to_bias(self) -> BiasConfig {
        BiasConfig { v_dl: self.v_dl, v_bl: self.v_bl, v_read: self.v_read, v_wl_off: self.v_wl_off, v_sl: self.v_sl }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArraySection {
    pub rows: usize,
    pub cols: usize,
    pub bits_per_cell: u8,
    pub adc_sharing: usize,
}

impl Default for ArraySection {
    fn default() -> Self {
        ArraySection { rows: 8, cols: 8, bits_per_cell: 2, adc_sharing: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdcSection {
    pub bits: u8,
}

impl Default for AdcSection {
    fn default() -> Self {
        AdcSection { bits: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemperatureSection {
    pub min_c: f64,
    pub max_c: f64,
    pub points: usize,
    /// Explicit grid in °C; overrides min/max/points when present.
    pub values_c: Option<Vec<f64>>,
    /// Lower bound of the reduced-range grid used by `nmr`.
    pub warm_min_c: f64,
}

impl Default for TemperatureSection {
    fn default() -> Self {
        TemperatureSection { min_c: 0.0, max_c: 85.0, points: 18, values_c: None, warm_min_c: 20.0 }
    }
}

impl TemperatureSection {
    /// Grid in kelvin.
    pub fn grid(&self) -> Vec<f64> {
        match &self.values_c {
            Some(v) => v.iter().map(|c| c + 273.15).collect(),
            None => trecim::device_models::temperature_grid(self.min_c + 273.15, self.max_c + 273.15, self.points),
        }
    }

    pub fn warm_grid(&self) -> Vec<f64> {
        trecim::device_models::temperature_grid(self.warm_min_c + 273.15, self.max_c + 273.15, self.points.max(2))
    }

    /// Fluctuation reference: 27 °C, or the only grid point of a
    /// single-temperature run.
    pub fn reference(&self) -> f64 {
        match self.grid().as_slice() {
            [only] => *only,
            _ => T_REF,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub v_read_min: f64,
    pub v_read_max: f64,
    pub points: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { v_read_min: 0.0, v_read_max: 0.6, points: 61 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariationSection {
    pub sigma_vt: f64,
    pub sigma_mos: f64,
    pub runs: usize,
    pub active_rows: Option<usize>,
    pub digits: Vec<u32>,
    pub temperature_c: f64,
}

impl Default for VariationSection {
    fn default() -> Self {
        VariationSection {
            sigma_vt: 0.054,
            sigma_mos: 0.0,
            runs: 500,
            active_rows: None,
            digits: vec![1, 2, 3],
            temperature_c: 27.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceSection {
    /// Float network (JSON).
    pub weights: PathBuf,
    /// CSV dataset, or IDX images when `labels` is set.
    pub dataset: PathBuf,
    pub labels: Option<PathBuf>,
    pub bits_per_cell: u8,
    pub mode: FidelityMode,
    /// Relative per-digit sigma (statistical) or FeFET sigma in volts
    /// (analog), one run per entry.
    pub sigmas: Vec<f64>,
    /// Per-digit sigma table for statistical mode, scaled by each entry of
    /// `sigmas`; defaults to all ones.
    pub digit_sigma: Option<Vec<f64>>,
    pub repeats: usize,
    pub array_rows: usize,
    pub adc_bits: u8,
    pub sparsity_threshold: Option<usize>,
    pub temperature_c: f64,
    pub max_samples: Option<usize>,
}

impl Default for InferenceSection {
    fn default() -> Self {
        InferenceSection {
            weights: PathBuf::from(BUNDLED_DATA).join("digits_mlp.json"),
            dataset: PathBuf::from(BUNDLED_DATA).join("digits_test.csv"),
            labels: None,
            bits_per_cell: 2,
            mode: FidelityMode::StatisticalVariance,
            sigmas: vec![0.0, 0.05, 0.139, 0.30],
            digit_sigma: None,
            repeats: 10,
            array_rows: 128,
            adc_bits: 3,
            sparsity_threshold: None,
            temperature_c: 27.0,
            max_samples: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerfSection {
    /// Constants file (TOML); the built-in 45 nm set when absent.
    pub constants: Option<PathBuf>,
    pub rows: usize,
    pub cols: usize,
    pub bits_per_cell: u8,
    pub adc_bits: u8,
    pub adc_sharing: usize,
    pub rows_per_read: Option<usize>,
    pub op_count: OpCount,
    pub inferences: usize,
    /// Measure sparsity-schedule row groups on the dataset with this threshold.
    pub sparsity_threshold: Option<usize>,
}

impl Default for PerfSection {
    fn default() -> Self {
        let p = trecim::perf_model::PerfConfig::default();
        PerfSection {
            constants: None,
            rows: p.rows,
            cols: p.cols,
            bits_per_cell: p.bits_per_cell,
            adc_bits: p.adc_bits,
            adc_sharing: p.adc_sharing,
            rows_per_read: p.rows_per_read,
            op_count: p.op_count,
            inferences: 1,
            sparsity_threshold: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub on_off_ratio: f64,
    pub r_on_ohms: f64,
    pub v_read: f64,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        let t = CalibrationTargets::default();
        CalibrationSection { on_off_ratio: t.on_off_ratio, r_on_ohms: t.r_on_ohms, v_read: t.v_read }
    }
}

impl CalibrationSection {
    pub fn targets(self) -> CalibrationTargets {
        CalibrationTargets { on_off_ratio: self.on_off_ratio, r_on_ohms: self.r_on_ohms, v_read: self.v_read }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, source: &Path) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config {
            path: source.display().to_string(),
            message: e.to_string().trim_end().to_string(),
        })
    }

    /// Loads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_toml(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.experiment.output_dir);
        if let Some(p) = self.device.calibration.as_mut() {
            resolve(base, p);
        }
        resolve(base, &mut self.inference.weights);
        resolve(base, &mut self.inference.dataset);
        if let Some(p) = self.inference.labels.as_mut() {
            resolve(base, p);
        }
        if let Some(p) = self.perf.constants.as_mut() {
            resolve(base, p);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the resolved configuration text, output directory
    /// excluded so relocating results keeps the hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.experiment.output_dir = PathBuf::new();
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }

    /// Checks that are independent of the command being run.
    pub fn validate(&self) -> CliResult<()> {
        let t = &self.temperature;
        if let Some(v) = &t.values_c {
            if v.is_empty() {
                return Err(CliError::usage("temperature.values_c", "temperature grid is empty"));
            }
            if v.iter().any(|c| !c.is_finite() || *c <= -273.15) {
                return Err(CliError::usage("temperature.values_c", "temperatures must be above absolute zero"));
            }
        } else {
            if t.points == 0 {
                return Err(CliError::usage("temperature.points", "temperature grid is empty"));
            }
            if !(t.max_c >= t.min_c) || t.min_c <= -273.15 {
                return Err(CliError::usage("temperature.max_c", "need max_c >= min_c > -273.15"));
            }
        }
        if !(t.warm_min_c <= t.max_c) {
            return Err(CliError::usage("temperature.warm_min_c", "must not exceed max_c"));
        }
        let a = &self.array;
        if !(8..=256).contains(&a.rows) {
            return Err(CliError::usage("array.rows", "must lie in 8..=256"));
        }
        if a.cols == 0 {
            return Err(CliError::usage("array.cols", "must be at least 1"));
        }
        if a.adc_sharing == 0 {
            return Err(CliError::usage("array.adc_sharing", "must be at least 1"));
        }
        if !(a.bits_per_cell == 1 || a.bits_per_cell == 2) {
            return Err(CliError::usage("array.bits_per_cell", "must be 1 or 2"));
        }
        if !(1..=10).contains(&self.adc.bits) {
            return Err(CliError::usage("adc.bits", "must lie in 1..=10"));
        }
        let s = &self.sweep;
        if s.points == 0 || !(s.v_read_max >= s.v_read_min) {
            return Err(CliError::usage("sweep.points", "need points >= 1 and v_read_max >= v_read_min"));
        }
        if self.device.vgs_points == 0 || !(self.device.vgs_max >= self.device.vgs_min) {
            return Err(CliError::usage("device.vgs_points", "need points >= 1 and vgs_max >= vgs_min"));
        }
        if let Some(p) = &self.device.calibration {
            if !p.is_file() {
                return Err(CliError::usage("device.calibration", format!("file {} does not exist", p.display())));
            }
        }
        if let Some(p) = &self.perf.constants {
            if !p.is_file() {
                return Err(CliError::usage("perf.constants", format!("file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// Device set from the calibration file, or the built-in calibrated set.
    pub fn devices(&self) -> CliResult<CellDevices> {
        let devs = match &self.device.calibration {
            None => CellDevices::calibrated(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Config { path: p.display().to_string(), message: e.to_string().trim_end().into() })?
            }
        };
        devs.validate().map_err(|e| CliError::usage("device.calibration", e.to_string()))?;
        Ok(devs)
    }

    pub fn perf_constants(&self) -> CliResult<PerfConstants> {
        let c = match &self.perf.constants {
            None => PerfConstants::paper_45nm(),
            Some(p) => load_constants(p)?,
        };
        c.validate().map_err(|e| CliError::usage("perf.constants", e.to_string()))?;
        Ok(c)
    }
}

pub fn load_constants(path: &Path) -> CliResult<PerfConstants> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text)
        .map_err(|e| CliError::Config { path: path.display().to_string(), message: e.to_string().trim_end().into() })
}

pub fn devices_to_toml(devs: &CellDevices) -> String {
    toml::to_string_pretty(devs).expect("device set serializes")
}
