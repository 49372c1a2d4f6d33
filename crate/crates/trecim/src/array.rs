//! Columns of cells on a shared SL: MAC accumulation, temperature envelopes,
//! noise-margin metrics, Monte Carlo variation and the 1FeFET-1R baseline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adc::{design_references, flash_convert, AdcConfig};
use crate::cell::{cell_output_current, encode_state, BiasConfig, CellState, Variation};
use crate::device_models::{drain_current, CellDevices, DeviceParams, VthTable, T_REF};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub rows: usize,
    pub cols: usize,
    pub bits_per_cell: u8,
    pub bias: BiasConfig,
    /// Columns multiplexed onto one ADC.
    pub adc_sharing: usize,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        ArrayConfig { rows: 8, cols: 8, bits_per_cell: 2, bias: BiasConfig::default(), adc_sharing: 8 }
    }
}

impl ArrayConfig {
    pub fn validate(&self) -> Result<()> {
        if !(8..=256).contains(&self.rows) || self.cols == 0 || self.adc_sharing == 0 {
            return Err(Error::InvalidParams(format!(
                "array needs 8 <= rows <= 256, cols >= 1, adc_sharing >= 1 (rows={}, cols={}, adc_sharing={})",
                self.rows, self.cols, self.adc_sharing
            )));
        }
        if !(1..=3).contains(&self.bits_per_cell) {
            return Err(Error::InvalidParams(format!(
                "bits_per_cell {} unsupported",
                self.bits_per_cell
            )));
        }
        Ok(())
    }
}

/// Sum of cell currents on one SL. An empty `variations` slice means no
/// threshold offsets.
pub fn column_mac(
    cells: &[CellState],
    inputs: &[bool],
    t: f64,
    variations: &[Variation],
    bias: &BiasConfig,
    devs: &CellDevices,
) -> Result<f64> {
    if cells.len() != inputs.len() || !(variations.is_empty() || variations.len() == cells.len()) {
        return Err(Error::Shape(format!(
            "{} cells, {} inputs, {} variation entries",
            cells.len(),
            inputs.len(),
            variations.len()
        )));
    }
    let zero = Variation::default();
    cells.iter().zip(inputs).enumerate().try_fold(0.0, |acc, (i, (c, &x))| {
        let v = variations.get(i).unwrap_or(&zero);
        Ok(acc + cell_output_current(c, x, bias, t, devs, v)?)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacLevel {
    pub k: usize,
    pub min: f64,
    pub max: f64,
    /// Output at 27 °C.
    pub nominal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacLevelSet {
    pub digit: u32,
    pub rows: usize,
    pub t_grid: Vec<f64>,
    pub levels: Vec<MacLevel>,
}

impl MacLevelSet {
    pub fn nominals(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.nominal).collect()
    }
}

fn column_with_k_active(
    rows: usize,
    state: &CellState,
    k: usize,
    t: f64,
    bias: &BiasConfig,
    devs: &CellDevices,
) -> Result<f64> {
    let cells = vec![*state; rows];
    let inputs: Vec<bool> = (0..rows).map(|r| r < k).collect();
    column_mac(&cells, &inputs, t, &[], bias, devs)
}

/// Column output for k = 0..=rows active inputs on a column storing one
/// digit throughout, enveloped over the temperature grid.
pub fn enumerate_mac_levels(
    cfg: &ArrayConfig,
    digit: u32,
    t_grid: &[f64],
    devs: &CellDevices,
) -> Result<MacLevelSet> {
    if t_grid.is_empty() {
        return Err(Error::Domain("empty temperature grid".into()));
    }
    let state = encode_state(digit, cfg.bits_per_cell)?;
    let levels = (0..=cfg.rows)
        .into_par_iter()
        .map(|k| {
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for &t in t_grid {
                let i = column_with_k_active(cfg.rows, &state, k, t, &cfg.bias, devs)?;
                min = min.min(i);
                max = max.max(i);
            }
            let nominal = column_with_k_active(cfg.rows, &state, k, T_REF, &cfg.bias, devs)?;
            Ok(MacLevel { k, min, max, nominal })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MacLevelSet { digit, rows: cfg.rows, t_grid: t_grid.to_vec(), levels })
}

/// Normalisation of the guard gap between adjacent count levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NmrPolicy {
    /// Gap divided by the temperature spread of the upper level.
    #[default]
    GapOverUpperSpread,
    GapOverLowerSpread,
    GapOverMeanSpread,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmrReport {
    /// `values[k - 1]` is the margin between counts k − 1 and k.
    pub values: Vec<f64>,
    pub nmr_min: f64,
    /// Boundary index k of the minimum.
    pub argmin: usize,
}

const SPREAD_FLOOR: f64 = 1e-12;

pub fn compute_nmr(levels: &MacLevelSet, policy: NmrPolicy) -> Result<NmrReport> {
    if levels.levels.len() < 2 {
        return Err(Error::Domain("NMR needs at least two count levels".into()));
    }
    let spread = |l: &MacLevel| (l.max - l.min).max(SPREAD_FLOOR);
    let values: Vec<f64> = levels
        .levels
        .windows(2)
        .map(|w| {
            let gap = w[1].min - w[0].max;
            let norm = match policy {
                NmrPolicy::GapOverUpperSpread => spread(&w[1]),
                NmrPolicy::GapOverLowerSpread => spread(&w[0]),
                NmrPolicy::GapOverMeanSpread => 0.5 * (spread(&w[0]) + spread(&w[1])),
            };
            gap / norm
        })
        .collect();
    let (idx, &nmr_min) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    Ok(NmrReport { values, nmr_min, argmin: idx + 1 })
}

/// Worst NMR over every non-zero digit a `bits`-bit cell can store.
pub fn worst_case_nmr(
    cfg: &ArrayConfig,
    t_grid: &[f64],
    devs: &CellDevices,
    policy: NmrPolicy,
) -> Result<(u32, NmrReport)> {
    let mut worst: Option<(u32, NmrReport)> = None;
    for d in 1..(1u32 << cfg.bits_per_cell) {
        let r = compute_nmr(&enumerate_mac_levels(cfg, d, t_grid, devs)?, policy)?;
        if worst.as_ref().is_none_or(|(_, w)| r.nmr_min < w.nmr_min) {
            worst = Some((d, r));
        }
    }
    Ok(worst.expect("at least one digit"))
}

/// (nmr_new + 1) / (nmr_old + 1).
pub fn nmr_improvement(nmr_new: f64, nmr_old: f64) -> Result<f64> {
    if !(nmr_old + 1.0 > 0.0) {
        return Err(Error::UndefinedRatio(nmr_old + 1.0));
    }
    if !(nmr_new + 1.0 > 0.0) {
        return Err(Error::Domain(format!("nmr_new must exceed -1, got {nmr_new}")));
    }
    Ok((nmr_new + 1.0) / (nmr_old + 1.0))
}

/// A single FeFET in series with a load resistor, read in subthreshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline1F1R {
    pub fefet: DeviceParams,
    /// Binary table: level 0 erased, level 1 programmed.
    pub table: VthTable,
    pub r_load: f64,
    pub v_supply: f64,
    pub v_read: f64,
    pub v_wl_off: f64,
}

impl Default for Baseline1F1R {
    fn default() -> Self {
        let cell = CellDevices::calibrated();
        Baseline1F1R {
            fefet: DeviceParams { w_over_l: 1.0, ..cell.m1 },
            table: VthTable::mlc(0.2425, 1.3, 0.0, 2).expect("static table"),
            r_load: 1e5,
            v_supply: 0.8,
            v_read: 0.35,
            v_wl_off: -0.3,
        }
    }
}

/// Current through the 1FeFET-1R branch.
pub fn baseline_1f1r_output(stored: bool, input: bool, t: f64, base: &Baseline1F1R) -> Result<f64> {
    let vth = base.table.level(usize::from(stored))?;
    let v_g = if input { base.v_read } else { base.v_wl_off };
    // Drain node: (V_sup − V_D)/R falls and I_D rises with V_D.
    let g = |v_d: f64| (base.v_supply - v_d) / base.r_load - drain_current(&base.fefet, vth, v_g, v_d, t);
    let (mut lo, mut hi) = (0.0, base.v_supply);
    if !(g(lo) >= 0.0 && g(hi) <= 0.0) {
        return Err(Error::Solver { v_dl: base.v_supply });
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok((base.v_supply - 0.5 * (lo + hi)) / base.r_load)
}

/// Count levels of an all-ON baseline column.
pub fn baseline_mac_levels(rows: usize, t_grid: &[f64], base: &Baseline1F1R) -> Result<MacLevelSet> {
    if t_grid.is_empty() {
        return Err(Error::Domain("empty temperature grid".into()));
    }
    let level = |k: usize, t: f64| -> Result<f64> {
        Ok(k as f64 * baseline_1f1r_output(true, true, t, base)?
            + (rows - k) as f64 * baseline_1f1r_output(true, false, t, base)?)
    };
    let levels = (0..=rows)
        .map(|k| {
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for &t in t_grid {
                let i = level(k, t)?;
                min = min.min(i);
                max = max.max(i);
            }
            Ok(MacLevel { k, min, max, nominal: level(k, T_REF)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MacLevelSet { digit: 1, rows, t_grid: t_grid.to_vec(), levels })
}

/// Largest |I(T) − I(T_ref)| / I(T_ref) of the baseline ON state.
pub fn baseline_fluctuation(t_grid: &[f64], base: &Baseline1F1R) -> Result<f64> {
    let reference = baseline_1f1r_output(true, true, T_REF, base)?;
    t_grid.iter().try_fold(0.0_f64, |acc, &t| {
        Ok(acc.max((baseline_1f1r_output(true, true, t, base)? - reference).abs() / reference))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub runs: usize,
    /// FeFET threshold sigma (V).
    pub sigma_vt: f64,
    /// Output-MOSFET threshold sigma (V).
    pub sigma_mos: f64,
    pub seed: u64,
    pub t: f64,
    /// Active rows; defaults to rows − 1, the largest count a 3-bit ADC
    /// resolves on an 8-row column.
    pub active_rows: Option<usize>,
    pub adc_bits: u8,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig {
            runs: 500,
            sigma_vt: 0.054,
            sigma_mos: 0.0,
            seed: 1,
            t: T_REF,
            active_rows: None,
            adc_bits: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub digit: u32,
    pub active_rows: usize,
    pub currents: Vec<f64>,
    pub codes: Vec<u32>,
    pub nominal_current: f64,
    pub nominal_code: u32,
    /// Fraction of runs whose code equals the nominal code.
    pub accuracy: f64,
    pub mean: f64,
    pub std: f64,
    /// σ/μ of the column output.
    pub relative_sigma: f64,
    /// σ/μ of individual active-cell outputs pooled over runs.
    pub cell_relative_sigma: f64,
    pub adc: AdcConfig,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.iter().all(|&x| x == xs[0]) {
        return (xs[0], 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Per-run generator: stream `run` of the ChaCha8 sequence keyed by `seed`.
pub fn run_rng(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

/// Monte Carlo over FeFET threshold variation for a uniform-digit column.
///
/// ADC references are midpoints of the variation-free count levels at the
/// same temperature.
pub fn monte_carlo_mac(
    cfg: &ArrayConfig,
    digit: u32,
    mc: &MonteCarloConfig,
    devs: &CellDevices,
) -> Result<MonteCarloReport> {
    if mc.runs == 0 {
        return Err(Error::Domain("Monte Carlo needs at least one run".into()));
    }
    if !(mc.sigma_vt >= 0.0 && mc.sigma_mos >= 0.0) {
        return Err(Error::Domain("variation sigmas must be non-negative".into()));
    }
    let rows = cfg.rows;
    let k = mc.active_rows.unwrap_or(rows - 1);
    if k > rows {
        return Err(Error::Shape(format!("{k} active rows on a {rows}-row column")));
    }
    let state = encode_state(digit, cfg.bits_per_cell)?;
    let nominal_levels = enumerate_mac_levels(cfg, digit, &[mc.t], devs)?;
    let adc = design_references(&nominal_levels.nominals(), mc.adc_bits)?;
    let nominal_current = column_with_k_active(rows, &state, k, mc.t, &cfg.bias, devs)?;
    let nominal_code = flash_convert(nominal_current, &adc);

    let fefet = Normal::new(0.0, mc.sigma_vt).map_err(|e| Error::Domain(e.to_string()))?;
    let mos = Normal::new(0.0, mc.sigma_mos).map_err(|e| Error::Domain(e.to_string()))?;
    let cells = vec![state; rows];
    let inputs: Vec<bool> = (0..rows).map(|r| r < k).collect();
    let runs: Vec<(f64, Vec<f64>)> = (0..mc.runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = run_rng(mc.seed, run as u64);
            let vars: Vec<Variation> = (0..rows)
                .map(|_| Variation {
                    m1: fefet.sample(&mut rng),
                    m2: fefet.sample(&mut rng),
                    m3: mos.sample(&mut rng),
                })
                .collect();
            let per_cell = cells
                .iter()
                .zip(&inputs)
                .zip(&vars)
                .map(|((c, &x), v)| cell_output_current(c, x, &cfg.bias, mc.t, devs, v))
                .collect::<Result<Vec<f64>>>()?;
            let total = per_cell.iter().sum();
            Ok((total, per_cell[..k].to_vec()))
        })
        .collect::<Result<Vec<_>>>()?;

    let currents: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let pooled: Vec<f64> = runs.iter().flat_map(|r| r.1.iter().copied()).collect();
    let codes: Vec<u32> = currents.iter().map(|&i| flash_convert(i, &adc)).collect();
    let correct = codes.iter().filter(|&&c| c == nominal_code).count();
    let (mean, std) = mean_std(&currents);
    let cell_relative_sigma = if pooled.is_empty() {
        0.0
    } else {
        let (m, s) = mean_std(&pooled);
        s / m
    };
    Ok(MonteCarloReport {
        digit,
        active_rows: k,
        nominal_current,
        nominal_code,
        accuracy: correct as f64 / mc.runs as f64,
        mean,
        std,
        relative_sigma: std / mean,
        cell_relative_sigma,
        currents,
        codes,
        adc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(levels: &[(f64, f64)]) -> MacLevelSet {
        MacLevelSet {
            digit: 1,
            rows: levels.len() - 1,
            t_grid: vec![T_REF],
            levels: levels
                .iter()
                .enumerate()
                .map(|(k, &(min, max))| MacLevel { k, min, max, nominal: 0.5 * (min + max) })
                .collect(),
        }
    }

    #[test]
    fn nmr_unit_spacing() {
        // Spread 1, gap 1.
        let set = flat(&[(0.0, 1.0), (2.0, 3.0), (4.0, 5.0), (6.0, 7.0)]);
        let r = compute_nmr(&set, NmrPolicy::default()).unwrap();
        assert!(r.values.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn nmr_overlap_is_negative() {
        let set = flat(&[(0.0, 1.0), (0.5, 3.0)]);
        let r = compute_nmr(&set, NmrPolicy::default()).unwrap();
        assert!(r.nmr_min < 0.0);
        assert_eq!(r.argmin, 1);
    }

    #[test]
    fn improvement_ratio() {
        assert_eq!(nmr_improvement(0.4, 0.4).unwrap(), 1.0);
        assert!(((0.29 + 1.0) / (-0.57 + 1.0) - nmr_improvement(0.29, -0.57).unwrap()).abs() < 1e-15);
        assert!((nmr_improvement(0.29, 0.217).unwrap() - 1.06).abs() < 0.005);
        assert!(matches!(nmr_improvement(0.3, -1.0), Err(Error::UndefinedRatio(_))));
    }

    #[test]
    fn shape_mismatch() {
        let devs = CellDevices::default();
        let c = encode_state(1, 2).unwrap();
        let r = column_mac(&[c, c], &[true], T_REF, &[], &BiasConfig::default(), &devs);
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn baseline_input_zero_is_off() {
        let b = Baseline1F1R::default();
        let on = baseline_1f1r_output(true, true, T_REF, &b).unwrap();
        let off = baseline_1f1r_output(true, false, T_REF, &b).unwrap();
        assert!(off < 1e-3 * on);
    }
}
