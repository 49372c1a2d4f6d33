//! Analytical energy, latency and area estimation for mapped networks.

use serde::{Deserialize, Serialize};

use crate::adc::comparator_count;
use crate::error::{Error, Result};
use crate::nn_engine::{
    bit_serial_pulses, finish_layer, quantize_activations, reference_matvec, sparsity_schedule, Dataset, MappedNetwork,
    PulseOrder, ACTIVATION_BITS,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfConstants {
    /// Fixed energy of one column read (J).
    pub e_array_read_per_col: f64,
    /// Additional column-read energy per asserted row (J).
    pub e_array_per_row: f64,
    /// Energy per comparator per conversion (J).
    pub e_adc_per_comparator: f64,
    /// Energy of one FeFET program/erase pulse (J).
    pub e_write_pulse: f64,
    pub alpha_wiring: f64,
    pub gamma_dff: f64,
    pub delta_adder: f64,
    pub theta_switch: f64,
    pub epsilon_ctrl: f64,
    /// Interconnect energy as a fraction of adder, DFF and switch energy.
    pub interconnect_fraction: f64,
    pub clock_period: f64,
    /// Base energies (J) of one accumulator add, one DFF bit toggle, one
    /// word-line switch event and one control cycle.
    pub e_adder: f64,
    pub e_dff_bit: f64,
    pub e_switch: f64,
    pub e_ctrl: f64,
    /// Shift-add accumulator width (bits).
    pub accumulator_bits: u32,
    /// Feature size (m).
    pub feature_size: f64,
    /// Areas in F².
    pub cell_area_f2: f64,
    pub comparator_area_f2: f64,
    pub level_shifter_area_f2: f64,
    pub adder_area_f2: f64,
    pub dff_area_f2: f64,
    pub control_area_f2: f64,
}

impl PerfConstants {
    /// Constants fitted to published 45 nm per-read and per-operation energy
    /// figures. A calibration artifact, not a gate-level characterisation.
    pub fn paper_45nm() -> Self {
        PerfConstants {
            e_array_read_per_col: 0.400e-12,
            e_array_per_row: 1.5e-17,
            e_adc_per_comparator: 0.125e-12,
            e_write_pulse: 0.1e-12,
            alpha_wiring: 1.44,
            gamma_dff: 0.25,
            delta_adder: 0.20,
            theta_switch: 0.5,
            epsilon_ctrl: 0.05,
            interconnect_fraction: 0.10,
            clock_period: 2e-9,
            e_adder: 50e-15,
            e_dff_bit: 2e-15,
            e_switch: 5e-15,
            e_ctrl: 20e-15,
            accumulator_bits: 16,
            feature_size: 45e-9,
            cell_area_f2: 60.0,
            comparator_area_f2: 400.0,
            level_shifter_area_f2: 200.0,
            adder_area_f2: 1500.0,
            dff_area_f2: 100.0,
            control_area_f2: 20000.0,
        }
    }

    /// Every energy and area set to zero; activity factors kept.
    pub fn zero() -> Self {
        PerfConstants {
            e_array_read_per_col: 0.0,
            e_array_per_row: 0.0,
            e_adc_per_comparator: 0.0,
            e_write_pulse: 0.0,
            e_adder: 0.0,
            e_dff_bit: 0.0,
            e_switch: 0.0,
            e_ctrl: 0.0,
            cell_area_f2: 0.0,
            comparator_area_f2: 0.0,
            level_shifter_area_f2: 0.0,
            adder_area_f2: 0.0,
            dff_area_f2: 0.0,
            control_area_f2: 0.0,
            ..Self::paper_45nm()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let non_negative = [
            self.e_array_read_per_col,
            self.e_array_per_row,
            self.e_adc_per_comparator,
            self.e_write_pulse,
            self.interconnect_fraction,
            self.clock_period,
            self.e_adder,
            self.e_dff_bit,
            self.e_switch,
            self.e_ctrl,
            self.feature_size,
            self.cell_area_f2,
            self.comparator_area_f2,
            self.level_shifter_area_f2,
            self.adder_area_f2,
            self.dff_area_f2,
            self.control_area_f2,
        ];
        if non_negative.iter().any(|v| !(*v >= 0.0)) || !(self.alpha_wiring >= 0.0) {
            return Err(Error::InvalidParams("performance constants must be non-negative".into()));
        }
        let factors = [self.gamma_dff, self.delta_adder, self.theta_switch, self.epsilon_ctrl];
        if factors.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::InvalidParams("activity factors must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn e_adc_per_conversion(&self, bits: u8) -> f64 {
        comparator_count(bits) as f64 * self.e_adc_per_comparator
    }

    /// Energy of one column read with `rows` asserted rows.
    pub fn e_column_read(&self, rows: usize) -> f64 {
        self.e_array_read_per_col + self.e_array_per_row * rows as f64
    }
}

impl Default for PerfConstants {
    fn default() -> Self {
        Self::paper_45nm()
    }
}

/// Array geometry and periphery choices for accounting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfConfig {
    pub rows: usize,
    pub cols: usize,
    pub bits_per_cell: u8,
    pub adc_bits: u8,
    pub adc_sharing: usize,
    /// Rows asserted per conversion; `None` asserts a whole tile at once.
    pub rows_per_read: Option<usize>,
    pub op_count: OpCount,
}

impl Default for PerfConfig {
    fn default() -> Self {
        PerfConfig {
            rows: 128,
            cols: 128,
            bits_per_cell: 2,
            adc_bits: 3,
            adc_sharing: 8,
            rows_per_read: None,
            op_count: OpCount::PerPulse,
        }
    }
}

impl PerfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.adc_sharing == 0 || self.rows_per_read == Some(0) {
            return Err(Error::InvalidParams("array dimensions and sharing must be positive".into()));
        }
        if !(self.bits_per_cell == 1 || self.bits_per_cell == 2) || !(1..=10).contains(&self.adc_bits) {
            return Err(Error::InvalidParams("unsupported cell or ADC precision".into()));
        }
        Ok(())
    }
}

/// What counts as one multiply-accumulate in TOPS/W.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OpCount {
    /// One MAC per weight per binary input pulse.
    #[default]
    PerPulse,
    /// One MAC per weight per multi-bit activation.
    PerActivation,
}

/// Energy of one column read plus its ADC conversion.
pub fn op_energy(rows: usize, adc_bits: u8, constants: &PerfConstants) -> f64 {
    constants.e_column_read(rows) + constants.e_adc_per_conversion(adc_bits)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct DigitalCounts {
    pub adders: f64,
    pub dff_bits: f64,
    pub switch_events: f64,
    pub ctrl_cycles: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct DigitalEnergy {
    pub adders: f64,
    pub dffs: f64,
    pub switches: f64,
    pub interconnect: f64,
    pub control: f64,
}

impl DigitalEnergy {
    /// Everything except control.
    pub fn datapath(&self) -> f64 {
        self.adders + self.dffs + self.switches + self.interconnect
    }
}

/// Σ base energy × count × activity factor, per component class.
pub fn digital_energy(counts: &DigitalCounts, constants: &PerfConstants) -> DigitalEnergy {
    let adders = counts.adders * constants.e_adder * constants.delta_adder;
    let dffs = counts.dff_bits * constants.e_dff_bit * constants.gamma_dff;
    let switches = counts.switch_events * constants.e_switch * constants.theta_switch;
    DigitalEnergy {
        adders,
        dffs,
        switches,
        interconnect: constants.interconnect_fraction * (adders + dffs + switches),
        control: counts.ctrl_cycles * constants.e_ctrl * constants.epsilon_ctrl,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct AreaBreakdown {
    pub cells: f64,
    pub adc: f64,
    pub level_shifters: f64,
    pub shift_add: f64,
    pub control: f64,
}

impl AreaBreakdown {
    pub fn total(&self) -> f64 {
        self.cells + self.adc + self.level_shifters + self.shift_add + self.control
    }
}

/// Area of one array with its periphery, in µm².
pub fn area_estimate(rows: usize, cols: usize, adc_bits: u8, adc_sharing: usize, constants: &PerfConstants) -> AreaBreakdown {
    let f2 = (constants.feature_size * 1e6).powi(2);
    let adcs = cols.div_ceil(adc_sharing) as f64;
    AreaBreakdown {
        cells: constants.cell_area_f2 * (rows * cols) as f64 * f2,
        adc: adcs * comparator_count(adc_bits) as f64 * constants.comparator_area_f2 * f2,
        level_shifters: 2.0 * rows as f64 * constants.level_shifter_area_f2 * constants.alpha_wiring * f2,
        shift_add: adcs
            * (constants.adder_area_f2 + constants.accumulator_bits as f64 * constants.dff_area_f2)
            * f2,
        control: constants.control_area_f2 * f2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct EnergyBreakdown {
    pub array: f64,
    pub adc: f64,
    pub digital: f64,
    pub control: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.array + self.adc + self.digital + self.control
    }

    fn add(&mut self, o: &EnergyBreakdown) {
        self.array += o.array;
        self.adc += o.adc;
        self.digital += o.digital;
        self.control += o.control;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerPerf {
    pub layer: usize,
    pub row_tiles: usize,
    pub col_tiles: usize,
    pub read_cycles: f64,
    pub macs: f64,
    pub energy: EnergyBreakdown,
    pub latency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    pub total_energy: f64,
    pub breakdown: EnergyBreakdown,
    pub latency: f64,
    pub area: f64,
    pub tops_per_watt: f64,
    pub macs: f64,
    pub read_cycles: f64,
    pub arrays: usize,
    pub layers: Vec<LayerPerf>,
}

/// Shape of one layer as seen by the accounting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerShape {
    pub in_features: usize,
    pub out_features: usize,
}

fn layer_perf(
    n: usize,
    shape: &LayerShape,
    cfg: &PerfConfig,
    constants: &PerfConstants,
    groups_per_pulse: Option<f64>,
) -> LayerPerf {
    let digits_per_weight = 8 / cfg.bits_per_cell as usize;
    let columns = shape.out_features * digits_per_weight;
    let row_tiles = shape.in_features.div_ceil(cfg.rows);
    let col_tiles = columns.div_ceil(cfg.cols);
    let pulses = ACTIVATION_BITS as f64;

    let mut reads = 0.0;
    let mut array = 0.0;
    let mut switch_events = 0.0;
    let mut cycles = 0.0_f64;
    for t in 0..row_tiles {
        let tile_rows = (shape.in_features - t * cfg.rows).min(cfg.rows);
        let per_read = cfg.rows_per_read.unwrap_or(cfg.rows).min(tile_rows);
        let groups = groups_per_pulse.unwrap_or(tile_rows.div_ceil(per_read) as f64);
        let tile_reads = pulses * groups * columns as f64;
        reads += tile_reads;
        array += tile_reads * constants.e_column_read(per_read);
        switch_events += pulses * 2.0 * tile_rows as f64 * col_tiles as f64;
        // Column tiles and row tiles run on separate arrays in parallel.
        let cols_in_array = columns.min(cfg.cols);
        let conv_cycles = groups * cols_in_array.min(cfg.adc_sharing) as f64;
        cycles = cycles.max(pulses * (conv_cycles + 1.0));
    }
    let counts = DigitalCounts {
        adders: reads + (row_tiles.saturating_sub(1) * columns) as f64,
        dff_bits: reads * constants.accumulator_bits as f64,
        switch_events,
        ctrl_cycles: cycles * (row_tiles * col_tiles) as f64,
    };
    let dig = digital_energy(&counts, constants);
    let macs_per_pass = (shape.in_features * shape.out_features) as f64;
    let macs = match cfg.op_count {
        OpCount::PerPulse => macs_per_pass * pulses,
        OpCount::PerActivation => macs_per_pass,
    };
    LayerPerf {
        layer: n,
        row_tiles,
        col_tiles,
        read_cycles: reads,
        macs,
        energy: EnergyBreakdown {
            array,
            adc: reads * constants.e_adc_per_conversion(cfg.adc_bits),
            digital: dig.datapath(),
            control: dig.control,
        },
        latency: cycles * constants.clock_period,
    }
}

/// Energy, latency and area of running `inferences` passes of a network.
///
/// `groups_per_pulse` optionally replaces the dense row-group count per layer
/// with a measured mean (see [`measure_row_groups`]).
pub fn workload_perf_shapes(
    shapes: &[LayerShape],
    inferences: usize,
    cfg: &PerfConfig,
    constants: &PerfConstants,
    groups_per_pulse: Option<&[f64]>,
) -> Result<PerfReport> {
    cfg.validate()?;
    constants.validate()?;
    if shapes.is_empty() {
        return Err(Error::Precondition("network has no mapped layers".into()));
    }
    if groups_per_pulse.is_some_and(|g| g.len() != shapes.len()) {
        return Err(Error::Shape("one row-group figure per layer required".into()));
    }
    let scale = inferences as f64;
    let mut breakdown = EnergyBreakdown::default();
    let mut layers = Vec::with_capacity(shapes.len());
    let (mut latency, mut macs, mut reads) = (0.0, 0.0, 0.0);
    let mut arrays = 0;
    for (n, s) in shapes.iter().enumerate() {
        let mut lp = layer_perf(n, s, cfg, constants, groups_per_pulse.map(|g| g[n]));
        lp.read_cycles *= scale;
        lp.macs *= scale;
        lp.latency *= scale;
        for e in [&mut lp.energy.array, &mut lp.energy.adc, &mut lp.energy.digital, &mut lp.energy.control] {
            *e *= scale;
        }
        breakdown.add(&lp.energy);
        latency += lp.latency;
        macs += lp.macs;
        reads += lp.read_cycles;
        arrays += lp.row_tiles * lp.col_tiles;
        layers.push(lp);
    }
    let total_energy = breakdown.total();
    let area = arrays as f64 * area_estimate(cfg.rows, cfg.cols, cfg.adc_bits, cfg.adc_sharing, constants).total();
    let tops_per_watt = if total_energy > 0.0 { 2.0 * macs / total_energy / 1e12 } else { 0.0 };
    Ok(PerfReport { total_energy, breakdown, latency, area, tops_per_watt, macs, read_cycles: reads, arrays, layers })
}

pub fn workload_perf(
    net: &MappedNetwork,
    inferences: usize,
    cfg: &PerfConfig,
    constants: &PerfConstants,
    groups_per_pulse: Option<&[f64]>,
) -> Result<PerfReport> {
    if net.layers.is_empty() {
        return Err(Error::Precondition("network has no mapped layers".into()));
    }
    if net.bits_per_cell() != cfg.bits_per_cell {
        return Err(Error::Precondition(format!(
            "network mapped at {} bits per cell, accounting configured for {}",
            net.bits_per_cell(),
            cfg.bits_per_cell
        )));
    }
    let shapes: Vec<LayerShape> = net
        .layers
        .iter()
        .map(|l| LayerShape { in_features: l.mapped.in_features, out_features: l.mapped.out_features })
        .collect();
    workload_perf_shapes(&shapes, inferences, cfg, constants, groups_per_pulse)
}

/// One fully used array: `rows` inputs feeding as many weights as the
/// array's columns hold at this cell precision.
pub fn reference_array_shape(cfg: &PerfConfig) -> LayerShape {
    LayerShape { in_features: cfg.rows, out_features: cfg.cols * cfg.bits_per_cell as usize / 8 }
}

/// Mean sparsity-schedule groups per (pulse, row tile) for each layer,
/// measured on the software activations of a dataset.
pub fn measure_row_groups(
    net: &MappedNetwork,
    data: &Dataset,
    rows: usize,
    threshold: usize,
) -> Result<Vec<f64>> {
    if data.is_empty() || rows == 0 {
        return Err(Error::Domain("empty dataset or zero-row tile".into()));
    }
    let mut totals = vec![0.0; net.layers.len()];
    let mut events = vec![0.0; net.layers.len()];
    for s in &data.samples {
        let mut x = s.input.clone();
        for (n, layer) in net.layers.iter().enumerate() {
            let (a, scale) = quantize_activations(&x)?;
            for tile in a.chunks(rows) {
                let pulses: Vec<[bool; 8]> = tile.iter().map(|&v| bit_serial_pulses(v, PulseOrder::LsbFirst)).collect();
                for p in 0..ACTIVATION_BITS as usize {
                    let bits: Vec<bool> = pulses.iter().map(|b| b[p]).collect();
                    totals[n] += sparsity_schedule(&bits, threshold)?.len() as f64;
                    events[n] += 1.0;
                }
            }
            x = finish_layer(layer, &reference_matvec(&layer.mapped, &a), scale);
        }
    }
    Ok(totals.iter().zip(&events).map(|(t, e)| t / e).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_constants_give_zero() {
        assert_eq!(op_energy(8, 3, &PerfConstants::zero()), 0.0);
        let r = workload_perf_shapes(
            &[LayerShape { in_features: 64, out_features: 10 }],
            3,
            &PerfConfig::default(),
            &PerfConstants::zero(),
            None,
        )
        .unwrap();
        assert_eq!(r.total_energy, 0.0);
        assert_eq!(r.tops_per_watt, 0.0);
    }

    #[test]
    fn digital_linearity() {
        let c = PerfConstants::paper_45nm();
        let a = digital_energy(&DigitalCounts { adders: 10.0, ..Default::default() }, &c);
        let b = digital_energy(&DigitalCounts { adders: 20.0, ..Default::default() }, &c);
        assert!((b.adders - 2.0 * a.adders).abs() < 1e-30);
        let off = PerfConstants { delta_adder: 0.0, ..c };
        let counts = DigitalCounts { adders: 5.0, dff_bits: 5.0, switch_events: 5.0, ctrl_cycles: 5.0 };
        let e = digital_energy(&counts, &off);
        assert_eq!(e.adders, 0.0);
        assert!(e.dffs > 0.0 && e.switches > 0.0 && e.control > 0.0);
    }

    #[test]
    fn activity_factor_bounds() {
        let bad = PerfConstants { gamma_dff: 1.5, ..PerfConstants::paper_45nm() };
        assert!(bad.validate().is_err());
    }
}
