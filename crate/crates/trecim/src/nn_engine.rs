//! Quantized inference mapped onto simulated arrays.
//!
//! Signed 8-bit weights are offset-encoded (u = w + 128) and split into
//! base-2^b digits, one cell per digit. Activations enter as eight binary
//! pulses. Column results are shifted by pulse and digit significance, summed
//! exactly, and the constant 128·Σa term is removed digitally.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adc::{design_references_from_bounds, flash_convert, AdcConfig};
use crate::array::run_rng;
use crate::cell::{cell_output_current, encode_state, BiasConfig, Variation};
use crate::device_models::{CellDevices, T_REF};
use crate::error::{Error, Result};

/// Constant added to every signed weight before digit decomposition.
pub const WEIGHT_OFFSET: i64 = 128;
/// Activation precision (pulses per input).
pub const ACTIVATION_BITS: u32 = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedTensor {
    pub values: Vec<i32>,
    pub shape: Vec<usize>,
    pub scale: f64,
    pub zero_point: i32,
    pub bits: u8,
    pub signed: bool,
}

impl QuantizedTensor {
    pub fn dequantize(&self) -> Vec<f64> {
        self.values.iter().map(|&q| (q - self.zero_point) as f64 * self.scale).collect()
    }
}

/// Uniform quantization.
///
/// Symmetric (weights): scale = max|x| / (2^(bits−1) − 1). Otherwise
/// (post-ReLU activations): negatives clip to zero and
/// scale = max(x) / (2^bits − 1). Rounds half away from zero; an all-zero
/// tensor gets scale 1.
pub fn quantize_tensor(x: &[f64], shape: &[usize], bits: u8, symmetric: bool) -> Result<QuantizedTensor> {
    if !(2..=16).contains(&bits) {
        return Err(Error::InvalidParams(format!("{bits}-bit quantization unsupported")));
    }
    if shape.iter().product::<usize>() != x.len() {
        return Err(Error::Shape(format!("shape {shape:?} does not hold {} values", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite value in tensor".into()));
    }
    let (qmin, qmax, peak) = if symmetric {
        let q = (1i32 << (bits - 1)) - 1;
        (-q, q, x.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
    } else {
        (0, (1i32 << bits) - 1, x.iter().fold(0.0_f64, |m, &v| m.max(v)))
    };
    let scale = if peak > 0.0 { peak / qmax as f64 } else { 1.0 };
    let values = x
        .iter()
        .map(|&v| ((v / scale).round() as i64).clamp(qmin as i64, qmax as i64) as i32)
        .collect();
    Ok(QuantizedTensor { values, shape: shape.to_vec(), scale, zero_point: 0, bits, signed: symmetric })
}

/// One fully connected layer in cell form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappedLayer {
    pub out_features: usize,
    pub in_features: usize,
    pub bits_per_cell: u8,
    pub num_digits: usize,
    /// Digit of cell (o, j, i) at `(o * num_digits + j) * in_features + i`;
    /// each (o, j) is one column of `in_features` cells, digit 0 least
    /// significant.
    pub digits: Vec<u8>,
    pub weight_scale: f64,
}

impl MappedLayer {
    #[inline]
    pub fn column(&self, o: usize, j: usize) -> &[u8] {
        let start = (o * self.num_digits + j) * self.in_features;
        &self.digits[start..start + self.in_features]
    }

    /// Significance (2^b)^j of digit column j.
    pub fn significance(&self, j: usize) -> i64 {
        1i64 << (self.bits_per_cell as usize * j)
    }

    /// Signed weight rebuilt from its digits.
    pub fn weight(&self, o: usize, i: usize) -> i64 {
        (0..self.num_digits)
            .map(|j| self.column(o, j)[i] as i64 * self.significance(j))
            .sum::<i64>()
            - WEIGHT_OFFSET
    }
}

/// Decomposes an [out, in] signed 8-bit weight tensor into cell digits.
pub fn map_weights(w: &QuantizedTensor, b: u8) -> Result<MappedLayer> {
    if !(b == 1 || b == 2) {
        return Err(Error::Mapping(format!("{b} bits per cell unsupported (1 or 2)")));
    }
    if w.shape.len() != 2 || w.bits != 8 || !w.signed {
        return Err(Error::Mapping("expected a signed 8-bit [out, in] weight tensor".into()));
    }
    let (out_features, in_features) = (w.shape[0], w.shape[1]);
    let num_digits = 8 / b as usize;
    let base = 1i64 << b;
    let mut digits = vec![0u8; out_features * num_digits * in_features];
    for o in 0..out_features {
        for i in 0..in_features {
            let q = w.values[o * in_features + i] as i64;
            let mut u = q + WEIGHT_OFFSET;
            if !(0..256).contains(&u) {
                return Err(Error::Mapping(format!("weight {q} outside the 8-bit range")));
            }
            for j in 0..num_digits {
                let d = u % base;
                if d >= base {
                    return Err(Error::Mapping(format!("digit {d} exceeds cell range")));
                }
                digits[(o * num_digits + j) * in_features + i] = d as u8;
                u /= base;
            }
        }
    }
    Ok(MappedLayer { out_features, in_features, bits_per_cell: b, num_digits, digits, weight_scale: w.scale })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PulseOrder {
    #[default]
    LsbFirst,
    MsbFirst,
}

/// Eight input pulses for an activation, in application order.
pub fn bit_serial_pulses(a: u8, order: PulseOrder) -> [bool; 8] {
    let mut p = [false; 8];
    for (n, slot) in p.iter_mut().enumerate() {
        *slot = (a >> pulse_bit(n, order)) & 1 == 1;
    }
    p
}

/// Bit position carried by the n-th pulse.
pub fn pulse_bit(n: usize, order: PulseOrder) -> u32 {
    match order {
        PulseOrder::LsbFirst => n as u32,
        PulseOrder::MsbFirst => ACTIVATION_BITS - 1 - n as u32,
    }
}

/// Splits the '1' positions of a pulse into groups of at most `threshold`
/// rows asserted together.
pub fn sparsity_schedule(input_pulse: &[bool], threshold: usize) -> Result<Vec<Vec<usize>>> {
    if threshold == 0 {
        return Err(Error::Domain("sparsity threshold must be at least 1".into()));
    }
    let mut groups = Vec::new();
    let mut current = Vec::with_capacity(threshold);
    for (i, _) in input_pulse.iter().enumerate().filter(|(_, &b)| b) {
        current.push(i);
        if current.len() == threshold {
            groups.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        groups.push(current);
    }
    Ok(groups)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FidelityMode {
    #[default]
    IdealInteger,
    AnalogDevice,
    StatisticalVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub mode: FidelityMode,
    pub temperature: f64,
    /// FeFET threshold sigma (V) for analog mode.
    pub sigma_vt: f64,
    /// Relative output sigma per stored digit for statistical mode.
    pub digit_sigma: Vec<f64>,
    pub adc_bits: u8,
    pub array_rows: usize,
    pub pulse_order: PulseOrder,
    /// Assert only active rows, this many per read.
    pub sparsity_threshold: Option<usize>,
    pub bias: BiasConfig,
    pub devices: CellDevices,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            mode: FidelityMode::IdealInteger,
            temperature: T_REF,
            sigma_vt: 0.0,
            digit_sigma: vec![0.0; 4],
            adc_bits: 3,
            array_rows: 128,
            pulse_order: PulseOrder::LsbFirst,
            sparsity_threshold: None,
            bias: BiasConfig::default(),
            devices: CellDevices::calibrated(),
        }
    }
}

impl InferenceConfig {
    /// Statistical mode with one relative sigma for every digit.
    pub fn statistical(sigma: f64) -> Self {
        InferenceConfig {
            mode: FidelityMode::StatisticalVariance,
            digit_sigma: vec![sigma; 4],
            ..Default::default()
        }
    }

    pub fn validate(&self, bits_per_cell: u8) -> Result<()> {
        if self.array_rows == 0 {
            return Err(Error::InvalidParams("array_rows must be positive".into()));
        }
        if !(1..=10).contains(&self.adc_bits) {
            return Err(Error::InvalidParams(format!("adc_bits {} unsupported", self.adc_bits)));
        }
        if (1u32 << self.adc_bits) - 1 < (1u32 << bits_per_cell) - 1 {
            return Err(Error::InvalidParams("ADC cannot resolve a single cell's digit range".into()));
        }
        if !(self.sigma_vt >= 0.0) || self.digit_sigma.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidParams("noise sigmas must be non-negative".into()));
        }
        if self.mode == FidelityMode::StatisticalVariance {
            if self.sigma_vt != 0.0 {
                return Err(Error::InvalidParams(
                    "statistical mode takes its noise from the per-digit table only".into(),
                ));
            }
            if self.digit_sigma.len() < 1 << bits_per_cell {
                return Err(Error::InvalidParams("per-digit sigma table too short".into()));
            }
        }
        Ok(())
    }
}

/// Rows read per ADC conversion so every partial sum fits the code range.
pub fn adc_group_rows(adc_bits: u8, bits_per_cell: u8, array_rows: usize) -> usize {
    let max_digit = (1usize << bits_per_cell) - 1;
    (((1usize << adc_bits) - 1) / max_digit).clamp(1, array_rows)
}

/// Per-cell (input 0, input 1) output currents for one layer.
#[derive(Debug, Clone)]
pub struct CellCurrents {
    per_cell: Option<Vec<[f64; 2]>>,
    per_digit: Vec<[f64; 2]>,
}

impl CellCurrents {
    #[inline]
    fn get(&self, index: usize, digit: u8, bit: bool) -> f64 {
        match &self.per_cell {
            Some(v) => v[index][bit as usize],
            None => self.per_digit[digit as usize][bit as usize],
        }
    }
}

/// Analog read path for one layer: cell currents, group size and the ADC
/// references placed between partial-sum envelopes.
#[derive(Debug, Clone)]
pub struct AnalogPlan {
    pub group_rows: usize,
    pub adc: AdcConfig,
    currents: CellCurrents,
    leak_pad: f64,
}

fn digit_currents(bits_per_cell: u8, t: f64, bias: &BiasConfig, devs: &CellDevices) -> Result<Vec<[f64; 2]>> {
    (0..1u32 << bits_per_cell)
        .map(|d| {
            let s = encode_state(d, bits_per_cell)?;
            let z = Variation::default();
            Ok([
                cell_output_current(&s, false, bias, t, devs, &z)?,
                cell_output_current(&s, true, bias, t, devs, &z)?,
            ])
        })
        .collect()
}

/// Min/max current of every partial sum 0..=g·D when g rows are asserted and
/// `idle` further rows sit at input 0.
pub fn partial_sum_envelopes(table: &[[f64; 2]], g: usize, idle: usize) -> Vec<(f64, f64)> {
    let max_digit = table.len() - 1;
    let mut options: Vec<(usize, f64)> = table.iter().map(|c| (0, c[0])).collect();
    options.push((0, table[0][1]));
    options.extend((1..=max_digit).map(|d| (d, table[d][1])));
    let top = g * max_digit;
    let mut env = vec![(f64::INFINITY, f64::NEG_INFINITY); top + 1];
    env[0] = (0.0, 0.0);
    for _ in 0..g {
        let mut next = vec![(f64::INFINITY, f64::NEG_INFINITY); top + 1];
        for (s, &(lo, hi)) in env.iter().enumerate() {
            if lo > hi {
                continue;
            }
            for &(v, i) in &options {
                let n = &mut next[s + v];
                n.0 = n.0.min(lo + i);
                n.1 = n.1.max(hi + i);
            }
        }
        env = next;
    }
    let idle_lo = idle as f64 * table.iter().map(|c| c[0]).fold(f64::INFINITY, f64::min);
    let idle_hi = idle as f64 * table.iter().map(|c| c[0]).fold(f64::NEG_INFINITY, f64::max);
    env.into_iter().map(|(lo, hi)| (lo + idle_lo, hi + idle_hi)).collect()
}

impl AnalogPlan {
    /// References are placed from variation-free envelopes at 27 °C;
    /// reads are evaluated at the configured temperature, optionally with
    /// per-cell threshold offsets.
    pub fn new(layer: &MappedLayer, cfg: &InferenceConfig, variations: Option<&[Variation]>) -> Result<Self> {
        let b = layer.bits_per_cell;
        let nominal = digit_currents(b, T_REF, &cfg.bias, &cfg.devices)?;
        let mut group_rows = adc_group_rows(cfg.adc_bits, b, cfg.array_rows);
        if let Some(th) = cfg.sparsity_threshold {
            group_rows = group_rows.min(th.max(1));
        }
        // Shrink the group until neighbouring partial sums separate.
        let adc = loop {
            let env = partial_sum_envelopes(&nominal, group_rows, cfg.array_rows - group_rows);
            match design_references_from_bounds(&env, cfg.adc_bits) {
                Ok(adc) => break adc,
                Err(e) if group_rows == 1 => return Err(e),
                Err(_) => group_rows -= 1,
            }
        };
        let per_digit = if cfg.temperature == T_REF {
            nominal.clone()
        } else {
            digit_currents(b, cfg.temperature, &cfg.bias, &cfg.devices)?
        };
        let per_cell = match variations {
            None => None,
            Some(vars) => {
                if vars.len() != layer.digits.len() {
                    return Err(Error::Shape("one variation entry per cell required".into()));
                }
                Some(
                    layer
                        .digits
                        .par_iter()
                        .zip(vars.par_iter())
                        .map(|(&d, v)| {
                            let s = encode_state(d as u32, b)?;
                            Ok([
                                cell_output_current(&s, false, &cfg.bias, cfg.temperature, &cfg.devices, v)?,
                                cell_output_current(&s, true, &cfg.bias, cfg.temperature, &cfg.devices, v)?,
                            ])
                        })
                        .collect::<Result<Vec<_>>>()?,
                )
            }
        };
        Ok(AnalogPlan {
            group_rows,
            adc,
            leak_pad: per_digit[0][0],
            currents: CellCurrents { per_cell, per_digit },
        })
    }
}

/// Read-time context for [`layer_forward_hw`].
pub enum ReadPath<'a, R: Rng> {
    Ideal,
    Analog(&'a AnalogPlan),
    Statistical { digit_sigma: &'a [f64], rng: &'a mut R },
}

/// Pre-scale integer outputs Σ_i w[o][i]·a[i] computed through the array
/// dataflow.
pub fn layer_forward_hw<R: Rng>(
    layer: &MappedLayer,
    activations: &[u8],
    cfg: &InferenceConfig,
    path: &mut ReadPath<'_, R>,
) -> Result<Vec<i64>> {
    if activations.len() != layer.in_features {
        return Err(Error::Shape(format!(
            "layer expects {} inputs, got {}",
            layer.in_features,
            activations.len()
        )));
    }
    let b = layer.bits_per_cell;
    let max_digit = (1i64 << b) - 1;
    let rows = cfg.array_rows;
    let group = match path {
        ReadPath::Analog(plan) => plan.group_rows,
        _ => {
            let g = adc_group_rows(cfg.adc_bits, b, rows);
            cfg.sparsity_threshold.map_or(g, |th| g.min(th.max(1)))
        }
    };
    let pulses: Vec<[bool; 8]> = activations.iter().map(|&a| bit_serial_pulses(a, cfg.pulse_order)).collect();
    let offset = WEIGHT_OFFSET * activations.iter().map(|&a| a as i64).sum::<i64>();

    let mut out = Vec::with_capacity(layer.out_features);
    let mut bits = vec![false; rows];
    for o in 0..layer.out_features {
        let mut acc: i64 = 0;
        for tile_start in (0..layer.in_features).step_by(rows) {
            let tile_end = (tile_start + rows).min(layer.in_features);
            let tile_len = tile_end - tile_start;
            for n in 0..ACTIVATION_BITS as usize {
                let shift = pulse_bit(n, cfg.pulse_order);
                for (r, p) in pulses[tile_start..tile_end].iter().enumerate() {
                    bits[r] = p[n];
                }
                let groups: Vec<Vec<usize>> = match cfg.sparsity_threshold {
                    Some(_) => sparsity_schedule(&bits[..tile_len], group)?,
                    None => (0..tile_len)
                        .step_by(group)
                        .map(|s| (s..(s + group).min(tile_len)).collect())
                        .collect(),
                };
                for j in 0..layer.num_digits {
                    let col = &layer.column(o, j)[tile_start..tile_end];
                    let col_index = (o * layer.num_digits + j) * layer.in_features + tile_start;
                    // Every row at input 0 plus unused rows of a partial tile.
                    let idle_current = match path {
                        ReadPath::Analog(plan) => {
                            (rows - tile_len) as f64 * plan.leak_pad
                                + (0..tile_len)
                                    .map(|r| plan.currents.get(col_index + r, col[r], false))
                                    .sum::<f64>()
                        }
                        _ => 0.0,
                    };
                    let mut column_value: i64 = 0;
                    for g in &groups {
                        column_value += match path {
                            ReadPath::Ideal => {
                                g.iter().map(|&r| if bits[r] { col[r] as i64 } else { 0 }).sum()
                            }
                            ReadPath::Analog(plan) => {
                                let mut current = idle_current;
                                for &r in g {
                                    if bits[r] {
                                        current += plan.currents.get(col_index + r, col[r], true)
                                            - plan.currents.get(col_index + r, col[r], false);
                                    }
                                }
                                flash_convert(current, &plan.adc) as i64
                            }
                            ReadPath::Statistical { digit_sigma, rng } => {
                                let mut ideal = 0i64;
                                let mut count = [0u32; 8];
                                for &r in g {
                                    if bits[r] && col[r] > 0 {
                                        ideal += col[r] as i64;
                                        count[col[r] as usize] += 1;
                                    }
                                }
                                let mut var = 0.0;
                                for d in 1..=max_digit as usize {
                                    let s = digit_sigma[d] * d as f64;
                                    var += count[d] as f64 * s * s;
                                }
                                if var > 0.0 {
                                    let z: f64 = StandardNormal.sample(&mut **rng);
                                    let noisy = (ideal as f64 + var.sqrt() * z).round() as i64;
                                    noisy.clamp(0, g.len() as i64 * max_digit)
                                } else {
                                    ideal
                                }
                            }
                        };
                    }
                    acc += column_value << (shift as usize + b as usize * j);
                }
            }
        }
        out.push(acc - offset);
    }
    Ok(out)
}

/// Direct integer matrix-vector product from the mapped digits.
pub fn reference_matvec(layer: &MappedLayer, activations: &[u8]) -> Vec<i64> {
    (0..layer.out_features)
        .map(|o| (0..layer.in_features).map(|i| layer.weight(o, i) * activations[i] as i64).sum())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkLayer {
    pub mapped: MappedLayer,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappedNetwork {
    pub name: String,
    pub layers: Vec<NetworkLayer>,
}

#[derive(Debug, Clone, Deserialize)]
struct FloatLayer {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    activation: Activation,
}

#[derive(Debug, Clone, Deserialize)]
struct FloatNetwork {
    #[serde(default)]
    name: String,
    layers: Vec<FloatLayer>,
}

impl MappedNetwork {
    /// Parses a JSON float network ({"layers": [{"weights": [[..]], "bias":
    /// [..], "activation": "relu" | "none"}]}) and maps it onto b-bit cells.
    pub fn from_json_str(json: &str, b: u8) -> Result<Self> {
        let net: FloatNetwork = serde_json::from_str(json)
            .map_err(|e| Error::Parse { path: "<network>".into(), message: e.to_string() })?;
        Self::from_float(net, b)
    }

    pub fn load(path: &Path, b: u8) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
        Self::from_json_str(&text, b).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse { path: path.display().to_string(), message },
            other => other,
        })
    }

    fn from_float(net: FloatNetwork, b: u8) -> Result<Self> {
        let mut layers = Vec::with_capacity(net.layers.len());
        let mut prev_out: Option<usize> = None;
        for (n, l) in net.layers.into_iter().enumerate() {
            let out = l.weights.len();
            let inp = l.weights.first().map_or(0, Vec::len);
            if out == 0 || inp == 0 || l.weights.iter().any(|r| r.len() != inp) || l.bias.len() != out {
                return Err(Error::Shape(format!("layer {n} weights/bias are ragged or empty")));
            }
            if prev_out.is_some_and(|p| p != inp) {
                return Err(Error::Shape(format!("layer {n} input width does not match previous layer")));
            }
            prev_out = Some(out);
            let flat: Vec<f64> = l.weights.into_iter().flatten().collect();
            let q = quantize_tensor(&flat, &[out, inp], 8, true)?;
            layers.push(NetworkLayer { mapped: map_weights(&q, b)?, bias: l.bias, activation: l.activation });
        }
        if layers.is_empty() {
            return Err(Error::Shape("network has no layers".into()));
        }
        Ok(MappedNetwork { name: net.name, layers })
    }

    pub fn bits_per_cell(&self) -> u8 {
        self.layers[0].mapped.bits_per_cell
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].mapped.in_features
    }

    /// Multiply-accumulates per inference.
    pub fn macs(&self) -> u64 {
        self.layers.iter().map(|l| (l.mapped.in_features * l.mapped.out_features) as u64).sum()
    }
}

/// Fraction of cells storing each digit value.
pub fn weight_state_frequencies(net: &MappedNetwork) -> Vec<f64> {
    let levels = 1usize << net.bits_per_cell();
    let mut counts = vec![0u64; levels];
    for l in &net.layers {
        for &d in &l.mapped.digits {
            counts[d as usize] += 1;
        }
    }
    let total = counts.iter().sum::<u64>() as f64;
    counts.into_iter().map(|c| c as f64 / total).collect()
}

/// Frequency-weighted mean of per-digit sigmas over the non-excluded digits.
pub fn combined_variance(per_state_sigma: &[f64], freqs: &[f64], exclude: &[usize]) -> Result<f64> {
    if per_state_sigma.len() != freqs.len() {
        return Err(Error::Shape("sigma and frequency tables differ in length".into()));
    }
    let (num, den) = per_state_sigma
        .iter()
        .zip(freqs)
        .enumerate()
        .filter(|(d, _)| !exclude.contains(d))
        .fold((0.0, 0.0), |(n, w), (_, (s, f))| (n + f * s, w + f));
    if den <= 0.0 {
        return Err(Error::Domain("no digits left after exclusion".into()));
    }
    Ok(num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub input: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// CSV with a header row; every row is the flattened input followed by
    /// the integer label.
    pub fn from_csv_reader<R: std::io::Read>(reader: R, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let mut samples = Vec::new();
        for (n, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse { path: source.into(), message: e.to_string() })?;
            let bad = |m: String| Error::Parse { path: source.into(), message: format!("row {}: {m}", n + 1) };
            if rec.len() < 2 {
                return Err(bad("needs at least one feature and a label".into()));
            }
            let input = rec
                .iter()
                .take(rec.len() - 1)
                .map(|f| f.trim().parse::<f64>().map_err(|e| bad(e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            let label = rec[rec.len() - 1].trim().parse::<usize>().map_err(|e| bad(e.to_string()))?;
            samples.push(Sample { input, label });
        }
        Ok(Dataset { samples })
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
        Self::from_csv_reader(f, &path.display().to_string())
    }

    /// IDX image and label files (unsigned-byte payloads); pixels are scaled
    /// to [0, 1].
    pub fn load_idx(images: &Path, labels: &Path) -> Result<Self> {
        let read = |p: &Path| std::fs::read(p).map_err(|e| Error::Io { path: p.display().to_string(), source: e });
        let (img, lab) = (read(images)?, read(labels)?);
        let (idims, ipay) = parse_idx(&img, &images.display().to_string())?;
        let (ldims, lpay) = parse_idx(&lab, &labels.display().to_string())?;
        if idims.is_empty() || ldims.len() != 1 || idims[0] != ldims[0] {
            return Err(Error::Parse {
                path: images.display().to_string(),
                message: "image and label counts differ".into(),
            });
        }
        let per = idims[1..].iter().product::<usize>().max(1);
        let samples = (0..idims[0])
            .map(|n| Sample {
                input: ipay[n * per..(n + 1) * per].iter().map(|&p| p as f64 / 255.0).collect(),
                label: lpay[n] as usize,
            })
            .collect();
        Ok(Dataset { samples })
    }
}

fn parse_idx<'a>(bytes: &'a [u8], path: &str) -> Result<(Vec<usize>, &'a [u8])> {
    let err = |m: &str| Error::Parse { path: path.into(), message: m.into() };
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err(err("bad IDX magic"));
    }
    if bytes[2] != 0x08 {
        return Err(err("only unsigned-byte IDX payloads are supported"));
    }
    let nd = bytes[3] as usize;
    let header = 4 + 4 * nd;
    if bytes.len() < header {
        return Err(err("truncated IDX header"));
    }
    let dims: Vec<usize> = (0..nd)
        .map(|k| u32::from_be_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().expect("4 bytes")) as usize)
        .collect();
    let n: usize = dims.iter().product();
    if bytes.len() < header + n {
        return Err(err("truncated IDX payload"));
    }
    Ok((dims, &bytes[header..header + n]))
}

pub(crate) fn quantize_activations(x: &[f64]) -> Result<(Vec<u8>, f64)> {
    let q = quantize_tensor(x, &[x.len()], 8, false)?;
    Ok((q.values.iter().map(|&v| v as u8).collect(), q.scale))
}

pub(crate) fn finish_layer(layer: &NetworkLayer, acc: &[i64], a_scale: f64) -> Vec<f64> {
    acc.iter()
        .zip(&layer.bias)
        .map(|(&v, &bias)| {
            let y = v as f64 * layer.mapped.weight_scale * a_scale + bias;
            match layer.activation {
                Activation::Relu => y.max(0.0),
                Activation::None => y,
            }
        })
        .collect()
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, &x)| if x > b.1 { (i, x) } else { b }).0
}

/// Software forward pass of the quantized network (no array model).
pub fn software_forward(net: &MappedNetwork, input: &[f64]) -> Result<Vec<f64>> {
    let mut x = input.to_vec();
    for layer in &net.layers {
        if x.len() != layer.mapped.in_features {
            return Err(Error::Shape("input width mismatch".into()));
        }
        let (a, s) = quantize_activations(&x)?;
        x = finish_layer(layer, &reference_matvec(&layer.mapped, &a), s);
    }
    Ok(x)
}

/// Per-layer analog plans for one simulated chip instance.
pub fn analog_plans(net: &MappedNetwork, cfg: &InferenceConfig, chip_seed: Option<u64>) -> Result<Vec<AnalogPlan>> {
    net.layers
        .iter()
        .enumerate()
        .map(|(n, l)| {
            let vars = match chip_seed {
                Some(seed) if cfg.sigma_vt > 0.0 => {
                    let normal = Normal::new(0.0, cfg.sigma_vt).map_err(|e| Error::Domain(e.to_string()))?;
                    let mut rng = run_rng(seed, n as u64);
                    Some(
                        (0..l.mapped.digits.len())
                            .map(|_| Variation { m1: normal.sample(&mut rng), m2: normal.sample(&mut rng), m3: 0.0 })
                            .collect::<Vec<_>>(),
                    )
                }
                _ => None,
            };
            AnalogPlan::new(&l.mapped, cfg, vars.as_deref())
        })
        .collect()
}

/// Forward pass through the array model; returns the output logits.
pub fn hardware_forward<R: Rng>(
    net: &MappedNetwork,
    input: &[f64],
    cfg: &InferenceConfig,
    plans: Option<&[AnalogPlan]>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut x = input.to_vec();
    for (n, layer) in net.layers.iter().enumerate() {
        let (a, s) = quantize_activations(&x)?;
        let acc = match cfg.mode {
            FidelityMode::IdealInteger => layer_forward_hw(&layer.mapped, &a, cfg, &mut ReadPath::<R>::Ideal)?,
            FidelityMode::AnalogDevice => {
                let plan = plans
                    .and_then(|p| p.get(n))
                    .ok_or_else(|| Error::Precondition("analog mode needs per-layer plans".into()))?;
                layer_forward_hw(&layer.mapped, &a, cfg, &mut ReadPath::<R>::Analog(plan))?
            }
            FidelityMode::StatisticalVariance => layer_forward_hw(
                &layer.mapped,
                &a,
                cfg,
                &mut ReadPath::Statistical { digit_sigma: &cfg.digit_sigma, rng: &mut *rng },
            )?,
        };
        x = finish_layer(layer, &acc, s);
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyStats {
    pub mean: f64,
    pub std: f64,
    pub per_repeat: Vec<f64>,
    pub samples: usize,
}

/// Classification accuracy over `repeats` seeded passes.
///
/// Sample s of repeat r draws from stream r·2^32 + s; analog chips with
/// threshold variation are re-sampled per repeat.
pub fn infer(
    net: &MappedNetwork,
    data: &Dataset,
    cfg: &InferenceConfig,
    repeats: usize,
    seed: u64,
) -> Result<AccuracyStats> {
    if data.is_empty() {
        return Err(Error::Domain("empty dataset".into()));
    }
    if repeats == 0 {
        return Err(Error::Domain("repeats must be at least 1".into()));
    }
    cfg.validate(net.bits_per_cell())?;
    let mut per_repeat = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let plans = match cfg.mode {
            FidelityMode::AnalogDevice => Some(analog_plans(net, cfg, Some(seed ^ (0xC41F << 32) ^ r as u64))?),
            _ => None,
        };
        let correct = data
            .samples
            .par_iter()
            .enumerate()
            .map(|(s, sample)| {
                let mut rng = run_rng(seed, ((r as u64) << 32) | s as u64);
                let logits = hardware_forward(net, &sample.input, cfg, plans.as_deref(), &mut rng)?;
                Ok(usize::from(argmax(&logits) == sample.label))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .sum::<usize>();
        per_repeat.push(correct as f64 / data.len() as f64);
    }
    let n = per_repeat.len() as f64;
    let mean = per_repeat.iter().sum::<f64>() / n;
    let std = if per_repeat.len() > 1 {
        (per_repeat.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(AccuracyStats { mean, std, per_repeat, samples: data.len() })
}

/// Accuracy of the software quantized model.
pub fn software_accuracy(net: &MappedNetwork, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Domain("empty dataset".into()));
    }
    let correct = data
        .samples
        .iter()
        .map(|s| Ok(usize::from(argmax(&software_forward(net, &s.input)?) == s.label)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(correct as f64 / data.len() as f64)
}
