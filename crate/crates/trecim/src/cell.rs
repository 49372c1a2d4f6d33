//! The 2FeFET-1T cell: digit encoding, internal-node solve and SL current.
//!
//! M1 (DL to V_S) and M2 (V_S to ground) form a divider whose midpoint drives
//! the gate of M3. M3 sources the cell's contribution onto the shared SL,
//! which the sense amplifier holds at virtual ground.

use serde::{Deserialize, Serialize};

use crate::device_models::{drain_current, CellDevices, T_REF};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasConfig {
    pub v_dl: f64,
    pub v_bl: f64,
    pub v_read: f64,
    pub v_wl_off: f64,
    pub v_sl: f64,
}

impl Default for BiasConfig {
    fn default() -> Self {
        BiasConfig { v_dl: 0.4, v_bl: 1.0, v_read: 0.35, v_wl_off: -0.5, v_sl: 0.0 }
    }
}

impl BiasConfig {
    pub fn validate(&self, devs: &CellDevices) -> Result<()> {
        if !(self.v_bl > self.v_dl && self.v_dl > 0.0) {
            return Err(Error::InvalidParams(format!(
                "bias needs v_bl > v_dl > 0 (v_bl={}, v_dl={})",
                self.v_bl, self.v_dl
            )));
        }
        let (hi, lo) = (devs.table.levels[0], devs.table.levels[1]);
        if !(self.v_read > lo && self.v_read < hi) {
            return Err(Error::InvalidParams(format!(
                "v_read {} V is outside the window ({lo:.4}, {hi:.4}) V",
                self.v_read
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellState {
    pub stored_digit: u32,
    pub m1_level: usize,
    pub m2_level: usize,
    pub bits_per_cell: u8,
}

/// Maps a stored digit to the (M1, M2) level pair.
///
/// 0 → (0, 1), 1 → (1, 1), X ≥ 2 → (X − 1, 0).
pub fn encode_state(digit: u32, bits: u8) -> Result<CellState> {
    if !(1..=3).contains(&bits) || digit >= 1 << bits {
        return Err(Error::Encoding { digit, bits });
    }
    let (m1_level, m2_level) = match digit {
        0 => (0, 1),
        1 => (1, 1),
        x => (x as usize - 1, 0),
    };
    Ok(CellState { stored_digit: digit, m1_level, m2_level, bits_per_cell: bits })
}

/// Threshold offsets (V) applied to M1, M2 and M3.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Variation {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
}

/// (WL1, WL2) gate voltages for an input bit.
pub fn wordline_voltages(input_bit: bool, bias: &BiasConfig) -> (f64, f64) {
    if input_bit {
        (bias.v_read, bias.v_read)
    } else {
        (bias.v_wl_off, bias.v_read)
    }
}

fn divider_vths(state: &CellState, devs: &CellDevices, var: &Variation) -> Result<(f64, f64)> {
    Ok((
        devs.table.level(state.m1_level)? + var.m1,
        devs.table.level(state.m2_level)? + var.m2,
    ))
}

/// (I_M1, I_M2) at a trial node voltage.
pub fn divider_currents(
    state: &CellState,
    input_bit: bool,
    bias: &BiasConfig,
    t: f64,
    devs: &CellDevices,
    var: &Variation,
    v_s: f64,
) -> Result<(f64, f64)> {
    let (vth1, vth2) = divider_vths(state, devs, var)?;
    let (wl1, wl2) = wordline_voltages(input_bit, bias);
    Ok((
        drain_current(&devs.m1, vth1, wl1 - v_s, bias.v_dl - v_s, t),
        drain_current(&devs.m2, vth2, wl2, v_s, t),
    ))
}

const VS_TOL: f64 = 1e-6;
const REL_TOL: f64 = 1e-9;

/// Internal node voltage by bisection on I_M1 − I_M2 over [0, v_dl].
pub fn solve_node_voltage(
    state: &CellState,
    input_bit: bool,
    bias: &BiasConfig,
    t: f64,
    devs: &CellDevices,
    var: &Variation,
) -> Result<f64> {
    let (vth1, vth2) = divider_vths(state, devs, var)?;
    let (wl1, wl2) = wordline_voltages(input_bit, bias);
    let mismatch = |v: f64| {
        let i1 = drain_current(&devs.m1, vth1, wl1 - v, bias.v_dl - v, t);
        let i2 = drain_current(&devs.m2, vth2, wl2, v, t);
        (i1 - i2, i1.max(i2))
    };
    let (mut lo, mut hi) = (0.0, bias.v_dl);
    let (f_lo, _) = mismatch(lo);
    let (f_hi, _) = mismatch(hi);
    if !(f_lo >= 0.0 && f_hi <= 0.0) {
        return Err(Error::Solver { v_dl: bias.v_dl });
    }
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    loop {
        let mid = 0.5 * (lo + hi);
        let (f, scale) = mismatch(mid);
        if hi - lo < VS_TOL || f.abs() <= REL_TOL * scale {
            return Ok(mid);
        }
        if f > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// SL current of one cell.
pub fn cell_output_current(
    state: &CellState,
    input_bit: bool,
    bias: &BiasConfig,
    t: f64,
    devs: &CellDevices,
    var: &Variation,
) -> Result<f64> {
    let v_s = solve_node_voltage(state, input_bit, bias, t, devs, var)?;
    Ok(output_from_node(v_s, bias, t, devs, var))
}

pub(crate) fn output_from_node(
    v_s: f64,
    bias: &BiasConfig,
    t: f64,
    devs: &CellDevices,
    var: &Variation,
) -> f64 {
    drain_current(&devs.m3, devs.m3_vth + var.m3, v_s - bias.v_sl, bias.v_bl - bias.v_sl, t)
}

/// Variation-free output current for a digit (encoded as a 3-bit cell so
/// every table level is reachable).
pub fn nominal_current(
    digit: u32,
    input_bit: bool,
    bias: &BiasConfig,
    t: f64,
    devs: &CellDevices,
) -> Result<f64> {
    let state = encode_state(digit, 3)?;
    cell_output_current(&state, input_bit, bias, t, devs, &Variation::default())
}

/// M1's drain current at the solved node voltage.
pub fn m1_current(
    state: &CellState,
    input_bit: bool,
    bias: &BiasConfig,
    t: f64,
    devs: &CellDevices,
    var: &Variation,
) -> Result<f64> {
    let v_s = solve_node_voltage(state, input_bit, bias, t, devs, var)?;
    Ok(divider_currents(state, input_bit, bias, t, devs, var, v_s)?.0)
}

fn max_relative_deviation(
    t_grid: &[f64],
    t_ref: f64,
    eval: impl Fn(f64) -> Result<f64>,
) -> Result<f64> {
    let reference = eval(t_ref)?;
    t_grid.iter().try_fold(0.0_f64, |acc, &t| {
        Ok(acc.max((eval(t)? - reference).abs() / reference))
    })
}

/// Largest |I(T) − I(T_ref)| / I(T_ref) over the grid, input 1.
pub fn temperature_fluctuation(
    state: &CellState,
    t_grid: &[f64],
    t_ref: f64,
    bias: &BiasConfig,
    devs: &CellDevices,
) -> Result<f64> {
    let var = Variation::default();
    max_relative_deviation(t_grid, t_ref, |t| cell_output_current(state, true, bias, t, devs, &var))
}

/// The same metric applied to M1's current alone.
pub fn m1_temperature_fluctuation(
    state: &CellState,
    t_grid: &[f64],
    t_ref: f64,
    bias: &BiasConfig,
    devs: &CellDevices,
) -> Result<f64> {
    let var = Variation::default();
    max_relative_deviation(t_grid, t_ref, |t| m1_current(state, true, bias, t, devs, &var))
}

/// Fluctuation at the default 27 °C reference.
pub fn default_fluctuation(
    state: &CellState,
    t_grid: &[f64],
    bias: &BiasConfig,
    devs: &CellDevices,
) -> Result<f64> {
    temperature_fluctuation(state, t_grid, T_REF, bias, devs)
}

/// I_SL against read voltage with both word lines tied to the sweep value.
pub fn cell_iv_sweep(
    state: &CellState,
    v_read_grid: &[f64],
    t: f64,
    bias: &BiasConfig,
    devs: &CellDevices,
) -> Result<Vec<(f64, f64)>> {
    let var = Variation::default();
    v_read_grid
        .iter()
        .map(|&v| {
            if !(-1e-12..=0.6 + 1e-12).contains(&v) {
                return Err(Error::Domain(format!("read voltage {v} V outside [0, 0.6] V")));
            }
            let b = BiasConfig { v_read: v, ..*bias };
            Ok((v, cell_output_current(state, true, &b, t, devs, &var)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoding_table() {
        let s = encode_state(0, 2).unwrap();
        assert_eq!((s.m1_level, s.m2_level), (0, 1));
        let s = encode_state(1, 2).unwrap();
        assert_eq!((s.m1_level, s.m2_level), (1, 1));
        let s = encode_state(2, 2).unwrap();
        assert_eq!((s.m1_level, s.m2_level), (1, 0));
        let s = encode_state(3, 2).unwrap();
        assert_eq!((s.m1_level, s.m2_level), (2, 0));
        let s = encode_state(7, 3).unwrap();
        assert_eq!((s.m1_level, s.m2_level), (6, 0));
        assert!(encode_state(4, 2).is_err());
        assert!(encode_state(2, 1).is_err());
        assert!(encode_state(0, 4).is_err());
    }

    #[test]
    fn input_zero_pulls_node_low() {
        let devs = CellDevices::default();
        let bias = BiasConfig::default();
        for d in 0..4 {
            let s = encode_state(d, 2).unwrap();
            let v = solve_node_voltage(&s, false, &bias, T_REF, &devs, &Variation::default()).unwrap();
            assert!(v < 0.010, "digit {d}: {v}");
        }
        let s = encode_state(0, 2).unwrap();
        let v = solve_node_voltage(&s, true, &bias, T_REF, &devs, &Variation::default()).unwrap();
        assert!(v < 0.010, "digit 0 input 1: {v}");
    }

    #[test]
    fn single_point_grid_has_zero_fluctuation() {
        let devs = CellDevices::default();
        let s = encode_state(2, 2).unwrap();
        let f = temperature_fluctuation(&s, &[T_REF], T_REF, &BiasConfig::default(), &devs).unwrap();
        assert_eq!(f, 0.0);
    }

    #[test]
    fn sweep_rejects_out_of_range() {
        let devs = CellDevices::default();
        let s = encode_state(1, 2).unwrap();
        assert!(cell_iv_sweep(&s, &[0.7], T_REF, &BiasConfig::default(), &devs).is_err());
    }

    #[test]
    fn default_bias_is_valid() {
        BiasConfig::default().validate(&CellDevices::default()).unwrap();
    }
}
