//! Compact current models for FeFETs and MOSFETs.
//!
//! A single EKV-style expression covers subthreshold and strong inversion so
//! the node solver never sees a seam between regions. Threshold voltages drift
//! linearly with temperature around 300.15 K.

use serde::{Deserialize, Serialize};

use crate::cell::{self, BiasConfig};
use crate::error::{Error, Result};

/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.380649e-23;
/// Elementary charge (C).
pub const ELEMENTARY_CHARGE: f64 = 1.602177e-19;
/// Reference temperature for threshold voltages and nominal outputs (27 °C).
pub const T_REF: f64 = 300.15;
/// Lower edge of the supported sweep range (0 °C).
pub const T_MIN: f64 = 273.15;
/// Upper edge of the supported sweep range (85 °C).
pub const T_MAX: f64 = 358.15;

/// Thermal voltage kT/q.
pub fn thermal_voltage(t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("temperature must be positive, got {t} K")));
    }
    Ok(vt(t))
}

#[inline]
pub(crate) fn vt(t: f64) -> f64 {
    BOLTZMANN * t / ELEMENTARY_CHARGE
}

/// Linear threshold drift around 300.15 K.
pub fn vth_at_temperature(vth_300: f64, coeff: f64, t: f64) -> f64 {
    vth_300 + coeff * (t - T_REF)
}

/// Kelvin wrapper used by configuration and sweep code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thermal {
    pub temperature: f64,
}

impl Thermal {
    pub fn from_celsius(c: f64) -> Self {
        Thermal { temperature: c + 273.15 }
    }

    pub fn celsius(&self) -> f64 {
        self.temperature - 273.15
    }

    pub fn in_supported_range(&self) -> bool {
        (T_MIN - 1e-9..=T_MAX + 1e-9).contains(&self.temperature)
    }
}

/// Uniform temperature grid with `points` samples over `[lo, hi]` (Kelvin).
pub fn temperature_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        n => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// The default 18-point 0–85 °C grid.
pub fn default_temperature_grid() -> Vec<f64> {
    temperature_grid(T_MIN, T_MAX, 18)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    #[default]
    N,
    P,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    /// Current scale (A).
    pub i_s: f64,
    /// Subthreshold slope factor.
    pub xi: f64,
    pub w_over_l: f64,
    /// Threshold drift (V/K).
    pub vth_temp_coeff: f64,
    #[serde(default)]
    pub polarity: Polarity,
}

impl DeviceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.i_s > 0.0) || !(self.xi >= 1.0) || !(self.w_over_l > 0.0) {
            return Err(Error::InvalidParams(format!(
                "need i_s > 0, xi >= 1, w_over_l > 0; got i_s={}, xi={}, w_over_l={}",
                self.i_s, self.xi, self.w_over_l
            )));
        }
        Ok(())
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Drain current of one transistor.
///
/// `vth` is the 300.15 K threshold; the device's temperature coefficient is
/// applied internally. P-type devices mirror all voltages and return a
/// negative (source-to-drain) current.
pub fn drain_current(p: &DeviceParams, vth: f64, v_gs: f64, v_ds: f64, t: f64) -> f64 {
    let (vth, v_gs, v_ds, sign) = match p.polarity {
        Polarity::N => (vth, v_gs, v_ds, 1.0),
        Polarity::P => (-vth, -v_gs, -v_ds, -1.0),
    };
    let v_t = vt(t);
    let vth_t = vth_at_temperature(vth, p.vth_temp_coeff, t);
    let inv = softplus((v_gs - vth_t) / (2.0 * p.xi * v_t));
    sign * p.i_s * p.w_over_l * inv * inv * -(-v_ds / v_t).exp_m1()
}

/// Threshold-voltage levels of a multi-level FeFET plus the write pulses that
/// program them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VthTable {
    /// Index 0 is the erased (highest) level; higher indices have lower VTH.
    pub levels: Vec<f64>,
    /// (write-pulse amplitude in V, level index), sorted by amplitude.
    pub write_voltage_map: Vec<(f64, usize)>,
}

/// Nearest-amplitude tolerance used by [`program_level`].
pub const WRITE_PULSE_TOLERANCE: f64 = 0.010;

impl VthTable {
    /// Builds a table from the level-1 threshold, the level-0/level-1 memory
    /// window and a uniform spacing for levels 2.. .
    ///
    /// Write pulses: −4 V erases to level 0, +4 V programs level 1 and each
    /// further 130 mV of amplitude moves one MLC level down.
    pub fn mlc(level1: f64, window: f64, spacing: f64, count: usize) -> Result<Self> {
        if count < 2 || !(window > 0.0) || (count > 2 && !(spacing > 0.0)) {
            return Err(Error::InvalidParams(format!(
                "VthTable needs count >= 2 and positive window/spacing (count={count}, window={window}, spacing={spacing})"
            )));
        }
        let mut levels = vec![level1 + window, level1];
        levels.extend((1..count - 1).map(|i| level1 - spacing * i as f64));
        let mut write_voltage_map = vec![(-4.0, 0)];
        write_voltage_map.extend((1..count).map(|i| (4.0 + 0.13 * (i - 1) as f64, i)));
        Ok(VthTable { levels, write_voltage_map })
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.len() < 2 || self.levels.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::InvalidParams(
                "VTH levels must be strictly decreasing with index".into(),
            ));
        }
        if self.write_voltage_map.iter().any(|&(_, l)| l >= self.levels.len()) {
            return Err(Error::InvalidParams("write map points past the last level".into()));
        }
        Ok(())
    }

    pub fn memory_window(&self) -> f64 {
        self.levels[0] - self.levels[1]
    }

    pub fn level(&self, index: usize) -> Result<f64> {
        self.levels
            .get(index)
            .copied()
            .ok_or_else(|| Error::InvalidParams(format!("VTH level {index} not in table")))
    }
}

/// Maps a write-pulse amplitude to the level it programs.
pub fn program_level(write_pulse: f64, table: &VthTable) -> Result<usize> {
    table
        .write_voltage_map
        .iter()
        .map(|&(v, l)| ((v - write_pulse).abs(), l))
        .filter(|&(d, _)| d <= WRITE_PULSE_TOLERANCE + 1e-12)
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, l)| l)
        .ok_or(Error::UnmappedPulse(write_pulse))
}

/// Every device in a 2FeFET-1T cell.
///
/// M1 and M2 are FeFETs sharing one threshold table; M3 is a plain MOSFET
/// whose gate is the clamped internal node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDevices {
    pub m1: DeviceParams,
    pub m2: DeviceParams,
    pub m3: DeviceParams,
    pub m3_vth: f64,
    pub table: VthTable,
}

impl CellDevices {
    /// Shipped device set; M3's `i_s` and `xi` are the output of
    /// [`calibrate_cell`] against the default targets.
    pub fn calibrated() -> Self {
        let fefet = |w_over_l| DeviceParams {
            i_s: 1.0e-6,
            xi: 1.0540425031177125,
            w_over_l,
            vth_temp_coeff: -1.0e-3,
            polarity: Polarity::N,
        };
        CellDevices {
            m1: fefet(25.859027595233307),
            m2: fefet(1.0),
            m3: DeviceParams {
                i_s: 4.663954935675413e-7,
                xi: 1.4399742789287984,
                w_over_l: 1.0,
                vth_temp_coeff: 0.0,
                polarity: Polarity::N,
            },
            m3_vth: 0.1344998112805386,
            table: VthTable::mlc(-0.025748194652065255, 0.38, 0.05246886563774793, 8)
                .expect("static table"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.m1.validate()?;
        self.m2.validate()?;
        self.m3.validate()?;
        self.table.validate()
    }
}

impl Default for CellDevices {
    fn default() -> Self {
        Self::calibrated()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTargets {
    pub on_off_ratio: f64,
    pub r_on_ohms: f64,
    pub v_read: f64,
}

impl Default for CalibrationTargets {
    fn default() -> Self {
        CalibrationTargets { on_off_ratio: 238.0, r_on_ohms: 118e3, v_read: 0.35 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub devices: CellDevices,
    /// Relative error of the fitted on/off ratio.
    pub ratio_residual: f64,
    /// Relative error of the fitted on-resistance.
    pub r_on_residual: f64,
    pub iterations: usize,
}

/// Cell-level figures at the calibration point: (on/off ratio, on-resistance).
///
/// "On" is a stored 1 read with input 1, "off" a stored 0 read with input 1.
pub fn cell_figures(devs: &CellDevices, bias: &BiasConfig) -> Result<(f64, f64)> {
    let on = cell::nominal_current(1, true, bias, T_REF, devs)?;
    let off = cell::nominal_current(0, true, bias, T_REF, devs)?;
    Ok((on / off, bias.v_read / on))
}

const CAL_MAX_ITER: usize = 200;

/// Fits M3's current scale and slope factor so the full cell at 27 °C hits
/// the target on/off ratio and on-resistance.
///
/// The internal node does not depend on M3, so the ratio depends on `xi`
/// alone and the on-resistance is linear in `i_s`: an outer bisection on
/// ln(xi) followed by a closed-form `i_s` update, repeated until both
/// residuals are below 1e-9.
pub fn calibrate_cell(
    targets: &CalibrationTargets,
    start: &CellDevices,
    bias: &BiasConfig,
) -> Result<Calibration> {
    if !(targets.on_off_ratio > 1.0) || !(targets.r_on_ohms > 0.0) || !(targets.v_read > 0.0) {
        return Err(Error::Domain("calibration targets must be positive (ratio > 1)".into()));
    }
    start.validate()?;
    let bias = BiasConfig { v_read: targets.v_read, ..*bias };
    let mut devs = start.clone();
    let ratio_at = |devs: &mut CellDevices, xi: f64| -> Result<f64> {
        devs.m3.xi = xi;
        Ok(cell_figures(devs, &bias)?.0)
    };

    // Ratio falls monotonically with xi.
    let (mut lo, mut hi) = (0.0_f64, 60.0_f64.ln());
    let r_lo = ratio_at(&mut devs, lo.exp())?;
    let r_hi = ratio_at(&mut devs, hi.exp())?;
    if !(r_lo >= targets.on_off_ratio && r_hi <= targets.on_off_ratio) {
        let best = if r_lo < targets.on_off_ratio { r_lo } else { r_hi };
        return Err(Error::CalibrationFailed {
            best_residual: (best / targets.on_off_ratio - 1.0).abs(),
            reason: format!(
                "on/off ratio {:.4} not reachable: M3 slope range gives [{r_hi:.4}, {r_lo:.4}]",
                targets.on_off_ratio
            ),
        });
    }
    let mut iterations = 0;
    let mut ratio_res = f64::INFINITY;
    while iterations < CAL_MAX_ITER {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let r = ratio_at(&mut devs, mid.exp())?;
        ratio_res = r / targets.on_off_ratio - 1.0;
        if ratio_res.abs() < 1e-10 || hi - lo < 1e-15 {
            break;
        }
        if r > targets.on_off_ratio {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if ratio_res.abs() > 1e-6 {
        return Err(Error::CalibrationFailed {
            best_residual: ratio_res.abs(),
            reason: "on/off bisection hit the iteration cap".into(),
        });
    }

    // On-current is proportional to i_s; a couple of passes absorb roundoff.
    let mut r_on_res = f64::INFINITY;
    for _ in 0..4 {
        let (_, r_on) = cell_figures(&devs, &bias)?;
        devs.m3.i_s *= r_on / targets.r_on_ohms;
        let (_, r_on) = cell_figures(&devs, &bias)?;
        r_on_res = r_on / targets.r_on_ohms - 1.0;
        if r_on_res.abs() < 1e-12 {
            break;
        }
    }
    let (ratio, _) = cell_figures(&devs, &bias)?;
    Ok(Calibration {
        devices: devs,
        ratio_residual: (ratio / targets.on_off_ratio - 1.0).abs(),
        r_on_residual: r_on_res.abs(),
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nmos() -> DeviceParams {
        DeviceParams { i_s: 1e-6, xi: 1.5, w_over_l: 1.0, vth_temp_coeff: -1e-3, polarity: Polarity::N }
    }

    #[test]
    fn thermal_voltage_values() {
        assert!((thermal_voltage(300.15).unwrap() - 25.864e-3).abs() < 1e-6);
        assert!((thermal_voltage(273.15).unwrap() - 23.538e-3).abs() < 1e-6);
        assert!(thermal_voltage(0.0).is_err());
        assert!(thermal_voltage(-3.0).is_err());
    }

    #[test]
    fn vth_drift() {
        assert_eq!(vth_at_temperature(0.5, -1e-3, 300.15), 0.5);
        assert!((vth_at_temperature(0.5, -1e-3, 358.15) - 0.442).abs() < 1e-12);
        assert_eq!(vth_at_temperature(0.5, 0.0, 211.0), 0.5);
    }

    #[test]
    fn zero_vds_gives_zero_current() {
        assert_eq!(drain_current(&nmos(), 0.4, 0.9, 0.0, 300.0), 0.0);
    }

    #[test]
    fn decade_per_swing_in_deep_subthreshold() {
        let p = nmos();
        let v_t = vt(T_REF);
        let v_gs = 0.4 - 20.0 * p.xi * v_t;
        let a = drain_current(&p, 0.4, v_gs, 0.5, T_REF);
        let b = drain_current(&p, 0.4, v_gs + p.xi * v_t * 10f64.ln(), 0.5, T_REF);
        assert!((b / a - 10.0).abs() < 0.1, "ratio {}", b / a);
    }

    #[test]
    fn pmos_mirrors_nmos() {
        let n = nmos();
        let p = DeviceParams { polarity: Polarity::P, ..n };
        let i_n = drain_current(&n, 0.3, 0.5, 0.2, 320.0);
        let i_p = drain_current(&p, -0.3, -0.5, -0.2, 320.0);
        assert!((i_n + i_p).abs() < 1e-20);
    }

    #[test]
    fn write_pulses() {
        let t = CellDevices::calibrated().table;
        assert_eq!(program_level(-4.0, &t).unwrap(), 0);
        assert_eq!(program_level(4.0, &t).unwrap(), 1);
        assert_eq!(program_level(4.13, &t).unwrap(), 2);
        assert_eq!(program_level(4.135, &t).unwrap(), 2);
        assert!(matches!(program_level(4.07, &t), Err(Error::UnmappedPulse(_))));
        assert!(program_level(0.0, &t).is_err());
    }

    #[test]
    fn table_shape() {
        let t = VthTable::mlc(0.1, 1.3, 0.5 / 6.0, 8).unwrap();
        t.validate().unwrap();
        assert_eq!(t.levels.len(), 8);
        assert!((t.memory_window() - 1.3).abs() < 1e-12);
        assert!((t.levels[1] - t.levels[7] - 0.5).abs() < 1e-12);
        assert!(VthTable::mlc(0.1, -0.2, 0.1, 8).is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(DeviceParams { xi: 0.5, ..nmos() }.validate().is_err());
        assert!(DeviceParams { i_s: 0.0, ..nmos() }.validate().is_err());
    }
}
