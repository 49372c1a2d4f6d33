use proptest::prelude::*;
use trecim::device_models::*;
use trecim::cell::BiasConfig;

fn params(i_s: f64, xi: f64, w: f64, tc: f64) -> DeviceParams {
    DeviceParams { i_s, xi, w_over_l: w, vth_temp_coeff: tc, polarity: Polarity::N }
}

#[test]
fn thermal_voltage_matches_kt_over_q() {
    for t in [T_MIN, T_REF, T_MAX] {
        let oracle = 1.380649e-23 * t / 1.602177e-19;
        assert!((thermal_voltage(t).unwrap() - oracle).abs() < 1e-15);
    }
    assert!((thermal_voltage(300.0).unwrap() - 0.025852).abs() < 1e-6);
    assert!(thermal_voltage(0.0).is_err());
    assert!(thermal_voltage(-5.0).is_err());
}

#[test]
fn default_grid_spans_zero_to_85c() {
    let g = default_temperature_grid();
    assert_eq!(g.len(), 18);
    assert!((g[0] - 273.15).abs() < 1e-12);
    assert!((g[17] - 358.15).abs() < 1e-12);
    let step = g[1] - g[0];
    assert!(g.windows(2).all(|w| ((w[1] - w[0]) - step).abs() < 1e-9));
}

#[test]
fn write_pulses_round_trip() {
    let table = CellDevices::calibrated().table;
    assert_eq!(table.levels.len(), 8);
    for &(pulse, level) in &table.write_voltage_map {
        assert_eq!(program_level(pulse, &table).unwrap(), level);
        assert_eq!(program_level(pulse + 0.009, &table).unwrap(), level);
    }
    assert!(program_level(1.7, &table).is_err());
    // Level 0 is the highest threshold, levels descend evenly after level 1.
    assert!(table.levels.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn calibration_recovers_targets_from_perturbed_start() {
    let mut start = CellDevices::calibrated();
    start.m3.xi = 2.3;
    start.m3.i_s = 3e-6;
    let bias = BiasConfig::default();
    let cal = calibrate_cell(&CalibrationTargets::default(), &start, &bias).unwrap();
    let (ratio, r_on) = cell_figures(&cal.devices, &bias).unwrap();
    assert!((ratio / 238.0 - 1.0).abs() < 1e-6, "{ratio}");
    assert!((r_on / 118e3 - 1.0).abs() < 1e-6, "{r_on}");
    let shipped = CellDevices::calibrated();
    assert!((cal.devices.m3.xi / shipped.m3.xi - 1.0).abs() < 1e-6);
    assert!((cal.devices.m3.i_s / shipped.m3.i_s - 1.0).abs() < 1e-6);
}

#[test]
fn unreachable_ratio_reports_residual() {
    let t = CalibrationTargets { on_off_ratio: 1e12, ..Default::default() };
    match calibrate_cell(&t, &CellDevices::calibrated(), &BiasConfig::default()) {
        Err(trecim::Error::CalibrationFailed { best_residual, .. }) => assert!(best_residual > 0.0),
        other => panic!("expected calibration failure, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn current_strictly_increasing_in_vgs(
        i_s in 1e-9f64..1e-5, xi in 1.0f64..2.5, w in 0.1f64..50.0,
        vth in -0.2f64..1.0, vds in 0.01f64..1.0, t in T_MIN..T_MAX,
    ) {
        let p = params(i_s, xi, w, -1e-3);
        let mut prev = f64::NEG_INFINITY;
        for n in 0..=170 {
            let vgs = -0.5 + 0.01 * n as f64;
            let i = drain_current(&p, vth, vgs, vds, t);
            prop_assert!(i > prev, "vgs={vgs}: {i} <= {prev}");
            prev = i;
        }
    }

    #[test]
    fn lower_level_conducts_more(level in 1usize..8, vgs in 0.0f64..0.6, vds in 0.05f64..0.5, t in T_MIN..T_MAX) {
        let devs = CellDevices::calibrated();
        let hi = drain_current(&devs.m1, devs.table.levels[level - 1], vgs, vds, t);
        let lo = drain_current(&devs.m1, devs.table.levels[level], vgs, vds, t);
        prop_assert!(lo > hi);
    }

    #[test]
    fn subthreshold_slope(xi in 1.0f64..2.5, vth in 0.0f64..0.8, t in T_MIN..T_MAX) {
        let p = params(1e-6, xi, 1.0, 0.0);
        let vt = thermal_voltage(t).unwrap();
        let top = vth - 4.0 * xi * vt;
        let bottom = vth - 20.0 * xi * vt;
        let pts: Vec<(f64, f64)> = (0..=40)
            .map(|n| {
                let v = bottom + (top - bottom) * n as f64 / 40.0;
                (v, drain_current(&p, vth, v, 0.5, t).log10())
            })
            .collect();
        let n = pts.len() as f64;
        let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        let expected = 1.0 / (xi * vt * std::f64::consts::LN_10);
        prop_assert!((slope / expected - 1.0).abs() < 0.02, "{slope} vs {expected}");
    }

    #[test]
    fn subthreshold_current_rises_with_temperature(
        vth in 0.2f64..0.8, depth in 0.05f64..0.2, t in T_MIN..(T_MAX - 1.0), dt in 1.0f64..20.0,
    ) {
        let p = params(1e-6, 1.1, 1.0, -1e-3);
        let vgs = vth - depth;
        let a = drain_current(&p, vth, vgs, 0.3, t);
        let b = drain_current(&p, vth, vgs, 0.3, (t + dt).min(T_MAX));
        prop_assert!(b > a);
    }

    #[test]
    fn p_type_mirrors_n_type(vgs in -0.5f64..1.0, vds in 0.0f64..1.0, vth in 0.0f64..0.6) {
        let n = params(1e-6, 1.2, 2.0, -1e-3);
        let p = DeviceParams { polarity: Polarity::P, ..n };
        let a = drain_current(&n, vth, vgs, vds, T_REF);
        let b = drain_current(&p, -vth, -vgs, -vds, T_REF);
        prop_assert!((a + b).abs() <= 1e-12 * a.abs().max(1e-30));
    }
}
