use proptest::prelude::*;
use trecim::array::*;
use trecim::cell::{cell_output_current, encode_state, BiasConfig, Variation};
use trecim::device_models::{default_temperature_grid, temperature_grid, CellDevices, T_MAX, T_MIN, T_REF};

fn binary() -> ArrayConfig {
    ArrayConfig { bits_per_cell: 1, ..Default::default() }
}

#[test]
fn levels_non_decreasing_for_every_digit_and_temperature() {
    let devs = CellDevices::calibrated();
    let cfg = ArrayConfig::default();
    for t in temperature_grid(T_MIN, T_MAX, 6) {
        for digit in 0..4 {
            let set = enumerate_mac_levels(&cfg, digit, &[t], &devs).unwrap();
            assert!(set.levels.windows(2).all(|w| w[1].min >= w[0].min), "digit {digit} at {t} K");
            assert!(set.levels.iter().all(|l| l.min == l.max));
        }
        let set = enumerate_mac_levels(&cfg, 1, &[t], &devs).unwrap();
        assert!(set.nominals().windows(2).all(|w| w[1] >= w[0]));
    }
}

#[test]
fn refining_the_grid_never_raises_nmr() {
    let devs = CellDevices::calibrated();
    let coarse = temperature_grid(T_MIN, T_MAX, 4);
    let fine = temperature_grid(T_MIN, T_MAX, 7);
    assert!(coarse.iter().all(|c| fine.iter().any(|f| (f - c).abs() < 1e-9)));
    for (cfg, digit) in [(binary(), 1), (ArrayConfig::default(), 2), (ArrayConfig::default(), 3)] {
        let a = compute_nmr(&enumerate_mac_levels(&cfg, digit, &coarse, &devs).unwrap(), NmrPolicy::default()).unwrap();
        let b = compute_nmr(&enumerate_mac_levels(&cfg, digit, &fine, &devs).unwrap(), NmrPolicy::default()).unwrap();
        assert!(b.nmr_min <= a.nmr_min, "digit {digit}: {} > {}", b.nmr_min, a.nmr_min);
    }
}

#[test]
fn binary_margin_beats_two_bit() {
    let devs = CellDevices::calibrated();
    let grid = default_temperature_grid();
    let (_, bin) = worst_case_nmr(&binary(), &grid, &devs, NmrPolicy::default()).unwrap();
    let (_, two) = worst_case_nmr(&ArrayConfig::default(), &grid, &devs, NmrPolicy::default()).unwrap();
    assert!(bin.nmr_min > 0.0 && two.nmr_min < 0.0 && bin.nmr_min > two.nmr_min);
}

#[test]
fn nmr_hand_computed() {
    let lv = |k, min, max| MacLevel { k, min, max, nominal: 0.5 * (min + max) };
    let set = MacLevelSet {
        digit: 1,
        rows: 2,
        t_grid: vec![T_REF],
        levels: vec![lv(0, 0.0, 1.0), lv(1, 2.0, 4.0), lv(2, 3.5, 4.5)],
    };
    let r = compute_nmr(&set, NmrPolicy::GapOverUpperSpread).unwrap();
    assert_eq!(r.values, vec![0.5, -0.5]);
    assert_eq!((r.nmr_min, r.argmin), (-0.5, 2));
    let r = compute_nmr(&set, NmrPolicy::GapOverLowerSpread).unwrap();
    assert_eq!(r.values, vec![1.0, -0.25]);
    let r = compute_nmr(&set, NmrPolicy::GapOverMeanSpread).unwrap();
    assert!((r.values[0] - 1.0 / 1.5).abs() < 1e-15);
}

#[test]
fn improvement_ratio() {
    assert_eq!(nmr_improvement(0.29, -0.57).unwrap(), (0.29 + 1.0) / (-0.57 + 1.0));
    assert!((nmr_improvement(0.29, -0.57).unwrap() - 3.0).abs() < 1e-12);
    assert!(nmr_improvement(0.5, -1.0).is_err());
}

#[test]
fn empty_grid_rejected() {
    assert!(enumerate_mac_levels(&ArrayConfig::default(), 1, &[], &CellDevices::calibrated()).is_err());
    assert!(baseline_mac_levels(8, &[], &Baseline1F1R::default()).is_err());
}

#[test]
fn baseline_is_more_temperature_sensitive() {
    let grid = default_temperature_grid();
    let base = baseline_fluctuation(&grid, &Baseline1F1R::default()).unwrap();
    let devs = CellDevices::calibrated();
    let s = encode_state(1, 1).unwrap();
    let ours = trecim::cell::default_fluctuation(&s, &grid, &BiasConfig::default(), &devs).unwrap();
    assert!(ours < base, "{ours} vs {base}");
    let b = Baseline1F1R::default();
    let on = baseline_1f1r_output(true, true, T_REF, &b).unwrap();
    let off = baseline_1f1r_output(false, true, T_REF, &b).unwrap();
    assert!(on > 10.0 * off);
}

#[test]
fn monte_carlo_is_schedule_independent() {
    let devs = CellDevices::calibrated();
    let mc = MonteCarloConfig { runs: 60, seed: 42, ..Default::default() };
    let cfg = ArrayConfig::default();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| monte_carlo_mac(&cfg, 2, &mc, &devs).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a, b);
    assert_eq!(a.currents.iter().map(|c| c.to_bits()).collect::<Vec<_>>(), b.currents.iter().map(|c| c.to_bits()).collect::<Vec<_>>());
    let c = monte_carlo_mac(&cfg, 2, &MonteCarloConfig { seed: 43, ..mc }, &devs).unwrap();
    assert_ne!(a.currents, c.currents);
}

#[test]
fn monte_carlo_without_variation_has_no_spread() {
    let devs = CellDevices::calibrated();
    let mc = MonteCarloConfig { runs: 20, sigma_vt: 0.0, ..Default::default() };
    for digit in 1..4 {
        let r = monte_carlo_mac(&ArrayConfig::default(), digit, &mc, &devs).unwrap();
        assert_eq!(r.std, 0.0);
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.nominal_code, 7);
        assert!(r.currents.iter().all(|&c| c == r.nominal_current));
    }
}

#[test]
fn monte_carlo_rejects_zero_runs() {
    let mc = MonteCarloConfig { runs: 0, ..Default::default() };
    assert!(monte_carlo_mac(&ArrayConfig::default(), 1, &mc, &CellDevices::calibrated()).is_err());
}

#[test]
fn config_bounds() {
    assert!(ArrayConfig { rows: 4, ..Default::default() }.validate().is_err());
    assert!(ArrayConfig { rows: 512, ..Default::default() }.validate().is_err());
    assert!(ArrayConfig { cols: 0, ..Default::default() }.validate().is_err());
    ArrayConfig { rows: 256, ..Default::default() }.validate().unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn column_is_sum_of_cells(
        cells in prop::collection::vec((0u32..4, any::<bool>(), -0.08f64..0.08, -0.08f64..0.08, -0.02f64..0.02), 1..32),
        t in T_MIN..T_MAX,
    ) {
        let devs = CellDevices::calibrated();
        let bias = BiasConfig::default();
        let states: Vec<_> = cells.iter().map(|c| encode_state(c.0, 2).unwrap()).collect();
        let inputs: Vec<bool> = cells.iter().map(|c| c.1).collect();
        let vars: Vec<Variation> = cells.iter().map(|c| Variation { m1: c.2, m2: c.3, m3: c.4 }).collect();
        let col = column_mac(&states, &inputs, t, &vars, &bias, &devs).unwrap();
        let sum: f64 = states
            .iter()
            .zip(&inputs)
            .zip(&vars)
            .map(|((s, &x), v)| cell_output_current(s, x, &bias, t, &devs, v).unwrap())
            .sum();
        prop_assert!((col - sum).abs() <= 1e-3 * sum.abs());
    }

    #[test]
    fn column_shape_mismatch_errors(n in 1usize..10, m in 1usize..10) {
        prop_assume!(n != m);
        let devs = CellDevices::calibrated();
        let s = vec![encode_state(1, 2).unwrap(); n];
        let x = vec![true; m];
        prop_assert!(column_mac(&s, &x, T_REF, &[], &BiasConfig::default(), &devs).is_err());
    }
}
