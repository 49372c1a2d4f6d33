#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trecim::cell::{divider_currents, encode_state, solve_node_voltage, BiasConfig, Variation};
use trecim::device_models::{CellDevices, T_MAX, T_MIN};

/// Node voltage minimising |I_M1 − I_M2| on a 10 µV grid over [0, v_dl].
pub fn brute_force_node(
    digit: u32,
    input: bool,
    bias: &BiasConfig,
    t: f64,
    devs: &CellDevices,
    var: &Variation,
) -> f64 {
    let state = encode_state(digit, 3).unwrap();
    let steps = (bias.v_dl / 10e-6).round() as usize;
    let mut best = (f64::INFINITY, 0.0);
    for n in 0..=steps {
        let v = bias.v_dl * n as f64 / steps as f64;
        let (i1, i2) = divider_currents(&state, input, bias, t, devs, var, v).unwrap();
        let m = (i1 - i2).abs();
        if m < best.0 {
            best = (m, v);
        }
    }
    best.1
}

pub struct SolverCase {
    pub digit: u32,
    pub input: bool,
    pub t: f64,
    pub var: Variation,
}

pub fn solver_cases(n: usize, seed: u64) -> Vec<SolverCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| SolverCase {
            digit: rng.random_range(0..8),
            input: rng.random_bool(0.75),
            t: rng.random_range(T_MIN..=T_MAX),
            var: Variation { m1: rng.random_range(-0.1..0.1), m2: rng.random_range(-0.1..0.1), m3: 0.0 },
        })
        .collect()
}

/// Largest |bisection − grid| over the cases, in volts.
pub fn solver_max_error(cases: &[SolverCase]) -> f64 {
    let devs = CellDevices::calibrated();
    let bias = BiasConfig::default();
    cases
        .iter()
        .map(|c| {
            let state = encode_state(c.digit, 3).unwrap();
            let v = solve_node_voltage(&state, c.input, &bias, c.t, &devs, &c.var).unwrap();
            (v - brute_force_node(c.digit, c.input, &bias, c.t, &devs, &c.var)).abs()
        })
        .fold(0.0, f64::max)
}

/// Least-squares R² of y against x.
pub fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if syy == 0.0 {
        return 1.0;
    }
    sxy * sxy / (sxx * syy)
}

/// Direct Σ_i w[o][i]·a[i] from signed weights.
pub fn int_matvec(w: &[i32], out: usize, inp: usize, a: &[u8]) -> Vec<i64> {
    (0..out)
        .map(|o| (0..inp).map(|i| w[o * inp + i] as i64 * a[i] as i64).sum())
        .collect()
}
