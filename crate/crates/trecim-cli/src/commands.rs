//! One function per subcommand. Each returns after writing its outputs.

use serde_json::{json, Value};
use trecim::array::{
    baseline_fluctuation, baseline_mac_levels, compute_nmr, enumerate_mac_levels, monte_carlo_mac, nmr_improvement,
    ArrayConfig, Baseline1F1R, MacLevelSet, MonteCarloConfig, NmrPolicy, NmrReport,
};
use trecim::cell::{
    cell_iv_sweep, encode_state, m1_current, temperature_fluctuation, m1_temperature_fluctuation, nominal_current,
    cell_output_current, BiasConfig, Variation,
};
use trecim::device_models::{calibrate_cell, cell_figures, drain_current, CellDevices, T_REF};
use trecim::nn_engine::{
    infer, software_accuracy, weight_state_frequencies, Dataset, FidelityMode, InferenceConfig, MappedNetwork,
};
use trecim::perf_model::{
    measure_row_groups, reference_array_shape, workload_perf, workload_perf_shapes, PerfConfig, PerfReport,
};

use crate::config::{devices_to_toml, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::output::{num, OutputDir};

pub struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    pub devices: CellDevices,
    pub out: OutputDir,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn array_config(cfg: &ExperimentConfig, bits_per_cell: u8) -> ArrayConfig {
    ArrayConfig {
        rows: cfg.array.rows,
        cols: cfg.array.cols,
        bits_per_cell,
        bias: cfg.bias.to_bias(),
        adc_sharing: cfg.array.adc_sharing,
    }
}

fn bias(ctx: &Context) -> CliResult<BiasConfig> {
    let b = ctx.cfg.bias.to_bias();
    b.validate(&ctx.devices).map_err(|e| CliError::usage("bias", e.to_string()))?;
    Ok(b)
}

fn celsius_label(t: f64) -> String {
    format!("{:.2}C", t - 273.15).replace('-', "m")
}

pub fn device_sweep(ctx: &mut Context) -> CliResult<()> {
    let cfg = ctx.cfg;
    let b = bias(ctx)?;
    let devs = &ctx.devices;
    let grid = cfg.temperature.grid();
    let vgs = linspace(cfg.device.vgs_min, cfg.device.vgs_max, cfg.device.vgs_points);
    let levels = &devs.table.levels;
    let mut header = vec!["v_gs_V".to_string()];
    header.extend((0..levels.len()).map(|l| format!("i_d_level{l}_A")));
    let mut device_ratio = Vec::new();
    for &t in &grid {
        let rows: Vec<Vec<String>> = vgs
            .iter()
            .map(|&v| {
                let mut r = vec![num(v)];
                r.extend(levels.iter().map(|&vth| num(drain_current(&devs.m2, vth, v, cfg.device.vds, t))));
                r
            })
            .collect();
        ctx.out.csv(&format!("device_iv_{}.csv", celsius_label(t)), &header, &rows)?;
        let on = drain_current(&devs.m2, levels[1], b.v_read, cfg.device.vds, t);
        let off = drain_current(&devs.m2, levels[0], b.v_read, cfg.device.vds, t);
        device_ratio.push(json!({ "temperature_K": t, "on_off_ratio": on / off }));
    }
    let (ratio, r_on) = cell_figures(devs, &b)?;
    ctx.out.json(
        "device_sweep.json",
        json!({
            "temperatures_K": grid,
            "v_read_V": b.v_read,
            "v_ds_V": cfg.device.vds,
            "cell_on_off_ratio": ratio,
            "cell_r_on_ohms": r_on,
            "device_on_off_at_v_read": device_ratio,
        }),
    )
}

pub fn cell_sweep(ctx: &mut Context) -> CliResult<()> {
    let cfg = ctx.cfg;
    let b = bias(ctx)?;
    let devs = &ctx.devices;
    let bits = cfg.array.bits_per_cell;
    let digits: Vec<u32> = (0..1u32 << bits).collect();
    let states: Vec<_> = digits.iter().map(|&d| encode_state(d, bits)).collect::<trecim::Result<_>>()?;

    let v_grid = linspace(cfg.sweep.v_read_min, cfg.sweep.v_read_max, cfg.sweep.points);
    let t_ref = cfg.temperature.reference();
    let curves: Vec<Vec<(f64, f64)>> =
        states.iter().map(|s| cell_iv_sweep(s, &v_grid, t_ref, &b, devs)).collect::<trecim::Result<_>>()?;
    let mut header = vec!["v_read_V".to_string()];
    header.extend(digits.iter().map(|d| format!("i_sl_digit{d}_A")));
    let rows: Vec<Vec<String>> = (0..v_grid.len())
        .map(|i| {
            let mut r = vec![num(v_grid[i])];
            r.extend(curves.iter().map(|c| num(c[i].1)));
            r
        })
        .collect();
    ctx.out.csv("cell_iv.csv", &header, &rows)?;

    let grid = cfg.temperature.grid();
    let zero = Variation::default();
    let mut header = vec!["temperature_K".to_string()];
    header.extend(digits.iter().map(|d| format!("rel_dev_digit{d}")));
    header.extend(digits.iter().map(|d| format!("rel_dev_m1_digit{d}")));
    let reference: Vec<(f64, f64)> = states
        .iter()
        .map(|s| Ok((cell_output_current(s, true, &b, t_ref, devs, &zero)?, m1_current(s, true, &b, t_ref, devs, &zero)?)))
        .collect::<trecim::Result<_>>()?;
    let mut rows = Vec::with_capacity(grid.len());
    for &t in &grid {
        let mut r = vec![num(t)];
        let mut m1 = Vec::new();
        for (s, &(i_ref, m_ref)) in states.iter().zip(&reference) {
            r.push(num((cell_output_current(s, true, &b, t, devs, &zero)? - i_ref) / i_ref));
            m1.push(num((m1_current(s, true, &b, t, devs, &zero)? - m_ref) / m_ref));
        }
        r.extend(m1);
        rows.push(r);
    }
    ctx.out.csv("cell_fluctuation.csv", &header, &rows)?;

    let fl: Vec<f64> =
        states.iter().map(|s| temperature_fluctuation(s, &grid, t_ref, &b, devs)).collect::<trecim::Result<_>>()?;
    let m1: Vec<f64> =
        states.iter().map(|s| m1_temperature_fluctuation(s, &grid, t_ref, &b, devs)).collect::<trecim::Result<_>>()?;
    let on: Vec<f64> =
        digits.iter().map(|&d| nominal_current(d, true, &b, t_ref, devs)).collect::<trecim::Result<_>>()?;
    ctx.out.json(
        "cell_sweep.json",
        json!({
            "bits_per_cell": bits,
            "reference_temperature_K": t_ref,
            "temperatures_K": grid,
            "fluctuation": fl,
            "m1_fluctuation": m1,
            "output_current_A": on,
        }),
    )
}

fn level_rows(set: &MacLevelSet, report: &NmrReport) -> Vec<Vec<String>> {
    set.levels
        .iter()
        .map(|l| {
            let nmr = if l.k == 0 { String::new() } else { num(report.values[l.k - 1]) };
            vec![l.k.to_string(), num(l.min), num(l.max), num(l.nominal), nmr]
        })
        .collect()
}

pub fn nmr(ctx: &mut Context) -> CliResult<()> {
    let cfg = ctx.cfg;
    bias(ctx)?;
    let header: Vec<String> =
        ["k", "t_min_current", "t_max_current", "nominal", "nmr"].iter().map(|s| s.to_string()).collect();
    let policy = NmrPolicy::default();
    let mut summary = serde_json::Map::new();
    for (label, bits, grid) in [
        ("binary", 1u8, cfg.temperature.grid()),
        ("binary_warm", 1u8, cfg.temperature.warm_grid()),
        ("two_bit", 2u8, cfg.temperature.grid()),
    ] {
        let acfg = array_config(cfg, bits);
        let mut worst: Option<(u32, NmrReport)> = None;
        let mut per_digit = Vec::new();
        for digit in 1..(1u32 << bits) {
            let set = enumerate_mac_levels(&acfg, digit, &grid, &ctx.devices)?;
            let report = compute_nmr(&set, policy)?;
            ctx.out.csv(&format!("nmr_levels_{label}_digit{digit}.csv"), &header, &level_rows(&set, &report))?;
            per_digit.push(json!({ "digit": digit, "nmr_min": report.nmr_min, "argmin": report.argmin }));
            if worst.as_ref().is_none_or(|w| report.nmr_min < w.1.nmr_min) {
                worst = Some((digit, report));
            }
        }
        let (digit, report) = worst.expect("at least one digit");
        summary.insert(
            label.into(),
            json!({
                "temperatures_K": grid,
                "nmr_min": report.nmr_min,
                "argmin": report.argmin,
                "worst_digit": digit,
                "per_digit": per_digit,
            }),
        );
    }
    let base = Baseline1F1R::default();
    let grid = cfg.temperature.grid();
    let base_set = baseline_mac_levels(cfg.array.rows, &grid, &base)?;
    let base_report = compute_nmr(&base_set, policy)?;
    ctx.out.csv("nmr_levels_baseline.csv", &header, &level_rows(&base_set, &base_report))?;
    let ours = summary["binary"]["nmr_min"].as_f64().expect("number");
    let improvement = nmr_improvement(ours, base_report.nmr_min).ok();
    summary.insert(
        "baseline_1f1r".into(),
        json!({
            "nmr_min": base_report.nmr_min,
            "argmin": base_report.argmin,
            "fluctuation": baseline_fluctuation(&grid, &base)?,
        }),
    );
    summary.insert("improvement_vs_baseline".into(), json!(improvement));
    summary.insert("policy".into(), json!(format!("{policy:?}")));
    ctx.out.json("nmr.json", Value::Object(summary))
}

pub fn monte_carlo(ctx: &mut Context) -> CliResult<()> {
    let cfg = ctx.cfg;
    bias(ctx)?;
    let v = &cfg.variation;
    if v.runs == 0 {
        return Err(CliError::usage("variation.runs", "must be at least 1"));
    }
    if v.digits.is_empty() {
        return Err(CliError::usage("variation.digits", "no digits requested"));
    }
    let acfg = array_config(cfg, cfg.array.bits_per_cell);
    let mc = MonteCarloConfig {
        runs: v.runs,
        sigma_vt: v.sigma_vt,
        sigma_mos: v.sigma_mos,
        seed: cfg.experiment.seed,
        t: v.temperature_c + 273.15,
        active_rows: v.active_rows,
        adc_bits: cfg.adc.bits,
    };
    let header: Vec<String> = ["run", "current_A", "code"].iter().map(|s| s.to_string()).collect();
    let mut results = Vec::new();
    for &digit in &v.digits {
        let r = monte_carlo_mac(&acfg, digit, &mc, &ctx.devices)
            .map_err(|e| CliError::usage("variation.digits", e.to_string()))?;
        let rows: Vec<Vec<String>> = r
            .currents
            .iter()
            .zip(&r.codes)
            .enumerate()
            .map(|(i, (c, k))| vec![i.to_string(), num(*c), k.to_string()])
            .collect();
        ctx.out.csv(&format!("monte_carlo_digit{digit}.csv"), &header, &rows)?;
        results.push(json!({
            "digit": digit,
            "active_rows": r.active_rows,
            "accuracy": r.accuracy,
            "nominal_current_A": r.nominal_current,
            "nominal_code": r.nominal_code,
            "mean_A": r.mean,
            "std_A": r.std,
            "relative_sigma": r.relative_sigma,
            "cell_relative_sigma": r.cell_relative_sigma,
            "adc_references_A": r.adc.references,
        }));
    }
    ctx.out.json(
        "monte_carlo.json",
        json!({
            "runs": v.runs,
            "sigma_vt_V": v.sigma_vt,
            "sigma_mos_V": v.sigma_mos,
            "temperature_K": mc.t,
            "results": results,
        }),
    )
}

fn load_dataset(cfg: &ExperimentConfig) -> CliResult<Dataset> {
    let inf = &cfg.inference;
    for (field, p) in [("inference.weights", &inf.weights), ("inference.dataset", &inf.dataset)] {
        if !p.is_file() {
            return Err(CliError::usage(field, format!("file {} does not exist", p.display())));
        }
    }
    let mut data = match &inf.labels {
        Some(l) => Dataset::load_idx(&inf.dataset, l)?,
        None => Dataset::load_csv(&inf.dataset)?,
    };
    if let Some(n) = inf.max_samples {
        data.samples.truncate(n);
    }
    if data.is_empty() {
        return Err(CliError::usage("inference.dataset", "dataset is empty"));
    }
    Ok(data)
}

fn load_network(cfg: &ExperimentConfig, bits: u8) -> CliResult<MappedNetwork> {
    let p = &cfg.inference.weights;
    if !p.is_file() {
        return Err(CliError::usage("inference.weights", format!("file {} does not exist", p.display())));
    }
    Ok(MappedNetwork::load(p, bits)?)
}

pub fn infer_cmd(ctx: &mut Context) -> CliResult<()> {
    let cfg = ctx.cfg;
    let b = bias(ctx)?;
    let inf = &cfg.inference;
    if inf.repeats == 0 {
        return Err(CliError::usage("inference.repeats", "must be at least 1"));
    }
    let net = load_network(cfg, inf.bits_per_cell)?;
    let data = load_dataset(cfg)?;
    if data.samples[0].input.len() != net.input_width() {
        return Err(CliError::usage("inference.dataset", "feature count does not match the network input width"));
    }
    let levels = 1usize << inf.bits_per_cell;
    let table = inf.digit_sigma.clone().unwrap_or_else(|| vec![1.0; levels]);
    if table.len() < levels {
        return Err(CliError::usage("inference.digit_sigma", format!("needs {levels} entries")));
    }
    let sigmas = if inf.mode == FidelityMode::IdealInteger { vec![0.0] } else { inf.sigmas.clone() };
    if sigmas.is_empty() {
        return Err(CliError::usage("inference.sigmas", "no sigma values given"));
    }
    let base = InferenceConfig {
        mode: inf.mode,
        temperature: inf.temperature_c + 273.15,
        adc_bits: inf.adc_bits,
        array_rows: inf.array_rows,
        sparsity_threshold: inf.sparsity_threshold,
        bias: b,
        devices: ctx.devices.clone(),
        ..Default::default()
    };
    let mut results = Vec::new();
    for &s in &sigmas {
        let run_cfg = match inf.mode {
            FidelityMode::IdealInteger => base.clone(),
            FidelityMode::AnalogDevice => InferenceConfig { sigma_vt: s, ..base.clone() },
            FidelityMode::StatisticalVariance => {
                InferenceConfig { digit_sigma: table.iter().map(|t| t * s).collect(), ..base.clone() }
            }
        };
        run_cfg.validate(inf.bits_per_cell).map_err(|e| CliError::usage("inference", e.to_string()))?;
        let stats = infer(&net, &data, &run_cfg, inf.repeats, cfg.experiment.seed)?;
        results.push(json!({
            "sigma": s,
            "accuracy_mean": stats.mean,
            "accuracy_std": stats.std,
            "per_repeat": stats.per_repeat,
        }));
    }
    let freqs = weight_state_frequencies(&net);
    let layers: Vec<Value> = net
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            json!({
                "layer": i,
                "in_features": l.mapped.in_features,
                "out_features": l.mapped.out_features,
                "digit_columns": l.mapped.num_digits,
                "weight_scale": l.mapped.weight_scale,
            })
        })
        .collect();
    ctx.out.json(
        "infer.json",
        json!({
            "network": net.name,
            "mode": inf.mode,
            "bits_per_cell": inf.bits_per_cell,
            "temperature_K": base.temperature,
            "samples": data.len(),
            "repeats": inf.repeats,
            "software_accuracy": software_accuracy(&net, &data)?,
            "results": results,
            "digit_frequencies": freqs,
            "per_layer": layers,
        }),
    )
}

fn perf_json(r: &PerfReport) -> Value {
    serde_json::to_value(r).expect("plain struct")
}

pub fn energy(ctx: &mut Context) -> CliResult<()> {
    let cfg = ctx.cfg;
    let p = &cfg.perf;
    let constants = cfg.perf_constants()?;
    let pcfg = PerfConfig {
        rows: p.rows,
        cols: p.cols,
        bits_per_cell: p.bits_per_cell,
        adc_bits: p.adc_bits,
        adc_sharing: p.adc_sharing,
        rows_per_read: p.rows_per_read,
        op_count: p.op_count,
    };
    pcfg.validate().map_err(|e| CliError::usage("perf", e.to_string()))?;
    if p.inferences == 0 {
        return Err(CliError::usage("perf.inferences", "must be at least 1"));
    }
    let reference = workload_perf_shapes(&[reference_array_shape(&pcfg)], 1, &pcfg, &constants, None)?;
    let net = load_network(cfg, p.bits_per_cell)?;
    let groups = match p.sparsity_threshold {
        Some(th) => Some(measure_row_groups(&net, &load_dataset(cfg)?, p.rows, th)?),
        None => None,
    };
    let report = workload_perf(&net, p.inferences, &pcfg, &constants, groups.as_deref())?;
    let header: Vec<String> = [
        "layer",
        "row_tiles",
        "col_tiles",
        "read_cycles",
        "macs",
        "array_J",
        "adc_J",
        "digital_J",
        "control_J",
        "latency_s",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rows: Vec<Vec<String>> = report
        .layers
        .iter()
        .map(|l| {
            vec![
                l.layer.to_string(),
                l.row_tiles.to_string(),
                l.col_tiles.to_string(),
                num(l.read_cycles),
                num(l.macs),
                num(l.energy.array),
                num(l.energy.adc),
                num(l.energy.digital),
                num(l.energy.control),
                num(l.latency),
            ]
        })
        .collect();
    ctx.out.csv("energy_layers.csv", &header, &rows)?;
    ctx.out.json(
        "energy.json",
        json!({
            "network": net.name,
            "config": pcfg,
            "constants": constants,
            "row_groups_per_pulse": groups,
            "workload": perf_json(&report),
            "reference_array": perf_json(&reference),
        }),
    )
}

pub fn calibrate(ctx: &mut Context) -> CliResult<()> {
    let cfg = ctx.cfg;
    let b = cfg.bias.to_bias();
    let cal = calibrate_cell(&cfg.calibration.targets(), &ctx.devices, &b)?;
    let (ratio, r_on) = cell_figures(&cal.devices, &BiasConfig { v_read: cfg.calibration.v_read, ..b })?;
    ctx.devices = cal.devices.clone();
    ctx.out.text("calibration.toml", &devices_to_toml(&cal.devices))?;
    ctx.out.json(
        "calibrate.json",
        json!({
            "targets": cfg.calibration,
            "on_off_ratio": ratio,
            "r_on_ohms": r_on,
            "ratio_residual": cal.ratio_residual,
            "r_on_residual": cal.r_on_residual,
            "iterations": cal.iterations,
            "m3": cal.devices.m3,
            "reference_temperature_K": T_REF,
        }),
    )
}
