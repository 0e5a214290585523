use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use shiftlif::analysis::{bit_budget, entropy_bits, AnalysisReport};
use shiftlif::energy::EnergyReport;
use shiftlif::synapse_kernel::{float_reference, op_counter, shift_accumulate};
use shiftlif::training::{
    checkpoint_to_string, evaluate_fixed_point, fit, simulate, synth_dataset, write_history,
    Dataset, DeployConfig, DeployReport, FitResult, Network, NetworkSpec,
};
use shiftlif::{FixedPointMatrix, KernelMode, NeuronKind, NeuronParams, SpikeLevel, SpikeTensor};

use crate::config::{Experiment, ExperimentConfig};
use crate::output::{flush_csv, Outputs};
use crate::CliError;

/// Failed checks; a nonempty list becomes an acceptance failure after all
/// reports are written.
type Failures = Vec<String>;

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let mut out = Outputs::create(&cfg.output_dir)?;
    log::info!(
        "running {} with seed {} into {}",
        cfg.experiment,
        cfg.seed,
        out.dir().display()
    );
    let failures = match cfg.experiment {
        Experiment::Analyze => analyze(cfg, &mut out)?,
        Experiment::Train => train(cfg, &mut out)?,
        Experiment::AblateK => ablate_k(cfg, &mut out)?,
        Experiment::AblateGrid => ablate_grid(cfg, &mut out)?,
        Experiment::Energy => energy(cfg, &mut out)?,
        Experiment::KernelCheck => kernel_check(cfg, &mut out)?,
        Experiment::GenData => gen_data(cfg, &mut out)?,
    };
    out.finish(cfg)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Acceptance(failures.join("; ")))
    }
}

fn analyze(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Failures, CliError> {
    let a = &cfg.analysis;
    let mut failures = Vec::new();
    let mut reports = Vec::new();
    let mut metrics = out.csv("analysis_metrics.csv")?;
    metrics.write_record([
        "distribution",
        "K",
        "quantizer",
        "expected_abs_error",
        "entropy_bits",
        "utilization",
    ])?;
    let mut conditions = out.csv("condition_checks.csv")?;
    conditions.write_record([
        "distribution",
        "K",
        "condition_lhs",
        "condition_rhs",
        "condition_holds",
        "error_shift",
        "error_int",
        "gap_std_error",
        "h_shift",
        "h_shift_chain",
        "h_int",
        "h_int_chain",
        "criterion_holds",
        "direct_verdict",
        "delta_bound_violations",
        "consistent",
    ])?;
    for (i, dist) in a.distributions.iter().enumerate() {
        let samples = dist.sample(a.samples, cfg.seed.wrapping_add(i as u64))?;
        let name = dist.describe();
        for &k in &a.precisions {
            let report = AnalysisReport::build(&samples, k, a.bins, a.v_max)?;
            for q in &report.quantizers {
                metrics.write_record([
                    name.clone(),
                    k.to_string(),
                    format!("{:?}", q.quantizer).to_lowercase(),
                    q.expected_abs_error.to_string(),
                    q.entropy.to_string(),
                    q.utilization.to_string(),
                ])?;
            }
            let consistent = report.consistent(a.tolerance);
            if !consistent {
                failures.push(format!("analysis of {name} at K={k} is inconsistent"));
            }
            let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
            let flag = |v: Option<bool>| v.map_or_else(String::new, |x| x.to_string());
            let adv = report.shift_advantage.as_ref();
            let split = report.entropy_split.as_ref();
            conditions.write_record([
                name.clone(),
                k.to_string(),
                opt(adv.map(|l| l.lhs)),
                opt(adv.map(|l| l.rhs)),
                flag(adv.map(|l| l.condition_holds)),
                opt(adv.map(|l| l.error_shift)),
                opt(adv.map(|l| l.error_int)),
                opt(adv.map(|l| l.gap_std_error)),
                opt(split.map(|d| d.h_shift_direct)),
                opt(split.map(|d| d.h_shift_chain)),
                opt(split.map(|d| d.h_int_direct)),
                opt(split.map(|d| d.h_int_chain)),
                flag(split.map(|d| d.criterion_holds())),
                flag(split.map(|d| d.direct_verdict())),
                report.delta_bound_violations.to_string(),
                consistent.to_string(),
            ])?;
            reports.push(report);
        }
    }
    flush_csv(metrics)?;
    flush_csv(conditions)?;
    out.json("analysis.json", &reports)?;
    Ok(failures)
}

fn network_spec(cfg: &ExperimentConfig, neuron: NeuronParams) -> NetworkSpec {
    NetworkSpec::uniform(
        cfg.dataset.input_dim,
        &cfg.training.hidden,
        cfg.dataset.classes,
        neuron,
        cfg.dataset.timesteps,
    )
}

fn dataset(cfg: &ExperimentConfig) -> Result<Dataset, CliError> {
    Ok(synth_dataset(&cfg.dataset.synth(cfg.seed))?)
}

fn train_network(
    cfg: &ExperimentConfig,
    data: &Dataset,
    neuron: NeuronParams,
) -> Result<FitResult, CliError> {
    let net = Network::new(network_spec(cfg, neuron), cfg.seed)?;
    let result = fit(net, data, &cfg.training.train_config(cfg.seed))?;
    log::info!(
        "{} K={}: best test accuracy {} at epoch {}",
        neuron.kind.name(),
        neuron.precision,
        result.best_accuracy,
        result.best_epoch
    );
    Ok(result)
}

fn final_rates(r: &FitResult) -> Vec<f64> {
    r.history
        .last()
        .map(|h| h.layer_rates.clone())
        .unwrap_or_default()
}

fn check_accuracy(failures: &mut Failures, label: &str, r: &FitResult) {
    if !r.best_accuracy.is_finite() || r.history.iter().any(|h| !h.test_accuracy.is_finite()) {
        failures.push(format!("{label}: non-finite accuracy"));
    }
}

#[derive(Serialize)]
struct TrainSummary {
    neuron: NeuronParams,
    best_accuracy: f64,
    best_epoch: usize,
    final_test_accuracy: Option<f64>,
    final_layer_rates: Vec<f64>,
    fixed_point: Option<DeployReport>,
}

fn train(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Failures, CliError> {
    let data = dataset(cfg)?;
    let r = train_network(cfg, &data, cfg.neuron)?;
    let mut failures = Vec::new();
    check_accuracy(&mut failures, "train", &r);
    write_history(&r.history, out.file("history.csv")?)?;
    out.text("checkpoint.json", &checkpoint_to_string(&r.best)?)?;
    let fixed_point = if cfg.neuron.kind == NeuronKind::ShiftLif {
        let deploy = DeployConfig {
            weight_bits: cfg.training.weight_bits,
            mode: KernelMode::Exact,
        };
        Some(evaluate_fixed_point(&r.best, &data.test, &deploy)?)
    } else {
        None
    };
    out.json(
        "summary.json",
        &TrainSummary {
            neuron: cfg.neuron,
            best_accuracy: r.best_accuracy,
            best_epoch: r.best_epoch,
            final_test_accuracy: r.history.last().map(|h| h.test_accuracy),
            final_layer_rates: final_rates(&r),
            fixed_point,
        },
    )?;
    Ok(failures)
}

fn rate_columns(layers: usize) -> impl Iterator<Item = String> {
    (0..layers).map(|l| format!("rate_l{l}"))
}

fn ablate_k(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Failures, CliError> {
    let data = dataset(cfg)?;
    let layers = cfg.training.hidden.len();
    let mut failures = Vec::new();
    let mut table = out.csv("ablation_k.csv")?;
    let mut header: Vec<String> = [
        "K",
        "levels",
        "best_accuracy",
        "best_epoch",
        "final_accuracy",
    ]
    .map(String::from)
    .to_vec();
    header.extend(rate_columns(layers));
    table.write_record(&header)?;
    for &k in &cfg.ablation.precisions {
        let neuron = NeuronParams {
            kind: NeuronKind::ShiftLif,
            precision: k,
            ..cfg.neuron
        };
        let r = train_network(cfg, &data, neuron)?;
        check_accuracy(&mut failures, &format!("K={k}"), &r);
        write_history(&r.history, out.file(&format!("history_K{k}.csv"))?)?;
        let mut row = vec![
            k.to_string(),
            (k + 2).to_string(),
            r.best_accuracy.to_string(),
            r.best_epoch.to_string(),
            r.history
                .last()
                .map_or(String::new(), |h| h.test_accuracy.to_string()),
        ];
        row.extend(final_rates(&r).iter().map(f64::to_string));
        table.write_record(&row)?;
    }
    flush_csv(table)?;
    Ok(failures)
}

/// Per-layer spikes of `net` over every sample, stacked along time.
fn test_spikes(net: &Network, data: &Dataset) -> Result<Vec<SpikeTensor>, CliError> {
    let mut per_layer: Vec<Vec<SpikeTensor>> = vec![Vec::new(); net.hidden.len()];
    for s in &data.test {
        let sim = simulate(net, &s.inputs)?;
        for (acc, t) in per_layer.iter_mut().zip(sim.spikes) {
            acc.push(t);
        }
    }
    Ok(per_layer
        .iter()
        .map(|parts| SpikeTensor::concat_time(parts))
        .collect::<shiftlif::Result<_>>()?)
}

/// Entropy of the emitted spike levels and its share of the `K`-level bit budget.
fn spike_entropy(spikes: &[SpikeTensor], neuron: &NeuronParams) -> Result<(f64, f64), CliError> {
    let levels = neuron.level_set()?;
    let mut counts = vec![0usize; levels.len()];
    let mut total = 0usize;
    for t in spikes {
        for s in t.entries() {
            counts[levels.index_of(s)?] += 1;
            total += 1;
        }
    }
    let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    let h = entropy_bits(&probs);
    Ok((h, h / f64::from(bit_budget(neuron.precision))))
}

fn ablate_grid(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Failures, CliError> {
    let data = dataset(cfg)?;
    let layers = cfg.training.hidden.len();
    let mut failures = Vec::new();
    let mut table = out.csv("ablation_grid.csv")?;
    let mut header: Vec<String> = [
        "neuron",
        "K",
        "best_accuracy",
        "final_accuracy",
        "spike_entropy_bits",
        "utilization",
    ]
    .map(String::from)
    .to_vec();
    header.extend(rate_columns(layers));
    table.write_record(&header)?;
    for &k in &cfg.ablation.precisions {
        for kind in [NeuronKind::ShiftLif, NeuronKind::UniformLif] {
            let neuron = NeuronParams {
                kind,
                precision: k,
                ..cfg.neuron
            };
            let r = train_network(cfg, &data, neuron)?;
            check_accuracy(&mut failures, &format!("{} K={k}", kind.name()), &r);
            let (h, u) = spike_entropy(&test_spikes(&r.best, &data)?, &neuron)?;
            let mut row = vec![
                kind.name().to_string(),
                k.to_string(),
                r.best_accuracy.to_string(),
                r.history
                    .last()
                    .map_or(String::new(), |h| h.test_accuracy.to_string()),
                h.to_string(),
                u.to_string(),
            ];
            row.extend(final_rates(&r).iter().map(f64::to_string));
            table.write_record(&row)?;
        }
    }
    flush_csv(table)?;
    Ok(failures)
}

#[derive(Serialize)]
struct KindEnergy {
    neuron: NeuronParams,
    best_accuracy: f64,
    /// Energy per inference, averaged over the test set.
    report: EnergyReport,
}

fn energy(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Failures, CliError> {
    let data = dataset(cfg)?;
    let mut failures = Vec::new();
    let mut table = out.csv("energy.csv")?;
    table.write_record([
        "neuron",
        "profile",
        "layer",
        "spike_rate",
        "event_rate",
        "synaptic_events",
        "synapse_count",
        "energy_mj",
    ])?;
    let mut summary = Vec::new();
    for &kind in &cfg.energy.kinds {
        let neuron = NeuronParams { kind, ..cfg.neuron };
        let r = train_network(cfg, &data, neuron)?;
        check_accuracy(&mut failures, kind.name(), &r);
        let constants = cfg.energy.constants_for(kind);
        let spikes = test_spikes(&r.best, &data)?;
        let mut report = EnergyReport::new(constants.profile.clone());
        for (l, t) in spikes.iter().enumerate() {
            let fan_out = r
                .best
                .hidden
                .get(l + 1)
                .map_or(r.best.readout.rows, |d| d.rows);
            report.push_layer(
                format!("hidden{l}"),
                t,
                cfg.dataset.timesteps,
                fan_out,
                constants,
            )?;
        }
        for layer in &report.layers {
            table.write_record([
                kind.name().to_string(),
                report.profile.clone(),
                layer.layer.clone(),
                layer.spike_rate.to_string(),
                layer.event_rate.to_string(),
                layer.synaptic_events.to_string(),
                layer.synapse_count.to_string(),
                layer.energy_mj.to_string(),
            ])?;
        }
        if !report.total_mj.is_finite() || report.total_mj < 0.0 {
            failures.push(format!(
                "{}: invalid energy {}",
                kind.name(),
                report.total_mj
            ));
        }
        summary.push(KindEnergy {
            neuron,
            best_accuracy: r.best_accuracy,
            report,
        });
    }
    flush_csv(table)?;
    out.json("energy.json", &summary)?;
    Ok(failures)
}

#[derive(Serialize)]
struct KernelSummary {
    trials: usize,
    exact_equal: usize,
    lossy_within_bound: usize,
    counts_ok: usize,
    all_pass: bool,
}

fn kernel_check(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Failures, CliError> {
    let kc = &cfg.kernel;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lim = 1i64 << (kc.weight_bits - 1);
    let mut table = out.csv("kernel_check.csv")?;
    table.write_record([
        "trial",
        "rows",
        "cols",
        "K",
        "nonzero",
        "exact_equal",
        "max_lossy_error_lsb",
        "lossy_within_bound",
        "counts_ok",
    ])?;
    let mut summary = KernelSummary {
        trials: kc.trials,
        exact_equal: 0,
        lossy_within_bound: 0,
        counts_ok: 0,
        all_pass: false,
    };
    for trial in 0..kc.trials {
        let rows = rng.random_range(1..=kc.max_rows);
        let cols = rng.random_range(1..=kc.max_cols);
        let k = rng.random_range(0..=kc.max_precision);
        let raw: Vec<i32> = (0..rows * cols)
            .map(|_| rng.random_range(-lim..lim) as i32)
            .collect();
        let spikes: Vec<SpikeLevel> = (0..cols)
            .map(|_| {
                if rng.random_bool(0.3) {
                    Ok(SpikeLevel::ZERO)
                } else {
                    SpikeLevel::shift(rng.random_range(0..=k))
                }
            })
            .collect::<shiftlif::Result<_>>()?;
        let w = FixedPointMatrix::from_raw(rows, cols, raw, kc.frac_bits, kc.weight_bits)?;
        let amps: Vec<f64> = spikes.iter().map(SpikeLevel::amplitude).collect();
        let reference = float_reference(&w.to_real(), rows, cols, &amps)?;
        let exact = shift_accumulate(&w, &spikes, k, KernelMode::Exact)?;
        let lossy = shift_accumulate(&w, &spikes, k, KernelMode::Lossy)?;
        let nonzero = spikes.iter().filter(|s| !s.is_zero()).count();

        let exact_equal = exact.values().iter().zip(&reference).all(|(a, b)| a == b);
        // each dropped term loses less than one weight LSB
        let lsb_scale = f64::from(1u32 << kc.frac_bits.min(31));
        let mut max_err: f64 = 0.0;
        let mut within = true;
        for (e, l) in exact.values().iter().zip(lossy.sums()) {
            let err = e * lsb_scale - *l as f64;
            max_err = max_err.max(err);
            within &= err == 0.0 || (err > 0.0 && err < nonzero as f64);
        }
        let tensor = SpikeTensor::new(1, cols, spikes)?;
        let ops = op_counter(&tensor, rows);
        let counts_ok = exact.synaptic_visits == (nonzero * rows) as u64
            && exact.skipped == ((cols - nonzero) * rows) as u64
            && ops.synaptic_visits == exact.synaptic_visits
            && ops.skipped == exact.skipped;
        summary.exact_equal += usize::from(exact_equal);
        summary.lossy_within_bound += usize::from(within);
        summary.counts_ok += usize::from(counts_ok);
        table.write_record([
            trial.to_string(),
            rows.to_string(),
            cols.to_string(),
            k.to_string(),
            nonzero.to_string(),
            exact_equal.to_string(),
            max_err.to_string(),
            within.to_string(),
            counts_ok.to_string(),
        ])?;
    }
    flush_csv(table)?;
    summary.all_pass = summary.exact_equal == kc.trials
        && summary.lossy_within_bound == kc.trials
        && summary.counts_ok == kc.trials;
    out.json("kernel_check.json", &summary)?;
    let mut failures = Vec::new();
    if !summary.all_pass {
        failures.push(format!(
            "kernel check: exact {}/{n}, lossy {}/{n}, counts {}/{n}",
            summary.exact_equal,
            summary.lossy_within_bound,
            summary.counts_ok,
            n = kc.trials
        ));
    }
    Ok(failures)
}

#[derive(Serialize)]
struct DataSummary {
    classes: usize,
    timesteps: usize,
    input_dim: usize,
    train: usize,
    test: usize,
    class_counts: Vec<usize>,
}

fn gen_data(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Failures, CliError> {
    let data = dataset(cfg)?;
    let mut table = out.csv("dataset.csv")?;
    let mut header: Vec<String> = ["split", "index", "label", "t"].map(String::from).to_vec();
    header.extend((0..data.input_dim).map(|d| format!("x{d}")));
    table.write_record(&header)?;
    for (split, samples) in [("train", &data.train), ("test", &data.test)] {
        for (i, s) in samples.iter().enumerate() {
            for (t, x) in s.inputs.iter().enumerate() {
                let mut row = vec![
                    split.to_string(),
                    i.to_string(),
                    s.label.to_string(),
                    t.to_string(),
                ];
                row.extend(x.iter().map(f64::to_string));
                table.write_record(&row)?;
            }
        }
    }
    flush_csv(table)?;
    out.json(
        "dataset.json",
        &DataSummary {
            classes: data.classes,
            timesteps: data.timesteps,
            input_dim: data.input_dim,
            train: data.train.len(),
            test: data.test.len(),
            class_counts: data.class_counts(),
        },
    )?;
    Ok(Vec::new())
}
