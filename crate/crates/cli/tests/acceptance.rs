//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Each check carries a wall-clock budget that counts as part of it.

#[path = "../../core/tests/common/oracles.rs"]
mod oracles;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shiftlif::analysis::{
    delta_pointwise, entropy_bits, entropy_decomposition, shift_advantage_condition,
    SampleDistribution, SampleSet,
};
use shiftlif::energy::{layer_energy, spike_rate, EnergyConstants};
use shiftlif::quantizer::{q_int, q_shift, q_uniform};
use shiftlif::synapse_kernel::{float_reference, shift_accumulate};
use shiftlif::training::{
    batch_loss, fit, forward_backward, synth_dataset, Network, NetworkSpec, Sample, SpikeFunction,
    SynthConfig, TrainConfig,
};
use shiftlif::{
    FixedPointMatrix, KernelMode, LevelSet, NeuronKind, NeuronParams, ShiftMode, SpikeLevel,
    SpikeTensor,
};

type Check = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn alphabet_structure() -> Check {
    for mode in [ShiftMode::AlgorithmicClamp, ShiftMode::FloorAdmissible] {
        for k in 0..=10 {
            let set = LevelSet::shift(k, mode).map_err(|e| e.to_string())?;
            ensure(set.len() == k as usize + 2, || {
                format!("K={k}: {} levels, expected {}", set.len(), k + 2)
            })?;
        }
    }
    let k7 = LevelSet::shift(7, ShiftMode::AlgorithmicClamp).unwrap();
    ensure(k7.len() == 9, || format!("K=7 has {} levels", k7.len()))?;
    let mut k2 = LevelSet::shift(2, ShiftMode::AlgorithmicClamp)
        .unwrap()
        .levels()
        .to_vec();
    k2.sort_by(f64::total_cmp);
    ensure(k2 == [0.0, 0.25, 0.5, 1.0], || format!("K=2 levels {k2:?}"))?;
    Ok("K+2 levels for K=0..10; K=7 -> 9; K=2 -> {0, 1/4, 1/2, 1}".into())
}

/// Random inputs mixing a wide range, exact powers of two and their float
/// neighbours, and uniform-grid midpoints.
fn tricky_input(rng: &mut ChaCha8Rng, k: u32) -> f64 {
    match rng.random_range(0..4) {
        0 => rng.random_range(-0.25..1.25),
        1 => {
            let p = oracles::pow2(rng.random_range(0..=k + 2));
            match rng.random_range(0..3) {
                0 => p,
                1 => f64::from_bits(p.to_bits() - 1),
                _ => f64::from_bits(p.to_bits() + 1),
            }
        }
        2 => f64::from(2 * rng.random_range(0..=k) + 1) / f64::from(2 * (k + 1)),
        _ => rng.random_range(0.0..f64::from(k + 3)),
    }
}

fn quantizer_oracles() -> Check {
    const N: usize = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut counts = [0usize; 4];
    for i in 0..N {
        let k = (i % 11) as u32;
        let v = tricky_input(&mut rng, k);
        let floor = q_shift(v, k, ShiftMode::FloorAdmissible)
            .unwrap()
            .amplitude();
        ensure(floor == oracles::shift_floor(v, k), || {
            format!("floor-admissible K={k} v={v:e}")
        })?;
        let alg = q_shift(v, k, ShiftMode::AlgorithmicClamp)
            .unwrap()
            .amplitude();
        ensure(alg == oracles::shift_algorithmic(v, k), || {
            format!("algorithmic K={k} v={v:e}")
        })?;
        let u = q_uniform(v, k).unwrap().amplitude();
        ensure(u == oracles::uniform_nearest(v, k), || {
            format!("uniform K={k} v={v:e}")
        })?;
        let vi = v.abs();
        let j = q_int(vi, k).unwrap().amplitude();
        ensure(j == oracles::int_nearest(vi, k), || {
            format!("int K={k} v={vi:e}")
        })?;
        counts.iter_mut().for_each(|c| *c += 1);
    }
    Ok(format!(
        "{} inputs each for floor-admissible, algorithmic, int and uniform quantizers",
        counts[0]
    ))
}

fn delta_bound() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    for _ in 0..1_000_000 {
        let v = rng.random_range(0.0..=4.0);
        for k in 1..=3 {
            let (d, b) = delta_pointwise(v, k).map_err(|e| e.to_string())?;
            // the bound is re-derived here from the oracles
            let direct = (v - oracles::int_nearest(v, k)).abs() - (v - oracles::shift_floor(v, k));
            ensure(d == direct, || {
                format!("delta({v}, {k}) = {d}, oracle {direct}")
            })?;
            ensure(d >= b, || format!("delta({v}, {k}) = {d} < bound {b}"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} (v, K) pairs, no violation"))
}

fn mean_errors(samples: &SampleSet, k: u32) -> (f64, f64) {
    let n = samples.len() as f64;
    let (mut s, mut i) = (0.0, 0.0);
    for &v in samples.values() {
        s += v - oracles::shift_floor(v, k);
        i += (v - oracles::int_nearest(v, k)).abs();
    }
    (s / n, i / n)
}

fn error_condition_end_to_end() -> Check {
    let exp = SampleDistribution::Exponential { rate: 4.0 }
        .sample(1_000_000, 4)
        .map_err(|e| e.to_string())?;
    let c = shift_advantage_condition(&exp, 2).map_err(|e| e.to_string())?;
    let (es, ei) = mean_errors(&exp, 2);
    ensure((c.error_shift - es).abs() <= 1e-9 * es, || {
        format!("shift error {} vs oracle {es}", c.error_shift)
    })?;
    ensure((c.error_int - ei).abs() <= 1e-9 * ei, || {
        format!("int error {} vs oracle {ei}", c.error_int)
    })?;
    ensure(c.condition_holds, || {
        format!("condition fails on Exp(4): {} <= {}", c.lhs, c.rhs)
    })?;
    let margin = (c.error_int - c.error_shift) / c.gap_std_error;
    ensure(c.error_shift < c.error_int && margin > 5.0, || {
        format!(
            "E_shift {} E_int {} margin {margin:.1} SE",
            c.error_shift, c.error_int
        )
    })?;

    let point = SampleSet::new(vec![0.9; 10_000], "point mass 0.9").unwrap();
    let p = shift_advantage_condition(&point, 2).map_err(|e| e.to_string())?;
    ensure(!p.condition_holds, || {
        "condition holds on the point mass at 0.9".into()
    })?;
    ensure(p.error_int < p.error_shift, || {
        format!(
            "point mass: E_int {} !< E_shift {}",
            p.error_int, p.error_shift
        )
    })?;
    Ok(format!(
        "Exp(4): lhs {:.4} > rhs {:.4}, E_shift {:.4} < E_int {:.4} by {margin:.0} SE; point mass 0.9: condition fails, E_int {:.2} < E_shift {:.2}",
        c.lhs, c.rhs, c.error_shift, c.error_int, p.error_int, p.error_shift
    ))
}

fn oracle_entropy(samples: &SampleSet, q: impl Fn(f64) -> f64) -> f64 {
    let mut hist: BTreeMap<u64, usize> = BTreeMap::new();
    for &v in samples.values() {
        *hist.entry(q(v).to_bits()).or_default() += 1;
    }
    let n = samples.len() as f64;
    let probs: Vec<f64> = hist.values().map(|&c| c as f64 / n).collect();
    entropy_bits(&probs)
}

fn entropy_identities() -> Check {
    let families = [
        SampleDistribution::Exponential { rate: 4.0 },
        SampleDistribution::Uniform {
            low: 0.0,
            high: 2.0,
        },
        SampleDistribution::PointMass { value: 0.3 },
        SampleDistribution::PointMass { value: 0.9 },
        SampleDistribution::Mixture {
            weight: 0.7,
            first: Box::new(SampleDistribution::Exponential { rate: 8.0 }),
            second: Box::new(SampleDistribution::Uniform {
                low: 0.5,
                high: 3.0,
            }),
        },
    ];
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    let mut degenerate = Vec::new();
    for (i, fam) in families.iter().enumerate() {
        let s = fam
            .sample(200_000, 50 + i as u64)
            .map_err(|e| e.to_string())?;
        for k in 1..=4 {
            let d = entropy_decomposition(&s, k).map_err(|e| e.to_string())?;
            let hs = oracle_entropy(&s, |v| oracles::shift_floor(v, k));
            let hi = oracle_entropy(&s, |v| oracles::int_nearest(v, k));
            ensure((d.h_shift_direct - hs).abs() <= 1e-12, || {
                format!(
                    "{}: H_shift {} vs oracle {hs}",
                    fam.describe(),
                    d.h_shift_direct
                )
            })?;
            ensure((d.h_int_direct - hi).abs() <= 1e-12, || {
                format!(
                    "{}: H_int {} vs oracle {hi}",
                    fam.describe(),
                    d.h_int_direct
                )
            })?;
            worst = worst.max(d.shift_residual()).max(d.int_residual());
            ensure(
                d.shift_residual() <= 1e-9 && d.int_residual() <= 1e-9,
                || {
                    format!(
                        "{} K={k}: residuals {:e} {:e}",
                        fam.describe(),
                        d.shift_residual(),
                        d.int_residual()
                    )
                },
            )?;
            ensure(d.verdicts_agree(), || {
                format!(
                    "{} K={k}: criterion disagrees with direct comparison",
                    fam.describe()
                )
            })?;
            if k == 2 && (d.r == 0.0 || d.r == 1.0) {
                degenerate.push(d.r);
            }
            cases += 1;
        }
    }
    degenerate.sort_by(f64::total_cmp);
    ensure(degenerate == [0.0, 1.0], || {
        format!("degenerate r cases seen: {degenerate:?}")
    })?;
    Ok(format!(
        "{cases} cases over 5 families incl. r=0 and r=1; worst residual {worst:.1e}"
    ))
}

fn kernel_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut terms = 0u64;
    for trial in 0..100 {
        let rows = rng.random_range(1..=256);
        let cols = rng.random_range(1..=256);
        let k = rng.random_range(0..=8u32);
        let frac = 12;
        let raw: Vec<i32> = (0..rows * cols)
            .map(|_| rng.random_range(-32768..=32767))
            .collect();
        let exps: Vec<Option<u32>> = (0..cols)
            .map(|_| rng.random_bool(0.6).then(|| rng.random_range(0..=k)))
            .collect();
        let spikes: Vec<SpikeLevel> = exps
            .iter()
            .map(|e| e.map_or(SpikeLevel::ZERO, |x| SpikeLevel::shift(x).unwrap()))
            .collect();
        let w = FixedPointMatrix::from_raw(rows, cols, raw.clone(), frac, 16).unwrap();
        let amps: Vec<f64> = spikes.iter().map(SpikeLevel::amplitude).collect();
        let exact =
            shift_accumulate(&w, &spikes, k, KernelMode::Exact).map_err(|e| e.to_string())?;
        let reference = float_reference(&w.to_real(), rows, cols, &amps).unwrap();
        ensure(exact.values() == reference, || {
            format!("trial {trial}: exact != float reference")
        })?;
        let oracle = oracles::dyadic_matvec(&raw, rows, cols, &exps, k);
        ensure(
            exact
                .sums()
                .iter()
                .zip(&oracle)
                .all(|(&a, &b)| i128::from(a) == b),
            || format!("trial {trial}: integer sums differ from the dyadic oracle"),
        )?;

        // Lossy: every term W >> k is within one weight LSB below W * 2^-k.
        for (c, e) in exps.iter().enumerate() {
            let Some(e) = *e else { continue };
            let mut one = vec![SpikeLevel::ZERO; cols];
            one[c] = spikes[c];
            let lossy = shift_accumulate(&w, &one, k, KernelMode::Lossy).unwrap();
            for r in 0..rows {
                let exact_term = f64::from(raw[r * cols + c]) * oracles::pow2(e);
                let err = exact_term - lossy.sums()[r] as f64;
                ensure((0.0..1.0).contains(&err), || {
                    format!("trial {trial}: lossy term error {err} LSB")
                })?;
                terms += 1;
            }
            if terms > 2_000_000 {
                break;
            }
        }

        let live = exps.iter().filter(|e| e.is_some()).count() as u64;
        ensure(
            exact.synaptic_visits == live * rows as u64
                && exact.skipped == (cols as u64 - live) * rows as u64,
            || {
                format!(
                    "trial {trial}: visit counts {} / {}",
                    exact.synaptic_visits, exact.skipped
                )
            },
        )?;
    }
    Ok(format!(
        "100 instances exact; {terms} lossy terms below 1 LSB; visit counts exact"
    ))
}

fn gradient_oracle() -> Check {
    let mut spec = NetworkSpec::uniform(8, &[16], 3, NeuronParams::default(), 4);
    spec.spike_fn = SpikeFunction::ClampIdentity;
    spec.detach_reset = false;
    let mut net = Network::new(spec, 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let batch: Vec<Sample> = (0..8)
        .map(|i| Sample {
            label: i % 3,
            inputs: (0..4)
                .map(|_| (0..8).map(|_| rng.random_range(-0.3..0.9)).collect())
                .collect(),
        })
        .collect();
    let refs: Vec<&Sample> = batch.iter().collect();
    let cfg = TrainConfig::default();
    let analytic = forward_backward(&net, &refs, &cfg)
        .map_err(|e| e.to_string())?
        .grads
        .flat();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut live = 0;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = net.param(i);
        *net.param_mut(i) = orig + h;
        let up = batch_loss(&net, &refs, &cfg).unwrap().total;
        *net.param_mut(i) = orig - h;
        let down = batch_loss(&net, &refs, &cfg).unwrap().total;
        *net.param_mut(i) = orig;
        let n = (up - down) / (2.0 * h);
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
        ensure(rel <= 1e-4, || {
            format!("param {i}: analytic {a}, numeric {n}, rel {rel:e}")
        })?;
        worst = worst.max(rel);
        live += usize::from(a.abs() > 1e-8);
    }
    ensure(2 * live > analytic.len(), || {
        format!("only {live} nonzero gradients")
    })?;
    Ok(format!(
        "{} parameters of an 8-16-3 network, T=4; worst relative error {worst:.1e}",
        analytic.len()
    ))
}

fn learning_spec(kind: NeuronKind) -> NetworkSpec {
    NetworkSpec::uniform(16, &[32, 32], 3, NeuronParams::with_kind(kind, 2), 4)
}

fn learning() -> Check {
    let data = synth_dataset(&SynthConfig::default()).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        epochs: 50,
        ..Default::default()
    };
    let shift = fit(
        Network::new(learning_spec(NeuronKind::ShiftLif), 0).unwrap(),
        &data,
        &cfg,
    )
    .map_err(|e| e.to_string())?;
    let lif = fit(
        Network::new(learning_spec(NeuronKind::Lif), 0).unwrap(),
        &data,
        &cfg,
    )
    .map_err(|e| e.to_string())?;
    let msg = format!(
        "ShiftLIF K=2 test accuracy {:.3}, binary LIF {:.3} ({} test samples, {} epochs)",
        shift.best_accuracy,
        lif.best_accuracy,
        data.test.len(),
        cfg.epochs
    );
    ensure(shift.best_accuracy >= 0.90, || msg.clone())?;
    ensure(shift.best_accuracy >= lif.best_accuracy - 0.02, || {
        msg.clone()
    })?;
    Ok(msg)
}

fn rate_regularization() -> Check {
    let data = synth_dataset(&SynthConfig::default()).map_err(|e| e.to_string())?;
    let base = TrainConfig {
        epochs: 50,
        ..Default::default()
    };
    let reg = TrainConfig {
        lambda_sr: 0.1,
        target_rate: 0.05,
        ..base.clone()
    };
    let spec = learning_spec(NeuronKind::ShiftLif);
    let plain =
        fit(Network::new(spec.clone(), 0).unwrap(), &data, &base).map_err(|e| e.to_string())?;
    let penalized =
        fit(Network::new(spec.clone(), 0).unwrap(), &data, &reg).map_err(|e| e.to_string())?;
    let r0 = &plain.history.last().unwrap().layer_rates;
    let r1 = &penalized.history.last().unwrap().layer_rates;
    ensure(r1.iter().zip(r0).all(|(a, b)| a < b), || {
        format!("rates with penalty {r1:?} not below {r0:?}")
    })?;

    // layers at or below target get exactly zero regularizer gradient
    let net = Network::new(spec, 0).unwrap();
    let batch: Vec<&Sample> = data.train.iter().take(16).collect();
    let free = forward_backward(&net, &batch, &base).unwrap();
    let quiet = TrainConfig {
        lambda_sr: 0.1,
        target_rate: 1.0,
        ..base
    };
    let q = forward_backward(&net, &batch, &quiet).unwrap();
    ensure(
        q.rate_grad.iter().all(|&g| g == 0.0) && q.grads == free.grads,
        || "below-target layers received regularizer gradient".into(),
    )?;
    Ok(format!(
        "final rates {:?} -> {:?} with lambda 0.1, target 0.05; zero gradient below target",
        r0.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>(),
        r1.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>()
    ))
}

fn energy_model() -> Check {
    let c = EnergyConstants::default();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..1000 {
        let t = rng.random_range(1..64usize);
        let s = rng.random_range(0.0..1.0);
        let n = rng.random_range(1..1_000_000u64);
        let e = layer_energy(t, s, n, &c).unwrap();
        ensure(layer_energy(2 * t, s, n, &c).unwrap() == 2.0 * e, || {
            format!("T doubling at {t}")
        })?;
        ensure(layer_energy(t, 2.0 * s, n, &c).unwrap() == 2.0 * e, || {
            format!("s doubling at {s}")
        })?;
        let m = rng.random_range(1..10usize);
        let scaled = layer_energy(m * t, s, n, &c).unwrap();
        ensure(
            (scaled - m as f64 * e).abs() <= 4.0 * f64::EPSILON * scaled,
            || format!("T scaling by {m}"),
        )?;
    }
    ensure(layer_energy(4, 0.0, 100, &c).unwrap() == 0.0, || {
        "silent layer costs energy".into()
    })?;

    // hand-built tensors, dyadic amplitudes so the oracle sum is exact
    for trial in 0..200 {
        let t = rng.random_range(1..9);
        let n = rng.random_range(1..9);
        let exps: Vec<Option<u32>> = (0..t * n)
            .map(|_| rng.random_bool(0.5).then(|| rng.random_range(0..=4)))
            .collect();
        let entries = exps
            .iter()
            .map(|e| e.map_or(SpikeLevel::ZERO, |x| SpikeLevel::shift(x).unwrap()))
            .collect();
        let tensor = SpikeTensor::new(t, n, entries).unwrap();
        let sum: f64 = exps.iter().map(|e| e.map_or(0.0, oracles::pow2)).sum();
        let want = sum / (t * n) as f64;
        ensure(spike_rate(&tensor).unwrap() == want, || {
            format!("tensor {trial}: rate")
        })?;
    }
    Ok("exact doubling in T and s, T scaling within 4 ulp; 200 hand-built rates exact".into())
}

fn read_outputs(dir: &Path) -> Result<BTreeMap<String, String>, String> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let mut text = fs::read_to_string(entry.path()).map_err(|e| e.to_string())?;
        if name == shiftlif_cli::MANIFEST_FILE {
            let (stamp, rest) = text.split_once('\n').unwrap_or((&text, ""));
            if !stamp.starts_with('#') {
                return Err(format!("manifest header is not a comment: {stamp}"));
            }
            text = rest.to_string();
        }
        files.insert(name, text);
    }
    Ok(files)
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = "seed = 17\n\
        [dataset]\nsamples_per_class = 60\n\
        [training]\nepochs = 8\nhidden = [24, 16]\n\
        [analysis]\nsamples = 50000\nprecisions = [1, 2, 3]\n";
    fs::write(dir.path().join("c.toml"), config).unwrap();
    let mut compared = 0;
    for exp in ["train", "analyze"] {
        let mut runs = Vec::new();
        let out = format!("{exp}-out");
        for _ in 0..2 {
            let _ = fs::remove_dir_all(dir.path().join(&out));
            let status = Command::new(env!("CARGO_BIN_EXE_shiftlif"))
                .args([exp, "--config", "c.toml", "--out", &out])
                .current_dir(dir.path())
                .env_remove("SHIFTLIF_SEED")
                .env_remove("SHIFTLIF_OUT")
                .status()
                .map_err(|e| e.to_string())?;
            ensure(status.success(), || format!("{exp} exited with {status}"))?;
            runs.push(read_outputs(&dir.path().join(&out))?);
        }
        ensure(runs[0].len() >= 3, || {
            format!("{exp} wrote {} files", runs[0].len())
        })?;
        ensure(runs[0].keys().eq(runs[1].keys()), || {
            format!("{exp}: different file sets")
        })?;
        for (name, a) in &runs[0] {
            ensure(a == &runs[1][name], || format!("{exp}: {name} differs"))?;
            compared += 1;
        }
    }
    Ok(format!(
        "{compared} report files byte-identical across repeated train and analyze runs"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        (
            "alphabet structure",
            Duration::from_secs(1),
            alphabet_structure,
        ),
        (
            "quantizer oracle equivalence",
            Duration::from_secs(5),
            quantizer_oracles,
        ),
        (
            "pointwise delta bound",
            Duration::from_secs(10),
            delta_bound,
        ),
        (
            "error condition end to end",
            Duration::from_secs(30),
            error_condition_end_to_end,
        ),
        (
            "entropy chain-rule identities",
            Duration::from_secs(30),
            entropy_identities,
        ),
        (
            "kernel equivalence",
            Duration::from_secs(30),
            kernel_equivalence,
        ),
        ("gradient oracle", Duration::from_secs(60), gradient_oracle),
        ("learning", Duration::from_secs(120), learning),
        (
            "spike-rate regularization",
            Duration::from_secs(240),
            rate_regularization,
        ),
        ("energy model", Duration::from_secs(1), energy_model),
        ("determinism", Duration::from_secs(300), determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let result = match result {
            Ok(msg) if took > *budget => Err(format!("{msg}; took {took:.2?} > {budget:?}")),
            other => other,
        };
        match result {
            Ok(msg) => println!("PASS {:>2} {name}: {msg} [{took:.2?}]", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {msg} [{took:.2?}]", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
