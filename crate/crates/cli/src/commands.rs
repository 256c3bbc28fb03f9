use std::fs;
use std::path::Path;

use ghp_core::evaluation::{self, AlignOptions, VerifyOptions};
use ghp_core::hawkes::{load_jsonl, save_jsonl};
use ghp_core::learning::{self, LearnConfig, Method, VmaxSetting};
use ghp_core::nalgebra::DMatrix;
use ghp_core::rng;
use ghp_core::transport::{hot_distance, Beta, OtSettings};
use ghp_core::{EventSequence, GraphonParams};
use serde::Serialize;

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::manifest::Recorder;

fn load_model(path: &Path, recorder: &mut Recorder) -> CliResult<GraphonParams> {
    recorder.input(path)?;
    GraphonParams::load(path).map_err(|e| CliError::from(e).at(path))
}

fn load_sequences(path: &Path, recorder: &mut Recorder) -> CliResult<Vec<EventSequence>> {
    recorder.input(path)?;
    load_jsonl(path).map_err(|e| CliError::from(e).at(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::from(e).at(path))
}

/// Write to `out` with a manifest, or print to stdout when no path is given.
fn emit<T: Serialize>(out: Option<&Path>, value: &T, recorder: Recorder) -> CliResult<()> {
    match out {
        Some(path) => {
            write_json(path, value)?;
            recorder.finish(path, &[path])?;
        }
        None => println!("{}", serde_json::to_string_pretty(value)?),
    }
    Ok(())
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn ot_settings(beta: BetaArg) -> OtSettings {
    let beta = match beta {
        BetaArg::Auto => Beta::Auto,
        BetaArg::Fixed(b) => Beta::Fixed(b),
    };
    OtSettings { beta, ..OtSettings::default() }
}

fn longest_horizon(sequences: &[EventSequence]) -> f64 {
    sequences.iter().map(|s| s.horizon).fold(0.0, f64::max)
}

pub fn init(args: &InitArgs) -> CliResult<()> {
    let recorder = Recorder::start("init", Some(args.seed), args)?;
    let params = GraphonParams::random(args.order, args.vmax, args.kernel_rate, &mut rng::stream(args.seed, &[]))?;
    params.save(&args.out).map_err(|e| CliError::from(e).at(&args.out))?;
    recorder.finish(&args.out, &[&args.out])?;
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    if args.count == 0 {
        return Err(CliError::usage("--count must be at least 1"));
    }
    if !(args.horizon.is_finite() && args.horizon > 0.0) {
        return Err(CliError::usage("--horizon must be positive"));
    }
    let mut recorder = Recorder::start("simulate", Some(args.seed), args)?;
    let params = load_model(&args.model, &mut recorder)?;
    let (_, sequences) = evaluation::generate(&params, args.count, args.horizon, args.seed)?;
    log::info!("simulated {} sequences, {} events", sequences.len(), sequences.iter().map(|s| s.len()).sum::<usize>());
    save_jsonl(&args.out, &sequences).map_err(|e| CliError::from(e).at(&args.out))?;
    recorder.finish(&args.out, &[&args.out])?;
    Ok(())
}

#[derive(Serialize)]
struct ReportRow {
    epoch: usize,
    loss: f64,
    mean_reward: f64,
    d_fgw: Option<f64>,
    seconds: f64,
}

pub fn learn(args: &LearnArgs) -> CliResult<()> {
    let mut recorder = Recorder::start("learn", Some(args.seed), args)?;
    let data = load_sequences(&args.train, &mut recorder)?;
    let reference = args.ref_model.as_deref().map(|p| load_model(p, &mut recorder)).transpose()?;
    let config = LearnConfig {
        epochs: args.epochs,
        batch_size: args.batch,
        learning_rate: args.lr,
        v_max_hat: match args.vmax {
            VmaxArg::Auto => VmaxSetting::Auto,
            VmaxArg::Fixed(v) => VmaxSetting::Fixed(v),
        },
        sinkhorn_beta: ot_settings(args.beta).beta,
        method: match args.method {
            MethodArg::Hot => Method::Hot,
            MethodArg::Raml => Method::Raml,
        },
        raml_tau: args.tau,
        horizon: args.horizon,
        seed: args.seed,
        order: args.order,
        kernel_rate: args.kernel_rate,
        fgw_grid: args.fgw_grid,
        freeze_g: false,
    };
    let report = learning::train(&data, &config, reference.as_ref())?;
    if report.skipped_batches > 0 {
        log::warn!("{} batches skipped: every simulated sequence had zero likelihood", report.skipped_batches);
    }
    report.params.save(&args.out).map_err(|e| CliError::from(e).at(&args.out))?;
    let mut outputs = vec![args.out.as_path()];
    if let Some(path) = &args.report {
        let mut writer = csv::Writer::from_path(path).map_err(|e| CliError::from(e).at(path))?;
        for e in &report.epochs {
            writer.serialize(ReportRow {
                epoch: e.epoch,
                loss: e.loss,
                mean_reward: e.mean_reward,
                d_fgw: e.d_fgw,
                seconds: e.seconds,
            })?;
        }
        writer.flush()?;
        outputs.push(path);
    }
    recorder.finish(&args.out, &outputs)?;
    Ok(())
}

#[derive(Serialize)]
struct DistanceOutput {
    d_ot: f64,
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    inner_d: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    plans: Option<Vec<Vec<Vec<Vec<f64>>>>>,
}

pub fn distance(args: &DistanceArgs) -> CliResult<()> {
    let mut recorder = Recorder::start("distance", None, args)?;
    let a = load_sequences(&args.a, &mut recorder)?;
    let b = load_sequences(&args.b, &mut recorder)?;
    let hot = hot_distance(&a, &b, &ot_settings(args.beta))?;
    let output = DistanceOutput {
        d_ot: hot.distance,
        q: rows(&hot.coupling.matrix),
        inner_d: rows(&hot.inner_distances),
        plans: args
            .plans
            .then(|| hot.inner_plans.iter().map(|row| row.iter().map(|p| rows(&p.matrix)).collect()).collect()),
    };
    write_json(&args.out, &output)?;
    recorder.finish(&args.out, &[&args.out])?;
    Ok(())
}

pub fn eval(command: &EvalCommand) -> CliResult<()> {
    match command {
        EvalCommand::Fgw(args) => {
            let mut recorder = Recorder::start("eval fgw", None, args)?;
            let a = load_model(&args.model_a, &mut recorder)?;
            let b = load_model(&args.model_b, &mut recorder)?;
            let d = evaluation::model_fgw(&a, &b, args.grid)?;
            emit(args.out.as_deref(), &serde_json::json!({ "d_fgw": d, "grid": args.grid }), recorder)
        }
        EvalCommand::Dot(args) => {
            let mut recorder = Recorder::start("eval dot", Some(args.seed), args)?;
            let params = load_model(&args.model, &mut recorder)?;
            let test = load_sequences(&args.test, &mut recorder)?;
            let n_gen = args.ngen.unwrap_or(test.len());
            let horizon = args.horizon.unwrap_or_else(|| longest_horizon(&test));
            let hot = evaluation::set_ot_metric(&params, &test, n_gen, horizon, args.seed, &ot_settings(args.beta))?;
            let value = serde_json::json!({ "d_ot": hot.distance, "n_gen": n_gen, "horizon": horizon });
            emit(args.out.as_deref(), &value, recorder)
        }
        EvalCommand::Align(args) => {
            let mut recorder = Recorder::start("eval align", Some(args.seed), args)?;
            let params = load_model(&args.model, &mut recorder)?;
            let test = load_sequences(&args.test, &mut recorder)?;
            if test.is_empty() {
                return Err(CliError::new(crate::error::Kind::Schema, "test set is empty").at(&args.test));
            }
            let n_gen = args.ngen.unwrap_or(test.len());
            if n_gen == 0 {
                return Err(CliError::usage("--ngen must be at least 1"));
            }
            let horizon = args.horizon.unwrap_or_else(|| longest_horizon(&test));
            let (models, generated) = evaluation::generate(&params, n_gen, horizon, args.seed)?;
            let hot = hot_distance(&generated, &test, &ot_settings(args.beta))?;
            let latents: Vec<Vec<f64>> = models.into_iter().map(|m| m.latent_x.unwrap_or_default()).collect();
            let opts = AlignOptions { bandwidth: args.bandwidth, grid_n: args.grid, all_pairs: args.all_pairs };
            let result = evaluation::align_types(&hot.coupling, &hot.inner_plans, &latents, &opts)?;
            let unaligned = result.types.iter().filter(|t| !t.is_aligned()).count();
            if unaligned > 0 {
                log::warn!("{unaligned} event types received no transport mass and stay unaligned");
            }
            emit(Some(&args.out), &result, recorder)
        }
        EvalCommand::Verify(args) => {
            let mut recorder = Recorder::start("eval verify", Some(args.seed), args)?;
            let params = load_model(&args.model, &mut recorder)?;
            let opts = VerifyOptions {
                pairs: args.pairs,
                seed: args.seed,
                lipschitz_grid: args.lipschitz_grid,
                ..VerifyOptions::default()
            };
            let report = evaluation::verify_properties(&params, &opts)?;
            log::info!("{} bound violations over {} pairs", report.total_violations(), report.pairs);
            emit(Some(&args.out), &report, recorder)
        }
    }
}
