//! Command implementations.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::Serialize;
use synres::datagen::{self, TaskKind, TaskSpec};
use synres::eval::{self, CoherencePoint, Gated, NoiseGrid, RetentionReport};
use synres::train::{self, EpochReport};
use synres::{GateMode, Params, RngState, Scalar};

use crate::checkpoint::{AnyCheckpoint, Checkpoint};
use crate::config::RunConfig;
use crate::dataset;
use crate::error::{CliError, CliResult};
use crate::metrics::{self, MetricsWriter};
use crate::{
    AblateArgs, BenchArgs, Cli, Command, EvalArgs, EvalMetric, GenDataArgs, Precision, TrainArgs,
};

pub fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Train(a) => match cli.precision {
            Precision::F32 => train_cmd::<f32>(cli, a),
            Precision::F64 => train_cmd::<f64>(cli, a),
        },
        Command::Eval(a) => eval_cmd(cli, a),
        Command::Bench(a) => bench_cmd(cli, a),
        Command::GenData(a) => gen_data_cmd(cli, a),
        Command::Ablate(a) => match cli.precision {
            Precision::F32 => ablate_cmd::<f32>(cli, a),
            Precision::F64 => ablate_cmd::<f64>(cli, a),
        },
    }
}

fn resolve_config(cli: &Cli, path: &Path) -> CliResult<RunConfig> {
    let cfg = RunConfig::load(path)?;
    Ok(match cli.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes to `out` when given, stdout otherwise.
fn emit(out: Option<&PathBuf>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => write_text(p, text),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}

fn to_json<S: Serialize>(v: &S) -> String {
    serde_json::to_string_pretty(v).expect("reports always serialise") + "\n"
}

fn train_cmd<T: Scalar>(cli: &Cli, args: &TrainArgs) -> CliResult<()> {
    let mut cfg = resolve_config(cli, &args.config)?;
    if let Some(mode) = args.gate_mode {
        cfg.model.gate_mode = mode;
    }
    let run_id = cfg.run_id();
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(&run_id));
    ensure_dir(&out)?;
    write_text(&out.join("config.toml"), &cfg.to_toml())?;
    let splits = datagen::build_splits(&cfg.task, cfg.model.vocab_size)?;
    let mut writer = MetricsWriter::create(&out.join("metrics.csv"))?;

    let mode = cfg.model.gate_mode;
    let mut best = f64::INFINITY;
    let mut sink_error: Option<CliError> = None;
    let mut sink = |r: &EpochReport, params: &Params<T>, rng: RngState| -> synres::Result<()> {
        let step = (|| -> CliResult<()> {
            writer.append(&metrics::epoch_rows(&run_id, mode, cfg.train.seed, r))?;
            let ck = Checkpoint {
                params: params.clone(),
                train: cfg.train.clone(),
                task: Some(cfg.task.clone()),
                rng,
                epoch: r.epoch,
                val_ppl: Some(r.val_ppl),
            };
            ck.save(&out.join("checkpoint_last.ckpt"))?;
            if r.val_ppl < best {
                best = r.val_ppl;
                ck.save(&out.join("checkpoint_best.ckpt"))?;
            }
            Ok(())
        })();
        eprintln!(
            "epoch {:>3}  loss {:.5}  ce {:.5}  val_ppl {:.4}  lr {:.3e}{}",
            r.epoch,
            r.train_loss,
            r.train_ce,
            r.val_ppl,
            r.lr,
            if r.decay_triggered { "  (decay)" } else { "" }
        );
        step.map_err(|e| {
            let msg = e.to_string();
            sink_error = Some(e);
            synres::Error::Io(msg)
        })
    };
    let result = train::run_training::<T>(&cfg.model, &cfg.train, &splits, None, &mut sink);
    if let Some(e) = sink_error {
        return Err(e);
    }
    let run = result.map_err(|f| CliError::from(f.error))?;
    let last = run.history.last().expect("at least one epoch");
    println!(
        "run {run_id}: {} epochs, final train ce {:.6}, val perplexity {:.4}, outputs in {}",
        run.history.len(),
        last.train_ce,
        last.val_ppl,
        out.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub checkpoint: String,
    pub epoch: usize,
    pub gate_mode: GateMode,
    pub task: TaskSpec,
    pub rows: usize,
    pub perplexity: Option<f64>,
    pub retention: Option<RetentionReport>,
    pub noise: Option<NoiseGrid>,
    pub coherence: Option<Vec<CoherencePoint>>,
}

fn eval_cmd(cli: &Cli, args: &EvalArgs) -> CliResult<()> {
    let report = match AnyCheckpoint::load(&args.checkpoint)? {
        AnyCheckpoint::F32(c) => evaluate(cli, args, &c)?,
        AnyCheckpoint::F64(c) => evaluate(cli, args, &c)?,
    };
    emit(cli.out.as_ref(), &to_json(&report))
}

fn evaluate<T: Scalar>(cli: &Cli, args: &EvalArgs, ck: &Checkpoint<T>) -> CliResult<EvalReport> {
    let mut task = match &args.config {
        Some(p) => resolve_config(cli, p)?.task,
        None => ck
            .task
            .clone()
            .ok_or_else(|| CliError::Config("checkpoint records no task; pass --config".into()))?,
    };
    if let Some(seed) = cli.seed {
        task.seed = seed;
    }
    if let Some(d) = &args.distances {
        if task.kind != TaskKind::KvRecall {
            return Err(CliError::Config(
                "--distances only applies to kv_recall tasks".into(),
            ));
        }
        task.distances = d.clone();
    }
    let cfg = &ck.params.config;
    let splits = datagen::build_splits(&task, cfg.vocab_size)?;
    let rows = &splits.validation;
    if rows.is_empty() {
        return Err(CliError::Config(
            "task produces no validation rows (val_samples = 0)".into(),
        ));
    }
    if let Some(s) = rows.iter().find(|s| s.len() > cfg.max_seq_len) {
        return Err(CliError::Config(format!(
            "task rows have length {} but the model accepts at most {}",
            s.len(),
            cfg.max_seq_len
        )));
    }
    let mode = args.gate_mode.unwrap_or(cfg.gate_mode);
    let model = Gated::new(&ck.params, mode);
    let wanted = |m: EvalMetric| match &args.metrics {
        Some(list) => list.contains(&m),
        None => match m {
            EvalMetric::Retention => task.kind == TaskKind::KvRecall,
            EvalMetric::Coherence => task.kind != TaskKind::KvRecall,
            _ => true,
        },
    };
    Ok(EvalReport {
        checkpoint: args.checkpoint.display().to_string(),
        epoch: ck.epoch,
        gate_mode: mode,
        rows: rows.len(),
        perplexity: wanted(EvalMetric::Perplexity)
            .then(|| eval::perplexity(&model, rows))
            .transpose()?,
        retention: wanted(EvalMetric::Retention)
            .then(|| eval::retention_probe(&model, rows, &splits.layout))
            .transpose()?,
        noise: wanted(EvalMetric::Noise)
            .then(|| {
                let cands = eval::candidates_for(&splits.layout, task.kind);
                eval::noise_robustness(
                    &model,
                    rows,
                    &splits.layout,
                    &cands,
                    &args.noise_levels,
                    task.seed,
                )
            })
            .transpose()?,
        coherence: wanted(EvalMetric::Coherence)
            .then(|| eval::coherence_curve(&model, rows))
            .transpose()?,
        task,
    })
}

#[derive(Debug, Serialize)]
struct BenchRow {
    seq_len: usize,
    gate_mode: GateMode,
    median_ms: f64,
    flops: u64,
    gate_flops: u64,
    overhead_ratio: f64,
}

fn bench_cmd(cli: &Cli, args: &BenchArgs) -> CliResult<()> {
    let csv = match (&args.checkpoint, cli.precision) {
        (Some(p), _) => match AnyCheckpoint::load(p)? {
            AnyCheckpoint::F32(c) => bench_rows(&c.params, args, cli.seed.unwrap_or(0))?,
            AnyCheckpoint::F64(c) => bench_rows(&c.params, args, cli.seed.unwrap_or(0))?,
        },
        (None, precision) => {
            let path = args
                .config
                .as_ref()
                .expect("clap requires --checkpoint or --config");
            let cfg = resolve_config(cli, path)?;
            match precision {
                Precision::F32 => bench_rows(
                    &train::init_params::<f32>(&cfg.model, &cfg.train)?,
                    args,
                    cfg.train.seed,
                )?,
                Precision::F64 => bench_rows(
                    &train::init_params::<f64>(&cfg.model, &cfg.train)?,
                    args,
                    cfg.train.seed,
                )?,
            }
        }
    };
    emit(cli.out.as_ref(), &csv)
}

fn bench_rows<T: Scalar>(params: &Params<T>, args: &BenchArgs, seed: u64) -> CliResult<String> {
    let modes = [GateMode::Learned, GateMode::Disabled];
    let curve = eval::latency_bench(params, &args.seq_lens, args.reps, &modes, seed)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &curve.rows {
        w.serialize(BenchRow {
            seq_len: r.seq_len,
            gate_mode: r.gate_mode,
            median_ms: r.median_ms,
            flops: r.flops,
            gate_flops: r.gate_flops,
            overhead_ratio: curve.overhead(r.seq_len).unwrap_or(f64::NAN),
        })
        .map_err(|e| CliError::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn gen_data_cmd(cli: &Cli, args: &GenDataArgs) -> CliResult<()> {
    let out = cli
        .out
        .clone()
        .ok_or_else(|| CliError::Config("gen-data needs --out <file>".into()))?;
    let seed = cli.seed.unwrap_or(0);
    let mut task = match args.task {
        TaskKind::Copy => TaskSpec::copy(args.seq_len, args.samples, seed),
        TaskKind::KvRecall => TaskSpec::kv_recall(
            args.seq_len,
            args.pairs,
            args.distances.clone(),
            args.samples,
            seed,
        ),
        TaskKind::Corpus => {
            return Err(CliError::Config(
                "gen-data only generates synthetic tasks".into(),
            ))
        }
    };
    task.value_tokens = args.value_tokens;
    let layout = task.layout(args.vocab_size)?;
    task.validate(&layout)?;
    let splits = datagen::build_splits(&task, args.vocab_size)?;
    let container = dataset::to_container(&out, &splits.train, &task, args.vocab_size)?;
    let sidecar = dataset::Sidecar {
        task: task.clone(),
        vocab_size: args.vocab_size,
        layout: splits.layout.clone(),
        rows: splits.train.len(),
        seq_len: task.seq_len,
        split: "train".into(),
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    container.write(&out)?;
    write_text(&dataset::sidecar_path(&out), &to_json(&sidecar))
}

#[derive(Debug, Serialize)]
struct ArmOutput<'a> {
    gate_mode: GateMode,
    final_val_ppl: f64,
    retention: &'a Option<RetentionReport>,
    noise: &'a NoiseGrid,
    loss_curve: Vec<f64>,
    val_ppl_curve: Vec<f64>,
    stream_digests: &'a [String],
    synaptic_unchanged: bool,
}

#[derive(Debug, Serialize)]
struct AblationOutput<'a> {
    run_id: String,
    arms: Vec<ArmOutput<'a>>,
    deltas: Option<eval::AblationDeltas>,
    streams_identical: bool,
}

fn ablate_cmd<T: Scalar>(cli: &Cli, args: &AblateArgs) -> CliResult<()> {
    let cfg = resolve_config(cli, &args.config)?;
    let run_id = cfg.run_id();
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("{run_id}-ablate")));
    ensure_dir(&out)?;
    write_text(&out.join("config.toml"), &cfg.to_toml())?;
    let writers = [GateMode::Learned, GateMode::Disabled]
        .map(|m| MetricsWriter::create(&out.join(format!("metrics_{m}.csv"))).map(Mutex::new));
    let [on, off] = writers;
    let (on, off) = (on?, off?);
    let failure: Mutex<Option<CliError>> = Mutex::new(None);
    let seed = cfg.train.seed;
    let on_epoch = |mode: GateMode, r: &EpochReport| {
        let w = if mode == GateMode::Learned { &on } else { &off };
        let rows = metrics::epoch_rows(&run_id, mode, seed, r);
        if let Err(e) = w.lock().unwrap().append(&rows) {
            failure.lock().unwrap().get_or_insert(e);
        }
        eprintln!(
            "[{mode}] epoch {:>3}  loss {:.5}  val_ppl {:.4}",
            r.epoch, r.train_loss, r.val_ppl
        );
    };
    let report = eval::ablate::<T>(
        &cfg.model,
        &cfg.train,
        &cfg.task,
        &args.noise_levels,
        &on_epoch,
    )?;
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let output = AblationOutput {
        run_id,
        arms: report
            .arms
            .iter()
            .map(|a| ArmOutput {
                gate_mode: a.gate_mode,
                final_val_ppl: a.final_val_ppl,
                retention: &a.retention,
                noise: &a.noise,
                loss_curve: a.loss_curve(),
                val_ppl_curve: a.history.iter().map(|r| r.val_ppl).collect(),
                stream_digests: &a.stream_digests,
                synaptic_unchanged: a.synaptic_unchanged,
            })
            .collect(),
        deltas: report.deltas(),
        streams_identical: report
            .arms
            .windows(2)
            .all(|w| w[0].stream_digests == w[1].stream_digests),
    };
    write_text(&out.join("ablation.json"), &to_json(&output))?;
    if let Some(d) = output.deltas {
        println!(
            "gate on vs off: perplexity {:+.2}%, retention {}, final loss {:+.5}",
            d.perplexity_change_percent,
            d.retention_change_points
                .map_or("n/a".to_string(), |r| format!("{r:+.2} points")),
            d.final_loss_change
        );
    }
    Ok(())
}
