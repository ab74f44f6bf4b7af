use std::io::Write;
use std::path::{Path, PathBuf};

use mpcn::analysis::{self, TraceRecord};
use mpcn::checkpoint::Checkpoint;
use mpcn::data::{synthetic, write_corpus, BankShape, Part, PrepareConfig, Snapshot};
use mpcn::model::{ModelKind, ModelSpec, PointerMode};
use mpcn::train::{self, EpochRecord};
use mpcn::{Error, Precision, Scalar};
use serde_json::json;

use crate::args::*;
use crate::config::ExperimentConfig;
use crate::CliError;

type Out<'a> = &'a mut dyn Write;

pub struct Ctx {
    pub seed: Option<u64>,
    pub data_dir: Option<PathBuf>,
    pub json: bool,
}

impl Ctx {
    fn path(&self, p: &Path) -> PathBuf {
        match &self.data_dir {
            Some(d) if p.is_relative() => d.join(p),
            _ => p.to_path_buf(),
        }
    }

    fn seed_or(&self, fallback: u64) -> u64 {
        self.seed.unwrap_or(fallback)
    }
}

fn emit(out: Out, value: &serde_json::Value) -> Result<(), CliError> {
    writeln!(out, "{}", serde_json::to_string_pretty(value).map_err(Error::from)?).map_err(io_err)
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Core(Error::io("<stdout>", e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e).into())
}

pub fn prepare(ctx: &Ctx, a: &PrepareArgs, out: Out) -> Result<(), CliError> {
    let config = PrepareConfig {
        k_core: a.k_core,
        min_count: a.min_count,
        shape: BankShape {
            max_reviews: a.max_reviews,
            max_words: a.max_words,
        },
        seed: ctx.seed_or(PrepareConfig::default().seed),
    };
    if a.k_core == 0 || a.max_reviews == 0 || a.max_words == 0 {
        return Err(CliError::Usage("--k-core, --max-reviews and --max-words must be positive".into()));
    }
    let snap = Snapshot::prepare(ctx.path(&a.corpus), config)?;
    let path = ctx.path(&a.out);
    write_file(&path, &snap.to_bytes()?)?;
    let stats_path = path.with_extension("stats.json");
    let stats = serde_json::to_value(&snap.stats).map_err(Error::from)?;
    write_file(&stats_path, serde_json::to_string_pretty(&stats).map_err(Error::from)?.as_bytes())?;
    if ctx.json {
        emit(
            out,
            &json!({
                "snapshot": path,
                "stats_file": stats_path,
                "seed": snap.seed,
                "stats": stats,
            }),
        )
    } else {
        let s = &snap.stats;
        writeln!(
            out,
            "snapshot {}\n  users {}  items {}  interactions {}  vocabulary {}\n  train {}  dev {}  test {}  skipped lines {}",
            path.display(),
            s.users,
            s.items,
            s.interactions,
            s.vocab_size,
            s.train,
            s.dev,
            s.test,
            s.skipped_lines
        )
        .map_err(io_err)
    }
}

/// Folds the config file and flags into one experiment configuration.
pub fn experiment(ctx: &Ctx, a: &TrainArgs) -> Result<ExperimentConfig, CliError> {
    let mut c = ExperimentConfig::default();
    if let Some(p) = &a.config {
        c.apply_file(&ctx.path(p))?;
    }
    if let Some(m) = &a.model {
        c.model = m.parse().map_err(|e: Error| CliError::Usage(e.to_string()))?;
    }
    let mpcn_only = [
        ("--pointers", a.pointers.is_some()),
        ("--ffn-layers", a.ffn_layers.is_some()),
        ("--aggregation", a.aggregation.is_some()),
        ("--tau", a.tau.is_some()),
        ("--soft-pointers", a.soft_pointers),
        ("--no-gates", a.no_gates),
        ("--no-fm", a.no_fm),
        ("--no-word-coattention", a.no_word_coattention),
        ("--no-review-coattention", a.no_review_coattention),
    ];
    if c.model != ModelKind::Mpcn {
        if let Some((flag, _)) = mpcn_only.iter().find(|(_, set)| *set) {
            return Err(CliError::Usage(format!("{flag} only applies to --model mpcn, not {}", c.model)));
        }
    }
    if a.no_review_coattention && a.pointers.is_some_and(|p| p > 1) {
        return Err(CliError::Usage(
            "--pointers > 1 conflicts with --no-review-coattention (no review pointers are used)".into(),
        ));
    }
    let usage = |e: Error| CliError::Usage(e.to_string());
    if let Some(p) = &a.precision {
        c.precision = p.parse().map_err(usage)?;
    }
    if let Some(v) = a.pointers {
        c.mpcn.pointers = v;
    }
    if let Some(v) = a.embed_dim {
        c.mpcn.embed_dim = v;
        c.baseline.embed_dim = v;
    }
    if let Some(v) = a.ffn_layers {
        c.mpcn.ffn_layers = v;
    }
    if let Some(v) = &a.aggregation {
        c.mpcn.aggregation = v.parse().map_err(usage)?;
    }
    if let Some(v) = a.tau {
        c.mpcn.tau = v;
    }
    if let Some(v) = a.dropout {
        c.mpcn.dropout = v;
        c.baseline.dropout = v;
    }
    if a.soft_pointers {
        c.mpcn.pointer_mode = PointerMode::Soft;
    }
    c.mpcn.use_gates &= !a.no_gates;
    c.mpcn.use_fm &= !a.no_fm;
    c.mpcn.use_word_coattention &= !a.no_word_coattention;
    c.mpcn.use_review_coattention &= !a.no_review_coattention;
    if let Some(v) = a.lr {
        c.train.lr = v;
    }
    if let Some(v) = a.epochs {
        c.train.max_epochs = v;
    }
    match a.patience {
        Some(v) => c.train.patience = v,
        // a short run without an explicit patience just never stops early
        None => c.train.patience = c.train.patience.min(c.train.max_epochs),
    }
    if let Some(v) = a.l2 {
        c.train.l2 = v;
    }
    if let Some(v) = a.batch_size {
        c.train.batch_size = v;
    }
    if let Some(s) = ctx.seed {
        c.train.seed = s;
    }
    c.train.validate().map_err(usage)?;
    match c.model {
        ModelKind::Mpcn => c.mpcn.validate().map_err(usage)?,
        _ => c.baseline.validate().map_err(usage)?,
    }
    Ok(c)
}

fn spec_for(c: &ExperimentConfig, snap: &Snapshot) -> ModelSpec {
    let (users, items) = (snap.banks.users.len(), snap.banks.items.len());
    match c.model {
        ModelKind::Mpcn => ModelSpec::Mpcn {
            config: c.mpcn,
            vocab_size: snap.vocab.len(),
            bank_shape: snap.config.shape,
        },
        ModelKind::Mf => ModelSpec::Mf {
            config: c.baseline,
            users,
            items,
        },
        ModelKind::Fm => ModelSpec::Fm {
            config: c.baseline,
            users,
            items,
        },
        ModelKind::Mlp => ModelSpec::Mlp {
            config: c.baseline,
            users,
            items,
        },
    }
}

fn optional_mse<T: Scalar>(model: &mpcn::model::Model<T>, snap: &Snapshot, part: Part) -> mpcn::Result<Option<f64>> {
    let exs = snap.examples(part);
    if exs.is_empty() {
        return Ok(None);
    }
    train::evaluate_mse(model, &exs, &snap.banks).map(Some)
}

struct TrainReport {
    checkpoint: Checkpoint,
    dev_mse: f64,
    test_mse: Option<f64>,
    epochs_run: usize,
}

fn run_training<T: Scalar>(
    c: &ExperimentConfig,
    snap: &Snapshot,
    history: &mut dyn Write,
    progress: &mut dyn FnMut(&EpochRecord),
) -> mpcn::Result<TrainReport> {
    let spec = spec_for(c, snap);
    let mean = snap.train_mean();
    let mut model = mpcn::model::Model::<T>::build(&spec, mean, c.train.seed)?;
    let (tr, dev) = (snap.examples(Part::Train), snap.examples(Part::Dev));
    let mut write_err = None;
    let outcome = train::train(&mut model, &snap.banks, &tr, &dev, &c.train, |rec| {
        let line = serde_json::to_string(rec).expect("records serialize");
        if let Err(e) = writeln!(history, "{line}") {
            write_err.get_or_insert(e);
        }
        progress(rec);
    })?;
    if let Some(e) = write_err {
        return Err(Error::io("<history>", e));
    }
    let test_mse = optional_mse(&model, snap, Part::Test)?;
    let mut checkpoint = Checkpoint::from_model(&model, mean, c.train.seed);
    checkpoint.train = Some(c.train.clone());
    let epochs_run = outcome.history.len();
    let dev_mse = outcome.best_dev_mse;
    checkpoint.outcome = Some(outcome);
    Ok(TrainReport {
        checkpoint,
        dev_mse,
        test_mse,
        epochs_run,
    })
}

pub fn train_cmd(ctx: &Ctx, a: &TrainArgs, out: Out, err: Out) -> Result<(), CliError> {
    let c = experiment(ctx, a)?;
    let snap = Snapshot::load(ctx.path(&a.snapshot))?;
    let ck_path = ctx.path(&a.out);
    let hist_path = match &a.history {
        Some(h) => ctx.path(h),
        None => ck_path.with_extension("history.jsonl"),
    };
    if let Some(dir) = hist_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = std::fs::File::create(&hist_path).map_err(|e| Error::io(&hist_path, e))?;
    let mut history = std::io::BufWriter::new(file);
    let quiet = a.quiet || ctx.json;
    let mut progress = |r: &EpochRecord| {
        if !quiet {
            let _ = writeln!(
                err,
                "epoch {:>3}  train_mse {:.4}  dev_mse {:.4}  ({} ms)",
                r.epoch, r.train_mse, r.dev_mse, r.wall_ms
            );
        }
    };
    let report = match c.precision {
        Precision::F32 => run_training::<f32>(&c, &snap, &mut history, &mut progress)?,
        Precision::F64 => run_training::<f64>(&c, &snap, &mut history, &mut progress)?,
    };
    history.flush().map_err(|e| Error::io(&hist_path, e))?;
    let bytes = serde_json::to_vec(&report.checkpoint).map_err(Error::from)?;
    write_file(&ck_path, &bytes)?;
    let outcome = report.checkpoint.outcome.as_ref().expect("set by run_training");
    if ctx.json {
        emit(
            out,
            &json!({
                "model": c.model,
                "precision": c.precision,
                "checkpoint": ck_path,
                "history": hist_path,
                "best_epoch": outcome.best_epoch,
                "epochs_run": report.epochs_run,
                "stopped_early": outcome.stopped_early,
                "dev_mse": report.dev_mse,
                "test_mse": report.test_mse,
            }),
        )
    } else {
        writeln!(
            out,
            "{:<6} {:>10} {:>10} {:>10}\n{:<6} {:>10} {:>10.4} {:>10}",
            "model",
            "best_epoch",
            "dev_mse",
            "test_mse",
            c.model.to_string(),
            outcome.best_epoch,
            report.dev_mse,
            report.test_mse.map_or("-".to_string(), |v| format!("{v:.4}")),
        )
        .map_err(io_err)
    }
}

fn load_pair(ctx: &Ctx, snapshot: &Path, checkpoint: &Path) -> Result<(Snapshot, Checkpoint), CliError> {
    let snap = Snapshot::load(ctx.path(snapshot))?;
    let ck = Checkpoint::load(ctx.path(checkpoint))?;
    ck.check_compatible(&snap)?;
    Ok((snap, ck))
}

fn eval_with<T: Scalar>(ck: &Checkpoint, snap: &Snapshot) -> mpcn::Result<(Option<f64>, Option<f64>)> {
    let model = ck.to_model::<T>()?;
    Ok((optional_mse(&model, snap, Part::Dev)?, optional_mse(&model, snap, Part::Test)?))
}

pub fn eval(ctx: &Ctx, a: &EvalArgs, out: Out) -> Result<(), CliError> {
    let (snap, ck) = load_pair(ctx, &a.snapshot, &a.checkpoint)?;
    let (dev, test) = match ck.precision {
        Precision::F32 => eval_with::<f32>(&ck, &snap)?,
        Precision::F64 => eval_with::<f64>(&ck, &snap)?,
    };
    if ctx.json {
        emit(
            out,
            &json!({
                "model": ck.model.kind(),
                "checkpoint": ctx.path(&a.checkpoint),
                "dev_mse": dev,
                "test_mse": test,
                "dev_examples": snap.split.dev.len(),
                "test_examples": snap.split.test.len(),
            }),
        )
    } else {
        let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6}"));
        writeln!(out, "dev_mse  {}\ntest_mse {}", f(dev), f(test)).map_err(io_err)
    }
}

fn mpcn_model<T: Scalar>(ck: &Checkpoint) -> Result<mpcn::model::Mpcn<T>, CliError> {
    match ck.to_model::<T>()? {
        mpcn::model::Model::Mpcn(m) => Ok(m),
        other => Err(CliError::Usage(format!(
            "pointer tools need an mpcn checkpoint, got {}",
            other.kind()
        ))),
    }
}

fn analyze_with<T: Scalar>(
    ctx: &Ctx,
    a: &AnalyzeArgs,
    snap: &Snapshot,
    ck: &Checkpoint,
) -> Result<analysis::PointerBehaviorReport, CliError> {
    let model = mpcn_model::<T>(ck)?;
    let cfg = model.config();
    let np = if cfg.use_review_coattention { cfg.pointers } else { 0 };
    if np < 2 {
        return Err(CliError::Usage(format!(
            "pointer behaviour needs at least 2 review pointers; this model has {np}"
        )));
    }
    if a.sample_size == 0 {
        return Err(CliError::Usage("--sample-size must be positive".into()));
    }
    let sample = analysis::sample_examples(&snap.examples(Part::Test), a.sample_size, ctx.seed_or(0));
    let traces = analysis::traces(&model, &sample, &snap.banks)?;
    if let Some(p) = &a.traces {
        let mut text = String::new();
        for (ex, t) in sample.iter().zip(&traces) {
            let rec = TraceRecord::new(snap, ex, t, a.matrices);
            text.push_str(&serde_json::to_string(&rec).map_err(Error::from)?);
            text.push('\n');
        }
        write_file(&ctx.path(p), text.as_bytes())?;
    }
    Ok(analysis::PointerBehaviorReport::from_traces(np, &traces)?)
}

pub fn analyze(ctx: &Ctx, a: &AnalyzeArgs, out: Out) -> Result<(), CliError> {
    let (snap, ck) = load_pair(ctx, &a.snapshot, &a.checkpoint)?;
    let report = match ck.precision {
        Precision::F32 => analyze_with::<f32>(ctx, a, &snap, &ck)?,
        Precision::F64 => analyze_with::<f64>(ctx, a, &snap, &ck)?,
    };
    if ctx.json {
        let mut v = serde_json::to_value(&report).map_err(Error::from)?;
        v["majority_all_unique"] = json!(report.all_unique > 50.0);
        emit(out, &v)
    } else {
        write!(out, "{}", report.to_text()).map_err(io_err)?;
        let note = if report.all_unique > 50.0 {
            "most sampled pairs use distinct reviews for every pointer"
        } else {
            "fewer than half of the sampled pairs use distinct reviews for every pointer"
        };
        writeln!(out, "  {note}").map_err(io_err)
    }
}

pub fn export(ctx: &Ctx, a: &ExportArgs, out: Out) -> Result<(), CliError> {
    let (snap, ck) = load_pair(ctx, &a.snapshot, &a.checkpoint)?;
    let dir = ctx.path(&a.out);
    let res = match ck.precision {
        Precision::F32 => analysis::export_affinity(&mpcn_model::<f32>(&ck)?, &snap, &a.user, &a.item, &dir)?,
        Precision::F64 => analysis::export_affinity(&mpcn_model::<f64>(&ck)?, &snap, &a.user, &a.item, &dir)?,
    };
    if ctx.json {
        emit(out, &serde_json::to_value(&res).map_err(Error::from)?)
    } else {
        for (h, (p, ptr)) in res.matrices.iter().zip(&res.pointers).enumerate() {
            writeln!(out, "head {h}: user review {} / item review {}  -> {}", ptr.pa, ptr.pb, p.display())
                .map_err(io_err)?;
        }
        writeln!(out, "selection -> {}", res.selection.display()).map_err(io_err)
    }
}

pub fn synth(ctx: &Ctx, a: &SynthArgs, out: Out) -> Result<(), CliError> {
    if !(a.rating_noise >= 0.0 && a.rating_noise.is_finite()) {
        return Err(CliError::Usage("--rating-noise must be a finite non-negative number".into()));
    }
    if a.users == 0 || a.items == 0 || a.per_user == 0 {
        return Err(CliError::Usage("--users, --items and --per-user must be positive".into()));
    }
    let xs = synthetic::review_corpus(synthetic::ReviewCorpusConfig {
        users: a.users,
        items: a.items,
        per_user: a.per_user,
        rating_noise: a.rating_noise,
        seed: ctx.seed_or(7),
    });
    let path = ctx.path(&a.out);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_corpus(&path, &xs)?;
    if ctx.json {
        emit(out, &json!({ "corpus": path, "interactions": xs.len() }))
    } else {
        writeln!(out, "wrote {} interactions to {}", xs.len(), path.display()).map_err(io_err)
    }
}
