//! `msynth` command implementations. `main.rs` only parses arguments and
//! maps errors to exit codes.

mod args;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;

use msynth_core::dataio::{
    generate_phantom_corpus, preprocess, read_slice_file, write_slice_file, CorpusManifest, PhantomConfig, TargetSlice,
};
use msynth_core::evalmetrics::{evaluate_conditions, EvalReport};
use msynth_core::synthesis::{difference_map, encode_grayscale_png, Synthesizer};
use msynth_core::training::{fit, TrainConfig};
use msynth_core::{read_json, write_atomic, write_json_pretty};
use msynth_study::{
    aggregate_ratings, bind, check_images, plan_study, read_ratings, serve, ImagePools, RatingStore, StudyPlan,
    StudyState,
};

pub use args::{Cli, Command, EvalArgs, PhantomArgs, PlanArgs, ReportArgs, ServeArgs, StudyCommand, SynthArgs, TrainArgs};

/// Name of the resolved-settings echo written into output directories.
pub const RUN_ECHO: &str = "run.json";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] msynth_core::Error),
    #[error(transparent)]
    Study(#[from] msynth_study::StudyError),
    #[error("runtime error: {0}")]
    Runtime(std::io::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Study(e) => e.kind(),
            CliError::Runtime(_) => "runtime",
        }
    }

    /// The structured form printed on stderr.
    pub fn to_json(&self) -> serde_json::Value {
        json!({ "error": { "kind": self.kind(), "message": self.to_string() } })
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Phantom(a) => phantom(a),
        Command::Train(a) => train(a),
        Command::Synth(a) => synth(a),
        Command::Eval(a) => eval(a),
        Command::Study { command } => match command {
            StudyCommand::Plan(a) => study_plan(a),
            StudyCommand::Serve(a) => study_serve(a),
            StudyCommand::Report(a) => study_report(a),
        },
    }
}

fn phantom(a: PhantomArgs) -> Result<()> {
    let mut cfg: PhantomConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => PhantomConfig::default(),
    };
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.size {
        cfg.size = v;
    }
    if let Some(v) = a.subjects {
        cfg.n_subjects = v;
    }
    if let Some(v) = a.slices {
        cfg.n_slices = v;
    }
    if let Some(v) = a.test_fraction {
        cfg.test_fraction = v;
    }
    if let Some(v) = a.noise {
        cfg.noise_std = v;
    }
    cfg.misalign |= a.misalign;
    let corpus = generate_phantom_corpus(&a.out, &cfg)?;
    write_json_pretty(&a.out.join(RUN_ECHO), &cfg)?;
    println!(
        "{} train / {} test slices written to {}",
        corpus.train.len(),
        corpus.test.len(),
        a.out.display()
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg: TrainConfig = read_json(&a.config)?;
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    let data = CorpusManifest::load(&a.data)?;
    // `fit` echoes the resolved config as config.json in the run directory.
    let last = fit(&cfg, &data, &a.out)?;
    println!("{}", last.display());
    Ok(())
}

/// Parses `name=path,name=path`.
pub fn parse_inputs(list: &str) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, path) = item.split_once('=').ok_or_else(|| {
            msynth_core::Error::Argument(format!("input {item:?} is not of the form name=path"))
        })?;
        if name.is_empty() || path.is_empty() {
            return Err(msynth_core::Error::Argument(format!("input {item:?} is not of the form name=path")).into());
        }
        out.push((name.to_string(), PathBuf::from(path)));
    }
    if out.is_empty() {
        return Err(msynth_core::Error::Condition("at least one input modality is required".into()).into());
    }
    Ok(out)
}

#[derive(Serialize)]
struct SynthEcho<'a> {
    checkpoint: &'a Path,
    target: &'a str,
    inputs: &'a [(String, PathBuf)],
    diff: Option<&'a Path>,
    canonical_size: usize,
    outputs: Vec<String>,
}

fn synth(a: SynthArgs) -> Result<()> {
    let inputs = parse_inputs(&a.inputs)?;
    let synthesizer = Synthesizer::load(&a.ckpt)?;
    if synthesizer.target() != a.target {
        return Err(msynth_core::Error::Argument(format!(
            "checkpoint synthesizes {:?}, not {:?}",
            synthesizer.target(),
            a.target
        ))
        .into());
    }
    let out = synthesizer.synthesize_files(&inputs)?;
    let stem = a.target.as_str();
    let mut outputs = vec![format!("{stem}.msl"), format!("{stem}.png")];
    write_slice_file(&a.out.join(&outputs[0]), &out.clone().into_stack())?;
    write_atomic(&a.out.join(&outputs[1]), &encode_grayscale_png(&out.data, out.height, out.width)?)?;
    if let Some(real_path) = &a.diff {
        let real = read_slice_file(real_path)?;
        let real = TargetSlice::from_stack(preprocess(&real, synthesizer.canonical_size())?)?;
        let png = a.out.join(format!("{stem}_diff.png"));
        difference_map(&out, &real, &png)?;
        outputs.push(format!("{stem}_diff.png"));
        outputs.push(format!("{stem}_diff.msl"));
    }
    let echo = SynthEcho {
        checkpoint: &a.ckpt,
        target: &a.target,
        inputs: &inputs,
        diff: a.diff.as_deref(),
        canonical_size: synthesizer.canonical_size(),
        outputs,
    };
    write_json_pretty(&a.out.join(RUN_ECHO), &echo)?;
    println!("{}", a.out.join(&echo.outputs[0]).display());
    Ok(())
}

/// The eval report file: metric rows plus the settings that produced them.
#[derive(Serialize)]
struct EvalOutput<'a> {
    #[serde(flatten)]
    report: &'a EvalReport,
    run: serde_json::Value,
}

fn eval(a: EvalArgs) -> Result<()> {
    let data = CorpusManifest::load(&a.data)?;
    let synthesizer = Synthesizer::load(&a.ckpt)?;
    let report = evaluate_conditions(&synthesizer, &data, &a.target)?;
    let output = EvalOutput {
        report: &report,
        run: json!({ "checkpoint": a.ckpt, "data": a.data, "target": a.target, "test_slices": data.len() }),
    };
    write_json_pretty(&a.out, &output)?;
    print!("{}", report.to_table());
    Ok(())
}

fn study_plan(a: PlanArgs) -> Result<()> {
    let pools = ImagePools::load(&a.pools)?;
    let plan = plan_study(&pools, a.per_condition, a.real, a.seed, &a.raters)?;
    plan.save(&a.out.join("plan.json"))?;
    write_json_pretty(
        &a.out.join(RUN_ECHO),
        &json!({
            "pools": a.pools, "raters": a.raters, "seed": a.seed,
            "per_condition": a.per_condition, "real": a.real,
        }),
    )?;
    println!("{} trials for each of {} raters", plan.total_per_rater(), plan.raters.len());
    Ok(())
}

fn study_serve(a: ServeArgs) -> Result<()> {
    let plan = StudyPlan::load(&a.plan)?;
    check_images(&plan, &a.images)?;
    std::fs::create_dir_all(&a.out)
        .map_err(|source| msynth_core::Error::Io { path: a.out.clone(), source })?;
    write_json_pretty(
        &a.out.join(RUN_ECHO),
        &json!({
            "plan": a.plan, "images": a.images, "bind": a.bind,
            "export_enabled": a.admin_token.is_some(),
        }),
    )?;
    let store = RatingStore::open(&a.out, plan)?;
    let state = Arc::new(StudyState {
        store,
        image_root: a.images,
        admin_token: a.admin_token,
    });
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(CliError::Runtime)?;
    runtime.block_on(async move {
        let listener = bind(&a.bind).await?;
        serve(listener, state).await
    })?;
    Ok(())
}

fn study_report(a: ReportArgs) -> Result<()> {
    let plan = StudyPlan::load(&a.plan)?;
    let ratings = read_ratings(&a.ratings)?;
    let report = aggregate_ratings(&ratings, &plan)?;
    write_json_pretty(&a.out.join("report.json"), &report)?;
    write_json_pretty(&a.out.join(RUN_ECHO), &json!({ "plan": a.plan, "ratings": a.ratings }))?;
    for c in &report.conditions {
        let p = c.vs_real.as_ref().map(|r| format!("{:.4}", r.p_value)).unwrap_or_else(|| "-".into());
        println!("{:<16} mean {:.3}  n {:>4}  p vs real {p}", c.condition, c.mean_stars, c.n_ratings);
    }
    for w in &report.warnings {
        log::warn!("{w}");
    }
    Ok(())
}
