use std::path::{Path, PathBuf};

use hlpd::corpusbuild::{
    build_training_set, read_corpus, read_documents, write_corpus, BuildConfig, ChatEndpoint, Clock, CorpusError, Document,
    EndpointRegistry, MockEndpoint, PairRecord, SchemaHeader, TaskKind, CORPUS_SCHEMA, DOCUMENT_SCHEMA,
};
use hlpd::curvature::{baseline_scores, decide, BaselineScores, Estimator, ScoreRecord, ScoreSign};
use hlpd::evalkit::{auroc, roc_points, roc_to_csv, run_synthetic_experiment, CiReport, EvalError, ScoredSet, SyntheticExperimentSpec};
use hlpd::hlpo::{train, trace_to_jsonl, HlpoError, LossVariant, PreferencePair};
use hlpd::humanizer::{humanize, render_diff, HumanizeError};
use hlpd::lm::{
    detokenize, load_model, tokenize, Backend, Checkpoint, CountModel, CountModelConfig, LanguageModel, LineageEntry, LmError,
    ModelHandle, Sequence, TransformerLm,
};
use hlpd::promptgen::{build_pool, records_to_jsonl, PromptError};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{BuildSection, DetectSection, EvalSection, GenSection, HumanizeSection, RunConfig, TrainSection};
use crate::{
    BuildArgs, Cli, CliError, Command, DetectArgs, EvalArgs, GenArgs, HumanizeArgs, LossArg, SignArg, TrainArgs, write_file,
};

pub const REPORT_SCHEMA: &str = "hlpd-eval-report";
pub const REPORT_VERSION: &str = "1.0";

impl From<LmError> for CliError {
    fn from(e: LmError) -> Self {
        match e {
            LmError::InvalidArgument(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<HlpoError> for CliError {
    fn from(e: HlpoError) -> Self {
        match e {
            HlpoError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        if e.is_endpoint_error() {
            CliError::Endpoint(e.to_string())
        } else if matches!(e, CorpusError::UnknownEndpoint(_)) {
            CliError::Usage(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::TooFewSeeds(_) | EvalError::InvalidSpec(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<HumanizeError> for CliError {
    fn from(e: HumanizeError) -> Self {
        match e {
            HumanizeError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<PromptError> for CliError {
    fn from(e: PromptError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("missing required `{flag}`")))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("value serializes")
}

fn jsonl<T: Serialize>(rows: &[T]) -> String {
    rows.iter().map(|r| to_json(r) + "\n").collect()
}

fn stage_seed(seed: u64, stage: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stage)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let name = cli.command.name();
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path, name)?,
        None => RunConfig::new(name),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    cfg.mock |= cli.mock;
    if let Some(n) = cfg.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // fails only when a pool already exists, which is harmless here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Train(a) => cmd_train(cfg, a),
        Command::Detect(a) => cmd_detect(cfg, a),
        Command::Eval(a) => cmd_eval(cfg, a),
        Command::BuildDataset(a) => cmd_build_dataset(cfg, a),
        Command::GenPrompts(a) => cmd_gen_prompts(cfg, a),
        Command::Humanize(a) => cmd_humanize(cfg, a),
    }
}

fn out_dir(cfg: &mut RunConfig, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
    if flag.is_some() {
        cfg.out_dir = flag;
    }
    let dir = required(cfg.out_dir.clone(), "--out")?;
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn load_handle(path: &Path) -> Result<(Backend, Vec<LineageEntry>), CliError> {
    if !path.exists() {
        return Err(CliError::Data(format!("model checkpoint not found: {}", path.display())));
    }
    Ok(load_model(path)?)
}

fn encode(text: &str, context: usize) -> Result<Sequence, CliError> {
    Ok(tokenize(text)?.truncated(context))
}

/// Texts to score or humanize, with ground truth when the input is a pair
/// corpus (1 = machine).
struct InputText {
    id: String,
    text: String,
    truth: Option<u8>,
}

enum Input {
    Pairs(Vec<PairRecord>),
    Documents(Vec<Document>),
    Lines(Vec<String>),
}

fn read_input(path: &Path) -> Result<Input, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let first = text.lines().find(|l| !l.trim().is_empty());
    let header = first.and_then(|l| serde_json::from_str::<SchemaHeader>(l).ok());
    let input = match header {
        Some(h) if h.schema == CORPUS_SCHEMA => Input::Pairs(read_corpus(path)?),
        Some(h) if h.schema == DOCUMENT_SCHEMA => Input::Documents(read_documents(path)?),
        Some(h) => return Err(CliError::Data(format!("{}: unknown schema `{}`", path.display(), h.schema))),
        None => Input::Lines(text.lines().filter(|l| !l.trim().is_empty()).map(String::from).collect()),
    };
    let empty = match &input {
        Input::Pairs(r) => r.is_empty(),
        Input::Documents(d) => d.is_empty(),
        Input::Lines(l) => l.is_empty(),
    };
    if empty {
        return Err(CliError::Data(format!("{}: {}", path.display(), CorpusError::EmptyCorpus)));
    }
    Ok(input)
}

fn detection_texts(input: Input) -> Vec<InputText> {
    match input {
        Input::Pairs(records) => records
            .into_iter()
            .flat_map(|r| {
                [
                    InputText { id: format!("{}/human", r.id), text: r.human_text, truth: Some(0) },
                    InputText { id: format!("{}/machine", r.id), text: r.machine_text, truth: Some(1) },
                ]
            })
            .collect(),
        Input::Documents(docs) => docs.into_iter().map(|d| InputText { id: d.id, text: d.text, truth: None }).collect(),
        Input::Lines(lines) => lines
            .into_iter()
            .enumerate()
            .map(|(i, text)| InputText { id: format!("line{}", i + 1), text, truth: None })
            .collect(),
    }
}

fn machine_texts(input: Input) -> Vec<InputText> {
    match input {
        Input::Pairs(records) => {
            records.into_iter().map(|r| InputText { id: r.id, text: r.machine_text, truth: Some(1) }).collect()
        }
        other => detection_texts(other),
    }
}

fn cmd_train(mut cfg: RunConfig, a: TrainArgs) -> Result<(), CliError> {
    let dir = out_dir(&mut cfg, a.out)?;
    let mut sec: TrainSection = cfg.train.take().unwrap_or_default();
    if a.pairs.is_some() {
        sec.pairs = a.pairs;
    }
    if a.init.is_some() {
        sec.init = a.init;
    }
    if let Some(loss) = a.loss {
        sec.trainer.loss_variant = match loss {
            LossArg::Linear => LossVariant::Linear,
            LossArg::Sigmoid => LossVariant::Sigmoid,
        };
    }
    if let Some(v) = a.epochs {
        sec.trainer.epochs = v;
    }
    if let Some(v) = a.lr {
        sec.trainer.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        sec.trainer.batch_size = v;
    }
    if let Some(v) = a.fixed_beta {
        sec.trainer.beta.dynamic = false;
        sec.trainer.beta.fixed_beta = v;
    }
    if let Some(v) = a.width {
        sec.architecture.width = v;
    }
    if let Some(v) = a.layers {
        sec.architecture.layers = v;
    }
    if let Some(v) = a.heads {
        sec.architecture.heads = v;
    }
    if let Some(v) = a.context {
        sec.architecture.context = v;
    }
    sec.trainer.seed = stage_seed(cfg.seed, 2);
    sec.trainer.validate()?;
    let pairs_path = required(sec.pairs.clone(), "--pairs")?;
    cfg.train = Some(sec.clone());
    cfg.archive(&dir)?;

    if !pairs_path.exists() {
        return Err(CliError::Data(format!("pair corpus not found: {}", pairs_path.display())));
    }
    let records = read_corpus(&pairs_path)?;
    if records.is_empty() {
        return Err(CliError::Data(format!("{}: {}", pairs_path.display(), CorpusError::EmptyCorpus)));
    }

    let (backend, mut lineage) = match &sec.init {
        Some(path) => load_handle(path)?,
        None => {
            sec.architecture.validate()?;
            let init_seed = stage_seed(cfg.seed, 1);
            let model = TransformerLm::new(sec.architecture, init_seed)?;
            (Backend::Transformer(model), vec![LineageEntry { stage: "init".into(), seed: init_seed }])
        }
    };
    let initial = ModelHandle::scoring(backend);
    let context = initial.context_window();
    let dataset = records
        .iter()
        .map(|r| Ok(PreferencePair::new(encode(&r.human_text, context)?, encode(&r.machine_text, context)?)))
        .collect::<Result<Vec<_>, CliError>>()?;

    let outcome = train(&dataset, initial, &sec.trainer)?;
    lineage.push(LineageEntry { stage: "hlpo".into(), seed: sec.trainer.seed });
    let ckpt = Checkpoint::from_backend(outcome.scoring.backend(), lineage)?.to_json();
    let digest = hex::encode(Sha256::digest(ckpt.as_bytes()));
    write_file(&dir.join("checkpoint.json"), ckpt.as_bytes())?;
    write_file(&dir.join("checkpoint.sha256"), format!("{digest}  checkpoint.json\n").as_bytes())?;
    write_file(&dir.join("trace.jsonl"), trace_to_jsonl(&outcome.trace).as_bytes())?;
    let last = outcome.trace.last().expect("non-empty dataset yields steps");
    println!(
        "trained {} steps ({} loss), final mean margin {:.4}, beta {:.4}",
        outcome.trace.len(),
        sec.trainer.loss_variant,
        last.mean_margin,
        last.beta_t
    );
    println!("checkpoint {} sha256 {digest}", dir.join("checkpoint.json").display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct DetectRow {
    #[serde(flatten)]
    record: ScoreRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth: Option<u8>,
    degenerate: bool,
    baselines: BaselineScores,
}

fn parse_estimator(s: &str) -> Result<Estimator, CliError> {
    if s == "analytic" {
        return Ok(Estimator::Analytic);
    }
    s.strip_prefix("mc:")
        .and_then(|n| n.parse().ok())
        .map(|samples| Estimator::MonteCarlo { samples })
        .ok_or_else(|| CliError::Usage(format!("--estimator must be `analytic` or `mc:<samples>`, got `{s}`")))
}

fn cmd_detect(mut cfg: RunConfig, a: DetectArgs) -> Result<(), CliError> {
    let dir = out_dir(&mut cfg, a.out)?;
    let mut sec: DetectSection = cfg.detect.take().unwrap_or_default();
    if a.model.is_some() {
        sec.model = a.model;
    }
    if a.perturb.is_some() {
        sec.perturb = a.perturb;
    }
    if a.input.is_some() {
        sec.input = a.input;
    }
    if let Some(sign) = a.sign {
        sec.detector.score_sign = match sign {
            SignArg::Hlp => ScoreSign::Hlp,
            SignArg::FastDetect => ScoreSign::FastDetect,
        };
    }
    if let Some(eps) = a.epsilon {
        sec.detector.epsilon = eps;
    }
    if let Some(est) = &a.estimator {
        sec.detector.estimator = parse_estimator(est)?;
    }
    sec.detector.seed = cfg.seed;
    sec.detector.validate()?;
    let model_path = required(sec.model.clone(), "--model")?;
    let input_path = required(sec.input.clone(), "--input")?;
    cfg.detect = Some(sec.clone());
    cfg.archive(&dir)?;

    let scoring = ModelHandle::scoring(load_handle(&model_path)?.0);
    let perturb = match &sec.perturb {
        Some(p) => ModelHandle::perturbation(load_handle(p)?.0),
        None => scoring.clone(),
    };
    let context = scoring.context_window().min(perturb.context_window());
    let texts = detection_texts(read_input(&input_path)?);
    let rows = texts
        .par_iter()
        .map(|t| {
            let x = encode(&t.text, context)?;
            let decision = decide(&x, &scoring, &perturb, &sec.detector)?;
            Ok(DetectRow {
                record: ScoreRecord::from_decision(&t.id, &decision),
                truth: t.truth,
                degenerate: decision.curvature.degenerate,
                baselines: baseline_scores(&x, &scoring)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    write_file(&dir.join("scores.jsonl"), jsonl(&rows).as_bytes())?;
    let machine = rows.iter().filter(|r| r.record.label == 1).count();
    println!("scored {} texts: {} machine, {} human", rows.len(), machine, rows.len() - machine);
    Ok(())
}

#[derive(Debug, Serialize)]
struct RunSummary {
    run: usize,
    source: PathBuf,
    n_positive: usize,
    n_negative: usize,
    auroc: f64,
}

#[derive(Debug, Serialize)]
struct ScoresReport {
    schema: &'static str,
    schema_version: &'static str,
    mode: &'static str,
    auroc: CiReport,
    runs: Vec<RunSummary>,
}

#[derive(Debug, Serialize)]
struct SyntheticReportFile<'a> {
    schema: &'static str,
    schema_version: &'static str,
    mode: &'static str,
    #[serde(flatten)]
    report: &'a hlpd::evalkit::SyntheticReport,
}

fn read_scored_set(path: &Path) -> Result<ScoredSet, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut set = ScoredSet { positives: vec![], negatives: vec![] };
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |m: &str| CliError::Data(format!("{}:{}: {m}", path.display(), i + 1));
        let row: serde_json::Value = serde_json::from_str(line).map_err(|e| bad(&e.to_string()))?;
        let score = row.get("score").and_then(|v| v.as_f64()).ok_or_else(|| bad("missing numeric `score`"))?;
        match row.get("truth").and_then(|v| v.as_u64()) {
            Some(1) => set.positives.push(score),
            Some(0) => set.negatives.push(score),
            _ => return Err(bad("missing ground truth `truth` (0 or 1)")),
        }
    }
    Ok(set)
}

fn print_table(rows: &[(&str, &CiReport)]) {
    println!("{:<16} {:>8} {:>8}  per-run", "metric", "mean", "+/-95%");
    for (name, r) in rows {
        let per: Vec<String> = r.per_seed.iter().map(|v| format!("{v:.4}")).collect();
        println!("{:<16} {:>8.4} {:>8.4}  {}", name, r.mean, r.half_width_95, per.join(" "));
    }
}

fn cmd_eval(mut cfg: RunConfig, a: EvalArgs) -> Result<(), CliError> {
    let dir = out_dir(&mut cfg, a.out)?;
    let mut sec: EvalSection = cfg.eval.take().unwrap_or_default();
    if !a.scores.is_empty() {
        sec.scores = a.scores;
    }
    if !sec.scores.is_empty() {
        if sec.scores.len() < 2 {
            return Err(CliError::Usage(format!("{}; pass at least two score files", EvalError::TooFewSeeds(1))));
        }
        cfg.eval = Some(sec.clone());
        cfg.archive(&dir)?;
        return eval_scores(&dir, &sec.scores);
    }

    let mut spec = match (sec.synthetic.take(), a.corpus_a, a.corpus_b) {
        (_, Some(ca), Some(cb)) => SyntheticExperimentSpec::desk_scale(ca, cb),
        (Some(spec), None, None) => spec,
        (Some(mut spec), ca, cb) => {
            if let Some(ca) = ca {
                spec.generator_a.corpus = ca;
            }
            if let Some(cb) = cb {
                spec.generator_b.corpus = cb;
            }
            spec
        }
        (None, _, _) => {
            return Err(CliError::Usage("eval needs `--scores` files or both `--corpus-a` and `--corpus-b`".into()))
        }
    };
    if let Some(seeds) = a.seeds {
        spec.seeds = seeds;
    }
    if let Some(n) = a.n_train {
        spec.n_train_pairs = n;
    }
    if let Some(n) = a.n_heldout {
        spec.n_heldout = n;
        if let Some(h) = &mut spec.humanize {
            h.n_texts = h.n_texts.min(n);
        }
    }
    if a.no_humanize {
        spec.humanize = None;
    }
    if spec.seeds.len() < 2 {
        return Err(EvalError::TooFewSeeds(spec.seeds.len()).into());
    }
    for c in [&spec.generator_a.corpus, &spec.generator_b.corpus] {
        if !c.exists() {
            return Err(CliError::Data(format!("corpus not found: {}", c.display())));
        }
    }
    sec.synthetic = Some(spec.clone());
    cfg.eval = Some(sec);
    cfg.archive(&dir)?;

    let report = run_synthetic_experiment(&spec)?;
    let file = SyntheticReportFile { schema: REPORT_SCHEMA, schema_version: REPORT_VERSION, mode: "synthetic", report: &report };
    write_file(&dir.join("report.json"), (serde_json::to_string_pretty(&file).expect("report serializes") + "\n").as_bytes())?;
    for s in &report.per_seed {
        write_file(&dir.join(format!("roc_seed{}.csv", s.seed)), roc_to_csv(&s.roc_after).as_bytes())?;
    }
    let mut table = vec![("auroc_before", &report.auroc_before), ("auroc_after", &report.auroc_after), ("margin_after", &report.margin_after)];
    let humanized = humanize_ci(&report)?;
    if let Some(h) = &humanized {
        table.push(("auroc_humanized", h));
    }
    print_table(&table);
    Ok(())
}

/// AUROC after the last humanization iteration, when humanization ran.
fn humanize_ci(report: &hlpd::evalkit::SyntheticReport) -> Result<Option<CiReport>, CliError> {
    let last: Option<Vec<f64>> =
        report.per_seed.iter().map(|s| s.humanize.as_ref().and_then(|h| h.auroc_per_iteration.last().copied())).collect();
    match last {
        Some(values) => Ok(Some(CiReport::from_values(report.per_seed.iter().map(|s| s.seed).collect(), values)?)),
        None => Ok(None),
    }
}

fn eval_scores(dir: &Path, files: &[PathBuf]) -> Result<(), CliError> {
    let mut runs = Vec::with_capacity(files.len());
    let mut values = Vec::with_capacity(files.len());
    for (i, path) in files.iter().enumerate() {
        let set = read_scored_set(path)?;
        let value = auroc(&set).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        write_file(&dir.join(format!("roc_{i}.csv")), roc_to_csv(&roc_points(&set)?).as_bytes())?;
        runs.push(RunSummary {
            run: i,
            source: path.clone(),
            n_positive: set.positives.len(),
            n_negative: set.negatives.len(),
            auroc: value,
        });
        values.push(value);
    }
    let ci = CiReport::from_values((0..files.len() as u64).collect(), values)?;
    let report = ScoresReport { schema: REPORT_SCHEMA, schema_version: REPORT_VERSION, mode: "scores", auroc: ci, runs };
    write_file(&dir.join("report.json"), (serde_json::to_string_pretty(&report).expect("report serializes") + "\n").as_bytes())?;
    print_table(&[("auroc", &report.auroc)]);
    Ok(())
}

fn parse_task(name: &str) -> Result<TaskKind, CliError> {
    serde_json::from_value(serde_json::Value::String(name.trim().to_string()))
        .map_err(|_| CliError::Usage(format!("unknown task `{name}` (expand, polish, rewrite, generate, adversarial)")))
}

fn cmd_build_dataset(mut cfg: RunConfig, a: BuildArgs) -> Result<(), CliError> {
    let dir = out_dir(&mut cfg, a.out)?;
    let mut sec: BuildSection = cfg.build_dataset.take().unwrap_or_default();
    if a.documents.is_some() {
        sec.documents = a.documents;
    }
    if let Some(tasks) = a.tasks {
        sec.tasks = tasks.iter().map(|t| parse_task(t)).collect::<Result<_, _>>()?;
    }
    if a.registry.is_some() {
        sec.registry = a.registry;
    }
    if let Some(m) = a.stage1_model {
        sec.stage1_model = m;
    }
    if let Some(m) = a.stage2_model {
        sec.stage2_model = m;
    }
    let docs_path = required(sec.documents.clone(), "--documents")?;
    if !cfg.mock && sec.registry.is_none() {
        return Err(CliError::Usage("build-dataset needs `--registry` unless `--mock` is set".into()));
    }
    cfg.build_dataset = Some(sec.clone());
    cfg.archive(&dir)?;

    if !docs_path.exists() {
        return Err(CliError::Data(format!("document file not found: {}", docs_path.display())));
    }
    let docs = read_documents(&docs_path)?;
    let (stage1, stage2, clock): (Box<dyn ChatEndpoint>, Box<dyn ChatEndpoint>, Clock) = if cfg.mock {
        (
            Box::new(MockEndpoint::new(&sec.stage1_model, cfg.seed)),
            Box::new(MockEndpoint::new(&sec.stage2_model, cfg.seed)),
            Clock::fixed(),
        )
    } else {
        let registry = EndpointRegistry::load(sec.registry.as_deref().expect("checked above"))?;
        (
            Box::new(registry.endpoint(&sec.stage1_model)?),
            Box::new(registry.endpoint(&sec.stage2_model)?),
            Clock::System,
        )
    };
    let build = BuildConfig { tasks: sec.tasks.clone(), seed: cfg.seed, clock };
    let out = build_training_set(&docs, &build, stage1.as_ref(), stage2.as_ref())?;
    write_corpus(&dir.join("pairs.jsonl"), &out.records)?;
    let manifest = serde_json::to_string_pretty(&out.manifest).expect("manifest serializes") + "\n";
    write_file(&dir.join("manifest.json"), manifest.as_bytes())?;
    println!("built {} pairs from {} documents, {} failures", out.records.len(), docs.len(), out.manifest.failures.len());
    for f in &out.manifest.failures {
        eprintln!("warning: {} ({}): {}", f.document_id, f.task.name(), f.error);
    }
    if out.records.is_empty() && out.manifest.failures.iter().all(|f| f.endpoint_error) {
        return Err(CliError::Endpoint("every record failed with an endpoint error".into()));
    }
    Ok(())
}

fn cmd_gen_prompts(mut cfg: RunConfig, a: GenArgs) -> Result<(), CliError> {
    let dir = out_dir(&mut cfg, a.out)?;
    let mut sec: GenSection = cfg.gen_prompts.take().unwrap_or_default();
    if let Some(size) = a.size {
        sec.size = size;
    }
    cfg.gen_prompts = Some(sec.clone());
    cfg.archive(&dir)?;
    let pool = build_pool(sec.size, cfg.seed)?;
    write_file(&dir.join("prompts.jsonl"), records_to_jsonl(&pool).as_bytes())?;
    println!("wrote {} unique prompts", pool.len());
    Ok(())
}

#[derive(Debug, Serialize)]
struct HumanizedRow {
    id: String,
    text: String,
    hlp_before: f64,
    hlp_after: f64,
}

#[derive(Debug, Serialize)]
struct TraceRowOut<'a> {
    id: &'a str,
    trace: &'a hlpd::humanizer::IterationTrace,
}

fn fit_count_perturber(path: &Path) -> Result<Backend, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let config = CountModelConfig::default();
    let lines = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| encode(l, config.context))
        .collect::<Result<Vec<_>, _>>()?;
    if lines.is_empty() {
        return Err(CliError::Data(format!("{}: {}", path.display(), CorpusError::EmptyCorpus)));
    }
    Ok(Backend::Count(CountModel::fit(config, &lines)))
}

fn cmd_humanize(mut cfg: RunConfig, a: HumanizeArgs) -> Result<(), CliError> {
    let dir = out_dir(&mut cfg, a.out)?;
    let mut sec: HumanizeSection = cfg.humanize.take().unwrap_or_default();
    if a.model.is_some() {
        sec.model = a.model;
    }
    if a.perturb.is_some() {
        sec.perturb = a.perturb;
    }
    if a.perturb_corpus.is_some() {
        sec.perturb_corpus = a.perturb_corpus;
    }
    if a.input.is_some() {
        sec.input = a.input;
    }
    if a.limit.is_some() {
        sec.limit = a.limit;
    }
    if let Some(v) = a.iterations {
        sec.config.iterations = v;
    }
    if let Some(v) = a.candidates {
        sec.config.candidates_per_iter = v;
    }
    if let Some(v) = a.rho {
        sec.config.rho = v;
    }
    sec.config.validate()?;
    sec.detector.validate()?;
    let model_path = required(sec.model.clone(), "--model")?;
    let input_path = required(sec.input.clone(), "--input")?;
    if sec.perturb.is_none() && sec.perturb_corpus.is_none() {
        return Err(CliError::Usage("humanize needs `--perturb` or `--perturb-corpus`".into()));
    }
    cfg.humanize = Some(sec.clone());
    cfg.archive(&dir)?;

    let scoring = ModelHandle::scoring(load_handle(&model_path)?.0);
    let perturb = match (&sec.perturb, &sec.perturb_corpus) {
        (Some(p), _) => ModelHandle::perturbation(load_handle(p)?.0),
        (None, Some(c)) => ModelHandle::perturbation(fit_count_perturber(c)?),
        (None, None) => unreachable!("checked above"),
    };
    let context = scoring.context_window().min(perturb.context_window());
    let mut texts = machine_texts(read_input(&input_path)?);
    if let Some(limit) = sec.limit {
        texts.truncate(limit);
    }

    let mut rows = Vec::with_capacity(texts.len());
    let mut traces = String::new();
    let mut diff = String::new();
    for (i, t) in texts.iter().enumerate() {
        let x = encode(&t.text, context)?;
        let config = hlpd::humanizer::HumanizeConfig { seed: stage_seed(cfg.seed, i as u64), ..sec.config.clone() };
        let trace = humanize(&x, &scoring, &perturb, &sec.detector, &config)?;
        let text = if trace.steps.len() == 1 { t.text.clone() } else { detokenize(trace.final_text()) };
        traces.push_str(&(to_json(&TraceRowOut { id: &t.id, trace: &trace }) + "\n"));
        diff.push_str(&format!("### {}\n{}", t.id, render_diff(&trace)));
        rows.push(HumanizedRow {
            id: t.id.clone(),
            text,
            hlp_before: trace.steps[0].hlp_score,
            hlp_after: trace.steps.last().expect("trace holds the original").hlp_score,
        });
    }
    write_file(&dir.join("traces.jsonl"), traces.as_bytes())?;
    write_file(&dir.join("diff.txt"), diff.as_bytes())?;
    write_file(&dir.join("humanized.jsonl"), jsonl(&rows).as_bytes())?;
    let mean = |f: fn(&HumanizedRow) -> f64| rows.iter().map(f).sum::<f64>() / rows.len().max(1) as f64;
    println!(
        "humanized {} texts over {} iterations: mean -d {:.4} -> {:.4}",
        rows.len(),
        sec.config.iterations,
        mean(|r| r.hlp_before),
        mean(|r| r.hlp_after)
    );
    Ok(())
}
