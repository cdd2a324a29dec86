//! End-to-end run: render, dispatch, parse, assemble, score and report.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregation::{assemble_level, AggregatedScore, LevelInputs, RaterAssessment};
use crate::config::RunConfig;
use crate::corpus::{load_corpus, Essay, TraitScoreVector};
use crate::error::{Error, Result};
use crate::gateway::{BackendConfig, CompletionRecord, CompletionStatus, Gateway};
use crate::metrics::{bootstrap_ci, group_seed, qwk, AgreementResult, RatingPair};
use crate::parser::{parse_level1, parse_level2, parse_level3, ParseStatus, ParsedScores};
use crate::prompt::{
    render_level1, render_level2, render_level3, FewShotSet, Level, PromptTemplate, RenderedPrompt,
    Subject,
};
use crate::report::{
    build_report, emit, Diagnostics, ParseFailure, ReportMetadata, RunReport, SkippedGroup,
    TOTAL_LABEL,
};
use crate::rubric::{RaterId, RubricMapping, Trait, MAX_TOTAL};

/// One essay's final prediction for a (model, level) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub essay_id: String,
    pub model: String,
    pub level: Level,
    pub scores: TraitScoreVector,
    pub per_trait: Vec<AggregatedScore>,
    pub model_reported_total: Option<i64>,
    pub flagged: Vec<Trait>,
    pub gold: Option<TraitScoreVector>,
}

/// Dispatch accounting for one (model, level) group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupDispatch {
    pub model: String,
    pub level: Level,
    pub essays: usize,
    pub prompts: usize,
    pub backend_calls: usize,
    pub cache_hits: usize,
    pub peak_in_flight: usize,
    pub failed_completions: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub run_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub predictions: Vec<PredictionRecord>,
    pub dispatch: Vec<GroupDispatch>,
}

impl RunOutcome {
    /// True when prompts were sent and not one completion succeeded.
    pub fn all_completions_failed(&self) -> bool {
        let prompts: usize = self.dispatch.iter().map(|d| d.prompts).sum();
        let failed: usize = self.dispatch.iter().map(|d| d.failed_completions).sum();
        prompts > 0 && failed == prompts
    }

    /// Process exit code: 0 on success, 2 when every completion failed.
    pub fn exit_code(&self) -> i32 {
        if self.all_completions_failed() {
            2
        } else {
            0
        }
    }
}

/// Builds a gateway for a configured backend, given the cache directory.
pub type GatewayFactory<'a> =
    dyn Fn(&BackendConfig, &Path, &RubricMapping) -> Result<Gateway> + Send + Sync + 'a;

pub fn default_gateway(
    cfg: &BackendConfig,
    cache_dir: &Path,
    mapping: &RubricMapping,
) -> Result<Gateway> {
    Gateway::from_config(cfg.clone(), Some(cache_dir), mapping)
}

pub async fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    run_with(cfg, &default_gateway).await
}

struct Inputs {
    essays: Vec<Essay>,
    mapping: RubricMapping,
    templates: BTreeMap<Level, PromptTemplate>,
    fewshot: Option<FewShotSet>,
}

fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let violations = cfg.violations();
    if !violations.is_empty() {
        return Err(Error::Config(violations));
    }
    let format = cfg
        .corpus_format()
        .ok_or_else(|| Error::Config(vec!["cannot infer corpus format".into()]))?;
    let essays = load_corpus(&cfg.resolve(&cfg.corpus.path), format)?;
    if !essays.iter().any(|e| e.gold.is_some()) {
        return Err(Error::EmptyLabeledCorpus);
    }
    let mut templates = BTreeMap::new();
    let mut needs_fewshot = false;
    for (_, level) in cfg.enabled_groups() {
        if let std::collections::btree_map::Entry::Vacant(slot) = templates.entry(level) {
            slot.insert(cfg.template(level)?);
        }
        needs_fewshot |= level == Level::RubricFewShot;
    }
    let fewshot = if needs_fewshot {
        cfg.fewshot_set()?
    } else {
        None
    };
    Ok(Inputs {
        essays,
        mapping: cfg.mapping()?,
        templates,
        fewshot,
    })
}

/// Every prompt for one level, essay-major.
pub fn render_prompts(
    level: Level,
    essays: &[Essay],
    template: &PromptTemplate,
    mapping: &RubricMapping,
    fewshot: Option<&FewShotSet>,
) -> Result<Vec<RenderedPrompt>> {
    let mut out = Vec::with_capacity(essays.len() * level.prompts_per_essay());
    for essay in essays {
        match level {
            Level::Holistic => out.push(render_level1(essay, template)?),
            Level::Hybrid => {
                for r in RaterId::ALL {
                    out.push(render_level2(essay, r.spec(), mapping, template)?);
                }
            }
            Level::RubricFewShot => {
                let set = fewshot.ok_or(Error::MissingFewShotTrait(Trait::Organization))?;
                for t in Trait::ALL {
                    let examples = set.get(&t).ok_or(Error::MissingFewShotTrait(t))?;
                    out.push(render_level3(essay, t, examples, template)?);
                }
            }
        }
    }
    Ok(out)
}

fn status_label(s: CompletionStatus) -> &'static str {
    match s {
        CompletionStatus::Ok => "ok",
        CompletionStatus::TransportError => "transport_error",
        CompletionStatus::Timeout => "timeout",
        CompletionStatus::Empty => "empty",
    }
}

/// Parses one completion according to the prompt it answers.
pub fn parse_completion(rec: &CompletionRecord, mapping: &RubricMapping) -> ParsedScores {
    if rec.status != CompletionStatus::Ok {
        let detail = rec.error.as_deref().unwrap_or("no response");
        return ParsedScores::failed(format!("completion {}: {detail}", status_label(rec.status)));
    }
    match rec.subject {
        Subject::All => parse_level1(&rec.raw_text),
        Subject::Rater(r) => parse_level2(&rec.raw_text, r, mapping),
        Subject::Trait(t) => parse_level3(&rec.raw_text, t),
    }
}

fn level_inputs(
    level: Level,
    parsed: &[(Subject, ParsedScores)],
    mapping: &RubricMapping,
) -> LevelInputs {
    match level {
        Level::Holistic => LevelInputs::Holistic(
            parsed
                .first()
                .map(|(_, p)| p.clone())
                .unwrap_or_else(|| ParsedScores::failed("no response")),
        ),
        Level::Hybrid => LevelInputs::Hybrid(
            parsed
                .iter()
                .filter_map(|(s, p)| match s {
                    Subject::Rater(r) => Some(RaterAssessment::from_parsed(*r, p, mapping)),
                    _ => None,
                })
                .collect(),
        ),
        Level::RubricFewShot => LevelInputs::RubricFewShot(
            parsed
                .iter()
                .filter_map(|(s, p)| match s {
                    Subject::Trait(t) => Some((*t, p.clone())),
                    _ => None,
                })
                .collect(),
        ),
    }
}

struct GroupResult {
    predictions: Vec<PredictionRecord>,
    failures: Vec<ParseFailure>,
    dispatch: GroupDispatch,
}

async fn run_group(
    gateway: &Gateway,
    level: Level,
    inputs: &Inputs,
    cfg: &RunConfig,
) -> Result<GroupResult> {
    let model = gateway.config().model_name.clone();
    let template = &inputs.templates[&level];
    let prompts = render_prompts(
        level,
        &inputs.essays,
        template,
        &inputs.mapping,
        inputs.fewshot.as_ref(),
    )?;
    let before = gateway.stats();
    let records = gateway.complete_all(&prompts).await;
    let after = gateway.stats();

    let per_essay = level.prompts_per_essay();
    let mut predictions = Vec::with_capacity(inputs.essays.len());
    let mut failures = Vec::new();
    for (essay, chunk) in inputs.essays.iter().zip(records.chunks(per_essay)) {
        let parsed: Vec<(Subject, ParsedScores)> = chunk
            .iter()
            .map(|rec| (rec.subject, parse_completion(rec, &inputs.mapping)))
            .collect();
        for (subject, p) in &parsed {
            if p.status != ParseStatus::Parsed {
                failures.push(ParseFailure {
                    essay_id: essay.id.clone(),
                    level,
                    subject: subject.to_string(),
                    model: model.clone(),
                    failure_reason: p.failure_reason.clone().unwrap_or_default(),
                });
            }
        }
        let assembled = assemble_level(
            level,
            &level_inputs(level, &parsed, &inputs.mapping),
            &inputs.mapping,
            cfg.on_missing_rater,
        )?;
        predictions.push(PredictionRecord {
            essay_id: essay.id.clone(),
            model: model.clone(),
            level,
            scores: assembled.vector,
            flagged: assembled.flagged_traits(),
            per_trait: assembled.per_trait.into_values().collect(),
            model_reported_total: assembled.model_reported_total,
            gold: essay.gold,
        });
    }
    let failed_completions = records
        .iter()
        .filter(|r| r.status != CompletionStatus::Ok)
        .count();
    Ok(GroupResult {
        predictions,
        failures,
        dispatch: GroupDispatch {
            model,
            level,
            essays: inputs.essays.len(),
            prompts: prompts.len(),
            backend_calls: after.invocations - before.invocations,
            cache_hits: after.cache_hits - before.cache_hits,
            peak_in_flight: after.peak_in_flight,
            failed_completions,
        },
    })
}

/// Agreement rows (seven traits then total) for one group's predictions.
pub fn agreement_for_group(
    model: &str,
    level: Level,
    predictions: &[PredictionRecord],
    seed: u64,
    iters: usize,
    alpha: f64,
) -> Result<Vec<AgreementResult>> {
    let labeled: Vec<(&TraitScoreVector, &TraitScoreVector)> = predictions
        .iter()
        .filter_map(|p| p.gold.as_ref().map(|g| (&p.scores, g)))
        .collect();
    if labeled.is_empty() {
        return Err(Error::EmptyLabeledCorpus);
    }
    // (label, level count, trait or None for the total)
    let mut columns: Vec<(String, usize, Option<Trait>)> = Trait::ALL
        .iter()
        .map(|&t| (t.key().to_string(), usize::from(t.max_score()) + 1, Some(t)))
        .collect();
    columns.push((TOTAL_LABEL.to_string(), usize::from(MAX_TOTAL) + 1, None));

    let mut out = Vec::with_capacity(columns.len());
    for (label, n_levels, column) in columns {
        let get = |v: &TraitScoreVector| column.map_or(v.total, |t| v.get(t));
        let pair = RatingPair::new(
            labeled.iter().map(|(p, _)| u32::from(get(p))).collect(),
            labeled.iter().map(|(_, g)| u32::from(get(g))).collect(),
            n_levels,
        )?;
        let group = group_seed(seed, &format!("{model}/{level}/{label}"));
        let ci = bootstrap_ci(&pair, iters, group, alpha)?;
        out.push(AgreementResult {
            model: model.to_string(),
            level,
            trait_or_total: label,
            qwk: qwk(&pair),
            ci_low: ci.ci_low,
            ci_high: ci.ci_high,
            n_essays: pair.len(),
            bootstrap_iters: iters,
            seed: group,
            degenerate_resamples: ci.degenerate_resamples,
        });
    }
    Ok(out)
}

/// Share of essays whose trait (or any trait, for the total) lacked a
/// parsed score.
fn failure_rates(
    model: &str,
    level: Level,
    predictions: &[PredictionRecord],
) -> Vec<((String, Level, String), f64)> {
    let n = predictions.len().max(1) as f64;
    let mut out: Vec<((String, Level, String), f64)> = Trait::ALL
        .iter()
        .map(|&t| {
            let missing = predictions
                .iter()
                .filter(|p| p.flagged.contains(&t))
                .count();
            (
                (model.to_string(), level, t.key().to_string()),
                missing as f64 / n,
            )
        })
        .collect();
    let any = predictions.iter().filter(|p| !p.flagged.is_empty()).count();
    out.push((
        (model.to_string(), level, TOTAL_LABEL.to_string()),
        any as f64 / n,
    ));
    out
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Runs every enabled group with gateways built by `factory`.
pub async fn run_with(cfg: &RunConfig, factory: &GatewayFactory<'_>) -> Result<RunOutcome> {
    let inputs = load_inputs(cfg)?;
    let started_at = now();
    let cache_dir = cfg.cache_dir();
    std::fs::create_dir_all(&cache_dir).map_err(|e| Error::io(&cache_dir, e))?;

    let mut results = Vec::new();
    let mut predictions = Vec::new();
    let mut dispatch = Vec::new();
    let mut diagnostics = Diagnostics::default();
    let mut parse_failure_counts = BTreeMap::new();

    for model in cfg.selected_models() {
        let levels: Vec<Level> = cfg
            .enabled_groups()
            .into_iter()
            .filter(|(m, _)| m.backend.model_name == model.backend.model_name)
            .map(|(_, l)| l)
            .collect();
        if levels.is_empty() {
            continue;
        }
        let gateway = factory(&model.backend, &cache_dir, &inputs.mapping)?;
        let name = model.backend.model_name.clone();
        for level in levels {
            tracing::info!(model = %name, %level, essays = inputs.essays.len(), "scoring");
            let group = run_group(&gateway, level, &inputs, cfg).await?;
            diagnostics.requested.push((name.clone(), level));
            diagnostics
                .failure_rates
                .extend(failure_rates(&name, level, &group.predictions));
            *parse_failure_counts.entry(name.clone()).or_insert(0) += group.failures.len();
            diagnostics.parse_failures.extend(group.failures);
            results.extend(agreement_for_group(
                &name,
                level,
                &group.predictions,
                cfg.seed,
                cfg.bootstrap.iters,
                cfg.bootstrap.alpha,
            )?);
            predictions.extend(group.predictions);
            dispatch.push(group.dispatch);
        }
    }

    let skipped = cfg
        .disabled_groups()
        .into_iter()
        .map(|(m, level)| SkippedGroup {
            model: m.backend.model_name.clone(),
            level,
            reason: "level not enabled for this model".to_string(),
        })
        .collect();
    let metadata = ReportMetadata {
        config_digest: cfg.digest(),
        seed: cfg.seed,
        bootstrap_iters: cfg.bootstrap.iters,
        alpha: cfg.bootstrap.alpha,
        started_at,
        finished_at: now(),
        threshold: cfg.threshold,
        baseline: cfg.baseline,
        skipped,
        parse_failure_counts,
    };
    let report = build_report(&results, &diagnostics, metadata)?;

    let run_dir = cfg.output_dir().join(format!("run-{}", cfg.digest()));
    std::fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
    let mut files = emit(&report, &run_dir)?;
    files.push(write_predictions(&run_dir, &predictions)?);
    files.push(write_dispatch(&run_dir, &dispatch)?);

    Ok(RunOutcome {
        report,
        run_dir,
        files,
        predictions,
        dispatch,
    })
}

fn write_predictions(dir: &Path, predictions: &[PredictionRecord]) -> Result<PathBuf> {
    let path = dir.join("predictions.jsonl");
    let mut buf = Vec::new();
    for p in predictions {
        serde_json::to_writer(&mut buf, p)?;
        buf.push(b'\n');
    }
    std::fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn write_dispatch(dir: &Path, dispatch: &[GroupDispatch]) -> Result<PathBuf> {
    let path = dir.join("dispatch.csv");
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for d in dispatch {
        w.serialize(d)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io(&path, e.into_error()))?;
    let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
