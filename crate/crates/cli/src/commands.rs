use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, TimeZone, Utc};
use gagne_core::classify::{agreement, classify_keyword_batch, classify_llm, KeywordAlignment, LabelResult};
use gagne_core::corpus::{export_finetune, load_corpus, split, write_corpus, CorpusFile, FinetuneFormat};
use gagne_core::exec::Execution;
use gagne_core::gateway::{batch_generate, BatchOptions, Gateway, HttpTransport, DEFAULT_MAX_ROUNDS};
use gagne_core::human_eval::{ratings_csv, Dimension, RatingScope, RatingSummary};
use gagne_core::metrics::{corpus_report, to_json_six_decimals, EvalPair, Metric, MetricReport, ReportOptions, Smoothing};
use gagne_core::prompting::{render, validate_template, PromptLoadError, PromptMode, PromptSpec, PromptTemplate};
use gagne_core::{CurriculumStandard, GagneEvent, GatewayError, ReviewState};
use gagne_service::{GenerationSettings, ServiceConfig, Store};
use serde::Serialize;
use serde_json::json;

use crate::config::CliConfig;
use crate::input::{index_rows, parse_event, pair_labels, read_labels, read_rows};
use crate::{
    AgreementArgs, ClassifyArgs, CliError, Command, EvalArgs, ExportArgs, GenerateArgs, LabelMethodArg, OutputFormat,
    PromptCommand, ProviderKind, RatingsCommand, ServeArgs, SplitArgs, StatsArgs,
};

const DEFAULT_PARALLELISM: usize = 4;

pub fn run(command: Command, config: &CliConfig) -> Result<(), CliError> {
    match command {
        Command::Generate(a) => generate(a, config),
        Command::Classify(a) => classify(a, config),
        Command::Agreement(a) => agreement_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Stats(a) => stats(a, config),
        Command::Split(a) => split_cmd(a, config),
        Command::Export(a) => export(a, config),
        Command::Serve(a) => serve(a, config),
        Command::Ratings(c) => ratings(c, config),
        Command::Prompt(c) => prompt(c, config),
    }
}

fn corpus_path(given: Option<PathBuf>, config: &CliConfig) -> Result<PathBuf, CliError> {
    given
        .or_else(|| config.paths.corpus.clone())
        .ok_or_else(|| CliError::new("missing_corpus", "no corpus path given and paths.corpus is not configured"))
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
            }
            fs::write(path, bytes).map_err(|e| io_error(path, e))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(bytes).and_then(|_| stdout.flush()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::new("io_error", e.to_string())),
                _ => Ok(()),
            }
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    let code = if e.kind() == std::io::ErrorKind::NotFound { "file_not_found" } else { "io_error" };
    CliError::new(code, format!("{}: {e}", path.display()))
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("output serializes");
    text.push('\n');
    write_output(None, text.as_bytes())
}

fn gateway(kind: ProviderKind, config: &CliConfig) -> Result<Gateway, CliError> {
    match kind {
        ProviderKind::Mock => Ok(Gateway::mock()),
        ProviderKind::Http => Ok(Gateway::new(config.provider_config(), Arc::new(HttpTransport::new()?))?),
    }
}

fn load_template(path: Option<&Path>, mode: &str, config: &CliConfig) -> Result<PromptTemplate, CliError> {
    match path.or(config.paths.prompt_template.as_deref()) {
        Some(p) => PromptTemplate::load(p).map_err(|e| match e {
            PromptLoadError::Io(e) => e.into(),
            PromptLoadError::Prompt(e) => e.into(),
        }),
        None => Ok(PromptTemplate::default_for(mode.parse::<PromptMode>()?)),
    }
}

fn standard_from(text: Option<&str>, concept: &str) -> Option<CurriculumStandard> {
    text.map(|t| CurriculumStandard {
        id: "cli".into(),
        subject: "mathematics".into(),
        grade_band: String::new(),
        knowledge_point: concept.into(),
        requirement_text: t.into(),
    })
}

fn parse_now(now: Option<&str>, provider: ProviderKind) -> Result<DateTime<Utc>, CliError> {
    match (now, provider) {
        (Some(s), _) => DateTime::parse_from_rfc3339(s)
            .map(|t| t.with_timezone(&Utc))
            .map_err(|e| CliError::new("invalid_argument", format!("--now {s:?}: {e}"))),
        (None, ProviderKind::Mock) => Ok(Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()),
        (None, ProviderKind::Http) => Ok(Utc::now()),
    }
}

fn generate(a: GenerateArgs, config: &CliConfig) -> Result<(), CliError> {
    let provider = a.provider.provider;
    let template = load_template(a.template.as_deref(), &a.mode, config)?;
    let events: Vec<GagneEvent> = if a.events.is_empty() {
        GagneEvent::ALL.to_vec()
    } else {
        a.events.iter().map(|e| parse_event(e)).collect::<Result<_, _>>()?
    };
    if a.count == 0 {
        return Err(CliError::new("invalid_argument", "--count must be at least 1"));
    }
    let exemplar_pool = match &a.exemplars {
        Some(p) => load_corpus(p)?.records.into_iter().filter(|r| r.review_state == ReviewState::Accepted).collect(),
        None => Vec::new(),
    };

    let mut specs: Vec<PromptSpec> = Vec::new();
    for concept in &a.concepts {
        let standard = standard_from(a.standard.as_deref(), concept);
        for &event in &events {
            let exemplars: Vec<_> = exemplar_pool.iter().filter(|r| r.event == event).cloned().collect();
            let spec = render(&template, concept, event, standard.as_ref(), &exemplars)?;
            specs.extend(std::iter::repeat_n(spec, a.count));
        }
    }

    let gw = gateway(provider, config)?;
    let opts = BatchOptions {
        max_rounds: a.max_rounds.or(config.generation.max_rounds).unwrap_or(DEFAULT_MAX_ROUNDS),
        seed: a.seed,
        now: parse_now(a.now.as_deref(), provider)?,
        parallelism: a.parallelism.or(config.generation.parallelism).unwrap_or(DEFAULT_PARALLELISM),
    };
    let results = batch_generate(&gw, &specs, &KeywordAlignment::default(), &opts)?;

    let mut records = Vec::new();
    let mut unaligned = 0;
    let mut first_error: Option<GatewayError> = None;
    let mut failed = 0;
    for result in results {
        match result {
            Ok(outcome) => records.push(outcome.template),
            Err(GatewayError::RefinementExhausted(outcome)) => {
                unaligned += 1;
                if a.keep_unaligned {
                    records.push(outcome.template);
                }
            }
            Err(e) => {
                failed += 1;
                first_error.get_or_insert(e);
            }
        }
    }
    let mut seen = BTreeSet::new();
    records.retain(|r| seen.insert(r.id.clone()));
    write_output(a.out.as_deref(), write_corpus(&records).as_bytes())?;
    eprintln!(
        "generated {} of {} templates ({unaligned} failed the alignment check{}, {failed} failed)",
        records.len(),
        specs.len(),
        if a.keep_unaligned { " and were kept" } else { "" },
    );
    match first_error {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct LabelOut {
    id: String,
    event: GagneEvent,
    #[serde(flatten)]
    result: LabelResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    gold: Option<GagneEvent>,
}

fn classify(a: ClassifyArgs, config: &CliConfig) -> Result<(), CliError> {
    let rows: Vec<(String, String, Option<GagneEvent>)> = match (&a.input, &a.text) {
        (Some(path), _) => read_rows(path)?
            .into_iter()
            .map(|r| {
                let gold = r.event.as_deref().map(parse_event).transpose()?;
                let text = r.all_texts().swap_remove(0);
                Ok((r.id, text, gold))
            })
            .collect::<Result<_, CliError>>()?,
        (None, Some(text)) => vec![("text".into(), text.clone(), None)],
        (None, None) => unreachable!("clap requires --input or --text"),
    };
    let texts: Vec<&str> = rows.iter().map(|(_, t, _)| t.as_str()).collect();
    let labels: Vec<LabelResult> = match a.method {
        LabelMethodArg::Keyword => classify_keyword_batch(&texts, Execution::Parallel).into_iter().collect::<Result<_, _>>()?,
        LabelMethodArg::Llm => {
            let gw = gateway(a.provider.provider, config)?;
            texts.iter().map(|t| classify_llm(&gw, t)).collect::<Result<_, _>>()?
        }
    };
    let out: Vec<LabelOut> = rows
        .into_iter()
        .zip(labels)
        .map(|((id, _, gold), result)| LabelOut { id, event: result.event, result, gold })
        .collect();

    if let Some(path) = &a.out {
        let mut lines = String::new();
        for row in &out {
            lines.push_str(&serde_json::to_string(&json!({"id": row.id, "event": row.event, "confidence": row.result.confidence})).unwrap());
            lines.push('\n');
        }
        write_output(Some(path), lines.as_bytes())?;
    }

    let gold: Vec<(GagneEvent, GagneEvent)> = out.iter().filter_map(|r| r.gold.map(|g| (g, r.event))).collect();
    let summary = if gold.is_empty() {
        None
    } else {
        let (g, p): (Vec<_>, Vec<_>) = gold.iter().copied().unzip();
        let report = agreement(&g, &p)?;
        Some(json!({"n_gold": gold.len(), "accuracy": report.observed_agreement, "kappa": report.kappa}))
    };
    match a.format {
        OutputFormat::Json => print_json(&json!({"labels": out, "summary": summary})),
        OutputFormat::Text => {
            let mut text = String::new();
            for row in &out {
                text.push_str(&format!("{}\t{}\t{:.3}\n", row.id, row.event, row.result.confidence));
            }
            if let Some(s) = summary {
                text.push_str(&format!(
                    "accuracy {:.4} over {} gold labels, kappa {:.4}\n",
                    s["accuracy"].as_f64().unwrap(),
                    s["n_gold"],
                    s["kappa"].as_f64().unwrap()
                ));
            }
            write_output(None, text.as_bytes())
        }
    }
}

fn agreement_cmd(a: AgreementArgs) -> Result<(), CliError> {
    let (left, right) = pair_labels(&read_labels(&a.a)?, &read_labels(&a.b)?)?;
    let report = agreement(&left, &right)?;
    match a.format {
        OutputFormat::Json => print_json(&report),
        OutputFormat::Text => {
            let mut text = format!(
                "items     {}\nobserved  {:.6}\nexpected  {:.6}\nkappa     {:.6}{}\n\nconfusion (rows: --a, columns: --b)\n",
                report.n_items,
                report.observed_agreement,
                report.expected_agreement,
                report.kappa,
                if report.degenerate { "  (both raters constant and equal)" } else { "" }
            );
            text.push_str("    ");
            for j in 1..=9 {
                text.push_str(&format!("{j:>5}"));
            }
            text.push('\n');
            for (i, row) in report.confusion.iter().enumerate() {
                text.push_str(&format!("{:>4}", i + 1));
                for c in row {
                    text.push_str(&format!("{c:>5}"));
                }
                text.push('\n');
            }
            write_output(None, text.as_bytes())
        }
    }
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    let candidates = read_rows(&a.candidates)?;
    let references = index_rows(&a.references, read_rows(&a.references)?)?;
    let mut seen = BTreeSet::new();
    let mut pairs = Vec::with_capacity(candidates.len());
    for c in candidates {
        if !seen.insert(c.id.clone()) {
            return Err(CliError::new("duplicate_id", format!("{}: id {:?} appears twice", a.candidates.display(), c.id)));
        }
        let refs = references
            .get(&c.id)
            .ok_or_else(|| CliError::new("unpaired_id", format!("candidate {:?} has no reference", c.id)))?;
        pairs.push(EvalPair { candidate: c.all_texts().swap_remove(0), references: refs.all_texts(), id: c.id });
    }
    let metrics: Vec<Metric> = a
        .metrics
        .iter()
        .map(|m| m.parse::<Metric>().map_err(|e| CliError::new("invalid_argument", e)))
        .collect::<Result<_, _>>()?;
    let smoothing: Smoothing = a.smoothing.parse().map_err(|e: String| CliError::new("invalid_argument", e))?;
    let exec = if a.sequential { Execution::Sequential } else { Execution::Parallel };
    let report = corpus_report(&pairs, &ReportOptions { metrics, smoothing, exec })?;
    let json = format!("{}\n", to_json_six_decimals(&report));
    if let Some(out) = &a.out {
        write_output(Some(out), json.as_bytes())?;
    }
    match a.format {
        OutputFormat::Json => write_output(None, json.as_bytes()),
        OutputFormat::Text => write_output(None, eval_table(&report).as_bytes()),
    }
}

fn eval_table(report: &MetricReport) -> String {
    let agg = &report.aggregate;
    let mut text = format!("pairs      {}\n", agg.n_pairs);
    if let Some(b) = &agg.bleu4 {
        text.push_str(&format!(
            "bleu4      {:.6}  (bp {:.6}, p1-4 {:.4} {:.4} {:.4} {:.4})\n",
            b.score, b.brevity_penalty, b.precisions[0], b.precisions[1], b.precisions[2], b.precisions[3]
        ));
    }
    for (name, score) in [("rouge1", &agg.rouge1), ("rouge2", &agg.rouge2), ("rougeL", &agg.rouge_l)] {
        if let Some(s) = score {
            text.push_str(&format!("{name:<10} P {:.6}  R {:.6}  F1 {:.6}\n", s.precision, s.recall, s.f1));
        }
    }
    text
}

fn stats(a: StatsArgs, config: &CliConfig) -> Result<(), CliError> {
    let corpus = load_corpus(corpus_path(a.corpus, config)?)?;
    let s = corpus.stats();
    match a.format {
        OutputFormat::Json => print_json(&s),
        OutputFormat::Text => {
            let mut text = String::new();
            for (event, n) in &s.per_event_counts {
                text.push_str(&format!("{:<2} {:<40} {n:>7}\n", event.ordinal(), event.display_name()));
            }
            text.push_str(&format!("{:<43} {:>7}\n", "total", s.total));
            let states: Vec<String> = s.per_state_counts.iter().map(|(st, n)| format!("{} {n}", st.as_str())).collect();
            text.push_str(&format!("({})\n", states.join(", ")));
            write_output(None, text.as_bytes())
        }
    }
}

fn split_cmd(a: SplitArgs, config: &CliConfig) -> Result<(), CliError> {
    let corpus: CorpusFile = load_corpus(corpus_path(a.corpus, config)?)?;
    let pieces = split(&corpus.records, &a.ratios, a.seed)?;
    let names: Vec<String> = if !a.names.is_empty() {
        if a.names.len() != pieces.len() {
            return Err(CliError::new("invalid_argument", format!("{} names for {} ratios", a.names.len(), pieces.len())));
        }
        a.names.clone()
    } else {
        match pieces.len() {
            2 => vec!["train".into(), "test".into()],
            3 => vec!["train".into(), "validation".into(), "test".into()],
            n => (0..n).map(|i| format!("part{i}")).collect(),
        }
    };
    let mut summary = Vec::new();
    for (name, piece) in names.iter().zip(&pieces) {
        let path = a.out_dir.join(format!("{name}.jsonl"));
        write_output(Some(&path), write_corpus(piece).as_bytes())?;
        summary.push(json!({"name": name, "path": path, "records": piece.len()}));
    }
    match a.format {
        OutputFormat::Json => print_json(&json!({"seed": a.seed, "ratios": a.ratios, "pieces": summary})),
        OutputFormat::Text => {
            let text: String = summary
                .iter()
                .map(|p| format!("{:<12} {:>7}  {}\n", p["name"].as_str().unwrap(), p["records"], p["path"].as_str().unwrap()))
                .collect();
            write_output(None, text.as_bytes())
        }
    }
}

fn export(a: ExportArgs, config: &CliConfig) -> Result<(), CliError> {
    let format: FinetuneFormat = a.format.parse().map_err(|e: String| CliError::new("invalid_argument", e))?;
    let corpus = load_corpus(corpus_path(a.corpus, config)?)?;
    let bytes = export_finetune(&corpus.records, format)?;
    write_output(a.out.as_deref(), &bytes)
}

fn serve(a: ServeArgs, config: &CliConfig) -> Result<(), CliError> {
    let token = a
        .token
        .or_else(|| config.service.token.clone())
        .ok_or_else(|| CliError::new("invalid_config", "an API token is required (--token, GAGNEGEN_TOKEN or service.token)"))?;
    let service = ServiceConfig {
        corpus: corpus_path(a.corpus, config)?,
        bind: a.bind.or(config.service.bind).unwrap_or_else(|| "127.0.0.1:8080".parse().unwrap()),
        token,
        generation: GenerationSettings {
            parallelism: a.parallelism.or(config.generation.parallelism).unwrap_or(DEFAULT_PARALLELISM),
            max_rounds: a.max_rounds.or(config.generation.max_rounds).unwrap_or(DEFAULT_MAX_ROUNDS),
        },
    };
    let gw = gateway(a.provider.provider, config)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::new("io_error", e.to_string()))?;
    eprintln!("serving {} on http://{}", service.corpus.display(), service.bind);
    runtime.block_on(gagne_service::serve_until_interrupted(service, gw))?;
    Ok(())
}

fn ratings(c: RatingsCommand, config: &CliConfig) -> Result<(), CliError> {
    match c {
        RatingsCommand::Export { corpus, out } => {
            let store = Store::open(corpus_path(corpus, config)?)?;
            let csv = ratings_csv(store.ratings().iter()).map_err(|e| CliError::new("io_error", e.to_string()))?;
            write_output(out.as_deref(), csv.as_bytes())
        }
        RatingsCommand::Summary { corpus, templates, format } => {
            let store = Store::open(corpus_path(corpus, config)?)?;
            let scope = if templates.is_empty() {
                RatingScope::All
            } else {
                RatingScope::System { tag: "selection".into(), template_ids: templates.into_iter().collect() }
            };
            let summary: RatingSummary = store.rating_summary(&scope)?;
            match format {
                OutputFormat::Json => print_json(&summary),
                OutputFormat::Text => {
                    let mut text = format!("ratings {}  raters {}\n", summary.n_ratings, summary.n_raters);
                    for d in Dimension::ALL {
                        let s = summary.per_dimension[&d];
                        text.push_str(&format!("{:<40} mean {:.3}  sd {:.3}\n", d.title(), s.mean, s.sd));
                    }
                    match summary.weighted_kappa {
                        Some(k) => text.push_str(&format!("weighted kappa {k:.4}\n")),
                        None => text.push_str("weighted kappa n/a (fewer than two raters on a shared item)\n"),
                    }
                    write_output(None, text.as_bytes())
                }
            }
        }
    }
}

fn prompt(c: PromptCommand, config: &CliConfig) -> Result<(), CliError> {
    match c {
        PromptCommand::Validate { file, format } => {
            let template = load_template(Some(&file), "cot", config)?;
            let findings = validate_template(&template);
            match format {
                OutputFormat::Json => print_json(&json!({"template": template.id, "mode": template.mode, "findings": findings}))?,
                OutputFormat::Text => {
                    let text: String = if findings.is_empty() {
                        format!("{}: ok\n", file.display())
                    } else {
                        findings.iter().map(|f| format!("{}: {}\n", file.display(), f.message)).collect()
                    };
                    write_output(None, text.as_bytes())?;
                }
            }
            if findings.is_empty() {
                Ok(())
            } else {
                Err(CliError::new("invalid_template", format!("{} finding(s)", findings.len())))
            }
        }
        PromptCommand::Render { concept, event, mode, template, standard } => {
            let template = load_template(template.as_deref(), &mode, config)?;
            let standard = standard_from(standard.as_deref(), &concept);
            let spec = render(&template, &concept, parse_event(&event)?, standard.as_ref(), &[])?;
            write_output(None, format!("{}\n", spec.rendered_text).as_bytes())
        }
    }
}
