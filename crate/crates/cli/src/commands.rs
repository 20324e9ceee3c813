use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use fairscope::analysis::{self, BiasSource, DeltaReport, DeltaTable};
use fairscope::corpus::{self, Corpus, LoadOptions};
use fairscope::harness::{self, AuditConfig, SynthSpec};
use fairscope::metrics::{self, DatasetBiasReport, FairnessReport, SenseReport};
use fairscope::schema::SchemaSet;
use fairscope::stratify::{self, Substituter, SubstitutionTable};
use fairscope::subspace::{self, BiasSubspace, FitInput};
use fairscope::{perturb, Error, Result, FORMAT_VERSION};
use serde::Serialize;
use serde_json::Value;

use crate::output::{print_json, read_json, to_json, write_atomic, write_dir};
use crate::{BuildMode, Command, FitModeArg, Format, SchemaArg, SubspaceCommand};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Metrics {
            input,
            predictions,
            schema,
            threshold,
            normalize,
            out,
            format,
        } => metrics_cmd(
            &input,
            predictions.as_deref(),
            &schema,
            threshold,
            normalize,
            out.as_deref(),
            format,
        ),
        Command::Perturb {
            input,
            out,
            schema,
            mode,
            normalize,
        } => perturb_cmd(&input, &out, &schema, mode, normalize),
        Command::Stratify {
            input,
            out,
            schema,
            attribute,
            target_ratio,
            rate,
            provider,
            seed,
            plan_only,
        } => {
            let args = StratifyArgs {
                schema: schema.as_deref(),
                attribute: &attribute,
                target_ratio,
                rate,
                provider: provider.as_deref(),
                seed,
                plan_only,
            };
            stratify_cmd(&input, &out, &args)
        }
        Command::Subspace(SubspaceCommand::Fit {
            input,
            counterfactual,
            mode,
            k,
            attribute,
            out,
        }) => subspace_fit_cmd(&input, counterfactual.as_deref(), mode, k, &attribute, &out),
        Command::Subspace(SubspaceCommand::Apply {
            subspace,
            input,
            out,
            binary,
        }) => subspace_apply_cmd(&subspace, &input, &out, binary),
        Command::Sensescore {
            input,
            predictions,
            schema,
            out,
            format,
        } => sensescore_cmd(&input, predictions.as_deref(), &schema, out.as_deref(), format),
        Command::Correlate {
            bias,
            fairness,
            sources,
            external,
            out,
        } => correlate_cmd(&bias, &fairness, &sources, external.as_deref(), out.as_deref()),
        Command::Report {
            baseline,
            treated,
            baseline_label,
            treated_label,
            out,
            format,
        } => report_cmd(
            &baseline,
            &treated,
            &baseline_label,
            &treated_label,
            out.as_deref(),
            format,
        ),
        Command::Synth { spec, out, seed } => synth_cmd(spec.as_deref(), &out, seed),
        Command::Audit { config, out_dir, seed } => audit_cmd(&config, &out_dir, seed),
    }
}

fn load_schema_file(path: Option<&Path>) -> Result<SchemaSet> {
    match path {
        Some(p) => SchemaSet::load(p),
        None => Ok(SchemaSet::builtin()),
    }
}

/// Full schema for loading, and the attribute selection for measuring.
fn load_schemas(arg: &SchemaArg) -> Result<(SchemaSet, SchemaSet)> {
    let full = load_schema_file(arg.schema.as_deref())?;
    let selected = if arg.attributes.is_empty() {
        full.clone()
    } else {
        full.select(&arg.attributes)?
    };
    Ok((full, selected))
}

fn load(path: &Path, schemas: &SchemaSet, normalize: bool, predictions: Option<&Path>) -> Result<Corpus> {
    let c = corpus::load_corpus(
        path,
        corpus::Format::from_path(path),
        schemas,
        LoadOptions { normalize },
    )?;
    match predictions {
        Some(p) => {
            let file = std::fs::File::open(p).map_err(|e| Error::io(p, e))?;
            corpus::attach_predictions(&c, &corpus::read_predictions(file)?)
        }
        None => Ok(c),
    }
}

/// Writes to `out` when given; JSON also goes to stdout, other formats
/// go to stdout only without `out`.
fn emit(text: &str, json: Option<&str>, out: Option<&Path>) -> Result<()> {
    if let Some(p) = out {
        write_atomic(p, text.as_bytes())?;
    }
    match json {
        Some(j) => print!("{j}"),
        None if out.is_none() => print!("{text}"),
        None => {}
    }
    Ok(())
}

fn no_csv(format: Format, command: &str) -> Result<()> {
    if format == Format::Csv {
        return Err(Error::InvalidArgument(format!(
            "`{command}` supports --format json or md"
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct MetricsOutput {
    format_version: u32,
    threshold: f64,
    documents: usize,
    dataset_bias: Vec<DatasetBiasReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    fairness: Vec<FairnessReport>,
}

fn metrics_cmd(
    input: &Path,
    predictions: Option<&Path>,
    schema: &SchemaArg,
    threshold: f64,
    normalize: bool,
    out: Option<&Path>,
    format: Format,
) -> Result<()> {
    metrics::check_threshold(threshold)?;
    no_csv(format, "metrics")?;
    let (full, selected) = load_schemas(schema)?;
    let c = load(input, &full, normalize, predictions)?;
    let dataset_bias = metrics::overamplification_bias(&c, &selected)?;
    let fairness = if c.iter().any(|d| d.score.is_some()) {
        selected
            .attributes
            .iter()
            .map(|s| metrics::fairness_report(&c, s, threshold))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let report = MetricsOutput {
        format_version: FORMAT_VERSION,
        threshold,
        documents: c.len(),
        dataset_bias,
        fairness,
    };
    match format {
        Format::Json => {
            let j = to_json(&report)?;
            emit(&j, Some(&j), out)
        }
        _ => emit(&metrics_markdown(&report), None, out),
    }
}

fn metrics_markdown(r: &MetricsOutput) -> String {
    let f = analysis::format_score;
    let mut s = String::from(
        "| Attribute | Selection | Overamplification (raw) | Overamplification (norm) |\n|---|---|---|---|\n",
    );
    for b in &r.dataset_bias {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} |",
            b.attribute,
            b.selection.map_or_else(|| "n/a".into(), f),
            f(b.overamplification_raw),
            f(b.overamplification_norm)
        );
    }
    if !r.fairness.is_empty() {
        s.push_str("\n| Attribute | AUC | FPR_gap | TPR_gap | AUC_gap |\n|---|---|---|---|---|\n");
        for x in &r.fairness {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} |",
                x.attribute,
                f(x.auc_overall),
                f(x.fpr_gap),
                f(x.tpr_gap),
                f(x.auc_gap)
            );
        }
    }
    s
}

#[derive(Serialize)]
struct GroupSize {
    attribute: String,
    group: String,
    documents: usize,
    positives: usize,
}

fn group_sizes(c: &Corpus, schemas: &SchemaSet) -> Vec<GroupSize> {
    let mut out = Vec::new();
    for s in &schemas.attributes {
        for g in &s.groups {
            let (n, p) = c
                .in_group(&s.name, &g.name)
                .fold((0, 0), |(n, p), d| (n + 1, p + usize::from(d.is_toxic())));
            out.push(GroupSize {
                attribute: s.name.clone(),
                group: g.name.clone(),
                documents: n,
                positives: p,
            });
        }
    }
    out
}

fn perturb_cmd(input: &Path, out: &Path, schema: &SchemaArg, mode: BuildMode, normalize: bool) -> Result<()> {
    let (full, selected) = load_schemas(schema)?;
    let c = load(input, &full, normalize, None)?;
    let built = match mode {
        BuildMode::Fairness => perturb::build_balanced_fairness_set(&c, &selected)?,
        BuildMode::Training => perturb::build_perturbed_training_set(&c, &selected)?,
    };
    write_atomic(out, corpus::to_jsonl_string(&built).as_bytes())?;
    #[derive(Serialize)]
    struct Summary {
        format_version: u32,
        mode: &'static str,
        input_documents: usize,
        output_documents: usize,
        groups: Vec<GroupSize>,
    }
    print_json(&Summary {
        format_version: FORMAT_VERSION,
        mode: match mode {
            BuildMode::Fairness => "fairness",
            BuildMode::Training => "training",
        },
        input_documents: c.len(),
        output_documents: built.len(),
        groups: group_sizes(&built, &selected),
    })
}

struct StratifyArgs<'a> {
    schema: Option<&'a Path>,
    attribute: &'a str,
    target_ratio: f64,
    rate: f64,
    provider: Option<&'a Path>,
    seed: u64,
    plan_only: bool,
}

fn stratify_cmd(input: &Path, out: &Path, a: &StratifyArgs<'_>) -> Result<()> {
    if !(a.target_ratio > 0.0 && a.target_ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "--target-ratio must lie in (0, 1), got {}",
            a.target_ratio
        )));
    }
    if !(a.rate > 0.0 && a.rate <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "--rate must lie in (0, 1], got {}",
            a.rate
        )));
    }
    let schemas = load_schema_file(a.schema)?;
    let schema = schemas.attribute(a.attribute)?;
    let table = match a.provider {
        Some(p) => SubstitutionTable::load(p)?,
        None => SubstitutionTable::builtin(),
    };
    let c = load(input, &schemas, false, None)?;
    let plan = stratify::plan_stratification(&c, schema, a.target_ratio)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        format_version: u32,
        plan: &'a stratify::AugmentationPlan,
        #[serde(skip_serializing_if = "Option::is_none")]
        output_documents: Option<usize>,
        #[serde(skip_serializing_if = "Option::is_none")]
        selection_bias_after: Option<f64>,
    }
    if a.plan_only {
        return print_json(&Summary {
            format_version: FORMAT_VERSION,
            plan: &plan,
            output_documents: None,
            selection_bias_after: None,
        });
    }
    let substituter = Substituter::new(table, a.rate, schemas.protected_surfaces())?;
    let seed = harness::substream_seed(a.seed, "substitution");
    let augmented = stratify::apply_plan(&c, &plan, &substituter, seed)?;
    write_atomic(out, corpus::to_jsonl_string(&augmented).as_bytes())?;
    print_json(&Summary {
        format_version: FORMAT_VERSION,
        plan: &plan,
        output_documents: Some(augmented.len()),
        selection_bias_after: metrics::selection_bias(&augmented, schema).ok(),
    })
}

fn subspace_fit_cmd(
    input: &Path,
    counterfactual: Option<&Path>,
    mode: FitModeArg,
    k: usize,
    attribute: &str,
    out: &Path,
) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("--k must be at least 1".into()));
    }
    let fitted = match (mode, counterfactual) {
        (FitModeArg::Paired, None) => return Err(Error::InvalidArgument("paired mode needs --counterfactual".into())),
        (FitModeArg::Pooled, Some(_)) => {
            return Err(Error::InvalidArgument(
                "--counterfactual is only used in paired mode".into(),
            ))
        }
        (FitModeArg::Paired, Some(cf)) => {
            let factual = subspace::load_embeddings(input)?;
            let counter = subspace::load_embeddings(cf)?;
            subspace::fit_bias_subspace(
                FitInput::Paired {
                    factual: &factual,
                    counterfactual: &counter,
                },
                k,
                attribute,
            )?
        }
        (FitModeArg::Pooled, None) => {
            let set = subspace::load_embeddings(input)?;
            subspace::fit_bias_subspace(FitInput::Pooled(&set), k, attribute)?
        }
    };
    write_atomic(out, to_json(&fitted)?.as_bytes())?;
    #[derive(Serialize)]
    struct Summary<'a> {
        format_version: u32,
        k: usize,
        d: usize,
        eigenvalues: &'a [f64],
        fitted_from: usize,
    }
    print_json(&Summary {
        format_version: FORMAT_VERSION,
        k: fitted.k,
        d: fitted.d,
        eigenvalues: &fitted.eigenvalues,
        fitted_from: fitted.fitted_from,
    })
}

fn subspace_apply_cmd(subspace_path: &Path, input: &Path, out: &Path, binary: bool) -> Result<()> {
    let s = BiasSubspace::load(subspace_path)?;
    let set = subspace::load_embeddings(input)?;
    let debiased = subspace::debias_embeddings(&set, &s)?;
    let binary = binary || out.extension().is_some_and(|e| e == "bin");
    let mut bytes = Vec::new();
    let written = if binary {
        subspace::write_embeddings_binary(&debiased, &mut bytes)
    } else {
        subspace::write_embeddings_jsonl(&debiased, &mut bytes)
    };
    written.map_err(|e| Error::io(out, e))?;
    write_atomic(out, &bytes)?;
    print_json(&serde_json::json!({
        "format_version": FORMAT_VERSION,
        "vectors": debiased.len(),
        "d": debiased.dim(),
        "binary": binary,
    }))
}

fn sensescore_cmd(
    input: &Path,
    predictions: Option<&Path>,
    schema: &SchemaArg,
    out: Option<&Path>,
    format: Format,
) -> Result<()> {
    no_csv(format, "sensescore")?;
    let (full, selected) = load_schemas(schema)?;
    let c = load(input, &full, false, predictions)?;
    let reports = selected
        .attributes
        .iter()
        .map(|s| metrics::sense_report(&c, s))
        .collect::<Result<Vec<SenseReport>>>()?;
    match format {
        Format::Json => {
            let j = to_json(&serde_json::json!({
                "format_version": FORMAT_VERSION,
                "sense": reports,
            }))?;
            emit(&j, Some(&j), out)
        }
        _ => {
            let mut s = String::from("| Attribute | SenseScore | Pairs |\n|---|---|---|\n");
            for r in &reports {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} |",
                    r.attribute,
                    analysis::format_score(r.sense_score),
                    r.n
                );
            }
            emit(&s, None, out)
        }
    }
}

/// Accepts a bare array, a single object, or an object holding the array
/// under `key`.
fn extract<T: serde::de::DeserializeOwned>(value: Value, key: &str, path: &Path) -> Result<Vec<T>> {
    let value = match value {
        Value::Object(mut m) if m.contains_key(key) => m.remove(key).unwrap_or(Value::Null),
        Value::Object(m) => Value::Array(vec![Value::Object(m)]),
        other => other,
    };
    serde_json::from_value(value).map_err(|e| Error::json(path.display().to_string(), e))
}

fn correlate_cmd(
    bias: &Path,
    fairness: &Path,
    sources: &[String],
    external: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let sources = sources
        .iter()
        .map(|s| BiasSource::parse(s.trim()))
        .collect::<Result<Vec<_>>>()?;
    if sources.is_empty() {
        return Err(Error::InvalidArgument("--sources is empty".into()));
    }
    if sources.contains(&BiasSource::External) != external.is_some() {
        return Err(Error::InvalidArgument(
            "the external source and --external must be given together".into(),
        ));
    }
    let b: Vec<DatasetBiasReport> = extract(read_json(bias)?, "dataset_bias", bias)?;
    let f: Vec<FairnessReport> = extract(read_json(fairness)?, "fairness", fairness)?;
    let ext: Option<BTreeMap<String, f64>> = match external {
        Some(p) => Some(serde_json::from_value(read_json(p)?).map_err(|e| Error::json(p.display().to_string(), e))?),
        None => None,
    };
    let m = analysis::correlate_bias_fairness(&b, &f, &sources, ext.as_ref())?;
    let j = to_json(&serde_json::json!({
        "format_version": FORMAT_VERSION,
        "correlation": m,
    }))?;
    emit(&j, Some(&j), out)
}

#[derive(Serialize)]
struct ReportRow {
    label: String,
    deltas: Vec<DeltaReport>,
}

#[derive(Serialize)]
struct ReportTable {
    attribute: String,
    baseline_label: String,
    baseline: FairnessReport,
    rows: Vec<ReportRow>,
}

fn report_cmd(
    baseline: &Path,
    treated: &Path,
    baseline_label: &str,
    treated_label: &str,
    out: Option<&Path>,
    format: Format,
) -> Result<()> {
    let base: Vec<FairnessReport> = extract(read_json(baseline)?, "fairness", baseline)?;
    let treat: Vec<FairnessReport> = extract(read_json(treated)?, "fairness", treated)?;
    if base.is_empty() {
        return Err(Error::EmptyInput(format!(
            "{} holds no fairness reports",
            baseline.display()
        )));
    }
    let tables = base
        .into_iter()
        .map(|b| {
            let t = treat
                .iter()
                .find(|t| t.attribute == b.attribute)
                .ok_or_else(|| Error::UnknownAttribute(b.attribute.clone()))?;
            Ok(DeltaTable {
                attribute: b.attribute.clone(),
                baseline_label: baseline_label.to_string(),
                rows: vec![(treated_label.to_string(), t.clone())],
                baseline: b,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    match format {
        Format::Md => emit(&analysis::render_markdown(&tables)?, None, out),
        Format::Csv => emit(&analysis::render_csv(&tables)?, None, out),
        Format::Json => {
            let rows = tables
                .iter()
                .map(|t| {
                    Ok(ReportTable {
                        attribute: t.attribute.clone(),
                        baseline_label: t.baseline_label.clone(),
                        baseline: t.baseline.clone(),
                        rows: t
                            .deltas()?
                            .into_iter()
                            .map(|(label, deltas)| ReportRow { label, deltas })
                            .collect(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let j = to_json(&serde_json::json!({
                "format_version": FORMAT_VERSION,
                "tables": rows,
            }))?;
            emit(&j, Some(&j), out)
        }
    }
}

fn synth_cmd(spec: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut spec = match spec {
        Some(p) => SynthSpec::load(p)?,
        None => harness::default_synth_spec(),
    };
    if seed.is_some() {
        spec.seed = seed;
    }
    let c = harness::generate_synthetic_corpus(&spec)?;
    write_atomic(out, corpus::to_jsonl_string(&c).as_bytes())?;
    #[derive(Serialize)]
    struct Expected {
        attribute: String,
        selection_bias: f64,
        overamplification_raw: f64,
    }
    let expected = spec
        .attributes
        .iter()
        .map(|a| {
            Ok(Expected {
                attribute: a.name.clone(),
                selection_bias: spec.expected_selection_bias(&a.name)?,
                overamplification_raw: spec.expected_overamplification(&a.name)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    print_json(&serde_json::json!({
        "format_version": FORMAT_VERSION,
        "documents": c.len(),
        "positives": c.positives(),
        "seed": spec.seed.unwrap_or(0),
        "expected": expected,
    }))
}

fn audit_cmd(config: &Path, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg = AuditConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let bundle = harness::run_audit(&cfg)?;
    write_dir(
        out_dir,
        &[
            ("bundle.json", bundle.to_json()?.into_bytes()),
            ("report.md", bundle.render_markdown()?.into_bytes()),
            ("deltas.csv", bundle.deltas_csv()?.into_bytes()),
        ],
    )?;
    #[derive(Serialize)]
    struct Row {
        treatment: &'static str,
        test_auc: f64,
        mean_sense_score: f64,
    }
    print_json(&serde_json::json!({
        "format_version": FORMAT_VERSION,
        "out_dir": out_dir.display().to_string(),
        "recommended": bundle.selection.recommended.name(),
        "treatments": bundle.treatments.iter().map(|t| Row {
            treatment: t.treatment.name(),
            test_auc: t.test_auc,
            mean_sense_score: t.mean_sense_score,
        }).collect::<Vec<_>>(),
    }))
}
