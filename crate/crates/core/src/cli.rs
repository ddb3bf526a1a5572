//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage or validation errors (with a JSON
//! error list on stderr), 2 on I/O errors.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::association::{association_rates, ThresholdGrid};
use crate::bootstrap::BootstrapConfig;
use crate::error::{Error, Result, Violation};
use crate::fixture::{make_fixture, FixtureSpec};
use crate::geo::{aggregate_geo, dedupe, household_hit_rates, IncomeBucketing};
use crate::geometry::{cc_face_crop_plan, miap_crop_plan, miap_inference_set, BoundingBox, CropPlan};
use crate::ingest::{
    load_predictions, read_embeddings, read_manifest, validate_distribution, Dataset, ExpectedDistribution,
    LabelMap, Manifest,
};
use crate::knn::{normalize_rows, top_k_with, write_neighbors_csv, KnnConfig};
use crate::model::{Grouping, Validate};
use crate::report::{curves_csv, digest_inputs, emit_curves, AuditReport, Payload};
use crate::retrieval::{retrieval_report, RetrievalConfig};
use crate::taxonomy::AssociationTaxonomy;

#[derive(Debug, Parser)]
#[command(name = "fairaudit", version, about = "Fairness indicators for image embedding models")]
pub struct Cli {
    /// Output file (a directory for `fixture`); stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,
    /// Worker threads; all cores when omitted.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Record the generation time in the report.
    #[arg(long, global = true)]
    pub timestamp: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check input files against their formats and schemas.
    Validate(ValidateArgs),
    /// Plan crops for MIAP person boxes or CC face boxes.
    CropPlan(CropPlanArgs),
    /// Harmful label association rates per group.
    Indicator1(Indicator1Args),
    /// Household hit rates by region and income.
    Indicator2(Indicator2Args),
    /// Same-attribute retrieval precision.
    Indicator3(Indicator3Args),
    /// Rate versus confidence threshold series from an indicator1 report.
    Curves(CurvesArgs),
    /// Write a synthetic fixture with known metric values.
    Fixture(FixtureArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, requires = "manifest")]
    pub dataset: Option<String>,
    /// Compare group counts with an expected distribution (`group,expected_count`).
    #[arg(long, requires = "manifest")]
    pub expected: Option<PathBuf>,
    /// Compare group counts with the bundled distribution for the dataset.
    #[arg(long, requires = "manifest", conflicts_with = "expected")]
    pub check_distribution: bool,
    #[arg(long)]
    pub preds: Option<PathBuf>,
    #[arg(long, requires = "ids")]
    pub emb: Option<PathBuf>,
    #[arg(long, requires = "emb")]
    pub ids: Option<PathBuf>,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CropPlanArgs {
    /// MIAP manifest.
    #[arg(long, required_unless_present = "faces", conflicts_with = "faces")]
    pub manifest: Option<PathBuf>,
    /// CC face boxes: `id,frame_w,frame_h,x0,y0,x1,y1`.
    #[arg(long)]
    pub faces: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Indicator1Args {
    #[arg(long)]
    pub preds: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub dataset: String,
    /// Association taxonomy CSV; the bundled one when omitted.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long, default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
    pub thresholds: String,
    /// Comma-separated groupings; `a_x_b` crosses two attributes. Defaults to
    /// every attribute of the dataset.
    #[arg(long)]
    pub group_by: Option<String>,
}

#[derive(Debug, Args)]
pub struct Indicator2Args {
    #[arg(long)]
    pub preds: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// `concept,class` relabeling applied to manifest labels.
    #[arg(long)]
    pub label_map: Option<PathBuf>,
    #[arg(long, default_value = "region,income")]
    pub group_by: String,
    /// Bootstrap resamples; 0 disables intervals.
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0.95)]
    pub confidence: f64,
    /// Logarithm base for income buckets: `e` or a number.
    #[arg(long, default_value = "e")]
    pub log_base: String,
    /// Optional confidence threshold on predictions.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct Indicator3Args {
    #[arg(long)]
    pub query_emb: PathBuf,
    #[arg(long)]
    pub query_ids: PathBuf,
    #[arg(long)]
    pub query_manifest: PathBuf,
    #[arg(long, default_value = "CC")]
    pub query_dataset: String,
    #[arg(long)]
    pub db_emb: PathBuf,
    #[arg(long)]
    pub db_ids: PathBuf,
    #[arg(long)]
    pub db_manifest: PathBuf,
    #[arg(long, default_value = "UTK")]
    pub db_dataset: String,
    #[arg(long, default_value = "10,50")]
    pub k: String,
    #[arg(long, default_value = "gender,skin_tone,gender_x_skin_tone")]
    pub stratify: String,
    #[arg(long, default_value = "gender")]
    pub match_attribute: String,
    /// Also write every query's neighbor list to this CSV.
    #[arg(long)]
    pub neighbors: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    /// JSON report written by `indicator1`.
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    /// JSON fixture spec; the built-in spec when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

#[derive(Serialize)]
struct ErrorEntry {
    kind: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    violations: Vec<Violation>,
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Io { .. } => "io",
        Error::Format { .. } => "format",
        Error::IdCountMismatch { .. } => "id_count_mismatch",
        Error::Malformed { .. } => "malformed",
        Error::DuplicateId { .. } => "duplicate_id",
        Error::Invalid(_) => "invalid",
        Error::UnknownSchema(_) => "unknown_schema",
        Error::MissingColumn(_) => "missing_column",
        Error::Vocabulary { .. } => "vocabulary",
        Error::Taxonomy { .. } => "taxonomy",
        Error::UnmatchedImage(_) => "unmatched_image",
        Error::MissingPrediction(_) => "missing_prediction",
        Error::Conflict { .. } => "conflict",
        Error::DimensionMismatch { .. } => "dimension_mismatch",
        Error::KTooLarge { .. } => "k_too_large",
        Error::ZeroNorm { .. } => "zero_norm",
        Error::AgeOutOfRange(_) => "age_out_of_range",
        Error::NonPositiveIncome(_) => "non_positive_income",
        Error::InvalidArgument(_) => "invalid_argument",
    }
}

fn error_json(errors: &[ErrorEntry]) -> String {
    serde_json::to_string(&json!({ "errors": errors })).expect("serializable")
}

fn entry(e: &Error) -> ErrorEntry {
    ErrorEntry {
        kind: error_kind(e),
        message: e.to_string(),
        violations: match e {
            Error::Invalid(v) => v.clone(),
            _ => Vec::new(),
        },
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_json(&[entry(&e)]));
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    match cli.threads {
        Some(n) if n > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            pool.install(|| dispatch(cli))
        }
        Some(_) => Err(Error::InvalidArgument("--threads must be positive".into())),
        None => dispatch(cli),
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Validate(a) => validate(cli, a),
        Command::CropPlan(a) => crop_plan(cli, a),
        Command::Indicator1(a) => indicator1(cli, a),
        Command::Indicator2(a) => indicator2(cli, a),
        Command::Indicator3(a) => indicator3(cli, a),
        Command::Curves(a) => curves(cli, a),
        Command::Fixture(a) => fixture(cli, a),
    }
}

fn write_output(cli: &Cli, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match &cli.out {
        Some(path) => {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            let mut w = BufWriter::new(file);
            f(&mut w)?;
            w.flush().map_err(|e| Error::io(path, e))
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w)?;
            w.flush().map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn write_json<T: Serialize>(cli: &Cli, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_output(cli, |w| w.write_all(text.as_bytes()).map_err(|e| Error::io("<output>", e)))
}

fn emit_report(cli: &Cli, mut report: AuditReport) -> Result<()> {
    if cli.timestamp {
        report.generated_at = Some(
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        );
    }
    match cli.format {
        OutputFormat::Json => {
            let text = report.to_json();
            write_output(cli, |w| w.write_all(text.as_bytes()).map_err(|e| Error::io("<output>", e)))
        }
        OutputFormat::Csv => write_output(cli, |w| report.write_csv(w)),
    }
}

fn parse_dataset(s: &str) -> Result<Dataset> {
    s.parse()
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn validate(cli: &Cli, a: &ValidateArgs) -> Result<()> {
    let mut summary = serde_json::Map::new();
    let mut problems: Vec<ErrorEntry> = Vec::new();

    if let Some(path) = &a.manifest {
        let dataset = parse_dataset(a.dataset.as_deref().ok_or_else(|| {
            Error::InvalidArgument("--manifest needs --dataset".into())
        })?)?;
        let manifest = read_manifest(path, dataset)?;
        let rows = match &manifest {
            Manifest::Subject(m) => m.rows.len(),
            Manifest::Household(m) => m.rows.len(),
        };
        let expected = match (&a.expected, a.check_distribution) {
            (Some(p), _) => Some(ExpectedDistribution::load(p)?),
            (None, true) => Some(ExpectedDistribution::bundled(dataset)),
            (None, false) => None,
        };
        let mut entry = json!({ "path": path_str(path), "dataset": dataset.name(), "rows": rows });
        if let Some(expected) = expected {
            let mismatches = validate_distribution(&manifest, &expected)?;
            for m in &mismatches {
                problems.push(ErrorEntry {
                    kind: "distribution",
                    message: format!("group {}: expected {}, found {}", m.group, m.expected, m.actual),
                    violations: Vec::new(),
                });
            }
            entry["distribution_mismatches"] = json!(mismatches.len());
        }
        summary.insert("manifest".into(), entry);
    }
    if let Some(path) = &a.preds {
        let records = load_predictions(path)?;
        summary.insert("predictions".into(), json!({ "path": path_str(path), "records": records.len() }));
    }
    if let (Some(emb), Some(ids)) = (&a.emb, &a.ids) {
        let m = read_embeddings(emb, ids)?;
        summary.insert("embeddings".into(), json!({ "path": path_str(emb), "rows": m.len(), "dim": m.dim() }));
    }
    if let Some(path) = &a.taxonomy {
        let t = AssociationTaxonomy::load(path)?;
        summary.insert("taxonomy".into(), json!({ "path": path_str(path), "entries": t.entries().len() }));
    }
    if summary.is_empty() {
        return Err(Error::InvalidArgument(
            "nothing to validate; pass --manifest, --preds, --emb/--ids or --taxonomy".into(),
        ));
    }
    if !problems.is_empty() {
        eprintln!("{}", error_json(&problems));
        return Err(Error::InvalidArgument(format!("{} distribution mismatch(es)", problems.len())));
    }
    write_json(cli, &summary)
}

fn plan_row(id: &str, plan: &CropPlan) -> [String; 9] {
    let r = plan.pixel_rect();
    [
        id.to_string(),
        r.x0.to_string(),
        r.y0.to_string(),
        r.x1.to_string(),
        r.y1.to_string(),
        plan.target_size.0.to_string(),
        plan.target_size.1.to_string(),
        plan.keep.to_string(),
        plan.reason.clone().unwrap_or_default(),
    ]
}

fn read_face_boxes(path: &Path) -> Result<Vec<(String, CropPlan)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Malformed {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 7 {
            return Err(Error::Malformed {
                line,
                message: "expected id,frame_w,frame_h,x0,y0,x1,y1".into(),
            });
        }
        let num = |i: usize| -> Result<f64> {
            rec[i].trim().parse().map_err(|_| Error::Malformed {
                line,
                message: format!("bad number {:?}", &rec[i]),
            })
        };
        let bbox = BoundingBox::new(num(3)?, num(4)?, num(5)?, num(6)?);
        if let Some(v) = bbox.validate().into_iter().next() {
            return Err(Error::Malformed {
                line,
                message: v.to_string(),
            });
        }
        out.push((rec[0].to_string(), cc_face_crop_plan(&bbox, num(1)?, num(2)?)));
    }
    Ok(out)
}

fn crop_plan(cli: &Cli, a: &CropPlanArgs) -> Result<()> {
    let plans: Vec<(String, CropPlan)> = match (&a.manifest, &a.faces) {
        (Some(path), _) => {
            let m = read_manifest(path, Dataset::Miap)?.into_subject()?;
            m.rows
                .iter()
                .filter_map(|r| {
                    r.bbox.map(|b| {
                        (r.image_id.clone(), miap_crop_plan(&b, r.gender.as_deref(), r.age_group.as_deref()))
                    })
                })
                .collect()
        }
        (None, Some(path)) => read_face_boxes(path)?,
        (None, None) => unreachable!("clap requires one input"),
    };
    write_output(cli, |w| {
        let mut out = csv::Writer::from_writer(w);
        let io_err = |e: csv::Error| Error::io("<output>", io::Error::other(e));
        out.write_record(["id", "x0", "y0", "x1", "y1", "target_w", "target_h", "keep", "reason"])
            .map_err(io_err)?;
        for (id, plan) in &plans {
            out.write_record(plan_row(id, plan)).map_err(io_err)?;
        }
        out.flush().map_err(|e| Error::io("<output>", e))
    })
}

fn indicator1(cli: &Cli, a: &Indicator1Args) -> Result<()> {
    let dataset = parse_dataset(&a.dataset)?;
    if dataset == Dataset::DollarStreet {
        return Err(Error::InvalidArgument("indicator1 needs a CC, UTK or MIAP manifest".into()));
    }
    let records = load_predictions(&a.preds)?;
    let mut manifest = read_manifest(&a.manifest, dataset)?.into_subject()?;
    let mut dropped: BTreeMap<String, usize> = BTreeMap::new();
    if dataset == Dataset::Miap {
        let (kept, gone) = miap_inference_set(&manifest);
        for (_, reason) in gone {
            *dropped.entry(reason).or_default() += 1;
        }
        manifest = kept;
    }
    let tax = match &a.taxonomy {
        Some(p) => AssociationTaxonomy::load(p)?,
        None => AssociationTaxonomy::bundled(),
    };
    let grid = ThresholdGrid::parse(&a.thresholds)?;
    let groupings = match &a.group_by {
        Some(s) => Grouping::parse_list(s)?,
        None => manifest.vocabulary.keys().map(|k| Grouping::new([k.as_str()])).collect(),
    };
    let report = association_rates(&records, &manifest, &tax, dataset.name(), &grid, &groupings)?;

    let mut inputs: Vec<(&str, &Path)> = vec![("predictions", &a.preds), ("manifest", &a.manifest)];
    if let Some(t) = &a.taxonomy {
        inputs.push(("taxonomy", t));
    }
    let config = json!({
        "dataset": dataset.name(),
        "taxonomy": if a.taxonomy.is_some() { "file" } else { "bundled" },
        "thresholds": grid.thresholds(),
        "group_by": groupings,
        "top_k": crate::association::TOP_K,
        "dropped_rows": dropped,
    });
    emit_report(cli, AuditReport::new(digest_inputs(inputs)?, config, Payload::Association(report)))
}

fn parse_log_base(s: &str) -> Result<f64> {
    let base = if s.eq_ignore_ascii_case("e") {
        std::f64::consts::E
    } else {
        s.parse::<f64>()
            .map_err(|_| Error::InvalidArgument(format!("bad log base {s:?}")))?
    };
    if !(base > 1.0 && base.is_finite()) {
        return Err(Error::InvalidArgument(format!("log base must exceed 1, got {s}")));
    }
    Ok(base)
}

fn indicator2(cli: &Cli, a: &Indicator2Args) -> Result<()> {
    if let Some(t) = a.threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidArgument(format!("threshold {t} is outside [0, 1]")));
        }
    }
    if !(a.confidence > 0.0 && a.confidence < 1.0) {
        return Err(Error::InvalidArgument("--confidence must be in (0, 1)".into()));
    }
    let records = load_predictions(&a.preds)?;
    let mut manifest = read_manifest(&a.manifest, Dataset::DollarStreet)?.into_household()?;
    if let Some(p) = &a.label_map {
        manifest = LabelMap::load(p)?.apply(&manifest);
    }
    let bucketing = IncomeBucketing {
        log_base: parse_log_base(&a.log_base)?,
    };
    let groupings = Grouping::parse_list(&a.group_by)?;
    let images = dedupe(&manifest)?;
    let rates = household_hit_rates(&records, &images, a.threshold)?;
    let bootstrap = (a.bootstrap > 0).then_some(BootstrapConfig {
        resamples: a.bootstrap,
        seed: cli.seed,
        confidence: a.confidence,
    });
    let report = aggregate_geo(&rates, &manifest, &groupings, &bucketing, bootstrap.as_ref())?;

    let mut inputs: Vec<(&str, &Path)> = vec![("predictions", &a.preds), ("manifest", &a.manifest)];
    if let Some(p) = &a.label_map {
        inputs.push(("label_map", p));
    }
    let config = json!({
        "group_by": groupings,
        "log_base": bucketing.log_base,
        "threshold": a.threshold,
        "bootstrap": bootstrap,
        "manifest_rows": manifest.rows.len(),
        "images": images.len(),
        "households": rates.len(),
    });
    emit_report(cli, AuditReport::new(digest_inputs(inputs)?, config, Payload::Geo(report)))
}

fn parse_ks(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .ok()
                .filter(|k| *k > 0)
                .ok_or_else(|| Error::InvalidArgument(format!("bad K {p:?}")))
        })
        .collect()
}

fn indicator3(cli: &Cli, a: &Indicator3Args) -> Result<()> {
    let query_manifest = read_manifest(&a.query_manifest, parse_dataset(&a.query_dataset)?)?.into_subject()?;
    let db_manifest = read_manifest(&a.db_manifest, parse_dataset(&a.db_dataset)?)?.into_subject()?;
    let queries = normalize_rows(&read_embeddings(&a.query_emb, &a.query_ids)?)?;
    let database = normalize_rows(&read_embeddings(&a.db_emb, &a.db_ids)?)?;
    let config = RetrievalConfig {
        match_attribute: a.match_attribute.clone(),
        ks: parse_ks(&a.k)?,
        groupings: Grouping::parse_list(&a.stratify)?,
        knn: KnnConfig::default(),
    };
    let report = retrieval_report(&queries, &query_manifest, &database, &db_manifest, &config)?;
    if let Some(path) = &a.neighbors {
        let k = *config.ks.iter().max().expect("parse_ks rejects empty lists");
        let lists = top_k_with(&queries, &database, k, &config.knn)?;
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        write_neighbors_csv(BufWriter::new(file), &lists, &database).map_err(|e| Error::io(path, e))?;
    }
    let inputs: Vec<(&str, &Path)> = vec![
        ("query_embeddings", &a.query_emb),
        ("query_ids", &a.query_ids),
        ("query_manifest", &a.query_manifest),
        ("db_embeddings", &a.db_emb),
        ("db_ids", &a.db_ids),
        ("db_manifest", &a.db_manifest),
    ];
    let echo = json!({
        "query_dataset": query_manifest.dataset,
        "db_dataset": db_manifest.dataset,
        "match_attribute": config.match_attribute,
        "ks": report.ks,
        "stratify": report.groupings,
        "normalized": true,
    });
    emit_report(cli, AuditReport::new(digest_inputs(inputs)?, echo, Payload::Retrieval(report)))
}

fn curves(cli: &Cli, a: &CurvesArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.report).map_err(|e| Error::io(&a.report, e))?;
    let report: AuditReport =
        serde_json::from_str(&text).map_err(|e| Error::format(&a.report, e.to_string()))?;
    let Payload::Association(assoc) = &report.payload else {
        return Err(Error::InvalidArgument(format!(
            "curves need an indicator1 report, got {}",
            report.indicator
        )));
    };
    let series = emit_curves(assoc)?;
    match cli.format {
        OutputFormat::Json => write_json(cli, &series),
        OutputFormat::Csv => write_output(cli, |w| curves_csv(w, &series)),
    }
}

fn fixture(cli: &Cli, a: &FixtureArgs) -> Result<()> {
    let dir = cli
        .out
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("fixture needs --out DIR".into()))?;
    let spec = match &a.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::format(p, e.to_string()))?
        }
        None => FixtureSpec::default(),
    };
    let files = make_fixture(cli.seed, &spec)?.write(dir)?;
    let listing = json!({
        "predictions": path_str(&files.predictions),
        "cc_manifest": path_str(&files.cc_manifest),
        "utk_manifest": path_str(&files.utk_manifest),
        "query_emb": path_str(&files.query_emb),
        "query_ids": path_str(&files.query_ids),
        "db_emb": path_str(&files.db_emb),
        "db_ids": path_str(&files.db_ids),
        "planted": path_str(&files.planted),
        "household_manifest": files.household_manifest.as_deref().map(path_str),
        "household_predictions": files.household_predictions.as_deref().map(path_str),
    });
    println!("{}", serde_json::to_string_pretty(&listing).expect("serializable"));
    Ok(())
}
