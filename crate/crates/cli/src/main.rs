//! `it2fuzzy` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 model error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use it2fuzzy::config::{ClusterCount, Settings};
use it2fuzzy::data::{self, Dataset};
use it2fuzzy::engine::predict_or_fallback;
use it2fuzzy::eval::{self, MetricsReport};
use it2fuzzy::model::{self, ModelFile};
use it2fuzzy::pipeline::{self, StageError};
use it2fuzzy::{Matrix, RuleBase};

/// Name that refers to the bundled model instead of a file.
const BUNDLED: &str = "@table2";

#[derive(Parser)]
#[command(name = "it2fuzzy", version, about = "Interval type-2 fuzzy rule-based classifier")]
struct Cli {
    /// Seed for splitting, clustering and shuffling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Settings file of `key = value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean a raw CSV into numeric features plus the label column.
    Preprocess {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Full report including every dropped row and column.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        corr_threshold: Option<f64>,
    },
    /// Learn a rule base from a CSV file.
    Train(TrainArgs),
    /// Score a feature CSV with a model.
    Predict {
        /// Model file, or `@table2` for the bundled model.
        model: String,
        data: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Score a labelled CSV and report accuracy and F-measure.
    Evaluate {
        model: String,
        data: PathBuf,
        /// Score every row instead of the held-out side of the training split.
        #[arg(long)]
        test_only: bool,
        /// Add naive Bayes and k-nearest-neighbour rows.
        #[arg(long)]
        baselines: bool,
        /// Human-readable report.
        #[arg(long)]
        report: Option<PathBuf>,
        /// `key=value` metrics file.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Print a model's structure and parameters.
    InspectModel { model: String },
}

#[derive(Args)]
struct TrainArgs {
    data: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Per-epoch error log; defaults to `<output>.trace.csv`.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Stop after type-1 tuning.
    #[arg(long)]
    type1_only: bool,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    spread: Option<f64>,
    #[arg(long)]
    c_max: Option<usize>,
    /// Fixed rule count instead of the validity scan.
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    fuzziness: Option<f64>,
    #[arg(long)]
    corr_threshold: Option<f64>,
}

enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Model(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Model(_) => 3,
        }
    }
}

trait Classify<T> {
    fn data(self) -> Result<T, Failure>;
    fn model(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn data(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Data(e.into()))
    }
    fn model(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Model(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Usage(e) | Failure::Data(e) | Failure::Model(e)) = &f;
            // a closed stdout (`| head`) is not a failure
            let broken = |io: &io::Error| io.kind() == io::ErrorKind::BrokenPipe;
            if e.chain().any(|c| {
                c.downcast_ref::<io::Error>().is_some_and(broken)
                    || c.downcast_ref::<csv::Error>()
                        .is_some_and(|ce| matches!(ce.kind(), csv::ErrorKind::Io(io) if broken(io)))
            }) {
                return ExitCode::SUCCESS;
            }
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut settings = match &cli.config {
        Some(p) => Settings::load(p).map_err(|e| Failure::Usage(e.into()))?,
        None => Settings::default(),
    };
    if let Some(seed) = cli.seed {
        settings.seed = seed;
    }
    match cli.command {
        Command::Preprocess {
            input,
            output,
            report,
            corr_threshold,
        } => {
            if let Some(t) = corr_threshold {
                settings.corr_threshold = t;
            }
            settings.validate().map_err(|e| Failure::Usage(e.into()))?;
            preprocess(&input, &output, report.as_deref(), &settings)
        }
        Command::Train(args) => {
            apply_train_flags(&mut settings, &args);
            settings.validate().map_err(|e| Failure::Usage(e.into()))?;
            train(&args, &settings)
        }
        Command::Predict { model, data, output } => predict(&model, &data, output.as_deref(), &settings),
        Command::Evaluate {
            model,
            data,
            test_only,
            baselines,
            report,
            metrics,
        } => {
            if test_only && baselines {
                return Err(Failure::Usage(anyhow!(
                    "--baselines needs a training split and cannot be combined with --test-only"
                )));
            }
            evaluate(&model, &data, test_only, baselines, report.as_deref(), metrics.as_deref(), &settings)
        }
        Command::InspectModel { model } => {
            let m = load_model(&model)?;
            print!("{}", inspect(&m));
            Ok(())
        }
    }
}

fn apply_train_flags(s: &mut Settings, a: &TrainArgs) {
    if a.type1_only {
        s.type1_only = true;
    }
    if let Some(v) = a.lr {
        s.learning_rate = v;
    }
    if let Some(v) = a.epochs {
        s.epochs = v;
    }
    if let Some(v) = a.spread {
        s.spread = v;
    }
    if let Some(v) = a.c_max {
        s.c_max = v;
    }
    if let Some(v) = a.clusters {
        s.clusters = ClusterCount::Fixed(v);
    }
    if let Some(v) = a.fuzziness {
        s.fuzziness = v;
    }
    if let Some(v) = a.corr_threshold {
        s.corr_threshold = v;
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("cannot create {}", path.display()))
        .data()
}

fn stage_failure(e: StageError) -> Failure {
    Failure::Data(anyhow!("stage {}: {}", e.stage, e.source))
}

fn preprocess(input: &Path, output: &Path, report: Option<&Path>, s: &Settings) -> Result<(), Failure> {
    let (ds, rep) = pipeline::load_dataset(input, s).map_err(stage_failure)?;
    ds.write_csv(create(output)?).data()?;
    let text = rep.to_string();
    print!("{}", text.split("\n\n").next().unwrap_or_default());
    println!();
    if let Some(p) = report {
        create(p)?.write_all(text.as_bytes()).data()?;
    }
    Ok(())
}

fn train(args: &TrainArgs, s: &Settings) -> Result<(), Failure> {
    let out = pipeline::train_file(&args.data, s).map_err(stage_failure)?;
    out.model.save(&args.output).model()?;
    let trace = args
        .trace
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.trace.csv", args.output.display())));
    create(&trace)?.write_all(out.trace_log().as_bytes()).data()?;

    let rb = out.rule_base();
    println!("training rows    {}", out.split.train.len());
    println!("held-out rows    {}", out.split.test.len());
    if let Some(scan) = &out.scan {
        for (c, v) in scan.candidates.iter().zip(&scan.index) {
            println!("validity c={c:<3}  {v:.6}");
        }
    }
    println!("rules            {}", rb.n_rules());
    println!(
        "clustering       {}",
        if out.used_gk { "gustafson-kessel" } else { "fuzzy c-means" }
    );
    if let Some(why) = &out.gk_fallback {
        println!("gk fallback      {why}");
    }
    println!(
        "type-1 error     {:.6} -> {:.6} ({} epochs)",
        out.t1_trace.errors[0],
        out.t1_trace.best_error(),
        out.t1_trace.epochs()
    );
    if let Some(t) = &out.it2_trace {
        println!(
            "type-2 error     {:.6} -> {:.6} ({} epochs)",
            t.errors[0],
            t.best_error(),
            t.epochs()
        );
    }
    println!("kind             {}", rb.kind());
    println!("threshold        {}", rb.config.threshold);
    println!("model            {}", args.output.display());
    println!("trace            {}", trace.display());
    Ok(())
}

fn load_model(source: &str) -> Result<ModelFile, Failure> {
    if source == BUNDLED {
        Ok(model::table2())
    } else {
        ModelFile::load(source)
            .with_context(|| format!("cannot load model {source}"))
            .model()
    }
}

/// Model inputs as a matrix. Columns are matched by name when all are
/// present; otherwise every non-label column is taken in order.
fn model_inputs(rb: &RuleBase, table: &data::RawTable, label: &str) -> Result<Matrix, Failure> {
    let by_name: Option<Vec<usize>> = rb.variables().iter().map(|v| table.column_index(v)).collect();
    let idx = match by_name {
        Some(idx) => idx,
        None => {
            let idx: Vec<usize> = (0..table.columns().len())
                .filter(|&j| table.columns()[j] != label)
                .collect();
            if idx.len() != rb.n_inputs() {
                return Err(Failure::Data(anyhow!(
                    "feature count mismatch: expected {}, got {}",
                    rb.n_inputs(),
                    idx.len()
                )));
            }
            idx
        }
    };
    let mut values = Vec::with_capacity(table.row_count() * idx.len());
    for (r, row) in table.rows().iter().enumerate() {
        for &j in &idx {
            let cell = row[j].trim();
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| {
                    Failure::Data(anyhow!(
                        "row {r}, column {:?}: cannot parse {cell:?} as a number",
                        table.columns()[j]
                    ))
                })?;
            values.push(v);
        }
    }
    Matrix::from_vec(table.row_count(), idx.len(), values).data()
}

fn predict(model: &str, path: &Path, output: Option<&Path>, s: &Settings) -> Result<(), Failure> {
    let m = load_model(model)?;
    let rb = &m.rule_base;
    let table = data::load_csv(path).data()?;
    let x = model_inputs(rb, &table, &s.label_column)?;
    let rows: Vec<&[f64]> = x.iter_rows().collect();
    let preds = rows
        .iter()
        .map(|r| predict_or_fallback(rb, r))
        .collect::<Result<Vec<_>, _>>()
        .data()?;
    let sink: Box<dyn Write> = match output {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["row", "crisp", "y_l", "y_r", "label", "flagged"]).data()?;
    for (i, p) in preds.iter().enumerate() {
        w.write_record([
            i.to_string(),
            p.crisp.to_string(),
            p.interval.y_l.to_string(),
            p.interval.y_r.to_string(),
            p.label.to_string(),
            p.flagged.to_string(),
        ])
        .data()?;
    }
    w.flush().data()?;
    Ok(())
}

/// Labelled dataset restricted to the model's inputs.
fn labelled_inputs(rb: &RuleBase, path: &Path, s: &Settings) -> Result<Dataset, Failure> {
    let (ds, _) = pipeline::load_dataset(path, s).map_err(stage_failure)?;
    if rb.variables().iter().all(|v| ds.feature_names().contains(v)) {
        return ds.select_features(rb.variables()).data();
    }
    if ds.n_features() != rb.n_inputs() {
        return Err(Failure::Data(anyhow!(
            "feature count mismatch: expected {}, got {}",
            rb.n_inputs(),
            ds.n_features()
        )));
    }
    Ok(ds)
}

fn evaluate(
    model: &str,
    path: &Path,
    test_only: bool,
    baselines: bool,
    report: Option<&Path>,
    metrics: Option<&Path>,
    s: &Settings,
) -> Result<(), Failure> {
    let m = load_model(model)?;
    let rb = &m.rule_base;
    let ds = labelled_inputs(rb, path, s)?;
    let mut rows: Vec<(String, &str, MetricsReport)> = Vec::new();
    let score = |pred: &[u8], truth: &Dataset| eval::compute_metrics(pred, truth.labels(), data::POSITIVE).data();

    let (train, test) = if test_only {
        (None, ds)
    } else {
        let seed = m.provenance("seed").and_then(|v| v.parse().ok()).unwrap_or(s.seed);
        let ratio = m
            .provenance("split.ratio")
            .and_then(|v| v.parse().ok())
            .unwrap_or(s.train_ratio);
        let stratified = m
            .provenance("split.stratified")
            .and_then(|v| v.parse().ok())
            .unwrap_or(s.stratified);
        let split = eval::split(&ds, ratio, seed, stratified).data()?;
        let (tr, te) = split.apply(&ds);
        (Some(tr), te)
    };

    let pred = eval::predict_labels(rb, test.features()).data()?;
    rows.push((rb.kind().to_string(), "model", score(&pred, &test)?));
    let majority = match &train {
        Some(tr) => eval::baseline_majority(tr, &test),
        None => vec![rb.config.fallback_label; test.n_samples()],
    };
    rows.push(("majority".into(), "majority", score(&majority, &test)?));
    if baselines {
        let tr = train.as_ref().expect("baselines need a split");
        let nb = eval::baseline_nb(tr, &test).data()?;
        rows.push(("naive-bayes".into(), "nb", score(&nb, &test)?));
        let knn = eval::baseline_knn(tr, &test, s.knn_k).data()?;
        rows.push((format!("knn (k = {})", s.knn_k), "knn", score(&knn, &test)?));
    }

    let mut text = format!(
        "evaluated rows {} ({})\n\n{:<24}{:>10}{:>12}{:>12}\n",
        test.n_samples(),
        if test_only { "whole file" } else { "held-out split" },
        "method",
        "accuracy",
        "F majority",
        "F positive"
    );
    for (name, _, r) in &rows {
        text.push_str(&format!(
            "{name:<24}{:>10.4}{:>12.4}{:>12.4}\n",
            r.accuracy,
            r.majority_f(),
            r.positive().f_measure
        ));
    }
    for (name, _, r) in &rows {
        text.push_str(&format!("\n[{name}]\n{r}\n"));
    }
    print!("{text}");
    if let Some(p) = report {
        create(p)?.write_all(text.as_bytes()).data()?;
    }
    if let Some(p) = metrics {
        let mut w = create(p)?;
        writeln!(w, "rows={}", test.n_samples()).data()?;
        writeln!(w, "test_only={test_only}").data()?;
        for (_, key, r) in &rows {
            w.write_all(r.key_values(key).as_bytes()).data()?;
        }
        w.flush().data()?;
    }
    Ok(())
}

fn inspect(m: &ModelFile) -> String {
    let rb = &m.rule_base;
    let c = &rb.config;
    let mut s = format!(
        "kind        {}\noutput      {}\nrules       {}\ninputs      {}\nthreshold   {}\nfallback    {}\n",
        rb.kind(),
        rb.output(),
        rb.n_rules(),
        rb.n_inputs(),
        c.threshold,
        c.fallback_label
    );
    let (lo, hi) = rb.consequent_range();
    s.push_str(&format!("output span [{lo}, {hi}]\n"));
    for (k, v) in &m.provenance {
        s.push_str(&format!("provenance  {k} = {v}\n"));
    }
    s.push_str(&format!("\n{:<20}", "variable"));
    for i in 1..=rb.n_rules() {
        s.push_str(&format!("{:>26}", format!("rule {i} (mean, su, sl)")));
    }
    s.push('\n');
    let names = rb.variables().iter().map(String::as_str).chain(["consequent"]);
    for (f, name) in names.enumerate() {
        s.push_str(&format!("{name:<20}"));
        for r in rb.rules() {
            let set = r.antecedents.get(f).unwrap_or(&r.consequent);
            s.push_str(&format!(
                "{:>26}",
                format!("{:.3} {:.3} {:.3}", set.mean(), set.sigma_upper(), set.sigma_lower())
            ));
        }
        s.push('\n');
    }
    s
}

