//! Library side of the `ale` command-line tool.

pub mod effect;
pub mod output;
pub mod sources;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ale_core::render::{render_line, Labels, LinePlot, PlotKind, Series};
use ale_core::{default_intervals, serve_lines, Counted, Dataset, Predictor, DEFAULT_MAX_ORDER, RNG_ALGORITHM};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use effect::{compare, compute_effect, Comparison, EffectTable, Method, UsageError};
pub use sources::{DataSource, ModelSource};

#[derive(Debug, Parser)]
#[command(
    name = "ale",
    version,
    about = "Accumulated local effects, partial dependence and marginal plots for black-box models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate one effect and write its corner lattice.
    Effect(EffectArgs),
    /// ALE, PD and M curves for one feature on a shared axis.
    Compare(CompareArgs),
    /// Write a synthetic dataset to CSV.
    Generate(GenerateArgs),
    /// Answer batch-predict requests on stdin/stdout (one JSON object per line).
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// CSV path, or gen:<family>[,key=value...] with family example1, example2,
    /// gaussian-pair (rho) or product-cube (d); all take n.
    #[arg(long)]
    pub data: String,
    /// Response column of a CSV dataset (needed to fit trees).
    #[arg(long)]
    pub response: Option<String>,
    /// expr:<expression> | tree[:max_leaves=N,min_leaf=M] | bridge:[batch=B,timeout=S,in_flight=F,header=N:V,](cmd=<command>|url=<url>)
    #[arg(long)]
    pub model: String,
    /// Comma-separated feature names.
    #[arg(long, value_delimiter = ',', required = true)]
    pub features: Vec<String>,
    /// Intervals per axis (default 100, 40 or 10 for one, two or more features).
    #[arg(long = "K")]
    pub k: Option<usize>,
    /// Seed for generated data.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EffectArgs {
    #[command(flatten)]
    pub common: Common,
    /// Estimator to run; pd and mplot use the same K.
    #[arg(long, value_enum, default_value_t = Method::Ale)]
    pub method: Method,
    /// Also write effect.svg (line plot for one feature, heatmap for two).
    #[arg(long)]
    pub svg: bool,
    /// Largest feature set accepted by ALE.
    #[arg(long, default_value_t = DEFAULT_MAX_ORDER)]
    pub max_order: usize,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    /// Truth expression for RMSE columns; defaults to the model's own
    /// expression or the generator's noise-free response.
    #[arg(long, conflicts_with = "no_truth")]
    pub truth: Option<String>,
    /// Plot curves only.
    #[arg(long)]
    pub no_truth: bool,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// gen:<family>[,key=value...]
    #[arg(long)]
    pub data: String,
    /// Generator seed.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output CSV file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Model to serve, in the same syntax as for effect.
    #[arg(long)]
    pub model: String,
    /// Data to fit a tree model on.
    #[arg(long)]
    pub data: Option<String>,
    /// Response column when --data is a CSV.
    #[arg(long)]
    pub response: Option<String>,
    /// Seed for generated training data.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: Vec<String>,
    pub seed: u64,
    pub rng: String,
    pub method: String,
    pub features: Vec<String>,
    pub k_requested: usize,
    pub k_per_axis: Vec<usize>,
    pub n: usize,
    pub model: String,
    /// Model rows requested, per method.
    pub ledger: BTreeMap<String, u64>,
    pub timing_ms: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse: Option<effect::MethodRmse>,
    pub outputs: Vec<String>,
}

struct Prepared {
    data: Dataset,
    model: Box<dyn Predictor>,
    features: Vec<usize>,
    truth_sources: (Option<String>, Option<String>),
}

fn prepare(c: &Common) -> Result<Prepared> {
    let source = DataSource::parse(&c.data)?;
    let data = source.load(c.seed, c.response.as_deref())?;
    let model_source = ModelSource::parse(&c.model)?;
    let model = model_source.build(Some(&data))?;
    let mut features = Vec::with_capacity(c.features.len());
    for name in &c.features {
        let j = data
            .feature_index(name)
            .with_context(|| format!("unknown feature {name:?}; columns are {}", data.columns().join(", ")))?;
        if features.contains(&j) {
            bail!(UsageError(format!("feature {name:?} listed twice")));
        }
        features.push(j);
    }
    std::fs::create_dir_all(&c.out).with_context(|| format!("cannot create output directory {}", c.out.display()))?;
    Ok(Prepared { data, model, features, truth_sources: (model_source.truth(), source.truth()) })
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

pub fn run_effect(a: &EffectArgs, argv: &[String]) -> Result<RunReport> {
    let order = a.common.features.len();
    if a.method == Method::Mplot && order != 1 {
        bail!(UsageError(format!("mplot handles exactly one feature, got {order}")));
    }
    if a.svg && order > 2 {
        bail!(UsageError(format!("--svg renders one or two features, got {order}")));
    }
    let p = prepare(&a.common)?;
    let k = a.common.k.unwrap_or_else(|| default_intervals(order));
    let counted = Counted::new(&*p.model);
    let start = Instant::now();
    let table = compute_effect(&counted, &p.data, &p.features, a.method, k, a.max_order)?;
    let elapsed = start.elapsed().as_secs_f64() * 1e3;

    let out = &a.common.out;
    let meta = output::Metadata {
        method: a.method,
        features: table.features.clone(),
        k_requested: k,
        k_per_axis: table.k_per_axis.clone(),
        n: p.data.n(),
        seed: a.common.seed,
        rng: RNG_ALGORITHM.into(),
        data: a.common.data.clone(),
        model: p.model.label(),
        imputed_cells: table.imputed_cells,
    };
    let (csv, json) = (out.join("values.csv"), out.join("values.json"));
    output::write_effect_csv(&table, &csv)?;
    output::write_effect_json(&table, &meta, &json)?;
    let mut outputs = vec![display(&csv), display(&json)];
    if a.svg {
        let labels = Labels {
            title: format!("{:?} effect of {} ({})", a.method, table.features.join(" x "), p.model.label()),
            axes: table.features.clone(),
        };
        let svg = match order {
            1 => render_line(&LinePlot {
                title: labels.title.clone(),
                x_label: table.features[0].clone(),
                y_label: "effect".into(),
                ticks: table.lattice.axes[0].clone(),
                series: vec![Series {
                    label: format!("{:?}", a.method).to_uppercase(),
                    xs: table.lattice.axes[0].clone(),
                    ys: table.lattice.values.clone(),
                }],
            })?,
            _ => ale_core::render_svg(&table.lattice, PlotKind::Heatmap, &labels)?,
        };
        let path = out.join("effect.svg");
        std::fs::write(&path, svg).with_context(|| format!("cannot write {}", path.display()))?;
        outputs.push(display(&path));
    }

    let name = format!("{:?}", a.method).to_lowercase();
    let mut warnings = Vec::new();
    if table.imputed_cells > 0 {
        warnings.push(format!(
            "{} empty cells took the local effect of their nearest nonempty neighbour",
            table.imputed_cells
        ));
    }
    let report = RunReport {
        command: argv.to_vec(),
        seed: a.common.seed,
        rng: RNG_ALGORITHM.into(),
        method: name.clone(),
        features: table.features.clone(),
        k_requested: k,
        k_per_axis: table.k_per_axis.clone(),
        n: p.data.n(),
        model: p.model.label(),
        ledger: BTreeMap::from([(name.clone(), counted.ledger().total())]),
        timing_ms: BTreeMap::from([(name, elapsed)]),
        warnings,
        rmse: None,
        outputs: outputs.clone(),
    };
    let path = out.join("report.json");
    output::write_json(&report, &path)?;
    Ok(report)
}

pub fn run_compare(a: &CompareArgs, argv: &[String]) -> Result<(RunReport, Comparison)> {
    if a.common.features.len() != 1 {
        bail!(UsageError(format!("compare handles exactly one feature, got {}", a.common.features.len())));
    }
    let p = prepare(&a.common)?;
    let k = a.common.k.unwrap_or_else(|| default_intervals(1));
    let truth =
        if a.no_truth { None } else { a.truth.clone().or(p.truth_sources.0.clone()).or(p.truth_sources.1.clone()) };
    let cmp = compare(&*p.model, &p.data, p.features[0], k, truth.as_deref())?;

    let out = &a.common.out;
    let csv = out.join("compare.csv");
    output::write_compare_csv(&cmp, &csv)?;
    let svg = render_line(&LinePlot {
        title: format!("Effects of {} ({})", cmp.feature, p.model.label()),
        x_label: cmp.feature.clone(),
        y_label: "effect".into(),
        ticks: cmp.grid.clone(),
        series: cmp.series(),
    })?;
    let svg_path = out.join("compare.svg");
    std::fs::write(&svg_path, svg).with_context(|| format!("cannot write {}", svg_path.display()))?;

    let methods = ["ale", "pd", "mplot"];
    let rows = [cmp.ledger.ale, cmp.ledger.pd, cmp.ledger.mplot];
    let report = RunReport {
        command: argv.to_vec(),
        seed: a.common.seed,
        rng: RNG_ALGORITHM.into(),
        method: "compare".into(),
        features: vec![cmp.feature.clone()],
        k_requested: k,
        k_per_axis: vec![cmp.grid.len() - 1],
        n: p.data.n(),
        model: p.model.label(),
        ledger: methods.iter().zip(rows).map(|(m, r)| (m.to_string(), r)).collect(),
        timing_ms: methods.iter().zip(cmp.timing_ms).map(|(m, t)| (m.to_string(), t)).collect(),
        warnings: Vec::new(),
        rmse: cmp.rmse,
        outputs: vec![display(&csv), display(&svg_path)],
    };
    output::write_json(&report, &out.join("report.json"))?;
    Ok((report, cmp))
}

pub fn run_generate(a: &GenerateArgs) -> Result<()> {
    let source = DataSource::parse(&a.data)?;
    if !matches!(source, DataSource::Generated { .. }) {
        bail!(UsageError("generate needs --data gen:<family>".into()));
    }
    let data = source.load(a.seed, None)?;
    let f = std::fs::File::create(&a.out).with_context(|| format!("cannot write {}", a.out.display()))?;
    data.write_csv(std::io::BufWriter::new(f))?;
    Ok(())
}

pub fn run_serve(a: &ServeArgs) -> Result<()> {
    let data = match &a.data {
        Some(d) => Some(DataSource::parse(d)?.load(a.seed, a.response.as_deref())?),
        None => None,
    };
    let model = ModelSource::parse(&a.model)?.build(data.as_ref())?;
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    serve_lines(&*model, stdin.lock(), stdout.lock())?;
    Ok(())
}

/// Runs a parsed command; `argv` is echoed into reports.
pub fn execute(cli: &Cli, argv: &[String]) -> Result<()> {
    match &cli.command {
        Command::Effect(a) => run_effect(a, argv).map(drop),
        Command::Compare(a) => run_compare(a, argv).map(drop),
        Command::Generate(a) => run_generate(a),
        Command::Serve(a) => run_serve(a),
    }
}
