use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use serde_json::{json, Value};

use fdwls::io::{
    load_curves, load_dataset, load_model, read_column, save_model, write_column, write_curve,
    write_dataset,
};
use fdwls::selection::{cross_validate, fit_pipeline, fit_with_cv, CvConfig};
use fdwls::simharness::{
    amse_factor_check, generate_sample, split_experiment, AmseConfig, BetaReading, ErrorModel,
    ScoreFunction, SplitConfig, SyntheticDesign, Target,
};
use fdwls::{Error, Result, Variant};

/// Weighted and unweighted prediction in the functional linear model.
#[derive(Parser, Debug)]
#[command(name = "fdwls", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a pipeline to a dataset and write a model file.
    Fit(FitArgs),
    /// Predict responses for curves with a saved model.
    Predict(PredictArgs),
    /// Generate a synthetic dataset with its true regression means.
    Simulate(SimulateArgs),
    /// Repeated random half-split evaluation.
    SplitEval(SplitArgs),
    /// Monte Carlo check of the weighting variance factor.
    AmseCheck(AmseArgs),
    /// Full cross-validation table W(r, k).
    CvTable(CvTableArgs),
}

#[derive(Args, Debug, Clone)]
struct CvArgs {
    /// Largest pilot truncation searched.
    #[arg(long)]
    rmax: Option<usize>,
    /// Largest weighted truncation searched.
    #[arg(long)]
    kmax: Option<usize>,
    /// Use p-fold instead of leave-one-out cross-validation.
    #[arg(long)]
    folds: Option<usize>,
}

impl CvArgs {
    fn config(&self) -> CvConfig {
        CvConfig {
            r_max: self.rmax,
            k_max: self.kmax,
            folds: self.folds,
            ..CvConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Dataset CSV (`y,t_1,...,t_m`).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "tilde")]
    variant: Variant,
    /// Pilot truncation.
    #[arg(long, conflicts_with = "cv")]
    r: Option<usize>,
    /// Weighted truncation.
    #[arg(long, conflicts_with = "cv")]
    k: Option<usize>,
    /// Choose (r, k) by cross-validation.
    #[arg(long)]
    cv: bool,
    #[command(flatten)]
    cv_args: CvArgs,
    /// Where to write the model file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Curves CSV on the model grid or a grid covering it; a leading `y`
    /// column is ignored.
    #[arg(long)]
    curves: PathBuf,
    /// Predictions CSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone)]
struct DesignArgs {
    /// Number of curves generated.
    #[arg(long, default_value_t = 204)]
    n: usize,
    /// Error model: none, i, ii or const:F.
    #[arg(long, default_value = "i")]
    model: ErrorModel,
    #[arg(long, default_value_t = 365)]
    points: usize,
    /// Karhunen-Loeve terms.
    #[arg(long, default_value_t = 10)]
    components: usize,
    /// C in theta_j = C j^-2.
    #[arg(long, default_value_t = 1e6)]
    eigen_scale: f64,
    /// product: (pi/20) t; reciprocal: pi/(20 t).
    #[arg(long, default_value = "product")]
    beta_reading: BetaReading,
}

impl DesignArgs {
    fn design(&self, seed: u64) -> SyntheticDesign {
        SyntheticDesign {
            points: self.points,
            components: self.components,
            eigen_scale: self.eigen_scale,
            beta_reading: self.beta_reading,
            error_model: self.model,
            seed,
            ..SyntheticDesign::default()
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    design: DesignArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset CSV.
    #[arg(long)]
    out: PathBuf,
    /// True regression means, one per row.
    #[arg(long)]
    truth: PathBuf,
    /// Slope function as `t,beta`.
    #[arg(long)]
    beta: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SplitArgs {
    /// Dataset CSV; without it a synthetic sample is generated.
    #[arg(long, conflicts_with = "n")]
    data: Option<PathBuf>,
    /// True regression means for `--data` (needed with `--target mu`).
    #[arg(long, requires = "data")]
    truth: Option<PathBuf>,
    #[command(flatten)]
    design: DesignArgs,
    /// Number of random splits.
    #[arg(long = "B", default_value_t = 100)]
    replicates: usize,
    /// Training size; half the sample by default.
    #[arg(long)]
    train_size: Option<usize>,
    /// Comma-separated variants.
    #[arg(long, value_delimiter = ',', default_value = "tilde,check")]
    variants: Vec<Variant>,
    #[arg(long, default_value = "y")]
    target: Target,
    #[command(flatten)]
    cv_args: CvArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Full report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// One row per replicate.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AmseArgs {
    /// Error variance: const:C, quad:A,B,J or exp:A,G,J.
    #[arg(long, default_value = "quad:0.5,0.5,1")]
    sigma: ScoreFunction,
    /// Working variance (weights are its inverse); defaults to sigma.
    #[arg(long)]
    tau: Option<ScoreFunction>,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    replications: usize,
    /// Regression components r.
    #[arg(long, default_value_t = 5)]
    components: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct CvTableArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "tilde")]
    variant: Variant,
    #[command(flatten)]
    cv_args: CvArgs,
    /// Table CSV with columns r,k,w.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn json_number(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn run_fit(args: FitArgs) -> Result<Value> {
    let sample = load_dataset(&args.data, None)?;
    let pipeline = if args.cv {
        fit_with_cv(&sample, args.variant, &args.cv_args.config())?
    } else {
        let (r, k) = (args.r.unwrap_or_default(), args.k.unwrap_or_default());
        fit_pipeline(&sample, r, k, args.variant, &CvConfig::default().variance)?
    };
    save_model(&pipeline, &args.out)?;
    Ok(json!({
        "command": "fit",
        "n": sample.len(),
        "m": sample.grid().len(),
        "variant": args.variant,
        "r": pipeline.pilot.r(),
        "k": pipeline.weighted.truncation(),
        "cross_validated": args.cv,
        "c1": pipeline.variance.c1(),
        "c2": pipeline.variance.c2,
        "variance_status": pipeline.variance.status,
        "seed": args.seed,
        "model": args.out,
    }))
}

fn run_predict(args: PredictArgs) -> Result<Value> {
    let pipeline = load_model(&args.model)?;
    let grid = std::sync::Arc::clone(pipeline.pilot.basis().grid());
    let curves = load_curves(&args.curves, Some(grid))?;
    let mut w = csv::Writer::from_writer(create(&args.out)?);
    w.write_record(["index", "prediction", "prediction_unweighted"])?;
    for (i, c) in curves.iter().enumerate() {
        let p = pipeline.predict(c)?;
        let u = pipeline.predict_unweighted(c)?;
        w.write_record([i.to_string(), p.to_string(), u.to_string()])?;
    }
    w.flush()?;
    Ok(json!({
        "command": "predict",
        "count": curves.len(),
        "variant": pipeline.variant(),
        "seed": args.seed,
        "out": args.out,
    }))
}

fn run_simulate(args: SimulateArgs) -> Result<Value> {
    let design = args.design.design(args.seed);
    let data = generate_sample(&design, args.design.n)?;
    write_dataset(&data.sample, create(&args.out)?)?;
    write_column("mu", &data.mu, create(&args.truth)?)?;
    if let Some(path) = &args.beta {
        write_curve("beta", &data.beta, create(path)?)?;
    }
    Ok(json!({
        "command": "simulate",
        "design": design,
        "n": data.sample.len(),
        "out": args.out,
        "truth": args.truth,
    }))
}

fn run_split(args: SplitArgs) -> Result<Value> {
    let (sample, truth, design) = match &args.data {
        Some(path) => {
            let sample = load_dataset(path, None)?;
            let truth = match &args.truth {
                Some(t) => Some(read_column("mu", File::open(t)?)?),
                None => None,
            };
            (sample, truth, None)
        }
        None => {
            let design = args.design.design(args.seed);
            let data = generate_sample(&design, args.design.n)?;
            (data.sample, Some(data.mu), Some(design))
        }
    };
    let config = SplitConfig {
        replicates: args.replicates,
        train_size: args.train_size,
        variants: args.variants.clone(),
        target: args.target,
        seed: args.seed,
        cv: args.cv_args.config(),
    };
    let report = split_experiment(&sample, truth.as_deref(), &config)?;
    if let Some(path) = &args.report {
        serde_json::to_writer_pretty(create(path)?, &report)?;
    }
    if let Some(path) = &args.csv {
        report.write_csv(create(path)?)?;
    }
    let summaries: Vec<Value> = report
        .summaries
        .iter()
        .map(|s| {
            json!({
                "variant": s.variant,
                "median_log_ratio": json_number(s.median_log_ratio),
                "log_ratio_quantiles": s.log_ratio_quantiles.map(json_number),
                "mean_win_proportion": json_number(s.mean_win_proportion),
                "share_win_above_half": json_number(s.share_win_above_half),
            })
        })
        .collect();
    Ok(json!({
        "command": "split-eval",
        "design": design,
        "replicates": report.replicates_requested,
        "completed": report.replicates.len(),
        "failed": report.failed.len(),
        "n_train": report.n_train,
        "n_test": report.n_test,
        "target": report.target,
        "seed": report.seed,
        "summaries": summaries,
    }))
}

fn run_amse(args: AmseArgs) -> Result<Value> {
    let config = AmseConfig {
        sigma2: args.sigma,
        tau2: args.tau.unwrap_or(args.sigma),
        n: args.n,
        replications: args.replications,
        seed: args.seed,
        components: args.components,
    };
    let report = amse_factor_check(&config)?;
    let mut value = serde_json::to_value(&report)?;
    value["command"] = json!("amse-check");
    Ok(value)
}

fn run_cv_table(args: CvTableArgs) -> Result<Value> {
    let sample = load_dataset(&args.data, None)?;
    let cv = cross_validate(&sample, args.variant, &args.cv_args.config())?;
    let mut w = csv::Writer::from_writer(create(&args.out)?);
    w.write_record(["r", "k", "w"])?;
    for (r, row) in cv.scores.iter().enumerate() {
        for (k, s) in row.iter().enumerate() {
            w.write_record([r.to_string(), k.to_string(), s.to_string()])?;
        }
    }
    w.flush()?;
    Ok(json!({
        "command": "cv-table",
        "variant": args.variant,
        "r_max": cv.r_max,
        "k_max": cv.k_max,
        "chosen": cv.chosen,
        "ties_broken": cv.ties_broken,
        "unweighted_r": cv.unweighted_r,
        "seed": args.seed,
        "out": args.out,
    }))
}

fn configure_threads() -> std::result::Result<(), String> {
    let Ok(raw) = std::env::var("FDWLS_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .parse()
        .map_err(|_| format!("FDWLS_THREADS must be a positive integer, got '{raw}'"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Fit(f) = &cli.command {
        if !f.cv && (f.r.is_none() || f.k.is_none()) {
            Cli::command()
                .error(
                    ErrorKind::MissingRequiredArgument,
                    "fit needs either --cv or both --r and --k",
                )
                .exit();
        }
    }
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::FAILURE;
    }
    let outcome = match cli.command {
        Command::Fit(a) => run_fit(a),
        Command::Predict(a) => run_predict(a),
        Command::Simulate(a) => run_simulate(a),
        Command::SplitEval(a) => run_split(a),
        Command::AmseCheck(a) => run_amse(a),
        Command::CvTable(a) => run_cv_table(a),
    };
    match outcome.and_then(|v| serde_json::to_string(&v).map_err(Error::from)) {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
