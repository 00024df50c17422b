//! `cfforge` command-line front end.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;
use rayon::prelude::*;

use cfforge::cfmetrics::batch_report;
use cfforge::featurize::{build_dataset, read_bundle, write_bundle};
use cfforge::generators::{
    CounterfactualResult, DiverseConfig, GeneratorError, GeneratorKind, GeneratorSuite, NunCompleter, NunIndex,
    PromptMode, PromptSpec,
};
use cfforge::harness::{
    reduction_sweep, render_reports, run_seed, write_reports, Experiment, ExperimentConfig, LlmBackend, ScenarioKind,
};
use cfforge::llmclient::{Completer, EndpointConfig, LlmClient};
use cfforge::model::{evaluate, train, BinaryModel, Classifier};
use cfforge::schema::{read_dataset, read_dataset_with_schema, write_dataset};
use cfforge::synth::{sensor_bundle, CohortConfig};
use cfforge::{Dataset, DatasetRole, Label};

#[derive(Parser)]
#[command(
    name = "cfforge",
    version,
    about = "Counterfactual generation and label-scarcity augmentation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a simulated raw sensor cohort.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        patients: usize,
        #[arg(long, default_value_t = 14)]
        days: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Window raw sensor CSVs into train.csv, test.csv and schema.json.
    Featurize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        window_hours: Option<f64>,
        #[arg(long)]
        overlap: Option<f64>,
        #[arg(long)]
        stress_threshold: Option<f64>,
    },
    /// Train the classifier on a featurized training set.
    Train {
        /// Directory holding train.csv, or a dataset CSV.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// TOML file whose [model] section sets the hyperparameters.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate counterfactuals for every row of a dataset.
    Gencf(GencfArgs),
    /// Run the label-scarcity experiments and write the reports.
    Augment(AugmentArgs),
}

#[derive(clap::Args)]
struct EndpointArgs {
    /// `mock` for the offline NUN stand-in, or a chat-completions base URL.
    #[arg(long)]
    endpoint: Option<String>,
    /// Model name sent to the endpoint.
    #[arg(long)]
    llm_model: Option<String>,
    /// Serve only from the response cache.
    #[arg(long)]
    offline: bool,
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(clap::Args)]
struct GencfArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Neighbour set for nice/mock and few-shot exemplars; defaults to
    /// train.csv beside --data, else --data itself.
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long, default_value = "mock")]
    generator: String,
    /// `flip`, `0` or `1`.
    #[arg(long, default_value = "flip")]
    desired: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 200)]
    budget: usize,
    #[arg(long, default_value = "zero")]
    prompt: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    endpoint: EndpointArgs,
}

#[derive(clap::Args)]
struct AugmentArgs {
    /// Directory holding train.csv and test.csv.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model_config: Option<PathBuf>,
    /// A, B, C or all.
    #[arg(long, default_value = "all")]
    scenario: String,
    #[arg(long)]
    generator: Option<String>,
    #[arg(long, value_delimiter = ',')]
    ratios: Option<Vec<f64>>,
    /// Number of seeds, starting at the config's first_seed.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    endpoint: EndpointArgs,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Synth {
            out,
            patients,
            days,
            seed,
        } => {
            let bundle = sensor_bundle(&CohortConfig { patients, days, seed });
            write_bundle(&bundle, &out)?;
            println!("wrote {patients} patients x {days} days to {}", out.display());
        }
        Command::Featurize {
            input,
            out,
            seed,
            window_hours,
            overlap,
            stress_threshold,
        } => featurize(&input, &out, seed, window_hours, overlap, stress_threshold)?,
        Command::Train {
            data,
            out,
            seed,
            config,
        } => train_cmd(&data, &out, seed, config.as_deref())?,
        Command::Gencf(args) => gencf(&args)?,
        Command::Augment(args) => augment_cmd(&args)?,
    }
    Ok(())
}

fn featurize(
    input: &Path,
    out: &Path,
    seed: u64,
    window_hours: Option<f64>,
    overlap: Option<f64>,
    stress_threshold: Option<f64>,
) -> Result<()> {
    let mut window = ExperimentConfig::default().window;
    if let Some(h) = window_hours {
        window.window_hours = h;
    }
    if let Some(o) = overlap {
        window.overlap = o;
    }
    if let Some(s) = stress_threshold {
        window.stress_threshold = s;
    }
    let (bundle, load) = read_bundle(input)?;
    for (file, n) in &load.dropped {
        if *n > 0 {
            log::warn!("{file}: dropped {n} malformed rows");
        }
    }
    let (train_set, test) = build_dataset(&bundle, &window.to_config(), seed)?;
    write_dataset(&train_set, &out.join("train.csv"))?;
    write_dataset(&test, &out.join("test.csv"))?;
    let [n0, n1] = train_set.class_counts();
    println!(
        "train {} rows ({n0} / {n1}), test {} rows, {} features -> {}",
        train_set.len(),
        test.len(),
        train_set.schema.dim(),
        out.display()
    );
    Ok(())
}

fn dataset_path(data: &Path, file: &str) -> PathBuf {
    if data.is_dir() {
        data.join(file)
    } else {
        data.to_path_buf()
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => Ok(ExperimentConfig::load(p)?),
        None => Ok(ExperimentConfig::default()),
    }
}

fn train_cmd(data: &Path, out: &Path, seed: u64, config: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let path = dataset_path(data, "train.csv");
    let train_set = read_dataset(&path, DatasetRole::Train).with_context(|| format!("reading {}", path.display()))?;
    let model = train(&train_set, &cfg.model, seed)?;
    model.save(out)?;
    println!(
        "trained on {} rows, loss {:.4} -> {:.4}, saved {}",
        train_set.len(),
        model.initial_loss,
        model.final_loss,
        out.display()
    );
    let test_path = path.with_file_name("test.csv");
    if data.is_dir() && test_path.exists() {
        let test = read_dataset_with_schema(&test_path, model.schema.clone(), DatasetRole::Test)?;
        let r = evaluate(&model, &test)?;
        println!(
            "test acc {:.4} pre {:.4} rec {:.4} f1 {:.4} auc {:.4}",
            r.accuracy, r.precision, r.recall, r.f1, r.auc
        );
    }
    Ok(())
}

/// Endpoint client for a URL; `None` for the mock stand-in.
fn llm_client(args: &EndpointArgs, mut base: EndpointConfig) -> Result<Option<LlmClient>> {
    let endpoint = args.endpoint.as_deref().unwrap_or("mock");
    if endpoint == "mock" {
        return Ok(None);
    }
    base.base_url = endpoint.to_owned();
    if let Some(m) = &args.llm_model {
        base.model_name = m.clone();
    }
    if let Some(c) = &args.cache {
        base.cache_path = Some(c.clone());
    }
    base.offline |= args.offline;
    Ok(Some(LlmClient::new(base.with_env_key())?))
}

fn parse_desired(s: &str) -> Result<Option<Label>> {
    match s {
        "flip" => Ok(None),
        "0" => Ok(Some(0)),
        "1" => Ok(Some(1)),
        other => bail!("--desired must be flip, 0 or 1, got {other:?}"),
    }
}

fn write_jsonl(path: &Path, rows: &[CounterfactualResult]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn gencf(args: &GencfArgs) -> Result<()> {
    let kind =
        GeneratorKind::parse(&args.generator).with_context(|| format!("unknown generator {:?}", args.generator))?;
    let desired = parse_desired(&args.desired)?;
    let prompt = PromptSpec {
        mode: PromptMode::parse(&args.prompt)
            .with_context(|| format!("--prompt must be zero or few:K, got {:?}", args.prompt))?,
        ..PromptSpec::zero_shot()
    };
    let model = Classifier::load(&args.model)?;
    let data = read_dataset_with_schema(&args.data, model.schema.clone(), DatasetRole::Test)
        .with_context(|| format!("reading {}", args.data.display()))?;
    let train_path = args
        .train
        .clone()
        .unwrap_or_else(|| args.data.with_file_name("train.csv"));
    let neighbours = if train_path.exists() {
        read_dataset_with_schema(&train_path, model.schema.clone(), DatasetRole::Train)?
    } else {
        data.clone()
    };
    let index = NunIndex::new(&neighbours, &model);
    let stub = NunCompleter { train: &index };
    let client = llm_client(&args.endpoint, EndpointConfig::default())?;
    let completer: &dyn Completer = match &client {
        Some(c) => c,
        None => &stub,
    };
    let diverse = DiverseConfig {
        k: args.k,
        ..DiverseConfig::default()
    };
    let suite = GeneratorSuite {
        kind,
        train: &index,
        budget: args.budget,
        diverse,
        prompt,
        completer: Some(completer),
        seed: args.seed,
    };

    let jobs: Vec<(usize, Label)> = data
        .samples
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            let current = model.predict(&s.values).label;
            match desired {
                None => Some((i, 1 - current)),
                Some(d) if d != current => Some((i, d)),
                Some(_) => None,
            }
        })
        .collect();
    let skipped = data.len() - jobs.len();
    let results: Vec<Vec<CounterfactualResult>> = jobs
        .par_iter()
        .map(
            |&(i, d)| match suite.generate(&data.samples[i], d, &data.schema, &model) {
                Err(GeneratorError::NoUnlikeNeighbor) => Ok(Vec::new()),
                other => other,
            },
        )
        .collect::<Result<_, _>>()?;
    let results: Vec<CounterfactualResult> = results.into_iter().flatten().collect();
    write_jsonl(&args.out, &results)?;
    if skipped > 0 {
        info!("{skipped} rows already predicted as the desired class were skipped");
    }
    if results.is_empty() {
        println!("no counterfactuals generated");
    } else {
        println!("{} counterfactuals -> {}", results.len(), args.out.display());
        let report = batch_report(kind.id(), &results, &model, &model.schema)?;
        for (class, m) in report.classes.iter().enumerate() {
            if let Some(m) = m {
                println!(
                    "  to class {class}: n {}, validity {:.3}, distance {:.3}, sparsity {:.2}, plausibility {:.1}%",
                    m.n_cf, m.validity, m.mean_distance, m.mean_sparsity, m.plausibility
                );
            }
        }
    }
    Ok(())
}

fn augment_cmd(args: &AugmentArgs) -> Result<()> {
    let mut cfg = load_config(args.model_config.as_deref())?;
    if let Some(g) = &args.generator {
        cfg.generator.kind = GeneratorKind::parse(g).with_context(|| format!("unknown generator {g:?}"))?;
    }
    if let Some(r) = &args.ratios {
        cfg.experiment.ratios = r.clone();
    }
    if let Some(n) = args.seeds {
        cfg.experiment.seeds = n;
    }
    cfg.validate()?;
    let kinds: Vec<ScenarioKind> = if args.scenario.eq_ignore_ascii_case("all") {
        ScenarioKind::ALL.to_vec()
    } else {
        vec![ScenarioKind::parse(&args.scenario).with_context(|| format!("unknown scenario {:?}", args.scenario))?]
    };

    let train_set = read_dataset(&args.data.join("train.csv"), DatasetRole::Train)?;
    let test: Dataset =
        read_dataset_with_schema(&args.data.join("test.csv"), train_set.schema.clone(), DatasetRole::Test)?;
    let client = llm_client(&args.endpoint, cfg.endpoint.clone())?;
    let llm = match &client {
        Some(c) => LlmBackend::Endpoint(c),
        None => LlmBackend::NunStub,
    };
    let seeds = cfg.seeds();
    let exp = Experiment {
        hyper: cfg.model.clone(),
        generator: cfg.generator.clone(),
        llm,
        ratios: cfg.experiment.ratios.clone(),
        seeds: seeds.clone(),
        reduction_fraction: cfg.experiment.reduction_fraction,
    };

    std::fs::create_dir_all(&args.out)?;
    let partial = Mutex::new(BufWriter::new(File::create(args.out.join("runs.jsonl"))?));
    let jobs: Vec<(ScenarioKind, u64)> = kinds.iter().flat_map(|&k| seeds.iter().map(move |&s| (k, s))).collect();
    let runs: Vec<_> = jobs
        .par_iter()
        .map(|&(kind, seed)| -> Result<_> {
            let runs = run_seed(&train_set, &test, kind, &exp, seed)?;
            let mut w = partial.lock().expect("writer lock");
            for r in &runs {
                serde_json::to_writer(&mut *w, r)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
            info!("scenario {} seed {seed} done", kind.name());
            Ok(runs)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    drop(partial);

    let sweep = reduction_sweep(&train_set, &test, &cfg.experiment.sweep_fractions, &seeds, &cfg.model)?;
    let bundle = render_reports(&runs, &sweep)?;
    write_reports(&bundle, &args.out)?;
    println!(
        "{} runs over {} scenario(s) x {} seed(s) -> {}",
        runs.len(),
        kinds.len(),
        seeds.len(),
        args.out.display()
    );
    Ok(())
}
