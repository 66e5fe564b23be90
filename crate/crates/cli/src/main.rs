mod dataset;
mod experiment;

use std::fs;
use std::io::Read;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use exroute_core::data::{generate_synthetic, prepare, write_csv_vectors, SplitSpec, SyntheticSpec};
use exroute_core::eval::train_expert;
use exroute_core::index::{compute_centroids, load_registry, save_registry, InputKind, Registry};
use exroute_core::nn::TrainConfig;
use exroute_service::wire::{ExpertList, ExpertPayload, MatchRequest};
use exroute_service::{AppState, ServerConfig, DEFAULT_MAX_BODY_BYTES, DEFAULT_MAX_EXPERTS};

use dataset::DatasetArgs;

#[derive(Debug, Parser)]
#[command(
    name = "exroute",
    version,
    about = "Route samples to expert models by autoencoder reconstruction error"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an expert autoencoder on a dataset's server split.
    Train {
        #[command(flatten)]
        dataset: DatasetArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Also compute class centroids from the server split.
        #[arg(long)]
        centroids: bool,
        /// Output registry file holding the single expert.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Compute class centroids for a trained expert from its server split.
    Centroids {
        /// Registry file containing the expert (selected by --name).
        #[arg(long)]
        expert: PathBuf,
        #[command(flatten)]
        dataset: DatasetArgs,
        /// Split seed used when the expert was trained.
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Build and examine registry files.
    Registry {
        #[command(subcommand)]
        command: RegistryCommand,
    },
    /// Run the HTTP routing server.
    Serve(ServeArgs),
    /// Answer one match request in-process and print the JSON response.
    Match {
        #[arg(long)]
        registry: PathBuf,
        /// Request JSON (same shape as POST /v1/match); `-` reads stdin.
        #[arg(long)]
        request: PathBuf,
    },
    /// Run the evaluation protocol from an experiment file.
    Eval {
        /// Experiment TOML.
        #[arg(long)]
        config: PathBuf,
        /// Override the seeds in the file, e.g. `0,1,2`.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Write dataset,client,metric,value,seed rows here.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Save each seed's trained registry into this directory.
        #[arg(long)]
        registry_dir: Option<PathBuf>,
        /// Skip the MLP baseline.
        #[arg(long)]
        no_mlp: bool,
    },
    /// Write a synthetic proxy dataset as CSV (label,f1..fL).
    SynthData {
        /// stl10, har, reuters or gaussian.
        #[arg(long)]
        preset: String,
        #[arg(long)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum RegistryCommand {
    /// Concatenate the experts of several registry files, in order.
    Pack {
        #[arg(long, short)]
        out: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Summarize a registry file.
    Inspect {
        path: PathBuf,
        /// Print the same JSON as GET /v1/experts.
        #[arg(long)]
        json: bool,
    },
    /// Write one expert as a POST /v1/experts registration body.
    Export {
        path: PathBuf,
        #[arg(long)]
        expert: String,
        /// Defaults to stdout.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, clap::Args)]
struct TrainArgs {
    /// Seed for the split shuffle, weight init and batch order.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 45)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
}

impl TrainArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            initial_lr: self.lr,
            max_epochs: self.epochs,
            batch_size: self.batch_size,
            ..TrainConfig::default().with_seed(self.seed)
        }
    }
}

#[derive(Debug, clap::Args)]
struct ServeArgs {
    #[arg(long, env = "EXROUTE_LISTEN", default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Registry file loaded at startup if present and rewritten on every
    /// registration. Without it the registry lives in memory only.
    #[arg(long, env = "EXROUTE_REGISTRY")]
    registry: Option<PathBuf>,
    #[arg(long, env = "EXROUTE_MAX_BODY_BYTES", default_value_t = DEFAULT_MAX_BODY_BYTES)]
    max_body_bytes: usize,
    #[arg(long, env = "EXROUTE_MAX_EXPERTS", default_value_t = DEFAULT_MAX_EXPERTS)]
    max_experts: usize,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train {
            dataset,
            train,
            centroids,
            out,
        } => cmd_train(&dataset, &train, centroids, &out),
        Command::Centroids {
            expert,
            dataset,
            split_seed,
            out,
        } => cmd_centroids(&expert, &dataset, split_seed, &out),
        Command::Registry { command } => match command {
            RegistryCommand::Pack { out, inputs } => cmd_pack(&inputs, &out),
            RegistryCommand::Inspect { path, json } => cmd_inspect(&path, json),
            RegistryCommand::Export { path, expert, out } => cmd_export(&path, &expert, out.as_deref()),
        },
        Command::Serve(args) => cmd_serve(args),
        Command::Match { registry, request } => cmd_match(&registry, &request),
        Command::Eval {
            config,
            seeds,
            csv,
            registry_dir,
            no_mlp,
        } => experiment::run(
            &config,
            experiment::EvalOptions {
                seeds,
                csv,
                registry_dir,
                no_mlp,
            },
        ),
        Command::SynthData {
            preset,
            samples,
            seed,
            out,
        } => cmd_synth(&preset, samples, seed, &out),
    }
}

fn cmd_train(dataset: &DatasetArgs, train: &TrainArgs, centroids: bool, out: &Path) -> Result<()> {
    let spec = dataset.spec()?;
    let raw = spec.load()?;
    let prepared = prepare(&spec.name, raw, &SplitSpec::default().with_seed(train.seed))?;
    let config = train.config();
    println!(
        "training `{}` on {} server samples for {} epochs (seed {})",
        spec.name,
        prepared.server().len(),
        config.max_epochs,
        config.seed
    );
    let entry = train_expert(&prepared, &config, centroids)?;
    let loss = entry.autoencoder.mean_reconstruction_loss(prepared.server())?;
    println!("server-split reconstruction MSE {loss:.6}");
    save_registry(&Registry::from_entries([entry])?, out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_centroids(expert: &Path, dataset: &DatasetArgs, split_seed: u64, out: &Path) -> Result<()> {
    let registry = load_registry(expert)?;
    let Some(position) = registry.position(&dataset.name) else {
        bail!("{} has no expert named `{}`", expert.display(), dataset.name);
    };
    let spec = dataset.spec()?;
    let prepared = prepare(&spec.name, spec.load()?, &SplitSpec::default().with_seed(split_seed))?;
    let mut entries: Vec<_> = registry.iter().cloned().collect();
    let centroids = compute_centroids(&entries[position].autoencoder, prepared.server())?;
    println!(
        "{} class centroids from {} samples",
        centroids.len(),
        prepared.server().len()
    );
    entries[position].centroids = Some(centroids);
    save_registry(&Registry::from_entries(entries)?, out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_pack(inputs: &[PathBuf], out: &Path) -> Result<()> {
    let mut registry = Registry::new();
    for path in inputs {
        for entry in load_registry(path)?.entries() {
            registry
                .push_shared(entry.clone())
                .with_context(|| format!("adding experts from {}", path.display()))?;
        }
    }
    save_registry(&registry, out)?;
    println!("wrote {} experts to {}", registry.len(), out.display());
    Ok(())
}

fn cmd_inspect(path: &Path, json: bool) -> Result<()> {
    let registry = load_registry(path)?;
    let list = ExpertList::of(&registry);
    if json {
        println!("{}", serde_json::to_string_pretty(&list)?);
        return Ok(());
    }
    println!("format version {}, {} experts", list.format_version, list.experts.len());
    for e in &list.experts {
        let input = match e.input {
            InputKind::Image => "image".to_string(),
            InputKind::PooledVector { source_len } => format!("vector[{source_len}]"),
        };
        let classes = e.classes.as_ref().map_or("none".to_string(), |c| c.len().to_string());
        println!(
            "{:>3}  {:<16} input {:<12} standardized {:<5} classes {:<5} seed {} epochs {} samples {}",
            e.index,
            e.expert_id,
            input,
            e.standardized,
            classes,
            e.fingerprint.seed,
            e.fingerprint.epochs,
            e.fingerprint.samples
        );
    }
    Ok(())
}

fn cmd_export(path: &Path, expert: &str, out: Option<&Path>) -> Result<()> {
    let registry = load_registry(path)?;
    let Some(entry) = registry.by_id(expert) else {
        bail!("{} has no expert named `{expert}`", path.display());
    };
    let text = serde_json::to_string(&ExpertPayload::from_entry(entry))?;
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_serve(args: ServeArgs) -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    let config = ServerConfig {
        listen: args.listen,
        registry_path: args.registry,
        max_body_bytes: args.max_body_bytes,
        max_experts: args.max_experts,
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let state = Arc::new(AppState::open(config.clone())?);
        let listener = tokio::net::TcpListener::bind(config.listen)
            .await
            .with_context(|| format!("binding {}", config.listen))?;
        exroute_service::run(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}

fn cmd_match(registry: &Path, request: &Path) -> Result<()> {
    let registry = load_registry(registry)?;
    let text = if request == Path::new("-") {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        s
    } else {
        fs::read_to_string(request).with_context(|| format!("reading {}", request.display()))?
    };
    let req: MatchRequest = serde_json::from_str(&text).context("parsing match request")?;
    let resp = exroute_service::execute_match(&registry, &req)?;
    println!("{}", serde_json::to_string_pretty(&resp)?);
    Ok(())
}

fn cmd_synth(preset: &str, samples: usize, seed: u64, out: &Path) -> Result<()> {
    let Some(spec) = SyntheticSpec::preset(preset, samples, seed) else {
        bail!(
            "unknown preset `{preset}` (known: {})",
            SyntheticSpec::PRESETS.join(", ")
        );
    };
    let data = generate_synthetic(&spec)?;
    let file = fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    write_csv_vectors(std::io::BufWriter::new(file), &data)?;
    println!("wrote {samples} samples of {} values to {}", spec.dims, out.display());
    Ok(())
}
