use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use exroute_core::data::DatasetSource;
use exroute_core::eval::{format_table, load_datasets, run_experiment, write_results_csv, ExperimentConfig};
use exroute_core::index::save_registry;

/// Reads an experiment TOML; relative dataset paths are taken relative to
/// the file's directory.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut config: ExperimentConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let rebase = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    for d in &mut config.datasets {
        match &mut d.source {
            DatasetSource::Idx { images, labels } => {
                rebase(images);
                rebase(labels);
            }
            DatasetSource::Csv { path, .. } => rebase(path),
            DatasetSource::Synthetic { .. } => {}
        }
    }
    Ok(config)
}

pub struct EvalOptions {
    pub seeds: Option<Vec<u64>>,
    pub csv: Option<PathBuf>,
    pub registry_dir: Option<PathBuf>,
    pub no_mlp: bool,
}

pub fn run(config_path: &Path, opts: EvalOptions) -> Result<()> {
    let mut config = load_config(config_path)?;
    if let Some(seeds) = opts.seeds {
        config.seeds = seeds;
    }
    if opts.no_mlp {
        config.mlp_baseline = false;
    }
    let seeds: Vec<String> = config.seeds.iter().map(u64::to_string).collect();
    println!("seeds: {}", seeds.join(", "));
    println!(
        "split: server {} / client A {} / client B {}",
        config.split.server, config.split.client_a, config.split.client_b
    );
    let data = load_datasets(&config)?;
    for (name, raw) in &data {
        println!("dataset {name}: {} samples", raw.len());
    }
    let mut rows = Vec::new();
    for &seed in &config.seeds {
        let report = run_experiment(&config, &data, seed).with_context(|| format!("seed {seed}"))?;
        println!("\n== seed {seed} ==");
        println!("{}", format_table("coarse assignment accuracy (%)", &report.coarse));
        println!(
            "{}",
            format_table("fine assignment accuracy (%), own expert", &report.fine)
        );
        println!(
            "{}",
            format_table("end-to-end coarse+fine accuracy (%)", &report.end_to_end)
        );
        if let Some(mlp) = &report.mlp {
            println!("{}", format_table("MLP dataset-ID accuracy (%)", mlp));
        }
        let (a, b) = client_totals(&report);
        println!("client sample totals: A {a}, B {b}");
        if let Some(dir) = &opts.registry_dir {
            fs::create_dir_all(dir)?;
            let path = dir.join(format!("registry-seed{seed}.exrg"));
            save_registry(&report.registry, &path)?;
            println!("registry written to {}", path.display());
        }
        rows.extend(report.rows());
    }
    if let Some(path) = &opts.csv {
        let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_results_csv(file, &rows)?;
        println!("results written to {}", path.display());
    }
    Ok(())
}

fn client_totals(report: &exroute_core::eval::ExperimentReport) -> (usize, usize) {
    report
        .coarse
        .iter()
        .fold((0, 0), |(a, b), d| (a + d.client_a.total, b + d.client_b.total))
}
