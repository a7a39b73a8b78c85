use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use commute_core::exact::{pair_metrics_grounded, pseudo_inverse, GroundedLaplacian};
use commute_core::experiments::{
    build_instance, degeneracy_report, run_scenario, sample_pairs, write_outputs, ExperimentConfig, ExperimentError,
    Instance, Prepared, Scenario,
};
use commute_core::generators::write_point_cloud;
use commute_core::graph::write_edge_list;
use commute_core::rng::derive_seed;
use commute_core::spectral::{key_prop_bounds, spectrum, SpectralError};

#[derive(Parser)]
#[command(name = "commute", version, about = "Commute distances on random graphs: exact values, bounds and sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the first graph of the config and write it (and its points) to OUT.
    Gen(Common),
    /// Exact hitting and commute times for sampled pairs of the first graph.
    Metrics(Common),
    /// Spectral summary and bound reports for sampled pairs of the first graph.
    Bounds(Common),
    /// Run the whole sweep: records CSV, SVG plot and summary JSON.
    Sweep(Common),
    /// Nearest-neighbor degeneracy report for the first graph.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, ExperimentError> {
        let mut cfg = ExperimentConfig::from_file(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.base_seed = seed;
        }
        std::fs::create_dir_all(&self.out)?;
        Ok(cfg)
    }
}

fn first_instance(cfg: &ExperimentConfig) -> Result<Instance, ExperimentError> {
    if matches!(cfg.scenario, Scenario::Concentration { .. }) {
        return Err(ExperimentError::Config("the concentration scenario has no graphs; use `sweep`".into()));
    }
    let prep = Prepared::new(cfg)?;
    build_instance(cfg, &prep, cfg.n_list[0], 0)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), ExperimentError> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn pairs_of(cfg: &ExperimentConfig, inst: &Instance) -> Vec<(usize, usize)> {
    sample_pairs(inst.graph.n(), cfg.pairs_per_graph, false, |_, _| true, derive_seed(inst.seed, 1))
}

fn gen(c: &Common) -> Result<(), ExperimentError> {
    let cfg = c.load()?;
    let inst = first_instance(&cfg)?;
    write_edge_list(&inst.graph, BufWriter::new(File::create(c.out.join("graph.txt"))?))?;
    if let Some(cloud) = &inst.cloud {
        write_point_cloud(cloud, BufWriter::new(File::create(c.out.join("points.txt"))?))?;
    }
    println!(
        "n = {}, edges = {}, seed = {}, discarded draws = {}",
        inst.graph.n(),
        inst.graph.num_edges(),
        inst.seed,
        inst.discards
    );
    Ok(())
}

fn metrics(c: &Common) -> Result<(), ExperimentError> {
    let cfg = c.load()?;
    let inst = first_instance(&cfg)?;
    let g = &inst.graph;
    let grounded = GroundedLaplacian::new(g, 0)?;
    let rows: Vec<_> = pairs_of(&cfg, &inst).into_iter().map(|(i, j)| pair_metrics_grounded(g, &grounded, i, j)).collect();
    write_json(&c.out.join("metrics.json"), &json!({ "seed": inst.seed, "n": g.n(), "pairs": rows }))?;
    println!("{} pairs written", rows.len());
    Ok(())
}

fn bounds(c: &Common) -> Result<(), ExperimentError> {
    let cfg = c.load()?;
    let inst = first_instance(&cfg)?;
    let g = &inst.graph;
    let s = spectrum(g)?;
    let grounded = GroundedLaplacian::new(g, 0)?;
    let mut reports = Vec::new();
    for (i, j) in pairs_of(&cfg, &inst) {
        match key_prop_bounds(g, &s, &pair_metrics_grounded(g, &grounded, i, j)) {
            Ok(b) => reports.push(b),
            Err(SpectralError::Bipartite) => break,
            Err(e) => return Err(e.into()),
        }
    }
    let violations = reports.iter().filter(|b| !b.holds()).count();
    write_json(
        &c.out.join("bounds.json"),
        &json!({
            "seed": inst.seed,
            "n": g.n(),
            "lambda2": s.lambda2(),
            "lambda_n": s.lambda_n(),
            "gap2": s.gap2,
            "gap_abs": s.gap_abs,
            "reports": reports,
            "violations": violations,
        }),
    )?;
    println!("gap2 = {:.6}, {} pairs, {violations} bound violations", s.gap2, reports.len());
    Ok(())
}

fn sweep(c: &Common) -> Result<(), ExperimentError> {
    let cfg = c.load()?;
    let out = run_scenario(&cfg)?;
    write_outputs(&cfg, &out, &c.out)?;
    println!(
        "{} records; deviation strictly decreasing: {}",
        out.records.len(),
        out.summary["deviation_strictly_decreasing"]
    );
    Ok(())
}

fn report(c: &Common) -> Result<(), ExperimentError> {
    let cfg = c.load()?;
    let inst = first_instance(&cfg)?;
    let pinv = pseudo_inverse(&inst.graph)?;
    let rep = degeneracy_report(&inst.graph, &pinv)?;
    write_json(&c.out.join("degeneracy.json"), &serde_json::to_value(&rep)?)?;
    println!(
        "approx-NN fraction {:.4}, exact-NN fraction {:.4}, mean rank correlation {:.4}",
        rep.approx_nn_fraction, rep.exact_nn_fraction, rep.mean_rank_correlation
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(c) => gen(c),
        Command::Metrics(c) => metrics(c),
        Command::Bounds(c) => bounds(c),
        Command::Sweep(c) => sweep(c),
        Command::Report(c) => report(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                ExperimentError::Config(_) => 2,
                ExperimentError::PreconditionUnsatisfiable(_) => 3,
                _ => 1,
            })
        }
    }
}
