use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use zidlab::discovery::{
    run_discovery, DiscoveryConfig, DiscoveryReport, EdgeWeighting, SolverConfig,
};
use zidlab::gridworld::Pos;

use super::density::report_written;
use super::{load_map, version};
use crate::output::Sink;
use crate::svg::{box_plot, heatmap};
use crate::{CliError, Global, List};

#[derive(Debug, Args, Serialize)]
pub struct DiscoverArgs {
    #[arg(long, default_value = "maps/doorway.map")]
    pub map: PathBuf,
    #[arg(long, default_value = "1,2,3")]
    pub agents: List,
    /// Exploration steps per run.
    #[arg(long, default_value_t = 100_000)]
    pub steps: u64,
    /// Episodes between two clustering rounds.
    #[arg(long, default_value_t = 5)]
    pub interval: usize,
    #[arg(long, default_value_t = 100)]
    pub horizon: u32,
    /// Seeds to run per agent count; defaults to the global seed.
    #[arg(long)]
    pub seeds: Option<List>,
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iterations: usize,
    /// Weight local-graph edges by how often they were observed.
    #[arg(long)]
    pub visit_weights: bool,
}

#[derive(Debug, Serialize)]
struct Config<'a> {
    command: &'static str,
    version: &'static str,
    state_score: &'static str,
    #[serde(flatten)]
    args: &'a DiscoverArgs,
    resolved_seeds: &'a [u64],
}

#[derive(Debug, Serialize)]
struct HeatRow {
    n_agents: usize,
    seed: u64,
    x: usize,
    y: usize,
    walkable: bool,
    score: f64,
    rank: usize,
}

#[derive(Debug, Serialize)]
struct RunRow {
    n_agents: usize,
    seed: u64,
    episodes: u64,
    total_steps: u64,
    vertices: usize,
    edges: usize,
    clusterings: usize,
    skipped: usize,
    solver_iterations: usize,
    top_x: usize,
    top_y: usize,
    top_score: f64,
}

#[derive(Debug, Serialize)]
struct TimingRow {
    n_agents: usize,
    run: u64,
    seconds_total: f64,
    seconds_per_cluster: f64,
}

pub fn discover(g: &Global, a: &DiscoverArgs) -> Result<(), CliError> {
    let seeds = a.seeds.clone().map_or_else(|| vec![g.seed], |l| l.0);
    let config = Config {
        command: "discover",
        version: version(),
        state_score: "sum of the scores of the edges incident to the state",
        args: a,
        resolved_seeds: &seeds,
    };
    if a.interval == 0 || a.horizon == 0 || a.steps == 0 {
        return Err(CliError::Validation(
            "--interval, --horizon and --steps must be positive".into(),
        ));
    }
    if a.tolerance.is_nan() || a.tolerance <= 0.0 {
        return Err(CliError::Validation("--tolerance must be positive".into()));
    }
    let base = load_map(&a.map)?;
    let solver = SolverConfig {
        tolerance: a.tolerance,
        max_iterations: a.max_iterations,
        weighting: if a.visit_weights {
            EdgeWeighting::VisitCount
        } else {
            EdgeWeighting::Unit
        },
    };

    let mut reports: Vec<(u64, DiscoveryReport)> = Vec::new();
    for &n in &a.agents.0 {
        let spec = base
            .with_agents(n as usize)
            .map_err(|e| CliError::Validation(format!("{n} agents: {e}")))?;
        for &seed in &seeds {
            let cfg = DiscoveryConfig {
                total_steps: a.steps,
                cluster_interval: a.interval,
                horizon: a.horizon,
                seed,
                solver,
            };
            let report =
                run_discovery(&spec, &cfg).map_err(|e| CliError::Runtime(e.to_string()))?;
            let top = report.scores.top();
            println!(
                "{n} agent(s), seed {seed}: {} states, {} edges, {} clusterings, top cell ({}, {}), clustering time {:.3} s",
                report.graph_vertices,
                report.graph_edges,
                report.clusterings,
                top.x,
                top.y,
                report.total_cluster_seconds()
            );
            reports.push((seed, report));
        }
    }

    let mut heat = Vec::new();
    let mut runs = Vec::new();
    let mut timing = Vec::new();
    for (seed, r) in &reports {
        let s = &r.scores;
        for y in 0..s.height {
            for x in 0..s.width {
                let p = Pos::new(x, y);
                heat.push(HeatRow {
                    n_agents: r.n_agents,
                    seed: *seed,
                    x,
                    y,
                    walkable: base.tile(p).is_walkable(),
                    score: s.at(p),
                    rank: s.rank(p),
                });
            }
        }
        let top = s.top();
        runs.push(RunRow {
            n_agents: r.n_agents,
            seed: *seed,
            episodes: r.episodes,
            total_steps: r.total_steps,
            vertices: r.graph_vertices,
            edges: r.graph_edges,
            clusterings: r.clusterings,
            skipped: r.skipped,
            solver_iterations: r.solver_iterations,
            top_x: top.x,
            top_y: top.y,
            top_score: s.at(top),
        });
        let total = r.total_cluster_seconds();
        timing.push(TimingRow {
            n_agents: r.n_agents,
            run: *seed,
            seconds_total: total,
            seconds_per_cluster: if r.clusterings > 0 {
                total / r.clusterings as f64
            } else {
                0.0
            },
        });
    }

    let mut sink = Sink::new(&g.out, &g.format, &config)?;
    sink.csv("heatmap.csv", &heat)?;
    sink.csv("runs.csv", &runs)?;
    sink.csv("timing.csv", &timing)?;
    sink.json(
        "discover.json",
        &serde_json::json!({ "runs": runs, "timing": timing }),
    )?;
    for &n in &a.agents.0 {
        if let Some((seed, r)) = reports.iter().find(|(_, r)| r.n_agents == n as usize) {
            let s = &r.scores;
            let cells: Vec<Option<f64>> = (0..s.width * s.height)
                .map(|i| {
                    let p = Pos::new(i % s.width, i / s.width);
                    base.tile(p).is_walkable().then(|| s.at(p))
                })
                .collect();
            let title = format!("Bottleneck scores, {n} agent(s), seed {seed}");
            sink.svg(
                &format!("heatmap_n{n}.svg"),
                heatmap(&title, s.width, s.height, &cells),
            )?;
        }
    }
    let groups: Vec<(String, Vec<f64>)> = a
        .agents
        .0
        .iter()
        .map(|&n| {
            (
                n.to_string(),
                timing
                    .iter()
                    .filter(|t| t.n_agents == n as usize)
                    .map(|t| t.seconds_total)
                    .collect(),
            )
        })
        .collect();
    sink.svg(
        "timing.svg",
        box_plot("Clustering time", "agents", "seconds", &groups),
    )?;
    report_written(&sink);
    Ok(())
}
