use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;
use serde::Serialize;
use zidlab::mdpgraph::{enumerate_graph, reward_density, Density};
use zidlab::rollout::{exact_exit_probability, random_explore};
use zidlab::stats::{binomial_interval, ci95_half_width, mean};

use super::{check_variant, load_map, version};
use crate::output::Sink;
use crate::svg::{line_chart, Series};
use crate::{CliError, Global, List};

#[derive(Debug, Args, Serialize)]
pub struct DensityArgs {
    #[arg(long, default_value = "maps/density_variants.map")]
    pub map: PathBuf,
    /// Variants M_n to run, each keeping the first n disabled moves.
    #[arg(long, default_value = "0..4")]
    pub variants: List,
    #[arg(long, default_value = "12,13,14")]
    pub horizons: List,
    /// Step budget of each run.
    #[arg(long, default_value_t = 200_000)]
    pub steps: u64,
    #[arg(long, default_value = "1..30")]
    pub seeds: List,
    /// Only compute the exact exit probabilities.
    #[arg(long)]
    pub oracle_only: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ExploreArgs {
    pub map: PathBuf,
    #[arg(long, default_value_t = 28)]
    pub horizon: u32,
    #[arg(long, default_value_t = 200_000)]
    pub steps: u64,
    /// Seeds to run; defaults to the global seed.
    #[arg(long)]
    pub seeds: Option<List>,
}

#[derive(Debug, Serialize)]
struct Config<'a, A> {
    command: &'static str,
    version: &'static str,
    #[serde(flatten)]
    args: &'a A,
    state_cap: usize,
}

#[derive(Debug, Clone, Serialize)]
struct OracleRow {
    variant: u64,
    rewarded_edges: usize,
    edges: usize,
    density: f64,
    horizon: u64,
    exit_probability: f64,
}

#[derive(Debug, Clone, Serialize)]
struct RunRow {
    variant: u64,
    horizon: u64,
    seed: u64,
    total_steps: u64,
    episodes: u64,
    exits: u64,
    exit_rate: f64,
    oracle: f64,
    ci_low: f64,
    ci_high: f64,
    within_ci: bool,
}

#[derive(Debug, Clone, Serialize)]
struct CellRow {
    variant: u64,
    density: String,
    horizon: u64,
    runs: usize,
    mean_exit_rate: f64,
    ci95: f64,
    oracle: f64,
    within_ci: usize,
}

fn positive_horizons(horizons: &List) -> Result<Vec<u32>, CliError> {
    horizons
        .0
        .iter()
        .map(|&h| match u32::try_from(h) {
            Ok(h) if h > 0 => Ok(h),
            _ => Err(CliError::Validation(format!(
                "horizon {h} must be between 1 and {}",
                u32::MAX
            ))),
        })
        .collect()
}

pub fn density_experiment(g: &Global, a: &DensityArgs) -> Result<(), CliError> {
    let config = Config {
        command: "density-experiment",
        version: version(),
        args: a,
        state_cap: g.state_cap,
    };
    let base = load_map(&a.map)?;
    let horizons = positive_horizons(&a.horizons)?;
    if a.steps == 0 {
        return Err(CliError::Validation("--steps must be positive".into()));
    }
    let max_h = *horizons.iter().max().expect("non-empty list");

    let mut variants = Vec::new();
    let mut oracle_rows = Vec::new();
    for &v in &a.variants.0 {
        check_variant(&base, v as usize)?;
        let spec = base.variant(v as usize);
        let graph =
            enumerate_graph(&spec, g.state_cap).map_err(|e| CliError::Runtime(e.to_string()))?;
        let density = reward_density(&graph).map_err(|e| CliError::Runtime(e.to_string()))?;
        let table = exact_exit_probability(&graph, max_h);
        for &h in &horizons {
            oracle_rows.push(OracleRow {
                variant: v,
                rewarded_edges: density.rewarded,
                edges: density.total,
                density: density.value(),
                horizon: u64::from(h),
                exit_probability: table.at(h),
            });
        }
        println!("M{v}: density {density} ({:.6})", density.value());
        variants.push((v, spec, density, table));
    }
    for r in &oracle_rows {
        println!(
            "  M{} h={:<3} P(exit) = {:.6}",
            r.variant, r.horizon, r.exit_probability
        );
    }

    let mut sink = Sink::new(&g.out, &g.format, &config)?;
    sink.csv("oracle.csv", &oracle_rows)?;
    if a.oracle_only {
        sink.json("oracle.json", &oracle_rows)?;
        report_written(&sink);
        return Ok(());
    }

    let tasks: Vec<(usize, u32, u64)> = (0..variants.len())
        .flat_map(|i| {
            horizons
                .iter()
                .flat_map(move |&h| a.seeds.0.iter().map(move |&s| (i, h, s)))
        })
        .collect();
    let runs: Vec<RunRow> = tasks
        .par_iter()
        .map(|&(i, h, seed)| {
            let (v, spec, _, table) = &variants[i];
            let stats = random_explore(spec, h, a.steps, seed);
            let p = table.at(h);
            let (lo, hi) = binomial_interval(p, stats.episodes, 0.95);
            RunRow {
                variant: *v,
                horizon: u64::from(h),
                seed,
                total_steps: stats.total_steps,
                episodes: stats.episodes,
                exits: stats.exits,
                exit_rate: stats.exit_rate,
                oracle: p,
                ci_low: lo as f64 / stats.episodes as f64,
                ci_high: hi as f64 / stats.episodes as f64,
                within_ci: (lo..=hi).contains(&stats.exits),
            }
        })
        .collect();

    let cells = summarize(
        &variants
            .iter()
            .map(|(v, _, d, _)| (*v, *d))
            .collect::<Vec<_>>(),
        &horizons,
        &runs,
    );
    for c in &cells {
        println!(
            "M{} h={:<3} mean exit rate {:.6} +- {:.6}  oracle {:.6}  within CI {}/{}",
            c.variant, c.horizon, c.mean_exit_rate, c.ci95, c.oracle, c.within_ci, c.runs
        );
    }
    sink.csv("runs.csv", &runs)?;
    sink.csv("cells.csv", &cells)?;
    sink.json(
        "density.json",
        &serde_json::json!({ "oracle": oracle_rows, "cells": cells }),
    )?;
    let series: Vec<Series> = horizons
        .iter()
        .map(|&h| {
            let cs: Vec<&CellRow> = cells.iter().filter(|c| c.horizon == u64::from(h)).collect();
            Series {
                label: format!("h = {h}"),
                points: cs
                    .iter()
                    .map(|c| (c.variant as f64, c.mean_exit_rate))
                    .collect(),
                band: Some(cs.iter().map(|c| c.ci95).collect()),
            }
        })
        .collect();
    sink.svg(
        "density.svg",
        line_chart(
            "Exit rate under random exploration",
            "variant M_n",
            "exit rate",
            &series,
            None,
        ),
    )?;
    report_written(&sink);
    Ok(())
}

fn summarize(variants: &[(u64, Density)], horizons: &[u32], runs: &[RunRow]) -> Vec<CellRow> {
    let mut cells = Vec::new();
    for &(v, density) in variants {
        for &h in horizons {
            let rs: Vec<&RunRow> = runs
                .iter()
                .filter(|r| r.variant == v && r.horizon == u64::from(h))
                .collect();
            let rates: Vec<f64> = rs.iter().map(|r| r.exit_rate).collect();
            cells.push(CellRow {
                variant: v,
                density: density.to_string(),
                horizon: u64::from(h),
                runs: rs.len(),
                mean_exit_rate: mean(&rates),
                ci95: if rates.len() > 1 {
                    ci95_half_width(&rates)
                } else {
                    0.0
                },
                oracle: rs.first().map_or(0.0, |r| r.oracle),
                within_ci: rs.iter().filter(|r| r.within_ci).count(),
            });
        }
    }
    cells
}

#[derive(Debug, Clone, Serialize)]
struct ExploreRow {
    seed: u64,
    horizon: u32,
    total_steps: u64,
    episodes: u64,
    exits: u64,
    deaths: u64,
    truncations: u64,
    exit_rate: f64,
}

pub fn explore(g: &Global, a: &ExploreArgs) -> Result<(), CliError> {
    let seeds = a.seeds.clone().map_or_else(|| vec![g.seed], |l| l.0);
    #[derive(Serialize)]
    struct ExploreConfig<'a> {
        command: &'static str,
        version: &'static str,
        #[serde(flatten)]
        args: &'a ExploreArgs,
        resolved_seeds: &'a [u64],
    }
    let config = ExploreConfig {
        command: "explore",
        version: version(),
        args: a,
        resolved_seeds: &seeds,
    };
    let spec = load_map(&a.map)?;
    if a.horizon == 0 || a.steps == 0 {
        return Err(CliError::Validation(
            "--horizon and --steps must be positive".into(),
        ));
    }
    let rows: Vec<ExploreRow> = seeds
        .par_iter()
        .map(|&seed| {
            let s = random_explore(&spec, a.horizon, a.steps, seed);
            ExploreRow {
                seed,
                horizon: s.horizon,
                total_steps: s.total_steps,
                episodes: s.episodes,
                exits: s.exits,
                deaths: s.deaths,
                truncations: s.truncations,
                exit_rate: s.exit_rate,
            }
        })
        .collect();
    for r in &rows {
        println!(
            "seed {}: {} episodes, {} exits, {} deaths, {} truncations, exit rate {:.6}",
            r.seed, r.episodes, r.exits, r.deaths, r.truncations, r.exit_rate
        );
    }
    let mut sink = Sink::new(&g.out, &g.format, &config)?;
    sink.csv("explore.csv", &rows)?;
    sink.json("explore.json", &rows)?;
    report_written(&sink);
    Ok(())
}

pub fn report_written(sink: &Sink) {
    for p in sink.written() {
        println!("wrote {}", p.display());
    }
}
