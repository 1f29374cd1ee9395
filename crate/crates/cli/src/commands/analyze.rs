use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use zidlab::mdpgraph::{
    enumerate_graph, has_winning_walk, min_cut_ssb, reward_density, CutReport, GraphError,
};

use super::{check_variant, load_map, version};
use crate::output::Sink;
use crate::{CliError, Global};

#[derive(Debug, Args, Serialize)]
pub struct AnalyzeArgs {
    pub map: PathBuf,
    /// Keep only the first N disabled moves of the map.
    #[arg(long)]
    pub variant: Option<usize>,
}

pub type EnumerateArgs = AnalyzeArgs;

#[derive(Debug, Serialize)]
struct Config<'a> {
    command: &'static str,
    version: &'static str,
    map: &'a PathBuf,
    variant: Option<usize>,
    state_cap: usize,
}

#[derive(Debug, Serialize)]
struct Report {
    vertices: usize,
    edges: usize,
    rewarded_edges: usize,
    density: String,
    density_value: f64,
    winning_walk: bool,
    cut: Option<CutReport>,
}

fn graph_for(g: &Global, a: &AnalyzeArgs) -> Result<zidlab::mdpgraph::InducedGraph, CliError> {
    let mut spec = load_map(&a.map)?;
    if let Some(n) = a.variant {
        check_variant(&spec, n)?;
        spec = spec.variant(n);
    }
    enumerate_graph(&spec, g.state_cap).map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn analyze(g: &Global, a: &AnalyzeArgs) -> Result<(), CliError> {
    let config = Config {
        command: "analyze",
        version: version(),
        map: &a.map,
        variant: a.variant,
        state_cap: g.state_cap,
    };
    let graph = graph_for(g, a)?;
    let density = reward_density(&graph).map_err(|e| CliError::Runtime(e.to_string()))?;
    let winning_walk = has_winning_walk(&graph);
    println!("map: {}", a.map.display());
    println!("states: {}", graph.vertices.len());
    println!("edges: {}", density.total);
    println!("rewarded edges: {}", density.rewarded);
    let (num, den) = density.reduced();
    println!("density: {density} = {num}/{den} ({:.6})", density.value());
    println!("winning walk: {}", if winning_walk { "yes" } else { "no" });
    let cut = match min_cut_ssb(&graph) {
        Ok(cut) => Some(cut),
        Err(GraphError::NoWinningWalk) => None,
        Err(e) => return Err(CliError::Runtime(e.to_string())),
    };
    if let Some(cut) = &cut {
        println!("cut size: {}", cut.cut_size);
        println!("cut edges:");
        for e in &cut.cut_edges {
            println!(
                "  {} -[{}]-> {}  w={}",
                graph.vertices[e.src], e.action, graph.vertices[e.dst], e.w
            );
        }
        println!("max cut weight: {}", cut.max_cut_weight);
        println!("is_zid: {}", cut.is_zid);
    }
    let report = Report {
        vertices: graph.vertices.len(),
        edges: density.total,
        rewarded_edges: density.rewarded,
        density: density.to_string(),
        density_value: density.value(),
        winning_walk,
        cut,
    };
    let mut sink = Sink::new(&g.out, &g.format, &config)?;
    sink.json("analyze.json", &report)?;
    if !winning_walk {
        return Err(CliError::Runtime(GraphError::NoWinningWalk.to_string()));
    }
    Ok(())
}

pub fn enumerate(g: &Global, a: &EnumerateArgs) -> Result<(), CliError> {
    let graph = graph_for(g, a)?;
    std::fs::create_dir_all(&g.out).map_err(|e| CliError::Runtime(e.to_string()))?;
    let path = g.out.join("graph.json");
    std::fs::write(&path, graph.to_json() + "\n")
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    println!(
        "{} states, {} edges -> {}",
        graph.vertices.len(),
        graph.edges.len(),
        path.display()
    );
    Ok(())
}
