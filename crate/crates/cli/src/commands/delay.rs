use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use rayon::prelude::*;
use serde::{Serialize, Serializer};
use zidlab::shaping::ShapingConfig;
use zidlab::stats::{ci95_half_width, mann_whitney_greater, mean, spearman_decreasing};
use zidlab::tabular::{q_learning, LearnSchedule};

use super::density::report_written;
use super::{load_map, version};
use crate::output::Sink;
use crate::svg::{line_chart, Series};
use crate::{parse_list, CliError, Global, List};

const ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Condition {
    NoShaping,
    Delay(u32),
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::NoShaping => f.write_str("no-shaping"),
            Condition::Delay(d) => write!(f, "d={d}"),
        }
    }
}

impl Serialize for Condition {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Comma-separated conditions: `none` for no shaping, delays as integers or
/// ranges, e.g. `none,0..4`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Conditions(pub Vec<Condition>);

impl FromStr for Conditions {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let mut out = Vec::new();
        for part in s.split(',') {
            let part = part.trim();
            if part == "none" {
                out.push(Condition::NoShaping);
                continue;
            }
            for d in parse_list(part)? {
                let d = u32::try_from(d).map_err(|_| format!("delay {d} is too large"))?;
                out.push(Condition::Delay(d));
            }
        }
        out.sort();
        out.dedup();
        if out.is_empty() {
            return Err("no conditions given".into());
        }
        Ok(Conditions(out))
    }
}

#[derive(Debug, Args, Serialize)]
pub struct DelayArgs {
    #[arg(long, default_value = "maps/delay.map")]
    pub map: PathBuf,
    /// Conditions: `none` and shaping delays, e.g. `none,0..4` or `0`.
    #[arg(long = "d", default_value = "none,0..4")]
    pub conditions: Conditions,
    #[arg(long, default_value = "1..20")]
    pub seeds: List,
    #[arg(long, default_value_t = 300_000)]
    pub steps: u64,
    #[arg(long, default_value_t = 100_000)]
    pub anneal_steps: u64,
    #[arg(long, default_value_t = 10_000)]
    pub eval_interval: u64,
    #[arg(long, default_value_t = 100)]
    pub eval_episodes: u32,
    #[arg(long, default_value_t = 28)]
    pub horizon: u32,
    /// Discount of the learner.
    #[arg(long, default_value_t = 0.95)]
    pub gamma: f64,
    /// Discount used in the shaping term.
    #[arg(long, default_value_t = 1.0)]
    pub shaping_gamma: f64,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    /// Shape with gamma * phi(s) - phi(s') instead of gamma * phi(s') - phi(s).
    #[arg(long)]
    pub strict_paper_sign: bool,
    /// Keep the crossing counters out of the learner's state key.
    #[arg(long)]
    pub hidden_counters: bool,
}

#[derive(Debug, Serialize)]
struct Config<'a> {
    command: &'static str,
    version: &'static str,
    learner: &'static str,
    #[serde(flatten)]
    args: &'a DelayArgs,
}

#[derive(Debug, Clone, Serialize)]
struct CurveRow {
    condition: Condition,
    seed: u64,
    train_step: u64,
    exit_rate: f64,
}

#[derive(Debug, Clone, Serialize)]
struct SummaryRow {
    condition: Condition,
    seed: u64,
    auc: f64,
    final_rate: f64,
    steps_to_90: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
struct BaselineComparison {
    condition: Condition,
    mean_final: f64,
    baseline_mean_final: f64,
    u_statistic: f64,
    p_value: f64,
    significant: bool,
}

#[derive(Debug, Clone, Serialize)]
struct DelayTests {
    alpha: f64,
    mean_auc: Vec<(Condition, f64)>,
    mean_final: Vec<(Condition, f64)>,
    beats_baseline: Vec<BaselineComparison>,
    spearman_rho: Option<f64>,
    spearman_p_value: Option<f64>,
    auc_non_increasing: bool,
    ordering_significant: bool,
    all_beat_baseline: bool,
}

fn schedule(a: &DelayArgs) -> LearnSchedule {
    LearnSchedule {
        total_steps: a.steps,
        eps_start: 1.0,
        eps_end: 0.05,
        eps_anneal_steps: a.anneal_steps,
        gamma: a.gamma,
        learning_rate: a.learning_rate,
        eval_interval: a.eval_interval,
        eval_episodes: a.eval_episodes,
        horizon: a.horizon,
        observe_counters: !a.hidden_counters,
    }
}

fn validate(a: &DelayArgs) -> Result<(), CliError> {
    let bad = |m: &str| Err(CliError::Validation(m.into()));
    if !(a.gamma > 0.0 && a.gamma < 1.0) {
        return bad("--gamma must lie in (0, 1)");
    }
    if !(a.learning_rate > 0.0 && a.learning_rate <= 1.0) {
        return bad("--learning-rate must lie in (0, 1]");
    }
    if a.steps == 0
        || a.eval_interval == 0
        || a.eval_episodes == 0
        || a.horizon == 0
        || a.anneal_steps == 0
    {
        return bad("step counts, intervals and the horizon must be positive");
    }
    Ok(())
}

pub fn delay_experiment(g: &Global, a: &DelayArgs) -> Result<(), CliError> {
    validate(a)?;
    let config = Config {
        command: "delay-experiment",
        version: version(),
        learner: "tabular joint-action Q-learning",
        args: a,
    };
    let spec = load_map(&a.map)?;
    let sched = schedule(a);
    let mut shaping = Vec::new();
    for &c in &a.conditions.0 {
        shaping.push(match c {
            Condition::NoShaping => None,
            Condition::Delay(d) => {
                let mut cfg = ShapingConfig::new(d, a.shaping_gamma)
                    .map_err(|e| CliError::Validation(e.to_string()))?;
                cfg.strict_paper_sign = a.strict_paper_sign;
                Some(cfg)
            }
        });
    }
    let tasks: Vec<(usize, u64)> = (0..shaping.len())
        .flat_map(|i| a.seeds.0.iter().map(move |&s| (i, s)))
        .collect();
    let results: Vec<_> = tasks
        .par_iter()
        .map(|&(i, seed)| {
            let (_, curve) = q_learning(&spec, shaping[i].as_ref(), &sched, seed);
            (a.conditions.0[i], seed, curve)
        })
        .collect();

    let mut curves = Vec::new();
    let mut summary = Vec::new();
    for (condition, seed, curve) in &results {
        for p in &curve.points {
            curves.push(CurveRow {
                condition: *condition,
                seed: *seed,
                train_step: p.train_step,
                exit_rate: p.exit_rate,
            });
        }
        summary.push(SummaryRow {
            condition: *condition,
            seed: *seed,
            auc: curve.auc(),
            final_rate: curve.final_rate(),
            steps_to_90: curve.steps_to(0.9),
        });
    }
    let tests = evaluate(&a.conditions.0, &summary);
    print_tests(&tests);

    let mut sink = Sink::new(&g.out, &g.format, &config)?;
    sink.csv("curves.csv", &curves)?;
    sink.csv("summary.csv", &summary)?;
    sink.json("delay.json", &tests)?;
    let series: Vec<Series> = a
        .conditions
        .0
        .iter()
        .map(|&c| {
            let mut steps: Vec<u64> = curves
                .iter()
                .filter(|r| r.condition == c)
                .map(|r| r.train_step)
                .collect();
            steps.sort_unstable();
            steps.dedup();
            let stats: Vec<(f64, f64, f64)> = steps
                .iter()
                .map(|&t| {
                    let v: Vec<f64> = curves
                        .iter()
                        .filter(|r| r.condition == c && r.train_step == t)
                        .map(|r| r.exit_rate)
                        .collect();
                    let h = if v.len() > 1 {
                        ci95_half_width(&v)
                    } else {
                        0.0
                    };
                    (t as f64, mean(&v), h)
                })
                .collect();
            Series {
                label: c.to_string(),
                points: stats.iter().map(|s| (s.0, s.1)).collect(),
                band: Some(stats.iter().map(|s| s.2).collect()),
            }
        })
        .collect();
    sink.svg(
        "delay.svg",
        line_chart(
            "Exit rate during training",
            "training step",
            "exit rate",
            &series,
            Some((0.0, 1.0)),
        ),
    )?;
    report_written(&sink);
    Ok(())
}

fn evaluate(conditions: &[Condition], summary: &[SummaryRow]) -> DelayTests {
    let of = |c: Condition, f: fn(&SummaryRow) -> f64| -> Vec<f64> {
        summary.iter().filter(|r| r.condition == c).map(f).collect()
    };
    let mean_auc: Vec<(Condition, f64)> = conditions
        .iter()
        .map(|&c| (c, mean(&of(c, |r| r.auc))))
        .collect();
    let mean_final: Vec<(Condition, f64)> = conditions
        .iter()
        .map(|&c| (c, mean(&of(c, |r| r.final_rate))))
        .collect();
    let delays: Vec<Condition> = conditions
        .iter()
        .copied()
        .filter(|c| matches!(c, Condition::Delay(_)))
        .collect();

    let mut beats_baseline = Vec::new();
    if conditions.contains(&Condition::NoShaping) {
        let base = of(Condition::NoShaping, |r| r.final_rate);
        for &c in &delays {
            let finals = of(c, |r| r.final_rate);
            let t = mann_whitney_greater(&finals, &base);
            beats_baseline.push(BaselineComparison {
                condition: c,
                mean_final: mean(&finals),
                baseline_mean_final: mean(&base),
                u_statistic: t.statistic,
                p_value: t.p_value,
                significant: t.p_value < ALPHA,
            });
        }
    }

    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for r in summary {
        if let Condition::Delay(d) = r.condition {
            xs.push(f64::from(d));
            ys.push(r.auc);
        }
    }
    let spearman = (delays.len() > 1).then(|| spearman_decreasing(&xs, &ys));
    let delay_aucs: Vec<f64> = mean_auc
        .iter()
        .filter(|(c, _)| matches!(c, Condition::Delay(_)))
        .map(|m| m.1)
        .collect();
    DelayTests {
        alpha: ALPHA,
        auc_non_increasing: delay_aucs.windows(2).all(|w| w[1] <= w[0]),
        ordering_significant: spearman.is_some_and(|t| t.p_value < ALPHA),
        all_beat_baseline: !beats_baseline.is_empty()
            && beats_baseline.iter().all(|b| b.significant),
        spearman_rho: spearman.map(|t| t.statistic),
        spearman_p_value: spearman.map(|t| t.p_value),
        mean_auc,
        mean_final,
        beats_baseline,
    }
}

fn print_tests(t: &DelayTests) {
    for ((c, auc), (_, fin)) in t.mean_auc.iter().zip(&t.mean_final) {
        println!("{c:<11} mean AUC {auc:.4}  mean final exit rate {fin:.4}");
    }
    for b in &t.beats_baseline {
        println!(
            "{} > no-shaping on final exit rate: U = {:.1}, p = {:.4} ({})",
            b.condition,
            b.u_statistic,
            b.p_value,
            if b.significant {
                "significant"
            } else {
                "not significant"
            }
        );
    }
    if let (Some(rho), Some(p)) = (t.spearman_rho, t.spearman_p_value) {
        println!("AUC against d: Spearman rho = {rho:.4}, one-sided p = {p:.4}");
    }
}
