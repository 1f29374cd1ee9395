//! Zero versus delayed incentive, measured on observed traces.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{CutReport, GraphError, InducedGraph};

/// One observed transition, keyed like the graph's vertices. `reward` is what
/// the learner actually received, which may include shaping on top of the
/// graph weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub src: String,
    pub action: String,
    pub dst: String,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Incentive {
    /// Some cut edge already pays more than the base reward.
    Immediate,
    /// Cut traversals are never followed by a reward beyond the graph weights.
    ZeroIncentive,
    /// Extra reward arrives this many transitions after the first cut
    /// traversal (histogram over traces).
    Delayed { histogram: BTreeMap<usize, usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncentiveReport {
    pub incentive: Incentive,
    pub traces_crossing: usize,
}

/// Classifies a bottleneck. When the cut is zero-incentive in the graph, each
/// trace is scanned from its first cut traversal for the first transition whose
/// received reward exceeds the graph weight of that edge; the gap in
/// transitions is the delay.
pub fn classify_incentive(
    g: &InducedGraph,
    cut: &CutReport,
    traces: &[Vec<TraceStep>],
) -> Result<IncentiveReport, GraphError> {
    if !cut.is_zid {
        return Ok(IncentiveReport {
            incentive: Incentive::Immediate,
            traces_crossing: 0,
        });
    }
    let key = |s: &str, a: &str, d: &str| (s.to_string(), a.to_string(), d.to_string());
    let weights: HashMap<(String, String, String), f64> = g
        .edges
        .iter()
        .map(|e| (key(&g.vertices[e.src], &e.action, &g.vertices[e.dst]), e.w))
        .collect();
    let cut_keys: Vec<(String, String, String)> = cut
        .cut_edges
        .iter()
        .map(|e| key(&g.vertices[e.src], &e.action, &g.vertices[e.dst]))
        .collect();

    let mut histogram = BTreeMap::new();
    let mut crossing = 0;
    for trace in traces {
        let Some(first) = trace
            .iter()
            .position(|t| cut_keys.contains(&key(&t.src, &t.action, &t.dst)))
        else {
            continue;
        };
        crossing += 1;
        let delay = trace[first..].iter().position(|t| {
            let w = weights
                .get(&key(&t.src, &t.action, &t.dst))
                .copied()
                .unwrap_or(g.base_reward);
            t.reward - w > 1e-12
        });
        if let Some(k) = delay {
            *histogram.entry(k).or_insert(0) += 1;
        }
    }
    if crossing == 0 {
        return Err(GraphError::InsufficientTraces);
    }
    let incentive = if histogram.is_empty() {
        Incentive::ZeroIncentive
    } else {
        Incentive::Delayed { histogram }
    };
    Ok(IncentiveReport {
        incentive,
        traces_crossing: crossing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdpgraph::{min_cut_ssb, EdgeRecord};

    fn chain(w_cut: f64) -> InducedGraph {
        InducedGraph {
            vertices: vec!["a".into(), "b".into(), "c".into()],
            edges: vec![
                EdgeRecord {
                    src: 0,
                    action: "go".into(),
                    dst: 1,
                    w: w_cut,
                },
                EdgeRecord {
                    src: 1,
                    action: "go".into(),
                    dst: 2,
                    w: 1.0,
                },
                EdgeRecord {
                    src: 1,
                    action: "go2".into(),
                    dst: 2,
                    w: 1.0,
                },
            ],
            initial: vec![0],
            goals: vec![2],
            base_reward: 0.0,
        }
    }

    fn step(s: &str, a: &str, d: &str, r: f64) -> TraceStep {
        TraceStep {
            src: s.into(),
            action: a.into(),
            dst: d.into(),
            reward: r,
        }
    }

    #[test]
    fn rewarded_cut_is_immediate() {
        let g = chain(0.5);
        let cut = min_cut_ssb(&g).unwrap();
        assert!(!cut.is_zid);
        let r = classify_incentive(&g, &cut, &[]).unwrap();
        assert_eq!(r.incentive, Incentive::Immediate);
    }

    #[test]
    fn unshaped_traces_are_zero_incentive() {
        let g = chain(0.0);
        let cut = min_cut_ssb(&g).unwrap();
        let traces = vec![vec![step("a", "go", "b", 0.0), step("b", "go", "c", 1.0)]];
        let r = classify_incentive(&g, &cut, &traces).unwrap();
        assert_eq!(r.incentive, Incentive::ZeroIncentive);
        assert_eq!(r.traces_crossing, 1);
    }

    #[test]
    fn extra_reward_after_crossing_is_delayed() {
        let g = chain(0.0);
        let cut = min_cut_ssb(&g).unwrap();
        let traces = vec![vec![step("a", "go", "b", 0.0), step("b", "go", "c", 2.0)]];
        let r = classify_incentive(&g, &cut, &traces).unwrap();
        assert_eq!(
            r.incentive,
            Incentive::Delayed {
                histogram: BTreeMap::from([(1, 1)])
            }
        );
    }

    #[test]
    fn traces_must_cross() {
        let g = chain(0.0);
        let cut = min_cut_ssb(&g).unwrap();
        let traces = vec![vec![step("a", "stay", "a", 0.0)]];
        assert_eq!(
            classify_incentive(&g, &cut, &traces),
            Err(GraphError::InsufficientTraces)
        );
    }
}
