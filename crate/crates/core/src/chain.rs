//! Graph-of-thought programs: which questions run, in what order, and whose
//! answers feed which prompts.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("chain document: {0}")]
    Parse(String),
    #[error("{section} key {key:?} is not a question id")]
    BadKey { section: &'static str, key: String },
    #[error("{section} references question {qid}, which is not in NODE")]
    UnknownQid { section: &'static str, qid: u32 },
    #[error("question {0} is listed twice in NODE")]
    DuplicateNode(u32),
    #[error("EDGE contains a cycle: {}", fmt_cycle(.0))]
    Cycle(Vec<u32>),
    #[error("question {qid} needs the current answer of {missing} first")]
    MissingPredecessor { qid: u32, missing: u32 },
}

fn fmt_cycle(c: &[u32]) -> String {
    c.iter().map(|q| q.to_string()).collect::<Vec<_>>().join(" -> ")
}

/// Document form, keyed exactly like the `CHAIN` block of a run configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawChain {
    #[serde(rename = "NODE")]
    pub nodes: Vec<u32>,
    #[serde(rename = "EDGE", default)]
    pub edges: BTreeMap<String, Vec<u32>>,
    #[serde(rename = "INHERIT", default)]
    pub inherit: BTreeMap<String, Vec<u32>>,
    #[serde(rename = "USE_GT", default)]
    pub use_gt: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainConfig {
    pub nodes: Vec<u32>,
    pub edges: BTreeMap<u32, Vec<u32>>,
    pub inherit: BTreeMap<u32, Vec<u32>>,
    pub use_gt: BTreeSet<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionPlan {
    pub order: Vec<u32>,
    pub skip_inference: BTreeSet<u32>,
}

pub const DEFAULT_CHAIN_JSON: &str = r#"{
    "NODE": [19, 15, 7, 24, 13, 47, 8, 43, 50],
    "EDGE": {
        "19": [24, 13, 8],
        "15": [7, 8],
        "7": [8],
        "24": [13, 47],
        "13": [47, 8, 43],
        "47": [8],
        "8": [43],
        "43": [50],
        "50": []
    },
    "INHERIT": {
        "19": [43, 7],
        "15": [7]
    },
    "USE_GT": [24]
}"#;

fn parse_key_map(section: &'static str, raw: &BTreeMap<String, Vec<u32>>) -> Result<BTreeMap<u32, Vec<u32>>, ChainError> {
    raw.iter()
        .map(|(k, v)| {
            k.trim()
                .parse::<u32>()
                .map(|q| (q, v.clone()))
                .map_err(|_| ChainError::BadKey { section, key: k.clone() })
        })
        .collect()
}

/// Accepts either the bare chain object or a document holding it under `CHAIN`.
pub fn parse_chain_json(doc: &str) -> Result<ChainConfig, ChainError> {
    let value: serde_json::Value = serde_json::from_str(doc).map_err(|e| ChainError::Parse(e.to_string()))?;
    let inner = value.get("CHAIN").cloned().unwrap_or(value);
    let raw: RawChain = serde_json::from_value(inner).map_err(|e| ChainError::Parse(e.to_string()))?;
    ChainConfig::from_raw(&raw)
}

impl Default for ChainConfig {
    fn default() -> Self {
        parse_chain_json(DEFAULT_CHAIN_JSON).expect("built-in chain is valid")
    }
}

impl ChainConfig {
    pub fn from_raw(raw: &RawChain) -> Result<Self, ChainError> {
        let mut seen = BTreeSet::new();
        for q in &raw.nodes {
            if !seen.insert(*q) {
                return Err(ChainError::DuplicateNode(*q));
            }
        }
        let edges = parse_key_map("EDGE", &raw.edges)?;
        let inherit = parse_key_map("INHERIT", &raw.inherit)?;
        let check = |section: &'static str, q: u32| {
            if seen.contains(&q) {
                Ok(())
            } else {
                Err(ChainError::UnknownQid { section, qid: q })
            }
        };
        for (k, vs) in &edges {
            check("EDGE", *k)?;
            for v in vs {
                check("EDGE", *v)?;
            }
        }
        for (k, vs) in &inherit {
            check("INHERIT", *k)?;
            for v in vs {
                check("INHERIT", *v)?;
            }
        }
        for q in &raw.use_gt {
            check("USE_GT", *q)?;
        }
        let cfg = Self {
            nodes: raw.nodes.clone(),
            edges,
            inherit,
            use_gt: raw.use_gt.iter().copied().collect(),
        };
        if let Some(cycle) = cfg.find_cycle() {
            return Err(ChainError::Cycle(cycle));
        }
        Ok(cfg)
    }

    pub fn to_raw(&self) -> RawChain {
        RawChain {
            nodes: self.nodes.clone(),
            edges: self.edges.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            inherit: self.inherit.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            use_gt: self.use_gt.iter().copied().collect(),
        }
    }

    fn successors(&self, q: u32) -> &[u32] {
        self.edges.get(&q).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Direct predecessors of `qid`, in NODE order.
    pub fn predecessors(&self, qid: u32) -> Vec<u32> {
        self.nodes
            .iter()
            .copied()
            .filter(|a| self.successors(*a).contains(&qid))
            .collect()
    }

    pub fn inherited(&self, qid: u32) -> &[u32] {
        self.inherit.get(&qid).map(|v| v.as_slice()).unwrap_or(&[])
    }

    fn find_cycle(&self) -> Option<Vec<u32>> {
        // 0 unvisited, 1 on stack, 2 done
        let mut state: BTreeMap<u32, u8> = self.nodes.iter().map(|q| (*q, 0)).collect();
        let mut stack: Vec<u32> = Vec::new();
        fn visit(cfg: &ChainConfig, q: u32, state: &mut BTreeMap<u32, u8>, stack: &mut Vec<u32>) -> Option<Vec<u32>> {
            state.insert(q, 1);
            stack.push(q);
            for &n in cfg.successors(q) {
                match state.get(&n).copied().unwrap_or(0) {
                    1 => {
                        let start = stack.iter().position(|x| *x == n).unwrap_or(0);
                        let mut cycle = stack[start..].to_vec();
                        cycle.push(n);
                        return Some(cycle);
                    }
                    0 => {
                        if let Some(c) = visit(cfg, n, state, stack) {
                            return Some(c);
                        }
                    }
                    _ => {}
                }
            }
            stack.pop();
            state.insert(q, 2);
            None
        }
        for &q in &self.nodes {
            if state[&q] == 0 {
                if let Some(c) = visit(self, q, &mut state, &mut stack) {
                    return Some(c);
                }
            }
        }
        None
    }

    /// Kahn scheduling that always emits the ready node listed earliest in NODE.
    pub fn plan(&self) -> ExecutionPlan {
        let mut indegree: BTreeMap<u32, usize> = self.nodes.iter().map(|q| (*q, 0)).collect();
        for q in &self.nodes {
            for s in self.successors(*q) {
                *indegree.get_mut(s).expect("validated") += 1;
            }
        }
        let mut done = BTreeSet::new();
        let mut order = Vec::with_capacity(self.nodes.len());
        while order.len() < self.nodes.len() {
            let next = self
                .nodes
                .iter()
                .copied()
                .find(|q| !done.contains(q) && indegree[q] == 0)
                .expect("acyclic chain always has a ready node");
            done.insert(next);
            order.push(next);
            for s in self.successors(next) {
                *indegree.get_mut(s).unwrap() -= 1;
            }
        }
        ExecutionPlan { order, skip_inference: self.use_gt.clone() }
    }
}

impl ExecutionPlan {
    /// Every edge runs forward and every node appears exactly once.
    pub fn respects(&self, cfg: &ChainConfig) -> bool {
        let pos: BTreeMap<u32, usize> = self.order.iter().enumerate().map(|(i, q)| (*q, i)).collect();
        pos.len() == cfg.nodes.len()
            && self.order.len() == cfg.nodes.len()
            && cfg.nodes.iter().all(|q| pos.contains_key(q))
            && cfg
                .edges
                .iter()
                .all(|(a, bs)| bs.iter().all(|b| pos[a] < pos[b]))
    }
}

/// Answers of the frame being executed and of the last executed frame.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameContext {
    pub current: BTreeMap<u32, String>,
    pub previous: BTreeMap<u32, String>,
}

impl FrameContext {
    /// Moves this frame's answers into `previous`.
    pub fn next_frame(&mut self) {
        self.previous = std::mem::take(&mut self.current);
    }
}

/// Prompt for `qid`: visual references, inherited answers, predecessor
/// answers, then the question.
pub fn build_prompt(
    cfg: &ChainConfig,
    ctx: &FrameContext,
    qid: u32,
    question_text: &str,
    inputs: &[String],
    wants_keys: bool,
) -> Result<String, ChainError> {
    let mut out = String::new();
    for line in inputs {
        out.push_str(line);
        out.push('\n');
    }
    let inherited: Vec<(u32, &String)> = cfg
        .inherited(qid)
        .iter()
        .filter_map(|q| ctx.previous.get(q).map(|a| (*q, a)))
        .collect();
    if !inherited.is_empty() {
        out.push_str("Context from the previous frame:\n");
        for (q, a) in inherited {
            out.push_str(&format!("Q{q}: {a}\n"));
        }
    }
    let preds = cfg.predecessors(qid);
    if !preds.is_empty() {
        out.push_str("Context from the current frame:\n");
        for q in preds {
            let a = ctx
                .current
                .get(&q)
                .ok_or(ChainError::MissingPredecessor { qid, missing: q })?;
            out.push_str(&format!("Q{q}: {a}\n"));
        }
    }
    out.push_str("Question: ");
    out.push_str(question_text);
    if wants_keys {
        out.push_str("\nPut the final answer at the end as DIRECTION_KEY, SPEED_KEY.");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(nodes: &[u32], edges: &[(u32, &[u32])]) -> RawChain {
        RawChain {
            nodes: nodes.to_vec(),
            edges: edges.iter().map(|(k, v)| (k.to_string(), v.to_vec())).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn default_chain_parses() {
        let c = ChainConfig::default();
        assert_eq!(c.nodes, vec![19, 15, 7, 24, 13, 47, 8, 43, 50]);
        assert_eq!(c.edges.len(), 9);
        assert_eq!(c.inherited(19), &[43, 7]);
        assert_eq!(c.inherited(15), &[7]);
        assert_eq!(c.use_gt, BTreeSet::from([24]));
        let p = c.plan();
        assert_eq!(p.order, vec![19, 15, 7, 24, 13, 47, 8, 43, 50]);
        assert!(p.respects(&c));
    }

    #[test]
    fn narrated_order_is_also_valid() {
        let c = ChainConfig::default();
        let alt = ExecutionPlan {
            order: vec![19, 24, 13, 47, 15, 7, 8, 43, 50],
            skip_inference: c.use_gt.clone(),
        };
        assert!(alt.respects(&c));
    }

    #[test]
    fn trivial_and_forced_orders() {
        let c = ChainConfig::from_raw(&raw(&[1], &[])).unwrap();
        assert_eq!(c.plan().order, vec![1]);
        let c = ChainConfig::from_raw(&raw(&[3, 2, 1], &[(1, &[2]), (2, &[3])])).unwrap();
        assert_eq!(c.plan().order, vec![1, 2, 3]);
    }

    #[test]
    fn two_cycle_rejected() {
        let e = ChainConfig::from_raw(&raw(&[1, 2], &[(1, &[2]), (2, &[1])])).unwrap_err();
        assert_eq!(e, ChainError::Cycle(vec![1, 2, 1]));
    }

    #[test]
    fn unknown_references_rejected() {
        let e = ChainConfig::from_raw(&raw(&[1], &[(1, &[9])])).unwrap_err();
        assert_eq!(e, ChainError::UnknownQid { section: "EDGE", qid: 9 });
        let mut r = raw(&[1], &[]);
        r.use_gt = vec![4];
        assert_eq!(ChainConfig::from_raw(&r).unwrap_err(), ChainError::UnknownQid { section: "USE_GT", qid: 4 });
        let doc = r#"{"NODE": [1], "EDGE": {"x": []}}"#;
        assert!(matches!(parse_chain_json(doc), Err(ChainError::BadKey { .. })));
    }

    #[test]
    fn prompts_embed_context() {
        let c = ChainConfig::default();
        let mut ctx = FrameContext::default();
        let first = build_prompt(&c, &ctx, 19, "Q?", &[], false).unwrap();
        assert!(!first.contains("previous frame"));
        ctx.current.insert(43, "slow down".into());
        ctx.current.insert(7, "30 km/h".into());
        ctx.next_frame();
        let p = build_prompt(&c, &ctx, 19, "Q?", &[], false).unwrap();
        assert!(p.contains("Q43: slow down") && p.contains("Q7: 30 km/h"));
        assert_eq!(
            build_prompt(&c, &ctx, 13, "Q?", &[], false).unwrap_err(),
            ChainError::MissingPredecessor { qid: 13, missing: 19 }
        );
        ctx.current.insert(19, "<a>".into());
        ctx.current.insert(24, "gt text".into());
        let p = build_prompt(&c, &ctx, 13, "Q?", &[], false).unwrap();
        assert!(p.contains("Q24: gt text"));
    }
}
