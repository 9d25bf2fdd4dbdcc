//! Runs one frame of a chain against a policy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{build_prompt, ChainConfig, ChainError, ExecutionPlan, FrameContext};
use crate::expert::{spec_for, AnswerKind, QaPair};
use crate::policy::{ImagePayload, Policy, PolicyError, PolicyRequest};

/// Transport attempts per question before giving up.
pub const MAX_ATTEMPTS: u32 = 3;

#[derive(Debug, Error)]
pub enum ExecError {
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("no expert answer for question {0} in this frame")]
    MissingGt(u32),
    #[error("question {qid} failed after {attempts} attempt(s): {source}")]
    Policy { qid: u32, attempts: u32, source: PolicyError },
}

/// What the policy sees besides the prompt.
#[derive(Debug, Clone, Default)]
pub struct FrameInputs {
    pub images: Vec<ImagePayload>,
    pub text: Option<String>,
}

impl FrameInputs {
    fn reference_lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.images.is_empty() {
            out.push("Visual input: bird's-eye-view image <image_0> of the current frame.".to_string());
        }
        if let Some(t) = &self.text {
            out.push("Scene description:".to_string());
            out.push(t.trim_end().to_string());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedAnswer {
    pub qid: u32,
    pub answer: String,
    /// Filled from the expert answer without asking the policy.
    pub from_gt: bool,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameOutcome {
    pub answers: Vec<PredictedAnswer>,
    pub policy_calls: u32,
}

impl FrameOutcome {
    pub fn answer(&self, qid: u32) -> Option<&str> {
        self.answers.iter().find(|a| a.qid == qid).map(|a| a.answer.as_str())
    }
}

fn answer_kind(qa: &QaPair) -> AnswerKind {
    spec_for(qa.qid).map_or(AnswerKind::FreeText, |s| s.answer_kind)
}

/// Executes `plan` in order. Starts by rolling `ctx` over to this frame.
#[allow(clippy::too_many_arguments)]
pub fn execute_frame(
    cfg: &ChainConfig,
    plan: &ExecutionPlan,
    ctx: &mut FrameContext,
    gt: &[QaPair],
    inputs: &FrameInputs,
    policy: &mut dyn Policy,
    episode_id: &str,
    frame_index: u64,
) -> Result<FrameOutcome, ExecError> {
    ctx.next_frame();
    let refs = inputs.reference_lines();
    let mut out = FrameOutcome::default();
    for &qid in &plan.order {
        let qa = gt.iter().find(|q| q.qid == qid).ok_or(ExecError::MissingGt(qid))?;
        if plan.skip_inference.contains(&qid) {
            ctx.current.insert(qid, qa.gt_answer_text.clone());
            out.answers.push(PredictedAnswer { qid, answer: qa.gt_answer_text.clone(), from_gt: true, attempts: 0 });
            continue;
        }
        let kind = answer_kind(qa);
        let prompt = build_prompt(cfg, ctx, qid, &qa.question_text, &refs, kind == AnswerKind::KeyValue)?;
        let request = PolicyRequest {
            episode_id: episode_id.to_string(),
            frame_index,
            qid,
            question: qa.question_text.clone(),
            prompt,
            answer_kind: kind,
            images: inputs.images.clone(),
            text_input: inputs.text.clone(),
        };
        let mut attempts = 0;
        let answer = loop {
            attempts += 1;
            out.policy_calls += 1;
            match policy.answer(&request, Some(qa)) {
                Ok(a) => break a,
                Err(PolicyError::Transport(e)) if attempts < MAX_ATTEMPTS => {
                    log::warn!("question {qid}, attempt {attempts}: {e}; retrying");
                }
                Err(source) => return Err(ExecError::Policy { qid, attempts, source }),
            }
        };
        ctx.current.insert(qid, answer.clone());
        out.answers.push(PredictedAnswer { qid, answer, from_gt: false, attempts });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expert::{DriveCommenter, ExpertConfig, MANDATED_QIDS};
    use crate::policy::GtEcho;
    use crate::world::bundled_scenario;

    fn frame_gt() -> Vec<QaPair> {
        let w = bundled_scenario("FollowLeadVehicle", 0).unwrap();
        DriveCommenter::new(ExpertConfig::default()).annotate_frame(&w, &MANDATED_QIDS).unwrap()
    }

    struct Flaky {
        fails: u32,
        calls: u32,
    }

    impl Policy for Flaky {
        fn name(&self) -> &str {
            "flaky"
        }
        fn answer(&mut self, _: &PolicyRequest, _: Option<&QaPair>) -> Result<String, PolicyError> {
            self.calls += 1;
            if self.calls <= self.fails {
                Err(PolicyError::Transport("refused".into()))
            } else {
                Ok(String::new())
            }
        }
    }

    #[test]
    fn default_chain_calls_policy_eight_times() {
        let cfg = ChainConfig::default();
        let plan = cfg.plan();
        let gt = frame_gt();
        let mut ctx = FrameContext::default();
        let out = execute_frame(&cfg, &plan, &mut ctx, &gt, &FrameInputs::default(), &mut GtEcho, "s", 0).unwrap();
        assert_eq!(out.policy_calls, 8);
        let q24 = out.answers.iter().find(|a| a.qid == 24).unwrap();
        assert!(q24.from_gt && q24.attempts == 0);
        for qa in &gt {
            assert_eq!(out.answer(qa.qid), Some(qa.gt_answer_text.as_str()));
        }
        assert!(ctx.previous.is_empty());
    }

    #[test]
    fn transport_failures_are_retried_then_reported() {
        let cfg = ChainConfig::default();
        let plan = cfg.plan();
        let gt = frame_gt();
        let mut p = Flaky { fails: 2, calls: 0 };
        let out = execute_frame(&cfg, &plan, &mut FrameContext::default(), &gt, &FrameInputs::default(), &mut p, "s", 0).unwrap();
        assert_eq!(out.answers[0].attempts, 3);
        assert_eq!(out.answer(19), Some(""));
        let mut p = Flaky { fails: 100, calls: 0 };
        match execute_frame(&cfg, &plan, &mut FrameContext::default(), &gt, &FrameInputs::default(), &mut p, "s", 0) {
            Err(ExecError::Policy { qid: 19, attempts: 3, .. }) => assert_eq!(p.calls, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn second_frame_inherits() {
        let cfg = ChainConfig::default();
        let plan = cfg.plan();
        let gt = frame_gt();
        let mut ctx = FrameContext::default();
        execute_frame(&cfg, &plan, &mut ctx, &gt, &FrameInputs::default(), &mut GtEcho, "s", 0).unwrap();
        execute_frame(&cfg, &plan, &mut ctx, &gt, &FrameInputs::default(), &mut GtEcho, "s", 5).unwrap();
        assert_eq!(ctx.previous.len(), 9);
    }
}
