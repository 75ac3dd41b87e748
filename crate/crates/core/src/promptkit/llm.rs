//! A planner that asks a completion backend for every decision.

use super::{parse_completion, render_prompt, robot_turn, CompletionBackend, Speaker, Transcript, STOP};
use crate::monitor::{self, MonitorReport};
use crate::planner::{Exchange, Planner, PlannerError, PlannerOutput};
use crate::tasks::EpisodeSpec;

pub struct LlmPlanner<B> {
    spec: EpisodeSpec,
    transcript: Transcript,
    backend: B,
    log_prompts: bool,
}

impl<B: CompletionBackend> LlmPlanner<B> {
    pub fn new(spec: &EpisodeSpec, backend: B) -> Self {
        Self { spec: spec.clone(), transcript: Transcript::new(spec), backend, log_prompts: false }
    }

    /// Keep full prompt text in each traced exchange.
    pub fn with_prompt_log(mut self, on: bool) -> Self {
        self.log_prompts = on;
        self
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }
}

impl<B: CompletionBackend> Planner for LlmPlanner<B> {
    fn name(&self) -> &str {
        "llm"
    }

    fn decide(&mut self, report: Option<&MonitorReport>) -> Result<PlannerOutput, PlannerError> {
        let prompt = render_prompt(&self.spec, &self.transcript, report);
        if let Some(r) = report {
            self.transcript
                .push(Speaker::Vlm, monitor::render_report(r))
                .map_err(|e| PlannerError::UnparseableReply(e.to_string()))?;
        }
        let reply = self.backend.complete(&prompt, &STOP).map_err(|e| PlannerError::Backend(e.to_string()))?;
        let decision = parse_completion(&reply)?;
        self.transcript
            .push(Speaker::Robot, robot_turn(&decision, None))
            .map_err(|e| PlannerError::UnparseableReply(e.to_string()))?;
        let exchange = Exchange { prompt: self.log_prompts.then_some(prompt), reply };
        Ok(PlannerOutput { decision, verdict: None, exchange: Some(exchange) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_episode, Terminal};
    use crate::monitor::NoiseModel;
    use crate::perturb::PerturbConfig;
    use crate::planner::Decision;
    use crate::promptkit::ScriptedBackend;
    use crate::tasks::{generate_episode, TaskKind, TaskSizes};

    fn spec() -> EpisodeSpec {
        generate_episode(TaskKind::PackB, 3, TaskSizes::default(), PerturbConfig::default(), 0.0).unwrap()
    }

    #[test]
    fn nominal_replies_finish_the_task() {
        let s = spec();
        let mut replies: Vec<String> = s.nominal_plan().unwrap().iter().map(|i| i.to_string()).collect();
        replies.push("done".into());
        let mut p = LlmPlanner::new(&s, ScriptedBackend::new(replies)).with_prompt_log(true);
        let rec = run_episode(&s, &mut p, &NoiseModel::oracle(), 1, 0);
        assert_eq!(rec.terminal, Terminal::Done);
        assert!(rec.goal_satisfied);
        assert!(rec.steps[0].exchange.as_ref().unwrap().prompt.is_some());
        p.transcript().validate().unwrap();
        assert_eq!(p.backend().remaining(), 0);
    }

    #[test]
    fn garbage_reply_fails_the_episode() {
        let s = spec();
        let mut p = LlmPlanner::new(&s, ScriptedBackend::new(["let me think"]));
        assert!(matches!(p.decide(None), Err(PlannerError::UnparseableReply(_))));
        let rec = run_episode(&s, &mut LlmPlanner::new(&s, ScriptedBackend::new(["hmm"])), &NoiseModel::oracle(), 1, 0);
        assert_eq!(rec.terminal, Terminal::Failed);
        let mut p = LlmPlanner::new(&s, ScriptedBackend::new(Vec::<String>::new()));
        assert!(matches!(p.decide(None), Err(PlannerError::Backend(_))));
        let mut p = LlmPlanner::new(&s, ScriptedBackend::new(["alert"]));
        assert_eq!(p.decide(None).unwrap().decision, Decision::Alert);
    }
}
