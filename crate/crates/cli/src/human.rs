//! A human seat driven over line-oriented text streams (stdin/stdout in the CLI).

use std::io::{BufRead, Write};

use orgsim_core::agents::{parse_comm_reply, parse_vote, CommDecision};
use orgsim_core::orchestrator::{HumanPort, HumanTurn, TurnPhase};
use orgsim_core::world::{Action, AgentId};

pub struct LineHuman<R, W> {
    input: R,
    output: W,
}

impl<R: BufRead + Send, W: Write + Send> LineHuman<R, W> {
    pub fn new(input: R, output: W) -> Self {
        LineHuman { input, output }
    }

    fn show(&mut self, turn: &HumanTurn) {
        let _ = writeln!(self.output, "\n=== Agent_{} step {} ({:?}) ===", turn.agent, turn.step, turn.phase);
        let _ = writeln!(self.output, "{}", turn.prompt.user_text);
    }

    /// Lines up to a blank line or end of input; `None` at end of input.
    fn block(&mut self) -> Option<String> {
        let mut text = String::new();
        loop {
            let mut line = String::new();
            match self.input.read_line(&mut line) {
                Ok(0) | Err(_) => return (!text.is_empty()).then_some(text),
                Ok(_) if line.trim().is_empty() => {
                    if text.is_empty() {
                        continue;
                    }
                    return Some(text);
                }
                Ok(_) => text.push_str(&line),
            }
        }
    }

    fn message(&mut self, turn: &HumanTurn) -> Option<(CommDecision, Option<AgentId>)> {
        self.show(turn);
        let _ = writeln!(
            self.output,
            "Reply with `SEND TO ALL: ...`, `SEND TO Agent_k: ...` lines or `SILENCE`{}; end with an empty line.",
            if turn.phase == TurnPhase::Elect { ", plus `VOTE: Agent_k`" } else { "" }
        );
        let _ = self.output.flush();
        loop {
            let text = self.block()?;
            let (decision, warnings) = parse_comm_reply(&text, &turn.roster, turn.agent);
            let vote = (turn.phase == TurnPhase::Elect).then(|| parse_vote(&text)).flatten();
            let silent = text.trim().eq_ignore_ascii_case("silence");
            for w in &warnings {
                let _ = writeln!(self.output, "note: {w}");
            }
            if decision != CommDecision::Silence || silent || vote.is_some() {
                return Some((decision, vote));
            }
            let _ = writeln!(self.output, "Nothing to send; type SILENCE to stay quiet.");
        }
    }
}

impl<R: BufRead + Send, W: Write + Send> HumanPort for LineHuman<R, W> {
    fn comm_turn(&mut self, turn: &HumanTurn) -> Option<CommDecision> {
        self.message(turn).map(|(d, _)| d)
    }

    fn election_turn(&mut self, turn: &HumanTurn) -> Option<(CommDecision, Option<AgentId>)> {
        self.message(turn)
    }

    fn action_turn(&mut self, turn: &HumanTurn) -> Option<Action> {
        self.show(turn);
        for (i, a) in turn.available_actions.iter().enumerate() {
            let _ = writeln!(self.output, "  {:>2}. {}", i + 1, a.label);
        }
        loop {
            let _ = write!(self.output, "action> ");
            let _ = self.output.flush();
            let mut line = String::new();
            if self.input.read_line(&mut line).ok()? == 0 {
                return None;
            }
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Ok(n) = line.parse::<usize>() {
                if let Some(a) = n.checked_sub(1).and_then(|i| turn.available_actions.get(i)) {
                    return Some(a.action.clone());
                }
            }
            match turn.check_action(line) {
                Ok(a) => return Some(a),
                Err(e) => {
                    let _ = writeln!(self.output, "{e}");
                }
            }
        }
    }
}
