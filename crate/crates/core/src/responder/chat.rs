use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{respond, Grounding, Mode, ResponderConfig, ResponderError};
use crate::dsl::Program;
use crate::engine::{Scene, TraceEvent, TriggeredStatement};
use crate::llm::LlmClient;
use crate::oracles::ConditionOracle;

/// Turns of history shown verbatim to the model.
pub const TRANSCRIPT_WINDOW: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub index: u64,
    pub user_text: String,
    pub response: String,
    pub triggered: Vec<TriggeredStatement>,
    #[serde(with = "crate::engine::trace_json")]
    pub trace: Vec<TraceEvent>,
}

/// A live conversation with one codified character. Each turn becomes its
/// own scene, built from the recent transcript plus the new user line.
#[derive(Clone, Debug)]
pub struct ChatSession {
    pub id: String,
    pub character: String,
    pub version: u64,
    programs: Vec<Program>,
    turns: Vec<ChatTurn>,
}

impl ChatSession {
    pub fn new(id: impl Into<String>, character: impl Into<String>, version: u64, programs: Vec<Program>) -> Self {
        Self {
            id: id.into(),
            character: character.into(),
            version,
            programs,
            turns: Vec::new(),
        }
    }

    pub fn transcript(&self) -> &[ChatTurn] {
        &self.turns
    }

    pub fn scene_for(&self, user_text: &str) -> Scene {
        let mut context = String::new();
        let start = self.turns.len().saturating_sub(TRANSCRIPT_WINDOW);
        for t in &self.turns[start..] {
            context.push_str(&format!("User: {}\n{}: {}\n", t.user_text, self.character, t.response));
        }
        context.push_str(&format!("User: {user_text}"));
        Scene::live(format!("{}-t{}", self.id, self.turns.len()), &self.character, context)
    }

    pub fn turn(
        &mut self,
        user_text: &str,
        oracle: &dyn ConditionOracle,
        client: &LlmClient,
        config: &ResponderConfig,
    ) -> Result<&ChatTurn, ResponderError> {
        if user_text.trim().is_empty() {
            return Err(ResponderError::Precondition("user_text must be non-empty".into()));
        }
        let scene = self.scene_for(user_text);
        let record = respond(
            &scene,
            Mode::Codified,
            &Grounding::codified(&self.programs, oracle),
            config,
            client,
            0,
        )?;
        self.turns.push(ChatTurn {
            index: self.turns.len() as u64,
            user_text: user_text.to_string(),
            response: record.response,
            triggered: record.triggered,
            trace: record.trace,
        });
        Ok(self.turns.last().unwrap())
    }

    /// One JSON object per turn.
    pub fn write_transcript(&self, path: &Path) -> std::io::Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for t in &self.turns {
            serde_json::to_writer(&mut out, t)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}
