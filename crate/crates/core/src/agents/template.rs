//! `${NAME}` placeholder templates with a `[system]` and a `[user]` section.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template `{template}` references unbound placeholder `{name}`")]
    Unbound { template: String, name: String },
    #[error("template `{0}` is missing its [system] or [user] section")]
    MissingSection(String),
    #[error("unterminated placeholder in template `{0}`")]
    Unterminated(String),
    #[error("template `{template}` uses `{name}`, which is not provided for that role")]
    UnknownPlaceholder { template: String, name: String },
    #[error("failed to read template {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Section {
    pieces: Vec<Piece>,
}

impl Section {
    fn parse(name: &str, text: &str) -> Result<Self, TemplateError> {
        let mut pieces = Vec::new();
        let mut rest = text;
        while let Some(start) = rest.find("${") {
            if start > 0 {
                pieces.push(Piece::Text(rest[..start].to_string()));
            }
            let after = &rest[start + 2..];
            let end = after
                .find('}')
                .ok_or_else(|| TemplateError::Unterminated(name.to_string()))?;
            pieces.push(Piece::Slot(after[..end].to_string()));
            rest = &after[end + 1..];
        }
        if !rest.is_empty() {
            pieces.push(Piece::Text(rest.to_string()));
        }
        Ok(Section { pieces })
    }

    fn render(
        &self,
        template: &str,
        values: &BTreeMap<String, String>,
    ) -> Result<String, TemplateError> {
        let mut out = String::new();
        for piece in &self.pieces {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => {
                    let value = values.get(name).ok_or_else(|| TemplateError::Unbound {
                        template: template.to_string(),
                        name: name.clone(),
                    })?;
                    // Values come from model output; keep them from smuggling markers in.
                    out.push_str(&value.replace("${", "$ {"));
                }
            }
        }
        Ok(out)
    }
}

/// A prompt template: system text plus user text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    name: String,
    system: Section,
    user: Section,
}

impl Template {
    pub fn parse(name: &str, text: &str) -> Result<Self, TemplateError> {
        let sys_at = text
            .find("[system]\n")
            .ok_or_else(|| TemplateError::MissingSection(name.to_string()))?;
        let user_at = text
            .find("\n[user]\n")
            .ok_or_else(|| TemplateError::MissingSection(name.to_string()))?;
        if user_at < sys_at {
            return Err(TemplateError::MissingSection(name.to_string()));
        }
        let system = &text[sys_at + "[system]\n".len()..user_at];
        let user = &text[user_at + "\n[user]\n".len()..];
        Ok(Template {
            name: name.to_string(),
            system: Section::parse(name, system)?,
            user: Section::parse(name, user)?,
        })
    }

    pub fn placeholders(&self) -> BTreeSet<String> {
        self.system
            .pieces
            .iter()
            .chain(&self.user.pieces)
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(s.clone()),
                Piece::Text(_) => None,
            })
            .collect()
    }

    /// Render `(system, user)`; every referenced placeholder must be bound.
    pub fn render(
        &self,
        values: &BTreeMap<String, String>,
    ) -> Result<(String, String), TemplateError> {
        Ok((
            self.system.render(&self.name, values)?,
            self.user.render(&self.name, values)?,
        ))
    }
}

/// The templates used by every prompt-driven role.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    pub communicator: Template,
    pub actor: Template,
    pub election: Template,
    pub critic: Template,
    pub coordinator: Template,
    pub classifier: Template,
}

const DEFAULTS: [(&str, &str); 6] = [
    ("communicator", include_str!("../../templates/communicator.txt")),
    ("actor", include_str!("../../templates/actor.txt")),
    ("election", include_str!("../../templates/election.txt")),
    ("critic", include_str!("../../templates/critic.txt")),
    ("coordinator", include_str!("../../templates/coordinator.txt")),
    ("classifier", include_str!("../../templates/classifier.txt")),
];

const AGENT_SLOTS: &[&str] = &[
    "AGENT_NAME",
    "TEAM_SIZE",
    "TEAMMATES",
    "ORGANIZATION_INSTRUCTION",
    "GOAL",
    "PROGRESS",
    "OBSERVATION",
    "AVAILABLE_ACTIONS",
    "DIALOGUE_HISTORY",
    "ACTION_HISTORY",
    "ELECTION_DIRECTIVE",
];

/// Placeholders each role binds when rendering.
fn role_slots(role: &str) -> Vec<&'static str> {
    match role {
        "communicator" | "actor" => AGENT_SLOTS.to_vec(),
        "election" => {
            let mut v = AGENT_SLOTS.to_vec();
            v.push("CURRENT_LEADER");
            v
        }
        "critic" => vec!["TEAM", "GOAL", "ORGANIZATION_INSTRUCTION", "TRAJECTORIES"],
        "coordinator" => vec!["TEAM", "GOAL", "INSTRUCTION_EXAMPLES"],
        _ => vec!["DIALOGUE"],
    }
}

fn check_role(role: &str, t: &Template) -> Result<(), TemplateError> {
    let allowed = role_slots(role);
    match t.placeholders().into_iter().find(|p| !allowed.contains(&p.as_str())) {
        Some(name) => Err(TemplateError::UnknownPlaceholder {
            template: role.to_string(),
            name,
        }),
        None => Ok(()),
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let get = |n: &str| {
            let text = DEFAULTS.iter().find(|(k, _)| *k == n).unwrap().1;
            Template::parse(n, text).expect("built-in template parses")
        };
        TemplateSet {
            communicator: get("communicator"),
            actor: get("actor"),
            election: get("election"),
            critic: get("critic"),
            coordinator: get("coordinator"),
            classifier: get("classifier"),
        }
    }

    /// Built-ins overridden by any `<role>.txt` file present in `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::builtin();
        for (name, _) in DEFAULTS {
            let path = dir.join(format!("{name}.txt"));
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            let t = Template::parse(name, &text)?;
            check_role(name, &t)?;
            match name {
                "communicator" => set.communicator = t,
                "actor" => set.actor = t,
                "election" => set.election = t,
                "critic" => set.critic = t,
                "coordinator" => set.coordinator = t,
                _ => set.classifier = t,
            }
        }
        Ok(set)
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}
