use std::collections::BTreeMap;

use super::{unquote, Environment};
use crate::error::EnvError;
use crate::types::{Action, Observation, StateHandle, FINAL_ANSWER};

/// Mutable key-value filesystem driven by `RUN(command)`.
///
/// Commands: `ls`, `cat PATH`, `write PATH TEXT`, `append PATH TEXT`, `rm PATH`.
/// The live state cannot be snapshotted, so only the current handle is valid.
#[derive(Debug, Clone)]
pub struct ScriptedShellWorld {
    id: String,
    initial: BTreeMap<String, String>,
    files: BTreeMap<String, String>,
    depth: usize,
}

impl ScriptedShellWorld {
    pub fn new(id: impl Into<String>, files: BTreeMap<String, String>) -> Self {
        ScriptedShellWorld {
            id: id.into(),
            initial: files.clone(),
            files,
            depth: 0,
        }
    }

    pub fn files(&self) -> &BTreeMap<String, String> {
        &self.files
    }

    fn handle(&self) -> StateHandle {
        StateHandle {
            env_id: self.id.clone(),
            snapshot_token: None,
            depth: self.depth,
        }
    }

    fn run(&mut self, command: &str) -> Result<String, String> {
        let command = unquote(command);
        let mut parts = command.splitn(3, ' ');
        let verb = parts.next().unwrap_or("");
        let path = parts.next().map(str::trim).filter(|p| !p.is_empty());
        let text = parts.next().unwrap_or("");
        let need = |p: Option<&str>| p.map(str::to_string).ok_or_else(|| format!("{verb}: missing path"));
        match verb {
            "ls" => Ok(self.files.keys().cloned().collect::<Vec<_>>().join("\n")),
            "cat" => {
                let p = need(path)?;
                self.files.get(&p).cloned().ok_or_else(|| format!("cat: {p}: no such file"))
            }
            "write" => {
                self.files.insert(need(path)?, text.to_string());
                Ok(String::new())
            }
            "append" => {
                self.files.entry(need(path)?).or_default().push_str(text);
                Ok(String::new())
            }
            "rm" => {
                let p = need(path)?;
                self.files.remove(&p).map(|_| String::new()).ok_or_else(|| format!("rm: {p}: no such file"))
            }
            "" => Err("empty command".into()),
            other => Err(format!("{other}: command not found")),
        }
    }
}

impl Environment for ScriptedShellWorld {
    fn id(&self) -> &str {
        &self.id
    }

    fn serializable(&self) -> bool {
        false
    }

    fn reset(&mut self) -> StateHandle {
        self.files = self.initial.clone();
        self.depth = 0;
        self.handle()
    }

    fn step(&mut self, state: &StateHandle, action: &Action) -> Result<(StateHandle, Observation), EnvError> {
        if state.depth != self.depth {
            return Err(EnvError::StaleHandle {
                handle_depth: state.depth,
                env_depth: self.depth,
            });
        }
        let tool = action.tool_name.as_str();
        let observation = match tool {
            FINAL_ANSWER => Observation::ok(tool, ""),
            "RUN" => match self.run(&action.arguments) {
                Ok(out) => Observation::ok(tool, out),
                Err(e) => Observation::error(tool, e),
            },
            other => Observation::error(tool, format!("unknown tool {other}")),
        };
        self.depth += 1;
        Ok((self.handle(), observation))
    }

    fn fork(&mut self, _state: &StateHandle) -> Result<StateHandle, EnvError> {
        Err(EnvError::ForkUnsupported(self.id.clone()))
    }
}
