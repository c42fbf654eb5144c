use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{GaParams, MigrationError, OnlineQueue, Receiver, Task};

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("malformed migration instance: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("unknown keys in migration instance: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error(transparent)]
    Invalid(#[from] MigrationError),
}

/// Queued tasks, candidate receivers and optional GA settings, as read from
/// a JSON file. Tasks keep their file order in the queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigrationInstance {
    pub tasks: Vec<Task>,
    pub receivers: Vec<Receiver>,
    #[serde(default)]
    pub params: GaParams,
}

impl MigrationInstance {
    pub fn from_json(text: &str) -> Result<Self, InstanceError> {
        let mut unknown = Vec::new();
        let de = &mut serde_json::Deserializer::from_str(text);
        let inst: Self = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))?;
        if !unknown.is_empty() {
            return Err(InstanceError::UnknownKeys(unknown));
        }
        inst.params.validate()?;
        inst.queue()?;
        Ok(inst)
    }

    pub fn queue(&self) -> Result<OnlineQueue, MigrationError> {
        let mut q = OnlineQueue::new();
        for t in &self.tasks {
            q.push(t.clone())?;
        }
        Ok(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects() {
        let ok = r#"{"tasks": [{"id": 1, "origin_user": 7, "required_capacity": 1, "data_size": 2, "progress": 0.5}],
                     "receivers": [{"id": 0, "capacity": 2}]}"#;
        let inst = MigrationInstance::from_json(ok).unwrap();
        assert_eq!(inst.params, GaParams::default());
        assert_eq!(inst.queue().unwrap().len(), 1);

        let typo = ok.replace("\"capacity\": 2", "\"capacity\": 2, \"speed\": 1");
        assert!(matches!(
            MigrationInstance::from_json(&typo),
            Err(InstanceError::UnknownKeys(k)) if k == ["receivers.0.speed"]
        ));
        let dup = r#"{"tasks": [{"id": 1, "origin_user": 7, "required_capacity": 1, "data_size": 2, "progress": 0.5},
                                {"id": 1, "origin_user": 8, "required_capacity": 1, "data_size": 2, "progress": 0.5}],
                      "receivers": []}"#;
        assert!(matches!(MigrationInstance::from_json(dup), Err(InstanceError::Invalid(_))));
    }
}
