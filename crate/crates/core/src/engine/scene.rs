use serde::{Deserialize, Serialize};

/// A narrative situation a character must react to.
///
/// Benchmark scenes carry the reference action the character actually took;
/// live chat turns do not. This is also the scene JSONL schema.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scene {
    pub id: String,
    #[serde(default)]
    pub artifact: String,
    pub character: String,
    #[serde(default)]
    pub order_index: u64,
    pub context: String,
    #[serde(default)]
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_action: Option<String>,
}

impl Scene {
    /// A live-chat scene: no guiding question, no reference action.
    pub fn live(id: impl Into<String>, character: impl Into<String>, context: impl Into<String>) -> Self {
        Scene {
            id: id.into(),
            artifact: String::new(),
            character: character.into(),
            order_index: 0,
            context: context.into(),
            question: String::new(),
            reference_action: None,
        }
    }

    pub fn is_benchmark(&self) -> bool {
        self.reference_action.is_some()
    }
}
