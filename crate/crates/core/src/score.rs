//! Named scalar scores with provenance, the unit exchanged between suites,
//! reports, and trajectory analysis.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::trace::CheckpointMeta;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Numeric,
    Blimp,
    Typicality,
    Rpm,
    Analogy,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Numeric,
        Suite::Blimp,
        Suite::Typicality,
        Suite::Rpm,
        Suite::Analogy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Numeric => "numeric",
            Suite::Blimp => "blimp",
            Suite::Typicality => "typicality",
            Suite::Rpm => "rpm",
            Suite::Analogy => "analogy",
        }
    }

    pub fn parse(s: &str) -> Option<Suite> {
        Suite::ALL.into_iter().find(|x| x.as_str() == s)
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One alignment metric for one (model, checkpoint, suite, submetric).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteScore {
    pub model_id: String,
    pub checkpoint_step: u64,
    pub tokens_seen: u64,
    pub suite: Suite,
    pub submetric: String,
    pub value: f64,
}

impl SuiteScore {
    pub fn new(meta: &CheckpointMeta, suite: Suite, submetric: impl Into<String>, value: f64) -> Self {
        Self {
            model_id: meta.model_id.clone(),
            checkpoint_step: meta.checkpoint_step,
            tokens_seen: meta.tokens_seen,
            suite,
            submetric: submetric.into(),
            value,
        }
    }
}
