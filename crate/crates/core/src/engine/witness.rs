use crate::expr::Const;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write;

/// Observable joint state at one step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Snapshot {
    pub step: usize,
    /// Nominal mode per leaf instance.
    pub modes: BTreeMap<String, String>,
    /// Ports, variables and error layers.
    pub values: BTreeMap<String, Const>,
    /// Nominal values of registers currently masked by a stuck-at effect,
    /// where they differ from the observed value.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub nominal: BTreeMap<String, Const>,
    /// Basic events raised up to and including this step.
    pub raised: Vec<String>,
}

/// Finite trace, or a lasso when `loop_start` is set: after the last step the
/// execution continues at `loop_start` forever.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Trace {
    pub steps: Vec<Snapshot>,
    pub loop_start: Option<usize>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Line-oriented rendering; only values that change are repeated after
    /// the first step.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        match self.loop_start {
            Some(l) => {
                let _ = writeln!(out, "lasso trace, {} steps, loop back to step {l}", self.steps.len());
            }
            None => {
                let _ = writeln!(out, "finite trace, {} steps", self.steps.len());
            }
        }
        let mut prev: Option<&Snapshot> = None;
        for s in &self.steps {
            let mark = if self.loop_start == Some(s.step) { "  <- loop start" } else { "" };
            let _ = writeln!(out, "step {}{mark}", s.step);
            for (k, v) in &s.modes {
                if prev.is_none_or(|p| p.modes.get(k) != Some(v)) {
                    let _ = writeln!(out, "  mode {k} = {v}");
                }
            }
            for (k, v) in &s.values {
                if prev.is_none_or(|p| p.values.get(k) != Some(v)) {
                    let _ = writeln!(out, "  {k} = {v}");
                }
            }
            if prev.map_or(!s.raised.is_empty(), |p| p.raised != s.raised) {
                let _ = writeln!(out, "  raised: {}", s.raised.join(", "));
            }
            prev = Some(s);
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}
