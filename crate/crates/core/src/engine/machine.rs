use super::EngineError;
use crate::instance::{ComponentInstance, InstancePort};
use crate::model::{Effect, ErrorModel, StateMachine, Trigger};
use std::collections::BTreeMap;

/// Name of the single mode of a leaf that declares no nominal behavior.
pub const IDLE_MODE: &str = "Idle";

/// A leaf's nominal machine composed with its error layers.
///
/// Layers compose by synchronous product. When several layers force the
/// same target, the layer declared last wins.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedMachine {
    pub path: String,
    pub block: String,
    pub nominal: StateMachine,
    pub layers: Vec<ErrorModel>,
    pub ports: Vec<InstancePort>,
}

impl ExtendedMachine {
    /// Basic-event ids (faults and threats) in declaration order.
    pub fn events(&self) -> Vec<String> {
        self.layers
            .iter()
            .flat_map(|l| l.transitions.iter())
            .filter(|t| t.trigger.is_basic_event())
            .map(|t| qualify(&self.path, t.trigger.name()))
            .collect()
    }

    /// Qualified name under which layer `i` is visible in expressions.
    pub fn layer_name(&self, i: usize) -> String {
        qualify(&self.path, &self.layers[i].name)
    }

    /// Key of this machine's mode in snapshots: the instance path, or the
    /// block name for a root leaf.
    pub fn mode_key(&self) -> String {
        if self.path.is_empty() {
            self.block.clone()
        } else {
            self.path.clone()
        }
    }
}

pub(crate) fn qualify(path: &str, local: &str) -> String {
    if path.is_empty() {
        local.to_string()
    } else {
        format!("{path}.{local}")
    }
}

/// Builds the extended machine of a leaf instance.
pub fn inject_faults(leaf: &ComponentInstance) -> Result<ExtendedMachine, EngineError> {
    if !leaf.is_leaf() {
        return Err(EngineError::Model(format!("`{}` is not a leaf component", leaf.path)));
    }
    for em in &leaf.error_models {
        for group in &em.effects {
            let mut seen: BTreeMap<&str, &crate::expr::Const> = BTreeMap::new();
            for e in &group.effects {
                if let Effect::StuckAt { target, value } = e {
                    if let Some(prev) = seen.insert(target, value) {
                        if prev != value {
                            return Err(EngineError::Composition(format!(
                                "state `{}` of `{}` forces `{target}` to both {prev} and {value}",
                                group.state,
                                qualify(&leaf.path, &em.name)
                            )));
                        }
                    }
                }
            }
        }
        for t in &em.transitions {
            if t.guard.is_some() && !matches!(t.trigger, Trigger::Threat { .. }) {
                return Err(EngineError::Model(format!(
                    "only threats may carry a vulnerability guard (`{}`)",
                    t.trigger.name()
                )));
            }
        }
    }
    let nominal = leaf.behavior.clone().unwrap_or_else(|| StateMachine {
        variables: Vec::new(),
        states: vec![IDLE_MODE.to_string()],
        initial: IDLE_MODE.to_string(),
        transitions: Vec::new(),
    });
    Ok(ExtendedMachine {
        path: leaf.path.clone(),
        block: leaf.block.clone(),
        nominal,
        layers: leaf.error_models.clone(),
        ports: leaf.ports.clone(),
    })
}
