use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LayerSpec, ModelError};

/// An ordered list of layers loaded from a JSON workload file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workload {
    pub name: String,
    #[serde(default)]
    pub provenance: String,
    /// When set, each layer consumes the previous layer's output.
    #[serde(default)]
    pub chained: bool,
    pub layers: Vec<LayerSpec>,
}

impl Workload {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.layers.is_empty() {
            return Err(ModelError::Invalid(format!("workload {}: layer list is empty", self.name)));
        }
        for layer in &self.layers {
            layer.validate()?;
        }
        if self.chained {
            for pair in self.layers.windows(2) {
                let (prev, next) = (&pair[0], &pair[1]);
                let produced = prev.output_dims();
                if next.input_dims() != produced {
                    return Err(ModelError::Dimension {
                        layer: next.layer_id.clone(),
                        field: "in_c/in_h/in_w",
                        message: format!(
                            "chained input {:?} does not match {} output {:?}",
                            next.input_dims(),
                            prev.layer_id,
                            produced
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let w: Workload = serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        w.validate()?;
        Ok(w)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("workload serializes")
    }
}

pub fn load_workload(path: impl AsRef<Path>) -> Result<Workload, ModelError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
    Workload::from_json(&text).map_err(|e| e.in_file(path))
}

pub fn store_workload(w: &Workload, path: impl AsRef<Path>) -> Result<(), ModelError> {
    w.validate()?;
    let path = path.as_ref();
    fs::write(path, w.to_json() + "\n").map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))
}
