//! Self-contained text format for fitted CATE models.
//!
//! A model file is one header line followed by pretty-printed JSON holding
//! the kernel parameters, support covariates, and dual weights of every
//! constituent ridge fit, plus the composition tree (difference, single, or
//! average). Doubles are written in shortest round-trip decimal form, so a
//! load reproduces the stored model bit for bit and files are diffable.

use serde::{Deserialize, Serialize};

use nalgebra::{DMatrix, DVector};

use crate::cate::CateModel;
use crate::error::{CokeError, Result};
use crate::kernel::KernelSpec;
use crate::krr::KrrModel;

pub const MODEL_HEADER: &str = "coke-model-v1";

#[derive(Serialize, Deserialize)]
struct KrrNode {
    kernel: KernelSpec,
    support: Vec<Vec<f64>>,
    dual_weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ModelNode {
    Difference { f1: KrrNode, f0: KrrNode },
    Single { h: KrrNode },
    Average { members: Vec<ModelNode> },
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    method: String,
    model: ModelNode,
}

fn krr_to_node(model: &KrrModel) -> KrrNode {
    let support = (0..model.support().nrows())
        .map(|i| model.support().row(i).iter().copied().collect())
        .collect();
    KrrNode {
        kernel: model.spec().clone(),
        support,
        dual_weights: model.dual_weights().iter().copied().collect(),
    }
}

fn node_from_krr(node: KrrNode) -> Result<KrrModel> {
    let rows = node.support.len();
    if rows == 0 {
        return Err(CokeError::invalid("model support is empty"));
    }
    let cols = node.support[0].len();
    if node.support.iter().any(|r| r.len() != cols) {
        return Err(CokeError::invalid("ragged support matrix in model file"));
    }
    let support = DMatrix::from_fn(rows, cols, |i, j| node.support[i][j]);
    KrrModel::new(node.kernel, support, DVector::from_vec(node.dual_weights))
}

fn model_to_node(model: &CateModel) -> ModelNode {
    match model {
        CateModel::Difference { f1, f0 } => ModelNode::Difference {
            f1: krr_to_node(f1),
            f0: krr_to_node(f0),
        },
        CateModel::Single { h } => ModelNode::Single { h: krr_to_node(h) },
        CateModel::Average { members } => ModelNode::Average {
            members: members.iter().map(model_to_node).collect(),
        },
    }
}

fn node_to_model(node: ModelNode) -> Result<CateModel> {
    Ok(match node {
        ModelNode::Difference { f1, f0 } => CateModel::Difference {
            f1: node_from_krr(f1)?,
            f0: node_from_krr(f0)?,
        },
        ModelNode::Single { h } => CateModel::Single {
            h: node_from_krr(h)?,
        },
        ModelNode::Average { members } => {
            if members.is_empty() {
                return Err(CokeError::invalid("average of zero models in file"));
            }
            CateModel::Average {
                members: members
                    .into_iter()
                    .map(node_to_model)
                    .collect::<Result<_>>()?,
            }
        }
    })
}

/// Serializes a model with its method label.
pub fn model_to_string(model: &CateModel, method: &str) -> String {
    let file = ModelFile {
        method: method.to_string(),
        model: model_to_node(model),
    };
    let json = serde_json::to_string_pretty(&file).expect("model serialization cannot fail");
    format!("{MODEL_HEADER}\n{json}\n")
}

/// Parses a model file, returning the model and its method label.
pub fn model_from_str(text: &str) -> Result<(CateModel, String)> {
    let Some((header, body)) = text.split_once('\n') else {
        return Err(CokeError::invalid("model file has no header line"));
    };
    if header.trim() != MODEL_HEADER {
        return Err(CokeError::invalid(format!(
            "unrecognized model header '{}'",
            header.trim()
        )));
    }
    let file: ModelFile = serde_json::from_str(body)
        .map_err(|e| CokeError::invalid(format!("malformed model file: {e}")))?;
    Ok((node_to_model(file.model)?, file.method))
}

pub fn write_model(path: &std::path::Path, model: &CateModel, method: &str) -> Result<()> {
    std::fs::write(path, model_to_string(model, method))?;
    Ok(())
}

pub fn read_model(path: &std::path::Path) -> Result<(CateModel, String)> {
    let text = std::fs::read_to_string(path)?;
    model_from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::krr::fit;
    use crate::rng::stream_rng;

    fn sample_model(seed: u64) -> (CateModel, DMatrix<f64>) {
        let mut rng = stream_rng(seed, 0);
        let spec = KernelSpec::matern_exp(5.0).unwrap();
        let z: DMatrix<f64> = DMatrix::from_fn(7, 2, |_, _| rng.random_range(-3.0..3.0));
        let r1 = DVector::from_fn(7, |i, _| z[(i, 0)].sin());
        let r0 = DVector::from_fn(7, |i, _| z[(i, 0)].cos());
        let model = CateModel::Average {
            members: vec![
                CateModel::Difference {
                    f1: fit(&spec, &z, &r1, 0.1).unwrap(),
                    f0: fit(&spec, &z, &r0, 0.2).unwrap(),
                },
                CateModel::Single {
                    h: fit(&spec, &z, &r1, 0.05).unwrap(),
                },
            ],
        };
        (model, z)
    }

    #[test]
    fn round_trip_preserves_predictions_bit_for_bit() {
        let (model, z) = sample_model(71);
        let text = model_to_string(&model, "coke");
        let (loaded, method) = model_from_str(&text).unwrap();
        assert_eq!(method, "coke");
        let a = model.predict(&z).unwrap();
        let b = loaded.predict(&z).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        // Serialization is deterministic.
        assert_eq!(text, model_to_string(&loaded, &method));
    }

    #[test]
    fn header_is_checked() {
        let (model, _) = sample_model(72);
        let text = model_to_string(&model, "coke").replace(MODEL_HEADER, "other-format");
        assert!(matches!(
            model_from_str(&text),
            Err(CokeError::InvalidInput(_))
        ));
    }

    #[test]
    fn malformed_body_is_rejected() {
        assert!(model_from_str("coke-model-v1\n{not json").is_err());
        assert!(model_from_str("").is_err());
    }
}
