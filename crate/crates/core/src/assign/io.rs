use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{validate_image, AssignmentResult, Assigner, GroundTruth, Prediction};
use crate::json::deserialize_with_path;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageInput {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default)]
    pub predictions: Vec<Prediction>,
    #[serde(default)]
    pub ground_truths: Vec<GroundTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignInput {
    pub images: Vec<ImageInput>,
}

/// One NDJSON output line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageAssignment {
    pub image: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(flatten)]
    pub result: AssignmentResult,
}

/// Parses and validates a detections document; errors carry a field path.
pub fn read_assign_input(text: &str) -> Result<AssignInput> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let input: AssignInput = deserialize_with_path(value)?;
    for (i, img) in input.images.iter().enumerate() {
        validate_image(&img.ground_truths, &img.predictions, &format!("images[{i}]."))?;
    }
    Ok(input)
}

/// Assigns every image independently on the worker pool; output keeps input order.
pub fn assign_images(input: &AssignInput, assigner: &dyn Assigner) -> Result<Vec<ImageAssignment>> {
    crate::parallel::install(|| {
        input
            .images
            .par_iter()
            .enumerate()
            .map(|(i, img)| {
                Ok(ImageAssignment {
                    image: i,
                    id: img.id.clone(),
                    result: assigner.assign(&img.ground_truths, &img.predictions)?,
                })
            })
            .collect()
    })
}
