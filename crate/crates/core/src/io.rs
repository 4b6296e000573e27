//! JSON file formats for ground truth, detections and classification
//! predictions.
//!
//! Image and sample ids may be given as strings or integers; both are read
//! as strings.

use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use crate::cls_eval::ClsPrediction;
use crate::det_eval::{BBox, DetBox, GtBox};
use crate::error::{Error, Result};

fn string_or_number<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Id {
        Str(String),
        Int(i64),
    }
    Ok(match Id::deserialize(d)? {
        Id::Str(s) => s,
        Id::Int(i) => i.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageInfo {
    #[serde(deserialize_with = "string_or_number")]
    pub id: String,
    #[serde(default)]
    pub width: f64,
    #[serde(default)]
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtAnnotation {
    #[serde(deserialize_with = "string_or_number")]
    pub image_id: String,
    pub bbox: BBox,
    pub leaf_label: usize,
}

/// `{images: [{id, width, height}], annotations: [{image_id, bbox, leaf_label}]}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFile {
    #[serde(default)]
    pub images: Vec<ImageInfo>,
    pub annotations: Vec<GtAnnotation>,
}

impl GroundTruthFile {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Ground-truth boxes; fails if an annotation names an image missing from
    /// a non-empty `images` list.
    pub fn boxes(&self) -> Result<Vec<GtBox>> {
        if !self.images.is_empty() {
            for a in &self.annotations {
                if !self.has_image(&a.image_id) {
                    return Err(Error::DataMismatch(format!(
                        "annotation references unknown image `{}`",
                        a.image_id
                    )));
                }
            }
        }
        Ok(self
            .annotations
            .iter()
            .map(|a| GtBox {
                image_id: a.image_id.clone(),
                bbox: a.bbox,
                leaf_label: a.leaf_label,
            })
            .collect())
    }

    /// True if `id` is in the image list, or in the annotations when no image
    /// list is given.
    pub fn has_image(&self, id: &str) -> bool {
        if self.images.is_empty() {
            self.annotations.iter().any(|a| a.image_id == id)
        } else {
            self.images.iter().any(|i| i.id == id)
        }
    }
}

/// One entry of a detections file, dense or sparse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DetectionEntry {
    Dense {
        #[serde(deserialize_with = "string_or_number")]
        image_id: String,
        bbox: BBox,
        leaf_scores: Vec<f64>,
    },
    Sparse {
        #[serde(deserialize_with = "string_or_number")]
        image_id: String,
        bbox: BBox,
        leaf_label: usize,
        score: f64,
    },
}

impl DetectionEntry {
    /// Dense form with `num_leaves` scores; a sparse entry gets its score at
    /// its label and zero elsewhere.
    pub fn densify(&self, num_leaves: usize) -> Result<DetBox> {
        match self {
            DetectionEntry::Dense {
                image_id,
                bbox,
                leaf_scores,
            } => {
                if leaf_scores.len() != num_leaves {
                    return Err(Error::DataMismatch(format!(
                        "detection on image `{image_id}` has {} scores, taxonomy has {num_leaves} leaves",
                        leaf_scores.len()
                    )));
                }
                Ok(DetBox {
                    image_id: image_id.clone(),
                    bbox: *bbox,
                    leaf_scores: leaf_scores.clone(),
                })
            }
            DetectionEntry::Sparse {
                image_id,
                bbox,
                leaf_label,
                score,
            } => {
                if *leaf_label >= num_leaves {
                    return Err(Error::DataMismatch(format!(
                        "detection on image `{image_id}` has leaf label {leaf_label}, taxonomy has {num_leaves} leaves"
                    )));
                }
                let mut leaf_scores = vec![0.0; num_leaves];
                leaf_scores[*leaf_label] = *score;
                Ok(DetBox {
                    image_id: image_id.clone(),
                    bbox: *bbox,
                    leaf_scores,
                })
            }
        }
    }
}

pub fn parse_detections(s: &str, num_leaves: usize) -> Result<Vec<DetBox>> {
    let entries: Vec<DetectionEntry> = serde_json::from_str(s)?;
    entries.iter().map(|e| e.densify(num_leaves)).collect()
}

pub fn load_detections(path: impl AsRef<Path>, num_leaves: usize) -> Result<Vec<DetBox>> {
    parse_detections(&std::fs::read_to_string(path)?, num_leaves)
}

/// One classification prediction: dense `leaf_scores` or a `top_k` list of
/// `[leaf, score]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionEntry {
    #[serde(deserialize_with = "string_or_number")]
    pub sample_id: String,
    pub true_leaf: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaf_scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<Vec<(usize, f64)>>,
}

impl PredictionEntry {
    /// Dense prediction. Leaves missing from a `top_k` list are ranked after
    /// every listed leaf (by ascending index among themselves).
    pub fn densify(&self, num_leaves: usize) -> Result<ClsPrediction> {
        let scores = match (&self.leaf_scores, &self.top_k) {
            (Some(s), None) => s.clone(),
            (None, Some(top)) => {
                let floor = top.iter().map(|(_, s)| *s).fold(f64::INFINITY, f64::min);
                let filler = if floor.is_finite() { floor - 1.0 } else { 0.0 };
                let mut s = vec![filler; num_leaves];
                for &(leaf, score) in top {
                    if leaf >= num_leaves {
                        return Err(Error::DataMismatch(format!(
                            "sample `{}` lists leaf {leaf}, taxonomy has {num_leaves} leaves",
                            self.sample_id
                        )));
                    }
                    s[leaf] = score;
                }
                s
            }
            _ => {
                return Err(Error::Parse(format!(
                    "sample `{}` needs exactly one of `leaf_scores` or `top_k`",
                    self.sample_id
                )))
            }
        };
        Ok(ClsPrediction {
            sample_id: self.sample_id.clone(),
            leaf_scores: scores,
            true_leaf: self.true_leaf,
        })
    }
}

pub fn parse_predictions(s: &str, num_leaves: usize) -> Result<Vec<ClsPrediction>> {
    let entries: Vec<PredictionEntry> = serde_json::from_str(s)?;
    entries.iter().map(|e| e.densify(num_leaves)).collect()
}

pub fn load_predictions(path: impl AsRef<Path>, num_leaves: usize) -> Result<Vec<ClsPrediction>> {
    parse_predictions(&std::fs::read_to_string(path)?, num_leaves)
}
