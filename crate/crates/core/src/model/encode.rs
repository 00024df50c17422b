//! Raw feature vector → network input.

use serde::{Deserialize, Serialize};

use crate::schema::{FeatureKind, FeatureSchema};

/// Continuous inputs are clipped to this band after min-max scaling.
pub const SCALED_CLIP: (f64, f64) = (-0.5, 1.5);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Block {
    Scaled { feature: String, min: f64, width: f64 },
    OneHot { feature: String, codes: Vec<usize> },
}

impl Block {
    pub fn width(&self) -> usize {
        match self {
            Block::Scaled { .. } => 1,
            Block::OneHot { codes, .. } => codes.len(),
        }
    }
}

/// Encoding map fixed by the training-fitted schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub vector: Vec<f64>,
    /// Features whose category was absent from training; encoded as zeros.
    pub unknown_categories: Vec<usize>,
}

impl Encoder {
    /// `None` when the schema has unfitted features.
    pub fn from_schema(schema: &FeatureSchema) -> Option<Self> {
        let blocks = schema
            .features()
            .iter()
            .map(|f| match &f.kind {
                FeatureKind::Continuous { .. } => {
                    let (min, _) = f.range()?;
                    Some(Block::Scaled {
                        feature: f.name.clone(),
                        min,
                        width: f.range_width(),
                    })
                }
                FeatureKind::Categorical { .. } => Some(Block::OneHot {
                    feature: f.name.clone(),
                    codes: f.allowed_codes()?,
                }),
            })
            .collect::<Option<Vec<_>>>()?;
        Some(Self { blocks })
    }

    pub fn input_dim(&self) -> usize {
        self.blocks.iter().map(Block::width).sum()
    }

    pub fn encode_into(&self, values: &[f64], out: &mut Vec<f64>) -> Vec<usize> {
        out.clear();
        let mut unknown = Vec::new();
        for (i, (block, &v)) in self.blocks.iter().zip(values).enumerate() {
            match block {
                Block::Scaled { min, width, .. } => {
                    out.push(((v - min) / width).clamp(SCALED_CLIP.0, SCALED_CLIP.1));
                }
                Block::OneHot { codes, .. } => {
                    let hit = codes.iter().position(|&c| c as f64 == v);
                    if hit.is_none() {
                        unknown.push(i);
                    }
                    out.extend((0..codes.len()).map(|k| if Some(k) == hit { 1.0 } else { 0.0 }));
                }
            }
        }
        unknown
    }

    pub fn encode(&self, values: &[f64]) -> Encoded {
        let mut vector = Vec::with_capacity(self.input_dim());
        let unknown_categories = self.encode_into(values, &mut vector);
        Encoded {
            vector,
            unknown_categories,
        }
    }
}
