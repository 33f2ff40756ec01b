//! Geometric hashing of dot patterns: table construction and Bayesian
//! recognition of observed dots.

mod grid;
mod recognize;
mod table;

pub(crate) use table::hash_entries;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::UnitVector3;

pub use grid::{Neighbor, SpatialGrid};
pub use recognize::{
    lift_to_sphere, recognize, reprojection_rmse, ObservedDotSet, RecognitionConfig,
    RecognitionResult,
};
pub use table::{build_hash_table, nearest_hash_values, HashEntry, HashTable};

/// Two dots closer than this (radians) are considered the same dot.
pub const MIN_DOT_SEPARATION: f64 = 1e-6;

/// Reference dot layout on the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct DotPattern {
    dots: Vec<UnitVector3>,
    id: String,
}

impl DotPattern {
    pub fn new(dots: Vec<UnitVector3>) -> Result<Self> {
        for i in 0..dots.len() {
            for j in (i + 1)..dots.len() {
                if dots[i].angle_to(&dots[j]) < MIN_DOT_SEPARATION {
                    return Err(Error::InvalidParams(format!(
                        "dots {i} and {j} coincide"
                    )));
                }
            }
        }
        let id = content_id(&dots);
        Ok(Self { dots, id })
    }

    pub fn dots(&self) -> &[UnitVector3] {
        &self.dots
    }

    pub fn len(&self) -> usize {
        self.dots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dots.is_empty()
    }

    /// Hex digest of the dot coordinates.
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&PatternFile {
            n: self.dots.len(),
            dots: self.dots.iter().map(UnitVector3::to_array).collect(),
            id: Some(self.id.clone()),
        })
        .expect("pattern serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PatternFile =
            serde_json::from_str(text).map_err(|e| Error::format("pattern file", e))?;
        if file.n != file.dots.len() {
            return Err(Error::format(
                "pattern file",
                format!("n = {} but {} dots listed", file.n, file.dots.len()),
            ));
        }
        let mut dots = Vec::with_capacity(file.dots.len());
        for (i, d) in file.dots.iter().enumerate() {
            let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::format(
                    "pattern file",
                    format!("dot {i} has norm {norm}, expected 1"),
                ));
            }
            dots.push(UnitVector3::new(d[0], d[1], d[2])?);
        }
        let pattern = Self::new(dots)?;
        if let Some(id) = file.id {
            if id != pattern.id {
                return Err(Error::format(
                    "pattern file",
                    format!("id {id} does not match dot content ({})", pattern.id),
                ));
            }
        }
        Ok(pattern)
    }
}

#[derive(Serialize, Deserialize)]
struct PatternFile {
    n: usize,
    dots: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
}

fn content_id(dots: &[UnitVector3]) -> String {
    let mut h = Sha256::new();
    for d in dots {
        for c in d.to_array() {
            h.update(c.to_le_bytes());
        }
    }
    h.finalize()
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}
