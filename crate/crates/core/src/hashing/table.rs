use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::grid::SpatialGrid;
use super::DotPattern;
use crate::error::{Error, Result};
use crate::kent::{DotModel, HashBasis};

/// Bases whose cross product is shorter than this are skipped.
pub const NEAR_PARALLEL: f64 = 1e-6;

/// A reference dot expressed in the frame of an ordered pair of dots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HashEntry {
    #[serde(rename = "h")]
    pub hash_value: [f64; 3],
    #[serde(rename = "basis")]
    pub basis_id: (usize, usize),
    #[serde(rename = "dot")]
    pub dot_id: usize,
}

impl HashEntry {
    pub fn hash_vector(&self) -> Vector3<f64> {
        Vector3::from(self.hash_value)
    }
}

/// Immutable hash table over every ordered basis of a pattern.
#[derive(Debug, Clone)]
pub struct HashTable {
    pattern: DotPattern,
    model: DotModel,
    entries: Vec<HashEntry>,
    skipped_bases: usize,
    grid: SpatialGrid,
}

impl HashTable {
    pub fn pattern(&self) -> &DotPattern {
        &self.pattern
    }

    pub fn pattern_id(&self) -> &str {
        self.pattern.id()
    }

    pub fn model(&self) -> &DotModel {
        &self.model
    }

    pub fn entries(&self) -> &[HashEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Ordered dot pairs left out because they were nearly parallel.
    pub fn skipped_bases(&self) -> usize {
        self.skipped_bases
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&TableFile {
            pattern_id: self.pattern.id().to_string(),
            params: self.model,
            skipped_bases: self.skipped_bases,
            entries: self.entries.clone(),
        })
        .expect("table serializes")
    }

    /// Loads a table written by [`to_json`](Self::to_json). The table is
    /// rebuilt from `pattern` and compared entry by entry, so a stale or
    /// edited file is rejected.
    pub fn from_json(text: &str, pattern: DotPattern) -> Result<Self> {
        let file: TableFile =
            serde_json::from_str(text).map_err(|e| Error::format("hash table file", e))?;
        if file.pattern_id != pattern.id() {
            return Err(Error::format(
                "hash table file",
                format!(
                    "built for pattern {} but pattern {} was given",
                    file.pattern_id,
                    pattern.id()
                ),
            ));
        }
        let table = build_with_model(pattern, file.params)?;
        let same = table.entries.len() == file.entries.len()
            && table.entries.iter().zip(&file.entries).all(|(a, b)| {
                a.basis_id == b.basis_id
                    && a.dot_id == b.dot_id
                    && (a.hash_vector() - b.hash_vector()).norm() <= 1e-12
            });
        if !same {
            return Err(Error::format(
                "hash table file",
                "entries do not match the pattern",
            ));
        }
        Ok(table)
    }
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    pattern_id: String,
    params: DotModel,
    skipped_bases: usize,
    entries: Vec<HashEntry>,
}

/// Hash table with the default dot model.
pub fn build_hash_table(pattern: &DotPattern) -> Result<HashTable> {
    build_with_model(pattern.clone(), DotModel::default())
}

impl HashTable {
    pub fn build(pattern: &DotPattern, model: DotModel) -> Result<Self> {
        build_with_model(pattern.clone(), model)
    }
}

fn build_with_model(pattern: DotPattern, model: DotModel) -> Result<HashTable> {
    model.validate()?;
    let (entries, skipped_bases) = hash_entries(&pattern)?;
    let points: Vec<Vector3<f64>> = entries.iter().map(HashEntry::hash_vector).collect();
    let cell = mean_nn_distance(&SpatialGrid::with_auto_cell(points.clone()));
    let grid = SpatialGrid::new(points, cell);
    Ok(HashTable {
        pattern,
        model,
        entries,
        skipped_bases,
        grid,
    })
}

/// All hash entries of a pattern in `(basis, dot)` lexicographic order, and
/// the number of skipped near-parallel ordered bases.
pub(crate) fn hash_entries(pattern: &DotPattern) -> Result<(Vec<HashEntry>, usize)> {
    let n = pattern.len();
    if n < 3 {
        return Err(Error::TooFewDots { got: n, need: 3 });
    }
    let dots = pattern.dots();
    let mut entries = Vec::with_capacity(n * (n - 1) * (n - 2));
    let mut skipped = 0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (d, d2) = (dots[i].as_vector(), dots[j].as_vector());
            if d.cross(d2).norm() < NEAR_PARALLEL {
                skipped += 1;
                continue;
            }
            let basis = match HashBasis::from_dots(d, d2) {
                Ok(b) => b,
                Err(_) => {
                    skipped += 1;
                    continue;
                }
            };
            for (k, dot) in dots.iter().enumerate() {
                if k == i || k == j {
                    continue;
                }
                let h = basis.to_hash(dot.as_vector());
                entries.push(HashEntry {
                    hash_value: [h.x, h.y, h.z],
                    basis_id: (i, j),
                    dot_id: k,
                });
            }
        }
    }
    Ok((entries, skipped))
}

/// Mean distance from each point to its nearest other point.
pub(crate) fn mean_nn_distance(grid: &SpatialGrid) -> f64 {
    let pts = grid.points();
    if pts.len() < 2 {
        return 1.0;
    }
    let total: f64 = pts
        .iter()
        .enumerate()
        .map(|(i, p)| grid.knn_filtered(p, 1, |j| j != i)[0].dist2.sqrt())
        .sum();
    total / pts.len() as f64
}

/// The `k` entries closest to `phi` in hash space, ties broken by
/// `(basis_id, dot_id)`.
pub fn nearest_hash_values<'a>(
    table: &'a HashTable,
    phi: &Vector3<f64>,
    k: usize,
) -> Vec<&'a HashEntry> {
    table
        .grid
        .knn(phi, k)
        .into_iter()
        .map(|n| &table.entries[n.index])
        .collect()
}
