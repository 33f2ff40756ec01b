//! Sparse uniform grid for exact k-nearest-neighbor queries in hash space.

use std::collections::{BinaryHeap, HashMap};

use nalgebra::Vector3;

type CellKey = [i64; 3];

/// One query result: squared distance and point index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub dist2: f64,
    pub index: usize,
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Points bucketed into cubic cells of a fixed size. Only occupied cells are
/// stored, so far-out points do not blow up memory.
#[derive(Debug, Clone)]
pub struct SpatialGrid {
    cell: f64,
    points: Vec<Vector3<f64>>,
    cells: HashMap<CellKey, Vec<u32>>,
    lo: CellKey,
    hi: CellKey,
}

impl SpatialGrid {
    pub fn new(points: Vec<Vector3<f64>>, cell: f64) -> Self {
        let cell = if cell.is_finite() && cell > 0.0 { cell } else { 1.0 };
        let mut cells: HashMap<CellKey, Vec<u32>> = HashMap::new();
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for (i, p) in points.iter().enumerate() {
            let key = key_of(p, cell);
            for a in 0..3 {
                lo[a] = lo[a].min(key[a]);
                hi[a] = hi[a].max(key[a]);
            }
            cells.entry(key).or_default().push(i as u32);
        }
        Self {
            cell,
            points,
            cells,
            lo,
            hi,
        }
    }

    /// Grid with a cell size guessed from the spread of the central 80% of
    /// the points along each axis.
    pub fn with_auto_cell(points: Vec<Vector3<f64>>) -> Self {
        let cell = auto_cell_size(&points);
        Self::new(points, cell)
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    /// The `k` nearest points to `query`, ordered by distance then index.
    pub fn knn(&self, query: &Vector3<f64>, k: usize) -> Vec<Neighbor> {
        self.knn_filtered(query, k, |_| true)
    }

    /// Like [`knn`](Self::knn) but skips indices for which `keep` is false.
    pub fn knn_filtered(
        &self,
        query: &Vector3<f64>,
        k: usize,
        keep: impl Fn(usize) -> bool,
    ) -> Vec<Neighbor> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        if k >= self.points.len() {
            return self.brute_force(query, k, &keep);
        }
        let c = key_of(query, self.cell);
        let mut heap: BinaryHeap<Neighbor> = BinaryHeap::with_capacity(k + 1);
        // first shell that can touch the occupied box
        let mut r = (0..3)
            .map(|a| (self.lo[a] - c[a]).max(c[a] - self.hi[a]).max(0))
            .max()
            .unwrap_or(0);
        // a cell lookup costs about as much as a dozen distance evaluations
        let budget = self.points.len() / 12 + 64;
        let mut lookups = 0usize;
        loop {
            if lookups > budget {
                return self.brute_force(query, k, &keep);
            }
            lookups += self.visit_shell(c, r, |idx| {
                let i = idx as usize;
                if !keep(i) {
                    return;
                }
                let cand = Neighbor {
                    dist2: (self.points[i] - query).norm_squared(),
                    index: i,
                };
                if heap.len() < k {
                    heap.push(cand);
                } else if cand < *heap.peek().expect("heap is full") {
                    heap.pop();
                    heap.push(cand);
                }
            });
            let covered = (0..3).all(|a| c[a] - r <= self.lo[a] && c[a] + r >= self.hi[a]);
            if covered {
                break;
            }
            // unvisited points lie strictly farther than r cells away
            if heap.len() == k {
                let bound = r as f64 * self.cell;
                if heap.peek().expect("heap is full").dist2 <= bound * bound {
                    break;
                }
            }
            r += 1;
        }
        heap.into_sorted_vec()
    }

    /// Calls `f` for every point in cells at Chebyshev distance exactly `r`
    /// from `c`, clipped to the occupied box. Returns the work done, in cell
    /// lookups.
    fn visit_shell(&self, c: CellKey, r: i64, mut f: impl FnMut(u32)) -> usize {
        let clip = |a: usize| ((c[a] - r).max(self.lo[a]), (c[a] + r).min(self.hi[a]));
        let (x0, x1) = clip(0);
        let (y0, y1) = clip(1);
        let (z0, z1) = clip(2);
        if x0 > x1 || y0 > y1 || z0 > z1 {
            return 1;
        }
        let mut lookups = 0;
        let visit = |key: CellKey, f: &mut dyn FnMut(u32)| {
            if let Some(ids) = self.cells.get(&key) {
                for &i in ids {
                    f(i);
                }
            }
        };
        for x in x0..=x1 {
            for y in y0..=y1 {
                lookups += 1;
                if (x - c[0]).abs() == r || (y - c[1]).abs() == r {
                    for z in z0..=z1 {
                        visit([x, y, z], &mut f);
                        lookups += 1;
                    }
                } else {
                    let (za, zb) = (c[2] - r, c[2] + r);
                    if (z0..=z1).contains(&za) {
                        visit([x, y, za], &mut f);
                    }
                    if r > 0 && (z0..=z1).contains(&zb) {
                        visit([x, y, zb], &mut f);
                    }
                }
            }
        }
        lookups
    }

    fn brute_force(
        &self,
        query: &Vector3<f64>,
        k: usize,
        keep: &impl Fn(usize) -> bool,
    ) -> Vec<Neighbor> {
        let mut all: Vec<Neighbor> = self
            .points
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(i, p)| Neighbor {
                dist2: (p - query).norm_squared(),
                index: i,
            })
            .collect();
        if all.len() > k {
            all.select_nth_unstable(k);
            all.truncate(k);
        }
        all.sort_unstable();
        all
    }
}

fn key_of(p: &Vector3<f64>, cell: f64) -> CellKey {
    let f = |v: f64| {
        let k = (v / cell).floor();
        // saturate absurd coordinates instead of wrapping
        k.clamp(-(1i64 << 52) as f64, (1i64 << 52) as f64) as i64
    };
    [f(p.x), f(p.y), f(p.z)]
}

fn auto_cell_size(points: &[Vector3<f64>]) -> f64 {
    if points.len() < 2 {
        return 1.0;
    }
    let mut volume = 1.0;
    for a in 0..3 {
        let mut v: Vec<f64> = points.iter().map(|p| p[a]).collect();
        v.sort_by(f64::total_cmp);
        let lo = v[v.len() / 10];
        let hi = v[v.len() - 1 - v.len() / 10];
        volume *= (hi - lo).max(1e-9);
    }
    // about 0.5 of the points fall inside the central box
    (volume / (0.5 * points.len() as f64)).cbrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, seed: u64) -> Vec<Vector3<f64>> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let scale = if i % 50 == 0 { 40.0 } else { 1.0 };
                Vector3::new(
                    r.random_range(-1.0..1.0),
                    r.random_range(-1.0..1.0),
                    r.random_range(-1.0..1.0),
                ) * scale
            })
            .collect()
    }

    #[test]
    fn grid_matches_linear_scan() {
        let pts = cloud(3000, 1);
        let grid = SpatialGrid::with_auto_cell(pts.clone());
        let mut r = ChaCha8Rng::seed_from_u64(2);
        for q in 0..1000 {
            let query = Vector3::new(
                r.random_range(-2.0..2.0),
                r.random_range(-2.0..2.0),
                r.random_range(-2.0..2.0),
            ) * if q % 10 == 0 { 30.0 } else { 1.0 };
            let k = 1 + q % 12;
            let got = grid.knn(&query, k);
            let want = grid.brute_force(&query, k, &|_| true);
            assert_eq!(got, want, "query {q}");
        }
    }

    #[test]
    fn ties_break_by_index() {
        let pts = vec![Vector3::new(1.0, 0.0, 0.0); 5];
        let grid = SpatialGrid::new(pts, 0.1);
        let got: Vec<usize> = grid.knn(&Vector3::zeros(), 3).iter().map(|n| n.index).collect();
        assert_eq!(got, vec![0, 1, 2]);
    }

    #[test]
    fn filtered_query_skips() {
        let pts = cloud(500, 3);
        let grid = SpatialGrid::with_auto_cell(pts.clone());
        for i in 0..50 {
            let got = grid.knn_filtered(&pts[i], 1, |j| j != i);
            let want = grid.brute_force(&pts[i], 1, &|j| j != i);
            assert_eq!(got, want);
            assert_ne!(got[0].index, i);
        }
    }

    #[test]
    fn k_larger_than_len_returns_everything() {
        let pts = cloud(20, 4);
        let grid = SpatialGrid::with_auto_cell(pts);
        assert_eq!(grid.knn(&Vector3::zeros(), 100).len(), 20);
    }
}
