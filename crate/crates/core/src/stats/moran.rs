//! Global Moran's I over a sparse neighbor structure with seeded
//! permutation inference.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::StatsError;
use crate::seed::rng_for;

pub const DEFAULT_PERMUTATIONS: usize = 999;

/// Symmetric neighbor lists keyed by unit id.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialWeights {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    neighbors: Vec<Vec<(usize, f64)>>,
    row_standardized: bool,
}

impl SpatialWeights {
    /// Builds binary weights from undirected pairs. Repeated pairs collapse to
    /// one edge; self-loops are rejected.
    pub fn from_edges<S: AsRef<str>>(
        edges: &[(S, S)],
        row_standardize: bool,
    ) -> Result<Self, StatsError> {
        let mut adj: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (a, b) in edges {
            let (a, b) = (a.as_ref().trim(), b.as_ref().trim());
            if a == b {
                return Err(StatsError::InvalidWeights(format!("self-loop on unit '{a}'")));
            }
            adj.entry(a.to_string()).or_default().insert(b.to_string());
            adj.entry(b.to_string()).or_default().insert(a.to_string());
        }
        let ids: Vec<String> = adj.keys().cloned().collect();
        let index: HashMap<String, usize> =
            ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        let neighbors = adj
            .values()
            .map(|set| set.iter().map(|n| (index[n], 1.0)).collect())
            .collect();
        let mut w = SpatialWeights {
            ids,
            index,
            neighbors,
            row_standardized: false,
        };
        if row_standardize {
            w.row_standardize();
        }
        Ok(w)
    }

    /// Rook adjacency on a `rows × cols` lattice. Unit ids are `r{row}c{col}`
    /// and [`SpatialWeights::ids`] lists them in row-major order.
    pub fn rook_grid(rows: usize, cols: usize, row_standardize: bool) -> Self {
        let ids: Vec<String> = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| format!("r{r}c{c}")))
            .collect();
        let index = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        let mut neighbors = vec![Vec::new(); rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                if r > 0 {
                    neighbors[i].push((i - cols, 1.0));
                }
                if c > 0 {
                    neighbors[i].push((i - 1, 1.0));
                }
                if c + 1 < cols {
                    neighbors[i].push((i + 1, 1.0));
                }
                if r + 1 < rows {
                    neighbors[i].push((i + cols, 1.0));
                }
            }
        }
        let mut w = SpatialWeights {
            ids,
            index,
            neighbors,
            row_standardized: false,
        };
        if row_standardize {
            w.row_standardize();
        }
        w
    }

    fn row_standardize(&mut self) {
        for row in &mut self.neighbors {
            let s: f64 = row.iter().map(|(_, w)| w).sum();
            if s > 0.0 {
                for (_, w) in row.iter_mut() {
                    *w /= s;
                }
            }
        }
        self.row_standardized = true;
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn is_row_standardized(&self) -> bool {
        self.row_standardized
    }

    pub fn neighbors_of(&self, id: &str) -> Option<impl Iterator<Item = (&str, f64)>> {
        let i = *self.index.get(id)?;
        Some(self.neighbors[i].iter().map(|&(j, w)| (self.ids[j].as_str(), w)))
    }

    pub fn total_weight(&self) -> f64 {
        self.neighbors.iter().flatten().map(|(_, w)| w).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoranResult {
    pub statistic: f64,
    /// E[I] = −1/(n−1) under random relabeling.
    pub expected: f64,
    pub p_value: f64,
    pub permutations: usize,
    pub n: usize,
}

fn statistic(z: &[f64], neighbors: &[Vec<(usize, f64)>], n_over_s0: f64, ss: f64) -> f64 {
    let cross: f64 = neighbors
        .iter()
        .enumerate()
        .map(|(i, row)| z[i] * row.iter().map(|&(j, w)| w * z[j]).sum::<f64>())
        .sum();
    n_over_s0 * cross / ss
}

/// Global Moran's I with a two-sided permutation p-value,
/// `(#{|I_perm − E| ≥ |I_obs − E|} + 1) / (permutations + 1)`.
///
/// Units with a value but no entry in `weights` are isolates. Every unit in
/// `weights` needs a value. Each permutation draws from its own seed derived
/// from `seed`, so the result does not depend on thread scheduling.
pub fn morans_i(
    values: &BTreeMap<String, f64>,
    weights: &SpatialWeights,
    permutations: usize,
    seed: u64,
) -> Result<MoranResult, StatsError> {
    let mut x = Vec::with_capacity(values.len().max(weights.ids.len()));
    for id in &weights.ids {
        let v = values
            .get(id)
            .ok_or_else(|| StatsError::MissingValue(id.clone()))?;
        x.push(*v);
    }
    x.extend(
        values
            .iter()
            .filter(|(id, _)| !weights.index.contains_key(id.as_str()))
            .map(|(_, v)| *v),
    );
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFewUnits(n));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    if x.iter().all(|&v| v == x[0]) {
        return Err(StatsError::ZeroVariance);
    }
    let mut neighbors = weights.neighbors.clone();
    neighbors.resize(n, Vec::new());
    let s0 = weights.total_weight();
    if !(s0 > 0.0) {
        return Err(StatsError::InvalidWeights("no neighbor pairs".into()));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let z: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let ss: f64 = z.iter().map(|v| v * v).sum();
    let scale = n as f64 / s0;
    let observed = statistic(&z, &neighbors, scale, ss);
    let expected = -1.0 / (n as f64 - 1.0);
    let threshold = (observed - expected).abs();
    let extreme = (0..permutations)
        .into_par_iter()
        .filter(|&p| {
            let mut rng = rng_for(seed, &[p as u64]);
            let mut zp = z.clone();
            zp.shuffle(&mut rng);
            (statistic(&zp, &neighbors, scale, ss) - expected).abs() >= threshold
        })
        .count();
    Ok(MoranResult {
        statistic: observed,
        expected,
        p_value: (extreme + 1) as f64 / (permutations + 1) as f64,
        permutations,
        n,
    })
}
