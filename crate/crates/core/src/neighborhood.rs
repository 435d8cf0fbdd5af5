//! Instance-conditioning machinery: an immutable feature store with exact
//! brute-force L2 k-nearest-neighbor queries and uniform neighbor sampling.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use ndarray::Array2;
use rand::Rng;
use std::collections::HashMap;
use std::path::Path;

pub const DEFAULT_K: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct StoreItem {
    pub id: u64,
    pub feature: Vec<f64>,
    /// MIDI note, 21..=108.
    pub pitch: u8,
    pub instrument_id: u32,
    pub instrument_category: u32,
}

/// Immutable set of labeled feature vectors supporting exact k-NN queries.
#[derive(Debug, Clone)]
pub struct FeatureStore {
    items: Vec<StoreItem>,
    index: HashMap<u64, usize>,
    dim: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub id: u64,
    pub distance: f64,
}

/// Ordered neighbor set A_i for one query; the query itself is included with
/// distance zero.
#[derive(Debug, Clone)]
pub struct NeighborSet {
    pub query_id: u64,
    pub members: Vec<Neighbor>,
}

impl FeatureStore {
    pub fn new(items: Vec<StoreItem>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid_argument("k must be >= 1"));
        }
        let dim = items.first().map(|i| i.feature.len()).unwrap_or(0);
        let mut index = HashMap::with_capacity(items.len());
        for (pos, item) in items.iter().enumerate() {
            if item.feature.len() != dim {
                return Err(Error::invalid_argument(format!(
                    "feature dimension mismatch: item {} has {}, store has {}",
                    item.id,
                    item.feature.len(),
                    dim
                )));
            }
            if item.feature.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid_argument(format!(
                    "non-finite feature in item {}",
                    item.id
                )));
            }
            if !(21..=108).contains(&item.pitch) {
                return Err(Error::invalid_argument(format!(
                    "pitch {} of item {} outside MIDI 21..=108",
                    item.pitch, item.id
                )));
            }
            if index.insert(item.id, pos).is_some() {
                return Err(Error::invalid_argument(format!("duplicate id {}", item.id)));
            }
        }
        Ok(FeatureStore { items, index, dim, k })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn items(&self) -> &[StoreItem] {
        &self.items
    }

    pub fn get(&self, id: u64) -> Option<&StoreItem> {
        self.index.get(&id).map(|&pos| &self.items[pos])
    }

    /// Exact brute-force k-NN by Euclidean distance. The query is its own
    /// nearest neighbor (distance 0); ties break by ascending id.
    pub fn knn(&self, query_id: u64) -> Result<NeighborSet> {
        if self.is_empty() {
            return Err(Error::InvalidState("empty store".into()));
        }
        let query = self
            .get(query_id)
            .ok_or_else(|| Error::NotFound(format!("id {query_id}")))?;
        let mut all: Vec<Neighbor> = self
            .items
            .iter()
            .map(|item| {
                let d2: f64 = item
                    .feature
                    .iter()
                    .zip(&query.feature)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                Neighbor {
                    id: item.id,
                    distance: d2.sqrt(),
                }
            })
            .collect();
        all.sort_by(|a, b| {
            a.distance
                .partial_cmp(&b.distance)
                .unwrap()
                .then(a.id.cmp(&b.id))
        });
        all.truncate(self.k.min(self.items.len()));
        Ok(NeighborSet {
            query_id,
            members: all,
        })
    }

    /// Every item's membership count over all neighbor sets in the store,
    /// keyed in item order. Diagnoses how much local distributions overlap.
    pub fn mixture_coverage(&self) -> Result<Vec<(u64, usize)>> {
        if self.is_empty() {
            return Err(Error::InvalidState("empty store".into()));
        }
        let mut counts: HashMap<u64, usize> = self.items.iter().map(|i| (i.id, 0)).collect();
        for item in &self.items {
            for n in self.knn(item.id)?.members {
                *counts.get_mut(&n.id).unwrap() += 1;
            }
        }
        Ok(self.items.iter().map(|i| (i.id, counts[&i.id])).collect())
    }

    /// Serialize: GSTM feature matrix plus a sidecar CSV with labels.
    pub fn save(&self, features_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
        let n = self.items.len();
        let mut data = Vec::with_capacity(n * self.dim);
        for item in &self.items {
            data.extend(item.feature.iter().map(|&v| v as f32));
        }
        Tensor::new(vec![n, self.dim], data)?.save(features_path)?;
        let mut csv = String::from("id,pitch,instrument_id,category\n");
        for item in &self.items {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                item.id, item.pitch, item.instrument_id, item.instrument_category
            ));
        }
        std::fs::write(labels_path, csv)?;
        Ok(())
    }

    pub fn load(
        features_path: impl AsRef<Path>,
        labels_path: impl AsRef<Path>,
        k: usize,
    ) -> Result<Self> {
        let t = Tensor::load(features_path)?;
        if t.dims.len() != 2 {
            return Err(Error::format("feature tensor must be 2-d"));
        }
        let (n, dim) = (t.dims[0], t.dims[1]);
        let text = std::fs::read_to_string(labels_path)?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        if header.trim() != "id,pitch,instrument_id,category" {
            return Err(Error::format("bad labels CSV header"));
        }
        let mut items = Vec::with_capacity(n);
        for (row, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.trim().split(',').collect();
            if parts.len() != 4 {
                return Err(Error::format(format!("bad labels row: {line}")));
            }
            if row >= n {
                return Err(Error::format("more label rows than feature rows"));
            }
            let parse_err = |e: std::num::ParseIntError| Error::format(e.to_string());
            items.push(StoreItem {
                id: parts[0].parse().map_err(parse_err)?,
                pitch: parts[1].parse().map_err(parse_err)?,
                instrument_id: parts[2].parse().map_err(parse_err)?,
                instrument_category: parts[3].parse().map_err(parse_err)?,
                feature: t.data[row * dim..(row + 1) * dim]
                    .iter()
                    .map(|&v| v as f64)
                    .collect(),
            });
        }
        if items.len() != n {
            return Err(Error::format("label/feature row count mismatch"));
        }
        FeatureStore::new(items, k)
    }

    /// Feature matrix view (n x dim), in item order.
    pub fn feature_matrix(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.items.len(), self.dim), |(i, j)| {
            self.items[i].feature[j]
        })
    }
}

/// Draw one member uniformly from a neighbor set; returns (id, pitch of the
/// drawn neighbor as stored in `store`).
pub fn sample_neighbor(
    set: &NeighborSet,
    store: &FeatureStore,
    rng: &mut impl Rng,
) -> Result<(u64, u8)> {
    if set.members.is_empty() {
        return Err(Error::InvalidState("empty neighbor set".into()));
    }
    let idx = rng.gen_range(0..set.members.len());
    let id = set.members[idx].id;
    let item = store
        .get(id)
        .ok_or_else(|| Error::NotFound(format!("neighbor id {id} not in store")))?;
    Ok((id, item.pitch))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn item(id: u64, feature: Vec<f64>, pitch: u8) -> StoreItem {
        StoreItem {
            id,
            feature,
            pitch,
            instrument_id: 0,
            instrument_category: 0,
        }
    }

    fn store_1d(values: &[f64], k: usize) -> FeatureStore {
        let items = values
            .iter()
            .enumerate()
            .map(|(i, &v)| item(i as u64, vec![v], 60))
            .collect();
        FeatureStore::new(items, k).unwrap()
    }

    #[test]
    fn singleton_store_self_neighbor() {
        let s = store_1d(&[5.0], 3);
        let a = s.knn(0).unwrap();
        assert_eq!(a.members.len(), 1);
        assert_eq!(a.members[0].id, 0);
        assert_eq!(a.members[0].distance, 0.0);
    }

    #[test]
    fn hand_checkable_1d() {
        let s = store_1d(&[0.0, 1.0, 3.0, 7.0], 2);
        let a = s.knn(0).unwrap();
        let ids: Vec<u64> = a.members.iter().map(|n| n.id).collect();
        assert_eq!(ids, vec![0, 1]);
    }

    #[test]
    fn unknown_id_is_not_found() {
        let s = store_1d(&[0.0], 1);
        assert!(matches!(s.knn(99), Err(Error::NotFound(_))));
    }

    #[test]
    fn matches_full_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let items: Vec<StoreItem> = (0..50)
            .map(|i| {
                item(
                    i,
                    (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    21 + (i % 88) as u8,
                )
            })
            .collect();
        let s = FeatureStore::new(items.clone(), 5).unwrap();
        for q in 0..50u64 {
            let got = s.knn(q).unwrap();
            // O(n^2) oracle: full pairwise distances, full sort
            let query = &items[q as usize];
            let mut pairs: Vec<(f64, u64)> = items
                .iter()
                .map(|it| {
                    let d: f64 = it
                        .feature
                        .iter()
                        .zip(&query.feature)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    (d, it.id)
                })
                .collect();
            pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            for (n, (d, id)) in got.members.iter().zip(pairs.iter().take(5)) {
                assert_eq!(n.id, *id);
                assert!((n.distance - d).abs() < 1e-12);
            }
            assert_eq!(got.members[0].id, q);
            assert_eq!(got.members[0].distance, 0.0);
            // distances non-decreasing
            for w in got.members.windows(2) {
                assert!(w[0].distance <= w[1].distance);
            }
        }
    }

    #[test]
    fn sampling_uniform_and_deterministic() {
        let s = store_1d(&(0..50).map(|i| i as f64).collect::<Vec<_>>(), 50);
        let a = s.knn(25).unwrap();
        assert_eq!(a.members.len(), 50);

        let draws = 100_000usize;
        let mut counts = vec![0usize; 50];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..draws {
            let (id, _) = sample_neighbor(&a, &s, &mut rng).unwrap();
            counts[id as usize] += 1;
        }
        // binomial 3 sigma around draws/50
        let p = 1.0 / 50.0;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        let mean = draws as f64 * p;
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - mean).abs() <= 3.0 * sigma,
                "member {i} drawn {c} times, expected {mean} +/- {}",
                3.0 * sigma
            );
        }

        // same seed, same draw
        let mut r1 = ChaCha8Rng::seed_from_u64(123);
        let mut r2 = ChaCha8Rng::seed_from_u64(123);
        assert_eq!(
            sample_neighbor(&a, &s, &mut r1).unwrap(),
            sample_neighbor(&a, &s, &mut r2).unwrap()
        );

        let singleton = store_1d(&[1.0], 1);
        let a1 = singleton.knn(0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            assert_eq!(sample_neighbor(&a1, &singleton, &mut rng).unwrap().0, 0);
        }
    }

    #[test]
    fn coverage_full_and_self() {
        let s = store_1d(&[0.0, 1.0, 2.0], 3);
        for (_, c) in s.mixture_coverage().unwrap() {
            assert_eq!(c, 3);
        }
        let s = store_1d(&[0.0, 1.0, 2.0], 1);
        for (_, c) in s.mixture_coverage().unwrap() {
            assert!(c >= 1);
        }
    }

    #[test]
    fn coverage_respects_clusters() {
        // two separated blobs; within-cluster coverage dominates
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut items = Vec::new();
        for i in 0..20u64 {
            let center = if i < 10 { -10.0 } else { 10.0 };
            items.push(item(
                i,
                (0..4)
                    .map(|_| center + rng.gen_range(-0.5..0.5))
                    .collect(),
                60,
            ));
        }
        let s = FeatureStore::new(items, 5).unwrap();
        for i in 0..20u64 {
            let a = s.knn(i).unwrap();
            for n in &a.members {
                let same_cluster = (i < 10) == (n.id < 10);
                assert!(same_cluster, "query {i} pulled cross-cluster neighbor {}", n.id);
            }
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = store_1d(&[0.5, 1.5, -2.0], 2);
        let f = dir.path().join("features.gstm");
        let l = dir.path().join("labels.csv");
        s.save(&f, &l).unwrap();
        let back = FeatureStore::load(&f, &l, 2).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back.get(1).unwrap().pitch, 60);
        assert!((back.get(2).unwrap().feature[0] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn validation_errors() {
        assert!(FeatureStore::new(vec![item(0, vec![1.0], 20)], 1).is_err()); // pitch range
        assert!(FeatureStore::new(
            vec![item(0, vec![1.0], 60), item(0, vec![2.0], 60)],
            1
        )
        .is_err()); // dup id
        assert!(FeatureStore::new(
            vec![item(0, vec![1.0], 60), item(1, vec![2.0, 3.0], 60)],
            1
        )
        .is_err()); // dim mismatch
    }
}
