//! Partition-bucketed keygraph index: training, nearest-neighbour
//! classification with rejection, and the on-disk format.
//!
//! Index files are compact JSON:
//!
//! ```text
//! { "version": 1,
//!   "params": { "detector": {..}, "thresholds": {..}, "features": {..} },
//!   "model_size": [w, h],
//!   "buckets": [ { "key": <packed>, "entries": [ { "id", "vertices": [[x,y],[x,y],[x,y]], "feature": [..] } ] } ],
//!   "checksum": <crc32> }
//! ```
//!
//! The checksum is the CRC-32 of the compact serialization of the same
//! object without its `checksum` field.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{extract_features, squared_distance, FeatureParams, FeatureVector};
use crate::geometry::{enumerate_training_keygraphs, Keygraph, KeygraphThresholds, Point};
use crate::imaging::{to_chroma, to_grayscale, write_atomic, Image};
use crate::keypoints::{detect_keypoints, DetectorParams};
use crate::partition::{neighbor_keys, partition_key, PartitionKey};
use crate::pose::{induce_pose, Pose};

pub const INDEX_VERSION: u64 = 1;

/// Everything that must agree between training and querying.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IndexParams {
    pub detector: DetectorParams,
    pub thresholds: KeygraphThresholds,
    pub features: FeatureParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: u32,
    /// Model vertex positions in canonical order.
    pub vertices: [[f64; 2]; 3],
    pub feature: FeatureVector,
}

impl IndexEntry {
    pub fn model_vertices(&self) -> [Point; 3] {
        self.vertices.map(|[x, y]| Point::new(x, y))
    }
}

/// A frame keygraph classified as a model keygraph.
#[derive(Debug, Clone, PartialEq)]
pub struct Match {
    pub frame_keygraph: Keygraph,
    pub model_keygraph_id: u32,
    pub model_vertices: [Point; 3],
    pub distance: f64,
    pub induced_pose: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeygraphIndex {
    params: IndexParams,
    model_size: (usize, usize),
    buckets: BTreeMap<u16, Vec<IndexEntry>>,
}

/// Counts gathered while training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainReport {
    pub keypoints: usize,
    pub triangles_examined: usize,
    pub keygraphs: usize,
}

pub fn train(model: &Image, params: &IndexParams) -> Result<KeygraphIndex> {
    train_with_report(model, params).map(|(index, _)| index)
}

pub fn train_with_report(model: &Image, params: &IndexParams) -> Result<(KeygraphIndex, TrainReport)> {
    params.features.validate()?;
    let gray = to_grayscale(model);
    let keypoints = detect_keypoints(&gray, &params.detector)?;
    if keypoints.len() < 3 {
        return Err(Error::TooFewKeypoints { found: keypoints.len() });
    }
    let set = enumerate_training_keygraphs(&keypoints, &params.thresholds)?;
    let chroma = to_chroma(model);
    let extracted: Vec<Option<(Keygraph, FeatureVector)>> = set
        .keygraphs
        .par_iter()
        .map(|kg| extract_features(&chroma, kg, &params.features).ok().map(|fv| (*kg, fv)))
        .collect();

    let mut buckets: BTreeMap<u16, Vec<IndexEntry>> = BTreeMap::new();
    let mut next_id = 0u32;
    for (kg, fv) in extracted.into_iter().flatten() {
        let entry = IndexEntry { id: next_id, vertices: kg.vertices.map(|p| [p.x, p.y]), feature: fv };
        next_id += 1;
        buckets.entry(partition_key(&kg).pack()).or_default().push(entry);
    }
    if next_id == 0 {
        return Err(Error::NoKeygraphs);
    }
    let report = TrainReport {
        keypoints: keypoints.len(),
        triangles_examined: set.examined,
        keygraphs: next_id as usize,
    };
    let index = KeygraphIndex { params: *params, model_size: (model.width(), model.height()), buckets };
    Ok((index, report))
}

impl KeygraphIndex {
    /// Assembles an index from pre-computed entries, e.g. for tests.
    pub fn from_entries(
        params: IndexParams,
        model_size: (usize, usize),
        entries: impl IntoIterator<Item = (PartitionKey, IndexEntry)>,
    ) -> Result<Self> {
        let mut buckets: BTreeMap<u16, Vec<IndexEntry>> = BTreeMap::new();
        for (key, entry) in entries {
            buckets.entry(key.pack()).or_default().push(entry);
        }
        let index = Self { params, model_size, buckets };
        index.check()?;
        Ok(index)
    }

    pub fn params(&self) -> &IndexParams {
        &self.params
    }

    pub fn model_size(&self) -> (usize, usize) {
        self.model_size
    }

    pub fn buckets(&self) -> &BTreeMap<u16, Vec<IndexEntry>> {
        &self.buckets
    }

    pub fn bucket(&self, key: PartitionKey) -> &[IndexEntry] {
        self.buckets.get(&key.pack()).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.buckets.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    pub fn feature_dimension(&self) -> usize {
        self.params.features.dimension()
    }

    /// Largest and median occupancy over non-empty buckets.
    pub fn occupancy(&self) -> (usize, usize) {
        let mut sizes: Vec<usize> = self.buckets.values().map(Vec::len).collect();
        if sizes.is_empty() {
            return (0, 0);
        }
        sizes.sort_unstable();
        (*sizes.last().unwrap(), sizes[sizes.len() / 2])
    }

    /// Nearest stored keygraph in the neighbouring buckets, if within `tau`.
    pub fn classify(&self, frame_kg: &Keygraph, fv: &FeatureVector, tau: f64, radius: u8) -> Result<Option<Match>> {
        self.classify_counted(frame_kg, fv, tau, radius).map(|(m, _)| m)
    }

    /// As [`classify`](Self::classify), also returning the number of
    /// feature comparisons made.
    pub fn classify_counted(
        &self,
        frame_kg: &Keygraph,
        fv: &FeatureVector,
        tau: f64,
        radius: u8,
    ) -> Result<(Option<Match>, usize)> {
        let dim = self.feature_dimension();
        if fv.len() != dim {
            return Err(Error::LengthMismatch { expected: dim, found: fv.len() });
        }
        let mut best: Option<(f64, &IndexEntry)> = None;
        let mut comparisons = 0;
        for key in neighbor_keys(partition_key(frame_kg), radius) {
            for entry in self.bucket(key) {
                comparisons += 1;
                let d2 = squared_distance(fv.as_slice(), entry.feature.as_slice());
                let better = match best {
                    None => true,
                    Some((bd, be)) => d2 < bd || (d2 == bd && entry.id < be.id),
                };
                if better {
                    best = Some((d2, entry));
                }
            }
        }
        let Some((d2, entry)) = best else {
            return Ok((None, comparisons));
        };
        let distance = d2.sqrt();
        if distance > tau {
            return Ok((None, comparisons));
        }
        let model_vertices = entry.model_vertices();
        let Ok(induced_pose) = induce_pose(model_vertices, frame_kg.vertices) else {
            return Ok((None, comparisons));
        };
        let m = Match {
            frame_keygraph: *frame_kg,
            model_keygraph_id: entry.id,
            model_vertices,
            distance,
            induced_pose,
        };
        Ok((Some(m), comparisons))
    }

    fn check(&self) -> Result<()> {
        let dim = self.feature_dimension();
        let mut ids = HashSet::new();
        for (&key, entries) in &self.buckets {
            if PartitionKey::unpack(key).is_none() {
                return Err(Error::Corruption(format!("bucket key {key} outside the keyspace")));
            }
            for e in entries {
                if e.feature.len() != dim {
                    return Err(Error::Corruption(format!(
                        "entry {} has {} feature values, expected {dim}",
                        e.id,
                        e.feature.len()
                    )));
                }
                if !ids.insert(e.id) {
                    return Err(Error::Corruption(format!("duplicate entry id {}", e.id)));
                }
            }
        }
        Ok(())
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        let payload = Payload {
            version: INDEX_VERSION,
            params: &self.params,
            model_size: [self.model_size.0, self.model_size.1],
            buckets: self.buckets.iter().map(|(&key, entries)| BucketRef { key, entries }).collect(),
        };
        let checksum = crc32fast::hash(&serde_json::to_vec(&payload).expect("index serializes"));
        let file = FileRef { payload, checksum };
        serde_json::to_vec(&file).expect("index serializes")
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| Error::Corruption(format!("unreadable index: {e}")))?;
        let version = value
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Corruption("missing index version".into()))?;
        if version != INDEX_VERSION {
            return Err(Error::Version { found: version, expected: INDEX_VERSION });
        }
        let file: IndexFile =
            serde_json::from_value(value).map_err(|e| Error::Corruption(format!("malformed index: {e}")))?;
        let payload = Payload {
            version: file.version,
            params: &file.params,
            model_size: file.model_size,
            buckets: file.buckets.iter().map(|b| BucketRef { key: b.key, entries: &b.entries }).collect(),
        };
        let expected = crc32fast::hash(&serde_json::to_vec(&payload).expect("index serializes"));
        if expected != file.checksum {
            return Err(Error::Corruption(format!(
                "checksum mismatch: stored {:#010x}, computed {expected:#010x}",
                file.checksum
            )));
        }
        let mut buckets = BTreeMap::new();
        for b in file.buckets {
            if buckets.insert(b.key, b.entries).is_some() {
                return Err(Error::Corruption(format!("bucket {} listed twice", b.key)));
            }
        }
        let index = Self { params: file.params, model_size: (file.model_size[0], file.model_size[1]), buckets };
        index.check()?;
        Ok(index)
    }
}

pub fn save_index(index: &KeygraphIndex, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &index.to_json_bytes())
}

pub fn load_index(path: impl AsRef<Path>) -> Result<KeygraphIndex> {
    let bytes = std::fs::read(path.as_ref())?;
    KeygraphIndex::from_json_bytes(&bytes)
}

#[derive(Serialize)]
struct Payload<'a> {
    version: u64,
    params: &'a IndexParams,
    model_size: [usize; 2],
    buckets: Vec<BucketRef<'a>>,
}

#[derive(Serialize)]
struct BucketRef<'a> {
    key: u16,
    entries: &'a [IndexEntry],
}

#[derive(Serialize)]
struct FileRef<'a> {
    #[serde(flatten)]
    payload: Payload<'a>,
    checksum: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexFile {
    version: u64,
    params: IndexParams,
    model_size: [usize; 2],
    buckets: Vec<BucketFile>,
    checksum: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BucketFile {
    key: u16,
    entries: Vec<IndexEntry>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_keygraph, Orientation};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kg(points: [Point; 3]) -> Keygraph {
        make_keygraph([0, 1, 2], points, &KeygraphThresholds::default()).unwrap()
    }

    fn sample_kg() -> Keygraph {
        kg([Point::new(0.0, 0.0), Point::new(100.0, 0.0), Point::new(30.0, 40.0)])
    }

    fn entry(id: u32, k: &Keygraph, feature: Vec<f64>) -> (PartitionKey, IndexEntry) {
        (
            partition_key(k),
            IndexEntry { id, vertices: k.vertices.map(|p| [p.x, p.y]), feature: FeatureVector(feature) },
        )
    }

    fn small_index() -> KeygraphIndex {
        let k = sample_kg();
        KeygraphIndex::from_entries(
            IndexParams::default(),
            (200, 100),
            vec![entry(0, &k, vec![0.5; 18]), entry(1, &k, vec![0.0; 18]), entry(2, &k, vec![-0.5; 18])],
        )
        .unwrap()
    }

    #[test]
    fn exact_feature_matches_at_distance_zero() {
        let index = small_index();
        let m = index.classify(&sample_kg(), &FeatureVector(vec![0.0; 18]), 0.6, 1).unwrap().unwrap();
        assert_eq!(m.model_keygraph_id, 1);
        assert_eq!(m.distance, 0.0);
        assert!((m.induced_pose.scale - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_buckets_give_no_match() {
        let index = small_index();
        let other = kg([Point::new(0.0, 0.0), Point::new(100.0, 0.0), Point::new(90.0, 60.0)]);
        assert_ne!(partition_key(&other), partition_key(&sample_kg()));
        assert!(index.classify(&other, &FeatureVector(vec![0.0; 18]), 10.0, 0).unwrap().is_none());
    }

    #[test]
    fn rejection_threshold() {
        let index = small_index();
        // every entry is 0.1 * sqrt(18) away or more
        let probe = FeatureVector(vec![0.1; 18]);
        let d = (18.0f64 * 0.01).sqrt();
        assert!(index.classify(&sample_kg(), &probe, d - 1e-9, 1).unwrap().is_none());
        assert!(index.classify(&sample_kg(), &probe, d + 1e-9, 1).unwrap().is_some());
    }

    #[test]
    fn ties_go_to_smaller_id() {
        let k = sample_kg();
        let index = KeygraphIndex::from_entries(
            IndexParams::default(),
            (200, 100),
            vec![entry(7, &k, vec![1.0; 18]), entry(3, &k, vec![-1.0; 18])],
        )
        .unwrap();
        let m = index.classify(&k, &FeatureVector(vec![0.0; 18]), 10.0, 0).unwrap().unwrap();
        assert_eq!(m.model_keygraph_id, 3);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            small_index().classify(&sample_kg(), &FeatureVector(vec![0.0; 6]), 0.6, 1),
            Err(Error::LengthMismatch { expected: 18, found: 6 })
        ));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let k = sample_kg();
        let r = KeygraphIndex::from_entries(
            IndexParams::default(),
            (1, 1),
            vec![entry(1, &k, vec![0.0; 18]), entry(1, &k, vec![0.0; 18])],
        );
        assert!(matches!(r, Err(Error::Corruption(_))));
    }

    #[test]
    fn serialization_round_trip_and_corruption() {
        let index = small_index();
        let bytes = index.to_json_bytes();
        assert_eq!(KeygraphIndex::from_json_bytes(&bytes).unwrap(), index);

        assert!(matches!(
            KeygraphIndex::from_json_bytes(&bytes[..bytes.len() / 2]),
            Err(Error::Corruption(_))
        ));

        let text = String::from_utf8(bytes.clone()).unwrap();
        let tampered = text.replacen("0.5", "0.25", 1);
        assert!(matches!(KeygraphIndex::from_json_bytes(tampered.as_bytes()), Err(Error::Corruption(_))));

        let v2 = text.replacen("\"version\":1", "\"version\":2", 1);
        assert!(matches!(
            KeygraphIndex::from_json_bytes(v2.as_bytes()),
            Err(Error::Version { found: 2, expected: 1 })
        ));
    }

    #[test]
    fn blank_model_has_too_few_keypoints() {
        let img = Image::filled(64, 64, [10, 20, 30]);
        assert!(matches!(train(&img, &IndexParams::default()), Err(Error::TooFewKeypoints { found: 0 })));
    }

    fn random_index(rng: &mut ChaCha8Rng, n: usize) -> KeygraphIndex {
        let th = KeygraphThresholds::default();
        let mut entries = Vec::new();
        let mut id = 0;
        while entries.len() < n {
            let p: [Point; 3] = std::array::from_fn(|_| Point::new(rng.gen_range(0.0..300.0), rng.gen_range(0.0..300.0)));
            if let Some(k) = make_keygraph([0, 1, 2], p, &th) {
                let feature = (0..18).map(|_| rng.gen_range(-1.0..1.0)).collect();
                entries.push(entry(id, &k, feature));
                id += 1;
            }
        }
        KeygraphIndex::from_entries(IndexParams::default(), (300, 300), entries).unwrap()
    }

    #[test]
    fn classification_equals_linear_scan_over_searched_buckets() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let index = random_index(&mut rng, 3000);
        let th = KeygraphThresholds::default();
        let mut probes = 0;
        while probes < 300 {
            let p: [Point; 3] = std::array::from_fn(|_| Point::new(rng.gen_range(0.0..300.0), rng.gen_range(0.0..300.0)));
            let Some(k) = make_keygraph([0, 1, 2], p, &th) else { continue };
            probes += 1;
            let fv = FeatureVector((0..18).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let tau = rng.gen_range(1.0..4.0);
            let radius = rng.gen_range(0..=1u8);
            let searched: HashSet<u16> = neighbor_keys(partition_key(&k), radius).iter().map(|k| k.pack()).collect();
            let oracle = index
                .buckets()
                .iter()
                .filter(|(key, _)| searched.contains(key))
                .flat_map(|(_, es)| es.iter())
                .map(|e| (crate::features::feature_distance(&fv, &e.feature).unwrap(), e.id))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .filter(|(d, _)| *d <= tau);
            let (got, comparisons) = index.classify_counted(&k, &fv, tau, radius).unwrap();
            let expected_comparisons: usize =
                index.buckets().iter().filter(|(key, _)| searched.contains(key)).map(|(_, es)| es.len()).sum();
            assert_eq!(comparisons, expected_comparisons);
            assert!(comparisons <= index.len());
            match (got, oracle) {
                (None, None) => {}
                (Some(m), Some((d, id))) => {
                    assert_eq!(m.model_keygraph_id, id);
                    assert!((m.distance - d).abs() < 1e-12);
                }
                (g, o) => panic!("mismatch: {g:?} vs {o:?}"),
            }
            // a larger threshold never loses the match
            if index.classify(&k, &fv, tau, radius).unwrap().is_some() {
                assert!(index.classify(&k, &fv, tau * 2.0, radius).unwrap().is_some());
            }
        }
    }

    #[test]
    fn bins_within_one_step_are_searched() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5000 {
            let a: f64 = rng.gen_range(60.0..170.0);
            let b: f64 = rng.gen_range(5.0..a.min(180.0 - a));
            let da = rng.gen_range(-4.999..4.999);
            let db = rng.gen_range(-4.999..4.999);
            let stored = PartitionKey {
                orientation: Orientation::Ccw,
                bin_largest: crate::partition::angle_bin(a),
                bin_second: crate::partition::angle_bin(b),
            };
            let probe = PartitionKey {
                orientation: Orientation::Ccw,
                bin_largest: crate::partition::angle_bin(a + da),
                bin_second: crate::partition::angle_bin(b + db),
            };
            assert!(neighbor_keys(probe, 1).contains(&stored));
        }
    }
}
