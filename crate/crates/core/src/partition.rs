//! Structural partition of keygraphs by orientation and the two largest
//! internal angles.

use serde::{Deserialize, Serialize};

use crate::geometry::{Keygraph, Orientation};

/// Width of one angle bin, degrees.
pub const BIN_WIDTH_DEG: f64 = 5.0;
/// Bins covering `(0, 180)`.
pub const ANGLE_BINS: u16 = 36;
/// Number of distinct keys: two orientations times 36 x 36 angle bins.
pub const KEYSPACE_SIZE: u16 = 2 * ANGLE_BINS * ANGLE_BINS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PartitionKey {
    pub orientation: Orientation,
    pub bin_largest: u8,
    pub bin_second: u8,
}

/// Half-open 5 degree bin `[5b, 5b + 5)`, clipped to `[0, 35]`.
pub fn angle_bin(angle_deg: f64) -> u8 {
    let b = (angle_deg / BIN_WIDTH_DEG).floor();
    b.clamp(0.0, (ANGLE_BINS - 1) as f64) as u8
}

pub fn partition_key(kg: &Keygraph) -> PartitionKey {
    PartitionKey {
        orientation: kg.orientation,
        bin_largest: angle_bin(kg.angles[2]),
        bin_second: angle_bin(kg.angles[1]),
    }
}

impl PartitionKey {
    /// `orientation * 1296 + bin_largest * 36 + bin_second`, with CW = 0
    /// and CCW = 1.
    pub fn pack(&self) -> u16 {
        let o = match self.orientation {
            Orientation::Cw => 0,
            Orientation::Ccw => 1,
        };
        o * ANGLE_BINS * ANGLE_BINS + self.bin_largest as u16 * ANGLE_BINS + self.bin_second as u16
    }

    pub fn unpack(packed: u16) -> Option<Self> {
        if packed >= KEYSPACE_SIZE {
            return None;
        }
        let per_orientation = ANGLE_BINS * ANGLE_BINS;
        let orientation = if packed / per_orientation == 0 { Orientation::Cw } else { Orientation::Ccw };
        let rest = packed % per_orientation;
        Some(Self {
            orientation,
            bin_largest: (rest / ANGLE_BINS) as u8,
            bin_second: (rest % ANGLE_BINS) as u8,
        })
    }
}

/// Keys with the same orientation whose bins are each within `radius`,
/// clipped to the valid range. Includes `key` itself.
pub fn neighbor_keys(key: PartitionKey, radius: u8) -> Vec<PartitionKey> {
    let last = (ANGLE_BINS - 1) as i16;
    let r = radius as i16;
    let span = |b: u8| (b as i16 - r).max(0)..=(b as i16 + r).min(last);
    let mut out = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
    for l in span(key.bin_largest) {
        for s in span(key.bin_second) {
            out.push(PartitionKey { orientation: key.orientation, bin_largest: l as u8, bin_second: s as u8 });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_keygraph, KeygraphThresholds, Point};
    use std::collections::HashSet;

    fn with_angles(angles: [f64; 3], orientation: Orientation) -> Keygraph {
        Keygraph { vertex_ids: [0, 1, 2], vertices: [Point::default(); 3], angles, orientation }
    }

    #[test]
    fn key_examples() {
        let k = partition_key(&with_angles([40.0, 60.0, 80.0], Orientation::Ccw));
        assert_eq!(k, PartitionKey { orientation: Orientation::Ccw, bin_largest: 16, bin_second: 12 });

        let kg = make_keygraph(
            [0, 1, 2],
            [Point::new(0.0, 0.0), Point::new(100.0, 0.0), Point::new(30.0, 40.0)],
            &KeygraphThresholds::default(),
        )
        .unwrap();
        assert_eq!(
            partition_key(&kg),
            PartitionKey { orientation: Orientation::Cw, bin_largest: 19, bin_second: 10 }
        );
    }

    #[test]
    fn bins_are_half_open() {
        assert_eq!(angle_bin(60.0), 12);
        assert_eq!(angle_bin(59.999_999), 11);
        assert_eq!(angle_bin(0.0), 0);
        assert_eq!(angle_bin(4.999), 0);
        assert_eq!(angle_bin(5.0), 1);
        assert_eq!(angle_bin(179.9), 35);
        assert_eq!(angle_bin(180.0), 35);
    }

    #[test]
    fn packing_is_a_bijection_on_the_keyspace() {
        let mut seen = HashSet::new();
        for o in [Orientation::Cw, Orientation::Ccw] {
            for l in 0..36u8 {
                for s in 0..36u8 {
                    let k = PartitionKey { orientation: o, bin_largest: l, bin_second: s };
                    let p = k.pack();
                    assert!(p < KEYSPACE_SIZE);
                    assert_eq!(PartitionKey::unpack(p), Some(k));
                    seen.insert(p);
                }
            }
        }
        assert_eq!(seen.len(), 2592);
        assert_eq!(KEYSPACE_SIZE, 2592);
        assert_eq!(PartitionKey::unpack(2592), None);
    }

    #[test]
    fn neighbor_examples() {
        let k = PartitionKey { orientation: Orientation::Ccw, bin_largest: 16, bin_second: 12 };
        assert_eq!(neighbor_keys(k, 0), vec![k]);
        let n = neighbor_keys(k, 1);
        assert_eq!(n.len(), 9);
        assert!(n.contains(&k));
        assert_eq!(n.iter().collect::<HashSet<_>>().len(), 9);
        assert!(n.iter().all(|m| m.orientation == Orientation::Ccw));

        let corner = PartitionKey { orientation: Orientation::Ccw, bin_largest: 35, bin_second: 0 };
        assert_eq!(neighbor_keys(corner, 1).len(), 4);
    }

    #[test]
    fn largest_angle_bin_is_at_least_twelve() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let th = KeygraphThresholds { min_angle: 0.0, min_angle_gap: 0.0, min_vertex_distance: 0.0 };
        for _ in 0..2000 {
            let p: [Point; 3] = std::array::from_fn(|_| Point::new(rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0)));
            if let Some(kg) = make_keygraph([0, 1, 2], p, &th) {
                assert!(partition_key(&kg).bin_largest >= 11);
                if kg.angles[2] >= 60.0 {
                    assert!(partition_key(&kg).bin_largest >= 12);
                }
            }
        }
    }
}
