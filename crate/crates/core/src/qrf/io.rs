//! Binary forest container.
//!
//! ```text
//! magic        "IQRF"
//! version      u16
//! scalar width u8            (4 = f32, 8 = f64)
//! n_trees u32, min_leaf u32, feature_fraction f64, seed u64, bootstrap u8
//! feature_dim  u32
//! fingerprint  [u8; 32]
//! tree count   u32
//! per tree:    node count u32
//!              nodes: tag u8 = 0 split -> feature u32, threshold T, left u32, right u32
//!                     tag u8 = 1 leaf  -> start u32, len u32, mean T
//!              target count u32, targets [T]
//! checksum     SHA-256 of everything above
//! ```
//!
//! All integers and floats are little-endian.

use sha2::{Digest, Sha256};

use super::{Forest, HyperParams, Node, QrfError, Tree};
use crate::Scalar;

const MAGIC: &[u8; 4] = b"IQRF";
pub const FORMAT_VERSION: u16 = 1;

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], QrfError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| QrfError::CorruptFile("unexpected end of data".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> Result<u8, QrfError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16, QrfError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, QrfError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, QrfError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64, QrfError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn scalar<T: Scalar>(&mut self) -> Result<T, QrfError> {
        Ok(T::read_le(self.take(T::WIDTH as usize)?))
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

/// Splits `bytes` into payload and verifies its trailing SHA-256.
pub(crate) fn verify_checksum(bytes: &[u8]) -> Result<&[u8], QrfError> {
    if bytes.len() < 32 {
        return Err(QrfError::CorruptFile("file too short".into()));
    }
    let (payload, sum) = bytes.split_at(bytes.len() - 32);
    let digest: [u8; 32] = Sha256::digest(payload).into();
    if digest != sum {
        return Err(QrfError::CorruptFile("checksum mismatch".into()));
    }
    Ok(payload)
}

pub(crate) fn append_checksum(out: &mut Vec<u8>) {
    let digest = Sha256::digest(&out[..]);
    out.extend_from_slice(&digest);
}

impl<T: Scalar> Forest<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(T::WIDTH);
        out.extend_from_slice(&(self.params.n_trees as u32).to_le_bytes());
        out.extend_from_slice(&(self.params.min_leaf as u32).to_le_bytes());
        out.extend_from_slice(&self.params.feature_fraction.to_le_bytes());
        out.extend_from_slice(&self.params.seed.to_le_bytes());
        out.push(self.params.bootstrap as u8);
        out.extend_from_slice(&(self.feature_dim as u32).to_le_bytes());
        out.extend_from_slice(&self.training_fingerprint);
        out.extend_from_slice(&(self.trees.len() as u32).to_le_bytes());
        for tree in &self.trees {
            out.extend_from_slice(&(tree.nodes.len() as u32).to_le_bytes());
            for node in &tree.nodes {
                match *node {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        out.push(0);
                        out.extend_from_slice(&feature.to_le_bytes());
                        threshold.write_le(&mut out);
                        out.extend_from_slice(&left.to_le_bytes());
                        out.extend_from_slice(&right.to_le_bytes());
                    }
                    Node::Leaf { start, len, mean } => {
                        out.push(1);
                        out.extend_from_slice(&start.to_le_bytes());
                        out.extend_from_slice(&len.to_le_bytes());
                        mean.write_le(&mut out);
                    }
                }
            }
            out.extend_from_slice(&(tree.targets.len() as u32).to_le_bytes());
            for &v in &tree.targets {
                v.write_le(&mut out);
            }
        }
        append_checksum(&mut out);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, QrfError> {
        // Version is checked before the checksum so a newer file reports
        // a version problem rather than corruption.
        let mut header = ByteReader::new(bytes);
        if header.take(4)? != MAGIC {
            return Err(QrfError::CorruptFile("bad magic".into()));
        }
        let version = header.u16()?;
        if version != FORMAT_VERSION {
            return Err(QrfError::VersionMismatch {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let payload = verify_checksum(bytes)?;
        let mut r = ByteReader::new(payload);
        r.take(6)?;
        let width = r.u8()?;
        if width != T::WIDTH {
            return Err(QrfError::CorruptFile(format!(
                "scalar width {width} does not match the requested type ({})",
                T::WIDTH
            )));
        }
        let params = HyperParams {
            n_trees: r.u32()? as usize,
            min_leaf: r.u32()? as usize,
            feature_fraction: r.f64()?,
            seed: r.u64()?,
            bootstrap: r.u8()? != 0,
        };
        let feature_dim = r.u32()? as usize;
        let training_fingerprint: [u8; 32] = r.take(32)?.try_into().unwrap();
        let tree_count = r.u32()? as usize;
        let mut trees = Vec::with_capacity(tree_count.min(1 << 16));
        for _ in 0..tree_count {
            let node_count = r.u32()? as usize;
            let mut nodes = Vec::with_capacity(node_count.min(r.remaining()));
            for _ in 0..node_count {
                nodes.push(match r.u8()? {
                    0 => Node::Split {
                        feature: r.u32()?,
                        threshold: r.scalar()?,
                        left: r.u32()?,
                        right: r.u32()?,
                    },
                    1 => Node::Leaf {
                        start: r.u32()?,
                        len: r.u32()?,
                        mean: r.scalar()?,
                    },
                    tag => return Err(QrfError::CorruptFile(format!("unknown node tag {tag}"))),
                });
            }
            let target_count = r.u32()? as usize;
            let mut targets = Vec::with_capacity(target_count.min(r.remaining()));
            for _ in 0..target_count {
                targets.push(r.scalar()?);
            }
            trees.push(Tree { nodes, targets });
        }
        if r.remaining() != 0 {
            return Err(QrfError::CorruptFile("trailing bytes".into()));
        }
        let forest = Forest {
            trees,
            params,
            feature_dim,
            training_fingerprint,
        };
        forest.validate_structure()?;
        Ok(forest)
    }

    /// Checks node links, leaf ranges and feature indices.
    pub(crate) fn validate_structure(&self) -> Result<(), QrfError> {
        let bad = |msg: String| Err(QrfError::CorruptFile(msg));
        self.params
            .validate()
            .map_err(|e| QrfError::CorruptFile(e.to_string()))?;
        if self.trees.len() != self.params.n_trees {
            return bad(format!(
                "{} trees stored, parameters say {}",
                self.trees.len(),
                self.params.n_trees
            ));
        }
        for (ti, tree) in self.trees.iter().enumerate() {
            if tree.nodes.is_empty() {
                return bad(format!("tree {ti} has no nodes"));
            }
            for (ni, node) in tree.nodes.iter().enumerate() {
                match *node {
                    Node::Split {
                        feature,
                        left,
                        right,
                        ..
                    } => {
                        // Children are numbered after their parent, so links
                        // pointing forward also rule out cycles.
                        if feature as usize >= self.feature_dim
                            || left as usize <= ni
                            || right as usize <= ni
                            || left as usize >= tree.nodes.len()
                            || right as usize >= tree.nodes.len()
                        {
                            return bad(format!("tree {ti} node {ni} is malformed"));
                        }
                    }
                    Node::Leaf { start, len, .. } => {
                        if len == 0 || start as usize + len as usize > tree.targets.len() {
                            return bad(format!("tree {ti} leaf {ni} range out of bounds"));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::{fit_forest, Dataset};
    use super::*;
    use proptest::prelude::*;

    fn small_forest(seed: u64) -> Forest<f64> {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![(i % 7) as f64, (i as f64 * 0.3).cos()]).collect();
        let y: Vec<f64> = (0..50).map(|i| ((i * 13) % 11) as f64 * 0.5).collect();
        let d = Dataset::from_rows(&rows, y).unwrap();
        fit_forest(&d, &HyperParams { n_trees: 3, min_leaf: 2, seed, ..Default::default() }).unwrap()
    }

    #[test]
    fn rejects_future_version() {
        let mut bytes = small_forest(1).to_bytes();
        bytes[4..6].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
        assert!(matches!(
            Forest::<f64>::from_bytes(&bytes),
            Err(QrfError::VersionMismatch { found, .. }) if found == FORMAT_VERSION + 1
        ));
    }

    #[test]
    fn rejects_truncation_and_corruption() {
        let bytes = small_forest(2).to_bytes();
        assert!(matches!(
            Forest::<f64>::from_bytes(&bytes[..bytes.len() - 5]),
            Err(QrfError::CorruptFile(_))
        ));
        let mut flipped = bytes.clone();
        flipped[40] ^= 0x01;
        assert!(matches!(Forest::<f64>::from_bytes(&flipped), Err(QrfError::CorruptFile(_))));
        assert!(matches!(Forest::<f32>::from_bytes(&bytes), Err(QrfError::CorruptFile(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn binary_roundtrip(seed in any::<u64>()) {
            let f = small_forest(seed);
            let bytes = f.to_bytes();
            let back = Forest::<f64>::from_bytes(&bytes).unwrap();
            prop_assert_eq!(&back, &f);
            prop_assert_eq!(back.to_bytes(), bytes);
        }
    }
}
