//! Binary dataset files.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic  b"ZIPD"
//! u32    version (= 1)
//! u32    d   embedding dimension
//! u32    A   action alphabet size
//! u64    encoder projection seed
//! u32    N   trajectory count
//! then per trajectory (ids implicit, 0..N-1 in file order):
//!   u32  T   frame count
//!   T x (d x f32 embedding values, u32 action)
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::latent::{Action, Dataset, Embedding, Frame, Trajectory};

pub const MAGIC: [u8; 4] = *b"ZIPD";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetIoError {
    #[error("bad magic {found:?}, expected {MAGIC:?} (not a dataset file)")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported dataset version {found}, expected {VERSION}")]
    UnsupportedVersion { found: u32 },
    #[error("dataset file truncated or malformed: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A dataset together with the header fields that travel with it.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub dataset: Dataset,
    /// Seed of the projection matrix the embeddings were produced with,
    /// recorded so replay verification can rebuild the same encoder.
    pub projection_seed: u64,
}

pub fn write_dataset(file: &DatasetFile, w: &mut impl Write) -> Result<(), DatasetIoError> {
    let ds = &file.dataset;
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(ds.dimension as u32).to_le_bytes())?;
    w.write_all(&ds.action_alphabet_size.to_le_bytes())?;
    w.write_all(&file.projection_seed.to_le_bytes())?;
    w.write_all(&(ds.trajectories.len() as u32).to_le_bytes())?;
    for traj in &ds.trajectories {
        w.write_all(&(traj.len() as u32).to_le_bytes())?;
        for frame in &traj.frames {
            for v in frame.embedding.values() {
                w.write_all(&v.to_le_bytes())?;
            }
            w.write_all(&frame.action.id().to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_dataset(r: &mut impl Read) -> Result<DatasetFile, DatasetIoError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| DatasetIoError::Malformed("file shorter than the magic".into()))?;
    if magic != MAGIC {
        return Err(DatasetIoError::BadMagic { found: magic });
    }
    let version = read_u32(r, "version")?;
    if version != VERSION {
        return Err(DatasetIoError::UnsupportedVersion { found: version });
    }
    let dimension = read_u32(r, "dimension")? as usize;
    let action_alphabet_size = read_u32(r, "action alphabet size")?;
    let projection_seed = read_u64(r, "projection seed")?;
    let n = read_u32(r, "trajectory count")?;

    let mut trajectories = Vec::with_capacity(n as usize);
    for id in 0..n {
        let t = read_u32(r, "frame count")?;
        let mut frames = Vec::with_capacity(t as usize);
        for _ in 0..t {
            let mut values = vec![0.0f32; dimension];
            for v in values.iter_mut() {
                let mut buf = [0u8; 4];
                r.read_exact(&mut buf).map_err(|_| {
                    DatasetIoError::Malformed(format!("trajectory {id}: truncated embedding"))
                })?;
                *v = f32::from_le_bytes(buf);
            }
            let action = read_u32(r, "action")?;
            frames.push(Frame {
                embedding: Embedding::new(values),
                action: Action(action),
            });
        }
        trajectories.push(Trajectory { id, frames });
    }

    // The file must end exactly here.
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(DatasetIoError::Malformed(
            "trailing bytes after the last trajectory".into(),
        ));
    }

    Ok(DatasetFile {
        dataset: Dataset {
            dimension,
            action_alphabet_size,
            trajectories,
        },
        projection_seed,
    })
}

pub fn write_dataset_to_path(file: &DatasetFile, path: &Path) -> Result<(), DatasetIoError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(file, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_dataset_from_path(path: &Path) -> Result<DatasetFile, DatasetIoError> {
    let mut r = BufReader::new(File::open(path)?);
    read_dataset(&mut r)
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32, DatasetIoError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| DatasetIoError::Malformed(format!("truncated {what}")))?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read, what: &str) -> Result<u64, DatasetIoError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|_| DatasetIoError::Malformed(format!("truncated {what}")))?;
    Ok(u64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::validate_dataset;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    fn random_dataset(seed: u64, dim: usize, trajs: usize) -> DatasetFile {
        let mut rng = SplitMix64::new(seed);
        let trajectories = (0..trajs)
            .map(|id| Trajectory {
                id: id as u32,
                frames: (0..1 + rng.next_below(9) as usize)
                    .map(|_| Frame {
                        embedding: Embedding::new(
                            (0..dim).map(|_| rng.next_signed_unit() as f32).collect(),
                        ),
                        action: Action(rng.next_below(4) as u32),
                    })
                    .collect(),
            })
            .collect();
        DatasetFile {
            dataset: Dataset {
                dimension: dim,
                action_alphabet_size: 4,
                trajectories,
            },
            projection_seed: rng.next_u64(),
        }
    }

    fn to_bytes(file: &DatasetFile) -> Vec<u8> {
        let mut buf = Vec::new();
        write_dataset(file, &mut buf).unwrap();
        buf
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = to_bytes(&random_dataset(1, 3, 2));
        bytes[0] = b'X';
        let err = read_dataset(&mut bytes.as_slice()).unwrap_err();
        assert!(matches!(err, DatasetIoError::BadMagic { .. }));
    }

    #[test]
    fn unsupported_version_rejected() {
        let mut bytes = to_bytes(&random_dataset(2, 3, 2));
        bytes[4..8].copy_from_slice(&7u32.to_le_bytes());
        let err = read_dataset(&mut bytes.as_slice()).unwrap_err();
        assert!(matches!(err, DatasetIoError::UnsupportedVersion { found: 7 }));
    }

    #[test]
    fn truncated_file_rejected() {
        let bytes = to_bytes(&random_dataset(3, 3, 2));
        let mut truncated: &[u8] = &bytes[..bytes.len() - 3];
        let err = read_dataset(&mut truncated).unwrap_err();
        assert!(matches!(err, DatasetIoError::Malformed(_)));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = to_bytes(&random_dataset(4, 3, 2));
        bytes.push(0);
        let err = read_dataset(&mut bytes.as_slice()).unwrap_err();
        assert!(matches!(err, DatasetIoError::Malformed(_)));
    }

    #[test]
    fn header_layout_is_bit_exact() {
        let file = random_dataset(5, 2, 1);
        let bytes = to_bytes(&file);
        assert_eq!(&bytes[0..4], b"ZIPD");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 4);
        assert_eq!(
            u64::from_le_bytes(bytes[16..24].try_into().unwrap()),
            file.projection_seed
        );
        assert_eq!(u32::from_le_bytes(bytes[24..28].try_into().unwrap()), 1);
    }

    proptest! {
        // Round-trip is the identity, bytes and values both.
        #[test]
        fn round_trip_identity(seed in any::<u64>()) {
            let file = random_dataset(seed, 4, 5);
            prop_assert!(validate_dataset(&file.dataset).is_empty());
            let bytes = to_bytes(&file);
            let back = read_dataset(&mut bytes.as_slice()).unwrap();
            prop_assert_eq!(&back, &file);
            prop_assert_eq!(to_bytes(&back), bytes);
        }
    }
}
