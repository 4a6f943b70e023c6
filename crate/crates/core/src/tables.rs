//! On-disk format for precomputed planner tables.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "IGTABLES"
//! version      u32
//! header_len   u64
//! header       header_len bytes of JSON (see `TablesHeader`)
//! per hypothesis, in goal order:
//!     values   W·H·8 f64, dense row-major (y, x, heading)
//!     rewards  W·H·8 f64, same order
//! ```

use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::{parse_map, Cell, GridMap, MapError};
use crate::planner::{state_count, HypothesisTables, Planner, PlannerParams, RewardTable, ValueTable};

pub const MAGIC: &[u8; 8] = b"IGTABLES";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TablesError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a tables file (bad magic)")]
    BadMagic,
    #[error("unsupported tables format version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error("malformed header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("embedded map is invalid: {0}")]
    Map(#[from] MapError),
    #[error("tables were computed for a different setup:\n{0}")]
    Mismatch(String),
}

/// JSON header of a tables file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TablesHeader {
    pub format_version: u32,
    pub map_hash: String,
    pub width: usize,
    pub height: usize,
    pub map: Vec<String>,
    pub goals: Vec<Cell>,
    pub params: PlannerParams,
    pub sweeps: Vec<usize>,
}

impl TablesHeader {
    pub fn for_planner(planner: &Planner) -> Self {
        let map = planner.map();
        Self {
            format_version: FORMAT_VERSION,
            map_hash: map.hash(),
            width: map.width(),
            height: map.height(),
            map: map.rows(),
            goals: map.goals().to_vec(),
            params: *planner.params(),
            sweeps: planner.hypotheses().iter().map(|h| h.values.sweeps).collect(),
        }
    }

    /// Describes every difference from the expected map and parameters.
    pub fn check_compatible(&self, map: &GridMap, params: &PlannerParams) -> Result<(), TablesError> {
        let mut diffs = Vec::new();
        let expected_hash = map.hash();
        if self.map_hash != expected_hash {
            diffs.push(format!("  map hash: tables {} != expected {}", self.map_hash, expected_hash));
        }
        let ours = serde_json::to_value(params).expect("params serialize");
        let theirs = serde_json::to_value(self.params).expect("params serialize");
        if let (Some(ours), Some(theirs)) = (ours.as_object(), theirs.as_object()) {
            for (key, want) in ours {
                let have = &theirs[key];
                if have != want {
                    diffs.push(format!("  {key}: tables {have} != expected {want}"));
                }
            }
        }
        if diffs.is_empty() {
            Ok(())
        } else {
            Err(TablesError::Mismatch(diffs.join("\n")))
        }
    }
}

pub fn write_tables<W: Write>(mut w: W, planner: &Planner) -> Result<(), TablesError> {
    let header = serde_json::to_vec(&TablesHeader::for_planner(planner))?;
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    w.write_u64::<LittleEndian>(header.len() as u64)?;
    w.write_all(&header)?;
    for h in planner.hypotheses() {
        for v in h.values.as_slice().iter().chain(h.rewards.as_slice()) {
            w.write_f64::<LittleEndian>(*v)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Serialized bytes of a planner's tables.
pub fn to_bytes(planner: &Planner) -> Vec<u8> {
    let mut out = Vec::new();
    write_tables(&mut out, planner).expect("writing to memory cannot fail");
    out
}

pub fn read_header<R: Read>(r: &mut R) -> Result<TablesHeader, TablesError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(TablesError::BadMagic);
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != FORMAT_VERSION {
        return Err(TablesError::Version(version));
    }
    let len = r.read_u64::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    let header: TablesHeader = serde_json::from_slice(&buf)?;
    Ok(header)
}

/// Reads a tables file back into a planner over its embedded map.
pub fn read_tables<R: Read>(mut r: R) -> Result<Planner, TablesError> {
    let header = read_header(&mut r)?;
    let map = parse_map(&header.map.join("\n"))?;
    if map.hash() != header.map_hash {
        return Err(TablesError::Mismatch(format!(
            "  embedded map hashes to {} but header says {}",
            map.hash(),
            header.map_hash
        )));
    }
    if header.sweeps.len() != map.goal_count() {
        return Err(TablesError::Mismatch(format!(
            "  header lists {} hypotheses for {} goals",
            header.sweeps.len(),
            map.goal_count()
        )));
    }
    let n = state_count(&map);
    let mut read_dense = || -> Result<Vec<f64>, TablesError> {
        let mut v = vec![0.0; n];
        r.read_f64_into::<LittleEndian>(&mut v)?;
        Ok(v)
    };
    let mut hypotheses = Vec::with_capacity(map.goal_count());
    for (goal_index, &sweeps) in header.sweeps.iter().enumerate() {
        let values = read_dense()?;
        let rewards = read_dense()?;
        let goal = map.goals()[goal_index];
        hypotheses.push(HypothesisTables {
            goal_index,
            values: ValueTable::from_dense(header.params.gamma, sweeps, map.width(), values),
            rewards: RewardTable::from_dense(goal, map.width(), rewards),
        });
    }
    Ok(Planner::from_tables(&map, &header.params, hypotheses))
}
