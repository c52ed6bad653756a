//! JSON file formats for channels, transfer tables and density matrices.
//!
//! Channel file:
//!
//! ```json
//! { "header": { "dim": 1, "n_max": 2, "box_length": 6.28, "hbar": 1.0 },
//!   "blocks": [ { "kraus_id": 0, "q": [1], "gains": [ { "n": [0], "re": 0.5, "im": 0.0 } ] } ] }
//! ```
//!
//! Floats are written in shortest round-trip form and parsed exactly, so a
//! save/load cycle is lossless. Loading validates structure but not
//! completeness; a file restricted to one source `n` is a valid transfer table.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{CovariantChannel, TransferBlock};
use crate::error::{Error, Result};
use crate::lattice::{BoxLattice, MomentumIndex};
use crate::linalg::CMatrix;
use crate::states::DensityMatrix;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileHeader {
    pub dim: usize,
    pub n_max: u32,
    pub box_length: f64,
    pub hbar: f64,
}

impl FileHeader {
    pub fn from_lattice(lattice: &BoxLattice) -> Self {
        FileHeader {
            dim: lattice.dim(),
            n_max: lattice.n_max(),
            box_length: lattice.box_length(),
            hbar: lattice.hbar(),
        }
    }

    pub fn lattice(&self) -> Result<BoxLattice> {
        BoxLattice::new(self.dim, self.n_max, self.box_length, self.hbar)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileGain {
    n: Vec<i64>,
    re: f64,
    im: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileBlock {
    kraus_id: usize,
    q: Vec<i64>,
    gains: Vec<FileGain>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelFile {
    header: FileHeader,
    blocks: Vec<FileBlock>,
}

fn blocks_to_file(lattice: &BoxLattice, blocks: &[TransferBlock]) -> Result<Vec<FileBlock>> {
    blocks
        .iter()
        .map(|b| {
            let gains = b
                .entries()
                .iter()
                .map(|e| {
                    Ok(FileGain { n: lattice.unflatten(e.source)?.components().to_vec(), re: e.gain.re, im: e.gain.im })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(FileBlock { kraus_id: b.kraus_id(), q: b.transfer().components().to_vec(), gains })
        })
        .collect()
}

fn blocks_from_file(lattice: &BoxLattice, blocks: Vec<FileBlock>) -> Result<Vec<TransferBlock>> {
    blocks
        .into_iter()
        .map(|fb| {
            let gains = fb
                .gains
                .into_iter()
                .map(|g| Ok((lattice.flat_index(&MomentumIndex::new(g.n))?, Complex64::new(g.re, g.im))))
                .collect::<Result<Vec<_>>>()?;
            TransferBlock::from_entries(lattice, fb.kraus_id, MomentumIndex::new(fb.q), gains)
        })
        .collect()
}

/// Serializes any transfer-block list (channel blocks or jump terms).
pub fn blocks_to_string(lattice: &BoxLattice, blocks: &[TransferBlock]) -> Result<String> {
    let file = ChannelFile { header: FileHeader::from_lattice(lattice), blocks: blocks_to_file(lattice, blocks)? };
    Ok(serde_json::to_string_pretty(&file)? + "\n")
}

pub fn blocks_from_str(text: &str) -> Result<(BoxLattice, Vec<TransferBlock>)> {
    let file: ChannelFile = serde_json::from_str(text)?;
    let lattice = file.header.lattice()?;
    let blocks = blocks_from_file(&lattice, file.blocks)?;
    Ok((lattice, blocks))
}

pub fn channel_to_string(ch: &CovariantChannel) -> Result<String> {
    blocks_to_string(ch.lattice(), ch.blocks())
}

pub fn channel_from_str(text: &str) -> Result<CovariantChannel> {
    let (lattice, blocks) = blocks_from_str(text)?;
    CovariantChannel::from_blocks(lattice, blocks)
}

pub fn save_channel(path: impl AsRef<Path>, ch: &CovariantChannel) -> Result<()> {
    fs::write(path, channel_to_string(ch)?)?;
    Ok(())
}

pub fn load_channel(path: impl AsRef<Path>) -> Result<CovariantChannel> {
    channel_from_str(&fs::read_to_string(path)?)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileElement {
    row: Vec<i64>,
    col: Vec<i64>,
    re: f64,
    im: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DensityFile {
    header: FileHeader,
    elements: Vec<FileElement>,
}

/// Nonzero elements of `ρ`, row-major.
pub fn density_to_string(rho: &DensityMatrix) -> Result<String> {
    let lattice = rho.lattice();
    let n = lattice.basis_size();
    let mut elements = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let z = rho.matrix()[(i, j)];
            if z != Complex64::ZERO {
                elements.push(FileElement {
                    row: lattice.unflatten(i)?.components().to_vec(),
                    col: lattice.unflatten(j)?.components().to_vec(),
                    re: z.re,
                    im: z.im,
                });
            }
        }
    }
    let file = DensityFile { header: FileHeader::from_lattice(lattice), elements };
    Ok(serde_json::to_string_pretty(&file)? + "\n")
}

/// Parses a density file; shape is checked, invariants are not.
pub fn density_from_str(text: &str) -> Result<DensityMatrix> {
    let file: DensityFile = serde_json::from_str(text)?;
    let lattice = file.header.lattice()?;
    let n = lattice.basis_size();
    let mut m = CMatrix::zeros(n, n);
    for e in file.elements {
        let i = lattice.flat_index(&MomentumIndex::new(e.row))?;
        let j = lattice.flat_index(&MomentumIndex::new(e.col))?;
        if m[(i, j)] != Complex64::ZERO {
            return Err(Error::Format(format!("duplicate element ({i}, {j})")));
        }
        m[(i, j)] = Complex64::new(e.re, e.im);
    }
    DensityMatrix::from_matrix_unchecked(lattice, m)
}

pub fn save_density(path: impl AsRef<Path>, rho: &DensityMatrix) -> Result<()> {
    fs::write(path, density_to_string(rho)?)?;
    Ok(())
}

pub fn load_density(path: impl AsRef<Path>) -> Result<DensityMatrix> {
    density_from_str(&fs::read_to_string(path)?)
}
