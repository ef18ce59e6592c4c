//! Right preconditioners for the VIE system.
//!
//! Vectors are laid out as three consecutive components per material voxel,
//! in the order of the operator's voxel list.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::{c64, Mat};
use rayon::prelude::*;

use super::VieOperator;
use crate::{Error, Result, C64};

pub trait Preconditioner: Send + Sync {
    /// Approximates `A⁻¹ v`.
    fn apply(&self, v: &[C64]) -> Vec<C64>;
    fn name(&self) -> &'static str;
}

pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, v: &[C64]) -> Vec<C64> {
        v.to_vec()
    }

    fn name(&self) -> &'static str {
        "none"
    }
}

type Mat3 = [[C64; 3]; 3];

fn invert3(m: &Mat3) -> Result<Mat3> {
    let c = |i: usize, j: usize| {
        let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
        let (j1, j2) = ((j + 1) % 3, (j + 2) % 3);
        m[i1][j1] * m[i2][j2] - m[i1][j2] * m[i2][j1]
    };
    let det = m[0][0] * c(0, 0) + m[0][1] * c(0, 1) + m[0][2] * c(0, 2);
    if det.norm() == 0.0 || !det.is_finite() {
        return Err(Error::InvalidInput("singular voxel block".into()));
    }
    // inverse is the transposed cofactor matrix over the determinant
    Ok(std::array::from_fn(|i| std::array::from_fn(|j| c(j, i) / det)))
}

/// Inverse of the 3×3 voxel self block `local·I − iωμ₀·K(0)`.
pub struct Diagonal {
    blocks: Vec<Mat3>,
}

impl Diagonal {
    pub fn new(op: &VieOperator) -> Result<Self> {
        let zero = op.coupled_sample([0, 0, 0]);
        let blocks = op
            .local_terms()
            .iter()
            .map(|&l| {
                let m: Mat3 = std::array::from_fn(|i| {
                    std::array::from_fn(|j| if i == j { zero[i][j] + l } else { zero[i][j] })
                });
                invert3(&m)
            })
            .collect::<Result<_>>()?;
        Ok(Self { blocks })
    }
}

impl Preconditioner for Diagonal {
    fn apply(&self, v: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::default(); v.len()];
        out.par_chunks_mut(3)
            .zip(v.par_chunks(3))
            .zip(&self.blocks)
            .for_each(|((o, x), m)| {
                for i in 0..3 {
                    o[i] = m[i][0] * x[0] + m[i][1] * x[1] + m[i][2] * x[2];
                }
            });
        out
    }

    fn name(&self) -> &'static str {
        "diagonal"
    }
}

struct Block {
    /// Positions of the block's voxels in the operator's voxel list.
    members: Vec<usize>,
    lu: PartialPivLu<c64>,
}

/// Dense LU of the operator restricted to geometric subdomains of the
/// material bounding box.
pub struct BlockJacobi {
    blocks: Vec<Block>,
}

/// Default cap on the summed size of the dense block matrices.
pub const DEFAULT_BLOCK_BUDGET: u64 = 1 << 30;

/// Bytes needed to store the dense blocks for a partition.
pub fn block_bytes(op: &VieOperator, blocks: [usize; 3]) -> u64 {
    partition(op, blocks)
        .iter()
        .map(|m| {
            let n = 3 * m.len() as u64;
            n * n * 16
        })
        .sum()
}

fn partition(op: &VieOperator, blocks: [usize; 3]) -> Vec<Vec<usize>> {
    let dims = op.dims();
    let nb = blocks.iter().product::<usize>();
    let mut groups = vec![Vec::new(); nb];
    for (pos, ijk) in op.voxel_indices().iter().enumerate() {
        let b: [usize; 3] = std::array::from_fn(|a| ijk[a] * blocks[a] / dims[a]);
        groups[b[0] + blocks[0] * (b[1] + blocks[1] * b[2])].push(pos);
    }
    groups.retain(|g| !g.is_empty());
    groups
}

impl BlockJacobi {
    /// `blocks` splits each axis of the material bounding box into that
    /// many equal slabs.
    pub fn new(op: &VieOperator, blocks: [usize; 3], budget: u64) -> Result<Self> {
        if blocks.iter().any(|&b| b == 0) {
            return Err(Error::InvalidInput("block counts must be positive".into()));
        }
        let dims = op.dims();
        let blocks: [usize; 3] = std::array::from_fn(|a| blocks[a].min(dims[a]));
        let required = block_bytes(op, blocks);
        if required > budget {
            return Err(Error::Resource {
                what: "block preconditioner".into(),
                required,
                budget,
                hint: "; use more blocks (--blocks) so each dense block is smaller".into(),
            });
        }
        let groups = partition(op, blocks);
        let ijk = op.voxel_indices();
        let local = op.local_terms();
        let blocks = groups
            .into_par_iter()
            .map(|members| {
                let n = members.len();
                let mut cache = std::collections::HashMap::new();
                let mut dense = Mat::<c64>::zeros(3 * n, 3 * n);
                for (p, &a) in members.iter().enumerate() {
                    for (q, &b) in members.iter().enumerate() {
                        let off: [i64; 3] =
                            std::array::from_fn(|c| ijk[a][c] as i64 - ijk[b][c] as i64);
                        let k = *cache.entry(off).or_insert_with(|| op.coupled_sample(off));
                        for i in 0..3 {
                            for j in 0..3 {
                                let mut v = k[i][j];
                                if p == q && i == j {
                                    v += local[a];
                                }
                                dense[(3 * p + i, 3 * q + j)] = v;
                            }
                        }
                    }
                }
                Block {
                    members,
                    lu: dense.partial_piv_lu(),
                }
            })
            .collect();
        Ok(Self { blocks })
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn largest_block(&self) -> usize {
        self.blocks.iter().map(|b| b.members.len()).max().unwrap_or(0)
    }
}

impl Preconditioner for BlockJacobi {
    fn apply(&self, v: &[C64]) -> Vec<C64> {
        let solved: Vec<Vec<C64>> = self
            .blocks
            .par_iter()
            .map(|b| {
                let rhs = Mat::<c64>::from_fn(3 * b.members.len(), 1, |r, _| {
                    v[3 * b.members[r / 3] + r % 3]
                });
                let x = b.lu.solve(&rhs);
                (0..x.nrows()).map(|r| x[(r, 0)]).collect()
            })
            .collect();
        let mut out = vec![C64::default(); v.len()];
        for (b, x) in self.blocks.iter().zip(solved) {
            for (p, &m) in b.members.iter().enumerate() {
                out[3 * m..3 * m + 3].copy_from_slice(&x[3 * p..3 * p + 3]);
            }
        }
        out
    }

    fn name(&self) -> &'static str {
        "block"
    }
}
