//! Scoring kernels.
//!
//! The block-term score of a triple can be computed three ways, all of which
//! agree up to rounding:
//!
//! * [`mei_score`]: per-partition Tucker contractions, relation mode first,
//!   summed over partitions.
//! * [`block_diagonal_score`]: a bilinear form `hᵀ M t` whose matrix is the
//!   direct sum of the per-partition matching matrices.
//! * [`sparse_tucker_score`]: a single Tucker contraction of the full vectors
//!   against the direct sum of the partition cores.
//!
//! [`trilinear_score`] and [`bilinear_score`] are the classic DistMult and
//! RESCAL forms, kept as fixtures for the fixed-core reductions.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};

/// Third-order core tensor of shape `C_e × C_e × C_r`, row-major, so that
/// `w[x][y][z]` lives at `(x * C_e + y) * C_r + z`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreTensor {
    entity_width: usize,
    relation_width: usize,
    data: Vec<f64>,
}

impl CoreTensor {
    pub fn zeros(entity_width: usize, relation_width: usize) -> Self {
        Self {
            entity_width,
            relation_width,
            data: vec![0.0; entity_width * entity_width * relation_width],
        }
    }

    pub fn from_vec(entity_width: usize, relation_width: usize, data: Vec<f64>) -> Result<Self> {
        check_len(
            "core tensor entries",
            entity_width * entity_width * relation_width,
            data.len(),
        )?;
        Ok(Self {
            entity_width,
            relation_width,
            data,
        })
    }

    pub fn entity_width(&self) -> usize {
        self.entity_width
    }

    pub fn relation_width(&self) -> usize {
        self.relation_width
    }

    #[inline]
    fn offset(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.entity_width + y) * self.relation_width + z
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.offset(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: f64) {
        let i = self.offset(x, y, z);
        self.data[i] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

/// Square `C_e × C_e` matrix generated by contracting a core with a relation
/// partition.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchingMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl MatchingMatrix {
    pub fn from_vec(dim: usize, data: Vec<f64>) -> Result<Self> {
        check_len("matching matrix entries", dim * dim, data.len())?;
        Ok(Self { dim, data })
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[x * self.dim + y]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `hᵀ M t`.
    pub fn bilinear(&self, h: &[f64], t: &[f64]) -> Result<f64> {
        check_len("bilinear head", self.dim, h.len())?;
        check_len("bilinear tail", self.dim, t.len())?;
        Ok(bilinear_kernel(&self.data, h, t))
    }
}

/// Borrowed `K × C` view of an embedding vector of length `D = K * C`.
#[derive(Debug, Clone, Copy)]
pub struct PartitionedVector<'a> {
    data: &'a [f64],
    parts: usize,
    width: usize,
}

impl<'a> PartitionedVector<'a> {
    pub fn new(data: &'a [f64], parts: usize) -> Result<Self> {
        if parts == 0 || !data.len().is_multiple_of(parts) || data.is_empty() {
            return Err(Error::Shape {
                what: "partitioned vector length (must be a positive multiple of K)",
                expected: parts,
                found: data.len(),
            });
        }
        Ok(Self {
            data,
            parts,
            width: data.len() / parts,
        })
    }

    pub fn parts(&self) -> usize {
        self.parts
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn part(&self, k: usize) -> &'a [f64] {
        &self.data[k * self.width..(k + 1) * self.width]
    }

    pub fn as_slice(&self) -> &'a [f64] {
        self.data
    }
}

#[inline]
pub(crate) fn bilinear_kernel(m: &[f64], h: &[f64], t: &[f64]) -> f64 {
    let dim = h.len();
    let mut acc = 0.0;
    for (x, &hx) in h.iter().enumerate() {
        let row = &m[x * dim..(x + 1) * dim];
        let mut inner = 0.0;
        for (m_xy, &ty) in row.iter().zip(t) {
            inner += m_xy * ty;
        }
        acc += hx * inner;
    }
    acc
}

/// Writes `W ×̄₃ r` into `out` (length `C_e²`).
#[inline]
pub(crate) fn contract_relation_mode(core: &[f64], r: &[f64], out: &mut [f64]) {
    let cr = r.len();
    for (m, tube) in out.iter_mut().zip(core.chunks_exact(cr)) {
        *m = tube.iter().zip(r).map(|(w, rz)| w * rz).sum();
    }
}

/// Local Tucker score `Σ_x Σ_y Σ_z w_xyz h_x t_y r_z`.
pub fn tucker_score_local(core: &CoreTensor, h: &[f64], t: &[f64], r: &[f64]) -> Result<f64> {
    check_len("local head partition", core.entity_width, h.len())?;
    check_len("local tail partition", core.entity_width, t.len())?;
    check_len("local relation partition", core.relation_width, r.len())?;
    let mut acc = 0.0;
    for (x, &hx) in h.iter().enumerate() {
        for (y, &ty) in t.iter().enumerate() {
            let base = core.offset(x, y, 0);
            let tube = &core.data[base..base + core.relation_width];
            let wr: f64 = tube.iter().zip(r).map(|(w, rz)| w * rz).sum();
            acc += hx * ty * wr;
        }
    }
    Ok(acc)
}

/// Matching matrix `M = W ×̄₃ r`, with `m_xy = Σ_z w_xyz r_z`.
pub fn matching_matrix(core: &CoreTensor, r: &[f64]) -> Result<MatchingMatrix> {
    check_len("matching relation partition", core.relation_width, r.len())?;
    let dim = core.entity_width;
    let mut data = vec![0.0; dim * dim];
    contract_relation_mode(&core.data, r, &mut data);
    Ok(MatchingMatrix { dim, data })
}

fn check_cores(cores: &[CoreTensor], parts: usize, ce: usize, cr: usize) -> Result<()> {
    if cores.len() != 1 && cores.len() != parts {
        return Err(Error::Shape {
            what: "number of cores (1 shared or one per partition)",
            expected: parts,
            found: cores.len(),
        });
    }
    for core in cores {
        check_len("core entity width", ce, core.entity_width)?;
        check_len("core relation width", cr, core.relation_width)?;
    }
    Ok(())
}

#[inline]
fn core_for(cores: &[CoreTensor], k: usize) -> &CoreTensor {
    if cores.len() == 1 {
        &cores[0]
    } else {
        &cores[k]
    }
}

/// Block term score: the sum over partitions of `h_kᵀ (W_k ×̄₃ r_k) t_k`.
///
/// `cores` holds either one shared core or one core per partition.
pub fn mei_score(
    h: PartitionedVector<'_>,
    t: PartitionedVector<'_>,
    r: PartitionedVector<'_>,
    cores: &[CoreTensor],
) -> Result<f64> {
    let parts = h.parts();
    check_len("tail partitions", parts, t.parts())?;
    check_len("relation partitions", parts, r.parts())?;
    check_len("tail partition width", h.width(), t.width())?;
    check_cores(cores, parts, h.width(), r.width())?;
    let ce = h.width();
    let mut m = vec![0.0; ce * ce];
    let mut total = 0.0;
    for k in 0..parts {
        contract_relation_mode(&core_for(cores, k).data, r.part(k), &mut m);
        total += bilinear_kernel(&m, h.part(k), t.part(k));
    }
    Ok(total)
}

/// `hᵀ M⁽ˢ⁾ t` where `M⁽ˢ⁾` is block diagonal with the given blocks. The full
/// `D_e × D_e` matrix is never built.
pub fn block_diagonal_score(h: &[f64], t: &[f64], blocks: &[MatchingMatrix]) -> Result<f64> {
    let Some(first) = blocks.first() else {
        return Err(Error::Shape {
            what: "number of diagonal blocks",
            expected: 1,
            found: 0,
        });
    };
    let dim = first.dim;
    for b in blocks {
        check_len("diagonal block size", dim, b.dim)?;
    }
    check_len("block diagonal head", dim * blocks.len(), h.len())?;
    check_len("block diagonal tail", dim * blocks.len(), t.len())?;
    Ok(blocks
        .iter()
        .enumerate()
        .map(|(k, b)| bilinear_kernel(&b.data, &h[k * dim..(k + 1) * dim], &t[k * dim..(k + 1) * dim]))
        .sum())
}

/// Direct sum of partition cores in coordinate form: the `D_e × D_e × D_r`
/// core whose only nonzero entries sit on the `K` diagonal blocks.
#[derive(Debug, Clone)]
pub struct DirectSumCore {
    dims: (usize, usize),
    entries: Vec<(usize, usize, usize, f64)>,
}

impl DirectSumCore {
    pub fn new(cores: &[CoreTensor], parts: usize) -> Result<Self> {
        let first = cores.first().ok_or(Error::Shape {
            what: "number of cores",
            expected: parts,
            found: 0,
        })?;
        let (ce, cr) = (first.entity_width, first.relation_width);
        check_cores(cores, parts, ce, cr)?;
        let mut entries = Vec::new();
        for k in 0..parts {
            let core = core_for(cores, k);
            for x in 0..ce {
                for y in 0..ce {
                    for z in 0..cr {
                        let w = core.get(x, y, z);
                        if w != 0.0 {
                            entries.push((k * ce + x, k * ce + y, k * cr + z, w));
                        }
                    }
                }
            }
        }
        Ok(Self {
            dims: (parts * ce, parts * cr),
            entries,
        })
    }

    pub fn entity_dim(&self) -> usize {
        self.dims.0
    }

    pub fn relation_dim(&self) -> usize {
        self.dims.1
    }

    pub fn nonzeros(&self) -> usize {
        self.entries.len()
    }

    /// `W⁽ˢ⁾ ×̄₁ h ×̄₂ t ×̄₃ r`.
    pub fn contract(&self, h: &[f64], t: &[f64], r: &[f64]) -> Result<f64> {
        check_len("sparse Tucker head", self.dims.0, h.len())?;
        check_len("sparse Tucker tail", self.dims.0, t.len())?;
        check_len("sparse Tucker relation", self.dims.1, r.len())?;
        Ok(self
            .entries
            .iter()
            .map(|&(i, j, l, w)| w * h[i] * t[j] * r[l])
            .sum())
    }
}

/// Score of the full vectors against the direct-sum core of `parts`
/// partitions.
pub fn sparse_tucker_score(
    h: &[f64],
    t: &[f64],
    r: &[f64],
    cores: &[CoreTensor],
    parts: usize,
) -> Result<f64> {
    DirectSumCore::new(cores, parts)?.contract(h, t, r)
}

/// `⟨h, t, r⟩ = Σ_i h_i t_i r_i`.
pub fn trilinear_score(h: &[f64], t: &[f64], r: &[f64]) -> Result<f64> {
    check_len("trilinear tail", h.len(), t.len())?;
    check_len("trilinear relation", h.len(), r.len())?;
    Ok(h.iter().zip(t).zip(r).map(|((a, b), c)| a * b * c).sum())
}

/// RESCAL form `hᵀ M_r t` with a dense row-major `D × D` relation matrix.
pub fn bilinear_score(h: &[f64], relation_matrix: &[f64], t: &[f64]) -> Result<f64> {
    check_len("bilinear tail", h.len(), t.len())?;
    check_len("bilinear relation matrix", h.len() * h.len(), relation_matrix.len())?;
    Ok(bilinear_kernel(relation_matrix, h, t))
}
