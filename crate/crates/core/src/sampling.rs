//! Hierarchical binary-tree sampling of the 256-way excitation
//! distribution.
//!
//! The 256 μ-law codes sit at the leaves of an 8-level binary tree; each
//! internal node carries a logit whose sigmoid is the probability of the
//! right (numerically higher) branch. Sampling walks the tree root to
//! leaf, so only log₂(Q) of the 255 node logits are ever evaluated, and
//! each branch decision is a single comparison against a precomputed
//! inverse-sigmoid table — no runtime sigmoid at all. Seeding the table
//! with r ∈ ]ξ, 1−ξ[ makes branches of probability below ξ impossible,
//! suppressing the rare-sample noise a flat categorical sampler exhibits.

use rand::Rng;
use thiserror::Error;

use crate::dsp::MuLawIndex;

/// Levels in the full excitation tree: log₂(256).
pub const TREE_LEVELS: u32 = 8;

/// Default table bias: branch probabilities below this are never taken.
pub const DEFAULT_XI: f64 = 0.025;

/// Default inverse-sigmoid table size.
pub const DEFAULT_TABLE_SIZE: usize = 1024;

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("xi = {0} outside [0, 0.5)")]
    InvalidXi(f64),
    #[error("table size {0} < 2")]
    TableTooSmall(usize),
}

/// Heap index of an internal tree node: root is 1, children of `n` are
/// `2n` (left, lower half) and `2n+1` (right, higher half). Ids 256..512
/// are leaves and map to `MuLawIndex` `id - 256`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TreeNodeId(pub u16);

impl TreeNodeId {
    pub const ROOT: Self = Self(1);

    pub fn left(self) -> Self {
        Self(self.0 * 2)
    }

    pub fn right(self) -> Self {
        Self(self.0 * 2 + 1)
    }

    pub fn is_internal(self) -> bool {
        (1..256).contains(&self.0)
    }
}

/// Source of node logits for one sampling step.
///
/// Implementations must be stable within a step (the same node queried
/// twice yields the same value) and count how many distinct nodes they
/// evaluated — the O(log Q) guarantee is asserted through that counter.
pub trait NodeLogitProvider {
    fn node_logit(&mut self, node: TreeNodeId) -> f64;
    fn nodes_evaluated(&self) -> usize;
}

/// Provider backed by a full array of 255 internal-node logits.
pub struct ArrayLogits<'a> {
    logits: &'a [f64; 255],
    evaluated: usize,
}

impl<'a> ArrayLogits<'a> {
    pub fn new(logits: &'a [f64; 255]) -> Self {
        Self {
            logits,
            evaluated: 0,
        }
    }
}

impl NodeLogitProvider for ArrayLogits<'_> {
    fn node_logit(&mut self, node: TreeNodeId) -> f64 {
        self.evaluated += 1;
        self.logits[node.0 as usize - 1]
    }

    fn nodes_evaluated(&self) -> usize {
        self.evaluated
    }
}

fn sigmoid(y: f64) -> f64 {
    1.0 / (1.0 + (-y).exp())
}

fn logit(r: f64) -> f64 {
    (r / (1.0 - r)).ln()
}

/// Precomputed σ⁻¹(r) values for r stratified over ]xi, 1−xi[.
///
/// Entries are quantile midpoints rather than random draws, so the only
/// randomness left in sampling is the uniform index draw.
#[derive(Clone, Debug)]
pub struct InvSigmoidTable {
    xi: f64,
    entries: Vec<f64>,
}

impl InvSigmoidTable {
    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Builds the inverse-sigmoid table: entries[k] = σ⁻¹(xi + (1−2xi)·(k+½)/M).
pub fn build_inv_sigmoid_table(xi: f64, size: usize) -> Result<InvSigmoidTable, SamplingError> {
    if !(0.0..0.5).contains(&xi) {
        return Err(SamplingError::InvalidXi(xi));
    }
    if size < 2 {
        return Err(SamplingError::TableTooSmall(size));
    }
    let m = size as f64;
    let entries = (0..size)
        .map(|k| logit(xi + (1.0 - 2.0 * xi) * (k as f64 + 0.5) / m))
        .collect();
    Ok(InvSigmoidTable { xi, entries })
}

/// Samples one μ-law index by descending the full 8-level tree.
pub fn tree_sample<P, R>(provider: &mut P, table: &InvSigmoidTable, rng: &mut R) -> MuLawIndex
where
    P: NodeLogitProvider,
    R: Rng + ?Sized,
{
    (tree_sample_levels(provider, table, rng, TREE_LEVELS) & 0xff) as MuLawIndex
}

/// Samples a leaf from a `levels`-deep tree (Q = 2^levels outcomes).
///
/// At each node one table entry is drawn uniformly and the right branch is
/// taken iff the node logit strictly exceeds it: P(right) is the fraction
/// of table entries below the logit, which converges to σ(logit) clipped
/// to [xi, 1−xi].
pub fn tree_sample_levels<P, R>(
    provider: &mut P,
    table: &InvSigmoidTable,
    rng: &mut R,
    levels: u32,
) -> usize
where
    P: NodeLogitProvider,
    R: Rng + ?Sized,
{
    debug_assert!(levels >= 1 && levels <= TREE_LEVELS);
    let mut node = TreeNodeId::ROOT;
    for _ in 0..levels {
        let y = provider.node_logit(node);
        let k = rng.gen_range(0..table.entries.len());
        node = if y > table.entries[k] {
            node.right()
        } else {
            node.left()
        };
    }
    node.0 as usize - (1usize << levels)
}

/// Leaf probabilities implied by the 255 node logits: P(leaf) is the
/// product of σ(y) (right turns) and 1−σ(y) (left turns) along its path.
pub fn tree_pdf_from_logits(logits: &[f64; 255]) -> [f64; 256] {
    let mut mass = [0.0f64; 512];
    mass[1] = 1.0;
    for node in 1..256usize {
        let p_right = sigmoid(logits[node - 1]);
        mass[2 * node] = mass[node] * (1.0 - p_right);
        mass[2 * node + 1] = mass[node] * p_right;
    }
    let mut pdf = [0.0f64; 256];
    pdf.copy_from_slice(&mass[256..512]);
    pdf
}

/// Inverse of [`tree_pdf_from_logits`]: node logit = σ⁻¹(right subtree
/// mass / node subtree mass). Zero-mass nodes get logit 0 (unreachable);
/// one-sided nodes are capped at ±30, far past double-rounding saturation.
pub fn tree_logits_from_pdf(pdf: &[f64; 256]) -> [f64; 255] {
    let mut mass = [0.0f64; 512];
    mass[256..512].copy_from_slice(pdf);
    for node in (1..256usize).rev() {
        mass[node] = mass[2 * node] + mass[2 * node + 1];
    }
    let mut logits = [0.0f64; 255];
    for node in 1..256usize {
        logits[node - 1] = if mass[node] <= 0.0 {
            0.0
        } else {
            logit(mass[2 * node + 1] / mass[node]).clamp(-30.0, 30.0)
        };
    }
    logits
}
