//! The cell-based search space: encoding, validity rules, canonical
//! serialization, and the uniform crossover/mutation operators.
//!
//! A [`Genome`] is a pair of cells (normal, reduction). Each cell has `B`
//! blocks; block `i` is a 4-tuple `(input1, op1, input2, op2)` whose two
//! operation results are summed. An input refers to the previous-previous
//! cell (0), the previous cell (1), or the output of an earlier block `j`
//! (2 + j). Each cell additionally carries a set of extra connections:
//! sources routed straight to the cell's final depth concatenation.
//!
//! Randomized operators treat a genome as a flat list of components and
//! consume the RNG in a fixed documented order: normal cell blocks in
//! index order (input1, op1, input2, op2 each), then the normal cell's
//! B+2 extra-connection flags ascending, then the reduction cell likewise.

use std::collections::BTreeSet;
use std::fmt;

use num_bigint::BigUint;
use rand::Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

/// Errors from genome construction, parsing, and variation.
#[derive(Debug, Error, PartialEq)]
pub enum GenomeError {
    #[error("block count must be at least 1")]
    ZeroBlocks,
    #[error("genomes have different block counts ({0} vs {1})")]
    BlockCountMismatch(usize, usize),
    #[error("invalid genome: {0}")]
    Invalid(ValidityReport),
    #[error("malformed genome text: {0}")]
    Parse(String),
}

/// The six candidate operations a block arm can apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OperationKind {
    #[serde(rename = "identity")]
    Identity,
    #[serde(rename = "avg_pool_3x3")]
    AvgPool3x3,
    #[serde(rename = "max_pool_3x3")]
    MaxPool3x3,
    #[serde(rename = "sep_conv_3x3")]
    SepConv3x3,
    #[serde(rename = "sep_conv_5x5")]
    SepConv5x5,
    #[serde(rename = "sep_conv_7x7")]
    SepConv7x7,
}

impl OperationKind {
    pub const ALL: [OperationKind; 6] = [
        OperationKind::Identity,
        OperationKind::AvgPool3x3,
        OperationKind::MaxPool3x3,
        OperationKind::SepConv3x3,
        OperationKind::SepConv5x5,
        OperationKind::SepConv7x7,
    ];

    /// The stable serialized name.
    pub fn name(self) -> &'static str {
        match self {
            OperationKind::Identity => "identity",
            OperationKind::AvgPool3x3 => "avg_pool_3x3",
            OperationKind::MaxPool3x3 => "max_pool_3x3",
            OperationKind::SepConv3x3 => "sep_conv_3x3",
            OperationKind::SepConv5x5 => "sep_conv_5x5",
            OperationKind::SepConv7x7 => "sep_conv_7x7",
        }
    }

    /// Kernel size for separable convolutions, `None` otherwise.
    pub fn sep_conv_kernel(self) -> Option<usize> {
        match self {
            OperationKind::SepConv3x3 => Some(3),
            OperationKind::SepConv5x5 => Some(5),
            OperationKind::SepConv7x7 => Some(7),
            _ => None,
        }
    }
}

impl fmt::Display for OperationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where a block arm (or extra connection) reads from: 0 is the
/// previous-previous cell, 1 the previous cell, 2 + j the output of
/// block j.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct InputSource(pub usize);

impl InputSource {
    pub const PREV_PREV: InputSource = InputSource(0);
    pub const PREV: InputSource = InputSource(1);

    /// The source referring to block `j`'s output.
    pub fn block(j: usize) -> Self {
        InputSource(2 + j)
    }

    /// Index of the block this source refers to, if any.
    pub fn block_index(self) -> Option<usize> {
        self.0.checked_sub(2)
    }

    /// True when the source is one of the two cell inputs.
    pub fn is_cell_input(self) -> bool {
        self.0 < 2
    }
}

/// One block: two (input, operation) arms whose results are summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "BlockRepr", into = "BlockRepr")]
pub struct Block {
    pub input1: InputSource,
    pub op1: OperationKind,
    pub input2: InputSource,
    pub op2: OperationKind,
}

/// Wire form of a block: `[i1, "op1", i2, "op2"]`.
type BlockRepr = (InputSource, OperationKind, InputSource, OperationKind);

impl From<BlockRepr> for Block {
    fn from((input1, op1, input2, op2): BlockRepr) -> Self {
        Block {
            input1,
            op1,
            input2,
            op2,
        }
    }
}

impl From<Block> for BlockRepr {
    fn from(b: Block) -> Self {
        (b.input1, b.op1, b.input2, b.op2)
    }
}

/// One cell: `B` blocks plus the extra-connection source set.
///
/// `extra` is kept sorted and deduplicated by construction, which makes
/// the serialized form canonical.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellGenome {
    pub blocks: Vec<Block>,
    #[serde(deserialize_with = "deserialize_extra")]
    pub extra: BTreeSet<InputSource>,
}

fn deserialize_extra<'de, D>(deserializer: D) -> Result<BTreeSet<InputSource>, D::Error>
where
    D: Deserializer<'de>,
{
    let raw = Vec::<InputSource>::deserialize(deserializer)?;
    let mut set = BTreeSet::new();
    for source in raw {
        if !set.insert(source) {
            return Err(D::Error::custom(format!(
                "duplicate extra connection index {}",
                source.0
            )));
        }
    }
    Ok(set)
}

impl CellGenome {
    /// Number of blocks in the cell.
    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Number of legal input sources across the whole cell (`B + 2`).
    pub fn source_count(&self) -> usize {
        self.blocks.len() + 2
    }
}

/// The searchable representation: a normal cell and a reduction cell
/// sharing the same block count.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Genome {
    pub normal: CellGenome,
    pub reduction: CellGenome,
}

impl Genome {
    pub fn block_count(&self) -> usize {
        self.normal.block_count()
    }

    /// Canonical text form; equal genomes serialize identically, so this
    /// doubles as the evaluation-cache key.
    pub fn to_canonical(&self) -> String {
        serde_json::to_string(self).expect("genome serialization cannot fail")
    }

    /// Parses the canonical text form, rejecting malformed syntax,
    /// unknown operation names, duplicate extra connections, and bound
    /// violations.
    pub fn from_canonical(text: &str) -> Result<Self, GenomeError> {
        let genome: Genome =
            serde_json::from_str(text).map_err(|e| GenomeError::Parse(e.to_string()))?;
        let report = validate(&genome);
        if report.is_ok() {
            Ok(genome)
        } else {
            Err(GenomeError::Invalid(report))
        }
    }
}

/// Which of a genome's two cells a violation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellRole {
    Normal,
    Reduction,
}

impl fmt::Display for CellRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellRole::Normal => f.write_str("normal"),
            CellRole::Reduction => f.write_str("reduction"),
        }
    }
}

/// A single validity violation, naming the offending cell/block/field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// A block arm reads a source at or past its own position bound.
    InputExceedsBound {
        cell: CellRole,
        block: usize,
        field: &'static str,
        index: usize,
        bound: usize,
    },
    /// An extra connection refers past the last block.
    ExtraOutOfRange {
        cell: CellRole,
        index: usize,
        bound: usize,
    },
    /// The two cells disagree on block count, or a cell has none.
    WrongBlockCount { normal: usize, reduction: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::InputExceedsBound {
                cell,
                block,
                field,
                index,
                bound,
            } => write!(
                f,
                "{cell} cell block {block} {field}: input {index} exceeds bound {bound}"
            ),
            Violation::ExtraOutOfRange { cell, index, bound } => write!(
                f,
                "{cell} cell: extra connection {index} out of range (max {})",
                bound - 1
            ),
            Violation::WrongBlockCount { normal, reduction } => write!(
                f,
                "cells must have the same nonzero block count (normal {normal}, reduction {reduction})"
            ),
        }
    }
}

/// Outcome of [`validate`]: empty means the genome is well-formed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidityReport {
    pub violations: Vec<Violation>,
}

impl ValidityReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        let mut first = true;
        for v in &self.violations {
            if !first {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
            first = false;
        }
        Ok(())
    }
}

/// Checks every structural invariant and reports all violations.
pub fn validate(genome: &Genome) -> ValidityReport {
    let mut report = ValidityReport::default();
    let nb = genome.normal.block_count();
    let rb = genome.reduction.block_count();
    if nb == 0 || nb != rb {
        report.violations.push(Violation::WrongBlockCount {
            normal: nb,
            reduction: rb,
        });
    }
    for (role, cell) in [
        (CellRole::Normal, &genome.normal),
        (CellRole::Reduction, &genome.reduction),
    ] {
        for (i, block) in cell.blocks.iter().enumerate() {
            let bound = i + 2;
            for (field, source) in [("input1", block.input1), ("input2", block.input2)] {
                if source.0 >= bound {
                    report.violations.push(Violation::InputExceedsBound {
                        cell: role,
                        block: i,
                        field,
                        index: source.0,
                        bound,
                    });
                }
            }
        }
        let bound = cell.source_count();
        for &source in &cell.extra {
            if source.0 >= bound {
                report.violations.push(Violation::ExtraOutOfRange {
                    cell: role,
                    index: source.0,
                    bound,
                });
            }
        }
    }
    report
}

fn random_cell<R: Rng>(rng: &mut R, blocks: usize) -> CellGenome {
    let blocks: Vec<Block> = (0..blocks)
        .map(|i| {
            let bound = i + 2;
            Block {
                input1: InputSource(rng.gen_range(0..bound)),
                op1: OperationKind::ALL[rng.gen_range(0..OperationKind::ALL.len())],
                input2: InputSource(rng.gen_range(0..bound)),
                op2: OperationKind::ALL[rng.gen_range(0..OperationKind::ALL.len())],
            }
        })
        .collect();
    let mut extra = BTreeSet::new();
    for s in 0..blocks.len() + 2 {
        if rng.gen::<bool>() {
            extra.insert(InputSource(s));
        }
    }
    CellGenome { blocks, extra }
}

/// Draws a uniformly random valid genome with `blocks` blocks per cell.
///
/// Each block parameter is uniform over its legal range and each of the
/// B+2 extra-connection candidates is included independently with
/// probability 1/2. RNG consumption follows the documented component
/// order, so a fixed seed yields a fixed genome.
pub fn random_genome<R: Rng>(rng: &mut R, blocks: usize) -> Result<Genome, GenomeError> {
    if blocks == 0 {
        return Err(GenomeError::ZeroBlocks);
    }
    let normal = random_cell(rng, blocks);
    let reduction = random_cell(rng, blocks);
    Ok(Genome { normal, reduction })
}

fn mutate_cell<R: Rng>(cell: &mut CellGenome, mu_mut: f64, rng: &mut R) {
    for i in 0..cell.blocks.len() {
        let bound = i + 2;
        if rng.gen::<f64>() < mu_mut {
            cell.blocks[i].input1 = InputSource(rng.gen_range(0..bound));
        }
        if rng.gen::<f64>() < mu_mut {
            cell.blocks[i].op1 = OperationKind::ALL[rng.gen_range(0..OperationKind::ALL.len())];
        }
        if rng.gen::<f64>() < mu_mut {
            cell.blocks[i].input2 = InputSource(rng.gen_range(0..bound));
        }
        if rng.gen::<f64>() < mu_mut {
            cell.blocks[i].op2 = OperationKind::ALL[rng.gen_range(0..OperationKind::ALL.len())];
        }
    }
    for s in 0..cell.source_count() {
        if rng.gen::<f64>() < mu_mut {
            let member = rng.gen::<bool>();
            if member {
                cell.extra.insert(InputSource(s));
            } else {
                cell.extra.remove(&InputSource(s));
            }
        }
    }
}

/// Uniform mutation: every component is independently resampled over its
/// legal range with probability `mu_mut` (a resample may reproduce the
/// old value). The input genome is left untouched.
pub fn mutate<R: Rng>(genome: &Genome, mu_mut: f64, rng: &mut R) -> Genome {
    debug_assert!((0.0..=1.0).contains(&mu_mut));
    let mut out = genome.clone();
    mutate_cell(&mut out.normal, mu_mut, rng);
    mutate_cell(&mut out.reduction, mu_mut, rng);
    out
}

fn crossover_cells<R: Rng>(a: &mut CellGenome, b: &mut CellGenome, mu_cross: f64, rng: &mut R) {
    for i in 0..a.blocks.len() {
        if rng.gen::<f64>() < mu_cross {
            std::mem::swap(&mut a.blocks[i].input1, &mut b.blocks[i].input1);
        }
        if rng.gen::<f64>() < mu_cross {
            std::mem::swap(&mut a.blocks[i].op1, &mut b.blocks[i].op1);
        }
        if rng.gen::<f64>() < mu_cross {
            std::mem::swap(&mut a.blocks[i].input2, &mut b.blocks[i].input2);
        }
        if rng.gen::<f64>() < mu_cross {
            std::mem::swap(&mut a.blocks[i].op2, &mut b.blocks[i].op2);
        }
    }
    for s in 0..a.source_count() {
        if rng.gen::<f64>() < mu_cross {
            let source = InputSource(s);
            let in_a = a.extra.contains(&source);
            let in_b = b.extra.contains(&source);
            if in_a != in_b {
                if in_a {
                    a.extra.remove(&source);
                    b.extra.insert(source);
                } else {
                    a.extra.insert(source);
                    b.extra.remove(&source);
                }
            }
        }
    }
}

/// Uniform crossover: each aligned component pair is swapped between the
/// two children with probability `mu_cross`. Component bounds depend only
/// on position, so swapping preserves validity.
pub fn crossover<R: Rng>(
    a: &Genome,
    b: &Genome,
    mu_cross: f64,
    rng: &mut R,
) -> Result<(Genome, Genome), GenomeError> {
    debug_assert!((0.0..=1.0).contains(&mu_cross));
    if a.block_count() != b.block_count() {
        return Err(GenomeError::BlockCountMismatch(
            a.block_count(),
            b.block_count(),
        ));
    }
    let mut child_a = a.clone();
    let mut child_b = b.clone();
    crossover_cells(&mut child_a.normal, &mut child_b.normal, mu_cross, rng);
    crossover_cells(&mut child_a.reduction, &mut child_b.reduction, mu_cross, rng);
    Ok((child_a, child_b))
}

/// Block indices whose output is consumed by a later block. The
/// complement ("unused" blocks) feeds the cell's final concatenation.
pub fn used_blocks(cell: &CellGenome) -> BTreeSet<usize> {
    let mut used = BTreeSet::new();
    for block in &cell.blocks {
        for source in [block.input1, block.input2] {
            if let Some(j) = source.block_index() {
                used.insert(j);
            }
        }
    }
    used
}

/// The ordered source list feeding the cell's depth concatenation:
/// unused blocks ascending, then extra connections ascending, with
/// duplicates dropped (a tensor is concatenated at most once).
///
/// If every block were consumed and no extras exist (unreachable for a
/// valid cell, since the last block has no later consumer), the last
/// block's source stands alone.
pub fn concat_sources(cell: &CellGenome) -> Vec<InputSource> {
    let used = used_blocks(cell);
    let mut sources: Vec<InputSource> = (0..cell.block_count())
        .filter(|j| !used.contains(j))
        .map(InputSource::block)
        .collect();
    for &source in &cell.extra {
        if !sources.contains(&source) {
            sources.push(source);
        }
    }
    if sources.is_empty() {
        sources.push(InputSource::block(cell.block_count() - 1));
    }
    sources
}

/// A node of the decoded cell graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellNode {
    /// The previous-previous cell input (source 0).
    PrevPrev,
    /// The previous cell input (source 1).
    Prev,
    /// Block `j` (source 2 + j).
    Block(usize),
    /// The final depth concatenation.
    Concat,
}

/// Explicit DAG form of a cell: `B + 3` nodes, edges from each block's
/// two inputs and from every concat source.
///
/// Node `i` for `i < B + 2` is the input source with index `i`; node
/// `B + 2` is the concatenation. Acyclicity is structural: blocks only
/// read earlier sources, so block index order is a topological order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellDag {
    pub nodes: Vec<CellNode>,
    /// Directed edges as (from, to) node indices, blocks in index order
    /// (input1 before input2), then concat edges in concat-source order.
    pub edges: Vec<(usize, usize)>,
}

impl CellDag {
    /// Index of the concatenation node.
    pub fn concat_index(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Adjacency list keyed by source node index.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(from, to) in &self.edges {
            adj[from].push(to);
        }
        adj
    }
}

/// Decodes a cell into its explicit DAG.
pub fn decode_dag(cell: &CellGenome) -> CellDag {
    let b = cell.block_count();
    let mut nodes = Vec::with_capacity(b + 3);
    nodes.push(CellNode::PrevPrev);
    nodes.push(CellNode::Prev);
    for j in 0..b {
        nodes.push(CellNode::Block(j));
    }
    nodes.push(CellNode::Concat);
    let concat = b + 2;

    let mut edges = Vec::new();
    for (i, block) in cell.blocks.iter().enumerate() {
        edges.push((block.input1.0, 2 + i));
        edges.push((block.input2.0, 2 + i));
    }
    for source in concat_sources(cell) {
        edges.push((source.0, concat));
    }
    CellDag { nodes, edges }
}

/// Ordered and pair-symmetry-adjusted sizes of the search space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchSpaceSize {
    /// Ordered count: every (input, op) arm choice distinct, i.e.
    /// `[prod_i ((i+2) * ops)^2]^2 * 2^(2(B+2))`.
    pub ordered: BigUint,
    /// Ordered count divided by 2^(2B): each block's two arms treated as
    /// an unordered pair (arm order does not change the summed output).
    pub symmetry_adjusted: BigUint,
}

/// Counts genomes for two cells of `blocks` blocks over `op_count`
/// operations, including all extra-connection subsets.
pub fn search_space_size(blocks: usize, op_count: usize) -> SearchSpaceSize {
    assert!(blocks >= 1 && op_count >= 1);
    let mut per_cell = BigUint::from(1u32);
    for i in 0..blocks {
        let arm = BigUint::from((i + 2) * op_count);
        per_cell *= &arm * &arm;
    }
    let extras_per_cell = BigUint::from(2u32).pow((blocks + 2) as u32);
    let ordered = (&per_cell * &extras_per_cell).pow(2);
    let symmetry_adjusted = &ordered / BigUint::from(2u32).pow(2 * blocks as u32);
    SearchSpaceSize {
        ordered,
        symmetry_adjusted,
    }
}
