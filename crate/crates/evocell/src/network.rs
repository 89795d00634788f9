//! Macro-architecture assembly and analytic cost accounting.
//!
//! A genome's cells are stacked into a full classification network
//! following the standard NASNet-style templates, and the network's
//! Mult-Adds, FLOPS (= 2 x Mult-Adds), and parameter count are computed
//! analytically. No tensors are involved; these are the deterministic
//! objectives of the search.
//!
//! Accounting conventions (they determine the absolute numbers, so they
//! are spelled out):
//!
//! - Mult-Adds count multiplies only: pooling, additions, and
//!   concatenations are free; `speed = 2e9 / FLOPS`.
//! - Every cell calibrates both of its inputs to `F` channels with 1x1
//!   convolutions; a spatially mismatched previous-previous input gets a
//!   stride-2 factorized reduction (costed as a strided 1x1 conv).
//! - In a reduction cell, block arms reading the cell inputs run at
//!   stride 2; `identity` on such an arm becomes a factorized reduction,
//!   and extra connections from the cell inputs are spatially reduced
//!   the same way before concatenation.
//! - The cell's concatenation is projected back to `F` channels with a
//!   final 1x1 convolution.
//! - Convolutions carry no bias; batch normalization adds 2 parameters
//!   per output channel per convolution when enabled (the default).
//! - Filter widths double at each reduction cell of the main stack; the
//!   ImageNet stem is a 3x3 stride-2 convolution to 32 channels followed
//!   by two reduction cells at F/4 and F/2 filters.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genome::{concat_sources, validate, CellGenome, Genome, OperationKind};

/// Errors from plan assembly and cost computation.
#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("invalid genome: {0}")]
    InvalidGenome(String),
    #[error("macro config invalid: {0}")]
    InvalidMacro(String),
    #[error("input resolution {resolution} too small for {reductions} spatial reductions")]
    ResolutionTooSmall { resolution: usize, reductions: usize },
    #[error("zero-size layer shape {0}x{1}x{2}")]
    ZeroShape(usize, usize, usize),
    #[error("inconsistent cell input shapes: prev {0:?}, prev_prev {1:?}")]
    InconsistentShapes(LayerShape, LayerShape),
    #[error("speed is undefined for zero FLOPS")]
    ZeroFlops,
}

/// Which macro template to instantiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MacroTemplate {
    #[serde(rename = "cifar10", alias = "cifar")]
    Cifar,
    #[serde(rename = "imagenet")]
    Imagenet,
}

impl MacroTemplate {
    pub fn default_resolution(self) -> usize {
        match self {
            MacroTemplate::Cifar => 32,
            MacroTemplate::Imagenet => 224,
        }
    }

    pub fn default_classes(self) -> usize {
        match self {
            MacroTemplate::Cifar => 10,
            MacroTemplate::Imagenet => 1000,
        }
    }
}

/// Macro-architecture settings: template, normal-cell repeats N, first
/// stack filter width F, input resolution, and class count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacroConfig {
    pub template: MacroTemplate,
    #[serde(rename = "n")]
    pub repeats: usize,
    #[serde(rename = "f")]
    pub filters: usize,
    #[serde(rename = "resolution")]
    pub input_resolution: usize,
    #[serde(rename = "classes")]
    pub class_count: usize,
}

impl MacroConfig {
    /// The paper-search shaped default: CIFAR template, N=2, F=32.
    pub fn cifar(repeats: usize, filters: usize) -> Self {
        MacroConfig {
            template: MacroTemplate::Cifar,
            repeats,
            filters,
            input_resolution: MacroTemplate::Cifar.default_resolution(),
            class_count: MacroTemplate::Cifar.default_classes(),
        }
    }

    pub fn imagenet(repeats: usize, filters: usize) -> Self {
        MacroConfig {
            template: MacroTemplate::Imagenet,
            repeats,
            filters,
            input_resolution: MacroTemplate::Imagenet.default_resolution(),
            class_count: MacroTemplate::Imagenet.default_classes(),
        }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.repeats == 0 || self.filters == 0 {
            return Err(NetworkError::InvalidMacro(
                "repeats and filters must be at least 1".into(),
            ));
        }
        if self.input_resolution == 0 || self.class_count == 0 {
            return Err(NetworkError::InvalidMacro(
                "resolution and class count must be at least 1".into(),
            ));
        }
        let reductions = match self.template {
            MacroTemplate::Cifar => 2,
            // Stem conv + two stem reduction cells + two stack reductions.
            MacroTemplate::Imagenet => 5,
        };
        if self.input_resolution < (1 << reductions) {
            return Err(NetworkError::ResolutionTooSmall {
                resolution: self.input_resolution,
                reductions,
            });
        }
        Ok(())
    }
}

impl Default for MacroConfig {
    fn default() -> Self {
        MacroConfig::cifar(2, 32)
    }
}

/// Height, width, and channel count of one feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl LayerShape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        LayerShape {
            height,
            width,
            channels,
        }
    }

    /// Spatial size after applying `stride` (ceiling division).
    pub fn strided(self, stride: usize) -> Self {
        LayerShape {
            height: self.height.div_ceil(stride),
            width: self.width.div_ceil(stride),
            channels: self.channels,
        }
    }

    fn check(self) -> Result<Self, NetworkError> {
        if self.height == 0 || self.width == 0 || self.channels == 0 {
            Err(NetworkError::ZeroShape(self.height, self.width, self.channels))
        } else {
            Ok(self)
        }
    }

    fn pixels(self) -> u64 {
        self.height as u64 * self.width as u64
    }
}

/// Mult-Adds, FLOPS, and parameter count for an assembled network (or a
/// part of one). `flops` is always exactly `2 * mult_adds`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CostReport {
    pub mult_adds: u64,
    pub flops: u64,
    pub params: u64,
}

impl CostReport {
    pub fn from_mult_adds(mult_adds: u64, params: u64) -> Self {
        CostReport {
            mult_adds,
            flops: 2 * mult_adds,
            params,
        }
    }

    pub fn add(&mut self, mult_adds: u64, params: u64) {
        self.mult_adds += mult_adds;
        self.params += params;
        self.flops = 2 * self.mult_adds;
    }

    pub fn merge(&mut self, other: CostReport) {
        self.add(other.mult_adds, other.params);
    }
}

/// Inferences-per-second proxy: `2e9 / FLOPS`.
pub fn speed(cost: &CostReport) -> Result<f64, NetworkError> {
    if cost.flops == 0 {
        return Err(NetworkError::ZeroFlops);
    }
    Ok(2e9 / cost.flops as f64)
}

/// One stage of an assembled network plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanStage {
    /// ImageNet stem: 3x3 stride-2 convolution.
    StemConv {
        in_shape: LayerShape,
        out_shape: LayerShape,
    },
    /// One cell instance with its recorded input and output shapes.
    Cell {
        reduction: bool,
        /// Previous cell output (c_{k-1}).
        prev: LayerShape,
        /// Previous-previous cell output (c_{k-2}).
        prev_prev: LayerShape,
        filters: usize,
        out_shape: LayerShape,
    },
    /// Global average pooling over the final feature map.
    GlobalPool { in_shape: LayerShape },
    /// Linear classifier head.
    Classifier { in_features: usize, classes: usize },
}

/// Ordered cell instances with shapes, strides, and channel widths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkPlan {
    pub stages: Vec<PlanStage>,
}

impl NetworkPlan {
    pub fn cell_count(&self) -> (usize, usize) {
        let mut normal = 0;
        let mut reduction = 0;
        for stage in &self.stages {
            if let PlanStage::Cell { reduction: r, .. } = stage {
                if *r {
                    reduction += 1;
                } else {
                    normal += 1;
                }
            }
        }
        (normal, reduction)
    }
}

const STEM_CHANNELS: usize = 32;

/// Assembles the macro plan for a genome: cell sequence, per-cell input
/// shapes (c_{k-1}, c_{k-2}), filter widths, and the classifier head.
pub fn build_network(genome: &Genome, m: &MacroConfig) -> Result<NetworkPlan, NetworkError> {
    let report = validate(genome);
    if !report.is_ok() {
        return Err(NetworkError::InvalidGenome(report.to_string()));
    }
    m.validate()?;

    let input = LayerShape::new(m.input_resolution, m.input_resolution, 3).check()?;
    let mut stages = Vec::new();

    // (kind, filters) sequence; filters double at each stack reduction.
    let mut cells: Vec<(bool, usize)> = Vec::new();
    let f = m.filters;
    let (mut prev, mut prev_prev);
    match m.template {
        MacroTemplate::Cifar => {
            prev = input;
            prev_prev = input;
        }
        MacroTemplate::Imagenet => {
            let stem_out =
                LayerShape::new(input.height.div_ceil(2), input.width.div_ceil(2), STEM_CHANNELS);
            stages.push(PlanStage::StemConv {
                in_shape: input,
                out_shape: stem_out,
            });
            prev = stem_out;
            prev_prev = stem_out;
            cells.push((true, (f / 4).max(1)));
            cells.push((true, (f / 2).max(1)));
        }
    }
    for stack in 0..3 {
        let width = f << stack;
        for _ in 0..m.repeats {
            cells.push((false, width));
        }
        if stack < 2 {
            cells.push((true, width * 2));
        }
    }

    for (is_reduction, filters) in cells {
        let out_spatial = if is_reduction { prev.strided(2) } else { prev };
        let out_shape = LayerShape::new(out_spatial.height, out_spatial.width, filters).check()?;
        stages.push(PlanStage::Cell {
            reduction: is_reduction,
            prev,
            prev_prev,
            filters,
            out_shape,
        });
        prev_prev = prev;
        prev = out_shape;
    }

    stages.push(PlanStage::GlobalPool { in_shape: prev });
    stages.push(PlanStage::Classifier {
        in_features: prev.channels,
        classes: m.class_count,
    });
    Ok(NetworkPlan { stages })
}

/// Cost accounting knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    /// Count 2 batch-norm parameters per convolution output channel.
    pub count_batch_norm: bool,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            count_batch_norm: true,
        }
    }
}

impl CostModel {
    fn bn(&self, channels: usize) -> u64 {
        if self.count_batch_norm {
            2 * channels as u64
        } else {
            0
        }
    }

    /// A plain convolution: `k x k`, `c_in -> c_out`, given output pixels.
    fn conv(&self, kernel: usize, c_in: usize, c_out: usize, out_pixels: u64) -> (u64, u64) {
        let k2 = (kernel * kernel) as u64;
        let mult_adds = k2 * c_in as u64 * c_out as u64 * out_pixels;
        let params = k2 * c_in as u64 * c_out as u64 + self.bn(c_out);
        (mult_adds, params)
    }

    /// Stride-2 spatial reduction, costed as a 1x1 strided convolution.
    fn factorized_reduction(
        &self,
        in_shape: LayerShape,
        out_channels: usize,
    ) -> (u64, u64, LayerShape) {
        let out = LayerShape::new(
            in_shape.height.div_ceil(2),
            in_shape.width.div_ceil(2),
            out_channels,
        );
        let (ma, p) = self.conv(1, in_shape.channels, out_channels, out.pixels());
        (ma, p, out)
    }

    /// Mult-Adds and parameters of one block operation.
    ///
    /// Pooling and stride-1 identity are free. A separable convolution is
    /// one depthwise pass (`k^2 * c_in` multiplies per output pixel) plus
    /// one pointwise pass; batch norm (when counted) covers both. A
    /// stride-2 identity is costed as a factorized reduction.
    pub fn op_cost(
        &self,
        op: OperationKind,
        in_shape: LayerShape,
        out_channels: usize,
        stride: usize,
    ) -> Result<(u64, u64), NetworkError> {
        assert!(stride == 1 || stride == 2, "stride must be 1 or 2");
        in_shape.check()?;
        let out_pixels = in_shape.strided(stride).pixels();
        let c_in = in_shape.channels;
        Ok(match op {
            OperationKind::Identity => {
                if stride == 1 {
                    (0, 0)
                } else {
                    let (ma, p, _) = self.factorized_reduction(in_shape, out_channels);
                    (ma, p)
                }
            }
            OperationKind::AvgPool3x3 | OperationKind::MaxPool3x3 => (0, 0),
            OperationKind::SepConv3x3 | OperationKind::SepConv5x5 | OperationKind::SepConv7x7 => {
                let k = op.sep_conv_kernel().expect("separable conv");
                let k2 = (k * k) as u64;
                let depthwise = k2 * c_in as u64 * out_pixels;
                let pointwise = c_in as u64 * out_channels as u64 * out_pixels;
                let params = k2 * c_in as u64
                    + c_in as u64 * out_channels as u64
                    + self.bn(c_in)
                    + self.bn(out_channels);
                (depthwise + pointwise, params)
            }
        })
    }

    /// Total cost of one cell instance and its output shape.
    ///
    /// Sums the two 1x1 input-calibration convolutions (a spatially
    /// mismatched c_{k-2} gets a stride-2 factorized reduction), every
    /// block arm (stride 2 on cell inputs when reducing), stride-2
    /// reductions for extra connections from cell inputs in a reduction
    /// cell, and the final 1x1 projection from the concatenation back to
    /// `filters` channels.
    pub fn cell_cost(
        &self,
        cell: &CellGenome,
        in_shapes: (LayerShape, LayerShape),
        filters: usize,
        is_reduction: bool,
    ) -> Result<(CostReport, LayerShape), NetworkError> {
        let (prev, prev_prev) = in_shapes;
        prev.check()?;
        prev_prev.check()?;
        if filters == 0 {
            return Err(NetworkError::InvalidMacro("filters must be at least 1".into()));
        }
        let mut cost = CostReport::default();

        // Calibrate c_{k-1} to `filters` channels at its own resolution.
        let calibrated = LayerShape::new(prev.height, prev.width, filters);
        let (ma, p) = self.conv(1, prev.channels, filters, calibrated.pixels());
        cost.add(ma, p);

        // Calibrate c_{k-2}; halve it first when spatially mismatched.
        if (prev_prev.height, prev_prev.width) == (prev.height, prev.width) {
            let (ma, p) = self.conv(1, prev_prev.channels, filters, calibrated.pixels());
            cost.add(ma, p);
        } else {
            let (ma, p, reduced) = self.factorized_reduction(prev_prev, filters);
            if (reduced.height, reduced.width) != (prev.height, prev.width) {
                return Err(NetworkError::InconsistentShapes(prev, prev_prev));
            }
            cost.add(ma, p);
        }

        let out_shape = if is_reduction {
            LayerShape::new(prev.height.div_ceil(2), prev.width.div_ceil(2), filters)
        } else {
            calibrated
        };
        out_shape.check()?;

        for block in &cell.blocks {
            for (source, op) in [(block.input1, block.op1), (block.input2, block.op2)] {
                let (arm_in, stride) = if source.is_cell_input() {
                    (calibrated, if is_reduction { 2 } else { 1 })
                } else {
                    (out_shape, 1)
                };
                let (ma, p) = self.op_cost(op, arm_in, filters, stride)?;
                cost.add(ma, p);
            }
        }

        let sources = concat_sources(cell);
        if is_reduction {
            for source in &sources {
                if source.is_cell_input() {
                    let (ma, p, _) = self.factorized_reduction(calibrated, filters);
                    cost.add(ma, p);
                }
            }
        }
        let concat_channels = sources.len() * filters;
        let (ma, p) = self.conv(1, concat_channels, filters, out_shape.pixels());
        cost.add(ma, p);

        Ok((cost, out_shape))
    }

    /// Total analytic cost of the assembled network.
    pub fn network_cost(&self, genome: &Genome, m: &MacroConfig) -> Result<CostReport, NetworkError> {
        let plan = build_network(genome, m)?;
        self.plan_cost(genome, &plan)
    }

    /// Cost of an already-assembled plan.
    pub fn plan_cost(&self, genome: &Genome, plan: &NetworkPlan) -> Result<CostReport, NetworkError> {
        let mut total = CostReport::default();
        for stage in &plan.stages {
            match stage {
                PlanStage::StemConv { in_shape, out_shape } => {
                    let (ma, p) =
                        self.conv(3, in_shape.channels, out_shape.channels, out_shape.pixels());
                    total.add(ma, p);
                }
                PlanStage::Cell {
                    reduction,
                    prev,
                    prev_prev,
                    filters,
                    ..
                } => {
                    let cell = if *reduction { &genome.reduction } else { &genome.normal };
                    let (cost, _) = self.cell_cost(cell, (*prev, *prev_prev), *filters, *reduction)?;
                    total.merge(cost);
                }
                PlanStage::GlobalPool { .. } => {}
                PlanStage::Classifier { in_features, classes } => {
                    total.add(
                        *in_features as u64 * *classes as u64,
                        *in_features as u64 * *classes as u64,
                    );
                }
            }
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::{random_genome, Block, InputSource};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn all_identity_genome(blocks: usize) -> Genome {
        let cell = CellGenome {
            blocks: (0..blocks)
                .map(|_| Block {
                    input1: InputSource(0),
                    op1: OperationKind::Identity,
                    input2: InputSource(1),
                    op2: OperationKind::Identity,
                })
                .collect(),
            extra: BTreeSet::new(),
        };
        Genome {
            normal: cell.clone(),
            reduction: cell,
        }
    }

    #[test]
    fn cifar_plan_counts_and_final_shape() {
        let g = all_identity_genome(5);
        let plan = build_network(&g, &MacroConfig::cifar(2, 32)).unwrap();
        assert_eq!(plan.cell_count(), (6, 2));
        match plan.stages[plan.stages.len() - 2] {
            PlanStage::GlobalPool { in_shape } => {
                assert_eq!(in_shape, LayerShape::new(8, 8, 128));
            }
            ref other => panic!("unexpected stage {other:?}"),
        }
    }

    #[test]
    fn imagenet_plan_counts() {
        let g = all_identity_genome(5);
        let plan = build_network(&g, &MacroConfig::imagenet(4, 44)).unwrap();
        // Stem + 2 stem reductions + 12 normal + 2 stack reductions.
        assert_eq!(plan.cell_count(), (12, 4));
        assert!(matches!(plan.stages[0], PlanStage::StemConv { .. }));
        match plan.stages.last().unwrap() {
            PlanStage::Classifier { in_features, classes } => {
                assert_eq!(*in_features, 44 * 4);
                assert_eq!(*classes, 1000);
            }
            other => panic!("unexpected stage {other:?}"),
        }
    }

    #[test]
    fn small_resolution_shapes_stay_positive() {
        let g = all_identity_genome(1);
        let mut m = MacroConfig::cifar(1, 1);
        m.input_resolution = 8;
        let plan = build_network(&g, &m).unwrap();
        for stage in &plan.stages {
            if let PlanStage::Cell { out_shape, .. } = stage {
                assert!(out_shape.height > 0 && out_shape.width > 0);
            }
        }
        match plan.stages[plan.stages.len() - 2] {
            PlanStage::GlobalPool { in_shape } => assert_eq!((in_shape.height, in_shape.width), (2, 2)),
            ref other => panic!("unexpected stage {other:?}"),
        }
    }

    #[test]
    fn resolution_too_small_is_rejected() {
        let g = all_identity_genome(1);
        let mut m = MacroConfig::cifar(1, 8);
        m.input_resolution = 2;
        assert!(matches!(
            build_network(&g, &m),
            Err(NetworkError::ResolutionTooSmall { .. })
        ));
    }

    #[test]
    fn op_cost_fixtures() {
        let model = CostModel { count_batch_norm: false };
        let shape = LayerShape::new(32, 32, 16);
        // Depthwise 9*16*32*32 + pointwise 16*16*32*32.
        let (ma, params) = model
            .op_cost(OperationKind::SepConv3x3, shape, 16, 1)
            .unwrap();
        assert_eq!(ma, 147_456 + 262_144);
        assert_eq!(params, 9 * 16 + 16 * 16);
        assert_eq!(model.op_cost(OperationKind::Identity, shape, 16, 1).unwrap(), (0, 0));
        assert_eq!(model.op_cost(OperationKind::MaxPool3x3, shape, 16, 2).unwrap(), (0, 0));
    }

    #[test]
    fn op_cost_batch_norm_params() {
        let model = CostModel::default();
        let shape = LayerShape::new(8, 8, 4);
        let (_, params) = model.op_cost(OperationKind::SepConv3x3, shape, 6, 1).unwrap();
        // Weights + bn on the depthwise (4 ch) and pointwise (6 ch) passes.
        assert_eq!(params, 9 * 4 + 4 * 6 + 2 * 4 + 2 * 6);
    }

    #[test]
    fn op_cost_rejects_zero_shape() {
        let model = CostModel::default();
        assert!(model
            .op_cost(OperationKind::SepConv3x3, LayerShape::new(0, 8, 4), 6, 1)
            .is_err());
    }

    #[test]
    fn all_identity_normal_cell_costs_calibration_plus_projection() {
        let model = CostModel { count_batch_norm: false };
        let g = all_identity_genome(5);
        let shape = LayerShape::new(16, 16, 24);
        let (cost, out) = model
            .cell_cost(&g.normal, (shape, shape), 32, false)
            .unwrap();
        let pixels = 16 * 16u64;
        let calib = 2 * 24 * 32 * pixels;
        // All five blocks are unused, so the concat is 5*F wide.
        let projection = 5 * 32 * 32 * pixels;
        assert_eq!(cost.mult_adds, calib + projection);
        assert_eq!(out, LayerShape::new(16, 16, 32));
    }

    #[test]
    fn all_identity_reduction_cell_pays_factorized_reductions() {
        let model = CostModel { count_batch_norm: false };
        let g = all_identity_genome(5);
        let shape = LayerShape::new(16, 16, 24);
        let (cost, out) = model
            .cell_cost(&g.reduction, (shape, shape), 32, true)
            .unwrap();
        assert_eq!(out, LayerShape::new(8, 8, 32));
        let calib = 2 * 24 * 32 * (16 * 16u64);
        // Ten identity arms on cell inputs become stride-2 factorized
        // reductions at the halved resolution.
        let arm_reductions = 10 * 32 * 32 * (8 * 8u64);
        let projection = 5 * 32 * 32 * (8 * 8u64);
        assert_eq!(cost.mult_adds, calib + arm_reductions + projection);
    }

    #[test]
    fn doubling_filters_roughly_quadruples_pointwise_cost() {
        let model = CostModel { count_batch_norm: false };
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let g = random_genome(&mut rng, 5).unwrap();
        let shape = LayerShape::new(16, 16, 32);
        let (c1, _) = model.cell_cost(&g.normal, (shape, shape), 32, false).unwrap();
        let (c2, _) = model.cell_cost(&g.normal, (shape, shape), 64, false).unwrap();
        let ratio = c2.mult_adds as f64 / c1.mult_adds as f64;
        assert!(ratio > 3.0 && ratio < 4.1, "ratio {ratio}");
    }

    #[test]
    fn classifier_cost_is_features_times_classes() {
        let model = CostModel { count_batch_norm: false };
        let plan = NetworkPlan {
            stages: vec![PlanStage::Classifier { in_features: 64, classes: 10 }],
        };
        let g = all_identity_genome(1);
        let cost = model.plan_cost(&g, &plan).unwrap();
        assert_eq!(cost.mult_adds, 640);
        assert_eq!(cost.params, 640);
        assert_eq!(cost.flops, 1280);
    }

    #[test]
    fn flops_is_twice_mult_adds_and_cost_positive() {
        let model = CostModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let g = random_genome(&mut rng, 5).unwrap();
            let cost = model.network_cost(&g, &MacroConfig::cifar(2, 32)).unwrap();
            assert_eq!(cost.flops, 2 * cost.mult_adds);
            assert!(cost.mult_adds > 0);
            assert!(cost.params > 0);
        }
    }

    #[test]
    fn doubling_resolution_quadruples_mult_adds() {
        let model = CostModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..10 {
            let g = random_genome(&mut rng, 4).unwrap();
            let base = model.network_cost(&g, &MacroConfig::cifar(2, 16)).unwrap();
            let mut doubled = MacroConfig::cifar(2, 16);
            doubled.input_resolution = 64;
            let big = model.network_cost(&g, &doubled).unwrap();
            // The classifier is resolution-independent; convs scale by 4.
            let classifier = 16 * 4 * 10u64;
            assert_eq!(big.mult_adds - classifier, (base.mult_adds - classifier) * 4);
            assert_eq!(big.params, base.params);
        }
    }

    #[test]
    fn cost_invariant_under_serialization_roundtrip(){
        let model = CostModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let g = random_genome(&mut rng, 5).unwrap();
        let back = Genome::from_canonical(&g.to_canonical()).unwrap();
        let m = MacroConfig::cifar(2, 32);
        assert_eq!(model.network_cost(&g, &m).unwrap(), model.network_cost(&back, &m).unwrap());
    }

    #[test]
    fn speed_fixtures() {
        assert_eq!(speed(&CostReport { mult_adds: 1_000_000_000, flops: 2_000_000_000, params: 1 }).unwrap(), 1.0);
        assert_eq!(speed(&CostReport { mult_adds: 500_000_000, flops: 1_000_000_000, params: 1 }).unwrap(), 2.0);
        assert_eq!(speed(&CostReport { mult_adds: 2_000_000_000, flops: 4_000_000_000, params: 1 }).unwrap(), 0.5);
        assert!(speed(&CostReport::default()).is_err());
    }

    #[test]
    fn adding_a_sep_conv_block_never_decreases_cost() {
        let model = CostModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let m = MacroConfig::cifar(1, 16);
        for _ in 0..10 {
            let g = random_genome(&mut rng, 3).unwrap();
            let base = model.network_cost(&g, &m).unwrap();
            let mut bigger = g.clone();
            bigger.normal.blocks.push(Block {
                input1: InputSource(0),
                op1: OperationKind::SepConv5x5,
                input2: InputSource(1),
                op2: OperationKind::SepConv3x3,
            });
            bigger.reduction.blocks.push(Block {
                input1: InputSource(0),
                op1: OperationKind::Identity,
                input2: InputSource(1),
                op2: OperationKind::Identity,
            });
            let grown = model.network_cost(&bigger, &m).unwrap();
            assert!(grown.mult_adds >= base.mult_adds);
        }
    }
}
