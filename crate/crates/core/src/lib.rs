//! Synthesis and scoring of lithographic defect datasets.
//!
//! Defect-free binary layouts are perturbed by localized Minkowski erosion or
//! dilation, classified by the change in 8-connected component count, rendered
//! through a blur-and-threshold litho proxy, annotated by differencing the
//! defect-free and defect renders, and exported in a COCO-style format. The
//! [`evaluate`] module scores external detector output against that export.
//!
//! Stages, in pipeline order:
//!
//! 1. [`layout`]: base-layout library (line arrays and seeded composites).
//! 2. [`morphology`]: structuring elements, dilation/erosion, local perturbation,
//!    support function and the boundary-displacement / EPE chain.
//! 3. [`topology`]: component labeling, `Δk`, pinch / bridge / burr classification.
//! 4. [`injection`]: constrained random defect sampling and dataset plans.
//! 5. [`renderer`]: upscale, Gaussian PSF, resist threshold, measured EPE.
//! 6. [`annotate`]: XOR differencing, instance extraction, RLE masks.
//! 7. [`export`]: design-exclusive splits, COCO-style JSON, dataset statistics.
//! 8. [`evaluate`]: IoU matching, AP@0.5 and mAP@0.5.
//!
//! [`pipeline`] wires the stages together behind a single TOML config.

pub mod annotate;
pub mod evaluate;
pub mod export;
pub mod injection;
pub mod layout;
pub mod morphology;
pub mod pipeline;
pub mod pnm;
pub mod renderer;
pub mod seed;
pub mod topology;

pub use annotate::{AnnotationInstance, Category, Rle};
pub use injection::{DefectGroup, DefectRecord};
pub use layout::{BinaryLayout, LayoutKind, LayoutSpec, PixelRect};
pub use morphology::{PerturbationSpec, Sigma, StructuringElement};
pub use pipeline::PipelineConfig;
pub use renderer::{RenderConfig, RenderedImage};
pub use topology::DefectClass;

/// Version tag written into every on-disk artifact.
pub const FORMAT_VERSION: u32 = 1;
