//! Random spanning tree Markov random field priors for imaging inverse
//! problems: Wilson tree sampling, difference priors, linear
//! randomize-then-optimize Gibbs sampling and diagnostics.

pub mod diagnostics;
pub mod error;
pub mod forward;
pub mod graph;
pub mod image;
pub mod linalg;
pub mod prior;
pub mod rng;
pub mod sampler;
pub mod tree;

pub use error::{Error, Result};
pub use forward::{apply_forward, make_data, make_phantom, Experiment, ForwardOperator, LinearProblem, Phantom};
pub use graph::{build_grid, difference_operator, graph_laplacian, DifferenceOperator, GridGraph, SpanningForest};
pub use image::{BitDepth, Image};
pub use linalg::{cg_solve, CgOutcome, CgSettings, LinearMap, LinearOperatorStack, SparseMatrix};
pub use prior::{log_prior_density, sample_prior, AuxiliaryScales, DifferencePrior, Family, ScaleMixture};
pub use rng::RngStream;
pub use tree::{
    conjugate_weights, enumerate_trees, matrix_tree_count, wilson_sample, wilson_sample_terminal, TreeDistribution,
    WalkRoot, WilsonSampler,
};
pub use diagnostics::{global_contrast, interface_roughness, max_local_contrast, tree_depth_field};
pub use sampler::{
    gibbs_step, run_chains, sample_conditional_image, ChainConfig, ChainState, ConditionalSettings, GibbsSampler,
    PosteriorSummary,
};
