//! Finite-dimensional laboratory for operator-algebra perturbation
//! theory: matrix subalgebras, completely bounded norms, virtual
//! h-diagonals, the almost-multiplicative-to-multiplicative iteration,
//! neighboring-representation similarities, and the end-to-end
//! Kadison-Kastler pipeline with a full audit of every constant.

pub mod algebra;
pub mod dist;
pub mod error;
pub mod htensor;
pub mod johnson;
pub mod matrix;
pub mod maps;
pub mod perturbation;
pub mod pipeline;
pub mod similarity;
pub mod tol;

pub use algebra::{
    build_algebra, build_algebra_with, build_space, commutant, conditional_expectation,
    full_matrix_algebra,
    full_matrix_space, multi_matrix_algebra, BlockStructure, OperatorAlgebra, OperatorSpace,
};
pub use dist::{dist_to_subspace, dist_to_unit_ball, dist_with_projection, DistOutcome};
pub use error::{KkError, Result};
pub use htensor::{
    canonical_diagonal, check_diagonal, elementary_operator, h_norm_interval, module_action,
    multiply, transport_diagonal, DiagonalCertificate, TensorElement,
};
pub use johnson::{
    basis_defect_residual, homomorphize, johnson_step, IterationSchedule, JohnsonOptions,
    StepRecord,
};
pub use maps::{
    ampliation, cb_norm_interval, compose, defect, defect_hcb_interval, invert, invert_onto,
    op_norm_interval, BallGeometry, BilinearDefect, LinearOperatorMap, NormInterval,
};
pub use perturbation::{
    cb_near_inclusion_check, generate_instance, kk_distance_interval, near_inclusion_gamma,
    CbLevelMargin, CbNearInclusionReport, PerturbationInstance,
};
pub use pipeline::{
    audit_chain, gamma_feasibility_threshold, run_batch, run_pipeline, BatchConfig, BatchRecord,
    BatchSummary, ChainAudit, PipelineMode, PipelineReport, TAggregate, Verdict,
    GAMMA_DENOMINATOR, SIMILARITY_CONSTANT,
};
pub use similarity::{
    build_similarity, commutant_distance, derivation_residual, inner_derivation, leibniz_residual,
    solve_derivation, Representation,
    SimilarityOutcome,
};
pub use tol::{SearchParams, Tolerances};
