//! Affine-in-variables LMIs for filter design.

mod affine;
mod theorems;

pub use affine::{AffineMatrixExpr, LinMat, LmiConstraint, LmiProblem, MatrixVar, Sense, SparseSym, VarId, VariableRegistry};
pub use theorems::{
    blend_lmi, build_positivity_constraints, build_selectors, build_theorem1_lmi, build_theorem1_system,
    build_theorem2_system, lmi_dimension, DelayTerm, FilterVariables, LmiOptions, RuleLmiSet, Selectors, Theorem,
    EPS_STRICT, XI_PATTERNS,
};
