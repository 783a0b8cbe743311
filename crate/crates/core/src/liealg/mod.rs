//! Matrix Lie algebras: bases, hat/vee coordinates, brackets, adjoint actions
//! and group sampling through the matrix exponential.

mod basis;
mod expm;
mod group;

pub use basis::{
    bracket, make_algebra, minkowski_mostly_plus, skew3, structure_constants, symplectic_j,
    AlgebraKind, LieAlgebraBasis, StructureEntry,
};
pub use expm::matrix_exp;
pub use group::{sample_algebra, sample_group, sample_group_or_identity, GroupElement};
