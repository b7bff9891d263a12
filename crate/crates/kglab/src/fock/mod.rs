//! Truncated bosonic Fock space: occupation basis, sparse operators, and
//! the natural Bogoliubov implementer.

pub mod basis;
pub mod implementer;
pub mod ops;

pub use basis::{FockBasis, FockVector};
pub use implementer::{
    cocycle, cocycle_fock_oracle, expected_pairs, intertwining_defect, natural_implementer,
    NaturalImplementer,
};
pub use ops::{
    annihilate, create, field_op, field_op_from_amplitudes, gamma, number_op, pair_annihilate,
    pair_create, FockOperator, GammaBlocks,
};
