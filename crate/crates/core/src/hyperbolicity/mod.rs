//! Projective uniform hyperbolicity: multi-cones, null words, the orbit
//! sets 𝒲⁺ and 𝒲⁻, word-norm growth and the certification decision tree.
//!
//! A `PUH` verdict always carries a multi-cone verified with a strictly
//! positive margin, and `NotPUH` an exact null word or an elliptic periodic
//! word. Everything else is `Unknown`.

mod arcset;
mod certify;
mod cone;
mod orbits;

pub use arcset::{image_arc, ArcSet};
pub use certify::{certify, common_eigenbasis, rank1_puh, Certificate, CertifyOptions, Diagnostics, Margins, Verdict, Witness};
pub use cone::{
    cone_shrink, exclusion_depth, kinv_sets, multicone_search, multicone_verify, search_system, verify_system,
    KinvSets, LetterSystem, MultiCone, SearchFailure, SearchParams, VerifyReport,
};
pub use orbits::{
    null_word_search, word_norm_criterion, wplus_wminus, NullHit, NullSearch, OrbitTree, WReport, WordNormReport,
    WordNormRow, NULL_SIGMA,
};
