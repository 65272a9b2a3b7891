//! Cooperative games over agent coalitions: masking, marginal contributions and
//! exact or sampled semivalues for any distribution over coalition sizes.

mod coalition;
mod semivalue;

pub use coalition::{mask_action, Coalition, MAX_AGENTS};
pub use semivalue::{
    marginal_contribution, sample_coalitions, semivalue_exact, semivalue_mc,
    semivalue_mc_estimate, semivalue_from_samples, semivalues_exact, CoalitionSampler, Game,
    McEstimate, SemivalueSpec, TableGame, ENUMERATION_LIMIT,
};
