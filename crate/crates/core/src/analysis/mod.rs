//! Measurement tools for trained bottlenecked models: where KL is spent,
//! which heads and latent dimensions carry information, how patches vote,
//! how much information channels share, and what a head responds to.

mod export;
mod kl;
mod mi;
mod probe;
mod voting;

pub use export::{write_csv, write_csv_records, write_json, write_kl_map, KlMapSidecar, Provenance, Summary};
pub use kl::{
    active_heads, active_latent_dims, kl_survival, patch_kl_map, survival_from_values, HeadActivity, KlAccumulator,
    PatchKLMap, ACTIVE_THRESHOLD,
};
pub use mi::{mi_monte_carlo, nmi_heads, GaussianChannel, MIEstimate, NmiEstimate};
pub use probe::{
    copy_paste_augment, count_identical_patches, forward_with_posteriors, head_channel, repetition_probe, top_count,
    top_activating_patches, top_k_stable, PosteriorTrace, ProbeResult, ProbeSample, TopPatch, TopPatches,
};
pub use voting::{inverse_simpson, jsd, jsd_select, logit_range, patch_votes, softmax, vote_stats, JsdSelection, VoteStats};
