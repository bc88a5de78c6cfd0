//! Local Lyapunov pieces, the boundary value problem behind `v3`, mollified
//! patching into a global `V`, and the choice of free constants.

pub mod bvp;
mod constants;
pub mod jet;
mod local;
mod patching;
mod spec;

pub use bvp::{g_zero_limit, solve_g_bvp, solve_g_bvp_with, BvpForm, BvpMethod, BvpOptions, BvpSolution};
pub use constants::{
    choose_alpha, choose_constants, claim_m2_check, initial_rho, seam_generator_check, AlphaChoice, AlphaStep, ClaimM2Check,
    SeamGeneratorCheck, TunedConstants, TuningOptions,
};
pub use jet::EvalJet;
pub use local::{transport_source, v1, v2, v3};
pub use patching::{
    bump, bump_mass, global_v, mollifier, outer_jet_in, outer_zone, patch_v1, patch_v2,
    patch_weights, GlobalLyapunov, Mollifier, PatchWeights, Zone,
};
pub use spec::{delta_hat, q, q_tilde, LyapunovSpec, DEFAULT_CTIL1, DEFAULT_CTIL2, DEFAULT_DELTA};
