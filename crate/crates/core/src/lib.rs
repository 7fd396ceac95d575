//! Human-preference-aligned scoring for machine-revised text detection.
//!
//! The crate trains a small byte-level scoring model to prefer
//! human-written text over machine revisions ([`hlpo`]), detects revised
//! text with a standardized conditional probability curvature
//! ([`curvature`]), evaluates detectors ([`evalkit`]), generates revision
//! prompts ([`promptgen`]) and corpora ([`corpusbuild`]), and runs the
//! perturb-and-select humanization attack ([`humanizer`]).

pub mod lm;
pub mod hlpo;
pub mod curvature;
pub mod evalkit;
pub mod humanizer;
pub mod promptgen;
pub mod corpusbuild;
