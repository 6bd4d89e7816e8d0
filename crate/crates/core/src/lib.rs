//! Entity extraction from OCR'd healthcare referral pages.
//!
//! Pages go through line grouping, token tagging, BIO decoding, rule-based
//! post-processing and per-page selection; predictions are scored against
//! gold spans with MUC-5 counts.

pub mod decode;
pub mod error;
pub mod eval;
pub mod io;
pub mod labels;
pub mod layout;
pub mod model;
pub mod perturb;
pub mod pipeline;
pub mod rules;
pub mod synth;
pub mod tagging;

pub use error::{Error, Result};
pub use model::{BBox, BioTag, Category, EntitySpan, EntityType, Line, Page, ReadingOrder, SpanSource, Token, TokenId};
