//! From profile text to per-segment programs.

mod codify;
mod segment;

pub use codify::{
    codify_profile, codify_segment, extract_program, rag_program, retry_feedback, CodifiedSegment, CodifyError,
    CodifyFailure, CodifyManifest, CodifyOptions, CodifyReport, Profile,
};
pub use segment::{is_heading, segment_profile, Granularity, Segment};
