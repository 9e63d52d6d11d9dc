//! Online sliding-window tracking: a buffer of the last `T` frames, the
//! current frame's detections as trajectory queries, and Hungarian linking
//! of window trajectories to persistent tracks.

mod runtime;
mod scorer;

pub use runtime::{
    average_class_scores, link_tracks, postprocess, to_trajectories, track_sequence, window_associate, FrameTrace,
    InferenceConfig, LinkRecord, Track, TrackSet, TrackSlice, TrackingOutput, WindowAssociation,
};
pub use scorer::{window_partition, AssociationScorer, OracleScorer, WindowFrame};

#[cfg(test)]
mod tests;
