use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::scorer::{AssociationScorer, WindowFrame};
use crate::error::{Error, Result};
use crate::geometry::{hungarian, BBox, Trajectory};
use crate::head::AssociationDistribution;
use crate::sim::{Detection, DetectionClip};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    /// Frames kept in the buffer, current frame included.
    pub window: usize,
    /// Matches scoring below this start a new track.
    pub new_track_threshold: f64,
    /// Detections below this confidence are ignored.
    pub score_threshold: f64,
    /// Fuse the link score with the IoU against the track's latest box.
    pub use_location: bool,
    /// Tracks with fewer boxes are dropped after the sequence ends.
    pub min_track_length: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            window: 32,
            new_track_threshold: 0.2,
            score_threshold: 0.55,
            use_location: false,
            min_track_length: 5,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Config("window must be >= 1".into()));
        }
        if !(self.new_track_threshold >= 0.0 && self.new_track_threshold.is_finite()) {
            return Err(Error::Config(format!(
                "new-track threshold {} must be a finite non-negative value",
                self.new_track_threshold
            )));
        }
        Ok(())
    }
}

/// A box of a track and the detection it came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackSlice {
    pub bbox: BBox,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_scores: Option<Vec<f64>>,
    /// Index among the buffered (thresholded) detections of the frame.
    pub detection: usize,
    /// Index in the original clip frame.
    pub source: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: u64,
    pub slices: BTreeMap<u32, TrackSlice>,
}

impl Track {
    fn start(id: u64, frame: u32, det: &Detection, detection: usize, source: usize) -> Self {
        let mut t = Self {
            id,
            slices: BTreeMap::new(),
        };
        t.push(frame, det, detection, source);
        t
    }

    fn push(&mut self, frame: u32, det: &Detection, detection: usize, source: usize) {
        self.slices.insert(
            frame,
            TrackSlice {
                bbox: det.bbox,
                confidence: det.confidence,
                class_scores: det.class_scores.clone(),
                detection,
                source,
            },
        );
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn last_box(&self) -> Option<&BBox> {
        self.slices.values().next_back().map(|s| &s.bbox)
    }

    /// Mean of the member class vectors, when every member has one.
    pub fn mean_class_scores(&self) -> Option<Vec<f64>> {
        let mut iter = self.slices.values();
        let mut acc = iter.next()?.class_scores.clone()?;
        for s in iter {
            let v = s.class_scores.as_ref()?;
            if v.len() != acc.len() {
                return None;
            }
            for (a, b) in acc.iter_mut().zip(v) {
                *a += b;
            }
        }
        let n = self.slices.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Some(acc)
    }

    pub fn to_trajectory(&self) -> Result<Trajectory> {
        let traj = Trajectory::new(self.id, self.slices.iter().map(|(f, s)| (*f, s.bbox)).collect())?;
        Ok(match self.mean_class_scores() {
            Some(c) => traj.with_class_scores(c),
            None => traj,
        })
    }
}

/// Output of [`window_associate`].
#[derive(Clone, Debug)]
pub struct WindowAssociation {
    pub distribution: AssociationDistribution,
    /// `trajectories[q][t]`: most likely detection of buffered frame `t`
    /// for query `q`, `None` for `∅`.
    pub trajectories: Vec<Vec<Option<usize>>>,
}

/// Association distributions for the detections of the last buffered frame
/// and the arg-max trajectory of each.
pub fn window_associate(window: &[WindowFrame], scorer: &dyn AssociationScorer) -> Result<WindowAssociation> {
    let distribution = scorer.distribution(window)?;
    let trajectories = (0..distribution.num_queries())
        .map(|q| (0..window.len()).map(|t| distribution.argmax(q, t)).collect())
        .collect();
    Ok(WindowAssociation {
        distribution,
        trajectories,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    /// Index among the current frame's buffered detections.
    pub query: usize,
    pub track: u64,
    /// Link score of the accepted match; `None` for a new track.
    pub score: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameTrace {
    pub frame: u32,
    /// Candidate track ids (rows of `scores`).
    pub candidates: Vec<u64>,
    /// `scores[track][query]`.
    pub scores: Vec<Vec<f64>>,
    pub links: Vec<LinkRecord>,
}

/// Live tracker state.
#[derive(Clone, Debug)]
pub struct TrackSet {
    pub tracks: Vec<Track>,
    pub buffer: VecDeque<WindowFrame>,
    next_id: u64,
}

impl Default for TrackSet {
    fn default() -> Self {
        Self::new()
    }
}

impl TrackSet {
    pub fn new() -> Self {
        Self {
            tracks: Vec::new(),
            buffer: VecDeque::new(),
            next_id: 1,
        }
    }

    /// Appends a frame, evicting the oldest frames beyond `window`.
    pub fn push_frame(&mut self, frame: WindowFrame, window: usize) {
        self.buffer.push_back(frame);
        while self.buffer.len() > window {
            self.buffer.pop_front();
        }
    }

    fn spawn(&mut self, frame: u32, det: &Detection, detection: usize, source: usize) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.tracks.push(Track::start(id, frame, det, detection, source));
        id
    }

    /// Average likelihood, under query `q`, of the track's stored detections
    /// in earlier buffered frames; `None` when the track has none there.
    fn link_score(&self, track: &Track, dist: &AssociationDistribution, q: usize) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (t, wf) in self.buffer.iter().enumerate().take(self.buffer.len() - 1) {
            if let Some(s) = track.slices.get(&wf.frame) {
                sum += dist.prob(q, t, Some(s.detection));
                n += 1;
            }
        }
        (n > 0).then(|| sum / n as f64)
    }
}

/// Matches the current frame's queries to live tracks with the Hungarian
/// algorithm on `1 - score`, rejects matches below the threshold and starts
/// new tracks for every unmatched query.
pub fn link_tracks(tracks: &mut TrackSet, assoc: &WindowAssociation, cfg: &InferenceConfig) -> Result<FrameTrace> {
    let current = tracks
        .buffer
        .back()
        .cloned()
        .ok_or_else(|| Error::Contract("link_tracks needs a non-empty buffer".into()))?;
    let m = current.detections.len();
    if assoc.distribution.num_queries() != m {
        return Err(Error::Contract(format!(
            "{} queries for {m} current detections",
            assoc.distribution.num_queries()
        )));
    }

    let mut candidates = Vec::new();
    let mut scores = Vec::new();
    for (ti, track) in tracks.tracks.iter().enumerate() {
        let row: Option<Vec<f64>> = (0..m)
            .map(|q| {
                tracks.link_score(track, &assoc.distribution, q).map(|s| {
                    if cfg.use_location {
                        let iou = track.last_box().map_or(0.0, |b| b.iou(&current.detections[q].bbox));
                        s.max(iou)
                    } else {
                        s
                    }
                })
            })
            .collect();
        if let Some(row) = row {
            candidates.push(ti);
            scores.push(row);
        }
    }

    let mut owner: Vec<Option<(usize, f64)>> = vec![None; m];
    if !candidates.is_empty() && m > 0 {
        let cost: Vec<Vec<f64>> = scores.iter().map(|r| r.iter().map(|s| 1.0 - s).collect()).collect();
        let result = hungarian(&cost)?;
        for (r, q) in result.pairs() {
            let s = scores[r][q];
            if s >= cfg.new_track_threshold {
                owner[q] = Some((candidates[r], s));
            }
        }
    }

    let mut links = Vec::with_capacity(m);
    for q in 0..m {
        let det = &current.detections[q];
        let record = match owner[q] {
            Some((ti, s)) => {
                tracks.tracks[ti].push(current.frame, det, q, current.source[q]);
                LinkRecord {
                    query: q,
                    track: tracks.tracks[ti].id,
                    score: Some(s),
                }
            }
            None => {
                let id = tracks.spawn(current.frame, det, q, current.source[q]);
                LinkRecord {
                    query: q,
                    track: id,
                    score: None,
                }
            }
        };
        links.push(record);
    }
    Ok(FrameTrace {
        frame: current.frame,
        candidates: candidates.iter().map(|&ti| tracks.tracks[ti].id).collect(),
        scores,
        links,
    })
}

#[derive(Clone, Debug)]
pub struct TrackingOutput {
    pub tracks: Vec<Track>,
    pub trace: Vec<FrameTrace>,
}

/// Online tracking with stride 1 over a whole clip. Nothing emitted for a
/// frame changes once that frame has been processed.
pub fn track_sequence(
    clip: &DetectionClip,
    scorer: &dyn AssociationScorer,
    cfg: &InferenceConfig,
) -> Result<TrackingOutput> {
    cfg.validate()?;
    let mut state = TrackSet::new();
    let mut trace = Vec::with_capacity(clip.frames.len());
    for (i, dets) in clip.frames.iter().enumerate() {
        let frame = i as u32 + 1;
        let (source, detections): (Vec<usize>, Vec<Detection>) = dets
            .iter()
            .enumerate()
            .filter(|(_, d)| d.confidence >= cfg.score_threshold)
            .map(|(j, d)| (j, d.clone()))
            .unzip();
        state.push_frame(
            WindowFrame {
                frame,
                detections,
                source,
            },
            cfg.window,
        );
        let window: Vec<WindowFrame> = state.buffer.iter().cloned().collect();
        let assoc = window_associate(&window, scorer)?;
        trace.push(link_tracks(&mut state, &assoc, cfg)?);
    }
    Ok(TrackingOutput {
        tracks: state.tracks,
        trace,
    })
}

/// Drops tracks with fewer than `min_track_length` boxes.
pub fn postprocess(tracks: Vec<Track>, cfg: &InferenceConfig) -> Vec<Track> {
    tracks.into_iter().filter(|t| t.len() >= cfg.min_track_length).collect()
}

/// Replaces every slice's class vector by the track mean. Tracks with a
/// member lacking scores are left unchanged.
pub fn average_class_scores(tracks: Vec<Track>) -> Vec<Track> {
    tracks
        .into_iter()
        .map(|mut t| {
            match t.mean_class_scores() {
                Some(mean) => {
                    for s in t.slices.values_mut() {
                        s.class_scores = Some(mean.clone());
                    }
                }
                None => log::warn!("track {} has detections without class scores", t.id),
            }
            t
        })
        .collect()
}

pub fn to_trajectories(tracks: &[Track]) -> Result<Vec<Trajectory>> {
    tracks.iter().map(Track::to_trajectory).collect()
}
