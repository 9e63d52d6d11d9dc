use super::assign::ClipAssignment;
use crate::autodiff::{group_slot, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::head::{AssociationDistribution, FramePartition, GtrParams};
use crate::sim::DetectionClip;

/// Detection features of a clip in frame-major order with their partition.
/// Every detection is also a query.
#[derive(Clone, Debug)]
pub struct ClipFeatures {
    pub partition: FramePartition,
    /// `N × D`; `None` for a clip without detections.
    pub features: Option<Tensor>,
    /// Window frame of every column.
    pub frames: Vec<usize>,
}

impl ClipFeatures {
    pub fn new(dets: &DetectionClip) -> Result<Self> {
        let partition = FramePartition::new(dets.frames.iter().map(Vec::len).collect());
        let features = if partition.total() == 0 {
            None
        } else {
            Some(crate::head::stack_rows(
                dets.frames.iter().flatten().map(|d| d.feature.as_slice()),
                dets.feature_dim,
            )?)
        };
        let frames = partition.frame_of_columns();
        Ok(Self {
            partition,
            features,
            frames,
        })
    }
}

/// Flat indices into the `N × (N + T)` log-probability matrix whose negated
/// sum is the clip loss.
///
/// Query `r` is detection `r` (frame-major). If it belongs to trajectory
/// `k`, each frame `t` contributes the slot of `k`'s detection at `t` (or
/// `∅`); background queries contribute `∅` at every frame.
pub fn loss_indices(partition: &FramePartition, assign: &ClipAssignment) -> Result<Vec<usize>> {
    let frames = partition.num_frames();
    if assign.num_frames() != frames
        || (0..frames).any(|t| assign.detections[t].len() != partition.count(t))
    {
        return Err(Error::Contract("assignment does not match the frame partition".into()));
    }
    let bad_owner = assign.detections.iter().flatten().flatten().any(|&k| k >= assign.tracks.len());
    let bad_track = assign.tracks.iter().any(|tr| {
        tr.len() != frames || tr.iter().enumerate().any(|(t, i)| i.is_some_and(|i| i >= partition.count(t)))
    });
    if bad_owner || bad_track {
        return Err(Error::Contract("assignment refers to missing trajectories or detections".into()));
    }
    let groups = partition.groups();
    let width = partition.total() + frames;
    let mut out = Vec::with_capacity(partition.total() * frames);
    let mut r = 0;
    for s in 0..frames {
        for owner in &assign.detections[s] {
            for t in 0..frames {
                let target = owner.and_then(|k| assign.tracks[k][t]);
                out.push(r * width + group_slot(&groups, t, target));
            }
            r += 1;
        }
    }
    Ok(out)
}

/// `ℓ_bg + Σ_k ℓ_asso` on the graph, from the head's log-probabilities.
pub fn association_loss(
    g: &mut Graph,
    log_probs: Var,
    partition: &FramePartition,
    assign: &ClipAssignment,
) -> Result<Var> {
    let idx = loss_indices(partition, assign)?;
    let neg = g.scale(log_probs, -1.0);
    g.gather_sum(neg, &idx)
}

/// The same loss evaluated from an explicit distribution whose queries are
/// all detections in frame-major order.
pub fn association_loss_value(dist: &AssociationDistribution, assign: &ClipAssignment) -> Result<f64> {
    let part = &dist.partition;
    if dist.num_queries() != part.total() {
        return Err(Error::Contract(format!(
            "{} queries for {} detections",
            dist.num_queries(),
            part.total()
        )));
    }
    loss_indices(part, assign)?;
    let mut total = 0.0;
    let mut r = 0;
    for s in 0..part.num_frames() {
        for owner in &assign.detections[s] {
            for t in 0..part.num_frames() {
                let target = owner.and_then(|k| assign.tracks[k][t]);
                total -= dist.prob(r, t, target).ln();
            }
            r += 1;
        }
    }
    Ok(total)
}

/// Loss of a head whose scores are all zero: `N · Σ_t log(N_t + 1)`.
pub fn uniform_loss(partition: &FramePartition) -> f64 {
    let per_query: f64 = partition.counts().iter().map(|&n| ((n + 1) as f64).ln()).sum();
    partition.total() as f64 * per_query
}

/// Builds the clip loss graph; `None` when the clip has no detections.
pub fn clip_loss(
    g: &mut Graph,
    params: &GtrParams,
    clip: &ClipFeatures,
    assign: &ClipAssignment,
) -> Result<Option<Var>> {
    let Some(f) = &clip.features else { return Ok(None) };
    let out = params.forward(g, f, &clip.partition, f, &clip.frames)?;
    association_loss(g, out.log_probs, &clip.partition, assign).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::head::{association_distribution, AssociationScores};

    fn assignment(tracks: Vec<Vec<Option<usize>>>, detections: Vec<Vec<Option<usize>>>) -> ClipAssignment {
        ClipAssignment {
            track_ids: (0..tracks.len() as u64).collect(),
            tracks,
            detections,
        }
    }

    fn dist(rows: usize, counts: Vec<usize>, logits: Vec<f64>) -> AssociationDistribution {
        association_distribution(&AssociationScores::new(rows, FramePartition::new(counts), logits).unwrap())
    }

    #[test]
    fn uniform_single_trajectory() {
        // One object visible in all T frames among n detections per frame.
        let (t, n) = (3usize, 2usize);
        let tracks = vec![vec![Some(0); t]];
        let detections = vec![vec![Some(0), None]; t];
        let a = assignment(tracks, detections);
        let d = dist(n * t, vec![n; t], vec![0.0; n * t * n * t]);
        let total = association_loss_value(&d, &a).unwrap();
        let uniform = uniform_loss(&d.partition);
        assert!((total - uniform).abs() < 1e-12);
        // The trajectory's own share: T source frames × T target frames.
        let traj_part = (t * t) as f64 * ((n + 1) as f64).ln();
        assert!((uniform * (1.0 / n as f64) - traj_part).abs() < 1e-12);
    }

    #[test]
    fn one_hot_distribution_has_zero_loss() {
        // Frame 0: det 0 = track 0; frame 1: det 0 background, det 1 = track 0.
        let a = assignment(vec![vec![Some(0), Some(1)]], vec![vec![Some(0)], vec![None, Some(0)]]);
        let big = 500.0;
        let logits = vec![
            big, -big, big, // query 0 (track 0)
            -big, -big, -big, // query 1 (background)
            big, -big, big, // query 2 (track 0)
        ];
        let d = dist(3, vec![1, 2], logits);
        assert!(association_loss_value(&d, &a).unwrap().abs() < 1e-12);
    }

    #[test]
    fn hand_instance() {
        // Two frames, one detection each, both belonging to track 0.
        // Query 0 logits [a | b], query 1 logits [c | e].
        let a = assignment(vec![vec![Some(0), Some(0)]], vec![vec![Some(0)], vec![Some(0)]]);
        let l = [0.5f64, -1.0, 2.0, 0.0];
        let d = dist(2, vec![1, 1], l.to_vec());
        let p = |x: f64| x.exp() / (1.0 + x.exp());
        let expect = -(p(l[0]).ln() + p(l[1]).ln() + p(l[2]).ln() + p(l[3]).ln());
        assert!((association_loss_value(&d, &a).unwrap() - expect).abs() < 1e-12);

        // Same instance with the second detection as background.
        let a = assignment(vec![vec![Some(0), None]], vec![vec![Some(0)], vec![None]]);
        let q = |x: f64| 1.0 / (1.0 + x.exp());
        let expect = -(p(l[0]).ln() + q(l[1]).ln() + q(l[2]).ln() + q(l[3]).ln());
        assert!((association_loss_value(&d, &a).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn graph_and_value_agree() {
        let a = assignment(vec![vec![Some(1), None]], vec![vec![None, Some(0)], vec![None]]);
        let logits = vec![0.3, -0.2, 1.1, 0.7, 0.0, -0.4, -1.0, 2.0, 0.2];
        let d = dist(3, vec![2, 1], logits.clone());
        let mut g = Graph::new();
        let x = g.input(Tensor::matrix(3, 3, logits).unwrap());
        let part = FramePartition::new(vec![2, 1]);
        let lp = g.group_log_softmax(x, &part.groups()).unwrap();
        let loss = association_loss(&mut g, lp, &part, &a).unwrap();
        assert!((g.value(loss).item() - association_loss_value(&d, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn mismatched_partition_rejected() {
        let a = assignment(vec![], vec![vec![None]]);
        assert!(loss_indices(&FramePartition::new(vec![2]), &a).is_err());
    }
}
