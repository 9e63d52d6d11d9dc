//! Boxes, trajectories and the assignment solver shared by inference and
//! evaluation.

mod bbox;
mod hungarian;
mod trajectory;

pub use bbox::{interpolate_box, iou, BBox};
pub use hungarian::{hungarian, AssignmentResult};
pub use trajectory::{trajectory_iou_3d, Trajectory};
