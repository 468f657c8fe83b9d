//! Camera paths. The world is z-up; the camera looks at a fixed target with
//! its image x axis horizontal before the device roll is applied.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion};

use super::spec::{PathSpec, TrajectorySpec};
use super::SimError;
use crate::geometry::{Pose, Vec3};

pub const WORLD_UP: Vec3 = Vec3::new(0.0, 0.0, 1.0);

/// Camera position on the path for frame `i`.
pub fn camera_position(spec: &TrajectorySpec, target: &Vec3, i: usize) -> Vec3 {
    let n = spec.n_frames;
    match &spec.path {
        PathSpec::Orbit { radius, height, start_deg, sweep_deg } => {
            let a = (start_deg + sweep_deg * i as f64 / n as f64).to_radians();
            Vec3::new(target.x + radius * a.cos(), target.y + radius * a.sin(), *height)
        }
        PathSpec::Lawnmower { x_range, y_range, rows, height } => {
            let row_len = x_range[1] - x_range[0];
            let total = row_len * *rows as f64;
            let s = if n > 1 { total * i as f64 / (n - 1) as f64 } else { 0.0 };
            let row = ((s / row_len).floor() as usize).min(rows - 1);
            let along = s - row_len * row as f64;
            let x = if row % 2 == 0 { x_range[0] + along } else { x_range[1] - along };
            let y = if *rows > 1 { y_range[0] + (y_range[1] - y_range[0]) * row as f64 / (rows - 1) as f64 } else { y_range[0] };
            Vec3::new(x, y, *height)
        }
    }
}

/// World-from-camera pose looking from `position` at `target`, rolled by
/// `roll` radians about the optical axis.
pub fn look_at(position: &Vec3, target: &Vec3, roll: f64) -> Result<Pose, SimError> {
    let forward = (target - position)
        .try_normalize(1e-9)
        .ok_or_else(|| SimError::Spec("camera position coincides with its target".into()))?;
    let right = forward
        .cross(&WORLD_UP)
        .try_normalize(1e-6)
        .ok_or_else(|| SimError::Spec("camera looks straight up or down; heading undefined".into()))?;
    let down = forward.cross(&right);
    let base = Matrix3::from_columns(&[right, down, forward]);
    let rolled = base * Rotation3::from_axis_angle(&Vec3::z_axis(), roll).into_inner();
    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(rolled));
    Ok(Pose::new(rotation, *position))
}

/// Unit gravity direction in camera coordinates.
pub fn gravity_in_camera(pose: &Pose) -> Vec3 {
    (pose.rotation.inverse() * -WORLD_UP).normalize()
}
