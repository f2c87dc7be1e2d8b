use rayon::prelude::*;

use super::{CameraModel, FramePair};
use crate::grid::Grid;
use crate::sim::RobotState;
use crate::world::{CropRowWorld, HeightField, Primitive, Scene, Vec3};

/// Optical center and orthonormal axes of the camera in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub origin: Vec3,
    pub forward: Vec3,
    pub left: Vec3,
    pub up: Vec3,
}

impl CameraModel {
    /// Camera pose for a robot standing on `ground`.
    ///
    /// The mount offset and pitch are applied in the robot body frame, which
    /// itself follows the local terrain slope.
    pub fn pose(&self, robot: &RobotState, ground: &HeightField) -> CameraPose {
        let (sin_h, cos_h) = robot.theta.sin_cos();
        let (gx, gy) = ground.gradient(robot.x, robot.y);
        let slope_forward = gx * cos_h + gy * sin_h;
        let slope_left = -gx * sin_h + gy * cos_h;
        let forward = Vec3::new(cos_h, sin_h, slope_forward).normalize();
        let left_raw = Vec3::new(-sin_h, cos_h, slope_left);
        let up = forward.cross(&left_raw).normalize();
        let left = up.cross(&forward);

        let base = Vec3::new(robot.x, robot.y, ground.height(robot.x, robot.y));
        let origin = base + forward * self.mount_forward + up * self.mount_height;
        let (sp, cp) = self.mount_pitch.sin_cos();
        CameraPose {
            origin,
            forward: forward * cp + up * sp,
            left,
            up: up * cp - forward * sp,
        }
    }
}

impl CameraPose {
    fn to_camera(self, p: &Vec3) -> (f64, f64, f64) {
        let d = p - self.origin;
        (d.dot(&self.forward), -d.dot(&self.left), d.dot(&self.up))
    }
}

/// Renders the world as seen by the camera on `robot`.
pub fn render_frame(world: &CropRowWorld, robot: &RobotState, cam: &CameraModel) -> FramePair {
    let pose = cam.pose(robot, &world.ground);
    let mut frame = render_scene(world.scene(), &pose, cam);
    frame.timestamp = robot.t;
    frame
}

struct Visible<'a> {
    primitive: &'a Primitive,
    rows: (usize, usize),
    cols: (usize, usize),
}

/// Pixel rectangle that can contain the primitive, or `None` when it is
/// outside the view frustum or beyond range.
fn screen_bounds(p: &Primitive, pose: &CameraPose, cam: &CameraModel) -> Option<((usize, usize), (usize, usize))> {
    let (center, radius) = p.bounding_sphere();
    if (center - pose.origin).norm() - radius > cam.max_range {
        return None;
    }
    let tan_h = (0.5 * cam.horizontal_fov).tan();
    let tan_v = (0.5 * cam.vertical_fov).tan();
    let corners = p.bounding_corners().map(|c| pose.to_camera(&c));
    // A convex body lies outside the frustum if all its corners are outside
    // one bounding plane.
    type Outside<'a> = &'a dyn Fn(&(f64, f64, f64)) -> bool;
    let planes: [Outside; 5] = [
        &|c| c.0 <= 0.0,
        &|c| c.1 > c.0 * tan_h,
        &|c| -c.1 > c.0 * tan_h,
        &|c| c.2 > c.0 * tan_v,
        &|c| -c.2 > c.0 * tan_v,
    ];
    if planes.iter().any(|outside| corners.iter().all(outside)) {
        return None;
    }
    let full = ((0, cam.height - 1), (0, cam.width - 1));
    if corners.iter().any(|c| c.0 < 1e-6) {
        return Some(full);
    }
    let (pitch_h, pitch_v) = cam.pixel_pitch();
    let half_w = 0.5 * cam.width as f64;
    let half_h = 0.5 * cam.height as f64;
    let (mut u0, mut u1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, r, z) in &corners {
        let u = half_w + r / x / pitch_h;
        let v = half_h - z / x / pitch_v;
        u0 = u0.min(u);
        u1 = u1.max(u);
        v0 = v0.min(v);
        v1 = v1.max(v);
    }
    let clamp = |a: f64, n: usize| -> usize { a.floor().clamp(0.0, (n - 1) as f64) as usize };
    if u1 < 0.0 || v1 < 0.0 || u0 >= cam.width as f64 || v0 >= cam.height as f64 {
        return None;
    }
    Some((
        (clamp(v0 - 1.0, cam.height), clamp(v1 + 1.0, cam.height)),
        (clamp(u0 - 1.0, cam.width), clamp(u1 + 1.0, cam.width)),
    ))
}

/// Renders an arbitrary scene from an explicit camera pose.
///
/// A pixel is vegetation (confidence 1) when its ray hits a primitive closer
/// than `max_range` and before the ground; its depth is then the range to
/// that hit. Other pixels get the ground range, or `max_range` if the ground
/// is not hit within range.
pub fn render_scene(scene: &Scene, pose: &CameraPose, cam: &CameraModel) -> FramePair {
    let (w, h) = (cam.width, cam.height);
    let visible: Vec<Visible<'_>> = scene
        .primitives
        .iter()
        .filter_map(|p| {
            screen_bounds(p, pose, cam).map(|(rows, cols)| Visible {
                primitive: p,
                rows,
                cols,
            })
        })
        .collect();

    let (pitch_h, pitch_v) = cam.pixel_pitch();
    let right = -pose.left;
    let mut mask = vec![0.0; w * h];
    let mut depth = vec![cam.max_range; w * h];
    mask.par_chunks_mut(w)
        .zip(depth.par_chunks_mut(w))
        .enumerate()
        .for_each(|(i, (mask_row, depth_row))| {
            let b = (0.5 * h as f64 - i as f64 - 0.5) * pitch_v;
            let ray = |j: usize| {
                let a = (j as f64 + 0.5 - 0.5 * w as f64) * pitch_h;
                (pose.forward + right * a + pose.up * b).normalize()
            };
            let mut nearest = vec![f64::INFINITY; w];
            for vis in visible.iter().filter(|v| v.rows.0 <= i && i <= v.rows.1) {
                for (j, best) in nearest.iter_mut().enumerate().take(vis.cols.1 + 1).skip(vis.cols.0) {
                    if let Some(t) = vis.primitive.intersect(&pose.origin, &ray(j)) {
                        *best = best.min(t);
                    }
                }
            }
            for j in 0..w {
                let plant = nearest[j];
                // Ground beyond the nearest plant hit cannot be seen.
                let limit = plant.min(cam.max_range);
                let ground = scene.ground.as_ref().and_then(|g| g.intersect(&pose.origin, &ray(j), limit));
                match ground {
                    Some(tg) => {
                        mask_row[j] = 0.0;
                        depth_row[j] = tg;
                    }
                    None if plant < cam.max_range => {
                        mask_row[j] = 1.0;
                        depth_row[j] = plant;
                    }
                    None => {}
                }
            }
        });

    FramePair {
        soft_mask: Grid::from_vec(w, h, mask).expect("sized above"),
        depth: Grid::from_vec(w, h, depth).expect("sized above"),
        max_range: cam.max_range,
        timestamp: 0.0,
    }
}
