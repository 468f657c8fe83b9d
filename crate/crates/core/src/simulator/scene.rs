//! Sparse point generation: static room features and per-frame object
//! surface samples.

use rand::Rng;

use super::spec::{SceneObject, SceneSpec};
use crate::geometry::Vec3;

/// Keeps static features out of objects by this margin, meters.
const OBJECT_MARGIN: f64 = 0.05;

/// Free-space clutter followed by floor features, sampled once per session.
pub fn static_points<R: Rng>(scene: &SceneSpec, objects: &[SceneObject], rng: &mut R) -> Vec<Vec3> {
    let b = &scene.bounds;
    let free = |p: &Vec3| !objects.iter().any(|o| o.contains(p, OBJECT_MARGIN));
    let mut out = Vec::new();

    let n_clutter = (scene.clutter_density * b.volume()).round() as usize;
    let mut attempts = 0;
    while out.len() < n_clutter && attempts < n_clutter * 50 {
        attempts += 1;
        let p = Vec3::new(
            rng.random_range(b.min[0]..=b.max[0]),
            rng.random_range(b.min[1]..=b.max[1]),
            rng.random_range(b.min[2]..=b.max[2]),
        );
        if free(&p) {
            out.push(p);
        }
    }

    let area = (b.max[0] - b.min[0]) * (b.max[1] - b.min[1]);
    let n_floor = (scene.floor_density * area).round() as usize;
    let start = out.len();
    attempts = 0;
    while out.len() - start < n_floor && attempts < n_floor * 50 {
        attempts += 1;
        let p = Vec3::new(rng.random_range(b.min[0]..=b.max[0]), rng.random_range(b.min[1]..=b.max[1]), b.min[2]);
        if free(&p) {
            out.push(p);
        }
    }
    out
}

/// `n` points on the faces of `obj` that face `camera`, area-weighted. The
/// bottom face is never sampled.
pub fn surface_samples<R: Rng>(obj: &SceneObject, camera: &Vec3, n: usize, rng: &mut R) -> Vec<Vec3> {
    let mut faces: Vec<(usize, f64, f64)> = Vec::with_capacity(5);
    for axis in 0..3 {
        for sign in [-1.0, 1.0] {
            if axis == 2 && sign < 0.0 {
                continue;
            }
            let mut normal = Vec3::zeros();
            normal[axis] = sign;
            let face_center = obj.center + normal * obj.half[axis];
            if (camera - face_center).dot(&normal) <= 0.0 {
                continue;
            }
            let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
            faces.push((axis, sign, 4.0 * obj.half[b] * obj.half[c]));
        }
    }
    let total: f64 = faces.iter().map(|f| f.2).sum();
    if faces.is_empty() || total <= 0.0 {
        return Vec::new();
    }
    (0..n)
        .map(|_| {
            let mut pick = rng.random_range(0.0..total);
            let mut face = faces[faces.len() - 1];
            for f in &faces {
                if pick < f.2 {
                    face = *f;
                    break;
                }
                pick -= f.2;
            }
            let (axis, sign, _) = face;
            let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
            let mut p = obj.center;
            p[axis] += sign * obj.half[axis];
            p[b] += rng.random_range(-1.0..=1.0) * obj.half[b];
            p[c] += rng.random_range(-1.0..=1.0) * obj.half[c];
            p
        })
        .collect()
}

/// True when the open segment from `camera` to `p` passes through any object
/// other than `own`.
pub fn occluded(camera: &Vec3, p: &Vec3, objects: &[SceneObject], own: Option<usize>) -> bool {
    let dir = p - camera;
    objects.iter().enumerate().any(|(k, o)| Some(k) != own && segment_hits_box(camera, &dir, o))
}

/// Slab test on `camera + t * dir` for `t` in (0, 1), shrunk slightly so
/// points lying on a box surface do not occlude themselves.
fn segment_hits_box(origin: &Vec3, dir: &Vec3, obj: &SceneObject) -> bool {
    const EPS: f64 = 1e-6;
    let (lo, hi) = (obj.min(), obj.max());
    let (mut t0, mut t1) = (EPS, 1.0 - EPS);
    for a in 0..3 {
        if dir[a].abs() < 1e-15 {
            if origin[a] < lo[a] || origin[a] > hi[a] {
                return false;
            }
            continue;
        }
        let inv = 1.0 / dir[a];
        let (mut ta, mut tb) = ((lo[a] - origin[a]) * inv, (hi[a] - origin[a]) * inv);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return false;
        }
    }
    true
}
