//! Ray-castable primitives: vertical trunk cylinders, canopy ellipsoids,
//! overhead slabs, and the terrain height field.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Hits closer than this are ignored so a ray never re-hits its own origin.
const MIN_HIT: f64 = 1e-9;

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    /// Vertical cylinder standing on `base` (capped at the top).
    Cylinder { base: Vec3, radius: f64, height: f64 },
    /// Ellipsoid with semi-axes `(along, lateral, vertical)`, rotated by `yaw`
    /// about the vertical axis.
    Ellipsoid { center: Vec3, radii: Vec3, yaw: f64 },
    /// Box with the given half extents, rotated by `yaw` about the vertical.
    Slab { center: Vec3, half_extents: Vec3, yaw: f64 },
}

impl Primitive {
    pub fn sphere(center: Vec3, radius: f64) -> Self {
        Primitive::Ellipsoid {
            center,
            radii: Vec3::repeat(radius),
            yaw: 0.0,
        }
    }

    /// Distance along `dir` (unit length) to the nearest hit in front of `origin`.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        match self {
            Primitive::Cylinder {
                base,
                radius,
                height,
            } => intersect_cylinder(origin, dir, base, *radius, *height),
            Primitive::Ellipsoid { center, radii, yaw } => {
                let (p, q) = to_local(origin, dir, center, *yaw);
                let p = p.component_div(radii);
                let q = q.component_div(radii);
                let a = q.dot(&q);
                let b = 2.0 * p.dot(&q);
                let c = p.dot(&p) - 1.0;
                nearest_root(a, b, c)
            }
            Primitive::Slab {
                center,
                half_extents,
                yaw,
            } => {
                let (p, q) = to_local(origin, dir, center, *yaw);
                let mut t_near = f64::NEG_INFINITY;
                let mut t_far = f64::INFINITY;
                for k in 0..3 {
                    if q[k].abs() < 1e-15 {
                        if p[k].abs() > half_extents[k] {
                            return None;
                        }
                        continue;
                    }
                    let t1 = (-half_extents[k] - p[k]) / q[k];
                    let t2 = (half_extents[k] - p[k]) / q[k];
                    t_near = t_near.max(t1.min(t2));
                    t_far = t_far.min(t1.max(t2));
                }
                if t_near > t_far {
                    None
                } else if t_near > MIN_HIT {
                    Some(t_near)
                } else if t_far > MIN_HIT {
                    Some(t_far)
                } else {
                    None
                }
            }
        }
    }

    /// The eight corners of a box enclosing the primitive.
    pub fn bounding_corners(&self) -> [Vec3; 8] {
        let (lo, hi) = match self {
            Primitive::Cylinder {
                base,
                radius,
                height,
            } => (
                base - Vec3::new(*radius, *radius, 0.0),
                base + Vec3::new(*radius, *radius, *height),
            ),
            Primitive::Ellipsoid { center, radii, yaw } => {
                let e = horizontal_extent(radii, *yaw);
                (center - e, center + e)
            }
            Primitive::Slab {
                center,
                half_extents,
                yaw,
            } => {
                let (s, c) = yaw.sin_cos();
                let ex = half_extents.x * c.abs() + half_extents.y * s.abs();
                let ey = half_extents.x * s.abs() + half_extents.y * c.abs();
                let e = Vec3::new(ex, ey, half_extents.z);
                (center - e, center + e)
            }
        };
        let mut out = [Vec3::zeros(); 8];
        for (k, corner) in out.iter_mut().enumerate() {
            *corner = Vec3::new(
                if k & 1 == 0 { lo.x } else { hi.x },
                if k & 2 == 0 { lo.y } else { hi.y },
                if k & 4 == 0 { lo.z } else { hi.z },
            );
        }
        out
    }

    /// Center and radius of a sphere enclosing the primitive.
    pub fn bounding_sphere(&self) -> (Vec3, f64) {
        let corners = self.bounding_corners();
        let center = (corners[0] + corners[7]) * 0.5;
        (center, (corners[7] - corners[0]).norm() * 0.5)
    }

    /// Footprint used for trunk collision checks: `(x, y, radius)`.
    pub fn trunk_footprint(&self) -> Option<(f64, f64, f64)> {
        match self {
            Primitive::Cylinder { base, radius, .. } => Some((base.x, base.y, *radius)),
            _ => None,
        }
    }
}

fn horizontal_extent(radii: &Vec3, yaw: f64) -> Vec3 {
    let (s, c) = yaw.sin_cos();
    let ex = ((radii.x * c).powi(2) + (radii.y * s).powi(2)).sqrt();
    let ey = ((radii.x * s).powi(2) + (radii.y * c).powi(2)).sqrt();
    Vec3::new(ex, ey, radii.z)
}

fn to_local(origin: &Vec3, dir: &Vec3, center: &Vec3, yaw: f64) -> (Vec3, Vec3) {
    let (s, c) = yaw.sin_cos();
    let rot = |v: Vec3| Vec3::new(c * v.x + s * v.y, -s * v.x + c * v.y, v.z);
    (rot(origin - center), rot(*dir))
}

fn nearest_root(a: f64, b: f64, c: f64) -> Option<f64> {
    if a <= 0.0 {
        return None;
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // Numerically stable pair of roots.
    let q = -0.5 * (b + b.signum() * sq);
    let (mut t1, mut t2) = if q == 0.0 {
        (0.0, 0.0)
    } else {
        (q / a, c / q)
    };
    if t1 > t2 {
        std::mem::swap(&mut t1, &mut t2);
    }
    if t1 > MIN_HIT {
        Some(t1)
    } else if t2 > MIN_HIT {
        Some(t2)
    } else {
        None
    }
}

fn intersect_cylinder(origin: &Vec3, dir: &Vec3, base: &Vec3, radius: f64, height: f64) -> Option<f64> {
    let ox = origin.x - base.x;
    let oy = origin.y - base.y;
    let z_lo = base.z;
    let z_hi = base.z + height;
    let within_height = |t: f64| {
        let z = origin.z + t * dir.z;
        (z_lo..=z_hi).contains(&z)
    };
    let mut best: Option<f64> = None;
    let mut consider = |t: f64| {
        if t > MIN_HIT && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    };

    let a = dir.x * dir.x + dir.y * dir.y;
    if a > 1e-15 {
        let b = 2.0 * (ox * dir.x + oy * dir.y);
        let c = ox * ox + oy * oy - radius * radius;
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                if within_height(t) {
                    consider(t);
                }
            }
        }
    }
    if dir.z.abs() > 1e-15 {
        for z_cap in [z_hi, z_lo] {
            let t = (z_cap - origin.z) / dir.z;
            let x = ox + t * dir.x;
            let y = oy + t * dir.y;
            if x * x + y * y <= radius * radius {
                consider(t);
            }
        }
    }
    best
}

/// Smooth sinusoidal height field
/// `z = amplitude/2 * (sin(2 pi x / wavelength + phase_x) + sin(2 pi y / wavelength + phase_y))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeightField {
    pub amplitude: f64,
    pub wavelength: f64,
    pub phase_x: f64,
    pub phase_y: f64,
}

impl HeightField {
    pub fn flat() -> Self {
        Self {
            amplitude: 0.0,
            wavelength: 1.0,
            phase_x: 0.0,
            phase_y: 0.0,
        }
    }

    fn k(&self) -> f64 {
        std::f64::consts::TAU / self.wavelength
    }

    pub fn height(&self, x: f64, y: f64) -> f64 {
        let k = self.k();
        0.5 * self.amplitude * ((k * x + self.phase_x).sin() + (k * y + self.phase_y).sin())
    }

    /// `(dz/dx, dz/dy)`.
    pub fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let k = self.k();
        (
            0.5 * self.amplitude * k * (k * x + self.phase_x).cos(),
            0.5 * self.amplitude * k * (k * y + self.phase_y).cos(),
        )
    }

    /// First crossing of the ray below the height field within `max_range`.
    ///
    /// The field lies inside the band `|z| <= amplitude`, so only the stretch
    /// of the ray inside that band is marched; the crossing is then refined by
    /// regula falsi.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3, max_range: f64) -> Option<f64> {
        let above = |t: f64| {
            let p = origin + dir * t;
            p.z - self.height(p.x, p.y)
        };
        if self.amplitude == 0.0 {
            if dir.z >= 0.0 {
                return None;
            }
            let t = -origin.z / dir.z;
            return (t > MIN_HIT && t <= max_range).then_some(t);
        }
        if above(0.0) <= 0.0 {
            return None;
        }
        let band = self.amplitude;
        let (t_enter, t_exit) = if dir.z < 0.0 {
            (
                ((band - origin.z) / dir.z).max(0.0),
                ((-band - origin.z) / dir.z).min(max_range),
            )
        } else if origin.z > band {
            return None;
        } else if dir.z > 0.0 {
            (0.0, ((band - origin.z) / dir.z).min(max_range))
        } else {
            (0.0, max_range)
        };
        if t_enter >= t_exit {
            return None;
        }
        // No crossing can occur within f(t) / lipschitz of a point above the
        // field; the fixed minimum step bounds the march length.
        let lipschitz = dir.z.abs() + 0.5 * self.amplitude * self.k() * (dir.x.abs() + dir.y.abs());
        let min_step = self.wavelength / 16.0;
        let mut t0 = t_enter;
        let mut f0 = above(t0);
        while t0 < t_exit {
            let t1 = (t0 + (f0 / lipschitz).max(min_step)).min(t_exit);
            let f1 = above(t1);
            if f1 <= 0.0 {
                return Some(illinois(&above, t0, f0, t1, f1));
            }
            f0 = f1;
            t0 = t1;
        }
        None
    }
}

/// Root of `f` in `[a, b]` with `f(a) > 0 >= f(b)` by the Illinois variant of
/// regula falsi. Returns a point where `f <= 0`, within 1e-10 of the root.
fn illinois(f: &impl Fn(f64) -> f64, mut a: f64, mut fa: f64, mut b: f64, mut fb: f64) -> f64 {
    let mut side = 0;
    for _ in 0..100 {
        if b - a < 1e-10 || fb == 0.0 {
            break;
        }
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = f(c);
        if fc.abs() < 1e-12 && fc <= 0.0 {
            return c;
        }
        if fc > 0.0 {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        } else {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        }
    }
    b
}

/// Everything the camera can see.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scene {
    pub primitives: Vec<Primitive>,
    pub ground: Option<HeightField>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sphere_hit_from_outside() {
        let s = Primitive::sphere(Vec3::new(3.0, 0.0, 0.0), 0.5);
        let t = s.intersect(&Vec3::zeros(), &Vec3::x()).unwrap();
        assert_abs_diff_eq!(t, 2.5, epsilon = 1e-12);
        assert!(s.intersect(&Vec3::zeros(), &-Vec3::x()).is_none());
    }

    #[test]
    fn rotated_ellipsoid_uses_along_axis() {
        let e = Primitive::Ellipsoid {
            center: Vec3::new(0.0, 5.0, 0.0),
            radii: Vec3::new(2.0, 0.5, 1.0),
            yaw: std::f64::consts::FRAC_PI_2,
        };
        // After a quarter turn the long axis points along world y.
        let t = e.intersect(&Vec3::zeros(), &Vec3::y()).unwrap();
        assert_abs_diff_eq!(t, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn cylinder_side_and_cap() {
        let c = Primitive::Cylinder {
            base: Vec3::new(2.0, 0.0, 0.0),
            radius: 0.25,
            height: 1.0,
        };
        let t = c.intersect(&Vec3::new(0.0, 0.0, 0.5), &Vec3::x()).unwrap();
        assert_abs_diff_eq!(t, 1.75, epsilon = 1e-12);
        // Over the top: miss.
        assert!(c.intersect(&Vec3::new(0.0, 0.0, 1.5), &Vec3::x()).is_none());
        // Straight down onto the cap.
        let t = c
            .intersect(&Vec3::new(2.0, 0.0, 3.0), &-Vec3::z())
            .unwrap();
        assert_abs_diff_eq!(t, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn slab_hit() {
        let s = Primitive::Slab {
            center: Vec3::new(0.0, 0.0, 3.0),
            half_extents: Vec3::new(10.0, 1.0, 0.25),
            yaw: 0.0,
        };
        let t = s.intersect(&Vec3::zeros(), &Vec3::z()).unwrap();
        assert_abs_diff_eq!(t, 2.75, epsilon = 1e-12);
    }

    #[test]
    fn flat_ground_hit() {
        let g = HeightField::flat();
        let dir = Vec3::new(1.0, 0.0, -1.0).normalize();
        let t = g.intersect(&Vec3::new(0.0, 0.0, 1.0), &dir, 20.0).unwrap();
        assert_abs_diff_eq!(t, 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn wavy_ground_hit_lies_on_surface() {
        let g = HeightField {
            amplitude: 0.1,
            wavelength: 4.0,
            phase_x: 0.3,
            phase_y: 1.1,
        };
        let origin = Vec3::new(0.0, 0.0, 0.5);
        let dir = Vec3::new(1.0, 0.2, -0.15).normalize();
        let t = g.intersect(&origin, &dir, 20.0).unwrap();
        let p = origin + dir * t;
        assert_abs_diff_eq!(p.z, g.height(p.x, p.y), epsilon = 1e-9);
    }
}
