use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::{RobotModel, SrbState};

/// A half-space boundary: points with `(p - point)·normal < 0` are inside the obstacle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
}

impl Plane {
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        (p - self.point).dot(&self.normal)
    }

    pub fn project(&self, p: &Vector3<f64>) -> Vector3<f64> {
        p - self.signed_distance(p) * self.normal
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Environment {
    /// Horizontal ground plane.
    Flat {
        #[serde(default)]
        ground_z: f64,
    },
    /// Two vertical walls at `y = ±half_gap`, facing each other. No ground.
    Walls { half_gap: f64 },
    /// Ground far below; nothing to push against until touchdown.
    Airborne {
        #[serde(default)]
        ground_z: f64,
    },
}

impl Default for Environment {
    fn default() -> Self {
        Environment::Flat { ground_z: 0.0 }
    }
}

impl Environment {
    pub fn planes(&self) -> Vec<Plane> {
        match *self {
            Environment::Flat { ground_z } | Environment::Airborne { ground_z } => vec![Plane {
                point: Vector3::new(0.0, 0.0, ground_z),
                normal: Vector3::z(),
            }],
            Environment::Walls { half_gap } => vec![
                Plane {
                    point: Vector3::new(0.0, half_gap, 0.0),
                    normal: -Vector3::y(),
                },
                Plane {
                    point: Vector3::new(0.0, -half_gap, 0.0),
                    normal: Vector3::y(),
                },
            ],
        }
    }

    /// True when feet may push on a surface.
    pub fn admits_contact(&self) -> bool {
        !matches!(self, Environment::Airborne { .. })
    }

    pub fn ground_z(&self) -> Option<f64> {
        match *self {
            Environment::Flat { ground_z } | Environment::Airborne { ground_z } => Some(ground_z),
            Environment::Walls { .. } => None,
        }
    }

    /// Deepest penetration of `p` into any obstacle, 0 when outside all of them.
    pub fn penetration(&self, p: &Vector3<f64>) -> f64 {
        self.planes()
            .iter()
            .map(|pl| -pl.signed_distance(p))
            .fold(0.0, f64::max)
    }

    /// Plane closest to `p`.
    pub fn nearest_plane(&self, p: &Vector3<f64>) -> Plane {
        let planes = self.planes();
        *planes
            .iter()
            .min_by(|a, b| a.signed_distance(p).abs().total_cmp(&b.signed_distance(p).abs()))
            .expect("every environment has a plane")
    }

    /// Initial contact positions and normals for a robot at `x`.
    ///
    /// On the ground each foot sits below its hip plus the foot offset. Between
    /// walls each hip is projected onto the wall on its side.
    pub fn initial_footholds(&self, model: &RobotModel, x: &SrbState) -> (Vec<Vector3<f64>>, Vec<Vector3<f64>>) {
        let mut feet = Vec::with_capacity(model.num_contacts());
        let mut normals = Vec::with_capacity(model.num_contacts());
        for c in &model.contacts {
            let hip = x.r + x.q.rotate(&c.hip());
            let (p, n) = match self {
                Environment::Walls { .. } => {
                    let pl = self.nearest_plane(&hip);
                    (pl.project(&hip), pl.normal)
                }
                _ => {
                    let gz = self.ground_z().unwrap_or(0.0);
                    let yaw = crate::mpc::RelativeFrame::new().update(&x.q);
                    let (s, co) = yaw.sin_cos();
                    let off = Vector3::new(
                        co * c.foot_offset[0] - s * c.foot_offset[1],
                        s * c.foot_offset[0] + co * c.foot_offset[1],
                        0.0,
                    );
                    (Vector3::new(hip.x + off.x, hip.y + off.y, gz), Vector3::z())
                }
            };
            feet.push(p);
            normals.push(n);
        }
        (feet, normals)
    }
}
