//! Everything in the scene that is not the robot.

use std::collections::BTreeMap;

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector2, Vector3};

/// Cube edge length. The scenarios assume a desk-scale object; nothing
/// else in the pipeline depends on the exact value.
pub const CUBE_EDGE: f64 = 0.030;

#[derive(Debug, Clone)]
pub struct Table {
    pub center: Vector2<f64>,
    pub half_extents: Vector2<f64>,
    /// z of the table top surface.
    pub top: f64,
}

impl Table {
    /// Distance from a ground-plane point to the table footprint
    /// rectangle (zero inside).
    pub fn distance_xy(&self, p: &Vector2<f64>) -> f64 {
        let d = (p - self.center).abs() - self.half_extents;
        let outside = Vector2::new(d.x.max(0.0), d.y.max(0.0));
        outside.norm()
    }
}

#[derive(Debug, Clone)]
pub struct CubePose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl CubePose {
    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    pub fn set_from_isometry(&mut self, iso: &Isometry3<f64>) {
        self.position = iso.translation.vector;
        self.orientation = iso.rotation;
    }
}

#[derive(Debug, Clone)]
pub struct PlaceTarget {
    pub center: Vector2<f64>,
    pub radius: f64,
}

/// While attached the cube pose is slaved to the end effector through
/// the grasp transform frozen at the moment fingers closed on it.
#[derive(Debug, Clone, Default)]
pub enum Attachment {
    #[default]
    Free,
    Attached {
        grasp: Isometry3<f64>,
    },
}

impl Attachment {
    pub fn is_attached(&self) -> bool {
        matches!(self, Attachment::Attached { .. })
    }
}

#[derive(Debug, Clone)]
pub struct WorldState {
    pub table: Table,
    pub cube: CubePose,
    pub place: PlaceTarget,
    pub waypoints: BTreeMap<String, Vector2<f64>>,
    pub attachment: Attachment,
    pub time: f64,
}

impl WorldState {
    /// Cube center height when resting on the table.
    pub fn rest_z(&self) -> f64 {
        self.table.top + CUBE_EDGE / 2.0
    }

    /// Horizontal distance from the cube to the place target center.
    pub fn cube_to_place_xy(&self) -> f64 {
        (self.cube.position.xy() - self.place.center).norm()
    }

    pub fn cube_placed(&self) -> bool {
        !self.attachment.is_attached()
            && self.cube_to_place_xy() <= self.place.radius
            && (self.cube.position.z - self.rest_z()).abs() < 1e-6
    }

    #[doc(hidden)]
    pub fn test_default() -> Self {
        let mut waypoints = BTreeMap::new();
        waypoints.insert("B".to_string(), Vector2::new(0.9, 0.0));
        waypoints.insert("C".to_string(), Vector2::new(2.1, 0.0));
        WorldState {
            table: Table {
                center: Vector2::new(1.5, 0.75),
                half_extents: Vector2::new(0.6, 0.4),
                top: 0.72,
            },
            cube: CubePose {
                position: Vector3::new(1.95, 0.55, 0.735),
                orientation: UnitQuaternion::identity(),
            },
            place: PlaceTarget {
                center: Vector2::new(1.05, 0.55),
                radius: 0.025,
            },
            waypoints,
            attachment: Attachment::Free,
            time: 0.0,
        }
    }
}
