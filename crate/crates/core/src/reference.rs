//! Reference trajectories and the per-stage reference windows handed to the controllers.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::State12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefPoint {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub yaw: f64,
}

/// How roll and pitch references are derived from a reference point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttitudeReference {
    /// Roll and pitch references are zero.
    Level,
    /// Roll and pitch that point the thrust axis along `a_ref + g ẑ` at the reference yaw.
    #[default]
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceGenerator {
    /// `(r cos ωt, r sin ωt, c t)`.
    Helix {
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default = "default_angular_rate")]
        angular_rate: f64,
        #[serde(default = "default_climb_rate")]
        climb_rate: f64,
    },
    Hover {
        #[serde(default)]
        position: [f64; 3],
    },
}

fn default_radius() -> f64 {
    2.0
}

fn default_angular_rate() -> f64 {
    0.4
}

fn default_climb_rate() -> f64 {
    0.2
}

impl Default for ReferenceGenerator {
    fn default() -> Self {
        ReferenceGenerator::Helix {
            radius: default_radius(),
            angular_rate: default_angular_rate(),
            climb_rate: default_climb_rate(),
        }
    }
}

impl ReferenceGenerator {
    pub fn at(&self, t: f64) -> RefPoint {
        match *self {
            ReferenceGenerator::Helix {
                radius,
                angular_rate,
                climb_rate,
            } => {
                let (s, c) = (angular_rate * t).sin_cos();
                let w2 = angular_rate * angular_rate;
                RefPoint {
                    position: Vector3::new(radius * c, radius * s, climb_rate * t),
                    velocity: Vector3::new(-radius * angular_rate * s, radius * angular_rate * c, climb_rate),
                    acceleration: Vector3::new(-radius * w2 * c, -radius * w2 * s, 0.0),
                    yaw: 0.0,
                }
            }
            ReferenceGenerator::Hover { position } => RefPoint {
                position: Vector3::from(position),
                velocity: Vector3::zeros(),
                acceleration: Vector3::zeros(),
                yaw: 0.0,
            },
        }
    }
}

/// The helix `x = 2 cos(0.4 t)`, `y = 2 sin(0.4 t)`, `z = 0.2 t` with zero yaw.
pub fn helix_reference(t: f64) -> RefPoint {
    ReferenceGenerator::default().at(t)
}

impl RefPoint {
    /// Roll and pitch reference for this point.
    pub fn attitude(&self, mode: AttitudeReference, gravity: f64) -> (f64, f64) {
        match mode {
            AttitudeReference::Level => (0.0, 0.0),
            AttitudeReference::Flat => {
                let a = self.acceleration + Vector3::new(0.0, 0.0, gravity);
                let (s, c) = self.yaw.sin_cos();
                // Rotate into the yaw-aligned frame, then solve R e₃ ∥ a.
                let ax = c * a[0] + s * a[1];
                let ay = -s * a[0] + c * a[1];
                let theta = ax.atan2(a[2]);
                let phi = (-ay).atan2((ax * ax + a[2] * a[2]).sqrt());
                (phi, theta)
            }
        }
    }

    /// Full-state reference: position, attitude, velocity; angular rates zero.
    pub fn to_state(&self, mode: AttitudeReference, gravity: f64) -> State12 {
        let (phi, theta) = self.attitude(mode, gravity);
        State12::from_parts(
            self.position,
            Vector3::new(phi, theta, self.yaw),
            self.velocity,
            Vector3::zeros(),
        )
    }
}

/// References for the predicted stages `t_k + dt, …, t_k + N·dt`.
pub fn reference_window(
    t_k: f64,
    horizon: usize,
    dt: f64,
    generator: &ReferenceGenerator,
    mode: AttitudeReference,
    gravity: f64,
) -> Vec<State12> {
    (1..=horizon)
        .map(|j| generator.at(t_k + j as f64 * dt).to_state(mode, gravity))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{dynamics_rhs, Disturbance, QuadParams, RotorInput};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn helix_start_and_quarter_period() {
        assert_eq!(helix_reference(0.0).position, Vector3::new(2.0, 0.0, 0.0));
        let q = helix_reference(5.0 * PI / 4.0).position;
        assert_relative_eq!(q, Vector3::new(0.0, 2.0, PI / 4.0), epsilon = 1e-12);
    }

    #[test]
    fn helix_velocity_matches_finite_difference() {
        let h = 1e-5;
        let fd = (helix_reference(3.0 + h).position - helix_reference(3.0 - h).position) / (2.0 * h);
        assert_relative_eq!(fd, helix_reference(3.0).velocity, epsilon = 1e-7);
        let fd = (helix_reference(3.0 + h).velocity - helix_reference(3.0 - h).velocity) / (2.0 * h);
        assert_relative_eq!(fd, helix_reference(3.0).acceleration, epsilon = 1e-7);
    }

    #[test]
    fn window_entries() {
        let hover = ReferenceGenerator::Hover { position: [1.0, 2.0, 3.0] };
        let w = reference_window(4.0, 5, 0.1, &hover, AttitudeReference::Flat, 9.81);
        assert_eq!(w.len(), 5);
        assert!(w.iter().all(|s| *s == w[0]));

        let helix = ReferenceGenerator::default();
        let w = reference_window(0.0, 18, 0.1, &helix, AttitudeReference::Level, 9.81);
        assert_eq!(w[0].position(), helix_reference(0.1).position);
    }

    #[test]
    fn flat_attitude_aligns_thrust_with_demanded_acceleration() {
        let p = QuadParams::default();
        for t in [0.0, 1.3, 7.7] {
            for yaw in [0.0, 0.7] {
                let r = RefPoint { yaw, ..helix_reference(t) };
                let s = r.to_state(AttitudeReference::Flat, p.gravity);
                // The thrust that makes the vertical acceleration match also matches the horizontal one.
                let eta = s.attitude();
                let thrust = p.mass * (r.acceleration[2] + p.gravity) / (eta[0].cos() * eta[1].cos());
                let u = RotorInput::splat(thrust / (4.0 * p.thrust_coeff));
                let level = crate::dynamics::State12::from_parts(
                    r.position,
                    eta,
                    r.velocity,
                    Vector3::zeros(),
                );
                let xdot = dynamics_rhs(&level, &u, &Disturbance::zero(), &p).unwrap();
                assert_relative_eq!(
                    xdot.fixed_rows::<3>(6).into_owned(),
                    r.acceleration,
                    epsilon = 1e-12
                );
            }
        }
    }
}
