use crate::geom::Point;
use crate::num::Scalar;

use super::VehicleState;

/// Interest weight of a location at distance `d` and bearing `cos_theta`
/// from a vehicle moving at `speed`, looking `t_int` seconds ahead.
///
/// A stationary vehicle has no region of interest.
pub fn roi_weight<T: Scalar>(speed: T, t_int: T, cos_theta: T, d: T) -> T {
    let reach = speed * t_int * cos_theta;
    if reach <= T::zero() || d > reach {
        return T::zero();
    }
    (reach - d) / reach
}

/// [`roi_weight`] for a world point. The bearing of the vehicle's own
/// position is taken as straight ahead.
pub fn roi_weight_at(vehicle: &VehicleState, x: Point, t_int: f64) -> f64 {
    let rel = x - vehicle.position;
    let d = rel.norm();
    let cos_theta = if d == 0.0 { 1.0 } else { rel.dot(Point::unit(vehicle.heading)) / d };
    roi_weight(vehicle.velocity, t_int, cos_theta, d)
}

/// Farthest distance at which a vehicle can have non-zero interest.
pub fn roi_reach(vehicle: &VehicleState, t_int: f64) -> f64 {
    (vehicle.velocity * t_int).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn vehicle(v: f64, heading: f64) -> VehicleState {
        VehicleState { id: 0, position: Point::new(50.0, 50.0), velocity: v, heading, length: 4.5, width: 1.8, reliability: 1.0, sensing_radius: 20.0 }
    }

    #[test]
    fn goldens() {
        assert_eq!(roi_weight(10.0f64, 2.0, 1.0, 0.0), 1.0);
        assert_eq!(roi_weight(10.0f64, 2.0, 1.0, 10.0), 0.5);
        assert_eq!(roi_weight(10.0f64, 2.0, 1.0, 20.5), 0.0);
        // cos θ = 0.5 halves the reach.
        assert_eq!(roi_weight(10.0f64, 2.0, 0.5, 10.5), 0.0);
        let v = vehicle(10.0, 0.0);
        assert_eq!(roi_weight_at(&v, Point::new(60.0, 50.0), 2.0), 0.5);
        assert_eq!(roi_weight_at(&v, v.position, 2.0), 1.0);
    }

    #[test]
    fn stationary_vehicle_has_no_interest() {
        let v = vehicle(0.0, 0.0);
        assert_eq!(roi_weight_at(&v, v.position, 2.0), 0.0);
        assert_eq!(roi_weight_at(&v, Point::new(51.0, 50.0), 2.0), 0.0);
    }

    proptest! {
        #[test]
        fn non_increasing_along_ray(v in 0.1f64..30.0, heading in -3.2f64..3.2, angle in -1.5f64..1.5, d1 in 0.0f64..80.0, dd in 0.0f64..20.0) {
            let veh = vehicle(v, heading);
            let dir = Point::unit(heading + angle);
            let a = roi_weight_at(&veh, veh.position + dir.scale(d1), 2.0);
            let b = roi_weight_at(&veh, veh.position + dir.scale(d1 + dd), 2.0);
            prop_assert!(b <= a + 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn zero_behind(v in 0.0f64..30.0, heading in -3.2f64..3.2, angle in (FRAC_PI_2 + 1e-4)..(3.0 * FRAC_PI_2 - 1e-4), d in 0.01f64..80.0) {
            let veh = vehicle(v, heading);
            let x = veh.position + Point::unit(heading + angle).scale(d);
            prop_assert_eq!(roi_weight_at(&veh, x, 2.0), 0.0);
        }
    }
}
