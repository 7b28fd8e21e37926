//! Fixtures shared by the criterion benches.

use geoflow_core::geometry::{FramePoint, Point};
use geoflow_core::{McConfig, MetricFlow, ScaleFn};

/// Two-sphere whose radius shrinks to zero at `t = 0.5`.
pub fn shrinking_sphere() -> MetricFlow {
    MetricFlow::sphere(2, ScaleFn::Linear { c0: 1.0, rate: -2.0 }).expect("valid flow")
}

pub fn north_pole() -> Point {
    Point::from_vec(vec![0.0, 0.0, 1.0])
}

/// Point at geodesic angle `angle` from the north pole in the `x1, x2` plane.
pub fn polar_point(angle: f64) -> Point {
    Point::from_vec(vec![0.0, angle.sin(), angle.cos()])
}

pub fn frame_point(flow: &MetricFlow, t: f64, x: Point) -> FramePoint {
    let frame = flow.orthonormal_frame(t, &x).expect("frame");
    FramePoint::new(t, x, frame)
}

pub fn small_mc(seed: u64) -> McConfig {
    McConfig::new(256, 0.005, seed)
}
