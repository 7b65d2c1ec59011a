//! The fixed benchmark scenes.
//!
//! All scenes share one street: a ground patch, building walls on both
//! sides, two parked cars, and an ego vehicle driving down the road with a
//! 32-beam front-facing LiDAR and two front cameras.

use std::f64::consts::PI;

use crate::geometry::{CameraModel, SE3Pose, Mat3, Vec3, DEFAULT_BOUNDARY_MARGIN, DEFAULT_D_MIN};

use super::config::{
    BoxConfig, EgoMotion, GroundConfig, Keyframe, LidarModel, Motion, ObjectConfig, SceneConfig,
};

pub const SUITE_FRAMES: usize = 36;
pub const SUITE_DT: f64 = 0.1;

pub const CAR: [f64; 3] = [4.5, 1.8, 1.5];
pub const PEDESTRIAN: [f64; 3] = [0.6, 0.6, 1.8];
pub const TRUCK: [f64; 3] = [12.0, 2.5, 3.5];

pub fn default_lidar() -> LidarModel {
    LidarModel::Spherical {
        beams: 32,
        elevation_min_deg: -25.0,
        elevation_max_deg: 5.0,
        azimuth_min_deg: -80.0,
        azimuth_max_deg: 80.0,
        azimuth_steps: 64,
        max_range: 50.0,
    }
}

/// Pinhole camera mounted at `center` (LiDAR frame), looking horizontally
/// along LiDAR-frame heading `yaw`.
pub fn mounted_camera(yaw: f64, center: Vec3, width: u32, height: u32, focal: f64) -> CameraModel {
    let (s, c) = yaw.sin_cos();
    // rows: camera x (right), y (down), z (optical axis) in LiDAR coordinates
    let r = Mat3::new(s, -c, 0.0, 0.0, 0.0, -1.0, c, s, 0.0);
    let extrinsic = SE3Pose::new(r, -(r * center)).expect("camera mount rotation is proper");
    CameraModel::new(
        focal,
        focal,
        width as f64 / 2.0,
        height as f64 / 2.0,
        width,
        height,
        DEFAULT_D_MIN,
        DEFAULT_BOUNDARY_MARGIN,
        extrinsic,
    )
    .expect("default camera parameters are valid")
}

/// Front-left and front-right 640×480 cameras, 90° horizontal field of view.
pub fn default_camera_rig() -> Vec<CameraModel> {
    let yaw = 40f64.to_radians();
    vec![
        mounted_camera(yaw, Vec3::new(0.5, 0.3, -0.3), 640, 480, 320.0),
        mounted_camera(-yaw, Vec3::new(0.5, -0.3, -0.3), 640, 480, 320.0),
    ]
}

fn street(name: &str, seed: u64) -> SceneConfig {
    SceneConfig {
        name: name.to_string(),
        frame_count: SUITE_FRAMES,
        frame_dt: SUITE_DT,
        seed,
        ego: EgoMotion::ConstantTwist {
            start: [0.0, 0.0, 0.0],
            speed: 5.0,
            yaw_rate: 0.0,
        },
        sensor_height: 1.8,
        ground: Some(GroundConfig {
            x_min: -30.0,
            x_max: 100.0,
            y_min: -40.0,
            y_max: 40.0,
        }),
        static_boxes: vec![
            BoxConfig {
                center: [35.0, 12.2, 2.0],
                size: [100.0, 0.4, 4.0],
                yaw: 0.0,
            },
            BoxConfig {
                center: [35.0, -12.2, 2.0],
                size: [100.0, 0.4, 4.0],
                yaw: 0.0,
            },
            BoxConfig {
                center: [16.0, 8.0, 0.75],
                size: CAR,
                yaw: 0.0,
            },
            BoxConfig {
                center: [40.0, -8.0, 0.75],
                size: CAR,
                yaw: 0.0,
            },
        ],
        objects: Vec::new(),
        lidar: default_lidar(),
        cameras: default_camera_rig(),
    }
}

fn moving(name: &str, size: [f64; 3], start: [f64; 3], velocity: [f64; 2]) -> ObjectConfig {
    ObjectConfig {
        name: name.to_string(),
        size,
        motion: Motion::ConstantVelocity {
            start,
            velocity,
            yaw_rate: 0.0,
        },
    }
}

pub fn all_static() -> SceneConfig {
    street("all_static", 1)
}

pub fn fast_car() -> SceneConfig {
    let mut s = street("fast_car", 2);
    s.objects = vec![
        moving("oncoming_car", CAR, [55.0, 3.5, PI], [-12.0, 0.0]),
        moving("lead_car", CAR, [14.0, -3.5, 0.0], [9.0, 0.0]),
    ];
    s
}

pub fn crossing_pedestrians() -> SceneConfig {
    let mut s = street("crossing_pedestrians", 3);
    s.objects = vec![
        moving("ped_0", PEDESTRIAN, [27.0, -6.0, PI / 2.0], [0.0, 1.5]),
        moving("ped_1", PEDESTRIAN, [28.5, -4.8, PI / 2.0], [0.0, 1.4]),
        moving("ped_2", PEDESTRIAN, [30.0, -6.5, PI / 2.0], [0.0, 1.6]),
        moving("ped_3", PEDESTRIAN, [31.0, 5.5, -PI / 2.0], [0.0, -1.5]),
    ];
    s
}

pub fn large_truck() -> SceneConfig {
    let mut s = street("large_truck", 4);
    s.objects = vec![moving("truck", TRUCK, [14.0, 4.0, 0.0], [3.0, 0.0])];
    s
}

/// A car that drives into place, waits, then pulls away again. While it
/// waits its points sit in space that rays crossed before it arrived.
pub fn stopped_vehicle() -> SceneConfig {
    let mut s = street("stopped_vehicle", 5);
    let k = |frame: f64, x: f64| Keyframe {
        frame,
        x,
        y: -3.5,
        yaw: 0.0,
    };
    s.objects = vec![ObjectConfig {
        name: "stopped_car".into(),
        size: CAR,
        motion: Motion::Keyframes(vec![k(0.0, 22.8), k(6.0, 30.0), k(30.0, 30.0), k(42.0, 44.4)]),
    }];
    s
}

pub fn dense_multi() -> SceneConfig {
    let mut s = street("dense_multi", 6);
    s.objects = vec![
        moving("oncoming_car", CAR, [60.0, 3.5, PI], [-10.0, 0.0]),
        moving("lead_car", CAR, [18.0, -3.5, 0.0], [7.0, 0.0]),
        moving("crossing_car", CAR, [50.0, -10.0, PI / 2.0], [0.0, 5.0]),
        moving("ped_0", PEDESTRIAN, [24.0, 7.0, 0.0], [1.4, 0.0]),
        moving("ped_1", PEDESTRIAN, [26.0, -7.0, PI], [-1.3, 0.0]),
        moving("cyclist", [1.8, 0.6, 1.7], [10.0, -6.0, 0.0], [4.0, 0.0]),
    ];
    s
}

/// Named benchmark scenes with fixed seeds.
pub fn standard_suite() -> Vec<SceneConfig> {
    vec![
        all_static(),
        fast_car(),
        crossing_pedestrians(),
        large_truck(),
        stopped_vehicle(),
        dense_multi(),
    ]
}

pub fn suite_scene(name: &str) -> Option<SceneConfig> {
    standard_suite().into_iter().find(|s| s.name == name)
}
