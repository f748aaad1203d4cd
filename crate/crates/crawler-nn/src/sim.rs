//! Planar kinematic stand-in for the physical crawler: two-link forward
//! kinematics for the arm, a friction-anchor crawl-cycle displacement model,
//! and brute-force derivation of the required angle targets.
//!
//! Angle convention: `theta1` is the shoulder servo, measured
//! counterclockwise from the forward horizontal; `theta2` is the interior
//! elbow angle, so the second link points along `theta1 + theta2 - 180`
//! degrees. The sagittal plane has x forward and y up, with the ground at
//! y = 0 and the shoulder at (0, shoulder_height).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::DenormMode;
use crate::train::{AngleTargets, TrainingRun};

/// A commanded tip at or below this height (cm) counts as ground contact.
pub const CONTACT_TOLERANCE_CM: f64 = 1e-9;

/// Arm link lengths and shoulder height, in cm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmGeometry {
    pub link1_len: f64,
    pub link2_len: f64,
    /// Height of the servo-1 axis above the ground; may be zero.
    pub shoulder_height: f64,
}

impl ArmGeometry {
    pub fn new(link1_len: f64, link2_len: f64, shoulder_height: f64) -> Result<Self> {
        for (name, v) in [("link1_len", link1_len), ("link2_len", link2_len)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be a positive length, got {v}"
                )));
            }
        }
        if !(shoulder_height.is_finite() && shoulder_height >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "shoulder_height must be nonnegative, got {shoulder_height}"
            )));
        }
        Ok(Self {
            link1_len,
            link2_len,
            shoulder_height,
        })
    }
}

/// The geometry every example and preset uses unless overridden.
pub fn default_geometry() -> ArmGeometry {
    ArmGeometry {
        link1_len: 5.0,
        link2_len: 5.0,
        shoulder_height: 6.0,
    }
}

/// Rest pose paired with [`default_geometry`]: arm folded straight up.
pub const DEFAULT_REST_POSE: (f64, f64) = (90.0, 180.0);

/// Crawl targets for [`default_geometry`] under the table-affine mode,
/// derived once by [`derive_targets`] on a 1-degree grid and committed; the
/// grid re-scan in the test suite keeps this pinned.
pub fn default_crawl_targets() -> AngleTargets {
    AngleTargets::new(-143.0, 180.0)
}

/// Simulated body pose along the travel axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyPose {
    /// cm along the travel axis.
    pub x: f64,
    /// cm of lateral drift.
    pub y: f64,
    /// degrees, normalized to (-180, 180].
    pub heading_deg: f64,
}

impl Default for BodyPose {
    fn default() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            heading_deg: 0.0,
        }
    }
}

/// Net effect of one crawl cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrawlCycleResult {
    /// cm the body advanced; never negative.
    pub displacement: f64,
    /// degrees; always zero in this sagittal model.
    pub heading_delta_deg: f64,
}

/// Normalize a heading to (-180, 180].
pub fn normalize_heading(deg: f64) -> f64 {
    let r = deg.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// Forward kinematics: planar arm-tip position (x, y) in cm.
pub fn arm_tip(geom: &ArmGeometry, theta1_deg: f64, theta2_deg: f64) -> (f64, f64) {
    let a1 = theta1_deg.to_radians();
    let a2 = (theta1_deg + theta2_deg - 180.0).to_radians();
    (
        geom.link1_len * a1.cos() + geom.link2_len * a2.cos(),
        geom.shoulder_height + geom.link1_len * a1.sin() + geom.link2_len * a2.sin(),
    )
}

/// One arm stroke from the rest pose to the commanded pose and back.
///
/// Friction-anchor model: if the commanded tip reaches the ground it anchors
/// there, and the stroke back to rest drags the body forward by the
/// horizontal tip travel, `max(0, tip_x(rest) - tip_x(commanded))`. A tip
/// that never touches ground produces no thrust.
pub fn crawl_cycle(
    pose: &BodyPose,
    geom: &ArmGeometry,
    theta1_deg: f64,
    theta2_deg: f64,
    rest_theta1_deg: f64,
    rest_theta2_deg: f64,
) -> (BodyPose, CrawlCycleResult) {
    let (tip_x, tip_y) = arm_tip(geom, theta1_deg, theta2_deg);
    let displacement = if tip_y <= CONTACT_TOLERANCE_CM {
        let (rest_x, _) = arm_tip(geom, rest_theta1_deg, rest_theta2_deg);
        (rest_x - tip_x).max(0.0)
    } else {
        0.0
    };
    let result = CrawlCycleResult {
        displacement,
        heading_delta_deg: 0.0,
    };
    let heading = pose.heading_deg.to_radians();
    let next = BodyPose {
        x: pose.x + displacement * heading.cos(),
        y: pose.y + displacement * heading.sin(),
        heading_deg: normalize_heading(pose.heading_deg + result.heading_delta_deg),
    };
    (next, result)
}

/// Brute-force the commanded pose that maximizes crawl displacement over a
/// degree grid spanning the mode's angle range, and return it as the
/// training targets. Ties break toward the smallest (theta1, theta2).
pub fn derive_targets(
    geom: &ArmGeometry,
    rest_pose: (f64, f64),
    grid_step_deg: f64,
    mode: DenormMode,
) -> Result<AngleTargets> {
    let (lo, hi) = mode.angle_range();
    if !(grid_step_deg.is_finite() && grid_step_deg > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "grid step must be positive, got {grid_step_deg}"
        )));
    }
    let steps = (hi - lo) / grid_step_deg;
    if (steps - steps.round()).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "grid step {grid_step_deg} does not divide the {mode} angle span {}",
            hi - lo
        )));
    }
    let steps = steps.round() as usize;
    let origin = BodyPose::default();

    let mut best: Option<(f64, f64, f64)> = None;
    for i in 0..=steps {
        let theta1 = lo + i as f64 * grid_step_deg;
        for j in 0..=steps {
            let theta2 = lo + j as f64 * grid_step_deg;
            let (_, cycle) = crawl_cycle(&origin, geom, theta1, theta2, rest_pose.0, rest_pose.1);
            if cycle.displacement > 0.0 && best.is_none_or(|(d, _, _)| cycle.displacement > d) {
                best = Some((cycle.displacement, theta1, theta2));
            }
        }
    }
    match best {
        Some((_, theta1, theta2)) => Ok(AngleTargets::new(theta1, theta2)),
        None => Err(Error::CannotCrawl { mode }),
    }
}

/// Apply one crawl cycle per generation record, in order, starting from the
/// origin. Returns the pose after each cycle; one entry per record.
pub fn replay_run(run: &TrainingRun, geom: &ArmGeometry, rest_pose: (f64, f64)) -> Vec<BodyPose> {
    replay_records(&run.records, geom, rest_pose)
}

/// [`replay_run`] over bare records, e.g. parsed back from an emitted CSV.
pub fn replay_records(
    records: &[crate::train::GenerationRecord],
    geom: &ArmGeometry,
    rest_pose: (f64, f64),
) -> Vec<BodyPose> {
    let mut pose = BodyPose::default();
    records
        .iter()
        .map(|rec| {
            let (next, _) = crawl_cycle(
                &pose,
                geom,
                rec.servo1_deg,
                rec.servo2_deg,
                rest_pose.0,
                rest_pose.1,
            );
            pose = next;
            pose
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Network, NetworkConfig};
    use crate::train::{train, TrainingConfig};
    use proptest::prelude::*;

    fn close(a: (f64, f64), b: (f64, f64), tol: f64) -> bool {
        (a.0 - b.0).abs() <= tol && (a.1 - b.1).abs() <= tol
    }

    /// Independent route: compose the two links as explicit rotation
    /// matrices applied to (len, 0).
    fn tip_by_rotation_matrices(geom: &ArmGeometry, t1: f64, t2: f64) -> (f64, f64) {
        let rotate = |deg: f64, v: (f64, f64)| {
            let (s, c) = deg.to_radians().sin_cos();
            (c * v.0 - s * v.1, s * v.0 + c * v.1)
        };
        let l1 = rotate(t1, (geom.link1_len, 0.0));
        let l2 = rotate(t1 + t2 - 180.0, (geom.link2_len, 0.0));
        (l1.0 + l2.0, geom.shoulder_height + l1.1 + l2.1)
    }

    #[test]
    fn arm_tip_collinear_extension() {
        let geom = ArmGeometry::new(5.0, 5.0, 0.0).unwrap();
        assert!(close(arm_tip(&geom, 0.0, 180.0), (10.0, 0.0), 1e-12));
    }

    #[test]
    fn arm_tip_straight_up() {
        let geom = ArmGeometry::new(5.0, 5.0, 0.0).unwrap();
        assert!(close(arm_tip(&geom, 90.0, 180.0), (0.0, 10.0), 1e-12));
    }

    #[test]
    fn arm_tip_right_angle_elbow() {
        let geom = ArmGeometry::new(5.0, 5.0, 0.0).unwrap();
        let tip = arm_tip(&geom, 90.0, 90.0);
        assert!(close(tip, (5.0, 5.0), 1e-12));
        assert!(close(
            tip,
            tip_by_rotation_matrices(&geom, 90.0, 90.0),
            1e-12
        ));
    }

    #[test]
    fn geometry_rejects_bad_lengths() {
        assert!(ArmGeometry::new(0.0, 5.0, 0.0).is_err());
        assert!(ArmGeometry::new(5.0, -1.0, 0.0).is_err());
        assert!(ArmGeometry::new(5.0, 5.0, -0.1).is_err());
        assert!(ArmGeometry::new(5.0, 5.0, 0.0).is_ok());
    }

    #[test]
    fn no_contact_means_no_thrust() {
        let geom = default_geometry();
        let pose = BodyPose::default();
        // Arm straight up: tip at (0, 16), far from the ground.
        let (next, cycle) = crawl_cycle(&pose, &geom, 90.0, 180.0, 90.0, 180.0);
        assert_eq!(cycle.displacement, 0.0);
        assert_eq!(next, pose);
    }

    #[test]
    fn commanded_rest_pose_is_zero_stroke() {
        // Rest pose on the ground: even in contact, zero stroke, zero thrust.
        let geom = ArmGeometry::new(5.0, 5.0, 0.0).unwrap();
        let pose = BodyPose::default();
        let (next, cycle) = crawl_cycle(&pose, &geom, 0.0, 90.0, 0.0, 90.0);
        assert_eq!(cycle.displacement, 0.0);
        assert_eq!(next, pose);
    }

    #[test]
    fn constructed_contact_four_cm_behind_rest() {
        // Two-link IK for a tip at (-4, 0): 4 cm behind the rest tip-x under
        // the default geometry, exactly on the ground.
        let geom = default_geometry();
        let target = (-4.0f64, 0.0 - geom.shoulder_height); // relative to shoulder
        let dist = (target.0 * target.0 + target.1 * target.1).sqrt();
        let half = (dist / 2.0 / geom.link1_len).acos();
        let dir = target.1.atan2(target.0);
        let alpha = (dir + half).to_degrees();
        let beta = (dir - half).to_degrees();
        let theta1 = alpha;
        let theta2 = beta - alpha + 180.0;

        let tip = arm_tip(&geom, theta1, theta2);
        assert!(
            close(tip, (-4.0, 0.0), 1e-9),
            "IK construction produced {tip:?}"
        );

        let (next, cycle) = crawl_cycle(
            &BodyPose::default(),
            &geom,
            theta1,
            theta2,
            DEFAULT_REST_POSE.0,
            DEFAULT_REST_POSE.1,
        );
        assert!((cycle.displacement - 4.0).abs() < 1e-9);
        assert!((next.x - 4.0).abs() < 1e-9);
        assert_eq!(next.heading_deg, 0.0);
    }

    #[test]
    fn derive_targets_matches_committed_fixture() {
        let targets = derive_targets(
            &default_geometry(),
            DEFAULT_REST_POSE,
            1.0,
            DenormMode::TableAffine,
        )
        .unwrap();
        assert_eq!(targets, default_crawl_targets());
    }

    #[test]
    fn derive_targets_errors_when_ground_is_unreachable() {
        let geom = ArmGeometry::new(2.0, 2.0, 10.0).unwrap();
        match derive_targets(&geom, DEFAULT_REST_POSE, 1.0, DenormMode::TableAffine) {
            Err(Error::CannotCrawl { .. }) => {}
            other => panic!("expected CannotCrawl, got {other:?}"),
        }
    }

    #[test]
    fn derive_targets_errors_in_paper_stated_range_with_raised_shoulder() {
        // With the shoulder 6 cm up and both angles confined to [0, 180],
        // the tip can never reach the ground.
        match derive_targets(
            &default_geometry(),
            DEFAULT_REST_POSE,
            1.0,
            DenormMode::PaperStated,
        ) {
            Err(Error::CannotCrawl { .. }) => {}
            other => panic!("expected CannotCrawl, got {other:?}"),
        }
    }

    #[test]
    fn derive_targets_rejects_non_dividing_step() {
        assert!(derive_targets(
            &default_geometry(),
            DEFAULT_REST_POSE,
            7.0,
            DenormMode::TableAffine
        )
        .is_err());
    }

    fn synthetic_run(records: Vec<crate::train::GenerationRecord>) -> TrainingRun {
        let net = Network::init(&NetworkConfig::new(1, 0).unwrap()).unwrap();
        let generations_used = records.len() as u64;
        TrainingRun {
            records,
            final_network: net,
            converged: true,
            generations_used,
            config: TrainingConfig::new(0.8, 1.0, 20_000, 0),
            targets: AngleTargets::new(90.0, 120.0),
        }
    }

    fn record_at(generation: u64, servo1: f64, servo2: f64) -> crate::train::GenerationRecord {
        crate::train::GenerationRecord {
            generation,
            servo1_deg: servo1,
            servo2_deg: servo2,
            error1_deg: 0.0,
            error2_deg: 0.0,
            cost: 0.0,
            lr_used: 0.8,
        }
    }

    #[test]
    fn replay_of_rest_pose_run_stays_put() {
        let run = synthetic_run(vec![
            record_at(1, DEFAULT_REST_POSE.0, DEFAULT_REST_POSE.1),
            record_at(2, DEFAULT_REST_POSE.0, DEFAULT_REST_POSE.1),
            record_at(3, DEFAULT_REST_POSE.0, DEFAULT_REST_POSE.1),
        ]);
        let traj = replay_run(&run, &default_geometry(), DEFAULT_REST_POSE);
        assert_eq!(traj.len(), 3);
        assert!(traj.iter().all(|p| *p == BodyPose::default()));
    }

    #[test]
    fn replay_single_record_is_one_cycle() {
        let t = default_crawl_targets();
        let run = synthetic_run(vec![record_at(1, t.servo1_deg, t.servo2_deg)]);
        let traj = replay_run(&run, &default_geometry(), DEFAULT_REST_POSE);
        let (expected, _) = crawl_cycle(
            &BodyPose::default(),
            &default_geometry(),
            t.servo1_deg,
            t.servo2_deg,
            DEFAULT_REST_POSE.0,
            DEFAULT_REST_POSE.1,
        );
        assert_eq!(traj, vec![expected]);
    }

    #[test]
    fn replay_of_converged_run_advances() {
        // Train toward the crawling targets in table-affine mode, then make
        // sure the learned trajectory actually moves the body forward.
        let config = TrainingConfig {
            denorm_mode: DenormMode::TableAffine,
            tolerance_deg: 2.0,
            ..TrainingConfig::new(0.8, 2.0, 20_000, 21)
        };
        let net = Network::init(&NetworkConfig::new(2, 21).unwrap()).unwrap();
        let run = train(net, &config, default_crawl_targets()).unwrap();
        assert!(run.converged);
        let traj = replay_run(&run, &default_geometry(), DEFAULT_REST_POSE);
        assert!(traj.last().unwrap().x > 0.0);
    }

    #[test]
    fn heading_normalization() {
        assert_eq!(normalize_heading(0.0), 0.0);
        assert_eq!(normalize_heading(180.0), 180.0);
        assert_eq!(normalize_heading(-180.0), 180.0);
        assert_eq!(normalize_heading(270.0), -90.0);
        assert_eq!(normalize_heading(-270.0), 90.0);
        assert_eq!(normalize_heading(720.0), 0.0);
    }

    proptest! {
        #[test]
        fn tip_stays_within_reach(t1 in -180.0f64..=180.0, t2 in -180.0f64..=180.0) {
            let geom = default_geometry();
            let (x, y) = arm_tip(&geom, t1, t2);
            let from_shoulder = (x * x + (y - geom.shoulder_height).powi(2)).sqrt();
            prop_assert!(from_shoulder <= geom.link1_len + geom.link2_len + 1e-9);
            let from_origin = (x * x + y * y).sqrt();
            prop_assert!(
                from_origin <= geom.link1_len + geom.link2_len + geom.shoulder_height + 1e-9
            );
        }

        #[test]
        fn tip_is_continuous_in_the_angles(t1 in -180.0f64..180.0, t2 in -180.0f64..180.0) {
            let geom = default_geometry();
            let base = arm_tip(&geom, t1, t2);
            let eps = 1e-6;
            let bound = eps * (geom.link1_len + geom.link2_len) * std::f64::consts::PI / 180.0 * 2.0;
            for (d1, d2) in [(eps, 0.0), (0.0, eps)] {
                let moved = arm_tip(&geom, t1 + d1, t2 + d2);
                let dist = ((moved.0 - base.0).powi(2) + (moved.1 - base.1).powi(2)).sqrt();
                prop_assert!(dist < bound, "tip moved {dist} for a {eps}-deg nudge");
            }
        }

        #[test]
        fn displacement_is_never_negative(
            t1 in -180.0f64..=180.0,
            t2 in -180.0f64..=180.0,
            heading in -180.0f64..=180.0,
        ) {
            let geom = default_geometry();
            let pose = BodyPose { x: 1.0, y: -2.0, heading_deg: heading };
            let (_, cycle) = crawl_cycle(&pose, &geom, t1, t2, DEFAULT_REST_POSE.0, DEFAULT_REST_POSE.1);
            prop_assert!(cycle.displacement >= 0.0);
        }
    }
}
