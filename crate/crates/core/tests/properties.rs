use catchsim::ballistics::*;
use catchsim::baseline::*;
use catchsim::sensors::{
    color_filter_localize, merge_streams, radar_filter, render_frame, rgb_to_hsv, CameraModel, Detection,
    DetectionBuffer, HsvRange, RadarReturn, Scene, SensorSuite, Source,
};
use proptest::prelude::*;

const G: f64 = STANDARD_GRAVITY;
const DT: f64 = DEFAULT_DT;

fn throw_strategy() -> impl Strategy<Value = ThrowParams> {
    (-0.5f64..0.5, 6.0f64..8.0, -0.4f64..0.4, 5.0f64..7.0, 6.0f64..8.0).prop_map(|(vx, vy, x0, z0, speed)| {
        ThrowParams::new(Vec3::new(x0, 1.5, z0), Vec3::new(vx, vy, -speed))
    })
}

fn exact_detections(p: &ThrowParams, times: &[f64]) -> Vec<Detection> {
    times
        .iter()
        .enumerate()
        .map(|(i, &t)| Detection {
            position: analytic_state(p, t).unwrap().0,
            t,
            source: if i % 2 == 0 { Source::Camera } else { Source::Radar },
        })
        .collect()
}

#[test]
fn hsv_examples() {
    assert_eq!(rgb_to_hsv(1.0, 0.0, 0.0), (0.0, 1.0, 1.0));
    assert_eq!(rgb_to_hsv(0.5, 0.5, 0.5), (0.0, 0.0, 0.5));
    let (h, s, v) = rgb_to_hsv(1.0, 0.0, 1.0);
    assert!((h - 300.0).abs() < 1e-12 && s == 1.0 && v == 1.0);
}

#[test]
fn radar_keeps_fastest_approaching_return() {
    let r = |v: f64, x: f64| RadarReturn {
        position: Vec3::new(x, 1.0, 3.0),
        radial_velocity: v,
    };
    let d = radar_filter(&[r(-1.0, 1.0), r(3.0, 2.0), r(-5.2, 3.0), r(0.0, 4.0)], 0.5, 0.2).unwrap();
    assert_eq!(d.position.x, 3.0);
    assert_eq!(d.source, Source::Radar);
    assert!(radar_filter(&[r(2.0, 0.0)], 0.0, 0.2).is_none());
    assert!(radar_filter(&[r(0.0, 0.0), r(0.1, 0.0)], 0.0, 0.2).is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn drag_free_integrator_matches_closed_form(p in throw_strategy()) {
        let traj = simulate_throw(&p, DT, -1.0).unwrap();
        let mut sq = 0.0;
        let mut n = 0;
        for s in traj.states().filter(|s| s.t <= 1.5) {
            let (x, _) = analytic_state(&p, s.t).unwrap();
            sq += (s.position - x).dot(s.position - x);
            n += 1;
        }
        prop_assert!((sq / n as f64).sqrt() < 1e-5);
    }

    #[test]
    fn drag_never_adds_energy(p in throw_strategy(), k in 0.001f64..0.1) {
        let traj = simulate_throw(&p.with_drag(k), DT, -1.0).unwrap();
        let energy = |s: &TrajectorySample| 0.5 * s.velocity.dot(s.velocity) + G * s.position.y;
        let states: Vec<_> = traj.states().collect();
        for w in states.windows(2) {
            prop_assert!(energy(w[1]) <= energy(w[0]) + 1e-9);
        }
    }

    #[test]
    fn crossing_is_exact_for_linear_depth(p in throw_strategy(), zp in -0.6f64..0.0) {
        let traj = simulate_throw(&p, DT, zp - 0.2).unwrap();
        let (t, point) = plane_crossing(&traj, zp).unwrap();
        prop_assert!((point.z - zp).abs() <= 1e-12);
        prop_assert!((t - (p.p0.z - zp) / -p.v0.z).abs() < 1e-9);
    }

    #[test]
    fn calibration_round_trip(d in 2.0f64..8.0, tof in 0.6f64..1.5, apex in 0.0f64..1.5) {
        let p = calibrate_throw(d, tof, apex).unwrap();
        prop_assert!((p.p0.z - DEFAULT_CATCH_PLANE_Z - d).abs() < 1e-12);
        let traj = simulate_throw(&p, DT, DEFAULT_CATCH_PLANE_Z - 0.05).unwrap();
        let (t, _) = plane_crossing(&traj, DEFAULT_CATCH_PLANE_Z).unwrap();
        prop_assert!((t - tof).abs() < 1e-6);
    }

    #[test]
    fn radar_filter_only_returns_approaching(vs in prop::collection::vec(-6.0f64..6.0, 0..8)) {
        let returns: Vec<RadarReturn> = vs
            .iter()
            .enumerate()
            .map(|(i, &v)| RadarReturn { position: Vec3::new(i as f64, 1.0, 2.0), radial_velocity: v })
            .collect();
        if let Some(d) = radar_filter(&returns, 0.0, 0.2) {
            let src = returns[d.position.x as usize];
            prop_assert!(src.radial_velocity < 0.0);
            prop_assert!(returns.iter().filter(|r| r.radial_velocity < -0.2).all(|r| r.radial_velocity >= src.radial_velocity));
        } else {
            prop_assert!(vs.iter().all(|&v| v > -0.2));
        }
    }

    #[test]
    fn merge_preserves_detections(
        cam in prop::collection::vec(0u32..50, 0..12),
        rad in prop::collection::vec(0u32..50, 0..12),
    ) {
        let mk = |ts: &[u32], s: Source| -> Vec<Detection> {
            let mut ts = ts.to_vec();
            ts.sort_unstable();
            ts.iter().enumerate().map(|(i, &t)| Detection { position: Vec3::new(i as f64, 0.0, 0.0), t: t as f64 * 0.01, source: s }).collect()
        };
        let (c, r) = (mk(&cam, Source::Camera), mk(&rad, Source::Radar));
        let merged = merge_streams(&c, &r).unwrap();
        let m = merged.as_slice();
        prop_assert_eq!(m.len(), c.len() + r.len());
        for w in m.windows(2) {
            prop_assert!(w[0].t <= w[1].t);
            if w[0].t == w[1].t {
                prop_assert!(!(w[0].source == Source::Radar && w[1].source == Source::Camera));
            }
        }
        let only = |s: Source| m.iter().filter(|d| d.source == s).copied().collect::<Vec<_>>();
        prop_assert_eq!(only(Source::Camera), c);
        prop_assert_eq!(only(Source::Radar), r);
    }

    #[test]
    fn prediction_is_translation_equivariant(p in throw_strategy(), dx in -0.5f64..0.5, dy in -0.5f64..0.5) {
        let dets = exact_detections(&p, &[0.1, 0.14, 0.2, 0.23, 0.3]);
        let buf = DetectionBuffer::from_vec(dets).unwrap();
        let a = predict_from_detections(buf.as_slice(), G, -0.4, &FitOptions::default()).unwrap();
        let b = predict_from_detections(buf.shifted(Vec3::new(dx, dy, 0.0)).as_slice(), G, -0.4, &FitOptions::default()).unwrap();
        prop_assert!((b.x - a.x - dx).abs() < 1e-9);
        prop_assert!((b.y - a.y - dy).abs() < 1e-9);
    }

    #[test]
    fn noise_free_prefixes_predict_the_crossing(p in throw_strategy()) {
        let traj = simulate_throw(&p, DT, -0.5).unwrap();
        let (t_cross, truth) = plane_crossing(&traj, -0.4).unwrap();
        let times: Vec<f64> = (0..12).map(|i| 0.02 + i as f64 * 0.033).filter(|&t| t < t_cross).collect();
        let dets = exact_detections(&p, &times);
        for n in 3..=dets.len() {
            let pred = predict_from_detections(&dets[..n], G, -0.4, &FitOptions::default()).unwrap();
            prop_assert!((pred.x - truth.x).abs() < 1e-6 && (pred.y - truth.y).abs() < 1e-6);
            prop_assert!((pred.t_cross.unwrap() - t_cross).abs() < 1e-6);
        }
    }

    #[test]
    fn residuals_are_orthogonal(noise in prop::collection::vec(-0.05f64..0.05, 18)) {
        let p = ThrowParams::new(Vec3::new(0.0, 1.5, 5.0), Vec3::new(0.2, 5.0, -5.0));
        let times = [0.0, 0.03, 0.07, 0.1, 0.13, 0.2];
        let mut dets = exact_detections(&p, &times);
        for (i, d) in dets.iter_mut().enumerate() {
            d.position += Vec3::new(noise[3 * i], noise[3 * i + 1], noise[3 * i + 2]);
        }
        let est = fit_trajectory(&DetectionBuffer::from_vec(dets.clone()).unwrap(), G).unwrap();
        let (mut rx, mut ry, mut rz) = ([0.0; 2], [0.0; 2], [0.0; 2]);
        for d in &dets {
            let tau = d.t - est.t0;
            let e = [d.position.x - est.x_at(tau), d.position.y - est.y_at(tau), d.position.z - est.z_at(tau)];
            for (acc, e) in [(&mut rx, e[0]), (&mut ry, e[1]), (&mut rz, e[2])] {
                acc[0] += e;
                acc[1] += e * tau;
            }
        }
        for r in [rx, ry, rz] {
            prop_assert!(r[0].abs() < 1e-9 && r[1].abs() < 1e-9, "{:?}", r);
        }
    }

    #[test]
    fn drag_makes_early_fit_predict_early_crossing(p in throw_strategy(), k in 0.01f64..0.06) {
        let p = p.with_drag(k);
        let traj = simulate_throw(&p, DT, -0.5).unwrap();
        let (t_cross, _) = plane_crossing(&traj, -0.4).unwrap();
        let dets: Vec<Detection> = [0.05, 0.1, 0.15, 0.2, 0.25]
            .iter()
            .map(|&t| Detection { position: traj.state_at(t).position, t, source: Source::Radar })
            .collect();
        let pred = predict_from_detections(&dets, G, -0.4, &FitOptions::default()).unwrap();
        prop_assert!(pred.t_cross.unwrap() < t_cross);
    }

    #[test]
    fn color_filter_ignores_out_of_range_pixels(seed in 0u64..1000, x in -0.4f64..0.4, z in 1.0f64..4.0, mask in 0u64..u64::MAX) {
        let suite = SensorSuite::default();
        let pos = Vec3::new(x, 0.6 + 0.1 * z, z);
        prop_assume!(suite.camera.sees(pos));
        let frame = suite.render(pos, seed, 0.0).unwrap();
        let base = suite.color_filter(&frame);
        let mut painted = frame.clone();
        let n = frame.width * frame.height;
        let mut bits = mask;
        for i in 0..n {
            let [r, g, b] = frame.rgb(i / frame.width, i % frame.width);
            let in_range = suite.hsv.contains(rgb_to_hsv(f64::from(r), f64::from(g), f64::from(b)));
            bits = bits.rotate_left(7) ^ 0x9e37_79b9_7f4a_7c15;
            if !in_range && bits & 1 == 1 {
                painted.data[i] = 0.1;
                painted.data[n + i] = 0.7;
                painted.data[2 * n + i] = 0.2;
            }
        }
        prop_assert_eq!(suite.color_filter(&painted), base);
    }

    #[test]
    fn noiseless_localization_error_is_pixel_bounded(x in -0.3f64..0.3, z in 1.0f64..5.0) {
        let cam = CameraModel::reduced();
        let hsv = HsvRange::default();
        let pos = Vec3::new(x, 0.55 + 0.12 * z, z);
        prop_assume!(cam.sees(pos));
        let scene = Scene { clutter_rects: 0, ..Scene::default() };
        let frame = render_frame(pos, 0.12, &cam, &scene, 1, 0.0).unwrap();
        let det = color_filter_localize(&frame, &hsv, &cam, 10).unwrap();
        let (_, _, d) = cam.project(pos);
        let err = (det.position - pos).norm();
        // the median depth is the blob's front surface, up to one radius nearer
        prop_assert!(err <= d / cam.fx + cam.depth_quantum + 0.12, "err {} at depth {}", err, d);
    }
}
