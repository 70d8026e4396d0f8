use mocap_lift::diffusion::{make_schedule, q_sample, MotionLayout, MotionTensor, ScheduleKind};
use mocap_lift::geometry::{project_rig, rig_from_json, rig_to_json, triangulate, CameraRig};
use mocap_lift::lifting::consistency_project;
use mocap_lift::metrics::{abs_mpjpe, mpjpe, pa_mpjpe, w_mpjpe, wa_mpjpe, MpjpeMode};
use mocap_lift::motion::Motion3;
use mocap_lift::refine::{fit_skeleton, FitConfig};
use mocap_lift::representation::encode;
use mocap_lift::synth::{generate_motion, rigid_transform};
use mocap_lift::{MotionKind, Skeleton};
use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;

fn arb_motion(frames: usize) -> impl Strategy<Value = Motion3<f64>> {
    prop::collection::vec((-0.8..0.8f64, -0.8..0.8f64, 0.0..1.8f64), frames * 8)
        .prop_map(move |v| Motion3::new(frames, 8, v.into_iter().map(|(x, y, z)| Vector3::new(x, y, z)).collect(), 30.0).unwrap())
}

fn jitter(m: &Motion3<f64>, offsets: &[f64]) -> Motion3<f64> {
    let mut out = m.clone();
    for (i, p) in out.coords_mut().iter_mut().enumerate() {
        *p += Vector3::new(offsets[i % offsets.len()], offsets[(i + 1) % offsets.len()], offsets[(i + 2) % offsets.len()]);
    }
    out
}

fn kind() -> impl Strategy<Value = MotionKind> {
    prop::sample::select(MotionKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn triangulation_inverts_projection(m in arb_motion(3), views in 2usize..6) {
        let rig = CameraRig::ring(views, 3.0, 1.6, 1000.0, 1000, 1000).unwrap();
        let back = triangulate(&rig, &project_rig(&rig, &m).unwrap(), None).unwrap();
        prop_assert!(back.max_abs_diff(&m) < 1e-9);
    }

    #[test]
    fn rig_file_roundtrip_is_exact(views in 2usize..6, radius in 2.0..6.0f64, height in 0.5..3.0f64) {
        let rig = CameraRig::ring(views, radius, height, 900.0, 1280, 720).unwrap();
        prop_assert_eq!(rig_from_json(&rig_to_json(&rig)).unwrap(), rig);
    }

    #[test]
    fn layout_roundtrip(m in arb_motion(4), decouple in any::<bool>(), root in 0usize..8) {
        let rig = CameraRig::default_ring();
        let views = project_rig(&rig, &m).unwrap();
        let layout = MotionLayout::new(8, root, decouple).unwrap();
        let back = layout.decode(&layout.encode(&views, &rig).unwrap(), &rig, 30.0).unwrap();
        for (a, b) in views.iter().zip(&back) {
            prop_assert!(a.max_abs_diff(b) < 1e-9);
        }
    }

    #[test]
    fn consistency_projection_is_a_projection(m in arb_motion(2), offsets in prop::collection::vec(-3.0..3.0f64, 7)) {
        let rig = CameraRig::default_ring();
        let mut views = project_rig(&rig, &m).unwrap();
        for (v, view) in views.iter_mut().enumerate() {
            *view = view.translated(nalgebra::Vector2::new(offsets[v], offsets[v + 2]));
        }
        let enc: Vec<_> = views.iter().map(|v| encode(v, 0).unwrap()).collect();
        let (_, once) = consistency_project(&rig, &enc).unwrap();
        let (_, twice) = consistency_project(&rig, &once).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!(a.max_abs_diff(b) < 1e-9);
        }
    }

    #[test]
    fn errors_are_in_millimetres(m in arb_motion(3), d in 0.001..0.5f64) {
        let shifted = m.map(|p| p + Vector3::new(0.0, d, 0.0));
        prop_assert!((abs_mpjpe(&shifted, &m).unwrap() - 1000.0 * d).abs() < 1e-9);
        let aligned = mpjpe(&shifted, &m, MpjpeMode::RootAligned { root: 0 }).unwrap();
        prop_assert!(aligned < 1e-9);
    }

    #[test]
    fn pa_mpjpe_ignores_similarity_of_prediction(
        m in arb_motion(3),
        offsets in prop::collection::vec(-0.05..0.05f64, 5),
        axis in (-1.0..1.0f64, -1.0..1.0f64, 0.1..1.0f64),
        angle in -3.0..3.0f64,
        scale in 0.5..2.0f64,
    ) {
        let pred = jitter(&m, &offsets);
        let r = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vector3::new(axis.0, axis.1, axis.2)), angle);
        let moved = pred.map(|p| r * p * scale + Vector3::new(1.0, -2.0, 0.5));
        prop_assert!((pa_mpjpe(&moved, &m).unwrap() - pa_mpjpe(&pred, &m).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn yaw_aligned_metrics_ignore_yaw_and_translation(
        m in arb_motion(4),
        offsets in prop::collection::vec(-0.05..0.05f64, 5),
        yaw in -3.0..3.0f64,
        tx in -2.0..2.0f64,
        ty in -2.0..2.0f64,
    ) {
        let pred = jitter(&m, &offsets);
        let moved = rigid_transform(&pred, yaw, tx, ty);
        prop_assert!((w_mpjpe(&moved, &m).unwrap() - w_mpjpe(&pred, &m).unwrap()).abs() < 1e-6);
        prop_assert!((wa_mpjpe(&moved, &m).unwrap() - wa_mpjpe(&pred, &m).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn posterior_preserves_marginals(steps in 2usize..300, cosine in any::<bool>(), frac in 0.0..1.0f64) {
        let kind = if cosine { ScheduleKind::Cosine } else { ScheduleKind::Linear };
        let s = make_schedule(steps, kind).unwrap();
        let n = 1 + ((steps - 1) as f64 * frac) as usize % (steps - 1);
        let (c0, cn, var) = s.posterior_coefficients(n);
        let (ab, ab_prev) = (s.alpha_bars[n], s.alpha_bars[n - 1]);
        // the mean and variance of x_{n-1} given x0 are those of the forward process
        prop_assert!((c0 + cn * ab.sqrt() - ab_prev.sqrt()).abs() < 1e-9);
        prop_assert!((cn * cn * (1.0 - ab) + var - (1.0 - ab_prev)).abs() < 1e-9);
        prop_assert!(s.alpha_bars.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn forward_process_with_zero_noise_scales_signal(values in prop::collection::vec(-2.0..2.0f64, 16), n in 0usize..50) {
        let s = make_schedule(50, ScheduleKind::Cosine).unwrap();
        let x0 = MotionTensor::from_data(2, 2, 2, values).unwrap();
        let xn = q_sample(&x0, n, &MotionTensor::zeros(2, 2, 2), &s).unwrap();
        for (a, b) in xn.data.iter().zip(&x0.data) {
            prop_assert!((a - s.alpha_bars[n].sqrt() * b).abs() < 1e-12);
        }
    }

    #[test]
    fn skeleton_fit_never_increases_cost(k in kind(), seed in 0u64..1000, offsets in prop::collection::vec(-0.02..0.02f64, 11)) {
        let sk = Skeleton::toy8();
        let gt = generate_motion(&sk, k, 10, seed, 30.0).unwrap();
        let report = fit_skeleton(&jitter(&gt, &offsets), &sk, &FitConfig::default()).unwrap();
        prop_assert!(report.costs.windows(2).all(|c| c[1] <= c[0]));
    }
}
