use super::*;
use crate::image::GridImage;

const OBSERVED: [f32; 3] = [0.0, 0.0, 0.0];
const UNSEEN: [f32; 3] = [1.0, 0.0, 0.0];

fn blank_frames(n: usize, w: usize, h: usize) -> (Vec<GridImage>, Vec<Pose2D>) {
    (
        (0..n).map(|t| GridImage::filled(w, h, UNSEEN, t)).collect(),
        vec![Pose2D::default(); n],
    )
}

fn small_plan(pose0: Pose2D) -> FramePlan {
    FramePlan::new(pose0, 200, 0.1, 5.0, 40.0)
}

#[test]
fn window_counts() {
    let plan = small_plan(Pose2D::default());
    let (f, p) = blank_frames(35, 4, 4);
    let s = build_sequences(&f, &p, &plan, Variant::Allo, 10, 25, 35, 0.1, "s").unwrap();
    assert_eq!(s.len(), 1);
    assert_eq!((s[0].n_inputs(), s[0].horizon(), s[0].seq_id.as_str()), (10, 25, "s"));
    assert_eq!(build_sequences(&f, &p, &plan, Variant::Allo, 10, 25, 1, 0.1, "s").unwrap().len(), 1);
    let (f, p) = blank_frames(45, 4, 4);
    let s = build_sequences(&f, &p, &plan, Variant::Allo, 10, 25, 5, 0.1, "s").unwrap();
    assert_eq!(s.len(), 3);
    assert_eq!(s[2].start_frame, 10);
    assert_eq!(s[2].inputs[0].t, 10);
    let (f, p) = blank_frames(20, 4, 4);
    assert!(build_sequences(&f, &p, &plan, Variant::Allo, 10, 25, 35, 0.1, "s").is_err());
}

/// Paired synthetic sequences: each frame observes a disk of `radius` around
/// the ego, which moves `step` meters per frame along its heading.
fn disk_pair(n: usize, step: f64, radius: f64) -> (GridSequence, GridSequence) {
    let pose0 = Pose2D::new(3.0, -2.0, 0.4);
    let poses: Vec<Pose2D> = (0..n)
        .map(|k| {
            let d = step * k as f64;
            Pose2D::new(pose0.x + d * pose0.theta.cos(), pose0.y + d * pose0.theta.sin(), pose0.theta)
        })
        .collect();
    let plan = small_plan(pose0);
    let render = |variant: Variant| -> Vec<GridImage> {
        (0..n)
            .map(|k| {
                let geo = match variant {
                    Variant::Allo => plan.allo_geometry(),
                    Variant::Ego => plan.ego_geometry(poses[k]),
                };
                let pf = PixelFrame::new(geo, 200, 200);
                let mut img = GridImage::filled(200, 200, UNSEEN, k);
                for y in 0..200 {
                    for x in 0..200 {
                        let c = pf.pixel_center(x, y);
                        if (c[0] - poses[k].x).hypot(c[1] - poses[k].y) < radius {
                            img.set(x, y, OBSERVED);
                        }
                    }
                }
                img
            })
            .collect()
    };
    let a = build_sequences(&render(Variant::Allo), &poses, &plan, Variant::Allo, 4, n - 4, n, 0.1, "p").unwrap();
    let e = build_sequences(&render(Variant::Ego), &poses, &plan, Variant::Ego, 4, n - 4, n, 0.1, "p").unwrap();
    (a.into_iter().next().unwrap(), e.into_iter().next().unwrap())
}

#[test]
fn stationary_masks_agree_between_variants() {
    let (a, e) = disk_pair(6, 0.0, 8.0);
    let (ma, me) = visibility_mask(&a, &e).unwrap();
    for k in 0..a.len() {
        let (pa, pe) = (a.pixel_frame(k), e.pixel_frame(k));
        let (mut agree, mut total) = (0usize, 0usize);
        for y in 0..200 {
            for x in 0..200 {
                if let Some((ex, ey)) = pe.pixel_of(pa.pixel_center(x, y)) {
                    total += 1;
                    agree += (ma.frames[k][y * 200 + x] == me.frames[k][ey * 200 + ex]) as usize;
                }
            }
        }
        assert!(agree as f64 >= 0.99 * total as f64, "{agree}/{total}");
        assert!(ma.area(k) > 0);
    }
}

#[test]
fn moving_ego_mask_matches_point_membership_oracle() {
    let n = 16;
    let (a, e) = disk_pair(n, 0.5, 9.0);
    let (ma, me) = visibility_mask(&a, &e).unwrap();
    let canvas = observed_canvas(&a, &e).unwrap();
    let origin = a.frame_plan.allo_origin;
    let key = |p: [f64; 2]| {
        let l = origin.inverse_transform_point(p);
        ((l[0] * 100.0).round() as i64, (l[1] * 100.0).round() as i64)
    };
    let observed_by = |s: &GridSequence, p: [f64; 2], t: usize| {
        (0..=t).any(|k| s.pixel_frame(k).pixel_of(p).is_some_and(|(x, y)| s.frame(k).get(x, y)[0] < 0.5))
    };
    let mut ego_only_ahead = 0;
    for t in 0..n {
        let in_canvas: std::collections::HashSet<_> = canvas[t].iter().map(|p| key(*p)).collect();
        for i in -20..60 {
            for j in -20..60 {
                let p = origin.transform_point([0.25 + 0.5 * i as f64, 0.25 + 0.5 * j as f64]);
                let expected = observed_by(&a, p, t) && observed_by(&e, p, t);
                assert_eq!(in_canvas.contains(&key(p)), expected, "t={t} i={i} j={j}");
                if let Some((x, y)) = a.pixel_frame(t).pixel_of(p) {
                    assert_eq!(ma.frames[t][y * 200 + x], expected);
                } else if observed_by(&e, p, t) {
                    ego_only_ahead += 1;
                    assert!(!expected);
                }
                if let Some((x, y)) = e.pixel_frame(t).pixel_of(p) {
                    if !expected {
                        // Nearest-neighbor materialization can only disagree at the boundary.
                        let near = [[0.05, 0.0], [-0.05, 0.0], [0.0, 0.05], [0.0, -0.05]]
                            .iter()
                            .any(|d| observed_by(&a, [p[0] + d[0], p[1] + d[1]], t));
                        assert!(!me.frames[t][y * 200 + x] || near);
                    }
                }
            }
        }
    }
    assert!(ego_only_ahead > 0, "the ego must see past the allo grid's front edge");
}

#[test]
fn masks_grow_monotonically_in_world() {
    let (a, e) = disk_pair(12, 0.5, 7.0);
    let canvas = observed_canvas(&a, &e).unwrap();
    for w in canvas.windows(2) {
        let later: std::collections::HashSet<_> = w[1].iter().map(|p| ((p[0] * 1e6) as i64, (p[1] * 1e6) as i64)).collect();
        assert!(w[0].iter().all(|p| later.contains(&((p[0] * 1e6) as i64, (p[1] * 1e6) as i64))));
        assert!(w[0].len() <= w[1].len());
    }
    let (ma, _) = visibility_mask(&a, &e).unwrap();
    for w in ma.frames.windows(2) {
        assert!(w[0].iter().zip(&w[1]).all(|(x, y)| !*x || *y));
    }
}

#[test]
fn pose_mismatch_is_rejected() {
    let (a, mut e) = disk_pair(5, 0.5, 5.0);
    e.ego_poses[3].x += 1.0;
    assert!(matches!(visibility_mask(&a, &e), Err(Error::Data(_))));
}

#[test]
fn mask_application() {
    let (a, _) = disk_pair(5, 0.5, 5.0);
    let full = VisibilityMask::full(200, 200, 5);
    let same = apply_mask(&a, &full).unwrap();
    assert!(same.frames().zip(a.frames()).all(|(x, y)| x == y));

    let empty = VisibilityMask {
        frames: vec![vec![false; 200 * 200]; 5],
        ..full.clone()
    };
    assert!(apply_mask(&a, &empty).unwrap().frames().all(|f| f.data.iter().all(|p| *p == [0.0; 3])));

    let half = VisibilityMask {
        frames: vec![(0..200 * 200).map(|i| i % 200 < 100).collect(); 5],
        ..full
    };
    let once = apply_mask(&a, &half).unwrap();
    for (m, src) in once.frames().zip(a.frames()) {
        for (i, (p, q)) in m.data.iter().zip(&src.data).enumerate() {
            if i % 200 < 100 {
                assert_eq!(p, q);
            } else {
                assert_eq!(*p, [0.0; 3]);
            }
        }
    }
    assert_eq!(apply_mask(&once, &half).unwrap(), once);
    let wrong = VisibilityMask::full(10, 10, 5);
    assert!(apply_mask(&a, &wrong).is_err());
}

#[test]
fn dataset_roundtrip_within_quantization() {
    let dir = tempfile::tempdir().unwrap();
    let (a, e) = disk_pair(6, 0.5, 6.0);
    let (ma, me) = visibility_mask(&a, &e).unwrap();
    let entry = DatasetEntry {
        split: Split::Test,
        preset: "synthetic".into(),
        seed: 9,
        allo: apply_mask(&a, &ma).unwrap().resized(50, 50),
        ego: apply_mask(&e, &me).unwrap().resized(50, 50),
    };
    write_dataset(dir.path(), std::slice::from_ref(&entry)).unwrap();
    assert!(dir.path().join("test/p/allo/frame_005.png").is_file());
    assert!(dir.path().join("test/p/ego/mask/frame_000.png").is_file());
    let back = read_dataset(dir.path()).unwrap();
    assert_eq!(back.len(), 1);
    let b = &back[0];
    assert_eq!((b.split, b.preset.as_str(), b.seed), (Split::Test, "synthetic", 9));
    for v in Variant::BOTH {
        let (x, y) = (entry.variant(v), b.variant(v));
        assert_eq!(x.mask, y.mask);
        assert_eq!(x.ego_poses, y.ego_poses);
        assert_eq!(x.frame_plan, y.frame_plan);
        for (f, g) in x.frames().zip(y.frames()) {
            assert_eq!(f.quantized(), *g);
        }
    }
}

#[test]
fn malformed_layout_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(read_dataset(dir.path()), Err(Error::Layout { .. })));
    let (a, e) = disk_pair(5, 0.0, 5.0);
    let entry = DatasetEntry {
        split: Split::Train,
        preset: "x".into(),
        seed: 1,
        allo: a.resized(20, 20),
        ego: e.resized(20, 20),
    };
    write_dataset(dir.path(), &[entry]).unwrap();
    std::fs::remove_file(dir.path().join("train/p/ego/frame_003.png")).unwrap();
    match read_dataset(dir.path()) {
        Err(Error::Layout { path, reason }) => {
            assert!(path.ends_with("frame_003.png"), "{path:?}");
            assert!(reason.contains("missing"));
        }
        other => panic!("expected layout error, got {other:?}"),
    }
}
