use splat2twin::ply::encode_ply;
use splat2twin::spatial::KdTree;
use splat2twin::synth::{
    generate_scene, gt_mesh, materialize, render_gt_mask, CameraRing, Pose, Primitive, Role, SceneSpec, Shape,
};

fn single(shape: Shape, dims: Vec<f64>, at: [f64; 3]) -> SceneSpec {
    SceneSpec {
        primitives: vec![Primitive {
            shape,
            pose: Pose {
                position: at,
                yaw_deg: 0.0,
            },
            dimensions: dims,
            label: "obj".into(),
        }],
        surfel_spacing: 0.005,
        corruption: Default::default(),
        camera_ring: CameraRing {
            count: 6,
            radius: 0.5,
            height: 0.3,
            look_at: [0.0, 0.0, 0.0],
            width: 320,
            height_px: 240,
            focal: 300.0,
        },
        seed: 0,
        dbscan_eps: 0.02,
        mask_dilation: 0,
    }
}

#[test]
fn centred_sphere_projects_to_a_disc() {
    let r = 0.05;
    let spec = single(Shape::Sphere, vec![r], [0.0, 0.0, 0.0]);
    for view in spec.cameras() {
        let d = view.centre().norm();
        let radius = view.fx * r / d;
        let mask = render_gt_mask(&view, &spec, "obj", 0).unwrap();
        for y in 0..view.height {
            for x in 0..view.width {
                let dist = ((x as f64 + 0.5 - view.cx).powi(2) + (y as f64 + 0.5 - view.cy).powi(2)).sqrt();
                if dist < radius - 1.0 {
                    assert!(mask.get(x, y), "({x},{y}) inside the disc");
                } else if dist > radius + 1.0 {
                    assert!(!mask.get(x, y), "({x},{y}) outside the disc");
                }
            }
        }
    }
}

#[test]
fn primitive_outside_every_frustum_gives_empty_masks() {
    let spec = single(Shape::Box, vec![0.05, 0.05, 0.05], [0.0, 0.0, 5.0]);
    for view in spec.cameras() {
        assert!(render_gt_mask(&view, &spec, "obj", 0).unwrap().is_empty());
    }
}

#[test]
fn dilation_only_adds_pixels_near_the_boundary() {
    let spec = SceneSpec::tabletop(1);
    let view = &spec.cameras()[3];
    let base = render_gt_mask(view, &spec, "box", 0).unwrap();
    let wide = render_gt_mask(view, &spec, "box", 3).unwrap();
    assert!(wide.count() > base.count());
    for y in 0..view.height {
        for x in 0..view.width {
            if base.get(x, y) {
                assert!(wide.get(x, y));
            } else if wide.get(x, y) {
                let near = (-3i64..=3).any(|dy| {
                    (-3i64..=3).any(|dx| {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        dx * dx + dy * dy <= 9
                            && nx >= 0
                            && ny >= 0
                            && nx < view.width as i64
                            && ny < view.height as i64
                            && base.get(nx as u32, ny as u32)
                    })
                });
                assert!(near, "({x},{y}) is further than 3 px from the mask");
            }
        }
    }
}

fn corrupted(seed: u64) -> SceneSpec {
    let mut spec = SceneSpec::tabletop(seed);
    spec.corruption.floater_fraction = 0.1;
    spec.corruption.ghost_fraction = 0.1;
    spec.corruption.needle_fraction = 0.05;
    spec
}

#[test]
fn same_seed_gives_identical_bytes() {
    let a = generate_scene(&corrupted(42)).unwrap();
    let b = generate_scene(&corrupted(42)).unwrap();
    assert_eq!(encode_ply(&a.cloud).unwrap(), encode_ply(&b.cloud).unwrap());
    assert_eq!(a.roles, b.roles);
    let c = generate_scene(&corrupted(43)).unwrap();
    assert_ne!(encode_ply(&a.cloud).unwrap(), encode_ply(&c.cloud).unwrap());
}

#[test]
fn materialized_trees_are_identical() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let spec = corrupted(42);
    let f1 = materialize(&spec, d1.path()).unwrap();
    let f2 = materialize(&spec, d2.path()).unwrap();
    assert_eq!(f1, f2);
    for f in &f1 {
        assert_eq!(
            std::fs::read(d1.path().join(f)).unwrap(),
            std::fs::read(d2.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let masks = f1.iter().filter(|f| f.starts_with("masks/")).count();
    assert_eq!(masks, spec.camera_ring.count * spec.object_labels().len());
}

#[test]
fn tags_match_requested_fractions() {
    let spec = corrupted(3);
    let s = generate_scene(&spec).unwrap();
    let surface = s.count(Role::is_surface);
    let count = |r: Role| s.count(|x| *x == r);
    assert_eq!(
        surface + count(Role::Floater) + count(Role::Ghost) + count(Role::Needle),
        s.cloud.len()
    );
    assert_eq!(count(Role::Ghost), (0.1 * surface as f64).round() as usize);
    assert_eq!(count(Role::Floater), (0.1 * surface as f64).round() as usize);
    assert_eq!(count(Role::Needle), (0.05 * surface as f64).round() as usize);
    for (sp, r) in s.cloud.iter().zip(&s.roles) {
        match r {
            Role::Ghost => assert!(sp.opacity() < 0.1),
            Role::Needle => assert!(sp.anisotropy_ratio() > 10.0),
            _ => {
                assert!(sp.opacity() >= 0.1);
                assert!(sp.anisotropy_ratio() <= 10.0);
            }
        }
    }
}

#[test]
fn floaters_keep_their_distance() {
    let mut spec = single(Shape::Box, vec![0.25, 0.25, 0.2], [0.0, 0.0, 0.1]);
    spec.corruption.floater_fraction = 0.1;
    let s = generate_scene(&spec).unwrap();
    let surface = s.surface_points(None);
    let floaters: Vec<_> = s
        .cloud
        .iter()
        .zip(&s.roles)
        .filter(|(_, r)| **r == Role::Floater)
        .map(|(sp, _)| sp.position)
        .collect();
    assert_eq!(floaters.len(), (0.1 * surface.len() as f64).round() as usize);
    let tree = KdTree::new(&surface);
    for f in &floaters {
        let d = tree.nearest(*f).unwrap().dist_sq.sqrt();
        assert!(d >= 10.0 * spec.dbscan_eps, "floater {d} m from the surface");
    }
}

#[test]
fn unit_box_mesh() {
    let spec = single(Shape::Box, vec![1.0, 1.0, 1.0], [0.0, 0.0, 0.0]);
    let m = gt_mesh(&spec, "obj", 8).unwrap();
    assert_eq!(m.faces.len(), 12);
    assert!((m.signed_volume() - 1.0).abs() < 1e-12);
}

#[test]
fn sphere_mesh_volume_converges() {
    let spec = single(Shape::Sphere, vec![1.0], [0.0, 0.0, 0.0]);
    let exact = 4.0 / 3.0 * std::f64::consts::PI;
    let errs: Vec<f64> = [8, 16, 32, 64, 128]
        .iter()
        .map(|&n| (gt_mesh(&spec, "obj", n).unwrap().signed_volume() - exact).abs())
        .collect();
    for w in errs.windows(2) {
        assert!(w[1] < w[0], "{errs:?}");
    }
    // inscribed tessellation converges quadratically
    assert!(errs[4] < errs[3] / 3.5, "{errs:?}");
    assert!(errs[4] / exact < 5e-3, "{errs:?}");
}

#[test]
fn cylinder_area_close_to_analytic() {
    let (r, h) = (0.3, 0.8);
    let spec = single(Shape::Cylinder, vec![r, h], [0.0, 0.0, 0.0]);
    let m = gt_mesh(&spec, "obj", 256).unwrap();
    let exact = 2.0 * std::f64::consts::PI * r * (r + h);
    assert!((m.surface_area() - exact).abs() / exact < 0.01);
    assert!(m.is_closed());
}
