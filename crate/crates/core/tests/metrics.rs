use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splat2twin::mask::Mask;
use splat2twin::metrics::{chamfer, consistency_score, ghost_index, miou_2d, precision_recall_f1};
use splat2twin::projection::render_depth_maps;
use splat2twin::semantics::vote;
use splat2twin::synth::{generate_scene, render_mask_set, SceneSpec};
use splat2twin::{MaskSet, Point, Quat, VoteSettings};

fn cloud(seed: u64, n: usize) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            Point::new(
                rng.random_range(-0.2..0.2),
                rng.random_range(-0.2..0.2),
                rng.random_range(-0.2..0.2),
            )
        })
        .collect()
}

fn brute_chamfer(a: &[Point], b: &[Point]) -> f64 {
    let one = |x: &[Point], y: &[Point]| {
        x.iter()
            .map(|p| y.iter().map(|q| p.distance(*q)).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / x.len() as f64
    };
    (one(a, b) + one(b, a)) / 2.0
}

#[test]
fn chamfer_matches_brute_force_on_a_translated_copy() {
    let a = cloud(1, 100);
    let b: Vec<Point> = a.iter().map(|p| *p + Point::new(0.005, 0.0, 0.0)).collect();
    let got = chamfer(&a, &b, 0.0).unwrap();
    assert!((got - brute_chamfer(&a, &b)).abs() < 1e-15);
    assert!(got <= 0.005 + 1e-15);
}

#[test]
fn chamfer_with_voxels_matches_brute_force_on_centroids() {
    let a = cloud(2, 400);
    let b = cloud(3, 300);
    let res = 0.02;
    let centroids = |p: &[Point]| {
        let mut m: std::collections::BTreeMap<[i64; 3], (Point, usize)> = Default::default();
        for q in p {
            let k = [q.x, q.y, q.z].map(|c| (c / res).floor() as i64);
            let e = m.entry(k).or_insert((Point::zero(), 0));
            e.0 += *q;
            e.1 += 1;
        }
        m.values().map(|(s, n)| *s * (1.0 / *n as f64)).collect::<Vec<_>>()
    };
    let want = brute_chamfer(&centroids(&a), &centroids(&b));
    assert!((chamfer(&a, &b, res).unwrap() - want).abs() < 1e-12);
}

#[test]
fn shifted_square_iou_is_one_third() {
    let square = |x0: u32| {
        let mut m = Mask::new(20, 10);
        for y in 0..10 {
            for x in x0..x0 + 10 {
                m.set(x, y, true);
            }
        }
        m
    };
    let mut p = MaskSet::new(&["obj"]);
    let mut g = MaskSet::new(&["obj"]);
    p.insert("v", "obj", square(0)).unwrap();
    g.insert("v", "obj", square(5)).unwrap();
    assert!((miou_2d(&p, &g).unwrap() - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn consistency_values_are_exact_ratios() {
    let spec = SceneSpec::box_on_table(4);
    let s = generate_scene(&spec).unwrap();
    let masks = render_mask_set(&spec, &s.views).unwrap();
    let maps = render_depth_maps(&s.views, &s.cloud, 0.1);
    let c = consistency_score(&s.cloud, &s.views, &masks, &maps, 0.005, 0.8).unwrap();
    let mut consistent = 0;
    for (i, &(fg, n)) in c.counts.iter().enumerate() {
        assert!(fg <= n);
        match c.value(i) {
            Some(v) => {
                assert_eq!(v, fg as f64 / n as f64);
                consistent += (fg as f64 >= 0.8 * n as f64) as usize;
            }
            None => assert_eq!(n, 0),
        }
    }
    assert_eq!(c.valid_point_count + c.unseen_point_count, s.cloud.len());
    assert_eq!(
        c.dataset_consistent_fraction,
        100.0 * consistent as f64 / c.valid_point_count as f64
    );
}

#[test]
fn ghost_index_is_zero_on_equal_divisors_and_matches_a_recount() {
    let mut spec = SceneSpec::box_on_table(5);
    spec.corruption.ghost_fraction = 0.1;
    spec.mask_dilation = 2;
    let s = generate_scene(&spec).unwrap();
    let masks = render_mask_set(&spec, &s.views).unwrap();
    let cfg = VoteSettings::default();
    let maps = render_depth_maps(&s.views, &s.cloud, cfg.render_alpha_min);
    for d in [1.0, 1.5, 2.0] {
        assert_eq!(ghost_index(&s.cloud, &s.views, &masks, &cfg, &maps, d, d).unwrap(), 0.0);
    }
    let g = ghost_index(&s.cloud, &s.views, &masks, &cfg, &maps, 2.0, 1.0).unwrap();
    let fg = |d: f64| {
        let c = VoteSettings {
            threshold_divisor: d,
            ..cfg
        };
        let f = vote(&s.cloud, &s.views, &masks, &c, &maps).unwrap();
        f.entries.iter().filter(|e| e.label != 0).count() as f64
    };
    let recount = 100.0 * (fg(2.0) - fg(1.0)) / s.cloud.len() as f64;
    assert!(g > 0.0);
    assert_eq!(g, recount);
}

fn rigid(seed: u64) -> (Quat<f64>, Point) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axis = Point::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(0.1..1.0),
    );
    let q = Quat::from_axis_angle(axis, rng.random_range(0.0..std::f64::consts::TAU));
    let t = Point::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    (q, t)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chamfer_identities(seed in 0u64..100_000, na in 1usize..200, nb in 1usize..200) {
        let a = cloud(seed, na);
        let b = cloud(seed + 1, nb);
        prop_assert_eq!(chamfer(&a, &a, 0.0).unwrap(), 0.0);
        prop_assert_eq!(chamfer(&a, &b, 0.0).unwrap(), chamfer(&b, &a, 0.0).unwrap());
        prop_assert_eq!(chamfer(&a, &b, 0.001).unwrap(), chamfer(&b, &a, 0.001).unwrap());
    }

    #[test]
    fn chamfer_is_rigid_motion_invariant(seed in 0u64..100_000) {
        let a = cloud(seed, 150);
        let b = cloud(seed + 7, 120);
        let (q, t) = rigid(seed);
        let m = |p: &Vec<Point>| p.iter().map(|x| q.rotate(*x) + t).collect::<Vec<_>>();
        let before = chamfer(&a, &b, 0.0).unwrap();
        let after = chamfer(&m(&a), &m(&b), 0.0).unwrap();
        prop_assert!((before - after).abs() <= 1e-12);
    }

    #[test]
    fn precision_recall_shrink_with_threshold(seed in 0u64..100_000, t in 0.001f64..0.05, f in 0.1f64..1.0) {
        let a = cloud(seed, 120);
        let b = cloud(seed + 3, 90);
        let hi = precision_recall_f1(&a, &b, t).unwrap();
        let lo = precision_recall_f1(&a, &b, t * f).unwrap();
        prop_assert!(lo.precision <= hi.precision);
        prop_assert!(lo.recall <= hi.recall);
        let f1 = if hi.precision + hi.recall > 0.0 {
            2.0 * hi.precision * hi.recall / (hi.precision + hi.recall)
        } else {
            0.0
        };
        prop_assert!((hi.f1 - f1).abs() < 1e-15);
    }
}
