use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use splat2twin::mask::Mask;
use splat2twin::metrics::field_consistency;
use splat2twin::projection::render_depth_maps;
use splat2twin::semantics::{depth_cluster_gate, gate_depths, iterative_lift, split_partitions, vote};
use splat2twin::synth::{generate_scene, render_mask_set, Role, Scene, SceneSpec};
use splat2twin::{MaskSet, VoteSettings};

fn scene(spec: &SceneSpec) -> (Scene, MaskSet) {
    let scene = generate_scene(spec).unwrap();
    let masks = render_mask_set(spec, &scene.views).unwrap();
    (scene, masks)
}

fn voted(scene: &Scene, masks: &MaskSet, divisor: f64) -> splat2twin::LabelField {
    let cfg = VoteSettings {
        threshold_divisor: divisor,
        ..Default::default()
    };
    let maps = render_depth_maps(&scene.views, &scene.cloud, cfg.render_alpha_min);
    vote(&scene.cloud, &scene.views, masks, &cfg, &maps).unwrap()
}

#[test]
fn strictest_divisor_is_unanimous() {
    for seed in 0..3 {
        let (s, m) = scene(&SceneSpec::tabletop(seed));
        let field = voted(&s, &m, 1.0);
        assert!(field.object_count() > 0);
        for e in field.entries.iter().filter(|e| e.label != 0) {
            assert_eq!(e.foreground_views, e.visible_views);
        }
    }
}

#[test]
fn looser_divisor_never_shrinks_the_object_set() {
    let (s, m) = scene(&SceneSpec::box_on_table(2));
    let maps = render_depth_maps(&s.views, &s.cloud, 0.1);
    let mut prev: Option<Vec<bool>> = None;
    for d in [1.0, 1.2, 1.5, 1.8, 2.0, 3.0] {
        let cfg = VoteSettings {
            threshold_divisor: d,
            ..Default::default()
        };
        let f = vote(&s.cloud, &s.views, &m, &cfg, &maps).unwrap();
        let obj: Vec<bool> = f.entries.iter().map(|e| e.label != 0).collect();
        if let Some(p) = &prev {
            assert!(p.iter().zip(&obj).all(|(a, b)| !a || *b), "divisor {d} lost objects");
        }
        prev = Some(obj);
    }
}

#[test]
fn consistency_rises_with_strictness() {
    for seed in 0..5 {
        let mut spec = match seed % 3 {
            0 => SceneSpec::box_on_table(seed),
            1 => SceneSpec::tabletop(seed),
            _ => SceneSpec::shelf_fragment(seed),
        };
        spec.corruption.floater_fraction = 0.1;
        spec.corruption.ghost_fraction = 0.1;
        spec.corruption.needle_fraction = 0.05;
        spec.mask_dilation = 2;
        let (s, m) = scene(&spec);
        let fractions: Vec<f64> = [2.0, 1.8, 1.5, 1.2, 1.0]
            .iter()
            .map(|&d| {
                field_consistency(&voted(&s, &m, d), 0.8)
                    .unwrap()
                    .dataset_consistent_fraction
            })
            .collect();
        for w in fractions.windows(2) {
            assert!(w[1] >= w[0], "seed {seed}: {fractions:?}");
        }
        assert_eq!(fractions[4], 100.0);
    }
}

#[test]
fn all_true_masks_label_every_visible_splat() {
    let (s, _) = scene(&SceneSpec::box_on_table(1));
    let mut masks = MaskSet::new(&["thing"]);
    for v in &s.views {
        masks
            .insert(&v.view_id, "thing", Mask::filled(v.width, v.height))
            .unwrap();
    }
    let cfg = VoteSettings {
        gate_eps: 10.0,
        ..Default::default()
    };
    let maps = render_depth_maps(&s.views, &s.cloud, cfg.render_alpha_min);
    let field = vote(&s.cloud, &s.views, &masks, &cfg, &maps).unwrap();
    for e in &field.entries {
        assert_eq!(e.label != 0, e.visible_views > 0);
    }
}

#[test]
fn leaky_masks_keep_the_shelf_in_the_background() {
    let mut spec = SceneSpec::shelf_fragment(3);
    spec.mask_dilation = 3;
    let (s, m) = scene(&spec);
    let lift = iterative_lift(&s.cloud, &s.views, &m, &VoteSettings::default()).unwrap();
    let first_maps = render_depth_maps(&s.views, &s.cloud, 0.1);
    let seen: Vec<bool> = (0..s.cloud.len())
        .map(|i| {
            s.views
                .iter()
                .zip(&first_maps)
                .any(|(v, d)| splat2twin::projection::is_visible(v, d, s.cloud[i].position, 0.005))
        })
        .collect();
    let (mut obj_seen, mut obj_hit, mut bg, mut bg_leaked) = (0, 0, 0, 0);
    for (i, r) in s.roles.iter().enumerate() {
        let Role::Surface { label } = r else { continue };
        let got = lift.field.label_name(i);
        if label == "background" {
            bg += 1;
            bg_leaked += (got != "background") as usize;
        } else if seen[i] {
            obj_seen += 1;
            obj_hit += (got == label) as usize;
        }
    }
    let hit = obj_hit as f64 / obj_seen as f64;
    let leak = bg_leaked as f64 / bg as f64;
    assert!(hit >= 0.99, "object recall {hit}");
    assert!(leak <= 0.01, "background leak {leak}");
}

#[test]
fn partitions_conserve_splats() {
    let (s, m) = scene(&SceneSpec::tabletop(4));
    let lift = iterative_lift(&s.cloud, &s.views, &m, &VoteSettings::default()).unwrap();
    let parts = split_partitions(&s.cloud, &lift.field).unwrap();
    let mut all: Vec<usize> = parts.iter().flat_map(|p| p.source_indices.clone()).collect();
    assert_eq!(all.len(), s.cloud.len());
    all.sort_unstable();
    all.dedup();
    assert_eq!(all.len(), s.cloud.len());
}

#[test]
fn single_iteration_equals_one_vote_and_refine() {
    let (s, m) = scene(&SceneSpec::box_on_table(6));
    let cfg = VoteSettings {
        max_iter: 1,
        ..Default::default()
    };
    let lift = iterative_lift(&s.cloud, &s.views, &m, &cfg).unwrap();
    let maps = render_depth_maps(&s.views, &s.cloud, cfg.render_alpha_min);
    let v = vote(&s.cloud, &s.views, &m, &cfg, &maps).unwrap();
    let r = splat2twin::semantics::knn_boundary_refine(&s.cloud, &v, &cfg).unwrap();
    assert_eq!(lift.field, r);
    assert_eq!(lift.iterations_run, 1);
}

#[test]
fn gate_is_permutation_invariant_on_a_scene() {
    let (s, m) = scene(&SceneSpec::box_on_table(8));
    let cfg = VoteSettings::default();
    let view = &s.views[0];
    let mask = m.get(&view.view_id, 1).unwrap();
    let mut order: Vec<usize> = (0..s.cloud.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let shuffled = s.cloud.select(&order);
    let map = render_depth_maps(std::slice::from_ref(view), &s.cloud, 0.1).remove(0);
    let a = depth_cluster_gate(view, &s.cloud, mask, &map, &cfg);
    let b = depth_cluster_gate(view, &shuffled, mask, &map, &cfg);
    for (k, &i) in order.iter().enumerate() {
        assert_eq!(a.weights[i], b.weights[k]);
    }
}

/// Largest group of depths chained by gaps `<= eps`, by brute force. Border
/// points join the cluster of their nearest-depth core neighbour, so the
/// answer does not depend on input order.
fn chain_oracle(input: &[f64], eps: f64, min_samples: usize) -> Vec<bool> {
    let mut order: Vec<usize> = (0..input.len()).collect();
    order.sort_by(|&a, &b| input[a].total_cmp(&input[b]));
    let depths: Vec<f64> = order.iter().map(|&i| input[i]).collect();
    let sorted = sorted_chain_oracle(&depths, eps, min_samples);
    let mut out = vec![false; input.len()];
    for (k, &i) in order.iter().enumerate() {
        out[i] = sorted[k];
    }
    out
}

fn sorted_chain_oracle(depths: &[f64], eps: f64, min_samples: usize) -> Vec<bool> {
    let n = depths.len();
    let nb = |i: usize| (0..n).filter(|&j| (depths[i] - depths[j]).abs() <= eps).count();
    let core: Vec<bool> = (0..n).map(|i| nb(i) >= min_samples).collect();
    let mut comp = vec![usize::MAX; n];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for s in 0..n {
        if !core[s] || comp[s] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut stack = vec![s];
        comp[s] = id;
        let mut members = vec![];
        while let Some(i) = stack.pop() {
            members.push(i);
            for j in 0..n {
                if core[j] && comp[j] == usize::MAX && (depths[i] - depths[j]).abs() <= eps {
                    comp[j] = id;
                    stack.push(j);
                }
            }
        }
        comps.push(members);
    }
    for i in 0..n {
        if !core[i] {
            let first = (0..n)
                .filter(|&j| core[j] && (depths[i] - depths[j]).abs() <= eps)
                .min();
            if let Some(c) = first {
                comps[comp[c]].push(i);
            }
        }
    }
    let mean = |c: &Vec<usize>| c.iter().map(|&i| depths[i]).sum::<f64>() / c.len() as f64;
    let best = comps
        .iter()
        .min_by(|a, b| b.len().cmp(&a.len()).then(mean(a).total_cmp(&mean(b))));
    let mut out = vec![false; n];
    if let Some(c) = best {
        for &i in c {
            out[i] = true;
        }
    }
    out
}

#[test]
fn two_layer_gate_example() {
    let mut depths: Vec<f64> = (0..80).map(|i| 0.498 + 0.004 * i as f64 / 79.0).collect();
    depths.extend((0..10).map(|i| 0.798 + 0.004 * i as f64 / 9.0));
    let w = gate_depths(&depths, 0.02, 10).unwrap();
    assert!(w[..80].iter().all(|&x| x));
    assert!(w[80..].iter().all(|&x| !x));
    assert_eq!(w, chain_oracle(&depths, 0.02, 10));
}

proptest! {
    #[test]
    fn gate_matches_chain_oracle(depths in prop::collection::vec(0.3f64..1.5, 10..120), min in 2usize..8) {
        let got = gate_depths(&depths, 0.02, min).unwrap();
        prop_assert_eq!(got, chain_oracle(&depths, 0.02, min));
    }
}
