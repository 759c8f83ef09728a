//! Acceptance suite. Prints one line per criterion and exits non-zero if any
//! criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust::{insphere, orient3d, Coord3D};
use splat2twin::clean::{needle_filter, opacity_filter};
use splat2twin::dbscan::dbscan;
use splat2twin::mesh::{alpha_shape, delaunay3d, suggest_alpha};
use splat2twin::metrics::{chamfer, consistency_score, miou_2d};
use splat2twin::projection::render_depth_maps;
use splat2twin::semantics::vote;
use splat2twin::synth::{generate_scene, materialize, render_mask_set, Pose, Primitive, Role, SceneSpec, Shape};
use splat2twin::{Mask, MaskSet, Point, Quat, Splat, VoteSettings};
use splat2twin_cli::config::{EvalConfig, PipelineConfig};
use splat2twin_cli::eval::{ablation, divisor_sweep, SWEEP_DIVISORS};
use splat2twin_cli::pipeline::Inputs;
use splat2twin_cli::{cmd_pipeline, scene_pipeline_config};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 10] = [
        (1, density_math),
        (2, unanimity),
        (3, sweep_monotone),
        (4, ablation_ordering),
        (5, stage_one_exact),
        (6, dbscan_oracle),
        (7, alpha_shape_geometry),
        (8, metric_identities),
        (9, determinism),
        (10, documented_exclusions),
    ];
    let mut failed = 0;
    for (n, f) in criteria {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n}: PASS ({secs:.1} s) {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n}: FAIL ({secs:.1} s) {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn random_splat(rng: &mut ChaCha8Rng) -> Splat {
    let mut v = || {
        Point::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
    };
    let position = v();
    let axis = v();
    let log_scale = v() * 2.0;
    Splat {
        position,
        log_scale,
        rotation: Quat::from_axis_angle(axis, rng.random_range(0.0..std::f64::consts::TAU)),
        opacity_logit: rng.random_range(-4.0..4.0),
        colour_dc: [0.5; 3],
        colour_rest: Vec::new(),
    }
}

fn density_math() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let s = random_splat(&mut rng);
        ensure!(
            s.density_at(s.position) == 1.0,
            "density at the mean is {}",
            s.density_at(s.position)
        );
        let off = Point::new(
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
        );
        let x = s.position + off * s.max_scale();
        let g = s.log_density_gradient(x);
        for axis in 0..3 {
            let mut e = Point::zero();
            match axis {
                0 => e.x = h,
                1 => e.y = h,
                _ => e.z = h,
            }
            let fd = (s.density_at(x + e).ln() - s.density_at(x - e).ln()) / (2.0 * h);
            worst = worst.max((fd - g[axis]).abs() / g.norm().max(1e-8));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    ensure!(worst < 1e-4, "worst relative gradient error {worst:.2e}");
    ensure!(secs < 1.0, "took {secs:.2} s");
    Ok(format!("100 splats, worst relative gradient error {worst:.1e}"))
}

fn unanimity() -> Outcome {
    let specs = [
        SceneSpec::box_on_table(0),
        SceneSpec::tabletop(1),
        SceneSpec::tabletop(2),
        SceneSpec::shelf_fragment(3),
    ];
    let mut objects = 0;
    for spec in specs {
        let s = generate_scene(&spec).map_err(|e| e.to_string())?;
        let masks = render_mask_set(&spec, &s.views).map_err(|e| e.to_string())?;
        let cfg = VoteSettings {
            threshold_divisor: 1.0,
            ..Default::default()
        };
        let maps = render_depth_maps(&s.views, &s.cloud, cfg.render_alpha_min);
        let field = vote(&s.cloud, &s.views, &masks, &cfg, &maps).map_err(|e| e.to_string())?;
        for e in field.entries.iter().filter(|e| e.label != 0) {
            ensure!(
                e.foreground_views == e.visible_views,
                "{} of {} views",
                e.foreground_views,
                e.visible_views
            );
            objects += 1;
        }
    }
    ensure!(objects > 0, "no object-labelled splats");
    Ok(format!("{objects} object splats over 4 scenes, all unanimous"))
}

/// Surfaces are fixed per preset and the seed drives the corruption, so the
/// presets rotate with the seed.
fn seeded_scene(seed: u64) -> SceneSpec {
    match seed % 3 {
        0 => SceneSpec::box_on_table(seed),
        1 => SceneSpec::tabletop(seed),
        _ => SceneSpec::shelf_fragment(seed),
    }
}

fn sweep_monotone() -> Outcome {
    let mut lines = Vec::new();
    for seed in 0..5 {
        let mut spec = seeded_scene(seed);
        spec.corruption.floater_fraction = 0.1;
        spec.corruption.ghost_fraction = 0.1;
        spec.corruption.needle_fraction = 0.05;
        spec.mask_dilation = 2;
        let s = generate_scene(&spec).map_err(|e| e.to_string())?;
        let masks = render_mask_set(&spec, &s.views).map_err(|e| e.to_string())?;
        let inputs = Inputs {
            cloud: s.cloud,
            views: s.views,
            masks,
        };
        let r = divisor_sweep(&inputs, &VoteSettings::default(), &SWEEP_DIVISORS, 0.8).map_err(|e| e.to_string())?;
        let f: Vec<f64> = r.rows.iter().map(|row| row.consistent_fraction).collect();
        ensure!(f.windows(2).all(|w| w[1] >= w[0]), "seed {seed}: {f:?}");
        lines.push(format!("{:.2}->{:.2}", f[0], f[f.len() - 1]));
    }
    Ok(format!("consistency over divisors 2.0..1.0: {}", lines.join(", ")))
}

fn scene_near(spec: SceneSpec, total: usize) -> Result<SceneSpec, String> {
    let s = generate_scene(&spec).map_err(|e| e.to_string())?;
    let mut spec = spec;
    spec.surfel_spacing *= (s.cloud.len() as f64 / total as f64).sqrt();
    Ok(spec)
}

fn ablation_ordering() -> Outcome {
    let mut rows = Vec::new();
    for mut spec in (0..5).map(seeded_scene) {
        spec.corruption.floater_fraction = 0.1;
        spec.corruption.ghost_fraction = 0.1;
        spec.corruption.needle_fraction = 0.05;
        let spec = scene_near(spec, 100_000)?;
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let t = Instant::now();
        materialize(&spec, dir.path()).map_err(|e| e.to_string())?;
        let r = ablation(
            &dir.path().join("splats.ply"),
            dir.path(),
            &Default::default(),
            &EvalConfig::default(),
        )
        .map_err(|e| e.to_string())?;
        let secs = t.elapsed().as_secs_f64();
        let by: HashMap<&str, _> = r.rows.iter().map(|row| (row.method.as_str(), &row.fidelity)).collect();
        let (orig, cluster, full) = (by["original"], by["cluster-only"], by["full"]);
        let tag = format!("seed {} ({} splats)", spec.seed, r.input_count);
        ensure!(
            full.chamfer < cluster.chamfer && cluster.chamfer < orig.chamfer,
            "{tag}: chamfer full {} cluster {} original {}",
            full.chamfer,
            cluster.chamfer,
            orig.chamfer
        );
        ensure!(full.f1 >= 0.99, "{tag}: full F1 {}", full.f1);
        ensure!(secs < 60.0, "{tag}: {secs:.1} s");
        rows.push(format!(
            "{} splats {:.4}/{:.4}/{:.4} F1 {:.4} {:.1}s",
            r.input_count, full.chamfer, cluster.chamfer, orig.chamfer, full.f1, secs
        ));
    }
    Ok(format!("chamfer full/cluster/original: {}", rows.join("; ")))
}

fn stage_one_exact() -> Outcome {
    let mut ghosts_total = 0;
    let mut needles_total = 0;
    for seed in 0..3 {
        let mut spec = SceneSpec::tabletop(seed);
        spec.corruption.floater_fraction = 0.1;
        spec.corruption.ghost_fraction = 0.1;
        spec.corruption.needle_fraction = 0.05;
        let s = generate_scene(&spec).map_err(|e| e.to_string())?;
        let (kept, _) = opacity_filter(&s.cloud, 0.1);
        let kept_set: Vec<bool> = mark(&kept.kept, s.cloud.len());
        for (i, r) in s.roles.iter().enumerate() {
            match r {
                Role::Ghost => ensure!(!kept_set[i], "ghost {i} survived the opacity filter"),
                Role::Surface { .. } => ensure!(kept_set[i], "surface {i} removed by the opacity filter"),
                _ => {}
            }
        }
        ghosts_total += s.roles.iter().filter(|r| **r == Role::Ghost).count();
        let (kept, _) = needle_filter(&s.cloud, 10.0);
        let kept_set = mark(&kept.kept, s.cloud.len());
        for (i, r) in s.roles.iter().enumerate() {
            if *r == Role::Needle {
                ensure!(!kept_set[i], "needle {i} survived the needle filter");
                needles_total += 1;
            }
        }
    }
    Ok(format!(
        "{ghosts_total} ghosts and {needles_total} needles removed, no surface loss"
    ))
}

fn mark(kept: &[usize], n: usize) -> Vec<bool> {
    let mut v = vec![false; n];
    for &i in kept {
        v[i] = true;
    }
    v
}

fn brute_dbscan(p: &[Point], eps: f64, min_samples: usize) -> Vec<Option<usize>> {
    let n = p.len();
    let adj = |i: usize, j: usize| p[i].distance(p[j]) <= eps;
    let core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| adj(i, j)).count() >= min_samples)
        .collect();
    let mut label = vec![None; n];
    let mut next = 0;
    for s in 0..n {
        if !core[s] || label[s].is_some() {
            continue;
        }
        label[s] = Some(next);
        let mut stack = vec![s];
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if core[j] && label[j].is_none() && adj(i, j) {
                    label[j] = Some(next);
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    for i in 0..n {
        if !core[i] {
            label[i] = (0..n).find(|&j| core[j] && adj(i, j)).and_then(|j| label[j]);
        }
    }
    label
}

fn as_sets(labels: &[Option<usize>]) -> Vec<Vec<usize>> {
    let k = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut sets = vec![Vec::new(); k + 1];
    for (i, l) in labels.iter().enumerate() {
        sets[l.map_or(k, |c| c)].push(i);
    }
    let noise = sets.pop().unwrap();
    sets.sort();
    sets.push(noise);
    sets
}

fn dbscan_oracle() -> Outcome {
    let mut clusters = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let centres: Vec<Point> = (0..5)
            .map(|_| {
                Point::new(
                    rng.random_range(0.0..0.4),
                    rng.random_range(0.0..0.4),
                    rng.random_range(0.0..0.4),
                )
            })
            .collect();
        let pts: Vec<Point> = (0..500)
            .map(|i| {
                if i % 7 == 0 {
                    Point::new(
                        rng.random_range(0.0..0.5),
                        rng.random_range(0.0..0.5),
                        rng.random_range(0.0..0.5),
                    )
                } else {
                    centres[i % 5]
                        + Point::new(
                            rng.random_range(-0.03..0.03),
                            rng.random_range(-0.03..0.03),
                            rng.random_range(-0.03..0.03),
                        )
                }
            })
            .collect();
        let got = as_sets(&dbscan(&pts, 0.02, 10).labels);
        let want = as_sets(&brute_dbscan(&pts, 0.02, 10));
        ensure!(got == want, "instance {seed} differs from the brute-force reference");
        clusters += want.len() - 1;
    }
    Ok(format!(
        "20 instances of 500 points, {clusters} clusters, identical sets"
    ))
}

fn c(p: Point) -> Coord3D<f64> {
    Coord3D { x: p.x, y: p.y, z: p.z }
}

/// Surface samples of a unit sphere from the synth sampler, with the spacing
/// tuned to give about `n` points.
fn unit_sphere_sample(n: usize) -> Result<Vec<Point>, String> {
    let mut spec = SceneSpec::box_on_table(0);
    spec.primitives = vec![Primitive {
        shape: Shape::Sphere,
        pose: Pose {
            position: [0.0; 3],
            yaw_deg: 0.0,
        },
        dimensions: vec![1.0],
        label: "sphere".into(),
    }];
    spec.surfel_spacing = (4.0 * std::f64::consts::PI / n as f64).sqrt();
    let s = generate_scene(&spec).map_err(|e| e.to_string())?;
    Ok(s.surface_points(None))
}

fn alpha_shape_geometry() -> Outcome {
    let sphere = unit_sphere_sample(2000)?;
    let alpha = suggest_alpha(&sphere).map_err(|e| e.to_string())?;
    let tet = delaunay3d(&sphere).map_err(|e| e.to_string())?;
    let mesh = alpha_shape(&tet, alpha).map_err(|e| e.to_string())?.mesh;
    let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
    for f in &mesh.faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            *edges.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    ensure!(
        edges.values().all(|&n| n == 2),
        "an edge is not shared by exactly two faces"
    );
    let chi = mesh.vertices.len() as i64 - edges.len() as i64 + mesh.faces.len() as i64;
    ensure!(chi == 2, "Euler characteristic {chi}");
    let exact = 4.0 * std::f64::consts::PI / 3.0;
    let vol = mesh.signed_volume();
    let err = (vol - exact).abs() / exact;
    ensure!(err <= 0.05, "volume {vol:.4} is {:.1}% off", 100.0 * err);

    let mut cells = 0;
    for (seed, n) in [(1u64, 100usize), (2, 300), (3, 500)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Point> = (0..n)
            .map(|_| Point::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let t = delaunay3d(&pts).map_err(|e| e.to_string())?;
        for cell in &t.tets {
            let [a, b, cc, d] = cell.map(|i| c(pts[i]));
            ensure!(orient3d(a, b, cc, d) > 0.0, "inverted cell {cell:?}");
            for (i, &p) in pts.iter().enumerate() {
                if !cell.contains(&i) {
                    ensure!(
                        insphere(a, b, cc, d, c(p)) <= 0.0,
                        "point {i} inside the circumsphere of {cell:?}"
                    );
                }
            }
        }
        cells += t.tets.len();
    }
    Ok(format!(
        "{} points, {} faces, chi 2, volume error {:.2}%, {cells} Delaunay cells empty",
        sphere.len(),
        mesh.faces.len(),
        100.0 * err
    ))
}

fn metric_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut cloud = |n: usize| -> Vec<Point> {
        (0..n)
            .map(|_| {
                Point::new(
                    rng.random_range(-0.2..0.2),
                    rng.random_range(-0.2..0.2),
                    rng.random_range(-0.2..0.2),
                )
            })
            .collect()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (a, b) = (cloud(150), cloud(120));
        let f = |x: &[Point], y: &[Point]| chamfer(x, y, 0.0).map_err(|e| e.to_string());
        ensure!(f(&a, &a)? == 0.0, "chamfer(A, A) != 0");
        ensure!(f(&a, &b)? == f(&b, &a)?, "chamfer is not symmetric");
        let q = Quat::from_axis_angle(Point::new(0.3, -0.5, 0.8), 1.234);
        let t = Point::new(0.7, -0.2, 1.1);
        let m = |p: &[Point]| p.iter().map(|x| q.rotate(*x) + t).collect::<Vec<_>>();
        worst = worst.max((f(&a, &b)? - f(&m(&a), &m(&b))?).abs());
    }
    ensure!(worst <= 1e-12, "rigid motion changes chamfer by {worst:.1e}");

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
    p.insert("v", "obj", square(0)).map_err(|e| e.to_string())?;
    g.insert("v", "obj", square(5)).map_err(|e| e.to_string())?;
    let iou = miou_2d(&p, &g).map_err(|e| e.to_string())?;
    ensure!((iou - 1.0 / 3.0).abs() < 1e-15, "shifted-square mIoU {iou}");

    let spec = SceneSpec::box_on_table(4);
    let s = generate_scene(&spec).map_err(|e| e.to_string())?;
    let masks = render_mask_set(&spec, &s.views).map_err(|e| e.to_string())?;
    let maps = render_depth_maps(&s.views, &s.cloud, 0.1);
    let score = consistency_score(&s.cloud, &s.views, &masks, &maps, 0.005, 0.8).map_err(|e| e.to_string())?;
    for (i, &(fg, n)) in score.counts.iter().enumerate() {
        if let Some(v) = score.value(i) {
            ensure!(v == fg as f64 / n as f64, "point {i}: {v} != {fg}/{n}");
        }
    }
    Ok(format!(
        "rigid drift {worst:.1e}, mIoU {iou:.6}, {} exact ratios",
        score.valid_point_count
    ))
}

fn determinism() -> Outcome {
    let t = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut spec = SceneSpec::box_on_table(42);
    spec.corruption.floater_fraction = 0.1;
    spec.corruption.ghost_fraction = 0.1;
    spec.corruption.needle_fraction = 0.05;
    materialize(&spec, dir.path()).map_err(|e| e.to_string())?;
    let cfg_path = dir.path().join("pipeline.json");
    write_config(&cfg_path, &scene_pipeline_config())?;
    let mut manifests = Vec::new();
    for out in ["run1", "run2"] {
        cmd_pipeline(&cfg_path, &[format!("paths.out_dir={out}")]).map_err(|e| e.to_string())?;
        manifests.push(std::fs::read(dir.path().join(out).join("manifest.json")).map_err(|e| e.to_string())?);
    }
    let secs = t.elapsed().as_secs_f64();
    ensure!(manifests[0] == manifests[1], "manifests differ");
    ensure!(secs < 120.0, "two runs took {secs:.1} s");
    Ok(format!("identical {}-byte manifests", manifests[0].len()))
}

fn write_config(path: &Path, cfg: &PipelineConfig) -> Result<(), String> {
    let json = serde_json::to_string_pretty(cfg).map_err(|e| e.to_string())?;
    std::fs::write(path, json).map_err(|e| e.to_string())
}

/// Real-capture results cannot be recomputed here; the README has to say so.
fn documented_exclusions() -> Outcome {
    let readme = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../README.md");
    let text = std::fs::read_to_string(&readme).map_err(|e| format!("{}: {e}", readme.display()))?;
    for item in [
        "PSNR",
        "SSIM",
        "reconstruction time",
        "mIoU",
        "success rate",
        "ghost index",
    ] {
        ensure!(
            text.contains(item),
            "README does not list '{item}' among the excluded results"
        );
    }
    Ok("not reproducible at desk scale; exclusions listed in README, criteria 1-9 stand in".into())
}
