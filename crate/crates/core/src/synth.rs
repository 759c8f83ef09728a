//! Deterministic synthetic scenes with known ground truth.
//!
//! Primitive surfaces are sampled into splats, then corrupted with ghosts
//! (low-opacity splats just off the surface), floaters (detached clusters)
//! and needles (extremely anisotropic splats). Every splat carries a role
//! tag, so each cleaning stage can be scored exactly. Cameras sit on a ring
//! and object masks come from analytic ray casting.
//!
//! All randomness comes from one `ChaCha8Rng` seeded with `SceneSpec::seed`
//! and consumed in a fixed order, so scenes reproduce byte for byte.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat3, Quat, Vec3};
use crate::mask::{Mask, MaskSet, BACKGROUND};
use crate::mesh::{box_mesh, cylinder_mesh, uv_sphere, TriMesh};
use crate::projection::CameraView;
use crate::spatial::KdTree;
use crate::splat::{GaussianSplat, SplatCloud};

pub const GENERATOR: &str = "ChaCha8Rng (rand_chacha 0.9), seed_from_u64";
pub const SURFACE_OPACITY: f64 = 0.95;
pub const GHOST_OPACITY: (f64, f64) = (0.01, 0.08);
/// Ghost offset from the surface along the normal, metres.
pub const GHOST_OFFSET: (f64, f64) = (0.002, 0.015);
pub const NEEDLE_ELONGATION: f64 = 50.0;
/// Floaters keep this many DBSCAN radii away from every surface splat.
pub const FLOATER_BUFFER_EPS: f64 = 10.0;
const FLOATER_CLUSTER: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Box,
    Sphere,
    Cylinder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: [f64; 3],
    /// Rotation about world +z, degrees.
    #[serde(default)]
    pub yaw_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    pub pose: Pose,
    /// Box: full extents `[x, y, z]`; sphere: `[radius]`; cylinder:
    /// `[radius, height]` along local z.
    pub dimensions: Vec<f64>,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Corruption {
    pub floater_fraction: f64,
    pub ghost_fraction: f64,
    pub needle_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRing {
    pub count: usize,
    pub radius: f64,
    pub height: f64,
    pub look_at: [f64; 3],
    #[serde(default = "default_width")]
    pub width: u32,
    #[serde(default = "default_height")]
    pub height_px: u32,
    #[serde(default = "default_focal")]
    pub focal: f64,
}

fn default_width() -> u32 {
    640
}
fn default_height() -> u32 {
    480
}
fn default_focal() -> f64 {
    525.0
}
fn default_eps() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub primitives: Vec<Primitive>,
    pub surfel_spacing: f64,
    #[serde(default)]
    pub corruption: Corruption,
    pub camera_ring: CameraRing,
    pub seed: u64,
    /// Clustering radius the floater buffer is measured in.
    #[serde(default = "default_eps")]
    pub dbscan_eps: f64,
    /// Bleed added around rendered masks, pixels.
    #[serde(default)]
    pub mask_dilation: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "lowercase")]
pub enum Role {
    Surface { label: String },
    Floater,
    Ghost,
    Needle,
}

impl Role {
    pub fn is_surface(&self) -> bool {
        matches!(self, Role::Surface { .. })
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub cloud: SplatCloud<f64>,
    pub roles: Vec<Role>,
    pub views: Vec<CameraView<f64>>,
}

impl Scene {
    pub fn count(&self, pred: impl Fn(&Role) -> bool) -> usize {
        self.roles.iter().filter(|r| pred(r)).count()
    }

    /// Positions of the surface-tagged splats, optionally for one label.
    pub fn surface_points(&self, label: Option<&str>) -> Vec<Vec3<f64>> {
        self.cloud
            .iter()
            .zip(&self.roles)
            .filter(|(_, r)| match r {
                Role::Surface { label: l } => label.is_none_or(|x| x == l),
                _ => false,
            })
            .map(|(s, _)| s.position)
            .collect()
    }
}

impl Primitive {
    fn rotation(&self) -> Mat3<f64> {
        Quat::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), self.pose.yaw_deg.to_radians()).to_matrix()
    }

    fn centre(&self) -> Vec3<f64> {
        Vec3::from_array(self.pose.position)
    }

    fn to_world(&self, p: Vec3<f64>) -> Vec3<f64> {
        self.rotation().mul_vec(p) + self.centre()
    }

    fn validate(&self) -> Result<()> {
        let want = match self.shape {
            Shape::Box => 3,
            Shape::Sphere => 1,
            Shape::Cylinder => 2,
        };
        if self.dimensions.len() != want || self.dimensions.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(Error::Validation(format!(
                "{:?} '{}' needs {want} positive dimensions, got {:?}",
                self.shape, self.label, self.dimensions
            )));
        }
        if self.label.is_empty() || self.label.contains("__") {
            return Err(Error::Validation(format!("invalid label '{}'", self.label)));
        }
        Ok(())
    }

    /// Surface samples with outward normals, in local coordinates.
    fn sample_local(&self, h: f64) -> Vec<(Vec3<f64>, Vec3<f64>)> {
        let d = &self.dimensions;
        let mut out = Vec::new();
        match self.shape {
            Shape::Box => {
                let half = Vec3::new(d[0], d[1], d[2]) * 0.5;
                for axis in 0..3 {
                    let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                    let ext = half.to_array();
                    let nu = ((2.0 * ext[u]) / h).round().max(1.0) as usize;
                    let nv = ((2.0 * ext[v]) / h).round().max(1.0) as usize;
                    for sign in [-1.0, 1.0] {
                        for i in 0..nu {
                            for j in 0..nv {
                                let mut p = [0.0; 3];
                                p[axis] = sign * ext[axis];
                                p[u] = -ext[u] + (i as f64 + 0.5) * 2.0 * ext[u] / nu as f64;
                                p[v] = -ext[v] + (j as f64 + 0.5) * 2.0 * ext[v] / nv as f64;
                                let mut n = [0.0; 3];
                                n[axis] = sign;
                                out.push((Vec3::from_array(p), Vec3::from_array(n)));
                            }
                        }
                    }
                }
            }
            Shape::Sphere => {
                let r = d[0];
                let n = ((4.0 * PI * r * r) / (h * h)).round().max(4.0) as usize;
                let golden = PI * (3.0 - 5f64.sqrt());
                for i in 0..n {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                    let rr = (1.0 - z * z).sqrt();
                    let phi = golden * i as f64;
                    let dir = Vec3::new(rr * phi.cos(), rr * phi.sin(), z);
                    out.push((dir * r, dir));
                }
            }
            Shape::Cylinder => {
                let (r, height) = (d[0], d[1]);
                let around = ((TAU * r) / h).round().max(3.0) as usize;
                let rows = (height / h).round().max(1.0) as usize;
                for k in 0..rows {
                    let z = -height / 2.0 + (k as f64 + 0.5) * height / rows as f64;
                    // stagger alternate rows
                    let offset = if k % 2 == 0 { 0.0 } else { 0.5 };
                    for s in 0..around {
                        let phi = TAU * (s as f64 + offset) / around as f64;
                        let dir = Vec3::new(phi.cos(), phi.sin(), 0.0);
                        out.push((Vec3::new(r * dir.x, r * dir.y, z), dir));
                    }
                }
                let rings = (r / h).round().max(1.0) as usize;
                for sign in [-1.0, 1.0] {
                    for k in 0..rings {
                        let rk = (k as f64 + 0.5) * r / rings as f64;
                        let m = ((TAU * rk) / h).round().max(3.0) as usize;
                        for s in 0..m {
                            let phi = TAU * s as f64 / m as f64;
                            out.push((
                                Vec3::new(rk * phi.cos(), rk * phi.sin(), sign * height / 2.0),
                                Vec3::new(0.0, 0.0, sign),
                            ));
                        }
                    }
                }
            }
        }
        out
    }

    /// Nearest positive ray parameter at which the world ray hits the solid.
    pub fn intersect(&self, origin: Vec3<f64>, dir: Vec3<f64>) -> Option<f64> {
        let rt = self.rotation().transpose();
        let o = rt.mul_vec(origin - self.centre());
        let d = rt.mul_vec(dir);
        let d_ = &self.dimensions;
        let nearest = |ts: &[f64]| {
            ts.iter()
                .copied()
                .filter(|t| *t > 1e-12)
                .fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.min(t))))
        };
        match self.shape {
            Shape::Sphere => {
                let r = d_[0];
                let b = o.dot(d);
                let c = o.dot(o) - r * r;
                let disc = b * b - d.dot(d) * c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                let a = d.dot(d);
                nearest(&[(-b - s) / a, (-b + s) / a])
            }
            Shape::Box => {
                let half = [d_[0] / 2.0, d_[1] / 2.0, d_[2] / 2.0];
                let (o, d) = (o.to_array(), d.to_array());
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for k in 0..3 {
                    if d[k] == 0.0 {
                        if o[k].abs() > half[k] {
                            return None;
                        }
                        continue;
                    }
                    let a = (-half[k] - o[k]) / d[k];
                    let b = (half[k] - o[k]) / d[k];
                    t0 = t0.max(a.min(b));
                    t1 = t1.min(a.max(b));
                }
                (t0 <= t1).then(|| nearest(&[t0, t1])).flatten()
            }
            Shape::Cylinder => {
                let (r, hz) = (d_[0], d_[1] / 2.0);
                let mut ts = Vec::with_capacity(4);
                let a = d.x * d.x + d.y * d.y;
                if a > 0.0 {
                    let b = o.x * d.x + o.y * d.y;
                    let c = o.x * o.x + o.y * o.y - r * r;
                    let disc = b * b - a * c;
                    if disc >= 0.0 {
                        let s = disc.sqrt();
                        for t in [(-b - s) / a, (-b + s) / a] {
                            if (o.z + t * d.z).abs() <= hz {
                                ts.push(t);
                            }
                        }
                    }
                }
                if d.z != 0.0 {
                    for z in [-hz, hz] {
                        let t = (z - o.z) / d.z;
                        let (x, y) = (o.x + t * d.x, o.y + t * d.y);
                        if x * x + y * y <= r * r {
                            ts.push(t);
                        }
                    }
                }
                nearest(&ts)
            }
        }
    }

    /// Closed triangulation in world coordinates; `resolution` is the number
    /// of segments around curved shapes.
    pub fn mesh(&self, resolution: usize) -> TriMesh<f64> {
        let d = &self.dimensions;
        let res = resolution.max(3);
        let mut m = match self.shape {
            Shape::Box => box_mesh(Vec3::new(d[0], d[1], d[2])),
            Shape::Sphere => uv_sphere(d[0], res, (res / 2).max(2)),
            Shape::Cylinder => cylinder_mesh(d[0], d[1], res),
        };
        for v in m.vertices.iter_mut() {
            *v = self.to_world(*v);
        }
        m
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.primitives.is_empty() {
            return Err(Error::Validation("scene has no primitives".into()));
        }
        for p in &self.primitives {
            p.validate()?;
        }
        if !(self.surfel_spacing > 0.0 && self.surfel_spacing.is_finite()) {
            return Err(Error::Validation(format!(
                "surfel_spacing must be > 0, got {}",
                self.surfel_spacing
            )));
        }
        let c = &self.corruption;
        for (name, f) in [
            ("floater_fraction", c.floater_fraction),
            ("ghost_fraction", c.ghost_fraction),
            ("needle_fraction", c.needle_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Validation(format!("{name} must be in [0, 1], got {f}")));
            }
        }
        let ring = &self.camera_ring;
        if ring.count < 1 || ring.width == 0 || ring.height_px == 0 || !(ring.focal > 0.0) || !(ring.radius > 0.0) {
            return Err(Error::Validation(
                "camera ring needs count >= 1, positive size and focal".into(),
            ));
        }
        if !(self.dbscan_eps > 0.0) {
            return Err(Error::Validation(format!(
                "dbscan_eps must be > 0, got {}",
                self.dbscan_eps
            )));
        }
        Ok(())
    }

    /// Distinct labels in primitive order; `background` first when present.
    pub fn labels(&self) -> Vec<String> {
        let mut out = vec![BACKGROUND.to_string()];
        for p in &self.primitives {
            if !out.contains(&p.label) {
                out.push(p.label.clone());
            }
        }
        out
    }

    pub fn object_labels(&self) -> Vec<String> {
        self.labels().into_iter().skip(1).collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text).map_err(|e| Error::json("scene spec", e))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    fn ring(count: usize) -> CameraRing {
        CameraRing {
            count,
            radius: 0.5,
            height: 0.6,
            look_at: [0.0, 0.0, 0.05],
            width: default_width(),
            height_px: default_height(),
            focal: default_focal(),
        }
    }

    fn table() -> Primitive {
        Primitive {
            shape: Shape::Box,
            pose: Pose {
                position: [0.0, 0.0, -0.01],
                yaw_deg: 0.0,
            },
            dimensions: vec![0.5, 0.5, 0.02],
            label: BACKGROUND.into(),
        }
    }

    /// A single box resting on a table slab.
    pub fn box_on_table(seed: u64) -> Self {
        Self {
            primitives: vec![
                Self::table(),
                Primitive {
                    shape: Shape::Box,
                    pose: Pose {
                        position: [0.0, 0.0, 0.06],
                        yaw_deg: 20.0,
                    },
                    dimensions: vec![0.1, 0.08, 0.12],
                    label: "box".into(),
                },
            ],
            surfel_spacing: 0.005,
            corruption: Corruption::default(),
            camera_ring: Self::ring(15),
            seed,
            dbscan_eps: default_eps(),
            mask_dilation: 0,
        }
    }

    /// Box, cylinder and sphere on a table slab.
    pub fn tabletop(seed: u64) -> Self {
        let mut s = Self::box_on_table(seed);
        s.primitives.push(Primitive {
            shape: Shape::Cylinder,
            pose: Pose {
                position: [0.14, 0.1, 0.075],
                yaw_deg: 0.0,
            },
            dimensions: vec![0.04, 0.15],
            label: "cylinder".into(),
        });
        s.primitives.push(Primitive {
            shape: Shape::Sphere,
            pose: Pose {
                position: [-0.13, -0.11, 0.05],
                yaw_deg: 0.0,
            },
            dimensions: vec![0.05],
            label: "sphere".into(),
        });
        s
    }

    /// A shelf board against a back panel holding two objects.
    pub fn shelf_fragment(seed: u64) -> Self {
        let mut s = Self::box_on_table(seed);
        s.primitives = vec![
            Primitive {
                shape: Shape::Box,
                pose: Pose {
                    position: [0.0, 0.0, -0.01],
                    yaw_deg: 0.0,
                },
                dimensions: vec![0.6, 0.3, 0.02],
                label: BACKGROUND.into(),
            },
            Primitive {
                shape: Shape::Box,
                pose: Pose {
                    position: [0.0, 0.16, 0.14],
                    yaw_deg: 0.0,
                },
                dimensions: vec![0.6, 0.02, 0.32],
                label: BACKGROUND.into(),
            },
            Primitive {
                shape: Shape::Box,
                pose: Pose {
                    position: [-0.1, 0.0, 0.09],
                    yaw_deg: 10.0,
                },
                dimensions: vec![0.12, 0.09, 0.18],
                label: "carton".into(),
            },
            Primitive {
                shape: Shape::Cylinder,
                pose: Pose {
                    position: [0.12, -0.02, 0.06],
                    yaw_deg: 0.0,
                },
                dimensions: vec![0.035, 0.12],
                label: "can".into(),
            },
        ];
        s
    }

    pub fn cameras(&self) -> Vec<CameraView<f64>> {
        let ring = &self.camera_ring;
        let target = Vec3::from_array(ring.look_at);
        (0..ring.count)
            .map(|i| {
                let a = TAU * i as f64 / ring.count as f64;
                let eye = target + Vec3::new(ring.radius * a.cos(), ring.radius * a.sin(), ring.height);
                CameraView::look_at(
                    format!("view_{i:02}"),
                    eye,
                    target,
                    ring.width,
                    ring.height_px,
                    ring.focal,
                )
            })
            .collect()
    }
}

fn splat(position: Vec3<f64>, scale: f64, opacity: f64, colour: [f64; 3]) -> GaussianSplat<f64> {
    let mut s = GaussianSplat::isotropic(position, scale, opacity);
    s.colour_dc = colour;
    s
}

fn label_colour(i: usize) -> [f64; 3] {
    const PALETTE: [[f64; 3]; 6] = [
        [0.6, 0.6, 0.6],
        [1.2, -0.8, -0.8],
        [-0.8, 1.2, -0.8],
        [-0.8, -0.8, 1.2],
        [1.2, 1.2, -0.8],
        [-0.8, 1.2, 1.2],
    ];
    PALETTE[i % PALETTE.len()]
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Quat<f64> {
    // uniform quaternion (Shoemake)
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    Quat::new(
        a * (TAU * u2).sin(),
        a * (TAU * u2).cos(),
        b * (TAU * u3).sin(),
        b * (TAU * u3).cos(),
    )
}

fn count_for(fraction: f64, n: usize) -> usize {
    (fraction * n as f64).round() as usize
}

/// Builds the splat cloud, role tags and camera ring for `spec`.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let h = spec.surfel_spacing;
    let labels = spec.labels();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut splats = Vec::new();
    let mut roles = Vec::new();
    let mut normals = Vec::new();
    for p in &spec.primitives {
        let colour = label_colour(labels.iter().position(|l| l == &p.label).unwrap_or(0));
        let rot = p.rotation();
        for (q, n) in p.sample_local(h) {
            splats.push(splat(p.to_world(q), h / 2.0, SURFACE_OPACITY, colour));
            normals.push(rot.mul_vec(n));
            roles.push(Role::Surface { label: p.label.clone() });
        }
    }
    let n_surface = splats.len();
    let surface_pos: Vec<Vec3<f64>> = splats.iter().map(|s| s.position).collect();

    let n_ghost = count_for(spec.corruption.ghost_fraction, n_surface);
    for _ in 0..n_ghost {
        let k = rng.random_range(0..n_surface);
        let offset = rng.random_range(GHOST_OFFSET.0..=GHOST_OFFSET.1);
        let opacity = rng.random_range(GHOST_OPACITY.0..=GHOST_OPACITY.1);
        splats.push(splat(surface_pos[k] + normals[k] * offset, h / 2.0, opacity, [0.0; 3]));
        roles.push(Role::Ghost);
    }

    let n_floater = count_for(spec.corruption.floater_fraction, n_surface);
    if n_floater > 0 {
        let tree = KdTree::new(&surface_pos);
        let (lo, hi) = surface_pos.iter().fold(
            (Vec3::splat(f64::INFINITY), Vec3::splat(f64::NEG_INFINITY)),
            |(lo, hi), &p| (lo.component_min(p), hi.component_max(p)),
        );
        let buffer = FLOATER_BUFFER_EPS * spec.dbscan_eps;
        let cluster_radius = 2.0 * h;
        let margin = Vec3::splat(buffer + 0.1);
        let (lo, hi) = (lo - margin, hi + margin);
        let clear = buffer + cluster_radius;
        let mut placed = 0;
        let mut attempts = 0usize;
        while placed < n_floater {
            attempts += 1;
            if attempts > 1_000_000 {
                return Err(Error::Degenerate("could not place floaters away from surfaces".into()));
            }
            let c = Vec3::new(
                rng.random_range(lo.x..=hi.x),
                rng.random_range(lo.y..=hi.y),
                rng.random_range(lo.z..=hi.z),
            );
            if tree.nearest(c).is_some_and(|n| n.dist_sq < clear * clear) {
                continue;
            }
            let size = FLOATER_CLUSTER.min(n_floater - placed);
            for _ in 0..size {
                // rejection-sample the ball
                let off = loop {
                    let v = Vec3::new(
                        rng.random_range(-1.0..=1.0),
                        rng.random_range(-1.0..=1.0),
                        rng.random_range(-1.0..=1.0),
                    );
                    if v.norm_squared() <= 1.0 {
                        break v * cluster_radius;
                    }
                };
                splats.push(splat(c + off, h / 2.0, SURFACE_OPACITY, [0.0; 3]));
                roles.push(Role::Floater);
            }
            placed += size;
        }
    }

    let n_needle = count_for(spec.corruption.needle_fraction, n_surface);
    for _ in 0..n_needle {
        let k = rng.random_range(0..n_surface);
        // long axis of one surfel spacing keeps needles from masking the surface in depth
        let minor = h / NEEDLE_ELONGATION;
        let mut s = splat(surface_pos[k], minor, SURFACE_OPACITY, [0.0; 3]);
        s.log_scale.z = (minor * NEEDLE_ELONGATION).ln();
        s.rotation = random_rotation(&mut rng);
        splats.push(s);
        roles.push(Role::Needle);
    }

    Ok(Scene {
        cloud: SplatCloud::new(splats)?,
        roles,
        views: spec.cameras(),
    })
}

/// Label of the first primitive hit by each pixel ray, as an index into
/// [`SceneSpec::labels`].
pub fn render_label_image(view: &CameraView<f64>, spec: &SceneSpec) -> Vec<Option<usize>> {
    let labels = spec.labels();
    let prim_label: Vec<usize> = spec
        .primitives
        .iter()
        .map(|p| labels.iter().position(|l| l == &p.label).expect("label listed"))
        .collect();
    let mut out = Vec::with_capacity((view.width * view.height) as usize);
    for y in 0..view.height {
        for x in 0..view.width {
            let (o, d) = view.pixel_ray(x, y);
            let hit = spec
                .primitives
                .iter()
                .enumerate()
                .filter_map(|(i, p)| p.intersect(o, d).map(|t| (t, i)))
                .min_by(|a, b| a.0.total_cmp(&b.0));
            out.push(hit.map(|(_, i)| prim_label[i]));
        }
    }
    out
}

/// Ground-truth mask of `label` with occlusion, dilated by `dilation` px.
pub fn render_gt_mask(view: &CameraView<f64>, spec: &SceneSpec, label: &str, dilation: u32) -> Result<Mask> {
    let idx = spec
        .labels()
        .iter()
        .position(|l| l == label)
        .ok_or_else(|| Error::Argument(format!("label '{label}' is not in the scene")))?;
    let image = render_label_image(view, spec);
    Ok(mask_from_labels(view, &image, idx).dilate(dilation))
}

fn mask_from_labels(view: &CameraView<f64>, image: &[Option<usize>], idx: usize) -> Mask {
    Mask {
        width: view.width,
        height: view.height,
        data: image.iter().map(|l| *l == Some(idx)).collect(),
    }
}

/// Object masks for every view, rendered once per view.
pub fn render_mask_set(spec: &SceneSpec, views: &[CameraView<f64>]) -> Result<MaskSet> {
    let labels = spec.labels();
    let mut set = MaskSet::new(&labels);
    let rendered: Vec<Vec<Option<usize>>> = {
        use rayon::prelude::*;
        views.par_iter().map(|v| render_label_image(v, spec)).collect()
    };
    for (view, image) in views.iter().zip(&rendered) {
        for (idx, label) in labels.iter().enumerate().skip(1) {
            let m = mask_from_labels(view, image, idx).dilate(spec.mask_dilation);
            set.insert(&view.view_id, label, m)?;
        }
    }
    Ok(set)
}

/// Union of the analytic meshes of every primitive carrying `label`.
pub fn gt_mesh(spec: &SceneSpec, label: &str, resolution: usize) -> Result<TriMesh<f64>> {
    let mut out = TriMesh {
        vertices: Vec::new(),
        faces: Vec::new(),
        provenance: None,
    };
    for p in spec.primitives.iter().filter(|p| p.label == label) {
        let m = p.mesh(resolution);
        let base = out.vertices.len();
        out.vertices.extend(m.vertices);
        out.faces.extend(m.faces.iter().map(|f| f.map(|v| v + base)));
    }
    if out.faces.is_empty() {
        return Err(Error::Argument(format!("label '{label}' is not in the scene")));
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoleFile {
    pub schema_version: u32,
    pub roles: Vec<Role>,
}

/// Segments around curved ground-truth meshes.
pub const GT_MESH_RESOLUTION: usize = 64;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneManifest {
    pub schema_version: u32,
    pub generator: String,
    pub spec: SceneSpec,
    pub splat_count: usize,
    pub labels: Vec<String>,
}

/// Writes a scene in the layout the pipeline reads:
///
/// ```text
/// scene.json            spec, generator and label list
/// splats.ply            corrupted splat cloud
/// cameras.json          camera ring
/// masks/<view>__<label>.png
/// roles.json            per-splat role tags
/// gt/<label>.ply        clean surface splats of each label
/// gt/<label>.obj        analytic mesh of each label
/// ```
///
/// Returns the written paths relative to `dir`, sorted.
pub fn materialize(spec: &SceneSpec, dir: impl AsRef<Path>) -> Result<Vec<String>> {
    let dir = dir.as_ref();
    let scene = generate_scene(spec)?;
    let masks = render_mask_set(spec, &scene.views)?;
    let mkdir = |d: &Path| std::fs::create_dir_all(d).map_err(|e| Error::io(d, e));
    let write = |rel: &str, bytes: &[u8]| -> Result<()> {
        let path = dir.join(rel);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    };
    mkdir(dir)?;
    mkdir(&dir.join("gt"))?;
    let mut files = Vec::new();

    let manifest = SceneManifest {
        schema_version: 1,
        generator: GENERATOR.into(),
        spec: spec.clone(),
        splat_count: scene.cloud.len(),
        labels: spec.labels(),
    };
    write("scene.json", pretty(&manifest).as_bytes())?;
    files.push("scene.json".to_string());
    write("splats.ply", &crate::ply::encode_ply(&scene.cloud)?)?;
    files.push("splats.ply".to_string());
    crate::projection::save_cameras(&scene.views, dir.join("cameras.json"))?;
    files.push("cameras.json".to_string());
    masks.save_dir(dir.join("masks"))?;
    for (view, label, _) in masks.iter() {
        files.push(format!("masks/{view}__{}.png", masks.labels()[label]));
    }
    let roles = RoleFile {
        schema_version: 1,
        roles: scene.roles.clone(),
    };
    write("roles.json", pretty(&roles).as_bytes())?;
    files.push("roles.json".to_string());

    for label in spec.labels() {
        if !spec.primitives.iter().any(|p| p.label == label) {
            continue;
        }
        let keep: Vec<bool> = scene
            .roles
            .iter()
            .map(|r| matches!(r, Role::Surface { label: l } if *l == label))
            .collect();
        write(
            &format!("gt/{label}.ply"),
            &crate::ply::encode_ply(&scene.cloud.filter_mask(&keep))?,
        )?;
        files.push(format!("gt/{label}.ply"));
        let mesh = gt_mesh(spec, &label, GT_MESH_RESOLUTION)?;
        write(&format!("gt/{label}.obj"), crate::mesh::write_obj(&mesh).as_bytes())?;
        files.push(format!("gt/{label}.obj"));
    }
    files.sort();
    Ok(files)
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("plain data serializes")
}
