//! Pinhole cameras, splat-centre depth maps and the depth-consistency
//! visibility test.
//!
//! Camera frame follows the usual computer-vision convention: +x right,
//! +y down, +z forward. Depth is the camera-frame z coordinate.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;
use crate::splat::SplatCloud;

#[derive(Debug, Clone, PartialEq)]
pub struct CameraView<T> {
    pub view_id: String,
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: u32,
    pub height: u32,
    /// World-to-camera rotation.
    pub rotation: Mat3<T>,
    /// World-to-camera translation.
    pub translation: Vec3<T>,
}

/// A projected point: continuous pixel coordinates and camera depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection<T> {
    pub u: T,
    pub v: T,
    pub depth: T,
}

impl<T: Real> Projection<T> {
    /// Integer pixel containing the projection.
    pub fn pixel(&self) -> (u32, u32) {
        (self.u.floor().as_f64() as u32, self.v.floor().as_f64() as u32)
    }
}

impl<T: Real> CameraView<T> {
    /// Checks intrinsics and that the rotation is a proper rotation.
    pub fn validate(&self) -> Result<()> {
        let id = &self.view_id;
        if !(self.fx > T::zero() && self.fy > T::zero()) {
            return Err(Error::Validation(format!("view {id}: focal lengths must be positive")));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Validation(format!("view {id}: empty image size")));
        }
        let (w, h) = (
            T::from_usize_lossy(self.width as usize),
            T::from_usize_lossy(self.height as usize),
        );
        if !(self.cx >= T::zero() && self.cx < w && self.cy >= T::zero() && self.cy < h) {
            return Err(Error::Validation(format!(
                "view {id}: principal point outside the image"
            )));
        }
        let rtr = self.rotation.transpose().mul_mat(&self.rotation);
        if rtr.max_abs_diff(&Mat3::identity()).as_f64() > 1e-6 {
            return Err(Error::Validation(format!("view {id}: rotation is not orthonormal")));
        }
        if (self.rotation.determinant().as_f64() - 1.0).abs() > 1e-6 {
            return Err(Error::Validation(format!("view {id}: rotation determinant is not +1")));
        }
        if !self.translation.is_finite() {
            return Err(Error::Validation(format!("view {id}: non-finite translation")));
        }
        Ok(())
    }

    pub fn to_camera(&self, p: Vec3<T>) -> Vec3<T> {
        self.rotation.mul_vec(p) + self.translation
    }

    /// Camera centre in world coordinates.
    pub fn centre(&self) -> Vec3<T> {
        -self.rotation.transpose().mul_vec(self.translation)
    }

    /// Projects without the image-bounds check; `None` only behind the camera.
    pub fn project_unclipped(&self, p: Vec3<T>) -> Option<Projection<T>> {
        let c = self.to_camera(p);
        if !(c.z > T::zero()) {
            return None;
        }
        Some(Projection {
            u: self.fx * c.x / c.z + self.cx,
            v: self.fy * c.y / c.z + self.cy,
            depth: c.z,
        })
    }

    /// Projects a world point; `None` when behind the camera or outside
    /// `[0, width) × [0, height)`.
    pub fn project(&self, p: Vec3<T>) -> Option<Projection<T>> {
        let pr = self.project_unclipped(p)?;
        let (w, h) = (
            T::from_usize_lossy(self.width as usize),
            T::from_usize_lossy(self.height as usize),
        );
        (pr.u >= T::zero() && pr.u < w && pr.v >= T::zero() && pr.v < h).then_some(pr)
    }

    /// Unit ray direction in world coordinates through pixel centre (px, py).
    pub fn pixel_ray(&self, px: u32, py: u32) -> (Vec3<T>, Vec3<T>) {
        let half = T::lit(0.5);
        let x = (T::from_usize_lossy(px as usize) + half - self.cx) / self.fx;
        let y = (T::from_usize_lossy(py as usize) + half - self.cy) / self.fy;
        let dir_cam = Vec3::new(x, y, T::one());
        let dir = self.rotation.transpose().mul_vec(dir_cam).normalized();
        (self.centre(), dir)
    }

    /// Camera at `eye` looking at `target`, with world +z as the up hint.
    pub fn look_at(
        view_id: impl Into<String>,
        eye: Vec3<T>,
        target: Vec3<T>,
        width: u32,
        height: u32,
        focal: T,
    ) -> Self {
        let forward = (target - eye).normalized();
        let mut up = Vec3::new(T::zero(), T::zero(), T::one());
        if forward.cross(up).norm() < T::lit(1e-9) {
            up = Vec3::new(T::zero(), T::one(), T::zero());
        }
        let right = forward.cross(up).normalized();
        let down = forward.cross(right);
        let rotation = Mat3::from_rows([right.to_array(), down.to_array(), forward.to_array()]);
        let translation = -rotation.mul_vec(eye);
        let half = T::lit(0.5);
        Self {
            view_id: view_id.into(),
            fx: focal,
            fy: focal,
            cx: T::from_usize_lossy(width as usize) * half,
            cy: T::from_usize_lossy(height as usize) * half,
            width,
            height,
            rotation,
            translation,
        }
    }
}

/// Per-pixel nearest splat depth; `T::infinity()` marks empty pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap<T> {
    pub width: u32,
    pub height: u32,
    pub depth: Vec<T>,
}

impl<T: Real> DepthMap<T> {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            depth: vec![T::infinity(); width as usize * height as usize],
        }
    }

    pub fn get(&self, px: u32, py: u32) -> Option<T> {
        if px >= self.width || py >= self.height {
            return None;
        }
        let d = self.depth[py as usize * self.width as usize + px as usize];
        d.is_finite().then_some(d)
    }

    pub fn is_all_empty(&self) -> bool {
        self.depth.iter().all(|d| !d.is_finite())
    }

    pub fn covered_pixels(&self) -> usize {
        self.depth.iter().filter(|d| d.is_finite()).count()
    }
}

/// Pixel-space disc radius used for a splat at `depth`.
pub fn splat_radius_px<T: Real>(view: &CameraView<T>, max_scale: T, depth: T) -> T {
    let f = view.fx.max(view.fy);
    (T::lit(2.0) * max_scale * f / depth).max(T::one())
}

/// Calls `visit(px, py)` for every pixel whose centre lies inside the disc.
pub(crate) fn for_each_disc_pixel<T: Real>(width: u32, height: u32, u: T, v: T, r: T, mut visit: impl FnMut(u32, u32)) {
    let half = T::lit(0.5);
    let w = T::from_usize_lossy(width as usize);
    let h = T::from_usize_lossy(height as usize);
    let x0 = (u - r - half).floor().max(T::zero());
    let x1 = (u + r - half).ceil().min(w - T::one());
    let y0 = (v - r - half).floor().max(T::zero());
    let y1 = (v + r - half).ceil().min(h - T::one());
    if x0 > x1 || y0 > y1 {
        return;
    }
    let r2 = r * r;
    let (x0, x1) = (x0.as_f64() as u32, x1.as_f64() as u32);
    let (y0, y1) = (y0.as_f64() as u32, y1.as_f64() as u32);
    for py in y0..=y1 {
        let dy = T::from_usize_lossy(py as usize) + half - v;
        for px in x0..=x1 {
            let dx = T::from_usize_lossy(px as usize) + half - u;
            if dx * dx + dy * dy <= r2 {
                visit(px, py);
            }
        }
    }
}

/// Renders an opaque-disc z-buffer of the splat centres that pass the
/// opacity gate.
pub fn render_depth<T: Real>(view: &CameraView<T>, cloud: &SplatCloud<T>, alpha_min: T) -> DepthMap<T> {
    render_depth_subset(view, cloud, alpha_min, |_| true)
}

/// As [`render_depth`], restricted to splats accepted by `include`.
pub fn render_depth_subset<T: Real>(
    view: &CameraView<T>,
    cloud: &SplatCloud<T>,
    alpha_min: T,
    include: impl Fn(usize) -> bool,
) -> DepthMap<T> {
    let mut map = DepthMap::empty(view.width, view.height);
    let w = view.width as usize;
    for (i, s) in cloud.splats.iter().enumerate() {
        if !include(i) || s.opacity() < alpha_min {
            continue;
        }
        let Some(p) = view.project_unclipped(s.position) else {
            continue;
        };
        let r = splat_radius_px(view, s.max_scale(), p.depth);
        let depth = &mut map.depth;
        for_each_disc_pixel(view.width, view.height, p.u, p.v, r, |px, py| {
            let cell = &mut depth[py as usize * w + px as usize];
            if p.depth < *cell {
                *cell = p.depth;
            }
        });
    }
    map
}

/// Renders one depth map per view in parallel.
pub fn render_depth_maps<T: Real>(views: &[CameraView<T>], cloud: &SplatCloud<T>, alpha_min: T) -> Vec<DepthMap<T>> {
    views.par_iter().map(|v| render_depth(v, cloud, alpha_min)).collect()
}

/// Depth-consistency visibility: the point projects into the image onto a
/// non-empty depth sample within `tau_depth` of its own depth.
pub fn is_visible<T: Real>(view: &CameraView<T>, depth_map: &DepthMap<T>, point: Vec3<T>, tau_depth: T) -> bool {
    visible_projection(view, depth_map, point, tau_depth).is_some()
}

/// The projection of `point` when it passes [`is_visible`].
pub fn visible_projection<T: Real>(
    view: &CameraView<T>,
    depth_map: &DepthMap<T>,
    point: Vec3<T>,
    tau_depth: T,
) -> Option<Projection<T>> {
    let p = view.project(point)?;
    let (px, py) = p.pixel();
    let d = depth_map.get(px, py)?;
    ((p.depth - d).abs() <= tau_depth).then_some(p)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraRecord {
    pub view_id: String,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Row-major world-to-camera rotation.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraFile {
    #[serde(default = "camera_schema_version")]
    pub schema_version: u32,
    pub views: Vec<CameraRecord>,
}

fn camera_schema_version() -> u32 {
    1
}

impl<T: Real> From<&CameraView<T>> for CameraRecord {
    fn from(v: &CameraView<T>) -> Self {
        Self {
            view_id: v.view_id.clone(),
            fx: v.fx.as_f64(),
            fy: v.fy.as_f64(),
            cx: v.cx.as_f64(),
            cy: v.cy.as_f64(),
            width: v.width,
            height: v.height,
            rotation: v.rotation.to_row_major().map(|x| x.as_f64()),
            translation: v.translation.to_f64_array(),
        }
    }
}

impl CameraRecord {
    pub fn to_view<T: Real>(&self) -> Result<CameraView<T>> {
        let view = CameraView {
            view_id: self.view_id.clone(),
            fx: T::lit(self.fx),
            fy: T::lit(self.fy),
            cx: T::lit(self.cx),
            cy: T::lit(self.cy),
            width: self.width,
            height: self.height,
            rotation: Mat3::from_row_major(&self.rotation.map(T::lit)),
            translation: Vec3::from_array(self.translation.map(T::lit)),
        };
        view.validate()?;
        Ok(view)
    }
}

/// Parses a camera document: either `{"views": [...]}` or a bare array.
pub fn parse_cameras<T: Real>(text: &str) -> Result<Vec<CameraView<T>>> {
    let records: Vec<CameraRecord> = match serde_json::from_str::<CameraFile>(text) {
        Ok(f) => f.views,
        Err(_) => serde_json::from_str(text).map_err(|e| Error::json("camera file", e))?,
    };
    let mut seen = std::collections::HashSet::new();
    records
        .iter()
        .map(|r| {
            if !seen.insert(r.view_id.clone()) {
                return Err(Error::Validation(format!("duplicate view_id '{}'", r.view_id)));
            }
            r.to_view()
        })
        .collect()
}

pub fn load_cameras<T: Real>(path: impl AsRef<Path>) -> Result<Vec<CameraView<T>>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_cameras(&text)
}

pub fn cameras_to_json<T: Real>(views: &[CameraView<T>]) -> String {
    let file = CameraFile {
        schema_version: 1,
        views: views.iter().map(CameraRecord::from).collect(),
    };
    serde_json::to_string_pretty(&file).expect("camera records serialize")
}

pub fn save_cameras<T: Real>(views: &[CameraView<T>], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, cameras_to_json(views)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splat::GaussianSplat;

    fn cam() -> CameraView<f64> {
        CameraView {
            view_id: "c0".into(),
            fx: 100.0,
            fy: 100.0,
            cx: 50.0,
            cy: 50.0,
            width: 100,
            height: 100,
            rotation: Mat3::identity(),
            translation: Vec3::zero(),
        }
    }

    #[test]
    fn project_examples() {
        let c = cam();
        let p = c.project(Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!((p.u, p.v, p.depth), (50.0, 50.0, 1.0));
        assert!(c.project(Vec3::new(0.0, 0.0, -1.0)).is_none());
        assert!(c.project(Vec3::new(1.0, 0.0, 1.0)).is_none());
    }

    fn splat_at(z: f64, opacity: f64) -> GaussianSplat<f64> {
        GaussianSplat::isotropic(Vec3::new(0.0, 0.0, z), 0.001, opacity)
    }

    #[test]
    fn depth_render_examples() {
        let c = cam();
        let one = SplatCloud::new(vec![splat_at(2.0, 0.9)]).unwrap();
        assert_eq!(render_depth(&c, &one, 0.1).get(50, 50), Some(2.0));

        let two = SplatCloud::new(vec![splat_at(2.0, 0.9), splat_at(1.0, 0.9)]).unwrap();
        assert_eq!(render_depth(&c, &two, 0.1).get(50, 50), Some(1.0));

        let faint = SplatCloud::new(vec![splat_at(2.0, 0.05)]).unwrap();
        assert!(render_depth(&c, &faint, 0.1).is_all_empty());
    }

    #[test]
    fn visibility_examples() {
        let c = cam();
        let mut map = DepthMap::empty(100, 100);
        map.depth[50 * 100 + 50] = 2.003;
        assert!(is_visible(&c, &map, Vec3::new(0.0, 0.0, 2.0), 0.005));
        map.depth[50 * 100 + 50] = 2.0;
        assert!(!is_visible(&c, &map, Vec3::new(0.0, 0.0, 2.010), 0.005));
        let empty = DepthMap::empty(100, 100);
        assert!(!is_visible(&c, &empty, Vec3::new(0.0, 0.0, 2.0), 0.005));
    }

    #[test]
    fn look_at_puts_target_on_axis() {
        let c: CameraView<f64> =
            CameraView::look_at("v", Vec3::new(1.0, -2.0, 0.5), Vec3::new(0.0, 0.0, 0.0), 64, 48, 60.0);
        c.validate().unwrap();
        let p = c.project(Vec3::zero()).unwrap();
        assert!((p.u - 32.0).abs() < 1e-9 && (p.v - 24.0).abs() < 1e-9);
        assert!((p.depth - Vec3::new(1.0, -2.0, 0.5).norm()).abs() < 1e-12);
        // world up maps to image up (negative v)
        let above = c.project(Vec3::new(0.0, 0.0, 0.1)).unwrap();
        assert!(above.v < p.v);
    }

    #[test]
    fn camera_json_round_trip() {
        let c = cam();
        let text = cameras_to_json(std::slice::from_ref(&c));
        let back: Vec<CameraView<f64>> = parse_cameras(&text).unwrap();
        assert_eq!(back, vec![c]);
    }

    #[test]
    fn invalid_rotation_rejected() {
        let mut c = cam();
        c.rotation.m[0][0] = 2.0;
        assert!(c.validate().is_err());
        let mut c = cam();
        c.cx = 100.0;
        assert!(c.validate().is_err());
    }
}
