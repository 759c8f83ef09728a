//! Binary per-view masks and the label-indexed mask collection.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::GrayImage;
use log::warn;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::projection::CameraView;
use crate::scalar::Real;

pub const BACKGROUND: &str = "background";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![false; width as usize * height as usize],
        }
    }

    pub fn filled(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![true; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height && self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let w = self.width as usize;
        self.data[y as usize * w + x as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn union(&self, o: &Mask) -> Mask {
        assert_eq!((self.width, self.height), (o.width, o.height));
        Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&o.data).map(|(a, b)| *a || *b).collect(),
        }
    }

    /// Morphological dilation with a disc of `radius` pixels.
    pub fn dilate(&self, radius: u32) -> Mask {
        if radius == 0 {
            return self.clone();
        }
        let r = radius as i64;
        let offsets: Vec<(i64, i64)> = (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
            .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
            .collect();
        let mut out = self.clone();
        let (w, h) = (self.width as i64, self.height as i64);
        for y in 0..h {
            for x in 0..w {
                if !self.data[(y * w + x) as usize] {
                    continue;
                }
                for &(dx, dy) in &offsets {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && ny >= 0 && nx < w && ny < h {
                        out.data[(ny * w + nx) as usize] = true;
                    }
                }
            }
        }
        out
    }

    /// Loads an 8-bit grayscale PNG or PGM; nonzero pixels are foreground.
    pub fn load(path: impl AsRef<Path>) -> Result<Mask> {
        let path = path.as_ref();
        let img = image::open(path)
            .map_err(|e| Error::Image {
                path: path.to_path_buf(),
                source: e,
            })?
            .into_luma8();
        Ok(Mask {
            width: img.width(),
            height: img.height(),
            data: img.as_raw().iter().map(|&v| v != 0).collect(),
        })
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let raw: Vec<u8> = self.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
        let img = GrayImage::from_raw(self.width, self.height, raw).expect("buffer size matches");
        img.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::Image {
                path: path.to_path_buf(),
                source: e,
            })
    }
}

/// Masks keyed by (view id, label index). Label 0 is always background.
#[derive(Debug, Clone, Default)]
pub struct MaskSet {
    labels: Vec<String>,
    masks: BTreeMap<(String, usize), Mask>,
}

impl MaskSet {
    /// Creates a set whose label list is `background` followed by `labels`
    /// (duplicates and any explicit `background` entry are dropped).
    pub fn new<S: AsRef<str>>(labels: &[S]) -> Self {
        let mut all = vec![BACKGROUND.to_string()];
        for l in labels {
            let l = l.as_ref();
            if !all.iter().any(|a| a == l) {
                all.push(l.to_string());
            }
        }
        Self {
            labels: all,
            masks: BTreeMap::new(),
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Object labels, i.e. everything except background, as (index, name).
    pub fn object_labels(&self) -> impl Iterator<Item = (usize, &str)> {
        self.labels.iter().enumerate().skip(1).map(|(i, s)| (i, s.as_str()))
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn insert(&mut self, view_id: &str, label: &str, mask: Mask) -> Result<()> {
        let idx = self
            .label_index(label)
            .ok_or_else(|| Error::Argument(format!("label '{label}' is not part of this mask set")))?;
        self.masks.insert((view_id.to_string(), idx), mask);
        Ok(())
    }

    pub fn get(&self, view_id: &str, label: usize) -> Option<&Mask> {
        self.masks.get(&(view_id.to_string(), label))
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize, &Mask)> {
        self.masks.iter().map(|((v, l), m)| (v.as_str(), *l, m))
    }

    /// Checks that every mask matches the dimensions of its view.
    pub fn validate<T: Real>(&self, views: &[CameraView<T>]) -> Result<()> {
        if self.labels.len() < 2 {
            return Err(Error::Validation("mask set has no object labels".into()));
        }
        for ((view_id, label), m) in &self.masks {
            let view = views
                .iter()
                .find(|v| &v.view_id == view_id)
                .ok_or_else(|| Error::Validation(format!("mask for unknown view '{view_id}'")))?;
            if (m.width, m.height) != (view.width, view.height) {
                return Err(Error::Validation(format!(
                    "mask {view_id}/{} is {}x{}, view is {}x{}",
                    self.labels[*label], m.width, m.height, view.width, view.height
                )));
            }
        }
        Ok(())
    }

    /// Loads `<view_id>__<label>.png` (or `.pgm`) files from `dir`.
    ///
    /// When `dir/manifest.json` exists it overrides the naming scheme; it
    /// holds `{"masks": [{"view_id", "label", "file"}, ...]}` with paths
    /// relative to `dir`.
    pub fn load_dir<T: Real>(dir: impl AsRef<Path>, views: &[CameraView<T>]) -> Result<Self> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "mask directory not found"),
            ));
        }
        let entries: Vec<(String, String, PathBuf)> = {
            let manifest = dir.join("manifest.json");
            if manifest.exists() {
                let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
                let m: MaskManifest = serde_json::from_str(&text).map_err(|e| Error::json("mask manifest", e))?;
                m.masks
                    .into_iter()
                    .map(|e| (e.view_id, e.label, dir.join(e.file)))
                    .collect()
            } else {
                let mut found = Vec::new();
                let listing = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
                for entry in listing {
                    let path = entry.map_err(|e| Error::io(dir, e))?.path();
                    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
                    if !matches!(ext, "png" | "pgm") {
                        continue;
                    }
                    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
                    match stem.split_once("__") {
                        Some((v, l)) => found.push((v.to_string(), l.to_string(), path.clone())),
                        None => warn!("ignoring mask file without '__' separator: {}", path.display()),
                    }
                }
                found.sort();
                found
            }
        };
        let mut labels: Vec<String> = entries
            .iter()
            .map(|e| e.1.clone())
            .filter(|l| l != BACKGROUND)
            .collect();
        labels.sort();
        labels.dedup();
        let mut set = MaskSet::new(&labels);
        for (view_id, label, path) in entries {
            if label == BACKGROUND {
                continue;
            }
            if !views.iter().any(|v| v.view_id == view_id) {
                warn!("mask {} refers to unknown view '{view_id}'", path.display());
                continue;
            }
            set.insert(&view_id, &label, Mask::load(&path)?)?;
        }
        set.validate(views)?;
        Ok(set)
    }

    /// Writes every mask as `<view_id>__<label>.png`.
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for ((view_id, label), m) in &self.masks {
            m.save_png(dir.join(format!("{view_id}__{}.png", self.labels[*label])))?;
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct MaskManifest {
    masks: Vec<MaskManifestEntry>,
}

#[derive(Debug, Deserialize)]
struct MaskManifestEntry {
    view_id: String,
    label: String,
    file: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dilation_grows_within_radius_only() {
        let mut m = Mask::new(20, 20);
        m.set(10, 10, true);
        let d = m.dilate(3);
        assert!(d.get(13, 10) && d.get(10, 7));
        assert!(!d.get(14, 10) && !d.get(13, 13));
        assert_eq!(m.dilate(0), m);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Mask::new(7, 5);
        m.set(2, 3, true);
        m.set(6, 0, true);
        let p = dir.path().join("v0__box.png");
        m.save_png(&p).unwrap();
        assert_eq!(Mask::load(&p).unwrap(), m);
    }

    #[test]
    fn label_list_starts_with_background() {
        let s = MaskSet::new(&["box", "background", "box", "cup"]);
        assert_eq!(s.labels(), &["background", "box", "cup"]);
        assert_eq!(s.object_labels().map(|x| x.1).collect::<Vec<_>>(), vec!["box", "cup"]);
    }
}
