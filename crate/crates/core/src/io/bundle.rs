//! On-disk frame bundle layout shared by the CLI tools:
//!
//! ```text
//! bundle/
//!   rig.json                  camera names, intrinsics, mounting poses
//!   script.json               per-frame ego transforms, camera poses, boxes, map
//!   scene.json                (optional) analytic scene for oracle backends
//!   frames/{t:04}/lidar.ply   LiDAR cloud in frame-t ego coordinates
//!   frames/{t:04}/mvs.ply     (optional) MVS cloud in frame-t ego coordinates
//!   frames/{t:04}/{cam}/rgb.png
//!   frames/{t:04}/{cam}/depth.pfm   (optional) dense depth
//!   frames/{t:04}/{cam}/sky.png     sky mask
//!   frames/{t:04}/{cam}/exclude.png exclusion mask (dynamic + sky)
//! ```

use super::{json, pfm, ply, png, IoError};
use crate::cloud::scene_script::SceneScript;
use crate::cloud::{BBox3D, PointCloud};
use crate::geometry::{Intrinsics, Pose, RelativeTransform};
use crate::nvs::{CameraView, RigFrame};
use crate::render::{DepthRange, Mask, RgbRaster};
use std::path::{Path, PathBuf};

pub struct Bundle {
    pub root: PathBuf,
    pub rig: json::CameraRig,
    pub script: SceneScript,
}

pub fn frame_dir(root: &Path, t: usize) -> PathBuf {
    root.join("frames").join(format!("{t:04}"))
}

pub fn camera_dir(root: &Path, t: usize, cam: &str) -> PathBuf {
    frame_dir(root, t).join(cam)
}

impl Bundle {
    pub fn open(root: &Path) -> Result<Self, IoError> {
        let rig = json::read_rig(&root.join("rig.json"))?;
        let script = json::read_script(&root.join("script.json"))?;
        Ok(Self { root: root.to_path_buf(), rig, script })
    }

    pub fn frame_count(&self) -> usize {
        self.script.frames.len()
    }

    pub fn camera_names(&self) -> Vec<String> {
        self.rig.cameras.iter().map(|c| c.name.clone()).collect()
    }

    pub fn scene_path(&self) -> PathBuf {
        self.root.join("scene.json")
    }

    pub fn lidar_cloud(&self, t: usize) -> Result<PointCloud, IoError> {
        ply::read(&frame_dir(&self.root, t).join("lidar.ply"))
    }

    pub fn mvs_cloud(&self, t: usize) -> Result<PointCloud, IoError> {
        let path = frame_dir(&self.root, t).join("mvs.ply");
        if path.exists() {
            ply::read(&path)
        } else {
            Ok(PointCloud::empty())
        }
    }

    pub fn rgb(&self, t: usize, cam: &str) -> Result<RgbRaster, IoError> {
        png::read_rgb(&camera_dir(&self.root, t, cam).join("rgb.png"))
    }

    pub fn depth(&self, t: usize, cam: &str, range: DepthRange) -> Result<crate::render::DepthFrame, IoError> {
        pfm::read(&camera_dir(&self.root, t, cam).join("depth.pfm"), range)
    }

    pub fn sky_mask(&self, t: usize, cam: &str) -> Result<Mask, IoError> {
        png::read_mask(&camera_dir(&self.root, t, cam).join("sky.png"))
    }

    pub fn exclude_mask(&self, t: usize, cam: &str) -> Result<Mask, IoError> {
        png::read_mask(&camera_dir(&self.root, t, cam).join("exclude.png"))
    }

    /// World-frame camera poses and intrinsics at frame t, in rig order.
    pub fn cameras_at(&self, t: usize) -> Result<Vec<(Pose, Intrinsics)>, IoError> {
        let frame = self.script.frames.get(t).ok_or_else(|| {
            IoError::invalid(&self.root.join("script.json"), format!("no frame {t}"))
        })?;
        let mut out = Vec::with_capacity(self.rig.cameras.len());
        for rig_cam in &self.rig.cameras {
            let sc = frame
                .cameras
                .iter()
                .find(|c| c.name == rig_cam.name)
                .ok_or_else(|| {
                    IoError::invalid(
                        &self.root.join("script.json"),
                        format!("frame {t} missing camera '{}'", rig_cam.name),
                    )
                })?;
            out.push((sc.pose, sc.intrinsics));
        }
        Ok(out)
    }

    /// Fully-loaded RGB-D rig frame (needs depth.pfm files).
    pub fn rig_frame(&self, t: usize, range: DepthRange) -> Result<RigFrame, IoError> {
        let cams = self.cameras_at(t)?;
        let mut frame = RigFrame::default();
        for ((pose, k), name) in cams.into_iter().zip(self.camera_names()) {
            frame.cameras.push(CameraView {
                pose,
                intrinsics: k,
                rgb: self.rgb(t, &name)?,
                depth: self.depth(t, &name, range)?,
            });
        }
        Ok(frame)
    }

    /// Everything the curation pipeline needs for one center frame: the
    /// clamped lidar window, matching ego transforms, the window's boxes, the
    /// center-frame MVS cloud, and per-camera rasters.
    pub fn load_curation_frame(
        &self,
        t: usize,
        window: usize,
    ) -> Result<LoadedCurationFrame, IoError> {
        let n = self.frame_count();
        if t >= n {
            return Err(IoError::invalid(
                &self.root.join("script.json"),
                format!("frame {t} out of range ({n} frames)"),
            ));
        }
        let half = window.saturating_sub(1) / 2;
        let lo = t.saturating_sub(half);
        let hi = (t + half).min(n - 1);
        let mut lidar_frames = Vec::with_capacity(hi - lo + 1);
        let mut egos = Vec::with_capacity(hi - lo + 1);
        let mut boxes = Vec::new();
        for s in lo..=hi {
            lidar_frames.push(self.lidar_cloud(s)?);
            egos.push(self.script.frames[s].ego_to_world);
            boxes.extend(self.script.frames[s].boxes.iter().cloned());
        }
        let cameras = self.cameras_at(t)?;
        let names = self.camera_names();
        let mut rgb = Vec::with_capacity(names.len());
        let mut sky = Vec::with_capacity(names.len());
        let mut exclude = Vec::with_capacity(names.len());
        for name in &names {
            rgb.push(self.rgb(t, name)?);
            sky.push(self.sky_mask(t, name)?);
            exclude.push(self.exclude_mask(t, name)?);
        }
        Ok(LoadedCurationFrame {
            lidar_frames,
            egos,
            center: t - lo,
            mvs: self.mvs_cloud(t)?,
            boxes,
            cameras,
            camera_names: names,
            rgb,
            sky,
            exclude,
        })
    }
}

/// Owned curation inputs for one frame, loaded from a bundle.
pub struct LoadedCurationFrame {
    pub lidar_frames: Vec<PointCloud>,
    pub egos: Vec<RelativeTransform>,
    /// Center index within `lidar_frames`/`egos`.
    pub center: usize,
    pub mvs: PointCloud,
    pub boxes: Vec<BBox3D>,
    pub cameras: Vec<(Pose, Intrinsics)>,
    pub camera_names: Vec<String>,
    pub rgb: Vec<RgbRaster>,
    pub sky: Vec<Mask>,
    pub exclude: Vec<Mask>,
}

impl LoadedCurationFrame {
    pub fn as_inputs(&self) -> crate::curation::CurationInputs<'_> {
        crate::curation::CurationInputs {
            lidar_frames: &self.lidar_frames,
            egos: &self.egos,
            center: self.center,
            mvs: &self.mvs,
            boxes: &self.boxes,
            cameras: &self.cameras,
            rgb: &self.rgb,
            sky_masks: &self.sky,
            exclude_masks: &self.exclude,
        }
    }
}
