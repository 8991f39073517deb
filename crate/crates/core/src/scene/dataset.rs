//! On-disk dataset layout: `meta.json` plus `cam_XX/frame_NNNN.png`.

use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::{CameraModel, Split, VideoSet};
use crate::error::{Error, Result};
use crate::geom::Aabb;

#[derive(Debug, Serialize, Deserialize)]
pub struct Meta {
    pub fps: f64,
    pub n_frames: usize,
    pub width: usize,
    pub height: usize,
    pub bounds: Aabb,
    pub cameras: Vec<CameraMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offsets_gt_frames: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CameraMeta {
    pub id: usize,
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub pose: Vec<f64>,
    pub split: Split,
}

pub fn camera_dir(root: &Path, id: usize) -> PathBuf {
    root.join(format!("cam_{id:02}"))
}

pub fn frame_path(root: &Path, id: usize, frame: usize) -> PathBuf {
    camera_dir(root, id).join(format!("frame_{frame:04}.png"))
}

pub fn meta_of(video: &VideoSet) -> Meta {
    Meta {
        fps: video.fps,
        n_frames: video.n_frames,
        width: video.width,
        height: video.height,
        bounds: video.bounds,
        cameras: video
            .cameras
            .iter()
            .map(|c| CameraMeta {
                id: c.id,
                focal: c.focal,
                cx: c.cx,
                cy: c.cy,
                pose: c.pose_row_major().to_vec(),
                split: c.split,
            })
            .collect(),
        offsets_gt_frames: video.offsets_gt.clone(),
    }
}

pub fn write_dataset(video: &VideoSet, root: &Path) -> Result<()> {
    video.validate()?;
    std::fs::create_dir_all(root)?;
    let meta = serde_json::to_string_pretty(&meta_of(video))?;
    std::fs::write(root.join("meta.json"), meta)?;
    for (cam, frames) in video.cameras.iter().zip(&video.frames) {
        std::fs::create_dir_all(camera_dir(root, cam.id))?;
        for (f, img) in frames.iter().enumerate() {
            img.save(frame_path(root, cam.id, f))?;
        }
    }
    Ok(())
}

pub fn read_meta(root: &Path) -> Result<Meta> {
    let path = root.join("meta.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Dataset {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Dataset {
        path,
        reason: e.to_string(),
    })
}

pub fn read_dataset(root: &Path) -> Result<VideoSet> {
    let meta = read_meta(root)?;
    let bad = |path: PathBuf, reason: String| Error::Dataset { path, reason };
    let mut cameras = Vec::with_capacity(meta.cameras.len());
    for cm in &meta.cameras {
        let pose: [f64; 16] = cm
            .pose
            .as_slice()
            .try_into()
            .map_err(|_| bad(root.join("meta.json"), format!("camera {} pose needs 16 values", cm.id)))?;
        let (rotation, translation) = CameraModel::rotation_from_pose(&pose);
        cameras.push(CameraModel {
            id: cm.id,
            focal: cm.focal,
            cx: cm.cx,
            cy: cm.cy,
            width: meta.width,
            height: meta.height,
            rotation,
            translation,
            split: cm.split,
        });
    }
    let mut frames = Vec::with_capacity(cameras.len());
    for cam in &cameras {
        let mut video = Vec::with_capacity(meta.n_frames);
        for f in 0..meta.n_frames {
            let path = frame_path(root, cam.id, f);
            let img: RgbImage = image::open(&path)
                .map_err(|e| bad(path.clone(), e.to_string()))?
                .to_rgb8();
            video.push(img);
        }
        frames.push(video);
    }
    let video = VideoSet {
        cameras,
        frames,
        fps: meta.fps,
        n_frames: meta.n_frames,
        width: meta.width,
        height: meta.height,
        bounds: meta.bounds,
        offsets_gt: meta.offsets_gt_frames,
    };
    video.validate().map_err(|e| bad(root.to_path_buf(), e.to_string()))?;
    Ok(video)
}
