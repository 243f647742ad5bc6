//! On-disk dataset layout.
//!
//! ```text
//! scene_<n>/cameras.json
//! scene_<n>/meta.json
//! scene_<n>/frame_<t>/view_<i>.png        8-bit RGB
//! scene_<n>/frame_<t>/mask_<i>_<j>.png    8-bit, 0 or 255
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use cdyn_core::{Image, Mask};
use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use crate::dataset::{Frame, Trajectory};
use crate::error::{Result, SceneError};
use crate::render::{CameraRig, RigFile};
use crate::scene::{Pose2, SceneObject, SceneState};

#[derive(Serialize, Deserialize)]
struct Meta {
    articulated: usize,
    n_frames: usize,
    n_views: usize,
    objects: Vec<SceneObject>,
    poses: Vec<Vec<Pose2>>,
    displacements: Vec<[f64; 2]>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SceneError + '_ {
    move |source| SceneError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn img_err(path: &Path) -> impl FnOnce(image::ImageError) -> SceneError + '_ {
    move |source| SceneError::Image {
        path: path.display().to_string(),
        source,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| SceneError::Json {
        path: path.display().to_string(),
        source,
    })?;
    fs::write(path, text).map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| SceneError::Json {
        path: path.display().to_string(),
        source,
    })
}

pub fn save_image(path: &Path, image: &Image) -> Result<()> {
    let buf = RgbImage::from_raw(image.width as u32, image.height as u32, image.to_rgb8())
        .expect("buffer matches extent");
    buf.save(path).map_err(img_err(path))
}

pub fn load_image(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(img_err(path))?.to_rgb8();
    Ok(Image::from_rgb8(img.width() as usize, img.height() as usize, img.as_raw()))
}

fn save_mask(path: &Path, mask: &Mask) -> Result<()> {
    let bytes = mask.data().iter().map(|&m| if m { 255 } else { 0 }).collect();
    let buf = GrayImage::from_raw(mask.width as u32, mask.height as u32, bytes).expect("buffer matches extent");
    buf.save(path).map_err(img_err(path))
}

fn load_mask(path: &Path) -> Result<Mask> {
    let img = image::open(path).map_err(img_err(path))?.to_luma8();
    let w = img.width() as usize;
    Ok(Mask::from_fn(w, img.height() as usize, |c, r| img.as_raw()[r * w + c] >= 128))
}

pub fn save_trajectory(dir: &Path, traj: &Trajectory) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_json(&dir.join("cameras.json"), &traj.rig.to_file())?;
    write_json(
        &dir.join("meta.json"),
        &Meta {
            articulated: traj.articulated,
            n_frames: traj.len(),
            n_views: traj.rig.cameras.len(),
            objects: traj.initial.objects.clone(),
            poses: traj.poses.clone(),
            displacements: traj.displacements.clone(),
        },
    )?;
    for (t, frame) in traj.frames.iter().enumerate() {
        let fdir = dir.join(format!("frame_{t}"));
        fs::create_dir_all(&fdir).map_err(io_err(&fdir))?;
        for (i, (image, masks)) in frame.images.iter().zip(&frame.masks).enumerate() {
            save_image(&fdir.join(format!("view_{i}.png")), image)?;
            for (j, m) in masks.iter().enumerate() {
                save_mask(&fdir.join(format!("mask_{i}_{j}.png")), m)?;
            }
        }
    }
    Ok(())
}

pub fn load_trajectory(dir: &Path) -> Result<Trajectory> {
    let rig = CameraRig::from_file(&read_json::<RigFile>(&dir.join("cameras.json"))?)?;
    let meta: Meta = read_json(&dir.join("meta.json"))?;
    let m = meta.objects.len();
    if meta.articulated >= m || meta.poses.len() != meta.n_frames || meta.n_views != rig.cameras.len() {
        return Err(SceneError::Format(format!("inconsistent meta.json in {}", dir.display())));
    }
    let mut frames = Vec::with_capacity(meta.n_frames);
    for t in 0..meta.n_frames {
        let fdir = dir.join(format!("frame_{t}"));
        let mut images = Vec::with_capacity(meta.n_views);
        let mut masks = Vec::with_capacity(meta.n_views);
        for i in 0..meta.n_views {
            let img = load_image(&fdir.join(format!("view_{i}.png")))?;
            if (img.width, img.height) != (rig.width, rig.height) {
                return Err(SceneError::Format(format!("view {i} of frame {t} has the wrong extent")));
            }
            images.push(img);
            masks.push(
                (0..m)
                    .map(|j| load_mask(&fdir.join(format!("mask_{i}_{j}.png"))))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        frames.push(Frame { images, masks });
    }
    let initial = SceneState {
        objects: meta.objects,
        pusher: meta.articulated,
    };
    Ok(Trajectory {
        rig,
        frames,
        articulated: meta.articulated,
        initial,
        poses: meta.poses,
        displacements: meta.displacements,
    })
}

fn scene_dir(root: &Path, n: usize) -> PathBuf {
    root.join(format!("scene_{n}"))
}

pub fn save_dataset(root: &Path, trajectories: &[Trajectory]) -> Result<()> {
    for (n, t) in trajectories.iter().enumerate() {
        save_trajectory(&scene_dir(root, n), t)?;
    }
    Ok(())
}

/// Loads `scene_0`, `scene_1`, ... until the first missing index.
pub fn load_dataset(root: &Path) -> Result<Vec<Trajectory>> {
    if !root.is_dir() {
        return Err(SceneError::Format(format!("{} is not a directory", root.display())));
    }
    let mut out = Vec::new();
    while scene_dir(root, out.len()).is_dir() {
        out.push(load_trajectory(&scene_dir(root, out.len()))?);
    }
    Ok(out)
}
