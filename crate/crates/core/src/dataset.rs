//! On-disk RGB-D sequences.
//!
//! Two layouts are read. A TUM RGB-D directory holds `rgb.txt` and
//! `depth.txt` (`timestamp path` per line), optional `groundtruth.txt` and
//! an optional `calibration.txt` with `fx fy cx cy`. A synthetic sequence is
//! a superset of that layout with a `manifest.txt`, exact ground-truth flow
//! and per-frame dynamic masks.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::{DynamicImage, ImageBuffer, Luma};

use crate::cmap::{read_flow, write_flow};
use crate::consistency::FlowField;
use crate::error::{Error, Result};
use crate::frame::RgbdFrame;
use crate::geometry::{Intrinsics, Se3Pose};
use crate::image::{luma, Grid, Image, Mask};
use crate::provider::GroundTruthSource;
use crate::synth::SynthSequence;
use crate::trajectory::{read_trajectory, write_trajectory, Trajectory};

pub const MAX_ASSOCIATION_GAP: f64 = 0.02;
pub const TUM_DEPTH_SCALE: f64 = 5000.0;
pub const TUM_DEFAULT_INTRINSICS: [f64; 4] = [525.0, 525.0, 319.5, 239.5];
pub const MANIFEST: &str = "manifest.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Tum,
    Synth,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tum" => Ok(Self::Tum),
            "synth" => Ok(Self::Synth),
            other => Err(Error::InvalidArgument(format!("unknown dataset format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub timestamp: f64,
    pub rgb: PathBuf,
    pub depth: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub format: DatasetFormat,
    pub entries: Vec<DatasetEntry>,
    /// Raw depth units per meter.
    pub depth_scale: f64,
    pub intrinsics: Intrinsics,
}

impl DatasetIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn load_frame(&self, index: usize) -> Result<RgbdFrame> {
        let entry = self
            .entries
            .get(index)
            .ok_or_else(|| Error::InvalidArgument(format!("frame {index} out of range ({} frames)", self.len())))?;
        let image = read_intensity(&entry.rgb)?;
        let depth = read_depth(&entry.depth, self.depth_scale)?;
        RgbdFrame::new(index, entry.timestamp, image, depth, self.intrinsics)
    }

    pub fn ground_truth_path(&self) -> PathBuf {
        self.root.join("groundtruth.txt")
    }

    /// Ground-truth poses matched to frames by timestamp, plus flow files if
    /// the sequence has them.
    pub fn ground_truth(&self) -> Result<DatasetGroundTruth> {
        let path = self.ground_truth_path();
        if !path.is_file() {
            return Err(Error::MissingGroundTruth(format!("{} not found", path.display())));
        }
        let traj = read_trajectory(&path)?;
        let poses = self
            .entries
            .iter()
            .map(|e| traj.nearest(e.timestamp, MAX_ASSOCIATION_GAP).map(|n| traj.poses[n]))
            .collect();
        let flow_dir = self.root.join("ego_flow");
        Ok(DatasetGroundTruth {
            poses,
            flow_dir: flow_dir.is_dir().then_some(flow_dir),
        })
    }

    pub fn stamps(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.timestamp).collect()
    }
}

/// Ground truth read lazily from a dataset directory.
#[derive(Debug, Clone)]
pub struct DatasetGroundTruth {
    pub poses: Vec<Option<Se3Pose>>,
    pub flow_dir: Option<PathBuf>,
}

impl GroundTruthSource for DatasetGroundTruth {
    fn relative_pose(&self, j: usize, i: usize) -> Result<Se3Pose> {
        let get = |k: usize| {
            self.poses
                .get(k)
                .copied()
                .flatten()
                .ok_or_else(|| Error::MissingGroundTruth(format!("no pose for frame {k}")))
        };
        Ok(get(i)?.inverse().compose(&get(j)?))
    }

    fn ego_flow(&self, j: usize, i: usize) -> Result<FlowField> {
        let dir = self
            .flow_dir
            .as_ref()
            .ok_or_else(|| Error::MissingGroundTruth("sequence has no ego_flow directory".into()))?;
        let path = flow_path(dir, j, i);
        if !path.is_file() {
            return Err(Error::MissingGroundTruth(format!("{} not found", path.display())));
        }
        read_flow(&path)
    }
}

pub fn flow_path(dir: &Path, j: usize, i: usize) -> PathBuf {
    dir.join(format!("{j}_{i}.flow"))
}

fn image_err(path: &Path, e: impl ToString) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Intensity in `[0, 1]`: 16-bit gray is divided by 65535, 8-bit by 255,
/// colour images are converted with Rec. 601 luma.
pub fn read_intensity(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma16(buf) => buf.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(),
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| luma(p[0] as f64, p[1] as f64, p[2] as f64) / 255.0)
            .collect(),
    };
    Grid::from_vec(w, h, data)
}

/// Metric depth from a 16-bit PNG; zero stays zero (invalid).
pub fn read_depth(path: &Path, scale: f64) -> Result<Image> {
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma16(buf) => {
            Grid::from_vec(w, h, buf.into_raw().into_iter().map(|v| v as f64 / scale).collect())
        }
        other => Err(image_err(
            path,
            format!("depth must be 16-bit grayscale, found {:?}", other.color()),
        )),
    }
}

fn write_png16(path: &Path, w: usize, h: usize, data: Vec<u16>) -> Result<()> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w as u32, h as u32, data).ok_or_else(|| image_err(path, "buffer size mismatch"))?;
    buf.save(path).map_err(|e| image_err(path, e))
}

pub fn write_intensity(path: &Path, image: &Image) -> Result<()> {
    let data = image
        .as_slice()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    write_png16(path, image.width(), image.height(), data)
}

pub fn write_depth(path: &Path, depth: &Image, scale: f64) -> Result<()> {
    let data = depth
        .as_slice()
        .iter()
        .map(|&d| {
            if d.is_finite() && d > 0.0 {
                (d * scale).round().min(65535.0) as u16
            } else {
                0
            }
        })
        .collect();
    write_png16(path, depth.width(), depth.height(), data)
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    let data = mask.as_slice().iter().map(|&m| if m { 255u8 } else { 0 }).collect();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(mask.width() as u32, mask.height() as u32, data)
        .ok_or_else(|| image_err(path, "buffer size mismatch"))?;
    buf.save(path).map_err(|e| image_err(path, e))
}

pub fn read_mask(path: &Path) -> Result<Mask> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Grid::from_vec(w, h, img.into_raw().into_iter().map(|v| v > 127).collect())
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes a synthetic sequence in the layout [`load_dataset`] reads.
pub fn write_sequence(root: &Path, seq: &SynthSequence) -> Result<()> {
    for sub in ["rgb", "depth", "flow", "ego_flow", "dynamic"] {
        create_dir(&root.join(sub))?;
    }
    let k = seq.intrinsics;
    let mut manifest = format!(
        "# synthetic RGB-D sequence\nwidth {}\nheight {}\nintrinsics {} {} {} {}\ndepth_scale {}\nfps {}\n",
        k.width, k.height, k.fx, k.fy, k.cx, k.cy, TUM_DEPTH_SCALE, seq.fps
    );
    let mut rgb_list = String::from("# timestamp filename\n");
    let mut depth_list = String::from("# timestamp filename\n");
    for frame in &seq.frames {
        let name = format!("{:06}.png", frame.index);
        write_intensity(&root.join("rgb").join(&name), &frame.image)?;
        write_depth(&root.join("depth").join(&name), &frame.depth, TUM_DEPTH_SCALE)?;
        write_mask(&root.join("dynamic").join(&name), &seq.gt.dynamic[frame.index])?;
        manifest.push_str(&format!(
            "frame {} {:.6} rgb/{name} depth/{name}\n",
            frame.index, frame.timestamp
        ));
        rgb_list.push_str(&format!("{:.6} rgb/{name}\n", frame.timestamp));
        depth_list.push_str(&format!("{:.6} depth/{name}\n", frame.timestamp));
    }
    for (j, (flow, ego)) in seq.gt.flow.iter().zip(&seq.gt.ego_flow).enumerate() {
        write_flow(&flow_path(&root.join("flow"), j, j + 1), flow)?;
        write_flow(&flow_path(&root.join("ego_flow"), j, j + 1), ego)?;
    }
    write_text(&root.join(MANIFEST), &manifest)?;
    write_text(&root.join("rgb.txt"), &rgb_list)?;
    write_text(&root.join("depth.txt"), &depth_list)?;
    write_text(
        &root.join("calibration.txt"),
        &format!("{} {} {} {}\n", k.fx, k.fy, k.cx, k.cy),
    )?;
    let gt = Trajectory::from_parts(seq.frames.iter().map(|f| f.timestamp).collect(), seq.gt.poses.clone())?;
    write_trajectory(&root.join("groundtruth.txt"), &gt)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_num<T: FromStr>(path: &Path, line: usize, field: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    field
        .parse()
        .map_err(|e: T::Err| Error::parse(path, line, format!("'{field}': {e}")))
}

fn existing(root: &Path, rel: &str, list: &Path, line: usize) -> Result<PathBuf> {
    let path = root.join(rel);
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::parse(
            list,
            line,
            format!("referenced file {} does not exist", path.display()),
        ))
    }
}

/// `timestamp path` lines of a TUM list file.
pub fn read_list(root: &Path, name: &str) -> Result<Vec<(f64, PathBuf)>> {
    let path = root.join(name);
    let text = read_text(&path)?;
    content_lines(&text)
        .map(|(n, line)| {
            let mut fields = line.split_whitespace();
            let (Some(stamp), Some(file)) = (fields.next(), fields.next()) else {
                return Err(Error::parse(&path, n, "expected 'timestamp filename'"));
            };
            Ok((parse_num(&path, n, stamp)?, existing(root, file, &path, n)?))
        })
        .collect()
}

/// Pairs rgb and depth stamps, taking globally closest pairs first, each
/// stamp used at most once, gaps above `max_gap` rejected. Returned in rgb
/// order.
pub fn associate(rgb: &[f64], depth: &[f64], max_gap: f64) -> Vec<(usize, usize)> {
    let mut candidates = Vec::new();
    for (a, &ta) in rgb.iter().enumerate() {
        let start = depth.partition_point(|&t| t < ta - max_gap);
        for (b, &tb) in depth.iter().enumerate().skip(start) {
            if tb > ta + max_gap {
                break;
            }
            candidates.push(((ta - tb).abs(), a, b));
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let (mut used_a, mut used_b) = (vec![false; rgb.len()], vec![false; depth.len()]);
    let mut pairs = Vec::new();
    for (_, a, b) in candidates {
        if !used_a[a] && !used_b[b] {
            used_a[a] = true;
            used_b[b] = true;
            pairs.push((a, b));
        }
    }
    pairs.sort();
    pairs
}

fn first_dims(path: &Path) -> Result<(usize, usize)> {
    let (w, h) = image::image_dimensions(path).map_err(|e| image_err(path, e))?;
    Ok((w as usize, h as usize))
}

fn load_tum(root: &Path) -> Result<DatasetIndex> {
    let mut rgb = read_list(root, "rgb.txt")?;
    let mut depth = read_list(root, "depth.txt")?;
    rgb.sort_by(|a, b| a.0.total_cmp(&b.0));
    depth.sort_by(|a, b| a.0.total_cmp(&b.0));
    let rgb_t: Vec<f64> = rgb.iter().map(|e| e.0).collect();
    let depth_t: Vec<f64> = depth.iter().map(|e| e.0).collect();
    let pairs = associate(&rgb_t, &depth_t, MAX_ASSOCIATION_GAP);
    if pairs.is_empty() {
        return Err(Error::NoAssociations {
            max_gap: MAX_ASSOCIATION_GAP,
        });
    }
    let entries: Vec<DatasetEntry> = pairs
        .into_iter()
        .map(|(a, b)| DatasetEntry {
            timestamp: rgb[a].0,
            rgb: rgb[a].1.clone(),
            depth: depth[b].1.clone(),
        })
        .collect();
    let (w, h) = first_dims(&entries[0].rgb)?;
    let calib = root.join("calibration.txt");
    let [fx, fy, cx, cy] = if calib.is_file() {
        let text = read_text(&calib)?;
        let (n, line) = content_lines(&text)
            .next()
            .ok_or_else(|| Error::parse(&calib, 1, "empty calibration"))?;
        let v = line
            .split_whitespace()
            .map(|f| parse_num::<f64>(&calib, n, f))
            .collect::<Result<Vec<_>>>()?;
        if v.len() != 4 {
            return Err(Error::parse(&calib, n, "expected 'fx fy cx cy'"));
        }
        [v[0], v[1], v[2], v[3]]
    } else {
        TUM_DEFAULT_INTRINSICS
    };
    Ok(DatasetIndex {
        root: root.to_path_buf(),
        format: DatasetFormat::Tum,
        entries,
        depth_scale: TUM_DEPTH_SCALE,
        intrinsics: Intrinsics::new(fx, fy, cx, cy, w, h)?,
    })
}

fn load_synth(root: &Path) -> Result<DatasetIndex> {
    let path = root.join(MANIFEST);
    let text = read_text(&path)?;
    let mut keys: HashMap<&str, (usize, Vec<&str>)> = HashMap::new();
    let mut entries = Vec::new();
    for (n, line) in content_lines(&text) {
        let mut fields = line.split_whitespace();
        let key = fields.next().unwrap_or_default();
        let rest: Vec<&str> = fields.collect();
        if key == "frame" {
            if rest.len() != 4 {
                return Err(Error::parse(&path, n, "expected 'frame index timestamp rgb depth'"));
            }
            let index: usize = parse_num(&path, n, rest[0])?;
            if index != entries.len() {
                return Err(Error::parse(&path, n, format!("frame {index} out of order")));
            }
            entries.push(DatasetEntry {
                timestamp: parse_num(&path, n, rest[1])?,
                rgb: existing(root, rest[2], &path, n)?,
                depth: existing(root, rest[3], &path, n)?,
            });
        } else {
            keys.insert(key, (n, rest));
        }
    }
    let get = |key: &str, count: usize| -> Result<Vec<f64>> {
        let (n, v) = keys
            .get(key)
            .ok_or_else(|| Error::parse(&path, 0, format!("missing '{key}'")))?;
        if v.len() != count {
            return Err(Error::parse(&path, *n, format!("'{key}' expects {count} values")));
        }
        v.iter().map(|f| parse_num(&path, *n, f)).collect()
    };
    let w = get("width", 1)?[0] as usize;
    let h = get("height", 1)?[0] as usize;
    let k = get("intrinsics", 4)?;
    if entries.is_empty() {
        return Err(Error::parse(&path, 0, "manifest lists no frames"));
    }
    Ok(DatasetIndex {
        root: root.to_path_buf(),
        format: DatasetFormat::Synth,
        entries,
        depth_scale: get("depth_scale", 1)?[0],
        intrinsics: Intrinsics::new(k[0], k[1], k[2], k[3], w, h)?,
    })
}

pub fn load_dataset(root: &Path, format: DatasetFormat) -> Result<DatasetIndex> {
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
        ));
    }
    match format {
        DatasetFormat::Tum => load_tum(root),
        DatasetFormat::Synth => load_synth(root),
    }
}

/// Synthetic layout if a manifest is present, TUM otherwise.
pub fn detect_format(root: &Path) -> DatasetFormat {
    if root.join(MANIFEST).is_file() {
        DatasetFormat::Synth
    } else {
        DatasetFormat::Tum
    }
}

pub fn load_all_frames(index: &DatasetIndex) -> Result<Vec<RgbdFrame>> {
    (0..index.len()).map(|n| index.load_frame(n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{
        render_sequence, Degradation, IntrinsicsSpec, PlaneSpec, SceneSpec, Schedule, TextureSpec, TrajectorySpec,
    };

    fn spec() -> SceneSpec {
        SceneSpec {
            width: 32,
            height: 24,
            frames: 3,
            seed: 1,
            fps: 30.0,
            intrinsics: Some(IntrinsicsSpec {
                fx: 30.0,
                fy: 30.0,
                cx: 15.5,
                cy: 11.5,
            }),
            texture: TextureSpec::default(),
            planes: vec![PlaneSpec {
                depth: 2.0,
                normal: None,
                extent: None,
                texture: None,
            }],
            trajectory: TrajectorySpec::Twist {
                linear: [0.01, 0.0, 0.0],
                angular: [0.0; 3],
            },
            degradations: vec![Degradation::Sprite {
                origin: [4.0, 4.0],
                size: 6.0,
                velocity: [1.0, 0.0],
                depth: 1.0,
                contrast: 0.4,
                wavelength: 4.0,
                frames: Schedule::default(),
            }],
        }
    }

    #[test]
    fn association_is_global_greedy() {
        let rgb = [0.0, 0.033, 0.066];
        let depth = [0.01, 0.03, 0.07, 0.5];
        assert_eq!(associate(&rgb, &depth, 0.02), vec![(0, 0), (1, 1), (2, 2)]);
        // Closest pair wins even when a later rgb stamp claims it.
        assert_eq!(associate(&[0.0, 0.015], &[0.014], 0.02), vec![(1, 0)]);
        assert!(associate(&[0.0, 1.0], &[0.5, 1.5], 0.02).is_empty());
    }

    #[test]
    fn synth_round_trip() {
        let seq = render_sequence(&spec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_sequence(dir.path(), &seq).unwrap();
        let index = load_dataset(dir.path(), DatasetFormat::Synth).unwrap();
        assert_eq!(index.len(), 3);
        assert_eq!(index.intrinsics, seq.intrinsics);
        let tum = load_dataset(dir.path(), DatasetFormat::Tum).unwrap();
        assert_eq!(tum.entries, index.entries);
        for (n, frame) in seq.frames.iter().enumerate() {
            let back = index.load_frame(n).unwrap();
            assert!((back.timestamp - frame.timestamp).abs() < 1e-6);
            for (a, b) in back.image.as_slice().iter().zip(frame.image.as_slice()) {
                assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-12);
            }
            for (a, b) in back.depth.as_slice().iter().zip(frame.depth.as_slice()) {
                assert!((a - b).abs() <= 0.5 / TUM_DEPTH_SCALE + 1e-12);
            }
            assert_eq!(
                read_mask(&dir.path().join(format!("dynamic/{n:06}.png"))).unwrap(),
                seq.gt.dynamic[n]
            );
        }
        let gt = index.ground_truth().unwrap();
        let rel = gt.relative_pose(0, 1).unwrap();
        assert!((rel.translation - seq.gt.relative_pose(0, 1).translation).amax() < 1e-8);
        let flow = gt.ego_flow(1, 2).unwrap();
        assert!((flow.u.get(3, 3) - seq.gt.ego_flow[1].u.get(3, 3)).abs() < 1e-5);
        assert!(matches!(gt.ego_flow(0, 2), Err(Error::MissingGroundTruth(_))));
        let true_flow = read_flow(&flow_path(&dir.path().join("flow"), 0, 1)).unwrap();
        assert_eq!(true_flow.u.get(6, 6), 1.0);
    }

    #[test]
    fn offset_streams_do_not_associate() {
        let seq = render_sequence(&spec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_sequence(dir.path(), &seq).unwrap();
        let shifted: String = read_text(&dir.path().join("depth.txt"))
            .unwrap()
            .lines()
            .map(|l| match l.split_once(' ') {
                Some((t, f)) if !l.starts_with('#') => format!("{:.6} {f}\n", t.parse::<f64>().unwrap() + 0.5),
                _ => format!("{l}\n"),
            })
            .collect();
        fs::write(dir.path().join("depth.txt"), shifted).unwrap();
        assert!(matches!(
            load_dataset(dir.path(), DatasetFormat::Tum),
            Err(Error::NoAssociations { .. })
        ));
    }

    #[test]
    fn tum_fixture_with_rgb8_and_default_calibration() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        fs::create_dir_all(root.join("rgb")).unwrap();
        fs::create_dir_all(root.join("depth")).unwrap();
        let rgb_stamps = ["1305031102.175304", "1305031102.211214", "1305031102.243211"];
        let depth_stamps = [
            "1305031102.160407",
            "1305031102.194330",
            "1305031102.226738",
            "1305031102.262886",
        ];
        let mut rgb_list = "# color images\n".to_string();
        for s in rgb_stamps {
            let img = image::RgbImage::from_pixel(640, 480, image::Rgb([200, 100, 50]));
            img.save(root.join(format!("rgb/{s}.png"))).unwrap();
            rgb_list.push_str(&format!("{s} rgb/{s}.png\n"));
        }
        let mut depth_list = String::new();
        for s in depth_stamps {
            write_depth(
                &root.join(format!("depth/{s}.png")),
                &Grid::new(640, 480, 1.0),
                TUM_DEPTH_SCALE,
            )
            .unwrap();
            depth_list.push_str(&format!("{s} depth/{s}.png\n"));
        }
        fs::write(root.join("rgb.txt"), rgb_list).unwrap();
        fs::write(root.join("depth.txt"), depth_list).unwrap();
        let index = load_dataset(root, DatasetFormat::Tum).unwrap();
        // Hand-checked: gaps 0.0149, 0.0155, 0.0197 against depth stamps 0, 2, 3.
        let depth_names: Vec<_> = index
            .entries
            .iter()
            .map(|e| e.depth.file_stem().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(
            depth_names,
            ["1305031102.160407", "1305031102.226738", "1305031102.262886"]
        );
        assert_eq!(index.intrinsics.fx, 525.0);
        let frame = index.load_frame(0).unwrap();
        let expected = luma(200.0, 100.0, 50.0) / 255.0;
        assert!((frame.image.get(0, 0) - expected).abs() < 1e-12);
        assert_eq!(frame.depth.get(0, 0), 1.0);
    }

    #[test]
    fn malformed_and_missing_entries_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("rgb.txt"), "# c\n0.1 missing.png\n").unwrap();
        fs::write(dir.path().join("depth.txt"), "").unwrap();
        match load_dataset(dir.path(), DatasetFormat::Tum) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        fs::write(dir.path().join("rgb.txt"), "abc x.png\n").unwrap();
        assert!(matches!(
            load_dataset(dir.path(), DatasetFormat::Tum),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
