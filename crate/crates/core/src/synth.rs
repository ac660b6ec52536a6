//! Deterministic synthetic RGB-D sequences with exact ground truth.
//!
//! Scenes are textured planes viewed by a pinhole camera, so depth and
//! camera-induced flow have closed forms. Degradations
//! (moving sprites, gain changes, highlights, depth holes and depth noise)
//! are applied on top of the clean render and update the ground truth they
//! affect.

use std::f64::consts::TAU;

use nalgebra::{Matrix3x2, Vector2, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::consistency::FlowField;
use crate::error::{Error, Result};
use crate::frame::RgbdFrame;
use crate::geometry::{se3_exp, warp_point, Intrinsics, Se3Pose, Twist, DEFAULT_Z_MIN};
use crate::image::{Grid, Image, Mask};

fn default_fps() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_fps")]
    pub fps: f64,
    /// Defaults to `fx = fy = 0.9 * width` with a centred principal point.
    #[serde(default)]
    pub intrinsics: Option<IntrinsicsSpec>,
    /// Solid texture shared by planes without their own.
    #[serde(default)]
    pub texture: TextureSpec,
    pub planes: Vec<PlaneSpec>,
    #[serde(default)]
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub degradations: Vec<Degradation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntrinsicsSpec {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// Intensity is `0.5 + 0.5 * tanh(2 * contrast * z)` with `z` a unit-variance
/// sum of sinusoids, so `contrast` is the small-signal standard deviation.
/// Wavelengths are in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextureSpec {
    pub contrast: f64,
    pub min_wavelength: f64,
    pub max_wavelength: f64,
    pub components: usize,
}

impl TextureSpec {
    fn is_valid(&self) -> bool {
        self.contrast.is_finite()
            && self.min_wavelength > 0.0
            && self.max_wavelength >= self.min_wavelength
            && self.components > 0
    }
}

impl Default for TextureSpec {
    fn default() -> Self {
        Self {
            contrast: 0.15,
            min_wavelength: 0.1,
            max_wavelength: 2.0,
            components: 24,
        }
    }
}

/// Plane `n . X = depth` in world coordinates, `n` the unit normal
/// (default `+z`, so `z = depth`). `extent` (`[umin, umax, vmin, vmax]`)
/// uses in-plane coordinates about the foot point `depth * n`; for the
/// default normal these are world `x` and `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneSpec {
    pub depth: f64,
    #[serde(default)]
    pub normal: Option<[f64; 3]>,
    #[serde(default)]
    pub extent: Option<[f64; 4]>,
    /// Own solid texture instead of the scene one.
    #[serde(default)]
    pub texture: Option<TextureSpec>,
}

/// Camera-to-world trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectorySpec {
    #[default]
    Static,
    /// `T_t = exp(t * [linear; angular])`.
    Twist { linear: [f64; 3], angular: [f64; 3] },
    /// Constant twist plus a sinusoidal term `sin(2 pi t / period) * amplitude`.
    Wobble {
        linear: [f64; 3],
        angular: [f64; 3],
        amplitude: [f64; 6],
        period: f64,
    },
    /// Explicit `tx ty tz qx qy qz qw` per frame.
    Poses { poses: Vec<[f64; 7]> },
}

/// Frames `t` with `start <= t < end` and `(t - start) % every == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub start: usize,
    pub end: Option<usize>,
    pub every: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            start: 0,
            end: None,
            every: 1,
        }
    }
}

impl Schedule {
    pub fn contains(&self, t: usize) -> bool {
        t >= self.start && self.end.is_none_or(|e| t < e) && (t - self.start).is_multiple_of(self.every.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Degradation {
    /// Textured square moving in image space, `position(t) = origin + velocity * t`.
    Sprite {
        origin: [f64; 2],
        size: f64,
        velocity: [f64; 2],
        depth: f64,
        #[serde(default = "default_sprite_contrast")]
        contrast: f64,
        #[serde(default = "default_sprite_wavelength")]
        wavelength: f64,
        #[serde(default)]
        frames: Schedule,
    },
    /// `I <- clamp(gain * I + offset, 0, 1)`.
    GainOffset {
        gain: f64,
        offset: f64,
        #[serde(default)]
        frames: Schedule,
    },
    /// Additive Gaussian blob, saturating at 1.
    Highlight {
        origin: [f64; 2],
        radius: f64,
        amplitude: f64,
        #[serde(default)]
        velocity: [f64; 2],
        #[serde(default)]
        frames: Schedule,
    },
    /// Zeroes observed depth in `[x, y, w, h]`.
    DepthHoles {
        region: [usize; 4],
        #[serde(default)]
        frames: Schedule,
    },
    /// Multiplies observed depth in `region` by `1 + sigma * n`, `n ~ N(0, 1)`.
    DepthNoise {
        region: [usize; 4],
        sigma: f64,
        #[serde(default)]
        frames: Schedule,
    },
}

fn default_sprite_contrast() -> f64 {
    0.2
}

fn default_sprite_wavelength() -> f64 {
    6.0
}

impl SceneSpec {
    /// Parses and validates a TOML scene description.
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::SpecValidation(vec![e.to_string()]))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene spec serializes")
    }

    pub fn intrinsics(&self) -> Result<Intrinsics> {
        match self.intrinsics {
            Some(k) => Intrinsics::new(k.fx, k.fy, k.cx, k.cy, self.width, self.height),
            None => {
                let f = 0.9 * self.width as f64;
                Intrinsics::new(
                    f,
                    f,
                    (self.width as f64 - 1.0) / 2.0,
                    (self.height as f64 - 1.0) / 2.0,
                    self.width,
                    self.height,
                )
            }
        }
    }

    /// Collects every violation rather than stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.width < 8 || self.height < 8 {
            problems.push(format!("image {}x{} smaller than 8x8", self.width, self.height));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            problems.push(format!("fps {} must be positive", self.fps));
        }
        if self.width >= 8 && self.height >= 8 {
            if let Err(e) = self.intrinsics() {
                problems.push(e.to_string());
            }
        }
        if !self.texture.is_valid() {
            problems.push(format!("invalid texture {:?}", self.texture));
        }
        if self.planes.is_empty() {
            problems.push("scene needs at least one plane".into());
        }
        for (n, p) in self.planes.iter().enumerate() {
            if !(p.depth.is_finite() && p.depth > DEFAULT_Z_MIN) {
                problems.push(format!("plane {n}: depth {} must exceed {DEFAULT_Z_MIN}", p.depth));
            }
            if let Some(normal) = p.normal {
                let v = Vector3::from(normal);
                if !(v.iter().all(|c| c.is_finite()) && v.norm() > 1e-9) {
                    problems.push(format!("plane {n}: normal must be finite and non-zero"));
                }
            }
            if let Some(t) = &p.texture {
                if !t.is_valid() {
                    problems.push(format!("plane {n}: invalid texture {t:?}"));
                }
            }
            if let Some([x0, x1, y0, y1]) = p.extent {
                if !(x0 < x1 && y0 < y1) {
                    problems.push(format!("plane {n}: empty extent"));
                }
            }
        }
        match &self.trajectory {
            TrajectorySpec::Poses { poses } if poses.len() != self.frames => problems.push(format!(
                "trajectory has {} poses for {} frames",
                poses.len(),
                self.frames
            )),
            TrajectorySpec::Wobble { period, .. } if !(*period > 0.0) => {
                problems.push("wobble period must be positive".into())
            }
            _ => {}
        }
        for (n, d) in self.degradations.iter().enumerate() {
            let in_image =
                |r: &[usize; 4]| r[2] > 0 && r[3] > 0 && r[0] + r[2] <= self.width && r[1] + r[3] <= self.height;
            let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
            let ok = match d {
                Degradation::Sprite {
                    origin,
                    size,
                    velocity,
                    depth,
                    contrast,
                    wavelength,
                    ..
                } => {
                    finite(origin)
                        && finite(velocity)
                        && *size > 0.0
                        && *depth > DEFAULT_Z_MIN
                        && contrast.is_finite()
                        && *wavelength > 0.0
                        && origin[0] >= 0.0
                        && origin[1] >= 0.0
                        && origin[0] + size <= self.width as f64
                        && origin[1] + size <= self.height as f64
                }
                Degradation::GainOffset { gain, offset, .. } => gain.is_finite() && offset.is_finite(),
                Degradation::Highlight {
                    origin,
                    radius,
                    amplitude,
                    velocity,
                    ..
                } => {
                    finite(origin)
                        && finite(velocity)
                        && *radius > 0.0
                        && amplitude.is_finite()
                        && origin[0] < self.width as f64
                        && origin[1] < self.height as f64
                }
                Degradation::DepthHoles { region, .. } => in_image(region),
                Degradation::DepthNoise { region, sigma, .. } => in_image(region) && sigma.is_finite() && *sigma >= 0.0,
            };
            if !ok {
                problems.push(format!("degradation {n}: invalid parameters {d:?}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::SpecValidation(problems))
        }
    }

    pub fn poses(&self) -> Result<Vec<Se3Pose>> {
        (0..self.frames)
            .map(|t| {
                let tf = t as f64;
                match &self.trajectory {
                    TrajectorySpec::Static => Ok(Se3Pose::identity()),
                    TrajectorySpec::Twist { linear, angular } => {
                        se3_exp(&Twist::new(Vector3::from(*linear) * tf, Vector3::from(*angular) * tf))
                    }
                    TrajectorySpec::Wobble {
                        linear,
                        angular,
                        amplitude,
                        period,
                    } => {
                        let base = Vector6::new(linear[0], linear[1], linear[2], angular[0], angular[1], angular[2]);
                        let xi = base * tf + Vector6::from_row_slice(amplitude) * (TAU * tf / period).sin();
                        se3_exp(&Twist::from_vector(&xi))
                    }
                    TrajectorySpec::Poses { poses } => {
                        let p = poses[t];
                        let q = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
                            p[6], p[3], p[4], p[5],
                        ));
                        Ok(Se3Pose::new(
                            q.to_rotation_matrix().into_inner(),
                            Vector3::new(p[0], p[1], p[2]),
                        ))
                    }
                }
            })
            .collect()
    }
}

/// Anti-aliasing blur applied to rendered plane textures, in pixels.
pub const PREFILTER_SIGMA: f64 = 0.6;

/// Sum of sinusoids with random direction and phase, log-uniform wavelength
/// and amplitude proportional to wavelength. Solid
/// textures vary in all three dimensions so that planes meeting at a crease
/// share intensities along it.
#[derive(Debug, Clone)]
struct BandLimitedTexture {
    waves: Vec<(Vector3<f64>, f64, f64)>,
    contrast: f64,
}

impl BandLimitedTexture {
    fn new(rng: &mut ChaCha8Rng, spec: &TextureSpec, solid: bool) -> Self {
        let waves = (0..spec.components)
            .map(|_| {
                let angle = rng.random::<f64>() * TAU;
                let elevation = if solid {
                    (2.0 * rng.random::<f64>() - 1.0).asin()
                } else {
                    0.0
                };
                let wl = spec.min_wavelength * (spec.max_wavelength / spec.min_wavelength).powf(rng.random::<f64>());
                let phase = rng.random::<f64>() * TAU;
                let amp = (0.5 + 0.5 * rng.random::<f64>()) * wl / spec.max_wavelength;
                let dir = Vector3::new(
                    angle.cos() * elevation.cos(),
                    angle.sin() * elevation.cos(),
                    elevation.sin(),
                );
                (dir * (TAU / wl), phase, amp)
            })
            .collect::<Vec<_>>();
        Self {
            waves,
            contrast: spec.contrast,
        }
    }

    fn eval(&self, p: &Vector3<f64>) -> f64 {
        self.eval_filtered(p, &Matrix3x2::zeros())
    }

    /// Texture blurred by a Gaussian of `PREFILTER_SIGMA` pixels, given the
    /// Jacobian of the surface point with respect to pixel coordinates.
    fn eval_filtered(&self, p: &Vector3<f64>, jacobian: &Matrix3x2<f64>) -> f64 {
        let (sum, power) = self.waves.iter().fold((0.0, 0.0), |(s, n), (k, phase, amp)| {
            let screen = jacobian.transpose() * k;
            let gain = (-0.5 * PREFILTER_SIGMA * PREFILTER_SIGMA * screen.norm_squared()).exp();
            (s + gain * amp * (k.dot(p) + phase).sin(), n + 0.5 * amp * amp)
        });
        0.5 + 0.5 * (2.0 * self.contrast * sum / power.sqrt().max(1e-12)).tanh()
    }
}

/// Ground truth accompanying a rendered sequence. Flow entry `t - 1` is the
/// flow of pair `(t - 1, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthBundle {
    /// Camera-to-world.
    pub poses: Vec<Se3Pose>,
    pub depth: Vec<Image>,
    /// True motion, including independently moving objects.
    pub flow: Vec<FlowField>,
    /// Motion a fully static world would produce.
    pub ego_flow: Vec<FlowField>,
    pub dynamic: Vec<Mask>,
}

impl GroundTruthBundle {
    /// `T_{i<-j}`, mapping frame-j points into frame i.
    pub fn relative_pose(&self, j: usize, i: usize) -> Se3Pose {
        self.poses[i].inverse().compose(&self.poses[j])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSequence {
    pub frames: Vec<RgbdFrame>,
    pub gt: GroundTruthBundle,
    pub intrinsics: Intrinsics,
    pub fps: f64,
}

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct ScenePlane {
    spec: PlaneSpec,
    normal: Vector3<f64>,
    u: Vector3<f64>,
    v: Vector3<f64>,
    /// Own texture, or `None` for the scene texture.
    texture: Option<BandLimitedTexture>,
}

impl ScenePlane {
    fn new(spec: PlaneSpec, texture: Option<BandLimitedTexture>) -> Self {
        let normal = Vector3::from(spec.normal.unwrap_or([0.0, 0.0, 1.0])).normalize();
        let axis = if normal.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        let u = (axis - normal * normal.dot(&axis)).normalize();
        let v = normal.cross(&u);
        Self {
            spec,
            normal,
            u,
            v,
            texture,
        }
    }
}

struct StaticScene {
    texture: BandLimitedTexture,
    planes: Vec<ScenePlane>,
}

impl StaticScene {
    fn new(spec: &SceneSpec) -> Self {
        let texture = BandLimitedTexture::new(&mut seeded(spec.seed, 1000), &spec.texture, true);
        let planes = spec
            .planes
            .iter()
            .enumerate()
            .map(|(n, p)| {
                let own = p
                    .texture
                    .map(|t| BandLimitedTexture::new(&mut seeded(spec.seed, 1001 + n as u64), &t, true));
                ScenePlane::new(*p, own)
            })
            .collect();
        Self { texture, planes }
    }

    /// Intensity and camera-frame depth of the nearest plane hit.
    fn trace(&self, pose: &Se3Pose, k: &Intrinsics, x: f64, y: f64) -> (f64, f64) {
        let ray = pose.rotation * Vector3::new((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
        let (ax, ay) = (pose.rotation.column(0) / k.fx, pose.rotation.column(1) / k.fy);
        let o = &pose.translation;
        let mut best: Option<(f64, f64)> = None;
        for plane in &self.planes {
            let along = plane.normal.dot(&ray);
            if along.abs() < 1e-12 {
                continue;
            }
            let s = (plane.spec.depth - plane.normal.dot(o)) / along;
            if !(s > DEFAULT_Z_MIN) || best.is_some_and(|b| s >= b.1) {
                continue;
            }
            let hit = o + ray * s;
            let local = hit - plane.normal * plane.spec.depth;
            let (pu, pv) = (plane.u.dot(&local), plane.v.dot(&local));
            if let Some([u0, u1, v0, v1]) = plane.spec.extent {
                if pu < u0 || pu > u1 || pv < v0 || pv > v1 {
                    continue;
                }
            }
            let dx = (ax - ray * (plane.normal.dot(&ax) / along)) * s;
            let dy = (ay - ray * (plane.normal.dot(&ay) / along)) * s;
            let texture = plane.texture.as_ref().unwrap_or(&self.texture);
            best = Some((texture.eval_filtered(&hit, &Matrix3x2::from_columns(&[dx, dy])), s));
        }
        best.unwrap_or((0.0, 0.0))
    }

    fn render(&self, pose: &Se3Pose, k: &Intrinsics) -> (Image, Image) {
        let mut img = Grid::new(k.width, k.height, 0.0);
        let mut depth = Grid::new(k.width, k.height, 0.0);
        for y in 0..k.height {
            for x in 0..k.width {
                let (i, d) = self.trace(pose, k, x as f64, y as f64);
                img.set(x, y, i);
                depth.set(x, y, d);
            }
        }
        (img, depth)
    }
}

/// Camera-induced flow of pair `(j, i)` from frame-i static depth.
pub fn ego_flow(depth_i: &Image, t_j_from_i: &Se3Pose, k: &Intrinsics) -> FlowField {
    let (w, h) = depth_i.dims();
    let mut flow = FlowField::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let p = Vector2::new(x as f64, y as f64);
            match warp_point(t_j_from_i, k, &p, depth_i.get(x, y)) {
                Ok((src, _)) => {
                    flow.u.set(x, y, p.x - src.x);
                    flow.v.set(x, y, p.y - src.y);
                }
                Err(_) => flow.valid.set(x, y, false),
            }
        }
    }
    flow
}

/// Renders the clean scene, then applies every degradation in order.
pub fn render_sequence(spec: &SceneSpec) -> Result<SynthSequence> {
    spec.validate()?;
    let k = spec.intrinsics()?;
    let poses = spec.poses()?;
    let scene = StaticScene::new(spec);
    let mut frames = Vec::with_capacity(spec.frames);
    let mut depths = Vec::with_capacity(spec.frames);
    for (t, pose) in poses.iter().enumerate() {
        let (img, depth) = scene.render(pose, &k);
        frames.push(RgbdFrame::new(t, t as f64 / spec.fps, img, depth.clone(), k)?);
        depths.push(depth);
    }
    let flows: Vec<FlowField> = (1..spec.frames)
        .map(|t| {
            let t_j_from_i = poses[t - 1].inverse().compose(&poses[t]);
            ego_flow(&depths[t], &t_j_from_i, &k)
        })
        .collect();
    let mut gt = GroundTruthBundle {
        poses,
        dynamic: vec![Grid::new(k.width, k.height, false); spec.frames],
        depth: depths,
        flow: flows.clone(),
        ego_flow: flows,
    };
    for (n, d) in spec.degradations.iter().enumerate() {
        apply_degradation(&mut frames, &mut gt, d, spec.seed, n)?;
    }
    Ok(SynthSequence {
        frames,
        gt,
        intrinsics: k,
        fps: spec.fps,
    })
}

/// Applies one degradation. `index` separates the random streams of
/// several degradations under the same seed.
pub fn apply_degradation(
    frames: &mut [RgbdFrame],
    gt: &mut GroundTruthBundle,
    degradation: &Degradation,
    seed: u64,
    index: usize,
) -> Result<()> {
    match *degradation {
        Degradation::Sprite {
            origin,
            size,
            velocity,
            depth,
            contrast,
            wavelength,
            frames: schedule,
        } => {
            let mut rng = seeded(seed, 5000 + index as u64);
            let tex = BandLimitedTexture::new(
                &mut rng,
                &TextureSpec {
                    contrast,
                    min_wavelength: wavelength,
                    max_wavelength: 2.5 * wavelength,
                    components: 6,
                },
                false,
            );
            let position =
                |t: usize| Vector2::new(origin[0], origin[1]) + Vector2::new(velocity[0], velocity[1]) * t as f64;
            for (t, frame) in frames.iter_mut().enumerate() {
                if !schedule.contains(t) {
                    continue;
                }
                let pos = position(t);
                let moved_from = (t > 0 && schedule.contains(t - 1)).then(|| pos - position(t - 1));
                let (w, h) = frame.dims();
                for y in 0..h {
                    for x in 0..w {
                        let (lx, ly) = (x as f64 - pos.x, y as f64 - pos.y);
                        if lx < 0.0 || ly < 0.0 || lx >= size || ly >= size {
                            continue;
                        }
                        frame.image.set(x, y, tex.eval(&Vector3::new(lx, ly, 0.0)));
                        frame.depth.set(x, y, depth);
                        gt.depth[t].set(x, y, depth);
                        gt.dynamic[t].set(x, y, true);
                        if t > 0 {
                            let flow = &mut gt.flow[t - 1];
                            match moved_from {
                                Some(d) => {
                                    flow.u.set(x, y, d.x);
                                    flow.v.set(x, y, d.y);
                                    flow.valid.set(x, y, true);
                                }
                                None => flow.valid.set(x, y, false),
                            }
                        }
                    }
                }
            }
        }
        Degradation::GainOffset {
            gain,
            offset,
            frames: schedule,
        } => {
            for frame in frames.iter_mut().filter(|f| schedule.contains(f.index)) {
                for v in frame.image.as_mut_slice() {
                    *v = (gain * *v + offset).clamp(0.0, 1.0);
                }
            }
        }
        Degradation::Highlight {
            origin,
            radius,
            amplitude,
            velocity,
            frames: schedule,
        } => {
            for frame in frames.iter_mut().filter(|f| schedule.contains(f.index)) {
                let t = frame.index as f64;
                let (cx, cy) = (origin[0] + velocity[0] * t, origin[1] + velocity[1] * t);
                let (w, h) = frame.dims();
                for y in 0..h {
                    for x in 0..w {
                        let r2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                        let v = frame.image.get(x, y) + amplitude * (-r2 / (2.0 * radius * radius)).exp();
                        frame.image.set(x, y, v.min(1.0));
                    }
                }
            }
        }
        Degradation::DepthHoles {
            region: [rx, ry, rw, rh],
            frames: schedule,
        } => {
            for frame in frames.iter_mut().filter(|f| schedule.contains(f.index)) {
                for y in ry..ry + rh {
                    for x in rx..rx + rw {
                        frame.depth.set(x, y, 0.0);
                    }
                }
            }
        }
        Degradation::DepthNoise {
            region: [rx, ry, rw, rh],
            sigma,
            frames: schedule,
        } => {
            for frame in frames.iter_mut().filter(|f| schedule.contains(f.index)) {
                let mut rng = seeded(
                    seed ^ (frame.index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                    9000 + index as u64,
                );
                for y in ry..ry + rh {
                    for x in rx..rx + rw {
                        let d = frame.depth.get(x, y);
                        let n: f64 = StandardNormal.sample(&mut rng);
                        if d > 0.0 {
                            let noisy = d * (1.0 + sigma * n);
                            frame.depth.set(x, y, if noisy > 0.0 { noisy } else { 0.0 });
                        }
                    }
                }
            }
        }
    }
    Ok(())
}
