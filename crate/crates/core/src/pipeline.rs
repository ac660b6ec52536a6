//! Frame-by-frame odometry: priors, keyframes and tracking.
//!
//! For every new frame the pipeline
//!
//! 1. asks the provider for the uncertainty of the pair (previous, current)
//!    when the mode uses a prior,
//! 2. completes the current keyframe's prior if it was created on the
//!    previous frame,
//! 3. tracks the frame against the current keyframe from a constant-velocity
//!    guess,
//! 4. creates a new keyframe if the motion or the tracking quality calls
//!    for one.
//!
//! A keyframe's support pixels are selected once, with the prior available
//! at creation time. Its weights follow the prior and are refreshed when the
//! prior is completed.

use std::collections::VecDeque;

use nalgebra::Vector2;

use crate::config::{KeyframeConfig, Mode, PipelineConfig};
use crate::dataset::DatasetIndex;
use crate::error::Result;
use crate::frame::RgbdFrame;
use crate::geometry::{backproject, project, Se3Pose};
use crate::provider::ConsistencyProvider;
use crate::quality::{weights_from_prior, QualityMap, QualityPrior, UncertaintyPair, WeightMaps};
use crate::selector::{select_support, SupportPixel};
use crate::tracker::{track_frame, FramePyramid, NormalEquations, TrackReport, TrackingHost};
use crate::trajectory::Trajectory;

const SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

/// A host frame with its prior, support pixels and tracking data.
#[derive(Debug, Clone)]
pub struct Keyframe {
    /// Position in the keyframe sequence.
    pub id: usize,
    pub frame: RgbdFrame,
    /// Camera-to-world.
    pub pose: Se3Pose,
    pub prior: QualityPrior,
    pub weights: WeightMaps,
    pub host: TrackingHost,
}

impl Keyframe {
    pub fn support(&self) -> &[SupportPixel] {
        &self.host.support
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PipelineEvent {
    KeyframeCreated {
        id: usize,
        frame: usize,
        support: usize,
    },
    KeyframeEvicted {
        id: usize,
    },
    PriorFinalized {
        keyframe: usize,
    },
    /// Provider failed; unit quality was used for this pair.
    ProviderFallback {
        j: usize,
        i: usize,
        message: String,
    },
    /// Tracking failed; the constant-velocity prediction was kept.
    TrackingFallback {
        frame: usize,
        message: String,
    },
}

/// What the mode actually did on a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Instrumentation {
    /// Support pixels of the host were ranked with a non-trivial prior.
    pub quality_selection: bool,
    /// Prior weights entered the finest-level normal equations.
    pub decoupled_weights: bool,
    /// The host prior had both flanking pairs when the frame was tracked.
    pub prior_finalized: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameReport {
    pub index: usize,
    pub timestamp: f64,
    /// Camera-to-world.
    pub pose: Se3Pose,
    /// Frame index of the keyframe this frame was tracked against.
    pub host_frame: Option<usize>,
    /// The frame became a keyframe. For the first frame of a prior-using
    /// run the keyframe is built once the next frame supplies its pair.
    pub new_keyframe: bool,
    pub events: Vec<PipelineEvent>,
    pub flags: Instrumentation,
    pub iterations: Vec<usize>,
    pub valid_fraction: Option<f64>,
    /// Finest-level normal equations at the final pose.
    pub normal_equations: Option<NormalEquations>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceResult {
    pub trajectory: Trajectory,
    pub reports: Vec<FrameReport>,
}

impl SequenceResult {
    pub fn keyframe_count(&self) -> usize {
        self.reports.iter().filter(|r| r.new_keyframe).count()
    }
}

/// Mean displacement of the host's support pixels under `t_target_host`;
/// infinite when none of them projects.
pub fn mean_displacement(support: &[SupportPixel], k: &crate::geometry::Intrinsics, t_target_host: &Se3Pose) -> f64 {
    let (sum, n) = support.iter().fold((0.0, 0usize), |(sum, n), sp| {
        let p = Vector2::new(sp.x as f64, sp.y as f64);
        let moved = backproject(k, &p, sp.depth)
            .and_then(|pt| project(k, &t_target_host.transform_point(&pt)))
            .ok()
            .filter(|(q, _)| k.contains(q));
        match moved {
            Some((q, _)) => (sum + (q - p).norm(), n + 1),
            None => (sum, n),
        }
    });
    if n == 0 {
        f64::INFINITY
    } else {
        sum / n as f64
    }
}

/// Strict-inequality keyframe test.
pub fn keyframe_trigger(mean_flow: f64, t_target_host: &Se3Pose, valid_fraction: f64, cfg: &KeyframeConfig) -> bool {
    mean_flow > cfg.flow_px
        || t_target_host.translation.norm() > cfg.translation
        || t_target_host.rotation_angle() > cfg.rotation_deg.to_radians()
        || valid_fraction < cfg.min_valid_fraction
}

pub fn keyframe_criterion(
    keyframe: &Keyframe,
    t_target_host: &Se3Pose,
    valid_fraction: f64,
    cfg: &KeyframeConfig,
) -> bool {
    let flow = mean_displacement(keyframe.support(), &keyframe.frame.intrinsics, t_target_host);
    keyframe_trigger(flow, t_target_host, valid_fraction, cfg)
}

pub struct Pipeline<'p> {
    pub config: PipelineConfig,
    provider: Box<dyn ConsistencyProvider + 'p>,
    window: VecDeque<Keyframe>,
    next_keyframe_id: usize,
    /// First frame of a prior-using run, waiting for its pair.
    pending_host: Option<RgbdFrame>,
    previous: Option<RgbdFrame>,
    /// Camera-to-world of the last two frames, newest last.
    history: Vec<Se3Pose>,
}

impl<'p> Pipeline<'p> {
    pub fn new(config: PipelineConfig, provider: Box<dyn ConsistencyProvider + 'p>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            provider,
            window: VecDeque::new(),
            next_keyframe_id: 0,
            pending_host: None,
            previous: None,
            history: Vec::new(),
        })
    }

    pub fn window(&self) -> &VecDeque<Keyframe> {
        &self.window
    }

    pub fn current_keyframe(&self) -> Option<&Keyframe> {
        self.window.back()
    }

    fn selection_seed(&self, frame: &RgbdFrame) -> u64 {
        self.config
            .seed
            .wrapping_add((frame.index as u64 + 1).wrapping_mul(SEED_STRIDE))
    }

    fn create_keyframe(
        &mut self,
        frame: RgbdFrame,
        pose: Se3Pose,
        prior: QualityPrior,
        events: &mut Vec<PipelineEvent>,
    ) -> Result<()> {
        let support = select_support(
            &frame.image,
            &frame.depth,
            &prior.photo,
            &self.config.selector,
            self.selection_seed(&frame),
        )?;
        let pyramid = FramePyramid::new(&frame.image, &frame.intrinsics, self.config.tracker.levels)?;
        let host = TrackingHost::new(pyramid, support)?;
        let id = self.next_keyframe_id;
        self.next_keyframe_id += 1;
        events.push(PipelineEvent::KeyframeCreated {
            id,
            frame: frame.index,
            support: host.support.len(),
        });
        self.window.push_back(Keyframe {
            id,
            weights: weights_from_prior(&prior),
            frame,
            pose,
            prior,
            host,
        });
        while self.window.len() > self.config.keyframe.window {
            if let Some(old) = self.window.pop_front() {
                events.push(PipelineEvent::KeyframeEvicted { id: old.id });
            }
        }
        Ok(())
    }

    fn pair_qualities(
        &mut self,
        prev: &RgbdFrame,
        frame: &RgbdFrame,
        events: &mut Vec<PipelineEvent>,
    ) -> Result<(QualityMap, QualityMap)> {
        let pair = match self.provider.get_uncertainty(prev, frame) {
            Ok(p) if p.dims() == frame.dims() => p,
            result => {
                let message = match result {
                    Err(e) => e.to_string(),
                    Ok(p) => format!("map is {:?}, frame is {:?}", p.dims(), frame.dims()),
                };
                events.push(PipelineEvent::ProviderFallback {
                    j: prev.index,
                    i: frame.index,
                    message,
                });
                let (w, h) = frame.dims();
                UncertaintyPair::constant(w, h, prev.index, frame.index)
            }
        };
        pair.qualities()
    }

    fn predicted_pose(&self) -> Se3Pose {
        match self.history.as_slice() {
            [.., a, b] => b.compose(&a.inverse().compose(b)).orthonormalized(),
            [b] => *b,
            [] => Se3Pose::identity(),
        }
    }

    /// Processes the next frame in timestamp order.
    pub fn process_frame(&mut self, frame: RgbdFrame) -> Result<FrameReport> {
        let mode = self.config.mode;
        let mut events = Vec::new();
        let Some(prev) = self.previous.take() else {
            let pose = Se3Pose::identity();
            let (w, h) = frame.dims();
            if mode.uses_prior() {
                self.pending_host = Some(frame.clone());
            } else {
                self.create_keyframe(frame.clone(), pose, QualityPrior::unit(w, h, frame.index), &mut events)?;
            }
            self.history = vec![pose];
            let report = FrameReport {
                index: frame.index,
                timestamp: frame.timestamp,
                pose,
                host_frame: None,
                new_keyframe: true,
                events,
                flags: Instrumentation::default(),
                iterations: Vec::new(),
                valid_fraction: None,
                normal_equations: None,
            };
            self.previous = Some(frame);
            return Ok(report);
        };

        let pair = if mode.uses_prior() {
            Some(self.pair_qualities(&prev, &frame, &mut events)?)
        } else {
            None
        };

        if let Some(host) = self.pending_host.take() {
            let (photo, geo) = pair.clone().expect("prior modes compute pairs");
            let prior = QualityPrior::provisional(photo, geo, host.index)?;
            self.create_keyframe(host, self.history[0], prior, &mut events)?;
        } else if let (Some((photo, geo)), Some(kf)) = (&pair, self.window.back_mut()) {
            if !kf.prior.finalized && kf.frame.index == prev.index {
                kf.prior.finalize(photo, geo)?;
                kf.weights = weights_from_prior(&kf.prior);
                events.push(PipelineEvent::PriorFinalized { keyframe: kf.id });
            }
        }

        let predicted = self.predicted_pose();
        let target = FramePyramid::new(&frame.image, &frame.intrinsics, self.config.tracker.levels)?;
        let kf = self.window.back().expect("a keyframe exists after the first pair");
        let init = predicted.inverse().compose(&kf.pose);
        let weights = if mode.weights_tracking() {
            kf.weights.clone()
        } else {
            let (w, h) = kf.frame.dims();
            weights_from_prior(&QualityPrior::unit(w, h, kf.frame.index))
        };
        let flags = Instrumentation {
            quality_selection: mode.uses_prior(),
            decoupled_weights: mode.weights_tracking(),
            prior_finalized: kf.prior.finalized,
        };
        let host_frame = kf.frame.index;
        let tracked: Result<TrackReport> = track_frame(&kf.host, &target, &init, Some(&weights), &self.config.tracker);
        let (pose, t_target_host, valid_fraction, iterations, normal_equations) = match tracked {
            Ok(report) => {
                let finest = report.finest();
                (
                    kf.pose.compose(&report.pose.inverse()).orthonormalized(),
                    report.pose,
                    finest.valid_fraction,
                    report.levels.iter().map(|l| l.iterations).collect(),
                    Some(finest.normal_equations),
                )
            }
            Err(e) => {
                events.push(PipelineEvent::TrackingFallback {
                    frame: frame.index,
                    message: e.to_string(),
                });
                (predicted, init, 0.0, Vec::new(), None)
            }
        };

        let new_keyframe = keyframe_criterion(kf, &t_target_host, valid_fraction, &self.config.keyframe);
        if new_keyframe {
            let (w, h) = frame.dims();
            let prior = match pair {
                Some((photo, geo)) => QualityPrior::provisional(photo, geo, frame.index)?,
                None => QualityPrior::unit(w, h, frame.index),
            };
            self.create_keyframe(frame.clone(), pose, prior, &mut events)?;
        }

        self.history.push(pose);
        if self.history.len() > 2 {
            self.history.remove(0);
        }
        let report = FrameReport {
            index: frame.index,
            timestamp: frame.timestamp,
            pose,
            host_frame: Some(host_frame),
            new_keyframe,
            events,
            flags,
            iterations,
            valid_fraction: Some(valid_fraction),
            normal_equations,
        };
        self.previous = Some(frame);
        Ok(report)
    }
}

fn collect(reports: Vec<FrameReport>) -> Result<SequenceResult> {
    let trajectory = Trajectory::from_parts(
        reports.iter().map(|r| r.timestamp).collect(),
        reports.iter().map(|r| r.pose).collect(),
    )?;
    Ok(SequenceResult { trajectory, reports })
}

/// Runs the pipeline over in-memory frames.
pub fn run_frames<'p>(
    frames: &[RgbdFrame],
    config: &PipelineConfig,
    provider: Box<dyn ConsistencyProvider + 'p>,
) -> Result<SequenceResult> {
    let mut pipeline = Pipeline::new(config.clone(), provider)?;
    let reports = frames
        .iter()
        .map(|f| pipeline.process_frame(f.clone()))
        .collect::<Result<Vec<_>>>()?;
    collect(reports)
}

/// Runs the pipeline over a dataset, loading frames one at a time.
pub fn run_sequence<'p>(
    dataset: &DatasetIndex,
    config: &PipelineConfig,
    provider: Box<dyn ConsistencyProvider + 'p>,
) -> Result<SequenceResult> {
    let mut pipeline = Pipeline::new(config.clone(), provider)?;
    let reports = (0..dataset.len())
        .map(|n| pipeline.process_frame(dataset.load_frame(n)?))
        .collect::<Result<Vec<_>>>()?;
    collect(reports)
}

/// `mode` with everything else from `config`.
pub fn with_mode(config: &PipelineConfig, mode: Mode) -> PipelineConfig {
    PipelineConfig { mode, ..config.clone() }
}
