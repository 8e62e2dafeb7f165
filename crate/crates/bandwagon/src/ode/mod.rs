//! Adaptive integration of the phase-plane field with dense output and
//! event detection.
//!
//! The field is smooth on each side of the line `z = 0` but kinked across it,
//! so the stepper always works on a fixed [`Branch`] and treats `z = 0` as an
//! event surface: each crossing is located on the dense output, recorded, and
//! the integration restarted on the other branch. This keeps the nominal
//! order of the embedded 5(4) pair through the kink.

pub(crate) mod dopri;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    field_norm, fixed_points, vector_field_on, Branch, FixedPointId, FixedPointInfo, ModelParams,
    PhasePoint, StabilityClass,
};
use dopri::{eval_poly, poly_affine, V2};

/// Rectangle in `(z, m)` confining every integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub z_min: f64,
    pub z_max: f64,
    pub m_min: f64,
    pub m_max: f64,
}

impl Default for BoundingBox {
    /// The `m` bounds sit slightly beyond the physical strip so manifold
    /// traces may overshoot before clamping.
    fn default() -> Self {
        BoundingBox { z_min: -50.0, z_max: 50.0, m_min: -1.05, m_max: 1.05 }
    }
}

impl BoundingBox {
    pub fn contains(&self, p: &PhasePoint) -> bool {
        p.z >= self.z_min && p.z <= self.z_max && p.m >= self.m_min && p.m <= self.m_max
    }

    pub fn diagonal(&self) -> f64 {
        (self.z_max - self.z_min).hypot(self.m_max - self.m_min)
    }
}

/// Tolerances and limits of the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub t_max: f64,
    pub bounds: BoundingBox,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            rel_tol: 1e-9,
            abs_tol: 1e-11,
            max_step: 1.0,
            t_max: 1e4,
            bounds: BoundingBox::default(),
        }
    }
}

impl IntegratorOptions {
    fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::InvalidParams("integrator tolerances must be positive".into()));
        }
        if !(self.max_step > 0.0 && self.t_max > 0.0) {
            return Err(Error::InvalidParams("max_step and t_max must be positive".into()));
        }
        Ok(())
    }
}

/// Sense of integration time relative to the model flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

/// Kind of a located orbit event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    /// Crossing of the z-axis `{m = 0}`.
    ZAxisCrossing,
    /// Crossing of the m-axis `{z = 0}` (the branch surface).
    MAxisCrossing,
    /// First exit from the bounding box.
    BoxExit,
    /// Entry into a watched disc around a marked point.
    NearPoint,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EventKind::ZAxisCrossing => "z_axis_crossing",
            EventKind::MAxisCrossing => "m_axis_crossing",
            EventKind::BoxExit => "box_exit",
            EventKind::NearPoint => "near_point",
        };
        write!(f, "{s}")
    }
}

/// A located event along an orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub point: PhasePoint,
}

/// Why an integration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    /// Time budget exhausted.
    TMax,
    /// Left the bounding box.
    BoxExit,
    /// Field norm below 1e-10 within 1e-6 of a known fixed point.
    FixedPointArrival(FixedPointId),
    /// Entered the watch disc with the given index.
    NearStop(usize),
    /// Reached the requested number of Poincare-section hits.
    SectionLimit,
    /// Accumulated arc length hit its cap.
    ArcCap,
    /// Constructed by slicing or splicing existing orbits.
    Sliced,
}

/// One dense-output segment: monomial quartic in `theta = (t - t0)/(t1 - t0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseSegment {
    pub t0: f64,
    pub t1: f64,
    /// `[z coefficients, m coefficients]`.
    pub coeff: [[f64; 5]; 2],
}

impl DenseSegment {
    pub fn eval(&self, t: f64) -> PhasePoint {
        let theta = if self.t1 > self.t0 { (t - self.t0) / (self.t1 - self.t0) } else { 0.0 };
        PhasePoint::new(eval_poly(&self.coeff[0], theta), eval_poly(&self.coeff[1], theta))
    }

    fn reversed(&self, t_end: f64) -> DenseSegment {
        // theta -> 1 - theta, interval mapped to [t_end - t1, t_end - t0].
        let mut coeff = [[0.0; 5]; 2];
        for d in 0..2 {
            let c = self.coeff[d];
            coeff[d] = [
                c[0] + c[1] + c[2] + c[3] + c[4],
                -(c[1] + 2.0 * c[2] + 3.0 * c[3] + 4.0 * c[4]),
                c[2] + 3.0 * c[3] + 6.0 * c[4],
                -(c[3] + 4.0 * c[4]),
                c[4],
            ];
        }
        DenseSegment { t0: t_end - self.t1, t1: t_end - self.t0, coeff }
    }

    fn sliced(&self, a: f64, b: f64) -> DenseSegment {
        let len = self.t1 - self.t0;
        let ta = ((a - self.t0) / len).clamp(0.0, 1.0);
        let tb = ((b - self.t0) / len).clamp(0.0, 1.0);
        let coeff = [
            poly_affine(&self.coeff[0], ta, tb - ta),
            poly_affine(&self.coeff[1], ta, tb - ta),
        ];
        DenseSegment { t0: a, t1: b, coeff }
    }
}

/// A sampled trajectory with dense output, events, and termination cause.
///
/// Times are strictly increasing from zero regardless of [`Direction`]; for
/// backward orbits they measure reversed time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Orbit {
    pub direction: Direction,
    pub samples: Vec<(f64, PhasePoint)>,
    pub events: Vec<Event>,
    pub segments: Vec<DenseSegment>,
    pub termination: Termination,
}

impl Orbit {
    /// Orbit consisting of a single stationary point.
    pub fn stationary(p: PhasePoint, termination: Termination) -> Orbit {
        Orbit {
            direction: Direction::Forward,
            samples: vec![(0.0, p)],
            events: Vec::new(),
            segments: Vec::new(),
            termination,
        }
    }

    pub fn start(&self) -> PhasePoint {
        self.samples.first().expect("orbit has at least one sample").1
    }

    pub fn end(&self) -> PhasePoint {
        self.samples.last().expect("orbit has at least one sample").1
    }

    /// Covered time span `(t_first, t_last)`.
    pub fn span(&self) -> (f64, f64) {
        (
            self.samples.first().map(|s| s.0).unwrap_or(0.0),
            self.samples.last().map(|s| s.0).unwrap_or(0.0),
        )
    }

    pub fn duration(&self) -> f64 {
        let (a, b) = self.span();
        b - a
    }

    /// Dense evaluation, clamped to the covered span.
    pub fn eval(&self, t: f64) -> PhasePoint {
        if self.segments.is_empty() {
            return self.start();
        }
        let t = t.clamp(self.segments[0].t0, self.segments[self.segments.len() - 1].t1);
        let idx = self
            .segments
            .partition_point(|seg| seg.t1 < t)
            .min(self.segments.len() - 1);
        self.segments[idx].eval(t)
    }

    /// `m` values of the `z = 0` crossings, in time order.
    pub fn m_axis_crossings(&self) -> Vec<f64> {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::MAxisCrossing)
            .map(|e| e.point.m)
            .collect()
    }

    /// Crossings of the Poincare section `{z = 0, m > 0, dz > 0}` as `(t, m)`.
    pub fn section_hits(&self) -> Vec<(f64, f64)> {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::MAxisCrossing && e.point.m > 0.0)
            .map(|e| (e.t, e.point.m))
            .collect()
    }

    /// Restriction to `[a, b]`, re-timed to start at zero.
    pub fn sub_orbit(&self, a: f64, b: f64) -> Orbit {
        let mut samples: Vec<(f64, PhasePoint)> = vec![(0.0, self.eval(a))];
        for &(t, p) in &self.samples {
            if t > a && t < b {
                samples.push((t - a, p));
            }
        }
        samples.push((b - a, self.eval(b)));
        let events = self
            .events
            .iter()
            .filter(|e| e.t >= a && e.t <= b)
            .map(|e| Event { t: e.t - a, ..*e })
            .collect();
        let mut segments = Vec::new();
        for seg in &self.segments {
            if seg.t1 <= a || seg.t0 >= b {
                continue;
            }
            let s = seg.sliced(seg.t0.max(a), seg.t1.min(b));
            segments.push(DenseSegment { t0: s.t0 - a, t1: s.t1 - a, coeff: s.coeff });
        }
        Orbit {
            direction: self.direction,
            samples,
            events,
            segments,
            termination: Termination::Sliced,
        }
    }

    /// Time reversal: sample `t` becomes `T - t` and the direction flips.
    pub fn reversed(&self) -> Orbit {
        let (_, t_end) = self.span();
        let mut samples: Vec<(f64, PhasePoint)> =
            self.samples.iter().rev().map(|&(t, p)| (t_end - t, p)).collect();
        if let Some(first) = samples.first_mut() {
            first.0 = first.0.max(0.0);
        }
        let events = self
            .events
            .iter()
            .rev()
            .map(|e| Event { t: t_end - e.t, ..*e })
            .collect();
        let segments = self.segments.iter().rev().map(|s| s.reversed(t_end)).collect();
        let direction = match self.direction {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        };
        Orbit { direction, samples, events, segments, termination: Termination::Sliced }
    }

    /// Appends `other` (its time origin lands on this orbit's end).
    pub fn concat(mut self, other: &Orbit) -> Orbit {
        let (_, t_end) = self.span();
        let (o_start, _) = other.span();
        let shift = t_end - o_start;
        for &(t, p) in other.samples.iter().skip(1) {
            self.samples.push((t + shift, p));
        }
        for e in &other.events {
            self.events.push(Event { t: e.t + shift, ..*e });
        }
        for s in &other.segments {
            self.segments.push(DenseSegment { t0: s.t0 + shift, t1: s.t1 + shift, coeff: s.coeff });
        }
        self.termination = Termination::Sliced;
        self
    }

    /// For a one-period cycle orbit: the same loop re-anchored at phase `t_c`.
    pub fn rotated_cycle(&self, t_c: f64) -> Orbit {
        let (t_start, t_end) = self.span();
        if t_c <= t_start || t_c >= t_end {
            return self.clone();
        }
        self.sub_orbit(t_c, t_end).concat(&self.sub_orbit(t_start, t_c))
    }

    /// Chord-length of the sampled polyline.
    pub fn arc_length(&self) -> f64 {
        self.samples.windows(2).map(|w| w[0].1.dist(&w[1].1)).sum()
    }
}

/// A terminal watch disc for [`integrate_ctl`].
#[derive(Debug, Clone, Copy)]
pub(crate) struct WatchPoint {
    pub point: PhasePoint,
    pub radius: f64,
}

/// Extra stopping rules layered on top of [`IntegratorOptions`].
#[derive(Debug, Clone, Default)]
pub(crate) struct StopControl {
    pub watchpoints: Vec<WatchPoint>,
    /// Stop after this many section hits (`z = 0`, `m > 0` crossings).
    pub max_section_hits: Option<usize>,
    pub arc_length_cap: Option<f64>,
}

const ARRIVAL_DIST: f64 = 1e-6;
const ARRIVAL_FIELD: f64 = 1e-10;
/// Interior dense samples examined per accepted step for event candidates.
const EVENT_SAMPLES: usize = 16;

/// Integrates the field from `p0` until `t_max`, box exit, or arrival at a
/// fixed point. `z = 0` crossings are located on the dense output to full
/// precision and the integration restarts on the new branch.
pub fn integrate(
    params: &ModelParams,
    p0: PhasePoint,
    opts: &IntegratorOptions,
    direction: Direction,
) -> Result<Orbit> {
    integrate_ctl(params, p0, opts, direction, &StopControl::default())
}

pub(crate) fn integrate_ctl(
    params: &ModelParams,
    p0: PhasePoint,
    opts: &IntegratorOptions,
    direction: Direction,
    ctl: &StopControl,
) -> Result<Orbit> {
    opts.validate()?;
    if !(p0.z.is_finite() && p0.m.is_finite()) {
        return Err(Error::InvalidParams(format!("initial point {p0} is not finite")));
    }
    let fps = fixed_points(params).ok();
    if let Some(fps) = &fps {
        for fp in fps {
            if !opts.bounds.contains(&fp.location) {
                return Err(Error::InvalidParams(format!(
                    "bounding box must contain the fixed point at {}",
                    fp.location
                )));
            }
        }
    }

    let dir = direction.sign();
    let mut orbit = Orbit {
        direction,
        samples: vec![(0.0, p0)],
        events: Vec::new(),
        segments: Vec::new(),
        termination: Termination::TMax,
    };

    // Immediate arrival: starting at (or numerically on) a fixed point.
    if let Some(fps) = &fps {
        if let Some(fp) = arrival(params, &p0, fps) {
            orbit.termination = Termination::FixedPointArrival(fp);
            return Ok(orbit);
        }
    }

    let mut t = 0.0;
    let mut y: V2 = [p0.z, p0.m];
    let mut branch = initial_branch(&p0, dir);
    let rhs = |branch: Branch| {
        move |_t: f64, y: &V2| -> V2 {
            let p = PhasePoint::new(y[0], y[1]);
            let (dz, dm) = vector_field_on(params, &p, branch);
            [dir * dz, dir * dm]
        }
    };
    let mut f = rhs(branch);
    let mut k1 = f(t, &y);
    let mut h = dopri::initial_step(&y, &k1, opts.rel_tol, opts.abs_tol, opts.max_step);
    let mut arc = 0.0;
    let mut section_hits = 0usize;
    let mut rejected_in_a_row = 0usize;

    'outer: while t < opts.t_max {
        h = h.min(opts.max_step).min(opts.t_max - t);
        let step = dopri::step(&f, t, &y, &k1, h, opts.rel_tol, opts.abs_tol);
        if step.error > 1.0 {
            let factor =
                (dopri::STEP_SAFETY * step.error.powf(-0.2)).max(dopri::STEP_SHRINK_MIN);
            h *= factor;
            rejected_in_a_row += 1;
            if h < 1e-14 * (1.0 + t.abs()) || rejected_in_a_row > 200 {
                return Err(Error::Stiffness { t, z: y[0], m: y[1] });
            }
            continue;
        }
        rejected_in_a_row = 0;
        let h_next = h
            * (dopri::STEP_SAFETY * step.error.max(1e-10).powf(-0.2))
                .clamp(dopri::STEP_SHRINK_MIN, dopri::STEP_GROW_MAX);

        // Scan the dense output for the earliest hard event in (0, 1].
        let seg_z = step.dense[0];
        let seg_m = step.dense[1];
        let sign = branch.sign();
        let z_scale = eval_poly(&seg_z, 0.0).abs().max(eval_poly(&seg_z, 1.0).abs()).max(1e-9);
        let mut theta_branch: Option<f64> = None;
        {
            let g = |theta: f64| sign * eval_poly(&seg_z, theta);
            let mut prev_theta = 0.0;
            for i in 1..=EVENT_SAMPLES {
                let theta = i as f64 / EVENT_SAMPLES as f64;
                if g(theta) < -1e-14 * z_scale {
                    let (mut lo, mut hi) = (prev_theta, theta);
                    for _ in 0..80 {
                        let mid = 0.5 * (lo + hi);
                        if g(mid) < -1e-14 * z_scale {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    theta_branch = Some(hi);
                    break;
                }
                prev_theta = theta;
            }
        }
        let mut theta_box: Option<f64> = None;
        {
            let inside = |theta: f64| {
                let p = PhasePoint::new(eval_poly(&seg_z, theta), eval_poly(&seg_m, theta));
                opts.bounds.contains(&p)
            };
            let mut prev = 0.0;
            for i in 1..=EVENT_SAMPLES {
                let theta = i as f64 / EVENT_SAMPLES as f64;
                if !inside(theta) {
                    let (mut lo, mut hi) = (prev, theta);
                    for _ in 0..80 {
                        let mid = 0.5 * (lo + hi);
                        if inside(mid) {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    theta_box = Some(hi);
                    break;
                }
                prev = theta;
            }
        }
        let mut theta_watch: Option<(f64, usize)> = None;
        for (w_idx, w) in ctl.watchpoints.iter().enumerate() {
            let inside = |theta: f64| {
                let p = PhasePoint::new(eval_poly(&seg_z, theta), eval_poly(&seg_m, theta));
                p.dist(&w.point) < w.radius
            };
            let mut prev = 0.0;
            for i in 1..=EVENT_SAMPLES {
                let theta = i as f64 / EVENT_SAMPLES as f64;
                if inside(theta) {
                    let (mut lo, mut hi) = (prev, theta);
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        if inside(mid) {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    if theta_watch.map(|(tw, _)| hi < tw).unwrap_or(true) {
                        theta_watch = Some((hi, w_idx));
                    }
                    break;
                }
                prev = theta;
            }
        }

        enum Hard {
            None,
            BranchFlip(f64),
            BoxExit(f64),
            Watch(f64, usize),
        }
        let mut hard = Hard::None;
        let mut theta_cut = 1.0;
        if let Some(tb) = theta_branch {
            hard = Hard::BranchFlip(tb);
            theta_cut = tb;
        }
        if let Some(tb) = theta_box {
            if tb < theta_cut {
                hard = Hard::BoxExit(tb);
                theta_cut = tb;
            }
        }
        if let Some((tw, idx)) = theta_watch {
            if tw < theta_cut {
                hard = Hard::Watch(tw, idx);
                theta_cut = tw;
            }
        }

        // Soft events on the retained piece: z-axis (m = 0) crossings.
        {
            let mut prev_theta = 0.0;
            let mut prev_val = eval_poly(&seg_m, 0.0);
            for i in 1..=EVENT_SAMPLES {
                let theta = (i as f64 / EVENT_SAMPLES as f64).min(theta_cut);
                if theta <= prev_theta {
                    break;
                }
                let val = eval_poly(&seg_m, theta);
                if prev_val != 0.0 && prev_val * val < 0.0 {
                    let (mut lo, mut hi) = (prev_theta, theta);
                    let mut flo = prev_val;
                    for _ in 0..80 {
                        let mid = 0.5 * (lo + hi);
                        let fmid = eval_poly(&seg_m, mid);
                        if flo * fmid <= 0.0 {
                            hi = mid;
                        } else {
                            lo = mid;
                            flo = fmid;
                        }
                    }
                    let theta_ev = 0.5 * (lo + hi);
                    orbit.events.push(Event {
                        t: t + theta_ev * h,
                        kind: EventKind::ZAxisCrossing,
                        point: PhasePoint::new(eval_poly(&seg_z, theta_ev), 0.0),
                    });
                }
                prev_theta = theta;
                prev_val = val;
            }
        }

        // Commit the retained piece.
        let t_cut = t + theta_cut * h;
        let cut_point =
            PhasePoint::new(eval_poly(&seg_z, theta_cut), eval_poly(&seg_m, theta_cut));
        let coeff = if theta_cut < 1.0 {
            [poly_affine(&seg_z, 0.0, theta_cut), poly_affine(&seg_m, 0.0, theta_cut)]
        } else {
            [seg_z, seg_m]
        };
        orbit.segments.push(DenseSegment { t0: t, t1: t_cut, coeff });
        arc += cut_point.dist(&PhasePoint::new(y[0], y[1]));

        match hard {
            Hard::BranchFlip(_) => {
                let m_ev = cut_point.m;
                let p_ev = PhasePoint::new(0.0, m_ev);
                orbit.samples.push((t_cut, p_ev));
                orbit.events.push(Event { t: t_cut, kind: EventKind::MAxisCrossing, point: p_ev });
                if m_ev > 0.0 {
                    section_hits += 1;
                    if ctl.max_section_hits.map(|cap| section_hits >= cap).unwrap_or(false) {
                        orbit.termination = Termination::SectionLimit;
                        break 'outer;
                    }
                }
                t = t_cut;
                y = [0.0, m_ev];
                branch = if dir * 2.0 * m_ev >= 0.0 { Branch::Pos } else { Branch::Neg };
                f = rhs(branch);
                k1 = f(t, &y);
                h = h_next.max(1e-12);
            }
            Hard::BoxExit(_) => {
                orbit.samples.push((t_cut, cut_point));
                orbit.events.push(Event {
                    t: t_cut,
                    kind: EventKind::BoxExit,
                    point: cut_point,
                });
                orbit.termination = Termination::BoxExit;
                break 'outer;
            }
            Hard::Watch(_, idx) => {
                orbit.samples.push((t_cut, cut_point));
                orbit.events.push(Event {
                    t: t_cut,
                    kind: EventKind::NearPoint,
                    point: cut_point,
                });
                orbit.termination = Termination::NearStop(idx);
                break 'outer;
            }
            Hard::None => {
                orbit.samples.push((t_cut, cut_point));
                t = t_cut;
                y = step.y_new;
                k1 = step.k_new;
                h = h_next;
                if let Some(fps) = &fps {
                    let p = PhasePoint::new(y[0], y[1]);
                    if let Some(fp) = arrival(params, &p, fps) {
                        orbit.termination = Termination::FixedPointArrival(fp);
                        break 'outer;
                    }
                }
            }
        }

        if ctl.arc_length_cap.map(|cap| arc >= cap).unwrap_or(false) {
            orbit.termination = Termination::ArcCap;
            break 'outer;
        }
        if t >= opts.t_max {
            orbit.termination = Termination::TMax;
            break 'outer;
        }
    }
    Ok(orbit)
}

fn initial_branch(p: &PhasePoint, dir: f64) -> Branch {
    if p.z > 0.0 {
        Branch::Pos
    } else if p.z < 0.0 {
        Branch::Neg
    } else if dir * p.m >= 0.0 {
        Branch::Pos
    } else {
        Branch::Neg
    }
}

fn arrival(params: &ModelParams, p: &PhasePoint, fps: &[FixedPointInfo]) -> Option<FixedPointId> {
    for fp in fps {
        if p.dist(&fp.location) < ARRIVAL_DIST && field_norm(params, p) < ARRIVAL_FIELD {
            return Some(fp.id);
        }
    }
    None
}

/// Long-time fate of the forward orbit through a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Attractor {
    FixedPoint(FixedPointId),
    Cycle,
    Unbounded,
    Undetermined,
}

impl fmt::Display for Attractor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Attractor::FixedPoint(id) => write!(f, "fixed_point:{id}"),
            Attractor::Cycle => write!(f, "cycle"),
            Attractor::Unbounded => write!(f, "unbounded"),
            Attractor::Undetermined => write!(f, "undetermined"),
        }
    }
}

/// Successive section returns closer than this mean the orbit is periodic.
const CYCLE_RETURN_TOL: f64 = 1e-8;
/// A box-exiting orbit that approached a saddle closer than this triggers the
/// separatrix straddle test.
const SADDLE_TRIGGER_DIST: f64 = 0.3;
/// Width of the straddle test; points within this offset of a stable manifold
/// classify as converging to its saddle.
const STRADDLE_ETA: f64 = 1e-6;

pub(crate) struct ClassifyReport {
    pub attractor: Attractor,
    pub orbit: Orbit,
}

/// Classifies the forward orbit through `p0`.
///
/// Arrival at a saddle cannot be observed by forward integration alone: the
/// transverse error grows like `exp(lambda_u t)` while the approach contracts
/// like `exp(-lambda_s t)`, so even a shooting-refined start leaves the
/// saddle neighborhood at a distance far above the arrival tolerance. A
/// box-exiting orbit that passed near a saddle is therefore re-examined with
/// a straddle test: if the orbits from `z0 +- eta` take different exits, `p0`
/// lies on the stable manifold to within `eta` and converges to the saddle.
pub fn classify_orbit(
    params: &ModelParams,
    p0: PhasePoint,
    opts: &IntegratorOptions,
) -> Result<Attractor> {
    classify_with_orbit(params, p0, opts).map(|r| r.attractor)
}

pub(crate) fn classify_with_orbit(
    params: &ModelParams,
    p0: PhasePoint,
    opts: &IntegratorOptions,
) -> Result<ClassifyReport> {
    let fps = fixed_points(params)?;
    let saddles: Vec<&FixedPointInfo> =
        fps.iter().filter(|fp| fp.class == StabilityClass::Saddle).collect();

    let ctl = StopControl { max_section_hits: Some(1000), ..Default::default() };
    let orbit = integrate_ctl(params, p0, opts, Direction::Forward, &ctl)?;

    let attractor = match orbit.termination {
        Termination::FixedPointArrival(id) => Attractor::FixedPoint(id),
        Termination::TMax | Termination::SectionLimit => {
            if converged_returns(&orbit) {
                Attractor::Cycle
            } else {
                Attractor::Undetermined
            }
        }
        Termination::BoxExit => {
            let near = closest_saddle_approach(&orbit, &saddles);
            match near {
                Some((id, dist)) if dist < SADDLE_TRIGGER_DIST => {
                    if straddles_manifold(params, &p0, opts)? {
                        Attractor::FixedPoint(id)
                    } else {
                        Attractor::Unbounded
                    }
                }
                _ => Attractor::Unbounded,
            }
        }
        _ => Attractor::Undetermined,
    };
    Ok(ClassifyReport { attractor, orbit })
}

fn converged_returns(orbit: &Orbit) -> bool {
    let hits = orbit.section_hits();
    hits.windows(2).any(|w| (w[1].1 - w[0].1).abs() <= CYCLE_RETURN_TOL)
}

fn closest_saddle_approach(
    orbit: &Orbit,
    saddles: &[&FixedPointInfo],
) -> Option<(FixedPointId, f64)> {
    let mut best: Option<(FixedPointId, f64)> = None;
    for s in saddles {
        let mut min_dist = f64::INFINITY;
        for seg in &orbit.segments {
            for i in 0..=8 {
                let t = seg.t0 + (seg.t1 - seg.t0) * i as f64 / 8.0;
                min_dist = min_dist.min(seg.eval(t).dist(&s.location));
            }
        }
        for (_, p) in &orbit.samples {
            min_dist = min_dist.min(p.dist(&s.location));
        }
        if best.map(|(_, d)| min_dist < d).unwrap_or(true) {
            best = Some((s.id, min_dist));
        }
    }
    best
}

/// Coarse fate fingerprint used by the straddle test: which box edge the
/// orbit leaves through and after how many section hits.
#[derive(Debug, PartialEq, Eq)]
enum Fate {
    Exit(u8, usize),
    Loops,
    Arrived(FixedPointId),
    Timeout,
}

fn orbit_fate(params: &ModelParams, p0: PhasePoint, opts: &IntegratorOptions) -> Result<Fate> {
    let ctl = StopControl { max_section_hits: Some(64), ..Default::default() };
    let orbit = integrate_ctl(params, p0, opts, Direction::Forward, &ctl)?;
    Ok(match orbit.termination {
        Termination::FixedPointArrival(id) => Fate::Arrived(id),
        Termination::SectionLimit => Fate::Loops,
        Termination::BoxExit => {
            let p = orbit.end();
            let b = &opts.bounds;
            let margins = [
                (p.z - b.z_min).abs(),
                (b.z_max - p.z).abs(),
                (p.m - b.m_min).abs(),
                (b.m_max - p.m).abs(),
            ];
            let edge = margins
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i as u8)
                .unwrap_or(0);
            Fate::Exit(edge, orbit.section_hits().len())
        }
        _ => {
            if converged_returns(&orbit) {
                Fate::Loops
            } else {
                Fate::Timeout
            }
        }
    })
}

fn straddles_manifold(
    params: &ModelParams,
    p0: &PhasePoint,
    opts: &IntegratorOptions,
) -> Result<bool> {
    let eta = STRADDLE_ETA * p0.z.abs().max(1.0);
    let lo = orbit_fate(params, PhasePoint::new(p0.z - eta, p0.m), opts)?;
    let hi = orbit_fate(params, PhasePoint::new(p0.z + eta, p0.m), opts)?;
    Ok(lo != hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    fn constant(lambda: f64, mu: f64) -> ModelParams {
        ModelParams::constant(lambda, mu).unwrap()
    }

    #[test]
    fn origin_is_a_constant_orbit() {
        let params = constant(1.0, 0.5);
        let orbit =
            integrate(&params, PhasePoint::ORIGIN, &IntegratorOptions::default(), Direction::Forward)
                .unwrap();
        assert_eq!(orbit.termination, Termination::FixedPointArrival(FixedPointId::Origin));
        assert_eq!(orbit.eval(3.0), PhasePoint::ORIGIN);
    }

    #[test]
    fn events_sit_on_their_surfaces() {
        let params = constant(1.0, 1.0);
        let orbit = integrate(
            &params,
            PhasePoint::new(-0.4, 0.3),
            &IntegratorOptions { t_max: 12.0, ..Default::default() },
            Direction::Forward,
        )
        .unwrap();
        let mut seen_m_axis = 0;
        let mut seen_z_axis = 0;
        for e in &orbit.events {
            match e.kind {
                EventKind::MAxisCrossing => {
                    assert_eq!(e.point.z, 0.0);
                    // Dense output at the event time agrees with the surface.
                    assert!(orbit.eval(e.t).z.abs() <= 1e-10);
                    seen_m_axis += 1;
                }
                EventKind::ZAxisCrossing => {
                    assert_eq!(e.point.m, 0.0);
                    assert!(orbit.eval(e.t).m.abs() <= 1e-10);
                    seen_z_axis += 1;
                }
                _ => {}
            }
        }
        assert!(seen_m_axis >= 1, "spiral orbit must cross z = 0");
        assert!(seen_z_axis >= 1, "spiral orbit must cross m = 0");
    }

    #[test]
    fn sample_times_strictly_monotone() {
        let params = constant(1.0, 1.0);
        let orbit = integrate(
            &params,
            PhasePoint::new(0.2, 0.1),
            &IntegratorOptions { t_max: 8.0, ..Default::default() },
            Direction::Forward,
        )
        .unwrap();
        assert!(orbit.samples.windows(2).all(|w| w[1].0 > w[0].0));
    }

    #[test]
    fn dense_output_matches_samples() {
        let params = constant(0.7, 0.4);
        let orbit = integrate(
            &params,
            PhasePoint::new(0.5, -0.2),
            &IntegratorOptions { t_max: 4.0, ..Default::default() },
            Direction::Forward,
        )
        .unwrap();
        for &(t, p) in &orbit.samples {
            let q = orbit.eval(t);
            assert!(p.dist(&q) <= 1e-9, "dense mismatch at t = {t}: {p} vs {q}");
        }
    }

    #[test]
    fn reversal_round_trips() {
        let params = constant(1.0, 1.0);
        let orbit = integrate(
            &params,
            PhasePoint::new(0.3, 0.25),
            &IntegratorOptions { t_max: 3.0, ..Default::default() },
            Direction::Forward,
        )
        .unwrap();
        let rev = orbit.reversed();
        let (a, b) = orbit.span();
        for i in 0..=20 {
            let t = a + (b - a) * i as f64 / 20.0;
            let p = orbit.eval(t);
            let q = rev.eval(b - t);
            assert!(p.dist(&q) <= 1e-12);
        }
    }

    #[test]
    fn stiffness_error_reports_last_state() {
        let params = constant(1.0, 1.0);
        let opts = IntegratorOptions { rel_tol: 5e-16, abs_tol: 1e-300, ..Default::default() };
        let res = integrate(&params, PhasePoint::new(0.3, 0.25), &opts, Direction::Forward);
        assert!(matches!(res, Err(Error::Stiffness { .. })));
    }

    #[test]
    fn box_exit_is_detected() {
        let params = constant(1.0, 0.1);
        // Far off the stable manifolds: escapes.
        let orbit = integrate(
            &params,
            PhasePoint::new(5.0, -0.5),
            &IntegratorOptions::default(),
            Direction::Forward,
        )
        .unwrap();
        assert_eq!(orbit.termination, Termination::BoxExit);
        let p = orbit.end();
        assert!(p.z >= 49.999);
    }
}
