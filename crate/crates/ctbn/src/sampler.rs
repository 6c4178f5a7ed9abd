//! Exact Gibbs sampling of component trajectories.
//!
//! One Gibbs step resamples the full trajectory of a single component
//! conditioned on the trajectories of its Markov blanket and its own
//! evidence. Within each unobserved window the conditional process is
//! Markovian but inhomogeneous: its generator is constant between
//! transition times of the blanket, where it is the *reduced rate
//! matrix* — the component's conditional rates with the children's
//! diagonal rates added to the diagonal. The procedure is
//!
//! 1. backward propagation of likelihood messages over the blanket
//!    timeline (propagator matrices per segment, diagonal child-rate
//!    scalers at boundaries where a child transitions),
//! 2. forward sampling of transition times by inverse-transform from the
//!    conditional holding CDF `F(t)`, located by a segment scan plus
//!    dyadic bisection, then of the post-transition state.
//!
//! Messages and forward scalars are carried as (vector, log-scale)
//! pairs; blanket-state constants shared by every state of the sampled
//! component cancel under normalization and are never computed.

use crate::linalg::{self, LinalgError};
use crate::model::{CtbnModel, ModelError};
use crate::trajectory::{
    ComponentEvidence, ComponentTrajectory, Evidence, JointTrajectory, TrajectoryError,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

/// Bisection depth for transition-time inversion: the sampled time is
/// accurate to `2^-L` of the bracketing segment length.
pub const DEFAULT_BISECTION_DEPTH: u32 = 40;

const MAX_REDRAWS: usize = 64;
const MAX_TRANSITIONS_PER_WINDOW: usize = 100_000;
/// Relative slack for detecting a sampled time colliding with a segment
/// boundary; collisions are measure-zero and resolved by redrawing.
const BOUNDARY_COLLISION_TOL: f64 = 1e-13;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("evidence for component {component} has probability zero given the blanket")]
    ZeroProbabilityEvidence { component: usize },
    #[error("evidence for component {component} is inconsistent at t = {time}")]
    InconsistentEvidence { component: usize, time: f64 },
    #[error("component {child} is not a child of component {component}")]
    NotAChild { component: usize, child: usize },
    #[error("sampling degenerated: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

/// Reduced rate matrix of a component given a blanket assignment:
/// off-diagonal entries are the component's conditional rates, diagonal
/// entries additionally absorb each child's diagonal rate. Rows sum to
/// the (nonpositive) child diagonal total, so this is a sub-stochastic
/// generator in general. The blanket-constant additive term is dropped;
/// it cancels under normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedRateMatrix(pub DMatrix<f64>);

impl ReducedRateMatrix {
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// Builds the reduced rate matrix for component `i`. `assign` is a full
/// joint assignment; the entry for `i` itself is ignored (the matrix
/// ranges over it).
pub fn reduced_rate_matrix(model: &CtbnModel, i: usize, assign: &[usize]) -> ReducedRateMatrix {
    let d = model.state_size(i);
    let u_i = model.parent_state_index(i, assign);
    let mut r = model.cim(i, u_i).clone();
    let mut probe = assign.to_vec();
    for a in 0..d {
        probe[i] = a;
        let mut extra = 0.0;
        for &j in model.children(i) {
            let u_j = model.parent_state_index(j, &probe);
            let x_j = assign[j];
            extra += model.cim(j, u_j)[(x_j, x_j)];
        }
        r[(a, a)] += extra;
    }
    ReducedRateMatrix(r)
}

/// Diagonal scaler applied when child `j` transitions `from -> to`:
/// entry `a` is the child's transition rate as a function of the sampled
/// component being in state `a`.
pub fn child_transition_scaler(
    model: &CtbnModel,
    i: usize,
    j: usize,
    from: usize,
    to: usize,
    assign: &[usize],
) -> Result<Vec<f64>, SamplerError> {
    if !model.children(i).contains(&j) {
        return Err(SamplerError::NotAChild { component: i, child: j });
    }
    let mut probe = assign.to_vec();
    Ok((0..model.state_size(i))
        .map(|a| {
            probe[i] = a;
            let u_j = model.parent_state_index(j, &probe);
            model.cim(j, u_j)[(from, to)]
        })
        .collect())
}

/// exp(dt R), entrywise clamped against small negative roundoff.
pub fn segment_propagator(r: &ReducedRateMatrix, dt: f64) -> Result<DMatrix<f64>, SamplerError> {
    let mut s = linalg::matrix_exponential(&r.0, dt)?;
    for v in s.iter_mut() {
        if *v < 0.0 {
            *v = if *v > -1e-12 { 0.0 } else { return Err(SamplerError::Degenerate(
                format!("propagator entry {v} below clamp tolerance"),
            )) };
        }
    }
    Ok(s)
}

/// One constant-blanket segment of a sampling window.
#[derive(Debug, Clone)]
pub struct Segment {
    pub rate: ReducedRateMatrix,
    /// Child-rate scaler at this segment's right boundary. `None` at the
    /// window end and at boundaries where only non-child blanket members
    /// transition (their rates do not depend on the sampled component
    /// and cancel under normalization).
    pub end_scaler: Option<Vec<f64>>,
}

/// Segment boundaries and per-segment dynamics for one sampling window:
/// boundaries are the blanket components' transition times inside the
/// window plus the window ends.
#[derive(Debug, Clone)]
pub struct SegmentTimeline {
    pub boundaries: Vec<f64>,
    pub segments: Vec<Segment>,
}

impl SegmentTimeline {
    pub fn start(&self) -> f64 {
        self.boundaries[0]
    }

    pub fn end(&self) -> f64 {
        *self.boundaries.last().unwrap()
    }

    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn dim(&self) -> usize {
        self.segments[0].rate.dim()
    }

    /// Homogeneous single-segment timeline (used by the initialization
    /// pass, which samples against a fixed conditional rate matrix).
    pub fn homogeneous(rate: DMatrix<f64>, start: f64, end: f64) -> Self {
        SegmentTimeline {
            boundaries: vec![start, end],
            segments: vec![Segment { rate: ReducedRateMatrix(rate), end_scaler: None }],
        }
    }

    /// Segment index used to evaluate quantities at `t` (left limit at
    /// interior boundaries).
    fn eval_segment(&self, t: f64) -> usize {
        let mut k = 0;
        while k + 1 < self.segments.len() && t > self.boundaries[k + 1] {
            k += 1;
        }
        k
    }

    /// Segment whose half-open span `[b_k, b_{k+1})` contains `t`.
    fn containing_segment(&self, t: f64) -> usize {
        let mut k = 0;
        while k + 1 < self.segments.len() && t >= self.boundaries[k + 1] {
            k += 1;
        }
        k
    }
}

/// Builds the timeline of component `i` over `window` from the current
/// joint trajectory. Transitions of non-blanket components are ignored.
pub fn build_timeline(
    model: &CtbnModel,
    i: usize,
    joint: &JointTrajectory,
    window: (f64, f64),
) -> Result<SegmentTimeline, SamplerError> {
    let (w0, w1) = window;
    let mb = model.markov_blanket(i)?;
    // (time, component, from, to)
    let mut events: Vec<(f64, usize, usize, usize)> = Vec::new();
    for &j in &mb {
        let traj = &joint.components[j];
        for &(tau, to) in &traj.transitions {
            if tau > w0 && tau < w1 {
                events.push((tau, j, traj.state_before(tau), to));
            }
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut boundaries = vec![w0];
    let mut segments = Vec::new();
    let mut idx = 0;
    let children = model.children(i);
    while idx <= events.len() {
        let seg_start = *boundaries.last().unwrap();
        let assign = joint.state_at(seg_start);
        let rate = reduced_rate_matrix(model, i, &assign);
        // group events sharing the next boundary time (simultaneous
        // blanket transitions only arise from evidence artifacts)
        let mut scaler: Option<Vec<f64>> = None;
        let mut next_t = w1;
        if idx < events.len() {
            next_t = events[idx].0;
            while idx < events.len() && events[idx].0 == next_t {
                let (_, j, from, to) = events[idx];
                if children.contains(&j) {
                    let s = child_transition_scaler(model, i, j, from, to, &assign)?;
                    scaler = Some(match scaler {
                        None => s,
                        Some(prev) => prev.iter().zip(&s).map(|(a, b)| a * b).collect(),
                    });
                }
                idx += 1;
            }
        } else {
            idx += 1;
        }
        let at_end = next_t >= w1;
        segments.push(Segment { rate, end_scaler: if at_end { None } else { scaler } });
        boundaries.push(if at_end { w1 } else { next_t });
        if at_end {
            break;
        }
    }
    Ok(SegmentTimeline { boundaries, segments })
}

/// End condition of a sampling window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terminal {
    /// Point evidence pins the state at the window end.
    Pinned(usize),
    /// No observation at the window end: terminal message is all-ones.
    Free,
}

/// Nonnegative vector rescaled to max-norm 1 with the scale carried in
/// log space.
#[derive(Debug, Clone)]
pub struct ScaledVector {
    pub v: DVector<f64>,
    pub log_scale: f64,
}

impl ScaledVector {
    fn normalized(mut v: DVector<f64>, mut log_scale: f64) -> Option<Self> {
        let m = v.amax();
        if !(m.is_finite() && m > 0.0) {
            return None;
        }
        v /= m;
        log_scale += m.ln();
        Some(ScaledVector { v, log_scale })
    }

    /// log of entry `i`; `-inf` for a zero entry.
    pub fn log_entry(&self, i: usize) -> f64 {
        self.v[i].ln() + self.log_scale
    }
}

/// Backward messages over a window: for each segment `k`, the vector to
/// which `exp((b_{k+1} - t) R_k)` is applied when evaluating the future
/// likelihood at `t` inside the segment.
#[derive(Debug, Clone)]
pub struct BackwardMessages {
    within: Vec<ScaledVector>,
    at_start: ScaledVector,
}

impl BackwardMessages {
    pub fn at_start(&self) -> &ScaledVector {
        &self.at_start
    }
}

/// Right-to-left recursion: start from the terminal condition, multiply
/// by each segment's propagator and, at interior boundaries where a
/// child transitioned, by the diagonal child scaler.
pub fn backward_pass(
    timeline: &SegmentTimeline,
    terminal: Terminal,
) -> Result<BackwardMessages, SamplerError> {
    let d = timeline.dim();
    let terminal_vec = match terminal {
        Terminal::Pinned(s) => DVector::from_fn(d, |i, _| if i == s { 1.0 } else { 0.0 }),
        Terminal::Free => DVector::from_element(d, 1.0),
    };
    let nseg = timeline.num_segments();
    let zero_err = || SamplerError::Degenerate("backward message vanished".into());
    let mut within = vec![ScaledVector { v: terminal_vec.clone(), log_scale: 0.0 }; nseg];
    within[nseg - 1] = ScaledVector::normalized(terminal_vec, 0.0).ok_or_else(zero_err)?;
    for k in (0..nseg.saturating_sub(1)).rev() {
        let dt = timeline.boundaries[k + 2] - timeline.boundaries[k + 1];
        let prop = segment_propagator(&timeline.segments[k + 1].rate, dt)?;
        let msg = &prop * &within[k + 1].v;
        let mut w = msg;
        if let Some(scaler) = &timeline.segments[k].end_scaler {
            for (x, s) in w.iter_mut().zip(scaler) {
                *x *= s;
            }
        }
        within[k] =
            ScaledVector::normalized(w, within[k + 1].log_scale).ok_or_else(zero_err)?;
    }
    let dt0 = timeline.boundaries[1] - timeline.boundaries[0];
    let prop0 = segment_propagator(&timeline.segments[0].rate, dt0)?;
    let at_start = ScaledVector::normalized(&prop0 * &within[0].v, within[0].log_scale)
        .ok_or_else(zero_err)?;
    Ok(BackwardMessages { within, at_start })
}

/// Evaluates the window CDF and draws transition times/states for one
/// component over one window, given the timeline and backward messages.
pub struct WindowSampler<'a> {
    timeline: &'a SegmentTimeline,
    messages: &'a BackwardMessages,
    bisection_depth: u32,
}

impl<'a> WindowSampler<'a> {
    pub fn new(timeline: &'a SegmentTimeline, messages: &'a BackwardMessages) -> Self {
        WindowSampler { timeline, messages, bisection_depth: DEFAULT_BISECTION_DEPTH }
    }

    /// Future-likelihood vector at time `t` (left limit at boundaries).
    pub fn future_at(&self, t: f64) -> ScaledVector {
        let k = self.timeline.eval_segment(t);
        let dt = self.timeline.boundaries[k + 1] - t;
        let w = &self.messages.within[k];
        if dt <= 0.0 {
            return w.clone();
        }
        let prop = segment_propagator(&self.timeline.segments[k].rate, dt)
            .expect("propagator of a finite segment");
        ScaledVector::normalized(&prop * &w.v, w.log_scale)
            .unwrap_or_else(|| ScaledVector { v: DVector::zeros(self.timeline.dim()), log_scale: 0.0 })
    }

    /// log of the survival scalar: probability factor for the component
    /// holding state `x0` over `(from, t]`, up to blanket constants.
    fn log_past(&self, x0: usize, from: f64, t: f64) -> f64 {
        let mut acc = 0.0;
        let mut k = self.timeline.containing_segment(from);
        let mut cur = from;
        loop {
            let seg_end = self.timeline.boundaries[k + 1];
            let upto = t.min(seg_end);
            acc += (upto - cur) * self.timeline.segments[k].rate.0[(x0, x0)];
            if t <= seg_end || k + 1 >= self.timeline.num_segments() {
                break;
            }
            if let Some(scaler) = &self.timeline.segments[k].end_scaler {
                acc += scaler[x0].ln(); // -inf when the child rate vanishes
            }
            cur = seg_end;
            k += 1;
        }
        acc
    }

    /// F(t): probability that the component, in state `x0` since `from`,
    /// transitions before `t`. Clamped to [0, 1].
    pub fn cdf(&self, x0: usize, from: f64, t: f64) -> f64 {
        if t <= from {
            return 0.0;
        }
        let lf_from = self.future_at(from).log_entry(x0);
        let lf_t = self.future_at(t).log_entry(x0);
        let lp = self.log_past(x0, from, t);
        (1.0 - (lp + lf_t - lf_from).exp()).clamp(0.0, 1.0)
    }

    /// Inverse-transform sampling of the next transition time: returns
    /// `None` when `xi` exceeds `F(window end)` (the component holds its
    /// state for the rest of the window), otherwise the time `tau` with
    /// `F(tau) = xi` located by a boundary scan and `L`-step bisection.
    pub fn sample_transition_time(&self, x0: usize, from: f64, xi: f64) -> Option<f64> {
        let end = self.timeline.end();
        if xi > self.cdf(x0, from, end) {
            return None;
        }
        let lf_from = self.future_at(from).log_entry(x0);
        let mut k = self.timeline.containing_segment(from);
        let mut lo = from;
        loop {
            let hi = self.timeline.boundaries[k + 1];
            if self.cdf(x0, from, hi) >= xi || k + 1 == self.timeline.num_segments() {
                return Some(self.bisect(x0, from, lf_from, k, lo, hi, xi));
            }
            lo = hi;
            k += 1;
        }
    }

    /// Dyadic bisection inside segment `k`: the propagators for the
    /// halved sub-intervals come from repeated squaring of
    /// `exp(2^-L dt R)`, and the future vector at the moving right edge
    /// is updated incrementally.
    fn bisect(&self, x0: usize, from: f64, lf_from: f64, k: usize, lo: f64, hi: f64, xi: f64) -> f64 {
        let depth = self.bisection_depth as usize;
        let dt = hi - lo;
        if dt <= 0.0 {
            return hi;
        }
        let rate = &self.timeline.segments[k].rate;
        // halvers[l] = exp(2^-(l+1) dt R), l = 0 coarsest. Each level is
        // exponentiated directly: building the ladder by repeated
        // squaring from the finest level doubles rounding error per
        // level (~2^L u overall), while direct exponentials keep every
        // level at machine precision.
        let halvers: Vec<DMatrix<f64>> = (1..=depth as i32)
            .map(|l| {
                segment_propagator(rate, dt * (0.5f64).powi(l))
                    .expect("propagator of a sub-interval")
            })
            .collect();

        let mut lo_t = lo;
        let mut hi_t = hi;
        let mut v_hi = self.future_at(hi);
        for halver in &halvers {
            let mid = hi_t - (hi_t - lo_t) / 2.0;
            let v_mid = ScaledVector::normalized(halver * &v_hi.v, v_hi.log_scale)
                .unwrap_or_else(|| v_hi.clone());
            let f_mid = (1.0
                - (self.log_past(x0, from, mid) + v_mid.log_entry(x0) - lf_from).exp())
            .clamp(0.0, 1.0);
            if f_mid >= xi {
                hi_t = mid;
                v_hi = v_mid;
            } else {
                lo_t = mid;
            }
        }
        (lo_t + hi_t) / 2.0
    }

    /// Categorical distribution of the post-transition state at `tau`:
    /// weight of `x != x0` is the segment's off-diagonal rate times the
    /// future likelihood of `x`.
    pub fn next_state_distribution(&self, x0: usize, tau: f64) -> Vec<f64> {
        let k = self.timeline.eval_segment(tau);
        let rate = &self.timeline.segments[k].rate.0;
        let fut = self.future_at(tau);
        let mut weights: Vec<f64> = (0..self.timeline.dim())
            .map(|x| if x == x0 { 0.0 } else { rate[(x0, x)] * fut.v[x] })
            .collect();
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            for w in weights.iter_mut() {
                *w /= total;
            }
        }
        weights
    }

    pub fn sample_next_state(
        &self,
        x0: usize,
        tau: f64,
        rng: &mut impl Rng,
    ) -> Result<usize, SamplerError> {
        let probs = self.next_state_distribution(x0, tau);
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Err(SamplerError::Degenerate(
                "all next-state weights are zero".into(),
            ));
        }
        let mut u = rng.gen::<f64>();
        for (x, &p) in probs.iter().enumerate() {
            u -= p;
            if u <= 0.0 {
                return Ok(x);
            }
        }
        Ok(probs.len() - 1)
    }
}

// ---------------------------------------------------------------------
// Windows, evidence bookkeeping and the Gibbs chain.
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
struct Span {
    start: f64,
    end: f64,
    state: usize,
}

#[derive(Debug, Clone, Copy)]
struct SamplingWindow {
    start: f64,
    end: f64,
    start_pin: Option<usize>,
    end_pin: Option<usize>,
}

/// Pinned coverage from evidence: interval observations plus point
/// observations as zero-length spans, merged and checked for
/// consistency.
fn pinned_coverage(
    component: usize,
    ev: &ComponentEvidence,
    horizon: f64,
) -> Result<Vec<Span>, SamplerError> {
    let mut spans: Vec<Span> = ev
        .intervals
        .iter()
        .map(|&(s, e, state)| Span { start: s, end: e, state })
        .collect();
    for &(t, state) in &ev.points {
        let covered = ev.intervals.iter().any(|&(s, e, _)| t >= s && t <= e);
        if !covered {
            spans.push(Span { start: t, end: t, state });
        }
    }
    let _ = horizon;
    spans.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
    let mut merged: Vec<Span> = Vec::new();
    for s in spans {
        match merged.last_mut() {
            Some(last) if s.start <= last.end => {
                if s.state != last.state {
                    return Err(SamplerError::InconsistentEvidence {
                        component,
                        time: s.start,
                    });
                }
                last.end = last.end.max(s.end);
            }
            _ => merged.push(s),
        }
    }
    Ok(merged)
}

fn sampling_windows(spans: &[Span], horizon: f64) -> Vec<SamplingWindow> {
    let mut windows = Vec::new();
    let mut cursor = 0.0;
    let mut prev_state: Option<usize> = None;
    for s in spans {
        if s.start > cursor {
            windows.push(SamplingWindow {
                start: cursor,
                end: s.start,
                start_pin: prev_state,
                end_pin: Some(s.state),
            });
        }
        cursor = s.end;
        prev_state = Some(s.state);
    }
    if cursor < horizon {
        windows.push(SamplingWindow {
            start: cursor,
            end: horizon,
            start_pin: prev_state,
            end_pin: None,
        });
    }
    windows
}

enum StartCondition<'a> {
    Pinned(usize),
    FromPrior(&'a [f64]),
}

/// Samples one window: backward pass once, then alternating transition
/// time and next-state draws until the holding time runs past the
/// window end.
fn sample_window(
    component: usize,
    timeline: &SegmentTimeline,
    terminal: Terminal,
    start: StartCondition<'_>,
    rng: &mut impl Rng,
) -> Result<(usize, Vec<(f64, usize)>), SamplerError> {
    let messages = backward_pass(timeline, terminal)
        .map_err(|_| SamplerError::ZeroProbabilityEvidence { component })?;
    let ws = WindowSampler::new(timeline, &messages);
    let x0 = match start {
        StartCondition::Pinned(s) => {
            if messages.at_start().v[s] <= 0.0 {
                return Err(SamplerError::ZeroProbabilityEvidence { component });
            }
            s
        }
        StartCondition::FromPrior(prior) => {
            let weights: Vec<f64> = prior
                .iter()
                .zip(messages.at_start().v.iter())
                .map(|(p, m)| p * m)
                .collect();
            let total: f64 = weights.iter().sum();
            if total <= 0.0 {
                return Err(SamplerError::ZeroProbabilityEvidence { component });
            }
            let mut u = rng.gen::<f64>() * total;
            let mut pick = weights.len() - 1;
            for (x, &w) in weights.iter().enumerate() {
                u -= w;
                if u <= 0.0 {
                    pick = x;
                    break;
                }
            }
            pick
        }
    };

    let mut transitions = Vec::new();
    let mut cur_t = timeline.start();
    let mut cur_s = x0;
    'outer: loop {
        if transitions.len() > MAX_TRANSITIONS_PER_WINDOW {
            return Err(SamplerError::Degenerate(format!(
                "component {component}: more than {MAX_TRANSITIONS_PER_WINDOW} transitions in one window"
            )));
        }
        let mut accepted: Option<f64> = None;
        for _ in 0..MAX_REDRAWS {
            let xi: f64 = rng.gen();
            if xi == 0.0 {
                continue; // degenerate draw, measure zero
            }
            match ws.sample_transition_time(cur_s, cur_t, xi) {
                None => {
                    // with a pinned unequal end, "none" can only be xi
                    // landing above F(end) = 1 - roundoff; redraw
                    if let Terminal::Pinned(v) = terminal {
                        if v != cur_s {
                            continue;
                        }
                    }
                    break 'outer;
                }
                Some(tau) => {
                    let collides = timeline.boundaries.iter().any(|&b| {
                        (tau - b).abs() <= BOUNDARY_COLLISION_TOL * b.abs().max(1.0)
                    }) || tau <= cur_t;
                    if collides {
                        continue;
                    }
                    accepted = Some(tau);
                    break;
                }
            }
        }
        let tau = accepted.ok_or_else(|| {
            SamplerError::Degenerate(format!(
                "component {component}: no acceptable transition time in {MAX_REDRAWS} draws"
            ))
        })?;
        let next = ws.sample_next_state(cur_s, tau, rng)?;
        transitions.push((tau, next));
        cur_t = tau;
        cur_s = next;
       }
    Ok((x0, transitions))
}

/// Samples component `i`'s full trajectory on [0, T] given the current
/// blanket trajectories in `joint` and the component's own evidence:
/// each maximal unobserved window is sampled independently, pinned
/// regions are copied verbatim.
pub fn sample_component_trajectory(
    model: &CtbnModel,
    i: usize,
    joint: &JointTrajectory,
    evidence_i: &ComponentEvidence,
    rng: &mut impl Rng,
) -> Result<ComponentTrajectory, SamplerError> {
    sample_component_with(model, i, evidence_i, joint.horizon, rng, |window| {
        build_timeline(model, i, joint, window)
    })
}

fn sample_component_with(
    model: &CtbnModel,
    i: usize,
    evidence_i: &ComponentEvidence,
    horizon: f64,
    rng: &mut impl Rng,
    mut timeline_for: impl FnMut((f64, f64)) -> Result<SegmentTimeline, SamplerError>,
) -> Result<ComponentTrajectory, SamplerError> {
    let spans = pinned_coverage(i, evidence_i, horizon)?;
    let windows = sampling_windows(&spans, horizon);

    let mut initial_state = spans.first().filter(|s| s.start == 0.0).map(|s| s.state);
    let mut transitions: Vec<(f64, usize)> = Vec::new();
    let mut last_state = initial_state;
    for w in &windows {
        let timeline = timeline_for((w.start, w.end))?;
        let terminal = match w.end_pin {
            Some(s) => Terminal::Pinned(s),
            None => Terminal::Free,
        };
        let start = match w.start_pin {
            Some(s) => StartCondition::Pinned(s),
            None => StartCondition::FromPrior(model.initial(i)),
        };
        let (x0, trans) = sample_window(i, &timeline, terminal, start, rng)?;
        if w.start == 0.0 && w.start_pin.is_none() {
            initial_state = Some(x0);
        }
        last_state = Some(trans.last().map(|&(_, s)| s).unwrap_or(x0));
        transitions.extend(trans);
    }
    let _ = last_state;
    let initial_state = initial_state
        .or_else(|| spans.first().map(|s| s.state))
        .ok_or_else(|| SamplerError::Degenerate("empty window structure".into()))?;
    Ok(ComponentTrajectory {
        component: i,
        t_start: 0.0,
        t_end: horizon,
        initial_state,
        transitions,
    })
}

/// Sweep order over components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepOrder {
    /// 0..M-1 every sweep.
    Systematic,
    /// Uniformly random permutation each sweep.
    RandomScan,
}

/// One Gibbs sweep: resamples every component once, in place.
pub fn gibbs_sweep(
    model: &CtbnModel,
    joint: &mut JointTrajectory,
    evidence: &Evidence,
    order: SweepOrder,
    rng: &mut impl Rng,
) -> Result<(), SamplerError> {
    let m = model.num_components();
    let mut indices: Vec<usize> = (0..m).collect();
    if order == SweepOrder::RandomScan {
        for k in (1..m).rev() {
            indices.swap(k, rng.gen_range(0..=k));
        }
    }
    for &i in &indices {
        let updated =
            sample_component_trajectory(model, i, joint, &evidence.components[i], rng)?;
        joint.components[i] = updated;
    }
    Ok(())
}

/// Over-dispersed initialization: each component draws a uniformly
/// random parent assignment, adopts the corresponding conditional rate
/// matrix as a homogeneous rate, and samples a trajectory consistent
/// with its own evidence by the same backward-forward machinery.
pub fn initialize_trajectory(
    model: &CtbnModel,
    evidence: &Evidence,
    horizon: f64,
    rng: &mut impl Rng,
) -> Result<JointTrajectory, SamplerError> {
    let mut components = Vec::with_capacity(model.num_components());
    for i in 0..model.num_components() {
        let u = rng.gen_range(0..model.num_parent_states(i));
        let rate = model.cim(i, u).clone();
        let traj = sample_component_with(
            model,
            i,
            &evidence.components[i],
            horizon,
            rng,
            |(s, e)| Ok(SegmentTimeline::homogeneous(rate.clone(), s, e)),
        )?;
        components.push(traj);
    }
    Ok(JointTrajectory { horizon, components })
}

/// Chain configuration for [`run_chain`].
#[derive(Debug, Clone)]
pub struct GibbsOptions {
    pub burn_in: usize,
    pub n_samples: usize,
    /// Sweeps between recorded samples; 0 is treated as 1.
    pub thinning: usize,
    pub order: SweepOrder,
}

impl Default for GibbsOptions {
    fn default() -> Self {
        GibbsOptions { burn_in: 100, n_samples: 100, thinning: 1, order: SweepOrder::Systematic }
    }
}

/// Initializes, burns in, then records `n_samples` trajectories spaced
/// `thinning` sweeps apart.
pub fn run_chain(
    model: &CtbnModel,
    evidence: &Evidence,
    horizon: f64,
    opts: &GibbsOptions,
    rng: &mut impl Rng,
) -> Result<Vec<JointTrajectory>, SamplerError> {
    let mut joint = initialize_trajectory(model, evidence, horizon, rng)?;
    for _ in 0..opts.burn_in {
        gibbs_sweep(model, &mut joint, evidence, opts.order, rng)?;
    }
    let thin = opts.thinning.max(1);
    let mut samples = Vec::with_capacity(opts.n_samples);
    while samples.len() < opts.n_samples {
        for _ in 0..thin {
            gibbs_sweep(model, &mut joint, evidence, opts.order, rng)?;
        }
        samples.push(joint.clone());
    }
    Ok(samples)
}

/// Plain generative (unconditioned) simulation of the CTBN on [0, T].
/// Initial states come from the model's product-form distribution unless
/// `start` pins them.
pub fn sample_generative(
    model: &CtbnModel,
    horizon: f64,
    start: Option<&[usize]>,
    rng: &mut impl Rng,
) -> Result<JointTrajectory, SamplerError> {
    let m = model.num_components();
    let mut state: Vec<usize> = match start {
        Some(s) => s.to_vec(),
        None => (0..m)
            .map(|i| sample_categorical(model.initial(i), rng))
            .collect(),
    };
    let mut components: Vec<ComponentTrajectory> = (0..m)
        .map(|i| ComponentTrajectory::constant(i, 0.0, horizon, state[i]))
        .collect();
    let mut t = 0.0;
    loop {
        let exit_rates: Vec<f64> = (0..m)
            .map(|i| {
                let u = model.parent_state_index(i, &state);
                -model.cim(i, u)[(state[i], state[i])]
            })
            .collect();
        let total: f64 = exit_rates.iter().sum();
        if total <= 0.0 {
            break;
        }
        t += -rng.gen::<f64>().ln() / total;
        if t >= horizon {
            break;
        }
        let i = sample_weighted(&exit_rates, rng);
        let u = model.parent_state_index(i, &state);
        let cim = model.cim(i, u);
        let weights: Vec<f64> = (0..model.state_size(i))
            .map(|b| if b == state[i] { 0.0 } else { cim[(state[i], b)] })
            .collect();
        let b = sample_weighted(&weights, rng);
        components[i].transitions.push((t, b));
        state[i] = b;
    }
    Ok(JointTrajectory { horizon, components })
}

fn sample_categorical(probs: &[f64], rng: &mut impl Rng) -> usize {
    sample_weighted(probs, rng)
}

fn sample_weighted(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 && w > 0.0 {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_fixtures::{coupled_pair, random_rate_matrix};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fixed_y_joint(_model: &CtbnModel, horizon: f64, y_transitions: Vec<(f64, usize)>) -> JointTrajectory {
        JointTrajectory {
            horizon,
            components: vec![
                ComponentTrajectory::constant(0, 0.0, horizon, 0),
                ComponentTrajectory {
                    component: 1,
                    t_start: 0.0,
                    t_end: horizon,
                    initial_state: 0,
                    transitions: y_transitions,
                },
            ],
        }
    }

    #[test]
    fn reduced_matrix_without_children_is_the_cim() {
        // component 1 of a chain 0 -> 1 has no children
        let model = chain2();
        let r = reduced_rate_matrix(&model, 1, &[1, 0]);
        assert_eq!(r.0, *model.cim(1, 1));
    }

    #[test]
    fn reduced_matrix_two_component_diagonal() {
        let model = coupled_pair(3, 5);
        let y = 2;
        let r = reduced_rate_matrix(&model, 0, &[0, y]);
        for a in 0..3 {
            let expected = model.cim(0, y)[(a, a)] + model.cim(1, a)[(y, y)];
            assert_abs_diff_eq!(r.0[(a, a)], expected, epsilon = 1e-15);
            for b in 0..3 {
                if a != b {
                    assert_abs_diff_eq!(r.0[(a, b)], model.cim(0, y)[(a, b)], epsilon = 1e-15);
                }
            }
        }
        // row sums equal the child diagonal contribution
        for a in 0..3 {
            let row: f64 = (0..3).map(|b| r.0[(a, b)]).sum();
            assert_abs_diff_eq!(row, model.cim(1, a)[(y, y)], epsilon = 1e-12);
            assert!(row <= 0.0);
        }
    }

    #[test]
    fn timeline_no_blanket_transitions_is_single_segment() {
        let model = coupled_pair(2, 1);
        let joint = fixed_y_joint(&model, 2.0, vec![]);
        let tl = build_timeline(&model, 0, &joint, (0.0, 2.0)).unwrap();
        assert_eq!(tl.num_segments(), 1);
        assert_eq!(tl.boundaries, vec![0.0, 2.0]);
    }

    #[test]
    fn timeline_four_y_transitions_gives_five_segments() {
        let model = coupled_pair(2, 1);
        let joint =
            fixed_y_joint(&model, 3.0, vec![(0.5, 1), (1.0, 0), (1.8, 1), (2.5, 0)]);
        let tl = build_timeline(&model, 0, &joint, (0.0, 3.0)).unwrap();
        assert_eq!(tl.num_segments(), 5);
        assert!(tl.segments[..4].iter().all(|s| s.end_scaler.is_some()));
        assert!(tl.segments[4].end_scaler.is_none());
    }

    #[test]
    fn timeline_merges_two_blanket_components() {
        // v-structure 0 -> 2 <- 1: MB(2) = {0, 1}; both parents' transitions
        // appear as boundaries, but neither is a child so no scalers
        let d = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = CtbnModel::from_parts(
            vec![d, d, d],
            vec![vec![], vec![], vec![0, 1]],
            vec![
                vec![random_rate_matrix(&mut rng, d)],
                vec![random_rate_matrix(&mut rng, d)],
                (0..4).map(|_| random_rate_matrix(&mut rng, d)).collect(),
            ],
            vec![vec![0.5, 0.5]; 3],
        )
        .unwrap();
        let joint = JointTrajectory {
            horizon: 2.0,
            components: vec![
                ComponentTrajectory {
                    component: 0,
                    t_start: 0.0,
                    t_end: 2.0,
                    initial_state: 0,
                    transitions: vec![(0.7, 1)],
                },
                ComponentTrajectory {
                    component: 1,
                    t_start: 0.0,
                    t_end: 2.0,
                    initial_state: 0,
                    transitions: vec![(1.3, 1)],
                },
                ComponentTrajectory::constant(2, 0.0, 2.0, 0),
            ],
        };
        let tl = build_timeline(&model, 2, &joint, (0.0, 2.0)).unwrap();
        assert_eq!(tl.boundaries, vec![0.0, 0.7, 1.3, 2.0]);
        assert!(tl.segments.iter().all(|s| s.end_scaler.is_none()));
    }

    #[test]
    fn propagator_cases() {
        let model = coupled_pair(3, 5);
        let r = reduced_rate_matrix(&model, 0, &[0, 1]);
        assert_eq!(segment_propagator(&r, 0.0).unwrap(), DMatrix::identity(3, 3));
        // sub-stochastic generator: every row sum strictly below 1
        let s = segment_propagator(&r, 1.0).unwrap();
        for a in 0..3 {
            let row: f64 = (0..3).map(|b| s[(a, b)]).sum();
            assert!(row < 1.0);
            assert!(row <= 1.0 + 1e-9);
        }
        // proper rate matrix: row-stochastic
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let proper = ReducedRateMatrix(random_rate_matrix(&mut rng, 4));
        let s = segment_propagator(&proper, 0.9).unwrap();
        for a in 0..4 {
            let row: f64 = (0..4).map(|b| s[(a, b)]).sum();
            assert_abs_diff_eq!(row, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn child_scaler_entries() {
        let model = coupled_pair(3, 5);
        let s = child_transition_scaler(&model, 0, 1, 0, 2, &[0, 0]).unwrap();
        for (a, &v) in s.iter().enumerate() {
            assert_abs_diff_eq!(v, model.cim(1, a)[(0, 2)], epsilon = 1e-15);
            assert!(v >= 0.0);
        }
        assert!(matches!(
            child_transition_scaler(&model, 0, 0, 0, 1, &[0, 0]),
            Err(SamplerError::NotAChild { component: 0, child: 0 })
        ));
    }

    #[test]
    fn child_scaler_constant_when_child_rate_ignores_component() {
        // v-structure 0 -> 2 <- 1 whose CIMs are duplicated along the
        // 0-axis: varying component 0 must not change the scaler
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let q = random_rate_matrix(&mut rng, 2);
        let q2a = random_rate_matrix(&mut rng, 2);
        let q2b = random_rate_matrix(&mut rng, 2);
        let model = CtbnModel::from_parts(
            vec![2, 2, 2],
            vec![vec![], vec![], vec![0, 1]],
            vec![
                vec![q.clone()],
                vec![q.clone()],
                vec![q2a.clone(), q2b.clone(), q2a, q2b],
            ],
            vec![vec![0.5, 0.5]; 3],
        )
        .unwrap();
        let s = child_transition_scaler(&model, 0, 2, 0, 1, &[0, 1, 0]).unwrap();
        assert!(s.iter().all(|&v| (v - s[0]).abs() < 1e-15));
    }

    #[test]
    fn backward_single_segment_matches_direct_product() {
        let model = coupled_pair(3, 9);
        let joint = fixed_y_joint(&model, 1.5, vec![]);
        let tl = build_timeline(&model, 0, &joint, (0.0, 1.5)).unwrap();
        let msgs = backward_pass(&tl, Terminal::Pinned(2)).unwrap();
        let direct = segment_propagator(&tl.segments[0].rate, 1.5).unwrap()
            * DVector::from_fn(3, |i, _| if i == 2 { 1.0 } else { 0.0 });
        for x in 0..3 {
            let reconstructed = msgs.at_start().v[x] * msgs.at_start().log_scale.exp();
            assert_abs_diff_eq!(direct[x], reconstructed, epsilon = 1e-12);
        }
    }

    #[test]
    fn backward_free_terminal_is_all_ones_at_end() {
        let model = coupled_pair(3, 9);
        let joint = fixed_y_joint(&model, 1.0, vec![(0.4, 1)]);
        let tl = build_timeline(&model, 0, &joint, (0.0, 1.0)).unwrap();
        let msgs = backward_pass(&tl, Terminal::Free).unwrap();
        let ws = WindowSampler::new(&tl, &msgs);
        let end = ws.future_at(1.0);
        for x in 0..3 {
            assert_abs_diff_eq!(end.v[x], 1.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(end.log_scale, 0.0, epsilon = 1e-12);
    }

    /// Independent oracle: backward filtering on the h-coarsened joint
    /// chain with the Y path pinned step by step.
    fn coarsened_backward_x(
        model: &CtbnModel,
        joint: &JointTrajectory,
        x_end: usize,
        horizon: f64,
        h: f64,
    ) -> Vec<f64> {
        let q = model.amalgamate().unwrap();
        let p = crate::exact::coarsened_step_matrix(&q, h).unwrap();
        let steps = (horizon / h).round() as usize;
        let d = model.state_size(0);
        let dy = model.state_size(1);
        let y_at = |k: usize| joint.components[1].state_at(k as f64 * h);
        // b_k[x] = Pr(evidence after step k | X_k = x, Y path)
        let mut b = vec![0.0; d];
        b[x_end] = 1.0;
        for k in (0..steps).rev() {
            let (y_now, y_next) = (y_at(k), y_at(k + 1));
            let mut nb = vec![0.0; d];
            for x in 0..d {
                let s = x * dy + y_now;
                let mut acc = 0.0;
                for x2 in 0..d {
                    acc += p[(s, x2 * dy + y_next)] * b[x2];
                }
                nb[x] = acc;
            }
            let m = nb.iter().cloned().fold(0.0, f64::max);
            for v in nb.iter_mut() {
                *v /= m;
            }
            b = nb;
        }
        b
    }

    #[test]
    fn backward_messages_match_coarsened_oracle() {
        let model = coupled_pair(3, 21);
        let horizon = 1.0;
        let joint = fixed_y_joint(&model, horizon, vec![(0.3, 1), (0.75, 2)]);
        let tl = build_timeline(&model, 0, &joint, (0.0, horizon)).unwrap();
        let msgs = backward_pass(&tl, Terminal::Pinned(1)).unwrap();
        let oracle = coarsened_backward_x(&model, &joint, 1, horizon, 1e-5);
        // compare ratios at t = 0
        let m0 = msgs.at_start();
        for x in 1..3 {
            let got = m0.v[x] / m0.v[0];
            let want = oracle[x] / oracle[0];
            assert!(
                ((got - want) / want).abs() < 1e-3,
                "ratio {x}: got {got}, want {want}"
            );
        }
    }

    #[test]
    fn cdf_contract_examples() {
        let model = coupled_pair(3, 13);
        let horizon = 2.0;
        let joint = fixed_y_joint(&model, horizon, vec![(0.6, 1), (1.4, 0)]);
        let tl = build_timeline(&model, 0, &joint, (0.0, horizon)).unwrap();

        // pinned unequal endpoints: F(T) = 1
        let msgs = backward_pass(&tl, Terminal::Pinned(2)).unwrap();
        let ws = WindowSampler::new(&tl, &msgs);
        assert_eq!(ws.cdf(0, 0.0, 0.0), 0.0);
        assert_abs_diff_eq!(ws.cdf(0, 0.0, horizon), 1.0, epsilon = 1e-9);

        // equal endpoints with positive self-bridge mass: F(T) < 1
        let msgs = backward_pass(&tl, Terminal::Pinned(0)).unwrap();
        let ws = WindowSampler::new(&tl, &msgs);
        let f_end = ws.cdf(0, 0.0, horizon);
        assert!(f_end < 1.0);

        // F nondecreasing
        let mut prev = 0.0;
        for k in 0..=50 {
            let f = ws.cdf(0, 0.0, horizon * k as f64 / 50.0);
            assert!(f >= prev - 1e-12);
            prev = f;
        }
    }

    #[test]
    fn transition_time_monotone_in_xi_and_none_case() {
        let model = coupled_pair(3, 13);
        let horizon = 2.0;
        let joint = fixed_y_joint(&model, horizon, vec![(0.9, 2)]);
        let tl = build_timeline(&model, 0, &joint, (0.0, horizon)).unwrap();
        let msgs = backward_pass(&tl, Terminal::Pinned(0)).unwrap();
        let ws = WindowSampler::new(&tl, &msgs);
        let f_end = ws.cdf(0, 0.0, horizon);
        assert!(f_end < 1.0);
        assert_eq!(ws.sample_transition_time(0, 0.0, f_end + (1.0 - f_end) / 2.0), None);

        let mut prev = 0.0;
        for k in 1..10 {
            let xi = f_end * k as f64 / 10.0;
            let tau = ws.sample_transition_time(0, 0.0, xi).unwrap();
            assert!(tau >= prev);
            // the sampled time inverts F to bisection accuracy
            assert_abs_diff_eq!(ws.cdf(0, 0.0, tau), xi, epsilon = 1e-7);
            prev = tau;
        }
    }

    #[test]
    fn next_state_two_states_is_deterministic_flip() {
        let model = coupled_pair(2, 2);
        let joint = fixed_y_joint(&model, 1.0, vec![]);
        let tl = build_timeline(&model, 0, &joint, (0.0, 1.0)).unwrap();
        let msgs = backward_pass(&tl, Terminal::Free).unwrap();
        let ws = WindowSampler::new(&tl, &msgs);
        let p = ws.next_state_distribution(0, 0.5);
        assert_eq!(p[0], 0.0);
        assert_abs_diff_eq!(p[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn next_state_matches_direct_formula() {
        // independent evaluation: plain (unscaled) matrix products for
        // the future likelihood, then the categorical formula
        let model = coupled_pair(3, 17);
        let horizon = 1.2;
        let joint = fixed_y_joint(&model, horizon, vec![(0.4, 1), (0.9, 0)]);
        let tl = build_timeline(&model, 0, &joint, (0.0, horizon)).unwrap();
        let msgs = backward_pass(&tl, Terminal::Pinned(2)).unwrap();
        let ws = WindowSampler::new(&tl, &msgs);
        let tau = 0.65; // inside segment 1

        let e2 = DVector::from_fn(3, |i, _| if i == 2 { 1.0 } else { 0.0 });
        let s2 = segment_propagator(&tl.segments[2].rate, horizon - 0.9).unwrap();
        let t2 = DMatrix::from_diagonal(&DVector::from_iterator(
            3,
            tl.segments[1].end_scaler.clone().unwrap(),
        ));
        let s1_partial = segment_propagator(&tl.segments[1].rate, 0.9 - tau).unwrap();
        let fut = s1_partial * t2 * s2 * e2;
        let r = &tl.segments[1].rate.0;
        let weights: Vec<f64> = (0..3)
            .map(|x| if x == 0 { 0.0 } else { r[(0, x)] * fut[x] })
            .collect();
        let z: f64 = weights.iter().sum();
        let got = ws.next_state_distribution(0, tau);
        for x in 0..3 {
            assert_abs_diff_eq!(got[x], weights[x] / z, epsilon = 1e-12);
        }
    }

    #[test]
    fn fully_observed_component_is_returned_verbatim() {
        let model = coupled_pair(2, 1);
        let joint = fixed_y_joint(&model, 2.0, vec![(1.0, 1)]);
        let ev = ComponentEvidence { points: vec![], intervals: vec![(0.0, 2.0, 1)] };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let traj = sample_component_trajectory(&model, 0, &joint, &ev, &mut rng).unwrap();
        assert_eq!(traj.initial_state, 1);
        assert!(traj.transitions.is_empty());
    }

    #[test]
    fn sampled_trajectories_satisfy_evidence_and_invariants() {
        let model = coupled_pair(3, 29);
        let horizon = 3.0;
        let joint = fixed_y_joint(&model, horizon, vec![(0.7, 1), (1.6, 2), (2.4, 1)]);
        let ev = ComponentEvidence {
            points: vec![(0.0, 0), (horizon, 2), (1.5, 1)],
            intervals: vec![(0.5, 0.9, 0)],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            let traj = sample_component_trajectory(&model, 0, &joint, &ev, &mut rng).unwrap();
            traj.validate(3).unwrap();
            assert_eq!(traj.state_at(0.0), 0);
            assert_eq!(traj.state_before(horizon), 2);
            assert_eq!(traj.state_at(1.5), 1);
            assert_eq!(traj.state_at(0.5), 0);
            assert_eq!(traj.state_before(0.9), 0);
            assert!(traj
                .transitions
                .iter()
                .all(|&(t, _)| !(0.5..0.9).contains(&t)));
            // never exactly on a blanket boundary
            for &(t, _) in &traj.transitions {
                for b in [0.7, 1.6, 2.4] {
                    assert!((t - b).abs() > 1e-14);
                }
            }
        }
    }

    #[test]
    fn sweep_preserves_evidence_and_pins() {
        let model = coupled_pair(2, 11);
        let horizon = 2.0;
        let mut ev = Evidence::empty(2);
        ev.components[0].points = vec![(0.0, 0), (horizon, 1)];
        ev.components[1].intervals = vec![(0.0, horizon, 1)];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut joint = initialize_trajectory(&model, &ev, horizon, &mut rng).unwrap();
        let before_y = joint.components[1].clone();
        for _ in 0..5 {
            gibbs_sweep(&model, &mut joint, &ev, SweepOrder::Systematic, &mut rng).unwrap();
            assert!(ev.is_satisfied_by(&joint));
            // fully pinned component is unchanged
            assert_eq!(joint.components[1], before_y);
        }
    }

    #[test]
    fn initialize_honors_endpoints_and_disperses() {
        let model = coupled_pair(3, 41);
        let horizon = 2.0;
        let mut ev = Evidence::empty(2);
        ev.components[0].points = vec![(0.0, 1), (horizon, 2)];
        let mut rng1 = ChaCha8Rng::seed_from_u64(1);
        let mut rng2 = ChaCha8Rng::seed_from_u64(2);
        let a = initialize_trajectory(&model, &ev, horizon, &mut rng1).unwrap();
        let b = initialize_trajectory(&model, &ev, horizon, &mut rng2).unwrap();
        assert_eq!(a.components[0].state_at(0.0), 1);
        assert_eq!(a.components[0].state_before(horizon), 2);
        assert!(ev.is_satisfied_by(&a));
        assert_ne!(a, b);
    }

    #[test]
    fn run_chain_counts() {
        let model = coupled_pair(2, 11);
        let ev = Evidence::empty(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let opts = GibbsOptions { burn_in: 0, n_samples: 0, thinning: 1, order: SweepOrder::Systematic };
        assert!(run_chain(&model, &ev, 1.0, &opts, &mut rng).unwrap().is_empty());
        let opts = GibbsOptions { burn_in: 0, n_samples: 4, thinning: 1, order: SweepOrder::Systematic };
        let samples = run_chain(&model, &ev, 1.0, &opts, &mut rng).unwrap();
        assert_eq!(samples.len(), 4);
    }

    #[test]
    fn run_chain_is_seed_deterministic() {
        let model = coupled_pair(2, 11);
        let mut ev = Evidence::empty(2);
        ev.components[0].points = vec![(0.0, 0), (1.0, 1)];
        let opts = GibbsOptions { burn_in: 3, n_samples: 3, thinning: 2, order: SweepOrder::Systematic };
        let a = run_chain(&model, &ev, 1.0, &opts, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = run_chain(&model, &ev, 1.0, &opts, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_probability_evidence_is_reported() {
        // rates that never leave state 0 make endpoint 1 unreachable
        let q = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, -1.0]);
        let model = CtbnModel::from_parts(
            vec![2],
            vec![vec![]],
            vec![vec![q]],
            vec![vec![1.0, 0.0]],
        )
        .unwrap();
        let mut ev = Evidence::empty(1);
        ev.components[0].points = vec![(0.0, 0), (1.0, 1)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = initialize_trajectory(&model, &ev, 1.0, &mut rng).unwrap_err();
        assert!(matches!(err, SamplerError::ZeroProbabilityEvidence { component: 0 }));
    }

    fn chain2() -> CtbnModel {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        CtbnModel::from_parts(
            vec![2, 2],
            vec![vec![], vec![0]],
            vec![
                vec![random_rate_matrix(&mut rng, 2)],
                vec![random_rate_matrix(&mut rng, 2), random_rate_matrix(&mut rng, 2)],
            ],
            vec![vec![0.5, 0.5]; 2],
        )
        .unwrap()
    }

}
