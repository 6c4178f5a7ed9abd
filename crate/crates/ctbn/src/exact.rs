//! Brute-force inference oracle on the amalgamated joint state space.
//!
//! Everything here is exponential in the number of components and is
//! gated by the joint-state cap; it exists to validate the sampler and
//! to provide ground truth for small networks. Provided:
//!
//! * Markov-bridge marginals (conditional law given both endpoints),
//! * exact expected sufficient statistics by Simpson integration of the
//!   bridged occupation and transition intensities,
//! * an h-coarsened discrete-time chain (step matrix `I + hQ`) used as
//!   an independent convergence oracle.
//!
//! Forward/backward factors carry a per-step log-scale so long horizons
//! do not underflow; only ratios of these factors are ever used.

use crate::linalg::{self, LinalgError};
use crate::model::{CtbnModel, ModelError, DEFAULT_JOINT_CAP};
use crate::stats::SufficientStats;
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExactError {
    #[error("joint state space too large: {size} > cap {cap}")]
    CapExceeded { size: usize, cap: usize },
    #[error("evidence has probability zero")]
    ZeroProbabilityEvidence,
    #[error("bridge denominator exp(TQ)[a0, aT] is zero")]
    ZeroBridge,
    #[error("query time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("step h = {h} too large: 1 + h*q[{state},{state}] = {value} < 0")]
    StepTooLarge { h: f64, state: usize, value: f64 },
    #[error("event constraints are inconsistent (zero probability)")]
    InconsistentEvent,
    #[error("bad query: {0}")]
    BadQuery(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// A Markov-bridge query on a joint rate matrix: the process is pinned
/// to `a0` at time 0 and `a_t` at time `horizon`; we ask for the
/// marginal at `t`.
#[derive(Debug, Clone)]
pub struct BridgeQuery<'a> {
    pub q: &'a DMatrix<f64>,
    pub a0: usize,
    pub a_end: usize,
    pub horizon: f64,
    pub t: f64,
}

/// Marginal distribution at `t` of the bridge: entry `a` is
/// `exp(tQ)[a0,a] * exp((T-t)Q)[a,aT] / exp(TQ)[a0,aT]`.
pub fn bridge_marginal(query: &BridgeQuery) -> Result<Vec<f64>, ExactError> {
    let BridgeQuery { q, a0, a_end, horizon, t } = *query;
    if !(0.0..=horizon).contains(&t) {
        return Err(ExactError::TimeOutOfRange { t, horizon });
    }
    let fwd = linalg::matrix_exponential(q, t)?;
    let bwd = linalg::matrix_exponential(q, horizon - t)?;
    let n = q.nrows();
    let denom: f64 = (0..n).map(|a| fwd[(a0, a)] * bwd[(a, a_end)]).sum();
    if denom <= 0.0 {
        return Err(ExactError::ZeroBridge);
    }
    Ok((0..n)
        .map(|a| (fwd[(a0, a)] * bwd[(a, a_end)] / denom).max(0.0))
        .collect())
}

/// `I + hQ`: the one-step matrix of the h-coarsened discrete chain.
/// Requires `1 + h*q_aa >= 0` for every state.
pub fn coarsened_step_matrix(q: &DMatrix<f64>, h: f64) -> Result<DMatrix<f64>, ExactError> {
    let n = q.nrows();
    let mut p = DMatrix::identity(n, n) + q * h;
    for a in 0..n {
        if p[(a, a)] < 0.0 {
            return Err(ExactError::StepTooLarge { h, state: a, value: p[(a, a)] });
        }
        for b in 0..n {
            // clamp -0.0 style roundoff
            if p[(a, b)] < 0.0 && p[(a, b)] > -1e-15 {
                p[(a, b)] = 0.0;
            }
        }
    }
    Ok(p)
}

/// A constraint on the (joint) chain state: pinned at a point, or pinned
/// throughout an interval. Times are rounded to the grid per the
/// coarsening convention: points round down, interval ends round inward.
#[derive(Debug, Clone, Copy)]
pub enum EventConstraint {
    Point { time: f64, state: usize },
    Interval { start: f64, end: f64, state: usize },
}

/// Exact probability of the conjunction of rounded constraints under the
/// h-coarsened chain started from `initial`, by forward filtering.
pub fn event_probability_coarsened(
    q: &DMatrix<f64>,
    h: f64,
    initial: &[f64],
    horizon: f64,
    event: &[EventConstraint],
) -> Result<f64, ExactError> {
    let p = coarsened_step_matrix(q, h)?;
    let n = q.nrows();
    if initial.len() != n {
        return Err(ExactError::BadQuery(format!(
            "initial distribution has {} entries, chain has {n} states",
            initial.len()
        )));
    }
    let steps = (horizon / h + 1e-9).floor() as usize;
    // pinned[k] = Some(state) when a constraint fixes the chain at step k
    let mut pinned: Vec<Option<usize>> = vec![None; steps + 1];
    let mut pin = |k: usize, s: usize| -> Result<(), ExactError> {
        if k <= steps {
            match pinned[k] {
                Some(prev) if prev != s => return Err(ExactError::InconsistentEvent),
                _ => pinned[k] = Some(s),
            }
        }
        Ok(())
    };
    for c in event {
        match *c {
            EventConstraint::Point { time, state } => {
                if !(0.0..=horizon).contains(&time) {
                    return Err(ExactError::TimeOutOfRange { t: time, horizon });
                }
                pin((time / h + 1e-9).floor() as usize, state)?;
            }
            EventConstraint::Interval { start, end, state } => {
                if !(0.0..=horizon).contains(&start) || !(0.0..=horizon).contains(&end) {
                    return Err(ExactError::TimeOutOfRange { t: start, horizon });
                }
                let k0 = (start / h - 1e-9).ceil().max(0.0) as usize;
                let k1 = (end / h + 1e-9).floor() as usize;
                for k in k0..=k1.min(steps) {
                    pin(k, state)?;
                }
            }
        }
    }
    let mut v: Vec<f64> = initial.to_vec();
    let mut log_scale = 0.0;
    let mask = |v: &mut Vec<f64>, pin: Option<usize>| {
        if let Some(s) = pin {
            for (i, x) in v.iter_mut().enumerate() {
                if i != s {
                    *x = 0.0;
                }
            }
        }
    };
    mask(&mut v, pinned[0]);
    for k in 1..=steps {
        let mut next = vec![0.0; n];
        for a in 0..n {
            if v[a] != 0.0 {
                for b in 0..n {
                    next[b] += v[a] * p[(a, b)];
                }
            }
        }
        mask(&mut next, pinned[k]);
        let m = next.iter().cloned().fold(0.0, f64::max);
        if m == 0.0 {
            return Ok(0.0);
        }
        if m < 1e-100 {
            for x in next.iter_mut() {
                *x /= m;
            }
            log_scale += m.ln();
        }
        v = next;
    }
    Ok(v.iter().sum::<f64>() * log_scale.exp())
}

/// `Pr_h(A | B) = Pr_h(A and B) / Pr_h(B)`.
pub fn conditional_event_probability_coarsened(
    q: &DMatrix<f64>,
    h: f64,
    initial: &[f64],
    horizon: f64,
    event: &[EventConstraint],
    given: &[EventConstraint],
) -> Result<f64, ExactError> {
    let mut both = given.to_vec();
    both.extend_from_slice(event);
    let num = event_probability_coarsened(q, h, initial, horizon, &both)?;
    let den = event_probability_coarsened(q, h, initial, horizon, given)?;
    if den <= 0.0 {
        return Err(ExactError::ZeroProbabilityEvidence);
    }
    Ok(num / den)
}

// ---------------------------------------------------------------------
// Expected sufficient statistics on the joint space.
// ---------------------------------------------------------------------

/// Sparse CSR view of the amalgamated rate matrix, built directly from
/// the factored model so the dense joint matrix never materializes.
struct SparseJoint {
    n: usize,
    strides: Vec<usize>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    max_exit: f64,
    /// per component: (own state, flattened parent state) of every joint
    /// index
    comp_state: Vec<Vec<u32>>,
    parent_idx: Vec<Vec<u32>>,
}

impl SparseJoint {
    fn build(model: &CtbnModel, cap: usize) -> Result<Self, ExactError> {
        let n = model
            .num_joint_states()
            .filter(|&n| n <= cap)
            .ok_or(ExactError::CapExceeded {
                size: model.num_joint_states().unwrap_or(usize::MAX),
                cap,
            })?;
        let m = model.num_components();
        let mut strides = vec![1usize; m];
        for i in (0..m.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * model.state_size(i + 1);
        }
        let mut comp_state = vec![vec![0u32; n]; m];
        let mut parent_idx = vec![vec![0u32; n]; m];
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut max_exit = 0.0f64;
        row_ptr.push(0);
        for s in 0..n {
            let a = model.joint_assignment(s);
            let mut diag = 0.0;
            for i in 0..m {
                let u = model.parent_state_index(i, &a);
                comp_state[i][s] = a[i] as u32;
                parent_idx[i][s] = u as u32;
                let cim = model.cim(i, u);
                diag += cim[(a[i], a[i])];
                for b in 0..model.state_size(i) {
                    if b != a[i] {
                        let rate = cim[(a[i], b)];
                        if rate != 0.0 {
                            cols.push(s + b * strides[i] - a[i] * strides[i]);
                            vals.push(rate);
                        }
                    }
                }
            }
            cols.push(s);
            vals.push(diag);
            max_exit = max_exit.max(-diag);
            row_ptr.push(cols.len());
        }
        Ok(SparseJoint { n, strides, row_ptr, cols, vals, max_exit, comp_state, parent_idx })
    }

    /// out = v Q (left action, distributions are row vectors here)
    fn left_mul(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for a in 0..self.n {
            let va = v[a];
            if va != 0.0 {
                for k in self.row_ptr[a]..self.row_ptr[a + 1] {
                    out[self.cols[k]] += va * self.vals[k];
                }
            }
        }
    }

    /// out = Q v (right action, likelihoods are column vectors)
    fn right_mul(&self, v: &[f64], out: &mut [f64]) {
        for a in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[a]..self.row_ptr[a + 1] {
                acc += self.vals[k] * v[self.cols[k]];
            }
            out[a] = acc;
        }
    }

    /// v <- v exp(hQ) (or exp(hQ) v when `right`), via a truncated series
    /// with internal substepping to keep each substep's norm small.
    /// The max-norm is folded into `log` after each substep.
    fn expm_action(&self, v: &mut Vec<f64>, log: &mut f64, h: f64, right: bool) {
        let substeps = ((h * self.max_exit / 0.5).ceil() as usize).max(1);
        let dt = h / substeps as f64;
        let mut term = vec![0.0; self.n];
        let mut scratch = vec![0.0; self.n];
        for _ in 0..substeps {
            let mut acc = v.clone();
            term.copy_from_slice(v);
            for j in 1..200 {
                if right {
                    self.right_mul(&term, &mut scratch);
                } else {
                    self.left_mul(&term, &mut scratch);
                }
                let factor = dt / j as f64;
                let mut tmax = 0.0f64;
                for (t, s) in term.iter_mut().zip(&scratch) {
                    *t = s * factor;
                    tmax = tmax.max(t.abs());
                }
                for (a, t) in acc.iter_mut().zip(&term) {
                    *a += t;
                }
                let amax = acc.iter().cloned().fold(0.0, f64::max);
                if tmax <= 1e-16 * amax.max(1e-300) {
                    break;
                }
            }
            let m = acc.iter().fold(0.0f64, |mx, &x| mx.max(x.abs()));
            if m > 0.0 {
                for x in acc.iter_mut() {
                    *x = (*x / m).max(0.0);
                }
                *log += m.ln();
            }
            *v = acc;
        }
    }
}

/// Exact expected sufficient statistics of the endpoint-conditioned
/// process: residence times integrate the bridge occupation
/// probabilities, transition counts integrate the bridged intensity
/// `alpha_x q_{x,y} beta_y / Z`, both by composite Simpson's rule on
/// `grid_n + 1` points (`grid_n` rounded up to even).
pub fn exact_sufficient_stats(
    model: &CtbnModel,
    start: &[usize],
    end: &[usize],
    horizon: f64,
    grid_n: usize,
) -> Result<SufficientStats, ExactError> {
    let sp = SparseJoint::build(model, DEFAULT_JOINT_CAP)?;
    let mut alpha0 = vec![0.0; sp.n];
    alpha0[model.joint_index(start)] = 1.0;
    let mut beta_end = vec![0.0; sp.n];
    beta_end[model.joint_index(end)] = 1.0;
    stats_core(model, &sp, alpha0, beta_end, horizon, grid_n)
}

/// Expected sufficient statistics with the initial joint state pinned
/// and the end free.
pub fn exact_sufficient_stats_start_pinned(
    model: &CtbnModel,
    start: &[usize],
    horizon: f64,
    grid_n: usize,
) -> Result<SufficientStats, ExactError> {
    let sp = SparseJoint::build(model, DEFAULT_JOINT_CAP)?;
    let mut alpha0 = vec![0.0; sp.n];
    alpha0[model.joint_index(start)] = 1.0;
    let beta_end = vec![1.0; sp.n];
    stats_core(model, &sp, alpha0, beta_end, horizon, grid_n)
}

/// Expected sufficient statistics of the unconditioned process: initial
/// states from the model's product-form distribution, free end.
pub fn exact_sufficient_stats_free(
    model: &CtbnModel,
    horizon: f64,
    grid_n: usize,
) -> Result<SufficientStats, ExactError> {
    let sp = SparseJoint::build(model, DEFAULT_JOINT_CAP)?;
    let alpha0 = (0..sp.n)
        .map(|s| {
            let a = model.joint_assignment(s);
            a.iter()
                .enumerate()
                .map(|(i, &ai)| model.initial(i)[ai])
                .product()
        })
        .collect();
    let beta_end = vec![1.0; sp.n];
    stats_core(model, &sp, alpha0, beta_end, horizon, grid_n)
}

fn stats_core(
    model: &CtbnModel,
    sp: &SparseJoint,
    alpha0: Vec<f64>,
    beta_end: Vec<f64>,
    horizon: f64,
    grid_n: usize,
) -> Result<SufficientStats, ExactError> {
    let grid_n = if grid_n % 2 == 0 { grid_n.max(2) } else { grid_n + 1 };
    let h = horizon / grid_n as f64;
    let m = model.num_components();

    // backward likelihoods at every grid point, stored normalized
    let mut betas: Vec<(Vec<f64>, f64)> = Vec::with_capacity(grid_n + 1);
    let mut beta = beta_end;
    let mut lbeta = 0.0;
    betas.push((beta.clone(), lbeta));
    for _ in 0..grid_n {
        sp.expm_action(&mut beta, &mut lbeta, h, true);
        betas.push((beta.clone(), lbeta));
    }
    betas.reverse(); // betas[k] now corresponds to grid point k

    let log_z = {
        let (b0, lb0) = &betas[0];
        let z: f64 = alpha0.iter().zip(b0).map(|(a, b)| a * b).sum();
        if z <= 0.0 {
            return Err(ExactError::ZeroProbabilityEvidence);
        }
        z.ln() + lb0
    };

    let mut stats = SufficientStats::zeros(model);
    let mut alpha = alpha0;
    let mut lalpha = 0.0;
    for k in 0..=grid_n {
        if k > 0 {
            sp.expm_action(&mut alpha, &mut lalpha, h, false);
        }
        let simpson = if k == 0 || k == grid_n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        } * h
            / 3.0;
        let (bk, lbk) = &betas[k];
        let scale = (lalpha + lbk - log_z).exp();
        for s in 0..sp.n {
            if alpha[s] == 0.0 {
                continue;
            }
            let w = alpha[s] * bk[s] * scale;
            for i in 0..m {
                let a = sp.comp_state[i][s] as usize;
                let u = sp.parent_idx[i][s] as usize;
                stats.residence[i][u][a] += simpson * w;
                let cim = model.cim(i, u);
                for b in 0..model.state_size(i) {
                    if b != a {
                        let rate = cim[(a, b)];
                        if rate > 0.0 {
                            let s2 = s + b * sp.strides[i] - a * sp.strides[i];
                            stats.transitions[i][u][a][b] +=
                                simpson * alpha[s] * rate * bk[s2] * scale;
                        }
                    }
                }
            }
        }
    }
    Ok(stats)
}
