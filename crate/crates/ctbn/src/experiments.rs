//! Experiment harness: benchmark network generators, named evidence
//! sets, multi-chain execution, and error-curve CSV outputs.
//!
//! Every experiment is seed-deterministic: chains draw from a common
//! seed with per-chain RNG streams and results are merged by chain
//! index, so identical configurations produce byte-identical CSVs.

use crate::exact::{self, ExactError};
use crate::model::{CtbnModel, ModelError, DEFAULT_JOINT_CAP};
use crate::sampler::{self, GibbsOptions, SamplerError, SweepOrder};
use crate::stats::{self, StatsError, SufficientStats};
use crate::trajectory::{Evidence, TrajectoryError};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment configuration: {0}")]
    BadConfig(String),
    #[error("evidence set {0:?} requires the 5-component, 5-state chain network")]
    WrongNetworkShape(String),
    #[error("sharpening with alpha = 0 requires strictly positive off-diagonal rates")]
    ZeroRateAtZeroAlpha,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("could not parse configuration: {0}")]
    Parse(#[from] serde_json::Error),
}

// ---------------------------------------------------------------------
// Network generators.
// ---------------------------------------------------------------------

/// Rate magnitudes for [`generate_chain_network`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainNetworkParams {
    /// Rate along the two preferred loops of the head component.
    pub loop_rate: f64,
    /// Rate of every other transition of the head component.
    pub off_loop: f64,
    /// Rate toward the parent's current state for downstream components.
    pub follow: f64,
    /// Rate of every other downstream transition.
    pub non_follow: f64,
    /// Multiplicative perturbation amplitude breaking symmetry.
    pub perturb: f64,
}

impl Default for ChainNetworkParams {
    fn default() -> Self {
        ChainNetworkParams {
            loop_rate: 2.0,
            off_loop: 0.05,
            follow: 5.0,
            non_follow: 0.2,
            perturb: 0.05,
        }
    }
}

/// Benchmark chain `X_0 -> X_1 -> ... -> X_{n-1}`: the head component
/// cycles through two preferred loops (`s0-s1-s2` and `s0-s3-s4` for
/// d = 5, the uniform cycle otherwise), every other component tends to
/// follow its parent's state. All off-diagonal rates are perturbed
/// multiplicatively by `(1 + perturb * u)`, `u` uniform in [-1, 1),
/// deterministically in `seed`.
pub fn generate_chain_network(
    n: usize,
    d: usize,
    params: &ChainNetworkParams,
    seed: u64,
) -> Result<CtbnModel, ExperimentError> {
    if n == 0 || d < 2 {
        return Err(ExperimentError::BadConfig(format!(
            "chain network needs n >= 1 components (got {n}) and d >= 2 states (got {d})"
        )));
    }
    if params.loop_rate <= 0.0
        || params.off_loop < 0.0
        || params.follow <= 0.0
        || params.non_follow < 0.0
        || !(0.0..1.0).contains(&params.perturb)
    {
        return Err(ExperimentError::BadConfig(
            "chain network rates must be positive and perturb in [0, 1)".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = |r: f64| {
        if r == 0.0 {
            0.0
        } else {
            r * (1.0 + params.perturb * rng.gen_range(-1.0..1.0))
        }
    };

    let loop_edges: Vec<(usize, usize)> = if d == 5 {
        vec![(0, 1), (1, 2), (2, 0), (0, 3), (3, 4), (4, 0)]
    } else {
        (0..d).map(|a| (a, (a + 1) % d)).collect()
    };
    let mut head = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            if a != b {
                let base = if loop_edges.contains(&(a, b)) {
                    params.loop_rate
                } else {
                    params.off_loop
                };
                head[(a, b)] = jitter(base);
            }
        }
        let row: f64 = (0..d).filter(|&b| b != a).map(|b| head[(a, b)]).sum();
        head[(a, a)] = -row;
    }

    let mut parents = vec![vec![]];
    let mut cims = vec![vec![head]];
    for i in 1..n {
        parents.push(vec![i - 1]);
        let mut per_parent = Vec::with_capacity(d);
        for c in 0..d {
            let mut q = DMatrix::zeros(d, d);
            for a in 0..d {
                for b in 0..d {
                    if a != b {
                        let base = if b == c { params.follow } else { params.non_follow };
                        q[(a, b)] = jitter(base);
                    }
                }
                let row: f64 = (0..d).filter(|&b| b != a).map(|b| q[(a, b)]).sum();
                q[(a, a)] = -row;
            }
            per_parent.push(q);
        }
        cims.push(per_parent);
    }
    let initial = vec![vec![1.0 / d as f64; d]; n];
    Ok(CtbnModel::from_parts(vec![d; n], parents, cims, initial)?)
}

/// Chain whose component `i` holds a constant exit rate `base / 2^i`
/// with a uniform transition profile regardless of the parent's state.
/// The constant exit rate makes unconditioned expected transition
/// counts exactly `rate * T`.
pub fn generate_timescale_chain(
    n: usize,
    d: usize,
    base_rate: f64,
) -> Result<CtbnModel, ExperimentError> {
    if n == 0 || d < 2 || base_rate <= 0.0 {
        return Err(ExperimentError::BadConfig(format!(
            "timescale chain needs n >= 1, d >= 2, base_rate > 0 (got {n}, {d}, {base_rate})"
        )));
    }
    let mut parents = vec![vec![]];
    let mut cims = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            parents.push(vec![i - 1]);
        }
        let rate = base_rate / 2f64.powi(i as i32);
        let per = rate / (d - 1) as f64;
        let q = DMatrix::from_fn(d, d, |a, b| if a == b { -rate } else { per });
        cims.push(vec![q; if i == 0 { 1 } else { d }]);
    }
    let initial = vec![vec![1.0 / d as f64; d]; n];
    Ok(CtbnModel::from_parts(vec![d; n], parents, cims, initial)?)
}

/// Sharpness transform: each off-diagonal row profile is replaced by
/// its alpha-power normalization scaled back to the original exit rate,
/// `q_ab <- |q_aa| * q_ab^alpha / sum_c q_ac^alpha`. Diagonals are
/// unchanged, so rows still sum to zero. `alpha = 1` is the identity;
/// `alpha -> 0` flattens the profile toward uniform (rejected when a
/// zero off-diagonal rate makes `0^0` ambiguous).
pub fn sharpen(model: &CtbnModel, alpha: f64) -> Result<CtbnModel, ExperimentError> {
    if alpha < 0.0 {
        return Err(ExperimentError::BadConfig(format!(
            "sharpness parameter must be nonnegative, got {alpha}"
        )));
    }
    let m = model.num_components();
    let mut cims = Vec::with_capacity(m);
    for i in 0..m {
        let d = model.state_size(i);
        let mut per = Vec::with_capacity(model.num_parent_states(i));
        for u in 0..model.num_parent_states(i) {
            let q = model.cim(i, u);
            let mut new_q = DMatrix::zeros(d, d);
            for a in 0..d {
                let exit = -q[(a, a)];
                new_q[(a, a)] = q[(a, a)];
                if exit == 0.0 {
                    continue;
                }
                if alpha == 0.0 && (0..d).any(|b| b != a && q[(a, b)] == 0.0) {
                    return Err(ExperimentError::ZeroRateAtZeroAlpha);
                }
                let powers: Vec<f64> =
                    (0..d).map(|b| if b == a { 0.0 } else { q[(a, b)].powf(alpha) }).collect();
                let z: f64 = powers.iter().sum();
                for b in 0..d {
                    if b != a {
                        new_q[(a, b)] = exit * powers[b] / z;
                    }
                }
            }
            per.push(new_q);
        }
        cims.push(per);
    }
    Ok(CtbnModel::from_parts(
        (0..m).map(|i| model.state_size(i)).collect(),
        (0..m).map(|i| model.parents(i).to_vec()).collect(),
        cims,
        (0..m).map(|i| model.initial(i).to_vec()).collect(),
    )?)
}

// ---------------------------------------------------------------------
// Named evidence sets.
// ---------------------------------------------------------------------

/// Named evidence sets on the 5-component chain over [0, T]:
/// `e1` pins both joint endpoints, `e2` pins the start and fixes a
/// forward-sampled full trajectory of the last component, `e3` pins
/// both endpoints to the all-zero state, `e4` pins only the start,
/// `e5` is `e1` plus interval evidence holding the head component in
/// state 0 throughout.
pub fn make_evidence(
    name: &str,
    model: &CtbnModel,
    horizon: f64,
    rng: &mut impl Rng,
) -> Result<Evidence, ExperimentError> {
    let m = model.num_components();
    let five_by_five = m == 5 && (0..m).all(|i| model.state_size(i) == 5);
    if !five_by_five {
        return Err(ExperimentError::WrongNetworkShape(name.to_string()));
    }
    let mut ev = Evidence::empty(m);
    let start = vec![0usize; m];
    for (i, &s) in start.iter().enumerate() {
        ev.components[i].points.push((0.0, s));
    }
    match name {
        "e1" => {
            for (i, s) in [0usize, 1, 3, 0, 1].into_iter().enumerate() {
                ev.components[i].points.push((horizon, s));
            }
        }
        "e2" => {
            let joint = sampler::sample_generative(model, horizon, Some(&start), rng)?;
            let last = m - 1;
            ev.components[last].points.clear();
            ev.components[last].intervals = joint.components[last].segments();
        }
        "e3" => {
            for i in 0..m {
                ev.components[i].points.push((horizon, 0));
            }
        }
        "e4" => {}
        "e5" => {
            for (i, s) in [0usize, 1, 3, 0, 1].into_iter().enumerate() {
                ev.components[i].points.push((horizon, s));
            }
            ev.components[0].intervals.push((0.0, horizon, 0));
        }
        other => {
            return Err(ExperimentError::BadConfig(format!(
                "unknown evidence set {other:?} (expected e1..e5)"
            )))
        }
    }
    ev.validate(model, horizon)?;
    Ok(ev)
}

// ---------------------------------------------------------------------
// Configuration.
// ---------------------------------------------------------------------

/// Network source for an experiment: a model file or a generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorSpec {
    Chain {
        components: usize,
        #[serde(default = "default_states")]
        states: usize,
        #[serde(default)]
        params: ChainNetworkParams,
    },
    Timescale {
        components: usize,
        #[serde(default = "default_states")]
        states: usize,
        #[serde(default = "default_base_rate")]
        base_rate: f64,
    },
}

fn default_states() -> usize {
    5
}
fn default_base_rate() -> f64 {
    8.0
}
fn default_horizon() -> f64 {
    3.0
}
fn default_chains() -> usize {
    8
}
fn default_burnins() -> Vec<usize> {
    vec![100]
}
fn default_sample_counts() -> Vec<usize> {
    vec![100]
}
fn default_thinning() -> usize {
    1
}
fn default_alphas() -> Vec<f64> {
    vec![0.25, 0.5, 1.0, 2.0, 4.0]
}
fn default_component_counts() -> Vec<usize> {
    vec![2, 3, 4, 5]
}
fn default_components_reported() -> usize {
    5
}
fn default_threshold() -> f64 {
    0.05
}
fn default_grid_n() -> usize {
    2000
}
fn default_reference_sweeps() -> usize {
    10_000
}
fn default_reference_chains() -> usize {
    10
}

/// Experiment configuration, read from JSON. Every numeric field has a
/// default so a config may specify only what it varies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Model file path; mutually exclusive with `generator`.
    #[serde(default)]
    pub model_file: Option<PathBuf>,
    #[serde(default)]
    pub generator: Option<GeneratorSpec>,
    /// Named evidence set `e1`..`e5`, or `none` for no evidence beyond
    /// the pinned start used by the scaling/timescale runs.
    #[serde(default)]
    pub evidence: Option<String>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default = "default_burnins")]
    pub burnins: Vec<usize>,
    #[serde(default = "default_sample_counts")]
    pub sample_counts: Vec<usize>,
    #[serde(default = "default_thinning")]
    pub thinning: usize,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_component_counts")]
    pub component_counts: Vec<usize>,
    /// Errors are averaged over statistics of the first k components.
    #[serde(default = "default_components_reported")]
    pub components_reported: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
    /// Sweeps per chain of the long reference run used as truth when
    /// the joint space exceeds the exact-oracle cap.
    #[serde(default = "default_reference_sweeps")]
    pub reference_sweeps: usize,
    #[serde(default = "default_reference_chains")]
    pub reference_chains: usize,
    #[serde(default)]
    pub seed: u64,
    pub output: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: &str| Err(ExperimentError::BadConfig(msg.to_string()));
        if !(self.horizon > 0.0) {
            return bad("horizon must be positive");
        }
        if self.chains == 0 || self.burnins.is_empty() || self.sample_counts.is_empty() {
            return bad("chains, burnins and sample_counts must be nonempty/positive");
        }
        if self.sample_counts.iter().any(|&n| n == 0) {
            return bad("sample counts must be positive");
        }
        if self.model_file.is_some() && self.generator.is_some() {
            return bad("specify either model_file or generator, not both");
        }
        Ok(())
    }

    fn build_model(&self) -> Result<CtbnModel, ExperimentError> {
        match (&self.model_file, &self.generator) {
            (Some(path), None) => Ok(CtbnModel::load(path)?),
            (None, Some(GeneratorSpec::Chain { components, states, params })) => {
                generate_chain_network(*components, *states, params, self.seed)
            }
            (None, Some(GeneratorSpec::Timescale { components, states, base_rate })) => {
                generate_timescale_chain(*components, *states, *base_rate)
            }
            (None, None) => Err(ExperimentError::BadConfig(
                "a model_file or generator is required".into(),
            )),
            (Some(_), Some(_)) => Err(ExperimentError::BadConfig(
                "specify either model_file or generator, not both".into(),
            )),
        }
    }

    fn build_evidence(
        &self,
        model: &CtbnModel,
        rng: &mut impl Rng,
    ) -> Result<Evidence, ExperimentError> {
        match self.evidence.as_deref() {
            None | Some("none") => Ok(Evidence::empty(model.num_components())),
            Some(name) => make_evidence(name, model, self.horizon, rng),
        }
    }
}

// ---------------------------------------------------------------------
// Chain execution and error curves.
// ---------------------------------------------------------------------

/// Runs `chains` independent Gibbs chains in parallel (one RNG stream
/// per chain) and returns each chain's per-sample sufficient
/// statistics, ordered by chain index.
pub fn chain_stats_pool(
    model: &CtbnModel,
    evidence: &Evidence,
    horizon: f64,
    opts: &GibbsOptions,
    chains: usize,
    seed: u64,
) -> Result<Vec<Vec<SufficientStats>>, ExperimentError> {
    (0..chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let samples = sampler::run_chain(model, evidence, horizon, opts, &mut rng)?;
            Ok(samples.iter().map(|j| stats::accumulate_stats(model, j)).collect())
        })
        .collect()
}

/// Pooled estimate from the first `n` samples of every chain.
pub fn pooled_mean(
    pool: &[Vec<SufficientStats>],
    n: usize,
) -> Result<SufficientStats, ExperimentError> {
    let flat: Vec<SufficientStats> = pool
        .iter()
        .flat_map(|chain| chain.iter().take(n).cloned())
        .collect();
    Ok(stats::mean_stats(&flat)?)
}

/// Error of a pooled estimate against truth, restricted to the first
/// `components_reported` components.
pub fn pooled_error(
    est: &SufficientStats,
    truth: &SufficientStats,
    components_reported: usize,
    threshold: f64,
) -> Result<f64, ExperimentError> {
    let k = components_reported.min(truth.residence.len());
    Ok(stats::average_relative_error(
        &est.truncate_components(k),
        &truth.truncate_components(k),
        threshold,
    )?)
}

/// How the truth column of an error curve was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruthSource {
    Exact,
    ReferenceRun,
}

impl TruthSource {
    fn label(self) -> &'static str {
        match self {
            TruthSource::Exact => "exact",
            TruthSource::ReferenceRun => "reference_run",
        }
    }
}

/// Evidence expressible as pinned joint endpoints: a time-0 point per
/// component, optionally a time-T point per component, nothing else.
fn endpoint_form(evidence: &Evidence, horizon: f64) -> Option<(Vec<usize>, Option<Vec<usize>>)> {
    let mut start = Vec::new();
    let mut end = Vec::new();
    for ce in &evidence.components {
        if !ce.intervals.is_empty() {
            return None;
        }
        let s = ce.points.iter().find(|&&(t, _)| t == 0.0)?;
        start.push(s.1);
        match ce.points.len() {
            1 => {}
            2 => {
                let e = ce.points.iter().find(|&&(t, _)| t == horizon)?;
                end.push(e.1);
            }
            _ => return None,
        }
    }
    match end.len() {
        0 => Some((start, None)),
        n if n == evidence.components.len() => Some((start, Some(end))),
        _ => None,
    }
}

/// Truth statistics for an error curve: the exact amalgamated-space
/// oracle when the evidence is endpoint-form and the joint space is
/// within the cap, otherwise the mean of a long reference Gibbs run.
pub fn truth_stats(
    model: &CtbnModel,
    evidence: &Evidence,
    cfg: &ExperimentConfig,
) -> Result<(SufficientStats, TruthSource), ExperimentError> {
    let within_cap = model
        .num_joint_states()
        .map(|n| n <= DEFAULT_JOINT_CAP)
        .unwrap_or(false);
    if within_cap {
        let empty = evidence
            .components
            .iter()
            .all(|c| c.points.is_empty() && c.intervals.is_empty());
        if empty {
            let stats = exact::exact_sufficient_stats_free(model, cfg.horizon, cfg.grid_n)?;
            return Ok((stats, TruthSource::Exact));
        }
        if let Some((start, end)) = endpoint_form(evidence, cfg.horizon) {
            let stats = match end {
                Some(end) => exact::exact_sufficient_stats(
                    model, &start, &end, cfg.horizon, cfg.grid_n,
                )?,
                None => exact::exact_sufficient_stats_start_pinned(
                    model, &start, cfg.horizon, cfg.grid_n,
                )?,
            };
            return Ok((stats, TruthSource::Exact));
        }
    }
    let opts = GibbsOptions {
        burn_in: cfg.reference_sweeps / 10,
        n_samples: cfg.reference_sweeps,
        thinning: 1,
        order: SweepOrder::Systematic,
    };
    // offset the stream range so reference chains never share a stream
    // with measurement chains
    let pool = chain_stats_pool(
        model,
        evidence,
        cfg.horizon,
        &opts,
        cfg.reference_chains,
        cfg.seed ^ 0x5eed_0f_7210,
    )?;
    Ok((pooled_mean(&pool, usize::MAX)?, TruthSource::ReferenceRun))
}

/// Experiment families exposed by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Error vs. number of samples, one curve per burn-in.
    ErrorVsSamples,
    /// Error at fixed sample count vs. burn-in length.
    ErrorVsBurnin,
    /// Error vs. sharpness transform parameter.
    Sharpness,
    /// Error and wall-clock vs. network size.
    Scaling,
    /// Mean sampled transitions per component on the halving-rates chain.
    Timescale,
}

impl std::str::FromStr for ExperimentKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "error-vs-samples" => Ok(ExperimentKind::ErrorVsSamples),
            "error-vs-burnin" => Ok(ExperimentKind::ErrorVsBurnin),
            "sharpness" => Ok(ExperimentKind::Sharpness),
            "scaling" => Ok(ExperimentKind::Scaling),
            "timescale" => Ok(ExperimentKind::Timescale),
            other => Err(format!(
                "unknown experiment {other:?} (expected error-vs-samples, error-vs-burnin, sharpness, scaling, timescale)"
            )),
        }
    }
}

/// Runs one experiment and writes its CSV to `config.output`.
pub fn run_experiment(
    kind: ExperimentKind,
    config: &ExperimentConfig,
) -> Result<(), ExperimentError> {
    config.validate()?;
    let mut out = Vec::new();
    match kind {
        ExperimentKind::ErrorVsSamples => error_vs_samples(config, &mut out)?,
        ExperimentKind::ErrorVsBurnin => error_vs_burnin(config, &mut out)?,
        ExperimentKind::Sharpness => sharpness(config, &mut out)?,
        ExperimentKind::Scaling => scaling(config, &mut out)?,
        ExperimentKind::Timescale => timescale(config, &mut out)?,
    }
    std::fs::write(&config.output, out)?;
    Ok(())
}

fn header(w: &mut impl Write, cfg: &ExperimentConfig, truth: Option<TruthSource>) -> std::io::Result<()> {
    writeln!(w, "# seed={} horizon={} chains={}", cfg.seed, cfg.horizon, cfg.chains)?;
    if let Some(src) = truth {
        match src {
            TruthSource::Exact => writeln!(w, "# truth=exact grid_n={}", cfg.grid_n)?,
            TruthSource::ReferenceRun => writeln!(
                w,
                "# truth=reference_run sweeps={} chains={}",
                cfg.reference_sweeps, cfg.reference_chains
            )?,
        }
    }
    Ok(())
}

fn error_vs_samples(cfg: &ExperimentConfig, w: &mut impl Write) -> Result<(), ExperimentError> {
    let model = cfg.build_model()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let evidence = cfg.build_evidence(&model, &mut rng)?;
    let (truth, source) = truth_stats(&model, &evidence, cfg)?;
    let n_max = *cfg.sample_counts.iter().max().unwrap();
    header(w, cfg, Some(source))?;
    writeln!(w, "burnin,n_samples,error")?;
    for &burnin in &cfg.burnins {
        let opts = GibbsOptions {
            burn_in: burnin,
            n_samples: n_max,
            thinning: cfg.thinning,
            order: SweepOrder::Systematic,
        };
        let pool = chain_stats_pool(&model, &evidence, cfg.horizon, &opts, cfg.chains, cfg.seed)?;
        for &n in &cfg.sample_counts {
            let est = pooled_mean(&pool, n)?;
            let err = pooled_error(&est, &truth, cfg.components_reported, cfg.threshold)?;
            writeln!(w, "{burnin},{n},{err}")?;
        }
    }
    Ok(())
}

fn error_vs_burnin(cfg: &ExperimentConfig, w: &mut impl Write) -> Result<(), ExperimentError> {
    let model = cfg.build_model()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let evidence = cfg.build_evidence(&model, &mut rng)?;
    let (truth, source) = truth_stats(&model, &evidence, cfg)?;
    let n = cfg.sample_counts[0];
    header(w, cfg, Some(source))?;
    writeln!(w, "burnin,n_samples,error")?;
    for &burnin in &cfg.burnins {
        let opts = GibbsOptions {
            burn_in: burnin,
            n_samples: n,
            thinning: cfg.thinning,
            order: SweepOrder::Systematic,
        };
        let pool = chain_stats_pool(&model, &evidence, cfg.horizon, &opts, cfg.chains, cfg.seed)?;
        let est = pooled_mean(&pool, n)?;
        let err = pooled_error(&est, &truth, cfg.components_reported, cfg.threshold)?;
        writeln!(w, "{burnin},{n},{err}")?;
    }
    Ok(())
}

fn sharpness(cfg: &ExperimentConfig, w: &mut impl Write) -> Result<(), ExperimentError> {
    let base = cfg.build_model()?;
    header(w, cfg, None)?;
    writeln!(w, "alpha,error")?;
    for &alpha in &cfg.alphas {
        let model = sharpen(&base, alpha)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let evidence = cfg.build_evidence(&model, &mut rng)?;
        let (truth, _) = truth_stats(&model, &evidence, cfg)?;
        let opts = GibbsOptions {
            burn_in: cfg.burnins[0],
            n_samples: cfg.sample_counts[0],
            thinning: cfg.thinning,
            order: SweepOrder::Systematic,
        };
        let pool = chain_stats_pool(&model, &evidence, cfg.horizon, &opts, cfg.chains, cfg.seed)?;
        let est = pooled_mean(&pool, cfg.sample_counts[0])?;
        let err = pooled_error(&est, &truth, cfg.components_reported, cfg.threshold)?;
        writeln!(w, "{alpha},{err}")?;
    }
    Ok(())
}

fn scaling(cfg: &ExperimentConfig, w: &mut impl Write) -> Result<(), ExperimentError> {
    let params = match &cfg.generator {
        Some(GeneratorSpec::Chain { params, .. }) => params.clone(),
        None => ChainNetworkParams::default(),
        Some(other) => {
            return Err(ExperimentError::BadConfig(format!(
                "scaling varies the chain generator; got {other:?}"
            )))
        }
    };
    let states = match &cfg.generator {
        Some(GeneratorSpec::Chain { states, .. }) => *states,
        _ => default_states(),
    };
    header(w, cfg, None)?;
    writeln!(w, "components,joint_states,truth_source,error,seconds")?;
    for &m in &cfg.component_counts {
        let model = generate_chain_network(m, states, &params, cfg.seed)?;
        // weak evidence: pinned all-zero start, free end
        let mut evidence = Evidence::empty(m);
        for ce in evidence.components.iter_mut() {
            ce.points.push((0.0, 0));
        }
        let (truth, source) = truth_stats(&model, &evidence, cfg)?;
        let opts = GibbsOptions {
            burn_in: cfg.burnins[0],
            n_samples: cfg.sample_counts[0],
            thinning: cfg.thinning,
            order: SweepOrder::Systematic,
        };
        let start = Instant::now();
        let pool = chain_stats_pool(&model, &evidence, cfg.horizon, &opts, cfg.chains, cfg.seed)?;
        let seconds = start.elapsed().as_secs_f64();
        let est = pooled_mean(&pool, cfg.sample_counts[0])?;
        let err = pooled_error(&est, &truth, cfg.components_reported, cfg.threshold)?;
        let joint = model
            .num_joint_states()
            .map(|n| n.to_string())
            .unwrap_or_else(|| "overflow".into());
        writeln!(w, "{m},{joint},{},{err},{seconds:.3}", source.label())?;
    }
    Ok(())
}

fn timescale(cfg: &ExperimentConfig, w: &mut impl Write) -> Result<(), ExperimentError> {
    let model = cfg.build_model()?;
    let m = model.num_components();
    let mut evidence = Evidence::empty(m);
    for ce in evidence.components.iter_mut() {
        ce.points.push((0.0, 0));
    }
    let opts = GibbsOptions {
        burn_in: cfg.burnins[0],
        n_samples: cfg.sample_counts[0],
        thinning: cfg.thinning,
        order: SweepOrder::Systematic,
    };
    let pool = chain_stats_pool(&model, &evidence, cfg.horizon, &opts, cfg.chains, cfg.seed)?;
    let mean = pooled_mean(&pool, cfg.sample_counts[0])?;
    header(w, cfg, None)?;
    writeln!(w, "component,mean_transitions,expected_unconditioned")?;
    for i in 0..m {
        let sampled: f64 = mean.transitions[i]
            .iter()
            .flat_map(|per_u| per_u.iter().flatten())
            .sum();
        // constant-exit-rate chains make the unconditioned count exact
        let rate = -model.cim(i, 0)[(0, 0)];
        writeln!(w, "{i},{sampled},{}", rate * cfg.horizon)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn chain_network_is_valid_and_deterministic() {
        let params = ChainNetworkParams::default();
        let a = generate_chain_network(5, 5, &params, 7).unwrap();
        let b = generate_chain_network(5, 5, &params, 7).unwrap();
        let c = generate_chain_network(5, 5, &params, 8).unwrap();
        assert!(a.validate().is_empty());
        assert_eq!(a.cim(0, 0), b.cim(0, 0));
        assert_ne!(a.cim(0, 0), c.cim(0, 0));
    }

    #[test]
    fn chain_network_loop_bias() {
        let model = generate_chain_network(5, 5, &ChainNetworkParams::default(), 3).unwrap();
        let q0 = model.cim(0, 0);
        assert!(q0[(0, 1)] > q0[(0, 2)]);
        assert!(q0[(0, 3)] > q0[(0, 2)]);
        assert!(q0[(3, 4)] > q0[(3, 1)]);
    }

    #[test]
    fn chain_network_follow_bias() {
        let model = generate_chain_network(3, 5, &ChainNetworkParams::default(), 3).unwrap();
        for i in 1..3 {
            for b in 0..5 {
                for a in 0..5 {
                    if a == b {
                        continue;
                    }
                    for c in 0..5 {
                        if c != b {
                            assert!(
                                model.cim(i, b)[(a, b)] > model.cim(i, c)[(a, b)],
                                "follow rate must dominate: i={i} a={a} b={b} c={c}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn chain_network_rejects_bad_params() {
        let mut params = ChainNetworkParams::default();
        params.perturb = 1.5;
        assert!(generate_chain_network(5, 5, &params, 0).is_err());
        assert!(generate_chain_network(0, 5, &ChainNetworkParams::default(), 0).is_err());
    }

    #[test]
    fn timescale_chain_halves_rates() {
        let model = generate_timescale_chain(4, 3, 8.0).unwrap();
        assert!(model.validate().is_empty());
        for i in 0..4 {
            let expected = 8.0 / 2f64.powi(i as i32);
            for u in 0..model.num_parent_states(i) {
                for a in 0..3 {
                    assert_abs_diff_eq!(-model.cim(i, u)[(a, a)], expected, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn sharpen_alpha_one_is_identity() {
        let model = generate_chain_network(3, 5, &ChainNetworkParams::default(), 11).unwrap();
        let sharpened = sharpen(&model, 1.0).unwrap();
        for i in 0..3 {
            for u in 0..model.num_parent_states(i) {
                let (q, s) = (model.cim(i, u), sharpened.cim(i, u));
                for a in 0..5 {
                    for b in 0..5 {
                        assert_abs_diff_eq!(q[(a, b)], s[(a, b)], epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn sharpen_alpha_zero_uniformizes() {
        let model = generate_chain_network(2, 5, &ChainNetworkParams::default(), 11).unwrap();
        let flat = sharpen(&model, 0.0).unwrap();
        for u in 0..5 {
            let (q, s) = (model.cim(1, u), flat.cim(1, u));
            for a in 0..5 {
                assert_abs_diff_eq!(s[(a, a)], q[(a, a)], epsilon = 1e-12);
                let uniform = -q[(a, a)] / 4.0;
                for b in 0..5 {
                    if b != a {
                        assert_abs_diff_eq!(s[(a, b)], uniform, epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn sharpen_preserves_generator_rows_and_rejects_zero_case() {
        let model = generate_chain_network(2, 5, &ChainNetworkParams::default(), 2).unwrap();
        for alpha in [0.3, 2.5] {
            let s = sharpen(&model, alpha).unwrap();
            assert!(s.validate().is_empty());
        }
        // a zero off-diagonal rate with alpha = 0 is ambiguous
        let q = DMatrix::from_row_slice(3, 3, &[-1.0, 1.0, 0.0, 1.0, -1.0, 0.0, 0.5, 0.5, -1.0]);
        let m = CtbnModel::from_parts(
            vec![3],
            vec![vec![]],
            vec![vec![q]],
            vec![vec![1.0 / 3.0; 3]],
        )
        .unwrap();
        assert!(matches!(sharpen(&m, 0.0), Err(ExperimentError::ZeroRateAtZeroAlpha)));
        assert!(sharpen(&m, 0.5).is_ok());
    }

    #[test]
    fn evidence_sets_have_the_documented_shape() {
        let model = generate_chain_network(5, 5, &ChainNetworkParams::default(), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let horizon = 3.0;

        let e1 = make_evidence("e1", &model, horizon, &mut rng).unwrap();
        let ends = [0usize, 1, 3, 0, 1];
        for i in 0..5 {
            assert_eq!(e1.components[i].points, vec![(0.0, 0), (horizon, ends[i])]);
            assert!(e1.components[i].intervals.is_empty());
        }

        let e2 = make_evidence("e2", &model, horizon, &mut rng).unwrap();
        let total: f64 = e2.components[4].intervals.iter().map(|&(s, e, _)| e - s).sum();
        assert_abs_diff_eq!(total, horizon, epsilon = 1e-9);
        assert!(e2.components[4].points.is_empty());

        let e3 = make_evidence("e3", &model, horizon, &mut rng).unwrap();
        assert!(e3.components.iter().all(|c| c.points == vec![(0.0, 0), (horizon, 0)]));

        let e4 = make_evidence("e4", &model, horizon, &mut rng).unwrap();
        assert!(e4.components.iter().all(|c| c.points == vec![(0.0, 0)]));

        let e5 = make_evidence("e5", &model, horizon, &mut rng).unwrap();
        assert_eq!(e5.components[0].intervals, vec![(0.0, horizon, 0)]);

        assert!(make_evidence("e9", &model, horizon, &mut rng).is_err());
        let small = generate_chain_network(2, 3, &ChainNetworkParams::default(), 1).unwrap();
        assert!(matches!(
            make_evidence("e1", &small, horizon, &mut rng),
            Err(ExperimentError::WrongNetworkShape(_))
        ));
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"output": "out.csv"}"#).unwrap();
        assert_eq!(cfg.horizon, 3.0);
        assert_eq!(cfg.chains, 8);
        assert_eq!(cfg.threshold, 0.05);
        assert!(cfg.validate().is_ok());

        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"output": "out.csv", "horizon": -1.0}"#).unwrap();
        assert!(cfg.validate().is_err());
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"output": "out.csv", "sample_counts": [0]}"#).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn endpoint_form_detection() {
        let mut ev = Evidence::empty(2);
        ev.components[0].points = vec![(0.0, 1), (3.0, 0)];
        ev.components[1].points = vec![(0.0, 0), (3.0, 2)];
        assert_eq!(
            endpoint_form(&ev, 3.0),
            Some((vec![1, 0], Some(vec![0, 2])))
        );

        let mut ev = Evidence::empty(2);
        ev.components[0].points = vec![(0.0, 1)];
        ev.components[1].points = vec![(0.0, 0)];
        assert_eq!(endpoint_form(&ev, 3.0), Some((vec![1, 0], None)));

        ev.components[1].intervals = vec![(0.0, 1.0, 0)];
        assert_eq!(endpoint_form(&ev, 3.0), None);

        // end pinned for only one of two components
        let mut ev = Evidence::empty(2);
        ev.components[0].points = vec![(0.0, 1), (3.0, 0)];
        ev.components[1].points = vec![(0.0, 0)];
        assert_eq!(endpoint_form(&ev, 3.0), None);
    }

    #[test]
    fn error_vs_samples_runs_and_is_deterministic() {
        let dir = std::env::temp_dir().join("ctbn-exp-test");
        std::fs::create_dir_all(&dir).unwrap();
        let out = dir.join("evs.csv");
        let cfg = ExperimentConfig {
            model_file: None,
            generator: Some(GeneratorSpec::Chain {
                components: 2,
                states: 2,
                params: ChainNetworkParams::default(),
            }),
            evidence: None,
            horizon: 1.0,
            chains: 2,
            burnins: vec![5],
            sample_counts: vec![5, 10],
            thinning: 1,
            alphas: vec![1.0],
            component_counts: vec![2],
            components_reported: 5,
            threshold: 0.05,
            grid_n: 200,
            reference_sweeps: 100,
            reference_chains: 2,
            seed: 9,
            output: out.clone(),
        };
        run_experiment(ExperimentKind::ErrorVsSamples, &cfg).unwrap();
        let first = std::fs::read(&out).unwrap();
        run_experiment(ExperimentKind::ErrorVsSamples, &cfg).unwrap();
        let second = std::fs::read(&out).unwrap();
        assert_eq!(first, second);
        let text = String::from_utf8(first).unwrap();
        assert!(text.contains("burnin,n_samples,error"));
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 3);
    }
}
