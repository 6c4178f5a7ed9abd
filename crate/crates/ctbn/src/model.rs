//! CTBN model representation: per-component state spaces, the parent
//! graph, conditional rate matrices (CIMs) and structural queries.
//!
//! A model with components `0..M` assigns each component `i` a state
//! space of size `d_i`, an ordered parent list, and one `d_i x d_i` rate
//! matrix per assignment of states to its parents. Parent assignments
//! index the CIM table in row-major order over the declared parent order
//! (first parent most significant). The joint state space is indexed the
//! same way over components, component 0 most significant.
//!
//! The component graph may be cyclic (`X` parent of `Y` and `Y` parent
//! of `X` is legal); only self-parenting is rejected.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use thiserror::Error;

/// Absolute tolerance for rate-matrix row sums and initial-vector sums.
/// Rows are never silently re-normalized.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Default cap on the amalgamated state-space size. Amalgamation is an
/// oracle-only path; anything larger should go through the sampler.
pub const DEFAULT_JOINT_CAP: usize = 4096;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("component id {id} out of range (model has {m} components)")]
    ComponentOutOfRange { id: usize, m: usize },
    #[error("joint state space has {size} states, exceeding the cap of {cap}")]
    JointCapExceeded { size: usize, cap: usize },
    #[error("inconsistent model shape: {0}")]
    Shape(String),
    #[error("model failed validation:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("model file parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

/// One violated model invariant, with enough indices to locate it.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    SelfParent { component: usize },
    DuplicateParent { component: usize, parent: usize },
    NegativeRate { component: usize, parent_state: usize, from: usize, to: usize, value: f64 },
    RowSumNonzero { component: usize, parent_state: usize, row: usize, sum: f64 },
    NegativeInitial { component: usize, state: usize, value: f64 },
    InitialSum { component: usize, sum: f64 },
    NonFiniteRate { component: usize, parent_state: usize, from: usize, to: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SelfParent { component } => {
                write!(f, "component {component} lists itself as a parent")
            }
            Violation::DuplicateParent { component, parent } => {
                write!(f, "component {component} lists parent {parent} twice")
            }
            Violation::NegativeRate { component, parent_state, from, to, value } => write!(
                f,
                "cim[{component}][{parent_state}] entry ({from},{to}) = {value} is negative"
            ),
            Violation::RowSumNonzero { component, parent_state, row, sum } => write!(
                f,
                "cim[{component}][{parent_state}] row {row} sums to {sum}, expected 0"
            ),
            Violation::NegativeInitial { component, state, value } => write!(
                f,
                "initial[{component}][{state}] = {value} is negative"
            ),
            Violation::InitialSum { component, sum } => {
                write!(f, "initial[{component}] sums to {sum}, expected 1")
            }
            Violation::NonFiniteRate { component, parent_state, from, to } => write!(
                f,
                "cim[{component}][{parent_state}] entry ({from},{to}) is not finite"
            ),
        }
    }
}

fn format_violations(vs: &[Violation]) -> String {
    vs.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n")
}

/// A full assignment of states to every component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointState(pub Vec<usize>);

impl JointState {
    pub fn validate(&self, model: &CtbnModel) -> Result<(), ModelError> {
        if self.0.len() != model.num_components() {
            return Err(ModelError::Shape(format!(
                "joint state has {} entries, model has {} components",
                self.0.len(),
                model.num_components()
            )));
        }
        for (i, &a) in self.0.iter().enumerate() {
            if a >= model.state_size(i) {
                return Err(ModelError::Shape(format!(
                    "state {a} out of range for component {i} (d = {})",
                    model.state_size(i)
                )));
            }
        }
        Ok(())
    }
}

/// A continuous-time Bayesian network: component graph plus conditional
/// rate matrices. Immutable after construction, safe to share across
/// concurrent chains.
#[derive(Debug, Clone)]
pub struct CtbnModel {
    state_sizes: Vec<usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    /// `cims[i][u]` is the `d_i x d_i` rate matrix of component `i` when
    /// its parents are in flattened assignment `u`.
    cims: Vec<Vec<DMatrix<f64>>>,
    /// Product-form initial distribution, one probability vector per
    /// component.
    initial: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    state_sizes: Vec<usize>,
    parents: Vec<Vec<usize>>,
    /// `cims[i][u]` is a nested `d_i x d_i` row-major array.
    cims: Vec<Vec<Vec<Vec<f64>>>>,
    initial: Vec<Vec<f64>>,
}

impl CtbnModel {
    /// Builds a model from raw parts, checking shape consistency only.
    /// Numeric invariants are checked separately by [`CtbnModel::validate`],
    /// so deliberately broken models can still be constructed for
    /// report-style validation.
    pub fn from_parts(
        state_sizes: Vec<usize>,
        parents: Vec<Vec<usize>>,
        cims: Vec<Vec<DMatrix<f64>>>,
        initial: Vec<Vec<f64>>,
    ) -> Result<Self, ModelError> {
        let m = state_sizes.len();
        if parents.len() != m || cims.len() != m || initial.len() != m {
            return Err(ModelError::Shape(format!(
                "field lengths disagree: state_sizes {m}, parents {}, cims {}, initial {}",
                parents.len(),
                cims.len(),
                initial.len()
            )));
        }
        if let Some(i) = state_sizes.iter().position(|&d| d == 0) {
            return Err(ModelError::Shape(format!("component {i} has 0 states")));
        }
        for (i, ps) in parents.iter().enumerate() {
            for &p in ps {
                if p >= m {
                    return Err(ModelError::ComponentOutOfRange { id: p, m });
                }
            }
            let expected: usize = ps.iter().map(|&p| state_sizes[p]).product();
            if cims[i].len() != expected {
                return Err(ModelError::Shape(format!(
                    "component {i} has {} cim tables, expected {expected}",
                    cims[i].len()
                )));
            }
            for (u, q) in cims[i].iter().enumerate() {
                if q.nrows() != state_sizes[i] || q.ncols() != state_sizes[i] {
                    return Err(ModelError::Shape(format!(
                        "cim[{i}][{u}] is {}x{}, expected {d}x{d}",
                        q.nrows(),
                        q.ncols(),
                        d = state_sizes[i]
                    )));
                }
            }
            if initial[i].len() != state_sizes[i] {
                return Err(ModelError::Shape(format!(
                    "initial[{i}] has {} entries, expected {}",
                    initial[i].len(),
                    state_sizes[i]
                )));
            }
        }
        let children = compute_children(&parents);
        Ok(CtbnModel { state_sizes, parents, children, cims, initial })
    }

    /// Checks the numeric invariants, returning every violation found.
    /// An empty report means the model is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (i, ps) in self.parents.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for &p in ps {
                if p == i {
                    out.push(Violation::SelfParent { component: i });
                }
                if !seen.insert(p) {
                    out.push(Violation::DuplicateParent { component: i, parent: p });
                }
            }
        }
        for (i, tables) in self.cims.iter().enumerate() {
            for (u, q) in tables.iter().enumerate() {
                for a in 0..q.nrows() {
                    let mut sum = 0.0;
                    for b in 0..q.ncols() {
                        let v = q[(a, b)];
                        if !v.is_finite() {
                            out.push(Violation::NonFiniteRate {
                                component: i,
                                parent_state: u,
                                from: a,
                                to: b,
                            });
                            continue;
                        }
                        if a != b && v < 0.0 {
                            out.push(Violation::NegativeRate {
                                component: i,
                                parent_state: u,
                                from: a,
                                to: b,
                                value: v,
                            });
                        }
                        sum += v;
                    }
                    if sum.abs() > ROW_SUM_TOL {
                        out.push(Violation::RowSumNonzero {
                            component: i,
                            parent_state: u,
                            row: a,
                            sum,
                        });
                    }
                }
            }
        }
        for (i, p0) in self.initial.iter().enumerate() {
            let mut sum = 0.0;
            for (s, &v) in p0.iter().enumerate() {
                if v < 0.0 {
                    out.push(Violation::NegativeInitial { component: i, state: s, value: v });
                }
                sum += v;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                out.push(Violation::InitialSum { component: i, sum });
            }
        }
        out
    }

    pub fn num_components(&self) -> usize {
        self.state_sizes.len()
    }

    pub fn state_size(&self, i: usize) -> usize {
        self.state_sizes[i]
    }

    pub fn state_sizes(&self) -> &[usize] {
        &self.state_sizes
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn initial(&self, i: usize) -> &[f64] {
        &self.initial[i]
    }

    pub fn cim(&self, i: usize, parent_state: usize) -> &DMatrix<f64> {
        &self.cims[i][parent_state]
    }

    pub fn num_parent_states(&self, i: usize) -> usize {
        self.cims[i].len()
    }

    /// Projects a full joint assignment onto `parents(i)`, in declared
    /// parent order.
    pub fn parent_projection(&self, i: usize, joint: &[usize]) -> Result<Vec<usize>, ModelError> {
        self.check_component(i)?;
        Ok(self.parents[i].iter().map(|&p| joint[p]).collect())
    }

    /// Flattened parent-state index for component `i` given a full joint
    /// assignment: row-major over the declared parent order.
    pub fn parent_state_index(&self, i: usize, joint: &[usize]) -> usize {
        self.parents[i]
            .iter()
            .fold(0, |acc, &p| acc * self.state_sizes[p] + joint[p])
    }

    /// Parents, children and children's parents of `i`, minus `i` itself.
    pub fn markov_blanket(&self, i: usize) -> Result<BTreeSet<usize>, ModelError> {
        self.check_component(i)?;
        let mut mb: BTreeSet<usize> = self.parents[i].iter().copied().collect();
        for &c in &self.children[i] {
            mb.insert(c);
            mb.extend(self.parents[c].iter().copied());
        }
        mb.remove(&i);
        Ok(mb)
    }

    fn check_component(&self, i: usize) -> Result<(), ModelError> {
        if i >= self.num_components() {
            Err(ModelError::ComponentOutOfRange { id: i, m: self.num_components() })
        } else {
            Ok(())
        }
    }

    /// Size of the amalgamated joint state space, if it fits in `usize`.
    pub fn num_joint_states(&self) -> Option<usize> {
        self.state_sizes.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
    }

    /// Joint index of a full assignment (component 0 most significant).
    pub fn joint_index(&self, a: &[usize]) -> usize {
        a.iter()
            .zip(&self.state_sizes)
            .fold(0, |acc, (&ai, &d)| acc * d + ai)
    }

    /// Inverse of [`CtbnModel::joint_index`].
    pub fn joint_assignment(&self, mut idx: usize) -> Vec<usize> {
        let mut a = vec![0; self.num_components()];
        for i in (0..self.num_components()).rev() {
            a[i] = idx % self.state_sizes[i];
            idx /= self.state_sizes[i];
        }
        a
    }

    /// Amalgamates the conditional rate matrices into the joint rate
    /// matrix: entry (a, b) sums each component's rate for the single
    /// differing coordinate; entries where two or more components differ
    /// are exactly zero.
    pub fn amalgamate(&self) -> Result<DMatrix<f64>, ModelError> {
        self.amalgamate_capped(DEFAULT_JOINT_CAP)
    }

    pub fn amalgamate_capped(&self, cap: usize) -> Result<DMatrix<f64>, ModelError> {
        let n = self
            .num_joint_states()
            .filter(|&n| n <= cap)
            .ok_or(ModelError::JointCapExceeded {
                size: self.num_joint_states().unwrap_or(usize::MAX),
                cap,
            })?;
        // stride of component i in the joint index
        let m = self.num_components();
        let mut strides = vec![1usize; m];
        for i in (0..m.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.state_sizes[i + 1];
        }
        let mut q = DMatrix::zeros(n, n);
        for a_idx in 0..n {
            let a = self.joint_assignment(a_idx);
            for i in 0..m {
                let u = self.parent_state_index(i, &a);
                let cim = &self.cims[i][u];
                let ai = a[i];
                q[(a_idx, a_idx)] += cim[(ai, ai)];
                for b in 0..self.state_sizes[i] {
                    if b != ai {
                        let b_idx = a_idx + b * strides[i] - ai * strides[i];
                        q[(a_idx, b_idx)] += cim[(ai, b)];
                    }
                }
            }
        }
        Ok(q)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: ModelFile = serde_json::from_str(text)?;
        let cims = file
            .cims
            .iter()
            .enumerate()
            .map(|(i, tables)| {
                let d = *file.state_sizes.get(i).unwrap_or(&0);
                tables
                    .iter()
                    .map(|rows| {
                        DMatrix::from_fn(d, d, |r, c| {
                            rows.get(r).and_then(|row| row.get(c)).copied().unwrap_or(f64::NAN)
                        })
                    })
                    .collect()
            })
            .collect();
        Self::from_parts(file.state_sizes, file.parents, cims, file.initial)
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            state_sizes: self.state_sizes.clone(),
            parents: self.parents.clone(),
            cims: self
                .cims
                .iter()
                .map(|tables| {
                    tables
                        .iter()
                        .map(|q| {
                            (0..q.nrows())
                                .map(|r| (0..q.ncols()).map(|c| q[(r, c)]).collect())
                                .collect()
                        })
                        .collect()
                })
                .collect(),
            initial: self.initial.clone(),
        };
        serde_json::to_string_pretty(&file).expect("model serialization cannot fail")
    }

    /// Loads a model file and rejects it if validation reports anything.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)?;
        let model = Self::from_json(&text)?;
        let report = model.validate();
        if report.is_empty() {
            Ok(model)
        } else {
            Err(ModelError::Invalid(report))
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

fn compute_children(parents: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut children = vec![Vec::new(); parents.len()];
    for (i, ps) in parents.iter().enumerate() {
        for &p in ps {
            if p < parents.len() {
                children[p].push(i);
            }
        }
    }
    children
}
