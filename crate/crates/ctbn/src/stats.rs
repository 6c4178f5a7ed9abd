//! Sufficient statistics of CTBN trajectories: per-(component, parent
//! state) residence times and transition counts, Monte Carlo averaging,
//! and the average-relative-error metric used to score estimates.

use crate::model::CtbnModel;
use crate::trajectory::JointTrajectory;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("cannot average an empty list of statistics")]
    EmptyMean,
    #[error("statistics shapes do not match")]
    ShapeMismatch,
    #[error("no reference entry exceeds the threshold {0}")]
    NothingAboveThreshold(f64),
}

/// Residence times and transition counts, indexed by component, flattened
/// parent state, and component state(s).
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    /// `residence[i][u][a]`: time component `i` spends in state `a` while
    /// its parents are in state `u`.
    pub residence: Vec<Vec<Vec<f64>>>,
    /// `transitions[i][u][a][b]`: number of `a -> b` transitions of
    /// component `i` while its parents are in state `u` (diagonal unused).
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
}

impl SufficientStats {
    pub fn zeros(model: &CtbnModel) -> Self {
        let m = model.num_components();
        let residence = (0..m)
            .map(|i| vec![vec![0.0; model.state_size(i)]; model.num_parent_states(i)])
            .collect();
        let transitions = (0..m)
            .map(|i| {
                vec![
                    vec![vec![0.0; model.state_size(i)]; model.state_size(i)];
                    model.num_parent_states(i)
                ]
            })
            .collect();
        SufficientStats { residence, transitions }
    }

    /// Flattened view: residence entries first, then off-diagonal
    /// transition counts, in deterministic index order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for comp in &self.residence {
            for u in comp {
                out.extend_from_slice(u);
            }
        }
        for comp in &self.transitions {
            for u in comp {
                for (a, row) in u.iter().enumerate() {
                    for (b, &v) in row.iter().enumerate() {
                        if a != b {
                            out.push(v);
                        }
                    }
                }
            }
        }
        out
    }

    /// Restricts both tables to the first `k` components.
    pub fn truncate_components(&self, k: usize) -> SufficientStats {
        SufficientStats {
            residence: self.residence.iter().take(k).cloned().collect(),
            transitions: self.transitions.iter().take(k).cloned().collect(),
        }
    }

    pub fn add_assign(&mut self, other: &SufficientStats) {
        for (a, b) in self.residence.iter_mut().zip(&other.residence) {
            for (a, b) in a.iter_mut().zip(b) {
                for (a, b) in a.iter_mut().zip(b) {
                    *a += b;
                }
            }
        }
        for (a, b) in self.transitions.iter_mut().zip(&other.transitions) {
            for (a, b) in a.iter_mut().zip(b) {
                for (a, b) in a.iter_mut().zip(b) {
                    for (a, b) in a.iter_mut().zip(b) {
                        *a += b;
                    }
                }
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for comp in &mut self.residence {
            for u in comp {
                for v in u {
                    *v *= factor;
                }
            }
        }
        for comp in &mut self.transitions {
            for u in comp {
                for row in u {
                    for v in row {
                        *v *= factor;
                    }
                }
            }
        }
    }

    /// CSV rows (component, parent_state_index, state_a, state_b_or_blank,
    /// value): residence entries leave state_b blank.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "component,parent_state_index,state_a,state_b,value")?;
        for (i, comp) in self.residence.iter().enumerate() {
            for (u, states) in comp.iter().enumerate() {
                for (a, &v) in states.iter().enumerate() {
                    writeln!(w, "{i},{u},{a},,{v}")?;
                }
            }
        }
        for (i, comp) in self.transitions.iter().enumerate() {
            for (u, rows) in comp.iter().enumerate() {
                for (a, row) in rows.iter().enumerate() {
                    for (b, &v) in row.iter().enumerate() {
                        if a != b {
                            writeln!(w, "{i},{u},{a},{b},{v}")?;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Realized sufficient statistics of one joint trajectory. Each piece of
/// component `i`'s path is attributed to the parent state in force
/// during it; transitions take the parents' left-limit state.
pub fn accumulate_stats(model: &CtbnModel, joint: &JointTrajectory) -> SufficientStats {
    let mut stats = SufficientStats::zeros(model);
    for i in 0..model.num_components() {
        let traj = &joint.components[i];
        // refinement breakpoints: own transitions plus parent transitions
        let mut times = vec![traj.t_start, traj.t_end];
        times.extend(traj.transitions.iter().map(|&(t, _)| t));
        for &p in model.parents(i) {
            times.extend(
                joint.components[p]
                    .transitions
                    .iter()
                    .map(|&(t, _)| t)
                    .filter(|&t| t > traj.t_start && t < traj.t_end),
            );
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
        for w in times.windows(2) {
            let (s, e) = (w[0], w[1]);
            if e <= s {
                continue;
            }
            let a = traj.state_at(s);
            let joint_state = joint.state_at(s);
            let u = model.parent_state_index(i, &joint_state);
            stats.residence[i][u][a] += e - s;
        }
        for &(tau, b) in &traj.transitions {
            let a = traj.state_before(tau);
            let left = joint.state_before(tau);
            let u = model.parent_state_index(i, &left);
            stats.transitions[i][u][a][b] += 1.0;
        }
    }
    stats
}

/// Entrywise arithmetic mean.
pub fn mean_stats(samples: &[SufficientStats]) -> Result<SufficientStats, StatsError> {
    let first = samples.first().ok_or(StatsError::EmptyMean)?;
    let mut acc = first.clone();
    for s in &samples[1..] {
        if s.residence.len() != acc.residence.len() {
            return Err(StatsError::ShapeMismatch);
        }
        acc.add_assign(s);
    }
    acc.scale(1.0 / samples.len() as f64);
    Ok(acc)
}

/// Mean of |est - truth| / truth over flattened entries with
/// truth > threshold.
pub fn average_relative_error(
    est: &SufficientStats,
    truth: &SufficientStats,
    threshold: f64,
) -> Result<f64, StatsError> {
    let e = est.flatten();
    let t = truth.flatten();
    if e.len() != t.len() {
        return Err(StatsError::ShapeMismatch);
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (&ev, &tv) in e.iter().zip(&t) {
        if tv > threshold {
            sum += (ev - tv).abs() / tv;
            count += 1;
        }
    }
    if count == 0 {
        return Err(StatsError::NothingAboveThreshold(threshold));
    }
    Ok(sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_fixtures::{coupled_pair, random_model};
    use crate::trajectory::ComponentTrajectory;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_trajectories_put_all_mass_in_one_cell() {
        let model = coupled_pair(2, 1);
        let joint = JointTrajectory {
            horizon: 3.0,
            components: vec![
                ComponentTrajectory::constant(0, 0.0, 3.0, 1),
                ComponentTrajectory::constant(1, 0.0, 3.0, 0),
            ],
        };
        let s = accumulate_stats(&model, &joint);
        assert_abs_diff_eq!(s.residence[0][0][1], 3.0); // X in state 1, parent Y in 0
        assert_abs_diff_eq!(s.residence[1][1][0], 3.0);
        assert!(s.transitions.iter().flatten().flatten().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn single_transition_splits_residence() {
        let model = coupled_pair(2, 1);
        let joint = JointTrajectory {
            horizon: 2.0,
            components: vec![
                ComponentTrajectory {
                    component: 0,
                    t_start: 0.0,
                    t_end: 2.0,
                    initial_state: 0,
                    transitions: vec![(1.0, 1)],
                },
                ComponentTrajectory::constant(1, 0.0, 2.0, 1),
            ],
        };
        let s = accumulate_stats(&model, &joint);
        assert_abs_diff_eq!(s.residence[0][1][0], 1.0);
        assert_abs_diff_eq!(s.residence[0][1][1], 1.0);
        assert_abs_diff_eq!(s.transitions[0][1][0][1], 1.0);
    }

    /// Fine-grid Riemann oracle for residence times.
    fn riemann_residence(model: &CtbnModel, joint: &JointTrajectory, h: f64) -> SufficientStats {
        let mut s = SufficientStats::zeros(model);
        let n = (joint.horizon / h).round() as usize;
        for k in 0..n {
            let t = (k as f64 + 0.5) * h;
            let state = joint.state_at(t);
            for i in 0..model.num_components() {
                let u = model.parent_state_index(i, &state);
                s.residence[i][u][state[i]] += h;
            }
        }
        s
    }

    #[test]
    fn residence_matches_fine_grid_oracle() {
        let model = coupled_pair(3, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let joint = crate::sampler::sample_generative(&model, 2.0, None, &mut rng).unwrap();
        let exact = accumulate_stats(&model, &joint);
        let grid = riemann_residence(&model, &joint, 1e-6);
        for i in 0..2 {
            for u in 0..3 {
                for a in 0..3 {
                    assert_abs_diff_eq!(
                        exact.residence[i][u][a],
                        grid.residence[i][u][a],
                        epsilon = 1e-4
                    );
                }
            }
        }
    }

    #[test]
    fn residence_partitions_horizon_and_counts_match() {
        let model = random_model(3, 3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let horizon = 1.0 + rng.gen::<f64>() * 3.0;
            let joint = crate::sampler::sample_generative(&model, horizon, None, &mut rng).unwrap();
            let s = accumulate_stats(&model, &joint);
            for i in 0..model.num_components() {
                let total: f64 = s.residence[i].iter().flatten().sum();
                assert_abs_diff_eq!(total, horizon, epsilon = 1e-9);
                let counted: f64 = s.transitions[i].iter().flatten().flatten().sum();
                assert_eq!(counted as usize, joint.components[i].num_transitions());
            }
        }
    }

    #[test]
    fn mean_stats_cases() {
        let model = coupled_pair(2, 1);
        let joint = JointTrajectory {
            horizon: 1.0,
            components: vec![
                ComponentTrajectory::constant(0, 0.0, 1.0, 0),
                ComponentTrajectory::constant(1, 0.0, 1.0, 0),
            ],
        };
        let a = accumulate_stats(&model, &joint);
        assert_eq!(mean_stats(&[a.clone()]).unwrap(), a);

        let mut b = a.clone();
        b.residence[0][0][0] = 0.0;
        b.residence[0][0][1] = 1.0;
        let mid = mean_stats(&[a.clone(), b]).unwrap();
        assert_abs_diff_eq!(mid.residence[0][0][0], 0.5);
        assert_abs_diff_eq!(mid.residence[0][0][1], 0.5);
        let total: f64 = mid.residence[0].iter().flatten().sum();
        assert_abs_diff_eq!(total, 1.0);

        assert!(matches!(mean_stats(&[]), Err(StatsError::EmptyMean)));
    }

    #[test]
    fn average_relative_error_cases() {
        let model = coupled_pair(2, 1);
        let truth = {
            let mut s = SufficientStats::zeros(&model);
            s.residence[0][0][0] = 1.0;
            s
        };
        assert_abs_diff_eq!(average_relative_error(&truth, &truth, 0.05).unwrap(), 0.0);

        let mut est = truth.clone();
        est.residence[0][0][0] = 1.1;
        assert_abs_diff_eq!(
            average_relative_error(&est, &truth, 0.05).unwrap(),
            0.1,
            epsilon = 1e-12
        );

        // entries at or below the threshold are excluded
        let mut truth2 = truth.clone();
        truth2.residence[0][0][1] = 0.05;
        let mut est2 = est.clone();
        est2.residence[0][0][1] = 5.0;
        assert_abs_diff_eq!(
            average_relative_error(&est2, &truth2, 0.05).unwrap(),
            0.1,
            epsilon = 1e-12
        );

        let zeros = SufficientStats::zeros(&model);
        assert!(matches!(
            average_relative_error(&zeros, &zeros, 0.05),
            Err(StatsError::NothingAboveThreshold(_))
        ));
    }
}
