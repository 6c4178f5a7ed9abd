//! Shared fixtures for unit and integration tests. Not part of the
//! public API.

use crate::model::CtbnModel;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Single 2-state component flipping symmetrically at `rate`.
pub fn symmetric_two_state(rate: f64) -> CtbnModel {
    let q = DMatrix::from_row_slice(2, 2, &[-rate, rate, rate, -rate]);
    CtbnModel::from_parts(vec![2], vec![vec![]], vec![vec![q]], vec![vec![0.5, 0.5]]).unwrap()
}

/// Two independent 2-state components, each flipping at rate 1.
pub fn two_independent_binary() -> CtbnModel {
    let q = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
    CtbnModel::from_parts(
        vec![2, 2],
        vec![vec![], vec![]],
        vec![vec![q.clone()], vec![q]],
        vec![vec![0.5, 0.5], vec![0.5, 0.5]],
    )
    .unwrap()
}

/// Random proper rate matrix with off-diagonal entries in (0.1, 1.1).
pub fn random_rate_matrix(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(d, d);
    for a in 0..d {
        let mut sum = 0.0;
        for b in 0..d {
            if a != b {
                let r = 0.1 + rng.gen::<f64>();
                q[(a, b)] = r;
                sum += r;
            }
        }
        q[(a, a)] = -sum;
    }
    q
}

/// Random valid CTBN with up to `max_m` components of up to `max_d`
/// states, random sparse parent structure (cycles allowed).
pub fn random_model(seed: u64, max_m: usize, max_d: usize) -> CtbnModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.gen_range(1..=max_m);
    let state_sizes: Vec<usize> = (0..m).map(|_| rng.gen_range(2..=max_d)).collect();
    let parents: Vec<Vec<usize>> = (0..m)
        .map(|i| {
            (0..m)
                .filter(|&j| j != i && rng.gen_bool(0.3))
                .collect()
        })
        .collect();
    let cims = (0..m)
        .map(|i| {
            let tables: usize = parents[i].iter().map(|&p| state_sizes[p]).product();
            (0..tables)
                .map(|_| random_rate_matrix(&mut rng, state_sizes[i]))
                .collect()
        })
        .collect();
    let initial = state_sizes
        .iter()
        .map(|&d| {
            let raw: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() + 0.05).collect();
            let sum: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / sum).collect()
        })
        .collect();
    CtbnModel::from_parts(state_sizes, parents, cims, initial).unwrap()
}

/// Two mutually-dependent components (X <-> Y), the shape used by the
/// single-window sampling scenario.
pub fn coupled_pair(d: usize, seed: u64) -> CtbnModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cims_x = (0..d).map(|_| random_rate_matrix(&mut rng, d)).collect();
    let cims_y = (0..d).map(|_| random_rate_matrix(&mut rng, d)).collect();
    CtbnModel::from_parts(
        vec![d, d],
        vec![vec![1], vec![0]],
        vec![cims_x, cims_y],
        vec![vec![1.0 / d as f64; d]; 2],
    )
    .unwrap()
}
