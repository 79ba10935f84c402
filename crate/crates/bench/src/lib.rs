//! Input fixtures shared by the benchmarks.

use covmatch::covariates::seed_block_rows;
use covmatch::glm::Observation;
use covmatch::nalgebra::DMatrix;
use covmatch::simulate::{generate_instance, rep_rng, Instance, Setup, SimConfig};
use covmatch::{CostMatrix, Sense};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn cost_matrix(m: usize, seed: u64) -> CostMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = DMatrix::from_fn(m, m, |_, _| rng.random_range(0.0..100.0));
    CostMatrix::new(data, Sense::Min).expect("finite square costs")
}

/// An easy-setup simulated instance with `n` vertices and `n / 3` seeds.
pub fn instance(n: usize, seed: u64) -> Instance {
    let mut cfg = SimConfig::desk(Setup::Easy, 0.55, 0.45);
    cfg.n = n;
    cfg.n_seeds = n / 3;
    generate_instance(&cfg, &mut rep_rng(seed, 0)).expect("valid configuration")
}

pub fn seed_rows(inst: &Instance) -> Vec<Observation> {
    seed_block_rows(&inst.a, &inst.b_tilde, &inst.covariates(), &inst.seeds)
        .expect("consistent instance")
}
