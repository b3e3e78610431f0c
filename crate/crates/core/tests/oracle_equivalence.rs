mod support;

use cache_rl::oracle::{bellman_optimality_residual, solve, StateSpace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::{brute_force, max_abs_diff, stay_or_switch_search, Instance, Mdp};

const GAMMA: f64 = 0.8;

fn library_solution(inst: &Instance) -> (Vec<usize>, Vec<f64>, Vec<Vec<f64>>, f64) {
    let (g, l) = inst.chains();
    let space = StateSpace::new(g, l, inst.capacity).unwrap();
    let sol = solve(&space, GAMMA, &inst.params()).unwrap();
    let residual = bellman_optimality_residual(&space, &sol.q, GAMMA, &inst.params()).unwrap();
    let q = (0..sol.q.num_states()).map(|s| sol.q.row(s).to_vec()).collect();
    (sol.policy.0, sol.value.0, q, residual)
}

#[test]
fn policy_iteration_matches_every_policy_enumerated() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    // (F, M, |P_G|, |P_L|): |A|^|S| stays below 10^5 for each.
    let shapes = [(3, 1, 2, 1), (3, 2, 1, 2), (4, 1, 2, 1), (4, 2, 1, 1), (4, 3, 1, 2), (5, 4, 1, 1), (2, 1, 2, 2)];
    for &(f, m, ng, nl) in &shapes {
        for _ in 0..3 {
            let inst = Instance::random(&mut rng, f, m, ng, nl);
            let mdp = Mdp::build(&inst);
            let reference = brute_force(&mdp, GAMMA);
            let (policy, value, q, residual) = library_solution(&inst);
            assert_eq!(policy, reference.policy, "shape {:?}", (f, m, ng, nl));
            assert!(max_abs_diff(&value, &reference.value) < 1e-9);
            let q_ref = mdp.q_from_value(&reference.value, GAMMA);
            for (row, row_ref) in q.iter().zip(&q_ref) {
                assert!(max_abs_diff(row, row_ref) < 1e-9);
            }
            assert!(residual < 1e-8);
            assert!(mdp.bellman_residual(&q, GAMMA) < 1e-8);
        }
    }
}

#[test]
fn stay_or_switch_family_contains_the_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for &(f, ng, nl) in &[(3, 2, 2), (4, 2, 1), (3, 1, 3)] {
        let inst = Instance::random(&mut rng, f, 1, ng, nl);
        let mdp = Mdp::build(&inst);
        let full = brute_force(&mdp, GAMMA);
        let reduced = stay_or_switch_search(&mdp, GAMMA);
        assert_eq!(full.policy, reduced.policy);
        assert!(max_abs_diff(&full.value, &reduced.value) < 1e-9);
        assert!(reduced.evaluated < full.evaluated);
    }
}

#[test]
fn stay_or_switch_family_size() {
    // b (F choices) times stay/switch for the F-1 other files, with the
    // all-stay map counted once.
    for f in 2..=5 {
        let expected = f * (1 << (f - 1)) - (f - 1);
        assert_eq!(support::stay_or_switch_maps(f).len(), expected);
    }
}

#[test]
fn large_refresh_cost_freezes_the_cache() {
    // When refreshing costs more than any possible mismatch saving over the
    // whole horizon, the optimal policy never changes the cache.
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut inst = Instance::random(&mut rng, 4, 2, 2, 2);
    inst.lambda = [1e6, 1.0, 1.0];
    let (policy, _, _, _) = library_solution(&inst);
    let na = 6;
    for (s, &a) in policy.iter().enumerate() {
        assert_eq!(a, s % na);
    }
}
