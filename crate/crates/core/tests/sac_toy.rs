//! Learning-loop oracle: soft actor-critic must solve the built-in
//! one-dimensional reach task to near-optimal return on every seed.

use nalgebra::DVector;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use softquad::learn::{sac_train, GaussianPolicy, SacParams, Task, ToyReach};

fn deterministic_return(task: &mut ToyReach, policy: &GaussianPolicy) -> f64 {
    let mut obs = task.reset(0).unwrap();
    let mut total = 0.0;
    loop {
        let a = policy.mean_action(&obs).unwrap();
        let (next, r, done, _) = task.step(a.as_slice()).unwrap();
        total += r;
        obs = next;
        if done {
            break;
        }
    }
    total
}

#[test]
fn toy_reach_reaches_ninety_percent_of_optimal_on_three_seeds() {
    let params = SacParams {
        hidden: vec![32, 32],
        gamma: 0.99,
        tau: 0.005,
        batch_size: 64,
        buffer_capacity: 50_000,
        warmup_episodes: 10,
        critic_lr_start: 1e-3,
        critic_lr_end: 3e-4,
        actor_lr: 3e-4,
        alpha_lr: 3e-4,
        entropy_target: -1.0,
        updates_per_step: 1,
    };
    let optimal = ToyReach::new().optimal_return();
    let mut task = ToyReach::new();
    // 600 episodes × 50 steps = 30k environment steps, inside the 50k budget
    let episodes = 600;

    for seed in [1u64, 2, 3] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut policy = GaussianPolicy::new(1, &params.hidden, 1, -1.0, &mut rng).unwrap();
        sac_train(&mut task, &mut policy, &params, episodes, seed).unwrap();
        let final_ret = deterministic_return(&mut task, &policy);
        assert!(
            final_ret >= 0.9 * optimal,
            "seed {seed}: return {final_ret:.2} below 90% of optimal {optimal:.2}"
        );
        // sanity: the policy pushes toward the target from both sides
        let a = policy.mean_action(&DVector::from_element(1, 1.0)).unwrap();
        assert!(a[0] < 0.0, "action at x = 1 should be negative, got {}", a[0]);
    }
}
