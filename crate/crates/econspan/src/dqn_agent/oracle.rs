//! Exact solution of the gridworld MDP by value iteration.
//!
//! The environment is small (a few hundred states) and deterministic, so
//! the Bellman optimality equations can be solved to machine precision.
//! The resulting greedy policy is the ground truth that learned policies
//! are compared against.

use crate::environment::{Action, BridgeEnv, GridState, ALL_ACTIONS};

use super::AgentError;

/// Optimal state values and a greedy policy (ties to the lowest action
/// code).
#[derive(Debug, Clone)]
pub struct ValueIterationResult {
    pub values: Vec<f64>,
    pub policy: Vec<Action>,
    pub iterations: usize,
}

/// Iterates the Bellman optimality operator on scaled rewards
/// (`-cell_cost * reward_scale`) until the max-norm change drops below
/// `tol`.
pub fn value_iteration(
    env: &BridgeEnv,
    gamma: f64,
    reward_scale: f64,
    tol: f64,
) -> Result<ValueIterationResult, AgentError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(AgentError::InvalidConfig(format!(
            "value iteration requires 0 <= gamma < 1, got {gamma}"
        )));
    }
    if !(tol > 0.0) {
        return Err(AgentError::InvalidConfig(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let n = env.num_states();
    // Deterministic transition and reward tables.
    let mut next = vec![0usize; n * ALL_ACTIONS.len()];
    let mut reward = vec![0.0f64; n * ALL_ACTIONS.len()];
    for index in 0..n {
        let s = env.state_from_index(index)?;
        for (ai, &a) in ALL_ACTIONS.iter().enumerate() {
            let ns = env.transition(s, a);
            next[index * ALL_ACTIONS.len() + ai] = ns.index();
            reward[index * ALL_ACTIONS.len() + ai] = -env.cell_cost(ns) * reward_scale;
        }
    }

    let mut values = vec![0.0f64; n];
    let mut new_values = vec![0.0f64; n];
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut delta: f64 = 0.0;
        for index in 0..n {
            let base = index * ALL_ACTIONS.len();
            let mut best = f64::NEG_INFINITY;
            for ai in 0..ALL_ACTIONS.len() {
                let q = reward[base + ai] + gamma * values[next[base + ai]];
                if q > best {
                    best = q;
                }
            }
            delta = delta.max((best - values[index]).abs());
            new_values[index] = best;
        }
        std::mem::swap(&mut values, &mut new_values);
        if delta < tol {
            break;
        }
        if iterations > 10_000_000 {
            return Err(AgentError::InvalidConfig(
                "value iteration failed to converge".into(),
            ));
        }
    }

    let policy = (0..n)
        .map(|index| {
            let base = index * ALL_ACTIONS.len();
            let mut best_action = ALL_ACTIONS[0];
            let mut best = f64::NEG_INFINITY;
            for (ai, &a) in ALL_ACTIONS.iter().enumerate() {
                let q = reward[base + ai] + gamma * values[next[base + ai]];
                if q > best {
                    best = q;
                    best_action = a;
                }
            }
            best_action
        })
        .collect();

    Ok(ValueIterationResult {
        values,
        policy,
        iterations,
    })
}

/// Walks a state-indexed policy from `start` for at most `max_len`
/// steps. Stops early once the policy holds the state fixed, since every
/// later entry would repeat it.
pub fn rollout_policy(
    env: &BridgeEnv,
    policy: &[Action],
    start: GridState,
    max_len: usize,
) -> crate::environment::EpisodeTrace {
    let mut states = vec![start];
    let mut current = start;
    for _ in 0..max_len {
        let next = env.transition(current, policy[current.index()]);
        states.push(next);
        if next == current {
            break;
        }
        current = next;
    }
    crate::environment::EpisodeTrace::new(states)
}

/// Endpoint statistics of a policy evaluated from every start state.
#[derive(Debug, Clone)]
pub struct CoverageReport {
    /// Per-start endpoint indices.
    pub endpoints: Vec<usize>,
    /// Starts whose rollout reaches the target and holds it.
    pub reached: usize,
    pub total: usize,
}

impl CoverageReport {
    pub fn fraction(&self) -> f64 {
        self.reached as f64 / self.total as f64
    }
}

/// Rolls the policy out from all states and counts how many reach the
/// target cell and stay there.
pub fn policy_coverage(
    env: &BridgeEnv,
    policy: &[Action],
    target: GridState,
    max_len: usize,
) -> CoverageReport {
    let total = env.num_states();
    let mut endpoints = Vec::with_capacity(total);
    let mut reached = 0;
    for index in 0..total {
        let start = env.state_from_index(index).expect("index in range");
        let trace = rollout_policy(env, policy, start, max_len);
        let end = trace.endpoint().expect("trace never empty");
        let holds = env.transition(end, policy[end.index()]) == end;
        if end == target && holds {
            reached += 1;
        }
        endpoints.push(end.index());
    }
    CoverageReport {
        endpoints,
        reached,
        total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::EnvConfig;
    use proptest::prelude::*;

    fn env() -> BridgeEnv {
        BridgeEnv::with_defaults()
    }

    #[test]
    fn optimal_value_at_the_cheapest_cell_is_the_geometric_series() {
        let e = env();
        let res = value_iteration(&e, 0.95, 1e-4, 1e-10).unwrap();
        let best = e.optimal_state();
        assert_eq!(best.index(), 3);
        // Holding the cheapest cell forever: r / (1 - gamma).
        let expected = -e.cell_cost(best) * 1e-4 / (1.0 - 0.95);
        assert!(
            (res.values[3] - expected).abs() < 1e-6,
            "V(3) = {} vs {}",
            res.values[3],
            expected
        );
        assert!((res.values[3] - (-23.003481437426043)).abs() < 1e-6);
    }

    #[test]
    fn greedy_actions_point_at_the_optimum() {
        let e = env();
        let res = value_iteration(&e, 0.95, 1e-4, 1e-10).unwrap();
        // Column 4 sits right of the optimum, column 2 left of it.
        assert_eq!(res.policy[4], Action::Left);
        assert_eq!(res.policy[2], Action::Right);
        // At the optimum the best move is to stay; Noop wins the tie
        // with the clamped Up by its lower code.
        assert_eq!(res.policy[3], Action::Noop);
    }

    #[test]
    fn oracle_policy_reaches_the_optimum_from_everywhere() {
        let e = env();
        let res = value_iteration(&e, 0.95, 1e-4, 1e-10).unwrap();
        let report = policy_coverage(&e, &res.policy, e.optimal_state(), 200);
        assert_eq!(report.reached, 240);
        assert_eq!(report.total, 240);
        assert!(report.endpoints.iter().all(|&s| s == 3));
    }

    #[test]
    fn rollout_from_the_optimum_stays_there() {
        let e = env();
        let res = value_iteration(&e, 0.95, 1e-4, 1e-10).unwrap();
        let start = e.state_from_index(3).unwrap();
        let trace = rollout_policy(&e, &res.policy, start, 200);
        assert!(trace.states.iter().all(|s| s.index() == 3));
        assert!(trace.len() <= 201);
    }

    #[test]
    fn rollout_from_state_138_ends_at_3() {
        let e = env();
        let res = value_iteration(&e, 0.95, 1e-4, 1e-10).unwrap();
        let start = e.state_from_index(138).unwrap();
        let trace = rollout_policy(&e, &res.policy, start, 200);
        assert_eq!(trace.endpoint().unwrap().index(), 3);
    }

    #[test]
    fn rejects_bad_arguments() {
        let e = env();
        assert!(value_iteration(&e, 1.0, 1e-4, 1e-10).is_err());
        assert!(value_iteration(&e, -0.1, 1e-4, 1e-10).is_err());
        assert!(value_iteration(&e, 0.9, 1e-4, 0.0).is_err());
    }

    #[test]
    fn works_on_a_single_material_grid() {
        let mut c = EnvConfig::default();
        c.materials = vec![crate::cost_model::MaterialCostParams::steel()];
        let e = BridgeEnv::new(c).unwrap();
        let res = value_iteration(&e, 0.95, 1e-4, 1e-10).unwrap();
        let report = policy_coverage(&e, &res.policy, e.optimal_state(), 200);
        assert_eq!(report.reached, report.total);
        assert!(report.endpoints.iter().all(|&s| s == 2));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        // Scaling all rewards by a positive constant scales every Q
        // value uniformly, so the greedy policy cannot change.
        #[test]
        fn prop_reward_scaling_leaves_policy_unchanged(k in 1e-3f64..1e3) {
            let e = env();
            let base = value_iteration(&e, 0.95, 1e-4, 1e-12).unwrap();
            let scaled = value_iteration(&e, 0.95, 1e-4 * k, 1e-12 * k).unwrap();
            prop_assert_eq!(base.policy, scaled.policy);
        }
    }
}
