use std::collections::BTreeMap;
use std::time::Instant;

use econspan::dqn_agent::{train, value_iteration, GreedyPolicy, TrainConfig};
use econspan::environment::{BridgeEnv, EnvConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let episodes: u32 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);

    let mut env_cfg = EnvConfig::default();
    env_cfg.cell_pixels = 4;
    let mut env = BridgeEnv::new(env_cfg).unwrap();
    let cfg = TrainConfig {
        episodes,
        seed,
        ..TrainConfig::default()
    };
    let t0 = Instant::now();
    let out = train(&mut env, &cfg).unwrap();
    let train_time = t0.elapsed();

    let mut policy = GreedyPolicy::new(&out.params, &env);
    let report = policy.coverage(env.optimal_state(), 200).unwrap();

    let rows = &out.metrics.rows;
    let k = rows.len().min(10);
    let first: f64 = rows[..k].iter().map(|r| r.mean_loss).sum::<f64>() / k as f64;
    let last: f64 = rows[rows.len() - k..].iter().map(|r| r.mean_loss).sum::<f64>() / k as f64;
    println!(
        "episodes={} seed={} train={:.1?} coverage={}/{} first10={:.4} last10={:.4}",
        episodes, seed, train_time, report.reached, report.total, first, last
    );

    // Where do rollouts end?
    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    for &e in &report.endpoints {
        *hist.entry(e).or_default() += 1;
    }
    let mut pairs: Vec<(usize, usize)> = hist.into_iter().collect();
    pairs.sort_by_key(|&(_, c)| std::cmp::Reverse(c));
    print!("endpoints:");
    for (s, c) in pairs.iter().take(8) {
        let (row, span) = env.state_to_grid(*s).unwrap();
        print!(" s{}(r{},{}m)x{}", s, row, span, c);
    }
    println!();

    // Compare greedy actions against the exact oracle policy.
    let vi = value_iteration(&env, cfg.gamma, cfg.reward_scale, 1e-10).unwrap();
    let mut disagree = 0;
    for i in 0..env.num_states() {
        let s = env.state_from_index(i).unwrap();
        if policy.action(s).unwrap() != vi.policy[i] {
            disagree += 1;
        }
    }
    println!("action disagreement with oracle: {}/240 (vi iterations {})", disagree, vi.iterations);
}
