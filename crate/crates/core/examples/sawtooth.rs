//! Trains TD3 on the sawtooth market and compares with the trough/peak oracle.
//!
//! `cargo run --release --example sawtooth -- episodes=200 seeds=3 hidden=64 gamma=0.9`

use std::sync::Arc;
use std::time::Instant;

use deeptrader::backtest::{evaluate, run_episode, RandomAgent, RunMode};
use deeptrader::env::{EnvConfig, MarketData, Preset, TradingEnv};
use deeptrader::market_data::PriceField;
use deeptrader::synthetic::sawtooth_panel;
use deeptrader::td3::{Td3Agent, Td3Config};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kv = |k: &str, d: f64| -> f64 {
        args.iter().find_map(|a| a.strip_prefix(&format!("{k}=")).map(|v| v.parse().unwrap())).unwrap_or(d)
    };
    let episodes = kv("episodes", 200.0) as usize;
    let seeds = kv("seeds", 3.0) as u64;
    let hidden = kv("hidden", 64.0) as usize;
    let panel = sawtooth_panel(127, 10, 0.2, 100.0);
    let data = Arc::new(MarketData::build(panel, None, 20, PriceField::AdjClose).unwrap());
    let env_cfg = EnvConfig {
        initial_capital: kv("capital", 1000.0),
        k_max: 10,
        d_buy: 0.0,
        d_sell: 0.0,
        lookback: 20,
        preset: Preset::Baseline,
        ..Default::default()
    };
    let agent_cfg = Td3Config {
        gamma: kv("gamma", 0.9),
        tau: kv("tau", 0.005),
        explore_sigma: kv("sigma", 0.2),
        batch_size: kv("batch", 64.0) as usize,
        warmup_steps: kv("warmup", 1000.0) as usize,
        hidden: vec![hidden, hidden],
        actor_lr: kv("alr", 1e-3),
        critic_lr: kv("clr", 1e-3),
        ..Default::default()
    };
    let start = Instant::now();
    let mut total = 0.0;
    for seed in 0..seeds {
        let mut env = TradingEnv::new(env_cfg.clone(), data.clone()).unwrap();
        let mut agent = Td3Agent::new(env.observation_len(), 1, Td3Config { seed, ..agent_cfg.clone() }).unwrap();
        for ep in 0..episodes {
            let s = run_episode(&mut env, &mut agent, RunMode::TRAIN).unwrap();
            if ep % 20 == 19 {
                let g = evaluate(&mut agent, &mut env, false).unwrap();
                println!("seed {seed} ep {ep:>3} train {:>8.1} greedy {:>8.1}", s.total_reward, g.total_reward);
            }
        }
        let g = evaluate(&mut agent, &mut env, false).unwrap();
        total += g.total_reward;
        let r = run_episode(&mut env, &mut RandomAgent::new(1, seed), RunMode::EVAL).unwrap();
        println!("seed {seed} final greedy {:.1} random {:.1}", g.total_reward, r.total_reward);
    }
    println!("mean greedy {:.1} ({:?})", total / seeds as f64, start.elapsed());
}
