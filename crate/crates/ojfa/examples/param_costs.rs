//! Exact shortcut-parameter arithmetic at real model scale: what a full
//! per-level bank costs versus the single kept jump.
//!
//! ```bash
//! cargo run --release -p ojfa --example param_costs
//! ```

use ojfa::jump::{count_bank_params, count_jump_params, default_rank};

fn human(n: usize) -> String {
    if n >= 1_000_000 {
        format!("{:.2}M", n as f64 / 1e6)
    } else if n >= 1_000 {
        format!("{:.1}K", n as f64 / 1e3)
    } else {
        n.to_string()
    }
}

fn main() {
    println!("model        H     K   rank   per-jump     full bank    single jump   reduction");
    for (name, hidden, levels) in [
        ("gpt2-xl", 1600usize, 48usize),
        ("phi3-mini", 3072, 32),
        ("llama2-7b", 4096, 32),
    ] {
        let rank = default_rank(hidden);
        let per_jump = count_jump_params(hidden, rank);
        let bank = count_bank_params(hidden, rank, levels);
        println!(
            "{name:<10} {hidden:5} {levels:5} {rank:6}   {:>8}   {:>11}   {:>11}   {:>6}x",
            human(per_jump),
            human(bank),
            human(per_jump),
            bank / per_jump
        );
    }
    println!();
    println!("per-jump count = 2*H*r + 4*H  (A, B, gamma, beta, running mean, running var)");
    println!("rank rule      = max(1, floor(H / 100))");
}
