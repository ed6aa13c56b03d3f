#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const VARS: [&str; 4] = ["x1", "x2", "y1", "eps"];

/// Random expression text over `vars` whose values stay moderate for inputs in `[-1, 1]`:
/// denominators, logarithms and roots are guarded so every node is smooth.
pub fn random_expr(rng: &mut ChaCha8Rng, depth: u32, vars: &[&str]) -> String {
    if depth == 0 || rng.random::<f64>() < 0.15 {
        return if rng.random::<bool>() { vars[rng.random_range(0..vars.len())].to_string() } else { format!("{:.4}", rng.random_range(-2.0..2.0)) };
    }
    let pick = rng.random_range(0..13);
    let a = random_expr(rng, depth - 1, vars);
    match pick {
        0 => format!("{a} + {}", random_expr(rng, depth - 1, vars)),
        1 => format!("({a}) - ({})", random_expr(rng, depth - 1, vars)),
        2 => format!("({a}) * ({})", random_expr(rng, depth - 1, vars)),
        3 => format!("({a}) / (2.5 + sin({}))", random_expr(rng, depth - 1, vars)),
        4 => format!("(1.5 + cos({a}))^{:.3}", rng.random_range(0.5..3.0)),
        5 => format!("tanh({a})^2"),
        6 => format!("-({a})"),
        7 => format!("sin({a})"),
        8 => format!("cos({a})"),
        9 => format!("exp(tanh({a}))"),
        10 => format!("sqrt(1 + ({a})^2)"),
        11 => format!("ln(2 + tanh({a}))"),
        _ => format!("2^-(tanh({a})) * pi"),
    }
}

pub fn point(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn naim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_naim")).args(args).current_dir(dir).output().expect("binary runs")
}

/// Writes `config` to `dir/config.json` and runs `command` with output in `dir/out`.
pub fn run(command: &str, config: &str, dir: &Path, extra: &[&str]) -> Output {
    std::fs::write(dir.join("config.json"), config).unwrap();
    let mut args = vec![command, "--config", "config.json", "--out", "out"];
    args.extend_from_slice(extra);
    naim(&args, dir)
}

/// Column `name` of a CSV table as floats.
pub fn column(path: &Path, name: &str) -> Vec<f64> {
    let mut rd = csv::Reader::from_path(path).unwrap();
    let idx = rd.headers().unwrap().iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rd.records().map(|r| r.unwrap()[idx].parse::<f64>().unwrap()).collect()
}

pub fn sidecar(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}
