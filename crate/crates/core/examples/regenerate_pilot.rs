//! Regenerates `fixtures/pilot.toml`.
//!
//! ```text
//! cargo run --release -p jumpsde --example regenerate_pilot
//! ```
//!
//! Every run is seeded, so the output only changes when the sampling or the
//! scheme changes.

use jumpsde::lab::{self, cauchy_refinement_study, couple, run_ensemble, ExperimentSpec};
use jumpsde::noise::stable_increment;
use jumpsde::rng::{Purpose, StreamKey};
use jumpsde::sde::{CbiParams, Coefficient, SdeSystem, SimulationMode};
use serde::Serialize;

#[derive(Serialize)]
struct Pilot {
    stable_median: StableMedian,
    brownian_sup_moment: BrownianSup,
    linear_coupling: LinearCoupling,
    cbi_cauchy: CbiCauchy,
}

#[derive(Serialize)]
struct StableMedian {
    alpha: f64,
    c: f64,
    draws: usize,
    seed: u64,
    median: f64,
}

#[derive(Serialize)]
struct BrownianSup {
    cells: usize,
    paths: usize,
    seed: u64,
    /// `E[1 + sup_{s ≤ 1} B(s)²]` over the grid.
    value: f64,
    std_error: f64,
}

#[derive(Serialize)]
struct LinearCoupling {
    delta: f64,
    cells: usize,
    paths: usize,
    seed: u64,
    /// `E|x_a(1) - x_b(1)| / delta`.
    ratio: f64,
    std_error: f64,
}

#[derive(Serialize)]
struct CbiCauchy {
    base_cells: usize,
    levels: usize,
    paths: usize,
    seed: u64,
    means: Vec<f64>,
    std_errors: Vec<f64>,
}

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/pilot.toml").to_string());

    let (alpha, c, draws, seed) = (1.5, 1.0, 10_000_000, 41);
    let mut rng = StreamKey::new(seed, 0).stream(Purpose::Stable);
    let mut xs: Vec<f64> = (0..draws).map(|_| stable_increment(alpha, c, 1.0, &mut rng)).collect();
    let mid = draws / 2;
    let (_, median, _) = xs.select_nth_unstable_by(mid, f64::total_cmp);
    let stable_median = StableMedian { alpha, c, draws, seed, median: *median };
    eprintln!("stable median done");

    let mut sys = SdeSystem::zero();
    sys.sigma = Coefficient::Constant { value: 1.0 };
    let (cells, paths, seed) = (100, 1_000_000, 42);
    let s = run_ensemble(&ExperimentSpec::new(sys, lab::brownian_noise(1.0, seed), 0.0, cells, paths)).unwrap();
    let brownian_sup_moment = BrownianSup {
        cells,
        paths,
        seed,
        value: *s.sup_moment.last().unwrap(),
        std_error: *s.sup_moment_std_error.last().unwrap(),
    };
    eprintln!("brownian sup done");

    let (delta, cells, paths, seed) = (0.01, 100, 100_000, 43);
    let spec = ExperimentSpec::new(SdeSystem::linear(1.0, -1.0, 0.0), lab::brownian_noise(1.0, seed), 1.0, cells, paths);
    let r = couple(&spec, 1.0, 1.0 + delta).unwrap();
    let linear_coupling = LinearCoupling {
        delta,
        cells,
        paths,
        seed,
        ratio: r.mean_abs_diff.last().unwrap() / delta,
        std_error: r.mean_abs_diff_std_error.last().unwrap() / delta,
    };
    eprintln!("linear coupling done");

    let (base_cells, levels, paths, seed) = (100, 3, 200, 44);
    let params = CbiParams { a: 1.0, b: 0.1, beta: -0.5, c: 1.0, r: 2.0, q: 1.5 };
    let spec = ExperimentSpec::new(SdeSystem::cbi(params).unwrap(), lab::cbi_noise(1.5, 1.0, seed).unwrap(), 1.0, base_cells, paths)
        .with_levels(levels)
        .with_mode(SimulationMode::Nonneg);
    let r = cauchy_refinement_study(&spec).unwrap();
    let cbi_cauchy = CbiCauchy {
        base_cells,
        levels,
        paths,
        seed,
        means: r.cauchy.iter().map(|c| c.mean).collect(),
        std_errors: r.cauchy.iter().map(|c| c.std_error).collect(),
    };

    let pilot = Pilot { stable_median, brownian_sup_moment, linear_coupling, cbi_cauchy };
    let body = toml::to_string(&pilot).unwrap();
    let text = format!("# Pilot Monte-Carlo values used as regression oracles.\n# Regenerate with: cargo run --release -p jumpsde --example regenerate_pilot\n\n{body}");
    std::fs::write(&out, text).unwrap();
    eprintln!("wrote {out}");
}
