use jumpsde::levy_measure::LevyMeasure;
use jumpsde::noise::{uniform_grid, Mark, NoiseModel, NoisePath, NoiseSpec, SmallJumpMode};
use jumpsde::stats::MeanEstimate;
use proptest::prelude::*;

fn stable_spec(seed: u64, epsilon: f64) -> NoiseSpec {
    NoiseSpec::new(1.0, seed).with_brownian().with_driver(LevyMeasure::stable(1.5, 1.0).unwrap()).with_epsilon(epsilon)
}

#[test]
fn large_jump_count_matches_tail_mass() {
    let model = NoiseModel::new(&stable_spec(17, 0.01), 10).unwrap();
    let want = 0.01f64.powf(-1.5) / 1.5;
    let grid = uniform_grid(1.0, 10);
    let counts: Vec<f64> = (0..10_000).map(|i| model.sample(&grid, i).unwrap().jumps.len() as f64).collect();
    let est = MeanEstimate::from_samples(&counts);
    assert!((est.mean - want).abs() < 3.0 * est.std_error, "{} ± {} vs {want}", est.mean, est.std_error);
}

#[test]
fn gaussian_substitute_cell_variance() {
    let model = NoiseModel::new(&stable_spec(18, 0.01), 1000).unwrap();
    assert_eq!(model.mode(), SmallJumpMode::GaussianSubstitute);
    let grid = uniform_grid(1.0, 1000);
    let mut xs = Vec::new();
    for i in 0..20 {
        xs.extend(model.sample(&grid, i).unwrap().small_jumps);
    }
    let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
    let want = 0.001 * 0.01f64.sqrt() / 0.5;
    // 20000 squared normals: relative standard error sqrt(2/20000) = 1%.
    assert!((var / want - 1.0).abs() < 0.04, "{var} vs {want}");
}

#[test]
fn brownian_increments_have_cell_variance() {
    let model = NoiseModel::new(&NoiseSpec::new(2.0, 3).with_brownian(), 50).unwrap();
    let grid = uniform_grid(2.0, 50);
    let mut xs = Vec::new();
    for i in 0..400 {
        xs.extend(model.sample(&grid, i).unwrap().brownian);
    }
    let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
    assert!((var / 0.04 - 1.0).abs() < 0.04, "{var}");
}

#[test]
fn binary_format_round_trips_through_a_file() {
    let model = NoiseModel::new(&stable_spec(5, 0.05), 16).unwrap();
    let path = model.sample(&uniform_grid(1.0, 16), 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("noise.bin");
    path.write_binary(std::fs::File::create(&file).unwrap()).unwrap();
    let back = NoisePath::read_binary(std::fs::File::open(&file).unwrap()).unwrap();
    assert_eq!(path, back);
    // A refined copy of the read-back path equals the refined original.
    let g = uniform_grid(1.0, 64);
    assert_eq!(path.refine(&g).unwrap(), back.refine(&g).unwrap());
}

#[test]
fn subordinator_marks_are_separate() {
    use jumpsde::levy_measure::{JumpLaw, Role};
    let nu1 = LevyMeasure::finite_activity(5.0, JumpLaw::Exponential { mean: 0.2 }, Role::Subordinator).unwrap();
    let spec = NoiseSpec::new(1.0, 9).with_subordinator(nu1);
    let model = NoiseModel::new(&spec, 8).unwrap();
    let p = model.sample(&uniform_grid(1.0, 8), 0).unwrap();
    assert!(p.jumps.iter().all(|j| j.mark == Mark::Driver1));
    assert_eq!(p.jump_mass(Mark::Driver0), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn refinement_preserves_cell_sums(seed in 0u64..1000, stream in 0u64..1000, base in 1usize..12, factor in 2usize..6) {
        let model = NoiseModel::new(&stable_spec(seed, 0.05), base * factor).unwrap();
        let coarse = model.sample(&uniform_grid(1.0, base), stream).unwrap();
        let fine = coarse.refine(&uniform_grid(1.0, base * factor)).unwrap();
        prop_assert_eq!(&fine.jumps, &coarse.jumps);
        for i in 0..base {
            let b: f64 = fine.brownian[i * factor..(i + 1) * factor].iter().sum();
            let s: f64 = fine.small_jumps[i * factor..(i + 1) * factor].iter().sum();
            prop_assert!((b - coarse.brownian[i]).abs() <= 1e-12 * (1.0 + coarse.brownian[i].abs()));
            prop_assert!((s - coarse.small_jumps[i]).abs() <= 1e-12 * (1.0 + coarse.small_jumps[i].abs()));
        }
    }

    #[test]
    fn truncation_is_a_prefix(seed in 0u64..1000, cut in 1usize..20) {
        let model = NoiseModel::new(&stable_spec(seed, 0.05), 20).unwrap();
        let p = model.sample(&uniform_grid(1.0, 20), 0).unwrap();
        let t = p.truncate(p.grid[cut]).unwrap();
        prop_assert_eq!(&t.brownian[..], &p.brownian[..cut]);
        prop_assert_eq!(&t.small_jumps[..], &p.small_jumps[..cut]);
        prop_assert!(t.jumps.iter().all(|j| j.time <= p.grid[cut]));
        prop_assert_eq!(t.jumps.len(), p.jumps.iter().filter(|j| j.time <= p.grid[cut]).count());
    }
}
