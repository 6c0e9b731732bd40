//! `bench`: wall-clock timings of the engine on synthetic inputs.

use std::time::Instant;

use boxseg_core::matching::{hungarian, CostMatrix};
use boxseg_core::treefilter::{build_grid_graph, mst, tree_filter};
use boxseg_core::{evolve_instance, EvolutionConfig, Grid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::synthetic;

fn time<T>(repeats: usize, mut f: impl FnMut() -> T) -> f64 {
    let start = Instant::now();
    for _ in 0..repeats {
        std::hint::black_box(f());
    }
    start.elapsed().as_secs_f64() * 1e3 / repeats as f64
}

pub fn run(sizes: &[usize], repeats: usize) -> Vec<String> {
    let repeats = repeats.max(1);
    let config = EvolutionConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut lines = Vec::new();
    for &n in sizes {
        let scene = synthetic::noisy_square(n, 1);
        let mut steps = 0;
        let ms = time(repeats, || {
            let r = evolve_instance(&scene.image, None, scene.boxes[0], &config);
            steps = r.as_ref().map(|r| r.trace.steps.len()).unwrap_or(0);
            r.is_ok()
        });
        lines.push(format!("evolve {n}x{n}: {ms:.2} ms ({steps} steps)"));

        let guide = Grid::new(n, n, 3, (0..3 * n * n).map(|_| rng.gen()).collect()).unwrap();
        let ms = time(repeats, || tree_filter(&guide, &mst(&build_grid_graph(&guide)), 0.1));
        lines.push(format!("tree filter {n}x{n}x3: {ms:.2} ms"));
    }
    for m in [8, 32, 64] {
        let cost = CostMatrix::new(m, m, (0..m * m).map(|_| rng.gen()).collect()).unwrap();
        let ms = time(repeats, || hungarian(&cost));
        lines.push(format!("hungarian {m}x{m}: {ms:.3} ms"));
    }
    lines
}
