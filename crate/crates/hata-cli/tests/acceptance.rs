//! Acceptance suite: every shipping requirement, checked end to end against
//! independent oracles implemented in this file (a brute-force enumerator, a
//! time-sweep integrator, a plain Dijkstra, a dense linear solve) rather than
//! against the code under test. Each check prints one pass line.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hata_cli::gen::{corridor_scenario, open_scenario};
use hata_core::assign::{allocate, Objective};
use hata_core::bo::{tune_weights, TuneConfig};
use hata_core::cost::CostMatrix;
use hata_core::experiment::{run_experiment, Method, SimParams};
use hata_core::gp::{GpModel, KernelParams, MaternNu};
use hata_core::grid::{Cell, GridSpec, OccupancyGrid};
use hata_core::mod_map::{build_stack, disk_offsets, MoDLayer, MoDStack};
use hata_core::planner::{plan, step_length, PlanError, PlanRequest, SQRT_2};
use hata_core::trajectory::{
    write_tracks, FormatDescriptor, Sample, TimeWindow, TrackRecord, Trajectory,
};

// ---------------------------------------------------------------------------
// 1. Occupancy probabilities vs a millisecond time sweep

#[test]
fn occupancy_probabilities_match_a_millisecond_time_sweep() {
    let t_test = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x01);
    for instance in 0..100u64 {
        let width = rng.random_range(2..=10usize);
        let height = rng.random_range(2..=10usize);
        let res = rng.random_range(0.3..1.2);
        let origin_x = rng.random_range(-3.0..3.0);
        let origin_y = rng.random_range(-3.0..3.0);
        let spec = GridSpec::new(origin_x, origin_y, res, width, height).unwrap();
        let kernel_radius = rng.random_range(0..=2usize);
        // Whole-millisecond durations keep the sweep aligned with the layer
        // windows; mostly-short layers keep the whole test inside its budget.
        let layer_ms = if instance % 10 == 0 {
            rng.random_range(40_000..=60_000u64)
        } else {
            rng.random_range(20_000..=35_000u64)
        };
        let layer_duration = layer_ms as f64 * 1e-3;
        let n_layers = if instance % 3 == 0 { 2usize } else { 1 };
        let t0 = rng.random_range(-30.0..30.0);
        let coverage = TimeWindow::new(t0, n_layers as f64 * layer_duration).unwrap();

        // Positions stay strictly inside the grid so no span is dropped.
        let x_lo = origin_x + 0.01;
        let x_hi = origin_x + width as f64 * res - 0.01;
        let y_lo = origin_y + 0.01;
        let y_hi = origin_y + height as f64 * res - 0.01;
        let n_traj = rng.random_range(1..=5usize);
        let trajs: Vec<Trajectory> = (0..n_traj)
            .map(|id| {
                let stationary = rng.random_range(0..4u32) == 0;
                let fixed = (rng.random_range(x_lo..x_hi), rng.random_range(y_lo..y_hi));
                let mut t = t0 + rng.random_range(-10.0..coverage.duration());
                let samples = (0..rng.random_range(2..=3usize))
                    .map(|_| {
                        let (x, y) = if stationary {
                            fixed
                        } else {
                            (rng.random_range(x_lo..x_hi), rng.random_range(y_lo..y_hi))
                        };
                        let s = Sample { t, x, y };
                        t += rng.random_range(2.0..40.0);
                        s
                    })
                    .collect();
                Trajectory::new(id as u64, samples).unwrap()
            })
            .collect();

        let stack = build_stack(&trajs, coverage, layer_duration, &spec, kernel_radius).unwrap();
        assert_eq!(stack.layers().len(), n_layers, "instance {instance}");

        // Oracle: sample every millisecond midpoint; a cell counts as
        // occupied when any walker's dilation disk covers it.
        let offsets = disk_offsets(kernel_radius);
        for layer in stack.layers() {
            let w = layer.window();
            let ticks = (w.duration() / 1e-3).round() as usize;
            let dt = w.duration() / ticks as f64;
            let mut hits = vec![0u32; spec.n_cells()];
            let mut seen_at = vec![u32::MAX; spec.n_cells()];
            for k in 0..ticks {
                let t = w.start() + (k as f64 + 0.5) * dt;
                for traj in &trajs {
                    let Some((x, y)) = traj.position_at(t) else {
                        continue;
                    };
                    let Some(o) = spec.cell_of(x, y) else {
                        continue;
                    };
                    for &(di, dj) in &offsets {
                        let nx = o.x as i64 + di;
                        let ny = o.y as i64 + dj;
                        if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                            continue;
                        }
                        let idx = ny as usize * width + nx as usize;
                        if seen_at[idx] != k as u32 {
                            seen_at[idx] = k as u32;
                            hits[idx] += 1;
                        }
                    }
                }
            }
            for y in 0..height {
                for x in 0..width {
                    let cell = Cell::new(x, y);
                    let got = layer.value(&spec, cell);
                    let want = hits[spec.index(cell)] as f64 / ticks as f64;
                    assert!(
                        (got - want).abs() <= 2e-3,
                        "instance {instance} cell ({x}, {y}): built {got}, sweep {want}"
                    );
                }
            }
        }

        // Adding a copy of a trajectory must change nothing: presence is a
        // union of intervals, not a sum.
        let mut doubled = trajs.clone();
        doubled.push(trajs[rng.random_range(0..trajs.len())].clone());
        let redone = build_stack(&doubled, coverage, layer_duration, &spec, kernel_radius).unwrap();
        assert_eq!(stack.layers(), redone.layers(), "instance {instance}");
    }
    assert!(
        t_test.elapsed() < Duration::from_secs(60),
        "sweep overran its one-minute budget"
    );
    println!("acceptance 01 occupancy vs 1 ms sweep oracle: pass");
}

// ---------------------------------------------------------------------------
// 2. Exact union semantics

#[test]
fn overlapping_presence_is_a_union_not_a_sum() {
    let spec = GridSpec::new(0.0, 0.0, 1.0, 10, 10).unwrap();
    let stand = |id: u64, from: f64, to: f64| {
        Trajectory::new(
            id,
            vec![
                Sample { t: from, x: 4.5, y: 4.5 },
                Sample { t: to, x: 4.5, y: 4.5 },
            ],
        )
        .unwrap()
    };
    let window = TimeWindow::new(0.0, 1800.0).unwrap();

    // Two people in the same cell for the same 15 of 30 minutes: exactly 1/2.
    let stack = build_stack(
        &[stand(1, 0.0, 900.0), stand(2, 0.0, 900.0)],
        window,
        1800.0,
        &spec,
        0,
    )
    .unwrap();
    assert_eq!(stack.query(Cell::new(4, 4), 0.0).unwrap(), 0.5);
    assert_eq!(stack.query(Cell::new(4, 4), 1799.0).unwrap(), 0.5);

    // Half-overlapping visits union to 1350 s of 1800: exactly 3/4.
    let stack = build_stack(
        &[stand(1, 0.0, 900.0), stand(2, 450.0, 1350.0)],
        window,
        1800.0,
        &spec,
        0,
    )
    .unwrap();
    assert_eq!(stack.query(Cell::new(4, 4), 0.0).unwrap(), 0.75);
    println!("acceptance 02 exact interval-union semantics: pass");
}

// ---------------------------------------------------------------------------
// 3. Planner vs Dijkstra

/// Total-order f64 wrapper so step lengths can key a binary heap.
#[derive(Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Reference shortest path: plain Dijkstra over the same admissibility and
/// corner-cutting rules, carrying exact (axial, diagonal) step counts so the
/// final length is the same bit pattern the planner reports for an equal mix.
fn dijkstra_steps(
    grid: &OccupancyGrid,
    values: &[f64],
    delta: f64,
    start: Cell,
    goal: Cell,
) -> Option<(usize, usize)> {
    let spec = grid.spec();
    let (w, h) = (spec.width, spec.height);
    let res = spec.resolution;
    let adm = |x: i64, y: i64| {
        x >= 0 && y >= 0 && x < w as i64 && y < h as i64 && {
            let c = Cell::new(x as usize, y as usize);
            !grid.is_blocked(c) && values[spec.index(c)] <= delta
        }
    };
    let len_of = |(a, d): (usize, usize)| step_length(a, d, res);

    let mut best: Vec<Option<(usize, usize)>> = vec![None; spec.n_cells()];
    let mut settled = vec![false; spec.n_cells()];
    let mut heap = BinaryHeap::new();
    best[spec.index(start)] = Some((0, 0));
    heap.push(Reverse((Key(0.0), spec.index(start), 0usize, 0usize)));

    while let Some(Reverse((_, idx, a, d))) = heap.pop() {
        if settled[idx] {
            continue;
        }
        settled[idx] = true;
        let cell = Cell::new(idx % w, idx / w);
        if cell == goal {
            return Some((a, d));
        }
        for (dx, dy) in [
            (1i64, 0i64),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ] {
            let nx = cell.x as i64 + dx;
            let ny = cell.y as i64 + dy;
            if !adm(nx, ny) {
                continue;
            }
            let diagonal = dx != 0 && dy != 0;
            if diagonal && !adm(cell.x as i64 + dx, cell.y as i64) && !adm(cell.x as i64, cell.y as i64 + dy) {
                continue;
            }
            let cand = if diagonal { (a, d + 1) } else { (a + 1, d) };
            let ni = ny as usize * w + nx as usize;
            if best[ni].is_none_or(|cur| len_of(cand) < len_of(cur)) {
                best[ni] = Some(cand);
                heap.push(Reverse((Key(len_of(cand)), ni, cand.0, cand.1)));
            }
        }
    }
    None
}

#[test]
fn planned_paths_match_dijkstra_and_respect_the_threshold() {
    let t_test = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x03);
    let mut done = 0usize;
    let mut guard = 0usize;
    while done < 200 {
        guard += 1;
        assert!(guard < 4000, "instance generation starved");
        let width = rng.random_range(4..=30usize);
        let height = rng.random_range(4..=30usize);
        let res = [0.25, 0.5, 1.0][rng.random_range(0..3usize)];
        let spec = GridSpec::new(0.0, 0.0, res, width, height).unwrap();
        let mut grid = OccupancyGrid::free(spec.clone());
        let block_p = rng.random_range(0.0..0.35);
        for y in 0..height {
            for x in 0..width {
                if rng.random_range(0.0..1.0) < block_p {
                    grid.set_blocked(Cell::new(x, y), true);
                }
            }
        }
        let values: Vec<f64> = (0..spec.n_cells())
            .map(|_| {
                if rng.random_range(0..2u32) == 0 {
                    0.0
                } else {
                    rng.random_range(0.0..1.0)
                }
            })
            .collect();
        let delta = rng.random_range(0.15..0.95);
        let window = TimeWindow::new(0.0, 600.0).unwrap();
        let mods =
            MoDStack::new(spec.clone(), 0, vec![MoDLayer::new(window, values.clone())]).unwrap();

        let open: Vec<Cell> = (0..height)
            .flat_map(|y| (0..width).map(move |x| Cell::new(x, y)))
            .filter(|&c| !grid.is_blocked(c) && values[spec.index(c)] <= delta)
            .collect();
        if open.len() < 2 {
            continue;
        }
        let start = open[rng.random_range(0..open.len())];
        let goal = loop {
            let g = open[rng.random_range(0..open.len())];
            if g != start {
                break g;
            }
        };
        done += 1;

        let req = PlanRequest {
            start,
            goal,
            delta,
            time: rng.random_range(0.0..600.0),
        };
        let oracle = dijkstra_steps(&grid, &values, delta, start, goal);
        match plan(&grid, &mods, &req) {
            Ok(path) => {
                let cells = path.cells();
                assert_eq!(cells[0], start);
                assert_eq!(*cells.last().unwrap(), goal);
                let adm = |c: Cell| {
                    spec.contains(c) && !grid.is_blocked(c) && values[spec.index(c)] <= delta
                };
                let (mut axial, mut diag) = (0usize, 0usize);
                for pair in cells.windows(2) {
                    let (a, b) = (pair[0], pair[1]);
                    let dx = b.x as i64 - a.x as i64;
                    let dy = b.y as i64 - a.y as i64;
                    assert!(dx.abs() <= 1 && dy.abs() <= 1 && (dx, dy) != (0, 0));
                    if dx != 0 && dy != 0 {
                        diag += 1;
                        assert!(
                            adm(Cell::new(b.x, a.y)) || adm(Cell::new(a.x, b.y)),
                            "corner cut between {a:?} and {b:?}"
                        );
                    } else {
                        axial += 1;
                    }
                }
                for &c in cells {
                    assert!(!grid.is_blocked(c));
                    let p = mods.query(c, req.time).unwrap();
                    assert!(p <= delta, "cell {c:?} carries p = {p} above {delta}");
                }
                let got = path.length();
                assert_eq!(got, step_length(axial, diag, res));
                let (oa, od) = oracle.expect("planner found a path the oracle missed");
                assert_eq!(
                    got,
                    step_length(oa, od, res),
                    "instance {done}: planner {axial}+{diag}√2 vs oracle {oa}+{od}√2 steps"
                );
            }
            Err(PlanError::Unreachable(_)) => {
                assert!(oracle.is_none(), "oracle found a path the planner missed");
            }
            Err(e) => panic!("unexpected planning failure: {e}"),
        }
    }
    assert!(t_test.elapsed() < Duration::from_secs(60));
    println!("acceptance 03 shortest paths vs Dijkstra oracle: pass");
}

// ---------------------------------------------------------------------------
// 4. Allocation vs exhaustive search

/// Minimum total and minimum bottleneck over every permutation. Sums
/// accumulate in row order — the same order the solver reports — so equal
/// optima agree bit for bit.
fn brute_force(rows: &[Vec<f64>]) -> (f64, f64) {
    fn visit(
        row: usize,
        rows: &[Vec<f64>],
        used: &mut [bool],
        perm: &mut [usize],
        best_sum: &mut f64,
        best_max: &mut f64,
    ) {
        let n = rows.len();
        if row == n {
            let mut sum = 0.0;
            let mut max = f64::NEG_INFINITY;
            for i in 0..n {
                let v = rows[i][perm[i]];
                sum += v;
                max = max.max(v);
            }
            if sum < *best_sum {
                *best_sum = sum;
            }
            if max < *best_max {
                *best_max = max;
            }
            return;
        }
        for j in 0..n {
            if !used[j] {
                used[j] = true;
                perm[row] = j;
                visit(row + 1, rows, used, perm, best_sum, best_max);
                used[j] = false;
            }
        }
    }
    let n = rows.len();
    let mut best_sum = f64::INFINITY;
    let mut best_max = f64::INFINITY;
    visit(
        0,
        rows,
        &mut vec![false; n],
        &mut vec![0usize; n],
        &mut best_sum,
        &mut best_max,
    );
    (best_sum, best_max)
}

#[test]
fn allocations_match_exhaustive_search() {
    let t_test = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x04);
    for instance in 0..500usize {
        let n = rng.random_range(1..=7usize);
        // A quarter of the matrices are small integers, forcing ties.
        let integral = rng.random_range(0..4u32) == 0;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..n)
                    .map(|_| {
                        if integral {
                            rng.random_range(0..=20u32) as f64
                        } else {
                            rng.random_range(0.0..100.0)
                        }
                    })
                    .collect()
            })
            .collect();
        let matrix = CostMatrix::from_rows(
            rows.iter()
                .map(|r| r.iter().map(|&v| Some(v)).collect())
                .collect(),
        )
        .unwrap();
        let by_sum = allocate(&matrix, Objective::Sum).unwrap();
        let by_max = allocate(&matrix, Objective::MinMax).unwrap();
        for sol in [&by_sum, &by_max] {
            let mut seen = vec![false; n];
            for &j in sol.mapping() {
                assert!(!seen[j], "instance {instance}: task {j} assigned twice");
                seen[j] = true;
            }
        }
        let (best_sum, best_max) = brute_force(&rows);
        assert_eq!(
            by_sum.objective_sum(),
            best_sum,
            "instance {instance} (n = {n}): total cost not optimal"
        );
        assert_eq!(
            by_max.objective_max(),
            best_max,
            "instance {instance} (n = {n}): bottleneck not optimal"
        );
    }
    assert!(t_test.elapsed() < Duration::from_secs(60));
    println!("acceptance 04 assignments vs exhaustive permutations: pass");
}

// ---------------------------------------------------------------------------
// 5. GP regression vs dense conditioning

fn dist2d(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Textbook Matérn forms for the three half-integer orders.
fn ref_matern(r: f64, sigma2: f64, ell: f64, nu: MaternNu) -> f64 {
    let s = r / ell;
    match nu {
        MaternNu::Half => sigma2 * (-s).exp(),
        MaternNu::ThreeHalves => {
            let a = 3.0_f64.sqrt() * s;
            sigma2 * (1.0 + a) * (-a).exp()
        }
        MaternNu::FiveHalves => {
            let a = 5.0_f64.sqrt() * s;
            sigma2 * (1.0 + a + a * a / 3.0) * (-a).exp()
        }
    }
}

/// Gaussian elimination with partial pivoting; n is tiny here.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let m = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= m * a[col][k];
            }
            b[row] -= m * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    x
}

#[test]
fn gp_posterior_matches_direct_dense_conditioning() {
    let sigma2 = 1.7;
    let ell = 0.45;
    let noise = 1e-6;
    let f = |x: [f64; 2]| (1.7 * x[0]).sin() + 0.6 * (2.3 * x[1]).cos() + 0.2 * x[0] * x[1];
    for (which, nu) in [MaternNu::Half, MaternNu::ThreeHalves, MaternNu::FiveHalves]
        .into_iter()
        .enumerate()
    {
        let mut rng = ChaCha8Rng::seed_from_u64(0x50 + which as u64);
        let xs: Vec<[f64; 2]> = (0..8)
            .map(|_| [rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)])
            .collect();
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let mut model =
            GpModel::new(KernelParams::new(sigma2, ell, nu).unwrap(), noise).unwrap();
        for (&x, &y) in xs.iter().zip(&ys) {
            model.observe(x, y).unwrap();
        }
        let queries: Vec<[f64; 2]> = (0..20)
            .map(|_| [rng.random_range(-0.5..3.5), rng.random_range(-0.5..3.5)])
            .collect();
        let got = model.posterior(&queries).unwrap();

        // Oracle: condition by solving (K + σₙ²I) directly.
        let n = xs.len();
        let kmat: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        ref_matern(dist2d(xs[i], xs[j]), sigma2, ell, nu)
                            + if i == j { noise } else { 0.0 }
                    })
                    .collect()
            })
            .collect();
        let alpha = solve_dense(kmat.clone(), ys.clone());
        for (q, &(got_mu, got_var)) in queries.iter().zip(&got) {
            let kstar: Vec<f64> = xs
                .iter()
                .map(|&x| ref_matern(dist2d(*q, x), sigma2, ell, nu))
                .collect();
            let mu: f64 = kstar.iter().zip(&alpha).map(|(k, a)| k * a).sum();
            let z = solve_dense(kmat.clone(), kstar.clone());
            let var = ref_matern(0.0, sigma2, ell, nu)
                - kstar.iter().zip(&z).map(|(k, b)| k * b).sum::<f64>();
            assert!(
                (got_mu - mu).abs() <= 1e-8 * mu.abs().max(1.0),
                "ν index {which}, query {q:?}: mean {got_mu} vs {mu}"
            );
            assert!(
                (got_var - var).abs() <= 1e-8 * var.abs().max(1.0),
                "ν index {which}, query {q:?}: variance {got_var} vs {var}"
            );
        }

        // Near-noiseless observations are interpolated...
        let anchors: Vec<[f64; 2]> =
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.5, 1.5], [2.5, 0.5]];
        let mut exact =
            GpModel::new(KernelParams::new(sigma2, ell, nu).unwrap(), 1e-9).unwrap();
        for &x in &anchors {
            exact.observe(x, f(x)).unwrap();
        }
        for (&x, &(mu, var)) in anchors.iter().zip(&exact.posterior(&anchors).unwrap()) {
            assert!((mu - f(x)).abs() <= 1e-6, "no interpolation at {x:?}: {mu}");
            assert!((-1e-10..=1e-6).contains(&var), "variance at a data point: {var}");
        }
        // ...and far from all data the prior takes back over.
        let (mu, var) = exact.posterior(&[[80.0, 80.0]]).unwrap()[0];
        assert!(mu.abs() <= 1e-9, "prior mean not recovered: {mu}");
        assert!((var - sigma2).abs() <= 1e-9 * sigma2, "prior variance not recovered: {var}");
    }
    println!("acceptance 05 GP posterior vs dense solve: pass");
}

// ---------------------------------------------------------------------------
// 6. Weight tuning on a synthetic bowl

#[test]
fn weight_tuning_recovers_a_synthetic_minimum() {
    // Noiseless bowl with its optimum on the candidate grid but away from
    // the (1, 1) start. A longer length scale and a mild exploration bonus
    // suit a smooth global objective; everything else is stock.
    let target = (1.15, 0.95);
    let mut config = TuneConfig::default();
    config.ell = 0.6;
    config.acquisition.beta = 2.0;
    let outcome = tune_weights(&config, |w0, w1| {
        Ok((w0 - target.0).powi(2) + (w1 - target.1).powi(2))
    })
    .unwrap();
    assert!(outcome.trace.len() <= 60, "budget exceeded: {}", outcome.trace.len());
    let step = config.acquisition.grid.step();
    let [w0, w1] = outcome.best_weights;
    assert!(
        (w0 - target.0).abs() <= step + 1e-9 && (w1 - target.1).abs() <= step + 1e-9,
        "tuned to ({w0}, {w1}) after {} evaluations, want within {step} of {target:?} ({:?})",
        outcome.trace.len(),
        outcome.stop,
    );
    println!("acceptance 06 tuner recovers the bowl minimum: pass");
}

// ---------------------------------------------------------------------------
// 7. Simulator safety and determinism

fn track_bytes(peds: &[Trajectory]) -> Vec<u8> {
    let records: Vec<TrackRecord> = peds
        .iter()
        .flat_map(|t| {
            t.samples().iter().map(move |s| TrackRecord {
                timestamp: s.t,
                person_id: t.person_id(),
                x: s.x,
                y: s.y,
                velocity: None,
                motion_angle: None,
            })
        })
        .collect();
    let mut buf = Vec::new();
    write_tracks(&mut buf, &records, &FormatDescriptor::plain()).unwrap();
    buf
}

#[test]
fn simulation_runs_are_safe_and_replay_deterministically() {
    let params = SimParams::default();
    for seed in 0..50u64 {
        let n_robots = 2 + (seed as usize % 4);
        let ped_lines = 1 + (seed as usize % 3);
        let scenario = open_scenario(seed, n_robots, ped_lines, 0.65);
        assert!(!scenario.pedestrians.is_empty());
        let before = track_bytes(&scenario.pedestrians);
        let record = run_experiment(&scenario, Method::Hata, &params, Objective::Sum)
            .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        assert_eq!(
            track_bytes(&scenario.pedestrians),
            before,
            "seed {seed}: the pedestrian log changed during simulation"
        );

        // Discretization allowance: one cell diagonal.
        let eps_grid = scenario.grid.spec().resolution * SQRT_2;
        if let Some(d) = record.min_robot_robot_m {
            assert!(
                d >= 2.0 * params.robot_radius - eps_grid,
                "seed {seed}: robots closed to {d} m"
            );
        }
        if let Some(d) = record.min_robot_ped_m {
            assert!(
                d >= params.robot_radius + params.pedestrian_radius - eps_grid,
                "seed {seed}: a robot closed on a pedestrian to {d} m"
            );
        }

        let again = open_scenario(seed, n_robots, ped_lines, 0.65);
        let replay = run_experiment(&again, Method::Hata, &params, Objective::Sum).unwrap();
        assert_eq!(
            record.trace_hash, replay.trace_hash,
            "seed {seed}: trace hash changed between identical runs"
        );
        assert_eq!(record.assignment.mapping(), replay.assignment.mapping());
        assert_eq!(record.outcome, replay.outcome);
    }
    println!("acceptance 07 simulator safety and determinism: pass");
}

// ---------------------------------------------------------------------------
// 8. Zero-crowd reduction

#[test]
fn with_nobody_around_hata_reduces_to_the_path_baseline() {
    let params = SimParams::default();
    for seed in 200..220u64 {
        let n_robots = 2 + (seed as usize % 4);
        let delta = 0.2 + (seed % 8) as f64 * 0.1;
        let scenario = open_scenario(seed, n_robots, 0, delta);
        assert!(scenario.pedestrians.is_empty());
        for layer in scenario.mods.layers() {
            assert!(layer.values().iter().all(|&v| v == 0.0));
        }
        let hata = run_experiment(&scenario, Method::Hata, &params, Objective::Sum).unwrap();
        let path = run_experiment(&scenario, Method::PathLength, &params, Objective::Sum).unwrap();
        assert_eq!(
            hata.assignment.mapping(),
            path.assignment.mapping(),
            "seed {seed}: assignments diverged on an empty map"
        );
        assert_eq!(hata.outcome, path.outcome, "seed {seed}: outcomes diverged");
        assert_eq!(hata.trace_hash, path.trace_hash, "seed {seed}");
    }
    println!("acceptance 08 zero-crowd reduction to the static baseline: pass");
}

// ---------------------------------------------------------------------------
// 9. Corridor family, directional

#[test]
fn corridor_family_cuts_waiting_without_extra_failures() {
    let t_test = Instant::now();
    let params = SimParams::default();
    let (mut hata_wait, mut path_wait) = (0.0f64, 0.0f64);
    let (mut hata_fail, mut path_fail) = (0usize, 0usize);
    let mut robots = 0usize;
    for seed in 0..30u64 {
        let scenario = corridor_scenario(seed, 0.65);
        let hata = run_experiment(&scenario, Method::Hata, &params, Objective::Sum)
            .unwrap_or_else(|e| panic!("seed {seed} (hata): {e}"));
        let path = run_experiment(&scenario, Method::PathLength, &params, Objective::Sum)
            .unwrap_or_else(|e| panic!("seed {seed} (path): {e}"));
        robots += scenario.robots.len();
        for r in &hata.outcome.robots {
            hata_wait += r.waiting_time;
            hata_fail += r.failure.is_some() as usize;
        }
        for r in &path.outcome.robots {
            path_wait += r.waiting_time;
            path_fail += r.failure.is_some() as usize;
        }
    }
    let hata_mean = hata_wait / robots as f64;
    let path_mean = path_wait / robots as f64;
    assert!(
        hata_mean < path_mean,
        "mean waiting over {robots} robots: {hata_mean} s vs baseline {path_mean} s"
    );
    assert!(
        hata_fail <= path_fail,
        "failures over {robots} robots: {hata_fail} vs baseline {path_fail}"
    );
    assert!(t_test.elapsed() < Duration::from_secs(300));
    println!(
        "acceptance 09 corridor waiting {hata_mean:.2} s < {path_mean:.2} s, \
         failures {hata_fail} <= {path_fail}: pass"
    );
}

// ---------------------------------------------------------------------------
// 10. Assignment-time scaling through the binary

#[test]
fn assignment_timing_scales_with_fleet_size_and_is_reported() {
    let base = std::env::temp_dir().join(format!("hata-acceptance-{}", std::process::id()));
    let batch_out = base.join("batch");
    let report_out = base.join("report");
    std::fs::create_dir_all(&base).unwrap();
    let config_path = base.join("scaling.toml");
    std::fs::write(
        &config_path,
        concat!(
            "format = \"hata-batch/1\"\n",
            "seed_base = 4100\n",
            "runs = 1\n",
            "fleet_sizes = [2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15]\n",
            "deltas = [0.65]\n",
            "methods = [\"hata\"]\n",
            "\n",
            "[scenario]\n",
            "family = \"open\"\n",
            "ped_lines = 1\n",
        ),
    )
    .unwrap();

    let status = Command::new(env!("CARGO_BIN_EXE_hata"))
        .arg("run-batch")
        .arg("--config")
        .arg(&config_path)
        .arg("--out")
        .arg(&batch_out)
        .status()
        .unwrap();
    assert!(status.success(), "run-batch exited with {status}");
    let failures = std::fs::read_to_string(batch_out.join("harness_failures.csv")).unwrap();
    assert_eq!(failures.lines().count(), 1, "harness failures:\n{failures}");

    let status = Command::new(env!("CARGO_BIN_EXE_hata"))
        .arg("report")
        .arg(&batch_out)
        .arg("--out")
        .arg(&report_out)
        .status()
        .unwrap();
    assert!(status.success(), "report exited with {status}");

    let series = std::fs::read_to_string(report_out.join("timing_series.csv")).unwrap();
    let mut lines = series.lines();
    assert_eq!(lines.next().unwrap(), "label,fleet,assign_ms,exec_s");
    let mut assign_ms = BTreeMap::new();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 4, "malformed series row {line:?}");
        if fields[0] == "hata d=0.65" {
            assign_ms.insert(
                fields[1].parse::<usize>().unwrap(),
                fields[2].parse::<f64>().unwrap(),
            );
        }
    }
    for fleet in 2..=15usize {
        let ms = assign_ms
            .get(&fleet)
            .unwrap_or_else(|| panic!("fleet {fleet} missing from the series"));
        assert!(
            ms.is_finite() && *ms >= 0.0 && *ms < 100.0,
            "fleet {fleet}: assignment took {ms} ms"
        );
    }
    assert!(
        assign_ms[&15] > assign_ms[&2],
        "assignment time did not grow with fleet size: {assign_ms:?}"
    );
    std::fs::remove_dir_all(&base).ok();
    println!("acceptance 10 assignment timing bounded and growing, series reported: pass");
}
