//! One-shot robot-to-task assignment over a cost matrix.
//!
//! Two objectives: minimize the cost sum (Hungarian method) or minimize the
//! worst pair cost (bottleneck assignment, which breaks ties toward the
//! smaller sum). Both resolve remaining ties to the lexicographically
//! smallest assignment vector, so equal inputs can never produce two
//! different answers.

use thiserror::Error;

use crate::cost::CostMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum AssignError {
    #[error("robot {0} cannot reach any task")]
    InfeasibleRow(usize),
    #[error("task {0} is unreachable for every robot")]
    InfeasibleColumn(usize),
    #[error("no perfect matching over reachable pairs")]
    NoPerfectMatching,
}

/// Which scalar the allocator minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Total cost across the fleet.
    Sum,
    /// Worst single robot cost (ties: smaller total, then lexicographic).
    MinMax,
}

/// A perfect matching: robot `i` serves task `mapping()[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    mapping: Vec<usize>,
    objective_sum: f64,
    objective_max: f64,
}

impl Assignment {
    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    pub fn objective_sum(&self) -> f64 {
        self.objective_sum
    }

    pub fn objective_max(&self) -> f64 {
        self.objective_max
    }

    /// CSV rows `robot,task,pair_cost` followed by a `#` summary line with
    /// both objective values.
    pub fn to_csv(&self, costs: &CostMatrix) -> String {
        let mut out = String::from("robot,task,pair_cost\n");
        for (i, &j) in self.mapping.iter().enumerate() {
            let c = costs.get(i, j).expect("assignment uses reachable pairs");
            out.push_str(&format!("{i},{j},{c}\n"));
        }
        out.push_str(&format!(
            "# objective_sum={} objective_max={}\n",
            self.objective_sum, self.objective_max
        ));
        out
    }
}

/// Dense matrix view with unreachable pairs priced out by a finite sentinel
/// large enough that no optimal matching ever uses one when a sentinel-free
/// perfect matching exists.
struct Priced {
    n: usize,
    values: Vec<f64>,
    allowed: Vec<bool>,
}

impl Priced {
    fn new(costs: &CostMatrix, cap: Option<f64>) -> Self {
        let n = costs.n();
        let mut max_abs: f64 = 1.0;
        for i in 0..n {
            for j in 0..n {
                if let Some(v) = costs.get(i, j) {
                    max_abs = max_abs.max(v.abs());
                }
            }
        }
        let sentinel = (2 * n + 1) as f64 * max_abs + 1.0;
        let mut values = vec![sentinel; n * n];
        let mut allowed = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                if let Some(v) = costs.get(i, j) {
                    if cap.is_none_or(|c| v <= c) {
                        values[i * n + j] = v;
                        allowed[i * n + j] = true;
                    }
                }
            }
        }
        Priced { n, values, allowed }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    fn is_allowed(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.n + j]
    }
}

/// Classic O(n³) potentials-based Hungarian method on a cost callback over
/// `rows × cols` index sets. Returns (total, column choice per row).
fn solve_min_sum(n: usize, cost: &dyn Fn(usize, usize) -> f64) -> (f64, Vec<usize>) {
    if n == 0 {
        return (0.0, Vec::new());
    }
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1]; // row matched to column j (1-based)
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut mapping = vec![0usize; n];
    for j in 1..=n {
        mapping[p[j] - 1] = j - 1;
    }
    let total = (0..n).map(|i| cost(i, mapping[i])).sum();
    (total, mapping)
}

/// Among all matchings whose total stays optimal (within a relative float
/// tolerance), pick the lexicographically smallest assignment vector:
/// per row in order, fix the smallest column whose optimal completion still
/// meets the current optimum.
fn lex_smallest_optimal(m: &Priced) -> Vec<usize> {
    let n = m.n;
    let (mut budget, _) = solve_min_sum(n, &|i, j| m.at(i, j));
    let mut available: Vec<usize> = (0..n).collect();
    let mut mapping = vec![0usize; n];
    for i in 0..n {
        let tol = 1e-9 * (1.0 + budget.abs());
        let mut chosen: Option<(usize, f64)> = None;
        let mut best: (f64, usize) = (f64::INFINITY, 0);
        for (pos, &j) in available.iter().enumerate() {
            let sub_cols: Vec<usize> =
                available.iter().copied().filter(|&c| c != j).collect();
            let (sub_total, _) =
                solve_min_sum(n - i - 1, &|r, c| m.at(i + 1 + r, sub_cols[c]));
            let candidate = m.at(i, j) + sub_total;
            if candidate < best.0 {
                best = (candidate, pos);
            }
            if candidate <= budget + tol {
                chosen = Some((pos, sub_total));
                break;
            }
        }
        let (pos, next_budget) = chosen.unwrap_or_else(|| {
            // Float-noise guard: keep the cheapest completion. With the
            // tolerance above this branch is unreachable in practice.
            let j = available[best.1];
            (best.1, best.0 - m.at(i, j))
        });
        mapping[i] = available.remove(pos);
        budget = next_budget;
    }
    debug_assert_eq!(
        {
            let mut s = mapping.clone();
            s.sort_unstable();
            s
        },
        (0..n).collect::<Vec<_>>()
    );
    mapping
}

/// Kuhn's augmenting-path matching: does a perfect matching exist using only
/// `allowed` edges?
fn has_perfect_matching(n: usize, allowed: &dyn Fn(usize, usize) -> bool) -> bool {
    let mut match_of_col = vec![usize::MAX; n];
    fn try_row(
        i: usize,
        n: usize,
        allowed: &dyn Fn(usize, usize) -> bool,
        seen: &mut [bool],
        match_of_col: &mut [usize],
    ) -> bool {
        for j in 0..n {
            if allowed(i, j) && !seen[j] {
                seen[j] = true;
                if match_of_col[j] == usize::MAX
                    || try_row(match_of_col[j], n, allowed, seen, match_of_col)
                {
                    match_of_col[j] = i;
                    return true;
                }
            }
        }
        false
    }
    for i in 0..n {
        let mut seen = vec![false; n];
        if !try_row(i, n, allowed, &mut seen, &mut match_of_col) {
            return false;
        }
    }
    true
}

fn check_feasible(costs: &CostMatrix) -> Result<(), AssignError> {
    let n = costs.n();
    for i in 0..n {
        if (0..n).all(|j| costs.get(i, j).is_none()) {
            return Err(AssignError::InfeasibleRow(i));
        }
    }
    for j in 0..n {
        if (0..n).all(|i| costs.get(i, j).is_none()) {
            return Err(AssignError::InfeasibleColumn(j));
        }
    }
    Ok(())
}

fn finish(m: &Priced, mapping: Vec<usize>) -> Result<Assignment, AssignError> {
    let mut sum = 0.0;
    let mut max = f64::NEG_INFINITY;
    for (i, &j) in mapping.iter().enumerate() {
        if !m.is_allowed(i, j) {
            return Err(AssignError::NoPerfectMatching);
        }
        let v = m.at(i, j);
        sum += v;
        max = max.max(v);
    }
    Ok(Assignment {
        mapping,
        objective_sum: sum,
        objective_max: if max.is_finite() { max } else { 0.0 },
    })
}

/// Minimum-total-cost assignment (Hungarian method), ties broken to the
/// lexicographically smallest assignment vector.
pub fn hungarian(costs: &CostMatrix) -> Result<Assignment, AssignError> {
    if costs.n() == 0 {
        return Ok(Assignment {
            mapping: Vec::new(),
            objective_sum: 0.0,
            objective_max: 0.0,
        });
    }
    check_feasible(costs)?;
    let m = Priced::new(costs, None);
    finish(&m, lex_smallest_optimal(&m))
}

/// Minimum-bottleneck assignment: minimizes the largest pair cost, then the
/// total, then lexicographic order. Binary-searches the sorted distinct
/// values for the smallest feasible cap and runs the Hungarian method
/// restricted to pairs at or below it.
pub fn bottleneck(costs: &CostMatrix) -> Result<Assignment, AssignError> {
    let n = costs.n();
    if n == 0 {
        return Ok(Assignment {
            mapping: Vec::new(),
            objective_sum: 0.0,
            objective_max: 0.0,
        });
    }
    check_feasible(costs)?;
    let mut vals: Vec<f64> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if let Some(v) = costs.get(i, j) {
                vals.push(v);
            }
        }
    }
    vals.sort_by(f64::total_cmp);
    vals.dedup();
    let feasible = |cap: f64| {
        has_perfect_matching(n, &|i, j| costs.get(i, j).is_some_and(|v| v <= cap))
    };
    if !feasible(*vals.last().unwrap()) {
        return Err(AssignError::NoPerfectMatching);
    }
    let (mut lo, mut hi) = (0usize, vals.len() - 1);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if feasible(vals[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let cap = vals[lo];
    let m = Priced::new(costs, Some(cap));
    let a = finish(&m, lex_smallest_optimal(&m))?;
    debug_assert!(a.objective_max <= cap);
    Ok(a)
}

/// Solve under the chosen objective.
pub fn allocate(costs: &CostMatrix, objective: Objective) -> Result<Assignment, AssignError> {
    match objective {
        Objective::Sum => hungarian(costs),
        Objective::MinMax => bottleneck(costs),
    }
}
