//! Rectangular linear assignment.
//!
//! `hungarian` finds a minimum-cost matching of size `min(rows, cols)` with
//! the shortest-augmenting-path form of the Hungarian method, then picks the
//! lexicographically smallest pair list among all optimal matchings. Ties are
//! resolved from the optimal dual potentials: a matching is optimal iff it
//! uses only tight edges, covers the smaller side and covers every
//! larger-side vertex with a nonzero potential.

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid(format!(
                "cost matrix of {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(CostMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(invalid("ragged cost matrix"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transposed(&self) -> CostMatrix {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            data.extend((0..self.rows).map(|i| self.get(i, j)));
        }
        CostMatrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// `(row, col)` pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

impl Assignment {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Checks the one-pair-per-row/column invariant against a matrix shape.
    pub fn is_valid_for(&self, rows: usize, cols: usize) -> bool {
        let mut used_r = vec![false; rows];
        let mut used_c = vec![false; cols];
        for &(i, j) in &self.pairs {
            if i >= rows || j >= cols || used_r[i] || used_c[j] {
                return false;
            }
            used_r[i] = true;
            used_c[j] = true;
        }
        true
    }
}

pub fn hungarian(cost: &CostMatrix) -> Result<Assignment> {
    if cost.rows == 0 || cost.cols == 0 {
        return Err(invalid("cost matrix must have at least one row and column"));
    }
    if let Some(x) = cost.data.iter().find(|x| !x.is_finite()) {
        return Err(invalid(format!("non-finite cost {x}")));
    }
    let transpose = cost.rows > cost.cols;
    let work = if transpose {
        cost.transposed()
    } else {
        cost.clone()
    };
    let duals = solve(&work);

    // Back to the caller's orientation.
    let (row_pot, col_pot, mut mate_row) = if transpose {
        let mut mate = vec![None; cost.rows];
        for (j, &i) in duals.row_mate.iter().enumerate() {
            mate[i] = Some(j);
        }
        (duals.v, duals.u, mate)
    } else {
        let mate = duals.row_mate.iter().map(|&j| Some(j)).collect();
        (duals.u, duals.v, mate)
    };

    let scale = cost.data.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-11 * scale * (cost.rows + cost.cols) as f64;
    let tight: Vec<Vec<usize>> = (0..cost.rows)
        .map(|i| {
            (0..cost.cols)
                .filter(|&j| cost.get(i, j) - row_pot[i] - col_pot[j] <= tol)
                .collect()
        })
        .collect();
    // Small side always covered; large side covered where the potential is nonzero.
    let must_row: Vec<bool> = (0..cost.rows)
        .map(|i| !transpose || row_pot[i] < -tol)
        .collect();
    let must_col: Vec<bool> = (0..cost.cols)
        .map(|j| transpose || col_pot[j] < -tol)
        .collect();
    for (i, m) in mate_row.iter().enumerate() {
        debug_assert!(m.map_or(!must_row[i], |j| tight[i].contains(&j)));
    }

    let pairs = lexicographic_optimum(&tight, &must_row, &must_col, &mut mate_row);
    let total_cost = pairs.iter().map(|&(i, j)| cost.get(i, j)).sum();
    Ok(Assignment { pairs, total_cost })
}

struct Duals {
    u: Vec<f64>,
    v: Vec<f64>,
    row_mate: Vec<usize>,
}

/// Shortest augmenting paths for `rows <= cols`; returns potentials with
/// `u[i] + v[j] <= c[i][j]`, `v <= 0` and the row-to-column matching.
fn solve(c: &CostMatrix) -> Duals {
    let (n, m) = (c.rows, c.cols);
    debug_assert!(n <= m);
    const NONE: usize = usize::MAX;
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; m];
    let mut col_mate = vec![NONE; m];
    let mut way = vec![NONE; m];
    let mut minv = vec![0.0; m];
    let mut used = vec![false; m];
    let mut used_cols: Vec<usize> = Vec::with_capacity(m);

    for start in 0..n {
        minv.fill(f64::INFINITY);
        used.fill(false);
        used_cols.clear();
        way.fill(NONE);
        // `row` is the row whose edges are scanned; `reached` the last column settled.
        let mut row = start;
        let mut reached = NONE;
        let mut offset = 0.0; // accumulated delta applied to the start row
        let free_col = loop {
            let mut delta = f64::INFINITY;
            let mut next = NONE;
            let ur = u[row];
            let crow = c.row(row);
            for j in 0..m {
                if used[j] {
                    continue;
                }
                let cur = crow[j] - ur - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = reached;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    next = j;
                }
            }
            offset += delta;
            for &j in &used_cols {
                u[col_mate[j]] += delta;
                v[j] -= delta;
            }
            for j in 0..m {
                if !used[j] {
                    minv[j] -= delta;
                }
            }
            used[next] = true;
            used_cols.push(next);
            // `way[next]` records the column we came from (NONE = start row).
            if col_mate[next] == NONE {
                break next;
            }
            reached = next;
            row = col_mate[next];
        };
        u[start] += offset;
        // `next` was marked used after the dual update, so its v is unchanged.
        let mut j = free_col;
        loop {
            let prev = way[j];
            col_mate[j] = if prev == NONE { start } else { col_mate[prev] };
            if prev == NONE {
                break;
            }
            j = prev;
        }
    }

    let mut row_mate = vec![NONE; n];
    for (j, &i) in col_mate.iter().enumerate() {
        if i != NONE {
            row_mate[i] = j;
        }
    }
    Duals { u, v, row_mate }
}

/// Greedy row-by-row choice of the smallest feasible option among the optimal
/// matchings described by `tight` + coverage requirements.
fn lexicographic_optimum(
    tight: &[Vec<usize>],
    must_row: &[bool],
    must_col: &[bool],
    mate_row: &mut [Option<usize>],
) -> Vec<(usize, usize)> {
    let rows = tight.len();
    let cols = must_col.len();
    let mut col_taken = vec![false; cols];
    let mut pairs = Vec::new();
    // While every choice so far agrees with `mate_row`, it is a witness completion.
    let mut witness = true;

    for i in 0..rows {
        let mut options: Vec<Option<usize>> = tight[i]
            .iter()
            .copied()
            .filter(|&j| !col_taken[j])
            .map(Some)
            .collect();
        if !must_row[i] {
            options.push(None);
        }
        // A lone option is forced: some completion exists and must use it.
        let forced = options.len() == 1;
        let chosen = options
            .into_iter()
            .find(|&opt| {
                if forced || (witness && opt == mate_row[i]) {
                    return true;
                }
                if let Some(j) = opt {
                    col_taken[j] = true;
                }
                let ok = residual_feasible(i + 1, tight, must_row, must_col, &col_taken);
                if let Some(j) = opt {
                    col_taken[j] = false;
                }
                ok
            })
            .expect("an optimal completion always exists");
        if chosen != mate_row[i] {
            witness = false;
        }
        if let Some(j) = chosen {
            col_taken[j] = true;
            pairs.push((i, j));
        }
    }
    pairs
}

/// Whether rows `from..` can be matched on free tight columns covering every
/// required row and every required free column. Two separate checks suffice
/// (Mendelsohn-Dulmage).
fn residual_feasible(
    from: usize,
    tight: &[Vec<usize>],
    must_row: &[bool],
    must_col: &[bool],
    col_taken: &[bool],
) -> bool {
    let rows = tight.len();
    let cols = must_col.len();

    let req_rows: Vec<usize> = (from..rows).filter(|&i| must_row[i]).collect();
    let adj_rows: Vec<Vec<usize>> = req_rows
        .iter()
        .map(|&i| tight[i].iter().copied().filter(|&j| !col_taken[j]).collect())
        .collect();
    if max_matching(&adj_rows, cols) < req_rows.len() {
        return false;
    }

    let req_cols: Vec<usize> = (0..cols).filter(|&j| must_col[j] && !col_taken[j]).collect();
    if req_cols.is_empty() {
        return true;
    }
    let mut slot = vec![usize::MAX; cols];
    for (k, &j) in req_cols.iter().enumerate() {
        slot[j] = k;
    }
    let mut adj_cols: Vec<Vec<usize>> = vec![Vec::new(); req_cols.len()];
    for (i, t) in tight.iter().enumerate().skip(from) {
        for &j in t {
            if slot[j] != usize::MAX {
                adj_cols[slot[j]].push(i);
            }
        }
    }
    max_matching(&adj_cols, rows) == req_cols.len()
}

/// Kuhn's augmenting-path bipartite matching; returns the matching size.
fn max_matching(adj: &[Vec<usize>], right: usize) -> usize {
    fn augment(
        l: usize,
        adj: &[Vec<usize>],
        seen: &mut [bool],
        mate: &mut [usize],
    ) -> bool {
        for &r in &adj[l] {
            if seen[r] {
                continue;
            }
            seen[r] = true;
            if mate[r] == usize::MAX || augment(mate[r], adj, seen, mate) {
                mate[r] = l;
                return true;
            }
        }
        false
    }
    let mut mate = vec![usize::MAX; right];
    let mut seen = vec![false; right];
    let mut size = 0;
    for l in 0..adj.len() {
        seen.fill(false);
        if augment(l, adj, &mut seen, &mut mate) {
            size += 1;
        }
    }
    size
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive reference: every matching of size min(rows, cols), keeping
    /// the lexicographically smallest pair list among the cheapest.
    pub(crate) fn brute_force(c: &CostMatrix) -> (f64, Vec<(usize, usize)>) {
        fn rec(
            c: &CostMatrix,
            i: usize,
            need: usize,
            used: &mut Vec<bool>,
            cur: &mut Vec<(usize, usize)>,
            cost: f64,
            best: &mut Option<(f64, Vec<(usize, usize)>)>,
        ) {
            if cur.len() == need {
                let better = match best {
                    None => true,
                    Some((b, pairs)) => cost < *b || (cost == *b && *cur < *pairs),
                };
                if better {
                    *best = Some((cost, cur.clone()));
                }
                return;
            }
            if i == c.rows() || c.rows() - i < need - cur.len() {
                return;
            }
            for j in 0..c.cols() {
                if !used[j] {
                    used[j] = true;
                    cur.push((i, j));
                    rec(c, i + 1, need, used, cur, cost + c.get(i, j), best);
                    cur.pop();
                    used[j] = false;
                }
            }
            rec(c, i + 1, need, used, cur, cost, best);
        }
        let mut best = None;
        let need = c.rows().min(c.cols());
        rec(c, 0, need, &mut vec![false; c.cols()], &mut Vec::new(), 0.0, &mut best);
        best.unwrap()
    }

    #[test]
    fn small_examples() {
        let a = hungarian(&CostMatrix::from_rows(&[vec![0., 1.], vec![1., 0.]]).unwrap()).unwrap();
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(a.total_cost, 0.0);
        let a = hungarian(&CostMatrix::from_rows(&[vec![5.]]).unwrap()).unwrap();
        assert_eq!(a.pairs, vec![(0, 0)]);
        assert_eq!(a.total_cost, 5.0);
    }

    #[test]
    fn rejects_bad_input() {
        let nan = CostMatrix::from_rows(&[vec![0., f64::NAN]]).unwrap();
        assert!(hungarian(&nan).is_err());
        assert!(hungarian(&CostMatrix::new(0, 3, vec![]).unwrap()).is_err());
        assert!(CostMatrix::from_rows(&[vec![1.], vec![1., 2.]]).is_err());
    }

    #[test]
    fn ties_resolve_to_lexicographically_smallest() {
        let all_zero = CostMatrix::new(3, 3, vec![0.0; 9]).unwrap();
        assert_eq!(hungarian(&all_zero).unwrap().pairs, vec![(0, 0), (1, 1), (2, 2)]);
        // Tall: prefer matching row 0 over leaving it out.
        let tall = CostMatrix::from_rows(&[vec![1.], vec![1.], vec![1.]]).unwrap();
        assert_eq!(hungarian(&tall).unwrap().pairs, vec![(0, 0)]);
        let wide = CostMatrix::from_rows(&[vec![2., 1., 1.]]).unwrap();
        assert_eq!(hungarian(&wide).unwrap().pairs, vec![(0, 1)]);
    }

    #[test]
    fn random_rectangular_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let c = CostMatrix::new(6, 8, (0..48).map(|_| rng.random::<f64>()).collect()).unwrap();
            let a = hungarian(&c).unwrap();
            let (best, pairs) = brute_force(&c);
            assert!((a.total_cost - best).abs() < 1e-12);
            assert_eq!(a.pairs, pairs);
            assert!(a.is_valid_for(6, 8));
        }
    }

    #[test]
    fn degenerate_integer_matrices_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..300 {
            let r = rng.random_range(1..=6);
            let cl = rng.random_range(1..=6);
            let c = CostMatrix::new(r, cl, (0..r * cl).map(|_| rng.random_range(0..3) as f64).collect())
                .unwrap();
            let a = hungarian(&c).unwrap();
            let (best, pairs) = brute_force(&c);
            assert_eq!(a.total_cost, best, "{c:?}");
            assert_eq!(a.pairs, pairs, "{c:?}");
        }
    }

    #[test]
    fn large_problem_is_a_valid_perfect_matching() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 300;
        let c = CostMatrix::new(n, n, (0..n * n).map(|_| rng.random::<f64>()).collect()).unwrap();
        let a = hungarian(&c).unwrap();
        assert_eq!(a.len(), n);
        assert!(a.is_valid_for(n, n));
        // Optimal cost for uniform costs approaches pi^2/6.
        assert!(a.total_cost < 2.0, "{}", a.total_cost);
    }
}
