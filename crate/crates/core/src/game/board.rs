use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GameConfig, GameError};

const EMPTY: u8 = u8::MAX;
const RESHUFFLE_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub row: usize,
    pub col: usize,
}

impl Pos {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Cells removed together: a maximal run, or several runs sharing cells.
/// Cells are sorted row-major.
pub type MatchSet = Vec<Pos>;

/// Row-major grid of gem kinds plus the generator used for refills.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Board {
    rows: usize,
    cols: usize,
    kinds: u8,
    cells: Vec<u8>,
    rng: ChaCha8Rng,
}

impl Board {
    /// Fills a fresh board row by row, re-rolling any cell that would
    /// complete a run with the two cells to its left or above it.
    pub fn new(config: &GameConfig, seed: u64) -> Result<Self, GameError> {
        config.validate()?;
        let (rows, cols, kinds) = (config.board_rows, config.board_cols, config.gem_kinds);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cells = vec![EMPTY; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                loop {
                    let k = rng.random_range(0..kinds);
                    let horizontal =
                        c >= 2 && cells[r * cols + c - 1] == k && cells[r * cols + c - 2] == k;
                    let vertical =
                        r >= 2 && cells[(r - 1) * cols + c] == k && cells[(r - 2) * cols + c] == k;
                    if !horizontal && !vertical {
                        cells[r * cols + c] = k;
                        break;
                    }
                }
            }
        }
        let mut board = Board {
            rows,
            cols,
            kinds,
            cells,
            rng,
        };
        if !board.has_valid_swap() {
            board.reshuffle();
        }
        Ok(board)
    }

    /// Builds a board from explicit cell contents, e.g. for fixtures.
    /// `cells` is row-major; the seed drives later refills.
    pub fn from_cells(
        rows: usize,
        cols: usize,
        kinds: u8,
        cells: Vec<u8>,
        seed: u64,
    ) -> Result<Self, GameError> {
        let mut bad = Vec::new();
        if rows < 3 || cols < 3 {
            bad.push(format!("board {rows}x{cols} smaller than 3x3"));
        }
        if cells.len() != rows * cols {
            bad.push(format!("{} cells for a {rows}x{cols} board", cells.len()));
        }
        if cells.iter().any(|&k| k >= kinds) {
            bad.push(format!("cell kind outside [0, {kinds})"));
        }
        if !bad.is_empty() {
            return Err(GameError::Config(bad));
        }
        Ok(Board {
            rows,
            cols,
            kinds,
            cells,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn kinds(&self) -> u8 {
        self.kinds
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn get(&self, pos: Pos) -> u8 {
        self.cells[pos.row * self.cols + pos.col]
    }

    pub fn contains(&self, pos: Pos) -> bool {
        pos.row < self.rows && pos.col < self.cols
    }

    fn idx(&self, r: usize, c: usize) -> usize {
        r * self.cols + c
    }

    /// Maximal horizontal and vertical runs of length >= 3. Runs that share
    /// a cell (crosses, T and L shapes) are merged into one set.
    pub fn find_matches(&self) -> Vec<MatchSet> {
        let mut runs: Vec<Vec<usize>> = Vec::new();
        for r in 0..self.rows {
            let mut c = 0;
            while c < self.cols {
                let k = self.cells[self.idx(r, c)];
                let mut end = c + 1;
                while end < self.cols && self.cells[self.idx(r, end)] == k {
                    end += 1;
                }
                if k != EMPTY && end - c >= 3 {
                    runs.push((c..end).map(|cc| self.idx(r, cc)).collect());
                }
                c = end;
            }
        }
        for c in 0..self.cols {
            let mut r = 0;
            while r < self.rows {
                let k = self.cells[self.idx(r, c)];
                let mut end = r + 1;
                while end < self.rows && self.cells[self.idx(end, c)] == k {
                    end += 1;
                }
                if k != EMPTY && end - r >= 3 {
                    runs.push((r..end).map(|rr| self.idx(rr, c)).collect());
                }
                r = end;
            }
        }
        merge_runs(runs, self.cells.len())
            .into_iter()
            .map(|set| {
                set.into_iter()
                    .map(|i| Pos::new(i / self.cols, i % self.cols))
                    .collect()
            })
            .collect()
    }

    /// Whether swapping `a` and `b` would leave a run of >= 3 through either cell.
    pub fn forms_match(&self, a: Pos, b: Pos) -> bool {
        let (ka, kb) = (self.get(a), self.get(b));
        if ka == kb {
            return false;
        }
        let view = |p: Pos| -> u8 {
            if p == a {
                kb
            } else if p == b {
                ka
            } else {
                self.get(p)
            }
        };
        [a, b].iter().any(|&p| {
            let k = view(p);
            let mut h = 1;
            let mut c = p.col;
            while c > 0 && view(Pos::new(p.row, c - 1)) == k {
                h += 1;
                c -= 1;
            }
            c = p.col;
            while c + 1 < self.cols && view(Pos::new(p.row, c + 1)) == k {
                h += 1;
                c += 1;
            }
            let mut v = 1;
            let mut r = p.row;
            while r > 0 && view(Pos::new(r - 1, p.col)) == k {
                v += 1;
                r -= 1;
            }
            r = p.row;
            while r + 1 < self.rows && view(Pos::new(r + 1, p.col)) == k {
                v += 1;
                r += 1;
            }
            h >= 3 || v >= 3
        })
    }

    fn all_pairs(&self) -> impl Iterator<Item = (Pos, Pos)> + '_ {
        let n = self.cells.len();
        let cols = self.cols;
        (0..n).flat_map(move |i| {
            (i + 1..n).map(move |j| (Pos::new(i / cols, i % cols), Pos::new(j / cols, j % cols)))
        })
    }

    /// Every anywhere-swap that produces a match, in row-major pair order.
    pub fn valid_swaps(&self) -> Vec<(Pos, Pos)> {
        self.all_pairs()
            .filter(|&(a, b)| self.forms_match(a, b))
            .collect()
    }

    /// Swaps of two different gems that produce no match.
    pub fn invalid_swaps(&self) -> Vec<(Pos, Pos)> {
        self.all_pairs()
            .filter(|&(a, b)| self.get(a) != self.get(b) && !self.forms_match(a, b))
            .collect()
    }

    pub fn has_valid_swap(&self) -> bool {
        self.all_pairs().any(|(a, b)| self.forms_match(a, b))
    }

    pub(crate) fn swap(&mut self, a: Pos, b: Pos) {
        let (ia, ib) = (self.idx(a.row, a.col), self.idx(b.row, b.col));
        self.cells.swap(ia, ib);
    }

    /// Removes matches, drops gems down their columns and refills from the
    /// top until the board is stable. Returns one entry per removal pass.
    pub(crate) fn resolve_cascades(&mut self) -> Vec<Vec<MatchSet>> {
        let mut levels = Vec::new();
        loop {
            let matches = self.find_matches();
            if matches.is_empty() {
                break;
            }
            for set in &matches {
                for p in set {
                    let i = self.idx(p.row, p.col);
                    self.cells[i] = EMPTY;
                }
            }
            self.collapse_and_refill();
            levels.push(matches);
        }
        levels
    }

    fn collapse_and_refill(&mut self) {
        for c in 0..self.cols {
            let kept: Vec<u8> = (0..self.rows)
                .rev()
                .map(|r| self.cells[self.idx(r, c)])
                .filter(|&k| k != EMPTY)
                .collect();
            for r in 0..self.rows {
                let i = self.idx(r, c);
                self.cells[i] = EMPTY;
            }
            for (depth, &k) in kept.iter().enumerate() {
                let i = self.idx(self.rows - 1 - depth, c);
                self.cells[i] = k;
            }
        }
        for c in 0..self.cols {
            for r in (0..self.rows).rev() {
                let i = self.idx(r, c);
                if self.cells[i] == EMPTY {
                    self.cells[i] = self.rng.random_range(0..self.kinds);
                }
            }
        }
    }

    /// Permutes the gems (preserving counts) until the board is match-free
    /// and offers at least one valid swap. Returns false if no such
    /// arrangement was found within the attempt budget.
    pub fn reshuffle(&mut self) -> bool {
        for _ in 0..RESHUFFLE_ATTEMPTS {
            self.cells.shuffle(&mut self.rng);
            if self.find_matches().is_empty() && self.has_valid_swap() {
                return true;
            }
        }
        false
    }
}

fn merge_runs(runs: Vec<Vec<usize>>, n_cells: usize) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..runs.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut owner = vec![usize::MAX; n_cells];
    for (ri, run) in runs.iter().enumerate() {
        for &cell in run {
            if owner[cell] == usize::MAX {
                owner[cell] = ri;
            } else {
                let (a, b) = (find(&mut parent, owner[cell]), find(&mut parent, ri));
                if a != b {
                    parent[b] = a;
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (ri, run) in runs.iter().enumerate() {
        let root = find(&mut parent, ri);
        groups.entry(root).or_default().extend(run.iter().copied());
    }
    let mut sets: Vec<Vec<usize>> = groups
        .into_values()
        .map(|mut g| {
            g.sort_unstable();
            g.dedup();
            g
        })
        .collect();
    sets.sort_by_key(|s| s[0]);
    sets
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(rows: usize, cols: usize, kinds: u8) -> GameConfig {
        GameConfig {
            board_rows: rows,
            board_cols: cols,
            gem_kinds: kinds,
            ..GameConfig::default()
        }
    }

    /// Brute-force oracle: every cell that lies in some horizontal or
    /// vertical window of three equal kinds.
    fn matched_cells_oracle(board: &Board) -> Vec<Pos> {
        let mut out = std::collections::BTreeSet::new();
        for r in 0..board.rows() {
            for c in 0..board.cols() {
                let k = board.get(Pos::new(r, c));
                if c + 2 < board.cols()
                    && board.get(Pos::new(r, c + 1)) == k
                    && board.get(Pos::new(r, c + 2)) == k
                {
                    out.extend([Pos::new(r, c), Pos::new(r, c + 1), Pos::new(r, c + 2)]);
                }
                if r + 2 < board.rows()
                    && board.get(Pos::new(r + 1, c)) == k
                    && board.get(Pos::new(r + 2, c)) == k
                {
                    out.extend([Pos::new(r, c), Pos::new(r + 1, c), Pos::new(r + 2, c)]);
                }
            }
        }
        out.into_iter().collect()
    }

    #[test]
    fn same_seed_gives_identical_boards() {
        let a = Board::new(&cfg(8, 8, 7), 42).unwrap();
        let b = Board::new(&cfg(8, 8, 7), 42).unwrap();
        assert_eq!(a.cells(), b.cells());
        assert_eq!(a, b);
    }

    #[test]
    fn small_board_has_no_initial_match() {
        for seed in 0..200 {
            let b = Board::new(&cfg(3, 3, 4), seed).unwrap();
            assert!(b.find_matches().is_empty(), "seed {seed}");
        }
    }

    #[test]
    fn different_seeds_give_different_boards() {
        let boards: Vec<_> = (0..100)
            .map(|s| Board::new(&cfg(8, 8, 7), s).unwrap().cells().to_vec())
            .collect();
        let distinct: std::collections::HashSet<_> = boards.iter().collect();
        assert_eq!(distinct.len(), 100);
        assert_ne!(boards[1], boards[2]);
    }

    #[test]
    fn invalid_dimensions_rejected() {
        assert!(matches!(
            Board::new(&cfg(2, 8, 7), 0),
            Err(GameError::Config(_))
        ));
    }

    #[test]
    fn minimal_row_match() {
        #[rustfmt::skip]
        let b = Board::from_cells(3, 3, 9, vec![
            0, 0, 0,
            1, 2, 3,
            4, 5, 6,
        ], 0).unwrap();
        let m = b.find_matches();
        assert_eq!(
            m,
            vec![vec![Pos::new(0, 0), Pos::new(0, 1), Pos::new(0, 2)]]
        );
    }

    #[test]
    fn cross_shape_merges_into_one_set() {
        #[rustfmt::skip]
        let b = Board::from_cells(3, 3, 9, vec![
            1, 0, 2,
            0, 0, 0,
            3, 0, 4,
        ], 0).unwrap();
        let m = b.find_matches();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].len(), 5);
        assert_eq!(m[0], matched_cells_oracle(&b));
    }

    #[test]
    fn match_free_board_reports_nothing() {
        let b = Board::new(&cfg(8, 8, 7), 3).unwrap();
        assert!(b.find_matches().is_empty());
        assert!(matched_cells_oracle(&b).is_empty());
    }

    #[test]
    fn identical_kinds_never_form_a_match() {
        #[rustfmt::skip]
        let b = Board::from_cells(3, 3, 9, vec![
            0, 0, 1,
            2, 3, 0,
            4, 5, 6,
        ], 0).unwrap();
        assert!(!b.forms_match(Pos::new(0, 0), Pos::new(0, 1)));
        assert!(b.forms_match(Pos::new(0, 2), Pos::new(1, 2)));
    }

    #[test]
    fn reshuffle_preserves_gem_counts() {
        let mut b = Board::new(&cfg(8, 8, 7), 9).unwrap();
        let mut before = b.cells().to_vec();
        assert!(b.reshuffle());
        let mut after = b.cells().to_vec();
        before.sort_unstable();
        after.sort_unstable();
        assert_eq!(before, after);
        assert!(b.find_matches().is_empty());
    }

    proptest! {
        #[test]
        fn find_matches_agrees_with_window_scan(cells in proptest::collection::vec(0u8..4, 36)) {
            let b = Board::from_cells(6, 6, 4, cells, 0).unwrap();
            let mut flat: Vec<Pos> = b.find_matches().into_iter().flatten().collect();
            flat.sort();
            prop_assert_eq!(flat, matched_cells_oracle(&b));
        }

        #[test]
        fn cascades_conserve_cells_and_leave_board_stable(seed in 0u64..5000, pick in 0usize..10_000) {
            let mut b = Board::new(&cfg(8, 8, 7), seed).unwrap();
            let swaps = b.valid_swaps();
            prop_assume!(!swaps.is_empty());
            let (x, y) = swaps[pick % swaps.len()];
            b.swap(x, y);
            let before = b.clone();
            let first = before.find_matches();
            let touched: std::collections::BTreeSet<usize> =
                first.iter().flatten().map(|p| p.col).collect();
            let levels = b.resolve_cascades();
            prop_assert!(!levels.is_empty());
            prop_assert!(b.find_matches().is_empty());
            prop_assert!(b.cells().iter().all(|&k| k < 7));
            // the first removal pass only disturbs the columns it removed from
            if levels.len() == 1 {
                for c in (0..8).filter(|c| !touched.contains(c)) {
                    for r in 0..8 {
                        prop_assert_eq!(b.get(Pos::new(r, c)), before.get(Pos::new(r, c)));
                    }
                }
            }
        }
    }

    #[test]
    fn gravity_refills_exactly_the_removed_cells() {
        #[rustfmt::skip]
        let mut b = Board::from_cells(4, 4, 9, vec![
            1, 2, 3, 4,
            5, 6, 7, 8,
            0, 0, 0, 1,
            2, 3, 4, 5,
        ], 11).unwrap();
        let before = b.cells().to_vec();
        b.cells[8] = EMPTY;
        b.cells[9] = EMPTY;
        b.cells[10] = EMPTY;
        b.collapse_and_refill();
        // column 3 untouched
        for r in 0..4 {
            assert_eq!(b.get(Pos::new(r, 3)), before[r * 4 + 3]);
        }
        // rows 0,1 of columns 0..3 shifted down by one
        for c in 0..3 {
            assert_eq!(b.get(Pos::new(1, c)), before[c]);
            assert_eq!(b.get(Pos::new(2, c)), before[4 + c]);
            assert_eq!(b.get(Pos::new(3, c)), before[12 + c]);
        }
        assert_eq!(b.cells().iter().filter(|&&k| k == EMPTY).count(), 0);
    }
}
