//! Sliding correlations between the residual and every atom, with a
//! tournament tree over fixed-size offset blocks for fast argmax.
//!
//! After a residual update only offsets whose support intersects the changed
//! region are recomputed, and only the blocks containing them are rescanned.

use crate::dictionary::Dictionary;

use super::QuotaState;

const BLOCK: usize = 64;

/// Plain sequential dot product. The summation order is part of the contract:
/// cached and from-scratch correlations must agree bit for bit.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// From-scratch table: `c[i][τ] = Σ_t r(τ+t) φ_i(t)` for every offset that
/// keeps atom `i` inside the residual.
pub fn correlate_all(residual: &[f64], dict: &Dictionary) -> Vec<Vec<f64>> {
    dict.atoms()
        .iter()
        .map(|atom| {
            let w = atom.waveform();
            if w.len() > residual.len() {
                return Vec::new();
            }
            residual.windows(w.len()).map(|seg| dot(seg, w)).collect()
        })
        .collect()
}

/// A table entry: atom, offset and the signed correlation there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub atom: usize,
    pub offset: usize,
    pub value: f64,
}

impl Candidate {
    /// Larger |value| wins; ties go to the lower atom, then the lower offset.
    #[inline]
    pub fn beats(&self, other: &Candidate) -> bool {
        let (a, b) = (self.value.abs(), other.value.abs());
        a > b || (a == b && (self.atom, self.offset) < (other.atom, other.offset))
    }
}

#[inline]
fn pick(a: Option<Candidate>, b: Option<Candidate>) -> Option<Candidate> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if y.beats(&x) { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    }
}

#[derive(Debug, Clone)]
pub struct CorrelationTable {
    rows: Vec<Vec<f64>>,
    active: Vec<bool>,
    blocks_per_atom: usize,
    leaves: usize,
    tree: Vec<Option<Candidate>>,
}

impl CorrelationTable {
    /// Caller guarantees `residual.len() >= dict.max_atom_len()`.
    pub fn build(residual: &[f64], dict: &Dictionary) -> Self {
        let rows = correlate_all(residual, dict);
        let longest_row = rows.iter().map(Vec::len).max().unwrap_or(0);
        let blocks_per_atom = longest_row.div_ceil(BLOCK).max(1);
        let leaves = (rows.len() * blocks_per_atom).next_power_of_two();
        let mut table = CorrelationTable {
            active: vec![true; rows.len()],
            rows,
            blocks_per_atom,
            leaves,
            tree: vec![None; 2 * leaves],
        };
        for atom in 0..table.rows.len() {
            for block in 0..blocks_per_atom {
                let leaf = table.leaf_index(atom, block);
                table.tree[leaf] = table.scan_block(atom, block);
            }
        }
        for node in (1..leaves).rev() {
            table.tree[node] = pick(table.tree[2 * node], table.tree[2 * node + 1]);
        }
        table
    }

    pub fn num_atoms(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, atom: usize) -> &[f64] {
        &self.rows[atom]
    }

    pub fn value(&self, atom: usize, offset: usize) -> f64 {
        self.rows[atom][offset]
    }

    pub fn is_active(&self, atom: usize) -> bool {
        self.active[atom]
    }

    /// Best entry over active atoms.
    pub fn best(&self) -> Option<Candidate> {
        self.tree[1]
    }

    /// Removes an atom from search and from further maintenance.
    pub fn deactivate(&mut self, atom: usize) {
        if !self.active[atom] {
            return;
        }
        self.active[atom] = false;
        for block in 0..self.blocks_per_atom {
            let leaf = self.leaf_index(atom, block);
            self.tree[leaf] = None;
            self.propagate(leaf);
        }
    }

    /// Recomputes every active entry whose support intersects residual
    /// samples `lo..hi`.
    pub fn refresh(&mut self, residual: &[f64], dict: &Dictionary, lo: usize, hi: usize) {
        if lo >= hi {
            return;
        }
        for atom in 0..self.rows.len() {
            if !self.active[atom] {
                continue;
            }
            let w = dict.atom(atom).waveform();
            let row = &mut self.rows[atom];
            let first = lo.saturating_sub(w.len() - 1);
            let last = hi.min(row.len());
            if first >= last {
                continue;
            }
            for (tau, c) in row.iter_mut().enumerate().take(last).skip(first) {
                *c = dot(&residual[tau..tau + w.len()], w);
            }
            for block in first / BLOCK..=(last - 1) / BLOCK {
                let leaf = self.leaf_index(atom, block);
                self.tree[leaf] = self.scan_block(atom, block);
                self.propagate(leaf);
            }
        }
    }

    #[inline]
    fn leaf_index(&self, atom: usize, block: usize) -> usize {
        self.leaves + atom * self.blocks_per_atom + block
    }

    fn scan_block(&self, atom: usize, block: usize) -> Option<Candidate> {
        let row = &self.rows[atom];
        let start = block * BLOCK;
        let end = (start + BLOCK).min(row.len());
        let mut best: Option<Candidate> = None;
        let mut best_abs = -1.0;
        for (offset, &value) in row.iter().enumerate().take(end).skip(start) {
            let a = value.abs();
            if a > best_abs {
                best_abs = a;
                best = Some(Candidate { atom, offset, value });
            }
        }
        best
    }

    fn propagate(&mut self, leaf: usize) {
        let mut node = leaf / 2;
        while node >= 1 {
            let merged = pick(self.tree[2 * node], self.tree[2 * node + 1]);
            if self.tree[node] == merged {
                break;
            }
            self.tree[node] = merged;
            node /= 2;
        }
    }
}

/// Admissible argmax of `|c[i][τ]|`. With a quota, atoms that reached it
/// are dropped from the table first.
pub fn select(table: &mut CorrelationTable, quota: Option<&QuotaState>) -> Option<Candidate> {
    if let Some(q) = quota {
        for atom in 0..table.num_atoms() {
            if table.is_active(atom) && !q.admits(atom) {
                table.deactivate(atom);
            }
        }
    }
    table.best()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{Atom, Dictionary};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_dict(rng: &mut ChaCha8Rng, m: usize, len: usize) -> Dictionary {
        let atoms = (0..m)
            .map(|_| Atom::normalized((0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap())
            .collect();
        Dictionary::new(atoms).unwrap()
    }

    #[test]
    fn zero_residual_gives_zero_table() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = small_dict(&mut rng, 3, 5);
        let t = CorrelationTable::build(&[0.0; 40], &d);
        for i in 0..3 {
            assert!(t.row(i).iter().all(|&c| c == 0.0));
            assert_eq!(t.row(i).len(), 36);
        }
    }

    #[test]
    fn planted_atom_is_global_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = small_dict(&mut rng, 4, 6);
        let mut r = vec![0.0; 30];
        r[7..13].copy_from_slice(d.atom(0).waveform());
        let t = CorrelationTable::build(&r, &d);
        assert!((t.value(0, 7) - 1.0).abs() < 1e-12);
        let best = t.best().unwrap();
        assert_eq!((best.atom, best.offset), (0, 7));
    }

    #[test]
    fn matches_nested_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = small_dict(&mut rng, 2, 4);
        let r: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t = CorrelationTable::build(&r, &d);
        for i in 0..2 {
            let w = d.atom(i).waveform();
            for tau in 0..=60 {
                let mut s = 0.0;
                for k in 0..4 {
                    s += r[tau + k] * w[k];
                }
                assert_eq!(t.value(i, tau), s);
            }
        }
    }

    #[test]
    fn refresh_equals_rebuild() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = small_dict(&mut rng, 3, 7);
        let mut r: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut t = CorrelationTable::build(&r, &d);
        for _ in 0..20 {
            let lo = rng.random_range(0..290);
            let hi = lo + rng.random_range(1..10);
            for v in &mut r[lo..hi] {
                *v = rng.random_range(-1.0..1.0);
            }
            t.refresh(&r, &d, lo, hi);
            let fresh = CorrelationTable::build(&r, &d);
            for i in 0..3 {
                assert_eq!(t.row(i), fresh.row(i));
            }
            assert_eq!(t.best(), fresh.best());
        }
    }

    #[test]
    fn quota_excludes_full_atom() {
        // atom 1 holds the global max but is at quota; atom 2 is next best
        let atoms = vec![
            Atom::normalized(vec![1.0, 0.0]).unwrap(),
            Atom::normalized(vec![0.0, 1.0]).unwrap(),
            Atom::normalized(vec![1.0, 1.0]).unwrap(),
        ];
        let d = Dictionary::new(atoms).unwrap();
        let r = vec![0.0, 0.0, 5.0, 4.0, 0.0];
        let mut t = CorrelationTable::build(&r, &d);
        assert_eq!(t.best().map(|c| (c.atom, c.offset)), Some((2, 2)));
        let mut q = QuotaState::new(3, 1);
        q.record(2);
        let c = select(&mut t, Some(&q)).unwrap();
        assert_eq!((c.atom, c.offset), (0, 2));
        q.record(0);
        q.record(1);
        assert!(select(&mut t, Some(&q)).is_none());
    }

    #[test]
    fn ties_prefer_lowest_atom_then_offset() {
        let atoms = vec![
            Atom::normalized(vec![1.0]).unwrap(),
            Atom::normalized(vec![-1.0]).unwrap(),
        ];
        let d = Dictionary::new(atoms).unwrap();
        let r = vec![0.5, -2.0, 2.0, 1.0];
        let t = CorrelationTable::build(&r, &d);
        let c = t.best().unwrap();
        assert_eq!((c.atom, c.offset), (0, 1));
        assert_eq!(c.value, -2.0);
    }
}
