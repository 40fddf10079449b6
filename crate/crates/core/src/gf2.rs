//! Bit-packed linear algebra over GF(2).

/// Incrementally built row-echelon basis. Each stored row's pivot is its
/// lowest set column, and no two rows share a pivot.
#[derive(Clone, Debug)]
pub struct EchelonBasis {
    width: usize,
    words: usize,
    rows: Vec<Vec<u64>>,
    pivot_row: Vec<Option<usize>>,
}

impl EchelonBasis {
    pub fn new(width: usize) -> Self {
        Self {
            width,
            words: width.div_ceil(64),
            rows: Vec::new(),
            pivot_row: vec![None; width],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn is_full(&self) -> bool {
        self.rows.len() == self.width
    }

    /// Reduces `row` against the basis and keeps it if it is independent.
    /// Returns whether the rank grew.
    pub fn insert(&mut self, mut row: Vec<u64>) -> bool {
        assert_eq!(row.len(), self.words, "row width");
        let mut w = 0;
        while w < self.words {
            if row[w] == 0 {
                w += 1;
                continue;
            }
            let col = w * 64 + row[w].trailing_zeros() as usize;
            match self.pivot_row[col] {
                Some(r) => {
                    let basis = &self.rows[r];
                    for k in w..self.words {
                        row[k] ^= basis[k];
                    }
                }
                None => {
                    self.pivot_row[col] = Some(self.rows.len());
                    self.rows.push(row);
                    return true;
                }
            }
        }
        false
    }

    /// A nonzero `v` with `row . v = 0` for every inserted row, if the rank
    /// is deficient. The lowest free column is set in `v`.
    pub fn kernel_vector(&self) -> Option<Vec<u64>> {
        let free = (0..self.width).find(|&c| self.pivot_row[c].is_none())?;
        let reduced = self.reduced_rows();
        let mut v = vec![0u64; self.words];
        v[free / 64] |= 1 << (free % 64);
        for (pivot, row) in &reduced {
            if row[free / 64] >> (free % 64) & 1 == 1 {
                v[pivot / 64] |= 1 << (pivot % 64);
            }
        }
        Some(v)
    }

    /// Fully reduced rows paired with their pivot, back-substituting from the
    /// highest pivot down.
    fn reduced_rows(&self) -> Vec<(usize, Vec<u64>)> {
        let mut out: Vec<(usize, Vec<u64>)> = Vec::with_capacity(self.rows.len());
        let pivots: Vec<(usize, usize)> = (0..self.width)
            .rev()
            .filter_map(|c| self.pivot_row[c].map(|r| (c, r)))
            .collect();
        for (col, r) in pivots {
            let mut row = self.rows[r].clone();
            for (pc, prow) in &out {
                if row[pc / 64] >> (pc % 64) & 1 == 1 {
                    for k in 0..self.words {
                        row[k] ^= prow[k];
                    }
                }
            }
            out.push((col, row));
        }
        out
    }
}

pub fn dot(a: &[u64], b: &[u64]) -> bool {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x & y).count_ones())
        .sum::<u32>()
        & 1
        == 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rank_of_dependent_rows() {
        let mut b = EchelonBasis::new(3);
        assert!(b.insert(vec![0b011]));
        assert!(b.insert(vec![0b110]));
        assert!(!b.insert(vec![0b101]));
        assert_eq!(b.rank(), 2);
        let v = b.kernel_vector().unwrap();
        assert_eq!(v, vec![0b111]);
    }

    #[test]
    fn full_rank_has_no_kernel() {
        let mut b = EchelonBasis::new(2);
        b.insert(vec![0b01]);
        b.insert(vec![0b11]);
        assert!(b.is_full());
        assert!(b.kernel_vector().is_none());
    }

    #[test]
    fn random_kernel_vectors_annihilate_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let width: usize = rng.random_range(1..150);
            let words = width.div_ceil(64);
            let mask_last = if width % 64 == 0 {
                u64::MAX
            } else {
                (1u64 << (width % 64)) - 1
            };
            let mut rows = Vec::new();
            let mut b = EchelonBasis::new(width);
            for _ in 0..rng.random_range(0..width + 5) {
                let mut row: Vec<u64> = (0..words).map(|_| rng.random()).collect();
                row[words - 1] &= mask_last;
                rows.push(row.clone());
                b.insert(row);
            }
            match b.kernel_vector() {
                Some(v) => {
                    assert!(v.iter().any(|&w| w != 0));
                    assert!(rows.iter().all(|r| !dot(r, &v)));
                }
                None => assert!(b.is_full()),
            }
        }
    }
}
