//! Wavelet matrix over small integer codes: rank, access and distinct-symbol
//! enumeration of a range in `O(log sigma)` per reported symbol.

use super::bits::RankBits;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct WaveletMatrix {
    levels: Vec<RankBits>,
    zeros: Vec<usize>,
    /// Start of each code's run in the final level order, so a rank needs
    /// one descent instead of two.
    bucket_start: Vec<usize>,
    len: usize,
}

impl WaveletMatrix {
    pub fn bits_for(sigma: usize) -> usize {
        (usize::BITS - sigma.saturating_sub(1).leading_zeros()).max(1) as usize
    }

    pub fn build(codes: &[u32], sigma: usize) -> Self {
        let depth = Self::bits_for(sigma);
        let len = codes.len();
        let mut cur = codes.to_vec();
        let mut next = Vec::with_capacity(len);
        let mut levels = Vec::with_capacity(depth);
        let mut zeros = Vec::with_capacity(depth);
        for l in 0..depth {
            let shift = depth - 1 - l;
            let bits = RankBits::from_fn(len, |i| (cur[i] >> shift) & 1 == 1);
            next.clear();
            next.extend(cur.iter().filter(|&&c| (c >> shift) & 1 == 0));
            zeros.push(next.len());
            next.extend(cur.iter().filter(|&&c| (c >> shift) & 1 == 1));
            std::mem::swap(&mut cur, &mut next);
            levels.push(bits);
        }
        Self::with_buckets(levels, zeros, len)
    }

    pub fn from_parts(levels: Vec<RankBits>, len: usize) -> Self {
        let zeros = levels.iter().map(|b| len - b.count_ones()).collect();
        Self::with_buckets(levels, zeros, len)
    }

    fn with_buckets(levels: Vec<RankBits>, zeros: Vec<usize>, len: usize) -> Self {
        let mut wm = WaveletMatrix {
            levels,
            zeros,
            bucket_start: Vec::new(),
            len,
        };
        let depth = wm.levels.len();
        wm.bucket_start = (0..1u32 << depth)
            .map(|code| {
                (0..depth).fold(0, |start, l| {
                    wm.step(l, (code >> (depth - 1 - l)) & 1 == 1, start)
                })
            })
            .collect();
        wm
    }

    pub fn levels(&self) -> &[RankBits] {
        &self.levels
    }

    #[inline]
    fn step(&self, l: usize, bit: bool, i: usize) -> usize {
        let b = &self.levels[l];
        if bit {
            self.zeros[l] + b.rank1(i)
        } else {
            i - b.rank1(i)
        }
    }

    /// Occurrences of `code` in `[0, i)`.
    pub fn rank(&self, code: u32, i: usize) -> usize {
        debug_assert!(i <= self.len);
        let depth = self.levels.len();
        let mut end = i;
        for l in 0..depth {
            let bit = (code >> (depth - 1 - l)) & 1 == 1;
            end = self.step(l, bit, end);
        }
        end - self.bucket_start[code as usize]
    }

    /// Occurrences of `code` in `[0, lo)` and `[0, hi)` in a single descent.
    pub fn rank_pair(&self, code: u32, lo: usize, hi: usize) -> (usize, usize) {
        let depth = self.levels.len();
        let (mut a, mut b) = (lo, hi);
        for l in 0..depth {
            let bit = (code >> (depth - 1 - l)) & 1 == 1;
            a = self.step(l, bit, a);
            b = self.step(l, bit, b);
        }
        let start = self.bucket_start[code as usize];
        (a - start, b - start)
    }

    /// Distinct codes in `[lo, hi)` with their counts, ascending by code.
    pub fn distinct(&self, lo: usize, hi: usize, out: &mut Vec<(u32, usize)>) {
        if lo < hi {
            self.distinct_rec(0, 0, lo, hi, out);
        }
    }

    fn distinct_rec(&self, l: usize, prefix: u32, lo: usize, hi: usize, out: &mut Vec<(u32, usize)>) {
        if l == self.levels.len() {
            out.push((prefix, hi - lo));
            return;
        }
        let b = &self.levels[l];
        let (r1lo, r1hi) = (b.rank1(lo), b.rank1(hi));
        let (z_lo, z_hi) = (lo - r1lo, hi - r1hi);
        if z_lo < z_hi {
            self.distinct_rec(l + 1, prefix << 1, z_lo, z_hi, out);
        }
        if r1lo < r1hi {
            let z = self.zeros[l];
            self.distinct_rec(l + 1, (prefix << 1) | 1, z + r1lo, z + r1hi, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rank_and_distinct_match_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for sigma in [1usize, 2, 3, 17, 300] {
            let codes: Vec<u32> = (0..500).map(|_| rng.random_range(0..sigma as u32)).collect();
            let wm = WaveletMatrix::build(&codes, sigma);
            for _ in 0..200 {
                let c = rng.random_range(0..sigma as u32);
                let i = rng.random_range(0..=codes.len());
                let naive = codes[..i].iter().filter(|&&x| x == c).count();
                assert_eq!(wm.rank(c, i), naive);
                let lo = rng.random_range(0..=codes.len());
                let hi = rng.random_range(lo..=codes.len());
                let mut got = Vec::new();
                wm.distinct(lo, hi, &mut got);
                let mut counts = std::collections::BTreeMap::new();
                for &x in &codes[lo..hi] {
                    *counts.entry(x).or_insert(0usize) += 1;
                }
                assert_eq!(got, counts.into_iter().collect::<Vec<_>>());
                let (a, b) = wm.rank_pair(c, lo, hi);
                assert_eq!((a, b), (wm.rank(c, lo), wm.rank(c, hi)));
            }
        }
    }
}
