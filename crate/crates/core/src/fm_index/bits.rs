/// Plain bitvector with a per-word rank directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct RankBits {
    words: Vec<u64>,
    cum: Vec<u32>,
    len: usize,
}

impl RankBits {
    pub fn from_fn(len: usize, mut f: impl FnMut(usize) -> bool) -> Self {
        let mut words = vec![0u64; len.div_ceil(64)];
        for i in 0..len {
            if f(i) {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        Self::from_words(words, len)
    }

    pub fn from_words(words: Vec<u64>, len: usize) -> Self {
        let mut cum = Vec::with_capacity(words.len() + 1);
        let mut acc = 0u32;
        for w in &words {
            cum.push(acc);
            acc += w.count_ones();
        }
        cum.push(acc);
        RankBits { words, cum, len }
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    /// Number of set bits in `[0, i)`.
    #[inline]
    pub fn rank1(&self, i: usize) -> usize {
        let w = i / 64;
        let r = i % 64;
        let partial = if r == 0 {
            0
        } else {
            (self.words[w] & ((1u64 << r) - 1)).count_ones()
        };
        (self.cum[w] + partial) as usize
    }

    pub fn count_ones(&self) -> usize {
        *self.cum.last().unwrap_or(&0) as usize
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }
}
