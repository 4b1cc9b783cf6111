//! Bit-parallel longest common subsequence over interned token ids.

/// Match masks for one pattern sequence, reusable against many texts.
///
/// `slot` maps a token id to its row in `masks` (or `u32::MAX`), so it is
/// sized to the whole vocabulary; build one per pattern and reuse it.
pub struct Pattern {
    len: usize,
    words: usize,
    slot: Vec<u32>,
    masks: Vec<u64>,
    seen: Vec<u32>,
}

impl Pattern {
    pub fn new(vocab: usize) -> Self {
        Self {
            len: 0,
            words: 0,
            slot: vec![u32::MAX; vocab],
            masks: Vec::new(),
            seen: Vec::new(),
        }
    }

    /// Loads `tokens` as the pattern, replacing the previous one.
    pub fn load(&mut self, tokens: &[u32]) {
        for &t in &self.seen {
            self.slot[t as usize] = u32::MAX;
        }
        self.seen.clear();
        self.masks.clear();
        self.len = tokens.len();
        self.words = tokens.len().div_ceil(64);
        for (i, &t) in tokens.iter().enumerate() {
            let mut row = self.slot[t as usize];
            if row == u32::MAX {
                row = self.seen.len() as u32;
                self.slot[t as usize] = row;
                self.seen.push(t);
                self.masks.resize(self.masks.len() + self.words, 0);
            }
            self.masks[row as usize * self.words + i / 64] |= 1 << (i % 64);
        }
    }

    /// LCS length between the loaded pattern and `text`.
    pub fn lcs(&self, text: &[u32], v: &mut Vec<u64>) -> usize {
        if self.len == 0 {
            return 0;
        }
        v.clear();
        v.resize(self.words, !0);
        for &t in text {
            let Some(&row) = self.slot.get(t as usize) else {
                continue;
            };
            if row == u32::MAX {
                // an all-zero mask leaves the state unchanged
                continue;
            }
            let m = &self.masks[row as usize * self.words..(row as usize + 1) * self.words];
            let mut carry = false;
            for (vw, &mw) in v.iter_mut().zip(m) {
                let u = *vw & mw;
                let (s1, c1) = vw.overflowing_add(u);
                let (s2, c2) = s1.overflowing_add(carry as u64);
                carry = c1 || c2;
                *vw = s2 | (*vw & !mw);
            }
        }
        let tail = self.len % 64;
        let mut zeros = 0;
        for (i, w) in v.iter().enumerate() {
            let w = if i + 1 == self.words && tail != 0 { *w | (!0u64 << tail) } else { *w };
            zeros += w.count_zeros() as usize;
        }
        zeros
    }
}

/// One-shot LCS length.
pub fn lcs_len(a: &[u32], b: &[u32]) -> usize {
    let (pat, text) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let vocab = a.iter().chain(b).map(|&t| t as usize + 1).max().unwrap_or(0);
    let mut p = Pattern::new(vocab);
    p.load(pat);
    p.lcs(text, &mut Vec::new())
}
