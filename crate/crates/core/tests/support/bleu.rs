use std::collections::BTreeSet;

/// Independent n-gram counter: every window compared by slice equality.
pub fn brute_precision(refs: &[Vec<u8>], cands: &[Vec<u8>], n: usize) -> (u64, u64) {
    let count = |seq: &[u8], g: &[u8]| seq.windows(n).filter(|w| *w == g).count() as u64;
    let (mut clipped, mut total) = (0, 0);
    for (r, c) in refs.iter().zip(cands) {
        if c.len() < n {
            continue;
        }
        let grams: BTreeSet<&[u8]> = c.windows(n).collect();
        for g in grams {
            clipped += count(c, g).min(count(r, g));
        }
        total += (c.len() + 1 - n) as u64;
    }
    (clipped, total)
}

/// Every sequence over `symbols` symbols of length 0 to `max_len`.
pub fn all_sequences(symbols: u8, max_len: u32) -> Vec<Vec<u8>> {
    let k = symbols as usize;
    let mut all: Vec<Vec<u8>> = vec![vec![]];
    for len in 1..=max_len {
        for code in 0..k.pow(len) {
            all.push((0..len).map(|i| ((code / k.pow(i)) % k) as u8).collect());
        }
    }
    all
}
