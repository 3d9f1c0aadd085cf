//! Sequence metrics: feature-wise corpus BLEU and the end-of-sequence
//! (length distribution) Pearson correlation.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::hash::Hash;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::CodeRecord;

/// Histogram bins for sequence lengths: bin `k` holds length `k + 1`, the
/// last bin also collects anything longer.
pub const EOS_BINS: usize = 100;

/// Corpus-level clipped n-gram precision of one order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NgramPrecision {
    pub n: usize,
    pub clipped: u64,
    pub total: u64,
    pub precision: f64,
    /// No candidate had an n-gram of this order; `precision` is reported 0.
    pub undefined: bool,
}

fn ngram_counts<T: Hash + Eq + Clone>(seq: &[T], n: usize) -> HashMap<&[T], u64> {
    let mut m = HashMap::new();
    if n > 0 && seq.len() >= n {
        for w in seq.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

fn check_corpus<T>(references: &[Vec<T>], candidates: &[Vec<T>]) -> Result<()> {
    if references.len() != candidates.len() {
        return Err(Error::shape("reference vs candidate count", references.len(), candidates.len()));
    }
    if references.is_empty() {
        return Err(Error::Empty("BLEU over an empty corpus".into()));
    }
    Ok(())
}

/// Clipped n-gram precision: each candidate's n-gram counts are clipped to
/// its reference's counts, summed over the corpus and divided by the total
/// candidate n-gram count.
pub fn bleu<T: Hash + Eq + Clone + Sync>(
    references: &[Vec<T>],
    candidates: &[Vec<T>],
    n: usize,
) -> Result<NgramPrecision> {
    check_corpus(references, candidates)?;
    if n == 0 {
        return Err(Error::InvalidArgument("n-gram order must be at least 1".into()));
    }
    let per_pair: Vec<(u64, u64)> = references
        .par_iter()
        .zip(candidates.par_iter())
        .map(|(r, c)| {
            let rc = ngram_counts(r, n);
            let cc = ngram_counts(c, n);
            let clipped = cc.iter().map(|(g, &k)| k.min(rc.get(g).copied().unwrap_or(0))).sum();
            (clipped, c.len().saturating_sub(n - 1) as u64)
        })
        .collect();
    let (clipped, total) = per_pair.iter().fold((0, 0), |(a, b), (c, d)| (a + c, b + d));
    Ok(NgramPrecision {
        n,
        clipped,
        total,
        precision: if total == 0 { 0.0 } else { clipped as f64 / total as f64 },
        undefined: total == 0,
    })
}

/// How the per-order precisions are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BleuCombine {
    /// `(∏ p_n)^(1/N)`, the usual BLEU.
    #[default]
    GeometricMean,
    /// `∏ p_n` without the root.
    Product,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    /// In [0, 1].
    pub score: f64,
    pub brevity_penalty: f64,
    pub precisions: Vec<NgramPrecision>,
    pub reference_length: u64,
    pub generated_length: u64,
}

impl BleuScore {
    pub fn percent(&self) -> f64 {
        100.0 * self.score
    }
}

/// `BP · combine(p_1..p_N)` with `BP = min(1, exp(1 − L_R / L_G))`.
pub fn bleu_score<T: Hash + Eq + Clone + Sync>(
    references: &[Vec<T>],
    candidates: &[Vec<T>],
    max_n: usize,
    combine: BleuCombine,
) -> Result<BleuScore> {
    check_corpus(references, candidates)?;
    if max_n == 0 {
        return Err(Error::InvalidArgument("BLEU order must be at least 1".into()));
    }
    let precisions = (1..=max_n)
        .map(|n| bleu(references, candidates, n))
        .collect::<Result<Vec<_>>>()?;
    let l_r: u64 = references.iter().map(|r| r.len() as u64).sum();
    let l_g: u64 = candidates.iter().map(|c| c.len() as u64).sum();
    let bp = if l_g == 0 {
        0.0
    } else {
        (1.0 - l_r as f64 / l_g as f64).exp().min(1.0)
    };
    let product: f64 = precisions.iter().map(|p| p.precision).product();
    let combined = match combine {
        BleuCombine::GeometricMean => product.powf(1.0 / max_n as f64),
        BleuCombine::Product => product,
    };
    Ok(BleuScore {
        score: bp * combined,
        brevity_penalty: bp,
        precisions,
        reference_length: l_r,
        generated_length: l_g,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EosReport {
    pub generated_hist: Vec<u64>,
    pub reference_hist: Vec<u64>,
    pub pearson: f64,
}

/// Length histogram over [`EOS_BINS`] unit bins.
pub fn length_histogram(lengths: &[usize]) -> Result<Vec<u64>> {
    let mut h = vec![0u64; EOS_BINS];
    for &l in lengths {
        if l == 0 {
            return Err(Error::InvalidArgument("sequence length 0 in EoS histogram".into()));
        }
        h[(l - 1).min(EOS_BINS - 1)] += 1;
    }
    Ok(h)
}

/// Pearson correlation of two equally long vectors; errors when either has
/// zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("pearson inputs", a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::Empty("pearson of empty vectors".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Degenerate("zero-variance histogram, correlation undefined".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation between the normalized length histograms.
pub fn eos_pearson(gen_lengths: &[usize], ref_lengths: &[usize]) -> Result<EosReport> {
    if gen_lengths.is_empty() || ref_lengths.is_empty() {
        return Err(Error::Empty("EoS analysis needs both length lists".into()));
    }
    let g = length_histogram(gen_lengths)?;
    let r = length_histogram(ref_lengths)?;
    let freq = |h: &[u64], n: usize| h.iter().map(|&c| c as f64 / n as f64).collect::<Vec<_>>();
    let pearson = pearson(&freq(&g, gen_lengths.len()), &freq(&r, ref_lengths.len()))?;
    Ok(EosReport {
        generated_hist: g,
        reference_hist: r,
        pearson,
    })
}

/// One decimal, as percentages are reported.
fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BleuTriple {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

impl BleuTriple {
    pub fn cells(&self) -> [f64; 3] {
        [self.b1, self.b2, self.b3]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureBleu {
    pub dir: BleuTriple,
    pub speed: BleuTriple,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LetterReport {
    pub bleu: FeatureBleu,
    pub n_pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Percentages with one decimal.
    pub bleu: FeatureBleu,
    pub eos_pearson: f64,
    pub n_pairs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_letter: Option<BTreeMap<char, LetterReport>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub combine: BleuCombine,
    pub per_letter: bool,
}

/// Pairs every generated record with the reference of the same
/// (writer, letter). Orphans on either side, duplicate references and an
/// empty generated set are errors.
pub fn pair_records<'a>(
    generated: &'a [CodeRecord],
    references: &'a [CodeRecord],
) -> Result<Vec<(&'a CodeRecord, &'a CodeRecord)>> {
    if generated.is_empty() {
        return Err(Error::Empty("generated corpus".into()));
    }
    let key = |r: &CodeRecord| format!("{}/{}", r.writer_id, r.letter.as_char());
    let mut refs: BTreeMap<String, &CodeRecord> = BTreeMap::new();
    for r in references {
        if refs.insert(key(r), r).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate reference {}", key(r))));
        }
    }
    let mut used = std::collections::BTreeSet::new();
    let mut orphans = Vec::new();
    let mut pairs = Vec::with_capacity(generated.len());
    for g in generated {
        let k = key(g);
        match refs.get(&k) {
            Some(r) => {
                used.insert(k);
                pairs.push((*r, g));
            }
            None => orphans.push(format!("generated {k}")),
        }
    }
    orphans.extend(refs.keys().filter(|k| !used.contains(*k)).map(|k| format!("reference {k}")));
    if !orphans.is_empty() {
        return Err(Error::Unpaired(orphans));
    }
    Ok(pairs)
}

fn feature_bleu(pairs: &[(&CodeRecord, &CodeRecord)], combine: BleuCombine) -> Result<FeatureBleu> {
    let triple = |f: fn(&CodeRecord) -> &Vec<u8>| -> Result<BleuTriple> {
        let r: Vec<Vec<u8>> = pairs.iter().map(|(r, _)| f(r).clone()).collect();
        let c: Vec<Vec<u8>> = pairs.iter().map(|(_, g)| f(g).clone()).collect();
        let s = |n| bleu_score(&r, &c, n, combine).map(|s| round1(s.percent()));
        Ok(BleuTriple {
            b1: s(1)?,
            b2: s(2)?,
            b3: s(3)?,
        })
    };
    Ok(FeatureBleu {
        dir: triple(|r| &r.dir)?,
        speed: triple(|r| &r.speed)?,
    })
}

/// Full report over (reference, generated) pairs.
pub fn evaluate(pairs: &[(&CodeRecord, &CodeRecord)], opts: EvalOptions) -> Result<EvalReport> {
    let bleu = feature_bleu(pairs, opts.combine)?;
    let gen_len: Vec<usize> = pairs.iter().map(|(_, g)| g.len()).collect();
    let ref_len: Vec<usize> = pairs.iter().map(|(r, _)| r.len()).collect();
    let eos = eos_pearson(&gen_len, &ref_len)?;
    let per_letter = if opts.per_letter {
        let mut groups: BTreeMap<char, Vec<(&CodeRecord, &CodeRecord)>> = BTreeMap::new();
        for &(r, g) in pairs {
            groups.entry(r.letter.as_char()).or_default().push((r, g));
        }
        let mut out = BTreeMap::new();
        for (l, ps) in groups {
            out.insert(
                l,
                LetterReport {
                    bleu: feature_bleu(&ps, opts.combine)?,
                    n_pairs: ps.len(),
                },
            );
        }
        Some(out)
    } else {
        None
    };
    Ok(EvalReport {
        bleu,
        eos_pearson: eos.pearson,
        n_pairs: pairs.len(),
        per_letter,
    })
}

/// Plain-text table: one row per feature, B-1/B-2/B-3 columns.
pub fn render_table(report: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<10} {:>6} {:>6} {:>6}", "feature", "B-1", "B-2", "B-3");
    for (name, t) in [("direction", report.bleu.dir), ("speed", report.bleu.speed)] {
        let _ = writeln!(s, "{:<10} {:>6.1} {:>6.1} {:>6.1}", name, t.b1, t.b2, t.b3);
    }
    let _ = writeln!(s, "EoS pearson {:.4}  pairs {}", report.eos_pearson, report.n_pairs);
    if let Some(pl) = &report.per_letter {
        for (l, r) in pl {
            let _ = writeln!(
                s,
                "  {l}: dir {:.1}/{:.1}/{:.1}  speed {:.1}/{:.1}/{:.1}  n={}",
                r.bleu.dir.b1, r.bleu.dir.b2, r.bleu.dir.b3, r.bleu.speed.b1, r.bleu.speed.b2, r.bleu.speed.b3, r.n_pairs
            );
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace_io::Letter;

    #[test]
    fn hand_case() {
        let r = vec![vec![0u8, 1, 2, 3]];
        let c = vec![vec![0u8, 1, 7, 3]];
        let p1 = bleu(&r, &c, 1).unwrap();
        assert_eq!((p1.clipped, p1.total), (3, 4));
        let p2 = bleu(&r, &c, 2).unwrap();
        assert_eq!((p2.clipped, p2.total), (1, 3));
        let p5 = bleu(&r, &c, 5).unwrap();
        assert!(p5.undefined && p5.precision == 0.0);
    }

    #[test]
    fn clipping() {
        let r = vec![vec![1u8, 2]];
        let c = vec![vec![1u8, 1, 1]];
        assert_eq!(bleu(&r, &c, 1).unwrap().clipped, 1);
    }

    #[test]
    fn brevity_penalty_at_half_length() {
        let r = vec![vec![1u8, 2, 3, 4], vec![5, 6, 7, 8]];
        let c = vec![vec![1u8, 2, 3, 4], vec![]];
        let s = bleu_score(&r, &c, 1, BleuCombine::GeometricMean).unwrap();
        assert!((s.brevity_penalty - (-1f64).exp()).abs() < 1e-12);
        assert!((s.percent() - 36.787944).abs() < 1e-5);
    }

    #[test]
    fn identity_and_disjoint() {
        let r = vec![vec![1u8, 2, 3, 4, 5], vec![3, 3, 2]];
        let s = bleu_score(&r, &r, 3, BleuCombine::GeometricMean).unwrap();
        assert_eq!(s.percent(), 100.0);
        let c = vec![vec![9u8, 9, 9, 9, 9], vec![8, 8, 8]];
        assert_eq!(bleu_score(&r, &c, 3, BleuCombine::Product).unwrap().score, 0.0);
        assert!(bleu::<u8>(&[], &[], 1).is_err());
        assert!(bleu(&r, &r[..1], 1).is_err());
    }

    #[test]
    fn pearson_cases() {
        let r = eos_pearson(&[3, 3, 5, 9], &[9, 5, 3, 3]).unwrap();
        assert!((r.pearson - 1.0).abs() < 1e-12);
        assert_eq!(r.generated_hist.iter().sum::<u64>(), 4);
        // closed form on three points
        let (a, b) = ([1.0, 2.0, 4.0], [2.0, 1.0, 5.0]);
        let cov = (-4.0 / 3.0) * (-2.0 / 3.0) + (-1.0 / 3.0) * (-5.0 / 3.0) + (5.0 / 3.0) * (7.0 / 3.0);
        let va: f64 = (16.0 + 1.0 + 25.0) / 9.0;
        let vb = (4.0 + 25.0 + 49.0) / 9.0;
        assert!((pearson(&a, &b).unwrap() - cov / (va * vb).sqrt()).abs() < 1e-12);
        assert!(pearson(&[1.0, 1.0], &[0.0, 1.0]).is_err());
        assert!(eos_pearson(&[1], &[]).is_err());
        assert_eq!(length_histogram(&[250]).unwrap()[EOS_BINS - 1], 1);
    }

    fn rec(w: &str, l: char, d: &[u8]) -> CodeRecord {
        CodeRecord {
            writer_id: w.into(),
            letter: Letter::from_char(l).unwrap(),
            dir: d.to_vec(),
            speed: d.to_vec(),
        }
    }

    #[test]
    fn pairing_and_report() {
        let refs = vec![rec("a", 'X', &[1, 2, 3]), rec("b", 'X', &[1, 2, 3, 4]), rec("a", 'O', &[5, 5])];
        let pairs = pair_records(&refs, &refs).unwrap();
        let rep = evaluate(&pairs, EvalOptions { per_letter: true, ..Default::default() }).unwrap();
        assert_eq!(rep.bleu.dir.cells(), [100.0; 3]);
        assert_eq!(rep.eos_pearson, 1.0);
        assert_eq!(rep.per_letter.as_ref().unwrap().len(), 2);
        let json = serde_json::to_string(&rep).unwrap();
        assert_eq!(serde_json::from_str::<EvalReport>(&json).unwrap(), rep);
        assert!(render_table(&rep).contains("B-3"));

        let gen = vec![rec("a", 'X', &[1]), rec("z", 'X', &[1])];
        match pair_records(&gen, &refs) {
            Err(Error::Unpaired(o)) => {
                assert!(o.contains(&"generated z/X".to_string()));
                assert!(o.contains(&"reference b/X".to_string()));
            }
            other => panic!("{other:?}"),
        }
        assert!(pair_records(&[], &refs).is_err());
    }
}
