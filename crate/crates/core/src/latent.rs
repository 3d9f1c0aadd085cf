//! Style-space analysis: collect style vectors, project them onto the top
//! two principal components, score how well clusters follow known labels,
//! and export CSV / SVG.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::codec::encode;
use crate::error::{Error, Result};
use crate::model::StyleVector;
use crate::trace_io::{Letter, Trace};

pub const PCA_TOLERANCE: f64 = 1e-10;
pub const PCA_MAX_ITERATIONS: usize = 10_000;
pub const KMEANS_MAX_ITERATIONS: usize = 300;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentRow {
    pub writer_id: String,
    pub letter: Letter,
    pub style: StyleVector,
    pub label: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatentTable {
    pub rows: Vec<LatentRow>,
}

impl LatentTable {
    pub fn new(rows: Vec<LatentRow>) -> Result<Self> {
        if let Some(first) = rows.first() {
            let d = first.style.dim();
            if let Some(r) = rows.iter().find(|r| r.style.dim() != d) {
                return Err(Error::shape("latent row dimension", d, r.style.dim()));
            }
        }
        Ok(LatentTable { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn vectors(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.style.0.clone()).collect()
    }

    /// Labels with missing ones shown as `"-"`.
    pub fn labels(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| r.label.clone().unwrap_or_else(|| "-".into()))
            .collect()
    }
}

/// Style vector of every trace whose letter passes the filter (all letters
/// when `letters` is empty), in input order.
pub fn extract_latents<'a>(
    checkpoint: &Checkpoint,
    traces: impl IntoIterator<Item = &'a Trace>,
    letters: &[Letter],
) -> Result<LatentTable> {
    let model = checkpoint
        .model
        .as_autoencoder()
        .ok_or_else(|| Error::InvalidArgument("the baseline model has no style encoder".into()))?;
    let mut rows = Vec::new();
    for t in traces {
        if !letters.is_empty() && !letters.contains(&t.letter) {
            continue;
        }
        let fs = encode(t, &checkpoint.quantizer)?;
        rows.push(LatentRow {
            writer_id: t.writer_id.clone(),
            letter: t.letter,
            style: model.encode_style(&fs)?,
            label: t.label.clone(),
        });
    }
    if rows.is_empty() {
        return Err(Error::Empty("no traces match the letter filter".into()));
    }
    LatentTable::new(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection2D {
    /// `(u, v)` per input row.
    pub coords: Vec<(f64, f64)>,
    /// Share of total variance along each component.
    pub explained: [f64; 2],
    /// Unit principal directions.
    pub components: [Vec<f64>; 2],
    pub mean: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn matvec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

/// Dominant eigenpair of a symmetric PSD matrix by power iteration, started
/// from its largest column.
fn power_iteration(m: &[Vec<f64>]) -> (f64, Vec<f64>) {
    let d = m.len();
    let start = (0..d)
        .max_by(|&a, &b| {
            let na: f64 = m.iter().map(|r| r[a] * r[a]).sum();
            let nb: f64 = m.iter().map(|r| r[b] * r[b]).sum();
            na.total_cmp(&nb).then(b.cmp(&a))
        })
        .unwrap_or(0);
    let mut v: Vec<f64> = m.iter().map(|r| r[start]).collect();
    if normalize(&mut v) == 0.0 {
        return (0.0, v);
    }
    for _ in 0..PCA_MAX_ITERATIONS {
        let mut w = matvec(m, &v);
        if normalize(&mut w) == 0.0 {
            return (0.0, v);
        }
        let diff: f64 = w.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        v = w;
        if diff < PCA_TOLERANCE {
            break;
        }
    }
    let lambda = dot(&v, &matvec(m, &v));
    (lambda, v)
}

/// Largest-magnitude loading made positive.
fn fix_sign(v: &mut [f64]) {
    let k = (0..v.len())
        .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a)))
        .unwrap_or(0);
    if v[k] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Some unit vector orthogonal to `v` (Gram-Schmidt on the basis vectors).
fn orthogonal_to(v: &[f64]) -> Vec<f64> {
    let d = v.len();
    let mut best = vec![0.0; d];
    let mut best_norm = -1.0;
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        let p = dot(&e, v);
        e.iter_mut().zip(v).for_each(|(x, y)| *x -= p * y);
        let n = dot(&e, &e);
        if n > best_norm + 1e-12 {
            best_norm = n;
            best = e;
        }
    }
    normalize(&mut best);
    best
}

/// PCA of raw points (rows). Needs at least three points and nonzero
/// variance.
pub fn pca_points(points: &[Vec<f64>]) -> Result<Projection2D> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument(format!("PCA needs at least 3 rows, got {}", points.len())));
    }
    let d = points[0].len();
    if d == 0 {
        return Err(Error::Degenerate("zero-dimensional points".into()));
    }
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(Error::shape("PCA point dimension", d, p.len()));
    }
    let n = points.len() as f64;
    let mut mean = vec![0.0; d];
    for p in points {
        mean.iter_mut().zip(p).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let centered: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let mut cov = vec![vec![0.0; d]; d];
    for c in &centered {
        for i in 0..d {
            for j in i..d {
                cov[i][j] += c[i] * c[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= n - 1.0;
            cov[j][i] = cov[i][j];
        }
    }
    let total: f64 = (0..d).map(|i| cov[i][i]).sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("latent vectors have zero variance".into()));
    }

    let (l1, mut v1) = power_iteration(&cov);
    fix_sign(&mut v1);
    let mut deflated = cov.clone();
    for i in 0..d {
        for j in 0..d {
            deflated[i][j] -= l1 * v1[i] * v1[j];
        }
    }
    let residual: f64 = (0..d).map(|i| deflated[i][i]).sum();
    let (l2, mut v2) = if d == 1 {
        (0.0, vec![0.0])
    } else if residual <= 1e-12 * total {
        (0.0, orthogonal_to(&v1))
    } else {
        power_iteration(&deflated)
    };
    if d > 1 {
        fix_sign(&mut v2);
    }
    let coords = centered.iter().map(|c| (dot(c, &v1), dot(c, &v2))).collect();
    let ratio = |l: f64| (l.max(0.0) / total).clamp(0.0, 1.0);
    Ok(Projection2D {
        coords,
        explained: [ratio(l1), ratio(l2).min(ratio(l1))],
        components: [v1, v2],
        mean,
    })
}

pub fn pca_project(table: &LatentTable) -> Result<Projection2D> {
    pca_points(&table.vectors())
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

/// Lloyd's k-means with farthest-point seeding: the first centre is the
/// point farthest from the centroid, each next one the point farthest from
/// all chosen centres (lowest index on ties). Returns cluster ids.
pub fn kmeans(points: &[(f64, f64)], k: usize) -> Result<Vec<usize>> {
    if k == 0 || points.is_empty() {
        return Err(Error::InvalidArgument("k-means needs k ≥ 1 and at least one point".into()));
    }
    let n = points.len() as f64;
    let centroid = points.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let argmax = |f: &dyn Fn((f64, f64)) -> f64| {
        let mut best = 0;
        for (i, &p) in points.iter().enumerate() {
            if f(p) > f(points[best]) {
                best = i;
            }
        }
        best
    };
    let mut centres = vec![points[argmax(&|p| dist2(p, centroid))]];
    while centres.len() < k {
        let cs = centres.clone();
        let far = argmax(&|p| cs.iter().map(|&c| dist2(p, c)).fold(f64::INFINITY, f64::min));
        centres.push(points[far]);
    }
    let nearest = |p: (f64, f64), cs: &[(f64, f64)]| {
        let mut best = 0;
        for (j, &c) in cs.iter().enumerate() {
            if dist2(p, c) < dist2(p, cs[best]) {
                best = j;
            }
        }
        best
    };
    let mut assign: Vec<usize> = points.iter().map(|&p| nearest(p, &centres)).collect();
    for _ in 0..KMEANS_MAX_ITERATIONS {
        let mut sums = vec![(0.0, 0.0, 0usize); k];
        for (&p, &a) in points.iter().zip(&assign) {
            sums[a].0 += p.0;
            sums[a].1 += p.1;
            sums[a].2 += 1;
        }
        for (c, s) in centres.iter_mut().zip(&sums) {
            if s.2 > 0 {
                *c = (s.0 / s.2 as f64, s.1 / s.2 as f64);
            }
        }
        let next: Vec<usize> = points.iter().map(|&p| nearest(p, &centres)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    Ok(assign)
}

fn permutations(items: &[usize], r: usize) -> Vec<Vec<usize>> {
    if r == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for (i, &x) in items.iter().enumerate() {
        let mut rest = items.to_vec();
        rest.remove(i);
        for mut p in permutations(&rest, r - 1) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

/// Fraction of points whose cluster maps to their label under the best
/// one-to-one cluster/label assignment.
pub fn assignment_accuracy(clusters: &[usize], labels: &[String]) -> Result<f64> {
    if clusters.len() != labels.len() {
        return Err(Error::shape("clusters vs labels", clusters.len(), labels.len()));
    }
    let names: Vec<&String> = labels.iter().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let label_ix: BTreeMap<&String, usize> = names.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let k = clusters.iter().copied().max().map_or(0, |m| m + 1);
    let mut confusion = vec![vec![0usize; names.len()]; k];
    for (&c, l) in clusters.iter().zip(labels) {
        confusion[c][label_ix[l]] += 1;
    }
    let clusters_ix: Vec<usize> = (0..k).collect();
    let labels_ix: Vec<usize> = (0..names.len()).collect();
    let best = if k <= names.len() {
        permutations(&labels_ix, k)
            .iter()
            .map(|p| (0..k).map(|c| confusion[c][p[c]]).sum::<usize>())
            .max()
    } else {
        permutations(&clusters_ix, names.len())
            .iter()
            .map(|p| (0..names.len()).map(|l| confusion[p[l]][l]).sum::<usize>())
            .max()
    }
    .unwrap_or(0);
    Ok(best as f64 / clusters.len() as f64)
}

/// k-means (k = 2) on the projection, scored against `labels`.
pub fn separation_score(proj: &Projection2D, labels: &[String]) -> Result<f64> {
    separation_score_k(proj, labels, 2)
}

pub fn separation_score_k(proj: &Projection2D, labels: &[String], k: usize) -> Result<f64> {
    if proj.coords.len() != labels.len() {
        return Err(Error::shape("projection rows vs labels", proj.coords.len(), labels.len()));
    }
    if labels.iter().collect::<std::collections::BTreeSet<_>>().len() < 2 {
        return Err(Error::InvalidArgument("separation needs at least two label classes".into()));
    }
    if k > 8 {
        return Err(Error::InvalidArgument("k above 8 is not supported".into()));
    }
    assignment_accuracy(&kmeans(&proj.coords, k)?, labels)
}

#[derive(Serialize)]
struct CsvRow<'a> {
    writer_id: &'a str,
    letter: char,
    label: &'a str,
    u: f64,
    v: f64,
}

/// `writer_id,letter,label,u,v`.
pub fn write_csv(path: impl AsRef<Path>, table: &LatentTable, proj: &Projection2D) -> Result<()> {
    let path = path.as_ref();
    if table.len() != proj.coords.len() {
        return Err(Error::shape("table vs projection rows", table.len(), proj.coords.len()));
    }
    let mut w = csv::Writer::from_path(path)?;
    for (r, &(u, v)) in table.rows.iter().zip(&proj.coords) {
        w.serialize(CsvRow {
            writer_id: &r.writer_id,
            letter: r.letter.as_char(),
            label: r.label.as_deref().unwrap_or(""),
            u,
            v,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Standalone SVG scatter, one colour per label.
pub fn render_svg(proj: &Projection2D, labels: &[String], title: &str) -> Result<String> {
    if proj.coords.len() != labels.len() {
        return Err(Error::shape("projection rows vs labels", proj.coords.len(), labels.len()));
    }
    let (w, h, m) = (480.0, 400.0, 40.0);
    let span = |f: fn(&(f64, f64)) -> f64| {
        let lo = proj.coords.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = proj.coords.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if lo.is_finite() && hi > lo {
            (lo, hi)
        } else {
            (lo.min(0.0) - 1.0, hi.max(0.0) + 1.0)
        }
    };
    let (ul, uh) = span(|p| p.0);
    let (vl, vh) = span(|p| p.1);
    let sx = |u: f64| m + (u - ul) / (uh - ul) * (w - 2.0 * m);
    let sy = |v: f64| h - m - (v - vl) / (vh - vl) * (h - 2.0 * m);
    let classes: Vec<&String> = labels.iter().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let colour = |l: &String| PALETTE[classes.iter().position(|c| *c == l).unwrap_or(0) % PALETTE.len()];

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        w / 2.0,
        xml_escape(title)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">PC1 ({:.1}%)</text>"#,
        w / 2.0,
        h - 10.0,
        100.0 * proj.explained[0]
    );
    let _ = writeln!(
        s,
        r#"<text x="12" y="{}" font-family="sans-serif" font-size="11" transform="rotate(-90 12 {})" text-anchor="middle">PC2 ({:.1}%)</text>"#,
        h / 2.0,
        h / 2.0,
        100.0 * proj.explained[1]
    );
    let _ = writeln!(
        s,
        r##"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="#999"/>"##,
        w - 2.0 * m,
        h - 2.0 * m
    );
    for (&(u, v), l) in proj.coords.iter().zip(labels) {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{}" fill-opacity="0.8"><title>{}</title></circle>"#,
            sx(u),
            sy(v),
            colour(l),
            xml_escape(l)
        );
    }
    for (i, c) in classes.iter().enumerate() {
        let y = m + 14.0 * i as f64 + 8.0;
        let _ = writeln!(
            s,
            r#"<circle cx="{}" cy="{y}" r="4" fill="{}"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
            w - m - 70.0,
            colour(c),
            w - m - 62.0,
            y + 4.0,
            xml_escape(c)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn write_svg(path: impl AsRef<Path>, proj: &Projection2D, labels: &[String], title: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render_svg(proj, labels, title)?).map_err(|e| Error::io(path, e))
}
