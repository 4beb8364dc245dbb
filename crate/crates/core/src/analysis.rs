// SPDX-License-Identifier: MIT OR Apache-2.0

//! Experiment pipelines composing models and metrics: event structure,
//! noise robustness, hierarchical clustering, garden-path phrase
//! similarity and the predictive/novel dictionary split.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{column_means, cosine, rng_for, row_vec, subtract_row, vstack, Mat};
use crate::metrics::{cosine_similarity_matrix, effective_rank};
use crate::par::*;
use crate::sae::reconstruction_metrics;
use crate::{ActivationSet, DictionaryModel, Error, Result, TemporalModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodeKind {
    Activations,
    Sae,
    Predictive,
    Novel,
}

impl CodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CodeKind::Activations => "activations",
            CodeKind::Sae => "sae",
            CodeKind::Predictive => "predictive",
            CodeKind::Novel => "novel",
        }
    }
}

/// Source of codes for a sequence.
#[derive(Debug, Clone, Copy)]
pub enum Encoder<'a> {
    /// The activations themselves.
    Raw,
    /// BatchTopK runs with each sequence as its own batch.
    Sae(&'a DictionaryModel),
    Temporal(&'a TemporalModel),
}

impl Encoder<'_> {
    pub fn kinds(&self) -> Vec<CodeKind> {
        match self {
            Encoder::Raw => vec![CodeKind::Activations],
            Encoder::Sae(_) => vec![CodeKind::Sae],
            Encoder::Temporal(_) => vec![CodeKind::Predictive, CodeKind::Novel],
        }
    }

    /// Codes in the order of [`Encoder::kinds`] plus the reconstruction.
    pub fn encode(&self, x: &Mat) -> Result<(Vec<Mat>, Mat)> {
        match self {
            Encoder::Raw => Ok((vec![x.clone()], x.clone())),
            Encoder::Sae(m) => {
                let z = m.encode_batch(x)?.codes;
                let x_hat = m.decode_batch(&z);
                Ok((vec![z], x_hat))
            }
            Encoder::Temporal(m) => {
                let c = m.forward(x)?;
                Ok((vec![c.z_p, c.z_n], c.x_hat))
            }
        }
    }

    /// Codes per kind, per sequence.
    pub fn encode_set(&self, set: &ActivationSet) -> Result<Vec<(CodeKind, Vec<Mat>)>> {
        let per_seq: Vec<Vec<Mat>> = set
            .sequences()
            .par_iter()
            .map(|s| self.encode(s).map(|(codes, _)| codes))
            .collect::<Result<_>>()?;
        Ok(self
            .kinds()
            .into_iter()
            .enumerate()
            .map(|(k, kind)| (kind, per_seq.iter().map(|c| c[k].clone()).collect()))
            .collect())
    }
}

/// Mean removed before cosine similarity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Centering {
    #[default]
    PerSequence,
    Corpus,
    None,
}

/// Centered cosine matrices per sequence.
pub fn similarity_maps(codes: &[Mat], centering: Centering) -> Vec<Mat> {
    match centering {
        Centering::PerSequence => codes.iter().map(|c| cosine_similarity_matrix(c, true).values).collect(),
        Centering::None => codes.iter().map(|c| cosine_similarity_matrix(c, false).values).collect(),
        Centering::Corpus => {
            let mean = column_means(&vstack(&codes.iter().collect::<Vec<_>>()));
            codes
                .iter()
                .map(|c| cosine_similarity_matrix(&subtract_row(c, &mean), false).values)
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventReport {
    pub kind: CodeKind,
    /// Mean similarity over same-event pairs, diagonal excluded.
    pub within_mean: Option<f64>,
    /// Mean similarity over pairs from different events.
    pub across_mean: Option<f64>,
    /// Per sequence, `E × E` mean similarity between event blocks.
    pub block_means: Vec<Vec<Vec<f64>>>,
}

impl EventReport {
    pub fn gap(&self) -> Option<f64> {
        Some(self.within_mean? - self.across_mean?)
    }
}

/// Within/across-event similarity of pre-computed codes.
pub fn event_report_from_codes(
    set: &ActivationSet,
    kind: CodeKind,
    codes: &[Mat],
    centering: Centering,
) -> Result<EventReport> {
    let maps = similarity_maps(codes, centering);
    let (mut within, mut nw, mut across, mut na) = (0.0, 0usize, 0.0, 0usize);
    let mut blocks = Vec::with_capacity(set.len());
    for (i, (map, meta)) in maps.iter().zip(set.meta()).enumerate() {
        let len = map.nrows();
        let labels = meta
            .position_labels(len)
            .ok_or_else(|| Error::InvalidInput(format!("sequence {i} has no event labels")))?;
        let n_events = meta.events.as_ref().map_or(0, |e| e.len());
        let mut sums = vec![vec![0.0; n_events]; n_events];
        let mut counts = vec![vec![0usize; n_events]; n_events];
        for a in 0..len {
            for b in 0..len {
                let (Some(ea), Some(eb)) = (labels[a], labels[b]) else { continue };
                if a == b {
                    continue;
                }
                let v = map[(a, b)];
                sums[ea][eb] += v;
                counts[ea][eb] += 1;
                if a < b {
                    if ea == eb {
                        within += v;
                        nw += 1;
                    } else {
                        across += v;
                        na += 1;
                    }
                }
            }
        }
        blocks.push(
            sums.iter()
                .zip(&counts)
                .map(|(s, c)| {
                    s.iter()
                        .zip(c)
                        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { f64::NAN })
                        .collect()
                })
                .collect(),
        );
    }
    Ok(EventReport {
        kind,
        within_mean: (nw > 0).then(|| within / nw as f64),
        across_mean: (na > 0).then(|| across / na as f64),
        block_means: blocks,
    })
}

/// Encodes every sequence and reports within/across-event similarity for
/// each code kind of the encoder.
pub fn event_similarity_report(set: &ActivationSet, encoder: Encoder, centering: Centering) -> Result<Vec<EventReport>> {
    if let Some(i) = set.meta().iter().position(|m| m.events.is_none()) {
        return Err(Error::InvalidInput(format!("sequence {i} has no event labels")));
    }
    encoder
        .encode_set(set)?
        .iter()
        .map(|(kind, codes)| event_report_from_codes(set, *kind, codes, centering))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseLevel {
    pub sigma: f64,
    /// Explained variance of the noisy-input reconstruction against clean data.
    pub explained_variance: f64,
    /// Per code kind, per sequence, centered similarity of the noisy codes.
    pub maps: Vec<(CodeKind, Vec<Mat>)>,
}

/// Encodes `x + σ·ε` for each σ with the same seeded `ε`.
pub fn noise_robustness(set: &ActivationSet, encoder: Encoder, sigmas: &[f64], seed: u64) -> Result<Vec<NoiseLevel>> {
    if let Some(s) = sigmas.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(Error::InvalidInput(format!("noise scale {s} must be finite and non-negative")));
    }
    let eps: Vec<Mat> = set
        .sequences()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = rng_for(seed, i as u64);
            Mat::from_fn(s.nrows(), s.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal))
        })
        .collect();
    let clean = set.stacked();
    sigmas
        .iter()
        .map(|&sigma| {
            let outs: Vec<(Vec<Mat>, Mat)> = set
                .sequences()
                .par_iter()
                .zip(eps.par_iter())
                .map(|(x, e)| encoder.encode(&(x + e * sigma)))
                .collect::<Result<_>>()?;
            let recon = vstack(&outs.iter().map(|(_, r)| r).collect::<Vec<_>>());
            let (_, ev) = reconstruction_metrics(&clean, &recon)?;
            let maps = encoder
                .kinds()
                .into_iter()
                .enumerate()
                .map(|(k, kind)| {
                    let codes: Vec<Mat> = outs.iter().map(|(c, _)| c[k].clone()).collect();
                    (kind, similarity_maps(&codes, Centering::PerSequence))
                })
                .collect();
            Ok(NoiseLevel {
                sigma,
                explained_variance: ev,
                maps,
            })
        })
        .collect()
}

/// One agglomeration step; ids `≥ T` name earlier merges (`T + step`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub merges: Vec<Merge>,
    /// Flat cluster per row, numbered by first appearance.
    pub labels: Vec<usize>,
    pub n_clusters: usize,
    pub threshold: f64,
}

/// `1 − cosine` between rows.
pub fn cosine_distances(codes: &Mat) -> Mat {
    let rows: Vec<Vec<f64>> = (0..codes.nrows()).map(|r| row_vec(codes, r)).collect();
    let t = rows.len();
    Mat::from_fn(t, t, |i, j| if i == j { 0.0 } else { 1.0 - cosine(&rows[i], &rows[j]) })
}

/// Average-linkage agglomeration on a distance matrix. Ties go to the pair
/// with the smallest `(left, right)` ids.
pub fn average_linkage(dist: &Mat) -> Vec<Merge> {
    let t = dist.nrows();
    let mut d = dist.clone_owned();
    // active[slot] = (cluster id, size)
    let mut active: Vec<Option<(usize, usize)>> = (0..t).map(|i| Some((i, 1))).collect();
    let mut merges = Vec::with_capacity(t.saturating_sub(1));
    for step in 0..t.saturating_sub(1) {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for a in 0..t {
            let Some((ida, _)) = active[a] else { continue };
            for b in a + 1..t {
                let Some((idb, _)) = active[b] else { continue };
                let (lo, hi) = (ida.min(idb), ida.max(idb));
                let cand = (d[(a, b)], lo, hi, a, b);
                let better = match best {
                    None => true,
                    Some(cur) => cand.0 < cur.0 || (cand.0 == cur.0 && (cand.1, cand.2) < (cur.1, cur.2)),
                };
                if better {
                    best = Some(cand);
                }
            }
        }
        let (dist_ab, lo, hi, a, b) = best.expect("at least two active clusters");
        let (na, nb) = (active[a].unwrap().1, active[b].unwrap().1);
        for k in 0..t {
            if k == a || k == b || active[k].is_none() {
                continue;
            }
            // Lance–Williams update for average linkage
            let v = (na as f64 * d[(k, a)] + nb as f64 * d[(k, b)]) / (na + nb) as f64;
            d[(k, a)] = v;
            d[(a, k)] = v;
        }
        active[a] = Some((t + step, na + nb));
        active[b] = None;
        merges.push(Merge {
            left: lo,
            right: hi,
            distance: dist_ab,
            size: na + nb,
        });
    }
    merges
}

/// Flat clusters from applying every merge at distance `≤ threshold`.
pub fn cut_tree(merges: &[Merge], t: usize, threshold: f64) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..t + merges.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (step, m) in merges.iter().enumerate() {
        if m.distance > threshold {
            continue;
        }
        let id = t + step;
        let (l, r) = (find(&mut parent, m.left), find(&mut parent, m.right));
        parent[l] = id;
        parent[r] = id;
    }
    let mut roots: Vec<usize> = Vec::new();
    (0..t)
        .map(|i| {
            let root = find(&mut parent, i);
            match roots.iter().position(|&r| r == root) {
                Some(p) => p,
                None => {
                    roots.push(root);
                    roots.len() - 1
                }
            }
        })
        .collect()
}

/// Average-linkage clustering under cosine distance with a flat cut at
/// `threshold`.
pub fn hierarchical_clusters(codes: &Mat, threshold: f64) -> Result<Dendrogram> {
    let t = codes.nrows();
    if t < 2 {
        return Err(Error::InvalidInput("clustering needs at least 2 rows".into()));
    }
    let merges = average_linkage(&cosine_distances(codes));
    let labels = cut_tree(&merges, t, threshold);
    let n_clusters = labels.iter().max().map_or(0, |m| m + 1);
    Ok(Dendrogram {
        merges,
        labels,
        n_clusters,
        threshold,
    })
}

/// Labels of the three constituents of a garden-path sentence.
pub const PHRASE_LABELS: [&str; 3] = ["SP", "V", "OP"];

/// Pairwise cosine among the mean codes of three spans `[SP, V, OP]`.
pub fn phrase_similarity(codes: &Mat, spans: &[(usize, usize); 3]) -> Result<[[f64; 3]; 3]> {
    for (i, &(s, e)) in spans.iter().enumerate() {
        if s >= e {
            return Err(Error::InvalidInput(format!("{} span [{s}, {e}) is empty", PHRASE_LABELS[i])));
        }
        if e > codes.nrows() {
            return Err(Error::InvalidInput(format!(
                "{} span [{s}, {e}) exceeds {} rows",
                PHRASE_LABELS[i],
                codes.nrows()
            )));
        }
        for &(s2, e2) in &spans[..i] {
            if s < e2 && s2 < e {
                return Err(Error::InvalidInput("phrase spans overlap".into()));
            }
        }
    }
    let means: Vec<Vec<f64>> = spans
        .iter()
        .map(|&(s, e)| {
            let block = codes.rows(s, e - s);
            (0..codes.ncols()).map(|c| block.column(c).mean()).collect()
        })
        .collect();
    let mut table = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            table[i][j] = cosine(&means[i], &means[j]);
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSimilarity {
    pub ambiguous_v_sp: f64,
    pub ambiguous_v_op: f64,
    pub control_v_sp: f64,
    pub control_v_op: f64,
}

impl PairSimilarity {
    /// `(|Δ sim(V,SP)|, |Δ sim(V,OP)|)` between the two variants.
    pub fn sensitivity(&self) -> (f64, f64) {
        (
            (self.ambiguous_v_sp - self.control_v_sp).abs(),
            (self.ambiguous_v_op - self.control_v_op).abs(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GardenPathReport {
    pub kind: CodeKind,
    pub pairs: Vec<PairSimilarity>,
    /// Mean of [`PairSimilarity::sensitivity`] over pairs.
    pub mean_sensitivity_sp: f64,
    pub mean_sensitivity_op: f64,
}

fn phrase_spans(set: &ActivationSet, i: usize) -> Result<[(usize, usize); 3]> {
    let meta = &set.meta()[i];
    let mut out = [(0, 0); 3];
    for (k, label) in PHRASE_LABELS.iter().enumerate() {
        let span = meta
            .span(label)
            .ok_or_else(|| Error::InvalidInput(format!("sequence {i} has no {label} span")))?;
        out[k] = (span.start, span.end);
    }
    Ok(out)
}

/// Garden-path comparison of paired ambiguous/control sentences; sequence
/// `i` of each set forms pair `i`.
pub fn garden_path_battery(
    ambiguous: &ActivationSet,
    control: &ActivationSet,
    encoder: Encoder,
) -> Result<Vec<GardenPathReport>> {
    if ambiguous.len() != control.len() || ambiguous.is_empty() {
        return Err(Error::InvalidInput(format!(
            "unpaired inputs: {} ambiguous vs {} control sequences",
            ambiguous.len(),
            control.len()
        )));
    }
    let spans_a: Vec<_> = (0..ambiguous.len()).map(|i| phrase_spans(ambiguous, i)).collect::<Result<_>>()?;
    let spans_c: Vec<_> = (0..control.len()).map(|i| phrase_spans(control, i)).collect::<Result<_>>()?;
    let codes_a = encoder.encode_set(ambiguous)?;
    let codes_c = encoder.encode_set(control)?;
    codes_a
        .iter()
        .zip(&codes_c)
        .map(|((kind, ca), (_, cc))| {
            let pairs: Vec<PairSimilarity> = (0..ca.len())
                .map(|i| {
                    let a = phrase_similarity(&ca[i], &spans_a[i])?;
                    let c = phrase_similarity(&cc[i], &spans_c[i])?;
                    Ok(PairSimilarity {
                        ambiguous_v_sp: a[1][0],
                        ambiguous_v_op: a[1][2],
                        control_v_sp: c[1][0],
                        control_v_op: c[1][2],
                    })
                })
                .collect::<Result<_>>()?;
            let n = pairs.len() as f64;
            Ok(GardenPathReport {
                kind: *kind,
                mean_sensitivity_sp: pairs.iter().map(|p| p.sensitivity().0).sum::<f64>() / n,
                mean_sensitivity_op: pairs.iter().map(|p| p.sensitivity().1).sum::<f64>() / n,
                pairs,
            })
        })
        .collect()
}

/// How atom usage is totalled when ranking atoms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UsageMeasure {
    /// Sum of code values.
    #[default]
    Mass,
    /// Number of non-zero activations.
    Count,
}

/// Share of predictive usage that defines the predictive prefix.
pub const SPLIT_COVERAGE: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub measure: UsageMeasure,
    /// Atoms by descending predictive usage (ties by index).
    pub order: Vec<usize>,
    /// Length of the shortest prefix of `order` holding 90% of predictive usage.
    pub split_index: usize,
    pub predictive_usage: Vec<f64>,
    /// Novel usage in `order`, aligned with `predictive_usage`.
    pub novel_usage: Vec<f64>,
    /// Fraction of novel usage falling on the predictive prefix.
    pub novel_overlap: f64,
    pub predictive_effective_rank: f64,
    pub novel_effective_rank: Option<f64>,
    pub novel_mean_l0: f64,
}

fn usage(codes: &Mat, measure: UsageMeasure) -> Vec<f64> {
    codes
        .column_iter()
        .map(|c| match measure {
            UsageMeasure::Mass => c.iter().map(|v| v.abs()).sum(),
            UsageMeasure::Count => c.iter().filter(|v| **v != 0.0).count() as f64,
        })
        .collect()
}

/// Split report from stacked predictive and novel code matrices.
pub fn split_report_from_codes(z_p: &Mat, z_n: &Mat, measure: UsageMeasure) -> Result<SplitReport> {
    if z_p.shape() != z_n.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", z_p.shape(), z_n.shape())));
    }
    let pred = usage(z_p, measure);
    let novel = usage(z_n, measure);
    let total_pred: f64 = pred.iter().sum();
    if total_pred <= 0.0 {
        return Err(Error::Degenerate("predictive codes are all zero".into()));
    }
    let mut order: Vec<usize> = (0..pred.len()).collect();
    order.sort_by(|&a, &b| pred[b].total_cmp(&pred[a]).then(a.cmp(&b)));
    let mut cum = 0.0;
    let mut split_index = order.len();
    for (i, &a) in order.iter().enumerate() {
        cum += pred[a];
        if cum >= SPLIT_COVERAGE * total_pred {
            split_index = i + 1;
            break;
        }
    }
    let total_novel: f64 = novel.iter().sum();
    let in_prefix: f64 = order[..split_index].iter().map(|&a| novel[a]).sum();
    let tokens = z_n.nrows().max(1) as f64;
    Ok(SplitReport {
        measure,
        split_index,
        predictive_usage: order.iter().map(|&a| pred[a]).collect(),
        novel_usage: order.iter().map(|&a| novel[a]).collect(),
        order,
        novel_overlap: if total_novel > 0.0 { in_prefix / total_novel } else { 0.0 },
        predictive_effective_rank: effective_rank(z_p)?,
        novel_effective_rank: effective_rank(z_n).ok(),
        novel_mean_l0: z_n.iter().filter(|v| **v != 0.0).count() as f64 / tokens,
    })
}

/// Which atoms carry the predictive code, and how much novel usage lands
/// on them.
pub fn dictionary_split_report(model: &TemporalModel, set: &ActivationSet, measure: UsageMeasure) -> Result<SplitReport> {
    let codes = model.encode_set(set)?;
    let z_p = vstack(&codes.iter().map(|c| &c.z_p).collect::<Vec<_>>());
    let z_n = vstack(&codes.iter().map(|c| &c.z_n).collect::<Vec<_>>());
    split_report_from_codes(&z_p, &z_n, measure)
}
