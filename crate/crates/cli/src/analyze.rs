// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tfa_core::analysis::{
    dictionary_split_report, event_similarity_report, garden_path_battery, hierarchical_clusters, noise_robustness,
    similarity_maps, Centering, CodeKind, Dendrogram, Encoder, UsageMeasure,
};
use tfa_core::checkpoint::{Checkpoint, Model};
use tfa_core::linalg::{vstack, Mat};
use tfa_core::metrics::heatmap::Palette;
use tfa_core::metrics::{fourier_split, linear_cka, pca_project, tortuosity, CutoffRule};
use tfa_core::temporal::component_stats;
use tfa_core::ActivationSet;

use crate::config;
use crate::failure::{Classify, Failure, Outcome};
use crate::io::{fmt, load_checkpoint, load_input, scale_for, write_json, write_matrix, write_rows};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Analysis {
    /// Within/across-event similarity, optional noise robustness.
    Event,
    /// Phrase similarity on paired ambiguous/control sentences.
    Gardenpath,
    /// PCA projection and hierarchical clusters of the codes.
    Geometry,
    /// Predictive/novel dictionary split of a temporal model.
    Split,
    /// CKA of each code against the slow and fast parts of the input.
    Fourier,
    /// Pairwise CKA between code kinds.
    Cka,
    /// Path tortuosity of each sequence's codes.
    Tortuosity,
}

impl Analysis {
    pub fn name(self) -> &'static str {
        match self {
            Analysis::Event => "event",
            Analysis::Gardenpath => "gardenpath",
            Analysis::Geometry => "geometry",
            Analysis::Split => "split",
            Analysis::Fourier => "fourier",
            Analysis::Cka => "cka",
            Analysis::Tortuosity => "tortuosity",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub input: Option<PathBuf>,
    pub layer: Option<i64>,
    /// Checkpoint whose codes are analyzed next to the raw activations.
    pub model: Option<PathBuf>,
    /// Control variants for the garden-path battery.
    pub control: Option<PathBuf>,
    pub seed: u64,
    pub centering: Centering,
    /// Input noise scales for the robustness sweep (event analysis).
    pub sigmas: Vec<f64>,
    /// Cosine-distance cut for flat clusters.
    pub threshold: f64,
    pub cutoff: CutoffRule,
    pub measure: UsageMeasure,
    /// PCA components.
    pub components: usize,
    /// Per-sequence matrices are written for this many sequences.
    pub max_sequences: usize,
    pub emit_heatmaps: bool,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            input: None,
            layer: None,
            model: None,
            control: None,
            seed: 0,
            centering: Centering::PerSequence,
            sigmas: Vec::new(),
            threshold: 0.2,
            cutoff: CutoffRule::EqualEnergy,
            measure: UsageMeasure::Mass,
            components: 2,
            max_sequences: 4,
            emit_heatmaps: false,
        }
    }
}

struct Inputs {
    set: ActivationSet,
    checkpoint: Option<Checkpoint>,
}

impl Inputs {
    fn encoders(&self) -> Vec<Encoder<'_>> {
        let mut out = vec![Encoder::Raw];
        match self.checkpoint.as_ref().map(|c| &c.model) {
            Some(Model::Sae(m)) => out.push(Encoder::Sae(m)),
            Some(Model::Temporal(m)) => out.push(Encoder::Temporal(m)),
            None => {}
        }
        out
    }

    fn codes(&self) -> Outcome<Vec<(CodeKind, Vec<Mat>)>> {
        let mut all = Vec::new();
        for enc in self.encoders() {
            all.extend(enc.encode_set(&self.set)?);
        }
        Ok(all)
    }
}

fn load(cfg: &AnalyzeConfig, path: &Path) -> Outcome<Inputs> {
    let raw = load_input(path, cfg.layer)?;
    match &cfg.model {
        Some(m) => {
            let checkpoint = load_checkpoint(m)?;
            Ok(Inputs {
                set: scale_for(raw, &checkpoint)?,
                checkpoint: Some(checkpoint),
            })
        }
        None => Ok(Inputs { set: raw, checkpoint: None }),
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn run(which: Analysis, cfg: &AnalyzeConfig, out: &Path) -> Outcome<()> {
    let input = config::required(&cfg.input, "input")?;
    let inputs = load(cfg, &input)?;
    match which {
        Analysis::Event => event(cfg, &inputs, out),
        Analysis::Gardenpath => gardenpath(cfg, &inputs, out),
        Analysis::Geometry => geometry(cfg, &inputs, out),
        Analysis::Split => split(cfg, &inputs, out),
        Analysis::Fourier => fourier(cfg, &inputs, out),
        Analysis::Cka => cka(&inputs, out),
        Analysis::Tortuosity => tortuosity_report(&inputs, out),
    }
}

#[derive(Serialize)]
struct EventRow {
    kind: CodeKind,
    within_mean: Option<f64>,
    across_mean: Option<f64>,
    gap: Option<f64>,
}

#[derive(Serialize)]
struct NoiseRow {
    sigma: f64,
    kind: &'static str,
    explained_variance: f64,
}

fn event(cfg: &AnalyzeConfig, inputs: &Inputs, out: &Path) -> Outcome<()> {
    let mut rows = Vec::new();
    let mut blocks = Vec::new();
    for enc in inputs.encoders() {
        let reports = event_similarity_report(&inputs.set, enc, cfg.centering).or_data("event labels")?;
        for r in reports {
            for (s, m) in r.block_means.iter().enumerate() {
                for (i, row) in m.iter().enumerate() {
                    for (j, v) in row.iter().enumerate() {
                        blocks.push(vec![r.kind.as_str().into(), s.to_string(), i.to_string(), j.to_string(), fmt(*v)]);
                    }
                }
            }
            rows.push(EventRow {
                kind: r.kind,
                within_mean: r.within_mean,
                across_mean: r.across_mean,
                gap: r.gap(),
            });
        }
    }
    write_json(&out.join("event.json"), &rows)?;
    write_rows(&out.join("event_blocks.csv"), "kind,sequence,event_a,event_b,mean", blocks)?;

    let maps_dir = out.join("maps");
    for (kind, codes) in inputs.codes()? {
        let shown: Vec<Mat> = codes.into_iter().take(cfg.max_sequences).collect();
        for (i, m) in similarity_maps(&shown, cfg.centering).iter().enumerate() {
            write_matrix(&maps_dir, &format!("{}_seq{i}", kind.as_str()), m, Palette::Diverging, cfg.emit_heatmaps)?;
        }
    }

    if !cfg.sigmas.is_empty() {
        let mut noise = Vec::new();
        for enc in inputs.encoders() {
            for level in noise_robustness(&inputs.set, enc, &cfg.sigmas, cfg.seed)? {
                let label = match enc {
                    Encoder::Raw => "activations",
                    Encoder::Sae(_) => "sae",
                    Encoder::Temporal(_) => "temporal",
                };
                noise.push(NoiseRow {
                    sigma: level.sigma,
                    kind: label,
                    explained_variance: level.explained_variance,
                });
                for (kind, maps) in &level.maps {
                    for (i, m) in maps.iter().take(cfg.max_sequences).enumerate() {
                        let stem = format!("noise_{}_{}_seq{i}", level.sigma, kind.as_str());
                        write_matrix(&maps_dir, &stem, m, Palette::Diverging, cfg.emit_heatmaps)?;
                    }
                }
            }
        }
        write_json(&out.join("noise.json"), &noise)?;
    }
    Ok(())
}

fn gardenpath(cfg: &AnalyzeConfig, inputs: &Inputs, out: &Path) -> Outcome<()> {
    let path = config::required(&cfg.control, "control set")?;
    let control = load_input(&path, cfg.layer)?;
    let control = match &inputs.checkpoint {
        Some(c) => scale_for(control, c)?,
        None => control,
    };
    let mut reports = Vec::new();
    for enc in inputs.encoders() {
        reports.extend(garden_path_battery(&inputs.set, &control, enc).or_data("garden-path spans")?);
    }
    write_json(&out.join("gardenpath.json"), &reports)
}

#[derive(Serialize)]
struct GeometryRow {
    kind: CodeKind,
    explained_ratios: Vec<f64>,
    clusters_per_sequence: Vec<usize>,
}

#[derive(Serialize)]
struct ClusterRecord<'a> {
    kind: CodeKind,
    sequence: usize,
    dendrogram: &'a Dendrogram,
}

fn geometry(cfg: &AnalyzeConfig, inputs: &Inputs, out: &Path) -> Outcome<()> {
    let mut summary = Vec::new();
    for (kind, codes) in inputs.codes()? {
        let shown: Vec<&Mat> = codes.iter().take(cfg.max_sequences).collect();
        let stacked = vstack(&shown);
        let pca = pca_project(&stacked, cfg.components)?;
        let header = std::iter::once("sequence,position".to_string())
            .chain((1..=cfg.components).map(|c| format!("pc{c}")))
            .collect::<Vec<_>>()
            .join(",");
        let mut rows = Vec::new();
        let mut r = 0;
        for (s, m) in shown.iter().enumerate() {
            for t in 0..m.nrows() {
                let mut row = vec![s.to_string(), t.to_string()];
                row.extend(pca.projection.row(r).iter().map(|v| fmt(*v)));
                rows.push(row);
                r += 1;
            }
        }
        write_rows(&out.join(format!("pca_{}.csv", kind.as_str())), &header, rows)?;

        let dendrograms: Vec<Dendrogram> = shown
            .iter()
            .map(|m| hierarchical_clusters(m, cfg.threshold))
            .collect::<tfa_core::Result<_>>()?;
        let records: Vec<ClusterRecord> = dendrograms
            .iter()
            .enumerate()
            .map(|(sequence, dendrogram)| ClusterRecord { kind, sequence, dendrogram })
            .collect();
        write_json(&out.join(format!("clusters_{}.json", kind.as_str())), &records)?;
        summary.push(GeometryRow {
            kind,
            explained_ratios: pca.ratios,
            clusters_per_sequence: dendrograms.iter().map(|d| d.n_clusters).collect(),
        });
    }
    write_json(&out.join("geometry.json"), &summary)
}

fn split(cfg: &AnalyzeConfig, inputs: &Inputs, out: &Path) -> Outcome<()> {
    let Some(Model::Temporal(model)) = inputs.checkpoint.as_ref().map(|c| &c.model) else {
        return Err(Failure::usage("split analysis needs --model with a temporal checkpoint"));
    };
    #[derive(Serialize)]
    struct SplitOut {
        split: tfa_core::analysis::SplitReport,
        components: tfa_core::temporal::ComponentStats,
    }
    write_json(
        &out.join("split.json"),
        &SplitOut {
            split: dictionary_split_report(model, &inputs.set, cfg.measure)?,
            components: component_stats(model, &inputs.set)?,
        },
    )
}

#[derive(Serialize)]
struct FourierRow {
    kind: CodeKind,
    cka_slow: Option<f64>,
    cka_fast: Option<f64>,
}

#[derive(Serialize)]
struct FourierOut {
    cutoff_rule: CutoffRule,
    cutoffs: Vec<usize>,
    table: Vec<FourierRow>,
}

fn fourier(cfg: &AnalyzeConfig, inputs: &Inputs, out: &Path) -> Outcome<()> {
    let splits = inputs
        .set
        .sequences()
        .iter()
        .map(|s| fourier_split(s, cfg.cutoff))
        .collect::<tfa_core::Result<Vec<_>>>()?;
    let mut table = Vec::new();
    for (kind, codes) in inputs.codes()? {
        let slow = mean(codes.iter().zip(&splits).filter_map(|(c, f)| linear_cka(c, &f.slow).ok()));
        let fast = mean(codes.iter().zip(&splits).filter_map(|(c, f)| linear_cka(c, &f.fast).ok()));
        table.push(FourierRow {
            kind,
            cka_slow: slow,
            cka_fast: fast,
        });
    }
    let opt = |v: Option<f64>| v.map(fmt).unwrap_or_default();
    write_rows(
        &out.join("fourier.csv"),
        "kind,cka_slow,cka_fast",
        table.iter().map(|r| vec![r.kind.as_str().to_string(), opt(r.cka_slow), opt(r.cka_fast)]),
    )?;
    write_json(
        &out.join("fourier.json"),
        &FourierOut {
            cutoff_rule: cfg.cutoff,
            cutoffs: splits.iter().map(|f| f.cutoff).collect(),
            table,
        },
    )
}

fn cka(inputs: &Inputs, out: &Path) -> Outcome<()> {
    let codes = inputs.codes()?;
    let kinds: Vec<&str> = codes.iter().map(|(k, _)| k.as_str()).collect();
    let mut matrix = vec![vec![None; codes.len()]; codes.len()];
    for (i, (_, a)) in codes.iter().enumerate() {
        for (j, (_, b)) in codes.iter().enumerate() {
            matrix[i][j] = mean(a.iter().zip(b).filter_map(|(x, y)| linear_cka(x, y).ok()));
        }
    }
    let header = std::iter::once("kind").chain(kinds.iter().copied()).collect::<Vec<_>>().join(",");
    write_rows(
        &out.join("cka.csv"),
        &header,
        matrix.iter().zip(&kinds).map(|(row, k)| {
            std::iter::once(k.to_string())
                .chain(row.iter().map(|v| v.map(fmt).unwrap_or_default()))
                .collect()
        }),
    )?;
    #[derive(Serialize)]
    struct CkaOut<'a> {
        kinds: &'a [&'a str],
        matrix: &'a [Vec<Option<f64>>],
    }
    write_json(&out.join("cka.json"), &CkaOut { kinds: &kinds, matrix: &matrix })
}

fn tortuosity_report(inputs: &Inputs, out: &Path) -> Outcome<()> {
    let mut rows = Vec::new();
    let mut means = serde_json::Map::new();
    for (kind, codes) in inputs.codes()? {
        let values: Vec<Option<f64>> = codes.iter().map(|c| tortuosity(c).ok()).collect();
        for (s, v) in values.iter().enumerate() {
            rows.push(vec![kind.as_str().to_string(), s.to_string(), v.map(fmt).unwrap_or_default()]);
        }
        means.insert(kind.as_str().into(), mean(values.iter().flatten().copied()).into());
    }
    write_rows(&out.join("tortuosity.csv"), "kind,sequence,tortuosity", rows)?;
    write_json(&out.join("tortuosity.json"), &means)
}
