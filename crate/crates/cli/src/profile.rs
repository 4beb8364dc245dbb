// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tfa_core::activation_store::permutation_surrogate;
use tfa_core::linalg::Mat;
use tfa_core::metrics::heatmap::Palette;
use tfa_core::metrics::{
    autocorr_map, context_projection_ev, cosine_similarity_matrix, diagonal_mean_surrogate, spearman, ustat_curve,
};
use tfa_core::ActivationSet;

use crate::config;
use crate::failure::{Failure, Outcome};
use crate::io::{fmt, write_json, write_matrix, write_rows};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    pub input: Option<PathBuf>,
    pub layer: Option<i64>,
    /// Seed of the permutation surrogate.
    pub seed: u64,
    /// U-statistic positions; every position below the shortest length when absent.
    pub positions: Option<Vec<usize>>,
    pub lags: Vec<usize>,
    /// Context windows for the projection explained variance.
    pub windows: Vec<usize>,
    /// Center each sequence before the mean similarity map.
    pub centered: bool,
    pub emit_heatmaps: bool,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            input: None,
            layer: None,
            seed: 0,
            positions: None,
            lags: (1..=8).collect(),
            windows: vec![1, 2, 4, 8],
            centered: false,
            emit_heatmaps: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct ProfileSummary {
    sequences: usize,
    min_len: usize,
    ustat_spearman: f64,
    ustat_slope: f64,
    permutation_spearman: f64,
    permutation_slope: f64,
}

/// Rank correlation and least-squares slope against position, over finite
/// entries only so the infinity sentinel cannot dominate a fit.
fn trend(positions: &[usize], curve: &[f64]) -> (f64, f64) {
    let (xs, ys): (Vec<f64>, Vec<f64>) = positions
        .iter()
        .zip(curve)
        .filter(|(_, v)| v.is_finite())
        .map(|(&t, &v)| (t as f64, v))
        .unzip();
    if xs.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    (spearman(&xs, &ys), sxy / sxx)
}

fn mean_similarity(set: &ActivationSet, len: usize, centered: bool) -> Mat {
    let mut acc = Mat::zeros(len, len);
    for s in set.sequences() {
        acc += cosine_similarity_matrix(&s.rows(0, len).into_owned(), centered).values;
    }
    acc / set.len() as f64
}

pub fn run(cfg: &ProfileConfig, out: &Path) -> Outcome<()> {
    let input = config::required(&cfg.input, "input")?;
    let set = crate::io::load_input(&input, cfg.layer)?;
    if set.is_empty() {
        return Err(Failure::new(crate::failure::Status::Data, anyhow::anyhow!("{} has no sequences", input.display())));
    }
    let min_len = set.min_len();
    let shuffled = permutation_surrogate(&set, cfg.seed);
    let positions: Vec<usize> = cfg.positions.clone().unwrap_or_else(|| (0..min_len).collect());

    let curve = ustat_curve(&set, &positions)?;
    let curve_perm = ustat_curve(&shuffled, &positions)?;
    write_rows(
        &out.join("ustat.csv"),
        "position,data,permutation",
        positions.iter().zip(curve.iter().zip(&curve_perm)).map(|(t, (a, b))| vec![t.to_string(), fmt(*a), fmt(*b)]),
    )?;

    let lags: Vec<usize> = cfg.lags.iter().copied().filter(|&w| w < min_len).collect();
    let ac = autocorr_map(&set, &lags)?;
    let ac_perm = autocorr_map(&shuffled, &lags)?;
    let mut rows = Vec::new();
    for (i, w) in lags.iter().enumerate() {
        for t in *w..min_len {
            rows.push(vec![w.to_string(), t.to_string(), fmt(ac[(i, t)]), fmt(ac_perm[(i, t)])]);
        }
    }
    write_rows(&out.join("autocorr.csv"), "lag,position,data,permutation", rows)?;

    let mut rows = Vec::new();
    for &w in cfg.windows.iter().filter(|&&w| w > 0 && w < min_len) {
        for t in w..min_len {
            let a = context_projection_ev(&set, t, w)?;
            let b = context_projection_ev(&shuffled, t, w)?;
            rows.push(vec![w.to_string(), t.to_string(), fmt(a), fmt(b)]);
        }
    }
    write_rows(&out.join("context_ev.csv"), "window,position,data,permutation", rows)?;

    let sim = mean_similarity(&set, min_len, cfg.centered);
    let palette = if cfg.centered { Palette::Diverging } else { Palette::Gray };
    write_matrix(out, "similarity", &sim, palette, cfg.emit_heatmaps)?;
    write_matrix(out, "similarity_diagonal_surrogate", &diagonal_mean_surrogate(&sim)?, palette, cfg.emit_heatmaps)?;
    let sim_perm = mean_similarity(&shuffled, min_len, cfg.centered);
    write_matrix(out, "similarity_permutation", &sim_perm, palette, cfg.emit_heatmaps)?;

    let (data_rho, data_slope) = trend(&positions, &curve);
    let (perm_rho, perm_slope) = trend(&positions, &curve_perm);
    write_json(
        &out.join("profile.json"),
        &ProfileSummary {
            sequences: set.len(),
            min_len,
            ustat_spearman: data_rho,
            ustat_slope: data_slope,
            permutation_spearman: perm_rho,
            permutation_slope: perm_slope,
        },
    )
}
