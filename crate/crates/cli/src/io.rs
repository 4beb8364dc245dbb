// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use tfa_core::activation_store::{apply_norm_scale, load_activations};
use tfa_core::checkpoint::Checkpoint;
use tfa_core::linalg::Mat;
use tfa_core::metrics::heatmap::{self, Palette};
use tfa_core::ActivationSet;

use crate::failure::{Classify, Failure, Outcome, Status};

/// Loads a `TFA1` set, checking its recorded layer against `--layer`.
pub fn load_input(path: &Path, layer: Option<i64>) -> Outcome<ActivationSet> {
    let set = load_activations(path).or_data(format!("loading {}", path.display()))?;
    if let (Some(want), Some(have)) = (layer, set.layer) {
        if want != have {
            return Err(Failure::new(
                Status::Data,
                anyhow::anyhow!("{} holds layer {have}, expected {want}", path.display()),
            ));
        }
    }
    Ok(set)
}

pub fn load_checkpoint(path: &Path) -> Outcome<Checkpoint> {
    Checkpoint::load(path).or_data(format!("loading checkpoint {}", path.display()))
}

/// Puts raw inputs on the scale the model was trained at.
pub fn scale_for(set: ActivationSet, checkpoint: &Checkpoint) -> Outcome<ActivationSet> {
    match (checkpoint.norm_scale, set.norm_scale()) {
        (Some(scale), None) => Ok(apply_norm_scale(&set, scale)?),
        _ => Ok(set),
    }
}

pub fn create(path: &Path) -> Outcome<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).or_usage(format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).or_usage(format!("creating {}", path.display()))?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome<()> {
    let mut text = serde_json::to_string_pretty(value).or_usage("serializing report")?;
    text.push('\n');
    fs::write(path, text).or_usage(format!("writing {}", path.display()))
}

/// CSV with a header row; each row is pre-formatted fields.
pub fn write_rows(path: &Path, header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> Outcome<()> {
    let mut w = create(path)?;
    let body = || -> std::io::Result<()> {
        writeln!(w, "{header}")?;
        for row in rows {
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()
    };
    body().or_usage(format!("writing {}", path.display()))
}

/// `stem.csv`, plus `stem.ppm` and `stem.svg` when heatmaps are on.
pub fn write_matrix(dir: &Path, stem: &str, m: &Mat, palette: Palette, heatmaps: bool) -> Outcome<()> {
    let csv = dir.join(format!("{stem}.csv"));
    let mut w = create(&csv)?;
    heatmap::write_csv(m, &mut w)
        .and_then(|_| w.flush())
        .or_usage(format!("writing {}", csv.display()))?;
    if heatmaps {
        let ppm = dir.join(format!("{stem}.ppm"));
        let mut w = create(&ppm)?;
        heatmap::write_ppm(m, palette, &mut w)
            .and_then(|_| w.flush())
            .or_usage(format!("writing {}", ppm.display()))?;
        let svg = dir.join(format!("{stem}.svg"));
        let mut w = create(&svg)?;
        heatmap::write_svg(m, palette, 4, &mut w)
            .and_then(|_| w.flush())
            .or_usage(format!("writing {}", svg.display()))?;
    }
    Ok(())
}

pub fn fmt(v: f64) -> String {
    format!("{v}")
}
