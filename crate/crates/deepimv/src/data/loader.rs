//! CSV dataset ingestion and re-serialization.
//!
//! Layout: `view_1.csv .. view_V.csv` plus `labels.csv` and an optional
//! `mask.csv`, all UTF-8 with a header row and the sample id in the first
//! column. The sample universe and order come from `labels.csv`; view rows
//! are joined by id. When `mask.csv` is present it is authoritative;
//! otherwise a view is missing exactly when its row is absent or entirely
//! empty. Scalar gaps inside observed rows (empty cells or `nan`) are
//! filled with the column mean over observed samples.

use std::collections::HashMap;
use std::path::Path;

use crate::data::MultiViewDataset;
use crate::error::{load, Result};
use crate::model::ViewMask;
use crate::numerics::Matrix;

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| load(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| load(format!("bad header in {}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| load(format!("{} row {}: {e}", path.display(), i + 2)))?;
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok((headers, rows))
}

fn parse_cell(
    raw: &str,
    file: &Path,
    row: usize,
) -> Result<Option<f64>> {
    let trimmed = raw.trim();
    if trimmed.is_empty() || trimmed.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    trimmed.parse::<f64>().map(Some).map_err(|_| {
        load(format!(
            "{} row {row}: non-numeric field '{trimmed}'",
            file.display()
        ))
    })
}

fn count_views(dir: &Path) -> Result<usize> {
    let mut v = 0;
    while dir.join(format!("view_{}.csv", v + 1)).exists() {
        v += 1;
    }
    if v == 0 {
        return Err(load(format!(
            "no view_1.csv found under {}",
            dir.display()
        )));
    }
    Ok(v)
}

/// Load a multi-view dataset from a directory.
pub fn load_dataset(dir: &Path) -> Result<MultiViewDataset> {
    let n_views = count_views(dir)?;

    // Sample universe and order from labels.csv.
    let labels_path = dir.join("labels.csv");
    let (_, label_rows) = read_csv(&labels_path)?;
    let mut ids = Vec::with_capacity(label_rows.len());
    let mut labels = Vec::with_capacity(label_rows.len());
    let mut index_of: HashMap<String, usize> = HashMap::new();
    for (i, row) in label_rows.iter().enumerate() {
        if row.len() < 2 {
            return Err(load(format!(
                "{} row {}: expected id and label columns",
                labels_path.display(),
                i + 2
            )));
        }
        let id = row[0].trim().to_string();
        if index_of.insert(id.clone(), i).is_some() {
            return Err(load(format!(
                "{} row {}: duplicate id '{id}'",
                labels_path.display(),
                i + 2
            )));
        }
        let label: usize = row[1].trim().parse().map_err(|_| {
            load(format!(
                "{} row {}: label '{}' is not a class index",
                labels_path.display(),
                i + 2,
                row[1]
            ))
        })?;
        ids.push(id);
        labels.push(label);
    }
    let n = ids.len();
    if n == 0 {
        return Err(load(format!("{} holds no samples", labels_path.display())));
    }

    // Optional authoritative mask.
    let mask_path = dir.join("mask.csv");
    let explicit_mask: Option<Vec<Vec<bool>>> = if mask_path.exists() {
        let (headers, rows) = read_csv(&mask_path)?;
        if headers.len() != n_views + 1 {
            return Err(load(format!(
                "{} has {} columns, expected id plus {n_views} views",
                mask_path.display(),
                headers.len()
            )));
        }
        let mut mask = vec![vec![false; n_views]; n];
        let mut seen = vec![false; n];
        for (i, row) in rows.iter().enumerate() {
            let id = row[0].trim();
            let &sample = index_of.get(id).ok_or_else(|| {
                load(format!(
                    "{} row {}: id '{id}' not present in labels.csv",
                    mask_path.display(),
                    i + 2
                ))
            })?;
            seen[sample] = true;
            for v in 0..n_views {
                mask[sample][v] = match row[v + 1].trim() {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(load(format!(
                            "{} row {}: mask entry '{other}' must be 0 or 1",
                            mask_path.display(),
                            i + 2
                        )))
                    }
                };
            }
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(load(format!(
                "{} has no row for id '{}'",
                mask_path.display(),
                ids[missing]
            )));
        }
        Some(mask)
    } else {
        None
    };

    // Per-view features joined by id; gaps recorded for later imputation.
    let mut views = Vec::with_capacity(n_views);
    let mut observed = vec![vec![false; n_views]; n];
    for v in 0..n_views {
        let path = dir.join(format!("view_{}.csv", v + 1));
        let (headers, rows) = read_csv(&path)?;
        let d = headers.len().saturating_sub(1);
        if d == 0 {
            return Err(load(format!("{} has no feature columns", path.display())));
        }
        let mut features: Vec<Option<Vec<Option<f64>>>> = vec![None; n];
        for (i, row) in rows.iter().enumerate() {
            let id = row[0].trim();
            let sample = match index_of.get(id) {
                Some(&s) => s,
                None => continue, // extra rows outside the label universe are ignored
            };
            if features[sample].is_some() {
                return Err(load(format!(
                    "{} row {}: duplicate id '{id}'",
                    path.display(),
                    i + 2
                )));
            }
            let mut cells = Vec::with_capacity(d);
            for c in 1..=d {
                cells.push(parse_cell(&row[c], &path, i + 2)?);
            }
            features[sample] = Some(cells);
        }

        for s in 0..n {
            let row_present = features[s]
                .as_ref()
                .map(|cells| cells.iter().any(Option::is_some))
                .unwrap_or(false);
            let is_observed = match &explicit_mask {
                Some(mask) => {
                    if mask[s][v] && !row_present {
                        return Err(load(format!(
                            "mask.csv marks view {} observed for id '{}' but {} has no data row",
                            v + 1,
                            ids[s],
                            path.display()
                        )));
                    }
                    mask[s][v]
                }
                None => row_present,
            };
            observed[s][v] = is_observed;
        }

        // Column means over observed, non-missing cells.
        let mut col_sum = vec![0.0; d];
        let mut col_count = vec![0usize; d];
        for s in 0..n {
            if !observed[s][v] {
                continue;
            }
            if let Some(cells) = &features[s] {
                for (c, cell) in cells.iter().enumerate() {
                    if let Some(x) = cell {
                        col_sum[c] += x;
                        col_count[c] += 1;
                    }
                }
            }
        }

        let mut m = Matrix::zeros(n, d);
        for s in 0..n {
            if !observed[s][v] {
                continue; // masked rows stay zero and are never read
            }
            let cells = features[s].as_ref().expect("observed implies present");
            for c in 0..d {
                let value = match cells[c] {
                    Some(x) => x,
                    None => {
                        if col_count[c] == 0 {
                            return Err(load(format!(
                                "{} column {} has no observed values to impute from",
                                path.display(),
                                c + 1
                            )));
                        }
                        col_sum[c] / col_count[c] as f64
                    }
                };
                m.set(s, c, value);
            }
        }
        views.push(m);
    }

    let mask_flat: Vec<bool> = observed.into_iter().flatten().collect();
    let mask = ViewMask::new(n, n_views, mask_flat).map_err(|e| {
        load(format!("dataset under {} is invalid: {e}", dir.display()))
    })?;
    MultiViewDataset::new(views, mask, labels, Some(ids))
}

/// Write a dataset back out in the loader's layout (including the mask, so
/// masked placeholder rows are not mistaken for observations on reload).
pub fn save_dataset(ds: &MultiViewDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let n = ds.n_samples();
    let ids: Vec<String> = match &ds.ids {
        Some(ids) => ids.clone(),
        None => (0..n).map(|i| format!("s{i:06}")).collect(),
    };

    for (v, m) in ds.views.iter().enumerate() {
        let mut out = String::from("id");
        for c in 0..m.cols() {
            out.push_str(&format!(",f{}", c + 1));
        }
        out.push('\n');
        for r in 0..n {
            out.push_str(&ids[r]);
            for &x in m.row(r) {
                out.push(',');
                out.push_str(&format!("{x}"));
            }
            out.push('\n');
        }
        std::fs::write(dir.join(format!("view_{}.csv", v + 1)), out)?;
    }

    let mut out = String::from("id,label\n");
    for r in 0..n {
        out.push_str(&format!("{},{}\n", ids[r], ds.labels[r]));
    }
    std::fs::write(dir.join("labels.csv"), out)?;

    let mut out = String::from("id");
    for v in 0..ds.n_views() {
        out.push_str(&format!(",view_{}", v + 1));
    }
    out.push('\n');
    for r in 0..n {
        out.push_str(&ids[r]);
        for v in 0..ds.n_views() {
            out.push_str(if ds.mask.is_observed(r, v) { ",1" } else { ",0" });
        }
        out.push('\n');
    }
    std::fs::write(dir.join("mask.csv"), out)?;
    Ok(())
}
