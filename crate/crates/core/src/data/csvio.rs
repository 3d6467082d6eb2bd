//! CSV export and ingestion.
//!
//! Per-modality file: header `subject_id,segment_id,label,f0,...,f{D-1}`,
//! one row per segment. Manifest file: `subject_id,label,modalities_present`
//! with present modality names separated by semicolons.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! export -> load reproduces a dataset exactly, bit for bit.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::data::{Dataset, SubjectRecord};
use crate::error::{Result, TripError};

/// Write `manifest.csv` plus one `{modality}.csv` per modality into `dir`.
/// Returns the written paths (manifest first).
pub fn export_csv(dataset: &Dataset, dir: &Path) -> Result<Vec<PathBuf>> {
    dataset.validate()?;
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let manifest_path = dir.join("manifest.csv");
    let mut manifest = csv::Writer::from_path(&manifest_path)?;
    manifest
        .write_record(["subject_id", "label", "modalities_present"])
        .map_err(csv_err)?;
    for s in &dataset.subjects {
        let present: Vec<&str> = dataset
            .modality_names
            .iter()
            .enumerate()
            .filter(|(r, _)| s.has_modality(*r))
            .map(|(_, n)| n.as_str())
            .collect();
        manifest
            .write_record([s.subject_id.as_str(), &s.label.to_string(), &present.join(";")])
            .map_err(csv_err)?;
    }
    manifest.flush()?;
    written.push(manifest_path);

    for (r, name) in dataset.modality_names.iter().enumerate() {
        let path = dir.join(format!("{name}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        let mut header = vec!["subject_id".to_string(), "segment_id".to_string(), "label".to_string()];
        header.extend((0..dataset.modality_dims[r]).map(|c| format!("f{c}")));
        w.write_record(&header).map_err(csv_err)?;
        for s in &dataset.subjects {
            if let Some(rows) = &s.segments[r] {
                for (seg, row) in rows.iter().enumerate() {
                    let mut record =
                        vec![s.subject_id.clone(), seg.to_string(), s.label.to_string()];
                    record.extend(row.iter().map(|v| format!("{v}")));
                    w.write_record(&record).map_err(csv_err)?;
                }
            }
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

fn csv_err(e: csv::Error) -> TripError {
    TripError::Data(format!("csv write failed: {e}"))
}

struct ManifestRow {
    label: usize,
    declared: Vec<String>,
}

/// Load a dataset from per-modality CSVs joined on a manifest.
///
/// The availability mask reflects the data actually found: a modality whose
/// file lacks a subject's rows is absent for that subject. A modality file
/// that does not exist on disk drops that modality from the dataset
/// entirely. Structural problems (width mismatches, duplicate segment keys,
/// label conflicts) are rejected with file and line context.
pub fn load_csv(modality_files: &[(String, PathBuf)], manifest_path: &Path) -> Result<Dataset> {
    if modality_files.is_empty() {
        return Err(TripError::Data("need at least one modality file".into()));
    }
    let manifest = read_manifest(manifest_path)?;
    let kept: Vec<&(String, PathBuf)> =
        modality_files.iter().filter(|(_, p)| p.exists()).collect();
    if kept.is_empty() {
        return Err(TripError::Data("no modality file exists on disk".into()));
    }

    let mut dims = Vec::new();
    // subject -> modality -> (segment_id -> row)
    let mut segments: BTreeMap<String, Vec<BTreeMap<u64, Vec<f64>>>> = BTreeMap::new();
    for (id, _) in &manifest {
        segments.insert(id.clone(), vec![BTreeMap::new(); kept.len()]);
    }

    for (r, (name, path)) in kept.iter().enumerate() {
        let dim = read_modality_file(name, path, r, &manifest, &mut segments)?;
        dims.push(dim);
    }

    let num_classes = manifest.iter().map(|(_, row)| row.label).max().unwrap_or(0) + 1;
    let mut subjects = Vec::new();
    for (id, row) in &manifest {
        let slots = &segments[id];
        let mut per_modality = Vec::with_capacity(kept.len());
        for (r, (name, _)) in kept.iter().enumerate() {
            if slots[r].is_empty() {
                per_modality.push(None);
            } else {
                if !row.declared.contains(name) {
                    return Err(TripError::Data(format!(
                        "{}: subject {id} has rows for {name} but the manifest does not declare it",
                        manifest_path.display()
                    )));
                }
                per_modality.push(Some(slots[r].values().cloned().collect()));
            }
        }
        subjects.push(SubjectRecord { subject_id: id.clone(), label: row.label, segments: per_modality });
    }

    let dataset = Dataset {
        modality_names: kept.iter().map(|(n, _)| n.clone()).collect(),
        modality_dims: dims,
        num_classes,
        subjects,
    };
    dataset.validate()?;
    Ok(dataset)
}

fn read_manifest(path: &Path) -> Result<Vec<(String, ManifestRow)>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| TripError::Data(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| TripError::Data(format!("{}: {e}", path.display())))?;
    let expected = ["subject_id", "label", "modalities_present"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(TripError::Data(format!(
            "{}: manifest header must be {}",
            path.display(),
            expected.join(",")
        )));
    }
    let mut rows: Vec<(String, ManifestRow)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| TripError::Data(format!("{}: {e}", path.display())))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let id = record.get(0).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(TripError::Data(format!(
                "{} line {line}: empty subject_id",
                path.display()
            )));
        }
        if rows.iter().any(|(existing, _)| *existing == id) {
            return Err(TripError::Data(format!(
                "{} line {line}: duplicate subject {id}",
                path.display()
            )));
        }
        let label: usize = record.get(1).unwrap_or("").parse().map_err(|_| {
            TripError::Data(format!("{} line {line}: bad label for subject {id}", path.display()))
        })?;
        let declared: Vec<String> = record
            .get(2)
            .unwrap_or("")
            .split(';')
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        rows.push((id, ManifestRow { label, declared }));
    }
    if rows.is_empty() {
        return Err(TripError::Data(format!("{}: manifest has no subjects", path.display())));
    }
    Ok(rows)
}

fn read_modality_file(
    name: &str,
    path: &Path,
    r: usize,
    manifest: &[(String, ManifestRow)],
    segments: &mut BTreeMap<String, Vec<BTreeMap<u64, Vec<f64>>>>,
) -> Result<usize> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| TripError::Data(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| TripError::Data(format!("{}: {e}", path.display())))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 4 || cols[0] != "subject_id" || cols[1] != "segment_id" || cols[2] != "label" {
        return Err(TripError::Data(format!(
            "{}: header must start with subject_id,segment_id,label and have at least one feature",
            path.display()
        )));
    }
    let dim = cols.len() - 3;
    for (c, col) in cols[3..].iter().enumerate() {
        if *col != format!("f{c}") {
            return Err(TripError::Data(format!(
                "{}: feature column {} named {col}, expected f{c}",
                path.display(),
                c + 3
            )));
        }
    }

    for record in reader.records() {
        let record = record.map_err(|e| TripError::Data(format!("{}: {e}", path.display())))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != dim + 3 {
            return Err(TripError::Data(format!(
                "{} line {line}: {} fields, expected {}",
                path.display(),
                record.len(),
                dim + 3
            )));
        }
        let id = record.get(0).unwrap_or("");
        let manifest_row = manifest.iter().find(|(mid, _)| mid == id).ok_or_else(|| {
            TripError::Data(format!(
                "{} line {line}: subject {id} not in manifest",
                path.display()
            ))
        })?;
        let segment_id: u64 = record.get(1).unwrap_or("").parse().map_err(|_| {
            TripError::Data(format!("{} line {line}: bad segment_id", path.display()))
        })?;
        let label: usize = record.get(2).unwrap_or("").parse().map_err(|_| {
            TripError::Data(format!("{} line {line}: bad label", path.display()))
        })?;
        if label != manifest_row.1.label {
            return Err(TripError::Data(format!(
                "{} line {line}: label {label} conflicts with manifest label {} for subject {id}",
                path.display(),
                manifest_row.1.label
            )));
        }
        let mut row = Vec::with_capacity(dim);
        for c in 0..dim {
            let raw = record.get(c + 3).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| {
                TripError::Data(format!(
                    "{} line {line}: bad float '{raw}' in column f{c}",
                    path.display()
                ))
            })?;
            row.push(v);
        }
        let slot = &mut segments.get_mut(id).expect("manifest subject")[r];
        if slot.insert(segment_id, row).is_some() {
            return Err(TripError::Data(format!(
                "{} line {line}: duplicate segment {segment_id} for subject {id} modality {name}",
                path.display()
            )));
        }
    }
    Ok(dim)
}
