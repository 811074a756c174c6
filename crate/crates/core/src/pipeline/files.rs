use std::path::{Path, PathBuf};

use crate::dataset::load_dataset;
use crate::error::{Error, Result};
use crate::graph::{load_graph, Dag};
use crate::scl::TrainingSet;
use crate::table::{read_numeric_csv, write_csv};

/// Writes a real `d x d` matrix as headerless CSV.
pub fn save_score_matrix(m: &[Vec<f64>], path: &Path) -> Result<()> {
    write_csv(path, None, m)
}

/// Reads a square real matrix written by [`save_score_matrix`].
pub fn load_score_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    let rows = read_numeric_csv(path, false)?.rows;
    if rows.iter().any(|r| r.len() != rows.len()) {
        return Err(Error::Input(format!("{}: score matrix is not square", path.display())));
    }
    Ok(rows)
}

fn sorted_files(dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.starts_with(prefix) && name.ends_with(".csv") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Loads every `graph_*.csv` in `dir`, in file-name order.
pub fn load_graph_dir(dir: &Path) -> Result<Vec<Dag>> {
    let graphs = sorted_files(dir, "graph_")?
        .iter()
        .map(|p| load_graph(p))
        .collect::<Result<Vec<_>>>()?;
    if graphs.is_empty() {
        return Err(Error::Input(format!("{}: no graph_*.csv files", dir.display())));
    }
    Ok(graphs)
}

/// Loads the `data_NNNN.csv` / `graph_NNNN.csv` pairs written by
/// [`TrainingSet::save`].
pub fn load_training_set(dir: &Path) -> Result<TrainingSet> {
    let mut pairs = Vec::new();
    for data_path in sorted_files(dir, "data_")? {
        let name = data_path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let graph_path = dir.join(name.replacen("data_", "graph_", 1));
        pairs.push((load_dataset(&data_path)?, load_graph(&graph_path)?));
    }
    TrainingSet::from_pairs(pairs).map_err(|e| Error::Input(format!("{}: {e}", dir.display())))
}
