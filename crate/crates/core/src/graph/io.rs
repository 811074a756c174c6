use std::fs;
use std::path::Path;

use super::{Dag, EdgeList};
use crate::error::{Error, Result};
use crate::table::{read_numeric_csv, write_csv};

/// Reads a `d x d` 0/1 adjacency CSV without header.
pub fn load_graph_csv(path: &Path) -> Result<Dag> {
    let table = read_numeric_csv(path, false)?;
    let mut rows = Vec::with_capacity(table.rows.len());
    for (r, row) in table.rows.iter().enumerate() {
        let mut out = Vec::with_capacity(row.len());
        for (c, &v) in row.iter().enumerate() {
            if v != 0.0 && v != 1.0 {
                return Err(Error::Input(format!(
                    "{}: adjacency entry {v} at line {}, column {} is not 0/1",
                    path.display(),
                    r + 1,
                    c + 1
                )));
            }
            out.push(v as u8);
        }
        rows.push(out);
    }
    Dag::from_rows(&rows).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

pub fn load_graph_json(path: &Path) -> Result<Dag> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let list: EdgeList = serde_json::from_str(&text)?;
    Dag::try_from(list).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

/// Loads a graph, choosing the JSON edge-list format for `.json` files and
/// the adjacency CSV otherwise.
pub fn load_graph(path: &Path) -> Result<Dag> {
    if is_json(path) {
        load_graph_json(path)
    } else {
        load_graph_csv(path)
    }
}

pub fn save_graph_csv(dag: &Dag, path: &Path) -> Result<()> {
    write_csv(path, None, dag.to_rows())
}

pub fn save_graph_json(dag: &Dag, path: &Path) -> Result<()> {
    let text = serde_json::to_string(&EdgeList::from(dag.clone()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn save_graph(dag: &Dag, path: &Path) -> Result<()> {
    if is_json(path) {
        save_graph_json(dag, path)
    } else {
        save_graph_csv(dag, path)
    }
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Dag::from_edges(4, [(0, 1), (2, 1), (1, 3)]).unwrap();
        for name in ["g.csv", "g.json"] {
            let p = dir.path().join(name);
            save_graph(&g, &p).unwrap();
            assert_eq!(load_graph(&p).unwrap(), g);
        }
        let text = fs::read_to_string(dir.path().join("g.csv")).unwrap();
        assert_eq!(text, "0,1,0,0\n0,0,0,1\n0,1,0,0\n0,0,0,0\n");
    }

    #[test]
    fn cyclic_and_malformed_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cycle.csv");
        fs::write(&p, "0,1\n1,0\n").unwrap();
        assert!(matches!(load_graph(&p), Err(Error::Input(m)) if m.contains("cycle")));
        fs::write(&p, "0,2\n0,0\n").unwrap();
        assert!(matches!(load_graph(&p), Err(Error::Input(m)) if m.contains("line 1, column 2")));
        fs::write(&p, "0,1,0\n0,0\n").unwrap();
        assert!(load_graph(&p).is_err());
        let j = dir.path().join("cycle.json");
        fs::write(&j, r#"{"d":2,"edges":[[0,1],[1,0]]}"#).unwrap();
        assert!(load_graph(&j).is_err());
    }
}
