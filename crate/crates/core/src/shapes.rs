//! Target shapes and the JSON shape-file format
//! (`{"name": ..., "cubes": [[x, y], ...]}`).

use crate::geometry::CellCoord;
use crate::sim::{Ensemble, EnsembleError};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ShapeError {
    #[error("reading shape file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing shape file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("shape {name:?} is not a valid ensemble: {source}")]
    Invalid { name: String, source: EnsembleError },
    #[error("unknown built-in shape {0:?} (known: line, table, chair, sun-shield)")]
    UnknownBuiltin(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct ShapeFile {
    name: String,
    cubes: Vec<[i32; 2]>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetShape {
    pub name: String,
    pub cells: Vec<CellCoord>,
}

const BUILTIN: [(&str, &str); 4] = [
    ("line", include_str!("../shapes/line.json")),
    ("table", include_str!("../shapes/table.json")),
    ("chair", include_str!("../shapes/chair.json")),
    ("sun-shield", include_str!("../shapes/sun-shield.json")),
];

impl TargetShape {
    pub fn new(name: impl Into<String>, cells: Vec<CellCoord>) -> Result<Self, ShapeError> {
        let name = name.into();
        Ensemble::new(cells.clone()).map_err(|source| ShapeError::Invalid {
            name: name.clone(),
            source,
        })?;
        Ok(Self { name, cells })
    }

    pub fn from_json(text: &str) -> Result<Self, ShapeError> {
        let file: ShapeFile = serde_json::from_str(text)?;
        Self::new(
            file.name,
            file.cubes
                .into_iter()
                .map(|[x, y]| CellCoord::new(x, y))
                .collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self, ShapeError> {
        let text = std::fs::read_to_string(path).map_err(|source| ShapeError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let file = ShapeFile {
            name: self.name.clone(),
            cubes: self.cells.iter().map(|c| [c.x, c.y]).collect(),
        };
        serde_json::to_string(&file).expect("shape serialises")
    }

    pub fn builtin(name: &str) -> Result<Self, ShapeError> {
        let (_, text) = BUILTIN
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| ShapeError::UnknownBuiltin(name.to_string()))?;
        Self::from_json(text)
    }

    /// A built-in name or a path to a shape file.
    pub fn resolve(spec: &str) -> Result<Self, ShapeError> {
        match Self::builtin(spec) {
            Err(ShapeError::UnknownBuiltin(_)) => Self::load(Path::new(spec)),
            other => other,
        }
    }

    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN.iter().map(|(n, _)| *n)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Maximum attainable overlap: the number of cubes.
    pub fn max_overlap(&self) -> usize {
        self.cells.len()
    }

    /// The shape as an ensemble, cube `i` at `cells[i]`.
    pub fn ensemble(&self) -> Ensemble {
        Ensemble::new(self.cells.clone()).expect("validated at construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::brute_force_connected;

    #[test]
    fn builtins_load_with_expected_sizes() {
        let sizes: Vec<_> = TargetShape::builtin_names()
            .map(|n| (n, TargetShape::builtin(n).unwrap().len()))
            .collect();
        assert_eq!(
            sizes,
            vec![("line", 9), ("table", 9), ("chair", 9), ("sun-shield", 11)]
        );
        for n in TargetShape::builtin_names() {
            assert!(brute_force_connected(
                &TargetShape::builtin(n).unwrap().cells
            ));
        }
    }

    #[test]
    fn loader_rejects_invalid_shapes() {
        assert!(matches!(
            TargetShape::from_json(r#"{"name":"gap","cubes":[[0,0],[2,0]]}"#),
            Err(ShapeError::Invalid { .. })
        ));
        assert!(matches!(
            TargetShape::from_json(r#"{"name":"dup","cubes":[[0,0],[0,0]]}"#),
            Err(ShapeError::Invalid { .. })
        ));
        assert!(matches!(
            TargetShape::from_json("{"),
            Err(ShapeError::Json(_))
        ));
        assert!(matches!(
            TargetShape::builtin("teapot"),
            Err(ShapeError::UnknownBuiltin(_))
        ));
    }

    #[test]
    fn json_round_trip_and_file_loading() {
        let chair = TargetShape::builtin("chair").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chair.json");
        std::fs::write(&path, chair.to_json()).unwrap();
        assert_eq!(TargetShape::resolve(path.to_str().unwrap()).unwrap(), chair);
    }
}
