//! Model serialization: a single version-stamped JSON file carrying the
//! label set, feature vocabulary, and weight tables.

use super::model::CrfModel;
use super::CrfError;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const MODEL_FORMAT: &str = "crf-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
pub(crate) struct CrfModelDto {
    format: String,
    version: u32,
    /// Tag scheme the model was trained for, when the caller records one.
    #[serde(default)]
    pub(crate) scheme: Option<String>,
    labels: Vec<String>,
    features: Vec<String>,
    emission: Vec<f64>,
    transition: Vec<f64>,
    begin: Vec<f64>,
    end: Vec<f64>,
}

impl CrfModelDto {
    pub(crate) fn from_model(model: &CrfModel, scheme: Option<&str>) -> CrfModelDto {
        CrfModelDto {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            scheme: scheme.map(str::to_string),
            labels: model.labels().to_vec(),
            features: model.features().to_vec(),
            emission: model.emission.clone(),
            transition: model.transition.clone(),
            begin: model.begin.clone(),
            end: model.end.clone(),
        }
    }

    pub(crate) fn into_model(self, path: &Path) -> Result<(CrfModel, Option<String>), CrfError> {
        if self.format != MODEL_FORMAT {
            return Err(CrfError::BadFormat {
                path: path.to_path_buf(),
                expected: MODEL_FORMAT.to_string(),
                found: self.format,
            });
        }
        if self.version != MODEL_VERSION {
            return Err(CrfError::BadVersion {
                path: path.to_path_buf(),
                found: self.version,
            });
        }
        let model = CrfModel::from_parts(
            self.labels,
            self.features,
            self.emission,
            self.transition,
            self.begin,
            self.end,
        )?;
        Ok((model, self.scheme))
    }
}

/// Writes the model, recording an optional tag scheme for consumers.
pub fn save_model(path: &Path, model: &CrfModel, scheme: Option<&str>) -> Result<(), CrfError> {
    let dto = CrfModelDto::from_model(model, scheme);
    let json = serde_json::to_string(&dto).map_err(|source| CrfError::Serde {
        path: path.to_path_buf(),
        source,
    })?;
    std::fs::write(path, json).map_err(|source| CrfError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a model file, returning the model and the recorded tag scheme.
pub fn load_model(path: &Path) -> Result<(CrfModel, Option<String>), CrfError> {
    let text = std::fs::read_to_string(path).map_err(|source| CrfError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let dto: CrfModelDto = serde_json::from_str(&text).map_err(|source| CrfError::Serde {
        path: path.to_path_buf(),
        source,
    })?;
    dto.into_model(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn round_trip_preserves_model() {
        let model = CrfModel::from_parts(
            vec!["O".into(), "B-short".into()],
            vec!["w.lower=hmm".into()],
            vec![0.25, -1.5],
            vec![0.0, 0.5, -0.5, 1.0],
            vec![0.1, 0.2],
            vec![-0.1, -0.2],
        )
        .unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&path, &model, Some("bioless")).unwrap();
        let (loaded, scheme) = load_model(&path).unwrap();
        assert_eq!(loaded, model);
        assert_eq!(scheme.as_deref(), Some("bioless"));
    }

    #[test]
    fn rejects_wrong_format() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        std::fs::write(
            &path,
            r#"{"format": "other", "version": 1, "labels": ["O"], "features": [],
                "emission": [], "transition": [0.0], "begin": [0.0], "end": [0.0]}"#,
        )
        .unwrap();
        assert!(matches!(
            load_model(&path),
            Err(CrfError::BadFormat { .. })
        ));
    }

    #[test]
    fn rejects_inconsistent_dimensions() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        std::fs::write(
            &path,
            r#"{"format": "crf-model", "version": 1, "labels": ["O", "B-short"],
                "features": ["f"], "emission": [0.0], "transition": [0.0, 0.0, 0.0, 0.0],
                "begin": [0.0, 0.0], "end": [0.0, 0.0]}"#,
        )
        .unwrap();
        assert!(matches!(
            load_model(&path),
            Err(CrfError::DimensionMismatch(_))
        ));
    }
}
