//! Labeled manifests: UTF-8 CSV with a header row, either `path,true_label`
//! (images to classify) or `true_label,pred_label` (precomputed predictions).

use std::path::{Path, PathBuf};

use reflect_core::domain::EmotionLabel;

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("cannot read manifest: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("header must be `path,true_label` or `true_label,pred_label`, got `{0}`")]
    UnknownHeader(String),
    #[error("row {row}: unknown label `{value}`")]
    InvalidLabel { row: usize, value: String },
    #[error("row {row}: image `{path}` does not exist")]
    MissingImage { row: usize, path: PathBuf },
    #[error("manifest has no rows")]
    EmptyManifest,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LabeledManifest {
    /// Image paths (resolved against the manifest's directory) and true labels.
    Inference(Vec<(PathBuf, EmotionLabel)>),
    /// `(true, predicted)` pairs.
    Scoring(Vec<(EmotionLabel, EmotionLabel)>),
}

impl LabeledManifest {
    pub fn len(&self) -> usize {
        match self {
            LabeledManifest::Inference(rows) => rows.len(),
            LabeledManifest::Scoring(rows) => rows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn read(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses manifest text. Inference-mode paths are resolved against `base`
    /// and must exist.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ManifestError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_ascii_lowercase).collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let label = |row: usize, value: &str| {
            value.parse::<EmotionLabel>().map_err(|_| ManifestError::InvalidLabel { row, value: value.to_string() })
        };
        let manifest = match header.as_slice() {
            ["path", "true_label"] => {
                let mut rows = Vec::new();
                for (i, record) in reader.records().enumerate() {
                    let record = record?;
                    let row = i + 1;
                    let path = base.join(&record[0]);
                    if !path.is_file() {
                        return Err(ManifestError::MissingImage { row, path });
                    }
                    rows.push((path, label(row, &record[1])?));
                }
                LabeledManifest::Inference(rows)
            }
            ["true_label", "pred_label"] => {
                let mut rows = Vec::new();
                for (i, record) in reader.records().enumerate() {
                    let record = record?;
                    let row = i + 1;
                    rows.push((label(row, &record[0])?, label(row, &record[1])?));
                }
                LabeledManifest::Scoring(rows)
            }
            _ => return Err(ManifestError::UnknownHeader(header.join(","))),
        };
        if manifest.is_empty() {
            return Err(ManifestError::EmptyManifest);
        }
        Ok(manifest)
    }
}

/// Renders scoring-mode CSV for `pairs`.
pub fn write_scoring_csv(pairs: &[(EmotionLabel, EmotionLabel)]) -> String {
    let mut out = String::from("true_label,pred_label\n");
    for (t, p) in pairs {
        out.push_str(&format!("{t},{p}\n"));
    }
    out
}
