//! Dataset manifests: a CSV with columns `path,scene_label`. Abstract labels
//! are always derived through the taxonomy, never read from disk. Rows may
//! point at WAV files (run through the mel pipeline) or at CSV feature grids
//! (loaded directly).

use super::{load_wav, melspectrogram, Dataset, MelConfig};
use crate::error::{Error, Result};
use crate::export::read_grid_csv;
use crate::multitask::{LabelPair, SceneLabel};
use std::path::{Path, PathBuf};

pub fn write_manifest(path: impl AsRef<Path>, rows: &[(PathBuf, SceneLabel)]) -> Result<()> {
    let mut out = String::from("path,scene_label\n");
    for (p, label) in rows {
        out.push_str(&format!("{},{}\n", p.display(), label));
    }
    std::fs::write(path.as_ref(), out)?;
    Ok(())
}

/// Parse a manifest; relative paths resolve against the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<(PathBuf, SceneLabel)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut rows = Vec::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "path,scene_label" => {}
        Some((_, header)) => {
            return Err(Error::parse(format!(
                "{}: expected header `path,scene_label`, found `{header}`",
                path.display()
            )));
        }
        None => return Err(Error::parse(format!("{}: empty manifest", path.display()))),
    }
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (file, label) = line.rsplit_once(',').ok_or_else(|| {
            Error::parse(format!(
                "{}: line {}: missing comma",
                path.display(),
                ln + 1
            ))
        })?;
        let scene: SceneLabel = label.trim().parse()?;
        let file = PathBuf::from(file.trim());
        let resolved = if file.is_absolute() {
            file
        } else {
            base.join(file)
        };
        rows.push((resolved, scene));
    }
    if rows.is_empty() {
        return Err(Error::validation(format!(
            "{}: manifest has no rows",
            path.display()
        )));
    }
    Ok(rows)
}

/// Load every manifest row into a feature map. WAVs run through the mel
/// pipeline with `mel_cfg`; `.csv` rows are feature grids loaded as-is.
pub fn load_dataset(path: impl AsRef<Path>, mel_cfg: &MelConfig) -> Result<Dataset> {
    let rows = load_manifest(path)?;
    let mut out = Vec::with_capacity(rows.len());
    for (file, scene) in rows {
        let ext = file.extension().and_then(|e| e.to_str()).unwrap_or("");
        let fm = match ext.to_ascii_lowercase().as_str() {
            "wav" => melspectrogram(&load_wav(&file)?, mel_cfg)?,
            "csv" => read_grid_csv(&file)?,
            other => {
                return Err(Error::validation(format!(
                    "{}: unsupported data extension `{other}` (expected wav or csv)",
                    file.display()
                )));
            }
        };
        out.push((fm, LabelPair::new(scene)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::export::write_grid_csv;
    use crate::tensor::FeatureMap;

    fn tmpdir(tag: &str) -> PathBuf {
        let dir =
            std::env::temp_dir().join(format!("amfm_manifest_test_{}_{tag}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn manifest_round_trip_and_csv_loading() {
        let dir = tmpdir("rt");
        let mut rng = crate::rng::SeededRng::new(72);
        let fm = FeatureMap::randn(1, 1, 4, 4, 1.0, &mut rng);
        write_grid_csv(dir.join("clip0.csv"), &fm, 0, 0).unwrap();
        write_manifest(
            dir.join("manifest.csv"),
            &[(PathBuf::from("clip0.csv"), SceneLabel::Park)],
        )
        .unwrap();
        let data = load_dataset(dir.join("manifest.csv"), &MelConfig::default()).unwrap();
        assert_eq!(data.len(), 1);
        assert_eq!(data[0].0.data(), fm.data());
        assert_eq!(data[0].1, LabelPair::new(SceneLabel::Park));
    }

    #[test]
    fn unknown_scene_string_is_rejected() {
        let dir = tmpdir("badlabel");
        std::fs::write(dir.join("m.csv"), "path,scene_label\nx.csv,volcano\n").unwrap();
        assert!(matches!(
            load_manifest(dir.join("m.csv")),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn bad_header_is_rejected() {
        let dir = tmpdir("badheader");
        std::fs::write(dir.join("m.csv"), "file,label\nx.csv,park\n").unwrap();
        assert!(matches!(
            load_manifest(dir.join("m.csv")),
            Err(Error::Parse(_))
        ));
    }
}
