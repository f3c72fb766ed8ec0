//! Trained weights in a neutral on-disk format.
//!
//! An archive is a directory holding `manifest.json` and one raw blob per
//! layer:
//!
//! ```text
//! manifest.json  {"layers": [{"name": "conv1", "kind": "conv", "shape": [16, 3, 3, 3], "file": "conv1.bin"}, ...]}
//! conv1.bin      row-major little-endian f32, no header, 4 * product(shape) bytes
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Dense,
    Conv,
    Bias,
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub kind: LayerKind,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Layer {
    pub fn new(
        name: impl Into<String>,
        kind: LayerKind,
        shape: Vec<usize>,
        data: Vec<f32>,
    ) -> Self {
        Layer {
            name: name.into(),
            kind,
            shape,
            data,
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    /// The layer as a matrix: first dimension by the product of the rest.
    ///
    /// A conv kernel `[out, in, kh, kw]` becomes `out × (in·kh·kw)`.
    pub fn matrix_dims(&self) -> (usize, usize) {
        match self.shape.split_first() {
            Some((&rows, rest)) => (rows, rest.iter().product()),
            None => (1, 1),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorArchive {
    pub layers: Vec<Layer>,
}

#[derive(Serialize, Deserialize)]
struct ArchiveManifest {
    layers: Vec<LayerEntry>,
}

#[derive(Serialize, Deserialize)]
struct LayerEntry {
    name: String,
    kind: LayerKind,
    shape: Vec<usize>,
    file: String,
}

impl TensorArchive {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let archive = TensorArchive { layers };
        archive.validate(Path::new(""))?;
        Ok(archive)
    }

    fn validate(&self, dir: &Path) -> Result<()> {
        for layer in &self.layers {
            if layer.data.len() != layer.numel() {
                return Err(Error::Archive {
                    path: dir.to_path_buf(),
                    message: format!(
                        "layer {:?} has {} values for shape {:?}",
                        layer.name,
                        layer.data.len(),
                        layer.shape
                    ),
                });
            }
            if let Some(i) = layer.data.iter().position(|v| !v.is_finite()) {
                return Err(Error::Layer {
                    layer: layer.name.clone(),
                    message: format!("non-finite value at element {i}"),
                });
            }
        }
        Ok(())
    }

    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest_path = dir.join("manifest.json");
        let bytes = std::fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: ArchiveManifest = serde_json::from_slice(&bytes)?;
        let mut layers = Vec::with_capacity(manifest.layers.len());
        for entry in manifest.layers {
            let path = dir.join(&entry.file);
            let raw = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let numel = entry
                .shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| archive_err(&path, format!("shape {:?} overflows", entry.shape)))?;
            if raw.len() != numel * 4 {
                return Err(archive_err(
                    &path,
                    format!(
                        "layer {:?}: {} bytes but shape {:?} needs {}",
                        entry.name,
                        raw.len(),
                        entry.shape,
                        numel * 4
                    ),
                ));
            }
            let data = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            layers.push(Layer {
                name: entry.name,
                kind: entry.kind,
                shape: entry.shape,
                data,
            });
        }
        let archive = TensorArchive { layers };
        archive.validate(dir)?;
        Ok(archive)
    }

    /// Writes the archive, one `<index>_<name>.bin` per layer.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut entries = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let file = format!("{i:03}_{}.bin", sanitize(&layer.name));
            let bytes: Vec<u8> = layer.data.iter().flat_map(|v| v.to_le_bytes()).collect();
            let path = dir.join(&file);
            std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            entries.push(LayerEntry {
                name: layer.name.clone(),
                kind: layer.kind,
                shape: layer.shape.clone(),
                file,
            });
        }
        let path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&ArchiveManifest { layers: entries })?;
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }
}

fn archive_err(path: &Path, message: String) -> Error {
    Error::Archive {
        path: PathBuf::from(path),
        message,
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_layer_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let archive = TensorArchive::new(vec![Layer::new(
            "fc/kernel:0",
            LayerKind::Dense,
            vec![2, 2],
            vec![1.0, 0.0, 0.0, 1.0],
        )])
        .unwrap();
        archive.write(dir.path()).unwrap();
        let back = TensorArchive::read(dir.path()).unwrap();
        assert_eq!(back, archive);
        assert_eq!(back.layers[0].data.len(), 4);
    }

    #[test]
    fn byte_length_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("manifest.json"),
            r#"{"layers":[{"name":"w","kind":"dense","shape":[2,2],"file":"w.bin"}]}"#,
        )
        .unwrap();
        std::fs::write(dir.path().join("w.bin"), [0u8; 12]).unwrap();
        let err = TensorArchive::read(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Archive { .. }), "{err}");
        assert!(err.to_string().contains("16"), "{err}");
    }

    #[test]
    fn nan_names_layer() {
        let dir = tempfile::tempdir().unwrap();
        let mut layer = Layer::new("bad", LayerKind::Conv, vec![1, 2], vec![0.5, 0.5]);
        TensorArchive::new(vec![layer.clone()]).unwrap();
        layer.data[1] = f32::NAN;
        // Bypass validation to put a NaN on disk.
        TensorArchive {
            layers: vec![layer],
        }
        .write(dir.path())
        .unwrap();
        match TensorArchive::read(dir.path()).unwrap_err() {
            Error::Layer { layer, .. } => assert_eq!(layer, "bad"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("manifest.json"),
            r#"{"layers":[{"name":"w","kind":"dense","shape":[1],"file":"gone.bin"}]}"#,
        )
        .unwrap();
        assert!(matches!(
            TensorArchive::read(dir.path()),
            Err(Error::Io { .. })
        ));
        assert!(matches!(
            TensorArchive::read(dir.path().join("nowhere")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn matrix_view() {
        let l = Layer::new("c", LayerKind::Conv, vec![16, 3, 3, 3], vec![0.0; 432]);
        assert_eq!(l.matrix_dims(), (16, 27));
        let b = Layer::new("b", LayerKind::Bias, vec![10], vec![0.0; 10]);
        assert_eq!(b.matrix_dims(), (10, 1));
    }
}
