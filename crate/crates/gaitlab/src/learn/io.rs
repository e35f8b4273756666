//! Binary model container.
//!
//! Layout: magic `GLM1`, kind tag byte, a length-prefixed key=value text
//! block (spec, feature names, scaler flag), a length-prefixed payload of
//! little-endian f64 words (scaler statistics and fitted state), and a
//! trailing CRC-32 over everything before it. Numbers round-trip bitwise.

use super::tree::{Node, Tree};
use super::{LearnError, Model, ModelSpec, ModelState};
use crate::dataset::Scaler;
use crate::telemetry::Label;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"GLM1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelIoError {
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model file version {found:?}")]
    VersionMismatch { found: String },
    #[error("model file failed its checksum")]
    ChecksumMismatch,
    #[error("model file is truncated")]
    Truncated,
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Spec(#[from] LearnError),
}

/// CRC-32 (IEEE 802.3, reflected, init and xorout all-ones).
pub(crate) fn crc32(bytes: &[u8]) -> u32 {
    let mut crc: u32 = 0xFFFF_FFFF;
    for &b in bytes {
        crc ^= b as u32;
        for _ in 0..8 {
            let mask = (crc & 1).wrapping_neg();
            crc = (crc >> 1) ^ (0xEDB8_8320 & mask);
        }
    }
    !crc
}

fn kind_tag(spec: &ModelSpec) -> u8 {
    match spec {
        ModelSpec::Knn { .. } => 1,
        ModelSpec::Logistic { .. } => 2,
        ModelSpec::LinearSvm { .. } => 3,
        ModelSpec::RandomForest { .. } => 4,
        ModelSpec::BoostedTrees { .. } => 5,
    }
}

struct WordWriter {
    words: Vec<f64>,
}

impl WordWriter {
    fn push(&mut self, v: f64) {
        self.words.push(v);
    }

    fn push_count(&mut self, v: usize) {
        self.words.push(v as f64);
    }

    fn push_tree(&mut self, tree: &Tree) {
        self.push_count(tree.nodes.len());
        for node in &tree.nodes {
            match node {
                Node::Leaf { value } => {
                    self.push(0.0);
                    self.push(*value);
                    self.push(0.0);
                    self.push(0.0);
                    self.push(0.0);
                }
                Node::Split { feature, threshold, left, right } => {
                    self.push(1.0);
                    self.push(*feature as f64);
                    self.push(*threshold);
                    self.push(*left as f64);
                    self.push(*right as f64);
                }
            }
        }
    }
}

struct WordReader<'a> {
    words: &'a [f64],
    at: usize,
}

impl WordReader<'_> {
    fn take(&mut self) -> Result<f64, ModelIoError> {
        let v = self.words.get(self.at).copied().ok_or(ModelIoError::Truncated)?;
        self.at += 1;
        Ok(v)
    }

    fn take_count(&mut self) -> Result<usize, ModelIoError> {
        let v = self.take()?;
        if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
            return Err(ModelIoError::Malformed(format!("bad count {v}")));
        }
        Ok(v as usize)
    }

    fn take_vec(&mut self, n: usize) -> Result<Vec<f64>, ModelIoError> {
        (0..n).map(|_| self.take()).collect()
    }

    fn take_tree(&mut self) -> Result<Tree, ModelIoError> {
        let n_nodes = self.take_count()?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let tag = self.take()?;
            let a = self.take()?;
            let b = self.take()?;
            let c = self.take()?;
            let d = self.take()?;
            nodes.push(if tag == 0.0 {
                Node::Leaf { value: a }
            } else if tag == 1.0 {
                let feature = a as usize;
                let (left, right) = (c as usize, d as usize);
                if left >= n_nodes || right >= n_nodes {
                    return Err(ModelIoError::Malformed("tree child out of range".into()));
                }
                Node::Split { feature, threshold: b, left, right }
            } else {
                return Err(ModelIoError::Malformed(format!("bad node tag {tag}")));
            });
        }
        if nodes.is_empty() {
            return Err(ModelIoError::Malformed("empty tree".into()));
        }
        Ok(Tree { nodes })
    }
}

/// Serialize a fitted model. The result is deterministic for a given model.
pub fn save_model(model: &Model) -> Vec<u8> {
    let mut spec_block = String::new();
    spec_block.push_str(&format!("kind={}\n", model.spec.kind_name()));
    for (k, v) in model.spec.to_kv() {
        spec_block.push_str(&format!("{k}={v}\n"));
    }
    spec_block.push_str(&format!("features={}\n", model.feature_names.join(",")));
    spec_block.push_str(&format!("scaler={}\n", u8::from(model.scaler.is_some())));

    let mut w = WordWriter { words: Vec::new() };
    if let Some(s) = &model.scaler {
        w.push_count(s.means.len());
        for &m in &s.means {
            w.push(m);
        }
        for &sd in &s.stds {
            w.push(sd);
        }
        w.push_count(s.fit_rows.len());
        for &r in &s.fit_rows {
            w.push_count(r);
        }
    }
    match &model.state {
        ModelState::Knn { x, y } => {
            w.push_count(x.len());
            w.push_count(x.first().map_or(0, Vec::len));
            for row in x {
                for &v in row {
                    w.push(v);
                }
            }
            for l in y {
                w.push(l.as_f64());
            }
        }
        ModelState::Linear { weights, bias } => {
            w.push_count(weights.len());
            for &v in weights {
                w.push(v);
            }
            w.push(*bias);
        }
        ModelState::Forest { trees } | ModelState::Boost { trees } => {
            w.push_count(trees.len());
            for tree in trees {
                w.push_tree(tree);
            }
        }
    }

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(kind_tag(&model.spec));
    out.extend_from_slice(&(spec_block.len() as u32).to_le_bytes());
    out.extend_from_slice(spec_block.as_bytes());
    out.extend_from_slice(&(w.words.len() as u32 * 8).to_le_bytes());
    for v in &w.words {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32, ModelIoError> {
    let slice = bytes.get(at..at + 4).ok_or(ModelIoError::Truncated)?;
    Ok(u32::from_le_bytes(slice.try_into().unwrap()))
}

/// Deserialize a model file. The checksum is verified before anything else
/// is trusted, so any truncation or corruption surfaces as
/// `ChecksumMismatch`.
pub fn load_model(bytes: &[u8]) -> Result<Model, ModelIoError> {
    if bytes.len() < 8 {
        return Err(ModelIoError::Truncated);
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    if crc32(body) != stored {
        return Err(ModelIoError::ChecksumMismatch);
    }
    if body.len() < MAGIC.len() + 1 + 4 + 4 {
        return Err(ModelIoError::Truncated);
    }
    if &body[..4] != MAGIC {
        if &body[..3] == b"GLM" {
            return Err(ModelIoError::VersionMismatch {
                found: String::from_utf8_lossy(&body[..4]).into_owned(),
            });
        }
        return Err(ModelIoError::BadMagic);
    }

    let tag = body[4];
    let spec_len = read_u32(body, 5)? as usize;
    let spec_start = 9;
    let spec_end = spec_start + spec_len;
    let spec_bytes = body.get(spec_start..spec_end).ok_or(ModelIoError::Truncated)?;
    let spec_text = std::str::from_utf8(spec_bytes)
        .map_err(|_| ModelIoError::Malformed("spec block is not utf-8".into()))?;

    let mut kind = None;
    let mut features: Option<Vec<String>> = None;
    let mut has_scaler = None;
    let mut pairs: Vec<(String, String)> = Vec::new();
    for line in spec_text.lines() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ModelIoError::Malformed(format!("bad spec line {line:?}")))?;
        match k {
            "kind" => kind = Some(v.to_string()),
            "features" => {
                features = Some(if v.is_empty() {
                    Vec::new()
                } else {
                    v.split(',').map(str::to_string).collect()
                })
            }
            "scaler" => {
                has_scaler = Some(match v {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(ModelIoError::Malformed(format!("bad scaler flag {other:?}")))
                    }
                })
            }
            _ => pairs.push((k.to_string(), v.to_string())),
        }
    }
    let kind = kind.ok_or_else(|| ModelIoError::Malformed("missing kind".into()))?;
    let feature_names =
        features.ok_or_else(|| ModelIoError::Malformed("missing features".into()))?;
    let has_scaler = has_scaler.ok_or_else(|| ModelIoError::Malformed("missing scaler".into()))?;
    let spec = ModelSpec::from_kv(&kind, &pairs)?;
    if kind_tag(&spec) != tag {
        return Err(ModelIoError::Malformed(format!(
            "kind tag {tag} does not match spec kind {kind}"
        )));
    }

    let payload_len = read_u32(body, spec_end)? as usize;
    let payload_start = spec_end + 4;
    let payload =
        body.get(payload_start..payload_start + payload_len).ok_or(ModelIoError::Truncated)?;
    if payload_start + payload_len != body.len() {
        return Err(ModelIoError::Malformed("trailing bytes after payload".into()));
    }
    if payload.len() % 8 != 0 {
        return Err(ModelIoError::Malformed("payload is not whole f64 words".into()));
    }
    let words: Vec<f64> =
        payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let mut r = WordReader { words: &words, at: 0 };

    let scaler = if has_scaler {
        let d = r.take_count()?;
        let means = r.take_vec(d)?;
        let stds = r.take_vec(d)?;
        let n_fit = r.take_count()?;
        let fit_rows: Vec<usize> =
            (0..n_fit).map(|_| r.take_count()).collect::<Result<_, _>>()?;
        Some(Scaler { feature_names: feature_names.clone(), means, stds, fit_rows })
    } else {
        None
    };

    let state = match spec {
        ModelSpec::Knn { .. } => {
            let n = r.take_count()?;
            let d = r.take_count()?;
            let mut x = Vec::with_capacity(n);
            for _ in 0..n {
                x.push(r.take_vec(d)?);
            }
            let y: Vec<Label> = (0..n)
                .map(|_| {
                    let v = r.take()?;
                    Label::from_u8(v as u8)
                        .filter(|_| v == 0.0 || v == 1.0)
                        .ok_or_else(|| ModelIoError::Malformed(format!("bad label {v}")))
                })
                .collect::<Result<_, _>>()?;
            ModelState::Knn { x, y }
        }
        ModelSpec::Logistic { .. } | ModelSpec::LinearSvm { .. } => {
            let d = r.take_count()?;
            let weights = r.take_vec(d)?;
            let bias = r.take()?;
            ModelState::Linear { weights, bias }
        }
        ModelSpec::RandomForest { .. } | ModelSpec::BoostedTrees { .. } => {
            let n_trees = r.take_count()?;
            let trees: Vec<Tree> =
                (0..n_trees).map(|_| r.take_tree()).collect::<Result<_, _>>()?;
            if matches!(spec, ModelSpec::RandomForest { .. }) {
                ModelState::Forest { trees }
            } else {
                ModelState::Boost { trees }
            }
        }
    };
    if r.at != words.len() {
        return Err(ModelIoError::Malformed("payload longer than its contents".into()));
    }

    Ok(Model { spec, feature_names, scaler, state })
}

#[cfg(test)]
mod tests {
    use super::super::testutil::separable;
    use super::super::{fit, ModelSpec};
    use super::*;
    use crate::dataset::standardize;

    #[test]
    fn crc32_known_vector() {
        assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
        assert_eq!(crc32(b""), 0);
    }

    fn all_kinds() -> Vec<ModelSpec> {
        vec![
            ModelSpec::default_knn(),
            ModelSpec::default_logistic(),
            ModelSpec::default_linear_svm(),
            ModelSpec::default_random_forest(),
            ModelSpec::default_boosted_trees(),
        ]
    }

    #[test]
    fn round_trip_preserves_predictions_bitwise() {
        let raw = separable(10);
        let (train, _) = standardize(&raw);
        let probes: Vec<Vec<f64>> = raw.x.iter().take(8).cloned().collect();
        for spec in all_kinds() {
            let model = fit(&spec, &train).unwrap();
            let bytes = save_model(&model);
            let loaded = load_model(&bytes).unwrap();
            assert_eq!(loaded, model, "{spec} state changed in flight");
            for probe in &probes {
                let (la, sa) = model.predict_row(probe).unwrap();
                let (lb, sb) = loaded.predict_row(probe).unwrap();
                assert_eq!(la, lb);
                assert_eq!(sa.to_bits(), sb.to_bits(), "{spec} score drifted");
            }
        }
    }

    #[test]
    fn save_is_deterministic() {
        let raw = separable(6);
        let (train, _) = standardize(&raw);
        let model = fit(&ModelSpec::default_random_forest(), &train).unwrap();
        assert_eq!(save_model(&model), save_model(&model));
    }

    #[test]
    fn truncation_fails_the_checksum() {
        let raw = separable(6);
        let (train, _) = standardize(&raw);
        let model = fit(&ModelSpec::default_knn(), &train).unwrap();
        let bytes = save_model(&model);
        for cut in [bytes.len() - 1, bytes.len() - 9, bytes.len() / 2, 16] {
            let err = load_model(&bytes[..cut]).unwrap_err();
            assert_eq!(err, ModelIoError::ChecksumMismatch, "cut at {cut}");
        }
        // below the minimum frame there is no checksum to check
        assert_eq!(load_model(&bytes[..5]).unwrap_err(), ModelIoError::Truncated);
    }

    #[test]
    fn corruption_fails_the_checksum() {
        let raw = separable(6);
        let (train, _) = standardize(&raw);
        let model = fit(&ModelSpec::default_logistic(), &train).unwrap();
        let mut bytes = save_model(&model);
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert_eq!(load_model(&bytes).unwrap_err(), ModelIoError::ChecksumMismatch);
    }

    #[test]
    fn future_version_is_rejected() {
        let raw = separable(6);
        let (train, _) = standardize(&raw);
        let model = fit(&ModelSpec::default_knn(), &train).unwrap();
        let mut bytes = save_model(&model);
        bytes[3] = b'2'; // pretend GLM2
        let crc = crc32(&bytes[..bytes.len() - 4]);
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
        assert_eq!(
            load_model(&bytes).unwrap_err(),
            ModelIoError::VersionMismatch { found: "GLM2".into() }
        );
    }

    #[test]
    fn foreign_file_is_rejected() {
        let mut bytes = b"PK\x03\x04 definitely a zip file padding padding".to_vec();
        let crc = crc32(&bytes);
        bytes.extend_from_slice(&crc.to_le_bytes());
        assert_eq!(load_model(&bytes).unwrap_err(), ModelIoError::BadMagic);
    }

    #[test]
    fn scaler_round_trips_exactly() {
        let raw = separable(7);
        let (train, scaler) = standardize(&raw);
        let model = fit(&ModelSpec::default_knn(), &train).unwrap();
        let loaded = load_model(&save_model(&model)).unwrap();
        assert_eq!(loaded.scaler.as_ref(), Some(&scaler));
        assert_eq!(loaded.scaler.as_ref().unwrap().fit_rows, train.row_ids);
    }
}
