use std::fs;
use std::path::Path;

use super::corpus::{class_counts, ExampleInputs, LabeledSet};
use crate::autodiff::Matrix;
use crate::error::{GleeError, Result};
use crate::format::{header, FileKind, Reader};

/// Precomputed representations with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl FeatureSet {
    pub fn class_counts(&self) -> Vec<usize> {
        class_counts(&self.labels, self.num_classes)
    }

    pub fn to_labeled(&self) -> LabeledSet {
        LabeledSet {
            inputs: ExampleInputs::Features(self.features.clone()),
            labels: self.labels.clone(),
            num_classes: self.num_classes,
        }
    }
}

pub fn encode_features(set: &FeatureSet) -> Result<Vec<u8>> {
    let (n, d) = set.features.shape();
    if set.labels.len() != n {
        return Err(GleeError::dim("encode_features", format!("{n} rows, {} labels", set.labels.len())));
    }
    let mut out = header(FileKind::Features);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&(set.num_classes as u32).to_le_bytes());
    for &l in &set.labels {
        out.extend_from_slice(&(l as u32).to_le_bytes());
    }
    for v in set.features.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureSet> {
    let mut r = Reader::new(bytes);
    let kind = r.header()?;
    if kind != FileKind::Features {
        return Err(GleeError::format(6, format!("expected a feature file, found {kind:?}")));
    }
    let at = r.offset();
    let n = r.u64("example count")?;
    if n == 0 {
        return Err(GleeError::format(at, "empty dataset"));
    }
    let d = r.u32("feature width")? as usize;
    let at_c = r.offset();
    let num_classes = r.u32("class count")? as usize;
    if num_classes == 0 {
        return Err(GleeError::format(at_c, "zero classes"));
    }
    let n = usize::try_from(n).map_err(|_| GleeError::format(at, "example count too large"))?;
    let label_bytes = n
        .checked_mul(4)
        .ok_or_else(|| GleeError::format(at, "example count too large"))?;
    if r.remaining() < label_bytes {
        return Err(GleeError::format(r.offset(), "truncated class ids"));
    }
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let at = r.offset();
        let l = r.u32("class id")? as usize;
        if l >= num_classes {
            return Err(GleeError::format(at, format!("class id {l} >= {num_classes}")));
        }
        labels.push(l);
    }
    let expected = n
        .checked_mul(d)
        .and_then(|x| x.checked_mul(8))
        .ok_or_else(|| GleeError::format(at, "payload size overflows"))?;
    if r.remaining() != expected {
        return Err(GleeError::format(
            r.offset(),
            format!(
                "payload has {} bytes, header implies {expected} (n={n}, d={d})",
                r.remaining()
            ),
        ));
    }
    let data = r.f64s(n * d, "features")?;
    Ok(FeatureSet {
        features: Matrix::from_vec(n, d, data)?,
        labels,
        num_classes,
    })
}

pub fn write_features(path: &Path, set: &FeatureSet) -> Result<()> {
    let bytes = encode_features(set)?;
    fs::write(path, bytes).map_err(|e| GleeError::io(path, e))
}

pub fn ingest_features(path: &Path) -> Result<FeatureSet> {
    let bytes = fs::read(path).map_err(|e| GleeError::io(path, e))?;
    decode_features(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureSet {
        FeatureSet {
            features: Matrix::from_rows(&[vec![0.5, -1.0, 3.25], vec![1e-300, 2.0, -0.0]]).unwrap(),
            labels: vec![1, 0],
            num_classes: 3,
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let bytes = encode_features(&sample()).unwrap();
        let back = decode_features(&bytes).unwrap();
        assert_eq!(back.labels, vec![1, 0]);
        let a: Vec<u64> = back.features.data().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = sample().features.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_dataset_rejected() {
        let set = FeatureSet {
            features: Matrix::zeros(0, 3),
            labels: vec![],
            num_classes: 2,
        };
        let bytes = encode_features(&set).unwrap();
        assert!(matches!(decode_features(&bytes), Err(GleeError::Format { offset: 7, .. })));
    }

    #[test]
    fn width_mismatch_rejected() {
        let mut bytes = encode_features(&sample()).unwrap();
        // d lives at bytes 15..19
        bytes[15] = 4;
        assert!(matches!(decode_features(&bytes), Err(GleeError::Format { .. })));
    }

    #[test]
    fn bad_magic_reports_offset_zero() {
        let mut bytes = encode_features(&sample()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode_features(&bytes), Err(GleeError::Format { offset: 0, .. })));
    }
}
