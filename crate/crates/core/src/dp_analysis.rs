//! Dynamic-parameter identification: diff two parameter snapshots and select
//! the entries whose absolute change exceeds a percentile of all changes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::{write_atomic, ByteReader, ByteWriter, Fingerprint, FingerprintHasher, FormatError};

const MAGIC: &[u8; 9] = b"DYNIRSNAP";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum DpError {
    #[error("snapshots differ at group {index}: {detail}")]
    ShapeMismatch { index: usize, detail: String },
    #[error("NaN in {which} snapshot, group {group}")]
    NaN { which: &'static str, group: usize },
    #[error("percentile must lie in (0, 100), got {0}")]
    BadPercentile(f64),
    #[error("snapshot has no parameters")]
    Empty,
    #[error("unknown module kind tag {0}")]
    UnknownKind(u8),
    #[error("value {value} in group {group} is not exactly representable as f32")]
    NotF32Exact { group: usize, value: f64 },
    #[error(transparent)]
    Format(#[from] FormatError),
}

impl DpError {
    pub fn code(&self) -> &'static str {
        match self {
            DpError::ShapeMismatch { .. } => "DP_SHAPE_MISMATCH",
            DpError::NaN { .. } => "DP_NAN",
            DpError::BadPercentile(_) => "DP_BAD_PERCENTILE",
            DpError::Empty => "DP_EMPTY",
            DpError::UnknownKind(_) => "DP_UNKNOWN_KIND",
            DpError::NotF32Exact { .. } => "DP_NOT_F32",
            DpError::Format(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModuleKind {
    #[serde(rename = "FFN_FC1")]
    FfnFc1,
    #[serde(rename = "FFN_FC2")]
    FfnFc2,
    #[serde(rename = "ATTN_Q")]
    AttnQ,
    #[serde(rename = "ATTN_K")]
    AttnK,
    #[serde(rename = "ATTN_V")]
    AttnV,
    #[serde(rename = "ATTN_O")]
    AttnO,
    #[serde(rename = "OTHER")]
    Other,
}

impl ModuleKind {
    pub const ALL: [ModuleKind; 7] = [
        ModuleKind::FfnFc1,
        ModuleKind::FfnFc2,
        ModuleKind::AttnQ,
        ModuleKind::AttnK,
        ModuleKind::AttnV,
        ModuleKind::AttnO,
        ModuleKind::Other,
    ];

    pub fn tag(self) -> u8 {
        Self::ALL.iter().position(|&k| k == self).unwrap() as u8
    }

    pub fn from_tag(tag: u8) -> Result<Self, DpError> {
        Self::ALL
            .get(tag as usize)
            .copied()
            .ok_or(DpError::UnknownKind(tag))
    }

    pub fn is_ffn(self) -> bool {
        matches!(self, ModuleKind::FfnFc1 | ModuleKind::FfnFc2)
    }

    pub fn is_attention(self) -> bool {
        matches!(
            self,
            ModuleKind::AttnQ | ModuleKind::AttnK | ModuleKind::AttnV | ModuleKind::AttnO
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGroup {
    pub layer: u16,
    pub kind: ModuleKind,
    pub values: Vec<f64>,
}

/// Named parameter groups of one model checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSnapshot {
    pub groups: Vec<ParamGroup>,
    fingerprint: Fingerprint,
}

impl ParamSnapshot {
    pub fn new(groups: Vec<ParamGroup>) -> Self {
        let mut h = FingerprintHasher::new();
        for g in &groups {
            h.u64(u64::from(g.layer)).u64(u64::from(g.kind.tag()));
            h.u64(g.values.len() as u64);
            for v in &g.values {
                h.f64(*v);
            }
        }
        ParamSnapshot {
            fingerprint: h.finish(),
            groups,
        }
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn param_count(&self) -> usize {
        self.groups.iter().map(|g| g.values.len()).sum()
    }

    /// Multiplies every parameter by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        ParamSnapshot::new(
            self.groups
                .iter()
                .map(|g| ParamGroup {
                    values: g.values.iter().map(|v| v * factor).collect(),
                    ..g.clone()
                })
                .collect(),
        )
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, DpError> {
        let mut w = ByteWriter::new(MAGIC, VERSION);
        w.u32(self.groups.len() as u32);
        for g in &self.groups {
            w.u16(g.layer);
            w.u8(g.kind.tag());
            w.u64(g.values.len() as u64);
        }
        for (gi, g) in self.groups.iter().enumerate() {
            for &v in &g.values {
                let narrowed = v as f32;
                if f64::from(narrowed) != v && !v.is_nan() {
                    return Err(DpError::NotF32Exact { group: gi, value: v });
                }
            }
            let narrowed: Vec<f32> = g.values.iter().map(|&v| v as f32).collect();
            w.f32_slice_raw(&narrowed);
        }
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DpError> {
        let mut r = ByteReader::open(bytes, MAGIC, VERSION)?;
        let n = r.u32()? as usize;
        let mut dir = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let layer = r.u16()?;
            let kind = ModuleKind::from_tag(r.u8()?)?;
            let len = r.u64()? as usize;
            dir.push((layer, kind, len));
        }
        let mut groups = Vec::with_capacity(dir.len());
        for (layer, kind, len) in dir {
            let values = r.f32_vec_raw(len)?.into_iter().map(f64::from).collect();
            groups.push(ParamGroup { layer, kind, values });
        }
        r.finish()?;
        Ok(ParamSnapshot::new(groups))
    }

    /// Writes the snapshot file. Values must be exactly representable in f32.
    pub fn write(&self, path: &Path) -> Result<u64, DpError> {
        Ok(write_atomic(path, &self.to_bytes()?)?)
    }

    pub fn snapshot_from_file(path: &Path) -> Result<Self, DpError> {
        let bytes = fs::read(path).map_err(FormatError::from)?;
        Self::from_bytes(&bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCount {
    pub layer: u16,
    pub kind: ModuleKind,
    pub selected: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub kind: ModuleKind,
    pub blocks: usize,
    pub selected: usize,
    pub total: usize,
    /// Selected count averaged over the blocks holding this kind.
    pub selected_per_block: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DPReport {
    pub percentile: f64,
    pub threshold: f64,
    pub groups: Vec<GroupCount>,
    pub by_kind: Vec<KindSummary>,
    pub ffn_selected: usize,
    pub attention_selected: usize,
    pub selected: usize,
    pub total: usize,
    pub fraction_selected: f64,
}

/// Linear-interpolation percentile: the value at fractional rank
/// `p / 100 * (n - 1)` of the ascending order statistics.
pub fn percentile_linear(values: &[f64], p: f64) -> Result<f64, DpError> {
    if !(p > 0.0 && p < 100.0) {
        return Err(DpError::BadPercentile(p));
    }
    if values.is_empty() {
        return Err(DpError::Empty);
    }
    let rank = p / 100.0 * (values.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    let mut work = values.to_vec();
    let (_, &mut lo_val, upper) = work.select_nth_unstable_by(lo, f64::total_cmp);
    if frac == 0.0 || upper.is_empty() {
        return Ok(lo_val);
    }
    let hi_val = upper.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(lo_val + frac * (hi_val - lo_val))
}

fn check_comparable(a: &ParamSnapshot, b: &ParamSnapshot) -> Result<(), DpError> {
    let n = a.groups.len().max(b.groups.len());
    for i in 0..n {
        match (a.groups.get(i), b.groups.get(i)) {
            (Some(x), Some(y)) => {
                if (x.layer, x.kind, x.values.len()) != (y.layer, y.kind, y.values.len()) {
                    return Err(DpError::ShapeMismatch {
                        index: i,
                        detail: format!(
                            "layer {} {:?} len {} vs layer {} {:?} len {}",
                            x.layer,
                            x.kind,
                            x.values.len(),
                            y.layer,
                            y.kind,
                            y.values.len()
                        ),
                    });
                }
            }
            _ => {
                return Err(DpError::ShapeMismatch {
                    index: i,
                    detail: "group missing in one snapshot".into(),
                })
            }
        }
    }
    for (which, snap) in [("initial", a), ("updated", b)] {
        if let Some(group) = snap.groups.iter().position(|g| g.values.iter().any(|v| v.is_nan())) {
            return Err(DpError::NaN { which, group });
        }
    }
    Ok(())
}

/// Absolute differences over the concatenation of all groups.
pub fn abs_diffs(m_init: &ParamSnapshot, m_new: &ParamSnapshot) -> Result<Vec<f64>, DpError> {
    check_comparable(m_init, m_new)?;
    let mut d = Vec::with_capacity(m_init.param_count());
    for (x, y) in m_init.groups.iter().zip(&m_new.groups) {
        d.extend(x.values.iter().zip(&y.values).map(|(a, b)| (b - a).abs()));
    }
    if d.is_empty() {
        return Err(DpError::Empty);
    }
    Ok(d)
}

/// Threshold and flat indices of parameters whose change strictly exceeds it.
pub fn select_dynamic(m_init: &ParamSnapshot, m_new: &ParamSnapshot, percentile: f64) -> Result<(f64, Vec<usize>), DpError> {
    let d = abs_diffs(m_init, m_new)?;
    let threshold = percentile_linear(&d, percentile)?;
    let idx = d
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > threshold)
        .map(|(i, _)| i)
        .collect();
    Ok((threshold, idx))
}

pub fn diff_and_select(m_init: &ParamSnapshot, m_new: &ParamSnapshot, percentile: f64) -> Result<DPReport, DpError> {
    let d = abs_diffs(m_init, m_new)?;
    let threshold = percentile_linear(&d, percentile)?;
    let mut groups = Vec::with_capacity(m_init.groups.len());
    let mut offset = 0;
    for g in &m_init.groups {
        let len = g.values.len();
        let selected = d[offset..offset + len].iter().filter(|&&v| v > threshold).count();
        groups.push(GroupCount {
            layer: g.layer,
            kind: g.kind,
            selected,
            total: len,
        });
        offset += len;
    }
    let mut kinds: BTreeMap<ModuleKind, KindSummary> = BTreeMap::new();
    for g in &groups {
        let s = kinds.entry(g.kind).or_insert(KindSummary {
            kind: g.kind,
            blocks: 0,
            selected: 0,
            total: 0,
            selected_per_block: 0.0,
        });
        s.blocks += 1;
        s.selected += g.selected;
        s.total += g.total;
    }
    let by_kind: Vec<KindSummary> = kinds
        .into_values()
        .map(|mut s| {
            s.selected_per_block = s.selected as f64 / s.blocks as f64;
            s
        })
        .collect();
    let selected: usize = groups.iter().map(|g| g.selected).sum();
    let total = d.len();
    Ok(DPReport {
        percentile,
        threshold,
        ffn_selected: groups.iter().filter(|g| g.kind.is_ffn()).map(|g| g.selected).sum(),
        attention_selected: groups
            .iter()
            .filter(|g| g.kind.is_attention())
            .map(|g| g.selected)
            .sum(),
        groups,
        by_kind,
        selected,
        total,
        fraction_selected: selected as f64 / total as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn snap(values: Vec<f64>) -> ParamSnapshot {
        ParamSnapshot::new(vec![ParamGroup {
            layer: 0,
            kind: ModuleKind::FfnFc1,
            values,
        }])
    }

    fn sorted_percentile(values: &[f64], p: f64) -> f64 {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let rank = p / 100.0 * (v.len() - 1) as f64;
        let lo = rank.floor() as usize;
        let hi = rank.ceil() as usize;
        v[lo] + (rank - lo as f64) * (v[hi] - v[lo])
    }

    #[test]
    fn identity_selects_nothing() {
        let a = snap(vec![0.5, -1.0, 2.0, 3.0]);
        let r = diff_and_select(&a, &a, 90.0).unwrap();
        assert_eq!(r.threshold, 0.0);
        assert_eq!(r.selected, 0);
    }

    #[test]
    fn planted_hundred_of_thousand() {
        let init = snap(vec![0.0; 1000]);
        let planted: Vec<usize> = (0..100).map(|i| i * 10 + 3).collect();
        let mut new = vec![0.0; 1000];
        for &i in &planted {
            new[i] = 1.0;
        }
        let (threshold, idx) = select_dynamic(&init, &snap(new), 90.0).unwrap();
        // Fractional rank 899.1 interpolates between order statistics 0 and 1.
        assert!((threshold - 0.1).abs() < 1e-12);
        assert_eq!(idx, planted);
    }

    #[test]
    fn report_groups_and_kinds() {
        let mk = |layer, kind, v: Vec<f64>| ParamGroup { layer, kind, values: v };
        let init = ParamSnapshot::new(vec![
            mk(0, ModuleKind::FfnFc1, vec![0.0; 10]),
            mk(0, ModuleKind::AttnQ, vec![0.0; 10]),
            mk(1, ModuleKind::FfnFc1, vec![0.0; 10]),
        ]);
        let mut new = init.clone();
        new.groups[0].values[0] = 5.0;
        new.groups[0].values[1] = 4.0;
        new.groups[2].values[9] = 3.0;
        new.groups[1].values[4] = 0.5;
        let new = ParamSnapshot::new(new.groups);
        let r = diff_and_select(&init, &new, 90.0).unwrap();
        assert_eq!(r.total, 30);
        assert_eq!(r.selected, 3);
        assert_eq!(r.ffn_selected, 3);
        assert_eq!(r.attention_selected, 0);
        let ffn = r.by_kind.iter().find(|k| k.kind == ModuleKind::FfnFc1).unwrap();
        assert_eq!((ffn.blocks, ffn.selected), (2, 3));
        assert!((ffn.selected_per_block - 1.5).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let a = snap(vec![1.0, 2.0]);
        let b = snap(vec![1.0]);
        assert!(matches!(
            diff_and_select(&a, &b, 90.0),
            Err(DpError::ShapeMismatch { index: 0, .. })
        ));
        let nan = snap(vec![1.0, f64::NAN]);
        assert!(matches!(
            diff_and_select(&a, &nan, 90.0),
            Err(DpError::NaN { which: "updated", .. })
        ));
        assert!(matches!(
            diff_and_select(&a, &a, 100.0),
            Err(DpError::BadPercentile(_))
        ));
        assert!(ModuleKind::from_tag(7).is_err());
    }

    #[test]
    fn file_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.snap");
        let s = ParamSnapshot::new(vec![
            ParamGroup {
                layer: 3,
                kind: ModuleKind::AttnV,
                values: vec![0.25, -1.5, 1e-3f32 as f64],
            },
            ParamGroup {
                layer: 4,
                kind: ModuleKind::Other,
                values: vec![],
            },
        ]);
        s.write(&path).unwrap();
        let back = ParamSnapshot::snapshot_from_file(&path).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.fingerprint(), s.fingerprint());

        let inexact = snap(vec![0.1]);
        assert!(matches!(inexact.write(&path), Err(DpError::NotF32Exact { .. })));

        std::fs::write(&path, b"").unwrap();
        assert!(ParamSnapshot::snapshot_from_file(&path).is_err());

        // Unknown kind tag with a valid checksum.
        let mut w = ByteWriter::new(MAGIC, VERSION);
        w.u32(1);
        w.u16(0);
        w.u8(9);
        w.u64(0);
        assert!(matches!(
            ParamSnapshot::from_bytes(&w.finish()),
            Err(DpError::UnknownKind(9))
        ));
    }

    proptest! {
        #[test]
        fn percentile_matches_sort(values in proptest::collection::vec(-1e3f64..1e3, 1..300), p in 0.5f64..99.5) {
            let got = percentile_linear(&values, p).unwrap();
            prop_assert!((got - sorted_percentile(&values, p)).abs() <= 1e-9);
        }

        #[test]
        fn scale_equivariant(
            a in proptest::collection::vec(-10f64..10.0, 2..200),
            noise in proptest::collection::vec(-1f64..1.0, 200),
            factor in 0.01f64..100.0,
        ) {
            let b: Vec<f64> = a.iter().zip(&noise).map(|(x, n)| x + n).collect();
            let (sa, sb) = (snap(a), snap(b));
            let (t1, i1) = select_dynamic(&sa, &sb, 90.0).unwrap();
            let (t2, i2) = select_dynamic(&sa.scaled(factor), &sb.scaled(factor), 90.0).unwrap();
            prop_assert!((t2 - t1 * factor).abs() <= 1e-9 * (1.0 + t2.abs()));
            // Equality ties can flip under rounding; compare away from the threshold.
            let d = abs_diffs(&sa, &sb).unwrap();
            let margin = 1e-9 * (1.0 + t1.abs());
            let robust = |idx: &Vec<usize>| idx.iter().copied().filter(|&i| (d[i] - t1).abs() > margin).collect::<Vec<_>>();
            prop_assert_eq!(robust(&i1), robust(&i2));
        }
    }
}
