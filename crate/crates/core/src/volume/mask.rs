use std::collections::BTreeMap;
use std::fmt;

use ndarray::{Array3, Array4, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{CineVolume, DataType, SequenceKind, Spacing, VolumeError};

/// Annotated anatomical structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    LvCavity,
    LvMyocardium,
    /// Right ventricle as a single region (SAX annotations).
    Rv,
    RvCavity,
    RvMyocardium,
    LeftAtrium,
    RightAtrium,
    Lge,
}

impl Structure {
    pub fn name(self) -> &'static str {
        match self {
            Structure::LvCavity => "LV cavity",
            Structure::LvMyocardium => "LV myocardium",
            Structure::Rv => "RV",
            Structure::RvCavity => "RV cavity",
            Structure::RvMyocardium => "RV myocardium",
            Structure::LeftAtrium => "LA",
            Structure::RightAtrium => "RA",
            Structure::Lge => "LGE",
        }
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Label id → structure mapping for one sequence kind. Label 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSchema {
    kind: SequenceKind,
    entries: &'static [(u8, Structure)],
}

const SAX_CINE: &[(u8, Structure)] = &[
    (1, Structure::LvCavity),
    (2, Structure::LvMyocardium),
    (3, Structure::Rv),
];
const CH4_CINE: &[(u8, Structure)] = &[
    (1, Structure::LvCavity),
    (2, Structure::LvMyocardium),
    (3, Structure::RvCavity),
    (4, Structure::RvMyocardium),
    (5, Structure::LeftAtrium),
    (6, Structure::RightAtrium),
];
const CH2_CINE: &[(u8, Structure)] = &[(1, Structure::LvCavity), (2, Structure::LvMyocardium)];
const SAX_LGE: &[(u8, Structure)] = &[
    (1, Structure::LvCavity),
    (2, Structure::LvMyocardium),
    (3, Structure::Lge),
];

impl LabelSchema {
    pub fn for_kind(kind: SequenceKind) -> LabelSchema {
        let entries = match kind {
            SequenceKind::SaxCine => SAX_CINE,
            SequenceKind::Ch4Cine => CH4_CINE,
            // Rest MPI carries no annotation of its own; LV regions only.
            SequenceKind::Ch2Cine | SequenceKind::RestMpi => CH2_CINE,
            SequenceKind::SaxLge => SAX_LGE,
        };
        LabelSchema { kind, entries }
    }

    pub fn kind(&self) -> SequenceKind {
        self.kind
    }

    pub fn entries(&self) -> &'static [(u8, Structure)] {
        self.entries
    }

    pub fn label_of(&self, s: Structure) -> Option<u8> {
        self.entries.iter().find(|(_, st)| *st == s).map(|(l, _)| *l)
    }

    pub fn structure_of(&self, label: u8) -> Option<Structure> {
        self.entries.iter().find(|(l, _)| *l == label).map(|(_, s)| *s)
    }

    pub fn contains(&self, label: u8) -> bool {
        label == 0 || self.structure_of(label).is_some()
    }

    /// Labels counted as LV myocardium: the myocardium label plus LGE, which
    /// replaces myocardium where enhancement is annotated.
    pub fn myocardial_labels(&self) -> Vec<u8> {
        [Structure::LvMyocardium, Structure::Lge]
            .into_iter()
            .filter_map(|s| self.label_of(s))
            .collect()
    }
}

/// Which acquisition frame a mask belongs to.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRef {
    /// Study identifier, when the mask came from a stored study.
    pub study: Option<String>,
    pub phase: usize,
}

/// Integer label map `(slice, row, col)` aligned to one phase of a volume.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    frame: FrameRef,
    schema: LabelSchema,
    spacing: Spacing,
    labels: Array3<u8>,
}

impl LabelMask {
    pub fn new(kind: SequenceKind, labels: Array3<u8>, spacing: Spacing, frame: FrameRef) -> Result<Self, VolumeError> {
        if labels.shape().contains(&0) {
            return Err(VolumeError::Inconsistent(format!("empty mask shape {:?}", labels.shape())));
        }
        if !spacing.is_valid() {
            return Err(VolumeError::Inconsistent(format!("spacing {:?}", spacing.as_array())));
        }
        let schema = LabelSchema::for_kind(kind);
        if let Some(&bad) = labels.iter().find(|&&l| !schema.contains(l)) {
            return Err(VolumeError::UnknownLabel { label: bad, kind });
        }
        let labels = if labels.is_standard_layout() {
            labels
        } else {
            labels.as_standard_layout().into_owned()
        };
        Ok(LabelMask {
            frame,
            schema,
            spacing,
            labels,
        })
    }

    /// All-background mask with the same geometry.
    pub fn empty_like(&self) -> LabelMask {
        LabelMask {
            frame: self.frame.clone(),
            schema: self.schema.clone(),
            spacing: self.spacing,
            labels: Array3::zeros(self.labels.raw_dim()),
        }
    }

    pub fn kind(&self) -> SequenceKind {
        self.schema.kind
    }

    pub fn schema(&self) -> &LabelSchema {
        &self.schema
    }

    pub fn frame(&self) -> &FrameRef {
        &self.frame
    }

    pub fn with_frame(mut self, frame: FrameRef) -> Self {
        self.frame = frame;
        self
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn labels(&self) -> &Array3<u8> {
        &self.labels
    }

    /// Replaces the label map, re-validating it against the schema.
    pub fn with_labels(self, labels: Array3<u8>) -> Result<Self, VolumeError> {
        LabelMask::new(self.kind(), labels, self.spacing, self.frame)
    }

    /// `(slices, rows, cols)`.
    pub fn dims(&self) -> [usize; 3] {
        let s = self.labels.shape();
        [s[0], s[1], s[2]]
    }

    pub fn slice(&self, z: usize) -> ArrayView2<'_, u8> {
        self.labels.index_axis(Axis(0), z)
    }

    pub fn count(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn label_of(&self, s: Structure) -> Option<u8> {
        self.schema.label_of(s)
    }

    /// Voxel counts per label, background excluded.
    pub fn histogram(&self) -> BTreeMap<u8, usize> {
        let mut h = BTreeMap::new();
        for &l in self.labels.iter().filter(|&&l| l != 0) {
            *h.entry(l).or_insert(0) += 1;
        }
        h
    }
}

/// Packs per-phase masks into one uint8 volume for storage.
pub fn masks_to_volume(masks: &[LabelMask]) -> Result<CineVolume, VolumeError> {
    let first = masks
        .first()
        .ok_or_else(|| VolumeError::Inconsistent("no masks to pack".into()))?;
    let [z, y, x] = first.dims();
    if masks.iter().any(|m| m.dims() != first.dims() || m.kind() != first.kind()) {
        return Err(VolumeError::Inconsistent("masks differ in shape or kind".into()));
    }
    let mut data = Array4::<f32>::zeros((masks.len(), z, y, x));
    for (p, m) in masks.iter().enumerate() {
        data.index_axis_mut(Axis(0), p).assign(&m.labels.mapv(f32::from));
    }
    CineVolume::new(first.kind(), data, first.spacing)?.with_datatype(DataType::Uint8)
}

/// Splits a stored label volume into per-phase masks.
pub fn volume_to_masks(volume: &CineVolume, study: Option<&str>) -> Result<Vec<LabelMask>, VolumeError> {
    (0..volume.phases())
        .map(|p| {
            let phase = volume.phase(p);
            if let Some(bad) = phase.iter().find(|v| !DataType::Uint8.represents(**v)) {
                return Err(VolumeError::NotRepresentable {
                    value: *bad,
                    datatype: "label",
                });
            }
            LabelMask::new(
                volume.kind(),
                phase.mapv(|v| v as u8),
                volume.spacing(),
                FrameRef {
                    study: study.map(str::to_string),
                    phase: p,
                },
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{load_volume, save_volume, VolumeFormat};

    #[test]
    fn schema_matches_annotation_scope() {
        let ch4 = LabelSchema::for_kind(SequenceKind::Ch4Cine);
        assert_eq!(ch4.entries().len(), 6);
        assert_eq!(ch4.label_of(Structure::RightAtrium), Some(6));
        let lge = LabelSchema::for_kind(SequenceKind::SaxLge);
        assert_eq!(lge.myocardial_labels(), vec![2, 3]);
        let sax = LabelSchema::for_kind(SequenceKind::SaxCine);
        assert_eq!(sax.myocardial_labels(), vec![2]);
        assert!(sax.contains(0));
        assert!(!sax.contains(4));
    }

    #[test]
    fn unknown_label_is_rejected() {
        let mut labels = Array3::zeros((1, 2, 2));
        labels[[0, 1, 1]] = 4;
        assert!(matches!(
            LabelMask::new(SequenceKind::SaxCine, labels, Spacing::isotropic(1.0), FrameRef::default()),
            Err(VolumeError::UnknownLabel { label: 4, .. })
        ));
    }

    #[test]
    fn mask_series_round_trips_through_desk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("masks.json");
        let masks: Vec<LabelMask> = (0..2)
            .map(|p| {
                let labels = Array3::from_shape_fn((2, 3, 4), |(z, y, x)| ((z + y + x + p) % 4) as u8);
                LabelMask::new(SequenceKind::SaxCine, labels, Spacing::new(8.0, 1.5, 1.5), FrameRef::default()).unwrap()
            })
            .collect();
        save_volume(&masks_to_volume(&masks).unwrap(), &path, VolumeFormat::Desk).unwrap();
        let back = volume_to_masks(&load_volume(&path, VolumeFormat::Desk).unwrap(), None).unwrap();
        for (a, b) in masks.iter().zip(&back) {
            assert_eq!(a.histogram(), b.histogram());
            assert_eq!(a.labels(), b.labels());
        }
    }
}
