//! Feature tracks: per-frame spatial feature vectors for one subject.

use std::fmt;

use nalgebra::DVector;

use crate::error::{KronError, Result};
use crate::scalar::Real;

/// Class label of a track. The classifier is binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassLabel {
    Zero,
    One,
}

impl ClassLabel {
    pub fn index(self) -> usize {
        match self {
            ClassLabel::Zero => 0,
            ClassLabel::One => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(ClassLabel::Zero),
            1 => Some(ClassLabel::One),
            _ => None,
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// Extents of the spatial feature array, e.g. `[rows, cols]` of a cell grid.
///
/// Features are flattened in row-major order: the last axis varies fastest.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpatialGrid {
    extents: Vec<usize>,
}

impl SpatialGrid {
    pub fn new(extents: Vec<usize>) -> Result<Self> {
        if extents.is_empty() || extents.iter().any(|&e| e == 0) {
            return Err(KronError::InvalidDims(format!(
                "grid extents must be nonempty and positive, got {extents:?}"
            )));
        }
        Ok(Self { extents })
    }

    /// A one-axis grid of `p` features.
    pub fn flat(p: usize) -> Result<Self> {
        Self::new(vec![p])
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    /// Total feature count `p`.
    pub fn size(&self) -> usize {
        self.extents.iter().product()
    }

    /// Flat index of a multi-axis coordinate.
    pub fn flat_index(&self, coord: &[usize]) -> usize {
        coord
            .iter()
            .zip(&self.extents)
            .fold(0, |acc, (&c, &e)| acc * e + c)
    }

    /// Parses `4x4` or `8x6x9`.
    pub fn parse(s: &str) -> Result<Self> {
        let extents = s
            .split('x')
            .map(|part| {
                part.parse::<usize>().map_err(|_| {
                    KronError::InvalidParameter(format!("bad grid specification '{s}'"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(extents)
    }
}

impl fmt::Display for SpatialGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.extents.iter().enumerate() {
            if i > 0 {
                f.write_str("x")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

/// One subject's feature sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTrack<S: Real> {
    pub track_id: String,
    pub label: Option<ClassLabel>,
    pub grid: SpatialGrid,
    pub frames: Vec<DVector<S>>,
}

impl<S: Real> FeatureTrack<S> {
    pub fn new(
        track_id: impl Into<String>,
        label: Option<ClassLabel>,
        grid: SpatialGrid,
        frames: Vec<DVector<S>>,
    ) -> Result<Self> {
        let track = Self {
            track_id: track_id.into(),
            label,
            grid,
            frames,
        };
        track.validate()?;
        Ok(track)
    }

    pub fn validate(&self) -> Result<()> {
        if self.track_id.is_empty() || self.track_id.chars().any(char::is_whitespace) {
            return Err(KronError::InvalidParameter(format!(
                "track id '{}' must be nonempty without whitespace",
                self.track_id
            )));
        }
        if self.frames.is_empty() {
            return Err(KronError::InvalidParameter(format!(
                "track '{}' has no frames",
                self.track_id
            )));
        }
        let p = self.grid.size();
        for (i, f) in self.frames.iter().enumerate() {
            if f.len() != p {
                return Err(KronError::Shape {
                    what: "track frame",
                    expected: p.to_string(),
                    found: format!("{} (frame {i} of '{}')", f.len(), self.track_id),
                });
            }
            if f.iter().any(|x| !x.is_finite_value()) {
                return Err(KronError::NonFinite(format!(
                    "frame {i} of track '{}'",
                    self.track_id
                )));
            }
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.grid.size()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Start frames of the `window`-frame windows taken every `stride` frames.
    /// A trailing remainder shorter than `window` is dropped.
    pub fn window_starts(&self, window: usize, stride: usize) -> Result<Vec<usize>> {
        if window == 0 || stride == 0 {
            return Err(KronError::InvalidParameter(
                "window and stride must be positive".into(),
            ));
        }
        if self.frames.len() < window {
            return Err(KronError::TrackTooShort {
                track_id: self.track_id.clone(),
                frames: self.frames.len(),
                window,
            });
        }
        Ok((0..=self.frames.len() - window).step_by(stride).collect())
    }

    /// Multiframe vector of `window` frames starting at `start`, restricted to
    /// `features` (all features when `None`). Frame-major: frame 0's features
    /// come first.
    pub fn multiframe(&self, start: usize, window: usize, features: Option<&[usize]>) -> DVector<S> {
        match features {
            None => {
                let p = self.p();
                DVector::from_fn(p * window, |k, _| self.frames[start + k / p][k % p])
            }
            Some(idx) => {
                let b = idx.len();
                DVector::from_fn(b * window, |k, _| self.frames[start + k / b][idx[k % b]])
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track(frames: usize) -> FeatureTrack<f64> {
        let grid = SpatialGrid::new(vec![2, 2]).unwrap();
        let frames = (0..frames)
            .map(|f| DVector::from_fn(4, |i, _| (10 * f + i) as f64))
            .collect();
        FeatureTrack::new("a", Some(ClassLabel::One), grid, frames).unwrap()
    }

    #[test]
    fn grid_parse_and_display() {
        let g = SpatialGrid::parse("8x6x9").unwrap();
        assert_eq!(g.size(), 432);
        assert_eq!(g.to_string(), "8x6x9");
        assert_eq!(g.flat_index(&[1, 2, 3]), 9 * 6 + 2 * 9 + 3);
        assert!(SpatialGrid::parse("4x0").is_err());
        assert!(SpatialGrid::parse("4xa").is_err());
    }

    #[test]
    fn windows_drop_remainder() {
        let t = track(10);
        assert_eq!(t.window_starts(4, 4).unwrap(), vec![0, 4]);
        assert_eq!(t.window_starts(4, 1).unwrap().len(), 7);
        assert!(matches!(
            track(3).window_starts(4, 4),
            Err(KronError::TrackTooShort { frames: 3, .. })
        ));
    }

    #[test]
    fn multiframe_is_frame_major() {
        let t = track(5);
        let v = t.multiframe(1, 2, None);
        assert_eq!(v.as_slice(), &[10.0, 11.0, 12.0, 13.0, 20.0, 21.0, 22.0, 23.0]);
        let v = t.multiframe(2, 2, Some(&[1, 3]));
        assert_eq!(v.as_slice(), &[21.0, 23.0, 31.0, 33.0]);
    }

    #[test]
    fn rejects_bad_frames() {
        let grid = SpatialGrid::new(vec![2]).unwrap();
        assert!(FeatureTrack::new("x", None, grid.clone(), vec![DVector::from_element(3, 0.0)]).is_err());
        assert!(FeatureTrack::new("x y", None, grid.clone(), vec![DVector::from_element(2, 0.0)]).is_err());
        assert!(FeatureTrack::<f64>::new("x", None, grid.clone(), vec![]).is_err());
        assert!(FeatureTrack::new("x", None, grid, vec![DVector::from_element(2, f64::NAN)]).is_err());
    }
}
