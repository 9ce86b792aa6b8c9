use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::references::SliceReference;
use crate::error::{Error, Result};
use crate::objectives::DepthGrid;

/// Geometry of one axial series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesGeometry {
    pub series: u32,
    pub num_slices: u32,
    pub slice_thickness_mm: f64,
    pub first_slice_offset_mm: f64,
    pub axial_length_mm: f64,
}

impl SeriesGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.slice_thickness_mm > 0.0) {
            return Err(Error::Format(format!(
                "series {}: slice_thickness_mm must be positive",
                self.series
            )));
        }
        let covered = self.num_slices as f64 * self.slice_thickness_mm;
        if self.axial_length_mm < covered - 1e-6 {
            return Err(Error::Format(format!(
                "series {}: axial_length_mm {} shorter than {} slices × {} mm",
                self.series, self.axial_length_mm, self.num_slices, self.slice_thickness_mm
            )));
        }
        Ok(())
    }

    /// Depth grid covering the series at `pitch_mm`, starting at the first
    /// slice's near edge.
    pub fn depth_grid(&self, pitch_mm: f64) -> Result<DepthGrid> {
        let positions = ((self.axial_length_mm / pitch_mm).ceil() as usize).max(1);
        DepthGrid::new(positions, pitch_mm, self.first_slice_offset_mm)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub report_id: String,
    pub patient_id: String,
    pub full_text: String,
    /// Section name → text, in document order.
    #[serde(default, with = "ordered_sections")]
    pub sections: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub organ_descriptions: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub no_history_text: Option<String>,
    #[serde(default)]
    pub series_geometries: Vec<SeriesGeometry>,
}

impl Report {
    pub fn section(&self, name: &str) -> Option<&str> {
        self.sections
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn geometry(&self, series: u32) -> Option<&SeriesGeometry> {
        self.series_geometries.iter().find(|g| g.series == series)
    }

    pub fn validate(&self) -> Result<()> {
        if self.full_text.is_empty() {
            return Err(Error::Format(format!("report {}: empty full_text", self.report_id)));
        }
        for g in &self.series_geometries {
            g.validate()?;
        }
        Ok(())
    }
}

mod ordered_sections {
    use super::*;
    use serde::de::Error as _;

    pub fn serialize<S: Serializer>(v: &[(String, String)], s: S) -> std::result::Result<S::Ok, S::Error> {
        let map: serde_json::Map<String, serde_json::Value> = v
            .iter()
            .map(|(k, t)| (k.clone(), serde_json::Value::String(t.clone())))
            .collect();
        map.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<(String, String)>, D::Error> {
        let map = serde_json::Map::<String, serde_json::Value>::deserialize(d)?;
        map.into_iter()
            .map(|(k, v)| match v {
                serde_json::Value::String(s) => Ok((k, s)),
                other => Err(D::Error::custom(format!("section `{k}` must be text, got {other}"))),
            })
            .collect()
    }
}

/// Axial position of the referenced slice's center:
/// `offset + (image − 0.5) · thickness`.
pub fn reference_to_mm(reference: &SliceReference, geom: &SeriesGeometry) -> Result<f64> {
    if reference.series != geom.series {
        return Err(Error::SeriesMismatch {
            reference: reference.series,
            geometry: geom.series,
        });
    }
    if reference.image < 1 || reference.image > geom.num_slices {
        return Err(Error::ImageOutOfRange {
            image: reference.image,
            num_slices: geom.num_slices,
        });
    }
    Ok(geom.first_slice_offset_mm + (reference.image as f64 - 0.5) * geom.slice_thickness_mm)
}

/// 1-based half-open bin holding `axial_mm`.
pub fn mm_to_depth_index(axial_mm: f64, grid: &DepthGrid) -> Result<usize> {
    let start = grid.origin_mm;
    let end = grid.origin_mm + grid.extent_mm();
    if !(axial_mm >= start && axial_mm < end) {
        return Err(Error::OutOfVolume {
            mm: axial_mm,
            start,
            end,
        });
    }
    let d = ((axial_mm - grid.origin_mm) / grid.pitch_mm).floor() as usize + 1;
    Ok(d.clamp(1, grid.positions))
}
