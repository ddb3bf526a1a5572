//! Crop plans for person and face boxes.
//!
//! Plans are computed in floating point and only rounded (outward) when a
//! pixel rectangle is requested, so half-pixel centres survive until the end.
//! Pixel work itself happens in external tooling.

use std::num::NonZeroUsize;

use serde::Serialize;

use crate::error::Violation;
use crate::model::{SubjectManifest, Validate};

pub const MIAP_MIN_SIDE: f64 = 100.0;
pub const MIAP_SQUARE_RATIO: f64 = 1.2;
pub const MIAP_TARGET: (u32, u32) = (224, 224);
pub const CC_ENLARGE: f64 = 1.5;
pub const CC_TARGET: (u32, u32) = (256, 256);

pub const REASON_TOO_SMALL: &str = "too-small";
pub const REASON_UNKNOWN_ATTRS: &str = "unknown-attrs";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundingBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BoundingBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(self.x0 * s, self.y0 * s, self.x1 * s, self.y1 * s)
    }

    pub fn is_within(&self, frame_w: f64, frame_h: f64) -> bool {
        self.x0 >= 0.0 && self.y0 >= 0.0 && self.x1 <= frame_w && self.y1 <= frame_h
    }

    /// Smallest integer rectangle containing this one.
    pub fn round_outward(&self) -> PixelRect {
        PixelRect {
            x0: self.x0.floor() as i64,
            y0: self.y0.floor() as i64,
            x1: self.x1.ceil() as i64,
            y1: self.y1.ceil() as i64,
        }
    }
}

impl Validate for BoundingBox {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if ![self.x0, self.y0, self.x1, self.y1].iter().all(|v| v.is_finite()) {
            out.push(Violation::new("box", "coordinates not finite"));
        }
        if self.x1 <= self.x0 {
            out.push(Violation::new("box.x1", "not greater than x0"));
        }
        if self.y1 <= self.y0 {
            out.push(Violation::new("box.y1", "not greater than y0"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PixelRect {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CropPlan {
    pub source_rect: BoundingBox,
    pub target_size: (u32, u32),
    pub keep: bool,
    pub reason: Option<String>,
}

impl CropPlan {
    fn kept(source_rect: BoundingBox, target_size: (u32, u32)) -> Self {
        Self {
            source_rect,
            target_size,
            keep: true,
            reason: None,
        }
    }

    fn dropped(source_rect: BoundingBox, target_size: (u32, u32), reason: &str) -> Self {
        Self {
            source_rect,
            target_size,
            keep: false,
            reason: Some(reason.to_string()),
        }
    }

    pub fn pixel_rect(&self) -> PixelRect {
        self.source_rect.round_outward()
    }
}

impl Validate for CropPlan {
    fn validate(&self) -> Vec<Violation> {
        let mut out = self.source_rect.validate();
        if !self.keep && self.reason.as_deref().map_or(true, str::is_empty) {
            out.push(Violation::new("reason", "empty for dropped plan"));
        }
        out
    }
}

fn is_unknown(value: Option<&str>) -> bool {
    value.map_or(true, |v| v.trim().eq_ignore_ascii_case("unknown"))
}

/// Person-box plan: drop small or unlabeled boxes, square off elongated ones
/// from the top-left corner, resize to 224x224.
pub fn miap_crop_plan(bbox: &BoundingBox, gender: Option<&str>, age: Option<&str>) -> CropPlan {
    let (w, h) = (bbox.width(), bbox.height());
    if w < MIAP_MIN_SIDE || h < MIAP_MIN_SIDE {
        return CropPlan::dropped(*bbox, MIAP_TARGET, REASON_TOO_SMALL);
    }
    if is_unknown(gender) || is_unknown(age) {
        return CropPlan::dropped(*bbox, MIAP_TARGET, REASON_UNKNOWN_ATTRS);
    }
    let (long, short) = (w.max(h), w.min(h));
    if long / short >= MIAP_SQUARE_RATIO {
        let square = BoundingBox::new(bbox.x0, bbox.y0, bbox.x0 + short, bbox.y0 + short);
        CropPlan::kept(square, MIAP_TARGET)
    } else {
        CropPlan::kept(*bbox, MIAP_TARGET)
    }
}

/// Face-box plan: enlarge 1.5x about the centre, clip to the frame, resize to 256x256.
pub fn cc_face_crop_plan(bbox: &BoundingBox, frame_w: f64, frame_h: f64) -> CropPlan {
    let cx = (bbox.x0 + bbox.x1) / 2.0;
    let cy = (bbox.y0 + bbox.y1) / 2.0;
    let half_w = CC_ENLARGE * bbox.width() / 2.0;
    let half_h = CC_ENLARGE * bbox.height() / 2.0;
    let rect = BoundingBox::new(
        (cx - half_w).max(0.0),
        (cy - half_h).max(0.0),
        (cx + half_w).min(frame_w),
        (cy + half_h).min(frame_h),
    );
    CropPlan::kept(rect, CC_TARGET)
}

/// 0-based index of the middle frame of a clip.
pub fn middle_frame_index(frame_count: NonZeroUsize) -> usize {
    frame_count.get() / 2
}

/// Splits a MIAP manifest into the boxes that go to inference and the
/// (id, reason) pairs of those that were dropped. Rows without a box are dropped
/// as "no-box".
pub fn miap_inference_set(manifest: &SubjectManifest) -> (SubjectManifest, Vec<(String, String)>) {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for row in &manifest.rows {
        let Some(bbox) = row.bbox else {
            dropped.push((row.image_id.clone(), "no-box".to_string()));
            continue;
        };
        let plan = miap_crop_plan(&bbox, row.gender.as_deref(), row.age_group.as_deref());
        if plan.keep {
            kept.push(row.clone());
        } else {
            dropped.push((row.image_id.clone(), plan.reason.unwrap_or_default()));
        }
    }
    let kept = SubjectManifest {
        dataset: manifest.dataset.clone(),
        vocabulary: manifest.vocabulary.clone(),
        rows: kept,
    };
    (kept, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn known() -> (Option<&'static str>, Option<&'static str>) {
        (Some("predominantly feminine"), Some("middle"))
    }

    #[test]
    fn wide_box_becomes_top_left_square() {
        let (g, a) = known();
        let plan = miap_crop_plan(&BoundingBox::new(10.0, 20.0, 310.0, 220.0), g, a);
        assert!(plan.keep);
        assert_eq!(plan.source_rect, BoundingBox::new(10.0, 20.0, 210.0, 220.0));
        assert_eq!(plan.target_size, (224, 224));
    }

    #[test]
    fn tall_box_squares_from_top() {
        let (g, a) = known();
        let plan = miap_crop_plan(&BoundingBox::new(0.0, 0.0, 120.0, 400.0), g, a);
        assert_eq!(plan.source_rect, BoundingBox::new(0.0, 0.0, 120.0, 120.0));
    }

    #[test]
    fn small_box_dropped() {
        let (g, a) = known();
        let plan = miap_crop_plan(&BoundingBox::new(0.0, 0.0, 99.0, 150.0), g, a);
        assert!(!plan.keep);
        assert_eq!(plan.reason.as_deref(), Some(REASON_TOO_SMALL));
        assert!(plan.validate().is_empty());
    }

    #[test]
    fn near_square_box_kept_as_is() {
        let (g, a) = known();
        let b = BoundingBox::new(5.0, 5.0, 115.0, 105.0);
        let plan = miap_crop_plan(&b, g, a);
        assert!(plan.keep);
        assert_eq!(plan.source_rect, b);
    }

    #[test]
    fn ratio_exactly_at_threshold_squares() {
        let (g, a) = known();
        let plan = miap_crop_plan(&BoundingBox::new(0.0, 0.0, 120.0, 100.0), g, a);
        assert_eq!(plan.source_rect.width(), 100.0);
    }

    #[test]
    fn unknown_attributes_dropped() {
        let b = BoundingBox::new(0.0, 0.0, 200.0, 200.0);
        for (g, a) in [
            (Some("unknown"), Some("young")),
            (Some("predominantly masculine"), Some("Unknown")),
            (None, Some("young")),
        ] {
            let plan = miap_crop_plan(&b, g, a);
            assert_eq!(plan.reason.as_deref(), Some(REASON_UNKNOWN_ATTRS));
        }
    }

    #[test]
    fn face_box_enlarged_about_centre() {
        let plan = cc_face_crop_plan(&BoundingBox::new(60.0, 60.0, 140.0, 140.0), 400.0, 400.0);
        assert_eq!(plan.source_rect, BoundingBox::new(40.0, 40.0, 160.0, 160.0));
        assert_eq!(plan.target_size, (256, 256));
    }

    #[test]
    fn face_box_clipped_at_edge() {
        let plan = cc_face_crop_plan(&BoundingBox::new(0.0, 10.0, 40.0, 50.0), 100.0, 60.0);
        assert_eq!(plan.source_rect, BoundingBox::new(0.0, 0.0, 50.0, 60.0));
    }

    #[test]
    fn one_pixel_face_rounds_outward() {
        let plan = cc_face_crop_plan(&BoundingBox::new(10.0, 10.0, 11.0, 11.0), 100.0, 100.0);
        assert_eq!(plan.source_rect, BoundingBox::new(9.75, 9.75, 11.25, 11.25));
        let px = plan.pixel_rect();
        assert_eq!((px.x0, px.y0, px.x1, px.y1), (9, 9, 12, 12));
        assert!(px.x1 - px.x0 >= 1);
    }

    #[test]
    fn middle_frames() {
        let mid = |n| middle_frame_index(NonZeroUsize::new(n).unwrap());
        assert_eq!(mid(1), 0);
        assert_eq!(mid(100), 50);
        assert_eq!(mid(101), 50);
    }

    #[test]
    fn invalid_box_reported() {
        assert_eq!(BoundingBox::new(5.0, 5.0, 5.0, 1.0).validate().len(), 2);
    }

    proptest! {
        #[test]
        fn face_area_grows_by_2_25_without_clipping(
            x in 100i32..200, y in 100i32..200, w in 1i32..100, h in 1i32..100
        ) {
            let b = BoundingBox::new(x.into(), y.into(), (x + w).into(), (y + h).into());
            let plan = cc_face_crop_plan(&b, 1000.0, 1000.0);
            prop_assert_eq!(plan.source_rect.area(), 2.25 * b.area());
        }

        #[test]
        fn square_rule_side_is_min(w in 100i32..600, h in 100i32..600) {
            let b = BoundingBox::new(0.0, 0.0, w.into(), h.into());
            let plan = miap_crop_plan(&b, Some("predominantly masculine"), Some("older"));
            let (long, short) = (w.max(h) as f64, w.min(h) as f64);
            if long / short >= MIAP_SQUARE_RATIO {
                prop_assert_eq!(plan.source_rect.width(), short);
                prop_assert_eq!(plan.source_rect.height(), short);
            } else {
                prop_assert_eq!(plan.source_rect, b);
            }
        }
    }
}
