//! Scene layouts: a caption plus named boxes in the integer `[0, 512]^3`
//! layout cube, with parsing, validation and the layout-generation client.

mod llm;
mod prompt;

pub use llm::{mock_file_name, parse_completion, request_layout, LlmConfig, LlmError, LlmMode};
pub use prompt::SYSTEM_PROMPT;

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::geometry::{aabb_from_layout, Aabb, GeometryError, LAYOUT_EXTENT};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutObject {
    pub description: String,
    /// `[x, y, z, depth, width, height]`.
    #[serde(rename = "box")]
    pub bbox: [i64; 6],
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneLayout {
    pub caption: String,
    pub objects: Vec<LayoutObject>,
}

#[derive(Debug, thiserror::Error)]
pub enum LayoutError {
    #[error("malformed layout JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
    #[error("no layout tuples found in text")]
    NoTuples,
}

impl LayoutError {
    fn invalid(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Invalid {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

impl SceneLayout {
    pub fn new(caption: impl Into<String>, objects: Vec<(String, [i64; 6])>) -> Self {
        Self {
            caption: caption.into(),
            objects: objects
                .into_iter()
                .map(|(description, bbox)| LayoutObject { description, bbox })
                .collect(),
        }
    }

    /// Checks the structural invariants, reporting the first offending field.
    pub fn check(&self) -> Result<(), LayoutError> {
        if self.objects.is_empty() {
            return Err(LayoutError::invalid("objects", "must contain at least one object"));
        }
        for (i, obj) in self.objects.iter().enumerate() {
            if obj.description.trim().is_empty() {
                return Err(LayoutError::invalid(
                    format!("objects[{i}].description"),
                    "must be non-empty",
                ));
            }
            if let Err(GeometryError::LayoutField { field, value, reason }) =
                aabb_from_layout::<f64>(obj.bbox, LAYOUT_EXTENT)
            {
                return Err(LayoutError::invalid(
                    format!("objects[{i}].box.{field}"),
                    format!("{value} {reason}"),
                ));
            }
        }
        Ok(())
    }

    /// World-space boxes in object order. Call on a checked layout.
    pub fn world_boxes<T: Real>(&self) -> Result<Vec<Aabb<T>>, LayoutError> {
        self.check()?;
        Ok(self
            .objects
            .iter()
            .map(|o| aabb_from_layout(o.bbox, LAYOUT_EXTENT).expect("checked above"))
            .collect())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("layout serializes");
        s.push('\n');
        s
    }
}

/// Strict JSON parse followed by [`SceneLayout::check`].
pub fn parse_layout(text: &str) -> Result<SceneLayout, LayoutError> {
    let layout: SceneLayout = serde_json::from_str(text)?;
    layout.check()?;
    Ok(layout)
}

pub fn serialize_layout(layout: &SceneLayout) -> String {
    layout.to_json()
}

fn tuple_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"\(\s*[`'"‘“](?P<desc>.*?)[`'"’”]\s*,\s*\[(?P<nums>[^\]]*)\]\s*\)"#).expect("valid regex")
    })
}

fn caption_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?mi)^\s*caption\s*:\s*(?P<c>.+?)\s*$").expect("valid regex"))
}

/// Lenient importer for the printed tuple form
/// `Objects: [('a desk', [156, 106, 200, 200, 300, 150]), ...]`, with an
/// optional `Caption: ...` line. `caption` overrides any caption in the text.
pub fn import_tuple_layout(text: &str, caption: Option<&str>) -> Result<SceneLayout, LayoutError> {
    let mut objects = Vec::new();
    for (i, cap) in tuple_regex().captures_iter(text).enumerate() {
        let nums: Vec<&str> = cap["nums"]
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect();
        if nums.len() != 6 {
            return Err(LayoutError::invalid(
                format!("objects[{i}].box"),
                format!("expected 6 integers, found {}", nums.len()),
            ));
        }
        let mut bbox = [0i64; 6];
        for (k, n) in nums.iter().enumerate() {
            bbox[k] = n.parse().map_err(|_| {
                LayoutError::invalid(format!("objects[{i}].box[{k}]"), format!("`{n}` is not an integer"))
            })?;
        }
        objects.push(LayoutObject {
            description: cap["desc"].to_string(),
            bbox,
        });
    }
    if objects.is_empty() {
        return Err(LayoutError::NoTuples);
    }
    let caption = match caption {
        Some(c) => c.to_string(),
        None => caption_regex()
            .captures(text)
            .map(|c| c["c"].to_string())
            .unwrap_or_default(),
    };
    let layout = SceneLayout { caption, objects };
    layout.check()?;
    Ok(layout)
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayoutWarning {
    /// Box `outer` contains box `inner` (closed containment).
    Containment { outer: usize, inner: usize },
    /// Intersection volume over the smaller box's volume exceeds 0.5.
    Overlap { a: usize, b: usize, ratio: f64 },
}

impl LayoutWarning {
    pub fn describe(&self, layout: &SceneLayout) -> String {
        let name = |i: usize| &layout.objects[i].description;
        match self {
            Self::Containment { outer, inner } => format!(
                "objects[{outer}] `{}` fully contains objects[{inner}] `{}`; consider merging them into one object",
                name(*outer),
                name(*inner)
            ),
            Self::Overlap { a, b, ratio } => format!(
                "objects[{a}] `{}` and objects[{b}] `{}` overlap by {:.0}% of the smaller box",
                name(*a),
                name(*b),
                ratio * 100.0
            ),
        }
    }
}

impl fmt::Display for LayoutWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Containment { outer, inner } => write!(f, "objects[{outer}] contains objects[{inner}]"),
            Self::Overlap { a, b, ratio } => write!(f, "objects[{a}] and objects[{b}] overlap ratio {ratio:.3}"),
        }
    }
}

fn contains(outer: &[i64; 6], inner: &[i64; 6]) -> bool {
    (0..3).all(|a| outer[a] <= inner[a] && inner[a] + inner[a + 3] <= outer[a] + outer[a + 3])
}

fn intersection_volume(p: &[i64; 6], q: &[i64; 6]) -> i64 {
    (0..3)
        .map(|a| {
            let lo = p[a].max(q[a]);
            let hi = (p[a] + p[a + 3]).min(q[a] + q[a + 3]);
            (hi - lo).max(0)
        })
        .product()
}

fn volume(b: &[i64; 6]) -> i64 {
    b[3] * b[4] * b[5]
}

/// Containment and heavy-overlap warnings over all pairs. Isolated boxes are
/// fine and produce nothing.
pub fn validate_layout(layout: &SceneLayout) -> Vec<LayoutWarning> {
    let boxes: Vec<&[i64; 6]> = layout.objects.iter().map(|o| &o.bbox).collect();
    let mut warnings = Vec::new();
    for i in 0..boxes.len() {
        for j in 0..boxes.len() {
            if i != j && contains(boxes[i], boxes[j]) {
                warnings.push(LayoutWarning::Containment { outer: i, inner: j });
            }
        }
    }
    for i in 0..boxes.len() {
        for j in i + 1..boxes.len() {
            let smaller = volume(boxes[i]).min(volume(boxes[j]));
            if smaller <= 0 {
                continue;
            }
            let ratio = intersection_volume(boxes[i], boxes[j]) as f64 / smaller as f64;
            if ratio > 0.5 {
                warnings.push(LayoutWarning::Overlap { a: i, b: j, ratio });
            }
        }
    }
    warnings
}

/// Layouts printed as worked examples for the layout format.
pub mod fixtures {
    use super::SceneLayout;

    pub fn chicken_desk() -> SceneLayout {
        SceneLayout::new(
            "a chicken near a desk",
            vec![
                ("a desk".into(), [156, 106, 200, 200, 300, 150]),
                ("a chicken".into(), [156, 436, 200, 150, 76, 112]),
            ],
        )
    }

    pub fn two_dogs() -> SceneLayout {
        SceneLayout::new(
            "Two dogs sitting side by side, one larger than the other, with a plate of dog food in front.",
            vec![
                ("a large sitting dog".into(), [156, 106, 0, 200, 150, 300]),
                ("a small sitting dog".into(), [156, 256, 0, 150, 100, 200]),
                ("a plate of dog food".into(), [356, 206, 0, 100, 100, 50]),
            ],
        )
    }

    pub fn shoes_briefcase() -> SceneLayout {
        SceneLayout::new(
            "A pair of brown shoes placed neatly next to a black briefcase with a blue tie draped over it.",
            vec![
                ("a pair of brown shoes".into(), [0, 0, 0, 256, 256, 200]),
                (
                    "a black briefcase with a blue tie draped over it".into(),
                    [256, 0, 0, 256, 256, 300],
                ),
            ],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn chicken_desk_parses() {
        let text = r#"{"caption": "a chicken near a desk", "objects": [
            {"description": "a desk", "box": [156, 106, 200, 200, 300, 150]},
            {"description": "a chicken", "box": [156, 436, 200, 150, 76, 112]}]}"#;
        let layout = parse_layout(text).unwrap();
        assert_eq!(layout, fixtures::chicken_desk());
        assert!(validate_layout(&layout).is_empty());
    }

    #[test]
    fn depth_out_of_range_names_field() {
        let text = r#"{"caption": "c", "objects": [{"description": "x", "box": [0, 0, 0, 600, 10, 10]}]}"#;
        let err = parse_layout(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("objects[0].box.depth"), "{msg}");
    }

    #[test]
    fn second_object_index_reported() {
        let mut l = fixtures::chicken_desk();
        l.objects[1].bbox[5] = 0;
        let msg = l.check().unwrap_err().to_string();
        assert!(msg.starts_with("objects[1].box.height"), "{msg}");
    }

    #[test]
    fn empty_objects_rejected() {
        let err = parse_layout(r#"{"caption": "c", "objects": []}"#).unwrap_err();
        assert!(matches!(err, LayoutError::Invalid { ref path, .. } if path == "objects"));
    }

    #[test]
    fn blank_description_rejected() {
        let mut l = fixtures::two_dogs();
        l.objects[2].description = "  ".into();
        assert!(l.check().unwrap_err().to_string().contains("objects[2].description"));
    }

    #[test]
    fn unknown_fields_and_bad_json_rejected() {
        assert!(matches!(
            parse_layout(r#"{"caption": "c", "objects": [], "extra": 1}"#),
            Err(LayoutError::Json(_))
        ));
        assert!(matches!(parse_layout("{not json"), Err(LayoutError::Json(_))));
        assert!(matches!(
            parse_layout(r#"{"caption": "c", "objects": [{"description": "a", "box": [0, 0, 0, 1, 1]}]}"#),
            Err(LayoutError::Json(_))
        ));
    }

    #[test]
    fn fixtures_validate_clean() {
        for l in [
            fixtures::chicken_desk(),
            fixtures::two_dogs(),
            fixtures::shoes_briefcase(),
        ] {
            l.check().unwrap();
            assert!(validate_layout(&l).is_empty(), "{:?}", validate_layout(&l));
            assert_eq!(parse_layout(&l.to_json()).unwrap(), l);
        }
    }

    #[test]
    fn disjoint_boxes_no_warnings() {
        let l = SceneLayout::new(
            "two",
            vec![
                ("a".into(), [0, 0, 0, 100, 100, 100]),
                ("b".into(), [300, 300, 300, 100, 100, 100]),
            ],
        );
        assert!(validate_layout(&l).is_empty());
    }

    #[test]
    fn containment_warned() {
        let l = SceneLayout::new(
            "nested",
            vec![
                ("a".into(), [0, 0, 0, 512, 512, 512]),
                ("b".into(), [10, 10, 10, 100, 100, 100]),
            ],
        );
        let w = validate_layout(&l);
        assert!(w.contains(&LayoutWarning::Containment { outer: 0, inner: 1 }));
        assert!(w.iter().any(|x| matches!(x, LayoutWarning::Overlap { .. })));
    }

    #[test]
    fn identical_boxes_warn_both_ways() {
        let b = [50, 50, 50, 100, 100, 100];
        let l = SceneLayout::new("same", vec![("a".into(), b), ("b".into(), b)]);
        let w = validate_layout(&l);
        assert!(w.contains(&LayoutWarning::Containment { outer: 0, inner: 1 }));
        assert!(w.contains(&LayoutWarning::Containment { outer: 1, inner: 0 }));
        assert!(w.contains(&LayoutWarning::Overlap { a: 0, b: 1, ratio: 1.0 }));
    }

    #[test]
    fn partial_overlap_threshold() {
        let mk = |dx| {
            SceneLayout::new(
                "pair",
                vec![
                    ("a".into(), [0, 0, 0, 100, 100, 100]),
                    ("b".into(), [dx, 0, 0, 100, 100, 100]),
                ],
            )
        };
        assert!(validate_layout(&mk(50)).is_empty());
        assert_eq!(validate_layout(&mk(40)).len(), 1);
    }

    #[test]
    fn tuple_importer_reads_printed_form() {
        let text = "Caption: a chicken near a desk\nObjects: [('a desk', [156, 106, 200, 200, 300, 150]),\n ('a chicken', [156, 436, 200, 150, 76, 112])]";
        assert_eq!(import_tuple_layout(text, None).unwrap(), fixtures::chicken_desk());
        let curly = "[(‘a pair of brown shoes’, [0, 0, 0, 256, 256, 200]), (`a black briefcase with a blue tie draped over it', [256, 0, 0, 256, 256, 300])]";
        let l = import_tuple_layout(curly, Some(&fixtures::shoes_briefcase().caption)).unwrap();
        assert_eq!(l, fixtures::shoes_briefcase());
    }

    #[test]
    fn tuple_importer_errors() {
        assert!(matches!(
            import_tuple_layout("nothing here", None),
            Err(LayoutError::NoTuples)
        ));
        let bad = import_tuple_layout("[('a', [1, 2, 3])]", None).unwrap_err();
        assert!(bad.to_string().contains("expected 6 integers"));
        let range = import_tuple_layout("[('a', [0, 0, 0, 513, 1, 1])]", None).unwrap_err();
        assert!(range.to_string().contains("objects[0].box.depth"));
    }

    #[test]
    fn world_boxes_follow_layout_mapping() {
        let boxes = fixtures::chicken_desk().world_boxes::<f64>().unwrap();
        assert_eq!(boxes[1].min().to_array(), [-0.390625, 0.703125, -0.21875]);
    }

    fn arb_layout() -> impl Strategy<Value = SceneLayout> {
        let obj = (
            "[a-z ]{0,12}[a-z]",
            0i64..400,
            0i64..400,
            0i64..400,
            1i64..=112,
            1i64..=112,
            1i64..=112,
        )
            .prop_map(|(d, x, y, z, w, h, l)| LayoutObject {
                description: d,
                bbox: [x, y, z, w, h, l],
            });
        ("[ -~]{0,30}", prop::collection::vec(obj, 1..6))
            .prop_map(|(caption, objects)| SceneLayout { caption, objects })
    }

    proptest! {
        #[test]
        fn roundtrip_is_identity(l in arb_layout()) {
            prop_assert_eq!(parse_layout(&serialize_layout(&l)).unwrap(), l);
        }

        #[test]
        fn warnings_are_permutation_invariant(l in arb_layout(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut perm: Vec<usize> = (0..l.objects.len()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let shuffled = SceneLayout {
                caption: l.caption.clone(),
                objects: perm.iter().map(|&i| l.objects[i].clone()).collect(),
            };
            // Relabel warnings on the shuffled layout back to original indices.
            let key = |w: &LayoutWarning, map: &dyn Fn(usize) -> usize| match w {
                LayoutWarning::Containment { outer, inner } => (0, map(*outer), map(*inner), 0u64),
                LayoutWarning::Overlap { a, b, ratio } => {
                    let (p, q) = (map(*a), map(*b));
                    (1, p.min(q), p.max(q), ratio.to_bits())
                }
            };
            let mut orig: Vec<_> = validate_layout(&l).iter().map(|w| key(w, &|i| i)).collect();
            let mut back: Vec<_> = validate_layout(&shuffled).iter().map(|w| key(w, &|i| perm[i])).collect();
            orig.sort();
            back.sort();
            prop_assert_eq!(orig, back);
        }
    }
}
