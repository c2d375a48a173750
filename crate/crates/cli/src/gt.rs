//! Ground-truth box files and conversion from VOC-style XML annotations.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use eigenseg::localize::BoundingBox;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// `{image_id: [[x1, y1, x2, y2], ...]}` with half-open pixel boxes.
pub type GtBoxes = BTreeMap<String, Vec<[u32; 4]>>;

pub fn read_gt_boxes(path: &Path) -> Result<BTreeMap<String, Vec<BoundingBox>>, CliError> {
    let raw: GtBoxes =
        serde_json::from_slice(&fs::read(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    raw.into_iter()
        .map(|(id, boxes)| {
            let boxes = boxes
                .into_iter()
                .map(|[x1, y1, x2, y2]| BoundingBox::new(x1, y1, x2, y2))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::Input(format!("{}: image {id}: {e}", path.display())))?;
            Ok((id, boxes))
        })
        .collect()
}

/// One line of the predictions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub image_id: String,
    pub x1: u32,
    pub y1: u32,
    pub x2: u32,
    pub y2: u32,
}

impl Prediction {
    pub fn new(image_id: &str, b: &BoundingBox) -> Self {
        Self { image_id: image_id.to_string(), x1: b.x1, y1: b.y1, x2: b.x2, y2: b.y2 }
    }

    pub fn bbox(&self) -> Result<BoundingBox, CliError> {
        BoundingBox::new(self.x1, self.y1, self.x2, self.y2)
            .map_err(|e| CliError::Input(format!("prediction for {}: {e}", self.image_id)))
    }
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>, CliError> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::Input(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Boxes of every `<object>` in a VOC annotation. VOC corners are 1-based
/// and inclusive, so `[xmin, xmax]` becomes `[xmin - 1, xmax)`.
pub fn parse_voc(xml: &str) -> Result<(Option<String>, Vec<[u32; 4]>), String> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| e.to_string())?;
    let root = doc.root_element();
    let filename =
        root.children().find(|n| n.has_tag_name("filename")).and_then(|n| n.text()).map(|t| t.trim().to_string());
    let mut boxes = Vec::new();
    for obj in root.children().filter(|n| n.has_tag_name("object")) {
        let bb = obj.children().find(|n| n.has_tag_name("bndbox")).ok_or("object without bndbox")?;
        let coord = |tag: &str| -> Result<u32, String> {
            let text =
                bb.children().find(|n| n.has_tag_name(tag)).and_then(|n| n.text()).ok_or(format!("missing {tag}"))?;
            // Some annotations store coordinates as decimals.
            let v: f64 = text.trim().parse().map_err(|_| format!("bad {tag}: {text:?}"))?;
            if v.is_nan() || v < 0.0 {
                return Err(format!("bad {tag}: {text:?}"));
            }
            Ok(v.round() as u32)
        };
        let (xmin, ymin, xmax, ymax) = (coord("xmin")?, coord("ymin")?, coord("xmax")?, coord("ymax")?);
        if xmax < xmin.max(1) || ymax < ymin.max(1) {
            return Err(format!("empty box ({xmin}, {ymin}, {xmax}, {ymax})"));
        }
        boxes.push([xmin.saturating_sub(1), ymin.saturating_sub(1), xmax, ymax]);
    }
    Ok((filename, boxes))
}

/// Convert every `*.xml` in `dir`; the image id is the file stem.
pub fn convert_voc_dir(dir: &Path) -> Result<GtBoxes, CliError> {
    let mut out = GtBoxes::new();
    for path in crate::commands::sorted_files(dir, "xml")? {
        let id = crate::commands::stem(&path);
        let (_, boxes) =
            parse_voc(&fs::read_to_string(&path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        out.insert(id, boxes);
    }
    Ok(out)
}
