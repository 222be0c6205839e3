//! DOTA-style annotation and detection files.
//!
//! Ground truth: one file per image, optional `imagesource:`/`gsd:` header
//! lines, then `x1 y1 x2 y2 x3 y3 x4 y4 category difficulty` per object.
//! Detections: one file per category, `image_id score x1 y1 ... x4 y4` per line.
//!
//! Reading and re-writing an untouched file reproduces it byte for byte,
//! including blank lines, CRLF terminators and a missing final newline.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{min_area_rect, OrientedBox, Point2};
use crate::transform::AnnotationRecord;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{source_name}:{line}: {field}: {message}")]
pub struct ParseError {
    pub source_name: String,
    /// 1-based
    pub line: usize,
    pub field: String,
    pub message: String,
}

const HEADER_PREFIXES: [&str; 2] = ["imagesource:", "gsd:"];

#[derive(Debug, Clone, PartialEq)]
struct SourceLine {
    text: String,
    coord_text: String,
    parsed_box: OrientedBox<f64>,
    category: String,
    difficulty: u32,
}

/// An annotation record together with the quadrilateral it was read from.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedObject {
    pub record: AnnotationRecord<f64>,
    pub quad: [f64; 8],
    source: Option<SourceLine>,
}

impl AnnotatedObject {
    /// A new object with no source text; it is always written from its box.
    pub fn new(record: AnnotationRecord<f64>) -> Self {
        let quad = corners_to_quad(&record.bbox.corners());
        Self { record, quad, source: None }
    }

    pub fn quad_points(&self) -> [Point2<f64>; 4] {
        quad_points(&self.quad)
    }

    /// True when the box differs from the one parsed from the source line.
    pub fn box_modified(&self) -> bool {
        self.source.as_ref().is_none_or(|s| s.parsed_box != self.record.bbox)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum LineKind {
    Header(usize),
    Blank,
    Object(usize),
}

#[derive(Debug, Clone, PartialEq)]
struct LayoutLine {
    kind: LineKind,
    raw: String,
    crlf: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
struct Layout {
    lines: Vec<LayoutLine>,
    trailing_newline: bool,
}

/// One ground-truth file.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationFile {
    pub image_id: String,
    pub header_lines: Vec<String>,
    pub objects: Vec<AnnotatedObject>,
    layout: Layout,
}

impl AnnotationFile {
    pub fn new(image_id: impl Into<String>) -> Self {
        Self { image_id: image_id.into(), header_lines: Vec::new(), objects: Vec::new(), layout: Layout { lines: Vec::new(), trailing_newline: true } }
    }

    pub fn records(&self) -> Vec<AnnotationRecord<f64>> {
        self.objects.iter().map(|o| o.record.clone()).collect()
    }

    /// Replaces the records in order; `records.len()` must equal the object count.
    pub fn set_records(&mut self, records: Vec<AnnotationRecord<f64>>) {
        assert_eq!(records.len(), self.objects.len(), "record count must be preserved");
        for (obj, rec) in self.objects.iter_mut().zip(records) {
            obj.record = rec;
        }
    }
}

pub fn quad_points(q: &[f64; 8]) -> [Point2<f64>; 4] {
    [Point2::new(q[0], q[1]), Point2::new(q[2], q[3]), Point2::new(q[4], q[5]), Point2::new(q[6], q[7])]
}

fn corners_to_quad(c: &[Point2<f64>; 4]) -> [f64; 8] {
    [c[0].x, c[0].y, c[1].x, c[1].y, c[2].x, c[2].y, c[3].x, c[3].y]
}

/// Oriented box of a quadrilateral: its minimum-area enclosing rectangle.
pub fn quad_to_obb(q: &[f64; 8]) -> OrientedBox<f64> {
    min_area_rect(&quad_points(q)).expect("four finite points")
}

fn parse_quad(tokens: &[&str], source_name: &str, line: usize, first_field: usize) -> Result<[f64; 8], ParseError> {
    let mut quad = [0.0; 8];
    for (k, tok) in tokens.iter().enumerate() {
        let axis = if k % 2 == 0 { 'x' } else { 'y' };
        let field = format!("{axis}{} (field {})", k / 2 + 1, first_field + k + 1);
        let v: f64 = tok.parse().map_err(|_| ParseError {
            source_name: source_name.into(),
            line,
            field: field.clone(),
            message: format!("not a number: {tok:?}"),
        })?;
        if !v.is_finite() {
            return Err(ParseError { source_name: source_name.into(), line, field, message: format!("not finite: {tok:?}") });
        }
        quad[k] = v;
    }
    Ok(quad)
}

fn split_lines(text: &str) -> (Vec<(&str, bool)>, bool) {
    if text.is_empty() {
        return (Vec::new(), true);
    }
    let trailing_newline = text.ends_with('\n');
    let body = if trailing_newline { &text[..text.len() - 1] } else { text };
    let lines = body
        .split('\n')
        .map(|l| match l.strip_suffix('\r') {
            Some(s) => (s, true),
            None => (l, false),
        })
        .collect();
    (lines, trailing_newline)
}

pub fn read_dota_annotations(text: &str, image_id: &str) -> Result<AnnotationFile, ParseError> {
    let mut file = AnnotationFile::new(image_id);
    let (lines, trailing_newline) = split_lines(text);
    file.layout.trailing_newline = trailing_newline;
    for (idx, (raw, crlf)) in lines.into_iter().enumerate() {
        let lineno = idx + 1;
        let trimmed = raw.trim();
        let kind = if trimmed.is_empty() {
            LineKind::Blank
        } else if HEADER_PREFIXES.iter().any(|p| trimmed.starts_with(p)) {
            file.header_lines.push(raw.to_string());
            LineKind::Header(file.header_lines.len() - 1)
        } else {
            let obj = parse_annotation_line(raw, image_id, lineno)?;
            file.objects.push(obj);
            LineKind::Object(file.objects.len() - 1)
        };
        file.layout.lines.push(LayoutLine { kind, raw: raw.to_string(), crlf });
    }
    Ok(file)
}

fn parse_annotation_line(raw: &str, source_name: &str, line: usize) -> Result<AnnotatedObject, ParseError> {
    let err = |field: &str, message: String| ParseError { source_name: source_name.into(), line, field: field.into(), message };
    let tokens: Vec<&str> = raw.split_whitespace().collect();
    if tokens.len() != 10 {
        return Err(err("line", format!("expected 10 whitespace-separated fields, found {}", tokens.len())));
    }
    let quad = parse_quad(&tokens[..8], source_name, line, 0)?;
    let category = tokens[8].to_string();
    let difficulty: u32 = tokens[9].parse().map_err(|_| err("difficulty (field 10)", format!("not a non-negative integer: {:?}", tokens[9])))?;
    let bbox = quad_to_obb(&quad);
    let coord_text = tokens[..8].join(" ");
    Ok(AnnotatedObject {
        record: AnnotationRecord { bbox, category: category.clone(), difficulty },
        quad,
        source: Some(SourceLine { text: raw.to_string(), coord_text, parsed_box: bbox, category, difficulty }),
    })
}

fn fmt_coord(v: f64) -> String {
    let s = format!("{v:.1}");
    if s == "-0.0" {
        "0.0".into()
    } else {
        s
    }
}

/// Corners of the object's current box, cyclically rotated so the first
/// corner is the one nearest the (equally displaced) first source vertex.
fn output_corners(obj: &AnnotatedObject, source: Option<&SourceLine>) -> [Point2<f64>; 4] {
    let corners = obj.record.bbox.corners();
    let Some(src) = source else {
        return corners;
    };
    let anchor = Point2::new(
        obj.quad[0] + obj.record.bbox.x_c - src.parsed_box.x_c,
        obj.quad[1] + obj.record.bbox.y_c - src.parsed_box.y_c,
    );
    let start = (0..4)
        .min_by(|&a, &b| corners[a].distance(anchor).total_cmp(&corners[b].distance(anchor)))
        .unwrap_or(0);
    std::array::from_fn(|k| corners[(start + k) % 4])
}

fn object_line(obj: &AnnotatedObject) -> String {
    let rec = &obj.record;
    match &obj.source {
        Some(src) if src.parsed_box == rec.bbox && src.category == rec.category && src.difficulty == rec.difficulty => src.text.clone(),
        Some(src) if src.parsed_box == rec.bbox => format!("{} {} {}", src.coord_text, rec.category, rec.difficulty),
        source => {
            let coords: Vec<String> = output_corners(obj, source.as_ref()).iter().flat_map(|p| [fmt_coord(p.x), fmt_coord(p.y)]).collect();
            format!("{} {} {}", coords.join(" "), rec.category, rec.difficulty)
        }
    }
}

pub fn write_dota_annotations(file: &AnnotationFile) -> String {
    let mut out = String::new();
    let mut lines: Vec<(String, bool)> = Vec::new();
    let laid_out_headers: Vec<usize> = file.layout.lines.iter().filter_map(|l| match l.kind {
        LineKind::Header(i) => Some(i),
        _ => None,
    }).collect();
    for (i, h) in file.header_lines.iter().enumerate() {
        if !laid_out_headers.contains(&i) {
            lines.push((h.clone(), false));
        }
    }
    let mut emitted = vec![false; file.objects.len()];
    for l in &file.layout.lines {
        match l.kind {
            LineKind::Header(i) => {
                if let Some(h) = file.header_lines.get(i) {
                    lines.push((h.clone(), l.crlf));
                }
            }
            LineKind::Blank => lines.push((l.raw.clone(), l.crlf)),
            LineKind::Object(i) => {
                if let Some(obj) = file.objects.get(i) {
                    lines.push((object_line(obj), l.crlf));
                    emitted[i] = true;
                }
            }
        }
    }
    for (obj, done) in file.objects.iter().zip(&emitted) {
        if !done {
            lines.push((object_line(obj), false));
        }
    }
    let n = lines.len();
    for (k, (text, crlf)) in lines.into_iter().enumerate() {
        out.push_str(&text);
        if k + 1 < n || file.layout.trailing_newline {
            out.push_str(if crlf { "\r\n" } else { "\n" });
        }
    }
    out
}

/// One detection from a per-category result file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionRecord {
    pub image_id: String,
    pub score: f64,
    pub quad: [f64; 8],
    pub category: String,
}

impl DetectionRecord {
    pub fn bbox(&self) -> OrientedBox<f64> {
        quad_to_obb(&self.quad)
    }
}

/// Category name for a detection file: its stem without a `Task1_` prefix.
pub fn category_from_detection_filename(file_name: &str) -> String {
    let stem = file_name.strip_suffix(".txt").unwrap_or(file_name);
    stem.strip_prefix("Task1_").unwrap_or(stem).to_string()
}

/// Reads per-category detection files; output follows map (category) order, then line order.
pub fn read_dota_detections(files: &BTreeMap<String, String>) -> Result<Vec<DetectionRecord>, ParseError> {
    let mut out = Vec::new();
    for (category, text) in files {
        for (idx, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            out.push(parse_detection_line(raw, category, idx + 1)?);
        }
    }
    Ok(out)
}

fn parse_detection_line(raw: &str, category: &str, line: usize) -> Result<DetectionRecord, ParseError> {
    let err = |field: &str, message: String| ParseError { source_name: category.into(), line, field: field.into(), message };
    let tokens: Vec<&str> = raw.split_whitespace().collect();
    if tokens.len() != 10 {
        return Err(err("line", format!("expected 10 whitespace-separated fields, found {}", tokens.len())));
    }
    let score: f64 = tokens[1].parse().map_err(|_| err("score (field 2)", format!("not a number: {:?}", tokens[1])))?;
    if !(0.0..=1.0).contains(&score) {
        return Err(err("score (field 2)", format!("must lie in [0, 1], got {score}")));
    }
    let quad = parse_quad(&tokens[2..], category, line, 2)?;
    Ok(DetectionRecord { image_id: tokens[0].to_string(), score, quad, category: category.to_string() })
}

/// Serializes detections of one category in Task-1 form.
pub fn write_dota_detections(dets: &[DetectionRecord]) -> String {
    let mut out = String::new();
    for d in dets {
        let coords: Vec<String> = d.quad.iter().map(|v| v.to_string()).collect();
        out.push_str(&format!("{} {} {}\n", d.image_id, d.score, coords.join(" ")));
    }
    out
}
