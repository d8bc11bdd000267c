//! Page rasterization.
//!
//! Pages are rendered by a small content-stream interpreter: paths, fills,
//! strokes, device colors and the CTM are honoured; text is drawn as one
//! solid bar per word at the glyph x-height; images are drawn as grey
//! boxes. Output is PNG and byte-for-byte deterministic for a given input
//! and dpi.

use std::fmt;
use std::fs;
use std::path::Path;

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ImageEncoder, Rgb, RgbImage};
use lopdf::content::Content;
use lopdf::{Dictionary, Object, ObjectId};
use rayon::prelude::*;

use super::document::Document;
use super::IngestError;

pub const DEFAULT_DPI: u32 = 150;
pub const DPI_RANGE: std::ops::RangeInclusive<u32> = 72..=600;

/// Rendered page. `page_index` is 1-based.
#[derive(Clone, PartialEq, Eq)]
pub struct PageImage {
    pub doc_id: String,
    pub page_index: u32,
    pub width_px: u32,
    pub height_px: u32,
    pub dpi: u32,
    pub png: Vec<u8>,
}

impl fmt::Debug for PageImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PageImage")
            .field("doc_id", &self.doc_id)
            .field("page_index", &self.page_index)
            .field("width_px", &self.width_px)
            .field("height_px", &self.height_px)
            .field("dpi", &self.dpi)
            .field("png_bytes", &self.png.len())
            .finish()
    }
}

pub fn rasterize(document: &Document, dpi: u32) -> Result<Vec<PageImage>, IngestError> {
    if !DPI_RANGE.contains(&dpi) {
        return Err(IngestError::InvalidDpi(dpi));
    }
    let bytes = fs::read(&document.path).map_err(|source| IngestError::Io {
        path: document.path.clone(),
        source,
    })?;
    rasterize_bytes(&document.doc_id, &bytes, dpi).map_err(|e| match e {
        IngestError::MalformedDocument { reason, .. } => IngestError::MalformedDocument {
            path: document.path.clone(),
            reason,
        },
        other => other,
    })
}

pub fn rasterize_bytes(
    doc_id: &str,
    bytes: &[u8],
    dpi: u32,
) -> Result<Vec<PageImage>, IngestError> {
    if !DPI_RANGE.contains(&dpi) {
        return Err(IngestError::InvalidDpi(dpi));
    }
    let pdf = lopdf::Document::load_mem(bytes).map_err(|e| IngestError::MalformedDocument {
        path: Default::default(),
        reason: e.to_string(),
    })?;
    let pages: Vec<(u32, ObjectId)> = pdf.get_pages().into_iter().collect();
    pages
        .par_iter()
        .map(|&(index, page_id)| {
            render_page(&pdf, page_id, dpi)
                .map(|(width_px, height_px, png)| PageImage {
                    doc_id: doc_id.to_string(),
                    page_index: index,
                    width_px,
                    height_px,
                    dpi,
                    png,
                })
                .map_err(|reason| IngestError::RasterizationFailure {
                    page: index,
                    reason,
                })
        })
        .collect()
}

/// Writes `<dir>/<page_index>.png` for every image.
pub fn write_page_images(images: &[PageImage], dir: &Path) -> Result<(), IngestError> {
    fs::create_dir_all(dir).map_err(|source| IngestError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for image in images {
        let path = dir.join(format!("{}.png", image.page_index));
        fs::write(&path, &image.png).map_err(|source| IngestError::Io { path, source })?;
    }
    Ok(())
}

/// Reads previously written page images; `None` if any page is missing or
/// unreadable.
pub fn load_page_images(
    dir: &Path,
    doc_id: &str,
    dpi: u32,
    pages: impl IntoIterator<Item = u32>,
) -> Option<Vec<PageImage>> {
    pages
        .into_iter()
        .map(|page_index| {
            let path = dir.join(format!("{page_index}.png"));
            let png = fs::read(&path).ok()?;
            let (width_px, height_px) =
                image::load_from_memory_with_format(&png, image::ImageFormat::Png)
                    .ok()
                    .map(|img| (img.width(), img.height()))?;
            Some(PageImage {
                doc_id: doc_id.to_string(),
                page_index,
                width_px,
                height_px,
                dpi,
                png,
            })
        })
        .collect()
}

/// Page size in device pixels for a box given in points.
pub fn pixel_size(width_pt: f64, height_pt: f64, dpi: u32) -> (u32, u32) {
    let scale = dpi as f64 / 72.0;
    (
        ((width_pt * scale).round() as u32).max(1),
        ((height_pt * scale).round() as u32).max(1),
    )
}

fn num(obj: &Object) -> Option<f64> {
    match obj {
        Object::Integer(i) => Some(*i as f64),
        Object::Real(r) => Some(*r as f64),
        _ => None,
    }
}

fn nums(operands: &[Object]) -> Vec<f64> {
    operands.iter().filter_map(num).collect()
}

fn resolve<'a>(pdf: &'a lopdf::Document, obj: &'a Object) -> &'a Object {
    match obj {
        Object::Reference(id) => pdf.get_object(*id).unwrap_or(obj),
        _ => obj,
    }
}

/// Looks up an inheritable page attribute through the Parent chain.
fn inherited<'a>(pdf: &'a lopdf::Document, page_id: ObjectId, key: &[u8]) -> Option<&'a Object> {
    let mut dict = pdf.get_dictionary(page_id).ok()?;
    for _ in 0..32 {
        if let Ok(value) = dict.get(key) {
            return Some(resolve(pdf, value));
        }
        let parent = dict.get(b"Parent").ok()?.as_reference().ok()?;
        dict = pdf.get_dictionary(parent).ok()?;
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Matrix([f64; 6]);

impl Matrix {
    const IDENTITY: Matrix = Matrix([1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);

    fn translate(tx: f64, ty: f64) -> Matrix {
        Matrix([1.0, 0.0, 0.0, 1.0, tx, ty])
    }

    /// `self` applied first, then `other`.
    fn then(&self, other: &Matrix) -> Matrix {
        let [a, b, c, d, e, f] = self.0;
        let [a2, b2, c2, d2, e2, f2] = other.0;
        Matrix([
            a * a2 + b * c2,
            a * b2 + b * d2,
            c * a2 + d * c2,
            c * b2 + d * d2,
            e * a2 + f * c2 + e2,
            e * b2 + f * d2 + f2,
        ])
    }

    fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let [a, b, c, d, e, f] = self.0;
        (a * x + c * y + e, b * x + d * y + f)
    }

    fn scale(&self) -> f64 {
        let [a, b, c, d, _, _] = self.0;
        (a * d - b * c).abs().sqrt()
    }
}

#[derive(Debug, Clone)]
struct GraphicsState {
    ctm: Matrix,
    fill: Rgb<u8>,
    stroke: Rgb<u8>,
    line_width: f64,
    font_size: f64,
    leading: f64,
    horizontal_scale: f64,
    word_spacing: f64,
    rise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum FillRule {
    NonZero,
    EvenOdd,
}

struct Canvas {
    image: RgbImage,
}

impl Canvas {
    fn fill_polygons(&mut self, polygons: &[Vec<(f64, f64)>], rule: FillRule, color: Rgb<u8>) {
        let (width, height) = (self.image.width() as i64, self.image.height() as i64);
        let mut edges = Vec::new();
        let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
        for poly in polygons {
            if poly.len() < 2 {
                continue;
            }
            for i in 0..poly.len() {
                let p = poly[i];
                let q = poly[(i + 1) % poly.len()];
                if p.1 != q.1
                    && p.0.is_finite()
                    && p.1.is_finite()
                    && q.0.is_finite()
                    && q.1.is_finite()
                {
                    edges.push((p, q));
                    ymin = ymin.min(p.1.min(q.1));
                    ymax = ymax.max(p.1.max(q.1));
                }
            }
        }
        if edges.is_empty() {
            return;
        }
        let row_start = (ymin.floor() as i64).max(0);
        let row_end = (ymax.ceil() as i64).min(height);
        let mut crossings: Vec<(f64, i32)> = Vec::new();
        for row in row_start..row_end {
            let yc = row as f64 + 0.5;
            crossings.clear();
            for &((x0, y0), (x1, y1)) in &edges {
                let (lo, hi, dir) = if y0 < y1 { (y0, y1, 1) } else { (y1, y0, -1) };
                if yc >= lo && yc < hi {
                    crossings.push((x0 + (yc - y0) * (x1 - x0) / (y1 - y0), dir));
                }
            }
            crossings.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut winding = 0;
            for pair in crossings.windows(2) {
                winding += pair[0].1;
                let inside = match rule {
                    FillRule::NonZero => winding != 0,
                    FillRule::EvenOdd => winding % 2 != 0,
                };
                if !inside {
                    continue;
                }
                let from = ((pair[0].0 - 0.5).ceil() as i64).max(0);
                let to = ((pair[1].0 - 0.5).ceil() as i64).min(width);
                for col in from..to {
                    self.image.put_pixel(col as u32, row as u32, color);
                }
            }
        }
    }

    fn stroke_polylines(&mut self, lines: &[Vec<(f64, f64)>], width: f64, color: Rgb<u8>) {
        let half = width.max(1.0) / 2.0;
        let mut quads = Vec::new();
        for line in lines {
            for seg in line.windows(2) {
                let ((x0, y0), (x1, y1)) = (seg[0], seg[1]);
                let len = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
                if len == 0.0 || !len.is_finite() {
                    continue;
                }
                let (nx, ny) = (-(y1 - y0) / len * half, (x1 - x0) / len * half);
                quads.push(vec![
                    (x0 + nx, y0 + ny),
                    (x1 + nx, y1 + ny),
                    (x1 - nx, y1 - ny),
                    (x0 - nx, y0 - ny),
                ]);
            }
        }
        for quad in &quads {
            self.fill_polygons(std::slice::from_ref(quad), FillRule::NonZero, color);
        }
    }
}

fn gray(v: f64) -> Rgb<u8> {
    let c = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    Rgb([c, c, c])
}

fn rgb(r: f64, g: f64, b: f64) -> Rgb<u8> {
    let c = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    Rgb([c(r), c(g), c(b)])
}

fn cmyk(c: f64, m: f64, y: f64, k: f64) -> Rgb<u8> {
    rgb(
        (1.0 - c) * (1.0 - k),
        (1.0 - m) * (1.0 - k),
        (1.0 - y) * (1.0 - k),
    )
}

fn color_from(values: &[f64]) -> Option<Rgb<u8>> {
    match values {
        [g] => Some(gray(*g)),
        [r, g, b] => Some(rgb(*r, *g, *b)),
        [c, m, y, k] => Some(cmyk(*c, *m, *y, *k)),
        _ => None,
    }
}

const MAX_FORM_DEPTH: usize = 8;
const GLYPH_ADVANCE_EM: f64 = 0.5;
const XHEIGHT_EM: f64 = 0.5;

struct Interpreter<'a> {
    pdf: &'a lopdf::Document,
    canvas: Canvas,
    state: GraphicsState,
    stack: Vec<GraphicsState>,
    path: Vec<Vec<(f64, f64)>>,
    current: (f64, f64),
    text_matrix: Matrix,
    line_matrix: Matrix,
}

impl<'a> Interpreter<'a> {
    fn run(
        &mut self,
        content: &[u8],
        resources: Option<&'a Dictionary>,
        depth: usize,
    ) -> Result<(), String> {
        let ops = Content::decode(content)
            .map_err(|e| format!("content stream: {e}"))?
            .operations;
        // The decoder stops silently at the first token it cannot read.
        if ops.is_empty() && content.iter().any(|b| !b.is_ascii_whitespace()) {
            return Err("content stream has no readable operators".into());
        }
        for op in ops {
            let v = nums(&op.operands);
            match op.operator.as_str() {
                "q" => self.stack.push(self.state.clone()),
                "Q" => {
                    if let Some(s) = self.stack.pop() {
                        self.state = s;
                    }
                }
                "cm" if v.len() == 6 => {
                    let m = Matrix([v[0], v[1], v[2], v[3], v[4], v[5]]);
                    self.state.ctm = m.then(&self.state.ctm);
                }
                "w" if !v.is_empty() => self.state.line_width = v[0],
                "m" if v.len() == 2 => {
                    self.current = (v[0], v[1]);
                    self.path.push(vec![self.state.ctm.apply(v[0], v[1])]);
                }
                "l" if v.len() == 2 => self.line_to(v[0], v[1]),
                "c" if v.len() == 6 => self.curve_to((v[0], v[1]), (v[2], v[3]), (v[4], v[5])),
                "v" if v.len() == 4 => self.curve_to(self.current, (v[0], v[1]), (v[2], v[3])),
                "y" if v.len() == 4 => self.curve_to((v[0], v[1]), (v[2], v[3]), (v[2], v[3])),
                "h" => self.close_subpath(),
                "re" if v.len() == 4 => {
                    let (x, y, w, h) = (v[0], v[1], v[2], v[3]);
                    let ctm = self.state.ctm;
                    self.path.push(vec![
                        ctm.apply(x, y),
                        ctm.apply(x + w, y),
                        ctm.apply(x + w, y + h),
                        ctm.apply(x, y + h),
                        ctm.apply(x, y),
                    ]);
                    self.current = (x, y);
                }
                "f" | "F" => self.paint(Some(FillRule::NonZero), false),
                "f*" => self.paint(Some(FillRule::EvenOdd), false),
                "S" => self.paint(None, true),
                "s" => {
                    self.close_subpath();
                    self.paint(None, true);
                }
                "B" => self.paint(Some(FillRule::NonZero), true),
                "B*" => self.paint(Some(FillRule::EvenOdd), true),
                "b" => {
                    self.close_subpath();
                    self.paint(Some(FillRule::NonZero), true);
                }
                "b*" => {
                    self.close_subpath();
                    self.paint(Some(FillRule::EvenOdd), true);
                }
                "n" => self.path.clear(),
                "g" | "rg" | "k" | "sc" | "scn" => {
                    if let Some(c) = color_from(&v) {
                        self.state.fill = c;
                    }
                }
                "G" | "RG" | "K" | "SC" | "SCN" => {
                    if let Some(c) = color_from(&v) {
                        self.state.stroke = c;
                    }
                }
                "BT" => {
                    self.text_matrix = Matrix::IDENTITY;
                    self.line_matrix = Matrix::IDENTITY;
                }
                "Tf" => {
                    if let Some(size) = op.operands.get(1).and_then(num) {
                        self.state.font_size = size;
                    }
                }
                "TL" if !v.is_empty() => self.state.leading = v[0],
                "Tz" if !v.is_empty() => self.state.horizontal_scale = v[0] / 100.0,
                "Tw" if !v.is_empty() => self.state.word_spacing = v[0],
                "Ts" if !v.is_empty() => self.state.rise = v[0],
                "Td" if v.len() == 2 => self.next_line(v[0], v[1]),
                "TD" if v.len() == 2 => {
                    self.state.leading = -v[1];
                    self.next_line(v[0], v[1]);
                }
                "Tm" if v.len() == 6 => {
                    self.text_matrix = Matrix([v[0], v[1], v[2], v[3], v[4], v[5]]);
                    self.line_matrix = self.text_matrix;
                }
                "T*" => self.next_line(0.0, -self.state.leading),
                "Tj" => {
                    if let Some(Object::String(bytes, _)) = op.operands.first() {
                        self.show_text(bytes);
                    }
                }
                "'" => {
                    self.next_line(0.0, -self.state.leading);
                    if let Some(Object::String(bytes, _)) = op.operands.first() {
                        self.show_text(bytes);
                    }
                }
                "\"" => {
                    if let Some(w) = op.operands.first().and_then(num) {
                        self.state.word_spacing = w;
                    }
                    self.next_line(0.0, -self.state.leading);
                    if let Some(Object::String(bytes, _)) = op.operands.get(2) {
                        self.show_text(bytes);
                    }
                }
                "TJ" => {
                    if let Some(Object::Array(items)) = op.operands.first() {
                        for item in items {
                            match item {
                                Object::String(bytes, _) => self.show_text(bytes),
                                other => {
                                    if let Some(adjust) = num(other) {
                                        let tx = -adjust / 1000.0
                                            * self.state.font_size
                                            * self.state.horizontal_scale;
                                        self.text_matrix =
                                            Matrix::translate(tx, 0.0).then(&self.text_matrix);
                                    }
                                }
                            }
                        }
                    }
                }
                "Do" => {
                    if let Some(Object::Name(name)) = op.operands.first() {
                        self.draw_xobject(name, resources, depth)?;
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn line_to(&mut self, x: f64, y: f64) {
        let p = self.state.ctm.apply(x, y);
        match self.path.last_mut() {
            Some(sub) => sub.push(p),
            None => self.path.push(vec![p]),
        }
        self.current = (x, y);
    }

    fn curve_to(&mut self, c1: (f64, f64), c2: (f64, f64), end: (f64, f64)) {
        let start = self.current;
        const STEPS: usize = 12;
        for i in 1..=STEPS {
            let t = i as f64 / STEPS as f64;
            let u = 1.0 - t;
            let x = u * u * u * start.0
                + 3.0 * u * u * t * c1.0
                + 3.0 * u * t * t * c2.0
                + t * t * t * end.0;
            let y = u * u * u * start.1
                + 3.0 * u * u * t * c1.1
                + 3.0 * u * t * t * c2.1
                + t * t * t * end.1;
            self.line_to(x, y);
        }
        self.current = end;
    }

    fn close_subpath(&mut self) {
        if let Some(sub) = self.path.last_mut() {
            if let (Some(&first), Some(&last)) = (sub.first(), sub.last()) {
                if first != last {
                    sub.push(first);
                }
            }
        }
    }

    fn paint(&mut self, fill: Option<FillRule>, stroke: bool) {
        let path = std::mem::take(&mut self.path);
        if let Some(rule) = fill {
            self.canvas.fill_polygons(&path, rule, self.state.fill);
        }
        if stroke {
            let width = self.state.line_width * self.state.ctm.scale();
            self.canvas
                .stroke_polylines(&path, width, self.state.stroke);
        }
    }

    fn next_line(&mut self, tx: f64, ty: f64) {
        self.line_matrix = Matrix::translate(tx, ty).then(&self.line_matrix);
        self.text_matrix = self.line_matrix;
    }

    fn show_text(&mut self, bytes: &[u8]) {
        let size = self.state.font_size;
        let hscale = self.state.horizontal_scale;
        let glyph_space = Matrix([size * hscale, 0.0, 0.0, size, 0.0, self.state.rise]);
        let mut word_len = 0usize;
        let flush = |interp: &mut Self, len: usize| {
            if len == 0 {
                return;
            }
            let device = glyph_space
                .then(&interp.text_matrix)
                .then(&interp.state.ctm);
            let w = len as f64 * GLYPH_ADVANCE_EM;
            let quad = vec![
                device.apply(0.0, 0.0),
                device.apply(w, 0.0),
                device.apply(w, XHEIGHT_EM),
                device.apply(0.0, XHEIGHT_EM),
            ];
            interp
                .canvas
                .fill_polygons(&[quad], FillRule::NonZero, interp.state.fill);
            let tx = w * size * hscale;
            interp.text_matrix = Matrix::translate(tx, 0.0).then(&interp.text_matrix);
        };
        for &b in bytes {
            if b == b' ' {
                flush(self, word_len);
                word_len = 0;
                let tx = (GLYPH_ADVANCE_EM * size + self.state.word_spacing) * hscale;
                self.text_matrix = Matrix::translate(tx, 0.0).then(&self.text_matrix);
            } else {
                word_len += 1;
            }
        }
        flush(self, word_len);
    }

    fn draw_xobject(
        &mut self,
        name: &[u8],
        resources: Option<&'a Dictionary>,
        depth: usize,
    ) -> Result<(), String> {
        let pdf = self.pdf;
        let Some(stream) = resources
            .and_then(|r| r.get(b"XObject").ok())
            .map(|x| resolve(pdf, x))
            .and_then(|x| x.as_dict().ok())
            .and_then(|x| x.get(name).ok())
            .map(|x| resolve(pdf, x))
            .and_then(|x| x.as_stream().ok())
        else {
            return Ok(());
        };
        let subtype = stream
            .dict
            .get(b"Subtype")
            .and_then(Object::as_name)
            .unwrap_or(b"");
        match subtype {
            b"Image" => {
                let ctm = self.state.ctm;
                let square = vec![
                    ctm.apply(0.0, 0.0),
                    ctm.apply(1.0, 0.0),
                    ctm.apply(1.0, 1.0),
                    ctm.apply(0.0, 1.0),
                ];
                self.canvas
                    .fill_polygons(&[square], FillRule::NonZero, Rgb([160, 160, 160]));
            }
            b"Form" if depth < MAX_FORM_DEPTH => {
                let content = stream
                    .decompressed_content()
                    .unwrap_or_else(|_| stream.content.clone());
                let matrix = stream
                    .dict
                    .get(b"Matrix")
                    .ok()
                    .and_then(|m| m.as_array().ok())
                    .map(|a| nums(a))
                    .filter(|a| a.len() == 6)
                    .map(|a| Matrix([a[0], a[1], a[2], a[3], a[4], a[5]]))
                    .unwrap_or(Matrix::IDENTITY);
                let form_resources = stream
                    .dict
                    .get(b"Resources")
                    .ok()
                    .map(|r| resolve(pdf, r))
                    .and_then(|r| r.as_dict().ok())
                    .or(resources);
                self.stack.push(self.state.clone());
                self.state.ctm = matrix.then(&self.state.ctm);
                let saved_path = std::mem::take(&mut self.path);
                let result = self.run(&content, form_resources, depth + 1);
                self.path = saved_path;
                if let Some(s) = self.stack.pop() {
                    self.state = s;
                }
                result?;
            }
            _ => {}
        }
        Ok(())
    }
}

fn page_box(pdf: &lopdf::Document, page_id: ObjectId) -> [f64; 4] {
    inherited(pdf, page_id, b"MediaBox")
        .and_then(|o| o.as_array().ok())
        .map(|a| {
            a.iter()
                .map(|o| num(resolve(pdf, o)).unwrap_or(0.0))
                .collect::<Vec<_>>()
        })
        .filter(|a| a.len() == 4)
        .map(|a| {
            [
                a[0].min(a[2]),
                a[1].min(a[3]),
                a[0].max(a[2]),
                a[1].max(a[3]),
            ]
        })
        .filter(|b| b[2] > b[0] && b[3] > b[1])
        // US Letter when the box is missing or degenerate.
        .unwrap_or([0.0, 0.0, 612.0, 792.0])
}

fn render_page(
    pdf: &lopdf::Document,
    page_id: ObjectId,
    dpi: u32,
) -> Result<(u32, u32, Vec<u8>), String> {
    let [llx, lly, urx, ury] = page_box(pdf, page_id);
    let rotate = inherited(pdf, page_id, b"Rotate")
        .and_then(num)
        .unwrap_or(0.0) as i64;
    let rotate = rotate.rem_euclid(360);
    let s = dpi as f64 / 72.0;
    let (w_pt, h_pt) = (urx - llx, ury - lly);
    let (device, (width_px, height_px)) = match rotate {
        90 => (
            Matrix([0.0, s, s, 0.0, -lly * s, -llx * s]),
            pixel_size(h_pt, w_pt, dpi),
        ),
        180 => (
            Matrix([-s, 0.0, 0.0, s, urx * s, -lly * s]),
            pixel_size(w_pt, h_pt, dpi),
        ),
        270 => (
            Matrix([0.0, -s, -s, 0.0, ury * s, urx * s]),
            pixel_size(h_pt, w_pt, dpi),
        ),
        _ => (
            Matrix([s, 0.0, 0.0, -s, -llx * s, ury * s]),
            pixel_size(w_pt, h_pt, dpi),
        ),
    };
    let resources = inherited(pdf, page_id, b"Resources").and_then(|r| r.as_dict().ok());
    let content = pdf.get_page_content(page_id);
    let mut interp = Interpreter {
        pdf,
        canvas: Canvas {
            image: RgbImage::from_pixel(width_px, height_px, Rgb([255, 255, 255])),
        },
        state: GraphicsState {
            ctm: device,
            fill: Rgb([0, 0, 0]),
            stroke: Rgb([0, 0, 0]),
            line_width: 1.0,
            font_size: 12.0,
            leading: 0.0,
            horizontal_scale: 1.0,
            word_spacing: 0.0,
            rise: 0.0,
        },
        stack: Vec::new(),
        path: Vec::new(),
        current: (0.0, 0.0),
        text_matrix: Matrix::IDENTITY,
        line_matrix: Matrix::IDENTITY,
    };
    interp.run(&content, resources, 0)?;
    let mut png = Vec::new();
    PngEncoder::new_with_quality(&mut png, CompressionType::Fast, FilterType::Sub)
        .write_image(
            interp.canvas.image.as_raw(),
            width_px,
            height_px,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|e| format!("png encode: {e}"))?;
    Ok((width_px, height_px, png))
}

#[cfg(test)]
mod tests {
    use super::*;
    use lopdf::dictionary;
    use lopdf::{Object, Stream};

    /// Builds a PDF whose pages each draw the given content stream.
    fn pdf_with_pages(media_box: [i64; 4], contents: &[&str]) -> Vec<u8> {
        let mut doc = lopdf::Document::with_version("1.5");
        let pages_id = doc.new_object_id();
        let kids: Vec<Object> = contents
            .iter()
            .map(|c| {
                let content_id = doc.add_object(Stream::new(dictionary! {}, c.as_bytes().to_vec()));
                doc.add_object(dictionary! {
                    "Type" => "Page",
                    "Parent" => pages_id,
                    "Contents" => content_id,
                })
                .into()
            })
            .collect();
        let count = kids.len() as i64;
        doc.objects.insert(
            pages_id,
            Object::Dictionary(dictionary! {
                "Type" => "Pages",
                "Kids" => kids,
                "Count" => count,
                "MediaBox" => media_box.iter().map(|&v| Object::Integer(v)).collect::<Vec<_>>(),
            }),
        );
        let catalog = doc.add_object(dictionary! { "Type" => "Catalog", "Pages" => pages_id });
        doc.trailer.set("Root", catalog);
        let mut out = Vec::new();
        doc.save_to(&mut out).unwrap();
        out
    }

    fn decode(img: &PageImage) -> RgbImage {
        image::load_from_memory(&img.png).unwrap().to_rgb8()
    }

    #[test]
    fn a4_at_150_dpi_dimensions() {
        let bytes = pdf_with_pages([0, 0, 595, 842], &["", "", ""]);
        let pages = rasterize_bytes("d", &bytes, 150).unwrap();
        assert_eq!(pages.len(), 3);
        for (i, p) in pages.iter().enumerate() {
            assert_eq!(p.page_index, i as u32 + 1);
            assert_eq!((p.width_px, p.height_px), (1240, 1754));
        }
    }

    #[test]
    fn dimension_rounding_within_one_pixel() {
        for dpi in [72, 96, 150, 200, 300, 600] {
            let (w, h) = pixel_size(595.0, 842.0, dpi);
            assert!((w as f64 - 595.0 * dpi as f64 / 72.0).abs() <= 0.5);
            assert!((h as f64 - 842.0 * dpi as f64 / 72.0).abs() <= 0.5);
        }
    }

    #[test]
    fn invalid_dpi_rejected() {
        let bytes = pdf_with_pages([0, 0, 100, 100], &[""]);
        assert!(matches!(
            rasterize_bytes("d", &bytes, 0),
            Err(IngestError::InvalidDpi(0))
        ));
        assert!(matches!(
            rasterize_bytes("d", &bytes, 601),
            Err(IngestError::InvalidDpi(601))
        ));
    }

    #[test]
    fn rerender_is_byte_identical() {
        let bytes = pdf_with_pages(
            [0, 0, 200, 200],
            &["0 0 1 rg 10 10 50 50 re f BT /F1 12 Tf 20 150 Td (Hello world) Tj ET"],
        );
        let a = rasterize_bytes("d", &bytes, 72).unwrap();
        let b = rasterize_bytes("d", &bytes, 72).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn filled_rectangle_lands_in_device_space() {
        // 72 dpi: 1pt == 1px; rect from (10,10) to (60,60) in user space,
        // y flipped against a 200pt page.
        let bytes = pdf_with_pages([0, 0, 200, 200], &["1 0 0 rg 10 10 50 50 re f"]);
        let img = decode(&rasterize_bytes("d", &bytes, 72).unwrap()[0]);
        assert_eq!(img.get_pixel(35, 165), &Rgb([255, 0, 0]));
        assert_eq!(img.get_pixel(35, 100), &Rgb([255, 255, 255]));
        assert_eq!(img.get_pixel(5, 165), &Rgb([255, 255, 255]));
    }

    #[test]
    fn even_odd_leaves_a_hole() {
        let bytes = pdf_with_pages([0, 0, 100, 100], &["0 g 10 10 80 80 re 30 30 40 40 re f*"]);
        let img = decode(&rasterize_bytes("d", &bytes, 72).unwrap()[0]);
        assert_eq!(img.get_pixel(50, 50), &Rgb([255, 255, 255]));
        assert_eq!(img.get_pixel(20, 50), &Rgb([0, 0, 0]));
    }

    #[test]
    fn stroke_and_text_mark_pixels() {
        let bytes = pdf_with_pages(
            [0, 0, 100, 100],
            &[
                "0 G 2 w 0 50 m 100 50 l S",
                "BT /F1 20 Tf 10 40 Td (XXXX) Tj ET",
            ],
        );
        let pages = rasterize_bytes("d", &bytes, 72).unwrap();
        let line = decode(&pages[0]);
        assert_eq!(line.get_pixel(50, 50), &Rgb([0, 0, 0]));
        let text = decode(&pages[1]);
        // Four glyphs of 10pt advance starting at x=10, x-height 10pt above y=40.
        assert_eq!(text.get_pixel(30, 55), &Rgb([0, 0, 0]));
        assert_eq!(text.get_pixel(55, 55), &Rgb([255, 255, 255]));
    }

    #[test]
    fn broken_content_reports_page() {
        let bytes = pdf_with_pages([0, 0, 100, 100], &["", "(unterminated"]);
        match rasterize_bytes("d", &bytes, 72) {
            Err(IngestError::RasterizationFailure { page, .. }) => assert_eq!(page, 2),
            Ok(_) => panic!("garbage content stream was accepted"),
            Err(other) => panic!("unexpected error {other}"),
        }
    }
}
