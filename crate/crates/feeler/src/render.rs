//! Declarative schematic of a design solution.
//!
//! The labeling UI draws these boxes as-is; it never interprets design
//! variables itself. Variables are mapped by name: `*height`/`*width` size
//! the module or its image, `*font_size` sets text sizes, `*color*` picks a
//! palette entry, `*radius` rounds the frame, `padding*`/`margin*` inset the
//! content, `*spacing` separates repeated elements and `icon_size` sizes the
//! icon. Variables matching nothing are listed but not drawn.

use feeler_core::{DesignSpace, DesignVector};
use serde::{Deserialize, Serialize};

pub const PALETTE: [&str; 6] = ["#3b6fd8", "#d8483b", "#2e9e5b", "#e0a100", "#8a4fd1", "#555b66"];

const CANVAS_WIDTH: f64 = 360.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Frame,
    Icon,
    Text,
    Tag,
    Image,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub kind: ElementKind,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub fill: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub font_size: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderSpec {
    pub module: String,
    pub width: f64,
    pub height: f64,
    pub background: String,
    pub elements: Vec<Element>,
    pub variables: Vec<Variable>,
}

struct Lookup<'a> {
    names: Vec<&'a str>,
    values: &'a [f64],
}

impl Lookup<'_> {
    fn find(&self, pred: impl Fn(&str) -> bool) -> Option<f64> {
        self.names.iter().position(|n| pred(n)).map(|i| self.values[i])
    }

    fn all(&self, pred: impl Fn(&str) -> bool) -> Vec<f64> {
        self.names
            .iter()
            .zip(self.values)
            .filter(|(n, _)| pred(n))
            .map(|(_, v)| *v)
            .collect()
    }
}

fn color(code: f64) -> String {
    let i = code.round().max(0.0) as usize % PALETTE.len();
    PALETTE[i].to_string()
}

fn element(kind: ElementKind, x: f64, y: f64, w: f64, h: f64, fill: &str) -> Element {
    Element {
        kind,
        x,
        y,
        w,
        h,
        fill: fill.to_string(),
        radius: None,
        font_size: None,
        text: None,
    }
}

/// Builds the schematic for `v`, which must already be valid for `space`.
pub fn render(space: &DesignSpace, v: &DesignVector) -> RenderSpec {
    let look = Lookup {
        names: space.variables().iter().map(|s| s.name.as_str()).collect(),
        values: v.as_slice(),
    };
    let is_image = |n: &str| n.starts_with("image");
    let is_tag = |n: &str| n.starts_with("tag");

    let pad = look.find(|n| n.starts_with("padding") || n.starts_with("margin")).unwrap_or(12.0);
    let font = look
        .find(|n| n.ends_with("font_size") && !is_tag(n))
        .unwrap_or(16.0);
    let icon = look.find(|n| n == "icon_size");
    let radius = look.find(|n| n.ends_with("radius"));
    let spacing = look.find(|n| n.ends_with("spacing")).unwrap_or(8.0);
    let tag_font = look.find(|n| is_tag(n) && n.ends_with("font_size"));
    let tag_colors = look.all(|n| is_tag(n) && n.contains("color"));
    let text_color = look
        .find(|n| n.contains("color") && !is_tag(n))
        .map_or_else(|| "#1f2329".to_string(), color);

    let mut elements = Vec::new();
    let mut x = pad;
    let mut y = pad;
    let mut row_h: f64 = font * 1.4;

    if let Some(s) = icon {
        let side = s * 0.5;
        elements.push(element(ElementKind::Icon, x, y, side, side, PALETTE[0]));
        x += side + spacing;
        row_h = row_h.max(side);
    }
    let mut title = element(ElementKind::Text, x, y, (CANVAS_WIDTH - x - pad).max(0.0), font * 1.4, &text_color);
    title.font_size = Some(font);
    title.text = Some("Sample text".into());
    elements.push(title);
    y += row_h;

    if let Some(tf) = tag_font {
        y += spacing;
        let mut tx = pad;
        let fills = if tag_colors.is_empty() { vec![0.0] } else { tag_colors };
        for (i, c) in fills.iter().enumerate() {
            let w = tf * 3.0;
            let mut tag = element(ElementKind::Tag, tx, y, w, tf * 1.4, &color(*c));
            tag.font_size = Some(tf);
            tag.text = Some(format!("Tag {}", i + 1));
            elements.push(tag);
            tx += w + spacing;
        }
        y += tf * 1.4;
    }

    let img_h = look.find(|n| is_image(n) && n.ends_with("height"));
    let img_w = look.find(|n| is_image(n) && n.ends_with("width"));
    if img_h.is_some() || img_w.is_some() {
        y += spacing;
        let h = img_h.unwrap_or(120.0);
        let w = img_w.unwrap_or(CANVAS_WIDTH - 2.0 * pad).min(CANVAS_WIDTH - 2.0 * pad);
        elements.push(element(ElementKind::Image, pad, y, w, h, "#c9ced6"));
        y += h;
    }

    let content = y + pad;
    let height = look
        .find(|n| n.ends_with("height") && !is_image(n))
        .map_or(content, |h| h.max(content));
    let mut frame = element(ElementKind::Frame, 0.0, 0.0, CANVAS_WIDTH, height, "#ffffff");
    frame.radius = radius;
    elements.insert(0, frame);

    RenderSpec {
        module: space.name().to_string(),
        width: CANVAS_WIDTH,
        height,
        background: "#eef0f3".into(),
        elements,
        variables: look
            .names
            .iter()
            .zip(look.values)
            .map(|(n, v)| Variable {
                name: n.to_string(),
                value: *v,
            })
            .collect(),
    }
}
