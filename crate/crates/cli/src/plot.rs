//! PNG rendering: magnitude images, triptychs with amplified difference
//! panels, and metric-vs-acceleration curves.

use anyhow::{Context, Result};
use ddmri_core::ComplexField;
use image::{GrayImage, Luma, Rgb, RgbImage};

/// Render a magnitude image normalized to its own peak.
pub fn magnitude_png(field: &ComplexField<f32>) -> GrayImage {
    let mag = field.magnitude();
    let peak = mag.iter().fold(0.0f32, |m, &v| m.max(v)).max(1e-12);
    let (h, w) = mag.dim();
    let mut img = GrayImage::new(w as u32, h as u32);
    for ((y, x), &v) in mag.indexed_iter() {
        let g = ((v / peak).clamp(0.0, 1.0) * 255.0).round() as u8;
        img.put_pixel(x as u32, y as u32, Luma([g]));
    }
    img
}

/// Ground truth | reconstruction | x`amplify` absolute difference, all on the
/// ground truth's gray scale.
pub fn triptych_png(
    truth: &ComplexField<f32>,
    recon: &ComplexField<f32>,
    amplify: f32,
) -> Result<GrayImage> {
    anyhow::ensure!(truth.shape() == recon.shape(), "triptych needs equal shapes");
    let tm = truth.magnitude();
    let rm = recon.magnitude();
    let peak = tm.iter().fold(0.0f32, |m, &v| m.max(v)).max(1e-12);
    let (h, w) = tm.dim();
    let gap = 2usize;
    let mut img = GrayImage::new((3 * w + 2 * gap) as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let t = (tm[[y, x]] / peak).clamp(0.0, 1.0);
            let r = (rm[[y, x]] / peak).clamp(0.0, 1.0);
            let d = ((tm[[y, x]] - rm[[y, x]]).abs() * amplify / peak).clamp(0.0, 1.0);
            img.put_pixel(x as u32, y as u32, Luma([(t * 255.0).round() as u8]));
            img.put_pixel((x + w + gap) as u32, y as u32, Luma([(r * 255.0).round() as u8]));
            img.put_pixel(
                (x + 2 * (w + gap)) as u32,
                y as u32,
                Luma([(d * 255.0).round() as u8]),
            );
        }
    }
    Ok(img)
}

fn draw_line(img: &mut RgbImage, x0: f32, y0: f32, x1: f32, y1: f32, color: Rgb<u8>) {
    let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
    for s in 0..=steps {
        let t = s as f32 / steps as f32;
        let x = x0 + (x1 - x0) * t;
        let y = y0 + (y1 - y0) * t;
        if x >= 0.0 && y >= 0.0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

pub struct Curve {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: Rgb<u8>,
}

pub const CURVE_COLORS: [Rgb<u8>; 6] = [
    Rgb([214, 69, 65]),
    Rgb([31, 119, 180]),
    Rgb([44, 160, 44]),
    Rgb([255, 127, 14]),
    Rgb([148, 103, 189]),
    Rgb([23, 190, 207]),
];

/// Simple line chart of metric vs acceleration.
pub fn curves_png(title: &str, y_label: &str, curves: &[Curve]) -> Result<RgbImage> {
    anyhow::ensure!(!curves.is_empty(), "no curves to plot");
    let (width, height) = (640u32, 480u32);
    let (ml, mr, mt, mb) = (60f32, 20f32, 30f32, 45f32);
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));

    let xs: Vec<f64> = curves.iter().flat_map(|c| c.points.iter().map(|p| p.0)).collect();
    let ys: Vec<f64> = curves.iter().flat_map(|c| c.points.iter().map(|p| p.1)).collect();
    let (xmin, xmax) = xs
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let (ymin, ymax) = ys
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let yspan = (ymax - ymin).max(1e-9);
    let xspan = (xmax - xmin).max(1e-9);
    let (ymin, ymax) = (ymin - 0.05 * yspan, ymax + 0.05 * yspan);
    let yspan = ymax - ymin;

    let to_px = |x: f64, y: f64| -> (f32, f32) {
        let px = ml + ((x - xmin) / xspan) as f32 * (width as f32 - ml - mr);
        let py = (height as f32 - mb) - ((y - ymin) / yspan) as f32 * (height as f32 - mt - mb);
        (px, py)
    };

    let axis = Rgb([0, 0, 0]);
    draw_line(&mut img, ml, mt, ml, height as f32 - mb, axis);
    draw_line(&mut img, ml, height as f32 - mb, width as f32 - mr, height as f32 - mb, axis);
    // ticks
    for i in 0..=4 {
        let y = ymin + yspan * i as f64 / 4.0;
        let (_, py) = to_px(xmin, y);
        draw_line(&mut img, ml - 4.0, py, ml, py, axis);
        draw_text(&mut img, 4, py as i32 - 3, &format!("{y:.3}"), axis);
    }
    for &x in xs.iter() {
        let (px, _) = to_px(x, ymin);
        draw_line(&mut img, px, height as f32 - mb, px, height as f32 - mb + 4.0, axis);
        draw_text(&mut img, px as i32 - 6, height as i32 - 38, &format!("{x:.0}"), axis);
    }
    draw_text(&mut img, ml as i32, 8, title, axis);
    draw_text(&mut img, 4, mt as i32, y_label, axis);
    draw_text(&mut img, width as i32 / 2 - 10, height as i32 - 16, "R", axis);

    for (ci, curve) in curves.iter().enumerate() {
        let color = curve.color;
        let mut prev: Option<(f32, f32)> = None;
        for &(x, y) in &curve.points {
            let p = to_px(x, y);
            if let Some(q) = prev {
                draw_line(&mut img, q.0, q.1, p.0, p.1, color);
                draw_line(&mut img, q.0, q.1 + 1.0, p.0, p.1 + 1.0, color);
            }
            prev = Some(p);
        }
        // legend
        let ly = mt + 14.0 * ci as f32 + 6.0;
        draw_line(&mut img, width as f32 - mr - 120.0, ly, width as f32 - mr - 100.0, ly, color);
        draw_text(&mut img, width as i32 - mr as i32 - 95, ly as i32 - 4, &curve.label, axis);
    }
    Ok(img)
}

/// Minimal 5x7 bitmap font covering the characters the charts need.
fn glyph(c: char) -> [u8; 7] {
    match c {
        '0' => [0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e],
        '1' => [0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e],
        '2' => [0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f],
        '3' => [0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e],
        '4' => [0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02],
        '5' => [0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e],
        '6' => [0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e],
        '7' => [0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e],
        '9' => [0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0c, 0x0c],
        '-' => [0x00, 0x00, 0x00, 0x1f, 0x00, 0x00, 0x00],
        '_' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1f],
        '=' => [0x00, 0x00, 0x1f, 0x00, 0x1f, 0x00, 0x00],
        '[' => [0x0e, 0x08, 0x08, 0x08, 0x08, 0x08, 0x0e],
        ']' => [0x0e, 0x02, 0x02, 0x02, 0x02, 0x02, 0x0e],
        'a' | 'A' => [0x0e, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11],
        'b' | 'B' => [0x1e, 0x11, 0x11, 0x1e, 0x11, 0x11, 0x1e],
        'c' | 'C' => [0x0e, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0e],
        'd' | 'D' => [0x1e, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1e],
        'e' | 'E' => [0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x1f],
        'f' | 'F' => [0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x10],
        'g' | 'G' => [0x0e, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0f],
        'h' | 'H' => [0x11, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11],
        'i' | 'I' => [0x0e, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0e],
        'l' | 'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1f],
        'm' | 'M' => [0x11, 0x1b, 0x15, 0x15, 0x11, 0x11, 0x11],
        'n' | 'N' => [0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11],
        'o' | 'O' => [0x0e, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e],
        'p' | 'P' => [0x1e, 0x11, 0x11, 0x1e, 0x10, 0x10, 0x10],
        'r' | 'R' => [0x1e, 0x11, 0x11, 0x1e, 0x14, 0x12, 0x11],
        's' | 'S' => [0x0f, 0x10, 0x10, 0x0e, 0x01, 0x01, 0x1e],
        't' | 'T' => [0x1f, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'u' | 'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e],
        'v' | 'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0a, 0x04],
        'z' | 'Z' => [0x1f, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1f],
        _ => [0; 7],
    }
}

fn draw_text(img: &mut RgbImage, x: i32, y: i32, text: &str, color: Rgb<u8>) {
    for (ci, c) in text.chars().enumerate() {
        let rows = glyph(c);
        for (ry, bits) in rows.iter().enumerate() {
            for rx in 0..5 {
                if bits & (0x10 >> rx) != 0 {
                    let px = x + ci as i32 * 6 + rx;
                    let py = y + ry as i32;
                    if px >= 0 && py >= 0 && (px as u32) < img.width() && (py as u32) < img.height()
                    {
                        img.put_pixel(px as u32, py as u32, color);
                    }
                }
            }
        }
    }
}

pub fn save_gray(img: &GrayImage, path: &std::path::Path) -> Result<()> {
    img.save(path).with_context(|| format!("writing {}", path.display()))
}

pub fn save_rgb(img: &RgbImage, path: &std::path::Path) -> Result<()> {
    img.save(path).with_context(|| format!("writing {}", path.display()))
}
