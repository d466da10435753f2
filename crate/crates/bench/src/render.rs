//! Frame rendering of traces: one SVG per record, or an animated GIF.
//! Output depends only on the trace, so re-rendering is byte-identical.

use crate::BenchError;
use cubeswarm_core::trace::TraceRecord;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

const CELL: i32 = 24;
const MARGIN: i32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RenderFormat {
    SvgFrames,
    Gif,
}

impl std::str::FromStr for RenderFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "svg-frames" | "svg" => Ok(RenderFormat::SvgFrames),
            "gif" => Ok(RenderFormat::Gif),
            _ => Err(format!("unknown render format {s:?} (svg-frames, gif)")),
        }
    }
}

/// Lattice window shared by all frames: `(min_x, min_y, cols, rows)`.
fn window(trace: &[TraceRecord]) -> (i32, i32, i32, i32) {
    let cells = trace.iter().flat_map(|r| r.coords_after.iter());
    let (mut x0, mut y0, mut x1, mut y1) = (i32::MAX, i32::MAX, i32::MIN, i32::MIN);
    for &[x, y] in cells {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    (
        x0 - MARGIN,
        y0 - MARGIN,
        x1 - x0 + 1 + 2 * MARGIN,
        y1 - y0 + 1 + 2 * MARGIN,
    )
}

/// Screen position of a lattice cell; y grows upwards on the lattice.
fn to_pixel(win: (i32, i32, i32, i32), x: i32, y: i32) -> (i32, i32) {
    let (x0, y0, _, rows) = win;
    ((x - x0) * CELL, (rows - 1 - (y - y0)) * CELL)
}

pub fn svg_frame(trace: &[TraceRecord], i: usize, labels: bool) -> String {
    let win = window(trace);
    let (w, h) = (win.2 * CELL, win.3 * CELL);
    let rec = &trace[i];
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r##"<rect width="{w}" height="{h}" fill="#ffffff"/>"##);
    for c in 0..=win.2 {
        let _ = writeln!(
            s,
            r##"<line x1="{0}" y1="0" x2="{0}" y2="{h}" stroke="#dddddd"/>"##,
            c * CELL
        );
    }
    for r in 0..=win.3 {
        let _ = writeln!(
            s,
            r##"<line x1="0" y1="{0}" x2="{w}" y2="{0}" stroke="#dddddd"/>"##,
            r * CELL
        );
    }
    for (k, &[x, y]) in rec.coords_after.iter().enumerate() {
        let (px, py) = to_pixel(win, x, y);
        let fill = if rec.cube == Some(k) {
            "#e07b22"
        } else {
            "#2f6db3"
        };
        let _ = writeln!(
            s,
            r##"<rect x="{}" y="{}" width="{}" height="{}" fill="{fill}" stroke="#1b1b1b"/>"##,
            px + 1,
            py + 1,
            CELL - 2,
            CELL - 2
        );
        if labels {
            let _ = writeln!(
                s,
                r##"<text x="{}" y="{}" font-size="11" font-family="monospace" text-anchor="middle" fill="#ffffff">{k}</text>"##,
                px + CELL / 2,
                py + CELL / 2 + 4
            );
        }
    }
    let phase = rec.phase.map(|p| format!(" phase {p}")).unwrap_or_default();
    let _ = writeln!(
        s,
        r##"<text x="3" y="12" font-size="10" font-family="monospace" fill="#555555">step {} {}{phase}</text>"##,
        rec.step, rec.outcome
    );
    s.push_str("</svg>\n");
    s
}

/// Indexed pixels of one frame; palette below.
fn raster(trace: &[TraceRecord], i: usize) -> (u16, u16, Vec<u8>) {
    let win = window(trace);
    let (w, h) = ((win.2 * CELL) as usize, (win.3 * CELL) as usize);
    let mut px = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            if x % CELL as usize == 0 || y % CELL as usize == 0 {
                px[y * w + x] = 1;
            }
        }
    }
    let rec = &trace[i];
    for (k, &[cx, cy]) in rec.coords_after.iter().enumerate() {
        let (ox, oy) = to_pixel(win, cx, cy);
        let colour = if rec.cube == Some(k) { 3 } else { 2 };
        for dy in 1..CELL - 1 {
            for dx in 1..CELL - 1 {
                let edge = dx == 1 || dy == 1 || dx == CELL - 2 || dy == CELL - 2;
                px[(oy + dy) as usize * w + (ox + dx) as usize] = if edge { 4 } else { colour };
            }
        }
    }
    (w as u16, h as u16, px)
}

const PALETTE: [u8; 15] = [
    0xff, 0xff, 0xff, 0xdd, 0xdd, 0xdd, 0x2f, 0x6d, 0xb3, 0xe0, 0x7b, 0x22, 0x1b, 0x1b, 0x1b,
];

pub fn write_gif<W: std::io::Write>(
    out: W,
    trace: &[TraceRecord],
    delay_cs: u16,
) -> Result<(), BenchError> {
    let (w, h, _) = raster(trace, 0);
    let mut enc =
        gif::Encoder::new(out, w, h, &PALETTE).map_err(|e| BenchError::Render(e.to_string()))?;
    enc.set_repeat(gif::Repeat::Infinite)
        .map_err(|e| BenchError::Render(e.to_string()))?;
    for i in 0..trace.len() {
        let (_, _, px) = raster(trace, i);
        let mut frame = gif::Frame::from_indexed_pixels(w, h, px, None);
        frame.delay = if i + 1 == trace.len() {
            delay_cs * 4
        } else {
            delay_cs
        };
        enc.write_frame(&frame)
            .map_err(|e| BenchError::Render(e.to_string()))?;
    }
    Ok(())
}

/// Writes the frames into `out_dir`; returns the files written.
pub fn render(
    trace: &[TraceRecord],
    format: RenderFormat,
    out_dir: &Path,
    labels: bool,
) -> Result<Vec<PathBuf>, BenchError> {
    if trace.is_empty() {
        return Err(BenchError::Render("trace has no records".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    match format {
        RenderFormat::SvgFrames => (0..trace.len())
            .map(|i| {
                let path = out_dir.join(format!("frame_{i:05}.svg"));
                std::fs::write(&path, svg_frame(trace, i, labels))?;
                Ok(path)
            })
            .collect(),
        RenderFormat::Gif => {
            let path = out_dir.join("trace.gif");
            let mut buf = Vec::new();
            write_gif(&mut buf, trace, 40)?;
            std::fs::write(&path, buf)?;
            Ok(vec![path])
        }
    }
}
