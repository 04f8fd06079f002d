//! Test segmenter speaking the JSON-lines provider protocol.
//!
//! In `ok` mode it answers each point with three region-grown masks: the
//! bright region around the point, that region plus the surrounding
//! surface, and the whole image. Other modes misbehave on purpose.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};
use reposeg::segmenter::protocol::{encode, ErrorReply, Request, Response};
use reposeg::{read_gray, write_mask, BinaryMask, GrayImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Three plausible masks
    Ok,
    /// Masks one column wider than the image
    WrongSize,
    /// An error object for every request
    Error,
    /// An empty mask list
    Empty,
    /// Exit without replying
    Crash,
}

#[derive(Debug, Parser)]
#[command(about = "Stub segmenter for the reposeg subprocess provider")]
struct Args {
    #[arg(long, value_enum, default_value = "ok")]
    mode: Mode,
    /// Directory for mask files (a temporary directory by default)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Append one line per request to this file
    #[arg(long)]
    count_file: Option<PathBuf>,
    /// Intensity tolerance for region growing
    #[arg(long, default_value_t = 24)]
    tolerance: u8,
}

/// 4-connected pixels reachable from `seeds` whose value lies within
/// `tol` of `reference`.
fn grow(gray: &GrayImage, seeds: &[(usize, usize)], reference: u8, tol: u8, mut region: BinaryMask) -> BinaryMask {
    let (w, h) = (gray.width(), gray.height());
    let close = |x: usize, y: usize| gray.get(x, y).abs_diff(reference) <= tol;
    let mut stack: Vec<_> = seeds.iter().copied().filter(|&(x, y)| close(x, y)).collect();
    while let Some((x, y)) = stack.pop() {
        if region.get(x, y) {
            continue;
        }
        region.set(x, y, true);
        let mut push = |nx: usize, ny: usize| {
            if !region.get(nx, ny) && close(nx, ny) {
                stack.push((nx, ny));
            }
        };
        if x > 0 {
            push(x - 1, y);
        }
        if y > 0 {
            push(x, y - 1);
        }
        if x + 1 < w {
            push(x + 1, y);
        }
        if y + 1 < h {
            push(x, y + 1);
        }
    }
    region
}

fn candidates(gray: &GrayImage, x: usize, y: usize, tol: u8) -> Vec<BinaryMask> {
    let (w, h) = (gray.width(), gray.height());
    let spot = grow(gray, &[(x, y)], gray.get(x, y), tol, BinaryMask::new(w, h));

    // The surface is whatever surrounds the spot; take the median of its rim.
    let mut rim = Vec::new();
    for p in spot.foreground() {
        for (dx, dy) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
            let (nx, ny) = (p.x as i64 + dx, p.y as i64 + dy);
            if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h && !spot.get(nx as usize, ny as usize) {
                rim.push((nx as usize, ny as usize));
            }
        }
    }
    let surface = if rim.is_empty() {
        spot.clone()
    } else {
        let mut values: Vec<u8> = rim.iter().map(|&(x, y)| gray.get(x, y)).collect();
        values.sort_unstable();
        let median = values[values.len() / 2];
        grow(gray, &rim, median, tol, spot.clone())
    };
    vec![spot, surface, BinaryMask::filled(w, h, true)]
}

fn handle(line: &str, args: &Args, dir: &Path) -> Result<String> {
    let req: Request = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => {
            return Ok(encode(&ErrorReply {
                id: -1,
                error: format!("malformed request: {e}"),
            }))
        }
    };
    let fail = |msg: String| encode(&ErrorReply { id: req.id, error: msg });
    match args.mode {
        Mode::Error => return Ok(fail("stub configured to fail".into())),
        Mode::Empty => {
            return Ok(encode(&Response {
                id: req.id,
                masks: vec![],
                scores: vec![],
            }))
        }
        Mode::Crash => std::process::exit(3),
        Mode::Ok | Mode::WrongSize => {}
    }
    let gray = match read_gray(&req.image) {
        Ok(g) => g,
        Err(e) => return Ok(fail(format!("cannot read image: {e}"))),
    };
    let (x, y) = (req.point.x, req.point.y);
    if x < 0 || y < 0 || x as usize >= gray.width() || y as usize >= gray.height() {
        return Ok(fail(format!("point ({x}, {y}) is outside the image")));
    }
    let mut masks = candidates(&gray, x as usize, y as usize, args.tolerance);
    masks.truncate(req.max_masks);
    if args.mode == Mode::WrongSize {
        masks = masks
            .iter()
            .map(|m| BinaryMask::new(m.width() + 1, m.height()))
            .collect();
    }
    let mut paths = Vec::new();
    for (k, m) in masks.iter().enumerate() {
        let path = dir.join(format!("req{}_mask{k}.png", req.id));
        write_mask(m, &path)?;
        paths.push(path.display().to_string());
    }
    let scores = (0..paths.len()).map(|k| 1.0 - 0.1 * k as f64).collect();
    Ok(encode(&Response {
        id: req.id,
        masks: paths,
        scores,
    }))
}

fn main() -> Result<()> {
    let args = Args::parse();
    let temp;
    let dir = match &args.out {
        Some(d) => {
            std::fs::create_dir_all(d).with_context(|| format!("cannot create {}", d.display()))?;
            d.clone()
        }
        None => {
            temp = tempfile::tempdir()?;
            temp.path().to_path_buf()
        }
    };
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout().lock();
    for line in stdin.lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(path) = &args.count_file {
            let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
            writeln!(f, "{line}")?;
        }
        let reply = handle(&line, &args, &dir)?;
        writeln!(stdout, "{reply}")?;
        stdout.flush()?;
    }
    Ok(())
}
