//! Synthetic multi-domain images and PPM I/O.
//!
//! Each domain has its own hue, shape and stripe frequency; background,
//! position, size, stripe phase and pixel noise vary per image. Images are
//! rendered from per-image RNG streams so any subset can be regenerated
//! independently and rendering parallelizes without changing bytes.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{Rng, RngState};
use crate::tensor::{Shape, Tensor};

pub const SUPPORTED_SIZES: [usize; 3] = [16, 32, 64];
pub const MANIFEST: &str = "manifest.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeKind {
    Circle,
    Square,
    Triangle,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DomainStyle {
    /// In `[0, 1)`.
    pub hue: f64,
    pub shape: ShapeKind,
    /// Stripe cycles across the image width.
    pub stripes: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DomainSpec {
    pub num_domains: usize,
}

impl DomainSpec {
    pub fn new(num_domains: usize) -> Result<Self> {
        if num_domains < 2 {
            return Err(Error::invalid(
                "DomainSpec",
                format!("need at least 2 domains, got {num_domains}"),
            ));
        }
        Ok(DomainSpec { num_domains })
    }

    pub fn style(&self, domain: usize) -> DomainStyle {
        let shapes = [ShapeKind::Circle, ShapeKind::Square, ShapeKind::Triangle];
        DomainStyle {
            hue: domain as f64 / self.num_domains as f64,
            shape: shapes[domain % 3],
            stripes: 1.5 + 1.5 * (domain % 4) as f64,
        }
    }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = h6.floor() as usize % 6;
    let f = h6 - h6.floor();
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match sector {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

fn inside(shape: ShapeKind, dx: f64, dy: f64, r: f64) -> bool {
    match shape {
        ShapeKind::Circle => dx * dx + dy * dy <= r * r,
        ShapeKind::Square => dx.abs() <= 0.85 * r && dy.abs() <= 0.85 * r,
        // apex up, base at dy = r/2
        ShapeKind::Triangle => dy <= 0.5 * r && dy >= -r && dx.abs() <= 0.866 * (dy + r) / 1.5,
    }
}

/// One `(3, size, size)` image, values in `[-1, 1]`.
pub fn render_image(style: DomainStyle, size: usize, rng: &mut Rng) -> Vec<f64> {
    let s = size as f64;
    let fg = hsv_to_rgb(
        style.hue + rng.uniform_range(-0.03, 0.03),
        rng.uniform_range(0.75, 1.0),
        rng.uniform_range(0.8, 1.0),
    );
    let bg_level = rng.uniform_range(0.05, 0.35);
    let bg_tint = [
        rng.uniform_range(-0.05, 0.05),
        rng.uniform_range(-0.05, 0.05),
        rng.uniform_range(-0.05, 0.05),
    ];
    let r = rng.uniform_range(0.25, 0.38) * s;
    let cx = rng.uniform_range(0.38, 0.62) * s;
    let cy = rng.uniform_range(0.38, 0.62) * s;
    let phase = rng.uniform_range(0.0, 2.0 * PI);
    let plane = size * size;
    let mut out = vec![0.0; 3 * plane];
    for y in 0..size {
        for x in 0..size {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let rgb = if inside(style.shape, px - cx, py - cy, r) {
                let stripe = 0.8 + 0.2 * (2.0 * PI * style.stripes * px / s + phase).sin();
                fg.map(|c| c * stripe)
            } else {
                [
                    bg_level + bg_tint[0],
                    bg_level + bg_tint[1],
                    bg_level + bg_tint[2],
                ]
            };
            for c in 0..3 {
                let v = 2.0 * rgb[c] - 1.0 + 0.03 * rng.normal();
                out[c * plane + y * size + x] = v.clamp(-1.0, 1.0);
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub images: Tensor,
    pub labels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    images: Tensor,
    labels: Vec<usize>,
    num_domains: usize,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<usize>, num_domains: usize) -> Result<Self> {
        if images.shape().n != labels.len() || images.shape().c != 3 {
            return Err(Error::invalid(
                "Dataset",
                format!(
                    "{} labels for images of shape {}",
                    labels.len(),
                    images.shape()
                ),
            ));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_domains) {
            return Err(Error::Label {
                label: l,
                num_domains,
            });
        }
        Ok(Dataset {
            images,
            labels,
            num_domains,
        })
    }

    /// `count_per_domain` images of each domain, domain-major order.
    pub fn render(
        spec: DomainSpec,
        count_per_domain: usize,
        size: usize,
        seed: u64,
    ) -> Result<Self> {
        if !SUPPORTED_SIZES.contains(&size) {
            return Err(Error::invalid(
                "render_dataset",
                format!("size {size} is unsupported: images must be divisible by 4 (two stride-2 stages) and one of 16, 32, 64"),
            ));
        }
        let total = spec.num_domains * count_per_domain;
        let labels: Vec<usize> = (0..total).map(|i| i / count_per_domain.max(1)).collect();
        let pixels: Vec<Vec<f64>> = (0..total)
            .into_par_iter()
            .map(|i| {
                let mut rng = Rng::with_stream(seed, i as u64);
                render_image(spec.style(labels[i]), size, &mut rng)
            })
            .collect();
        let images = Tensor::from_vec([total, 3, size, size], pixels.concat())?;
        Dataset::new(images, labels, spec.num_domains)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_domains(&self) -> usize {
        self.num_domains
    }

    pub fn image_size(&self) -> usize {
        self.images.shape().h
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        Batch {
            images: self.images.gather(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Writes `NNNNN.ppm` files and the manifest into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = String::new();
        for i in 0..self.len() {
            let name = format!("{i:05}.ppm");
            write_image(&dir.join(&name), &self.images.gather(&[i]))?;
            writeln!(manifest, "{name}\t{}", self.labels[i]).expect("string write");
        }
        let path = dir.join(MANIFEST);
        fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
    }

    /// Reads a dataset from a directory holding a manifest, or from a manifest file.
    /// Paths in the manifest are relative to its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let manifest = if path.is_dir() {
            path.join(MANIFEST)
        } else {
            path.to_path_buf()
        };
        let root = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
        let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
        let mut labels = Vec::new();
        let mut pixels = Vec::new();
        let mut shape: Option<Shape> = None;
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let line_start = offset;
            offset += line.len();
            let line = line.trim_end_matches(['\n', '\r']);
            if line.is_empty() {
                continue;
            }
            let (file, label) = line.split_once('\t').ok_or_else(|| Error::Parse {
                what: "manifest",
                offset: line_start,
                msg: "expected `path<TAB>domain`".into(),
            })?;
            let label: usize = label.trim().parse().map_err(|_| Error::Parse {
                what: "manifest",
                offset: line_start + file.len() + 1,
                msg: format!("bad domain index {label:?}"),
            })?;
            let img = read_image(&root.join(file))?;
            match shape {
                None => shape = Some(img.shape()),
                Some(s) if s != img.shape() => {
                    return Err(Error::invalid(
                        "Dataset::load",
                        format!("{file} has shape {}, earlier images {s}", img.shape()),
                    ))
                }
                _ => {}
            }
            labels.push(label);
            pixels.extend_from_slice(img.data());
        }
        let s = shape.ok_or_else(|| {
            Error::invalid(
                "Dataset::load",
                format!("{} lists no images", manifest.display()),
            )
        })?;
        let num_domains = labels.iter().max().map_or(0, |m| m + 1).max(2);
        let images = Tensor::from_vec([labels.len(), 3, s.h, s.w], pixels)?;
        Dataset::new(images, labels, num_domains)
    }
}

/// Epoch-based without-replacement sampling. A batch that crosses an epoch
/// boundary finishes the old permutation and continues in a fresh one.
#[derive(Clone, Debug, PartialEq)]
pub struct Sampler {
    order: Vec<usize>,
    cursor: usize,
    rng: Rng,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerState {
    pub order: Vec<usize>,
    pub cursor: usize,
    pub rng: RngState,
}

impl Sampler {
    pub fn new(len: usize, rng: Rng) -> Self {
        Sampler {
            order: (0..len).collect(),
            cursor: len,
            rng,
        }
    }

    pub fn next_indices(&mut self, batch_size: usize) -> Result<Vec<usize>> {
        let len = self.order.len();
        if batch_size == 0 || batch_size > len {
            return Err(Error::invalid(
                "next_batch",
                format!("batch size {batch_size} must be in 1..={len} (dataset size)"),
            ));
        }
        let mut out = Vec::with_capacity(batch_size);
        while out.len() < batch_size {
            if self.cursor == len {
                self.order = self.rng.permutation(len);
                self.cursor = 0;
            }
            let take = (batch_size - out.len()).min(len - self.cursor);
            out.extend_from_slice(&self.order[self.cursor..self.cursor + take]);
            self.cursor += take;
        }
        Ok(out)
    }

    pub fn next_batch(&mut self, dataset: &Dataset, batch_size: usize) -> Result<Batch> {
        if self.order.len() != dataset.len() {
            return Err(Error::invalid(
                "next_batch",
                format!(
                    "sampler built for {} images, dataset has {}",
                    self.order.len(),
                    dataset.len()
                ),
            ));
        }
        let idx = self.next_indices(batch_size)?;
        Ok(dataset.batch(&idx))
    }

    pub fn state(&self) -> SamplerState {
        SamplerState {
            order: self.order.clone(),
            cursor: self.cursor,
            rng: self.rng.state(),
        }
    }

    pub fn from_state(s: SamplerState) -> Result<Self> {
        if s.cursor > s.order.len() {
            return Err(Error::invalid(
                "Sampler",
                "cursor past the end of the order",
            ));
        }
        Ok(Sampler {
            order: s.order,
            cursor: s.cursor,
            rng: Rng::from_state(s.rng),
        })
    }
}

fn to_byte(v: f64) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

fn from_byte(b: u8) -> f64 {
    b as f64 / 127.5 - 1.0
}

/// Binary PPM for a `(1, 3, h, w)` image.
pub fn encode_ppm(image: &Tensor) -> Result<Vec<u8>> {
    let s = image.shape();
    if s.n != 1 || s.c != 3 {
        return Err(Error::invalid(
            "write_image",
            format!("expected (1, 3, h, w), got {s}"),
        ));
    }
    let mut out = format!("P6\n{} {}\n255\n", s.w, s.h).into_bytes();
    let plane = s.plane();
    let d = image.data();
    out.reserve(3 * plane);
    for i in 0..plane {
        for c in 0..3 {
            out.push(to_byte(d[c * plane + i]));
        }
    }
    Ok(out)
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            what: "ppm",
            offset: self.pos,
            msg: msg.into(),
        }
    }

    fn skip_space(&mut self) -> Result<()> {
        let start = self.pos;
        loop {
            match self.bytes.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') => {
                    while self.bytes.get(self.pos).is_some_and(|&b| b != b'\n') {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
        if self.pos == start {
            return Err(self.err("expected whitespace"));
        }
        Ok(())
    }

    fn number(&mut self) -> Result<usize> {
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected a decimal number"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::Parse {
                what: "ppm",
                offset: start,
                msg: "number out of range".into(),
            })
    }
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor> {
    let mut h = Header { bytes, pos: 0 };
    if !bytes.starts_with(b"P6") {
        return Err(h.err("missing P6 magic"));
    }
    h.pos = 2;
    h.skip_space()?;
    let width = h.number()?;
    h.skip_space()?;
    let height = h.number()?;
    h.skip_space()?;
    let maxval_at = h.pos;
    let maxval = h.number()?;
    if maxval != 255 {
        return Err(Error::Parse {
            what: "ppm",
            offset: maxval_at,
            msg: format!("maxval {maxval} unsupported, expected 255"),
        });
    }
    if !bytes.get(h.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(h.err("expected one whitespace byte before the raster"));
    }
    h.pos += 1;
    if width == 0 || height == 0 {
        return Err(h.err("zero image dimension"));
    }
    let plane = width * height;
    let raster = &bytes[h.pos..];
    if raster.len() != 3 * plane {
        return Err(Error::Parse {
            what: "ppm",
            offset: h.pos + raster.len().min(3 * plane),
            msg: format!("raster has {} bytes, expected {}", raster.len(), 3 * plane),
        });
    }
    let mut data = vec![0.0; 3 * plane];
    for (i, px) in raster.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * plane + i] = from_byte(px[c]);
        }
    }
    Tensor::from_vec([1, 3, height, width], data)
}

pub fn write_image(path: &Path, image: &Tensor) -> Result<()> {
    let bytes = encode_ppm(image)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_image(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes).map_err(|e| match e {
        Error::Parse { offset, msg, .. } => Error::Parse {
            what: "ppm",
            offset,
            msg: format!("{}: {msg}", path.display()),
        },
        e => e,
    })
}

/// Tiles `(n, 3, h, w)` images into a `rows x cols` grid with a 1-pixel
/// white border.
pub fn tile_grid(images: &Tensor, cols: usize) -> Result<Tensor> {
    let s = images.shape();
    if cols == 0 || s.n == 0 {
        return Err(Error::invalid("tile_grid", "empty grid"));
    }
    let rows = s.n.div_ceil(cols);
    let (gh, gw) = (rows * (s.h + 1) + 1, cols * (s.w + 1) + 1);
    let mut out = Tensor::full([1, s.c, gh, gw], 1.0);
    for n in 0..s.n {
        let (oy, ox) = (1 + (n / cols) * (s.h + 1), 1 + (n % cols) * (s.w + 1));
        for c in 0..s.c {
            for y in 0..s.h {
                for x in 0..s.w {
                    out.set(0, c, oy + y, ox + x, images.at(n, c, y, x));
                }
            }
        }
    }
    Ok(out)
}

/// Directory listing helper for callers that need every `.ppm` in a folder.
pub fn ppm_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ppm"))
        .collect();
    out.sort();
    Ok(out)
}
