//! Dense `H×W×C` tensors, convolution kernels and their text file format.
//!
//! A tensor file is one line of JSON header followed by the flat row-major
//! values, one per line:
//!
//! ```text
//! {"kind":"tensor","shape":[32,32,1]}
//! 0.25
//! ...
//! ```
//!
//! Kernel files use `"kind":"conv_kernel"`, a `[kh,kw,cin,cout]` shape and a
//! `"padding"` field.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Channel-last tensor; element `(i, j, ch)` sits at `(i*w + j)*c + ch`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    h: usize,
    w: usize,
    c: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        Self::filled(h, w, c, 0.0)
    }

    pub fn filled(h: usize, w: usize, c: usize, value: f64) -> Self {
        Tensor {
            h,
            w,
            c,
            data: vec![value; h * w * c],
        }
    }

    pub fn from_vec(h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::shape("all dimensions >= 1", format!("{h}x{w}x{c}")));
        }
        if data.len() != h * w * c {
            return Err(Error::shape(
                format!("{} values for {h}x{w}x{c}", h * w * c),
                data.len(),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("tensor values must be finite"));
        }
        Ok(Tensor { h, w, c, data })
    }

    pub fn from_fn(h: usize, w: usize, c: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(h * w * c);
        for i in 0..h {
            for j in 0..w {
                for ch in 0..c {
                    data.push(f(i, j, ch));
                }
            }
        }
        Tensor { h, w, c, data }
    }

    pub fn from_grid(grid: &Grid) -> Self {
        Tensor {
            h: grid.rows(),
            w: grid.cols(),
            c: 1,
            data: grid.as_slice().to_vec(),
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.h, self.w, self.c)
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, ch: usize) -> f64 {
        self.data[(i * self.w + j) * self.c + ch]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, ch: usize, v: f64) {
        self.data[(i * self.w + j) * self.c + ch] = v;
    }

    pub fn channel(&self, ch: usize) -> Grid {
        Grid::from_fn(self.h, self.w, |i, j| self.get(i, j, ch))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            h: self.h,
            w: self.w,
            c: self.c,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.check_same_shape(other)?;
        Ok(Tensor {
            h: self.h,
            w: self.w,
            c: self.c,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn check_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        Ok(())
    }

    pub fn scale(&self, k: f64) -> Tensor {
        self.map(|v| k * v)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Stacks tensors with equal spatial size along the channel axis.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::domain("cannot concatenate zero tensors"))?;
        let (h, w) = (first.h, first.w);
        if let Some(bad) = parts.iter().find(|t| (t.h, t.w) != (h, w)) {
            return Err(Error::shape(format!("{h}x{w}xC"), format!("{:?}", bad.shape())));
        }
        let c: usize = parts.iter().map(|t| t.c).sum();
        let mut data = Vec::with_capacity(h * w * c);
        for p in 0..h * w {
            for t in parts {
                data.extend_from_slice(&t.data[p * t.c..(p + 1) * t.c]);
            }
        }
        Ok(Tensor { h, w, c, data })
    }

    pub fn to_file_string(&self) -> String {
        let header = FileHeader {
            kind: FileKind::Tensor,
            shape: vec![self.h, self.w, self.c],
            padding: None,
        };
        write_file(&header, &self.data)
    }

    pub fn from_file_str(text: &str) -> Result<Tensor> {
        let (header, values) = read_file(text)?;
        if header.kind != FileKind::Tensor || header.shape.len() != 3 {
            return Err(Error::parse(
                Some("header".into()),
                format!("expected a 3-d tensor, got {:?} {:?}", header.kind, header.shape),
            ));
        }
        Tensor::from_vec(header.shape[0], header.shape[1], header.shape[2], values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Tensor> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Tensor::from_file_str(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    #[default]
    Zero,
    Replicate,
}

/// `kh×kw×cin×cout` kernel applied as a stride-1, same-size cross-correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    kh: usize,
    kw: usize,
    cin: usize,
    cout: usize,
    padding: Padding,
    data: Vec<f64>,
}

impl ConvKernel {
    pub fn new(
        kh: usize,
        kw: usize,
        cin: usize,
        cout: usize,
        padding: Padding,
        data: Vec<f64>,
    ) -> Result<Self> {
        if kh.is_multiple_of(2) || kw.is_multiple_of(2) {
            return Err(Error::shape("odd kernel size", format!("{kh}x{kw}")));
        }
        if cin == 0 || cout == 0 {
            return Err(Error::shape("channels >= 1", format!("{cin}->{cout}")));
        }
        if data.len() != kh * kw * cin * cout {
            return Err(Error::shape(
                format!("{} weights", kh * kw * cin * cout),
                data.len(),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("kernel weights must be finite"));
        }
        Ok(ConvKernel {
            kh,
            kw,
            cin,
            cout,
            padding,
            data,
        })
    }

    pub fn zeros(kh: usize, kw: usize, cin: usize, cout: usize, padding: Padding) -> Result<Self> {
        Self::new(kh, kw, cin, cout, padding, vec![0.0; kh * kw * cin * cout])
    }

    /// `1×1` kernel that copies channel `k` to channel `k`.
    pub fn identity(channels: usize) -> Self {
        let mut data = vec![0.0; channels * channels];
        for k in 0..channels {
            data[k * channels + k] = 1.0;
        }
        ConvKernel {
            kh: 1,
            kw: 1,
            cin: channels,
            cout: channels,
            padding: Padding::Zero,
            data,
        }
    }

    /// Uniform weights in `±sqrt(3 / fan_in)`, i.e. unit-variance outputs for unit-variance inputs.
    pub fn random(
        kh: usize,
        kw: usize,
        cin: usize,
        cout: usize,
        padding: Padding,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let bound = (3.0 / (kh * kw * cin) as f64).sqrt();
        let data = (0..kh * kw * cin * cout)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        Self::new(kh, kw, cin, cout, padding, data)
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.kh, self.kw, self.cin, self.cout)
    }

    pub fn in_channels(&self) -> usize {
        self.cin
    }

    pub fn out_channels(&self) -> usize {
        self.cout
    }

    pub fn padding(&self) -> Padding {
        self.padding
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, ci: usize, co: usize) -> f64 {
        self.data[((a * self.kw + b) * self.cin + ci) * self.cout + co]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_file_string(&self) -> String {
        let header = FileHeader {
            kind: FileKind::ConvKernel,
            shape: vec![self.kh, self.kw, self.cin, self.cout],
            padding: Some(self.padding),
        };
        write_file(&header, &self.data)
    }

    pub fn from_file_str(text: &str) -> Result<ConvKernel> {
        let (header, values) = read_file(text)?;
        if header.kind != FileKind::ConvKernel || header.shape.len() != 4 {
            return Err(Error::parse(
                Some("header".into()),
                format!("expected a 4-d conv kernel, got {:?} {:?}", header.kind, header.shape),
            ));
        }
        let s = &header.shape;
        ConvKernel::new(s[0], s[1], s[2], s[3], header.padding.unwrap_or_default(), values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<ConvKernel> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ConvKernel::from_file_str(&text)
    }
}

/// Same-size, stride-1 cross-correlation:
/// `y[i,j,o] = Σ k[a,b,ci,o] · x[i+a-kh/2, j+b-kw/2, ci]`.
pub fn conv2d(x: &Tensor, k: &ConvKernel) -> Result<Tensor> {
    if x.c != k.cin {
        return Err(Error::shape(
            format!("{} input channels", k.cin),
            format!("{} channels", x.c),
        ));
    }
    let (h, w) = (x.h as isize, x.w as isize);
    let (ph, pw) = ((k.kh / 2) as isize, (k.kw / 2) as isize);
    let mut out = Tensor::zeros(x.h, x.w, k.cout);
    let mut acc = vec![0.0; k.cout];
    for i in 0..h {
        for j in 0..w {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for a in 0..k.kh {
                let mut si = i + a as isize - ph;
                if si < 0 || si >= h {
                    match k.padding {
                        Padding::Zero => continue,
                        Padding::Replicate => si = si.clamp(0, h - 1),
                    }
                }
                for b in 0..k.kw {
                    let mut sj = j + b as isize - pw;
                    if sj < 0 || sj >= w {
                        match k.padding {
                            Padding::Zero => continue,
                            Padding::Replicate => sj = sj.clamp(0, w - 1),
                        }
                    }
                    let base = (si as usize * x.w + sj as usize) * x.c;
                    let pixel = &x.data[base..base + x.c];
                    let kbase = (a * k.kw + b) * k.cin * k.cout;
                    for (ci, &xv) in pixel.iter().enumerate() {
                        if xv == 0.0 {
                            continue;
                        }
                        let row = &k.data[kbase + ci * k.cout..kbase + (ci + 1) * k.cout];
                        for (acc, &kv) in acc.iter_mut().zip(row) {
                            *acc += kv * xv;
                        }
                    }
                }
            }
            let start = (i as usize * x.w + j as usize) * k.cout;
            out.data[start..start + k.cout].copy_from_slice(&acc);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum FileKind {
    Tensor,
    ConvKernel,
}

#[derive(Debug, Serialize, Deserialize)]
struct FileHeader {
    kind: FileKind,
    shape: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    padding: Option<Padding>,
}

fn write_file(header: &FileHeader, values: &[f64]) -> String {
    let mut out = serde_json::to_string(header).expect("header serializes");
    out.push('\n');
    for v in values {
        writeln!(out, "{v}").expect("writing to a String");
    }
    out
}

fn read_file(text: &str) -> Result<(FileHeader, Vec<f64>)> {
    let (head, body) = text.split_once('\n').unwrap_or((text, ""));
    let header: FileHeader = serde_json::from_str(head.trim())
        .map_err(|e| Error::parse(Some("line 1".into()), format!("bad header: {e}")))?;
    let mut values = Vec::new();
    for (n, line) in body.lines().enumerate() {
        for token in line.split_whitespace() {
            values.push(token.parse::<f64>().map_err(|e| {
                Error::parse(Some(format!("line {}", n + 2)), format!("{token:?}: {e}"))
            })?);
        }
    }
    Ok((header, values))
}
