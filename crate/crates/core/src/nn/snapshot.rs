//! Text snapshot format for network parameters.
//!
//! ```text
//! acnmp-params 1
//! layers 2
//! 3 16 relu
//! 16 2 identity
//! count 98
//! 0.0123
//! ...
//! ```
//!
//! Values use Rust's shortest round-trip float formatting, so a reload is
//! bit-exact.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::nn::mlp::{Activation, LayerSpec, Mlp, MlpSpec, ParameterVector};

pub const PARAMS_MAGIC: &str = "acnmp-params";
pub const PARAMS_VERSION: u32 = 1;

pub fn write_mlp<W: Write>(out: &mut W, mlp: &Mlp) -> Result<()> {
    writeln!(out, "{PARAMS_MAGIC} {PARAMS_VERSION}")?;
    writeln!(out, "layers {}", mlp.spec.layers().len())?;
    for layer in mlp.spec.layers() {
        writeln!(
            out,
            "{} {} {}",
            layer.input_width,
            layer.output_width,
            layer.activation.name()
        )?;
    }
    writeln!(out, "count {}", mlp.params.len())?;
    for v in mlp.params.as_slice() {
        writeln!(out, "{v:?}")?;
    }
    Ok(())
}

/// Line reader that tracks position for error messages.
pub(crate) struct Lines<R> {
    inner: R,
    line_no: usize,
    buf: String,
}

impl<R: BufRead> Lines<R> {
    pub(crate) fn new(inner: R) -> Self {
        Lines {
            inner,
            line_no: 0,
            buf: String::new(),
        }
    }

    pub(crate) fn next_line(&mut self) -> Result<&str> {
        loop {
            self.buf.clear();
            self.line_no += 1;
            if self.inner.read_line(&mut self.buf)? == 0 {
                return Err(Error::Parse(format!(
                    "unexpected end of snapshot at line {}",
                    self.line_no
                )));
            }
            if !self.buf.trim().is_empty() {
                return Ok(self.buf.trim());
            }
        }
    }

    pub(crate) fn error(&self, msg: impl std::fmt::Display) -> Error {
        Error::Parse(format!("line {}: {msg}", self.line_no))
    }

    /// Reads `key value` and returns the parsed value.
    pub(crate) fn keyed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let line = self.next_line()?.to_string();
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(self.error(format!("expected `{key}`")));
        }
        let value = parts
            .next()
            .ok_or_else(|| self.error(format!("missing value for `{key}`")))?;
        value
            .parse()
            .map_err(|_| self.error(format!("bad value `{value}` for `{key}`")))
    }
}

pub(crate) fn read_mlp_from<R: BufRead>(lines: &mut Lines<R>) -> Result<Mlp> {
    let header = lines.next_line()?.to_string();
    let mut parts = header.split_whitespace();
    if parts.next() != Some(PARAMS_MAGIC) {
        return Err(lines.error("not a parameter snapshot"));
    }
    let version: u32 = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| lines.error("missing format version"))?;
    if version != PARAMS_VERSION {
        return Err(lines.error(format!("unsupported format version {version}")));
    }
    let n_layers: usize = lines.keyed("layers")?;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let line = lines.next_line()?.to_string();
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(lines.error("layer line needs `input output activation`"));
        }
        let input: usize = fields[0].parse().map_err(|_| lines.error("bad input width"))?;
        let output: usize = fields[1].parse().map_err(|_| lines.error("bad output width"))?;
        layers.push(LayerSpec::new(input, output, Activation::parse(fields[2])?));
    }
    let spec = MlpSpec::new(layers)?;
    let count: usize = lines.keyed("count")?;
    if count != spec.param_count() {
        return Err(lines.error(format!(
            "parameter count {count} does not match layer list ({})",
            spec.param_count()
        )));
    }
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        let line = lines.next_line()?;
        let v: f64 = line
            .parse()
            .map_err(|_| Error::Parse(format!("bad parameter value `{line}`")))?;
        values.push(v);
    }
    Mlp::new(spec, ParameterVector::from_vec(values)?)
}

pub fn read_mlp<R: BufRead>(input: R) -> Result<Mlp> {
    read_mlp_from(&mut Lines::new(input))
}
