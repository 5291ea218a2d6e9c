//! Plain-text model files.
//!
//! ```text
//! bcnn-model v1
//! family Werner
//! arch m=1 n1=1 n2=1 fixed_identity=0 fc=1,1024,1
//! kernel <path> <layer> <index> <fixed> <x> <y> <z> <i>
//! dense <layer> <out> <in>
//! w <in values>          (one line per output row)
//! b <out values>
//! ```
//!
//! Reals are written with 17 significant digits, so files round-trip exactly.

use std::io::{BufRead, Write};

use ndarray::{Array1, Array2};

use super::network::{Architecture, ConvPath, DenseLayer, ModelParams};
use super::pauli::PauliKernel;
use crate::error::{Error, Result};
use crate::states::StateFamily;

const MAGIC: &str = "bcnn-model v1";

fn fmt_row<'a>(values: impl Iterator<Item = &'a f64>) -> String {
    values
        .map(|v| format!("{v:.16e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// A trained model together with the state family it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub family: StateFamily,
    pub params: ModelParams,
}

pub fn write_model<W: Write>(params: &ModelParams, family: StateFamily, mut out: W) -> Result<()> {
    params.validate()?;
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "family {family}")?;
    writeln!(out, "arch {}", params.arch)?;
    for (p, path) in params.paths.iter().enumerate() {
        for (layer, kernels) in [(1, &path.layer1), (2, &path.layer2)] {
            for (i, k) in kernels.iter().enumerate() {
                writeln!(
                    out,
                    "kernel {p} {layer} {i} {} {}",
                    u8::from(k.fixed_identity),
                    fmt_row(k.coeffs.iter())
                )?;
            }
        }
    }
    for (l, layer) in params.dense.iter().enumerate() {
        let (rows, cols) = layer.weights.dim();
        writeln!(out, "dense {l} {rows} {cols}")?;
        for row in layer.weights.rows() {
            writeln!(out, "w {}", fmt_row(row.iter()))?;
        }
        writeln!(out, "b {}", fmt_row(layer.bias.iter()))?;
    }
    Ok(())
}

struct Lines<R> {
    inner: std::iter::Enumerate<std::io::Lines<R>>,
    last: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<Option<String>> {
        match self.inner.next() {
            Some((i, line)) => {
                self.last = i + 1;
                Ok(Some(line?))
            }
            None => Ok(None),
        }
    }

    fn expect_line(&mut self) -> Result<String> {
        self.next_line()?.ok_or(Error::Parse {
            line: self.last + 1,
            msg: "unexpected end of model file".into(),
        })
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.last,
            msg: msg.into(),
        }
    }
}

fn parse_reals(fields: &[&str], line: usize) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>().map_err(|e| Error::Parse {
                line,
                msg: format!("'{f}': {e}"),
            })
        })
        .collect()
}

pub fn read_model<R: BufRead>(input: R) -> Result<ModelFile> {
    let mut lines = Lines {
        inner: input.lines().enumerate(),
        last: 0,
    };
    if lines.expect_line()?.trim() != MAGIC {
        return Err(lines.err("not a bcnn model file"));
    }
    let family_line = lines.expect_line()?;
    let family: StateFamily = family_line
        .strip_prefix("family ")
        .ok_or_else(|| lines.err("expected family line"))?
        .parse()
        .map_err(|e: Error| lines.err(e.to_string()))?;
    let arch_line = lines.expect_line()?;
    let arch: Architecture = arch_line
        .strip_prefix("arch ")
        .ok_or_else(|| lines.err("expected architecture line"))?
        .parse()
        .map_err(|e: Error| lines.err(e.to_string()))?;

    let mut paths = vec![
        ConvPath {
            layer1: Vec::new(),
            layer2: Vec::new()
        };
        arch.m
    ];
    let kernel_lines = arch.m * (arch.n1 + arch.n2);
    for _ in 0..kernel_lines {
        let line = lines.expect_line()?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 9 || f[0] != "kernel" {
            return Err(lines.err("expected kernel line"));
        }
        let idx = |s: &str| s.parse::<usize>().map_err(|e| lines.err(e.to_string()));
        let (p, layer, _i, fixed) = (idx(f[1])?, idx(f[2])?, idx(f[3])?, idx(f[4])? != 0);
        let c = parse_reals(&f[5..], lines.last)?;
        let kernel = PauliKernel {
            coeffs: [c[0], c[1], c[2], c[3]],
            fixed_identity: fixed,
        };
        if fixed && kernel.coeffs != [0.0, 0.0, 0.0, 1.0] {
            return Err(lines.err("fixed identity kernel with non-identity coefficients"));
        }
        let path = paths
            .get_mut(p)
            .ok_or_else(|| lines.err(format!("path {p} out of range")))?;
        match layer {
            1 => path.layer1.push(kernel),
            2 => path.layer2.push(kernel),
            _ => return Err(lines.err(format!("bad layer {layer}"))),
        }
    }

    let mut dense = Vec::new();
    for w in arch.fc_widths.windows(2) {
        let header = lines.expect_line()?;
        let f: Vec<&str> = header.split_whitespace().collect();
        if f.len() != 4 || f[0] != "dense" || f[2] != w[1].to_string() || f[3] != w[0].to_string() {
            return Err(lines.err("dense layer header does not match architecture"));
        }
        let mut weights = Vec::with_capacity(w[0] * w[1]);
        for _ in 0..w[1] {
            let line = lines.expect_line()?;
            let vals = line
                .strip_prefix("w ")
                .ok_or_else(|| lines.err("expected weight row"))?;
            let row = parse_reals(&vals.split_whitespace().collect::<Vec<_>>(), lines.last)?;
            if row.len() != w[0] {
                return Err(lines.err("weight row has wrong length"));
            }
            weights.extend(row);
        }
        let line = lines.expect_line()?;
        let vals = line
            .strip_prefix("b ")
            .ok_or_else(|| lines.err("expected bias row"))?;
        let bias = parse_reals(&vals.split_whitespace().collect::<Vec<_>>(), lines.last)?;
        if bias.len() != w[1] {
            return Err(lines.err("bias row has wrong length"));
        }
        dense.push(DenseLayer {
            weights: Array2::from_shape_vec((w[1], w[0]), weights).expect("checked shape"),
            bias: Array1::from(bias),
        });
    }
    let params = ModelParams { arch, paths, dense };
    params.validate()?;
    Ok(ModelFile { family, params })
}
