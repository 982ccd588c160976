//! Textual architecture format: one layer per line.
//!
//! ```text
//! # five-layer MNIST baseline
//! input 28 28 1
//! conv 5 8 1 2
//! relu
//! pool max 2 2
//! fc 10
//! ```
//!
//! Keywords are `input H W D`, `conv R K S Z`, `relu`,
//! `pool {max|avg|l2|l1} WINDOW STRIDE`, and `fc N`; `#` starts a comment.
//! An optional `name TEXT` line overrides the caller-supplied default name
//! (checkpoints use it so architectures round-trip exactly).

use crate::error::{Error, Result};
use crate::layers::PoolKind;
use crate::planner::{ArchSpec, LayerSpec};

fn parse_count(token: &str, line: usize, what: &str) -> Result<usize> {
    token.parse::<usize>().map_err(|_| Error::Parse {
        line,
        message: format!("{what} must be a nonnegative integer, got `{token}`"),
    })
}

fn expect_arity(tokens: &[&str], arity: usize, line: usize, usage: &str) -> Result<()> {
    if tokens.len() != arity {
        return Err(Error::Parse {
            line,
            message: format!("expected `{usage}`, got {} tokens", tokens.len()),
        });
    }
    Ok(())
}

/// Parses architecture text. `default_name` names the result unless the
/// text carries a `name` line.
pub fn parse(text: &str, default_name: &str) -> Result<ArchSpec> {
    let mut name: Option<String> = None;
    let mut layers = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        match tokens[0] {
            "name" => {
                expect_arity(&tokens, 2, line, "name TEXT")?;
                if name.is_some() {
                    return Err(Error::Parse {
                        line,
                        message: "duplicate name line".to_string(),
                    });
                }
                name = Some(tokens[1].to_string());
            }
            "input" => {
                expect_arity(&tokens, 4, line, "input HEIGHT WIDTH DEPTH")?;
                layers.push(LayerSpec::Input {
                    height: parse_count(tokens[1], line, "height")?,
                    width: parse_count(tokens[2], line, "width")?,
                    depth: parse_count(tokens[3], line, "depth")?,
                });
            }
            "conv" => {
                expect_arity(&tokens, 5, line, "conv FIELD KERNELS STRIDE PAD")?;
                layers.push(LayerSpec::Conv {
                    field: parse_count(tokens[1], line, "field")?,
                    kernels: parse_count(tokens[2], line, "kernels")?,
                    stride: parse_count(tokens[3], line, "stride")?,
                    pad: parse_count(tokens[4], line, "pad")?,
                });
            }
            "relu" => {
                expect_arity(&tokens, 1, line, "relu")?;
                layers.push(LayerSpec::Relu);
            }
            "pool" => {
                expect_arity(&tokens, 4, line, "pool {max|avg|l2|l1} WINDOW STRIDE")?;
                let kind = PoolKind::from_token(tokens[1]).ok_or_else(|| Error::Parse {
                    line,
                    message: format!("unknown pool kind `{}`; expected max, avg, l2 or l1", tokens[1]),
                })?;
                layers.push(LayerSpec::Pool {
                    kind,
                    window: parse_count(tokens[2], line, "window")?,
                    stride: parse_count(tokens[3], line, "stride")?,
                });
            }
            "fc" => {
                expect_arity(&tokens, 2, line, "fc OUTPUTS")?;
                layers.push(LayerSpec::Fc { outputs: parse_count(tokens[1], line, "outputs")? });
            }
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown keyword `{other}`"),
                });
            }
        }
    }
    ArchSpec::new(name.unwrap_or_else(|| default_name.to_string()), layers)
}

/// Canonical rendering, including the `name` line, such that
/// `parse(format(a), _) == a`.
pub fn format(arch: &ArchSpec) -> String {
    let mut out = String::new();
    out.push_str(&format!("name {}\n", arch.name));
    for layer in &arch.layers {
        out.push_str(&layer.to_string());
        out.push('\n');
    }
    out
}
