//! Number formatting and line-oriented helpers shared by the text file formats.

use std::fmt::Write;

/// Shortest decimal representation that parses back to the identical `f64`.
///
/// Plain notation is used for moderate magnitudes, exponent notation otherwise,
/// so that `0.5` prints as `0.5` and `1e-300` does not expand to 300 digits.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn join_f64(values: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{}", format_f64(*v));
    }
    s
}

/// Parses whitespace-separated reals, rejecting NaN and infinities.
pub fn parse_f64_list(s: &str) -> Option<Vec<f64>> {
    s.split_whitespace()
        .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect()
}

/// Cursor over the non-empty, non-comment lines of a model file. Each line is
/// `key value...`.
pub struct KeyLines<'a> {
    lines: Vec<(&'a str, &'a str)>,
    pos: usize,
}

impl<'a> KeyLines<'a> {
    pub fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| match l.split_once(char::is_whitespace) {
                Some((k, rest)) => (k, rest.trim()),
                None => (l, ""),
            })
            .collect();
        Self { lines, pos: 0 }
    }

    /// Next line, which must carry `key`; returns the rest of the line.
    pub fn expect(&mut self, key: &str) -> Result<&'a str, String> {
        match self.lines.get(self.pos) {
            Some((k, rest)) if *k == key => {
                self.pos += 1;
                Ok(rest)
            }
            Some((k, _)) => Err(format!("expected `{key}`, found `{k}`")),
            None => Err(format!("expected `{key}`, found end of file")),
        }
    }

    pub fn expect_f64(&mut self, key: &str) -> Result<f64, String> {
        let rest = self.expect(key)?;
        rest.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("`{key}`: bad number `{rest}`"))
    }

    pub fn expect_usize(&mut self, key: &str) -> Result<usize, String> {
        let rest = self.expect(key)?;
        rest.parse::<usize>()
            .map_err(|_| format!("`{key}`: bad count `{rest}`"))
    }

    pub fn expect_f64s(&mut self, key: &str, len: usize) -> Result<Vec<f64>, String> {
        let rest = self.expect(key)?;
        let v = parse_f64_list(rest).ok_or_else(|| format!("`{key}`: bad number list"))?;
        if v.len() != len {
            return Err(format!("`{key}`: expected {len} values, found {}", v.len()));
        }
        Ok(v)
    }

    pub fn finish(&self) -> Result<(), String> {
        match self.lines.get(self.pos) {
            None => Ok(()),
            Some((k, _)) => Err(format!("unexpected trailing line `{k}`")),
        }
    }
}
