//! File formats: ASCII PGM (P2) / PPM (P3) images, lossless tensor text,
//! and the flat JSON result document.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::tensor::ImageTensor;

/// Decimal with 17 significant digits; parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Whitespace tokenizer that tracks byte offsets and skips `#` comments.
pub(crate) struct Tokens<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Tokens<'a> {
    pub(crate) fn new(text: &'a str) -> Self {
        Self { text, pos: 0 }
    }

    pub(crate) fn next_token(&mut self) -> Option<(usize, &'a str)> {
        let bytes = self.text.as_bytes();
        loop {
            while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < bytes.len() && bytes[self.pos] == b'#' {
                while self.pos < bytes.len() && bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        if self.pos >= bytes.len() {
            return None;
        }
        let start = self.pos;
        while self.pos < bytes.len() && !bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        Some((start, &self.text[start..self.pos]))
    }

    fn expect(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.next_token().ok_or_else(|| Error::Parse {
            offset: self.text.len(),
            message: format!("unexpected end of input, expected {what}"),
        })
    }

    pub(crate) fn parse_usize(&mut self) -> Result<usize> {
        let (off, tok) = self.expect("an integer")?;
        tok.parse().map_err(|_| Error::Parse {
            offset: off,
            message: format!("expected a non-negative integer, found '{tok}'"),
        })
    }

    pub(crate) fn parse_f64(&mut self) -> Result<f64> {
        let (off, tok) = self.expect("a number")?;
        match tok.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::Parse {
                offset: off,
                message: format!("expected a finite number, found '{tok}'"),
            }),
        }
    }
}

/// On-disk image encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    /// ASCII greyscale, one channel.
    Pgm,
    /// ASCII RGB, three channels.
    Ppm,
    /// `tensor C H W` header followed by 17-digit decimals; lossless.
    TensorText,
}

impl ImageFormat {
    /// Natural 8-bit format for a tensor's channel count.
    pub fn for_channels(c: usize) -> Result<Self> {
        match c {
            1 => Ok(ImageFormat::Pgm),
            3 => Ok(ImageFormat::Ppm),
            _ => Err(invalid(format!("no 8-bit image format for {c} channels"))),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Pgm => "pgm",
            ImageFormat::Ppm => "ppm",
            ImageFormat::TensorText => "tensor",
        }
    }
}

/// Parses PGM P2, PPM P3 or tensor text, chosen by the leading magic token.
/// Netpbm samples are scaled by `1 / maxval` into `[0, 1]`.
pub fn parse_image(text: &str) -> Result<ImageTensor> {
    let mut tokens = Tokens::new(text);
    let (off, magic) = tokens.expect("a format tag")?;
    match magic {
        "P2" | "P3" => {
            let channels = if magic == "P2" { 1 } else { 3 };
            let width = tokens.parse_usize()?;
            let height = tokens.parse_usize()?;
            let (moff, _) = peek(&tokens).unwrap_or((text.len(), ""));
            let maxval = tokens.parse_usize()?;
            if !(1..=255).contains(&maxval) {
                return Err(Error::Parse {
                    offset: moff,
                    message: format!("maxval must be in 1..=255, got {maxval}"),
                });
            }
            if width == 0 || height == 0 {
                return Err(Error::Parse {
                    offset: moff,
                    message: "image dimensions must be positive".into(),
                });
            }
            let mut interleaved = Vec::with_capacity(width * height * channels);
            for _ in 0..width * height * channels {
                let (poff, _) = peek(&tokens).unwrap_or((text.len(), ""));
                let v = tokens.parse_usize()?;
                if v > maxval {
                    return Err(Error::Parse {
                        offset: poff,
                        message: format!("sample {v} exceeds maxval {maxval}"),
                    });
                }
                interleaved.push(v as f64 / maxval as f64);
            }
            trailing(&mut tokens)?;
            // Netpbm interleaves channels per pixel; tensors are planar.
            let n = width * height;
            let planar = (0..channels)
                .flat_map(|c| (0..n).map(move |p| (c, p)))
                .map(|(c, p)| interleaved[p * channels + c])
                .collect();
            ImageTensor::new(channels, height, width, planar)
        }
        "tensor" => {
            let c = tokens.parse_usize()?;
            let h = tokens.parse_usize()?;
            let w = tokens.parse_usize()?;
            if c == 0 || h == 0 || w == 0 {
                return Err(Error::Parse {
                    offset: off,
                    message: "tensor dimensions must be positive".into(),
                });
            }
            let mut data = Vec::with_capacity(c * h * w);
            for _ in 0..c * h * w {
                data.push(tokens.parse_f64()?);
            }
            trailing(&mut tokens)?;
            ImageTensor::new(c, h, w, data)
        }
        other => Err(Error::Parse {
            offset: off,
            message: format!("unknown format tag '{other}'"),
        }),
    }
}

fn peek<'a>(tokens: &Tokens<'a>) -> Option<(usize, &'a str)> {
    Tokens {
        text: tokens.text,
        pos: tokens.pos,
    }
    .next_token()
}

fn trailing(tokens: &mut Tokens<'_>) -> Result<()> {
    match tokens.next_token() {
        None => Ok(()),
        Some((off, tok)) => Err(Error::Parse {
            offset: off,
            message: format!("trailing data '{tok}'"),
        }),
    }
}

/// Reads a whole file, naming it in any I/O error.
pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}

pub fn read_image(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let bytes = read_file(path.as_ref())?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Parse {
        offset: e.valid_up_to(),
        message: "file is not ASCII text".into(),
    })?;
    parse_image(text)
}

/// `[0, 1]` value to an 8-bit sample: clamp, scale by 255, round half up.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Canonical text encoding: header tokens each followed by a newline
/// (`P2\nW H\n255\n`), then one image row per line, single-space separated.
pub fn encode_image(t: &ImageTensor, format: ImageFormat) -> Result<String> {
    let (c, h, w) = t.shape();
    let mut s = String::new();
    match format {
        ImageFormat::Pgm | ImageFormat::Ppm => {
            let (magic, want) = if format == ImageFormat::Pgm {
                ("P2", 1)
            } else {
                ("P3", 3)
            };
            if c != want {
                return Err(invalid(format!(
                    "{magic} needs {want} channel(s), tensor has {c}"
                )));
            }
            s.push_str(&format!("{magic}\n{w} {h}\n255\n"));
            for row in 0..h {
                let line: Vec<String> = (0..w)
                    .flat_map(|col| (0..c).map(move |ch| (ch, col)))
                    .map(|(ch, col)| quantize(t.get(ch, row, col)).to_string())
                    .collect();
                s.push_str(&line.join(" "));
                s.push('\n');
            }
        }
        ImageFormat::TensorText => {
            s.push_str(&format!("tensor {c} {h} {w}\n"));
            for ch in 0..c {
                for row in 0..h {
                    let line: Vec<String> =
                        (0..w).map(|col| fmt_f64(t.get(ch, row, col))).collect();
                    s.push_str(&line.join(" "));
                    s.push('\n');
                }
            }
        }
    }
    Ok(s)
}

pub fn write_image(t: &ImageTensor, path: impl AsRef<Path>, format: ImageFormat) -> Result<()> {
    write_atomic(path.as_ref(), encode_image(t, format)?.as_bytes())
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = temp_sibling(path);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// Hidden temporary name next to `path`, unique per process.
pub fn temp_sibling(path: &Path) -> std::path::PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!(".{name}.{}.tmp", std::process::id()))
}

/// A value in a [`ResultDocument`].
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
    Floats(Vec<f64>),
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as i64)
    }
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::Int(v as i64)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_owned())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

impl From<Vec<f64>> for Value {
    fn from(v: Vec<f64>) -> Self {
        Value::Floats(v)
    }
}

/// Flat key/value record of a run, serialised as JSON with sorted keys.
///
/// Floats are always written in exponent form with 17 significant digits,
/// which also keeps them distinguishable from integers when read back.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultDocument {
    entries: BTreeMap<String, Value>,
}

impl ResultDocument {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<Value>) {
        self.entries.insert(key.into(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key)
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        match self.entries.get(key)? {
            Value::Float(v) => Some(*v),
            Value::Int(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Value)> {
        self.entries.iter()
    }

    pub fn to_json(&self) -> Result<String> {
        if self.entries.is_empty() {
            return Ok("{}".into());
        }
        let mut out = String::from("{\n");
        let n = self.entries.len();
        for (i, (k, v)) in self.entries.iter().enumerate() {
            out.push_str("  ");
            out.push_str(&json_string(k));
            out.push_str(": ");
            out.push_str(&json_value(k, v)?);
            if i + 1 < n {
                out.push(',');
            }
            out.push('\n');
        }
        out.push('}');
        Ok(out)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let parsed: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let serde_json::Value::Object(map) = parsed else {
            return Err(invalid("result document must be a JSON object"));
        };
        let mut doc = Self::new();
        for (k, v) in map {
            let value = match v {
                serde_json::Value::Bool(b) => Value::Bool(b),
                serde_json::Value::String(s) => Value::Text(s),
                serde_json::Value::Number(n) => number(&k, &n)?,
                serde_json::Value::Array(items) => Value::Floats(
                    items
                        .iter()
                        .map(|it| match it {
                            serde_json::Value::Number(n) => n
                                .as_f64()
                                .ok_or_else(|| invalid(format!("{k}: non-numeric array entry"))),
                            _ => Err(invalid(format!("{k}: arrays may only hold numbers"))),
                        })
                        .collect::<Result<_>>()?,
                ),
                _ => return Err(invalid(format!("{k}: unsupported value type"))),
            };
            doc.entries.insert(k, value);
        }
        Ok(doc)
    }
}

fn number(key: &str, n: &serde_json::Number) -> Result<Value> {
    if let Some(i) = n.as_i64() {
        // Integers are written without a decimal point or exponent.
        if !n.to_string().contains(['.', 'e', 'E']) {
            return Ok(Value::Int(i));
        }
    }
    n.as_f64()
        .map(Value::Float)
        .ok_or_else(|| invalid(format!("{key}: number out of range")))
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("string serialisation cannot fail")
}

fn json_float(key: &str, v: f64) -> Result<String> {
    if v.is_finite() {
        Ok(fmt_f64(v))
    } else {
        Err(invalid(format!(
            "{key}: non-finite value {v} cannot be serialised"
        )))
    }
}

fn json_value(key: &str, v: &Value) -> Result<String> {
    Ok(match v {
        Value::Bool(b) => b.to_string(),
        Value::Int(i) => i.to_string(),
        Value::Float(f) => json_float(key, *f)?,
        Value::Text(s) => json_string(s),
        Value::Floats(items) => {
            let parts = items
                .iter()
                .map(|f| json_float(key, *f))
                .collect::<Result<Vec<_>>>()?;
            format!("[{}]", parts.join(", "))
        }
    })
}

pub fn write_result(doc: &ResultDocument, path: impl AsRef<Path>) -> Result<()> {
    let mut text = doc.to_json()?;
    text.push('\n');
    write_atomic(path.as_ref(), text.as_bytes())
}

pub fn read_result(path: impl AsRef<Path>) -> Result<ResultDocument> {
    let bytes = read_file(path.as_ref())?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
        offset: e.utf8_error().valid_up_to(),
        message: "file is not UTF-8 text".into(),
    })?;
    ResultDocument::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pgm_examples() {
        let t = parse_image("P2\n1 1\n255\n255\n").unwrap();
        assert_eq!(t.shape(), (1, 1, 1));
        assert_eq!(t.as_slice(), &[1.0]);

        let t = parse_image("P3\n2 1\n255\n255 0 0 0 255 0\n").unwrap();
        assert_eq!(t.shape(), (3, 1, 2));
        assert_eq!(t.channel(0), &[1.0, 0.0]);
        assert_eq!(t.channel(1), &[0.0, 1.0]);
        assert_eq!(t.channel(2), &[0.0, 0.0]);

        let zeros = encode_image(&ImageTensor::zeros(1, 2, 2), ImageFormat::Pgm).unwrap();
        assert_eq!(zeros, "P2\n2 2\n255\n0 0\n0 0\n");
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(-3.0), 0);
        assert_eq!(quantize(7.0), 255);
    }

    #[test]
    fn comments_and_other_maxval() {
        let t = parse_image("P2 # grey\n# size\n2 1\n4\n0 # first\n 2").unwrap();
        assert_eq!(t.as_slice(), &[0.0, 0.5]);
    }

    #[test]
    fn parse_errors_carry_offsets() {
        let cases = [
            ("P5\n1 1\n255\n0", 0),
            ("P2\n1 1\n255\n256", 11),
            ("P2\n1 1\n0\n0", 7),
            ("P2\n2 1\n255\n7", 12),
            ("P2\n1 1\n255\n1 2", 13),
            ("P2\nx 1\n255\n1", 3),
            ("tensor 1 1 2\n0.5 nan", 17),
        ];
        for (text, want) in cases {
            match parse_image(text) {
                Err(Error::Parse { offset, .. }) => assert_eq!(offset, want, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn channel_mismatch_on_write() {
        assert!(encode_image(&ImageTensor::zeros(3, 2, 2), ImageFormat::Pgm).is_err());
        assert!(encode_image(&ImageTensor::zeros(1, 2, 2), ImageFormat::Ppm).is_err());
    }

    #[test]
    fn canonical_netpbm_round_trips_byte_identically() {
        let mut text = String::from("P3\n3 2\n255\n");
        let rows = ["0 1 2 3 4 5 6 7 8", "255 254 128 127 64 63 9 10 11"];
        for r in rows {
            text.push_str(r);
            text.push('\n');
        }
        let t = parse_image(&text).unwrap();
        assert_eq!(encode_image(&t, ImageFormat::Ppm).unwrap(), text);
    }

    #[test]
    fn result_document_examples() {
        assert_eq!(ResultDocument::new().to_json().unwrap(), "{}");
        let mut d = ResultDocument::new();
        d.insert("residual", 1e-9);
        d.insert("method", "sig");
        d.insert("steps", 200usize);
        d.insert("hit", true);
        d.insert("curve", vec![0.1, 0.2]);
        let text = d.to_json().unwrap();
        let keys: Vec<usize> = ["curve", "hit", "method", "residual", "steps"]
            .iter()
            .map(|k| text.find(k).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]), "keys sorted");
        let back = ResultDocument::from_json(&text).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.get_f64("residual"), Some(1e-9));
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn result_document_errors() {
        match ResultDocument::from_json("{\n  \"a\": 1,\n  \"b\": }") {
            Err(Error::Syntax { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(ResultDocument::from_json("[1]").is_err());
        assert!(ResultDocument::from_json("{\"a\": {\"b\": 1}}").is_err());
        let mut d = ResultDocument::new();
        d.insert("bad", f64::NAN);
        assert!(d.to_json().is_err());
    }

    proptest! {
        #[test]
        fn tensor_text_is_lossless(
            data in prop::collection::vec(-1e6f64..1e6, 12),
            tiny in -1e-300f64..1e-300,
        ) {
            let mut data = data;
            data[0] = tiny;
            let t = ImageTensor::new(3, 2, 2, data).unwrap();
            let text = encode_image(&t, ImageFormat::TensorText).unwrap();
            prop_assert_eq!(parse_image(&text).unwrap(), t);
        }

        #[test]
        fn netpbm_quantisation_error_bounded(data in prop::collection::vec(0.0f64..=1.0, 18)) {
            let t = ImageTensor::new(3, 2, 3, data).unwrap();
            let back = parse_image(&encode_image(&t, ImageFormat::Ppm).unwrap()).unwrap();
            prop_assert!(back.max_abs_diff(&t) <= 1.0 / 510.0 + 1e-15);
        }

        #[test]
        fn floats_round_trip_through_documents(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
            let mut d = ResultDocument::new();
            d.insert("x", v);
            let back = ResultDocument::from_json(&d.to_json().unwrap()).unwrap();
            prop_assert_eq!(back.get("x"), Some(&Value::Float(v)));
        }
    }
}
