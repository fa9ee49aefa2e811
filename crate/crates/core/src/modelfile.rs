//! Binary model container shared by networks and back-end transforms.
//!
//! ```text
//! XADAPT-MODEL v1\n
//! role <source|adda|dat|lda|plda>\n
//! meta <key> <value>\n                        (zero or more)
//! net <name> <n_layers>\n
//! layer <in> <out> <relu|identity>\n          (n_layers times, each followed by
//! <out*in f64 LE, row-major weight><out f64 LE bias>)
//! matrix <name> <rows> <cols>\n<rows*cols f64 LE, row-major>
//! vector <name> <len>\n<len f64 LE>
//! end\n
//! ```
//!
//! Records appear in insertion order, so writing a parsed file reproduces
//! it byte for byte.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{Activation, Dense, Mlp};

pub const MAGIC: &str = "XADAPT-MODEL v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Source,
    Adda,
    Dat,
    Lda,
    Plda,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Source => "source",
            Role::Adda => "adda",
            Role::Dat => "dat",
            Role::Lda => "lda",
            Role::Plda => "plda",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "source" => Role::Source,
            "adda" => Role::Adda,
            "dat" => Role::Dat,
            "lda" => Role::Lda,
            "plda" => Role::Plda,
            other => return Err(Error::InvalidArgument(format!("unknown model role `{other}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Item {
    Net(Mlp),
    Matrix(Matrix),
    Vector(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub role: Role,
    meta: Vec<(String, String)>,
    items: Vec<(String, Item)>,
}

fn check_token(kind: &str, s: &str) -> Result<()> {
    if s.is_empty() || s.chars().any(|c| c.is_whitespace()) {
        return Err(Error::InvalidArgument(format!(
            "{kind} `{s}` must be non-empty and free of whitespace"
        )));
    }
    Ok(())
}

impl ModelFile {
    pub fn new(role: Role) -> Self {
        ModelFile {
            role,
            meta: Vec::new(),
            items: Vec::new(),
        }
    }

    pub fn push_meta(&mut self, key: &str, value: impl ToString) -> Result<()> {
        check_token("meta key", key)?;
        let value = value.to_string();
        if value.contains('\n') {
            return Err(Error::InvalidArgument("meta value contains a newline".into()));
        }
        self.meta.push((key.to_owned(), value));
        Ok(())
    }

    pub fn push(&mut self, name: &str, item: Item) -> Result<()> {
        check_token("record name", name)?;
        if self.items.iter().any(|(n, _)| n == name) {
            return Err(Error::InvalidArgument(format!("duplicate record `{name}`")));
        }
        self.items.push((name.to_owned(), item));
        Ok(())
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require_meta(&self, key: &str) -> Result<&str> {
        self.meta(key)
            .ok_or_else(|| Error::InvalidArgument(format!("{} model lacks meta `{key}`", self.role)))
    }

    fn get(&self, name: &str) -> Result<&Item> {
        self.items
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, item)| item)
            .ok_or_else(|| {
                Error::InvalidArgument(format!("{} model lacks record `{name}`", self.role))
            })
    }

    pub fn net(&self, name: &str) -> Result<&Mlp> {
        match self.get(name)? {
            Item::Net(n) => Ok(n),
            _ => Err(Error::InvalidArgument(format!("record `{name}` is not a network"))),
        }
    }

    pub fn matrix(&self, name: &str) -> Result<&Matrix> {
        match self.get(name)? {
            Item::Matrix(m) => Ok(m),
            _ => Err(Error::InvalidArgument(format!("record `{name}` is not a matrix"))),
        }
    }

    pub fn vector(&self, name: &str) -> Result<&[f64]> {
        match self.get(name)? {
            Item::Vector(v) => Ok(v),
            _ => Err(Error::InvalidArgument(format!("record `{name}` is not a vector"))),
        }
    }

    pub fn expect_role(&self, role: Role) -> Result<()> {
        if self.role != role {
            return Err(Error::InvalidArgument(format!(
                "expected a {role} model, found {}",
                self.role
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let line = |out: &mut Vec<u8>, s: String| {
            out.extend_from_slice(s.as_bytes());
            out.push(b'\n');
        };
        line(&mut out, MAGIC.to_owned());
        line(&mut out, format!("role {}", self.role));
        for (k, v) in &self.meta {
            line(&mut out, format!("meta {k} {v}"));
        }
        for (name, item) in &self.items {
            match item {
                Item::Net(net) => {
                    line(&mut out, format!("net {name} {}", net.layers().len()));
                    for l in net.layers() {
                        line(
                            &mut out,
                            format!("layer {} {} {}", l.input_dim(), l.output_dim(), l.activation),
                        );
                        put_f64s(&mut out, l.weight.as_slice());
                        put_f64s(&mut out, &l.bias);
                    }
                }
                Item::Matrix(m) => {
                    line(&mut out, format!("matrix {name} {} {}", m.rows(), m.cols()));
                    put_f64s(&mut out, m.as_slice());
                }
                Item::Vector(v) => {
                    line(&mut out, format!("vector {name} {}", v.len()));
                    put_f64s(&mut out, v);
                }
            }
        }
        line(&mut out, "end".to_owned());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Parser {
            bytes,
            pos: 0,
            line: 0,
            path: PathBuf::from("<memory>"),
        }
        .parse()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Parser {
            bytes: &bytes,
            pos: 0,
            line: 0,
            path: path.to_owned(),
        }
        .parse()
    }
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: usize,
    path: PathBuf,
}

impl Parser<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.clone(),
            line: self.line,
            msg: msg.into(),
        }
    }

    fn text_line(&mut self) -> Result<String> {
        let rest = &self.bytes[self.pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| self.err("unexpected end of file"))?;
        let s = std::str::from_utf8(&rest[..end])
            .map_err(|_| self.err("record header is not UTF-8"))?
            .to_owned();
        self.pos += end + 1;
        self.line += 1;
        Ok(s)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| self.err("record size overflows"))?;
        if self.bytes.len() - self.pos < len {
            return Err(self.err(format!("truncated payload: expected {n} values")));
        }
        let out = self.bytes[self.pos..self.pos + len]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        self.pos += len;
        Ok(out)
    }

    fn usize_field(&self, s: Option<&str>, what: &str) -> Result<usize> {
        s.ok_or_else(|| self.err(format!("missing {what}")))?
            .parse()
            .map_err(|_| self.err(format!("bad {what}")))
    }

    fn parse(mut self) -> Result<ModelFile> {
        if self.text_line()? != MAGIC {
            return Err(self.err(format!("missing `{MAGIC}` header")));
        }
        let role_line = self.text_line()?;
        let role = role_line
            .strip_prefix("role ")
            .ok_or_else(|| self.err("expected `role <tag>`"))?
            .parse::<Role>()
            .map_err(|e| self.err(e.to_string()))?;
        let mut file = ModelFile::new(role);
        loop {
            let header = self.text_line()?;
            let mut parts = header.split(' ');
            match parts.next() {
                Some("end") => break,
                Some("meta") => {
                    let rest = &header["meta ".len().min(header.len())..];
                    let (k, v) = rest
                        .split_once(' ')
                        .ok_or_else(|| self.err("expected `meta <key> <value>`"))?;
                    file.push_meta(k, v).map_err(|e| self.err(e.to_string()))?;
                }
                Some("net") => {
                    let name = parts.next().ok_or_else(|| self.err("missing net name"))?.to_owned();
                    let n = self.usize_field(parts.next(), "layer count")?;
                    let mut layers = Vec::with_capacity(n);
                    for _ in 0..n {
                        let lh = self.text_line()?;
                        let mut lp = lh.split(' ');
                        if lp.next() != Some("layer") {
                            return Err(self.err("expected `layer <in> <out> <activation>`"));
                        }
                        let input = self.usize_field(lp.next(), "layer input dim")?;
                        let output = self.usize_field(lp.next(), "layer output dim")?;
                        let act: Activation = lp
                            .next()
                            .ok_or_else(|| self.err("missing activation"))?
                            .parse()
                            .map_err(|e: Error| self.err(e.to_string()))?;
                        let w = self.f64s(input * output)?;
                        let b = self.f64s(output)?;
                        let weight =
                            Matrix::new(output, input, w).map_err(|e| self.err(e.to_string()))?;
                        layers.push(
                            Dense::new(weight, b, act).map_err(|e| self.err(e.to_string()))?,
                        );
                    }
                    let net = Mlp::new(layers).map_err(|e| self.err(e.to_string()))?;
                    file.push(&name, Item::Net(net))
                        .map_err(|e| self.err(e.to_string()))?;
                }
                Some("matrix") => {
                    let name = parts.next().ok_or_else(|| self.err("missing matrix name"))?.to_owned();
                    let r = self.usize_field(parts.next(), "row count")?;
                    let c = self.usize_field(parts.next(), "column count")?;
                    let data = self.f64s(r * c)?;
                    let m = Matrix::new(r, c, data).map_err(|e| self.err(e.to_string()))?;
                    file.push(&name, Item::Matrix(m))
                        .map_err(|e| self.err(e.to_string()))?;
                }
                Some("vector") => {
                    let name = parts.next().ok_or_else(|| self.err("missing vector name"))?.to_owned();
                    let n = self.usize_field(parts.next(), "vector length")?;
                    let v = self.f64s(n)?;
                    if v.iter().any(|x| !x.is_finite()) {
                        return Err(self.err("non-finite vector entry"));
                    }
                    file.push(&name, Item::Vector(v))
                        .map_err(|e| self.err(e.to_string()))?;
                }
                _ => return Err(self.err(format!("unknown record `{header}`"))),
            }
        }
        if self.pos != self.bytes.len() {
            return Err(self.err("trailing bytes after `end`"));
        }
        Ok(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Rng;
    use proptest::prelude::*;

    fn sample() -> ModelFile {
        let mut rng = Rng::new(4);
        let mut f = ModelFile::new(Role::Adda);
        f.push_meta("speakers", "a b c").unwrap();
        f.push("encoder", Item::Net(Mlp::encoder(3, 5, 4, 3, &mut rng).unwrap()))
            .unwrap();
        f.push("proj", Item::Matrix(Matrix::from_rows(&[[1.0, -2.5]]).unwrap()))
            .unwrap();
        f.push("mean", Item::Vector(vec![0.1, 1e-300])).unwrap();
        f
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let f = sample();
        let bytes = f.to_bytes();
        assert!(bytes.starts_with(b"XADAPT-MODEL v1\nrole adda\n"));
        let back = ModelFile::from_bytes(&bytes).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.meta("speakers"), Some("a b c"));
    }

    #[test]
    fn truncation_is_detected() {
        let bytes = sample().to_bytes();
        for cut in [5, 30, bytes.len() - 10, bytes.len() - 1] {
            assert!(ModelFile::from_bytes(&bytes[..cut]).is_err(), "cut {cut}");
        }
    }

    #[test]
    fn wrong_magic() {
        assert!(ModelFile::from_bytes(b"XADAPT-MODEL v2\nrole lda\nend\n").is_err());
        assert!(ModelFile::from_bytes(b"XADAPT-MODEL v1\nrole foo\nend\n").is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_vectors_roundtrip(v in proptest::collection::vec(-1e300f64..1e300, 0..40)) {
            let mut f = ModelFile::new(Role::Plda);
            f.push("v", Item::Vector(v.clone())).unwrap();
            let bytes = f.to_bytes();
            let back = ModelFile::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.vector("v").unwrap(), v.as_slice());
            prop_assert_eq!(back.to_bytes(), bytes);
        }
    }
}
