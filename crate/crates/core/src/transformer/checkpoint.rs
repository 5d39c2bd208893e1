//! Self-describing checkpoint container.
//!
//! ```text
//! ecctlin-v1
//! meta <count>
//! <key>=<value>            (count lines)
//! text <name> <bytes>
//! <raw utf-8 bytes>\n
//! tensor <name> <d0>x<d1>...
//! <f32 little-endian values>\n
//! end
//! ```

use std::path::Path;

use autodiff::Tensor;

use crate::codes::{load_alist, save_alist};

use super::model::{Model, ModelConfig, ModelParams};
use super::TransformerError;

pub const FORMAT_VERSION: &str = "ecctlin-v1";
const CODE_TEXT: &str = "code.alist";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    pub meta: Vec<(String, String)>,
    pub texts: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Container {
    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn text(&self, name: &str) -> Option<&str> {
        self.texts.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(k, _)| k == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(format!("{FORMAT_VERSION}\nmeta {}\n", self.meta.len()).as_bytes());
        for (k, v) in &self.meta {
            out.extend_from_slice(format!("{k}={v}\n").as_bytes());
        }
        for (name, text) in &self.texts {
            out.extend_from_slice(format!("text {name} {}\n", text.len()).as_bytes());
            out.extend_from_slice(text.as_bytes());
            out.push(b'\n');
        }
        for (name, t) in &self.tensors {
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            out.extend_from_slice(format!("tensor {name} {}\n", dims.join("x")).as_bytes());
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.push(b'\n');
        }
        out.extend_from_slice(b"end\n");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TransformerError> {
        let mut r = Reader { bytes, pos: 0 };
        let version = r.line()?;
        if version != FORMAT_VERSION {
            return Err(TransformerError::Version(version.to_string()));
        }
        let mut c = Container::default();
        let count = match r.line()?.split_once(' ') {
            Some(("meta", n)) => n.parse::<usize>().map_err(|_| format_err("bad meta count"))?,
            _ => return Err(format_err("expected meta section")),
        };
        for _ in 0..count {
            let line = r.line()?;
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format_err(&format!("bad meta line `{line}`")))?;
            c.meta.push((k.to_string(), v.to_string()));
        }
        loop {
            let line = r.line()?.to_string();
            let parts: Vec<&str> = line.split(' ').collect();
            match parts.as_slice() {
                ["end"] => break,
                ["text", name, len] => {
                    let len = len.parse::<usize>().map_err(|_| format_err("bad text length"))?;
                    let raw = r.take(len)?;
                    let text = String::from_utf8(raw.to_vec()).map_err(|_| format_err("text is not utf-8"))?;
                    r.newline()?;
                    c.texts.push((name.to_string(), text));
                }
                ["tensor", name, dims] => {
                    let shape = dims
                        .split('x')
                        .map(|d| d.parse::<usize>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|_| format_err(&format!("bad shape `{dims}`")))?;
                    let count: usize = shape.iter().product();
                    let raw = r.take(4 * count)?;
                    let data = raw
                        .chunks_exact(4)
                        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                        .collect();
                    r.newline()?;
                    c.tensors.push((name.to_string(), Tensor::new(&shape, data)?));
                }
                _ => return Err(format_err(&format!("unexpected section `{line}`"))),
            }
        }
        Ok(c)
    }

    pub fn write(&self, path: &Path) -> Result<(), TransformerError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| TransformerError::Io(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self, TransformerError> {
        let bytes = std::fs::read(path).map_err(|e| TransformerError::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

fn format_err(msg: &str) -> TransformerError {
    TransformerError::Format(msg.to_string())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn line(&mut self) -> Result<&'a str, TransformerError> {
        let rest = &self.bytes[self.pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or(TransformerError::Truncated)?;
        self.pos += end + 1;
        std::str::from_utf8(&rest[..end]).map_err(|_| format_err("header line is not utf-8"))
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8], TransformerError> {
        if self.bytes.len() - self.pos < len {
            return Err(TransformerError::Truncated);
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn newline(&mut self) -> Result<(), TransformerError> {
        match self.take(1)? {
            b"\n" => Ok(()),
            _ => Err(format_err("missing block terminator")),
        }
    }
}

/// Config, code and parameters of `model` as a container.
pub fn model_container(model: &Model<f32>) -> Container {
    let params = model.params();
    Container {
        meta: model.config().to_pairs(),
        texts: vec![(CODE_TEXT.to_string(), save_alist(model.code()))],
        tensors: params
            .names()
            .iter()
            .cloned()
            .zip(params.tensors().iter().cloned())
            .collect(),
    }
}

/// Rebuilds a model; tensors not in the parameter layout are ignored.
pub fn model_from_container(c: &Container) -> Result<Model<f32>, TransformerError> {
    let config = ModelConfig::from_pairs(&c.meta)?;
    let code = load_alist(c.text(CODE_TEXT).ok_or_else(|| format_err("missing code section"))?)
        .map_err(|e| TransformerError::Format(format!("embedded code: {e}")))?;
    let template = ModelParams::<f32>::init(&config);
    let named = template
        .names()
        .iter()
        .map(|name| {
            c.tensor(name)
                .map(|t| (name.clone(), t.clone()))
                .ok_or_else(|| format_err(&format!("missing parameter `{name}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let params = ModelParams::from_named(&config, named)?;
    Model::with_params(config, &code, params)
}

pub fn save_model(model: &Model<f32>, path: &Path) -> Result<(), TransformerError> {
    model_container(model).write(path)
}

pub fn load_model(path: &Path) -> Result<Model<f32>, TransformerError> {
    model_from_container(&Container::read(path)?)
}
