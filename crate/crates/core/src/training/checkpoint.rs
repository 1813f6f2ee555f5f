use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::config::TrainConfig;
use crate::engine::{read_checkpoint, write_checkpoint, Real};
use crate::error::{Error, Result};
use crate::kv;
use crate::models::{Model, ModelSpec};

const CONFIG_PREFIX: &str = "train.";

/// A trained model with the configuration and method label that produced it.
#[derive(Debug, Clone)]
pub struct Checkpoint<T: Real> {
    pub model: Model<T>,
    pub config: TrainConfig,
    pub method: String,
}

impl<T: Real> Checkpoint<T> {
    pub fn header(&self) -> String {
        let mut h = self.model.spec().to_header();
        h.push_str(&format!("method = {}\n", self.method));
        for line in self.config.to_text().lines() {
            h.push_str(CONFIG_PREFIX);
            h.push_str(line);
            h.push('\n');
        }
        h
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        write_checkpoint(w, &self.header(), self.model.params())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let (header, params) = read_checkpoint::<R, T>(r)?;
        let map = kv::parse(&header)?;
        let spec = ModelSpec::from_map(&map)?;
        let config = TrainConfig::from_map(&map, CONFIG_PREFIX)?;
        let method = kv::require::<String>(&map, "method")?;
        Ok(Self {
            model: Model::from_params(spec, params)?,
            config,
            method,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            ))
        })?;
        Self::read_from(BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{AdaptorKind, EncoderSpec};

    #[test]
    fn round_trip_keeps_spec_config_and_values() {
        let spec = ModelSpec::new(
            EncoderSpec::for_ratio(4, 2, 2, vec![8]).unwrap(),
            AdaptorKind::BottleFc,
        )
        .unwrap();
        let ckpt = Checkpoint {
            model: Model::<f32>::init(spec, 3).unwrap(),
            config: TrainConfig {
                cr: 2,
                hidden: vec![8],
                adaptor: AdaptorKind::BottleFc,
                ..TrainConfig::default()
            },
            method: "BottleFC".into(),
        };
        let mut buf = Vec::new();
        ckpt.write_to(&mut buf).unwrap();
        let back = Checkpoint::<f32>::read_from(buf.as_slice()).unwrap();
        assert_eq!(back.config, ckpt.config);
        assert_eq!(back.method, "BottleFC");
        assert_eq!(back.model.spec(), ckpt.model.spec());
        for group in ["encoder", "adaptor", "decoder"] {
            assert_eq!(
                back.model.params().group_bytes(group),
                ckpt.model.params().group_bytes(group)
            );
        }
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = Checkpoint::<f32>::load("/nonexistent/model.ckpt").unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }
}
