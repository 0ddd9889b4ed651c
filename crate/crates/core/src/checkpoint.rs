//! Checkpoint files.
//!
//! A text header of `key=value` lines (starting with `magic=hake1`, ending
//! with a line `end`), followed by the five tables as little-endian f64 in
//! row-major order: `ent_mod`, `ent_phase`, `rel_mod`, `rel_bias`,
//! `rel_phase`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{HakeError, Result};
use crate::model::{ModelParams, Parts, Table, TableId, Variant};

pub const MAGIC: &str = "hake1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub seed: u64,
    pub step: u64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let header = format!(
            "magic={MAGIC}\nentities={}\nrelations={}\nk={}\nvariant={}\nbias={}\n\
             lambda_mod={}\nlambda_phase={}\nseed={}\nstep={}\nend\n",
            p.num_entities(),
            p.num_relations(),
            p.k(),
            p.variant.parts_name(),
            p.variant.bias,
            p.lambda_mod,
            p.lambda_phase,
            self.seed,
            self.step,
        );
        let mut out = header.into_bytes();
        for id in TableId::ALL {
            for v in p.table(id).as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut fields = HashMap::new();
        let mut pos = 0;
        loop {
            let nl = bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or("truncated header")?;
            let line = std::str::from_utf8(&bytes[pos..pos + nl]).map_err(|_| "header is not UTF-8")?;
            pos += nl + 1;
            if line == "end" {
                break;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| format!("bad header line `{line}`"))?;
            fields.insert(k.to_string(), v.to_string());
        }
        let get = |key: &str| fields.get(key).ok_or_else(|| format!("missing header field `{key}`"));
        if get("magic")? != MAGIC {
            return Err(format!("bad magic `{}`", get("magic")?));
        }
        let num = |key: &str| -> std::result::Result<usize, String> {
            get(key)?.parse().map_err(|_| format!("bad value for `{key}`"))
        };
        let float = |key: &str| -> std::result::Result<f64, String> {
            get(key)?.parse().map_err(|_| format!("bad value for `{key}`"))
        };
        let (ne, nr, k) = (num("entities")?, num("relations")?, num("k")?);
        let parts: Parts = get("variant")?.parse().map_err(|e: HakeError| e.to_string())?;
        let bias = match get("bias")?.as_str() {
            "true" => true,
            "false" => false,
            other => return Err(format!("bad value for `bias`: {other}")),
        };
        let seed = get("seed")?.parse().map_err(|_| "bad value for `seed`")?;
        let step = get("step")?.parse().map_err(|_| "bad value for `step`")?;

        let body = &bytes[pos..];
        let expected = 8 * k * (2 * ne + 3 * nr);
        if body.len() != expected {
            return Err(format!(
                "header declares {ne} entities, {nr} relations, k={k} ({expected} bytes) but body has {} bytes",
                body.len()
            ));
        }
        let mut floats = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        let mut take = |rows: usize| {
            let data: Vec<f64> = floats.by_ref().take(rows * k).collect();
            Table::from_vec(rows, k, data).expect("sized above")
        };
        let params = ModelParams {
            ent_mod: take(ne),
            ent_phase: take(ne),
            rel_mod: take(nr),
            rel_bias: take(nr),
            rel_phase: take(nr),
            lambda_mod: float("lambda_mod")?,
            lambda_phase: float("lambda_phase")?,
            variant: Variant { parts, bias },
        };
        params.validate().map_err(|e| e.to_string())?;
        Ok(Self { params, seed, step })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| HakeError::io(dir, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| HakeError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| HakeError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|msg| HakeError::Checkpoint {
            path: path.to_path_buf(),
            msg,
        })
    }

    /// Checks the stored table sizes against a dataset's vocabulary.
    pub fn check_dims(&self, entities: usize, relations: usize) -> Result<()> {
        let p = &self.params;
        if p.num_entities() != entities || p.num_relations() != relations {
            return Err(HakeError::Data(format!(
                "checkpoint has {} entities / {} relations but dataset has {entities} / {relations}",
                p.num_entities(),
                p.num_relations()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, Dims};
    use crate::trainer::TrainConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = TrainConfig { lambda_phase: 0.37, ..TrainConfig::default() };
        let params = init_params(Dims { entities: 5, relations: 2, k: 3 }, &cfg, &mut rng).unwrap();
        Checkpoint { params, seed: 4, step: 12 }
    }

    #[test]
    fn bytes_round_trip() {
        let c = sample();
        let bytes = c.to_bytes();
        assert!(bytes.starts_with(b"magic=hake1\n"));
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), c);
    }

    #[test]
    fn body_is_little_endian_rows() {
        let c = sample();
        let bytes = c.to_bytes();
        let start = bytes.windows(4).position(|w| w == b"end\n").unwrap() + 4;
        let first = f64::from_le_bytes(bytes[start..start + 8].try_into().unwrap());
        assert_eq!(first, c.params.ent_mod.row(0)[0]);
        let last = f64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
        assert_eq!(last, c.params.rel_phase.row(1)[2]);
    }

    #[test]
    fn rejects_mismatched_dims_and_magic() {
        let mut bytes = sample().to_bytes();
        bytes.truncate(bytes.len() - 8);
        assert!(Checkpoint::from_bytes(&bytes).unwrap_err().contains("body has"));
        let text = String::from_utf8_lossy(&sample().to_bytes()).replace("hake1", "hake9");
        assert!(Checkpoint::from_bytes(text.as_bytes()).is_err());
        assert!(sample().check_dims(6, 2).is_err());
        assert!(sample().check_dims(5, 2).is_ok());
    }
}
