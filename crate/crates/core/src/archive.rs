//! JSON persistence for scenarios, channels and beamformers.
//!
//! A matrix is stored as `{"rows": r, "cols": c, "data": [[re, im], ...]}`
//! with `data` in column-major order. Floats are written in shortest
//! round-trip form, so reading an archive back reproduces every entry exactly.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::numerics::CMat;
use crate::physics::BeamformerSet;
use crate::scenario::{ChannelSet, Scenario};

pub const SCENARIO_SCHEMA: &str = "cranbf.scenario/1";
pub const BEAMFORMER_SCHEMA: &str = "cranbf.beamformers/1";

#[derive(Serialize, Deserialize)]
struct MatRepr {
    rows: usize,
    cols: usize,
    data: Vec<[f64; 2]>,
}

impl From<&CMat> for MatRepr {
    fn from(m: &CMat) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.iter().map(|z| [z.re, z.im]).collect(),
        }
    }
}

impl MatRepr {
    fn into_mat<E: serde::de::Error>(self) -> std::result::Result<CMat, E> {
        if self.data.len() != self.rows * self.cols {
            return Err(E::custom(format!(
                "matrix declares {}x{} but holds {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(CMat::from_iterator(
            self.rows,
            self.cols,
            self.data.into_iter().map(|[re, im]| Complex64::new(re, im)),
        ))
    }
}

/// Serde adapter for a single matrix.
pub mod mat {
    use super::*;

    pub fn serialize<S: Serializer>(m: &CMat, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatRepr::from(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<CMat, D::Error> {
        MatRepr::deserialize(d)?.into_mat()
    }
}

/// Serde adapter for a list of matrices.
pub mod mat_list {
    use super::*;

    pub fn serialize<S: Serializer>(ms: &[CMat], s: S) -> std::result::Result<S::Ok, S::Error> {
        let reprs: Vec<MatRepr> = ms.iter().map(MatRepr::from).collect();
        reprs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Vec<CMat>, D::Error> {
        Vec::<MatRepr>::deserialize(d)?
            .into_iter()
            .map(MatRepr::into_mat)
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct ChannelRepr {
    #[serde(with = "mat_list")]
    h: Vec<CMat>,
    #[serde(with = "mat_list")]
    f: Vec<CMat>,
    #[serde(with = "mat_list")]
    g: Vec<CMat>,
}

#[derive(Serialize, Deserialize)]
struct ScenarioArchive {
    schema: String,
    storage_order: String,
    scenario: Scenario,
    channels: ChannelRepr,
}

#[derive(Serialize, Deserialize)]
struct BeamformerArchive {
    schema: String,
    storage_order: String,
    beamformers: BeamformerSet,
}

pub fn scenario_to_json(sc: &Scenario, ch: &ChannelSet) -> String {
    let a = ScenarioArchive {
        schema: SCENARIO_SCHEMA.into(),
        storage_order: "column-major".into(),
        scenario: sc.clone(),
        channels: ChannelRepr {
            h: ch.h.clone(),
            f: ch.f.clone(),
            g: ch.g.clone(),
        },
    };
    serde_json::to_string_pretty(&a).expect("archive serializes")
}

pub fn scenario_from_json(text: &str) -> std::result::Result<(Scenario, ChannelSet), String> {
    let a: ScenarioArchive = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if a.schema != SCENARIO_SCHEMA {
        return Err(format!(
            "unsupported schema {:?}, expected {SCENARIO_SCHEMA:?}",
            a.schema
        ));
    }
    if a.storage_order != "column-major" {
        return Err(format!("unsupported storage order {:?}", a.storage_order));
    }
    let ch = ChannelSet {
        h: a.channels.h,
        f: a.channels.f,
        g: a.channels.g,
    };
    a.scenario.validate().map_err(|e| e.to_string())?;
    ch.validate(&a.scenario).map_err(|e| e.to_string())?;
    Ok((a.scenario, ch))
}

pub fn beamformers_to_json(bf: &BeamformerSet) -> String {
    let a = BeamformerArchive {
        schema: BEAMFORMER_SCHEMA.into(),
        storage_order: "column-major".into(),
        beamformers: bf.clone(),
    };
    serde_json::to_string_pretty(&a).expect("beamformers serialize")
}

pub fn beamformers_from_json(text: &str) -> std::result::Result<BeamformerSet, String> {
    let a: BeamformerArchive = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if a.schema != BEAMFORMER_SCHEMA {
        return Err(format!(
            "unsupported schema {:?}, expected {BEAMFORMER_SCHEMA:?}",
            a.schema
        ));
    }
    Ok(a.beamformers)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_scenario(path: &Path, sc: &Scenario, ch: &ChannelSet) -> Result<()> {
    write_text(path, &scenario_to_json(sc, ch))
}

pub fn load_scenario(path: &Path) -> Result<(Scenario, ChannelSet)> {
    scenario_from_json(&read(path)?).map_err(|message| Error::Parse {
        path: path.to_path_buf(),
        message,
    })
}

pub fn save_beamformers(path: &Path, bf: &BeamformerSet) -> Result<()> {
    write_text(path, &beamformers_to_json(bf))
}

pub fn load_beamformers(path: &Path) -> Result<BeamformerSet> {
    beamformers_from_json(&read(path)?).map_err(|message| Error::Parse {
        path: path.to_path_buf(),
        message,
    })
}
