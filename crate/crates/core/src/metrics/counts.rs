use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{Parameterization, PnKind};
use crate::models::{build_model, DccnnConfig, ModelKind, ModelSpec, UnetConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Paper,
    Desk,
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Paper => "paper",
            Scale::Desk => "desk",
        })
    }
}

impl FromStr for Scale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Scale::Paper),
            "desk" => Ok(Scale::Desk),
            _ => Err(Error::Config(format!("unknown scale {s:?} (paper|desk)"))),
        }
    }
}

/// One row of the parameter table. `shared` and `specific` are per network;
/// `sum` covers all anatomies (and all networks for OAON).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRow {
    pub regime: String,
    pub model: ModelKind,
    pub pn: PnKind,
    pub networks: usize,
    pub shared: usize,
    pub specific: usize,
    pub sum: usize,
}

/// Counts for every regime / PN combination of both networks over
/// `anatomies`, measured on built models.
pub fn count_report(scale: Scale, anatomies: &[String]) -> Result<Vec<CountRow>> {
    let n = anatomies.len();
    let (dccnn, unet) = match scale {
        Scale::Paper => (DccnnConfig::paper(), UnetConfig::paper()),
        Scale::Desk => (DccnnConfig::desk(), UnetConfig::desk()),
    };
    let mut rows = Vec::new();
    for model in [ModelKind::Dccnn, ModelKind::Unet] {
        let measure = |pn: PnKind, parameterization: Parameterization, labels: Vec<String>| -> Result<(usize, usize)> {
            let spec = ModelSpec {
                kind: model,
                pn,
                parameterization,
                anatomies: labels,
                dccnn: dccnn.clone(),
                unet: unet.clone(),
            };
            let c = build_model(&spec, 0)?.registry.counts();
            Ok((c.shared, c.specific_per_anatomy))
        };
        let (single, _) = measure(PnKind::Pn0, Parameterization::Shared, anatomies[..1].to_vec())?;
        rows.push(CountRow {
            regime: "OAON".into(),
            model,
            pn: PnKind::Pn0,
            networks: n,
            shared: single,
            specific: 0,
            sum: n * single,
        });
        for pn in [PnKind::Pn0, PnKind::Pn4] {
            let (shared, _) = measure(pn, Parameterization::Shared, anatomies.to_vec())?;
            rows.push(CountRow {
                regime: "MAON".into(),
                model,
                pn,
                networks: 1,
                shared,
                specific: 0,
                sum: shared,
            });
        }
        for pn in [PnKind::Pn1, PnKind::Pn2, PnKind::Pn3, PnKind::Pn4] {
            let (shared, specific) = measure(pn, Parameterization::PerAnatomy, anatomies.to_vec())?;
            rows.push(CountRow {
                regime: "MAPN".into(),
                model,
                pn,
                networks: 1,
                shared,
                specific,
                sum: shared + n * specific,
            });
        }
    }
    Ok(rows)
}

pub fn write_count_csv(rows: &[CountRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["regime", "model", "pn", "networks", "shared", "specific_per_anatomy", "sum", "sum_k"])
        .map_err(|e| Error::Data(e.to_string()))?;
    for r in rows {
        w.write_record([
            r.regime.clone(),
            r.model.to_string(),
            r.pn.to_string(),
            r.networks.to_string(),
            r.shared.to_string(),
            r.specific.to_string(),
            r.sum.to_string(),
            format!("{:.2}", r.sum as f64 / 1000.0),
        ])
        .map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))
}
