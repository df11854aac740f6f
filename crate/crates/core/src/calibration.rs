//! Single-hop characterization runs that feed the routing costs.

use std::io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LinkSpec, Path, Topology};
use crate::protocol::{simulate, RunStatus, SimConfig, SimRunError};

pub const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("link {link}: {source}")]
    Sim {
        link: String,
        #[source]
        source: SimRunError,
    },
    #[error("link {link}: seed {seed} ended {status}")]
    Incomplete {
        link: String,
        seed: u64,
        status: RunStatus,
    },
    #[error("link {link}: seed {seed} produced too few deliveries to fit")]
    NoFit { link: String, seed: u64 },
    #[error("no seeds given")]
    NoSeeds,
    #[error("calibration csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Averaged single-hop behavior of one link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub link: String,
    pub loss_db: f64,
    /// Mean pulses per teleported qubit.
    pub pulse_pt: f64,
    /// Mean measurements per teleported qubit.
    pub meas_pt: f64,
    /// Mean fitted throughput, pairs per second.
    pub throughput: f64,
    /// Seconds per delivered pair, `1 / throughput`.
    pub bellgent_s: f64,
    /// Sample standard deviation across seeds; the fit's standard error when
    /// only one seed ran.
    #[serde(default)]
    pub throughput_sd: f64,
}

/// Runs the single-hop workload over `link` once per seed.
pub fn calibrate_link(
    link: &LinkSpec,
    id: &str,
    cfg: &SimConfig,
    seeds: &[u64],
) -> Result<CalibrationEntry, CalibrationError> {
    if seeds.is_empty() {
        return Err(CalibrationError::NoSeeds);
    }
    let path = Path::new(vec![link.clone()]).expect("one link is a path");
    let runs = seeds
        .par_iter()
        .map(|&seed| simulate(&path, cfg, seed).map(|r| (seed, r)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|source| CalibrationError::Sim {
            link: id.to_string(),
            source,
        })?;
    let mut fits = Vec::with_capacity(runs.len());
    for (seed, r) in &runs {
        if r.status != RunStatus::Completed {
            return Err(CalibrationError::Incomplete {
                link: id.to_string(),
                seed: *seed,
                status: r.status,
            });
        }
        fits.push(r.fit.ok_or_else(|| CalibrationError::NoFit {
            link: id.to_string(),
            seed: *seed,
        })?);
    }
    let n = runs.len() as f64;
    let teleports = cfg.teleports as f64;
    let pulses = runs.iter().map(|(_, r)| r.pulses as f64).sum::<f64>() / n;
    let meas = runs.iter().map(|(_, r)| r.measurements as f64).sum::<f64>() / n;
    let tps: Vec<f64> = fits.iter().map(|f| f.throughput).collect();
    let throughput = mean(&tps);
    let throughput_sd = if tps.len() > 1 {
        sample_sd(&tps)
    } else {
        fits[0].stddev
    };
    Ok(CalibrationEntry {
        link: id.to_string(),
        loss_db: link.loss_db,
        pulse_pt: pulses / teleports,
        meas_pt: meas / teleports,
        throughput,
        bellgent_s: 1.0 / throughput,
        throughput_sd,
    })
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub(crate) fn sample_sd(x: &[f64]) -> f64 {
    let m = mean(x);
    let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (x.len() as f64 - 1.0)).sqrt()
}

/// Calibration results, looked up by link key (`a-b`) or, failing that, by a
/// link with the same loss.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CalibrationTable {
    pub entries: Vec<CalibrationEntry>,
}

impl CalibrationTable {
    pub fn new(entries: Vec<CalibrationEntry>) -> Self {
        Self { entries }
    }

    pub fn by_id(&self, id: &str) -> Option<&CalibrationEntry> {
        self.entries.iter().find(|e| e.link == id)
    }

    pub fn get(&self, link: &LinkSpec) -> Option<&CalibrationEntry> {
        self.by_id(&link.key())
            .or_else(|| self.entries.iter().find(|e| (e.loss_db - link.loss_db).abs() < 1e-9))
    }

    /// `entry`'s BellGenT relative to `reference`'s.
    pub fn normalized_bellgent(&self, id: &str, reference: &str) -> Option<f64> {
        Some(self.by_id(id)?.bellgent_s / self.by_id(reference)?.bellgent_s)
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<(), CalibrationError> {
        let mut wr = csv::Writer::from_writer(w);
        for e in &self.entries {
            wr.serialize(e)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read_csv<R: io::Read>(r: R) -> Result<Self, CalibrationError> {
        let mut rd = csv::Reader::from_reader(r);
        let entries = rd.deserialize().collect::<Result<Vec<CalibrationEntry>, _>>()?;
        Ok(Self { entries })
    }
}

/// Calibrates every usable link of a topology. Links whose fidelity cannot
/// be purified are skipped and returned by key.
pub fn calibrate_topology(
    t: &Topology,
    cfg: &SimConfig,
    seeds: &[u64],
) -> Result<(CalibrationTable, Vec<String>), CalibrationError> {
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for l in &t.links {
        if !cfg.link.is_usable(l) {
            skipped.push(l.key());
            continue;
        }
        entries.push(calibrate_link(l, &l.key(), cfg, seeds)?);
    }
    Ok((CalibrationTable::new(entries), skipped))
}
