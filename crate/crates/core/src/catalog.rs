//! Halo orbit catalog: labeled synodic states sampled uniformly in time
//! along resonant southern L2 halo orbits.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::cr3bp::{jacobi_constant, Cr3bpSystem, SynodicState};
use crate::error::{Error, Result};
use crate::halo::{resonant_family, Resonance};

pub const CATALOG_HEADER: [&str; 7] = ["family", "x_km", "y_km", "z_km", "vx_kmps", "vy_kmps", "vz_kmps"];

/// Allowed spread of the Jacobi constant about its family median.
pub const JACOBI_TOL: f64 = 1e-6;

/// The catalog shipped with the crate (Earth–Moon constants, 1000 states
/// per family).
pub const BUNDLED_CATALOG: &str = include_str!("../data/halo_catalog.csv");

#[derive(Debug, Clone, PartialEq)]
pub struct HaloFamily {
    pub label: String,
    /// Nondimensional states; `t` is zero since the phase is not stored.
    pub states: Vec<SynodicState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HaloCatalog {
    pub families: Vec<HaloFamily>,
}

impl HaloCatalog {
    pub fn len(&self) -> usize {
        self.families.iter().map(|f| f.states.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn family(&self, label: &str) -> Option<&HaloFamily> {
        self.families.iter().find(|f| f.label == label)
    }

    /// State by flat index over all families, in file order.
    pub fn get(&self, mut index: usize) -> Option<(&str, &SynodicState)> {
        for f in &self.families {
            if index < f.states.len() {
                return Some((&f.label, &f.states[index]));
            }
            index -= f.states.len();
        }
        None
    }

    pub fn bundled(sys: &Cr3bpSystem) -> Result<Self> {
        parse_halo_catalog(BUNDLED_CATALOG.as_bytes(), sys)
    }

    pub fn write_csv<W: Write>(&self, w: W, sys: &Cr3bpSystem) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(CATALOG_HEADER)?;
        let vu = sys.vu();
        for f in &self.families {
            for s in &f.states {
                let mut rec = vec![f.label.clone()];
                rec.extend(s.r.iter().map(|x| format!("{:.16e}", x * sys.du)));
                rec.extend(s.v.iter().map(|x| format!("{:.16e}", x * vu)));
                wr.write_record(&rec)?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Reads and validates a catalog file.
pub fn load_halo_catalog(path: impl AsRef<Path>, sys: &Cr3bpSystem) -> Result<HaloCatalog> {
    parse_halo_catalog(std::fs::File::open(path)?, sys)
}

/// Parses catalog CSV. Row numbers in errors count the header as row 1.
pub fn parse_halo_catalog<R: Read>(r: R, sys: &Cr3bpSystem) -> Result<HaloCatalog> {
    let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
    let mut records = rd.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(Error::Catalog { row: 1, msg: "empty file, expected a header".into() }),
    };
    if header.iter().map(str::trim).collect::<Vec<_>>() != CATALOG_HEADER {
        return Err(Error::Catalog {
            row: 1,
            msg: format!("header must be `{}`", CATALOG_HEADER.join(",")),
        });
    }
    let vu = sys.vu();
    let mut families: Vec<HaloFamily> = Vec::new();
    let mut rows: Vec<Vec<usize>> = Vec::new();
    for (i, rec) in records.enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Catalog { row, msg: e.to_string() })?;
        if rec.len() != CATALOG_HEADER.len() {
            return Err(Error::Catalog { row, msg: format!("expected 7 fields, found {}", rec.len()) });
        }
        let label = rec[0].trim();
        if label.is_empty() {
            return Err(Error::Catalog { row, msg: "empty family label".into() });
        }
        let mut x = [0.0; 6];
        for (k, v) in x.iter_mut().enumerate() {
            let field = rec[k + 1].trim();
            *v = field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Catalog { row, msg: format!("{} is not a finite number: `{field}`", CATALOG_HEADER[k + 1]) })?;
        }
        let state = SynodicState::new(
            Vector3::new(x[0], x[1], x[2]) / sys.du,
            Vector3::new(x[3], x[4], x[5]) / vu,
            0.0,
        );
        let idx = match families.iter().position(|f| f.label == label) {
            Some(idx) => idx,
            None => {
                families.push(HaloFamily { label: label.to_string(), states: Vec::new() });
                rows.push(Vec::new());
                families.len() - 1
            }
        };
        families[idx].states.push(state);
        rows[idx].push(row);
    }
    if families.is_empty() {
        return Err(Error::Catalog { row: 2, msg: "catalog has no states".into() });
    }
    for (fam, rows) in families.iter().zip(&rows) {
        let jc: Vec<f64> = fam.states.iter().map(|s| jacobi_constant(s, sys)).collect();
        let med = median(&jc);
        for (c, &row) in jc.iter().zip(rows) {
            if !((c - med).abs() <= JACOBI_TOL) {
                return Err(Error::Catalog {
                    row,
                    msg: format!("Jacobi constant {c} departs from the {} family median {med}", fam.label),
                });
            }
        }
    }
    Ok(HaloCatalog { families })
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Builds the catalog from scratch: one periodic orbit per resonance,
/// sampled at `n_per_family` uniformly spaced phases from apolune.
pub fn generate_halo_catalog(
    sys: &Cr3bpSystem,
    resonances: &[Resonance],
    n_per_family: usize,
    tol: f64,
) -> Result<HaloCatalog> {
    let orbits = resonant_family(sys, resonances, tol)?;
    let families = resonances
        .iter()
        .zip(&orbits)
        .map(|(res, orbit)| {
            let states = orbit
                .sample(n_per_family, sys, tol)?
                .into_iter()
                .map(|s| SynodicState { t: 0.0, ..s })
                .collect();
            Ok(HaloFamily { label: res.label(), states })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HaloCatalog { families })
}
