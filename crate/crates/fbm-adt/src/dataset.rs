//! ADT datasets: degradation measurements grouped by stress level and unit,
//! with CSV ingest and export.
//!
//! The on-disk format is a flat CSV with header `stress,unit,time,value` and
//! one row per measurement. Rows belonging to one unit must appear in
//! strictly increasing time order (duplicate times are rejected). Lines
//! starting with `#` are treated as comments, so emitted artifacts can embed
//! provenance without breaking round-trips. Levels are ordered by ascending
//! stress; units keep their order of first appearance.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use nalgebra::DVector;

use crate::error::{AdtError, Result};
use crate::fbm::TimeGrid;
use crate::model::StressSpec;

/// One test unit's degradation series on its observation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitObservations {
    unit_id: String,
    grid: TimeGrid,
    values: Vec<f64>,
}

impl UnitObservations {
    pub fn new(unit_id: impl Into<String>, grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        let unit_id = unit_id.into();
        if unit_id.is_empty() {
            return Err(AdtError::Dataset("unit id must be non-empty".into()));
        }
        if grid.first() <= 0.0 {
            return Err(AdtError::Dataset(format!(
                "unit {unit_id}: observation times must be strictly positive"
            )));
        }
        if values.len() != grid.len() {
            return Err(AdtError::Dataset(format!(
                "unit {unit_id}: {} values for {} times",
                values.len(),
                grid.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(AdtError::Dataset(format!(
                "unit {unit_id}: non-finite value {bad}"
            )));
        }
        Ok(Self {
            unit_id,
            grid,
            values,
        })
    }

    pub fn unit_id(&self) -> &str {
        &self.unit_id
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction guarantees at least one observation
    }
}

/// All units tested at one stress level.
#[derive(Debug, Clone, PartialEq)]
pub struct StressLevel {
    stress: f64,
    units: Vec<UnitObservations>,
}

impl StressLevel {
    pub fn new(stress: f64, units: Vec<UnitObservations>) -> Result<Self> {
        if !stress.is_finite() {
            return Err(AdtError::Dataset(format!(
                "stress must be finite, got {stress}"
            )));
        }
        if units.is_empty() {
            return Err(AdtError::Dataset(format!(
                "stress level {stress} has no units"
            )));
        }
        for (i, a) in units.iter().enumerate() {
            for b in units.iter().skip(i + 1) {
                if a.unit_id == b.unit_id {
                    return Err(AdtError::Dataset(format!(
                        "stress level {stress}: duplicate unit id {:?}",
                        a.unit_id
                    )));
                }
            }
        }
        Ok(Self { stress, units })
    }

    pub fn stress(&self) -> f64 {
        self.stress
    }

    pub fn units(&self) -> &[UnitObservations] {
        &self.units
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    /// The level's shared observation grid, if all units are aligned on one.
    pub fn common_grid(&self) -> Result<&TimeGrid> {
        let grid = self.units[0].grid();
        for unit in &self.units[1..] {
            if unit.grid() != grid {
                return Err(AdtError::GridAlignment(format!(
                    "stress level {}: unit {:?} is not on the level's common grid",
                    self.stress,
                    unit.unit_id()
                )));
            }
        }
        Ok(grid)
    }
}

/// A full accelerated degradation test: stress levels (ascending) plus the
/// stress normalization anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdtDataset {
    levels: Vec<StressLevel>,
    stress_spec: StressSpec,
}

impl AdtDataset {
    pub fn new(levels: Vec<StressLevel>, stress_spec: StressSpec) -> Result<Self> {
        if levels.is_empty() {
            return Err(AdtError::Dataset("dataset has no stress levels".into()));
        }
        for w in levels.windows(2) {
            if w[1].stress <= w[0].stress {
                return Err(AdtError::Dataset(format!(
                    "stress levels must be strictly increasing, got {} after {}",
                    w[1].stress, w[0].stress
                )));
            }
        }
        for level in &levels {
            stress_spec.normalize(level.stress)?;
        }
        Ok(Self {
            levels,
            stress_spec,
        })
    }

    pub fn levels(&self) -> &[StressLevel] {
        &self.levels
    }

    pub fn stress_spec(&self) -> &StressSpec {
        &self.stress_spec
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn total_units(&self) -> usize {
        self.levels.iter().map(StressLevel::n_units).sum()
    }

    pub fn total_observations(&self) -> usize {
        self.levels
            .iter()
            .flat_map(|l| l.units.iter())
            .map(UnitObservations::len)
            .sum()
    }

    /// Normalized stress per level, in level order.
    pub fn normalized_stresses(&self) -> Vec<f64> {
        // Validated at construction, so normalize cannot fail here.
        self.levels
            .iter()
            .map(|l| self.stress_spec.normalize(l.stress).unwrap())
            .collect()
    }

    /// Flattened `(level_index, unit)` iteration in the canonical order
    /// (levels ascending, units by first appearance).
    pub fn units(&self) -> impl Iterator<Item = (usize, &UnitObservations)> {
        self.levels
            .iter()
            .enumerate()
            .flat_map(|(l, level)| level.units.iter().map(move |u| (l, u)))
    }

    /// A copy with one level removed, keeping the same stress anchors (so
    /// normalized stresses of the remaining levels are unchanged).
    pub fn without_level(&self, index: usize) -> Result<Self> {
        if index >= self.levels.len() {
            return Err(AdtError::Dataset(format!(
                "no stress level at index {index}"
            )));
        }
        if self.levels.len() < 2 {
            return Err(AdtError::Dataset(
                "cannot remove the only stress level".into(),
            ));
        }
        let mut levels = self.levels.clone();
        levels.remove(index);
        Self::new(levels, self.stress_spec)
    }

    /// A single-level view (used to score held-out levels), again keeping
    /// the original stress anchors.
    pub fn only_level(&self, index: usize) -> Result<Self> {
        let level = self
            .levels
            .get(index)
            .ok_or_else(|| AdtError::Dataset(format!("no stress level at index {index}")))?;
        Self::new(vec![level.clone()], self.stress_spec)
    }

    /// Parse the CSV schema `stress,unit,time,value` from a reader.
    pub fn from_csv_reader<R: Read>(reader: R, stress_spec: StressSpec) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);

        {
            let headers = csv.headers().map_err(csv_error)?;
            let expected = ["stress", "unit", "time", "value"];
            let got: Vec<&str> = headers.iter().collect();
            if got != expected {
                return Err(AdtError::Parse {
                    line: 1,
                    message: format!(
                        "expected header stress,unit,time,value, got {}",
                        got.join(",")
                    ),
                });
            }
        }

        // Group rows by (stress-bits, unit id), preserving first-appearance
        // order of units and enforcing time order as rows arrive.
        type RawUnit = (String, Vec<f64>, Vec<f64>);
        let mut level_order: Vec<f64> = Vec::new();
        let mut units_by_level: Vec<Vec<RawUnit>> = Vec::new();
        let mut level_index: HashMap<u64, usize> = HashMap::new();

        for record in csv.records() {
            let record = record.map_err(csv_error)?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() != 4 {
                return Err(AdtError::Parse {
                    line,
                    message: format!("expected 4 fields, got {}", record.len()),
                });
            }
            let stress = parse_f64(&record[0], "stress", line)?;
            let unit = record[1].to_string();
            if unit.is_empty() {
                return Err(AdtError::Parse {
                    line,
                    message: "empty unit id".into(),
                });
            }
            let time = parse_f64(&record[2], "time", line)?;
            let value = parse_f64(&record[3], "value", line)?;
            if time <= 0.0 {
                return Err(AdtError::Parse {
                    line,
                    message: format!("observation time must be positive, got {time}"),
                });
            }

            let li = *level_index.entry(stress.to_bits()).or_insert_with(|| {
                level_order.push(stress);
                units_by_level.push(Vec::new());
                level_order.len() - 1
            });
            let units = &mut units_by_level[li];
            let slot = match units.iter_mut().find(|(id, _, _)| *id == unit) {
                Some(slot) => slot,
                None => {
                    units.push((unit.clone(), Vec::new(), Vec::new()));
                    units.last_mut().unwrap()
                }
            };
            if let Some(&prev) = slot.1.last() {
                if time <= prev {
                    return Err(AdtError::Parse {
                        line,
                        message: format!(
                            "unit {unit:?} at stress {stress}: time {time} does not increase past {prev}"
                        ),
                    });
                }
            }
            slot.1.push(time);
            slot.2.push(value);
        }

        if level_order.is_empty() {
            return Err(AdtError::Dataset("CSV contains no measurements".into()));
        }

        let mut order: Vec<usize> = (0..level_order.len()).collect();
        order.sort_by(|&a, &b| level_order[a].total_cmp(&level_order[b]));
        let mut levels = Vec::with_capacity(order.len());
        for li in order {
            let stress = level_order[li];
            let mut units = Vec::new();
            for (id, times, values) in units_by_level[li].drain(..) {
                units.push(UnitObservations::new(id, TimeGrid::new(times)?, values)?);
            }
            levels.push(StressLevel::new(stress, units)?);
        }
        Self::new(levels, stress_spec)
    }

    /// Read a CSV file; `stress_spec` supplies the normalization anchors,
    /// which are not part of the file format.
    pub fn read_csv(path: impl AsRef<Path>, stress_spec: StressSpec) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::from_csv_reader(file, stress_spec)
    }

    /// Serialize to the CSV schema (no comment lines; callers may prepend
    /// `#`-prefixed provenance).
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("stress,unit,time,value\n");
        for level in &self.levels {
            for unit in &level.units {
                for (t, v) in unit.grid().times().iter().zip(unit.values()) {
                    out.push_str(&format!(
                        "{},{},{},{}\n",
                        level.stress,
                        unit.unit_id(),
                        t,
                        v
                    ));
                }
            }
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_csv_string())?;
        Ok(())
    }
}

fn parse_f64(field: &str, name: &str, line: u64) -> Result<f64> {
    let value: f64 = field.parse().map_err(|_| AdtError::Parse {
        line,
        message: format!("{name} field {field:?} is not a number"),
    })?;
    if !value.is_finite() {
        return Err(AdtError::Parse {
            line,
            message: format!("{name} field {field:?} is not finite"),
        });
    }
    Ok(value)
}

fn csv_error(e: csv::Error) -> AdtError {
    let line = match e.position() {
        Some(pos) => pos.line(),
        None => 0,
    };
    AdtError::Parse {
        line,
        message: e.to_string(),
    }
}
