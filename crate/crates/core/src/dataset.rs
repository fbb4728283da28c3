//! Nominal datasets: loading, encoding, subsampling, splitting, and orderings.
//!
//! A dataset is a rectangular table of nominal symbols. Each column becomes a
//! variable whose distinct symbols are mapped to dense ordinals in first-seen
//! order; each row becomes an [`Observation`] holding one value ordinal per
//! variable. The literal symbol `?` is an ordinary value, not a missing-data
//! marker.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// One nominal variable: its column index, name, and value symbols.
///
/// Value ordinals are `0..arity` in first-seen order.
#[derive(Debug, Clone, Serialize)]
pub struct VariableSchema {
    pub index: usize,
    pub name: String,
    pub values: Vec<String>,
}

impl VariableSchema {
    pub fn arity(&self) -> usize {
        self.values.len()
    }
}

/// The full variable schema of a dataset.
#[derive(Debug, Clone, Serialize)]
pub struct Schema {
    vars: Vec<VariableSchema>,
}

impl Schema {
    pub fn new(vars: Vec<VariableSchema>) -> Self {
        Schema { vars }
    }

    /// Number of variables.
    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn arity(&self, var: usize) -> usize {
        self.vars[var].arity()
    }

    pub fn var(&self, var: usize) -> &VariableSchema {
        &self.vars[var]
    }

    pub fn vars(&self) -> &[VariableSchema] {
        &self.vars
    }

    pub fn symbol(&self, var: usize, val: u32) -> &str {
        &self.vars[var].values[val as usize]
    }
}

/// A single encoded observation: one value ordinal per variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    /// Position of the observation in its dataset.
    pub id: u32,
    pub values: Vec<u32>,
}

/// An encoded nominal dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub schema: Arc<Schema>,
    pub observations: Vec<Observation>,
    pub name: String,
}

impl Dataset {
    /// Build a dataset from raw string rows, encoding symbols to ordinals in
    /// first-seen order.
    pub fn from_rows<S: AsRef<str>>(
        name: &str,
        header: Option<Vec<String>>,
        rows: &[Vec<S>],
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput(format!("dataset {name} has no rows")));
        }
        let width = rows[0].len();
        if width == 0 {
            return Err(Error::Format(format!("dataset {name} has zero columns")));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::Format(format!(
                    "row {i} has {} columns, expected {width}",
                    row.len()
                )));
            }
        }
        let names: Vec<String> = match header {
            Some(h) => {
                if h.len() != width {
                    return Err(Error::Format(format!(
                        "header has {} columns, expected {width}",
                        h.len()
                    )));
                }
                h
            }
            None => (0..width).map(|i| format!("v{i}")).collect(),
        };

        let mut vars: Vec<VariableSchema> = names
            .into_iter()
            .enumerate()
            .map(|(index, name)| VariableSchema {
                index,
                name,
                values: Vec::new(),
            })
            .collect();
        let mut observations = Vec::with_capacity(rows.len());
        for (id, row) in rows.iter().enumerate() {
            let mut values = Vec::with_capacity(width);
            for (col, cell) in row.iter().enumerate() {
                let cell = cell.as_ref();
                let var = &mut vars[col];
                let ord = match var.values.iter().position(|v| v == cell) {
                    Some(p) => p as u32,
                    None => {
                        var.values.push(cell.to_string());
                        (var.values.len() - 1) as u32
                    }
                };
                values.push(ord);
            }
            observations.push(Observation {
                id: id as u32,
                values,
            });
        }
        Ok(Dataset {
            schema: Arc::new(Schema::new(vars)),
            observations,
            name: name.to_string(),
        })
    }

    /// Load a comma-separated file. Cells are arbitrary non-comma strings;
    /// no quoting is interpreted.
    pub fn load_csv<P: AsRef<Path>>(path: P, has_header: bool) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".to_string());
        let mut lines = text
            .lines()
            .map(|l| l.trim_end_matches('\r'))
            .filter(|l| !l.is_empty());
        let header = if has_header {
            match lines.next() {
                Some(l) => Some(l.split(',').map(|s| s.to_string()).collect()),
                None => return Err(Error::EmptyInput(format!("{} is empty", path.display()))),
            }
        } else {
            None
        };
        let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
        if rows.is_empty() {
            return Err(Error::EmptyInput(format!(
                "{} has no data rows",
                path.display()
            )));
        }
        Self::from_rows(&name, header, &rows)
    }

    pub fn n_observations(&self) -> usize {
        self.observations.len()
    }

    pub fn n_variables(&self) -> usize {
        self.schema.len()
    }

    /// Decode one observation back to its original symbols.
    pub fn decode(&self, obs: &Observation) -> Vec<&str> {
        obs.values
            .iter()
            .enumerate()
            .map(|(i, &v)| self.schema.symbol(i, v))
            .collect()
    }

    /// Draw `n` observations uniformly without replacement. The schema is
    /// shared with the source; observations are re-numbered `0..n`.
    pub fn subsample(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 || n > self.observations.len() {
            return Err(Error::Argument(format!(
                "subsample size {n} out of range 1..={}",
                self.observations.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let picked = rand::seq::index::sample(&mut rng, self.observations.len(), n);
        let observations = picked
            .iter()
            .enumerate()
            .map(|(new_id, old)| Observation {
                id: new_id as u32,
                values: self.observations[old].values.clone(),
            })
            .collect();
        Ok(Dataset {
            schema: Arc::clone(&self.schema),
            observations,
            name: self.name.clone(),
        })
    }
}

/// Disjoint train/validation/test blocks of observation ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitResult {
    pub train: Vec<u32>,
    pub validation: Vec<u32>,
    pub test: Vec<u32>,
}

/// Split a dataset's ids into train/validation/test blocks.
///
/// Block sizes are `floor(f * n)` with the remainder distributed to train,
/// then validation, then test. Deterministic under `seed`.
pub fn split(d: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<SplitResult> {
    let (ft, fv, fs) = fractions;
    if ft <= 0.0 || fv <= 0.0 || fs <= 0.0 {
        return Err(Error::Argument("split fractions must be positive".into()));
    }
    if (ft + fv + fs - 1.0).abs() > 1e-9 {
        return Err(Error::Argument(format!(
            "split fractions sum to {}, expected 1",
            ft + fv + fs
        )));
    }
    let n = d.observations.len();
    let mut sizes = [
        (ft * n as f64).floor() as usize,
        (fv * n as f64).floor() as usize,
        (fs * n as f64).floor() as usize,
    ];
    let mut rem = n - sizes.iter().sum::<usize>();
    for s in sizes.iter_mut() {
        if rem == 0 {
            break;
        }
        *s += 1;
        rem -= 1;
    }
    let mut ids: Vec<u32> = (0..n as u32).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let train = ids[..sizes[0]].to_vec();
    let validation = ids[sizes[0]..sizes[0] + sizes[1]].to_vec();
    let test = ids[sizes[0] + sizes[1]..].to_vec();
    Ok(SplitResult {
        train,
        validation,
        test,
    })
}

/// A permutation of observation ids that drives hierarchical sorting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ordering {
    pub permutation: Vec<u32>,
}

impl Ordering {
    pub fn new(permutation: Vec<u32>) -> Self {
        Ordering { permutation }
    }

    pub fn len(&self) -> usize {
        self.permutation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutation.is_empty()
    }

    /// True when this ordering is a permutation of exactly the given id set.
    pub fn is_permutation_of(&self, ids: &[u32]) -> bool {
        let mut a = self.permutation.clone();
        let mut b = ids.to_vec();
        a.sort_unstable();
        b.sort_unstable();
        a == b
    }
}

/// Uniform random permutation of all observation ids, deterministic under `seed`.
pub fn random_ordering(d: &Dataset, seed: u64) -> Result<Ordering> {
    if d.observations.is_empty() {
        return Err(Error::EmptyInput("cannot order an empty dataset".into()));
    }
    let mut ids: Vec<u32> = (0..d.observations.len() as u32).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    Ok(Ordering::new(ids))
}

/// Uniform random permutation of an explicit id list (a subset ordering),
/// deterministic under `seed`.
pub fn shuffled_ids(ids: &[u32], seed: u64) -> Vec<u32> {
    let mut out = ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    out.shuffle(&mut rng);
    out
}
