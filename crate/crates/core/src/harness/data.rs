//! Dataset sources: CSV files, the two-point classification set and seeded
//! synthetic generators.
//!
//! CSV layout: a header `x1,…,xm,y1,…,yc` (regression) or `x1,…,xm,label`
//! (classification), comma-separated, `.` as decimal separator.

use std::path::Path;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::losses::LossKind;

use super::config::{point, DatasetSource, LossFamily};

fn one_hot(label: usize, classes: usize) -> DVector<f64> {
    let mut y = DVector::zeros(classes);
    y[label] = 1.0;
    y
}

fn class_loss(family: LossFamily, label: usize, classes: usize) -> Result<LossKind> {
    match family {
        LossFamily::CrossEntropy => LossKind::cross_entropy(label, classes),
        LossFamily::Squared => Ok(LossKind::squared(one_hot(label, classes))),
    }
}

/// Loads a dataset. `classes` is required for classification CSVs, whose
/// header does not carry the class count.
pub fn load_dataset(source: &DatasetSource, family: LossFamily, classes: Option<usize>) -> Result<Dataset> {
    match source {
        DatasetSource::CsvFile { path } => load_csv(path, family, classes),
        DatasetSource::TwoPoint { x1, x2 } => {
            let inputs = vec![point(*x1), point(*x2)];
            let losses = vec![class_loss(family, 0, 2)?, class_loss(family, 1, 2)?];
            Dataset::new(inputs, losses)
        }
        DatasetSource::GaussianBlobs { n, m, c, seed } => gaussian_blobs(*n, *m, *c, *seed, family),
        DatasetSource::RandomRegression { n, m, c, seed } => {
            if family != LossFamily::Squared {
                return Err(Error::InvalidLoss("random_regression targets need the squared loss".into()));
            }
            random_regression(*n, *m, *c, *seed)
        }
    }
}

/// `x ~ N(0, I_m)`, `y ~ N(0, I_c)`, independent.
pub fn random_regression(n: usize, m: usize, c: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |len: usize| DVector::from_fn(len, |_, _| StandardNormal.sample(&mut rng));
    let mut inputs = Vec::with_capacity(n);
    let mut losses = Vec::with_capacity(n);
    for _ in 0..n {
        inputs.push(draw(m));
        losses.push(LossKind::squared(draw(c)));
    }
    Dataset::new(inputs, losses)
}

/// `c` class centres `~ N(0, 9 I_m)`; sample `i` has label `i mod c` and sits at
/// its centre plus `N(0, I_m)` noise.
pub fn gaussian_blobs(n: usize, m: usize, c: usize, seed: u64, family: LossFamily) -> Result<Dataset> {
    if c == 0 {
        return Err(Error::InvalidConfig("gaussian_blobs needs c ≥ 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<DVector<f64>> = (0..c)
        .map(|_| DVector::from_fn(m, |_, _| { let z: f64 = StandardNormal.sample(&mut rng); 3.0 * z }))
        .collect();
    let mut inputs = Vec::with_capacity(n);
    let mut losses = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % c;
        let noise = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
        inputs.push(&centres[label] + noise);
        losses.push(class_loss(family, label, c)?);
    }
    Dataset::new(inputs, losses)
}

fn load_csv(path: &Path, family: LossFamily, classes: Option<usize>) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, family, classes)
}

pub fn read_csv<R: std::io::Read>(reader: R, family: LossFamily, classes: Option<usize>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Dataset {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let names: Vec<&str> = header.iter().collect();
    let m = names.iter().take_while(|h| h.starts_with('x')).count();
    if m == 0 {
        return Err(Error::Dataset {
            line: 1,
            message: "header must start with x1..xm".into(),
        });
    }
    let classification = names.len() == m + 1 && names[m] == "label";
    let c = if classification {
        classes.ok_or_else(|| Error::Dataset {
            line: 1,
            message: "classification data needs the class count from the network output size".into(),
        })?
    } else {
        let c = names.len() - m;
        if c == 0 || !names[m..].iter().all(|h| h.starts_with('y')) {
            return Err(Error::Dataset {
                line: 1,
                message: "header must be x1..xm,y1..yc or x1..xm,label".into(),
            });
        }
        if family == LossFamily::CrossEntropy {
            return Err(Error::Dataset {
                line: 1,
                message: "cross-entropy needs integer labels; soft targets are not supported".into(),
            });
        }
        c
    };

    let mut inputs = Vec::new();
    let mut losses = Vec::new();
    for (row_idx, record) in rdr.records().enumerate() {
        let line = row_idx + 2;
        let record = record.map_err(|e| Error::Dataset {
            line,
            message: e.to_string(),
        })?;
        if record.len() != names.len() {
            return Err(Error::Dataset {
                line,
                message: format!("expected {} fields, found {}", names.len(), record.len()),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Dataset {
                line,
                message: format!("non-numeric cell `{s}`"),
            })
        };
        let x = record.iter().take(m).map(parse).collect::<Result<Vec<_>>>()?;
        inputs.push(DVector::from_vec(x));
        if classification {
            let raw = &record[m];
            let label: usize = raw.parse().map_err(|_| Error::Dataset {
                line,
                message: format!("label `{raw}` is not a class index"),
            })?;
            if label >= c {
                return Err(Error::Dataset {
                    line,
                    message: format!("label {label} out of range for {c} classes"),
                });
            }
            losses.push(class_loss(family, label, c)?);
        } else {
            let y = record.iter().skip(m).map(parse).collect::<Result<Vec<_>>>()?;
            losses.push(LossKind::squared(DVector::from_vec(y)));
        }
    }
    Dataset::new(inputs, losses)
}
