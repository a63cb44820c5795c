//! Deterministic 2-D labeled synthetic datasets, sized so full training runs
//! fit on a laptop: Gaussian blobs arranged on a circle, and concentric
//! rings. Both are rescaled into the unit box to match the generator's tanh
//! output range, split per class into train/validation, and round-trip
//! through a plain CSV format.

use std::f64::consts::TAU;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// Gaussian blobs centered on a circle, one per class.
    Gmm,
    /// Concentric rings, one per class.
    Rings,
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gmm" => Ok(Self::Gmm),
            "rings" => Ok(Self::Rings),
            other => Err(Error::Config(format!(
                "unknown dataset kind '{other}' (expected 'gmm' or 'rings')"
            ))),
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gmm => "gmm",
            Self::Rings => "rings",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    /// n x d point coordinates.
    pub points: Matrix,
    /// One label per row, in 0..num_classes.
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

#[derive(Clone, Debug)]
pub struct DatasetPair {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
}

fn check_generation_args(classes: usize, per_class: usize) -> Result<()> {
    if classes < 2 {
        return Err(Error::Config(format!("need at least 2 classes, got {classes}")));
    }
    if per_class < 2 {
        return Err(Error::Config(format!(
            "need at least 2 points per class, got {per_class}"
        )));
    }
    Ok(())
}

/// Divide every coordinate by the largest absolute coordinate so the cloud
/// fills (and never leaves) the unit box. No-op for an all-zero cloud.
pub fn rescale_to_unit_box(points: &mut Matrix) {
    let m = points.max_abs();
    if m > 0.0 {
        points.scale_in_place(1.0 / m);
    }
}

/// Gaussian mixture: class c is an isotropic blob of width `sigma` centered
/// at radius * (cos, sin)(2 pi c / classes).
pub fn make_gaussian_mixture(
    classes: usize,
    per_class: usize,
    radius: f64,
    sigma: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    check_generation_args(classes, per_class)?;
    if !(radius > 0.0 && sigma > 0.0) {
        return Err(Error::Config(format!(
            "radius and sigma must be positive, got {radius} and {sigma}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, sigma).expect("positive sigma");
    let n = classes * per_class;
    let mut points = Matrix::zeros(n, 2);
    let mut labels = Vec::with_capacity(n);
    for c in 0..classes {
        let angle = TAU * c as f64 / classes as f64;
        let (cx, cy) = (radius * angle.cos(), radius * angle.sin());
        for k in 0..per_class {
            let i = c * per_class + k;
            points.set(i, 0, cx + jitter.sample(&mut rng));
            points.set(i, 1, cy + jitter.sample(&mut rng));
            labels.push(c);
        }
    }
    rescale_to_unit_box(&mut points);
    Ok(LabeledDataset { points, labels, num_classes: classes })
}

/// Radial standard deviation of every ring in `make_rings`, pre-rescaling.
pub const RING_NOISE: f64 = 0.02;

/// Concentric rings: class c sits at radius (c + 1) / classes with radial
/// width [`RING_NOISE`] and uniform angle.
pub fn make_rings(classes: usize, per_class: usize, seed: u64) -> Result<LabeledDataset> {
    check_generation_args(classes, per_class)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, RING_NOISE).expect("positive sigma");
    let n = classes * per_class;
    let mut points = Matrix::zeros(n, 2);
    let mut labels = Vec::with_capacity(n);
    for c in 0..classes {
        let base_r = (c + 1) as f64 / classes as f64;
        for k in 0..per_class {
            let i = c * per_class + k;
            let angle = rng.gen_range(0.0..TAU);
            let r = base_r + jitter.sample(&mut rng);
            points.set(i, 0, r * angle.cos());
            points.set(i, 1, r * angle.sin());
            labels.push(c);
        }
    }
    rescale_to_unit_box(&mut points);
    Ok(LabeledDataset { points, labels, num_classes: classes })
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    /// Row indices of each class, in dataset order.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes];
        for (i, &y) in self.labels.iter().enumerate() {
            out[y].push(i);
        }
        out
    }

    fn take_rows(&self, rows: &[usize]) -> LabeledDataset {
        let mut points = Matrix::zeros(rows.len(), self.dim());
        let mut labels = Vec::with_capacity(rows.len());
        for (k, &i) in rows.iter().enumerate() {
            for j in 0..self.dim() {
                points.set(k, j, self.points.get(i, j));
            }
            labels.push(self.labels[i]);
        }
        LabeledDataset { points, labels, num_classes: self.num_classes }
    }

    /// Per-class split: the first `floor(train_fraction * n_c)` rows of each
    /// class (at least one) go to train, the rest to validation. Every class
    /// must land at least one row on each side.
    pub fn split(&self, train_fraction: f64) -> Result<DatasetPair> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train fraction must be in (0, 1), got {train_fraction}"
            )));
        }
        let mut train_rows = Vec::new();
        let mut val_rows = Vec::new();
        for (c, rows) in self.class_indices().iter().enumerate() {
            if rows.len() < 2 {
                return Err(Error::MissingClass { class: c, which: "dataset", required: 2 });
            }
            let n_train = ((rows.len() as f64 * train_fraction).floor() as usize)
                .clamp(1, rows.len() - 1);
            train_rows.extend_from_slice(&rows[..n_train]);
            val_rows.extend_from_slice(&rows[n_train..]);
        }
        train_rows.sort_unstable();
        val_rows.sort_unstable();
        Ok(DatasetPair {
            train: self.take_rows(&train_rows),
            val: self.take_rows(&val_rows),
        })
    }

    /// Write `x0,...,x{d-1},label` rows; coordinates keep full f64 precision.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        let header: Vec<String> = (0..self.dim())
            .map(|j| format!("x{j}"))
            .chain(std::iter::once("label".to_string()))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            for j in 0..self.dim() {
                write!(w, "{:.16e},", self.points.get(i, j))?;
            }
            writeln!(w, "{}", self.labels[i])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<LabeledDataset> {
        let path_str = path.display().to_string();
        let malformed = |line: usize, message: String| Error::MalformedFile {
            path: path_str.clone(),
            line,
            message,
        };
        let file = File::open(path)?;
        let reader = BufReader::new(file);
        let mut lines = reader.lines().enumerate();

        let (_, header) = lines
            .next()
            .ok_or_else(|| malformed(1, "empty file".into()))?;
        let header = header?;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.len() < 2 || cols[cols.len() - 1] != "label" {
            return Err(malformed(1, format!("bad header '{header}'")));
        }
        let dim = cols.len() - 1;
        for (j, c) in cols[..dim].iter().enumerate() {
            if *c != format!("x{j}") {
                return Err(malformed(1, format!("expected column x{j}, found '{c}'")));
            }
        }

        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut labels = Vec::new();
        for (idx, line) in lines {
            let line = line?;
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != dim + 1 {
                return Err(malformed(
                    lineno,
                    format!("expected {} fields, found {}", dim + 1, fields.len()),
                ));
            }
            let mut row = Vec::with_capacity(dim);
            for f in &fields[..dim] {
                let v: f64 = f
                    .parse()
                    .map_err(|_| malformed(lineno, format!("bad coordinate '{f}'")))?;
                if !v.is_finite() {
                    return Err(malformed(lineno, format!("non-finite coordinate '{f}'")));
                }
                row.push(v);
            }
            let label: usize = fields[dim]
                .parse()
                .map_err(|_| malformed(lineno, format!("bad label '{}'", fields[dim])))?;
            rows.push(row);
            labels.push(label);
        }
        if rows.is_empty() {
            return Err(malformed(2, "no data rows".into()));
        }
        let num_classes = labels.iter().copied().max().unwrap() + 1;
        Ok(LabeledDataset {
            points: Matrix::from_rows(&rows),
            labels,
            num_classes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_per_seed() {
        let a = make_gaussian_mixture(4, 10, 1.0, 0.1, 7).unwrap();
        let b = make_gaussian_mixture(4, 10, 1.0, 0.1, 7).unwrap();
        let c = make_gaussian_mixture(4, 10, 1.0, 0.1, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.points, c.points);
    }

    #[test]
    fn clouds_fill_the_unit_box() {
        for ds in [
            make_gaussian_mixture(8, 50, 1.0, 0.1, 1).unwrap(),
            make_rings(3, 50, 2).unwrap(),
        ] {
            let m = ds.points.max_abs();
            assert!((m - 1.0).abs() < 1e-12, "max coordinate {m}");
        }
    }

    #[test]
    fn blobs_sit_near_their_centers() {
        let ds = make_gaussian_mixture(4, 200, 1.0, 0.05, 3).unwrap();
        // Class 0 centers near angle 0: positive x, y near 0 (up to rescale).
        let idx = ds.class_indices();
        let mean_x: f64 =
            idx[0].iter().map(|&i| ds.points.get(i, 0)).sum::<f64>() / idx[0].len() as f64;
        let mean_y: f64 =
            idx[0].iter().map(|&i| ds.points.get(i, 1)).sum::<f64>() / idx[0].len() as f64;
        assert!(mean_x > 0.7, "{mean_x}");
        assert!(mean_y.abs() < 0.1, "{mean_y}");
    }

    #[test]
    fn rings_have_increasing_radii() {
        let ds = make_rings(3, 300, 4).unwrap();
        let idx = ds.class_indices();
        let mean_r = |rows: &[usize]| {
            rows.iter()
                .map(|&i| (ds.points.get(i, 0).powi(2) + ds.points.get(i, 1).powi(2)).sqrt())
                .sum::<f64>()
                / rows.len() as f64
        };
        let r0 = mean_r(&idx[0]);
        let r1 = mean_r(&idx[1]);
        let r2 = mean_r(&idx[2]);
        assert!(r0 < r1 && r1 < r2, "{r0} {r1} {r2}");
    }

    #[test]
    fn split_keeps_every_class_on_both_sides() {
        let ds = make_gaussian_mixture(5, 20, 1.0, 0.1, 5).unwrap();
        let pair = ds.split(0.9).unwrap();
        assert_eq!(pair.train.len(), 5 * 18);
        assert_eq!(pair.val.len(), 5 * 2);
        for side in [&pair.train, &pair.val] {
            let idx = side.class_indices();
            assert!(idx.iter().all(|rows| !rows.is_empty()));
        }
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("points.csv");
        let ds = make_rings(3, 10, 6).unwrap();
        ds.save_csv(&path).unwrap();
        let back = LabeledDataset::load_csv(&path).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn malformed_csv_is_rejected_with_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x0,x1,label\n0.1,0.2,0\n0.3,oops,1\n").unwrap();
        match LabeledDataset::load_csv(&path) {
            Err(Error::MalformedFile { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected malformed-file error, got {other:?}"),
        }
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(matches!(
            LabeledDataset::load_csv(&path),
            Err(Error::MalformedFile { line: 1, .. })
        ));
    }
}
