//! Dataset representation, CSV ingestion, train/test splitting, and synthetic
//! data generators.
//!
//! A [`Dataset`] bundles an m-by-n feature matrix, m targets, and m binary
//! sensitive attributes. Datasets are immutable after construction and safe to
//! share read-only across threads. Generators are pure functions of their
//! parameters and a seed (ChaCha12, so output is identical across platforms).

use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Normal, Uniform};

use crate::error::{Error, Result};

/// Affine map `y -> (y - lo) / (hi - lo)` recorded when targets are min-max
/// scaled, so the same map can be applied to held-out data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetScale {
    pub lo: f64,
    pub hi: f64,
}

impl TargetScale {
    pub fn apply(&self, y: f64) -> f64 {
        let range = self.hi - self.lo;
        if range > 0.0 {
            (y - self.lo) / range
        } else {
            0.5
        }
    }
}

/// Prediction task determining target validation on CSV ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Regression,
    Classification,
}

/// A fixed dataset of (x_i, y_i, a_i) triples.
///
/// Row i of `features` is observation i; `sensitive[i]` is true for the
/// protected group (a_i = 1).
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Vec<f64>,
    targets: Vec<f64>,
    sensitive: Vec<bool>,
    m: usize,
    n: usize,
    names: Option<Vec<String>>,
    target_scale: Option<TargetScale>,
}

impl Dataset {
    /// Builds a dataset, enforcing the invariants m >= 2, n >= 1, finite
    /// entries, and at least one observation in each sensitive group.
    pub fn new(features: Vec<f64>, targets: Vec<f64>, sensitive: Vec<bool>, n: usize) -> Result<Self> {
        let ds = Self::from_parts_unchecked(features, targets, sensitive, n)?;
        if ds.m < 2 {
            return Err(Error::InvalidData(format!("need m >= 2 observations, got {}", ds.m)));
        }
        if ds.m1() == 0 {
            return Err(Error::SingleGroup(0));
        }
        if ds.m0() == 0 {
            return Err(Error::SingleGroup(1));
        }
        Ok(ds)
    }

    /// Builds a dataset without the two-group/minimum-size invariants.
    ///
    /// Shape and finiteness are still checked. Intended for single-observation
    /// subproblem studies where one sensitive group is deliberately empty.
    pub fn from_parts_unchecked(
        features: Vec<f64>,
        targets: Vec<f64>,
        sensitive: Vec<bool>,
        n: usize,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidData("need n >= 1 features".into()));
        }
        let m = targets.len();
        if m == 0 {
            return Err(Error::EmptyData);
        }
        if features.len() != m * n {
            return Err(Error::InvalidData(format!(
                "feature matrix has {} entries, expected {} x {}",
                features.len(),
                m,
                n
            )));
        }
        if sensitive.len() != m {
            return Err(Error::InvalidData("sensitive length != m".into()));
        }
        if features.iter().any(|v| !v.is_finite()) || targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite entry".into()));
        }
        Ok(Self {
            features,
            targets,
            sensitive,
            m,
            n,
            names: None,
            target_scale: None,
        })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        self.names = Some(names);
        self
    }

    pub fn with_target_scale(mut self, scale: TargetScale) -> Self {
        self.target_scale = Some(scale);
        self
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of protected observations (a_i = 1).
    pub fn m1(&self) -> usize {
        self.sensitive.iter().filter(|&&a| a).count()
    }

    /// Number of reference observations (a_i = 0).
    pub fn m0(&self) -> usize {
        self.m - self.m1()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n..(i + 1) * self.n]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn is_protected(&self, i: usize) -> bool {
        self.sensitive[i]
    }

    pub fn sensitive(&self) -> &[bool] {
        &self.sensitive
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn target_scale(&self) -> Option<TargetScale> {
        self.target_scale
    }

    /// Feature column k as an owned vector.
    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.m).map(|i| self.features[i * self.n + k]).collect()
    }

    /// Linear predictions v_i = w^T x_i.
    pub fn predictions(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(w.len(), self.n, "weight vector length mismatch");
        (0..self.m)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(w)
                    .map(|(x, wk)| x * wk)
                    .sum::<f64>()
            })
            .collect()
    }

    /// True when every target is -1 or +1.
    pub fn has_pm1_targets(&self) -> bool {
        self.targets.iter().all(|&y| y == 1.0 || y == -1.0)
    }
}

/// Parameters for a deterministic train/test split.
#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    /// Fraction of rows placed in the first half, in (0, 1).
    pub fraction: f64,
    pub seed: u64,
}

/// Splits `ds` into disjoint halves of sizes ceil(f*m) and m - ceil(f*m).
///
/// The partition is a seeded shuffle; row order inside each half follows the
/// original dataset. Fails if either half loses a sensitive group entirely.
pub fn split(ds: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.fraction > 0.0 && spec.fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "split fraction must be in (0,1), got {}",
            spec.fraction
        )));
    }
    let m = ds.m();
    let take = (spec.fraction * m as f64).ceil() as usize;
    if take == 0 || take == m {
        return Err(Error::DegenerateSplit {
            fraction: spec.fraction,
            seed: spec.seed,
        });
    }
    let mut idx: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    idx.shuffle(&mut rng);
    let mut first: Vec<usize> = idx[..take].to_vec();
    let mut second: Vec<usize> = idx[take..].to_vec();
    first.sort_unstable();
    second.sort_unstable();

    let gather = |rows: &[usize]| -> Result<Dataset> {
        let mut feats = Vec::with_capacity(rows.len() * ds.n());
        let mut targs = Vec::with_capacity(rows.len());
        let mut sens = Vec::with_capacity(rows.len());
        for &i in rows {
            feats.extend_from_slice(ds.row(i));
            targs.push(ds.target(i));
            sens.push(ds.is_protected(i));
        }
        let mut out = Dataset::from_parts_unchecked(feats, targs, sens, ds.n())?;
        out.names = ds.names.clone();
        out.target_scale = ds.target_scale;
        Ok(out)
    };

    let a = gather(&first)?;
    let b = gather(&second)?;
    for half in [&a, &b] {
        if half.m1() == 0 || half.m0() == 0 || half.m() < 2 {
            return Err(Error::DegenerateSplit {
                fraction: spec.fraction,
                seed: spec.seed,
            });
        }
    }
    Ok((a, b))
}

/// Loads a dataset from a headered CSV file.
///
/// All columns must be numeric. The sensitive column must contain exactly two
/// distinct values; the smaller maps to a = 0 and the larger to a = 1. The
/// remaining columns become features in file order.
pub fn load_csv(
    path: impl AsRef<Path>,
    target_column: &str,
    sensitive_column: &str,
    task: Task,
) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path.as_ref())?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let target_idx = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::MissingColumn(target_column.to_string()))?;
    let sensitive_idx = headers
        .iter()
        .position(|h| h == sensitive_column)
        .ok_or_else(|| Error::MissingColumn(sensitive_column.to_string()))?;
    if target_idx == sensitive_idx {
        return Err(Error::InvalidParameter(
            "target and sensitive columns must differ".into(),
        ));
    }

    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| c != target_idx && c != sensitive_idx)
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::InvalidData("no feature columns left".into()));
    }

    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut raw_sensitive = Vec::new();
    for (row_i, record) in reader.records().enumerate() {
        let record = record?;
        let parse = |col: usize| -> Result<f64> {
            let cell = record.get(col).unwrap_or("");
            cell.trim().parse::<f64>().map_err(|_| Error::NonNumericCell {
                row: row_i + 1,
                column: headers[col].clone(),
                value: cell.to_string(),
            })
        };
        let y = parse(target_idx)?;
        if task == Task::Classification && y != 1.0 && y != -1.0 {
            return Err(Error::BadLabel {
                row: row_i + 1,
                value: y,
            });
        }
        targets.push(y);
        raw_sensitive.push(parse(sensitive_idx)?);
        for &c in &feature_cols {
            features.push(parse(c)?);
        }
    }
    if targets.is_empty() {
        return Err(Error::EmptyData);
    }

    let mut distinct: Vec<f64> = Vec::new();
    for &v in &raw_sensitive {
        if !distinct.contains(&v) {
            distinct.push(v);
        }
    }
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    match distinct.len() {
        1 => {
            return Err(Error::SingleGroup(if distinct[0] == 0.0 { 0 } else { 1 }));
        }
        2 => {}
        k => {
            return Err(Error::SensitiveCardinality {
                column: sensitive_column.to_string(),
                distinct: k,
            });
        }
    }
    let hi = distinct[1];
    let sensitive: Vec<bool> = raw_sensitive.iter().map(|&v| v == hi).collect();

    let names: Vec<String> = feature_cols.iter().map(|&c| headers[c].clone()).collect();
    Ok(Dataset::new(features, targets, sensitive, feature_cols.len())?.with_names(names))
}

/// Generates the synthetic regression benchmark.
///
/// Targets follow y = w^T x + eps. The first floor(n/2) true weights are
/// Unif(-1,0), the next floor(n/2) are Unif(0,10), and the last weight is
/// zero. Features are i.i.d. standard normal and eps ~ N(0, 0.1^2); neither
/// choice is pinned by the benchmark definition, see README. The first
/// ceil(3m/4) observations get a = 0, the remainder a = 1, and targets are
/// min-max scaled to [0,1] with the affine map recorded on the dataset.
pub fn gen_synthetic_regression(n: usize, m: usize, seed: u64) -> Result<(Dataset, Vec<f64>)> {
    if n < 2 {
        return Err(Error::InvalidParameter("need n >= 2".into()));
    }
    if m < 4 {
        return Err(Error::InvalidParameter("need m >= 4".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let half = n / 2;
    let neg = Uniform::new(-1.0, 0.0);
    let pos = Uniform::new(0.0, 10.0);
    let mut w = vec![0.0; n];
    for wk in w.iter_mut().take(half) {
        *wk = neg.sample(&mut rng);
    }
    for wk in w.iter_mut().skip(half).take(half) {
        *wk = pos.sample(&mut rng);
    }
    w[n - 1] = 0.0;

    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let mut features = Vec::with_capacity(m * n);
    let mut targets = Vec::with_capacity(m);
    for _ in 0..m {
        let start = features.len();
        for _ in 0..n {
            features.push(std_normal.sample(&mut rng));
        }
        let v: f64 = features[start..].iter().zip(&w).map(|(x, wk)| x * wk).sum();
        targets.push(v + 0.1 * std_normal.sample(&mut rng));
    }

    let majority = (3 * m).div_ceil(4);
    let sensitive: Vec<bool> = (0..m).map(|i| i >= majority).collect();

    let lo = targets.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = targets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = TargetScale { lo, hi };
    for y in &mut targets {
        *y = scale.apply(*y);
    }

    let ds = Dataset::new(features, targets, sensitive, n)?.with_target_scale(scale);
    Ok((ds, w))
}

const COV_POS: [[f64; 2]; 2] = [[5.0, 1.0], [1.0, 5.0]];
const COV_NEG: [[f64; 2]; 2] = [[10.0, 1.0], [1.0, 10.0]];
const MEAN_POS: [f64; 2] = [2.0, 2.0];
const MEAN_NEG: [f64; 2] = [-2.0, -2.0];

fn gaussian_density(u: [f64; 2], mean: [f64; 2], cov: [[f64; 2]; 2]) -> f64 {
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let d0 = u[0] - mean[0];
    let d1 = u[1] - mean[1];
    // quadratic form with the 2x2 inverse written out
    let q = (cov[1][1] * d0 * d0 - 2.0 * cov[0][1] * d0 * d1 + cov[0][0] * d1 * d1) / det;
    (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
}

/// Generates the two-dimensional classification benchmark.
///
/// Labels are +-1 uniform at random. Features are drawn from the
/// label-conditional Gaussians N((2,2), [[5,1],[1,5]]) for y = +1 and
/// N((-2,-2), [[10,1],[1,10]]) for y = -1. Protected status is assigned with
/// probability p(a=1) = p(Ax | y=+1) / (p(Ax | y=+1) + p(Ax | y=-1)), where A
/// rotates by pi/4.
pub fn gen_zafar_classification(m: usize, seed: u64) -> Result<Dataset> {
    if m < 4 {
        return Err(Error::InvalidParameter("need m >= 4".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).unwrap();

    let chol = |c: [[f64; 2]; 2]| -> [f64; 3] {
        let l11 = c[0][0].sqrt();
        let l21 = c[1][0] / l11;
        let l22 = (c[1][1] - l21 * l21).sqrt();
        [l11, l21, l22]
    };
    let l_pos = chol(COV_POS);
    let l_neg = chol(COV_NEG);

    let (cos, sin) = {
        let t = std::f64::consts::FRAC_PI_4;
        (t.cos(), t.sin())
    };

    let mut features = Vec::with_capacity(2 * m);
    let mut targets = Vec::with_capacity(m);
    let mut sensitive = Vec::with_capacity(m);
    for _ in 0..m {
        let y = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let g0: f64 = std_normal.sample(&mut rng);
        let g1: f64 = std_normal.sample(&mut rng);
        let (mean, l) = if y > 0.0 {
            (MEAN_POS, l_pos)
        } else {
            (MEAN_NEG, l_neg)
        };
        let x0 = mean[0] + l[0] * g0;
        let x1 = mean[1] + l[1] * g0 + l[2] * g1;

        let rx = [cos * x0 - sin * x1, sin * x0 + cos * x1];
        let d_pos = gaussian_density(rx, MEAN_POS, COV_POS);
        let d_neg = gaussian_density(rx, MEAN_NEG, COV_NEG);
        let p_protected = d_pos / (d_pos + d_neg);
        debug_assert!((0.0..=1.0).contains(&p_protected));

        features.push(x0);
        features.push(x1);
        targets.push(y);
        sensitive.push(rng.gen_bool(p_protected));
    }

    Dataset::new(features, targets, sensitive, 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn load_csv_basic() {
        let f = write_csv("f1,f2,y,a\n1.0,2.0,0.5,0\n3.0,4.0,0.7,1\n5.0,6.0,0.9,0\n");
        let ds = load_csv(f.path(), "y", "a", Task::Regression).unwrap();
        assert_eq!(ds.m(), 3);
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.m1(), 1);
        assert_eq!(ds.row(1), &[3.0, 4.0]);
        assert_eq!(ds.names().unwrap(), &["f1".to_string(), "f2".to_string()]);
    }

    #[test]
    fn load_csv_single_group_errors() {
        let f = write_csv("f1,y,a\n1.0,0.5,0\n2.0,0.7,0\n");
        let err = load_csv(f.path(), "y", "a", Task::Regression).unwrap_err();
        assert!(err.to_string().contains("single sensitive group"), "{err}");
    }

    #[test]
    fn load_csv_non_numeric_names_row_and_column() {
        let f = write_csv("f1,y,a\n1.0,oops,0\n2.0,0.7,1\n");
        let err = load_csv(f.path(), "y", "a", Task::Regression).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 1") && msg.contains("'y'"), "{msg}");
    }

    #[test]
    fn load_csv_missing_column() {
        let f = write_csv("f1,y,a\n1.0,0.5,0\n");
        let err = load_csv(f.path(), "label", "a", Task::Regression).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(_)));
    }

    #[test]
    fn load_csv_classification_rejects_bad_label() {
        let f = write_csv("f1,y,a\n1.0,0.0,0\n2.0,1.0,1\n");
        let err = load_csv(f.path(), "y", "a", Task::Classification).unwrap_err();
        assert!(matches!(err, Error::BadLabel { row: 1, .. }));
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let (ds, _) = gen_synthetic_regression(4, 10, 3).unwrap();
        let spec = SplitSpec {
            fraction: 0.5,
            seed: 7,
        };
        let (a1, b1) = split(&ds, spec).unwrap();
        let (a2, _) = split(&ds, spec).unwrap();
        assert_eq!(a1.m(), 5);
        assert_eq!(b1.m(), 5);
        assert_eq!(a1.targets(), a2.targets());

        // union of halves equals the input as multisets of targets
        let mut all: Vec<f64> = a1.targets().iter().chain(b1.targets()).cloned().collect();
        let mut orig: Vec<f64> = ds.targets().to_vec();
        all.sort_by(|x, y| x.partial_cmp(y).unwrap());
        orig.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_eq!(all, orig);
    }

    #[test]
    fn split_detects_lost_group() {
        // 4 rows, exactly one protected: one half must lose it
        let ds = Dataset::new(
            vec![1.0, 2.0, 3.0, 4.0],
            vec![0.1, 0.2, 0.3, 0.4],
            vec![false, false, false, true],
            1,
        )
        .unwrap();
        let mut saw_error = false;
        for seed in 0..20 {
            if split(&ds, SplitSpec { fraction: 0.5, seed }).is_err() {
                saw_error = true;
                break;
            }
        }
        assert!(saw_error, "some seed must isolate the lone protected row");
    }

    #[test]
    fn synthetic_regression_matches_construction() {
        let (ds, w) = gen_synthetic_regression(10, 100, 0).unwrap();
        assert_eq!(ds.m(), 100);
        assert_eq!(ds.n(), 10);
        assert_eq!(ds.m0(), 75);
        assert_eq!(ds.m1(), 25);
        assert_eq!(w[9], 0.0);
        assert!(w[..5].iter().all(|&v| (-1.0..=0.0).contains(&v)));
        assert!(w[5..9].iter().all(|&v| (0.0..=10.0).contains(&v)));
        assert!(ds.targets().iter().all(|&y| (0.0..=1.0).contains(&y)));

        let (ds2, w2) = gen_synthetic_regression(10, 100, 0).unwrap();
        assert_eq!(ds.targets(), ds2.targets());
        assert_eq!(w, w2);
    }

    #[test]
    fn zafar_shape_and_determinism() {
        let ds = gen_zafar_classification(200, 0).unwrap();
        assert_eq!(ds.m(), 200);
        assert_eq!(ds.n(), 2);
        assert!(ds.has_pm1_targets());
        let ds2 = gen_zafar_classification(200, 0).unwrap();
        assert_eq!(ds.targets(), ds2.targets());
        assert_eq!(ds.sensitive(), ds2.sensitive());
    }

    #[test]
    fn zafar_conditional_means() {
        // Monte-Carlo check of the label-conditional feature means.
        let ds = gen_zafar_classification(10_000, 1).unwrap();
        let mut sum = [0.0, 0.0];
        let mut count = 0usize;
        for i in 0..ds.m() {
            if ds.target(i) > 0.0 {
                sum[0] += ds.row(i)[0];
                sum[1] += ds.row(i)[1];
                count += 1;
            }
        }
        let mean = [sum[0] / count as f64, sum[1] / count as f64];
        assert!((mean[0] - 2.0).abs() < 0.15, "mean[0] = {}", mean[0]);
        assert!((mean[1] - 2.0).abs() < 0.15, "mean[1] = {}", mean[1]);
    }
}
