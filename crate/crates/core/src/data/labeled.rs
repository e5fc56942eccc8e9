use std::collections::BTreeMap;
use std::io::BufRead;

use nalgebra::{DMatrix, Matrix2, Vector2};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::factor::Factor;

/// Points (one per row) with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoints {
    pub points: DMatrix<f64>,
    pub labels: Vec<i64>,
}

impl LabeledPoints {
    pub fn new(points: DMatrix<f64>, labels: Vec<i64>) -> Result<Self> {
        if points.nrows() != labels.len() {
            return Err(Error::invalid(format!(
                "{} points but {} labels",
                points.nrows(),
                labels.len()
            )));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite coordinate"));
        }
        Ok(Self { points, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn distinct_labels(&self) -> usize {
        let mut l = self.labels.clone();
        l.sort_unstable();
        l.dedup();
        l.len()
    }

    /// Rows `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> LabeledPoints {
        LabeledPoints {
            points: self.points.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Seeded class-stratified uniform subsample of `size` points. Each class
    /// keeps its share rounded down; the remainder goes to the classes with
    /// the largest fractional parts.
    pub fn stratified_subsample(&self, size: usize, seed: u64) -> Result<LabeledPoints> {
        if size > self.len() {
            return Err(Error::invalid(format!(
                "subsample of {size} from {} points",
                self.len()
            )));
        }
        let mut classes: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            classes.entry(l).or_default().push(i);
        }
        let n = self.len() as f64;
        let mut quota: Vec<(i64, usize, f64)> = classes
            .iter()
            .map(|(&l, idx)| {
                let exact = size as f64 * idx.len() as f64 / n;
                (l, exact.floor() as usize, exact - exact.floor())
            })
            .collect();
        let mut short = size - quota.iter().map(|q| q.1).sum::<usize>();
        let mut order: Vec<usize> = (0..quota.len()).collect();
        order.sort_by(|&a, &b| quota[b].2.total_cmp(&quota[a].2).then(a.cmp(&b)));
        for k in order {
            if short == 0 {
                break;
            }
            if quota[k].1 < classes[&quota[k].0].len() {
                quota[k].1 += 1;
                short -= 1;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut chosen = Vec::with_capacity(size);
        for (l, take, _) in quota {
            let idx = &classes[&l];
            let mut pick: Vec<usize> = index::sample(&mut rng, idx.len(), take)
                .into_iter()
                .map(|k| idx[k])
                .collect();
            pick.sort_unstable();
            chosen.extend(pick);
        }
        chosen.sort_unstable();
        Ok(self.select(&chosen))
    }
}

/// Reads comma-separated rows of numeric features followed by a class label.
/// Non-numeric labels are mapped to integers in order of first appearance.
/// Blank lines and lines starting with `#` are skipped.
pub fn load_labeled_csv(reader: impl BufRead) -> Result<LabeledPoints> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 {
            return Err(Error::Parse {
                line: lineno,
                message: "expected features followed by a label".into(),
            });
        }
        let (label, feats) = fields.split_last().expect("at least two fields");
        let row = feats
            .iter()
            .map(|s| {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("bad number {s:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected {} features, found {}", first.len(), row.len()),
                });
            }
        }
        let label = match label.parse::<i64>() {
            Ok(l) => l,
            Err(_) => match names.iter().position(|n| n == label) {
                Some(k) => k as i64,
                None => {
                    names.push(label.to_string());
                    names.len() as i64 - 1
                }
            },
        };
        rows.push(row);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(Error::invalid("no data rows"));
    }
    let d = rows[0].len();
    let points = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
    LabeledPoints::new(points, labels)
}

/// Writes points as CSV with the label in the last column.
pub fn write_labeled_csv(data: &LabeledPoints, mut out: impl std::io::Write) -> Result<()> {
    for (i, label) in data.labels.iter().enumerate() {
        for x in data.points.row(i).iter() {
            write!(out, "{x},")?;
        }
        writeln!(out, "{label}")?;
    }
    Ok(())
}

/// Cluster centers of the two classes before rotation.
pub const CLUSTER_CENTERS: [[(f64, f64); 2]; 2] = [[(-1.0, 1.0), (-1.0, -1.0)], [(1.0, -1.0), (1.0, 1.0)]];

/// Standard deviation of the perturbation added to the first two coordinates.
pub const CLUSTER_NOISE_STD: f64 = 0.5;

/// Synthetic two-class data: each point is `N(0, I_d)` with its first two
/// coordinates replaced by a uniformly chosen (randomly rotated) center plus
/// `N(0, 0.25·I₂)` noise. Labels are 1 and 2.
///
/// Returns the data and the rotation applied to the centers.
pub fn gen_clusters(dim: usize, n_points: usize, seed: u64) -> Result<(LabeledPoints, Matrix2<f64>)> {
    if dim < 2 {
        return Err(Error::invalid(format!("cluster data needs dim >= 2, got {dim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let (s, c) = theta.sin_cos();
    let rot = Matrix2::new(c, -s, s, c);
    let noise = Normal::new(0.0, CLUSTER_NOISE_STD).expect("valid normal");
    let mut points = DMatrix::zeros(n_points, dim);
    let mut labels = Vec::with_capacity(n_points);
    for i in 0..n_points {
        for j in 0..dim {
            points[(i, j)] = rng.sample(StandardNormal);
        }
        let k: usize = rng.random_range(0..4);
        let (cls, which) = (k / 2, k % 2);
        let (cx, cy) = CLUSTER_CENTERS[cls][which];
        let center = rot * Vector2::new(cx, cy);
        points[(i, 0)] = center[0] + noise.sample(&mut rng);
        points[(i, 1)] = center[1] + noise.sample(&mut rng);
        labels.push(cls as i64 + 1);
    }
    Ok((LabeledPoints::new(points, labels)?, rot))
}

/// `(S, S̄)` index pairs.
pub type PairSets = (Vec<(usize, usize)>, Vec<(usize, usize)>);

/// Same-label pairs `S` and different-label pairs `S̄`, as `(i, j)` with
/// `i < j`. With `max_pairs`, each set is uniformly subsampled to at most
/// that many pairs (sorted).
pub fn build_pairs(data: &LabeledPoints, max_pairs: Option<usize>, seed: u64) -> Result<PairSets> {
    if data.distinct_labels() < 2 {
        return Err(Error::invalid("pairs need at least two distinct labels"));
    }
    let n = data.len();
    let (mut s, mut d) = (Vec::new(), Vec::new());
    for i in 0..n {
        for j in i + 1..n {
            if data.labels[i] == data.labels[j] {
                s.push((i, j));
            } else {
                d.push((i, j));
            }
        }
    }
    if let Some(cap) = max_pairs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for set in [&mut s, &mut d] {
            if set.len() > cap {
                set.shuffle(&mut rng);
                set.truncate(cap);
                set.sort_unstable();
            }
        }
    }
    Ok((s, d))
}

/// Fraction of triples `(i, j, l)` with `(i, j) ∈ S`, `(i, l) ∈ S̄` and
/// `d_A(i, j) < d_A(i, l)` strictly, where `d_A(x, y) = ‖Vᵀ(x − y)‖`.
/// Pairs are unordered, so each pair contributes to both endpoints as anchor.
pub fn quality_q(
    data: &LabeledPoints,
    similar: &[(usize, usize)],
    dissimilar: &[(usize, usize)],
    v: &Factor,
) -> Result<f64> {
    let n = data.len();
    if v.rows() != data.dim() {
        return Err(Error::invalid(format!(
            "factor has {} rows, data dimension is {}",
            v.rows(),
            data.dim()
        )));
    }
    let proj = &data.points * v.matrix();
    let dist = |i: usize, j: usize| (proj.row(i) - proj.row(j)).norm();
    let mut sim: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut dis: Vec<Vec<f64>> = vec![Vec::new(); n];
    for &(i, j) in similar {
        let d = dist(i, j);
        sim[i].push(d);
        sim[j].push(d);
    }
    for &(i, l) in dissimilar {
        let d = dist(i, l);
        dis[i].push(d);
        dis[l].push(d);
    }
    let mut hits = 0u64;
    let mut total = 0u64;
    for i in 0..n {
        if sim[i].is_empty() || dis[i].is_empty() {
            continue;
        }
        dis[i].sort_by(f64::total_cmp);
        let ds = &dis[i];
        total += (sim[i].len() * ds.len()) as u64;
        for &dj in &sim[i] {
            let not_greater = ds.partition_point(|&x| x <= dj);
            hits += (ds.len() - not_greater) as u64;
        }
    }
    if total == 0 {
        return Err(Error::invalid("no (similar, dissimilar) triples share an anchor"));
    }
    Ok(hits as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_enumeration() {
        let data = LabeledPoints::new(DMatrix::zeros(3, 2), vec![1, 1, 2]).unwrap();
        let (s, d) = build_pairs(&data, None, 0).unwrap();
        assert_eq!(s, vec![(0, 1)]);
        assert_eq!(d, vec![(0, 2), (1, 2)]);
        let same = LabeledPoints::new(DMatrix::zeros(3, 2), vec![1, 1, 1]).unwrap();
        assert!(build_pairs(&same, None, 0).is_err());
    }

    #[test]
    fn pair_subsampling() {
        let (data, _) = gen_clusters(3, 40, 1).unwrap();
        let (s, d) = build_pairs(&data, Some(50), 9).unwrap();
        assert_eq!(s.len(), 50);
        assert_eq!(d.len(), 50);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn quality_extremes() {
        // Same-label points coincide, classes apart.
        let pts = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        let data = LabeledPoints::new(pts, vec![1, 1, 2, 2]).unwrap();
        let (s, d) = build_pairs(&data, None, 0).unwrap();
        let id = Factor::new(DMatrix::identity(2, 2));
        assert_eq!(quality_q(&data, &s, &d, &id).unwrap(), 1.0);
        let zero = Factor::new(DMatrix::zeros(2, 1));
        assert_eq!(quality_q(&data, &s, &d, &zero).unwrap(), 0.0);
    }

    #[test]
    fn generator_rejects_low_dim() {
        assert!(gen_clusters(1, 10, 0).is_err());
    }

    #[test]
    fn csv_loader() {
        let text = "1.0, 2.0, g\n3.0, 4.0, b\n# note\n\n5.0, 6.0, g\n";
        let data = load_labeled_csv(text.as_bytes()).unwrap();
        assert_eq!(data.len(), 3);
        assert_eq!(data.labels, vec![0, 1, 0]);
        assert_eq!(data.points[(2, 1)], 6.0);
        assert!(load_labeled_csv("1,2,a\n1,a\n".as_bytes()).is_err());
    }

    #[test]
    fn stratified_keeps_class_shares() {
        let labels: Vec<i64> = (0..100).map(|i| if i < 64 { 1 } else { 2 }).collect();
        let data = LabeledPoints::new(DMatrix::zeros(100, 2), labels).unwrap();
        let sub = data.stratified_subsample(50, 3).unwrap();
        assert_eq!(sub.len(), 50);
        assert_eq!(sub.labels.iter().filter(|&&l| l == 1).count(), 32);
        assert_eq!(sub, data.stratified_subsample(50, 3).unwrap());
    }
}
