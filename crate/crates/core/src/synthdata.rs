//! Tree-structured synthetic classification data and the embedding text format.
//!
//! A prototype tree of the given depth and branching factor is grown from the
//! origin: every child sits at its parent plus `level_scales[level]` times a
//! uniformly random unit direction. Leaves are the classes, and each class
//! sample is its leaf prototype plus isotropic gaussian noise. Classes that
//! share an ancestor are therefore closer than classes that do not.
//!
//! All randomness comes from `ChaCha8Rng` seeded through `seed_from_u64`,
//! which is portable across platforms.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::matrix::Matrix;
use crate::metrics::Trial;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("{path}:{line}: {msg}")]
    Format { path: String, line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

const MAX_CLASSES: usize = 1 << 31;

/// Shape and randomness of a synthetic hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeSpec {
    pub depth: usize,
    pub branching: usize,
    pub dim: usize,
    /// Offset magnitude per level, root children first.
    pub level_scales: Vec<f64>,
    pub noise_sigma: f64,
    pub samples_per_class: usize,
    pub seed: u64,
}

impl Default for TreeSpec {
    fn default() -> Self {
        Self {
            depth: 2,
            branching: 8,
            dim: 32,
            level_scales: vec![1.0, 0.3],
            noise_sigma: 0.1,
            samples_per_class: 50,
            seed: 7,
        }
    }
}

impl TreeSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let arg = |m: String| Err(DataError::Argument(m));
        if self.depth == 0 {
            return arg("depth must be at least 1".into());
        }
        if self.branching == 0 {
            return arg("branching must be at least 1".into());
        }
        if self.dim == 0 {
            return arg("dim must be at least 1".into());
        }
        if self.samples_per_class == 0 {
            return arg("samples_per_class must be at least 1".into());
        }
        if self.level_scales.len() != self.depth {
            return arg(format!(
                "level_scales has {} entries, depth is {}",
                self.level_scales.len(),
                self.depth
            ));
        }
        if !self.level_scales.iter().all(|&s| s > 0.0 && s.is_finite()) {
            return arg("level_scales must be positive".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return arg("noise_sigma must be nonnegative".into());
        }
        let classes = self.num_classes()?;
        if classes.checked_mul(self.samples_per_class).is_none() {
            return arg("sample count overflows".into());
        }
        if self.level_scales.windows(2).any(|w| w[1] >= w[0]) {
            warn!("level_scales {:?} are not strictly decreasing", self.level_scales);
        }
        Ok(())
    }

    /// `branching^depth`, capped at 2^31.
    pub fn num_classes(&self) -> Result<usize, DataError> {
        u32::try_from(self.depth)
            .ok()
            .and_then(|d| self.branching.checked_pow(d))
            .filter(|&n| n <= MAX_CLASSES)
            .ok_or_else(|| {
                DataError::Argument(format!(
                    "{}^{} classes exceeds the 2^31 limit",
                    self.branching, self.depth
                ))
            })
    }
}

/// Leaf prototypes of a generated tree, in lexicographic path order.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeTree {
    pub leaves: Matrix<f64>,
    /// Child index at each level, root side first.
    pub paths: Vec<Vec<usize>>,
}

impl PrototypeTree {
    /// Mean distance between leaves under different root children divided by
    /// the mean distance between distinct leaves under the same one. `None`
    /// when either set of pairs is empty.
    pub fn hierarchy_ratio(&self) -> Option<f64> {
        let (mut intra, mut n_intra, mut cross, mut n_cross) = (0.0, 0usize, 0.0, 0usize);
        for a in 0..self.paths.len() {
            for b in a + 1..self.paths.len() {
                let d = crate::scalar::dist_sq(self.leaves.row(a), self.leaves.row(b)).sqrt();
                if self.paths[a][0] == self.paths[b][0] {
                    intra += d;
                    n_intra += 1;
                } else {
                    cross += d;
                    n_cross += 1;
                }
            }
        }
        (n_intra > 0 && n_cross > 0).then(|| (cross / n_cross as f64) / (intra / n_intra as f64))
    }
}

/// Labeled vectors. `class_tree` maps each leaf class to its ancestor path and
/// is empty for datasets loaded from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub vectors: Matrix<f64>,
    pub labels: Vec<usize>,
    pub class_tree: BTreeMap<usize, Vec<usize>>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    /// One more than the largest label.
    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m + 1)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            vectors: self.vectors.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            class_tree: self.class_tree.clone(),
        }
    }
}

fn unit_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|a| a / n).collect();
        }
    }
}

fn grow_tree(spec: &TreeSpec, rng: &mut ChaCha8Rng) -> PrototypeTree {
    let mut level: Vec<(Vec<f64>, Vec<usize>)> = vec![(vec![0.0; spec.dim], Vec::new())];
    for &scale in &spec.level_scales {
        let mut next = Vec::with_capacity(level.len() * spec.branching);
        for (proto, path) in &level {
            for k in 0..spec.branching {
                let u = unit_direction(rng, spec.dim);
                let child: Vec<f64> = proto.iter().zip(&u).map(|(p, d)| p + scale * d).collect();
                let mut child_path = path.clone();
                child_path.push(k);
                next.push((child, child_path));
            }
        }
        level = next;
    }
    let (protos, paths): (Vec<_>, Vec<_>) = level.into_iter().unzip();
    PrototypeTree {
        leaves: Matrix::from_rows(&protos).expect("uniform dimension"),
        paths,
    }
}

/// The prototype tree [`generate`] would sample from.
pub fn prototype_tree(spec: &TreeSpec) -> Result<PrototypeTree, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok(grow_tree(spec, &mut rng))
}

/// Samples `samples_per_class` noisy points around every leaf, class by class.
pub fn generate(spec: &TreeSpec) -> Result<LabeledDataset, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let tree = grow_tree(spec, &mut rng);
    let classes = tree.paths.len();
    let n = classes * spec.samples_per_class;
    let mut vectors = Matrix::zeros(n, spec.dim);
    let mut labels = Vec::with_capacity(n);
    for class in 0..classes {
        let leaf = tree.leaves.row(class);
        for s in 0..spec.samples_per_class {
            let row = vectors.row_mut(class * spec.samples_per_class + s);
            for (v, &p) in row.iter_mut().zip(leaf) {
                let z: f64 = rng.sample(StandardNormal);
                *v = p + spec.noise_sigma * z;
            }
            labels.push(class);
        }
    }
    let class_tree = tree.paths.into_iter().enumerate().collect();
    Ok(LabeledDataset {
        vectors,
        labels,
        class_tree,
    })
}

/// Serializes as `<label> <v1> ... <vd>` per line. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn format_embeddings(ds: &LabeledDataset) -> String {
    let mut out = String::with_capacity(ds.len() * (ds.dim() * 20 + 4));
    for (row, &label) in ds.vectors.iter_rows().zip(&ds.labels) {
        let _ = write!(out, "{label}");
        for v in row {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    out
}

pub fn save_embeddings(ds: &LabeledDataset, path: &Path) -> Result<(), DataError> {
    fs::write(path, format_embeddings(ds)).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parses the embedding text format. `origin` names the source in errors.
pub fn parse_embeddings(text: &str, origin: &str) -> Result<LabeledDataset, DataError> {
    let err = |line: usize, msg: String| DataError::Format {
        path: origin.to_string(),
        line,
        msg,
    };
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut dim = None;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let mut fields = line.split_whitespace();
        let Some(label) = fields.next() else { continue };
        let label: usize = label
            .parse()
            .map_err(|_| err(lineno, format!("label `{label}` is not a nonnegative integer")))?;
        let start = data.len();
        for f in fields {
            let v: f64 = f.parse().map_err(|_| err(lineno, format!("value `{f}` is not a number")))?;
            if !v.is_finite() {
                return Err(err(lineno, format!("value `{f}` is not finite")));
            }
            data.push(v);
        }
        let width = data.len() - start;
        match dim {
            None if width == 0 => return Err(err(lineno, "row has no vector components".into())),
            None => dim = Some(width),
            Some(d) if d != width => {
                return Err(err(lineno, format!("row has {width} components, expected {d}")));
            }
            Some(_) => {}
        }
        labels.push(label);
    }
    let Some(dim) = dim else {
        return Err(err(0, "file contains no rows".into()));
    };
    Ok(LabeledDataset {
        vectors: Matrix::from_vec(labels.len(), dim, data).expect("rows checked"),
        labels,
        class_tree: BTreeMap::new(),
    })
}

pub fn load_embeddings(path: &Path) -> Result<LabeledDataset, DataError> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_embeddings(&text, &path.display().to_string())
}

/// Parameters of the train / held-out split and of trial construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_frac: f64,
    /// Target and non-target trials drawn per class.
    pub trials_per_class: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.5,
            trials_per_class: 50,
            seed: 7,
        }
    }
}

/// A verification trial between two held-out rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialPair {
    pub enroll: usize,
    pub test: usize,
    pub target: bool,
}

/// Held-out vectors and the trials defined over them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSet {
    pub heldout: LabeledDataset,
    pub pairs: Vec<TrialPair>,
}

impl TrialSet {
    /// Utterance id of a held-out row in trial files.
    pub fn utterance_id(row: usize) -> String {
        format!("u{row}")
    }

    pub fn to_trials(&self) -> Vec<Trial> {
        self.pairs
            .iter()
            .map(|p| Trial {
                target: p.target,
                enroll: Self::utterance_id(p.enroll),
                test: Self::utterance_id(p.test),
            })
            .collect()
    }

    pub fn num_targets(&self) -> usize {
        self.pairs.iter().filter(|p| p.target).count()
    }
}

/// [`split_with`] using the default trial count per class.
pub fn split(ds: &LabeledDataset, train_frac: f64, seed: u64) -> Result<(LabeledDataset, TrialSet), DataError> {
    split_with(
        ds,
        &SplitSpec {
            train_frac,
            seed,
            ..SplitSpec::default()
        },
    )
}

/// Stratified split. Each class keeps `round(train_frac · n_c)` rows for
/// training; from the rest, up to `trials_per_class` same-class pairs become
/// target trials and as many cross-class pairs become non-target trials.
pub fn split_with(ds: &LabeledDataset, spec: &SplitSpec) -> Result<(LabeledDataset, TrialSet), DataError> {
    if !(spec.train_frac > 0.0 && spec.train_frac < 1.0) {
        return Err(DataError::Argument(format!("train_frac must lie in (0, 1), got {}", spec.train_frac)));
    }
    if ds.is_empty() {
        return Err(DataError::Argument("cannot split an empty dataset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let classes = ds.num_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut train_idx = Vec::new();
    let mut held_idx = Vec::new();
    // held-out row range per class inside the held-out dataset
    let mut held_ranges = Vec::with_capacity(classes);
    for rows in &mut by_class {
        rows.shuffle(&mut rng);
        let k = ((spec.train_frac * rows.len() as f64).round() as usize).min(rows.len());
        let (tr, ho) = rows.split_at(k);
        let mut tr = tr.to_vec();
        let mut ho = ho.to_vec();
        tr.sort_unstable();
        ho.sort_unstable();
        train_idx.extend(tr);
        let start = held_idx.len();
        held_idx.extend(ho);
        held_ranges.push(start..held_idx.len());
    }
    train_idx.sort_unstable();

    let mut pairs = Vec::new();
    for (class, range) in held_ranges.iter().enumerate() {
        let rows: Vec<usize> = range.clone().collect();
        if rows.is_empty() {
            continue;
        }
        if rows.len() < 2 {
            warn!("class {class} has fewer than 2 held-out samples; it contributes no target trials");
        } else {
            let mut same: Vec<(usize, usize)> = Vec::new();
            for a in 0..rows.len() {
                for b in a + 1..rows.len() {
                    same.push((rows[a], rows[b]));
                }
            }
            same.shuffle(&mut rng);
            pairs.extend(same.into_iter().take(spec.trials_per_class).map(|(enroll, test)| TrialPair {
                enroll,
                test,
                target: true,
            }));
        }
        let others: Vec<usize> = (0..held_idx.len()).filter(|r| !range.contains(r)).collect();
        if others.is_empty() {
            continue;
        }
        for _ in 0..spec.trials_per_class {
            let enroll = rows[rng.random_range(0..rows.len())];
            let test = others[rng.random_range(0..others.len())];
            pairs.push(TrialPair {
                enroll,
                test,
                target: false,
            });
        }
    }
    Ok((
        ds.subset(&train_idx),
        TrialSet {
            heldout: ds.subset(&held_idx),
            pairs,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(depth: usize, branching: usize, spc: usize, noise: f64) -> TreeSpec {
        TreeSpec {
            depth,
            branching,
            dim: 6,
            level_scales: (0..depth).map(|l| 0.3f64.powi(l as i32)).collect(),
            noise_sigma: noise,
            samples_per_class: spc,
            seed: 42,
        }
    }

    #[test]
    fn noiseless_classes_collapse_to_prototypes() {
        let ds = generate(&small(1, 2, 5, 0.0)).unwrap();
        assert_eq!(ds.len(), 10);
        let mut distinct: Vec<Vec<u64>> = ds
            .vectors
            .iter_rows()
            .map(|r| r.iter().map(|v| v.to_bits()).collect())
            .collect();
        distinct.sort();
        distinct.dedup();
        assert_eq!(distinct.len(), 2);
        for (r, &l) in ds.vectors.iter_rows().zip(&ds.labels) {
            assert_eq!(r, ds.vectors.row(l * 5));
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let spec = small(2, 3, 4, 0.1);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let mut other = spec.clone();
        other.seed += 1;
        assert_ne!(generate(&spec).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn default_spec_shape_and_balance() {
        let ds = generate(&TreeSpec::default()).unwrap();
        assert_eq!(ds.len(), 3200);
        assert_eq!(ds.dim(), 32);
        assert_eq!(ds.class_counts(), vec![50; 64]);
        assert_eq!(ds.class_tree.len(), 64);
        assert_eq!(ds.class_tree[&9], vec![1, 1]);
    }

    #[test]
    fn sixteen_class_tree_is_hierarchical() {
        let spec = TreeSpec {
            depth: 2,
            branching: 4,
            level_scales: vec![1.0, 0.3],
            ..TreeSpec::default()
        };
        let tree = prototype_tree(&spec).unwrap();
        assert_eq!(tree.paths.len(), 16);
        assert!(tree.hierarchy_ratio().unwrap() > 1.0);
    }

    #[test]
    fn invalid_specs() {
        let s = TreeSpec {
            level_scales: vec![1.0],
            ..TreeSpec::default()
        };
        assert!(s.validate().is_err());
        let s = TreeSpec {
            depth: 32,
            branching: 2,
            level_scales: vec![1.0; 32],
            ..TreeSpec::default()
        };
        assert!(matches!(s.validate(), Err(DataError::Argument(_))));
        let s = TreeSpec {
            depth: 31,
            branching: 2,
            level_scales: vec![1.0; 31],
            ..TreeSpec::default()
        };
        assert_eq!(s.num_classes().unwrap(), 1 << 31);
    }

    #[test]
    fn parse_errors_name_lines() {
        let e = parse_embeddings("0 1 2 3\n1 1 2\n", "f.txt").unwrap_err();
        assert_eq!(e.to_string(), "f.txt:2: row has 2 components, expected 3");
        let e = parse_embeddings("0 1 x 3\n", "f.txt").unwrap_err();
        assert!(matches!(e, DataError::Format { line: 1, .. }));
        let e = parse_embeddings("-1 1 2\n", "f.txt").unwrap_err();
        assert!(e.to_string().contains("label"));
        assert!(parse_embeddings("\n\n", "f.txt").is_err());
        let ds = parse_embeddings("0 0.5 1 2\n3 1e-3 -2 7\n", "f.txt").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dim(), 3);
        assert_eq!(ds.labels, vec![0, 3]);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let ds = generate(&small(2, 2, 3, 0.37)).unwrap();
        let back = parse_embeddings(&format_embeddings(&ds), "mem").unwrap();
        assert_eq!(back.vectors, ds.vectors);
        assert_eq!(back.labels, ds.labels);
    }

    #[test]
    fn split_is_stratified_and_deterministic() {
        let ds = generate(&small(2, 3, 10, 0.1)).unwrap();
        let (train, trials) = split(&ds, 0.5, 3).unwrap();
        assert_eq!(train.class_counts(), vec![5; 9]);
        assert_eq!(trials.heldout.class_counts(), vec![5; 9]);
        let (train2, trials2) = split(&ds, 0.5, 3).unwrap();
        assert_eq!(train, train2);
        assert_eq!(trials, trials2);
        for p in &trials.pairs {
            let same = trials.heldout.labels[p.enroll] == trials.heldout.labels[p.test];
            assert_eq!(same, p.target);
        }
        // 5 held-out rows give 10 distinct same-class pairs per class
        assert_eq!(trials.num_targets(), 9 * 10);
        assert_eq!(trials.pairs.len() - trials.num_targets(), 9 * 50);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let ds = generate(&small(1, 2, 4, 0.1)).unwrap();
        assert!(split(&ds, 0.0, 1).is_err());
        assert!(split(&ds, 1.0, 1).is_err());
    }

    #[test]
    fn sparse_classes_contribute_no_targets() {
        let ds = generate(&small(1, 3, 2, 0.1)).unwrap();
        let (_, trials) = split(&ds, 0.5, 1).unwrap();
        assert_eq!(trials.num_targets(), 0);
        assert!(!trials.pairs.is_empty());
    }
}
