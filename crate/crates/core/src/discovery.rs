//! Dominant gesture discovery: K-means over pose vectors and the gesture
//! library built from the cluster exemplars.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{parse_json, Error, Result};
use crate::pose::PoseVector;

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_EPS: f64 = 0.001;
pub const DEFAULT_MAX_ITER: usize = 300;

/// Gesture names for the nine dominant gestures, in BAP coding.
pub const DEFAULT_GESTURE_NAMES: [&str; 9] = [
    "A hold A front",
    "AA front",
    "RA Waits-T + LA front-T",
    "LA side-T + RA side-T",
    "LA front + RA front",
    "LA side + RA front",
    "LA Side + RH Waist-T",
    "LA Side + RA front-T",
    "LH pocket-T + RH pocket-T",
];

pub fn default_gesture_names() -> Vec<String> {
    DEFAULT_GESTURE_NAMES
        .iter()
        .map(|s| s.to_string())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KMeansConfig {
    pub k: usize,
    pub eps: f64,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: DEFAULT_K,
            eps: DEFAULT_EPS,
            seed: 0,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl KMeansConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub centers: Vec<PoseVector>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Inertia measured after every assignment step, final pass included.
    pub inertia_history: Vec<f64>,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignments
            .iter()
            .enumerate()
            .filter(move |(_, &a)| a == cluster)
            .map(|(i, _)| i)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest center for every point, lowest index on ties.
fn assign(points: &[&[f64]], centers: &[Vec<f64>]) -> Vec<(usize, f64)> {
    points
        .par_iter()
        .map(|p| {
            let mut best = (0, sq_dist(p, &centers[0]));
            for (j, c) in centers.iter().enumerate().skip(1) {
                let d = sq_dist(p, c);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best
        })
        .collect()
}

fn check_input(vectors: &[PoseVector], k: usize) -> Result<usize> {
    let dim = vectors.first().map(PoseVector::dim).unwrap_or(0);
    for v in vectors {
        if v.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: v.dim(),
            });
        }
        if v.0.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidRecord(
                "pose vector has non-finite components".into(),
            ));
        }
    }
    let distinct: BTreeSet<Vec<u64>> = vectors
        .iter()
        .map(|v| v.0.iter().map(|x| (x + 0.0).to_bits()).collect())
        .collect();
    if distinct.len() < k {
        return Err(Error::InsufficientPoints {
            k,
            distinct: distinct.len(),
        });
    }
    Ok(dim)
}

/// k-means++ seeding driven by a seeded ChaCha stream.
fn plus_plus_init(points: &[&[f64]], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = points.len();
    let mut centers = vec![points[rng.random_range(0..n)].to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            if acc > target {
                pick = Some(i);
                break;
            }
        }
        // Rounding can leave the target past the running sum: take the last positive weight.
        let pick = pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap_or(0));
        let c = points[pick].to_vec();
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}

/// Runs K-means with k-means++ seeding.
pub fn kmeans(vectors: &[PoseVector], cfg: &KMeansConfig) -> Result<Clustering> {
    cfg.validate()?;
    check_input(vectors, cfg.k)?;
    let points: Vec<&[f64]> = vectors.iter().map(PoseVector::as_slice).collect();
    let init = plus_plus_init(&points, cfg.k, cfg.seed);
    Ok(lloyd(&points, init, cfg))
}

/// Runs Lloyd iterations from caller-supplied initial centers.
pub fn kmeans_from_centers(
    vectors: &[PoseVector],
    initial: &[PoseVector],
    cfg: &KMeansConfig,
) -> Result<Clustering> {
    let cfg = KMeansConfig {
        k: initial.len(),
        ..*cfg
    };
    cfg.validate()?;
    let dim = check_input(vectors, cfg.k)?;
    if let Some(c) = initial.iter().find(|c| c.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: c.dim(),
        });
    }
    let points: Vec<&[f64]> = vectors.iter().map(PoseVector::as_slice).collect();
    let init = initial.iter().map(|c| c.0.clone()).collect();
    Ok(lloyd(&points, init, &cfg))
}

fn lloyd(points: &[&[f64]], mut centers: Vec<Vec<f64>>, cfg: &KMeansConfig) -> Clustering {
    let k = centers.len();
    let dim = points[0].len();
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut assigned = assign(points, &centers);

    while iterations < cfg.max_iter {
        history.push(assigned.iter().map(|a| a.1).sum());
        iterations += 1;

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &(c, _)) in points.iter().zip(&assigned) {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(p.iter()) {
                *s += x;
            }
        }
        let mut next: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .zip(&centers)
            .map(|((s, &n), old)| {
                if n == 0 {
                    old.clone()
                } else {
                    s.into_iter().map(|x| x / n as f64).collect()
                }
            })
            .collect();

        // Empty clusters take over the point farthest from its new center,
        // never emptying a donor cluster.
        let mut taken = vec![false; points.len()];
        for empty in 0..k {
            if counts[empty] != 0 {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for (i, (p, &(c, _))) in points.iter().zip(&assigned).enumerate() {
                if taken[i] || counts[c] < 2 {
                    continue;
                }
                let d = sq_dist(p, &next[c]);
                if best.is_none_or(|(_, bd)| d > bd) {
                    best = Some((i, d));
                }
            }
            if let Some((i, _)) = best {
                taken[i] = true;
                counts[assigned[i].0] -= 1;
                counts[empty] = 1;
                next[empty] = points[i].to_vec();
            }
        }

        let shift = centers
            .iter()
            .zip(&next)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centers = next;
        assigned = assign(points, &centers);
        if shift < cfg.eps {
            break;
        }
    }

    let inertia = assigned.iter().map(|a| a.1).sum();
    history.push(inertia);
    Clustering {
        centers: centers.into_iter().map(PoseVector).collect(),
        assignments: assigned.into_iter().map(|a| a.0).collect(),
        inertia,
        iterations,
        seed: cfg.seed,
        inertia_history: history,
    }
}

/// Cluster with the largest mean member-to-center distance (lowest index on ties).
///
/// Needs the clustered vectors to measure spread; empty clusters have spread zero.
pub fn find_residual_cluster(c: &Clustering, vectors: &[PoseVector]) -> usize {
    let k = c.k();
    let mut sum = vec![0.0; k];
    let mut count = vec![0usize; k];
    for (v, &a) in vectors.iter().zip(&c.assignments) {
        sum[a] += sq_dist(&v.0, &c.centers[a].0).sqrt();
        count[a] += 1;
    }
    let mut best = (0, f64::NEG_INFINITY);
    for j in 0..k {
        let spread = if count[j] == 0 {
            0.0
        } else {
            sum[j] / count[j] as f64
        };
        if spread > best.1 {
            best = (j, spread);
        }
    }
    best.0
}

/// Member closest to the cluster center, lowest frame id on ties.
pub fn nearest_exemplar(
    c: &Clustering,
    cluster: usize,
    vectors: &[PoseVector],
    frame_ids: &[i64],
) -> Result<(PoseVector, i64)> {
    let center = &c
        .centers
        .get(cluster)
        .ok_or(Error::EmptyCluster(cluster))?
        .0;
    let mut best: Option<(usize, f64)> = None;
    for i in c.members(cluster) {
        let d = sq_dist(&vectors[i].0, center);
        let better = match best {
            None => true,
            Some((bi, bd)) => d < bd || (d == bd && frame_ids[i] < frame_ids[bi]),
        };
        if better {
            best = Some((i, d));
        }
    }
    let (i, _) = best.ok_or(Error::EmptyCluster(cluster))?;
    Ok((vectors[i].clone(), frame_ids[i]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GestureTemplate {
    pub name: String,
    pub exemplar: PoseVector,
    pub source_frame_id: i64,
    #[serde(default)]
    pub joint_angles: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GestureLibrary {
    pub templates: Vec<GestureTemplate>,
    pub residual_index: usize,
}

impl GestureLibrary {
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.templates.iter().map(|t| t.name.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names().any(|n| n == name)
    }

    pub fn from_json(raw: &[u8]) -> Result<Self> {
        let lib: GestureLibrary = parse_json(raw)?;
        check_names(lib.names())?;
        Ok(lib)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_names<'a>(names: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = BTreeSet::new();
    for n in names {
        if n.is_empty() {
            return Err(Error::InvalidNames("empty gesture name".into()));
        }
        if !seen.insert(n) {
            return Err(Error::InvalidNames(format!("duplicate name `{n}`")));
        }
    }
    Ok(())
}

/// Builds a library from every non-residual cluster, names assigned in cluster order.
pub fn build_library(
    c: &Clustering,
    vectors: &[PoseVector],
    frame_ids: &[i64],
    names: &[String],
) -> Result<GestureLibrary> {
    if vectors.len() != c.assignments.len() || frame_ids.len() != vectors.len() {
        return Err(Error::InvalidRecord(
            "vectors, frame ids and assignments differ in length".into(),
        ));
    }
    if names.len() + 1 != c.k() {
        return Err(Error::InvalidNames(format!(
            "expected {} names for k = {}, got {}",
            c.k().saturating_sub(1),
            c.k(),
            names.len()
        )));
    }
    check_names(names.iter().map(String::as_str))?;
    let residual = find_residual_cluster(c, vectors);
    let mut templates = Vec::with_capacity(names.len());
    let clusters = (0..c.k()).filter(|&j| j != residual);
    for (cluster, name) in clusters.zip(names) {
        let (exemplar, source_frame_id) = nearest_exemplar(c, cluster, vectors, frame_ids)?;
        templates.push(GestureTemplate {
            name: name.clone(),
            exemplar,
            source_frame_id,
            joint_angles: BTreeMap::new(),
        });
    }
    Ok(GestureLibrary {
        templates,
        residual_index: residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn pv(xs: &[f64]) -> PoseVector {
        PoseVector(xs.to_vec())
    }

    /// Minimum SSE over every assignment of points to k labels.
    fn exhaustive_optimum(points: &[PoseVector], k: usize) -> (f64, Vec<usize>) {
        let n = points.len();
        let dim = points[0].dim();
        let mut best = (f64::INFINITY, vec![]);
        let total = k.pow(n as u32);
        for code in 0..total {
            let mut labels = Vec::with_capacity(n);
            let mut c = code;
            for _ in 0..n {
                labels.push(c % k);
                c /= k;
            }
            let mut sse = 0.0;
            let mut ok = true;
            for j in 0..k {
                let members: Vec<_> = (0..n).filter(|&i| labels[i] == j).collect();
                if members.is_empty() {
                    ok = false;
                    break;
                }
                let mut mean = vec![0.0; dim];
                for &i in &members {
                    for (m, x) in mean.iter_mut().zip(&points[i].0) {
                        *m += x / members.len() as f64;
                    }
                }
                for &i in &members {
                    sse += (0..dim)
                        .map(|d| (points[i].0[d] - mean[d]).powi(2))
                        .sum::<f64>();
                }
            }
            if ok && sse < best.0 {
                best = (sse, labels);
            }
        }
        best
    }

    #[test]
    fn two_obvious_clusters() {
        let pts = vec![
            pv(&[0.0, 0.0]),
            pv(&[0.0, 1.0]),
            pv(&[10.0, 0.0]),
            pv(&[10.0, 1.0]),
        ];
        let (opt, _) = exhaustive_optimum(&pts, 2);
        assert_eq!(opt, 1.0);
        let cfg = KMeansConfig {
            k: 2,
            seed: 3,
            ..Default::default()
        };
        let c = kmeans(&pts, &cfg).unwrap();
        let mut centers: Vec<_> = c.centers.iter().map(|v| v.0.clone()).collect();
        centers.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(centers, vec![vec![0.0, 0.5], vec![10.0, 0.5]]);
        assert_eq!(c.inertia, 1.0);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = vec![pv(&[1.0, 2.0]), pv(&[3.0, 6.0]), pv(&[5.0, 1.0])];
        let c = kmeans(
            &pts,
            &KMeansConfig {
                k: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(c.centers[0].0, vec![3.0, 3.0]);
    }

    #[test]
    fn defaults_follow_the_dominant_gesture_setup() {
        let cfg = KMeansConfig::default();
        assert_eq!(cfg.k, 10);
        assert_eq!(cfg.eps, 0.001);
        assert_eq!(cfg.max_iter, 300);
    }

    #[test]
    fn too_few_distinct_points() {
        let pts = vec![pv(&[1.0]), pv(&[1.0]), pv(&[2.0])];
        let err = kmeans(
            &pts,
            &KMeansConfig {
                k: 3,
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::InsufficientPoints { k: 3, distinct: 2 }
        ));
    }

    #[test]
    fn mixed_dimensions_rejected() {
        let pts = vec![pv(&[1.0, 2.0]), pv(&[1.0])];
        let err = kmeans(
            &pts,
            &KMeansConfig {
                k: 1,
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn residual_is_the_diffuse_cluster() {
        // cluster 0: tight around 0 (spread 0.1); cluster 1: diffuse around 100 (spread 5)
        let pts = vec![pv(&[-0.1]), pv(&[0.1]), pv(&[95.0]), pv(&[105.0])];
        let c = kmeans_from_centers(&pts, &[pv(&[0.0]), pv(&[100.0])], &KMeansConfig::default())
            .unwrap();
        assert_eq!(c.assignments, vec![0, 0, 1, 1]);
        assert_eq!(find_residual_cluster(&c, &pts), 1);
    }

    #[test]
    fn residual_ties_resolve_to_lowest_index() {
        let pts = vec![pv(&[0.0]), pv(&[5.0]), pv(&[9.0])];
        let c = kmeans(
            &pts,
            &KMeansConfig {
                k: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(find_residual_cluster(&c, &pts), 0);
        let c = kmeans(
            &pts,
            &KMeansConfig {
                k: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(find_residual_cluster(&c, &pts), 0);
    }

    fn fixed_clustering(centers: Vec<PoseVector>, assignments: Vec<usize>) -> Clustering {
        Clustering {
            centers,
            assignments,
            inertia: 0.0,
            iterations: 0,
            seed: 0,
            inertia_history: vec![],
        }
    }

    #[test]
    fn exemplar_examples() {
        let pts = vec![pv(&[1.0, 0.0]), pv(&[3.0, 0.0])];
        let c = fixed_clustering(vec![pv(&[0.0, 0.0])], vec![0, 0]);
        assert_eq!(
            nearest_exemplar(&c, 0, &pts, &[10, 11]).unwrap(),
            (pv(&[1.0, 0.0]), 10)
        );

        let c = fixed_clustering(vec![pv(&[0.0, 0.0]), pv(&[3.0, 0.0])], vec![0, 1]);
        assert_eq!(
            nearest_exemplar(&c, 1, &pts, &[10, 11]).unwrap(),
            (pv(&[3.0, 0.0]), 11)
        );

        let pts = vec![pv(&[1.0]), pv(&[-1.0])];
        let c = fixed_clustering(vec![pv(&[0.0])], vec![0, 0]);
        assert_eq!(nearest_exemplar(&c, 0, &pts, &[8, 4]).unwrap().1, 4);

        let c = fixed_clustering(vec![pv(&[0.0]), pv(&[9.0])], vec![0, 0]);
        assert!(matches!(
            nearest_exemplar(&c, 1, &pts, &[8, 4]),
            Err(Error::EmptyCluster(1))
        ));
    }

    fn ten_blobs() -> (Vec<PoseVector>, Vec<i64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut pts = Vec::new();
        for blob in 0..10 {
            let spread = if blob == 4 { 12.0 } else { 0.5 };
            for _ in 0..20 {
                let v: Vec<f64> = (0..8)
                    .map(|d| (blob * 40) as f64 + d as f64 + rng.random_range(-spread..spread))
                    .collect();
                pts.push(PoseVector(v));
            }
        }
        let ids = (0..pts.len() as i64).collect();
        (pts, ids)
    }

    #[test]
    fn library_of_nine_from_ten_clusters() {
        let (pts, ids) = ten_blobs();
        let c = kmeans(
            &pts,
            &KMeansConfig {
                seed: 5,
                ..Default::default()
            },
        )
        .unwrap();
        let lib = build_library(&c, &pts, &ids, &default_gesture_names()).unwrap();
        assert_eq!(lib.templates.len(), 9);
        assert!(lib.residual_index < 10);
        let back = GestureLibrary::from_json(lib.to_json().unwrap().as_bytes()).unwrap();
        assert_eq!(back, lib);
    }

    #[test]
    fn smallest_library() {
        let pts = vec![pv(&[0.0]), pv(&[0.2]), pv(&[10.0]), pv(&[20.0])];
        let c = kmeans(
            &pts,
            &KMeansConfig {
                k: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let lib = build_library(&c, &pts, &[0, 1, 2, 3], &["only".to_string()]).unwrap();
        assert_eq!(lib.templates.len(), 1);
    }

    #[test]
    fn library_name_errors() {
        let pts = vec![pv(&[0.0]), pv(&[10.0]), pv(&[20.0])];
        let c = kmeans(
            &pts,
            &KMeansConfig {
                k: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let dup = vec!["a".to_string(), "a".to_string()];
        assert!(matches!(
            build_library(&c, &pts, &[0, 1, 2], &dup),
            Err(Error::InvalidNames(_))
        ));
        let short = vec!["a".to_string()];
        assert!(matches!(
            build_library(&c, &pts, &[0, 1, 2], &short),
            Err(Error::InvalidNames(_))
        ));
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let (pts, _) = ten_blobs();
        let cfg = KMeansConfig {
            seed: 17,
            ..Default::default()
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| kmeans(&pts, &cfg).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn empty_clusters_are_reseeded() {
        // Start two centers far from all data; both clusters must end non-empty.
        let pts = vec![pv(&[0.0]), pv(&[1.0]), pv(&[2.0]), pv(&[3.0])];
        let c = kmeans_from_centers(
            &pts,
            &[pv(&[1.5]), pv(&[100.0]), pv(&[200.0])],
            &KMeansConfig::default(),
        )
        .unwrap();
        for j in 0..3 {
            assert!(c.members(j).count() > 0, "cluster {j} empty");
        }
        assert!(c.inertia_history.windows(2).all(|w| w[1] <= w[0]));
    }

    proptest! {
        #[test]
        fn lloyd_never_beats_the_exhaustive_optimum(
            raw in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 2), 4..=8),
            seed in any::<u64>(),
        ) {
            let pts: Vec<PoseVector> = raw.into_iter().map(PoseVector).collect();
            let cfg = KMeansConfig { k: 2, seed, ..Default::default() };
            let c = kmeans(&pts, &cfg).unwrap();
            let (opt, _) = exhaustive_optimum(&pts, 2);
            prop_assert!(c.inertia >= opt - 1e-9);
            prop_assert!(c.inertia_history.windows(2).all(|w| w[1] <= w[0] + 1e-9));
            for (i, p) in pts.iter().enumerate() {
                let mine = sq_dist(&p.0, &c.centers[c.assignments[i]].0);
                for center in &c.centers {
                    prop_assert!(mine <= sq_dist(&p.0, &center.0));
                }
            }
        }
    }
}
