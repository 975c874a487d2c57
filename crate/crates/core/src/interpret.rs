//! Parameter export, k-means over profile embeddings and a 2-D PCA projection.

use std::collections::BTreeMap;

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ChoiceRecord, SocioDemographics, DIMENSION_NAMES};
use crate::error::{Error, Result};
use crate::loading::{embed, param_label, EmbeddingParams, OFFSETS};
use crate::seeding;

pub const DEFAULT_CLUSTERS: usize = 6;
pub const DEFAULT_RESTARTS: usize = 10;
const MAX_LLOYD_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub index: usize,
    pub variable: String,
    pub label: String,
    pub value: f64,
}

/// Every β entry with its variable and category label, e.g. `age/55-65`.
pub fn export_params(params: &EmbeddingParams) -> Vec<ParamEntry> {
    params
        .flat()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let m = OFFSETS.iter().rposition(|o| *o <= i).expect("index in range");
            ParamEntry {
                index: i,
                variable: DIMENSION_NAMES[m].into(),
                label: param_label(i),
                value: *v,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub profile: SocioDemographics,
    pub embedding: [f64; 4],
    pub count: usize,
}

/// One row per distinct profile, in profile order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEmbeddingTable {
    pub rows: Vec<ProfileRow>,
}

impl ProfileEmbeddingTable {
    pub fn from_profiles<'a>(
        profiles: impl IntoIterator<Item = &'a SocioDemographics>,
        params: &EmbeddingParams,
    ) -> Self {
        let mut counts: BTreeMap<SocioDemographics, usize> = BTreeMap::new();
        for d in profiles {
            *counts.entry(*d).or_default() += 1;
        }
        ProfileEmbeddingTable {
            rows: counts
                .into_iter()
                .map(|(profile, count)| ProfileRow {
                    profile,
                    embedding: embed(&profile, params).0,
                    count,
                })
                .collect(),
        }
    }

    pub fn from_records(records: &[ChoiceRecord], params: &EmbeddingParams) -> Self {
        Self::from_profiles(records.iter().map(|r| &r.demographics), params)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Embeddings scaled to unit length; zero vectors stay zero.
    pub fn normalized(&self) -> Vec<[f64; 4]> {
        self.rows
            .iter()
            .map(|r| {
                let n = r.embedding.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > 0.0 {
                    r.embedding.map(|x| x / n)
                } else {
                    r.embedding
                }
            })
            .collect()
    }
}

fn dist2(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    (0..4).map(|i| (a[i] - b[i]).powi(2)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansRun {
    pub assignments: Vec<usize>,
    pub centroids: Vec<[f64; 4]>,
    pub inertia: f64,
    /// Inertia after each assignment step.
    pub inertia_history: Vec<f64>,
}

fn nearest(p: &[f64; 4], centroids: &[[f64; 4]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, x) in centroids.iter().enumerate() {
        let d = dist2(p, x);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_pp<R: Rng + ?Sized>(points: &[[f64; 4]], k: usize, rng: &mut R) -> Vec<[f64; 4]> {
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    while centroids.len() < k {
        let d: Vec<f64> = points.iter().map(|p| nearest(p, &centroids).1).collect();
        let total: f64 = d.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = d.iter().rposition(|x| *x > 0.0).expect("positive total");
            for (i, x) in d.iter().enumerate() {
                if *x > 0.0 && u < *x {
                    pick = i;
                    break;
                }
                u -= x;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[next]);
    }
    centroids
}

/// One Lloyd run from k-means++ seeding.
pub fn kmeans_once<R: Rng + ?Sized>(points: &[[f64; 4]], k: usize, rng: &mut R) -> KMeansRun {
    let mut centroids = kmeans_pp(points, k, rng);
    let mut assignments = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut changed = false;
        let mut inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            inertia += d;
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
        }
        history.push(inertia);
        if !changed {
            break;
        }
        let mut sums = vec![[0.0; 4]; k];
        let mut sizes = vec![0usize; k];
        for (p, c) in points.iter().zip(&assignments) {
            sizes[*c] += 1;
            for j in 0..4 {
                sums[*c][j] += p[j];
            }
        }
        for c in 0..k {
            // An empty cluster keeps its previous centroid.
            if sizes[c] > 0 {
                centroids[c] = sums[c].map(|s| s / sizes[c] as f64);
            }
        }
    }
    let inertia = points
        .iter()
        .zip(&assignments)
        .map(|(p, c)| dist2(p, &centroids[*c]))
        .sum();
    KMeansRun {
        assignments,
        centroids,
        inertia,
        inertia_history: history,
    }
}

/// Best of `restarts` runs by inertia; run `r` uses its own derived stream.
pub fn kmeans(points: &[[f64; 4]], k: usize, seed: u64, restarts: usize) -> Result<KMeansRun> {
    if k < 1 || points.len() < k {
        return Err(Error::Sizing(format!(
            "k = {k} clusters need at least {k} points, got {}",
            points.len()
        )));
    }
    let mut best: Option<KMeansRun> = None;
    for r in 0..restarts.max(1) {
        let run = kmeans_once(points, k, &mut seeding::derived(seed, "kmeans", &[r as u64]));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Mean silhouette coefficient; singleton clusters contribute 0.
pub fn silhouette(points: &[[f64; 4]], assignments: &[usize], k: usize) -> f64 {
    if k < 2 || points.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let mut sum = vec![0.0; k];
        let mut size = vec![0usize; k];
        for (j, q) in points.iter().enumerate() {
            if i != j {
                sum[assignments[j]] += dist2(p, q).sqrt();
                size[assignments[j]] += 1;
            }
        }
        let own = assignments[i];
        if size[own] == 0 {
            continue;
        }
        let a = sum[own] / size[own] as f64;
        let b = (0..k)
            .filter(|c| *c != own && size[*c] > 0)
            .map(|c| sum[c] / size[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if b.is_finite() && a.max(b) > 0.0 {
            total += (b - a) / a.max(b);
        }
    }
    total / points.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub k: usize,
    pub profiles: Vec<SocioDemographics>,
    pub assignments: Vec<usize>,
    pub centroids: Vec<[f64; 4]>,
    pub inertia: f64,
    pub silhouette: f64,
    pub projection: Projection,
}

impl ClusterAssignment {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for a in &self.assignments {
            s[*a] += 1;
        }
        s
    }
}

/// K-means on the unit-normalised profile embeddings.
pub fn cluster_profiles(
    table: &ProfileEmbeddingTable,
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<ClusterAssignment> {
    if k < 2 {
        return Err(Error::Config(format!("k must be >= 2, got {k}")));
    }
    if table.len() < k {
        return Err(Error::Sizing(format!(
            "{k} clusters requested but only {} distinct profiles (short by {})",
            table.len(),
            k - table.len()
        )));
    }
    let points = table.normalized();
    let run = kmeans(&points, k, seed, restarts)?;
    let projection = if points.len() >= 3 {
        project_points(&points)
    } else {
        Projection {
            coordinates: points.iter().map(|p| [p[0], p[1]]).collect(),
            explained: [0.0; 2],
            degenerate: true,
        }
    };
    Ok(ClusterAssignment {
        k,
        profiles: table.rows.iter().map(|r| r.profile).collect(),
        silhouette: silhouette(&points, &run.assignments, k),
        assignments: run.assignments,
        centroids: run.centroids,
        inertia: run.inertia,
        projection,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub inertia: f64,
    pub silhouette: f64,
}

/// Elbow and silhouette values for each k in `ks` that the table can support.
pub fn cluster_sweep(table: &ProfileEmbeddingTable, ks: &[usize], seed: u64, restarts: usize) -> Result<Vec<SweepRow>> {
    ks.iter()
        .filter(|k| **k >= 2 && **k <= table.len())
        .map(|&k| {
            let a = cluster_profiles(table, k, seed, restarts)?;
            Ok(SweepRow {
                k,
                inertia: a.inertia,
                silhouette: a.silhouette,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub coordinates: Vec<[f64; 2]>,
    /// Variance along each retained component.
    pub explained: [f64; 2],
    /// True when the points span fewer than two dimensions.
    pub degenerate: bool,
}

/// Top-2 principal components of the normalised embeddings.
pub fn project_2d(table: &ProfileEmbeddingTable) -> Result<Projection> {
    if table.len() < 3 {
        return Err(Error::Sizing(format!(
            "projection needs at least 3 profiles, got {}",
            table.len()
        )));
    }
    Ok(project_points(&table.normalized()))
}

/// PCA projection; each component's first nonzero loading is made positive.
pub fn project_points(points: &[[f64; 4]]) -> Projection {
    let n = points.len() as f64;
    let mean: Vector4<f64> = points.iter().map(|p| Vector4::from(*p)).sum::<Vector4<f64>>() / n;
    let mut cov = Matrix4::<f64>::zeros();
    for p in points {
        let c = Vector4::from(*p) - mean;
        cov += c * c.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let scale = eig.eigenvalues.amax().max(1e-300);
    let mut axes = [Vector4::zeros(); 2];
    let mut explained = [0.0; 2];
    let mut rank = 0;
    for (slot, &k) in order.iter().take(2).enumerate() {
        let val = eig.eigenvalues[k];
        if val <= 1e-12 * scale || val <= 1e-24 {
            continue;
        }
        rank += 1;
        let mut v: Vector4<f64> = eig.eigenvectors.column(k).into();
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                v = -v;
            }
        }
        axes[slot] = v;
        explained[slot] = val;
    }
    if rank < 2 {
        log::warn!("embedding matrix has rank {rank} < 2; padding the projection with zeros");
    }
    Projection {
        coordinates: points
            .iter()
            .map(|p| {
                let c = Vector4::from(*p) - mean;
                [axes[0].dot(&c), axes[1].dot(&c)]
            })
            .collect(),
        explained,
        degenerate: rank < 2,
    }
}
