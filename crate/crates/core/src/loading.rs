//! Embedding kernel, cosine similarity and the softmax persona-loading distribution.

use std::fmt;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{SocioDemographics, DIMENSION_NAMES, DIMENSION_SIZES};
use crate::error::{Error, Result};
use crate::persona::PersonaBasis;
use crate::{jsonl, seeding};

pub const DEFAULT_LAMBDA: f64 = 40.0 / 3.0;
pub const PARAMS_SCHEMA_VERSION: u32 = 1;
pub const N_PARAMS: usize = 12;
/// Offset of each dimension's block in the flat parameter vector.
pub const OFFSETS: [usize; 4] = [0, 2, 7, 10];

/// The β vectors, stored flat in gender, age, income, group order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRepr", into = "ParamsRepr")]
pub struct EmbeddingParams {
    beta: [f64; N_PARAMS],
}

#[derive(Serialize, Deserialize)]
struct ParamsRepr {
    schema_version: u32,
    beta_gender: Vec<f64>,
    beta_age: Vec<f64>,
    beta_income: Vec<f64>,
    beta_group: Vec<f64>,
}

impl From<EmbeddingParams> for ParamsRepr {
    fn from(p: EmbeddingParams) -> Self {
        ParamsRepr {
            schema_version: PARAMS_SCHEMA_VERSION,
            beta_gender: p.dimension(0).to_vec(),
            beta_age: p.dimension(1).to_vec(),
            beta_income: p.dimension(2).to_vec(),
            beta_group: p.dimension(3).to_vec(),
        }
    }
}

impl TryFrom<ParamsRepr> for EmbeddingParams {
    type Error = String;
    fn try_from(r: ParamsRepr) -> std::result::Result<Self, String> {
        if r.schema_version != PARAMS_SCHEMA_VERSION {
            return Err(format!(
                "unsupported params schema version {} (expected {PARAMS_SCHEMA_VERSION})",
                r.schema_version
            ));
        }
        let mut flat = Vec::with_capacity(N_PARAMS);
        for (m, v) in [r.beta_gender, r.beta_age, r.beta_income, r.beta_group]
            .into_iter()
            .enumerate()
        {
            if v.len() != DIMENSION_SIZES[m] {
                return Err(format!(
                    "beta_{} has {} entries, expected {}",
                    DIMENSION_NAMES[m],
                    v.len(),
                    DIMENSION_SIZES[m]
                ));
            }
            flat.extend(v);
        }
        EmbeddingParams::new(flat.try_into().expect("length checked")).map_err(|e| e.to_string())
    }
}

impl EmbeddingParams {
    pub fn new(beta: [f64; N_PARAMS]) -> Result<Self> {
        if let Some(i) = beta.iter().position(|b| !b.is_finite()) {
            return Err(Error::Input(format!("{} is not finite", param_label(i))));
        }
        Ok(EmbeddingParams { beta })
    }

    pub fn constant(value: f64) -> Self {
        EmbeddingParams {
            beta: [value; N_PARAMS],
        }
    }

    /// I.i.d. standard normal entries.
    pub fn random(seed: u64) -> Self {
        let mut rng = seeding::derived(seed, "embedding-init", &[]);
        EmbeddingParams {
            beta: std::array::from_fn(|_| StandardNormal.sample(&mut rng)),
        }
    }

    pub fn flat(&self) -> &[f64; N_PARAMS] {
        &self.beta
    }

    /// The β vector of socio-demographic dimension `m` (0 gender .. 3 group).
    pub fn dimension(&self, m: usize) -> &[f64] {
        &self.beta[OFFSETS[m]..OFFSETS[m] + DIMENSION_SIZES[m]]
    }

    /// Flat indices selected by a profile, one per dimension.
    pub fn selected(d: &SocioDemographics) -> [usize; 4] {
        let idx = d.indices();
        std::array::from_fn(|m| OFFSETS[m] + idx[m])
    }

    pub fn max_abs_diff(&self, other: &EmbeddingParams) -> f64 {
        self.beta
            .iter()
            .zip(other.beta.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Rejects parameter sets with an all-zero β vector.
    pub fn check_nondegenerate(&self) -> Result<()> {
        for (m, name) in DIMENSION_NAMES.iter().enumerate() {
            if self.dimension(m).iter().all(|b| *b == 0.0) {
                return Err(Error::DegenerateEmbedding(format!("beta_{name} is all zeros")));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.check_nondegenerate()?;
        jsonl::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        jsonl::read_json(path)
    }
}

pub(crate) fn from_flat_unchecked(beta: [f64; N_PARAMS]) -> EmbeddingParams {
    EmbeddingParams { beta }
}

/// `variable/category` label of a flat parameter index.
pub fn param_label(i: usize) -> String {
    use crate::data::{AgeBand, Category, Gender, IncomeBand, UserGroup};
    let m = OFFSETS.iter().rposition(|o| *o <= i).expect("index in range");
    let c = i - OFFSETS[m];
    let cat = match m {
        0 => Gender::ALL[c].label(),
        1 => AgeBand::ALL[c].label(),
        2 => IncomeBand::ALL[c].label(),
        _ => UserGroup::ALL[c].label(),
    };
    format!("{}/{}", DIMENSION_NAMES[m], cat)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(pub [f64; 4]);

impl EmbeddingVector {
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, c: f64) -> EmbeddingVector {
        EmbeddingVector(self.0.map(|x| c * x))
    }
}

/// Component `m` is the β entry of `d`'s category on dimension `m`.
pub fn embed(d: &SocioDemographics, params: &EmbeddingParams) -> EmbeddingVector {
    let sel = EmbeddingParams::selected(d);
    EmbeddingVector(sel.map(|i| params.beta[i]))
}

pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateEmbedding(format!(
            "zero embedding vector in similarity ({:?}, {:?})",
            a.0, b.0
        )));
    }
    if a == b {
        return Ok(1.0);
    }
    let dot: f64 = a.0.iter().zip(b.0.iter()).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadingDistribution {
    pub probabilities: Vec<f64>,
    pub lambda: f64,
}

impl LoadingDistribution {
    /// Softmax of `lambda * s` with max subtraction.
    pub fn from_similarities(similarities: &[f64], lambda: f64) -> Self {
        let m = similarities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = similarities.iter().map(|s| (lambda * (s - m)).exp()).collect();
        let z: f64 = e.iter().sum();
        LoadingDistribution {
            probabilities: e.into_iter().map(|x| x / z).collect(),
            lambda,
        }
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// The `n` most probable personas, ties broken by index.
    pub fn top(&self, n: usize) -> Vec<(usize, f64)> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|a, b| self.probabilities[*b].total_cmp(&self.probabilities[*a]).then(a.cmp(b)));
        idx.into_iter().take(n).map(|k| (k, self.probabilities[k])).collect()
    }
}

/// Similarity of `d` to each profile in `profiles`.
pub fn similarities(
    d: &SocioDemographics,
    params: &EmbeddingParams,
    profiles: &[SocioDemographics],
) -> Result<Vec<f64>> {
    let e = embed(d, params);
    profiles
        .iter()
        .map(|p| cosine_similarity(&e, &embed(p, params)))
        .collect()
}

pub fn loading_distribution(
    d: &SocioDemographics,
    params: &EmbeddingParams,
    basis: &PersonaBasis,
    lambda: f64,
) -> Result<LoadingDistribution> {
    if basis.is_empty() {
        return Err(Error::Precondition("persona basis is empty".into()));
    }
    let sims = similarities(d, params, &basis.persona_demographics())?;
    Ok(LoadingDistribution::from_similarities(&sims, lambda))
}

/// `l` distinct persona indices by sequential weighted draws without replacement.
pub fn sample_personas<R: Rng + ?Sized>(dist: &LoadingDistribution, l: usize, rng: &mut R) -> Result<Vec<usize>> {
    let k = dist.len();
    if l == 0 || l > k {
        return Err(Error::Sizing(format!(
            "cannot sample {l} personas from a basis of {k} (need 1 <= L <= K_h)"
        )));
    }
    let mut weights = dist.probabilities.clone();
    let mut out = Vec::with_capacity(l);
    for _ in 0..l {
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (j, w) in weights.iter().enumerate() {
                if *w > 0.0 {
                    acc += w;
                    chosen = Some(j);
                    if u < acc {
                        break;
                    }
                }
            }
            chosen.expect("positive total")
        } else {
            // Remaining mass underflowed: fall back to a uniform draw.
            let remaining: Vec<usize> = (0..k).filter(|j| !out.contains(j)).collect();
            remaining[rng.random_range(0..remaining.len())]
        };
        weights[pick] = 0.0;
        out.push(pick);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Boundedness,
    Symmetry,
    SelfSimilarity,
    Normalization,
    Monotonicity,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Condition::Boundedness => "boundedness",
            Condition::Symmetry => "symmetry",
            Condition::SelfSimilarity => "self-similarity",
            Condition::Normalization => "normalization",
            Condition::Monotonicity => "monotonicity",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub condition: Condition,
    pub witness: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub pairs_checked: usize,
    pub distributions_checked: usize,
    pub violations: Vec<Violation>,
}

impl ConditionReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violated(&self, c: Condition) -> bool {
        self.violations.iter().any(|v| v.condition == c)
    }

    /// Normalization and monotonicity of one distribution against its similarities.
    pub fn check_distribution(&mut self, similarities: &[f64], dist: &LoadingDistribution, label: &str) {
        self.distributions_checked += 1;
        let p = &dist.probabilities;
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            self.violations.push(Violation {
                condition: Condition::Normalization,
                witness: format!("{label}: probabilities sum to {sum}"),
            });
        }
        // s1 >= s2 <=> p1 >= p2 for all pairs, checked on the similarity order.
        let mut idx: Vec<usize> = (0..p.len()).collect();
        idx.sort_by(|a, b| similarities[*a].total_cmp(&similarities[*b]));
        for w in idx.windows(2) {
            let (a, b) = (w[0], w[1]);
            let ok = if similarities[a] == similarities[b] {
                p[a] == p[b]
            } else {
                p[a] < p[b]
            };
            if !ok {
                self.violations.push(Violation {
                    condition: Condition::Monotonicity,
                    witness: format!(
                        "{label}: personas {a} and {b} have s = ({}, {}) but P = ({}, {})",
                        similarities[a], similarities[b], p[a], p[b]
                    ),
                });
                break;
            }
        }
    }
}

/// Checks the similarity and loading conditions over all ordered pairs of
/// `profiles`, treating each profile in turn as the target and the full list
/// as the persona pool.
pub fn check_similarity_conditions(
    params: &EmbeddingParams,
    profiles: &[SocioDemographics],
    lambda: f64,
) -> Result<ConditionReport> {
    if profiles.is_empty() {
        return Err(Error::Precondition("condition check needs at least one profile".into()));
    }
    let emb: Vec<EmbeddingVector> = profiles.iter().map(|d| embed(d, params)).collect();
    let mut report = ConditionReport::default();
    for (i, a) in emb.iter().enumerate() {
        let s_aa = cosine_similarity(a, a)?;
        let mut sims = Vec::with_capacity(emb.len());
        for (j, b) in emb.iter().enumerate() {
            let s_ab = cosine_similarity(a, b)?;
            let s_ba = cosine_similarity(b, a)?;
            report.pairs_checked += 1;
            let witness = || format!("profiles {i} and {j}: s = {s_ab}, reversed {s_ba}, self {s_aa}");
            if s_ab.abs() > 1.0 {
                report.violations.push(Violation {
                    condition: Condition::Boundedness,
                    witness: witness(),
                });
            }
            if (s_ab - s_ba).abs() > 1e-12 {
                report.violations.push(Violation {
                    condition: Condition::Symmetry,
                    witness: witness(),
                });
            }
            if s_aa < s_ab {
                report.violations.push(Violation {
                    condition: Condition::SelfSimilarity,
                    witness: witness(),
                });
            }
            sims.push(s_ab);
        }
        let dist = LoadingDistribution::from_similarities(&sims, lambda);
        report.check_distribution(&sims, &dist, &format!("profile {i}"));
    }
    Ok(report)
}
