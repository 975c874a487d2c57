//! Regularised M-step objective, its analytic gradient and the ascent loop.

use serde::{Deserialize, Serialize};

use crate::data::{SocioDemographics, DIMENSION_SIZES};
use crate::error::{Error, Result};
use crate::loading::{cosine_similarity, embed, from_flat_unchecked, EmbeddingParams, N_PARAMS, OFFSETS};

/// Guards the mean variance in the regulariser's denominator.
pub const VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MStepConfig {
    /// Initial step size; halved on any non-improving step and doubled after an accepted one.
    pub learning_rate: f64,
    pub iterations: usize,
    /// Stop once an accepted step improves the objective by less than this.
    pub tolerance: f64,
}

impl Default for MStepConfig {
    fn default() -> Self {
        MStepConfig {
            learning_rate: 0.05,
            iterations: 200,
            tolerance: 1e-10,
        }
    }
}

/// Population variance of each β vector.
pub fn dimension_variances(params: &EmbeddingParams) -> [f64; 4] {
    std::array::from_fn(|m| {
        let v = params.dimension(m);
        if v.iter().all(|b| *b == v[0]) {
            return 0.0;
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / v.len() as f64
    })
}

/// `sum_m (var_m - mean_var)^2 / max(mean_var, floor)^2`; equals
/// `sum_m (var_m / mean_var - 1)^2` whenever the mean variance exceeds the floor.
pub fn regularizer(params: &EmbeddingParams) -> f64 {
    let v = dimension_variances(params);
    let mean = v.iter().sum::<f64>() / 4.0;
    let denom = mean.max(VARIANCE_FLOOR);
    v.iter().map(|x| ((x - mean) / denom).powi(2)).sum()
}

pub fn regularizer_gradient(params: &EmbeddingParams) -> [f64; N_PARAMS] {
    let v = dimension_variances(params);
    let mean = v.iter().sum::<f64>() / 4.0;
    // dR/dv_j
    let dv: [f64; 4] = if mean > VARIANCE_FLOOR {
        let r: [f64; 4] = v.map(|x| x / mean);
        let cross: f64 = (0..4).map(|m| (r[m] - 1.0) * v[m]).sum::<f64>() / (2.0 * mean * mean);
        std::array::from_fn(|j| 2.0 * (r[j] - 1.0) / mean - cross)
    } else {
        let f2 = VARIANCE_FLOOR * VARIANCE_FLOOR;
        std::array::from_fn(|j| 2.0 * (v[j] - mean) / f2)
    };
    let mut g = [0.0; N_PARAMS];
    for m in 0..4 {
        let block = params.dimension(m);
        let n = DIMENSION_SIZES[m] as f64;
        let mu = block.iter().sum::<f64>() / n;
        for (c, b) in block.iter().enumerate() {
            g[OFFSETS[m] + c] = dv[m] * 2.0 * (b - mu) / n;
        }
    }
    g
}

/// β-independent structure of the weighted objective: weights aggregated by
/// (record profile, persona profile) and persona-profile multiplicities in the basis.
#[derive(Debug, Clone, PartialEq)]
pub struct MStepData {
    pub record_profiles: Vec<SocioDemographics>,
    pub persona_profiles: Vec<SocioDemographics>,
    /// Number of basis personas sharing each persona profile.
    pub counts: Vec<f64>,
    /// `weights[r][u]`: total weight on persona profile `u` from records with profile `r`.
    pub weights: Vec<Vec<f64>>,
    pub totals: Vec<f64>,
}

impl MStepData {
    /// `weighted[i]` lists `(persona index, weight)` pairs for the record with profile `records[i]`.
    pub fn new(
        records: &[SocioDemographics],
        basis_profiles: &[SocioDemographics],
        weighted: &[Vec<(usize, f64)>],
    ) -> Self {
        let mut persona_profiles: Vec<SocioDemographics> = Vec::new();
        let mut counts = Vec::new();
        let mut persona_slot = Vec::with_capacity(basis_profiles.len());
        for p in basis_profiles {
            let u = match persona_profiles.iter().position(|q| q == p) {
                Some(u) => u,
                None => {
                    persona_profiles.push(*p);
                    counts.push(0.0);
                    persona_profiles.len() - 1
                }
            };
            counts[u] += 1.0;
            persona_slot.push(u);
        }
        let mut record_profiles: Vec<SocioDemographics> = Vec::new();
        let mut weights: Vec<Vec<f64>> = Vec::new();
        for (d, ws) in records.iter().zip(weighted) {
            if ws.iter().all(|(_, w)| *w == 0.0) {
                continue;
            }
            let r = match record_profiles.iter().position(|q| q == d) {
                Some(r) => r,
                None => {
                    record_profiles.push(*d);
                    weights.push(vec![0.0; persona_profiles.len()]);
                    record_profiles.len() - 1
                }
            };
            for (k, w) in ws {
                weights[r][persona_slot[*k]] += w;
            }
        }
        let totals = weights.iter().map(|row| row.iter().sum()).collect();
        MStepData {
            record_profiles,
            persona_profiles,
            counts,
            weights,
            totals,
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.totals.iter().sum()
    }
}

/// Weighted log loading probability minus `alpha_m` times the regulariser.
pub fn objective(params: &EmbeddingParams, data: &MStepData, lambda: f64, alpha_m: f64) -> Result<f64> {
    let pe: Vec<_> = data.persona_profiles.iter().map(|d| embed(d, params)).collect();
    let mut total = 0.0;
    for (r, d) in data.record_profiles.iter().enumerate() {
        let e = embed(d, params);
        let s: Vec<f64> = pe.iter().map(|p| cosine_similarity(&e, p)).collect::<Result<_>>()?;
        let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = s
            .iter()
            .zip(&data.counts)
            .map(|(x, n)| n * (lambda * (x - m)).exp())
            .sum();
        let lse = lambda * m + z.ln();
        for (u, w) in data.weights[r].iter().enumerate() {
            if *w != 0.0 {
                total += w * (lambda * s[u] - lse);
            }
        }
    }
    Ok(total - alpha_m * regularizer(params))
}

/// Raw cosine and its partials with respect to both embeddings.
fn cosine_parts(a: &[f64; 4], b: &[f64; 4]) -> Result<(f64, [f64; 4], [f64; 4])> {
    let na2: f64 = a.iter().map(|x| x * x).sum();
    let nb2: f64 = b.iter().map(|x| x * x).sum();
    if na2 == 0.0 || nb2 == 0.0 {
        return Err(Error::DegenerateEmbedding("zero embedding vector in gradient".into()));
    }
    let nanb = (na2 * nb2).sqrt();
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let s = dot / nanb;
    let da = std::array::from_fn(|m| b[m] / nanb - s * a[m] / na2);
    let db = std::array::from_fn(|m| a[m] / nanb - s * b[m] / nb2);
    Ok((s, da, db))
}

pub fn gradient(params: &EmbeddingParams, data: &MStepData, lambda: f64, alpha_m: f64) -> Result<[f64; N_PARAMS]> {
    let sel_p: Vec<[usize; 4]> = data.persona_profiles.iter().map(EmbeddingParams::selected).collect();
    let pe: Vec<[f64; 4]> = data.persona_profiles.iter().map(|d| embed(d, params).0).collect();
    let mut g = [0.0; N_PARAMS];
    for (r, d) in data.record_profiles.iter().enumerate() {
        let sel_r = EmbeddingParams::selected(d);
        let e = embed(d, params).0;
        let parts: Vec<_> = pe.iter().map(|p| cosine_parts(&e, p)).collect::<Result<_>>()?;
        // Loading probabilities use the clamped similarity, as in the objective.
        let s: Vec<f64> = parts
            .iter()
            .zip(&pe)
            .map(|((x, _, _), p)| if *p == e { 1.0 } else { x.clamp(-1.0, 1.0) })
            .collect();
        let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ex: Vec<f64> = s
            .iter()
            .zip(&data.counts)
            .map(|(x, n)| n * (lambda * (x - m)).exp())
            .collect();
        let z: f64 = ex.iter().sum();
        for (u, (_, da, db)) in parts.iter().enumerate() {
            let c = lambda * (data.weights[r][u] - data.totals[r] * ex[u] / z);
            if c == 0.0 {
                continue;
            }
            for k in 0..4 {
                g[sel_r[k]] += c * da[k];
                g[sel_p[u][k]] += c * db[k];
            }
        }
    }
    if alpha_m != 0.0 {
        let rg = regularizer_gradient(params);
        for (gi, ri) in g.iter_mut().zip(rg) {
            *gi -= alpha_m * ri;
        }
    }
    Ok(g)
}

/// Central differences of [`objective`] with step `h`.
pub fn finite_difference_gradient(
    params: &EmbeddingParams,
    data: &MStepData,
    lambda: f64,
    alpha_m: f64,
    h: f64,
) -> Result<[f64; N_PARAMS]> {
    let mut g = [0.0; N_PARAMS];
    for (i, gi) in g.iter_mut().enumerate() {
        let mut plus = *params.flat();
        let mut minus = *params.flat();
        plus[i] += h;
        minus[i] -= h;
        let fp = objective(&from_flat_unchecked(plus), data, lambda, alpha_m)?;
        let fm = objective(&from_flat_unchecked(minus), data, lambda, alpha_m)?;
        *gi = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MStepResult {
    pub params: EmbeddingParams,
    pub objective_start: f64,
    pub objective_end: f64,
    pub iterations: usize,
}

/// Gradient ascent with step halving from `init`. Every accepted step strictly
/// increases the objective, so the returned iterate is also the best one.
pub fn maximize(
    init: &EmbeddingParams,
    data: &MStepData,
    lambda: f64,
    alpha_m: f64,
    config: &MStepConfig,
) -> Result<MStepResult> {
    if data.total_weight() <= 0.0 {
        return Err(Error::Stall);
    }
    let eval = |p: &EmbeddingParams| match objective(p, data, lambda, alpha_m) {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) | Err(Error::DegenerateEmbedding(_)) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    };
    let mut beta = *init;
    let start = objective(&beta, data, lambda, alpha_m)?;
    let mut f = start;
    let mut eta = config.learning_rate;
    let mut done = 0;
    for _ in 0..config.iterations {
        let g = gradient(&beta, data, lambda, alpha_m)?;
        if g.iter().all(|x| *x == 0.0) {
            break;
        }
        let mut accepted = None;
        for _ in 0..60 {
            let cand: [f64; N_PARAMS] = std::array::from_fn(|i| beta.flat()[i] + eta * g[i]);
            let cand = from_flat_unchecked(cand);
            let fc = eval(&cand)?;
            if fc > f {
                accepted = Some((cand, fc));
                break;
            }
            eta *= 0.5;
        }
        let Some((cand, fc)) = accepted else {
            break;
        };
        let gain = fc - f;
        beta = cand;
        f = fc;
        done += 1;
        eta *= 2.0;
        if gain < config.tolerance {
            break;
        }
    }
    Ok(MStepResult {
        params: beta,
        objective_start: start,
        objective_end: f,
        iterations: done,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loading::DEFAULT_LAMBDA;
    use crate::seeding;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_data(seed: u64, n_records: usize, n_personas: usize) -> MStepData {
        let profiles = SocioDemographics::all_profiles();
        let mut rng = seeding::derived(seed, "mstep-data", &[]);
        let records: Vec<_> = (0..n_records).map(|_| profiles[rng.random_range(0..60)]).collect();
        let basis: Vec<_> = (0..n_personas).map(|_| profiles[rng.random_range(0..60)]).collect();
        let weighted: Vec<Vec<(usize, f64)>> = (0..n_records)
            .map(|_| {
                (0..3)
                    .map(|_| (rng.random_range(0..n_personas), rng.random::<f64>()))
                    .collect()
            })
            .collect();
        MStepData::new(&records, &basis, &weighted)
    }

    #[test]
    fn regularizer_zero_for_equal_variances() {
        // Variance 1 in every block: gender (+1,-1), age (0, ±sqrt(5/4)·..), built explicitly.
        let a = (5.0f64 / 2.0).sqrt();
        let c = 1.5f64.sqrt();
        let beta = [1.0, -1.0, a, -a, 0.0, 0.0, 0.0, c, -c, 0.0, 3.0, 1.0];
        let p = EmbeddingParams::new(beta).unwrap();
        let v = dimension_variances(&p);
        for x in v {
            assert!((x - 1.0).abs() < 1e-12, "{v:?}");
        }
        assert!(regularizer(&p) < 1e-12);
    }

    #[test]
    fn regularizer_positive_when_variances_differ() {
        let p = EmbeddingParams::new([1.0, -1.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.0, 0.0, 0.1, 2.0, -2.0]).unwrap();
        assert!(regularizer(&p) > 0.1);
        // All-zero variances are equal, so the penalty vanishes even below the floor.
        assert_eq!(regularizer(&EmbeddingParams::constant(0.7)), 0.0);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        for seed in 0..25 {
            let data = random_data(seed, 15, 8);
            let p = EmbeddingParams::random(seed + 100);
            let a = gradient(&p, &data, DEFAULT_LAMBDA, 0.4).unwrap();
            let f = finite_difference_gradient(&p, &data, DEFAULT_LAMBDA, 0.4, 1e-6).unwrap();
            for i in 0..N_PARAMS {
                let rel = (a[i] - f[i]).abs() / a[i].abs().max(f[i].abs()).max(1.0);
                assert!(rel < 1e-5, "seed {seed} param {i}: {} vs {}", a[i], f[i]);
            }
        }
    }

    #[test]
    fn ascent_increases_single_persona_probability() {
        let profiles = SocioDemographics::all_profiles();
        let basis = vec![profiles[0], profiles[37], profiles[59]];
        let data = MStepData::new(&[profiles[12]], &basis, &[vec![(1, 1.0)]]);
        let init = EmbeddingParams::random(3);
        let out = maximize(&init, &data, DEFAULT_LAMBDA, 0.0, &MStepConfig::default()).unwrap();
        assert!(out.objective_end > out.objective_start);
        let p = |params: &EmbeddingParams| {
            crate::loading::LoadingDistribution::from_similarities(
                &crate::loading::similarities(&profiles[12], params, &basis).unwrap(),
                DEFAULT_LAMBDA,
            )
            .probabilities[1]
        };
        assert!(p(&out.params) > p(&init));
    }

    #[test]
    fn zero_weights_stall() {
        let profiles = SocioDemographics::all_profiles();
        let data = MStepData::new(&[profiles[1]], &[profiles[2]], &[vec![(0, 0.0)]]);
        assert!(matches!(
            maximize(
                &EmbeddingParams::random(1),
                &data,
                DEFAULT_LAMBDA,
                0.4,
                &MStepConfig::default()
            ),
            Err(Error::Stall)
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn regularizer_non_negative(beta in proptest::array::uniform12(-10.0f64..10.0)) {
            let p = EmbeddingParams::new(beta).unwrap();
            prop_assert!(regularizer(&p) >= 0.0);
        }

        #[test]
        fn regularizer_gradient_matches_differences(beta in proptest::array::uniform12(-3.0f64..3.0)) {
            let p = EmbeddingParams::new(beta).unwrap();
            let g = regularizer_gradient(&p);
            for i in 0..N_PARAMS {
                let h = 1e-6;
                let mut a = beta; a[i] += h;
                let mut b = beta; b[i] -= h;
                let fd = (regularizer(&from_flat_unchecked(a)) - regularizer(&from_flat_unchecked(b))) / (2.0 * h);
                prop_assert!((g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1.0) < 1e-5, "{} {} {}", i, g[i], fd);
            }
        }
    }
}
