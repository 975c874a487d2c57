//! Multinomial logit with two ASCs and generic time, cost and headway slopes.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::{Alternative, ChoiceContext, ChoiceRecord};
use crate::error::{Error, Result};

pub const N_MNL: usize = 5;
pub const MNL_NAMES: [&str; N_MNL] = ["asc_train", "asc_swissmetro", "beta_time", "beta_cost", "beta_headway"];
pub const MIN_RECORDS: usize = 50;
pub const MAX_NEWTON_ITERATIONS: usize = 500;
pub const GRADIENT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MnlParams {
    pub asc_train: f64,
    pub asc_swissmetro: f64,
    pub beta_time: f64,
    pub beta_cost: f64,
    pub beta_headway: f64,
    /// Annual-pass holders pay nothing for train and Swissmetro.
    #[serde(default)]
    pub annual_pass_interaction: bool,
}

impl MnlParams {
    pub fn from_vec(v: &[f64; N_MNL], annual_pass_interaction: bool) -> Self {
        MnlParams {
            asc_train: v[0],
            asc_swissmetro: v[1],
            beta_time: v[2],
            beta_cost: v[3],
            beta_headway: v[4],
            annual_pass_interaction,
        }
    }

    pub fn to_vec(&self) -> [f64; N_MNL] {
        [
            self.asc_train,
            self.asc_swissmetro,
            self.beta_time,
            self.beta_cost,
            self.beta_headway,
        ]
    }

    pub fn utilities(&self, ctx: &ChoiceContext) -> [f64; 3] {
        let b = self.to_vec();
        Alternative::ALL.map(|a| {
            features(ctx, a, self.annual_pass_interaction)
                .iter()
                .zip(&b)
                .map(|(x, w)| x * w)
                .sum()
        })
    }
}

/// Explanatory variables of one alternative in parameter order.
pub fn features(ctx: &ChoiceContext, alt: Alternative, annual_pass_interaction: bool) -> [f64; N_MNL] {
    let a = ctx.attributes(alt);
    let free = annual_pass_interaction && ctx.annual_pass && alt != Alternative::Car;
    [
        (alt == Alternative::Train) as u8 as f64,
        (alt == Alternative::Swissmetro) as u8 as f64,
        a.travel_time,
        if free { 0.0 } else { a.cost },
        a.headway,
    ]
}

fn softmax(v: [f64; 3]) -> [f64; 3] {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e = v.map(|x| (x - m).exp());
    let z: f64 = e.iter().sum();
    e.map(|x| x / z)
}

/// Choice probabilities and the most probable mode (ties go to the earlier mode).
pub fn mnl_predict(params: &MnlParams, ctx: &ChoiceContext) -> ([f64; 3], Alternative) {
    let p = softmax(params.utilities(ctx));
    let best = (0..3).fold(0, |b, j| if p[j] > p[b] { j } else { b });
    (p, Alternative::ALL[best])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnlFit {
    pub params: MnlParams,
    pub std_errors: [f64; N_MNL],
    pub log_likelihood: f64,
    pub gradient_sup_norm: f64,
    pub iterations: usize,
    pub records: usize,
}

struct Prepared {
    x: Vec<[[f64; N_MNL]; 3]>,
    chosen: Vec<usize>,
}

impl Prepared {
    fn new(records: &[ChoiceRecord], interaction: bool) -> Self {
        Prepared {
            x: records
                .iter()
                .map(|r| Alternative::ALL.map(|a| features(&r.context, a, interaction)))
                .collect(),
            chosen: records.iter().map(|r| r.chosen.index()).collect(),
        }
    }

    /// Log-likelihood, gradient and Hessian at `b`.
    fn eval(&self, b: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let mut ll = 0.0;
        let mut g = DVector::zeros(N_MNL);
        let mut h = DMatrix::zeros(N_MNL, N_MNL);
        for (x, c) in self.x.iter().zip(&self.chosen) {
            let v = x.map(|xj| xj.iter().zip(b.iter()).map(|(a, w)| a * w).sum::<f64>());
            let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = v.iter().map(|u| (u - m).exp()).sum();
            ll += v[*c] - m - z.ln();
            let p = v.map(|u| (u - m).exp() / z);
            let mean: [f64; N_MNL] = std::array::from_fn(|f| (0..3).map(|j| p[j] * x[j][f]).sum());
            for f in 0..N_MNL {
                g[f] += x[*c][f] - mean[f];
                for k in 0..N_MNL {
                    let cov: f64 = (0..3).map(|j| p[j] * x[j][f] * x[j][k]).sum::<f64>() - mean[f] * mean[k];
                    h[(f, k)] -= cov;
                }
            }
        }
        (ll, g, h)
    }

    /// Parameters whose columns are linearly dependent once each record's mean is removed.
    fn unidentified(&self) -> Vec<&'static str> {
        let mut m = DMatrix::<f64>::zeros(N_MNL, N_MNL);
        for x in &self.x {
            let mean: [f64; N_MNL] = std::array::from_fn(|f| (x[0][f] + x[1][f] + x[2][f]) / 3.0);
            for xj in x {
                let d = DVector::from_iterator(N_MNL, xj.iter().zip(&mean).map(|(a, b)| a - b));
                m += &d * d.transpose();
            }
        }
        // Scale-free test on the correlation form of the moment matrix.
        let scale: Vec<f64> = (0..N_MNL).map(|i| m[(i, i)].sqrt()).collect();
        let zero_cols: [bool; N_MNL] = std::array::from_fn(|i| scale[i] < 1e-12);
        let mut corr = DMatrix::<f64>::zeros(N_MNL, N_MNL);
        for i in 0..N_MNL {
            for j in 0..N_MNL {
                corr[(i, j)] = if zero_cols[i] || zero_cols[j] {
                    0.0
                } else {
                    m[(i, j)] / (scale[i] * scale[j])
                };
            }
        }
        let eig = SymmetricEigen::new(corr);
        let mut flagged = [false; N_MNL];
        for (k, val) in eig.eigenvalues.iter().enumerate() {
            if val.abs() < 1e-10 {
                for (i, f) in flagged.iter_mut().enumerate() {
                    if eig.eigenvectors[(i, k)].abs() > 1e-6 {
                        *f = true;
                    }
                }
            }
        }
        (0..N_MNL)
            .filter(|i| flagged[*i] || zero_cols[*i])
            .map(|i| MNL_NAMES[i])
            .collect()
    }
}

pub fn mnl_fit(records: &[ChoiceRecord], annual_pass_interaction: bool) -> Result<MnlFit> {
    mnl_fit_from(records, annual_pass_interaction, &[0.0; N_MNL])
}

/// Newton's method with step halving from `start`.
pub fn mnl_fit_from(records: &[ChoiceRecord], annual_pass_interaction: bool, start: &[f64; N_MNL]) -> Result<MnlFit> {
    if records.len() < MIN_RECORDS {
        return Err(Error::Input(format!(
            "MNL needs at least {MIN_RECORDS} records, got {}",
            records.len()
        )));
    }
    let mut seen = [false; 3];
    for r in records {
        seen[r.chosen.index()] = true;
    }
    if let Some(j) = seen.iter().position(|s| !s) {
        return Err(Error::Input(format!("no record chooses {}", Alternative::ALL[j])));
    }
    let data = Prepared::new(records, annual_pass_interaction);
    let unidentified = data.unidentified();
    if !unidentified.is_empty() {
        return Err(Error::Estimation(format!(
            "collinear or constant regressors; unidentified parameters: {}",
            unidentified.join(", ")
        )));
    }
    let mut b = DVector::from_row_slice(start);
    let (mut ll, mut g, mut h) = data.eval(&b);
    for it in 0..=MAX_NEWTON_ITERATIONS {
        let sup = g.amax();
        if sup < GRADIENT_TOL {
            let cov = (-&h)
                .try_inverse()
                .ok_or_else(|| Error::Estimation("singular information matrix at the optimum".into()))?;
            let se = std::array::from_fn(|i| cov[(i, i)].max(0.0).sqrt());
            let v: [f64; N_MNL] = std::array::from_fn(|i| b[i]);
            return Ok(MnlFit {
                params: MnlParams::from_vec(&v, annual_pass_interaction),
                std_errors: se,
                log_likelihood: ll,
                gradient_sup_norm: sup,
                iterations: it,
                records: records.len(),
            });
        }
        if it == MAX_NEWTON_ITERATIONS {
            break;
        }
        let step = (-&h)
            .cholesky()
            .map(|c| c.solve(&g))
            .ok_or_else(|| Error::Estimation("information matrix is not positive definite".into()))?;
        let mut t = 1.0;
        loop {
            let cand = &b + &step * t;
            let (lc, gc, hc) = data.eval(&cand);
            // Near the optimum the gain falls below rounding of the log-likelihood.
            if lc >= ll - 1e-12 * (1.0 + ll.abs()) || t < 1e-12 {
                b = cand;
                ll = lc;
                g = gc;
                h = hc;
                break;
            }
            t *= 0.5;
        }
    }
    Err(Error::Estimation(format!(
        "MNL did not converge in {MAX_NEWTON_ITERATIONS} iterations; gradient sup-norm {:.3e}",
        g.amax()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures;
    use crate::seeding;
    use rand::Rng;

    /// Records drawn from a known MNL.
    pub fn generated(n: usize, truth: &MnlParams, seed: u64) -> Vec<ChoiceRecord> {
        let mut rng = seeding::derived(seed, "mnl-gen", &[]);
        let base = fixtures::panels(1, 1)[0].records().next().unwrap();
        (0..n)
            .map(|i| {
                let mut r = base.clone();
                r.key.seq = i as u16;
                r.key.respondent = crate::data::RespondentId(i as u32);
                for alt in Alternative::ALL {
                    let a = match alt {
                        Alternative::Train => &mut r.context.train,
                        Alternative::Swissmetro => &mut r.context.swissmetro,
                        Alternative::Car => &mut r.context.car,
                    };
                    a.cost = rng.random_range(0.0..200.0);
                    a.travel_time = rng.random_range(20.0..300.0);
                    a.headway = if alt == Alternative::Car {
                        0.0
                    } else {
                        rng.random_range(5.0..120.0)
                    };
                }
                let (p, _) = mnl_predict(truth, &r.context);
                let u: f64 = rng.random();
                r.chosen = if u < p[0] {
                    Alternative::Train
                } else if u < p[0] + p[1] {
                    Alternative::Swissmetro
                } else {
                    Alternative::Car
                };
                r
            })
            .collect()
    }

    fn truth() -> MnlParams {
        MnlParams {
            asc_train: -0.3,
            asc_swissmetro: 0.4,
            beta_time: -0.01,
            beta_cost: -0.011,
            beta_headway: -0.006,
            annual_pass_interaction: false,
        }
    }

    #[test]
    fn recovers_known_parameters() {
        let recs = generated(5000, &truth(), 1);
        let fit = mnl_fit(&recs, false).unwrap();
        assert!(fit.gradient_sup_norm < GRADIENT_TOL);
        let p = fit.params;
        assert!((p.beta_time / -0.01 - 1.0).abs() < 0.1, "{p:?}");
        assert!((p.beta_cost / -0.011 - 1.0).abs() < 0.1, "{p:?}");
        let other = mnl_fit_from(&recs, false, &[1.0, -1.0, 0.05, 0.02, -0.03]).unwrap();
        for (a, b) in p.to_vec().iter().zip(other.params.to_vec()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn identical_alternatives_are_unidentified() {
        let mut recs = generated(300, &truth(), 2);
        for r in &mut recs {
            r.context.swissmetro = r.context.train;
            r.context.car = r.context.train;
            r.context.car.headway = 0.0;
            r.context.train.headway = 0.0;
            r.context.swissmetro.headway = 0.0;
        }
        match mnl_fit(&recs, false) {
            Err(Error::Estimation(msg)) => {
                for name in ["beta_time", "beta_cost", "beta_headway"] {
                    assert!(msg.contains(name), "{msg}");
                }
                assert!(!msg.contains("asc_train"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn prediction_laws() {
        let ctx = fixtures::context(4);
        let flat = MnlParams::from_vec(&[0.0; N_MNL], false);
        assert_eq!(mnl_predict(&flat, &ctx).0, [1.0 / 3.0; 3]);
        let mut c = ctx;
        c.car.cost = 1e6;
        let (p, _) = mnl_predict(&truth(), &c);
        assert!(p[2] < 1e-100);
        for r in generated(1000, &truth(), 3) {
            let (p, _) = mnl_predict(&truth(), &r.context);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shifting_all_utilities_leaves_probabilities() {
        let ctx = fixtures::context(9);
        let u = truth().utilities(&ctx);
        let a = softmax(u);
        let b = softmax(u.map(|x| x + 123.456));
        for j in 0..3 {
            assert!((a[j] - b[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn annual_pass_zeroes_rail_cost() {
        let mut ctx = fixtures::context(2);
        ctx.annual_pass = true;
        assert_eq!(features(&ctx, Alternative::Train, true)[3], 0.0);
        assert_eq!(features(&ctx, Alternative::Car, true)[3], ctx.car.cost);
        assert_eq!(features(&ctx, Alternative::Train, false)[3], ctx.train.cost);
    }

    #[test]
    fn too_few_records_rejected() {
        let recs = generated(10, &truth(), 4);
        assert!(matches!(mnl_fit(&recs, false), Err(Error::Input(_))));
    }
}
