//! Gaussian hierarchical regression with group intercepts, an optional
//! group slope, and fixed effects switched on or off by a selection mask.
//!
//! `y_n = alpha[g] + t_n * slope[g] + sum_p sel_p * x_np * beta_p + noise`.
//!
//! Parameter layout: group intercepts (or their standardized offsets),
//! group slopes if present, `beta`, `mu_alpha`, `log_sigma_alpha`,
//! `mu_slope` and `log_sigma_slope` if present, `log_sigma_y`.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::priors::{NormalPrior, ScalePrior, HALF_LN_2PI};
use crate::error::{Error, Result};
use crate::folds::{FoldAssignment, FoldMasks};
use crate::model::Model;
use crate::scoring::Score;

/// Hyperpriors of one group-level effect.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupEffect {
    pub mean: NormalPrior,
    pub scale: ScalePrior,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierSpec {
    pub name: String,
    pub intercept: GroupEffect,
    /// Random slope on the slope covariate.
    pub slope: Option<GroupEffect>,
    /// Sample standardized group effects instead of the effects themselves.
    pub noncentered: bool,
    pub beta: Vec<NormalPrior>,
    pub selection: Vec<bool>,
    pub sigma_y: ScalePrior,
}

#[derive(Clone, Debug)]
struct FoldLayout {
    /// Test observations whose group has training data.
    seen: Vec<usize>,
    /// Test observations of groups absent from training, one block per group.
    unseen: Vec<Vec<usize>>,
}

#[derive(Clone, Debug)]
pub struct HierGaussian {
    spec: HierSpec,
    y: Vec<f64>,
    group: Vec<usize>,
    n_groups: usize,
    slope_x: Vec<f64>,
    x: Vec<Vec<f64>>,
    folds: FoldAssignment,
    masks: FoldMasks,
    layout: Vec<FoldLayout>,
}

/// Constrained view of a parameter vector.
struct Unpacked {
    alpha: Vec<f64>,
    slope: Vec<f64>,
    mu_a: f64,
    sig_a: f64,
    mu_b: f64,
    sig_b: f64,
    sig_y: f64,
}

impl HierGaussian {
    pub fn new(
        spec: HierSpec,
        y: Vec<f64>,
        group: Vec<usize>,
        slope_x: Option<Vec<f64>>,
        x: Vec<Vec<f64>>,
        folds: FoldAssignment,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::invalid("empty dataset"));
        }
        if group.len() != n || x.len() != n {
            return Err(Error::invalid("response, group and covariate lengths differ"));
        }
        let p = spec.beta.len();
        if spec.selection.len() != p {
            return Err(Error::invalid(format!(
                "selection mask has length {}, model has {p} fixed effects",
                spec.selection.len()
            )));
        }
        if x.iter().any(|row| row.len() != p) {
            return Err(Error::invalid(format!("covariate rows must have {p} entries")));
        }
        if spec.slope.is_some() != slope_x.is_some() {
            return Err(Error::invalid("random slope needs exactly one slope covariate"));
        }
        let slope_x = slope_x.unwrap_or_else(|| vec![0.0; n]);
        if slope_x.len() != n {
            return Err(Error::invalid("slope covariate length differs from response"));
        }
        let n_groups = group.iter().max().map_or(0, |g| g + 1);
        let mut present = vec![false; n_groups];
        for &g in &group {
            present[g] = true;
        }
        if present.iter().any(|p| !p) {
            return Err(Error::invalid("group ids must cover 0..J-1"));
        }
        if folds.n_obs() != n {
            return Err(Error::invalid(format!(
                "fold assignment covers {} observations, data has {n}",
                folds.n_obs()
            )));
        }
        folds.validate_training()?;
        let masks = FoldMasks::new(&folds);
        let layout = (0..=folds.k)
            .map(|k| {
                let train = masks.train(k);
                let mut seen_group = vec![false; n_groups];
                for i in 0..n {
                    if train[i] > 0.0 {
                        seen_group[group[i]] = true;
                    }
                }
                let mut seen = Vec::new();
                let mut blocks: Vec<(usize, Vec<usize>)> = Vec::new();
                for &i in masks.test(k) {
                    let g = group[i];
                    if seen_group[g] {
                        seen.push(i);
                    } else if let Some(b) = blocks.iter_mut().find(|b| b.0 == g) {
                        b.1.push(i);
                    } else {
                        blocks.push((g, vec![i]));
                    }
                }
                FoldLayout {
                    seen,
                    unseen: blocks.into_iter().map(|b| b.1).collect(),
                }
            })
            .collect();
        Ok(HierGaussian {
            spec,
            y,
            group,
            n_groups,
            slope_x,
            x,
            folds,
            masks,
            layout,
        })
    }

    pub fn spec(&self) -> &HierSpec {
        &self.spec
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    /// The same model with a different fixed-effect selection.
    pub fn with_selection(&self, name: &str, selection: Vec<bool>) -> Result<Self> {
        if selection.len() != self.spec.beta.len() {
            return Err(Error::invalid(format!(
                "selection mask has length {}, model has {} fixed effects",
                selection.len(),
                self.spec.beta.len()
            )));
        }
        let mut out = self.clone();
        out.spec.selection = selection;
        out.spec.name = name.to_string();
        Ok(out)
    }

    /// Log joint of the nested model selected by `selection`, evaluated
    /// through this model's parameter space.
    pub fn masked_model_log_joint(&self, selection: &[bool], params: &[f64], fold: usize) -> Result<f64> {
        let nested = self.with_selection(&self.spec.name, selection.to_vec())?;
        Ok(nested.log_joint(params, fold))
    }

    fn has_slope(&self) -> bool {
        self.spec.slope.is_some()
    }

    fn n_fixed(&self) -> usize {
        self.spec.beta.len()
    }

    fn off_beta(&self) -> usize {
        self.n_groups * if self.has_slope() { 2 } else { 1 }
    }

    fn i_mu_a(&self) -> usize {
        self.off_beta() + self.n_fixed()
    }

    fn i_mu_b(&self) -> usize {
        self.i_mu_a() + 2
    }

    fn i_s_y(&self) -> usize {
        self.dim() - 1
    }

    fn unpack(&self, params: &[f64]) -> Unpacked {
        let j = self.n_groups;
        let mu_a = params[self.i_mu_a()];
        let sig_a = params[self.i_mu_a() + 1].exp();
        let (mu_b, sig_b) = if self.has_slope() {
            (params[self.i_mu_b()], params[self.i_mu_b() + 1].exp())
        } else {
            (0.0, 0.0)
        };
        let effect = |raw: &[f64], mu: f64, sig: f64| -> Vec<f64> {
            if self.spec.noncentered {
                raw.iter().map(|z| mu + sig * z).collect()
            } else {
                raw.to_vec()
            }
        };
        let alpha = effect(&params[..j], mu_a, sig_a);
        let slope = if self.has_slope() {
            effect(&params[j..2 * j], mu_b, sig_b)
        } else {
            vec![0.0; j]
        };
        Unpacked {
            alpha,
            slope,
            mu_a,
            sig_a,
            mu_b,
            sig_b,
            sig_y: params[self.i_s_y()].exp(),
        }
    }

    fn fixed_part(&self, params: &[f64], n: usize) -> f64 {
        let beta = &params[self.off_beta()..self.off_beta() + self.n_fixed()];
        self.x[n]
            .iter()
            .zip(beta)
            .zip(&self.spec.selection)
            .filter(|(_, &sel)| sel)
            .map(|((x, b), _)| x * b)
            .sum()
    }

    fn eta(&self, params: &[f64], u: &Unpacked, n: usize) -> f64 {
        let g = self.group[n];
        u.alpha[g] + self.slope_x[n] * u.slope[g] + self.fixed_part(params, n)
    }

    /// Adds the prior of one group effect and its hyperparameters.
    #[allow(clippy::too_many_arguments)]
    fn effect_prior(
        &self,
        params: &[f64],
        offset: usize,
        i_mu: usize,
        effect: &GroupEffect,
        lik_sums: &[f64],
        grad: &mut [f64],
    ) -> f64 {
        let mu = params[i_mu];
        let s = params[i_mu + 1];
        let sig = s.exp();
        let var = sig * sig;
        let mut lp = 0.0;
        for g in 0..self.n_groups {
            let v = params[offset + g];
            if self.spec.noncentered {
                lp += -0.5 * v * v - HALF_LN_2PI;
                grad[offset + g] += sig * lik_sums[g] - v;
                grad[i_mu] += lik_sums[g];
                grad[i_mu + 1] += sig * lik_sums[g] * v;
            } else {
                let r = v - mu;
                lp += -0.5 * r * r / var - s - HALF_LN_2PI;
                grad[offset + g] += lik_sums[g] - r / var;
                grad[i_mu] += r / var;
                grad[i_mu + 1] += r * r / var - 1.0;
            }
        }
        let (lm, gm) = effect.mean.lp_grad(mu);
        let (ls, gs) = effect.scale.lp_grad(s);
        grad[i_mu] += gm;
        grad[i_mu + 1] += gs;
        lp + lm + ls
    }

    fn log_joint_impl(&self, params: &[f64], fold: usize, grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let u = self.unpack(params);
        let w = self.masks.train(fold);
        let j = self.n_groups;
        let off_beta = self.off_beta();
        let s_y = params[self.i_s_y()];
        let inv_var = 1.0 / (u.sig_y * u.sig_y);
        let mut e_g = vec![0.0; j];
        let mut t_g = vec![0.0; j];
        let mut lp = 0.0;
        let mut ss = 0.0;
        let mut w_sum = 0.0;
        for n in 0..self.y.len() {
            let r = self.y[n] - self.eta(params, &u, n);
            let e = w[n] * r * inv_var;
            lp += w[n] * (-0.5 * r * r * inv_var - s_y - HALF_LN_2PI);
            ss += w[n] * r * r;
            w_sum += w[n];
            let g = self.group[n];
            e_g[g] += e;
            t_g[g] += e * self.slope_x[n];
            for p in 0..self.n_fixed() {
                if self.spec.selection[p] {
                    grad[off_beta + p] += e * self.x[n][p];
                }
            }
        }
        grad[self.i_s_y()] += ss * inv_var - w_sum;

        lp += self.effect_prior(params, 0, self.i_mu_a(), &self.spec.intercept, &e_g, grad);
        if let Some(slope) = &self.spec.slope {
            lp += self.effect_prior(params, j, self.i_mu_b(), slope, &t_g, grad);
        }
        for (p, prior) in self.spec.beta.iter().enumerate() {
            let (l, g) = prior.lp_grad(params[off_beta + p]);
            lp += l;
            grad[off_beta + p] += g;
        }
        let (l, g) = self.spec.sigma_y.lp_grad(s_y);
        grad[self.i_s_y()] += g;
        lp + l
    }

    /// Joint log density of an unseen group's test block with the group
    /// effects integrated out.
    fn marginal_block(&self, params: &[f64], u: &Unpacked, block: &[usize]) -> f64 {
        let a = u.sig_y * u.sig_y;
        let c = u.sig_a * u.sig_a;
        let d = u.sig_b * u.sig_b;
        if !(a > 0.0 && a.is_finite() && c.is_finite() && d.is_finite()) {
            return f64::NAN;
        }
        let r: Vec<f64> = block
            .iter()
            .map(|&i| self.y[i] - (u.mu_a + self.slope_x[i] * u.mu_b + self.fixed_part(params, i)))
            .collect();
        let m = block.len() as f64;
        if !self.has_slope() {
            let sum: f64 = r.iter().sum();
            let sq: f64 = r.iter().map(|v| v * v).sum();
            let logdet = (m - 1.0) * a.ln() + (a + m * c).ln();
            let quad = sq / a - c * sum * sum / (a * (a + m * c));
            return -0.5 * quad - 0.5 * logdet - m * HALF_LN_2PI;
        }
        let t: Vec<f64> = block.iter().map(|&i| self.slope_x[i]).collect();
        let cov = DMatrix::from_fn(block.len(), block.len(), |i, k| {
            c + d * t[i] * t[k] + if i == k { a } else { 0.0 }
        });
        let Some(chol) = cov.cholesky() else {
            return f64::NAN;
        };
        let l = chol.l();
        let logdet = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let z = chol.l().solve_lower_triangular(&DVector::from_vec(r)).expect("non-singular factor");
        -0.5 * z.norm_squared() - 0.5 * logdet - m * HALF_LN_2PI
    }
}

impl Model for HierGaussian {
    fn name(&self) -> &str {
        &self.spec.name
    }

    fn dim(&self) -> usize {
        let s = usize::from(self.has_slope());
        self.n_groups * (1 + s) + self.n_fixed() + 2 + 2 * s + 1
    }

    fn param_names(&self) -> Vec<String> {
        let prefix = if self.spec.noncentered { "z_" } else { "" };
        let mut out: Vec<String> = (0..self.n_groups).map(|g| format!("{prefix}alpha[{g}]")).collect();
        if self.has_slope() {
            out.extend((0..self.n_groups).map(|g| format!("{prefix}slope[{g}]")));
        }
        out.extend((0..self.n_fixed()).map(|p| format!("beta[{p}]")));
        out.push("mu_alpha".into());
        out.push("log_sigma_alpha".into());
        if self.has_slope() {
            out.push("mu_slope".into());
            out.push("log_sigma_slope".into());
        }
        out.push("log_sigma_y".into());
        out
    }

    fn folds(&self) -> &FoldAssignment {
        &self.folds
    }

    fn log_prior(&self, params: &[f64]) -> f64 {
        let mut grad = vec![0.0; self.dim()];
        let lp = self.log_joint_impl(params, self.sentinel(), &mut grad);
        lp - self.pointwise_log_lik(params).iter().sum::<f64>()
    }

    fn log_joint(&self, params: &[f64], fold: usize) -> f64 {
        let mut grad = vec![0.0; self.dim()];
        self.log_joint_impl(params, fold, &mut grad)
    }

    fn log_joint_grad(&self, params: &[f64], fold: usize, grad: &mut [f64]) -> f64 {
        self.log_joint_impl(params, fold, grad)
    }

    fn log_pred(&self, params: &[f64], fold: usize) -> f64 {
        if fold == self.sentinel() {
            return 0.0;
        }
        let u = self.unpack(params);
        let var = u.sig_y * u.sig_y;
        let layout = &self.layout[fold];
        let mut lp = 0.0;
        for &i in &layout.seen {
            let r = self.y[i] - self.eta(params, &u, i);
            lp += -0.5 * r * r / var - u.sig_y.ln() - HALF_LN_2PI;
        }
        for block in &layout.unseen {
            lp += self.marginal_block(params, &u, block);
        }
        lp
    }

    fn pointwise_log_lik(&self, params: &[f64]) -> Vec<f64> {
        let u = self.unpack(params);
        let var = u.sig_y * u.sig_y;
        (0..self.y.len())
            .map(|i| {
                let r = self.y[i] - self.eta(params, &u, i);
                -0.5 * r * r / var - u.sig_y.ln() - HALF_LN_2PI
            })
            .collect()
    }

    fn test_values(&self, fold: usize) -> Vec<f64> {
        self.masks.test(fold).iter().map(|&i| self.y[i]).collect()
    }

    fn supports(&self, _score: Score) -> bool {
        true
    }

    fn pred_derivs(&self, params: &[f64], fold: usize) -> Option<Vec<(f64, f64)>> {
        let u = self.unpack(params);
        let var = u.sig_y * u.sig_y;
        Some(
            self.masks
                .test(fold)
                .iter()
                .map(|&i| (-(self.y[i] - self.eta(params, &u, i)) / var, -1.0 / var))
                .collect(),
        )
    }

    fn pred_sample(&self, params: &[f64], fold: usize, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let u = self.unpack(params);
        Some(
            self.masks
                .test(fold)
                .iter()
                .map(|&i| {
                    let z: f64 = StandardNormal.sample(rng);
                    self.eta(params, &u, i) + u.sig_y * z
                })
                .collect(),
        )
    }

    fn test_log_density(&self, params: &[f64], fold: usize, y: &[f64]) -> Option<Vec<f64>> {
        let u = self.unpack(params);
        let var = u.sig_y * u.sig_y;
        let test = self.masks.test(fold);
        if y.len() != test.len() {
            return None;
        }
        Some(
            test.iter()
                .zip(y)
                .map(|(&i, v)| {
                    let r = v - self.eta(params, &u, i);
                    -0.5 * r * r / var - u.sig_y.ln() - HALF_LN_2PI
                })
                .collect(),
        )
    }

    fn sample_prior(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let j = self.n_groups;
        let mut out = vec![0.0; self.dim()];
        let mut draw_effect = |effect: &GroupEffect, offset: usize, i_mu: usize, out: &mut Vec<f64>| {
            let mu = effect.mean.sample(rng);
            let sig = effect.scale.sample_sigma(rng).max(1e-12);
            out[i_mu] = mu;
            out[i_mu + 1] = sig.ln();
            for g in 0..j {
                out[offset + g] = if self.spec.noncentered {
                    StandardNormal.sample(rng)
                } else {
                    Normal::new(mu, sig).expect("positive scale").sample(rng)
                };
            }
        };
        draw_effect(&self.spec.intercept, 0, self.i_mu_a(), &mut out);
        if let Some(slope) = &self.spec.slope {
            draw_effect(slope, j, self.i_mu_b(), &mut out);
        }
        let off = self.off_beta();
        for (p, prior) in self.spec.beta.iter().enumerate() {
            out[off + p] = prior.sample(rng);
        }
        let i_s_y = self.i_s_y();
        out[i_s_y] = self.spec.sigma_y.sample_sigma(rng).max(1e-12).ln();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::folds::make_logo_scheme;
    use crate::model::gradient_check;
    use crate::rng::{Purpose, StreamKey};
    use crate::data::Dataset;

    fn toy(slope: bool, noncentered: bool) -> HierGaussian {
        let group = vec![0, 0, 1, 1, 1, 2];
        let y = vec![1.0, 1.4, -0.3, 0.2, 0.0, 2.2];
        let t = vec![1.0, 2.0, 1.0, 2.0, 3.0, 1.5];
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.3 - 0.5, (i % 2) as f64]).collect();
        let ds = Dataset::new(y.clone(), x.clone(), vec!["a".into(), "b".into()], Some(group.clone()), None).unwrap();
        let folds = make_logo_scheme(&ds).unwrap();
        let spec = HierSpec {
            name: "toy".into(),
            intercept: GroupEffect {
                mean: NormalPrior::new(0.0, 1.0),
                scale: ScalePrior::HalfNormal { var: 10.0 },
            },
            slope: slope.then_some(GroupEffect {
                mean: NormalPrior::new(0.5, 2.0),
                scale: ScalePrior::GammaSd { shape: 5.0, rate: 10.0 },
            }),
            noncentered,
            beta: vec![NormalPrior::new(0.0, 1.0); 2],
            selection: vec![true, false],
            sigma_y: ScalePrior::GammaVar { shape: 10.0, rate: 10.0 },
        };
        HierGaussian::new(spec, y, group, slope.then_some(t), x, folds).unwrap()
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (slope, nc) in [(false, false), (false, true), (true, false), (true, true)] {
            let m = toy(slope, nc);
            for k in 0..=m.n_folds() {
                for i in 0..20 {
                    let p = m.sample_prior(&mut StreamKey::new(i, Purpose::Prior).rng(k as u64));
                    let res = gradient_check(&m, &p, k, 1e-5, 1e-4);
                    assert!(res.is_ok(), "slope={slope} nc={nc} fold={k}: {res:?}");
                }
            }
        }
    }

    #[test]
    fn folds_partition_likelihood() {
        let m = toy(true, false);
        let p = m.sample_prior(&mut StreamKey::new(1, Purpose::Prior).rng(0));
        let total: f64 = m.pointwise_log_lik(&p).iter().sum();
        let prior = m.log_prior(&p);
        for k in 0..m.n_folds() {
            let train = m.log_joint(&p, k) - prior;
            let test: f64 = m.folds().test_set(k).iter().map(|&i| m.pointwise_log_lik(&p)[i]).sum();
            assert!((train + test - total).abs() < 1e-10);
        }
        assert!((m.log_joint(&p, m.sentinel()) - prior - total).abs() < 1e-10);
        assert_eq!(m.log_pred(&p, m.sentinel()), 0.0);
    }

    #[test]
    fn slope_marginal_matches_no_slope_when_slope_scale_vanishes() {
        let with = toy(true, false);
        let without = toy(false, false);
        let mut p = with.sample_prior(&mut StreamKey::new(4, Purpose::Prior).rng(0));
        let j = with.n_groups();
        // Zero slope variance and mean: the slope model collapses onto the
        // intercept-only model.
        let i_mu_b = with.i_mu_b();
        p[i_mu_b] = 0.0;
        p[i_mu_b + 1] = -40.0;
        for g in 0..j {
            p[j + g] = 0.0;
        }
        let mut q: Vec<f64> = p[..j].to_vec();
        q.extend_from_slice(&p[2 * j..i_mu_b]);
        q.push(p[p.len() - 1]);
        for k in 0..with.n_folds() {
            let a = with.log_pred(&p, k);
            let b = without.log_pred(&q, k);
            assert!((a - b).abs() < 1e-9, "fold {k}: {a} vs {b}");
        }
    }
}
