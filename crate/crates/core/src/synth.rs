//! Synthetic learning curves with planted shapes and predictor effects.
//!
//! Randomness comes from [`CounterRng`] streams keyed by (seed, run,
//! example), so output does not depend on thread count or generation order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::KeyValues;
use crate::curves::{CheckpointGrid, ExampleId, SurprisalMatrix};
use crate::error::{Error, Result};
use crate::features::{ExampleFeatures, Upos, WordPosition, UPOS_TAGS};
use crate::rng::{hash_str, CounterRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    Sigmoid,
    SigmoidSpike,
    Monotone,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    pub family: Family,
    pub ceiling: f64,
    pub floor: f64,
    /// log10 step of the descent midpoint.
    pub midpoint: f64,
    pub slope: f64,
    pub spike_position: f64,
    pub spike_height: f64,
    /// Standard deviation of the Gaussian bump, in log10 steps.
    pub spike_width: f64,
    pub noise_std: f64,
}

impl CurveSpec {
    pub fn sigmoid(ceiling: f64, floor: f64, midpoint: f64, slope: f64) -> Self {
        Self {
            family: Family::Sigmoid,
            ceiling,
            floor,
            midpoint,
            slope,
            spike_position: 0.0,
            spike_height: 0.0,
            spike_width: 1.0,
            noise_std: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.ceiling,
            self.floor,
            self.midpoint,
            self.slope,
            self.spike_position,
            self.spike_height,
            self.spike_width,
            self.noise_std,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Param("curve spec has non-finite fields".into()));
        }
        if self.floor > self.ceiling {
            return Err(Error::Param(format!(
                "floor {} exceeds ceiling {}",
                self.floor, self.ceiling
            )));
        }
        if self.noise_std < 0.0 {
            return Err(Error::Param("noise std must be non-negative".into()));
        }
        if matches!(self.family, Family::Sigmoid | Family::SigmoidSpike | Family::Monotone) && self.slope <= 0.0 {
            return Err(Error::Param("slope must be positive".into()));
        }
        if self.family == Family::SigmoidSpike && self.spike_width <= 0.0 {
            return Err(Error::Param("spike width must be positive".into()));
        }
        Ok(())
    }

    /// Noise-free value at log10 step `x`.
    pub fn value(&self, x: f64) -> f64 {
        let span = self.ceiling - self.floor;
        match self.family {
            Family::Constant => self.floor,
            Family::Monotone => {
                let t = ((x - (self.midpoint - 1.0 / self.slope)) * self.slope / 2.0).clamp(0.0, 1.0);
                self.ceiling - span * t
            }
            Family::Sigmoid | Family::SigmoidSpike => {
                let base = self.ceiling - span / (1.0 + (-self.slope * (x - self.midpoint)).exp());
                if self.family == Family::SigmoidSpike {
                    let z = (x - self.spike_position) / self.spike_width;
                    base + self.spike_height * (-0.5 * z * z).exp()
                } else {
                    base
                }
            }
        }
    }
}

fn noisy_row(spec: &CurveSpec, grid: &CheckpointGrid, rng: &mut CounterRng) -> Vec<f32> {
    grid.steps()
        .iter()
        .map(|&s| {
            let clean = if s == 0 { spec.ceiling } else { spec.value((s as f64).log10()) };
            let v = if spec.noise_std > 0.0 {
                clean + spec.noise_std * rng.normal()
            } else {
                clean
            };
            v.max(0.0) as f32
        })
        .collect()
}

/// One run with a row per spec; example `i` gets id `i:1 + i % 31` unless
/// ids are given.
pub fn generate_run(
    specs: &[CurveSpec],
    grid: &CheckpointGrid,
    ids: Option<&[ExampleId]>,
    seed: u64,
    run_id: &str,
) -> Result<SurprisalMatrix> {
    if specs.is_empty() {
        return Err(Error::Param("no curve specs".into()));
    }
    for s in specs {
        s.validate()?;
    }
    let ids: Vec<ExampleId> = match ids {
        Some(ids) if ids.len() == specs.len() => ids.to_vec(),
        Some(_) => return Err(Error::Param("one example id per spec is required".into())),
        None => default_ids(specs.len()),
    };
    let base = CounterRng::new(seed);
    let rows: Vec<Vec<f32>> = specs
        .par_iter()
        .enumerate()
        .map(|(i, spec)| noisy_row(spec, grid, &mut base.stream(i as u64)))
        .collect();
    SurprisalMatrix::new(run_id, grid.clone(), ids, rows.concat())
}

pub fn default_ids(n: usize) -> Vec<ExampleId> {
    (0..n)
        .map(|i| ExampleId {
            sequence_index: i as u32,
            token_position: 1 + (i % 31) as u32,
        })
        .collect()
}

/// Effect plan for a synthetic cohort. Floors and midpoints are linear in
/// the planted features; noise is heteroscedastic in the floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortPlan {
    pub n_examples: usize,
    pub n_runs: usize,
    pub vocab_size: usize,
    pub seed: u64,
    pub floor_base: f64,
    pub floor_log_freq: f64,
    pub floor_fg_resid: f64,
    pub floor_ctx_loglen: f64,
    pub floor_ctx_logprob: f64,
    pub floor_noise: f64,
    pub mid_base: f64,
    pub mid_log_freq: f64,
    pub mid_div_resid: f64,
    pub mid_noise: f64,
    pub slope: f64,
    /// Per-checkpoint noise std = noise_base + noise_per_bit * floor.
    pub noise_base: f64,
    pub noise_per_bit: f64,
    /// Run-specific midpoint jitter (log10 steps).
    pub run_mid_jitter: f64,
    pub spike_fraction: f64,
    pub spike_height_min: f64,
    pub spike_height_max: f64,
    pub spike_width: f64,
    /// Spikes are centred at least this far (log10 steps) past the midpoint.
    pub spike_offset: f64,
}

impl Default for CohortPlan {
    fn default() -> Self {
        Self {
            n_examples: 10_000,
            n_runs: 5,
            vocab_size: 50_004,
            seed: 7,
            floor_base: 6.0,
            floor_log_freq: -0.6,
            floor_fg_resid: -0.8,
            floor_ctx_loglen: -0.4,
            floor_ctx_logprob: -0.3,
            floor_noise: 0.5,
            mid_base: 4.2,
            mid_log_freq: -0.2,
            mid_div_resid: 0.15,
            mid_noise: 0.15,
            slope: 3.0,
            noise_base: 0.1,
            noise_per_bit: 0.06,
            run_mid_jitter: 0.05,
            spike_fraction: 0.1,
            spike_height_min: 4.0,
            spike_height_max: 6.0,
            spike_width: 0.15,
            spike_offset: 0.9,
        }
    }
}

impl CohortPlan {
    /// Read a plan from `key = value` pairs; absent keys keep their defaults.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut map = serde_json::Map::new();
        for (k, v) in &kv.entries {
            let num = if let Ok(u) = v.parse::<u64>() {
                serde_json::Value::from(u)
            } else if let Ok(f) = v.parse::<f64>() {
                serde_json::Value::from(f)
            } else {
                return Err(Error::Config(vec![format!("`{k}`: cannot parse `{v}`")]));
            };
            map.insert(k.clone(), num);
        }
        let plan: Self = serde_json::from_value(serde_json::Value::Object(map))
            .map_err(|e| Error::Config(vec![e.to_string()]))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.n_examples < 10 {
            errs.push("n_examples must be at least 10".to_string());
        }
        if self.n_runs == 0 {
            errs.push("n_runs must be at least 1".to_string());
        }
        if self.vocab_size < 2 {
            errs.push("vocab_size must be at least 2".to_string());
        }
        if !(0.0..=1.0).contains(&self.spike_fraction) {
            errs.push("spike_fraction must lie in [0, 1]".to_string());
        }
        if self.slope <= 0.0 || self.spike_width <= 0.0 {
            errs.push("slope and spike_width must be positive".to_string());
        }
        if self.spike_height_min > self.spike_height_max {
            errs.push("spike_height_min exceeds spike_height_max".to_string());
        }
        if self.noise_base < 0.0 || self.noise_per_bit < 0.0 || self.floor_noise < 0.0 || self.mid_noise < 0.0 {
            errs.push("noise parameters must be non-negative".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

#[derive(Debug, Clone)]
pub struct Cohort {
    pub runs: Vec<SurprisalMatrix>,
    pub features: Vec<ExampleFeatures>,
    pub spike: Vec<bool>,
    pub specs: Vec<CurveSpec>,
}

/// Draw the ground-truth feature table for a plan.
pub fn planted_features(plan: &CohortPlan) -> Vec<ExampleFeatures> {
    let base = CounterRng::new(plan.seed).stream(hash_str("features"));
    default_ids(plan.n_examples)
        .into_par_iter()
        .enumerate()
        .map(|(i, id)| {
            let mut r = base.stream(i as u64);
            ExampleFeatures {
                id,
                log_freq: -12.0 + 2.5 * r.normal(),
                fg_resid: r.normal(),
                ctx_loglen: f64::from(id.token_position).ln(),
                ctx_logprob: -11.0 + r.normal(),
                div_resid: 20.0 * r.normal(),
                pos: Some(Upos::all().nth(r.below(UPOS_TAGS.len() as u64) as usize).unwrap()),
                word_pos: Some(WordPosition::ALL[r.below(4) as usize]),
            }
        })
        .collect()
}

/// Runs plus the feature table they were planted from.
pub fn generate_cohort(plan: &CohortPlan, grid: &CheckpointGrid) -> Result<Cohort> {
    plan.validate()?;
    let chance = (plan.vocab_size as f64).log2();
    let features = planted_features(plan);
    let xs = grid.log10_steps();
    let (x_lo, x_hi) = (xs[0], *xs.last().unwrap());
    let spec_rng = CounterRng::new(plan.seed).stream(hash_str("specs"));
    let cll_mean = features.iter().map(|f| f.ctx_loglen).sum::<f64>() / features.len() as f64;
    let drawn: Vec<(CurveSpec, bool)> = features
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let mut r = spec_rng.stream(i as u64);
            let floor = (plan.floor_base
                + plan.floor_log_freq * (f.log_freq + 12.0)
                + plan.floor_fg_resid * f.fg_resid
                + plan.floor_ctx_loglen * (f.ctx_loglen - cll_mean)
                + plan.floor_ctx_logprob * (f.ctx_logprob + 11.0)
                + plan.floor_noise * r.normal())
            .clamp(0.5, chance - 2.0);
            let midpoint = (plan.mid_base
                + plan.mid_log_freq * (f.log_freq + 12.0)
                + plan.mid_div_resid * f.div_resid / 20.0
                + plan.mid_noise * r.normal())
            .clamp(x_lo + 0.6, x_hi - 0.9);
            let spike = r.next_f64() < plan.spike_fraction;
            let mut spec = CurveSpec::sigmoid(chance, floor, midpoint, plan.slope);
            spec.noise_std = plan.noise_base + plan.noise_per_bit * floor;
            if spike {
                spec.family = Family::SigmoidSpike;
                spec.spike_height = r.uniform(plan.spike_height_min, plan.spike_height_max);
                spec.spike_position = r.uniform(midpoint + plan.spike_offset, x_hi - 0.4).max(midpoint + plan.spike_offset.min(0.3));
                spec.spike_width = plan.spike_width;
            }
            (spec, spike)
        })
        .collect();
    let (specs, spike): (Vec<CurveSpec>, Vec<bool>) = drawn.into_iter().unzip();
    let ids: Vec<ExampleId> = features.iter().map(|f| f.id).collect();
    let runs = (0..plan.n_runs)
        .map(|k| {
            let mut jr = CounterRng::new(plan.seed).stream(hash_str(&format!("jitter-{k}")));
            let run_specs: Vec<CurveSpec> = specs
                .iter()
                .map(|s| {
                    let mut s = s.clone();
                    let d = plan.run_mid_jitter * jr.normal();
                    s.midpoint += d;
                    if s.family == Family::SigmoidSpike {
                        s.spike_position += d;
                    }
                    s
                })
                .collect();
            let seed = CounterRng::new(plan.seed).stream(hash_str(&format!("run-{k}"))).next_u64();
            generate_run(&run_specs, grid, Some(&ids), seed, &format!("run{k}"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Cohort {
        runs,
        features,
        spike,
        specs,
    })
}

/// A run whose surprisals move from order-1 scores to order-N scores over
/// training: at a log-step fraction u of the way through the grid the row
/// interpolates linearly between consecutive orders.
pub fn interpolation_run(ngram_scores: &[Vec<f64>], grid: &CheckpointGrid, noise_std: f64, seed: u64) -> Result<SurprisalMatrix> {
    let orders = ngram_scores.len();
    if orders < 2 {
        return Err(Error::Param("interpolation needs scores for at least two orders".into()));
    }
    let n = ngram_scores[0].len();
    if ngram_scores.iter().any(|s| s.len() != n) || n == 0 {
        return Err(Error::Param("n-gram score vectors must be non-empty and equal length".into()));
    }
    let steps = grid.steps();
    let xs: Vec<f64> = steps.iter().map(|&s| if s == 0 { f64::NAN } else { (s as f64).log10() }).collect();
    let first = grid.first_nonzero();
    let (x0, x1) = (xs[first], *xs.last().unwrap());
    let base = CounterRng::new(seed);
    let rows: Vec<Vec<f32>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = base.stream(i as u64);
            xs.iter()
                .map(|&x| {
                    let u = if x.is_nan() { 0.0 } else { (x - x0) / (x1 - x0) * (orders - 1) as f64 };
                    let k = (u.floor() as usize).min(orders - 2);
                    let f = u - k as f64;
                    let v = (1.0 - f) * ngram_scores[k][i] + f * ngram_scores[k + 1][i] + noise_std * r.normal();
                    v.max(0.0) as f32
                })
                .collect()
        })
        .collect();
    SurprisalMatrix::new("interp", grid.clone(), default_ids(n), rows.concat())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;
    use crate::gamfit::{fit_gam, GamConfig, GamSmoother};
    use crate::metrics::{aoa_from_values, final_surprisal, forgettability_from_values, run_variability_from_values};
    use crate::regress::{sign_triple, Column, Sign};
    use crate::schedule::{schedule_steps, ScheduleParams};

    fn grid() -> CheckpointGrid {
        CheckpointGrid::new(schedule_steps(&ScheduleParams::reference()).unwrap()).unwrap()
    }

    #[test]
    fn constant_spec_gives_equal_columns() {
        let mut s = CurveSpec::sigmoid(15.0, 4.0, 4.0, 3.0);
        s.family = Family::Constant;
        let g = CheckpointGrid::new(vec![10, 100, 1000]).unwrap();
        let m = generate_run(&[s.clone(), s], &g, None, 1, "c").unwrap();
        assert!(m.row(0).iter().all(|&v| v == 4.0));
    }

    #[test]
    fn same_seed_bit_identical() {
        let g = grid();
        let mut s = CurveSpec::sigmoid(15.6, 3.0, 4.5, 3.0);
        s.noise_std = 0.7;
        let specs = vec![s; 50];
        let a = generate_run(&specs, &g, None, 9, "a").unwrap();
        let b = generate_run(&specs, &g, None, 9, "a").unwrap();
        let c = generate_run(&specs, &g, None, 10, "a").unwrap();
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn noiseless_sigmoid_aoa_near_midpoint() {
        let g = grid();
        let chance = 50_004f64.log2();
        let m = generate_run(&[CurveSpec::sigmoid(chance, 3.0, 4.5, 3.0)], &g, None, 1, "s").unwrap();
        let xs = g.log10_steps();
        let y: Vec<f64> = m.row_f64(0)[1..].to_vec();
        let fit = fit_gam(&xs, &y, &GamConfig::default()).unwrap();
        let a = aoa_from_values(&fit.evaluate_grid(&xs), &xs, chance).unwrap();
        assert!((a.x - 4.5).abs() < 0.05, "{}", a.x);
    }

    #[test]
    fn spike_forgettability_matches_height() {
        let g = grid();
        let xs = g.log10_steps();
        let smoother = GamSmoother::new(&xs, &GamConfig::default()).unwrap();
        for (pos, height) in [(5.3, 4.0), (5.0, 5.0), (5.6, 6.0)] {
            let mut s = CurveSpec::sigmoid(15.6, 3.0, 3.8, 3.0);
            s.family = Family::SigmoidSpike;
            s.spike_position = pos;
            s.spike_height = height;
            s.spike_width = CohortPlan::default().spike_width;
            let y: Vec<f64> = xs.iter().map(|&x| s.value(x)).collect();
            let fit = smoother.fit(&y).unwrap();
            let fitted = forgettability_from_values(&fit.evaluate_grid(&xs));
            // dense evaluation of the noise-free curve on a fine grid
            let dense: Vec<f64> = (0..=20_000).map(|k| s.value(xs[0] + (xs[xs.len() - 1] - xs[0]) * k as f64 / 20_000.0)).collect();
            let truth = forgettability_from_values(&dense);
            assert!((fitted - truth).abs() <= 0.15 * truth, "pos {pos}: {fitted} vs {truth}");
        }
    }

    #[test]
    fn interpolation_run_endpoints() {
        let g = CheckpointGrid::new(vec![0, 10, 100, 1000]).unwrap();
        let scores = vec![vec![5.0, 6.0], vec![3.0, 2.0], vec![1.0, 1.5]];
        let m = interpolation_run(&scores, &g, 0.0, 1).unwrap();
        assert_eq!(m.row(0), &[5.0, 5.0, 3.0, 1.0]);
        assert_eq!(m.row(1), &[6.0, 6.0, 2.0, 1.5]);
    }

    fn late_surprisal(c: &Cohort, g: &CheckpointGrid) -> Vec<f64> {
        (0..c.features.len())
            .map(|i| {
                let per_run: Vec<f64> = c.runs.iter().map(|r| final_surprisal(&r.row_f64(i), g, 1_000_000).unwrap()).collect();
                per_run.iter().sum::<f64>() / per_run.len() as f64
            })
            .collect()
    }

    fn columns(c: &Cohort) -> Vec<Column> {
        vec![
            ("log_freq".into(), c.features.iter().map(|f| f.log_freq).collect()),
            ("fg_resid".into(), c.features.iter().map(|f| f.fg_resid).collect()),
            ("ctx_loglen".into(), c.features.iter().map(|f| f.ctx_loglen).collect()),
        ]
    }

    #[test]
    fn zero_noise_plan_recovers_signs() {
        let g = grid();
        let plan = CohortPlan {
            n_examples: 600,
            n_runs: 1,
            floor_noise: 0.0,
            mid_noise: 0.0,
            noise_base: 0.0,
            noise_per_bit: 0.0,
            spike_fraction: 0.0,
            ..CohortPlan::default()
        };
        let c = generate_cohort(&plan, &g).unwrap();
        let y = late_surprisal(&c, &g);
        let cols = columns(&c);
        for name in ["fg_resid", "ctx_loglen"] {
            let t = sign_triple(name, &cols, &y, "log_freq").unwrap();
            assert_eq!((t.full, t.alone, t.alone_freq_resid), (Sign::Neg, Sign::Neg, Sign::Neg), "{name}");
        }
        let t = sign_triple("log_freq", &cols, &y, "log_freq").unwrap();
        assert_eq!((t.full, t.alone), (Sign::Neg, Sign::Neg));
    }

    #[test]
    fn noisy_frequency_effect_recovered_across_seeds() {
        let g = grid();
        let mut hits = 0;
        for seed in 0..20 {
            let plan = CohortPlan {
                n_examples: 400,
                n_runs: 1,
                seed,
                floor_noise: 0.5,
                floor_fg_resid: 0.0,
                floor_ctx_loglen: 0.0,
                floor_ctx_logprob: 0.0,
                spike_fraction: 0.0,
                ..CohortPlan::default()
            };
            let c = generate_cohort(&plan, &g).unwrap();
            let y = late_surprisal(&c, &g);
            let cols = columns(&c);
            let t = sign_triple("log_freq", &cols, &y, "log_freq").unwrap();
            // residualizing on the predictor itself leaves nothing to explain
            if t.full == Sign::Neg && t.alone == Sign::Neg && t.alone_freq_resid == Sign::Zero {
                hits += 1;
            }
        }
        assert!(hits >= 19, "{hits}/20");
    }

    #[test]
    fn run_variability_grows_with_noise() {
        let g = grid();
        let xs = g.log10_steps();
        let smoother = GamSmoother::new(&xs, &GamConfig::default()).unwrap();
        let mut last = -1.0;
        for noise in [0.0, 0.2, 0.5, 1.0] {
            let mut spec = CurveSpec::sigmoid(15.6, 4.0, 4.2, 3.0);
            spec.noise_std = noise;
            let specs = vec![spec; 40];
            let runs: Vec<SurprisalMatrix> = (0..3).map(|k| generate_run(&specs, &g, None, 100 + k, "r").unwrap()).collect();
            let mut total = 0.0;
            for i in 0..40 {
                let fits: Vec<Vec<f64>> = runs.iter().map(|r| smoother.fit(&r.row_f64(i)[1..]).unwrap().evaluate_grid(&xs)).collect();
                let refs: Vec<&[f64]> = fits.iter().map(Vec::as_slice).collect();
                total += run_variability_from_values(&refs).unwrap();
            }
            assert!(total > last, "noise {noise}: {total} <= {last}");
            last = total;
        }
    }

    #[test]
    fn plan_validation_aggregates() {
        let bad = CohortPlan { n_examples: 1, spike_fraction: 2.0, ..CohortPlan::default() };
        match bad.validate() {
            Err(Error::Config(v)) => assert_eq!(v.len(), 2),
            other => panic!("{other:?}"),
        }
        let mut s = CurveSpec::sigmoid(3.0, 5.0, 4.0, 1.0);
        assert!(s.validate().is_err());
        s.floor = 1.0;
        s.noise_std = -1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn plan_from_key_values() {
        let kv = KeyValues::parse("n_examples = 200\nslope = 2\nnoise_base = 0.25\n", Path::new(".")).unwrap();
        let plan = CohortPlan::from_kv(&kv).unwrap();
        assert_eq!(plan.n_examples, 200);
        assert_eq!(plan.slope, 2.0);
        assert_eq!(plan.noise_base, 0.25);
        assert_eq!(plan.n_runs, CohortPlan::default().n_runs);
        let kv = KeyValues::parse("bogus = 1\n", Path::new(".")).unwrap();
        assert!(matches!(CohortPlan::from_kv(&kv), Err(Error::Config(_))));
    }
}
