//! The named experiments. Each returns raw rows (one JSON object per seed and
//! word) plus summary rows; nothing here reads the clock, so identical configs
//! give identical output.

use crate::config::{BaseKind, ExperimentConfig, ExperimentId};
use crate::HarnessError;
use clgroups::forms::{quadric_coset_sweep, FormKind};
use clgroups::groups::GroupDesc;
use clgroups::linalg::Matrix;
use clgroups::normalsets::{estimate_cd_density, search_word_into_m, NormalSetSpec};
use clgroups::par::{map_tasks, seed_stream};
use clgroups::snlab::{sn_pipeline, PipelineOptions};
use clgroups::spectral::{
    cayley_diameter_bfs, estimate_lambda_power, estimate_return_prob, orbit_bfs, standard_starts, OrbitBase,
};
use clgroups::trajectories::estimate_small_support_prob;
use clgroups::words::Word;
use serde::Serialize;
use serde_json::{json, Value};

/// One line of `summary.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub label: String,
    pub seed: Option<u64>,
    pub metric: String,
    pub value: f64,
    pub pass: Option<bool>,
}

impl SummaryRow {
    fn new(label: impl Into<String>, seed: Option<u64>, metric: &str, value: f64, pass: Option<bool>) -> SummaryRow {
        SummaryRow { label: label.into(), seed, metric: metric.into(), value, pass }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub rows: Vec<Value>,
    pub summary: Vec<SummaryRow>,
}

impl Outcome {
    /// False when any summary row carries a failed check.
    pub fn passed(&self) -> bool {
        self.summary.iter().all(|r| r.pass != Some(false))
    }
}

type Res<T> = Result<T, HarnessError>;

fn group(cfg: &ExperimentConfig) -> Res<GroupDesc> {
    let s = cfg.group.as_deref().ok_or_else(|| HarnessError::Config("missing key 'group'".into()))?;
    Ok(GroupDesc::parse(s)?)
}

fn words(cfg: &ExperimentConfig) -> Res<Vec<Word>> {
    cfg.words.iter().map(|s| Word::parse_auto(s).map_err(HarnessError::from)).collect()
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("reports serialize")
}

fn uniform_tuple(desc: &GroupDesc, k: usize, seed: u64) -> Vec<Matrix> {
    let mut rng = seed_stream(seed, 0);
    (0..k).map(|_| desc.sample_uniform(&mut rng)).collect()
}

pub fn run(cfg: &ExperimentConfig) -> Res<Outcome> {
    cfg.validate()?;
    match cfg.id()? {
        ExperimentId::ReturnProb => return_prob(cfg),
        ExperimentId::Lambda => lambda(cfg),
        ExperimentId::XwzSearch => xwz_search(cfg),
        ExperimentId::CdDensity => cd_density(cfg),
        ExperimentId::SuppTail => supp_tail(cfg),
        ExperimentId::SnPipeline => sn(cfg),
        ExperimentId::DiameterBfs => diameter(cfg),
        ExperimentId::WittCountCheck => witt_count(cfg),
    }
}

fn return_prob(cfg: &ExperimentConfig) -> Res<Outcome> {
    let desc = group(cfg)?;
    let r = cfg.r.unwrap_or(1);
    let rb = cfg.rao_blackwell.unwrap_or(false);
    let tol = cfg.tolerance.unwrap_or(0.1);
    let trials = cfg.trials.unwrap_or(1);
    let mut out = Outcome::default();
    for w in words(cfg)? {
        for seed in cfg.seeds_or_default() {
            let rep = estimate_return_prob(&desc, &w, r, trials, seed, rb)?;
            let pass = (rep.normalized - 1.0).abs() <= tol;
            out.summary.push(SummaryRow::new(w.to_string(), Some(seed), "N*P", rep.normalized, Some(pass)));
            let mut row = to_value(&rep);
            row["seed"] = json!(seed);
            out.rows.push(row);
        }
    }
    Ok(out)
}

fn lambda(cfg: &ExperimentConfig) -> Res<Outcome> {
    let desc = group(cfg)?;
    let k = cfg.k.unwrap_or(8);
    let threshold = cfg.tolerance.unwrap_or(0.9);
    let max_iters = cfg.max_iters.unwrap_or(200_000);
    let base = match cfg.base.unwrap_or(BaseKind::Vectors) {
        BaseKind::Vectors => OrbitBase::Vectors(standard_starts(desc.space(), cfg.r.unwrap_or(1))?),
        BaseKind::Transvections => {
            if desc.kind() != FormKind::Linear || desc.n() < 2 {
                return Err(HarnessError::Config("base = \"transvections\" needs a linear group of degree ≥ 2".into()));
            }
            let mut t = Matrix::identity(desc.n());
            t.set(0, 1, 1);
            if !desc.contains(&t) {
                return Err(HarnessError::Config(format!("{desc} does not contain the elementary transvection")));
            }
            OrbitBase::Class(t)
        }
    };
    let seeds = cfg.seeds_or_default();
    let reports = map_tasks(seeds.len(), |i| -> Res<_> {
        let gens = uniform_tuple(&desc, k, seeds[i]);
        let orbit = orbit_bfs(&desc, &gens, &base)?;
        Ok(estimate_lambda_power(&orbit, 1e-9, max_iters))
    });
    let floor = (2.0 * k as f64 - 1.0).sqrt() / k as f64;
    let mut out = Outcome::default();
    for (seed, rep) in seeds.iter().zip(reports) {
        let rep = rep?;
        let pass = rep.converged && rep.lambda <= threshold;
        out.summary.push(SummaryRow::new(desc.descriptor(), Some(*seed), "lambda", rep.lambda, Some(pass)));
        let mut row = to_value(&rep);
        row["seed"] = json!(seed);
        row["ramanujan_floor"] = json!(floor);
        out.rows.push(row);
    }
    Ok(out)
}

fn xwz_search(cfg: &ExperimentConfig) -> Res<Outcome> {
    let desc = group(cfg)?;
    let k = cfg.k.unwrap_or(2);
    let d = cfg.d.unwrap_or_else(|| NormalSetSpec::default_d(&desc));
    let max_len = cfg.max_len.unwrap_or(8);
    let seeds = cfg.seeds_or_default();
    let found = map_tasks(seeds.len(), |i| -> Res<_> {
        let xs = uniform_tuple(&desc, k + 1, seeds[i]);
        let hit = search_word_into_m(&desc, &xs, max_len, d)?;
        // re-evaluate the reported word from scratch
        let verified = match &hit {
            Some(w) => w.word().evaluate(desc.field(), &xs)? == w.element,
            None => false,
        };
        Ok((hit, verified))
    });
    let mut out = Outcome::default();
    for (seed, res) in seeds.iter().zip(found) {
        let (hit, verified) = res?;
        out.summary.push(SummaryRow::new(desc.descriptor(), Some(*seed), "found", f64::from(u8::from(hit.is_some())), Some(hit.is_none() || verified)));
        out.rows.push(json!({
            "seed": seed,
            "d": d,
            "found": hit.is_some(),
            "inner_word": hit.as_ref().map(|w| w.inner.to_string()),
            "word": hit.as_ref().map(|w| w.word().to_string()),
            "exponent": hit.as_ref().map(|w| w.exponent),
            "index": hit.as_ref().map(|w| w.index),
            "verified": verified,
        }));
    }
    let rate = out.rows.iter().filter(|r| r["found"] == json!(true)).count() as f64 / seeds.len() as f64;
    out.summary.push(SummaryRow::new(desc.descriptor(), None, "success_rate", rate, None));
    Ok(out)
}

fn cd_density(cfg: &ExperimentConfig) -> Res<Outcome> {
    let desc = group(cfg)?;
    let d = cfg.d.unwrap_or_else(|| NormalSetSpec::default_d(&desc));
    let trials = cfg.trials.unwrap_or(1);
    let mut out = Outcome::default();
    for seed in cfg.seeds_or_default() {
        let rep = estimate_cd_density(&desc, d, trials, seed)?;
        out.summary.push(SummaryRow::new(desc.descriptor(), Some(seed), "density", rep.total.mean(), None));
        let mut row = to_value(&rep);
        row["seed"] = json!(seed);
        out.rows.push(row);
    }
    Ok(out)
}

fn supp_tail(cfg: &ExperimentConfig) -> Res<Outcome> {
    let desc = group(cfg)?;
    let deltas = if cfg.deltas.is_empty() { vec![0.1, 0.25, 0.5] } else { cfg.deltas.clone() };
    if let Some(bad) = deltas.iter().find(|d| !(0.0..=1.0).contains(*d)) {
        return Err(HarnessError::Config(format!("delta {bad} is outside [0, 1]")));
    }
    let trials = cfg.trials.unwrap_or(1);
    let mut out = Outcome::default();
    for w in words(cfg)? {
        for seed in cfg.seeds_or_default() {
            for (delta, est) in estimate_small_support_prob(&desc, &w, &deltas, trials, seed)? {
                out.summary.push(SummaryRow::new(format!("{w} delta={delta}"), Some(seed), "frequency", est.mean(), None));
                out.rows.push(json!({
                    "word": w.to_string(),
                    "seed": seed,
                    "delta": delta,
                    "frequency": est.mean(),
                    "wilson95": est.wilson(1.96),
                    "estimate": est,
                }));
            }
        }
    }
    Ok(out)
}

fn sn(cfg: &ExperimentConfig) -> Res<Outcome> {
    let n = cfg.n.unwrap_or(200);
    let opts = PipelineOptions { max_len: cfg.max_len.unwrap_or(PipelineOptions::default().max_len), ..Default::default() };
    let seeds = cfg.seeds_or_default();
    let reports = map_tasks(seeds.len(), |i| sn_pipeline(n, seeds[i], &opts));
    let mut out = Outcome::default();
    for rep in reports {
        let pass = rep.verified && rep.within_budget;
        let len = rep.word_length.map_or(f64::NAN, |l| l as f64);
        out.summary.push(SummaryRow::new(format!("S_{n}"), Some(rep.seed), "word_length", len, Some(pass)));
        out.rows.push(to_value(&rep));
    }
    Ok(out)
}

fn diameter(cfg: &ExperimentConfig) -> Res<Outcome> {
    let desc = group(cfg)?;
    let k = cfg.k.unwrap_or(2);
    let mut out = Outcome::default();
    for seed in cfg.seeds_or_default() {
        let gens = uniform_tuple(&desc, k, seed);
        let rep = cayley_diameter_bfs(&desc, &gens)?;
        let value = rep.diameter.map_or(f64::NAN, f64::from);
        out.summary.push(SummaryRow::new(desc.descriptor(), Some(seed), "diameter", value, None));
        out.rows.push(json!({
            "seed": seed,
            "generators": gens.iter().map(Matrix::to_text).collect::<Vec<_>>(),
            "report": rep,
        }));
    }
    Ok(out)
}

fn witt_count(cfg: &ExperimentConfig) -> Res<Outcome> {
    let desc = group(cfg)?;
    let max_codim = cfg.max_codim.unwrap_or(2);
    if max_codim > 2 {
        return Err(HarnessError::Config(format!("max_codim = {max_codim}; at most 2 is supported")));
    }
    let sweep = quadric_coset_sweep(desc.space(), max_codim)?;
    let label = sweep.descriptor.clone();
    let mut out = Outcome::default();
    out.summary.push(SummaryRow::new(&label, None, "checks", sweep.checks as f64, None));
    out.summary.push(SummaryRow::new(&label, None, "violations", sweep.violations as f64, Some(sweep.violations == 0)));
    out.summary.push(SummaryRow::new(&label, None, "max_ratio", sweep.max_ratio, None));
    out.rows.push(to_value(&sweep));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml(text).unwrap()
    }

    #[test]
    fn witt_count_check_passes_on_a_small_space() {
        let out = run(&cfg("experiment = \"witt-count-check\"\ngroup = \"GO+(4,3)\"\n")).unwrap();
        assert!(out.passed());
        let checks = out.summary.iter().find(|r| r.metric == "checks").unwrap().value;
        // codim 0, 1 and 2 cosets of F_3^4, times the three values
        let cosets = 1.0 + 40.0 * 3.0 + 130.0 * 9.0;
        assert_eq!(checks, cosets * 3.0);
    }

    #[test]
    fn transvection_base_needs_a_linear_group() {
        let e = run(&cfg("experiment = \"lambda\"\ngroup = \"Sp(4,3)\"\nbase = \"transvections\"\n")).unwrap_err();
        assert!(e.to_string().contains("linear"), "{e}");
    }

    #[test]
    fn diameter_of_a_tiny_group() {
        let out = run(&cfg("experiment = \"diameter-bfs\"\ngroup = \"SL(2,3)\"\nseeds = [1, 2]\n")).unwrap();
        assert_eq!(out.rows.len(), 2);
        for row in &out.rows {
            let reached = row["report"]["reached"].as_u64().unwrap();
            assert!(reached <= 24 && 24 % reached == 0);
        }
    }
}
