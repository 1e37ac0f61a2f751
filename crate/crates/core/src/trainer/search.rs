use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// One searched hyperparameter: a log-spaced coarse grid over `[low, high]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub name: String,
    pub low: f64,
    pub high: f64,
    pub points: usize,
    /// Values are rounded to the nearest integer (batch size, hidden units, epochs).
    #[serde(default)]
    pub integer: bool,
}

impl ParamRange {
    pub fn new(name: impl Into<String>, low: f64, high: f64, points: usize) -> Self {
        Self {
            name: name.into(),
            low,
            high,
            points,
            integer: false,
        }
    }

    pub fn integer(mut self) -> Self {
        self.integer = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.low > 0.0 && self.high >= self.low && self.high.is_finite()) {
            return Err(invalid(format!(
                "parameter {} needs 0 < low ≤ high for a log grid, got [{}, {}]",
                self.name, self.low, self.high
            )));
        }
        if self.points == 0 {
            return Err(invalid(format!("parameter {} has an empty grid", self.name)));
        }
        Ok(())
    }

    fn round(&self, v: f64) -> f64 {
        if self.integer {
            v.round().max(1.0)
        } else {
            v
        }
    }

    /// Log-spaced values, deduplicated after integer rounding.
    pub fn coarse_grid(&self) -> Vec<f64> {
        let mut out: Vec<f64> = if self.points == 1 || self.low == self.high {
            vec![self.low]
        } else {
            let last = self.points - 1;
            let ratio = self.high / self.low;
            (0..self.points)
                .map(|i| match i {
                    0 => self.low,
                    i if i == last => self.high,
                    i => self.low * ratio.powf(i as f64 / last as f64),
                })
                .collect()
        };
        out.iter_mut().for_each(|v| *v = self.round(*v));
        out.dedup();
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Maximum number of objective evaluations, coarse and refined together.
    pub budget: usize,
    /// Linear points per parameter between the neighbours of the best coarse value.
    pub refine_points: usize,
    /// Trial log (CSV), appended to as each trial finishes.
    pub log_path: Option<PathBuf>,
}

impl SearchOptions {
    pub fn new(budget: usize) -> Self {
        Self {
            budget,
            refine_points: 5,
            log_path: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchStage {
    Coarse,
    Refined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub stage: SearchStage,
    pub params: BTreeMap<String, f64>,
    /// Lower is better; non-finite values rank last.
    pub metric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    /// Trials in evaluation order.
    pub trials: Vec<Trial>,
    /// Trial indices sorted by metric, best first.
    pub ranking: Vec<usize>,
}

impl SearchResult {
    pub fn best(&self) -> &Trial {
        &self.trials[self.ranking[0]]
    }

    pub fn ranked(&self) -> impl Iterator<Item = &Trial> {
        self.ranking.iter().map(|&i| &self.trials[i])
    }
}

fn cartesian(grids: &[Vec<f64>]) -> Vec<Vec<f64>> {
    grids.iter().fold(vec![Vec::new()], |acc, grid| {
        acc.iter()
            .flat_map(|prefix| {
                grid.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect()
    })
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 || a == b {
        return vec![a];
    }
    (0..n)
        .map(|i| if i + 1 == n { b } else { a + (b - a) * i as f64 / (n - 1) as f64 })
        .collect()
}

fn rank_key(m: f64) -> f64 {
    if m.is_nan() {
        f64::INFINITY
    } else {
        m
    }
}

struct TrialLog {
    path: PathBuf,
    names: Vec<String>,
}

impl TrialLog {
    fn create(path: &Path, names: &[String]) -> Result<Self> {
        let mut header = vec!["trial".to_string(), "stage".to_string()];
        header.extend(names.iter().cloned());
        header.push("metric".into());
        std::fs::write(path, format!("{}\n", header.join(","))).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            names: names.to_vec(),
        })
    }

    fn append(&self, t: &Trial) -> Result<()> {
        let mut row = vec![t.index.to_string(), format!("{:?}", t.stage).to_lowercase()];
        row.extend(self.names.iter().map(|n| t.params[n].to_string()));
        row.push(t.metric.to_string());
        let mut f = OpenOptions::new()
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        writeln!(f, "{}", row.join(",")).map_err(|e| Error::io(&self.path, e))
    }
}

/// Coarse log-grid pass over the Cartesian product of `space`, then a linear
/// grid spanning the coarse neighbours of the best point, within `budget`.
pub fn hyper_search<F>(space: &[ParamRange], opts: &SearchOptions, mut objective: F) -> Result<SearchResult>
where
    F: FnMut(&BTreeMap<String, f64>) -> Result<f64>,
{
    if space.is_empty() {
        return Err(invalid("search space is empty"));
    }
    for p in space {
        p.validate()?;
    }
    let names: Vec<String> = space.iter().map(|p| p.name.clone()).collect();
    let mut seen = names.clone();
    seen.sort();
    seen.dedup();
    if seen.len() != names.len() {
        return Err(invalid("search space repeats a parameter name"));
    }
    let coarse_grids: Vec<Vec<f64>> = space.iter().map(ParamRange::coarse_grid).collect();
    let coarse = cartesian(&coarse_grids);
    if opts.budget < coarse.len() {
        return Err(invalid(format!(
            "budget {} is smaller than the coarse grid of {} configurations",
            opts.budget,
            coarse.len()
        )));
    }
    let log = opts.log_path.as_deref().map(|p| TrialLog::create(p, &names)).transpose()?;
    let mut trials: Vec<Trial> = Vec::new();
    let mut run = |point: &[f64], stage: SearchStage, trials: &mut Vec<Trial>| -> Result<()> {
        let params: BTreeMap<String, f64> = names.iter().cloned().zip(point.iter().copied()).collect();
        let metric = objective(&params)?;
        let t = Trial {
            index: trials.len(),
            stage,
            params,
            metric,
        };
        log::info!("trial {} ({:?}): {:?} -> {metric}", t.index, stage, t.params);
        if let Some(log) = &log {
            log.append(&t)?;
        }
        trials.push(t);
        Ok(())
    };
    for point in &coarse {
        run(point, SearchStage::Coarse, &mut trials)?;
    }
    let best = trials
        .iter()
        .min_by(|a, b| rank_key(a.metric).total_cmp(&rank_key(b.metric)))
        .expect("coarse grid is nonempty");
    let best_point: Vec<f64> = names.iter().map(|n| best.params[n]).collect();

    let remaining = opts.budget - trials.len();
    let mut per_param = opts.refine_points;
    let refined_grids = loop {
        if per_param < 2 {
            break None;
        }
        let grids: Vec<Vec<f64>> = space
            .iter()
            .zip(&coarse_grids)
            .zip(&best_point)
            .map(|((p, grid), &v)| {
                let i = grid.iter().position(|&g| g == v).expect("best value comes from the grid");
                let lo = grid[i.saturating_sub(1)];
                let hi = grid[(i + 1).min(grid.len() - 1)];
                let mut g: Vec<f64> = linspace(lo, hi, per_param).into_iter().map(|x| p.round(x)).collect();
                g.dedup();
                g
            })
            .collect();
        let fresh = cartesian(&grids)
            .into_iter()
            .filter(|pt| !coarse.contains(pt))
            .count();
        if fresh <= remaining {
            break Some(grids);
        }
        per_param -= 1;
    };
    if let Some(grids) = refined_grids {
        for point in cartesian(&grids) {
            if !coarse.contains(&point) {
                run(&point, SearchStage::Refined, &mut trials)?;
            }
        }
    }
    let mut ranking: Vec<usize> = (0..trials.len()).collect();
    ranking.sort_by(|&a, &b| rank_key(trials[a].metric).total_cmp(&rank_key(trials[b].metric)));
    Ok(SearchResult { trials, ranking })
}
