//! Propensity-score matching of AD (treated) and CN (control) cohorts on age
//! and gender, with standardized-mean-difference balance auditing.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{fit_logistic, Group, LogisticError, LogisticModel};

/// Balance threshold for the covariates themselves.
pub const COVARIATE_SMD_THRESHOLD: f64 = 0.1;
/// Balance threshold for squares and two-way interactions.
pub const HIGHER_ORDER_SMD_THRESHOLD: f64 = 0.15;
/// Default caliper in standard deviations of the logit propensity score.
pub const DEFAULT_CALIPER_SD: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortMember {
    pub id: String,
    pub age: f64,
    /// 0/1 encoded.
    pub gender: f64,
    /// AD = treated.
    pub treated: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum MatchError {
    #[error("cohort needs both treated (AD) and control (CN) members")]
    MissingGroup,
    #[error("member {0} has non-positive age")]
    InvalidAge(String),
    #[error("propensity model: the covariates separate AD from CN perfectly")]
    Separation,
    #[error("propensity model: {0}")]
    Logistic(#[from] LogisticError),
    #[error("{scores} scores for {members} members")]
    ScoreCount { members: usize, scores: usize },
    #[error("no treated member has a control within the caliper")]
    NoPairs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropensityScores {
    pub scores: Vec<f64>,
    pub model: LogisticModel,
    /// Covariates (0 = age, 1 = gender) that entered the model; constant
    /// covariates are dropped.
    pub covariates_used: Vec<usize>,
}

/// `P(AD | age, gender)` from a logistic model on standardized covariates.
pub fn propensity_scores(members: &[CohortMember]) -> Result<PropensityScores, MatchError> {
    if !members.iter().any(|m| m.treated) || !members.iter().any(|m| !m.treated) {
        return Err(MatchError::MissingGroup);
    }
    if let Some(bad) = members.iter().find(|m| !(m.age > 0.0)) {
        return Err(MatchError::InvalidAge(bad.id.clone()));
    }
    let raw: Vec<[f64; 2]> = members.iter().map(|m| [m.age, m.gender]).collect();
    let n = raw.len() as f64;
    let mut covariates_used = Vec::new();
    let mut stats = Vec::new();
    for j in 0..2 {
        let mean = raw.iter().map(|r| r[j]).sum::<f64>() / n;
        let sd = (raw.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
        if sd > 0.0 {
            covariates_used.push(j);
            stats.push((mean, sd));
        }
    }
    let x: Vec<Vec<f64>> = raw
        .iter()
        .map(|r| {
            covariates_used
                .iter()
                .zip(&stats)
                .map(|(&j, (m, s))| (r[j] - m) / s)
                .collect()
        })
        .collect();
    let t: Vec<bool> = members.iter().map(|m| m.treated).collect();
    let model = fit_logistic(&x, &t)?;
    if model.separated {
        return Err(MatchError::Separation);
    }
    let scores = x.iter().map(|row| model.probability(row)).collect();
    Ok(PropensityScores {
        scores,
        model,
        covariates_used,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedPair {
    pub treated: usize,
    pub control: usize,
    /// |Δ logit score|.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub pairs: Vec<MatchedPair>,
    pub caliper: f64,
    /// Treated members without a control inside the caliper.
    pub unmatched_treated: Vec<usize>,
}

impl MatchResult {
    pub fn treated_indices(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.treated).collect()
    }

    pub fn control_indices(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.control).collect()
    }
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchOptions {
    /// Maximum logit distance; `None` means 0.2 standard deviations of the
    /// logit scores.
    pub caliper: Option<f64>,
    /// Only pair members of the same gender.
    pub exact_gender: bool,
    /// Seed of the treated visiting order.
    pub seed: u64,
}

impl Default for MatchOptions {
    fn default() -> Self {
        MatchOptions {
            caliper: None,
            exact_gender: true,
            seed: 0,
        }
    }
}

/// Greedy 1:1 nearest-neighbour matching on the logit score without
/// replacement. Treated members are visited in a seeded random order; each
/// takes the closest unused eligible control (lowest index on ties) if it
/// lies within the caliper. With `exact_gender`, eligible controls share the
/// treated member's gender, which keeps the binary covariate balanced
/// exactly instead of only in expectation.
pub fn match_pairs(
    members: &[CohortMember],
    scores: &[f64],
    options: &MatchOptions,
) -> Result<MatchResult, MatchError> {
    if scores.len() != members.len() {
        return Err(MatchError::ScoreCount {
            members: members.len(),
            scores: scores.len(),
        });
    }
    let logits: Vec<f64> = scores.iter().map(|&p| logit(p)).collect();
    let mut treated: Vec<usize> = (0..members.len()).filter(|&i| members[i].treated).collect();
    let controls: Vec<usize> = (0..members.len())
        .filter(|&i| !members[i].treated)
        .collect();
    if treated.is_empty() || controls.is_empty() {
        return Err(MatchError::MissingGroup);
    }
    let caliper = options.caliper.unwrap_or_else(|| {
        let n = logits.len() as f64;
        let mean = logits.iter().sum::<f64>() / n;
        let sd =
            (logits.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
        DEFAULT_CALIPER_SD * sd
    });

    treated.shuffle(&mut ChaCha8Rng::seed_from_u64(options.seed));
    let mut used = vec![false; members.len()];
    let mut pairs = Vec::new();
    let mut unmatched_treated = Vec::new();
    for t in treated {
        let nearest = controls
            .iter()
            .copied()
            .filter(|&c| {
                !used[c] && (!options.exact_gender || members[c].gender == members[t].gender)
            })
            .map(|c| (c, (logits[t] - logits[c]).abs()))
            .fold(None, |best: Option<(usize, f64)>, (c, d)| match best {
                Some((_, bd)) if bd <= d => best,
                _ => Some((c, d)),
            });
        match nearest {
            Some((c, d)) if d <= caliper => {
                used[c] = true;
                pairs.push(MatchedPair {
                    treated: t,
                    control: c,
                    distance: d,
                });
            }
            _ => unmatched_treated.push(t),
        }
    }
    if pairs.is_empty() {
        return Err(MatchError::NoPairs);
    }
    Ok(MatchResult {
        pairs,
        caliper,
        unmatched_treated,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmdEntry {
    pub term: String,
    /// `+inf` when pooled variance is zero but the means differ.
    pub smd: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceReport {
    pub treated_count: usize,
    pub control_count: usize,
    pub entries: Vec<SmdEntry>,
}

impl BalanceReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn smd(&self, term: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.term == term).map(|e| e.smd)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("term,smd,threshold,pass\n");
        for e in &self.entries {
            let _ = writeln!(s, "{},{:.6},{},{}", e.term, e.smd, e.threshold, e.pass);
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "Balance: {} treated (AD) vs {} control (CN)\n",
            self.treated_count, self.control_count
        );
        for e in &self.entries {
            let _ = writeln!(
                s,
                "  {:<12} SMD {:>8.4}  (< {:.2})  {}",
                e.term,
                e.smd,
                e.threshold,
                if e.pass { "ok" } else { "FAIL" }
            );
        }
        s
    }
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// `|mean_t − mean_c| / sqrt((var_t + var_c) / 2)` with sample variances.
pub fn standardized_mean_difference(treated: &[f64], control: &[f64]) -> f64 {
    let (mt, vt) = mean_var(treated);
    let (mc, vc) = mean_var(control);
    let pooled = ((vt + vc) / 2.0).sqrt();
    let diff = (mt - mc).abs();
    if pooled > 0.0 {
        diff / pooled
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// SMDs of age, gender, their squares and their interaction between two
/// groups.
pub fn balance_report(treated: &[&CohortMember], control: &[&CohortMember]) -> BalanceReport {
    type Term = (&'static str, fn(&CohortMember) -> f64, f64);
    let terms: [Term; 5] = [
        ("age", |m| m.age, COVARIATE_SMD_THRESHOLD),
        ("gender", |m| m.gender, COVARIATE_SMD_THRESHOLD),
        ("age^2", |m| m.age * m.age, HIGHER_ORDER_SMD_THRESHOLD),
        (
            "gender^2",
            |m| m.gender * m.gender,
            HIGHER_ORDER_SMD_THRESHOLD,
        ),
        (
            "age*gender",
            |m| m.age * m.gender,
            HIGHER_ORDER_SMD_THRESHOLD,
        ),
    ];
    let entries = terms
        .iter()
        .map(|(term, f, threshold)| {
            let a: Vec<f64> = treated.iter().map(|m| f(m)).collect();
            let b: Vec<f64> = control.iter().map(|m| f(m)).collect();
            let smd = if a.is_empty() || b.is_empty() {
                f64::INFINITY
            } else {
                standardized_mean_difference(&a, &b)
            };
            SmdEntry {
                term: term.to_string(),
                smd,
                threshold: *threshold,
                pass: smd < *threshold,
            }
        })
        .collect();
    BalanceReport {
        treated_count: treated.len(),
        control_count: control.len(),
        entries,
    }
}

/// Balance of the whole cohort split by group.
pub fn cohort_balance(members: &[CohortMember]) -> BalanceReport {
    let t: Vec<&CohortMember> = members.iter().filter(|m| m.treated).collect();
    let c: Vec<&CohortMember> = members.iter().filter(|m| !m.treated).collect();
    balance_report(&t, &c)
}

/// Balance of the matched subset.
pub fn matched_balance(members: &[CohortMember], result: &MatchResult) -> BalanceReport {
    let t: Vec<&CohortMember> = result.pairs.iter().map(|p| &members[p.treated]).collect();
    let c: Vec<&CohortMember> = result.pairs.iter().map(|p| &members[p.control]).collect();
    balance_report(&t, &c)
}

#[derive(Debug, Error)]
#[error("{path}: {reason}")]
pub struct CohortFileError {
    pub path: std::path::PathBuf,
    pub reason: String,
}

/// Reads a cohort CSV with header `id,age,gender,group`. Gender is `M`/`F`
/// (coded 0/1) or already numeric; group is `CN` or `AD`.
pub fn read_cohort(path: &std::path::Path) -> Result<Vec<CohortMember>, CohortFileError> {
    let err = |reason: String| CohortFileError {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| err(e.to_string()))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| err(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != ["id", "age", "gender", "group"] {
        return Err(err(format!(
            "header must be `id,age,gender,group`, found `{}`",
            header.join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let line = i + 2;
        let age: f64 = rec[1]
            .parse()
            .map_err(|e| err(format!("line {line}: age {:?}: {e}", &rec[1])))?;
        let gender = match rec[2].to_ascii_uppercase().as_str() {
            "M" => 0.0,
            "F" => 1.0,
            other => other.parse::<f64>().map_err(|_| {
                err(format!(
                    "line {line}: gender {other:?} is not M, F or numeric"
                ))
            })?,
        };
        let group: Group = rec[3]
            .parse()
            .map_err(|e| err(format!("line {line}: {e}")))?;
        out.push(CohortMember {
            id: rec[0].to_string(),
            age,
            gender,
            treated: group.is_positive(),
        });
    }
    Ok(out)
}
