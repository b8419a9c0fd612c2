//! Learners: kernel-density naive Bayes (AD/CN), RBF ε-SVR trained by SMO
//! (MMSE), logistic regression (propensity scores) and the grid search over
//! the ADR node count.

mod grid;
mod logistic;
mod nb;
mod svr;

pub use grid::{
    grid_search, select_best, GridSearchResult, Objective, DEFAULT_C_CANDIDATES,
    DEFAULT_NODES_CLASSIFICATION, DEFAULT_NODES_REGRESSION,
};
pub use logistic::{fit_logistic, log_likelihood, LogisticError, LogisticModel};
pub use nb::{silverman_bandwidth, train_nb, KdeNaiveBayes, NbError, Prediction};
pub use svr::{train_svr, SvrError, SvrModel, SvrParams, MMSE_RANGE};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Diagnostic group. AD is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "CN")]
    Cn,
    #[serde(rename = "AD")]
    Ad,
}

impl Group {
    pub const ALL: [Group; 2] = [Group::Cn, Group::Ad];

    pub fn index(self) -> usize {
        match self {
            Group::Cn => 0,
            Group::Ad => 1,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Group::Ad
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::Cn => "CN",
            Group::Ad => "AD",
        })
    }
}

impl FromStr for Group {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CN" | "CC" | "HC" => Ok(Group::Cn),
            "AD" => Ok(Group::Ad),
            other => Err(format!("unknown group {other:?}; expected CN or AD")),
        }
    }
}
