use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{LearnerKind, LearnerSpec, ScreenerSpec};
use crate::error::Error;

/// Named learner libraries used by the simulation studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LearnerSet {
    #[serde(rename = "GLM")]
    Glm,
    L1,
    L2,
    L3,
}

/// Features kept by the screeners inside the preset libraries.
pub const PRESET_SCREEN_LIMIT: usize = 10;

impl LearnerSet {
    pub const ALL: [LearnerSet; 4] = [LearnerSet::Glm, LearnerSet::L1, LearnerSet::L2, LearnerSet::L3];

    pub fn specs(self) -> Vec<LearnerSpec> {
        let basic = || {
            vec![
                LearnerKind::Mean,
                LearnerKind::GlmMain,
                LearnerKind::ridge(),
                LearnerKind::cart(),
            ]
        };
        let pearson = ScreenerSpec::pearson(PRESET_SCREEN_LIMIT);
        let enet = ScreenerSpec::elastic_net(PRESET_SCREEN_LIMIT);
        match self {
            LearnerSet::Glm => vec![LearnerSpec::plain(LearnerKind::GlmMain)],
            LearnerSet::L1 => basic().into_iter().map(LearnerSpec::plain).collect(),
            LearnerSet::L2 | LearnerSet::L3 => {
                let mut v: Vec<LearnerSpec> = basic()
                    .into_iter()
                    .map(|k| LearnerSpec::screened(k, pearson.clone()))
                    .collect();
                for k in [
                    LearnerKind::mars_lite(),
                    LearnerKind::gam_spline(),
                    LearnerKind::GlmTwoway,
                    LearnerKind::GlmMain,
                ] {
                    v.push(LearnerSpec::screened(k, enet.clone()));
                }
                if self == LearnerSet::L3 {
                    v.push(LearnerSpec::plain(LearnerKind::neural_net()));
                    v.push(LearnerSpec::screened(LearnerKind::neural_net(), enet));
                    v.push(LearnerSpec::plain(LearnerKind::random_forest()));
                }
                v
            }
        }
    }
}

impl fmt::Display for LearnerSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LearnerSet::Glm => "GLM",
            LearnerSet::L1 => "L1",
            LearnerSet::L2 => "L2",
            LearnerSet::L3 => "L3",
        })
    }
}

impl FromStr for LearnerSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "GLM" | "glm" => Ok(LearnerSet::Glm),
            "L1" => Ok(LearnerSet::L1),
            "L2" => Ok(LearnerSet::L2),
            "L3" => Ok(LearnerSet::L3),
            _ => Err(Error::InvalidArgument(format!("unknown learner set `{s}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_sizes() {
        let sizes: Vec<usize> = LearnerSet::ALL.iter().map(|s| s.specs().len()).collect();
        assert_eq!(sizes, [1, 4, 8, 11]);
        assert!(!LearnerSet::ALL
            .iter()
            .flat_map(|s| s.specs())
            .any(|s| matches!(s.learner, LearnerKind::Gbm { .. })));
    }
}
