use std::fmt;

use serde::{Deserialize, Serialize};

use super::verdict::{RejectionStage, Verdict};

/// Per-stage rejection accounting. Shares are fractions of all rejections.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageCounts {
    pub validated: usize,
    pub analysis: usize,
    pub generation: usize,
    pub checking: usize,
    pub analysis_share: f64,
    pub generation_share: f64,
    pub checking_share: f64,
}

impl StageCounts {
    pub fn rejected(&self) -> usize {
        self.analysis + self.generation + self.checking
    }

    pub fn total(&self) -> usize {
        self.validated + self.rejected()
    }

    pub fn count(&self, stage: RejectionStage) -> usize {
        match stage {
            RejectionStage::Analysis => self.analysis,
            RejectionStage::Generation => self.generation,
            RejectionStage::Checking => self.checking,
        }
    }

    pub fn share(&self, stage: RejectionStage) -> f64 {
        match stage {
            RejectionStage::Analysis => self.analysis_share,
            RejectionStage::Generation => self.generation_share,
            RejectionStage::Checking => self.checking_share,
        }
    }
}

impl fmt::Display for StageCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "validated {}, rejected {}",
            self.validated,
            self.rejected()
        )?;
        for stage in RejectionStage::ALL {
            write!(
                f,
                "; {} {} ({:.1}%)",
                stage,
                self.count(stage),
                self.share(stage) * 100.0
            )?;
        }
        Ok(())
    }
}

pub fn verdict_summary<'a, I>(verdicts: I) -> StageCounts
where
    I: IntoIterator<Item = &'a Verdict>,
{
    let mut c = StageCounts::default();
    for v in verdicts {
        match v.rejection_stage() {
            None => c.validated += 1,
            Some(RejectionStage::Analysis) => c.analysis += 1,
            Some(RejectionStage::Generation) => c.generation += 1,
            Some(RejectionStage::Checking) => c.checking += 1,
        }
    }
    let rejected = c.rejected();
    if rejected > 0 {
        let r = rejected as f64;
        c.analysis_share = c.analysis as f64 / r;
        c.generation_share = c.generation as f64 / r;
        c.checking_share = c.checking as f64 / r;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rej(stage: RejectionStage) -> Verdict {
        Verdict::rejected(stage, "r")
    }

    #[test]
    fn empty_input() {
        let c = verdict_summary(&[]);
        assert_eq!(c, StageCounts::default());
        assert_eq!(c.total(), 0);
    }

    #[test]
    fn reported_ablation_shares() {
        let mut v = Vec::new();
        v.extend((0..12).map(|_| rej(RejectionStage::Analysis)));
        v.extend((0..57).map(|_| rej(RejectionStage::Generation)));
        v.extend((0..15).map(|_| rej(RejectionStage::Checking)));
        let c = verdict_summary(&v);
        assert_eq!((c.analysis, c.generation, c.checking), (12, 57, 15));
        // Published figures: 14.3% / 67.9% / 17.8%, within 0.1 points.
        assert!((c.analysis_share * 100.0 - 14.3).abs() <= 0.1);
        assert!((c.generation_share * 100.0 - 67.9).abs() <= 0.1);
        assert!((c.checking_share * 100.0 - 17.8).abs() <= 0.1);
        let sum = c.analysis_share + c.generation_share + c.checking_share;
        assert!((sum - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn only_generation_rejections() {
        let v = vec![
            rej(RejectionStage::Generation),
            Verdict::Validated {
                poc: crate::model::PoCArtifact {
                    root_dir: "poc".into(),
                    files: vec![],
                    entrypoint: vec!["x".into()],
                    expected_signal: None,
                    notes: String::new(),
                },
                generator_evidence: crate::model::EvidenceBundle {
                    dir: "e".into(),
                    traces: vec![],
                    command_log: vec![],
                    env_fingerprint: Default::default(),
                },
                checker_evidence: None,
            },
        ];
        let mut all = v.clone();
        all.push(v[1].clone());
        all.push(v[1].clone());
        let c = verdict_summary(&all);
        assert_eq!(c.validated, 3);
        assert_eq!(c.generation, 1);
        assert_eq!(c.generation_share, 1.0);
        assert_eq!(c.analysis_share, 0.0);
    }
}
