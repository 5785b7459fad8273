//! Morph-attack-detection error rates: APCER, BPCER, the detection equal
//! error rate (D-EER), and BPCER at a fixed APCER operating point.
//!
//! Scores are normalized internally to the attack-high convention: a
//! sample is classified as an attack when its score is strictly above
//! the threshold. APCER is then the fraction of attack scores at or
//! below the threshold (attacks accepted as bona fide) and BPCER the
//! fraction of bona fide scores above it (bona fide rejected).

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DetectionError {
    #[error("no bonafide scores")]
    NoBonafide,
    #[error("no attack scores")]
    NoAttack,
    #[error("non-finite score present")]
    NonFiniteScore,
    #[error("target APCER {0} outside (0, 1)")]
    TargetOutOfRange(f64),
}

/// Which end of the detector's score axis the attack class occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Polarity {
    /// Higher scores indicate attack (the internal convention).
    AttackHigh,
    /// Lower scores indicate attack; negated at orientation time.
    AttackLow,
}

/// Detector outputs split by ground-truth label.
#[derive(Debug, Clone)]
pub struct DetectionScoreSet {
    pub bonafide: Vec<f64>,
    pub attack: Vec<f64>,
    pub polarity: Polarity,
}

impl DetectionScoreSet {
    fn validate(&self) -> Result<(), DetectionError> {
        if self.bonafide.is_empty() {
            return Err(DetectionError::NoBonafide);
        }
        if self.attack.is_empty() {
            return Err(DetectionError::NoAttack);
        }
        if self
            .bonafide
            .iter()
            .chain(&self.attack)
            .any(|s| !s.is_finite())
        {
            return Err(DetectionError::NonFiniteScore);
        }
        Ok(())
    }

    /// Scores in the canonical attack-high orientation.
    fn oriented(&self) -> (Vec<f64>, Vec<f64>) {
        match self.polarity {
            Polarity::AttackHigh => (self.bonafide.clone(), self.attack.clone()),
            Polarity::AttackLow => (
                self.bonafide.iter().map(|s| -s).collect(),
                self.attack.iter().map(|s| -s).collect(),
            ),
        }
    }

    /// Maps an internal (attack-high) threshold back to the detector's axis.
    fn external_threshold(&self, tau: f64) -> f64 {
        match self.polarity {
            Polarity::AttackHigh => tau,
            Polarity::AttackLow => -tau,
        }
    }
}

/// (APCER, BPCER) at an attack-high threshold: classified attack when
/// score > tau.
fn errors_at(bonafide: &[f64], attack: &[f64], tau: f64) -> (f64, f64) {
    let apcer = attack.iter().filter(|&&s| s <= tau).count() as f64 / attack.len() as f64;
    let bpcer = bonafide.iter().filter(|&&s| s > tau).count() as f64 / bonafide.len() as f64;
    (apcer, bpcer)
}

/// APCER and BPCER at the threshold `tau`, expressed in the detector's
/// own score axis.
pub fn det_errors(set: &DetectionScoreSet, tau: f64) -> Result<(f64, f64), DetectionError> {
    set.validate()?;
    let (bonafide, attack) = set.oriented();
    Ok(errors_at(&bonafide, &attack, set.external_threshold(tau)))
}

/// Candidate thresholds: midpoints between consecutive distinct pooled
/// scores, plus one point below the minimum and one above the maximum.
fn candidate_thresholds(bonafide: &[f64], attack: &[f64]) -> Vec<f64> {
    let mut pooled: Vec<f64> = bonafide.iter().chain(attack).copied().collect();
    pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pooled.dedup();
    let mut candidates = Vec::with_capacity(pooled.len() + 1);
    candidates.push(pooled[0] - 1.0);
    for w in pooled.windows(2) {
        candidates.push((w[0] + w[1]) / 2.0);
    }
    candidates.push(pooled[pooled.len() - 1] + 1.0);
    candidates
}

/// D-EER operating point.
#[derive(Debug, Clone, Serialize)]
pub struct EerPoint {
    pub deer: f64,
    pub apcer: f64,
    pub bpcer: f64,
    pub threshold: f64,
}

/// Detection equal error rate: exhaustive sweep over candidate
/// thresholds; at the threshold minimizing |APCER - BPCER| (ties broken
/// by the smaller mean rate, then by sweep order) the D-EER is the mean
/// of the two rates.
pub fn deer(set: &DetectionScoreSet) -> Result<EerPoint, DetectionError> {
    set.validate()?;
    let (bonafide, attack) = set.oriented();
    let mut best: Option<EerPoint> = None;
    for tau in candidate_thresholds(&bonafide, &attack) {
        let (apcer, bpcer) = errors_at(&bonafide, &attack, tau);
        let gap = (apcer - bpcer).abs();
        let mean = (apcer + bpcer) / 2.0;
        let better = match &best {
            None => true,
            Some(b) => {
                let b_gap = (b.apcer - b.bpcer).abs();
                gap < b_gap || (gap == b_gap && mean < b.deer)
            }
        };
        if better {
            best = Some(EerPoint {
                deer: mean,
                apcer,
                bpcer,
                threshold: set.external_threshold(tau),
            });
        }
    }
    Ok(best.expect("candidate list is never empty"))
}

/// BPCER at a fixed APCER operating point.
#[derive(Debug, Clone, Serialize)]
pub struct BpcerAtApcer {
    pub target_apcer: f64,
    /// APCER actually achieved at the chosen threshold; at most the target.
    pub achieved_apcer: f64,
    pub bpcer: f64,
    pub threshold: f64,
}

/// BPCER at the least-strict threshold whose APCER does not exceed
/// `target`. Least strict means fewest bona fide rejections, i.e. the
/// smallest reachable BPCER. The achieved APCER is reported alongside
/// because the score quantum rarely allows hitting the target exactly.
pub fn bpcer_at_apcer(
    set: &DetectionScoreSet,
    target: f64,
) -> Result<BpcerAtApcer, DetectionError> {
    if !(target > 0.0 && target < 1.0) {
        return Err(DetectionError::TargetOutOfRange(target));
    }
    set.validate()?;
    let (bonafide, attack) = set.oriented();
    let mut best: Option<BpcerAtApcer> = None;
    for tau in candidate_thresholds(&bonafide, &attack) {
        let (apcer, bpcer) = errors_at(&bonafide, &attack, tau);
        if apcer > target {
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => bpcer < b.bpcer || (bpcer == b.bpcer && apcer > b.achieved_apcer),
        };
        if better {
            best = Some(BpcerAtApcer {
                target_apcer: target,
                achieved_apcer: apcer,
                bpcer,
                threshold: set.external_threshold(tau),
            });
        }
    }
    Ok(best.expect("the low extreme threshold always satisfies APCER = 0"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(bonafide: &[f64], attack: &[f64], polarity: Polarity) -> DetectionScoreSet {
        DetectionScoreSet {
            bonafide: bonafide.to_vec(),
            attack: attack.to_vec(),
            polarity,
        }
    }

    #[test]
    fn errors_at_extreme_thresholds() {
        let s = set(&[0.2, 0.3], &[0.7, 0.8, 0.9], Polarity::AttackHigh);
        // tau below everything: nothing classified bona fide among attacks,
        // every bona fide classified attack
        assert_eq!(det_errors(&s, 0.0).unwrap(), (0.0, 1.0));
        // tau above everything
        assert_eq!(det_errors(&s, 1.0).unwrap(), (1.0, 0.0));
    }

    #[test]
    fn errors_at_hand_counts() {
        let s = set(
            &[0.2, 0.1, 0.6],
            &[0.9, 0.8, 0.4, 0.7],
            Polarity::AttackHigh,
        );
        // tau = 0.5: attacks <= tau -> 1/4; bonafide > tau -> 1/3
        let (apcer, bpcer) = det_errors(&s, 0.5).unwrap();
        assert_eq!(apcer, 0.25);
        assert!((bpcer - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn polarity_flip_is_consistent() {
        let high = set(
            &[0.2, 0.1, 0.6],
            &[0.9, 0.8, 0.4, 0.7],
            Polarity::AttackHigh,
        );
        let low = set(
            &[-0.2, -0.1, -0.6],
            &[-0.9, -0.8, -0.4, -0.7],
            Polarity::AttackLow,
        );
        assert_eq!(det_errors(&high, 0.5).unwrap(), det_errors(&low, -0.5).unwrap());
        assert_eq!(deer(&high).unwrap().deer, deer(&low).unwrap().deer);
    }

    #[test]
    fn deer_perfect_separation_is_zero() {
        let s = set(&[0.1, 0.2, 0.3], &[0.6, 0.7, 0.9], Polarity::AttackHigh);
        let p = deer(&s).unwrap();
        assert_eq!(p.deer, 0.0);
        assert_eq!(p.apcer, 0.0);
        assert_eq!(p.bpcer, 0.0);
        // the separating threshold sits between the classes
        assert!(p.threshold >= 0.3 && p.threshold < 0.6);
    }

    #[test]
    fn deer_identical_distributions_near_half() {
        let scores: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let s = set(&scores, &scores, Polarity::AttackHigh);
        let p = deer(&s).unwrap();
        // quantum is 1/100
        assert!((p.deer - 0.5).abs() <= 0.01 + 1e-12, "deer = {}", p.deer);
    }

    #[test]
    fn deer_label_swap_symmetric_data() {
        // symmetric about 0.5: swapping labels and mirroring scores must
        // reproduce the same D-EER
        let a = [0.1, 0.2, 0.3, 0.45];
        let b = [0.9, 0.8, 0.7, 0.55];
        let s1 = set(&a, &b, Polarity::AttackHigh);
        let s2 = set(&b, &a, Polarity::AttackLow);
        assert_eq!(deer(&s1).unwrap().deer, deer(&s2).unwrap().deer);
    }

    #[test]
    fn deer_gap_bound_invariant() {
        let bonafide = [0.11, 0.35, 0.22, 0.47, 0.53, 0.28, 0.40];
        let attack = [0.88, 0.52, 0.67, 0.41, 0.73, 0.34];
        let s = set(&bonafide, &attack, Polarity::AttackHigh);
        let p = deer(&s).unwrap();
        let bound = 1.0 / bonafide.len().min(attack.len()) as f64;
        assert!((p.apcer - p.bpcer).abs() <= bound + 1e-15);
    }

    #[test]
    fn deer_brute_force_oracle() {
        // oracle: independent direct counts over the same sweep
        let bonafide = [0.11, 0.35, 0.22, 0.47, 0.53, 0.28, 0.40];
        let attack = [0.88, 0.52, 0.67, 0.41, 0.73, 0.34];
        let s = set(&bonafide, &attack, Polarity::AttackHigh);
        let p = deer(&s).unwrap();
        let mut pooled: Vec<f64> = bonafide.iter().chain(&attack).copied().collect();
        pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut taus = vec![pooled[0] - 1.0, pooled[pooled.len() - 1] + 1.0];
        for w in pooled.windows(2) {
            taus.push((w[0] + w[1]) / 2.0);
        }
        let mut best_gap = f64::INFINITY;
        let mut best_mean = f64::INFINITY;
        for tau in taus {
            let ap = attack.iter().filter(|&&x| x <= tau).count() as f64 / attack.len() as f64;
            let bp = bonafide.iter().filter(|&&x| x > tau).count() as f64 / bonafide.len() as f64;
            let gap = (ap - bp).abs();
            let mean = (ap + bp) / 2.0;
            if gap < best_gap || (gap == best_gap && mean < best_mean) {
                best_gap = gap;
                best_mean = mean;
            }
        }
        assert_eq!(p.deer, best_mean);
        assert_eq!((p.apcer - p.bpcer).abs(), best_gap);
    }

    #[test]
    fn bpcer_at_apcer_monotone_in_target() {
        let bonafide: Vec<f64> = (0..50).map(|i| 0.1 + i as f64 / 120.0).collect();
        let attack: Vec<f64> = (0..50).map(|i| 0.4 + i as f64 / 100.0).collect();
        let s = set(&bonafide, &attack, Polarity::AttackHigh);
        let loose = bpcer_at_apcer(&s, 0.2).unwrap();
        let tight = bpcer_at_apcer(&s, 0.05).unwrap();
        assert!(tight.bpcer >= loose.bpcer);
        assert!(loose.achieved_apcer <= 0.2);
        assert!(tight.achieved_apcer <= 0.05);
    }

    #[test]
    fn bpcer_at_apcer_fully_overlapping_uniform() {
        let scores: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let s = set(&scores, &scores, Polarity::AttackHigh);
        let r = bpcer_at_apcer(&s, 0.10).unwrap();
        assert!((r.bpcer - 0.90).abs() <= 0.01 + 1e-12, "bpcer = {}", r.bpcer);
    }

    #[test]
    fn bpcer_at_apcer_perfect_detector() {
        let s = set(&[0.1, 0.2], &[0.8, 0.9], Polarity::AttackHigh);
        let r = bpcer_at_apcer(&s, 0.1).unwrap();
        assert_eq!(r.bpcer, 0.0);
        assert_eq!(r.achieved_apcer, 0.0);
    }

    #[test]
    fn validation_errors() {
        let empty_b = set(&[], &[0.1], Polarity::AttackHigh);
        assert_eq!(deer(&empty_b).unwrap_err(), DetectionError::NoBonafide);
        let empty_a = set(&[0.1], &[], Polarity::AttackHigh);
        assert_eq!(deer(&empty_a).unwrap_err(), DetectionError::NoAttack);
        let nan = set(&[0.1, f64::NAN], &[0.2], Polarity::AttackHigh);
        assert_eq!(deer(&nan).unwrap_err(), DetectionError::NonFiniteScore);
        let s = set(&[0.1], &[0.8], Polarity::AttackHigh);
        assert!(matches!(
            bpcer_at_apcer(&s, 0.0),
            Err(DetectionError::TargetOutOfRange(_))
        ));
        assert!(matches!(
            bpcer_at_apcer(&s, 1.0),
            Err(DetectionError::TargetOutOfRange(_))
        ));
    }
}
