//! Frontal-pose screening over five landmarks and greedy optimal pairing
//! over embedding vectors.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PoseError {
    #[error("degenerate landmarks: zero-length vector between {0} and {1}")]
    DegenerateLandmarks(String, String),
    #[error("landmark {0} is not finite")]
    NonFiniteLandmark(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum PairingError {
    #[error("zero vector for subject {0}")]
    ZeroVector(String),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("need at least two embeddings, got {0}")]
    TooFewEmbeddings(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// Five-point landmark set: eyes, nose, mouth corners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandmarkSet5 {
    pub left_eye: Point,
    pub right_eye: Point,
    pub nose: Point,
    pub left_mouth: Point,
    pub right_mouth: Point,
}

impl LandmarkSet5 {
    fn check_finite(&self) -> Result<(), PoseError> {
        let named = [
            ("left_eye", self.left_eye),
            ("right_eye", self.right_eye),
            ("nose", self.nose),
            ("left_mouth", self.left_mouth),
            ("right_mouth", self.right_mouth),
        ];
        for (name, p) in named {
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(PoseError::NonFiniteLandmark(name.to_string()));
            }
        }
        Ok(())
    }
}

/// Angle in [0, pi] between the vectors (tip_a - origin_a) and
/// (tip_b - origin_b) after unit normalization.
pub fn angle_between(
    origin_a: Point,
    tip_a: Point,
    origin_b: Point,
    tip_b: Point,
) -> Result<f64, PoseError> {
    let ax = tip_a.x - origin_a.x;
    let ay = tip_a.y - origin_a.y;
    let bx = tip_b.x - origin_b.x;
    let by = tip_b.y - origin_b.y;
    let na = (ax * ax + ay * ay).sqrt();
    let nb = (bx * bx + by * by).sqrt();
    if na == 0.0 {
        return Err(PoseError::DegenerateLandmarks(
            format!("({}, {})", origin_a.x, origin_a.y),
            format!("({}, {})", tip_a.x, tip_a.y),
        ));
    }
    if nb == 0.0 {
        return Err(PoseError::DegenerateLandmarks(
            format!("({}, {})", origin_b.x, origin_b.y),
            format!("({}, {})", tip_b.x, tip_b.y),
        ));
    }
    let dot = (ax * bx + ay * by) / (na * nb);
    Ok(dot.clamp(-1.0, 1.0).acos())
}

/// Absolute difference between the left-side angle (LE->N vs LM->N) and
/// the right-side angle (N->RE vs N->RM).
pub fn angle_diff(lm: &LandmarkSet5) -> Result<f64, PoseError> {
    lm.check_finite()?;
    let theta1 = angle_between(lm.left_eye, lm.nose, lm.left_mouth, lm.nose)?;
    let theta2 = angle_between(lm.nose, lm.right_eye, lm.nose, lm.right_mouth)?;
    Ok((theta1 - theta2).abs())
}

/// A face is frontal when the left/right angle difference stays within tau
/// (radians).
pub fn is_frontal(lm: &LandmarkSet5, tau: f64) -> Result<bool, PoseError> {
    Ok(angle_diff(lm)? <= tau)
}

/// Ordered list of subject-id embedding vectors.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    pub entries: Vec<(String, Vec<f64>)>,
}

impl EmbeddingSet {
    pub fn new(entries: Vec<(String, Vec<f64>)>) -> Result<Self, PairingError> {
        if let Some((_, first)) = entries.first() {
            let dim = first.len();
            for (id, v) in &entries {
                if v.len() != dim {
                    return Err(PairingError::DimensionMismatch(dim, v.len()));
                }
                if v.iter().all(|&x| x == 0.0) {
                    return Err(PairingError::ZeroVector(id.clone()));
                }
            }
        }
        Ok(EmbeddingSet { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// 1 - cos(u, v); in [0, 2].
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64, PairingError> {
    if u.len() != v.len() {
        return Err(PairingError::DimensionMismatch(u.len(), v.len()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(PairingError::ZeroVector(String::new()));
    }
    Ok(1.0 - dot / (nu * nv))
}

/// Ordered index pairs with the swapped-duplicate constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairList {
    pub pairs: Vec<(usize, usize)>,
}

/// Greedy nearest-neighbor pairing. For each subject in input order the
/// nearest other subject is chosen (ties by lowest index); if the swapped
/// pair is already listed, the walk continues to the next-nearest
/// non-conflicting neighbor. A subject whose every candidate conflicts
/// contributes no pair (the minimal two-subject case keeps only the first
/// pair and suppresses its swap).
pub fn find_optimal_pairs(e: &EmbeddingSet) -> Result<PairList, PairingError> {
    let n = e.len();
    if n < 2 {
        return Err(PairingError::TooFewEmbeddings(n));
    }
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        let mut candidates: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
        for j in 0..n {
            if j == i {
                continue;
            }
            let d = cosine_distance(&e.entries[i].1, &e.entries[j].1)?;
            candidates.push((d, j));
        }
        // distance ascending, ties broken by lowest index
        candidates.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        if let Some(chosen) = candidates
            .iter()
            .map(|&(_, j)| j)
            .find(|&j| !pairs.contains(&(j, i)))
        {
            pairs.push((i, chosen));
        }
    }
    Ok(PairList { pairs })
}

#[cfg(test)]
mod tests {
    use super::*;

    const PI: f64 = std::f64::consts::PI;

    fn symmetric_landmarks() -> LandmarkSet5 {
        LandmarkSet5 {
            left_eye: Point::new(-1.0, -1.0),
            right_eye: Point::new(1.0, -1.0),
            nose: Point::new(0.0, 0.0),
            left_mouth: Point::new(-1.0, 1.0),
            right_mouth: Point::new(1.0, 1.0),
        }
    }

    #[test]
    fn angle_between_basics() {
        let o = Point::new(0.0, 0.0);
        let e1 = Point::new(1.0, 0.0);
        let e2 = Point::new(0.0, 1.0);
        let neg = Point::new(-1.0, 0.0);
        assert!((angle_between(o, e1, o, e1).unwrap()).abs() < 1e-15);
        assert!((angle_between(o, e1, o, neg).unwrap() - PI).abs() < 1e-15);
        assert!((angle_between(o, e1, o, e2).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!(matches!(
            angle_between(o, o, o, e1),
            Err(PoseError::DegenerateLandmarks(..))
        ));
    }

    #[test]
    fn mirror_symmetric_landmarks_are_frontal() {
        let lm = symmetric_landmarks();
        assert!(angle_diff(&lm).unwrap() < 1e-12);
        assert!(is_frontal(&lm, 1e-9).unwrap());
    }

    #[test]
    fn displaced_eye_breaks_frontality() {
        let mut lm = symmetric_landmarks();
        lm.right_eye = Point::new(5.0, -1.0);
        // theta1 = 90 deg; theta2 = atan2 geometry: angle between N->RE and
        // N->RM = atan(1/5 slope) vs 45 deg -> analytically
        let theta1 = PI / 2.0;
        let theta2 = angle_between(lm.nose, lm.right_eye, lm.nose, lm.right_mouth).unwrap();
        let expected = (theta1 - theta2).abs();
        assert!((angle_diff(&lm).unwrap() - expected).abs() < 1e-15);
        assert!(!is_frontal(&lm, 0.0523).unwrap());
        // tau = pi always accepts: angle difference is bounded by pi
        assert!(is_frontal(&lm, PI).unwrap());
    }

    #[test]
    fn frontality_is_similarity_invariant() {
        let lm = symmetric_landmarks();
        let base = angle_diff(&lm).unwrap();
        let transform = |p: Point, s: f64, rot: f64, tx: f64, ty: f64| {
            let (sin, cos) = rot.sin_cos();
            Point::new(
                s * (p.x * cos - p.y * sin) + tx,
                s * (p.x * sin + p.y * cos) + ty,
            )
        };
        for k in 0..10 {
            let s = 0.5 + k as f64 * 0.7;
            let rot = k as f64 * 0.61;
            let t = LandmarkSet5 {
                left_eye: transform(lm.left_eye, s, rot, 3.0, -2.0),
                right_eye: transform(lm.right_eye, s, rot, 3.0, -2.0),
                nose: transform(lm.nose, s, rot, 3.0, -2.0),
                left_mouth: transform(lm.left_mouth, s, rot, 3.0, -2.0),
                right_mouth: transform(lm.right_mouth, s, rot, 3.0, -2.0),
            };
            assert!((angle_diff(&t).unwrap() - base).abs() < 1e-9);
        }
    }

    #[test]
    fn cosine_distance_basics() {
        let u = vec![1.0, 0.0];
        let v = vec![0.0, 1.0];
        let w = vec![-2.0, 0.0];
        assert!((cosine_distance(&u, &u).unwrap()).abs() < 1e-15);
        assert!((cosine_distance(&u, &v).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine_distance(&u, &w).unwrap() - 2.0).abs() < 1e-15);
        // scale invariance
        let su: Vec<f64> = u.iter().map(|x| x * 7.5).collect();
        assert!((cosine_distance(&su, &v).unwrap() - cosine_distance(&u, &v).unwrap()).abs() < 1e-15);
        assert!(cosine_distance(&[0.0, 0.0], &u).is_err());
        assert!(cosine_distance(&[1.0], &u).is_err());
    }

    #[test]
    fn two_embeddings_suppress_swapped_pair() {
        let e = EmbeddingSet::new(vec![
            ("a".into(), vec![1.0, 0.0]),
            ("b".into(), vec![0.9, 0.1]),
        ])
        .unwrap();
        let pairs = find_optimal_pairs(&e).unwrap();
        assert_eq!(pairs.pairs, vec![(0, 1)]);
    }

    #[test]
    fn crafted_five_point_pairing_matches_hand_trace() {
        // 2-D points on the unit circle at increasing angles; cosine
        // distance is monotone in angular separation.
        let at = |deg: f64| {
            let r = deg.to_radians();
            vec![r.cos(), r.sin()]
        };
        let e = EmbeddingSet::new(vec![
            ("a".into(), at(0.0)),
            ("b".into(), at(10.0)),
            ("c".into(), at(25.0)),
            ("d".into(), at(90.0)),
            ("e".into(), at(95.0)),
        ])
        .unwrap();
        let pairs = find_optimal_pairs(&e).unwrap().pairs;
        // hand trace of the greedy rule:
        // i=0: nearest is 1 -> (0,1)
        // i=1: nearest is 0, but (0,1) present -> next nearest 2 -> (1,2)
        // i=2: nearest is 1, (1,2) present -> next nearest 0 -> (2,0)
        // i=3: nearest is 4 -> (3,4)
        // i=4: nearest is 3, (3,4) present -> next nearest 2 -> (4,2)
        assert_eq!(pairs, vec![(0, 1), (1, 2), (2, 0), (3, 4), (4, 2)]);
        for &(i, j) in &pairs {
            assert_ne!(i, j);
            assert!(!pairs.contains(&(j, i)), "swapped pair ({j},{i})");
        }
        assert_eq!(pairs.len(), e.len());
    }

    #[test]
    fn too_few_embeddings_error() {
        let e = EmbeddingSet::new(vec![("a".into(), vec![1.0])]).unwrap();
        assert_eq!(
            find_optimal_pairs(&e).unwrap_err(),
            PairingError::TooFewEmbeddings(1)
        );
    }
}
