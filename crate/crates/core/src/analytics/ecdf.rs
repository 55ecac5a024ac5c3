use serde::{Deserialize, Serialize};

use super::AnalyticsError;

/// One step of an empirical CDF. `count` is the mass at `ratio`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcdfPoint {
    pub ratio: f64,
    pub cum_fraction: f64,
    pub count: u64,
    pub cum_count: u64,
}

/// Step points of the ECDF of `ratios`, which must all lie in [0, 1].
pub fn ecdf(ratios: &[f64]) -> Result<Vec<EcdfPoint>, AnalyticsError> {
    if ratios.is_empty() {
        return Err(AnalyticsError::EmptyInput);
    }
    if let Some(&bad) = ratios.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(AnalyticsError::OutOfRange(bad));
    }
    let mut sorted = ratios.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as u64;
    let mut points: Vec<EcdfPoint> = Vec::new();
    let mut cum = 0u64;
    for x in sorted {
        cum += 1;
        // -0.0 and 0.0 collapse into one step.
        match points.last_mut() {
            Some(p) if p.ratio == x => {
                p.count += 1;
                p.cum_count = cum;
            }
            _ => points.push(EcdfPoint {
                ratio: if x == 0.0 { 0.0 } else { x },
                cum_fraction: 0.0,
                count: 1,
                cum_count: cum,
            }),
        }
    }
    for p in &mut points {
        p.cum_fraction = p.cum_count as f64 / n as f64;
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_step() {
        let pts = ecdf(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!((pts[0].ratio, pts[0].cum_fraction), (0.0, 2.0 / 3.0));
        assert_eq!((pts[1].ratio, pts[1].cum_fraction), (1.0, 1.0));
        assert_eq!(pts[0].count, 2);
    }

    #[test]
    fn errors() {
        assert!(matches!(ecdf(&[]), Err(AnalyticsError::EmptyInput)));
        assert!(matches!(ecdf(&[0.5, 1.5]), Err(AnalyticsError::OutOfRange(_))));
        assert!(matches!(ecdf(&[f64::NAN]), Err(AnalyticsError::OutOfRange(_))));
    }

    #[test]
    fn negative_zero_merges() {
        let pts = ecdf(&[-0.0, 0.0]).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(pts[0].ratio.is_sign_positive());
    }
}
