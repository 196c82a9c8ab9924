//! Early-warning score banding.
//!
//! Each vital maps to a sub-score through an ordered list of bands; the
//! total is the sum. The default table is the NEWS2 air scale (no oxygen
//! information is available in the cohort). Band edges sit halfway between
//! representable readings so rounded inputs never land on an edge.

use serde::{Deserialize, Serialize};

/// `score` applies to readings `< below`; the last band should use infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub below: f64,
    pub score: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsBanding {
    pub resp_rate: Vec<Band>,
    pub sats: Vec<Band>,
    pub sbp: Vec<Band>,
    pub heart_rate: Vec<Band>,
    pub temperature: Vec<Band>,
    pub limited_consciousness: u8,
}

fn bands(edges: &[(f64, u8)], last: u8) -> Vec<Band> {
    let mut v: Vec<Band> = edges.iter().map(|&(below, score)| Band { below, score }).collect();
    v.push(Band { below: f64::INFINITY, score: last });
    v
}

impl Default for NewsBanding {
    fn default() -> Self {
        Self {
            resp_rate: bands(&[(8.5, 3), (11.5, 1), (20.5, 0), (24.5, 2)], 3),
            sats: bands(&[(91.5, 3), (93.5, 2), (95.5, 1)], 0),
            sbp: bands(&[(90.5, 3), (100.5, 2), (110.5, 1), (219.5, 0)], 3),
            heart_rate: bands(&[(40.5, 3), (50.5, 1), (90.5, 0), (110.5, 1), (130.5, 2)], 3),
            temperature: bands(&[(35.05, 3), (36.05, 1), (38.05, 0), (39.05, 1)], 2),
            limited_consciousness: 3,
        }
    }
}

fn band_score(bands: &[Band], x: f64) -> u8 {
    bands.iter().find(|b| x < b.below).map_or(0, |b| b.score)
}

impl NewsBanding {
    pub fn score(&self, temperature: f64, sbp: f64, heart_rate: f64, sats: f64, resp_rate: f64, limited: bool) -> u8 {
        band_score(&self.resp_rate, resp_rate)
            + band_score(&self.sats, sats)
            + band_score(&self.sbp, sbp)
            + band_score(&self.heart_rate, heart_rate)
            + band_score(&self.temperature, temperature)
            + if limited { self.limited_consciousness } else { 0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_observations_score_zero() {
        assert_eq!(NewsBanding::default().score(37.0, 120.0, 70.0, 98.0, 16.0, false), 0);
    }

    #[test]
    fn band_edges() {
        let b = NewsBanding::default();
        assert_eq!(b.score(35.0, 120.0, 70.0, 98.0, 16.0, false), 3);
        assert_eq!(b.score(35.1, 120.0, 70.0, 98.0, 16.0, false), 1);
        assert_eq!(b.score(38.0, 120.0, 70.0, 98.0, 16.0, false), 0);
        assert_eq!(b.score(39.1, 120.0, 70.0, 98.0, 16.0, false), 2);
        assert_eq!(b.score(37.0, 220.0, 70.0, 98.0, 16.0, false), 3);
        assert_eq!(b.score(37.0, 120.0, 91.0, 98.0, 16.0, false), 1);
        assert_eq!(b.score(37.0, 120.0, 70.0, 95.0, 16.0, false), 1);
        assert_eq!(b.score(37.0, 120.0, 70.0, 98.0, 25.0, true), 6);
    }

    #[test]
    fn worst_case_on_air_is_eighteen() {
        assert_eq!(NewsBanding::default().score(34.0, 80.0, 140.0, 85.0, 30.0, true), 18);
    }
}
