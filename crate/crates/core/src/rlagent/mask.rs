use serde::{Deserialize, Serialize};

use super::RlError;

/// Binary feature masks for one training step. At most one feature is off.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskState {
    pub m_temp: Vec<bool>,
    pub m_spatial: Vec<bool>,
    pub action: Option<usize>,
}

impl MaskState {
    /// All features active.
    pub fn none(n_temporal: usize, n_spatial: usize) -> Self {
        MaskState { m_temp: vec![true; n_temporal], m_spatial: vec![true; n_spatial], action: None }
    }

    pub fn n_features(&self) -> usize {
        self.m_temp.len() + self.m_spatial.len()
    }

    pub fn n_temporal(&self) -> usize {
        self.m_temp.len()
    }

    /// Whether combined feature index `k` (temporal first) is active.
    pub fn keeps(&self, k: usize) -> bool {
        let ft = self.m_temp.len();
        if k < ft {
            self.m_temp[k]
        } else {
            self.m_spatial[k - ft]
        }
    }

    /// Copies `src` into `dst`, zeroing masked temporal entries.
    pub fn apply_temporal(&self, src: &[f64], dst: &mut [f64]) {
        for ((o, &x), &keep) in dst.iter_mut().zip(src).zip(&self.m_temp) {
            *o = if keep { x } else { 0.0 };
        }
    }

    pub fn apply_spatial(&self, src: &[f64], dst: &mut [f64]) {
        for ((o, &x), &keep) in dst.iter_mut().zip(src).zip(&self.m_spatial) {
            *o = if keep { x } else { 0.0 };
        }
    }
}

/// Mask that switches off feature `a`: temporal when `a < F_t`, spatial
/// index `a - F_t` otherwise.
pub fn apply_mask(a: usize, n_temporal: usize, n_spatial: usize) -> Result<MaskState, RlError> {
    let n = n_temporal + n_spatial;
    if a >= n {
        return Err(RlError::ActionRange { action: a, n });
    }
    let mut m = MaskState::none(n_temporal, n_spatial);
    if a < n_temporal {
        m.m_temp[a] = false;
    } else {
        m.m_spatial[a - n_temporal] = false;
    }
    m.action = Some(a);
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn temporal_and_spatial_branches() {
        let m = apply_mask(3, 8, 4).unwrap();
        assert!(!m.m_temp[3]);
        assert_eq!(m.m_temp.iter().filter(|&&k| !k).count(), 1);
        assert!(m.m_spatial.iter().all(|&k| k));

        let m = apply_mask(10, 8, 4).unwrap();
        assert!(!m.m_spatial[2]);
        assert!(m.m_temp.iter().all(|&k| k));
        assert!(!m.keeps(10));
        assert_eq!(m.action, Some(10));
    }

    #[test]
    fn out_of_range_action() {
        assert!(matches!(apply_mask(12, 8, 4), Err(RlError::ActionRange { .. })));
    }

    #[test]
    fn none_keeps_everything() {
        let m = MaskState::none(3, 2);
        assert!((0..5).all(|k| m.keeps(k)));
        assert_eq!(m.action, None);
        let mut out = [0.0; 3];
        m.apply_temporal(&[1.0, -2.0, 3.0], &mut out);
        assert_eq!(out, [1.0, -2.0, 3.0]);
    }
}
