use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RlError;

/// How often each feature was masked during training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskCounter {
    pub counts: Vec<u64>,
    pub total: u64,
}

impl MaskCounter {
    pub fn new(n_features: usize) -> Self {
        MaskCounter { counts: vec![0; n_features], total: 0 }
    }

    pub fn record(&mut self, action: usize) {
        self.counts[action] += 1;
        self.total += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub rank: usize,
    pub feature_name: String,
    pub mask_count: u64,
    pub mask_fraction: f64,
}

/// Least-masked first (rank 1 = most important); ties keep registry order.
pub fn ranking_report(counter: &MaskCounter, names: &[String]) -> Result<Vec<RankEntry>, RlError> {
    if counter.total == 0 {
        return Err(RlError::NoActions);
    }
    if names.len() != counter.counts.len() {
        return Err(RlError::StateWidth { expected: counter.counts.len(), got: names.len() });
    }
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by_key(|&k| counter.counts[k]);
    Ok(order
        .into_iter()
        .enumerate()
        .map(|(r, k)| RankEntry {
            rank: r + 1,
            feature_name: names[k].clone(),
            mask_count: counter.counts[k],
            mask_fraction: counter.counts[k] as f64 / counter.total as f64,
        })
        .collect())
}

pub fn write_ranking_csv(path: &Path, entries: &[RankEntry]) -> Result<(), RlError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| RlError::Io(e.to_string()))?;
    for e in entries {
        w.serialize(e).map_err(|e| RlError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| RlError::Io(e.to_string()))
}

pub fn read_ranking_csv(path: &Path) -> Result<Vec<RankEntry>, RlError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| RlError::Io(e.to_string()))?;
    r.deserialize().collect::<Result<_, _>>().map_err(|e| RlError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn ascending_by_count() {
        let c = MaskCounter { counts: vec![50, 2, 10], total: 62 };
        let r = ranking_report(&c, &names(&["incident", "vol", "weekday"])).unwrap();
        let order: Vec<&str> = r.iter().map(|e| e.feature_name.as_str()).collect();
        assert_eq!(order, ["vol", "weekday", "incident"]);
        assert_eq!(r[0].rank, 1);
        assert_eq!(r.iter().map(|e| e.mask_count).sum::<u64>(), c.total);
        assert!((r.iter().map(|e| e.mask_fraction).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ties_keep_registry_order() {
        let c = MaskCounter { counts: vec![3, 3, 3], total: 9 };
        let r = ranking_report(&c, &names(&["a", "b", "c"])).unwrap();
        assert_eq!(r.iter().map(|e| e.feature_name.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);
    }

    #[test]
    fn counter_and_empty() {
        let mut c = MaskCounter::new(3);
        assert!(matches!(ranking_report(&c, &names(&["a", "b", "c"])), Err(RlError::NoActions)));
        [0, 2, 2].iter().for_each(|&a| c.record(a));
        assert_eq!(c.counts.iter().sum::<u64>(), c.total);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ranking.csv");
        let c = MaskCounter { counts: vec![1, 3], total: 4 };
        let r = ranking_report(&c, &names(&["x", "y"])).unwrap();
        write_ranking_csv(&p, &r).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("rank,feature_name,mask_count,mask_fraction\n1,x,1,0.25\n"));
        assert_eq!(read_ranking_csv(&p).unwrap(), r);
    }
}
