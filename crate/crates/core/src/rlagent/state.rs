use super::RlError;
use crate::data::FeatureTensor;

/// Mean temporal features over every present (node, step) of the batch,
/// followed by mean spatial features over every node.
pub fn build_state(batch: &[&FeatureTensor]) -> Result<Vec<f64>, RlError> {
    let first = batch.first().ok_or(RlError::EmptyBatch)?;
    let (ft, fs) = (first.n_temporal(), first.n_spatial());
    let mut temporal = vec![0.0; ft];
    let mut spatial = vec![0.0; fs];
    let (mut nt, mut ns) = (0usize, 0usize);
    for f in batch {
        if f.n_temporal() != ft || f.n_spatial() != fs {
            return Err(RlError::StateWidth { expected: ft + fs, got: f.n_temporal() + f.n_spatial() });
        }
        for r in 0..f.nodes.len() {
            for s in 0..f.steps {
                if f.is_present(r, s) {
                    temporal.iter_mut().zip(f.temporal_row(r, s)).for_each(|(acc, x)| *acc += x);
                    nt += 1;
                }
            }
            spatial.iter_mut().zip(f.spatial.row(r)).for_each(|(acc, x)| *acc += x);
            ns += 1;
        }
    }
    if nt == 0 {
        return Err(RlError::EmptyBatch);
    }
    temporal.iter_mut().for_each(|x| *x /= nt as f64);
    spatial.iter_mut().for_each(|x| *x /= ns as f64);
    temporal.extend(spatial);
    Ok(temporal)
}
