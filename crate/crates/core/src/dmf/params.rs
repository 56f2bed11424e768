use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DmfError;
use crate::numcore::Tensor;

/// Graph feeding one GCN encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSource {
    Distance,
    TravelTime,
    /// frozen distance graph over all detectors
    Static,
    /// no spatial mixing (`Ã = I`)
    Identity,
}

impl GraphSource {
    pub fn tag(self) -> &'static str {
        match self {
            GraphSource::Distance => "d",
            GraphSource::TravelTime => "tt",
            GraphSource::Static => "static",
            GraphSource::Identity => "id",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DmfConfig {
    pub n_temporal: usize,
    pub n_spatial: usize,
    pub hidden: usize,
    pub horizon: usize,
    pub gcn_depth: usize,
    pub sources: Vec<GraphSource>,
}

impl DmfConfig {
    pub fn n_features(&self) -> usize {
        self.n_temporal + self.n_spatial
    }

    pub fn validate(&self) -> Result<(), DmfError> {
        let bad = |m: &str| Err(DmfError::Config(m.to_string()));
        if self.hidden == 0 || self.horizon == 0 || self.gcn_depth == 0 {
            return bad("hidden size, horizon and GCN depth must be positive");
        }
        if self.n_features() == 0 {
            return bad("no input features");
        }
        if self.sources.is_empty() {
            return bad("at least one graph source is required");
        }
        for (k, s) in self.sources.iter().enumerate() {
            if self.sources[..k].contains(s) {
                return bad("duplicate graph source");
            }
        }
        Ok(())
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let (f, h, p, g) = (self.n_features(), self.hidden, self.horizon, self.sources.len());
        let gcn = g * (f * h + (self.gcn_depth - 1) * h * h);
        let attn = if g > 1 { g * h } else { 0 };
        gcn + attn + 8 * h * h + 4 * h + p * h + p
    }
}

/// Index of each named tensor in the flat parameter list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    /// per source, per layer
    pub gcn: Vec<Vec<usize>>,
    pub attn: Vec<usize>,
    /// forget, input, candidate, output
    pub w: [usize; 4],
    pub u: [usize; 4],
    pub b: [usize; 4],
    pub w_out: usize,
    pub b_out: usize,
}

const GATES: [&str; 4] = ["f", "i", "c", "o"];

fn param_table(cfg: &DmfConfig) -> (ParamLayout, Vec<(String, Vec<usize>, usize)>) {
    let (f, h, p) = (cfg.n_features(), cfg.hidden, cfg.horizon);
    let mut entries: Vec<(String, Vec<usize>, usize)> = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, fan_in: usize| {
        entries.push((name, shape, fan_in));
        entries.len() - 1
    };
    let gcn = cfg
        .sources
        .iter()
        .map(|s| {
            (0..cfg.gcn_depth)
                .map(|k| match k {
                    0 => push(format!("W_{}", s.tag()), vec![f, h], f),
                    _ => push(format!("W_{}.{k}", s.tag()), vec![h, h], h),
                })
                .collect()
        })
        .collect();
    let attn = if cfg.sources.len() > 1 {
        cfg.sources.iter().map(|s| push(format!("w_{}", s.tag()), vec![h, 1], h)).collect()
    } else {
        Vec::new()
    };
    let w = GATES.map(|g| push(format!("W_{g}"), vec![h, h], h));
    let u = GATES.map(|g| push(format!("U_{g}"), vec![h, h], h));
    let b = GATES.map(|g| push(format!("b_{g}"), vec![1, h], h));
    let w_out = push("W_out".into(), vec![p, h], h);
    let b_out = push("b_out".into(), vec![1, p], h);
    (ParamLayout { gcn, attn, w, u, b, w_out, b_out }, entries)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmfParameters {
    pub config: DmfConfig,
    names: Vec<String>,
    tensors: Vec<Tensor>,
    layout: ParamLayout,
}

impl DmfParameters {
    /// Uniform `±1/√fan_in` initialisation.
    pub fn init<R: Rng>(config: DmfConfig, rng: &mut R) -> Result<Self, DmfError> {
        config.validate()?;
        let (layout, entries) = param_table(&config);
        let mut names = Vec::with_capacity(entries.len());
        let mut tensors = Vec::with_capacity(entries.len());
        for (name, shape, fan_in) in entries {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let n = shape.iter().product();
            let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
            tensors.push(Tensor::new(shape, data)?);
            names.push(name);
        }
        Ok(DmfParameters { config, names, tensors, layout })
    }

    /// Rebuilds parameters from named tensors, checking names and shapes.
    pub fn from_named(config: DmfConfig, mut named: Vec<(String, Tensor)>) -> Result<Self, DmfError> {
        config.validate()?;
        let (layout, entries) = param_table(&config);
        let mut names = Vec::with_capacity(entries.len());
        let mut tensors = Vec::with_capacity(entries.len());
        for (name, shape, _) in entries {
            let k = named.iter().position(|(n, _)| *n == name).ok_or_else(|| DmfError::Parameter {
                name: name.clone(),
                message: "missing".into(),
            })?;
            let (_, t) = named.swap_remove(k);
            if t.shape() != shape.as_slice() {
                return Err(DmfError::Parameter {
                    name,
                    message: format!("shape {:?}, expected {:?}", t.shape(), shape),
                });
            }
            if !t.all_finite() {
                return Err(DmfError::Parameter { name, message: "non-finite values".into() });
            }
            names.push(name);
            tensors.push(t);
        }
        if let Some((extra, _)) = named.first() {
            return Err(DmfError::Parameter { name: extra.clone(), message: "unexpected tensor".into() });
        }
        Ok(DmfParameters { config, names, tensors, layout })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|k| &self.tensors[k])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names.iter().position(|n| n == name).map(move |k| &mut self.tensors[k])
    }

    pub fn named(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(sources: Vec<GraphSource>, depth: usize) -> DmfConfig {
        DmfConfig { n_temporal: 24, n_spatial: 8, hidden: 16, horizon: 6, gcn_depth: depth, sources }
    }

    #[test]
    fn two_graph_count_matches_formula() {
        let c = cfg(vec![GraphSource::Distance, GraphSource::TravelTime], 1);
        let p = DmfParameters::init(c.clone(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let (f, h, q) = (32, 16, 6);
        assert_eq!(p.count(), 2 * f * h + 2 * h + 8 * h * h + 4 * h + q * h + q);
        assert_eq!(p.count(), c.param_count());
    }

    #[test]
    fn other_layouts_count() {
        for c in [cfg(vec![GraphSource::Identity], 1), cfg(vec![GraphSource::Distance, GraphSource::TravelTime], 3)] {
            let p = DmfParameters::init(c.clone(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
            assert_eq!(p.count(), c.param_count());
        }
    }

    #[test]
    fn init_is_bounded_and_seeded() {
        let c = cfg(vec![GraphSource::Distance, GraphSource::TravelTime], 1);
        let a = DmfParameters::init(c.clone(), &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = DmfParameters::init(c.clone(), &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
        assert!(a.get("W_d").unwrap().max_abs() <= 1.0 / 32f64.sqrt());
        assert!(a.get("U_f").unwrap().max_abs() <= 0.25);
        assert!(a.all_finite());
    }

    #[test]
    fn from_named_round_trip_and_errors() {
        let c = cfg(vec![GraphSource::Distance, GraphSource::TravelTime], 1);
        let a = DmfParameters::init(c.clone(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mut named: Vec<(String, Tensor)> = a.named().map(|(n, t)| (n.to_string(), t.clone())).collect();
        named.reverse();
        assert_eq!(DmfParameters::from_named(c.clone(), named.clone()).unwrap(), a);

        let mut missing = named.clone();
        missing.pop();
        assert!(DmfParameters::from_named(c.clone(), missing).is_err());
        let mut wrong = named.clone();
        wrong[0].1 = Tensor::zeros(&[1, 1]);
        assert!(DmfParameters::from_named(c.clone(), wrong).is_err());
        let mut extra = named;
        extra.push(("bogus".into(), Tensor::zeros(&[1])));
        assert!(DmfParameters::from_named(c, extra).is_err());
    }

    #[test]
    fn invalid_configs() {
        assert!(cfg(vec![], 1).validate().is_err());
        assert!(cfg(vec![GraphSource::Distance, GraphSource::Distance], 1).validate().is_err());
        assert!(cfg(vec![GraphSource::Distance], 0).validate().is_err());
    }
}
