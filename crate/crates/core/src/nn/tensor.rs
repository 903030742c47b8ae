//! Flat parameter registry. Values and gradients live in parallel arrays
//! keyed by insertion order, so optimizer sweeps and checkpoint layouts are
//! deterministic for a given model build sequence.

/// Handle into a [`ParamStore`]. Only valid for the store that created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
pub struct ParamMeta {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    metas: Vec<ParamMeta>,
    values: Vec<Vec<f64>>,
    grads: Vec<Vec<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a parameter tensor. Names must be unique; they surface in
    /// optimizer diagnostics and gradient-check reports.
    pub fn add(&mut self, name: &str, rows: usize, cols: usize, value: Vec<f64>) -> ParamId {
        assert_eq!(value.len(), rows * cols, "param {name}: shape/value mismatch");
        assert!(
            value.iter().all(|v| v.is_finite()),
            "param {name}: non-finite init"
        );
        assert!(
            self.metas.iter().all(|m| m.name != name),
            "duplicate param name {name}"
        );
        let id = ParamId(self.metas.len());
        self.grads.push(vec![0.0; value.len()]);
        self.values.push(value);
        self.metas.push(ParamMeta {
            name: name.to_string(),
            rows,
            cols,
        });
        id
    }

    pub fn len(&self) -> usize {
        self.metas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metas.is_empty()
    }

    /// Total scalar count across all parameters.
    pub fn n_scalars(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    pub fn meta(&self, id: ParamId) -> &ParamMeta {
        &self.metas[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.metas[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.grads[id.0]
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    /// Insertion-order iteration used by the optimizer and checkpoint I/O.
    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.metas.len()).map(ParamId)
    }

    /// Clone all gradients in id order (gradient-check snapshots).
    pub fn snapshot_grads(&self) -> Vec<Vec<f64>> {
        self.grads.clone()
    }
}
