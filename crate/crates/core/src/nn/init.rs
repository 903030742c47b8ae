//! Weight initialization. Sine layers get the frequency-compensated uniform
//! ranges that keep preactivations in the arcsine-distributed regime; other
//! activations get Xavier-uniform weights and zero biases.

use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitKind {
    /// First sine layer: weights `U(+-1/fan_in)`.
    SineFirst { omega0: f64 },
    /// Later sine layers: weights `U(+-sqrt(6/fan_in)/omega0)`.
    SineHidden { omega0: f64 },
    /// Tanh/sigmoid/linear layers: weights `U(+-sqrt(6/(fan_in+fan_out)))`.
    Xavier,
}

/// Draw a weight matrix (`out_dim x in_dim`, row-major) and bias vector.
pub fn init_dense(
    kind: InitKind,
    in_dim: usize,
    out_dim: usize,
    rng: &mut impl Rng,
) -> (Vec<f64>, Vec<f64>) {
    let (w_bound, b_bound) = match kind {
        InitKind::SineFirst { omega0 } => {
            (1.0 / in_dim as f64, (6.0 / in_dim as f64).sqrt() / omega0)
        }
        InitKind::SineHidden { omega0 } => {
            let b = (6.0 / in_dim as f64).sqrt() / omega0;
            (b, b)
        }
        InitKind::Xavier => ((6.0 / (in_dim + out_dim) as f64).sqrt(), 0.0),
    };
    let w = (0..in_dim * out_dim)
        .map(|_| rng.random_range(-w_bound..=w_bound))
        .collect();
    let b = if b_bound == 0.0 {
        vec![0.0; out_dim]
    } else {
        (0..out_dim)
            .map(|_| rng.random_range(-b_bound..=b_bound))
            .collect()
    };
    (w, b)
}
