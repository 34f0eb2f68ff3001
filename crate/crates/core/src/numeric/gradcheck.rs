//! Central finite-difference verification of [`Graph::backward`].

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Gradients, Inputs, NodeId, ParamId, ParamStore};
use super::reference::{reference_eval, WideParams};
use super::NumericError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckConfig {
    /// Finite-difference half step.
    pub step: f32,
    /// Maximum allowed relative error per parameter.
    pub tolerance: f64,
    /// Gradient magnitude below which the relative error denominator is clamped.
    pub floor: f64,
    /// Checks at most this many entries per parameter (all if `None`).
    pub max_entries: Option<usize>,
    pub seed: u64,
    /// Evaluate the perturbed losses with the `f64` reference interpreter
    /// instead of the `f32` graph. A probe whose ±step evaluations land on a
    /// different side of any leaky-relu or absolute-value kink than the
    /// unperturbed point is retried with a step ten times smaller, up to
    /// [`KINK_RETRIES`] times.
    pub double_precision: bool,
}

pub const KINK_RETRIES: u32 = 3;

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-3,
            tolerance: 1e-3,
            floor: 1e-6,
            max_entries: None,
            seed: 0,
            double_precision: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub param: ParamId,
    pub name: String,
    pub entries_checked: usize,
    pub max_rel_error: f64,
    /// Flat index of the worst entry.
    pub worst_entry: usize,
    pub flagged: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| !p.flagged)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn flagged(&self) -> impl Iterator<Item = &ParamCheck> {
        self.params.iter().filter(|p| p.flagged)
    }
}

/// Entries probed for one parameter, in ascending order.
fn probe_entries(numel: usize, max: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    match max {
        Some(m) if m < numel => {
            let mut idx = sample(rng, numel, m).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..numel).collect(),
    }
}

/// Numeric gradients at the probed entries, keyed by parameter and flat index.
pub fn numeric_gradients(
    graph: &Graph,
    params: &ParamStore,
    inputs: &Inputs,
    loss: NodeId,
    wrt: &[ParamId],
    config: &GradCheckConfig,
) -> Result<Vec<(ParamId, Vec<(usize, f64)>)>, NumericError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    if config.double_precision {
        let mut work = WideParams::from_store(params);
        let (_, base) = reference_eval(graph, &work, inputs, loss)?;
        let mut out = Vec::with_capacity(wrt.len());
        for &id in wrt {
            let numel = params.get(id).numel();
            let mut entries = Vec::new();
            for j in probe_entries(numel, config.max_entries, &mut rng) {
                let orig = *work.entry_mut(id.index(), j);
                let mut h = config.step as f64;
                let mut estimate;
                let mut tries = 0;
                loop {
                    *work.entry_mut(id.index(), j) = orig + h;
                    let (plus, sp) = reference_eval(graph, &work, inputs, loss)?;
                    *work.entry_mut(id.index(), j) = orig - h;
                    let (minus, sm) = reference_eval(graph, &work, inputs, loss)?;
                    estimate = (plus - minus) / (2.0 * h);
                    if (sp == base && sm == base) || tries == KINK_RETRIES {
                        break;
                    }
                    h /= 10.0;
                    tries += 1;
                }
                *work.entry_mut(id.index(), j) = orig;
                entries.push((j, estimate));
            }
            out.push((id, entries));
        }
        return Ok(out);
    }
    let mut work = params.clone();
    let eval_loss = |store: &ParamStore| -> Result<f64, NumericError> {
        let ev = graph.forward(store, inputs)?;
        Ok(ev.scalar(loss).unwrap_or(f64::NAN))
    };
    let mut out = Vec::with_capacity(wrt.len());
    for &id in wrt {
        let numel = params.get(id).numel();
        let mut entries = Vec::new();
        for j in probe_entries(numel, config.max_entries, &mut rng) {
            let orig = work.get(id).data()[j];
            work.get_mut(id).data_mut()[j] = orig + config.step;
            let plus = eval_loss(&work)?;
            work.get_mut(id).data_mut()[j] = orig - config.step;
            let minus = eval_loss(&work)?;
            work.get_mut(id).data_mut()[j] = orig;
            // Use the realised step so f32 rounding of orig ± step does not bias the quotient.
            let span = ((orig + config.step) as f64) - ((orig - config.step) as f64);
            entries.push((j, (plus - minus) / span));
        }
        out.push((id, entries));
    }
    Ok(out)
}

/// Relative error of one parameter tensor in the max norm:
/// `‖a − n‖∞ / max(‖a‖∞, ‖n‖∞, floor)`, plus the index of the largest deviation.
///
/// Entry-wise ratios are not used because at `f32` the rounding noise of a
/// central difference is absolute, so tiny entries would dominate.
pub fn relative_error(pairs: &[(usize, f64, f64)], floor: f64) -> (f64, usize) {
    let mut scale = floor;
    let (mut worst, mut worst_entry) = (0.0f64, pairs.first().map_or(0, |p| p.0));
    for &(j, a, n) in pairs {
        scale = scale.max(a.abs()).max(n.abs());
        let d = (a - n).abs();
        if d > worst || d.is_nan() {
            worst = if d.is_nan() { f64::INFINITY } else { d };
            worst_entry = j;
        }
    }
    (worst / scale, worst_entry)
}

/// Compares supplied analytic gradients against numeric ones.
pub fn compare_gradients(
    params: &ParamStore,
    analytic: &Gradients,
    numeric: &[(ParamId, Vec<(usize, f64)>)],
    config: &GradCheckConfig,
) -> GradCheckReport {
    let params = numeric
        .iter()
        .map(|(id, entries)| {
            let grad = analytic.get(*id);
            let pairs: Vec<(usize, f64, f64)> = entries
                .iter()
                .map(|&(j, num)| (j, grad.map_or(0.0, |g| g.data()[j] as f64), num))
                .collect();
            let (worst, worst_entry) = relative_error(&pairs, config.floor);
            ParamCheck {
                param: *id,
                name: params.name(*id).to_string(),
                entries_checked: entries.len(),
                max_rel_error: worst,
                worst_entry,
                flagged: worst > config.tolerance,
            }
        })
        .collect();
    GradCheckReport { params }
}

/// Runs forward + backward and checks every parameter in `wrt` (all if empty)
/// against central differences.
pub fn grad_check(
    graph: &Graph,
    params: &ParamStore,
    inputs: &Inputs,
    loss: NodeId,
    wrt: &[ParamId],
    config: &GradCheckConfig,
) -> Result<GradCheckReport, NumericError> {
    let eval = graph.forward(params, inputs)?;
    let analytic = graph.backward(params, &eval, loss)?;
    let wrt: Vec<ParamId> = if wrt.is_empty() {
        params.ids().collect()
    } else {
        wrt.to_vec()
    };
    let numeric = numeric_gradients(graph, params, inputs, loss, &wrt, config)?;
    Ok(compare_gradients(params, &analytic, &numeric, config))
}
