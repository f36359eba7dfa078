//! Browser bindings: sample a field, draw its series and tree walk, and
//! bin the hierarchical chaos masses of one level.

use chaoslab::chaos::measure_level;
use chaoslab::rng::stream;
use chaoslab::{CoefficientModel, FieldRealization, PartitionSystem};
use wasm_bindgen::prelude::*;

/// Deepest level the page will build; T_8 is about 1.5 million nodes.
pub const MAX_LEVEL: usize = 8;

fn js_err(e: chaoslab::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    ps: PartitionSystem,
    fr: FieldRealization,
}

#[wasm_bindgen]
impl Demo {
    /// `law` is one of gaussian, rademacher, uniform_sym, two_point_asym.
    #[wasm_bindgen(constructor)]
    pub fn new(law: &str, seed: u32) -> Result<Demo, JsError> {
        let model = CoefficientModel::by_name(law, &[]).map_err(js_err)?;
        let ps = PartitionSystem::build(MAX_LEVEL).map_err(js_err)?;
        let fr = FieldRealization::sample_levels(&model, MAX_LEVEL, &mut stream(seed as u64, "demo", 0));
        Ok(Demo { ps, fr })
    }

    /// S_n(t) on `points` equally spaced t in [0, 1).
    pub fn series(&self, n_freq: u32, points: u32) -> Result<Vec<f64>, JsError> {
        (0..points).map(|i| self.fr.eval_series(n_freq as u64, i as f64 / points as f64).map_err(js_err)).collect()
    }

    /// The tree field S̃_n, constant on level-n intervals, sampled like `series`.
    pub fn tree_walk(&self, level: u32, points: u32) -> Result<Vec<f64>, JsError> {
        let n = level as usize;
        (0..points)
            .map(|i| {
                let (j, _) = self.ps.locate(n, i as f64 / points as f64).map_err(js_err)?;
                Ok(*self.fr.tree_walk(&self.ps, n, j).map_err(js_err)?.last().unwrap())
            })
            .collect()
    }

    /// Chaos mass of level `level` summed into `bins` equal bins, plus the
    /// total mass as the last entry.
    pub fn masses(&self, gamma: f64, level: u32, bins: u32) -> Result<Vec<f64>, JsError> {
        binned_masses(&self.fr, &self.ps, gamma, level as usize, bins as usize).map_err(js_err)
    }

    /// Number of intervals at a level and the largest interval length.
    pub fn level_info(&self, level: u32) -> Result<Vec<f64>, JsError> {
        let n = level as usize;
        let bp = self.ps.breakpoints(n).map_err(js_err)?;
        let l = self.ps.denominator() as f64;
        let widest = bp.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0) as f64 / l;
        Ok(vec![self.ps.t_count(n) as f64, widest])
    }
}

pub fn binned_masses(fr: &FieldRealization, ps: &PartitionSystem, gamma: f64, n: usize, bins: usize) -> chaoslab::Result<Vec<f64>> {
    if n == 0 || n > MAX_LEVEL || bins == 0 {
        return Err(chaoslab::Error::Domain(format!("level {n} or {bins} bins outside the demo range")));
    }
    let mu = measure_level(fr, ps, gamma, n)?;
    let tree = ps.dense(n)?;
    let lv = tree.level(n);
    let mut out = vec![0.0; bins + 1];
    for (i, w) in mu.log_weights.iter().enumerate() {
        let b = ((lv.rep[i] * bins as f64) as usize).min(bins - 1);
        out[b] += w.exp();
    }
    out[bins] = mu.total;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_sum_to_total() {
        let d = Demo::new("rademacher", 3).unwrap();
        let m = binned_masses(&d.fr, &d.ps, 1.2, 5, 32).unwrap();
        let s: f64 = m[..32].iter().sum();
        assert!((s - m[32]).abs() < 1e-12 * m[32]);
    }

    #[test]
    fn walk_is_constant_on_intervals() {
        let d = Demo::new("gaussian", 1).unwrap();
        let w = d.tree_walk(2, 64).unwrap();
        assert!(w[..32].iter().all(|x| *x == w[0]));
        assert!(w[32..].iter().all(|x| *x == w[32]));
    }
}
