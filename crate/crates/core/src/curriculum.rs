//! Feature-complexity gating: measure, calibrate thresholds, advance.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax, Tensor};
use crate::error::{Error, Result};

fn chw_complexity(data: &[f64], c: usize, h: usize, w: usize) -> f64 {
    let mut total = 0.0;
    for ch in 0..c {
        let plane = &data[ch * h * w..(ch + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                let v = plane[y * w + x];
                if x + 1 < w {
                    total += (plane[y * w + x + 1] - v).abs();
                }
                if y + 1 < h {
                    total += (plane[(y + 1) * w + x] - v).abs();
                }
            }
        }
    }
    total
}

/// Total absolute forward-difference gradient, summed over channels.
/// Accepts `[C, H, W]` or `[N, C, H, W]`; batches give the per-sample mean.
pub fn complexity(x: &Tensor) -> Result<f64> {
    match *x.shape() {
        [c, h, w] => Ok(chw_complexity(x.data(), c, h, w)),
        [n, c, h, w] => {
            if n == 0 {
                return Err(Error::EmptyInput("complexity of an empty batch".into()));
            }
            let per = c * h * w;
            let sum: f64 = x
                .data()
                .chunks_exact(per.max(1))
                .map(|s| chw_complexity(s, c, h, w))
                .sum();
            Ok(sum / n as f64)
        }
        _ => Err(Error::Shape(format!(
            "complexity expects [C,H,W] or [N,C,H,W], got {:?}",
            x.shape()
        ))),
    }
}

/// Linear-interpolation quantile (position `q * (n - 1)` in sorted order).
pub fn quantile(samples: &[f64], q: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("quantile of no samples".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Config(format!("quantile {q} outside [0, 1]")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

fn check_quantiles(quantiles: &[f64]) -> Result<()> {
    if quantiles.is_empty() {
        return Err(Error::Config("no quantiles given".into()));
    }
    if quantiles.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
        return Err(Error::Config(format!("quantiles must lie in (0, 1): {quantiles:?}")));
    }
    if quantiles.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(format!(
            "quantiles must be strictly increasing: {quantiles:?}"
        )));
    }
    Ok(())
}

/// One threshold per quantile, taken from the sample distribution.
pub fn calibrate_thresholds(samples: &[f64], quantiles: &[f64]) -> Result<Vec<f64>> {
    check_quantiles(quantiles)?;
    if samples.is_empty() {
        return Err(Error::EmptyInput("threshold calibration needs samples".into()));
    }
    quantiles.iter().map(|&q| quantile(samples, q)).collect()
}

/// Thresholds for a curriculum of `stage_samples.len()` stages where each
/// stage is calibrated on its own complexity distribution. `quantiles` must
/// be strictly increasing; stages past its end reuse the last entry.
pub fn calibrate_per_stage(stage_samples: &[Vec<f64>], quantiles: &[f64]) -> Result<Vec<f64>> {
    check_quantiles(quantiles)?;
    stage_samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let q = quantiles[i.min(quantiles.len() - 1)];
            calibrate_thresholds(s, &[q]).map(|t| t[0])
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityScore {
    pub value: f64,
    pub stage: String,
    pub step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecalibrationEvent {
    pub step: usize,
    /// Stage number entered (1-based).
    pub stage: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub stage: usize,
    pub lambda: f64,
    pub tau_active: f64,
    pub advanced: bool,
}

/// Stage-advancement state machine. Stages are numbered from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumState {
    stage: usize,
    stage_names: Vec<String>,
    thresholds: Vec<f64>,
    history: Vec<ComplexityScore>,
    events: Vec<RecalibrationEvent>,
    trace: Vec<TraceRow>,
}

impl CurriculumState {
    pub fn new(stage_names: Vec<String>, thresholds: Vec<f64>) -> Result<Self> {
        if stage_names.is_empty() || stage_names.len() != thresholds.len() {
            return Err(Error::Config(format!(
                "{} stages but {} thresholds",
                stage_names.len(),
                thresholds.len()
            )));
        }
        if thresholds.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::Config(format!("thresholds must be finite and >= 0: {thresholds:?}")));
        }
        Ok(Self {
            stage: 1,
            stage_names,
            thresholds,
            history: Vec::new(),
            events: Vec::new(),
            trace: Vec::new(),
        })
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn stage_count(&self) -> usize {
        self.stage_names.len()
    }

    pub fn active_name(&self) -> &str {
        &self.stage_names[self.stage - 1]
    }

    pub fn active_threshold(&self) -> f64 {
        self.thresholds[self.stage - 1]
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn stage_names(&self) -> &[String] {
        &self.stage_names
    }

    pub fn history(&self) -> &[ComplexityScore] {
        &self.history
    }

    pub fn events(&self) -> &[RecalibrationEvent] {
        &self.events
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    /// Feeds one measurement of the active stage. Returns whether a
    /// recalibration is due: `lambda > tau` strictly. Below the last stage
    /// that also moves to the next stage and logs an event.
    pub fn advance(&mut self, score: ComplexityScore) -> Result<bool> {
        if score.stage != self.active_name() {
            return Err(Error::Config(format!(
                "score for stage '{}' while '{}' is active",
                score.stage,
                self.active_name()
            )));
        }
        let tau = self.active_threshold();
        let exceeded = score.value > tau;
        let moved = exceeded && self.stage < self.stage_count();
        self.trace.push(TraceRow {
            step: score.step,
            stage: self.stage,
            lambda: score.value,
            tau_active: tau,
            advanced: moved,
        });
        if moved {
            self.stage += 1;
            self.events.push(RecalibrationEvent {
                step: score.step,
                stage: self.stage,
            });
        }
        self.history.push(score);
        Ok(exceeded)
    }

    pub fn write_trace_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("step,stage,lambda,tau_active,advanced\n");
        for r in &self.trace {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.step, r.stage, r.lambda, r.tau_active, r.advanced as u8
            ));
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::write(path, e))
    }
}

/// Raw per-stage fusion scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub scores: BTreeMap<String, f64>,
}

impl FusionWeights {
    pub fn new(scores: BTreeMap<String, f64>) -> Self {
        Self { scores }
    }

    pub fn uniform<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        Self::new(names.into_iter().map(|n| (n.into(), 0.0)).collect())
    }

    /// Softmax over the scores, keyed like the scores.
    pub fn normalized(&self) -> BTreeMap<String, f64> {
        let raw: Vec<f64> = self.scores.values().copied().collect();
        self.scores.keys().cloned().zip(softmax(&raw)).collect()
    }
}

/// `sum_s w_s * features[s]` over already projected, equal-length stage
/// vectors.
pub fn fuse_stages(features: &BTreeMap<String, Tensor>, weights: &FusionWeights) -> Result<Tensor> {
    let mut out: Option<Tensor> = None;
    for (name, w) in weights.normalized() {
        let f = features
            .get(&name)
            .ok_or_else(|| Error::Config(format!("no features for stage '{name}'")))?;
        match &mut out {
            None => out = Some(Tensor::from_fn(f.shape(), |i| w * f.data()[i])),
            Some(acc) => {
                if acc.shape() != f.shape() {
                    return Err(Error::Shape(format!(
                        "stage '{name}' has shape {:?}, expected {:?}",
                        f.shape(),
                        acc.shape()
                    )));
                }
                for (a, v) in acc.data_mut().iter_mut().zip(f.data()) {
                    *a += w * v;
                }
            }
        }
    }
    out.ok_or_else(|| Error::EmptyInput("no fusion stages".into()))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn names(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("s{i}")).collect()
    }

    fn score(state: &CurriculumState, value: f64, step: usize) -> ComplexityScore {
        ComplexityScore {
            value,
            stage: state.active_name().to_string(),
            step,
        }
    }

    #[test]
    fn constant_map_has_zero_complexity() {
        assert_eq!(complexity(&Tensor::full(&[3, 4, 5], 2.5)).unwrap(), 0.0);
    }

    #[test]
    fn hand_fixture() {
        let x = Tensor::new(&[1, 2, 2], vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(complexity(&x).unwrap(), 2.0);
        let x3 = Tensor::new(&[1, 2, 2], vec![0.0, 3.0, 0.0, 3.0]).unwrap();
        assert_eq!(complexity(&x3).unwrap(), 6.0);
    }

    #[test]
    fn batch_complexity_is_the_sample_mean() {
        let x = Tensor::new(&[2, 1, 2, 2], vec![0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(complexity(&x).unwrap(), 1.0);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(calibrate_thresholds(&[4.0; 7], &[0.25, 0.5, 0.75]).unwrap(), vec![4.0; 3]);
        let ramp: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(calibrate_thresholds(&ramp, &[0.5]).unwrap(), vec![50.5]);
        assert!(matches!(calibrate_thresholds(&ramp, &[0.9, 0.5]), Err(Error::Config(_))));
        assert!(matches!(calibrate_thresholds(&ramp, &[0.0]), Err(Error::Config(_))));
        assert!(matches!(calibrate_thresholds(&[], &[0.5]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn per_stage_calibration_reuses_last_quantile() {
        let s = vec![vec![1.0, 3.0], vec![0.0, 10.0], vec![0.0, 100.0]];
        assert_eq!(calibrate_per_stage(&s, &[0.5, 0.75]).unwrap(), vec![2.0, 7.5, 75.0]);
    }

    #[test]
    fn equal_lambda_does_not_advance() {
        let mut st = CurriculumState::new(names(4), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = score(&st, 1.0, 0);
        assert!(!st.advance(s).unwrap());
        assert_eq!(st.stage(), 1);
    }

    #[test]
    fn above_threshold_at_stage_two_moves_to_three() {
        let mut st = CurriculumState::new(names(4), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = score(&st, 1.5, 0);
        st.advance(s).unwrap();
        assert_eq!(st.stage(), 2);
        let s = score(&st, 2.5, 1);
        assert!(st.advance(s).unwrap());
        assert_eq!(st.stage(), 3);
        assert_eq!(st.events().len(), 2);
        assert_eq!(st.events()[1], RecalibrationEvent { step: 1, stage: 3 });
    }

    #[test]
    fn final_stage_clamps() {
        let mut st = CurriculumState::new(names(2), vec![0.0, 0.0]).unwrap();
        for step in 0..3 {
            let s = score(&st, 1.0, step);
            assert!(st.advance(s).unwrap());
        }
        assert_eq!(st.stage(), 2);
        assert_eq!(st.events().len(), 1);
        assert_eq!(st.history().len(), 3);
    }

    #[test]
    fn wrong_stage_is_rejected() {
        let mut st = CurriculumState::new(names(2), vec![0.0, 0.0]).unwrap();
        let s = ComplexityScore {
            value: 1.0,
            stage: "s2".into(),
            step: 0,
        };
        assert!(st.advance(s).is_err());
    }

    #[test]
    fn trace_csv_has_one_row_per_step() {
        let dir = tempfile::tempdir().unwrap();
        let mut st = CurriculumState::new(names(2), vec![0.5, 0.5]).unwrap();
        for step in 0..3 {
            let s = score(&st, 1.0, step);
            st.advance(s).unwrap();
        }
        let p = dir.path().join("trace.csv");
        st.write_trace_csv(&p).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,stage,lambda,tau_active,advanced");
        assert_eq!(lines[1], "0,1,1,0.5,1");
        assert_eq!(lines[2], "1,2,1,0.5,0");
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn fusion_examples() {
        let v = Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let one: BTreeMap<_, _> = [("a".to_string(), v.clone())].into();
        assert_eq!(fuse_stages(&one, &FusionWeights::uniform(["a"])).unwrap(), v);

        let two: BTreeMap<_, _> = [("a".to_string(), v.clone()), ("b".to_string(), v.clone())].into();
        let w = FusionWeights::new([("a".to_string(), 2.0), ("b".to_string(), -1.0)].into());
        let fused = fuse_stages(&two, &w).unwrap();
        for (a, b) in fused.data().iter().zip(v.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((w.normalized().values().sum::<f64>() - 1.0).abs() < 1e-9);

        let missing = FusionWeights::uniform(["a", "c"]);
        assert!(matches!(fuse_stages(&two, &missing), Err(Error::Config(_))));
    }

    fn arb_map() -> impl Strategy<Value = (usize, usize, usize, Vec<f64>)> {
        (1usize..4, 1usize..6, 1usize..6).prop_flat_map(|(c, h, w)| {
            (
                Just(c),
                Just(h),
                Just(w),
                proptest::collection::vec(-10.0f64..10.0, c * h * w),
            )
        })
    }

    proptest! {
        #[test]
        fn homogeneous_and_offset_invariant((c, h, w, data) in arb_map(), a in -5.0f64..5.0) {
            let x = Tensor::new(&[c, h, w], data.clone()).unwrap();
            let base = complexity(&x).unwrap();
            prop_assert!(base >= 0.0);
            let scaled = Tensor::new(&[c, h, w], data.iter().map(|v| a * v).collect()).unwrap();
            let got = complexity(&scaled).unwrap();
            prop_assert!((got - a.abs() * base).abs() <= 1e-10 * (a.abs() * base).max(1e-300));
        }

        #[test]
        fn offset_invariant_on_exact_grid((c, h, w, data) in arb_map(), off in -64i32..64) {
            // Values on a coarse binary grid so every difference is exact.
            let grid: Vec<f64> = data.iter().map(|v| (v * 8.0).round() / 8.0).collect();
            let shift = f64::from(off) / 4.0;
            let x = Tensor::new(&[c, h, w], grid.clone()).unwrap();
            let shifted = Tensor::new(&[c, h, w], grid.iter().map(|v| v + shift).collect()).unwrap();
            prop_assert_eq!(complexity(&shifted).unwrap(), complexity(&x).unwrap());
        }

        #[test]
        fn thresholds_monotone(samples in proptest::collection::vec(0.0f64..100.0, 1..50), q1 in 0.01f64..0.5, dq in 0.01f64..0.49) {
            let t = calibrate_thresholds(&samples, &[q1, q1 + dq]).unwrap();
            prop_assert!(t[0] <= t[1]);
        }
    }
}
