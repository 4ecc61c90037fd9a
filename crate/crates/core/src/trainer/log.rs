//! `metrics.log`: one `key=value` record per line, space separated.

use ocogan_autograd::ParamKind;

use super::TrainState;

/// Loss components of one step. Component losses are unweighted; the
/// totals apply `uncond_weight`, the LabelMix weight and the R1 interval.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepMetrics {
    pub step: u64,
    pub uncond_weight: f64,
    pub d_uncond: f64,
    pub d_cond: f64,
    pub labelmix: f64,
    /// Already multiplied by the R1 interval.
    pub r1: f64,
    pub d_total: f64,
    pub g_uncond: f64,
    pub g_cond: f64,
    pub g_total: f64,
    pub d_grad_norm: f64,
    pub g_grad_norm: f64,
    pub r1_applied: bool,
    pub wall_ms: f64,
}

const KEYS: [&str; 14] = [
    "step",
    "uncond_weight",
    "d_uncond",
    "d_cond",
    "labelmix",
    "r1",
    "d_total",
    "g_uncond",
    "g_cond",
    "g_total",
    "d_grad_norm",
    "g_grad_norm",
    "r1_applied",
    "wall_ms",
];

impl StepMetrics {
    /// Unconditional share of `d_total`.
    pub fn d_uncond_contribution(&self) -> f64 {
        self.uncond_weight * self.d_uncond
    }

    /// Unconditional share of `g_total`.
    pub fn g_uncond_contribution(&self) -> f64 {
        self.uncond_weight * self.g_uncond
    }

    /// The loss values, without timing.
    pub fn losses(&self) -> [f64; 9] {
        [
            self.d_uncond,
            self.d_cond,
            self.labelmix,
            self.r1,
            self.d_total,
            self.g_uncond,
            self.g_cond,
            self.g_total,
            self.d_grad_norm + self.g_grad_norm,
        ]
    }

    fn values(&self) -> [String; 14] {
        [
            self.step.to_string(),
            self.uncond_weight.to_string(),
            self.d_uncond.to_string(),
            self.d_cond.to_string(),
            self.labelmix.to_string(),
            self.r1.to_string(),
            self.d_total.to_string(),
            self.g_uncond.to_string(),
            self.g_cond.to_string(),
            self.g_total.to_string(),
            self.d_grad_norm.to_string(),
            self.g_grad_norm.to_string(),
            u8::from(self.r1_applied).to_string(),
            format!("{:.3}", self.wall_ms),
        ]
    }

    pub fn to_log_line(&self) -> String {
        KEYS.iter().zip(self.values()).map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
    }

    /// Parses a step record; `None` for event lines and malformed input.
    pub fn parse_log_line(line: &str) -> Option<StepMetrics> {
        let fields: Vec<(&str, &str)> = line.split_whitespace().filter_map(|kv| kv.split_once('=')).collect();
        if fields.iter().any(|(k, _)| *k == "event") {
            return None;
        }
        let get = |key: &str| fields.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
        let f = |key: &str| get(key)?.parse::<f64>().ok();
        Some(StepMetrics {
            step: get("step")?.parse().ok()?,
            uncond_weight: f("uncond_weight")?,
            d_uncond: f("d_uncond")?,
            d_cond: f("d_cond")?,
            labelmix: f("labelmix")?,
            r1: f("r1")?,
            d_total: f("d_total")?,
            g_uncond: f("g_uncond")?,
            g_cond: f("g_cond")?,
            g_total: f("g_total")?,
            d_grad_norm: f("d_grad_norm")?,
            g_grad_norm: f("g_grad_norm")?,
            r1_applied: get("r1_applied")? == "1",
            wall_ms: f("wall_ms")?,
        })
    }

    /// Loss components and gradient norms for an abort message.
    pub(super) fn diagnostic(&self, stage: &str) -> String {
        format!(
            "non-finite {stage} update: d_uncond={} d_cond={} labelmix={} r1={} d_total={} g_uncond={} g_cond={} g_total={} d_grad_norm={} g_grad_norm={}",
            self.d_uncond,
            self.d_cond,
            self.labelmix,
            self.r1,
            self.d_total,
            self.g_uncond,
            self.g_cond,
            self.g_total,
            self.d_grad_norm,
            self.g_grad_norm
        )
    }
}

/// Every step record in a log, in file order.
pub fn parse_log(text: &str) -> Vec<StepMetrics> {
    text.lines().filter_map(StepMetrics::parse_log_line).collect()
}

/// Step number of any record, event lines included.
pub(super) fn line_step(line: &str) -> Option<u64> {
    line.split_whitespace().find_map(|kv| kv.strip_prefix("step=")).and_then(|v| v.parse().ok())
}

pub(super) fn init_line(state: &TrainState) -> String {
    format!(
        "step={} event=init mode={} gen_params={} disc_params={}",
        state.step,
        state.config.train.mode.name(),
        state.gen.store.num_scalars(ParamKind::Trainable),
        state.disc.store.num_scalars(ParamKind::Trainable)
    )
}
