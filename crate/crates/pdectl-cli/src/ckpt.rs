//! Checkpoint bundles: predictor banks, force estimators and optimizer
//! moments in one PDTF bundle with a JSON header.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use pdectl::autodiff::Tensor;
use pdectl::data::{load_bundle, save_bundle};
use pdectl::nets::{CfeMode, NetSpec, OPModelBank, ParamSet};
use pdectl::optimize::NamedAdam;

#[derive(Default)]
pub struct Checkpoint {
    /// Predictor parameters per time scale.
    pub bank: BTreeMap<usize, ParamSet>,
    pub bank_spec: Option<NetSpec>,
    pub clamp_nonneg: bool,
    /// Force-estimator parameters.
    pub cfe: Option<ParamSet>,
    pub cfe_spec: Option<NetSpec>,
    pub cfe_mode: Option<CfeMode>,
    /// Completed iterations per training phase (for resuming).
    pub completed: BTreeMap<String, u64>,
    /// Optimizer first/second moments keyed like the parameters.
    pub adam_m: BTreeMap<String, Tensor>,
    pub adam_v: BTreeMap<String, Tensor>,
    pub adam_step: u64,
}

impl Checkpoint {
    pub fn to_bank(&self) -> Result<OPModelBank> {
        let spec = self
            .bank_spec
            .clone()
            .context("checkpoint carries no predictor bank")?;
        let mut bank = OPModelBank::new(self.clamp_nonneg);
        for (&scale, params) in &self.bank {
            bank.insert(scale, spec.clone(), params.clone())
                .map_err(|e| anyhow::anyhow!("{e}"))?;
        }
        Ok(bank)
    }

    pub fn from_bank(bank: &OPModelBank) -> Self {
        let mut ck = Checkpoint::default();
        for (&scale, (spec, params)) in bank.models() {
            ck.bank_spec = Some(spec.clone());
            ck.bank.insert(scale, params.clone());
        }
        ck.clamp_nonneg = bank.clamp_nonneg;
        ck
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut named: Vec<(String, Vec<u64>, Vec<f64>)> = Vec::new();
        let mut push = |prefix: &str, params: &BTreeMap<String, Tensor>| {
            for (name, t) in params {
                named.push((
                    format!("{prefix}/{name}"),
                    t.dims().iter().map(|&d| d as u64).collect(),
                    t.data().to_vec(),
                ));
            }
        };
        for (scale, params) in &self.bank {
            push(&format!("op{scale}"), params);
        }
        if let Some(cfe) = &self.cfe {
            push("cfe", cfe);
        }
        push("adam_m", &self.adam_m);
        push("adam_v", &self.adam_v);
        let meta = serde_json::json!({
            "bank_spec": self.bank_spec,
            "scales": self.bank.keys().collect::<Vec<_>>(),
            "clamp_nonneg": self.clamp_nonneg,
            "cfe_spec": self.cfe_spec,
            "cfe_mode": self.cfe_mode,
            "completed": self.completed,
            "adam_step": self.adam_step,
        });
        save_bundle(path, &named, meta)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (named, meta) = load_bundle(&path)
            .with_context(|| format!("reading checkpoint {}", path.as_ref().display()))?;
        let mut ck = Checkpoint {
            bank_spec: serde_json::from_value(meta["bank_spec"].clone()).ok(),
            clamp_nonneg: meta["clamp_nonneg"].as_bool().unwrap_or(false),
            cfe_spec: serde_json::from_value(meta["cfe_spec"].clone()).ok(),
            cfe_mode: serde_json::from_value(meta["cfe_mode"].clone()).ok(),
            adam_step: meta["adam_step"].as_u64().unwrap_or(0),
            ..Default::default()
        };
        if let Ok(c) = serde_json::from_value::<BTreeMap<String, u64>>(meta["completed"].clone()) {
            ck.completed = c;
        }
        for (full, dims, data) in named {
            let Some((prefix, name)) = full.split_once('/') else {
                bail!("malformed checkpoint array name {full}");
            };
            let dims: Vec<usize> = dims.iter().map(|&d| d as usize).collect();
            let tensor = Tensor::new(dims, data).map_err(|e| anyhow::anyhow!("{e}"))?;
            if let Some(scale) = prefix.strip_prefix("op") {
                if let Ok(scale) = scale.parse::<usize>() {
                    ck.bank.entry(scale).or_default().insert(name.into(), tensor);
                    continue;
                }
            }
            match prefix {
                "cfe" => {
                    ck.cfe.get_or_insert_with(ParamSet::new).insert(name.into(), tensor);
                }
                "adam_m" => {
                    ck.adam_m.insert(name.into(), tensor);
                }
                "adam_v" => {
                    ck.adam_v.insert(name.into(), tensor);
                }
                other => bail!("unknown checkpoint section {other}"),
            }
        }
        Ok(ck)
    }

    /// Capture optimizer moments under a name prefix.
    pub fn store_adam(&mut self, prefix: &str, adam: &NamedAdam) {
        for (name, st) in adam.states() {
            let (m, v) = st.moments();
            self.adam_m.insert(
                format!("{prefix}.{name}"),
                Tensor::new(vec![m.len()], m.to_vec()).unwrap(),
            );
            self.adam_v.insert(
                format!("{prefix}.{name}"),
                Tensor::new(vec![v.len()], v.to_vec()).unwrap(),
            );
            self.adam_step = st.step;
        }
    }
}
