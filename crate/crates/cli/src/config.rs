//! Experiment configuration: strict JSON with defaults matching the
//! rigid-body benchmark (I = (1, 1/2, 1/3), dt = 0.01, t in [0, 10], p = 3,
//! 114 initial conditions, Q = diag(2, 2), R = diag(1e-3)).

use anyhow::{bail, Context};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

use conserved_core::{MpcConfig, SystemSpec};

fn default_inertia() -> [f64; 3] {
    [1.0, 0.5, 1.0 / 3.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemBlock {
    pub inertia: [f64; 3],
    /// Row-major n x q control matrix; identity when omitted.
    pub control_matrix: Option<Vec<Vec<f64>>>,
}

impl Default for SystemBlock {
    fn default() -> Self {
        SystemBlock { inertia: default_inertia(), control_matrix: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationBlock {
    pub dt: f64,
    pub t_end: f64,
    pub ensemble_size: usize,
    /// Initial conditions are spread over momentum spheres with radii in
    /// [radius_min, radius_max]; a single radius leaves the null space
    /// underdetermined (any candidate times |x|^2 / r^2 matches the data).
    pub radius_min: f64,
    pub radius_max: f64,
}

impl Default for SimulationBlock {
    fn default() -> Self {
        SimulationBlock { dt: 0.01, t_end: 10.0, ensemble_size: 114, radius_min: 0.5, radius_max: 1.5 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DictionaryBlock {
    pub degree: u32,
    pub include_constant: bool,
}

impl Default for DictionaryBlock {
    fn default() -> Self {
        DictionaryBlock { degree: 3, include_constant: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscoveryBlock {
    pub lambda: f64,
    pub rank_tolerance: f64,
    pub l1_weight: f64,
    pub max_iters: usize,
    /// Fraction of trajectories held out for residual reporting.
    pub holdout_fraction: f64,
}

impl Default for DiscoveryBlock {
    fn default() -> Self {
        DiscoveryBlock {
            lambda: 0.0,
            rank_tolerance: 1e-6,
            l1_weight: 0.2,
            max_iters: 500,
            holdout_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActuationBlock {
    /// "multisine" is the only built-in excitation.
    pub forcing: String,
    pub dt: f64,
    pub t_end: f64,
    pub initial_state: [f64; 3],
}

impl Default for ActuationBlock {
    fn default() -> Self {
        ActuationBlock {
            forcing: "multisine".into(),
            dt: 0.01,
            t_end: 10.0,
            initial_state: [0.3, 0.9, -0.2],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlBlock {
    pub q_weight: Vec<f64>,
    pub r_weight: Vec<f64>,
    pub horizon_steps: usize,
    pub plant_dt: f64,
    pub substeps: usize,
    pub reference_state: [f64; 3],
    pub t_end: f64,
    /// Control ensemble lives on the single sphere L = this value.
    pub sphere_l_value: f64,
    pub ensemble_size: usize,
    pub input_bounds: Option<Vec<[f64; 2]>>,
}

impl Default for ControlBlock {
    fn default() -> Self {
        ControlBlock {
            q_weight: vec![2.0, 2.0],
            r_weight: vec![1e-3, 1e-3, 1e-3],
            horizon_steps: 10,
            plant_dt: 0.01,
            substeps: 10,
            reference_state: [0.0, 1.0, 0.0],
            t_end: 10.0,
            sphere_l_value: 0.5,
            ensemble_size: 114,
            input_bounds: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoBlock {
    pub seed: u64,
}

impl Default for IoBlock {
    fn default() -> Self {
        IoBlock { seed: 42 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub system: SystemBlock,
    pub simulation: SimulationBlock,
    pub dictionary: DictionaryBlock,
    pub discovery: DiscoveryBlock,
    pub actuation: ActuationBlock,
    pub control: ControlBlock,
    pub io: IoBlock,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.system.inertia.iter().any(|&v| v <= 0.0) {
            bail!("system.inertia entries must be positive");
        }
        if !(self.simulation.dt > 0.0 && self.simulation.dt < self.simulation.t_end) {
            bail!("simulation requires 0 < dt < t_end");
        }
        if self.simulation.ensemble_size == 0 {
            bail!("simulation.ensemble_size must be at least 1");
        }
        if !(self.simulation.radius_min > 0.0 && self.simulation.radius_max >= self.simulation.radius_min) {
            bail!("simulation radii must satisfy 0 < radius_min <= radius_max");
        }
        if self.dictionary.degree == 0 {
            bail!("dictionary.degree must be at least 1");
        }
        if !(self.discovery.rank_tolerance > 0.0 && self.discovery.rank_tolerance < 1.0) {
            bail!("discovery.rank_tolerance must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.discovery.holdout_fraction) {
            bail!("discovery.holdout_fraction must lie in [0, 1)");
        }
        if self.actuation.forcing != "multisine" {
            bail!("actuation.forcing: only \"multisine\" is supported");
        }
        if self.control.q_weight.is_empty() || self.control.r_weight.len() != 3 {
            bail!("control weights must be non-empty (R has one entry per input)");
        }
        Ok(())
    }

    pub fn system_spec(&self) -> anyhow::Result<SystemSpec> {
        let b = match &self.system.control_matrix {
            None => DMatrix::identity(3, 3),
            Some(rows) => {
                if rows.is_empty() || rows.iter().any(|r| r.len() != rows[0].len()) {
                    bail!("system.control_matrix rows must be non-empty and equal length");
                }
                DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
            }
        };
        Ok(SystemSpec::new(
            conserved_core::systems::Dynamics::RigidBody { inertia: self.system.inertia },
            b,
        )?)
    }

    /// Dimensions are rechecked against the identified subspace at use sites.
    pub fn mpc_config(&self) -> MpcConfig {
        MpcConfig {
            q_weight: DMatrix::from_diagonal(&DVector::from_vec(self.control.q_weight.clone())),
            r_weight: DMatrix::from_diagonal(&DVector::from_vec(self.control.r_weight.clone())),
            horizon_steps: self.control.horizon_steps,
            plant_dt: self.control.plant_dt,
            substeps: self.control.substeps,
            reference_state: DVector::from_row_slice(&self.control.reference_state),
            input_bounds: self
                .control
                .input_bounds
                .as_ref()
                .map(|b| b.iter().map(|x| (x[0], x[1])).collect()),
        }
    }

    /// Stable content hash of the full configuration (non-cryptographic,
    /// used only for provenance comparison within one build).
    pub fn content_hash(&self) -> String {
        use std::hash::{Hash, Hasher};
        let canonical = serde_json::to_string(self).expect("config serialization");
        let mut h = std::collections::hash_map::DefaultHasher::new();
        canonical.hash(&mut h);
        format!("{:016x}", h.finish())
    }

    /// Shrink the experiment for smoke runs.
    pub fn apply_quick(&mut self) {
        self.simulation.ensemble_size = 10;
        self.simulation.t_end = 2.0;
        self.actuation.t_end = 2.0;
        self.control.ensemble_size = 10;
        self.control.t_end = 2.0;
    }
}
