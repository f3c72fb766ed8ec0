//! Synthetic populations on the competition task grids with a planted gap
//! function and a measure of known informativeness.

use indexmap::IndexMap;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::baselines;
use crate::error::{Error, Result};
use crate::population::{Axis, HyperparamSpace, ModelRecord, Population};
use crate::rng;

/// Task presets, in release order. There is no task 3.
pub const TASK_IDS: [&str; 8] = [
    "task1", "task2", "task4", "task5", "task6", "task7", "task8", "task9",
];

/// Magnitude of the per-model tie-breaking offset added to planted gaps.
pub const JITTER: f64 = 1e-9;

/// Upper end of the uniform draw for synthetic training error.
pub const MAX_TRAIN_ERR: f64 = 0.01;

/// Hyperparameter grid of a competition task.
pub fn preset_space(task: &str) -> Result<HyperparamSpace> {
    let axes = match task {
        "task1" => vec![
            Axis::new("last_conv_filters", [256i64, 512]),
            Axis::new("dropout", [0.0, 0.5]),
            Axis::new("conv_blocks", [1i64, 3]),
            Axis::new("dense_layers", [1i64, 2]),
            Axis::new("weight_decay", [0.0, 0.001]),
            Axis::new("batch_size", [8i64, 32, 512]),
        ],
        "task2" => vec![
            Axis::new("conv_layers", [6i64, 9, 12]),
            Axis::new("dropout", [0.0, 0.25, 0.5]),
            Axis::new("weight_decay", [0.0, 0.001]),
            Axis::new("batch_size", [32i64, 512, 1024]),
        ],
        // Task 5 is task 4 without batch normalization; same grid.
        "task4" | "task5" => vec![
            Axis::new("num_params", [1_000_000i64, 2_500_000]),
            Axis::new("depth", [4i64, 6]),
            Axis::new("reversed", [true, false]),
            Axis::new("weight_decay", [0.0, 0.0005]),
            Axis::new("learning_rate", [0.01, 0.001]),
            Axis::new("batch_size", [32i64, 256]),
        ],
        "task6" => vec![
            Axis::new("weight_decay", [0.0, 0.001]),
            Axis::new("batch_size", [512i64, 1024]),
            Axis::new("conv_filters", [256i64, 512]),
            Axis::new("conv_layers", [6i64, 9, 12]),
            Axis::new("dropout", [0.0, 0.25]),
            Axis::new("learning_rate", [0.1, 0.01]),
        ],
        "task7" => vec![
            Axis::new("depth", [6i64, 9]),
            Axis::new("dropout", [0.0, 0.25]),
            Axis::new("weight_decay", [0.0, 0.001]),
            Axis::new("batch_size", [512i64, 1024]),
            Axis::new("dense_arch", ["128-128-128", "256-256", "512"]),
        ],
        "task8" => vec![
            Axis::new("last_conv_filters", [256i64, 512]),
            Axis::new("dropout", [0.0, 0.5]),
            Axis::new("conv_blocks", [1i64, 3]),
            Axis::new("learning_rate", [0.001, 0.01]),
            Axis::new("batch_size", [32i64, 512]),
        ],
        "task9" => vec![
            Axis::new("conv_filters", [256i64, 512]),
            Axis::new("conv_layers", [9i64, 12]),
            Axis::new("dropout", [0.0, 0.25]),
            Axis::new("weight_decay", [0.0, 0.001]),
            Axis::new("batch_size", [32i64, 512]),
        ],
        other => return Err(Error::UnknownPreset(other.to_owned())),
    };
    HyperparamSpace::new(axes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interaction {
    pub axes: [String; 2],
    pub coef: f64,
}

/// `intercept + Σ linear[a]·idx_a + Σ coef·idx_a·idx_b + N(0, noise_sigma)`,
/// where `idx_a` is the model's value index on axis `a`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapFn {
    #[serde(default)]
    pub intercept: f64,
    #[serde(default)]
    pub linear: IndexMap<String, f64>,
    #[serde(default)]
    pub interactions: Vec<Interaction>,
    #[serde(default)]
    pub noise_sigma: f64,
}

impl GapFn {
    /// A gap that rises along every axis with a different slope, plus one
    /// interaction, staying within roughly [0.05, 0.23].
    pub fn default_for(space: &HyperparamSpace) -> Self {
        let n = space.len() as f64;
        let weight_sum = n * (n + 1.0) / 2.0;
        let mut linear = IndexMap::new();
        for (i, axis) in space.axes().iter().enumerate() {
            if axis.cardinality() > 1 {
                let span = (axis.cardinality() - 1) as f64;
                linear.insert(
                    axis.name.clone(),
                    0.15 * (i as f64 + 1.0) / weight_sum / span,
                );
            }
        }
        let multi = space.multi_valued_axes();
        let interactions = match multi[..] {
            [a, b, ..] => {
                let span = ((space.axes()[a].cardinality() - 1)
                    * (space.axes()[b].cardinality() - 1)) as f64;
                vec![Interaction {
                    axes: [space.axis_name(a).to_owned(), space.axis_name(b).to_owned()],
                    coef: 0.03 / span,
                }]
            }
            _ => Vec::new(),
        };
        GapFn {
            intercept: 0.05,
            linear,
            interactions,
            noise_sigma: 0.005,
        }
    }
}

/// Which measure to plant alongside the gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureKind {
    /// The gap itself.
    Oracle,
    /// The gap plus Gaussian noise.
    NoisyOracle { sigma: f64 },
    /// The value index on one axis.
    AxisProxy { axis: String },
    /// Uniform noise unrelated to the gap.
    IndependentRandom,
    /// `g³ + 2g`, strictly increasing in the gap.
    MonotoneTransform,
}

impl MeasureKind {
    fn default_name(&self) -> String {
        match self {
            MeasureKind::Oracle => "oracle".into(),
            MeasureKind::NoisyOracle { .. } => "noisy_oracle".into(),
            MeasureKind::AxisProxy { axis } => format!("proxy_{axis}"),
            MeasureKind::IndependentRandom => "random".into(),
            MeasureKind::MonotoneTransform => "monotone_oracle".into(),
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    pub gap: GapFn,
    pub measure: MeasureKind,
    /// Name of the generated measure; defaults to one derived from its kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure_name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    /// Adds a distinct offset below 1e-9 to every planted gap so no two
    /// models tie.
    #[serde(default = "default_true")]
    pub jitter: bool,
}

impl PlantSpec {
    pub fn new(gap: GapFn, measure: MeasureKind, seed: u64) -> Self {
        PlantSpec {
            gap,
            measure,
            measure_name: None,
            seed,
            jitter: true,
        }
    }

    pub fn measure_name(&self) -> String {
        self.measure_name
            .clone()
            .unwrap_or_else(|| self.measure.default_name())
    }

    fn check(&self, space: &HyperparamSpace) -> Result<()> {
        let bad_sigma = |s: f64| !(s.is_finite() && s >= 0.0);
        if bad_sigma(self.gap.noise_sigma) {
            return Err(Error::Plant(format!(
                "noise_sigma {} must be >= 0",
                self.gap.noise_sigma
            )));
        }
        if let MeasureKind::NoisyOracle { sigma } = self.measure {
            if bad_sigma(sigma) {
                return Err(Error::Plant(format!("measure sigma {sigma} must be >= 0")));
            }
        }
        let axis = |name: &str| {
            space
                .axis_index(name)
                .map_err(|_| Error::Plant(format!("unknown axis {name:?}")))
        };
        for name in self.gap.linear.keys() {
            axis(name)?;
        }
        for it in &self.gap.interactions {
            axis(&it.axes[0])?;
            axis(&it.axes[1])?;
        }
        if let MeasureKind::AxisProxy { axis: name } = &self.measure {
            axis(name)?;
        }
        Ok(())
    }

    fn planted_gap(&self, space: &HyperparamSpace, coord: &[usize]) -> f64 {
        let idx = |name: &str| coord[space.axis_index(name).expect("checked")] as f64;
        let linear: f64 = self.gap.linear.iter().map(|(a, c)| c * idx(a)).sum();
        let inter: f64 = self
            .gap
            .interactions
            .iter()
            .map(|it| it.coef * idx(&it.axes[0]) * idx(&it.axes[1]))
            .sum();
        self.gap.intercept + linear + inter
    }
}

/// What was planted, for checking scores against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub task_id: String,
    pub replicas: u32,
    pub plant: PlantSpec,
    pub measure_name: String,
    /// Planted gap per record, before clamping error rates into [0, 1].
    pub planted_gaps: Vec<f64>,
    /// Records whose validation error had to be clamped.
    pub clamped: usize,
    pub warnings: Vec<String>,
}

/// One model per (grid cell, replica), cells in row-major order.
///
/// Training error is uniform in [0, 0.01]; validation error is training
/// error plus the planted gap, clamped to [0, 1]. Fully determined by the
/// inputs.
pub fn generate_population(
    task_id: &str,
    space: &HyperparamSpace,
    plant: &PlantSpec,
    replicas: u32,
) -> Result<(Population, GroundTruth)> {
    if replicas == 0 {
        return Err(Error::Plant("replicas must be at least 1".into()));
    }
    plant.check(space)?;
    let n = space.grid_size() * replicas as usize;
    let mut records = Vec::with_capacity(n);
    let mut planted_gaps = Vec::with_capacity(n);
    let mut warnings = Vec::new();
    let mut clamped = 0;
    for cell in 0..space.grid_size() {
        let coord = space.cell_coord(cell);
        for r in 0..replicas {
            let k = records.len();
            let train_err = rng::model_stream(plant.seed, rng::PURPOSE_TRAIN_ERR, &coord, r)
                .random_range(0.0..=MAX_TRAIN_ERR);
            let z: f64 = rng::model_stream(plant.seed, rng::PURPOSE_GAP_NOISE, &coord, r)
                .sample(StandardNormal);
            let mut g = plant.planted_gap(space, &coord) + plant.gap.noise_sigma * z;
            if plant.jitter {
                g += JITTER * k as f64 / n as f64;
            }
            if !(-1.0..=1.0).contains(&g) {
                warnings.push(format!(
                    "planted gap {g} at {} replica {r} is outside [-1, 1]; clamped",
                    space.describe(&coord)
                ));
            }
            let raw = train_err + g;
            let val_err = raw.clamp(0.0, 1.0);
            if val_err != raw {
                clamped += 1;
            }
            planted_gaps.push(g);
            records.push(ModelRecord::new(coord.clone(), train_err, val_err).with_replica(r));
        }
    }
    if clamped > 0 {
        warnings.push(format!("{clamped} validation errors clamped to [0, 1]"));
    }

    let pop = Population::new(task_id, space.clone(), records, IndexMap::new())?;
    let values = match &plant.measure {
        MeasureKind::Oracle => pop.gaps().to_vec(),
        MeasureKind::NoisyOracle { sigma } => {
            baselines::noisy_oracle(&pop, *sigma, plant.seed)?.values
        }
        MeasureKind::AxisProxy { axis } => {
            let a = space.axis_index(axis)?;
            pop.records().iter().map(|r| r.coord[a] as f64).collect()
        }
        MeasureKind::IndependentRandom => pop
            .records()
            .iter()
            .map(|r| {
                rng::model_stream(plant.seed, rng::PURPOSE_RANDOM_MEASURE, &r.coord, r.replica)
                    .random::<f64>()
            })
            .collect(),
        MeasureKind::MonotoneTransform => pop.gaps().iter().map(|&g| g * g * g + 2.0 * g).collect(),
    };
    let measure_name = plant.measure_name();
    let pop = pop.with_measure(crate::population::MeasureVector::new(
        measure_name.clone(),
        values,
    ))?;
    let truth = GroundTruth {
        task_id: task_id.to_owned(),
        replicas,
        plant: plant.clone(),
        measure_name,
        planted_gaps,
        clamped,
        warnings,
    };
    Ok((pop, truth))
}

/// Convenience: preset grid, default gap function, given measure.
pub fn generate_preset(
    task: &str,
    measure: MeasureKind,
    seed: u64,
    replicas: u32,
) -> Result<(Population, GroundTruth)> {
    let space = preset_space(task)?;
    let plant = PlantSpec::new(GapFn::default_for(&space), measure, seed);
    generate_population(task, &space, &plant, replicas)
}
