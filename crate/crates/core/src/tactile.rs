//! Synthetic Hall-magnet touch sensing for the suction cups: a dipole
//! field model with hysteresis and drift, a press-cycle calibration data
//! generator, and a learned normal-force estimator.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::config::TactileConfig;
use crate::nn::{Adam, Checkpoint, Mlp, NnError};

#[derive(Debug, Error)]
pub enum TactileError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset has no held-out split")]
    NoHoldout,
    #[error("non-finite training loss at epoch {0}")]
    DivergentLoss(usize),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad dataset line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Physical model of one cup's three-magnet Hall sensor.
#[derive(Debug, Clone)]
pub struct HallSensorModel {
    /// Rest magnet-sensor gap (m).
    pub gap: f64,
    /// Axial field at the rest gap (mT).
    pub rest_field: f64,
    /// Cup compression stiffness seen by the magnets (N/m).
    pub cup_stiffness: f64,
    /// Gaussian reading noise (mT).
    pub noise_std: f64,
    /// Displacement filter coefficients (load / unload).
    pub alpha_load: f64,
    pub alpha_unload: f64,
    /// Drift rate under sustained load (mT/s).
    pub drift_rate: f64,
}

impl HallSensorModel {
    pub fn from_config(cfg: &TactileConfig) -> Self {
        Self {
            gap: cfg.gap,
            rest_field: cfg.rest_field,
            cup_stiffness: cfg.cup_stiffness,
            noise_std: cfg.noise_std,
            alpha_load: cfg.alpha_load,
            alpha_unload: cfg.alpha_unload,
            drift_rate: cfg.drift_rate,
        }
    }

    /// Field magnitude at magnet displacement `d` toward the sensor.
    fn field(&self, d: f64) -> f64 {
        let z = (self.gap - d).max(0.1 * self.gap);
        self.rest_field * (self.gap / z).powi(3)
    }
}

/// Per-cup sensor memory: filtered magnet displacements and drift.
#[derive(Debug, Clone, Default)]
pub struct HallState {
    filtered_d: [f64; 3],
    drift: f64,
}

/// One sensor read-out.
#[derive(Debug, Clone, Copy)]
pub struct HallReading {
    /// Per-sensor axial field (mT).
    pub values: [f64; 3],
    /// Set when a magnet displacement reached the gap.
    pub saturated: bool,
}

/// Per-magnet load shares: symmetric for full contact, one magnet loaded
/// preferentially for partial contact.
fn load_shares(partial: bool) -> [f64; 3] {
    if partial {
        [0.6, 0.2, 0.2]
    } else {
        [1.0 / 3.0; 3]
    }
}

/// Advances the sensor state by `dt` under normal force `f_n` and returns
/// the three readings. Pass `None` for `rng` to disable noise.
pub fn hall_signal(
    model: &HallSensorModel,
    state: &mut HallState,
    f_n: f64,
    partial: bool,
    dt: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> HallReading {
    let f = f_n.max(0.0);
    let shares = load_shares(partial);
    let mut saturated = false;
    for (i, share) in shares.iter().enumerate() {
        let d_target = 3.0 * share * f / model.cup_stiffness;
        let alpha = if d_target > state.filtered_d[i] {
            model.alpha_load
        } else {
            model.alpha_unload
        };
        state.filtered_d[i] += alpha * (d_target - state.filtered_d[i]);
        if state.filtered_d[i] >= model.gap * 0.9 {
            saturated = true;
        }
    }
    // drift accumulates under load, recovers when released
    if f > 0.1 {
        state.drift += model.drift_rate * dt;
    } else {
        state.drift = (state.drift - model.drift_rate * dt).max(0.0);
    }

    let mut values = [0.0; 3];
    let noise = rng.map(|r| {
        let n = Normal::new(0.0, model.noise_std).unwrap();
        [n.sample(r), n.sample(r), n.sample(r)]
    });
    for i in 0..3 {
        values[i] = model.field(state.filtered_d[i]) + state.drift;
        if let Some(n) = &noise {
            values[i] += n[i];
        }
    }
    HallReading { values, saturated }
}

/// One sample of a recorded press cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressRecord {
    /// Hall readings (mT).
    pub hall: [f64; 3],
    /// Reference normal force (N).
    pub force: f64,
    /// Stage velocity of the cycle (m/s).
    pub velocity: f64,
    pub partial: bool,
    /// Cup id in 0..4.
    pub cup: usize,
    /// Cycle index the sample belongs to.
    pub cycle: usize,
    /// Training-split flag (false = held out).
    pub train: bool,
}

/// Calibration corpus of press cycles.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PressCycleDataset {
    pub records: Vec<PressRecord>,
    pub n_cycles: usize,
}

/// Simulates the bench calibration: a stage presses each cup through
/// ramp-hold-release cycles at several velocities and both contact modes,
/// recording paired (Hall, reference force) samples at 100 Hz.
pub fn generate_calibration_data(cfg: &TactileConfig, seed: u64) -> PressCycleDataset {
    let model = HallSensorModel::from_config(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = 0.01;
    let mut records = Vec::new();

    let n_holdout = ((cfg.press_cycles as f64) * cfg.holdout_fraction).round() as usize;
    // spread held-out cycles evenly instead of taking a contiguous tail
    let holdout_every = cfg.press_cycles.div_ceil(n_holdout.max(1));

    for cycle in 0..cfg.press_cycles {
        let cup = cycle % 4;
        let velocity = cfg.velocities[(cycle / 4) % cfg.velocities.len()];
        let partial = rng.gen_bool(cfg.partial_fraction);
        let train = cycle % holdout_every != 0;
        let peak = rng.gen_range((0.3 * cfg.force_max).max(cfg.force_min)..cfg.force_max);
        let mut state = HallState::default();

        // force ramps with the stage: rate = stiffness · velocity
        let rate = model.cup_stiffness * velocity;
        let t_ramp = peak / rate;
        let t_hold = 0.15;
        let total = 2.0 * t_ramp + t_hold;
        let n_steps = (total / dt).ceil() as usize;
        // cap the per-cycle sample count so slow cycles do not dominate
        let stride = (n_steps / 30).max(1);
        for k in 0..n_steps {
            let t = k as f64 * dt;
            let force = if t < t_ramp {
                rate * t
            } else if t < t_ramp + t_hold {
                peak
            } else {
                (peak - rate * (t - t_ramp - t_hold)).max(0.0)
            };
            let reading = hall_signal(&model, &mut state, force, partial, dt, Some(&mut rng));
            if k % stride == 0 {
                records.push(PressRecord {
                    hall: reading.values,
                    force,
                    velocity,
                    partial,
                    cup,
                    cycle,
                    train,
                });
            }
        }
    }

    PressCycleDataset {
        records,
        n_cycles: cfg.press_cycles,
    }
}

/// Writes the dataset as columnar text with a documented header.
pub fn save_dataset(dataset: &PressCycleDataset, path: &Path) -> Result<(), TactileError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# hall1_mT hall2_mT hall3_mT force_N velocity_mps partial cup cycle train")?;
    for r in &dataset.records {
        writeln!(
            w,
            "{:.6} {:.6} {:.6} {:.6} {:.4} {} {} {} {}",
            r.hall[0],
            r.hall[1],
            r.hall[2],
            r.force,
            r.velocity,
            r.partial as u8,
            r.cup,
            r.cycle,
            r.train as u8
        )?;
    }
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<PressCycleDataset, TactileError> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut records = Vec::new();
    let mut max_cycle = 0usize;
    for (idx, line) in file.lines().enumerate() {
        let line = line?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 9 {
            return Err(TactileError::Parse {
                line: idx + 1,
                reason: format!("expected 9 fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str| -> Result<f64, TactileError> {
            s.parse().map_err(|_| TactileError::Parse {
                line: idx + 1,
                reason: format!("bad number {s}"),
            })
        };
        let cycle = parse(fields[7])? as usize;
        max_cycle = max_cycle.max(cycle);
        records.push(PressRecord {
            hall: [parse(fields[0])?, parse(fields[1])?, parse(fields[2])?],
            force: parse(fields[3])?,
            velocity: parse(fields[4])?,
            partial: parse(fields[5])? != 0.0,
            cup: parse(fields[6])? as usize,
            cycle,
            train: parse(fields[8])? != 0.0,
        });
    }
    Ok(PressCycleDataset {
        records,
        n_cycles: max_cycle + 1,
    })
}

/// Trained readings → normal force regressor with its input whitening.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceEstimator {
    pub net: Mlp<f64>,
    pub input_mean: [f64; 3],
    pub input_std: [f64; 3],
}

/// Validation metrics of a trained estimator.
#[derive(Debug, Clone, Copy)]
pub struct EstimatorReport {
    /// Held-out root-mean-square error (N).
    pub rmse: f64,
    pub r_squared: f64,
    /// Held-out RMSE of an ordinary-least-squares baseline (N).
    pub linear_rmse: f64,
    /// Span of reference forces in the dataset (N).
    pub force_range: f64,
}

impl ForceEstimator {
    fn whiten(&self, readings: &[f64; 3]) -> DVector<f64> {
        DVector::from_fn(3, |i, _| (readings[i] - self.input_mean[i]) / self.input_std[i])
    }

    pub fn save(&self, path: &Path) -> Result<(), TactileError> {
        let mut ckpt = Checkpoint::default();
        ckpt.insert_mlp("force_estimator", &self.net);
        ckpt.insert_vector("input_mean", self.input_mean.to_vec());
        ckpt.insert_vector("input_std", self.input_std.to_vec());
        ckpt.save(path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TactileError> {
        let ckpt = Checkpoint::load(path)?;
        let mean = ckpt.vector("input_mean")?;
        let std = ckpt.vector("input_std")?;
        Ok(Self {
            net: ckpt.mlp("force_estimator")?.clone(),
            input_mean: [mean[0], mean[1], mean[2]],
            input_std: [std[0], std[1], std[2]],
        })
    }
}

/// Estimated normal force (N), clamped at zero.
pub fn estimate_grf(estimator: &ForceEstimator, readings: &[f64; 3]) -> f64 {
    let x = estimator.whiten(readings);
    estimator.net.forward_vec(&x).unwrap()[0].max(0.0)
}

/// Trains the 3→32→32→1 regressor on the training split and reports
/// held-out accuracy next to an ordinary-least-squares baseline.
pub fn train_force_estimator(
    dataset: &PressCycleDataset,
    epochs: usize,
    seed: u64,
) -> Result<(ForceEstimator, EstimatorReport), TactileError> {
    if dataset.records.is_empty() {
        return Err(TactileError::EmptyDataset);
    }
    let train: Vec<&PressRecord> = dataset.records.iter().filter(|r| r.train).collect();
    let holdout: Vec<&PressRecord> = dataset.records.iter().filter(|r| !r.train).collect();
    if train.is_empty() || holdout.is_empty() {
        return Err(TactileError::NoHoldout);
    }

    let mut input_mean = [0.0; 3];
    let mut input_std = [0.0; 3];
    for r in &train {
        for i in 0..3 {
            input_mean[i] += r.hall[i];
        }
    }
    for m in &mut input_mean {
        *m /= train.len() as f64;
    }
    for r in &train {
        for i in 0..3 {
            let d = r.hall[i] - input_mean[i];
            input_std[i] += d * d;
        }
    }
    for s in &mut input_std {
        *s = (*s / train.len() as f64).sqrt().max(1e-9);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Mlp::new(&[3, 32, 32, 1], &mut rng)?;
    let mut estimator = ForceEstimator {
        net,
        input_mean,
        input_std,
    };

    let x_train = DMatrix::from_fn(3, train.len(), |i, c| {
        (train[c].hall[i] - input_mean[i]) / input_std[i]
    });
    let y_train = DMatrix::from_fn(1, train.len(), |_, c| train[c].force);

    let mut opt = Adam::new(&estimator.net, 1e-3);
    let batch = 256.min(train.len());
    let n_batches = train.len().div_ceil(batch);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..epochs {
        // deterministic reshuffle per epoch
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let mut epoch_loss = 0.0;
        for b in 0..n_batches {
            let idx = &order[b * batch..((b + 1) * batch).min(order.len())];
            let xb = DMatrix::from_fn(3, idx.len(), |i, c| x_train[(i, idx[c])]);
            let yb = DMatrix::from_fn(1, idx.len(), |_, c| y_train[(0, idx[c])]);
            let (out, tape) = estimator.net.forward_cached(&xb)?;
            let resid = out - yb;
            epoch_loss += resid.norm_squared();
            let mut upstream = resid;
            upstream /= idx.len() as f64;
            let (mut grads, _) = estimator.net.backward(&tape, &upstream)?;
            grads.scale(2.0);
            opt.step(&mut estimator.net, &grads)?;
        }
        if !epoch_loss.is_finite() {
            return Err(TactileError::DivergentLoss(epoch));
        }
    }

    // held-out metrics
    let mut sq_err = 0.0;
    let mut f_min = f64::INFINITY;
    let mut f_max = f64::NEG_INFINITY;
    let mut mean_y = 0.0;
    for r in &holdout {
        let pred = estimate_grf(&estimator, &r.hall);
        sq_err += (pred - r.force).powi(2);
        mean_y += r.force;
    }
    for r in &dataset.records {
        f_min = f_min.min(r.force);
        f_max = f_max.max(r.force);
    }
    mean_y /= holdout.len() as f64;
    let mut ss_tot = 0.0;
    for r in &holdout {
        ss_tot += (r.force - mean_y).powi(2);
    }
    let rmse = (sq_err / holdout.len() as f64).sqrt();
    let r_squared = 1.0 - sq_err / ss_tot.max(1e-12);

    let linear_rmse = linear_baseline_rmse(&train, &holdout);

    Ok((
        estimator,
        EstimatorReport {
            rmse,
            r_squared,
            linear_rmse,
            force_range: f_max - f_min,
        },
    ))
}

/// Ordinary least squares readings → force, fit on the training split.
fn linear_baseline_rmse(train: &[&PressRecord], holdout: &[&PressRecord]) -> f64 {
    let a = DMatrix::from_fn(train.len(), 4, |r, c| {
        if c < 3 {
            train[r].hall[c]
        } else {
            1.0
        }
    });
    let y = DVector::from_fn(train.len(), |r, _| train[r].force);
    let coeffs = a
        .svd(true, true)
        .solve(&y, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(4));
    let mut sq = 0.0;
    for r in holdout {
        let pred = coeffs[0] * r.hall[0] + coeffs[1] * r.hall[1] + coeffs[2] * r.hall[2] + coeffs[3];
        sq += (pred.max(0.0) - r.force).powi(2);
    }
    (sq / holdout.len() as f64).sqrt()
}
