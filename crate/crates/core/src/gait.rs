//! Hand-designed reference gait and the rhythm signal exposed to the
//! policy.
//!
//! The gait is a lateral-sequence crawl: one leg at a time releases
//! suction, contracts, bends forward, replants, and then releases its bend
//! so the anchored foot drags the body ahead. Keyframes hold absolute
//! chamber pressures and suction commands; `reference_action` converts
//! them into the bounded increments the policy action space uses.

use crate::config::{GaitConfig, PneumaticsConfig};
use crate::pneumatics::PneumaticState;

/// Leg order within a cycle: left-front, right-hind, right-front,
/// left-hind (legs are indexed LF=0, RF=1, LH=2, RH=3).
pub const LEG_SEQUENCE: [usize; 4] = [0, 3, 1, 2];

/// One interpolation node of the schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keyframe {
    /// Cycle phase in [0, 1).
    pub phase: f64,
    /// Absolute chamber pressures (kPa), legs × 3 chambers.
    pub pressures: [f64; 12],
    /// Absolute suction commands in [0, 1].
    pub suction: [f64; 4],
}

/// Periodic keyframe schedule with linear interpolation and a stand-up
/// preamble before the first cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitSchedule {
    /// Cycle period (s).
    pub period: f64,
    /// Stand-up window before cycling starts (s).
    pub prep_time: f64,
    /// Targets held during the preamble.
    pub stance: GaitTargets,
    pub keyframes: Vec<Keyframe>,
}

/// Absolute targets at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitTargets {
    pub pressures: [f64; 12],
    pub suction: [f64; 4],
}

impl GaitSchedule {
    /// Builds the four-leg crawl from the tuning parameters. Each leg owns
    /// a quarter of the cycle, subdivided into lift, swing, plant, and
    /// body-shift keyframes.
    pub fn build(cfg: &GaitConfig) -> Self {
        let stance_leg = [cfg.p_stand; 3];
        // chambers at 120° and 240° bend the tip forward (+x); holding the
        // first chamber low keeps the leg short while swinging
        let contracted = [2.0, 2.0, 2.0];
        let bent_short = [2.0, cfg.p_bend, cfg.p_bend];
        let bent_planted = [
            cfg.p_stand - cfg.p_bend * 0.5,
            cfg.p_stand + cfg.p_bend,
            cfg.p_stand + cfg.p_bend,
        ];
        // the diagonal partner runs at reduced extension during a swing so
        // its corner does not lever the body over the support diagonal
        let unloaded = [cfg.p_stand - cfg.p_push; 3];
        let diagonal = [3usize, 2, 1, 0];

        let mut keyframes = Vec::with_capacity(20);
        for (slot, &leg) in LEG_SEQUENCE.iter().enumerate() {
            let base = slot as f64 * 0.25;
            // (local phase, active-leg pressures, active-leg suction)
            let steps: [(f64, [f64; 3], f64); 5] = [
                (0.0, contracted, cfg.s_swing),
                (0.07, bent_short, cfg.s_swing),
                (0.13, bent_planted, cfg.s_stance),
                (0.19, stance_leg, cfg.s_stance),
                (0.24, stance_leg, cfg.s_stance),
            ];
            for (off, active_p, active_s) in steps {
                let mut pressures = [cfg.p_stand; 12];
                let mut suction = [cfg.s_stance; 4];
                pressures[3 * leg..3 * leg + 3].copy_from_slice(&active_p);
                // unload the diagonal partner until the swing leg replants
                if off < 0.19 {
                    let d = diagonal[leg];
                    pressures[3 * d..3 * d + 3].copy_from_slice(&unloaded);
                }
                suction[leg] = active_s;
                keyframes.push(Keyframe {
                    phase: base + off,
                    pressures,
                    suction,
                });
            }
        }
        Self {
            period: cfg.period,
            prep_time: cfg.prep_time,
            stance: GaitTargets {
                pressures: [cfg.p_stand; 12],
                suction: [cfg.s_stance; 4],
            },
            keyframes,
        }
    }

    /// Schedule invariants: strictly increasing phases in [0,1), at most
    /// one leg off suction per keyframe.
    pub fn validate(&self, s_min: f64) -> Result<(), String> {
        if self.period <= 0.0 {
            return Err("period must be positive".into());
        }
        for w in self.keyframes.windows(2) {
            if w[1].phase <= w[0].phase {
                return Err(format!(
                    "phases not strictly increasing at {} vs {}",
                    w[0].phase, w[1].phase
                ));
            }
        }
        for k in &self.keyframes {
            if !(0.0..1.0).contains(&k.phase) {
                return Err(format!("phase {} outside [0,1)", k.phase));
            }
            let off = k.suction.iter().filter(|s| **s < s_min).count();
            if off > 1 {
                return Err(format!("{off} legs off suction at phase {}", k.phase));
            }
        }
        Ok(())
    }

    /// Interpolated absolute targets at time `t`. The preamble holds the
    /// all-stance targets; cycling starts at `prep_time`.
    pub fn targets(&self, t: f64) -> GaitTargets {
        if t < self.prep_time {
            return self.stance;
        }
        let phase = ((t - self.prep_time) / self.period).rem_euclid(1.0);
        let n = self.keyframes.len();
        // find the bracketing pair, wrapping across the cycle boundary
        let mut hi = 0;
        while hi < n && self.keyframes[hi].phase <= phase {
            hi += 1;
        }
        let (a, b, span) = if hi == 0 || hi == n {
            let a = &self.keyframes[n - 1];
            let b = &self.keyframes[0];
            let span = 1.0 - a.phase + b.phase;
            let local = (phase - a.phase).rem_euclid(1.0);
            (a, b, (local, span))
        } else {
            let a = &self.keyframes[hi - 1];
            let b = &self.keyframes[hi];
            (a, b, (phase - a.phase, b.phase - a.phase))
        };
        let w = if span.1 > 1e-12 { (span.0 / span.1).clamp(0.0, 1.0) } else { 0.0 };

        let mut out = GaitTargets {
            pressures: [0.0; 12],
            suction: [0.0; 4],
        };
        for i in 0..12 {
            out.pressures[i] = a.pressures[i] + w * (b.pressures[i] - a.pressures[i]);
        }
        for i in 0..4 {
            out.suction[i] = a.suction[i] + w * (b.suction[i] - a.suction[i]);
        }
        out
    }
}

/// Converts the schedule's absolute targets at `t` into the bounded
/// incremental action that moves the commanded state toward them.
pub fn reference_action(
    schedule: &GaitSchedule,
    t: f64,
    pneu: &PneumaticState<f64>,
    rates: &PneumaticsConfig,
) -> [f64; 16] {
    let targets = schedule.targets(t);
    let mut action = [0.0; 16];
    for i in 0..12 {
        action[i] = ((targets.pressures[i] - pneu.commanded[i]) / rates.delta_p_max)
            .clamp(-1.0, 1.0);
    }
    for i in 0..4 {
        action[12 + i] =
            ((targets.suction[i] - pneu.suction[i]) / rates.delta_s_max).clamp(-1.0, 1.0);
    }
    action
}

/// Phase oscillator exposed to the policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpgState {
    /// Phase in [0, 2π).
    pub phase: f64,
    /// Angular frequency (rad/s); one revolution per gait cycle.
    pub omega: f64,
}

impl CpgState {
    pub fn new(gait_period: f64) -> Self {
        Self {
            phase: 0.0,
            omega: 2.0 * std::f64::consts::PI / gait_period,
        }
    }

    pub fn advance(&mut self, dt: f64) {
        self.phase = (self.phase + self.omega * dt).rem_euclid(2.0 * std::f64::consts::PI);
    }

    pub fn signal(&self) -> (f64, f64) {
        (self.phase.sin(), self.phase.cos())
    }
}
