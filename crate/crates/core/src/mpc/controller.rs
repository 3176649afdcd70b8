use super::config::{MpcConfig, MpcError};
use super::cost::MpcProblem;
use super::model::{rollout, ExtendedSystem, Vec5};
use super::reference::{build_reference, ReferencePoint};
use super::solver::solve_increments;
use crate::geometry::{Obstacle, Track};
use crate::scalar::{wrap_angle, Real};
use crate::vehicle::{CarState, ControlInput, VehicleParams};

/// Obstacles closer than this to a reference point trigger the swerve starts (m).
const BLOCKING_RADIUS: f64 = 2.5;

/// Result of one horizon optimization.
#[derive(Clone, Debug, PartialEq)]
pub struct MpcSolution<T> {
    pub dw_sequence: Vec<[T; 2]>,
    /// `xi(k+1) ..= xi(k+N)`.
    pub predicted_states: Vec<Vec5<T>>,
    pub reference: Vec<ReferencePoint<T>>,
    pub cost: T,
    /// Cost of the all-zero increment sequence for the same problem.
    pub zero_cost: T,
    pub iterations: usize,
    pub converged: bool,
    /// Input deviation the increments accumulate from (after clamping).
    pub w0: [T; 2],
    pub start_clamped: bool,
    pub obstacles_considered: usize,
}

impl<T: Real> MpcSolution<T> {
    /// Absolute predicted positions: reference plus deviation.
    pub fn predicted_positions(&self) -> Vec<[T; 2]> {
        self.predicted_states
            .iter()
            .zip(&self.reference[1..])
            .map(|(xi, r)| [r.state.x + xi[0], r.state.y + xi[1]])
            .collect()
    }
}

/// Obstacle centers that enter the cost: within `detection_radius` of the car and
/// not more than `detection_behind` of arc length behind it.
pub fn detect_obstacles<T: Real>(
    track: &Track<T>,
    obstacles: &[Obstacle<T>],
    state: &CarState<T>,
    s0: T,
    config: &MpcConfig<T>,
) -> Vec<[T; 2]> {
    let r2 = config.detection_radius * config.detection_radius;
    obstacles
        .iter()
        .filter(|o| {
            o.distance_sq(state.x, state.y) <= r2
                && track.s_delta(o.arc_position, s0) >= -config.detection_behind
        })
        .map(|o| o.center)
        .collect()
}

/// Lead-car controller. Owns the previous input (for the extended state) and the
/// warm-start sequence.
#[derive(Clone, Debug)]
pub struct MpcController<T> {
    pub config: MpcConfig<T>,
    pub params: VehicleParams<T>,
    last_input: Option<ControlInput<T>>,
    warm: Vec<[T; 2]>,
}

impl<T: Real> MpcController<T> {
    pub fn new(config: MpcConfig<T>, params: VehicleParams<T>) -> Result<Self, MpcError> {
        config.validate()?;
        Ok(Self {
            config,
            params,
            last_input: None,
            warm: Vec::new(),
        })
    }

    pub fn last_input(&self) -> Option<ControlInput<T>> {
        self.last_input
    }

    pub fn set_last_input(&mut self, input: Option<ControlInput<T>>) {
        self.last_input = input;
    }

    pub fn reset(&mut self) {
        self.last_input = None;
        self.warm.clear();
    }

    /// Optimizes the horizon starting at arc length `s0` and returns the solution
    /// together with the input to apply now.
    pub fn solve(
        &mut self,
        state: &CarState<T>,
        track: &Track<T>,
        obstacles: &[Obstacle<T>],
        s0: T,
        speed: T,
    ) -> Result<(MpcSolution<T>, ControlInput<T>), MpcError> {
        let cfg = &self.config;
        let n = cfg.horizon;
        let reference =
            build_reference(track, s0, speed, n, cfg.step, cfg.lane_offset, &self.params);
        let r0 = reference[0];
        let xi_eta = [
            state.x - r0.state.x,
            state.y - r0.state.y,
            wrap_angle(state.phi - r0.state.phi),
        ];
        let prev = self.last_input.unwrap_or(r0.input);
        let raw = [prev.delta - r0.input.delta, prev.v - r0.input.v];
        let mut w0 = raw;
        let mut violation = T::zero();
        for k in 0..2 {
            violation = violation
                .max(cfg.w_min[k] - raw[k])
                .max(raw[k] - cfg.w_max[k]);
            w0[k] = raw[k].max(cfg.w_min[k]).min(cfg.w_max[k]);
        }
        let start_clamped = violation > T::zero();
        if start_clamped {
            if cfg.reject_infeasible_start {
                return Err(MpcError::InfeasibleStart {
                    violation: violation.to_f64_lossy(),
                });
            }
            log::warn!("previous input deviation outside its box by {violation}; clamped");
        }
        let xi0 = [xi_eta[0], xi_eta[1], xi_eta[2], w0[0], w0[1]];
        let detected = detect_obstacles(track, obstacles, state, s0, cfg);
        let system = ExtendedSystem::from_reference(&reference, &self.params, cfg.step)?;
        let problem = MpcProblem {
            system,
            reference,
            obstacles: detected,
            config: cfg,
            speed,
            xi0,
        };

        let mut starts = Vec::new();
        if !self.warm.is_empty() {
            let mut warm: Vec<_> = self.warm.iter().skip(1).copied().collect();
            warm.resize(n, [T::zero(); 2]);
            starts.push(warm);
        }
        let blocking = problem.obstacles.iter().any(|c| {
            problem.reference.iter().any(|r| {
                let (dx, dy) = (r.state.x - c[0], r.state.y - c[1]);
                dx * dx + dy * dy <= T::lit(BLOCKING_RADIUS * BLOCKING_RADIUS)
            })
        });
        if blocking {
            // an obstacle on the reference path is a saddle of the potential:
            // also descend from an early swerve to either side
            let m = (n / 5).max(1);
            for sign in [T::one(), -T::one()] {
                let a = sign
                    * if sign > T::zero() {
                        cfg.dw_max[0]
                    } else {
                        -cfg.dw_min[0]
                    };
                starts.push(
                    (0..n)
                        .map(|i| {
                            let d = if i < m {
                                a
                            } else if i < 2 * m {
                                -a
                            } else {
                                T::zero()
                            };
                            [d, T::zero()]
                        })
                        .collect(),
                );
            }
        }
        let outcome = solve_increments(&problem, w0, &starts);
        let zero_cost = problem.evaluate(&vec![[T::zero(); 2]; n]);
        let predicted_states = rollout(&problem.system, &xi0, &outcome.dw)?;
        let first = outcome.dw[0];
        let applied = self.params.clamp_input(ControlInput::new(
            r0.input.delta + w0[0] + first[0],
            r0.input.v + w0[1] + first[1],
        ));
        self.last_input = Some(applied);
        self.warm = outcome.dw.clone();
        let solution = MpcSolution {
            dw_sequence: outcome.dw,
            predicted_states,
            obstacles_considered: problem.obstacles.len(),
            reference: problem.reference,
            cost: outcome.cost,
            zero_cost,
            iterations: outcome.iterations,
            converged: outcome.converged,
            w0,
            start_clamped,
        };
        Ok((solution, applied))
    }

    /// Projects the car onto the track, plans along the reference lane at constant
    /// commanded speed and returns the input to hold until the next replan.
    pub fn lead_car_tick(
        &mut self,
        track: &Track<T>,
        obstacles: &[Obstacle<T>],
        state: &CarState<T>,
        speed: T,
    ) -> Result<(ControlInput<T>, MpcSolution<T>), MpcError> {
        let s0 = track.project(state.position())?.s;
        let (sol, input) = self.solve(state, track, obstacles, s0, speed)?;
        Ok((input, sol))
    }
}
