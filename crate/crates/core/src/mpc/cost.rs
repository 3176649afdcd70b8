use super::config::MpcConfig;
use super::model::{input_t_vec, mat_t_vec, rollout, ExtendedSystem, Vec5};
use super::reference::ReferencePoint;
use crate::scalar::Real;

/// Horizon cost for predicted extended states `xi(k+1) ..= xi(k+N)`:
///
/// ```text
/// J = sum_i |xi_i|_Q^2 + |dw_i|_R^2
///   + sum_i sum_c S v / ((x_i - x_c)^2 + (y_i - y_c)^2 + zeta)
///   + sum_i W max(0, |d_i| - margin)^2
/// ```
///
/// Absolute positions are the reference position plus the deviation. The last
/// term is the soft road-edge penalty on the predicted lateral offset `d_i`.
pub fn cost<T: Real>(
    states: &[Vec5<T>],
    dw: &[[T; 2]],
    reference: &[ReferencePoint<T>],
    obstacles: &[[T; 2]],
    config: &MpcConfig<T>,
    v: T,
) -> T {
    let mut j = T::zero();
    for (i, (xi, u)) in states.iter().zip(dw).enumerate() {
        j = j + quad5(&config.q, xi) + quad2(&config.r, u);
        let r = &reference[i + 1].state;
        let (x, y) = (r.x + xi[0], r.y + xi[1]);
        for c in obstacles {
            let (dx, dy) = (x - c[0], y - c[1]);
            j = j + config.obstacle_weight * v / (dx * dx + dy * dy + config.zeta);
        }
        let excess = lateral(config, r.phi, xi).abs() - config.boundary_margin;
        if excess > T::zero() {
            j = j + config.boundary_weight * excess * excess;
        }
    }
    j
}

fn lateral<T: Real>(config: &MpcConfig<T>, ref_heading: T, xi: &Vec5<T>) -> T {
    let (s, c) = ref_heading.sin_cos();
    config.lane_offset - s * xi[0] + c * xi[1]
}

fn quad5<T: Real>(m: &[[T; 5]; 5], x: &Vec5<T>) -> T {
    let mx = super::model::mat_vec(m, x);
    mx.iter()
        .zip(x)
        .fold(T::zero(), |acc, (a, b)| acc + *a * *b)
}

fn quad2<T: Real>(m: &[[T; 2]; 2], u: &[T; 2]) -> T {
    u[0] * (m[0][0] * u[0] + m[0][1] * u[1]) + u[1] * (m[1][0] * u[0] + m[1][1] * u[1])
}

/// One horizon problem: linearized system, reference, detected obstacles and the
/// initial extended state.
#[derive(Clone, Debug)]
pub struct MpcProblem<'a, T> {
    pub system: ExtendedSystem<T>,
    pub reference: Vec<ReferencePoint<T>>,
    pub obstacles: Vec<[T; 2]>,
    pub config: &'a MpcConfig<T>,
    pub speed: T,
    pub xi0: Vec5<T>,
}

impl<'a, T: Real> MpcProblem<'a, T> {
    pub fn horizon(&self) -> usize {
        self.system.horizon()
    }

    pub fn evaluate(&self, dw: &[[T; 2]]) -> T {
        let states =
            rollout(&self.system, &self.xi0, dw).expect("increment length matches horizon");
        cost(
            &states,
            dw,
            &self.reference,
            &self.obstacles,
            self.config,
            self.speed,
        )
    }

    /// Cost and its exact gradient with respect to the increments (adjoint sweep).
    pub fn evaluate_with_gradient(&self, dw: &[[T; 2]], grad: &mut [[T; 2]]) -> T {
        let n = self.horizon();
        let states =
            rollout(&self.system, &self.xi0, dw).expect("increment length matches horizon");
        let j = cost(
            &states,
            dw,
            &self.reference,
            &self.obstacles,
            self.config,
            self.speed,
        );
        let cfg = self.config;
        let two = T::two();
        // lambda_{i} = dJ/dxi_i including everything downstream
        let mut lambda = [T::zero(); 5];
        for i in (0..n).rev() {
            let xi = &states[i];
            let mut g = [T::zero(); 5];
            for (r, gr) in g.iter_mut().enumerate() {
                *gr = (0..5).fold(T::zero(), |acc, c| {
                    acc + (cfg.q[r][c] + cfg.q[c][r]) * xi[c]
                });
            }
            let rp = &self.reference[i + 1].state;
            let (x, y) = (rp.x + xi[0], rp.y + xi[1]);
            for c in &self.obstacles {
                let (dx, dy) = (x - c[0], y - c[1]);
                let den = dx * dx + dy * dy + cfg.zeta;
                let k = -two * cfg.obstacle_weight * self.speed / (den * den);
                g[0] = g[0] + k * dx;
                g[1] = g[1] + k * dy;
            }
            let d = lateral(cfg, rp.phi, xi);
            let excess = d.abs() - cfg.boundary_margin;
            if excess > T::zero() {
                let k = two * cfg.boundary_weight * excess * d.signum();
                let (s, c) = rp.phi.sin_cos();
                g[0] = g[0] - k * s;
                g[1] = g[1] + k * c;
            }
            if i + 1 < n {
                let carried = mat_t_vec(&self.system.a[i + 1], &lambda);
                for k in 0..5 {
                    g[k] = g[k] + carried[k];
                }
            }
            lambda = g;
            let bt = input_t_vec(&self.system.b[i], &lambda);
            let u = &dw[i];
            grad[i] = [
                bt[0] + (cfg.r[0][0] + cfg.r[0][0]) * u[0] + (cfg.r[0][1] + cfg.r[1][0]) * u[1],
                bt[1] + (cfg.r[1][0] + cfg.r[0][1]) * u[0] + (cfg.r[1][1] + cfg.r[1][1]) * u[1],
            ];
        }
        j
    }
}
