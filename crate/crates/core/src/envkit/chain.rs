use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{finished_episode, EnvSpec, MultiAgentEnv, Observation, StepResult};
use crate::rng::rng_for;
use crate::{Error, Result};

/// Physical constants of a [`ChainWorld`].
#[derive(Debug, Clone, PartialEq)]
pub struct ChainParams {
    /// Actuated joints, one agent each. The body has `n_joints + 1` links.
    pub n_joints: usize,
    pub link_length: f64,
    /// Rotational inertia reflected at each joint.
    pub joint_inertia: f64,
    pub joint_damping: f64,
    /// Passive spring pulling every joint back to straight.
    pub joint_stiffness: f64,
    /// Torque per unit action.
    pub gear: f64,
    /// Viscous drag per unit length along a link.
    pub drag_tangential: f64,
    /// Viscous drag per unit length across a link.
    pub drag_normal: f64,
    pub dt: f64,
    /// Reward penalty per unit squared action.
    pub ctrl_cost: f64,
    pub max_episode_steps: usize,
    /// Half-width of the uniform joint perturbation applied on reset.
    pub reset_noise: f64,
}

impl ChainParams {
    pub fn with_joints(n_joints: usize) -> Self {
        Self {
            n_joints,
            link_length: 1.0,
            joint_inertia: 0.25,
            joint_damping: 0.5,
            joint_stiffness: 2.0,
            gear: 2.5,
            drag_tangential: 0.02,
            drag_normal: 0.2,
            dt: 0.05,
            ctrl_cost: 0.05,
            max_episode_steps: 200,
            reset_noise: 0.1,
        }
    }
}

/// Planar articulated chain moving through a viscous medium.
///
/// Drag is anisotropic (links slide along their axis more easily than across
/// it), so coordinated joint waves propel the body. Body motion is quasi-static:
/// at every step the root velocity is the one for which drag forces and
/// torques on the whole body balance. Joint rates and root velocity are solved
/// together, implicitly in drag and damping; positions then advance with the
/// new velocities (semi-implicit Euler).
///
/// The global state is `[cos φ, sin φ, ẋ, ẏ, φ̇, θ_0, ω_0, ..., θ_{n-1}, ω_{n-1}]`.
/// Agent 0 drives the joint next to the root and observes the root block plus
/// its own joint; every other agent observes its own joint angle and rate.
#[derive(Debug, Clone)]
pub struct ChainWorld {
    params: ChainParams,
    spec: EnvSpec,
    x: f64,
    y: f64,
    heading: f64,
    root_velocity: [f64; 3],
    angles: Vec<f64>,
    rates: Vec<f64>,
    t: usize,
}

impl ChainWorld {
    pub fn new(params: ChainParams) -> Self {
        let n = params.n_joints;
        assert!(n >= 1, "a chain needs at least one joint");
        let mut obs_dims = vec![2; n];
        obs_dims[0] = 7;
        let spec = EnvSpec {
            n_agents: n,
            obs_dims,
            action_dims: vec![1; n],
            max_episode_steps: params.max_episode_steps,
        };
        Self {
            spec,
            x: 0.0,
            y: 0.0,
            heading: 0.0,
            root_velocity: [0.0; 3],
            angles: vec![0.0; n],
            rates: vec![0.0; n],
            t: 0,
            params,
        }
    }

    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    pub fn root_position(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    pub fn joint_angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn joint_rates(&self) -> &[f64] {
        &self.rates
    }

    /// Joint kinetic plus spring energy.
    pub fn joint_energy(&self) -> f64 {
        let p = &self.params;
        self.angles
            .iter()
            .zip(&self.rates)
            .map(|(q, w)| 0.5 * p.joint_inertia * w * w + 0.5 * p.joint_stiffness * q * q)
            .sum()
    }

    /// Places the chain in an arbitrary configuration at rest-root velocity.
    pub fn set_joint_state(&mut self, angles: &[f64], rates: &[f64]) -> Result<()> {
        let n = self.params.n_joints;
        if angles.len() != n || rates.len() != n {
            return Err(Error::dim("ChainWorld joint state", n, angles.len().min(rates.len())));
        }
        self.angles.copy_from_slice(angles);
        self.rates.copy_from_slice(rates);
        Ok(())
    }

    pub fn state_vector(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.spec.global_state_dim());
        s.push(libm::cos(self.heading));
        s.push(libm::sin(self.heading));
        s.extend_from_slice(&self.root_velocity);
        for (q, w) in self.angles.iter().zip(&self.rates) {
            s.push(*q);
            s.push(*w);
        }
        s
    }

    fn observation(&self) -> Observation {
        let state = self.state_vector();
        Observation {
            per_agent: self.spec.split_state(&state),
            state,
        }
    }

    /// Generalised resistance matrix over `(x, y, φ, θ_0..θ_{n-1})`.
    fn resistance(&self) -> Vec<f64> {
        let p = &self.params;
        let n = p.n_joints;
        let m = n + 3;
        let l = p.link_length;
        let mut r = vec![0.0; m * m];

        // Absolute link angles and their unit normals.
        let mut alpha = Vec::with_capacity(n + 1);
        let mut acc = self.heading;
        for k in 0..=n {
            alpha.push(acc);
            if k < n {
                acc += self.angles[k];
            }
        }
        let normals: Vec<(f64, f64)> = alpha
            .iter()
            .map(|&a| (-libm::sin(a), libm::cos(a)))
            .collect();

        // d(alpha_k)/dq: 1 for heading and every joint before link k.
        let angle_row = |k: usize| -> Vec<f64> {
            let mut row = vec![0.0; m];
            row[2] = 1.0;
            for j in 0..k {
                row[3 + j] = 1.0;
            }
            row
        };

        let mut jx = vec![0.0; m];
        let mut jy = vec![0.0; m];
        for k in 0..=n {
            // Link centre: root - l * sum_{j<k} u_j - (l/2) u_k; du/dalpha = normal.
            jx.iter_mut().for_each(|v| *v = 0.0);
            jy.iter_mut().for_each(|v| *v = 0.0);
            jx[0] = 1.0;
            jy[1] = 1.0;
            for j in 0..=k {
                let lever = if j < k { l } else { 0.5 * l };
                let row = angle_row(j);
                for c in 0..m {
                    jx[c] -= lever * normals[j].0 * row[c];
                    jy[c] -= lever * normals[j].1 * row[c];
                }
            }

            let (nx, ny) = normals[k];
            let (ux, uy) = (ny, -nx);
            let (ct, cn) = (p.drag_tangential, p.drag_normal);
            let d = [
                ct * ux * ux + cn * nx * nx,
                ct * ux * uy + cn * nx * ny,
                ct * uy * uy + cn * ny * ny,
            ];
            let rot = angle_row(k);
            let spin = cn * l * l * l / 12.0;
            for a in 0..m {
                for b in 0..m {
                    let translational = jx[a] * (d[0] * jx[b] + d[1] * jy[b])
                        + jy[a] * (d[1] * jx[b] + d[2] * jy[b]);
                    r[a * m + b] += l * translational + spin * rot[a] * rot[b];
                }
            }
        }
        r
    }

    fn advance(&mut self, torques: &[f64]) -> Result<()> {
        let p = self.params.clone();
        let n = p.n_joints;
        let m = n + 3;
        let mut system = self.resistance();
        let mut rhs = vec![0.0; m];
        let inertia_rate = p.joint_inertia / p.dt;
        for j in 0..n {
            system[(3 + j) * m + 3 + j] += inertia_rate + p.joint_damping;
            rhs[3 + j] = inertia_rate * self.rates[j] + p.gear * torques[j]
                - p.joint_stiffness * self.angles[j];
        }
        solve_dense(&mut system, &mut rhs, m)?;

        self.root_velocity.copy_from_slice(&rhs[..3]);
        self.x += p.dt * rhs[0];
        self.y += p.dt * rhs[1];
        self.heading += p.dt * rhs[2];
        for j in 0..n {
            self.rates[j] = rhs[3 + j];
            self.angles[j] += p.dt * self.rates[j];
        }
        Ok(())
    }
}

/// Gaussian elimination with partial pivoting; the solution replaces `rhs`.
fn solve_dense(a: &mut [f64], rhs: &mut [f64], n: usize) -> Result<()> {
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .expect("non-empty range");
        if !(a[pivot * n + col].abs() > 1e-300) {
            return Err(Error::NonFinite("singular chain dynamics system".into()));
        }
        if pivot != col {
            for c in 0..n {
                a.swap(col * n + c, pivot * n + c);
            }
            rhs.swap(col, pivot);
        }
        let diag = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / diag;
            if f != 0.0 {
                for c in col..n {
                    a[row * n + c] -= f * a[col * n + c];
                }
                rhs[row] -= f * rhs[col];
            }
        }
    }
    for row in (0..n).rev() {
        let mut s = rhs[row];
        for c in row + 1..n {
            s -= a[row * n + c] * rhs[c];
        }
        rhs[row] = s / a[row * n + row];
    }
    Ok(())
}

impl MultiAgentEnv for ChainWorld {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Observation {
        let mut rng = rng_for(seed, &[]);
        let noise = self.params.reset_noise;
        self.x = 0.0;
        self.y = 0.0;
        self.heading = 0.0;
        self.root_velocity = [0.0; 3];
        for j in 0..self.params.n_joints {
            self.angles[j] = if noise > 0.0 {
                rng.random_range(-noise..=noise)
            } else {
                0.0
            };
            self.rates[j] = if noise > 0.0 {
                rng.random_range(-noise..=noise)
            } else {
                0.0
            };
        }
        self.t = 0;
        self.observation()
    }

    fn step(&mut self, joint_action: &[Vec<f64>]) -> Result<StepResult> {
        if self.t >= self.spec.max_episode_steps {
            return Err(finished_episode());
        }
        let a = self.spec.clamp_action(joint_action)?;
        let torques: Vec<f64> = a.iter().map(|v| v[0]).collect();
        let x_before = self.x;
        self.advance(&torques)?;
        self.t += 1;

        let forward = (self.x - x_before) / self.params.dt;
        let ctrl: f64 = torques.iter().map(|u| u * u).sum::<f64>() * self.params.ctrl_cost;
        let obs = self.observation();
        if obs.state.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("chain state diverged".into()));
        }
        Ok(StepResult {
            next_state: obs.state,
            per_agent_obs: obs.per_agent,
            reward: forward - ctrl,
            done: self.t >= self.spec.max_episode_steps,
            terminal: false,
            info: vec![("forward_velocity", forward), ("ctrl_cost", ctrl)],
        })
    }
}
