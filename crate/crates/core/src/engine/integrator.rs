use super::trajectory::{Event, EventKind, PathStatus, Trajectory};
use super::SimConfig;
use crate::error::Result;
use crate::model::RegimeModel;
use crate::rng::PathRng;
use crate::switching::{check_step, coupled_lookup, coupling_from_slices, max_exit_rate, switch_from_row};

pub(super) struct Start<'a> {
    x0: &'a [f64],
    a0: usize,
    second: Option<(&'a [f64], usize)>,
}

impl<'a> Start<'a> {
    pub(super) fn single(x0: &'a [f64], a0: usize) -> Self {
        Self { x0, a0, second: None }
    }

    pub(super) fn pair(x0: &'a [f64], a0: usize, y0: &'a [f64], b0: usize) -> Self {
        Self {
            x0,
            a0,
            second: Some((y0, b0)),
        }
    }
}

pub(super) struct RunOutput {
    pub first: Trajectory,
    pub second: Option<Trajectory>,
    pub grid_times: Vec<f64>,
    /// Flattened grid states of each lane (pair runs only).
    pub first_grid: Vec<f64>,
    pub second_grid: Vec<f64>,
    pub diff_sq: Vec<f64>,
    pub regime_pairs: Vec<(usize, usize)>,
    /// `ς` on the grid (tangent runs only).
    pub tangent: Vec<f64>,
}

struct Lane {
    x: Vec<f64>,
    left: Vec<f64>,
    regime: usize,
    frozen: bool,
    traj: Trajectory,
}

impl Lane {
    fn new(x0: &[f64], regime: usize) -> Self {
        Self {
            x: x0.to_vec(),
            left: x0.to_vec(),
            regime,
            frozen: false,
            traj: Trajectory::new(x0.len()),
        }
    }

    fn is_finite(&self) -> bool {
        self.x.iter().all(|v| v.is_finite())
    }
}

struct Scratch {
    b: Vec<f64>,
    s: Vec<f64>,
    g: Vec<f64>,
    xi: Vec<f64>,
    q: Vec<f64>,
    qy: Vec<f64>,
    ds: Vec<f64>,
}

/// Relative step for central differences of coefficients.
const FD_REL_STEP: f64 = 1e-6;

fn euler(model: &RegimeModel, lane: &mut Lane, h: f64, xi: &[f64], sc: &mut Scratch) {
    let r = model.dim_x();
    let d = model.dim_w();
    model.drift_into(&lane.x, lane.regime, &mut sc.b);
    model.diffusion_into(&lane.x, lane.regime, &mut sc.s);
    for k in 0..r {
        let noise: f64 = (0..d).map(|l| sc.s[k * d + l] * xi[l]).sum();
        lane.x[k] += sc.b[k] * h + noise;
    }
}

/// `∂b/∂x` and `∂σ_l/∂x` for a scalar state, analytic when available.
fn coefficient_slopes(model: &RegimeModel, x: f64, regime: usize, sc: &mut Scratch) -> f64 {
    if let Some(d) = model.derivatives() {
        (d.diffusion_dx)(x, regime, &mut sc.ds);
        return (d.drift_dx)(x, regime);
    }
    let h = FD_REL_STEP * x.abs().max(1.0);
    let dw = model.dim_w();
    let mut bp = [0.0];
    let mut bm = [0.0];
    model.drift_into(&[x + h], regime, &mut bp);
    model.drift_into(&[x - h], regime, &mut bm);
    model.diffusion_into(&[x + h], regime, &mut sc.s);
    sc.ds.copy_from_slice(&sc.s[..dw]);
    model.diffusion_into(&[x - h], regime, &mut sc.s);
    for l in 0..dw {
        sc.ds[l] = (sc.ds[l] - sc.s[l]) / (2.0 * h);
    }
    (bp[0] - bm[0]) / (2.0 * h)
}

fn jump_slope(model: &RegimeModel, x: f64, regime: usize, mark: f64) -> f64 {
    if let Some(d) = model.derivatives() {
        return (d.jump_dx)(x, regime, mark);
    }
    let h = FD_REL_STEP * x.abs().max(1.0);
    let mut gp = [0.0];
    let mut gm = [0.0];
    model.jump_into(&[x + h], regime, mark, &mut gp);
    model.jump_into(&[x - h], regime, mark, &mut gm);
    (gp[0] - gm[0]) / (2.0 * h)
}

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub(super) fn run(
    model: &RegimeModel,
    cfg: &SimConfig,
    path_index: usize,
    start: Start<'_>,
    track_tangent: bool,
) -> Result<RunOutput> {
    let r = model.dim_x();
    let d = model.dim_w();
    let m = model.num_regimes();
    let lam = model.jump_rate();
    let degenerate_mark = model.marks().degenerate_value();
    let floor_sq = cfg.underflow_floor * cfg.underflow_floor;
    let freezes = model.has_equilibrium();

    let mut lanes = vec![Lane::new(start.x0, start.a0)];
    if let Some((y0, b0)) = start.second {
        lanes.push(Lane::new(y0, b0));
    }
    let paired = lanes.len() == 2;

    let mut sc = Scratch {
        b: vec![0.0; r],
        s: vec![0.0; r * d],
        g: vec![0.0; r],
        xi: vec![0.0; d],
        q: vec![0.0; m * m],
        qy: vec![0.0; m * m],
        ds: vec![0.0; d],
    };
    let mut rng = PathRng::new(cfg.seed, path_index as u64);
    let mut tangent = 1.0;

    let mut out = RunOutput {
        first: Trajectory::new(r),
        second: None,
        grid_times: Vec::new(),
        first_grid: Vec::new(),
        second_grid: Vec::new(),
        diff_sq: Vec::new(),
        regime_pairs: Vec::new(),
        tangent: Vec::new(),
    };

    let freeze_check = |lane: &mut Lane, t: f64| {
        if freezes && !lane.frozen && norm_sq(&lane.x) < floor_sq {
            lane.x.fill(0.0);
            lane.frozen = true;
            lane.traj.status = PathStatus::Frozen { time: t };
        }
    };

    let record_grid = |lanes: &mut [Lane], out: &mut RunOutput, t: f64, tangent: f64| {
        for lane in lanes.iter_mut() {
            lane.traj.push_row(t, &lane.x, lane.regime, None, true);
        }
        out.grid_times.push(t);
        if paired {
            out.first_grid.extend_from_slice(&lanes[0].x);
            out.second_grid.extend_from_slice(&lanes[1].x);
            let dsq = lanes[0]
                .x
                .iter()
                .zip(&lanes[1].x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            out.diff_sq.push(dsq);
            out.regime_pairs.push((lanes[0].regime, lanes[1].regime));
        }
        if track_tangent {
            out.tangent.push(tangent);
        }
    };

    for lane in lanes.iter_mut() {
        freeze_check(lane, 0.0);
    }
    record_grid(&mut lanes, &mut out, 0.0, tangent);

    let n_steps = cfg.n_steps();
    let mut t = 0.0;
    let mut next_jump = rng.exponential(lam);
    let mut diverged = false;

    // Euler move of every live lane over [t, t + h] with shared increments.
    let diffuse = |lanes: &mut [Lane], h: f64, rng: &mut PathRng, sc: &mut Scratch, tangent: &mut f64| {
        if h <= 0.0 {
            return;
        }
        let sqrt_h = h.sqrt();
        for v in sc.xi.iter_mut() {
            *v = rng.normal() * sqrt_h;
        }
        let xi = std::mem::take(&mut sc.xi);
        if track_tangent && !lanes[0].frozen {
            let x = lanes[0].x[0];
            let bx = coefficient_slopes(model, x, lanes[0].regime, sc);
            let noise: f64 = sc.ds.iter().zip(&xi).map(|(a, b)| a * b).sum();
            *tangent *= 1.0 + bx * h + noise;
        }
        for lane in lanes.iter_mut().filter(|l| !l.frozen) {
            euler(model, lane, h, &xi, sc);
        }
        sc.xi = xi;
    };

    'steps: for step in 0..n_steps {
        let t_end = cfg.step_end(step);
        let h_step = t_end - t;
        for lane in lanes.iter_mut() {
            lane.left.copy_from_slice(&lane.x);
        }

        while next_jump < t_end {
            let tau = next_jump;
            diffuse(&mut lanes, tau - t, &mut rng, &mut sc, &mut tangent);
            t = tau;
            if lanes.iter().any(|l| !l.is_finite()) {
                diverged = true;
                break 'steps;
            }
            let mark = match degenerate_mark {
                Some(v) => v,
                None => model.sample_mark(&mut rng),
            };
            for (idx, lane) in lanes.iter_mut().enumerate() {
                if lane.frozen {
                    continue;
                }
                if idx == 0 && track_tangent {
                    tangent *= 1.0 + jump_slope(model, lane.x[0], lane.regime, mark);
                }
                model.jump_into(&lane.x, lane.regime, mark, &mut sc.g);
                lane.traj.events.push(Event {
                    time: tau,
                    kind: EventKind::Jump { mark },
                    pre_state: lane.x.clone(),
                    pre_regime: lane.regime,
                });
                for (xk, gk) in lane.x.iter_mut().zip(&sc.g) {
                    *xk += gk;
                }
                if !lane.is_finite() {
                    diverged = true;
                    break 'steps;
                }
                lane.traj
                    .push_row(tau, &lane.x, lane.regime, Some(EventKind::Jump { mark }), false);
            }
            next_jump = tau + rng.exponential(lam);
        }
        diffuse(&mut lanes, t_end - t, &mut rng, &mut sc, &mut tangent);
        t = t_end;
        if lanes.iter().any(|l| !l.is_finite()) {
            diverged = true;
            break;
        }

        if m > 1 {
            let u = rng.uniform();
            let mut moves = [(0usize, 0usize); 2];
            let n_moves = if paired {
                model.rates_into(&lanes[0].left, &mut sc.q);
                model.rates_into(&lanes[1].left, &mut sc.qy);
                if sc.q.iter().chain(&sc.qy).any(|v| !v.is_finite()) {
                    diverged = true;
                    break;
                }
                let coupling =
                    coupling_from_slices(&sc.q, &sc.qy, m, lanes[0].regime, lanes[1].regime);
                check_step(h_step, coupling.total_rate())?;
                let (a, b) = coupled_lookup(&coupling, h_step, u);
                moves = [(0, a), (1, b)];
                2
            } else {
                model.rates_into(&lanes[0].left, &mut sc.q);
                if sc.q.iter().any(|v| !v.is_finite()) {
                    diverged = true;
                    break;
                }
                check_step(h_step, max_exit_rate(&sc.q, m))?;
                let from = lanes[0].regime;
                moves[0] = (0, switch_from_row(&sc.q[from * m..(from + 1) * m], from, h_step, u));
                1
            };
            for &(idx, to) in &moves[..n_moves] {
                let lane = &mut lanes[idx];
                if to != lane.regime {
                    let from = lane.regime;
                    lane.traj.events.push(Event {
                        time: t,
                        kind: EventKind::Switch { from, to },
                        pre_state: lane.x.clone(),
                        pre_regime: from,
                    });
                    lane.regime = to;
                    lane.traj
                        .push_row(t, &lane.x, to, Some(EventKind::Switch { from, to }), false);
                }
            }
        }

        for lane in lanes.iter_mut() {
            freeze_check(lane, t);
        }
        if (step + 1) % cfg.record_stride == 0 || step + 1 == n_steps {
            record_grid(&mut lanes, &mut out, t, tangent);
        }
    }

    if diverged {
        for lane in lanes.iter_mut() {
            lane.traj.status = PathStatus::Divergent { time: t };
        }
    }

    let mut lanes = lanes.into_iter();
    out.first = lanes.next().expect("first lane").traj;
    out.second = lanes.next().map(|l| l.traj);
    Ok(out)
}
