//! The per-mode training loops: fixed/adaptive PQN, GNS-scheduled PQN,
//! fixed/KL-adaptive PPO, and the replay-buffer DQN variants. One run is
//! one sequential orchestrator that owns all state and writes metrics.csv,
//! config.resolved and the final checkpoint into the output directory.

use crate::agents::{
    collect_gaussian_rollout, collect_q_rollout, epsilon_schedule, gae, ppo_update, pqn_update,
    q_lambda_returns, replay_dqn_update, GaussianPolicy, PpoUpdateCfg, ReplayBuffer,
    RolloutBuffer, Transition,
};
use crate::config::{ExperimentConfig, Mode};
use crate::env::{make_env, Action, EnvBatch};
use crate::error::{Error, Result};
use crate::math::argmax;
use crate::metrics::{MetricsRow, MetricsWriter};
use crate::net::{save_checkpoint, AdamState, Mlp};
use crate::rng::stream;
use crate::scheduler::{
    abs_tick, adapt_replay_batch, ars_tick, compensated_epochs, gns_estimate, gns_target_batch,
    AbsState, TickDecision,
};
use rand::Rng;
use std::collections::VecDeque;
use std::path::PathBuf;
use std::time::Instant;

/// What a finished (or aborted) run left on disk and in memory.
#[derive(Debug)]
pub struct RunResult {
    pub out_dir: PathBuf,
    pub iterations: u64,
    pub global_steps: u64,
    /// Trailing-window mean episodic return at the end of training.
    pub final_return: Option<f64>,
}

/// Trailing-100 completed-episode return tracker.
struct EpisodeTracker {
    running: Vec<f64>,
    window: VecDeque<f64>,
}

impl EpisodeTracker {
    fn new(num_envs: usize) -> Self {
        EpisodeTracker {
            running: vec![0.0; num_envs],
            window: VecDeque::with_capacity(100),
        }
    }

    fn record(&mut self, env_idx: usize, reward: f64, done: bool) {
        self.running[env_idx] += reward;
        if done {
            if self.window.len() == 100 {
                self.window.pop_front();
            }
            self.window.push_back(self.running[env_idx]);
            self.running[env_idx] = 0.0;
        }
    }

    fn record_rollout(&mut self, buf: &RolloutBuffer) {
        for t in 0..buf.l {
            for i in 0..buf.e {
                self.record(i, buf.rewards[t][i], buf.done[t][i]);
            }
        }
    }

    fn mean(&self) -> Option<f64> {
        if self.window.is_empty() {
            None
        } else {
            Some(self.window.iter().sum::<f64>() / self.window.len() as f64)
        }
    }

    fn count(&self) -> u64 {
        self.window.len() as u64
    }
}

struct RunContext<'a> {
    cfg: &'a ExperimentConfig,
    writer: MetricsWriter,
    episodes: EpisodeTracker,
    iteration: u64,
    global_step: u64,
}

impl<'a> RunContext<'a> {
    fn base_row(&self) -> MetricsRow {
        MetricsRow {
            run_id: self.cfg.run_id.clone(),
            seed: self.cfg.seed,
            iteration: self.iteration,
            global_step: self.global_step,
            episodic_return_mean: self.episodes.mean(),
            episodic_return_count: self.episodes.count(),
            ..Default::default()
        }
    }

    fn emit(&mut self, mut row: MetricsRow, started: Instant) -> Result<()> {
        if self.cfg.record_wall_time {
            row.wall_ms = Some(started.elapsed().as_secs_f64() * 1e3);
        }
        self.writer.append(&row)
    }
}

/// Run one experiment to completion. Writes metrics.csv (flushed even on
/// a training-divergence abort), config.resolved, and the final network
/// checkpoint(s) into `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunResult> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let resolved = cfg.out_dir.join("config.resolved");
    std::fs::write(&resolved, cfg.to_resolved_string()).map_err(|e| Error::io(&resolved, e))?;
    let writer = MetricsWriter::create(&cfg.out_dir.join("metrics.csv"))?;

    let mut ctx = RunContext {
        cfg,
        writer,
        episodes: EpisodeTracker::new(cfg.num_envs),
        iteration: 0,
        global_step: 0,
    };

    let outcome = match cfg.mode {
        Mode::PqnFixed | Mode::PqnAbs | Mode::PqnGns => run_pqn(&mut ctx),
        Mode::PpoFixed | Mode::PpoArs => run_ppo(&mut ctx),
        Mode::DqnReplayFixed | Mode::DqnReplayAbs => run_replay(&mut ctx),
    };
    // Flush-before-exit: no row is lost even when the loop aborts.
    ctx.writer.flush()?;
    outcome?;

    Ok(RunResult {
        out_dir: cfg.out_dir.clone(),
        iterations: ctx.iteration,
        global_steps: ctx.global_step,
        final_return: ctx.episodes.mean(),
    })
}

fn run_pqn(ctx: &mut RunContext) -> Result<()> {
    let cfg = ctx.cfg;
    let mut env = make_env(&cfg.env, cfg.num_envs, cfg.seed)?;
    let n_actions = discrete_actions(&env);
    let mut init_rng = stream(cfg.seed, "init");
    let mut params = Mlp::init(env.spec().obs_dim, &cfg.hidden_sizes, n_actions, &mut init_rng);
    let mut opt = AdamState::new(params.param_count());
    let mut shuffle_rng = stream(cfg.seed, "shuffle");
    let mut sched_rng = stream(cfg.seed, "scheduler");
    let mut policy_rng = stream(cfg.seed, "policy-sample");

    let fixed_len = cfg.l_base.clamp(cfg.l_min, cfg.l_max);
    let mut abs = (cfg.mode == Mode::PqnAbs).then(|| {
        AbsState::new(
            cfg.l_min,
            cfg.l_max,
            cfg.delta_min,
            cfg.delta_max,
            cfg.adapt_every,
            cfg.window_size,
            cfg.beta_ema,
            cfg.ref_batch,
            params.clone(),
        )
    });

    let mut length = match cfg.mode {
        Mode::PqnFixed => fixed_len,
        Mode::PqnAbs => cfg.l_min, // burn-in starts at the minimum
        _ => fixed_len,            // GNS starts from the baseline batch
    };
    let mut epochs = match cfg.mode {
        Mode::PqnAbs => compensated_epochs(cfg.n_epochs_base, length, cfg.l_base),
        _ => cfg.n_epochs_base,
    };

    while ctx.global_step < cfg.total_steps {
        let started = Instant::now();
        let epsilon = epsilon_schedule(
            ctx.global_step,
            cfg.total_steps,
            cfg.eps_start,
            cfg.eps_end,
            cfg.eps_fraction,
        );
        let mut buf = collect_q_rollout(&params, &mut env, length, epsilon, &mut policy_rng)?;
        ctx.episodes.record_rollout(&buf);
        q_lambda_returns(&mut buf, cfg.gamma, cfg.q_lambda);

        let gns_iteration =
            cfg.mode == Mode::PqnGns && (ctx.iteration + 1) % cfg.adapt_every as u64 == 0;
        let (loss, micro) = pqn_update(
            &mut params,
            &mut opt,
            &buf,
            cfg.n_mb,
            epochs,
            cfg.lr,
            cfg.max_grad_norm,
            &mut shuffle_rng,
            gns_iteration,
        )?;

        ctx.iteration += 1;
        ctx.global_step += (length * cfg.num_envs) as u64;

        let mut row = ctx.base_row();
        row.rollout_len = Some(length as u64);
        row.batch_size = (length * cfg.num_envs) as u64;
        row.epochs_used = Some(epochs as u64);
        row.epsilon = Some(epsilon);
        row.loss_mean = Some(loss);

        match cfg.mode {
            Mode::PqnAbs => {
                let state = abs.as_mut().expect("abs state exists in pqn-abs");
                let (decision, next_epochs) = abs_tick(
                    state,
                    &params,
                    &buf.flat_obs(),
                    cfg.n_epochs_base,
                    cfg.l_base,
                    &mut sched_rng,
                );
                row.divergence_raw = decision.raw;
                row.divergence_smoothed = decision.smoothed;
                length = decision.length;
                epochs = next_epochs;
            }
            Mode::PqnGns => {
                if gns_iteration {
                    let micro_size = length * cfg.num_envs / cfg.n_mb;
                    let batch = length * cfg.num_envs;
                    let est = gns_estimate(&micro, micro_size, batch);
                    row.gns_value = est.b_simple;
                    let b_new = gns_target_batch(
                        &est,
                        cfg.num_envs * cfg.l_min,
                        cfg.num_envs * cfg.l_max,
                        batch,
                    );
                    length = ((b_new as f64 / cfg.num_envs as f64).round() as usize)
                        .clamp(cfg.l_min, cfg.l_max);
                }
            }
            _ => {}
        }
        ctx.emit(row, started)?;
    }

    save_checkpoint(&cfg.out_dir.join("checkpoint.bin"), &params)?;
    Ok(())
}

fn run_ppo(ctx: &mut RunContext) -> Result<()> {
    let cfg = ctx.cfg;
    let mut env = make_env(&cfg.env, cfg.num_envs, cfg.seed)?;
    let act_dim = match env.spec().action_kind {
        crate::env::ActionKind::Continuous { dim, .. } => dim,
        _ => unreachable!("config validation guarantees a continuous env"),
    };
    let mut init_rng = stream(cfg.seed, "init");
    let mut policy = GaussianPolicy::new(env.spec().obs_dim, &cfg.hidden_sizes, act_dim, &mut init_rng);
    let mut value = Mlp::init(env.spec().obs_dim, &cfg.hidden_sizes, 1, &mut init_rng);
    let mut opt_policy = AdamState::new(policy.param_count());
    let mut opt_value = AdamState::new(value.param_count());
    let mut shuffle_rng = stream(cfg.seed, "shuffle");
    let mut sched_rng = stream(cfg.seed, "scheduler");
    let mut policy_rng = stream(cfg.seed, "policy-sample");

    let fixed_total = cfg.l_base.clamp(cfg.l_min, cfg.l_max);
    let mut ars = (cfg.mode == Mode::PpoArs).then(|| {
        AbsState::new(
            cfg.l_min,
            cfg.l_max,
            cfg.delta_min,
            cfg.delta_max,
            cfg.adapt_every,
            cfg.window_size,
            cfg.beta_ema,
            cfg.ref_batch,
            policy.clone(),
        )
    });
    let mut total_len = match cfg.mode {
        Mode::PpoArs => cfg.l_min,
        _ => fixed_total,
    };

    let update_cfg = PpoUpdateCfg {
        clip: cfg.clip,
        vf_coef: cfg.vf_coef,
        ent_coef: cfg.ent_coef,
        n_mb: cfg.n_mb,
        n_epochs: cfg.n_epochs_base,
        lr: cfg.lr,
        max_norm: cfg.max_grad_norm,
    };

    while ctx.global_step < cfg.total_steps {
        let started = Instant::now();
        let per_env = cfg.per_env_len(total_len);
        let buf = collect_gaussian_rollout(&policy, &value, &mut env, per_env, &mut policy_rng)?;
        ctx.episodes.record_rollout(&buf);
        let adv = gae(&buf, cfg.gamma, cfg.gae_lambda);
        let stats = ppo_update(
            &mut policy,
            &mut value,
            &mut opt_policy,
            &mut opt_value,
            &buf,
            &adv,
            &update_cfg,
            &mut shuffle_rng,
        )?;

        ctx.iteration += 1;
        ctx.global_step += (per_env * cfg.num_envs) as u64;

        let mut row = ctx.base_row();
        row.rollout_len = Some(total_len as u64);
        row.batch_size = (per_env * cfg.num_envs) as u64;
        row.epochs_used = Some(cfg.n_epochs_base as u64);
        row.loss_mean = Some(stats.policy_loss + cfg.vf_coef * stats.value_loss);

        if cfg.mode == Mode::PpoArs {
            let state = ars.as_mut().expect("ars state exists in ppo-ars");
            let decision: TickDecision = ars_tick(state, &policy, &buf.flat_obs(), &mut sched_rng);
            row.divergence_raw = decision.raw;
            row.divergence_smoothed = decision.smoothed;
            total_len = decision.length;
        }
        ctx.emit(row, started)?;
    }

    save_checkpoint(&cfg.out_dir.join("checkpoint.bin"), &policy.mean)?;
    save_checkpoint(&cfg.out_dir.join("value.bin"), &value)?;
    Ok(())
}

fn run_replay(ctx: &mut RunContext) -> Result<()> {
    let cfg = ctx.cfg;
    let mut env = make_env(&cfg.env, cfg.num_envs, cfg.seed)?;
    let n_actions = discrete_actions(&env);
    let mut init_rng = stream(cfg.seed, "init");
    let mut params = Mlp::init(env.spec().obs_dim, &cfg.hidden_sizes, n_actions, &mut init_rng);
    let mut target = params.clone();
    let mut opt = AdamState::new(params.param_count());
    let mut shuffle_rng = stream(cfg.seed, "shuffle");
    let mut sched_rng = stream(cfg.seed, "scheduler");
    let mut policy_rng = stream(cfg.seed, "policy-sample");

    let mut rb = ReplayBuffer::new(cfg.replay_capacity);
    let mut abs = (cfg.mode == Mode::DqnReplayAbs).then(|| {
        AbsState::new(
            cfg.replay_batch_min,
            cfg.replay_batch_max,
            cfg.delta_min,
            cfg.delta_max,
            cfg.adapt_every,
            cfg.window_size,
            cfg.beta_ema,
            cfg.ref_batch,
            params.clone(),
        )
    });
    let mut batch = match cfg.mode {
        Mode::DqnReplayAbs => cfg.replay_batch_min,
        _ => cfg.replay_batch.clamp(cfg.replay_batch_min, cfg.replay_batch_max),
    };

    while ctx.global_step < cfg.total_steps {
        let started = Instant::now();
        let epsilon = epsilon_schedule(
            ctx.global_step,
            cfg.total_steps,
            cfg.eps_start,
            cfg.eps_end,
            cfg.eps_fraction,
        );
        // One environment step per env, then one gradient step.
        let obs = env.observe();
        let q = params.forward(&obs);
        let actions: Vec<Action> = (0..cfg.num_envs)
            .map(|i| {
                Action::Discrete(if policy_rng.gen::<f64>() < epsilon {
                    policy_rng.gen_range(0..n_actions)
                } else {
                    argmax(q.row(i))
                })
            })
            .collect();
        let step = env.step_all(&actions)?;
        for i in 0..cfg.num_envs {
            ctx.episodes.record(i, step.reward[i], step.done[i]);
            let a = match actions[i] {
                Action::Discrete(a) => a,
                _ => unreachable!(),
            };
            rb.push(Transition {
                obs: obs.row(i).to_vec(),
                action: a,
                reward: step.reward[i],
                // Bootstrap from the pre-reset state; time-limit cuts keep
                // bootstrapping (done = terminal only).
                next_obs: step.final_obs.row(i).to_vec(),
                done: step.done[i] && !step.truncated[i],
            });
        }

        let loss = replay_dqn_update(
            &mut params,
            &target,
            &mut opt,
            &rb,
            batch,
            cfg.gamma,
            cfg.lr,
            cfg.max_grad_norm,
            &mut shuffle_rng,
        )?;

        ctx.iteration += 1;
        ctx.global_step += cfg.num_envs as u64;
        if ctx.iteration % cfg.target_update as u64 == 0 {
            target = params.clone();
        }

        let mut row = ctx.base_row();
        row.batch_size = batch as u64;
        row.epsilon = Some(epsilon);
        row.loss_mean = loss;

        if cfg.mode == Mode::DqnReplayAbs && !rb.is_empty() {
            let state = abs.as_mut().expect("abs state exists in dqn-replay-abs");
            let decision = adapt_replay_batch(state, &params, &rb, &mut sched_rng);
            row.divergence_raw = decision.raw;
            row.divergence_smoothed = decision.smoothed;
            batch = decision.length;
        }
        ctx.emit(row, started)?;
    }

    save_checkpoint(&cfg.out_dir.join("checkpoint.bin"), &params)?;
    Ok(())
}

fn discrete_actions(env: &EnvBatch) -> usize {
    match env.spec().action_kind {
        crate::env::ActionKind::Discrete { n } => n,
        _ => unreachable!("config validation guarantees a discrete env"),
    }
}
