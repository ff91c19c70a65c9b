//! A fast oracle battery runnable from the CLI (`selftest`): independent
//! brute-force recomputations of the core numerics. Each check either
//! passes silently or fails with a description.

use crate::agents::GaussianPolicy;
use crate::error::{Error, Result};
use crate::math::{argmax, Matrix};
use crate::net::Mlp;
use crate::rng::stream;
use crate::scheduler::{
    behavioral_divergence, compensated_epochs, gns_estimate, interp_factor,
    kl_gaussian_divergence, target_length,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Check = (&'static str, fn() -> Result<()>);

const CHECKS: &[Check] = &[
    ("divergence-brute-force-oracle", check_divergence_oracle),
    ("schedule-endpoints-and-midpoint", check_schedule_shape),
    ("epoch-compensation", check_epoch_compensation),
    ("gns-hand-values", check_gns_hand_values),
    ("gradient-finite-differences", check_gradients),
    ("gaussian-kl-monte-carlo", check_kl_monte_carlo),
    ("rng-stream-separation", check_rng_streams),
];

/// Run every check; returns the pass report or the first failure.
pub fn run_selftest() -> Result<String> {
    let mut report = String::new();
    for (name, check) in CHECKS {
        check().map_err(|e| Error::Contract(format!("selftest '{name}' failed: {e}")))?;
        report.push_str(&format!("ok {name}\n"));
    }
    report.push_str(&format!("{} checks passed\n", CHECKS.len()));
    Ok(report)
}

fn fail(msg: String) -> Result<()> {
    Err(Error::Contract(msg))
}

/// Random small Q-nets vs a per-state argmax loop, exact match required.
fn check_divergence_oracle() -> Result<()> {
    let mut rng = stream(101, "selftest/divergence");
    for trial in 0..200 {
        let n_actions = rng.gen_range(2..6);
        let obs_dim = rng.gen_range(1..5);
        let m = rng.gen_range(1..40);
        let a = Mlp::init(obs_dim, &[8], n_actions, &mut rng);
        let b = Mlp::init(obs_dim, &[8], n_actions, &mut rng);
        let mut obs = Matrix::zeros(m, obs_dim);
        for r in 0..m {
            for c in 0..obs_dim {
                obs.set(r, c, rng.gen_range(-1.0..1.0));
            }
        }
        let got = behavioral_divergence(&a, &b, &obs);
        let qa = a.forward(&obs);
        let qb = b.forward(&obs);
        let mismatches = (0..m).filter(|&i| argmax(qa.row(i)) != argmax(qb.row(i))).count();
        let want = mismatches as f64 / m as f64;
        if got != want {
            return fail(format!("trial {trial}: got {got}, oracle {want}"));
        }
    }
    Ok(())
}

fn check_schedule_shape() -> Result<()> {
    let cases = [
        (0.95, 16.0),
        (0.99, 16.0),
        (0.05, 64.0),
        (0.01, 64.0),
        ((0.05f64 * 0.95).sqrt(), 40.0),
    ];
    for (delta, want) in cases {
        let l = target_length(interp_factor(delta, 0.05, 0.95), 16, 64);
        if (l - want).abs() > 1e-9 {
            return fail(format!("δ={delta}: L={l}, want {want}"));
        }
    }
    // Strict monotone decrease inside the thresholds.
    let mut prev = f64::INFINITY;
    for i in 1..100 {
        let d = 0.05 + 0.9 * i as f64 / 100.0;
        let l = target_length(interp_factor(d, 0.05, 0.95), 16, 64);
        if l >= prev {
            return fail(format!("not strictly decreasing at δ={d}"));
        }
        prev = l;
    }
    Ok(())
}

fn check_epoch_compensation() -> Result<()> {
    for (n, l, base, want) in [(2, 64, 32, 4), (2, 32, 32, 2), (2, 16, 32, 1), (2, 48, 32, 3)] {
        let got = compensated_epochs(n, l, base);
        if got != want {
            return fail(format!("({n}, {l}, {base}): got {got}, want {want}"));
        }
    }
    Ok(())
}

fn check_gns_hand_values() -> Result<()> {
    let est = gns_estimate(&[vec![2.0, 0.0], vec![1.0, 0.0]], 4, 8);
    if (est.noise - 2.0).abs() > 1e-12
        || (est.signal - 2.0).abs() > 1e-12
        || est.b_simple != Some(1.0)
    {
        return fail(format!("hand case: {est:?}"));
    }
    let zero = gns_estimate(&[vec![3.0, 4.0], vec![3.0, 4.0]], 2, 4);
    if zero.b_simple != Some(0.0) {
        return fail(format!("zero-noise case: {zero:?}"));
    }
    let degenerate = gns_estimate(&[vec![1.0, 0.0], vec![0.0, 1.0]], 1, 2);
    if !degenerate.is_degenerate() {
        return fail(format!("S=0 case not degenerate: {degenerate:?}"));
    }
    Ok(())
}

/// Backward pass vs central finite differences on random small nets.
fn check_gradients() -> Result<()> {
    let mut rng = stream(202, "selftest/grad");
    for trial in 0..10 {
        let obs_dim = rng.gen_range(1..4);
        let out_dim = rng.gen_range(1..4);
        let mut net = Mlp::init(obs_dim, &[5, 4], out_dim, &mut rng);
        let rows = rng.gen_range(1..4);
        let mut x = Matrix::zeros(rows, obs_dim);
        for r in 0..rows {
            for c in 0..obs_dim {
                x.set(r, c, rng.gen_range(-1.0..1.0));
            }
        }
        let mut up = Matrix::zeros(rows, out_dim);
        for r in 0..rows {
            for c in 0..out_dim {
                up.set(r, c, rng.gen_range(-1.0..1.0));
            }
        }
        let analytic = net.backward(&x, &up);
        let mut flat = net.flatten();
        let h = 1e-5;
        for pi in (0..flat.len()).step_by(7) {
            let orig = flat[pi];
            flat[pi] = orig + h;
            net.unflatten_from(&flat);
            let plus = weighted_sum(&net.forward(&x), &up);
            flat[pi] = orig - h;
            net.unflatten_from(&flat);
            let minus = weighted_sum(&net.forward(&x), &up);
            flat[pi] = orig;
            net.unflatten_from(&flat);
            let fd = (plus - minus) / (2.0 * h);
            let rel = (analytic[pi] - fd).abs() / analytic[pi].abs().max(fd.abs()).max(1e-4);
            if rel > 1e-4 {
                return fail(format!(
                    "trial {trial} param {pi}: analytic {}, fd {fd}, rel {rel}",
                    analytic[pi]
                ));
            }
        }
    }
    Ok(())
}

fn weighted_sum(y: &Matrix, up: &Matrix) -> f64 {
    y.data.iter().zip(&up.data).map(|(a, b)| a * b).sum()
}

/// Closed-form Gaussian KL vs Monte-Carlo E[ln p_new − ln p_old].
fn check_kl_monte_carlo() -> Result<()> {
    let mut rng = stream(303, "selftest/kl");
    for trial in 0..3 {
        let (p_new, p_old) = random_policy_pair(&mut rng);
        let obs = Matrix::zeros(4, 2);
        let closed = kl_gaussian_divergence(&p_new, &p_old, &obs);
        let mc = monte_carlo_kl(&p_new, &p_old, 200_000, &mut rng);
        let rel = (closed - mc).abs() / closed.abs().max(1e-12);
        if rel > 0.02 {
            return fail(format!("trial {trial}: closed {closed}, mc {mc}, rel {rel}"));
        }
    }
    Ok(())
}

/// A random policy pair whose means differ enough that the KL is well
/// away from zero (keeps the Monte-Carlo relative error meaningful).
pub fn random_policy_pair(rng: &mut ChaCha8Rng) -> (GaussianPolicy, GaussianPolicy) {
    let act_dim = rng.gen_range(1..4);
    let make = |rng: &mut ChaCha8Rng, shift: f64| {
        let mut p = GaussianPolicy::new(2, &[], act_dim, rng);
        p.mean = Mlp::zeros(2, &[], act_dim);
        for k in 0..act_dim {
            p.mean.out_b[k] = rng.gen_range(-0.5..0.5) + shift;
            p.log_std[k] = rng.gen_range(-0.5..0.5);
        }
        p
    };
    let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
    let shift = sign * rng.gen_range(0.8..1.5);
    let p_old = make(rng, 0.0);
    let p_new = make(rng, shift);
    (p_new, p_old)
}

/// MC estimate of KL(new ‖ old) for constant-mean policies.
pub fn monte_carlo_kl(
    p_new: &GaussianPolicy,
    p_old: &GaussianPolicy,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let d = p_new.act_dim();
    let zero_obs = Matrix::zeros(1, p_new.mean.obs_dim);
    let mu_new = p_new.mean.forward(&zero_obs);
    let mu_old = p_old.mean.forward(&zero_obs);
    let mut total = 0.0;
    let mut a = vec![0.0; d];
    for _ in 0..samples {
        for (k, ak) in a.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            *ak = mu_new.get(0, k) + p_new.log_std[k].exp() * z;
        }
        total += p_new.log_prob_row(mu_new.row(0), &a) - p_old.log_prob_row(mu_old.row(0), &a);
    }
    total / samples as f64
}

fn check_rng_streams() -> Result<()> {
    let labels = ["env/0", "init", "shuffle", "scheduler", "policy-sample"];
    let mut firsts = Vec::new();
    for label in labels {
        let mut a = stream(7, label);
        let mut b = stream(7, label);
        let va: u64 = a.gen();
        if va != b.gen::<u64>() {
            return fail(format!("stream '{label}' not reproducible"));
        }
        firsts.push(va);
    }
    firsts.sort_unstable();
    firsts.dedup();
    if firsts.len() != labels.len() {
        return fail("labeled streams collide".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_battery_passes() {
        let report = run_selftest().unwrap();
        assert!(report.contains("7 checks passed"));
    }
}
