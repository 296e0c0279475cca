//! Release acceptance gate.
//!
//! One test per criterion; each prints a single `ACCEPTANCE C<k> <name>:
//! PASS/FAIL` verdict line (visible with `--nocapture`, and in the captured
//! output of any failure) and then asserts. Tolerances are pinned as named
//! constants below. Criteria 6 and 7 share one trained agent through a
//! process-wide cell so the expensive training run happens once.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use uavpower::agents::nn::{mat_zeros, Activation, Mat, Mlp, MlpSpec};
use uavpower::agents::sac::{critic_losses_on_tape, policy_loss_on_tape};
use uavpower::agents::{train, SacAgent, SacParams};
use uavpower::channel::ChannelParams;
use uavpower::env::{ScenarioConfig, UavEnv};
use uavpower::outage::{outage_mc, user_outage, HypoExp, Method};
use uavpower_cli::run::{evaluate_policy, recompute_epsilons, run_episode, EpisodeTrace, Policy};
use uavpower_cli::stats::{mean, zone_cdfs};
use uavpower_testkit as testkit;

/// C1: Monte Carlo cross-check sample count per rate set.
const MC_SAMPLES: u64 = 10_000_000;
/// C1: allowed deviation in binomial standard errors.
const MC_SIGMAS: f64 = 4.0;
/// C1: wall-clock budget for the whole Monte Carlo sweep.
const MC_TIME_BUDGET: Duration = Duration::from_secs(120);
/// C2: relative tolerance against the high-precision oracle.
const SMALL_EPS_REL: f64 = 1e-6;
/// C3: relative tolerance for the invariance identities.
const INVARIANCE_REL: f64 = 1e-9;
/// C5: relative tolerance for gradients against central finite differences.
const GRAD_REL: f64 = 1e-4;
/// C5: toy-task convergence tolerance, step budget, and time budget.
const TOY_TOL: f64 = 0.05;
const TOY_BUDGET: u64 = 20_000;
const TOY_TIME_BUDGET: Duration = Duration::from_secs(300);
/// C6: environment-step training budget (hard cap and the preset actually
/// used), wall-clock budget, per-zone compliance floor, and the overall mean
/// power-fraction ceiling for the trained policy.
const TRAIN_BUDGET_CAP: u64 = 300_000;
const TRAIN_BUDGET: u64 = 120_000;
const TRAIN_TIME_BUDGET: Duration = Duration::from_secs(3_600);
const ZONE_COMPLIANCE_FLOOR: f64 = 0.95;
const OVERALL_FRACTION_CAP: f64 = 0.5;
/// C6: Full Power headroom — its outage must sit at least this factor below
/// every threshold it is compared against.
const FULL_POWER_MARGIN: f64 = 1e-3;
/// C7: required ratio between outside-zone and inside-zone median outage.
const MEDIAN_GAP: f64 = 10.0;
/// C8: relative tolerance for recomputing logged outage values.
const RECOMPUTE_REL: f64 = 1e-12;

/// Print the verdict line for criterion `k` and fail the test with the
/// collected evidence if anything went wrong.
fn verdict(k: u32, name: &str, failures: &[String]) {
    let ok = failures.is_empty();
    println!("ACCEPTANCE C{k} {name}: {}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion C{k} ({name}) failed:\n{}", failures.join("\n"));
}

/// Symmetric relative difference with a floor that treats two exact zeros as
/// equal.
fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Log-uniform rates over six decades, sorted ascending, with every adjacent
/// ratio at least `min_ratio` (hence every pairwise ratio too).
fn random_rates<R: Rng + ?Sized>(rng: &mut R, m: usize, min_ratio: f64) -> Vec<f64> {
    loop {
        let mut rates: Vec<f64> = (0..m).map(|_| 10f64.powf(rng.gen_range(-3.0..3.0))).collect();
        rates.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        if rates.windows(2).all(|w| w[1] / w[0] >= min_ratio) {
            return rates;
        }
    }
}

/// Threshold whose outage is close to `target`, found by bisection on the
/// strictly increasing outage function.
fn threshold_for(d: &HypoExp, target: f64) -> f64 {
    let mut hi: f64 = d.rates().iter().map(|r| 1.0 / r).sum();
    while d.outage(hi).expect("outage").epsilon < target {
        hi *= 2.0;
    }
    let mut lo = 0.0f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if d.outage(mid).expect("outage").epsilon < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn c1_monte_carlo_agreement() {
    let start = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(101);
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for trial in 0..200 {
        let m = rng.gen_range(2..=6);
        let d = HypoExp::new(random_rates(&mut rng, m, 1.0001)).expect("rates");
        let target = 10f64.powf(rng.gen_range((1.1e-3f64).log10()..(0.9f64).log10()));
        let s = threshold_for(&d, target);
        let eps = d.outage(s).expect("outage").epsilon;
        if !(1e-3..=0.99).contains(&eps) {
            failures.push(format!("trial {trial}: outage {eps} escaped the sweep range"));
            continue;
        }
        let mc = outage_mc(&d, s, MC_SAMPLES, &mut rng).expect("monte carlo");
        let sigmas = (eps - mc.estimate).abs() / mc.std_err;
        worst = worst.max(sigmas);
        if sigmas > MC_SIGMAS {
            failures.push(format!(
                "trial {trial}: analytic {eps} vs Monte Carlo {} +/- {} ({sigmas:.2} sigma)",
                mc.estimate, mc.std_err
            ));
        }
    }
    let elapsed = start.elapsed();
    eprintln!("C1: worst deviation {worst:.2} sigma over 200 rate sets in {elapsed:.1?}");
    if elapsed > MC_TIME_BUDGET {
        failures.push(format!("runtime {elapsed:?} exceeds {MC_TIME_BUDGET:?}"));
    }
    verdict(1, "analytic outage within 4 sigma of 1e7-sample Monte Carlo", &failures);
}

#[test]
fn c2_small_epsilon_precision() {
    let mut rng = ChaCha12Rng::seed_from_u64(202);
    let mut failures = Vec::new();
    let mut worst = 0.0f64;

    // Well-separated rate sets, outage levels down to 1e-12, against the
    // high-precision fixed-point oracle.
    for trial in 0..120usize {
        let m = rng.gen_range(2..=6);
        let rates = random_rates(&mut rng, m, 1.01);
        let d = HypoExp::new(rates.clone()).expect("rates");
        let exp10 = if trial < 11 {
            -12.0 + trial as f64 // fixed sweep 1e-12 ..= 1e-2
        } else {
            rng.gen_range(-12.0..-2.0)
        };
        let s = threshold_for(&d, 10f64.powf(exp10));
        let mine = d.outage(s).expect("outage").epsilon;
        let oracle = testkit::hypoexp_outage(&rates, s).to_f64();
        let re = rel_diff(mine, oracle);
        worst = worst.max(re);
        if re > SMALL_EPS_REL {
            failures.push(format!(
                "trial {trial}: m={m} eps~1e{exp10:.0}: {mine} vs oracle {oracle} (rel {re:.3e})"
            ));
        }
    }

    // Near-degenerate rates: ratio 1 + 1e-8 must route through the stable
    // fallback and agree with the equal-rate (Erlang) limit.
    for (m, base) in [(2usize, 1.0f64), (3, 0.37), (4, 12.0), (5, 2.0e3), (6, 0.004)] {
        let rates: Vec<f64> = (0..m).map(|k| base * (1.0 + 1e-8f64).powi(k as i32)).collect();
        let d = HypoExp::new(rates).expect("near-tied rates are still distinct");
        for exp10 in [-10.0, -6.0, -3.0, -1.0] {
            let s = threshold_for(&d, 10f64.powf(exp10));
            let r = d.outage(s).expect("outage");
            if r.method != Method::StableFallback {
                failures.push(format!(
                    "m={m} base={base} eps~1e{exp10:.0}: expected the stable fallback, got {:?}",
                    r.method
                ));
            }
            let erlang = testkit::erlang_cdf(m, base, s).to_f64();
            let re = rel_diff(r.epsilon, erlang);
            worst = worst.max(re);
            if re > SMALL_EPS_REL {
                failures.push(format!(
                    "m={m} base={base} eps~1e{exp10:.0}: {} vs Erlang limit {erlang} (rel {re:.3e})",
                    r.epsilon
                ));
            }
        }
    }
    eprintln!("C2: worst relative error {worst:.3e}");
    verdict(2, "small-outage evaluation matches the high-precision oracle", &failures);
}

#[test]
fn c3_invariance_suite() {
    let mut rng = ChaCha12Rng::seed_from_u64(303);
    let mut failures = Vec::new();

    for trial in 0..200usize {
        let m = rng.gen_range(2..=6);
        let rates = random_rates(&mut rng, m, 1.05);
        let d = HypoExp::new(rates.clone()).expect("rates");

        let coeff_sum: f64 = d.coefficients().iter().sum();
        if (coeff_sum - 1.0).abs() > INVARIANCE_REL {
            failures.push(format!("trial {trial}: coefficient sum {coeff_sum} != 1"));
        }

        let target = 10f64.powf(rng.gen_range(-6.0..(0.9f64).log10()));
        let s = threshold_for(&d, target);
        let eps = d.outage(s).expect("outage").epsilon;

        let c = 10f64.powf(rng.gen_range(-3.0..3.0));
        let scaled = HypoExp::new(rates.iter().map(|r| r / c).collect()).expect("scaled");
        let eps_scaled = scaled.outage(c * s).expect("outage").epsilon;
        let re = rel_diff(eps, eps_scaled);
        if re > INVARIANCE_REL {
            failures.push(format!(
                "trial {trial}: scaling c={c}: {eps} vs {eps_scaled} (rel {re:.3e})"
            ));
        }

        let mut shuffled = rates.clone();
        shuffled.shuffle(&mut rng);
        let eps_perm = HypoExp::new(shuffled).expect("perm").outage(s).expect("outage").epsilon;
        if eps_perm.to_bits() != eps.to_bits() {
            failures.push(format!("trial {trial}: permutation changed {eps} to {eps_perm}"));
        }

        let eps_up = d.outage(s * 1.01).expect("outage").epsilon;
        let eps_down = d.outage(s * 0.99).expect("outage").epsilon;
        if !(eps_down < eps && eps < eps_up) {
            failures.push(format!(
                "trial {trial}: outage not strictly increasing in s: {eps_down} {eps} {eps_up}"
            ));
        }
    }

    // Strict monotonicity in each per-link power through the user-facing
    // composition (rate build plus outage).
    let channel = ChannelParams::default();
    let mut checked = 0usize;
    'outer: for _ in 0..200usize {
        if checked >= 50 {
            break;
        }
        let k = rng.gen_range(2..=6);
        let gains: Vec<f64> = (0..k).map(|_| 10f64.powf(rng.gen_range(-2.0..2.0))).collect();
        let powers: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
        let rates: Vec<f64> = gains.iter().zip(&powers).map(|(g, p)| 1.0 / (g * p)).collect();
        let mut sorted = rates.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        if sorted.windows(2).any(|w| w[1] / w[0] < 1.0 + 1e-6) {
            continue; // keep clear of the tie-handling regime
        }
        let d = HypoExp::new(rates).expect("link rates");
        let sens = threshold_for(&d, 10f64.powf(rng.gen_range(-6.0..-0.3)));
        let base = user_outage(&powers, &gains, sens, channel.rate_dynamic_range)
            .expect("base outage")
            .epsilon;
        if !(1e-14..=0.9).contains(&base) {
            continue;
        }
        for j in 0..k {
            let mut bumped = powers.clone();
            bumped[j] *= 1.05;
            let eps_bumped = user_outage(&bumped, &gains, sens, channel.rate_dynamic_range)
                .expect("bumped outage")
                .epsilon;
            if !(eps_bumped < base) {
                failures.push(format!(
                    "power bump on link {j} did not strictly reduce outage: {base} -> {eps_bumped}"
                ));
                continue 'outer;
            }
        }
        checked += 1;
    }
    if checked < 50 {
        failures.push(format!("only {checked} power-monotonicity instances checked"));
    }

    verdict(3, "coefficient, scaling, permutation, and monotonicity identities", &failures);
}

#[test]
fn c4_baseline_exactness() {
    let mut failures = Vec::new();
    for (name, k) in [("single_user_scaled", 6usize), ("multi_user", 19)] {
        let cfg = ScenarioConfig::builtin(name).expect("scenario");
        let mut env = UavEnv::new(cfg.clone(), 5).expect("env");
        let share = 1.0 / k as f64;

        let closest = run_episode(&Policy::Closest, &mut env, 5).expect("closest episode");
        for step in &closest.steps {
            if step.power_fraction != share
                || step.user_fractions.iter().any(|&f| f != share)
            {
                failures.push(format!(
                    "{name} t={}: Closest fraction {} != 1/{k} exactly",
                    step.t, step.power_fraction
                ));
                break;
            }
        }

        let full = run_episode(&Policy::FullPower, &mut env, 5).expect("full-power episode");
        for step in &full.steps {
            if step.power_fraction != 1.0 || step.user_fractions.iter().any(|&f| f != 1.0) {
                failures.push(format!(
                    "{name} t={}: Full Power fraction {} != 1 exactly",
                    step.t, step.power_fraction
                ));
                break;
            }
        }
    }
    verdict(4, "baseline power fractions are exact (1/K and 1)", &failures);
}

/// Central finite difference of `loss` with respect to every parameter entry
/// of `net`, compared against the tape gradients in `grads`; returns how many
/// entries were comparable.
fn gradcheck_net(
    net: &mut Mlp,
    grads: &[Mat],
    mut loss: impl FnMut(&Mlp) -> f64,
    label: &str,
    failures: &mut Vec<String>,
) -> usize {
    let mut checked = 0usize;
    for (pi, grad) in grads.iter().enumerate() {
        for idx in 0..grad.as_slice().len() {
            let w = net.params()[pi].as_slice()[idx];
            let h = 1e-5 * w.abs().max(1.0);
            net.params_mut()[pi].as_mut_slice()[idx] = w + h;
            let up = loss(net);
            net.params_mut()[pi].as_mut_slice()[idx] = w - h;
            let down = loss(net);
            net.params_mut()[pi].as_mut_slice()[idx] = w;
            let fd = (up - down) / (2.0 * h);
            let ag = grad.as_slice()[idx];
            if fd.abs() < 1e-9 && ag.abs() < 1e-9 {
                continue; // both numerically zero
            }
            let re = (fd - ag).abs() / fd.abs().max(ag.abs());
            checked += 1;
            if re > GRAD_REL {
                failures.push(format!(
                    "{label} param {pi} entry {idx}: fd {fd} vs grad {ag} (rel {re:.3e})"
                ));
            }
        }
    }
    checked
}

#[test]
fn c5_sac_machinery() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut rng = ChaCha12Rng::seed_from_u64(505);

    // (a) Production loss gradients against central finite differences on a
    // small smooth (tanh) network.
    let obs_dim = 3usize;
    let act_dim = 2usize;
    let batch = 6usize;
    let policy_spec = MlpSpec {
        inputs: obs_dim,
        hidden: vec![8, 8],
        outputs: 2 * act_dim,
        activation: Activation::Tanh,
    };
    let critic_spec = MlpSpec {
        inputs: obs_dim + act_dim,
        hidden: vec![8, 8],
        outputs: 1,
        activation: Activation::Tanh,
    };
    let policy = Mlp::init(policy_spec, &mut rng);
    let q1 = Mlp::init(critic_spec.clone(), &mut rng);
    let q2 = Mlp::init(critic_spec, &mut rng);

    let mut obs = mat_zeros(batch, obs_dim);
    obs.as_mut_slice().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    let mut xi = mat_zeros(batch, act_dim);
    xi.as_mut_slice().iter_mut().for_each(|v| *v = rng.gen_range(-1.5..1.5));
    let mut q_in = mat_zeros(batch, obs_dim + act_dim);
    q_in.as_mut_slice().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    let mut targets = mat_zeros(batch, 1);
    targets.as_mut_slice().iter_mut().for_each(|v| *v = rng.gen_range(-2.0..2.0));
    let alpha = 0.37;

    let (_, _, g1, g2) = critic_losses_on_tape(&q1, &q2, &q_in, &targets);
    // Each closure re-runs the production tape; only the probed critic's own
    // loss component responds to its parameters.
    let checked_q1 = {
        let mut probe = q1.clone();
        let n = gradcheck_net(
            &mut probe,
            &g1,
            |net| critic_losses_on_tape(net, &q2, &q_in, &targets).0,
            "critic-1",
            &mut failures,
        );
        n
    };
    let checked_q2 = {
        let mut probe = q2.clone();
        let n = gradcheck_net(
            &mut probe,
            &g2,
            |net| critic_losses_on_tape(&q1, net, &q_in, &targets).1,
            "critic-2",
            &mut failures,
        );
        n
    };

    let (_, gp, _) = policy_loss_on_tape(&policy, &q1, &q2, act_dim, &obs, &xi, alpha);
    let checked_policy = {
        let mut probe = policy.clone();
        let n = gradcheck_net(
            &mut probe,
            &gp,
            |net| policy_loss_on_tape(net, &q1, &q2, act_dim, &obs, &xi, alpha).0,
            "policy",
            &mut failures,
        );
        n
    };
    let total_checked = checked_q1 + checked_q2 + checked_policy;
    eprintln!("C5: {total_checked} gradient entries checked against finite differences");
    if total_checked < 200 {
        failures.push(format!("only {total_checked} gradient entries were comparable"));
    }

    // (b) Checkpoint round trip: bit-identical deterministic actions.
    let params = SacParams {
        hidden: vec![16, 16],
        batch_size: 32,
        replay_capacity: 10_000,
        warmup_steps: 200,
        seed: 99,
        ..SacParams::default()
    };
    let mut agent = SacAgent::new(1, 1, params).expect("agent");
    let mut env = ToyEnv { done: false };
    train(&mut env, &mut agent, 1_000, |_, _| Ok(())).expect("short training run");
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("checkpoint.json");
    agent.save(&path).expect("save");
    let mut loaded = SacAgent::load(&path).expect("load");
    for i in 0..20 {
        let x = -1.0 + i as f64 / 10.0;
        let a = agent.act(&[x], true).expect("act");
        let b = loaded.act(&[x], true).expect("act");
        if a[0].to_bits() != b[0].to_bits() {
            failures.push(format!("checkpoint action mismatch at obs {x}: {} vs {}", a[0], b[0]));
        }
    }

    // (c) Toy-task convergence to the analytic optimum at zero.
    let toy_params = SacParams {
        hidden: vec![32, 32],
        batch_size: 64,
        replay_capacity: 20_000,
        warmup_steps: 500,
        seed: 2024,
        ..SacParams::default()
    };
    let mut toy_agent = SacAgent::new(1, 1, toy_params).expect("agent");
    let mut toy_env = ToyEnv { done: false };
    train(&mut toy_env, &mut toy_agent, TOY_BUDGET, |_, _| Ok(())).expect("toy training");
    let settled = toy_agent.act(&[0.0], true).expect("act")[0];
    eprintln!("C5: toy policy settled at {settled:.4}");
    if settled.abs() > TOY_TOL {
        failures.push(format!("toy policy settled at {settled}, outside +/-{TOY_TOL}"));
    }
    let elapsed = start.elapsed();
    if elapsed > TOY_TIME_BUDGET {
        failures.push(format!("runtime {elapsed:?} exceeds {TOY_TIME_BUDGET:?}"));
    }
    verdict(5, "gradients, checkpoint round trip, and toy convergence", &failures);
}

/// One-dimensional bandit: reward `1 - |a|`, optimum at zero.
struct ToyEnv {
    done: bool,
}

impl uavpower::agents::RlEnv for ToyEnv {
    fn reset(&mut self, _seed: u64) -> uavpower::Result<Vec<f64>> {
        self.done = false;
        Ok(vec![0.0])
    }

    fn step(&mut self, action: &[f64]) -> uavpower::Result<(Vec<f64>, f64, bool)> {
        assert!(!self.done);
        self.done = true;
        Ok((vec![0.0], 1.0 - action[0].abs(), true))
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn act_dim(&self) -> usize {
        1
    }
}

/// Everything criteria 6-8 need from the one expensive training run.
struct TrainedBundle {
    scenario: ScenarioConfig,
    sac_traces: Vec<EpisodeTrace>,
    full_traces: Vec<EpisodeTrace>,
    env_steps: u64,
    train_time: Duration,
}

const EVAL_EPISODES: u64 = 10;
const EVAL_SEED: u64 = 900_000;

static TRAINED: OnceLock<TrainedBundle> = OnceLock::new();

fn trained() -> &'static TrainedBundle {
    TRAINED.get_or_init(|| {
        let scenario = ScenarioConfig::builtin("single_user_scaled").expect("scenario");
        let params = SacParams {
            hidden: vec![64, 64],
            batch_size: 128,
            // Deliberately below the step budget: late training then samples
            // only refined behavior instead of stale warmup exploration.
            replay_capacity: 80_000,
            warmup_steps: 1_000,
            update_interval: 1,
            // State transitions here are action-independent (fixed flight
            // path, exogenous fading), so long-horizon bootstrapping only
            // buries the per-step power cost under return variance.  A small
            // discount keeps the critic focused on the immediate consequence
            // of the allocation it is scoring.
            gamma: 0.1,
            // The conventional -act_dim entropy target pins a tanh-squashed
            // policy's means in the linear region, because saturation costs
            // entropy.  Good allocations here sit deep in the squash tails
            // (per-station powers orders of magnitude below the cap), so the
            // temperature must be allowed to anneal much further before the
            // means can follow the power incentive down.
            target_entropy: Some(-48.0),
            seed: 7,
            ..SacParams::default()
        };
        let mut env = UavEnv::new(scenario.clone(), 7).expect("env");
        let mut agent = SacAgent::new(scenario.observation_dim(), scenario.action_dim(), params)
            .expect("agent");
        let t0 = Instant::now();
        let log = train(&mut env, &mut agent, TRAIN_BUDGET, |_, _| Ok(())).expect("training");
        let train_time = t0.elapsed();
        eprintln!(
            "C6: trained {} env steps / {} updates in {train_time:.1?}, final alpha {:.4}",
            log.env_steps, log.updates, log.final_alpha
        );

        let policy = Policy::Sac(Box::new(agent));
        let mut eval_env = UavEnv::new(scenario.clone(), EVAL_SEED).expect("eval env");
        let sac_traces: Vec<EpisodeTrace> = (0..EVAL_EPISODES)
            .map(|j| run_episode(&policy, &mut eval_env, EVAL_SEED + j).expect("sac episode"))
            .collect();
        let full_traces: Vec<EpisodeTrace> = (0..EVAL_EPISODES)
            .map(|j| {
                run_episode(&Policy::FullPower, &mut eval_env, EVAL_SEED + j)
                    .expect("full-power episode")
            })
            .collect();

        // Coarse learned-profile diagnostic: mean power fraction and median
        // outage over tenths of the path.
        let first = &sac_traces[0];
        let n = first.steps.len();
        for tenth in 0..10usize {
            let lo = tenth * n / 10;
            let hi = (tenth + 1) * n / 10;
            let fr: Vec<f64> = sac_traces
                .iter()
                .flat_map(|tr| tr.steps[lo..hi].iter().map(|s| s.power_fraction))
                .collect();
            let mut ep: Vec<f64> = sac_traces
                .iter()
                .flat_map(|tr| tr.steps[lo..hi].iter().flat_map(|s| s.epsilons.clone()))
                .collect();
            ep.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            eprintln!(
                "C6: path tenth {tenth}: mean fraction {:.4}, median outage {:.3e}",
                mean(&fr),
                ep[ep.len() / 2]
            );
        }
        TrainedBundle {
            scenario,
            sac_traces,
            full_traces,
            env_steps: log.env_steps,
            train_time,
        }
    })
}

/// Flattened per-(step, user) samples of an evaluation trace set.
struct ZoneSamples {
    eps: Vec<f64>,
    thresholds: Vec<f64>,
    in_zone: Vec<bool>,
    fractions: Vec<f64>,
}

fn flatten(traces: &[EpisodeTrace]) -> ZoneSamples {
    let mut out = ZoneSamples {
        eps: Vec::new(),
        thresholds: Vec::new(),
        in_zone: Vec::new(),
        fractions: Vec::new(),
    };
    for trace in traces {
        for step in &trace.steps {
            for i in 0..step.epsilons.len() {
                out.eps.push(step.epsilons[i]);
                out.thresholds.push(step.thresholds[i]);
                out.in_zone.push(step.in_zone[i]);
                out.fractions.push(step.user_fractions[i]);
            }
        }
    }
    out
}

fn compliance(samples: &ZoneSamples, zone: bool) -> f64 {
    let mut total = 0usize;
    let mut ok = 0usize;
    for i in 0..samples.eps.len() {
        if samples.in_zone[i] == zone {
            total += 1;
            if samples.eps[i] <= samples.thresholds[i] {
                ok += 1;
            }
        }
    }
    ok as f64 / total as f64
}

fn zone_mean_fraction(samples: &ZoneSamples, zone: bool) -> f64 {
    let picked: Vec<f64> = (0..samples.fractions.len())
        .filter(|&i| samples.in_zone[i] == zone)
        .map(|i| samples.fractions[i])
        .collect();
    mean(&picked)
}

#[test]
fn c6_trained_policy_meets_zone_reliability() {
    let bundle = trained();
    let mut failures = Vec::new();

    if TRAIN_BUDGET > TRAIN_BUDGET_CAP || bundle.env_steps > TRAIN_BUDGET_CAP {
        failures.push(format!(
            "training consumed {} env steps, over the {TRAIN_BUDGET_CAP} cap",
            bundle.env_steps
        ));
    }
    if bundle.train_time > TRAIN_TIME_BUDGET {
        failures.push(format!(
            "training took {:?}, over the {TRAIN_TIME_BUDGET:?} budget",
            bundle.train_time
        ));
    }

    let samples = flatten(&bundle.sac_traces);
    let inside_ok = compliance(&samples, true);
    let outside_ok = compliance(&samples, false);
    let mean_in = zone_mean_fraction(&samples, true);
    let mean_out = zone_mean_fraction(&samples, false);
    let mean_all = mean(&samples.fractions);
    eprintln!(
        "C6: compliance inside {inside_ok:.3} outside {outside_ok:.3}; mean fraction inside \
         {mean_in:.4} outside {mean_out:.4} overall {mean_all:.4}"
    );
    if inside_ok < ZONE_COMPLIANCE_FLOOR {
        failures.push(format!("inside-zone compliance {inside_ok:.3} below {ZONE_COMPLIANCE_FLOOR}"));
    }
    if outside_ok < ZONE_COMPLIANCE_FLOOR {
        failures.push(format!(
            "outside-zone compliance {outside_ok:.3} below {ZONE_COMPLIANCE_FLOOR}"
        ));
    }
    if !(mean_in > mean_out) {
        failures.push(format!(
            "mean power fraction inside ({mean_in:.4}) not strictly above outside ({mean_out:.4})"
        ));
    }
    if !(mean_all < OVERALL_FRACTION_CAP) {
        failures.push(format!(
            "overall mean power fraction {mean_all:.4} not below {OVERALL_FRACTION_CAP}"
        ));
    }

    // Full Power's margin below every threshold confirms the scenario leaves
    // headroom for power saving.
    let full = flatten(&bundle.full_traces);
    let worst_ratio = full
        .eps
        .iter()
        .zip(&full.thresholds)
        .map(|(e, t)| e / t)
        .fold(0.0f64, f64::max);
    eprintln!("C6: Full Power worst outage/threshold ratio {worst_ratio:.3e}");
    if worst_ratio > FULL_POWER_MARGIN {
        failures.push(format!(
            "Full Power outage/threshold ratio {worst_ratio:.3e} above {FULL_POWER_MARGIN:.0e}"
        ));
    }

    verdict(6, "trained policy meets zone reliability on a bounded budget", &failures);
}

#[test]
fn c7_zone_switching_outage_drop() {
    let bundle = trained();
    let mut failures = Vec::new();
    let samples = flatten(&bundle.sac_traces);
    let cdfs = zone_cdfs(&samples.eps, &samples.in_zone).expect("zone cdfs");
    let med_in = cdfs.inside.as_ref().expect("inside samples").median();
    let med_out = cdfs.outside.as_ref().expect("outside samples").median();
    eprintln!("C7: median outage inside {med_in:.3e} vs outside {med_out:.3e}");
    if !(med_in * MEDIAN_GAP <= med_out) {
        failures.push(format!(
            "inside median {med_in:.3e} not {MEDIAN_GAP}x below outside median {med_out:.3e}"
        ));
    }
    verdict(7, "inside-zone median outage at least 10x below outside", &failures);
}

/// Byte-for-byte snapshot of every regular file in a directory.
fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).expect("read_dir") {
        let entry = entry.expect("entry");
        if entry.file_type().expect("file type").is_file() {
            out.insert(
                entry.file_name().to_string_lossy().into_owned(),
                std::fs::read(entry.path()).expect("read file"),
            );
        }
    }
    out
}

fn check_recompute(trace: &EpisodeTrace, scenario: &ScenarioConfig, failures: &mut Vec<String>) {
    let recomputed = recompute_epsilons(trace, scenario).expect("recompute");
    for (step, row) in trace.steps.iter().zip(&recomputed) {
        for (i, (&logged, &again)) in step.epsilons.iter().zip(row).enumerate() {
            let re = rel_diff(logged, again);
            if re > RECOMPUTE_REL {
                failures.push(format!(
                    "{} seed {} t={} user {i}: logged {logged} recomputes to {again} (rel {re:.3e})",
                    trace.policy, trace.seed, step.t
                ));
                return;
            }
        }
    }
}

#[test]
fn c8_reporting_reproducibility() {
    let mut failures = Vec::new();

    let runs = [
        ("single_user_scaled", Policy::Closest, 4u32),
        ("single_user_scaled", Policy::FullPower, 4),
        ("multi_user", Policy::Closest, 2),
    ];
    for (name, policy, episodes) in runs {
        let scenario = ScenarioConfig::builtin(name).expect("scenario");
        let dir_a = tempfile::tempdir().expect("tempdir");
        let dir_b = tempfile::tempdir().expect("tempdir");
        let traces = evaluate_policy(&policy, &scenario, 9_000, episodes, dir_a.path())
            .expect("first evaluation");
        evaluate_policy(&policy, &scenario, 9_000, episodes, dir_b.path())
            .expect("second evaluation");
        let bytes_a = dir_bytes(dir_a.path());
        let bytes_b = dir_bytes(dir_b.path());
        if bytes_a.keys().collect::<Vec<_>>() != bytes_b.keys().collect::<Vec<_>>() {
            failures.push(format!("{name}/{}: output file sets differ", policy.label()));
            continue;
        }
        for (file, content) in &bytes_a {
            if bytes_b[file] != *content {
                failures.push(format!(
                    "{name}/{}: {file} differs between identical runs",
                    policy.label()
                ));
            }
        }
        for trace in &traces {
            check_recompute(trace, &scenario, &mut failures);
        }
    }

    // The trained policy's evaluation traces must satisfy the same round
    // trip.
    let bundle = trained();
    for trace in &bundle.sac_traces {
        check_recompute(trace, &bundle.scenario, &mut failures);
    }

    verdict(8, "byte-reproducible outputs and outage round trip", &failures);
}
