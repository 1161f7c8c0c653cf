//! The configuration document: one TOML file describing the world to
//! sample, the model to fit, how to train it, and how to plan with it.
//!
//! Resolution is strict and total: unknown keys are hard errors (with a
//! nearest-key suggestion when the typo is close), every missing key gets
//! a documented default, and every problem in the document is collected
//! into one aggregated report instead of failing at the first. An empty
//! document resolves to a complete pendulum quick-start profile.
//!
//! The resolved form can be echoed back as canonical TOML
//! ([`ResolvedConfig::to_toml_string`]); that echo re-resolves to the
//! identical configuration, and its SHA-256 is the config hash recorded
//! in every run manifest.

use crate::error::{CliError, Result};
use hwm_core::learning::{ModelConfig, TrainConfig};
use hwm_core::planning::{EvalSpace, PlanMethod, PlannerConfig, UtilitySpec};
use hwm_core::worlds::{make_world, ActionPolicy, WorldKind, WorldSpec};
use serde::Serialize;
use toml::value::Table;
use toml::Value;

/// A fully resolved, validated configuration. Field layout mirrors the
/// document: `[world]`, `[model]` (+ `[encoder]`/`[decoder]`), `[train]`,
/// `[plan]` with nested `[plan.utility]`, `[output]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub seed: u64,
    pub world: WorldSection,
    pub model: ModelConfig,
    /// Stepping scheme for the learned model. Only `"rk4"` is accepted:
    /// training differentiates through the integrator, and rk4 is the
    /// smooth explicit scheme the whole field supports.
    pub integrator: String,
    pub train: TrainConfig,
    pub plan: PlanSection,
    pub out_dir: String,
}

/// Ground-truth environment plus dataset-generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorldSection {
    pub spec: WorldSpec,
    pub trajectories: usize,
    /// Steps per trajectory; each records `horizon + 1` observations.
    pub horizon: usize,
    pub dt: f64,
    pub policy: ActionPolicy,
}

/// Planner settings in document form. `elite_frac`, `iters` and
/// `init_std` only apply to the cross-entropy method; they are carried
/// (at their defaults) even under `shooting` so the echo stays total.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanSection {
    pub method: String,
    pub candidates: usize,
    pub elite_frac: f64,
    pub iters: usize,
    pub init_std: f64,
    pub horizon: usize,
    pub bounds_lo: Vec<f64>,
    pub bounds_hi: Vec<f64>,
    /// Closed-loop steps the `plan` command executes.
    pub mpc_steps: usize,
    pub seed: u64,
    pub utility: UtilitySection,
}

/// What the planner maximizes, in document form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtilitySection {
    pub kind: String,
    pub goal: Vec<f64>,
    pub weight_diag: Vec<f64>,
    pub space: String,
    pub e_target: f64,
    pub weight: f64,
}

impl PlanSection {
    pub fn planner_config(&self) -> PlannerConfig {
        let method = if self.method == "cem" {
            PlanMethod::Cem {
                candidates: self.candidates,
                elite_frac: self.elite_frac,
                iters: self.iters,
                init_std: self.init_std,
            }
        } else {
            PlanMethod::Shooting {
                candidates: self.candidates,
            }
        };
        PlannerConfig {
            method,
            horizon: self.horizon,
            bounds_lo: self.bounds_lo.clone(),
            bounds_hi: self.bounds_hi.clone(),
            seed: self.seed,
        }
    }

    pub fn utility_spec(&self) -> UtilitySpec {
        match self.utility.kind.as_str() {
            "energy_target" => UtilitySpec::EnergyTarget {
                e_target: self.utility.e_target,
                weight: self.utility.weight,
            },
            _ => {
                let space = if self.utility.space == "observation" {
                    EvalSpace::Observation
                } else {
                    EvalSpace::Latent
                };
                UtilitySpec::goal_diag(self.utility.goal.clone(), &self.utility.weight_diag, space)
            }
        }
    }
}

/// Parses and resolves a document. `seed_override` replaces the
/// top-level seed (the `--seed` flag); section seeds that were written
/// explicitly still win over the override, since an explicit key is the
/// stronger statement.
pub fn resolve(doc: &str, seed_override: Option<u64>) -> Result<ResolvedConfig> {
    let root: Table = doc
        .parse()
        .map_err(|e| CliError::Config(vec![format!("not valid TOML: {e}")]))?;
    let mut r = Resolver { errs: Vec::new() };

    r.unknown_keys(
        "",
        &root,
        &["seed", "world", "model", "encoder", "decoder", "train", "plan", "output"],
    );
    let file_seed = r.u64(&root, "", "seed", 0);
    let seed = seed_override.unwrap_or(file_seed);

    // --- [world] ------------------------------------------------------
    let wt = r.table(&root, "", "world");
    let kind_name = r.str(&wt, "world", "kind", "pendulum");
    let (kind, kind_keys): (WorldKind, &[&str]) = match kind_name.as_str() {
        "pendulum" => (
            WorldKind::Pendulum {
                m: r.f64(&wt, "world", "m", 1.0),
                l: r.f64(&wt, "world", "l", 1.0),
                g: r.f64(&wt, "world", "g", 1.0),
            },
            &["m", "l", "g"],
        ),
        "spring_chain" => (
            WorldKind::SpringChain {
                n: r.usize(&wt, "world", "n", 3),
                k: r.f64(&wt, "world", "k", 1.0),
                m: r.f64(&wt, "world", "m", 1.0),
                rest_len: r.f64(&wt, "world", "rest_len", 1.0),
            },
            &["n", "k", "m", "rest_len"],
        ),
        "two_body" => (
            WorldKind::TwoBody {
                m1: r.f64(&wt, "world", "m1", 1.0),
                m2: r.f64(&wt, "world", "m2", 1.0),
                g: r.f64(&wt, "world", "g", 1.0),
            },
            &["m1", "m2", "g"],
        ),
        "damped_driven_oscillator" => (
            WorldKind::DampedDrivenOscillator {
                k: r.f64(&wt, "world", "k", 1.0),
                m: r.f64(&wt, "world", "m", 1.0),
                c: r.f64(&wt, "world", "c", 0.1),
            },
            &["k", "m", "c"],
        ),
        "double_integrator" => (WorldKind::DoubleIntegrator, &[]),
        other => {
            r.errs.push(format!(
                "`world.kind`: unknown world `{other}` (one of: pendulum, spring_chain, \
                 two_body, damped_driven_oscillator, double_integrator)"
            ));
            (
                WorldKind::Pendulum { m: 1.0, l: 1.0, g: 1.0 },
                &["m", "l", "g"],
            )
        }
    };
    let policy_name = r.str(&wt, "world", "policy", "zero");
    let (policy, policy_keys): (ActionPolicy, &[&str]) = match policy_name.as_str() {
        "zero" => (ActionPolicy::Zero, &[]),
        "uniform_random" => (
            ActionPolicy::UniformRandom {
                scale: r.f64(&wt, "world", "scale", 1.0),
            },
            &["scale"],
        ),
        "sinusoid" => (
            ActionPolicy::Sinusoid {
                freq: r.f64(&wt, "world", "freq", 1.0),
                amp: r.f64(&wt, "world", "amp", 1.0),
            },
            &["freq", "amp"],
        ),
        other => {
            r.errs.push(format!(
                "`world.policy`: unknown policy `{other}` (one of: zero, uniform_random, sinusoid)"
            ));
            (ActionPolicy::Zero, &[])
        }
    };
    let mut world_allowed =
        vec!["kind", "sigma_proc", "sigma_obs", "trajectories", "horizon", "dt", "policy"];
    world_allowed.extend_from_slice(kind_keys);
    world_allowed.extend_from_slice(policy_keys);
    r.unknown_keys("world", &wt, &world_allowed);

    let world_dt = r.f64(&wt, "world", "dt", 0.05);
    let trajectories = r.usize(&wt, "world", "trajectories", 50);
    let horizon = r.usize(&wt, "world", "horizon", 201);
    let spec = WorldSpec {
        kind,
        sigma_proc: r.f64(&wt, "world", "sigma_proc", 0.0),
        sigma_obs: r.f64(&wt, "world", "sigma_obs", 0.0),
    };
    if !(world_dt > 0.0 && world_dt.is_finite()) {
        r.errs.push(format!("`world.dt`: must be positive and finite, got {world_dt}"));
    }
    if trajectories == 0 {
        r.errs.push("`world.trajectories`: must be at least 1".into());
    }
    if horizon == 0 {
        r.errs.push("`world.horizon`: must be at least 1".into());
    }
    if !(spec.sigma_proc >= 0.0 && spec.sigma_proc.is_finite()) {
        r.errs.push(format!(
            "`world.sigma_proc`: must be >= 0 and finite, got {}",
            spec.sigma_proc
        ));
    }
    if !(spec.sigma_obs >= 0.0 && spec.sigma_obs.is_finite()) {
        r.errs.push(format!(
            "`world.sigma_obs`: must be >= 0 and finite, got {}",
            spec.sigma_obs
        ));
    }
    if let Err(e) = make_world(&spec) {
        r.errs.push(format!("world: {e}"));
    }

    // --- [model] (+ [encoder], [decoder]) -----------------------------
    let mt = r.table(&root, "", "model");
    r.unknown_keys(
        "model",
        &mt,
        &[
            "n_entities",
            "entity_dim",
            "energy_hidden",
            "ext_hidden",
            "use_dissipation",
            "use_input_gain",
            "use_residual",
            "gamma",
            "dt",
            "integrator",
        ],
    );
    let et = r.table(&root, "", "encoder");
    r.unknown_keys("encoder", &et, &["hidden", "window"]);
    let dct = r.table(&root, "", "decoder");
    r.unknown_keys("decoder", &dct, &["hidden"]);

    // Model stepping interval follows the dataset's unless overridden —
    // a model is trained against windows sampled at the world's dt.
    let model_dt = r.f64(&mt, "model", "dt", world_dt);
    let base = ModelConfig::new(1, 1, if model_dt > 0.0 { model_dt } else { 0.05 });
    let model = ModelConfig {
        n_entities: r.usize(&mt, "model", "n_entities", base.n_entities),
        entity_dim: r.usize(&mt, "model", "entity_dim", base.entity_dim),
        energy_hidden: r.usize_vec(&mt, "model", "energy_hidden", base.energy_hidden.clone()),
        enc_hidden: r.usize_vec(&et, "encoder", "hidden", base.enc_hidden.clone()),
        dec_hidden: r.usize_vec(&dct, "decoder", "hidden", base.dec_hidden.clone()),
        ext_hidden: r.usize_vec(&mt, "model", "ext_hidden", base.ext_hidden.clone()),
        use_dissipation: r.bool(&mt, "model", "use_dissipation", base.use_dissipation),
        use_input_gain: r.bool(&mt, "model", "use_input_gain", base.use_input_gain),
        use_residual: r.bool(&mt, "model", "use_residual", base.use_residual),
        gamma: r.f64(&mt, "model", "gamma", base.gamma),
        window: r.usize(&et, "encoder", "window", base.window),
        dt: model_dt,
    };
    let integrator = r.str(&mt, "model", "integrator", "rk4");
    if integrator != "rk4" {
        r.errs.push(format!(
            "`model.integrator`: only \"rk4\" is supported for learned-model stepping, got \"{integrator}\""
        ));
    }
    if let Err(e) = model.validate() {
        r.errs.push(format!("model: {e}"));
    }

    // --- [train] ------------------------------------------------------
    let tt = r.table(&root, "", "train");
    r.unknown_keys(
        "train",
        &tt,
        &[
            "horizon",
            "batch_size",
            "steps",
            "learning_rate",
            "beta1",
            "beta2",
            "adam_eps",
            "clip_norm",
            "lambda_res",
            "lambda_lat",
            "seed",
        ],
    );
    let td = TrainConfig::default();
    let train = TrainConfig {
        horizon: r.usize(&tt, "train", "horizon", td.horizon),
        batch_size: r.usize(&tt, "train", "batch_size", td.batch_size),
        steps: r.usize(&tt, "train", "steps", td.steps),
        lr: r.f64(&tt, "train", "learning_rate", td.lr),
        beta1: r.f64(&tt, "train", "beta1", td.beta1),
        beta2: r.f64(&tt, "train", "beta2", td.beta2),
        adam_eps: r.f64(&tt, "train", "adam_eps", td.adam_eps),
        clip_norm: r.f64(&tt, "train", "clip_norm", td.clip_norm),
        lambda_res: r.f64(&tt, "train", "lambda_res", td.lambda_res),
        lambda_lat: r.f64(&tt, "train", "lambda_lat", td.lambda_lat),
        seed: r.u64(&tt, "train", "seed", seed),
    };
    if let Err(e) = train.validate() {
        r.errs.push(format!("train: {e}"));
    }

    // --- [plan] -------------------------------------------------------
    let pt = r.table(&root, "", "plan");
    r.unknown_keys(
        "plan",
        &pt,
        &[
            "method",
            "candidates",
            "elite_frac",
            "iters",
            "init_std",
            "horizon",
            "bounds_lo",
            "bounds_hi",
            "mpc_steps",
            "seed",
            "utility",
        ],
    );
    let method = r.str(&pt, "plan", "method", "shooting");
    if method != "shooting" && method != "cem" {
        r.errs.push(format!(
            "`plan.method`: unknown method `{method}` (one of: shooting, cem)"
        ));
    }
    if method != "cem" {
        for k in ["elite_frac", "iters", "init_std"] {
            if pt.contains_key(k) {
                r.errs
                    .push(format!("`plan.{k}`: only used when method = \"cem\""));
            }
        }
    }
    let ut = r.table(&pt, "plan", "utility");
    let ukind = r.str(&ut, "plan.utility", "kind", "goal_quadratic");
    let utility_allowed: &[&str] = match ukind.as_str() {
        "goal_quadratic" => &["kind", "goal", "weight_diag", "space"],
        "energy_target" => &["kind", "e_target", "weight"],
        other => {
            r.errs.push(format!(
                "`plan.utility.kind`: unknown utility `{other}` (one of: goal_quadratic, energy_target)"
            ));
            &["kind", "goal", "weight_diag", "space", "e_target", "weight"]
        }
    };
    r.unknown_keys("plan.utility", &ut, utility_allowed);
    let space = r.str(&ut, "plan.utility", "space", "latent");
    if space != "latent" && space != "observation" {
        r.errs.push(format!(
            "`plan.utility.space`: unknown space `{space}` (one of: latent, observation)"
        ));
    }
    let utility = UtilitySection {
        kind: if ukind == "energy_target" { ukind } else { "goal_quadratic".into() },
        goal: r.f64_vec(&ut, "plan.utility", "goal", vec![0.5, 0.0]),
        weight_diag: r.f64_vec(&ut, "plan.utility", "weight_diag", vec![1.0, 0.1]),
        space: if space == "observation" { space } else { "latent".into() },
        e_target: r.f64(&ut, "plan.utility", "e_target", 0.0),
        weight: r.f64(&ut, "plan.utility", "weight", 1.0),
    };
    if utility.kind == "goal_quadratic" {
        if utility.goal.len() != utility.weight_diag.len() {
            r.errs.push(format!(
                "`plan.utility`: goal has {} entries but weight_diag has {}",
                utility.goal.len(),
                utility.weight_diag.len()
            ));
        }
        if !utility.goal.iter().all(|x| x.is_finite()) {
            r.errs.push("`plan.utility.goal`: entries must be finite".into());
        }
        if !utility.weight_diag.iter().all(|x| x.is_finite() && *x >= 0.0) {
            r.errs
                .push("`plan.utility.weight_diag`: entries must be finite and >= 0".into());
        }
    } else {
        if !utility.e_target.is_finite() {
            r.errs.push("`plan.utility.e_target`: must be finite".into());
        }
        if !(utility.weight.is_finite() && utility.weight >= 0.0) {
            r.errs
                .push("`plan.utility.weight`: must be finite and >= 0".into());
        }
    }

    let plan = PlanSection {
        method: if method == "cem" { method } else { "shooting".into() },
        candidates: r.usize(&pt, "plan", "candidates", 128),
        elite_frac: r.f64(&pt, "plan", "elite_frac", 0.1),
        iters: r.usize(&pt, "plan", "iters", 3),
        init_std: r.f64(&pt, "plan", "init_std", 0.5),
        horizon: r.usize(&pt, "plan", "horizon", 20),
        bounds_lo: r.f64_vec(&pt, "plan", "bounds_lo", vec![-1.0]),
        bounds_hi: r.f64_vec(&pt, "plan", "bounds_hi", vec![1.0]),
        mpc_steps: r.usize(&pt, "plan", "mpc_steps", 100),
        seed: r.u64(&pt, "plan", "seed", seed),
        utility,
    };
    if plan.candidates == 0 {
        r.errs.push("`plan.candidates`: must be at least 1".into());
    }
    if plan.horizon == 0 {
        r.errs.push("`plan.horizon`: must be at least 1".into());
    }
    if plan.mpc_steps == 0 {
        r.errs.push("`plan.mpc_steps`: must be at least 1".into());
    }
    if plan.bounds_lo.len() != plan.bounds_hi.len() {
        r.errs.push(format!(
            "`plan.bounds_lo` has {} entries but `plan.bounds_hi` has {}",
            plan.bounds_lo.len(),
            plan.bounds_hi.len()
        ));
    } else {
        for (j, (lo, hi)) in plan.bounds_lo.iter().zip(&plan.bounds_hi).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                r.errs.push(format!(
                    "`plan.bounds_lo[{j}]`/`plan.bounds_hi[{j}]`: need finite lo < hi, got {lo} and {hi}"
                ));
            }
        }
    }
    if plan.method == "cem" {
        if !(plan.elite_frac > 0.0 && plan.elite_frac <= 1.0) {
            r.errs.push(format!(
                "`plan.elite_frac`: must lie in (0, 1], got {}",
                plan.elite_frac
            ));
        }
        if plan.iters == 0 {
            r.errs.push("`plan.iters`: must be at least 1".into());
        }
        if !(plan.init_std > 0.0 && plan.init_std.is_finite()) {
            r.errs.push(format!(
                "`plan.init_std`: must be positive and finite, got {}",
                plan.init_std
            ));
        }
    }

    // --- [output] -----------------------------------------------------
    let ot = r.table(&root, "", "output");
    r.unknown_keys("output", &ot, &["dir"]);
    let out_dir = r.str(&ot, "output", "dir", "out");

    if !r.errs.is_empty() {
        return Err(CliError::Config(r.errs));
    }
    Ok(ResolvedConfig {
        seed,
        world: WorldSection {
            spec,
            trajectories,
            horizon,
            dt: world_dt,
            policy,
        },
        model,
        integrator,
        train,
        plan,
        out_dir,
    })
}

impl ResolvedConfig {
    /// Canonical TOML echo: every key explicit, fixed order, so equal
    /// configurations produce byte-equal documents. Re-resolving the echo
    /// gives back `self`.
    pub fn to_toml_string(&self) -> String {
        let mut s = String::new();
        let w = &self.world;
        s.push_str(&format!("seed = {}\n\n[world]\n", self.seed));
        match &w.spec.kind {
            WorldKind::Pendulum { m, l, g } => {
                s.push_str("kind = \"pendulum\"\n");
                s.push_str(&format!("m = {m:?}\nl = {l:?}\ng = {g:?}\n"));
            }
            WorldKind::SpringChain { n, k, m, rest_len } => {
                s.push_str("kind = \"spring_chain\"\n");
                s.push_str(&format!("n = {n}\nk = {k:?}\nm = {m:?}\nrest_len = {rest_len:?}\n"));
            }
            WorldKind::TwoBody { m1, m2, g } => {
                s.push_str("kind = \"two_body\"\n");
                s.push_str(&format!("m1 = {m1:?}\nm2 = {m2:?}\ng = {g:?}\n"));
            }
            WorldKind::DampedDrivenOscillator { k, m, c } => {
                s.push_str("kind = \"damped_driven_oscillator\"\n");
                s.push_str(&format!("k = {k:?}\nm = {m:?}\nc = {c:?}\n"));
            }
            WorldKind::DoubleIntegrator => s.push_str("kind = \"double_integrator\"\n"),
        }
        s.push_str(&format!(
            "sigma_proc = {:?}\nsigma_obs = {:?}\ntrajectories = {}\nhorizon = {}\ndt = {:?}\n",
            w.spec.sigma_proc, w.spec.sigma_obs, w.trajectories, w.horizon, w.dt
        ));
        match &w.policy {
            ActionPolicy::Zero => s.push_str("policy = \"zero\"\n"),
            ActionPolicy::UniformRandom { scale } => {
                s.push_str(&format!("policy = \"uniform_random\"\nscale = {scale:?}\n"));
            }
            ActionPolicy::Sinusoid { freq, amp } => {
                s.push_str(&format!("policy = \"sinusoid\"\nfreq = {freq:?}\namp = {amp:?}\n"));
            }
        }

        let m = &self.model;
        s.push_str(&format!(
            "\n[model]\nn_entities = {}\nentity_dim = {}\nenergy_hidden = {}\next_hidden = {}\n\
             use_dissipation = {}\nuse_input_gain = {}\nuse_residual = {}\ngamma = {:?}\ndt = {:?}\n\
             integrator = {}\n",
            m.n_entities,
            m.entity_dim,
            fmt_usize_list(&m.energy_hidden),
            fmt_usize_list(&m.ext_hidden),
            m.use_dissipation,
            m.use_input_gain,
            m.use_residual,
            m.gamma,
            m.dt,
            toml_quote(&self.integrator),
        ));
        s.push_str(&format!(
            "\n[encoder]\nhidden = {}\nwindow = {}\n\n[decoder]\nhidden = {}\n",
            fmt_usize_list(&m.enc_hidden),
            m.window,
            fmt_usize_list(&m.dec_hidden),
        ));

        let t = &self.train;
        s.push_str(&format!(
            "\n[train]\nhorizon = {}\nbatch_size = {}\nsteps = {}\nlearning_rate = {:?}\n\
             beta1 = {:?}\nbeta2 = {:?}\nadam_eps = {:?}\nclip_norm = {:?}\n\
             lambda_res = {:?}\nlambda_lat = {:?}\nseed = {}\n",
            t.horizon,
            t.batch_size,
            t.steps,
            t.lr,
            t.beta1,
            t.beta2,
            t.adam_eps,
            t.clip_norm,
            t.lambda_res,
            t.lambda_lat,
            t.seed
        ));

        let p = &self.plan;
        s.push_str(&format!("\n[plan]\nmethod = {}\n", toml_quote(&p.method)));
        s.push_str(&format!("candidates = {}\n", p.candidates));
        if p.method == "cem" {
            s.push_str(&format!(
                "elite_frac = {:?}\niters = {}\ninit_std = {:?}\n",
                p.elite_frac, p.iters, p.init_std
            ));
        }
        s.push_str(&format!(
            "horizon = {}\nbounds_lo = {}\nbounds_hi = {}\nmpc_steps = {}\nseed = {}\n",
            p.horizon,
            fmt_f64_list(&p.bounds_lo),
            fmt_f64_list(&p.bounds_hi),
            p.mpc_steps,
            p.seed
        ));
        let u = &p.utility;
        s.push_str(&format!("\n[plan.utility]\nkind = {}\n", toml_quote(&u.kind)));
        if u.kind == "energy_target" {
            s.push_str(&format!("e_target = {:?}\nweight = {:?}\n", u.e_target, u.weight));
        } else {
            s.push_str(&format!(
                "goal = {}\nweight_diag = {}\nspace = {}\n",
                fmt_f64_list(&u.goal),
                fmt_f64_list(&u.weight_diag),
                toml_quote(&u.space)
            ));
        }

        s.push_str(&format!("\n[output]\ndir = {}\n", toml_quote(&self.out_dir)));
        s
    }
}

fn fmt_f64_list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
    format!("[{}]", items.join(", "))
}

fn fmt_usize_list(v: &[usize]) -> String {
    let items: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("[{}]", items.join(", "))
}

/// Quotes a string as a TOML value, with proper escaping.
fn toml_quote(s: &str) -> String {
    Value::String(s.to_string()).to_string()
}

// ---------------------------------------------------------------------------
// Resolution machinery

struct Resolver {
    errs: Vec<String>,
}

fn qual(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn value_kind(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "a string",
        Value::Integer(_) => "an integer",
        Value::Float(_) => "a float",
        Value::Boolean(_) => "a boolean",
        Value::Datetime(_) => "a datetime",
        Value::Array(_) => "an array",
        Value::Table(_) => "a table",
    }
}

/// Closest allowed key by edit distance, when it is close enough to look
/// like a typo rather than a different word.
fn suggest(key: &str, allowed: &[&str]) -> Option<String> {
    allowed
        .iter()
        .map(|a| (strsim::levenshtein(key, a), *a))
        .min()
        .filter(|(d, _)| *d <= 2 && *d < key.len())
        .map(|(_, a)| a.to_string())
}

impl Resolver {
    fn type_err(&mut self, path: &str, key: &str, want: &str, got: &Value) {
        self.errs.push(format!(
            "`{}`: expected {want}, found {}",
            qual(path, key),
            value_kind(got)
        ));
    }

    fn unknown_keys(&mut self, path: &str, table: &Table, allowed: &[&str]) {
        for key in table.keys() {
            if !allowed.contains(&key.as_str()) {
                let mut msg = format!("unknown key `{}`", qual(path, key));
                if let Some(s) = suggest(key, allowed) {
                    msg.push_str(&format!(" (did you mean `{s}`?)"));
                }
                self.errs.push(msg);
            }
        }
    }

    fn table(&mut self, parent: &Table, path: &str, key: &str) -> Table {
        match parent.get(key) {
            None => Table::new(),
            Some(Value::Table(t)) => t.clone(),
            Some(v) => {
                self.type_err(path, key, "a table", v);
                Table::new()
            }
        }
    }

    fn f64(&mut self, t: &Table, path: &str, key: &str, default: f64) -> f64 {
        match t.get(key) {
            None => default,
            Some(Value::Float(x)) => *x,
            Some(Value::Integer(i)) => *i as f64,
            Some(v) => {
                self.type_err(path, key, "a number", v);
                default
            }
        }
    }

    fn usize(&mut self, t: &Table, path: &str, key: &str, default: usize) -> usize {
        match t.get(key) {
            None => default,
            Some(Value::Integer(i)) if *i >= 0 => *i as usize,
            Some(v) => {
                self.type_err(path, key, "a non-negative integer", v);
                default
            }
        }
    }

    fn u64(&mut self, t: &Table, path: &str, key: &str, default: u64) -> u64 {
        match t.get(key) {
            None => default,
            Some(Value::Integer(i)) if *i >= 0 => *i as u64,
            Some(v) => {
                self.type_err(path, key, "a non-negative integer", v);
                default
            }
        }
    }

    fn bool(&mut self, t: &Table, path: &str, key: &str, default: bool) -> bool {
        match t.get(key) {
            None => default,
            Some(Value::Boolean(b)) => *b,
            Some(v) => {
                self.type_err(path, key, "a boolean", v);
                default
            }
        }
    }

    fn str(&mut self, t: &Table, path: &str, key: &str, default: &str) -> String {
        match t.get(key) {
            None => default.to_string(),
            Some(Value::String(s)) => s.clone(),
            Some(v) => {
                self.type_err(path, key, "a string", v);
                default.to_string()
            }
        }
    }

    fn f64_vec(&mut self, t: &Table, path: &str, key: &str, default: Vec<f64>) -> Vec<f64> {
        match t.get(key) {
            None => default,
            Some(Value::Array(items)) => {
                let mut out = Vec::with_capacity(items.len());
                for (j, item) in items.iter().enumerate() {
                    match item {
                        Value::Float(x) => out.push(*x),
                        Value::Integer(i) => out.push(*i as f64),
                        v => {
                            self.errs.push(format!(
                                "`{}[{j}]`: expected a number, found {}",
                                qual(path, key),
                                value_kind(v)
                            ));
                            out.push(0.0);
                        }
                    }
                }
                out
            }
            Some(v) => {
                self.type_err(path, key, "an array of numbers", v);
                default
            }
        }
    }

    fn usize_vec(&mut self, t: &Table, path: &str, key: &str, default: Vec<usize>) -> Vec<usize> {
        match t.get(key) {
            None => default,
            Some(Value::Array(items)) => {
                let mut out = Vec::with_capacity(items.len());
                for (j, item) in items.iter().enumerate() {
                    match item {
                        Value::Integer(i) if *i >= 0 => out.push(*i as usize),
                        v => {
                            self.errs.push(format!(
                                "`{}[{j}]`: expected a non-negative integer, found {}",
                                qual(path, key),
                                value_kind(v)
                            ));
                            out.push(1);
                        }
                    }
                }
                out
            }
            Some(v) => {
                self.type_err(path, key, "an array of non-negative integers", v);
                default
            }
        }
    }
}
