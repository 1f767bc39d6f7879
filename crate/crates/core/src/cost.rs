//! Abstract cost accounting.
//!
//! Checks are priced by counting storage reads, writes, compares and hashes
//! and multiplying by a [`CostSchedule`]. Deployment is modelled as a
//! constant for the dynamic engine and as `base × roles × upgrades` for a
//! static, modifier-style baseline where every role is its own contract and
//! every change redeploys.
//!
//! Units are dimensionless. The default deployment bases are the gas
//! figures measured for an on-chain build of the same architecture
//! (`9_536_190` dynamic, `359_268` static). They are calibration metadata:
//! the shapes of the cost functions are what this module reproduces, not
//! the absolute values. The measured one-time transaction cost of the
//! dynamic build was roughly 40% above the static one; that ratio depends on
//! EVM code generation and is not modelled.

use std::fmt::Write as _;
use std::num::NonZeroU64;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::managers::{AdminScope, Engine, EngineState};
use crate::model::{FunctionDef, FunctionId, Role, RoleId, RoleSet, User, UserId};

pub type CostUnits = u64;

/// Measured on-chain deployment gas of the dynamic build.
pub const CALIBRATED_DEPLOY_DYNAMIC: CostUnits = 9_536_190;
/// Measured on-chain deployment gas of one static role contract.
pub const CALIBRATED_DEPLOY_STATIC: CostUnits = 359_268;

/// Largest role count [`bench_scaling`] will build a fixture for.
pub const MAX_BENCH_ROLES: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule")]
pub struct CostSchedule {
    read_cost: CostUnits,
    write_cost: CostUnits,
    compare_cost: CostUnits,
    hash_cost: CostUnits,
    deploy_base_dynamic: CostUnits,
    deploy_base_static: CostUnits,
}

#[derive(Deserialize)]
struct RawSchedule {
    #[serde(default = "d_read")]
    read_cost: CostUnits,
    #[serde(default = "d_write")]
    write_cost: CostUnits,
    #[serde(default = "d_compare")]
    compare_cost: CostUnits,
    #[serde(default = "d_hash")]
    hash_cost: CostUnits,
    #[serde(default = "d_dyn")]
    deploy_base_dynamic: CostUnits,
    #[serde(default = "d_static")]
    deploy_base_static: CostUnits,
}

fn d_read() -> CostUnits {
    100
}
fn d_write() -> CostUnits {
    500
}
fn d_compare() -> CostUnits {
    3
}
fn d_hash() -> CostUnits {
    30
}
fn d_dyn() -> CostUnits {
    CALIBRATED_DEPLOY_DYNAMIC
}
fn d_static() -> CostUnits {
    CALIBRATED_DEPLOY_STATIC
}

impl TryFrom<RawSchedule> for CostSchedule {
    type Error = CostError;
    fn try_from(r: RawSchedule) -> Result<Self, CostError> {
        CostSchedule::new(
            r.read_cost,
            r.write_cost,
            r.compare_cost,
            r.hash_cost,
            r.deploy_base_dynamic,
            r.deploy_base_static,
        )
    }
}

impl Default for CostSchedule {
    fn default() -> Self {
        Self {
            read_cost: d_read(),
            write_cost: d_write(),
            compare_cost: d_compare(),
            hash_cost: d_hash(),
            deploy_base_dynamic: d_dyn(),
            deploy_base_static: d_static(),
        }
    }
}

impl CostSchedule {
    /// Every entry must be positive.
    pub fn new(
        read_cost: CostUnits,
        write_cost: CostUnits,
        compare_cost: CostUnits,
        hash_cost: CostUnits,
        deploy_base_dynamic: CostUnits,
        deploy_base_static: CostUnits,
    ) -> Result<Self, CostError> {
        let entries = [
            ("read_cost", read_cost),
            ("write_cost", write_cost),
            ("compare_cost", compare_cost),
            ("hash_cost", hash_cost),
            ("deploy_base_dynamic", deploy_base_dynamic),
            ("deploy_base_static", deploy_base_static),
        ];
        if let Some((name, _)) = entries.iter().find(|(_, v)| *v == 0) {
            return Err(CostError::ZeroScheduleEntry(name));
        }
        Ok(Self {
            read_cost,
            write_cost,
            compare_cost,
            hash_cost,
            deploy_base_dynamic,
            deploy_base_static,
        })
    }

    pub fn read_cost(&self) -> CostUnits {
        self.read_cost
    }
    pub fn write_cost(&self) -> CostUnits {
        self.write_cost
    }
    pub fn compare_cost(&self) -> CostUnits {
        self.compare_cost
    }
    pub fn hash_cost(&self) -> CostUnits {
        self.hash_cost
    }
    pub fn deploy_base_dynamic(&self) -> CostUnits {
        self.deploy_base_dynamic
    }
    pub fn deploy_base_static(&self) -> CostUnits {
        self.deploy_base_static
    }
}

/// Raw operation counts plus their priced total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CostReceipt {
    pub reads: u64,
    pub writes: u64,
    pub compares: u64,
    pub hashes: u64,
    pub total: CostUnits,
}

/// Operation counter threaded through instrumented code paths.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Meter {
    reads: u64,
    writes: u64,
    compares: u64,
    hashes: u64,
}

impl Meter {
    pub fn read(&mut self) {
        self.reads += 1;
    }
    pub fn write(&mut self) {
        self.writes += 1;
    }
    pub fn compare(&mut self) {
        self.compares += 1;
    }
    pub fn hash(&mut self) {
        self.hashes += 1;
    }

    pub fn receipt(&self, s: &CostSchedule) -> CostReceipt {
        CostReceipt {
            reads: self.reads,
            writes: self.writes,
            compares: self.compares,
            hashes: self.hashes,
            total: self.reads * s.read_cost
                + self.writes * s.write_cost
                + self.compares * s.compare_cost
                + self.hashes * s.hash_cost,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CostError {
    #[error("cost schedule entry {0} must be positive")]
    ZeroScheduleEntry(&'static str),
    #[error("role counts must be non-empty, positive and strictly increasing")]
    RoleCountsNotIncreasing,
    #[error("at least 3 trials are required, got {0}")]
    TooFewTrials(u32),
    #[error("fixture with {0} roles exceeds the limit of {MAX_BENCH_ROLES}")]
    FixtureTooLarge(u64),
}

/// One-time deployment of the dynamic engine. Does not depend on either
/// argument: roles and upgrades are data, not code.
pub fn deployment_cost_dynamic(schedule: &CostSchedule, _n_roles: NonZeroU64, _n_upgrades: u64) -> CostUnits {
    schedule.deploy_base_dynamic
}

/// Static baseline: one contract per role, redeployed on every upgrade.
pub fn deployment_cost_static(schedule: &CostSchedule, n_roles: NonZeroU64, n_upgrades: NonZeroU64) -> CostUnits {
    schedule
        .deploy_base_static
        .saturating_mul(n_roles.get())
        .saturating_mul(n_upgrades.get())
}

/// Modifier-style access control with one contract per role.
///
/// This is a reconstruction: a check calls every role contract's
/// membership test in turn, so its cost grows with the number of roles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticBaselineModel {
    role_contracts: Vec<(RoleId, std::collections::BTreeSet<UserId>)>,
    per_role_contract_cost: CostUnits,
    // Always true for this model.
    per_upgrade_redeploy: bool,
}

impl StaticBaselineModel {
    /// Mirrors the grants of `state`, one contract per role.
    pub fn from_state(state: &EngineState, schedule: &CostSchedule) -> Self {
        let role_contracts = state
            .roles
            .keys()
            .map(|r| (r.clone(), state.user_roles.users_with(r).into_iter().collect()))
            .collect();
        Self {
            role_contracts,
            per_role_contract_cost: schedule.deploy_base_static,
            per_upgrade_redeploy: true,
        }
    }

    pub fn role_count(&self) -> usize {
        self.role_contracts.len()
    }

    pub fn per_role_contract_cost(&self) -> CostUnits {
        self.per_role_contract_cost
    }

    pub fn redeploys_on_upgrade(&self) -> bool {
        self.per_upgrade_redeploy
    }

    pub fn deployment_cost(&self, n_upgrades: NonZeroU64) -> CostUnits {
        let n = self.role_contracts.len().max(1) as u64;
        self.per_role_contract_cost.saturating_mul(n).saturating_mul(n_upgrades.get())
    }

    /// Walks every role contract: one cross-contract read and one compare
    /// each, then a compare against the allowed set.
    pub fn meter_check(&self, user: &UserId, allowed: &RoleSet, schedule: &CostSchedule) -> (bool, CostReceipt) {
        let mut meter = Meter::default();
        let mut granted = false;
        for (role, members) in &self.role_contracts {
            meter.read();
            meter.compare();
            if members.contains(user) {
                meter.compare();
                granted |= allowed.contains(role);
            }
        }
        (granted, meter.receipt(schedule))
    }
}

/// Receipt of the dynamic check for `(user, function)`.
pub fn meter_check(state: &EngineState, user: &UserId, function: &FunctionId, schedule: &CostSchedule) -> CostReceipt {
    state.check_authorization(user, function, schedule).cost
}

/// Least-squares fit `y = slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// `1 - SS_res/SS_tot`; defined as 1 when the series is constant and
    /// fitted exactly.
    pub r_squared: f64,
}

pub fn least_squares(xs: &[f64], ys: &[f64]) -> LinearFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - (slope * x + intercept)).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    };
    LinearFit {
        slope,
        intercept,
        r_squared,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n_roles: u64,
    pub dynamic_mean: f64,
    pub static_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub mean: f64,
    pub fit: LinearFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub seed: u64,
    pub trials: u32,
    pub rows: Vec<ScalingRow>,
    pub dynamic: SeriesSummary,
    pub static_baseline: SeriesSummary,
    pub baseline_note: String,
}

impl ScalingReport {
    /// `|slope| / mean` of the dynamic series.
    pub fn dynamic_relative_slope(&self) -> f64 {
        if self.dynamic.mean == 0.0 {
            return self.dynamic.fit.slope.abs();
        }
        self.dynamic.fit.slope.abs() / self.dynamic.mean
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:>8}  {:>14}  {:>14}", "roles", "dynamic", "static");
        for row in &self.rows {
            let _ = writeln!(out, "{:>8}  {:>14.1}  {:>14.1}", row.n_roles, row.dynamic_mean, row.static_mean);
        }
        let _ = writeln!(
            out,
            "dynamic: slope {:.6}/role, mean {:.1}, r2 {:.4}",
            self.dynamic.fit.slope, self.dynamic.mean, self.dynamic.fit.r_squared
        );
        let _ = writeln!(
            out,
            "static:  slope {:.6}/role, mean {:.1}, r2 {:.4}",
            self.static_baseline.fit.slope, self.static_baseline.mean, self.static_baseline.fit.r_squared
        );
        let _ = writeln!(out, "note: {}", self.baseline_note);
        out
    }
}

const USER_ROLES: usize = 1;
const POLICY_ROLES: usize = 1;
const BYSTANDERS: usize = 16;

/// Builds a fixture with `n_roles` roles where the checked user holds one of
/// them and the checked function's policy names that same one. The rest are
/// held by bystander users and never touch the evaluated path.
fn scaling_fixture(n_roles: u64, rng: &mut ChaCha8Rng) -> (EngineState, UserId, FunctionId, RoleSet) {
    let scope = AdminScope::root("bench");
    let mut engine = Engine::in_memory().with_clock(Box::new(|| 0));
    let roles: Vec<RoleId> = (0..n_roles)
        .map(|i| RoleId::new(format!("role-{i:05}")).expect("valid id"))
        .collect();
    for r in &roles {
        engine.role_add(&scope, Role::new(r.clone())).expect("fresh role");
    }
    let user = UserId::new("subject").expect("valid id");
    engine.user_add(&scope, User::new(user.clone())).expect("fresh user");
    for i in 0..BYSTANDERS {
        let u = UserId::new(format!("bystander-{i}")).expect("valid id");
        engine.user_add(&scope, User::new(u.clone())).expect("fresh user");
        for r in roles.choose_multiple(rng, 3.min(roles.len())) {
            engine.assign_role(&scope, &u, r).expect("fresh grant");
        }
    }
    let function = FunctionId::new("Vault.withdraw").expect("valid id");
    engine
        .function_register(&scope, FunctionDef::new(function.clone(), "Vault", "withdraw"))
        .expect("fresh function");

    let held: Vec<RoleId> = roles.choose_multiple(rng, USER_ROLES.min(roles.len())).cloned().collect();
    for r in &held {
        engine.assign_role(&scope, &user, r).expect("fresh grant");
    }
    // The policy always names a role the subject holds, so both models allow.
    let mut required: RoleSet = std::iter::once(held[rng.gen_range(0..held.len())].clone()).collect();
    while required.len() < POLICY_ROLES.min(roles.len()) {
        required.insert(roles[rng.gen_range(0..roles.len())].clone());
    }
    for r in &required {
        engine.policy_bind(&scope, &function, r).expect("fresh binding");
    }
    (engine.state().clone(), user, function, required)
}

/// Meters the dynamic check and the static baseline check over increasing
/// role counts and fits a line through each series.
pub fn bench_scaling(
    schedule: &CostSchedule,
    role_counts: &[u64],
    trials: u32,
    seed: u64,
) -> Result<ScalingReport, CostError> {
    if role_counts.is_empty() || role_counts[0] == 0 || role_counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CostError::RoleCountsNotIncreasing);
    }
    if trials < 3 {
        return Err(CostError::TooFewTrials(trials));
    }
    if let Some(&n) = role_counts.iter().find(|&&n| n > MAX_BENCH_ROLES) {
        return Err(CostError::FixtureTooLarge(n));
    }

    let mut rows = Vec::with_capacity(role_counts.len());
    for &n_roles in role_counts {
        let mut dynamic_sum = 0u64;
        let mut static_sum = 0u64;
        for trial in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (n_roles << 20) ^ u64::from(trial));
            let (state, user, function, required) = scaling_fixture(n_roles, &mut rng);
            let dynamic = state.check_authorization(&user, &function, schedule);
            let baseline = StaticBaselineModel::from_state(&state, schedule);
            let (static_allowed, static_receipt) = baseline.meter_check(&user, &required, schedule);
            debug_assert_eq!(dynamic.allowed, static_allowed);
            dynamic_sum += dynamic.cost.total;
            static_sum += static_receipt.total;
        }
        rows.push(ScalingRow {
            n_roles,
            dynamic_mean: dynamic_sum as f64 / f64::from(trials),
            static_mean: static_sum as f64 / f64::from(trials),
        });
    }

    let xs: Vec<f64> = rows.iter().map(|r| r.n_roles as f64).collect();
    let dyn_ys: Vec<f64> = rows.iter().map(|r| r.dynamic_mean).collect();
    let static_ys: Vec<f64> = rows.iter().map(|r| r.static_mean).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(ScalingReport {
        seed,
        trials,
        dynamic: SeriesSummary {
            mean: mean(&dyn_ys),
            fit: least_squares(&xs, &dyn_ys),
        },
        static_baseline: SeriesSummary {
            mean: mean(&static_ys),
            fit: least_squares(&xs, &static_ys),
        },
        rows,
        baseline_note: "static baseline is a reconstructed model: one contract per role, \
                        each checked in turn (one read and one compare per role)"
            .into(),
    })
}
