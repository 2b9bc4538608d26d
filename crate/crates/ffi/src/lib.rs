//! C ABI over `bagclean`.
//!
//! Every entry point returns a [`BcStatus`]; on failure a description is
//! available from [`bc_last_error`] on the same thread. Objects cross the
//! boundary as opaque handles (`BcRuleSet`, `BcDataset`, `BcRun`) created by
//! `bc_ruleset_from_json`, `bc_dataset_read`, `bc_generate` and `bc_train`,
//! and released with the matching `*_free`. Panics never unwind into C:
//! they are caught and reported as `BC_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::io::ErrorKind;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use bagclean::classifier::ClassifierCheckpoint;
use bagclean::datagen::{generate, GenConfig};
use bagclean::dataset::{read_dataset, write_dataset, Dataset};
use bagclean::policy::{pr_transform, ActionDistribution, PolicyCheckpoint};
use bagclean::rules::{compile_rules, RuleSet};
use bagclean::trainer::{train, write_metrics_csv, Mode, TrainConfig, TrainOutcome};
use bagclean::Error;

pub const BC_MODE_PR: u32 = 0;
pub const BC_MODE_VANILLA: u32 = 1;
pub const BC_MODE_NOSELECT: u32 = 2;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    NotFound = 5,
    Config = 6,
    Dimension = 7,
    Validation = 8,
    Panic = 9,
}

impl From<&Error> for BcStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::RulesParse(_) | Error::RuleInvalid { .. } | Error::Parse { .. } | Error::Json(_) => BcStatus::Parse,
            Error::Dimension { .. } => BcStatus::Dimension,
            Error::UnknownEntity(_) | Error::UnknownRelation(_) | Error::Validation(_) => BcStatus::Validation,
            Error::Argument(_) => BcStatus::InvalidArgument,
            Error::Config(_) => BcStatus::Config,
            Error::Io { source, .. } if source.kind() == ErrorKind::NotFound => BcStatus::NotFound,
            Error::Io { .. } => BcStatus::Io,
        }
    }
}

/// Options for [`bc_train`]. Start from [`bc_train_options_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BcTrainOptions {
    /// One of `BC_MODE_PR`, `BC_MODE_VANILLA`, `BC_MODE_NOSELECT`.
    pub mode: u32,
    pub episodes: u64,
    pub seed: u64,
    pub lr_policy: f64,
    pub lr_classifier: f64,
    pub tau: f64,
    pub pretrain_steps: u64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BcEpisodeStats {
    pub episode: u64,
    pub mean_reward: f64,
    pub selection_rate: f64,
    pub matched_selection_rate: f64,
    /// NaN when the dataset has no gold selection labels.
    pub selection_f1: f64,
}

pub struct BcRuleSet {
    inner: RuleSet,
}

pub struct BcDataset {
    inner: Dataset,
}

pub struct BcRun {
    outcome: TrainOutcome,
    dataset: Dataset,
    config: TrainConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn fail(status: BcStatus, message: impl Into<String>) -> BcStatus {
    set_error(message.into());
    status
}

/// Run `body`, translating errors and panics into a status.
fn guard(body: impl FnOnce() -> Result<(), BcStatus>) -> BcStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => BcStatus::Ok,
        Ok(Err(status)) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(BcStatus::Panic, format!("panic: {msg}"))
        }
    }
}

fn lib_err(e: Error) -> BcStatus {
    let status = BcStatus::from(&e);
    fail(status, e.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, BcStatus> {
    if p.is_null() {
        return Err(fail(BcStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(BcStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, BcStatus> {
    str_arg(p, what).map(PathBuf::from)
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, BcStatus> {
    p.as_ref()
        .ok_or_else(|| fail(BcStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, BcStatus> {
    p.as_mut()
        .ok_or_else(|| fail(BcStatus::NullPointer, format!("{what} is null")))
}

/// Message for the most recent failure on this thread, or null if none.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn bc_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Rule-boosted selection probability for a base probability `p_select` in [0, 1].
///
/// # Safety
/// `out` must be null or point to writable memory for one `double`.
#[no_mangle]
pub unsafe extern "C" fn bc_pr_transform(p_select: f64, out: *mut f64) -> BcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if !(0.0..=1.0).contains(&p_select) {
            return Err(fail(
                BcStatus::InvalidArgument,
                format!("p_select = {p_select} not in [0, 1]"),
            ));
        }
        *out = pr_transform(ActionDistribution::from_select(p_select)).p_select;
        Ok(())
    })
}

/// Compile a rules JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn bc_ruleset_from_json(json: *const c_char, out: *mut *mut BcRuleSet) -> BcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let inner = compile_rules(str_arg(json, "json")?).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(BcRuleSet { inner }));
        Ok(())
    })
}

/// # Safety
/// `rules` must be null or a live handle from this library; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bc_ruleset_len(rules: *const BcRuleSet, out: *mut usize) -> BcStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(rules, "rules")?.inner.len();
        Ok(())
    })
}

/// # Safety
/// `rules` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bc_ruleset_free(rules: *mut BcRuleSet) {
    if !rules.is_null() {
        drop(Box::from_raw(rules));
    }
}

/// Read a dataset file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn bc_dataset_read(path: *const c_char, out: *mut *mut BcDataset) -> BcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let inner = read_dataset(path_arg(path, "path")?).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(BcDataset { inner }));
        Ok(())
    })
}

/// Generate a synthetic dataset and its rules. `config_json` holds generator
/// settings (null for defaults); `seed` overrides the config's seed.
///
/// # Safety
/// `config_json` must be null or NUL-terminated; the out pointers writable.
#[no_mangle]
pub unsafe extern "C" fn bc_generate(
    config_json: *const c_char,
    seed: u64,
    dataset_out: *mut *mut BcDataset,
    rules_out: *mut *mut BcRuleSet,
) -> BcStatus {
    guard(|| {
        let dataset_out = out_arg(dataset_out, "dataset_out")?;
        let rules_out = out_arg(rules_out, "rules_out")?;
        let mut config: GenConfig = if config_json.is_null() {
            GenConfig::default()
        } else {
            serde_json::from_str(str_arg(config_json, "config_json")?).map_err(|e| lib_err(e.into()))?
        };
        config.seed = seed;
        let g = generate(&config).map_err(lib_err)?;
        *dataset_out = Box::into_raw(Box::new(BcDataset { inner: g.dataset }));
        *rules_out = Box::into_raw(Box::new(BcRuleSet { inner: g.rules }));
        Ok(())
    })
}

/// # Safety
/// `dataset` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn bc_dataset_write(dataset: *const BcDataset, path: *const c_char) -> BcStatus {
    guard(|| {
        let d = ref_arg(dataset, "dataset")?;
        write_dataset(&d.inner, path_arg(path, "path")?).map_err(lib_err)
    })
}

/// # Safety
/// `dataset` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bc_dataset_bag_count(dataset: *const BcDataset, out: *mut usize) -> BcStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(dataset, "dataset")?.inner.bags.len();
        Ok(())
    })
}

/// # Safety
/// `dataset` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bc_dataset_free(dataset: *mut BcDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

#[no_mangle]
pub extern "C" fn bc_train_options_default() -> BcTrainOptions {
    let d = TrainConfig::default();
    BcTrainOptions {
        mode: BC_MODE_PR,
        episodes: d.episodes as u64,
        seed: d.seed,
        lr_policy: d.lr_policy,
        lr_classifier: d.lr_classifier,
        tau: d.tau,
        pretrain_steps: d.pretrain_steps as u64,
    }
}

fn to_config(o: &BcTrainOptions) -> Result<TrainConfig, BcStatus> {
    let mode = match o.mode {
        BC_MODE_PR => Mode::Pr,
        BC_MODE_VANILLA => Mode::Vanilla,
        BC_MODE_NOSELECT => Mode::NoSelect,
        m => return Err(fail(BcStatus::InvalidArgument, format!("unknown mode {m}"))),
    };
    let count = |v: u64, what: &str| {
        usize::try_from(v).map_err(|_| fail(BcStatus::InvalidArgument, format!("{what} = {v} too large")))
    };
    Ok(TrainConfig {
        mode,
        episodes: count(o.episodes, "episodes")?,
        seed: o.seed,
        lr_policy: o.lr_policy,
        lr_classifier: o.lr_classifier,
        tau: o.tau,
        pretrain_steps: count(o.pretrain_steps, "pretrain_steps")?,
        ..TrainConfig::default()
    })
}

/// Train on `dataset`. `rules` may be null except in PR mode; `options`
/// may be null for defaults.
///
/// # Safety
/// Handles must be live; `options` null or readable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bc_train(
    dataset: *const BcDataset,
    rules: *const BcRuleSet,
    options: *const BcTrainOptions,
    out: *mut *mut BcRun,
) -> BcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let dataset = ref_arg(dataset, "dataset")?;
        let empty = RuleSet::empty();
        let rules = rules.as_ref().map_or(&empty, |r| &r.inner);
        let options = options.as_ref().copied().unwrap_or_else(|| bc_train_options_default());
        let config = to_config(&options)?;
        let outcome = train(&dataset.inner, rules, &config).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(BcRun {
            outcome,
            dataset: dataset.inner.clone(),
            config,
        }));
        Ok(())
    })
}

/// # Safety
/// `run` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bc_run_episode_count(run: *const BcRun, out: *mut usize) -> BcStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(run, "run")?.outcome.episodes.len();
        Ok(())
    })
}

/// # Safety
/// `run` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bc_run_episode_stats(run: *const BcRun, index: usize, out: *mut BcEpisodeStats) -> BcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let episodes = &ref_arg(run, "run")?.outcome.episodes;
        let e = episodes.get(index).ok_or_else(|| {
            fail(
                BcStatus::InvalidArgument,
                format!("episode {index} out of range ({} episodes)", episodes.len()),
            )
        })?;
        *out = BcEpisodeStats {
            episode: e.episode as u64,
            mean_reward: e.mean_reward,
            selection_rate: e.selection_rate,
            matched_selection_rate: e.matched_selection_rate,
            selection_f1: e.selection_f1.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

/// Write the per-episode metrics CSV.
///
/// # Safety
/// `run` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn bc_run_write_metrics(run: *const BcRun, path: *const c_char) -> BcStatus {
    guard(|| {
        let run = ref_arg(run, "run")?;
        write_metrics_csv(&run.outcome.episodes, path_arg(path, "path")?).map_err(lib_err)
    })
}

/// Write the trained policy and classifier checkpoints as JSON.
///
/// # Safety
/// `run` must be a live handle; both paths NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn bc_run_write_checkpoints(
    run: *const BcRun,
    policy_path: *const c_char,
    classifier_path: *const c_char,
) -> BcStatus {
    guard(|| {
        let run = ref_arg(run, "run")?;
        let policy_path = path_arg(policy_path, "policy_path")?;
        let classifier_path = path_arg(classifier_path, "classifier_path")?;
        let meta = &run.dataset.meta;
        let state = &run.outcome.state;
        PolicyCheckpoint::new(&state.policy_live, meta.d_s, meta.d_e)
            .save(policy_path)
            .map_err(lib_err)?;
        ClassifierCheckpoint::new(&state.classifier_live, &meta.relations, run.config.hash_seed)
            .save(classifier_path)
            .map_err(lib_err)
    })
}

/// # Safety
/// `run` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bc_run_free(run: *mut BcRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
