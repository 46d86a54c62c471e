//! C ABI for the `reachmdp` library.
//!
//! Handles are opaque: the caller only ever holds pointers obtained from
//! this API and releases them with the matching `_free` function. Fallible
//! calls return a status code; `rmdp_last_error` yields a UTF-8 message for
//! the most recent failure on the current thread. Strings returned by the
//! API are owned by the caller and must go back through
//! `rmdp_string_free`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use reachmdp::error::Error;
use reachmdp::model::{parse_mdp, serialize_mdp, FactoredMDP};
use reachmdp::reach::{self, ReachOptions, ReachableSet};
use reachmdp::reduce;
use reachmdp::solve;

/// Success.
pub const RMDP_OK: i32 = 0;
/// Invalid request: bad argument values, missing initial condition, I/O.
pub const RMDP_ERR_USAGE: i32 = 1;
/// The input text is not well formed.
pub const RMDP_ERR_PARSE: i32 = 2;
/// The input parsed but violates a model or file invariant.
pub const RMDP_ERR_VALIDATION: i32 = 3;
/// A configured work or memory budget was exceeded.
pub const RMDP_ERR_CAPACITY: i32 = 4;
/// A restricted solve reached a state outside the solved set.
pub const RMDP_ERR_CLOSURE: i32 = 5;
/// A required pointer argument was null.
pub const RMDP_ERR_NULL: i32 = -1;
/// An input string was not valid UTF-8.
pub const RMDP_ERR_UTF8: i32 = -2;
/// An internal invariant failed; the handle state is unspecified.
pub const RMDP_ERR_PANIC: i32 = -3;

/// Opaque factored MDP handle.
pub struct RmdpModel(FactoredMDP);

/// Opaque reachability-analysis result handle.
pub struct RmdpReachable(ReachableSet);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error_text(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn fail(e: &Error) -> i32 {
    set_error_text(&e.to_string());
    e.exit_code()
}

fn fail_null(what: &str) -> i32 {
    set_error_text(&format!("{what} must not be null"));
    RMDP_ERR_NULL
}

fn guarded(f: impl FnOnce() -> i32) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(_) => {
            set_error_text("internal panic");
            RMDP_ERR_PANIC
        }
    }
}

unsafe fn read_text<'a>(text: *const c_char, what: &str) -> Result<&'a str, i32> {
    if text.is_null() {
        return Err(fail_null(what));
    }
    CStr::from_ptr(text).to_str().map_err(|_| {
        set_error_text(&format!("{what} is not valid UTF-8"));
        RMDP_ERR_UTF8
    })
}

fn give_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .map(CString::into_raw)
        .unwrap_or(ptr::null_mut())
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread; never free it.
#[no_mangle]
pub extern "C" fn rmdp_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Release a string returned by this API. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn rmdp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse and validate a model from its textual form.
#[no_mangle]
pub unsafe extern "C" fn rmdp_model_parse(
    text: *const c_char,
    out: *mut *mut RmdpModel,
) -> i32 {
    guarded(|| {
        if out.is_null() {
            return fail_null("out");
        }
        let text = match read_text(text, "text") {
            Ok(t) => t,
            Err(code) => return code,
        };
        match parse_mdp(text) {
            Ok(mdp) => {
                *out = Box::into_raw(Box::new(RmdpModel(mdp)));
                RMDP_OK
            }
            Err(e) => fail(&e),
        }
    })
}

/// Release a model handle. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn rmdp_model_free(model: *mut RmdpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Canonical textual form of the model; null only on allocation failure.
#[no_mangle]
pub unsafe extern "C" fn rmdp_model_serialize(model: *const RmdpModel) -> *mut c_char {
    if model.is_null() {
        fail_null("model");
        return ptr::null_mut();
    }
    give_string(serialize_mdp(&(*model).0))
}

#[no_mangle]
pub unsafe extern "C" fn rmdp_model_variable_count(model: *const RmdpModel) -> usize {
    if model.is_null() {
        return 0;
    }
    (*model).0.variables.len()
}

#[no_mangle]
pub unsafe extern "C" fn rmdp_model_action_count(model: *const RmdpModel) -> usize {
    if model.is_null() {
        return 0;
    }
    (*model).0.actions.len()
}

/// Total number of joint states, as a decimal string (the count can
/// overflow any fixed-width integer).
#[no_mangle]
pub unsafe extern "C" fn rmdp_model_state_count(model: *const RmdpModel) -> *mut c_char {
    if model.is_null() {
        fail_null("model");
        return ptr::null_mut();
    }
    give_string((*model).0.state_count().to_string())
}

/// Run the reachability analysis at arity bound `k`. Pass 0 for
/// `max_compound` or `max_candidates` to use the defaults.
#[no_mangle]
pub unsafe extern "C" fn rmdp_analyze(
    model: *const RmdpModel,
    k: usize,
    max_compound: usize,
    max_candidates: u64,
    out: *mut *mut RmdpReachable,
) -> i32 {
    guarded(|| {
        if model.is_null() {
            return fail_null("model");
        }
        if out.is_null() {
            return fail_null("out");
        }
        let mdp = &(*model).0;
        let init = match &mdp.init {
            Some(init) => init.clone(),
            None => {
                return fail(&Error::Usage(
                    "the model declares no initial condition".to_string(),
                ))
            }
        };
        let defaults = ReachOptions::default();
        let opts = ReachOptions {
            max_compound: if max_compound == 0 {
                defaults.max_compound
            } else {
                max_compound
            },
            max_candidates: if max_candidates == 0 {
                defaults.max_candidates
            } else {
                max_candidates
            },
        };
        match reach::reachable_k(mdp, &init, k, &opts) {
            Ok(rs) => {
                *out = Box::into_raw(Box::new(RmdpReachable(rs)));
                RMDP_OK
            }
            Err(e) => fail(&e),
        }
    })
}

/// Release an analysis handle. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn rmdp_reachable_free(rs: *mut RmdpReachable) {
    if !rs.is_null() {
        drop(Box::from_raw(rs));
    }
}

#[no_mangle]
pub unsafe extern "C" fn rmdp_reachable_k(rs: *const RmdpReachable) -> usize {
    if rs.is_null() {
        return 0;
    }
    (*rs).0.k
}

#[no_mangle]
pub unsafe extern "C" fn rmdp_reachable_iterations(rs: *const RmdpReachable) -> usize {
    if rs.is_null() {
        return 0;
    }
    (*rs).0.iterations
}

#[no_mangle]
pub unsafe extern "C" fn rmdp_reachable_value_count(rs: *const RmdpReachable) -> usize {
    if rs.is_null() {
        return 0;
    }
    (*rs).0.values.len()
}

#[no_mangle]
pub unsafe extern "C" fn rmdp_reachable_constraint_count(rs: *const RmdpReachable) -> usize {
    if rs.is_null() {
        return 0;
    }
    (*rs).0.excl.len()
}

/// Textual form of an analysis result, resolving ids against `model`.
#[no_mangle]
pub unsafe extern "C" fn rmdp_reachable_serialize(
    model: *const RmdpModel,
    rs: *const RmdpReachable,
) -> *mut c_char {
    if model.is_null() || rs.is_null() {
        fail_null(if model.is_null() { "model" } else { "rs" });
        return ptr::null_mut();
    }
    give_string(reach::serialize_reachable(&(*model).0, &(*rs).0))
}

/// Parse an analysis result, resolving names against `model`.
#[no_mangle]
pub unsafe extern "C" fn rmdp_reachable_parse(
    text: *const c_char,
    model: *const RmdpModel,
    out: *mut *mut RmdpReachable,
) -> i32 {
    guarded(|| {
        if model.is_null() {
            return fail_null("model");
        }
        if out.is_null() {
            return fail_null("out");
        }
        let text = match read_text(text, "text") {
            Ok(t) => t,
            Err(code) => return code,
        };
        match reach::parse_reachable(text, &(*model).0) {
            Ok(rs) => {
                *out = Box::into_raw(Box::new(RmdpReachable(rs)));
                RMDP_OK
            }
            Err(e) => fail(&e),
        }
    })
}

/// Count the states consistent with an analysis, as a decimal string.
#[no_mangle]
pub unsafe extern "C" fn rmdp_count_consistent(
    model: *const RmdpModel,
    rs: *const RmdpReachable,
    out: *mut *mut c_char,
) -> i32 {
    guarded(|| {
        if model.is_null() {
            return fail_null("model");
        }
        if rs.is_null() {
            return fail_null("rs");
        }
        if out.is_null() {
            return fail_null("out");
        }
        match reach::count_consistent(&(*rs).0, &(*model).0) {
            Ok(n) => {
                *out = give_string(n.to_string());
                RMDP_OK
            }
            Err(e) => fail(&e),
        }
    })
}

/// Prune a model against an analysis result; on success the new model is
/// an independent handle.
#[no_mangle]
pub unsafe extern "C" fn rmdp_reduce(
    model: *const RmdpModel,
    rs: *const RmdpReachable,
    out: *mut *mut RmdpModel,
) -> i32 {
    guarded(|| {
        if model.is_null() {
            return fail_null("model");
        }
        if rs.is_null() {
            return fail_null("rs");
        }
        if out.is_null() {
            return fail_null("out");
        }
        match reduce::reduce_mdp(&(*model).0, &(*rs).0) {
            Ok(reduced) => {
                *out = Box::into_raw(Box::new(RmdpModel(reduced)));
                RMDP_OK
            }
            Err(e) => fail(&e),
        }
    })
}

/// Enumerate states (restricted by `rs` when non-null), run value
/// iteration to `tol`, and return the solution dump.
#[no_mangle]
pub unsafe extern "C" fn rmdp_solve(
    model: *const RmdpModel,
    rs: *const RmdpReachable,
    tol: f64,
    out: *mut *mut c_char,
) -> i32 {
    guarded(|| {
        if model.is_null() {
            return fail_null("model");
        }
        if out.is_null() {
            return fail_null("out");
        }
        if !(tol > 0.0) {
            return fail(&Error::Usage(format!(
                "tol must be positive, got {tol}"
            )));
        }
        let mdp = &(*model).0;
        let restriction = if rs.is_null() { None } else { Some(&(*rs).0) };
        let run = || -> Result<String, Error> {
            let states = solve::enumerate_states(mdp, restriction, solve::DEFAULT_ENUM_CAP)?;
            let (vf, pi) = solve::value_iteration(mdp, &states, tol)?;
            Ok(solve::serialize_solution(mdp, &states, &vf, &pi, tol))
        };
        match run() {
            Ok(text) => {
                *out = give_string(text);
                RMDP_OK
            }
            Err(e) => fail(&e),
        }
    })
}
