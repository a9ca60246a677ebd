//! Online synthesis of control fields from the curvature gradient.
//!
//! [`assemble_gradient`] evaluates `∂τ̈/∂g` in closed form from one-, two-
//! and three-site Pauli expectation values. [`optimal_fields`] turns it into
//! the frame of per-site magnitude `β` that maximizes `τ̈`, the
//! [`SchedulerState`] walks the target through `(1,2), (1,3), …, (1,N)`, and
//! [`run_control`] drives an ensemble of chains with one shared pulse.

mod gradient;
mod protocol;
mod scheduler;

pub use gradient::{
    assemble_gradient, grad_purity_curvature_pair, grad_purity_curvature_single, optimal_fields,
    optimal_fields_with_floor, reduced_mask, select_frame, symmetry_breaking_frame, Expectations,
    FieldGradient, GradientOptions, GRADIENT_FLOOR, PAIR_SCALE, SINGLE_SCALE,
};
pub use protocol::{
    ensemble_control_step, replay, run_control, ControlSettings, MaskPolicy, PenaltyScope, MemberReport, RunOutcome,
    TrajectoryRow,
};
pub use scheduler::{SchedulerState, SwitchEvent, SwitchPolicy};
