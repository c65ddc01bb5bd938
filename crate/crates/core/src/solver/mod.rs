//! The operator `P_g = Δ_g + c`, the critical-point solve, the top of the
//! spectrum, eigen-expansions and constant-flux family scans.

mod assembly;
mod critical;
mod expansion;
mod scan;
mod spectrum;

pub use assembly::{background_operator, background_potential, OperatorAssembly};
pub use critical::{
    solve_background_form, solve_critical_point, solve_critical_point_from,
    solve_critical_point_given, CriticalPoint, Positivity, SOLVE_MAX_ITER, SOLVE_TOL,
    UNDERSHOOT_TOL,
};
pub use expansion::{expansion_from_spectrum, expansion_potential, ExpansionReport, ExpansionTerm};
pub use scan::{
    family_scan, Crossing, ScanPoint, ScanTrace, ALPHA_BRACKET_TOL, LAMBDA_BRACKET_TOL,
};
pub use spectrum::{
    principal_eigenpair, spectrum, spectrum_with, SpectrumMethod, SpectrumOptions, SpectrumReport,
    DENSE_LIMIT, RESONANCE_TOL,
};

pub(crate) use assembly::check_g_newton;
