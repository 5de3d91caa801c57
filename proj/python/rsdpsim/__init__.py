"""Regime-switching diffusion simulation: python face of the C++ core."""

try:
    # Installed layout: the compiled module sits inside this package.
    from rsdpsim._rsdpsim import *  # noqa: F401,F403
    from rsdpsim._rsdpsim import __version__  # noqa: F401
except ImportError:
    # Build-tree layout: the compiled module is on PYTHONPATH by itself.
    from _rsdpsim import *  # noqa: F401,F403
    from _rsdpsim import __version__  # noqa: F401

__all__ = [
    "Model",
    "RsdpError",
    "check",
    "coupling_time_bound",
    "dominating_generator",
    "eta_bar",
    "load_model_file",
    "meeting_times",
    "model_from_json",
    "simulate",
    "strong_error",
    "wasserstein",
]
