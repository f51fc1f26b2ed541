"""Structure-preserving mixed finite elements for port-Hamiltonian systems."""
from .models import MODELS, ModelConfig, Problem, build, reference_omega
from .phcore import ReducedPHS, reduce
from .spectra import convergence_study, eigenfrequencies, spectrum_for
from .sim import BoundarySignal, Trajectory, simulate, step_midpoint, step_rk4
from .verify import VerificationReport, run_all

__version__ = "0.1.0"
