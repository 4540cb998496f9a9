"""Mirror Langevin sampling on constrained domains, with a numerical verification harness."""
from importlib.metadata import PackageNotFoundError, version

from .engine import BrownianPath, ChainState, SampleSet, em_fine_reference, gbm_exact, mla_step_dual, \
    mla_step_primal, run_chains, synchronous_pair
from .errors import DomainViolation, MllError, NoConvergence, StepTooLarge, Unsupported
from .mirror_maps import Gbm1d, MirrorMap, OrthantLogBarrier, PolytopeLogBarrier, Quadratic, map_from_config
from .potentials import DualTarget, Potential, QuadraticGaussian, RelativeAffine, potential_from_config
from .transport import W2Estimate, w2_1d, w2_assignment, w2_phi, w2_sliced

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"
