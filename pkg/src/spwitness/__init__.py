"""Witnessing single-photon entanglement with local homodyne measurements.

Modules
-------
fock        truncated two-mode states, beam splitting, loss
homodyne    quadrature wavefunctions, exact correlators, Monte Carlo sampling
witness     the CHSH-type witness parameter from data or states
tomography  pattern-function estimates of local photon statistics
bounds      separable bounds, certificates and verdicts
sdp         small dense SDP solver with certified dual bounds
cli         command-line driver
"""

from .bounds import (
    BoundResult,
    analytic_multiphoton_bound,
    bound_with_uncertainties,
    build_certificate,
    partial_transpose_01,
    pjoint_closed_form_bound,
    qubit_s_max,
    qubit_sep_bound,
    sdp_enhanced_bound,
    sdp_original_bound,
    sep_bound_lossy,
    verdict,
)
from .fock import (
    FockCutoff,
    LossParams,
    SingleModeState,
    TwoModeState,
    apply_loss,
    beam_splitter_split,
    heralded_source_state,
    km_equivalent,
    local_photon_probs,
    lossy_bell_state,
    temporal_overlap_efficiency,
)
from .homodyne import SampleBatch, exact_s, sample_batch
from .tomography import LocalPhotonStats, estimate_local_probs, p_star
from .witness import WitnessResult, s_exact_qubit, s_from_samples, s_lossy, s_phase_averaged_from_samples

__version__ = "0.1.0"
