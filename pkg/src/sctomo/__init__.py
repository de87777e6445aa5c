"""Self-calibrating quantum state tomography.

Reconstructs one- and two-qubit density matrices from photon counts when the
basis-changing rotations have an unknown angle, recovering the state (up to
its z gauge) and the angle magnitude jointly by maximum likelihood.
"""

from .operators import (
    DensityMatrix,
    KET_H,
    KET_L,
    KET_R,
    KET_V,
    PAULIS_1Q,
    SIGMA_0,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    as_density,
    concurrence,
    density_from_tparams,
    fidelity,
    fidelity_up_to_z,
    pauli_basis,
    pauli_compose,
    pauli_decompose,
    project_to_physical,
    purity,
    tensor_product,
    tparams_from_density,
)
from .measurements import (
    DesignMatrix,
    MeasurementSetting,
    PORT_COMPLEMENT,
    PORT_PRIMARY,
    PROTOCOLS,
    PulseSpec,
    RotationSpec,
    SettingSet,
    design_matrix,
    measurement_operator,
    pulse_to_rotation,
    rotation_unitary,
    sct_settings_1q,
    sct_settings_2q,
    setting_set_from_dict,
    setting_set_to_dict,
    st_settings_1q,
    st_settings_2q,
)
from .simulate import (
    CountRecord,
    ExperimentConfig,
    SourceSpec,
    expected_counts,
    fourteen_state_suite,
    group_normalizations,
    normalization_from_complement,
    read_counts_csv,
    resolve_state,
    sample_counts,
    write_counts_csv,
)
from .estimate import (
    DegenerateDesignError,
    LikelihoodModel,
    OptimizerConfig,
    ReconstructionResult,
    likelihood,
    likelihood_gradient_fd,
    linear_inversion,
    mle_sct,
    mle_st,
    reconstruct_from_records,
)
from .analysis import (
    CompareResult,
    ErrorBars,
    SweepCell,
    SweepPoint,
    SweepReport,
    bloch_coordinates,
    compare_sct_st,
    monte_carlo_errors,
    noise_sweep,
    retardance_sweep,
)

__version__ = "0.1.0"
