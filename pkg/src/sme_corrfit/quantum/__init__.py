from sme_corrfit.quantum.operators import (
    check_density_matrix,
    coherent_dm,
    dag,
    expect,
    fock_dm,
    make_fock_ops,
    make_qubit_ops,
    parity_operator,
    trace_distance,
)
from sme_corrfit.quantum.model import (
    DIFFUSIVE,
    JUMP,
    STEADY,
    ConcreteModel,
    DetectorSpec,
    FamilySettings,
    ModelFamily,
    ParameterSpec,
    correlation_superop_apply,
    instantiate,
    liouvillian_apply,
    model_fingerprint,
)
from sme_corrfit.quantum.lindblad import (
    OdeSolverConfig,
    evolve_me,
    expm_action,
    integrate,
    steady_state,
)
from sme_corrfit.quantum.families import FAMILIES, HZ, KHZ, get_family
