from sme_corrfit.simulation.smesim import (
    SimConfig,
    TrajectoryBatch,
    bin_rng,
    cptp_step,
    simulate_batch,
    simulate_record,
    split_record,
    step_diffusive,
    step_jump,
)
from sme_corrfit.simulation.batch_io import (
    batch_frame,
    export_batch_csv,
    load_batch,
    save_batch,
)
