"""airshape: achievable information rates and geometric constellation shaping."""

from .constellation import (
    Constellation,
    ConstellationFormatError,
    LabeledConstellation,
    Labeling,
    Violation,
    gray_labeling,
    normalize,
    read_constellation_file,
    square_qam,
    validate,
    write_constellation_file,
)
from .engine import (
    ChannelSpec,
    GridSpec,
    QuadratureSpec,
    RegionMap,
    awgn_capacity,
    awgn_log_likelihood,
    decision_regions,
    gmi,
    gmi_mc,
    mi,
    mi_mc,
)
from .optimizer import (
    OptimizerConfig,
    OptimizerReport,
    binary_switching,
    optimize,
    pairwise_sweep,
    random_start,
)

__version__ = "0.1.0"
