"""Transmit-windowed OFDM simulation, blind window estimation and OFDM
signal cancellation that accounts for the transmit window."""

__version__ = "0.1.0"

from .canceller import (  # noqa: E402
    CancellationReport,
    SignalCanceller,
    cancel_no_window,
    cancel_with_window,
    cancellation_improvement,
    cancellation_ratio,
)
from .constellation import Constellation  # noqa: E402
from .dsp import SampleStream, power_db_ratio, psd, variance  # noqa: E402
from .estimator import (  # noqa: E402
    EstimationTrace,
    EstimatorConfig,
    EstimatorDivergedError,
    WindowEstimator,
    estimate_window,
    gradient_contribution,
    reconstruct_reference,
)
from .impairments import (  # noqa: E402
    CfoModel,
    ChannelModel,
    add_awgn,
    apply_cfo,
    apply_channel,
    random_channel,
)
from .modem import (  # noqa: E402
    OfdmConfig,
    OfdmPacket,
    Preamble,
    demodulate,
    generate_preamble,
    modulate,
    remodulate,
    serialize,
)
from .sync import (  # noqa: E402
    CfoEstimate,
    ChannelEstimate,
    detect_packet,
    estimate_cfo,
    estimate_channel,
    refine_cfo,
)
from .window import (  # noqa: E402
    WindowFunction,
    apply_window,
    raised_cosine_window,
    rectangular_window,
    window_rms_error,
)
