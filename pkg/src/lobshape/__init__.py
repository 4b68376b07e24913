"""Limit-order-book reconstruction and book-shape statistics."""

__version__ = "0.1.0"

from .book import (  # noqa: E402
    BookDelta,
    Impact,
    LimitOrderBook,
    ShapeSnapshot,
    Side,
    apply_event,
    best_ask,
    best_bid,
    snapshot_shape,
    virtual_price_impact,
)
from .orderflow import (  # noqa: E402
    Kind,
    OrderEvent,
    SessionConfig,
    StreamReport,
    load_config,
    load_stream,
    parse_event_record,
)
from .shape import (  # noqa: E402
    AveragedShape,
    ExponentialTailFit,
    PeriodicPeakDetector,
    ShapeAverager,
    average_shape,
    detect_periodic_peaks,
    fit_exponential_tail,
    locate_maximum,
)
from .volstats import (  # noqa: E402
    DetrendedFluctuation,
    LognormalFit,
    PowerLawTailFit,
    VolumeSeries,
    autocorrelation,
    dfa,
    empirical_log_pdf,
    fit_left_tail_powerlaw,
    fit_lognormal,
    minute_average_volumes,
)
