"""Error-bounded progressive compression of scientific floating-point fields.

Typical use::

    import ipcomp

    data = ipcomp.compress(ipcomp.FieldGrid.from_array(field), eb=1e-4)
    archive = ipcomp.Archive(data)
    plan = ipcomp.plan_for_error(archive.error_model(), 1e-2)
    coarse, session = ipcomp.reconstruct(archive, plan)
    finer, session = ipcomp.refine(archive, session, coarse,
                                   ipcomp.plan_for_error(archive.error_model(), 1e-3))
"""

from .archive import ArchiveHeader, RetrievalPlan, read_blocks, read_header, write_archive
from .errors import CorruptDataError, InfeasibleRequestError, IPCompError, SessionMismatchError
from .grid import FieldGrid, enumerate_level, level_count
from .metrics import bitrate, compression_ratio, metrics
from .pipeline import Archive, RetrievalSession, compress, reconstruct, refine
from .planner import ErrorModel, bound_for_plan, plan_for_error, plan_for_size
from .predictor import CUBIC, LINEAR, InterpKind

__all__ = [
    "Archive",
    "ArchiveHeader",
    "CUBIC",
    "CorruptDataError",
    "ErrorModel",
    "FieldGrid",
    "IPCompError",
    "InfeasibleRequestError",
    "InterpKind",
    "LINEAR",
    "RetrievalPlan",
    "RetrievalSession",
    "SessionMismatchError",
    "bitrate",
    "bound_for_plan",
    "compress",
    "compression_ratio",
    "enumerate_level",
    "level_count",
    "metrics",
    "plan_for_error",
    "plan_for_size",
    "read_blocks",
    "read_header",
    "reconstruct",
    "refine",
    "write_archive",
]

__version__ = "0.1.0"
