"""
Host resource probes used for worker sizing and run provenance.
"""

import os
import platform
from typing import Dict, Any

# Optional psutil import with fallback
try:
    import psutil
    PSUTIL_AVAILABLE = True
except ImportError:
    psutil = None
    PSUTIL_AVAILABLE = False


def physical_cpu_count() -> int:
    """Physical cores if psutil can tell, else logical cores, never below 1."""
    count = None
    if PSUTIL_AVAILABLE:
        count = psutil.cpu_count(logical=False) or psutil.cpu_count(logical=True)
    if not count:
        count = os.cpu_count()
    return max(1, int(count or 1))


def host_snapshot() -> Dict[str, Any]:
    """Static host description recorded in run manifests."""
    snapshot: Dict[str, Any] = {
        "python": platform.python_version(),
        "platform": platform.platform(),
        "cpu_physical": physical_cpu_count(),
    }
    if not PSUTIL_AVAILABLE:
        snapshot["note"] = "psutil not available"
        return snapshot

    try:
        memory = psutil.virtual_memory()
        snapshot["cpu_logical"] = psutil.cpu_count(logical=True)
        snapshot["memory_total_gb"] = round(memory.total / (1024**3), 2)
    except Exception as e:
        snapshot["error"] = str(e)
    return snapshot
