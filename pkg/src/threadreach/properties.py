"""Built-in property observers: error-location reachability and deadlock freedom."""

from __future__ import annotations

from threadreach.cfa import CfaSet
from threadreach.threads import EnabledMove, ThreadingState, blocked_on_sync, threading_transfer


def check_error(s) -> bool:
    """True iff some live thread sits at an error location."""
    threading = getattr(s, "threading", s)
    return any(loc.is_error for _, loc, _ in threading.threads)


def check_deadlock(s: ThreadingState, moves: list[EnabledMove], cfa: CfaSet) -> bool:
    """No thread can move and at least one waits on a lock or a join.

    ``moves`` must be computed without partial-order reduction; threads that
    merely finished (sitting at their exit) do not count as blocked.
    """
    if moves or not s.threads:
        return False
    return bool(blocked_on_sync(s, cfa))


def check_deadlock_state(s: ThreadingState, cfa: CfaSet) -> bool:
    return check_deadlock(s, threading_transfer(s, cfa, por=False), cfa)
