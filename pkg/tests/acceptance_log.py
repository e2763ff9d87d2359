"""Shared record of acceptance outcomes, printed at the end of the session."""

RESULTS = {}


def record(cid, status, detail):
    RESULTS[cid] = f"{cid} {status}: {detail}"
