"""Run-directory output: ledger CSV, snapshots, convergence CSV.

The ledger column list below is a frozen contract; downstream tools
parse it by name.  Snapshots carry a text header (dims, spacing, field
list, time) followed by row-major float64 binary blocks, one per field,
and round-trip bit-exactly.

Writing happens on a dedicated thread fed immutable state copies, so
the time loop never blocks on disk.
"""

from __future__ import annotations

import csv
import os
import queue
import threading

import numpy as np

__all__ = [
    "LEDGER_COLUMNS", "SNAPSHOT_MAGIC", "RunWriter",
    "write_snapshot", "read_snapshot", "read_ledger",
    "write_convergence_csv", "read_convergence_csv",
]

# Frozen contract: do not reorder or rename.
LEDGER_COLUMNS = (
    "step", "t", "tau",
    "kinetic", "stored", "total",
    "diss_stokes", "diss_hyper", "diss_plastic", "diss_damage",
    "diss_diffusion", "power_gravity",
    "residual", "cum_residual",
    "min_rho", "min_detFe", "max_absFe", "max_inv_detFe",
    "trunc_active_frac", "newton_iters", "transport_iters",
)

SNAPSHOT_MAGIC = "eulervisc-snapshot 1"

_SNAP_FIELDS = ("rho", "v", "Fe", "xi", "alpha")


def write_snapshot(path, state, grid):
    """Text header + row-major float64 binary blocks, one per field."""
    fields = list(_SNAP_FIELDS) + (["mu"] if state.mu is not None else [])
    with open(path, "wb") as fh:
        lines = [
            SNAPSHOT_MAGIC,
            "dims: " + " ".join(str(n) for n in grid.shape),
            "spacing: " + " ".join(repr(h) for h in grid.spacing),
            "bc: " + grid.bc,
            "time: " + repr(float(state.t)),
            "fields: " + " ".join(fields),
            "layout: row-major float64 binary, grid axes then components",
            "end-header",
        ]
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        for name in fields:
            arr = np.ascontiguousarray(getattr(state, name), dtype=np.float64)
            fh.write(arr.tobytes())


def read_snapshot(path):
    """Inverse of write_snapshot; returns (meta dict, {field: array})."""
    with open(path, "rb") as fh:
        header = []
        while True:
            line = fh.readline().decode("ascii").rstrip("\n")
            if line == "end-header":
                break
            if not line:
                raise ValueError("truncated snapshot header in %s" % path)
            header.append(line)
        if header[0] != SNAPSHOT_MAGIC:
            raise ValueError("not a snapshot file: %s" % path)
        meta = {}
        for line in header[1:]:
            key, _, val = line.partition(": ")
            meta[key] = val
        dims = tuple(int(n) for n in meta["dims"].split())
        d = len(dims)
        meta["dims"] = dims
        meta["spacing"] = tuple(float(x) for x in meta["spacing"].split())
        meta["time"] = float(meta["time"])
        fields = meta["fields"].split()
        meta["fields"] = fields
        shapes = {
            "rho": dims, "alpha": dims, "mu": dims,
            "v": dims + (d,), "xi": dims + (d,), "Fe": dims + (3, 3),
        }
        out = {}
        for name in fields:
            shape = shapes[name]
            count = int(np.prod(shape))
            arr = np.fromfile(fh, dtype=np.float64, count=count)
            if arr.size != count:
                raise ValueError("truncated snapshot data in %s" % path)
            out[name] = arr.reshape(shape)
    return meta, out


def read_ledger(path):
    """Ledger CSV -> {column: float array}; validates the frozen header."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != LEDGER_COLUMNS:
            raise ValueError(
                "ledger header does not match the frozen contract in %s" % path
            )
        rows = [[float(x) for x in row] for row in reader]
    data = np.array(rows, dtype=float).reshape(len(rows), len(LEDGER_COLUMNS))
    return {name: data[:, i] for i, name in enumerate(LEDGER_COLUMNS)}


class RunWriter:
    """Streams ledger rows and periodic snapshots for one run.

    `sink(state, report, ledger)` matches the time-loop callback; the
    actual disk writes happen on a worker thread fed deep copies.
    """

    def __init__(self, out_dir, grid, snapshot_every=0):
        self.out_dir = out_dir
        self.grid = grid
        self.snapshot_every = int(snapshot_every)
        self.step = 0
        self.cum_residual = 0.0
        os.makedirs(out_dir, exist_ok=True)
        self._fh = open(os.path.join(out_dir, "ledger.csv"), "w", newline="")
        self._csv = csv.writer(self._fh)
        self._csv.writerow(LEDGER_COLUMNS)
        self._queue = queue.Queue(maxsize=64)
        self._error = None
        self._worker = threading.Thread(target=self._drain, daemon=True)
        self._worker.start()

    def _drain(self):
        while True:
            item = self._queue.get()
            if item is None:
                return
            kind, payload = item
            try:
                if kind == "row":
                    self._csv.writerow(payload)
                else:
                    path, state = payload
                    write_snapshot(path, state, self.grid)
            except Exception as exc:  # surfaced on close()
                self._error = exc

    def sink(self, state, report, led):
        self.step += 1
        self.cum_residual += abs(led.residual)
        mon = report.monitors
        row = [
            self.step, led.t, led.tau,
            led.kinetic, led.stored, led.total,
            led.diss_stokes, led.diss_hyper, led.diss_plastic,
            led.diss_damage, led.diss_diffusion, led.power_gravity,
            led.residual, self.cum_residual,
            mon["min_rho"], mon["min_detFe"], mon["max_absFe"],
            mon["max_inv_detFe"], mon["trunc_active_frac"],
            report.newton_iters, report.transport_iters,
        ]
        self._queue.put(("row", ["%.17g" % x for x in row]))
        if self.snapshot_every and self.step % self.snapshot_every == 0:
            self.write_state(state)

    def write_state(self, state, tag=None):
        name = "snap_%06d.dat" % self.step if tag is None else "snap_%s.dat" % tag
        path = os.path.join(self.out_dir, name)
        self._queue.put(("snap", (path, state.copy())))

    def close(self):
        self._queue.put(None)
        self._worker.join()
        self._fh.close()
        if self._error is not None:
            raise self._error


# ---------------------------------------------------------------------------
# convergence study CSV

_CONV_COLUMNS = ("field", "level", "tau", "diff", "order")


def write_convergence_csv(path, rows):
    """rows: iterables (field, level, tau, diff, order); `diff` is the
    norm of the change to the next-finer level, `order` the study-wide
    observed order for that field (repeated per row, NaN if undefined)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CONV_COLUMNS)
        for row in rows:
            field, level, tau, diff, order = row
            writer.writerow([field, level, "%.17g" % tau, "%.17g" % diff,
                             "%.17g" % order])


def read_convergence_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != _CONV_COLUMNS:
            raise ValueError("unexpected convergence CSV header in %s" % path)
        rows = []
        for field, level, tau, diff, order in reader:
            rows.append((field, int(level), float(tau), float(diff), float(order)))
    return rows
