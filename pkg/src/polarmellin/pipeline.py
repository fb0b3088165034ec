"""Staggered capture / transform / pack / display pipeline.

Four threads cooperate:

* **capture** stands in for the FPA readout: frame ``n`` is triggered when
  step ``n`` opens and becomes available ``capture_latency`` later,
* **transform** runs the LPT on frame ``n - 1`` meanwhile; both meet at a
  barrier before either moves to the next step,
* **pack** interleaves every three transformed frames into one RGB frame,
* **display** stands in for the SLM: it accepts one RGB frame per
  ``1 / rgb_fps`` seconds on its own clock and is busy in between.

Hand-offs between stages are single-slot, so a slow stage stalls its
producer instead of hiding behind a queue. All timing uses
:func:`time.perf_counter`.
"""

from __future__ import annotations

import json
import logging
import math
import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numba
import numpy as np

from .errors import InvalidInputError, InvalidParamsError, SourceError, SourceExhaustedError
from .ft_engine import MAGNITUDE, SPECTRUM_KINDS, spectrum_frame
from .imageio import read_grid, write_ppm
from .lpt import PmtParams, apply_lpt, cached_map, default_workers
from .shapes import render_shape

log = logging.getLogger(__name__)

FRAMES_PER_RGB = 3
CHANNEL_ORDERS = ("rgb", "bgr")
# mono buffers that can be in flight at once: 3 being collected, 3 queued
# for packing, 3 being packed
_MONO_RING = 12
_RGB_RING = 5


@dataclass(frozen=True, eq=False)
class Frame:
    """One frame flowing through the pipeline.

    ``data`` is uint8 with shape ``(H, W)`` for mono or ``(H, W, 3)`` for
    RGB. It must not be modified once the frame has been handed on.
    """

    data: np.ndarray
    sequence: int = 0
    timestamp: float = 0.0

    def __post_init__(self):
        d = self.data
        if d.dtype != np.uint8 or not (d.ndim == 2 or (d.ndim == 3 and d.shape[2] == 3)):
            raise InvalidInputError(f"frame data must be uint8 (H, W) or (H, W, 3), got {d.dtype} {d.shape}")

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def depth(self) -> int:
        """Bytes per pixel: 1 for mono, 3 for RGB."""
        return 1 if self.data.ndim == 2 else 3

    @property
    def bytes(self) -> bytes:
        return np.ascontiguousarray(self.data).tobytes()


@numba.njit(nogil=True, cache=True, boundscheck=False)
def _interleave(first, second, third, out):
    # flat 1D views; 3x faster than indexing the (H, W, 3) array
    for k in range(first.size):
        out[3 * k] = first[k]
        out[3 * k + 1] = second[k]
        out[3 * k + 2] = third[k]


def pack_rgb(triple, channel_order: str = "rgb", out: np.ndarray | None = None) -> Frame:
    """Pack three consecutive mono frames into one RGB frame.

    With ``"rgb"`` the first frame lands in red, the second in green and the
    third in blue, matching the order a DMD shows colour fields. ``"bgr"``
    puts the first frame in blue instead. The RGB frame takes the sequence
    number of the first mono frame.
    """
    if channel_order not in CHANNEL_ORDERS:
        raise InvalidInputError(f"channel_order must be one of {CHANNEL_ORDERS}, got {channel_order!r}")
    triple = list(triple)
    if len(triple) != FRAMES_PER_RGB:
        raise InvalidInputError(f"need exactly 3 frames, got {len(triple)}")
    shape = triple[0].data.shape
    for f in triple:
        if f.depth != 1:
            raise InvalidInputError("pack_rgb takes mono frames only")
        if f.data.shape != shape:
            raise InvalidInputError(f"frame sizes differ: {[t.data.shape for t in triple]}")
    seqs = [f.sequence for f in triple]
    if seqs[1] != seqs[0] + 1 or seqs[2] != seqs[0] + 2:
        raise InvalidInputError(f"frames are not consecutive: sequences {seqs}")
    if out is None:
        out = np.empty((*shape, 3), dtype=np.uint8)
    elif out.shape != (*shape, 3) or out.dtype != np.uint8:
        raise InvalidInputError(f"out must be uint8 {(*shape, 3)}, got {out.dtype} {out.shape}")
    planes = [np.ascontiguousarray(f.data) for f in triple]
    if channel_order == "bgr":
        planes.reverse()
    _interleave(planes[0].reshape(-1), planes[1].reshape(-1), planes[2].reshape(-1), out.reshape(-1))
    return Frame(out, seqs[0], triple[-1].timestamp)


def unpack_rgb(frame: Frame, channel_order: str = "rgb") -> list[Frame]:
    """Inverse of :func:`pack_rgb` (timestamps are not recovered)."""
    if channel_order not in CHANNEL_ORDERS:
        raise InvalidInputError(f"channel_order must be one of {CHANNEL_ORDERS}, got {channel_order!r}")
    if frame.depth != 3:
        raise InvalidInputError("unpack_rgb takes an RGB frame")
    channels = [0, 1, 2] if channel_order == "rgb" else [2, 1, 0]
    return [
        Frame(np.ascontiguousarray(frame.data[:, :, c]), frame.sequence + k, frame.timestamp)
        for k, c in enumerate(channels)
    ]


# --------------------------------------------------------------------------
# frame source


@dataclass(frozen=True)
class ShapeSpec:
    shape: str = "triangle"
    scale: float = 1.0
    rotation_deg: float = 0.0


DEFAULT_SHAPES = (
    ShapeSpec("triangle", 1.0, 0.0),
    ShapeSpec("triangle", 1.5, 30.0),
    ShapeSpec("triangle", 0.75, 60.0),
)


@dataclass(frozen=True)
class Scenario:
    """What the simulated camera sees.

    ``kind="generator"`` renders ``shapes`` and cycles through them forever
    when ``loop`` is set; ``kind="directory"`` replays every PGM / F32 file
    in ``directory`` (sorted by name) once.
    """

    kind: str = "generator"
    shapes: tuple[ShapeSpec, ...] = DEFAULT_SHAPES
    directory: str | None = None
    width: int = 1920
    height: int = 1080
    spectrum_kind: str = MAGNITUDE
    dc_block_radius: float = 4.0
    loop: bool = True

    def __post_init__(self):
        if self.kind not in ("generator", "directory"):
            raise InvalidParamsError(f"scenario kind must be 'generator' or 'directory', got {self.kind!r}")
        if self.kind == "directory" and not self.directory:
            raise InvalidParamsError("directory scenario needs a directory")
        if self.spectrum_kind not in SPECTRUM_KINDS:
            raise InvalidParamsError(f"spectrum_kind must be one of {SPECTRUM_KINDS}")


def _load_images(scenario: Scenario) -> list[np.ndarray]:
    if scenario.kind == "generator":
        return [
            render_shape(s.shape, s.scale, s.rotation_deg, scenario.width, scenario.height) for s in scenario.shapes
        ]
    root = Path(scenario.directory)
    if not root.is_dir():
        raise SourceError(f"{root}: not a readable directory")
    images = []
    for path in sorted(p for p in root.iterdir() if p.is_file()):
        try:
            img = read_grid(path)
        except Exception as exc:
            raise SourceError(f"{path}: {exc}") from exc
        if img.shape != (scenario.height, scenario.width):
            raise SourceError(
                f"{path}: image is {img.shape[1]}x{img.shape[0]}, expected {scenario.width}x{scenario.height}"
            )
        images.append(img)
    return images


def prepare_frames(scenario: Scenario) -> list[np.ndarray]:
    """Quantized centered spectra for every image of the scenario."""
    frames = []
    for img in _load_images(scenario):
        data = spectrum_frame(img, scenario.spectrum_kind, scenario.dc_block_radius)
        data.flags.writeable = False
        frames.append(data)
    return frames


def _sleep_until(deadline: float, clock=time.perf_counter) -> None:
    remaining = deadline - clock()
    if remaining > 0:
        time.sleep(remaining)


def synthetic_source(
    scenario: Scenario | None = None,
    capture_latency: float = 701e-6,
    frames: list[np.ndarray] | None = None,
    clock=time.perf_counter,
) -> Iterator[Frame]:
    """Stream spectrum frames as a camera would, one readout at a time.

    Images are loaded and transformed up front, so file errors surface
    here rather than mid-run. Each frame then becomes available
    ``capture_latency`` seconds after it is requested and is stamped with
    that moment. Pass ``frames`` to skip preparing them from ``scenario``.
    """
    if capture_latency < 0:
        raise InvalidParamsError(f"capture_latency must be >= 0, got {capture_latency}")
    scenario = scenario or Scenario()
    if frames is None:
        frames = prepare_frames(scenario)
    return _stream(frames, scenario.loop, capture_latency, clock)


def _stream(frames, loop, capture_latency, clock):
    if not frames:
        return
    seq = 0
    while True:
        for data in frames:
            _sleep_until(clock() + capture_latency, clock)
            yield Frame(data, seq, clock())
            seq += 1
        if not loop:
            return


# --------------------------------------------------------------------------
# reporting


@dataclass(frozen=True)
class StageStats:
    mean_us: float = 0.0
    p50_us: float = 0.0
    p99_us: float = 0.0
    max_us: float = 0.0
    samples: int = 0

    @classmethod
    def from_seconds(cls, durations) -> "StageStats":
        d = np.asarray(durations, dtype=np.float64) * 1e6
        if d.size == 0:
            return cls()
        return cls(
            float(d.mean()),
            float(np.percentile(d, 50)),
            float(np.percentile(d, 99)),
            float(d.max()),
            int(d.size),
        )

    def to_dict(self) -> dict:
        return {
            "mean_us": self.mean_us,
            "p50_us": self.p50_us,
            "p99_us": self.p99_us,
            "max_us": self.max_us,
            "samples": self.samples,
        }


@dataclass
class TimingReport:
    t_cap: StageStats = field(default_factory=StageStats)
    t_lpt: StageStats = field(default_factory=StageStats)
    t_pack: StageStats = field(default_factory=StageStats)
    t_dis: StageStats = field(default_factory=StageStats)
    mono_fps: float = 0.0
    rgb_fps: float = 0.0
    deadline_misses: int = 0
    frames: int = 0
    rgb_frames: int = 0
    undisplayed: int = 0
    budget_us: float = 0.0
    valid_entries: int = 0
    dc_cols: int = 0
    workers: int = 1
    # raw (start, end) perf_counter intervals, one row per frame
    capture_log: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)), repr=False)
    lpt_log: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)), repr=False)
    display_log: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)), repr=False)
    display_sequences: list[int] = field(default_factory=list, repr=False)

    @property
    def miss_rate(self) -> float:
        return self.deadline_misses / self.frames if self.frames else 0.0

    def to_dict(self) -> dict:
        return {
            "t_cap": self.t_cap.to_dict(),
            "t_lpt": self.t_lpt.to_dict(),
            "t_pack": self.t_pack.to_dict(),
            "t_dis": self.t_dis.to_dict(),
            "mono_fps": self.mono_fps,
            "rgb_fps": self.rgb_fps,
            "deadline_misses": self.deadline_misses,
            "frames": self.frames,
            "rgb_frames": self.rgb_frames,
            "undisplayed": self.undisplayed,
            "budget_us": self.budget_us,
            "valid_entries": self.valid_entries,
            "dc_cols": self.dc_cols,
            "workers": self.workers,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


# --------------------------------------------------------------------------
# the pipeline


@dataclass(frozen=True)
class PipelineConfig:
    """Run settings. Times are in seconds.

    ``lpt_extra_delay`` is a test hook that pads every transform with a
    sleep, to emulate a slower LPT.
    """

    frames: int | None = 10_000
    duration: float | None = None
    capture_latency: float = 701e-6
    rgb_fps: float = 166.0
    channel_order: str = "rgb"
    workers: int = field(default_factory=default_workers)
    scenario: Scenario | None = None
    lpt_extra_delay: float = 0.0
    dump_dir: str | None = None
    dump_limit: int = 3

    def __post_init__(self):
        if not self.rgb_fps > 0:
            raise InvalidParamsError(f"rgb_fps must be > 0, got {self.rgb_fps}")
        if self.capture_latency < 0:
            raise InvalidParamsError(f"capture_latency must be >= 0, got {self.capture_latency}")
        if self.channel_order not in CHANNEL_ORDERS:
            raise InvalidParamsError(f"channel_order must be one of {CHANNEL_ORDERS}")
        if self.workers < 1:
            raise InvalidParamsError(f"workers must be >= 1, got {self.workers}")
        if self.frames is None and self.duration is None:
            raise InvalidParamsError("give a frame count or a duration")
        if self.frames is not None and self.frames < 0:
            raise InvalidParamsError(f"frames must be >= 0, got {self.frames}")
        if self.lpt_extra_delay < 0:
            raise InvalidParamsError("lpt_extra_delay must be >= 0")

    @property
    def frames_per_rgb(self) -> int:
        return FRAMES_PER_RGB

    @property
    def rgb_period(self) -> float:
        return 1.0 / self.rgb_fps

    @property
    def frame_budget(self) -> float:
        """Per mono frame time budget, one third of the RGB period."""
        return self.rgb_period / FRAMES_PER_RGB

    @property
    def frame_count(self) -> int:
        if self.frames is not None:
            return self.frames
        return int(round(self.duration * self.rgb_fps * FRAMES_PER_RGB))


class _StepGate:
    """Two-party step barrier built on plain locks.

    The transform thread opens each step and the capture thread closes it.
    Much cheaper than :class:`threading.Barrier` (a condition variable
    plus a counter), which costs a few hundred microseconds per step on a
    busy single core.
    """

    def __init__(self):
        self._go = threading.Lock()
        self._done = threading.Lock()
        self._go.acquire()
        self._done.acquire()
        self.aborted = False

    def _release(self, lock):
        if self.aborted:
            raise threading.BrokenBarrierError
        try:
            lock.release()
        except RuntimeError:
            if not self.aborted:
                raise
            raise threading.BrokenBarrierError from None

    def _acquire(self, lock):
        lock.acquire()
        if self.aborted:
            raise threading.BrokenBarrierError

    def open(self):
        self._release(self._go)

    def wait_open(self):
        self._acquire(self._go)

    def close(self):
        self._release(self._done)

    def wait_closed(self):
        self._acquire(self._done)

    def abort(self):
        self.aborted = True
        for lock in (self._go, self._done):
            try:
                lock.release()
            except RuntimeError:
                pass


def run_pipeline(
    config: PipelineConfig,
    params: PmtParams,
    source: Iterable[Frame] | None = None,
    clock=time.perf_counter,
) -> TimingReport:
    """Run the staggered schedule over ``config.frame_count`` frames.

    Each step opens with a capture trigger. The capture thread pulls the
    next frame's data from ``source`` and holds it until
    ``trigger + capture_latency``, as a DMA readout would; ``t_cap`` is
    measured from the trigger. A custom ``source`` should therefore not add
    its own delay. The default source replays ``config.scenario`` (or the
    stock triangle scenario).

    Raises :class:`SourceExhaustedError` (carrying the partial report) if the
    source runs out early.
    """
    n = config.frame_count
    table = cached_map(params)
    period = config.rgb_period
    budget = config.frame_budget
    base = TimingReport(
        budget_us=budget * 1e6,
        valid_entries=table.valid_count,
        dc_cols=table.dc_cols,
        workers=config.workers,
    )
    if n == 0:
        return base

    if source is None:
        scenario = config.scenario or Scenario(width=params.in_width, height=params.in_height, dc_block_radius=params.r_dc)
        if (scenario.width, scenario.height) != (params.in_width, params.in_height):
            raise InvalidParamsError(
                f"scenario is {scenario.width}x{scenario.height}, params expect {params.in_width}x{params.in_height}"
            )
        # the readout delay is applied below, from the step trigger
        source = synthetic_source(scenario, 0.0, clock=clock)
    source_iter = iter(source)

    # compile kernels and fault in buffers before the clock starts
    warm = np.zeros((params.in_height, params.in_width), np.uint8)
    mono_ring = [np.zeros((params.theta_size, params.rho_size), np.uint8) for _ in range(_MONO_RING)]
    rgb_ring = [np.zeros((params.theta_size, params.rho_size, 3), np.uint8) for _ in range(_RGB_RING)]
    for buf in mono_ring:
        apply_lpt(table, warm, out=buf, workers=config.workers)
    pack_rgb([Frame(mono_ring[k], k) for k in range(FRAMES_PER_RGB)], config.channel_order, out=rgb_ring[0])

    cap_log = np.full((n, 2), np.nan)
    lpt_log = np.full((n, 2), np.nan)
    # per step: slot duration, and flag for hand-off stalls beyond one period
    slot = np.zeros(n + 1)
    step_start = np.zeros(n + 1)
    stalled = np.zeros(n + 1, dtype=bool)
    pack_log: list[tuple[float, float]] = []
    dis_log: list[tuple[float, float]] = []
    device_starts: list[float] = []
    display_seqs: list[int] = []

    gate = _StepGate()
    handoff: list[Frame | None] = [None, None]
    pack_q: queue.Queue = queue.Queue(maxsize=1)
    disp_q: queue.Queue = queue.Queue(maxsize=1)
    errors: list[BaseException] = []
    state = {"exhausted": False, "transformed": 0, "undisplayed": 0}

    def fail(exc: BaseException):
        errors.append(exc)
        gate.abort()

    def capture():
        try:
            for step in range(n + 1):
                gate.wait_open()
                if step < n:
                    # the readout was triggered when the step opened and runs
                    # without the CPU, however late this thread is scheduled
                    t0 = step_start[step]
                    try:
                        frame = next(source_iter)
                    except StopIteration:
                        state["exhausted"] = True
                        gate.abort()
                        return
                    _sleep_until(t0 + config.capture_latency, clock)
                    t1 = clock()
                    frame = Frame(frame.data, frame.sequence, t1)
                    if frame.depth != 1 or frame.data.shape != (params.in_height, params.in_width):
                        raise InvalidInputError(
                            f"source frame is {frame.width}x{frame.height}x{frame.depth}, "
                            f"expected {params.in_width}x{params.in_height} mono"
                        )
                    cap_log[step] = (t0, t1)
                    handoff[step % 2] = frame
                gate.close()
        except threading.BrokenBarrierError:
            return
        except BaseException as exc:
            fail(exc)

    def transform():
        triple: list[Frame] = []
        try:
            for step in range(n + 1):
                step_start[step] = clock()
                gate.open()
                ends = []
                if step >= 1:
                    frame = handoff[(step - 1) % 2]
                    k = step - 1
                    t0 = clock()
                    out = apply_lpt(table, frame.data, out=mono_ring[k % _MONO_RING], workers=config.workers)
                    if config.lpt_extra_delay:
                        _sleep_until(t0 + config.lpt_extra_delay, clock)
                    t1 = clock()
                    lpt_log[k] = (t0, t1)
                    ends.append(t1)
                    state["transformed"] = k + 1
                    triple.append(Frame(out, frame.sequence, t1))
                if len(triple) == FRAMES_PER_RGB:
                    # hand-off happens inside the step so the next capture
                    # cannot run ahead of the next transform
                    w0 = clock()
                    pack_q.put(triple)
                    stalled[step] = clock() - w0 > period
                    triple = []
                gate.wait_closed()
                if step < n:
                    ends.append(cap_log[step, 1])
                slot[step] = max(ends) - step_start[step]
        except threading.BrokenBarrierError:
            pass
        except BaseException as exc:
            fail(exc)
        finally:
            state["undisplayed"] = len(triple)
            pack_q.put(None)

    def pack():
        k = 0
        try:
            while True:
                item = pack_q.get()
                if item is None:
                    break
                t0 = clock()
                rgb = pack_rgb(item, config.channel_order, out=rgb_ring[k % _RGB_RING])
                t1 = clock()
                pack_log.append((t0, t1))
                disp_q.put((rgb, t1))
                k += 1
        except BaseException as exc:
            fail(exc)
            while pack_q.get() is not None:
                pass
        finally:
            disp_q.put(None)

    def display():
        next_free = None
        dumped = 0
        try:
            while True:
                item = disp_q.get()
                if item is None:
                    break
                rgb, ready = item
                start = ready if next_free is None else max(ready, next_free)
                _sleep_until(start, clock)
                a0 = clock()
                next_free = start + period
                device_starts.append(start)
                display_seqs.append(rgb.sequence)
                if config.dump_dir and dumped < config.dump_limit:
                    write_ppm(Path(config.dump_dir) / f"rgb_{rgb.sequence:08d}.ppm", rgb.data)
                    dumped += 1
                _sleep_until(next_free, clock)
                dis_log.append((a0, clock()))
        except BaseException as exc:
            fail(exc)
            while disp_q.get() is not None:
                pass

    threads = [
        threading.Thread(target=capture, name="pmt-capture"),
        threading.Thread(target=transform, name="pmt-transform"),
        threading.Thread(target=pack, name="pmt-pack"),
        threading.Thread(target=display, name="pmt-display"),
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    if errors:
        raise errors[0]

    done = state["transformed"]
    lpt_ok = lpt_log[:done]
    cap_ok = cap_log[~np.isnan(cap_log[:, 0])]

    # frame k is transformed in step k + 1
    missed = (slot[1 : done + 1] > budget) | stalled[1 : done + 1]
    mono_fps = 0.0
    if done >= 2:
        span = lpt_ok[-1, 1] - lpt_ok[0, 1]
        mono_fps = (done - 1) / span if span > 0 else math.inf
    rgb_fps = 0.0
    if len(device_starts) >= 2:
        span = device_starts[-1] - device_starts[0]
        rgb_fps = (len(device_starts) - 1) / span if span > 0 else math.inf

    report = TimingReport(
        t_cap=StageStats.from_seconds(cap_ok[:, 1] - cap_ok[:, 0]),
        t_lpt=StageStats.from_seconds(lpt_ok[:, 1] - lpt_ok[:, 0]),
        t_pack=StageStats.from_seconds([b - a for a, b in pack_log]),
        t_dis=StageStats.from_seconds([b - a for a, b in dis_log]),
        mono_fps=mono_fps,
        rgb_fps=rgb_fps,
        deadline_misses=int(np.count_nonzero(missed)),
        frames=done,
        rgb_frames=len(device_starts),
        undisplayed=state["undisplayed"],
        budget_us=budget * 1e6,
        valid_entries=table.valid_count,
        dc_cols=table.dc_cols,
        workers=config.workers,
        capture_log=cap_ok,
        lpt_log=lpt_ok,
        display_log=np.array(dis_log).reshape(-1, 2),
        display_sequences=display_seqs,
    )
    log.debug("pipeline finished: %s", report.to_json())
    if state["exhausted"]:
        raise SourceExhaustedError(
            f"source exhausted after {done} of {n} frames", report=report, frames_completed=done
        )
    return report
