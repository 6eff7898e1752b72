"""Lockstep world simulation.

Every clock cycle runs in two phases: first all nodes present their transmit
bit for the cycle, then the channel superposes the simultaneous pulses and
every node observes the result.  No node ever sees a partial cycle, so runs
are reproducible bit-for-bit given the same seed and configuration.

Timekeeping is phase-relative: the frame-synchronization pattern (a long gap
in the external laser clock) restarts the subcycle phase, and a still longer
gap additionally toggles learning mode.  Instruction-cycle indices stay
monotonic across gaps so protocol timers keep their meaning.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import (
    Arrival,
    ChannelConfig,
    ChannelTick,
    PowerMap,
    build_power_map,
    received_power,
    superpose,
)
from .geometry import NodePose
from .metrics import Metrics
from .nodes import Agent
from .protocol import ADDRESS_BITS, Frame, Opcode, controller_address, parse_bits
from .timebase import ClockConfig, NonClockEvent, Subcycle, detect_nonclock, subcycle_of
from .trace import NullTrace, TraceWriter

_ZERO_TICK = ChannelTick()


@dataclass
class Stimulus:
    """An isotropic fluorescence source somewhere in the tissue."""

    name: str
    position: np.ndarray
    intensity: float
    active: bool = True


@dataclass
class LaserGap:
    """A scripted pause of the external clock starting at ``cycle``."""

    cycle: int
    length: int


class ScenarioHooks:
    """World-level callbacks; scenarios override what they need."""

    def on_icycle_start(self, world: "World", ic: int) -> None:
        pass

    def on_icycle_end(self, world: "World", ic: int) -> None:
        pass

    def on_controller_frame(self, world: "World", frame: Frame,
                            cycle: int) -> None:
        pass


class World:
    """Channel, clock and node ensemble for one simulation run."""

    def __init__(self, poses: dict[str, NodePose], tables, agents: list[Agent],
                 clock: ClockConfig, channel_cfg: ChannelConfig,
                 trace: TraceWriter | None = None,
                 metrics: Metrics | None = None,
                 scenario: ScenarioHooks | None = None,
                 laser_gaps: list[LaserGap] | None = None,
                 controller_hears: set[str] | None = None):
        self.poses = poses
        self.clock = clock
        self.channel_cfg = channel_cfg
        self.trace = trace if trace is not None else NullTrace()
        self.metrics = metrics if metrics is not None else Metrics()
        self.scenario = scenario if scenario is not None else ScenarioHooks()
        self.agents = {a.name: a for a in agents}
        self.by_address = {a.address: a for a in agents}
        self.power_map: PowerMap = build_power_map(poses, tables, channel_cfg)
        self.stimuli: dict[str, Stimulus] = {}
        self.laser_gaps = sorted(laser_gaps or [], key=lambda g: g.cycle)
        for earlier, later in zip(self.laser_gaps, self.laser_gaps[1:]):
            if earlier.cycle + earlier.length > later.cycle:
                raise ValueError("laser gaps overlap")

        self.cycle = 0
        self.phase_origin = 0
        self._ic_base = 0
        self.learning_mode = False
        self.controller_frames: list[tuple[int, Frame]] = []
        self._controller_hears = (set(controller_hears)
                                  if controller_hears is not None else None)
        self._controller_bits: list[int] = []
        self._controller_active = False
        self._evidence_seen: set[tuple[str, int, int]] = set()

    # -- time ----------------------------------------------------------------

    @property
    def current_ic(self) -> int:
        return self._ic_base + (self.cycle - self.phase_origin) // self.clock.icycle_len

    def _phase(self) -> tuple[Subcycle, int, int]:
        rel = self.cycle - self.phase_origin
        sub, off = subcycle_of(rel, self.clock)
        return sub, off, self._ic_base + rel // self.clock.icycle_len

    def _apply_gap(self, gap: LaserGap) -> None:
        event = detect_nonclock(gap.length, self.clock)
        self.trace.event(self.cycle, "laser_gap", length=gap.length,
                         event=event.name.lower())
        self._ic_base = self.current_ic + 1
        self.cycle += gap.length
        self.phase_origin = self.cycle
        if event is NonClockEvent.MODE_TOGGLE:
            self.learning_mode = not self.learning_mode

    # -- stimuli ---------------------------------------------------------------

    def add_stimulus(self, name: str, position, intensity: float,
                     active: bool = True) -> None:
        self.stimuli[name] = Stimulus(name, np.asarray(position, dtype=float),
                                      intensity, active)

    def set_stimulus(self, name: str, active: bool) -> None:
        self.stimuli[name].active = active

    def _fluor_power_at(self, agent: Agent) -> float:
        pose = self.poses[agent.name]
        total = 0.0
        for stim in self.stimuli.values():
            if not stim.active:
                continue
            d = float(np.linalg.norm(pose.position - stim.position))
            if d <= 0.0:
                continue
            total += received_power(stim.intensity, 1.0, d,
                                    self.channel_cfg.mu)
        return total

    # -- main loop -------------------------------------------------------------

    def run(self, n_icycles: int) -> Metrics:
        self.run_cycles(n_icycles * self.clock.icycle_len)
        return self.metrics

    def run_cycles(self, n_cycles: int) -> None:
        end = self.cycle + n_cycles
        gaps = [g for g in self.laser_gaps if g.cycle >= self.cycle]
        while self.cycle < end:
            if gaps and gaps[0].cycle == self.cycle:
                self._apply_gap(gaps.pop(0))
                continue
            self._step()
            self.cycle += 1

    def _step(self) -> None:
        sub, off, ic = self._phase()
        agents = self.agents.values()
        if off == 0:
            for agent in agents:
                agent.begin_subcycle(sub)
            self._controller_bits = [0] * self.clock.bits_per_frame
            self._controller_active = False
            if sub == Subcycle.T1:
                self.scenario.on_icycle_start(self, ic)

        emissions = []
        for agent in agents:
            sent = agent.emit(sub, off, ic, self.cycle)
            if sent is not None and sent[0] == 1:
                emissions.append((agent.name, sent[1]))

        if emissions:
            if off < self.clock.bits_per_frame and any(
                    self._controller_hears is None or tx in self._controller_hears
                    for tx, _ in emissions):
                self._controller_bits[off] = 1
                self._controller_active = True
            for agent in agents:
                tick = self._tick_for(agent.name, emissions)
                if tick.top.evidence or tick.bottom.evidence:
                    key = (agent.name, ic, int(sub))
                    if key not in self._evidence_seen:
                        self._evidence_seen.add(key)
                        self.metrics.collisions += 1
                agent.observe(tick, sub, off, ic, self.cycle)
            if self.trace.wants("power"):
                self.trace.event(self.cycle, "power",
                                 sources=sorted(n for n, _ in emissions))

        if off == self.clock.subcycle_len - 1:
            for agent in agents:
                agent.end_subcycle(sub, ic, self.cycle)
            if self._controller_active and sub != Subcycle.T4:
                self._controller_decode()
            if sub == Subcycle.T4:
                for agent in agents:
                    if not agent.is_actuator:
                        detected = (self._fluor_power_at(agent)
                                    >= self.channel_cfg.theta_fluor)
                        agent.on_second_layer(detected, ic, self.cycle)
                self.scenario.on_icycle_end(self, ic)

    def _tick_for(self, rx: str, emissions: list[tuple[str, int]]) -> ChannelTick:
        arrivals: list[Arrival] = []
        for tx, pattern in emissions:
            if tx != rx:
                arrivals.append(self.power_map.arrival(tx, pattern, rx))
        if not arrivals:
            return _ZERO_TICK
        top, bottom = superpose(arrivals, self.channel_cfg)
        return ChannelTick(top=top, bottom=bottom,
                           fluor_top=0.0, fluor_bottom=0.0)

    def _controller_decode(self) -> None:
        """Decode the frame the ex-vivo controller saw this subcycle.

        The controller photodetector integrates over the whole body, so it
        receives the OR of every pulse emitted by the nodes it can hear
        (all of them unless ``controller_hears`` narrows the set, modelling
        deep nodes whose light does not reach the skin).
        """
        bits = tuple(self._controller_bits)
        try:
            frame = parse_bits(bits)
        except ValueError:
            return
        if frame.recipient != controller_address(ADDRESS_BITS):
            return
        self.controller_frames.append((self.cycle, frame))
        self.trace.event(self.cycle, "controller", frame=frame.describe())
        self.scenario.on_controller_frame(self, frame, self.cycle)
