"""Live session service.

Runs one simulated navigation session and exposes it over a websocket:
state frames stream at the control rate, spec frames on every cost change,
and incoming messages carry operator queries, scene descriptions and
control actions.  Three cooperating activities share minimal state: the
simulation loop (fixed rate), a single-flight pipeline worker with a
depth-1 newest-wins queue, and per-connection frame senders.
"""

from __future__ import annotations

import json
import math
import queue
import threading
import time
from dataclasses import dataclass, field

from websockets.sync.server import serve

from .assistants import AssistantPipeline, LiveBackend, MockBackend, \
    ReplayBackend
from .assistants.pipeline import ImportanceRatings, PipelineEvent, Query, \
    initial_ratings
from .costspec import CostSpec, default_path_spec, spec_to_dict
from .mpc import NavController
from .simulate import (
    EpisodeConfig,
    Pedestrian,
    describe_scene,
    social_force_step,
    spawn_pedestrians,
)
from .world import Human, RobotState, Scenario, load_scenario, unicycle_step

__all__ = ["ServiceConfig", "SessionService", "PROTOCOL_VERSION"]

PROTOCOL_VERSION = 1


@dataclass(frozen=True)
class ServiceConfig:
    scenario: str = "corridor"
    backend: str = "mock"  # mock | replay | live
    replay_dir: str = ""
    llm_model: str = ""
    mock_latency: float = 1.5
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    host: str = "127.0.0.1"
    port: int = 8765
    base_seed: int = 1


def make_backend(config: ServiceConfig):
    if config.backend == "mock":
        return MockBackend()
    if config.backend == "replay":
        if not config.replay_dir:
            raise ValueError("replay backend requires a fixture directory")
        return ReplayBackend(config.replay_dir)
    if config.backend == "live":
        return LiveBackend(model=config.llm_model or None)
    raise ValueError(f"unknown backend {config.backend!r}")


@dataclass(frozen=True)
class _Snapshot:
    t: float
    robot: RobotState
    pedestrians: tuple[Pedestrian, ...]
    plan_points: tuple[tuple[float, float], ...]
    plan_status: str
    spec: CostSpec
    digest: str
    status: str  # Running | Paused | GoalReached | Collision | Timeout


class _QuerySlot:
    """Depth-1 queue; a newer query replaces (and reports) a waiting one."""

    def __init__(self) -> None:
        self._cond = threading.Condition()
        self._pending: Query | None = None
        self._closed = False

    def submit(self, query: Query) -> Query | None:
        with self._cond:
            dropped, self._pending = self._pending, query
            self._cond.notify()
            return dropped

    def take(self, timeout: float = 0.2) -> Query | None:
        with self._cond:
            if self._pending is None:
                self._cond.wait(timeout)
            query, self._pending = self._pending, None
            return query

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    @property
    def closed(self) -> bool:
        return self._closed


class _Client:
    def __init__(self, connection) -> None:
        self.connection = connection
        self.queue: queue.Queue = queue.Queue(maxsize=256)
        self.seq = 0

    def offer(self, frame: dict) -> None:
        try:
            self.queue.put_nowait(frame)
        except queue.Full:  # slow consumer: drop the frame, not the session
            pass


class SessionService:
    """One navigation session shared by any number of viewer connections."""

    def __init__(self, config: ServiceConfig,
                 scenario: Scenario | None = None) -> None:
        self.config = config
        self.scenario = scenario or load_scenario(config.scenario)
        spec = default_path_spec()
        self.nav = NavController(self.scenario, spec, config.episode.mpc)
        self.pipeline = AssistantPipeline(make_backend(config),
                                          v_max=config.episode.mpc.v_max)
        self._bundle_lock = threading.Lock()
        self._ratings: ImportanceRatings = initial_ratings(spec)
        self._digest = spec.digest()
        self._snapshot = self._initial_snapshot(spec)
        self._scene_description: str | None = None
        self._clients: set[_Client] = set()
        self._clients_lock = threading.Lock()
        self._slot = _QuerySlot()
        self._paused = threading.Event()
        self._reset_requested = threading.Event()
        self._stop = threading.Event()
        self._pipeline_busy = threading.Event()
        self._threads: list[threading.Thread] = []
        self._server = None
        self.port: int | None = None
        self._episode_seed = config.base_seed
        self._pedestrians = spawn_pedestrians(self.scenario,
                                              self._episode_seed)
        self._robot = self.scenario.robot_start
        self._sim_time = 0.0

    # -- controller adapter for the pipeline --------------------------------

    @property
    def spec(self) -> CostSpec:
        return self.nav.spec

    @property
    def ratings(self) -> ImportanceRatings:
        return dict(self._ratings)

    def apply(self, spec: CostSpec, ratings: ImportanceRatings) -> None:
        with self._bundle_lock:
            self.nav.swap_spec(spec)
            self._ratings = dict(ratings)
            self._digest = spec.digest()

    def scene_description(self) -> str:
        if self._scene_description:
            return self._scene_description
        return describe_scene(self.scenario, self._pedestrians, self._robot)

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> None:
        self._server = serve(self._handle_connection, self.config.host,
                             self.config.port)
        self.port = self._server.socket.getsockname()[1]
        for target in (self._simulation_loop, self._frame_ticker,
                       self._pipeline_worker):
            thread = threading.Thread(target=target, daemon=True,
                                      name=target.__name__)
            thread.start()
            self._threads.append(thread)
        server_thread = threading.Thread(target=self._server.serve_forever,
                                         daemon=True, name="ws-server")
        server_thread.start()
        self._threads.append(server_thread)

    def stop(self) -> None:
        self._stop.set()
        self._slot.close()
        if self._server is not None:
            self._server.shutdown()
        for thread in self._threads:
            thread.join(timeout=2.0)

    def run_forever(self) -> None:
        self.start()
        try:
            while not self._stop.is_set():
                time.sleep(0.2)
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    # -- simulation loop -------------------------------------------------------

    def _initial_snapshot(self, spec: CostSpec) -> _Snapshot:
        return _Snapshot(
            t=0.0,
            robot=self.scenario.robot_start,
            pedestrians=(),
            plan_points=(),
            plan_status="-",
            spec=spec,
            digest=spec.digest(),
            status="Running",
        )

    def _simulation_loop(self) -> None:
        dt = self.config.episode.mpc.dt
        next_tick = time.monotonic()
        while not self._stop.is_set():
            if self._reset_requested.is_set():
                self._reset_requested.clear()
                self._episode_seed += 1
                self._pedestrians = spawn_pedestrians(self.scenario,
                                                      self._episode_seed)
                self._robot = self.scenario.robot_start
                self.nav.previous_plan = None
                self._sim_time = 0.0
                self._broadcast_event(PipelineEvent("Control", "reset", 0.0))
            status = "Paused" if self._paused.is_set() else "Running"
            if not self._paused.is_set():
                status = self._advance(dt)
            with self._bundle_lock:
                spec_now, digest_now = self.nav.spec, self._digest
            snapshot = _Snapshot(
                t=self._sim_time,
                robot=self._robot,
                pedestrians=tuple(self._pedestrians),
                plan_points=self._plan_points(),
                plan_status=(self.nav.previous_plan.status.value
                             if self.nav.previous_plan else "-"),
                spec=spec_now,
                digest=digest_now,
                status=status,
            )
            self._snapshot = snapshot
            if status in ("GoalReached", "Collision", "Timeout"):
                self._broadcast_event(PipelineEvent("Episode", status, 0.0))
                self._reset_requested.set()
            next_tick += dt
            delay = next_tick - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            else:  # solver overran the period; rebase instead of sprinting
                next_tick = time.monotonic()

    def _advance(self, dt: float) -> str:
        humans = tuple(p.as_human() for p in self._pedestrians)
        inp, plan, rejected = self.nav.step(self._robot, humans)
        if rejected:
            self._broadcast_event(PipelineEvent(
                "Rejected", "cost became non-finite; reverted", 0.0))
            with self._bundle_lock:
                self._digest = self.nav.spec.digest()
        self._robot = unicycle_step(self._robot, inp, dt)
        robot_disc = Human(-1, (self._robot.x, self._robot.y), (0.0, 0.0),
                           self.scenario.robot_radius)
        self._pedestrians = social_force_step(
            self._pedestrians, robot_disc, self.scenario,
            self.config.episode.social, dt)
        self._sim_time += dt
        gx, gy = self.scenario.goal
        if any(math.hypot(self._robot.x - p.position[0],
                          self._robot.y - p.position[1])
               < self.scenario.robot_radius + p.radius
               for p in self._pedestrians):
            return "Collision"
        if math.hypot(self._robot.x - gx, self._robot.y - gy) \
                <= self.config.episode.goal_tolerance:
            return "GoalReached"
        if self._sim_time >= self.config.episode.timeout:
            return "Timeout"
        return "Running"

    def _plan_points(self) -> tuple[tuple[float, float], ...]:
        plan = self.nav.previous_plan
        if plan is None:
            return ()
        return tuple((s.x, s.y) for s in plan.states)

    # -- frame ticker ------------------------------------------------------------

    def _frame_ticker(self) -> None:
        dt = self.config.episode.mpc.dt
        last_digest: str | None = None
        next_tick = time.monotonic()
        while not self._stop.is_set():
            snapshot = self._snapshot
            if snapshot.digest != last_digest:
                self._broadcast(self._spec_frame(snapshot))
                last_digest = snapshot.digest
            self._broadcast(self._state_frame(snapshot))
            next_tick += dt
            delay = next_tick - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            else:
                next_tick = time.monotonic()

    def _state_frame(self, s: _Snapshot) -> dict:
        return {
            "type": "state",
            "t": round(s.t, 4),
            "status": s.status,
            "robot": {"x": s.robot.x, "y": s.robot.y,
                      "theta": s.robot.theta, "v": s.robot.v},
            "humans": [
                {"id": p.id, "x": p.position[0], "y": p.position[1],
                 "vx": p.velocity[0], "vy": p.velocity[1],
                 "radius": p.radius}
                for p in s.pedestrians
            ],
            "plan": {"points": [list(pt) for pt in s.plan_points],
                     "status": s.plan_status},
            "goal": list(self.scenario.goal),
            "reference": self.scenario.reference_path.waypoints.tolist(),
        }

    def _spec_frame(self, s: _Snapshot) -> dict:
        doc = spec_to_dict(s.spec)
        return {
            "type": "spec",
            "digest": s.digest,
            "terms": doc["terms"],
            "weights": doc["weights"],
            "params": doc["params"],
            "provenance": doc["provenance"],
        }

    def _hello_frame(self) -> dict:
        sc = self.scenario
        return {
            "type": "hello",
            "proto": PROTOCOL_VERSION,
            "scenario": {
                "name": sc.name,
                "bounds": {"xmin": sc.bounds[0], "xmax": sc.bounds[1],
                           "ymin": sc.bounds[2], "ymax": sc.bounds[3]},
                "corridors": [
                    {"normal": list(hs.normal), "offset": hs.offset}
                    for hs in sc.corridors
                ],
                "goal": list(sc.goal),
                "reference": sc.reference_path.waypoints.tolist(),
                "robot_radius": sc.robot_radius,
            },
        }

    # -- pipeline worker -----------------------------------------------------------

    def _pipeline_worker(self) -> None:
        # the mock answers instantly; one artificial delay per pipeline run
        # makes the console experience resemble remote-model timing
        latency = self.config.mock_latency if self.config.backend == "mock" \
            else 0.0
        while not self._stop.is_set():
            query = self._slot.take(timeout=0.2)
            if query is None:
                continue
            self._pipeline_busy.set()
            try:
                if latency > 0:
                    time.sleep(latency)
                self.pipeline.handle_query(query, self,
                                           on_event=self._broadcast_event)
            except Exception as exc:  # defensive: the worker must survive
                self._broadcast_event(PipelineEvent(
                    "Rejected", f"pipeline crash: {exc}", 0.0))
            finally:
                self._pipeline_busy.clear()

    # -- connections ---------------------------------------------------------------

    def _broadcast(self, frame: dict) -> None:
        with self._clients_lock:
            clients = list(self._clients)
        for client in clients:
            client.offer(frame)

    def _broadcast_event(self, event: PipelineEvent) -> None:
        self._broadcast({
            "type": "event",
            "stage": event.stage,
            "detail": event.detail,
            "elapsed": round(event.elapsed, 4),
        })

    def _handle_connection(self, connection) -> None:
        client = _Client(connection)
        stop_sender = threading.Event()

        def sender() -> None:
            while not stop_sender.is_set():
                try:
                    frame = client.queue.get(timeout=0.2)
                except queue.Empty:
                    continue
                frame["seq"] = client.seq
                client.seq += 1
                try:
                    connection.send(json.dumps(frame))
                except Exception:
                    return

        client.offer(self._hello_frame())
        snapshot = self._snapshot
        client.offer(self._spec_frame(snapshot))
        client.offer(self._state_frame(snapshot))
        sender_thread = threading.Thread(target=sender, daemon=True)
        sender_thread.start()
        with self._clients_lock:
            self._clients.add(client)
        try:
            for raw in connection:
                self._handle_message(raw, client)
        except Exception:
            pass
        finally:
            with self._clients_lock:
                self._clients.discard(client)
            stop_sender.set()
            sender_thread.join(timeout=1.0)

    def _handle_message(self, raw, client: _Client) -> None:
        try:
            message = json.loads(raw)
            kind = message["type"]
        except (json.JSONDecodeError, TypeError, KeyError) as exc:
            client.offer({"type": "event", "stage": "Error",
                          "detail": f"malformed message: {exc}",
                          "elapsed": 0.0})
            return
        if kind == "query":
            text = str(message.get("text", "")).strip()
            if not text:
                client.offer({"type": "event", "stage": "Error",
                              "detail": "empty query", "elapsed": 0.0})
                return
            dropped = self._slot.submit(Query(text, time.time()))
            if dropped is not None:
                self._broadcast_event(PipelineEvent(
                    "Dropped", f"superseded query: {dropped.text}", 0.0))
        elif kind == "scene":
            self._scene_description = str(message.get("text", "")).strip() \
                or None
            client.offer({"type": "event", "stage": "Scene",
                          "detail": "scene description updated",
                          "elapsed": 0.0})
        elif kind == "control":
            self._handle_control(message, client)
        else:
            client.offer({"type": "event", "stage": "Error",
                          "detail": f"unknown message type {kind!r}",
                          "elapsed": 0.0})

    def _handle_control(self, message: dict, client: _Client) -> None:
        action = message.get("action", "")
        if action == "pause":
            self._paused.set()
        elif action == "resume":
            self._paused.clear()
        elif action == "reset":
            self._reset_requested.set()
        elif action == "load":
            name = str(message.get("scenario", ""))
            try:
                self.scenario = load_scenario(name)
                self.nav = NavController(self.scenario, self.nav.spec,
                                         self.config.episode.mpc)
                self._reset_requested.set()
            except Exception as exc:
                client.offer({"type": "event", "stage": "Error",
                              "detail": f"cannot load scenario: {exc}",
                              "elapsed": 0.0})
                return
        else:
            client.offer({"type": "event", "stage": "Error",
                          "detail": f"unknown control action {action!r}",
                          "elapsed": 0.0})
            return
        self._broadcast_event(PipelineEvent("Control", action, 0.0))
