"""HTTP service for the interactive probing loop.

A session holds one dataset and one reconstruction; probes are masks
tested against that session's reconstruction. The reconstruction is
solved exactly once per session, in a background worker, and every probe
reuses it (the whole point of the method's cost profile: many cheap
probes against one expensive reconstruction).

State lives on disk under the data directory:

    sessions/{sid}/session.json     status and scalars
    sessions/{sid}/y.(json|raw)     sinogram, RAWJ pair
    sessions/{sid}/map/             reconstruction (see save_map_result)
    sessions/{sid}/probes/{pid}/    probe.json, then result images

JSON writes are atomic (temp file + rename), so a restart mid-job only
loses the job's progress, never the store's consistency; unfinished jobs
are re-queued on startup.

Masks travel as run-length counts over the row-major boolean vector
(see grid.rle_encode). Image payloads travel either as 8-bit rescaled
PNG (display) or as a JSON document carrying the RAWJ header fields plus
base64 float64 values (exactness).
"""

from __future__ import annotations

import base64
import io
import json
import os
import queue
import threading
import time
import uuid
from contextlib import asynccontextmanager
from pathlib import Path

import numpy as np

from .grid import (Image, Sinogram, load_rawj, rle_decode, rle_encode,
                   save_rawj)
from .hypotest import CredibleRegion, evaluation_ratio, run_test
from .mapsolver import (MapProblem, MapResult, SolverConfig, load_map_result,
                        save_map_result, solve_map)
from .phantom import pe_phantom, phantom_from_doc, render_phantom
from .structure import StructureSetParams, sample_neighborhood
from .tomo import Geometry, NoiseModel, ParallelProjector, simulate_data
from .transforms import make_transform

__all__ = ["create_app", "ServiceState", "DEFAULT_PORT", "PORT_ENV_VAR"]

PORT_ENV_VAR = "BUQO_PORT"
DEFAULT_PORT = 8710

_IMAGE_KINDS = ("xmap", "xmaps", "xhatc", "xhats", "diff")


def _new_id() -> str:
    return uuid.uuid4().hex[:12]


def _write_json_atomic(path: Path, doc: dict):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(doc, indent=2, sort_keys=True))
    os.replace(tmp, path)


class ApiError(Exception):
    """Validation or state error carrying an HTTP status."""

    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


def _need(doc: dict, key: str, where: str):
    if key not in doc:
        raise ApiError(400, f"{where}: missing field {key!r}")
    return doc[key]


def _decode_values(field: str, encoded, expected: int) -> np.ndarray:
    try:
        raw = base64.b64decode(encoded, validate=True)
    except Exception:
        raise ApiError(400, f"{field}: invalid base64")
    if len(raw) != 8 * expected:
        raise ApiError(
            400, f"{field}: got {len(raw)} bytes, expected {8 * expected} "
            f"(little-endian float64)")
    values = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise ApiError(400, f"{field}: values must be finite")
    return values


def _encode_values(values: np.ndarray) -> str:
    return base64.b64encode(values.astype("<f8").tobytes()).decode("ascii")


class ServiceState:
    """Sessions, probes, their disk store, and the job worker."""

    def __init__(self, data_dir, solver: SolverConfig = SolverConfig(),
                 workers: int = 1):
        self.data_dir = Path(data_dir)
        self.sessions_dir = self.data_dir / "sessions"
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self.solver = solver
        self.lock = threading.RLock()
        self.sessions: dict = {}
        self.probes: dict = {}     # pid -> probe doc (carries "session")
        self.jobs: queue.Queue = queue.Queue()
        self._runtime: dict = {}   # sid -> operators + loaded MapResult
        self._stop = threading.Event()
        self._threads = [
            threading.Thread(target=self._worker, daemon=True,
                             name=f"buqo-worker-{i}")
            for i in range(max(1, workers))]
        self._load_store()

    # -- lifecycle ----------------------------------------------------------

    def start(self):
        for t in self._threads:
            t.start()

    def stop(self):
        self._stop.set()
        for _ in self._threads:
            self.jobs.put(None)
        for t in self._threads:
            if t.is_alive():
                t.join(timeout=5.0)

    def _load_store(self):
        """Rebuild the in-memory index and re-queue unfinished jobs."""
        for sdir in sorted(self.sessions_dir.glob("*")):
            meta = sdir / "session.json"
            if not meta.is_file():
                continue
            session = json.loads(meta.read_text())
            sid = session["id"]
            self.sessions[sid] = session
            for pdir in sorted((sdir / "probes").glob("*")):
                pmeta = pdir / "probe.json"
                if not pmeta.is_file():
                    continue
                probe = json.loads(pmeta.read_text())
                if probe["status"] == "running":
                    # interrupted by a restart; run it again
                    probe["status"] = "queued"
                self.probes[probe["id"]] = probe
            if session["status"] == "reconstructing":
                self.jobs.put(("map", sid))
        for pid, probe in self.probes.items():
            if probe["status"] == "queued":
                self.jobs.put(("probe", pid))

    # -- paths and persistence ----------------------------------------------

    def _session_dir(self, sid: str) -> Path:
        return self.sessions_dir / sid

    def _probe_dir(self, probe: dict) -> Path:
        return self._session_dir(probe["session"]) / "probes" / probe["id"]

    def _save_session(self, session: dict):
        _write_json_atomic(self._session_dir(session["id"]) / "session.json",
                           session)

    def _save_probe(self, probe: dict):
        pdir = self._probe_dir(probe)
        pdir.mkdir(parents=True, exist_ok=True)
        _write_json_atomic(pdir / "probe.json", probe)

    # -- session creation ----------------------------------------------------

    def create_session(self, payload: dict) -> dict:
        if not isinstance(payload, dict):
            raise ApiError(400, "body must be a JSON object")
        if "simulate" in payload:
            session, y = self._session_from_simulation(payload["simulate"])
        else:
            session, y = self._session_from_upload(payload)
        sid = session["id"]
        with self.lock:
            sdir = self._session_dir(sid)
            sdir.mkdir(parents=True, exist_ok=True)
            save_rawj(sdir / "y", y)
            self._save_session(session)
            self.sessions[sid] = session
            self.jobs.put(("map", sid))
        return session

    def _session_base(self, geometry: dict, epsilon: float,
                      transform: str) -> dict:
        return {
            "id": _new_id(),
            "created": time.time(),
            "status": "reconstructing",
            "geometry": geometry,
            "epsilon": float(epsilon),
            "transform": transform,
            "probes": [],
            "error": "",
        }

    def _parse_geometry(self, doc: dict) -> Geometry:
        geo = _need(doc, "geometry", "session")
        if not isinstance(geo, dict):
            raise ApiError(400, "geometry: must be an object")
        try:
            return Geometry(side=int(_need(geo, "side", "geometry")),
                            angles=int(_need(geo, "angles", "geometry")),
                            detectors=int(_need(geo, "detectors",
                                                "geometry")))
        except ApiError:
            raise
        except (TypeError, ValueError) as exc:
            raise ApiError(400, f"geometry: {exc}")

    def _session_from_upload(self, payload: dict):
        geom = self._parse_geometry(payload)
        data = _need(payload, "data", "session")
        if not isinstance(data, dict):
            raise ApiError(400, "data: must be an object")
        values = _decode_values("data.values_b64",
                                _need(data, "values_b64", "data"),
                                geom.angles * geom.detectors)
        if "epsilon" not in data:
            raise ApiError(400, "data: missing field 'epsilon'")
        try:
            epsilon = float(data["epsilon"])
        except (TypeError, ValueError):
            raise ApiError(400, "data.epsilon: must be a number")
        if epsilon < 0:
            raise ApiError(400, "data.epsilon: must be >= 0")
        transform = str(payload.get("transform", "haar3"))
        y = Sinogram(geom.angles, geom.detectors, values)
        session = self._session_base(
            {"side": geom.side, "angles": geom.angles,
             "detectors": geom.detectors}, epsilon, transform)
        return session, y

    def _session_from_simulation(self, sim: dict):
        if not isinstance(sim, dict):
            raise ApiError(400, "simulate: must be an object")
        phantom_doc = sim.get("phantom", "pe")
        try:
            if phantom_doc == "pe":
                ph = pe_phantom(int(sim.get("side", 128)),
                                bool(sim.get("artifact_free", False)))
            else:
                ph = phantom_from_doc(phantom_doc)
            geom = Geometry(side=ph.side,
                            angles=int(_need(sim, "angles", "simulate")),
                            detectors=int(_need(sim, "detectors",
                                                "simulate")))
            noise = NoiseModel(float(_need(sim, "sigma_rel", "simulate")),
                               int(sim.get("seed", 0)))
            data = simulate_data(geom, noise, render_phantom(ph))
        except ApiError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ApiError(400, f"simulate: {exc}")
        transform = str(sim.get("transform", "haar3"))
        session = self._session_base(
            {"side": geom.side, "angles": geom.angles,
             "detectors": geom.detectors}, data.epsilon, transform)
        session["simulated"] = {"sigma_rel": noise.sigma_rel,
                                "seed": noise.seed,
                                "sigma_abs": data.sigma_abs}
        return session, data.y

    # -- views ---------------------------------------------------------------

    def session_view(self, sid: str) -> dict:
        with self.lock:
            if sid not in self.sessions:
                raise ApiError(404, f"unknown session {sid!r}")
            session = dict(self.sessions[sid])
        if session["status"] == "ready":
            map_doc = json.loads(
                (self._session_dir(sid) / "map" / "map.json").read_text())
            map_doc.pop("context", None)
            session["map"] = map_doc
        return session

    def probe_view(self, pid: str) -> dict:
        with self.lock:
            if pid not in self.probes:
                raise ApiError(404, f"unknown probe {pid!r}")
            probe = dict(self.probes[pid])
        view = {k: v for k, v in probe.items() if k != "mask_rle"}
        view["mask"] = {"height": probe["mask_height"],
                        "width": probe["mask_width"],
                        "rle": probe["mask_rle"]}
        for k in ("mask_height", "mask_width"):
            view.pop(k, None)
        if probe["status"] == "done":
            view["images"] = {
                kind: f"/probes/{pid}/images/{kind}"
                for kind in _IMAGE_KINDS}
        return view

    # -- probes ---------------------------------------------------------------

    def submit_probe(self, sid: str, payload: dict) -> dict:
        with self.lock:
            if sid not in self.sessions:
                raise ApiError(404, f"unknown session {sid!r}")
            session = self.sessions[sid]
            if session["status"] == "failed":
                raise ApiError(409, "session reconstruction failed; "
                               f"error: {session['error']}")
            if session["status"] != "ready":
                raise ApiError(409, "reconstruction still running; "
                               "probes need the finished reconstruction")
            side = session["geometry"]["side"]
        if not isinstance(payload, dict):
            raise ApiError(400, "body must be a JSON object")
        mask_doc = _need(payload, "mask", "probe")
        if not isinstance(mask_doc, dict):
            raise ApiError(400, "mask: must be an object")
        height = int(_need(mask_doc, "height", "mask"))
        width = int(_need(mask_doc, "width", "mask"))
        runs = _need(mask_doc, "rle", "mask")
        if (height, width) != (side, side):
            raise ApiError(400, f"mask: dimensions {height}x{width} do not "
                           f"match the session image {side}x{side}")
        try:
            mask = rle_decode(height, width, runs)
        except ValueError as exc:
            raise ApiError(400, f"mask.rle: {exc}")
        if mask.cardinality == 0:
            raise ApiError(400, "mask: empty mask, nothing to probe")
        try:
            alpha = float(payload.get("alpha", 0.01))
            delta = float(payload.get("delta", 1e-3))
            ring_width = int(payload.get("ring_width", 3))
        except (TypeError, ValueError) as exc:
            raise ApiError(400, f"probe parameters: {exc}")
        if not 0.0 < alpha < 1.0:
            raise ApiError(400, "alpha: must be in (0, 1)")
        if delta < 0:
            raise ApiError(400, "delta: must be >= 0")
        if ring_width < 1:
            raise ApiError(400, "ring_width: must be >= 1")

        probe = {
            "id": _new_id(),
            "session": sid,
            "created": time.time(),
            "status": "queued",
            "alpha": alpha,
            "delta": delta,
            "ring_width": ring_width,
            "mask_height": height,
            "mask_width": width,
            "mask_rle": [int(r) for r in runs],
            "error": "",
        }
        with self.lock:
            self.probes[probe["id"]] = probe
            self._save_probe(probe)
            session["probes"].append(probe["id"])
            self._save_session(session)
            self.jobs.put(("probe", probe["id"]))
        return probe

    def probe_image(self, pid: str, kind: str):
        with self.lock:
            if pid not in self.probes:
                raise ApiError(404, f"unknown probe {pid!r}")
            probe = dict(self.probes[pid])
        if kind not in _IMAGE_KINDS:
            raise ApiError(404, f"unknown image {kind!r}, expected one of "
                           f"{', '.join(_IMAGE_KINDS)}")
        if probe["status"] != "done":
            raise ApiError(409, f"probe is {probe['status']}, images exist "
                           "once it is done")
        img = load_rawj(self._probe_dir(probe) / kind)
        return img

    def session_image(self, sid: str):
        # lets a client display the reconstruction before any probe exists
        with self.lock:
            if sid not in self.sessions:
                raise ApiError(404, f"unknown session {sid!r}")
            session = dict(self.sessions[sid])
        if session["status"] != "ready":
            raise ApiError(409, f"session is {session['status']}, the "
                           "image exists once the reconstruction is ready")
        return load_rawj(self._session_dir(sid) / "map" / "xmap")

    # -- job execution --------------------------------------------------------

    def _worker(self):
        while not self._stop.is_set():
            job = self.jobs.get()
            if job is None:
                break
            kind, jid = job
            try:
                if kind == "map":
                    self._run_map_job(jid)
                else:
                    self._run_probe_job(jid)
            except Exception:
                # job errors are recorded on the job; a worker crash here
                # would silently stall the queue
                pass

    def _operators(self, session: dict):
        geo = session["geometry"]
        geom = Geometry(side=geo["side"], angles=geo["angles"],
                        detectors=geo["detectors"])
        phi = ParallelProjector(geom)
        psi = make_transform(session["transform"], geo["side"])
        return phi, psi

    def _run_map_job(self, sid: str):
        with self.lock:
            session = self.sessions.get(sid)
            if session is None or session["status"] != "reconstructing":
                return
        sdir = self._session_dir(sid)
        try:
            y = load_rawj(sdir / "y")
            phi, psi = self._operators(session)
            problem = MapProblem(phi=phi, psi=psi, y=y.values,
                                 epsilon=session["epsilon"])
            side = session["geometry"]["side"]
            result = solve_map(problem, self.solver, shape=(side, side))
            save_map_result(sdir / "map", result,
                            context={"geometry": session["geometry"],
                                     "transform": session["transform"]})
            with self.lock:
                self._runtime[sid] = {"phi": phi, "psi": psi,
                                      "problem": problem, "map": result}
                session["status"] = "ready"
                self._save_session(session)
        except Exception as exc:
            with self.lock:
                session["status"] = "failed"
                session["error"] = f"{type(exc).__name__}: {exc}"
                self._save_session(session)

    def _ensure_runtime(self, sid: str) -> dict:
        with self.lock:
            runtime = self._runtime.get(sid)
            if runtime is not None:
                return runtime
            session = self.sessions[sid]
        sdir = self._session_dir(sid)
        y = load_rawj(sdir / "y")
        phi, psi = self._operators(session)
        problem = MapProblem(phi=phi, psi=psi, y=y.values,
                             epsilon=session["epsilon"])
        result = load_map_result(sdir / "map")
        runtime = {"phi": phi, "psi": psi, "problem": problem,
                   "map": result}
        with self.lock:
            self._runtime[sid] = runtime
        return runtime

    def _run_probe_job(self, pid: str):
        with self.lock:
            probe = self.probes.get(pid)
            if probe is None or probe["status"] != "queued":
                return
            probe["status"] = "running"
            self._save_probe(probe)
        try:
            runtime = self._ensure_runtime(probe["session"])
            map_res: MapResult = runtime["map"]
            mask = rle_decode(probe["mask_height"], probe["mask_width"],
                              probe["mask_rle"])
            stats = sample_neighborhood(map_res.image, mask,
                                        probe["ring_width"])
            s_params = StructureSetParams(mask=mask, stats=stats)
            region = CredibleRegion.from_map(runtime["problem"], map_res,
                                             probe["alpha"])
            report = run_test(map_res, region, s_params, probe["delta"],
                              self.solver)

            pdir = self._probe_dir(probe)
            for kind in _IMAGE_KINDS:
                save_rawj(pdir / kind, report.image(kind))
            with self.lock:
                probe["report"] = {
                    "rho": report.rho,
                    "decision": report.decision,
                    "distance": report.distance,
                    "denominator": report.denominator,
                    "stage1_member": report.stage1_member,
                    "converged": report.converged,
                    "iterations": report.iterations,
                    "evaluation_ratio": evaluation_ratio(report, map_res),
                    "phi_forward_evals": report.phi_forward_evals,
                    "phi_adjoint_evals": report.phi_adjoint_evals,
                    "psi_forward_evals": report.psi_forward_evals,
                    "psi_adjoint_evals": report.psi_adjoint_evals,
                    "runtime_s": report.runtime_s,
                }
                probe["status"] = "done"
                self._save_probe(probe)
        except Exception as exc:
            with self.lock:
                probe["status"] = "failed"
                probe["error"] = f"{type(exc).__name__}: {exc}"
                self._save_probe(probe)


def _png_bytes(img: Image) -> bytes:
    from PIL import Image as PILImage

    grid = img.grid
    lo, hi = float(grid.min()), float(grid.max())
    if hi > lo:
        scaled = (grid - lo) / (hi - lo) * 255.0
    else:
        scaled = np.zeros_like(grid)
    buf = io.BytesIO()
    PILImage.fromarray(scaled.astype(np.uint8), mode="L").save(buf, "PNG")
    return buf.getvalue()


def _rawj_doc(img: Image) -> dict:
    return {"height": img.height, "width": img.width, "dtype": "f64",
            "order": "row-major", "values_b64": _encode_values(img.values)}


def create_app(data_dir, solver: SolverConfig = SolverConfig(),
               workers: int = 1):
    """FastAPI application bound to a data directory."""
    from fastapi import Body, FastAPI
    from fastapi.responses import JSONResponse, Response

    state = ServiceState(data_dir, solver=solver, workers=workers)

    @asynccontextmanager
    async def lifespan(app):
        state.start()
        try:
            yield
        finally:
            state.stop()

    app = FastAPI(title="structure-probe service", lifespan=lifespan)
    app.state.service = state

    @app.exception_handler(ApiError)
    async def _api_error(request, exc: ApiError):
        return JSONResponse(status_code=exc.status,
                            content={"detail": exc.message})

    @app.post("/sessions", status_code=201)
    def post_session(payload: dict = Body(...)):
        session = state.create_session(payload)
        return {"id": session["id"], "status": session["status"]}

    @app.get("/sessions/{sid}")
    def get_session(sid: str):
        return state.session_view(sid)

    @app.get("/sessions/{sid}/image")
    def get_session_image(sid: str, format: str = "png"):
        img = state.session_image(sid)
        if format == "png":
            return Response(content=_png_bytes(img),
                            media_type="image/png")
        if format == "rawj":
            return JSONResponse(_rawj_doc(img))
        raise ApiError(400, f"format: unknown format {format!r}, "
                       "expected 'png' or 'rawj'")

    @app.post("/sessions/{sid}/probes", status_code=202)
    def post_probe(sid: str, payload: dict = Body(...)):
        probe = state.submit_probe(sid, payload)
        return {"id": probe["id"], "status": probe["status"]}

    @app.get("/probes/{pid}")
    def get_probe(pid: str):
        return state.probe_view(pid)

    @app.get("/probes/{pid}/images/{kind}")
    def get_probe_image(pid: str, kind: str, format: str = "png"):
        img = state.probe_image(pid, kind)
        if format == "png":
            return Response(content=_png_bytes(img),
                            media_type="image/png")
        if format == "rawj":
            return JSONResponse(_rawj_doc(img))
        raise ApiError(400, f"format: unknown format {format!r}, "
                       "expected 'png' or 'rawj'")

    @app.post("/masks/echo")
    def mask_echo(payload: dict = Body(...)):
        """Decode-encode round trip so clients can verify their codec."""
        mask_doc = _need(payload, "mask", "echo")
        height = int(_need(mask_doc, "height", "mask"))
        width = int(_need(mask_doc, "width", "mask"))
        try:
            mask = rle_decode(height, width,
                              _need(mask_doc, "rle", "mask"))
        except ValueError as exc:
            raise ApiError(400, f"mask.rle: {exc}")
        return {"mask": {"height": mask.height, "width": mask.width,
                         "rle": rle_encode(mask)},
                "cardinality": mask.cardinality}

    return app
