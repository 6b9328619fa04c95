"""HTTP gateway binding the engine together: training control, prototype
inspection, explanation queries, interaction commands, faithfulness runs,
and a per-epoch metrics stream.

One trainer thread owns the model. Interaction commands are serialized
through a queue: they apply immediately when the session is idle or paused
and at the next epoch boundary while training is live, so readers never
observe a half-applied command.
"""

from __future__ import annotations

import json
import queue
import threading
import time
from concurrent.futures import Future
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse, StreamingResponse

from . import faithfulness as faith_mod
from . import model as model_mod
from .config import build_train_config
from .errors import (
    CertaintyRange,
    ConfigInvalid,
    FrozenTarget,
    InvalidCommand,
    ProtoclfError,
    ProviderCapability,
    UnknownExample,
    UnknownPrototype,
)
from .interaction import InteractionCommand, InteractionEngine
from .model import ProtoModel, explain
from .store import Dataset, EmbeddedExample, EmbeddingProvider
from .trainer import TrainConfig, Trainer

IDLE = "idle"
TRAINING = "training"
PAUSED = "paused"

_STATUS_BY_ERROR = {
    UnknownPrototype: 404,
    UnknownExample: 404,
    FrozenTarget: 409,
    CertaintyRange: 400,
    InvalidCommand: 400,
    ProviderCapability: 400,
    ConfigInvalid: 400,
}


@dataclass
class Subscriber:
    events: "queue.Queue[dict]" = field(default_factory=lambda: queue.Queue(maxsize=1024))


class Session:
    """Mutable service state around one model, one dataset, one provider."""

    def __init__(
        self,
        dataset: Dataset,
        cfg: TrainConfig,
        model: ProtoModel,
        provider: EmbeddingProvider | None = None,
    ):
        self.dataset = dataset
        self.cfg = cfg
        self.model = model
        self.provider = provider
        self.lock = threading.RLock()
        self.phase = IDLE
        self.epoch = int(model.epoch)
        self.last_metrics: dict | None = None
        self.report = None
        self._engine = InteractionEngine(model, dataset, cfg, provider)
        self._pause_requested = False
        self._stop_requested = False
        self._commands: "queue.Queue[tuple[InteractionCommand | str, Future]]" = queue.Queue()
        self._subscribers: list[Subscriber] = []
        self._thread: threading.Thread | None = None

    # -- snapshots ------------------------------------------------------------

    def digest(self) -> str:
        with self.lock:
            return model_mod.digest(self.model)

    def status(self) -> dict:
        with self.lock:
            return {
                "phase": self.phase,
                "epoch": self.epoch,
                "m": self.model.m,
                "classes": self.model.classes,
                "mode": self.model.mode,
                "sim_kind": self.model.sim_kind,
                "digest": model_mod.digest(self.model),
                "pending_commands": self._commands.qsize(),
                "metrics": self.last_metrics,
                "dataset_size": len(self.dataset),
            }

    def prototypes(self) -> dict:
        with self.lock:
            protos, head = self.model.protos, self.model.head
            items = []
            for j in range(self.model.m):
                display = protos.display[j]
                items.append(
                    {
                        "id": j,
                        "class": int(protos.class_of[j]),
                        "head_weight": float(head.weights[protos.class_of[j], j]),
                        "frozen": bool(protos.frozen[j]),
                        "display_text": display.text if display else None,
                        "source_id": display.source_id if display else None,
                        "highlight": display.highlight if display else None,
                    }
                )
            return {"digest": model_mod.digest(self.model), "prototypes": items}

    def explain(self, body: dict) -> dict:
        top_k = int(body.get("top_k", 4))
        with self.lock:
            if "example_id" in body and body["example_id"] is not None:
                ex = self.dataset.by_id(body["example_id"])
            elif body.get("tokens"):
                if self.provider is None or not self.provider.novel_text:
                    raise ProviderCapability(
                        "raw-token queries need a novel-text embedding provider"
                    )
                tokens = [str(t) for t in body["tokens"]]
                sentence_vec, token_vecs = self.provider.encode(tokens)
                ex = EmbeddedExample(
                    id="(query)",
                    label=0,
                    text=" ".join(tokens),
                    tokens=tokens,
                    sentence_vec=sentence_vec if self.model.mode == "sentence" else None,
                    token_vecs=token_vecs if self.model.mode == "word" else None,
                )
            else:
                raise InvalidCommand("explain needs example_id or tokens")
            result = explain(ex, self.model, top_k=top_k)
            return {
                "predicted_class": result.predicted_class,
                "probs": [float(p) for p in result.probs],
                "items": [
                    {
                        "prototype_id": it.prototype_id,
                        "similarity": it.similarity,
                        "head_weight": it.head_weight,
                        "importance": it.importance,
                        "display_text": it.display_text,
                        "rendered": it.rendered(),
                    }
                    for it in result.items
                ],
            }

    def faithfulness(self, body: dict) -> dict:
        rationales = {
            rec["id"]: [bool(v) for v in rec["mask"]] for rec in body.get("rationales", [])
        }
        if not rationales:
            raise InvalidCommand("faithfulness needs a nonempty rationales list")
        split = body.get("split", "test")
        with self.lock:
            indices = getattr(self.dataset.split, split, None)
            if indices is None:
                raise InvalidCommand(f"unknown split {split!r}")
            if len(indices) == 0:
                indices = np.arange(len(self.dataset.examples))
            if self.provider is None or not self.provider.novel_text:
                raise ProviderCapability("faithfulness needs a novel-text provider")
            report = faith_mod.evaluate(
                self.model, self.dataset, rationales, self.provider, indices=indices
            )
            return report.as_dict()

    # -- interaction ----------------------------------------------------------

    def submit(self, command: InteractionCommand | str):
        """Apply a command now (idle/paused handled by the drain loop or
        directly) or at the next epoch boundary while training."""
        with self.lock:
            live = self.phase in (TRAINING, PAUSED)
        if not live:
            with self.lock:
                return self._apply(command)
        fut: Future = Future()
        self._commands.put((command, fut))
        return fut.result(timeout=300)

    def _apply(self, command):
        before_m = self.model.m
        if isinstance(command, tuple) and command[0] in ("freeze", "unfreeze"):
            _, target = command
            self._engine.freeze([target], command[0] == "freeze")
            outcome = {
                "accepted": True,
                "message": f"{command[0]} prototype {target}",
                "before": {"digest": None, "val_acc": None},
                "after": {"digest": model_mod.digest(self.model), "val_acc": None},
                "retrain_epochs_used": 0,
                "op": command[0],
            }
        else:
            outcome = self._engine.apply(command).as_dict()
        return outcome, self.model.m != before_m

    def _drain_commands(self) -> bool:
        changed = False
        while True:
            try:
                command, fut = self._commands.get_nowait()
            except queue.Empty:
                return changed
            try:
                with self.lock:
                    outcome, structural = self._apply(command)
                changed = changed or structural
                fut.set_result((outcome, structural))
            except BaseException as exc:  # surface errors to the caller
                fut.set_exception(exc)

    # -- training control -------------------------------------------------------

    def start_training(self, overrides: dict):
        with self.lock:
            if self.phase != IDLE:
                raise ConfigInvalid(f"training already {self.phase}")
            if overrides:
                merged = {**_config_values(self.cfg), **overrides}
                self.cfg = build_train_config(merged)
                self._engine = InteractionEngine(self.model, self.dataset, self.cfg, self.provider)
            self.phase = TRAINING
            self._pause_requested = False
            self._stop_requested = False
        self._thread = threading.Thread(target=self._train_loop, daemon=True)
        self._thread.start()
        return {"status": "started", "epochs": self.cfg.epochs}

    def _train_loop(self):
        trainer = Trainer(self.model, self.dataset, self.cfg, hook=self._on_epoch)
        try:
            report = trainer.run()
            with self.lock:
                self.report = report
                self.phase = IDLE
            self._publish({"type": "done", "final_test_acc": report.final_test_acc})
        except ProtoclfError as exc:
            with self.lock:
                self.phase = IDLE
            self._publish({"type": "error", "error": exc.code, "detail": str(exc)})
        finally:
            self._drain_commands()  # commands that raced the final epoch

    def _on_epoch(self, event) -> bool:
        with self.lock:
            self.epoch = event.epoch
            self.last_metrics = {
                "phase": event.phase,
                "epoch": event.epoch,
                "lr": event.lr,
                "terms": event.terms,
                "val_acc": event.val_acc,
                "m": event.m,
            }
        self._publish({"type": "epoch", **self.last_metrics})
        changed = self._drain_commands()
        while self._pause_requested and not self._stop_requested:
            with self.lock:
                if self.phase != PAUSED:
                    self.phase = PAUSED
                    self._publish({"type": "phase", "phase": PAUSED})
            changed = self._drain_commands() or changed
            time.sleep(0.02)
        with self.lock:
            if self.phase == PAUSED:
                self.phase = TRAINING
                self._publish({"type": "phase", "phase": TRAINING})
        return changed

    def pause(self):
        with self.lock:
            if self.phase not in (TRAINING, PAUSED):
                raise ConfigInvalid("no training in progress")
            self._pause_requested = True
        return {"status": "pause_requested"}

    def resume(self):
        with self.lock:
            self._pause_requested = False
        return {"status": "resumed"}

    def wait_idle(self, timeout: float = 600):
        thread = self._thread
        if thread is not None:
            thread.join(timeout)

    # -- metrics stream ---------------------------------------------------------

    def subscribe(self) -> Subscriber:
        sub = Subscriber()
        with self.lock:
            self._subscribers.append(sub)
        return sub

    def unsubscribe(self, sub: Subscriber):
        with self.lock:
            if sub in self._subscribers:
                self._subscribers.remove(sub)

    def _publish(self, event: dict):
        with self.lock:
            subs = list(self._subscribers)
        for sub in subs:
            try:
                sub.events.put_nowait(event)
            except queue.Full:
                pass


def _config_values(cfg: TrainConfig) -> dict:
    from .config import SELECTOR_NAMES, SIM_NAMES

    sel_name = {v: k for k, v in SELECTOR_NAMES.items()}[cfg.selector.kind]
    sim_name = {v: k for k, v in SIM_NAMES.items() if k != "neg_l2"}[cfg.loss_weights.sim_kind]
    values = {
        "epochs": cfg.epochs,
        "lr_base": cfg.lr_base,
        "batch_size": cfg.batch_size,
        "seed": cfg.seed,
        "m": cfg.m,
        "validate_every": cfg.validate_every,
        "head_finetune_epochs": cfg.head_finetune_epochs,
        "lambda_clst": cfg.loss_weights.clst,
        "lambda_sep": cfg.loss_weights.sep,
        "lambda_distr": cfg.loss_weights.distr,
        "lambda_divers": cfg.loss_weights.divers,
        "lambda_l1": cfg.loss_weights.l1,
        "lambda_interact": cfg.loss_weights.interact,
        "literal_min": cfg.loss_weights.literal_min,
        "sim": sim_name,
        "selector": sel_name,
        "k": cfg.selector.k,
        "dilation": cfg.selector.dilation,
        "k_lim": cfg.selector.k_lim,
    }
    if cfg.project_at_epoch is not None:
        values["project_at_epoch"] = cfg.project_at_epoch
    return values


def create_app(session: Session) -> FastAPI:
    app = FastAPI(title="protoclf gateway", version="1")

    from fastapi.middleware.cors import CORSMiddleware

    # the curator UI is served as static files from another local origin
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(ProtoclfError)
    async def protoclf_error(_request: Request, exc: ProtoclfError):
        status = 400
        for cls, code in _STATUS_BY_ERROR.items():
            if isinstance(exc, cls):
                status = code
                break
        return JSONResponse(status_code=status, content={"error": exc.code, "detail": str(exc)})

    @app.get("/v1/status")
    def status():
        return session.status()

    @app.get("/v1/prototypes")
    def prototypes():
        return session.prototypes()

    @app.post("/v1/explain")
    async def explain_endpoint(request: Request):
        return session.explain(await request.json())

    @app.post("/v1/interact")
    async def interact(request: Request):
        body = await request.json()
        if body.get("op") in ("freeze", "unfreeze"):
            if body.get("target") is None:
                raise InvalidCommand(f"{body['op']} requires a target")
            outcome, _ = session.submit((body["op"], int(body["target"])))
            return outcome
        command = InteractionCommand.from_json(body)
        command.validate()
        outcome, _ = session.submit(command)
        return outcome

    @app.post("/v1/train")
    async def start_train(request: Request):
        raw = await request.body()
        overrides = json.loads(raw) if raw else {}
        try:
            return session.start_training(overrides)
        except ConfigInvalid as exc:
            return JSONResponse(status_code=409, content={"error": exc.code, "detail": str(exc)})

    @app.post("/v1/train/pause")
    def pause():
        return session.pause()

    @app.post("/v1/train/resume")
    def resume():
        return session.resume()

    @app.post("/v1/faithfulness")
    async def faithfulness(request: Request):
        return session.faithfulness(await request.json())

    @app.get("/v1/checkpoint")
    def get_checkpoint():
        with session.lock:
            blob = model_mod.to_bytes(session.model)
        return Response(content=blob, media_type="application/octet-stream")

    @app.put("/v1/checkpoint")
    async def put_checkpoint(request: Request):
        blob = await request.body()
        model = model_mod.from_bytes(blob)
        with session.lock:
            if session.phase != IDLE:
                raise ConfigInvalid("cannot load a checkpoint while training")
            if model.dim != session.dataset.dim:
                raise ConfigInvalid(
                    f"checkpoint dim {model.dim} != dataset dim {session.dataset.dim}"
                )
            session.model = model
            session._engine = InteractionEngine(
                session.model, session.dataset, session.cfg, session.provider
            )
        return {"digest": session.digest()}

    @app.get("/v1/metrics/stream")
    def metrics_stream():
        sub = session.subscribe()

        def gen():
            try:
                yield _sse({"type": "hello", **session.status()})
                while True:
                    try:
                        event = sub.events.get(timeout=15.0)
                        yield _sse(event)
                    except queue.Empty:
                        yield ": keepalive\n\n"
            finally:
                session.unsubscribe(sub)

        return StreamingResponse(gen(), media_type="text/event-stream")

    return app


def _sse(event: dict) -> str:
    name = event.get("type", "message")
    return f"event: {name}\ndata: {json.dumps(event)}\n\n"


def serve(session: Session, port: int, host: str = "127.0.0.1"):
    """Run the gateway until interrupted."""
    import uvicorn

    uvicorn.run(create_app(session), host=host, port=port, log_level="warning")
