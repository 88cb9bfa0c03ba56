"""On-disk registry of published security services.

Layout::

    <root>/index.json
    <root>/<id>/manifest.json
    <root>/<id>/policy.bin

Each service directory is written to a temporary sibling and renamed into
place, so readers never observe half a service.  ``index.json`` is a cache of
the manifests and can always be rebuilt from them.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
import re
import shutil
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterator

from .agents.model import ActionDecisionModel
from .engine import Role
from .errors import CorruptBlob, DuplicateId, HashMismatch, LineageError, NotFound, ShapeMismatch
from .graph import DynamicAccessGraph

POOL_ENV_VAR = "ISSF_POOL"
NA = "NA"
BLOB_FILE = "policy.bin"
MANIFEST_FILE = "manifest.json"
INDEX_FILE = "index.json"

_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")

# The pool speaks offense/defense; models speak attacker/defender.
ROLE_NAMES = {Role.ATTACKER: "offense", Role.DEFENDER: "defense"}
_ROLE_FROM_NAME = {v: k for k, v in ROLE_NAMES.items()}


def role_from_name(name: str) -> Role:
    name = name.lower()
    if name in _ROLE_FROM_NAME:
        return _ROLE_FROM_NAME[name]
    return Role(name)


def default_pool_path() -> Path:
    return Path(os.environ.get(POOL_ENV_VAR, "pool"))


def _now() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = (_dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc) if epoch
            else _dt.datetime.now(_dt.timezone.utc))
    return when.replace(microsecond=0).isoformat()


@dataclass
class SecurityService:
    """A frozen policy plus its lineage: role, environment, algorithm, adversary, pretrain."""

    id: str
    role: str
    env: dict[str, str]
    algorithm: str
    adversary: str
    pretrain: str
    created_at: str
    learner_config: dict[str, Any]
    blob: dict[str, str]
    decision_model: str = ""
    report: dict[str, Any] = field(default_factory=dict)

    @property
    def agent_role(self) -> Role:
        return role_from_name(self.role)

    @property
    def env_hash(self) -> str:
        return self.env["hash"]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SecurityService":
        try:
            return cls(**d)
        except TypeError as exc:
            raise CorruptBlob(f"manifest has unexpected fields: {exc}") from exc


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


class ServicePool:
    def __init__(self, root: str | os.PathLike | None = None):
        self.root = Path(root) if root is not None else default_pool_path()

    # -- reading ------------------------------------------------------------

    def _dir(self, service_id: str) -> Path:
        return self.root / service_id

    def __contains__(self, service_id: object) -> bool:
        return (isinstance(service_id, str) and bool(_ID_RE.match(service_id))
                and (self._dir(service_id) / MANIFEST_FILE).is_file())

    def ids(self) -> list[str]:
        if not self.root.is_dir():
            return []
        return sorted(p.name for p in self.root.iterdir()
                      if not p.name.startswith(".") and (p / MANIFEST_FILE).is_file())

    def manifest(self, service_id: str) -> SecurityService:
        if service_id not in self:
            raise NotFound(f"no service {service_id!r} in pool {self.root}")
        path = self._dir(service_id) / MANIFEST_FILE
        try:
            doc = json.loads(path.read_text())
        except ValueError as exc:
            raise CorruptBlob(f"{path}: {exc}") from exc
        return SecurityService.from_dict(doc)

    def __iter__(self) -> Iterator[SecurityService]:
        return (self.manifest(i) for i in self.ids())

    def load(self, service_id: str, graph: DynamicAccessGraph | None = None
             ) -> tuple[SecurityService, ActionDecisionModel]:
        """Return the manifest and frozen model, checking every stored hash.

        With ``graph`` given, the service must have been trained on exactly
        that environment (same content hash).
        """
        service = self.manifest(service_id)
        blob_path = self._dir(service_id) / service.blob["file"]
        try:
            blob = blob_path.read_bytes()
        except OSError as exc:
            raise CorruptBlob(f"{service_id}: cannot read policy blob: {exc}") from exc
        digest = hashlib.sha256(blob).hexdigest()
        if digest != service.blob.get("sha256"):
            raise CorruptBlob(f"{service_id}: policy blob checksum mismatch")
        model = ActionDecisionModel.deserialize(blob, role=service.agent_role)
        if model.env_hash != service.env_hash:
            raise CorruptBlob(f"{service_id}: blob fingerprint differs from manifest env hash")
        if graph is not None:
            if graph.env_hash != service.env_hash:
                raise ShapeMismatch(
                    f"service {service_id!r} was trained on environment "
                    f"{service.env['scenario_id']!r} ({service.env_hash[:12]}), not "
                    f"{graph.scenario_id!r} ({graph.env_hash[:12]})")
            model.check_compatible(graph)
        return service, model

    def query(self, role: str | Role | None = None, env: str | None = None,
              algorithm: str | None = None, adversary: str | None = None
              ) -> list[SecurityService]:
        """Manifests matching every given filter, ordered by id.

        ``env`` matches either the scenario id or the content hash.
        """
        if isinstance(role, str):
            role = role_from_name(role)
        out = []
        for entry in self._index_entries():
            if role is not None and entry.agent_role is not role:
                continue
            if env is not None and env not in (entry.env["scenario_id"], entry.env["hash"]):
                continue
            if algorithm is not None and entry.algorithm != algorithm:
                continue
            if adversary is not None and entry.adversary != adversary:
                continue
            out.append(entry)
        return out

    def lineage(self, service_id: str) -> list[SecurityService]:
        """The service followed by its pretrain ancestors, back to a from-scratch one."""
        chain = [self.manifest(service_id)]
        seen = {service_id}
        while chain[-1].pretrain != NA:
            nxt = chain[-1].pretrain
            if nxt in seen:
                raise LineageError(f"pretrain cycle through {nxt!r}")
            seen.add(nxt)
            chain.append(self.manifest(nxt))
        return chain

    def ancestors(self, service_id: str) -> list[str]:
        """Every service this one depends on (pretrain and adversary edges), depth first."""
        out: list[str] = []

        def visit(sid: str) -> None:
            s = self.manifest(sid)
            for dep in (s.pretrain, s.adversary):
                if dep != NA and dep not in out:
                    out.append(dep)
                    visit(dep)

        visit(service_id)
        return out

    # -- index --------------------------------------------------------------

    def _index_entries(self) -> list[SecurityService]:
        path = self.root / INDEX_FILE
        if path.is_file():
            try:
                doc = json.loads(path.read_text())
                entries = [SecurityService.from_dict(d) for d in doc["services"]]
                if sorted(e.id for e in entries) == self.ids():
                    return sorted(entries, key=lambda e: e.id)
            except (ValueError, KeyError, TypeError, CorruptBlob):
                pass
        return self.rebuild_index()

    def rebuild_index(self) -> list[SecurityService]:
        """Regenerate ``index.json`` from the manifests on disk."""
        entries = list(self)
        if self.root.is_dir():
            self._atomic_write(self.root / INDEX_FILE,
                               _dump({"services": [e.to_dict() for e in entries]}))
        return entries

    @staticmethod
    def _atomic_write(path: Path, text: str) -> None:
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)

    # -- writing ------------------------------------------------------------

    def _check_lineage(self, service: SecurityService) -> None:
        role = service.agent_role
        if role is Role.DEFENDER and service.adversary == NA:
            raise LineageError(f"defense service {service.id!r} needs an offense adversary, not NA")
        if service.adversary != NA:
            if service.adversary not in self:
                raise LineageError(f"adversary {service.adversary!r} is not in the pool")
            adv = self.manifest(service.adversary)
            if adv.agent_role is not role.opposite:
                raise LineageError(f"adversary {adv.id!r} has role {adv.role}, "
                                   f"expected {ROLE_NAMES[role.opposite]}")
            if adv.env_hash != service.env_hash:
                raise LineageError(f"adversary {adv.id!r} was trained on another environment")
        if service.pretrain != NA:
            if service.pretrain == service.id:
                raise LineageError(f"{service.id!r} cannot be its own pretrain")
            if service.pretrain not in self:
                raise LineageError(f"pretrain {service.pretrain!r} is not in the pool")
            pre = self.manifest(service.pretrain)
            if pre.agent_role is not role:
                raise LineageError(f"pretrain {pre.id!r} has role {pre.role}, expected {service.role}")

    def publish(self, service: SecurityService, blob: bytes) -> str:
        """Store ``service`` with its policy ``blob``; returns the id."""
        if not _ID_RE.match(service.id) or service.id == NA:
            raise ValueError(f"invalid service id {service.id!r}")
        if service.id in self:
            raise DuplicateId(f"service {service.id!r} already exists in {self.root}")
        header = ActionDecisionModel.read_header(blob)
        if header["graph_fingerprint"] != service.env_hash:
            raise HashMismatch(f"blob fingerprint {header['graph_fingerprint'][:12]} != "
                               f"manifest env hash {service.env_hash[:12]}")
        if role_from_name(header["role"]) is not service.agent_role:
            raise LineageError(f"blob holds a {header['role']} policy but manifest says {service.role}")
        self._check_lineage(service)

        service.blob = {"file": BLOB_FILE, "fingerprint": header["graph_fingerprint"],
                        "sha256": hashlib.sha256(blob).hexdigest()}
        self.root.mkdir(parents=True, exist_ok=True)
        tmp = Path(tempfile.mkdtemp(dir=self.root, prefix=f".tmp-{service.id}-"))
        try:
            (tmp / BLOB_FILE).write_bytes(blob)
            (tmp / MANIFEST_FILE).write_text(_dump(service.to_dict()))
            try:
                os.rename(tmp, self._dir(service.id))
            except OSError as exc:
                raise DuplicateId(f"service {service.id!r} was published concurrently") from exc
        except BaseException:
            shutil.rmtree(tmp, ignore_errors=True)
            raise
        self.rebuild_index()
        return service.id

    def publish_model(self, service_id: str, model: ActionDecisionModel,
                      graph: DynamicAccessGraph, adversary: str = NA, pretrain: str = NA,
                      label: str | None = None, report: dict | None = None,
                      created_at: str | None = None) -> str:
        service = SecurityService(
            id=service_id,
            role=ROLE_NAMES[model.role],
            env={"scenario_id": graph.scenario_id, "hash": graph.env_hash},
            algorithm=label or model.algorithm,
            adversary=adversary,
            pretrain=pretrain,
            created_at=created_at or _now(),
            learner_config=model.config.to_dict(),
            blob={},
            decision_model=model.algorithm,
            report=dict(report or {}),
        )
        return self.publish(service, model.serialize())
