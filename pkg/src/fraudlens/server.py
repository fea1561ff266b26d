"""HTTP service for the analyst loop: heatmaps, regions, labels, dashboards.

One process serves one dataset. Startup runs the linear preprocessing
(feature extraction, graph build, dashboard context) before accepting
requests; afterwards GET endpoints are read-only snapshots and the two
mutating endpoints (mark region, assign label) serialize through a single
writer lock, so replaying a mark/assign script always reproduces the same
class map.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .dashboard import DashboardContext
from .features import FeatureTable, UnknownFeature, extract_features
from .graph import BipartiteGraph, UnknownCard, build_graph, egonet_view
from .heatmap import (
    CardClass,
    FlagParams,
    Region,
    auto_classes,
    build_heatmap,
    cards_in_region,
    transform,
)
from .ingest import Dataset

MEMBER_PREVIEW_CAP = 200


@dataclass
class MarkedRegion:
    region_id: str
    x_feature: str
    y_feature: str
    region: Region
    members: set[str]


class Session:
    """All mutable analyst state for one loaded dataset."""

    def __init__(
        self,
        dataset: Dataset,
        params: FlagParams | None = None,
        n_bins: int = 64,
    ):
        self.dataset = dataset
        self.params = params or FlagParams()
        self.features: FeatureTable = extract_features(dataset)
        self.graph: BipartiteGraph = build_graph(dataset)
        self.auto: dict[str, CardClass] = auto_classes(self.features, self.params)
        self.context = DashboardContext(
            dataset, self.features, self.graph, self.auto, n_bins
        )
        self.regions: dict[str, MarkedRegion] = {}
        self.region_labels: dict[str, str] = {}
        self.user_labels: dict[str, str] = {}
        self._seq = 0
        self._lock = threading.Lock()

    # -- mutations (single writer) --------------------------------------

    def mark_region(self, x: str, y: str, region: Region) -> MarkedRegion:
        members = cards_in_region(self.features, region, x, y)
        with self._lock:
            self._seq += 1
            rid = f"r{self._seq:04d}"
            marked = MarkedRegion(
                region_id=rid,
                x_feature=x,
                y_feature=y,
                region=region,
                members=members,
            )
            self.regions[rid] = marked
        return marked

    def assign_label(self, region_id: str, label: str) -> dict[str, str]:
        """Stamp every member card; most recent assignment wins overlaps.

        Returns the delta: cards whose stored label actually changed.
        """
        with self._lock:
            marked = self.regions.get(region_id)
            if marked is None:
                raise KeyError(region_id)
            self.region_labels[region_id] = label
            delta = {}
            for card in marked.members:
                if self.user_labels.get(card) != label:
                    self.user_labels[card] = label
                    delta[card] = label
        return delta

    # -- read snapshots ---------------------------------------------------

    def summary(self) -> dict:
        return {
            "status": "ok",
            "n_txns": len(self.dataset),
            "n_cards": len(self.features),
            "n_merchants": self.graph.n_merchants,
        }

    def classes_doc(self) -> dict:
        """Auto flags and user labels, two namespaces, sorted keys."""
        auto = {
            card: cls.value
            for card, cls in sorted(self.auto.items())
            if cls != CardClass.Unlabeled
        }
        user = dict(sorted(self.user_labels.items()))
        return {"auto": auto, "user": user}


class RegionBody(BaseModel):
    x: str
    y: str
    cx: float
    cy: float
    rx: float
    ry: float
    angle: float = 0.0


class LabelBody(BaseModel):
    label: str


def create_app(session: Session, frontend_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="fraudlens")

    @app.get("/health")
    def health():
        return JSONResponse(session.summary())

    @app.get("/features")
    def features_meta():
        from .features import FEATURE_COLUMNS

        return JSONResponse(
            {"columns": list(FEATURE_COLUMNS), "n_cards": len(session.features)}
        )

    @app.get("/heatmaps")
    def heatmaps(x: str, y: str, bins: int = 64):
        try:
            grid = build_heatmap(session.features, x, y, bins)
        except UnknownFeature as exc:
            raise HTTPException(status_code=404, detail=f"unknown feature: {exc}")
        return JSONResponse(_grid_doc(grid))

    @app.post("/regions")
    def mark(body: RegionBody):
        try:
            session.features.column(body.x)
            session.features.column(body.y)
        except UnknownFeature as exc:
            raise HTTPException(status_code=404, detail=f"unknown feature: {exc}")
        region = Region(
            center_x=body.cx,
            center_y=body.cy,
            semi_x=body.rx,
            semi_y=body.ry,
            angle_rad=body.angle,
        )
        marked = session.mark_region(body.x, body.y, region)
        preview = sorted(marked.members)[:MEMBER_PREVIEW_CAP]
        ux = transform(
            [session.features.column(body.x)[session.features.index_of(c)] for c in preview]
        )
        uy = transform(
            [session.features.column(body.y)[session.features.index_of(c)] for c in preview]
        )
        return JSONResponse(
            {
                "region_id": marked.region_id,
                "member_count": len(marked.members),
                "members_preview": [
                    {"card_id": c, "x": float(x_), "y": float(y_)}
                    for c, x_, y_ in zip(preview, ux, uy)
                ],
            }
        )

    @app.post("/regions/{region_id}/label")
    def label(region_id: str, body: LabelBody):
        try:
            delta = session.assign_label(region_id, body.label)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown region {region_id}")
        return JSONResponse(
            {
                "region_id": region_id,
                "label": body.label,
                "delta": dict(sorted(delta.items())),
            }
        )

    @app.get("/classes")
    def classes():
        return JSONResponse(session.classes_doc())

    @app.get("/cards/{card_id}/dashboard")
    def card_dashboard(card_id: str):
        try:
            payload = session.context.assemble(card_id)
        except UnknownCard:
            raise HTTPException(status_code=404, detail=f"unknown card {card_id}")
        return JSONResponse(payload.to_doc())

    @app.get("/cards/{card_id}/egonet")
    def card_egonet(card_id: str):
        try:
            view = egonet_view(session.graph, card_id)
        except UnknownCard:
            raise HTTPException(status_code=404, detail=f"unknown card {card_id}")
        return JSONResponse(view.to_doc())

    if frontend_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="ui")

    return app


def _grid_doc(grid) -> dict:
    import json

    return json.loads(grid.to_json())


def serve(
    input_path: str,
    host: str = "127.0.0.1",
    port: int = 8000,
    params: FlagParams | None = None,
    frontend_dir: str | None = None,
) -> None:
    """Load a dataset, preprocess, and serve until interrupted."""
    import uvicorn

    from .ingest import parse_transactions

    try:
        dataset = parse_transactions(input_path)
    except OSError as exc:
        raise SystemExit(f"cannot read dataset at {input_path}: {exc}")
    session = Session(dataset, params=params)
    app = create_app(session, frontend_dir=frontend_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
