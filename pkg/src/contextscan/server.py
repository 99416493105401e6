"""HTTP backend for the verification gallery.

Serves rank-ordered candidate regions and their thumbnails, persists
human verdicts to the append-only label log, and reports recall curves
(human-verdict based, plus the automatic ground-truth curve when the run
has synthetic ground truth).
"""

from __future__ import annotations

import os

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import FileResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .pipeline import recall_curve
from .runstore import VERDICTS, LabelStore, RunFormatError, load_run


class LabelRequest(BaseModel):
    rank: int
    verdict: str


def create_app(runs_root, frontend_dir=None):
    app = FastAPI(title="contextscan gallery")

    def run_dir(run_id):
        path = os.path.join(runs_root, run_id)
        if os.path.sep in run_id or not os.path.isdir(path):
            raise HTTPException(status_code=404, detail=f"unknown run {run_id!r}")
        return path

    def manifest_for(run_id):
        try:
            return load_run(run_dir(run_id))
        except FileNotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except RunFormatError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc

    def store_for(run_id):
        return LabelStore(os.path.join(run_dir(run_id), "labels.log"),
                          run_id=run_id)

    @app.get("/runs")
    def runs():
        found = []
        if os.path.isdir(runs_root):
            for name in sorted(os.listdir(runs_root)):
                if os.path.exists(os.path.join(runs_root, name, "run.json")):
                    found.append(name)
        return {"runs": found}

    @app.get("/regions")
    def regions(run: str = Query(...)):
        manifest = manifest_for(run)
        verdicts = store_for(run).replay()
        out = []
        for rec in manifest["regions"]:
            out.append({"rank": rec["rank"], "score": rec["score"],
                        "box": rec["box"], "image_id": rec["image_id"],
                        "verdict": verdicts.get(rec["rank"], "unlabeled")})
        return {"run": run, "mode": manifest["mode"], "regions": out}

    @app.get("/crops/{rank}.png")
    def crop(rank: int, run: str = Query(...)):
        path = os.path.join(run_dir(run), "crops", f"rank_{rank:04d}.png")
        if not os.path.exists(path):
            raise HTTPException(status_code=404, detail=f"no crop for rank {rank}")
        return FileResponse(path, media_type="image/png")

    @app.post("/labels")
    def label(req: LabelRequest, run: str = Query(...)):
        manifest = manifest_for(run)
        if req.verdict not in VERDICTS:
            raise HTTPException(status_code=400,
                                detail=f"verdict must be one of {VERDICTS}")
        ranks = {rec["rank"] for rec in manifest["regions"]}
        if req.rank not in ranks:
            raise HTTPException(status_code=404, detail=f"no region rank {req.rank}")
        store_for(run).append(req.rank, req.verdict)
        return {"run": run, "rank": req.rank, "verdict": req.verdict}

    @app.get("/metrics")
    def metrics(run: str = Query(...)):
        manifest = manifest_for(run)
        verdicts = store_for(run).replay()
        n = len(manifest["regions"])
        total = manifest["gt_total"]
        human_flags = [verdicts.get(rec["rank"]) == "true"
                       for rec in sorted(manifest["regions"],
                                         key=lambda r: r["rank"])]
        ks = list(range(1, n + 1))
        human = recall_curve(human_flags, total, ks) if total else None
        auto = recall_curve(manifest["auto_flags"], total, ks) if total else None
        return {
            "run": run,
            "gt_total": total,
            "k": ks,
            "human": [r for _, r in human] if human else None,
            "auto": [r for _, r in auto] if auto else None,
        }

    if frontend_dir and os.path.isdir(frontend_dir):
        app.mount("/", StaticFiles(directory=frontend_dir, html=True),
                  name="frontend")
    return app
