"""HTTP surface: POST /v1/predict and GET /v1/health.

Responses never carry probabilities, logits, or top-k lists; the only
inference output field is the integer top-1 label.
"""

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .models import ScriptExhausted


def create_app(backend) -> FastAPI:
    app = FastAPI(title="oracle-server", docs_url=None, redoc_url=None)

    @app.get("/v1/health")
    def health():
        return {
            "status": "ok",
            "classes": backend.classes,
            "shape": list(backend.shape),
        }

    @app.post("/v1/predict")
    async def predict(request: Request):
        try:
            body = await request.json()
        except Exception:
            return JSONResponse({"error": "body is not valid JSON"}, status_code=400)
        if not isinstance(body, dict) or "shape" not in body or "data" not in body:
            return JSONResponse({"error": "body needs 'shape' and 'data'"}, status_code=400)
        shape = tuple(body["shape"])
        if shape != tuple(backend.shape):
            return JSONResponse(
                {"error": f"expected shape {list(backend.shape)}, got {list(shape)}"},
                status_code=400,
            )
        data = np.asarray(body["data"], dtype=np.float64)
        if data.size != int(np.prod(shape)):
            return JSONResponse({"error": "data length does not match shape"}, status_code=400)
        x = data.reshape(shape)
        try:
            label = backend.predict(x)
        except ScriptExhausted as exc:
            return JSONResponse({"error": str(exc)}, status_code=409)
        except Exception as exc:  # model failure
            return JSONResponse({"error": f"model failure: {exc}"}, status_code=500)
        return {"label": int(label)}

    return app
