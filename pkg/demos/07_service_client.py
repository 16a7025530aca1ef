"""Drive the HTTP service end to end: upload, edit, recover, compare.

Runs the app in-process with a test client; point httpx at a real
`fashiontex serve` instance for the same flow over the network.
"""

import base64
import dataclasses
from pathlib import Path

import torch
from fastapi.testclient import TestClient

from fashiontex.backbones import BackbonesConfig, load_backbones
from fashiontex.config import Config, RecoveryConfig
from fashiontex.imaging import decode_png_base64, png_bytes, save_image_file
from fashiontex.latent import LatentCode
from fashiontex.service import create_app

out = Path(__file__).parent / "out" / "service"
out.mkdir(parents=True, exist_ok=True)

cfg = dataclasses.replace(Config(), recovery=RecoveryConfig(steps=50))
app = create_app(cfg)

with TestClient(app) as client:
    print("healthz:", client.get("/healthz").json())
    vocab = client.get("/vocabulary").json()
    print("vocabulary pairs:", len(vocab["pairs"]), "first:", vocab["pairs"][0])

    bb = load_backbones(BackbonesConfig())
    g = bb.generator
    rng = torch.Generator().manual_seed(3)
    w = LatentCode(torch.randn(g.num_layers, g.dim, generator=rng) * 0.3, g.bounds)
    portrait = png_bytes(g.generate(w))

    r = client.post("/sessions", files={"file": ("portrait.png", portrait, "image/png")})
    session = r.json()["session_id"]
    print("session:", session)

    patch = base64.b64encode(png_bytes(torch.rand(16, 16, 3, generator=rng))).decode()
    r = client.post(f"/sessions/{session}/edits",
                    json={"text": "sleeveless top, short skirt",
                          "patch_upper": patch, "patch_lower": patch})
    k = r.json()["edit_index"]
    save_image_file(decode_png_base64(r.json()["image"]), out / "edited.png")
    print("edit index:", k)

    r = client.post(f"/sessions/{session}/edits/{k}/recover")
    save_image_file(decode_png_base64(r.json()["image"]), out / "recovered.png")
    print("recovered; summary:", client.get(f"/sessions/{session}").json()["history"])

print(f"outputs in {out}")
