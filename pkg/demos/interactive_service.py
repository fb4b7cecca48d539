"""Drive the probe service over HTTP, the way the browser frontend does.

Starts the service in-process on a spare port, creates a session from a
simulated acquisition, waits for the reconstruction, then submits a probe
whose mask is RLE-encoded exactly as the wire format requires. Polls the
probe until the verdict lands and downloads the credible and difference
images as PNGs.

A session directory accumulates under demos/out/service so the run can be
inspected afterwards (and survives a restart of the service).
"""

import argparse
import json
import threading
import time
from pathlib import Path

import httpx
import uvicorn

from buqo.grid import rle_encode
from buqo.phantom import pe_phantom, save_phantom, structure_mask
from buqo.service import create_app


def wait_until(client, url, status, timeout_s=600.0):
    t0 = time.time()
    while time.time() - t0 < timeout_s:
        doc = client.get(url).json()
        if doc["status"] == status:
            return doc
        if doc["status"] == "failed":
            raise RuntimeError(f"{url} failed: {doc.get('error')}")
        time.sleep(1.0)  # the frontend polls at the same cadence
    raise TimeoutError(url)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--side", type=int, default=64)
    ap.add_argument("--port", type=int, default=8321)
    ap.add_argument("--out", default="demos/out/service")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    app = create_app(out / "data")
    server = uvicorn.Server(uvicorn.Config(
        app, host="127.0.0.1", port=args.port, log_level="warning"))
    threading.Thread(target=server.run, daemon=True).start()
    while not server.started:
        time.sleep(0.05)
    base = f"http://127.0.0.1:{args.port}"
    print(f"service up at {base}")

    ph = pe_phantom(args.side)
    phantom_doc = save_phantom(out / "phantom.json", ph)
    client = httpx.Client(base_url=base, timeout=30.0)

    r = client.post("/sessions", json={"simulate": {
        "phantom": json.loads(phantom_doc.read_text()),
        "angles": 90,
        "detectors": 160,
        "sigma_rel": 0.02,
        "seed": 0,
        "transform": "haar3",
    }})
    r.raise_for_status()
    sid = r.json()["id"]
    print(f"session {sid} queued, polling for the reconstruction")
    session = wait_until(client, f"/sessions/{sid}", "ready")
    print(f"  ready: residual {session['map']['residual']:.3f} "
          f"within epsilon {session['epsilon']:.3f}")

    mask = structure_mask(ph)
    r = client.post(f"/sessions/{sid}/probes", json={
        "mask": {"height": mask.height, "width": mask.width,
                 "rle": rle_encode(mask)},
        "alpha": 0.01,
        "delta": 1e-3,
    })
    r.raise_for_status()
    pid = r.json()["id"]
    print(f"probe {pid} accepted, waiting for the verdict")
    probe = wait_until(client, f"/probes/{pid}", "done")

    rep = probe["report"]
    print(f"  rho = {rep['rho']:.4f}, decision {rep['decision']!r}, "
          f"evaluation ratio {rep['evaluation_ratio']:.3f}")
    for kind in ("xmap", "xhatc", "diff"):
        png = client.get(f"/probes/{pid}/images/{kind}",
                         params={"format": "png"})
        png.raise_for_status()
        (out / f"{kind}.png").write_bytes(png.content)
    print(f"saved xmap.png, xhatc.png, diff.png under {out}")

    server.should_exit = True


if __name__ == "__main__":
    main()
