"""Viscous Burgers physics-informed network, fixture edition.

Training is replaced by a lookup of typical final errors per representation
and optimizer so the loop can be exercised in well under a second. The cell
layout, metric names and output files match a real training script.
"""
import json
import math
import struct
import zlib

# %% config
MODEL = "mlp"
CONSTRAINT = "strong_form"
OPTIMIZER = "adam"
EPOCHS = 20000
# %% data
NU = 0.01 / math.pi
N_COLLOCATION = 10000
N_BOUNDARY = 256
X = [-1.0 + 2.0 * i / 255 for i in range(256)]
U0 = [-math.sin(math.pi * x) for x in X]
# %% model
BASE_ERROR = {"mlp": 5.0e-2, "mlp_fourier": 2.0e-2, "kan": 7.76e-5}
if MODEL not in BASE_ERROR:
    raise ValueError("representation not available in this template: " + MODEL)
# %% train
OPTIMIZER_FACTOR = {"adam": 1.0, "lbfgs": 0.1, "adam_then_lbfgs": 0.05, "ssbroyden": 0.025}
rel_l2 = BASE_ERROR[MODEL] * OPTIMIZER_FACTOR[OPTIMIZER]
print("trained", MODEL, "with", OPTIMIZER, "for", EPOCHS, "epochs")
# %% evaluate
metrics = {
    "rel_l2": float("%.6g" % rel_l2),
    "max_abs_ic": max(abs(u) for u in U0),
    "n_collocation": N_COLLOCATION,
}
print("rel_l2 = %.3e" % metrics["rel_l2"])
# %% outputs
with open("metrics.json", "w") as fh:
    json.dump(metrics, fh, sort_keys=True)


def png_chunk(kind, data):
    body = kind + data
    return struct.pack(">I", len(data)) + body + struct.pack(">I", zlib.crc32(body) & 0xFFFFFFFF)


width, height = len(X), 64
rows = b""
for r in range(height):
    level = r / (height - 1) * 2.0 - 1.0
    rows += b"\x00" + bytes(255 if abs(u - level) < 0.05 else 0 for u in U0)
with open("summary_all.png", "wb") as fh:
    fh.write(b"\x89PNG\r\n\x1a\n")
    fh.write(png_chunk(b"IHDR", struct.pack(">IIBBBBB", width, height, 8, 0, 0, 0, 0)))
    fh.write(png_chunk(b"IDAT", zlib.compress(rows, 9)))
    fh.write(png_chunk(b"IEND", b""))
print("wrote summary_all.png")
