"""
Reverse-mode gradients and finite-difference checks
===================================================

Builds a tiny graph by hand, runs backward, then checks the layers and a
full generator objective against central differences in float64.
"""

import numpy as np

from vgan import autodiff as ad
from vgan.losses import objective_g
from vgan.networks import GENERATORS, NetConfig, compressor_forward, group, init_params

rng = np.random.default_rng(0)

# A leaf tensor records gradients; everything built from it joins the graph.
x = ad.Tensor(rng.normal(size=(4, 4, 5)), requires_grad=True)
w = ad.Tensor(rng.normal(size=(5, 3)), requires_grad=True)
b = ad.Tensor(np.zeros(3), requires_grad=True)
loss = ad.tsum(ad.tanh(ad.conv1x1(x, w, b)))
ad.backward(loss, {"x": x, "w": w, "b": b})
print("loss", loss.item(), " |dL/dw|", np.linalg.norm(w.grad))

# The same function checked numerically.
print(ad.grad_check(lambda: ad.tsum(ad.tanh(ad.conv1x1(x, w, b))), {"x": x, "w": w, "b": b}))

# A micro network: 5 bands, width 3, two residual blocks and a two-layer
# discriminator so that a 4 x 4 patch still yields a logit.
cfg = NetConfig(bands=5, gen_width=3, disc_widths=(3, 2), res_blocks=2)
params = init_params(cfg, seed=1, dtype=np.float64)
for p in params.values():
    p.data += rng.normal(0, 0.3, size=p.shape)
spectral = rng.normal(size=(4, 4, 5))
rgb = rng.uniform(-1, 1, size=(4, 4, 3))

# The cycle target Cpr(x) is detached during training, so finite differences
# must hold it fixed as well.
target = compressor_forward(params, spectral, cfg).data.copy()
report = ad.grad_check(lambda: objective_g(spectral, rgb, params, cfg, 50.0, cycle_target=target)[0],
                       group(params, GENERATORS), tol=1e-3)
print(report)
