"""Look inside the combiners on a pool of untrained encoders.

No training happens here.  The script builds four randomly initialized
encoders plus a context autoencoder, shows WSA, DPA and ENS model weights on a
few MiniPong frames, then adds a model to the pool and takes one away.  The
WSA combiner keeps the same parameter count throughout.
"""
import numpy as np

from wsa.env import make_env
from wsa.fusion import ModelPool, build_combiner
from wsa.pretrain import CANONICAL_ORDER, Encoder

rng = np.random.default_rng(0)
encoders = {k: Encoder(k, rng=np.random.default_rng([0, i])) for i, k in enumerate(CANONICAL_ORDER)}
context = Encoder("autoencoder", rng=np.random.default_rng([0, 99]))
for e in list(encoders.values()) + [context]:
    e.freeze()

# a handful of frames from random play
env = make_env("minipong")
obs = [env.reset(0)]
for _ in range(5):
    obs.append(env.step(int(rng.integers(env.n_actions))).observation)
obs = np.stack(obs)

np.set_printoptions(precision=3, suppress=True)
kinds = list(CANONICAL_ORDER[:3])
for kind in ("wsa", "dpa", "ens"):
    pool = ModelPool([encoders[k] for k in kinds], context=context)
    comb = build_combiner(pool, kind=kind, d=16, hidden=16)
    out = comb(obs)
    print(f"{kind}: representation {out.R.data.shape}, trainable {sum(p.data.size for p in comb.combiner_parameters())}")
    print("  weights per frame (rows sum to 1):")
    print(out.weights())

pool = ModelPool([encoders[k] for k in kinds], context=context)
wsa = build_combiner(pool, kind="wsa", d=16, hidden=16)
shared = sum(p.data.size for p in wsa.weight_net.parameters())
print(f"\nwsa weight network has {shared} parameters with {pool.n_active} models")

wsa.add_model(encoders[CANONICAL_ORDER[3]], seed=3)
print(f"after adding {CANONICAL_ORDER[3]}: {pool.n_active} models, "
      f"weight network still {sum(p.data.size for p in wsa.weight_net.parameters())} parameters")
print(wsa(obs).weights()[:2])

wsa.remove_model(0)
print(f"after removing {pool.kinds[0]}: active {[pool.kinds[i] for i in pool.active_indices]}")
print(wsa(obs).weights()[:2])
