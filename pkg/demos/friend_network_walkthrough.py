"""
From ratings to a friend-aware trust prediction
===============================================

A small rating graph is turned into an implicit trustor friend network,
then into a row-normalised trust pattern, and finally into latent factors
whose blended reconstruction predicts unseen trust values.
"""

import numpy as np

from siottrust.factorization import TrainConfig, predict_blended, rank_trustees, sgd_train
from siottrust.graph import TrustBipartiteGraph
from siottrust.pattern import trust_pattern
from siottrust.social import build_social_network

# Four trustors rate five trustees on the internal (0, 1] scale
# (external rating / 5). Trustors 0 and 1 use the same trustees.
g = TrustBipartiteGraph(4, 5)
for u, v, r in [(0, 0, 0.8), (0, 1, 0.6), (1, 0, 1.0), (1, 1, 0.4),
                (2, 2, 0.2), (2, 3, 0.4), (3, 3, 0.6), (3, 4, 1.0), (2, 0, 0.6)]:
    g.add_experience(u, v, r)
print(g.summary())

# Trustors are compared through the degree distribution of the trustees
# they rated. Pairs closer than the threshold become friends.
net = build_social_network(g, threshold=0.5)
print("distances:\n", np.round(net.distances.values, 3))
for i in range(net.n):
    print(f"friends of trustor {i}: {net.friends[i].tolist()}")

# Friendship strengths: Hellinger similarity, normalised over each row.
tp = trust_pattern(net)
print("gamma:\n", np.round(tp.gamma.toarray(), 3))

# Fit latent factors; each trustor's vector is blended with its friends'.
cfg = TrainConfig(alpha=0.4, latent_dim=2, epochs=400, learning_rate=0.2, seed=0)
factors = sgd_train(g, tp, cfg)
print(f"loss {factors.loss_history[0]:.4f} -> {factors.loss_history[-1]:.4f}")

pred = predict_blended(factors.S, factors.R, tp, cfg.alpha) * 5
print("predicted external ratings:\n", np.round(pred, 2))
print("trustor 3 would try trustees in this order:", rank_trustees(pred, 3).tolist())
