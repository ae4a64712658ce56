"""
How much does the social term help?
===================================

On synthetic data where friends share tastes, sweep the centrality
weight beta and the self-weight alpha, and compare against ignoring
friends entirely (alpha = 1).
"""

from siottrust.evaluation import ModelSettings, TestSet, build_pattern, score_test
from siottrust.factorization import TrainConfig, sgd_train
from siottrust.synthetic import friend_correlated

data = friend_correlated(seed=0)
test = TestSet(*data.test)


def held_out_rmse(settings: ModelSettings) -> float:
    _, tp = build_pattern(data.train, settings)
    f = sgd_train(data.train, tp, TrainConfig(alpha=settings.alpha, seed=0))
    return score_test(f, tp, settings.alpha, test).rmse


print("beta sweep (degree centrality, alpha = 0.4)")
for beta in (0.0, 0.5, 1.0):
    print(f"  beta={beta:.1f}  rmse={held_out_rmse(ModelSettings(beta=beta, centrality='degree')):.4f}")

print("alpha sweep (Hellinger similarity, beta = 1)")
for alpha in (0.0, 0.4, 0.8, 1.0):
    print(f"  alpha={alpha:.1f}  rmse={held_out_rmse(ModelSettings(alpha=alpha)):.4f}")
