"""
A newcomer choosing services despite ballot stuffing
====================================================

Trustee groups have objective trust values from 1 to 5. Some trustors
inflate a weak objective-2 group. A newcomer with no history picks a
trustee twenty times, once guided by the trust model and once uniformly
at random, and we count how often each group is used.
"""

from siottrust.simulation import UseCaseConfig, run_usecase

res = run_usecase(UseCaseConfig(seed=3))
values = res.group_values
print("group objective " + " ".join(f"{v:4.1f}" for v in values))
print("trust model     " + " ".join(f"{c:4d}" for c in res.trust_histogram()))
print("random choice   " + " ".join(f"{c:4d}" for c in res.random_histogram()))

late = res.picked_values(res.trust_picks)[-10:]
print(f"last ten trust-guided picks from groups with objective >= 4: {sum(v >= 4 for v in late)}/10")
