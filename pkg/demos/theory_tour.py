"""When does asking True/False per candidate beat a single multiple-choice question?

Two hypotheses, a verifier that accepts the true one with probability q1 and
the distractor with probability q2, and an MCQ fallback that is right with
probability p.
"""

import numpy as np

from binverify.theory import (
    DiscreteJoint,
    FanoInput,
    Partition,
    TwoHypParams,
    binary_accuracy,
    fano_bound,
    hardness_ladder,
    mcq_accuracy,
    mcq_threshold,
    partition_mi,
    simulate_two_hyp_protocol,
)

params = TwoHypParams(q1=0.9, q2=0.1, p=0.8)
print(f"binary {binary_accuracy(params):.4f} vs mcq {mcq_accuracy(params):.4f}")
print(f"simulated binary over 200k trials: {simulate_two_hyp_protocol(params, 200_000, seed=1):.4f}")

# Break-even MCQ accuracy: binary verification wins whenever p is below p*.
print("\n q1   p*(q2=0.1)  p*(q2=0.3)")
for q1 in (0.5, 0.6, 0.7, 0.8, 0.9):
    print(f"{q1:.1f}   {mcq_threshold(q1, 0.1):.4f}      {mcq_threshold(q1, 0.3):.4f}")

# Coarser questions are easier. A random joint over 6 evidence values and 5 labels:
rng = np.random.default_rng(4)
joint = DiscreteJoint(rng.dirichlet(np.ones(30)).reshape(6, 5))
r_k, r_m, r_2 = hardness_ladder(joint, m=3, designated=0)
print(f"\nBayes risk  5-way {r_k:.4f} >= 3-option {r_m:.4f} >= one-vs-rest {r_2:.4f}")

# Fano lower bound on the 5-way error from the information the evidence carries.
# columns are P(x|y) for each label, weighted by a uniform prior
uniform = DiscreteJoint(rng.dirichlet(np.ones(6), size=5).T / 5)
info = partition_mi(uniform, Partition.finest(5))
print(f"I(X;Y) = {info:.4f} nats, Fano says error >= {fano_bound(FanoInput(info, 5)):.4f}")
